#ifndef FZ_H
#define FZ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FzStatus {
  FZ_STATUS_OK = 0,
  FZ_STATUS_NULL_ARGUMENT = 1,
  FZ_STATUS_INVALID_UTF8 = 2,
  FZ_STATUS_IO = 3,
  FZ_STATUS_SCHEMA = 4,
  FZ_STATUS_VALIDATION = 5,
  FZ_STATUS_BUDGET = 6,
  FZ_STATUS_PRECONDITION = 7,
  // Two routes that must agree did not.
  FZ_STATUS_EQUIVALENCE = 8,
  FZ_STATUS_INTERNAL = 9,
} FzStatus;

// A cocycle together with the subgroup defining its fiber.
typedef struct FzCocycle FzCocycle;

// A factor map `X → Y`.
typedef struct FzFactor FzFactor;

// A measure-preserving system.
typedef struct FzSystem FzSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string.
const char *fz_version(void);

// Message of the last failing call on this thread, or null. The pointer is
// valid until the next call on the same thread.
const char *fz_last_error(void);

// # Safety
// `s` must be null or a string returned by this library.
void fz_string_free(char *s);

// Loads a system document from a file. `group_cap` 0 selects the default.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FzStatus fz_system_load(const char *path, size_t group_cap, struct FzSystem **out);

// Parses a system document held in memory.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum FzStatus fz_system_from_json(const char *json, size_t group_cap, struct FzSystem **out);

// # Safety
// `sys` must be null or a handle from this library, freed at most once.
void fz_system_free(struct FzSystem *sys);

// Number of atoms, or 0 for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t fz_system_atom_count(const struct FzSystem *sys);

// # Safety
// `sys` must be a live handle; `out` must be writable.
enum FzStatus fz_system_group_order(const struct FzSystem *sys, size_t *out);

// Loads a factor document and validates the map.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FzStatus fz_factor_load(const char *path, size_t group_cap, struct FzFactor **out);

// The factor onto the one-point system.
//
// # Safety
// `sys` must be a live handle; `out` must be writable.
enum FzStatus fz_factor_to_trivial(const struct FzSystem *sys, struct FzFactor **out);

// The identity factor of a system.
//
// # Safety
// `sys` must be a live handle; `out` must be writable.
enum FzStatus fz_factor_identity(const struct FzSystem *sys, struct FzFactor **out);

// # Safety
// `pi` must be null or a handle from this library, freed at most once.
void fz_factor_free(struct FzFactor *pi);

// All six compactness criteria as JSON. Returns `Equivalence` (with the
// report still written) when they disagree.
//
// # Safety
// `pi` must be a live handle; `out_json` must be writable.
enum FzStatus fz_classify(const struct FzFactor *pi, char **out_json);

// The almost periodic / weakly mixing split as JSON.
//
// # Safety
// `pi` must be a live handle; `out_json` must be writable.
enum FzStatus fz_dichotomy(const struct FzFactor *pi, char **out_json);

// Relative weak mixing along all three routes, as JSON.
//
// # Safety
// `pi` must be a live handle; `out_json` must be writable.
enum FzStatus fz_wm(const struct FzFactor *pi, char **out_json);

// The tower of compact extensions. `max_rank` 0 means no cap.
//
// # Safety
// `sys` must be a live handle; `out_json` must be writable.
enum FzStatus fz_tower(const struct FzSystem *sys, size_t max_rank, char **out_json);

// Unitary cocycles of the irreducible invariant modules, as JSON.
//
// # Safety
// `pi` must be a live handle; `out_json` must be writable.
enum FzStatus fz_extract(const struct FzFactor *pi, char **out_json);

// Loads a cocycle document.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FzStatus fz_cocycle_load(const char *path, size_t group_cap, struct FzCocycle **out);

// # Safety
// `c` must be null or a handle from this library, freed at most once.
void fz_cocycle_free(struct FzCocycle *c);

// The Mackey range: subgroup labels, order and transfer map.
//
// # Safety
// `c` must be a live handle; `out_json` must be writable.
enum FzStatus fz_mackey(const struct FzCocycle *c, uint64_t budget, char **out_json);

// Builds the skew product and reports its size, ergodicity and compactness.
//
// # Safety
// `c` must be a live handle; `out_json` must be writable.
enum FzStatus fz_skew(const struct FzCocycle *c, char **out_json);

// Runs the invariant suite on a fixture directory (null selects the
// default). Returns `Validation` when a check fails and `Equivalence` when
// routes disagree; the report is written either way.
//
// # Safety
// `corpus` must be null or a NUL-terminated string; `out_json` must be writable.
enum FzStatus fz_selftest(const char *corpus, double tol, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FZ_H */
