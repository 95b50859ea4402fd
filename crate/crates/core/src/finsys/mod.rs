//! Finite probability spaces, measure-preserving permutation actions and
//! factor maps.
//!
//! Weights are exact rationals, so every measure identity (weight sums,
//! measure preservation of generators and factor maps) is checked exactly.
//! The acting group is the subgroup of the symmetric group generated by the
//! generator permutations; it acts on the left, `(gh)·x = g·(h·x)`.

pub mod action;
pub mod factor;
pub mod schema;
pub mod space;

pub use action::{enumerate_group, enumerate_perms, FinSystem, Generator, Group, GroupElement, Permutation, DEFAULT_GROUP_CAP};
pub use factor::{factor_from_functions, quotient_by_partition, same_system, CheckResult, FactorMap, FactorReport};
pub use schema::{load_factor, load_factor_file, load_system, load_system_file, system_to_json, FactorDoc, SystemDoc};
pub use space::{format_rational, parse_rational, FinProbSpace};
