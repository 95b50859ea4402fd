//! JSON documents for systems and factor maps.
//!
//! System: `{"atoms": [{"id": .., "weight": "p/q"}], "generators": [{"label": .., "perm": {id: id}}]}`.
//! Factor: `{"source": path, "target": path, "map": {id: id}, "gen_map": {label: label}}`,
//! with paths resolved relative to the factor file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FzError, Result};
use crate::finsys::action::{FinSystem, Generator, Permutation};
use crate::finsys::factor::FactorMap;
use crate::finsys::space::{format_rational, parse_rational, FinProbSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDoc {
    pub id: String,
    pub weight: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDoc {
    pub label: String,
    pub perm: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub atoms: Vec<AtomDoc>,
    #[serde(default)]
    pub generators: Vec<GeneratorDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDoc {
    pub source: String,
    pub target: String,
    pub map: BTreeMap<String, String>,
    #[serde(default)]
    pub gen_map: BTreeMap<String, String>,
}

impl SystemDoc {
    pub fn from_system(sys: &FinSystem) -> Self {
        let space = sys.space();
        let atoms = (0..space.len())
            .map(|i| AtomDoc { id: space.atom_id(i).to_string(), weight: format_rational(space.weight(i)) })
            .collect();
        let generators = sys
            .generators()
            .iter()
            .map(|g| GeneratorDoc {
                label: g.label.clone(),
                perm: (0..space.len())
                    .map(|i| (space.atom_id(i).to_string(), space.atom_id(g.perm.apply(i)).to_string()))
                    .collect(),
            })
            .collect();
        Self { atoms, generators }
    }

    pub fn into_system(self) -> Result<FinSystem> {
        let atoms = self
            .atoms
            .into_iter()
            .map(|a| Ok((a.id, parse_rational(&a.weight)?)))
            .collect::<Result<Vec<_>>>()?;
        let space = FinProbSpace::new(atoms)?;
        let mut generators = Vec::with_capacity(self.generators.len());
        for g in self.generators {
            let mut images = Vec::with_capacity(space.len());
            for id in space.atoms() {
                let to = g
                    .perm
                    .get(id)
                    .ok_or_else(|| FzError::Schema(format!("generator {:?} does not move atom {id:?}", g.label)))?;
                images.push(
                    space
                        .index_of(to)
                        .ok_or_else(|| FzError::Schema(format!("generator {:?} maps to unknown atom {to:?}", g.label)))?,
                );
            }
            if g.perm.len() != space.len() {
                return Err(FzError::Schema(format!("generator {:?} mentions unknown atoms", g.label)));
            }
            let perm = Permutation::from_images(images)
                .map_err(|_| FzError::Validation(format!("generator {:?} is not a bijection", g.label)))?;
            generators.push(Generator { label: g.label, perm });
        }
        FinSystem::new(space, generators)
    }
}

/// Parses and validates a system document.
pub fn load_system(document: &str) -> Result<FinSystem> {
    let doc: SystemDoc = serde_json::from_str(document).map_err(|e| FzError::Schema(e.to_string()))?;
    doc.into_system()
}

pub fn load_system_file(path: impl AsRef<Path>) -> Result<FinSystem> {
    load_system(&std::fs::read_to_string(path)?)
}

pub fn system_to_json(sys: &FinSystem) -> String {
    serde_json::to_string_pretty(&SystemDoc::from_system(sys)).expect("serializable")
}

/// Loads a factor document; `source`/`target` paths are resolved against
/// `base_dir`. Returns the map unvalidated so callers can report failures.
pub fn load_factor(document: &str, base_dir: &Path, group_cap: usize) -> Result<FactorMap> {
    let doc: FactorDoc = serde_json::from_str(document).map_err(|e| FzError::Schema(e.to_string()))?;
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };
    let source = Arc::new(load_system_file(resolve(&doc.source))?.with_group_cap(group_cap));
    let target = if doc.source == doc.target {
        source.clone()
    } else {
        Arc::new(load_system_file(resolve(&doc.target))?.with_group_cap(group_cap))
    };
    FactorMap::from_ids(source, target, &doc.map, &doc.gen_map)
}

pub fn load_factor_file(path: impl AsRef<Path>, group_cap: usize) -> Result<FactorMap> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_factor(&std::fs::read_to_string(path)?, base, group_cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CYCLE4: &str = r#"{
        "atoms": [{"id": "x1", "weight": "1/4"}, {"id": "x2", "weight": "1/4"},
                  {"id": "x3", "weight": "1/4"}, {"id": "x4", "weight": "1/4"}],
        "generators": [{"label": "T", "perm": {"x1": "x2", "x2": "x3", "x3": "x4", "x4": "x1"}}]
    }"#;

    #[test]
    fn four_cycle_loads_with_group_of_order_four() {
        let sys = load_system(CYCLE4).unwrap();
        assert_eq!(sys.len(), 4);
        assert_eq!(sys.group().unwrap().len(), 4);
    }

    #[test]
    fn non_measure_preserving_swap_is_rejected() {
        let doc = r#"{"atoms": [{"id": "a", "weight": "1/2"}, {"id": "b", "weight": "1/3"}, {"id": "c", "weight": "1/6"}],
                      "generators": [{"label": "s", "perm": {"a": "b", "b": "a", "c": "c"}}]}"#;
        let err = load_system(doc).unwrap_err();
        assert!(matches!(err, FzError::Validation(_)));
        assert!(err.to_string().contains("not measure-preserving"), "{err}");
    }

    #[test]
    fn identity_generator_gives_trivial_group() {
        let doc = r#"{"atoms": [{"id": "a", "weight": "1/2"}, {"id": "b", "weight": "1/4"}, {"id": "c", "weight": "1/4"}],
                      "generators": [{"label": "e", "perm": {"a": "a", "b": "b", "c": "c"}}]}"#;
        assert_eq!(load_system(doc).unwrap().group().unwrap().len(), 1);
    }

    #[test]
    fn schema_errors_are_distinguished() {
        assert!(matches!(load_system("{\"atoms\": 3}"), Err(FzError::Schema(_))));
        let dup = r#"{"atoms": [{"id": "a", "weight": "1/2"}, {"id": "a", "weight": "1/2"}]}"#;
        assert!(matches!(load_system(dup), Err(FzError::Validation(_))));
        let partial = r#"{"atoms": [{"id": "a", "weight": "1/2"}, {"id": "b", "weight": "1/2"}],
                          "generators": [{"label": "s", "perm": {"a": "b"}}]}"#;
        assert!(matches!(load_system(partial), Err(FzError::Schema(_))));
    }

    #[test]
    fn documents_round_trip() {
        let sys = load_system(CYCLE4).unwrap();
        let again = load_system(&system_to_json(&sys)).unwrap();
        assert_eq!(sys, again);
    }
}
