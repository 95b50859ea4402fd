//! The bundled fixture directory.
//!
//! Files are picked up by suffix: `*.system.json`, `*.factor.json` and
//! `*.cocycle.json`. The directory defaults to the one shipped with the crate
//! and can be redirected with `FZ_CORPUS`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{FzError, Result};
use crate::finsys::{load_factor_file, load_system_file, FactorMap, FinSystem};
use crate::skew::{load_cocycle_file, CocycleSpec};

pub const CORPUS_ENV: &str = "FZ_CORPUS";

pub fn corpus_dir() -> PathBuf {
    match std::env::var_os(CORPUS_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus"),
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub systems: Vec<(String, Arc<FinSystem>)>,
    pub factors: Vec<(String, FactorMap)>,
    pub cocycles: Vec<(String, CocycleSpec)>,
}

impl Corpus {
    pub fn system(&self, name: &str) -> Option<&Arc<FinSystem>> {
        self.systems.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn factor(&self, name: &str) -> Option<&FactorMap> {
        self.factors.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn cocycle(&self, name: &str) -> Option<&CocycleSpec> {
        self.cocycles.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }
}

/// Loads every fixture in `dir`, sorted by file name. Factor maps are
/// validated; any unreadable or invalid fixture is an error.
pub fn load_corpus(dir: impl AsRef<Path>, group_cap: usize) -> Result<Corpus> {
    let dir = dir.as_ref().to_path_buf();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    let mut corpus = Corpus { dir: dir.clone(), systems: Vec::new(), factors: Vec::new(), cocycles: Vec::new() };
    for path in entries {
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else { continue };
        if let Some(name) = file.strip_suffix(".system.json") {
            let sys = load_system_file(&path).map_err(|e| in_file(file, e))?.with_group_cap(group_cap);
            corpus.systems.push((name.to_string(), Arc::new(sys)));
        } else if let Some(name) = file.strip_suffix(".factor.json") {
            let pi = load_factor_file(&path, group_cap).map_err(|e| in_file(file, e))?;
            if let Some(msg) = pi.validate().failure() {
                return Err(FzError::Validation(format!("{file}: {msg}")));
            }
            corpus.factors.push((name.to_string(), pi));
        } else if let Some(name) = file.strip_suffix(".cocycle.json") {
            let spec = load_cocycle_file(&path, group_cap).map_err(|e| in_file(file, e))?;
            corpus.cocycles.push((name.to_string(), spec));
        }
    }
    Ok(corpus)
}

fn in_file(file: &str, e: FzError) -> FzError {
    match e {
        FzError::Schema(m) => FzError::Schema(format!("{file}: {m}")),
        FzError::Validation(m) => FzError::Validation(format!("{file}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsys::DEFAULT_GROUP_CAP;

    #[test]
    fn bundled_corpus_loads() {
        let c = load_corpus(Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus"), DEFAULT_GROUP_CAP).unwrap();
        assert_eq!(c.system("q8").unwrap().group().unwrap().len(), 8);
        assert_eq!(c.factor("cycle4_over_cycle2").unwrap().max_fiber_len(), 2);
        assert!(c.cocycle("z2_ergodic").is_some());
    }
}
