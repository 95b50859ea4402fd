use std::sync::Arc;

use serde::Serialize;

use crate::error::{FzError, Result};
use crate::finsys::{FactorMap, FinSystem};

use super::ap::ap_factor;
use super::compact::classify_compact;
use super::wm::{rel_wm_extension, WmExtensionReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Initial,
    CompactStep,
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerLevel {
    pub kind: StepKind,
    pub atoms: usize,
    pub atom_ids: Vec<String>,
    /// Factor map `X → Y_α`.
    #[serde(skip)]
    pub from_top: FactorMap,
    /// `Y_α → Y_{α−1}`, absent for the initial level.
    #[serde(skip)]
    pub step: Option<FactorMap>,
    /// Smallest and largest fiber size of the step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fiber_range: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relatively_compact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nontrivial: Option<bool>,
    pub rank_cap_relaxed: bool,
}

impl TowerLevel {
    pub fn system(&self) -> &Arc<FinSystem> {
        self.from_top.target()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerReport {
    pub levels: Vec<TowerLevel>,
    /// Number of compact steps.
    pub length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rank: Option<usize>,
    /// `X → Y_top` is relatively weakly mixing.
    pub top: WmExtensionReport,
}

/// Builds `Y_0 = trivial ⊂ Y_1 ⊂ … ⊂ Y_top` by repeatedly passing to the
/// almost periodic factor until `X → Y_top` is relatively weakly mixing.
pub fn furstenberg_tower(sys: &Arc<FinSystem>, max_rank: Option<usize>) -> Result<TowerReport> {
    if max_rank == Some(0) {
        return Err(FzError::Precondition("max rank must be positive".into()));
    }
    let base = FactorMap::to_trivial(sys.clone());
    let mut levels = vec![TowerLevel {
        kind: StepKind::Initial,
        atoms: base.target().len(),
        atom_ids: base.target().space().atoms().to_vec(),
        from_top: base.clone(),
        step: None,
        fiber_range: None,
        relatively_compact: None,
        nontrivial: None,
        rank_cap_relaxed: false,
    }];
    let mut current = base;
    let top = loop {
        let wm = rel_wm_extension(&current)?;
        if wm.is_wm {
            break wm;
        }
        let ap = ap_factor(&current, max_rank)?;
        let report = classify_compact(&ap.psi)?;
        report.require_agreement()?;
        let sizes = ap.psi.fibers().iter().map(Vec::len);
        let fiber_range = (sizes.clone().min().unwrap_or(0), sizes.max().unwrap_or(0));
        let nontrivial = !ap.psi.is_isomorphism();
        if !nontrivial {
            return Err(FzError::Equivalence("almost periodic factor did not grow although the extension is not weakly mixing".into()));
        }
        levels.push(TowerLevel {
            kind: StepKind::CompactStep,
            atoms: ap.z.len(),
            atom_ids: ap.z.space().atoms().to_vec(),
            from_top: ap.phi.clone(),
            step: Some(ap.psi.clone()),
            fiber_range: Some(fiber_range),
            relatively_compact: Some(report.relatively_compact),
            nontrivial: Some(nontrivial),
            rank_cap_relaxed: ap.rank_cap_relaxed,
        });
        current = ap.phi;
    };
    Ok(TowerReport { length: levels.len() - 1, levels, max_rank, top })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsys::FinProbSpace;

    #[test]
    fn cycle_tower_has_length_one() {
        let sys = Arc::new(
            FinSystem::from_images(FinProbSpace::uniform(["x1", "x2", "x3", "x4"]).unwrap(), vec![("T", vec![1, 2, 3, 0])])
                .unwrap(),
        );
        let t = furstenberg_tower(&sys, None).unwrap();
        assert_eq!(t.length, 1);
        assert_eq!(t.levels[1].atoms, 4);
        assert!(t.top.is_wm);
        for lvl in &t.levels[1..] {
            let step = lvl.step.as_ref().unwrap();
            assert!(lvl.from_top.compose(step).is_ok());
        }
    }

    #[test]
    fn trivial_system_is_already_top() {
        let t = furstenberg_tower(&Arc::new(FinSystem::trivial()), None).unwrap();
        assert_eq!(t.length, 0);
    }
}
