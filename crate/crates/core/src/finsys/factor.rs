use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{FzError, Result};
use crate::finsys::action::{FinSystem, Generator, Permutation};
use crate::finsys::space::{format_rational, FinProbSpace};
use crate::hilbert::Observable;

/// An equivariant, measure-preserving surjection between the atoms of two
/// finite systems.
#[derive(Debug, Clone)]
pub struct FactorMap {
    source: Arc<FinSystem>,
    target: Arc<FinSystem>,
    map: Vec<usize>,
    gen_map: Vec<usize>,
    fibers: Vec<Vec<usize>>,
    cond_weights: Vec<f64>,
}

/// Outcome of one factor-map invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl CheckResult {
    fn pass() -> Self {
        Self { ok: true, witness: None, message: None }
    }

    fn fail(witness: impl Into<String>, message: impl Into<String>) -> Self {
        Self { ok: false, witness: Some(witness.into()), message: Some(message.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub surjective: CheckResult,
    pub measure_preserving: CheckResult,
    pub equivariant: CheckResult,
    pub passed: bool,
}

impl FactorReport {
    /// First failure message, if any.
    pub fn failure(&self) -> Option<String> {
        [("not surjective", &self.surjective), ("not measure-preserving", &self.measure_preserving), ("not equivariant", &self.equivariant)]
            .into_iter()
            .find(|(_, c)| !c.ok)
            .map(|(what, c)| {
                format!("{what}: {}", c.message.clone().unwrap_or_default())
            })
    }
}

impl FactorMap {
    /// Assembles a factor map without checking the factor invariants; only
    /// index ranges are checked. Use [`FactorMap::validate`] or
    /// [`FactorMap::new`] for the full check.
    pub fn from_parts(
        source: Arc<FinSystem>,
        target: Arc<FinSystem>,
        map: Vec<usize>,
        gen_map: Vec<usize>,
    ) -> Result<Self> {
        if map.len() != source.len() {
            return Err(FzError::Schema(format!(
                "factor map covers {} atoms, source has {}",
                map.len(),
                source.len()
            )));
        }
        if let Some(&bad) = map.iter().find(|&&y| y >= target.len()) {
            return Err(FzError::Schema(format!("factor map points at target atom #{bad}, out of range")));
        }
        if gen_map.len() != source.generators().len() {
            return Err(FzError::Schema("generator correspondence must cover every source generator".into()));
        }
        if gen_map.iter().any(|&g| g >= target.generators().len()) {
            return Err(FzError::Schema("generator correspondence points outside the target".into()));
        }
        let mut fibers = vec![Vec::new(); target.len()];
        for (x, &y) in map.iter().enumerate() {
            fibers[y].push(x);
        }
        let cond_weights = map
            .iter()
            .enumerate()
            .map(|(x, &y)| {
                let fiber_mass: f64 = fibers[y].iter().map(|&x2| source.weight_f64(x2)).sum();
                source.weight_f64(x) / fiber_mass
            })
            .collect();
        Ok(Self { source, target, map, gen_map, fibers, cond_weights })
    }

    /// Assembles and validates; fails with the first violated invariant.
    pub fn new(source: Arc<FinSystem>, target: Arc<FinSystem>, map: Vec<usize>, gen_map: Vec<usize>) -> Result<Self> {
        let f = Self::from_parts(source, target, map, gen_map)?;
        let report = f.validate();
        match report.failure() {
            Some(msg) => Err(FzError::Validation(msg)),
            None => Ok(f),
        }
    }

    /// Builds a factor map from atom-id and generator-label correspondences.
    pub fn from_ids(
        source: Arc<FinSystem>,
        target: Arc<FinSystem>,
        map: &BTreeMap<String, String>,
        gen_map: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut atom_map = Vec::with_capacity(source.len());
        for id in source.space().atoms() {
            let y = map.get(id).ok_or_else(|| FzError::Schema(format!("factor map misses source atom {id:?}")))?;
            let yi = target
                .space()
                .index_of(y)
                .ok_or_else(|| FzError::Schema(format!("factor map sends {id:?} to unknown atom {y:?}")))?;
            atom_map.push(yi);
        }
        if let Some(extra) = map.keys().find(|k| source.space().index_of(k).is_none()) {
            return Err(FzError::Schema(format!("factor map mentions unknown source atom {extra:?}")));
        }
        let mut gens = Vec::with_capacity(source.generators().len());
        for g in source.generators() {
            let target_label = gen_map
                .get(&g.label)
                .ok_or_else(|| FzError::Schema(format!("generator {:?} has no image", g.label)))?;
            let gi = target
                .generator_index(target_label)
                .ok_or_else(|| FzError::Schema(format!("unknown target generator {target_label:?}")))?;
            gens.push(gi);
        }
        Self::from_parts(source, target, atom_map, gens)
    }

    /// The identity factor `X → X`.
    pub fn identity(sys: Arc<FinSystem>) -> Self {
        let n = sys.len();
        let gens = (0..sys.generators().len()).collect();
        Self::from_parts(sys.clone(), sys, (0..n).collect(), gens).expect("identity factor")
    }

    /// The factor onto the one-atom system carrying the same generator labels.
    pub fn to_trivial(sys: Arc<FinSystem>) -> Self {
        let gens: Vec<Generator> = sys
            .generators()
            .iter()
            .map(|g| Generator { label: g.label.clone(), perm: Permutation::identity(1) })
            .collect();
        let target = FinSystem::new(FinProbSpace::uniform(["*"]).expect("one atom"), gens)
            .expect("trivial target")
            .with_group_cap(sys.group_cap());
        let k = sys.generators().len();
        Self::from_parts(sys.clone(), Arc::new(target), vec![0; sys.len()], (0..k).collect()).expect("trivial factor")
    }

    pub fn source(&self) -> &Arc<FinSystem> {
        &self.source
    }

    pub fn target(&self) -> &Arc<FinSystem> {
        &self.target
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    #[inline]
    pub fn image(&self, x: usize) -> usize {
        self.map[x]
    }

    pub fn gen_map(&self) -> &[usize] {
        &self.gen_map
    }

    pub fn fiber(&self, y: usize) -> &[usize] {
        &self.fibers[y]
    }

    pub fn fibers(&self) -> &[Vec<usize>] {
        &self.fibers
    }

    /// Conditional weight `μ(x) / ν(π(x))` in floating point.
    #[inline]
    pub fn cond_weight(&self, x: usize) -> f64 {
        self.cond_weights[x]
    }

    /// True when every fiber is a single atom.
    pub fn is_isomorphism(&self) -> bool {
        self.fibers.iter().all(|f| f.len() == 1)
    }

    /// True when the target has a single atom.
    pub fn is_trivial_target(&self) -> bool {
        self.target.len() == 1
    }

    pub fn max_fiber_len(&self) -> usize {
        self.fibers.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Checks surjectivity, exact measure preservation and equivariance.
    pub fn validate(&self) -> FactorReport {
        let src = self.source.space();
        let tgt = self.target.space();

        let surjective = match self.fibers.iter().position(Vec::is_empty) {
            Some(y) => CheckResult::fail(tgt.atom_id(y), format!("target atom {:?} has no preimage", tgt.atom_id(y))),
            None => CheckResult::pass(),
        };

        let mut measure_preserving = CheckResult::pass();
        for (y, fiber) in self.fibers.iter().enumerate() {
            let mass = fiber.iter().fold(BigRational::zero(), |acc, &x| acc + src.weight(x));
            if &mass != tgt.weight(y) {
                measure_preserving = CheckResult::fail(
                    tgt.atom_id(y),
                    format!(
                        "target atom {:?} has weight {} but its fiber carries {}",
                        tgt.atom_id(y),
                        format_rational(tgt.weight(y)),
                        format_rational(&mass)
                    ),
                );
                break;
            }
        }

        let mut equivariant = CheckResult::pass();
        'outer: for (g, gen) in self.source.generators().iter().enumerate() {
            let tgen = &self.target.generators()[self.gen_map[g]];
            for x in 0..self.source.len() {
                let lhs = self.map[gen.perm.apply(x)];
                let rhs = tgen.perm.apply(self.map[x]);
                if lhs != rhs {
                    equivariant = CheckResult::fail(
                        src.atom_id(x),
                        format!(
                            "π({} · {}) = {} but {} · π({}) = {}",
                            gen.label,
                            src.atom_id(x),
                            tgt.atom_id(lhs),
                            tgen.label,
                            src.atom_id(x),
                            tgt.atom_id(rhs)
                        ),
                    );
                    break 'outer;
                }
            }
        }

        let passed = surjective.ok && measure_preserving.ok && equivariant.ok;
        FactorReport { surjective, measure_preserving, equivariant, passed }
    }

    /// `next ∘ self` for `self: X → Y` and `next: Y → Z`.
    pub fn compose(&self, next: &FactorMap) -> Result<FactorMap> {
        if !same_system(&self.target, &next.source) {
            return Err(FzError::Mismatch("composed factor maps do not share the middle system".into()));
        }
        let map = self.map.iter().map(|&y| next.map[y]).collect();
        let gens = self.gen_map.iter().map(|&g| next.gen_map[g]).collect();
        FactorMap::from_parts(self.source.clone(), next.target.clone(), map, gens)
    }

    /// Lifts the atom partition of the target to a map `x ↦ block` and
    /// compares it with another factor of the same source.
    pub fn same_partition(&self, other: &FactorMap) -> bool {
        if !same_system(&self.source, &other.source) || self.target.len() != other.target.len() {
            return false;
        }
        let mut fwd = vec![usize::MAX; self.target.len()];
        for (x, &y) in self.map.iter().enumerate() {
            let z = other.map[x];
            if fwd[y] == usize::MAX {
                fwd[y] = z;
            } else if fwd[y] != z {
                return false;
            }
        }
        true
    }
}

/// Pointer equality or structural equality of systems.
pub fn same_system(a: &Arc<FinSystem>, b: &Arc<FinSystem>) -> bool {
    Arc::ptr_eq(a, b) || a.as_ref() == b.as_ref()
}

/// The factor generated by the action-closure of `fns`: atoms are identified
/// when every function `f ∘ T^g` agrees on them (within `tol`).
pub fn factor_from_functions(sys: &Arc<FinSystem>, fns: &[Observable], tol: f64) -> Result<FactorMap> {
    let n = sys.len();
    for f in fns {
        if !same_system(f.base(), sys) {
            return Err(FzError::Mismatch("observable lives on a different system".into()));
        }
    }
    let group = sys.group()?;
    let mut parent: Vec<usize> = (0..n).collect();
    // class[x] = smallest atom index in x's class; refined function by function
    let mut class: Vec<usize> = vec![0; n];
    for f in fns {
        for g in group.iter() {
            let vals: Vec<_> = (0..n).map(|x| f.values()[g.perm.apply(x)]).collect();
            // single-linkage within the current classes
            parent.iter_mut().enumerate().for_each(|(i, p)| *p = i);
            for a in 0..n {
                for b in (a + 1)..n {
                    if class[a] == class[b] && (vals[a] - vals[b]).norm() <= tol {
                        union(&mut parent, a, b);
                    }
                }
            }
            for x in 0..n {
                class[x] = find(&mut parent, x);
            }
        }
    }
    // canonical class labels ordered by first atom
    let mut label = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut map = vec![0; n];
    for x in 0..n {
        let root = class[x];
        if label[root] == usize::MAX {
            label[root] = members.len();
            members.push(Vec::new());
        }
        map[x] = label[root];
        members[label[root]].push(x);
    }
    quotient_by_partition(sys, &map, &members)
}

/// Builds the quotient system for an invariant partition of `sys`
/// (`map[x]` is the block of `x`, blocks numbered by first atom).
pub fn quotient_by_partition(sys: &Arc<FinSystem>, map: &[usize], members: &[Vec<usize>]) -> Result<FactorMap> {
    let space = sys.space();
    let atoms = members
        .iter()
        .map(|m| {
            let id = m.iter().map(|&x| space.atom_id(x)).collect::<Vec<_>>().join("+");
            let w = m.iter().fold(BigRational::zero(), |acc, &x| acc + space.weight(x));
            (id, w)
        })
        .collect();
    let qspace = FinProbSpace::new(atoms)?;
    let mut gens = Vec::with_capacity(sys.generators().len());
    for g in sys.generators() {
        let mut images = vec![usize::MAX; members.len()];
        for (x, &b) in map.iter().enumerate() {
            let target = map[g.perm.apply(x)];
            if images[b] == usize::MAX {
                images[b] = target;
            } else if images[b] != target {
                return Err(FzError::Validation(format!(
                    "induced action of {:?} is ill-defined on block containing {:?}",
                    g.label,
                    space.atom_id(x)
                )));
            }
        }
        gens.push(Generator { label: g.label.clone(), perm: Permutation::from_images(images)? });
    }
    let target = FinSystem::new(qspace, gens)?.with_group_cap(sys.group_cap());
    let k = sys.generators().len();
    FactorMap::new(sys.clone(), Arc::new(target), map.to_vec(), (0..k).collect())
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}
