//! The relatively independent self-product `X ×_Y X`, kernels on it, and the
//! conditional Hilbert–Schmidt operator `K ∗_Y`.
//!
//! Kernels are stored as one dense block per factor atom: the block for `y`
//! is indexed by pairs of atoms in the fiber `π⁻¹(y)`. The flat pair-atom view
//! (pairs ordered by fiber, then row, then column) is derived from it.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{FzError, Result};
use crate::finsys::{same_system, FactorMap, FinProbSpace, FinSystem, Generator, Permutation};
use crate::hilbert::{cond_exp_exact, Observable};
use crate::linalg::CMatrix;

#[derive(Debug, Clone)]
struct PairBlock {
    offset: usize,
    atoms: Vec<usize>,
}

/// `X ×_Y X` with pair weights `μ(x) μ(x') / ν(y)` and the diagonal action.
#[derive(Debug)]
pub struct RelProduct {
    factor: FactorMap,
    system: Arc<FinSystem>,
    pairs: Vec<(usize, usize)>,
    blocks: Vec<PairBlock>,
    /// position of each X-atom inside its fiber
    slot: Vec<usize>,
    proj1: FactorMap,
    proj2: FactorMap,
}

impl RelProduct {
    pub fn factor(&self) -> &FactorMap {
        &self.factor
    }

    /// The pair atoms as a finite system carrying `T × T`.
    pub fn system(&self) -> &Arc<FinSystem> {
        &self.system
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// First coordinate projection, a factor map onto `X`.
    pub fn proj1(&self) -> &FactorMap {
        &self.proj1
    }

    /// Second coordinate projection.
    pub fn proj2(&self) -> &FactorMap {
        &self.proj2
    }

    /// Flat index of the pair `(x, x')`, if both lie in a common fiber.
    pub fn pair_index(&self, x: usize, x2: usize) -> Option<usize> {
        let y = self.factor.image(x);
        if self.factor.image(x2) != y {
            return None;
        }
        let m = self.blocks[y].atoms.len();
        Some(self.blocks[y].offset + self.slot[x] * m + self.slot[x2])
    }

    fn fiber_len(&self, y: usize) -> usize {
        self.blocks[y].atoms.len()
    }

    /// Checks `Σ w(x,x') f1(x) f2(x') = Σ_y ν(y) E(f1|Y)(y) E(f2|Y)(y)`
    /// exactly for rational-valued functions.
    pub fn check_f1f2(&self, f1: &[BigRational], f2: &[BigRational]) -> bool {
        let (lhs, rhs) = self.f1f2_sides(f1, f2);
        lhs == rhs
    }

    /// Both sides of the relative-product identity, in exact arithmetic.
    pub fn f1f2_sides(&self, f1: &[BigRational], f2: &[BigRational]) -> (BigRational, BigRational) {
        let space = self.system.space();
        let lhs = self
            .pairs
            .iter()
            .enumerate()
            .fold(BigRational::zero(), |acc, (p, &(x, x2))| acc + space.weight(p) * &f1[x] * &f2[x2]);
        let e1 = cond_exp_exact(f1, &self.factor);
        let e2 = cond_exp_exact(f2, &self.factor);
        let tgt = self.factor.target().space();
        let rhs = (0..tgt.len()).fold(BigRational::zero(), |acc, y| acc + tgt.weight(y) * &e1[y] * &e2[y]);
        (lhs, rhs)
    }
}

/// Builds `X ×_Y X` and verifies its defining identities exactly.
pub fn build_relprod(pi: &FactorMap) -> Result<Arc<RelProduct>> {
    let src = pi.source().space();
    let tgt = pi.target().space();
    let mut pairs = Vec::new();
    let mut blocks = Vec::with_capacity(tgt.len());
    let mut slot = vec![0; src.len()];
    let mut atoms = Vec::new();
    for (y, fib) in pi.fibers().iter().enumerate() {
        for (i, &x) in fib.iter().enumerate() {
            slot[x] = i;
        }
        blocks.push(PairBlock { offset: pairs.len(), atoms: fib.clone() });
        for &x in fib {
            for &x2 in fib {
                pairs.push((x, x2));
                let w = src.weight(x) * src.weight(x2) / tgt.weight(y);
                atoms.push((format!("{}|{}", src.atom_id(x), src.atom_id(x2)), w));
            }
        }
    }
    // FinProbSpace::new enforces that pair weights sum to one exactly
    let space = FinProbSpace::new(atoms)?;
    let index_of = |x: usize, x2: usize| -> usize {
        let y = pi.image(x);
        blocks[y].offset + slot[x] * blocks[y].atoms.len() + slot[x2]
    };
    let mut gens = Vec::with_capacity(pi.source().generators().len());
    for g in pi.source().generators() {
        let images = pairs.iter().map(|&(x, x2)| index_of(g.perm.apply(x), g.perm.apply(x2))).collect();
        gens.push(Generator { label: g.label.clone(), perm: Permutation::from_images(images)? });
    }
    let system = Arc::new(FinSystem::new(space, gens)?.with_group_cap(pi.source().group_cap()));
    let k = pi.source().generators().len();
    let proj1 = FactorMap::new(system.clone(), pi.source().clone(), pairs.iter().map(|p| p.0).collect(), (0..k).collect())?;
    let proj2 = FactorMap::new(system.clone(), pi.source().clone(), pairs.iter().map(|p| p.1).collect(), (0..k).collect())?;
    let rp = RelProduct { factor: pi.clone(), system, pairs, blocks, slot, proj1, proj2 };

    // bilinear identity on indicator pairs, exactly
    let n = src.len();
    let one = BigRational::from_integer(1.into());
    for a in 0..n {
        for b in 0..n {
            let mut f1 = vec![BigRational::zero(); n];
            let mut f2 = vec![BigRational::zero(); n];
            f1[a] = one.clone();
            f2[b] = one.clone();
            if !rp.check_f1f2(&f1, &f2) {
                return Err(FzError::Validation(format!(
                    "relative product identity fails on indicators of {:?} and {:?}",
                    src.atom_id(a),
                    src.atom_id(b)
                )));
            }
        }
    }
    Ok(Arc::new(rp))
}

/// A complex function on the pair atoms of `X ×_Y X`, stored per fiber.
#[derive(Debug, Clone)]
pub struct Kernel {
    rp: Arc<RelProduct>,
    blocks: Vec<CMatrix>,
}

impl Kernel {
    pub fn zeros(rp: &Arc<RelProduct>) -> Self {
        let blocks = (0..rp.blocks.len())
            .map(|y| {
                let m = rp.fiber_len(y);
                CMatrix::zeros(m, m)
            })
            .collect();
        Self { rp: rp.clone(), blocks }
    }

    pub fn from_fn(rp: &Arc<RelProduct>, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut k = Self::zeros(rp);
        for (y, b) in rp.blocks.iter().enumerate() {
            for (i, &x) in b.atoms.iter().enumerate() {
                for (j, &x2) in b.atoms.iter().enumerate() {
                    k.blocks[y][(i, j)] = f(x, x2);
                }
            }
        }
        k
    }

    /// From values indexed by flat pair index.
    pub fn from_flat(rp: &Arc<RelProduct>, values: &[Complex64]) -> Result<Self> {
        if values.len() != rp.len() {
            return Err(FzError::Mismatch(format!("kernel has {} values, product has {} pairs", values.len(), rp.len())));
        }
        let mut k = Self::zeros(rp);
        for (y, b) in rp.blocks.iter().enumerate() {
            let m = b.atoms.len();
            for i in 0..m {
                for j in 0..m {
                    k.blocks[y][(i, j)] = values[b.offset + i * m + j];
                }
            }
        }
        Ok(k)
    }

    pub fn to_flat(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.rp.len());
        for blk in &self.blocks {
            for i in 0..blk.nrows() {
                for j in 0..blk.ncols() {
                    out.push(blk[(i, j)]);
                }
            }
        }
        out
    }

    /// The constant kernel.
    pub fn constant(rp: &Arc<RelProduct>, c: Complex64) -> Self {
        Self::from_fn(rp, |_, _| c)
    }

    /// Indicator of the diagonal `{(x, x)}`.
    pub fn diagonal(rp: &Arc<RelProduct>) -> Self {
        Self::from_fn(rp, |x, x2| if x == x2 { Complex64::new(1.0, 0.0) } else { Complex64::zero() })
    }

    pub fn relprod(&self) -> &Arc<RelProduct> {
        &self.rp
    }

    /// Per-fiber block, rows and columns in fiber order.
    pub fn block(&self, y: usize) -> &CMatrix {
        &self.blocks[y]
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn value(&self, x: usize, x2: usize) -> Option<Complex64> {
        let y = self.rp.factor.image(x);
        (self.rp.factor.image(x2) == y).then(|| self.blocks[y][(self.rp.slot[x], self.rp.slot[x2])])
    }

    pub fn map_blocks(&self, op: impl Fn(usize, &CMatrix) -> CMatrix) -> Kernel {
        Kernel { rp: self.rp.clone(), blocks: self.blocks.iter().enumerate().map(|(y, b)| op(y, b)).collect() }
    }

    pub fn add(&self, other: &Kernel) -> Kernel {
        self.map_blocks(|y, b| b + &other.blocks[y])
    }

    pub fn scale(&self, c: Complex64) -> Kernel {
        self.map_blocks(|_, b| b * c)
    }

    /// `K*(x, x') = conj K(x', x)`.
    pub fn adjoint(&self) -> Kernel {
        self.map_blocks(|_, b| b.adjoint())
    }

    /// Multiplies by `a ∘ π` for `a` on the factor.
    pub fn scale_by_factor(&self, a: &Observable) -> Kernel {
        self.map_blocks(|y, b| b * a.values()[y])
    }

    /// `L²(X ×_Y X)` inner product.
    pub fn inner(&self, other: &Kernel) -> Complex64 {
        let w = self.rp.system.space().weights_f64();
        self.to_flat().iter().zip(other.to_flat()).enumerate().map(|(p, (a, b))| a * b.conj() * w[p]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    /// The kernel as an observable on the pair system.
    pub fn to_observable(&self) -> Observable {
        Observable::new(self.rp.system.clone(), self.to_flat()).expect("pair count matches")
    }

    pub fn from_observable(rp: &Arc<RelProduct>, f: &Observable) -> Result<Kernel> {
        if !same_system(f.base(), &rp.system) {
            return Err(FzError::Mismatch("observable does not live on the relative product".into()));
        }
        Kernel::from_flat(rp, f.values())
    }

    /// True when `K ∘ (T×T)^g = K` for every generator, compared exactly.
    pub fn is_invariant_exact(&self) -> bool {
        let flat = self.to_flat();
        self.rp.system.generators().iter().all(|g| (0..flat.len()).all(|p| flat[g.perm.apply(p)] == flat[p]))
    }

    /// Largest change of any value under a generator.
    pub fn invariance_defect(&self) -> f64 {
        let flat = self.to_flat();
        self.rp
            .system
            .generators()
            .iter()
            .flat_map(|g| (0..flat.len()).map(move |p| (g.perm.apply(p), p)))
            .map(|(a, b)| (flat[a] - flat[b]).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_doc(&self) -> Vec<KernelEntry> {
        let src = self.rp.factor.source().space();
        self.rp
            .pairs
            .iter()
            .zip(self.to_flat())
            .map(|(&(x, x2), v)| KernelEntry { x: src.atom_id(x).into(), x2: src.atom_id(x2).into(), value: [v.re, v.im] })
            .collect()
    }

    pub fn from_doc(rp: &Arc<RelProduct>, doc: &[KernelEntry]) -> Result<Kernel> {
        let src = rp.factor.source().space();
        let mut values = vec![Complex64::zero(); rp.len()];
        let mut seen = BTreeMap::new();
        for e in doc {
            let lookup = |id: &str| src.index_of(id).ok_or_else(|| FzError::Schema(format!("kernel mentions unknown atom {id:?}")));
            let (x, x2) = (lookup(&e.x)?, lookup(&e.x2)?);
            let p = rp
                .pair_index(x, x2)
                .ok_or_else(|| FzError::Schema(format!("({:?}, {:?}) is not a pair atom", e.x, e.x2)))?;
            values[p] = Complex64::new(e.value[0], e.value[1]);
            seen.insert(p, ());
        }
        if seen.len() != rp.len() {
            return Err(FzError::Schema("kernel does not cover every pair atom".into()));
        }
        Kernel::from_flat(rp, &values)
    }
}

/// JSON entry `{"x": id, "x2": id, "value": [re, im]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry {
    pub x: String,
    pub x2: String,
    pub value: [f64; 2],
}

/// `(f ⊗ g)(x, x') = f(x) g(x')`.
pub fn tensor(rp: &Arc<RelProduct>, f: &Observable, g: &Observable) -> Kernel {
    Kernel::from_fn(rp, |x, x2| f.values()[x] * g.values()[x2])
}

/// `(K ∗_Y f)(x) = Σ_{x' ∈ π⁻¹(π(x))} μ_{π(x)}(x') K(x, x') f(x')`.
pub fn kernel_apply(k: &Kernel, f: &Observable) -> Result<Observable> {
    let pi = &k.rp.factor;
    if !same_system(f.base(), pi.source()) {
        return Err(FzError::Mismatch("kernel and observable live on different systems".into()));
    }
    let mut out = Observable::zeros(pi.source().clone());
    for (y, b) in k.rp.blocks.iter().enumerate() {
        let blk = &k.blocks[y];
        for (i, &x) in b.atoms.iter().enumerate() {
            out.values_mut()[x] =
                b.atoms.iter().enumerate().map(|(j, &x2)| blk[(i, j)] * f.values()[x2] * pi.cond_weight(x2)).sum();
        }
    }
    Ok(out)
}

/// Conditional Hilbert–Schmidt norm `sqrt(Σ μ_y(x) μ_y(x') |K(x,x')|²)` per
/// factor atom.
pub fn hs_cond_norm(k: &Kernel) -> Observable {
    let pi = &k.rp.factor;
    let values = k
        .rp
        .blocks
        .iter()
        .enumerate()
        .map(|(y, b)| {
            let blk = &k.blocks[y];
            let mut s = 0.0;
            for (i, &x) in b.atoms.iter().enumerate() {
                for (j, &x2) in b.atoms.iter().enumerate() {
                    s += pi.cond_weight(x) * pi.cond_weight(x2) * blk[(i, j)].norm_sqr();
                }
            }
            Complex64::new(s.sqrt(), 0.0)
        })
        .collect();
    Observable::new(pi.target().clone(), values).expect("one value per factor atom")
}

/// Real orthonormal basis of the `T × T`-invariant kernels: the normalized
/// group means of pair-atom indicators, one per orbit, in order of the first
/// pair atom of each orbit.
pub fn invariant_kernels(rp: &Arc<RelProduct>) -> Result<Vec<Kernel>> {
    let group = rp.system.group()?;
    let n = rp.len();
    let weights = rp.system.space().weights_f64();
    let mut covered = vec![false; n];
    let mut basis = Vec::new();
    for p in 0..n {
        if covered[p] {
            continue;
        }
        // group mean of the indicator of p: (1/|G|) Σ_g 1_{g⁻¹ p}
        let mut mean = vec![0.0f64; n];
        for g in group.iter() {
            mean[g.perm.inverse().apply(p)] += 1.0 / group.len() as f64;
        }
        let mut support = Vec::new();
        for (q, &m) in mean.iter().enumerate() {
            if m > 0.0 {
                covered[q] = true;
                support.push(q);
            }
        }
        let mass: f64 = support.iter().map(|&q| weights[q]).sum();
        let h = 1.0 / mass.sqrt();
        let mut values = vec![Complex64::zero(); n];
        for &q in &support {
            values[q] = Complex64::new(h, 0.0);
        }
        basis.push(Kernel::from_flat(rp, &values)?);
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsys::FinProbSpace;
    use crate::hilbert::{cond_exp, lift};

    fn running() -> FactorMap {
        let x = Arc::new(
            FinSystem::from_images(FinProbSpace::uniform(["x1", "x2", "x3", "x4"]).unwrap(), vec![("T", vec![1, 2, 3, 0])])
                .unwrap(),
        );
        let y = Arc::new(FinSystem::from_images(FinProbSpace::uniform(["y1", "y2"]).unwrap(), vec![("S", vec![1, 0])]).unwrap());
        FactorMap::new(x, y, vec![0, 1, 0, 1], vec![0]).unwrap()
    }

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn running_example_has_eight_pairs_of_weight_one_eighth() {
        let rp = build_relprod(&running()).unwrap();
        assert_eq!(rp.len(), 8);
        let eighth = BigRational::new(1.into(), 8.into());
        assert!(rp.system().space().weights().iter().all(|w| *w == eighth));
        assert!(rp.proj1().validate().passed && rp.proj2().validate().passed);
    }

    #[test]
    fn identity_and_trivial_factors() {
        let pi = running();
        let id = FactorMap::identity(pi.source().clone());
        let rp = build_relprod(&id).unwrap();
        assert_eq!(rp.len(), 4);
        assert!(rp.pairs().iter().all(|(a, b)| a == b));
        let triv = FactorMap::to_trivial(pi.source().clone());
        let rp = build_relprod(&triv).unwrap();
        assert_eq!(rp.len(), 16);
        let sixteenth = BigRational::new(1.into(), 16.into());
        assert!(rp.system().space().weights().iter().all(|w| *w == sixteenth));
    }

    #[test]
    fn constant_kernel_is_conditional_expectation() {
        let pi = running();
        let rp = build_relprod(&pi).unwrap();
        let f = Observable::real(pi.source().clone(), &[1.0, 0.0, 3.0, 0.0]).unwrap();
        let out = kernel_apply(&Kernel::constant(&rp, c(1.0)), &f).unwrap();
        assert!(out.max_abs_diff(&lift(&cond_exp(&f, &pi), &pi)) < 1e-15);
        let diag = kernel_apply(&Kernel::diagonal(&rp), &f).unwrap();
        assert!(diag.max_abs_diff(&f.scale(c(0.5))) < 1e-15);
    }

    #[test]
    fn tensor_with_constant_second_slot() {
        let pi = running();
        let rp = build_relprod(&pi).unwrap();
        let f = Observable::real(pi.source().clone(), &[1.0, 0.0, 3.0, 0.0]).unwrap();
        let one = Observable::constant(pi.source().clone(), c(1.0));
        let k = tensor(&rp, &f, &one);
        for &(x, x2) in rp.pairs() {
            assert_eq!(k.value(x, x2).unwrap(), f.values()[x]);
        }
        let zero = Observable::zeros(pi.source().clone());
        assert_eq!(tensor(&rp, &f, &zero).norm(), 0.0);
        assert!((tensor(&rp, &one, &one).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hs_norms() {
        let pi = running();
        let rp = build_relprod(&pi).unwrap();
        let one = hs_cond_norm(&Kernel::constant(&rp, c(1.0)));
        assert!(one.values().iter().all(|v| (v.re - 1.0).abs() < 1e-15));
        let diag = hs_cond_norm(&Kernel::diagonal(&rp));
        assert!(diag.values().iter().all(|v| (v.re - 0.5f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn invariant_kernels_of_running_example() {
        let pi = running();
        let rp = build_relprod(&pi).unwrap();
        let basis = invariant_kernels(&rp).unwrap();
        assert_eq!(basis.len(), 2);
        assert!(basis.iter().all(Kernel::is_invariant_exact));
        // diagonal orbit first, then the antidiagonal (x_i, x_{i+2})
        assert!(basis[0].value(0, 0).unwrap().re > 0.0 && basis[0].value(0, 2).unwrap() == Complex64::zero());
        assert!(basis[1].value(0, 2).unwrap().re > 0.0);
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((a.inner(b).re - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_action_has_one_invariant_kernel_per_pair() {
        let x = Arc::new(FinSystem::new(FinProbSpace::uniform(["a", "b", "c"]).unwrap(), vec![]).unwrap());
        let triv = FactorMap::to_trivial(x);
        let rp = build_relprod(&triv).unwrap();
        assert_eq!(invariant_kernels(&rp).unwrap().len(), 9);
    }

    #[test]
    fn kernel_documents_round_trip() {
        let pi = running();
        let rp = build_relprod(&pi).unwrap();
        let k = Kernel::from_fn(&rp, |x, x2| Complex64::new(x as f64, x2 as f64));
        let back = Kernel::from_doc(&rp, &k.to_doc()).unwrap();
        assert_eq!(back.to_flat(), k.to_flat());
    }
}
