//! Observables on finite systems and conditional Hilbert structure over a
//! factor.
//!
//! At finite scale `L⁰(X) = L²(X) = L∞(X)`, so a single [`Observable`] type
//! stands for all three. Conditional objects relative to `π: X → Y` are
//! observables on `Y`; the conditional expectation is the fiberwise average
//! with respect to the disintegration `μ_y(x) = μ(x) / ν(y)`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{FzError, Result};
use crate::finsys::{same_system, FactorMap, FinSystem, Permutation};

/// Default tolerance for floating-point assertions.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A complex-valued function on the atoms of a system.
#[derive(Debug, Clone)]
pub struct Observable {
    base: Arc<FinSystem>,
    values: Vec<Complex64>,
}

impl PartialEq for Observable {
    fn eq(&self, other: &Self) -> bool {
        same_system(&self.base, &other.base) && self.values == other.values
    }
}

impl Observable {
    pub fn new(base: Arc<FinSystem>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != base.len() {
            return Err(FzError::Mismatch(format!(
                "observable has {} values, system has {} atoms",
                values.len(),
                base.len()
            )));
        }
        Ok(Self { base, values })
    }

    pub fn real(base: Arc<FinSystem>, values: &[f64]) -> Result<Self> {
        Self::new(base, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(base: Arc<FinSystem>) -> Self {
        let n = base.len();
        Self { base, values: vec![Complex64::zero(); n] }
    }

    pub fn constant(base: Arc<FinSystem>, c: Complex64) -> Self {
        let n = base.len();
        Self { base, values: vec![c; n] }
    }

    pub fn indicator(base: Arc<FinSystem>, x: usize) -> Self {
        let mut f = Self::zeros(base);
        f.values[x] = Complex64::new(1.0, 0.0);
        f
    }

    pub fn base(&self) -> &Arc<FinSystem> {
        &self.base
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn zip_with(&self, other: &Observable, op: impl Fn(Complex64, Complex64) -> Complex64) -> Observable {
        assert_eq!(self.len(), other.len(), "observables on different systems");
        Observable {
            base: self.base.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Observable) -> Observable {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Observable) -> Observable {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Observable) -> Observable {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: Complex64) -> Observable {
        self.map(|v| v * c)
    }

    pub fn conj(&self) -> Observable {
        self.map(|v| v.conj())
    }

    pub fn map(&self, op: impl Fn(Complex64) -> Complex64) -> Observable {
        Observable { base: self.base.clone(), values: self.values.iter().map(|&v| op(v)).collect() }
    }

    /// `⟨f, g⟩_{L²} = Σ μ(x) f(x) conj(g(x))`.
    pub fn inner(&self, other: &Observable) -> Complex64 {
        assert_eq!(self.len(), other.len(), "observables on different systems");
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(x, (&a, &b))| a * b.conj() * self.base.weight_f64(x))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    /// Largest pointwise modulus.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Integral `Σ μ(x) f(x)`.
    pub fn mean(&self) -> Complex64 {
        self.values.iter().enumerate().map(|(x, &v)| v * self.base.weight_f64(x)).sum()
    }

    /// Largest pointwise distance to another observable.
    pub fn max_abs_diff(&self, other: &Observable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn to_doc(&self) -> ObservableDoc {
        let space = self.base.space();
        ObservableDoc(
            self.values
                .iter()
                .enumerate()
                .map(|(x, v)| (space.atom_id(x).to_string(), [v.re, v.im]))
                .collect(),
        )
    }

    pub fn from_doc(base: Arc<FinSystem>, doc: &ObservableDoc) -> Result<Self> {
        let space = base.space();
        let mut values = vec![Complex64::zero(); space.len()];
        let mut seen = vec![false; space.len()];
        for (id, [re, im]) in &doc.0 {
            let x = space.index_of(id).ok_or_else(|| FzError::Schema(format!("observable mentions unknown atom {id:?}")))?;
            values[x] = Complex64::new(*re, *im);
            seen[x] = true;
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(FzError::Schema(format!("observable misses atom {:?}", space.atom_id(x))));
        }
        Self::new(base, values)
    }
}

/// JSON form `{atom-id: [re, im]}`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct ObservableDoc(pub BTreeMap<String, [f64; 2]>);

/// Lifts an observable on the factor `Y` to `X` via `a ∘ π`.
pub fn lift(a: &Observable, pi: &FactorMap) -> Observable {
    assert_eq!(a.len(), pi.target().len(), "lifted observable must live on the factor");
    Observable {
        base: pi.source().clone(),
        values: (0..pi.source().len()).map(|x| a.values[pi.image(x)]).collect(),
    }
}

/// Koopman operator `(T^g)* f = f ∘ T^g` for a permutation of the atoms.
pub fn pull_back(perm: &Permutation, f: &Observable) -> Observable {
    Observable { base: f.base.clone(), values: (0..f.len()).map(|x| f.values[perm.apply(x)]).collect() }
}

/// Koopman operator for an element of the acting group; rejects
/// permutations outside the generated group.
pub fn koopman(g: &Permutation, f: &Observable) -> Result<Observable> {
    let group = f.base.group()?;
    if group.index_of(g).is_none() {
        return Err(FzError::Precondition("permutation is not an element of the acting group".into()));
    }
    Ok(pull_back(g, f))
}

/// The disintegration of `μ` over a factor: exact fiber measures
/// `μ_y(x) = μ(x) / ν(y)` supported on `π⁻¹(y)`.
#[derive(Debug, Clone)]
pub struct FiberMeasure {
    pub fibers: Vec<Vec<(usize, BigRational)>>,
}

impl FiberMeasure {
    /// Each fiber measure sums to one and lives on the right fiber.
    pub fn check(&self, pi: &FactorMap) -> bool {
        self.fibers.iter().enumerate().all(|(y, fib)| {
            let total = fib.iter().fold(BigRational::zero(), |acc, (_, w)| acc + w);
            let support: Vec<usize> = fib.iter().map(|(x, _)| *x).collect();
            total == num_traits::One::one() && support == pi.fiber(y)
        })
    }

    /// Pushes `μ_y` forward along a permutation of `X`.
    pub fn push_forward(&self, y: usize, perm: &Permutation) -> BTreeMap<usize, BigRational> {
        self.fibers[y].iter().map(|(x, w)| (perm.apply(*x), w.clone())).collect()
    }
}

pub fn disintegrate(pi: &FactorMap) -> FiberMeasure {
    let src = pi.source().space();
    let tgt = pi.target().space();
    let fibers = pi
        .fibers()
        .iter()
        .enumerate()
        .map(|(y, fib)| fib.iter().map(|&x| (x, src.weight(x) / tgt.weight(y))).collect())
        .collect();
    FiberMeasure { fibers }
}

/// `E(f|Y)(y) = Σ_{x ∈ π⁻¹(y)} μ_y(x) f(x)`.
pub fn cond_exp(f: &Observable, pi: &FactorMap) -> Observable {
    assert_eq!(f.len(), pi.source().len(), "observable must live on the factor's source");
    let values = pi
        .fibers()
        .iter()
        .map(|fib| fib.iter().map(|&x| f.values[x] * pi.cond_weight(x)).sum())
        .collect();
    Observable { base: pi.target().clone(), values }
}

/// Exact conditional expectation for rational-valued functions.
pub fn cond_exp_exact(f: &[BigRational], pi: &FactorMap) -> Vec<BigRational> {
    let fm = disintegrate(pi);
    fm.fibers
        .iter()
        .map(|fib| fib.iter().fold(BigRational::zero(), |acc, (x, w)| acc + w * &f[*x]))
        .collect()
}

/// Conditional inner product `⟨f, g⟩_{X|Y} = E(f ḡ | Y)`.
pub fn cond_inner(f: &Observable, g: &Observable, pi: &FactorMap) -> Observable {
    cond_exp(&f.mul(&g.conj()), pi)
}

/// Conditional norm `‖f‖_{X|Y} = ⟨f, f⟩^{1/2}`, real and non-negative.
pub fn cond_norm(f: &Observable, pi: &FactorMap) -> Observable {
    cond_exp(&f.map(|v| Complex64::new(v.norm_sqr(), 0.0)), pi).map(|v| Complex64::new(v.re.max(0.0).sqrt(), 0.0))
}

/// Per-Y-atom conditional norms as plain reals.
pub fn cond_norms(f: &Observable, pi: &FactorMap) -> Vec<f64> {
    pi.fibers()
        .iter()
        .map(|fib| fib.iter().map(|&x| f.values[x].norm_sqr() * pi.cond_weight(x)).sum::<f64>().sqrt())
        .collect()
}

/// The probabilistic metric `Σ_y ν(y) min(1, ‖f − g‖_{X|Y}(y))`.
pub fn pmetric(f: &Observable, g: &Observable, pi: &FactorMap) -> f64 {
    cond_norms(&f.sub(g), pi)
        .into_iter()
        .enumerate()
        .map(|(y, n)| pi.target().weight_f64(y) * n.min(1.0))
        .sum()
}

/// Glues observables blockwise: `out = Σ_E pieces[E] · 1_{π⁻¹(E)}`, for a
/// partition of the factor atoms given as `block_of[y]`.
pub fn concatenate(pieces: &[Observable], block_of: &[usize], pi: &FactorMap) -> Observable {
    let mut out = Observable::zeros(pi.source().clone());
    for x in 0..out.len() {
        out.values[x] = pieces[block_of[pi.image(x)]].values[x];
    }
    out
}

/// Restricts `f` to the fibers over the given factor atoms (zero elsewhere).
pub fn restrict(f: &Observable, pi: &FactorMap, ys: &[usize]) -> Observable {
    let mut out = Observable::zeros(f.base.clone());
    for &y in ys {
        for &x in pi.fiber(y) {
            out.values[x] = f.values[x];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsys::{FinProbSpace, FinSystem};

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    /// 4-cycle over the 2-cycle; fibers {x1,x3}, {x2,x4}.
    fn running() -> FactorMap {
        let x = Arc::new(
            FinSystem::from_images(FinProbSpace::uniform(["x1", "x2", "x3", "x4"]).unwrap(), vec![("T", vec![1, 2, 3, 0])])
                .unwrap(),
        );
        let y = Arc::new(FinSystem::from_images(FinProbSpace::uniform(["y1", "y2"]).unwrap(), vec![("S", vec![1, 0])]).unwrap());
        FactorMap::new(x, y, vec![0, 1, 0, 1], vec![0]).unwrap()
    }

    #[test]
    fn running_example_conditional_quantities() {
        let pi = running();
        let f = Observable::real(pi.source().clone(), &[1.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(cond_exp(&f, &pi).values(), &[c(2.0), c(0.0)]);
        assert_eq!(cond_inner(&f, &f, &pi).values(), &[c(5.0), c(0.0)]);
        let n = cond_norms(&f, &pi);
        assert!((n[0] - 5f64.sqrt()).abs() < 1e-15 && n[1] == 0.0);
        let zero = Observable::zeros(pi.source().clone());
        assert!((pmetric(&f, &zero, &pi) - 0.5).abs() < 1e-15);
        assert_eq!(pmetric(&f, &f, &pi), 0.0);
    }

    #[test]
    fn conditional_expectation_of_constants_and_trivial_factor() {
        let pi = running();
        let k = Observable::constant(pi.source().clone(), Complex64::new(2.0, -1.0));
        assert!(cond_exp(&k, &pi).values().iter().all(|&v| v == Complex64::new(2.0, -1.0)));
        let triv = FactorMap::to_trivial(pi.source().clone());
        let f = Observable::real(pi.source().clone(), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((cond_exp(&f, &triv).values()[0] - f.mean()).norm() < 1e-15);
    }

    #[test]
    fn disintegration_ratios() {
        let space = FinProbSpace::new(vec![
            ("a".into(), BigRational::new(1.into(), 2.into())),
            ("b".into(), BigRational::new(1.into(), 4.into())),
            ("c".into(), BigRational::new(1.into(), 4.into())),
        ])
        .unwrap();
        let x = Arc::new(FinSystem::new(space, vec![]).unwrap());
        let y = Arc::new(FinSystem::new(FinProbSpace::uniform(["p", "q"]).unwrap(), vec![]).unwrap());
        let pi = FactorMap::new(x, y, vec![0, 1, 1], vec![]).unwrap();
        let fm = disintegrate(&pi);
        assert!(fm.check(&pi));
        let half = BigRational::new(1.into(), 2.into());
        assert_eq!(fm.fibers[1], vec![(1, half.clone()), (2, half)]);
    }

    #[test]
    fn koopman_pulls_back_and_rejects_foreign_permutations() {
        let pi = running();
        let f = Observable::real(pi.source().clone(), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = Permutation::cycle(4);
        assert_eq!(koopman(&t, &f).unwrap().values(), &[c(2.0), c(3.0), c(4.0), c(1.0)]);
        let swap = Permutation::from_images(vec![1, 0, 2, 3]).unwrap();
        assert!(koopman(&swap, &f).is_err());
        assert_eq!(koopman(&Permutation::identity(4), &f).unwrap(), f);
    }
}
