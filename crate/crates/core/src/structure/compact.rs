use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::condlinalg::{gram_schmidt, CondModule};
use crate::error::{FzError, Result};
use crate::finsys::FactorMap;
use crate::hilbert::{cond_inner, cond_norms, lift, pull_back, Observable};
use crate::linalg::{hermitian_eigen, CMatrix, CVector, SpanBuilder};
use crate::relprod::{build_relprod, invariant_kernels, Kernel};

use super::{orbit_modules, to_weighted, SPAN_TOL};

/// The six characterizations of relative compactness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Criterion {
    /// Images of invariant kernels span, conditionally.
    I,
    /// Finitely generated invariant modules span, conditionally.
    II,
    /// Orbits admit finite conditional ε-nets.
    III,
    /// Images of invariant kernels span `L²(X)`.
    IPrime,
    /// Finitely generated invariant modules span `L²(X)`.
    IIPrime,
    /// Orbits are totally bounded in `L²(X)`.
    IIIPrime,
}

impl Criterion {
    pub const ALL: [Criterion; 6] =
        [Criterion::I, Criterion::II, Criterion::III, Criterion::IPrime, Criterion::IIPrime, Criterion::IIIPrime];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.to_string() == s)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::I => "i",
            Criterion::II => "ii",
            Criterion::III => "iii",
            Criterion::IPrime => "i'",
            Criterion::IIPrime => "ii'",
            Criterion::IIIPrime => "iii'",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub criterion: String,
    pub holds: bool,
    pub witness: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompactnessReport {
    pub criteria: Vec<CriterionOutcome>,
    pub agreement: bool,
    pub relatively_compact: bool,
    pub fiber_sizes: Vec<usize>,
    pub invariant_kernel_dim: usize,
    /// Per factor atom, the rank of `{K ∗ f}` restricted to the fiber.
    pub kernel_image_rank: Vec<usize>,
    pub kernel_image_global_rank: usize,
    /// Conditional dimension of the sum of orbit-generated modules.
    pub module_cdim: Vec<usize>,
    pub module_global_rank: usize,
    pub module_count: usize,
    /// `(ε, largest net size, largest conditional covering error)`.
    pub nets: Vec<(f64, usize, f64)>,
    pub largest_orbit: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub injected_fault: Option<String>,
}

impl CompactnessReport {
    pub fn holds(&self, c: Criterion) -> bool {
        let key = c.to_string();
        self.criteria.iter().any(|o| o.criterion == key && o.holds)
    }

    /// Fails with [`FzError::Equivalence`] unless all six criteria agree.
    pub fn require_agreement(&self) -> Result<()> {
        if self.agreement {
            return Ok(());
        }
        let summary: Vec<String> = self.criteria.iter().map(|o| format!("{}={}", o.criterion, o.holds)).collect();
        Err(FzError::Equivalence(format!("compactness criteria disagree: {}", summary.join(", "))))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ClassifyOptions {
    /// Flips the verdict of one criterion; used to exercise the disagreement path.
    pub fault: Option<Criterion>,
    /// ε values for the net criterion.
    pub epsilons: Vec<f64>,
}

impl ClassifyOptions {
    pub fn new() -> Self {
        Self { fault: None, epsilons: vec![1.0, 0.5, 0.25] }
    }
}

pub fn classify_compact(pi: &FactorMap) -> Result<CompactnessReport> {
    classify_compact_with(pi, &ClassifyOptions::new())
}

/// Evaluates all six characterizations of relative compactness independently.
pub fn classify_compact_with(pi: &FactorMap, opts: &ClassifyOptions) -> Result<CompactnessReport> {
    let sys = pi.source();
    let n = sys.len();
    let fiber_sizes: Vec<usize> = pi.fibers().iter().map(Vec::len).collect();

    // (i), (i'): images of the invariant kernels. K ∗ 1_x is the x-th column of
    // K's fiber block scaled by μ_y(x), supported on the fiber of x.
    let rp = build_relprod(pi)?;
    let kernels = invariant_kernels(&rp)?;
    let mut per_fiber: Vec<SpanBuilder> = fiber_sizes.iter().map(|&m| SpanBuilder::new(m, SPAN_TOL)).collect();
    let mut global = SpanBuilder::new(n, SPAN_TOL);
    for k in &kernels {
        for x in 0..n {
            let img = crate::relprod::kernel_apply(k, &Observable::indicator(sys.clone(), x))?;
            let y = pi.image(x);
            let local = CVector::from_iterator(fiber_sizes[y], pi.fiber(y).iter().map(|&x2| img.values()[x2]));
            per_fiber[y].push(&local);
            global.push(&to_weighted(&img));
        }
    }
    let kernel_image_rank: Vec<usize> = per_fiber.iter().map(SpanBuilder::rank).collect();
    let crit_i = kernel_image_rank == fiber_sizes;
    let kernel_image_global_rank = global.rank();
    let crit_i_prime = kernel_image_global_rank == n;

    // (ii), (ii'): orbit-generated finitely generated invariant modules
    let modules = orbit_modules(pi)?;
    let mut all_invariant = true;
    let mut frame_vectors: Vec<Observable> = Vec::new();
    for (_, m) in &modules {
        all_invariant &= m.is_invariant(1e-9)?;
        frame_vectors.extend(m.frame().vectors().cloned());
    }
    let module_cdim = crate::condlinalg::cdim(&gram_schmidt(&frame_vectors, pi));
    let crit_ii = all_invariant && module_cdim == fiber_sizes;
    let mut span = SpanBuilder::new(n, SPAN_TOL);
    for v in &frame_vectors {
        span.push(&to_weighted(v));
    }
    let module_global_rank = span.rank();
    let crit_ii_prime = all_invariant && module_global_rank == n;

    // (iii): finite conditional ε-nets, uniform over the group; (iii'): the
    // orbit itself is a finite net in L²(X)
    let group = sys.group()?;
    let mut nets: Vec<(f64, usize, f64)> = opts.epsilons.iter().map(|&e| (e, 0, 0.0)).collect();
    let mut crit_iii = true;
    let mut crit_iii_prime = true;
    let mut largest_orbit = 0;
    for x in 0..n {
        let f = Observable::indicator(sys.clone(), x);
        let orbit: Vec<Observable> = group.iter().map(|g| pull_back(&g.perm, &f)).collect();
        let mut distinct: Vec<&Observable> = Vec::new();
        for h in &orbit {
            if distinct.iter().all(|d| d.max_abs_diff(h) > 0.0) {
                distinct.push(h);
            }
        }
        largest_orbit = largest_orbit.max(distinct.len());
        for h in &orbit {
            let nearest = distinct.iter().map(|d| d.sub(h).norm()).fold(f64::INFINITY, f64::min);
            crit_iii_prime &= nearest < opts.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
        }
        let module = CondModule::from_generators(orbit.clone(), pi);
        for (slot, &eps) in nets.iter_mut().zip(&opts.epsilons) {
            let (size, err) = lattice_net(&orbit, &module, pi, eps);
            slot.1 = slot.1.max(size);
            slot.2 = slot.2.max(err);
            crit_iii &= err < eps;
        }
    }

    let mut verdicts = [
        (Criterion::I, crit_i, format!("per-fiber image rank {kernel_image_rank:?} of {} invariant kernels", kernels.len())),
        (Criterion::II, crit_ii, format!("module cdim {module_cdim:?} from {} orbit modules", modules.len())),
        (Criterion::III, crit_iii, format!("lattice nets {nets:?}")),
        (Criterion::IPrime, crit_i_prime, format!("global image rank {kernel_image_global_rank} of {n}")),
        (Criterion::IIPrime, crit_ii_prime, format!("global module rank {module_global_rank} of {n}")),
        (Criterion::IIIPrime, crit_iii_prime, format!("orbits of size ≤ {largest_orbit} are their own nets")),
    ];
    if let Some(fault) = opts.fault {
        for v in verdicts.iter_mut().filter(|v| v.0 == fault) {
            v.1 = !v.1;
        }
    }
    let criteria: Vec<CriterionOutcome> = verdicts
        .into_iter()
        .map(|(c, holds, witness)| CriterionOutcome { criterion: c.to_string(), holds, witness })
        .collect();
    let agreement = criteria.iter().all(|c| c.holds == criteria[0].holds);
    Ok(CompactnessReport {
        relatively_compact: agreement && criteria[0].holds,
        agreement,
        criteria,
        fiber_sizes,
        invariant_kernel_dim: kernels.len(),
        kernel_image_rank,
        kernel_image_global_rank,
        module_cdim,
        module_global_rank,
        module_count: modules.len(),
        nets,
        largest_orbit,
        injected_fault: opts.fault.map(|c| c.to_string()),
    })
}

/// Rounds the frame coefficients of every orbit element to a lattice of
/// spacing `ε / max(2, sqrt(2d))`, which moves each element by at most `ε/2`
/// in conditional norm. Returns the number of distinct lattice points used
/// and the largest conditional covering error.
fn lattice_net(orbit: &[Observable], module: &CondModule, pi: &FactorMap, eps: f64) -> (usize, f64) {
    let frame = module.frame();
    let d = module.cdim().into_iter().max().unwrap_or(0).max(1) as f64;
    let spacing = eps / (2.0f64).max((2.0 * d).sqrt());
    let round = |v: f64| (v / spacing).round() * spacing;
    let mut points: Vec<Observable> = Vec::new();
    let mut worst: f64 = 0.0;
    for h in orbit {
        let mut approx = Observable::zeros(pi.source().clone());
        for e in frame.vectors() {
            let coef = cond_inner(h, e, pi).map(|c| Complex64::new(round(c.re), round(c.im)));
            approx = approx.add(&e.mul(&lift(&coef, pi)));
        }
        let err = cond_norms(&h.sub(&approx), pi).into_iter().fold(0.0, f64::max);
        worst = worst.max(err);
        if points.iter().all(|p| p.max_abs_diff(&approx) > 1e-12) {
            points.push(approx);
        }
    }
    (points.len(), worst)
}

/// Range of the spectral projection `1_{[ε, ‖K‖]}(K ∗_Y)` as a module. Kernels
/// that are not fiberwise Hermitian are replaced by `K K*`, whose spectral
/// projections have invariant ranges as well; the threshold then applies to
/// singular values.
pub fn spectral_projection(k: &Kernel, eps: f64) -> Result<CondModule> {
    if !(eps > 0.0) {
        return Err(FzError::Precondition("ε must be positive".into()));
    }
    if k.blocks().iter().any(|b| b.iter().any(|v| !v.re.is_finite() || !v.im.is_finite())) {
        return Err(FzError::Precondition("kernel has non-finite entries".into()));
    }
    let defect = k.invariance_defect();
    if defect > 1e-9 {
        return Err(FzError::Precondition(format!("kernel is not invariant (defect {defect:.3e})")));
    }
    let pi = k.relprod().factor();
    let mut per_fiber: Vec<Vec<CVector>> = Vec::new();
    for y in 0..pi.target().len() {
        let fiber = pi.fiber(y);
        let s: Vec<f64> = fiber.iter().map(|&x| pi.cond_weight(x).sqrt()).collect();
        let mut b = k.block(y).clone();
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                b[(i, j)] *= s[i] * s[j];
            }
        }
        let hermitian = (&b - b.adjoint()).norm() <= 1e-12 * b.norm().max(1.0);
        let (vals, vecs): (Vec<f64>, CMatrix) = if hermitian {
            let (v, m) = hermitian_eigen(&b);
            (v.into_iter().map(f64::abs).collect(), m)
        } else {
            let (v, m) = hermitian_eigen(&(&b * b.adjoint()));
            (v.into_iter().map(|l| l.max(0.0).sqrt()).collect(), m)
        };
        let kept = (0..vals.len())
            .filter(|&j| vals[j] >= eps - 1e-10)
            .map(|j| {
                let u = vecs.column(j);
                CVector::from_iterator(fiber.len(), (0..fiber.len()).map(|i| u[i] / s[i]))
            })
            .collect();
        per_fiber.push(kept);
    }
    let depth = per_fiber.iter().map(Vec::len).max().unwrap_or(0);
    let mut gens = Vec::with_capacity(depth);
    for j in 0..depth {
        let mut f = Observable::zeros(pi.source().clone());
        for (y, vecs) in per_fiber.iter().enumerate() {
            if let Some(v) = vecs.get(j) {
                for (i, &x) in pi.fiber(y).iter().enumerate() {
                    f.values_mut()[x] = v[i];
                }
            }
        }
        gens.push(f);
    }
    let module = CondModule::from_generators(gens, pi);
    if !module.is_invariant(1e-8)? {
        return Err(FzError::Equivalence("spectral range of an invariant kernel is not invariant".into()));
    }
    Ok(module)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsys::{FinProbSpace, FinSystem};
    use std::sync::Arc;

    fn running() -> FactorMap {
        let x = Arc::new(
            FinSystem::from_images(FinProbSpace::uniform(["x1", "x2", "x3", "x4"]).unwrap(), vec![("T", vec![1, 2, 3, 0])])
                .unwrap(),
        );
        let y = Arc::new(FinSystem::from_images(FinProbSpace::uniform(["y1", "y2"]).unwrap(), vec![("S", vec![1, 0])]).unwrap());
        FactorMap::new(x, y, vec![0, 1, 0, 1], vec![0]).unwrap()
    }

    #[test]
    fn running_example_is_compact() {
        let pi = running();
        let r = classify_compact(&pi).unwrap();
        assert!(r.agreement && r.relatively_compact, "{r:?}");
        assert_eq!(r.invariant_kernel_dim, 2);
        assert_eq!(r.kernel_image_global_rank, 4);
        let id = FactorMap::identity(pi.source().clone());
        assert!(classify_compact(&id).unwrap().relatively_compact);
    }

    #[test]
    fn injected_fault_breaks_agreement() {
        let pi = running();
        let opts = ClassifyOptions { fault: Some(Criterion::IIIPrime), ..ClassifyOptions::new() };
        let r = classify_compact_with(&pi, &opts).unwrap();
        assert!(!r.agreement);
        assert!(matches!(r.require_agreement(), Err(FzError::Equivalence(_))));
    }

    #[test]
    fn spectral_ranges() {
        let pi = running();
        let rp = build_relprod(&pi).unwrap();
        let m = spectral_projection(&Kernel::constant(&rp, Complex64::new(1.0, 0.0)), 0.5).unwrap();
        assert_eq!(m.cdim(), vec![1, 1]);
        let m = spectral_projection(&Kernel::constant(&rp, Complex64::new(1.0, 0.0)), 2.0).unwrap();
        assert_eq!(m.cdim(), vec![0, 0]);
        let m = spectral_projection(&Kernel::diagonal(&rp), 0.25).unwrap();
        assert_eq!(m.cdim(), vec![2, 2]);
    }
}
