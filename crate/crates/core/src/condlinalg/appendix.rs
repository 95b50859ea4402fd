use num_complex::Complex64;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FzError, Result};
use crate::finsys::{same_system, FactorMap};
use crate::hilbert::{cond_inner, cond_norms, Observable};
use crate::linalg::{orthonormal_columns, right_singular, spectral_norm, CMatrix, CVector};
use crate::relprod::{kernel_apply, Kernel};

use super::frame::CondModule;

/// Slack on the `σ ≥ ε` keep rule, absorbing eigen-solver roundoff.
const KEEP_SLACK: f64 = 1e-10;

/// Result of the normalization lemma.
#[derive(Debug, Clone)]
pub struct Truncation {
    /// `g = f / ‖f‖_{X|Y} · 1_E`, with `⟨g, g⟩ = 1_E`.
    pub g: Observable,
    /// `E = {0 < ‖f‖_{X|Y} ≤ N}` as factor atom indices.
    pub support: Vec<usize>,
    pub threshold: f64,
    /// `‖f − ⟨f, g⟩ g‖_{L²(X)}`.
    pub residual: f64,
}

/// Picks the smallest integer level `N` whose tail `‖f 1_{‖f‖ > N}‖` is below
/// `ε`, then normalizes `f` fiberwise on `E = {0 < ‖f‖ ≤ N}`.
pub fn normalize_truncate(f: &Observable, pi: &FactorMap, eps: f64) -> Result<Truncation> {
    if !(eps > 0.0) {
        return Err(FzError::Precondition("ε must be positive".into()));
    }
    if !same_system(f.base(), pi.source()) {
        return Err(FzError::Mismatch("observable does not live on the factor's source".into()));
    }
    let norms = cond_norms(f, pi);
    let nu = pi.target().space().weights_f64();
    let positive: Vec<f64> = norms.iter().copied().filter(|&n| n > 0.0).collect();
    if positive.is_empty() {
        return Err(FzError::Precondition("f must be nonzero".into()));
    }
    let floor = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let tail = |n: f64| -> f64 {
        norms.iter().zip(nu).filter(|(&v, _)| v > n).map(|(&v, &w)| w * v * v).sum::<f64>().sqrt()
    };
    let mut levels: Vec<f64> = std::iter::once(1.0).chain(positive.iter().map(|n| n.ceil().max(1.0))).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let threshold = levels
        .into_iter()
        .filter(|&n| n >= floor)
        .find(|&n| tail(n) < eps)
        .unwrap_or_else(|| positive.iter().copied().fold(0.0, f64::max));
    let support: Vec<usize> = (0..norms.len()).filter(|&y| norms[y] > 0.0 && norms[y] <= threshold).collect();
    let mut g = Observable::zeros(pi.source().clone());
    for &y in &support {
        for &x in pi.fiber(y) {
            g.values_mut()[x] = f.values()[x] / norms[y];
        }
    }
    let coef = crate::hilbert::lift(&cond_inner(f, &g, pi), pi);
    let residual = f.sub(&g.mul(&coef)).norm();
    Ok(Truncation { g, support, threshold, residual })
}

/// `B_y = D^{1/2} K_y D^{1/2}` with `D = diag(μ_y)`: the fiber operator in
/// coordinates where `L²(μ_y)` is the standard inner product.
fn weighted_block(k: &Kernel, y: usize) -> CMatrix {
    let pi = k.relprod().factor();
    let s: Vec<f64> = pi.fiber(y).iter().map(|&x| pi.cond_weight(x).sqrt()).collect();
    let mut b = k.block(y).clone();
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            b[(i, j)] *= s[i] * s[j];
        }
    }
    b
}

/// Orthonormal basis, in weighted coordinates, of the subspace over `y`.
fn subspace_basis(module: Option<&CondModule>, pi: &FactorMap, y: usize) -> CMatrix {
    let fiber = pi.fiber(y);
    let m = fiber.len();
    let Some(module) = module else {
        return CMatrix::identity(m, m);
    };
    let cols: Vec<CVector> = module
        .frame()
        .fiber_vectors(y)
        .into_iter()
        .map(|v| CVector::from_iterator(m, v.iter().zip(fiber).map(|(c, &x)| c * pi.cond_weight(x).sqrt())))
        .collect();
    let basis = orthonormal_columns(&cols, 1e-9);
    if basis.is_empty() {
        CMatrix::zeros(m, 0)
    } else {
        CMatrix::from_columns(&basis)
    }
}

fn check_module(k: &Kernel, module: Option<&CondModule>) -> Result<()> {
    if k.blocks().iter().any(|b| b.iter().any(|v| !v.re.is_finite() || !v.im.is_finite())) {
        return Err(FzError::Precondition("kernel has non-finite entries".into()));
    }
    if let Some(m) = module {
        let pi = k.relprod().factor();
        if !same_system(m.factor().source(), pi.source()) || !same_system(m.factor().target(), pi.target()) {
            return Err(FzError::Mismatch("kernel and module live over different factors".into()));
        }
    }
    Ok(())
}

/// Both suprema of `‖K ∗_Y f‖_{L²(X)}`: over the unit ball, and over `f` with
/// `⟨f, f⟩_{X|Y} = 1_E` for some nonempty `E`.
#[derive(Debug, Clone, Serialize)]
pub struct OpNormReport {
    pub sup_unit_ball: f64,
    pub sup_cond_normalized: f64,
    /// Spectral norm of each weighted fiber block, restricted to the subspace.
    pub fiber_norms: Vec<f64>,
    /// The maximizing set `E` for the conditionally normalized supremum.
    pub best_support: Vec<usize>,
}

pub fn opnorm_diagnostic(k: &Kernel, module: Option<&CondModule>) -> Result<OpNormReport> {
    check_module(k, module)?;
    let pi = k.relprod().factor();
    let ny = pi.target().len();
    let nu = pi.target().space().weights_f64();
    let mut fiber_norms = vec![0.0; ny];
    let mut available = Vec::new();
    for (y, norm) in fiber_norms.iter_mut().enumerate() {
        let q = subspace_basis(module, pi, y);
        if q.ncols() > 0 {
            available.push(y);
            *norm = spectral_norm(&(weighted_block(k, y) * q));
        }
    }
    let sup_unit_ball = available.iter().map(|&y| fiber_norms[y]).fold(0.0, f64::max);
    // ‖K f‖² = Σ_{y ∈ E} ν(y) ‖B_y u_y‖², maximized by top singular vectors
    let value = |set: &[usize]| set.iter().map(|&y| nu[y] * fiber_norms[y] * fiber_norms[y]).sum::<f64>().sqrt();
    let (sup_cond_normalized, best_support) = if available.len() <= 16 {
        let mut best = (0.0, Vec::new());
        for mask in 1u32..(1u32 << available.len()) {
            let set: Vec<usize> =
                available.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &y)| y).collect();
            let v = value(&set);
            if v > best.0 || (best.1.is_empty() && v >= best.0) {
                best = (v, set);
            }
        }
        best
    } else {
        // the objective is monotone in E
        (value(&available), available.clone())
    };
    Ok(OpNormReport { sup_unit_ball, sup_cond_normalized, fiber_norms, best_support })
}

/// Converts a weighted-coordinate vector on fiber `y` back to function values.
fn write_fiber(out: &mut Observable, pi: &FactorMap, y: usize, u: &CVector) {
    for (i, &x) in pi.fiber(y).iter().enumerate() {
        out.values_mut()[x] = u[i] / pi.cond_weight(x).sqrt();
    }
}

/// Rotates `v` so that its largest entry is real and positive.
fn fix_phase(v: &mut CVector) {
    let mut best = Complex64::zero();
    for c in v.iter() {
        if c.norm() > best.norm() + 1e-12 {
            best = *c;
        }
    }
    if best.norm() > 0.0 {
        let phase = best.conj() / best.norm();
        for c in v.iter_mut() {
            *c *= phase;
        }
    }
}

/// Finite conditionally orthonormal `M` such that `‖K ∗_Y f‖ ≤ ε ‖f‖` for
/// every `f` in the subspace conditionally orthogonal to `M`. Per fiber, keeps
/// the right singular vectors of the restricted operator with `σ ≥ ε`; the
/// j-th kept vectors of all fibers are bundled into one observable.
pub fn cond_orthonormal_extract(k: &Kernel, module: Option<&CondModule>, eps: f64) -> Result<Vec<Observable>> {
    if !(eps > 0.0) {
        return Err(FzError::Precondition("ε must be positive".into()));
    }
    check_module(k, module)?;
    let pi = k.relprod().factor();
    let mut per_fiber: Vec<Vec<CVector>> = Vec::with_capacity(pi.target().len());
    for y in 0..pi.target().len() {
        let q = subspace_basis(module, pi, y);
        if q.ncols() == 0 {
            per_fiber.push(Vec::new());
            continue;
        }
        let (sigma, v) = right_singular(&(weighted_block(k, y) * &q));
        let kept = sigma
            .iter()
            .enumerate()
            .take_while(|(_, &s)| s >= eps - KEEP_SLACK)
            .map(|(j, _)| {
                let mut u = &q * v.column(j);
                fix_phase(&mut u);
                u
            })
            .collect();
        per_fiber.push(kept);
    }
    let depth = per_fiber.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::with_capacity(depth);
    for j in 0..depth {
        let mut f = Observable::zeros(pi.source().clone());
        for (y, vecs) in per_fiber.iter().enumerate() {
            if let Some(u) = vecs.get(j) {
                write_fiber(&mut f, pi, y, u);
            }
        }
        out.push(f);
    }
    Ok(out)
}

/// Top eigenpair of a Hermitian positive semidefinite matrix by power
/// iteration from a seeded start vector.
fn power_top(a: &CMatrix, rng: &mut ChaCha8Rng) -> (f64, CVector) {
    let n = a.nrows();
    let mut v = CVector::from_iterator(n, (0..n).map(|_| Complex64::new(rng.random::<f64>() + 0.5, rng.random::<f64>() - 0.5)));
    v /= Complex64::new(v.norm(), 0.0);
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w = a * &v;
        let nw = w.norm();
        if nw < 1e-300 {
            return (0.0, v);
        }
        let next = w / Complex64::new(nw, 0.0);
        let l = next.dotc(&(a * &next)).re;
        let done = (l - lambda).abs() <= 1e-15 * l.abs().max(1.0) && (&next - &v).norm() < 1e-12;
        v = next;
        lambda = l;
        if done {
            break;
        }
    }
    (lambda.max(0.0), v)
}

/// The greedy norm-maximizer loop: repeatedly pick, on every fiber where the
/// current restricted operator still has norm `≥ ε`, a unit maximizer, and
/// remove it from the subspace. Slow; used to cross-check
/// [`cond_orthonormal_extract`].
pub fn greedy_orthonormal_extract(k: &Kernel, module: Option<&CondModule>, eps: f64) -> Result<Vec<Observable>> {
    if !(eps > 0.0) {
        return Err(FzError::Precondition("ε must be positive".into()));
    }
    check_module(k, module)?;
    let pi = k.relprod().factor();
    let ny = pi.target().len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut bases: Vec<CMatrix> = (0..ny).map(|y| subspace_basis(module, pi, y)).collect();
    let blocks: Vec<CMatrix> = (0..ny).map(|y| weighted_block(k, y)).collect();
    let mut out = Vec::new();
    loop {
        let mut f = Observable::zeros(pi.source().clone());
        let mut any = false;
        for y in 0..ny {
            let q = &bases[y];
            if q.ncols() == 0 {
                continue;
            }
            let c = &blocks[y] * q;
            let (l, v) = power_top(&(c.adjoint() * &c), &mut rng);
            if l.sqrt() < eps - KEEP_SLACK {
                continue;
            }
            any = true;
            let mut u = q * &v;
            fix_phase(&mut u);
            write_fiber(&mut f, pi, y, &u);
            // orthogonal complement of v inside the current subspace
            let cols: Vec<CVector> = (0..q.ncols())
                .map(|j| {
                    let e = q.column(j).into_owned();
                    let coef = u.dotc(&e);
                    e - &u * coef
                })
                .collect();
            let rest = orthonormal_columns(&cols, 1e-9);
            let keep = q.ncols() - 1;
            bases[y] = if keep == 0 || rest.is_empty() {
                CMatrix::zeros(q.nrows(), 0)
            } else {
                CMatrix::from_columns(&rest[..keep.min(rest.len())])
            };
        }
        if !any {
            break;
        }
        out.push(f);
    }
    Ok(out)
}

/// Largest deviation of a family from conditional orthonormality:
/// `⟨f, f⟩ ∈ {0, 1}` pointwise and pairwise conditional inner products zero.
pub fn cond_orthonormality_defect(family: &[Observable], pi: &FactorMap) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, f) in family.iter().enumerate() {
        for n in cond_norms(f, pi) {
            let n2 = n * n;
            worst = worst.max(n2.min((n2 - 1.0).abs()));
        }
        for g in &family[i + 1..] {
            worst = worst.max(cond_inner(f, g, pi).sup_norm());
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct BesselReport {
    /// Per X-atom: `(Σ_f |(K ∗ f)(x)|², ‖K(x, ·)‖²_{X|Y}(π(x)))`.
    pub per_atom: Vec<(f64, f64)>,
    /// Largest `lhs − rhs` over atoms.
    pub max_excess: f64,
    pub holds: bool,
    /// `Σ_f ‖K ∗ f‖²_{L²(X)}`.
    pub total: f64,
}

/// Pointwise Bessel inequality for a conditionally orthonormal family.
pub fn bessel_check(k: &Kernel, family: &[Observable], tol: f64) -> Result<BesselReport> {
    let pi = k.relprod().factor();
    for f in family {
        if !same_system(f.base(), pi.source()) {
            return Err(FzError::Mismatch("family member does not live on the kernel's system".into()));
        }
    }
    let defect = cond_orthonormality_defect(family, pi);
    if defect > tol {
        return Err(FzError::Precondition(format!("family is not conditionally orthonormal (defect {defect:.3e})")));
    }
    let images = family.iter().map(|f| kernel_apply(k, f)).collect::<Result<Vec<_>>>()?;
    let mut per_atom = Vec::with_capacity(pi.source().len());
    for y in 0..pi.target().len() {
        let block = k.block(y);
        for (i, &x) in pi.fiber(y).iter().enumerate() {
            let lhs: f64 = images.iter().map(|g| g.values()[x].norm_sqr()).sum();
            let rhs: f64 =
                pi.fiber(y).iter().enumerate().map(|(j, &x2)| pi.cond_weight(x2) * block[(i, j)].norm_sqr()).sum();
            per_atom.push((x, lhs, rhs));
        }
    }
    per_atom.sort_by_key(|p| p.0);
    let per_atom: Vec<(f64, f64)> = per_atom.into_iter().map(|(_, l, r)| (l, r)).collect();
    let max_excess = per_atom.iter().map(|(l, r)| l - r).fold(f64::NEG_INFINITY, f64::max);
    let total = images.iter().map(|g| g.norm().powi(2)).sum();
    Ok(BesselReport { holds: max_excess <= tol, per_atom, max_excess, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsys::{FinProbSpace, FinSystem};
    use crate::relprod::build_relprod;
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
    fn truncation_cases() {
        let pi = running();
        let f = Observable::real(pi.source().clone(), &[2.0, 2.0, 2.0, 2.0]).unwrap();
        let t = normalize_truncate(&f, &pi, 1e-3).unwrap();
        assert_eq!(t.support, vec![0, 1]);
        assert!(t.residual < 1e-12 && (t.g.values()[0].re - 1.0).abs() < 1e-12);

        let f = Observable::real(pi.source().clone(), &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(normalize_truncate(&f, &pi, 0.1).unwrap().support, vec![0]);

        let f = Observable::real(pi.source().clone(), &[1.0, 1e6, 1.0, 1e6]).unwrap();
        let t = normalize_truncate(&f, &pi, 1e-6).unwrap();
        assert_eq!(t.support, vec![0, 1]);
        assert!(t.threshold >= 1e6);

        let zero = Observable::zeros(pi.source().clone());
        assert!(matches!(normalize_truncate(&zero, &pi, 0.1), Err(FzError::Precondition(_))));
    }

    #[test]
    fn opnorm_examples() {
        let pi = running();
        let rp = build_relprod(&pi).unwrap();
        let r = opnorm_diagnostic(&Kernel::constant(&rp, Complex64::new(1.0, 0.0)), None).unwrap();
        assert!((r.sup_unit_ball - 1.0).abs() < 1e-12 && (r.sup_cond_normalized - 1.0).abs() < 1e-12);
        let r = opnorm_diagnostic(&Kernel::zeros(&rp), None).unwrap();
        assert_eq!((r.sup_unit_ball, r.sup_cond_normalized), (0.0, 0.0));
        // constant kernel on y1, zero on y2
        let k = Kernel::from_fn(&rp, |x, _| Complex64::new(if pi.image(x) == 0 { 1.0 } else { 0.0 }, 0.0));
        let r = opnorm_diagnostic(&k, None).unwrap();
        assert!((r.sup_unit_ball - 1.0).abs() < 1e-12);
        assert!((r.sup_cond_normalized - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn extraction_examples() {
        let pi = running();
        let rp = build_relprod(&pi).unwrap();
        let m = cond_orthonormal_extract(&Kernel::constant(&rp, Complex64::new(1.0, 0.0)), None, 0.5).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m[0].values().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-9));
        assert!(cond_orthonormal_extract(&Kernel::zeros(&rp), None, 0.5).unwrap().is_empty());
        let small = Kernel::constant(&rp, Complex64::new(0.1, 0.0));
        assert!(cond_orthonormal_extract(&small, None, 0.5).unwrap().is_empty());
        let g = greedy_orthonormal_extract(&Kernel::constant(&rp, Complex64::new(1.0, 0.0)), None, 0.5).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn bessel_parseval_case() {
        let pi = running();
        let rp = build_relprod(&pi).unwrap();
        let k = Kernel::constant(&rp, Complex64::new(1.0, 0.0));
        let basis: Vec<Observable> = [[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, -1.0, -1.0]]
            .iter()
            .map(|v| Observable::real(pi.source().clone(), v).unwrap())
            .collect();
        let r = bessel_check(&k, &basis, 1e-9).unwrap();
        assert!(r.holds);
        assert!(r.per_atom.iter().all(|(l, rr)| (l - rr).abs() < 1e-12));
        let r = bessel_check(&k, &[], 1e-9).unwrap();
        assert!(r.holds && r.total == 0.0);
        let bad = Observable::real(pi.source().clone(), &[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(bessel_check(&k, &[bad], 1e-9), Err(FzError::Precondition(_))));
    }
}
