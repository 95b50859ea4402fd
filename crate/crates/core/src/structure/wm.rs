use serde::Serialize;

use crate::error::{FzError, Result};
use crate::ergodic::orbits;
use crate::finsys::{same_system, FactorMap};
use crate::hilbert::{cond_exp, cond_inner, lift, pull_back, Observable};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::relprod::build_relprod;

use super::{element_word, in_l2_span, l2_basis, l2_complement, orbit_modules, to_weighted};

#[derive(Debug, Clone, Serialize)]
pub struct WmFunctionReport {
    pub is_wm: bool,
    /// `min_γ ‖⟨(T^γ)* f, f⟩_{X|Y}‖_{L²(Y)}`.
    pub min_corr: f64,
    /// Group element index attaining the minimum (first in enumeration order).
    pub argmin: usize,
    pub argmin_word: String,
    /// Mean of the correlations over the group.
    pub mean_corr: f64,
}

/// Relative weak mixing of a single function: the minimum over the group of
/// the conditional autocorrelation norm. Requires `E(f|Y) = 0`.
pub fn rel_wm_function(f: &Observable, pi: &FactorMap, tol: f64) -> Result<WmFunctionReport> {
    if !same_system(f.base(), pi.source()) {
        return Err(FzError::Mismatch("observable does not live on the factor's source".into()));
    }
    let mean = cond_exp(f, pi).sup_norm();
    if mean > tol * f.sup_norm().max(1.0) {
        return Err(FzError::Precondition(format!("E(f|Y) is not zero (sup {mean:.3e})")));
    }
    let group = pi.source().group()?;
    let nu = pi.target().space().weights_f64();
    let corrs: Vec<f64> = group
        .iter()
        .map(|g| {
            let c = cond_inner(&pull_back(&g.perm, f), f, pi);
            c.values().iter().zip(nu).map(|(v, w)| w * v.norm_sqr()).sum::<f64>().sqrt()
        })
        .collect();
    let min_corr = corrs.iter().copied().fold(f64::INFINITY, f64::min);
    // ties resolved relative to the minimum so that rescaling f keeps the argmin
    let argmin = corrs.iter().position(|&c| c <= min_corr * (1.0 + 1e-9) + f64::MIN_POSITIVE).unwrap_or(0);
    Ok(WmFunctionReport {
        is_wm: min_corr < tol,
        min_corr,
        argmin,
        argmin_word: element_word(pi.source(), argmin)?,
        mean_corr: corrs.iter().sum::<f64>() / corrs.len() as f64,
    })
}

/// Independent certificate that no nonzero `f` with `E(f|Y) = 0` is weakly
/// mixing in the averaged sense: the diagonal of `X ×_Y X` is invariant, and
/// `⟨f ⊗ f̄, 1_diag⟩ = Σ_x μ(x)²/ν(π x) |f(x)|²` is a positive definite form
/// on `ker E(·|Y)`.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitOracle {
    pub kernel_dim: usize,
    /// Smallest eigenvalue of the diagonal form relative to `‖f‖²` on
    /// `ker E(·|Y)`; `None` when the kernel is zero.
    pub min_ratio: Option<f64>,
    /// True when `WM = {0}` is certified.
    pub wm_trivial: bool,
}

pub fn finite_orbit_oracle(pi: &FactorMap) -> OrbitOracle {
    let sys = pi.source();
    let n = sys.len();
    // ker E(·|Y) = orthocomplement of the lifted Y-indicators
    let lifted: Vec<Observable> = (0..pi.target().len())
        .map(|y| lift(&Observable::indicator(pi.target().clone(), y), pi))
        .collect();
    let ybasis = l2_basis(sys, &lifted);
    let ker = l2_complement(sys, &ybasis);
    if ker.is_empty() {
        return OrbitOracle { kernel_dim: 0, min_ratio: None, wm_trivial: true };
    }
    // in weighted coordinates u = sqrt(μ) f the form is diag(μ_y(x))
    let q = CMatrix::from_columns(&ker.iter().map(to_weighted).collect::<Vec<_>>());
    let mut d = CMatrix::zeros(n, n);
    for x in 0..n {
        d[(x, x)] = pi.cond_weight(x).into();
    }
    let (vals, _) = hermitian_eigen(&(q.adjoint() * d * &q));
    let min_ratio = vals.last().copied().unwrap_or(0.0);
    OrbitOracle { kernel_dim: ker.len(), min_ratio: Some(min_ratio), wm_trivial: min_ratio > 1e-12 }
}

#[derive(Debug, Clone, Serialize)]
pub struct WmExtensionReport {
    pub is_wm: bool,
    /// (a) `WM = AP^⊥` spans `ker E(·|Y)`.
    pub route_wm_span: bool,
    /// (b) `AP = L²(Y)`.
    pub route_ap_is_base: bool,
    /// (c) `Inv(X ×_Y X) = Inv(Y)`.
    pub route_relprod_inv: bool,
    pub kernel_dim: usize,
    pub ap_dim: usize,
    pub wm_dim: usize,
    pub inv_relprod_dim: usize,
    pub inv_base_dim: usize,
    pub oracle: OrbitOracle,
}

/// Relative weak mixing of an extension, decided along three independent
/// routes that must agree.
pub fn rel_wm_extension(pi: &FactorMap) -> Result<WmExtensionReport> {
    let sys = pi.source();
    let n = sys.len();
    let ny = pi.target().len();
    let kernel_dim = n - ny;

    let ap_vectors: Vec<Observable> = orbit_modules(pi)?
        .iter()
        .flat_map(|(_, m)| m.frame().vectors().cloned().collect::<Vec<_>>())
        .collect();
    let ap = l2_basis(sys, &ap_vectors);
    let wm = l2_complement(sys, &ap);

    // (a): WM ⊆ ker E with the right dimension
    let wm_in_kernel = wm.iter().all(|w| cond_exp(w, pi).sup_norm() < 1e-9);
    let route_wm_span = wm_in_kernel && wm.len() == kernel_dim;

    // (b): AP has the dimension of L²(Y) and contains every lifted Y-indicator
    let lifted: Vec<Observable> =
        (0..ny).map(|y| lift(&Observable::indicator(pi.target().clone(), y), pi)).collect();
    let contains_base = lifted.iter().all(|h| in_l2_span(h, &ap));
    let route_ap_is_base = contains_base && ap.len() == ny;

    // (c): orbit counts of T × T on pairs versus S on Y
    let rp = build_relprod(pi)?;
    let inv_relprod_dim = orbits(rp.system()).len();
    let inv_base_dim = orbits(pi.target()).len();
    let route_relprod_inv = inv_relprod_dim == inv_base_dim;

    let oracle = finite_orbit_oracle(pi);
    if route_wm_span != route_ap_is_base || route_ap_is_base != route_relprod_inv {
        return Err(FzError::Equivalence(format!(
            "weak mixing routes disagree: wm-span {route_wm_span}, ap-is-base {route_ap_is_base}, relprod-inv {route_relprod_inv}"
        )));
    }
    Ok(WmExtensionReport {
        is_wm: route_wm_span,
        route_wm_span,
        route_ap_is_base,
        route_relprod_inv,
        kernel_dim,
        ap_dim: ap.len(),
        wm_dim: wm.len(),
        inv_relprod_dim,
        inv_base_dim,
        oracle,
    })
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
    fn function_level() {
        let pi = running();
        let zero = Observable::zeros(pi.source().clone());
        let r = rel_wm_function(&zero, &pi, 1e-9).unwrap();
        assert!(r.is_wm && r.min_corr == 0.0);

        let f = Observable::real(pi.source().clone(), &[1.0, 1.0, -1.0, -1.0]).unwrap();
        let r = rel_wm_function(&f, &pi, 1e-9).unwrap();
        assert!(!r.is_wm);
        assert!((r.min_corr - 1.0).abs() < 1e-12);

        let bad = Observable::real(pi.source().clone(), &[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert!(matches!(rel_wm_function(&bad, &pi, 1e-9), Err(FzError::Precondition(_))));
    }

    #[test]
    fn extension_level() {
        let pi = running();
        let r = rel_wm_extension(&pi).unwrap();
        assert!(!r.is_wm);
        assert_eq!(r.inv_relprod_dim, 2);
        assert_eq!(r.inv_base_dim, 1);
        assert!(r.oracle.wm_trivial && r.oracle.kernel_dim == 2);

        let id = FactorMap::identity(pi.source().clone());
        let r = rel_wm_extension(&id).unwrap();
        assert!(r.is_wm && r.kernel_dim == 0);
    }
}
