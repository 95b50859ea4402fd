//! The invariant factor, ergodicity and orbit averaging.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{FzError, Result};
use crate::finsys::{quotient_by_partition, FactorMap, FinSystem};
use crate::hilbert::{pull_back, Observable};

/// Default iteration cap for [`convex_min_norm_oracle`].
pub const ORACLE_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct InvReport {
    /// Projection onto the system of action orbits (trivial induced action).
    pub inv_factor: FactorMap,
    pub inv_dimension: usize,
    pub ergodic: bool,
}

/// Orbits of the action on atoms, numbered by first atom.
pub fn orbits(sys: &FinSystem) -> Vec<Vec<usize>> {
    let n = sys.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut orbit = vec![start];
        let mut i = 0;
        while i < orbit.len() {
            let x = orbit[i];
            for g in sys.generators() {
                let y = g.perm.apply(x);
                if !seen[y] {
                    seen[y] = true;
                    orbit.push(y);
                }
            }
            i += 1;
        }
        orbit.sort_unstable();
        out.push(orbit);
    }
    out
}

/// The invariant factor `Inv(X)`: the σ-algebra of invariant sets, realized
/// as the quotient by action orbits.
pub fn invariant_factor(sys: &Arc<FinSystem>) -> Result<InvReport> {
    // enumeration is part of the contract, so a cap violation surfaces here
    sys.group()?;
    let members = orbits(sys);
    let mut map = vec![0; sys.len()];
    for (b, m) in members.iter().enumerate() {
        for &x in m {
            map[x] = b;
        }
    }
    let inv_factor = quotient_by_partition(sys, &map, &members)?;
    let inv_dimension = members.len();
    Ok(InvReport { inv_factor, inv_dimension, ergodic: inv_dimension == 1 })
}

/// The uniform group average `(1/|Γ|) Σ_g (T^g)* f`, which is the minimal
/// norm element of the closed convex hull of the orbit of `f`.
pub fn ab_project(f: &Observable) -> Result<Observable> {
    let group = f.base().group()?;
    let mut acc = vec![Complex64::new(0.0, 0.0); f.len()];
    for g in group.iter() {
        for (x, a) in acc.iter_mut().enumerate() {
            *a += f.values()[g.perm.apply(x)];
        }
    }
    let scale = 1.0 / group.len() as f64;
    Observable::new(f.base().clone(), acc.into_iter().map(|v| v * scale).collect())
}

/// Result of the convex-hull minimization.
#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    #[serde(skip)]
    pub point: Observable,
    /// Distinct orbit vectors, as group element indices of a representative.
    pub vertices: Vec<usize>,
    /// Convex weights on `vertices`.
    pub lambda: Vec<f64>,
    /// Final Frank–Wolfe duality gap on `‖·‖²`; the point lies within
    /// `sqrt(gap)` of the minimizer.
    pub gap: f64,
    pub iterations: usize,
}

/// Minimizes `‖Σ λ_g (T^g)* f‖` over the probability simplex by away-step
/// Frank–Wolfe with exact line search, stopping once the duality gap drops
/// below `tol²`.
pub fn convex_min_norm_oracle(f: &Observable, tol: f64) -> Result<OracleResult> {
    convex_min_norm_oracle_with_cap(f, tol, ORACLE_MAX_ITER)
}

pub fn convex_min_norm_oracle_with_cap(f: &Observable, tol: f64, max_iter: usize) -> Result<OracleResult> {
    if !(tol > 0.0) {
        return Err(FzError::Precondition("tolerance must be positive".into()));
    }
    let group = f.base().group()?;
    let mut vertices: Vec<usize> = Vec::new();
    let mut points: Vec<Observable> = Vec::new();
    for (i, g) in group.iter().enumerate() {
        let p = pull_back(&g.perm, f);
        if points.iter().all(|q| q.max_abs_diff(&p) > 0.0) {
            vertices.push(i);
            points.push(p);
        }
    }
    let m = points.len();
    let gram: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| points[i].inner(&points[j]).re).collect()).collect();
    let mut lambda = vec![0.0; m];
    lambda[0] = 1.0;
    // grad = 2 G λ; keep Gλ incrementally
    let mut glam: Vec<f64> = (0..m).map(|i| gram[i][0]).collect();
    let target = tol * tol;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let quad: f64 = (0..m).map(|i| lambda[i] * glam[i]).sum();
        let s = (0..m).min_by(|&a, &b| glam[a].total_cmp(&glam[b])).expect("orbit is nonempty");
        gap = 2.0 * (quad - glam[s]);
        if gap < target {
            break;
        }
        iterations += 1;
        let a = (0..m)
            .filter(|&i| lambda[i] > 0.0)
            .max_by(|&x, &y| glam[x].total_cmp(&glam[y]))
            .expect("support is nonempty");
        let away_gap = 2.0 * (glam[a] - quad);
        // direction d = e_s − λ (toward) or λ − e_a (away)
        let (toward, max_step) = if gap >= away_gap || lambda[a] >= 1.0 {
            (true, 1.0)
        } else {
            (false, lambda[a] / (1.0 - lambda[a]))
        };
        // ‖x + t d‖² is quadratic in t: q(t) = quad + 2 t ⟨x, d⟩ + t² ‖d‖²
        let (lin, dd) = if toward {
            (glam[s] - quad, gram[s][s] - 2.0 * glam[s] + quad)
        } else {
            (quad - glam[a], quad - 2.0 * glam[a] + gram[a][a])
        };
        let t = if dd <= 0.0 { max_step } else { (-lin / dd).clamp(0.0, max_step) };
        if toward {
            for (i, l) in lambda.iter_mut().enumerate() {
                *l *= 1.0 - t;
                if i == s {
                    *l += t;
                }
            }
            for (i, gl) in glam.iter_mut().enumerate() {
                *gl = (1.0 - t) * *gl + t * gram[i][s];
            }
        } else {
            for (i, l) in lambda.iter_mut().enumerate() {
                *l *= 1.0 + t;
                if i == a {
                    *l -= t;
                }
            }
            if t >= max_step {
                lambda[a] = 0.0;
            }
            for (i, gl) in glam.iter_mut().enumerate() {
                *gl = (1.0 + t) * *gl - t * gram[i][a];
            }
        }
    }
    if gap >= target {
        return Err(FzError::NoConvergence(format!(
            "Frank–Wolfe gap {gap:.3e} above {target:.3e} after {max_iter} iterations"
        )));
    }
    let mut point = Observable::zeros(f.base().clone());
    for (l, p) in lambda.iter().zip(&points) {
        point = point.add(&p.scale(Complex64::new(*l, 0.0)));
    }
    Ok(OracleResult { point, vertices, lambda, gap, iterations })
}
