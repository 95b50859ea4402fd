use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::ergodic::orbits;
use crate::finsys::{factor_from_functions, FactorMap, FinSystem};
use crate::hilbert::{lift, Observable};
use crate::linalg::{hermitian_eigen, CMatrix};

use super::wm::{finite_orbit_oracle, OrbitOracle};
use super::{in_l2_span, l2_basis, l2_complement, orbit_modules};

/// Atoms are identified when all generating functions agree within this.
const SEPARATION_TOL: f64 = 1e-7;

/// The factor generated by the almost periodic functions, sitting between
/// `X` and `Y`.
#[derive(Debug, Clone)]
pub struct ApFactor {
    pub z: Arc<FinSystem>,
    pub phi: FactorMap,
    pub psi: FactorMap,
    /// Spanning functions of the AP part used to generate `Z`.
    pub functions: Vec<Observable>,
    /// Set when a rank cap produced no new functions and the uncapped AP part
    /// was used instead.
    pub rank_cap_relaxed: bool,
}

/// `X → Z → Y` where `Z` is generated by the almost periodic functions of
/// `X` relative to `Y` (only those in invariant modules of conditional
/// dimension at most `max_rank`, when given).
pub fn ap_factor(pi: &FactorMap, max_rank: Option<usize>) -> Result<ApFactor> {
    let sys = pi.source();
    let lifted: Vec<Observable> =
        (0..pi.target().len()).map(|y| lift(&Observable::indicator(pi.target().clone(), y), pi)).collect();
    let uncapped = || -> Result<Vec<Observable>> {
        Ok(orbit_modules(pi)?.iter().flat_map(|(_, m)| m.frame().vectors().cloned().collect::<Vec<_>>()).collect())
    };
    let (mut functions, mut rank_cap_relaxed) = match max_rank {
        Some(d) if d < pi.max_fiber_len() => (bounded_rank_functions(pi, d)?, false),
        _ => (uncapped()?, false),
    };
    let mut phi = generated_factor(sys, &functions, &lifted)?;
    if max_rank.is_some() && phi.target().len() == pi.target().len() && !pi.is_isomorphism() {
        functions = uncapped()?;
        rank_cap_relaxed = true;
        phi = generated_factor(sys, &functions, &lifted)?;
    }
    let z = phi.target().clone();
    let mut zmap = vec![0; z.len()];
    for (x, &zi) in phi.map().iter().enumerate() {
        zmap[zi] = pi.image(x);
    }
    let psi = FactorMap::new(z.clone(), pi.target().clone(), zmap, pi.gen_map().to_vec())?;
    Ok(ApFactor { z, phi, psi, functions, rank_cap_relaxed })
}

fn generated_factor(sys: &Arc<FinSystem>, functions: &[Observable], lifted: &[Observable]) -> Result<FactorMap> {
    let mut all = functions.to_vec();
    all.extend(lifted.iter().cloned());
    factor_from_functions(sys, &all, SEPARATION_TOL)
}

/// Functions spanning the invariant modules of conditional dimension `≤ d`.
///
/// Over each orbit of `Y`, an invariant module is determined by its fiber at
/// a base point `y0`, which must be invariant under the stabilizer `H` of
/// `y0`. The largest such module of rank `≤ d` is the sum of the isotypic
/// components of `H` on the fiber whose irreducibles have dimension `≤ d`.
/// Those components are read off the eigenspaces of a random Hermitian
/// element of the commutant, then transported along the orbit.
fn bounded_rank_functions(pi: &FactorMap, d: usize) -> Result<Vec<Observable>> {
    let sys = pi.source();
    let group = sys.group()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xa9_f00d);
    let mut out = Vec::new();
    for orbit in orbits(pi.target()) {
        let y0 = orbit[0];
        let fiber = pi.fiber(y0).to_vec();
        let m = fiber.len();
        let slot = |x: usize| fiber.iter().position(|&a| a == x);
        let (vals, vecs) = commutant_eigen(pi, y0, &mut rng)?;
        let scale = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
        let mut kept: Vec<usize> = Vec::new();
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && (vals[end - 1] - vals[end]).abs() <= 1e-8 * scale {
                end += 1;
            }
            if end - start <= d {
                kept.extend(start..end);
            }
            start = end;
        }
        // transport: for y in the orbit pick g with T^g(fiber(y)) = fiber(y0);
        // the module's fiber over y is {w ∘ T^g}
        let mut carriers: Vec<Option<usize>> = vec![None; pi.target().len()];
        for (gi, g) in group.iter().enumerate() {
            for &y in &orbit {
                if carriers[y].is_none() && pi.image(g.perm.apply(pi.fiber(y)[0])) == y0 {
                    carriers[y] = Some(gi);
                }
            }
        }
        for &j in &kept {
            let mut f = Observable::zeros(sys.clone());
            for &y in &orbit {
                let g = &group.element(carriers[y].expect("orbit point is reachable")).perm;
                for &x in pi.fiber(y) {
                    let i = slot(g.apply(x)).expect("carrier maps into the base fiber");
                    f.values_mut()[x] = vecs[(i, j)];
                }
            }
            out.push(f);
        }
    }
    Ok(out)
}

/// Eigen-decomposition of a random Hermitian element of the commutant of the
/// stabilizer of `y0` acting on `fiber(y0)`, eigenvalues decreasing. Each
/// eigenspace of a generic such element carries one irreducible
/// representation of the stabilizer.
pub(crate) fn commutant_eigen(pi: &FactorMap, y0: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, CMatrix)> {
    let group = pi.source().group()?;
    let fiber = pi.fiber(y0);
    let m = fiber.len();
    let slot = |x: usize| fiber.iter().position(|&a| a == x);
    // stabilizer action on the fiber: T^h maps fiber(y0) onto itself
    let stab: Vec<Vec<usize>> = group
        .iter()
        .filter(|g| pi.image(g.perm.apply(fiber[0])) == y0)
        .map(|g| fiber.iter().map(|&x| slot(g.perm.apply(x)).expect("stabilizer preserves the fiber")).collect())
        .collect();
    // orbitals of H on fiber pairs span the commutant
    let mut orbital = vec![usize::MAX; m * m];
    let mut count = 0;
    for p in 0..m * m {
        if orbital[p] != usize::MAX {
            continue;
        }
        let (i, j) = (p / m, p % m);
        for h in &stab {
            orbital[h[i] * m + h[j]] = count;
        }
        count += 1;
    }
    let coef: Vec<Complex64> =
        (0..count).map(|_| Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)).collect();
    let a = CMatrix::from_fn(m, m, |i, j| coef[orbital[i * m + j]]);
    Ok(hermitian_eigen(&(&a + a.adjoint())))
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    #[serde(skip)]
    pub ap_basis: Vec<Observable>,
    #[serde(skip)]
    pub wm_basis: Vec<Observable>,
    pub ap_dim: usize,
    pub wm_dim: usize,
    pub total_dim: usize,
    /// `max |⟨a, w⟩|` over AP and WM basis pairs.
    pub cross_max: f64,
    /// Largest deviation of `ap ∪ wm` from orthonormality.
    pub orthonormality_defect: f64,
    pub spans: bool,
    pub oracle: OrbitOracle,
    /// The oracle and the orthocomplement agree on whether WM is zero.
    pub oracle_agrees: bool,
}

/// `L²(X) = AP ⊕ WM` with `WM` the orthocomplement of the almost periodic part.
pub fn dichotomy(pi: &FactorMap) -> Result<DecompositionReport> {
    let sys = pi.source();
    let n = sys.len();
    let vectors: Vec<Observable> =
        orbit_modules(pi)?.iter().flat_map(|(_, m)| m.frame().vectors().cloned().collect::<Vec<_>>()).collect();
    let ap_basis = l2_basis(sys, &vectors);
    let wm_basis = l2_complement(sys, &ap_basis);
    let mut cross_max: f64 = 0.0;
    for a in &ap_basis {
        for w in &wm_basis {
            cross_max = cross_max.max(a.inner(w).norm());
        }
    }
    let all: Vec<&Observable> = ap_basis.iter().chain(&wm_basis).collect();
    let mut orthonormality_defect: f64 = 0.0;
    for (i, a) in all.iter().enumerate() {
        for (j, b) in all.iter().enumerate().skip(i) {
            let expect = if i == j { 1.0 } else { 0.0 };
            orthonormality_defect = orthonormality_defect.max((a.inner(b) - Complex64::new(expect, 0.0)).norm());
        }
    }
    let spans = all.len() == n
        && (0..n).all(|x| {
            let e = Observable::indicator(sys.clone(), x);
            in_l2_span(&e, &all.iter().map(|o| (*o).clone()).collect::<Vec<_>>())
        });
    let oracle = finite_orbit_oracle(pi);
    let oracle_agrees = oracle.wm_trivial == wm_basis.is_empty();
    Ok(DecompositionReport {
        ap_dim: ap_basis.len(),
        wm_dim: wm_basis.len(),
        total_dim: n,
        ap_basis,
        wm_basis,
        cross_max,
        orthonormality_defect,
        spans,
        oracle,
        oracle_agrees,
    })
}
