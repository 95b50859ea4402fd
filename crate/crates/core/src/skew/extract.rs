use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::condlinalg::{gram_schmidt, CondModule};
use crate::error::{FzError, Result};
use crate::ergodic::orbits;
use crate::finsys::{same_system, FactorMap, Group};
use crate::hilbert::{cond_inner, lift, pull_back, Observable};
use crate::linalg::CMatrix;
use crate::structure::{commutant_eigen, element_word};

/// The unitary cocycle of one invariant module.
#[derive(Debug, Clone, Serialize)]
pub struct ModuleCocycle {
    pub dimension: usize,
    #[serde(skip)]
    pub frame: Vec<Observable>,
    /// `lambdas[γ][y]`, the `d × d` matrix `⟨f_i, (T^γ)* f_j⟩_{X|Y}(y)`.
    #[serde(skip)]
    pub lambdas: Vec<Vec<CMatrix>>,
    /// Largest `‖Λ Λ* − I‖` over elements and factor atoms.
    pub unitarity_defect: f64,
    /// Largest deviation in `F = Λ_γ (T^γ)* F`.
    pub frame_equation_defect: f64,
    /// Largest deviation in `σ_{γγ'} = (σ_γ ∘ S^{γ'}) σ_{γ'}` for `σ = Λ*`.
    pub cocycle_law_defect: f64,
    /// Every frame vector has modulus one at every atom.
    pub unimodular: bool,
}

impl ModuleCocycle {
    /// `σ_γ(y) = Λ_γ(y)*`, the cocycle proper.
    pub fn sigma(&self, gamma: usize, y: usize) -> CMatrix {
        self.lambdas[gamma][y].adjoint()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitaryCocycleBundle {
    pub modules: Vec<ModuleCocycle>,
    /// Shortest words of the enumerated group elements, in order.
    pub elements: Vec<String>,
    pub max_unitarity_defect: f64,
    pub max_frame_defect: f64,
    pub max_cocycle_defect: f64,
}

impl UnitaryCocycleBundle {
    /// All defects within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_unitarity_defect <= tol && self.max_frame_defect <= tol && self.max_cocycle_defect <= tol
    }
}

/// Writes each finitely generated invariant module as a skew-product piece:
/// a conditional orthonormal frame `F` of constant size `d` and unitary
/// matrices `Λ_γ` with `F = Λ_γ (T^γ)* F` on every fiber. Modules are
/// generated by the orbits of `seeds`; duplicates are dropped. Without seeds,
/// the fiber over the first factor atom is split into irreducible pieces for
/// its stabilizer and one vector of each piece is used, which yields the
/// irreducible modules.
pub fn extract_cocycle(pi: &FactorMap, seeds: Option<&[Observable]>) -> Result<UnitaryCocycleBundle> {
    let y = pi.target();
    let y_orbits = orbits(y).len();
    if y_orbits != 1 {
        return Err(FzError::NotErgodic(format!("base has {y_orbits} orbits")));
    }
    let sys = pi.source();
    let group = sys.group()?;
    let default_seeds: Vec<Observable>;
    let seeds = match seeds {
        Some(s) => s,
        None => {
            default_seeds = irreducible_seeds(pi)?;
            &default_seeds
        }
    };
    // action of each group element on Y
    let ny = y.len();
    let s_of: Vec<Vec<usize>> = group
        .iter()
        .map(|g| (0..ny).map(|yi| pi.image(g.perm.apply(pi.fiber(yi)[0]))).collect())
        .collect();

    let mut modules: Vec<ModuleCocycle> = Vec::new();
    let mut seen: Vec<CondModule> = Vec::new();
    for seed in seeds {
        if !same_system(seed.base(), sys) {
            return Err(FzError::Mismatch("seed does not live on the extension".into()));
        }
        let orbit: Vec<Observable> = group.iter().map(|g| pull_back(&g.perm, seed)).collect();
        let module = CondModule::from_generators(orbit, pi);
        let cd = module.cdim();
        if cd.iter().any(|&c| c != cd[0]) {
            let y_bad = cd.iter().position(|&c| c != cd[0]).unwrap_or(0);
            return Err(FzError::NotErgodic(format!(
                "conditional dimension is not constant: {} over {:?} but {} over {:?}",
                cd[0],
                y.space().atom_id(0),
                cd[y_bad],
                y.space().atom_id(y_bad)
            )));
        }
        let d = cd[0];
        if d == 0 || seen.iter().any(|m| same_module(m, &module)) {
            continue;
        }
        let frame = gauge_fixed_frame(&global_frame(&module, pi, d), pi, &group, &s_of);
        let lambdas: Vec<Vec<CMatrix>> = group
            .iter()
            .map(|g| {
                let moved: Vec<Observable> = frame.iter().map(|f| pull_back(&g.perm, f)).collect();
                let entries: Vec<Vec<Observable>> =
                    frame.iter().map(|fi| moved.iter().map(|mj| cond_inner(fi, mj, pi)).collect()).collect();
                (0..ny).map(|yi| CMatrix::from_fn(d, d, |i, j| entries[i][j].values()[yi])).collect()
            })
            .collect();

        let mut unitarity_defect: f64 = 0.0;
        let mut frame_equation_defect: f64 = 0.0;
        for (gi, g) in group.iter().enumerate() {
            for l in &lambdas[gi] {
                unitarity_defect = unitarity_defect.max((l * l.adjoint() - CMatrix::identity(d, d)).norm());
            }
            let moved: Vec<Observable> = frame.iter().map(|f| pull_back(&g.perm, f)).collect();
            for (i, fi) in frame.iter().enumerate() {
                let mut rebuilt = Observable::zeros(sys.clone());
                for (j, mj) in moved.iter().enumerate() {
                    let coef = Observable::new(y.clone(), (0..ny).map(|yi| lambdas[gi][yi][(i, j)]).collect())?;
                    rebuilt = rebuilt.add(&mj.mul(&lift(&coef, pi)));
                }
                frame_equation_defect = frame_equation_defect.max(rebuilt.max_abs_diff(fi));
            }
        }
        let mut cocycle_law_defect: f64 = 0.0;
        for a in 0..group.len() {
            for b in 0..group.len() {
                let ab = group.mul(a, b);
                for yi in 0..ny {
                    let lhs = lambdas[ab][yi].adjoint();
                    let rhs = lambdas[a][s_of[b][yi]].adjoint() * lambdas[b][yi].adjoint();
                    cocycle_law_defect = cocycle_law_defect.max((lhs - rhs).norm());
                }
            }
        }
        let unimodular = frame.iter().all(|f| f.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-9));
        modules.push(ModuleCocycle {
            dimension: d,
            frame,
            lambdas,
            unitarity_defect,
            frame_equation_defect,
            cocycle_law_defect,
            unimodular,
        });
        seen.push(module);
    }
    let elements = (0..group.len()).map(|i| element_word(sys, i)).collect::<Result<Vec<_>>>()?;
    let max = |f: fn(&ModuleCocycle) -> f64| modules.iter().map(f).fold(0.0, f64::max);
    Ok(UnitaryCocycleBundle {
        max_unitarity_defect: max(|m| m.unitarity_defect),
        max_frame_defect: max(|m| m.frame_equation_defect),
        max_cocycle_defect: max(|m| m.cocycle_law_defect),
        modules,
        elements,
    })
}

fn irreducible_seeds(pi: &FactorMap) -> Result<Vec<Observable>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c0c_7c1e);
    let (vals, vecs) = commutant_eigen(pi, 0, &mut rng)?;
    let fiber = pi.fiber(0);
    let scale = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let mut seeds = Vec::new();
    for j in 0..vals.len() {
        if j > 0 && (vals[j - 1] - vals[j]).abs() <= 1e-8 * scale {
            continue;
        }
        let mut f = Observable::zeros(pi.source().clone());
        for (i, &x) in fiber.iter().enumerate() {
            f.values_mut()[x] = vecs[(i, j)];
        }
        seeds.push(f);
    }
    Ok(seeds)
}

/// Assembles global frame vectors from the Gram–Schmidt blocks: the i-th
/// vector is the i-th frame vector of whichever block lies over each atom.
fn global_frame(module: &CondModule, pi: &FactorMap, d: usize) -> Vec<Observable> {
    let frame = module.frame();
    (0..d)
        .map(|i| {
            let mut f = Observable::zeros(pi.source().clone());
            for block in frame.blocks() {
                if let Some(v) = block.frame.get(i) {
                    f = f.add(v);
                }
            }
            f
        })
        .collect()
}

/// Re-expresses a frame in the tree gauge rooted at the first factor atom:
/// over `y` the frame is the root frame carried by the shortlex-first element
/// `g` with `S^g y_0 = y`, so `Λ_g(y_0) = I`. Each root vector is rotated to
/// be real and positive at its first nonzero atom.
fn gauge_fixed_frame(frame: &[Observable], pi: &FactorMap, group: &Group, s_of: &[Vec<usize>]) -> Vec<Observable> {
    let root = pi.fiber(0);
    frame
        .iter()
        .map(|f| {
            let lead = root.iter().map(|&x| f.values()[x]).find(|v| v.norm() > 1e-12);
            let phase = lead.map(|v| v.conj() / v.norm()).unwrap_or(Complex64::new(1.0, 0.0));
            let mut out = Observable::zeros(f.base().clone());
            for y in 0..pi.target().len() {
                let g = (0..group.len()).find(|&g| s_of[g][0] == y).expect("base is ergodic");
                let back = group.element(g).perm.inverse();
                for &x in pi.fiber(y) {
                    out.values_mut()[x] = f.values()[back.apply(x)] * phase;
                }
            }
            out
        })
        .collect()
}

fn same_module(a: &CondModule, b: &CondModule) -> bool {
    if a.cdim() != b.cdim() {
        return false;
    }
    let joint: Vec<Observable> = a.frame().vectors().chain(b.frame().vectors()).cloned().collect();
    crate::condlinalg::cdim(&gram_schmidt(&joint, a.factor())) == a.cdim()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finsys::{FinProbSpace, FinSystem};
    use std::sync::Arc;

    #[test]
    fn z4_over_z2_gives_sign_cocycle() {
        let x = Arc::new(
            FinSystem::from_images(FinProbSpace::uniform(["x1", "x2", "x3", "x4"]).unwrap(), vec![("T", vec![1, 2, 3, 0])])
                .unwrap(),
        );
        let y = Arc::new(FinSystem::from_images(FinProbSpace::uniform(["y1", "y2"]).unwrap(), vec![("S", vec![1, 0])]).unwrap());
        let pi = FactorMap::new(x.clone(), y, vec![0, 1, 0, 1], vec![0]).unwrap();
        let f = Observable::real(x, &[1.0, 1.0, -1.0, -1.0]).unwrap();
        let b = extract_cocycle(&pi, Some(&[f])).unwrap();
        assert_eq!(b.modules.len(), 1);
        let m = &b.modules[0];
        assert_eq!(m.dimension, 1);
        // element 1 is the generator T
        let lam: Vec<Complex64> = m.lambdas[1].iter().map(|l| l[(0, 0)]).collect();
        assert!((lam[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((lam[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!(b.passes(1e-9));
        assert!(m.unimodular);

        // a lifted base function gives the identity cocycle
        let one = Observable::constant(pi.source().clone(), Complex64::new(1.0, 0.0));
        let b = extract_cocycle(&pi, Some(&[one])).unwrap();
        assert!(b.modules[0].lambdas.iter().flatten().all(|l| (l[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }
}
