use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FzError, Result};
use crate::finsys::{same_system, FactorMap};
use crate::hilbert::{cond_inner, cond_norms, Observable, ObservableDoc};

/// Conditional norms at or below this value count as zero when deciding
/// the sign pattern `{‖g_i‖ > 0}`. The cutoff is relative to the generator's
/// own conditional norm when that exceeds one.
pub const DEFAULT_RANK_CUTOFF: f64 = 1e-9;

/// One block of a Y-partition with its conditional orthonormal family.
#[derive(Debug, Clone)]
pub struct FrameBlock {
    /// Sign pattern of `{‖g_i‖ > 0}` over the generators, e.g. `"101"`.
    pub id: String,
    pub atoms: Vec<usize>,
    /// Frame vectors, each supported on the fibers over `atoms`.
    pub frame: Vec<Observable>,
}

/// Output of the conditional Gram–Schmidt process: a partition of the factor
/// atoms and, per block, a conditionally orthonormal family. The block with
/// the all-zero pattern is `E0` (possibly empty) and carries no vectors.
#[derive(Debug, Clone)]
pub struct CondFrame {
    factor: FactorMap,
    blocks: Vec<FrameBlock>,
    e0: usize,
    block_of: Vec<usize>,
}

impl CondFrame {
    pub fn factor(&self) -> &FactorMap {
        &self.factor
    }

    pub fn blocks(&self) -> &[FrameBlock] {
        &self.blocks
    }

    /// Index of the zero block `E0` in [`CondFrame::blocks`].
    pub fn e0(&self) -> usize {
        self.e0
    }

    /// Block index containing a factor atom.
    pub fn block_of(&self, y: usize) -> usize {
        self.block_of[y]
    }

    /// Frame vectors living over factor atom `y`.
    pub fn frame_at(&self, y: usize) -> &[Observable] {
        &self.blocks[self.block_of[y]].frame
    }

    /// Values of the frame vectors on the fiber over `y`, one row per vector.
    pub fn fiber_vectors(&self, y: usize) -> Vec<Vec<Complex64>> {
        let fiber = self.factor.fiber(y);
        self.frame_at(y).iter().map(|h| fiber.iter().map(|&x| h.values()[x]).collect()).collect()
    }

    /// All frame vectors, block by block.
    pub fn vectors(&self) -> impl Iterator<Item = &Observable> {
        self.blocks.iter().flat_map(|b| b.frame.iter())
    }

    /// Largest deviation from conditional orthonormality over all blocks.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for b in &self.blocks {
            for (i, f) in b.frame.iter().enumerate() {
                for (j, g) in b.frame.iter().enumerate().skip(i) {
                    let ip = cond_inner(f, g, &self.factor);
                    let expect = if i == j { 1.0 } else { 0.0 };
                    for &y in &b.atoms {
                        worst = worst.max((ip.values()[y] - Complex64::new(expect, 0.0)).norm());
                    }
                }
            }
        }
        worst
    }

    pub fn to_doc(&self) -> CondFrameDoc {
        let tgt = self.factor.target().space();
        CondFrameDoc {
            blocks: self
                .blocks
                .iter()
                .map(|b| (b.id.clone(), b.atoms.iter().map(|&y| tgt.atom_id(y).to_string()).collect()))
                .collect(),
            frames: self.blocks.iter().map(|b| (b.id.clone(), b.frame.iter().map(Observable::to_doc).collect())).collect(),
            e0: self.blocks[self.e0].id.clone(),
        }
    }
}

/// JSON form `{blocks: {id: [y-atoms]}, frames: {id: [observable]}, e0: id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondFrameDoc {
    pub blocks: BTreeMap<String, Vec<String>>,
    pub frames: BTreeMap<String, Vec<ObservableDoc>>,
    pub e0: String,
}

/// Conditional dimension: the number of frame vectors over each factor atom.
pub fn cdim(frame: &CondFrame) -> Vec<usize> {
    (0..frame.factor.target().len()).map(|y| frame.frame_at(y).len()).collect()
}

/// Conditional Gram–Schmidt: `h_k = g_k / ‖g_k‖ · 1_{‖g_k‖ > 0}` with
/// `g_k = f_k − Σ_{i<k} ⟨f_k, h_i⟩ h_i`, then the partition by the sign
/// pattern of `{‖g_k‖ > 0}`.
pub fn gram_schmidt(gens: &[Observable], pi: &FactorMap) -> CondFrame {
    gram_schmidt_with_cutoff(gens, pi, DEFAULT_RANK_CUTOFF)
}

pub fn gram_schmidt_with_cutoff(gens: &[Observable], pi: &FactorMap, cutoff: f64) -> CondFrame {
    let ny = pi.target().len();
    let mut hs: Vec<Observable> = Vec::with_capacity(gens.len());
    let mut patterns: Vec<Vec<bool>> = vec![Vec::with_capacity(gens.len()); ny];
    for f in gens {
        assert!(same_system(f.base(), pi.source()), "generator must live on the factor's source");
        let scale = cond_norms(f, pi);
        let mut g = f.clone();
        // two passes of the projection keep the result orthogonal in floating point
        for _ in 0..2 {
            for h in &hs {
                let coef = cond_inner(&g, h, pi);
                let proj = h.mul(&crate::hilbert::lift(&coef, pi));
                g = g.sub(&proj);
            }
        }
        let norms = cond_norms(&g, pi);
        let mut h = Observable::zeros(pi.source().clone());
        for (y, fib) in pi.fibers().iter().enumerate() {
            let positive = norms[y] > cutoff * scale[y].max(1.0);
            patterns[y].push(positive);
            if positive {
                for &x in fib {
                    h.values_mut()[x] = g.values()[x] / norms[y];
                }
            }
        }
        hs.push(h);
    }

    let key = |bits: &[bool]| -> String {
        if bits.is_empty() {
            "e0".to_string()
        } else {
            bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
        }
    };
    let zero_key = key(&vec![false; gens.len()]);
    let mut by_pattern: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    by_pattern.insert(zero_key.clone(), Vec::new());
    for (y, bits) in patterns.iter().enumerate() {
        by_pattern.entry(key(bits)).or_default().push(y);
    }
    let mut blocks = Vec::with_capacity(by_pattern.len());
    let mut block_of = vec![0; ny];
    let mut e0 = 0;
    for (id, atoms) in by_pattern {
        let idx = blocks.len();
        if id == zero_key {
            e0 = idx;
        }
        for &y in &atoms {
            block_of[y] = idx;
        }
        let frame = if id == zero_key {
            Vec::new()
        } else {
            let bits = &patterns[atoms[0]];
            hs.iter()
                .zip(bits)
                .filter(|(_, &b)| b)
                .map(|(h, _)| crate::hilbert::restrict(h, pi, &atoms))
                .collect()
        };
        blocks.push(FrameBlock { id, atoms, frame });
    }
    CondFrame { factor: pi.clone(), blocks, e0, block_of }
}

/// A finitely generated `L⁰(Y)`-submodule of `L²(X)` in normal form.
#[derive(Debug, Clone)]
pub struct CondModule {
    generators: Vec<Observable>,
    frame: CondFrame,
}

impl CondModule {
    pub fn from_generators(gens: Vec<Observable>, pi: &FactorMap) -> Self {
        let frame = gram_schmidt(&gens, pi);
        Self { generators: gens, frame }
    }

    /// The whole of `L²(X)`, generated by the atom indicators.
    pub fn full(pi: &FactorMap) -> Self {
        let gens = (0..pi.source().len()).map(|x| Observable::indicator(pi.source().clone(), x)).collect();
        Self::from_generators(gens, pi)
    }

    pub fn generators(&self) -> &[Observable] {
        &self.generators
    }

    pub fn frame(&self) -> &CondFrame {
        &self.frame
    }

    pub fn factor(&self) -> &FactorMap {
        &self.frame.factor
    }

    pub fn cdim(&self) -> Vec<usize> {
        cdim(&self.frame)
    }

    /// True when every generator image `(T^g)* h` stays in the module.
    pub fn is_invariant(&self, tol: f64) -> Result<bool> {
        let pi = self.factor();
        for gen in pi.source().generators() {
            for h in self.frame.vectors() {
                let moved = crate::hilbert::pull_back(&gen.perm, h);
                let (_, res) = module_project(self, &moved)?;
                if res.values().iter().any(|v| v.re > tol) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Orthogonal projection onto a module via its frame, with the conditional
/// norm of the residual.
pub fn module_project(module: &CondModule, f: &Observable) -> Result<(Observable, Observable)> {
    let pi = module.factor();
    if !same_system(f.base(), pi.source()) {
        return Err(FzError::Mismatch("observable does not live on the module's system".into()));
    }
    let mut proj = Observable::zeros(pi.source().clone());
    for h in module.frame.vectors() {
        let coef = cond_inner(f, h, pi);
        proj = proj.add(&h.mul(&crate::hilbert::lift(&coef, pi)));
    }
    let residual = crate::hilbert::cond_norm(&f.sub(&proj), pi);
    Ok((proj, residual))
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

    fn obs(pi: &FactorMap, v: &[f64]) -> Observable {
        Observable::real(pi.source().clone(), v).unwrap()
    }

    #[test]
    fn zero_generator_gives_only_e0() {
        let pi = running();
        let frame = gram_schmidt(&[obs(&pi, &[0.0; 4])], &pi);
        assert_eq!(frame.blocks().len(), 1);
        assert_eq!(frame.blocks()[frame.e0()].atoms, vec![0, 1]);
        assert_eq!(cdim(&frame), vec![0, 0]);
    }

    #[test]
    fn generator_on_one_fiber() {
        let pi = running();
        // supported on the fiber {x1, x3} over y1
        let frame = gram_schmidt(&[obs(&pi, &[1.0, 0.0, 2.0, 0.0])], &pi);
        assert_eq!(cdim(&frame), vec![1, 0]);
        assert_eq!(frame.blocks()[frame.e0()].atoms, vec![1]);
        assert!(frame.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn two_independent_generators_fill_two_point_fibers() {
        let pi = running();
        let frame = gram_schmidt(&[obs(&pi, &[1.0, 1.0, 1.0, 1.0]), obs(&pi, &[1.0, 2.0, 0.0, -1.0])], &pi);
        assert_eq!(cdim(&frame), vec![2, 2]);
        assert!(frame.orthonormality_defect() < 1e-12);
        assert!(frame.blocks()[frame.e0()].atoms.is_empty());
    }

    #[test]
    fn projection_and_residuals() {
        let pi = running();
        let g = obs(&pi, &[1.0, 1.0, 1.0, 1.0]);
        let m = CondModule::from_generators(vec![g.clone()], &pi);
        let (p, r) = module_project(&m, &g).unwrap();
        assert!(p.max_abs_diff(&g) < 1e-12 && r.sup_norm() < 1e-12);
        // conditionally orthogonal unit vector: (1, 1, -1, -1) has fiber mean 0 and norm 1
        let u = obs(&pi, &[1.0, 1.0, -1.0, -1.0]);
        let (p, _) = module_project(&m, &u).unwrap();
        assert!(p.sup_norm() < 1e-12);
        let (_, r) = module_project(&m, &g.add(&u)).unwrap();
        assert!(r.values().iter().all(|v| (v.re - 1.0).abs() < 1e-12));
    }

    #[test]
    fn full_module_has_fiber_dimension() {
        let pi = running();
        assert_eq!(CondModule::full(&pi).cdim(), vec![2, 2]);
        assert!(CondModule::full(&pi).is_invariant(1e-9).unwrap());
    }
}
