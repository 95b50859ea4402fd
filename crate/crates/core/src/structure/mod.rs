//! Structure theory of finite extensions: relative compactness, relative
//! weak mixing, the AP ⊕ WM decomposition and towers of factors.

mod ap;
mod compact;
mod tower;
mod wm;

use std::sync::Arc;

use num_complex::Complex64;

use crate::condlinalg::CondModule;
use crate::error::Result;
use crate::ergodic::orbits;
use crate::finsys::{FactorMap, FinSystem};
use crate::hilbert::Observable;
use crate::linalg::{CVector, SpanBuilder};

pub(crate) use ap::commutant_eigen;
pub use ap::{ap_factor, dichotomy, ApFactor, DecompositionReport};
pub use compact::{
    classify_compact, classify_compact_with, spectral_projection, ClassifyOptions, CompactnessReport, Criterion,
    CriterionOutcome,
};
pub use tower::{furstenberg_tower, StepKind, TowerLevel, TowerReport};
pub use wm::{finite_orbit_oracle, rel_wm_extension, rel_wm_function, OrbitOracle, WmExtensionReport, WmFunctionReport};

/// Rank threshold for span computations in weighted coordinates.
pub const SPAN_TOL: f64 = 1e-9;

/// `sqrt(μ) · f`, the coordinates in which `L²(μ)` is the standard inner product.
pub(crate) fn to_weighted(f: &Observable) -> CVector {
    let w = f.base().space().weights_f64();
    CVector::from_iterator(f.len(), f.values().iter().zip(w).map(|(v, &m)| v * m.sqrt()))
}

pub(crate) fn from_weighted(sys: &Arc<FinSystem>, v: &CVector) -> Observable {
    let w = sys.space().weights_f64();
    let values = v.iter().zip(w).map(|(c, &m)| c / m.sqrt()).collect();
    Observable::new(sys.clone(), values).expect("one value per atom")
}

/// An `L²(μ)`-orthonormal basis of the span of `fns`.
pub(crate) fn l2_basis(sys: &Arc<FinSystem>, fns: &[Observable]) -> Vec<Observable> {
    let mut span = SpanBuilder::new(sys.len(), SPAN_TOL);
    for f in fns {
        span.push(&to_weighted(f));
    }
    span.basis().iter().map(|v| from_weighted(sys, v)).collect()
}

/// Completes an orthonormal family to a basis of `L²(X)` and returns only the
/// added vectors: an orthonormal basis of the orthocomplement.
pub(crate) fn l2_complement(sys: &Arc<FinSystem>, basis: &[Observable]) -> Vec<Observable> {
    let n = sys.len();
    let mut span = SpanBuilder::new(n, SPAN_TOL);
    for b in basis {
        span.push(&to_weighted(b));
    }
    let start = span.rank();
    for x in 0..n {
        let mut e = CVector::from_element(n, Complex64::new(0.0, 0.0));
        e[x] = Complex64::new(1.0, 0.0);
        span.push(&e);
    }
    span.basis()[start..].iter().map(|v| from_weighted(sys, v)).collect()
}

/// True when `f` lies in the span of an `L²`-orthonormal family.
pub(crate) fn in_l2_span(f: &Observable, basis: &[Observable]) -> bool {
    let mut r = f.clone();
    for b in basis {
        r = r.sub(&b.scale(f.inner(b)));
    }
    r.norm() <= SPAN_TOL * f.norm().max(1.0)
}

/// The module generated by the orbit of each atom indicator, one per orbit
/// of the action on atoms, keyed by the orbit's first atom.
pub(crate) fn orbit_modules(pi: &FactorMap) -> Result<Vec<(usize, CondModule)>> {
    let sys = pi.source();
    let group = sys.group()?;
    let mut out = Vec::new();
    for orbit in orbits(sys) {
        let rep = orbit[0];
        let ind = Observable::indicator(sys.clone(), rep);
        let mut gens: Vec<Observable> = Vec::new();
        for g in group.iter() {
            let moved = crate::hilbert::pull_back(&g.perm, &ind);
            if gens.iter().all(|h| h.max_abs_diff(&moved) > 0.0) {
                gens.push(moved);
            }
        }
        out.push((rep, CondModule::from_generators(gens, pi)));
    }
    Ok(out)
}

/// Renders a group element's shortest word with generator labels, `e` for
/// the identity.
pub fn element_word(sys: &FinSystem, index: usize) -> Result<String> {
    let group = sys.group()?;
    let word = &group.element(index).word;
    if word.is_empty() {
        return Ok("e".into());
    }
    Ok(word.iter().map(|&g| sys.generators()[g].label.as_str()).collect::<Vec<_>>().join("·"))
}
