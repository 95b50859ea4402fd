use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::condlinalg::gram_schmidt;
use crate::corpus::Corpus;
use crate::error::{FzError, Result};
use crate::ergodic::{ab_project, convex_min_norm_oracle, invariant_factor};
use crate::finsys::{FactorMap, FinSystem};
use crate::hilbert::{cond_inner, cond_norms, Observable};
use crate::relprod::build_relprod;
use crate::skew::{extract_cocycle, mackey_range, skew_build, verify_cocycle, Subgroup};
use crate::structure::{classify_compact, dichotomy, furstenberg_tower, rel_wm_extension};

/// Distance allowed between the group average and the convex-hull minimizer.
pub const ORACLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub tol: f64,
    pub checks: Vec<Check>,
    pub passed: usize,
    pub failed: usize,
    /// Some check failed because two routes disagreed.
    pub equivalence_failure: bool,
}

impl SelftestReport {
    pub fn exit_code(&self) -> i32 {
        if self.equivalence_failure {
            3
        } else if self.failed > 0 {
            2
        } else {
            0
        }
    }
}

struct Recorder {
    checks: Vec<Check>,
    equivalence_failure: bool,
}

impl Recorder {
    fn record(&mut self, name: String, outcome: Result<(bool, String)>) {
        let (passed, detail) = match outcome {
            Ok(v) => v,
            Err(e) => {
                if matches!(e, FzError::Equivalence(_)) {
                    self.equivalence_failure = true;
                }
                (false, e.to_string())
            }
        };
        self.checks.push(Check { name, passed, detail });
    }
}

/// Runs every invariant check over the corpus. Tolerance-driven checks use
/// `tol`; a tiny `tol` makes them fail in a fixed order.
pub fn run_selftest(corpus: &Corpus, tol: f64, mackey_budget: u128) -> SelftestReport {
    let mut rec = Recorder { checks: Vec::new(), equivalence_failure: false };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);

    let mut extensions: Vec<(String, FactorMap)> = corpus.factors.clone();
    for (name, sys) in &corpus.systems {
        rec.record(format!("{name}/ergodic-projection"), check_projection(sys, tol));
        rec.record(format!("{name}/tower"), check_tower(sys));
        extensions.push((format!("{name}→trivial"), FactorMap::to_trivial(sys.clone())));
        extensions.push((format!("{name}→self"), FactorMap::identity(sys.clone())));
    }
    for (name, pi) in &extensions {
        rec.record(format!("{name}/f1f2"), check_f1f2(pi, &mut rng));
        rec.record(format!("{name}/cauchy-schwarz"), check_cauchy_schwarz(pi, tol, &mut rng));
        rec.record(format!("{name}/gram-schmidt"), check_gram_schmidt(pi, tol));
        rec.record(format!("{name}/compact"), check_compact(pi));
        rec.record(format!("{name}/dichotomy"), check_dichotomy(pi, tol));
        rec.record(format!("{name}/wm-routes"), rel_wm_extension(pi).map(|r| (true, format!("is_wm={}", r.is_wm))));
        if invariant_factor(pi.target()).map(|r| r.ergodic).unwrap_or(false) {
            rec.record(format!("{name}/extract"), check_extract(pi, tol));
        }
    }
    for (name, spec) in &corpus.cocycles {
        rec.record(format!("{name}/skew"), check_skew(&spec.cocycle, &spec.subgroup, mackey_budget));
    }

    let failed = rec.checks.iter().filter(|c| !c.passed).count();
    SelftestReport {
        tol,
        passed: rec.checks.len() - failed,
        failed,
        checks: rec.checks,
        equivalence_failure: rec.equivalence_failure,
    }
}

fn check_projection(sys: &Arc<FinSystem>, tol: f64) -> Result<(bool, String)> {
    let mut worst_oracle: f64 = 0.0;
    let mut worst_algebra: f64 = 0.0;
    for x in 0..sys.len() {
        let f = Observable::indicator(sys.clone(), x);
        let p = ab_project(&f)?;
        let oracle = convex_min_norm_oracle(&f, ORACLE_TOL)?;
        worst_oracle = worst_oracle.max(p.sub(&oracle.point).norm());
        worst_algebra = worst_algebra.max(ab_project(&p)?.sub(&p).norm());
        for x2 in 0..sys.len() {
            let g = Observable::indicator(sys.clone(), x2);
            worst_algebra = worst_algebra.max((p.inner(&g) - f.inner(&ab_project(&g)?)).norm());
        }
    }
    Ok((
        worst_oracle <= ORACLE_TOL && worst_algebra <= tol,
        format!("oracle distance {worst_oracle:.2e}, projection defect {worst_algebra:.2e}"),
    ))
}

fn check_tower(sys: &Arc<FinSystem>) -> Result<(bool, String)> {
    let t = furstenberg_tower(sys, None)?;
    let expect = usize::from(sys.len() > 1);
    let top = t.levels.last().map(|l| l.atoms).unwrap_or(0);
    Ok((t.length == expect && top == sys.len() && t.top.is_wm, format!("length {}, top {} atoms", t.length, top)))
}

fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    BigRational::new(BigInt::from(rng.random_range(-20i64..=20)), BigInt::from(rng.random_range(1i64..=12)))
}

fn random_observable(sys: &Arc<FinSystem>, rng: &mut ChaCha8Rng) -> Observable {
    let values = (0..sys.len()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    Observable::new(sys.clone(), values).expect("length matches")
}

fn check_f1f2(pi: &FactorMap, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let rp = build_relprod(pi)?;
    let n = pi.source().len();
    let trials = 25;
    for _ in 0..trials {
        let f1: Vec<BigRational> = (0..n).map(|_| random_rational(rng)).collect();
        let f2: Vec<BigRational> = (0..n).map(|_| random_rational(rng)).collect();
        let (lhs, rhs) = rp.f1f2_sides(&f1, &f2);
        if lhs != rhs {
            return Ok((false, format!("{lhs} ≠ {rhs}")));
        }
    }
    Ok((true, format!("{trials} exact pairs")))
}

fn check_cauchy_schwarz(pi: &FactorMap, tol: f64, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let sys = pi.source();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let f = random_observable(sys, rng);
        let g = random_observable(sys, rng);
        let fg = cond_inner(&f, &g, pi);
        let (nf, ng) = (cond_norms(&f, pi), cond_norms(&g, pi));
        for y in 0..pi.target().len() {
            worst = worst.max(fg.values()[y].norm() - nf[y] * ng[y]);
        }
    }
    Ok((worst <= tol, format!("largest excess {worst:.2e}")))
}

fn check_gram_schmidt(pi: &FactorMap, tol: f64) -> Result<(bool, String)> {
    let sys = pi.source();
    let gens: Vec<Observable> = (0..sys.len()).map(|x| Observable::indicator(sys.clone(), x)).collect();
    let frame = gram_schmidt(&gens, pi);
    let defect = frame.orthonormality_defect();
    let full = crate::condlinalg::cdim(&frame).iter().zip(pi.fibers()).all(|(&d, fib)| d == fib.len());
    Ok((defect <= tol && full, format!("defect {defect:.2e}, full rank {full}")))
}

fn check_compact(pi: &FactorMap) -> Result<(bool, String)> {
    let r = classify_compact(pi)?;
    r.require_agreement()?;
    Ok((r.relatively_compact, format!("{} invariant kernels", r.invariant_kernel_dim)))
}

fn check_dichotomy(pi: &FactorMap, tol: f64) -> Result<(bool, String)> {
    let d = dichotomy(pi)?;
    if !d.oracle_agrees {
        return Err(FzError::Equivalence("orbit oracle disagrees with the orthocomplement".into()));
    }
    Ok((
        d.spans && d.wm_dim == 0 && d.cross_max <= tol && d.orthonormality_defect <= tol,
        format!("ap {} wm {} cross {:.2e} defect {:.2e}", d.ap_dim, d.wm_dim, d.cross_max, d.orthonormality_defect),
    ))
}

fn check_extract(pi: &FactorMap, tol: f64) -> Result<(bool, String)> {
    let b = extract_cocycle(pi, None)?;
    Ok((
        b.passes(tol),
        format!(
            "{} modules, defects {:.2e}/{:.2e}/{:.2e}",
            b.modules.len(),
            b.max_unitarity_defect,
            b.max_frame_defect,
            b.max_cocycle_defect
        ),
    ))
}

fn check_skew(rho: &crate::skew::Cocycle, l: &Subgroup, budget: u128) -> Result<(bool, String)> {
    let table = rho.enumerate(rho.base().group_cap())?;
    let law = verify_cocycle(&table);
    let (sys, pi) = skew_build(rho, l)?;
    let compact = classify_compact(&pi)?;
    compact.require_agreement()?;
    let mut detail = format!("{} atoms, cocycle law {}", sys.len(), law.ok);
    let ok = law.ok && compact.relatively_compact && pi.validate().failure().is_none();
    if invariant_factor(rho.base())?.ergodic {
        let m = mackey_range(rho, budget)?;
        let full = Subgroup::full(rho.group().clone());
        let (k_sys, _) = skew_build(rho, &Subgroup::trivial(rho.group().clone()))?;
        let ergodic = invariant_factor(&k_sys)?.ergodic;
        if (m.subgroup.order() == full.order()) != ergodic {
            return Err(FzError::Equivalence(format!(
                "Mackey range of order {} but skew product ergodic={ergodic}",
                m.subgroup.order()
            )));
        }
        detail.push_str(&format!(", Mackey order {}", m.subgroup.order()));
    }
    Ok((ok, detail))
}
