mod common;

use std::sync::Arc;

use common::{random_extension, random_observable, random_rationals, rng};
use fz_core::condlinalg::{
    bessel_check, cdim, cond_orthonormal_extract, cond_orthonormality_defect, gram_schmidt, greedy_orthonormal_extract,
    module_project, opnorm_diagnostic, CondModule,
};
use fz_core::ergodic::{ab_project, convex_min_norm_oracle, invariant_factor};
use fz_core::finsys::{load_system, system_to_json};
use fz_core::hilbert::{cond_exp, cond_inner, cond_norms, disintegrate, lift, Observable};
use fz_core::relprod::{build_relprod, Kernel};
use fz_core::skew::{enumerate_subgroups, mackey_range, skew_build, verify_cocycle, Cocycle, FinGroupTable, Subgroup};
use fz_core::structure::{classify_compact, dichotomy, rel_wm_extension};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn conditional_cauchy_schwarz(seed in any::<u64>()) {
        let pi = random_extension(seed, 4, 3);
        let mut r = rng(seed ^ 1);
        let f = random_observable(pi.source(), &mut r);
        let g = random_observable(pi.source(), &mut r);
        let fg = cond_inner(&f, &g, &pi);
        let (nf, ng) = (cond_norms(&f, &pi), cond_norms(&g, &pi));
        for y in 0..pi.target().len() {
            prop_assert!(fg.values()[y].norm() <= nf[y] * ng[y] + 1e-9);
        }
    }

    #[test]
    fn relative_product_identity_is_exact(seed in any::<u64>()) {
        let pi = random_extension(seed, 4, 3);
        let rp = build_relprod(&pi).unwrap();
        let mut r = rng(seed ^ 2);
        let f1 = random_rationals(pi.source().len(), &mut r);
        let f2 = random_rationals(pi.source().len(), &mut r);
        prop_assert!(rp.check_f1f2(&f1, &f2));
    }

    #[test]
    fn conditional_expectation_is_a_projection(seed in any::<u64>()) {
        let pi = random_extension(seed, 4, 3);
        prop_assert!(pi.validate().passed);
        prop_assert!(disintegrate(&pi).check(&pi));
        let mut r = rng(seed ^ 3);
        let f = random_observable(pi.source(), &mut r);
        let e = cond_exp(&f, &pi);
        prop_assert!(cond_exp(&lift(&e, &pi), &pi).max_abs_diff(&e) < 1e-12);
        prop_assert!((f.mean() - e.mean()).norm() < 1e-12);
    }

    #[test]
    fn group_average_is_the_minimal_norm_point(seed in any::<u64>()) {
        let pi = random_extension(seed, 3, 3);
        let sys = pi.source();
        let mut r = rng(seed ^ 4);
        let f = random_observable(sys, &mut r);
        let g = random_observable(sys, &mut r);
        let p = ab_project(&f).unwrap();
        prop_assert!(ab_project(&p).unwrap().max_abs_diff(&p) < 1e-12);
        prop_assert!((p.inner(&g) - f.inner(&ab_project(&g).unwrap())).norm() < 1e-12);
        let oracle = convex_min_norm_oracle(&f, 1e-7).unwrap();
        prop_assert!(p.sub(&oracle.point).norm() <= 1e-6);
    }

    #[test]
    fn gram_schmidt_frames(seed in any::<u64>()) {
        let pi = random_extension(seed, 4, 3);
        let sys = pi.source();
        let mut r = rng(seed ^ 5);
        let k = r.random_range(1..=3usize);
        let gens: Vec<Observable> = (0..k).map(|_| random_observable(sys, &mut r)).collect();
        let frame = gram_schmidt(&gens, &pi);
        prop_assert!(frame.orthonormality_defect() <= 1e-9);
        let module = CondModule::from_generators(gens.clone(), &pi);
        for g in &gens {
            let (_, residual) = module_project(&module, g).unwrap();
            prop_assert!(residual.sup_norm() <= 1e-9);
        }
        let profile = cdim(&frame);
        for (d, fib) in profile.iter().zip(pi.fibers()) {
            prop_assert!(*d <= k.min(fib.len()));
        }

        // reordering and invertible recombination keep cdim
        let mut reordered = gens.clone();
        reordered.reverse();
        prop_assert_eq!(cdim(&gram_schmidt(&reordered, &pi)), profile.clone());
        let mixed: Vec<Observable> = (0..k)
            .map(|i| {
                let mut acc = gens[i].clone();
                for g in &gens[i + 1..] {
                    acc = acc.add(&g.scale(Complex64::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0))));
                }
                acc
            })
            .collect();
        prop_assert_eq!(cdim(&gram_schmidt(&mixed, &pi)), profile);
    }

    #[test]
    fn compactness_criteria_agree(seed in any::<u64>()) {
        let pi = random_extension(seed, 3, 3);
        let report = classify_compact(&pi).unwrap();
        prop_assert!(report.agreement);
        prop_assert!(report.relatively_compact);
    }

    #[test]
    fn dichotomy_and_wm_routes(seed in any::<u64>()) {
        let pi = random_extension(seed, 3, 3);
        let d = dichotomy(&pi).unwrap();
        prop_assert!(d.spans && d.oracle_agrees);
        prop_assert_eq!(d.wm_dim, 0);
        prop_assert!(d.cross_max < 1e-9);
        let wm = rel_wm_extension(&pi).unwrap();
        prop_assert_eq!(wm.is_wm, pi.is_isomorphism());
    }

    #[test]
    fn appendix_bounds(seed in any::<u64>()) {
        let pi = random_extension(seed, 3, 3);
        let rp = build_relprod(&pi).unwrap();
        let mut r = rng(seed ^ 6);
        let values: Vec<Complex64> =
            (0..rp.len()).map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
        let k = Kernel::from_flat(&rp, &values).unwrap();
        let eps = r.random_range(0.05..0.8);

        let fast = cond_orthonormal_extract(&k, None, eps).unwrap();
        prop_assert!(cond_orthonormality_defect(&fast, &pi) <= 1e-9);
        let bessel = bessel_check(&k, &fast, 1e-9).unwrap();
        prop_assert!(bessel.holds, "excess {}", bessel.max_excess);
        let slow = greedy_orthonormal_extract(&k, None, eps).unwrap();
        prop_assert_eq!(cdim(&gram_schmidt(&fast, &pi)), cdim(&gram_schmidt(&slow, &pi)));

        let op = opnorm_diagnostic(&k, None).unwrap();
        prop_assert!(op.sup_cond_normalized <= op.sup_unit_ball + 1e-9);
    }

    #[test]
    fn systems_round_trip_through_json(seed in any::<u64>()) {
        let pi = random_extension(seed, 4, 3);
        let text = system_to_json(pi.source());
        let back = load_system(&text).unwrap();
        prop_assert_eq!(system_to_json(&back), text);
        prop_assert_eq!(back.space().weights(), pi.source().space().weights());
    }
}

fn random_cocycle(seed: u64) -> Cocycle {
    let mut r = rng(seed);
    let ny = r.random_range(1..=4usize);
    let cycle: Vec<usize> = (0..ny).map(|y| (y + 1) % ny).collect();
    let ids: Vec<String> = (0..ny).map(|y| format!("y{y}")).collect();
    let base = common::uniform_system(&ids.iter().map(String::as_str).collect::<Vec<_>>(), vec![("S", cycle)]);
    let group = match r.random_range(0..3) {
        0 => FinGroupTable::cyclic(r.random_range(1..=4)),
        1 => FinGroupTable::cyclic(2).product(&FinGroupTable::cyclic(2)),
        _ => FinGroupTable::cyclic(2).product(&FinGroupTable::cyclic(3)),
    };
    let n = group.len();
    let values = vec![(0..ny).map(|_| r.random_range(0..n)).collect()];
    Cocycle::new(base, Arc::new(group), values).unwrap()
}

proptest! {
    #![proptest_config(cfg(40))]

    #[test]
    fn skew_products_are_compact_and_mackey_detects_ergodicity(seed in any::<u64>()) {
        let rho = random_cocycle(seed);
        let table = rho.enumerate(10_000).unwrap();
        prop_assert!(verify_cocycle(&table).ok);
        let subgroups = enumerate_subgroups(rho.group()).unwrap();
        let l = &subgroups[(seed as usize) % subgroups.len()];
        let (_, pi) = skew_build(&rho, l).unwrap();
        prop_assert!(pi.validate().passed);
        let report = classify_compact(&pi).unwrap();
        prop_assert!(report.agreement && report.relatively_compact);

        let m = mackey_range(&rho, 1 << 20).unwrap();
        let (full_skew, _) = skew_build(&rho, &Subgroup::trivial(rho.group().clone())).unwrap();
        let ergodic = invariant_factor(&full_skew).unwrap().ergodic;
        prop_assert_eq!(m.subgroup.order() == rho.group().len(), ergodic);
        // the transfer really conjugates into the range
        let conj = rho.conjugate(&m.transfer);
        prop_assert!(conj.values().iter().flatten().all(|&k| m.subgroup.contains(k)));
    }

    #[test]
    fn cosets_partition_the_group(seed in any::<u64>()) {
        let rho = random_cocycle(seed);
        for h in enumerate_subgroups(rho.group()).unwrap() {
            let cosets = h.left_cosets();
            prop_assert_eq!(cosets.len(), h.index());
            let mut all: Vec<usize> = cosets.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..rho.group().len()).collect::<Vec<_>>());
        }
    }
}
