#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use fz_core::finsys::{FactorMap, FinProbSpace, FinSystem, Generator, Permutation};
use fz_core::hilbert::Observable;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_GROUP: usize = 48;

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Random weights constant on two classes, and a class-preserving
/// permutation generator. Returns (class of each point, integer weight of
/// each point).
fn classes(n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<i64>) {
    let class: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let w = [rng.random_range(1..4i64), rng.random_range(1..4i64)];
    let weights = class.iter().map(|&c| w[c]).collect();
    (class, weights)
}

fn class_perm(class: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut images: Vec<usize> = (0..class.len()).collect();
    for c in 0..2 {
        let members: Vec<usize> = (0..class.len()).filter(|&i| class[i] == c).collect();
        let mut shuffled = members.clone();
        shuffled.shuffle(rng);
        for (a, b) in members.iter().zip(&shuffled) {
            images[*a] = *b;
        }
    }
    images
}

/// A random extension `Y × F → Y` with action `(y, f) ↦ (S y, σ_y f)`, at
/// most `max_base · max_fiber` atoms and an acting group of order at most
/// [`MAX_GROUP`].
pub fn random_extension(seed: u64, max_base: usize, max_fiber: usize) -> FactorMap {
    let mut r = rng(seed);
    loop {
        let ny = r.random_range(1..=max_base);
        let m = r.random_range(1..=max_fiber);
        let (ycls, yw) = classes(ny, &mut r);
        let (fcls, fw) = classes(m, &mut r);
        let ysum: i64 = yw.iter().sum();
        let fsum: i64 = fw.iter().sum();
        let ngen = r.random_range(1..=2);
        let ygens: Vec<Vec<usize>> = (0..ngen).map(|_| class_perm(&ycls, &mut r)).collect();
        let sigma: Vec<Vec<Vec<usize>>> =
            (0..ngen).map(|_| (0..ny).map(|_| class_perm(&fcls, &mut r)).collect()).collect();

        let yspace =
            FinProbSpace::new((0..ny).map(|y| (format!("y{y}"), rat(yw[y], ysum))).collect()).expect("weights sum to 1");
        let xspace = FinProbSpace::new(
            (0..ny)
                .flat_map(|y| (0..m).map(move |f| (y, f)))
                .map(|(y, f)| (format!("y{y}f{f}"), rat(yw[y] * fw[f], ysum * fsum)))
                .collect(),
        )
        .expect("weights sum to 1");
        let ysys = FinSystem::new(
            yspace,
            ygens
                .iter()
                .enumerate()
                .map(|(g, p)| Generator { label: format!("g{g}"), perm: Permutation::from_images(p.clone()).unwrap() })
                .collect(),
        )
        .unwrap();
        let xgens = (0..ngen)
            .map(|g| {
                let images = (0..ny * m).map(|i| ygens[g][i / m] * m + sigma[g][i / m][i % m]).collect();
                Generator { label: format!("g{g}"), perm: Permutation::from_images(images).unwrap() }
            })
            .collect();
        let xsys = Arc::new(FinSystem::new(xspace, xgens).unwrap());
        if xsys.group().map(|g| g.len() > MAX_GROUP).unwrap_or(true) {
            continue;
        }
        let map = (0..ny * m).map(|i| i / m).collect();
        return FactorMap::new(xsys, Arc::new(ysys), map, (0..ngen).collect()).unwrap();
    }
}

pub fn random_observable(sys: &Arc<FinSystem>, r: &mut ChaCha8Rng) -> Observable {
    let values = (0..sys.len()).map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
    Observable::new(sys.clone(), values).unwrap()
}

pub fn random_rationals(n: usize, r: &mut ChaCha8Rng) -> Vec<BigRational> {
    (0..n).map(|_| rat(r.random_range(-50..=50), r.random_range(1..=30))).collect()
}

pub fn uniform_system(ids: &[&str], gens: Vec<(&str, Vec<usize>)>) -> Arc<FinSystem> {
    Arc::new(FinSystem::from_images(FinProbSpace::uniform(ids.iter().copied()).unwrap(), gens).unwrap())
}

/// `Z/4 → Z/2`, the running example.
pub fn cycle4_over_cycle2() -> FactorMap {
    let x = uniform_system(&["x1", "x2", "x3", "x4"], vec![("T", vec![1, 2, 3, 0])]);
    let y = uniform_system(&["y1", "y2"], vec![("S", vec![1, 0])]);
    FactorMap::new(x, y, vec![0, 1, 0, 1], vec![0]).unwrap()
}
