#![allow(dead_code)]

use modalwadc::grid::{build_state_matrices, GridModel, LinearModel};
use modalwadc::synthetic::{self, MultiArea};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct System {
    pub spec: MultiArea,
    pub grid: GridModel,
    pub linear: LinearModel,
}

pub fn system(spec: MultiArea) -> System {
    let grid = spec.build().unwrap();
    let linear = build_state_matrices(&grid, &spec.delta).unwrap();
    System { spec, grid, linear }
}

pub fn four() -> System {
    system(synthetic::four_machine())
}

pub fn eight() -> System {
    system(synthetic::eight_machine())
}

pub fn sixteen() -> System {
    system(synthetic::sixteen_machine())
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Random matrix with spectrum shifted into the open left half plane.
pub fn random_stable(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let max_re = modalwadc::linalg::eigenvalues(&a)
        .unwrap()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    for i in 0..n {
        a[(i, i)] -= max_re + 0.5;
    }
    a
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}
