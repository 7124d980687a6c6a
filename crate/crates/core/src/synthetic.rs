//! Deterministic multi-area test systems built from the classical model.
//!
//! Generators are grouped into tightly coupled areas joined by weak ties,
//! which produces low-frequency inter-area modes with poor damping next to
//! well-damped local modes. Line strengths are varied with low-discrepancy
//! sequences so that no two machines are exactly alike.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{electrical_power, GridModel};

pub const SYSTEM_FREQUENCY_HZ: f64 = 60.0;
pub const DEFAULT_SIGMA: f64 = 0.01;

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Recipe for a multi-area grid. `h` are inertia constants in seconds and
/// `damping_ratio` gives `D_i / M_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiArea {
    pub areas: Vec<Vec<usize>>,
    pub h: Vec<f64>,
    pub damping_ratio: Vec<f64>,
    pub emf: Vec<f64>,
    pub intra: f64,
    /// Tie strength between area pairs `(a, b)` with `a < b`.
    pub inter: Vec<((usize, usize), f64)>,
    pub self_conductance: f64,
    /// Operating point; mechanical powers are chosen to make it an equilibrium.
    pub delta: Vec<f64>,
    pub sigma: f64,
}

impl MultiArea {
    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn build(&self) -> Result<GridModel> {
        let n = self.n();
        let mut area_of = vec![usize::MAX; n];
        for (k, area) in self.areas.iter().enumerate() {
            for &i in area {
                if i >= n || area_of[i] != usize::MAX {
                    return Err(Error::Input(format!("bad area membership for generator {i}")));
                }
                area_of[i] = k;
            }
        }
        if area_of.contains(&usize::MAX) {
            return Err(Error::Input("every generator must belong to an area".into()));
        }
        let tie = |a: usize, b: usize| {
            let key = (a.min(b), a.max(b));
            self.inter
                .iter()
                .find(|(k, _)| *k == key)
                .map_or(0.0, |(_, y)| *y)
        };

        let mut y = DMatrix::zeros(n, n);
        let mut phi = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.8 + 0.4 * frac(0.618_033_988_7 * (i + 1) as f64 + 0.414_213_562_4 * (j + 1) as f64);
                let (a, b) = (area_of[i], area_of[j]);
                let yij = if a == b { self.intra * v } else { tie(a, b) * v };
                y[(i, j)] = yij;
                y[(j, i)] = yij;
                if yij > 0.0 {
                    phi[(i, j)] = PI / 2.0 + 0.05;
                    phi[(j, i)] = PI / 2.0 + 0.05;
                }
            }
        }
        for i in 0..n {
            let row: f64 = (0..n).map(|j| y[(i, j)]).sum();
            y[(i, i)] = self.self_conductance * (0.8 + 0.4 * frac(0.754_877_666_2 * (i + 1) as f64)) + row;
            phi[(i, i)] = -1.2;
        }

        let omega_s = 2.0 * PI * SYSTEM_FREQUENCY_HZ;
        let inertia: Vec<f64> = self.h.iter().map(|h| 2.0 * h / omega_s).collect();
        let damping: Vec<f64> = inertia.iter().zip(&self.damping_ratio).map(|(m, r)| m * r).collect();
        let provisional = GridModel::new(
            inertia.clone(),
            damping.clone(),
            self.emf.clone(),
            vec![0.0; n],
            y.clone(),
            phi.clone(),
            vec![self.sigma; n],
            0,
        )?;
        let pm = electrical_power(&self.delta, &provisional)?;
        provisional.with_mech_power(pm.iter().copied().collect())
    }
}

/// Two tightly coupled machines plus two single-machine areas.
pub fn four_machine() -> MultiArea {
    MultiArea {
        areas: vec![vec![0, 1], vec![2], vec![3]],
        h: vec![6.0, 5.0, 5.5, 6.5],
        damping_ratio: vec![0.45, 0.40, 0.5, 0.42],
        emf: vec![1.04, 1.03, 1.05, 1.02],
        intra: 1.0,
        inter: vec![((0, 1), 0.12), ((1, 2), 0.08), ((0, 2), 0.02)],
        self_conductance: 0.4,
        delta: vec![0.2, 0.15, 0.0, -0.15],
        sigma: DEFAULT_SIGMA,
    }
}

/// Three areas of 3, 3 and 2 machines.
pub fn eight_machine() -> MultiArea {
    MultiArea {
        areas: vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7]],
        h: vec![6.5, 5.5, 6.0, 5.0, 6.2, 4.8, 7.0, 5.8],
        damping_ratio: vec![0.45, 0.36, 0.40, 0.32, 0.54, 0.36, 0.43, 0.36],
        emf: vec![1.05, 1.03, 1.04, 1.02, 1.06, 1.03, 1.05, 1.01],
        intra: 1.0,
        inter: vec![((0, 1), 0.06), ((1, 2), 0.05), ((0, 2), 0.01)],
        self_conductance: 0.4,
        delta: vec![0.3, 0.25, 0.2, 0.0, -0.05, 0.02, -0.2, -0.25],
        sigma: DEFAULT_SIGMA,
    }
}

/// Four areas of four machines in a ring.
pub fn sixteen_machine() -> MultiArea {
    let n = 16;
    let h: Vec<f64> = (0..n).map(|i| 4.8 + 2.4 * frac(0.381_966 * (i + 1) as f64)).collect();
    let damping_ratio: Vec<f64> = (0..n).map(|i| 0.32 + 0.2 * frac(0.723_607 * (i + 1) as f64)).collect();
    let emf: Vec<f64> = (0..n).map(|i| 1.01 + 0.05 * frac(0.5698 * (i + 1) as f64)).collect();
    let delta: Vec<f64> = (0..n)
        .map(|i| {
            let area = (i / 4) as f64;
            0.3 - 0.2 * area + 0.05 * frac(0.318 * (i + 1) as f64)
        })
        .collect();
    MultiArea {
        areas: (0..4).map(|a| (4 * a..4 * a + 4).collect()).collect(),
        h,
        damping_ratio,
        emf,
        intra: 1.0,
        inter: vec![((0, 1), 0.05), ((1, 2), 0.05), ((2, 3), 0.04), ((0, 3), 0.02)],
        self_conductance: 0.4,
        delta,
        sigma: DEFAULT_SIGMA,
    }
}
