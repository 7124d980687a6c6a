//! Eigen-analysis of a state matrix: conjugate pairing, frequency / damping /
//! settling-time metrics, participation factors and critical-mode
//! classification.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::report::{fmt_sig, j12, r12, write_csv_rows, write_json};

/// Imaginary parts below this (rad/s) make a mode non-oscillatory.
pub const OSCILLATORY_MIN_OMEGA: f64 = 1e-6;

/// Eigenvalue condition number above which the matrix is treated as defective.
pub const DEFECTIVE_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    InterArea,
    Local,
    NonOscillatory,
}

/// How a generator's participation in a mode is read off the state rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Participation of the speed state only.
    #[default]
    Speed,
    /// Larger of the angle and speed participations.
    MaxAngleSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticalityCriteria {
    pub zeta_min: f64,
    pub ts_max: f64,
    /// Inter-area band in Hz, endpoints inclusive.
    pub band: (f64, f64),
}

impl Default for CriticalityCriteria {
    fn default() -> Self {
        Self {
            zeta_min: 0.10,
            ts_max: 10.0,
            band: (0.1, 1.0),
        }
    }
}

impl CriticalityCriteria {
    pub fn in_band(&self, f: f64) -> bool {
        f >= self.band.0 && f <= self.band.1
    }

    pub fn is_critical(&self, f: f64, zeta: f64, t_s: f64) -> bool {
        self.in_band(f) && (zeta < self.zeta_min || t_s > self.ts_max)
    }

    /// Closed-loop targets: damping and settling-time thresholds both met.
    pub fn meets_targets(&self, zeta: f64, t_s: f64) -> bool {
        zeta >= self.zeta_min && t_s <= self.ts_max
    }
}

/// `(f [Hz], zeta, t_S [s])` for an eigenvalue `eta + j omega`.
pub fn mode_metrics(lambda: Complex64) -> (f64, f64, f64) {
    let f = lambda.im.abs() / (2.0 * PI);
    let mag = lambda.norm();
    let zeta = if mag == 0.0 { 0.0 } else { -lambda.re / mag };
    let t_s = if lambda.re == 0.0 {
        f64::INFINITY
    } else {
        4.0 / lambda.re.abs()
    };
    (f, zeta, t_s)
}

/// One eigenvalue, or one conjugate pair stored through its `omega > 0` member.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub lambda: Complex64,
    /// Position of `lambda` (and of its conjugate) in the eigenvalue list.
    pub index_plus: usize,
    pub index_minus: Option<usize>,
    pub f: f64,
    pub zeta: f64,
    pub t_s: f64,
    pub band: Band,
    pub critical: bool,
}

impl Mode {
    pub fn is_oscillatory(&self) -> bool {
        self.index_minus.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct ModalSolution {
    pub eigenvalues: Vec<Complex64>,
    /// Right eigenvectors as columns.
    pub right: DMatrix<Complex64>,
    /// Left eigenvectors as rows, scaled so that `left * right = I`.
    pub left: DMatrix<Complex64>,
    /// Oscillatory modes by ascending frequency, then real modes by
    /// descending real part.
    pub modes: Vec<Mode>,
    /// `|phi_ji psi_ij|`, one column per entry of `modes`.
    pub participation: DMatrix<f64>,
    pub criteria: CriticalityCriteria,
}

impl ModalSolution {
    pub fn state_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of machines (half the state dimension).
    pub fn m(&self) -> usize {
        self.state_dim() / 2
    }

    pub fn phi(&self, eig: usize) -> DVector<Complex64> {
        self.right.column(eig).clone_owned()
    }

    pub fn psi(&self, eig: usize) -> RowDVector<Complex64> {
        self.left.row(eig).clone_owned()
    }

    /// Critical modes (indices into `modes`), ascending in frequency.
    pub fn critical(&self) -> Vec<usize> {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, md)| md.critical)
            .map(|(i, _)| i)
            .collect()
    }

    /// Re-labels bands and critical flags under new thresholds.
    pub fn reclassify(&mut self, criteria: CriticalityCriteria) {
        self.criteria = criteria;
        for md in &mut self.modes {
            if md.is_oscillatory() {
                md.band = if criteria.in_band(md.f) {
                    Band::InterArea
                } else {
                    Band::Local
                };
                md.critical = criteria.is_critical(md.f, md.zeta, md.t_s);
            }
        }
    }

    /// Complex participation `phi_ji psi_ij` of every state in one mode.
    pub fn complex_participation(&self, mode: usize) -> Vec<Complex64> {
        let e = self.modes[mode].index_plus;
        (0..self.state_dim())
            .map(|j| self.right[(j, e)] * self.left[(e, j)])
            .collect()
    }

    /// Generators (local indices) ordered by participation in `mode`,
    /// descending; equal values keep index order.
    pub fn generator_ranking(&self, mode: usize, aggregation: Aggregation) -> Vec<(usize, f64)> {
        let m = self.m();
        let mut ranked: Vec<(usize, f64)> = (0..m)
            .map(|g| {
                let speed = self.participation[(m + g, mode)];
                let value = match aggregation {
                    Aggregation::Speed => speed,
                    Aggregation::MaxAngleSpeed => speed.max(self.participation[(g, mode)]),
                };
                (g, value)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }

    /// Mode report with participant ids mapped through `generators`
    /// (global, 0-based) and written 1-based.
    pub fn report(&self, generators: &[usize], top: usize, aggregation: Aggregation) -> ModeReport {
        let modes = self
            .modes
            .iter()
            .enumerate()
            .map(|(i, md)| ModeRecord {
                mode: i + 1,
                lambda_re: r12(md.lambda.re),
                lambda_im: r12(md.lambda.im),
                f: r12(md.f),
                zeta: r12(md.zeta),
                t_s: j12(md.t_s),
                band: md.band,
                critical: md.critical,
                top_participants: self
                    .generator_ranking(i, aggregation)
                    .into_iter()
                    .take(top)
                    .map(|(g, v)| (generators.get(g).copied().unwrap_or(g) + 1, r12(v)))
                    .collect(),
            })
            .collect();
        ModeReport {
            state_dim: self.state_dim(),
            generators: generators.iter().map(|g| g + 1).collect(),
            criteria: self.criteria,
            critical: self.critical().iter().map(|i| i + 1).collect(),
            modes,
        }
    }
}

/// Full eigen-decomposition with biorthonormal left/right eigenvectors,
/// classified under the default criteria.
pub fn modal_decomposition(a: &DMatrix<f64>) -> Result<ModalSolution> {
    modal_decomposition_with(a, CriticalityCriteria::default())
}

pub fn modal_decomposition_with(
    a: &DMatrix<f64>,
    criteria: CriticalityCriteria,
) -> Result<ModalSolution> {
    if a.nrows() != a.ncols() {
        return Err(Error::Input(format!(
            "state matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let (values, right) = linalg::eigen(a)?;
    let left = right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DefectiveMatrix {
            cluster: values.clone(),
        })?;
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for i in 0..n {
        let kappa = left.row(i).norm() * right.column(i).norm();
        if !(kappa <= DEFECTIVE_CONDITION) {
            let li = values[i];
            let cluster = values
                .iter()
                .copied()
                .filter(|l| (l - li).norm() <= 1e-4 * scale)
                .collect();
            return Err(Error::DefectiveMatrix { cluster });
        }
    }

    let pair_tol = 1e-8 * scale;
    let mut used = vec![false; n];
    let mut modes = Vec::new();
    for i in 0..n {
        if used[i] {
            continue;
        }
        let li = values[i];
        if li.im.abs() < OSCILLATORY_MIN_OMEGA {
            used[i] = true;
            modes.push(build_mode(li, i, None, &criteria));
            continue;
        }
        let partner = (0..n)
            .filter(|&k| k != i && !used[k] && values[k].im.abs() >= OSCILLATORY_MIN_OMEGA)
            .map(|k| (k, (values[k] - li.conj()).norm()))
            .filter(|&(_, d)| d <= pair_tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .ok_or_else(|| Error::Gauge(format!("eigenvalue {li} has no conjugate partner")))?;
        used[i] = true;
        used[partner] = true;
        let (plus, minus) = if li.im > 0.0 { (i, partner) } else { (partner, i) };
        modes.push(build_mode(values[plus], plus, Some(minus), &criteria));
    }
    modes.sort_by(|a, b| match (a.is_oscillatory(), b.is_oscillatory()) {
        (true, true) => a.f.total_cmp(&b.f).then(a.index_plus.cmp(&b.index_plus)),
        (false, false) => b.lambda.re.total_cmp(&a.lambda.re).then(a.index_plus.cmp(&b.index_plus)),
        (true, false) => std::cmp::Ordering::Less,
        (false, true) => std::cmp::Ordering::Greater,
    });

    let participation = DMatrix::from_fn(n, modes.len(), |j, k| {
        let e = modes[k].index_plus;
        (right[(j, e)] * left[(e, j)]).norm()
    });
    Ok(ModalSolution {
        eigenvalues: values,
        right,
        left,
        modes,
        participation,
        criteria,
    })
}

fn build_mode(
    lambda: Complex64,
    plus: usize,
    minus: Option<usize>,
    criteria: &CriticalityCriteria,
) -> Mode {
    let (f, zeta, t_s) = mode_metrics(lambda);
    let (band, critical) = if minus.is_some() {
        let band = if criteria.in_band(f) { Band::InterArea } else { Band::Local };
        (band, criteria.is_critical(f, zeta, t_s))
    } else {
        (Band::NonOscillatory, false)
    };
    Mode {
        lambda,
        index_plus: plus,
        index_minus: minus,
        f,
        zeta,
        t_s,
        band,
        critical,
    }
}

/// Critical modes under `criteria`, ascending in frequency.
pub fn classify_critical(sol: &ModalSolution, criteria: &CriticalityCriteria) -> Vec<usize> {
    sol.modes
        .iter()
        .enumerate()
        .filter(|(_, md)| md.is_oscillatory() && criteria.is_critical(md.f, md.zeta, md.t_s))
        .map(|(i, _)| i)
        .collect()
}

pub fn participation_matrix(sol: &ModalSolution) -> &DMatrix<f64> {
    &sol.participation
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub mode: usize,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub f: f64,
    pub zeta: f64,
    /// `null` when the mode is undamped.
    pub t_s: Option<f64>,
    pub band: Band,
    pub critical: bool,
    /// `(generator id, participation)`, 1-based ids.
    pub top_participants: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub state_dim: usize,
    pub generators: Vec<usize>,
    pub criteria: CriticalityCriteria,
    pub critical: Vec<usize>,
    pub modes: Vec<ModeRecord>,
}

impl ModeReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    /// Oscillatory modes as `mode,f_hz,zeta_pct,t_s,band,critical`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self
            .modes
            .iter()
            .filter(|r| r.band != Band::NonOscillatory)
            .map(|r| {
                vec![
                    r.mode.to_string(),
                    fmt_sig(r.f, 6),
                    fmt_sig(100.0 * r.zeta, 6),
                    r.t_s.map_or("inf".to_string(), |t| fmt_sig(t, 6)),
                    serde_json::to_value(r.band)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    r.critical.to_string(),
                ]
            });
        write_csv_rows(
            path,
            &["mode", "f_hz", "zeta_pct", "t_s", "band", "critical"],
            rows,
        )
    }
}
