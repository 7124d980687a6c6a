//! Kron-reduced classical multi-machine model.
//!
//! Every machine is a constant emf behind the reduced admittance network:
//!
//! ```text
//! Pe_i = E_i * sum_j E_j * Y_ij * cos(delta_i - delta_j - phi_ij)
//! ```
//!
//! Load fluctuations scale the diagonal admittance magnitudes only, so the
//! noise enters the swing equation through `E_i^2 * G_ii * sigma_i`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const EQUILIBRIUM_MAX_ITER: usize = 50;
const EQUILIBRIUM_TOL: f64 = 1e-10;

/// The physical system: machine parameters, reduced admittance and noise
/// intensities. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    inertia: Vec<f64>,
    damping: Vec<f64>,
    emf: Vec<f64>,
    mech_power: Vec<f64>,
    y_mag: DMatrix<f64>,
    y_angle: DMatrix<f64>,
    sigma: Vec<f64>,
    ref_index: usize,
}

impl GridModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        inertia: Vec<f64>,
        damping: Vec<f64>,
        emf: Vec<f64>,
        mech_power: Vec<f64>,
        y_mag: DMatrix<f64>,
        y_angle: DMatrix<f64>,
        sigma: Vec<f64>,
        ref_index: usize,
    ) -> Result<Self> {
        let n = inertia.len();
        if n < 2 {
            return Err(Error::Input(format!("need at least 2 generators, got {n}")));
        }
        check_len("damping", n, damping.len())?;
        check_len("emf", n, emf.len())?;
        check_len("mechanical power", n, mech_power.len())?;
        check_len("sigma", n, sigma.len())?;
        check_len("admittance rows", n, y_mag.nrows())?;
        check_len("admittance columns", n, y_mag.ncols())?;
        check_len("admittance angle rows", n, y_angle.nrows())?;
        check_len("admittance angle columns", n, y_angle.ncols())?;
        if ref_index >= n {
            return Err(Error::Input(format!(
                "reference generator {ref_index} out of range for {n} generators"
            )));
        }
        let all = |v: &[f64], ok: fn(f64) -> bool| v.iter().all(|&x| x.is_finite() && ok(x));
        if !all(&inertia, |m| m > 0.0) {
            return Err(Error::Input("inertia coefficients must be positive".into()));
        }
        if !all(&damping, |d| d >= 0.0) {
            return Err(Error::Input("damping coefficients must be non-negative".into()));
        }
        if !all(&emf, |e| e > 0.0) {
            return Err(Error::Input("internal emf magnitudes must be positive".into()));
        }
        if !all(&sigma, |s| s >= 0.0) {
            return Err(Error::Input("load-fluctuation intensities must be non-negative".into()));
        }
        if !all(mech_power.as_slice(), |_| true) {
            return Err(Error::Input("mechanical powers must be finite".into()));
        }
        if !all(y_mag.as_slice(), |y| y >= 0.0) || !all(y_angle.as_slice(), |_| true) {
            return Err(Error::Input(
                "admittance magnitudes must be finite and non-negative".into(),
            ));
        }
        let scale = y_mag.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (y_mag[(i, j)] - y_mag[(j, i)]).abs() > 1e-12 * scale
                    || (y_angle[(i, j)] - y_angle[(j, i)]).abs() > 1e-12
                {
                    return Err(Error::Input(format!(
                        "admittance is not reciprocal between generators {} and {}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self {
            inertia,
            damping,
            emf,
            mech_power,
            y_mag,
            y_angle,
            sigma,
            ref_index,
        })
    }

    pub fn n(&self) -> usize {
        self.inertia.len()
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    pub fn emf(&self) -> &[f64] {
        &self.emf
    }

    pub fn mech_power(&self) -> &[f64] {
        &self.mech_power
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn ref_index(&self) -> usize {
        self.ref_index
    }

    pub fn y_mag(&self) -> &DMatrix<f64> {
        &self.y_mag
    }

    pub fn y_angle(&self) -> &DMatrix<f64> {
        &self.y_angle
    }

    /// Diagonal conductances `G_ii = Y_ii cos(phi_ii)`.
    pub fn self_conductance(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.y_mag[(i, i)] * self.y_angle[(i, i)].cos())
            .collect()
    }

    /// Per-machine magnitude of the stochastic load term, `E_i^2 G_ii sigma_i`.
    pub fn noise_gain(&self) -> Vec<f64> {
        self.self_conductance()
            .iter()
            .zip(&self.emf)
            .zip(&self.sigma)
            .map(|((g, e), s)| e * e * g * s)
            .collect()
    }

    pub fn with_mech_power(&self, mech_power: Vec<f64>) -> Result<Self> {
        check_len("mechanical power", self.n(), mech_power.len())?;
        let mut out = self.clone();
        out.mech_power = mech_power;
        Ok(out)
    }

    pub fn with_sigma(&self, sigma: Vec<f64>) -> Result<Self> {
        check_len("sigma", self.n(), sigma.len())?;
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Input("load-fluctuation intensities must be non-negative".into()));
        }
        let mut out = self.clone();
        out.sigma = sigma;
        Ok(out)
    }

    pub fn with_damping(&self, damping: Vec<f64>) -> Result<Self> {
        check_len("damping", self.n(), damping.len())?;
        if damping.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Input("damping coefficients must be non-negative".into()));
        }
        let mut out = self.clone();
        out.damping = damping;
        Ok(out)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GridFile =
            serde_json::from_str(text).map_err(|e| Error::parse("grid JSON", "<string>", e))?;
        file.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GridFile =
            serde_json::from_str(&text).map_err(|e| Error::parse("grid JSON", path, e))?;
        file.into_model()
    }

    pub fn to_file(&self) -> GridFile {
        GridFile::from_model(self)
    }
}

/// Power flow injections `P_e(delta)`, including the angle-independent
/// self-terms `E_i^2 Y_ii cos(-phi_ii)`.
pub fn electrical_power(delta: &[f64], model: &GridModel) -> Result<DVector<f64>> {
    let n = model.n();
    check_len("rotor angles", n, delta.len())?;
    let e = &model.emf;
    Ok(DVector::from_fn(n, |i, _| {
        let sum: f64 = (0..n)
            .map(|j| {
                e[j] * model.y_mag[(i, j)] * (delta[i] - delta[j] - model.y_angle[(i, j)]).cos()
            })
            .sum();
        e[i] * sum
    }))
}

/// Analytic angle Jacobian `dPe/d(delta)`. Rows sum to exactly zero.
pub fn jacobian_pe(delta: &[f64], model: &GridModel) -> Result<DMatrix<f64>> {
    let n = model.n();
    check_len("rotor angles", n, delta.len())?;
    let e = &model.emf;
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let v = e[i]
                * e[j]
                * model.y_mag[(i, j)]
                * (delta[i] - delta[j] - model.y_angle[(i, j)]).sin();
            jac[(i, j)] = v;
            diag -= v;
        }
        jac[(i, i)] = diag;
    }
    Ok(jac)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub delta: Vec<f64>,
    /// `Pe_ref(delta) - Pm_ref`: power the reference machine must pick up.
    pub slack_adjustment: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl Equilibrium {
    /// The model with the reference machine's mechanical power balanced.
    pub fn balanced_model(&self, model: &GridModel) -> Result<GridModel> {
        let mut pm = model.mech_power.clone();
        pm[model.ref_index] += self.slack_adjustment;
        model.with_mech_power(pm)
    }
}

/// Newton solve of `Pm - Pe(delta) = 0` on every non-reference machine,
/// with the reference angle pinned at `guess[ref_index]`.
pub fn solve_equilibrium(model: &GridModel, guess: &[f64]) -> Result<Equilibrium> {
    let n = model.n();
    check_len("equilibrium guess", n, guess.len())?;
    let r = model.ref_index;
    let free: Vec<usize> = (0..n).filter(|&i| i != r).collect();
    let mut delta = guess.to_vec();

    let mismatch = |delta: &[f64]| -> Result<DVector<f64>> {
        let pe = electrical_power(delta, model)?;
        Ok(DVector::from_iterator(
            free.len(),
            free.iter().map(|&i| model.mech_power[i] - pe[i]),
        ))
    };

    let mut f = mismatch(&delta)?;
    let mut iterations = 0;
    loop {
        let residual = f.amax();
        if !residual.is_finite() {
            break;
        }
        if residual <= EQUILIBRIUM_TOL {
            let pe = electrical_power(&delta, model)?;
            return Ok(Equilibrium {
                slack_adjustment: pe[r] - model.mech_power[r],
                delta,
                iterations,
                residual,
            });
        }
        if iterations == EQUILIBRIUM_MAX_ITER {
            break;
        }
        iterations += 1;
        let jac = jacobian_pe(&delta, model)?;
        // d(mismatch)/d(delta) = -J restricted to the free machines
        let sub = DMatrix::from_fn(free.len(), free.len(), |a, b| jac[(free[a], free[b])]);
        let step = sub
            .lu()
            .solve(&f)
            .filter(|s| s.iter().all(|x| x.is_finite()))
            .ok_or(Error::SingularJacobian {
                iteration: iterations,
            })?;
        for (k, &i) in free.iter().enumerate() {
            delta[i] += step[k];
        }
        f = mismatch(&delta)?;
    }
    Err(Error::NoEquilibrium {
        iterations,
        residual: f.amax(),
    })
}

/// Linearization around `(delta0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub delta0: Vec<f64>,
    /// `dPe/d(delta)` at `delta0`.
    pub jacobian: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearModel {
    pub fn n(&self) -> usize {
        self.delta0.len()
    }

    /// Copy of the model whose noise input has no component along the
    /// uniform-angle zero mode.
    ///
    /// The angle Jacobian always has zero row sums, so `A` carries an
    /// eigenvalue at 0 whose left eigenvector is `[l^T D, l^T M]` with
    /// `l^T J = 0`. Any noise with `l^T M B_w != 0` drives a random walk of
    /// the common angle and no stationary covariance exists. This removes
    /// the common-mode acceleration `1 (l^T M B_w) / (l^T M 1)` from the speed
    /// rows, which leaves every other mode's excitation untouched.
    pub fn without_common_mode_noise(&self, inertia: &[f64]) -> Result<Self> {
        let n = self.n();
        check_len("inertia", n, inertia.len())?;
        let svd = self.jacobian.transpose().svd(false, true);
        let v_t = svd.v_t.ok_or(Error::EigenSolver)?;
        let (kmin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .ok_or(Error::EigenSolver)?;
        let left_null: Vec<f64> = v_t.row(kmin).iter().copied().collect();
        let weight: Vec<f64> = left_null.iter().zip(inertia).map(|(l, m)| l * m).collect();
        let denom: f64 = weight.iter().sum();
        if denom.abs() < 1e-14 {
            return Err(Error::Input(
                "uniform-angle mode has no inertia-weighted left null vector".into(),
            ));
        }
        let mut b = self.b.clone();
        for col in 0..b.ncols() {
            let excitation: f64 = (0..n).map(|i| weight[i] * self.b[(n + i, col)]).sum();
            for i in 0..n {
                b[(n + i, col)] -= excitation / denom;
            }
        }
        Ok(Self { b, ..self.clone() })
    }
}

/// State matrix `A = [0 I; -M^-1 J  -M^-1 D]` and noise input
/// `B = [0; -M^-1 E^2 G Sigma]`.
pub fn build_state_matrices(model: &GridModel, delta0: &[f64]) -> Result<LinearModel> {
    let n = model.n();
    let jacobian = jacobian_pe(delta0, model)?;
    let a = state_matrix(&model.inertia, &model.damping, &jacobian)?;
    let gain = model.noise_gain();
    let mut b = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        b[(n + i, i)] = -gain[i] / model.inertia[i];
    }
    Ok(LinearModel {
        delta0: delta0.to_vec(),
        jacobian,
        a,
        b,
    })
}

/// Block state matrix from inertia, damping and an angle Jacobian.
pub fn state_matrix(inertia: &[f64], damping: &[f64], jacobian: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = inertia.len();
    check_len("damping", m, damping.len())?;
    check_len("jacobian rows", m, jacobian.nrows())?;
    check_len("jacobian columns", m, jacobian.ncols())?;
    if inertia.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Input("inertia coefficients must be positive".into()));
    }
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        a[(i, m + i)] = 1.0;
        for j in 0..m {
            a[(m + i, j)] = -jacobian[(i, j)] / inertia[i];
        }
        a[(m + i, m + i)] = -damping[i] / inertia[i];
    }
    Ok(a)
}

/// On-disk grid description. Generator and admittance indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub n: usize,
    pub ref_index: usize,
    pub generators: Vec<GeneratorRecord>,
    pub admittance: Vec<AdmittanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    #[serde(rename = "M")]
    pub inertia: f64,
    #[serde(rename = "D")]
    pub damping: f64,
    #[serde(rename = "E")]
    pub emf: f64,
    #[serde(rename = "Pm")]
    pub mech_power: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceEntry {
    pub i: usize,
    pub j: usize,
    pub magnitude: f64,
    pub angle_rad: f64,
}

impl GridFile {
    pub fn into_model(self) -> Result<GridModel> {
        let n = self.n;
        check_len("generator records", n, self.generators.len())?;
        if self.ref_index < 1 || self.ref_index > n {
            return Err(Error::Input(format!(
                "ref_index {} out of range 1..={n}",
                self.ref_index
            )));
        }
        let mut mag = DMatrix::zeros(n, n);
        let mut ang = DMatrix::zeros(n, n);
        let mut seen = DMatrix::from_element(n, n, false);
        for entry in &self.admittance {
            if entry.i < 1 || entry.i > n || entry.j < 1 || entry.j > n {
                return Err(Error::Input(format!(
                    "admittance entry ({}, {}) out of range 1..={n}",
                    entry.i, entry.j
                )));
            }
            let (i, j) = (entry.i - 1, entry.j - 1);
            for (r, c) in [(i, j), (j, i)] {
                if seen[(r, c)]
                    && (mag[(r, c)] != entry.magnitude || ang[(r, c)] != entry.angle_rad)
                {
                    return Err(Error::Input(format!(
                        "conflicting admittance entries for ({}, {})",
                        entry.i, entry.j
                    )));
                }
                mag[(r, c)] = entry.magnitude;
                ang[(r, c)] = entry.angle_rad;
                seen[(r, c)] = true;
            }
        }
        let g = &self.generators;
        GridModel::new(
            g.iter().map(|r| r.inertia).collect(),
            g.iter().map(|r| r.damping).collect(),
            g.iter().map(|r| r.emf).collect(),
            g.iter().map(|r| r.mech_power).collect(),
            mag,
            ang,
            g.iter().map(|r| r.sigma).collect(),
            self.ref_index - 1,
        )
    }

    pub fn from_model(model: &GridModel) -> Self {
        let n = model.n();
        let generators = (0..n)
            .map(|i| GeneratorRecord {
                inertia: model.inertia[i],
                damping: model.damping[i],
                emf: model.emf[i],
                mech_power: model.mech_power[i],
                sigma: model.sigma[i],
            })
            .collect();
        let mut admittance = Vec::new();
        for i in 0..n {
            for j in i..n {
                if model.y_mag[(i, j)] != 0.0 {
                    admittance.push(AdmittanceEntry {
                        i: i + 1,
                        j: j + 1,
                        magnitude: model.y_mag[(i, j)],
                        angle_rad: model.y_angle[(i, j)],
                    });
                }
            }
        }
        Self {
            n,
            ref_index: model.ref_index + 1,
            generators,
            admittance,
        }
    }
}
