//! Covariance-based recovery of the angle Jacobian and state matrix from
//! ambient PMU data, plus the stationary-covariance (Lyapunov) oracle.
//!
//! The stationary covariance of `dx = A x dt + B dW` satisfies
//! `A C + C A^T = -B B^T`. With `A` in swing-equation block form, the
//! off-diagonal block of that identity reads
//!
//! ```text
//! C_ww = M^-1 (J C_dd + D C_wd)
//! ```
//!
//! so `J = (M C_ww - D C_wd) C_dd^-1` needs only inertia, damping and
//! measured covariances.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{state_matrix, GridModel};
use crate::linalg;
use crate::report::{matrix_from_rows, matrix_rows, r12, read_json, write_json};
use crate::sim::{covariance_of_rows, PmuDataset};

/// Angle covariances worse conditioned than this are rejected.
pub const MAX_COVARIANCE_CONDITION: f64 = 1e12;

/// Largest state dimension solved through the Kronecker-vectorized system.
pub const KRONECKER_MAX_DIM: usize = 32;

/// Relative excitation below which a non-decaying mode is deflated.
pub const UNEXCITED_TOL: f64 = 1e-12;

/// Blocks of the stationary (or sample) covariance of `[d_delta; d_omega]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBlocks {
    pub dd: DMatrix<f64>,
    pub dw: DMatrix<f64>,
    pub wd: DMatrix<f64>,
    pub ww: DMatrix<f64>,
    pub sample_count: usize,
}

impl CovarianceBlocks {
    /// Splits a full `2m x 2m` covariance. `sample_count` is 0 for exact
    /// covariances.
    pub fn from_full(c: &DMatrix<f64>, sample_count: usize) -> Result<Self> {
        if c.nrows() != c.ncols() || c.nrows() % 2 != 0 {
            return Err(Error::Input(format!(
                "covariance must be square with even size, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        let m = c.nrows() / 2;
        Ok(Self {
            dd: c.view((0, 0), (m, m)).clone_owned(),
            dw: c.view((0, m), (m, m)).clone_owned(),
            wd: c.view((m, 0), (m, m)).clone_owned(),
            ww: c.view((m, m), (m, m)).clone_owned(),
            sample_count,
        })
    }

    pub fn m(&self) -> usize {
        self.dd.nrows()
    }

    pub fn full(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut c = DMatrix::zeros(2 * m, 2 * m);
        c.view_mut((0, 0), (m, m)).copy_from(&self.dd);
        c.view_mut((0, m), (m, m)).copy_from(&self.dw);
        c.view_mut((m, 0), (m, m)).copy_from(&self.wd);
        c.view_mut((m, m), (m, m)).copy_from(&self.ww);
        c
    }
}

/// Mean-removed, unbiased sample covariance of the stacked measurements.
pub fn sample_covariance(data: &PmuDataset) -> Result<CovarianceBlocks> {
    let count = data.sample_count();
    if count < 2 {
        return Err(Error::InsufficientData {
            samples: count,
            required: 2,
        });
    }
    let full = covariance_of_rows(data.rows(), 2 * data.m());
    CovarianceBlocks::from_full(&full, count)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianEstimate {
    pub jacobian: DMatrix<f64>,
    /// 2-norm condition number of `C_dd`.
    pub condition: f64,
}

/// `J_est = M C_ww C_dd^-1 - D C_wd C_dd^-1`.
pub fn estimate_jacobian(
    inertia: &[f64],
    damping: &[f64],
    cov: &CovarianceBlocks,
) -> Result<JacobianEstimate> {
    let m = cov.m();
    check_len("inertia", m, inertia.len())?;
    check_len("damping", m, damping.len())?;
    let condition = linalg::condition_number(&cov.dd);
    if !(condition <= MAX_COVARIANCE_CONDITION) {
        return Err(Error::IllConditionedCovariance { condition });
    }
    let rhs = DMatrix::from_fn(m, m, |i, j| {
        inertia[i] * cov.ww[(i, j)] - damping[i] * cov.wd[(i, j)]
    });
    // J C_dd = rhs  <=>  C_dd^T J^T = rhs^T
    let jt = cov
        .dd
        .transpose()
        .lu()
        .solve(&rhs.transpose())
        .ok_or(Error::IllConditionedCovariance {
            condition: f64::INFINITY,
        })?;
    Ok(JacobianEstimate {
        jacobian: jt.transpose(),
        condition,
    })
}

/// Estimated (sub)model for the PMU-equipped generators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedModel {
    pub jacobian: DMatrix<f64>,
    pub a_p: DMatrix<f64>,
    /// G_P, 0-based and ascending.
    pub available: Vec<usize>,
    /// G_A, 0-based.
    pub capable: Vec<usize>,
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    pub condition: f64,
    pub sample_count: usize,
}

impl EstimatedModel {
    pub fn m(&self) -> usize {
        self.available.len()
    }

    /// Positions of the control-capable generators within `available`.
    pub fn capable_local(&self) -> Vec<usize> {
        self.capable
            .iter()
            .filter_map(|g| self.available.iter().position(|a| a == g))
            .collect()
    }

    pub fn to_file(&self) -> EstimatedModelFile {
        EstimatedModelFile {
            available: self.available.iter().map(|g| g + 1).collect(),
            capable: self.capable.iter().map(|g| g + 1).collect(),
            inertia: self.inertia.iter().map(|&x| r12(x)).collect(),
            damping: self.damping.iter().map(|&x| r12(x)).collect(),
            j_est: matrix_rows(&self.jacobian),
            a_p: matrix_rows(&self.a_p),
            condition_number: r12(self.condition),
            sample_count: self.sample_count,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, &self.to_file())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json::<EstimatedModelFile>(path)?.into_model()
    }
}

/// JSON layout of an [`EstimatedModel`]; generator ids are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedModelFile {
    pub available: Vec<usize>,
    pub capable: Vec<usize>,
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    #[serde(rename = "J_est")]
    pub j_est: Vec<Vec<f64>>,
    #[serde(rename = "A_P")]
    pub a_p: Vec<Vec<f64>>,
    pub condition_number: f64,
    pub sample_count: usize,
}

impl EstimatedModelFile {
    pub fn into_model(self) -> Result<EstimatedModel> {
        if self.available.iter().any(|&g| g == 0) || self.capable.iter().any(|&g| g == 0) {
            return Err(Error::Input("generator ids are 1-based".into()));
        }
        let jacobian = matrix_from_rows(&self.j_est)?;
        let a_p = matrix_from_rows(&self.a_p)?;
        let m = self.available.len();
        check_len("J_est rows", m, jacobian.nrows())?;
        check_len("A_P rows", 2 * m, a_p.nrows())?;
        check_len("inertia", m, self.inertia.len())?;
        check_len("damping", m, self.damping.len())?;
        Ok(EstimatedModel {
            jacobian,
            a_p,
            available: self.available.iter().map(|g| g - 1).collect(),
            capable: self.capable.iter().map(|g| g - 1).collect(),
            inertia: self.inertia,
            damping: self.damping,
            condition: self.condition_number,
            sample_count: self.sample_count,
        })
    }
}

/// `A_P = [0 I; -M_P^-1 J_est  -M_P^-1 D_P]`.
pub fn assemble_state_matrix(
    inertia: &[f64],
    damping: &[f64],
    jacobian: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    state_matrix(inertia, damping, jacobian)
}

/// Full estimation chain for one PMU dataset: sample covariance, Jacobian
/// and state matrix restricted to the available generators.
pub fn estimate_model(data: &PmuDataset, grid: &GridModel) -> Result<EstimatedModel> {
    if let Some(&g) = data.available.iter().find(|&&g| g >= grid.n()) {
        return Err(Error::Input(format!(
            "PMU channel G{} not present in a {}-machine grid",
            g + 1,
            grid.n()
        )));
    }
    // C_dd is singular with fewer than m + 1 samples
    let required = data.m() + 1;
    if data.sample_count() < required {
        return Err(Error::InsufficientData {
            samples: data.sample_count(),
            required,
        });
    }
    let inertia: Vec<f64> = data.available.iter().map(|&g| grid.inertia()[g]).collect();
    let damping: Vec<f64> = data.available.iter().map(|&g| grid.damping()[g]).collect();
    let cov = sample_covariance(data)?;
    let est = estimate_jacobian(&inertia, &damping, &cov)?;
    let a_p = assemble_state_matrix(&inertia, &damping, &est.jacobian)?;
    Ok(EstimatedModel {
        jacobian: est.jacobian,
        a_p,
        available: data.available.clone(),
        capable: data.capable.clone(),
        inertia,
        damping,
        condition: est.condition,
        sample_count: cov.sample_count,
    })
}

/// Stationary covariance: solves `A C + C A^T = -B B^T`.
///
/// Eigenvalues with non-negative real part are allowed only when `B` leaves
/// them unexcited; they are deflated before the solve. Small systems go
/// through the Kronecker-vectorized linear system, larger ones through
/// Bartels–Stewart on the real Schur form.
pub fn lyapunov_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Input("state matrix must be square".into()));
    }
    check_len("noise input rows", n, b.nrows())?;
    let a_stable = deflate_unexcited(a, b)?;
    let q = -(b * b.transpose());
    let c = if n <= KRONECKER_MAX_DIM {
        lyapunov_kronecker(&a_stable, &q)?
    } else {
        lyapunov_bartels_stewart(&a_stable, &q)?
    };
    Ok((&c + c.transpose()) * 0.5)
}

fn deflate_unexcited(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let scale = a.amax().max(1.0);
    let values = linalg::eigenvalues(a)?;
    if values.iter().all(|l| l.re < -1e-9 * scale) {
        return Ok(a.clone());
    }
    let (values, right) = linalg::eigen(a)?;
    let left = right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DefectiveMatrix {
            cluster: values.clone(),
        })?;
    let bc = linalg::to_complex(b);
    let b_norm = b.norm();
    let mut shift = nalgebra::DMatrix::<Complex64>::zeros(n, n);
    for (i, &l) in values.iter().enumerate() {
        if l.re < -1e-9 * scale {
            continue;
        }
        let psi = left.row(i);
        let excitation = if b_norm == 0.0 {
            0.0
        } else {
            (psi * &bc).norm() / (psi.norm() * b_norm)
        };
        if excitation > UNEXCITED_TOL {
            return Err(Error::NoStationaryCovariance { eigenvalue: l });
        }
        // move the eigenvalue to -1, leaving the rest of the spectrum alone
        let phi = right.column(i);
        shift += (phi * psi) * (l + Complex64::new(1.0, 0.0));
    }
    Ok(a - shift.map(|z| z.re))
}

/// `(I (x) A + A (x) I) vec(C) = vec(Q)` for `A C + C A^T = Q`.
pub fn lyapunov_kronecker(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let vec_c = op
        .lu()
        .solve(&rhs)
        .ok_or(Error::NoStationaryCovariance {
            eigenvalue: Complex64::new(0.0, 0.0),
        })?;
    Ok(DMatrix::from_column_slice(n, n, vec_c.as_slice()))
}

/// Bartels–Stewart for `A C + C A^T = Q` using the real Schur form
/// `A = U T U^T`; the transformed equation `T Y + Y T^T = U^T Q U` is
/// solved one diagonal block of `T` at a time, right to left.
pub fn lyapunov_bartels_stewart(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenSolver)?;
    let (u, t) = schur.unpack();
    let f = u.transpose() * q * &u;
    let mut y = DMatrix::<f64>::zeros(n, n);
    let eye = DMatrix::<f64>::identity(n, n);
    let singular = || Error::NoStationaryCovariance {
        eigenvalue: Complex64::new(0.0, 0.0),
    };

    let mut end = n;
    while end > 0 {
        let size = if end >= 2 && t[(end - 1, end - 2)] != 0.0 { 2 } else { 1 };
        let start = end - size;
        // right-hand side: F_J minus contributions of already solved columns
        let mut rhs = f.columns(start, size).clone_owned();
        for k in end..n {
            for (c, j) in (start..end).enumerate() {
                let tjk = t[(j, k)];
                if tjk != 0.0 {
                    let yk = y.column(k).clone_owned();
                    rhs.column_mut(c).axpy(-tjk, &yk, 1.0);
                }
            }
        }
        if size == 1 {
            let op = &t + &eye * t[(start, start)];
            let col = op.lu().solve(&rhs.column(0).clone_owned()).ok_or_else(singular)?;
            y.set_column(start, &col);
        } else {
            let s = t.view((start, start), (2, 2)).clone_owned();
            let mut op = DMatrix::<f64>::zeros(2 * n, 2 * n);
            op.view_mut((0, 0), (n, n)).copy_from(&(&t + &eye * s[(0, 0)]));
            op.view_mut((0, n), (n, n)).copy_from(&(&eye * s[(0, 1)]));
            op.view_mut((n, 0), (n, n)).copy_from(&(&eye * s[(1, 0)]));
            op.view_mut((n, n), (n, n)).copy_from(&(&t + &eye * s[(1, 1)]));
            let stacked = nalgebra::DVector::from_column_slice(rhs.as_slice());
            let sol = op.lu().solve(&stacked).ok_or_else(singular)?;
            y.set_column(start, &sol.rows(0, n).clone_owned());
            y.set_column(start + 1, &sol.rows(n, n).clone_owned());
        }
        end = start;
    }
    Ok(&u * y * u.transpose())
}

/// `|A C + C A^T + B B^T|_F / |B B^T|_F`.
pub fn lyapunov_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let bbt = b * b.transpose();
    let r = a * c + c * a.transpose() + &bbt;
    let denom = bbt.norm();
    if denom == 0.0 {
        r.norm()
    } else {
        r.norm() / denom
    }
}
