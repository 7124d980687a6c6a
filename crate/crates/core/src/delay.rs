//! Rightmost characteristic roots of the delayed closed loop
//! `x'(t) = A0 x(t) + A1 x(t - tau)`, with `A0 = A_P` and `A1 = Bc K`.
//!
//! The delay system is rewritten as an abstract Cauchy problem on the
//! history segment `[-tau, 0]` and discretized by Chebyshev collocation;
//! eigenvalues of the resulting `d N x d N` matrix approximate the roots of
//! `det(-s I + A0 + A1 e^{-s tau}) = 0`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::modal::mode_metrics;
use crate::report::{fmt_sig, write_csv_rows};

/// Roots left of this real part are not reported.
pub const REAL_PART_FLOOR: f64 = -20.0;
pub const RESIDUAL_TOL: f64 = 1e-6;
pub const MIN_ORDER: usize = 8;
pub const DEFAULT_ORDER: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpectrum {
    pub tau_d: f64,
    pub order: usize,
    /// Accepted roots, descending real part.
    pub rightmost: Vec<Complex64>,
    /// Candidates in the region of interest that failed the residual check.
    pub discarded: Vec<(Complex64, f64)>,
}

impl DelaySpectrum {
    /// Largest real part among oscillatory roots.
    pub fn rightmost_oscillatory_real(&self) -> f64 {
        self.rightmost
            .iter()
            .filter(|s| s.im.abs() >= crate::modal::OSCILLATORY_MIN_OMEGA)
            .map(|s| s.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Accepted root nearest to `target` in the upper half plane.
    pub fn nearest(&self, target: Complex64) -> Option<Complex64> {
        self.rightmost
            .iter()
            .copied()
            .filter(|s| s.im >= 0.0)
            .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
    }
}

/// Chebyshev points `x_j = cos(j pi / (N-1))` and the differentiation matrix.
pub fn chebyshev(order: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = order;
    let x: Vec<f64> = (0..n)
        .map(|j| (std::f64::consts::PI * j as f64 / (n - 1) as f64).cos())
        .collect();
    let c: Vec<f64> = (0..n)
        .map(|j| {
            let w = if j == 0 || j == n - 1 { 2.0 } else { 1.0 };
            if j % 2 == 0 {
                w
            } else {
                -w
            }
        })
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[(i, j)] = (c[i] / c[j]) / (x[i] - x[j]);
            }
        }
        let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -row_sum;
    }
    (x, d)
}

/// `-s I + A0 + A1 e^{-s tau}`.
pub fn characteristic_matrix(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    tau: f64,
    s: Complex64,
) -> DMatrix<Complex64> {
    let decay = (-s * tau).exp();
    let mut t = linalg::to_complex(a0) + linalg::to_complex(a1) * decay;
    for i in 0..t.nrows() {
        t[(i, i)] -= s;
    }
    t
}

fn relative_residual(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    tau: f64,
    s: Complex64,
    v: &DVector<Complex64>,
) -> f64 {
    let r = characteristic_matrix(a0, a1, tau, s) * v;
    r.norm() / v.norm()
}

/// Newton on `T(s) v = 0, c^H v = 1`.
fn refine(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    tau: f64,
    s0: Complex64,
    v0: &DVector<Complex64>,
) -> Option<(Complex64, DVector<Complex64>)> {
    let d = a0.nrows();
    let c = v0 / Complex64::new(v0.norm_squared(), 0.0);
    let mut s = s0;
    let mut v = v0.clone();
    for _ in 0..4 {
        let t = characteristic_matrix(a0, a1, tau, s);
        let mut dt = linalg::to_complex(a1) * (-(-s * tau).exp() * tau);
        for i in 0..d {
            dt[(i, i)] -= Complex64::new(1.0, 0.0);
        }
        let mut jac = DMatrix::<Complex64>::zeros(d + 1, d + 1);
        jac.view_mut((0, 0), (d, d)).copy_from(&t);
        jac.view_mut((0, d), (d, 1)).copy_from(&(&dt * &v));
        for j in 0..d {
            jac[(d, j)] = c[j].conj();
        }
        let mut rhs = DVector::<Complex64>::zeros(d + 1);
        rhs.rows_mut(0, d).copy_from(&(-(&t * &v)));
        rhs[d] = Complex64::new(1.0, 0.0) - c.dotc(&v);
        let step = jac.lu().solve(&rhs)?;
        v += step.rows(0, d);
        s += step[d];
        if !s.re.is_finite() || !s.im.is_finite() {
            return None;
        }
    }
    Some((s, v))
}

/// Rightmost roots of the delayed closed loop with `order` collocation nodes.
pub fn delayed_spectrum(
    a_p: &DMatrix<f64>,
    bc: &DMatrix<f64>,
    k: &DMatrix<f64>,
    tau_d: f64,
    order: usize,
) -> Result<DelaySpectrum> {
    let d = a_p.nrows();
    if a_p.ncols() != d || bc.shape() != (d, d) || k.shape() != (d, d) {
        return Err(Error::Input("A_P, Bc and K must be square of equal size".into()));
    }
    if !(tau_d >= 0.0) || !tau_d.is_finite() {
        return Err(Error::Input(format!("delay must be finite and non-negative, got {tau_d}")));
    }
    if order < MIN_ORDER {
        return Err(Error::Input(format!(
            "need at least {MIN_ORDER} collocation nodes, got {order}"
        )));
    }
    let a1 = bc * k;

    let (values, vectors) = if tau_d == 0.0 {
        linalg::eigen(&(a_p + &a1))?
    } else {
        let (_, dm) = chebyshev(order);
        let dim = d * order;
        let mut op = DMatrix::<f64>::zeros(dim, dim);
        op.view_mut((0, 0), (d, d)).copy_from(a_p);
        op.view_mut((0, (order - 1) * d), (d, d)).copy_from(&a1);
        let scale = 2.0 / tau_d;
        for i in 1..order {
            for j in 0..order {
                let w = scale * dm[(i, j)];
                if w != 0.0 {
                    for r in 0..d {
                        op[(i * d + r, j * d + r)] = w;
                    }
                }
            }
        }
        linalg::eigen(&op)?
    };

    let mut rightmost = Vec::new();
    let mut discarded = Vec::new();
    for (i, &s) in values.iter().enumerate() {
        if s.re <= REAL_PART_FLOOR {
            continue;
        }
        let head: DVector<Complex64> = vectors.view((0, i), (d, 1)).column(0).clone_owned();
        if head.norm() == 0.0 {
            discarded.push((s, f64::INFINITY));
            continue;
        }
        let mut root = s;
        let mut res = relative_residual(a_p, &a1, tau_d, s, &head);
        if tau_d > 0.0 && res > 0.0 {
            if let Some((sr, vr)) = refine(a_p, &a1, tau_d, s, &head) {
                let moved = (sr - s).norm() <= 1e-3 * s.norm().max(1.0);
                let rr = relative_residual(a_p, &a1, tau_d, sr, &vr);
                if moved && rr < res {
                    root = sr;
                    res = rr;
                }
            }
        }
        if res <= RESIDUAL_TOL && root.re > REAL_PART_FLOOR {
            rightmost.push(root);
        } else {
            discarded.push((root, res));
        }
    }
    rightmost.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(DelaySpectrum {
        tau_d,
        order,
        rightmost,
        discarded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySweepRow {
    pub tau_d: f64,
    /// Smallest damping ratio among the tracked designed modes.
    pub worst_mode_zeta: f64,
    /// Largest real part among oscillatory roots.
    pub rightmost_real: f64,
    /// Tracked root of each designed mode.
    pub modes: Vec<Complex64>,
}

/// Spectra over a delay grid. Designed modes are followed by continuation
/// from their undelayed closed-loop eigenvalues `start` through the delays
/// in ascending order.
pub fn delay_sweep(
    a_p: &DMatrix<f64>,
    bc: &DMatrix<f64>,
    k: &DMatrix<f64>,
    taus: &[f64],
    order: usize,
    start: &[Complex64],
) -> Result<Vec<DelaySweepRow>> {
    let mut sorted: Vec<f64> = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spectra: Vec<DelaySpectrum> = sorted
        .par_iter()
        .map(|&tau| delayed_spectrum(a_p, bc, k, tau, order))
        .collect::<Result<_>>()?;
    let mut tracked: Vec<Complex64> = start.to_vec();
    let mut rows = Vec::with_capacity(spectra.len());
    for spec in &spectra {
        for t in tracked.iter_mut() {
            if let Some(s) = spec.nearest(*t) {
                *t = s;
            }
        }
        let worst = tracked
            .iter()
            .map(|&s| mode_metrics(s).1)
            .fold(f64::INFINITY, f64::min);
        rows.push(DelaySweepRow {
            tau_d: spec.tau_d,
            worst_mode_zeta: if tracked.is_empty() { f64::NAN } else { worst },
            rightmost_real: spec.rightmost_oscillatory_real(),
            modes: tracked.clone(),
        });
    }
    Ok(rows)
}

pub fn save_sweep_csv(path: impl AsRef<Path>, rows: &[DelaySweepRow]) -> Result<()> {
    let fmt = |x: f64| if x.is_nan() { String::new() } else { fmt_sig(x, 9) };
    write_csv_rows(
        path,
        &["tau_d", "worst_mode_zeta", "rightmost_real"],
        rows.iter()
            .map(|r| vec![fmt(r.tau_d), fmt(r.worst_mode_zeta), fmt(r.rightmost_real)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_differentiates_polynomials_exactly() {
        let (x, d) = chebyshev(10);
        let f = DVector::from_iterator(10, x.iter().map(|&t| t.powi(3) - 2.0 * t));
        let df = &d * f;
        for (i, &t) in x.iter().enumerate() {
            assert!((df[i] - (3.0 * t * t - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn lambert_w_benchmark() {
        // x' = -x(t - 1): roots solve s = -e^{-s}, the rightmost being W0(-1)
        let a0 = DMatrix::zeros(1, 1);
        let bc = DMatrix::identity(1, 1);
        let k = DMatrix::from_element(1, 1, -1.0);
        let spec = delayed_spectrum(&a0, &bc, &k, 1.0, 24).unwrap();
        let s = spec.rightmost[0];
        assert!((s.re + 0.31813).abs() < 1e-3);
        assert!((s.im.abs() - 1.33724).abs() < 1e-3);
        assert!((s + (-s).exp()).norm() < 1e-8);
    }

    #[test]
    fn zero_delay_matches_undelayed_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.2]);
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -0.3]);
        let bc = DMatrix::identity(2, 2);
        let spec = delayed_spectrum(&a, &bc, &k, 0.0, 16).unwrap();
        let mut direct = linalg::eigenvalues(&(&a + &k)).unwrap();
        direct.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        for (x, y) in spec.rightmost.iter().zip(&direct) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = DMatrix::zeros(1, 1);
        assert!(delayed_spectrum(&a, &a, &a, -0.1, 16).is_err());
        assert!(delayed_spectrum(&a, &a, &a, 0.1, 4).is_err());
    }
}
