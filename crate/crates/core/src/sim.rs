//! Euler–Maruyama integration of the stochastic swing dynamics and PMU
//! emulation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{electrical_power, GridModel, LinearModel};
use crate::report::fmt_sig;

/// States with `|x|_inf` above this are treated as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e3;

pub const PMU_RATE_RANGE: (f64, f64) = (6.0, 60.0);

/// Uniformly sampled state deviations `x = [d_delta, d_omega]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(dt: f64, t0: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || dim == 0 || data.len() % dim != 0 {
            return Err(Error::Input("malformed trajectory".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("trajectory contains non-finite values".into()));
        }
        Ok(Self { dt, t0, dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.len().saturating_sub(1) as f64 * self.dt
    }

    /// Sample covariance of all stored states (mean removed, `1/(N-1)`).
    pub fn covariance(&self) -> DMatrix<f64> {
        covariance_of_rows(self.states(), self.dim)
    }
}

pub(crate) fn covariance_of_rows<'a>(
    rows: impl Iterator<Item = &'a [f64]> + Clone,
    dim: usize,
) -> DMatrix<f64> {
    let mut mean = vec![0.0; dim];
    let mut count = 0usize;
    for row in rows.clone() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
        count += 1;
    }
    let mut cov = DMatrix::zeros(dim, dim);
    if count < 2 {
        return cov;
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut centered = vec![0.0; dim];
    for row in rows {
        for ((c, x), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = x - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let scale = 1.0 / (count as f64 - 1.0);
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] * scale;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Input(format!("integration step must be positive, got {dt}")));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::Input(format!("duration must be non-negative, got {duration}")));
    }
    Ok((duration / dt).round() as usize)
}

fn warn_if_unstable(a: &DMatrix<f64>) {
    if let Ok(values) = crate::linalg::eigenvalues(a) {
        let scale = a.amax().max(1.0);
        if values
            .iter()
            .any(|l| l.im.abs() > 1e-6 && l.re >= -1e-12 * scale)
        {
            log::warn!("state matrix has oscillatory modes that are not asymptotically stable");
        }
    }
}

/// `x_{k+1} = x_k + A x_k dt + B sqrt(dt) eta_k`, `x_0 = 0`.
pub fn simulate_linear(lin: &LinearModel, duration: f64, dt: f64, seed: u64) -> Result<Trajectory> {
    let dim = lin.a.nrows();
    check_len("noise input rows", dim, lin.b.nrows())?;
    let steps = step_count(duration, dt)?;
    warn_if_unstable(&lin.a);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_cols = lin.b.ncols();
    let b_scaled = &lin.b * dt.sqrt();
    let mut x = DVector::zeros(dim);
    let mut drift = DVector::zeros(dim);
    let mut eta = DVector::zeros(noise_cols);
    let mut data = Vec::with_capacity((steps + 1) * dim);
    data.extend_from_slice(x.as_slice());
    for k in 0..steps {
        for e in eta.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        drift.gemv(dt, &lin.a, &x, 0.0);
        drift.gemv(1.0, &b_scaled, &eta, 1.0);
        x += &drift;
        let norm = x.amax();
        if !(norm <= DIVERGENCE_BOUND) {
            return Err(Error::UnstableSimulation { step: k + 1, norm });
        }
        data.extend_from_slice(x.as_slice());
    }
    Trajectory::new(dt, 0.0, dim, data)
}

/// Nonlinear swing equations under load noise; returned states are
/// deviations from `(delta0, 0)`.
pub fn simulate_nonlinear(
    model: &GridModel,
    delta0: &[f64],
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    let n = model.n();
    check_len("equilibrium angles", n, delta0.len())?;
    let steps = step_count(duration, dt)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = model.inertia();
    let d = model.damping();
    let pm = model.mech_power();
    let noise: Vec<f64> = model
        .noise_gain()
        .iter()
        .zip(m)
        .map(|(g, mi)| g * dt.sqrt() / mi)
        .collect();

    let mut delta = delta0.to_vec();
    let mut omega = vec![0.0; n];
    let mut data = Vec::with_capacity((steps + 1) * 2 * n);
    data.extend(std::iter::repeat_n(0.0, 2 * n));
    for k in 0..steps {
        let pe = electrical_power(&delta, model)?;
        let mut next_omega = omega.clone();
        for i in 0..n {
            let eta: f64 = StandardNormal.sample(&mut rng);
            let accel = (pm[i] - pe[i] - d[i] * omega[i]) / m[i];
            next_omega[i] = omega[i] + dt * accel - noise[i] * eta;
        }
        let mut norm: f64 = 0.0;
        for i in 0..n {
            delta[i] += dt * omega[i];
            norm = norm.max((delta[i] - delta0[i]).abs());
        }
        omega = next_omega;
        norm = omega.iter().fold(norm, |acc, w| acc.max(w.abs()));
        if !(norm <= DIVERGENCE_BOUND) {
            return Err(Error::UnstableSimulation { step: k + 1, norm });
        }
        data.extend(delta.iter().zip(delta0).map(|(x, x0)| x - x0));
        data.extend_from_slice(&omega);
    }
    Trajectory::new(dt, 0.0, 2 * n, data)
}

/// Measured `[d_delta_P, d_omega_P]` at the PMU-equipped generators.
#[derive(Debug, Clone, PartialEq)]
pub struct PmuDataset {
    pub fs: f64,
    pub t0: f64,
    /// G_P as 0-based generator indices, ascending.
    pub available: Vec<usize>,
    /// G_A as 0-based generator indices, a subset of `available`.
    pub capable: Vec<usize>,
    pub noise_std_angle: f64,
    pub noise_std_speed: f64,
    samples: Vec<f64>,
}

impl PmuDataset {
    pub fn new(
        fs: f64,
        t0: f64,
        available: Vec<usize>,
        capable: Vec<usize>,
        noise_std_angle: f64,
        noise_std_speed: f64,
        samples: Vec<f64>,
    ) -> Result<Self> {
        validate_rate(fs)?;
        validate_sets(&available, &capable, usize::MAX)?;
        if samples.len() % (2 * available.len()) != 0 {
            return Err(Error::Input("sample buffer does not match channel count".into()));
        }
        Ok(Self {
            fs,
            t0,
            available,
            capable,
            noise_std_angle,
            noise_std_speed,
            samples,
        })
    }

    /// m = |G_P|.
    pub fn m(&self) -> usize {
        self.available.len()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len() / (2 * self.m())
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        let w = 2 * self.m();
        &self.samples[k * w..(k + 1) * w]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.samples.chunks_exact(2 * self.m())
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fs
    }

    /// Positions of the control-capable generators within `available`.
    pub fn capable_local(&self) -> Vec<usize> {
        self.capable
            .iter()
            .filter_map(|g| self.available.iter().position(|a| a == g))
            .collect()
    }

    /// `t,G1_delta,...,G1_omega,...` with 9 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header = std::iter::once("t".to_string())
            .chain(self.available.iter().map(|g| format!("G{}_delta", g + 1)))
            .chain(self.available.iter().map(|g| format!("G{}_omega", g + 1)));
        w.write_record(header).map_err(csv_err)?;
        for (k, row) in self.rows().enumerate() {
            let record = std::iter::once(fmt_sig(self.time(k), 9))
                .chain(row.iter().map(|x| fmt_sig(*x, 9)));
            w.write_record(record).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses a CSV written by [`PmuDataset::write_csv`]. The reporting rate
    /// is recovered from the time column; all channels are marked capable
    /// and the noise levels are unknown (zero).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.first() != Some(&"t") || cols.len() < 3 || (cols.len() - 1) % 2 != 0 {
            return Err(Error::parse("PMU CSV", "<csv>", "expected header t,<id>_delta...,<id>_omega..."));
        }
        let m = (cols.len() - 1) / 2;
        let mut available = Vec::with_capacity(m);
        for (k, name) in cols[1..=m].iter().enumerate() {
            let id = parse_channel(name, "_delta")?;
            if parse_channel(cols[1 + m + k], "_omega")? != id {
                return Err(Error::parse("PMU CSV", "<csv>", "angle and speed columns are not aligned"));
            }
            available.push(id);
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let mut fields = record.iter().map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse("PMU CSV", "<csv>", e))
            });
            times.push(fields.next().transpose()?.unwrap_or(f64::NAN));
            for f in fields {
                samples.push(f?);
            }
        }
        if samples.len() != times.len() * 2 * m {
            return Err(Error::parse("PMU CSV", "<csv>", "ragged rows"));
        }
        if times.len() < 2 {
            return Err(Error::InsufficientData {
                samples: times.len(),
                required: 2,
            });
        }
        let fs = 1.0 / (times[1] - times[0]);
        let fs = (fs * 1e6).round() / 1e6;
        Self::new(fs, times[0], available.clone(), available, 0.0, 0.0, samples)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Parse { format, message, .. } => Error::parse(format, path, message),
            other => other,
        })
    }

    pub fn metadata(&self) -> PmuMetadata {
        PmuMetadata {
            fs: self.fs,
            available: self.available.iter().map(|g| g + 1).collect(),
            capable: self.capable.iter().map(|g| g + 1).collect(),
            noise_std_angle: self.noise_std_angle,
            noise_std_speed: self.noise_std_speed,
            sample_count: self.sample_count(),
        }
    }

    /// Reattach the channel sets and noise levels stored next to a CSV.
    pub fn with_metadata(mut self, meta: &PmuMetadata) -> Result<Self> {
        let available: Vec<usize> = meta.available.iter().map(|g| g - 1).collect();
        if available != self.available {
            return Err(Error::Input("PMU metadata does not match the CSV channels".into()));
        }
        let capable: Vec<usize> = meta.capable.iter().map(|g| g - 1).collect();
        validate_sets(&available, &capable, usize::MAX)?;
        self.capable = capable;
        self.fs = meta.fs;
        self.noise_std_angle = meta.noise_std_angle;
        self.noise_std_speed = meta.noise_std_speed;
        Ok(self)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("CSV", "<csv>", e)
}

fn parse_channel(name: &str, suffix: &str) -> Result<usize> {
    name.strip_suffix(suffix)
        .and_then(|s| s.strip_prefix('G'))
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&id| id >= 1)
        .map(|id| id - 1)
        .ok_or_else(|| Error::parse("PMU CSV", "<csv>", format!("bad column name {name:?}")))
}

/// Sidecar for a PMU CSV: channel sets (1-based) and the noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmuMetadata {
    pub fs: f64,
    pub available: Vec<usize>,
    pub capable: Vec<usize>,
    pub noise_std_angle: f64,
    pub noise_std_speed: f64,
    pub sample_count: usize,
}

fn validate_rate(fs: f64) -> Result<()> {
    if !(fs >= PMU_RATE_RANGE.0 - 1e-9 && fs <= PMU_RATE_RANGE.1 + 1e-9) {
        return Err(Error::Input(format!(
            "PMU reporting rate {fs} Hz outside {}-{} Hz",
            PMU_RATE_RANGE.0, PMU_RATE_RANGE.1
        )));
    }
    Ok(())
}

fn validate_sets(available: &[usize], capable: &[usize], n: usize) -> Result<()> {
    if available.is_empty() {
        return Err(Error::Input("no PMU-equipped generators".into()));
    }
    if available.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("available set must be strictly ascending".into()));
    }
    if let Some(g) = available.iter().find(|&&g| g >= n) {
        return Err(Error::Input(format!("generator {} out of range", g + 1)));
    }
    if let Some(g) = capable.iter().find(|g| !available.contains(g)) {
        return Err(Error::Input(format!(
            "generator {} is control-capable but has no PMU",
            g + 1
        )));
    }
    Ok(())
}

/// Measurement noise model and channel selection for [`emulate_pmu`].
#[derive(Debug, Clone, PartialEq)]
pub struct PmuConfig {
    pub fs: f64,
    pub noise_std_angle: f64,
    pub noise_std_speed: f64,
    /// 0-based generator indices.
    pub available: Vec<usize>,
    pub capable: Vec<usize>,
}

impl PmuConfig {
    /// 60 Hz with angle/speed noise standard deviations 1e-3 and 1e-6.
    pub fn standard(n: usize) -> Self {
        Self {
            fs: 60.0,
            noise_std_angle: 1e-3,
            noise_std_speed: 1e-6,
            available: (0..n).collect(),
            capable: (0..n).collect(),
        }
    }
}

/// Decimates to `fs`, keeps the available generators and adds independent
/// Gaussian measurement noise.
pub fn emulate_pmu(traj: &Trajectory, config: &PmuConfig, seed: u64) -> Result<PmuDataset> {
    let n = traj.dim() / 2;
    validate_rate(config.fs)?;
    let mut available = config.available.clone();
    available.sort_unstable();
    available.dedup();
    let mut capable = config.capable.clone();
    capable.sort_unstable();
    capable.dedup();
    validate_sets(&available, &capable, n)?;
    if !(config.noise_std_angle >= 0.0 && config.noise_std_speed >= 0.0) {
        return Err(Error::Input("noise standard deviations must be non-negative".into()));
    }

    // sample k is the state nearest to t0 + k / fs
    let ratio = 1.0 / (config.fs * traj.dt);
    if !(ratio >= 1.0 - 1e-9) {
        return Err(Error::Input(format!(
            "reporting rate {} Hz exceeds the integration rate {} Hz",
            config.fs,
            1.0 / traj.dt
        )));
    }
    let count = (traj.duration() * config.fs + 1e-6).floor() as usize;
    let step_of = |k: usize| (k as f64 * ratio).round() as usize;
    if traj.is_empty() || step_of(count.max(1) - 1) >= traj.len() {
        return Err(Error::InsufficientData {
            samples: traj.len(),
            required: step_of(count) + 1,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle_noise = Normal::new(0.0, config.noise_std_angle)
        .map_err(|e| Error::Input(e.to_string()))?;
    let speed_noise = Normal::new(0.0, config.noise_std_speed)
        .map_err(|e| Error::Input(e.to_string()))?;
    let m = available.len();
    let mut samples = Vec::with_capacity(count * 2 * m);
    for k in 0..count {
        let x = traj.state(step_of(k));
        for &g in &available {
            samples.push(x[g] + angle_noise.sample(&mut rng));
        }
        for &g in &available {
            samples.push(x[n + g] + speed_noise.sample(&mut rng));
        }
    }
    Ok(PmuDataset {
        fs: config.fs,
        t0: traj.t0,
        available,
        capable,
        noise_std_angle: config.noise_std_angle,
        noise_std_speed: config.noise_std_speed,
        samples,
    })
}
