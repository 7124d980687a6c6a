//! Mode-selective wide-area damping control: speed-channel actuation
//! structure, projector-based gain, closed-loop evaluation, and the
//! minimal-generator search.

use std::cmp::Ordering;
use std::path::Path;

use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EstimatedModel;
use crate::linalg;
use crate::modal::{
    mode_metrics, modal_decomposition_with, Aggregation, CriticalityCriteria, ModalSolution,
};
use crate::report::{fmt_sig, j12, matrix_rows, r12, write_csv_rows, write_json};

/// Objective values closer than this are considered tied.
pub const TIE_TOL: f64 = 1e-12;

/// Largest imaginary residue tolerated in the conjugate projector sum.
pub const GAUGE_TOL: f64 = 1e-10;

pub const DEFAULT_SIGMA_D: f64 = 2.0;

/// `Bc`: ones on the speed states of the selected generators.
pub fn control_matrix(selected: &[usize], m: usize) -> Result<DMatrix<f64>> {
    let mut bc = DMatrix::zeros(2 * m, 2 * m);
    for &g in selected {
        if g >= m {
            return Err(Error::Input(format!(
                "generator index {g} out of range for {m} machines"
            )));
        }
        bc[(m + g, m + g)] = 1.0;
    }
    Ok(bc)
}

/// `sum_k sigma_k (phi_k+ psi_k+ + phi_k- psi_k-)` over the given modes,
/// checked to be real.
pub fn projector_sum(sol: &ModalSolution, modes: &[usize], sigma: &[f64]) -> Result<DMatrix<f64>> {
    if modes.len() != sigma.len() {
        return Err(Error::DimensionMismatch {
            what: "sigma_d",
            expected: modes.len(),
            got: sigma.len(),
        });
    }
    let n = sol.state_dim();
    let mut sum = DMatrix::<Complex64>::zeros(n, n);
    for (&k, &s) in modes.iter().zip(sigma) {
        let md = sol
            .modes
            .get(k)
            .ok_or_else(|| Error::Input(format!("mode index {k} out of range")))?;
        let minus = md.index_minus.ok_or_else(|| {
            Error::Gauge(format!("mode {} is not an oscillatory conjugate pair", k + 1))
        })?;
        if s == 0.0 {
            continue;
        }
        let plus = md.index_plus;
        sum += (sol.right.column(plus) * sol.left.row(plus)) * Complex64::new(s, 0.0);
        sum += (sol.right.column(minus) * sol.left.row(minus)) * Complex64::new(s, 0.0);
    }
    let real = sum.map(|z| z.re);
    let imag = sum.map(|z| z.im);
    if imag.amax() > GAUGE_TOL * real.amax().max(1.0) {
        return Err(Error::Gauge(format!(
            "projector sum has imaginary residue {:.3e}",
            imag.amax()
        )));
    }
    Ok(real)
}

/// `K = -Bc sum_k sigma_k (phi_k+ psi_k+ + phi_k- psi_k-)`.
pub fn gain_matrix(
    bc: &DMatrix<f64>,
    sol: &ModalSolution,
    modes: &[usize],
    sigma: &[f64],
) -> Result<DMatrix<f64>> {
    let s = projector_sum(sol, modes, sigma)?;
    if bc.ncols() != s.nrows() {
        return Err(Error::DimensionMismatch {
            what: "Bc columns",
            expected: s.nrows(),
            got: bc.ncols(),
        });
    }
    Ok(-(bc * s))
}

/// `A_cl = A_P + Bc K` and its modal solution.
pub fn closed_loop(
    a_p: &DMatrix<f64>,
    bc: &DMatrix<f64>,
    k: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, ModalSolution)> {
    let a_cl = a_p + bc * k;
    let sol = modal_decomposition_with(&a_cl, CriticalityCriteria::default())?;
    Ok((a_cl, sol))
}

/// First-order prediction of where `mode` moves: `lambda - sigma psi Bc phi`
/// for a targeted mode, `lambda` unchanged otherwise.
pub fn predicted_shift(
    sol: &ModalSolution,
    mode: usize,
    bc: &DMatrix<f64>,
    critical: &[usize],
    sigma: &[f64],
) -> Complex64 {
    let md = &sol.modes[mode];
    match critical.iter().position(|&c| c == mode) {
        Some(pos) => {
            let e = md.index_plus;
            let bcc = linalg::to_complex(bc);
            let phi = sol.right.column(e);
            let psi = sol.left.row(e);
            let gain = (psi * (bcc * phi))[(0, 0)];
            md.lambda - gain * sigma[pos]
        }
        None => md.lambda,
    }
}

/// `J = sum(zeta)/|zeta| - sum(t_S)/|t_S|`; `-inf` if any settling time is
/// infinite, NaN for an empty set.
pub fn performance_index(zeta: &[f64], t_s: &[f64]) -> f64 {
    if zeta.is_empty() {
        return f64::NAN;
    }
    if t_s.iter().any(|t| !t.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let ratio = |v: &[f64]| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            0.0
        } else {
            v.iter().sum::<f64>() / norm
        }
    };
    ratio(zeta) - ratio(t_s)
}

/// Closed-loop state of one targeted mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopMode {
    /// Index into the open-loop `ModalSolution::modes`.
    pub mode: usize,
    pub lambda_open: Complex64,
    pub lambda_pred: Complex64,
    pub lambda_cl: Complex64,
    pub zeta_open: f64,
    pub t_s_open: f64,
    pub f_cl: f64,
    pub zeta_cl: f64,
    pub t_s_cl: f64,
}

/// Matches each prediction to the nearest unused closed-loop eigenvalue in
/// the upper half plane.
pub fn match_closed_loop(
    sol: &ModalSolution,
    critical: &[usize],
    predictions: &[Complex64],
    closed_eigenvalues: &[Complex64],
) -> Vec<ClosedLoopMode> {
    let mut used = vec![false; closed_eigenvalues.len()];
    critical
        .iter()
        .zip(predictions)
        .map(|(&k, &pred)| {
            let best = closed_eigenvalues
                .iter()
                .enumerate()
                .filter(|(i, l)| !used[*i] && l.im >= 0.0)
                .min_by(|a, b| (a.1 - pred).norm().total_cmp(&(b.1 - pred).norm()))
                .map(|(i, &l)| (i, l));
            let lambda_cl = match best {
                Some((i, l)) => {
                    used[i] = true;
                    l
                }
                None => Complex64::new(f64::NAN, f64::NAN),
            };
            let (f_cl, zeta_cl, t_s_cl) = mode_metrics(lambda_cl);
            let md = &sol.modes[k];
            ClosedLoopMode {
                mode: k,
                lambda_open: md.lambda,
                lambda_pred: pred,
                lambda_cl,
                zeta_open: md.zeta,
                t_s_open: md.t_s,
                f_cl,
                zeta_cl,
                t_s_cl,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSettings {
    /// One value for all critical modes, or one per critical mode.
    pub sigma_d: Vec<f64>,
    pub criteria: CriticalityCriteria,
    pub ranking: Aggregation,
}

impl Default for DesignSettings {
    fn default() -> Self {
        Self {
            sigma_d: vec![DEFAULT_SIGMA_D],
            criteria: CriticalityCriteria::default(),
            ranking: Aggregation::Speed,
        }
    }
}

impl DesignSettings {
    pub fn sigma_for(&self, count: usize) -> Result<Vec<f64>> {
        let sigma = match self.sigma_d.len() {
            1 => vec![self.sigma_d[0]; count],
            len if len == count => self.sigma_d.clone(),
            len => {
                return Err(Error::DimensionMismatch {
                    what: "sigma_d",
                    expected: count,
                    got: len,
                })
            }
        };
        if sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Input("sigma_d must be positive".into()));
        }
        Ok(sigma)
    }
}

/// Estimated state matrix together with its modes and actuator candidates,
/// in local (PMU channel) indexing.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub a_p: DMatrix<f64>,
    pub modal: ModalSolution,
    pub critical: Vec<usize>,
    /// Global id of each local generator.
    pub generators: Vec<usize>,
    /// G_A as local indices, ascending.
    pub capable: Vec<usize>,
}

impl DesignProblem {
    /// `capable` holds global generator ids and must be a subset of
    /// `generators`.
    pub fn new(
        a_p: DMatrix<f64>,
        generators: Vec<usize>,
        capable: &[usize],
        criteria: CriticalityCriteria,
    ) -> Result<Self> {
        if a_p.nrows() != 2 * generators.len() {
            return Err(Error::DimensionMismatch {
                what: "state matrix rows",
                expected: 2 * generators.len(),
                got: a_p.nrows(),
            });
        }
        let mut local = Vec::with_capacity(capable.len());
        for &g in capable {
            let pos = generators.iter().position(|&x| x == g).ok_or_else(|| {
                Error::Input(format!("control-capable G{} has no PMU", g + 1))
            })?;
            local.push(pos);
        }
        local.sort_unstable();
        local.dedup();
        let modal = modal_decomposition_with(&a_p, criteria)?;
        let critical = modal.critical();
        Ok(Self {
            a_p,
            modal,
            critical,
            generators,
            capable: local,
        })
    }

    pub fn from_estimate(est: &EstimatedModel, criteria: CriticalityCriteria) -> Result<Self> {
        Self::new(est.a_p.clone(), est.available.clone(), &est.capable, criteria)
    }

    pub fn m(&self) -> usize {
        self.generators.len()
    }

    /// Candidate set G_E at depth `n_m`: union of each critical mode's
    /// top-`n_m` generators within G_A, ascending.
    pub fn candidates(&self, n_m: usize, ranking: Aggregation) -> Vec<usize> {
        let mut set: Vec<usize> = self
            .critical
            .iter()
            .flat_map(|&k| {
                self.modal
                    .generator_ranking(k, ranking)
                    .into_iter()
                    .map(|(g, _)| g)
                    .filter(|g| self.capable.contains(g))
                    .take(n_m)
            })
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    }

    /// Closed-loop evaluation of one actuator subset (local indices).
    pub fn evaluate(
        &self,
        selected: &[usize],
        sigma: &[f64],
        projector: &DMatrix<f64>,
        criteria: &CriticalityCriteria,
    ) -> Result<Candidate> {
        let bc = control_matrix(selected, self.m())?;
        let k = -(&bc * projector);
        let a_cl = &self.a_p + &bc * &k;
        let eigs = linalg::eigenvalues(&a_cl)?;
        let predictions: Vec<Complex64> = self
            .critical
            .iter()
            .map(|&c| predicted_shift(&self.modal, c, &bc, &self.critical, sigma))
            .collect();
        let closed = match_closed_loop(&self.modal, &self.critical, &predictions, &eigs);
        Ok(Candidate::new(selected.to_vec(), closed, criteria))
    }

    fn design_from(
        &self,
        method: DesignMethod,
        best: Candidate,
        sigma: Vec<f64>,
        projector: &DMatrix<f64>,
        trace: Vec<TraceEntry>,
    ) -> Result<ControlDesign> {
        let bc = control_matrix(&best.selected, self.m())?;
        let k = -(&bc * projector);
        Ok(ControlDesign {
            method,
            generators: self.generators.clone(),
            selected: best.selected,
            bc,
            k,
            sigma_d: sigma,
            critical: self.critical.clone(),
            closed_loop: best.closed,
            j: best.j,
            feasible: best.feasible,
            trace,
        })
    }

    fn empty_design(&self, method: DesignMethod) -> ControlDesign {
        let dim = self.a_p.nrows();
        ControlDesign {
            method,
            generators: self.generators.clone(),
            selected: Vec::new(),
            bc: DMatrix::zeros(dim, dim),
            k: DMatrix::zeros(dim, dim),
            sigma_d: Vec::new(),
            critical: Vec::new(),
            closed_loop: Vec::new(),
            j: f64::NAN,
            feasible: true,
            trace: Vec::new(),
        }
    }
}

/// A scored actuator subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub selected: Vec<usize>,
    pub closed: Vec<ClosedLoopMode>,
    pub j: f64,
    pub feasible: bool,
}

impl Candidate {
    fn new(selected: Vec<usize>, closed: Vec<ClosedLoopMode>, criteria: &CriticalityCriteria) -> Self {
        let zeta: Vec<f64> = closed.iter().map(|c| c.zeta_cl).collect();
        let t_s: Vec<f64> = closed.iter().map(|c| c.t_s_cl).collect();
        let feasible = closed
            .iter()
            .all(|c| criteria.meets_targets(c.zeta_cl, c.t_s_cl));
        Self {
            selected,
            j: performance_index(&zeta, &t_s),
            closed,
            feasible,
        }
    }
}

fn cmp_tol(a: f64, b: f64) -> Ordering {
    if a == b || (a - b).abs() <= TIE_TOL {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

/// `Less` when `a` is preferred over `b`. With one critical mode the index
/// is identically zero, so damping ratio (higher) and settling time (lower)
/// decide instead. Ties go to the lexicographically smaller set.
pub fn preference(a: &Candidate, b: &Candidate) -> Ordering {
    let primary = if a.closed.len() == 1 && b.closed.len() == 1 {
        cmp_tol(b.closed[0].zeta_cl, a.closed[0].zeta_cl)
            .then_with(|| cmp_tol(a.closed[0].t_s_cl, b.closed[0].t_s_cl))
    } else {
        cmp_tol(b.j, a.j)
    };
    primary.then_with(|| a.selected.cmp(&b.selected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMethod {
    Selection,
    Effort,
}

/// One level of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub n_m: usize,
    /// G_E (local indices); for effort designs, all of G_A.
    pub candidates: Vec<usize>,
    pub evaluated: usize,
    pub feasible_count: usize,
    pub best: Candidate,
    /// Uniform sigma used at this level (effort designs).
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ControlDesign {
    pub method: DesignMethod,
    /// Global id of each local generator.
    pub generators: Vec<usize>,
    /// O_G as local indices.
    pub selected: Vec<usize>,
    pub bc: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub sigma_d: Vec<f64>,
    /// Critical modes (indices into the open-loop solution).
    pub critical: Vec<usize>,
    pub closed_loop: Vec<ClosedLoopMode>,
    pub j: f64,
    pub feasible: bool,
    pub trace: Vec<TraceEntry>,
}

impl ControlDesign {
    pub fn n_m(&self) -> usize {
        self.selected.len()
    }

    pub fn selected_global(&self) -> Vec<usize> {
        self.selected.iter().map(|&g| self.generators[g]).collect()
    }

    /// Control effort `J_C = sum_k sigma_k`.
    pub fn effort(&self) -> f64 {
        self.sigma_d.iter().sum()
    }

    /// Expands `Bc` and `K` to an `n`-machine state vector so the design
    /// can be applied to the full (true) system.
    pub fn embed(&self, n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let m = self.generators.len();
        if let Some(&g) = self.generators.iter().find(|&&g| g >= n) {
            return Err(Error::Input(format!("G{} outside a {n}-machine system", g + 1)));
        }
        let map = |j: usize| {
            if j < m {
                self.generators[j]
            } else {
                n + self.generators[j - m]
            }
        };
        let mut bc = DMatrix::zeros(2 * n, 2 * n);
        let mut k = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..2 * m {
            for j in 0..2 * m {
                bc[(map(i), map(j))] = self.bc[(i, j)];
                k[(map(i), map(j))] = self.k[(i, j)];
            }
        }
        Ok((bc, k))
    }

    /// Closed-loop metrics of the targeted modes when the gain is applied
    /// to another state matrix of the same (or full) system.
    pub fn verify_on(&self, a: &DMatrix<f64>) -> Result<Vec<ClosedLoopMode>> {
        let n = a.nrows() / 2;
        let (bc, k) = if n == self.generators.len() {
            (self.bc.clone(), self.k.clone())
        } else {
            self.embed(n)?
        };
        let eigs = linalg::eigenvalues(&(a + bc * k))?;
        let mut used = vec![false; eigs.len()];
        Ok(self
            .closed_loop
            .iter()
            .map(|c| {
                let best = eigs
                    .iter()
                    .enumerate()
                    .filter(|(i, l)| !used[*i] && l.im >= 0.0)
                    .min_by(|x, y| {
                        (x.1 - c.lambda_pred).norm().total_cmp(&(y.1 - c.lambda_pred).norm())
                    });
                let lambda_cl = match best {
                    Some((i, &l)) => {
                        used[i] = true;
                        l
                    }
                    None => Complex64::new(f64::NAN, f64::NAN),
                };
                let (f_cl, zeta_cl, t_s_cl) = mode_metrics(lambda_cl);
                ClosedLoopMode {
                    lambda_cl,
                    f_cl,
                    zeta_cl,
                    t_s_cl,
                    ..c.clone()
                }
            })
            .collect())
    }

    pub fn report(&self, selection_seconds: Option<f64>) -> DesignReport {
        let ids = |v: &[usize]| v.iter().map(|&g| self.generators[g] + 1).collect::<Vec<_>>();
        DesignReport {
            method: self.method,
            feasible: self.feasible,
            selected: ids(&self.selected),
            n_m: self.n_m(),
            sigma_d: self.sigma_d.iter().map(|&s| r12(s)).collect(),
            effort: r12(self.effort()),
            j: j12(self.j),
            modes: self.closed_loop.iter().map(ModeOutcome::from).collect(),
            trace: self
                .trace
                .iter()
                .map(|t| TraceRecord {
                    n_m: t.n_m,
                    sigma: t.sigma.map(r12),
                    candidates: ids(&t.candidates),
                    evaluated: t.evaluated,
                    feasible_count: t.feasible_count,
                    best: ids(&t.best.selected),
                    j: j12(t.best.j),
                    pass: t.best.feasible,
                    modes: t.best.closed.iter().map(ModeOutcome::from).collect(),
                })
                .collect(),
            k: matrix_rows(&self.k),
            selection_seconds: selection_seconds.map(r12),
            true_system: None,
        }
    }

    /// Per-level comparison of open and closed-loop damping, one row per
    /// level and critical mode.
    pub fn save_table(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut rows = Vec::new();
        for t in &self.trace {
            let combo = t
                .best
                .selected
                .iter()
                .map(|&g| format!("G{}", self.generators[g] + 1))
                .join(" ");
            for (i, c) in t.best.closed.iter().enumerate() {
                rows.push(vec![
                    t.n_m.to_string(),
                    (i + 1).to_string(),
                    fmt_sig(100.0 * c.zeta_open, 6),
                    fmt_sig(100.0 * c.zeta_cl, 6),
                    fmt_sig(c.t_s_open, 6),
                    fmt_sig(c.t_s_cl, 6),
                    combo.clone(),
                    t.best.feasible.to_string(),
                ]);
            }
        }
        write_csv_rows(
            path,
            &["n_m", "mode", "zeta_ol_pct", "zeta_cl_pct", "t_s_ol", "t_s_cl", "combination", "pass"],
            rows,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub mode: usize,
    pub lambda_open: (f64, f64),
    pub lambda_predicted: (f64, f64),
    pub lambda_closed: (Option<f64>, Option<f64>),
    pub zeta_open: f64,
    pub zeta_closed: Option<f64>,
    pub t_s_open: Option<f64>,
    pub t_s_closed: Option<f64>,
}

impl From<&ClosedLoopMode> for ModeOutcome {
    fn from(c: &ClosedLoopMode) -> Self {
        Self {
            mode: c.mode + 1,
            lambda_open: (r12(c.lambda_open.re), r12(c.lambda_open.im)),
            lambda_predicted: (r12(c.lambda_pred.re), r12(c.lambda_pred.im)),
            lambda_closed: (j12(c.lambda_cl.re), j12(c.lambda_cl.im)),
            zeta_open: r12(c.zeta_open),
            zeta_closed: j12(c.zeta_cl),
            t_s_open: j12(c.t_s_open),
            t_s_closed: j12(c.t_s_cl),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n_m: usize,
    pub sigma: Option<f64>,
    pub candidates: Vec<usize>,
    pub evaluated: usize,
    pub feasible_count: usize,
    pub best: Vec<usize>,
    pub j: Option<f64>,
    pub pass: bool,
    pub modes: Vec<ModeOutcome>,
}

/// JSON layout of a design; generator ids are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub method: DesignMethod,
    pub feasible: bool,
    pub selected: Vec<usize>,
    pub n_m: usize,
    pub sigma_d: Vec<f64>,
    pub effort: f64,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    pub modes: Vec<ModeOutcome>,
    pub trace: Vec<TraceRecord>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_seconds: Option<f64>,
    /// Designed modes re-evaluated on the true closed loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_system: Option<Vec<ModeOutcome>>,
}

impl DesignReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}

/// Smallest actuator set that meets the damping and settling targets for
/// every critical mode.
///
/// At each size `n_m` all `n_m`-subsets of the candidate set are scored; the
/// best feasible subset is returned as soon as one exists. Without any
/// feasible subset at the final size the best-scoring design overall is
/// carried by [`Error::NoFeasibleDesign`].
pub fn select_generators(problem: &DesignProblem, settings: &DesignSettings) -> Result<ControlDesign> {
    if problem.capable.is_empty() {
        return Err(Error::EmptyActuatorSet);
    }
    if problem.critical.is_empty() {
        return Ok(problem.empty_design(DesignMethod::Selection));
    }
    let sigma = settings.sigma_for(problem.critical.len())?;
    let projector = projector_sum(&problem.modal, &problem.critical, &sigma)?;
    let criteria = &settings.criteria;

    let mut trace = Vec::new();
    let mut overall: Option<Candidate> = None;
    for n_m in 1..=problem.capable.len() {
        let pool = problem.candidates(n_m, settings.ranking);
        let subsets: Vec<Vec<usize>> = pool.iter().copied().combinations(n_m).collect();
        let scored: Vec<Candidate> = subsets
            .par_iter()
            .map(|s| problem.evaluate(s, &sigma, &projector, criteria))
            .collect::<Result<_>>()?;
        let feasible_count = scored.iter().filter(|c| c.feasible).count();
        let best_feasible = scored.iter().filter(|c| c.feasible).min_by(|a, b| preference(a, b));
        let best_any = scored.iter().min_by(|a, b| preference(a, b));
        let Some(chosen) = best_feasible.or(best_any).cloned() else {
            continue;
        };
        trace.push(TraceEntry {
            n_m,
            candidates: pool,
            evaluated: scored.len(),
            feasible_count,
            best: chosen.clone(),
            sigma: None,
        });
        if chosen.feasible {
            return problem.design_from(DesignMethod::Selection, chosen, sigma, &projector, trace);
        }
        if overall
            .as_ref()
            .is_none_or(|o| preference(&chosen, o) == Ordering::Less)
        {
            overall = Some(chosen);
        }
    }
    let best = overall.ok_or(Error::EmptyActuatorSet)?;
    let design = problem.design_from(DesignMethod::Selection, best, sigma, &projector, trace)?;
    Err(Error::NoFeasibleDesign {
        best: Box::new(design),
    })
}

/// Every subset of G_E at every size, scored without early exit; the
/// reference for checking [`select_generators`].
pub fn exhaustive_levels(
    problem: &DesignProblem,
    settings: &DesignSettings,
) -> Result<Vec<(usize, Vec<Candidate>)>> {
    let sigma = settings.sigma_for(problem.critical.len())?;
    let projector = projector_sum(&problem.modal, &problem.critical, &sigma)?;
    let mut levels = Vec::new();
    for n_m in 1..=problem.capable.len() {
        let pool = problem.candidates(n_m, settings.ranking);
        let mut all = Vec::new();
        for s in pool.iter().copied().combinations(n_m) {
            all.push(problem.evaluate(&s, &sigma, &projector, &settings.criteria)?);
        }
        levels.push((n_m, all));
    }
    Ok(levels)
}

/// Uniform-sigma effort minimization with all of G_A actuating: sigma grows
/// in steps of `sigma_step` until every critical mode meets the targets.
pub fn minimize_effort(
    problem: &DesignProblem,
    criteria: &CriticalityCriteria,
    sigma_step: f64,
    sigma_max: f64,
) -> Result<ControlDesign> {
    if !(sigma_step > 0.0) {
        return Err(Error::Input("sigma_step must be positive".into()));
    }
    if problem.capable.is_empty() {
        return Err(Error::EmptyActuatorSet);
    }
    if problem.critical.is_empty() {
        let mut design = problem.empty_design(DesignMethod::Effort);
        design.selected = problem.capable.clone();
        design.bc = control_matrix(&problem.capable, problem.m())?;
        return Ok(design);
    }
    let count = problem.critical.len();
    let mut trace = Vec::new();
    let mut step = 1usize;
    loop {
        let s = sigma_step * step as f64;
        if s > sigma_max * (1.0 + 1e-12) {
            break;
        }
        let sigma = vec![s; count];
        let projector = projector_sum(&problem.modal, &problem.critical, &sigma)?;
        let cand = problem.evaluate(&problem.capable, &sigma, &projector, criteria)?;
        trace.push(TraceEntry {
            n_m: problem.capable.len(),
            candidates: problem.capable.clone(),
            evaluated: 1,
            feasible_count: usize::from(cand.feasible),
            best: cand.clone(),
            sigma: Some(s),
        });
        if cand.feasible {
            return problem.design_from(DesignMethod::Effort, cand, sigma, &projector, trace);
        }
        step += 1;
    }
    let last = trace.last().cloned().ok_or_else(|| {
        Error::Input(format!("sigma_max {sigma_max} below sigma_step {sigma_step}"))
    })?;
    let sigma = vec![last.sigma.unwrap_or(sigma_step); count];
    let projector = projector_sum(&problem.modal, &problem.critical, &sigma)?;
    let design = problem.design_from(DesignMethod::Effort, last.best, sigma, &projector, trace)?;
    Err(Error::NoFeasibleDesign {
        best: Box::new(design),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::modal_decomposition;

    #[test]
    fn control_matrix_structure() {
        assert_eq!(control_matrix(&[], 3).unwrap(), DMatrix::zeros(6, 6));
        let all = control_matrix(&[0, 1, 2], 3).unwrap();
        let mut expected = DMatrix::zeros(6, 6);
        for i in 3..6 {
            expected[(i, i)] = 1.0;
        }
        assert_eq!(all, expected);
        let one = control_matrix(&[1], 3).unwrap();
        assert_eq!(one.sum(), 1.0);
        assert_eq!(one[(4, 4)], 1.0);
        assert!(control_matrix(&[3], 3).is_err());
    }

    #[test]
    fn performance_index_examples() {
        let j = performance_index(&[0.21445, 0.13211, 0.15438], &[6.999, 8.328, 5.963]);
        let lhs = (0.21445 + 0.13211 + 0.15438)
            / (0.21445f64.powi(2) + 0.13211f64.powi(2) + 0.15438f64.powi(2)).sqrt();
        let rhs = (6.999 + 8.328 + 5.963) / (6.999f64.powi(2) + 8.328f64.powi(2) + 5.963f64.powi(2)).sqrt();
        assert!((j - (lhs - rhs)).abs() < 1e-15);
        assert!((j + 0.0204).abs() < 1e-3);
        assert!(performance_index(&[0.3, 0.3, 0.3], &[4.0, 4.0, 4.0]).abs() < 1e-15);
        assert_eq!(performance_index(&[0.4], &[7.0]), 0.0);
        assert_eq!(performance_index(&[0.1, 0.2], &[f64::INFINITY, 3.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn zero_sigma_gives_zero_gain() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.1]);
        let sol = modal_decomposition(&a).unwrap();
        let bc = control_matrix(&[0], 1).unwrap();
        let k = gain_matrix(&bc, &sol, &[0], &[0.0]).unwrap();
        assert_eq!(k, DMatrix::zeros(2, 2));
    }

    #[test]
    fn full_gauge_shifts_pair_exactly() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.1]);
        let sol = modal_decomposition(&a).unwrap();
        let bc = DMatrix::identity(2, 2);
        let k = gain_matrix(&bc, &sol, &[0], &[0.5]).unwrap();
        let mut eigs = linalg::eigenvalues(&(&a + &bc * &k)).unwrap();
        eigs.sort_by(|x, y| x.im.total_cmp(&y.im));
        let l = sol.modes[0].lambda;
        assert!((eigs[1] - (l - 0.5)).norm() < 1e-12);
        assert!((eigs[0] - (l.conj() - 0.5)).norm() < 1e-12);
        let pred = predicted_shift(&sol, 0, &bc, &[0], &[0.5]);
        assert!((pred - (l - 0.5)).norm() < 1e-12);
    }

    #[test]
    fn non_oscillatory_mode_is_a_gauge_error() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let sol = modal_decomposition(&a).unwrap();
        assert!(matches!(
            projector_sum(&sol, &[0], &[1.0]),
            Err(Error::Gauge(_))
        ));
    }

    #[test]
    fn preference_breaks_ties_lexicographically() {
        let mk = |sel: Vec<usize>, j: f64| Candidate {
            selected: sel,
            closed: Vec::new(),
            j,
            feasible: true,
        };
        assert_eq!(preference(&mk(vec![0, 2], 0.5), &mk(vec![1, 2], 0.5 + 1e-13)), Ordering::Less);
        assert_eq!(preference(&mk(vec![1, 2], 0.6), &mk(vec![0, 2], 0.5)), Ordering::Less);
    }
}
