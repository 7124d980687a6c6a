//! Scenario files and the staged pipeline: model → simulate → PMU
//! emulation → estimate → analyze → design → verify → delay sweep.
//!
//! Every stage reads and writes plain files in one output directory, so the
//! stages can also be run one at a time.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::delay::{delay_sweep, save_sweep_csv, DelaySweepRow, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::estimation::{estimate_model, EstimatedModel};
use crate::grid::{build_state_matrices, solve_equilibrium, GridModel, LinearModel};
use crate::modal::{
    modal_decomposition_with, Aggregation, Band, CriticalityCriteria, ModalSolution, ModeReport,
};
use crate::report::{j12, matrix_from_rows, r12, read_json, write_json};
use crate::sim::{emulate_pmu, simulate_linear, simulate_nonlinear, PmuConfig, PmuDataset, PmuMetadata};
use crate::wadc::{
    control_matrix, minimize_effort, select_generators, ControlDesign, DesignProblem,
    DesignReport, DesignSettings, ModeOutcome,
};

pub const MODES_TRUE: &str = "modes_true.json";
pub const MODES_ESTIMATED: &str = "modes_estimated.json";
pub const LINEAR_MODEL: &str = "linear_model.json";
pub const ESTIMATED_MODEL: &str = "estimated_model.json";
pub const PMU_CSV: &str = "pmu.csv";
pub const PMU_META: &str = "pmu_meta.json";
pub const DESIGN: &str = "design.json";
pub const TABLE: &str = "table4.csv";
pub const DELAY_SWEEP: &str = "delay_sweep.csv";
pub const SUMMARY: &str = "summary.json";
pub const TIMING: &str = "timing.json";

/// Shortest window that still gives usable covariance estimates.
pub const SHORT_WINDOW_S: f64 = 30.0;
const TOP_PARTICIPANTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimModel {
    #[default]
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: SimModel,
}

fn default_duration() -> f64 {
    180.0
}
fn default_dt() -> f64 {
    1e-3
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duration: default_duration(),
            dt: default_dt(),
            seed: 0,
            model: SimModel::Linear,
        }
    }
}

/// PMU settings; generator ids are 1-based, empty lists mean "all".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PmuSection {
    pub fs: f64,
    pub noise_std_angle: f64,
    pub noise_std_speed: f64,
    pub available: Vec<usize>,
    pub capable: Vec<usize>,
}

impl Default for PmuSection {
    fn default() -> Self {
        Self {
            fs: 60.0,
            noise_std_angle: 1e-3,
            noise_std_speed: 1e-6,
            available: Vec::new(),
            capable: Vec::new(),
        }
    }
}

impl PmuSection {
    pub fn to_config(&self, n: usize) -> Result<PmuConfig> {
        let to_zero = |ids: &[usize], what: &str| -> Result<Vec<usize>> {
            ids.iter()
                .map(|&g| {
                    if g == 0 || g > n {
                        Err(Error::Input(format!("{what} generator {g} outside 1..={n}")))
                    } else {
                        Ok(g - 1)
                    }
                })
                .collect()
        };
        let available = if self.available.is_empty() {
            (0..n).collect()
        } else {
            to_zero(&self.available, "available")?
        };
        let capable = if self.capable.is_empty() {
            available.clone()
        } else {
            to_zero(&self.capable, "capable")?
        };
        Ok(PmuConfig {
            fs: self.fs,
            noise_std_angle: self.noise_std_angle,
            noise_std_speed: self.noise_std_speed,
            available,
            capable,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WadcSection {
    pub sigma_d: Vec<f64>,
    pub zeta_min: f64,
    pub ts_max: f64,
    pub band: (f64, f64),
    pub ranking: Aggregation,
    pub effort_mode: bool,
    pub sigma_step: f64,
    pub sigma_max: f64,
}

impl Default for WadcSection {
    fn default() -> Self {
        let c = CriticalityCriteria::default();
        Self {
            sigma_d: vec![crate::wadc::DEFAULT_SIGMA_D],
            zeta_min: c.zeta_min,
            ts_max: c.ts_max,
            band: c.band,
            ranking: Aggregation::Speed,
            effort_mode: false,
            sigma_step: 0.1,
            sigma_max: 20.0,
        }
    }
}

impl WadcSection {
    pub fn criteria(&self) -> CriticalityCriteria {
        CriticalityCriteria {
            zeta_min: self.zeta_min,
            ts_max: self.ts_max,
            band: self.band,
        }
    }

    pub fn settings(&self) -> DesignSettings {
        DesignSettings {
            sigma_d: self.sigma_d.clone(),
            criteria: self.criteria(),
            ranking: self.ranking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelaySection {
    pub taus: Vec<f64>,
    pub order: usize,
}

impl Default for DelaySection {
    fn default() -> Self {
        Self {
            taus: vec![0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2],
            order: DEFAULT_ORDER,
        }
    }
}

/// One experiment. Relative paths are resolved against the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: PathBuf,
    #[serde(default)]
    pub equilibrium_guess: Option<Vec<f64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub pmu: PmuSection,
    #[serde(default)]
    pub wadc: WadcSection,
    #[serde(default)]
    pub delay: DelaySection,
}

impl Scenario {
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut sc: Scenario =
            toml::from_str(text).map_err(|e| Error::parse("TOML", base, e.message()))?;
        sc.resolve(base);
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut sc: Scenario =
            toml::from_str(&text).map_err(|e| Error::parse("TOML", path, e.message()))?;
        sc.resolve(base);
        Ok(sc)
    }

    fn resolve(&mut self, base: &Path) {
        if self.grid.is_relative() {
            self.grid = base.join(&self.grid);
        }
        if let Some(out) = &self.output_dir {
            if out.is_relative() {
                self.output_dir = Some(base.join(out));
            }
        }
    }

    /// Seed of the measurement-noise stream, derived from the simulation seed.
    pub fn pmu_seed(&self) -> u64 {
        self.simulation.seed ^ 0x9e37_79b9_7f4a_7c15
    }

    pub fn load_grid(&self) -> Result<GridModel> {
        if !self.grid.exists() {
            return Err(Error::Input(format!(
                "grid file {} does not exist",
                self.grid.display()
            )));
        }
        GridModel::load(&self.grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Model,
    Simulate,
    Estimate,
    Analyze,
    Design,
    Verify,
    Delay,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Model => "model",
            Stage::Simulate => "simulate",
            Stage::Estimate => "estimate",
            Stage::Analyze => "analyze",
            Stage::Design => "design",
            Stage::Verify => "verify",
            Stage::Delay => "delay",
            Stage::Report => "report",
        }
    }
}

/// A module error tagged with the stage it came from.
#[derive(Debug, thiserror::Error)]
#[error("{} stage failed: {error}", stage.name())]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub error: Error,
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        self.error.code()
    }

    /// Machine-readable form: `{"stage", "code", "message"}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "stage": self.stage.name(),
            "code": self.code(),
            "message": self.error.to_string(),
        })
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|error| PipelineError { stage, error })
    }
}

/// Stored linearization of the true system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelFile {
    pub n: usize,
    pub delta0: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

// Stored at full precision: later stages rebuild the true system from it.
fn exact_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl LinearModelFile {
    pub fn from_model(lin: &LinearModel) -> Self {
        Self {
            n: lin.n(),
            delta0: lin.delta0.clone(),
            jacobian: exact_rows(&lin.jacobian),
            a: exact_rows(&lin.a),
            b: exact_rows(&lin.b),
        }
    }

    pub fn into_model(self) -> Result<LinearModel> {
        let lin = LinearModel {
            delta0: self.delta0,
            jacobian: matrix_from_rows(&self.jacobian)?,
            a: matrix_from_rows(&self.a)?,
            b: matrix_from_rows(&self.b)?,
        };
        if lin.a.nrows() != 2 * self.n || lin.a.ncols() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                what: "A rows",
                expected: 2 * self.n,
                got: lin.a.nrows(),
            });
        }
        Ok(lin)
    }
}

/// Estimated against true metrics for one inter-area mode of the true system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub true_mode: usize,
    pub estimated_mode: Option<usize>,
    pub f_true: f64,
    pub f_est: Option<f64>,
    pub f_error_pct: Option<f64>,
    pub zeta_true: f64,
    pub zeta_est: Option<f64>,
    pub zeta_error_pct: Option<f64>,
    pub t_s_true: Option<f64>,
    pub t_s_est: Option<f64>,
    pub t_s_error_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedModesReport {
    #[serde(flatten)]
    pub report: ModeReport,
    pub comparison: Vec<ModeComparison>,
}

fn pct_error(est: f64, truth: f64) -> f64 {
    100.0 * (est - truth).abs() / truth.abs()
}

/// Pairs each true inter-area mode (ascending frequency) with the nearest
/// unused oscillatory estimated mode.
pub fn compare_modes(truth: &ModalSolution, est: &ModalSolution) -> Vec<ModeComparison> {
    let mut used = vec![false; est.modes.len()];
    truth
        .modes
        .iter()
        .enumerate()
        .filter(|(_, md)| md.band == Band::InterArea)
        .map(|(ti, tm)| {
            let pick = est
                .modes
                .iter()
                .enumerate()
                .filter(|(i, md)| !used[*i] && md.is_oscillatory())
                .min_by(|a, b| {
                    (a.1.lambda - tm.lambda)
                        .norm()
                        .total_cmp(&(b.1.lambda - tm.lambda).norm())
                })
                .map(|(i, _)| i);
            if let Some(i) = pick {
                used[i] = true;
            }
            let em = pick.map(|i| &est.modes[i]);
            ModeComparison {
                true_mode: ti + 1,
                estimated_mode: pick.map(|i| i + 1),
                f_true: r12(tm.f),
                f_est: em.map(|m| r12(m.f)),
                f_error_pct: em.and_then(|m| j12(pct_error(m.f, tm.f))),
                zeta_true: r12(tm.zeta),
                zeta_est: em.map(|m| r12(m.zeta)),
                zeta_error_pct: em.and_then(|m| j12(pct_error(m.zeta, tm.zeta))),
                t_s_true: j12(tm.t_s),
                t_s_est: em.and_then(|m| j12(m.t_s)),
                t_s_error_pct: em.and_then(|m| j12(pct_error(m.t_s, tm.t_s))),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub m: usize,
    pub critical_true: Vec<usize>,
    pub critical_estimated: Vec<usize>,
    pub feasible: bool,
    pub feasible_on_true_system: Option<bool>,
    pub selected: Vec<usize>,
    pub n_m: usize,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timing {
    pub simulate_s: f64,
    pub estimate_s: f64,
    pub analyze_s: f64,
    pub selection_s: f64,
    pub delay_s: f64,
    pub total_s: f64,
}

/// Everything one run produced, for in-process callers.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub grid: GridModel,
    pub linear: LinearModel,
    pub pmu: PmuDataset,
    pub estimate: EstimatedModel,
    pub modes_true: ModalSolution,
    pub modes_estimated: ModalSolution,
    pub comparison: Vec<ModeComparison>,
    pub design: Option<ControlDesign>,
    /// Designed modes evaluated on the true closed loop.
    pub true_closed_loop: Option<Vec<ModeOutcome>>,
    pub sweep: Vec<DelaySweepRow>,
    pub summary: Summary,
    pub timing: Timing,
}

impl PipelineOutcome {
    /// 0 when the design meets the damping targets, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code
    }
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Model, equilibrium and linearization of the true system.
pub fn stage_model(sc: &Scenario) -> Result<(GridModel, LinearModel)> {
    let grid = sc.load_grid()?;
    let guess = sc
        .equilibrium_guess
        .clone()
        .unwrap_or_else(|| vec![0.0; grid.n()]);
    let eq = solve_equilibrium(&grid, &guess)?;
    let grid = eq.balanced_model(&grid)?;
    let lin = build_state_matrices(&grid, &eq.delta)?;
    Ok((grid, lin))
}

/// Ambient simulation and PMU emulation; writes the linear model and PMU data.
pub fn stage_simulate(sc: &Scenario, grid: &GridModel, lin: &LinearModel, out: &Path) -> Result<PmuDataset> {
    let s = &sc.simulation;
    if s.duration < SHORT_WINDOW_S {
        log::warn!(
            "simulation window {} s is shorter than {SHORT_WINDOW_S} s; estimates will be noisy",
            s.duration
        );
    }
    let traj = match s.model {
        SimModel::Linear => simulate_linear(lin, s.duration, s.dt, s.seed)?,
        SimModel::Nonlinear => simulate_nonlinear(grid, &lin.delta0, s.duration, s.dt, s.seed)?,
    };
    let cfg = sc.pmu.to_config(grid.n())?;
    let pmu = emulate_pmu(&traj, &cfg, sc.pmu_seed())?;
    ensure_dir(out)?;
    write_json(out.join(LINEAR_MODEL), &LinearModelFile::from_model(lin))?;
    pmu.save_csv(out.join(PMU_CSV))?;
    write_json(out.join(PMU_META), &pmu.metadata())?;
    Ok(pmu)
}

pub fn stage_estimate(grid: &GridModel, pmu: &PmuDataset, out: &Path) -> Result<EstimatedModel> {
    let est = estimate_model(pmu, grid)?;
    ensure_dir(out)?;
    est.save(out.join(ESTIMATED_MODEL))?;
    Ok(est)
}

/// Modes of the true and estimated state matrices.
pub fn stage_analyze(
    sc: &Scenario,
    a_true: &DMatrix<f64>,
    est: &EstimatedModel,
    out: &Path,
) -> Result<(ModalSolution, ModalSolution, Vec<ModeComparison>)> {
    let criteria = sc.wadc.criteria();
    let n = a_true.nrows() / 2;
    let truth = modal_decomposition_with(a_true, criteria)?;
    let estimated = modal_decomposition_with(&est.a_p, criteria)?;
    let comparison = compare_modes(&truth, &estimated);
    ensure_dir(out)?;
    let all: Vec<usize> = (0..n).collect();
    truth
        .report(&all, TOP_PARTICIPANTS, sc.wadc.ranking)
        .save(out.join(MODES_TRUE))?;
    let report = EstimatedModesReport {
        report: estimated.report(&est.available, TOP_PARTICIPANTS, sc.wadc.ranking),
        comparison: comparison.clone(),
    };
    write_json(out.join(MODES_ESTIMATED), &report)?;
    Ok((truth, estimated, comparison))
}

/// Result of the design stage. `design` is present whenever there was
/// something to damp, feasible or not.
#[derive(Debug, Clone)]
pub struct DesignStage {
    pub design: Option<ControlDesign>,
    pub feasible: bool,
    pub true_closed_loop: Option<Vec<ModeOutcome>>,
    pub selection_seconds: f64,
}

/// Design from the estimated model, verified on `a_true` when given.
pub fn stage_design(
    sc: &Scenario,
    est: &EstimatedModel,
    a_true: Option<&DMatrix<f64>>,
    effort: bool,
    out: &Path,
) -> Result<DesignStage> {
    let problem = DesignProblem::from_estimate(est, sc.wadc.criteria())?;
    if problem.critical.is_empty() {
        return Ok(DesignStage {
            design: None,
            feasible: true,
            true_closed_loop: None,
            selection_seconds: 0.0,
        });
    }
    let start = Instant::now();
    let result = if effort || sc.wadc.effort_mode {
        minimize_effort(&problem, &sc.wadc.criteria(), sc.wadc.sigma_step, sc.wadc.sigma_max)
    } else {
        select_generators(&problem, &sc.wadc.settings())
    };
    let selection_seconds = start.elapsed().as_secs_f64();
    let (design, feasible) = match result {
        Ok(d) => (d, true),
        Err(Error::NoFeasibleDesign { best }) => (*best, false),
        Err(e) => return Err(e),
    };
    let true_closed_loop = match a_true {
        Some(a) => Some(
            design
                .verify_on(a)?
                .iter()
                .map(ModeOutcome::from)
                .collect::<Vec<_>>(),
        ),
        None => None,
    };
    ensure_dir(out)?;
    let mut report = design.report(None);
    report.true_system = true_closed_loop.clone();
    report.save(out.join(DESIGN))?;
    design.save_table(out.join(TABLE))?;
    Ok(DesignStage {
        design: Some(design),
        feasible,
        true_closed_loop,
        selection_seconds,
    })
}

/// Delay sweep of the designed closed loop.
pub fn stage_delay(
    sc: &Scenario,
    est: &EstimatedModel,
    design: &ControlDesign,
    out: &Path,
) -> Result<Vec<DelaySweepRow>> {
    let start: Vec<Complex64> = design.closed_loop.iter().map(|c| c.lambda_cl).collect();
    let rows = delay_sweep(&est.a_p, &design.bc, &design.k, &sc.delay.taus, sc.delay.order, &start)?;
    ensure_dir(out)?;
    save_sweep_csv(out.join(DELAY_SWEEP), &rows)?;
    Ok(rows)
}

/// Runs every stage and writes all reports into `out`.
pub fn run_pipeline(sc: &Scenario, out: &Path) -> std::result::Result<PipelineOutcome, PipelineError> {
    let t_total = Instant::now();
    let mut timing = Timing::default();
    ensure_dir(out).at(Stage::Report)?;

    let (grid, linear) = stage_model(sc).at(Stage::Model)?;

    let t = Instant::now();
    stage_simulate(sc, &grid, &linear, out).at(Stage::Simulate)?;
    timing.simulate_s = t.elapsed().as_secs_f64();
    // later stages read what was written, exactly as the staged commands do
    let pmu = load_pmu(&out.join(PMU_CSV), Some(&out.join(PMU_META))).at(Stage::Estimate)?;

    let t = Instant::now();
    stage_estimate(&grid, &pmu, out).at(Stage::Estimate)?;
    timing.estimate_s = t.elapsed().as_secs_f64();
    let estimate = EstimatedModel::load(out.join(ESTIMATED_MODEL)).at(Stage::Analyze)?;

    let t = Instant::now();
    let (modes_true, modes_estimated, comparison) =
        stage_analyze(sc, &linear.a, &estimate, out).at(Stage::Analyze)?;
    timing.analyze_s = t.elapsed().as_secs_f64();

    let ds = stage_design(sc, &estimate, Some(&linear.a), false, out).at(Stage::Design)?;
    timing.selection_s = ds.selection_seconds;

    let t = Instant::now();
    let sweep = match &ds.design {
        Some(d) => stage_delay(sc, &estimate, d, out).at(Stage::Delay)?,
        None => Vec::new(),
    };
    timing.delay_s = t.elapsed().as_secs_f64();

    let feasible_true = ds.true_closed_loop.as_ref().map(|modes| {
        let c = sc.wadc.criteria();
        modes.iter().all(|m| match (m.zeta_closed, m.t_s_closed) {
            (Some(z), Some(t)) => c.meets_targets(z, t),
            _ => false,
        })
    });
    let design_ref = ds.design.as_ref();
    let summary = Summary {
        n: grid.n(),
        m: estimate.m(),
        critical_true: modes_true.critical().iter().map(|i| i + 1).collect(),
        critical_estimated: modes_estimated.critical().iter().map(|i| i + 1).collect(),
        feasible: ds.feasible,
        feasible_on_true_system: feasible_true,
        selected: design_ref
            .map(|d| d.selected_global().iter().map(|g| g + 1).collect())
            .unwrap_or_default(),
        n_m: design_ref.map_or(0, ControlDesign::n_m),
        exit_code: if ds.feasible { 0 } else { 2 },
    };
    write_json(out.join(SUMMARY), &summary).at(Stage::Report)?;
    timing.total_s = t_total.elapsed().as_secs_f64();
    write_json(out.join(TIMING), &timing).at(Stage::Report)?;

    Ok(PipelineOutcome {
        grid,
        linear,
        pmu,
        estimate,
        modes_true,
        modes_estimated,
        comparison,
        design: ds.design,
        true_closed_loop: ds.true_closed_loop,
        sweep,
        summary,
        timing,
    })
}

/// Loads the stored PMU data with its sidecar metadata when present.
pub fn load_pmu(csv: &Path, meta: Option<&Path>) -> Result<PmuDataset> {
    let data = PmuDataset::load_csv(csv)?;
    match meta {
        Some(p) if p.exists() => {
            let meta: PmuMetadata = read_json(p)?;
            data.with_metadata(&meta)
        }
        _ => Ok(data),
    }
}

pub fn load_linear_model(path: &Path) -> Result<LinearModel> {
    read_json::<LinearModelFile>(path)?.into_model()
}

/// Rebuilds the applied gain from a stored design report.
pub fn load_design_gain(path: &Path, est: &EstimatedModel) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<Complex64>)> {
    let report: DesignReport = read_json(path)?;
    let local: Vec<usize> = report
        .selected
        .iter()
        .map(|&g| {
            est.available
                .iter()
                .position(|&a| a + 1 == g)
                .ok_or_else(|| Error::Input(format!("selected G{g} has no PMU")))
        })
        .collect::<Result<_>>()?;
    let bc = control_matrix(&local, est.m())?;
    let k = matrix_from_rows(&report.k)?;
    if k.shape() != bc.shape() {
        return Err(Error::DimensionMismatch {
            what: "K rows",
            expected: bc.nrows(),
            got: k.nrows(),
        });
    }
    let start = report
        .modes
        .iter()
        .map(|m| match m.lambda_closed {
            (Some(re), Some(im)) => Complex64::new(re, im),
            _ => Complex64::new(m.lambda_predicted.0, m.lambda_predicted.1),
        })
        .collect();
    Ok((bc, k, start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_defaults_and_paths() {
        let sc = Scenario::from_toml_str("grid = \"g.json\"\n", Path::new("/tmp/x")).unwrap();
        assert_eq!(sc.grid, PathBuf::from("/tmp/x/g.json"));
        assert_eq!(sc.pmu.fs, 60.0);
        assert_eq!(sc.wadc.sigma_d, vec![2.0]);
        assert_eq!(sc.simulation.dt, 1e-3);
        assert!(!sc.wadc.effort_mode);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Scenario::from_toml_str("grid = \"g.json\"\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert_eq!(err.code(), "parse");
    }

    #[test]
    fn pmu_section_maps_ids() {
        let p = PmuSection {
            available: vec![1, 3],
            ..PmuSection::default()
        };
        let cfg = p.to_config(3).unwrap();
        assert_eq!(cfg.available, vec![0, 2]);
        assert_eq!(cfg.capable, vec![0, 2]);
        assert!(PmuSection {
            available: vec![0],
            ..PmuSection::default()
        }
        .to_config(3)
        .is_err());
    }
}
