use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use modalwadc::pipeline::{self, PipelineError, Scenario, Stage};
use modalwadc::{EstimatedModel, Error};

/// Ambient-data modal identification and mode-selective damping control.
#[derive(Debug, Parser)]
#[command(name = "modalwadc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage and write all reports.
    Run(Common),
    /// Simulate ambient data and emulate the PMUs.
    Simulate(Common),
    /// Estimate the state matrix from stored PMU data.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// PMU CSV to read instead of `<out>/pmu.csv`.
        #[arg(long)]
        pmu: Option<PathBuf>,
        /// Metadata sidecar for `--pmu`.
        #[arg(long)]
        pmu_meta: Option<PathBuf>,
    },
    /// Modal reports for the stored true and estimated state matrices.
    Analyze(Common),
    /// Design the damping controller from the stored estimate.
    Design(Common),
    /// Sweep the communication delay for the stored design.
    Delay(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation seed; overrides the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Minimize control effort with all capable generators instead of
    /// searching for the smallest actuator set.
    #[arg(long)]
    effort: bool,
}

impl Common {
    fn load(&self) -> Result<(Scenario, PathBuf), PipelineError> {
        let mut sc = Scenario::load(&self.config).map_err(|e| fail(Stage::Config, e))?;
        if let Some(seed) = self.seed {
            sc.simulation.seed = seed;
        }
        if self.effort {
            sc.wadc.effort_mode = true;
        }
        let out = self
            .out
            .clone()
            .or_else(|| sc.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((sc, out))
    }
}

fn fail(stage: Stage, error: Error) -> PipelineError {
    PipelineError { stage, error }
}

fn require(path: &Path, stage: Stage) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(fail(
            stage,
            Error::Input(format!("missing input {}", path.display())),
        ))
    }
}

fn load_estimate(out: &Path, stage: Stage) -> Result<EstimatedModel, PipelineError> {
    let path = out.join(pipeline::ESTIMATED_MODEL);
    require(&path, stage)?;
    EstimatedModel::load(&path).map_err(|e| fail(stage, e))
}

fn design_exit(feasible: bool) -> u8 {
    if feasible {
        0
    } else {
        2
    }
}

fn execute(cmd: Command) -> Result<u8, PipelineError> {
    match cmd {
        Command::Run(c) => {
            let (sc, out) = c.load()?;
            let outcome = pipeline::run_pipeline(&sc, &out)?;
            log::info!("reports written to {}", out.display());
            Ok(outcome.exit_code() as u8)
        }
        Command::Simulate(c) => {
            let (sc, out) = c.load()?;
            let (grid, lin) = pipeline::stage_model(&sc).map_err(|e| fail(Stage::Model, e))?;
            pipeline::stage_simulate(&sc, &grid, &lin, &out).map_err(|e| fail(Stage::Simulate, e))?;
            Ok(0)
        }
        Command::Estimate {
            common,
            pmu,
            pmu_meta,
        } => {
            let (sc, out) = common.load()?;
            let grid = sc.load_grid().map_err(|e| fail(Stage::Model, e))?;
            let (csv, meta) = match pmu {
                Some(p) => (p, pmu_meta),
                None => (out.join(pipeline::PMU_CSV), Some(out.join(pipeline::PMU_META))),
            };
            require(&csv, Stage::Estimate)?;
            let data = pipeline::load_pmu(&csv, meta.as_deref()).map_err(|e| fail(Stage::Estimate, e))?;
            pipeline::stage_estimate(&grid, &data, &out).map_err(|e| fail(Stage::Estimate, e))?;
            Ok(0)
        }
        Command::Analyze(c) => {
            let (sc, out) = c.load()?;
            let lin_path = out.join(pipeline::LINEAR_MODEL);
            require(&lin_path, Stage::Analyze)?;
            let lin = pipeline::load_linear_model(&lin_path).map_err(|e| fail(Stage::Analyze, e))?;
            let est = load_estimate(&out, Stage::Analyze)?;
            pipeline::stage_analyze(&sc, &lin.a, &est, &out).map_err(|e| fail(Stage::Analyze, e))?;
            Ok(0)
        }
        Command::Design(c) => {
            let (sc, out) = c.load()?;
            let est = load_estimate(&out, Stage::Design)?;
            let lin_path = out.join(pipeline::LINEAR_MODEL);
            let truth = if lin_path.exists() {
                Some(pipeline::load_linear_model(&lin_path).map_err(|e| fail(Stage::Design, e))?)
            } else {
                None
            };
            let ds = pipeline::stage_design(&sc, &est, truth.as_ref().map(|l| &l.a), c.effort, &out)
                .map_err(|e| fail(Stage::Design, e))?;
            Ok(design_exit(ds.feasible))
        }
        Command::Delay(c) => {
            let (sc, out) = c.load()?;
            let est = load_estimate(&out, Stage::Delay)?;
            let design_path = out.join(pipeline::DESIGN);
            require(&design_path, Stage::Delay)?;
            let (bc, k, start) =
                pipeline::load_design_gain(&design_path, &est).map_err(|e| fail(Stage::Delay, e))?;
            let rows = modalwadc::delay::delay_sweep(&est.a_p, &bc, &k, &sc.delay.taus, sc.delay.order, &start)
                .map_err(|e| fail(Stage::Delay, e))?;
            modalwadc::delay::save_sweep_csv(out.join(pipeline::DELAY_SWEEP), &rows)
                .map_err(|e| fail(Stage::Delay, e))?;
            Ok(0)
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("MODALWADC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.to_json()).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(1)
        }
    }
}
