//! The `sqa` command line.
//!
//! Every output starts with `#` lines carrying the code version and the
//! full [`RunConfig`] as JSON; `sqa run --config FILE` replays either a
//! JSON config or any output file that carries one.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::anneal::{
    batch_run, crossing_contour, phase_scan, phase_scan_csv, rows_to_csv, run_annealing, BatchInstance, BatchRow,
    Driver, ModeKind, PhaseScanConfig, Schedule, SweepConfig,
};
use crate::cluster::UpdateMode;
use crate::equilibrium::{params_for_step, SamplingPlan};
use crate::error::Error;
use crate::graph::{generate_instance, ground_state_exhaustive, BondSubsets, CouplingGraph, SpinGlassInstance};
use crate::validation::{chain_grid, scaled_grid, validate, validation_csv, ValidationPlan, ValidationPoint, PASS_SIGMAS};
use crate::VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Contour level reported by `phase-scan`.
const CROSSING_LEVEL: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("{failed} of {total} points deviate by more than {PASS_SIGMAS} standard errors")]
    ValidationFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::ValidationFailed { .. } => EXIT_VALIDATION,
            CliError::Core(e) => match e {
                Error::Capacity { .. } => EXIT_CAPACITY,
                Error::LatticeTooSmall { .. } | Error::InvalidParams(_) | Error::InvalidSchedule(_) => EXIT_USAGE,
                _ => EXIT_OTHER,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "sqa", version, about = "Loop-cluster path-integral Monte Carlo for quantum annealing")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "SQA_JOBS", default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Replay a configuration from a JSON file or from a previous output.
    Run(RunArgs),
    #[command(flatten)]
    Config(RunConfig),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the output path stored in the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything that determines a command's output.
#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    /// Generate a random ±J-uniform square-lattice spin glass.
    GenInstance(GenInstanceArgs),
    /// Exact classical ground state by enumeration.
    GroundState(GroundStateArgs),
    /// Compare QMC against exact diagonalization.
    Validate(ValidateArgs),
    /// One annealing run.
    Anneal(AnnealArgs),
    /// A batch of annealing runs described by a JSON matrix.
    Sweep(SweepArgs),
    /// Equilibrium correlations of a ferromagnet over a (Λ, Γ) grid.
    PhaseScan(PhaseScanArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenInstanceArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub periodic: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also store the exact ground-state energy.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    /// 8-site periodic ferromagnetic chain.
    Chain8,
    /// 3x3 periodic ferromagnetic square lattice.
    Lattice3x3,
}

impl System {
    pub fn graph(self) -> CouplingGraph {
        match self {
            System::Chain8 => CouplingGraph::chain(8, -1.0, true),
            System::Lattice3x3 => CouplingGraph::square_lattice(3, 3, true, |_| -1.0),
        }
        .expect("built-in systems are valid")
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grid {
    /// β ∈ {0.5, 1, 2, 5} with (Λ, Γ) ∈ {(0,1), (0.5,0.5), (1,0), (1,1)}.
    Chain,
    /// Λ = λZ, Γ = (1−λ)Z for Z ∈ {0.5, 1, 2}, λ ∈ {0, 0.25, ..., 1} at each β.
    Scaled,
    /// Every combination of --betas, --lambdas and --gammas.
    Custom,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = System::Chain8)]
    pub system: System,
    /// Instance file used instead of a built-in system.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Grid::Chain)]
    pub grid: Grid,
    #[arg(long, value_delimiter = ',', default_values_t = [5.0])]
    pub betas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub gammas: Vec<f64>,
    #[arg(long, default_value_t = 0.005)]
    pub trotter_step: f64,
    #[arg(long, default_value_t = 10_000)]
    pub sweeps: u64,
    #[arg(long, default_value_t = 200)]
    pub thermalization: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Build breakup tables for couplings scaled by this factor (negative control).
    #[arg(long, hide = true)]
    pub corrupt_tables: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealArgs {
    /// Instance file; without it a periodic instance is generated from
    /// --width, --height and --instance-seed.
    #[arg(long, conflicts_with_all = ["width", "height", "instance_seed"])]
    pub instance: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub height: usize,
    #[arg(long, default_value_t = 0)]
    pub instance_seed: u64,
    /// Bond subsets for semi-local updates; defaults to the lattice plaquettes.
    #[arg(long)]
    pub subsets: Option<PathBuf>,
    #[arg(long)]
    pub driver: Driver,
    #[arg(long, default_value_t = 0.0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda0: f64,
    #[arg(long, default_value_t = 20.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.3125)]
    pub trotter_step: f64,
    #[arg(long, default_value_t = 10_000)]
    pub t_final: u64,
    #[arg(long, default_value_t = ModeKind::Semilocal)]
    pub mode: ModeKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the checkpoint trace as CSV to this path.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepArgs {
    /// JSON run matrix.
    #[arg(long)]
    pub config: PathBuf,
    /// Instance files; each may have a sibling `<stem>.subsets` file.
    #[arg(required = true)]
    pub instances: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// The matrix read from --config, recorded for provenance.
    #[arg(skip)]
    #[serde(default)]
    pub matrix: Option<SweepConfig>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseScanArgs {
    #[arg(long, default_value_t = 10)]
    pub width: usize,
    #[arg(long, default_value_t = 10)]
    pub height: usize,
    #[arg(long, default_value_t = 20.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub trotter_step: f64,
    #[arg(long, default_value_t = 1.9)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 1.9)]
    pub gamma_max: f64,
    /// Grid points along each axis, including both ends.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 200)]
    pub sweeps: u64,
    #[arg(long, default_value_t = 50)]
    pub thermalization: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const CONFIG_PREFIX: &str = "# config ";

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("configs serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a JSON config, or the config line embedded in an output file.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match text.lines().find_map(|l| l.strip_prefix(CONFIG_PREFIX)) {
            Some(json) => Self::from_json(json),
            None => Self::from_json(&text),
        }
    }

    /// Provenance lines, without the leading `# `. The output path is left
    /// out so that where a result is written does not change its content.
    pub fn provenance(&self) -> Vec<String> {
        let mut recorded = self.clone();
        *recorded.out_mut() = None;
        vec![
            format!("sqa {VERSION}"),
            format!("{}{}", &CONFIG_PREFIX[2..], recorded.to_json()),
        ]
    }

    fn out_mut(&mut self) -> &mut Option<PathBuf> {
        match self {
            RunConfig::GenInstance(a) => &mut a.out,
            RunConfig::GroundState(a) => &mut a.out,
            RunConfig::Validate(a) => &mut a.out,
            RunConfig::Anneal(a) => &mut a.out,
            RunConfig::Sweep(a) => &mut a.out,
            RunConfig::PhaseScan(a) => &mut a.out,
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_instance(path: &Path) -> CliResult<SpinGlassInstance> {
    let mut inst = SpinGlassInstance::read(path)?;
    inst.ensure_ground_energy();
    Ok(inst)
}

fn instance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn spins_text(spins: &[i8]) -> String {
    spins.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect()
}

/// Executes one configuration and writes its output.
pub fn execute(mut config: RunConfig) -> CliResult<()> {
    if let RunConfig::Sweep(args) = &mut config {
        if args.matrix.is_none() {
            let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
            args.matrix = Some(serde_json::from_str(&text).map_err(Error::from)?);
        }
    }
    let provenance = config.provenance();
    match &config {
        RunConfig::GenInstance(a) => {
            let mut inst = generate_instance(a.width, a.height, a.periodic, a.seed)?;
            if a.exact {
                let (e0, _) = ground_state_exhaustive(&inst.graph)?;
                inst.ground_energy = Some(e0);
            }
            emit(&a.out, &inst.to_text(&provenance))
        }
        RunConfig::GroundState(a) => {
            let inst = SpinGlassInstance::read(&a.instance)?;
            let (e0, spins) = ground_state_exhaustive(&inst.graph)?;
            let mut text = String::new();
            for line in &provenance {
                let _ = writeln!(text, "# {line}");
            }
            let _ = writeln!(text, "energy,spins\n{e0:?},{}", spins_text(&spins));
            emit(&a.out, &text)
        }
        RunConfig::Validate(a) => cmd_validate(a, &provenance),
        RunConfig::Anneal(a) => cmd_anneal(a, &provenance),
        RunConfig::Sweep(a) => {
            let matrix = a.matrix.as_ref().expect("loaded above");
            let mut instances = Vec::with_capacity(a.instances.len());
            for path in &a.instances {
                let sibling = path.with_extension("subsets");
                let subsets = if sibling.exists() {
                    Some(BondSubsets::read(&sibling)?)
                } else {
                    None
                };
                instances.push(BatchInstance {
                    name: instance_name(path),
                    instance: read_instance(path)?,
                    subsets,
                });
            }
            let rows = batch_run(&instances, matrix);
            emit(&a.out, &rows_to_csv(&rows, &provenance))
        }
        RunConfig::PhaseScan(a) => {
            if a.points < 2 {
                return Err(CliError::Usage("--points must be at least 2".into()));
            }
            let graph = CouplingGraph::square_lattice(a.width, a.height, true, |_| -1.0)?;
            let axis = |max: f64| -> Vec<f64> { (0..a.points).map(|k| max * k as f64 / (a.points - 1) as f64).collect() };
            let scan = phase_scan(
                &graph,
                &PhaseScanConfig {
                    beta: a.beta,
                    trotter_step: a.trotter_step,
                    lambdas: axis(a.lambda_max),
                    gammas: axis(a.gamma_max),
                    plan: SamplingPlan {
                        thermalization_sweeps: a.thermalization,
                        measurement_sweeps: a.sweeps,
                    },
                    seed: a.seed,
                },
            )?;
            let mut lines = provenance.clone();
            for (gamma, lambda) in crossing_contour(&scan.points, CROSSING_LEVEL) {
                let lambda = lambda.map(|l| l.to_string()).unwrap_or_else(|| "none".into());
                lines.push(format!("crossing {CROSSING_LEVEL} gamma={gamma} lambda={lambda}"));
            }
            emit(&a.out, &phase_scan_csv(&scan, &lines))
        }
    }
}

fn cmd_validate(a: &ValidateArgs, provenance: &[String]) -> CliResult<()> {
    let graph = match &a.instance {
        Some(path) => SpinGlassInstance::read(path)?.graph,
        None => a.system.graph(),
    };
    let points: Vec<ValidationPoint> = match a.grid {
        Grid::Chain => chain_grid(),
        Grid::Scaled => a.betas.iter().flat_map(|&b| scaled_grid(b)).collect(),
        Grid::Custom => {
            if a.lambdas.is_empty() || a.gammas.is_empty() {
                return Err(CliError::Usage("--grid custom needs --lambdas and --gammas".into()));
            }
            let mut points = Vec::new();
            for &beta in &a.betas {
                for &lambda in &a.lambdas {
                    for &gamma in &a.gammas {
                        points.push(ValidationPoint { beta, lambda, gamma });
                    }
                }
            }
            points
        }
    };
    let plan = ValidationPlan {
        trotter_step: a.trotter_step,
        sampling: SamplingPlan {
            thermalization_sweeps: a.thermalization,
            measurement_sweeps: a.sweeps,
        },
        seed: a.seed,
        table_scale: a.corrupt_tables,
    };
    let rows = validate(&graph, &points, &plan)?;
    emit(&a.out, &validation_csv(&rows, provenance))?;
    let failed = rows.iter().filter(|r| !r.passes()).count();
    if failed > 0 {
        return Err(CliError::ValidationFailed {
            failed,
            total: rows.len(),
        });
    }
    Ok(())
}

fn cmd_anneal(a: &AnnealArgs, provenance: &[String]) -> CliResult<()> {
    let schedule = Schedule::new(a.gamma0, a.lambda0, a.t_final)?;
    a.driver.check(&schedule)?;
    let (name, inst) = match &a.instance {
        Some(path) => (instance_name(path), read_instance(path)?),
        None => {
            let mut inst = generate_instance(a.width, a.height, true, a.instance_seed)?;
            inst.ensure_ground_energy();
            (format!("generated-{}x{}-{}", a.width, a.height, a.instance_seed), inst)
        }
    };
    let mode = match a.mode {
        ModeKind::Global => UpdateMode::Global,
        ModeKind::Semilocal => match &a.subsets {
            Some(path) => UpdateMode::SemiLocal(BondSubsets::read(path)?),
            None => UpdateMode::SemiLocal(inst.default_subsets()?),
        },
    };
    let params = params_for_step(&inst.graph, a.beta, a.trotter_step)?;
    let result = run_annealing(&inst, params, &schedule, &mode, a.driver, a.seed)?;
    if let Some(path) = &a.trace {
        let mut text = String::new();
        for line in provenance {
            let _ = writeln!(text, "# {line}");
        }
        let _ = writeln!(text, "t,gamma,lambda,e_min,e_mean,nbar");
        for c in &result.checkpoints {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                c.t, c.gamma, c.lambda, c.e_min, c.e_mean, c.mean_cluster_size
            );
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    let row = BatchRow {
        instance: name,
        driver: a.driver,
        mode: a.mode,
        beta: a.beta,
        m_slices: params.m_slices,
        t_final: a.t_final,
        seed: a.seed,
        outcome: Ok(result),
    };
    emit(&a.out, &rows_to_csv(&[row], provenance))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.jobs)))?;
    pool.install(|| match cli.command {
        Command::Config(config) => execute(config),
        Command::Run(args) => {
            let mut config = RunConfig::load(&args.config)?;
            if args.out.is_some() {
                *config.out_mut() = args.out;
            }
            execute(config)
        }
    })
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
