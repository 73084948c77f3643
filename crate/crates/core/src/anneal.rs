//! Annealing runs, disorder-ensemble batches and equilibrium phase scans.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{LoopUpdater, SweepStats, UpdateMode};
use crate::equilibrium::{params_for_step, run_equilibrium, Estimate, SamplingPlan};
use crate::error::{Error, Result};
use crate::graph::{color_edges, BondSubsets, CouplingGraph, SpinGlassInstance};
use crate::worldline::{measure_slice_energies, Fields, TrotterParams};

/// Number of logarithmically spaced checkpoints recorded per run.
pub const N_CHECKPOINTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Driver {
    /// Transverse field only.
    Tf,
    /// Transverse field plus ferromagnetic σxσx.
    Fi,
    /// σxσx only.
    #[serde(rename = "xx")]
    PureXx,
}

impl Driver {
    pub fn name(self) -> &'static str {
        match self {
            Driver::Tf => "tf",
            Driver::Fi => "fi",
            Driver::PureXx => "xx",
        }
    }

    /// Checks that the schedule only switches on the terms this driver uses.
    pub fn check(self, schedule: &Schedule) -> Result<()> {
        let (g, l) = (schedule.gamma0, schedule.lambda0);
        let ok = match self {
            Driver::Tf => l == 0.0,
            Driver::Fi => g > 0.0 && l > 0.0,
            Driver::PureXx => g == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSchedule(format!(
                "driver {} is incompatible with Γ0={g}, Λ0={l}",
                self.name()
            )))
        }
    }
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Driver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tf" => Ok(Driver::Tf),
            "fi" => Ok(Driver::Fi),
            "xx" => Ok(Driver::PureXx),
            _ => Err(Error::InvalidSchedule(format!("unknown driver {s:?} (expected tf, fi or xx)"))),
        }
    }
}

/// Linear decay of both driver strengths to zero over `t_final` updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub gamma0: f64,
    pub lambda0: f64,
    pub t_final: u64,
}

impl Schedule {
    pub fn new(gamma0: f64, lambda0: f64, t_final: u64) -> Result<Self> {
        for (name, v) in [("Γ0", gamma0), ("Λ0", lambda0)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSchedule(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(Self {
            gamma0,
            lambda0,
            t_final,
        })
    }

    pub fn fields_at(&self, t: u64) -> Fields {
        if t >= self.t_final {
            return Fields::new(0.0, 0.0);
        }
        let remaining = 1.0 - t as f64 / self.t_final as f64;
        Fields::new(self.gamma0 * remaining, self.lambda0 * remaining)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub gamma: f64,
    pub lambda: f64,
    pub e_min: f64,
    pub e_mean: f64,
    pub mean_cluster_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    pub t_final: u64,
    /// Lowest classical energy among all time slices at the end.
    pub e_min_slices: f64,
    /// Classical energy averaged over time slices at the end.
    pub e_mean_slices: f64,
    /// `e_min_slices - E0` when the ground energy is known.
    pub e_residual: Option<f64>,
    /// `e_mean_slices - E0` when the ground energy is known.
    pub e_residual_mean: Option<f64>,
    pub mean_cluster_size: f64,
    pub acceptance: f64,
    pub cost: f64,
    pub checkpoints: Vec<Checkpoint>,
}

/// Computational effort `t_final · n̄`.
pub fn cost(result: &AnnealResult) -> f64 {
    result.t_final as f64 * result.mean_cluster_size
}

/// Up to 32 distinct, roughly logarithmically spaced update counts in `[1, t_final]`, ending at `t_final`.
pub fn checkpoint_times(t_final: u64) -> Vec<u64> {
    let n = N_CHECKPOINTS as u64;
    if t_final <= n {
        return (1..=t_final).collect();
    }
    let top = (t_final as f64).ln();
    let mut times: Vec<u64> = Vec::with_capacity(N_CHECKPOINTS);
    for k in 0..n {
        let target = (top * k as f64 / (n - 1) as f64).exp().round() as u64;
        let after_previous = times.last().map_or(1, |&t| t + 1);
        // leave room for the remaining checkpoints
        times.push(target.max(after_previous).min(t_final - (n - 1 - k)));
    }
    times
}

fn slice_summary(energies: &[f64]) -> (f64, f64) {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    // summation rounding can put the mean of equal energies an ulp below them
    (min, mean.max(min))
}

/// Runs one annealing schedule from a random time-constant state.
///
/// Breakup tables and stop probabilities are refreshed once every `N`
/// updates from the fields at the start of that block. The random stream is
/// selected by `seed` and the instance's own seed.
pub fn run_annealing(
    instance: &SpinGlassInstance,
    params: TrotterParams,
    schedule: &Schedule,
    mode: &UpdateMode,
    driver: Driver,
    seed: u64,
) -> Result<AnnealResult> {
    driver.check(schedule)?;
    let graph = &instance.graph;
    let coloring = color_edges(graph);
    let mut updater = LoopUpdater::new(graph, &coloring, params, mode, schedule.fields_at(0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(instance.seed.unwrap_or(0));
    let mut config = updater.initial_config(&mut rng);

    let block = graph.n_sites() as u64;
    let times = checkpoint_times(schedule.t_final);
    let mut next = times.iter().peekable();
    let mut checkpoints = Vec::with_capacity(times.len());
    let mut stats = SweepStats::default();
    let mut t = 0;
    while t < schedule.t_final {
        let fields = schedule.fields_at(t);
        updater.set_fields(fields)?;
        let end = (t + block).min(schedule.t_final);
        while t < end {
            stats.merge(updater.run_updates(&mut config, 1, &mut rng));
            t += 1;
            if next.next_if_eq(&&t).is_some() {
                let (e_min, e_mean) = slice_summary(&measure_slice_energies(&config, graph));
                checkpoints.push(Checkpoint {
                    t,
                    gamma: fields.gamma,
                    lambda: fields.lambda,
                    e_min,
                    e_mean,
                    mean_cluster_size: stats.mean_cluster_size(),
                });
            }
        }
    }

    let (e_min_slices, e_mean_slices) = slice_summary(&measure_slice_energies(&config, graph));
    let mut result = AnnealResult {
        t_final: schedule.t_final,
        e_min_slices,
        e_mean_slices,
        e_residual: instance.ground_energy.map(|e0| e_min_slices - e0),
        e_residual_mean: instance.ground_energy.map(|e0| e_mean_slices - e0),
        mean_cluster_size: stats.mean_cluster_size(),
        acceptance: stats.acceptance_rate(),
        cost: 0.0,
        checkpoints,
    };
    result.cost = cost(&result);
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverSpec {
    pub driver: Driver,
    pub gamma0: f64,
    pub lambda0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Global,
    Semilocal,
}

impl ModeKind {
    pub fn name(self) -> &'static str {
        match self {
            ModeKind::Global => "global",
            ModeKind::Semilocal => "semilocal",
        }
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ModeKind::Global),
            "semilocal" => Ok(ModeKind::Semilocal),
            _ => Err(Error::InvalidParams(format!(
                "unknown update mode {s:?} (expected global or semilocal)"
            ))),
        }
    }
}

/// Configuration matrix of a batch: every combination is run for every seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub drivers: Vec<DriverSpec>,
    pub modes: Vec<ModeKind>,
    pub betas: Vec<f64>,
    pub trotter_step: f64,
    pub t_finals: Vec<u64>,
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn n_runs_per_instance(&self) -> usize {
        self.drivers.len() * self.modes.len() * self.betas.len() * self.t_finals.len() * self.seeds.len()
    }
}

#[derive(Clone, Debug)]
pub struct BatchInstance {
    pub name: String,
    pub instance: SpinGlassInstance,
    /// Subsets for semi-local runs; the lattice default is used when absent.
    pub subsets: Option<BondSubsets>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchRow {
    pub instance: String,
    pub driver: Driver,
    pub mode: ModeKind,
    pub beta: f64,
    pub m_slices: usize,
    pub t_final: u64,
    pub seed: u64,
    pub outcome: std::result::Result<AnnealResult, String>,
}

pub const CSV_HEADER: &str = "instance,driver,mode,beta,M,t_final,seed,e_min,e_mean,e_residual,nbar,cost";

impl BatchRow {
    /// One CSV line, or a `#` comment describing the failure.
    pub fn to_csv(&self) -> String {
        let prefix = format!(
            "{},{},{},{},{},{},{}",
            self.instance,
            self.driver,
            self.mode.name(),
            self.beta,
            self.m_slices,
            self.t_final,
            self.seed
        );
        match &self.outcome {
            Ok(r) => {
                let residual = r.e_residual.map(|v| v.to_string()).unwrap_or_default();
                format!(
                    "{prefix},{},{},{residual},{},{}",
                    r.e_min_slices, r.e_mean_slices, r.mean_cluster_size, r.cost
                )
            }
            Err(msg) => format!("# failed {prefix}: {msg}"),
        }
    }
}

struct Job {
    instance: usize,
    spec: DriverSpec,
    mode: ModeKind,
    beta: f64,
    t_final: u64,
    seed: u64,
}

fn run_job(job: &Job, inst: &BatchInstance, trotter_step: f64) -> (usize, std::result::Result<AnnealResult, String>) {
    let run = || -> Result<(usize, AnnealResult)> {
        let params = params_for_step(&inst.instance.graph, job.beta, trotter_step)?;
        let mode = match job.mode {
            ModeKind::Global => UpdateMode::Global,
            ModeKind::Semilocal => match &inst.subsets {
                Some(s) => UpdateMode::SemiLocal(s.clone()),
                None => UpdateMode::SemiLocal(inst.instance.default_subsets()?),
            },
        };
        let schedule = Schedule::new(job.spec.gamma0, job.spec.lambda0, job.t_final)?;
        let result = run_annealing(&inst.instance, params, &schedule, &mode, job.spec.driver, job.seed)?;
        Ok((params.m_slices, result))
    };
    match run() {
        Ok((m, r)) => (m, Ok(r)),
        Err(e) => {
            let m = (job.beta / trotter_step).round() as usize;
            (m, Err(e.to_string()))
        }
    }
}

/// Runs every (instance, configuration, seed) combination on the current
/// rayon pool. Rows come back in a fixed order regardless of scheduling;
/// a failed run yields a row carrying its error.
pub fn batch_run(instances: &[BatchInstance], config: &SweepConfig) -> Vec<BatchRow> {
    let mut jobs = Vec::new();
    for (k, _) in instances.iter().enumerate() {
        for &spec in &config.drivers {
            for &mode in &config.modes {
                for &beta in &config.betas {
                    for &t_final in &config.t_finals {
                        for &seed in &config.seeds {
                            jobs.push(Job {
                                instance: k,
                                spec,
                                mode,
                                beta,
                                t_final,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    jobs.par_iter()
        .map(|job| {
            let inst = &instances[job.instance];
            let (m_slices, outcome) = run_job(job, inst, config.trotter_step);
            BatchRow {
                instance: inst.name.clone(),
                driver: job.spec.driver,
                mode: job.mode,
                beta: job.beta,
                m_slices,
                t_final: job.t_final,
                seed: job.seed,
                outcome,
            }
        })
        .collect()
}

/// Renders rows as CSV, preceded by the given `#` provenance lines.
pub fn rows_to_csv(rows: &[BatchRow], provenance: &[String]) -> String {
    let mut out = String::new();
    for line in provenance {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "{CSV_HEADER}");
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseScanConfig {
    pub beta: f64,
    pub trotter_step: f64,
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub plan: SamplingPlan,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub lambda: f64,
    pub gamma: f64,
    pub zz: Estimate,
    /// `zz / zz(Λ=0, Γ=0)`.
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseScan {
    /// Correlation at `Λ = Γ = 0`, the normalization of every point.
    pub reference: Estimate,
    pub points: Vec<PhasePoint>,
}

fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Equilibrium correlations over a `(Λ, Γ)` grid with global updates,
/// grid points spread over the current rayon pool.
pub fn phase_scan(graph: &CouplingGraph, config: &PhaseScanConfig) -> Result<PhaseScan> {
    let params = params_for_step(graph, config.beta, config.trotter_step)?;
    let grid: Vec<(f64, f64)> = config
        .gammas
        .iter()
        .flat_map(|&g| config.lambdas.iter().map(move |&l| (l, g)))
        .collect();
    let estimate = |k: usize, (lambda, gamma): (f64, f64)| -> Result<Estimate> {
        let r = run_equilibrium(
            graph,
            params,
            &UpdateMode::Global,
            Fields::new(gamma, lambda),
            config.plan,
            point_seed(config.seed, k),
        )?;
        Ok(r.zz)
    };
    let reference = estimate(usize::MAX - 1, (0.0, 0.0))?;
    let estimates: Vec<Estimate> = grid
        .par_iter()
        .enumerate()
        .map(|(k, &p)| estimate(k, p))
        .collect::<Result<_>>()?;
    let points = grid
        .iter()
        .zip(estimates)
        .map(|(&(lambda, gamma), zz)| PhasePoint {
            lambda,
            gamma,
            zz,
            normalized: zz.mean / reference.mean,
        })
        .collect();
    Ok(PhaseScan { reference, points })
}

/// For each Γ, the smallest Λ at which the normalized correlation falls
/// through `level`, by linear interpolation between grid points.
pub fn crossing_contour(points: &[PhasePoint], level: f64) -> Vec<(f64, Option<f64>)> {
    let mut gammas: Vec<f64> = points.iter().map(|p| p.gamma).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    gammas
        .into_iter()
        .map(|g| {
            let mut column: Vec<&PhasePoint> = points.iter().filter(|p| p.gamma == g).collect();
            column.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
            let crossing = column.windows(2).find_map(|w| {
                let (a, b) = (w[0], w[1]);
                if a.normalized >= level && b.normalized < level {
                    let f = (a.normalized - level) / (a.normalized - b.normalized);
                    Some(a.lambda + f * (b.lambda - a.lambda))
                } else {
                    None
                }
            });
            let crossing = crossing.or_else(|| column.first().filter(|p| p.normalized < level).map(|p| p.lambda));
            (g, crossing)
        })
        .collect()
}

pub fn phase_scan_csv(scan: &PhaseScan, provenance: &[String]) -> String {
    let mut out = String::new();
    for line in provenance {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(
        out,
        "# reference zz(0,0) = {} +- {}",
        scan.reference.mean, scan.reference.stderr
    );
    let _ = writeln!(out, "lambda,gamma,zz,zz_stderr,normalized");
    for p in &scan.points {
        let _ = writeln!(out, "{},{},{},{},{}", p.lambda, p.gamma, p.zz.mean, p.zz.stderr, p.normalized);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_instance;

    #[test]
    fn schedule_endpoints() {
        let s = Schedule::new(2.0, 1.0, 100).unwrap();
        assert_eq!(s.fields_at(0), Fields::new(2.0, 1.0));
        assert_eq!(s.fields_at(50), Fields::new(1.0, 0.5));
        assert_eq!(s.fields_at(100), Fields::new(0.0, 0.0));
        assert!(Schedule::new(-1.0, 0.0, 10).is_err());
        assert!(Schedule::new(1.0, f64::NAN, 10).is_err());
    }

    #[test]
    fn driver_consistency() {
        let s = |g, l| Schedule::new(g, l, 10).unwrap();
        assert!(Driver::Tf.check(&s(2.0, 0.0)).is_ok());
        assert!(Driver::Tf.check(&s(2.0, 1.0)).is_err());
        assert!(Driver::PureXx.check(&s(0.0, 1.0)).is_ok());
        assert!(Driver::PureXx.check(&s(1.0, 1.0)).is_err());
        assert!(Driver::Fi.check(&s(1.0, 1.0)).is_ok());
        assert!(Driver::Fi.check(&s(1.0, 0.0)).is_err());
        assert_eq!("xx".parse::<Driver>().unwrap(), Driver::PureXx);
        assert!("zz".parse::<Driver>().is_err());
    }

    #[test]
    fn checkpoints_are_log_spaced() {
        let t = checkpoint_times(1_000_000);
        assert_eq!(t.len(), N_CHECKPOINTS);
        assert_eq!((t[0], *t.last().unwrap()), (1, 1_000_000));
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        let short = checkpoint_times(5);
        assert_eq!(short, vec![1, 2, 3, 4, 5]);
        assert!(checkpoint_times(0).is_empty());
    }

    #[test]
    fn cost_definition() {
        let r = AnnealResult {
            t_final: 1000,
            e_min_slices: 0.0,
            e_mean_slices: 0.0,
            e_residual: None,
            e_residual_mean: None,
            mean_cluster_size: 12.5,
            acceptance: 1.0,
            cost: 0.0,
            checkpoints: vec![],
        };
        assert_eq!(cost(&r), 12500.0);
    }

    fn small_instance() -> SpinGlassInstance {
        let mut inst = generate_instance(3, 3, true, 4).unwrap();
        inst.ensure_ground_energy();
        inst
    }

    #[test]
    fn zero_length_run_keeps_initial_state() {
        let inst = small_instance();
        let params = params_for_step(&inst.graph, 2.0, 0.25).unwrap();
        let schedule = Schedule::new(2.0, 0.0, 0).unwrap();
        let r = run_annealing(&inst, params, &schedule, &UpdateMode::Global, Driver::Tf, 9).unwrap();
        assert_eq!(r.e_min_slices, r.e_mean_slices);
        assert!(r.e_residual.unwrap() >= 0.0);
        assert_eq!(r.cost, 0.0);
        assert!(r.checkpoints.is_empty());
    }

    #[test]
    fn annealing_is_reproducible_and_bounded() {
        let inst = small_instance();
        let e0 = inst.ground_energy.unwrap();
        let params = params_for_step(&inst.graph, 4.0, 0.3125).unwrap();
        let subsets = inst.default_subsets().unwrap();
        let schedule = Schedule::new(1.0, 1.0, 2000).unwrap();
        for mode in [UpdateMode::Global, UpdateMode::SemiLocal(subsets)] {
            let a = run_annealing(&inst, params, &schedule, &mode, Driver::Fi, 5).unwrap();
            let b = run_annealing(&inst, params, &schedule, &mode, Driver::Fi, 5).unwrap();
            assert_eq!(a, b);
            assert!(a.e_min_slices <= a.e_mean_slices);
            assert!(a.e_residual.unwrap() >= -1e-12);
            assert!(a.e_min_slices >= e0 - 1e-12);
            assert_eq!(a.cost, a.t_final as f64 * a.mean_cluster_size);
            assert_eq!(a.checkpoints.len(), N_CHECKPOINTS);
            assert_eq!(a.checkpoints.last().unwrap().t, 2000);
        }
    }

    #[test]
    fn batch_rows_and_failures() {
        let inst = small_instance();
        let instances = vec![BatchInstance {
            name: "a".into(),
            instance: inst,
            subsets: None,
        }];
        let config = SweepConfig {
            drivers: vec![
                DriverSpec {
                    driver: Driver::Tf,
                    gamma0: 2.0,
                    lambda0: 0.0,
                },
                DriverSpec {
                    driver: Driver::Tf,
                    gamma0: 2.0,
                    lambda0: 1.0,
                },
            ],
            modes: vec![ModeKind::Semilocal],
            betas: vec![2.0],
            trotter_step: 0.25,
            t_finals: vec![100],
            seeds: vec![1, 2, 3],
        };
        let rows = batch_run(&instances, &config);
        assert_eq!(rows.len(), 6);
        assert!(rows[..3].iter().all(|r| r.outcome.is_ok()));
        assert!(rows[3..].iter().all(|r| r.outcome.is_err()));
        assert_eq!(rows, batch_run(&instances, &config));
        let csv = rows_to_csv(&rows, &["test".into()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], CSV_HEADER);
        assert_eq!(lines.iter().filter(|l| !l.starts_with('#')).count(), 4);
        assert!(lines[2].starts_with("a,tf,semilocal,2,8,100,1,"));
    }

    #[test]
    fn contour_interpolation() {
        let e = Estimate {
            mean: 0.0,
            stderr: 0.0,
            n_samples: 1,
        };
        let p = |lambda, gamma, normalized| PhasePoint {
            lambda,
            gamma,
            zz: e,
            normalized,
        };
        let points = vec![
            p(0.0, 0.0, 1.0),
            p(0.5, 0.0, 0.8),
            p(1.0, 0.0, 0.4),
            p(0.0, 1.0, 0.6),
            p(0.5, 1.0, 0.3),
            p(0.0, 2.0, 0.2),
        ];
        let c = crossing_contour(&points, 0.5);
        assert_eq!(c.len(), 3);
        assert!((c[0].1.unwrap() - 0.875).abs() < 1e-12);
        assert!((c[1].1.unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(c[2].1, Some(0.0));
    }
}
