//! Fixed-parameter sampling with binning error estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{LoopUpdater, SweepStats, UpdateMode};
use crate::error::{Error, Result};
use crate::graph::{color_edges, CouplingGraph};
use crate::worldline::{measure_zz, Fields, TrotterParams, WorldlineConfig};

/// Smallest number of bins the error estimate is allowed to rest on.
const MIN_BINS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// Mean and standard error of a correlated series.
///
/// The series is blocked repeatedly in pairs; the error is the largest naive
/// standard error over all levels that still have at least 32 bins.
pub fn binning_estimate(samples: &[f64]) -> Estimate {
    let n = samples.len();
    let mean = if n == 0 { f64::NAN } else { samples.iter().sum::<f64>() / n as f64 };
    let naive = |xs: &[f64]| -> f64 {
        let m = xs.len();
        if m < 2 {
            return f64::INFINITY;
        }
        let mu = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    };
    let mut level = samples.to_vec();
    let mut stderr = naive(&level);
    while level.len() / 2 >= MIN_BINS {
        level = level.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        stderr = stderr.max(naive(&level));
    }
    Estimate {
        mean,
        stderr,
        n_samples: n,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub thermalization_sweeps: u64,
    pub measurement_sweeps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub zz: Estimate,
    pub stats: SweepStats,
}

/// Updates until `N` have run or the clusters together cover the spacetime
/// volume once. Only used while thermalizing: the stopping rule depends on
/// the state, so measuring after it would bias the samples.
fn volume_sweep(updater: &mut LoopUpdater, config: &mut WorldlineConfig, rng: &mut ChaCha8Rng) -> SweepStats {
    let volume = (config.n_sites() * config.n_slices()) as u64;
    let mut stats = SweepStats::default();
    for _ in 0..config.n_sites() {
        stats.merge(updater.run_updates(config, 1, rng));
        if stats.cluster_spins >= volume {
            break;
        }
    }
    stats
}

/// Updates per measurement: enough clusters of the thermalization mean size
/// to cover the spacetime volume once, between 1 and `N`.
fn updates_per_sweep(config: &WorldlineConfig, thermal: &SweepStats) -> u64 {
    let n = config.n_sites() as u64;
    if thermal.updates == 0 {
        return n;
    }
    let volume = (config.n_sites() * config.n_slices()) as f64;
    ((volume / thermal.mean_cluster_size()).ceil() as u64).clamp(1, n)
}

/// Samples the nearest-neighbour correlation at fixed `(Γ, Λ)`.
///
/// A measurement sweep is a fixed number of updates, at most `N`, chosen after
/// thermalization so that clusters of the mean size cover the spacetime volume
/// about once. One measurement follows each sweep.
pub fn run_equilibrium(
    graph: &CouplingGraph,
    params: TrotterParams,
    mode: &UpdateMode,
    fields: Fields,
    plan: SamplingPlan,
    seed: u64,
) -> Result<EquilibriumResult> {
    run_equilibrium_scaled(graph, params, mode, fields, plan, seed, None)
}

/// As [`run_equilibrium`], optionally with every breakup table built for a
/// coupling scaled by `table_scale`. A scale other than one samples the
/// wrong distribution on purpose.
pub fn run_equilibrium_scaled(
    graph: &CouplingGraph,
    params: TrotterParams,
    mode: &UpdateMode,
    fields: Fields,
    plan: SamplingPlan,
    seed: u64,
    table_scale: Option<f64>,
) -> Result<EquilibriumResult> {
    if plan.measurement_sweeps == 0 {
        return Err(Error::InvalidParams("at least one measurement sweep is needed".into()));
    }
    let coloring = color_edges(graph);
    let mut updater = LoopUpdater::new(graph, &coloring, params, mode, fields)?;
    if let Some(scale) = table_scale {
        updater.distort_tables(scale)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = updater.initial_config(&mut rng);
    let mut thermal = SweepStats::default();
    for _ in 0..plan.thermalization_sweeps {
        thermal.merge(volume_sweep(&mut updater, &mut config, &mut rng));
    }
    let per_sweep = updates_per_sweep(&config, &thermal);
    let mut stats = SweepStats::default();
    let mut samples = Vec::with_capacity(plan.measurement_sweeps as usize);
    for _ in 0..plan.measurement_sweeps {
        stats.merge(updater.run_updates(&mut config, per_sweep, &mut rng));
        samples.push(measure_zz(&config, graph));
    }
    Ok(EquilibriumResult {
        zz: binning_estimate(&samples),
        stats,
    })
}

/// Trotter parameters for a target imaginary-time step, with at least two steps.
pub fn params_for_step(graph: &CouplingGraph, beta: f64, step: f64) -> Result<TrotterParams> {
    let k = color_edges(graph).n_colors.max(1);
    let m = ((beta / step).round() as usize).max(2);
    TrotterParams::new(beta, m, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn binning_of_independent_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..4096).map(|_| rng.random::<f64>()).collect();
        let e = binning_estimate(&xs);
        let expected = (1.0f64 / 12.0 / 4096.0).sqrt();
        assert!((e.mean - 0.5).abs() < 4.0 * expected);
        assert!(e.stderr > 0.8 * expected && e.stderr < 1.6 * expected);
    }

    #[test]
    fn binning_detects_correlation() {
        // each value repeated 16 times: the naive error is 4x too small
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..512).flat_map(|_| std::iter::repeat_n(rng.random::<f64>(), 16)).collect();
        let e = binning_estimate(&xs);
        let expected = (1.0f64 / 12.0 / 512.0).sqrt();
        assert!(e.stderr > 0.7 * expected);
    }

    #[test]
    fn classical_ring_correlation() {
        // Γ = Λ = 0: exact for any Trotter number, ⟨zz⟩ of an 8-ring
        let g = CouplingGraph::chain(8, -1.0, true).unwrap();
        let beta = 0.5f64;
        let t = beta.tanh();
        let exact = (t + t.powi(7)) / (1.0 + t.powi(8));
        let params = params_for_step(&g, beta, 0.1).unwrap();
        let plan = SamplingPlan {
            thermalization_sweeps: 200,
            measurement_sweeps: 20_000,
        };
        let r = run_equilibrium(&g, params, &UpdateMode::Global, Fields::default(), plan, 3).unwrap();
        assert!((r.zz.mean - exact).abs() < 4.0 * r.zz.stderr, "{:?} vs {exact}", r.zz);
    }

    #[test]
    fn rejects_empty_plan() {
        let g = CouplingGraph::chain(4, -1.0, true).unwrap();
        let params = params_for_step(&g, 1.0, 0.1).unwrap();
        let plan = SamplingPlan {
            thermalization_sweeps: 0,
            measurement_sweeps: 0,
        };
        assert!(run_equilibrium(&g, params, &UpdateMode::Global, Fields::default(), plan, 0).is_err());
    }
}
