//! QMC against exact diagonalization on small systems.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::UpdateMode;
use crate::equilibrium::{params_for_step, run_equilibrium_scaled, SamplingPlan};
use crate::error::{Error, Result};
use crate::graph::CouplingGraph;
use crate::oracle::{Observable, SpectralDecomposition, MAX_ED_SITES};
use crate::worldline::Fields;

/// Number of combined standard errors a point may deviate by.
pub const PASS_SIGMAS: f64 = 3.0;

/// `(Λ, Γ)` pairs of the chain benchmark.
pub const CHAIN_FIELDS: [(f64, f64); 4] = [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0), (1.0, 1.0)];
pub const CHAIN_BETAS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
pub const SCALE_Z: [f64; 3] = [0.5, 1.0, 2.0];
pub const SCALE_LAMBDA: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
}

/// Every `β` of [`CHAIN_BETAS`] with every pair of [`CHAIN_FIELDS`].
pub fn chain_grid() -> Vec<ValidationPoint> {
    CHAIN_BETAS
        .iter()
        .flat_map(|&beta| {
            CHAIN_FIELDS
                .iter()
                .map(move |&(lambda, gamma)| ValidationPoint { beta, lambda, gamma })
        })
        .collect()
}

/// `Λ = λZ`, `Γ = (1 − λ)Z` over [`SCALE_Z`] and [`SCALE_LAMBDA`].
pub fn scaled_grid(beta: f64) -> Vec<ValidationPoint> {
    SCALE_Z
        .iter()
        .flat_map(|&z| {
            SCALE_LAMBDA.iter().map(move |&l| ValidationPoint {
                beta,
                lambda: l * z,
                gamma: (1.0 - l) * z,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub point: ValidationPoint,
    pub ed: f64,
    pub qmc: f64,
    pub stderr: f64,
}

impl ValidationRow {
    /// Deviation in units of the QMC standard error (ED is exact).
    pub fn sigmas(&self) -> f64 {
        (self.qmc - self.ed).abs() / self.stderr
    }

    pub fn passes(&self) -> bool {
        (self.qmc - self.ed).abs() <= PASS_SIGMAS * self.stderr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPlan {
    pub trotter_step: f64,
    pub sampling: SamplingPlan,
    pub seed: u64,
    /// Scale applied to the couplings behind every breakup table; a
    /// negative control when not one.
    pub table_scale: Option<f64>,
}

fn point_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Nearest-neighbour correlation from global-update QMC and from ED at
/// every point. Points run in parallel on the current rayon pool.
pub fn validate(graph: &CouplingGraph, points: &[ValidationPoint], plan: &ValidationPlan) -> Result<Vec<ValidationRow>> {
    if graph.n_sites() > MAX_ED_SITES {
        return Err(Error::Capacity {
            what: "exact diagonalization (sites)",
            limit: MAX_ED_SITES,
            requested: graph.n_sites(),
        });
    }
    points
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let spectrum = SpectralDecomposition::of(graph, p.gamma, p.lambda)?;
            let ed = spectrum.thermal_expectation(graph, p.beta, Observable::ZzNearestNeighbour);
            let params = params_for_step(graph, p.beta, plan.trotter_step)?;
            let r = run_equilibrium_scaled(
                graph,
                params,
                &UpdateMode::Global,
                Fields::new(p.gamma, p.lambda),
                plan.sampling,
                point_seed(plan.seed, k),
                plan.table_scale,
            )?;
            Ok(ValidationRow {
                point: *p,
                ed,
                qmc: r.zz.mean,
                stderr: r.zz.stderr,
            })
        })
        .collect()
}

pub const VALIDATION_HEADER: &str = "beta,lambda,gamma,ed,qmc,qmc_stderr,sigmas,pass";

pub fn validation_csv(rows: &[ValidationRow], provenance: &[String]) -> String {
    let mut out = String::new();
    for line in provenance {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "{VALIDATION_HEADER}");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.3},{}",
            r.point.beta,
            r.point.lambda,
            r.point.gamma,
            r.ed,
            r.qmc,
            r.stderr,
            r.sigmas(),
            r.passes()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = chain_grid();
        assert_eq!(g.len(), 16);
        let s = scaled_grid(5.0);
        assert_eq!(s.len(), 15);
        assert!(s.iter().all(|p| p.beta == 5.0 && p.lambda >= 0.0 && p.gamma >= 0.0));
        assert!(s.iter().any(|p| p.lambda == 2.0 && p.gamma == 0.0));
    }

    #[test]
    fn small_chain_agrees() {
        let g = CouplingGraph::chain(4, -1.0, true).unwrap();
        let points = [ValidationPoint {
            beta: 1.0,
            lambda: 0.5,
            gamma: 0.5,
        }];
        let plan = ValidationPlan {
            trotter_step: 0.01,
            sampling: SamplingPlan {
                thermalization_sweeps: 100,
                measurement_sweeps: 4000,
            },
            seed: 1,
            table_scale: None,
        };
        let rows = validate(&g, &points, &plan).unwrap();
        assert!(rows[0].sigmas() < 4.0, "{:?}", rows[0]);
        let csv = validation_csv(&rows, &[]);
        assert_eq!(csv.lines().next(), Some(VALIDATION_HEADER));
    }

    #[test]
    fn too_large_for_ed() {
        let g = CouplingGraph::chain(13, -1.0, true).unwrap();
        let plan = ValidationPlan {
            trotter_step: 0.1,
            sampling: SamplingPlan {
                thermalization_sweeps: 1,
                measurement_sweeps: 1,
            },
            seed: 0,
            table_scale: None,
        };
        assert!(matches!(validate(&g, &chain_grid(), &plan), Err(Error::Capacity { .. })));
    }
}
