//! Exact references for small systems.
//!
//! Basis states are integers whose bit `i` is set when spin `i` points down.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cluster::tf_stop_probability;
use crate::error::{Error, Result};
use crate::graph::{color_edges, CouplingGraph};
use crate::worldline::{diagonal_weight, Fields, Layout, TrotterParams, WorldlineConfig};

pub const MAX_ED_SITES: usize = 12;
pub const MAX_ENUMERATION_SPINS: usize = 24;

const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observable {
    /// Bond-averaged `⟨σz_i σz_j⟩`.
    ZzNearestNeighbour,
    /// `⟨H⟩`.
    Energy,
}

#[inline]
fn spin_of(state: usize, site: usize) -> i8 {
    if state >> site & 1 == 1 {
        -1
    } else {
        1
    }
}

fn check_ed_capacity(graph: &CouplingGraph) -> Result<()> {
    if graph.n_sites() > MAX_ED_SITES {
        return Err(Error::Capacity {
            what: "exact diagonalization sites",
            limit: MAX_ED_SITES,
            requested: graph.n_sites(),
        });
    }
    Ok(())
}

fn diagonal_energy(graph: &CouplingGraph, state: usize) -> f64 {
    graph
        .bonds()
        .iter()
        .map(|b| b.coupling * f64::from(spin_of(state, b.i) * spin_of(state, b.j)))
        .sum()
}

fn zz_average(graph: &CouplingGraph, state: usize) -> f64 {
    if graph.n_bonds() == 0 {
        return 0.0;
    }
    let total: i32 = graph
        .bonds()
        .iter()
        .map(|b| i32::from(spin_of(state, b.i) * spin_of(state, b.j)))
        .sum();
    f64::from(total) / graph.n_bonds() as f64
}

/// Dense `H = Σ J_ij σz_i σz_j − Γ Σ σx_i − Λ Σ_bonds σx_i σx_j`.
pub fn build_hamiltonian(graph: &CouplingGraph, gamma: f64, lambda: f64) -> Result<DMatrix<f64>> {
    check_ed_capacity(graph)?;
    let dim = 1usize << graph.n_sites();
    let mut h = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        h[(s, s)] = diagonal_energy(graph, s);
        if gamma != 0.0 {
            for i in 0..graph.n_sites() {
                h[(s ^ (1 << i), s)] -= gamma;
            }
        }
        if lambda != 0.0 {
            for b in graph.bonds() {
                h[(s ^ (1 << b.i) ^ (1 << b.j), s)] -= lambda;
            }
        }
    }
    Ok(h)
}

/// Eigenpairs of a real symmetric Hamiltonian, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        let dim = h.nrows();
        let eigen = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0).ok_or(Error::Diagonalization)?;
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
        let eigenvalues = DVector::from_iterator(dim, order.iter().map(|&k| eigen.eigenvalues[k]));
        let eigenvectors = DMatrix::from_fn(dim, dim, |r, c| eigen.eigenvectors[(r, order[c])]);

        let scale = h.amax().max(1.0);
        let residual = (&h * &eigenvectors - &eigenvectors * DMatrix::from_diagonal(&eigenvalues)).amax();
        if !(residual <= RESIDUAL_TOLERANCE * scale) {
            return Err(Error::Diagonalization);
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn of(graph: &CouplingGraph, gamma: f64, lambda: f64) -> Result<Self> {
        Self::new(build_hamiltonian(graph, gamma, lambda)?)
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    // Boltzmann factors shifted by the lowest eigenvalue, and their sum
    fn boltzmann(&self, beta: f64) -> (Vec<f64>, f64) {
        let e0 = self.ground_energy();
        let w: Vec<f64> = self.eigenvalues.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
        let z = w.iter().sum();
        (w, z)
    }

    /// Thermal probability of every basis state, `⟨s|e^{−βH}|s⟩ / Z`.
    pub fn diagonal_distribution(&self, beta: f64) -> Vec<f64> {
        let (w, z) = self.boltzmann(beta);
        let v = &self.eigenvectors;
        (0..v.nrows())
            .map(|s| v.row(s).iter().zip(&w).map(|(x, wk)| x * x * wk).sum::<f64>() / z)
            .collect()
    }

    pub fn thermal_expectation(&self, graph: &CouplingGraph, beta: f64, observable: Observable) -> f64 {
        match observable {
            Observable::Energy => {
                let (w, z) = self.boltzmann(beta);
                w.iter().zip(self.eigenvalues.iter()).map(|(wk, e)| wk * e).sum::<f64>() / z
            }
            Observable::ZzNearestNeighbour => self
                .diagonal_distribution(beta)
                .iter()
                .enumerate()
                .map(|(s, p)| p * zz_average(graph, s))
                .sum(),
        }
    }
}

pub fn ed_thermal_expectation(
    graph: &CouplingGraph,
    gamma: f64,
    lambda: f64,
    beta: f64,
    observable: Observable,
) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParams(format!("β must be positive, got {beta}")));
    }
    Ok(SpectralDecomposition::of(graph, gamma, lambda)?.thermal_expectation(graph, beta, observable))
}

pub fn ed_diagonal_distribution(graph: &CouplingGraph, gamma: f64, lambda: f64, beta: f64) -> Result<Vec<f64>> {
    Ok(SpectralDecomposition::of(graph, gamma, lambda)?.diagonal_distribution(beta))
}

/// Exact stationary distribution of the discretized worldline model, keyed by
/// [`WorldlineConfig::encode`]; σx labels are summed out.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldlineDistribution {
    pub n_sites: usize,
    pub n_slices: usize,
    pub probabilities: HashMap<u64, f64>,
}

impl WorldlineDistribution {
    pub fn probability(&self, code: u64) -> f64 {
        self.probabilities.get(&code).copied().unwrap_or(0.0)
    }

    /// Distribution of the spins on one time slice, indexed like ED basis states.
    pub fn slice_marginal(&self, slice: usize) -> Vec<f64> {
        let mut marginal = vec![0.0; 1 << self.n_sites];
        for (&code, &p) in &self.probabilities {
            let state = (0..self.n_sites).fold(0usize, |acc, i| {
                acc | ((code >> (i * self.n_slices + slice) & 1) as usize) << i
            });
            marginal[state] += p;
        }
        marginal
    }

    /// Total-variation distance to an empirical histogram of encoded configurations.
    pub fn total_variation(&self, counts: &HashMap<u64, u64>) -> f64 {
        let n: u64 = counts.values().sum();
        if n == 0 {
            return 1.0;
        }
        let mut tv: f64 = self
            .probabilities
            .iter()
            .map(|(code, p)| (p - counts.get(code).copied().unwrap_or(0) as f64 / n as f64).abs())
            .sum();
        tv += counts
            .iter()
            .filter(|(code, _)| !self.probabilities.contains_key(code))
            .map(|(_, &c)| c as f64 / n as f64)
            .sum::<f64>();
        tv / 2.0
    }
}

/// Weight of one plaquette given its four spins, summed over admissible labels.
fn marginal_plaquette_weight(
    bottom: (i8, i8),
    top: (i8, i8),
    stops: (f64, f64),
    j_tilde: f64,
    lambda: f64,
    delta: f64,
) -> f64 {
    let d = diagonal_weight(bottom.0 * bottom.1, j_tilde, delta);
    match (bottom.0 != top.0, bottom.1 != top.1) {
        (false, false) => d,
        (true, false) => stops.0 * d,
        (false, true) => stops.1 * d,
        (true, true) => stops.0 * stops.1 * d + delta * lambda,
    }
}

/// Enumerates every spacetime configuration of the checkerboard lattice.
pub fn enumerate_worldline_distribution(
    graph: &CouplingGraph,
    params: &TrotterParams,
    gamma: f64,
    lambda: f64,
) -> Result<WorldlineDistribution> {
    let n = graph.n_sites();
    let n_slices = params.n_slices();
    let n_spins = n * n_slices;
    if n_spins > MAX_ENUMERATION_SPINS {
        return Err(Error::Capacity {
            what: "worldline enumeration spacetime spins",
            limit: MAX_ENUMERATION_SPINS,
            requested: n_spins,
        });
    }
    let coloring = color_edges(graph);
    if coloring.n_colors != params.n_colors {
        return Err(Error::InvalidParams(format!(
            "graph needs {} colors, parameters assume {}",
            coloring.n_colors, params.n_colors
        )));
    }
    let layout = Layout::new(graph, &coloring, params.m_slices)?;
    let delta = params.delta;
    let stop: Vec<f64> = (0..n).map(|i| tf_stop_probability(gamma, delta, graph.degree(i))).collect();
    let plaquettes: Vec<_> = layout.plaquettes().collect();
    let spin = |code: u64, site: usize, slice: usize| -> i8 {
        if code >> (site * n_slices + slice) & 1 == 1 {
            -1
        } else {
            1
        }
    };

    let mut probabilities = HashMap::new();
    let mut z = 0.0;
    'configs: for code in 0..1u64 << n_spins {
        for site in 0..n {
            for l in 0..n_slices {
                if layout.segment_bond(site, l).is_none() && spin(code, site, l) != spin(code, site, (l + 1) % n_slices)
                {
                    continue 'configs;
                }
            }
        }
        let mut weight = 1.0;
        for p in &plaquettes {
            let (i, j) = layout.bond_sites(p.bond);
            let (l, up) = (p.base_slice, (p.base_slice + 1) % n_slices);
            weight *= marginal_plaquette_weight(
                (spin(code, i, l), spin(code, j, l)),
                (spin(code, i, up), spin(code, j, up)),
                (stop[i], stop[j]),
                -graph.bond(p.bond).coupling,
                lambda,
                delta,
            );
            if weight == 0.0 {
                continue 'configs;
            }
        }
        probabilities.insert(code, weight);
        z += weight;
    }
    for p in probabilities.values_mut() {
        *p /= z;
    }
    Ok(WorldlineDistribution {
        n_sites: n,
        n_slices,
        probabilities,
    })
}

/// Exact expectation in the discretized model at finite Trotter number,
/// averaged over all time slices, by multiplying plaquette transfer matrices.
pub fn trotter_expectation(
    graph: &CouplingGraph,
    params: &TrotterParams,
    fields: Fields,
    observable: Observable,
) -> Result<f64> {
    if observable != Observable::ZzNearestNeighbour {
        return Err(Error::InvalidParams(
            "finite-Trotter oracle supports only the zz correlation".into(),
        ));
    }
    check_ed_capacity(graph)?;
    let coloring = color_edges(graph);
    if coloring.n_colors != params.n_colors {
        return Err(Error::InvalidParams(format!(
            "graph needs {} colors, parameters assume {}",
            coloring.n_colors, params.n_colors
        )));
    }
    let n = graph.n_sites();
    let dim = 1usize << n;
    let delta = params.delta;
    let stop: Vec<f64> = (0..n)
        .map(|i| tf_stop_probability(fields.gamma, delta, graph.degree(i)))
        .collect();

    // one matrix per color: product of the commuting bond operators, maps bottom (column) to top (row)
    let layers: Vec<DMatrix<f64>> = coloring
        .classes()
        .iter()
        .map(|bonds| {
            let mut t = DMatrix::<f64>::identity(dim, dim);
            for &b in bonds {
                let bond = graph.bond(b);
                let (i, j) = (bond.i, bond.j);
                let jt = -bond.coupling;
                let mut op = DMatrix::<f64>::zeros(dim, dim);
                for s in 0..dim {
                    let w = |x: usize| x ^ s;
                    let d = diagonal_weight(spin_of(s, i) * spin_of(s, j), jt, delta);
                    op[(s, s)] += d;
                    op[(w(1 << i), s)] += stop[i] * d;
                    op[(w(1 << j), s)] += stop[j] * d;
                    op[(w(1 << i | 1 << j), s)] += stop[i] * stop[j] * d + delta * fields.lambda;
                }
                t = op * t;
            }
            t
        })
        .collect();

    let zz = DMatrix::from_diagonal(&DVector::from_iterator(dim, (0..dim).map(|s| zz_average(graph, s))));
    let k = layers.len();
    let mut total = 0.0;
    for start in 0..k {
        // one Trotter step beginning at color `start`
        let mut step = DMatrix::<f64>::identity(dim, dim);
        for c in 0..k {
            step = &layers[(start + c) % k] * step;
        }
        let mut full = DMatrix::<f64>::identity(dim, dim);
        let mut power = step;
        let mut m = params.m_slices;
        while m > 0 {
            if m & 1 == 1 {
                full = &full * &power;
            }
            m >>= 1;
            if m > 0 {
                power = &power * &power;
                let scale = power.amax();
                power /= scale;
                full /= full.amax();
            }
        }
        total += (&zz * &full).trace() / full.trace();
    }
    Ok(total / k as f64)
}

/// Exact worldline probability of a configuration under the enumeration oracle.
pub fn enumerated_probability(distribution: &WorldlineDistribution, config: &WorldlineConfig) -> f64 {
    config.encode().map_or(0.0, |code| distribution.probability(code))
}
