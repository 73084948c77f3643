//! Extended spacetime lattice: Trotter geometry, spin configurations with σx
//! labels, shaded-plaquette weights and diagonal observables.
//!
//! Slice `l` of the `M·K` imaginary-time slices belongs to color `l mod K`;
//! every bond of that color carries a shaded plaquette spanning `l → l+1`.
//! A segment `(i, l)` is the vertical link of site `i` between slices `l` and
//! `l+1` (periodic in `l`). Each segment lies in at most one shaded plaquette
//! because bonds sharing a site have distinct colors.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::tf_stop_probability;
use crate::error::{Error, Result};
use crate::graph::{CouplingGraph, EdgeColoring};

/// Transverse driver strengths at one instant of the schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fields {
    /// Single-spin transverse field Γ.
    pub gamma: f64,
    /// Two-spin transverse ferromagnetic coupling Λ.
    pub lambda: f64,
}

impl Fields {
    pub fn new(gamma: f64, lambda: f64) -> Self {
        Self { gamma, lambda }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterParams {
    pub beta: f64,
    /// Trotter number M.
    pub m_slices: usize,
    /// Number of commuting bond classes K.
    pub n_colors: usize,
    /// Imaginary-time step Δ = β/M.
    pub delta: f64,
}

impl TrotterParams {
    pub fn new(beta: f64, m_slices: usize, n_colors: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        if m_slices == 0 || n_colors == 0 {
            return Err(Error::InvalidParams("Trotter number and color count must be positive".into()));
        }
        if m_slices * n_colors < 2 {
            return Err(Error::InvalidParams(
                "the extended lattice needs at least two imaginary-time slices".into(),
            ));
        }
        Ok(Self {
            beta,
            m_slices,
            n_colors,
            delta: beta / m_slices as f64,
        })
    }

    /// Picks `M = round(β / step)` (at least 1).
    pub fn from_step(beta: f64, step: f64, n_colors: usize) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParams(format!("Trotter step must be positive, got {step}")));
        }
        let m = ((beta / step).round() as usize).max(1);
        Self::new(beta, m, n_colors)
    }

    /// Total number of imaginary-time slices `M·K`.
    pub fn n_slices(&self) -> usize {
        self.m_slices * self.n_colors
    }

    /// First-order plaquette weights stay positive only for `Δ·|J| < 1` and `Δ·Λ < 1`.
    pub fn check_weights(&self, max_abs_coupling: f64, lambda: f64) -> Result<()> {
        if self.delta * max_abs_coupling >= 1.0 {
            return Err(Error::InvalidParams(format!(
                "Δ·max|J| = {} must be below 1",
                self.delta * max_abs_coupling
            )));
        }
        if lambda < 0.0 {
            return Err(Error::InvalidParams(format!("Λ must be non-negative, got {lambda}")));
        }
        if self.delta * lambda >= 1.0 {
            return Err(Error::InvalidParams(format!("Δ·Λ = {} must be below 1", self.delta * lambda)));
        }
        Ok(())
    }
}

/// The four allowed shaded-plaquette states, plus parity-violating ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlaquetteType {
    /// Diagonal, aligned spins.
    T1,
    /// Diagonal, antialigned spins.
    T2,
    /// Exchange: top is the swapped (antialigned) bottom.
    T3,
    /// Double flip: top is the negated (aligned) bottom.
    T4,
    Invalid,
}

impl PlaquetteType {
    pub const VALID: [PlaquetteType; 4] = [Self::T1, Self::T2, Self::T3, Self::T4];

    pub fn index(self) -> Option<usize> {
        match self {
            Self::T1 => Some(0),
            Self::T2 => Some(1),
            Self::T3 => Some(2),
            Self::T4 => Some(3),
            Self::Invalid => None,
        }
    }

    pub fn is_diagonal(self) -> bool {
        matches!(self, Self::T1 | Self::T2)
    }

    pub fn is_off_diagonal(self) -> bool {
        matches!(self, Self::T3 | Self::T4)
    }
}

pub fn classify_plaquette(bottom: (i8, i8), top: (i8, i8)) -> PlaquetteType {
    let aligned = bottom.0 == bottom.1;
    if top == bottom {
        if aligned {
            PlaquetteType::T1
        } else {
            PlaquetteType::T2
        }
    } else if !aligned && top == (bottom.1, bottom.0) {
        PlaquetteType::T3
    } else if aligned && top == (-bottom.0, -bottom.1) {
        PlaquetteType::T4
    } else {
        PlaquetteType::Invalid
    }
}

/// Diagonal weight `1 + Δ·J̃·s_i·s_j` with `J̃ = -J_b`.
#[inline]
pub(crate) fn diagonal_weight(product: i8, j_tilde: f64, delta: f64) -> f64 {
    1.0 + delta * j_tilde * f64::from(product)
}

/// First-order matrix element of `exp(-Δ H_b)` for `H_b = J_b σzσz - Λ σxσx`,
/// written in terms of `j_tilde = -J_b`.
pub fn plaquette_weight(ty: PlaquetteType, j_tilde: f64, lambda: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) || delta * j_tilde.abs() >= 1.0 || lambda < 0.0 || delta * lambda >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "plaquette weights need Δ > 0, Δ·|J̃| < 1 and 0 <= Δ·Λ < 1 (Δ={delta}, J̃={j_tilde}, Λ={lambda})"
        )));
    }
    Ok(match ty {
        PlaquetteType::T1 => 1.0 + delta * j_tilde,
        PlaquetteType::T2 => 1.0 - delta * j_tilde,
        PlaquetteType::T3 | PlaquetteType::T4 => delta * lambda,
        PlaquetteType::Invalid => 0.0,
    })
}

/// A shaded plaquette of bond `bond` at Trotter step `step`, occupying slices
/// `base_slice` and `base_slice + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShadedPlaquette {
    pub bond: usize,
    pub step: usize,
    pub base_slice: usize,
}

/// Shaded-plaquette geometry of the extended lattice.
#[derive(Clone, Debug)]
pub struct Layout {
    n_sites: usize,
    m_steps: usize,
    n_colors: usize,
    bond_sites: Vec<(usize, usize)>,
    bond_color: Vec<usize>,
    // segment_bond[site * K + color]
    segment_bond: Vec<Option<usize>>,
}

impl Layout {
    pub fn new(graph: &CouplingGraph, coloring: &EdgeColoring, m_steps: usize) -> Result<Self> {
        if !coloring.is_proper(graph) {
            return Err(Error::InvalidGraph("edge coloring is not proper for this graph".into()));
        }
        let k = coloring.n_colors;
        if m_steps == 0 || m_steps * k < 2 {
            return Err(Error::InvalidParams(
                "the extended lattice needs at least two imaginary-time slices".into(),
            ));
        }
        let mut segment_bond = vec![None; graph.n_sites() * k];
        for (b, bond) in graph.bonds().iter().enumerate() {
            let c = coloring.color_of_bond[b];
            segment_bond[bond.i * k + c] = Some(b);
            segment_bond[bond.j * k + c] = Some(b);
        }
        Ok(Self {
            n_sites: graph.n_sites(),
            m_steps,
            n_colors: k,
            bond_sites: graph.bonds().iter().map(|b| (b.i, b.j)).collect(),
            bond_color: coloring.color_of_bond.clone(),
            segment_bond,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn m_steps(&self) -> usize {
        self.m_steps
    }

    pub fn n_colors(&self) -> usize {
        self.n_colors
    }

    pub fn n_slices(&self) -> usize {
        self.m_steps * self.n_colors
    }

    pub fn n_bonds(&self) -> usize {
        self.bond_sites.len()
    }

    pub fn bond_sites(&self, bond: usize) -> (usize, usize) {
        self.bond_sites[bond]
    }

    pub fn bond_color(&self, bond: usize) -> usize {
        self.bond_color[bond]
    }

    /// Bond whose shaded plaquette contains segment `(site, slice → slice+1)`.
    #[inline]
    pub fn segment_bond(&self, site: usize, slice: usize) -> Option<usize> {
        self.segment_bond[site * self.n_colors + slice % self.n_colors]
    }

    #[inline]
    pub fn base_slice(&self, bond: usize, step: usize) -> usize {
        step * self.n_colors + self.bond_color[bond]
    }

    pub fn n_plaquettes(&self) -> usize {
        self.bond_sites.len() * self.m_steps
    }

    pub fn plaquettes(&self) -> impl Iterator<Item = ShadedPlaquette> + '_ {
        (0..self.n_bonds()).flat_map(move |bond| {
            (0..self.m_steps).map(move |step| ShadedPlaquette {
                bond,
                step,
                base_slice: self.base_slice(bond, step),
            })
        })
    }
}

/// ±1 spins on the `N × M·K` lattice plus σx labels on vertical segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorldlineConfig {
    n_sites: usize,
    n_slices: usize,
    // index site * n_slices + slice
    spins: Vec<i8>,
    // labels[site * n_slices + l] marks a σx operator on segment (site, l → l+1)
    labels: Vec<bool>,
}

impl WorldlineConfig {
    /// Worldlines constant in imaginary time with the given per-site spins.
    pub fn constant(site_spins: &[i8], n_slices: usize) -> Self {
        let spins = site_spins
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, n_slices))
            .collect();
        Self {
            n_sites: site_spins.len(),
            n_slices,
            spins,
            labels: vec![false; site_spins.len() * n_slices],
        }
    }

    /// Constant worldlines with independent uniformly random spins per site.
    pub fn random_constant(n_sites: usize, n_slices: usize, rng: &mut impl Rng) -> Self {
        let site_spins: Vec<i8> = (0..n_sites).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self::constant(&site_spins, n_slices)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    #[inline]
    pub fn spin(&self, site: usize, slice: usize) -> i8 {
        self.spins[site * self.n_slices + slice]
    }

    pub fn set_spin(&mut self, site: usize, slice: usize, value: i8) {
        self.spins[site * self.n_slices + slice] = value;
    }

    #[inline]
    pub fn label(&self, site: usize, slice: usize) -> bool {
        self.labels[site * self.n_slices + slice]
    }

    pub fn set_label(&mut self, site: usize, slice: usize, value: bool) {
        self.labels[site * self.n_slices + slice] = value;
    }

    pub fn n_labels(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    #[inline]
    pub(crate) fn spins_mut(&mut self) -> &mut [i8] {
        &mut self.spins
    }

    #[inline]
    pub(crate) fn raw_spins(&self) -> &[i8] {
        &self.spins
    }

    #[inline]
    pub(crate) fn labels_mut(&mut self) -> &mut [bool] {
        &mut self.labels
    }

    /// Classical configuration on one time slice.
    pub fn slice(&self, slice: usize) -> Vec<i8> {
        (0..self.n_sites).map(|i| self.spin(i, slice)).collect()
    }

    /// Packs spins into an integer, bit `site * n_slices + slice` set for -1.
    pub fn encode(&self) -> Option<u64> {
        if self.spins.len() > 64 {
            return None;
        }
        Some(
            self.spins
                .iter()
                .enumerate()
                .fold(0u64, |acc, (k, &s)| if s < 0 { acc | (1 << k) } else { acc }),
        )
    }

    /// Checks that every shaded plaquette is in an allowed state given its
    /// labels, unshaded segments are unbroken and labels sit only on kinks.
    pub fn check_valid(&self, layout: &Layout) -> Result<(), String> {
        if self.n_sites != layout.n_sites() || self.n_slices != layout.n_slices() {
            return Err("configuration shape does not match the layout".into());
        }
        let n = self.n_slices;
        for site in 0..self.n_sites {
            for l in 0..n {
                let up = (l + 1) % n;
                let kink = self.spin(site, l) != self.spin(site, up);
                let label = self.label(site, l);
                if label && !kink {
                    return Err(format!("label on unbroken segment ({site}, {l})"));
                }
                if layout.segment_bond(site, l).is_none() && (kink || label) {
                    return Err(format!("worldline broken outside a shaded plaquette at ({site}, {l})"));
                }
            }
        }
        for p in layout.plaquettes() {
            let (i, j) = layout.bond_sites(p.bond);
            let l = p.base_slice;
            let up = (l + 1) % n;
            let (li, lj) = (self.label(i, l), self.label(j, l));
            if !li && !lj {
                let ty = classify_plaquette((self.spin(i, l), self.spin(j, l)), (self.spin(i, up), self.spin(j, up)));
                if ty == PlaquetteType::Invalid {
                    return Err(format!("plaquette of bond {} at slice {l} is invalid", p.bond));
                }
            } else {
                for (site, labelled) in [(i, li), (j, lj)] {
                    if !labelled && self.spin(site, l) != self.spin(site, up) {
                        return Err(format!(
                            "labelled plaquette of bond {} at slice {l} has an unlabelled kink",
                            p.bond
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Debug dump: header `N L`, then one row of ±1 per time slice.
    pub fn dump(&self) -> String {
        let mut out = format!("{} {}\n", self.n_sites, self.n_slices);
        for l in 0..self.n_slices {
            let row: Vec<String> = (0..self.n_sites).map(|i| format!("{:+}", self.spin(i, l))).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("empty dump")?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| format!("bad header {header:?}")))
            .collect::<Result<_, _>>()?;
        let [n_sites, n_slices] = dims[..] else {
            return Err(format!("bad header {header:?}"));
        };
        let mut config = Self::constant(&vec![1; n_sites], n_slices);
        for l in 0..n_slices {
            let row = lines.next().ok_or(format!("missing slice {l}"))?;
            let values: Vec<i8> = row
                .split_whitespace()
                .map(|t| match t {
                    "+1" | "1" => Ok(1),
                    "-1" => Ok(-1),
                    _ => Err(format!("bad spin {t:?} on slice {l}")),
                })
                .collect::<Result<_, _>>()?;
            if values.len() != n_sites {
                return Err(format!("slice {l} has {} spins, expected {n_sites}", values.len()));
            }
            for (i, s) in values.into_iter().enumerate() {
                config.set_spin(i, l, s);
            }
        }
        Ok(config)
    }
}

/// Unnormalized weight of a configuration, labels included.
///
/// Unlabelled plaquettes carry their first-order weight. A plaquette with σx
/// labels carries `Π sinh(ΔΓ/K_i)` over its labels times the diagonal weight
/// of its bottom spins; labelled segments must be kinks and the others
/// unbroken.
pub fn config_weight(
    config: &WorldlineConfig,
    graph: &CouplingGraph,
    layout: &Layout,
    params: &TrotterParams,
    fields: Fields,
) -> f64 {
    if config.check_valid(layout).is_err() {
        return 0.0;
    }
    let n = config.n_slices();
    let delta = params.delta;
    let stop: Vec<f64> = (0..graph.n_sites())
        .map(|i| tf_stop_probability(fields.gamma, delta, graph.degree(i)))
        .collect();
    let mut weight = 1.0;
    for p in layout.plaquettes() {
        let (i, j) = layout.bond_sites(p.bond);
        let j_tilde = -graph.bond(p.bond).coupling;
        let l = p.base_slice;
        let up = (l + 1) % n;
        let bottom = (config.spin(i, l), config.spin(j, l));
        let (li, lj) = (config.label(i, l), config.label(j, l));
        weight *= if li || lj {
            let mut w = diagonal_weight(bottom.0 * bottom.1, j_tilde, delta);
            if li {
                w *= stop[i];
            }
            if lj {
                w *= stop[j];
            }
            w
        } else {
            let ty = classify_plaquette(bottom, (config.spin(i, up), config.spin(j, up)));
            match ty {
                PlaquetteType::T1 | PlaquetteType::T2 => diagonal_weight(bottom.0 * bottom.1, j_tilde, delta),
                PlaquetteType::T3 | PlaquetteType::T4 => delta * fields.lambda,
                PlaquetteType::Invalid => 0.0,
            }
        };
    }
    weight
}

/// Nearest-neighbour `⟨σz σz⟩` averaged over bonds and all time slices.
pub fn measure_zz(config: &WorldlineConfig, graph: &CouplingGraph) -> f64 {
    if graph.n_bonds() == 0 {
        return 0.0;
    }
    let n = config.n_slices();
    let spins = config.raw_spins();
    let total: i64 = graph
        .bonds()
        .iter()
        .map(|b| {
            let (wi, wj) = (&spins[b.i * n..(b.i + 1) * n], &spins[b.j * n..(b.j + 1) * n]);
            wi.iter().zip(wj).map(|(&a, &c)| i64::from(a * c)).sum::<i64>()
        })
        .sum();
    total as f64 / (graph.n_bonds() * n) as f64
}

/// Classical energy `Σ J_ij s_i s_j` of every time slice.
pub fn measure_slice_energies(config: &WorldlineConfig, graph: &CouplingGraph) -> Vec<f64> {
    let n = config.n_slices();
    let spins = config.raw_spins();
    let mut energies = vec![0.0; n];
    for b in graph.bonds() {
        let (wi, wj) = (&spins[b.i * n..(b.i + 1) * n], &spins[b.j * n..(b.j + 1) * n]);
        for (e, (&a, &c)) in energies.iter_mut().zip(wi.iter().zip(wj)) {
            *e += b.coupling * f64::from(a * c);
        }
    }
    energies
}
