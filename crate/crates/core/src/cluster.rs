//! Loop-cluster updates for the two-spin transverse driver with a transverse
//! field.
//!
//! A cluster is grown from a random spin on a shaded plaquette of a randomly
//! chosen bond subset `B_m`. Every plaquette the cluster touches receives one
//! local decision, sampled when it is first reached:
//!
//! * unlabelled plaquettes of bonds in `B_m` follow the breakup table, after
//!   a σx stop has been tried on each of their diagonal (T1/T2) segments;
//! * a stop cuts the vertical segment, and flipping the cluster leaves a σx
//!   label on it wherever the worldline ends up broken;
//! * plaquettes outside `B_m`, and plaquettes already carrying a label, are
//!   crossed vertically, with existing labels acting as cuts.
//!
//! The loop rules balance the plaquettes governed by breakups. Every other
//! diagonal plaquette whose bottom pair changes alignment enters the
//! Metropolis ratio of the flip.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BondSubsets, CouplingGraph, EdgeColoring};
use crate::worldline::{
    classify_plaquette, diagonal_weight, Fields, Layout, PlaquetteType, TrotterParams, WorldlineConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `Λ ≥ |J̃|`: all freezing weights vanish.
    NoFreezing,
    /// `Λ < |J̃|`: the heavy diagonal type keeps a freezing weight.
    Freezing,
}

/// Symmetric transition weights `w_ij` between the four plaquette types of one bond.
#[derive(Clone, Debug, PartialEq)]
pub struct BreakupTable {
    weights: [[f64; 4]; 4],
    totals: [f64; 4],
    regime: Regime,
}

impl BreakupTable {
    pub fn weight(&self, from: PlaquetteType, to: PlaquetteType) -> f64 {
        match (from.index(), to.index()) {
            (Some(a), Some(b)) => self.weights[a][b],
            _ => 0.0,
        }
    }

    /// `W(i) = Σ_j w_ij`.
    pub fn total(&self, ty: PlaquetteType) -> f64 {
        ty.index().map_or(0.0, |a| self.totals[a])
    }

    /// `p(i → j) = w_ij / W(i)`.
    pub fn probability(&self, from: PlaquetteType, to: PlaquetteType) -> f64 {
        let total = self.total(from);
        if total > 0.0 {
            self.weight(from, to) / total
        } else {
            0.0
        }
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn weights(&self) -> &[[f64; 4]; 4] {
        &self.weights
    }

    fn sample_target<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let row = &self.weights[from];
        let mut u = rng.random::<f64>() * self.totals[from];
        for (to, &w) in row.iter().enumerate() {
            if u < w {
                return to;
            }
            u -= w;
        }
        // rounding left u marginally above the last bin
        row.iter().rposition(|&w| w > 0.0).unwrap_or(from)
    }
}

/// Builds the breakup weights for one bond with `J̃ = -J_b`.
///
/// With `a = Δ|J̃|` and `b = ΔΛ`, the heavy diagonal type `h` (T1 for
/// `J̃ ≥ 0`, T2 otherwise) gets `w_h,light = 1 - a` and
/// * for `b ≥ a`: `w_h,off = a` to both off-diagonal types, `w_34 = b - a`;
/// * for `b < a`: `w_h,off = b`, `w_hh = 2(a - b)`.
pub fn breakup_table(j_tilde: f64, lambda: f64, delta: f64) -> Result<BreakupTable> {
    if !(delta > 0.0) || !j_tilde.is_finite() || delta * j_tilde.abs() >= 1.0 || lambda < 0.0 || delta * lambda >= 1.0
    {
        return Err(Error::InvalidParams(format!(
            "breakup weights need Δ > 0, Δ·|J̃| < 1 and 0 <= Δ·Λ < 1 (Δ={delta}, J̃={j_tilde}, Λ={lambda})"
        )));
    }
    let a = delta * j_tilde.abs();
    let b = delta * lambda;
    // T2 and T4/T3 take the roles of T1 and T3/T4 for antiferromagnetic bonds
    let (heavy, light, off1, off2) = if j_tilde >= 0.0 { (0, 1, 2, 3) } else { (1, 0, 3, 2) };
    let mut weights = [[0.0; 4]; 4];
    let mut set = |p: usize, q: usize, v: f64| {
        weights[p][q] = v;
        weights[q][p] = v;
    };
    set(heavy, light, 1.0 - a);
    let regime = if b >= a {
        set(heavy, off1, a);
        set(heavy, off2, a);
        set(off1, off2, b - a);
        Regime::NoFreezing
    } else {
        set(heavy, off1, b);
        set(heavy, off2, b);
        set(heavy, heavy, 2.0 * (a - b));
        Regime::Freezing
    };
    let totals = weights.map(|row| row.iter().sum());
    Ok(BreakupTable {
        weights,
        totals,
        regime,
    })
}

/// How a plaquette's four spins are tied together.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Breakup {
    /// `(i,l)-(i,l+1)` and `(j,l)-(j,l+1)`: T1↔T2, T3↔T4.
    Vertical,
    /// `(i,l)-(j,l+1)` and `(j,l)-(i,l+1)`: T1↔T3, T2↔T4.
    Diagonal,
    /// `(i,l)-(j,l)` and `(i,l+1)-(j,l+1)`: T1↔T4, T2↔T3.
    Horizontal,
    /// All four spins bound together.
    Freeze,
}

impl Breakup {
    /// Group id of each corner, ordered `(i,l), (j,l), (i,l+1), (j,l+1)`.
    pub fn groups(self) -> [u8; 4] {
        match self {
            Breakup::Vertical => [0, 1, 0, 1],
            Breakup::Diagonal => [0, 1, 1, 0],
            Breakup::Horizontal => [0, 0, 1, 1],
            Breakup::Freeze => [0, 0, 0, 0],
        }
    }

    /// The graph that turns type `from` into type `to` when one of its pairs flips.
    pub fn for_transition(from: PlaquetteType, to: PlaquetteType) -> Option<Breakup> {
        let (a, b) = (from.index()?, to.index()?);
        if a == b {
            return Some(Breakup::Freeze);
        }
        Some(match (a.min(b), a.max(b)) {
            (0, 1) | (2, 3) => Breakup::Vertical,
            (0, 2) | (1, 3) => Breakup::Diagonal,
            _ => Breakup::Horizontal,
        })
    }
}

/// Samples the breakup of a plaquette of type `entry` with probability `w_ij / W(i)`.
/// Returns `None` for an invalid plaquette.
pub fn breakup_to_graph<R: Rng + ?Sized>(table: &BreakupTable, entry: PlaquetteType, rng: &mut R) -> Option<Breakup> {
    let from = entry.index()?;
    let to = table.sample_target(from, rng);
    Breakup::for_transition(entry, PlaquetteType::VALID[to])
}

/// Largest representable probability below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Probability `sinh(ΔΓ/K_i)` of stopping a cluster on a diagonal plaquette
/// segment of a site with `degree` neighbours (isolated sites count as 1).
pub fn tf_stop_probability(gamma: f64, delta: f64, degree: usize) -> f64 {
    if !(gamma > 0.0) {
        return 0.0;
    }
    let k = degree.max(1) as f64;
    (delta * gamma / k).sinh().clamp(0.0, BELOW_ONE)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateMode {
    /// Unrestricted loop updates over all bonds.
    Global,
    /// Clusters confined to one bond subset per update.
    SemiLocal(BondSubsets),
}

impl UpdateMode {
    pub fn name(&self) -> &'static str {
        match self {
            UpdateMode::Global => "global",
            UpdateMode::SemiLocal(_) => "semilocal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rule {
    /// Decided by the breakup table.
    Breakup(Breakup),
    /// Crossed vertically on a diagonal plaquette; cut segments may stop.
    DiagonalPass { cut: [bool; 2] },
    /// Crossed vertically on an off-diagonal plaquette outside the subset.
    OffDiagonalPass,
}

#[derive(Clone, Copy, Debug)]
struct Decision {
    groups: [u8; 4],
    rule: Rule,
}

impl Default for Decision {
    fn default() -> Self {
        Self {
            groups: Breakup::Vertical.groups(),
            rule: Rule::OffDiagonalPass,
        }
    }
}

/// A grown cluster awaiting its flip decision.
#[derive(Debug, Default)]
pub struct Cluster {
    generation: u32,
    subset: usize,
    origin: usize,
    n_slices: usize,
    // spacetime indices site * n_slices + slice
    members: Vec<usize>,
    // plaquette ids bond * M + step
    plaquettes: Vec<usize>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Index of the bond subset the cluster was grown in.
    pub fn subset(&self) -> usize {
        self.subset
    }

    /// `(site, slice)` of the seed spin.
    pub fn origin(&self) -> (usize, usize) {
        (self.origin / self.n_slices, self.origin % self.n_slices)
    }

    /// `(site, slice)` of every member.
    pub fn members(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.members.iter().map(|&k| (k / self.n_slices, k % self.n_slices))
    }

    pub fn n_plaquettes_touched(&self) -> usize {
        self.plaquettes.len()
    }
}

/// Counters from one or more updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub updates: u64,
    pub accepted: u64,
    pub cluster_spins: u64,
}

impl SweepStats {
    /// Mean cluster size `n̄`.
    pub fn mean_cluster_size(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.cluster_spins as f64 / self.updates as f64
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.accepted as f64 / self.updates as f64
        }
    }

    pub fn merge(&mut self, other: SweepStats) {
        self.updates += other.updates;
        self.accepted += other.accepted;
        self.cluster_spins += other.cluster_spins;
    }
}

/// Markov-chain kernel for one problem graph at fixed Trotter parameters.
#[derive(Clone, Debug)]
pub struct LoopUpdater {
    layout: Layout,
    params: TrotterParams,
    j_tilde: Vec<f64>,
    degree: Vec<usize>,
    max_abs_coupling: f64,
    fields: Fields,
    tables: Vec<BreakupTable>,
    stop: Vec<f64>,
    subsets: Vec<Vec<usize>>,
    global: bool,
    scratch: Scratch,
}

#[derive(Clone, Debug, Default)]
struct Scratch {
    generation: u32,
    member_mark: Vec<u32>,
    plaquette_mark: Vec<u32>,
    subset_mark: Vec<u32>,
    decisions: Vec<Decision>,
    stack: Vec<usize>,
    members: Vec<usize>,
    plaquettes: Vec<usize>,
}

impl LoopUpdater {
    pub fn new(
        graph: &CouplingGraph,
        coloring: &EdgeColoring,
        params: TrotterParams,
        mode: &UpdateMode,
        fields: Fields,
    ) -> Result<Self> {
        if params.n_colors != coloring.n_colors {
            return Err(Error::InvalidParams(format!(
                "Trotter parameters assume {} colors, coloring has {}",
                params.n_colors, coloring.n_colors
            )));
        }
        if graph.n_bonds() == 0 {
            return Err(Error::InvalidGraph("cluster updates need at least one bond".into()));
        }
        let layout = Layout::new(graph, coloring, params.m_slices)?;
        let (subsets, global) = match mode {
            UpdateMode::Global => (vec![(0..graph.n_bonds()).collect()], true),
            UpdateMode::SemiLocal(s) => {
                s.validate(graph)?;
                (s.subsets.clone(), false)
            }
        };
        let n_spins = graph.n_sites() * params.n_slices();
        let scratch = Scratch {
            generation: 0,
            member_mark: vec![0; n_spins],
            plaquette_mark: vec![0; layout.n_plaquettes()],
            subset_mark: vec![0; graph.n_bonds()],
            decisions: vec![Decision::default(); layout.n_plaquettes()],
            ..Scratch::default()
        };
        let mut updater = Self {
            layout,
            params,
            j_tilde: graph.bonds().iter().map(|b| -b.coupling).collect(),
            degree: (0..graph.n_sites()).map(|i| graph.degree(i)).collect(),
            max_abs_coupling: graph.max_abs_coupling(),
            fields,
            tables: Vec::new(),
            stop: Vec::new(),
            subsets,
            global,
            scratch,
        };
        updater.set_fields(fields)?;
        Ok(updater)
    }

    /// Recomputes breakup tables and stop probabilities for new driver strengths.
    pub fn set_fields(&mut self, fields: Fields) -> Result<()> {
        if fields.gamma < 0.0 || !fields.gamma.is_finite() {
            return Err(Error::InvalidParams(format!("Γ must be non-negative, got {}", fields.gamma)));
        }
        self.params.check_weights(self.max_abs_coupling, fields.lambda)?;
        let delta = self.params.delta;
        self.tables = self
            .j_tilde
            .iter()
            .map(|&jt| breakup_table(jt, fields.lambda, delta))
            .collect::<Result<_>>()?;
        self.stop = self
            .degree
            .iter()
            .map(|&k| tf_stop_probability(fields.gamma, delta, k))
            .collect();
        self.fields = fields;
        Ok(())
    }

    /// Replaces every breakup table by one built for `scale · J̃`, leaving
    /// plaquette weights untouched. The chain then samples a wrong
    /// distribution; used as a negative control for validation runs.
    pub fn distort_tables(&mut self, scale: f64) -> Result<()> {
        let delta = self.params.delta;
        let limit = (1.0 - 1e-9) / delta;
        self.tables = self
            .j_tilde
            .iter()
            .map(|&jt| breakup_table((scale * jt).clamp(-limit, limit), self.fields.lambda, delta))
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn fields(&self) -> Fields {
        self.fields
    }

    pub fn params(&self) -> &TrotterParams {
        &self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn table(&self, bond: usize) -> &BreakupTable {
        &self.tables[bond]
    }

    pub fn n_subsets(&self) -> usize {
        self.subsets.len()
    }

    /// Constant-in-time worldlines with random spins.
    pub fn initial_config<R: Rng + ?Sized>(&self, rng: &mut R) -> WorldlineConfig {
        let site_spins: Vec<i8> = (0..self.layout.n_sites())
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        WorldlineConfig::constant(&site_spins, self.layout.n_slices())
    }

    fn next_generation(&mut self) -> u32 {
        let s = &mut self.scratch;
        if s.generation == u32::MAX {
            s.member_mark.fill(0);
            s.plaquette_mark.fill(0);
            s.subset_mark.fill(0);
            s.generation = 0;
        }
        s.generation += 1;
        s.generation
    }

    /// Grows one cluster on `config` without modifying it.
    pub fn grow_cluster<R: Rng + ?Sized>(&mut self, config: &WorldlineConfig, rng: &mut R) -> Cluster {
        let generation = self.next_generation();
        let n_slices = self.layout.n_slices();
        let m_steps = self.layout.m_steps();

        let subset = if self.subsets.len() == 1 {
            0
        } else {
            rng.random_range(0..self.subsets.len())
        };
        let bonds = &self.subsets[subset];
        if !self.global {
            for &b in bonds {
                self.scratch.subset_mark[b] = generation;
            }
        }
        let bond = bonds[rng.random_range(0..bonds.len())];
        let step = rng.random_range(0..m_steps);
        let (i, j) = self.layout.bond_sites(bond);
        let site = if rng.random::<bool>() { i } else { j };
        let origin = site * n_slices + self.layout.base_slice(bond, step);

        let mut members = std::mem::take(&mut self.scratch.members);
        let mut plaquettes = std::mem::take(&mut self.scratch.plaquettes);
        let mut stack = std::mem::take(&mut self.scratch.stack);
        members.clear();
        plaquettes.clear();
        stack.clear();

        self.scratch.member_mark[origin] = generation;
        members.push(origin);
        stack.push(origin);

        while let Some(spin) = stack.pop() {
            let (site, slice) = (spin / n_slices, spin % n_slices);
            let below = (slice + n_slices - 1) % n_slices;
            for (segment_slice, upper) in [(slice, false), (below, true)] {
                let mut partners = [usize::MAX; 3];
                match self.layout.segment_bond(site, segment_slice) {
                    None => {
                        // unshaded segment: the worldline cannot break here
                        partners[0] = if upper {
                            site * n_slices + below
                        } else {
                            site * n_slices + (slice + 1) % n_slices
                        };
                    }
                    Some(b) => {
                        let (bi, _) = self.layout.bond_sites(b);
                        let corner = usize::from(site != bi) + if upper { 2 } else { 0 };
                        let pid = b * m_steps + segment_slice / self.layout.n_colors();
                        if self.scratch.plaquette_mark[pid] != generation {
                            let decision = self.decide(config, b, segment_slice, generation, rng);
                            self.scratch.plaquette_mark[pid] = generation;
                            self.scratch.decisions[pid] = decision;
                            plaquettes.push(pid);
                        }
                        let groups = self.scratch.decisions[pid].groups;
                        let mut n = 0;
                        for c in 0..4 {
                            if c != corner && groups[c] == groups[corner] {
                                partners[n] = self.corner_index(b, segment_slice, c);
                                n += 1;
                            }
                        }
                    }
                }
                for &p in partners.iter().take_while(|&&p| p != usize::MAX) {
                    if self.scratch.member_mark[p] != generation {
                        self.scratch.member_mark[p] = generation;
                        members.push(p);
                        stack.push(p);
                    }
                }
            }
        }
        self.scratch.stack = stack;
        Cluster {
            generation,
            subset,
            origin,
            n_slices,
            members,
            plaquettes,
        }
    }

    #[inline]
    fn corner_index(&self, bond: usize, base: usize, corner: usize) -> usize {
        let n = self.layout.n_slices();
        let (i, j) = self.layout.bond_sites(bond);
        let site = if corner.is_multiple_of(2) { i } else { j };
        let slice = if corner < 2 { base } else { (base + 1) % n };
        site * n + slice
    }

    fn decide<R: Rng + ?Sized>(
        &self,
        config: &WorldlineConfig,
        bond: usize,
        base: usize,
        generation: u32,
        rng: &mut R,
    ) -> Decision {
        let n = self.layout.n_slices();
        let up = (base + 1) % n;
        let (i, j) = self.layout.bond_sites(bond);
        let in_subset = self.global || self.scratch.subset_mark[bond] == generation;
        let mut stop = |site: usize| {
            let p = self.stop[site];
            p > 0.0 && rng.random::<f64>() < p
        };
        let (label_i, label_j) = (config.label(i, base), config.label(j, base));
        if label_i || label_j {
            let cut = [label_i || stop(i), label_j || stop(j)];
            return pass(cut);
        }
        let ty = classify_plaquette((config.spin(i, base), config.spin(j, base)), (config.spin(i, up), config.spin(j, up)));
        match ty {
            PlaquetteType::T3 | PlaquetteType::T4 => {
                if in_subset {
                    self.breakup(bond, ty, rng)
                } else {
                    Decision {
                        groups: Breakup::Vertical.groups(),
                        rule: Rule::OffDiagonalPass,
                    }
                }
            }
            PlaquetteType::T1 | PlaquetteType::T2 => {
                let cut = [stop(i), stop(j)];
                if in_subset && cut == [false, false] {
                    self.breakup(bond, ty, rng)
                } else {
                    pass(cut)
                }
            }
            PlaquetteType::Invalid => {
                panic!("cluster reached an invalid plaquette of bond {bond} at slice {base}")
            }
        }
    }

    fn breakup<R: Rng + ?Sized>(&self, bond: usize, ty: PlaquetteType, rng: &mut R) -> Decision {
        let graph = breakup_to_graph(&self.tables[bond], ty, rng).expect("valid plaquette type");
        Decision {
            groups: graph.groups(),
            rule: Rule::Breakup(graph),
        }
    }

    /// Metropolis ratio of the flip: product over diagonal plaquettes crossed
    /// without a breakup of the change in their bottom diagonal weight.
    fn flip_ratio(&self, config: &WorldlineConfig, cluster: &Cluster) -> f64 {
        let n = self.layout.n_slices();
        let m_steps = self.layout.m_steps();
        let marks = &self.scratch.member_mark;
        let delta = self.params.delta;
        let mut ratio = 1.0;
        for &pid in &cluster.plaquettes {
            if !matches!(self.scratch.decisions[pid].rule, Rule::DiagonalPass { .. }) {
                continue;
            }
            let bond = pid / m_steps;
            let base = self.layout.base_slice(bond, pid % m_steps);
            let (i, j) = self.layout.bond_sites(bond);
            let flip_i = marks[i * n + base] == cluster.generation;
            let flip_j = marks[j * n + base] == cluster.generation;
            if flip_i != flip_j {
                let before = config.spin(i, base) * config.spin(j, base);
                let jt = self.j_tilde[bond];
                ratio *= diagonal_weight(-before, jt, delta) / diagonal_weight(before, jt, delta);
            }
        }
        ratio
    }

    /// Accepts the cluster with probability `min(1, R)` and applies it.
    /// On rejection `config` is left untouched.
    pub fn flip_cluster<R: Rng + ?Sized>(&mut self, config: &mut WorldlineConfig, cluster: &Cluster, rng: &mut R) -> bool {
        assert_eq!(
            cluster.generation, self.scratch.generation,
            "cluster must be flipped before growing another"
        );
        let ratio = self.flip_ratio(config, cluster);
        if ratio < 1.0 && rng.random::<f64>() >= ratio {
            return false;
        }
        let spins = config.spins_mut();
        for &k in &cluster.members {
            spins[k] = -spins[k];
        }
        // σx labels remain only on cut segments that are now broken
        let n = self.layout.n_slices();
        let m_steps = self.layout.m_steps();
        for &pid in &cluster.plaquettes {
            let Rule::DiagonalPass { cut } = self.scratch.decisions[pid].rule else {
                continue;
            };
            let bond = pid / m_steps;
            let base = self.layout.base_slice(bond, pid % m_steps);
            let (i, j) = self.layout.bond_sites(bond);
            for (site, is_cut) in [(i, cut[0]), (j, cut[1])] {
                if is_cut {
                    let broken = config.spin(site, base) != config.spin(site, (base + 1) % n);
                    config.labels_mut()[site * n + base] = broken;
                }
            }
        }
        true
    }

    /// Returns a cluster's buffers for reuse.
    pub fn recycle(&mut self, cluster: Cluster) {
        self.scratch.members = cluster.members;
        self.scratch.plaquettes = cluster.plaquettes;
    }

    /// One grow-and-flip attempt; returns `(cluster size, accepted)`.
    pub fn update<R: Rng + ?Sized>(&mut self, config: &mut WorldlineConfig, rng: &mut R) -> (usize, bool) {
        let cluster = self.grow_cluster(config, rng);
        let accepted = self.flip_cluster(config, &cluster, rng);
        let size = cluster.size();
        self.recycle(cluster);
        (size, accepted)
    }

    /// Runs `n` updates.
    pub fn run_updates<R: Rng + ?Sized>(&mut self, config: &mut WorldlineConfig, n: u64, rng: &mut R) -> SweepStats {
        let mut stats = SweepStats::default();
        for _ in 0..n {
            let (size, accepted) = self.update(config, rng);
            stats.updates += 1;
            stats.accepted += u64::from(accepted);
            stats.cluster_spins += size as u64;
        }
        stats
    }

    /// One sweep: `N` updates.
    pub fn mc_sweep<R: Rng + ?Sized>(&mut self, config: &mut WorldlineConfig, rng: &mut R) -> SweepStats {
        self.run_updates(config, self.layout.n_sites() as u64, rng)
    }
}

fn pass(cut: [bool; 2]) -> Decision {
    Decision {
        groups: [0, 1, if cut[0] { 2 } else { 0 }, if cut[1] { 3 } else { 1 }],
        rule: Rule::DiagonalPass { cut },
    }
}
