//! Problem instances: coupling graphs, commuting-bond colorings, restricted
//! update subsets and classical ground-state baselines.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single z-coupling `J_ij σz_i σz_j`. Negative couplings are ferromagnetic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub coupling: f64,
}

/// Sites and weighted bonds of an Ising problem `H_P = Σ J_ij s_i s_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct CouplingGraph {
    n_sites: usize,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n_sites: usize,
    bonds: Vec<Bond>,
}

impl TryFrom<GraphRepr> for CouplingGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        Self::new(r.n_sites, r.bonds)
    }
}

impl From<CouplingGraph> for GraphRepr {
    fn from(g: CouplingGraph) -> Self {
        Self {
            n_sites: g.n_sites,
            bonds: g.bonds,
        }
    }
}

impl CouplingGraph {
    pub fn new(n_sites: usize, bonds: Vec<Bond>) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidGraph("graph has no sites".into()));
        }
        let mut seen = HashMap::with_capacity(bonds.len());
        let mut adjacency = vec![Vec::new(); n_sites];
        for (idx, b) in bonds.iter().enumerate() {
            if b.i >= n_sites || b.j >= n_sites {
                return Err(Error::InvalidGraph(format!(
                    "bond {idx} ({}, {}) references a site outside [0, {n_sites})",
                    b.i, b.j
                )));
            }
            if b.i == b.j {
                return Err(Error::InvalidGraph(format!("bond {idx} is a self-loop on site {}", b.i)));
            }
            if !b.coupling.is_finite() {
                return Err(Error::InvalidGraph(format!("bond {idx} has a non-finite coupling")));
            }
            let key = (b.i.min(b.j), b.i.max(b.j));
            if let Some(prev) = seen.insert(key, idx) {
                return Err(Error::InvalidGraph(format!(
                    "bonds {prev} and {idx} both join sites {} and {}",
                    key.0, key.1
                )));
            }
            adjacency[b.i].push(idx);
            adjacency[b.j].push(idx);
        }
        Ok(Self {
            n_sites,
            bonds,
            adjacency,
        })
    }

    /// Uniform chain `0-1-...-(n-1)`, closed into a ring when `periodic`.
    pub fn chain(n_sites: usize, coupling: f64, periodic: bool) -> Result<Self> {
        let n_bonds = if periodic && n_sites > 2 { n_sites } else { n_sites.saturating_sub(1) };
        let bonds = (0..n_bonds)
            .map(|k| Bond {
                i: k,
                j: (k + 1) % n_sites,
                coupling,
            })
            .collect();
        Self::new(n_sites, bonds)
    }

    /// Square lattice with couplings drawn from `coupling(bond_index)`.
    ///
    /// Site `(x, y)` has index `y * width + x`. Bonds are ordered as horizontal
    /// bonds on even columns, horizontal on odd columns, vertical on even rows,
    /// vertical on odd rows, so greedy coloring of an even periodic lattice
    /// finds the four-class checkerboard.
    pub fn square_lattice(
        width: usize,
        height: usize,
        periodic: bool,
        mut coupling: impl FnMut(usize) -> f64,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::LatticeTooSmall { width, height });
        }
        if periodic && (width < 3 || height < 3) {
            return Err(Error::InvalidGraph(format!(
                "a periodic {width}x{height} lattice would contain duplicate bonds; periodic lattices need both sides >= 3"
            )));
        }
        let site = |x: usize, y: usize| y * width + x;
        let mut pairs = Vec::with_capacity(2 * width * height);
        let x_span = if periodic { width } else { width - 1 };
        let y_span = if periodic { height } else { height - 1 };
        for parity in 0..2 {
            for y in 0..height {
                for x in (parity..x_span).step_by(2) {
                    pairs.push((site(x, y), site((x + 1) % width, y)));
                }
            }
        }
        for parity in 0..2 {
            for y in (parity..y_span).step_by(2) {
                for x in 0..width {
                    pairs.push((site(x, y), site(x, (y + 1) % height)));
                }
            }
        }
        let bonds = pairs
            .into_iter()
            .enumerate()
            .map(|(idx, (i, j))| Bond {
                i,
                j,
                coupling: coupling(idx),
            })
            .collect();
        Self::new(width * height, bonds)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, b: usize) -> &Bond {
        &self.bonds[b]
    }

    /// Indices of the bonds touching `site`.
    pub fn bonds_of(&self, site: usize) -> &[usize] {
        &self.adjacency[site]
    }

    /// Number of neighbours of `site`.
    pub fn degree(&self, site: usize) -> usize {
        self.adjacency[site].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_abs_coupling(&self) -> f64 {
        self.bonds.iter().map(|b| b.coupling.abs()).fold(0.0, f64::max)
    }

    /// Classical energy `Σ J_ij s_i s_j` of a ±1 configuration.
    pub fn energy(&self, spins: &[i8]) -> f64 {
        debug_assert_eq!(spins.len(), self.n_sites);
        self.bonds
            .iter()
            .map(|b| b.coupling * f64::from(spins[b.i] * spins[b.j]))
            .sum()
    }
}

/// Partition of the bonds into classes of mutually commuting bond terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeColoring {
    pub n_colors: usize,
    pub color_of_bond: Vec<usize>,
}

impl EdgeColoring {
    /// Bond indices grouped by color.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut classes = vec![Vec::new(); self.n_colors];
        for (b, &c) in self.color_of_bond.iter().enumerate() {
            classes[c].push(b);
        }
        classes
    }

    /// Checks that no two bonds of one color share a site.
    pub fn is_proper(&self, graph: &CouplingGraph) -> bool {
        if self.color_of_bond.len() != graph.n_bonds() {
            return false;
        }
        self.classes().iter().all(|class| {
            let mut used = vec![false; graph.n_sites()];
            class.iter().all(|&b| {
                let Bond { i, j, .. } = *graph.bond(b);
                let free = !used[i] && !used[j];
                used[i] = true;
                used[j] = true;
                free
            })
        })
    }
}

/// Greedy edge coloring in bond-index order: each bond takes the smallest
/// color not used by a bond already colored at either endpoint.
pub fn color_edges(graph: &CouplingGraph) -> EdgeColoring {
    let mut color_of_bond = Vec::with_capacity(graph.n_bonds());
    // colors_at[site] holds the colors already used at that site
    let mut colors_at: Vec<Vec<usize>> = vec![Vec::new(); graph.n_sites()];
    let mut n_colors = 0;
    for b in graph.bonds() {
        let c = (0..)
            .find(|c| !colors_at[b.i].contains(c) && !colors_at[b.j].contains(c))
            .expect("unbounded search");
        colors_at[b.i].push(c);
        colors_at[b.j].push(c);
        color_of_bond.push(c);
        n_colors = n_colors.max(c + 1);
    }
    EdgeColoring {
        n_colors: n_colors.max(1),
        color_of_bond,
    }
}

/// Bond subsets `B_m` confining restricted cluster updates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BondSubsets {
    pub subsets: Vec<Vec<usize>>,
}

impl BondSubsets {
    /// A single subset holding every bond (unrestricted updates).
    pub fn all(graph: &CouplingGraph) -> Self {
        Self {
            subsets: vec![(0..graph.n_bonds()).collect()],
        }
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Checks coverage of every bond, index bounds and connectivity of each subset.
    pub fn validate(&self, graph: &CouplingGraph) -> Result<()> {
        let mut covered = vec![false; graph.n_bonds()];
        for (m, subset) in self.subsets.iter().enumerate() {
            if subset.is_empty() {
                return Err(Error::InvalidGraph(format!("bond subset {m} is empty")));
            }
            for &b in subset {
                if b >= graph.n_bonds() {
                    return Err(Error::InvalidGraph(format!(
                        "bond subset {m} references bond {b}, graph has {}",
                        graph.n_bonds()
                    )));
                }
                covered[b] = true;
            }
            if !subset_is_connected(graph, subset) {
                return Err(Error::InvalidGraph(format!("bond subset {m} is not connected")));
            }
        }
        if let Some(b) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidGraph(format!("bond {b} is not covered by any subset")));
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|(line, msg)| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })
    }

    pub fn parse(text: &str) -> Result<Self, (usize, String)> {
        let mut subsets = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let subset = line
                .split_whitespace()
                .map(|tok| tok.parse::<usize>().map_err(|e| (n + 1, format!("bad bond index {tok:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            subsets.push(subset);
        }
        Ok(Self { subsets })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for subset in &self.subsets {
            let line: Vec<String> = subset.iter().map(ToString::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn subset_is_connected(graph: &CouplingGraph, subset: &[usize]) -> bool {
    let mut sites: HashMap<usize, Vec<usize>> = HashMap::new();
    for &b in subset {
        let Bond { i, j, .. } = *graph.bond(b);
        sites.entry(i).or_default().push(j);
        sites.entry(j).or_default().push(i);
    }
    let Some(&start) = sites.keys().next() else {
        return true;
    };
    let mut seen = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for &t in &sites[&s] {
            if !seen.contains(&t) {
                seen.push(t);
                queue.push_back(t);
            }
        }
    }
    seen.len() == sites.len()
}

/// One four-bond subset per elementary plaquette of a square lattice built by
/// [`CouplingGraph::square_lattice`] or [`generate_instance`].
pub fn default_square_subsets(graph: &CouplingGraph, width: usize, height: usize) -> Result<BondSubsets> {
    if graph.n_sites() != width * height {
        return Err(Error::InvalidGraph(format!(
            "graph has {} sites, a {width}x{height} lattice has {}",
            graph.n_sites(),
            width * height
        )));
    }
    let index: HashMap<(usize, usize), usize> = graph
        .bonds()
        .iter()
        .enumerate()
        .map(|(idx, b)| ((b.i.min(b.j), b.i.max(b.j)), idx))
        .collect();
    let lookup = |a: usize, b: usize| {
        index.get(&(a.min(b), a.max(b))).copied().ok_or_else(|| {
            Error::InvalidGraph(format!("no bond between sites {a} and {b}; graph is not a {width}x{height} lattice"))
        })
    };
    // a lattice is periodic when its wrap-around bond exists
    let periodic = width > 2 && index.contains_key(&(0, width - 1));
    let (nx, ny) = if periodic { (width, height) } else { (width - 1, height - 1) };
    let site = |x: usize, y: usize| (y % height) * width + (x % width);
    let mut subsets = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            let (a, b, c, d) = (site(x, y), site(x + 1, y), site(x + 1, y + 1), site(x, y + 1));
            subsets.push(vec![lookup(a, b)?, lookup(b, c)?, lookup(d, c)?, lookup(a, d)?]);
        }
    }
    let subsets = BondSubsets { subsets };
    subsets.validate(graph)?;
    Ok(subsets)
}

/// Square-lattice geometry an instance was generated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub width: usize,
    pub height: usize,
    pub periodic: bool,
}

/// A problem instance with its optional exact ground-state energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinGlassInstance {
    pub graph: CouplingGraph,
    pub ground_energy: Option<f64>,
    pub seed: Option<u64>,
    pub lattice: Option<Lattice>,
}

/// Square-lattice spin glass with couplings i.i.d. uniform on `[-1, 1]`.
pub fn generate_instance(width: usize, height: usize, periodic: bool, seed: u64) -> Result<SpinGlassInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = CouplingGraph::square_lattice(width, height, periodic, |_| rng.random_range(-1.0..=1.0))?;
    Ok(SpinGlassInstance {
        graph,
        ground_energy: None,
        seed: Some(seed),
        lattice: Some(Lattice {
            width,
            height,
            periodic,
        }),
    })
}

/// Largest system [`ground_state_exhaustive`] will enumerate.
pub const MAX_EXHAUSTIVE_SITES: usize = 26;

/// Exact classical minimum of `H_P` by Gray-code enumeration with `s_0 = +1`.
pub fn ground_state_exhaustive(graph: &CouplingGraph) -> Result<(f64, Vec<i8>)> {
    let n = graph.n_sites();
    if n > MAX_EXHAUSTIVE_SITES {
        return Err(Error::Capacity {
            what: "exhaustive ground-state search",
            limit: MAX_EXHAUSTIVE_SITES,
            requested: n,
        });
    }
    let mut spins = vec![1i8; n];
    let mut energy = graph.energy(&spins);
    let mut best = (energy, spins.clone());
    // site k+1 flips when bit k of the Gray code changes
    for step in 1u64..(1u64 << (n - 1)) {
        let site = step.trailing_zeros() as usize + 1;
        let local: f64 = graph
            .bonds_of(site)
            .iter()
            .map(|&b| {
                let bond = graph.bond(b);
                let other = if bond.i == site { bond.j } else { bond.i };
                bond.coupling * f64::from(spins[other])
            })
            .sum();
        energy -= 2.0 * f64::from(spins[site]) * local;
        spins[site] = -spins[site];
        if energy < best.0 {
            best = (energy, spins.clone());
        }
    }
    // the running sum drifts by rounding; report the exact energy of the minimizer
    best.0 = graph.energy(&best.1);
    Ok(best)
}

impl SpinGlassInstance {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            ParseFailure::Line(line, msg) => Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            },
            ParseFailure::Graph(e) => e,
        })
    }

    /// Parses the text instance format: `N B`, then `B` lines `i j J`, optional
    /// `# E0 <value>`, `# seed <n>` and `# lattice <W> <H> periodic|open` comment lines.
    pub fn parse(text: &str) -> Result<Self, ParseFailure> {
        let mut header: Option<(usize, usize)> = None;
        let mut bonds = Vec::new();
        let mut ground_energy = None;
        let mut seed = None;
        let mut lattice = None;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut parts = comment.split_whitespace();
                match (parts.next(), parts.next()) {
                    (Some("E0"), Some(v)) => {
                        ground_energy = Some(
                            v.parse::<f64>()
                                .map_err(|e| ParseFailure::Line(line_no, format!("bad E0 value {v:?}: {e}")))?,
                        );
                    }
                    (Some("seed"), Some(v)) => {
                        seed = Some(
                            v.parse::<u64>()
                                .map_err(|e| ParseFailure::Line(line_no, format!("bad seed {v:?}: {e}")))?,
                        );
                    }
                    (Some("lattice"), Some(w)) => {
                        let bad = || ParseFailure::Line(line_no, "expected `# lattice W H periodic|open`".into());
                        let width = w.parse().map_err(|_| bad())?;
                        let height = parts.next().and_then(|h| h.parse().ok()).ok_or_else(bad)?;
                        let periodic = match parts.next() {
                            Some("periodic") => true,
                            Some("open") => false,
                            _ => return Err(bad()),
                        };
                        lattice = Some(Lattice {
                            width,
                            height,
                            periodic,
                        });
                    }
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match header {
                None => {
                    let [n_sites, n_bonds] = fields[..] else {
                        return Err(ParseFailure::Line(line_no, "expected header `N B`".into()));
                    };
                    let parse = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|e| ParseFailure::Line(line_no, format!("bad count {s:?}: {e}")))
                    };
                    header = Some((parse(n_sites)?, parse(n_bonds)?));
                }
                Some(_) => {
                    let [i, j, coupling] = fields[..] else {
                        return Err(ParseFailure::Line(line_no, "expected bond line `i j J`".into()));
                    };
                    let bad = |what: &str, s: &str| ParseFailure::Line(line_no, format!("bad {what} {s:?}"));
                    bonds.push(Bond {
                        i: i.parse().map_err(|_| bad("site", i))?,
                        j: j.parse().map_err(|_| bad("site", j))?,
                        coupling: coupling.parse().map_err(|_| bad("coupling", coupling))?,
                    });
                }
            }
        }
        let Some((n_sites, n_bonds)) = header else {
            return Err(ParseFailure::Line(0, "missing header".into()));
        };
        if bonds.len() != n_bonds {
            return Err(ParseFailure::Line(
                0,
                format!("header declares {n_bonds} bonds, found {}", bonds.len()),
            ));
        }
        let graph = CouplingGraph::new(n_sites, bonds).map_err(ParseFailure::Graph)?;
        Ok(Self {
            graph,
            ground_energy,
            seed,
            lattice,
        })
    }

    /// Serializes to the instance format; `comments` are emitted as `#` lines
    /// between the bond list and the trailing `# E0` line.
    pub fn to_text(&self, comments: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.graph.n_sites(), self.graph.n_bonds());
        for b in self.graph.bonds() {
            let _ = writeln!(out, "{} {} {:?}", b.i, b.j, b.coupling);
        }
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        if let Some(l) = self.lattice {
            let kind = if l.periodic { "periodic" } else { "open" };
            let _ = writeln!(out, "# lattice {} {} {kind}", l.width, l.height);
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "# seed {seed}");
        }
        if let Some(e0) = self.ground_energy {
            let _ = writeln!(out, "# E0 {e0:?}");
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text(comments)).map_err(|e| Error::io(path, e))
    }

    /// Plaquette subsets of the instance's square lattice.
    pub fn default_subsets(&self) -> Result<BondSubsets> {
        let l = self.lattice.ok_or_else(|| {
            Error::InvalidGraph("instance has no lattice geometry; supply bond subsets explicitly".into())
        })?;
        default_square_subsets(&self.graph, l.width, l.height)
    }

    /// Fills in `ground_energy` by enumeration when absent and the system is small enough.
    pub fn ensure_ground_energy(&mut self) -> Option<f64> {
        if self.ground_energy.is_none() && self.graph.n_sites() <= MAX_EXHAUSTIVE_SITES {
            self.ground_energy = ground_state_exhaustive(&self.graph).ok().map(|(e, _)| e);
        }
        self.ground_energy
    }
}

#[derive(Debug)]
pub enum ParseFailure {
    Line(usize, String),
    Graph(Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_bonds() {
        let b = |i, j| Bond { i, j, coupling: 1.0 };
        assert!(CouplingGraph::new(3, vec![b(0, 3)]).is_err());
        assert!(CouplingGraph::new(3, vec![b(1, 1)]).is_err());
        assert!(CouplingGraph::new(3, vec![b(0, 1), b(1, 0)]).is_err());
        assert!(CouplingGraph::new(0, vec![]).is_err());
        let g = CouplingGraph::new(3, vec![b(0, 1), b(1, 2)]).unwrap();
        assert_eq!((g.degree(0), g.degree(1), g.degree(2)), (1, 2, 1));
    }

    #[test]
    fn generated_lattice_sizes() {
        let inst = generate_instance(10, 10, true, 7).unwrap();
        assert_eq!(inst.graph.n_sites(), 100);
        assert_eq!(inst.graph.n_bonds(), 200);
        assert!(inst.graph.bonds().iter().all(|b| b.coupling.abs() <= 1.0));

        let open = generate_instance(2, 2, false, 7).unwrap();
        assert_eq!((open.graph.n_sites(), open.graph.n_bonds()), (4, 4));

        assert_eq!(generate_instance(5, 4, true, 99).unwrap(), generate_instance(5, 4, true, 99).unwrap());
        assert_ne!(generate_instance(5, 4, true, 99).unwrap(), generate_instance(5, 4, true, 98).unwrap());
    }

    #[test]
    fn lattice_dimension_errors() {
        assert!(matches!(generate_instance(1, 5, false, 0), Err(Error::LatticeTooSmall { .. })));
        assert!(matches!(generate_instance(5, 1, true, 0), Err(Error::LatticeTooSmall { .. })));
        assert!(generate_instance(2, 4, true, 0).is_err());
    }

    #[test]
    fn coloring_examples() {
        let ring = CouplingGraph::chain(8, -1.0, true).unwrap();
        let c = color_edges(&ring);
        assert_eq!(c.n_colors, 2);
        assert!(c.is_proper(&ring));

        let lattice = CouplingGraph::square_lattice(10, 10, true, |_| -1.0).unwrap();
        let c = color_edges(&lattice);
        assert_eq!(c.n_colors, 4);
        assert!(c.is_proper(&lattice));

        let single = CouplingGraph::new(2, vec![Bond { i: 0, j: 1, coupling: 0.3 }]).unwrap();
        assert_eq!(color_edges(&single).n_colors, 1);
    }

    #[test]
    fn odd_ring_needs_three_colors() {
        let ring = CouplingGraph::chain(5, -1.0, true).unwrap();
        let c = color_edges(&ring);
        assert_eq!(c.n_colors, 3);
        assert!(c.is_proper(&ring));
    }

    #[test]
    fn square_subsets_cover_lattice() {
        let g = CouplingGraph::square_lattice(10, 10, true, |_| 0.5).unwrap();
        let s = default_square_subsets(&g, 10, 10).unwrap();
        assert_eq!(s.len(), 100);
        assert!(s.subsets.iter().all(|b| b.len() == 4));

        let g = CouplingGraph::square_lattice(3, 3, true, |_| 0.5).unwrap();
        let s = default_square_subsets(&g, 3, 3).unwrap();
        assert_eq!(s.len(), 9);
        let mut covered: Vec<usize> = s.subsets.concat();
        covered.sort_unstable();
        covered.dedup();
        assert_eq!(covered.len(), 18);

        let open = CouplingGraph::square_lattice(4, 3, false, |_| 0.5).unwrap();
        let s = default_square_subsets(&open, 4, 3).unwrap();
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn square_subsets_reject_mismatch() {
        let g = CouplingGraph::square_lattice(4, 4, true, |_| 0.5).unwrap();
        assert!(default_square_subsets(&g, 8, 2).is_err());
        let ring = CouplingGraph::chain(16, 1.0, true).unwrap();
        assert!(default_square_subsets(&ring, 4, 4).is_err());
    }

    #[test]
    fn subset_validation() {
        let ring = CouplingGraph::chain(6, 1.0, true).unwrap();
        let disconnected = BondSubsets {
            subsets: vec![vec![0, 3], vec![1, 2, 4, 5]],
        };
        assert!(disconnected.validate(&ring).is_err());
        let partial = BondSubsets {
            subsets: vec![vec![0, 1, 2]],
        };
        assert!(partial.validate(&ring).is_err());
        assert!(BondSubsets::all(&ring).validate(&ring).is_ok());
        let text = BondSubsets::all(&ring).to_text();
        assert_eq!(BondSubsets::parse(&text).unwrap(), BondSubsets::all(&ring));
    }

    #[test]
    fn ground_state_examples() {
        let ferro = CouplingGraph::square_lattice(3, 3, true, |_| -1.0).unwrap();
        let (e, s) = ground_state_exhaustive(&ferro).unwrap();
        assert_eq!(e, -18.0);
        assert!(s.iter().all(|&x| x == s[0]));

        let pair = CouplingGraph::new(2, vec![Bond { i: 0, j: 1, coupling: 1.0 }]).unwrap();
        let (e, s) = ground_state_exhaustive(&pair).unwrap();
        assert_eq!(e, -1.0);
        assert_eq!(s, vec![1, -1]);

        let lone = CouplingGraph::new(1, vec![]).unwrap();
        assert_eq!(ground_state_exhaustive(&lone).unwrap(), (0.0, vec![1]));
    }

    #[test]
    fn ground_state_capacity() {
        let big = CouplingGraph::chain(27, -1.0, false).unwrap();
        assert!(matches!(ground_state_exhaustive(&big), Err(Error::Capacity { .. })));
    }

    #[test]
    fn instance_text_format() {
        let mut inst = generate_instance(3, 3, true, 11).unwrap();
        inst.ensure_ground_energy();
        let text = inst.to_text(&["provenance line".into()]);
        assert!(text.starts_with("9 18\n"));
        assert!(text.trim_end().lines().last().unwrap().starts_with("# E0 "));
        let back = SpinGlassInstance::parse(&text).unwrap();
        assert_eq!(back, inst);

        assert!(SpinGlassInstance::parse("3 2\n0 1 0.5\n").is_err());
        assert!(SpinGlassInstance::parse("3 1\n0 x 0.5\n").is_err());
        assert!(SpinGlassInstance::parse("3 1\n0 0 0.5\n").is_err());
        let no_e0 = SpinGlassInstance::parse("2 1\n0 1 -2.5\n").unwrap();
        assert_eq!(no_e0.ground_energy, None);
        assert_eq!(no_e0.graph.bond(0).coupling, -2.5);
        assert!(no_e0.default_subsets().is_err());
        assert_eq!(back.default_subsets().unwrap().len(), 9);
        assert!(SpinGlassInstance::parse("2 1\n0 1 1\n# lattice 2 x open\n").is_err());
    }
}
