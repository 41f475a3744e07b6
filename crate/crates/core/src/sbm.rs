//! Two-block stochastic block model with the edge probabilities integrated out.
//!
//! With independent `Q_uv ~ Uniform(0, 1)` and a flat prior on labels,
//!
//! `log pi(z) = sum_{u <= v} [ln G(m_uv + 1) + ln G(n_uv - m_uv + 1) - ln G(n_uv + 2)]`
//!
//! where `n_uv` counts node pairs with labels `{u, v}` and `m_uv` the edges among them.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::samplers::ChainState;
use crate::space::DiscreteTarget;

/// Number of blocks.
pub const K: usize = 2;

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmData {
    pub p: usize,
    pub adj: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphHeader {
    pub p: usize,
    pub seed: Option<u64>,
    pub p_within: Option<f64>,
    pub p_between: Option<f64>,
}

impl SbmData {
    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); p];
        for &(i, j) in edges {
            if i == j || i >= p || j >= p {
                return Err(Error::Config(format!("invalid edge ({i}, {j}) for p = {p}")));
            }
            adj[i].push(j);
            adj[j].push(i);
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        Ok(SbmData { p, adj })
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.adj.iter().enumerate() {
            out.extend(row.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    /// Edge list as CSV preceded by a `# {json header}` line.
    pub fn write_edge_list<W: Write>(&self, header: &GraphHeader, mut w: W) -> Result<()> {
        writeln!(w, "# {}", serde_json::to_string(header)?)?;
        writeln!(w, "i,j")?;
        for (i, j) in self.edges() {
            writeln!(w, "{i},{j}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(r: R) -> Result<(Self, GraphHeader)> {
        let mut header: Option<GraphHeader> = None;
        let mut edges = Vec::new();
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if let Some(h) = t.strip_prefix('#') {
                header = Some(serde_json::from_str(h.trim())?);
                continue;
            }
            if t.is_empty() || t == "i,j" {
                continue;
            }
            let (a, b) = t.split_once(',').ok_or_else(|| Error::Config(format!("bad edge line '{t}'")))?;
            let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Config(format!("bad node id '{s}': {e}")));
            edges.push((parse(a)?, parse(b)?));
        }
        let header = header.ok_or_else(|| Error::Config("edge list is missing its header line".into()))?;
        Ok((SbmData::from_edges(header.p, &edges)?, header))
    }

    pub fn save(&self, header: &GraphHeader, path: &Path) -> Result<()> {
        self.write_edge_list(header, std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<(Self, GraphHeader)> {
        Self::read_edge_list(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Block labels in `{1, 2}`; displays as a digit string such as `1122`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Labels(pub Vec<u8>);

impl Labels {
    pub fn switched(&self) -> Labels {
        Labels(self.0.iter().map(|&z| 3 - z).collect())
    }

    pub fn hamming(&self, other: &Labels) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn flipped(&self, j: usize) -> Labels {
        let mut z = self.clone();
        z.0[j] = 3 - z.0[j];
        z
    }
}

impl fmt::Display for Labels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &z in &self.0 {
            write!(f, "{z}")?;
        }
        Ok(())
    }
}

#[inline]
fn block(z: u8) -> usize {
    (z - 1) as usize
}

#[inline]
fn pair_index(u: usize, v: usize) -> usize {
    let (a, b) = if u <= v { (u, v) } else { (v, u) };
    a * K - a * (a + 1) / 2 + b
}

const NPAIRS: usize = K * (K + 1) / 2;

/// Block sizes, edge counts per block pair and per-node tallies of
/// neighbors in each block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockCounts {
    pub sizes: [usize; K],
    pub edges: [usize; NPAIRS],
    pub tally: Vec<[usize; K]>,
}

impl BlockCounts {
    pub fn from_scratch(data: &SbmData, z: &Labels) -> Self {
        let mut sizes = [0; K];
        for &l in &z.0 {
            sizes[block(l)] += 1;
        }
        let mut tally = vec![[0; K]; data.p];
        let mut edges = [0; NPAIRS];
        for (i, row) in data.adj.iter().enumerate() {
            for &j in row {
                tally[i][block(z.0[j])] += 1;
                if j > i {
                    edges[pair_index(block(z.0[i]), block(z.0[j]))] += 1;
                }
            }
        }
        BlockCounts { sizes, edges, tally }
    }

    /// Number of node pairs with labels `{u, v}` (zero-based blocks).
    pub fn pairs(&self, u: usize, v: usize) -> usize {
        if u == v {
            self.sizes[u] * self.sizes[u].saturating_sub(1) / 2
        } else {
            self.sizes[u] * self.sizes[v]
        }
    }

    /// Counts after moving node `j` from block `a` to the other block, without tallies.
    fn flipped_pair_counts(&self, a: usize, j: usize) -> ([usize; K], [usize; NPAIRS]) {
        let b = 1 - a;
        let (da, db) = (self.tally[j][a], self.tally[j][b]);
        let mut sizes = self.sizes;
        sizes[a] -= 1;
        sizes[b] += 1;
        let mut edges = self.edges;
        edges[pair_index(a, a)] -= da;
        edges[pair_index(a, b)] = edges[pair_index(a, b)] + da - db;
        edges[pair_index(b, b)] += db;
        (sizes, edges)
    }

    /// Move node `j` (currently labelled `z_j`) to the other block.
    pub fn flip_update(&mut self, data: &SbmData, z_j: u8, j: usize) {
        let a = block(z_j);
        let b = 1 - a;
        let (sizes, edges) = self.flipped_pair_counts(a, j);
        self.sizes = sizes;
        self.edges = edges;
        for &i in &data.adj[j] {
            self.tally[i][a] -= 1;
            self.tally[i][b] += 1;
        }
    }
}

/// `ln k!` for `k = 0..=n`.
#[derive(Clone, Debug)]
pub struct LnFactorial(Vec<f64>);

impl LnFactorial {
    pub fn new(n: usize) -> Self {
        LnFactorial((0..=n).map(|k| ln_gamma(k as f64 + 1.0)).collect())
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }
}

fn log_beta_sum(table: &LnFactorial, sizes: &[usize; K], edges: &[usize; NPAIRS]) -> f64 {
    let mut s = 0.0;
    for u in 0..K {
        for v in u..K {
            let n = if u == v { sizes[u] * sizes[u].saturating_sub(1) / 2 } else { sizes[u] * sizes[v] };
            let m = edges[pair_index(u, v)];
            s += table.get(m) + table.get(n - m) - table.get(n + 1);
        }
    }
    s
}

/// Collapsed posterior from precomputed counts.
pub fn log_posterior_counts(table: &LnFactorial, counts: &BlockCounts) -> f64 {
    log_beta_sum(table, &counts.sizes, &counts.edges)
}

/// Collapsed posterior from scratch.
pub fn log_posterior_sbm(data: &SbmData, z: &Labels) -> f64 {
    let table = LnFactorial::new(data.p * data.p / 2 + 2);
    log_posterior_counts(&table, &BlockCounts::from_scratch(data, z))
}

/// SBM posterior as a [`DiscreteTarget`] over the single-flip neighborhood.
#[derive(Clone, Debug)]
pub struct SbmTarget {
    pub data: SbmData,
    table: LnFactorial,
}

impl SbmTarget {
    pub fn new(data: SbmData) -> Self {
        let n = data.p * data.p / 2 + 2;
        SbmTarget { data, table: LnFactorial::new(n) }
    }

    pub fn state(&self, z: &Labels) -> SbmState<'_> {
        let counts = BlockCounts::from_scratch(&self.data, z);
        let log_pi = log_posterior_counts(&self.table, &counts);
        SbmState { target: self, z: z.clone(), counts, log_pi }
    }
}

impl DiscreteTarget for SbmTarget {
    type State = Labels;

    fn log_pi(&self, z: &Labels) -> f64 {
        log_posterior_counts(&self.table, &BlockCounts::from_scratch(&self.data, z))
    }

    fn neighbors(&self, z: &Labels) -> Vec<Labels> {
        (0..self.data.p).map(|j| z.flipped(j)).collect()
    }

    fn seed_state(&self) -> Labels {
        Labels(vec![1; self.data.p])
    }
}

/// Chain position with incrementally maintained block counts.
#[derive(Clone, Debug)]
pub struct SbmState<'a> {
    target: &'a SbmTarget,
    z: Labels,
    counts: BlockCounts,
    log_pi: f64,
}

impl SbmState<'_> {
    pub fn labels(&self) -> &Labels {
        &self.z
    }

    pub fn counts(&self) -> &BlockCounts {
        &self.counts
    }

    pub fn flip(&mut self, j: usize) {
        self.counts.flip_update(&self.target.data, self.z.0[j], j);
        self.z.0[j] = 3 - self.z.0[j];
        self.log_pi = log_posterior_counts(&self.target.table, &self.counts);
    }
}

impl ChainState for SbmState<'_> {
    type Key = Labels;

    fn key(&self) -> Labels {
        self.z.clone()
    }

    fn log_pi(&self) -> f64 {
        self.log_pi
    }

    fn num_neighbors(&self) -> usize {
        self.target.data.p
    }

    fn neighbor_log_pi(&self, j: usize) -> f64 {
        let (sizes, edges) = self.counts.flipped_pair_counts(block(self.z.0[j]), j);
        log_beta_sum(&self.target.table, &sizes, &edges)
    }

    fn neighbor_degree(&self, _k: usize) -> usize {
        self.target.data.p
    }

    fn apply(&mut self, j: usize) {
        self.flip(j);
    }
}

/// Planted labels: the first `ceil(p / 2)` nodes in block 1, the rest in block 2.
pub fn planted_labels(p: usize) -> Labels {
    Labels((0..p).map(|j| if j < p.div_ceil(2) { 1 } else { 2 }).collect())
}

/// Independent Bernoulli edges at `p_within` inside blocks and `p_between` across.
pub fn generate_sbm<R: Rng>(p: usize, p_within: f64, p_between: f64, rng: &mut R) -> Result<(SbmData, Labels)> {
    if !(0.0..=1.0).contains(&p_within) || !(0.0..=1.0).contains(&p_between) {
        return Err(Error::Config("edge probabilities must lie in [0, 1]".into()));
    }
    let z = planted_labels(p);
    let mut edges = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            let q = if z.0[i] == z.0[j] { p_within } else { p_between };
            if rng.random::<f64>() < q {
                edges.push((i, j));
            }
        }
    }
    Ok((SbmData::from_edges(p, &edges)?, z))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SbmInit {
    /// Half of the labels wrong.
    HalfWrong,
    /// A third of the labels wrong.
    ThirdWrong,
    /// `floor(fraction * p)` labels wrong.
    Fraction { fraction: f64 },
}

impl SbmInit {
    pub fn num_wrong(&self, p: usize) -> usize {
        match *self {
            SbmInit::HalfWrong => p / 2,
            SbmInit::ThirdWrong => p / 3,
            SbmInit::Fraction { fraction } => (fraction * p as f64).floor() as usize,
        }
    }
}

/// Flip a uniformly random subset of the prescribed size.
pub fn sbm_init<R: Rng>(kind: SbmInit, z_star: &Labels, rng: &mut R) -> Result<Labels> {
    let p = z_star.0.len();
    if p < 3 {
        return Err(Error::InvalidInit(format!("p = {p} is below 3")));
    }
    let k = kind.num_wrong(p);
    if k > p {
        return Err(Error::InvalidInit(format!("cannot flip {k} of {p} labels")));
    }
    let mut z = z_star.clone();
    for j in sample(rng, p, k) {
        z.0[j] = 3 - z.0[j];
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn two_nodes_no_edge() {
        let d = SbmData::from_edges(2, &[]).unwrap();
        let lp = log_posterior_sbm(&d, &Labels(vec![1, 1]));
        assert!((lp - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn label_switching_is_exact() {
        let mut rng = seeded(1);
        let (d, _) = generate_sbm(30, 0.3, 0.05, &mut rng).unwrap();
        let t = SbmTarget::new(d);
        for _ in 0..20 {
            let z = Labels((0..30).map(|_| rng.random_range(1..=2u8)).collect());
            assert_eq!(t.log_pi(&z), t.log_pi(&z.switched()));
        }
    }

    #[test]
    fn flip_twice_restores_counts() {
        let mut rng = seeded(2);
        let (d, z) = generate_sbm(20, 0.4, 0.1, &mut rng).unwrap();
        let c0 = BlockCounts::from_scratch(&d, &z);
        let mut c = c0.clone();
        c.flip_update(&d, z.0[3], 3);
        assert_eq!(c, BlockCounts::from_scratch(&d, &z.flipped(3)));
        c.flip_update(&d, 3 - z.0[3], 3);
        assert_eq!(c, c0);
    }

    #[test]
    fn isolated_node_flip_keeps_edges() {
        let d = SbmData::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        let z = Labels(vec![1, 1, 2, 2]);
        let mut c = BlockCounts::from_scratch(&d, &z);
        let before = c.edges;
        c.flip_update(&d, 2, 3);
        assert_eq!(c.edges, before);
        assert_ne!(c.sizes, [2, 2]);
    }

    #[test]
    fn count_invariants() {
        let mut rng = seeded(5);
        let (d, z) = generate_sbm(15, 0.5, 0.2, &mut rng).unwrap();
        let c = BlockCounts::from_scratch(&d, &z);
        let total: usize = (0..K).flat_map(|u| (u..K).map(move |v| (u, v))).map(|(u, v)| c.pairs(u, v)).sum();
        assert_eq!(total, 15 * 14 / 2);
        for u in 0..K {
            for v in u..K {
                assert!(c.edges[pair_index(u, v)] <= c.pairs(u, v));
            }
        }
    }

    #[test]
    fn incremental_neighbors_match() {
        let mut rng = seeded(6);
        let (d, z) = generate_sbm(12, 0.5, 0.1, &mut rng).unwrap();
        let t = SbmTarget::new(d);
        let st = t.state(&z);
        let fast = st.neighbor_log_pis();
        for (j, y) in t.neighbors(&z).iter().enumerate() {
            assert!((fast[j] - t.log_pi(y)).abs() < 1e-10);
        }
    }

    #[test]
    fn generation_and_inits() {
        let mut rng = seeded(7);
        let (d, z) = generate_sbm(9, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(d.num_edges(), 0);
        assert_eq!(z.0.iter().filter(|&&l| l == 1).count(), 5);
        let zs = planted_labels(1000);
        assert_eq!(sbm_init(SbmInit::HalfWrong, &zs, &mut rng).unwrap().hamming(&zs), 500);
        assert_eq!(sbm_init(SbmInit::ThirdWrong, &zs, &mut rng).unwrap().hamming(&zs), 333);
        assert_eq!(sbm_init(SbmInit::Fraction { fraction: 0.0 }, &zs, &mut rng).unwrap(), zs);
        assert!(sbm_init(SbmInit::HalfWrong, &planted_labels(2), &mut rng).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let mut rng = seeded(8);
        let (d, _) = generate_sbm(10, 0.5, 0.1, &mut rng).unwrap();
        let h = GraphHeader { p: 10, seed: Some(8), p_within: Some(0.5), p_between: Some(0.1) };
        let mut buf = Vec::new();
        d.write_edge_list(&h, &mut buf).unwrap();
        let (d2, h2) = SbmData::read_edge_list(&buf[..]).unwrap();
        assert_eq!(d, d2);
        assert_eq!(h, h2);
    }
}
