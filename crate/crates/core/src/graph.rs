//! Explicit small targets on integer-labelled graphs, used as synthetic fixtures.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::space::DiscreteTarget;

/// A target given by an explicit log-weight vector and an undirected edge list.
#[derive(Clone, Debug)]
pub struct GraphTarget {
    pub log_pi: Vec<f64>,
    pub adj: Vec<Vec<usize>>,
}

impl GraphTarget {
    pub fn new(log_pi: Vec<f64>, edges: &[(usize, usize)]) -> Self {
        let n = log_pi.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            assert!(a != b && a < n && b < n, "bad edge ({a}, {b})");
            if !adj[a].contains(&b) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        GraphTarget { log_pi, adj }
    }

    /// States `0..n` on a line.
    pub fn path(log_pi: Vec<f64>) -> Self {
        let edges: Vec<(usize, usize)> = (1..log_pi.len()).map(|i| (i - 1, i)).collect();
        Self::new(log_pi, &edges)
    }

    /// The `d`-dimensional hypercube with a caller-supplied log weight.
    pub fn hypercube(d: usize, f: impl Fn(usize) -> f64) -> Self {
        let n = 1usize << d;
        let log_pi = (0..n).map(&f).collect();
        let mut edges = Vec::new();
        for x in 0..n {
            for b in 0..d {
                let y = x ^ (1 << b);
                if x < y {
                    edges.push((x, y));
                }
            }
        }
        Self::new(log_pi, &edges)
    }

    /// Random unimodal graph rooted at state 0.
    ///
    /// Each state `i > 0` hangs off a parent that is at least `min_log_ratio`
    /// higher in log weight; extra random edges are added while degrees stay
    /// at most `max_degree`.
    pub fn random_unimodal<R: Rng>(
        n: usize,
        max_degree: usize,
        min_log_ratio: f64,
        extra_edges: usize,
        rng: &mut R,
    ) -> Self {
        assert!(n >= 2 && max_degree >= 2);
        let mut log_pi = vec![0.0; n];
        let mut deg = vec![0usize; n];
        let mut edges = Vec::new();
        for i in 1..n {
            let candidates: Vec<usize> = (0..i).filter(|&j| deg[j] < max_degree).collect();
            let parent = *candidates.choose(rng).unwrap_or(&(i - 1));
            log_pi[i] = log_pi[parent] - min_log_ratio - rng.random::<f64>() * min_log_ratio;
            deg[i] += 1;
            deg[parent] += 1;
            edges.push((parent, i));
        }
        let mut tries = 0;
        let mut added = 0;
        while added < extra_edges && tries < 50 * extra_edges + 50 {
            tries += 1;
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b || deg[a] >= max_degree || deg[b] >= max_degree {
                continue;
            }
            if edges.contains(&(a.min(b), a.max(b))) || edges.contains(&(a.max(b), a.min(b))) {
                continue;
            }
            edges.push((a.min(b), a.max(b)));
            deg[a] += 1;
            deg[b] += 1;
            added += 1;
        }
        Self::new(log_pi, &edges)
    }

    /// Two path-shaped basins joined at their low ends.
    ///
    /// States `0..k` rise towards state `k - 1` (the global mode) with log step
    /// `step`; states `k..2k` rise towards `2k - 1` with the same step, starting
    /// `depth` lower. The bridge joins states 0 and `k`.
    pub fn bimodal_paths(k: usize, step: f64, depth: f64) -> Self {
        let mut log_pi = Vec::with_capacity(2 * k);
        for i in 0..k {
            log_pi.push(i as f64 * step);
        }
        for i in 0..k {
            log_pi.push(i as f64 * step - depth);
        }
        let mut edges = Vec::new();
        for i in 1..k {
            edges.push((i - 1, i));
            edges.push((k + i - 1, k + i));
        }
        edges.push((0, k));
        Self::new(log_pi, &edges)
    }

    pub fn len(&self) -> usize {
        self.log_pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_pi.is_empty()
    }
}

impl DiscreteTarget for GraphTarget {
    type State = usize;

    fn log_pi(&self, x: &usize) -> f64 {
        self.log_pi[*x]
    }

    fn neighbors(&self, x: &usize) -> Vec<usize> {
        self.adj[*x].clone()
    }

    fn seed_state(&self) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::space::{enumerate_space, neighborhood_violations, unimodality_stats};

    #[test]
    fn random_unimodal_respects_ratio_and_degree() {
        let mut rng = seeded(3);
        for _ in 0..20 {
            let g = GraphTarget::random_unimodal(12, 3, 2.0, 6, &mut rng);
            let en = enumerate_space(&g, 100).unwrap();
            let st = unimodality_stats(&en).unwrap();
            assert_eq!(st.x_star, 0);
            assert!(st.log_r >= 2.0 - 1e-12);
            assert!(st.m <= 3);
            let states: Vec<usize> = (0..12).collect();
            assert!(neighborhood_violations(&g, &states).is_empty());
        }
    }

    #[test]
    fn hypercube_degree() {
        let g = GraphTarget::hypercube(4, |x| x.count_ones() as f64);
        assert!(g.adj.iter().all(|a| a.len() == 4));
    }
}
