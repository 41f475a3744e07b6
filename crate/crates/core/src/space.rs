//! State spaces, targets and neighborhood statistics.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::{Debug, Display};
use std::hash::Hash;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;

/// Default cap on the number of states for dense diagnostics.
pub const ENUMERABLE_CAP: usize = 4096;

/// A finite state space with an unnormalized log target and a neighborhood relation.
///
/// Implementations must be pure: the same state always yields the same
/// `log_pi` and the same neighbor list, in the same order.
pub trait DiscreteTarget: Sync {
    type State: Clone + Eq + Hash + Ord + Debug + Display + Send + Sync;

    fn log_pi(&self, x: &Self::State) -> f64;

    /// Neighbors of `x`. States outside the support may appear with `log_pi = -inf`.
    fn neighbors(&self, x: &Self::State) -> Vec<Self::State>;

    fn seed_state(&self) -> Self::State;
}

/// A full enumeration of the support reachable from the seed state.
#[derive(Clone, Debug)]
pub struct Enumeration<S> {
    pub states: Vec<S>,
    pub log_pi: Vec<f64>,
    /// Enumerated neighbors of each state, ascending by index.
    pub neighbors: Vec<Vec<usize>>,
    /// Full neighborhood size `|N(x)|`, counting neighbors outside the support.
    pub degree: Vec<usize>,
    index: HashMap<S, usize>,
}

impl<S: Clone + Eq + Hash + Ord + Display> Enumeration<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Exactly normalized log probabilities.
    pub fn log_pi_normalized(&self) -> Vec<f64> {
        let z = log_sum_exp(&self.log_pi);
        self.log_pi.iter().map(|&l| l - z).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.states.iter().map(|s| s.to_string()).collect()
    }

    pub fn to_json(&self, stats: Option<&NeighborhoodStats>) -> serde_json::Value {
        let mut v = serde_json::json!({
            "states": self.labels(),
            "log_pi": self.log_pi,
        });
        if let Some(st) = stats {
            v["M"] = st.m.into();
            v["R"] = st.r().into();
            v["rho"] = st.rho().into();
            v["x_star"] = self.states[st.x_star].to_string().into();
        }
        v
    }
}

/// Breadth-first closure under `N` from the seed state.
///
/// States with `log_pi = -inf` are neither enumerated nor expanded. The result
/// is sorted by the state order.
pub fn enumerate_space<T: DiscreteTarget>(target: &T, cap: usize) -> Result<Enumeration<T::State>> {
    let seed = target.seed_state();
    if target.log_pi(&seed) == f64::NEG_INFINITY {
        return Err(Error::InvalidInit("seed state has zero mass".into()));
    }
    let mut seen: HashSet<T::State> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(seed.clone());
    queue.push_back(seed);
    let mut found = Vec::new();
    while let Some(x) = queue.pop_front() {
        found.push(x.clone());
        if found.len() > cap {
            return Err(Error::CapExceeded { cap });
        }
        for y in target.neighbors(&x) {
            if seen.contains(&y) {
                continue;
            }
            seen.insert(y.clone());
            if target.log_pi(&y) > f64::NEG_INFINITY {
                queue.push_back(y);
            }
        }
    }
    found.sort();
    let index: HashMap<T::State, usize> =
        found.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let log_pi: Vec<f64> = found.iter().map(|s| target.log_pi(s)).collect();
    let mut neighbors = Vec::with_capacity(found.len());
    let mut degree = Vec::with_capacity(found.len());
    for s in &found {
        let nb = target.neighbors(s);
        degree.push(nb.len());
        let mut idx: Vec<usize> = nb.iter().filter_map(|y| index.get(y).copied()).collect();
        idx.sort_unstable();
        idx.dedup();
        neighbors.push(idx);
    }
    Ok(Enumeration { states: found, log_pi, neighbors, degree, index })
}

/// `M`, `R` and the mode of a target on an enumerated domain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeighborhoodStats {
    pub m: usize,
    /// `log R`.
    pub log_r: f64,
    /// Index of `x*` in the enumeration.
    pub x_star: usize,
}

impl NeighborhoodStats {
    pub fn r(&self) -> f64 {
        self.log_r.exp()
    }

    pub fn log_rho(&self) -> f64 {
        self.log_r - (self.m as f64).ln()
    }

    pub fn rho(&self) -> f64 {
        self.log_rho().exp()
    }

    pub fn is_unimodal(&self) -> bool {
        self.log_r > 0.0
    }
}

/// Lexicographically smallest argmax over `domain` (indices are in state order).
fn argmax(log_pi: &[f64], domain: &[usize]) -> usize {
    let mut best = domain[0];
    for &i in domain {
        if log_pi[i] > log_pi[best] {
            best = i;
        }
    }
    best
}

pub fn unimodality_stats<S>(en: &Enumeration<S>) -> Result<NeighborhoodStats> {
    let all: Vec<usize> = (0..en.states.len()).collect();
    stats_on(en, &all, false)
}

/// Statistics with neighborhoods intersected with `x0`; `M` stays the full-space value.
pub fn restricted_stats<S>(en: &Enumeration<S>, x0: &[usize]) -> Result<NeighborhoodStats> {
    stats_on(en, x0, true)
}

fn stats_on<S>(en: &Enumeration<S>, domain: &[usize], check_connected: bool) -> Result<NeighborhoodStats> {
    if domain.len() <= 1 {
        return Err(Error::DegenerateSpace);
    }
    let inside: HashSet<usize> = domain.iter().copied().collect();
    if check_connected && !connected_within(&en.neighbors, domain, &inside) {
        return Err(Error::DisconnectedRestriction);
    }
    let m = en.degree.iter().copied().max().unwrap_or(0);
    let x_star = argmax(&en.log_pi, domain);
    let mut log_r = f64::INFINITY;
    for &x in domain {
        if x == x_star {
            continue;
        }
        let best = en.neighbors[x]
            .iter()
            .filter(|y| inside.contains(y))
            .map(|&y| en.log_pi[y] - en.log_pi[x])
            .fold(f64::NEG_INFINITY, f64::max);
        log_r = log_r.min(best);
    }
    Ok(NeighborhoodStats { m, log_r, x_star })
}

fn connected_within(adj: &[Vec<usize>], domain: &[usize], inside: &HashSet<usize>) -> bool {
    let mut seen = HashSet::new();
    let mut stack = vec![domain[0]];
    seen.insert(domain[0]);
    while let Some(x) = stack.pop() {
        for &y in &adj[x] {
            if inside.contains(&y) && seen.insert(y) {
                stack.push(y);
            }
        }
    }
    seen.len() == domain.len()
}

/// `(M/R)^k`, the bound on the mass of states `k` steps from the mode.
pub fn tail_mass_bound(stats: &NeighborhoodStats, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::BoundInapplicable("k must be at least 1".into()));
    }
    let log_m = (stats.m as f64).ln();
    if stats.log_r <= log_m {
        return Err(Error::BoundInapplicable(format!(
            "R = {:.4e} does not exceed M = {}",
            stats.r(),
            stats.m
        )));
    }
    Ok((k as f64 * (log_m - stats.log_r)).exp())
}

/// Exact `pi(Tail(k))` for `k = 0, 1, ...`, with `Tail(k)` the states at graph
/// distance exactly `k` from `x*`.
pub fn exact_tail_masses<S: Clone + Eq + Hash + Ord + Display>(
    en: &Enumeration<S>,
    x_star: usize,
) -> Vec<f64> {
    let n = en.len();
    let mut dist = vec![usize::MAX; n];
    dist[x_star] = 0;
    let mut queue = VecDeque::from([x_star]);
    while let Some(x) = queue.pop_front() {
        for &y in &en.neighbors[x] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    let lp = en.log_pi_normalized();
    let depth = dist.iter().copied().filter(|&d| d != usize::MAX).max().unwrap_or(0);
    let mut mass = vec![0.0; depth + 1];
    for i in 0..n {
        if dist[i] != usize::MAX {
            mass[dist[i]] += lp[i].exp();
        }
    }
    mass
}

/// Irreflexivity and symmetry violations of `N` over the given states.
pub fn neighborhood_violations<T: DiscreteTarget>(target: &T, states: &[T::State]) -> Vec<String> {
    let mut out = Vec::new();
    for x in states {
        let nb = target.neighbors(x);
        if nb.contains(x) {
            out.push(format!("{x} is its own neighbor"));
        }
        let uniq: HashSet<&T::State> = nb.iter().collect();
        if uniq.len() != nb.len() {
            out.push(format!("{x} lists a neighbor twice"));
        }
        for y in &nb {
            if !target.neighbors(y).contains(x) {
                out.push(format!("{y} in N({x}) but {x} not in N({y})"));
            }
        }
    }
    out
}

/// Whether the enumerated neighbor graph is connected.
pub fn is_connected<S>(en: &Enumeration<S>) -> bool {
    if en.states.is_empty() {
        return true;
    }
    let all: Vec<usize> = (0..en.states.len()).collect();
    let inside: HashSet<usize> = all.iter().copied().collect();
    connected_within(&en.neighbors, &all, &inside)
}
