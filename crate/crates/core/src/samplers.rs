//! Random-walk and clipped informed Metropolis-Hastings kernels, chain runners
//! and hitting-time experiments.

use std::collections::HashMap;
use std::fmt::{Debug, Display};
use std::hash::Hash;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;
use crate::space::DiscreteTarget;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    RandomWalk,
    Informed,
}

fn ser_ext<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

/// Proposal family, clip bounds and laziness.
///
/// `ell = 0, big_l = inf` gives the unclipped informed proposal `h(u) = u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelSpec {
    pub family: Family,
    #[serde(serialize_with = "ser_ext")]
    pub ell: f64,
    #[serde(serialize_with = "ser_ext")]
    pub big_l: f64,
    pub lazy: bool,
}

impl KernelSpec {
    pub fn random_walk() -> Self {
        KernelSpec { family: Family::RandomWalk, ell: 0.0, big_l: f64::INFINITY, lazy: false }
    }

    pub fn informed(ell: f64, big_l: f64) -> Result<Self> {
        let s = KernelSpec { family: Family::Informed, ell, big_l, lazy: false };
        s.validate()?;
        Ok(s)
    }

    pub fn unclipped() -> Self {
        KernelSpec { family: Family::Informed, ell: 0.0, big_l: f64::INFINITY, lazy: false }
    }

    pub fn lazy(mut self, lazy: bool) -> Self {
        self.lazy = lazy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == Family::Informed && !(self.ell >= 0.0 && self.ell < self.big_l) {
            return Err(Error::InvalidClip { ell: self.ell, big_l: self.big_l });
        }
        Ok(())
    }

    pub fn is_unclipped(&self) -> bool {
        self.family == Family::Informed && self.ell == 0.0 && self.big_l == f64::INFINITY
    }

    /// `log h(u)` for `log u`; the clip is applied in the log domain.
    pub fn log_h(&self, log_u: f64) -> f64 {
        log_u.clamp(self.ell.ln(), self.big_l.ln())
    }
}

/// `clip(u, ell, L)`.
pub fn clip_weight(u: f64, ell: f64, big_l: f64) -> Result<f64> {
    if !(ell < big_l) {
        return Err(Error::InvalidClip { ell, big_l });
    }
    Ok(u.clamp(ell, big_l))
}

/// Log proposal weights `log h(pi(y)/pi(x))` over a neighborhood and their log normalizer.
pub fn log_proposal_weights(spec: &KernelSpec, lp_x: f64, nbr_lp: &[f64]) -> (Vec<f64>, f64) {
    let w: Vec<f64> = match spec.family {
        Family::RandomWalk => vec![0.0; nbr_lp.len()],
        Family::Informed => nbr_lp.iter().map(|&l| spec.log_h(l - lp_x)).collect(),
    };
    let z = log_sum_exp(&w);
    (w, z)
}

/// `log K(x, y)` given `log h` of the move and `log Z(x)`.
fn log_k(spec: &KernelSpec, lp_x: f64, lp_y: f64, deg_x: usize, log_z_x: f64) -> f64 {
    match spec.family {
        Family::RandomWalk => -(deg_x as f64).ln(),
        Family::Informed => spec.log_h(lp_y - lp_x) - log_z_x,
    }
}

/// `log [pi(y) K(y, x) / (pi(x) K(x, y))]` from local quantities.
///
/// `log_z_*` are ignored for the random walk.
pub fn log_ratio_local(
    spec: &KernelSpec,
    lp_x: f64,
    lp_y: f64,
    deg_x: usize,
    deg_y: usize,
    log_z_x: f64,
    log_z_y: f64,
) -> f64 {
    if lp_y == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    lp_y - lp_x + log_k(spec, lp_y, lp_x, deg_y, log_z_y) - log_k(spec, lp_x, lp_y, deg_x, log_z_x)
}

/// `log P(x, y)` for `y != x`, before any lazy halving.
pub fn log_transition(
    spec: &KernelSpec,
    lp_x: f64,
    lp_y: f64,
    deg_x: usize,
    deg_y: usize,
    log_z_x: f64,
    log_z_y: f64,
) -> f64 {
    if lp_y == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let r = log_ratio_local(spec, lp_x, lp_y, deg_x, deg_y, log_z_x, log_z_y);
    log_k(spec, lp_x, lp_y, deg_x, log_z_x) + r.min(0.0)
}

/// Informed proposal distribution over `N(x)`, in neighbor order.
pub fn informed_proposal_dist<T: DiscreteTarget>(
    target: &T,
    x: &T::State,
    spec: &KernelSpec,
) -> Result<Vec<(T::State, f64)>> {
    let nb = target.neighbors(x);
    if nb.is_empty() {
        return Err(Error::IsolatedState(x.to_string()));
    }
    let lp_x = target.log_pi(x);
    let lps: Vec<f64> = nb.iter().map(|y| target.log_pi(y)).collect();
    let (w, z) = log_proposal_weights(spec, lp_x, &lps);
    Ok(nb.into_iter().zip(w).map(|(y, wi)| (y, (wi - z).exp())).collect())
}

/// Log Metropolis-Hastings ratio for the move `x -> x'`.
pub fn acceptance_log_ratio<T: DiscreteTarget>(
    target: &T,
    x: &T::State,
    x_prime: &T::State,
    spec: &KernelSpec,
) -> f64 {
    let lp_x = target.log_pi(x);
    let lp_y = target.log_pi(x_prime);
    let nx = target.neighbors(x);
    let ny = target.neighbors(x_prime);
    let (lzx, lzy) = match spec.family {
        Family::RandomWalk => (0.0, 0.0),
        Family::Informed => {
            let ax: Vec<f64> = nx.iter().map(|s| target.log_pi(s)).collect();
            let ay: Vec<f64> = ny.iter().map(|s| target.log_pi(s)).collect();
            (log_proposal_weights(spec, lp_x, &ax).1, log_proposal_weights(spec, lp_y, &ay).1)
        }
    };
    log_ratio_local(spec, lp_x, lp_y, nx.len(), ny.len(), lzx, lzy)
}

/// A chain position that can evaluate its neighbors, possibly incrementally.
///
/// Neighbor `k` must refer to the same state as `target.neighbors(x)[k]` for the
/// matching plain target.
pub trait ChainState: Clone {
    type Key: Clone + Eq + Hash + Ord + Debug + Display;

    fn key(&self) -> Self::Key;
    fn log_pi(&self) -> f64;
    fn num_neighbors(&self) -> usize;
    fn neighbor_log_pi(&self, k: usize) -> f64;

    fn neighbor_log_pis(&self) -> Vec<f64> {
        (0..self.num_neighbors()).map(|k| self.neighbor_log_pi(k)).collect()
    }

    fn neighbor_degree(&self, k: usize) -> usize {
        let mut y = self.clone();
        y.apply(k);
        y.num_neighbors()
    }

    /// Move to neighbor `k`.
    fn apply(&mut self, k: usize);
}

/// Adapter running any [`DiscreteTarget`] through full re-evaluation.
pub struct Naive<'a, T: DiscreteTarget> {
    target: &'a T,
    x: T::State,
    lp: f64,
    nbrs: Vec<T::State>,
}

impl<T: DiscreteTarget> Clone for Naive<'_, T> {
    fn clone(&self) -> Self {
        Naive { target: self.target, x: self.x.clone(), lp: self.lp, nbrs: self.nbrs.clone() }
    }
}

impl<'a, T: DiscreteTarget> Naive<'a, T> {
    pub fn new(target: &'a T, x: T::State) -> Self {
        let lp = target.log_pi(&x);
        let nbrs = target.neighbors(&x);
        Naive { target, x, lp, nbrs }
    }

    pub fn state(&self) -> &T::State {
        &self.x
    }
}

impl<T: DiscreteTarget> ChainState for Naive<'_, T> {
    type Key = T::State;

    fn key(&self) -> T::State {
        self.x.clone()
    }

    fn log_pi(&self) -> f64 {
        self.lp
    }

    fn num_neighbors(&self) -> usize {
        self.nbrs.len()
    }

    fn neighbor_log_pi(&self, k: usize) -> f64 {
        self.target.log_pi(&self.nbrs[k])
    }

    fn neighbor_degree(&self, k: usize) -> usize {
        self.target.neighbors(&self.nbrs[k]).len()
    }

    fn apply(&mut self, k: usize) {
        let y = self.nbrs[k].clone();
        *self = Naive::new(self.target, y);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMeta {
    /// Index of the proposed neighbor; `None` when the lazy coin kept the chain put.
    pub proposal: Option<usize>,
    pub accepted: bool,
    /// `log_pi` evaluations spent on this step.
    pub evals: u64,
}

fn draw_categorical<R: Rng>(log_w: &[f64], log_z: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in log_w.iter().enumerate() {
        acc += (w - log_z).exp();
        if u < acc {
            return i;
        }
    }
    log_w.iter().rposition(|&w| w > f64::NEG_INFINITY).unwrap_or(log_w.len() - 1)
}

fn accept<R: Rng>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    log_ratio >= 0.0 || u.ln() < log_ratio
}

/// Neighbor log posteriors keyed by state, shared across informed steps.
///
/// Cleared wholesale once it holds `capacity` states.
#[derive(Clone, Debug)]
pub struct ProposalCache<K> {
    map: HashMap<K, Vec<f64>>,
    capacity: usize,
    pub hits: u64,
    pub misses: u64,
}

impl<K: Clone + Eq + Hash> ProposalCache<K> {
    pub fn new(capacity: usize) -> Self {
        ProposalCache { map: HashMap::new(), capacity: capacity.max(1), hits: 0, misses: 0 }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Cached neighbor values of `x` and the number of fresh evaluations spent.
    fn lookup<C: ChainState<Key = K>>(&mut self, x: &C) -> (Vec<f64>, u64) {
        let key = x.key();
        if let Some(v) = self.map.get(&key) {
            self.hits += 1;
            return (v.clone(), 0);
        }
        self.misses += 1;
        let v = x.neighbor_log_pis();
        if self.map.len() >= self.capacity {
            self.map.clear();
        }
        self.map.insert(key, v.clone());
        let n = v.len() as u64;
        (v, n)
    }
}

fn neighbor_values<C: ChainState>(x: &C, cache: &mut Option<&mut ProposalCache<C::Key>>) -> (Vec<f64>, u64) {
    match cache {
        Some(c) => c.lookup(x),
        None => {
            let v = x.neighbor_log_pis();
            let n = v.len() as u64;
            (v, n)
        }
    }
}

/// One Metropolis-Hastings transition, updating `x` in place.
pub fn step<C: ChainState, R: Rng>(x: &mut C, spec: &KernelSpec, rng: &mut R) -> Result<StepMeta> {
    step_inner(x, spec, rng, None)
}

/// [`step`] reusing neighbor evaluations of previously visited states.
///
/// Draws the same random numbers as [`step`], so both produce identical paths.
pub fn step_cached<C: ChainState, R: Rng>(
    x: &mut C,
    spec: &KernelSpec,
    rng: &mut R,
    cache: &mut ProposalCache<C::Key>,
) -> Result<StepMeta> {
    step_inner(x, spec, rng, Some(cache))
}

fn step_inner<C: ChainState, R: Rng>(
    x: &mut C,
    spec: &KernelSpec,
    rng: &mut R,
    mut cache: Option<&mut ProposalCache<C::Key>>,
) -> Result<StepMeta> {
    if spec.lazy && rng.random::<bool>() {
        return Ok(StepMeta { proposal: None, accepted: false, evals: 0 });
    }
    let n = x.num_neighbors();
    if n == 0 {
        return Err(Error::IsolatedState(x.key().to_string()));
    }
    match spec.family {
        Family::RandomWalk => {
            let k = rng.random_range(0..n);
            let lp_y = x.neighbor_log_pi(k);
            let deg_y = if lp_y == f64::NEG_INFINITY { n } else { x.neighbor_degree(k) };
            let r = log_ratio_local(spec, x.log_pi(), lp_y, n, deg_y, 0.0, 0.0);
            let ok = accept(r, rng);
            if ok {
                x.apply(k);
            }
            Ok(StepMeta { proposal: Some(k), accepted: ok, evals: 1 })
        }
        Family::Informed => {
            let lp_x = x.log_pi();
            let (lps, mut evals) = neighbor_values(x, &mut cache);
            let (w, lz) = log_proposal_weights(spec, lp_x, &lps);
            let k = draw_categorical(&w, lz, rng);
            if lps[k] == f64::NEG_INFINITY {
                let _ = accept(f64::NEG_INFINITY, rng);
                return Ok(StepMeta { proposal: Some(k), accepted: false, evals });
            }
            let mut y = x.clone();
            y.apply(k);
            let (lps_y, ev_y) = neighbor_values(&y, &mut cache);
            evals += ev_y;
            let (_, lz_y) = log_proposal_weights(spec, lps[k], &lps_y);
            let r = log_ratio_local(spec, lp_x, lps[k], n, lps_y.len(), lz, lz_y);
            let ok = accept(r, rng);
            if ok {
                *x = y;
            }
            Ok(StepMeta { proposal: Some(k), accepted: ok, evals })
        }
    }
}

/// A recorded chain path.
#[derive(Clone, Debug)]
pub struct ChainTrace<K> {
    pub seed: u64,
    pub spec: KernelSpec,
    /// `n_steps + 1` states including the initial one.
    pub states: Vec<K>,
    pub log_pi_values: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Cumulative `log_pi` evaluations after each step.
    pub proposal_evals: Vec<u64>,
    /// First iteration at which `stop_at` was visited.
    pub hitting_iter: Option<usize>,
}

impl<K: Display> ChainTrace<K> {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "state", "log_pi", "accepted", "evals"])?;
        for (i, s) in self.states.iter().enumerate() {
            let acc = if i == 0 { String::new() } else { self.accepted[i - 1].to_string() };
            let ev = if i == 0 { 0 } else { self.proposal_evals[i - 1] };
            w.write_record([i.to_string(), s.to_string(), format!("{}", self.log_pi_values[i]), acc, ev.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_sidecar(&self, path: &Path, model: serde_json::Value) -> Result<()> {
        let v = serde_json::json!({
            "seed": self.seed,
            "spec": self.spec,
            "model": model,
            "n_steps": self.accepted.len(),
            "hitting_iter": self.hitting_iter,
            "version": crate::VERSION,
        });
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", serde_json::to_string_pretty(&v)?)?;
        Ok(())
    }
}

/// Run `n_steps` transitions from `init`, recording the full path.
///
/// With `stop_early`, the chain halts the first time it visits `stop_at`.
pub fn run_chain<C: ChainState, R: Rng>(
    init: C,
    spec: &KernelSpec,
    n_steps: usize,
    rng: &mut R,
    seed: u64,
    stop_at: Option<&C::Key>,
    stop_early: bool,
) -> Result<ChainTrace<C::Key>> {
    let mut x = init;
    let mut tr = ChainTrace {
        seed,
        spec: *spec,
        states: vec![x.key()],
        log_pi_values: vec![x.log_pi()],
        accepted: Vec::with_capacity(n_steps),
        proposal_evals: Vec::with_capacity(n_steps),
        hitting_iter: None,
    };
    if stop_at.is_some_and(|s| *s == tr.states[0]) {
        tr.hitting_iter = Some(0);
        if stop_early {
            return Ok(tr);
        }
    }
    let mut evals = 0u64;
    for t in 1..=n_steps {
        let meta = step(&mut x, spec, rng)?;
        evals += meta.evals;
        let key = x.key();
        if tr.hitting_iter.is_none() && stop_at.is_some_and(|s| *s == key) {
            tr.hitting_iter = Some(t);
        }
        tr.states.push(key);
        tr.log_pi_values.push(x.log_pi());
        tr.accepted.push(meta.accepted);
        tr.proposal_evals.push(evals);
        if stop_early && tr.hitting_iter.is_some() {
            break;
        }
    }
    Ok(tr)
}

/// Outcome of one replicate in a hitting-time experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub replicate: usize,
    pub hit_iter: Option<u64>,
    pub wall_secs: f64,
    pub hit_secs: Option<f64>,
    pub evals: u64,
    pub final_log_pi: f64,
    pub best_log_pi: f64,
    #[serde(skip)]
    pub trajectory: Option<Vec<f64>>,
}

impl RunRecord {
    pub fn success(&self) -> bool {
        self.hit_iter.is_some()
    }
}

/// Run up to `budget` steps from `init`, recording when `is_truth` first holds.
pub fn hitting_run<C: ChainState, R: Rng>(
    replicate: usize,
    init: C,
    spec: &KernelSpec,
    budget: u64,
    rng: &mut R,
    is_truth: impl Fn(&C) -> bool,
    stop_early: bool,
    keep_trajectory: bool,
) -> Result<RunRecord> {
    let start = Instant::now();
    let mut x = init;
    let mut hit = if is_truth(&x) { Some(0) } else { None };
    let mut hit_secs = hit.map(|_| 0.0);
    let mut evals = 0;
    let mut best = x.log_pi();
    let mut traj = keep_trajectory.then(|| {
        let mut v = Vec::with_capacity(budget as usize + 1);
        v.push(x.log_pi());
        v
    });
    for t in 1..=budget {
        if stop_early && hit.is_some() {
            break;
        }
        let meta = step(&mut x, spec, rng)?;
        evals += meta.evals;
        best = best.max(x.log_pi());
        if let Some(v) = traj.as_mut() {
            v.push(x.log_pi());
        }
        if hit.is_none() && meta.accepted && is_truth(&x) {
            hit = Some(t);
            hit_secs = Some(start.elapsed().as_secs_f64());
        }
    }
    Ok(RunRecord {
        replicate,
        hit_iter: hit,
        wall_secs: start.elapsed().as_secs_f64(),
        hit_secs,
        evals,
        final_log_pi: x.log_pi(),
        best_log_pi: best,
        trajectory: traj,
    })
}

/// Success count and medians in the layout of the experiment tables.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n_runs: usize,
    pub success: usize,
    /// Median hitting iteration among successes; `None` when fewer than half succeed.
    pub h_true: Option<f64>,
    pub time: f64,
    pub t_true: Option<f64>,
}

pub fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(records: &[RunRecord]) -> Summary {
    let n = records.len();
    let success = records.iter().filter(|r| r.success()).count();
    let enough = 2 * success >= n && success > 0;
    let mut h: Vec<f64> = records.iter().filter_map(|r| r.hit_iter.map(|t| t as f64)).collect();
    let mut th: Vec<f64> = records.iter().filter_map(|r| r.hit_secs).collect();
    let mut tw: Vec<f64> = records.iter().map(|r| r.wall_secs).collect();
    Summary {
        n_runs: n,
        success,
        h_true: if enough { median(&mut h) } else { None },
        time: median(&mut tw).unwrap_or(0.0),
        t_true: if enough { median(&mut th) } else { None },
    }
}

/// Run `n_runs` replicates on a pool of `workers` threads; results come back in
/// replicate order regardless of scheduling.
pub fn hitting_experiment<F>(n_runs: usize, workers: usize, run: F) -> Result<(Vec<RunRecord>, Summary)>
where
    F: Fn(usize) -> Result<RunRecord> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let records: Result<Vec<RunRecord>> = pool.install(|| (0..n_runs).into_par_iter().map(&run).collect());
    let records = records?;
    let s = summarize(&records);
    Ok((records, s))
}
