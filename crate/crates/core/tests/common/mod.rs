#![allow(dead_code)]

use std::collections::HashMap;

use dmh::diagnostics::{build_transition_matrix, DenseChain};
use dmh::graph::GraphTarget;
use dmh::rng::{seeded, substream, Purpose};
use dmh::samplers::{step, ChainState, KernelSpec};
use dmh::sbm::{generate_sbm, SbmTarget};
use dmh::space::{enumerate_space, unimodality_stats, Enumeration, NeighborhoodStats};
use dmh::varsel::{generate_data, Covariance, Neighborhood, VarSelHyper, VarSelTarget};
use rand::Rng;

pub const FIXTURE_SEED: u64 = 0x5eed_2024;

/// Random tree-plus-chords targets; every non-mode state has a neighbor at
/// least `e^{min_log_ratio}` times heavier.
pub fn graph_fixtures(count: usize, min_log_ratio: f64) -> Vec<GraphTarget> {
    (0..count)
        .map(|i| {
            let mut rng = substream(FIXTURE_SEED, Purpose::Fixture, 1, i as u32);
            let n = rng.random_range(6..=24);
            let deg = rng.random_range(2..=4);
            let extra = rng.random_range(0..=n / 2);
            GraphTarget::random_unimodal(n, deg, min_log_ratio, extra, &mut rng)
        })
        .collect()
}

/// Small simulated regressions with a strong signal.
pub fn varsel_fixtures(count: usize) -> Vec<VarSelTarget> {
    (0..count)
        .map(|i| {
            let mut rng = substream(FIXTURE_SEED, Purpose::Fixture, 2, i as u32);
            let p = rng.random_range(5..=8);
            let n = rng.random_range(60..=120);
            let cov = if i % 3 == 2 { Covariance::High } else { Covariance::Moderate };
            let (data, _) = generate_data(p, n, cov, None, &mut rng);
            VarSelTarget::new(data, VarSelHyper::default_for(p), Neighborhood::N1)
        })
        .collect()
}

pub fn sbm_fixtures(count: usize, p_max: usize) -> Vec<SbmTarget> {
    (0..count)
        .map(|i| {
            let mut rng = substream(FIXTURE_SEED, Purpose::Fixture, 3, i as u32);
            let p = rng.random_range(3..=p_max);
            let pw = rng.random_range(0.3..0.95);
            let pb = rng.random_range(0.0..0.3);
            generate_sbm(p, pw, pb, &mut rng).unwrap().0
        })
        .map(SbmTarget::new)
        .collect()
}

/// Two basins; the lower one is `depth` below the other.
pub fn bimodal_fixtures() -> Vec<(GraphTarget, usize)> {
    let mut out = Vec::new();
    for (i, k) in [3usize, 4, 5, 6].into_iter().enumerate() {
        for (j, step) in [3.2f64, 4.0, 5.0].into_iter().enumerate() {
            let mut rng = seeded(FIXTURE_SEED + (10 * i + j) as u64);
            let depth = 3.0 * (k as f64 - 1.0) * step + 15.0 + rng.random_range(0.0..10.0);
            out.push((GraphTarget::bimodal_paths(k, step, depth), k));
        }
    }
    out
}

pub struct Fixture<S> {
    pub name: String,
    pub en: Enumeration<S>,
    pub stats: NeighborhoodStats,
}

pub fn enumerate<T: dmh::space::DiscreteTarget>(name: String, t: &T) -> Fixture<T::State> {
    let en = enumerate_space(t, 4096).unwrap();
    let stats = unimodality_stats(&en).unwrap();
    Fixture { name, en, stats }
}

pub fn chain<S>(f: &Fixture<S>, spec: &KernelSpec) -> DenseChain
where
    S: Clone + Eq + std::hash::Hash + Ord + std::fmt::Display,
{
    build_transition_matrix(&f.en, spec).unwrap()
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, t);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * t * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let d = n as f64 * (t * q1 - q0) / (t * t - 1.0);
                x[i] = 0.5 * (1.0 - t);
                w[i] = 1.0 / ((1.0 - t * t) * d * d);
                break;
            }
        }
    }
    (x, w)
}

/// Largest deviation, in standard errors, between empirical one-step
/// frequencies from `start` and the exact row of `chain`.
pub fn step_z_score<C, S>(start: &C, en: &Enumeration<S>, chain: &DenseChain, spec: &KernelSpec, draws: usize, seed: u64) -> f64
where
    C: ChainState<Key = S>,
    S: Clone + Eq + std::hash::Hash + Ord + std::fmt::Display + std::fmt::Debug,
{
    let x = en.index_of(&start.key()).unwrap();
    let mut rng = seeded(seed);
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for _ in 0..draws {
        let mut c = start.clone();
        step(&mut c, spec, &mut rng).unwrap();
        *counts.entry(en.index_of(&c.key()).unwrap()).or_default() += 1;
    }
    let mut targets: Vec<usize> = en.neighbors[x].clone();
    targets.push(x);
    let mut worst: f64 = 0.0;
    for y in targets {
        let p = chain.p(x, y);
        let got = *counts.get(&y).unwrap_or(&0) as f64;
        let expect = p * draws as f64;
        let se = (draws as f64 * p * (1.0 - p)).sqrt();
        let z = if se > 0.0 { (got - expect).abs() / se } else if (got - expect).abs() < 0.5 { 0.0 } else { f64::INFINITY };
        worst = worst.max(z);
    }
    worst
}
