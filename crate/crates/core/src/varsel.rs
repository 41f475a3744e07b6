//! Spike-and-slab variable selection with a g-prior.
//!
//! The marginal posterior of a model `delta` depends on the data only through
//! `X'X`, `X'y` and `y'y`:
//!
//! `log pi(delta) = -kappa k log p - (k/2) log(1 + g) - (n/2) log(1 + g (1 - r^2))`
//!
//! with `k = |delta|` and `r^2` the coefficient of determination of the
//! least-squares fit on the selected columns.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::ChainState;
use crate::space::DiscreteTarget;

/// Relative pivot threshold below which a submodel counts as singular.
pub const PIVOT_TOL: f64 = 1e-10;
/// Incremental factor updates between full refactorizations.
pub const REFRESH_EVERY: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Covariance {
    Moderate,
    High,
}

impl Covariance {
    pub fn entry(&self, j: usize, k: usize) -> f64 {
        let d = (j as f64 - k as f64).abs();
        match self {
            Covariance::Moderate => (-2.0 * d).exp(),
            Covariance::High => (-d / 4.0).exp(),
        }
    }
}

/// Sufficient statistics of a regression data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarSelData {
    pub p: usize,
    pub n: usize,
    /// `X'X`, row-major.
    pub gram: Vec<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub covariance: Option<Covariance>,
}

impl VarSelData {
    #[inline]
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.p + j]
    }

    pub fn gram_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.gram)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let d: VarSelData = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gram.len() != self.p * self.p || self.xty.len() != self.p {
            return Err(Error::Config("gram/xty dimensions do not match p".into()));
        }
        if self.yty <= 0.0 {
            return Err(Error::Config("yty must be positive".into()));
        }
        for i in 0..self.p {
            for j in 0..i {
                if (self.g(i, j) - self.g(j, i)).abs() > 1e-9 * (1.0 + self.g(i, j).abs()) {
                    return Err(Error::InvalidGram);
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarSelHyper {
    pub g: f64,
    pub kappa: f64,
    pub s_max: Option<usize>,
}

impl VarSelHyper {
    /// `kappa = 1`, `g = p^3`, no sparsity cap.
    pub fn default_for(p: usize) -> Self {
        VarSelHyper { g: (p as f64).powi(3), kappa: 1.0, s_max: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Neighborhood {
    /// Single additions and deletions.
    N1,
    /// Additions, deletions and swaps.
    Ads,
}

/// Inclusion vector `delta`; displays as a bit string such as `110`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Model(pub Vec<bool>);

impl Model {
    pub fn empty(p: usize) -> Self {
        Model(vec![false; p])
    }

    pub fn from_bits(s: &str) -> Self {
        Model(s.chars().map(|c| c == '1').collect())
    }

    pub fn from_support(p: usize, support: &[usize]) -> Self {
        let mut v = vec![false; p];
        for &j in support {
            v[j] = true;
        }
        Model(v)
    }

    pub fn size(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Add(usize),
    Drop(usize),
    Swap { drop: usize, add: usize },
}

impl Move {
    pub fn apply_to(&self, m: &mut Model) {
        match *self {
            Move::Add(j) => m.0[j] = true,
            Move::Drop(j) => m.0[j] = false,
            Move::Swap { drop, add } => {
                m.0[drop] = false;
                m.0[add] = true;
            }
        }
    }
}

/// Moves in neighbor order: all flips by variable, then swaps ordered by
/// (dropped, added) variable.
pub fn neighbor_moves(delta: &[bool], nb: Neighborhood) -> Vec<Move> {
    let p = delta.len();
    let mut out: Vec<Move> = (0..p).map(|j| if delta[j] { Move::Drop(j) } else { Move::Add(j) }).collect();
    if nb == Neighborhood::Ads {
        for i in (0..p).filter(|&i| delta[i]) {
            for j in (0..p).filter(|&j| !delta[j]) {
                out.push(Move::Swap { drop: i, add: j });
            }
        }
    }
    out
}

pub fn neighborhood_size(p: usize, k: usize, nb: Neighborhood) -> usize {
    match nb {
        Neighborhood::N1 => p,
        Neighborhood::Ads => p + k * (p - k),
    }
}

/// `r^2` by a fresh dense Cholesky factorization of the selected Gram block.
pub fn r_squared(data: &VarSelData, delta: &Model) -> Result<f64> {
    let s = delta.support();
    if s.is_empty() {
        return Ok(0.0);
    }
    let k = s.len();
    let sub = DMatrix::from_fn(k, k, |a, b| data.g(s[a], s[b]));
    let b = DVector::from_iterator(k, s.iter().map(|&j| data.xty[j]));
    let maxd = (0..k).map(|a| sub[(a, a)]).fold(0.0, f64::max);
    let chol = sub.cholesky().ok_or(Error::SingularModel)?;
    let l = chol.l();
    for a in 0..k {
        if l[(a, a)] * l[(a, a)] <= PIVOT_TOL * maxd {
            return Err(Error::SingularModel);
        }
    }
    let w = l.solve_lower_triangular(&b).ok_or(Error::SingularModel)?;
    Ok(w.norm_squared() / data.yty)
}

/// Log posterior from `k = |delta|` and `r^2`.
pub fn log_posterior_from_r2(data: &VarSelData, hyper: &VarSelHyper, k: usize, r2: f64) -> f64 {
    if k > data.n || hyper.s_max.is_some_and(|s| k > s) {
        return f64::NEG_INFINITY;
    }
    let (p, n, g) = (data.p as f64, data.n as f64, hyper.g);
    let k = k as f64;
    -hyper.kappa * k * p.ln() - 0.5 * k * g.ln_1p() - 0.5 * n * (g * (1.0 - r2)).ln_1p()
}

/// Log posterior up to an additive constant; `-inf` outside the support.
pub fn log_posterior(data: &VarSelData, hyper: &VarSelHyper, delta: &Model) -> f64 {
    let k = delta.size();
    if k > data.n || hyper.s_max.is_some_and(|s| k > s) {
        return f64::NEG_INFINITY;
    }
    match r_squared(data, delta) {
        Ok(r2) => log_posterior_from_r2(data, hyper, k, r2),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Variable-selection posterior as a [`DiscreteTarget`].
#[derive(Clone, Debug)]
pub struct VarSelTarget {
    pub data: VarSelData,
    pub hyper: VarSelHyper,
    pub nbhd: Neighborhood,
}

impl VarSelTarget {
    pub fn new(data: VarSelData, hyper: VarSelHyper, nbhd: Neighborhood) -> Self {
        VarSelTarget { data, hyper, nbhd }
    }

    /// Incremental chain state at `delta`.
    pub fn state(&self, delta: &Model) -> ModelState<'_> {
        ModelState::new(self, delta)
    }
}

impl DiscreteTarget for VarSelTarget {
    type State = Model;

    fn log_pi(&self, x: &Model) -> f64 {
        log_posterior(&self.data, &self.hyper, x)
    }

    fn neighbors(&self, x: &Model) -> Vec<Model> {
        neighbor_moves(&x.0, self.nbhd)
            .into_iter()
            .map(|mv| {
                let mut y = x.clone();
                mv.apply_to(&mut y);
                y
            })
            .collect()
    }

    fn seed_state(&self) -> Model {
        Model::empty(self.data.p)
    }
}

/// Chain position with an incrementally maintained Cholesky factor of the
/// selected Gram block.
#[derive(Clone, Debug)]
pub struct ModelState<'a> {
    target: &'a VarSelTarget,
    delta: Model,
    /// Variables in factor order.
    active: Vec<usize>,
    /// Lower-triangular factor, row `i` holds `i + 1` entries.
    l: Vec<Vec<f64>>,
    /// `L w = X_active' y`.
    w: Vec<f64>,
    singular: bool,
    log_pi: f64,
    updates: usize,
}

impl<'a> ModelState<'a> {
    pub fn new(target: &'a VarSelTarget, delta: &Model) -> Self {
        let mut st = ModelState {
            target,
            delta: Model::empty(target.data.p),
            active: Vec::new(),
            l: Vec::new(),
            w: Vec::new(),
            singular: false,
            log_pi: 0.0,
            updates: 0,
        };
        st.rebuild(&delta.support());
        st
    }

    fn data(&self) -> &'a VarSelData {
        &self.target.data
    }

    pub fn model(&self) -> &Model {
        &self.delta
    }

    pub fn r_squared(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum::<f64>() / self.data().yty
    }

    fn rebuild(&mut self, support: &[usize]) {
        let p = self.data().p;
        self.delta = Model::empty(p);
        self.active.clear();
        self.l.clear();
        self.w.clear();
        self.singular = false;
        self.updates = 0;
        for &j in support {
            self.delta.0[j] = true;
            if !self.singular && !self.push_column(j) {
                self.singular = true;
            }
        }
        if self.singular {
            self.active = support.to_vec();
        }
        self.refresh_log_pi();
    }

    fn refresh_log_pi(&mut self) {
        let k = self.delta.size();
        self.log_pi = if self.singular {
            f64::NEG_INFINITY
        } else {
            log_posterior_from_r2(self.data(), &self.target.hyper, k, self.r_squared())
        };
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        for i in 0..b.len() {
            let row = &self.l[i];
            let mut s = b[i];
            for c in 0..i {
                s -= row[c] * x[c];
            }
            x[i] = s / row[i];
        }
        x
    }

    fn max_diag(&self) -> f64 {
        self.active.iter().map(|&a| self.data().g(a, a)).fold(0.0, f64::max)
    }

    /// Extend the factor with column `j`; false when the pivot is too small.
    fn push_column(&mut self, j: usize) -> bool {
        let d = self.data();
        let b: Vec<f64> = self.active.iter().map(|&a| d.g(a, j)).collect();
        let lrow = self.forward(&b);
        let d2 = d.g(j, j) - lrow.iter().map(|v| v * v).sum::<f64>();
        if d2 <= PIVOT_TOL * self.max_diag().max(d.g(j, j)) {
            return false;
        }
        let piv = d2.sqrt();
        let wj = (d.xty[j] - lrow.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>()) / piv;
        let mut row = lrow;
        row.push(piv);
        self.l.push(row);
        self.active.push(j);
        self.w.push(wj);
        true
    }

    /// Delete factor position `pos` with a rank-one update of the trailing block.
    fn remove_position(&mut self, pos: usize) {
        self.l.remove(pos);
        self.active.remove(pos);
        let m = self.l.len() - pos;
        let mut x: Vec<f64> = (pos..self.l.len()).map(|r| self.l[r].remove(pos)).collect();
        for a in 0..m {
            let ra = pos + a;
            let laa = self.l[ra][ra];
            let r = laa.hypot(x[a]);
            let c = r / laa;
            let s = x[a] / laa;
            self.l[ra][ra] = r;
            for b in (a + 1)..m {
                let rb = pos + b;
                let v = (self.l[rb][ra] + s * x[b]) / c;
                self.l[rb][ra] = v;
                x[b] = c * x[b] - s * v;
            }
        }
        let bvec: Vec<f64> = self.active.iter().map(|&a| self.data().xty[a]).collect();
        self.w = self.forward(&bvec);
    }

    fn add(&mut self, j: usize) {
        self.delta.0[j] = true;
        if self.singular || !self.push_column(j) {
            let s = self.delta.support();
            self.rebuild(&s);
        }
    }

    fn drop_var(&mut self, j: usize) {
        self.delta.0[j] = false;
        if self.singular {
            let s = self.delta.support();
            self.rebuild(&s);
            return;
        }
        let pos = self.active.iter().position(|&a| a == j).expect("variable is active");
        self.remove_position(pos);
    }

    /// Apply a move and refresh `log_pi`.
    pub fn update(&mut self, mv: Move) {
        match mv {
            Move::Add(j) => self.add(j),
            Move::Drop(j) => self.drop_var(j),
            Move::Swap { drop, add } => {
                self.drop_var(drop);
                self.add(add);
            }
        }
        self.updates += 1;
        if self.updates >= REFRESH_EVERY {
            let s = self.delta.support();
            self.rebuild(&s);
        }
        self.refresh_log_pi();
    }

    fn hyper(&self) -> &VarSelHyper {
        &self.target.hyper
    }

    fn size_allowed(&self, k: usize) -> bool {
        k <= self.data().n && self.hyper().s_max.is_none_or(|s| k <= s)
    }

    /// Inverse of the lower factor, row-major dense.
    fn l_inverse(&self) -> Vec<Vec<f64>> {
        let k = self.l.len();
        let mut inv = vec![vec![0.0; k]; k];
        for c in 0..k {
            let mut e = vec![0.0; k];
            e[c] = 1.0;
            let col = self.forward(&e);
            for r in 0..k {
                inv[r][c] = col[r];
            }
        }
        inv
    }

    /// `r^2` after adding `j`, given `L^{-1}`; `None` when singular.
    fn r2_after_add(&self, linv: &[Vec<f64>], j: usize) -> Option<f64> {
        let d = self.data();
        let k = self.active.len();
        let b: Vec<f64> = self.active.iter().map(|&a| d.g(a, j)).collect();
        let mut lrow = vec![0.0; k];
        for r in 0..k {
            lrow[r] = (0..=r).map(|c| linv[r][c] * b[c]).sum();
        }
        let d2 = d.g(j, j) - lrow.iter().map(|v| v * v).sum::<f64>();
        if d2 <= PIVOT_TOL * self.max_diag().max(d.g(j, j)) {
            return None;
        }
        let wj = (d.xty[j] - lrow.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>()) / d2.sqrt();
        Some(self.r_squared() + wj * wj / d.yty)
    }

    fn all_neighbor_log_pis(&self) -> Vec<f64> {
        let moves = neighbor_moves(&self.delta.0, self.target.nbhd);
        if self.singular {
            return moves
                .iter()
                .map(|mv| {
                    let mut y = self.delta.clone();
                    mv.apply_to(&mut y);
                    log_posterior(self.data(), self.hyper(), &y)
                })
                .collect();
        }
        let data = self.data();
        let k = self.active.len();
        let linv = self.l_inverse();
        // beta = L^{-T} w and diag of G^{-1}
        let mut beta = vec![0.0; k];
        let mut ginv_diag = vec![0.0; k];
        for i in 0..k {
            beta[i] = (i..k).map(|r| linv[r][i] * self.w[r]).sum();
            ginv_diag[i] = (i..k).map(|r| linv[r][i] * linv[r][i]).sum();
        }
        let r2 = self.r_squared();
        let mut out = Vec::with_capacity(moves.len());
        let mut swap_cache: Option<(usize, ModelState<'a>, Vec<Vec<f64>>)> = None;
        for mv in moves {
            let v = match mv {
                Move::Drop(j) => {
                    let pos = self.active.iter().position(|&a| a == j).unwrap();
                    let r2n = r2 - beta[pos] * beta[pos] / (ginv_diag[pos] * data.yty);
                    log_posterior_from_r2(data, self.hyper(), k - 1, r2n)
                }
                Move::Add(j) => {
                    if !self.size_allowed(k + 1) {
                        f64::NEG_INFINITY
                    } else {
                        match self.r2_after_add(&linv, j) {
                            Some(r2n) => log_posterior_from_r2(data, self.hyper(), k + 1, r2n),
                            None => f64::NEG_INFINITY,
                        }
                    }
                }
                Move::Swap { drop, add } => {
                    if !self.size_allowed(k) {
                        f64::NEG_INFINITY
                    } else {
                        if swap_cache.as_ref().is_none_or(|(d, _, _)| *d != drop) {
                            let mut reduced = self.clone();
                            reduced.drop_var(drop);
                            let li = reduced.l_inverse();
                            swap_cache = Some((drop, reduced, li));
                        }
                        let (_, reduced, li) = swap_cache.as_ref().unwrap();
                        match reduced.r2_after_add(li, add) {
                            Some(r2n) => log_posterior_from_r2(data, self.hyper(), k, r2n),
                            None => f64::NEG_INFINITY,
                        }
                    }
                }
            };
            out.push(v);
        }
        out
    }
}

impl ChainState for ModelState<'_> {
    type Key = Model;

    fn key(&self) -> Model {
        self.delta.clone()
    }

    fn log_pi(&self) -> f64 {
        self.log_pi
    }

    fn num_neighbors(&self) -> usize {
        neighborhood_size(self.data().p, self.delta.size(), self.target.nbhd)
    }

    fn neighbor_log_pi(&self, k: usize) -> f64 {
        let mv = neighbor_moves(&self.delta.0, self.target.nbhd)[k];
        let new_k = match mv {
            Move::Add(_) => self.delta.size() + 1,
            Move::Drop(_) => self.delta.size() - 1,
            Move::Swap { .. } => self.delta.size(),
        };
        if !self.size_allowed(new_k) {
            return f64::NEG_INFINITY;
        }
        let mut y = self.clone();
        y.update(mv);
        y.log_pi
    }

    fn neighbor_log_pis(&self) -> Vec<f64> {
        self.all_neighbor_log_pis()
    }

    fn neighbor_degree(&self, k: usize) -> usize {
        let p = self.data().p;
        let new_k = match neighbor_moves(&self.delta.0, self.target.nbhd)[k] {
            Move::Add(_) => self.delta.size() + 1,
            Move::Drop(_) => self.delta.size() - 1,
            Move::Swap { .. } => self.delta.size(),
        };
        neighborhood_size(p, new_k, self.target.nbhd)
    }

    fn apply(&mut self, k: usize) {
        let mv = neighbor_moves(&self.delta.0, self.target.nbhd)[k];
        self.update(mv);
    }
}

/// `sqrt(log p / n) * (8, -12, 8, 8, -12)` on the first five coordinates.
pub fn true_beta(p: usize, n: usize) -> Vec<f64> {
    let scale = ((p as f64).ln() / n as f64).sqrt();
    let mut b = vec![0.0; p];
    for (i, c) in [8.0, -12.0, 8.0, 8.0, -12.0].iter().enumerate() {
        b[i] = scale * c;
    }
    b
}

/// Simulate `X` with Gaussian rows and `y = X beta* + z`, keeping sufficient statistics.
pub fn generate_data<R: Rng>(p: usize, n: usize, cov: Covariance, seed: Option<u64>, rng: &mut R) -> (VarSelData, Model) {
    assert!(p >= 5 && n >= 5, "generate_data needs p, n >= 5");
    let sigma = DMatrix::from_fn(p, p, |j, k| cov.entry(j, k));
    let chol = sigma.cholesky().expect("covariance is positive definite").l();
    let beta = true_beta(p, n);
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut yty = 0.0;
    let mut z = DVector::<f64>::zeros(p);
    for _ in 0..n {
        for j in 0..p {
            z[j] = StandardNormal.sample(rng);
        }
        let x = &chol * &z;
        let e: f64 = StandardNormal.sample(rng);
        let y = (0..5).map(|j| x[j] * beta[j]).sum::<f64>() + e;
        gram.ger(1.0, &x, &x, 1.0);
        xty.axpy(y, &x, 1.0);
        yty += y * y;
    }
    let mut g = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            g.push(0.5 * (gram[(i, j)] + gram[(j, i)]));
        }
    }
    let data = VarSelData { p, n, gram: g, xty: xty.iter().copied().collect(), yty, seed, covariance: Some(cov) };
    (data, Model::from_support(p, &[0, 1, 2, 3, 4]))
}

/// Build sufficient statistics directly from a Gram matrix and a response
/// `y = X beta + z` with `X'z = 0` and `|z|^2 = noise_sq`.
pub fn gram_target(gram: &DMatrix<f64>, beta: &[f64], noise_sq: f64, n: usize) -> Result<VarSelData> {
    let p = gram.nrows();
    if gram.ncols() != p || beta.len() != p {
        return Err(Error::Config("gram must be square and match beta".into()));
    }
    let sym = (gram + gram.transpose()) * 0.5;
    let scale = (0..p).map(|i| sym[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v < -1e-10 * scale) {
        return Err(Error::InvalidGram);
    }
    let b = DVector::from_column_slice(beta);
    let xty = &sym * &b;
    let yty = b.dot(&xty) + noise_sq;
    let mut g = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            g.push(sym[(i, j)]);
        }
    }
    Ok(VarSelData { p, n, gram: g, xty: xty.iter().copied().collect(), yty, seed: None, covariance: None })
}

/// The three-variable correlated design with `n = 1000`.
pub fn example3_data() -> VarSelData {
    let n = 1000usize;
    let nf = n as f64;
    let gram = DMatrix::from_row_slice(3, 3, &[1.0, -0.8, 0.9, -0.8, 1.0, -0.6, 0.9, -0.6, 1.0]) * nf;
    gram_target(&gram, &[1.25, 1.0, 0.0], nf, n).expect("fixture gram is positive definite")
}

/// `g = 27`, `kappa = 1` for the three-variable design.
pub fn example3_hyper(s_max: Option<usize>) -> VarSelHyper {
    VarSelHyper { g: 27.0, kappa: 1.0, s_max }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitScheme {
    Empty,
    /// Uniform over models with exactly `m` variables.
    UniformDelta { m: usize },
    /// `false_positives` random nulls plus the whole truth.
    Good { false_positives: usize },
    /// `false_positives` random nulls and none of the truth.
    Bad { false_positives: usize },
}

pub fn init_model<R: Rng>(scheme: InitScheme, truth: &Model, rng: &mut R) -> Result<Model> {
    let p = truth.0.len();
    match scheme {
        InitScheme::Empty => Ok(Model::empty(p)),
        InitScheme::UniformDelta { m } => {
            if m > p {
                return Err(Error::InvalidInit(format!("m = {m} exceeds p = {p}")));
            }
            Ok(Model::from_support(p, &sample(rng, p, m).into_vec()))
        }
        InitScheme::Good { false_positives } | InitScheme::Bad { false_positives } => {
            let nulls: Vec<usize> = (0..p).filter(|&j| !truth.0[j]).collect();
            if false_positives > nulls.len() {
                return Err(Error::InvalidInit(format!(
                    "{false_positives} false positives requested, {} null variables available",
                    nulls.len()
                )));
            }
            let mut m = Model::empty(p);
            for i in sample(rng, nulls.len(), false_positives) {
                m.0[nulls[i]] = true;
            }
            if matches!(scheme, InitScheme::Good { .. }) {
                for j in truth.support() {
                    m.0[j] = true;
                }
            }
            Ok(m)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn ex3() -> VarSelTarget {
        VarSelTarget::new(example3_data(), example3_hyper(None), Neighborhood::N1)
    }

    #[test]
    fn example3_sufficient_statistics() {
        let d = example3_data();
        assert!((d.yty - 1562.5).abs() < 1e-9);
        assert!((d.xty[0] - 450.0).abs() < 1e-9);
        assert!(d.xty[1].abs() < 1e-9);
        assert!((d.xty[2] - 525.0).abs() < 1e-9);
    }

    #[test]
    fn r_squared_examples() {
        let d = example3_data();
        assert!((1.0 - r_squared(&d, &Model::from_bits("100")).unwrap() - 0.8704).abs() < 1e-12);
        assert!((1.0 - r_squared(&d, &Model::from_bits("111")).unwrap() - 0.64).abs() < 1e-12);
        assert_eq!(r_squared(&d, &Model::from_bits("000")).unwrap(), 0.0);
    }

    #[test]
    fn oversize_model_is_excluded() {
        let mut d = example3_data();
        d.n = 2;
        assert_eq!(log_posterior(&d, &example3_hyper(None), &Model::from_bits("111")), f64::NEG_INFINITY);
        let d = example3_data();
        assert_eq!(log_posterior(&d, &example3_hyper(Some(2)), &Model::from_bits("111")), f64::NEG_INFINITY);
    }

    #[test]
    fn neighbor_counts() {
        assert_eq!(neighbor_moves(&[false; 3], Neighborhood::N1).len(), 3);
        assert_eq!(neighbor_moves(&[true, false, false], Neighborhood::Ads).len(), 5);
    }

    #[test]
    fn penalty_is_monotone_in_size() {
        let d = example3_data();
        let h = example3_hyper(None);
        let a = log_posterior_from_r2(&d, &h, 1, 0.3);
        let b = log_posterior_from_r2(&d, &h, 2, 0.3);
        assert!(b < a);
    }

    #[test]
    fn incremental_matches_fresh_on_example3() {
        let t = ex3();
        for bits in ["000", "100", "010", "001", "110", "101", "011", "111"] {
            let m = Model::from_bits(bits);
            let st = t.state(&m);
            assert!((st.log_pi() - t.log_pi(&m)).abs() < 1e-9, "{bits}");
            let fast = st.neighbor_log_pis();
            for (k, y) in t.neighbors(&m).iter().enumerate() {
                assert!((fast[k] - t.log_pi(y)).abs() < 1e-9, "{bits} -> {y}");
            }
        }
    }

    #[test]
    fn add_then_drop_restores() {
        let mut rng = seeded(9);
        let (data, _) = generate_data(12, 60, Covariance::High, None, &mut rng);
        let t = VarSelTarget::new(data, VarSelHyper::default_for(12), Neighborhood::Ads);
        let m = Model::from_support(12, &[1, 4, 7]);
        let mut st = t.state(&m);
        let before = st.log_pi();
        st.update(Move::Add(9));
        st.update(Move::Drop(9));
        assert!((st.log_pi() - before).abs() < 1e-9);
        let mut a = t.state(&m);
        a.update(Move::Swap { drop: 4, add: 10 });
        let mut b = t.state(&m);
        b.update(Move::Drop(4));
        b.update(Move::Add(10));
        assert_eq!(a.log_pi(), b.log_pi());
    }

    #[test]
    fn collinear_column_is_singular() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let d = gram_target(&g, &[1.0, 0.0], 1.0, 10).unwrap();
        assert_eq!(r_squared(&d, &Model::from_bits("11")), Err(Error::SingularModel));
        let t = VarSelTarget::new(d, VarSelHyper::default_for(2), Neighborhood::N1);
        let st = t.state(&Model::from_bits("10"));
        assert_eq!(st.neighbor_log_pis()[1], f64::NEG_INFINITY);
    }

    #[test]
    fn indefinite_gram_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(gram_target(&g, &[1.0, 0.0], 1.0, 10), Err(Error::InvalidGram));
    }

    #[test]
    fn null_response_makes_empty_model_the_mode() {
        let g = DMatrix::<f64>::identity(3, 3) * 50.0;
        let d = gram_target(&g, &[0.0; 3], 50.0, 50).unwrap();
        let h = VarSelHyper::default_for(3);
        let e = log_posterior(&d, &h, &Model::empty(3));
        for bits in ["100", "010", "001", "110", "111"] {
            assert!(log_posterior(&d, &h, &Model::from_bits(bits)) < e);
        }
    }

    #[test]
    fn init_schemes() {
        let mut rng = seeded(4);
        let truth = Model::from_support(80, &[0, 1, 2, 3, 4]);
        let good = init_model(InitScheme::Good { false_positives: 50 }, &truth, &mut rng).unwrap();
        let bad = init_model(InitScheme::Bad { false_positives: 50 }, &truth, &mut rng).unwrap();
        assert_eq!(good.size(), 55);
        assert_eq!(bad.size(), 50);
        assert!(bad.support().iter().all(|&j| j >= 5));
        assert_eq!(init_model(InitScheme::UniformDelta { m: 0 }, &truth, &mut rng).unwrap(), Model::empty(80));
        assert!(init_model(InitScheme::UniformDelta { m: 81 }, &truth, &mut rng).is_err());
        for _ in 0..20 {
            assert_eq!(init_model(InitScheme::UniformDelta { m: 7 }, &truth, &mut rng).unwrap().size(), 7);
        }
    }

    #[test]
    fn generated_design_has_unit_diagonal_covariance() {
        let mut rng = seeded(12);
        let (d, truth) = generate_data(6, 10_000, Covariance::Moderate, Some(12), &mut rng);
        assert_eq!(truth.support(), vec![0, 1, 2, 3, 4]);
        for j in 0..6 {
            for k in 0..6 {
                let emp = d.g(j, k) / 10_000.0;
                assert!((emp - Covariance::Moderate.entry(j, k)).abs() < 0.05, "({j},{k}) {emp}");
            }
        }
        assert_eq!(true_beta(6, 10_000).iter().filter(|&&b| b != 0.0).count(), 5);
    }
}
