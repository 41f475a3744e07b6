//! Exact dense analysis of enumerable chains.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::logspace::{log_add, log_sum_exp};
use crate::samplers::{log_transition, Family, KernelSpec};
use crate::space::{Enumeration, NeighborhoodStats, ENUMERABLE_CAP};

/// Transition matrix of a kernel on an enumerated space.
#[derive(Clone, Debug)]
pub struct DenseChain {
    pub labels: Vec<String>,
    /// Normalized `log pi`.
    pub log_pi: Vec<f64>,
    pub pi: Vec<f64>,
    /// Off-diagonal `(y, log P(x, y))` per row, ascending in `y`, zero entries omitted.
    pub log_off: Vec<Vec<(usize, f64)>>,
    pub diag: Vec<f64>,
    /// Enumerated neighbors and full neighborhood sizes.
    pub adj: Vec<Vec<usize>>,
    pub degree: Vec<usize>,
    pub spec: KernelSpec,
}

/// `log Z(x)` including neighbors outside the support, which carry weight `ell`.
pub fn log_normalizer(spec: &KernelSpec, lp_x: f64, nbr_lp: &[f64], degree: usize) -> f64 {
    let mut z = log_sum_exp(&nbr_lp.iter().map(|&l| spec.log_h(l - lp_x)).collect::<Vec<_>>());
    let missing = degree - nbr_lp.len();
    if missing > 0 {
        z = log_add(z, spec.ell.ln() + (missing as f64).ln());
    }
    z
}

pub fn build_transition_matrix<S>(en: &Enumeration<S>, spec: &KernelSpec) -> Result<DenseChain>
where
    S: Clone + Eq + Hash + Ord + Display,
{
    spec.validate()?;
    let n = en.len();
    if n > ENUMERABLE_CAP {
        return Err(Error::CapExceeded { cap: ENUMERABLE_CAP });
    }
    let log_z: Vec<f64> = (0..n)
        .map(|x| match spec.family {
            Family::RandomWalk => 0.0,
            Family::Informed => {
                let nl: Vec<f64> = en.neighbors[x].iter().map(|&y| en.log_pi[y]).collect();
                log_normalizer(spec, en.log_pi[x], &nl, en.degree[x])
            }
        })
        .collect();
    let half = if spec.lazy { -std::f64::consts::LN_2 } else { 0.0 };
    let mut log_off = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    for x in 0..n {
        let mut row = Vec::with_capacity(en.neighbors[x].len());
        let mut out = 0.0;
        for &y in &en.neighbors[x] {
            let l = log_transition(
                spec,
                en.log_pi[x],
                en.log_pi[y],
                en.degree[x],
                en.degree[y],
                log_z[x],
                log_z[y],
            ) + half;
            if l > f64::NEG_INFINITY {
                out += l.exp();
                row.push((y, l));
            }
        }
        diag.push((1.0 - out).max(0.0));
        log_off.push(row);
    }
    let log_pi = en.log_pi_normalized();
    let pi = log_pi.iter().map(|l| l.exp()).collect();
    Ok(DenseChain {
        labels: en.labels(),
        log_pi,
        pi,
        log_off,
        diag,
        adj: en.neighbors.clone(),
        degree: en.degree.clone(),
        spec: *spec,
    })
}

impl DenseChain {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn is_lazy(&self) -> bool {
        self.spec.lazy
    }

    /// `(P + I) / 2`.
    pub fn lazy(&self) -> DenseChain {
        if self.spec.lazy {
            return self.clone();
        }
        let mut c = self.clone();
        for row in &mut c.log_off {
            for e in row.iter_mut() {
                e.1 -= std::f64::consts::LN_2;
            }
        }
        for d in &mut c.diag {
            *d = 0.5 * (1.0 + *d);
        }
        c.spec.lazy = true;
        c
    }

    pub fn log_p(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return self.diag[x].ln();
        }
        match self.log_off[x].binary_search_by_key(&y, |e| e.0) {
            Ok(i) => self.log_off[x][i].1,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.log_p(x, y).exp()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for x in 0..n {
            m[(x, x)] = self.diag[x];
            for &(y, l) in &self.log_off[x] {
                m[(x, y)] = l.exp();
            }
        }
        m
    }

    /// One step of the distribution `v -> v P`.
    pub fn push_forward(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        for (x, row) in self.log_off.iter().enumerate() {
            if v[x] == 0.0 {
                continue;
            }
            for &(y, l) in row {
                out[y] += v[x] * l.exp();
            }
        }
        out
    }

    /// Largest violations of row sums, stationarity and detailed balance.
    pub fn invariant_errors(&self) -> InvariantErrors {
        let n = self.len();
        let mut row_sum: f64 = 0.0;
        for x in 0..n {
            let s = self.diag[x] + self.log_off[x].iter().map(|e| e.1.exp()).sum::<f64>();
            row_sum = row_sum.max((s - 1.0).abs());
        }
        let pp = self.push_forward(&self.pi);
        let stationarity = pp.iter().zip(&self.pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut balance: f64 = 0.0;
        for x in 0..n {
            for &(y, l) in &self.log_off[x] {
                let fwd = self.log_pi[x] + l;
                let bwd = self.log_pi[y] + self.log_p(y, x);
                balance = balance.max(if bwd == f64::NEG_INFINITY { f64::INFINITY } else { (fwd - bwd).exp_m1().abs() });
            }
        }
        InvariantErrors { row_sum, stationarity, detailed_balance: balance }
    }

    pub fn check_invariants(&self) -> Result<()> {
        let e = self.invariant_errors();
        if e.row_sum > 1e-12 || e.stationarity > 1e-10 {
            return Err(Error::NotReversible(format!(
                "row sum error {:.3e}, stationarity error {:.3e}",
                e.row_sum, e.stationarity
            )));
        }
        if e.detailed_balance > 1e-12 {
            return Err(Error::NotReversible(format!("detailed balance error {:.3e}", e.detailed_balance)));
        }
        Ok(())
    }

    /// `D^{1/2} P D^{-1/2}`, symmetrized.
    fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut s = DMatrix::zeros(n, n);
        for x in 0..n {
            s[(x, x)] = self.diag[x];
            for &(y, l) in &self.log_off[x] {
                s[(x, y)] += 0.5 * (0.5 * (self.log_pi[x] - self.log_pi[y]) + l).exp();
                s[(y, x)] += 0.5 * (0.5 * (self.log_pi[x] - self.log_pi[y]) + l).exp();
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InvariantErrors {
    pub row_sum: f64,
    pub stationarity: f64,
    pub detailed_balance: f64,
}

/// One entry of the theorem-bound map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundEntry {
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inapplicable: Option<String>,
}

impl BoundEntry {
    pub fn value(v: f64) -> Self {
        BoundEntry { value: Some(v), inapplicable: None }
    }

    pub fn inapplicable(why: impl Into<String>) -> Self {
        BoundEntry { value: None, inapplicable: Some(why.into()) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub gap: f64,
    pub rayleigh_gap: f64,
    pub lambda2: f64,
    pub lambda_min: f64,
    pub relaxation_time: f64,
    pub restricted_gap: Option<f64>,
    pub max_residual: f64,
    pub theorem_bounds: BTreeMap<String, BoundEntry>,
}

pub fn spectral_gap(chain: &DenseChain) -> Result<GapReport> {
    if chain.len() < 2 {
        return Err(Error::DegenerateSpace);
    }
    let e = chain.invariant_errors();
    if e.detailed_balance > 1e-9 {
        return Err(Error::NotReversible(format!("detailed balance error {:.3e}", e.detailed_balance)));
    }
    let s = chain.symmetrized();
    let norm = s.norm();
    let eig = s.clone().symmetric_eigen();
    let mut max_residual: f64 = 0.0;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        max_residual = max_residual.max((&s * v - v * lam).norm());
    }
    if max_residual > 1e-9 * norm.max(1.0) {
        return Err(Error::NotReversible(format!("eigensolve residual {max_residual:.3e}")));
    }
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let lambda2 = ev[1];
    let lambda_min = *ev.last().unwrap();
    let gap = 1.0 - lambda2.max(lambda_min.abs());
    Ok(GapReport {
        gap,
        rayleigh_gap: 1.0 - lambda2,
        lambda2,
        lambda_min,
        relaxation_time: 1.0 / gap,
        restricted_gap: None,
        max_residual,
        theorem_bounds: BTreeMap::new(),
    })
}

/// Infimum over non-constant `f` of
/// `sum_{x,y in X0} (f(x)-f(y))^2 P(x,y) pi(x) / sum_{x,y in X0} (f(x)-f(y))^2 pi(x) pi(y)`.
pub fn restricted_gap(chain: &DenseChain, x0: &[usize]) -> Result<f64> {
    let mut dom = x0.to_vec();
    dom.sort_unstable();
    dom.dedup();
    let k = dom.len();
    if k < 2 {
        return Err(Error::DegenerateRestriction);
    }
    let pos: BTreeMap<usize, usize> = dom.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    // Dirichlet form in g = sqrt(pi) f coordinates.
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (i, &x) in dom.iter().enumerate() {
        for &(y, l) in &chain.log_off[x] {
            if let Some(&j) = pos.get(&y) {
                let v = (0.5 * (chain.log_pi[x] - chain.log_pi[y]) + l).exp();
                a[(i, i)] += l.exp();
                a[(i, j)] -= 0.5 * v;
                a[(j, i)] -= 0.5 * v;
            }
        }
    }
    let mass: f64 = dom.iter().map(|&x| chain.pi[x]).sum();
    if mass <= 0.0 {
        return Err(Error::DegenerateRestriction);
    }
    // Householder reflector taking sqrt(pi)/|sqrt(pi)| to e_0.
    let mut s = DVector::from_iterator(k, dom.iter().map(|&x| chain.pi[x].sqrt()));
    s /= s.norm();
    let mut u = s.clone();
    u[0] -= 1.0;
    let un = u.norm();
    let h = if un < 1e-15 {
        DMatrix::identity(k, k)
    } else {
        u /= un;
        DMatrix::identity(k, k) - (&u * u.transpose()) * 2.0
    };
    let b = &h * &a * &h;
    let sub = b.view((1, 1), (k - 1, k - 1)).into_owned();
    let sub = (&sub + sub.transpose()) * 0.5;
    let lam = sub.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(lam / mass)
}

/// `||P^t(x, .) - pi||_TV` for `t = 0..=t_max`.
pub fn tv_curve(chain: &DenseChain, init: usize, t_max: usize) -> Vec<f64> {
    let mut v = vec![0.0; chain.len()];
    v[init] = 1.0;
    let mut out = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        out.push(tv(&v, &chain.pi));
        if t < t_max {
            v = chain.push_forward(&v);
        }
    }
    out
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// First `t` with `TV <= eps` on a precomputed curve.
pub fn mixing_time_from_curve(curve: &[f64], eps: f64) -> Option<usize> {
    curve.iter().position(|&d| d <= eps)
}

/// `tau_x(eps)`, iterating until the distance drops to `eps` or `t_max` is reached.
pub fn mixing_time(chain: &DenseChain, init: usize, eps: f64, t_max: usize) -> Option<usize> {
    let mut v = vec![0.0; chain.len()];
    v[init] = 1.0;
    for t in 0..=t_max {
        if tv(&v, &chain.pi) <= eps {
            return Some(t);
        }
        v = chain.push_forward(&v);
    }
    None
}

/// `max_x tau_x(eps)`.
pub fn worst_mixing_time(chain: &DenseChain, eps: f64, t_max: usize) -> Option<usize> {
    let mut worst = 0;
    for x in 0..chain.len() {
        worst = worst.max(mixing_time(chain, x, eps, t_max)?);
    }
    Some(worst)
}

/// Expected hitting times of `target` from every state.
pub fn expected_hitting_time(chain: &DenseChain, target: usize) -> Result<Vec<f64>> {
    let n = chain.len();
    let others: Vec<usize> = (0..n).filter(|&x| x != target).collect();
    let idx: BTreeMap<usize, usize> = others.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let m = others.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    for (i, &x) in others.iter().enumerate() {
        a[(i, i)] -= chain.diag[x];
        for &(y, l) in &chain.log_off[x] {
            if let Some(&j) = idx.get(&y) {
                a[(i, j)] -= l.exp();
            }
        }
    }
    let rhs = DVector::from_element(m, 1.0);
    let h = a.lu().solve(&rhs).ok_or(Error::NotIrreducible)?;
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NotIrreducible);
    }
    let mut out = vec![0.0; n];
    for (i, &x) in others.iter().enumerate() {
        out[x] = h[i];
    }
    Ok(out)
}

/// `4 / (1 - rho^{-1/2})^3`.
pub fn c_rho(rho: f64) -> f64 {
    4.0 / (1.0 - rho.powf(-0.5)).powi(3)
}

/// Mass threshold `(eps^2 / (5 B^2))^{1 + 2/(m-2)}`; `m = inf` gives `eps^2 / (5 B^2)`.
pub fn mass_threshold(eps: f64, b: f64, m: f64) -> f64 {
    let base = eps * eps / (5.0 * b * b);
    if m.is_infinite() {
        base
    } else {
        base.powf(1.0 + 2.0 / (m - 2.0))
    }
}

/// Quantities describing a restriction to `X0`.
#[derive(Clone, Debug)]
pub struct RestrictionInputs {
    pub stats: NeighborhoodStats,
    /// `log pi(x0)`, normalized.
    pub log_pi_x0: f64,
    /// `pi(X0)`.
    pub mass: f64,
    /// `max log pi(x')/pi(x)` over `x in X0`, `x' in N(x) \ X0`.
    pub log_boundary_ratio: f64,
}

/// Inputs to [`theorem_bounds`].
#[derive(Clone, Debug)]
pub struct BoundInputs<'a> {
    pub stats: &'a NeighborhoodStats,
    pub spec: KernelSpec,
    /// Normalized `log pi_min`.
    pub log_pi_min: f64,
    pub epsilon: f64,
    /// Lower bound on `pi(x0)` for the warm-start bounds.
    pub eta: Option<f64>,
    pub restriction: Option<RestrictionInputs>,
}

fn clip_matches(spec: &KernelSpec, m: usize, log_r: f64) -> std::result::Result<f64, String> {
    let mf = m as f64;
    if spec.family != Family::Informed {
        return Err("kernel is not informed".into());
    }
    if (spec.ell - mf).abs() > 1e-9 * mf {
        return Err(format!("ell = {} differs from M = {m}", spec.ell));
    }
    if !(spec.big_l > mf * mf) {
        return Err(format!("L = {} does not exceed M^2 = {}", spec.big_l, mf * mf));
    }
    if spec.big_l.ln() > log_r + 1e-12 {
        return Err(format!("L = {} exceeds R = {:.6e}", spec.big_l, log_r.exp()));
    }
    Ok(spec.big_l / (mf * mf))
}

/// Named bound values; each entry carries its failed hypothesis when inapplicable.
pub fn theorem_bounds(inp: &BoundInputs<'_>) -> BTreeMap<String, BoundEntry> {
    let mut out = BTreeMap::new();
    let st = inp.stats;
    let m = st.m as f64;
    let eps = inp.epsilon;
    let log_inv_eps_pimin = -eps.ln() - inp.log_pi_min;
    let rho = st.rho();

    if st.log_rho() > 0.0 {
        let c = c_rho(rho);
        out.insert("c_rho".into(), BoundEntry::value(c));
        out.insert("thm1.relaxation".into(), BoundEntry::value(c * m));
        out.insert("thm1.mode_mass".into(), BoundEntry::value(-(-st.log_rho()).exp_m1()));
        out.insert("thm1.mixing".into(), BoundEntry::value(c * m * log_inv_eps_pimin));
    } else {
        let why = format!("rho = {rho:.6e} is not above 1");
        for k in ["c_rho", "thm1.relaxation", "thm1.mode_mass", "thm1.mixing"] {
            out.insert(k.into(), BoundEntry::inapplicable(why.clone()));
        }
    }

    match clip_matches(&inp.spec, st.m, st.log_r) {
        Ok(rt) => {
            let c = 2.0 * c_rho(rt);
            out.insert("thm2.relaxation".into(), BoundEntry::value(c));
            out.insert("thm2.mixing".into(), BoundEntry::value(c * log_inv_eps_pimin));
            let l = inp.spec.big_l;
            let log_lm = (l / m).ln();
            let log_inv_pimin = -inp.log_pi_min;
            out.insert(
                "thm3.mixing".into(),
                BoundEntry::value(4.0 * (2.0 * std::f64::consts::E / eps).ln() / log_lm * log_inv_pimin),
            );
            out.insert("thm3.side_condition".into(), BoundEntry::value(m * m * log_inv_pimin / (l * log_lm)));
            out.insert(
                "thm3.drift_rate".into(),
                BoundEntry::value(log_lm / (4.0 * log_inv_pimin) - (m * m / l) * (std::f64::consts::E - 1.0)),
            );
        }
        Err(why) => {
            for k in ["thm2.relaxation", "thm2.mixing", "thm3.mixing", "thm3.side_condition", "thm3.drift_rate"] {
                out.insert(k.into(), BoundEntry::inapplicable(why.clone()));
            }
        }
    }

    let warm: std::result::Result<(&RestrictionInputs, f64), String> = match (&inp.restriction, inp.eta) {
        (None, _) => Err("no restriction given".into()),
        (_, None) => Err("no eta given".into()),
        (Some(r), Some(eta)) => {
            if r.log_pi_x0 < eta.ln() - 1e-12 {
                Err(format!("pi(x0) = {:.6e} is below eta = {eta:.6e}", r.log_pi_x0.exp()))
            } else if r.mass < 1.0 - mass_threshold(eps, 1.0 / eta, f64::INFINITY) {
                Err(format!("pi(X0) = {:.12} is below 1 - eps^2 eta^2 / 5", r.mass))
            } else {
                Ok((r, eta))
            }
        }
    };
    match &warm {
        Ok((r, eta)) => {
            let log_term = (1.0 / (2.0 * eps * eps * eta * eta)).ln();
            if r.stats.log_rho() > 0.0 {
                out.insert("thm4.mixing".into(), BoundEntry::value(c_rho(r.stats.rho()) * m * log_term));
            } else {
                out.insert(
                    "thm4.mixing".into(),
                    BoundEntry::inapplicable(format!("restricted rho = {:.6e} is not above 1", r.stats.rho())),
                );
            }
            let thm5 = clip_matches(&inp.spec, st.m, r.stats.log_r).and_then(|rt| {
                let lim = (inp.spec.big_l / m).ln();
                if r.log_boundary_ratio < lim {
                    Ok(2.0 * c_rho(rt) * log_term)
                } else {
                    Err(format!(
                        "boundary ratio {:.6e} is not below L/M = {:.6e}",
                        r.log_boundary_ratio.exp(),
                        lim.exp()
                    ))
                }
            });
            out.insert(
                "thm5.mixing".into(),
                match thm5 {
                    Ok(v) => BoundEntry::value(v),
                    Err(why) => BoundEntry::inapplicable(why),
                },
            );
        }
        Err(why) => {
            out.insert("thm4.mixing".into(), BoundEntry::inapplicable(why.clone()));
            out.insert("thm5.mixing".into(), BoundEntry::inapplicable(why.clone()));
        }
    }
    out
}

/// Restriction inputs for `X0` and a start state `x0`.
pub fn restriction_inputs<S>(en: &Enumeration<S>, x0_set: &[usize], x0: usize) -> Result<RestrictionInputs>
where
    S: Clone + Eq + Hash + Ord + Display,
{
    let stats = crate::space::restricted_stats(en, x0_set)?;
    let lp = en.log_pi_normalized();
    let inside: std::collections::HashSet<usize> = x0_set.iter().copied().collect();
    let mass = x0_set.iter().map(|&x| lp[x].exp()).sum();
    let mut lb = f64::NEG_INFINITY;
    for &x in x0_set {
        for &y in &en.neighbors[x] {
            if !inside.contains(&y) {
                lb = lb.max(lp[y] - lp[x]);
            }
        }
    }
    Ok(RestrictionInputs { stats, log_pi_x0: lp[x0], mass, log_boundary_ratio: lb })
}
