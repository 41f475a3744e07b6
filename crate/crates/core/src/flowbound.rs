//! Multicommodity-flow congestion bounds and drift certificates on enumerable chains.
//!
//! The flow routes every pair `(x, x')` through the mode `x*`: a walk of the
//! absorbing chain `P_S` (moves restricted to neighbors at least `S` times more
//! likely) carries `x` up to `x*`, and a reversed walk carries `x*` down to `x'`.

use std::collections::HashMap;

use serde::Serialize;

use crate::diagnostics::{c_rho, restricted_gap, spectral_gap, DenseChain};
use crate::error::{Error, Result};
use crate::logspace::{log_add, log_sum_exp, LogAcc};
use crate::samplers::Family;

/// Path-enumeration cap before switching to dynamic programming.
pub const PATH_CAP: usize = 1_000_000;

/// Tolerance when comparing log ratios against `log S`.
const LOG_TOL: f64 = 1e-12;

/// The auxiliary absorbing chain `P_S` on a (possibly restricted) domain.
#[derive(Clone, Debug)]
pub struct FlowGraph {
    pub log_s: f64,
    pub x_star: usize,
    /// Domain states in increasing `pi` (a topological order of the uphill graph).
    pub order: Vec<usize>,
    pub in_domain: Vec<bool>,
    /// `(z', log P_S(z, z'))` over `N_S(z)`; empty for `x*` and states outside the domain.
    pub up: Vec<Vec<(usize, f64)>>,
    /// `log P(z, N_S(z))`.
    pub log_p_ns: Vec<f64>,
    /// Normalized over the full space.
    pub log_pi: Vec<f64>,
    pub labels: Vec<String>,
}

impl FlowGraph {
    pub fn s(&self) -> f64 {
        self.log_s.exp()
    }

    pub fn num_edges(&self) -> usize {
        self.up.iter().map(Vec::len).sum()
    }

    pub fn domain(&self) -> Vec<usize> {
        let mut d = self.order.clone();
        d.sort_unstable();
        d
    }
}

pub fn build_flow_graph(chain: &DenseChain, s: f64) -> Result<FlowGraph> {
    let all: Vec<usize> = (0..chain.len()).collect();
    build_on(chain, &all, s)
}

/// `P_S` with neighborhoods intersected with `x0`; `pi` stays normalized on the full space.
pub fn build_restricted_flow_graph(chain: &DenseChain, x0: &[usize], s: f64) -> Result<FlowGraph> {
    build_on(chain, x0, s)
}

fn build_on(chain: &DenseChain, domain: &[usize], s: f64) -> Result<FlowGraph> {
    if !(s > 1.0) {
        return Err(Error::BoundInapplicable(format!("S = {s} must exceed 1")));
    }
    let n = chain.len();
    let mut dom = domain.to_vec();
    dom.sort_unstable();
    dom.dedup();
    if dom.len() < 2 {
        return Err(Error::DegenerateSpace);
    }
    let mut in_domain = vec![false; n];
    for &x in &dom {
        in_domain[x] = true;
    }
    let mut x_star = dom[0];
    for &x in &dom {
        if chain.log_pi[x] > chain.log_pi[x_star] {
            x_star = x;
        }
    }
    let log_s = s.ln();
    let mut up = vec![Vec::new(); n];
    let mut log_p_ns = vec![f64::NEG_INFINITY; n];
    for &z in &dom {
        if z == x_star {
            continue;
        }
        let cand: Vec<(usize, f64)> = chain.log_off[z]
            .iter()
            .filter(|(y, _)| in_domain[*y] && chain.log_pi[*y] - chain.log_pi[z] >= log_s - LOG_TOL)
            .copied()
            .collect();
        if cand.is_empty() {
            return Err(Error::HypothesisViolated(format!(
                "{}: no neighbor at least S = {s:.6e} times more likely",
                chain.labels[z]
            )));
        }
        let tot = log_sum_exp(&cand.iter().map(|e| e.1).collect::<Vec<_>>());
        log_p_ns[z] = tot;
        up[z] = cand.into_iter().map(|(y, l)| (y, l - tot)).collect();
    }
    let mut order = dom.clone();
    order.sort_by(|&a, &b| chain.log_pi[a].total_cmp(&chain.log_pi[b]).then(a.cmp(&b)));
    Ok(FlowGraph { log_s, x_star, order, in_domain, up, log_p_ns, log_pi: chain.log_pi.clone(), labels: chain.labels.clone() })
}

/// All `P_S` paths from `x` to `x*` with their log probabilities, or `None` past `cap`.
pub fn up_paths(fg: &FlowGraph, x: usize, cap: usize) -> Option<Vec<(Vec<usize>, f64)>> {
    let mut out = Vec::new();
    let mut stack = vec![(vec![x], 0.0)];
    while let Some((path, lp)) = stack.pop() {
        let z = *path.last().unwrap();
        if z == fg.x_star {
            out.push((path, lp));
            if out.len() > cap {
                return None;
            }
            continue;
        }
        for &(y, l) in fg.up[z].iter().rev() {
            let mut p = path.clone();
            p.push(y);
            stack.push((p, lp + l));
        }
    }
    Some(out)
}

/// Paths from `x` to `x'` through `x*` with their log flow `log phi`.
pub fn enumerate_flow(fg: &FlowGraph, x: usize, xp: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    let a = up_paths(fg, x, PATH_CAP).ok_or(Error::CapExceeded { cap: PATH_CAP })?;
    let b = up_paths(fg, xp, PATH_CAP).ok_or(Error::CapExceeded { cap: PATH_CAP })?;
    if a.len().saturating_mul(b.len()) > PATH_CAP {
        return Err(Error::CapExceeded { cap: PATH_CAP });
    }
    let base = fg.log_pi[x] + fg.log_pi[xp];
    let mut out = Vec::with_capacity(a.len() * b.len());
    for (pa, la) in &a {
        for (pb, lb) in &b {
            let mut path = pa.clone();
            path.extend(pb.iter().rev().skip(1));
            out.push((path, base + la + lb));
        }
    }
    Ok(out)
}

/// `log w(e)` for the edge `{a, b}`: `-q log pi` of the lower endpoint.
pub fn log_weight(fg: &FlowGraph, q: f64, a: usize, b: usize) -> f64 {
    -q * fg.log_pi[a].min(fg.log_pi[b])
}

/// `|gamma|_w`.
pub fn path_length(fg: &FlowGraph, q: f64, path: &[usize]) -> f64 {
    path.windows(2).map(|e| log_weight(fg, q, e[0], e[1]).exp()).sum()
}

/// `(pi(x)^{-q} + pi(x')^{-q}) / (1 - S^{-q})`.
pub fn path_length_bound(fg: &FlowGraph, q: f64, x: usize, xp: usize) -> f64 {
    ((-q * fg.log_pi[x]).exp() + (-q * fg.log_pi[xp]).exp()) / (1.0 - (-q * fg.log_s).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMethod {
    Enumeration,
    DynamicProgram,
}

#[derive(Clone, Debug, Serialize)]
pub struct CongestionReport {
    pub s: f64,
    pub q: f64,
    pub a_exact: f64,
    /// Closed-form upper bound, present when `S > M`.
    pub a_closed_form: Option<f64>,
    pub gap_lower_bound: f64,
    pub method: FlowMethod,
    pub worst_edge: (String, String),
    pub restricted: bool,
}

/// Default weight exponent `log(S/M) / (2 log S)`, or `1/2` when `S <= M`.
pub fn default_q(log_s: f64, m: usize) -> (f64, bool) {
    let lm = (m as f64).ln();
    if log_s > lm {
        ((log_s - lm) / (2.0 * log_s), true)
    } else {
        (0.5, false)
    }
}

fn max_degree(chain: &DenseChain) -> usize {
    chain.degree.iter().copied().max().unwrap_or(0)
}

fn closed_form(fg: &FlowGraph, chain: &DenseChain) -> Option<f64> {
    let m = max_degree(chain) as f64;
    let log_sm = fg.log_s - m.ln();
    if log_sm <= 0.0 {
        return None;
    }
    let worst = fg
        .order
        .iter()
        .filter(|&&z| z != fg.x_star)
        .map(|&z| -fg.log_p_ns[z])
        .fold(f64::NEG_INFINITY, f64::max);
    Some(0.5 * c_rho(log_sm.exp()) * worst.exp())
}

/// Per directed edge `log(load)`, by explicit path pairs.
fn loads_by_enumeration(fg: &FlowGraph, q: f64) -> Result<HashMap<(usize, usize), f64>> {
    let mut paths = HashMap::new();
    let mut count = 0usize;
    for &x in &fg.order {
        let p = up_paths(fg, x, PATH_CAP).ok_or(Error::CapExceeded { cap: PATH_CAP })?;
        count = count.saturating_add(p.len());
        paths.insert(x, p);
    }
    if count.saturating_mul(count) > PATH_CAP {
        return Err(Error::CapExceeded { cap: PATH_CAP });
    }
    let mut acc: HashMap<(usize, usize), LogAcc> = HashMap::new();
    for &x in &fg.order {
        for &xp in &fg.order {
            if x == xp {
                continue;
            }
            for (pa, la) in &paths[&x] {
                for (pb, lb) in &paths[&xp] {
                    let mut path = pa.clone();
                    path.extend(pb.iter().rev().skip(1));
                    let lphi = fg.log_pi[x] + fg.log_pi[xp] + la + lb;
                    let term = lphi + path_length(fg, q, &path).ln();
                    for e in path.windows(2) {
                        acc.entry((e[0], e[1])).or_default().add(term);
                    }
                }
            }
        }
    }
    Ok(acc.into_iter().map(|(k, v)| (k, v.value())).collect())
}

/// Per uphill edge `log(load)` by forward/backward passes over the DAG; the
/// matching downhill edge carries the same load.
fn loads_by_dp(fg: &FlowGraph, q: f64) -> HashMap<(usize, usize), f64> {
    let n = fg.log_pi.len();
    let lw = |z: usize| -q * fg.log_pi[z];
    // expected w-length from z to x*
    let mut ll = vec![f64::NEG_INFINITY; n];
    for &z in fg.order.iter().rev() {
        if z == fg.x_star {
            continue;
        }
        let terms: Vec<f64> = fg.up[z].iter().map(|&(y, l)| l + log_add(lw(z), ll[y])).collect();
        ll[z] = log_sum_exp(&terms);
    }
    // leave-one-out sums over x' of pi(x') and pi(x') L(x')
    let d = &fg.order;
    let k = d.len();
    let a_terms: Vec<f64> = d.iter().map(|&x| fg.log_pi[x]).collect();
    let b_terms: Vec<f64> = d.iter().map(|&x| fg.log_pi[x] + ll[x]).collect();
    let loo = |t: &[f64]| -> Vec<f64> {
        let mut pre = vec![f64::NEG_INFINITY; k + 1];
        let mut suf = vec![f64::NEG_INFINITY; k + 1];
        for i in 0..k {
            pre[i + 1] = log_add(pre[i], t[i]);
        }
        for i in (0..k).rev() {
            suf[i] = log_add(suf[i + 1], t[i]);
        }
        (0..k).map(|i| log_add(pre[i], suf[i + 1])).collect()
    };
    let a_loo = loo(&a_terms);
    let b_loo = loo(&b_terms);

    let mut acc: Vec<Vec<LogAcc>> = fg.up.iter().map(|r| vec![LogAcc::default(); r.len()]).collect();
    let mut lu = vec![f64::NEG_INFINITY; n];
    let mut la = vec![f64::NEG_INFINITY; n];
    for (xi, &x) in d.iter().enumerate() {
        lu.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        la.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        lu[x] = 0.0;
        for &z in &d[xi..] {
            if lu[z] == f64::NEG_INFINITY || z == fg.x_star {
                continue;
            }
            for (ei, &(y, lps)) in fg.up[z].iter().enumerate() {
                lu[y] = log_add(lu[y], lu[z] + lps);
                la[y] = log_add(la[y], log_add(la[z] + lps, lu[z] + lps + lw(z)));
                let lt = lps + log_add(la[z], lu[z] + log_add(lw(z), ll[y]));
                let lun = lu[z] + lps;
                acc[z][ei].add(fg.log_pi[x] + lt + a_loo[xi]);
                acc[z][ei].add(fg.log_pi[x] + lun + b_loo[xi]);
            }
        }
    }
    let mut out = HashMap::new();
    for (z, row) in fg.up.iter().enumerate() {
        for (ei, &(y, _)) in row.iter().enumerate() {
            let v = acc[z][ei].value();
            out.insert((z, y), v);
            out.insert((y, z), v);
        }
    }
    out
}

fn congestion_from_loads(
    fg: &FlowGraph,
    chain: &DenseChain,
    q: f64,
    loads: &HashMap<(usize, usize), f64>,
) -> (f64, (usize, usize)) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = (fg.x_star, fg.x_star);
    let mut keys: Vec<&(usize, usize)> = loads.keys().collect();
    keys.sort_unstable();
    for &(a, b) in keys {
        let lq = fg.log_pi[a] + chain.log_p(a, b);
        let v = loads[&(a, b)] - lq - log_weight(fg, q, a, b);
        if v > best {
            best = v;
            arg = (a, b);
        }
    }
    (best.exp(), arg)
}

/// Congestion of the flow on `fg` measured against the transitions of `chain`.
///
/// `q = None` uses [`default_q`]. `method = None` enumerates paths when the
/// pair count stays below [`PATH_CAP`] and otherwise runs the dynamic program.
pub fn congestion(fg: &FlowGraph, chain: &DenseChain, q: Option<f64>, method: Option<FlowMethod>) -> Result<CongestionReport> {
    let (q0, _) = default_q(fg.log_s, max_degree(chain));
    let q = q.unwrap_or(q0);
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::BoundInapplicable(format!("q = {q} must lie in (0, 1)")));
    }
    let (loads, used) = match method {
        Some(FlowMethod::DynamicProgram) => (loads_by_dp(fg, q), FlowMethod::DynamicProgram),
        Some(FlowMethod::Enumeration) => (loads_by_enumeration(fg, q)?, FlowMethod::Enumeration),
        None => match loads_by_enumeration(fg, q) {
            Ok(l) => (l, FlowMethod::Enumeration),
            Err(Error::CapExceeded { .. }) => (loads_by_dp(fg, q), FlowMethod::DynamicProgram),
            Err(e) => return Err(e),
        },
    };
    let (a, (ea, eb)) = congestion_from_loads(fg, chain, q, &loads);
    Ok(CongestionReport {
        s: fg.s(),
        q,
        a_exact: a,
        a_closed_form: closed_form(fg, chain),
        gap_lower_bound: 1.0 / a,
        method: used,
        worst_edge: (fg.labels[ea].clone(), fg.labels[eb].clone()),
        restricted: fg.order.len() < chain.len(),
    })
}

/// `R` for random-walk chains, `L/M` for informed chains.
pub fn default_s(chain: &DenseChain, log_r: f64) -> f64 {
    match chain.spec.family {
        Family::RandomWalk => log_r.exp(),
        Family::Informed => chain.spec.big_l / max_degree(chain) as f64,
    }
}

/// Congestion bound together with the exact (restricted) gap it certifies.
#[derive(Clone, Debug, Serialize)]
pub struct FlowCertificate {
    pub report: CongestionReport,
    pub exact_gap: f64,
    pub holds: bool,
}

/// Full-space certificate, compared with `1 - lambda_2`.
///
/// The flow argument controls the Dirichlet form only, so it says nothing
/// about `lambda_min`; the two gaps agree on lazy chains.
pub fn certify_flow(chain: &DenseChain, s: f64, q: Option<f64>) -> Result<FlowCertificate> {
    let fg = build_flow_graph(chain, s)?;
    let report = congestion(&fg, chain, q, None)?;
    let exact_gap = spectral_gap(chain)?.rayleigh_gap;
    let holds = exact_gap >= report.gap_lower_bound * (1.0 - 1e-9);
    Ok(FlowCertificate { report, exact_gap, holds })
}

/// Restricted certificate, compared with the `X0`-restricted gap.
pub fn certify_restricted_flow(chain: &DenseChain, x0: &[usize], s: f64, q: Option<f64>) -> Result<FlowCertificate> {
    let fg = build_restricted_flow_graph(chain, x0, s)?;
    let report = congestion(&fg, chain, q, None)?;
    let exact_gap = restricted_gap(chain, x0)?;
    let holds = exact_gap >= report.gap_lower_bound * (1.0 - 1e-9);
    Ok(FlowCertificate { report, exact_gap, holds })
}

/// Drift condition `(PV)(x) <= lambda V(x)` off the mode with `V = pi^{1/log pi_min}`.
#[derive(Clone, Debug, Serialize)]
pub struct DriftCertificate {
    pub lambda: f64,
    /// `1 - lambda`, computed without cancellation.
    pub gap: f64,
    pub log_v: Vec<f64>,
    pub log_pi_min: f64,
    pub lazy: bool,
}

impl DriftCertificate {
    /// `(log 2 + log V(x) - log eps) / (1 - lambda)`.
    pub fn mixing_bound(&self, x: usize, eps: f64) -> f64 {
        (std::f64::consts::LN_2 + self.log_v[x] - eps.ln()) / self.gap
    }

    /// `2 V(x) lambda^{t+1}`.
    pub fn tv_bound(&self, x: usize, t: usize) -> f64 {
        2.0 * (self.log_v[x] + (t as f64 + 1.0) * self.lambda.ln()).exp()
    }
}

/// Drift certificate for the given chain as is.
pub fn drift_certificate(chain: &DenseChain) -> Result<DriftCertificate> {
    let n = chain.len();
    let lmin = chain.log_pi.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lmin < 0.0) {
        return Err(Error::DegenerateSpace);
    }
    let log_v: Vec<f64> = chain.log_pi.iter().map(|&l| l / lmin).collect();
    let mut x_star = 0;
    for x in 0..n {
        if chain.log_pi[x] > chain.log_pi[x_star] {
            x_star = x;
        }
    }
    let mut worst = f64::INFINITY;
    let mut worst_state = x_star;
    for x in 0..n {
        if x == x_star {
            continue;
        }
        let drop: f64 = -chain.log_off[x]
            .iter()
            .map(|&(y, l)| l.exp() * (log_v[y] - log_v[x]).exp_m1())
            .sum::<f64>();
        if drop < worst {
            worst = drop;
            worst_state = x;
        }
    }
    let lambda = 1.0 - worst;
    if !(lambda < 1.0) {
        return Err(Error::NoCertificate { lambda, state: chain.labels[worst_state].clone() });
    }
    Ok(DriftCertificate { lambda, gap: worst, log_v, log_pi_min: lmin, lazy: chain.is_lazy() })
}

/// Certificate on the non-lazy chain when its spectrum is nonnegative, else on the lazy chain.
pub fn drift_certificate_auto(chain: &DenseChain) -> Result<DriftCertificate> {
    if !chain.is_lazy() {
        let r = spectral_gap(chain)?;
        if r.lambda_min >= -1e-12 {
            return drift_certificate(chain);
        }
    }
    drift_certificate(&chain.lazy())
}
