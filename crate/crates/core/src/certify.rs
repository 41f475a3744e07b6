//! Exact certificates and diagnostics on enumerable instances.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    build_transition_matrix, expected_hitting_time, mixing_time, restricted_gap, restriction_inputs, spectral_gap,
    theorem_bounds, tv_curve, BoundEntry, BoundInputs, DenseChain, GapReport,
};
use crate::error::{Error, Result};
use crate::experiment::{parse_toml, KernelConfig, ModelConfig};
use crate::flowbound::{certify_flow, certify_restricted_flow, default_s, drift_certificate_auto, FlowCertificate};
use crate::golden::Check;
use crate::rng::{substream, Purpose};
use crate::samplers::KernelSpec;
use crate::sbm::{generate_sbm, SbmTarget};
use crate::space::{enumerate_space, unimodality_stats, Enumeration, NeighborhoodStats};
use crate::varsel::VarSelTarget;

/// Which states form `X0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubsetSpec {
    /// `"all"`.
    Named(String),
    /// States with `log pi(x*) - log pi(x) <= within_log`.
    Within { within_log: f64 },
}

impl Default for SubsetSpec {
    fn default() -> Self {
        SubsetSpec::Named("all".into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Flow,
    RestrictedFlow,
    Drift,
}

fn default_eps() -> f64 {
    0.25
}

fn default_cap() -> usize {
    4096
}

fn default_t_max() -> usize {
    200_000
}

fn default_methods() -> Vec<Method> {
    vec![Method::Flow, Method::RestrictedFlow, Method::Drift]
}

fn default_start() -> String {
    "min-x0".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    #[serde(default)]
    pub x0: SubsetSpec,
    /// `"mode"`, `"min-x0"` or a state label.
    #[serde(default = "default_start")]
    pub start: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
}

impl Default for CertifySection {
    fn default() -> Self {
        CertifySection {
            master_seed: 0,
            epsilon: default_eps(),
            x0: SubsetSpec::default(),
            start: default_start(),
            methods: default_methods(),
            cap: default_cap(),
            t_max: default_t_max(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub model: ModelConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub certify: CertifySection,
}

impl CertifyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CertifyConfig = parse_toml(text)?;
        cfg.kernel.spec(cfg.model.p())?;
        if !(cfg.certify.epsilon > 0.0 && cfg.certify.epsilon < 1.0) {
            return Err(Error::Config("certify.epsilon must lie in (0, 1)".into()));
        }
        if let SubsetSpec::Named(n) = &cfg.certify.x0 {
            if n != "all" {
                return Err(Error::Config(format!("certify.x0 = '{n}': use \"all\" or {{ within_log = t }}")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Outcome of one certificate computation; failures to apply are reported, not raised.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome<T> {
    Ok(T),
    Inapplicable(String),
}

impl<T> From<Result<T>> for Outcome<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Inapplicable(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftSummary {
    pub lambda: f64,
    pub gap: f64,
    pub lazy: bool,
    pub mixing_bound_from_start: f64,
    pub exact_mixing_from_start: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertifyReport {
    pub states: usize,
    pub m: usize,
    pub log_r: f64,
    pub rho: f64,
    pub unimodal: bool,
    pub x_star: String,
    pub pi_x_star: f64,
    pub kernel: KernelSpec,
    pub epsilon: f64,
    pub gap: GapReport,
    pub lazy_gap: GapReport,
    pub x0_size: usize,
    pub x0_mass: f64,
    pub start: String,
    pub pi_start: f64,
    pub exact_mixing_from_start: Option<usize>,
    pub exact_worst_mixing: Option<usize>,
    pub flow: Option<Outcome<FlowCertificate>>,
    pub restricted_flow: Option<Outcome<FlowCertificate>>,
    pub drift: Option<Outcome<DriftSummary>>,
    pub checks: Vec<Check>,
}

impl CertifyReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "states {}  M {}  log R {:.6}  rho {:.6e}  unimodal {}", self.states, self.m, self.log_r, self.rho, self.unimodal);
        let _ = writeln!(s, "mode {}  pi(mode) {:.6e}", self.x_star, self.pi_x_star);
        let _ = writeln!(
            s,
            "gap {:.6e} (lazy {:.6e})  lambda_min {:.6e}",
            self.gap.gap, self.lazy_gap.gap, self.gap.lambda_min
        );
        let _ = writeln!(s, "X0 {} states, mass {:.12}  start {} pi {:.6e}", self.x0_size, self.x0_mass, self.start, self.pi_start);
        let fmt_opt = |v: Option<usize>| v.map(|t| t.to_string()).unwrap_or_else(|| "> horizon".into());
        let _ = writeln!(
            s,
            "lazy mixing time eps {}: from start {}, worst {}",
            self.epsilon,
            fmt_opt(self.exact_mixing_from_start),
            fmt_opt(self.exact_worst_mixing)
        );
        for (k, b) in &self.lazy_gap.theorem_bounds {
            match (&b.value, &b.inapplicable) {
                (Some(v), _) => {
                    let _ = writeln!(s, "  {k:<22} {v:.6e}");
                }
                (None, Some(why)) => {
                    let _ = writeln!(s, "  {k:<22} n/a ({why})");
                }
                _ => {}
            }
        }
        let flow_line = |name: &str, f: &Option<Outcome<FlowCertificate>>| match f {
            Some(Outcome::Ok(c)) => format!(
                "{name}: S {:.4e} q {:.4} A {:.6e} bound {:.6e} exact {:.6e}{}\n",
                c.report.s,
                c.report.q,
                c.report.a_exact,
                c.report.gap_lower_bound,
                c.exact_gap,
                c.report.a_closed_form.map(|a| format!(" closed-form A {a:.6e}")).unwrap_or_default()
            ),
            Some(Outcome::Inapplicable(w)) => format!("{name}: n/a ({w})\n"),
            None => String::new(),
        };
        s += &flow_line("flow", &self.flow);
        s += &flow_line("restricted flow", &self.restricted_flow);
        match &self.drift {
            Some(Outcome::Ok(d)) => {
                let _ = writeln!(
                    s,
                    "drift: lambda {:.6}  1-lambda {:.6e}  lazy {}  mixing bound {:.4e}",
                    d.lambda, d.gap, d.lazy, d.mixing_bound_from_start
                );
            }
            Some(Outcome::Inapplicable(w)) => {
                let _ = writeln!(s, "drift: n/a ({w})");
            }
            None => {}
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<36} {:.6e} vs {:.6e}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.computed,
                c.expected
            );
        }
        s
    }
}

fn resolve_x0(lp: &[f64], x_star: usize, spec: &SubsetSpec) -> Vec<usize> {
    match spec {
        SubsetSpec::Named(_) => (0..lp.len()).collect(),
        SubsetSpec::Within { within_log } => (0..lp.len()).filter(|&x| lp[x_star] - lp[x] <= *within_log).collect(),
    }
}

fn resolve_start<S>(en: &Enumeration<S>, x0: &[usize], x_star: usize, start: &str) -> Result<usize>
where
    S: Clone + Eq + std::hash::Hash + Ord + std::fmt::Display,
{
    match start {
        "mode" => Ok(x_star),
        "min-x0" => {
            let mut best = x0[0];
            for &x in x0 {
                if en.log_pi[x] < en.log_pi[best] {
                    best = x;
                }
            }
            Ok(best)
        }
        label => en
            .labels()
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Config(format!("certify.start: no state labelled '{label}'"))),
    }
}

fn worst_mixing(chain: &DenseChain, eps: f64, horizon: usize) -> Option<usize> {
    let mut worst = 0;
    for x in 0..chain.len() {
        worst = worst.max(mixing_time(chain, x, eps, horizon)?);
    }
    Some(worst)
}

fn value(b: &std::collections::BTreeMap<String, BoundEntry>, k: &str) -> Option<f64> {
    b.get(k).and_then(|e| e.value)
}

/// Certify a chain on an enumerated space.
pub fn certify_enumeration<S>(en: &Enumeration<S>, spec: &KernelSpec, sec: &CertifySection) -> Result<CertifyReport>
where
    S: Clone + Eq + std::hash::Hash + Ord + std::fmt::Display,
{
    let stats: NeighborhoodStats = unimodality_stats(en)?;
    let chain = build_transition_matrix(en, &spec.lazy(false))?;
    let lazy = chain.lazy();
    let lp = en.log_pi_normalized();
    let log_pi_min = lp.iter().copied().fold(f64::INFINITY, f64::min);
    let eps = sec.epsilon;

    let x0 = resolve_x0(&lp, stats.x_star, &sec.x0);
    let start = resolve_start(en, &x0, stats.x_star, &sec.start)?;
    let restricted = x0.len() < en.len();
    let restriction = if restricted { restriction_inputs(en, &x0, start).ok() } else { None };
    let eta = Some(lp[start].exp());

    let gap = spectral_gap(&chain)?;
    let mut lazy_gap = spectral_gap(&lazy)?;
    if restricted && x0.len() >= 2 {
        lazy_gap.restricted_gap = restricted_gap(&lazy, &x0).ok();
    }
    lazy_gap.theorem_bounds = theorem_bounds(&BoundInputs {
        stats: &stats,
        spec: *spec,
        log_pi_min,
        epsilon: eps,
        eta,
        restriction: restriction.clone(),
    });
    let tb = &lazy_gap.theorem_bounds;

    let mut checks = Vec::new();
    let t_rel = lazy_gap.relaxation_time;
    for k in ["thm1.relaxation", "thm2.relaxation"] {
        if let Some(v) = value(tb, k) {
            checks.push(Check::at_least(format!("{k} >= exact"), v, t_rel * (1.0 - 1e-9)));
        }
    }
    if let Some(v) = value(tb, "thm1.mode_mass") {
        checks.push(Check::at_least("pi(mode) >= thm1.mode_mass", lp[stats.x_star].exp(), v * (1.0 - 1e-12)));
    }

    let worst_bounds: Vec<(&str, f64)> = ["thm1.mixing", "thm2.mixing", "thm3.mixing"]
        .iter()
        .filter_map(|k| value(tb, k).map(|v| (*k, v)))
        .collect();
    let warm_bounds: Vec<(&str, f64)> =
        ["thm4.mixing", "thm5.mixing"].iter().filter_map(|k| value(tb, k).map(|v| (*k, v))).collect();
    let horizon = |bs: &[(&str, f64)]| -> usize {
        bs.iter().map(|b| b.1).fold(sec.t_max as f64, f64::min).ceil() as usize + 1
    };
    let hw = horizon(&worst_bounds);
    let exact_worst_mixing = worst_mixing(&lazy, eps, hw);
    for (k, v) in &worst_bounds {
        let t = exact_worst_mixing.map(|t| t as f64).unwrap_or(f64::INFINITY);
        checks.push(Check::at_least(format!("{k} >= exact worst"), *v, t));
    }
    let hs = horizon(&warm_bounds).max(hw);
    let exact_mixing_from_start = mixing_time(&lazy, start, eps, hs);
    for (k, v) in &warm_bounds {
        let t = exact_mixing_from_start.map(|t| t as f64).unwrap_or(f64::INFINITY);
        checks.push(Check::at_least(format!("{k} >= exact from start"), *v, t));
    }

    let s_default = default_s(&lazy, stats.log_r);
    let flow = sec.methods.contains(&Method::Flow).then(|| Outcome::from(certify_flow(&lazy, s_default, None)));
    if let Some(Outcome::Ok(c)) = &flow {
        checks.push(Check::at_least("flow bound <= 1 - lambda_2", c.exact_gap, c.report.gap_lower_bound * (1.0 - 1e-9)));
    }
    let restricted_flow = (sec.methods.contains(&Method::RestrictedFlow) && restricted).then(|| {
        let s = restriction.as_ref().map(|r| default_s(&lazy, r.stats.log_r)).unwrap_or(s_default);
        Outcome::from(certify_restricted_flow(&lazy, &x0, s, None))
    });
    if let Some(Outcome::Ok(c)) = &restricted_flow {
        checks.push(Check::at_least(
            "restricted flow bound <= exact gap",
            c.exact_gap,
            c.report.gap_lower_bound * (1.0 - 1e-9),
        ));
    }
    let drift = sec.methods.contains(&Method::Drift).then(|| {
        Outcome::from(drift_certificate_auto(&chain).map(|d| {
            let used = if d.lazy { &lazy } else { &chain };
            let bound = d.mixing_bound(start, eps);
            let h = (bound.min(sec.t_max as f64)).ceil() as usize + 1;
            DriftSummary {
                lambda: d.lambda,
                gap: d.gap,
                lazy: d.lazy,
                mixing_bound_from_start: bound,
                exact_mixing_from_start: mixing_time(used, start, eps, h),
            }
        }))
    });
    if let Some(Outcome::Ok(d)) = &drift {
        let t = d.exact_mixing_from_start.map(|t| t as f64).unwrap_or(f64::INFINITY);
        checks.push(Check::at_least("drift bound >= exact from start", d.mixing_bound_from_start, t));
    }

    let labels = en.labels();
    Ok(CertifyReport {
        states: en.len(),
        m: stats.m,
        log_r: stats.log_r,
        rho: stats.rho(),
        unimodal: stats.is_unimodal(),
        x_star: labels[stats.x_star].clone(),
        pi_x_star: lp[stats.x_star].exp(),
        kernel: *spec,
        epsilon: eps,
        gap,
        lazy_gap,
        x0_size: x0.len(),
        x0_mass: x0.iter().map(|&x| lp[x].exp()).sum(),
        start: labels[start].clone(),
        pi_start: lp[start].exp(),
        exact_mixing_from_start,
        exact_worst_mixing,
        flow,
        restricted_flow,
        drift,
        checks,
    })
}

/// Build the configured model and apply `f` to its enumeration.
fn with_enumeration<F, T>(model: &ModelConfig, seed: u64, cap: usize, f: F) -> Result<T>
where
    F: EnumVisitor<Output = T>,
{
    match model {
        ModelConfig::Sbm(m) => {
            let mut rng = substream(seed, Purpose::Data, 0, 0);
            let (data, _) = generate_sbm(m.p, m.p_within, m.p_between, &mut rng)?;
            f.visit(&enumerate_space(&SbmTarget::new(data), cap)?)
        }
        _ => {
            let hyper = model.varsel_hyper().ok_or_else(|| Error::Config("model.g".into()))?;
            let (data, _) = model.varsel_data(seed, 0).expect("variable-selection model");
            f.visit(&enumerate_space(&VarSelTarget::new(data, hyper, model.neighborhood()), cap)?)
        }
    }
}

trait EnumVisitor {
    type Output;
    fn visit<S>(self, en: &Enumeration<S>) -> Result<Self::Output>
    where
        S: Clone + Eq + std::hash::Hash + Ord + std::fmt::Display;
}

struct CertifyVisitor<'a> {
    spec: KernelSpec,
    sec: &'a CertifySection,
}

impl EnumVisitor for CertifyVisitor<'_> {
    type Output = CertifyReport;
    fn visit<S>(self, en: &Enumeration<S>) -> Result<CertifyReport>
    where
        S: Clone + Eq + std::hash::Hash + Ord + std::fmt::Display,
    {
        certify_enumeration(en, &self.spec, self.sec)
    }
}

pub fn certify(cfg: &CertifyConfig) -> Result<CertifyReport> {
    let spec = cfg.kernel.spec(cfg.model.p())?;
    with_enumeration(
        &cfg.model,
        cfg.certify.master_seed,
        cfg.certify.cap,
        CertifyVisitor { spec, sec: &cfg.certify },
    )
}

/// Exact summaries of a chain without bound checks.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseReport {
    pub space: serde_json::Value,
    pub gap: GapReport,
    pub lazy_gap: GapReport,
    pub start: String,
    /// `TV(t)` of the configured chain from `start`.
    pub tv: Vec<f64>,
    /// Expected hitting time of the mode from each state, in state order.
    pub hitting_times: Vec<f64>,
}

struct DiagnoseVisitor<'a> {
    spec: KernelSpec,
    sec: &'a CertifySection,
}

impl EnumVisitor for DiagnoseVisitor<'_> {
    type Output = DiagnoseReport;
    fn visit<S>(self, en: &Enumeration<S>) -> Result<DiagnoseReport>
    where
        S: Clone + Eq + std::hash::Hash + Ord + std::fmt::Display,
    {
        let stats = unimodality_stats(en)?;
        let chain = build_transition_matrix(en, &self.spec)?;
        let lp = en.log_pi_normalized();
        let x0 = resolve_x0(&lp, stats.x_star, &self.sec.x0);
        let start = resolve_start(en, &x0, stats.x_star, &self.sec.start)?;
        let horizon = mixing_time(&chain, start, self.sec.epsilon.min(1e-3), self.sec.t_max).unwrap_or(self.sec.t_max);
        Ok(DiagnoseReport {
            space: en.to_json(Some(&stats)),
            gap: spectral_gap(&chain)?,
            lazy_gap: spectral_gap(&chain.lazy())?,
            start: en.labels()[start].clone(),
            tv: tv_curve(&chain, start, horizon),
            hitting_times: expected_hitting_time(&chain, stats.x_star)?,
        })
    }
}

pub fn diagnose(cfg: &CertifyConfig) -> Result<DiagnoseReport> {
    let spec = cfg.kernel.spec(cfg.model.p())?;
    with_enumeration(&cfg.model, cfg.certify.master_seed, cfg.certify.cap, DiagnoseVisitor { spec, sec: &cfg.certify })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kernel: &str, x0: &str) -> CertifyConfig {
        CertifyConfig::from_toml(&format!(
            "[model]\nkind = \"example3\"\n[kernel]\nname = \"k\"\n{kernel}\n[certify]\nepsilon = 0.25\n{x0}\n"
        ))
        .unwrap()
    }

    #[test]
    fn example3_random_walk_certificates_hold() {
        let r = certify(&cfg("family = \"random-walk\"", "")).unwrap();
        assert_eq!(r.states, 8);
        assert_eq!(r.x_star, "110");
        assert!(r.pass(), "{}", r.to_text());
        assert!(matches!(r.flow, Some(Outcome::Ok(_))));
    }

    #[test]
    fn example3_informed_certificates_hold() {
        let r = certify(&cfg("family = \"informed\"\nell = 3\nbig_l = 9", "x0 = { within_log = 150.0 }")).unwrap();
        assert!(r.x0_size < 8);
        assert!(r.pass(), "{}", r.to_text());
    }

    #[test]
    fn diagnose_tv_decreases_to_small() {
        let d = diagnose(&cfg("family = \"random-walk\"\nlazy = true", "")).unwrap();
        assert!(d.tv.last().unwrap() <= &1e-3);
        assert_eq!(d.hitting_times.iter().filter(|&&h| h == 0.0).count(), 1);
    }

    #[test]
    fn bad_x0_rejected() {
        let t = "[model]\nkind = \"example3\"\n[kernel]\nname = \"k\"\nfamily = \"random-walk\"\n[certify]\nx0 = \"some\"\n";
        assert!(CertifyConfig::from_toml(t).is_err());
    }
}
