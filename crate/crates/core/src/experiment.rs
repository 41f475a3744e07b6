//! TOML-configured hitting-time experiments.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};
use crate::samplers::{hitting_experiment, hitting_run, ChainState as _, Family, KernelSpec, RunRecord, Summary};
use crate::sbm::{generate_sbm, sbm_init, SbmInit, SbmTarget};
use crate::varsel::{
    example3_data, example3_hyper, generate_data, init_model, Covariance, InitScheme, Model, Neighborhood, VarSelData,
    VarSelHyper, VarSelTarget,
};

/// A number or a simple expression in the model size `p`: `p`, `p^k`, `1/p`, `inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Number(f64),
    Expr(String),
}

impl Param {
    pub fn resolve(&self, p: usize) -> Result<f64> {
        let pf = p as f64;
        match self {
            Param::Number(v) => Ok(*v),
            Param::Expr(s) => {
                let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
                if t == "inf" {
                    return Ok(f64::INFINITY);
                }
                if t == "p" {
                    return Ok(pf);
                }
                if t == "1/p" {
                    return Ok(1.0 / pf);
                }
                if let Some(k) = t.strip_prefix("p^") {
                    let k: f64 = k.parse().map_err(|_| Error::Config(format!("bad exponent in '{s}'")))?;
                    return Ok(pf.powf(k));
                }
                t.parse::<f64>().map_err(|_| Error::Config(format!("cannot parse parameter '{s}'")))
            }
        }
    }
}

fn default_kappa() -> f64 {
    1.0
}

fn default_p_within() -> f64 {
    0.1
}

fn default_p_between() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarselModel {
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_covariance")]
    pub covariance: Covariance,
    /// Defaults to `p^3`.
    #[serde(default)]
    pub g: Option<Param>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub s_max: Option<usize>,
    #[serde(default = "default_nbhd")]
    pub neighborhood: Neighborhood,
}

fn default_covariance() -> Covariance {
    Covariance::Moderate
}

fn default_nbhd() -> Neighborhood {
    Neighborhood::N1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmModel {
    pub p: usize,
    #[serde(default = "default_p_within")]
    pub p_within: f64,
    #[serde(default = "default_p_between")]
    pub p_between: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example3Model {
    #[serde(default)]
    pub s_max: Option<usize>,
    #[serde(default = "default_nbhd")]
    pub neighborhood: Neighborhood,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    Varsel(VarselModel),
    Sbm(SbmModel),
    Example3(Example3Model),
}

impl ModelConfig {
    /// Size parameter used by [`Param`] expressions.
    pub fn p(&self) -> usize {
        match self {
            ModelConfig::Varsel(m) => m.p,
            ModelConfig::Sbm(m) => m.p,
            ModelConfig::Example3(_) => 3,
        }
    }

    pub fn varsel_hyper(&self) -> Option<VarSelHyper> {
        match self {
            ModelConfig::Varsel(m) => {
                let g = match &m.g {
                    Some(g) => g.resolve(m.p).ok()?,
                    None => (m.p as f64).powi(3),
                };
                Some(VarSelHyper { g, kappa: m.kappa, s_max: m.s_max })
            }
            ModelConfig::Example3(m) => Some(example3_hyper(m.s_max)),
            ModelConfig::Sbm(_) => None,
        }
    }

    /// Simulated (or fixed) variable-selection data and truth for a data seed stream index.
    pub fn varsel_data(&self, master: u64, index: u32) -> Option<(VarSelData, Model)> {
        match self {
            ModelConfig::Varsel(m) => {
                let mut rng = substream(master, Purpose::Data, 0, index);
                Some(generate_data(m.p, m.n, m.covariance, Some(master), &mut rng))
            }
            ModelConfig::Example3(_) => Some((example3_data(), Model::from_bits("110"))),
            ModelConfig::Sbm(_) => None,
        }
    }

    pub fn neighborhood(&self) -> Neighborhood {
        match self {
            ModelConfig::Varsel(m) => m.neighborhood,
            ModelConfig::Example3(m) => m.neighborhood,
            ModelConfig::Sbm(_) => Neighborhood::N1,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Varsel(m) => {
                if m.p < 5 || m.n < 5 {
                    return Err(Error::Config("model: varsel needs n >= 5 and p >= 5".into()));
                }
                let g = self.varsel_hyper().ok_or_else(|| Error::Config("model.g: cannot resolve".into()))?.g;
                if !(g > 0.0) || !(m.kappa >= 0.0) {
                    return Err(Error::Config("model: g must be positive and kappa nonnegative".into()));
                }
            }
            ModelConfig::Sbm(m) => {
                if m.p < 3 {
                    return Err(Error::Config("model: sbm needs p >= 3".into()));
                }
                for (k, v) in [("p_within", m.p_within), ("p_between", m.p_between)] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Config(format!("model.{k} = {v} is not in [0, 1]")));
                    }
                }
            }
            ModelConfig::Example3(_) => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub name: String,
    pub family: Family,
    #[serde(default)]
    pub ell: Option<Param>,
    #[serde(default)]
    pub big_l: Option<Param>,
    #[serde(default)]
    pub budget: u64,
    #[serde(default)]
    pub lazy: bool,
}

impl KernelConfig {
    pub fn spec(&self, p: usize) -> Result<KernelSpec> {
        let s = match self.family {
            Family::RandomWalk => KernelSpec::random_walk(),
            Family::Informed => {
                let get = |v: &Option<Param>, key: &str| -> Result<f64> {
                    v.as_ref()
                        .ok_or_else(|| Error::Config(format!("kernel '{}': informed kernels need {key}", self.name)))?
                        .resolve(p)
                };
                KernelSpec::informed(get(&self.ell, "ell")?, get(&self.big_l, "big_l")?)
                    .map_err(|e| Error::Config(format!("kernel '{}': {e}", self.name)))?
            }
        };
        Ok(s.lazy(self.lazy))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitConfig {
    Varsel(InitScheme),
    Sbm(SbmInit),
}

impl InitConfig {
    pub fn label(&self) -> String {
        match self {
            InitConfig::Varsel(InitScheme::Empty) => "empty".into(),
            InitConfig::Varsel(InitScheme::UniformDelta { m }) => format!("uniform-delta-{m}"),
            InitConfig::Varsel(InitScheme::Good { false_positives }) => format!("good-{false_positives}"),
            InitConfig::Varsel(InitScheme::Bad { false_positives }) => format!("bad-{false_positives}"),
            InitConfig::Sbm(SbmInit::HalfWrong) => "half-wrong".into(),
            InitConfig::Sbm(SbmInit::ThirdWrong) => "third-wrong".into(),
            InitConfig::Sbm(SbmInit::Fraction { fraction }) => format!("fraction-{fraction}"),
        }
    }
}

fn default_workers() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_runs: usize,
    pub inits: Vec<InitConfig>,
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Fresh data set per replicate; otherwise every replicate shares one.
    #[serde(default = "default_true")]
    pub replicate_data: bool,
    #[serde(default)]
    pub trajectories: bool,
    #[serde(default = "default_true")]
    pub stop_at_hit: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Report wall-clock columns; off keeps summaries reproducible byte for byte.
    #[serde(default)]
    pub wall_time: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: default_dir(), formats: default_formats(), wall_time: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub kernels: Vec<KernelConfig>,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parse TOML, reporting the line of the first error.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
        match line {
            Some(l) => Error::Config(format!("line {l}: {}", e.message())),
            None => Error::Config(e.message().to_string()),
        }
    })
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.kernels.is_empty() {
            return Err(Error::Config("at least one [[kernels]] entry is required".into()));
        }
        if self.run.inits.is_empty() {
            return Err(Error::Config("run.inits must list at least one scheme".into()));
        }
        if self.run.workers == 0 {
            return Err(Error::Config("run.workers must be at least 1".into()));
        }
        if self.kernels.len() > 255 || self.run.inits.len() > 255 || self.run.n_runs > u32::MAX as usize {
            return Err(Error::Config("too many kernels, inits or runs".into()));
        }
        let mut names: Vec<&str> = self.kernels.iter().map(|k| k.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("kernel names must be unique".into()));
        }
        for k in &self.kernels {
            k.spec(self.model.p())?;
        }
        let sbm = matches!(self.model, ModelConfig::Sbm(_));
        for i in &self.run.inits {
            if sbm != matches!(i, InitConfig::Sbm(_)) {
                return Err(Error::Config(format!("init '{}' does not fit the model kind", i.label())));
            }
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration, ignoring worker count and output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.workers = 1;
        c.output.directory = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

/// One (kernel, init) cell of the results table.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub kernel: String,
    pub init: String,
    pub budget: u64,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellRecords {
    pub kernel: String,
    pub init: String,
    pub records: Vec<RunRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentOutput {
    pub hash: String,
    pub rows: Vec<SummaryRow>,
    pub cells: Vec<CellRecords>,
}

fn chain_slot(kernel: usize, init: usize) -> u16 {
    ((kernel as u16) << 8) | init as u16
}

/// Run every (kernel, init) cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let p = cfg.model.p();
    let seed = cfg.run.master_seed;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (ki, kc) in cfg.kernels.iter().enumerate() {
        let spec = kc.spec(p)?;
        for (ii, init) in cfg.run.inits.iter().enumerate() {
            let slot = chain_slot(ki, ii);
            let data_index = |r: usize| if cfg.run.replicate_data { r as u32 } else { 0 };
            let keep = cfg.run.trajectories;
            let stop = cfg.run.stop_at_hit;
            let (records, summary) = match (&cfg.model, init) {
                (ModelConfig::Sbm(m), InitConfig::Sbm(scheme)) => hitting_experiment(cfg.run.n_runs, cfg.run.workers, |r| {
                    let mut drng = substream(seed, Purpose::Data, 0, data_index(r));
                    let (data, z_star) = generate_sbm(m.p, m.p_within, m.p_between, &mut drng)?;
                    let target = SbmTarget::new(data);
                    let z0 = sbm_init(*scheme, &z_star, &mut substream(seed, Purpose::Init, ii as u16, r as u32))?;
                    let switched = z_star.switched();
                    let mut crng = substream(seed, Purpose::Chain, slot, r as u32);
                    hitting_run(
                        r,
                        target.state(&z0),
                        &spec,
                        kc.budget,
                        &mut crng,
                        |s| *s.labels() == z_star || *s.labels() == switched,
                        stop,
                        keep,
                    )
                })?,
                (_, InitConfig::Varsel(scheme)) => {
                    let hyper = cfg.model.varsel_hyper().ok_or_else(|| Error::Config("model.g".into()))?;
                    let nb = cfg.model.neighborhood();
                    hitting_experiment(cfg.run.n_runs, cfg.run.workers, |r| {
                        let (data, truth) = cfg.model.varsel_data(seed, data_index(r)).expect("variable-selection model");
                        let target = VarSelTarget::new(data, hyper, nb);
                        let d0 = init_model(*scheme, &truth, &mut substream(seed, Purpose::Init, ii as u16, r as u32))?;
                        let st = target.state(&d0);
                        if st.log_pi() == f64::NEG_INFINITY {
                            return Err(Error::InvalidInit(format!("initial model {d0} has zero posterior mass")));
                        }
                        let mut crng = substream(seed, Purpose::Chain, slot, r as u32);
                        hitting_run(r, st, &spec, kc.budget, &mut crng, |s| *s.model() == truth, stop, keep)
                    })?
                }
                _ => return Err(Error::Config(format!("init '{}' does not fit the model kind", init.label()))),
            };
            rows.push(SummaryRow { kernel: kc.name.clone(), init: init.label(), budget: kc.budget, summary });
            cells.push(CellRecords { kernel: kc.name.clone(), init: init.label(), records });
        }
    }
    Ok(ExperimentOutput { hash: cfg.hash(), rows, cells })
}


fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "--".into())
}

fn header_line(hash: &str) -> String {
    format!("# dmh {} config-sha256 {hash}\n", crate::VERSION)
}

/// Summary table as CSV text.
pub fn summary_csv(out: &ExperimentOutput, wall_time: bool) -> String {
    let mut s = header_line(&out.hash);
    s += "kernel,init,budget,n_runs,success,h_true,time,t_true\n";
    for r in &out.rows {
        let (time, t_true) = if wall_time {
            (format!("{:.4}", r.summary.time), r.summary.t_true.map(|v| format!("{v:.4}")).unwrap_or_else(|| "--".into()))
        } else {
            ("NA".into(), if r.summary.t_true.is_some() { "NA".into() } else { "--".into() })
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.kernel,
            r.init,
            r.budget,
            r.summary.n_runs,
            r.summary.success,
            opt(r.summary.h_true),
            time,
            t_true
        );
    }
    s
}

/// Per-run records as CSV text.
pub fn runs_csv(out: &ExperimentOutput, wall_time: bool) -> String {
    let mut s = header_line(&out.hash);
    s += "kernel,init,replicate,success,hit_iter,evals,final_log_pi,best_log_pi,wall_secs,hit_secs\n";
    for c in &out.cells {
        for r in &c.records {
            let (w, h) = if wall_time {
                (format!("{:.6}", r.wall_secs), r.hit_secs.map(|v| format!("{v:.6}")).unwrap_or_else(|| "--".into()))
            } else {
                ("NA".into(), "NA".into())
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                c.kernel,
                c.init,
                r.replicate,
                r.success(),
                r.hit_iter.map(|v| v.to_string()).unwrap_or_else(|| "--".into()),
                r.evals,
                r.final_log_pi,
                r.best_log_pi,
                w,
                h
            );
        }
    }
    s
}

fn trajectories_csv(out: &ExperimentOutput) -> String {
    let mut s = header_line(&out.hash);
    s += "kernel,init,replicate,iteration,log_pi\n";
    for c in &out.cells {
        for r in &c.records {
            if let Some(t) = &r.trajectory {
                for (i, v) in t.iter().enumerate() {
                    let _ = writeln!(s, "{},{},{},{},{}", c.kernel, c.init, r.replicate, i, v);
                }
            }
        }
    }
    s
}

/// Write summary, per-run and optional trajectory files plus the resolved config.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output.directory;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<()> {
        let path = dir.join(name);
        std::fs::File::create(&path)?.write_all(body.as_bytes())?;
        written.push(path);
        Ok(())
    };
    let wt = cfg.output.wall_time;
    if cfg.output.formats.contains(&Format::Csv) {
        put("summary.csv", &summary_csv(out, wt))?;
        put("runs.csv", &runs_csv(out, wt))?;
        if cfg.run.trajectories {
            put("trajectories.csv", &trajectories_csv(out))?;
        }
    }
    if cfg.output.formats.contains(&Format::Json) {
        let mut rows = serde_json::to_value(&out.rows)?;
        if !wt {
            for r in rows.as_array_mut().into_iter().flatten() {
                r["time"] = serde_json::Value::Null;
                r["t_true"] = serde_json::Value::Null;
            }
        }
        let v = serde_json::json!({
            "version": crate::VERSION,
            "config_sha256": out.hash,
            "config": cfg,
            "summary": rows,
        });
        put("summary.json", &(serde_json::to_string_pretty(&v)? + "\n"))?;
    }
    put("config.resolved.toml", &format!("{}{}", header_line(&out.hash), cfg.resolved_toml()))?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[model]
kind = "example3"

[[kernels]]
name = "rw"
family = "random-walk"
budget = 200

[[kernels]]
name = "imh"
family = "informed"
ell = "p"
big_l = "p^2"
budget = 50

[run]
n_runs = 8
inits = [{ kind = "empty" }]
master_seed = 3
"#;

    #[test]
    fn params() {
        assert_eq!(Param::Expr("p^3".into()).resolve(10).unwrap(), 1000.0);
        assert_eq!(Param::Expr("1/p".into()).resolve(4).unwrap(), 0.25);
        assert_eq!(Param::Expr("inf".into()).resolve(4).unwrap(), f64::INFINITY);
        assert_eq!(Param::Number(2.5).resolve(4).unwrap(), 2.5);
        assert!(Param::Expr("q^2".into()).resolve(4).is_err());
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let bad = SMALL.replace("master_seed = 3", "master_seed = 3\nbogus = 1");
        let e = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(e.contains("line"), "{e}");
        let bad_model = SMALL.replace("kind = \"example3\"", "kind = \"example3\"\nfoo = 2");
        assert!(ExperimentConfig::from_toml(&bad_model).is_err());
    }

    #[test]
    fn mismatched_init_rejected() {
        let bad = SMALL.replace("{ kind = \"empty\" }", "{ kind = \"half-wrong\" }");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn zero_budget_successes_come_from_init_only() {
        let cfg = ExperimentConfig::from_toml(&SMALL.replace("budget = 200", "budget = 0")).unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows[0].summary.success, 0);
        let mut cfg1 = cfg.clone();
        cfg1.run.n_runs = 1;
        cfg1.run.inits = vec![InitConfig::Varsel(InitScheme::UniformDelta { m: 2 })];
        let out = run_experiment(&cfg1).unwrap();
        assert!(out.rows[0].summary.success <= 1);
    }

    #[test]
    fn summaries_identical_across_worker_counts() {
        let mut a = ExperimentConfig::from_toml(SMALL).unwrap();
        let mut b = a.clone();
        a.run.workers = 1;
        b.run.workers = 4;
        b.output.directory = PathBuf::from("elsewhere");
        let sa = summary_csv(&run_experiment(&a).unwrap(), false);
        let sb = summary_csv(&run_experiment(&b).unwrap(), false);
        assert_eq!(sa, sb);
        assert!(sa.starts_with("# dmh "));
    }
}
