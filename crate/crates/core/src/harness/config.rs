//! Versioned TOML experiment configuration.
//!
//! A config names exactly one problem source in its own table (`[generator]`,
//! `[task]`, `[dataset]` or `[example]`), the method in `[method]`, and the
//! schedule in `[schedule]`. Every field can be overridden from the command
//! line before [`ExperimentConfig::validate`] runs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::page::OutputRule;
use crate::taskgen::TaskKind;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSource {
    pub kind: String,
    pub n: usize,
    pub d: usize,
    /// Smallest eigenvalue of the mean Hessian (`lpm` only). Without it the
    /// mean Hessian is singular and `f*` sits far below `f(x0)`.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(default = "one")]
    pub seed: u64,
    /// Regenerate the task from each run seed instead of `seed`, so that
    /// every seed is an independent replicate of the whole experiment.
    #[serde(default)]
    pub reseed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSource {
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub path: PathBuf,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Splits the rows across this many clients and runs the two-level
    /// method.
    pub clients: Option<usize>,
    #[serde(default)]
    pub shard_seed: u64,
}

/// Analytic one-dimensional examples with known constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleSource {
    /// 1: opposed curvatures, 2: a single nonzero component, 3: groups.
    pub which: u8,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub b1: f64,
    #[serde(default)]
    pub g: usize,
    #[serde(default)]
    pub m: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Uniform sampling with replacement and the stepsize of the original
    /// PAGE analysis, which only sees `L_+`.
    Vanilla,
    /// Uniform sampling with replacement and the weighted-constant stepsize.
    Uniform,
    /// With-replacement sampling with `q_i = L_i / sum L`.
    Importance,
    Nice,
    /// Bernoulli inclusion with `p_i` proportional to `L_i`, summing to `tau`.
    Independent,
    FullBatch,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Vanilla,
        Method::Uniform,
        Method::Importance,
        Method::Nice,
        Method::Independent,
        Method::FullBatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Uniform => "uniform",
            Method::Importance => "importance",
            Method::Nice => "nice",
            Method::Independent => "independent",
            Method::FullBatch => "full-batch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown method `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(default = "default_method")]
    pub name: Method,
    /// Batch size over components, or over clients for grouped problems.
    #[serde(default = "one_usize")]
    pub tau: usize,
    /// Sampling inside each client; ignored for flat problems.
    #[serde(default = "default_inner")]
    pub inner: Method,
    #[serde(default = "one_usize")]
    pub tau_points: usize,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            name: default_method(),
            tau: 1,
            inner: default_inner(),
            tau_points: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputChoice {
    #[default]
    Random,
    Last,
    Best,
}

impl From<OutputChoice> for OutputRule {
    fn from(c: OutputChoice) -> Self {
        match c {
            OutputChoice::Random => OutputRule::UniformRandomIterate,
            OutputChoice::Last => OutputRule::LastIterate,
            OutputChoice::Best => OutputRule::BestGradientIterate,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    /// Fixed stepsize; theoretical when absent.
    pub gamma: Option<f64>,
    /// Fixed refresh probability; `|S| / (|S| + n)` when absent.
    pub p: Option<f64>,
    /// Use the Polyak-Lojasiewicz stepsize.
    #[serde(default)]
    pub pl: bool,
    /// PL constant; the smallest eigenvalue of the mean Hessian for
    /// quadratics when absent.
    pub mu: Option<f64>,
    /// Iteration count; derived from `epsilon` when absent.
    pub iterations: Option<usize>,
    /// Target squared gradient norm, used for `T` and calls-to-reach.
    pub epsilon: Option<f64>,
    /// Upper bound on `f(x^0) - f*`; derived from the problem when absent.
    pub delta0: Option<f64>,
    /// Hard cap applied after `T` is derived.
    pub max_iterations: Option<usize>,
    pub monitor_every: Option<usize>,
    #[serde(default)]
    pub output: OutputChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,
    /// Also write `chart.svg` next to the CSVs.
    #[serde(default)]
    pub chart: bool,
    pub generator: Option<GeneratorSource>,
    pub task: Option<TaskSource>,
    pub dataset: Option<DatasetSource>,
    pub example: Option<ExampleSource>,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub schedule: Schedule,
}

/// The problem source selected by a validated config.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSource {
    Generator(GeneratorSource),
    Task(TaskSource),
    Dataset(DatasetSource),
    Example(ExampleSource),
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            seeds: default_seeds(),
            out_dir: None,
            workers: None,
            chart: false,
            generator: None,
            task: None,
            dataset: None,
            example: None,
            method: MethodConfig::default(),
            schedule: Schedule::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported config format_version {} (expected {CONFIG_FORMAT_VERSION})",
                cfg.format_version
            )));
        }
        Ok(cfg)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn source(&self) -> Result<ProblemSource> {
        let mut found = Vec::new();
        if let Some(g) = &self.generator {
            found.push(ProblemSource::Generator(g.clone()));
        }
        if let Some(t) = &self.task {
            found.push(ProblemSource::Task(t.clone()));
        }
        if let Some(d) = &self.dataset {
            found.push(ProblemSource::Dataset(d.clone()));
        }
        if let Some(e) = &self.example {
            found.push(ProblemSource::Example(e.clone()));
        }
        match found.len() {
            1 => Ok(found.pop().unwrap()),
            0 => Err(Error::Config(
                "no problem source: give one of [generator], [task], [dataset], [example]".into(),
            )),
            k => Err(Error::Config(format!("{k} problem sources given; exactly one is allowed"))),
        }
    }

    pub fn set_source(&mut self, source: ProblemSource) {
        self.generator = None;
        self.task = None;
        self.dataset = None;
        self.example = None;
        match source {
            ProblemSource::Generator(g) => self.generator = Some(g),
            ProblemSource::Task(t) => self.task = Some(t),
            ProblemSource::Dataset(d) => self.dataset = Some(d),
            ProblemSource::Example(e) => self.example = Some(e),
        }
    }

    /// Checks everything that can be checked without building the problem
    /// and reports every violation at once.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(true)
    }

    /// As [`validate`](Self::validate); the schedule may omit both
    /// `iterations` and `epsilon` when `require_schedule` is false.
    pub fn validate_with(&self, require_schedule: bool) -> Result<()> {
        let mut issues = Vec::new();
        if self.format_version != CONFIG_FORMAT_VERSION {
            issues.push(format!("format_version must be {CONFIG_FORMAT_VERSION}"));
        }
        if let Err(Error::Config(msg)) = self.source() {
            issues.push(msg);
        }
        if self.seeds.is_empty() {
            issues.push("seeds must not be empty".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            issues.push("seeds must be distinct".into());
        }
        if self.workers == Some(0) {
            issues.push("workers must be positive".into());
        }
        if let Some(g) = &self.generator {
            if TaskKind::parse(&g.kind).is_err() {
                issues.push(format!("generator kind `{}` is not `lpm` or `li`", g.kind));
            }
            if g.n == 0 {
                issues.push("generator n must be positive".into());
            }
            if g.d < 2 {
                issues.push("generator d must be at least 2".into());
            }
            if !(g.lambda >= 0.0 && g.lambda.is_finite()) {
                issues.push("generator lambda must be nonnegative".into());
            }
            if !(g.s >= 0.0 && g.s.is_finite()) {
                issues.push("generator s must be nonnegative".into());
            }
        }
        if let Some(d) = &self.dataset {
            if !(d.lambda >= 0.0 && d.lambda.is_finite()) {
                issues.push("dataset lambda must be nonnegative".into());
            }
            if d.clients == Some(0) {
                issues.push("dataset clients must be positive".into());
            }
        }
        if let Some(e) = &self.example {
            if !(1..=3).contains(&e.which) {
                issues.push(format!("example must be 1, 2 or 3, got {}", e.which));
            }
        }
        let m = &self.method;
        if m.tau == 0 {
            issues.push("method tau must be positive".into());
        }
        if m.tau_points == 0 {
            issues.push("method tau_points must be positive".into());
        }
        if m.inner == Method::Vanilla {
            issues.push("inner sampling cannot be `vanilla`; use `uniform`".into());
        }
        let s = &self.schedule;
        let positive = |v: Option<f64>| v.is_none_or(|x| x.is_finite() && x > 0.0);
        if !positive(s.gamma) {
            issues.push("schedule gamma must be positive".into());
        }
        if let Some(p) = s.p {
            if !(p > 0.0 && p <= 1.0) {
                issues.push("schedule p must lie in (0, 1]".into());
            }
        }
        if !positive(s.mu) {
            issues.push("schedule mu must be positive".into());
        }
        if !positive(s.epsilon) {
            issues.push("schedule epsilon must be positive".into());
        }
        if !positive(s.delta0) {
            issues.push("schedule delta0 must be positive".into());
        }
        if require_schedule && s.iterations.is_none() && s.epsilon.is_none() {
            issues.push("schedule needs iterations or epsilon".into());
        }
        if s.iterations == Some(0) || s.max_iterations == Some(0) {
            issues.push("iteration counts must be positive".into());
        }
        if s.monitor_every == Some(0) {
            issues.push("schedule monitor_every must be positive".into());
        }
        if s.pl && s.gamma.is_some() {
            issues.push("schedule pl and a fixed gamma are mutually exclusive".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues.join("; ")))
        }
    }
}

/// Grid of cells sharing a base config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub tau: Vec<usize>,
    /// Noise scales; generator sources only.
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub tau_points: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub base: ExperimentConfig,
    #[serde(default)]
    pub grid: Grid,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.base.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported config format_version {} (expected {CONFIG_FORMAT_VERSION})",
                cfg.base.format_version
            )));
        }
        Ok(cfg)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// One config per grid cell, in row-major order of
    /// `methods x s x tau x tau_points`; empty axes keep the base value.
    pub fn cells(&self) -> Result<Vec<(String, ExperimentConfig)>> {
        self.base.validate()?;
        if !self.grid.s.is_empty() && self.base.generator.is_none() {
            return Err(Error::Config("grid axis `s` needs a [generator] source".into()));
        }
        let methods = axis(&self.grid.methods, self.base.method.name);
        let scales = axis(&self.grid.s, self.base.generator.as_ref().map_or(0.0, |g| g.s));
        let taus = axis(&self.grid.tau, self.base.method.tau);
        let points = axis(&self.grid.tau_points, self.base.method.tau_points);
        let mut out = Vec::new();
        for &m in &methods {
            for &s in &scales {
                for &tau in &taus {
                    for &tp in &points {
                        let mut cfg = self.base.clone();
                        cfg.method.name = m;
                        cfg.method.tau = tau;
                        cfg.method.tau_points = tp;
                        let mut key = format!("{m}_tau{tau}");
                        if let Some(g) = cfg.generator.as_mut() {
                            g.s = s;
                            key.push_str(&format!("_s{s}"));
                        }
                        if cfg.dataset.as_ref().is_some_and(|d| d.clients.is_some()) {
                            key.push_str(&format!("_pts{tp}"));
                        }
                        cfg.validate()?;
                        out.push((key, cfg));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

fn one() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

fn default_lambda() -> f64 {
    crate::data::DEFAULT_LAMBDA
}

fn default_method() -> Method {
    Method::Uniform
}

fn default_inner() -> Method {
    Method::Uniform
}

/// Seeds `1..=10`.
pub fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}
