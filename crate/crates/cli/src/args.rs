use std::path::PathBuf;

use clap::Args;
use pagesample_core::harness::{
    DatasetSource, ExampleSource, ExperimentConfig, GeneratorSource, Method, OutputChoice,
    ProblemSource, SweepConfig, TaskSource,
};
use pagesample_core::data::DEFAULT_LAMBDA;
use pagesample_core::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "PAGESAMPLE_OUT";

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn parse_output(s: &str) -> std::result::Result<OutputChoice, String> {
    match s {
        "random" => Ok(OutputChoice::Random),
        "last" => Ok(OutputChoice::Last),
        "best" => Ok(OutputChoice::Best),
        _ => Err(format!("unknown output rule `{s}` (expected random, last or best)")),
    }
}

/// Flags mirroring every config field. Each flag given on the command line
/// overrides the corresponding value from `--config`.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, env = OUT_ENV)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write an SVG chart of the median curve.
    #[arg(long)]
    pub chart: bool,

    /// Generator kind (`lpm` or `li`); selects the generator source.
    #[arg(long, help_heading = "Generator")]
    pub kind: Option<String>,
    /// Number of components (generator) or of the example.
    #[arg(long, help_heading = "Generator")]
    pub n: Option<usize>,
    #[arg(long, help_heading = "Generator")]
    pub d: Option<usize>,
    /// Regularization of the generator or the dataset.
    #[arg(long, help_heading = "Generator")]
    pub lambda: Option<f64>,
    #[arg(long, help_heading = "Generator")]
    pub s: Option<f64>,
    #[arg(long, help_heading = "Generator")]
    pub gen_seed: Option<u64>,
    /// Generate a fresh task from every run seed.
    #[arg(long, help_heading = "Generator")]
    pub reseed: bool,

    /// Task file; selects the task source.
    #[arg(long, help_heading = "Task")]
    pub task: Option<PathBuf>,

    /// LIBSVM file; selects the dataset source.
    #[arg(long, help_heading = "Dataset")]
    pub dataset: Option<PathBuf>,
    #[arg(long, help_heading = "Dataset")]
    pub clients: Option<usize>,
    #[arg(long, help_heading = "Dataset")]
    pub shard_seed: Option<u64>,

    /// Analytic example 1, 2 or 3; selects the example source.
    #[arg(long, help_heading = "Example")]
    pub example: Option<u8>,
    #[arg(long, help_heading = "Example")]
    pub a: Option<f64>,
    #[arg(long, help_heading = "Example")]
    pub b: Option<f64>,
    #[arg(long, help_heading = "Example")]
    pub b1: Option<f64>,
    #[arg(long, help_heading = "Example")]
    pub g: Option<usize>,
    #[arg(long, help_heading = "Example")]
    pub m: Option<usize>,

    #[arg(long, value_parser = parse_method, help_heading = "Method")]
    pub method: Option<Method>,
    #[arg(long, help_heading = "Method")]
    pub tau: Option<usize>,
    #[arg(long, value_parser = parse_method, help_heading = "Method")]
    pub inner: Option<Method>,
    #[arg(long, help_heading = "Method")]
    pub tau_points: Option<usize>,

    #[arg(long, help_heading = "Schedule")]
    pub gamma: Option<f64>,
    #[arg(long, help_heading = "Schedule")]
    pub p: Option<f64>,
    /// Use the Polyak-Lojasiewicz stepsize.
    #[arg(long, help_heading = "Schedule")]
    pub pl: bool,
    #[arg(long, help_heading = "Schedule")]
    pub mu: Option<f64>,
    #[arg(long, help_heading = "Schedule")]
    pub iterations: Option<usize>,
    #[arg(long, help_heading = "Schedule")]
    pub epsilon: Option<f64>,
    #[arg(long, help_heading = "Schedule")]
    pub delta0: Option<f64>,
    #[arg(long, help_heading = "Schedule")]
    pub max_iterations: Option<usize>,
    #[arg(long, help_heading = "Schedule")]
    pub monitor_every: Option<usize>,
    /// Reported iterate: random, last or best.
    #[arg(long, value_parser = parse_output, help_heading = "Schedule")]
    pub output: Option<OutputChoice>,
}

fn no_source(flag: &str) -> Error {
    Error::Config(format!("--{flag} does not apply to the selected problem source"))
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::read(path)?,
            None => ExperimentConfig::default(),
        };
        self.apply(&mut cfg)?;
        Ok(cfg)
    }

    pub fn load_sweep(&self) -> Result<SweepConfig> {
        let mut sweep = match &self.config {
            Some(path) => SweepConfig::read(path)?,
            None => SweepConfig {
                base: ExperimentConfig::default(),
                grid: Default::default(),
            },
        };
        self.apply(&mut sweep.base)?;
        Ok(sweep)
    }

    /// Overrides `cfg` with every flag that was given. A source-selecting
    /// flag (`--kind`, `--task`, `--dataset`, `--example`) replaces the
    /// file's source unless it is of the same kind.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if self.out_dir.is_some() {
            cfg.out_dir = self.out_dir.clone();
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.chart |= self.chart;

        if let Some(kind) = &self.kind {
            match cfg.generator.as_mut() {
                Some(g) => g.kind = kind.clone(),
                None => cfg.set_source(ProblemSource::Generator(GeneratorSource {
                    kind: kind.clone(),
                    n: 1000,
                    d: 10,
                    lambda: DEFAULT_LAMBDA,
                    s: 0.0,
                    seed: 1,
                    reseed: false,
                })),
            }
        }
        if let Some(path) = &self.task {
            cfg.set_source(ProblemSource::Task(TaskSource { path: path.clone() }));
        }
        if let Some(path) = &self.dataset {
            match cfg.dataset.as_mut() {
                Some(d) => d.path = path.clone(),
                None => cfg.set_source(ProblemSource::Dataset(DatasetSource {
                    path: path.clone(),
                    lambda: DEFAULT_LAMBDA,
                    clients: None,
                    shard_seed: 0,
                })),
            }
        }
        if let Some(which) = self.example {
            match cfg.example.as_mut() {
                Some(e) => e.which = which,
                None => cfg.set_source(ProblemSource::Example(ExampleSource {
                    which,
                    n: 0,
                    a: 0.0,
                    b: 0.0,
                    b1: 0.0,
                    g: 0,
                    m: 0,
                })),
            }
        }

        if let Some(g) = cfg.generator.as_mut() {
            set(&mut g.n, self.n);
            set(&mut g.d, self.d);
            set(&mut g.lambda, self.lambda);
            set(&mut g.s, self.s);
            set(&mut g.seed, self.gen_seed);
            g.reseed |= self.reseed;
        } else {
            for (flag, given) in [
                ("d", self.d.is_some()),
                ("s", self.s.is_some()),
                ("gen-seed", self.gen_seed.is_some()),
                ("reseed", self.reseed),
            ] {
                if given {
                    return Err(no_source(flag));
                }
            }
        }
        if let Some(d) = cfg.dataset.as_mut() {
            set(&mut d.lambda, self.lambda);
            if self.clients.is_some() {
                d.clients = self.clients;
            }
            set(&mut d.shard_seed, self.shard_seed);
        } else if self.clients.is_some() || self.shard_seed.is_some() {
            return Err(no_source(if self.clients.is_some() { "clients" } else { "shard-seed" }));
        }
        if let Some(e) = cfg.example.as_mut() {
            set(&mut e.n, self.n);
            set(&mut e.a, self.a);
            set(&mut e.b, self.b);
            set(&mut e.b1, self.b1);
            set(&mut e.g, self.g);
            set(&mut e.m, self.m);
        } else if [self.a, self.b, self.b1].iter().any(Option::is_some) || self.g.is_some() || self.m.is_some() {
            return Err(no_source("a/b/b1/g/m"));
        }
        if self.n.is_some() && cfg.generator.is_none() && cfg.example.is_none() {
            return Err(no_source("n"));
        }
        if self.lambda.is_some() && cfg.generator.is_none() && cfg.dataset.is_none() {
            return Err(no_source("lambda"));
        }

        let m = &mut cfg.method;
        set(&mut m.name, self.method);
        set(&mut m.tau, self.tau);
        set(&mut m.inner, self.inner);
        set(&mut m.tau_points, self.tau_points);

        let s = &mut cfg.schedule;
        for (slot, flag) in [
            (&mut s.gamma, self.gamma),
            (&mut s.p, self.p),
            (&mut s.mu, self.mu),
            (&mut s.epsilon, self.epsilon),
            (&mut s.delta0, self.delta0),
        ] {
            if flag.is_some() {
                *slot = flag;
            }
        }
        for (slot, flag) in [
            (&mut s.iterations, self.iterations),
            (&mut s.max_iterations, self.max_iterations),
            (&mut s.monitor_every, self.monitor_every),
        ] {
            if flag.is_some() {
                *slot = flag;
            }
        }
        s.pl |= self.pl;
        set(&mut s.output, self.output);
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
