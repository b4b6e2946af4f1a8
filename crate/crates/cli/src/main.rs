mod args;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pagesample_core::harness::{
    cmd_constants, cmd_generate, cmd_run, cmd_sweep, cmd_verify, exit_code, median,
    GenerateParams, Method, VerifyParams, EXIT_CONFIG, EXIT_OK, EXIT_VERIFY,
};
use pagesample_core::data::DEFAULT_LAMBDA;
use pagesample_core::taskgen::TaskKind;
use pagesample_core::Result;

use args::{ConfigArgs, OUT_ENV};

/// PAGE with arbitrary samplings: task generation, runs, sweeps and checks.
#[derive(Parser, Debug)]
#[command(name = "pagesample", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a quadratic task file and report its constants.
    Generate(GenerateArgs),
    /// Run one configuration over all seeds.
    Run(ConfigArgs),
    /// Run every cell of a grid.
    Sweep(SweepArgs),
    /// Check the variance identities of every sampling.
    Verify(VerifyArgs),
    /// Report smoothness constants, parameters and complexity rates.
    Constants(ConfigArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// `lpm` (controlled Hessian variance) or `li` (controlled L_i spread).
    #[arg(long, default_value = "lpm")]
    kind: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Task file; defaults to a name derived from the parameters inside the
    /// output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = OUT_ENV)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated methods; overrides the grid.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long = "taus", value_delimiter = ',')]
    taus: Option<Vec<usize>>,
    #[arg(long = "s-values", value_delimiter = ',')]
    s_values: Option<Vec<f64>>,
    #[arg(long = "tau-points-values", value_delimiter = ',')]
    tau_points_values: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    tau: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 100_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn generate(a: &GenerateArgs) -> Result<i32> {
    let kind = TaskKind::parse(&a.kind)?;
    let out = a.out.clone().unwrap_or_else(|| {
        let name = format!("{}_n{}_d{}_s{}_seed{}.toml", kind.name(), a.n, a.d, a.s, a.seed);
        a.out_dir.clone().unwrap_or_default().join(name)
    });
    let report = cmd_generate(&GenerateParams {
        kind,
        n: a.n,
        d: a.d,
        lambda: a.lambda,
        s: a.s,
        seed: a.seed,
        out,
    })?;
    println!("{report}");
    Ok(EXIT_OK)
}

fn run(a: &ConfigArgs) -> Result<i32> {
    let cfg = a.load()?;
    let outcome = cmd_run(&cfg)?;
    let s = &outcome.plan.summary;
    println!(
        "{}: gamma {:.6e}, p {:.6e}, T {}, predicted calls {:.0}",
        s.method, s.gamma, s.p, s.iterations, s.predicted_calls
    );
    let finals: Vec<f64> = outcome.traces.iter().map(|(_, t)| t.last().grad_norm_sq).collect();
    println!("median final |grad f|^2 {:.6e} over {} seeds", median(&finals), finals.len());
    if let Some(eps) = cfg.schedule.epsilon {
        let reached: Vec<f64> = outcome
            .calls_to_reach(eps)
            .iter()
            .map(|c| c.map_or(f64::INFINITY, |c| c as f64))
            .collect();
        println!("median calls to reach {eps:e}: {:.0}", median(&reached));
    }
    if let Some(dir) = &cfg.out_dir {
        println!("traces written to {}", dir.display());
    }
    Ok(EXIT_OK)
}

fn sweep(a: &SweepArgs) -> Result<i32> {
    let mut sweep = a.config.load_sweep()?;
    if let Some(ms) = &a.methods {
        sweep.grid.methods = ms.iter().map(|m| Method::parse(m)).collect::<Result<_>>()?;
    }
    if let Some(t) = &a.taus {
        sweep.grid.tau = t.clone();
    }
    if let Some(s) = &a.s_values {
        sweep.grid.s = s.clone();
    }
    if let Some(t) = &a.tau_points_values {
        sweep.grid.tau_points = t.clone();
    }
    let rows = cmd_sweep(&sweep)?;
    println!("cell                           seed  calls_to_eps  final |grad f|^2");
    for r in &rows {
        println!(
            "{:<30} {:>4}  {:>12}  {:.6e}",
            r.cell,
            r.seed,
            r.calls_to_eps.map_or("-".into(), |c| c.to_string()),
            r.final_grad_norm_sq
        );
    }
    if let Some(dir) = &sweep.base.out_dir {
        println!("sweep table written to {}", dir.join("sweep.csv").display());
    }
    Ok(EXIT_OK)
}

fn verify(a: &VerifyArgs) -> Result<i32> {
    let report = cmd_verify(&VerifyParams {
        n: a.n,
        d: a.d,
        tau: a.tau,
        trials: a.trials,
        mc_draws: a.mc_draws,
        seed: a.seed,
    })?;
    println!("{report}");
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFY })
}

fn constants(a: &ConfigArgs) -> Result<i32> {
    let report = cmd_constants(&a.load()?)?;
    print!("{report}");
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
        Command::Constants(a) => constants(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
