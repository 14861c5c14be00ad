//! `opker` command-line runner.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use opker_core::diagnostics::lower_rate_certificate;
use opker_core::estimators::{simulate_dataset, EstimateResult};
use opker_core::harness::{
    emit_campaign, emit_results, read_dataset, run_diagnostics_campaign, run_rate_sweep, write_dataset, Experiment,
    ExperimentConfig, HarnessError, OutputFormat, SlopeFit,
};
use opker_core::spectral::eigenvalue_envelope;
use opker_core::{
    assemble_normal_system, estimation_error, lse_pinv_solve, optimal_dimension, theoretical_exponent, tlse_solve,
    tsvd_solve,
};

/// Exit code for a failed acceptance margin under `--check`.
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "opker", version, about = "Kernel-in-operator learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; OPKER_WORKERS takes precedence.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Jsonl => OutputFormat::Jsonl,
            Format::Both => OutputFormat::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Tlse,
    Lse,
    Tsvd,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one dataset and write it as a JSON container.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of samples.
        #[arg(long, default_value_t = 1024)]
        m: usize,
    },
    /// Run one estimator on a dataset file and print the estimate as JSON.
    Estimate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Tlse)]
        method: MethodArg,
        /// Dimension; defaults to the oracle choice for the dataset size.
        #[arg(long)]
        n: Option<usize>,
        /// Eigenvalue threshold for `tsvd`.
        #[arg(long, default_value_t = 1e-6)]
        threshold: f64,
    },
    /// Rate sweep over the configured M grid.
    RateSweep {
        #[command(flatten)]
        common: Common,
        /// Also write a log-log data file and an SVG plot.
        #[arg(long)]
        plot: bool,
        /// Exit with code 4 when the fitted slope misses the margin.
        #[arg(long)]
        check: bool,
    },
    /// Left-tail, trace and fourth-moment diagnostics at the configured (n, M) points.
    TailDiag {
        #[command(flatten)]
        common: Common,
        /// Exit with code 4 when an informative bound is exceeded.
        #[arg(long)]
        check: bool,
    },
    /// Lower-rate certificates for the configured decay and class.
    LowerBoundCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 10_000, 100_000])]
        m: Vec<usize>,
        #[arg(long)]
        check: bool,
    },
    /// Print the eigensystem, envelope and exponents for a configuration.
    KernelInfo {
        #[arg(long)]
        config: PathBuf,
        /// Number of eigenvalues to list.
        #[arg(long, default_value_t = 12)]
        top: usize,
    },
}

enum Outcome {
    Ok,
    CheckFailed(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(EXIT_CHECK)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, HarnessError> {
    match std::env::var("OPKER_WORKERS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|w| *w > 0)
            .map(Some)
            .ok_or_else(|| HarnessError::Config(format!("OPKER_WORKERS={v:?} is not a positive integer"))),
        _ => Ok(flag),
    }
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn print_json(v: &serde_json::Value) {
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn run(cmd: Command) -> Result<Outcome, HarnessError> {
    match cmd {
        Command::Simulate { common, m } => {
            if m == 0 {
                return Err(HarnessError::Config("--m must be >= 1".into()));
            }
            let cfg = load_config(&common.config, common.seed)?;
            let exp = Experiment::build(&cfg)?;
            let data = simulate_dataset(&exp.ctx, &exp.eig, &exp.true_kernel(), exp.noise(), m, cfg.seed)?;
            let path = common.out.join(format!("{}_dataset.json", cfg.experiment_id));
            write_dataset(&path, &cfg, &data)?;
            println!("{}", path.display());
            Ok(Outcome::Ok)
        }
        Command::Estimate { dataset, method, n, threshold } => {
            let (cfg, data) = read_dataset(&dataset)?;
            let exp = Experiment::build(&cfg)?;
            let n = match n {
                Some(n) => n,
                None => exp.dimension(data.len())?.n,
            };
            let sys = assemble_normal_system(&exp.ctx, &data, &exp.eig, n)?;
            let est: EstimateResult = match method {
                MethodArg::Tlse => tlse_solve(&sys, exp.eig.eigenvalues(), exp.decay.kind)?,
                MethodArg::Lse => lse_pinv_solve(&sys),
                MethodArg::Tsvd => tsvd_solve(&sys, threshold),
            };
            let error = data.true_kernel.as_ref().map(|t| estimation_error(&est.coeffs, t, n));
            print_json(&json!({
                "experiment_id": cfg.experiment_id,
                "M": data.len(),
                "n": n,
                "estimate": est,
                "error": error.map(|e| json!({ "var_err": e.variance, "bias_err": e.bias, "total_err": e.total })),
            }));
            Ok(Outcome::Ok)
        }
        Command::RateSweep { common, plot, check } => {
            let cfg = load_config(&common.config, common.seed)?;
            let exp = Experiment::build(&cfg)?;
            let res = run_rate_sweep(&exp, workers(common.workers)?)?;
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            for p in emit_results(&res, &cfg, common.format.into(), &common.out, plot)? {
                println!("wrote {}", p.display());
            }
            match &res.fit {
                SlopeFit::Fitted { slope, stderr, .. } => println!(
                    "slope {slope:.4} +/- {stderr:.4}, theory {:.4}, margin {}: {}",
                    res.exponent,
                    res.margin,
                    if res.passed == Some(true) { "pass" } else { "fail" }
                ),
                SlopeFit::Degenerate { reason } => println!("slope degenerate: {reason}"),
            }
            if check && res.passed == Some(false) {
                return Ok(Outcome::CheckFailed("fitted slope outside the margin".into()));
            }
            Ok(Outcome::Ok)
        }
        Command::TailDiag { common, check } => {
            let cfg = load_config(&common.config, common.seed)?;
            let exp = Experiment::build(&cfg)?;
            let res = run_diagnostics_campaign(&exp, workers(common.workers)?)?;
            for p in emit_campaign(&res, &cfg, common.format.into(), &common.out)? {
                println!("wrote {}", p.display());
            }
            if let Some(m) = &res.moment {
                println!(
                    "kappa_hat {:.4} +/- {:.4} ({} trials), kappa used {}",
                    m.kappa, m.stderr, m.trials, res.kappa
                );
            }
            for r in &res.reports {
                println!(
                    "{:?} n={} M={} bound={:.4e} empirical={:.4} {}",
                    r.event,
                    r.n,
                    r.m,
                    r.analytic_bound,
                    r.empirical_probability,
                    if !r.is_informative() {
                        "uninformative"
                    } else if r.respects_bound() {
                        "ok"
                    } else {
                        "VIOLATED"
                    }
                );
            }
            let bad = res.violations().len();
            if check && bad > 0 {
                return Ok(Outcome::CheckFailed(format!("{bad} informative bounds exceeded")));
            }
            Ok(Outcome::Ok)
        }
        Command::LowerBoundCheck { config, m, check } => {
            let cfg = load_config(&config, None)?;
            let exp = Experiment::build(&cfg)?;
            let tau = exp.noise().tau();
            let mut all = true;
            let mut rows = Vec::new();
            for &mm in &m {
                let c = lower_rate_certificate(&exp.decay, exp.class.beta, exp.class.radius, tau, mm)?;
                all &= c.holds;
                rows.push(c);
            }
            print_json(&json!({ "experiment_id": cfg.experiment_id, "tau": tau, "certificates": rows }));
            if check && !all {
                return Ok(Outcome::CheckFailed("verification inequality violated".into()));
            }
            Ok(Outcome::Ok)
        }
        Command::KernelInfo { config, top } => {
            let cfg = load_config(&config, None)?;
            let exp = Experiment::build(&cfg)?;
            let k = top.min(exp.eig.len());
            let env = (1..=k).map(|i| eigenvalue_envelope(&exp.decay, i)).collect::<Result<Vec<_>, _>>()?;
            let sigma = exp.noise().second_moment().sqrt();
            let dims = cfg
                .sweep
                .m_values
                .iter()
                .map(|&m| {
                    optimal_dimension(&exp.decay, exp.class.beta, exp.class.radius, sigma, m, exp.eig.len())
                        .map(|d| json!({ "M": m, "n": d.n, "raw": d.raw }))
                })
                .collect::<Result<Vec<_>, _>>()?;
            print_json(&json!({
                "experiment_id": cfg.experiment_id,
                "model": cfg.model,
                "eigenvalues": &exp.eig.eigenvalues()[..k],
                "orthonormality_defect": exp.eig.orthonormality_defect(),
                "envelope": env,
                "decay": exp.decay,
                "exponent": theoretical_exponent(&exp.decay, exp.class.beta),
                "oracle_dimension": dims,
            }));
            Ok(Outcome::Ok)
        }
    }
}
