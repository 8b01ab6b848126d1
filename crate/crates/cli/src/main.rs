use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cvbandit::diagnostics::{self, Fault, VerifyOptions};
use cvbandit::harness::{self, apply_override, ExperimentSpec, HarnessError};

mod plot;

const SEED_ENV: &str = "BANDIT_CV_SEED";
const DEFAULT_OUT: &str = "results";

#[derive(Parser)]
#[command(
    name = "cvbandit",
    version,
    about = "Bandits with auxiliary feedback as control variates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write CSVs plus a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; falls back to $BANDIT_CV_SEED, then the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// `key=value` with a dotted key path, e.g. `instance.sigma_v2=0.04`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        threads: Option<usize>,
        /// Cap horizon at 500 and replications at 5.
        #[arg(long)]
        quick: bool,
    },
    /// Render one SVG per experiment directory under a results directory.
    Plot {
        #[arg(long, default_value = DEFAULT_OUT)]
        out: PathBuf,
    },
    /// Run the Monte Carlo property checks.
    Verify {
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Dof,
}

enum Failure {
    Config(String),
    Runtime(String),
    Verify,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Verify => 3,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            v.trim().parse().map(Some).map_err(|_| {
                Failure::Config(format!("{SEED_ENV}: `{v}` is not an unsigned integer"))
            })
        }
        Err(_) => Ok(None),
    }
}

fn load_spec(
    config: &Path,
    seed: Option<u64>,
    overrides: &[String],
    quick: bool,
) -> Result<ExperimentSpec, Failure> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", config.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    if let Some(seed) = seed.or(env_seed()?) {
        value["master_seed"] = seed.into();
    }
    let mut spec = ExperimentSpec::from_value(value)?;
    if quick {
        spec.horizon = spec.horizon.min(500);
        spec.replications = spec.replications.min(5);
    }
    Ok(spec)
}

fn run(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    overrides: &[String],
    threads: Option<usize>,
    quick: bool,
) -> Result<(), Failure> {
    if threads == Some(0) {
        return Err(Failure::Config("threads: must be at least 1".into()));
    }
    let spec = load_spec(config, seed, overrides, quick)?;
    let out = out
        .or_else(|| spec.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let result = harness::run_experiment(&spec, threads)?;
    let files = harness::write_outputs(&result, &out)?;
    println!("{:<40} {:>14} {:>12}", "series", "final regret", "95% half");
    for t in &result.traces {
        println!(
            "{:<40} {:>14.4} {:>12.4}",
            t.series_name(),
            t.final_mean(),
            t.final_ci_half()
        );
    }
    if spec.replications == 1 {
        eprintln!("warning: one replication; confidence intervals are reported as zero width");
    }
    println!("wrote {}", files.dir.display());
    Ok(())
}

fn verify(
    quick: bool,
    seed: Option<u64>,
    threads: Option<usize>,
    fault: Option<FaultArg>,
) -> Result<(), Failure> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("threads: must be at least 1".into()));
        }
        // Ignored if a pool already exists; results do not depend on it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let seed = seed.or(env_seed()?).unwrap_or(0);
    let mut opts = VerifyOptions::new(seed, quick);
    opts.fault = fault.map(|FaultArg::Dof| Fault::DofOffByOne);
    let checks = diagnostics::run_all(&opts);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!(
            "{} {:<width$}  {:>7} ms  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.elapsed_ms,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        Err(Failure::Verify)
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            overrides,
            threads,
            quick,
        } => run(&config, seed, out, &overrides, threads, quick),
        Command::Plot { out } => plot::plot_all(&out),
        Command::Verify {
            quick,
            seed,
            threads,
            inject_fault,
        } => verify(quick, seed, threads, inject_fault),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::Verify => eprintln!("verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
