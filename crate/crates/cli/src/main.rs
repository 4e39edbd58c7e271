//! `spincim` command-line front-end.
//!
//! Exit status: 0 on success, 1 for usage or configuration problems, 2 when
//! an experiment fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spincim::array::CimOp;
use spincim::attack::{AttackVariant, Guess};
use spincim::config::ExperimentConfig;
use spincim::device::PairLevel;
use spincim::experiments;

#[derive(Parser, Debug)]
#[command(
    name = "spincim",
    version,
    about = "Security simulator for spin-based computing-in-memory"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment configuration; defaults apply when absent
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials per estimate (overrides the config)
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Output directory for reports (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo trials
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sense-current margins of the configured levels
    Margins,
    /// Output of one operation for every input combination
    TruthTable {
        #[arg(long, default_value = "CimAND")]
        op: String,
        /// Sense noise sigma in µA
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// CimAND failure rates per pair state and zone temperature
    McFailure {
        /// Zone temperature in °C; repeatable. Defaults to the config list
        #[arg(long = "temp")]
        temps: Vec<f64>,
        /// Pair state (AP,AP | AP,P | P,P); repeatable. Defaults to AP,AP and AP,P
        #[arg(long = "pair")]
        pairs: Vec<String>,
    },
    /// Authentication bypass rate under laser heating
    AuthAttack {
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Zone temperature in °C
        #[arg(long)]
        temp: Option<f64>,
        /// Force every targeted AP,P sense to read as P,P
        #[arg(long)]
        forced: bool,
        /// Username guess: correct | random | wrong | hamming:K
        #[arg(long)]
        user: Option<String>,
        /// Password guess: correct | random | wrong | hamming:K
        #[arg(long)]
        password: Option<String>,
        /// Credential width in bits
        #[arg(long)]
        width: Option<usize>,
    },
    /// Run an assembly program on the emulated machine
    IsaRun {
        #[arg(long)]
        program: PathBuf,
        /// Also run the conventional lowering and compare
        #[arg(long)]
        compare_lowered: bool,
        /// Sense noise sigma in µA
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Side-channel classification and Hamming-weight experiments
    Sca {
        /// Training and test samples per class
        #[arg(long)]
        per_class: Option<usize>,
    },
    /// Adaptive-reference mitigation before/after rates
    Mitigate,
    /// Fit sense noise and the collapse law to the failure-rate targets
    Calibrate,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum VariantArg {
    None,
    Gate,
    Xnor,
}

impl From<VariantArg> for AttackVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::None => AttackVariant::None,
            VariantArg::Gate => AttackVariant::GateLevel,
            VariantArg::Xnor => AttackVariant::XnorLevel,
        }
    }
}

enum Failure {
    Usage(anyhow::Error),
    Experiment(anyhow::Error),
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn experiment<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Experiment(e.into())
}

fn parse_guess(s: &str) -> anyhow::Result<Guess> {
    match s.to_ascii_lowercase().as_str() {
        "correct" => Ok(Guess::Correct),
        "random" => Ok(Guess::Random),
        "wrong" => Ok(Guess::Wrong),
        other => match other.strip_prefix("hamming:") {
            Some(k) => Ok(Guess::Hamming(
                k.parse()
                    .with_context(|| format!("bad bit count in `{s}`"))?,
            )),
            None => Err(anyhow!(
                "unknown guess `{s}`; use correct, random, wrong or hamming:K"
            )),
        },
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(usage)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn write_text(dir: &Path, name: &str, text: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn emit<T: serde::Serialize>(report: &experiments::Report<T>, dir: &Path) -> Result<(), Failure> {
    let path = report
        .write(dir)
        .with_context(|| format!("cannot write report to {}", dir.display()))
        .map_err(experiment)?;
    print!("{}", report.to_json());
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(usage(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(experiment)?;
    }
    let mut cfg = load_config(&cli.common)?;
    let out = cfg.out_dir.clone();

    match cli.command {
        Command::Margins => {
            cfg.validate().map_err(usage)?;
            emit(&experiments::margins(&cfg), &out)
        }
        Command::TruthTable { op, noise } => {
            let op: CimOp = op.parse().map_err(usage)?;
            cfg.validate().map_err(usage)?;
            let r = experiments::truth_table(&cfg, op, noise).map_err(experiment)?;
            emit(&r, &out)
        }
        Command::McFailure { temps, pairs } => {
            let pairs = if pairs.is_empty() {
                vec![PairLevel::ApAp, PairLevel::ApP]
            } else {
                pairs
                    .iter()
                    .map(|p| p.parse::<PairLevel>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(usage)?
            };
            let temps = if temps.is_empty() {
                cfg.attack.temperatures.clone()
            } else {
                temps
            };
            cfg.validate().map_err(usage)?;
            let r = experiments::mc_failure(&cfg, &pairs, &temps).map_err(experiment)?;
            let csv = r.result.to_csv().map_err(experiment)?;
            write_text(&out, "mc-failure.csv", &csv).map_err(experiment)?;
            emit(&r, &out)
        }
        Command::AuthAttack {
            variant,
            temp,
            forced,
            user,
            password,
            width,
        } => {
            if let Some(v) = variant {
                cfg.attack.variant = v.into();
            }
            if let Some(t) = temp {
                cfg.attack.zone_temp = t;
            }
            cfg.attack.forced_flip |= forced;
            if let Some(u) = user {
                cfg.attack.policy.username = parse_guess(&u).map_err(usage)?;
            }
            if let Some(p) = password {
                cfg.attack.policy.password = parse_guess(&p).map_err(usage)?;
            }
            if let Some(w) = width {
                cfg.attack.credential_width = w;
            }
            cfg.validate().map_err(usage)?;
            let r = experiments::auth_attack(&cfg).map_err(experiment)?;
            emit(&r, &out)
        }
        Command::IsaRun {
            program,
            compare_lowered,
            noise,
        } => {
            let source = std::fs::read_to_string(&program)
                .with_context(|| format!("cannot read program {}", program.display()))
                .map_err(usage)?;
            cfg.validate().map_err(usage)?;
            let (r, trace) =
                experiments::isa_run(&cfg, &source, compare_lowered, noise).map_err(experiment)?;
            write_text(&out, "isa-trace.csv", &trace.to_csv()).map_err(experiment)?;
            emit(&r, &out)
        }
        Command::Sca { per_class } => {
            if let Some(n) = per_class {
                cfg.sca.per_class = n;
            }
            cfg.validate().map_err(usage)?;
            let r = experiments::sca(&cfg).map_err(experiment)?;
            let csv = r.result.accuracy_csv().map_err(experiment)?;
            write_text(&out, "sca-accuracy.csv", &csv).map_err(experiment)?;
            emit(&r, &out)
        }
        Command::Mitigate => {
            cfg.validate().map_err(usage)?;
            let r = experiments::mitigate(&cfg).map_err(experiment)?;
            emit(&r, &out)
        }
        Command::Calibrate => {
            cfg.validate().map_err(usage)?;
            let r = experiments::calibrate_report(&cfg).map_err(experiment)?;
            emit(&r, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Experiment(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
