use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mshlab_cli::config::{ConfigError, Experiment, Format, RunConfig};
use mshlab_cli::{execute, write_outputs};

#[derive(Parser)]
#[command(name = "mshlab", version, about = "Numerical checks for m-subharmonic weights along submanifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify sub- and superweights and the maximality of the pole
    VerifyWeights(Common),
    /// Check the small-r expansion of perturbed poles
    Expansion(Common),
    /// Generalized Lelong numbers of pole multiples
    Lelong(Common),
    /// Relative types from sublevel maxima
    Reltype(Common),
    /// Construct localized weights and probe their singularities
    Localize(Common),
    /// Constancy of the pointwise ratio when k < m
    Siu(Common),
    /// Relative type against Lelong number
    Compare(Common),
    /// Harmonic weights in real codimension
    Minimal(Common),
    /// Everything, with default parameters
    FullSuite(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::VerifyWeights(c) => ("verify-weights", c),
            Command::Expansion(c) => ("expansion", c),
            Command::Lelong(c) => ("lelong", c),
            Command::Reltype(c) => ("reltype", c),
            Command::Localize(c) => ("localize", c),
            Command::Siu(c) => ("siu", c),
            Command::Compare(c) => ("compare", c),
            Command::Minimal(c) => ("minimal", c),
            Command::FullSuite(c) => ("full-suite", c),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parent directory for run outputs
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

fn build_config(kind: &str, c: &Common) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &c.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            if cfg.experiment.kind() != kind {
                return Err(ConfigError::new("experiment.kind", format!("config is for {}, command is {}", cfg.experiment.kind(), kind)));
            }
            cfg
        }
        None => RunConfig::new(Experiment::default_for(kind).expect("subcommand names an experiment")),
    };
    if let Some(out) = &c.out {
        cfg.output.dir = out.clone();
    }
    if let Some(t) = c.threads {
        cfg.threads = Some(t);
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(f) = c.format {
        cfg.output.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Both => Format::Both,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = cli.command.parts();
    let cfg = match build_config(kind, common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {}", e);
            return ExitCode::from(2);
        }
    };
    let (report, artifacts) = execute(&cfg);
    for r in report.records.iter().filter(|r| !r.passed) {
        eprintln!("FAIL {}: measured {} expected {}", r.name, r.measured, r.expected);
    }
    match write_outputs(&cfg, &report, &artifacts) {
        Ok(dir) => println!("{} -> {}", report.summary_line(), dir.display()),
        Err(e) => {
            eprintln!("cannot write outputs: {}", e);
            return ExitCode::from(2);
        }
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
