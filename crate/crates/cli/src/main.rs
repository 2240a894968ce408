use std::path::PathBuf;
use std::process::ExitCode;

use aecrit::harness::{error_line, run, ExperimentConfig, Overrides, Registry};
use clap::{Args, Parser, Subcommand};

/// Experiments on the critical points of a tied-weight ReLU autoencoder
/// trained on sparse-coding data.
#[derive(Parser)]
#[command(name = "aecrit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dictionary, sample batch, sidecar and CSV exports.
    Gen(Flags),
    /// Support recovery trials (samples = number of trials).
    Support(Flags),
    /// Mean column gradient norm at perturbed points.
    Gradtable(Flags),
    /// Loss and gradient norm along a random direction.
    Scan(Flags),
    /// Closed-form alpha, beta, e for every column.
    Decompose(Flags),
    /// Per-unit firing/support disagreement rates.
    Mismatch(Flags),
    /// Finite-difference gradient check; nonzero exit if it fails.
    Gradcheck(Flags),
    /// The full h x p gradient table.
    Table1(Flags),
    /// Run the mode named in the config file (or --mode).
    Run {
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        flags: Flags,
    },
    /// List available modes.
    Modes,
}

/// Flags override values read from --config.
#[derive(Args)]
struct Flags {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Signal dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Number of atoms / hidden units.
    #[arg(long)]
    h: Option<usize>,
    /// Sparsity exponent, k = round(h^p).
    #[arg(long)]
    p: Option<f64>,
    /// Amplitude lower bound.
    #[arg(long)]
    a: Option<f64>,
    /// Amplitude upper bound.
    #[arg(long)]
    b: Option<f64>,
    /// nu^2 (default p + 0.01).
    #[arg(long = "nu-sq")]
    nu_sq: Option<f64>,
    /// Bias prefactor (mode default: 2 or 0.3).
    #[arg(long)]
    prefactor: Option<f64>,
    /// Batch size N (trials for `support`).
    #[arg(long)]
    samples: Option<usize>,
    /// Number of perturbed points.
    #[arg(long)]
    points: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `decompose`: also enumerate supports for the exact residual.
    #[arg(long)]
    exact: bool,
}

impl Flags {
    fn resolve(self, mode: Option<String>) -> aecrit::Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let overrides = Overrides {
            n: self.n,
            h: self.h,
            p: self.p,
            a: self.a,
            b: self.b,
            nu_sq: self.nu_sq,
            prefactor: self.prefactor,
            samples: self.samples,
            points: self.points,
            seed: self.seed,
            out: self.out,
            mode,
            exact: self.exact.then_some(true),
        };
        Ok(overrides.apply(base))
    }
}

fn main() -> ExitCode {
    let (flags, mode) = match Cli::parse().command {
        Command::Gen(f) => (f, Some("gen")),
        Command::Support(f) => (f, Some("support")),
        Command::Gradtable(f) => (f, Some("gradtable")),
        Command::Scan(f) => (f, Some("scan")),
        Command::Decompose(f) => (f, Some("decompose")),
        Command::Mismatch(f) => (f, Some("mismatch")),
        Command::Gradcheck(f) => (f, Some("gradcheck")),
        Command::Table1(f) => (f, Some("table1")),
        Command::Run { mode, flags } => {
            return finish(flags.resolve(mode).and_then(|cfg| run(&cfg)));
        }
        Command::Modes => {
            for (name, about) in Registry::builtin().describe() {
                println!("{name:<10} {about}");
            }
            return ExitCode::SUCCESS;
        }
    };
    finish(flags.resolve(mode.map(String::from)).and_then(|cfg| run(&cfg)))
}

fn finish(result: aecrit::Result<aecrit::harness::Manifest>) -> ExitCode {
    match result {
        Ok(manifest) => {
            println!("{}", manifest.config.out.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
