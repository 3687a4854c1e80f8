use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use subfrac_cli::config::{ExperimentConfig, RawConfig};
use subfrac_cli::{experiments, output, report, CliError};

#[derive(Parser)]
#[command(
    name = "subfrac",
    version,
    about = "Fractional p-sub-Laplacian experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its result files.
    Run(RunArgs),
    /// Summarize a run ledger.
    Report {
        #[arg(long)]
        ledger: PathBuf,
        /// Directory for report.txt and the plot-data files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// sobolev-scan | hardy-mu | picone | levelset | lemma-lem1 | eigen | lyapunov
    experiment: Option<String>,
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long = "box")]
    box_half: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
    #[arg(long = "R")]
    radius: Option<String>,
    #[arg(long)]
    count: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn raw(&self) -> Result<RawConfig, CliError> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        let flags = [
            ("experiment", &self.experiment),
            ("group", &self.group),
            ("norm", &self.norm),
            ("s", &self.s),
            ("p", &self.p),
            ("gamma", &self.gamma),
            ("theta", &self.theta),
            ("n", &self.n),
            ("box", &self.box_half),
            ("resolution", &self.resolution),
            ("R", &self.radius),
            ("count", &self.count),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                raw.set(key, v);
            }
        }
        if self.deterministic {
            raw.set("deterministic", "true");
        }
        if let Some(out) = &self.out {
            raw.set("out", &out.to_string_lossy());
        }
        Ok(raw)
    }
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    // Everything is validated before the output directory is touched.
    let cfg = ExperimentConfig::resolve(&args.raw()?)?;
    let start = Instant::now();
    let outcome = experiments::execute(&cfg)?;
    let elapsed = (!cfg.deterministic).then(|| start.elapsed());
    output::write_outputs(&cfg, &outcome, elapsed)?;
    let failed = outcome.rows.iter().filter(|r| !r.pass).count();
    println!(
        "{}: {} rows, {} failed, written to {}",
        cfg.experiment.id(),
        outcome.rows.len(),
        failed,
        cfg.out.display()
    );
    if failed > 0 {
        return Err(CliError::Invariant(format!("{failed} check rows failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Report { ledger, out } => {
            report::report(ledger, out.as_deref()).map(|r| print!("{}", r.text))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
