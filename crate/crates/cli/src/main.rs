use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pacmerge_core::harness::{
    gen_pool, render, report, run, selftest, sweep_n, ExperimentConfig, Mode, ReportFormat,
    RunRecord, ValiditySummary,
};
use pacmerge_core::Error;

#[derive(Parser)]
#[command(name = "pacmerge", version, about = "Certified model merging on a toy model zoo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or reuse) the source-model pool for a config.
    GenPool(Common),
    /// Run the config and write record.json and table.csv.
    Certify(Common),
    /// Sweep the configured support sizes with DDP, half-validation and
    /// full-data bound optimization.
    Sweep(Common),
    /// Render an existing record.
    Report {
        #[command(flatten)]
        common: Common,
        /// Record to render; defaults to `<out>/<scenario>/record.json`.
        record: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "md")]
    format: String,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut config = match (&self.config, &self.scenario) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::scenario(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    fn format(&self) -> Result<ReportFormat, Error> {
        self.format.parse()
    }
}

fn print_record(record: &RunRecord, format: ReportFormat) -> Result<(), Error> {
    print!("{}", render(record, format)?);
    Ok(())
}

fn write_and_print(config: &ExperimentConfig, record: &RunRecord, format: ReportFormat) -> Result<(), Error> {
    let dir = config.out_dir.join(&config.scenario);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?;
    report(record, ReportFormat::Json, &dir.join("record.json"))?;
    report(record, ReportFormat::Csv, &dir.join("table.csv"))?;
    print_record(record, format)?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::GenPool(common) => {
            let config = common.load()?;
            println!("{}", gen_pool(&config)?.display());
        }
        Command::Certify(common) => {
            let format = common.format()?;
            let config = common.load()?;
            let out = run(&config)?;
            print_record(&out.record, format)?;
            if config.mode == Mode::Validity {
                let summary = ValiditySummary::from_records(&out.record.records, config.delta);
                eprintln!(
                    "violations {}/{} (frequency {:.3}, allowed {:.3})",
                    summary.violations, summary.trials, summary.frequency, summary.threshold
                );
            }
            eprintln!("wrote {} and {}", out.json.display(), out.csv.display());
        }
        Command::Sweep(common) => {
            let format = common.format()?;
            let config = common.load()?;
            let record = sweep_n(&config, &config.n)?;
            write_and_print(&config, &record, format)?;
        }
        Command::Report { common, record } => {
            let format = common.format()?;
            let path = match record {
                Some(p) => p,
                None => {
                    let config = common.load()?;
                    config.out_dir.join(&config.scenario).join("record.json")
                }
            };
            print_record(&RunRecord::load(&path)?, format)?;
        }
        Command::Selftest => {
            let outcome = selftest();
            for c in &outcome.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if !outcome.passed() {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("PACMERGE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: could not cap threads: {e}");
        }
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
