use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cnumlab::archive::{self, ArchiveEntry};
use cnumlab::config::{Experiment, Overrides, RunConfig};
use cnumlab::report::{self, Format};
use cnumlab::run::run;

const EXIT_AUDIT_FAILED: u8 = 2;
const EXIT_USAGE: u8 = 1;

#[derive(Parser)]
#[command(name = "cnumlab", version, about = "Audits, sweeps and reports for truncated Bose gases and small magnets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Experimental {
    /// JSON run configuration; flags given here override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Inequality chain on a grid or on the seeded random suite.
    Audit(Experimental),
    /// Pressures, density and condensate observables over a grid.
    Sweep(Experimental),
    /// Coherent-state weights and their moments.
    Weights(Experimental),
    /// Order parameter over a (V, lambda) grid.
    QuasiAverage(Experimental),
    /// Heisenberg magnet thermodynamics.
    Magnet(Experimental),
    /// Rate functions and one-sided derivatives of a measure sequence.
    Griffiths(Experimental),
    /// The explicit weight with a degenerate limit.
    Pathological(Experimental),
    /// Regenerate the outputs of an archived run.
    Report {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long, value_enum, default_value = "all")]
        format: Format,
        /// Output directory; defaults to the archive's directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Audit,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Audit) => ExitCode::from(EXIT_AUDIT_FAILED),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    let (experiment, args) = match command {
        Command::Audit(a) => (Experiment::Audit, a),
        Command::Sweep(a) => (Experiment::Sweep, a),
        Command::Weights(a) => (Experiment::Weights, a),
        Command::QuasiAverage(a) => (Experiment::QuasiAverage, a),
        Command::Magnet(a) => (Experiment::Magnet, a),
        Command::Griffiths(a) => (Experiment::Griffiths, a),
        Command::Pathological(a) => (Experiment::Pathological, a),
        Command::Report {
            archive,
            run_id,
            format,
            output,
        } => return regenerate(&archive, run_id.as_deref(), format, output),
    };
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?,
        None => RunConfig::new(experiment),
    };
    if config.experiment != experiment {
        log::warn!("config names `{}`; running `{experiment}` as requested", config.experiment);
        config.experiment = experiment;
    }
    let config = args.overrides.apply(config).with_defaults();
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let output = run(&config).map_err(|e| Failure::Usage(format!("computation failed: {e}")))?;
    let entry = ArchiveEntry::new(&config, output);
    archive::append(&archive::archive_path(&config.output), &entry).map_err(|e| Failure::Usage(e.to_string()))?;
    log::info!("archived run {} in {}", entry.run_id, config.output.display());
    report::write_all(&entry, &config.output, Format::All).map_err(|e| Failure::Usage(e.to_string()))?;
    print!("{}", report::text_summary(&entry));
    if entry.audit.all_pass() {
        Ok(())
    } else {
        Err(Failure::Audit)
    }
}

fn regenerate(path: &std::path::Path, run_id: Option<&str>, format: Format, output: Option<PathBuf>) -> Result<(), Failure> {
    let entry = archive::select(path, run_id).map_err(|e| Failure::Usage(e.to_string()))?;
    let dir = output.unwrap_or_else(|| path.parent().map(PathBuf::from).unwrap_or_default());
    let files = report::write_all(&entry, &dir, format).map_err(|e| Failure::Usage(e.to_string()))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
