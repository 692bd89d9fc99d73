use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gibbs_core::error::{Error, Result};
use gibbs_core::experiment::{self, ExperimentConfig, Format, SCHEMA};

#[derive(Parser)]
#[command(name = "gibbs-lab", version, about = "Run Gibbs-sampler experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV series and JSON summary.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's output.dir, else out/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for sweeps.
        #[arg(long, env = "GIBBS_LAB_THREADS")]
        threads: Option<usize>,
        /// Comma-separated subset of csv,json.
        #[arg(long, value_delimiter = ',', value_parser = parse_format)]
        format: Option<Vec<Format>>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Print the JSON Schema of the config format.
    Schema,
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    match s.trim() {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(format!("unknown format '{other}' (expected csv or json)")),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

fn run(config: &Path, out: Option<PathBuf>, threads: Option<usize>, format: Option<Vec<Format>>) -> Result<i32> {
    let cfg = load(config)?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let base = config.parent().filter(|p| !p.as_os_str().is_empty());
    let report = experiment::run_scenario(&cfg, base)?;
    let output = cfg.output.clone().unwrap_or(experiment::config::OutputConfig { dir: None, formats: None });
    let dir = out
        .or(output.dir)
        .unwrap_or_else(|| PathBuf::from("out").join(&report.scenario));
    let formats = format.or(output.formats).unwrap_or_else(|| vec![Format::Csv, Format::Json]);
    let written = report.emit(&dir, &formats)?;
    print!("{}", report.text_summary());
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(if report.pass { 0 } else { experiment::EXIT_INVARIANT })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, threads, format } => run(&config, out, threads, format),
        Command::Validate { config } => load(&config).map(|c| {
            println!("{}: valid {} config", config.display(), c.scenario.name());
            0
        }),
        Command::Schema => {
            println!("{SCHEMA}");
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}
