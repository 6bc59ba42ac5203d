use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nvgatesim_cli::config::SystemConfig;
use nvgatesim_cli::run::{resonance_table, run, RunError};
use nvgatesim_cli::units::{parse_quantity, Dimension};
use nvgatesim_cli::{parse_config, ExperimentConfig};

/// Gate-dynamics simulations of a ¹⁵NV⁻ centre.
#[derive(Parser)]
#[command(name = "nvgatesim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment of a configuration file and write CSV plus metadata.
    Run {
        config: PathBuf,
        /// Directory the output files go to.
        #[arg(long, default_value = ".")]
        output: PathBuf,
        /// Overrides the configured seed (0 to 2^63-1, the TOML integer range).
        #[arg(long, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
        seed: Option<u64>,
        /// Overrides the configured sweep worker count (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the exchange and strain resonances as CSV.
    Resonances {
        /// Field to compare against the resonances, e.g. "102.5 mT"; adds
        /// its offset from each centre in linewidths.
        #[arg(long = "b-field", allow_hyphen_values = true)]
        b_field: Option<String>,
        /// Take the system parameters from this configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a configuration file and print its effective form.
    Validate { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

fn resonances(b_field: Option<String>, config: Option<PathBuf>) -> Result<(), RunError> {
    let system = match &config {
        Some(path) => load(path)?.system,
        None => SystemConfig::default(),
    };
    let mut table = resonance_table(&system.params())?;
    if let Some(b) = b_field {
        let b = parse_quantity(&b, Dimension::Field).map_err(|e| RunError::Config(format!("--b-field: {e}")))?;
        table.header.push("offset_fwhm");
        for row in &mut table.rows {
            let center: f64 = row[1].parse().unwrap_or(f64::NAN);
            let fwhm: f64 = row[2].parse().unwrap_or(f64::NAN);
            row.push(format!("{}", (b * 1e3 - center) / fwhm));
        }
    }
    std::io::stdout().write_all(&table.to_csv()?).map_err(|e| RunError::Io(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output, seed, workers } => load(&config).and_then(|mut cfg| {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let files = run(&cfg, &output)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }),
        Command::Resonances { b_field, config } => resonances(b_field, config),
        Command::Validate { config } => load(&config).map(|cfg| print!("{}", cfg.to_toml())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nvgatesim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
