//! Command-line front end: run experiments from config files, validate
//! configs, emit requirement-budget sweep tables and run the demodulation
//! selftest.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use quelec_cli::{config, experiments, output};

use output::{OutputFormat, Provenance};

#[derive(Parser)]
#[command(name = "quelec", version, about = "Qubit control/readout electronics simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    #[value(name = "json-lines")]
    JsonLines,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> OutputFormat {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::JsonLines => OutputFormat::JsonLines,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Validate a config file and print the normalized form.
    Validate { config: PathBuf },
    /// Emit a requirement-budget sweep table (fidelity vs jitter, SFDR or
    /// bias precision).
    Budget {
        /// One of: jitter, sfdr, bias.
        kind: String,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        stop: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run the demodulation selftest (fs/4 equivalence, channel isolation,
    /// rotating-phase circles).
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn print_issues(issues: &[config::ConfigIssue]) {
    eprintln!("config invalid ({} issue{}):", issues.len(), if issues.len() == 1 { "" } else { "s" });
    for issue in issues {
        eprintln!("  {issue}");
    }
}

fn execute(
    mut cfg: config::ExperimentConfig,
    raw: &str,
    seed_override: Option<u64>,
    out_dir: &PathBuf,
    format: OutputFormat,
) -> ExitCode {
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let result = match experiments::run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(2);
        }
    };
    let provenance = Provenance::new(raw, cfg.seed);
    match output::write_outputs(&result, &provenance, out_dir, format) {
        Ok(paths) => {
            println!("{}: {} rows", result.experiment, result.rows.len());
            if let Some(fit) = &result.fit {
                let params: Vec<String> =
                    fit.params.iter().map(|(n, v)| format!("{n}={v:.6e}")).collect();
                println!("fit {} ({})", fit.model, params.join(", "));
            }
            for (key, value) in &result.extras {
                println!("{key} = {value}");
            }
            for path in paths {
                println!("wrote {}", path.display());
            }
            let passed = result
                .extras
                .get("passed")
                .and_then(|v| v.as_bool())
                .unwrap_or(true);
            if passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("selftest checks failed");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("cannot write outputs: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config: path, seed, out_dir, format } => {
            match config::load(&path) {
                Ok((cfg, raw)) => execute(cfg, &raw, seed, &out_dir, format.into()),
                Err(issues) => {
                    print_issues(&issues);
                    ExitCode::from(1)
                }
            }
        }
        Command::Validate { config: path } => match config::load(&path) {
            Ok((cfg, _)) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&cfg).expect("serializable config")
                );
                ExitCode::SUCCESS
            }
            Err(issues) => {
                print_issues(&issues);
                ExitCode::from(1)
            }
        },
        Command::Budget { kind, start, stop, points, out_dir, seed, format } => {
            let (default_start, default_stop, default_points) = match kind.as_str() {
                "jitter" => (0.0, 20e-12, 21),
                "sfdr" => (-80.0, -20.0, 31),
                "bias" => (1e-6, 1e-4, 25),
                other => {
                    eprintln!("unknown budget kind {other:?} (expected jitter, sfdr or bias)");
                    return ExitCode::from(1);
                }
            };
            let text = format!(
                "kind = \"budget_sweep\"\nseed = {seed}\n[budget]\nkind = \"{kind}\"\nstart = {:e}\nstop = {:e}\npoints = {}\n",
                start.unwrap_or(default_start),
                stop.unwrap_or(default_stop),
                points.unwrap_or(default_points),
            );
            match config::parse(&text) {
                Ok(cfg) => execute(cfg, &text, None, &out_dir, format.into()),
                Err(issues) => {
                    print_issues(&issues);
                    ExitCode::from(1)
                }
            }
        }
        Command::Selftest { seed, out_dir } => {
            let text = format!("kind = \"demod_selftest\"\nseed = {seed}\n");
            match config::parse(&text) {
                Ok(cfg) => execute(cfg, &text, None, &out_dir, OutputFormat::Csv),
                Err(issues) => {
                    print_issues(&issues);
                    ExitCode::from(1)
                }
            }
        }
    }
}
