use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dr_core::bench::{compare, evaluate, read_results_dir, QualityReport};
use dr_core::scenegen::{generate_sequence, read_bundle, write_bundle, SceneConfig};

/// Scene-quality evaluation and report comparison.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Score a results directory against its bundle.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two quality reports. Exits 1 on regressions.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a scene bundle to a directory.
    Generate {
        /// Scene config JSON; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_or_print(out: Option<&Path>, json: &str) -> Result<(), String> {
    match out {
        Some(p) => std::fs::write(p, json).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn read_report(p: &Path) -> Result<QualityReport, String> {
    let bytes = std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", p.display()))
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Evaluate { results, bundle, out } => {
            let b = read_bundle(&bundle).map_err(|e| format!("{}: {e}", bundle.display()))?;
            let res = read_results_dir(&results, &b).map_err(|e| e.to_string())?;
            let report = evaluate(&res, &b).map_err(|e| e.to_string())?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            write_or_print(out.as_deref(), &json)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Compare { a, b, out } => {
            let c = compare(&read_report(&a)?, &read_report(&b)?).map_err(|e| e.to_string())?;
            print!("{}", c.table());
            if let Some(p) = out {
                let json = serde_json::to_string_pretty(&c).map_err(|e| e.to_string())?;
                write_or_print(Some(&p), &json)?;
            }
            Ok(if c.has_regressions() { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Cmd::Generate { config, out } => {
            let cfg = match config {
                Some(p) => {
                    let bytes = std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                    serde_json::from_slice::<SceneConfig>(&bytes).map_err(|e| format!("{}: {e}", p.display()))?
                }
                None => SceneConfig::default(),
            };
            let b = generate_sequence(&cfg).map_err(|e| e.to_string())?;
            write_bundle(&b, &out).map_err(|e| e.to_string())?;
            println!("{} frames, bundle {}", b.len(), b.bundle_hash());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("drbench: {e}");
            ExitCode::from(2)
        }
    }
}
