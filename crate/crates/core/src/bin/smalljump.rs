//! `smalljump --config study.toml [--kind K] [--seed N] [--out DIR] [--paths N] [--label L]`
//!
//! Exit codes: 0 success, 1 usage, 2 config, 3 numerical failure,
//! 4 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use smalljump::study::{self, Overrides, StudyConfig, StudyKind};

fn parse_kind(s: &str) -> Result<StudyKind, String> {
    s.parse::<StudyKind>().map_err(|_| {
        let names: Vec<&str> = StudyKind::ALL.iter().map(|k| k.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

/// Runs a small-jump approximation study and writes CSV reports.
#[derive(Debug, Parser)]
#[command(name = "smalljump", version)]
struct Cli {
    /// Study configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Study kind: metrics, bounds, verify, rates or select_eps.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<StudyKind>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Path count override.
    #[arg(long)]
    paths: Option<usize>,
    /// Fixed label used in report file names instead of a timestamp.
    #[arg(long)]
    label: Option<String>,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let overrides = Overrides {
        kind: cli.kind,
        seed: cli.seed,
        out: cli.out,
        n_paths: cli.paths,
        label: cli.label,
        workers: cli.workers,
    };
    let result = StudyConfig::from_file(&cli.config).and_then(|mut cfg| {
        cfg.apply(&overrides);
        study::run_study(&cfg)
    });
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.failures > 0 {
                eprintln!("{} check(s) failed in the {} study", outcome.failures, outcome.kind);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(study::exit_code(&e) as u8)
        }
    }
}
