//! `cmcycle`: runs one experiment described by a TOML config and writes its
//! exact results as JSON lines and an aligned CSV table.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use cmcycle::{exec, ErrorClass};

use crate::commands::Ctx;
use crate::config::ExperimentConfig;
use crate::report::Record;

#[derive(Debug, Parser)]
#[command(name = "cmcycle", version, about = "Exact intersection numbers of CM cycles and linear AFL checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for `<command>.jsonl` and `<command>.csv`; JSON lines go to
    /// stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Working p-adic precision in digits; overrides the config.
    #[arg(long, global = true)]
    precision: Option<u32>,

    /// Maximum number of cells or enumerated representatives.
    #[arg(long, global = true, default_value_t = 10_000_000)]
    cell_budget: u64,

    /// Worker threads; all available cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for randomized families; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Require P_j to be irreducible of degree h (the default).
    #[arg(long, global = true, overrides_with = "no_strict")]
    strict: bool,

    /// Integrate even when P_j is reducible.
    #[arg(long, global = true)]
    no_strict: bool,

    /// Record wall-clock time in `wall_ms`; without it the field is zero so
    /// that outputs stay byte-identical across runs.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// The constants c(K) for both ramification types.
    Constants,
    /// The invariant polynomial of j relative to the pair.
    Invariant,
    /// Int(j, f) for the configured pair and test function.
    Intersect,
    /// Intersection of the cycles of two pairs.
    TwoFields,
    /// Int(j, f) for the standard function of a double coset.
    Hecke,
    /// The h = 1 orbital integral as a series in q^{-s}.
    Orbital,
    /// Both sides of the linear AFL over a family of quaternions.
    VerifyAfl,
    /// Adaptive integration against exhaustive enumeration.
    OracleCompare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Invariant => "invariant",
            Command::Intersect => "intersect",
            Command::TwoFields => "two-fields",
            Command::Hecke => "hecke",
            Command::Orbital => "orbital",
            Command::VerifyAfl => "verify-afl",
            Command::OracleCompare => "oracle-compare",
        }
    }

    fn run(self, cfg: &ExperimentConfig, ctx: &Ctx) -> cmcycle::Result<Vec<Record>> {
        match self {
            Command::Constants => commands::constants(cfg, ctx),
            Command::Invariant => commands::invariant(cfg, ctx),
            Command::Intersect => commands::intersect(cfg, ctx),
            Command::TwoFields => commands::two_fields(cfg, ctx),
            Command::Hecke => commands::hecke(cfg, ctx),
            Command::Orbital => commands::orbital(cfg, ctx),
            Command::VerifyAfl => commands::verify_afl(cfg, ctx),
            Command::OracleCompare => commands::oracle_compare(cfg, ctx),
        }
    }
}

const DEFAULT_PRECISION: u32 = 64;

fn load(path: &PathBuf) -> Result<(ExperimentConfig, serde_json::Value), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let raw: toml::Value = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let canonical = serde_json::to_value(raw).map_err(|e| e.to_string())?;
    Ok((cfg, canonical))
}

fn write_outputs(out: Option<&PathBuf>, name: &str, records: &[Record]) -> std::io::Result<()> {
    let jsonl = report::to_jsonl(records);
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{name}.jsonl")), jsonl)?;
            std::fs::write(dir.join(format!("{name}.csv")), report::to_csv(records))
        }
        None => {
            print!("{jsonl}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config.as_ref() else {
        eprintln!("error: --config is required");
        return ExitCode::from(1);
    };
    let (cfg, canonical) = match load(path) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(t) = cli.threads {
        exec::set_threads(t);
    }
    let ctx = Ctx {
        precision: cli.precision.or(cfg.precision).unwrap_or(DEFAULT_PRECISION),
        cell_budget: cli.cell_budget,
        strict: !cli.no_strict || cli.strict,
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
    };
    let name = cli.command.name();
    let fp = report::fingerprint(&json!({
        "command": name,
        "config": canonical,
        "precision": ctx.precision,
        "cell_budget": ctx.cell_budget,
        "seed": ctx.seed,
        "strict": ctx.strict,
    }));

    let start = Instant::now();
    let mut records = match cli.command.run(&cfg, &ctx) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(match e.class() {
                ErrorClass::Math => 2,
                ErrorClass::Resource => 3,
                ErrorClass::Input => 1,
            });
        }
    };
    let wall_ms = if cli.timing { start.elapsed().as_millis() as u64 } else { 0 };
    for r in &mut records {
        r.wall_ms = wall_ms;
        r.fingerprint = fp.clone();
    }
    if let Err(e) = write_outputs(cli.out.as_ref(), name, &records) {
        eprintln!("error: writing output: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
