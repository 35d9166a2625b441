use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use uilkit::cli::{exit_code, parse_eps, render, run_command, write_atomic, Command, Format, Input, RunConfig};

#[derive(Parser)]
#[command(
    name = "uilkit",
    version,
    about = "Kneading data, Hofbauer towers and inverse-limit classification for tent maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Slope: preset name (fibonacci, ex35, fixture41, golden, tribonacci), p/q or decimal.
    #[arg(long, global = true, conflicts_with_all = ["nu", "q"])]
    slope: Option<String>,
    /// Kneading prefix, plain or dotted ("1.0.0.0.101").
    #[arg(long, global = true, conflicts_with = "q")]
    nu: Option<String>,
    /// Kneading map: preset name (fib, ex35, cascade) or a list "0,0,0,2".
    #[arg(long, global = true)]
    q: Option<String>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Epsilon as 2^-k, k, or a decimal.
    #[arg(long, global = true)]
    eps: Option<String>,
    /// Precision cap in bits (UILKIT_PREC_CAP overrides).
    #[arg(long, global = true)]
    prec_cap: Option<u32>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Fmt,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fmt {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// ν, cutting times, Q, β, co-cutting times and admissibility.
    Knead,
    /// Tower levels, their lengths and long-branched evidence.
    Tower,
    /// Folding point / endpoint classification of two-sided itineraries.
    Classify { itineraries: Vec<String> },
    /// Persistent vs reluctant recurrence.
    Persistence,
    /// Critical-projection chains and their classes.
    Subcontinua,
    /// Extend the seed ν = 1.0.0.0.101 by the block construction.
    Genseq {
        #[arg(long)]
        len: Option<usize>,
        /// Use the general step for the first extension too.
        #[arg(long)]
        no_compat: bool,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        ledger_out: Option<PathBuf>,
    },
    /// Gaps between cutting values.
    Density {
        #[arg(long)]
        kmax: Option<usize>,
    },
    /// Graph data for the first-return map F.
    Fmap {
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        kmax: Option<usize>,
    },
}

fn config(cli: Cli) -> Result<RunConfig, uilkit::error::Error> {
    let c = cli.common;
    let input = match (c.slope, c.nu, c.q) {
        (Some(s), _, _) => Some(Input::Slope(s)),
        (_, Some(n), _) => Some(Input::Nu(n)),
        (_, _, Some(q)) => Some(Input::Q(q)),
        _ => None,
    };
    let command = match &cli.command {
        Cmd::Knead => Command::Knead,
        Cmd::Tower => Command::Tower,
        Cmd::Classify { .. } => Command::Classify,
        Cmd::Persistence => Command::Persistence,
        Cmd::Subcontinua => Command::Subcontinua,
        Cmd::Genseq { .. } => Command::Genseq,
        Cmd::Density { .. } => Command::Density,
        Cmd::Fmap { .. } => Command::Fmap,
    };
    let mut cfg = RunConfig::new(command, input);
    cfg.horizon = c.horizon;
    cfg.depth = c.depth;
    cfg.eps_bits = c.eps.as_deref().map(parse_eps).transpose()?;
    cfg.prec_cap = c.prec_cap;
    cfg.format = match c.format {
        Fmt::Json => Format::Json,
        Fmt::Csv => Format::Csv,
    };
    match cli.command {
        Cmd::Classify { itineraries } => cfg.items = itineraries,
        Cmd::Genseq { len, no_compat, resume, ledger_out } => {
            cfg.len = len;
            cfg.compat = !no_compat;
            cfg.resume = resume;
            cfg.ledger_out = ledger_out;
        }
        Cmd::Density { kmax } => cfg.kmax = kmax,
        Cmd::Fmap { grid, kmax } => {
            cfg.grid = grid;
            cfg.kmax = kmax;
        }
        _ => {}
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.common.out.clone();
    let result = config(cli).and_then(|cfg| {
        let report = run_command(&cfg)?;
        let bytes = render(&report, cfg.format)?;
        match &out {
            Some(p) => write_atomic(p, &bytes),
            None => std::io::stdout().write_all(&bytes).map_err(|e| uilkit::error::Error::Io(e.to_string())),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uilkit: {}", e);
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
