//! `otmlab`: seed-deterministic experiments over the one-time-memory library.
//!
//! Exit codes: 0 success, 1 validation error, 2 experiment assertion failure.

mod commands;
mod config;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use commands::{ChoiceArg, Report};
use config::{read_config, resolve, Resolved};

#[derive(Parser)]
#[command(name = "otmlab", version, about = "One-time memories from isolated qubits: codes, simulation and analysis")]
struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (default: config `seed`, then $OTMLAB_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the command's table (CSV, or JSON lines for `attack`) here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive n, lg q and lg q0 for the concatenated code.
    Params(CodeFlags),
    /// Sample a code and save it as a bundle directory.
    BuildCode(BuildFlags),
    /// Encode a message with a saved code.
    Encode(EncodeFlags),
    /// Decode a received word with a saved code.
    Decode(DecodeFlags),
    /// Monte Carlo decoding over the q-ary symmetric channel.
    ChannelSweep(SweepFlags),
    /// Program devices and read them back honestly.
    OtmRoundtrip(RoundtripFlags),
    /// Run one adversary against one device.
    Attack(AttackFlags),
    /// Exact (smoothed) min-entropy of a strategy on a tiny code.
    Entropy(EntropyFlags),
    /// Security-bound calculators and a capacity table.
    Bounds(BoundsFlags),
    /// Numerical checks of the entropy and fictional-adversary identities.
    VerifyIdentities(VerifyFlags),
}

#[derive(Args, Serialize)]
struct CodeFlags {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    pe: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args, Serialize)]
struct BuildFlags {
    #[command(flatten)]
    #[serde(flatten)]
    code: CodeFlags,
    /// Bundle directory to write.
    #[arg(long)]
    dir: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EncodeFlags {
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Message bits, first character is bit 0.
    #[arg(long)]
    message: Option<String>,
}

#[derive(Args, Serialize)]
struct DecodeFlags {
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    word: Option<String>,
}

#[derive(Args, Serialize)]
struct SweepFlags {
    #[arg(long)]
    k: Option<usize>,
    /// Error probability the code is designed for.
    #[arg(long)]
    design_pe: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Use a saved code instead of sampling one.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Channel error probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    pe: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<u64>,
    /// Exit with status 2 if any failure rate exceeds this.
    #[arg(long)]
    max_failure_rate: Option<f64>,
}

#[derive(Args, Serialize)]
struct RoundtripFlags {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    design_pe: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, value_enum)]
    choice: Option<ChoiceArg>,
    #[arg(long)]
    trials: Option<u64>,
    /// Classical readout shortcut instead of the qubit simulator.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    fast: bool,
    #[arg(long)]
    max_failure_rate: Option<f64>,
}

fn parse_strategy(s: &str) -> Result<Value, String> {
    if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| e.to_string())
    } else {
        Ok(json!({ "name": s }))
    }
}

#[derive(Args, Serialize)]
struct AttackFlags {
    /// identity:N, repetition:L, bundle:DIR or desk.
    #[arg(long)]
    code: Option<String>,
    /// Strategy name or JSON object, e.g. '{"name":"greedy_basis_guess","probe_count":2}'.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Value>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    t: Option<String>,
}

#[derive(Args, Serialize)]
struct EntropyFlags {
    #[arg(long)]
    code: Option<String>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Value>,
    /// Smoothing parameters, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    cutoff_delta: Option<f64>,
}

#[derive(Args, Serialize)]
struct BoundsFlags {
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    lgq: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    capacity_lgq: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    capacity_pe: Option<Vec<f64>>,
}

#[derive(Args, Serialize)]
struct VerifyFlags {
    /// Random states per qubit count.
    #[arg(long)]
    states: Option<usize>,
    /// Random distributions for the chain rule.
    #[arg(long)]
    distributions: Option<usize>,
}

enum Failure {
    Validation(anyhow::Error),
    Assertion(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Validation(e)
    }
}

fn emit<T>(name: &str, resolved: &Resolved<T>, report: Report) -> Result<(), Failure> {
    let mut body = json!({
        "schema": 1,
        "command": name,
        "seed": resolved.seed,
        "config": resolved.echo,
    });
    if let (Value::Object(out), Value::Object(extra)) = (&mut body, report.body) {
        out.extend(extra);
    }
    let text = serde_json::to_string_pretty(&body).map_err(anyhow::Error::from)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            return Err(Failure::Validation(e.into()));
        }
        _ => {}
    }
    if let (Some(path), Some(csv)) = (&resolved.out, report.csv) {
        std::fs::write(path, csv)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Validation)?;
    }
    match report.failed {
        Some(msg) => Err(Failure::Assertion(msg)),
        None => Ok(()),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let file = read_config(cli.config.as_deref())?;
    let (seed, out) = (cli.seed, cli.out);
    macro_rules! go {
        ($name:literal, $flags:expr, |$r:ident| $body:expr) => {{
            let $r = resolve(&file, &$flags, seed, out)?;
            let report = $body?;
            emit($name, &$r, report)
        }};
    }
    match cli.command {
        Command::Params(f) => go!("params", f, |r| commands::params(&r.params)),
        Command::BuildCode(f) => go!("build-code", f, |r| commands::build_code_cmd(&r.params, r.seed)),
        Command::Encode(f) => go!("encode", f, |r| commands::encode(&r.params)),
        Command::Decode(f) => go!("decode", f, |r| commands::decode(&r.params)),
        Command::ChannelSweep(f) => go!("channel-sweep", f, |r| commands::channel_sweep(&r.params, r.seed)),
        Command::OtmRoundtrip(f) => go!("otm-roundtrip", f, |r| commands::otm_roundtrip(&r.params, r.seed)),
        Command::Attack(f) => go!("attack", f, |r| commands::attack(&r.params, r.seed)),
        Command::Entropy(f) => go!("entropy", f, |r| commands::entropy(&r.params, r.seed)),
        Command::Bounds(f) => go!("bounds", f, |r| commands::bounds(&r.params)),
        Command::VerifyIdentities(f) => {
            go!("verify-identities", f, |r| commands::verify_identities(&r.params, r.seed))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(2)
        }
    }
}
