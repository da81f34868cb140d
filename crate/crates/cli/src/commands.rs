use std::f64::consts::FRAC_PI_8;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use otmlab::adversary::{run, SeparablePovmElement, StrategySpec};
use otmlab::analysis::{
    chain_rule_check, exact_joint_distribution, fictional_equivalence_check, haar_random_state,
    maassen_uffink_check, min_entropy, min_entropy_with_floor, negligible_threshold, smooth_min_entropy,
    thm1_bound, thm2_bound, EnumerationLimits, JointDistribution, Thm1Params, Thm2Params,
};
use otmlab::channel::{capacity, otm_error_probability, ChannelParams};
use otmlab::code::{build_code, derive_params, ConcatenatedCode, Decoding, GenericLinearCode, LinearCode};
use otmlab::experiment::{channel_experiment, otm_experiment, RecoveryStats};
use otmlab::gf2::BitVector;
use otmlab::otm::{program, OtmDevice, ReadoutChoice};
use otmlab::qsim::Mat2;
use otmlab::rng::{master_rng, stream_rng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Stream of the master seed reserved for sampling generator matrices, so
/// codes never share randomness with trials.
pub const CODE_STREAM: u64 = u64::MAX;

pub struct Report {
    pub body: Value,
    pub csv: Option<String>,
    /// Set when an experiment assertion failed.
    pub failed: Option<String>,
}

impl Report {
    fn ok(body: Value) -> Self {
        Self {
            body,
            csv: None,
            failed: None,
        }
    }
}

fn d_k() -> usize {
    16
}
fn d_pe() -> f64 {
    0.5
}
fn d_eps() -> f64 {
    0.1
}
fn d_delta() -> f64 {
    0.5
}
fn d_theta() -> f64 {
    0.2
}
fn d_trials() -> u64 {
    100
}
fn d_tiny_code() -> String {
    "repetition:2".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_pe")]
    pub pe: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_theta")]
    pub theta: f64,
}

pub fn params(cfg: &ParamsConfig) -> Result<Report> {
    let p = derive_params(cfg.k, cfg.pe, cfg.eps, cfg.delta, cfg.theta)?;
    Ok(Report::ok(json!({
        "n": p.n,
        "c": p.c,
        "c0": p.c0,
        "message_bits": p.message_bits(),
        "codeword_bits": p.codeword_bits(),
        "rate": p.rate(),
        "rate_floor": p.rate_floor(),
        "capacity": capacity(ChannelParams::new(p.c, p.pe)?),
    })))
}

fn build(cfg: &ParamsConfig, seed: u64) -> Result<ConcatenatedCode> {
    let p = derive_params(cfg.k, cfg.pe, cfg.eps, cfg.delta, cfg.theta)?;
    Ok(build_code(p, &mut stream_rng(seed, CODE_STREAM))?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    #[serde(flatten)]
    pub code: ParamsConfig,
    pub dir: PathBuf,
}

pub fn build_code_cmd(cfg: &BuildConfig, seed: u64) -> Result<Report> {
    let code = build(&cfg.code, seed)?;
    std::fs::create_dir_all(&cfg.dir).with_context(|| format!("creating {}", cfg.dir.display()))?;
    code.save_bundle(&cfg.dir, seed)?;
    let p = code.params();
    Ok(Report::ok(json!({
        "dir": cfg.dir,
        "n": p.n,
        "c": p.c,
        "c0": p.c0,
        "sampling_attempts": code.sampling_attempts(),
    })))
}

fn load(dir: &Path) -> Result<ConcatenatedCode> {
    Ok(ConcatenatedCode::load_bundle(dir)
        .with_context(|| format!("loading code bundle {}", dir.display()))?
        .0)
}

fn bits(s: &str, what: &str) -> Result<BitVector> {
    s.parse().with_context(|| format!("{what} must be a 0/1 string"))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodeConfig {
    pub bundle: PathBuf,
    pub message: String,
}

pub fn encode(cfg: &EncodeConfig) -> Result<Report> {
    let code = load(&cfg.bundle)?;
    let cw = code.encode(&bits(&cfg.message, "message")?)?;
    Ok(Report::ok(json!({ "codeword": cw.to_string() })))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub bundle: PathBuf,
    pub word: String,
}

pub fn decode(cfg: &DecodeConfig) -> Result<Report> {
    let code = load(&cfg.bundle)?;
    let blocks = code.detect(&bits(&cfg.word, "word")?)?;
    let erased = blocks.iter().filter(|b| b.is_none()).count();
    let (status, message) = match code.decode_erasures(&blocks)? {
        Decoding::Success(m) => ("success", Some(m.to_string())),
        Decoding::Ambiguous(m) => ("ambiguous", Some(m.to_string())),
        Decoding::Failure => ("failure", None),
    };
    Ok(Report::ok(json!({
        "status": status,
        "message": message,
        "erased_blocks": erased,
    })))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_pe")]
    pub design_pe: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(default)]
    pub bundle: Option<PathBuf>,
    /// Channel error probabilities; defaults to `design_pe`.
    #[serde(default)]
    pub pe: Option<Vec<f64>>,
    #[serde(default = "d_trials")]
    pub trials: u64,
    #[serde(default)]
    pub max_failure_rate: Option<f64>,
}

impl SweepConfig {
    fn code(&self, seed: u64) -> Result<ConcatenatedCode> {
        match &self.bundle {
            Some(dir) => load(dir),
            None => build(
                &ParamsConfig {
                    k: self.k,
                    pe: self.design_pe,
                    eps: self.eps,
                    delta: self.delta,
                    theta: self.theta,
                },
                seed,
            ),
        }
    }
}

const STATS_HEADER: &str =
    "trials,recovered,failure_rate,ambiguous,failures,wrong,corrupted_blocks,erased_blocks,undetected_blocks,concentration_misses";

fn stats_json(s: &RecoveryStats) -> Value {
    let mut v = serde_json::to_value(s).expect("plain struct");
    v["failure_rate"] = json!(s.failure_rate());
    v
}

fn stats_csv(s: &RecoveryStats) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        s.trials,
        s.recovered,
        s.failure_rate(),
        s.ambiguous,
        s.failures,
        s.wrong,
        s.corrupted_blocks,
        s.erased_blocks,
        s.undetected_blocks,
        s.concentration_misses
    )
}

fn threshold_check(limit: Option<f64>, rates: &[(String, f64)]) -> Option<String> {
    let limit = limit?;
    let over: Vec<String> = rates
        .iter()
        .filter(|(_, r)| *r > limit)
        .map(|(k, r)| format!("{k}: {r}"))
        .collect();
    (!over.is_empty()).then(|| format!("failure rate above {limit} at {}", over.join(", ")))
}

pub fn channel_sweep(cfg: &SweepConfig, seed: u64) -> Result<Report> {
    let code = cfg.code(seed)?;
    let pes = cfg.pe.clone().unwrap_or_else(|| vec![cfg.design_pe]);
    if pes.is_empty() {
        bail!("pe list is empty");
    }
    let mut rows = Vec::new();
    let mut csv = format!("pe,{STATS_HEADER}\n");
    let mut rates = Vec::new();
    for (j, &pe) in pes.iter().enumerate() {
        let stats = channel_experiment(&code, pe, cfg.trials, seed.wrapping_add(j as u64))?;
        let mut row = stats_json(&stats);
        row["pe"] = json!(pe);
        rows.push(row);
        let _ = writeln!(csv, "{pe},{}", stats_csv(&stats));
        rates.push((format!("pe {pe}"), stats.failure_rate()));
    }
    let p = code.params();
    Ok(Report {
        body: json!({
            "code": { "n": p.n, "c": p.c, "c0": p.c0, "k": p.k },
            "rows": rows,
        }),
        csv: Some(csv),
        failed: threshold_check(cfg.max_failure_rate, &rates),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ChoiceArg {
    First,
    Second,
    Both,
}

fn d_both() -> ChoiceArg {
    ChoiceArg::Both
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundtripConfig {
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_pe")]
    pub design_pe: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(default)]
    pub bundle: Option<PathBuf>,
    #[serde(default = "d_both")]
    pub choice: ChoiceArg,
    #[serde(default = "d_trials")]
    pub trials: u64,
    /// Use the classical readout shortcut instead of the qubit simulator.
    #[serde(default)]
    pub fast: bool,
    #[serde(default)]
    pub max_failure_rate: Option<f64>,
}

pub fn otm_roundtrip(cfg: &RoundtripConfig, seed: u64) -> Result<Report> {
    let sweep = SweepConfig {
        k: cfg.k,
        design_pe: cfg.design_pe,
        eps: cfg.eps,
        delta: cfg.delta,
        theta: cfg.theta,
        bundle: cfg.bundle.clone(),
        pe: None,
        trials: cfg.trials,
        max_failure_rate: None,
    };
    let code: Arc<dyn LinearCode> = Arc::new(sweep.code(seed)?);
    let choices = match cfg.choice {
        ChoiceArg::First => vec![ReadoutChoice::First],
        ChoiceArg::Second => vec![ReadoutChoice::Second],
        ChoiceArg::Both => vec![ReadoutChoice::First, ReadoutChoice::Second],
    };
    let mut rows = Vec::new();
    let mut csv = format!("choice,{STATS_HEADER}\n");
    let mut rates = Vec::new();
    for choice in choices {
        let name = format!("{choice:?}").to_lowercase();
        let stream_seed = seed.wrapping_add(matches!(choice, ReadoutChoice::Second) as u64);
        let stats = otm_experiment(code.clone(), choice, cfg.fast, cfg.trials, stream_seed)?;
        let mut row = stats_json(&stats);
        row["choice"] = json!(name);
        rows.push(row);
        let _ = writeln!(csv, "{name},{}", stats_csv(&stats));
        rates.push((name, stats.failure_rate()));
    }
    Ok(Report {
        body: json!({
            "readout_error_probability": otm_error_probability(code.block_bits()),
            "rows": rows,
        }),
        csv: Some(csv),
        failed: threshold_check(cfg.max_failure_rate, &rates),
    })
}

/// `identity:N`, `repetition:L`, `bundle:DIR` or `desk`.
pub fn parse_code(spec: &str, seed: u64) -> Result<Arc<dyn LinearCode>> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let num = || arg.parse::<usize>().with_context(|| format!("bad size in code spec {spec:?}"));
    Ok(match kind {
        "identity" => Arc::new(GenericLinearCode::identity(num()?)?),
        "repetition" => Arc::new(GenericLinearCode::repetition_pair(num()?)?),
        "bundle" => Arc::new(load(Path::new(arg))?),
        "desk" => Arc::new(build(
            &ParamsConfig {
                k: d_k(),
                pe: d_pe(),
                eps: d_eps(),
                delta: d_delta(),
                theta: d_theta(),
            },
            seed,
        )?),
        _ => bail!("unknown code spec {spec:?}; use identity:N, repetition:L, bundle:DIR or desk"),
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default = "d_tiny_code")]
    pub code: String,
    pub strategy: StrategySpec,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub s: Option<String>,
    #[serde(default)]
    pub t: Option<String>,
}

pub fn attack(cfg: &AttackConfig, seed: u64) -> Result<Report> {
    let code = parse_code(&cfg.code, seed)?;
    let strategy = cfg.strategy.build(code.as_ref())?;
    let mut rng = master_rng(seed);
    let ell = code.message_len();
    let s = match &cfg.s {
        Some(s) => bits(s, "s")?,
        None => BitVector::random(ell, &mut rng),
    };
    let t = match &cfg.t {
        Some(t) => bits(t, "t")?,
        None => BitVector::random(ell, &mut rng),
    };
    let mut device: OtmDevice = program(code.clone(), &s, &t, &mut rng)?;
    let max_steps = cfg
        .max_steps
        .unwrap_or_else(|| otmlab::adversary::default_max_steps(device.shape()));
    let transcript = run(strategy.as_ref(), &mut device, max_steps, &mut rng)?;
    let sealed = device.sealed();
    Ok(Report {
        body: json!({
            "strategy": strategy.name(),
            "steps": transcript.len(),
            "truncated": transcript.truncated,
            "outcomes": transcript.outcomes().iter().map(|o| o.to_string()).collect::<String>(),
            "sealed": { "s": sealed.s.to_string(), "t": sealed.t.to_string(), "gamma": sealed.gamma.to_string() },
        }),
        csv: Some(transcript.to_json_lines()),
        failed: None,
    })
}

fn d_eps_list() -> Vec<f64> {
    vec![0.01, 0.1]
}
fn d_budget() -> u64 {
    EnumerationLimits::default().budget
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    #[serde(default = "d_tiny_code")]
    pub code: String,
    pub strategy: StrategySpec,
    #[serde(default = "d_eps_list")]
    pub eps: Vec<f64>,
    #[serde(default = "d_budget")]
    pub budget: u64,
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// When set, also report the min-entropy over outcomes with
    /// `P(z) >= cutoff_delta * 2^-(n lg q)`.
    #[serde(default)]
    pub cutoff_delta: Option<f64>,
}

pub fn entropy(cfg: &EntropyConfig, seed: u64) -> Result<Report> {
    let code = parse_code(&cfg.code, seed)?;
    let strategy = cfg.strategy.build(code.as_ref())?;
    let limits = EnumerationLimits {
        budget: cfg.budget,
        max_steps: cfg.max_steps,
    };
    let dist = exact_joint_distribution(code.as_ref(), strategy.as_ref(), limits)?;
    let smoothed = cfg
        .eps
        .iter()
        .map(|&e| Ok(json!({ "eps": e, "bits": smooth_min_entropy(&dist, e)? })))
        .collect::<Result<Vec<_>>>()?;
    let cutoff = cfg
        .cutoff_delta
        .map(|d| min_entropy_with_floor(&dist, negligible_threshold(d, code.codeword_len())))
        .transpose()?;
    Ok(Report {
        body: json!({
            "strategy": strategy.name(),
            "message_bits": 2 * code.message_len(),
            "outcomes": dist.z_count(),
            "cells": dist.len(),
            "min_entropy": min_entropy(&dist, true)?,
            "prior_min_entropy": min_entropy(&dist, false)?,
            "min_entropy_non_negligible": cutoff,
            "smoothed": smoothed,
        }),
        csv: Some(dist.to_csv()),
        failed: None,
    })
}

fn d_ell() -> f64 {
    352.0
}
fn d_lgq() -> f64 {
    44.0
}
fn d_alpha() -> f64 {
    352.0 / 2332.0
}
fn d_small() -> f64 {
    0.01
}
fn d_cap_lgq() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 44]
}
fn d_cap_pe() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "d_ell")]
    pub ell: f64,
    #[serde(default = "d_lgq")]
    pub lgq: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_small")]
    pub lambda: f64,
    #[serde(default = "d_small")]
    pub tau0: f64,
    #[serde(default = "d_small")]
    pub delta: f64,
    #[serde(default)]
    pub thm1: Option<Thm1Params>,
    #[serde(default = "d_cap_lgq")]
    pub capacity_lgq: Vec<usize>,
    #[serde(default = "d_cap_pe")]
    pub capacity_pe: Vec<f64>,
}

pub fn bounds(cfg: &BoundsConfig) -> Result<Report> {
    let t2 = Thm2Params {
        ell: cfg.ell,
        lgq: cfg.lgq,
        alpha: cfg.alpha,
        lambda: cfg.lambda,
        tau0: cfg.tau0,
        delta: cfg.delta,
    };
    let thm2 = thm2_bound(&t2)?;
    let thm1 = cfg.thm1.as_ref().map(thm1_bound).transpose()?;
    let mut table = Vec::new();
    let mut csv = String::from("lgq,pe,capacity\n");
    for &lgq in &cfg.capacity_lgq {
        for &pe in &cfg.capacity_pe {
            let cap = capacity(ChannelParams::new(lgq, pe)?);
            table.push(json!({ "lgq": lgq, "pe": pe, "capacity": cap }));
            let _ = writeln!(csv, "{lgq},{pe},{cap}");
        }
    }
    Ok(Report {
        body: json!({ "thm2": thm2, "thm1": thm1, "capacity": table }),
        csv: Some(csv),
        failed: None,
    })
}

fn d_states() -> usize {
    1000
}
fn d_dists() -> usize {
    100
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "d_states")]
    pub states: usize,
    #[serde(default = "d_dists")]
    pub distributions: usize,
}

fn random_distribution<R: Rng>(rng: &mut R) -> Result<JointDistribution> {
    let xs = rng.random_range(1..=8u64);
    let ys = rng.random_range(1..=64 / xs);
    let mut w: Vec<f64> = (0..xs * ys)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random() })
        .collect();
    w[0] += 1e-3;
    let total: f64 = w.iter().sum();
    Ok(JointDistribution::from_cells(
        3,
        (0..xs * ys).map(|i| (i % xs, i / xs, w[i as usize] / total)),
    )?)
}

fn random_factor<R: Rng>(rng: &mut R) -> Mat2 {
    let a: f64 = rng.random_range(0.0..1.0);
    let b: f64 = rng.random_range(-1.0..1.0) * (a * (1.0 - a)).sqrt();
    Mat2::real(a, b, b, 1.0 - a)
}

fn projector(angle: f64) -> Mat2 {
    let (c, s) = (angle.cos(), angle.sin());
    Mat2::real(c * c, c * s, c * s, s * s)
}

pub fn verify_identities(cfg: &VerifyConfig, seed: u64) -> Result<Report> {
    let mut rng = master_rng(seed);
    let mut mu_failures = 0;
    let mut mu_min_slack = f64::INFINITY;
    for ell in [1, 2] {
        for _ in 0..cfg.states {
            let r = maassen_uffink_check(&haar_random_state(ell, &mut rng))?;
            mu_failures += usize::from(!r.pass);
            mu_min_slack = mu_min_slack.min(r.average - ell as f64 / 2.0);
        }
    }
    let mut chain_failures = 0;
    let mut smoothing_mismatches = 0;
    for _ in 0..cfg.distributions {
        let d = random_distribution(&mut rng)?;
        let (e1, e2) = (rng.random_range(0.01..0.45), rng.random_range(0.01..0.45));
        chain_failures += usize::from(!chain_rule_check(&d, e1, e2)?.pass);
        smoothing_mismatches += usize::from(smooth_min_entropy(&d, 0.0)? != min_entropy(&d, true)?);
    }
    let codes: [(&str, Arc<dyn LinearCode>); 3] = [
        ("repetition:1", Arc::new(GenericLinearCode::repetition_pair(1)?)),
        ("identity:2", Arc::new(GenericLinearCode::identity(2)?)),
        ("repetition:2", Arc::new(GenericLinearCode::repetition_pair(2)?)),
    ];
    let mut fictional = Vec::new();
    let (mut worst_real, mut worst_subset, mut worst_coin) = (0.0f64, 0.0f64, 0.0f64);
    for (name, code) in &codes {
        let len = code.codeword_len();
        let elements = [
            (0..len).map(|_| random_factor(&mut rng)).collect::<Vec<_>>(),
            vec![projector(FRAC_PI_8); len],
        ];
        for factors in elements {
            let element = SeparablePovmElement::from_factors(factors)?;
            let r = fictional_equivalence_check(code.as_ref(), &element, EnumerationLimits::default())?;
            worst_real = worst_real.max(r.max_deviation);
            worst_subset = worst_subset.max(r.subset_zero_deviation);
            worst_coin = worst_coin.max(r.coin_uniformity_deviation);
            fictional.push(json!({ "code": name, "max_deviation": r.max_deviation, "p_subset_zero": r.p_subset_zero }));
        }
    }
    let tol = 1e-9;
    let mut failed = Vec::new();
    if mu_failures > 0 {
        failed.push(format!("{mu_failures} uncertainty-relation violations"));
    }
    if chain_failures > 0 {
        failed.push(format!("{chain_failures} chain-rule violations"));
    }
    if smoothing_mismatches > 0 {
        failed.push(format!("{smoothing_mismatches} eps=0 smoothing mismatches"));
    }
    if worst_real >= tol || worst_subset >= tol || worst_coin >= tol {
        failed.push("fictional adversary identities off by more than 1e-9".into());
    }
    Ok(Report {
        body: json!({
            "uncertainty": { "states": 2 * cfg.states, "failures": mu_failures, "min_slack": mu_min_slack },
            "chain_rule": { "distributions": cfg.distributions, "failures": chain_failures },
            "smoothing_anchor_mismatches": smoothing_mismatches,
            "fictional": {
                "runs": fictional,
                "max_real_vs_fictional": worst_real,
                "max_subset_zero_deviation": worst_subset,
                "max_coin_uniformity_deviation": worst_coin,
            },
            "pass": failed.is_empty(),
        }),
        csv: None,
        failed: (!failed.is_empty()).then(|| failed.join("; ")),
    })
}
