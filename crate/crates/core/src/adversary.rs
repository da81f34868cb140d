//! Adaptive single-qubit (LOCC) adversaries.
//!
//! A [`Strategy`] sees only the public device shape and the transcript of
//! its own earlier outcomes; the harness owns the device. Strategies are
//! pure functions of the transcript (plus any seed they were built with),
//! which lets the analysis module walk every outcome branch exactly.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::code::LinearCode;
use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::otm::{prepare_register, DeviceShape, OtmDevice};
use crate::qsim::{basis_instrument, validate_density, Basis, Instrument, Mat2, ProductState, STATE_TOLERANCE};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Record {
    /// 1-based.
    pub step: usize,
    pub qubit: usize,
    /// [`Instrument::id`] of the instrument used.
    pub instrument: u64,
    pub outcome: u32,
}

/// Everything an adversary has observed, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transcript {
    records: Vec<Record>,
    /// Set when the step limit cut the strategy off.
    pub truncated: bool,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, qubit: usize, instrument: u64, outcome: u32) {
        let step = self.records.len() + 1;
        self.records.push(Record {
            step,
            qubit,
            instrument,
            outcome,
        });
    }

    pub fn pop(&mut self) -> Option<Record> {
        self.records.pop()
    }

    pub fn outcomes(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.outcome).collect()
    }

    /// One JSON object per record, newline separated.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{{\"step\":{},\"qubit\":{},\"instrument\":\"{:016x}\",\"outcome\":{}}}",
                r.step, r.qubit, r.instrument, r.outcome
            );
        }
        out
    }
}

pub enum Action {
    Measure { qubit: usize, instrument: Instrument },
    Stop,
}

pub trait Strategy: Send + Sync {
    fn name(&self) -> String;

    /// Next move given the public shape and the transcript so far.
    fn next(&self, shape: DeviceShape, transcript: &Transcript) -> Action;
}

pub fn default_max_steps(shape: DeviceShape) -> usize {
    4 * shape.qubits()
}

/// Runs `strategy` against `device` until it stops or `max_steps` is hit.
pub fn run<R: Rng + ?Sized>(
    strategy: &dyn Strategy,
    device: &mut OtmDevice,
    max_steps: usize,
    rng: &mut R,
) -> Result<Transcript> {
    run_observed(strategy, device, max_steps, rng, |_| {})
}

/// [`run`] with a callback on the register after every measurement.
pub fn run_observed<R, F>(
    strategy: &dyn Strategy,
    device: &mut OtmDevice,
    max_steps: usize,
    rng: &mut R,
    mut observe: F,
) -> Result<Transcript>
where
    R: Rng + ?Sized,
    F: FnMut(&ProductState),
{
    if max_steps == 0 {
        return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
    }
    let shape = device.shape();
    let mut transcript = Transcript::new();
    loop {
        match strategy.next(shape, &transcript) {
            Action::Stop => return Ok(transcript),
            Action::Measure { .. } if transcript.len() == max_steps => {
                transcript.truncated = true;
                return Ok(transcript);
            }
            Action::Measure { qubit, instrument } => {
                check_action(shape, qubit, &instrument)?;
                let outcome = device.measure_qubit(qubit, &instrument, rng)?;
                transcript.push(qubit, instrument.id(), outcome);
                observe(device.sealed_state());
            }
        }
    }
}

pub(crate) fn check_action(shape: DeviceShape, qubit: usize, instrument: &Instrument) -> Result<()> {
    if qubit >= shape.qubits() {
        return Err(Error::QubitIndex {
            index: qubit,
            len: shape.qubits(),
        });
    }
    let dev = instrument.completeness_deviation();
    if dev > crate::qsim::COMPLETENESS_TOLERANCE {
        return Err(Error::InvalidQuantum(format!(
            "strategy returned an incomplete instrument (deviation {dev:e})"
        )));
    }
    Ok(())
}

/// Stops before measuring anything.
#[derive(Clone, Debug, Default)]
pub struct StopImmediately;

impl Strategy for StopImmediately {
    fn name(&self) -> String {
        "stop".into()
    }

    fn next(&self, _: DeviceShape, _: &Transcript) -> Action {
        Action::Stop
    }
}

/// Measures every qubit once, in index order, in a fixed basis.
#[derive(Clone, Debug)]
pub struct MeasureAll {
    basis: Basis,
    instrument: Instrument,
}

pub fn measure_all(basis: Basis) -> MeasureAll {
    MeasureAll {
        basis,
        instrument: basis_instrument(basis.angle()),
    }
}

impl Strategy for MeasureAll {
    fn name(&self) -> String {
        format!("measure_all({:?})", self.basis).to_lowercase()
    }

    fn next(&self, shape: DeviceShape, transcript: &Transcript) -> Action {
        let step = transcript.len();
        if step >= shape.qubits() {
            return Action::Stop;
        }
        Action::Measure {
            qubit: step,
            instrument: self.instrument.clone(),
        }
    }
}

/// Measures each block in a basis chosen by a seeded coin per block.
#[derive(Clone, Debug)]
pub struct PerBlockRandomBasis {
    seed: u64,
}

pub fn per_block_random_basis(seed: u64) -> PerBlockRandomBasis {
    PerBlockRandomBasis { seed }
}

impl PerBlockRandomBasis {
    pub fn basis_for_block(&self, block: usize) -> Basis {
        Basis::from_bit(stream_rng(self.seed, block as u64).next_u64() & 1 == 1)
    }
}

impl Strategy for PerBlockRandomBasis {
    fn name(&self) -> String {
        format!("per_block_random_basis({})", self.seed)
    }

    fn next(&self, shape: DeviceShape, transcript: &Transcript) -> Action {
        let step = transcript.len();
        if step >= shape.qubits() {
            return Action::Stop;
        }
        let basis = self.basis_for_block(step / shape.block_bits);
        Action::Measure {
            qubit: step,
            instrument: basis_instrument(basis.angle()),
        }
    }
}

/// Measures every qubit at π/8, halfway between the two coding bases.
#[derive(Clone, Debug)]
pub struct Breidbart {
    instrument: Instrument,
}

pub fn breidbart() -> Breidbart {
    Breidbart {
        instrument: basis_instrument(FRAC_PI_8),
    }
}

impl Strategy for Breidbart {
    fn name(&self) -> String {
        "breidbart".into()
    }

    fn next(&self, shape: DeviceShape, transcript: &Transcript) -> Action {
        let step = transcript.len();
        if step >= shape.qubits() {
            return Action::Stop;
        }
        Action::Measure {
            qubit: step,
            instrument: self.instrument.clone(),
        }
    }
}

/// Per block: measure `probe_count` qubits at `probe_angle`, guess the
/// block's basis by likelihood, then measure the rest in the guessed basis.
///
/// Probes go to positions whose codeword bit is known to be 0 for every
/// message (e.g. the tail of each block under a systematic inner code), when
/// the code has any. A probe on a position with an unknown uniform bit has
/// the same outcome distribution under both bases and contributes nothing.
#[derive(Clone, Debug)]
pub struct GreedyBasisGuess {
    probe_count: usize,
    probe_angle: f64,
    known_zero: Option<BitVector>,
    probe: Instrument,
    standard: Instrument,
    hadamard: Instrument,
}

pub fn greedy_basis_guess(
    probe_count: usize,
    probe_angle: f64,
    known_zero: Option<BitVector>,
) -> GreedyBasisGuess {
    GreedyBasisGuess {
        probe_count,
        probe_angle,
        known_zero,
        probe: basis_instrument(probe_angle),
        standard: basis_instrument(0.0),
        hadamard: basis_instrument(FRAC_PI_4),
    }
}

/// Codeword positions that are 0 in every codeword.
pub fn known_zero_positions(code: &dyn LinearCode) -> BitVector {
    let g = code.generator();
    let mut any = BitVector::zeros(g.cols());
    for c in 0..g.cols() {
        if (0..g.rows()).any(|r| g.get(r, c)) {
            any.set(c, true);
        }
    }
    let mut zero = BitVector::ones(g.cols());
    zero.xor_assign(&any).expect("same length");
    zero
}

impl GreedyBasisGuess {
    /// Probe positions within block `block`, then the remaining positions.
    fn plan(&self, shape: DeviceShape, block: usize) -> (Vec<usize>, Vec<usize>) {
        let lgq = shape.block_bits;
        let base = block * lgq;
        let mut positions: Vec<usize> = (0..lgq).collect();
        if let Some(mask) = &self.known_zero {
            // Known-zero positions first, keeping index order within each group.
            positions.sort_by_key(|&j| !mask.get(base + j));
        }
        let probes = positions[..self.probe_count.min(lgq)].to_vec();
        let mut rest = positions[self.probe_count.min(lgq)..].to_vec();
        rest.sort_unstable();
        (probes, rest)
    }

    /// Guess `γ = 1` when the probe outcomes are strictly more likely under
    /// the Hadamard preparation.
    fn guess(&self, shape: DeviceShape, block: usize, probes: &[usize], outcomes: &[u32]) -> Basis {
        let base = block * shape.block_bits;
        let (mut l0, mut l1) = (1.0f64, 1.0f64);
        for (&j, &o) in probes.iter().zip(outcomes) {
            let known = self.known_zero.as_ref().is_some_and(|m| m.get(base + j));
            if !known {
                continue;
            }
            // Outcome 0 projects on angle a; the bit-0 states sit at 0 and π/4.
            let p0_std = self.probe_angle.cos().powi(2);
            let p0_had = (self.probe_angle - FRAC_PI_4).cos().powi(2);
            if o == 0 {
                l0 *= p0_std;
                l1 *= p0_had;
            } else {
                l0 *= 1.0 - p0_std;
                l1 *= 1.0 - p0_had;
            }
        }
        if l1 > l0 {
            Basis::Hadamard
        } else {
            Basis::Standard
        }
    }
}

impl Strategy for GreedyBasisGuess {
    fn name(&self) -> String {
        format!("greedy_basis_guess({}, {})", self.probe_count, self.probe_angle)
    }

    fn next(&self, shape: DeviceShape, transcript: &Transcript) -> Action {
        let step = transcript.len();
        if step >= shape.qubits() {
            return Action::Stop;
        }
        let lgq = shape.block_bits;
        let (block, offset) = (step / lgq, step % lgq);
        let (probes, rest) = self.plan(shape, block);
        if offset < probes.len() {
            return Action::Measure {
                qubit: block * lgq + probes[offset],
                instrument: self.probe.clone(),
            };
        }
        let start = block * lgq;
        let outcomes: Vec<u32> = transcript.records()[start..start + probes.len()]
            .iter()
            .map(|r| r.outcome)
            .collect();
        let instrument = match self.guess(shape, block, &probes, &outcomes) {
            Basis::Standard => self.standard.clone(),
            Basis::Hadamard => self.hadamard.clone(),
        };
        Action::Measure {
            qubit: start + rest[offset - probes.len()],
            instrument,
        }
    }
}

/// Each qubit gets one weak standard-basis measurement followed by a
/// projective one: `2 n lg q` steps in total.
#[derive(Clone, Debug)]
pub struct WeakThenStrong {
    strength: f64,
    weak: Instrument,
    strong: Instrument,
}

/// `strength` in `[0.5, 1]` is the weight `K_0†K_0` puts on `|0⟩`.
pub fn weak_then_strong(strength: f64) -> Result<WeakThenStrong> {
    if !(0.5..=1.0).contains(&strength) {
        return Err(Error::InvalidParameter(format!(
            "weak measurement strength {strength} not in [0.5, 1]"
        )));
    }
    let (a, b) = (strength.sqrt(), (1.0 - strength).sqrt());
    let weak = Instrument::new(vec![
        (0, Mat2::real(a, 0.0, 0.0, b)),
        (1, Mat2::real(b, 0.0, 0.0, a)),
    ])?;
    Ok(WeakThenStrong {
        strength,
        weak,
        strong: basis_instrument(0.0),
    })
}

impl Strategy for WeakThenStrong {
    fn name(&self) -> String {
        format!("weak_then_strong({})", self.strength)
    }

    fn next(&self, shape: DeviceShape, transcript: &Transcript) -> Action {
        let step = transcript.len();
        if step >= 2 * shape.qubits() {
            return Action::Stop;
        }
        let instrument = if step.is_multiple_of(2) {
            self.weak.clone()
        } else {
            self.strong.clone()
        };
        Action::Measure {
            qubit: step / 2,
            instrument,
        }
    }
}

/// Non-adaptive: qubit `i` is measured once with `instruments[i]`.
#[derive(Clone, Debug)]
pub struct ProductMeasurement {
    instruments: Vec<Instrument>,
}

impl ProductMeasurement {
    pub fn new(instruments: Vec<Instrument>) -> Self {
        Self { instruments }
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }
}

impl Strategy for ProductMeasurement {
    fn name(&self) -> String {
        "product_measurement".into()
    }

    fn next(&self, shape: DeviceShape, transcript: &Transcript) -> Action {
        let step = transcript.len();
        if step >= shape.qubits().min(self.instruments.len()) {
            return Action::Stop;
        }
        Action::Measure {
            qubit: step,
            instrument: self.instruments[step].clone(),
        }
    }
}

/// Strategy selection by name, as used in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    Stop,
    MeasureAll {
        basis: Basis,
    },
    PerBlockRandomBasis {
        seed: u64,
    },
    Breidbart,
    GreedyBasisGuess {
        probe_count: usize,
        #[serde(default)]
        probe_angle: f64,
    },
    WeakThenStrong {
        strength: f64,
    },
}

impl StrategySpec {
    pub fn build(&self, code: &dyn LinearCode) -> Result<Arc<dyn Strategy>> {
        Ok(match self {
            StrategySpec::Stop => Arc::new(StopImmediately),
            StrategySpec::MeasureAll { basis } => Arc::new(measure_all(*basis)),
            StrategySpec::PerBlockRandomBasis { seed } => Arc::new(per_block_random_basis(*seed)),
            StrategySpec::Breidbart => Arc::new(breidbart()),
            StrategySpec::GreedyBasisGuess {
                probe_count,
                probe_angle,
            } => Arc::new(greedy_basis_guess(
                *probe_count,
                *probe_angle,
                Some(known_zero_positions(code)),
            )),
            StrategySpec::WeakThenStrong { strength } => Arc::new(weak_then_strong(*strength)?),
        })
    }
}

/// A separable POVM element `weight · ⊗ R_ij` with trace-one factors.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparablePovmElement {
    pub weight: f64,
    pub factors: Vec<Mat2>,
}

impl SeparablePovmElement {
    pub fn new(weight: f64, factors: Vec<Mat2>) -> Result<Self> {
        if !(weight > 0.0) {
            return Err(Error::InvalidQuantum(format!("weight {weight} must be positive")));
        }
        for (i, f) in factors.iter().enumerate() {
            validate_density(f)
                .map_err(|e| Error::InvalidQuantum(format!("factor {i}: {e}")))?;
        }
        Ok(Self { weight, factors })
    }

    /// The element realised by outcome 0 on every qubit of
    /// [`SeparablePovmElement::realising_measurement`].
    pub fn from_factors(factors: Vec<Mat2>) -> Result<Self> {
        let weight = factors
            .iter()
            .map(|f| 1.0 / f.hermitian_eigenvalues()[1])
            .product();
        Self::new(weight, factors)
    }

    /// Per-qubit two-outcome instruments `{√(w R), √(I - w R)}` with
    /// `w = 1/λ_max(R)`; their all-zero outcome has POVM element
    /// `Π w_ij · ⊗ R_ij`.
    pub fn realising_measurement(&self) -> Result<ProductMeasurement> {
        let instruments = self
            .factors
            .iter()
            .map(|r| {
                let scaled = r.scale(1.0 / r.hermitian_eigenvalues()[1]);
                Instrument::from_povm(vec![(0, scaled), (1, Mat2::IDENTITY - scaled)])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductMeasurement::new(instruments))
    }
}

/// Prior over the device's programming used by the fictional adversary.
#[derive(Clone, Debug)]
pub enum DevicePrior {
    /// `s`, `t` uniform over `{0,1}^ℓ`, coins uniform over `{0,1}^n`.
    Uniform,
    Fixed {
        s: BitVector,
        t: BitVector,
        gamma: BitVector,
    },
}

/// Outcome statistics of the fictional adversary that applies
/// `{R_ij, I - R_ij}` to every qubit.
#[derive(Clone, Debug)]
pub struct FictionalReport {
    /// `Pr[Q = 0]`
    pub p_all_zero: f64,
    /// `Pr[Q_A = 0]` over the independent column subset `A`.
    pub p_subset_zero: f64,
    pub subset: Vec<usize>,
    /// `P(s, t | Q = 0)` indexed by `s | t << ℓ`.
    pub messages_given_all_zero: Vec<f64>,
    /// `P(γ | Q_A = 0)` indexed by the coin integer.
    pub coins_given_subset_zero: Vec<f64>,
}

/// Upper limit on `4^ℓ 2^n` for the fictional adversary enumeration.
pub const FICTIONAL_CELL_LIMIT: u64 = 1 << 22;

pub fn fictional_adversary(
    code: &dyn LinearCode,
    element: &SeparablePovmElement,
    prior: &DevicePrior,
) -> Result<FictionalReport> {
    let (ell, n) = (code.message_len(), code.blocks());
    let len = code.codeword_len();
    if element.factors.len() != len {
        return Err(Error::Dimension(format!(
            "{} factors for {len} qubits",
            element.factors.len()
        )));
    }
    for (i, f) in element.factors.iter().enumerate() {
        if !f.is_hermitian(STATE_TOLERANCE) || f.hermitian_eigenvalues()[0] < -STATE_TOLERANCE {
            return Err(Error::InvalidQuantum(format!("factor {i} is not PSD")));
        }
    }
    let subset = code.generator().independent_column_subset()?;
    let cells: Vec<(BitVector, BitVector, BitVector, f64)> = match prior {
        DevicePrior::Fixed { s, t, gamma } => vec![(s.clone(), t.clone(), gamma.clone(), 1.0)],
        DevicePrior::Uniform => {
            let bits = 2 * ell + n;
            if bits >= 63 || (1u64 << bits) > FICTIONAL_CELL_LIMIT {
                return Err(Error::BudgetExceeded(format!(
                    "fictional adversary over 2^{bits} cells (limit {FICTIONAL_CELL_LIMIT})"
                )));
            }
            let w = 0.5f64.powi(bits as i32);
            let mut cells = Vec::with_capacity(1 << bits);
            for s in 0..1u64 << ell {
                for t in 0..1u64 << ell {
                    for g in 0..1u64 << n {
                        cells.push((
                            BitVector::from_u64(s, ell),
                            BitVector::from_u64(t, ell),
                            BitVector::from_u64(g, n),
                            w,
                        ));
                    }
                }
            }
            cells
        }
    };
    if ell > 31 || n > 31 {
        return Err(Error::BudgetExceeded("message or coin space too large".into()));
    }
    let mut in_subset = vec![false; len];
    for &j in &subset {
        in_subset[j] = true;
    }
    let mut p_all = 0.0;
    let mut p_sub = 0.0;
    let mut messages = vec![0.0; 1 << (2 * ell)];
    let mut coins = vec![0.0; 1 << n];
    for (s, t, gamma, w) in &cells {
        let state = prepare_register(code, s, t, gamma)?;
        let mut q_all = 1.0;
        let mut q_sub = 1.0;
        for (idx, q) in state.qubits().iter().enumerate() {
            let f = (element.factors[idx] * *q.rho()).trace().re;
            q_all *= f;
            if in_subset[idx] {
                q_sub *= f;
            }
        }
        p_all += w * q_all;
        p_sub += w * q_sub;
        let x = (s.to_u64() | t.to_u64() << ell) as usize;
        messages[x] += w * q_all;
        coins[gamma.to_u64() as usize] += w * q_sub;
    }
    if p_all > 0.0 {
        messages.iter_mut().for_each(|m| *m /= p_all);
    }
    if p_sub > 0.0 {
        coins.iter_mut().for_each(|c| *c /= p_sub);
    }
    Ok(FictionalReport {
        p_all_zero: p_all,
        p_subset_zero: p_sub,
        subset,
        messages_given_all_zero: messages,
        coins_given_subset_zero: coins,
    })
}
