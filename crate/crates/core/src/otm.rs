//! Conjugate-coding one-time memory.
//!
//! Block `i` of the register holds `C(s)_i` in the standard basis when the
//! hidden coin `γ_i` is 0 and `H^{⊗lg q} C(t)_i` when it is 1. Reading every
//! qubit in one basis returns the matching codeword through a q-ary
//! symmetric channel with error probability `1/2 - 1/(2q)`, which the code
//! then corrects.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::code::{Decoding, LinearCode};
use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::qsim::{self, basis_instrument, prepare_conjugate, Basis, Instrument, Mat2, ProductState, Qubit};

/// Which message an honest reader wants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutChoice {
    /// `s`, read in the standard basis.
    First,
    /// `t`, read in the Hadamard basis.
    Second,
}

impl ReadoutChoice {
    pub fn basis(self) -> Basis {
        match self {
            ReadoutChoice::First => Basis::Standard,
            ReadoutChoice::Second => Basis::Hadamard,
        }
    }

    /// Value of `γ_i` for which block `i` is read without error.
    pub fn matched_coin(self) -> bool {
        self == ReadoutChoice::Second
    }
}

/// Public geometry of a device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceShape {
    pub blocks: usize,
    pub block_bits: usize,
}

impl DeviceShape {
    pub fn qubits(&self) -> usize {
        self.blocks * self.block_bits
    }
}

/// Ground truth kept for test oracles. Never handed to strategies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedReference {
    pub s: BitVector,
    pub t: BitVector,
    pub gamma: BitVector,
}

pub struct OtmDevice {
    code: Arc<dyn LinearCode>,
    state: ProductState,
    sealed: SealedReference,
}

impl std::fmt::Debug for OtmDevice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OtmDevice")
            .field("shape", &self.shape())
            .finish_non_exhaustive()
    }
}

/// Output bit `(i, j)` is `x_ij` when `γ_i = 0` and `y_ij` otherwise.
pub fn select(x: &BitVector, y: &BitVector, gamma: &BitVector) -> Result<BitVector> {
    if x.len() != y.len() || gamma.is_empty() || !x.len().is_multiple_of(gamma.len()) {
        return Err(Error::Dimension(format!(
            "select on lengths {} and {} with {} coins",
            x.len(),
            y.len(),
            gamma.len()
        )));
    }
    let lgq = x.len() / gamma.len();
    let mut out = x.clone();
    for i in 0..gamma.len() {
        if gamma.get(i) {
            out.write_slice(i * lgq, &y.slice(i * lgq, lgq));
        }
    }
    Ok(out)
}

/// The register a device holds for fixed messages and coins.
pub fn prepare_register(
    code: &dyn LinearCode,
    s: &BitVector,
    t: &BitVector,
    gamma: &BitVector,
) -> Result<ProductState> {
    let (n, lgq) = (code.blocks(), code.block_bits());
    let ell = code.message_len();
    if s.len() != ell || t.len() != ell {
        return Err(Error::Dimension(format!(
            "messages of {} and {} bits for a code with {ell}-bit messages",
            s.len(),
            t.len()
        )));
    }
    if gamma.len() != n {
        return Err(Error::Dimension(format!("{} coins for {n} blocks", gamma.len())));
    }
    let cs = code.encode(s)?;
    let ct = code.encode(t)?;
    let bits = select(&cs, &ct, gamma)?;
    let qubits = (0..n * lgq)
        .map(|idx| prepare_conjugate(bits.get(idx), Basis::from_bit(gamma.get(idx / lgq))))
        .collect();
    ProductState::new(qubits, lgq)
}

/// Programs a device with two messages and fresh fair coins.
pub fn program<R: Rng + ?Sized>(
    code: Arc<dyn LinearCode>,
    s: &BitVector,
    t: &BitVector,
    rng: &mut R,
) -> Result<OtmDevice> {
    let gamma = BitVector::random(code.blocks(), rng);
    OtmDevice::with_coins(code, s, t, gamma)
}

impl OtmDevice {
    /// Programs a device with chosen coins. Used by tests and exact
    /// enumeration; [`program`] is the normal entry point.
    pub fn with_coins(
        code: Arc<dyn LinearCode>,
        s: &BitVector,
        t: &BitVector,
        gamma: BitVector,
    ) -> Result<Self> {
        let state = prepare_register(code.as_ref(), s, t, &gamma)?;
        Ok(Self {
            code,
            state,
            sealed: SealedReference {
                s: s.clone(),
                t: t.clone(),
                gamma,
            },
        })
    }

    pub fn shape(&self) -> DeviceShape {
        DeviceShape {
            blocks: self.code.blocks(),
            block_bits: self.code.block_bits(),
        }
    }

    pub fn code(&self) -> &Arc<dyn LinearCode> {
        &self.code
    }

    /// Applies a single-qubit instrument and returns only the outcome label.
    pub fn measure_qubit<R: Rng + ?Sized>(
        &mut self,
        index: usize,
        instrument: &Instrument,
        rng: &mut R,
    ) -> Result<u32> {
        qsim::measure(&mut self.state, index, instrument, rng)
    }

    /// Messages, coins and current register, for oracle checks only.
    pub fn sealed(&self) -> &SealedReference {
        &self.sealed
    }

    pub fn sealed_state(&self) -> &ProductState {
        &self.state
    }

    /// JSON snapshot: coins as a bit string and each qubit as eight reals
    /// (row-major, real/imaginary interleaved) with 17 significant digits.
    pub fn snapshot_json(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{{\"gamma\":\"{}\",\"block_bits\":{},\"qubits\":[",
            self.sealed.gamma,
            self.state.block_bits()
        );
        for (qi, q) in self.state.qubits().iter().enumerate() {
            if qi > 0 {
                out.push(',');
            }
            out.push('[');
            for (k, x) in q.rho().to_reals().iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{x:.16e}");
            }
            out.push(']');
        }
        out.push_str("]}");
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceSnapshot {
    pub gamma: BitVector,
    pub block_bits: usize,
    pub qubits: Vec<[f64; 8]>,
}

impl DeviceSnapshot {
    pub fn parse(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_state(&self) -> Result<ProductState> {
        let qubits = self
            .qubits
            .iter()
            .map(|r| Qubit::new(Mat2::from_reals(*r)))
            .collect::<Result<Vec<_>>>()?;
        ProductState::new(qubits, self.block_bits)
    }
}

/// Measures every qubit in the basis of `choice`, in index order.
pub fn honest_measure<R: Rng + ?Sized>(
    device: &mut OtmDevice,
    choice: ReadoutChoice,
    rng: &mut R,
) -> Result<BitVector> {
    let inst = basis_instrument(choice.basis().angle());
    let len = device.state.len();
    let mut z = BitVector::zeros(len);
    for idx in 0..len {
        if device.measure_qubit(idx, &inst, rng)? == 1 {
            z.set(idx, true);
        }
    }
    Ok(z)
}

/// Honest readout through the qubit simulator followed by decoding.
pub fn honest_read<R: Rng + ?Sized>(
    device: &mut OtmDevice,
    choice: ReadoutChoice,
    rng: &mut R,
) -> Result<Decoding> {
    let z = honest_measure(device, choice, rng)?;
    device.code.decode(&z)
}

/// Classical shortcut for [`honest_measure`]: matched blocks are copied from
/// the codeword and mismatched blocks are uniform. The register is collapsed
/// to the same post-measurement states the simulator would leave.
pub fn fast_honest_measure<R: Rng + ?Sized>(
    device: &mut OtmDevice,
    choice: ReadoutChoice,
    rng: &mut R,
) -> Result<BitVector> {
    let (n, lgq) = (device.code.blocks(), device.code.block_bits());
    let wanted = match choice {
        ReadoutChoice::First => &device.sealed.s,
        ReadoutChoice::Second => &device.sealed.t,
    };
    let mut z = device.code.encode(wanted)?;
    for i in 0..n {
        if device.sealed.gamma.get(i) != choice.matched_coin() {
            z.write_slice(i * lgq, &BitVector::random(lgq, rng));
        }
    }
    let basis = choice.basis();
    let collapsed = (0..n * lgq)
        .map(|idx| prepare_conjugate(z.get(idx), basis))
        .collect();
    device.state = ProductState::new(collapsed, lgq)?;
    Ok(z)
}

pub fn fast_honest_read<R: Rng + ?Sized>(
    device: &mut OtmDevice,
    choice: ReadoutChoice,
    rng: &mut R,
) -> Result<Decoding> {
    let z = fast_honest_measure(device, choice, rng)?;
    device.code.decode(&z)
}

/// Upper limit on `2^n * 2^(n lg q)` for the exact readout enumerators.
pub const EXACT_READOUT_LIMIT: u64 = 1 << 24;

fn check_tiny(code: &dyn LinearCode) -> Result<()> {
    let bits = code.blocks() + code.codeword_len();
    if bits >= 63 || (1u64 << bits) > EXACT_READOUT_LIMIT {
        return Err(Error::BudgetExceeded(format!(
            "exact readout needs 2^{bits} paths (limit {EXACT_READOUT_LIMIT})"
        )));
    }
    Ok(())
}

/// Exact distribution of the honest measurement string `z` for fixed
/// messages, averaging over the coins and walking every simulator branch.
pub fn readout_distribution(
    code: &dyn LinearCode,
    s: &BitVector,
    t: &BitVector,
    choice: ReadoutChoice,
) -> Result<BTreeMap<BitVector, f64>> {
    check_tiny(code)?;
    let n = code.blocks();
    let len = code.codeword_len();
    let inst = basis_instrument(choice.basis().angle());
    let mut dist = BTreeMap::new();
    let coin_weight = 0.5f64.powi(n as i32);
    for g in 0..1u64 << n {
        let gamma = BitVector::from_u64(g, n);
        let state = prepare_register(code, s, t, &gamma)?;
        // Per-qubit outcome probabilities; the register is a product state.
        let per_qubit: Vec<[f64; 2]> = state
            .qubits()
            .iter()
            .map(|q| {
                let p = qsim::qubit_probabilities(q, &inst);
                [p[0].1, p[1].1]
            })
            .collect();
        for zbits in 0..1u64 << len {
            let p: f64 = per_qubit
                .iter()
                .enumerate()
                .map(|(idx, pq)| pq[(zbits >> idx & 1) as usize])
                .product();
            if p > 0.0 {
                *dist.entry(BitVector::from_u64(zbits, len)).or_insert(0.0) += coin_weight * p;
            }
        }
    }
    Ok(dist)
}

/// Exact distribution of `z` under [`fast_honest_measure`].
pub fn fast_readout_distribution(
    code: &dyn LinearCode,
    s: &BitVector,
    t: &BitVector,
    choice: ReadoutChoice,
) -> Result<BTreeMap<BitVector, f64>> {
    check_tiny(code)?;
    let (n, lgq) = (code.blocks(), code.block_bits());
    let wanted = match choice {
        ReadoutChoice::First => code.encode(s)?,
        ReadoutChoice::Second => code.encode(t)?,
    };
    let mut dist = BTreeMap::new();
    for g in 0..1u64 << n {
        let gamma = BitVector::from_u64(g, n);
        let mismatched: Vec<usize> = (0..n)
            .filter(|&i| gamma.get(i) != choice.matched_coin())
            .collect();
        let free_bits = mismatched.len() * lgq;
        let p = 0.5f64.powi(n as i32) * 0.5f64.powi(free_bits as i32);
        for fill in 0..1u64 << free_bits {
            let mut z = wanted.clone();
            for (m, &i) in mismatched.iter().enumerate() {
                let block = BitVector::from_u64(fill >> (m * lgq), lgq);
                z.write_slice(i * lgq, &block);
            }
            *dist.entry(z).or_insert(0.0) += p;
        }
    }
    Ok(dist)
}

/// Pushes a distribution over received words through the decoder; `None`
/// collects decoding failures.
pub fn decoded_distribution(
    code: &dyn LinearCode,
    words: &BTreeMap<BitVector, f64>,
) -> Result<BTreeMap<Option<BitVector>, f64>> {
    let mut out = BTreeMap::new();
    for (z, p) in words {
        let key = code.decode(z)?.message().cloned();
        *out.entry(key).or_insert(0.0) += p;
    }
    Ok(out)
}

/// Total variation distance between two finite distributions.
pub fn total_variation<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<&K> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}
