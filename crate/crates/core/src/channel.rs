//! The q-ary symmetric channel with `q = 2^lgq`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Bits per symbol.
    pub lgq: usize,
    /// Probability that a symbol is replaced.
    pub pe: f64,
}

impl ChannelParams {
    pub fn new(lgq: usize, pe: f64) -> Result<Self> {
        if lgq < 1 {
            return Err(Error::InvalidParameter("lgq must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&pe) {
            return Err(Error::InvalidParameter(format!("pe = {pe} not in [0, 1)")));
        }
        Ok(Self { lgq, pe })
    }
}

/// `lg(q - 1)` for `q = 2^lgq`, accurate for any `lgq`.
fn lg_q_minus_one(lgq: usize) -> f64 {
    if lgq == 1 {
        return 0.0;
    }
    lgq as f64 + (-(2f64.powi(-(lgq.min(2000) as i32)))).ln_1p() / std::f64::consts::LN_2
}

/// `-p lg p` with `0 lg 0 = 0`.
fn plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

pub fn binary_entropy(p: f64) -> f64 {
    plogp(p) + plogp(1.0 - p)
}

/// Capacity in q-ary symbols per channel use:
/// `1 + (1-pe) log_q(1-pe) + pe log_q(pe) - pe log_q(q-1)`.
pub fn capacity(params: ChannelParams) -> f64 {
    if params.pe == 0.0 {
        return 1.0;
    }
    let lgq = params.lgq as f64;
    1.0 - binary_entropy(params.pe) / lgq - params.pe * lg_q_minus_one(params.lgq) / lgq
}

/// Readout error probability of a conjugate-coded block measured in the
/// wrong basis half the time: `1/2 - 1/(2q)`.
pub fn otm_error_probability(lgq: usize) -> f64 {
    0.5 - 0.5 * 2f64.powi(-(lgq.min(2000) as i32))
}

/// A uniformly random nonzero `lgq`-bit string.
fn nonzero_symbol<R: Rng + ?Sized>(lgq: usize, rng: &mut R) -> BitVector {
    if lgq < 64 {
        let r = rng.random_range(1..(1u64 << lgq));
        BitVector::from_u64(r, lgq)
    } else {
        loop {
            let r = BitVector::random(lgq, rng);
            if !r.is_zero() {
                return r;
            }
        }
    }
}

/// Passes one symbol through the channel in place; returns whether it was
/// replaced.
pub fn corrupt_symbol<R: Rng + ?Sized>(
    params: ChannelParams,
    symbol: &mut BitVector,
    rng: &mut R,
) -> Result<bool> {
    if symbol.len() != params.lgq {
        return Err(Error::Dimension(format!(
            "symbol of {} bits on a channel with lgq = {}",
            symbol.len(),
            params.lgq
        )));
    }
    if params.pe > 0.0 && rng.random::<f64>() < params.pe {
        symbol.xor_assign(&nonzero_symbol(params.lgq, rng))?;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Sends each block independently through the channel.
pub fn transmit<R: Rng + ?Sized>(
    params: ChannelParams,
    blocks: &[BitVector],
    rng: &mut R,
) -> Result<Vec<BitVector>> {
    blocks
        .iter()
        .map(|b| {
            let mut out = b.clone();
            corrupt_symbol(params, &mut out, rng)?;
            Ok(out)
        })
        .collect()
}

/// Like [`transmit`], but on a concatenation of `lgq`-bit blocks. Returns the
/// received word and the number of corrupted blocks.
pub fn transmit_word<R: Rng + ?Sized>(
    params: ChannelParams,
    word: &BitVector,
    rng: &mut R,
) -> Result<(BitVector, usize)> {
    if !word.len().is_multiple_of(params.lgq) {
        return Err(Error::Dimension(format!(
            "word of {} bits is not a whole number of {}-bit blocks",
            word.len(),
            params.lgq
        )));
    }
    let mut out = word.clone();
    let mut corrupted = 0;
    for i in 0..word.len() / params.lgq {
        let mut block = word.slice(i * params.lgq, params.lgq);
        if corrupt_symbol(params, &mut block, rng)? {
            out.write_slice(i * params.lgq, &block);
            corrupted += 1;
        }
    }
    Ok((out, corrupted))
}
