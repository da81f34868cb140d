//! Seeded Monte Carlo experiments. Trial `i` draws from stream `i` of the
//! master seed and tallies are merged in trial order, so results do not
//! depend on the thread count.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{transmit_word, ChannelParams};
use crate::code::{ConcatenatedCode, LinearCode};
use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::otm::{fast_honest_measure, honest_measure, program, ReadoutChoice};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryStats {
    pub trials: u64,
    /// Decoded message equals the one sent.
    pub recovered: u64,
    /// Decoder reported several consistent messages.
    pub ambiguous: u64,
    /// Decoder reported an inconsistent system.
    pub failures: u64,
    /// Decoder returned a unique message that was not the one sent.
    pub wrong: u64,
    /// Corrupted blocks (channel) or wrong-basis blocks (device), summed.
    pub corrupted_blocks: u64,
    /// Blocks the inner code flagged as erasures. Channel runs only.
    pub erased_blocks: u64,
    /// Corrupted blocks the inner code accepted. Channel runs only.
    pub undetected_blocks: u64,
    /// Trials whose corrupted-block count left `n pe ± 4 sqrt(n pe (1 - pe))`.
    pub concentration_misses: u64,
}

impl RecoveryStats {
    pub fn failure_rate(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        (self.trials - self.recovered) as f64 / self.trials as f64
    }

    fn merge(mut self, other: &RecoveryStats) -> Self {
        self.trials += other.trials;
        self.recovered += other.recovered;
        self.ambiguous += other.ambiguous;
        self.failures += other.failures;
        self.wrong += other.wrong;
        self.corrupted_blocks += other.corrupted_blocks;
        self.erased_blocks += other.erased_blocks;
        self.undetected_blocks += other.undetected_blocks;
        self.concentration_misses += other.concentration_misses;
        self
    }
}

fn tally(decoding: &crate::code::Decoding, sent: &BitVector, stats: &mut RecoveryStats) {
    use crate::code::Decoding;
    stats.trials = 1;
    match decoding {
        Decoding::Success(m) if m == sent => stats.recovered = 1,
        Decoding::Success(_) => stats.wrong = 1,
        Decoding::Ambiguous(m) => {
            stats.ambiguous = 1;
            if m == sent {
                stats.recovered = 1;
            }
        }
        Decoding::Failure => stats.failures = 1,
    }
}

fn outside_concentration(corrupted: usize, n: usize, pe: f64) -> bool {
    let mean = n as f64 * pe;
    let spread = 4.0 * (mean * (1.0 - pe)).sqrt();
    (corrupted as f64 - mean).abs() > spread
}

fn run_trials<F>(trials: u64, trial: F) -> Result<RecoveryStats>
where
    F: Fn(u64) -> Result<RecoveryStats> + Sync + Send,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let per_trial = (0..trials)
        .into_par_iter()
        .map(trial)
        .collect::<Result<Vec<_>>>()?;
    Ok(per_trial
        .iter()
        .fold(RecoveryStats::default(), RecoveryStats::merge))
}

/// Random messages through `encode`, the q-ary symmetric channel and `decode`.
pub fn channel_experiment(code: &ConcatenatedCode, pe: f64, trials: u64, seed: u64) -> Result<RecoveryStats> {
    let params = code.params();
    let channel = ChannelParams::new(params.c, pe)?;
    run_trials(trials, |i| {
        let mut rng = stream_rng(seed, i);
        let message = BitVector::random(code.message_len(), &mut rng);
        let sent = code.encode(&message)?;
        let (received, corrupted) = transmit_word(channel, &sent, &mut rng)?;
        let blocks = code.detect(&received)?;
        let mut stats = RecoveryStats::default();
        for (b, inner) in blocks.iter().enumerate() {
            match inner {
                None => stats.erased_blocks += 1,
                Some(_) => {
                    let (start, c) = (b * params.c, params.c);
                    if received.slice(start, c) != sent.slice(start, c) {
                        stats.undetected_blocks += 1;
                    }
                }
            }
        }
        tally(&code.decode_erasures(&blocks)?, &message, &mut stats);
        stats.corrupted_blocks = corrupted as u64;
        stats.concentration_misses = outside_concentration(corrupted, params.n, pe) as u64;
        Ok(stats)
    })
}

/// Programs a device with random messages and coins, then reads one back.
pub fn otm_experiment(
    code: Arc<dyn LinearCode>,
    choice: ReadoutChoice,
    fast: bool,
    trials: u64,
    seed: u64,
) -> Result<RecoveryStats> {
    let (n, ell) = (code.blocks(), code.message_len());
    run_trials(trials, |i| {
        let mut rng = stream_rng(seed, i);
        let s = BitVector::random(ell, &mut rng);
        let t = BitVector::random(ell, &mut rng);
        let mut device = program(code.clone(), &s, &t, &mut rng)?;
        let mismatched = (0..n)
            .filter(|&b| device.sealed().gamma.get(b) != choice.matched_coin())
            .count();
        let z = if fast {
            fast_honest_measure(&mut device, choice, &mut rng)?
        } else {
            honest_measure(&mut device, choice, &mut rng)?
        };
        let wanted = match choice {
            ReadoutChoice::First => &s,
            ReadoutChoice::Second => &t,
        };
        let mut stats = RecoveryStats::default();
        if let Some(erased) = code.erasures(&z)? {
            let sent = code.encode(wanted)?;
            let lgq = code.block_bits();
            for (b, &e) in erased.iter().enumerate() {
                if e {
                    stats.erased_blocks += 1;
                } else if z.slice(b * lgq, lgq) != sent.slice(b * lgq, lgq) {
                    stats.undetected_blocks += 1;
                }
            }
        }
        tally(&code.decode(&z)?, wanted, &mut stats);
        stats.corrupted_blocks = mismatched as u64;
        stats.concentration_misses = outside_concentration(mismatched, n, 0.5) as u64;
        Ok(stats)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UndetectedStats {
    pub corruptions: u64,
    pub undetected: u64,
    /// `(q0 - 1) / (q - 1)`
    pub expected_rate: f64,
}

impl UndetectedStats {
    pub fn rate(&self) -> f64 {
        self.undetected as f64 / self.corruptions as f64
    }
}

/// Corrupts random inner codewords by uniform nonzero errors and counts
/// how often the result is still an inner codeword.
pub fn undetected_error_experiment(
    code: &ConcatenatedCode,
    corruptions: u64,
    seed: u64,
) -> Result<UndetectedStats> {
    if corruptions == 0 {
        return Err(Error::InvalidParameter("corruptions must be at least 1".into()));
    }
    let (c, c0) = (code.params().c, code.params().c0);
    let hits = (0..corruptions)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let symbol = BitVector::random(c0, &mut rng);
            let mut block = code.g1().vec_mul(&symbol)?;
            block.xor_assign(&random_nonzero(c, &mut rng))?;
            Ok(code.decode_inner(&block)?.is_some() as u64)
        })
        .collect::<Result<Vec<u64>>>()?;
    let q = 2f64.powi(c as i32);
    let q0 = 2f64.powi(c0 as i32);
    Ok(UndetectedStats {
        corruptions,
        undetected: hits.iter().sum(),
        expected_rate: (q0 - 1.0) / (q - 1.0),
    })
}

/// Per-symbol error frequency of raw honest readout against `1/2 - 1/(2q)`.
pub fn readout_symbol_errors(
    code: Arc<dyn LinearCode>,
    choice: ReadoutChoice,
    devices: u64,
    seed: u64,
) -> Result<(u64, u64)> {
    let (n, lgq, ell) = (code.blocks(), code.block_bits(), code.message_len());
    let counts = (0..devices)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let s = BitVector::random(ell, &mut rng);
            let t = BitVector::random(ell, &mut rng);
            let mut device = program(code.clone(), &s, &t, &mut rng)?;
            let z = crate::otm::fast_honest_measure(&mut device, choice, &mut rng)?;
            let wanted = match choice {
                ReadoutChoice::First => code.encode(&s)?,
                ReadoutChoice::Second => code.encode(&t)?,
            };
            Ok((0..n)
                .filter(|&b| z.slice(b * lgq, lgq) != wanted.slice(b * lgq, lgq))
                .count() as u64)
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok((counts.iter().sum(), devices * n as u64))
}

/// A uniformly random nonzero element of `GF(2)^len`.
pub fn random_nonzero<R: Rng + ?Sized>(len: usize, rng: &mut R) -> BitVector {
    loop {
        let e = BitVector::random(len, rng);
        if !e.is_zero() {
            return e;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{build_code, derive_params, systematic_inner, CodeParams};
    use crate::gf2::BitMatrix;
    use crate::rng::master_rng;

    fn small_code() -> ConcatenatedCode {
        let p = derive_params(3, 0.3, 0.1, 0.5, 0.2).unwrap();
        build_code(p, &mut master_rng(1)).unwrap()
    }

    #[test]
    fn noiseless_channel_always_recovers() {
        let code = small_code();
        let s = channel_experiment(&code, 0.0, 200, 7).unwrap();
        assert_eq!(s.recovered, 200);
        assert_eq!(s.corrupted_blocks + s.erased_blocks + s.undetected_blocks, 0);
        assert!(channel_experiment(&code, 0.0, 0, 7).is_err());
    }

    #[test]
    fn experiments_are_deterministic() {
        let code = small_code();
        let a = channel_experiment(&code, 0.3, 300, 9).unwrap();
        let b = channel_experiment(&code, 0.3, 300, 9).unwrap();
        assert_eq!(a, b);
        let code: Arc<dyn LinearCode> = Arc::new(code);
        let a = otm_experiment(code.clone(), ReadoutChoice::Second, true, 50, 3).unwrap();
        let b = otm_experiment(code, ReadoutChoice::Second, true, 50, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn undetected_rate_for_tiny_inner_code() {
        // Inner codewords are 00 and 10: one of the three nonzero errors keeps membership.
        let params = CodeParams {
            k: 1,
            pe: 0.5,
            eps: 0.1,
            delta: 0.5,
            theta: 0.2,
            n: 2,
            c: 2,
            c0: 1,
        };
        let g0 = BitMatrix::from_bit_rows(&["11"]).unwrap();
        let code = ConcatenatedCode::from_parts(params, g0, systematic_inner(1, 2)).unwrap();
        let s = undetected_error_experiment(&code, 30_000, 4).unwrap();
        assert!((s.expected_rate - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.rate() - 1.0 / 3.0).abs() < 0.015, "rate {}", s.rate());
    }

    #[test]
    fn random_nonzero_is_nonzero() {
        let mut rng = master_rng(0);
        assert!((0..1000).all(|_| !random_nonzero(2, &mut rng).is_zero()));
    }
}
