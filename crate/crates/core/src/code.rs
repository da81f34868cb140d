//! Binary linear codes for the q-ary symmetric channel.
//!
//! [`ConcatenatedCode`] is the efficient construction: a random outer code
//! `C0` over `q0`-ary symbols followed by an inner code `C1` that maps each
//! `lg q0`-bit symbol into an `lg q`-bit symbol. The inner code only detects
//! errors; detected symbols become erasures for the outer code, which is
//! decoded by solving a linear system.
//!
//! [`GenericLinearCode`] wraps any small generator matrix together with a
//! decoder so that hand-built toy codes can drive the OTM at sizes where
//! every probability is enumerable.

use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{self, BitMatrix, BitVector, SolveResult};

/// Slack for floor/ceil of values that are mathematically integral but carry
/// floating-point error (e.g. `1 - 0.5 - 0.2`).
const ROUNDING_SLACK: f64 = 1e-9;

fn floor_int(x: f64) -> usize {
    (x + ROUNDING_SLACK).floor().max(0.0) as usize
}

fn ceil_int(x: f64) -> usize {
    (x - ROUNDING_SLACK).ceil().max(0.0) as usize
}

/// Result of running a decoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decoding {
    Success(BitVector),
    /// Several messages were consistent; the canonical one is returned.
    Ambiguous(BitVector),
    Failure,
}

impl Decoding {
    pub fn message(&self) -> Option<&BitVector> {
        match self {
            Decoding::Success(m) | Decoding::Ambiguous(m) => Some(m),
            Decoding::Failure => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Decoding::Failure)
    }
}

/// A GF(2)-linear code whose codewords are `blocks()` symbols of
/// `block_bits()` bits each.
pub trait LinearCode: Send + Sync {
    fn message_len(&self) -> usize;
    fn blocks(&self) -> usize;
    fn block_bits(&self) -> usize;
    /// Generator `G` with codewords `s^T G`.
    fn generator(&self) -> &BitMatrix;
    fn decode(&self, received: &BitVector) -> Result<Decoding>;

    /// Per-block erasure flags, for codes with an inner detection stage.
    fn erasures(&self, _received: &BitVector) -> Result<Option<Vec<bool>>> {
        Ok(None)
    }

    fn codeword_len(&self) -> usize {
        self.blocks() * self.block_bits()
    }

    fn encode(&self, message: &BitVector) -> Result<BitVector> {
        self.generator().vec_mul(message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    /// Outer message length in `q0`-ary symbols.
    pub k: usize,
    pub pe: f64,
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    /// Number of `q`-ary blocks.
    pub n: usize,
    /// `lg q`
    pub c: usize,
    /// `lg q0`
    pub c0: usize,
}

impl CodeParams {
    pub fn message_bits(&self) -> usize {
        self.k * self.c0
    }

    pub fn codeword_bits(&self) -> usize {
        self.n * self.c
    }

    /// `k lg q0 / (n lg q)`
    pub fn rate(&self) -> f64 {
        (self.k * self.c0) as f64 / (self.n * self.c) as f64
    }

    /// `(1 - pe - theta)(1 - delta)`
    pub fn rate_floor(&self) -> f64 {
        (1.0 - self.pe - self.theta) * (1.0 - self.delta)
    }
}

/// Derives block count and symbol sizes:
///
/// ```text
/// n  = floor(k / (1 - pe - theta))
/// c  = floor(2/delta)     * ceil(eps n + lg(n pe))
/// c0 = ceil(2/delta - 2)  * ceil(eps n + lg(n pe))
/// ```
pub fn derive_params(k: usize, pe: f64, eps: f64, delta: f64, theta: f64) -> Result<CodeParams> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k}, need k >= 2")));
    }
    if !(pe > 0.0 && pe < 1.0) {
        return Err(Error::InvalidParameter(format!("pe = {pe} not in (0, 1)")));
    }
    for (name, v) in [("eps", eps), ("delta", delta), ("theta", theta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidParameter(format!("{name} = {v} not in (0, 1)")));
        }
    }
    let margin = 1.0 - pe - theta;
    if margin <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "1 - pe - theta = {margin} must be positive"
        )));
    }
    let n = floor_int(k as f64 / margin);
    let npe = n as f64 * pe;
    if npe < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "n pe = {npe} < 1, lg(n pe) would be negative"
        )));
    }
    let unit = ceil_int(eps * n as f64 + npe.log2());
    let c = floor_int(2.0 / delta) * unit;
    let c0 = ceil_int(2.0 / delta - 2.0) * unit;
    Ok(CodeParams {
        k,
        pe,
        eps,
        delta,
        theta,
        n,
        c,
        c0,
    })
}

pub fn rate(params: &CodeParams) -> f64 {
    params.rate()
}

/// The inner code's membership test and inverse.
#[derive(Clone, Debug)]
enum InnerDecoder {
    /// `G1 = [I | 0]`: a symbol is a codeword iff its tail is zero.
    Systematic,
    General,
}

#[derive(Clone)]
pub struct ConcatenatedCode {
    params: CodeParams,
    g0: BitMatrix,
    g1: BitMatrix,
    /// `G0^T`: row `j` is the equation contributed by outer codeword bit `j`.
    g0_equations: BitMatrix,
    generator: BitMatrix,
    inner: InnerDecoder,
    attempts: usize,
}

impl fmt::Debug for ConcatenatedCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConcatenatedCode")
            .field("params", &self.params)
            .field("attempts", &self.attempts)
            .finish_non_exhaustive()
    }
}

/// `[I_c0 | 0]`
pub fn systematic_inner(c0: usize, c: usize) -> BitMatrix {
    let mut g1 = BitMatrix::zeros(c0, c);
    for i in 0..c0 {
        g1.set(i, i, true);
    }
    g1
}

/// Samples the outer matrix until it has full row rank and pairs it with the
/// systematic inner code.
pub fn build_code<R: Rng + ?Sized>(params: CodeParams, rng: &mut R) -> Result<ConcatenatedCode> {
    let (rows, cols) = (params.k * params.c0, params.n * params.c0);
    if rows > cols {
        return Err(Error::InvalidParameter(format!(
            "outer code {rows}x{cols} cannot have full row rank"
        )));
    }
    let mut attempts = 0;
    let g0 = loop {
        attempts += 1;
        let g0 = BitMatrix::random(rows, cols, rng);
        if g0.rank() == rows {
            break g0;
        }
    };
    let mut code = ConcatenatedCode::from_parts(params, g0, systematic_inner(params.c0, params.c))?;
    code.attempts = attempts;
    Ok(code)
}

impl ConcatenatedCode {
    /// Assembles a code from explicit matrices, checking shapes and ranks.
    pub fn from_parts(params: CodeParams, g0: BitMatrix, g1: BitMatrix) -> Result<Self> {
        let (k, n, c, c0) = (params.k, params.n, params.c, params.c0);
        if g0.rows() != k * c0 || g0.cols() != n * c0 {
            return Err(Error::Dimension(format!(
                "G0 is {}x{}, expected {}x{}",
                g0.rows(),
                g0.cols(),
                k * c0,
                n * c0
            )));
        }
        if g1.rows() != c0 || g1.cols() != c {
            return Err(Error::Dimension(format!(
                "G1 is {}x{}, expected {c0}x{c}",
                g1.rows(),
                g1.cols()
            )));
        }
        let r0 = g0.rank();
        if r0 != k * c0 {
            return Err(Error::RankDeficient {
                rank: r0,
                needed: k * c0,
            });
        }
        let r1 = g1.rank();
        if r1 != c0 {
            return Err(Error::RankDeficient {
                rank: r1,
                needed: c0,
            });
        }
        let inner = if g1 == systematic_inner(c0, c) {
            InnerDecoder::Systematic
        } else {
            InnerDecoder::General
        };
        let mut generator = BitMatrix::zeros(k * c0, n * c);
        for r in 0..k * c0 {
            let v = g0.row(r);
            let mut out = BitVector::zeros(n * c);
            for i in 0..n {
                let sym = v.slice(i * c0, c0);
                out.write_slice(i * c, &g1.vec_mul(&sym)?);
            }
            generator.set_row(r, &out);
        }
        Ok(Self {
            params,
            g0_equations: g0.transpose(),
            g0,
            g1,
            generator,
            inner,
            attempts: 1,
        })
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn g0(&self) -> &BitMatrix {
        &self.g0
    }

    pub fn g1(&self) -> &BitMatrix {
        &self.g1
    }

    /// How many outer matrices were sampled before one had full rank.
    pub fn sampling_attempts(&self) -> usize {
        self.attempts
    }

    /// Outer encoding `s^T G0`.
    pub fn encode_outer(&self, message: &BitVector) -> Result<BitVector> {
        self.g0.vec_mul(message)
    }

    /// Inverts the inner code on one `lg q`-bit symbol, or `None` if the
    /// symbol lies outside its image.
    pub fn decode_inner(&self, symbol: &BitVector) -> Result<Option<BitVector>> {
        let (c, c0) = (self.params.c, self.params.c0);
        if symbol.len() != c {
            return Err(Error::Dimension(format!(
                "inner symbol of {} bits, expected {c}",
                symbol.len()
            )));
        }
        match self.inner {
            InnerDecoder::Systematic => {
                if symbol.slice(c0, c - c0).is_zero() {
                    Ok(Some(symbol.slice(0, c0)))
                } else {
                    Ok(None)
                }
            }
            InnerDecoder::General => match gf2::solve(&self.g1, symbol)? {
                SolveResult::Unique(v) => Ok(Some(v)),
                SolveResult::Multiple { .. } => unreachable!("G1 has full row rank"),
                SolveResult::Inconsistent => Ok(None),
            },
        }
    }

    /// Inner decoding of every block: `None` marks an erasure.
    pub fn detect(&self, received: &BitVector) -> Result<Vec<Option<BitVector>>> {
        let c = self.params.c;
        if received.len() != self.params.codeword_bits() {
            return Err(Error::Dimension(format!(
                "received word of {} bits, expected {}",
                received.len(),
                self.params.codeword_bits()
            )));
        }
        (0..self.params.n)
            .map(|i| self.decode_inner(&received.slice(i * c, c)))
            .collect()
    }

    /// Erasure decoding of the outer code from per-block inner decodings.
    pub fn decode_erasures(&self, blocks: &[Option<BitVector>]) -> Result<Decoding> {
        let c0 = self.params.c0;
        let unknowns = self.params.message_bits();
        let kept: Vec<(usize, &BitVector)> = blocks
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.as_ref().map(|b| (i, b)))
            .collect();
        let mut equations = BitMatrix::zeros(kept.len() * c0, unknowns);
        let mut rhs = BitVector::zeros(kept.len() * c0);
        for (e, (i, b)) in kept.iter().enumerate() {
            for j in 0..c0 {
                equations.set_row(e * c0 + j, &self.g0_equations.row(i * c0 + j));
                rhs.set(e * c0 + j, b.get(j));
            }
        }
        Ok(match gf2::solve_equations(&equations, &rhs)? {
            SolveResult::Unique(x) => Decoding::Success(x),
            SolveResult::Multiple { solution, .. } => Decoding::Ambiguous(solution),
            SolveResult::Inconsistent => Decoding::Failure,
        })
    }

    pub fn save_bundle(&self, dir: &Path, seed: u64) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = BundleManifest {
            schema: 1,
            k: self.params.k,
            pe: self.params.pe,
            eps: self.params.eps,
            delta: self.params.delta,
            theta: self.params.theta,
            n: self.params.n,
            c: self.params.c,
            c0: self.params.c0,
            seed,
        };
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        self.g0.write_to(fs::File::create(dir.join(G0_FILE))?)?;
        self.g1.write_to(fs::File::create(dir.join(G1_FILE))?)?;
        Ok(())
    }

    /// Loads a bundle and returns the code with the seed recorded in it.
    pub fn load_bundle(dir: &Path) -> Result<(Self, u64)> {
        let manifest: BundleManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let derived = derive_params(
            manifest.k,
            manifest.pe,
            manifest.eps,
            manifest.delta,
            manifest.theta,
        )?;
        if (derived.n, derived.c, derived.c0) != (manifest.n, manifest.c, manifest.c0) {
            return Err(Error::InvalidParameter(format!(
                "manifest has n, c, c0 = {}, {}, {} but parameters give {}, {}, {}",
                manifest.n, manifest.c, manifest.c0, derived.n, derived.c, derived.c0
            )));
        }
        let g0 = BitMatrix::read_from(BufReader::new(fs::File::open(dir.join(G0_FILE))?))?;
        let g1 = BitMatrix::read_from(BufReader::new(fs::File::open(dir.join(G1_FILE))?))?;
        Ok((Self::from_parts(derived, g0, g1)?, manifest.seed))
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const G0_FILE: &str = "g0.gf2";
pub const G1_FILE: &str = "g1.gf2";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleManifest {
    pub schema: u32,
    pub k: usize,
    pub pe: f64,
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    pub n: usize,
    pub c: usize,
    pub c0: usize,
    pub seed: u64,
}

impl LinearCode for ConcatenatedCode {
    fn message_len(&self) -> usize {
        self.params.message_bits()
    }

    fn blocks(&self) -> usize {
        self.params.n
    }

    fn block_bits(&self) -> usize {
        self.params.c
    }

    fn generator(&self) -> &BitMatrix {
        &self.generator
    }

    /// Outer code first, then the inner code on each `lg q0`-bit block.
    fn encode(&self, message: &BitVector) -> Result<BitVector> {
        if message.len() != self.message_len() {
            return Err(Error::Dimension(format!(
                "message of {} bits, expected {}",
                message.len(),
                self.message_len()
            )));
        }
        let (n, c, c0) = (self.params.n, self.params.c, self.params.c0);
        let outer = self.encode_outer(message)?;
        let mut word = BitVector::zeros(n * c);
        for i in 0..n {
            let sym = outer.slice(i * c0, c0);
            let inner = match self.inner {
                InnerDecoder::Systematic => sym,
                InnerDecoder::General => self.g1.vec_mul(&sym)?,
            };
            word.write_slice(i * c, &inner);
        }
        Ok(word)
    }

    fn decode(&self, received: &BitVector) -> Result<Decoding> {
        let blocks = self.detect(received)?;
        self.decode_erasures(&blocks)
    }

    fn erasures(&self, received: &BitVector) -> Result<Option<Vec<bool>>> {
        Ok(Some(self.detect(received)?.iter().map(Option::is_none).collect()))
    }
}

type DecoderFn = dyn Fn(&BitVector) -> Decoding + Send + Sync;

/// A small linear code with an arbitrary generator and decoder.
#[derive(Clone)]
pub struct GenericLinearCode {
    generator: BitMatrix,
    blocks: usize,
    block_bits: usize,
    decoder: Arc<DecoderFn>,
}

impl fmt::Debug for GenericLinearCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericLinearCode")
            .field("generator", &self.generator)
            .field("blocks", &self.blocks)
            .field("block_bits", &self.block_bits)
            .finish_non_exhaustive()
    }
}

impl GenericLinearCode {
    /// Wraps `generator` (`ell x blocks*block_bits`, full row rank) with a
    /// caller-supplied decoder. The decoder must invert noiseless encoding.
    pub fn new<F>(generator: BitMatrix, blocks: usize, block_bits: usize, decoder: F) -> Result<Self>
    where
        F: Fn(&BitVector) -> Decoding + Send + Sync + 'static,
    {
        if blocks == 0 || block_bits == 0 || generator.cols() != blocks * block_bits {
            return Err(Error::Dimension(format!(
                "generator has {} columns, geometry is {blocks} x {block_bits}",
                generator.cols()
            )));
        }
        let rank = generator.rank();
        if rank != generator.rows() {
            return Err(Error::RankDeficient {
                rank,
                needed: generator.rows(),
            });
        }
        Ok(Self {
            generator,
            blocks,
            block_bits,
            decoder: Arc::new(decoder),
        })
    }

    /// Brute-force decoder that picks the message whose codeword agrees with
    /// the received word on the most blocks. Ties go to the smallest message
    /// (bit 0 least significant) and are reported as ambiguous. Intended for
    /// messages of at most 20 bits.
    pub fn with_nearest_block_decoder(
        generator: BitMatrix,
        blocks: usize,
        block_bits: usize,
    ) -> Result<Self> {
        let ell = generator.rows();
        if ell > 20 {
            return Err(Error::InvalidParameter(format!(
                "nearest-block decoding enumerates 2^{ell} messages"
            )));
        }
        let codewords: Vec<BitVector> = (0..1u64 << ell)
            .map(|m| generator.vec_mul(&BitVector::from_u64(m, ell)))
            .collect::<Result<_>>()?;
        let decoder = move |z: &BitVector| {
            let mut best = (0usize, 0u64, 0usize);
            for (m, cw) in codewords.iter().enumerate() {
                let agree = (0..blocks)
                    .filter(|&i| {
                        z.slice(i * block_bits, block_bits) == cw.slice(i * block_bits, block_bits)
                    })
                    .count();
                if m == 0 || agree > best.0 {
                    best = (agree, m as u64, 1);
                } else if agree == best.0 {
                    best.2 += 1;
                }
            }
            let msg = BitVector::from_u64(best.1, ell);
            if best.2 > 1 {
                Decoding::Ambiguous(msg)
            } else {
                Decoding::Success(msg)
            }
        };
        Self::new(generator, blocks, block_bits, decoder)
    }

    /// `G = [I_ell | I_ell]`, two blocks of `ell` bits each.
    pub fn repetition_pair(ell: usize) -> Result<Self> {
        let mut g = BitMatrix::zeros(ell, 2 * ell);
        for i in 0..ell {
            g.set(i, i, true);
            g.set(i, ell + i, true);
        }
        Self::with_nearest_block_decoder(g, 2, ell)
    }

    /// `G = I_n`, `n` one-bit blocks.
    pub fn identity(n: usize) -> Result<Self> {
        Self::with_nearest_block_decoder(BitMatrix::identity(n), n, 1)
    }
}

impl LinearCode for GenericLinearCode {
    fn message_len(&self) -> usize {
        self.generator.rows()
    }

    fn blocks(&self) -> usize {
        self.blocks
    }

    fn block_bits(&self) -> usize {
        self.block_bits
    }

    fn generator(&self) -> &BitMatrix {
        &self.generator
    }

    fn encode(&self, message: &BitVector) -> Result<BitVector> {
        self.generator.vec_mul(message)
    }

    fn decode(&self, received: &BitVector) -> Result<Decoding> {
        if received.len() != self.codeword_len() {
            return Err(Error::Dimension(format!(
                "received word of {} bits, expected {}",
                received.len(),
                self.codeword_len()
            )));
        }
        Ok((self.decoder)(received))
    }
}
