//! Bit-packed linear algebra over GF(2).
//!
//! Vectors multiply matrices from the left throughout: a message `x` of
//! length `rows` maps to the codeword `x^T G` of length `cols`. Bits are
//! packed into 64-bit words, least significant bit first, and matrices are
//! stored row-major with every row padded to a whole number of words.
//! Padding bits are kept at zero.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

const WORD: usize = 64;

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

#[inline]
fn tail_mask(bits: usize) -> u64 {
    match bits % WORD {
        0 => !0,
        r => (1u64 << r) - 1,
    }
}

/// A packed vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self {
            len,
            words: vec![!0; words_for(len)],
        };
        v.clear_tail();
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Low `len` bits of `value`, bit `i` of the vector being bit `i` of the integer.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= WORD, "from_u64 supports at most 64 bits");
        let mut v = Self::zeros(len);
        if len > 0 {
            v.words[0] = value & tail_mask(len);
        }
        v
    }

    /// Inverse of [`BitVector::from_u64`]; panics above 64 bits.
    pub fn to_u64(&self) -> u64 {
        assert!(self.len <= WORD, "to_u64 supports at most 64 bits");
        self.words.first().copied().unwrap_or(0)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut v = Self {
            len,
            words: (0..words_for(len)).map(|_| rng.next_u64()).collect(),
        };
        v.clear_tail();
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn xor_assign(&mut self, other: &BitVector) -> Result<()> {
        if self.len != other.len {
            return Err(Error::Dimension(format!(
                "xor of lengths {} and {}",
                self.len, other.len
            )));
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        Ok(())
    }

    pub fn xor(&self, other: &BitVector) -> Result<BitVector> {
        let mut out = self.clone();
        out.xor_assign(other)?;
        Ok(out)
    }

    /// Copies `len` bits starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> BitVector {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = BitVector::zeros(len);
        let shift = start % WORD;
        let base = start / WORD;
        for w in 0..out.words.len() {
            let lo = self.words[base + w] >> shift;
            let hi = if shift == 0 {
                0
            } else {
                self.words
                    .get(base + w + 1)
                    .map_or(0, |&x| x << (WORD - shift))
            };
            out.words[w] = lo | hi;
        }
        out.clear_tail();
        out
    }

    /// Overwrites bits `start..start + src.len()` with `src`.
    pub fn write_slice(&mut self, start: usize, src: &BitVector) {
        assert!(start + src.len <= self.len, "write_slice out of range");
        if start.is_multiple_of(WORD) {
            let base = start / WORD;
            let full = src.len / WORD;
            self.words[base..base + full].copy_from_slice(&src.words[..full]);
            for i in full * WORD..src.len {
                self.set(start + i, src.get(i));
            }
        } else {
            for i in 0..src.len {
                self.set(start + i, src.get(i));
            }
        }
    }

    /// Concatenates vectors in order.
    pub fn concat<'a, I>(parts: I) -> BitVector
    where
        I: IntoIterator<Item = &'a BitVector>,
    {
        let parts: Vec<&BitVector> = parts.into_iter().collect();
        let total = parts.iter().map(|p| p.len).sum();
        let mut out = BitVector::zeros(total);
        let mut at = 0;
        for p in parts {
            out.write_slice(at, p);
            at += p.len;
        }
        out
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitVector) -> bool {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum::<u32>()
            % 2
            == 1
    }

    fn clear_tail(&mut self) {
        if let Some(last) = self.words.last_mut() {
            *last &= tail_mask(self.len);
        }
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = Error;

    /// Parses a string of `0`/`1` characters, first character = bit 0.
    fn from_str(s: &str) -> Result<Self> {
        let mut v = BitVector::zeros(s.len());
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => v.set(i, true),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "bad bit character {other:?}"
                    )))
                }
            }
        }
        Ok(v)
    }
}

impl serde::Serialize for BitVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for BitVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Outcome classification of a GF(2) linear system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveResult {
    Unique(BitVector),
    /// Canonical solution (free variables zero) plus a basis of the kernel.
    Multiple {
        solution: BitVector,
        null_basis: Vec<BitVector>,
    },
    Inconsistent,
}

impl SolveResult {
    pub fn solution(&self) -> Option<&BitVector> {
        match self {
            SolveResult::Unique(x) => Some(x),
            SolveResult::Multiple { solution, .. } => Some(solution),
            SolveResult::Inconsistent => None,
        }
    }
}

/// A dense row-major matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(rows: &[BitVector]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            m.row_words_mut(i).copy_from_slice(r.words());
        }
        Ok(m)
    }

    /// Builds a matrix from `0`/`1` row strings, e.g. `["101", "011"]`.
    pub fn from_bit_rows(rows: &[&str]) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|r| r.parse::<BitVector>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&parsed)
    }

    /// Every entry an independent fair bit drawn from `rng`.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(rows, cols);
        let mask = tail_mask(cols);
        for r in 0..rows {
            let row = m.row_words_mut(r);
            for w in row.iter_mut() {
                *w = rng.next_u64();
            }
            if let Some(last) = row.last_mut() {
                *last &= mask;
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols);
        (self.data[r * self.stride + c / WORD] >> (c % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols);
        let w = &mut self.data[r * self.stride + c / WORD];
        let mask = 1u64 << (c % WORD);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> BitVector {
        BitVector {
            len: self.cols,
            words: self.row_words(r).to_vec(),
        }
    }

    pub fn set_row(&mut self, r: usize, v: &BitVector) {
        assert_eq!(v.len(), self.cols, "row length mismatch");
        self.row_words_mut(r).copy_from_slice(v.words());
    }

    pub fn column(&self, c: usize) -> BitVector {
        let mut v = BitVector::zeros(self.rows);
        for r in 0..self.rows {
            if self.get(r, c) {
                v.set(r, true);
            }
        }
        v
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            let row = self.row_words(r);
            for (wi, &w) in row.iter().enumerate() {
                let mut bits = w;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    t.set(wi * WORD + b, r, true);
                    bits &= bits - 1;
                }
            }
        }
        t
    }

    /// `x^T G`: XOR of the rows selected by `x`.
    pub fn vec_mul(&self, x: &BitVector) -> Result<BitVector> {
        if x.len() != self.rows {
            return Err(Error::Dimension(format!(
                "vector of length {} times {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = BitVector::zeros(self.cols);
        for (wi, &w) in x.words().iter().enumerate() {
            let mut bits = w;
            while bits != 0 {
                let r = wi * WORD + bits.trailing_zeros() as usize;
                for (o, &g) in out.words.iter_mut().zip(self.row_words(r)) {
                    *o ^= g;
                }
                bits &= bits - 1;
            }
        }
        Ok(out)
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let y = other.vec_mul(&self.row(r))?;
            out.row_words_mut(r).copy_from_slice(y.words());
        }
        Ok(out)
    }

    /// Submatrix made of the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> BitMatrix {
        let mut out = BitMatrix::zeros(self.rows, cols.len());
        for (j, &c) in cols.iter().enumerate() {
            for r in 0..self.rows {
                if self.get(r, c) {
                    out.set(r, j, true);
                }
            }
        }
        out
    }

    /// Block-diagonal matrix with `copies` copies of `self`.
    pub fn direct_sum(&self, copies: usize) -> BitMatrix {
        let mut out = BitMatrix::zeros(self.rows * copies, self.cols * copies);
        for k in 0..copies {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    if self.get(r, c) {
                        out.set(k * self.rows + r, k * self.cols + c, true);
                    }
                }
            }
        }
        out
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let (head, tail) = self.data.split_at_mut(hi * self.stride);
        head[lo * self.stride..(lo + 1) * self.stride]
            .swap_with_slice(&mut tail[..self.stride]);
    }

    /// `row[dst] ^= row[src]`.
    pub fn add_row(&mut self, src: usize, dst: usize) {
        assert_ne!(src, dst);
        let s = self.stride;
        let (src_off, dst_off) = (src * s, dst * s);
        for w in 0..s {
            let v = self.data[src_off + w];
            self.data[dst_off + w] ^= v;
        }
    }

    /// In-place reduction to reduced row echelon form, considering only the
    /// first `col_limit` columns for pivots. Returns the pivot column of each
    /// of the leading rows, left to right.
    fn reduce(&mut self, col_limit: usize) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..col_limit.min(self.cols) {
            if r == self.rows {
                break;
            }
            let w = c / WORD;
            let mask = 1u64 << (c % WORD);
            let Some(p) = (r..self.rows).find(|&i| self.data[i * self.stride + w] & mask != 0)
            else {
                continue;
            };
            self.swap_rows(r, p);
            let s = self.stride;
            let pivot_off = r * s;
            for i in 0..self.rows {
                if i != r && self.data[i * s + w] & mask != 0 {
                    for k in w..s {
                        let v = self.data[pivot_off + k];
                        self.data[i * s + k] ^= v;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().reduce(self.cols).len()
    }

    /// Indices of `rows` linearly independent columns, chosen greedily from
    /// the left. Fails unless the matrix has full row rank.
    pub fn independent_column_subset(&self) -> Result<Vec<usize>> {
        let pivots = self.clone().reduce(self.cols);
        if pivots.len() != self.rows {
            return Err(Error::RankDeficient {
                rank: pivots.len(),
                needed: self.rows,
            });
        }
        Ok(pivots)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "GF2 {} {}", self.rows, self.cols)?;
        let nbytes = self.cols.div_ceil(8);
        let mut line = String::with_capacity(nbytes * 2);
        for r in 0..self.rows {
            line.clear();
            let bytes = self
                .row_words(r)
                .iter()
                .flat_map(|w| w.to_le_bytes())
                .take(nbytes);
            for b in bytes {
                line.push_str(&format!("{b:02x}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<BitMatrix> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MatrixFormat("missing header".into()))??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("GF2") {
            return Err(Error::MatrixFormat(format!("bad header {header:?}")));
        }
        let mut dim = || -> Result<usize> {
            parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::MatrixFormat(format!("bad header {header:?}")))
        };
        let (rows, cols) = (dim()?, dim()?);
        let nbytes = cols.div_ceil(8);
        let mut m = BitMatrix::zeros(rows, cols);
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::MatrixFormat(format!("missing row {r}")))??;
            let line = line.trim_end();
            if line.len() != 2 * nbytes {
                return Err(Error::MatrixFormat(format!(
                    "row {r} has {} hex digits, expected {}",
                    line.len(),
                    2 * nbytes
                )));
            }
            if line.bytes().any(|b| b.is_ascii_uppercase()) {
                return Err(Error::MatrixFormat(format!("row {r} is not lowercase hex")));
            }
            for bi in 0..nbytes {
                let byte = u8::from_str_radix(&line[2 * bi..2 * bi + 2], 16)
                    .map_err(|e| Error::MatrixFormat(format!("row {r}: {e}")))?;
                for bit in 0..8 {
                    if byte >> bit & 1 == 1 {
                        let c = bi * 8 + bit;
                        if c >= cols {
                            return Err(Error::MatrixFormat(format!(
                                "row {r} has nonzero padding"
                            )));
                        }
                        m.set(r, c, true);
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn to_file_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("matrix file is ASCII")
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {}", self.row(r))?;
        }
        write!(f, "]")
    }
}

/// `x^T G`.
pub fn vec_mat_mul(x: &BitVector, g: &BitMatrix) -> Result<BitVector> {
    g.vec_mul(x)
}

pub fn rank(g: &BitMatrix) -> usize {
    g.rank()
}

pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> BitMatrix {
    BitMatrix::random(rows, cols, rng)
}

pub fn independent_column_subset(g: &BitMatrix) -> Result<Vec<usize>> {
    g.independent_column_subset()
}

/// Solves `x^T A = b` for `x`, with `x.len() == A.rows()` and
/// `b.len() == A.cols()`.
pub fn solve(a: &BitMatrix, b: &BitVector) -> Result<SolveResult> {
    if b.len() != a.cols() {
        return Err(Error::Dimension(format!(
            "right-hand side of length {} for a {}x{} system",
            b.len(),
            a.rows(),
            a.cols()
        )));
    }
    solve_equations(&a.transpose(), b)
}

/// Solves the system whose rows are equations: `E x = b`, with
/// `b.len() == E.rows()` and `x.len() == E.cols()`.
pub fn solve_equations(equations: &BitMatrix, rhs: &BitVector) -> Result<SolveResult> {
    if rhs.len() != equations.rows() {
        return Err(Error::Dimension(format!(
            "{} equations but right-hand side of length {}",
            equations.rows(),
            rhs.len()
        )));
    }
    let unknowns = equations.cols();
    let mut aug = BitMatrix::zeros(equations.rows(), unknowns + 1);
    for r in 0..equations.rows() {
        let src = equations.row_words(r);
        aug.row_words_mut(r)[..src.len()].copy_from_slice(src);
        if rhs.get(r) {
            aug.set(r, unknowns, true);
        }
    }
    let pivots = aug.reduce(unknowns);
    let rank = pivots.len();
    if (rank..aug.rows()).any(|r| aug.get(r, unknowns)) {
        return Ok(SolveResult::Inconsistent);
    }
    let mut x = BitVector::zeros(unknowns);
    for (r, &p) in pivots.iter().enumerate() {
        if aug.get(r, unknowns) {
            x.set(p, true);
        }
    }
    if rank == unknowns {
        return Ok(SolveResult::Unique(x));
    }
    let mut is_pivot = vec![false; unknowns];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let null_basis = (0..unknowns)
        .filter(|&f| !is_pivot[f])
        .map(|f| {
            let mut v = BitVector::zeros(unknowns);
            v.set(f, true);
            for (r, &p) in pivots.iter().enumerate() {
                if aug.get(r, f) {
                    v.set(p, true);
                }
            }
            v
        })
        .collect();
    Ok(SolveResult::Multiple {
        solution: x,
        null_basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bv(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    /// Row-span size by brute force enumeration of all 2^rows combinations.
    fn span_rank(g: &BitMatrix) -> usize {
        let mut span = std::collections::HashSet::new();
        for mask in 0u64..(1 << g.rows()) {
            span.insert(g.vec_mul(&BitVector::from_u64(mask, g.rows())).unwrap());
        }
        span.len().trailing_zeros() as usize
    }

    #[test]
    fn vec_mat_mul_examples() {
        assert_eq!(
            vec_mat_mul(&bv("101"), &BitMatrix::identity(3)).unwrap(),
            bv("101")
        );
        let g = BitMatrix::from_bit_rows(&["101", "011"]).unwrap();
        // 101 xor 011
        assert_eq!(vec_mat_mul(&bv("11"), &g).unwrap(), bv("110"));
        assert!(vec_mat_mul(&bv("1"), &g).is_err());
    }

    #[test]
    fn vec_mat_mul_matches_per_bit_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let g = BitMatrix::random(37, 131, &mut rng);
            let x = BitVector::random(37, &mut rng);
            let y = g.vec_mul(&x).unwrap();
            for j in 0..131 {
                let mut acc = false;
                for i in 0..37 {
                    acc ^= x.get(i) & g.get(i, j);
                }
                assert_eq!(y.get(j), acc);
            }
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(BitMatrix::zeros(3, 3).rank(), 0);
        assert_eq!(BitMatrix::identity(4).rank(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let g = BitMatrix::random(8, 16, &mut rng);
            assert_eq!(g.rank(), span_rank(&g));
            assert_eq!(g.rank(), g.transpose().rank());
        }
    }

    #[test]
    fn solve_examples() {
        let r = solve(&BitMatrix::identity(3), &bv("011")).unwrap();
        assert_eq!(r, SolveResult::Unique(bv("011")));

        // Row 1 of A is zero, so x_1 is free in x^T A = b.
        let a = BitMatrix::from_bit_rows(&["100", "000", "001"]).unwrap();
        match solve(&a, &bv("101")).unwrap() {
            SolveResult::Multiple {
                solution,
                null_basis,
            } => {
                assert_eq!(solution, bv("101"));
                assert_eq!(null_basis, vec![bv("010")]);
            }
            other => panic!("expected Multiple, got {other:?}"),
        }

        // x^T A = b with a column duplicated but the right-hand side disagreeing.
        let a = BitMatrix::from_bit_rows(&["1001", "0100", "0010"]).unwrap();
        assert_eq!(solve(&a, &bv("0001")).unwrap(), SolveResult::Inconsistent);
        assert!(solve(&a, &bv("000")).is_err());
    }

    #[test]
    fn solve_equations_rejects_bad_rhs() {
        assert!(solve_equations(&BitMatrix::identity(2), &bv("1")).is_err());
    }

    #[test]
    fn random_matrix_is_deterministic() {
        let a = BitMatrix::random(13, 70, &mut ChaCha8Rng::seed_from_u64(5));
        let b = BitMatrix::random(13, 70, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert_eq!(a.to_file_string(), b.to_file_string());
    }

    #[test]
    fn random_matrix_cells_are_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [[0u32; 4]; 4];
        let samples = 10_000;
        for _ in 0..samples {
            let m = BitMatrix::random(4, 4, &mut rng);
            for (r, row) in counts.iter_mut().enumerate() {
                for (c, cell) in row.iter_mut().enumerate() {
                    *cell += m.get(r, c) as u32;
                }
            }
        }
        for row in counts {
            for cell in row {
                let mean = cell as f64 / samples as f64;
                assert!((0.47..=0.53).contains(&mean), "cell mean {mean}");
            }
        }
    }

    #[test]
    fn full_rank_fraction_matches_product_formula() {
        let expected: f64 = (1..=8).map(|i| 1.0 - 0.5f64.powi(i)).product();
        assert!((expected - 0.2899).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let full = (0..draws)
            .filter(|_| BitMatrix::random(8, 8, &mut rng).rank() == 8)
            .count();
        let frac = full as f64 / draws as f64;
        assert!((frac - expected).abs() <= 0.02, "fraction {frac}");
    }

    #[test]
    fn independent_columns_examples() {
        let mut g = BitMatrix::zeros(3, 6);
        for i in 0..3 {
            g.set(i, i, true);
        }
        assert_eq!(g.independent_column_subset().unwrap(), vec![0, 1, 2]);
        let g = BitMatrix::from_bit_rows(&["11", "01"]).unwrap();
        assert_eq!(g.independent_column_subset().unwrap(), vec![0, 1]);
        let g = BitMatrix::from_bit_rows(&["110", "110"]).unwrap();
        assert_eq!(
            g.independent_column_subset(),
            Err(Error::RankDeficient { rank: 1, needed: 2 })
        );
    }

    #[test]
    fn independent_columns_pass_rank_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 30 {
            let g = BitMatrix::random(4, 12, &mut rng);
            if g.rank() < 4 {
                continue;
            }
            let cols = g.independent_column_subset().unwrap();
            assert_eq!(cols.len(), 4);
            assert_eq!(g.select_columns(&cols).rank(), 4);
            checked += 1;
        }
    }

    #[test]
    fn matrix_file_format() {
        let g = BitMatrix::from_bit_rows(&["1000000001", "0100000000"]).unwrap();
        let text = g.to_file_string();
        assert_eq!(text, "GF2 2 10\n0102\n0200\n");
        let back = BitMatrix::read_from(text.as_bytes()).unwrap();
        assert_eq!(back, g);
        assert!(BitMatrix::read_from("GF2 1 4\n10\n".as_bytes()).is_err());
        assert!(BitMatrix::read_from("GF2 1 4\n0F\n".as_bytes()).is_err());
        assert!(BitMatrix::read_from("GF3 1 4\n0f\n".as_bytes()).is_err());
    }

    #[test]
    fn slice_and_concat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = BitVector::random(300, &mut rng);
        for (start, len) in [(0, 300), (3, 64), (63, 130), (128, 44), (299, 1), (10, 0)] {
            let s = v.slice(start, len);
            for i in 0..len {
                assert_eq!(s.get(i), v.get(start + i));
            }
        }
        let parts = [v.slice(0, 17), v.slice(17, 128), v.slice(145, 155)];
        assert_eq!(BitVector::concat(&parts), v);
    }

    fn arb_system() -> impl Strategy<Value = (BitMatrix, BitVector, BitVector)> {
        (1usize..40, 1usize..90, any::<u64>()).prop_map(|(r, c, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (
                BitMatrix::random(r, c, &mut rng),
                BitVector::random(r, &mut rng),
                BitVector::random(r, &mut rng),
            )
        })
    }

    proptest! {
        #[test]
        fn vec_mul_is_linear((g, x, y) in arb_system()) {
            let lhs = g.vec_mul(&x.xor(&y).unwrap()).unwrap();
            let rhs = g.vec_mul(&x).unwrap().xor(&g.vec_mul(&y).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn solve_round_trips((a, x, _y) in arb_system()) {
            let b = a.vec_mul(&x).unwrap();
            let result = solve(&a, &b).unwrap();
            let sol = result.solution().expect("system built from a solution is consistent");
            prop_assert_eq!(a.vec_mul(sol).unwrap(), b.clone());
            if let SolveResult::Multiple { null_basis, .. } = &result {
                prop_assert_eq!(null_basis.len(), a.rows() - a.rank());
                for v in null_basis {
                    prop_assert!(a.vec_mul(v).unwrap().is_zero());
                }
                prop_assert_eq!(BitMatrix::from_rows(null_basis).unwrap().rank(), null_basis.len());
            } else {
                prop_assert_eq!(a.rank(), a.rows());
            }
        }

        #[test]
        fn rank_invariant_under_elementary_ops((g, _x, _y) in arb_system(), ops in proptest::collection::vec((any::<bool>(), 0usize..64, 0usize..64), 0..30)) {
            let mut h = g.clone();
            for (swap, a, b) in ops {
                let (a, b) = (a % h.rows(), b % h.rows());
                if swap {
                    h.swap_rows(a, b);
                } else if a != b {
                    h.add_row(a, b);
                }
            }
            prop_assert_eq!(h.rank(), g.rank());
        }

        #[test]
        fn matrix_file_round_trip((g, _x, _y) in arb_system()) {
            let text = g.to_file_string();
            let back = BitMatrix::read_from(text.as_bytes()).unwrap();
            prop_assert_eq!(back.to_file_string(), text);
            prop_assert_eq!(back, g);
        }
    }
}
