//! Exact simulation of unentangled qubit registers under single-qubit
//! instruments.
//!
//! A register that starts in a product state stays in a product state when
//! every operation touches one qubit, so each qubit is tracked as its own
//! 2x2 density matrix. Measurements are given in Kraus form; outcome `m`
//! occurs with probability `Tr(K_m ρ K_m†)` and leaves `K_m ρ K_m† / p`.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Slack for Hermiticity, positivity and unit trace of a density matrix.
pub const STATE_TOLERANCE: f64 = 1e-12;
/// Slack for `Σ K†K = I`.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-10;
/// Outcomes sampled with probability at or below this are rejected.
pub const IMPOSSIBLE_OUTCOME: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A 2x2 complex matrix, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([
            [Complex64::new(a, 0.0), Complex64::new(b, 0.0)],
            [Complex64::new(c, 0.0), Complex64::new(d, 0.0)],
        ])
    }

    /// `|v⟩⟨v|`
    pub fn outer(v: [Complex64; 2]) -> Self {
        let mut m = Mat2::ZERO;
        for (r, row) in m.0.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = v[r] * v[c].conj();
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let a = &self.0;
        Mat2([[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]])
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for cell in row.iter_mut() {
                *cell *= s;
            }
        }
        m
    }

    /// Largest absolute entry difference.
    pub fn distance(&self, other: &Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.distance(&self.adjoint()) <= tol
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let a = self.0[0][0].re;
        let d = self.0[1][1].re;
        let b = (self.0[0][1] + self.0[1][0].conj()) * 0.5;
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        [mid - rad, mid + rad]
    }

    /// Principal square root of a positive semidefinite matrix.
    pub fn psd_sqrt(&self) -> Self {
        let s = self.det().re.max(0.0).sqrt();
        let t = (self.trace().re + 2.0 * s).max(0.0).sqrt();
        if t == 0.0 {
            return Mat2::ZERO;
        }
        (*self + Mat2::IDENTITY.scale(s)).scale(1.0 / t)
    }

    /// Eight reals, row-major with real and imaginary parts interleaved.
    pub fn to_reals(&self) -> [f64; 8] {
        let a = &self.0;
        [
            a[0][0].re, a[0][0].im, a[0][1].re, a[0][1].im, a[1][0].re, a[1][0].im, a[1][1].re,
            a[1][1].im,
        ]
    }

    pub fn from_reals(v: [f64; 8]) -> Self {
        Mat2([
            [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])],
            [Complex64::new(v[4], v[5]), Complex64::new(v[6], v[7])],
        ])
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut m = self;
        for r in 0..2 {
            for c in 0..2 {
                m.0[r][c] += rhs.0[r][c];
            }
        }
        m
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + rhs.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &rhs.0);
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.0[0][0], self.0[0][1], self.0[1][0], self.0[1][1])
    }
}

/// Preparation or measurement basis for conjugate coding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Standard,
    Hadamard,
}

impl Basis {
    pub fn angle(self) -> f64 {
        match self {
            Basis::Standard => 0.0,
            Basis::Hadamard => FRAC_PI_4,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Basis::Hadamard
        } else {
            Basis::Standard
        }
    }
}

/// Unit vector `cos(angle)|0⟩ + sin(angle)|1⟩`.
fn real_ket(angle: f64) -> [Complex64; 2] {
    [
        Complex64::new(angle.cos(), 0.0),
        Complex64::new(angle.sin(), 0.0),
    ]
}

/// A single-qubit density matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct Qubit {
    rho: Mat2,
}

impl Qubit {
    pub fn new(rho: Mat2) -> Result<Self> {
        validate_density(&rho)?;
        Ok(Self { rho })
    }

    pub fn rho(&self) -> &Mat2 {
        &self.rho
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho: Mat2::IDENTITY.scale(0.5),
        }
    }

    pub fn is_valid(&self) -> bool {
        validate_density(&self.rho).is_ok()
    }
}

impl fmt::Debug for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Qubit({:?})", self.rho)
    }
}

pub fn validate_density(rho: &Mat2) -> Result<()> {
    if !rho.is_hermitian(STATE_TOLERANCE) {
        return Err(Error::InvalidQuantum(format!("not Hermitian: {rho:?}")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > STATE_TOLERANCE || tr.im.abs() > STATE_TOLERANCE {
        return Err(Error::InvalidQuantum(format!("trace {tr} != 1")));
    }
    let [lo, _] = rho.hermitian_eigenvalues();
    if lo < -STATE_TOLERANCE {
        return Err(Error::InvalidQuantum(format!("negative eigenvalue {lo:e}")));
    }
    Ok(())
}

/// `|b⟩⟨b|` in the standard basis or `H|b⟩⟨b|H` in the Hadamard basis.
pub fn prepare_conjugate(bit: bool, basis: Basis) -> Qubit {
    let angle = basis.angle() + if bit { std::f64::consts::FRAC_PI_2 } else { 0.0 };
    let rho = match (bit, basis) {
        (false, Basis::Standard) => Mat2::real(1.0, 0.0, 0.0, 0.0),
        (true, Basis::Standard) => Mat2::real(0.0, 0.0, 0.0, 1.0),
        (false, Basis::Hadamard) => Mat2::real(0.5, 0.5, 0.5, 0.5),
        (true, Basis::Hadamard) => Mat2::real(0.5, -0.5, -0.5, 0.5),
    };
    debug_assert!(rho.distance(&Mat2::outer(real_ket(angle))) < 1e-15);
    Qubit { rho }
}

/// A single-qubit measurement in Kraus form.
#[derive(Clone, PartialEq)]
pub struct Instrument {
    outcomes: Vec<(u32, Mat2)>,
    id: u64,
}

impl fmt::Debug for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Instrument")
            .field("id", &format_args!("{:016x}", self.id))
            .field("outcomes", &self.outcomes)
            .finish()
    }
}

impl Instrument {
    /// Checks `Σ K†K = I` and that labels are distinct.
    pub fn new(outcomes: Vec<(u32, Mat2)>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidQuantum("instrument with no outcomes".into()));
        }
        let mut labels: Vec<u32> = outcomes.iter().map(|(l, _)| *l).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidQuantum("duplicate outcome label".into()));
        }
        let total = outcomes
            .iter()
            .fold(Mat2::ZERO, |acc, (_, k)| acc + k.adjoint() * *k);
        let dev = total.distance(&Mat2::IDENTITY);
        if dev > COMPLETENESS_TOLERANCE {
            return Err(Error::InvalidQuantum(format!(
                "Kraus operators are incomplete (deviation {dev:e})"
            )));
        }
        let id = content_id(&outcomes);
        Ok(Self { outcomes, id })
    }

    /// Builds Kraus operators `K_m = √M_m` from POVM elements.
    pub fn from_povm(elements: Vec<(u32, Mat2)>) -> Result<Self> {
        for (l, m) in &elements {
            if !m.is_hermitian(STATE_TOLERANCE) || m.hermitian_eigenvalues()[0] < -STATE_TOLERANCE
            {
                return Err(Error::InvalidQuantum(format!(
                    "POVM element {l} is not positive semidefinite"
                )));
            }
        }
        Self::new(elements.into_iter().map(|(l, m)| (l, m.psd_sqrt())).collect())
    }

    pub fn outcomes(&self) -> &[(u32, Mat2)] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Content hash of the Kraus list with entries rounded to 1e-12.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn completeness_deviation(&self) -> f64 {
        self.outcomes
            .iter()
            .fold(Mat2::ZERO, |acc, (_, k)| acc + k.adjoint() * *k)
            .distance(&Mat2::IDENTITY)
    }
}

fn content_id(outcomes: &[(u32, Mat2)]) -> u64 {
    let mut hasher = Sha256::new();
    for (label, k) in outcomes {
        hasher.update(label.to_le_bytes());
        for x in k.to_reals() {
            let q = (x * 1e12).round() as i64;
            hasher.update(q.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has at least 8 bytes"))
}

/// Two-outcome projective measurement onto `cos(angle)|0⟩ + sin(angle)|1⟩`
/// (label 0) and its orthocomplement (label 1).
pub fn basis_instrument(angle: f64) -> Instrument {
    let [a, b] = real_ket(angle);
    let p0 = Mat2::outer([a, b]);
    let p1 = Mat2::outer([-b, a]);
    Instrument::new(vec![(0, p0), (1, p1)]).expect("orthogonal projectors are complete")
}

/// `Tr(K ρ K†)` for every outcome of `instrument`.
pub fn qubit_probabilities(qubit: &Qubit, instrument: &Instrument) -> Vec<(u32, f64)> {
    instrument
        .outcomes
        .iter()
        .map(|(l, k)| (*l, (*k * qubit.rho * k.adjoint()).trace().re))
        .collect()
}

/// Post-measurement state for outcome index `which`, with its probability.
pub fn qubit_update(qubit: &Qubit, instrument: &Instrument, which: usize) -> (Qubit, f64) {
    let k = instrument.outcomes[which].1;
    let unnorm = k * qubit.rho * k.adjoint();
    let p = unnorm.trace().re;
    if p <= 0.0 {
        return (*qubit, p.max(0.0));
    }
    // Re-symmetrise so rounding never accumulates an anti-Hermitian part.
    let rho = (unnorm + unnorm.adjoint()).scale(0.5 / p);
    (Qubit { rho }, p)
}

/// An ordered register of `blocks * block_bits` unentangled qubits; qubit
/// `(i, j)` lives at index `i * block_bits + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductState {
    qubits: Vec<Qubit>,
    block_bits: usize,
}

impl ProductState {
    pub fn new(qubits: Vec<Qubit>, block_bits: usize) -> Result<Self> {
        if block_bits == 0 || !qubits.len().is_multiple_of(block_bits) {
            return Err(Error::Dimension(format!(
                "{} qubits do not form blocks of {block_bits}",
                qubits.len()
            )));
        }
        for q in &qubits {
            validate_density(&q.rho)?;
        }
        Ok(Self { qubits, block_bits })
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub fn block_bits(&self) -> usize {
        self.block_bits
    }

    pub fn blocks(&self) -> usize {
        self.qubits.len() / self.block_bits
    }

    pub fn qubit(&self, index: usize) -> Result<&Qubit> {
        self.qubits.get(index).ok_or(Error::QubitIndex {
            index,
            len: self.qubits.len(),
        })
    }

    pub fn qubits(&self) -> &[Qubit] {
        &self.qubits
    }

    pub fn index(&self, block: usize, position: usize) -> usize {
        block * self.block_bits + position
    }

    /// Replaces qubit `index` by the branch `which` of `instrument` and
    /// returns that branch's probability.
    pub fn apply_outcome(
        &mut self,
        index: usize,
        instrument: &Instrument,
        which: usize,
    ) -> Result<f64> {
        let q = *self.qubit(index)?;
        let (post, p) = qubit_update(&q, instrument, which);
        self.qubits[index] = post;
        Ok(p)
    }
}

pub fn outcome_probabilities(
    state: &ProductState,
    qubit_index: usize,
    instrument: &Instrument,
) -> Result<Vec<(u32, f64)>> {
    Ok(qubit_probabilities(state.qubit(qubit_index)?, instrument))
}

/// Samples an outcome, updates the measured qubit in place and returns the
/// outcome label.
pub fn measure<R: Rng + ?Sized>(
    state: &mut ProductState,
    qubit_index: usize,
    instrument: &Instrument,
    rng: &mut R,
) -> Result<u32> {
    let probs = outcome_probabilities(state, qubit_index, instrument)?;
    let total: f64 = probs.iter().map(|(_, p)| p.max(0.0)).sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut which = probs
        .iter()
        .rposition(|(_, p)| *p > 0.0)
        .unwrap_or(probs.len() - 1);
    for (m, (_, p)) in probs.iter().enumerate() {
        acc += p.max(0.0);
        if target < acc {
            which = m;
            break;
        }
    }
    let p = probs[which].1;
    if p <= IMPOSSIBLE_OUTCOME {
        return Err(Error::ImpossibleOutcome(p));
    }
    state.apply_outcome(qubit_index, instrument, which)?;
    Ok(probs[which].0)
}
