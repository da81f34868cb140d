//! Exact distributions at tiny scale, min-entropy, bound calculators and
//! numerical identity checks.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{
    check_action, default_max_steps, fictional_adversary, Action, DevicePrior, SeparablePovmElement,
    Strategy, Transcript,
};
use crate::code::LinearCode;
use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::otm::{prepare_register, DeviceShape};
use crate::qsim::{qubit_probabilities, ProductState, IMPOSSIBLE_OUTCOME};

/// One observed step of an outcome path: (qubit, instrument id, outcome).
pub type ZStep = (usize, u64, u32);

const MASS_TOLERANCE: f64 = 1e-9;

/// `P(x, z)` over packed messages `x = s | t << ℓ` and interned outcome
/// paths `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    message_bits: usize,
    /// Keyed `(z, x)` so each conditional is a contiguous range.
    cells: BTreeMap<(u64, u64), f64>,
    z_labels: Vec<Vec<ZStep>>,
}

impl JointDistribution {
    /// Builds a distribution from `(x, z, p)` triples, summing repeats.
    /// Total mass must be within 1e-9 of 1.
    pub fn from_cells<I>(message_bits: usize, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64, f64)>,
    {
        let mut map = BTreeMap::new();
        let mut max_z = None;
        for (x, z, p) in cells {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidDistribution(format!("probability {p} at ({x}, {z})")));
            }
            *map.entry((z, x)).or_insert(0.0) += p;
            max_z = max_z.max(Some(z));
        }
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("total mass {total}")));
        }
        let z_count = max_z.map_or(0, |z| z as usize + 1);
        Ok(Self {
            message_bits,
            cells: map,
            z_labels: vec![Vec::new(); z_count],
        })
    }

    pub fn message_bits(&self) -> usize {
        self.message_bits
    }

    /// `(x, z, p)` in `(z, x)` order.
    pub fn cells(&self) -> impl Iterator<Item = (u64, u64, f64)> + '_ {
        self.cells.iter().map(|(&(z, x), &p)| (x, z, p))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cells.values().sum()
    }

    pub fn z_count(&self) -> usize {
        self.z_labels.len()
    }

    /// The outcome path behind `z`, empty for distributions built from raw cells.
    pub fn z_label(&self, z: u64) -> Option<&[ZStep]> {
        self.z_labels.get(z as usize).map(Vec::as_slice)
    }

    pub fn find_z(&self, label: &[ZStep]) -> Option<u64> {
        self.z_labels.iter().position(|l| l == label).map(|z| z as u64)
    }

    /// First 16 hex digits of the SHA-256 of the outcome path.
    pub fn z_hash(&self, z: u64) -> String {
        let mut h = Sha256::new();
        h.update(z.to_le_bytes());
        for &(q, i, o) in self.z_label(z).unwrap_or(&[]) {
            h.update((q as u64).to_le_bytes());
            h.update(i.to_le_bytes());
            h.update(o.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn z_marginal(&self) -> BTreeMap<u64, f64> {
        let mut out = BTreeMap::new();
        for (&(z, _), &p) in &self.cells {
            *out.entry(z).or_insert(0.0) += p;
        }
        out
    }

    pub fn x_marginal(&self) -> BTreeMap<u64, f64> {
        let mut out = BTreeMap::new();
        for (&(_, x), &p) in &self.cells {
            *out.entry(x).or_insert(0.0) += p;
        }
        out
    }

    /// `P(x | z)`; `None` when `z` has no mass.
    pub fn conditional(&self, z: u64) -> Option<BTreeMap<u64, f64>> {
        let row: BTreeMap<u64, f64> = self
            .cells
            .range((z, 0)..=(z, u64::MAX))
            .map(|(&(_, x), &p)| (x, p))
            .collect();
        let pz: f64 = row.values().sum();
        (pz > 0.0).then(|| row.into_iter().map(|(x, p)| (x, p / pz)).collect())
    }

    /// Splits a packed message into `(s, t)`.
    pub fn unpack(&self, x: u64) -> (BitVector, BitVector) {
        let ell = self.message_bits;
        let mask = if ell == 64 { u64::MAX } else { (1u64 << ell) - 1 };
        (
            BitVector::from_u64(x & mask, ell),
            BitVector::from_u64(x >> ell, ell),
        )
    }

    /// The pair `(X, Z)` as one variable with a trivial conditioning value.
    pub fn joint_as_message(&self) -> JointDistribution {
        let cells = self
            .cells
            .values()
            .enumerate()
            .map(|(i, &p)| ((0u64, i as u64), p))
            .collect();
        JointDistribution {
            message_bits: 0,
            cells,
            z_labels: vec![Vec::new()],
        }
    }

    /// `s,t,z,probability` rows; `z` is the outcome-path hash.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,t,z,probability\n");
        for (x, z, p) in self.cells() {
            let (s, t) = self.unpack(x);
            let _ = writeln!(out, "{s},{t},{},{p:e}", self.z_hash(z));
        }
        out
    }

    /// Cells with positive mass as `(P(x, z), P(z))`, in key order.
    fn atoms(&self) -> Vec<(f64, f64)> {
        let pz = self.z_marginal();
        self.cells
            .iter()
            .filter(|(_, &p)| p > 0.0)
            .map(|(&(z, _), &p)| (p, pz[&z]))
            .collect()
    }
}

/// Limits for [`exact_joint_distribution`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationLimits {
    /// Maximum weighted path count, summed over `(s, t, γ)` cells.
    pub budget: u64,
    /// Per-path step limit; defaults to `4 n lg q`.
    pub max_steps: Option<usize>,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            budget: 100_000_000,
            max_steps: None,
        }
    }
}

struct Walk<'a> {
    strategy: &'a dyn Strategy,
    shape: DeviceShape,
    max_steps: usize,
    paths: &'a AtomicU64,
    budget: u64,
}

impl Walk<'_> {
    fn descend(
        &self,
        state: &ProductState,
        transcript: &mut Transcript,
        prob: f64,
        leaves: &mut Vec<(Vec<ZStep>, f64)>,
    ) -> Result<()> {
        let (qubit, instrument) = match self.strategy.next(self.shape, transcript) {
            Action::Measure { .. } if transcript.len() == self.max_steps => return self.leaf(transcript, prob, leaves),
            Action::Stop => return self.leaf(transcript, prob, leaves),
            Action::Measure { qubit, instrument } => (qubit, instrument),
        };
        check_action(self.shape, qubit, &instrument)?;
        let probs = qubit_probabilities(state.qubit(qubit)?, &instrument);
        for (which, (label, p)) in probs.into_iter().enumerate() {
            if p <= IMPOSSIBLE_OUTCOME {
                continue;
            }
            let mut next = state.clone();
            next.apply_outcome(qubit, &instrument, which)?;
            transcript.push(qubit, instrument.id(), label);
            let r = self.descend(&next, transcript, prob * p, leaves);
            transcript.pop();
            r?;
        }
        Ok(())
    }

    fn leaf(&self, transcript: &Transcript, prob: f64, leaves: &mut Vec<(Vec<ZStep>, f64)>) -> Result<()> {
        let seen = self.paths.fetch_add(1, Ordering::Relaxed) + 1;
        if seen > self.budget {
            return Err(Error::BudgetExceeded(format!(
                "more than {} weighted outcome paths",
                self.budget
            )));
        }
        let key = transcript
            .records()
            .iter()
            .map(|r| (r.qubit, r.instrument, r.outcome))
            .collect();
        leaves.push((key, prob));
        Ok(())
    }
}

/// Enumerates `s`, `t`, `γ` uniformly and every outcome path of `strategy`
/// with its exact probability.
pub fn exact_joint_distribution(
    code: &dyn LinearCode,
    strategy: &dyn Strategy,
    limits: EnumerationLimits,
) -> Result<JointDistribution> {
    let (ell, n) = (code.message_len(), code.blocks());
    let bits = 2 * ell + n;
    if bits >= 63 || (1u64 << bits) > limits.budget {
        return Err(Error::BudgetExceeded(format!(
            "2^(2ℓ) · 2^n = 2^{bits} cells exceeds the budget of {}",
            limits.budget
        )));
    }
    let shape = DeviceShape {
        blocks: n,
        block_bits: code.block_bits(),
    };
    let paths = AtomicU64::new(0);
    let walk = Walk {
        strategy,
        shape,
        max_steps: limits.max_steps.unwrap_or_else(|| default_max_steps(shape)),
        paths: &paths,
        budget: limits.budget,
    };
    let cell_leaves = (0..1u64 << bits)
        .into_par_iter()
        .map(|cell| {
            let s = cell & ((1 << ell) - 1);
            let t = (cell >> ell) & ((1 << ell) - 1);
            let g = cell >> (2 * ell);
            let state = prepare_register(
                code,
                &BitVector::from_u64(s, ell),
                &BitVector::from_u64(t, ell),
                &BitVector::from_u64(g, n),
            )?;
            let mut leaves = Vec::new();
            walk.descend(&state, &mut Transcript::new(), 1.0, &mut leaves)?;
            Ok((s | t << ell, leaves))
        })
        .collect::<Result<Vec<_>>>()?;

    // Merge in cell order so the result does not depend on scheduling.
    let weight = 0.5f64.powi(bits as i32);
    let mut ids: HashMap<Vec<ZStep>, u64> = HashMap::new();
    let mut labels = Vec::new();
    let mut cells = BTreeMap::new();
    for (x, leaves) in cell_leaves {
        for (key, p) in leaves {
            let z = *ids.entry(key).or_insert_with_key(|k| {
                labels.push(k.clone());
                labels.len() as u64 - 1
            });
            *cells.entry((z, x)).or_insert(0.0) += weight * p;
        }
    }
    let total: f64 = cells.values().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("enumerated mass {total}")));
    }
    Ok(JointDistribution {
        message_bits: ell,
        cells,
        z_labels: labels,
    })
}

fn neg_lg(p: f64) -> f64 {
    -p.log2() + 0.0
}

/// `H_∞(X|Z) = -lg max P(x|z)` over the support, or `H_∞(X)` when not
/// conditioning.
pub fn min_entropy(dist: &JointDistribution, conditioned_on_z: bool) -> Result<f64> {
    if conditioned_on_z {
        min_entropy_with_floor(dist, 0.0)
    } else {
        let max = dist.x_marginal().into_values().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        Ok(neg_lg(max))
    }
}

/// Conditional min-entropy over outcomes with `P(z) >= min_pz` only.
pub fn min_entropy_with_floor(dist: &JointDistribution, min_pz: f64) -> Result<f64> {
    let max = dist
        .atoms()
        .into_iter()
        .filter(|&(_, w)| w >= min_pz)
        .map(|(m, w)| m / w)
        .fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::InvalidDistribution("empty support".into()));
    }
    Ok(neg_lg(max))
}

/// Probability below which an outcome of an `qubits`-qubit register counts
/// as negligible: `δ · 2^-qubits`.
pub fn negligible_threshold(delta: f64, qubits: usize) -> f64 {
    delta * 0.5f64.powi(qubits as i32)
}

/// `H_∞^ε(X|Z)`: the smallest cap `t` on `P(E, X=x | Z=z)` whose removed mass
/// `Σ (P(x,z) - t P(z))+` is at most `ε`, reported as `-lg t`.
pub fn smooth_min_entropy(dist: &JointDistribution, eps: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("eps {eps} not in [0, 1)")));
    }
    let total = dist.total();
    if eps >= total {
        return Err(Error::InvalidParameter(format!("eps {eps} >= total mass {total}")));
    }
    let mut atoms = dist.atoms();
    if atoms.is_empty() {
        return Err(Error::InvalidDistribution("empty support".into()));
    }
    atoms.sort_by(|a, b| (b.0 / b.1).total_cmp(&(a.0 / a.1)));
    // Removed mass is linear in t between consecutive ratios; walk down the
    // sorted ratios until the segment containing the solution.
    let (mut mass, mut weight) = (0.0, 0.0);
    for (k, &(m, w)) in atoms.iter().enumerate() {
        mass += m;
        weight += w;
        let cap = (mass - eps) / weight;
        let lower = atoms.get(k + 1).map_or(0.0, |&(m, w)| m / w);
        if cap >= lower {
            return Ok(neg_lg(cap.min(m / w)));
        }
    }
    unreachable!("removed mass reaches the total at t = 0")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm1Params {
    pub h: Vec<f64>,
    pub lambda: Vec<f64>,
    pub basis_sizes: Vec<f64>,
    pub dims: Vec<f64>,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm1Result {
    pub bound: f64,
    pub c: f64,
    pub eps: f64,
}

pub fn thm1_bound(p: &Thm1Params) -> Result<Thm1Result> {
    let len = p.h.len();
    if p.lambda.len() != len || p.basis_sizes.len() != len || p.dims.len() != len {
        return Err(Error::Dimension("subsystem lists differ in length".into()));
    }
    if !(p.tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau {} must be positive", p.tau)));
    }
    for i in 0..len {
        if !(p.lambda[i] > 0.0 && p.lambda[i] < 0.5) {
            return Err(Error::InvalidParameter(format!("lambda[{i}] = {} not in (0, 1/2)", p.lambda[i])));
        }
        if !(p.basis_sizes[i] >= 1.0 && p.dims[i] >= 1.0) {
            return Err(Error::InvalidParameter(format!("subsystem {i} has |B| or d below 1")));
        }
    }
    let bound = -p.tau + p.h.iter().zip(&p.lambda).map(|(h, l)| h - l).sum::<f64>();
    let c: f64 = (0..len)
        .map(|i| 16.0 * (p.basis_sizes[i] * p.dims[i] / p.lambda[i]).log2().powi(2))
        .sum();
    Ok(Thm1Result {
        bound,
        c,
        eps: (-2.0 * p.tau * p.tau / c).exp(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm2Params {
    pub ell: f64,
    pub lgq: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub tau0: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm2Result {
    /// Raw value, not clamped at 0.
    pub bound: f64,
    pub eps: f64,
    pub per_bit: f64,
    pub vacuous: bool,
}

pub fn thm2_bound(p: &Thm2Params) -> Result<Thm2Result> {
    if !(p.alpha > 0.0 && p.alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {} not in (0, 1]", p.alpha)));
    }
    if !(p.lambda > 0.0 && p.lambda < 0.5) {
        return Err(Error::InvalidParameter(format!("lambda {} not in (0, 1/2)", p.lambda)));
    }
    if !(p.tau0 > 0.0) || !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::InvalidParameter("need tau0 > 0 and delta in (0, 1)".into()));
    }
    if !(p.ell >= 1.0 && p.lgq >= 1.0) {
        return Err(Error::InvalidParameter("ell and lgq must be at least 1".into()));
    }
    let slack = 4.0 * p.tau0 * (1.0 + (1.0 + (1.0 / p.lambda).log2()) / p.lgq.sqrt());
    let rate = (0.5 - p.lambda) - slack + (2.0 - 1.0 / p.alpha);
    let bound = rate * p.ell - (1.0 / p.delta).log2();
    Ok(Thm2Result {
        bound,
        eps: (-2.0 * p.tau0 * p.tau0 * p.ell / p.lgq).exp(),
        per_bit: bound / p.ell,
        vacuous: bound <= 0.0,
    })
}

fn shannon(probs: impl Iterator<Item = f64>) -> f64 {
    probs
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        + 0.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub h_standard: f64,
    pub h_hadamard: f64,
    pub average: f64,
    pub pass: bool,
}

const DENSE_TOLERANCE: f64 = 1e-10;

/// Checks `(H(P_std) + H(P_had)) / 2 >= ℓ/2` for an `ℓ`-qubit state, `ℓ <= 3`.
pub fn maassen_uffink_check(rho: &DMatrix<Complex64>) -> Result<UncertaintyReport> {
    let dim = rho.nrows();
    if rho.ncols() != dim || !dim.is_power_of_two() || !(2..=8).contains(&dim) {
        return Err(Error::Dimension(format!(
            "{}x{} is not a 1 to 3 qubit density matrix",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let ell = dim.trailing_zeros() as usize;
    if (rho - rho.adjoint()).norm() > DENSE_TOLERANCE {
        return Err(Error::InvalidQuantum("state is not Hermitian".into()));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > DENSE_TOLERANCE || tr.im.abs() > DENSE_TOLERANCE {
        return Err(Error::InvalidQuantum(format!("trace {tr}")));
    }
    let min_eig = rho.clone().symmetric_eigenvalues().min();
    if min_eig < -DENSE_TOLERANCE {
        return Err(Error::InvalidQuantum(format!("eigenvalue {min_eig}")));
    }
    let h1 = {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        DMatrix::from_row_slice(2, 2, &[a, a, a, -a])
    };
    let mut h = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for _ in 0..ell {
        h = h.kronecker(&h1);
    }
    let rotated = &h * rho * &h;
    let h_standard = shannon((0..dim).map(|i| rho[(i, i)].re));
    let h_hadamard = shannon((0..dim).map(|i| rotated[(i, i)].re));
    let average = (h_standard + h_hadamard) / 2.0;
    Ok(UncertaintyReport {
        h_standard,
        h_hadamard,
        average,
        pass: average >= ell as f64 / 2.0 - 1e-9,
    })
}

/// A Haar-random pure state on `ell` qubits as a density matrix.
pub fn haar_random_state<R: Rng + ?Sized>(ell: usize, rng: &mut R) -> DMatrix<Complex64> {
    let dim = 1 << ell;
    let v = nalgebra::DVector::from_fn(dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let v = &v / Complex64::new(v.norm(), 0.0);
    &v * v.adjoint()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRuleReport {
    /// `H_∞^{ε+ε'}(X|Y)`
    pub lhs: f64,
    /// `H_∞^ε(X,Y) - lg|supp Y| - lg(1/ε')`
    pub rhs: f64,
    pub pass: bool,
}

pub fn chain_rule_check(dist: &JointDistribution, eps: f64, eps2: f64) -> Result<ChainRuleReport> {
    if !(eps > 0.0 && eps2 > 0.0 && eps + eps2 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need eps, eps' > 0 and eps + eps' < 1 (got {eps}, {eps2})"
        )));
    }
    let lhs = smooth_min_entropy(dist, eps + eps2)?;
    let support = dist.z_marginal().values().filter(|&&p| p > 0.0).count();
    let joint = smooth_min_entropy(&dist.joint_as_message(), eps)?;
    let rhs = joint - (support as f64).log2() - (1.0 / eps2).log2();
    Ok(ChainRuleReport {
        lhs,
        rhs,
        pass: lhs > rhs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FictionalEquivalence {
    /// `max |P(s,t | Z=z) - P(s,t | Q=0)|`
    pub max_deviation: f64,
    /// Probability of the real all-zero outcome.
    pub p_real_outcome: f64,
    pub p_all_zero: f64,
    pub p_subset_zero: f64,
    /// `|Pr[Q_A = 0] - 2^-ℓ|`
    pub subset_zero_deviation: f64,
    /// `max |P(γ | Q_A = 0) - 2^-n|`
    pub coin_uniformity_deviation: f64,
}

/// Compares the real separable outcome with POVM element `element` against
/// the fictional per-qubit adversary built from its factors.
pub fn fictional_equivalence_check(
    code: &dyn LinearCode,
    element: &SeparablePovmElement,
    limits: EnumerationLimits,
) -> Result<FictionalEquivalence> {
    let fictional = fictional_adversary(code, element, &DevicePrior::Uniform)?;
    let strategy = element.realising_measurement()?;
    let dist = exact_joint_distribution(code, &strategy, limits)?;
    let label: Vec<ZStep> = strategy
        .instruments()
        .iter()
        .enumerate()
        .map(|(q, inst)| (q, inst.id(), 0))
        .collect();
    let z = dist.find_z(&label).ok_or_else(|| {
        Error::InvalidDistribution("the all-zero outcome has no probability".into())
    })?;
    let real = dist.conditional(z).expect("interned outcomes carry mass");
    let p_real_outcome = dist.z_marginal()[&z];
    let max_deviation = fictional
        .messages_given_all_zero
        .iter()
        .enumerate()
        .map(|(x, &p)| (real.get(&(x as u64)).copied().unwrap_or(0.0) - p).abs())
        .fold(0.0, f64::max);
    let uniform_coin = 0.5f64.powi(code.blocks() as i32);
    Ok(FictionalEquivalence {
        max_deviation,
        p_real_outcome,
        p_all_zero: fictional.p_all_zero,
        p_subset_zero: fictional.p_subset_zero,
        subset_zero_deviation: (fictional.p_subset_zero - 0.5f64.powi(code.message_len() as i32)).abs(),
        coin_uniformity_deviation: fictional
            .coins_given_subset_zero
            .iter()
            .map(|p| (p - uniform_coin).abs())
            .fold(0.0, f64::max),
    })
}
