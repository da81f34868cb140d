//! Acceptance criteria. Runs as a plain binary so every criterion prints a
//! PASS/FAIL line, then exits nonzero if any failed.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use otmlab::adversary::{breidbart, measure_all, per_block_random_basis, SeparablePovmElement, Strategy};
use otmlab::analysis::{
    chain_rule_check, exact_joint_distribution, fictional_equivalence_check, haar_random_state,
    maassen_uffink_check, min_entropy, smooth_min_entropy, thm1_bound, thm2_bound, EnumerationLimits,
    JointDistribution, Thm1Params, Thm2Params,
};
use otmlab::channel::{capacity, otm_error_probability, ChannelParams};
use otmlab::code::{
    build_code, derive_params, systematic_inner, CodeParams, ConcatenatedCode, GenericLinearCode, LinearCode,
};
use otmlab::experiment::{otm_experiment, readout_symbol_errors, undetected_error_experiment};
use otmlab::gf2::{BitMatrix, BitVector};
use otmlab::otm::{fast_readout_distribution, readout_distribution, total_variation, ReadoutChoice};
use otmlab::qsim::{Basis, Mat2};
use otmlab::rng::master_rng;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk_code() -> Arc<ConcatenatedCode> {
    let p = derive_params(16, 0.5, 0.1, 0.5, 0.2).unwrap();
    assert_eq!((p.n, p.c, p.c0), (53, 44, 22));
    Arc::new(build_code(p, &mut master_rng(2024)).unwrap())
}

const DESK_TRIALS: u64 = 500;
const CHOICES: [ReadoutChoice; 2] = [ReadoutChoice::First, ReadoutChoice::Second];

fn criterion_1(code: &Arc<ConcatenatedCode>, slow_rates: &mut Vec<f64>) -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for (i, choice) in CHOICES.into_iter().enumerate() {
        let stats = otm_experiment(code.clone(), choice, false, DESK_TRIALS, 100 + i as u64).map_err(|e| e.to_string())?;
        let rate = stats.failure_rate();
        slow_rates.push(rate);
        ok &= rate <= 0.02;
        details.push(format!("{choice:?} failure {rate:.4}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed <= Duration::from_secs(60);
    check(ok, format!("{}, {:.1}s", details.join(", "), elapsed.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut tuples = 0;
    let mut bad = Vec::new();
    for k in [4, 8, 16, 32, 64, 128] {
        for pe in [0.1, 0.3, 0.5] {
            for delta in [0.25, 0.5] {
                for theta in [0.1, 0.2] {
                    let Ok(p) = derive_params(k, pe, 0.1, delta, theta) else {
                        continue;
                    };
                    tuples += 1;
                    let rate = p.rate();
                    let cap = capacity(ChannelParams::new(p.c, pe).unwrap());
                    if rate < p.rate_floor() * (1.0 - 1e-12) || rate >= cap {
                        bad.push(format!("k={k} pe={pe} delta={delta} theta={theta}"));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        tuples >= 20 && bad.is_empty() && elapsed <= Duration::from_secs(1),
        format!("{tuples} tuples, {} violations {bad:?}, {:.3}s", bad.len(), elapsed.as_secs_f64()),
    )
}

/// Exact law of transmit ∘ encode by enumeration of received words.
fn channel_law(code: &dyn LinearCode, message: &BitVector, pe: f64) -> BTreeMap<BitVector, f64> {
    let cw = code.encode(message).unwrap();
    let (n, lgq) = (code.blocks(), code.block_bits());
    let len = n * lgq;
    let wrong = pe / (2f64.powi(lgq as i32) - 1.0);
    let mut out = BTreeMap::new();
    for w in 0..1u64 << len {
        let word = BitVector::from_u64(w, len);
        let p: f64 = (0..n)
            .map(|i| {
                if word.slice(i * lgq, lgq) == cw.slice(i * lgq, lgq) {
                    1.0 - pe
                } else {
                    wrong
                }
            })
            .product();
        out.insert(word, p);
    }
    out
}

fn criterion_3(desk: &Arc<ConcatenatedCode>) -> Outcome {
    let code = GenericLinearCode::identity(2).unwrap();
    let pe = otm_error_probability(1);
    let mut worst: f64 = 0.0;
    for s in 0..4 {
        for t in 0..4 {
            let (s, t) = (BitVector::from_u64(s, 2), BitVector::from_u64(t, 2));
            for choice in CHOICES {
                let wanted = if choice == ReadoutChoice::First { &s } else { &t };
                let readout = readout_distribution(&code, &s, &t, choice).map_err(|e| e.to_string())?;
                worst = worst.max(total_variation(&readout, &channel_law(&code, wanted, pe)));
            }
        }
    }
    let devices = 100_000u64.div_ceil(desk.blocks() as u64);
    let (errors, symbols) =
        readout_symbol_errors(desk.clone(), ReadoutChoice::First, devices, 303).map_err(|e| e.to_string())?;
    let freq = errors as f64 / symbols as f64;
    let target = otm_error_probability(desk.block_bits());
    check(
        worst < 1e-12 && (freq - target).abs() <= 0.01,
        format!("max TV {worst:e}; desk symbol error {freq:.4} over {symbols} vs {target:.4}"),
    )
}

fn criterion_4(desk: &Arc<ConcatenatedCode>, slow_rates: &[f64]) -> Outcome {
    let mut worst: f64 = 0.0;
    let codes: Vec<Box<dyn LinearCode>> = vec![
        Box::new(GenericLinearCode::identity(2).unwrap()),
        Box::new(GenericLinearCode::repetition_pair(2).unwrap()),
    ];
    for code in &codes {
        let ell = code.message_len();
        for s in 0..1u64 << ell {
            for t in 0..1u64 << ell {
                let (s, t) = (BitVector::from_u64(s, ell), BitVector::from_u64(t, ell));
                for choice in CHOICES {
                    let slow = readout_distribution(code.as_ref(), &s, &t, choice).map_err(|e| e.to_string())?;
                    let fast = fast_readout_distribution(code.as_ref(), &s, &t, choice).map_err(|e| e.to_string())?;
                    worst = worst.max(total_variation(&slow, &fast));
                }
            }
        }
    }
    let mut gaps = Vec::new();
    for (i, choice) in CHOICES.into_iter().enumerate() {
        let fast = otm_experiment(desk.clone(), choice, true, DESK_TRIALS, 400 + i as u64).map_err(|e| e.to_string())?;
        gaps.push((fast.failure_rate() - slow_rates[i]).abs());
    }
    let gap = gaps.iter().copied().fold(0.0, f64::max);
    check(
        worst < 1e-12 && gap <= 0.01,
        format!("tiny max TV {worst:e}; desk failure-rate gap {gap:.4}"),
    )
}

/// Independent enumeration for non-adaptive strategies that measure qubit
/// `j` once at angle `angles[j]`, in index order.
fn brute_force_min_entropy(code: &dyn LinearCode, angles: &[f64]) -> f64 {
    let g = code.generator();
    let (ell, n, lgq) = (code.message_len(), code.blocks(), code.block_bits());
    let len = n * lgq;
    let encode = |m: u64| -> Vec<bool> {
        (0..len)
            .map(|c| (0..ell).filter(|&r| m >> r & 1 == 1 && g.get(r, c)).count() % 2 == 1)
            .collect()
    };
    let mut joint: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let w = 0.5f64.powi((2 * ell + n) as i32);
    for s in 0..1u64 << ell {
        for t in 0..1u64 << ell {
            let (cs, ct) = (encode(s), encode(t));
            for gamma in 0..1u64 << n {
                for z in 0..1u64 << len {
                    let mut p = w;
                    for j in 0..len {
                        let had = gamma >> (j / lgq) & 1 == 1;
                        let bit = if had { ct[j] } else { cs[j] };
                        let prep = if had { FRAC_PI_4 } else { 0.0 } + if bit { FRAC_PI_2 } else { 0.0 };
                        let o = (z >> j & 1) as f64;
                        let q = (angles[j] + o * FRAC_PI_2 - prep).cos().powi(2);
                        p *= if q <= 1e-14 { 0.0 } else { q };
                    }
                    if p > 0.0 {
                        *joint.entry((z, s | t << ell)).or_insert(0.0) += p;
                    }
                }
            }
        }
    }
    let mut pz: BTreeMap<u64, f64> = BTreeMap::new();
    for (&(z, _), &p) in &joint {
        *pz.entry(z).or_insert(0.0) += p;
    }
    let max = joint.iter().map(|(&(z, _), &p)| p / pz[&z]).fold(0.0, f64::max);
    -max.log2()
}

fn tiny_codes() -> Vec<(String, GenericLinearCode)> {
    let custom = |rows: &[&str], blocks, bits| {
        GenericLinearCode::with_nearest_block_decoder(BitMatrix::from_bit_rows(rows).unwrap(), blocks, bits).unwrap()
    };
    vec![
        ("identity(1)".into(), GenericLinearCode::identity(1).unwrap()),
        ("identity(2)".into(), GenericLinearCode::identity(2).unwrap()),
        ("repetition(1)".into(), GenericLinearCode::repetition_pair(1).unwrap()),
        ("repetition(2)".into(), GenericLinearCode::repetition_pair(2).unwrap()),
        ("[11]".into(), custom(&["11"], 1, 2)),
        ("[1011;0110]".into(), custom(&["1011", "0110"], 2, 2)),
    ]
}

fn random_distribution<R: Rng>(rng: &mut R) -> JointDistribution {
    let xs = rng.random_range(1..=8u64);
    let ys = rng.random_range(1..=64 / xs);
    let mut cells = Vec::new();
    for x in 0..xs {
        for y in 0..ys {
            let w: f64 = if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() };
            cells.push((x, y, w));
        }
    }
    if cells.iter().all(|c| c.2 == 0.0) {
        cells[0].2 = 1.0;
    }
    let total: f64 = cells.iter().map(|c| c.2).sum();
    JointDistribution::from_cells(3, cells.into_iter().map(|(x, y, w)| (x, y, w / total))).unwrap()
}

fn criterion_5() -> Outcome {
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    let mut smoothing_exact = true;
    for (_, code) in tiny_codes() {
        let len = code.codeword_len();
        let lgq = code.block_bits();
        let pbr = per_block_random_basis(11);
        let cases: Vec<(Box<dyn Strategy>, Vec<f64>)> = vec![
            (Box::new(measure_all(Basis::Standard)), vec![0.0; len]),
            (Box::new(measure_all(Basis::Hadamard)), vec![FRAC_PI_4; len]),
            (Box::new(breidbart()), vec![FRAC_PI_8; len]),
            (
                Box::new(pbr.clone()),
                (0..len).map(|j| pbr.basis_for_block(j / lgq).angle()).collect(),
            ),
        ];
        for (strategy, angles) in cases {
            let dist = exact_joint_distribution(&code, strategy.as_ref(), EnumerationLimits::default())
                .map_err(|e| e.to_string())?;
            let h = min_entropy(&dist, true).map_err(|e| e.to_string())?;
            worst = worst.max((h - brute_force_min_entropy(&code, &angles)).abs());
            smoothing_exact &= smooth_min_entropy(&dist, 0.0).map_err(|e| e.to_string())? == h;
            compared += 1;
        }
    }
    let mut rng = master_rng(505);
    let mut non_monotone = 0;
    for _ in 0..100 {
        let d = random_distribution(&mut rng);
        smoothing_exact &= smooth_min_entropy(&d, 0.0).unwrap() == min_entropy(&d, true).unwrap();
        let mut last = f64::NEG_INFINITY;
        for i in 0..20 {
            let h = smooth_min_entropy(&d, i as f64 * 0.045).unwrap();
            if h < last {
                non_monotone += 1;
            }
            last = h;
        }
    }
    check(
        compared >= 15 && worst < 1e-9 && smoothing_exact && non_monotone == 0,
        format!(
            "{compared} instance/strategy pairs, max |Δ| {worst:e}, eps=0 exact {smoothing_exact}, {non_monotone} monotonicity violations"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = master_rng(606);
    let mut failures = 0;
    let mut min_slack = f64::INFINITY;
    for ell in [1, 2] {
        for _ in 0..1000 {
            let r = maassen_uffink_check(&haar_random_state(ell, &mut rng)).map_err(|e| e.to_string())?;
            failures += usize::from(!r.pass);
            min_slack = min_slack.min(r.average - ell as f64 / 2.0);
        }
    }
    let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0].map(|x| Complex64::new(x, 0.0)));
    let tight = maassen_uffink_check(&zero).map_err(|e| e.to_string())?;
    check(
        failures == 0 && (tight.average - 0.5).abs() < 1e-12,
        format!("{failures}/2000 failures, min slack {min_slack:e}, |0> average {}", tight.average),
    )
}

fn random_density<R: Rng>(rng: &mut R) -> Mat2 {
    let (x, y, z): (f64, f64, f64) = loop {
        let v = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.0 * v.0 + v.1 * v.1 + v.2 * v.2 <= 1.0 {
            break v;
        }
    };
    let c = |re, im| Complex64::new(re, im);
    Mat2([[c((1.0 + z) / 2.0, 0.0), c(x / 2.0, -y / 2.0)], [c(x / 2.0, y / 2.0), c((1.0 - z) / 2.0, 0.0)]])
}

fn projector(angle: f64) -> Mat2 {
    let (c, s) = (angle.cos(), angle.sin());
    Mat2::real(c * c, c * s, c * s, s * s)
}

fn criterion_7() -> Outcome {
    let mut rng = master_rng(707);
    let codes = [
        GenericLinearCode::repetition_pair(1).unwrap(),
        GenericLinearCode::identity(2).unwrap(),
        GenericLinearCode::repetition_pair(2).unwrap(),
    ];
    let (mut bluemold, mut treefungus, mut poppy) = (0.0f64, 0.0f64, 0.0f64);
    let mut runs = 0;
    for code in &codes {
        let len = code.codeword_len();
        // Standard projectors matching the codeword of the all-ones message.
        let cw = code.encode(&BitVector::ones(code.message_len())).unwrap();
        let elements = [
            (0..len).map(|_| random_density(&mut rng)).collect::<Vec<_>>(),
            (0..len).map(|j| projector(if cw.get(j) { FRAC_PI_2 } else { 0.0 })).collect(),
            (0..len).map(|j| projector(FRAC_PI_8 + j as f64 * 0.3)).collect(),
        ];
        for factors in elements {
            let element = SeparablePovmElement::from_factors(factors).map_err(|e| e.to_string())?;
            let r = fictional_equivalence_check(code, &element, EnumerationLimits::default())
                .map_err(|e| e.to_string())?;
            bluemold = bluemold.max(r.max_deviation);
            treefungus = treefungus.max(r.subset_zero_deviation);
            poppy = poppy.max(r.coin_uniformity_deviation);
            runs += 1;
        }
    }
    check(
        bluemold < 1e-9 && treefungus < 1e-9 && poppy < 1e-9,
        format!("{runs} runs; Γ uniformity {poppy:e}, Pr[Q_A=0] {treefungus:e}, real vs fictional {bluemold:e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = master_rng(808);
    let mut violations = 0;
    for _ in 0..100 {
        let d = random_distribution(&mut rng);
        let eps = rng.random_range(0.01..0.45);
        let eps2 = rng.random_range(0.01..0.45);
        let r = chain_rule_check(&d, eps, eps2).map_err(|e| e.to_string())?;
        violations += usize::from(!r.pass);
    }
    check(violations == 0, format!("{violations}/100 violations"))
}

fn criterion_9() -> Outcome {
    let t1 = thm1_bound(&Thm1Params {
        h: vec![1.0, 1.0],
        lambda: vec![0.1, 0.1],
        basis_sizes: vec![2.0, 2.0],
        dims: vec![4.0, 4.0],
        tau: 1.0,
    })
    .map_err(|e| e.to_string())?;
    // lg 80 = 4 + lg 5; c = 2 * 16 * (lg 80)^2.
    let c = 32.0 * (4.0 + 5f64.log2()).powi(2);
    let t1_ok = (t1.bound - 0.8).abs() < 1e-9 && (t1.c - c).abs() < 1e-9 && (t1.eps - (-2.0 / c).exp()).abs() < 1e-9;

    let t2 = thm2_bound(&Thm2Params {
        ell: 352.0,
        lgq: 44.0,
        alpha: 352.0 / 2332.0,
        lambda: 0.01,
        tau0: 0.01,
        delta: 0.01,
    })
    .map_err(|e| e.to_string())?;
    let t2_ok = (t2.bound - -1492.4690100668424).abs() < 1e-9 && (t2.eps - 0.9984012793176064).abs() < 1e-9 && t2.vacuous;

    let half = thm2_bound(&Thm2Params {
        ell: 1e6,
        lgq: 100.0,
        alpha: 0.5,
        lambda: 1e-3,
        tau0: 1e-4,
        delta: 1e-3,
    })
    .map_err(|e| e.to_string())?;
    let half_ok = (0.49..=0.50).contains(&half.per_bit);
    check(
        t1_ok && t2_ok && half_ok,
        format!(
            "thm1 bound {} c {:.4}; thm2 desk {:.6} (vacuous {}); alpha=1/2 per bit {:.5}",
            t1.bound, t1.c, t2.bound, t2.vacuous, half.per_bit
        ),
    )
}

fn criterion_10() -> Outcome {
    let params = CodeParams {
        k: 1,
        pe: 0.5,
        eps: 0.1,
        delta: 0.5,
        theta: 0.2,
        n: 2,
        c: 8,
        c0: 4,
    };
    let g0 = BitMatrix::from_bit_rows(&["10001000", "01000100", "00100010", "00010001"]).unwrap();
    let code = ConcatenatedCode::from_parts(params, g0, systematic_inner(4, 8)).map_err(|e| e.to_string())?;
    let s = undetected_error_experiment(&code, 100_000, 1010).map_err(|e| e.to_string())?;
    let rel = (s.rate() - s.expected_rate).abs() / s.expected_rate;
    check(
        rel <= 0.2,
        format!("undetected {:.5} vs (q0-1)/(q-1) = {:.5}, relative gap {rel:.3}", s.rate(), s.expected_rate),
    )
}

fn main() {
    let start = Instant::now();
    let desk = desk_code();
    let mut slow_rates = Vec::new();
    let mut results: Vec<(&str, std::thread::Result<Outcome>)> = Vec::new();
    results.push(("honest correctness", catch_unwind(AssertUnwindSafe(|| criterion_1(&desk, &mut slow_rates)))));
    results.push(("rate bound", catch_unwind(criterion_2)));
    results.push(("channel equivalence", catch_unwind(|| criterion_3(&desk))));
    results.push((
        "simulator equivalence",
        catch_unwind(AssertUnwindSafe(|| {
            if slow_rates.len() != 2 {
                return Err("criterion 1 did not produce failure rates".into());
            }
            criterion_4(&desk, &slow_rates)
        })),
    ));
    results.push(("min-entropy engine", catch_unwind(criterion_5)));
    results.push(("uncertainty relation", catch_unwind(criterion_6)));
    results.push(("fictional adversary identities", catch_unwind(criterion_7)));
    results.push(("chain rule", catch_unwind(criterion_8)));
    results.push(("bound calculators", catch_unwind(criterion_9)));
    results.push(("undetected-error soundness", catch_unwind(criterion_10)));

    let mut failed = 0;
    for (i, (name, r)) in results.into_iter().enumerate() {
        let (status, detail) = match r {
            Ok(Ok(d)) => ("PASS", d),
            Ok(Err(d)) => ("FAIL", d),
            Err(_) => ("FAIL", "panicked".to_string()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("[{status}] criterion {:>2} {name}: {detail}", i + 1);
    }
    println!("acceptance: {} of 10 passed in {:.1}s", 10 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
