//! Brute-force cross-checks run by `rspv selftest`.
//!
//! The Hadamard check builds the full padded register `|w₀⟩, |w₁⟩` as a dense
//! vector, applies a fast Walsh-Hadamard transform and compares the outcome
//! distribution with the closed-form sampler law.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::adversary::StrategySpec;
use crate::bits::BitString;
use crate::gadget::{hadamard_law, make_gadget, KeyPair, PhasePair, Z8};
use crate::ntcf::MockNtcf;
use crate::oracle::RandomOracle;
use crate::protocol::{run_pre_rspv, Branch, Flag, SessionOptions, SessionParams};
use crate::seed::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub passed: bool,
    pub detail: String,
}

fn fwht(v: &mut [Complex64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    let scale = (v.len() as f64).sqrt().recip();
    v.iter_mut().for_each(|x| *x *= scale);
}

/// Dense outcome distribution of measuring `(ω^a|w₀⟩ + ω^b|w₁⟩)/√2` in the
/// Hadamard basis, indexed by `d` read as an integer.
pub fn dense_hadamard_distribution(w0: &BitString, w1: &BitString, phases: PhasePair) -> Vec<f64> {
    let m = w0.len();
    let mut v = vec![Complex64::new(0.0, 0.0); 1 << m];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    v[w0.to_u64() as usize] += phases.theta0.root() * s;
    v[w1.to_u64() as usize] += phases.theta1.root() * s;
    fwht(&mut v);
    v.iter().map(|a| a.norm_sqr()).collect()
}

/// Total variation between the sampler law and the dense transform over every
/// key pair of length `1..=max_len`, pad length `1..=max_kappa` and residual
/// phase.
pub fn hadamard_exactness(max_len: usize, max_kappa: usize, seed: Seed) -> CheckResult {
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for n in 1..=max_len {
        for kappa in 1..=max_kappa {
            let oracle = RandomOracle::new(seed.derive("selftest-oracle", (n * 64 + kappa) as u64));
            let pad = BitString::random(&mut seed.derive("selftest-pad", (n * 64 + kappa) as u64).rng(), kappa);
            for a in 0..(1u64 << n) {
                for b in (a + 1)..(1u64 << n) {
                    let keys = KeyPair::new(BitString::from_u64(a, n), BitString::from_u64(b, n)).expect("distinct");
                    for k in 0..8 {
                        let phases = PhasePair::new(Z8::ZERO, Z8::new(k));
                        let law = hadamard_law(&make_gadget(keys.clone(), Some(phases)), &pad, &oracle)
                            .expect("pad within cut-off");
                        let dense = dense_hadamard_distribution(&law.words[0], &law.words[1], phases);
                        let m = law.len();
                        let tv: f64 = dense
                            .iter()
                            .enumerate()
                            .map(|(i, p)| (p - law.prob(&BitString::from_u64(i as u64, m))).abs())
                            .sum::<f64>()
                            / 2.0;
                        worst = worst.max(tv);
                        cases += 1;
                    }
                }
            }
        }
    }
    CheckResult {
        name: "hadamard_sampler_exactness".into(),
        cases,
        passed: worst < 1e-12,
        detail: format!("max total variation {worst:.3e}"),
    }
}

/// Every branch of a small honest session passes.
pub fn honest_branches(sessions_per_branch: usize, seed: Seed) -> CheckResult {
    let params = SessionParams::new(3, 32).expect("valid params");
    let branches = [
        Branch::EarlyStdB,
        Branch::StdB,
        Branch::CoPh,
        Branch::InPh,
        Branch::Bn,
        Branch::Output,
    ];
    let mut failures = Vec::new();
    let mut cases = 0;
    for (bi, &branch) in branches.iter().enumerate() {
        for i in 0..sessions_per_branch {
            let mut s = StrategySpec::Honest.build(params.l);
            let options = SessionOptions { record: false, force: Some(branch) };
            let rec = run_pre_rspv(&MockNtcf, params, &mut s, seed.derive("selftest-session", (bi * 100_000 + i) as u64), options);
            cases += 1;
            let ok = rec.outcome.flag == Flag::Pass
                && rec.outcome.outputs.as_ref().is_none_or(|o| (o.state_fidelity() - 1.0).abs() < 1e-12);
            if !ok {
                failures.push(format!("{branch:?}#{i}"));
            }
        }
    }
    CheckResult {
        name: "honest_branches".into(),
        cases,
        passed: failures.is_empty(),
        detail: if failures.is_empty() { "all passed".into() } else { failures.join(",") },
    }
}

pub fn run_all(seed: Seed) -> Vec<CheckResult> {
    vec![hadamard_exactness(4, 4, seed), honest_branches(20, seed)]
}
