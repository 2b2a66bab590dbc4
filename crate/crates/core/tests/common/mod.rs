#![allow(dead_code)]

use rspv_core::adversary::StrategySpec;
use rspv_core::bits::BitString;
use rspv_core::ntcf::MockNtcf;
use rspv_core::oracle::Oracle;
use rspv_core::protocol::{run_pre_rspv, Branch, SessionOptions, SessionOutcome, SessionParams};
use rspv_core::seed::Seed;

/// An element of ℤ[ω], ω = e^{iπ/4}, in the basis 1, ω, ω², ω³ (ω⁴ = −1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZOmega(pub [i64; 4]);

impl ZOmega {
    pub fn omega_pow(k: u8) -> Self {
        let k = (k % 8) as usize;
        let mut c = [0; 4];
        if k < 4 {
            c[k] = 1;
        } else {
            c[k - 4] = -1;
        }
        ZOmega(c)
    }

    pub fn add(self, o: Self) -> Self {
        ZOmega(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }

    pub fn neg(self) -> Self {
        ZOmega(self.0.map(|c| -c))
    }

    pub fn mul(self, o: Self) -> Self {
        let mut c = [0i64; 4];
        for i in 0..4 {
            for j in 0..4 {
                let v = self.0[i] * o.0[j];
                if i + j < 4 {
                    c[i + j] += v;
                } else {
                    c[i + j - 4] -= v;
                }
            }
        }
        ZOmega(c)
    }

    pub fn conj(self) -> Self {
        let c = self.0;
        ZOmega([c[0], -c[3], -c[2], -c[1]])
    }

    /// `|z|² = a + b√2` with integer `a, b`.
    pub fn norm_sqr(self) -> (i64, i64) {
        let p = self.mul(self.conj()).0;
        assert_eq!(p[2], 0);
        assert_eq!(p[1], -p[3]);
        (p[0], p[1])
    }
}

/// `w = x || H(pad || x)` computed straight from the oracle.
pub fn padded(oracle: &dyn Oracle, key: &BitString, pad: &BitString) -> BitString {
    let tail = oracle.query(&pad.concat(key), pad.len()).unwrap();
    key.concat(&tail)
}

/// Exact law of `d` for `(ω^a|w₀⟩ + ω^b|w₁⟩)/√2` measured in the Hadamard
/// basis: entry `d` is `(A, B)` with `Pr[d] = (A + B√2) / 2^{m+1}`.
pub fn exact_hadamard_law(w0: &BitString, w1: &BitString, a: u8, b: u8) -> Vec<(i64, i64)> {
    let m = w0.len();
    (0..(1u64 << m))
        .map(|d| {
            let d = BitString::from_u64(d, m);
            let s0 = if d.dot(w0) { ZOmega::omega_pow(a).neg() } else { ZOmega::omega_pow(a) };
            let s1 = if d.dot(w1) { ZOmega::omega_pow(b).neg() } else { ZOmega::omega_pow(b) };
            s0.add(s1).norm_sqr()
        })
        .collect()
}

pub fn to_prob((a, b): (i64, i64), m: usize) -> f64 {
    (a as f64 + b as f64 * std::f64::consts::SQRT_2) / 2f64.powi(m as i32 + 1)
}

pub fn session(spec: &StrategySpec, l: usize, kappa: usize, seed: Seed, force: Option<Branch>) -> SessionOutcome {
    let params = SessionParams::new(l, kappa).unwrap();
    let mut s = spec.build(l);
    run_pre_rspv(&MockNtcf, params, &mut s, seed, SessionOptions { record: false, force }).outcome
}

/// `Pr[parity 0]` of an honest-form gadget with residual relative phase `k`,
/// from the amplitudes `(1, ω^k)/√2` directly.
pub fn parity0(k: u8) -> f64 {
    let (a, b) = ZOmega::omega_pow(0).add(ZOmega::omega_pow(k)).norm_sqr();
    (a as f64 + b as f64 * std::f64::consts::SQRT_2) / 4.0
}
