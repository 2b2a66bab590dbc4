mod common;

use common::{exact_hadamard_law, padded, parity0, to_prob, ZOmega};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rspv_core::bits::BitString;
use rspv_core::gadget::{hadamard_law, make_gadget, KeyPair, PhasePair, Z8};
use rspv_core::oracle::RandomOracle;
use rspv_core::seed::Seed;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn zomega_arithmetic() {
    let w = ZOmega::omega_pow(1);
    assert_eq!(w.mul(w).mul(w).mul(w), ZOmega::omega_pow(4));
    assert_eq!(ZOmega::omega_pow(4), ZOmega::omega_pow(0).neg());
    assert_eq!(w.mul(w.conj()), ZOmega::omega_pow(0));
    assert!((parity0(1) - (std::f64::consts::PI / 8.0).cos().powi(2)).abs() < 1e-15);
    assert_eq!(parity0(4), 0.0);
    assert_eq!(parity0(0), 1.0);
}

#[test]
fn sampler_law_matches_exact_enumeration() {
    for n in 1..=3 {
        for kappa in 1..=3 {
            let oracle = RandomOracle::new(Seed::from_u64((n * 10 + kappa) as u64));
            let pad = BitString::from_u64(0b101, kappa);
            for x0 in 0..(1u64 << n) {
                for x1 in 0..(1u64 << n) {
                    if x0 == x1 {
                        continue;
                    }
                    let keys = KeyPair::new(BitString::from_u64(x0, n), BitString::from_u64(x1, n)).unwrap();
                    let w0 = padded(&oracle, &keys.x0, &pad);
                    let w1 = padded(&oracle, &keys.x1, &pad);
                    for a in 0..8u8 {
                        for b in 0..8u8 {
                            let g = make_gadget(keys.clone(), Some(PhasePair::new(Z8::new(a), Z8::new(b))));
                            let law = hadamard_law(&g, &pad, &oracle).unwrap();
                            let exact = exact_hadamard_law(&w0, &w1, a, b);
                            let m = n + kappa;
                            let tv: f64 = exact
                                .iter()
                                .enumerate()
                                .map(|(d, e)| (to_prob(*e, m) - law.prob(&BitString::from_u64(d as u64, m))).abs())
                                .sum::<f64>()
                                / 2.0;
                            assert!(tv < 1e-12, "n={n} kappa={kappa} a={a} b={b} tv={tv}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn sampler_frequencies_fit_the_exact_law() {
    let oracle = RandomOracle::new(Seed::from_u64(77));
    let (n, kappa) = (2, 2);
    let pad = BitString::from_u64(0b11, kappa);
    let keys = KeyPair::new(BitString::from_u64(1, n), BitString::from_u64(2, n)).unwrap();
    let phases = PhasePair::new(Z8::new(0), Z8::new(3));
    let law = hadamard_law(&make_gadget(keys.clone(), Some(phases)), &pad, &oracle).unwrap();
    let exact = exact_hadamard_law(&padded(&oracle, &keys.x0, &pad), &padded(&oracle, &keys.x1, &pad), 0, 3);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let draws = 200_000;
    let m = n + kappa;
    let mut counts = vec![0usize; 1 << m];
    for _ in 0..draws {
        counts[law.sample(&mut rng).to_u64() as usize] += 1;
    }
    let mut chi2 = 0.0;
    let mut cells = 0;
    for (d, e) in exact.iter().enumerate() {
        let expect = to_prob(*e, m) * draws as f64;
        if expect == 0.0 {
            assert_eq!(counts[d], 0, "impossible outcome {d} drawn");
            continue;
        }
        chi2 += (counts[d] as f64 - expect).powi(2) / expect;
        cells += 1;
    }
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2={chi2} p={p}");
}

#[test]
fn zero_suffix_event_has_probability_two_to_minus_kappa() {
    // d uniform on an affine class; the suffix of w₀ ⊕ w₁ is nonzero with
    // overwhelming probability, which makes the all-zero suffix a 2^{-κ} event.
    let oracle = RandomOracle::new(Seed::from_u64(8));
    let (n, kappa) = (3, 3);
    let pad = BitString::from_u64(0b010, kappa);
    let keys = KeyPair::new(BitString::from_u64(3, n), BitString::from_u64(6, n)).unwrap();
    let w0 = padded(&oracle, &keys.x0, &pad);
    let w1 = padded(&oracle, &keys.x1, &pad);
    let m = n + kappa;
    let exact = exact_hadamard_law(&w0, &w1, 0, 0);
    let zero_suffix: f64 = exact
        .iter()
        .enumerate()
        .filter(|(d, _)| BitString::from_u64(*d as u64, m).suffix(kappa).is_all_zero())
        .map(|(_, e)| to_prob(*e, m))
        .sum();
    let diff = w0.xor(&w1);
    if !diff.suffix(kappa).is_all_zero() {
        assert!((zero_suffix - 2f64.powi(-(kappa as i32))).abs() < 1e-12);
    } else {
        assert!(zero_suffix <= 2f64.powi(1 - kappa as i32));
    }
}
