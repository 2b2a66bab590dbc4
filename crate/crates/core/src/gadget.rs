//! Exact two-branch gadget states `a₀|x₀⟩ + a₁|x₁⟩` with ℤ₈ phases.
//!
//! Honest execution never leaves this family, so every operation here is
//! linear in the key length: phase decoration through lookup tables,
//! de-phasing, standard-basis and oracle-padded Hadamard-basis sampling,
//! combination of two gadgets into one, conjugation and decoding.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};

use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::oracle::{Oracle, OracleError};
use crate::tables::{decrypt_row, LookupTable, Plaintext, TableError};

/// Normalization tolerance for amplitude pairs.
pub const NORM_TOLERANCE: f64 = 1e-12;
/// Tolerance when recognizing an honest-form amplitude ratio.
pub const DECODE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum GadgetError {
    #[error("key pair has equal keys")]
    EqualKeys,
    #[error("table does not decrypt for branch {branch}: {source}")]
    TableMismatch { branch: u8, source: TableError },
    #[error("table yielded a non-phase plaintext")]
    WrongPlaintext,
    #[error("combine outcome does not split the joint state into two branches")]
    NotTwoBranch,
    #[error("gadget {index} keys do not match the revealed pair")]
    KeyMismatch { index: usize },
    #[error("gadget {index} is not in honest form (amplitudes {amp0}, {amp1})")]
    NotHonestForm {
        index: usize,
        amp0: Complex64,
        amp1: Complex64,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// An element of ℤ₈; phase `k` stands for `e^{ikπ/4}`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Z8(u8);

impl Z8 {
    pub const ZERO: Z8 = Z8(0);

    pub fn new(value: u8) -> Self {
        Z8(value % 8)
    }

    pub fn from_i64(value: i64) -> Self {
        Z8(value.rem_euclid(8) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Z8((rng.next_u32() & 7) as u8)
    }

    /// `e^{ikπ/4}`, with exact table values so that conjugation and
    /// negation commute bit-for-bit.
    pub fn root(self) -> Complex64 {
        const S: f64 = FRAC_1_SQRT_2;
        const ROOTS: [(f64, f64); 8] = [
            (1.0, 0.0),
            (S, S),
            (0.0, 1.0),
            (-S, S),
            (-1.0, 0.0),
            (-S, -S),
            (0.0, -1.0),
            (S, -S),
        ];
        let (re, im) = ROOTS[self.0 as usize];
        Complex64::new(re, im)
    }
}

impl TryFrom<u8> for Z8 {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        if value < 8 {
            Ok(Z8(value))
        } else {
            Err(format!("phase {value} outside 0..8"))
        }
    }
}

impl From<Z8> for u8 {
    fn from(z: Z8) -> u8 {
        z.0
    }
}

impl Add for Z8 {
    type Output = Z8;
    fn add(self, rhs: Z8) -> Z8 {
        Z8((self.0 + rhs.0) % 8)
    }
}

impl AddAssign for Z8 {
    fn add_assign(&mut self, rhs: Z8) {
        *self = *self + rhs;
    }
}

impl Sub for Z8 {
    type Output = Z8;
    fn sub(self, rhs: Z8) -> Z8 {
        Z8((self.0 + 8 - rhs.0) % 8)
    }
}

impl Neg for Z8 {
    type Output = Z8;
    fn neg(self) -> Z8 {
        Z8((8 - self.0) % 8)
    }
}

impl fmt::Debug for Z8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Z8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A pair of distinct keys `(x₀, x₁)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyPair {
    pub x0: BitString,
    pub x1: BitString,
}

impl KeyPair {
    pub fn new(x0: BitString, x1: BitString) -> Result<Self, GadgetError> {
        if x0 == x1 {
            return Err(GadgetError::EqualKeys);
        }
        Ok(Self { x0, x1 })
    }

    pub fn key(&self, bit: bool) -> &BitString {
        if bit {
            &self.x1
        } else {
            &self.x0
        }
    }

    /// Which subscript `key` carries, if any.
    pub fn bit_of(&self, key: &BitString) -> Option<bool> {
        if key == &self.x0 {
            Some(false)
        } else if key == &self.x1 {
            Some(true)
        } else {
            None
        }
    }

    pub fn contains(&self, key: &BitString) -> bool {
        self.bit_of(key).is_some()
    }

    pub fn key_len(&self) -> usize {
        self.x0.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhasePair {
    pub theta0: Z8,
    pub theta1: Z8,
}

impl PhasePair {
    pub fn new(theta0: Z8, theta1: Z8) -> Self {
        Self { theta0, theta1 }
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Self::new(Z8::random(rng), Z8::random(rng))
    }

    pub fn get(&self, bit: bool) -> Z8 {
        if bit {
            self.theta1
        } else {
            self.theta0
        }
    }

    /// `θ₁ − θ₀`.
    pub fn relative(&self) -> Z8 {
        self.theta1 - self.theta0
    }
}

/// `amp0|x₀⟩ + amp1|x₁⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gadget {
    pub keys: KeyPair,
    pub amps: [Complex64; 2],
}

impl Gadget {
    pub fn norm_sqr(&self) -> f64 {
        self.amps[0].norm_sqr() + self.amps[1].norm_sqr()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }

    /// `amp1 / amp0` expressed as a ℤ₈ phase, when the gadget is in honest form.
    pub fn relative_phase(&self) -> Option<Z8> {
        honest_relative_phase(self.amps)
    }

    /// Multiplies branch `b` by `e^{iθ_b π/4}`.
    pub fn add_phases(&mut self, phases: PhasePair) {
        self.amps[0] *= phases.theta0.root();
        self.amps[1] *= phases.theta1.root();
    }
}

fn honest_relative_phase(amps: [Complex64; 2]) -> Option<Z8> {
    let half = 0.5;
    if (amps[0].norm_sqr() - half).abs() > DECODE_TOLERANCE
        || (amps[1].norm_sqr() - half).abs() > DECODE_TOLERANCE
    {
        return None;
    }
    let ratio = amps[1] / amps[0];
    let steps = ratio.arg() / FRAC_PI_4;
    let k = steps.round();
    if (steps - k).abs() > DECODE_TOLERANCE {
        return None;
    }
    Some(Z8::from_i64(k as i64))
}

/// `gadget(K, Θ)`, or `gadget(K)` when `phases` is `None`.
pub fn make_gadget(keys: KeyPair, phases: Option<PhasePair>) -> Gadget {
    let phases = phases.unwrap_or_default();
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    Gadget {
        keys,
        amps: [h * phases.theta0.root(), h * phases.theta1.root()],
    }
}

/// Decrypts `helper_key || x_b` for each branch and multiplies branch `b`
/// by the recovered phase. The phase register is uncomputed afterwards.
pub fn apply_phase_table<O: Oracle + ?Sized>(
    gadget: &Gadget,
    table: &LookupTable,
    helper_key: &BitString,
    oracle: &O,
) -> Result<Gadget, GadgetError> {
    let phases = decrypt_phase_pair(&gadget.keys, table, helper_key, oracle)?;
    let mut out = gadget.clone();
    out.add_phases(phases);
    Ok(out)
}

/// The phase each branch of `keys` decrypts to under `helper_key`.
pub fn decrypt_phase_pair<O: Oracle + ?Sized>(
    keys: &KeyPair,
    table: &LookupTable,
    helper_key: &BitString,
    oracle: &O,
) -> Result<PhasePair, GadgetError> {
    let mut out = [Z8::ZERO; 2];
    for (branch, slot) in out.iter_mut().enumerate() {
        let key = helper_key.concat(keys.key(branch == 1));
        match decrypt_row(table, &key, oracle) {
            Ok((_, Plaintext::Phase(p))) => *slot = p,
            Ok(_) => return Err(GadgetError::WrongPlaintext),
            Err(source) => {
                return Err(GadgetError::TableMismatch {
                    branch: branch as u8,
                    source,
                })
            }
        }
    }
    Ok(PhasePair::new(out[0], out[1]))
}

/// Multiplies the `x₁` branch by `e^{-i·revealed·π/4}`.
pub fn dephase(gadget: &Gadget, revealed: Z8) -> Gadget {
    let mut out = gadget.clone();
    out.amps[1] *= (-revealed).root();
    out
}

/// Standard-basis measurement; consumes the gadget.
pub fn std_sample<R: RngCore + ?Sized>(gadget: Gadget, rng: &mut R) -> (bool, BitString) {
    let p1 = gadget.amps[1].norm_sqr() / gadget.norm_sqr();
    let bit = rng.gen::<f64>() < p1;
    let Gadget { keys, .. } = gadget;
    let key = if bit { keys.x1 } else { keys.x0 };
    (bit, key)
}

/// Exact outcome law of the oracle-padded Hadamard measurement.
///
/// With `w_b = x_b || H(pad || x_b)` the outcome `d` has probability
/// `Pr[c]/2^{n-1}` where `c = d·(w₀ ⊕ w₁)` and
/// `Pr[c] = |a₀ + (−1)^c a₁|² / 2`. A law can also be fully mixed (uniform
/// over all `2^n` outcomes), which is what a branch-decohered register gives.
#[derive(Debug, Clone, PartialEq)]
pub struct HadamardLaw {
    pub words: [BitString; 2],
    /// `Pr[c = 0]`, `Pr[c = 1]`.
    pub parity: [f64; 2],
}

impl HadamardLaw {
    pub fn len(&self) -> usize {
        self.words[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn difference(&self) -> BitString {
        self.words[0].xor(&self.words[1])
    }

    /// Exact probability of outcome `d`.
    pub fn prob(&self, d: &BitString) -> f64 {
        let c = d.dot(&self.difference());
        let class_size = 2f64.powi(self.len() as i32 - 1);
        self.parity[usize::from(c)] / class_size
    }

    /// Draws the parity class, then a uniform member of that affine class.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> BitString {
        let diff = self.difference();
        let parity = rng.gen::<f64>() >= self.parity[0];
        let mut d = BitString::random(rng, self.len());
        if d.dot(&diff) != parity {
            let pivot = diff.iter().position(|b| b).expect("w0 != w1");
            d.flip(pivot);
        }
        d
    }
}

/// `w = x || H(pad || x, |pad|)`.
pub fn padded_word<O: Oracle + ?Sized>(
    key: &BitString,
    pad: &BitString,
    oracle: &O,
) -> Result<BitString, OracleError> {
    let tail = oracle.query(&pad.concat(key), pad.len())?;
    Ok(key.concat(&tail))
}

pub fn parity_law(amps: [Complex64; 2]) -> [f64; 2] {
    let norm = amps[0].norm_sqr() + amps[1].norm_sqr();
    let p0 = (amps[0] + amps[1]).norm_sqr() / (2.0 * norm);
    [p0, 1.0 - p0]
}

pub fn hadamard_law<O: Oracle + ?Sized>(
    gadget: &Gadget,
    pad: &BitString,
    oracle: &O,
) -> Result<HadamardLaw, GadgetError> {
    let w0 = padded_word(&gadget.keys.x0, pad, oracle)?;
    let w1 = padded_word(&gadget.keys.x1, pad, oracle)?;
    assert_ne!(w0, w1, "distinct keys give distinct padded words");
    Ok(HadamardLaw {
        words: [w0, w1],
        parity: parity_law(gadget.amps),
    })
}

/// Hadamard-basis measurement of the padded gadget; consumes the gadget.
pub fn hadamard_sample<O: Oracle + ?Sized, R: RngCore + ?Sized>(
    gadget: Gadget,
    pad: &BitString,
    oracle: &O,
    rng: &mut R,
) -> Result<BitString, GadgetError> {
    Ok(hadamard_law(&gadget, pad, oracle)?.sample(rng))
}

/// Decrypts a combine table on the joint state of two gadgets, measures the
/// result register and returns it with the collapsed combined gadget.
///
/// The table is keyed on `prefix(x_a) || x_b` where the prefix has the
/// length of `b`'s keys (the first component of an accumulated key).
pub fn combine_step<O: Oracle + ?Sized, R: RngCore + ?Sized>(
    a: &Gadget,
    b: &Gadget,
    table: &LookupTable,
    oracle: &O,
    rng: &mut R,
) -> Result<(BitString, Gadget), GadgetError> {
    let prefix_len = b.keys.key_len();
    let mut joint = Vec::with_capacity(4);
    for ba in [false, true] {
        for bb in [false, true] {
            let key = a.keys.key(ba).prefix(prefix_len).concat(b.keys.key(bb));
            let r = match decrypt_row(table, &key, oracle) {
                Ok((_, Plaintext::Bits(r))) => r,
                Ok(_) => return Err(GadgetError::WrongPlaintext),
                Err(source) => {
                    return Err(GadgetError::TableMismatch {
                        branch: u8::from(ba) * 2 + u8::from(bb),
                        source,
                    })
                }
            };
            joint.push((ba, bb, r, a.amps[usize::from(ba)] * b.amps[usize::from(bb)]));
        }
    }
    let total: f64 = joint.iter().map(|j| j.3.norm_sqr()).sum();
    let mut u = rng.gen::<f64>() * total;
    let mut chosen = joint.len() - 1;
    for (i, j) in joint.iter().enumerate() {
        u -= j.3.norm_sqr();
        if u < 0.0 {
            chosen = i;
            break;
        }
    }
    let r = joint[chosen].2.clone();
    let survivors: Vec<_> = joint.iter().filter(|j| j.2 == r).collect();
    if survivors.len() != 2 || survivors[0].0 == survivors[1].0 {
        return Err(GadgetError::NotTwoBranch);
    }
    let weight: f64 = survivors.iter().map(|j| j.3.norm_sqr()).sum::<f64>().sqrt();
    let key_of = |j: &(bool, bool, BitString, Complex64)| a.keys.key(j.0).concat(b.keys.key(j.1));
    let combined = Gadget {
        keys: KeyPair::new(key_of(survivors[0]), key_of(survivors[1]))?,
        amps: [survivors[0].3 / weight, survivors[1].3 / weight],
    };
    Ok((r, combined))
}

/// `|+_θ₁⟩ ⊗ |+_θ₂⟩ ⊗ ⋯` described by its phases.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlusStateVector {
    pub thetas: Vec<Z8>,
}

impl PlusStateVector {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Applying `X` to `|+_{−θ}⟩` gives `|+_θ⟩` up to a global phase.
    pub fn x_corrected(&self) -> PlusStateVector {
        PlusStateVector {
            thetas: self.thetas.iter().map(|t| -*t).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedOutput {
    pub state: PlusStateVector,
    /// Per-gadget global phase `amp0·√2`.
    pub global_phases: Vec<Complex64>,
}

/// Reads each gadget as `|+_θ⟩` with `θ = θ₁ − θ₀` (key `x_b` ↦ qubit `b`).
pub fn decode_output(
    gadgets: &[Gadget],
    revealed: &[KeyPair],
) -> Result<DecodedOutput, GadgetError> {
    if gadgets.len() != revealed.len() {
        return Err(GadgetError::LengthMismatch {
            left: gadgets.len(),
            right: revealed.len(),
        });
    }
    let mut thetas = Vec::with_capacity(gadgets.len());
    let mut global_phases = Vec::with_capacity(gadgets.len());
    for (index, (g, k)) in gadgets.iter().zip(revealed).enumerate() {
        if &g.keys != k {
            return Err(GadgetError::KeyMismatch { index });
        }
        let theta = g.relative_phase().ok_or(GadgetError::NotHonestForm {
            index,
            amp0: g.amps[0],
            amp1: g.amps[1],
        })?;
        thetas.push(theta);
        global_phases.push(g.amps[0] * std::f64::consts::SQRT_2);
    }
    Ok(DecodedOutput {
        state: PlusStateVector { thetas },
        global_phases,
    })
}

/// Complex-conjugates both amplitudes.
pub fn conjugate(gadget: &Gadget) -> Gadget {
    Gadget {
        keys: gadget.keys.clone(),
        amps: [gadget.amps[0].conj(), gadget.amps[1].conj()],
    }
}

/// `∏ |⟨+_θᵢ|+_θ′ᵢ⟩|² = ∏ cos²((θᵢ − θ′ᵢ)π/8)`.
pub fn fidelity_ideal(decoded: &PlusStateVector, client: &[Z8]) -> Result<f64, GadgetError> {
    if decoded.len() != client.len() {
        return Err(GadgetError::LengthMismatch {
            left: decoded.len(),
            right: client.len(),
        });
    }
    Ok(decoded
        .thetas
        .iter()
        .zip(client)
        .map(|(a, b)| plus_overlap((*a - *b).value()))
        .product())
}

/// `|⟨+_0|+_k⟩|² = cos²(kπ/8)`, exact at the orthogonal and identical points.
pub fn plus_overlap(k: u8) -> f64 {
    match k % 8 {
        0 => 1.0,
        4 => 0.0,
        k => (f64::from(k) * std::f64::consts::PI / 8.0).cos().powi(2),
    }
}

/// `|⟨+_θ| (a₀|0⟩ + a₁|1⟩)⟩|²` for a gadget read as a qubit.
pub fn qubit_fidelity(amps: [Complex64; 2], theta: Z8) -> f64 {
    let norm = amps[0].norm_sqr() + amps[1].norm_sqr();
    (amps[0] + (-theta).root() * amps[1]).norm_sqr() / (2.0 * norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::RandomOracle;
    use crate::seed::Seed;
    use crate::tables::{make_combine_table, make_phase_table};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn keys(rng: &mut ChaCha20Rng, len: usize) -> KeyPair {
        loop {
            if let Ok(k) = KeyPair::new(BitString::random(rng, len), BitString::random(rng, len)) {
                return k;
            }
        }
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn z8_arithmetic() {
        assert_eq!(Z8::new(7) + Z8::new(3), Z8::new(2));
        assert_eq!(Z8::new(1) - Z8::new(3), Z8::new(6));
        assert_eq!(-Z8::new(3), Z8::new(5));
        assert_eq!(-Z8::ZERO, Z8::ZERO);
        assert!(serde_json::from_str::<Z8>("8").is_err());
        for k in 0..8u8 {
            let z = Z8::new(k);
            let expected = Complex64::from_polar(1.0, f64::from(k) * FRAC_PI_4);
            assert!(close(z.root(), expected));
            assert_eq!(z.root().conj(), (-z).root());
        }
    }

    #[test]
    fn make_gadget_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let k = keys(&mut rng, 8);
        let h = FRAC_1_SQRT_2;
        let g = make_gadget(k.clone(), None);
        assert_eq!(g.amps, [Complex64::new(h, 0.0); 2]);
        let g = make_gadget(k.clone(), Some(PhasePair::new(Z8::new(0), Z8::new(4))));
        assert!(close(g.amps[1], Complex64::new(-h, 0.0)));
        let g = make_gadget(k, Some(PhasePair::new(Z8::new(1), Z8::new(3))));
        assert!(close(g.amps[1] / g.amps[0], Complex64::i()));
        assert!(g.is_normalized());
        assert_eq!(g.relative_phase(), Some(Z8::new(2)));
    }

    #[test]
    fn phase_tables_decorate_and_compose() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let h = RandomOracle::new(Seed::from_u64(2));
        let helper = keys(&mut rng, 16);
        let k = keys(&mut rng, 16);
        let g = make_gadget(k.clone(), None);

        let zero = make_phase_table(&helper, &k, PhasePair::default(), 16, &h, &mut rng).unwrap();
        assert_eq!(apply_phase_table(&g, &zero, &helper.x0, &h).unwrap(), g);

        let theta = PhasePair::new(Z8::new(2), Z8::new(5));
        let t1 = make_phase_table(&helper, &k, theta, 16, &h, &mut rng).unwrap();
        let g1 = apply_phase_table(&g, &t1, &helper.x1, &h).unwrap();
        let expected = make_gadget(k.clone(), Some(theta));
        assert!(close(g1.amps[0], expected.amps[0]) && close(g1.amps[1], expected.amps[1]));

        let theta2 = PhasePair::new(Z8::new(7), Z8::new(6));
        let t2 = make_phase_table(&helper, &k, theta2, 16, &h, &mut rng).unwrap();
        let g2 = apply_phase_table(&g1, &t2, &helper.x0, &h).unwrap();
        let sum = make_gadget(k.clone(), Some(PhasePair::new(Z8::new(1), Z8::new(3))));
        assert!(close(g2.amps[0], sum.amps[0]) && close(g2.amps[1], sum.amps[1]));

        let stranger = keys(&mut rng, 16);
        assert!(matches!(
            apply_phase_table(&g, &t1, &stranger.x0, &h),
            Err(GadgetError::TableMismatch { .. })
        ));
    }

    #[test]
    fn dephase_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let k = keys(&mut rng, 8);
        let g = make_gadget(k.clone(), Some(PhasePair::new(Z8::new(3), Z8::new(6))));
        assert_eq!(dephase(&g, Z8::new(3)).relative_phase(), Some(Z8::ZERO));
        let g = make_gadget(k, Some(PhasePair::new(Z8::new(0), Z8::new(5))));
        let d = dephase(&g, Z8::new(1));
        assert_eq!(d.relative_phase(), Some(Z8::new(4)));
        assert!(close(d.amps[0], -d.amps[1]));
        assert_eq!(dephase(&g, Z8::ZERO), g);
    }

    #[test]
    fn std_sample_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let k = keys(&mut rng, 8);
        let n = 100_000;
        let mut ones = 0usize;
        for _ in 0..n {
            let (b, key) = std_sample(make_gadget(k.clone(), None), &mut rng);
            assert!(k.contains(&key));
            assert_eq!(k.key(b), &key);
            ones += usize::from(b);
        }
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((ones as f64 - n as f64 / 2.0).abs() < 4.0 * sigma);
        let pinned = Gadget {
            keys: k.clone(),
            amps: [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        };
        for _ in 0..100 {
            assert_eq!(std_sample(pinned.clone(), &mut rng).1, k.x0);
        }
    }

    #[test]
    fn hadamard_parity_probabilities() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let h = RandomOracle::new(Seed::from_u64(5));
        let k = keys(&mut rng, 8);
        let pad = BitString::random(&mut rng, 8);
        let law0 = hadamard_law(&make_gadget(k.clone(), None), &pad, &h).unwrap();
        assert!((law0.parity[0] - 1.0).abs() < 1e-15);
        for _ in 0..1000 {
            let d = law0.sample(&mut rng);
            assert!(!d.dot(&law0.difference()));
        }
        let g1 = make_gadget(k, Some(PhasePair::new(Z8::ZERO, Z8::new(1))));
        let law1 = hadamard_law(&g1, &pad, &h).unwrap();
        assert!((law1.parity[0] - 0.853_553_390_593_273_7).abs() < 1e-12);
    }

    #[test]
    fn combine_adds_phases_and_pairs_keys() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let h = RandomOracle::new(Seed::from_u64(6));
        let ka = keys(&mut rng, 16);
        let kb = keys(&mut rng, 16);
        let r0 = BitString::random(&mut rng, 16);
        let r1 = r0.xor(&BitString::from_u64(1, 16));
        let table = make_combine_table(&ka, &kb, &r0, &r1, 16, &h, &mut rng).unwrap();
        let ga = make_gadget(ka.clone(), Some(PhasePair::new(Z8::new(1), Z8::new(2))));
        let gb = make_gadget(kb.clone(), Some(PhasePair::new(Z8::new(3), Z8::new(4))));
        let mut seen = [false; 2];
        let n = 100_000;
        let mut zeros = 0usize;
        for _ in 0..n {
            let (r, g) = combine_step(&ga, &gb, &table, &h, &mut rng).unwrap();
            assert!(g.is_normalized());
            if r == r0 {
                zeros += 1;
                seen[0] = true;
                assert_eq!(g.keys.x0, ka.x0.concat(&kb.x0));
                assert_eq!(g.keys.x1, ka.x1.concat(&kb.x1));
                assert_eq!(g.relative_phase(), Some(Z8::new(2)));
            } else {
                assert_eq!(r, r1);
                seen[1] = true;
                assert_eq!(g.keys.x0, ka.x0.concat(&kb.x1));
                assert_eq!(g.keys.x1, ka.x1.concat(&kb.x0));
                // (2 + 3) - (1 + 4) = 0
                assert_eq!(g.relative_phase(), Some(Z8::ZERO));
            }
        }
        assert!(seen[0] && seen[1]);
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((zeros as f64 - n as f64 / 2.0).abs() < 4.0 * sigma);
    }

    #[test]
    fn combine_then_dephase_passes_with_certainty() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let h = RandomOracle::new(Seed::from_u64(7));
        for _ in 0..200 {
            let ka = keys(&mut rng, 16);
            let kb = keys(&mut rng, 16);
            let ta = PhasePair::random(&mut rng);
            let tb = PhasePair::random(&mut rng);
            let r0 = BitString::random(&mut rng, 16);
            let r1 = r0.xor(&BitString::from_u64(0b100, 16));
            let table = make_combine_table(&ka, &kb, &r0, &r1, 16, &h, &mut rng).unwrap();
            let (r, g) = combine_step(
                &make_gadget(ka, Some(ta)),
                &make_gadget(kb, Some(tb)),
                &table,
                &h,
                &mut rng,
            )
            .unwrap();
            // Client-side bookkeeping of the combined phase pair.
            let combined = if r == r0 {
                PhasePair::new(ta.theta0 + tb.theta0, ta.theta1 + tb.theta1)
            } else {
                PhasePair::new(ta.theta0 + tb.theta1, ta.theta1 + tb.theta0)
            };
            let pad = BitString::random(&mut rng, 16);
            let law = hadamard_law(&dephase(&g, combined.relative()), &pad, &h).unwrap();
            assert!((law.parity[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let k = keys(&mut rng, 8);
        let g = make_gadget(k.clone(), Some(PhasePair::new(Z8::new(2), Z8::new(7))));
        let out = decode_output(&[g], std::slice::from_ref(&k)).unwrap();
        assert_eq!(out.state.thetas, vec![Z8::new(5)]);

        let ks: Vec<_> = (0..5).map(|_| keys(&mut rng, 8)).collect();
        let gs: Vec<_> = ks.iter().map(|k| make_gadget(k.clone(), None)).collect();
        assert_eq!(decode_output(&gs, &ks).unwrap().state.thetas, vec![Z8::ZERO; 5]);

        let lopsided = Gadget {
            keys: k.clone(),
            amps: [Complex64::new(0.8, 0.0), Complex64::new(0.6, 0.0)],
        };
        assert!(matches!(
            decode_output(&[lopsided], std::slice::from_ref(&k)),
            Err(GadgetError::NotHonestForm { .. })
        ));
        let other = keys(&mut rng, 8);
        assert!(matches!(
            decode_output(&[make_gadget(k, None)], &[other]),
            Err(GadgetError::KeyMismatch { index: 0 })
        ));
    }

    #[test]
    fn conjugation_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let h = RandomOracle::new(Seed::from_u64(9));
        let k = keys(&mut rng, 8);
        let real = make_gadget(k.clone(), Some(PhasePair::new(Z8::ZERO, Z8::new(4))));
        assert_eq!(conjugate(&real), real);
        for t in 0..8u8 {
            let g = make_gadget(k.clone(), Some(PhasePair::new(Z8::ZERO, Z8::new(t))));
            let c = conjugate(&g);
            assert_eq!(c.relative_phase(), Some(-Z8::new(t)));
            let pad = BitString::random(&mut rng, 8);
            assert_eq!(
                hadamard_law(&g, &pad, &h).unwrap().parity,
                hadamard_law(&c, &pad, &h).unwrap().parity
            );
            assert_eq!(g.amps[1].norm_sqr(), c.amps[1].norm_sqr());
        }
    }

    #[test]
    fn fidelity_examples() {
        let v = PlusStateVector {
            thetas: vec![Z8::new(1), Z8::new(6)],
        };
        assert_eq!(fidelity_ideal(&v, &v.thetas).unwrap(), 1.0);
        assert_eq!(fidelity_ideal(&v, &[Z8::new(5), Z8::new(6)]).unwrap(), 0.0);
        let f = fidelity_ideal(&v, &[Z8::new(2), Z8::new(6)]).unwrap();
        assert!((f - 0.853_553_390_593_273_7).abs() < 1e-15);
        assert!(fidelity_ideal(&v, &[Z8::ZERO]).is_err());
        assert_eq!(v.x_corrected().x_corrected(), v);
    }

    proptest! {
        #[test]
        fn operations_preserve_normalization(t0 in 0u8..8, t1 in 0u8..8, r in 0u8..8, seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let k = keys(&mut rng, 6);
            let g = make_gadget(k.clone(), Some(PhasePair::new(Z8::new(t0), Z8::new(t1))));
            prop_assert!(g.is_normalized());
            prop_assert!(dephase(&g, Z8::new(r)).is_normalized());
            prop_assert!(conjugate(&g).is_normalized());
            let dec = decode_output(std::slice::from_ref(&g), &[k]).unwrap();
            prop_assert_eq!(dec.state.thetas[0], Z8::new(t1) - Z8::new(t0));
            prop_assert!((qubit_fidelity(g.amps, Z8::new(t1) - Z8::new(t0)) - 1.0).abs() < 1e-12);
        }
    }
}
