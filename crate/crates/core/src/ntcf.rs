//! Trapdoor claw-free function interface and a mock hidden-shift family.
//!
//! The mock has the full functional contract (exactly 2-to-1, trapdoor
//! inversion, public checking) but no hardness: claw-freeness holds only
//! because server code never touches the secret shift. The public key is an
//! opaque handle whose fields cannot be read outside this module.

use std::fmt;

use rand::{Rng, RngCore};
use sha2::{Digest, Sha256};

use crate::bits::BitString;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum NtcfError {
    #[error("security parameter {0} outside the supported range 2..=64")]
    UnsupportedKappa(usize),
}

/// One honest evaluation: the image and its two preimages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClawResult {
    pub y: BitString,
    pub x0: BitString,
    pub x1: BitString,
}

/// A trapdoor claw-free family `f(b, x)`, 2-to-1 with claws `(x₀, x₁)`.
pub trait Ntcf: Sync {
    type PublicKey: Clone + fmt::Debug + Send + Sync;
    type SecretKey: Clone + fmt::Debug + Send + Sync;

    fn keygen<R: RngCore + ?Sized>(
        &self,
        kappa: usize,
        rng: &mut R,
    ) -> Result<(Self::SecretKey, Self::PublicKey), NtcfError>;

    /// Evaluates on `|+⟩^κ` and measures the image register.
    fn eval_claw<R: RngCore + ?Sized>(&self, pk: &Self::PublicKey, rng: &mut R) -> ClawResult;

    /// The branch-`b` preimage of `y`, or `None` for an invalid image.
    fn dec(&self, sk: &Self::SecretKey, b: bool, y: &BitString) -> Option<BitString>;

    /// `true` iff `dec(sk, b, y) = x`, computed from the public key alone.
    fn chk(&self, pk: &Self::PublicKey, b: bool, x: &BitString, y: &BitString) -> bool;

    /// Wire encoding of a public key, as sent in the transcript.
    fn encode_public_key(&self, pk: &Self::PublicKey) -> String;
}

const FEISTEL_ROUNDS: u8 = 4;

#[derive(Clone, PartialEq, Eq)]
struct Params {
    kappa: usize,
    shift: u64,
    perm_key: [u8; 32],
    tag_key: [u8; 32],
}

impl Params {
    fn mask(&self) -> u64 {
        low_mask(self.kappa)
    }

    /// Feistel width: κ rounded up to even; odd κ cycle-walks.
    fn width(&self) -> usize {
        self.kappa + self.kappa % 2
    }

    fn round_fn(&self, round: u8, half: u64, half_bits: usize) -> u64 {
        let mut h = Sha256::new();
        h.update(b"rspv/ntcf/feistel");
        h.update(self.perm_key);
        h.update([round]);
        h.update(half.to_le_bytes());
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("8 bytes")) & low_mask(half_bits)
    }

    fn feistel(&self, v: u64, inverse: bool) -> u64 {
        let half = self.width() / 2;
        let m = low_mask(half);
        let (mut l, mut r) = (v >> half, v & m);
        if inverse {
            for round in (0..FEISTEL_ROUNDS).rev() {
                let prev_r = l;
                let prev_l = r ^ self.round_fn(round, prev_r, half);
                l = prev_l;
                r = prev_r;
            }
        } else {
            for round in 0..FEISTEL_ROUNDS {
                let next = l ^ self.round_fn(round, r, half);
                l = r;
                r = next;
            }
        }
        (l << half) | r
    }

    /// Permutation of `{0,1}^κ` by cycle-walking a Feistel network.
    fn permute(&self, u: u64, inverse: bool) -> u64 {
        let mut v = self.feistel(u, inverse);
        while v > self.mask() {
            v = self.feistel(v, inverse);
        }
        v
    }

    fn tag(&self, v: u64) -> u64 {
        let mut h = Sha256::new();
        h.update(b"rspv/ntcf/tag");
        h.update(self.tag_key);
        h.update(v.to_le_bytes());
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("8 bytes")) & self.mask()
    }

    /// `G(u) = π(u) || tag(π(u))`, an injection into `2κ`-bit strings.
    fn image(&self, u: u64) -> BitString {
        let v = self.permute(u, false);
        BitString::from_u64(v, self.kappa).concat(&BitString::from_u64(self.tag(v), self.kappa))
    }

    fn preimage(&self, y: &BitString) -> Option<u64> {
        if y.len() != 2 * self.kappa {
            return None;
        }
        let v = y.prefix(self.kappa).to_u64();
        if y.suffix(self.kappa).to_u64() != self.tag(v) {
            return None;
        }
        Some(self.permute(v, true))
    }

    fn f(&self, b: bool, x: u64) -> BitString {
        self.image(if b { x ^ self.shift } else { x })
    }
}

fn low_mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Sealed public parameters of the mock family.
#[derive(Clone)]
pub struct MockPublicKey(Params);

/// The hidden shift `s` (plus the permutation it is used with).
#[derive(Clone)]
pub struct MockSecretKey(Params);

impl MockPublicKey {
    pub fn kappa(&self) -> usize {
        self.0.kappa
    }

    /// Debug-only encoding for session logs.
    pub fn to_hex(&self) -> String {
        format!("{}{}", hex::encode(self.0.perm_key), hex::encode(self.0.tag_key))
    }
}

impl MockSecretKey {
    pub fn kappa(&self) -> usize {
        self.0.kappa
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0.shift.to_be_bytes())
    }
}

impl fmt::Debug for MockPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MockPublicKey(kappa={})", self.0.kappa)
    }
}

impl fmt::Debug for MockSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MockSecretKey(kappa={})", self.0.kappa)
    }
}

/// `f(b, x) = G(x ⊕ b·s)` with a secret nonzero shift `s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockNtcf;

fn key_value(x: &BitString, kappa: usize) -> Option<u64> {
    (x.len() == kappa).then(|| x.to_u64())
}

impl Ntcf for MockNtcf {
    type PublicKey = MockPublicKey;
    type SecretKey = MockSecretKey;

    fn encode_public_key(&self, pk: &MockPublicKey) -> String {
        pk.to_hex()
    }

    fn keygen<R: RngCore + ?Sized>(
        &self,
        kappa: usize,
        rng: &mut R,
    ) -> Result<(MockSecretKey, MockPublicKey), NtcfError> {
        if !(2..=64).contains(&kappa) {
            return Err(NtcfError::UnsupportedKappa(kappa));
        }
        let mask = low_mask(kappa);
        let shift = loop {
            let s = rng.next_u64() & mask;
            if s != 0 {
                break s;
            }
        };
        let mut perm_key = [0u8; 32];
        let mut tag_key = [0u8; 32];
        rng.fill_bytes(&mut perm_key);
        rng.fill_bytes(&mut tag_key);
        let params = Params {
            kappa,
            shift,
            perm_key,
            tag_key,
        };
        Ok((MockSecretKey(params.clone()), MockPublicKey(params)))
    }

    fn eval_claw<R: RngCore + ?Sized>(&self, pk: &MockPublicKey, rng: &mut R) -> ClawResult {
        let p = &pk.0;
        let u = rng.gen::<u64>() & p.mask();
        ClawResult {
            y: p.image(u),
            x0: BitString::from_u64(u, p.kappa),
            x1: BitString::from_u64(u ^ p.shift, p.kappa),
        }
    }

    fn dec(&self, sk: &MockSecretKey, b: bool, y: &BitString) -> Option<BitString> {
        let p = &sk.0;
        let u = p.preimage(y)?;
        let x = if b { u ^ p.shift } else { u };
        Some(BitString::from_u64(x, p.kappa))
    }

    fn chk(&self, pk: &MockPublicKey, b: bool, x: &BitString, y: &BitString) -> bool {
        let p = &pk.0;
        match key_value(x, p.kappa) {
            Some(x) => &p.f(b, x) == y,
            None => false,
        }
    }
}
