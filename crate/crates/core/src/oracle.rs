//! Seeded random-oracle model with lazy per-entry sampling and blinded views.
//!
//! Every entry `H(x)` is conceptually a uniformly random string of `|x|²`
//! bits. Entries are materialized on first use from a keyed SHA-256 stream
//! over the session seed; a request for fewer bits reads a prefix of the
//! same entry.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::bits::BitString;
use crate::seed::Seed;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("requested {requested} output bits but the entry for a {input_len}-bit input holds {max}")]
    OutputTooLong {
        requested: usize,
        input_len: usize,
        max: usize,
    },
    #[error("output length must be at least one bit")]
    EmptyOutput,
    #[error("blind pattern has an empty key")]
    EmptyPattern,
}

/// Anything that answers random-oracle queries.
pub trait Oracle {
    fn query(&self, input: &BitString, out_len: usize) -> Result<BitString, OracleError>;
}

fn check_len(input: &BitString, out_len: usize) -> Result<(), OracleError> {
    if out_len == 0 {
        return Err(OracleError::EmptyOutput);
    }
    let max = input.len().saturating_mul(input.len());
    if out_len > max {
        return Err(OracleError::OutputTooLong {
            requested: out_len,
            input_len: input.len(),
            max,
        });
    }
    Ok(())
}

/// One session's random oracle.
pub struct RandomOracle {
    seed: Seed,
    cache: RefCell<HashMap<BitString, BitString>>,
}

impl RandomOracle {
    pub fn new(seed: Seed) -> Self {
        Self {
            seed,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    /// Number of distinct entries sampled so far.
    pub fn sampled_entries(&self) -> usize {
        self.cache.borrow().len()
    }

    fn expand(&self, input: &BitString, out_len: usize) -> BitString {
        let encoded = input.encode();
        let blocks = out_len.div_ceil(256);
        let mut bytes = Vec::with_capacity(blocks * 32);
        for counter in 0..blocks as u64 {
            let mut h = Sha256::new();
            h.update(b"rspv/ro");
            h.update(self.seed.0);
            h.update(counter.to_le_bytes());
            h.update(&encoded);
            bytes.extend_from_slice(&h.finalize());
        }
        BitString::from_bytes_prefix(&bytes, out_len)
    }
}

impl Oracle for RandomOracle {
    fn query(&self, input: &BitString, out_len: usize) -> Result<BitString, OracleError> {
        check_len(input, out_len)?;
        if let Some(entry) = self.cache.borrow().get(input) {
            if entry.len() >= out_len {
                return Ok(entry.prefix(out_len));
            }
        }
        let fresh = self.expand(input, out_len);
        self.cache.borrow_mut().insert(input.clone(), fresh.clone());
        Ok(fresh)
    }
}

/// Inputs of the form `{0,1}^pad_len || key || anything`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindPattern {
    pub pad_len: usize,
    pub key: BitString,
}

impl BlindPattern {
    pub fn matches(&self, input: &BitString) -> bool {
        input.starts_with_at(self.pad_len, &self.key)
    }
}

/// A view of `base` in which the entries matched by `patterns` are replaced
/// by fresh values drawn from an independent seed.
pub struct OracleView<'a> {
    base: &'a RandomOracle,
    patterns: Vec<BlindPattern>,
    resampled: RandomOracle,
}

impl OracleView<'_> {
    pub fn is_blinded(&self, input: &BitString) -> bool {
        self.patterns.iter().any(|p| p.matches(input))
    }
}

impl Oracle for OracleView<'_> {
    fn query(&self, input: &BitString, out_len: usize) -> Result<BitString, OracleError> {
        if self.is_blinded(input) {
            check_len(input, out_len)?;
            self.resampled.query(input, out_len)
        } else {
            self.base.query(input, out_len)
        }
    }
}

pub fn blind(
    base: &RandomOracle,
    patterns: Vec<BlindPattern>,
    resample_seed: Seed,
) -> Result<OracleView<'_>, OracleError> {
    if patterns.iter().any(|p| p.key.is_empty()) {
        return Err(OracleError::EmptyPattern);
    }
    Ok(OracleView {
        base,
        patterns,
        resampled: RandomOracle::new(resample_seed),
    })
}

/// A uniformly random `kappa`-bit pad.
pub fn fresh_pad<R: RngCore + ?Sized>(rng: &mut R, kappa: usize) -> BitString {
    BitString::random(rng, kappa)
}
