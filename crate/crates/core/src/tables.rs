//! Oracle-based symmetric encryption rows and lookup tables.
//!
//! A row encrypting plaintext `p` under key `k` is
//! `(R, H(R||k) + p), (R', H(R'||k))` with fresh `R, R'`. The second half is
//! a key-authentication tag: a holder of `k` finds its row by recomputing
//! tags, then strips the mask in the table's group. Phase tables use ℤ₈
//! (3-bit masks); combine tables use XOR on κ-bit strings.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::gadget::{KeyPair, PhasePair, Z8};
use crate::oracle::{Oracle, OracleError};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum TableError {
    #[error("key opens no row of the table")]
    NoMatch,
    #[error("key authenticates {rows} rows (tag collision)")]
    Collision { rows: usize },
    #[error("combine table needs distinct plaintexts")]
    EqualPlaintexts,
    #[error("plaintext does not belong to the table group")]
    GroupMismatch,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "Z8")]
    Z8,
    #[serde(rename = "XOR")]
    Xor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Plaintext {
    Phase(Z8),
    Bits(BitString),
}

impl Plaintext {
    pub fn group(&self) -> Group {
        match self {
            Plaintext::Phase(_) => Group::Z8,
            Plaintext::Bits(_) => Group::Xor,
        }
    }

    fn mask_len(&self) -> usize {
        match self {
            Plaintext::Phase(_) => 3,
            Plaintext::Bits(b) => b.len(),
        }
    }

    fn add_mask(&self, mask: &BitString) -> Plaintext {
        match self {
            Plaintext::Phase(p) => Plaintext::Phase(*p + Z8::new(mask.to_u64() as u8)),
            Plaintext::Bits(b) => Plaintext::Bits(b.xor(mask)),
        }
    }

    fn sub_mask(&self, mask: &BitString) -> Plaintext {
        match self {
            Plaintext::Phase(p) => Plaintext::Phase(*p - Z8::new(mask.to_u64() as u8)),
            Plaintext::Bits(b) => Plaintext::Bits(b.xor(mask)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(rename = "R")]
    pub pad: BitString,
    #[serde(rename = "ct")]
    pub masked: Plaintext,
    #[serde(rename = "Rp")]
    pub tag_pad: BitString,
    pub tag: BitString,
}

impl Ciphertext {
    /// Whether `key` authenticates this row.
    pub fn opens_with<O: Oracle + ?Sized>(
        &self,
        key: &BitString,
        oracle: &O,
    ) -> Result<bool, OracleError> {
        Ok(oracle.query(&self.tag_pad.concat(key), self.tag.len())? == self.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupTable {
    pub rows: Vec<Ciphertext>,
    pub group: Group,
}

pub fn encrypt<O: Oracle + ?Sized, R: RngCore + ?Sized>(
    key: &BitString,
    plaintext: &Plaintext,
    kappa: usize,
    oracle: &O,
    rng: &mut R,
) -> Result<Ciphertext, TableError> {
    let pad = BitString::random(rng, kappa);
    let tag_pad = BitString::random(rng, kappa);
    let mask = oracle.query(&pad.concat(key), plaintext.mask_len())?;
    let tag = oracle.query(&tag_pad.concat(key), kappa)?;
    Ok(Ciphertext {
        pad,
        masked: plaintext.add_mask(&mask),
        tag_pad,
        tag,
    })
}

/// Finds the unique row `key` authenticates and recovers its plaintext.
pub fn decrypt_row<O: Oracle + ?Sized>(
    table: &LookupTable,
    key: &BitString,
    oracle: &O,
) -> Result<(usize, Plaintext), TableError> {
    let mut found = None;
    let mut matches = 0;
    for (index, row) in table.rows.iter().enumerate() {
        if row.opens_with(key, oracle)? {
            matches += 1;
            found.get_or_insert(index);
        }
    }
    let index = match (matches, found) {
        (1, Some(i)) => i,
        (0, _) => return Err(TableError::NoMatch),
        (rows, _) => return Err(TableError::Collision { rows }),
    };
    let row = &table.rows[index];
    if row.masked.group() != table.group {
        return Err(TableError::GroupMismatch);
    }
    let mask = oracle.query(&row.pad.concat(key), row.masked.mask_len())?;
    Ok((index, row.masked.sub_mask(&mask)))
}

fn build_table<O: Oracle + ?Sized, R: RngCore + ?Sized>(
    entries: Vec<(BitString, Plaintext)>,
    group: Group,
    kappa: usize,
    oracle: &O,
    rng: &mut R,
) -> Result<LookupTable, TableError> {
    let mut rows = entries
        .iter()
        .map(|(k, p)| encrypt(k, p, kappa, oracle, rng))
        .collect::<Result<Vec<_>, _>>()?;
    rows.shuffle(rng);
    Ok(LookupTable { rows, group })
}

/// `helper.x_b || k.x_b' → θ_b'` for all four `(b, b')`.
pub fn make_phase_table<O: Oracle + ?Sized, R: RngCore + ?Sized>(
    helper: &KeyPair,
    keys: &KeyPair,
    phases: PhasePair,
    kappa: usize,
    oracle: &O,
    rng: &mut R,
) -> Result<LookupTable, TableError> {
    let mut entries = Vec::with_capacity(4);
    for hb in [false, true] {
        for b in [false, true] {
            entries.push((
                helper.key(hb).concat(keys.key(b)),
                Plaintext::Phase(phases.get(b)),
            ));
        }
    }
    build_table(entries, Group::Z8, kappa, oracle, rng)
}

/// `a.x_b || b.x_b' → r_{b⊕b'}`.
pub fn make_combine_table<O: Oracle + ?Sized, R: RngCore + ?Sized>(
    a: &KeyPair,
    b: &KeyPair,
    r0: &BitString,
    r1: &BitString,
    kappa: usize,
    oracle: &O,
    rng: &mut R,
) -> Result<LookupTable, TableError> {
    if r0 == r1 {
        return Err(TableError::EqualPlaintexts);
    }
    let mut entries = Vec::with_capacity(4);
    for ba in [false, true] {
        for bb in [false, true] {
            let r = if ba == bb { r0 } else { r1 };
            entries.push((a.key(ba).concat(b.key(bb)), Plaintext::Bits(r.clone())));
        }
    }
    build_table(entries, Group::Xor, kappa, oracle, rng)
}
