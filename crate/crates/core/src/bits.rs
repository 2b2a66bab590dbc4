//! Bit strings used for keys, pads, oracle outputs and measurement results.

use std::fmt;
use std::str::FromStr;

use bitvec::prelude::*;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An owned, variable-length string of bits (most significant bit first).
///
/// Serialized as a string of `0`/`1` characters so transcripts stay readable
/// and compare byte-for-byte.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString(BitVec<u8, Msb0>);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid bit character {0:?}")]
pub struct ParseBitsError(char);

impl BitString {
    pub fn new() -> Self {
        Self(BitVec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(bitvec![u8, Msb0; 0; len])
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        Self(bits.into_iter().collect())
    }

    /// The low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64, "from_u64 supports at most 64 bits");
        Self::from_bools((0..len).rev().map(|i| (value >> i) & 1 == 1))
    }

    /// Interprets the string as an unsigned integer (at most 64 bits).
    pub fn to_u64(&self) -> u64 {
        assert!(self.len() <= 64, "to_u64 supports at most 64 bits");
        self.0.iter().fold(0u64, |acc, b| (acc << 1) | u64::from(*b))
    }

    /// Takes the leading `len` bits of a byte stream.
    pub fn from_bytes_prefix(bytes: &[u8], len: usize) -> Self {
        assert!(len <= bytes.len() * 8);
        let mut bv = BitVec::<u8, Msb0>::from_slice(bytes);
        bv.truncate(len);
        Self(bv)
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R, len: usize) -> Self {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        Self::from_bytes_prefix(&bytes, len)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.0.get(index).map(|b| *b)
    }

    pub fn set(&mut self, index: usize, value: bool) {
        self.0.set(index, value);
    }

    pub fn flip(&mut self, index: usize) {
        let v = self.0[index];
        self.0.set(index, !v);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().by_vals()
    }

    /// `self || other` as a new string.
    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        out.extend_from(other);
        out
    }

    /// Appends `other` in place (amortized linear).
    pub fn extend_from(&mut self, other: &BitString) {
        self.0.extend_from_bitslice(&other.0);
    }

    pub fn prefix(&self, len: usize) -> BitString {
        Self(self.0[..len].to_bitvec())
    }

    pub fn suffix(&self, len: usize) -> BitString {
        let n = self.len();
        Self(self.0[n - len..].to_bitvec())
    }

    pub fn slice(&self, start: usize, end: usize) -> BitString {
        Self(self.0[start..end].to_bitvec())
    }

    pub fn starts_with_at(&self, offset: usize, pattern: &BitString) -> bool {
        offset + pattern.len() <= self.len() && self.0[offset..offset + pattern.len()] == pattern.0
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(self.len(), other.len(), "xor of unequal lengths");
        let mut out = self.0.clone();
        out ^= other.0.as_bitslice();
        Self(out)
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitString) -> bool {
        assert_eq!(self.len(), other.len(), "dot of unequal lengths");
        let mut t = self.0.clone();
        t &= other.0.as_bitslice();
        t.count_ones() % 2 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.0.count_ones()
    }

    pub fn is_all_zero(&self) -> bool {
        self.0.not_any()
    }

    /// Length-prefixed packed encoding; distinct strings give distinct encodings.
    pub fn encode(&self) -> Vec<u8> {
        let mut bv = self.0.clone();
        bv.set_uninitialized(false);
        let mut out = Vec::with_capacity(8 + bv.as_raw_slice().len());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(bv.as_raw_slice());
        out
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0.iter() {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ParseBitsError(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString::from_bools)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn u64_round_trip_and_display() {
        let b = BitString::from_u64(0b1011, 4);
        assert_eq!(b.to_string(), "1011");
        assert_eq!(b.to_u64(), 11);
        assert_eq!("1011".parse::<BitString>().unwrap(), b);
        assert!("10a1".parse::<BitString>().is_err());
    }

    #[test]
    fn dot_and_xor() {
        let a: BitString = "1101".parse().unwrap();
        let b: BitString = "1011".parse().unwrap();
        assert!(!a.dot(&b)); // 1+0+0+1
        assert_eq!(a.xor(&b).to_string(), "0110");
        assert!(BitString::zeros(5).is_all_zero());
    }

    #[test]
    fn encode_separates_lengths() {
        let a: BitString = "0".parse().unwrap();
        let b: BitString = "00".parse().unwrap();
        assert_ne!(a.encode(), b.encode());
    }

    proptest! {
        #[test]
        fn concat_then_split(a in proptest::collection::vec(any::<bool>(), 0..40),
                             b in proptest::collection::vec(any::<bool>(), 0..40)) {
            let x = BitString::from_bools(a.clone());
            let y = BitString::from_bools(b.clone());
            let z = x.concat(&y);
            prop_assert_eq!(z.prefix(a.len()), x);
            prop_assert_eq!(z.suffix(b.len()), y.clone());
            let s = serde_json::to_string(&z).unwrap();
            prop_assert_eq!(serde_json::from_str::<BitString>(&s).unwrap(), z);
        }
    }
}
