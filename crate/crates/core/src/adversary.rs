//! Server strategies: the honest server and a family of built-in attacks.
//!
//! The protocol engine performs every honest server operation itself and
//! consults the strategy at each decision point. Hooks see the server's own
//! state and the messages addressed to it, never client secrets. All
//! client-side randomness lives on a separate stream, so no strategy can
//! steer round types, pads, subsets or extra biases.
//!
//! The branch-family state exposes both keys of a superposition to the code
//! holding it. Strategies here only use them in ways a physical server could
//! (measuring, relabeling through the public check, entangling with known
//! operations); reading an unmeasured partner key would be outside the model.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::BitString;
use crate::gadget::{PhasePair, PlusStateVector, Z8};
use crate::protocol::server::{slot_of, Branch, ServerState};

/// What a server hands over at the end of a comp round.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerOutput {
    pub state: ServerState,
    /// Output slots in gadget order `1..=L`.
    pub slots: Vec<usize>,
    /// Whether an `X` correction is applied to every output qubit.
    pub x_flip: bool,
    /// The server's own description of its output, when in honest form.
    pub decoded: Option<PlusStateVector>,
}

/// Decision points of a server. Defaults are the honest behavior.
pub trait Strategy {
    fn name(&self) -> String;

    /// After the NTCF evaluations; may rewrite the state or the images sent back.
    fn on_setup(&mut self, _state: &mut ServerState, _images: &mut [BitString], _rng: &mut dyn RngCore) {}

    /// Phase to imprint on the `label` branch of gadget `gadget`, given the
    /// decrypted table entry. `None` skips the multiplication.
    fn on_phase(&mut self, _gadget: usize, _label: bool, theta: Z8) -> Option<Z8> {
        Some(theta)
    }

    /// After all phase tables have been processed.
    fn on_tables_applied(&mut self, _state: &mut ServerState) {}

    fn on_std_report(&mut self, _slot: usize, key: BitString, _rng: &mut dyn RngCore) -> BitString {
        key
    }

    fn on_combine_report(&mut self, r: BitString, _rng: &mut dyn RngCore) -> BitString {
        r
    }

    /// Value used to de-phase `slot` after the client reveals `revealed`.
    fn on_dephase(&mut self, _slot: usize, revealed: Z8) -> Z8 {
        revealed
    }

    /// Phases divided out of gadget `gadget` once the client reveals them.
    fn on_remove_phases(&mut self, _gadget: usize, phases: PhasePair) -> PhasePair {
        phases
    }

    fn on_hadamard_report(&mut self, _slot: usize, d: BitString, _rng: &mut dyn RngCore) -> BitString {
        d
    }

    fn on_decode(&mut self, _output: &mut ServerOutput) {}
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Honest;

impl Strategy for Honest {
    fn name(&self) -> String {
        "honest".into()
    }
}

/// Runs `inner` in the complex-conjugated world: the state is conjugated
/// after phase application, every phase operation `inner` chooses is
/// performed conjugated (negated), and the output gets an `X` correction.
/// Wrapping twice is honest.
pub struct Conjugated<S>(pub S);

impl<S: Strategy> Strategy for Conjugated<S> {
    fn name(&self) -> String {
        format!("conjugate({})", self.0.name())
    }

    fn on_setup(&mut self, state: &mut ServerState, images: &mut [BitString], rng: &mut dyn RngCore) {
        self.0.on_setup(state, images, rng)
    }

    fn on_phase(&mut self, gadget: usize, label: bool, theta: Z8) -> Option<Z8> {
        self.0.on_phase(gadget, label, theta)
    }

    fn on_tables_applied(&mut self, state: &mut ServerState) {
        self.0.on_tables_applied(state);
        state.conjugate_all();
    }

    fn on_std_report(&mut self, slot: usize, key: BitString, rng: &mut dyn RngCore) -> BitString {
        self.0.on_std_report(slot, key, rng)
    }

    fn on_combine_report(&mut self, r: BitString, rng: &mut dyn RngCore) -> BitString {
        self.0.on_combine_report(r, rng)
    }

    fn on_dephase(&mut self, slot: usize, revealed: Z8) -> Z8 {
        -self.0.on_dephase(slot, revealed)
    }

    fn on_remove_phases(&mut self, gadget: usize, phases: PhasePair) -> PhasePair {
        let inner = self.0.on_remove_phases(gadget, phases);
        PhasePair::new(-inner.theta0, -inner.theta1)
    }

    fn on_hadamard_report(&mut self, slot: usize, d: BitString, rng: &mut dyn RngCore) -> BitString {
        self.0.on_hadamard_report(slot, d, rng)
    }

    fn on_decode(&mut self, output: &mut ServerOutput) {
        self.0.on_decode(output);
        output.x_flip = !output.x_flip;
        output.decoded = output.decoded.as_ref().map(PlusStateVector::x_corrected);
    }
}

impl Strategy for Box<dyn Strategy> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn on_setup(&mut self, state: &mut ServerState, images: &mut [BitString], rng: &mut dyn RngCore) {
        (**self).on_setup(state, images, rng)
    }
    fn on_phase(&mut self, gadget: usize, label: bool, theta: Z8) -> Option<Z8> {
        (**self).on_phase(gadget, label, theta)
    }
    fn on_tables_applied(&mut self, state: &mut ServerState) {
        (**self).on_tables_applied(state)
    }
    fn on_std_report(&mut self, slot: usize, key: BitString, rng: &mut dyn RngCore) -> BitString {
        (**self).on_std_report(slot, key, rng)
    }
    fn on_combine_report(&mut self, r: BitString, rng: &mut dyn RngCore) -> BitString {
        (**self).on_combine_report(r, rng)
    }
    fn on_dephase(&mut self, slot: usize, revealed: Z8) -> Z8 {
        (**self).on_dephase(slot, revealed)
    }
    fn on_remove_phases(&mut self, gadget: usize, phases: PhasePair) -> PhasePair {
        (**self).on_remove_phases(gadget, phases)
    }
    fn on_hadamard_report(&mut self, slot: usize, d: BitString, rng: &mut dyn RngCore) -> BitString {
        (**self).on_hadamard_report(slot, d, rng)
    }
    fn on_decode(&mut self, output: &mut ServerOutput) {
        (**self).on_decode(output)
    }
}

/// A total map on ℤ₈, written `identity`, `neg`, `shift:c`, `const:c` or
/// `bump:t:c` (adds `c` at `t` only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseMap {
    #[default]
    Identity,
    Neg,
    Shift(u8),
    Const(u8),
    Bump { at: u8, by: u8 },
}

impl PhaseMap {
    pub fn apply(&self, theta: Z8) -> Z8 {
        match *self {
            PhaseMap::Identity => theta,
            PhaseMap::Neg => -theta,
            PhaseMap::Shift(c) => theta + Z8::new(c),
            PhaseMap::Const(c) => Z8::new(c),
            PhaseMap::Bump { at, by } => {
                if theta.value() == at % 8 {
                    theta + Z8::new(by)
                } else {
                    theta
                }
            }
        }
    }
}

impl fmt::Display for PhaseMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseMap::Identity => f.write_str("identity"),
            PhaseMap::Neg => f.write_str("neg"),
            PhaseMap::Shift(c) => write!(f, "shift:{c}"),
            PhaseMap::Const(c) => write!(f, "const:{c}"),
            PhaseMap::Bump { at, by } => write!(f, "bump:{at}:{by}"),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("unknown phase map {0:?}")]
pub struct PhaseMapParseError(String);

impl FromStr for PhaseMap {
    type Err = PhaseMapParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PhaseMapParseError(s.to_owned());
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.parse::<u8>().ok().filter(|v| *v < 8).ok_or_else(err);
        match parts.as_slice() {
            ["identity"] | ["id"] => Ok(PhaseMap::Identity),
            ["neg"] => Ok(PhaseMap::Neg),
            ["shift", c] => Ok(PhaseMap::Shift(num(c)?)),
            ["const", c] => Ok(PhaseMap::Const(num(c)?)),
            ["bump", t, c] => Ok(PhaseMap::Bump {
                at: num(t)?,
                by: num(c)?,
            }),
            _ => Err(err()),
        }
    }
}

impl Serialize for PhaseMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PhaseMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Imprints `e^{f(θ₀)iπ/4}|x₀⟩ + e^{g(θ₁)iπ/4}|x₁⟩` instead of the table
/// phases. Revealed relative phases pass through `revealed` before
/// de-phasing; revealed phase pairs are removed as `(f(θ₀), g(θ₁))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseOffset {
    pub f: PhaseMap,
    pub g: PhaseMap,
    pub revealed: PhaseMap,
}

impl Strategy for PhaseOffset {
    fn name(&self) -> String {
        format!("phase_offset(f={},g={},revealed={})", self.f, self.g, self.revealed)
    }

    fn on_phase(&mut self, _gadget: usize, label: bool, theta: Z8) -> Option<Z8> {
        Some(if label { self.g.apply(theta) } else { self.f.apply(theta) })
    }

    fn on_dephase(&mut self, _slot: usize, revealed: Z8) -> Z8 {
        self.revealed.apply(revealed)
    }

    fn on_remove_phases(&mut self, _gadget: usize, phases: PhasePair) -> PhasePair {
        PhasePair::new(self.f.apply(phases.theta0), self.g.apply(phases.theta1))
    }
}

/// Replies with uniformly random strings at every measurement.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomResponse;

impl Strategy for RandomResponse {
    fn name(&self) -> String {
        "random_response".into()
    }

    fn on_std_report(&mut self, _slot: usize, key: BitString, rng: &mut dyn RngCore) -> BitString {
        BitString::random(rng, key.len())
    }

    fn on_combine_report(&mut self, r: BitString, rng: &mut dyn RngCore) -> BitString {
        BitString::random(rng, r.len())
    }

    fn on_hadamard_report(&mut self, _slot: usize, d: BitString, rng: &mut dyn RngCore) -> BitString {
        BitString::random(rng, d.len())
    }
}

/// Holds `(|x₀⁽¹⁾…x₀⁽ᴸ⁾⟩ + |x₁⁽¹⁾…x₁⁽ᴸ⁾⟩)/√2` across all output gadgets
/// instead of their product state.
#[derive(Debug, Clone, Copy)]
pub struct Ghz {
    pub outputs: usize,
}

impl Strategy for Ghz {
    fn name(&self) -> String {
        "ghz".into()
    }

    fn on_setup(&mut self, state: &mut ServerState, _images: &mut [BitString], _rng: &mut dyn RngCore) {
        let slots: Vec<usize> = (1..=self.outputs).map(slot_of).collect();
        let mut pairs = Vec::with_capacity(slots.len());
        for &s in &slots {
            let keys = state.keys_at(s).expect("fresh gadget");
            let lo = keys.iter().find(|(l, _)| !l).expect("label 0").1.clone();
            let hi = keys.iter().find(|(l, _)| *l).expect("label 1").1.clone();
            pairs.push((lo, hi));
        }
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let branches = [false, true]
            .into_iter()
            .map(|b| Branch {
                amp: h,
                keys: pairs
                    .iter()
                    .map(|(lo, hi)| if b { hi.clone() } else { lo.clone() })
                    .collect(),
                labels: vec![b; pairs.len()],
            })
            .collect();
        state.replace(slots, branches);
    }
}

/// Flips one bit of the image returned for gadget slot `slot`.
#[derive(Debug, Clone, Copy)]
pub struct CorruptImage {
    pub slot: usize,
}

impl Strategy for CorruptImage {
    fn name(&self) -> String {
        "corrupt_y".into()
    }

    fn on_setup(&mut self, _state: &mut ServerState, images: &mut [BitString], _rng: &mut dyn RngCore) {
        if let Some(y) = images.get_mut(self.slot) {
            y.flip(0);
        }
    }
}

/// Flips the first bit of every standard-basis report for `slot`.
#[derive(Debug, Clone, Copy)]
pub struct FlipKeyBit {
    pub slot: usize,
}

impl Strategy for FlipKeyBit {
    fn name(&self) -> String {
        "flip_key_bit".into()
    }

    fn on_std_report(&mut self, slot: usize, mut key: BitString, _rng: &mut dyn RngCore) -> BitString {
        if slot == self.slot && !key.is_empty() {
            key.flip(0);
        }
        key
    }
}

/// Measures honestly but reports a fresh guess at the other key.
#[derive(Debug, Clone, Copy, Default)]
pub struct GuessUnheldKey;

impl Strategy for GuessUnheldKey {
    fn name(&self) -> String {
        "guess_unheld_key".into()
    }

    fn on_std_report(&mut self, _slot: usize, key: BitString, rng: &mut dyn RngCore) -> BitString {
        loop {
            let guess = BitString::random(rng, key.len());
            if guess != key {
                return guess;
            }
        }
    }
}

/// Ignores every phase table.
#[derive(Debug, Clone, Copy, Default)]
pub struct SkipTables;

impl Strategy for SkipTables {
    fn name(&self) -> String {
        "skip_tables".into()
    }

    fn on_phase(&mut self, _gadget: usize, _label: bool, _theta: Z8) -> Option<Z8> {
        None
    }

    fn on_remove_phases(&mut self, _gadget: usize, _phases: PhasePair) -> PhasePair {
        PhasePair::default()
    }
}

/// Reports a combine result with its last bit flipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct BadCombine;

impl Strategy for BadCombine {
    fn name(&self) -> String {
        "bad_combine".into()
    }

    fn on_combine_report(&mut self, mut r: BitString, _rng: &mut dyn RngCore) -> BitString {
        let n = r.len();
        if n > 0 {
            r.flip(n - 1);
        }
        r
    }
}

/// Serializable description of a strategy, tagged by `"attack"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "attack", rename_all = "snake_case")]
pub enum StrategySpec {
    Honest,
    Conjugate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inner: Option<Box<StrategySpec>>,
    },
    PhaseOffset {
        #[serde(default)]
        f: PhaseMap,
        #[serde(default)]
        g: PhaseMap,
        #[serde(default)]
        revealed: PhaseMap,
    },
    #[serde(alias = "always_lose")]
    RandomResponse,
    Ghz,
    #[serde(rename = "corrupt_y")]
    CorruptImage {
        #[serde(default)]
        slot: usize,
    },
    FlipKeyBit {
        #[serde(default)]
        slot: usize,
    },
    GuessUnheldKey,
    SkipTables,
    BadCombine,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid strategy {input:?}: {reason}")]
pub struct StrategyParseError {
    input: String,
    reason: String,
}

impl StrategySpec {
    /// A fresh per-session instance. `outputs` is the number of output gadgets.
    pub fn build(&self, outputs: usize) -> Box<dyn Strategy> {
        match self {
            StrategySpec::Honest => Box::new(Honest),
            StrategySpec::Conjugate { inner } => {
                let inner = inner.as_deref().unwrap_or(&StrategySpec::Honest);
                Box::new(Conjugated(inner.build(outputs)))
            }
            StrategySpec::PhaseOffset { f, g, revealed } => Box::new(PhaseOffset {
                f: *f,
                g: *g,
                revealed: *revealed,
            }),
            StrategySpec::RandomResponse => Box::new(RandomResponse),
            StrategySpec::Ghz => Box::new(Ghz { outputs }),
            StrategySpec::CorruptImage { slot } => Box::new(CorruptImage { slot: *slot }),
            StrategySpec::FlipKeyBit { slot } => Box::new(FlipKeyBit { slot: *slot }),
            StrategySpec::GuessUnheldKey => Box::new(GuessUnheldKey),
            StrategySpec::SkipTables => Box::new(SkipTables),
            StrategySpec::BadCombine => Box::new(BadCombine),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = StrategyParseError;

    /// Either a bare name (`honest`, `always_lose`, ...) or a JSON object.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let value = if trimmed.starts_with('{') {
            serde_json::from_str(trimmed)
        } else {
            Ok(serde_json::json!({ "attack": trimmed }))
        };
        value
            .and_then(serde_json::from_value)
            .map_err(|e| StrategyParseError {
                input: s.to_owned(),
                reason: e.to_string(),
            })
    }
}

pub fn honest() -> StrategySpec {
    StrategySpec::Honest
}

pub fn conjugate_attack() -> StrategySpec {
    StrategySpec::Conjugate { inner: None }
}

pub fn phase_offset_attack(f: PhaseMap, g: PhaseMap) -> StrategySpec {
    StrategySpec::PhaseOffset {
        f,
        g,
        revealed: PhaseMap::Identity,
    }
}

pub fn random_response() -> StrategySpec {
    StrategySpec::RandomResponse
}

pub fn always_lose() -> StrategySpec {
    StrategySpec::RandomResponse
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_maps_parse_and_apply() {
        let m: PhaseMap = "bump:3:1".parse().unwrap();
        assert_eq!(m.apply(Z8::new(3)), Z8::new(4));
        assert_eq!(m.apply(Z8::new(2)), Z8::new(2));
        assert_eq!("shift:7".parse::<PhaseMap>().unwrap().apply(Z8::new(2)), Z8::new(1));
        assert_eq!("neg".parse::<PhaseMap>().unwrap().apply(Z8::new(3)), Z8::new(5));
        assert!("shift:8".parse::<PhaseMap>().is_err());
        assert!("spin".parse::<PhaseMap>().is_err());
        for s in ["identity", "neg", "shift:2", "const:5", "bump:3:1"] {
            assert_eq!(s.parse::<PhaseMap>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn strategy_specs_parse_from_names_and_json() {
        assert_eq!("honest".parse::<StrategySpec>().unwrap(), StrategySpec::Honest);
        assert_eq!(
            "always_lose".parse::<StrategySpec>().unwrap(),
            StrategySpec::RandomResponse
        );
        let spec: StrategySpec = r#"{"attack":"phase_offset","f":"shift:1","g":"identity"}"#
            .parse()
            .unwrap();
        assert_eq!(
            spec,
            StrategySpec::PhaseOffset {
                f: PhaseMap::Shift(1),
                g: PhaseMap::Identity,
                revealed: PhaseMap::Identity
            }
        );
        assert!("nonsense".parse::<StrategySpec>().is_err());
        let json = serde_json::to_string(&conjugate_attack()).unwrap();
        assert_eq!(json, r#"{"attack":"conjugate"}"#);
    }

    #[test]
    fn conjugated_negates_revealed_values_and_double_wrap_is_identity() {
        let mut c = Conjugated(Honest);
        assert_eq!(c.on_dephase(1, Z8::new(3)), Z8::new(5));
        let mut cc = Conjugated(Conjugated(Honest));
        assert_eq!(cc.on_dephase(1, Z8::new(3)), Z8::new(3));
        let p = PhasePair::new(Z8::new(1), Z8::new(6));
        assert_eq!(cc.on_remove_phases(2, p), p);
        assert_eq!(
            c.on_remove_phases(2, p),
            PhasePair::new(Z8::new(7), Z8::new(2))
        );
    }
}
