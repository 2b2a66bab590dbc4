//! The server's quantum holdings as a product of small sparse blocks.
//!
//! Slot 0 is the helper gadget and slot `i + 1` holds gadget `i`. Each block
//! is a superposition over key tuples for the slots it spans; honest runs
//! keep one two-branch block per slot, while attacks may merge slots into a
//! shared block. Every branch also records the claw label of each key,
//! which a real server can recompute with the public check function.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, RngCore};

use crate::bits::BitString;
use crate::gadget::{padded_word, Gadget, HadamardLaw, KeyPair, PhasePair, Z8};
use crate::oracle::{Oracle, OracleError};

pub const HELPER: usize = 0;

/// Slot of gadget `i`.
pub fn slot_of(gadget: usize) -> usize {
    gadget + 1
}

const ZERO_AMP: f64 = 1e-24;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum StateError {
    #[error("slot {0} holds no quantum state")]
    MissingSlot(usize),
    #[error("slots {0} and {1} coincide")]
    SameSlot(usize, usize),
    #[error("Hadamard measurement on slot {0} needs more than two interfering branches")]
    Unsupported(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub amp: Complex64,
    pub keys: Vec<BitString>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub slots: Vec<usize>,
    pub branches: Vec<Branch>,
}

impl Block {
    fn position(&self, slot: usize) -> usize {
        self.slots.iter().position(|s| *s == slot).expect("slot in block")
    }

    fn weight(&self) -> f64 {
        self.branches.iter().map(|b| b.amp.norm_sqr()).sum()
    }

    fn normalize(&mut self) {
        self.branches.retain(|b| b.amp.norm_sqr() > ZERO_AMP);
        let w = self.weight().sqrt();
        for b in &mut self.branches {
            b.amp /= w;
        }
    }

    fn remove_slot(&mut self, slot: usize) {
        let pos = self.position(slot);
        self.slots.remove(pos);
        for b in &mut self.branches {
            b.keys.remove(pos);
            b.labels.remove(pos);
        }
    }

    /// Index of a branch drawn with probability `|amp|²`.
    fn sample_branch<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u = rng.gen::<f64>() * self.weight();
        for (i, b) in self.branches.iter().enumerate() {
            u -= b.amp.norm_sqr();
            if u < 0.0 {
                return i;
            }
        }
        self.branches.len() - 1
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServerState {
    blocks: Vec<Option<Block>>,
    home: Vec<Option<usize>>,
}

impl ServerState {
    /// One honest `gadget(K)` per slot.
    pub fn from_claws(claws: &[KeyPair]) -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut state = ServerState::default();
        for (slot, k) in claws.iter().enumerate() {
            let branches = [false, true]
                .into_iter()
                .map(|b| Branch {
                    amp: h,
                    keys: vec![k.key(b).clone()],
                    labels: vec![b],
                })
                .collect();
            state.push_block(Block {
                slots: vec![slot],
                branches,
            });
        }
        state
    }

    fn push_block(&mut self, block: Block) {
        let id = self.blocks.len();
        for &s in &block.slots {
            if self.home.len() <= s {
                self.home.resize(s + 1, None);
            }
            self.home[s] = Some(id);
        }
        self.blocks.push(Some(block));
    }

    fn block_id(&self, slot: usize) -> Result<usize, StateError> {
        self.home
            .get(slot)
            .copied()
            .flatten()
            .ok_or(StateError::MissingSlot(slot))
    }

    pub fn block(&self, slot: usize) -> Result<&Block, StateError> {
        let id = self.block_id(slot)?;
        Ok(self.blocks[id].as_ref().expect("live block"))
    }

    fn block_mut(&mut self, slot: usize) -> Result<&mut Block, StateError> {
        let id = self.block_id(slot)?;
        Ok(self.blocks[id].as_mut().expect("live block"))
    }

    pub fn holds(&self, slot: usize) -> bool {
        self.block_id(slot).is_ok()
    }

    /// Live slots in ascending order.
    pub fn slots(&self) -> Vec<usize> {
        (0..self.home.len()).filter(|s| self.home[*s].is_some()).collect()
    }

    fn detach(&mut self, slot: usize) -> Result<Block, StateError> {
        let id = self.block_id(slot)?;
        let block = self.blocks[id].take().expect("live block");
        for &s in &block.slots {
            self.home[s] = None;
        }
        Ok(block)
    }

    /// Replaces whatever the listed slots held with a new joint block.
    /// Blocks touching these slots are discarded entirely.
    pub fn replace(&mut self, slots: Vec<usize>, branches: Vec<Branch>) {
        for &s in &slots {
            if self.holds(s) {
                let _ = self.detach(s);
            }
        }
        let mut block = Block { slots, branches };
        block.normalize();
        self.push_block(block);
    }

    /// Distinct `(label, key)` values present at `slot`.
    pub fn keys_at(&self, slot: usize) -> Result<Vec<(bool, BitString)>, StateError> {
        let block = self.block(slot)?;
        let pos = block.position(slot);
        let mut seen: Vec<(bool, BitString)> = Vec::new();
        for b in &block.branches {
            let entry = (b.labels[pos], b.keys[pos].clone());
            if !seen.contains(&entry) {
                seen.push(entry);
            }
        }
        Ok(seen)
    }

    /// Multiplies each branch by `e^{iφπ/4}` with `φ` a function of that
    /// branch's `(label, key)` at `slot`.
    pub fn multiply_phase<F>(&mut self, slot: usize, mut phase: F) -> Result<(), StateError>
    where
        F: FnMut(bool, &BitString) -> Z8,
    {
        let block = self.block_mut(slot)?;
        let pos = block.position(slot);
        for b in &mut block.branches {
            b.amp *= phase(b.labels[pos], &b.keys[pos]).root();
        }
        Ok(())
    }

    /// Multiplies the label-1 branches at `slot` by `e^{-i·revealed·π/4}`.
    pub fn dephase(&mut self, slot: usize, revealed: Z8) -> Result<(), StateError> {
        self.multiply_phase(slot, |label, _| if label { -revealed } else { Z8::ZERO })
    }

    /// Divides out a per-label phase pair.
    pub fn remove_phases(&mut self, slot: usize, phases: PhasePair) -> Result<(), StateError> {
        self.multiply_phase(slot, |label, _| -phases.get(label))
    }

    pub fn conjugate_all(&mut self) {
        for block in self.blocks.iter_mut().flatten() {
            for b in &mut block.branches {
                b.amp = b.amp.conj();
            }
        }
    }

    /// Standard-basis measurement of one slot; the rest of its block collapses.
    pub fn measure_std<R: RngCore + ?Sized>(
        &mut self,
        slot: usize,
        rng: &mut R,
    ) -> Result<BitString, StateError> {
        let mut block = self.detach(slot)?;
        let pos = block.position(slot);
        let key = block.branches[block.sample_branch(rng)].keys[pos].clone();
        block.branches.retain(|b| b.keys[pos] == key);
        block.remove_slot(slot);
        if !block.slots.is_empty() {
            block.normalize();
            self.push_block(block);
        }
        Ok(key)
    }

    /// Decrypts a combine table on the joint state of `a` and `b`, measures
    /// the result register, and folds `b` into `a` (keys concatenated, label
    /// of `a` kept). `decrypt` maps a table key to a result string.
    pub fn combine<R, F, E>(
        &mut self,
        a: usize,
        b: usize,
        mut decrypt: F,
        rng: &mut R,
    ) -> Result<Result<BitString, E>, StateError>
    where
        R: RngCore + ?Sized,
        F: FnMut(&BitString) -> Result<BitString, E>,
    {
        if a == b {
            return Err(StateError::SameSlot(a, b));
        }
        let ida = self.block_id(a)?;
        let idb = self.block_id(b)?;
        let mut joint = self.detach(a)?;
        if ida != idb {
            let other = self.detach(b)?;
            joint = tensor(joint, other);
        }
        let pa = joint.position(a);
        let pb = joint.position(b);
        let mut results = Vec::with_capacity(joint.branches.len());
        for br in &joint.branches {
            let kb = &br.keys[pb];
            let key = br.keys[pa].prefix(kb.len().min(br.keys[pa].len())).concat(kb);
            match decrypt(&key) {
                Ok(r) => results.push(r),
                Err(e) => {
                    self.push_block(joint);
                    return Ok(Err(e));
                }
            }
        }
        let r = results[joint.sample_branch(rng)].clone();
        let mut kept = Vec::new();
        for (mut br, res) in joint.branches.into_iter().zip(results) {
            if res == r {
                let kb = br.keys[pb].clone();
                br.keys[pa].extend_from(&kb);
                kept.push(br);
            }
        }
        joint.branches = kept;
        joint.remove_slot(b);
        joint.normalize();
        self.push_block(joint);
        Ok(Ok(r))
    }

    /// Hadamard-basis measurement of `slot` padded with `H(pad || key)`.
    ///
    /// Branches that agree on every other slot interfere through the
    /// two-point parity law; branches that differ elsewhere contribute an
    /// incoherent uniform component. At most two branches may share a
    /// remainder.
    pub fn measure_hadamard<O, R>(
        &mut self,
        slot: usize,
        pad: &BitString,
        oracle: &O,
        rng: &mut R,
    ) -> Result<BitString, StateError>
    where
        O: Oracle + ?Sized,
        R: RngCore + ?Sized,
    {
        let block = self.block(slot)?;
        let pos = block.position(slot);
        let mut groups: BTreeMap<Vec<BitString>, Vec<usize>> = BTreeMap::new();
        for (i, br) in block.branches.iter().enumerate() {
            let mut rest = br.keys.clone();
            rest.remove(pos);
            groups.entry(rest).or_default().push(i);
        }
        if groups.values().any(|g| g.len() > 2) {
            return Err(StateError::Unsupported(slot));
        }
        let mut words = Vec::with_capacity(block.branches.len());
        for br in &block.branches {
            words.push(padded_word(&br.keys[pos], pad, oracle)?);
        }
        let groups: Vec<Vec<usize>> = groups.into_values().collect();
        let weights: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().map(|&i| block.branches[i].amp.norm_sqr()).sum())
            .collect();
        let mut u = rng.gen::<f64>() * weights.iter().sum::<f64>();
        let mut chosen = groups.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u < 0.0 {
                chosen = i;
                break;
            }
        }
        let n = words[0].len();
        let d = match groups[chosen].as_slice() {
            &[i, j] => HadamardLaw {
                words: [words[i].clone(), words[j].clone()],
                parity: crate::gadget::parity_law([
                    block.branches[i].amp,
                    block.branches[j].amp,
                ]),
            }
            .sample(rng),
            _ => BitString::random(rng, n),
        };

        let mut block = self.detach(slot)?;
        let mut next = Vec::with_capacity(groups.len());
        for g in &groups {
            let amp: Complex64 = g
                .iter()
                .map(|&i| {
                    let sign = if d.dot(&words[i]) { -1.0 } else { 1.0 };
                    block.branches[i].amp * sign
                })
                .sum();
            let mut br = block.branches[g[0]].clone();
            br.amp = amp;
            next.push(br);
        }
        block.branches = next;
        block.remove_slot(slot);
        if !block.slots.is_empty() {
            block.normalize();
            self.push_block(block);
        }
        Ok(d)
    }

    /// The slot's state as a gadget, when it is an unentangled two-branch block.
    pub fn gadget_at(&self, slot: usize) -> Option<Gadget> {
        let block = self.block(slot).ok()?;
        if block.slots.len() != 1 || block.branches.len() != 2 {
            return None;
        }
        let (b0, b1) = (&block.branches[0], &block.branches[1]);
        let (lo, hi) = if b0.labels[0] { (b1, b0) } else { (b0, b1) };
        if lo.labels[0] == hi.labels[0] {
            return None;
        }
        Some(Gadget {
            keys: KeyPair::new(lo.keys[0].clone(), hi.keys[0].clone()).ok()?,
            amps: [lo.amp, hi.amp],
        })
    }

    /// `|⟨⊗ᵢ +_θᵢ | ψ⟩|²` over the listed slots, reading `x_b` of each revealed
    /// pair as qubit `b` (or `1 − b` when `x_flip`). Slots sharing a block
    /// with unlisted slots are traced out exactly.
    pub fn fidelity(
        &self,
        slots: &[usize],
        revealed: &[KeyPair],
        thetas: &[Z8],
        x_flip: bool,
    ) -> f64 {
        let target: BTreeMap<usize, (&KeyPair, Z8)> = slots
            .iter()
            .zip(revealed.iter().zip(thetas))
            .map(|(s, (k, t))| (*s, (k, *t)))
            .collect();
        let mut ids = std::collections::BTreeSet::new();
        for s in slots {
            match self.block_id(*s) {
                Ok(id) => {
                    ids.insert(id);
                }
                Err(_) => return 0.0,
            }
        }
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let mut total = 1.0;
        for id in ids {
            let block = self.blocks[id].as_ref().expect("live block");
            // Overlap with the target on listed slots, grouped by the
            // remainder so unlisted slots are traced out.
            let mut by_rest: BTreeMap<Vec<BitString>, Complex64> = BTreeMap::new();
            for br in &block.branches {
                let mut amp = br.amp;
                let mut rest = Vec::new();
                for (p, s) in block.slots.iter().enumerate() {
                    match target.get(s) {
                        Some((k, theta)) => match k.bit_of(&br.keys[p]) {
                            Some(bit) => {
                                let q = bit != x_flip;
                                amp *= half;
                                if q {
                                    amp *= (-*theta).root();
                                }
                            }
                            None => amp = Complex64::new(0.0, 0.0),
                        },
                        None => rest.push(br.keys[p].clone()),
                    }
                }
                *by_rest.entry(rest).or_default() += amp;
            }
            total *= by_rest.values().map(|a| a.norm_sqr()).sum::<f64>();
        }
        total
    }
}

fn tensor(a: Block, b: Block) -> Block {
    let mut slots = a.slots.clone();
    slots.extend_from_slice(&b.slots);
    let mut branches = Vec::with_capacity(a.branches.len() * b.branches.len());
    for x in &a.branches {
        for y in &b.branches {
            let mut keys = x.keys.clone();
            keys.extend(y.keys.iter().cloned());
            let mut labels = x.labels.clone();
            labels.extend_from_slice(&y.labels);
            branches.push(Branch {
                amp: x.amp * y.amp,
                keys,
                labels,
            });
        }
    }
    Block { slots, branches }
}
