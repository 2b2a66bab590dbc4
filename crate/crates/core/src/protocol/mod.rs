//! Client and server state machines for one pre-RSPV session.
//!
//! A session draws client randomness, server randomness and the random
//! oracle from three independent streams derived from its seed. The engine
//! performs the honest server's operations on the server state and lets the
//! strategy intervene at every decision point. A `fail` anywhere ends the
//! session.

pub mod server;
pub mod transcript;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::adversary::{ServerOutput, Strategy};
use crate::bits::BitString;
use crate::gadget::{decode_output, fidelity_ideal, padded_word, KeyPair, PhasePair, PlusStateVector, Z8};
use crate::ntcf::Ntcf;
use crate::oracle::{fresh_pad, RandomOracle};
use crate::seed::Seed;
use crate::tables::{decrypt_row, make_combine_table, make_phase_table, LookupTable, Plaintext, TableError};

use server::{slot_of, ServerState, StateError, HELPER};
use transcript::{Party, Transcript};

/// `(1/3)·cos²(π/8)`, the optimal quiz-winning probability.
pub const OPT: f64 = 0.284_517_796_864_424_6;
pub const P_TEST: f64 = 0.8;
pub const P_QUIZ: f64 = 0.1;
pub const P_COMP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionParams {
    #[serde(rename = "L")]
    pub l: usize,
    pub kappa: usize,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ParamsError {
    #[error("L must be at least 1")]
    NoOutputs,
    #[error("kappa must lie in 2..=64, got {0}")]
    Kappa(usize),
}

impl SessionParams {
    pub fn new(l: usize, kappa: usize) -> Result<Self, ParamsError> {
        if l == 0 {
            return Err(ParamsError::NoOutputs);
        }
        if !(2..=64).contains(&kappa) {
            return Err(ParamsError::Kappa(kappa));
        }
        Ok(Self { l, kappa })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundType {
    Test,
    Quiz,
    Comp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    Win,
    Lose,
}

/// The subtest the dispatcher selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    /// Standard-basis test before any phase is added.
    EarlyStdB,
    StdB,
    CoPh,
    InPh,
    Bn,
    Output,
}

impl Branch {
    pub fn round_type(self) -> RoundType {
        match self {
            Branch::InPh => RoundType::Quiz,
            Branch::Output => RoundType::Comp,
            _ => RoundType::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Setup,
    EarlyStdB,
    AddPhase,
    StdB,
    CoPh,
    InPh,
    Bn,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailCause {
    /// An image that decrypts to ⊥.
    InvalidImage,
    /// A reported key outside its pair.
    KeyNotInPair,
    /// A combine result outside `{r₀, r₁}`.
    CombineResult,
    /// `d·(w₀ ⊕ w₁)` has the wrong parity.
    Parity,
    /// The last κ bits of `d` are all zero.
    ZeroSuffix,
    /// A reported string of the wrong length.
    Malformed,
    /// The server's table key authenticated more than one row.
    TagCollision,
    /// The server could not carry out an operation and gave up.
    ServerAbort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub cause: FailCause,
}

/// Which check a two-way client coin selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Std,
    Hadamard,
}

/// The three ways a Hadamard test turns `d` into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HadamardVariant {
    /// Honest state has relative phase 0; nothing is revealed.
    Unphased,
    /// Client reveals `θ₁ − θ₀`.
    Phased(PhasePair),
    /// Client reveals `θ₁ − θ₀ − δ` with `δ ∈ {0, 4, 1}` kept secret.
    Biased(PhasePair, u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionOptions {
    /// Records the transcript.
    pub record: bool,
    /// Overrides the dispatcher's choice (coins are still drawn).
    pub force: Option<Branch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientSecrets {
    pub helper: KeyPair,
    /// `K⁽⁰⁾ … K⁽ᴸ⁾`.
    pub keys: Vec<KeyPair>,
    /// `Θ⁽⁰⁾ … Θ⁽ᴸ⁾`, sampled before setup.
    pub thetas: Vec<PhasePair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientOutput {
    /// `θ⁽ⁱ⁾ = θ₁⁽ⁱ⁾ − θ₀⁽ⁱ⁾` for `i = 1..L`.
    pub thetas: Vec<Z8>,
    pub keys: Vec<KeyPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub client: ClientOutput,
    pub server: ServerOutput,
}

impl Outputs {
    /// Exact fidelity of the server's state with `⊗ |+_θ⁽ⁱ⁾⟩`.
    pub fn state_fidelity(&self) -> f64 {
        self.server.state.fidelity(
            &self.server.slots,
            &self.client.keys,
            &self.client.thetas,
            self.server.x_flip,
        )
    }

    /// `fidelity_ideal` of the server's decoded description, if it has one.
    pub fn decoded_fidelity(&self) -> Option<f64> {
        let decoded = self.server.decoded.as_ref()?;
        fidelity_ideal(decoded, &self.client.thetas).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub branch: Branch,
    pub round_type: RoundType,
    pub flag: Flag,
    pub score: Option<Score>,
    pub failure: Option<Failure>,
    /// The extra bias used in a quiz round.
    pub delta: Option<u8>,
    /// The coin of CoPhTest / BNTest, when reached.
    pub check: Option<Check>,
    pub outputs: Option<Outputs>,
}

/// The serializable part of an outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub branch: Branch,
    pub round_type: RoundType,
    pub flag: Flag,
    pub score: Option<Score>,
    pub failure: Option<Failure>,
    pub delta: Option<u8>,
    pub check: Option<Check>,
    pub client_thetas: Option<Vec<Z8>>,
    pub decoded: Option<PlusStateVector>,
}

impl SessionOutcome {
    pub fn summary(&self) -> OutcomeSummary {
        OutcomeSummary {
            branch: self.branch,
            round_type: self.round_type,
            flag: self.flag,
            score: self.score,
            failure: self.failure,
            delta: self.delta,
            check: self.check,
            client_thetas: self.outputs.as_ref().map(|o| o.client.thetas.clone()),
            decoded: self.outputs.as_ref().and_then(|o| o.server.decoded.clone()),
        }
    }
}

pub struct SessionRecord {
    pub outcome: SessionOutcome,
    pub transcript: Transcript,
}

type Step<T> = Result<T, Failure>;

fn fail<T>(stage: Stage, cause: FailCause) -> Step<T> {
    Err(Failure { stage, cause })
}

fn abort(stage: Stage) -> impl Fn(StateError) -> Failure {
    move |_| Failure {
        stage,
        cause: FailCause::ServerAbort,
    }
}

fn table_failure(stage: Stage, e: &TableError) -> Failure {
    let cause = match e {
        TableError::Collision { .. } => FailCause::TagCollision,
        _ => FailCause::ServerAbort,
    };
    Failure { stage, cause }
}

/// Client side of `K⁽ᶜᵒᵐᵇⁱⁿᵉᵈ⁾` bookkeeping.
#[derive(Debug, Clone)]
struct Combined {
    keys: KeyPair,
    phases: PhasePair,
}

impl Combined {
    fn new(keys: KeyPair, phases: PhasePair) -> Self {
        Self { keys, phases }
    }

    /// Appends gadget `(k, t)` given the reported outcome (`false` = r₀).
    fn absorb(&mut self, k: &KeyPair, t: PhasePair, crossed: bool) {
        self.keys.x0.extend_from(k.key(crossed));
        self.keys.x1.extend_from(k.key(!crossed));
        self.phases.theta0 += t.get(crossed);
        self.phases.theta1 += t.get(!crossed);
    }
}

/// One session between the client and a server strategy.
pub struct Session<'s> {
    params: SessionParams,
    strategy: &'s mut dyn Strategy,
    oracle: RandomOracle,
    client: ChaCha20Rng,
    server: ChaCha20Rng,
    transcript: Transcript,
    state: ServerState,
    secrets: Option<ClientSecrets>,
}

impl<'s> Session<'s> {
    pub fn new(params: SessionParams, strategy: &'s mut dyn Strategy, seed: Seed, record: bool) -> Self {
        Self {
            params,
            strategy,
            oracle: RandomOracle::new(seed.derive("oracle", 0)),
            client: seed.derive("client", 0).rng(),
            server: seed.derive("server", 0).rng(),
            transcript: Transcript::new(record),
            state: ServerState::default(),
            secrets: None,
        }
    }

    pub fn params(&self) -> SessionParams {
        self.params
    }

    pub fn oracle(&self) -> &RandomOracle {
        &self.oracle
    }

    pub fn state(&self) -> &ServerState {
        &self.state
    }

    pub fn secrets(&self) -> Option<&ClientSecrets> {
        self.secrets.as_ref()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    fn secrets_ref(&self) -> &ClientSecrets {
        self.secrets.as_ref().expect("setup has run")
    }

    /// `2 + L` NTCF evaluations; the client also samples every `Θ⁽ⁱ⁾` here.
    pub fn setup<N: Ntcf>(&mut self, ntcf: &N) -> Step<()> {
        let n = self.params.l + 2;
        let kappa = self.params.kappa;
        let thetas: Vec<PhasePair> = (0..=self.params.l)
            .map(|_| PhasePair::random(&mut self.client))
            .collect();
        let mut sks = Vec::with_capacity(n);
        let mut claws = Vec::with_capacity(n);
        let mut images = Vec::with_capacity(n);
        for j in 0..n {
            let (sk, pk) = ntcf
                .keygen(kappa, &mut self.client)
                .map_err(|_| Failure { stage: Stage::Setup, cause: FailCause::ServerAbort })?;
            self.transcript
                .record(Party::Client, format!("Setup.pk.{j}"), || json!(ntcf.encode_public_key(&pk)));
            let claw = ntcf.eval_claw(&pk, &mut self.server);
            claws.push(KeyPair::new(claw.x0, claw.x1).expect("claws are distinct"));
            images.push(claw.y);
            sks.push(sk);
        }
        self.state = ServerState::from_claws(&claws);
        drop(claws);
        self.strategy.on_setup(&mut self.state, &mut images, &mut self.server);
        let mut pairs = Vec::with_capacity(n);
        for (j, (sk, y)) in sks.iter().zip(&images).enumerate() {
            self.transcript
                .record(Party::Server, format!("Setup.y.{j}"), || json!(y));
            let (Some(x0), Some(x1)) = (ntcf.dec(sk, false, y), ntcf.dec(sk, true, y)) else {
                return fail(Stage::Setup, FailCause::InvalidImage);
            };
            pairs.push(KeyPair::new(x0, x1).map_err(|_| Failure {
                stage: Stage::Setup,
                cause: FailCause::InvalidImage,
            })?);
        }
        let helper = pairs.remove(0);
        self.secrets = Some(ClientSecrets {
            helper,
            keys: pairs,
            thetas,
        });
        Ok(())
    }

    /// Asks for a standard-basis measurement of `slot` and checks the reply.
    fn std_check(&mut self, stage: Stage, slot: usize, pair: &KeyPair, step: &str) -> Step<()> {
        let key = self.state.measure_std(slot, &mut self.server).map_err(abort(stage))?;
        let reply = self.strategy.on_std_report(slot, key, &mut self.server);
        self.transcript.record(Party::Server, step, || json!(reply));
        if pair.contains(&reply) {
            Ok(())
        } else {
            fail(stage, FailCause::KeyNotInPair)
        }
    }

    /// Standard-basis test of every remaining gadget (and the helper if present).
    pub fn stdb_test(&mut self, stage: Stage) -> Step<()> {
        let secrets = self.secrets_ref().clone();
        if self.state.holds(HELPER) {
            self.std_check(stage, HELPER, &secrets.helper, "StdBTest.key.helper")?;
        }
        for (i, pair) in secrets.keys.iter().enumerate() {
            self.std_check(stage, slot_of(i), pair, &format!("StdBTest.key.{i}"))?;
        }
        Ok(())
    }

    /// Phase tables for gadgets `0..=L`, then the unphased helper test.
    pub fn add_phase(&mut self) -> Step<()> {
        let stage = Stage::AddPhase;
        let secrets = self.secrets_ref().clone();
        let kappa = self.params.kappa;
        for (i, (k, theta)) in secrets.keys.iter().zip(&secrets.thetas).enumerate() {
            let table = make_phase_table(&secrets.helper, k, *theta, kappa, &self.oracle, &mut self.client)
                .expect("client tables are well formed");
            self.transcript
                .record(Party::Client, format!("AddPhase.table.{i}"), || json!(table));
            self.apply_table(i, &table)?;
        }
        self.strategy.on_tables_applied(&mut self.state);
        let verdict = self.hadamard_test(stage, HELPER, &secrets.helper, HadamardVariant::Unphased)?;
        debug_assert!(verdict.is_none());
        Ok(())
    }

    /// Server side of one phase table: decrypt under every helper branch,
    /// require agreement, and imprint the (strategy-chosen) phase.
    fn apply_table(&mut self, gadget: usize, table: &LookupTable) -> Step<()> {
        let stage = Stage::AddPhase;
        let slot = slot_of(gadget);
        let helper_keys = self.state.keys_at(HELPER).map_err(abort(stage))?;
        let targets = self.state.keys_at(slot).map_err(abort(stage))?;
        let mut phases: Vec<(bool, BitString, Option<Z8>)> = Vec::with_capacity(targets.len());
        for (label, key) in targets {
            let mut theta = None;
            for (_, h) in &helper_keys {
                let found = match decrypt_row(table, &h.concat(&key), &self.oracle) {
                    Ok((_, Plaintext::Phase(p))) => p,
                    Ok(_) => return fail(stage, FailCause::ServerAbort),
                    Err(e) => return Err(table_failure(stage, &e)),
                };
                match theta {
                    None => theta = Some(found),
                    Some(t) if t != found => return fail(stage, FailCause::ServerAbort),
                    _ => {}
                }
            }
            let theta = theta.expect("helper has at least one branch");
            let chosen = self.strategy.on_phase(gadget, label, theta);
            phases.push((label, key, chosen));
        }
        self.state
            .multiply_phase(slot, |label, key| {
                phases
                    .iter()
                    .find(|(l, k, _)| *l == label && k == key)
                    .and_then(|p| p.2)
                    .unwrap_or(Z8::ZERO)
            })
            .map_err(abort(stage))
    }

    /// One Hadamard test on `slot` against `keys`. Returns the score for the
    /// `δ = 1` variant.
    pub fn hadamard_test(
        &mut self,
        stage: Stage,
        slot: usize,
        keys: &KeyPair,
        variant: HadamardVariant,
    ) -> Step<Option<Score>> {
        let revealed = match variant {
            HadamardVariant::Unphased => None,
            HadamardVariant::Phased(p) => Some(p.relative()),
            HadamardVariant::Biased(p, delta) => Some(p.relative() - Z8::new(delta)),
        };
        if let Some(r) = revealed {
            self.transcript
                .record(Party::Client, format!("{stage:?}.hadamard.reveal"), || json!(r));
            let used = self.strategy.on_dephase(slot, r);
            self.state.dephase(slot, used).map_err(abort(stage))?;
        }
        let kappa = self.params.kappa;
        let pad = fresh_pad(&mut self.client, kappa);
        self.transcript
            .record(Party::Client, format!("{stage:?}.hadamard.pad"), || json!(pad));
        let d = self
            .state
            .measure_hadamard(slot, &pad, &self.oracle, &mut self.server)
            .map_err(abort(stage))?;
        let d = self.strategy.on_hadamard_report(slot, d, &mut self.server);
        self.transcript
            .record(Party::Server, format!("{stage:?}.hadamard.d"), || json!(d));

        let w0 = padded_word(&keys.x0, &pad, &self.oracle).expect("pad length within cut-off");
        let w1 = padded_word(&keys.x1, &pad, &self.oracle).expect("pad length within cut-off");
        if d.len() != w0.len() {
            return fail(stage, FailCause::Malformed);
        }
        if d.suffix(kappa).is_all_zero() {
            return fail(stage, FailCause::ZeroSuffix);
        }
        let parity = d.dot(&w0.xor(&w1));
        match variant {
            HadamardVariant::Biased(_, 1) => Ok(Some(if parity { Score::Lose } else { Score::Win })),
            HadamardVariant::Biased(_, 4) => {
                if parity {
                    Ok(None)
                } else {
                    fail(stage, FailCause::Parity)
                }
            }
            _ => {
                if parity {
                    fail(stage, FailCause::Parity)
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// Folds gadget `next` into `acc` through a fresh combine table keyed on
    /// the first component of the accumulated keys.
    #[allow(clippy::too_many_arguments)]
    fn combine_into(
        &mut self,
        stage: Stage,
        step: &str,
        prefix: &KeyPair,
        acc: &mut Combined,
        next: usize,
        phases: PhasePair,
        into_slot: usize,
    ) -> Step<()> {
        let secrets = self.secrets_ref();
        let k = secrets.keys[next].clone();
        let kappa = self.params.kappa;
        let r0 = BitString::random(&mut self.client, kappa);
        let r1 = loop {
            let r = BitString::random(&mut self.client, kappa);
            if r != r0 {
                break r;
            }
        };
        let table = make_combine_table(prefix, &k, &r0, &r1, kappa, &self.oracle, &mut self.client)
            .expect("client tables are well formed");
        self.transcript
            .record(Party::Client, format!("{step}.table"), || json!(table));
        let oracle = &self.oracle;
        let outcome = self
            .state
            .combine(
                into_slot,
                slot_of(next),
                |key| match decrypt_row(&table, key, oracle) {
                    Ok((_, Plaintext::Bits(r))) => Ok(r),
                    Ok(_) => Err(TableError::GroupMismatch),
                    Err(e) => Err(e),
                },
                &mut self.server,
            )
            .map_err(abort(stage))?;
        let r = outcome.map_err(|e| table_failure(stage, &e))?;
        let r = self.strategy.on_combine_report(r, &mut self.server);
        self.transcript.record(Party::Server, format!("{step}.r"), || json!(r));
        let crossed = if r == r0 {
            false
        } else if r == r1 {
            true
        } else {
            return fail(stage, FailCause::CombineResult);
        };
        acc.absorb(&k, phases, crossed);
        Ok(())
    }

    fn coin(&mut self) -> Check {
        if self.client.gen::<bool>() {
            Check::Hadamard
        } else {
            Check::Std
        }
    }

    /// Collective phase test. Returns the coin that was used.
    pub fn coph_test(&mut self) -> (Step<()>, Option<Check>) {
        let stage = Stage::CoPh;
        let secrets = self.secrets_ref().clone();
        let mut acc = Combined::new(secrets.keys[0].clone(), secrets.thetas[0]);
        for i in 1..=self.params.l {
            let step = format!("CoPhTest.combine.{i}");
            if let Err(e) = self.combine_into(stage, &step, &secrets.keys[0], &mut acc, i, secrets.thetas[i], slot_of(0)) {
                return (Err(e), None);
            }
        }
        let check = self.coin();
        self.transcript
            .record(Party::Client, "CoPhTest.check", || json!(check));
        let result = match check {
            Check::Std => self.std_check(stage, slot_of(0), &acc.keys, "CoPhTest.key"),
            Check::Hadamard => self
                .hadamard_test(stage, slot_of(0), &acc.keys, HadamardVariant::Phased(acc.phases))
                .map(|_| ()),
        };
        (result, Some(check))
    }

    /// Individual phase test on gadget 0. Returns `(verdict, δ)`.
    pub fn inph_test(&mut self) -> (Step<Option<Score>>, u8) {
        let delta = [0u8, 4, 1][self.client.gen_range(0..3)];
        let secrets = self.secrets_ref();
        let keys = secrets.keys[0].clone();
        let theta = secrets.thetas[0];
        let verdict = self.hadamard_test(Stage::InPh, slot_of(0), &keys, HadamardVariant::Biased(theta, delta));
        (verdict, delta)
    }

    /// Basis-norm test on gadgets `1..=L`. Returns the coin if reached.
    pub fn bn_test(&mut self) -> (Step<()>, Option<Check>) {
        let stage = Stage::Bn;
        let secrets = self.secrets_ref().clone();
        let l = self.params.l;
        self.transcript.record(Party::Client, "BNTest.phases", || {
            json!(secrets.thetas[1..].iter().map(|p| [p.theta0, p.theta1]).collect::<Vec<_>>())
        });
        for i in 1..=l {
            let removed = self.strategy.on_remove_phases(i, secrets.thetas[i]);
            if self.state.remove_phases(slot_of(i), removed).is_err() {
                return (fail(stage, FailCause::ServerAbort), None);
            }
        }
        let subset: Vec<usize> = loop {
            let s: Vec<usize> = (1..=l).filter(|_| self.client.gen::<bool>()).collect();
            if !s.is_empty() {
                break s;
            }
        };
        self.transcript
            .record(Party::Client, "BNTest.subset", || json!(subset));
        let first = subset[0];
        let mut acc = Combined::new(secrets.keys[first].clone(), PhasePair::default());
        for &i in &subset[1..] {
            let step = format!("BNTest.combine.{i}");
            if let Err(e) = self.combine_into(stage, &step, &secrets.keys[first], &mut acc, i, PhasePair::default(), slot_of(first)) {
                return (Err(e), None);
            }
        }
        for j in (1..=l).filter(|j| subset.binary_search(j).is_err()) {
            if let Err(e) = self.std_check(stage, slot_of(j), &secrets.keys[j], &format!("BNTest.key.{j}")) {
                return (Err(e), None);
            }
        }
        let check = self.coin();
        self.transcript.record(Party::Client, "BNTest.check", || json!(check));
        let result = match check {
            Check::Std => self.std_check(stage, slot_of(first), &acc.keys, "BNTest.combined"),
            Check::Hadamard => self
                .hadamard_test(stage, slot_of(first), &acc.keys, HadamardVariant::Unphased)
                .map(|_| ()),
        };
        (result, Some(check))
    }

    /// Comp round: reveal `K⁽¹⁾…K⁽ᴸ⁾` and hand the outputs over.
    pub fn output(&mut self) -> Outputs {
        let secrets = self.secrets_ref().clone();
        let keys: Vec<KeyPair> = secrets.keys[1..].to_vec();
        self.transcript.record(Party::Client, "Output.keys", || json!(keys));
        let slots: Vec<usize> = (1..=self.params.l).map(slot_of).collect();
        let gadgets: Option<Vec<_>> = slots.iter().map(|s| self.state.gadget_at(*s)).collect();
        let decoded = gadgets
            .and_then(|g| decode_output(&g, &keys).ok())
            .map(|d| d.state);
        let mut server = ServerOutput {
            state: std::mem::take(&mut self.state),
            slots,
            x_flip: false,
            decoded,
        };
        self.strategy.on_decode(&mut server);
        let thetas = secrets.thetas[1..].iter().map(PhasePair::relative).collect();
        Outputs {
            client: ClientOutput { thetas, keys },
            server,
        }
    }
}

/// Samples the dispatcher's branch: ½ early StdBTest, else ⅕ each of the rest.
pub fn sample_branch<R: Rng + ?Sized>(rng: &mut R) -> Branch {
    if rng.gen::<bool>() {
        return Branch::EarlyStdB;
    }
    *[Branch::StdB, Branch::CoPh, Branch::InPh, Branch::Bn, Branch::Output]
        .choose(rng)
        .expect("nonempty")
}

/// One full pre-RSPV session.
pub fn run_pre_rspv<N: Ntcf>(
    ntcf: &N,
    params: SessionParams,
    strategy: &mut dyn Strategy,
    seed: Seed,
    options: SessionOptions,
) -> SessionRecord {
    let mut session = Session::new(params, strategy, seed, options.record);
    let sampled = sample_branch(&mut session.client);
    let branch = options.force.unwrap_or(sampled);
    session
        .transcript
        .record(Party::Client, "PreRSPV.params", || json!({"L": params.l, "kappa": params.kappa}));

    let mut outcome = SessionOutcome {
        branch,
        round_type: branch.round_type(),
        flag: Flag::Pass,
        score: None,
        failure: None,
        delta: None,
        check: None,
        outputs: None,
    };
    let result: Step<()> = (|| {
        session.setup(ntcf)?;
        if branch == Branch::EarlyStdB {
            return session.stdb_test(Stage::EarlyStdB);
        }
        session.add_phase()?;
        match branch {
            Branch::EarlyStdB => unreachable!(),
            Branch::StdB => session.stdb_test(Stage::StdB),
            Branch::CoPh => {
                let (r, check) = session.coph_test();
                outcome.check = check;
                r
            }
            Branch::InPh => {
                let (r, delta) = session.inph_test();
                outcome.delta = Some(delta);
                outcome.score = r?;
                Ok(())
            }
            Branch::Bn => {
                let (r, check) = session.bn_test();
                outcome.check = check;
                r
            }
            Branch::Output => {
                outcome.outputs = Some(session.output());
                Ok(())
            }
        }
    })();
    if let Err(f) = result {
        outcome.flag = Flag::Fail;
        outcome.failure = Some(f);
        outcome.score = None;
        outcome.outputs = None;
    }
    session.transcript.record(Party::Client, "PreRSPV.outcome", || {
        json!({
            "round_type": outcome.round_type,
            "flag": outcome.flag,
            "score": outcome.score,
            "failure": outcome.failure,
        })
    });
    SessionRecord {
        outcome,
        transcript: session.into_transcript(),
    }
}
