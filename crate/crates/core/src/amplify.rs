//! Two-stage amplification of pre-RSPV sessions and the CVQC driver.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::StrategySpec;
use crate::ntcf::Ntcf;
use crate::protocol::{
    run_pre_rspv, Failure, Flag, Outputs, RoundType, Score, SessionOptions, SessionParams, OPT, P_QUIZ,
};
use crate::seed::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmplificationConfig {
    #[serde(rename = "N_temp")]
    pub n_temp: usize,
    pub win_slack: f64,
    #[serde(rename = "N_rspv")]
    pub n_rspv: usize,
}

impl Default for AmplificationConfig {
    fn default() -> Self {
        Self {
            n_temp: 2000,
            win_slack: 0.02,
            n_rspv: 100,
        }
    }
}

/// The on-disk run description: session shape, amplification knobs and seed.
/// Absent fields fall back to the caller's values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<usize>,
    #[serde(flatten)]
    pub amplification: AmplificationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<Seed>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("N_temp must be at least 1")]
    NoSessions,
    #[error("N_rspv must be at least 1")]
    NoRepetitions,
    #[error("win_slack must lie in (0, OPT), got {0}")]
    Slack(f64),
}

impl AmplificationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_temp == 0 {
            return Err(ConfigError::NoSessions);
        }
        if self.n_rspv == 0 {
            return Err(ConfigError::NoRepetitions);
        }
        if !(self.win_slack > 0.0 && self.win_slack < OPT) {
            return Err(ConfigError::Slack(self.win_slack));
        }
        Ok(())
    }

    /// Wins at or below this count fail the batch.
    pub fn win_threshold(&self) -> f64 {
        self.n_temp as f64 * P_QUIZ * (OPT - self.win_slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum TempFailure {
    /// Session `index` failed.
    Session { index: usize, failure: Failure },
    /// Too few wins.
    Wins { wins: usize },
}

#[derive(Debug, Clone)]
pub struct TempOutcome {
    pub flag: Flag,
    /// `Some(Comp)` when the picked session was a comp round, `None` for ⊥.
    pub round_type: Option<RoundType>,
    pub outputs: Option<Outputs>,
    pub wins: usize,
    pub sessions_run: usize,
    pub failure: Option<TempFailure>,
}

impl TempOutcome {
    pub fn is_comp(&self) -> bool {
        self.flag == Flag::Pass && self.round_type == Some(RoundType::Comp)
    }
}

/// `N_temp` sessions, a win-count check, then a uniformly picked session.
pub fn run_pre_rspv_temp<N: Ntcf>(
    ntcf: &N,
    params: SessionParams,
    cfg: &AmplificationConfig,
    strategy: &StrategySpec,
    seed: Seed,
) -> TempOutcome {
    let mut wins = 0usize;
    let mut comp: BTreeMap<usize, Outputs> = BTreeMap::new();
    for index in 0..cfg.n_temp {
        let mut s = strategy.build(params.l);
        let rec = run_pre_rspv(ntcf, params, &mut s, seed.derive("session", index as u64), SessionOptions::default());
        let o = rec.outcome;
        if let Some(failure) = o.failure {
            return TempOutcome {
                flag: Flag::Fail,
                round_type: None,
                outputs: None,
                wins,
                sessions_run: index + 1,
                failure: Some(TempFailure::Session { index, failure }),
            };
        }
        wins += usize::from(o.score == Some(Score::Win));
        if let Some(out) = o.outputs {
            comp.insert(index, out);
        }
    }
    if wins as f64 <= cfg.win_threshold() {
        return TempOutcome {
            flag: Flag::Fail,
            round_type: None,
            outputs: None,
            wins,
            sessions_run: cfg.n_temp,
            failure: Some(TempFailure::Wins { wins }),
        };
    }
    let pick = seed.derive("pick", 0).rng().gen_range(0..cfg.n_temp);
    let outputs = comp.remove(&pick);
    TempOutcome {
        flag: Flag::Pass,
        round_type: outputs.as_ref().map(|_| RoundType::Comp),
        outputs,
        wins,
        sessions_run: cfg.n_temp,
        failure: None,
    }
}

#[derive(Debug, Clone)]
pub struct RspvOutcome {
    pub flag: Flag,
    pub outputs: Option<Outputs>,
    /// Number of preRSPVTemp calls made.
    pub calls: usize,
    pub last_failure: Option<TempFailure>,
}

/// Repeats `temp(t)` up to `N_rspv` times, stopping at the first comp.
pub fn run_rspv_with<F>(cfg: &AmplificationConfig, mut temp: F) -> RspvOutcome
where
    F: FnMut(usize) -> TempOutcome,
{
    for t in 0..cfg.n_rspv {
        let o = temp(t);
        if o.flag == Flag::Fail {
            return RspvOutcome {
                flag: Flag::Fail,
                outputs: None,
                calls: t + 1,
                last_failure: o.failure,
            };
        }
        if o.is_comp() {
            return RspvOutcome {
                flag: Flag::Pass,
                outputs: o.outputs,
                calls: t + 1,
                last_failure: None,
            };
        }
    }
    RspvOutcome {
        flag: Flag::Fail,
        outputs: None,
        calls: cfg.n_rspv,
        last_failure: None,
    }
}

pub fn run_rspv<N: Ntcf>(
    ntcf: &N,
    params: SessionParams,
    cfg: &AmplificationConfig,
    strategy: &StrategySpec,
    seed: Seed,
) -> RspvOutcome {
    run_rspv_with(cfg, |t| {
        run_pre_rspv_temp(ntcf, params, cfg, strategy, seed.derive("temp", t as u64))
    })
}

/// A gadget-assisted verifier run on the prepared states.
pub trait VerifierPlugin {
    fn verify(&self, outputs: &Outputs) -> bool;
}

/// Accepts iff the server's output state has fidelity at least `threshold`
/// with the client's target. Reads the simulated state directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityVerifier {
    pub threshold: f64,
}

impl Default for FidelityVerifier {
    fn default() -> Self {
        Self { threshold: 1.0 - 1e-9 }
    }
}

impl VerifierPlugin for FidelityVerifier {
    fn verify(&self, outputs: &Outputs) -> bool {
        outputs.state_fidelity() >= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone)]
pub struct CvqcOutcome {
    pub verdict: Verdict,
    pub rspv: RspvOutcome,
}

/// RSPV on `circuit_size` gadgets followed by the verifier.
pub fn run_cvqc<N: Ntcf, V: VerifierPlugin + ?Sized>(
    ntcf: &N,
    circuit_size: usize,
    kappa: usize,
    cfg: &AmplificationConfig,
    strategy: &StrategySpec,
    verifier: &V,
    seed: Seed,
) -> Result<CvqcOutcome, crate::protocol::ParamsError> {
    let params = SessionParams::new(circuit_size, kappa)?;
    let rspv = run_rspv(ntcf, params, cfg, strategy, seed);
    let accept = rspv.flag == Flag::Pass && rspv.outputs.as_ref().is_some_and(|o| verifier.verify(o));
    Ok(CvqcOutcome {
        verdict: if accept { Verdict::Accept } else { Verdict::Reject },
        rspv,
    })
}

/// `e^{−δ²N/4}` as a bound on `Pr[#{sᵢ = 1} ≥ (1+δ)pN]` for streaming samples.
/// The expression does not involve `p` and is only a valid tail bound when
/// `p` is large; the standard multiplicative form is `e^{−δ²pN/(2+δ)}`.
pub fn chernoff_bound(p: f64, delta: f64, n: u64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p must lie in (0, 1)");
    assert!(delta >= 0.0, "delta must be non-negative");
    assert!(n >= 1, "N must be positive");
    (-delta * delta * n as f64 / 4.0).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ntcf::MockNtcf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn config_validation_and_threshold() {
        let cfg = AmplificationConfig::default();
        cfg.validate().unwrap();
        assert!((cfg.win_threshold() - 2000.0 * 0.1 * (OPT - 0.02)).abs() < 1e-9);
        let bad = AmplificationConfig { win_slack: 0.3, ..cfg };
        assert_eq!(bad.validate(), Err(ConfigError::Slack(0.3)));
        assert!(AmplificationConfig { n_temp: 0, ..cfg }.validate().is_err());
        let json = serde_json::to_value(cfg).unwrap();
        assert_eq!(json["N_temp"], 2000);
        assert_eq!(json["N_rspv"], 100);
    }

    #[test]
    fn run_config_reads_partial_files() {
        let rc: RunConfig = serde_json::from_str(r#"{"L":4,"kappa":32,"N_temp":50,"seed":"ab"}"#).unwrap();
        assert_eq!((rc.l, rc.kappa), (Some(4), Some(32)));
        assert_eq!(rc.amplification.n_temp, 50);
        assert_eq!(rc.amplification.win_slack, 0.02);
        assert_eq!(rc.seed, Some("ab".parse().unwrap()));
        let empty: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(empty.amplification, AmplificationConfig::default());
    }

    #[test]
    fn chernoff_examples() {
        assert_eq!(chernoff_bound(0.1, 0.0, 10), 1.0);
        assert!((chernoff_bound(0.1, 0.5, 2000) - (-125.0f64).exp()).abs() < 1e-60);
        assert!(chernoff_bound(0.1, 0.5, 2000) < 1e-50);
    }

    #[test]
    fn chernoff_dominates_empirical_tails_for_large_p() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (p, n, delta) = (0.7, 200u64, 0.1);
        let streams = 10_000;
        let cut = (1.0 + delta) * p * n as f64;
        let mut hits = 0usize;
        for _ in 0..streams {
            let ones = (0..n).filter(|_| rng.gen::<f64>() < p).count();
            hits += usize::from(ones as f64 >= cut);
        }
        assert!((hits as f64 / streams as f64) <= chernoff_bound(p, delta, n));
    }

    #[test]
    fn chernoff_formula_ignores_p() {
        assert_eq!(chernoff_bound(0.1, 0.5, 200), chernoff_bound(0.9, 0.5, 200));
    }

    fn stub(flag: Flag, comp: bool) -> TempOutcome {
        TempOutcome {
            flag,
            round_type: comp.then_some(RoundType::Comp),
            outputs: None,
            wins: 0,
            sessions_run: 1,
            failure: None,
        }
    }

    #[test]
    fn rspv_loop_semantics() {
        let cfg = AmplificationConfig { n_rspv: 5, ..Default::default() };
        let all_bot = run_rspv_with(&cfg, |_| stub(Flag::Pass, false));
        assert_eq!(all_bot.flag, Flag::Fail);
        assert_eq!(all_bot.calls, 5);
        let third = run_rspv_with(&cfg, |t| stub(Flag::Pass, t == 2));
        assert_eq!((third.flag, third.calls), (Flag::Pass, 3));
        let fails = run_rspv_with(&cfg, |t| stub(if t == 1 { Flag::Fail } else { Flag::Pass }, t == 3));
        assert_eq!((fails.flag, fails.calls), (Flag::Fail, 2));
    }

    #[test]
    fn temp_rejects_random_responses_immediately() {
        let params = SessionParams::new(2, 16).unwrap();
        let cfg = AmplificationConfig { n_temp: 200, ..Default::default() };
        let o = run_pre_rspv_temp(&MockNtcf, params, &cfg, &StrategySpec::RandomResponse, Seed::from_u64(3));
        assert_eq!(o.flag, Flag::Fail);
        assert!(o.sessions_run < 50);
    }

    #[test]
    fn honest_temp_with_generous_slack_accepts_and_carries_outputs() {
        let params = SessionParams::new(2, 32).unwrap();
        let cfg = AmplificationConfig { n_temp: 300, win_slack: 0.2, n_rspv: 100 };
        let mut comps = 0;
        for s in 0..5 {
            let o = run_pre_rspv_temp(&MockNtcf, params, &cfg, &StrategySpec::Honest, Seed::from_u64(s));
            assert_eq!(o.flag, Flag::Pass);
            if let Some(out) = &o.outputs {
                comps += 1;
                assert!((out.state_fidelity() - 1.0).abs() < 1e-12);
            }
        }
        assert!(comps <= 5);
    }
}
