//! Parallel Monte-Carlo estimation and timing.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::StrategySpec;
use crate::ntcf::Ntcf;
use crate::protocol::{
    run_pre_rspv, Branch, FailCause, Flag, RoundType, Score, SessionOptions, SessionOutcome, SessionParams,
};
use crate::seed::Seed;

/// 95% two-sided normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: usize,
    pub trials: usize,
    pub value: f64,
    pub ci95: [f64; 2],
}

impl Rate {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (lo, hi) = wilson_interval(successes, trials, Z95);
        let value = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        Self {
            successes,
            trials,
            value,
            ci95: [lo, hi],
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci95[0] <= x && x <= self.ci95[1]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub sessions: usize,
    pub passed: usize,
    pub wins: usize,
}

impl Tally {
    fn add(&mut self, o: &SessionOutcome) {
        self.sessions += 1;
        self.passed += usize::from(o.flag == Flag::Pass);
        self.wins += usize::from(o.score == Some(Score::Win));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(rename = "L")]
    pub l: usize,
    pub kappa: usize,
    pub sessions: usize,
    pub strategy: StrategySpec,
    pub seed: Seed,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<Branch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub pass_rate: Rate,
    /// Wins among all sessions.
    pub win_rate: Rate,
    /// Wins among quiz sessions.
    pub quiz_win_rate: Rate,
    pub by_round: BTreeMap<RoundType, Tally>,
    pub by_branch: BTreeMap<Branch, Tally>,
    /// Quiz sessions keyed by the extra bias `δ`.
    pub by_delta: BTreeMap<u8, Tally>,
    pub fail_causes: BTreeMap<FailCause, usize>,
    pub comp_fidelity_mean: Option<f64>,
    pub comp_fidelity_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds_per_session: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EstimateOptions {
    pub force: Option<Branch>,
    /// Worker threads. `None` uses the global pool.
    pub threads: Option<usize>,
    pub timing: bool,
}

/// The session seed for index `i` of a batch.
pub fn session_seed(seed: Seed, i: usize) -> Seed {
    seed.derive("session", i as u64)
}

/// Runs `sessions` independent sessions in parallel, returned in index order.
pub fn run_many<N: Ntcf>(
    ntcf: &N,
    params: SessionParams,
    sessions: usize,
    strategy: &StrategySpec,
    seed: Seed,
    force: Option<Branch>,
) -> Vec<SessionOutcome> {
    (0..sessions)
        .into_par_iter()
        .map(|i| {
            let mut s = strategy.build(params.l);
            let options = SessionOptions { record: false, force };
            run_pre_rspv(ntcf, params, &mut s, session_seed(seed, i), options).outcome
        })
        .collect()
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Aggregates outcomes into a report. Deterministic in the outcome order.
pub fn summarize(config: ExperimentConfig, outcomes: &[SessionOutcome]) -> ExperimentReport {
    let mut total = Tally::default();
    let mut by_round = BTreeMap::new();
    let mut by_branch = BTreeMap::new();
    let mut by_delta = BTreeMap::new();
    let mut fail_causes = BTreeMap::new();
    let mut fid_sum = 0.0;
    let mut fid_min: Option<f64> = None;
    let mut fid_n = 0usize;
    for o in outcomes {
        total.add(o);
        by_round.entry(o.round_type).or_insert_with(Tally::default).add(o);
        by_branch.entry(o.branch).or_insert_with(Tally::default).add(o);
        if let (RoundType::Quiz, Some(d)) = (o.round_type, o.delta) {
            by_delta.entry(d).or_insert_with(Tally::default).add(o);
        }
        if let Some(f) = o.failure {
            *fail_causes.entry(f.cause).or_insert(0) += 1;
        }
        if let Some(out) = &o.outputs {
            let f = out.state_fidelity();
            fid_sum += f;
            fid_n += 1;
            fid_min = Some(fid_min.map_or(f, |m| m.min(f)));
        }
    }
    let quiz = by_round.get(&RoundType::Quiz).copied().unwrap_or_default();
    ExperimentReport {
        config,
        pass_rate: Rate::new(total.passed, total.sessions),
        win_rate: Rate::new(total.wins, total.sessions),
        quiz_win_rate: Rate::new(quiz.wins, quiz.sessions),
        by_round,
        by_branch,
        by_delta,
        fail_causes,
        comp_fidelity_mean: (fid_n > 0).then(|| fid_sum / fid_n as f64),
        comp_fidelity_min: fid_min,
        seconds_per_session: None,
    }
}

pub fn estimate_rates<N: Ntcf>(
    ntcf: &N,
    params: SessionParams,
    sessions: usize,
    strategy: &StrategySpec,
    seed: Seed,
    options: EstimateOptions,
) -> ExperimentReport {
    let start = Instant::now();
    let outcomes = in_pool(options.threads, || run_many(ntcf, params, sessions, strategy, seed, options.force));
    let elapsed = start.elapsed();
    let config = ExperimentConfig {
        l: params.l,
        kappa: params.kappa,
        sessions,
        strategy: strategy.clone(),
        seed,
        force: options.force,
    };
    let mut report = summarize(config, &outcomes);
    if options.timing && sessions > 0 {
        report.seconds_per_session = Some(elapsed.as_secs_f64() / sessions as f64);
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    #[serde(rename = "L")]
    pub l: usize,
    /// Best per-session wall time over the repetitions.
    pub seconds: f64,
}

/// Honest sessions forced down the output branch, timed single-threaded.
/// Each repetition times a batch of `sessions` sessions at every grid point in
/// turn, so slow drift hits all points alike; the fastest batch per point wins.
pub fn scaling_bench<N: Ntcf>(
    ntcf: &N,
    kappa: usize,
    grid: &[usize],
    sessions: usize,
    reps: usize,
    seed: Seed,
) -> Result<Vec<BenchPoint>, crate::protocol::ParamsError> {
    let options = SessionOptions {
        record: false,
        force: Some(Branch::Output),
    };
    let params = grid
        .iter()
        .map(|&l| SessionParams::new(l, kappa))
        .collect::<Result<Vec<_>, _>>()?;
    let sessions = sessions.max(1);
    let mut best = vec![Duration::MAX; grid.len()];
    for rep in 0..reps.max(1) {
        for (slot, &p) in params.iter().enumerate() {
            let start = Instant::now();
            for i in 0..sessions {
                let mut s = StrategySpec::Honest.build(p.l);
                let rec = run_pre_rspv(ntcf, p, &mut s, seed.derive("bench", (rep * sessions + i) as u64), options);
                std::hint::black_box(rec.outcome.flag);
            }
            best[slot] = best[slot].min(start.elapsed());
        }
    }
    Ok(grid
        .iter()
        .zip(best)
        .map(|(&l, t)| BenchPoint {
            l,
            seconds: t.as_secs_f64() / sessions as f64,
        })
        .collect())
}

/// Growth of time relative to growth of `L` between consecutive grid points;
/// `1.0` everywhere means exactly linear.
pub fn growth_ratios(points: &[BenchPoint]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| (w[1].seconds / w[0].seconds) / (w[1].l as f64 / w[0].l as f64))
        .collect()
}
