use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rspv_core::adversary::StrategySpec;
use rspv_core::amplify::{run_cvqc, run_rspv, FidelityVerifier, RunConfig, Verdict};
use rspv_core::harness::{estimate_rates, growth_ratios, scaling_bench, EstimateOptions, ExperimentReport, Rate};
use rspv_core::ntcf::MockNtcf;
use rspv_core::protocol::{run_pre_rspv, Branch, Flag, SessionOptions, SessionParams};
use rspv_core::seed::Seed;
use rspv_core::selftest;

const PROTOCOL_FAIL: u8 = 1;
const USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "rspv", version, about = "Classical-client remote state preparation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Number of output gadgets.
    #[arg(long = "L", default_value_t = 2)]
    l: usize,
    #[arg(long, default_value_t = 16)]
    kappa: usize,
    /// 64 hex digits, or any string (hashed).
    #[arg(long, default_value = "00")]
    seed: Seed,
    /// Strategy name or JSON, e.g. '{"attack":"phase_offset","g":"bump:3:1"}'.
    #[arg(long, default_value = "honest")]
    strategy: StrategySpec,
}

#[derive(Subcommand)]
enum Command {
    /// One session; transcript as JSON lines on stdout.
    Run {
        #[command(flatten)]
        common: Common,
        /// Force a dispatcher branch (early_std_b, std_b, co_ph, in_ph, bn, output).
        #[arg(long, value_parser = parse_branch)]
        force: Option<Branch>,
    },
    /// Monte-Carlo rate estimates as a JSON report.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        sessions: usize,
        #[arg(long, value_parser = parse_branch)]
        force: Option<Branch>,
        #[arg(long)]
        threads: Option<usize>,
        /// Include wall-clock time per session.
        #[arg(long)]
        timing: bool,
        /// Print a plain-text table instead of JSON.
        #[arg(long)]
        human: bool,
    },
    /// RSPV amplification, optionally followed by CVQC verification.
    Amplify {
        #[command(flatten)]
        common: Common,
        /// JSON file path or inline JSON with any of L, kappa, N_temp,
        /// win_slack, N_rspv, seed. Values here override the flags.
        #[arg(long)]
        config: Option<String>,
        /// Run the verifier on the prepared states.
        #[arg(long)]
        cvqc: bool,
    },
    /// Per-session time of the state-preparation branch over an L grid.
    Bench {
        #[arg(long, default_value_t = 16)]
        kappa: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,128,256,512,1024")]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        sessions: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value = "00")]
        seed: Seed,
    },
    /// Brute-force cross-checks.
    Selftest {
        #[arg(long, default_value = "00")]
        seed: Seed,
    },
}

fn parse_branch(s: &str) -> Result<Branch, String> {
    let key: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_lowercase();
    Ok(match key.as_str() {
        "earlystdb" => Branch::EarlyStdB,
        "stdb" => Branch::StdB,
        "coph" => Branch::CoPh,
        "inph" => Branch::InPh,
        "bn" => Branch::Bn,
        "output" => Branch::Output,
        _ => return Err(format!("unknown branch {s:?}")),
    })
}

fn load_config(arg: Option<&str>) -> Result<RunConfig, String> {
    let cfg: RunConfig = match arg {
        None => RunConfig::default(),
        Some(s) if s.trim_start().starts_with('{') => serde_json::from_str(s).map_err(|e| e.to_string())?,
        Some(path) => {
            let text = std::fs::read_to_string(PathBuf::from(path)).map_err(|e| format!("{path}: {e}"))?;
            serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?
        }
    };
    cfg.amplification.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn params(c: &Common) -> Result<SessionParams, String> {
    SessionParams::new(c.l, c.kappa).map_err(|e| e.to_string())
}

fn print_json(v: &impl serde::Serialize) {
    let s = serde_json::to_string_pretty(v).expect("reports serialize");
    println!("{s}");
}

fn print_table(r: &ExperimentReport) {
    let rate = |x: &Rate| format!("{:.5}  [{:.5}, {:.5}]  ({}/{})", x.value, x.ci95[0], x.ci95[1], x.successes, x.trials);
    println!("L={} kappa={} sessions={} seed={}", r.config.l, r.config.kappa, r.config.sessions, r.config.seed);
    println!("{:<16}{}", "pass rate", rate(&r.pass_rate));
    println!("{:<16}{}", "win rate", rate(&r.win_rate));
    println!("{:<16}{}", "quiz win rate", rate(&r.quiz_win_rate));
    for (rt, t) in &r.by_round {
        println!("{:<16}{:>8} sessions {:>8} passed {:>8} won", format!("{rt:?}"), t.sessions, t.passed, t.wins);
    }
    for (cause, n) in &r.fail_causes {
        println!("{:<16}{n}", format!("{cause:?}"));
    }
    if let Some(f) = r.comp_fidelity_mean {
        println!("{:<16}{f:.12}", "comp fidelity");
    }
    if let Some(t) = r.seconds_per_session {
        println!("{:<16}{:.3} ms", "per session", t * 1e3);
    }
}

fn execute(cmd: Command) -> Result<u8, String> {
    match cmd {
        Command::Run { common, force } => {
            let p = params(&common)?;
            let mut s = common.strategy.build(p.l);
            let rec = run_pre_rspv(&MockNtcf, p, &mut s, common.seed, SessionOptions { record: true, force });
            let mut out = std::io::stdout().lock();
            out.write_all(rec.transcript.to_jsonl().as_bytes()).map_err(|e| e.to_string())?;
            Ok(0)
        }
        Command::Stats {
            common,
            sessions,
            force,
            threads,
            timing,
            human,
        } => {
            let p = params(&common)?;
            if sessions == 0 {
                return Err("--sessions must be at least 1".into());
            }
            let options = EstimateOptions { force, threads, timing };
            let report = estimate_rates(&MockNtcf, p, sessions, &common.strategy, common.seed, options);
            if human {
                print_table(&report);
            } else {
                print_json(&report);
            }
            Ok(0)
        }
        Command::Amplify { mut common, config, cvqc } => {
            let file = load_config(config.as_deref())?;
            common.l = file.l.unwrap_or(common.l);
            common.kappa = file.kappa.unwrap_or(common.kappa);
            common.seed = file.seed.unwrap_or(common.seed);
            let cfg = file.amplification;
            let p = params(&common)?;
            if cvqc {
                let o = run_cvqc(&MockNtcf, p.l, p.kappa, &cfg, &common.strategy, &FidelityVerifier::default(), common.seed)
                    .map_err(|e| e.to_string())?;
                print_json(&json!({
                    "config": cfg,
                    "verdict": o.verdict,
                    "rspv_flag": o.rspv.flag,
                    "calls": o.rspv.calls,
                    "failure": o.rspv.last_failure,
                }));
                Ok(if o.verdict == Verdict::Accept { 0 } else { PROTOCOL_FAIL })
            } else {
                let o = run_rspv(&MockNtcf, p, &cfg, &common.strategy, common.seed);
                print_json(&json!({
                    "config": cfg,
                    "flag": o.flag,
                    "calls": o.calls,
                    "failure": o.last_failure,
                    "fidelity": o.outputs.as_ref().map(|x| x.state_fidelity()),
                    "thetas": o.outputs.as_ref().map(|x| x.client.thetas.clone()),
                }));
                Ok(if o.flag == Flag::Pass { 0 } else { PROTOCOL_FAIL })
            }
        }
        Command::Bench {
            kappa,
            grid,
            sessions,
            reps,
            seed,
        } => {
            if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err("--grid must be strictly ascending".into());
            }
            let points = scaling_bench(&MockNtcf, kappa, &grid, sessions, reps, seed).map_err(|e| e.to_string())?;
            print_json(&json!({
                "kappa": kappa,
                "points": points,
                "growth_ratios": growth_ratios(&points),
            }));
            Ok(0)
        }
        Command::Selftest { seed } => {
            let results = selftest::run_all(seed);
            let ok = results.iter().all(|r| r.passed);
            print_json(&results);
            Ok(if ok { 0 } else { PROTOCOL_FAIL })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(USAGE)
        }
    }
}
