//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Runs without the libtest harness so the report is always printed. Exits
//! non-zero when any criterion fails.

mod common;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use langrid_core::adapters::{AdapterKind, AdapterSpec, RuleAdapter};
use langrid_core::agents::{Agent, AgentKind, DqnAgent, DqnConfig, Mlp, Obs, Transition};
use langrid_core::encoders::{EncoderKind, EncoderSpec};
use langrid_core::env::{builtin, registered_keys, EnvironmentRef, Environment, GridEnv};
use langrid_core::gateway::{Gateway, StubBackend, GatewayConfig};
use langrid_core::instructions::{published_session, InstructionEngine, MatchState, Matcher, PlanMode, SessionConfig};
use langrid_core::observations::{collect, CollectMode, ObservationStore};
use langrid_core::runner::{
    import_published, run, run_pipeline, test_policy, train_repeat, write_results, ArmSpec, AutoAccept,
    ExperimentConfig, ObsTable, Phase, Progress, RunContext, RunOutput,
};

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, measured: String, elapsed: Duration) {
        let line = format!(
            "{}  {name}: {measured} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.lines.push((pass, line));
    }
}

fn detail(text: impl AsRef<str>) {
    println!("      {}", text.as_ref());
}

fn bow() -> EncoderSpec {
    EncoderSpec {
        id: EncoderKind::Bow,
        dim: 0,
        vocab: None,
        model: None,
    }
}

fn rule_store(key: &str) -> ObservationStore {
    let (name, sub) = key.split_once('/').unwrap();
    let env = Arc::new(builtin(name, sub).unwrap());
    collect(&env, &RuleAdapter::new(env.clone()), &bow(), None, CollectMode::Enumerate, 0).unwrap()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn test_mean(out: &RunOutput, arm: &str) -> f64 {
    let a = out.arms.iter().find(|a| a.name == arm).expect("arm present");
    mean(a.test.iter().map(|e| e.reward))
}

// ---- matching oracle ------------------------------------------------------

fn tokens(text: &str) -> Vec<String> {
    text.chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn counts(text: &str) -> HashMap<String, f64> {
    let mut m = HashMap::new();
    for t in tokens(text) {
        *m.entry(t).or_insert(0.0) += 1.0;
    }
    m
}

/// Cosine of raw token counts, no vocabulary involved.
fn oracle_cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().map(|(k, x)| x * b.get(k).copied().unwrap_or(0.0)).sum();
    let na: f64 = a.values().map(|x| x * x).sum();
    let nb: f64 = b.values().map(|x| x * x).sum();
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

fn matching_oracle(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut agree, mut total) = (0, 0);
    let keys = registered_keys();
    for key in &keys {
        let store = rule_store(key);
        let words: Vec<String> = {
            let mut w: Vec<String> = store.texts().flat_map(tokens).collect();
            w.sort();
            w.dedup();
            w
        };
        let record_counts: Vec<_> = store.records.iter().map(|r| counts(&r.text)).collect();
        for _ in 0..100 {
            let n = rng.random_range(1..=8);
            let mut text: Vec<String> = (0..n).map(|_| words.choose(&mut rng).unwrap().clone()).collect();
            if rng.random_bool(0.3) {
                text[0] = text[0].to_uppercase() + ",";
            }
            let text = text.join(" ");
            let rejected: Vec<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(0..store.len())).collect();

            let matcher = Matcher::new(&store, &[&text], None).unwrap();
            let mut ms = matcher.start(&text).unwrap();
            for &i in &rejected {
                ms.adjust(i, 0.1);
            }

            let q = counts(&text);
            let mut penalty = vec![0.0; store.len()];
            for &i in &rejected {
                penalty[i] += 0.1;
            }
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (i, c) in record_counts.iter().enumerate() {
                let s = oracle_cosine(&q, c) - penalty[i];
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            agree += usize::from(ms.best() == best);
            total += 1;
        }
    }
    let elapsed = start.elapsed();
    report.check(
        "instruction matching equals brute-force argmax",
        agree == total && elapsed < Duration::from_secs(5),
        format!("{agree}/{total} agree over {} corpora (exact, < 5 s)", keys.len()),
        elapsed,
    );
}

// ---- Classroom fixture -----------------------------------------------------

fn classroom_grounding(report: &mut Report) {
    let start = Instant::now();
    let store = rule_store("classroom/default");
    let file = published_session("classroom").unwrap();
    let engine = InstructionEngine::import(&file, &store, None, SessionConfig::default(), None).unwrap();
    let got: Vec<String> = engine.session().items.iter().map(|i| i.states[0].id.clone()).collect();
    let elapsed = start.elapsed();
    report.check(
        "Classroom fixture grounds to [1,3] then [3,3]",
        got == ["[1,3]", "[3,3]"] && elapsed < Duration::from_secs(5),
        format!("got {}", got.join(" then ")),
        elapsed,
    );
}

// ---- baselines, shaping, arithmetic ----------------------------------------

fn timed_run(config: &ExperimentConfig) -> (RunOutput, Duration) {
    let start = Instant::now();
    let out = run(config, &RunContext::default()).expect("run succeeds");
    (out, start.elapsed())
}

fn baseline(report: &mut Report, name: &str, published: &str, floor: f64, limit: Duration) -> (RunOutput, Duration) {
    let config = import_published(published).unwrap();
    let (out, elapsed) = timed_run(&config);
    let m = test_mean(&out, "qlearn-numeric-plain");
    report.check(
        name,
        m >= floor && elapsed < limit,
        format!(
            "mean test reward {m:.4} (>= {floor}, {}x{} episodes, < {} s)",
            config.train_repeats,
            config.train_episodes,
            limit.as_secs()
        ),
        elapsed,
    );
    (out, elapsed)
}

fn shaping_early(report: &mut Report, out: &RunOutput, elapsed: Duration) {
    let arm = |n: &str| out.arms.iter().find(|a| a.name == n).unwrap();
    let (plain, instr) = (arm("qlearn-numeric-plain"), arm("qlearn-numeric-instr"));
    let early = |records: &[langrid_core::runner::EpisodeResult], r: u32, env_only: bool| {
        mean(
            records
                .iter()
                .filter(|e| e.repeat == r && e.episode < 500)
                .map(|e| if env_only { e.reward - e.shaping } else { e.reward }),
        )
    };
    let repeats = out.config.train_repeats;
    let mut wins = 0;
    let mut env_wins = 0;
    for r in 0..repeats {
        let (p, s) = (early(&plain.train, r, false), early(&instr.train, r, false));
        let (pe, se) = (early(&plain.train, r, true), early(&instr.train, r, true));
        wins += u32::from(s >= p);
        env_wins += u32::from(se >= pe);
        detail(format!(
            "seed {:>2}: shaped {s:.4} vs plain {p:.4} (environment reward only: {se:.4} vs {pe:.4})",
            out.config.seeds[r as usize]
        ));
    }
    detail(format!("environment reward only: {env_wins}/{repeats} pairs shaped >= plain (informational)"));
    report.check(
        "shaping raises early training reward",
        wins >= 8 && elapsed < Duration::from_secs(600),
        format!("{wins}/{repeats} seed pairs shaped >= plain over the first 500 episodes (>= 8/10)"),
        elapsed,
    );
}

fn shaping_removal(report: &mut Report, outputs: &[&RunOutput]) {
    let start = Instant::now();
    let mut clean = true;
    let mut checked = 0;
    for out in outputs {
        for arm in out.arms.iter().filter(|a| a.instructed) {
            checked += arm.test.len();
            clean &= arm.test.iter().all(|e| e.shaping == 0.0 && e.sub_goals_hit.is_empty() && e.phase == Phase::Test);
        }
    }
    let mut snapshots_equal = true;
    for agent in [AgentKind::Qlearn, AgentKind::Dqn] {
        let mut config = ExperimentConfig::new("removal", EnvironmentRef::new("maze", "umaze"), 300, 1);
        config.test_episodes = 50;
        config.dqn.hidden = vec![16];
        let file = published_session("umaze").unwrap();
        config = config.with_sub_goals(&file.sub_goals().unwrap());
        let env = config.environment.resolve().unwrap();
        let goals = config.resolve_sub_goals(&env).unwrap();
        let adapter = RuleAdapter::new(env.clone());
        let table = ObsTable::build(&env, &adapter, &config.encoder, None).unwrap();
        let progress = Progress::default();
        let trained = train_repeat(&config, &env, &table, agent, &goals, 0, &progress).unwrap();
        let before = trained.agent.snapshot();
        let test = test_policy(trained.agent.as_ref(), &config, &env, &table, &progress).unwrap();
        clean &= test.iter().all(|e| e.shaping == 0.0);
        snapshots_equal &= before == trained.agent.snapshot();
    }
    report.check(
        "shaping removed in testing, agent unchanged by testing",
        clean && snapshots_equal,
        format!("{checked} instructed test episodes with zero bonus: {clean}; snapshots equal: {snapshots_equal}"),
        start.elapsed(),
    );
}

// ---- LLM substitute suite -----------------------------------------------------

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn replay_into(dir: &Path) {
    let transcript = common::load_synthetic();
    let config = ExperimentConfig::from_toml(transcript.config.as_deref().unwrap()).unwrap();
    let ctx = RunContext {
        gateway: Some(Arc::new(Gateway::replay(transcript, true))),
        ..RunContext::default()
    };
    let out = run_pipeline(&config, &ctx, &mut AutoAccept).unwrap();
    write_results(dir, &out.run).unwrap();
}

fn llm_substitutes(report: &mut Report) {
    println!("INFO  results that depend on live model generations (LLM adapter and combined columns) are not reproducible at desk scale; the property suite below stands in for them");
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    replay_into(a.path());
    replay_into(b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    let identical = fa == fb && !fa.is_empty();
    detail(format!("transcript replay: {} result files, byte-identical across two executions: {identical}", fa.len()));

    let store = rule_store("maze/umaze");
    let mut bounded = true;
    for limit in 1..=5u32 {
        let stub = Arc::new(StubBackend::new(|r| {
            Ok(if r.system.starts_with("You check") {
                "No, the instruction is not completed. Wrong cell.".into()
            } else {
                "A wall is on your right".into()
            })
        }));
        let gateway = Arc::new(Gateway::new(stub.clone(), GatewayConfig::default()));
        let config = SessionConfig {
            round_limit: limit,
            plan: PlanMode::Direct,
            ..SessionConfig::default()
        };
        let engine = InstructionEngine::start("a wall is on your left\nthe goal is ahead", &store, Some(gateway), config, None).unwrap();
        let rounds: Vec<usize> = engine.session().items.iter().map(|i| i.rounds.len()).collect();
        let validator_calls = rounds.iter().sum::<usize>();
        bounded &= rounds.iter().all(|&r| r == limit as usize) && stub.calls() <= 2 * validator_calls;
    }
    detail(format!("always-rejecting validator, round limits 1..=5: loops stop at the limit: {bounded}"));

    let mut ms = MatchState::new(vec![0.90, 0.85]);
    let before = ms.best();
    ms.adjust(0, 0.1);
    let flipped = before == 0 && ms.best() == 1;
    detail(format!("0.90/0.85 with one rejection (delta 0.1): best {before} -> {}", ms.best()));
    report.check(
        "LLM-dependent cells replaced by replay, round-limit and adjustment properties",
        identical && bounded && flipped,
        format!("replay identical {identical}, rounds bounded {bounded}, argmax flips {flipped}"),
        start.elapsed(),
    );
}

// ---- DQN numerics -------------------------------------------------------------

fn half_sq(net: &Mlp, x: &[f64], y: f64) -> f64 {
    let o = net.predict(x)[0];
    0.5 * (o - y) * (o - y)
}

fn dqn_numerics(report: &mut Report, dqn_run: &RunOutput) {
    let start = Instant::now();
    let net = Mlp {
        sizes: vec![2, 1, 1],
        params: vec![0.7, -0.4, 0.2, 1.3, -0.1],
    };
    let (x, y) = ([0.9, 0.3], 0.25);
    let trace = net.forward(&x);
    let mut grad = vec![0.0; net.params.len()];
    net.backward(&trace, &[trace.output()[0] - y], &mut grad);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..net.params.len() {
        let (mut p, mut m) = (net.clone(), net.clone());
        p.params[i] += h;
        m.params[i] -= h;
        let numeric = (half_sq(&p, &x, y) - half_sq(&m, &x, y)) / (2.0 * h);
        worst = worst.max((grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-12));
    }
    detail(format!("toy net: worst relative gradient error {worst:.2e} (< 1e-4)"));

    let config = DqnConfig {
        lr: 1e-2,
        ..DqnConfig::default()
    };
    let mut agent = DqnAgent::new(4, 3, config, 7);
    let obs = Arc::new(Obs {
        key: "s".into(),
        vector: vec![1.0, 0.0, 0.5, 0.0],
    });
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let target = 0.7;
    for _ in 0..3000 {
        agent
            .learn(
                Transition {
                    obs: obs.clone(),
                    action: 1,
                    reward: target,
                    next: obs.clone(),
                    done: true,
                },
                &mut rng,
            )
            .unwrap();
    }
    let miss = (agent.values(&obs)[1] - target).abs();
    detail(format!("single transition: |Q - target| = {miss:.2e} (< 1e-3)"));

    let mut finite = agent.network().is_finite();
    let mut failed = 0;
    for arm in &dqn_run.arms {
        failed += arm.failed.len();
        let snap: serde_json::Value = serde_json::from_str(&arm.snapshot).unwrap();
        finite &= !snap.to_string().contains("null") && arm.train.iter().all(|e| e.reward.is_finite());
    }
    detail(format!(
        "DQN arms on UMaze: {} arms, {failed} failed repeats, all parameters finite: {finite}",
        dqn_run.arms.len()
    ));
    report.check(
        "DQN gradients, overfit and finiteness",
        worst < 1e-4 && miss < 1e-3 && finite && failed == 0,
        format!("gradient error {worst:.1e}, overfit miss {miss:.1e}, finite {finite}"),
        start.elapsed(),
    );
}

// ---- FrozenLake slips ---------------------------------------------------------

fn frozenlake_slips(report: &mut Report) {
    let start = Instant::now();
    let mut env = GridEnv::new(Arc::new(builtin("frozenlake", "4x4").unwrap()));
    let mut tally = [0usize; 3];
    let mut steps = 0;
    let mut episode = 0u64;
    env.reset(episode);
    while steps < 30_000 {
        let action = steps % 4;
        let intended = env.spec().action_set[action];
        let out = env.step(action).unwrap();
        let slot = if out.executed == intended {
            0
        } else if out.executed == intended.turn_left() {
            1
        } else {
            assert_eq!(out.executed, intended.turn_right());
            2
        };
        tally[slot] += 1;
        steps += 1;
        if out.terminal {
            episode += 1;
            env.reset(episode);
        }
    }
    let freqs: Vec<f64> = tally.iter().map(|&c| c as f64 / steps as f64).collect();
    let ok = freqs.iter().all(|f| (f - 1.0 / 3.0).abs() <= 0.02);
    report.check(
        "FrozenLake slip frequencies",
        ok,
        format!(
            "intended {:.4}, left {:.4}, right {:.4} over {steps} steps (1/3 +- 0.02)",
            freqs[0], freqs[1], freqs[2]
        ),
        start.elapsed(),
    );
}

// ---- protocol -------------------------------------------------------------------

fn protocol(report: &mut Report, outputs: &[&RunOutput]) {
    let start = Instant::now();
    let mut counts_ok = true;
    let mut arms = 0;
    for out in outputs {
        let c = &out.config;
        for arm in &out.arms {
            arms += 1;
            let ok_repeats = c.train_repeats as usize - arm.failed.len();
            counts_ok &= arm.train.len() == ok_repeats * c.train_episodes as usize;
            counts_ok &= arm.test.len() == (c.test_repeats * c.test_episodes) as usize;
        }
    }
    detail(format!("{arms} arms: record counts equal repeats x episodes: {counts_ok}"));

    let mut config = import_published("smoke_umaze").unwrap();
    config.train_episodes = 500;
    config.instruction_episode_budget = 100;
    config.arms.push(ArmSpec {
        agent: AgentKind::Dqn,
        adapter: AdapterSpec::new(AdapterKind::Rule),
    });
    config.dqn.hidden = vec![16];
    let mut dirs = Vec::new();
    for workers in [1, 4] {
        config.workers = workers;
        let dir = tempfile::tempdir().unwrap();
        let mut out = run(&config, &RunContext::default()).unwrap();
        // the worker count is the only difference between the two configs
        out.config.workers = 0;
        write_results(dir.path(), &out).unwrap();
        dirs.push(dir);
    }
    let identical = files(dirs[0].path()) == files(dirs[1].path());
    detail(format!("same config and seeds on 1 and 4 workers: result files byte-identical: {identical}"));
    report.check(
        "protocol arithmetic and reproducibility",
        counts_ok && identical,
        format!("counts {counts_ok}, byte-identical {identical}"),
        start.elapsed(),
    );
}

fn main() {
    println!("acceptance suite");
    let mut report = Report { lines: Vec::new() };

    matching_oracle(&mut report);
    classroom_grounding(&mut report);

    let (umaze, umaze_time) = baseline(&mut report, "UMaze Q-learning baseline", "baseline_umaze", 0.9, Duration::from_secs(600));
    let (smoke, _) = baseline(&mut report, "UMaze smoke baseline", "smoke_umaze", 0.8, Duration::from_secs(60));
    let (double_t, _) = baseline(&mut report, "Double-T Q-learning baseline", "baseline_double_t", 0.9, Duration::from_secs(900));

    // computed from the UMaze baseline run, so it shares that run's time
    shaping_early(&mut report, &umaze, umaze_time);

    let mut dqn_config = import_published("smoke_umaze").unwrap();
    dqn_config.arms = vec![ArmSpec {
        agent: AgentKind::Dqn,
        adapter: AdapterSpec::new(AdapterKind::Rule),
    }];
    dqn_config.train_episodes = 600;
    dqn_config.instruction_episode_budget = 120;
    dqn_config.test_episodes = 100;
    let (dqn_run, _) = timed_run(&dqn_config);

    shaping_removal(&mut report, &[&umaze, &smoke, &double_t, &dqn_run]);
    llm_substitutes(&mut report);
    dqn_numerics(&mut report, &dqn_run);
    frozenlake_slips(&mut report);
    protocol(&mut report, &[&umaze, &smoke, &double_t, &dqn_run]);

    let failed = report.lines.iter().filter(|(p, _)| !p).count();
    println!("{} criteria, {} passed, {failed} failed", report.lines.len(), report.lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
