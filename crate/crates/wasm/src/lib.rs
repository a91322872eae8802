//! Three demo operations for a static page: preview a grid and describe a
//! cell, rank cells for an instruction (with rejections), and train a
//! Q-learning agent with and without the bundled sub-goals.
//!
//! Each `*_json` function is plain Rust; the exported wrappers only turn
//! errors into strings.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use langrid_core::adapters::{Adapter, RuleAdapter};
use langrid_core::encoders::{EncoderKind, EncoderSpec};
use langrid_core::env::{registered_keys, render_svg, CellHighlight, EnvironmentRef, EnvironmentSpec};
use langrid_core::instructions::{published_session, Matcher};
use langrid_core::observations::{collect, CollectMode};
use langrid_core::runner::{rolling_mean, run, ExperimentConfig, RunContext};

/// Penalty per rejection, as in interactive sessions.
const DELTA: f64 = 0.1;
const SHOWN: usize = 5;

type Result<T> = std::result::Result<T, String>;

fn env(key: &str) -> Result<Arc<EnvironmentSpec>> {
    let (name, sub) = key.split_once('/').ok_or_else(|| format!("expected name/sub_config, got {key:?}"))?;
    EnvironmentRef::new(name, sub).resolve().map_err(|e| e.to_string())
}

fn session_name(key: &str) -> Option<&'static str> {
    match key {
        "classroom/default" => Some("classroom"),
        "frozenlake/4x4" | "frozenlake/4x4-deterministic" => Some("frozenlake"),
        "maze/umaze" => Some("umaze"),
        "maze/double-t" => Some("double_t"),
        _ => None,
    }
}

#[derive(Serialize)]
struct Described {
    state: String,
    text: String,
    legal: Vec<&'static str>,
    svg: String,
}

pub fn describe_json(key: &str, state: &str) -> Result<String> {
    let spec = env(key)?;
    let s = if state.is_empty() { spec.start.clone() } else { spec.parse_state(state).map_err(|e| e.to_string())? };
    let legal = spec.legal_actions(&s).map_err(|e| e.to_string())?;
    let text = RuleAdapter::new(spec.clone()).describe(&s, &[], &legal).map_err(|e| e.to_string())?;
    let out = Described {
        state: s.id.clone(),
        legal: legal.iter().map(|d| d.name()).collect(),
        svg: render_svg(&spec, Some(&s), &[]),
        text,
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[derive(Serialize)]
struct Ranked {
    state: String,
    text: String,
    cosine: f64,
    penalty: f64,
    score: f64,
}

#[derive(Serialize)]
struct Ranking {
    candidates: Vec<Ranked>,
    svg: String,
}

/// Ranks every cell's rule text against `text`; each id in `rejected`
/// (repeats allowed) costs that cell one penalty.
pub fn match_json(key: &str, text: &str, rejected: &[String]) -> Result<String> {
    let spec = env(key)?;
    let bow = EncoderSpec {
        id: EncoderKind::Bow,
        dim: 0,
        vocab: None,
        model: None,
    };
    let store = collect(&spec, &RuleAdapter::new(spec.clone()), &bow, None, CollectMode::Enumerate, 0)
        .map_err(|e| e.to_string())?;
    let matcher = Matcher::new(&store, &[text], None).map_err(|e| e.to_string())?;
    let mut ms = matcher.start(text).map_err(|e| e.to_string())?;
    for id in rejected {
        let i = matcher.store().position(id).ok_or_else(|| format!("unknown state {id}"))?;
        ms.adjust(i, DELTA);
    }
    let store = matcher.store();
    let candidates: Vec<Ranked> = ms
        .candidates(store, SHOWN)
        .into_iter()
        .map(|c| Ranked {
            text: store.records[c.index].text.clone(),
            state: c.state_id,
            cosine: c.cosine,
            penalty: c.penalty,
            score: c.score,
        })
        .collect();
    let marks: Vec<CellHighlight> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            Some(CellHighlight {
                state: spec.parse_state(&c.state).ok()?,
                label: format!("{}", i + 1),
                color: if i == 0 { "#d9480f".into() } else { "#f59f00".into() },
            })
        })
        .collect();
    let svg = render_svg(&spec, None, &marks);
    Ok(serde_json::to_string(&Ranking { candidates, svg }).expect("serializes"))
}

#[derive(Serialize)]
struct Curves {
    window: usize,
    plain: Vec<f64>,
    /// Empty when the environment has no bundled sub-goals.
    instructed: Vec<f64>,
    sub_goals: Vec<Vec<String>>,
    plain_test: f64,
    instructed_test: Option<f64>,
}

/// One numeric Q-learning repeat, shaped by the bundled session's sub-goals
/// for the first fifth of the episodes.
pub fn train_json(key: &str, episodes: u32, seed: u64) -> Result<String> {
    let spec = env(key)?;
    let (name, sub) = (spec.name.clone(), spec.sub_config.clone());
    let mut config = ExperimentConfig::new("demo", EnvironmentRef::new(&name, &sub), episodes.clamp(10, 20_000), 1);
    config.seeds = vec![seed];
    config.test_episodes = 100;
    if let Some(file) = session_name(key).and_then(|n| published_session(n).ok()) {
        let goals = file.sub_goals().map_err(|e| e.to_string())?;
        config = config.with_sub_goals(&goals);
    }
    let out = run(&config, &RunContext::default()).map_err(|e| e.to_string())?;
    let window = (config.train_episodes as usize / 20).max(1);
    let curve = |instructed: bool| {
        out.arms
            .iter()
            .find(|a| a.instructed == instructed)
            .map(|a| {
                let r: Vec<f64> = a.train.iter().map(|e| e.reward).collect();
                let test = a.test.iter().map(|e| e.reward).sum::<f64>() / a.test.len().max(1) as f64;
                (rolling_mean(&r, window), test)
            })
    };
    let (plain, plain_test) = curve(false).expect("plain arm always runs");
    let instr = curve(true);
    let curves = Curves {
        window,
        plain,
        instructed: instr.as_ref().map(|c| c.0.clone()).unwrap_or_default(),
        sub_goals: config.sub_goals.iter().map(|g| g.states.clone()).collect(),
        plain_test,
        instructed_test: instr.map(|c| c.1),
    };
    Ok(serde_json::to_string(&curves).expect("serializes"))
}

#[wasm_bindgen]
pub fn environments() -> String {
    serde_json::to_string(&registered_keys()).expect("serializes")
}

#[wasm_bindgen]
pub fn describe(key: &str, state: &str) -> std::result::Result<String, JsError> {
    describe_json(key, state).map_err(|e| JsError::new(&e))
}

/// `rejected` is a JSON array of state ids.
#[wasm_bindgen]
pub fn match_instruction(key: &str, text: &str, rejected: &str) -> std::result::Result<String, JsError> {
    let rejected: Vec<String> = if rejected.trim().is_empty() {
        Vec::new()
    } else {
        serde_json::from_str(rejected).map_err(|e| JsError::new(&e.to_string()))?
    };
    match_json(key, text, &rejected).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn train(key: &str, episodes: u32, seed: u64) -> std::result::Result<String, JsError> {
    train_json(key, episodes, seed).map_err(|e| JsError::new(&e))
}
