use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{episode_seed, ArmSpec, EpisodeResult, ExperimentConfig, Phase, Progress, RunError};
use crate::adapters::{self, Adapter};
use crate::agents::{linear_epsilon, Agent, AgentKind, DqnAgent, Obs, QTableAgent, Transition};
use crate::encoders::{Encoder, EncoderKind, EncoderSpec, Vocabulary};
use crate::env::{Environment, EnvironmentSpec, GridEnv};
use crate::gateway::{EmbeddingBackend, Gateway};

/// Runtime services a run may need beyond its config.
#[derive(Clone, Default)]
pub struct RunContext {
    pub gateway: Option<Arc<Gateway>>,
    pub embeddings: Option<Arc<dyn EmbeddingBackend>>,
    /// Where LLM adapter caches live; in memory when unset.
    pub cache_dir: Option<PathBuf>,
    pub progress: Arc<Progress>,
}

/// Observation of every reachable cell, computed once per adapter.
#[derive(Debug, Clone)]
pub struct ObsTable {
    by_cell: Vec<Option<Arc<Obs>>>,
    dim: usize,
}

impl ObsTable {
    pub fn build(
        env: &EnvironmentSpec,
        adapter: &dyn Adapter,
        encoder: &EncoderSpec,
        embeddings: Option<Arc<dyn EmbeddingBackend>>,
    ) -> Result<Self, RunError> {
        let mut texts = Vec::new();
        for state in env.enumerate_states() {
            let legal = env.legal_actions(&state)?;
            let text = adapter.describe(&state, &[], &legal)?;
            texts.push((env.cell_of(&state)?, text));
        }
        let encoder = match (encoder.id, &encoder.vocab) {
            (EncoderKind::Bow, vocab) if vocab.as_ref().is_none_or(|v| v.is_empty()) => Encoder::bow(Vocabulary::build(texts.iter().map(|(_, t)| t.as_str()))),
            _ => Encoder::from_spec(encoder, embeddings)?,
        };
        let mut by_cell = vec![None; env.layout.len()];
        for (cell, text) in texts {
            let vector = encoder.encode(&text)?;
            by_cell[cell] = Some(Arc::new(Obs { key: text, vector }));
        }
        Ok(Self {
            by_cell,
            dim: encoder.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, cell: usize) -> Result<Arc<Obs>, RunError> {
        self.by_cell
            .get(cell)
            .and_then(|o| o.clone())
            .ok_or_else(|| RunError::Incompatible(format!("no observation for cell {cell}")))
    }
}

pub struct TrainedRepeat {
    pub repeat: u32,
    pub agent: Box<dyn Agent>,
    pub records: Vec<EpisodeResult>,
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub name: String,
    pub agent: AgentKind,
    pub adapter: String,
    pub instructed: bool,
    /// Records of successful repeats, ordered by (repeat, episode).
    pub train: Vec<EpisodeResult>,
    pub test: Vec<EpisodeResult>,
    pub best_repeat: u32,
    pub failed: Vec<(u32, String)>,
    /// Snapshot of the selected agent.
    pub snapshot: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub arms: Vec<ArmResult>,
}

fn new_agent(config: &ExperimentConfig, kind: AgentKind, n_actions: usize, dim: usize, seed: u64) -> Box<dyn Agent> {
    match kind {
        AgentKind::Qlearn => Box::new(QTableAgent::new(n_actions, config.qlearn)),
        AgentKind::Dqn => Box::new(DqnAgent::new(dim, n_actions, config.dqn.clone(), seed ^ 0x5EED)),
    }
}

/// Trains one repeat. `sub_goals` holds cells per sub-goal in plan order;
/// empty for a plain arm.
pub fn train_repeat(
    config: &ExperimentConfig,
    env_spec: &Arc<EnvironmentSpec>,
    table: &ObsTable,
    agent_kind: AgentKind,
    sub_goals: &[Vec<usize>],
    repeat: u32,
    progress: &Progress,
) -> Result<TrainedRepeat, RunError> {
    let seed = config.seeds[repeat as usize];
    let n_actions = env_spec.action_set.len();
    let mut agent = new_agent(config, agent_kind, n_actions, table.dim(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = GridEnv::new(env_spec.clone());
    let eps = config.epsilon;
    let mut records = Vec::with_capacity(config.train_episodes as usize);

    for episode in 0..config.train_episodes {
        if progress.is_cancelled() {
            return Err(RunError::Cancelled);
        }
        let epsilon = linear_epsilon(episode, config.train_episodes, eps.start, eps.end, eps.fraction);
        let shaped = !sub_goals.is_empty() && episode < config.instruction_episode_budget;
        let mut hits = vec![false; if shaped { sub_goals.len() } else { 0 }];
        let mut target = 0;
        let state = env.reset(episode_seed(seed, episode));
        let mut obs = table.get(env_spec.cell_of(&state)?)?;
        let (mut total, mut shaping, mut goal) = (0.0, 0.0, false);
        loop {
            let action = agent.act(&obs, epsilon, &mut rng);
            let out = env.step(action)?;
            let cell = env_spec.cell_of(&out.next_state)?;
            let mut reward = out.reward;
            if shaped && target < sub_goals.len() && sub_goals[target].contains(&cell) {
                reward += config.shaping_bonus;
                shaping += config.shaping_bonus;
                hits[target] = true;
                target += 1;
            }
            let next = table.get(cell)?;
            let t = Transition {
                obs,
                action,
                reward,
                next: next.clone(),
                done: out.terminal,
            };
            agent
                .learn(t, &mut rng)
                .map_err(|source| RunError::Agent { repeat, source })?;
            total += reward;
            goal |= out.goal_reached;
            obs = next;
            if out.terminal {
                break;
            }
        }
        records.push(EpisodeResult {
            repeat,
            episode,
            phase: Phase::Train,
            reward: total,
            shaping,
            steps: env.steps_taken(),
            goal_reached: goal,
            sub_goals_hit: hits,
        });
        progress.episode();
    }
    Ok(TrainedRepeat {
        repeat,
        agent,
        records,
    })
}

/// Greedy, unshaped episodes; the agent is only read.
pub fn test_policy(
    agent: &dyn Agent,
    config: &ExperimentConfig,
    env_spec: &Arc<EnvironmentSpec>,
    table: &ObsTable,
    progress: &Progress,
) -> Result<Vec<EpisodeResult>, RunError> {
    if agent.n_actions() != env_spec.action_set.len() {
        return Err(RunError::Incompatible(format!(
            "agent has {} actions, environment {}",
            agent.n_actions(),
            env_spec.action_set.len()
        )));
    }
    let mut env = GridEnv::new(env_spec.clone());
    let mut records = Vec::with_capacity((config.test_repeats * config.test_episodes) as usize);
    for (repeat, &seed) in config.test_seeds.iter().enumerate() {
        for episode in 0..config.test_episodes {
            if progress.is_cancelled() {
                return Err(RunError::Cancelled);
            }
            let state = env.reset(episode_seed(seed, episode));
            let mut obs = table.get(env_spec.cell_of(&state)?)?;
            if obs.vector.len() != table.dim() {
                return Err(RunError::Incompatible("observation width changed".into()));
            }
            let (mut total, mut goal) = (0.0, false);
            loop {
                let out = env.step(agent.greedy(&obs))?;
                total += out.reward;
                goal |= out.goal_reached;
                if out.terminal {
                    break;
                }
                obs = table.get(env_spec.cell_of(&out.next_state)?)?;
            }
            records.push(EpisodeResult {
                repeat: repeat as u32,
                episode,
                phase: Phase::Test,
                reward: total,
                shaping: 0.0,
                steps: env.steps_taken(),
                goal_reached: goal,
                sub_goals_hit: Vec::new(),
            });
            progress.episode();
        }
    }
    Ok(records)
}

/// Mean reward over the final tenth of a repeat's training episodes
/// (at least one episode).
pub fn selection_score(records: &[EpisodeResult]) -> f64 {
    if records.is_empty() {
        return f64::NEG_INFINITY;
    }
    let tail = records.len().div_ceil(10);
    let last = &records[records.len() - tail..];
    last.iter().map(|r| r.reward).sum::<f64>() / tail as f64
}

/// Repeat with the highest selection score; ties go to the lowest repeat.
pub fn select_best<'a>(repeats: impl IntoIterator<Item = (u32, &'a [EpisodeResult])>) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (repeat, records) in repeats {
        let score = selection_score(records);
        match best {
            Some((r, s)) if score < s || (score == s && repeat > r) => {}
            _ => best = Some((repeat, score)),
        }
    }
    best.map(|(r, _)| r)
}

fn arm_name(spec: &ArmSpec, instructed: bool) -> String {
    format!(
        "{}-{}-{}",
        spec.agent.as_str(),
        spec.adapter.kind.as_str(),
        if instructed { "instr" } else { "plain" }
    )
}

fn train_all(
    config: &ExperimentConfig,
    env: &Arc<EnvironmentSpec>,
    table: &ObsTable,
    agent: AgentKind,
    sub_goals: &[Vec<usize>],
    progress: &Progress,
) -> Vec<Result<TrainedRepeat, RunError>> {
    let one = |r: u32| train_repeat(config, env, table, agent, sub_goals, r, progress);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .expect("thread pool");
        pool.install(|| (0..config.train_repeats).into_par_iter().map(one).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..config.train_repeats).map(one).collect()
    }
}

/// Least number of successful repeats for an arm to count: 80%, rounded up.
fn min_successes(repeats: u32) -> usize {
    (repeats as usize * 4).div_ceil(5)
}

pub fn run(config: &ExperimentConfig, ctx: &RunContext) -> Result<RunOutput, RunError> {
    config.validate()?;
    let env = config.environment.resolve()?;
    let sub_goals = config.resolve_sub_goals(&env)?;
    let variants: &[bool] = if sub_goals.is_empty() { &[false] } else { &[false, true] };
    let per_arm = config.train_repeats as u64 * config.train_episodes as u64
        + config.test_repeats as u64 * config.test_episodes as u64;
    let progress = &ctx.progress;
    progress.set_total(per_arm * (config.arms.len() * variants.len()) as u64);

    let mut arms = Vec::new();
    for spec in &config.arms {
        let adapter = adapters::build(&spec.adapter, env.clone(), ctx.gateway.clone(), ctx.cache_dir.as_deref())?;
        let table = ObsTable::build(&env, adapter.as_ref(), &config.encoder, ctx.embeddings.clone())?;
        for &instructed in variants {
            let name = arm_name(spec, instructed);
            let goals: &[Vec<usize>] = if instructed { &sub_goals } else { &[] };
            let mut trained = Vec::new();
            let mut failed = Vec::new();
            for (r, outcome) in train_all(config, &env, &table, spec.agent, goals, progress)
                .into_iter()
                .enumerate()
            {
                match outcome {
                    Ok(t) => trained.push(t),
                    Err(RunError::Cancelled) => return Err(RunError::Cancelled),
                    Err(e) => {
                        log::warn!("{name}: repeat {r} failed: {e}");
                        failed.push((r as u32, e.to_string()));
                    }
                }
            }
            if trained.len() < min_successes(config.train_repeats) {
                return Err(RunError::TooManyFailures {
                    arm: name,
                    ok: trained.len(),
                    total: config.train_repeats as usize,
                });
            }
            let best = select_best(trained.iter().map(|t| (t.repeat, t.records.as_slice())))
                .expect("at least one repeat");
            let chosen = trained.iter().find(|t| t.repeat == best).expect("selected repeat exists");
            let test = test_policy(chosen.agent.as_ref(), config, &env, &table, progress)?;
            let snapshot = chosen.agent.snapshot();
            arms.push(ArmResult {
                name,
                agent: spec.agent,
                adapter: spec.adapter.kind.as_str().to_string(),
                instructed,
                train: trained.into_iter().flat_map(|t| t.records).collect(),
                test,
                best_repeat: best,
                failed,
                snapshot,
            });
            progress.arm();
        }
    }
    Ok(RunOutput {
        config: config.clone(),
        arms,
    })
}
