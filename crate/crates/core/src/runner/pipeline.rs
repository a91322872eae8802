use std::path::Path;

use super::{run, ExperimentConfig, RunContext, RunError, RunOutput, ScriptedDecision};
use crate::adapters;
use crate::instructions::{published_session, Decision, InstructionEngine, SessionFile, SessionItem};
use crate::observations::{collect, CollectMode};

/// Decides every instruction still open after the scripted decisions.
pub trait Confirmer {
    fn decide(&mut self, item: &SessionItem) -> Decision;
}

/// Accepts whatever the engine proposes.
pub struct AutoAccept;

impl Confirmer for AutoAccept {
    fn decide(&mut self, _: &SessionItem) -> Decision {
        Decision::Accept
    }
}

impl<F: FnMut(&SessionItem) -> Decision> Confirmer for F {
    fn decide(&mut self, item: &SessionItem) -> Decision {
        self(item)
    }
}

#[derive(Debug)]
pub struct PipelineOutput {
    /// The config as trained: sub-goals filled in from the session.
    pub config: ExperimentConfig,
    /// The input config with every applied decision scripted, so a replay
    /// needs no confirmer.
    pub replay_config: ExperimentConfig,
    pub session: Option<SessionFile>,
    pub run: RunOutput,
}

/// Grounds the config's instructions (if any), then runs the protocol.
pub fn run_pipeline(
    config: &ExperimentConfig,
    ctx: &RunContext,
    confirmer: &mut dyn Confirmer,
) -> Result<PipelineOutput, RunError> {
    config.validate()?;
    let mut effective = config.clone();
    let mut replay_config = config.clone();
    let mut session = None;
    if let Some(spec) = &config.instructions {
        let env = config.environment.resolve()?;
        let adapter = adapters::build(&spec.adapter, env.clone(), ctx.gateway.clone(), ctx.cache_dir.as_deref())?;
        let store = collect(&env, adapter.as_ref(), &spec.encoder, ctx.embeddings.clone(), CollectMode::Enumerate, 0)?;
        let mut engine = match (&spec.input, &spec.import) {
            (Some(input), _) => InstructionEngine::start(
                input,
                &store,
                ctx.gateway.clone(),
                spec.session.clone(),
                ctx.embeddings.clone(),
            )?,
            (None, Some(name)) => {
                let file = match published_session(name) {
                    Ok(f) => f,
                    Err(_) => SessionFile::load(Path::new(name))?,
                };
                InstructionEngine::import(&file, &store, ctx.gateway.clone(), spec.session.clone(), ctx.embeddings.clone())?
            }
            (None, None) => unreachable!("validated"),
        };
        let mut decisions = Vec::new();
        for d in &spec.decisions {
            engine.confirm(d.order, d.decision()?)?;
            decisions.push(d.clone());
        }
        for idx in 0..engine.session().items.len() {
            while !engine.session().items[idx].confirmed {
                let item = &engine.session().items[idx];
                let order = item.instruction.order;
                let decision = confirmer.decide(item);
                decisions.push(ScriptedDecision::from_decision(order, &decision));
                engine.confirm(order, decision)?;
            }
        }
        if let Some(s) = replay_config.instructions.as_mut() {
            s.decisions = decisions;
        }
        effective = effective.with_sub_goals(&engine.sub_goals());
        session = Some(engine.session().to_file());
    }
    let output = run(&effective, ctx)?;
    Ok(PipelineOutput {
        config: effective,
        replay_config,
        session,
        run: output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{AdapterKind, AdapterSpec};
    use crate::env::EnvironmentRef;
    use crate::runner::InstructionSpec;

    fn config(env: EnvironmentRef, input: Option<&str>, import: Option<&str>) -> ExperimentConfig {
        let mut c = ExperimentConfig::new("pipe", env, 60, 2);
        c.test_episodes = 5;
        c.instructions = Some(InstructionSpec {
            input: input.map(str::to_string),
            import: import.map(str::to_string),
            adapter: AdapterSpec::new(AdapterKind::Rule),
            encoder: crate::encoders::EncoderSpec {
                id: crate::encoders::EncoderKind::Bow,
                dim: 0,
                vocab: None,
                model: None,
            },
            session: Default::default(),
            decisions: Vec::new(),
        });
        c
    }

    #[test]
    fn import_grounds_published_states() {
        let cfg = config(EnvironmentRef::new("classroom", "default"), None, Some("classroom"));
        let out = run_pipeline(&cfg, &RunContext::default(), &mut AutoAccept).unwrap();
        let best: Vec<_> = out.config.sub_goals.iter().map(|g| g.states[0].as_str()).collect();
        assert_eq!(best, ["[1,3]", "[3,3]"]);
        assert_eq!(out.run.arms.len(), 2);
        assert!(out.run.arms[1].instructed);
    }

    #[test]
    fn decisions_are_recorded_for_replay() {
        let cfg = config(EnvironmentRef::new("maze", "umaze"), Some("a wall is on your left\nthe goal is ahead"), None);
        let mut first = true;
        let mut confirmer = |_: &SessionItem| {
            if std::mem::take(&mut first) {
                Decision::Reject
            } else {
                Decision::Accept
            }
        };
        let out = run_pipeline(&cfg, &RunContext::default(), &mut confirmer).unwrap();
        let actions: Vec<_> = out.replay_config.instructions.as_ref().unwrap().decisions
            .iter()
            .map(|d| (d.order, d.action.as_str()))
            .collect();
        assert_eq!(actions, vec![(1, "reject"), (1, "accept"), (2, "accept")]);

        let mut never = |_: &SessionItem| -> Decision { panic!("replay must not ask") };
        let again = run_pipeline(&out.replay_config, &RunContext::default(), &mut never).unwrap();
        assert_eq!(again.config.sub_goals, out.config.sub_goals);
        assert_eq!(again.run.arms[1].train, out.run.arms[1].train);
    }
}
