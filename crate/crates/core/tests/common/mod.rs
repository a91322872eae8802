//! Scripted language-model stand-in used to record the synthetic UMaze
//! transcript under `data/transcripts/`.

#![allow(dead_code)]

use std::sync::Arc;

use langrid_core::adapters::{AdapterKind, AdapterSpec};
use langrid_core::agents::AgentKind;
use langrid_core::encoders::{EncoderKind, EncoderSpec};
use langrid_core::env::EnvironmentRef;
use langrid_core::gateway::{ChatRequest, Gateway, GatewayConfig, RecordingBackend, StubBackend, Transcript};
use langrid_core::instructions::{PlanMode, SessionConfig};
use langrid_core::runner::{ArmSpec, ExperimentConfig, InstructionSpec};

pub const SYNTHETIC_TRANSCRIPT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/transcripts/umaze_synthetic.json");

fn field<'a>(user: &'a str, name: &str) -> &'a str {
    user.lines()
        .find_map(|l| l.strip_prefix(name))
        .map(str::trim)
        .unwrap_or("")
}

/// Answers by role, keyed on the system prompt. Cell names like `r2c1` keep
/// every description distinct under bag-of-words matching.
pub fn scripted(request: &ChatRequest) -> Result<String, langrid_core::gateway::GatewayError> {
    let sys = request.system.as_str();
    let user = request.user.as_str();
    let reply = if sys.starts_with("You describe") {
        let state = field(user, "Current state:");
        let cell = state.trim_matches(['[', ']']).replace(',', "c");
        format!("The agent stands at cell r{cell} and may move {}.", field(user, "Legal actions:"))
    } else if sys.starts_with("You split") {
        "1. Climb the left corridor\n2. Finish in the bottom right corner".to_string()
    } else if sys.starts_with("You check") {
        if field(user, "Instruction:").contains("cell r") {
            "Yes, the instruction is completed. The named cell is reached.".to_string()
        } else {
            "No, the instruction is not completed. The instruction names no cell.".to_string()
        }
    } else if field(user, "Instruction:").contains("left") {
        "The agent stands at cell r2c1".to_string()
    } else {
        "The agent stands at cell r3c3".to_string()
    };
    Ok(reply)
}

fn bow() -> EncoderSpec {
    EncoderSpec {
        id: EncoderKind::Bow,
        dim: 0,
        vocab: None,
        model: None,
    }
}

/// Planner, validator, reflector and LLM adapter all in one small run.
pub fn synthetic_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new("synthetic_umaze", EnvironmentRef::new("maze", "umaze"), 400, 3);
    c.test_episodes = 20;
    c.encoder = bow();
    c.arms = vec![
        ArmSpec {
            agent: AgentKind::Qlearn,
            adapter: AdapterSpec::new(AdapterKind::Numeric),
        },
        ArmSpec {
            agent: AgentKind::Qlearn,
            adapter: AdapterSpec::new(AdapterKind::Llm),
        },
    ];
    c.instructions = Some(InstructionSpec {
        input: Some("Go around the inner wall and reach the goal".into()),
        import: None,
        adapter: AdapterSpec::new(AdapterKind::Llm),
        encoder: bow(),
        session: SessionConfig {
            plan: PlanMode::Llm,
            ..SessionConfig::default()
        },
        decisions: Vec::new(),
    });
    c
}

/// A gateway over the scripted stub plus the recorder that wraps it.
pub fn recording_gateway() -> (Arc<Gateway>, Arc<RecordingBackend>) {
    let recorder = Arc::new(RecordingBackend::new(Arc::new(StubBackend::new(scripted)), None));
    let gateway = Arc::new(Gateway::new(recorder.clone(), GatewayConfig::default()));
    (gateway, recorder)
}

pub fn load_synthetic() -> Transcript {
    Transcript::load(std::path::Path::new(SYNTHETIC_TRANSCRIPT)).expect("synthetic transcript")
}
