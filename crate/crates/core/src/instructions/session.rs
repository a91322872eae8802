use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Candidate, MatchState, Matcher, SessionError};
use crate::encoders::EncoderKind;
use crate::env::EnvState;
use crate::gateway::{EmbeddingBackend, Gateway, GatewayError, Verdict, MAX_PLAN_STEPS};
use crate::observations::ObservationStore;

pub const SESSION_VERSION: u32 = 1;

const GENERIC_CRITIQUE: &str = "The validator's answer could not be read; treating the match as wrong.";
const CANDIDATES_SHOWN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstructionSource {
    UserDirect,
    LlmPlanned,
    LlmRefined,
    UserEdited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub source: InstructionSource,
    /// The user input this instruction was planned from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// 1-based position in the plan.
    pub order: u32,
    /// Number of refinements applied.
    #[serde(default)]
    pub round: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// Each non-empty input line is one instruction.
    #[default]
    Direct,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Penalty added to a rejected candidate.
    pub delta: f64,
    pub round_limit: u32,
    /// Candidates this close to the best join the sub-goal.
    pub tie_margin: f64,
    pub max_states: usize,
    pub auto_confirm: bool,
    pub plan: PlanMode,
    /// Store texts shown to the reflector.
    pub examples: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            round_limit: 3,
            tie_margin: 0.02,
            max_states: 3,
            auto_confirm: false,
            plan: PlanMode::Direct,
            examples: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reviewer {
    Validator,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub round: u32,
    pub reviewer: Reviewer,
    pub instruction: String,
    pub candidate: String,
    pub score: f64,
    pub accept: bool,
    pub critique: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemStatus {
    /// The validator accepted the candidate.
    Accepted,
    /// No validator ran.
    Unchecked,
    /// Every round was rejected; the best remaining candidate is shown.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionItem {
    /// The working instruction (possibly refined).
    pub instruction: Instruction,
    /// Text as planned or entered.
    pub original: String,
    pub rounds: Vec<Round>,
    pub candidates: Vec<Candidate>,
    /// Proposed sub-goal states, best first.
    pub states: Vec<EnvState>,
    pub status: ItemStatus,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSession {
    pub environment: String,
    pub sub_config: String,
    pub user_input: String,
    pub adapter_id: String,
    pub encoder: String,
    pub items: Vec<SessionItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGoal {
    pub instruction: Instruction,
    pub states: Vec<EnvState>,
    pub confirmed: bool,
}

impl InstructionSession {
    /// Confirmed sub-goals in plan order.
    pub fn sub_goals(&self) -> Vec<SubGoal> {
        self.items
            .iter()
            .filter(|i| i.confirmed)
            .map(|i| SubGoal {
                instruction: i.instruction.clone(),
                states: i.states.clone(),
                confirmed: true,
            })
            .collect()
    }

    pub fn all_confirmed(&self) -> bool {
        self.items.iter().all(|i| i.confirmed)
    }

    pub fn to_file(&self) -> SessionFile {
        SessionFile {
            version: SESSION_VERSION,
            environment: self.environment.clone(),
            sub_config: self.sub_config.clone(),
            user_input: self.user_input.clone(),
            instructions: self
                .items
                .iter()
                .map(|i| FileInstruction {
                    order: i.instruction.order,
                    text: i.instruction.text.clone(),
                    source: i.instruction.source,
                    states: i.states.iter().map(|s| s.id.clone()).collect(),
                    confirmed: i.confirmed,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileInstruction {
    pub order: u32,
    pub text: String,
    pub source: InstructionSource,
    pub states: Vec<String>,
    pub confirmed: bool,
}

/// Exported session: input, instructions, grounded states, confirmations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub version: u32,
    pub environment: String,
    pub sub_config: String,
    pub user_input: String,
    pub instructions: Vec<FileInstruction>,
}

impl SessionFile {
    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let f: SessionFile =
            serde_json::from_str(text).map_err(|e| SessionError::File(e.to_string()))?;
        if f.version != SESSION_VERSION {
            return Err(SessionError::File(format!(
                "version {} is not supported (expected {SESSION_VERSION})",
                f.version
            )));
        }
        if f.instructions.is_empty() {
            return Err(SessionError::EmptyPlan);
        }
        for (i, ins) in f.instructions.iter().enumerate() {
            if ins.order as usize != i + 1 {
                return Err(SessionError::File(format!(
                    "instruction orders must run 1..{}; found {} at position {}",
                    f.instructions.len(),
                    ins.order,
                    i + 1
                )));
            }
        }
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("session serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SessionError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| SessionError::File(format!("{}: {e}", path.display())))
    }

    /// Confirmed instructions with the states recorded in the file.
    pub fn sub_goals(&self) -> Result<Vec<SubGoal>, SessionError> {
        self.instructions
            .iter()
            .filter(|i| i.confirmed)
            .map(|i| {
                let states = i
                    .states
                    .iter()
                    .map(|id| {
                        EnvState::parse(id)
                            .ok_or_else(|| SessionError::File(format!("bad state id {id:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if states.is_empty() {
                    return Err(SessionError::File(format!(
                        "confirmed instruction {} has no states",
                        i.order
                    )));
                }
                Ok(SubGoal {
                    instruction: self.instruction(i),
                    states,
                    confirmed: true,
                })
            })
            .collect()
    }

    fn instruction(&self, i: &FileInstruction) -> Instruction {
        Instruction {
            text: i.text.clone(),
            source: i.source,
            parent: (i.source != InstructionSource::UserDirect).then(|| self.user_input.clone()),
            order: i.order,
            round: 0,
        }
    }
}

const PUBLISHED: [(&str, &str); 4] = [
    ("classroom", include_str!("../../data/sessions/classroom.json")),
    ("frozenlake", include_str!("../../data/sessions/frozenlake.json")),
    ("umaze", include_str!("../../data/sessions/umaze.json")),
    ("double_t", include_str!("../../data/sessions/double_t.json")),
];

/// Names of the bundled example sessions.
pub fn published_sessions() -> Vec<&'static str> {
    PUBLISHED.iter().map(|(n, _)| *n).collect()
}

pub fn published_session(name: &str) -> Result<SessionFile, SessionError> {
    let (_, text) = PUBLISHED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| SessionError::File(format!("no published session {name:?}")))?;
    SessionFile::from_json(text)
}

/// Splits user input into instructions, directly or through the planner.
pub fn plan(
    user_input: &str,
    environment: &str,
    mode: PlanMode,
    gateway: Option<&Gateway>,
) -> Result<Vec<Instruction>, SessionError> {
    let (texts, source, parent) = match mode {
        PlanMode::Direct => (
            user_input
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect::<Vec<_>>(),
            InstructionSource::UserDirect,
            None,
        ),
        PlanMode::Llm => {
            if user_input.trim().is_empty() {
                return Err(SessionError::EmptyPlan);
            }
            let gw = gateway.ok_or(SessionError::NoGateway)?;
            (
                gw.plan(environment, user_input.trim())
                    .map_err(SessionError::Planning)?,
                InstructionSource::LlmPlanned,
                Some(user_input.to_string()),
            )
        }
    };
    if texts.is_empty() {
        return Err(SessionError::EmptyPlan);
    }
    Ok(texts
        .into_iter()
        .take(MAX_PLAN_STEPS)
        .enumerate()
        .map(|(i, text)| Instruction {
            text,
            source,
            parent: parent.clone(),
            order: i as u32 + 1,
            round: 0,
        })
        .collect())
}

/// What the user decided about a surfaced candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "decision", content = "text")]
pub enum Decision {
    Accept,
    /// Penalise the candidate and surface the next one; uses up a round.
    Reject,
    /// Replace the instruction text and ground it again from scratch.
    Edit(String),
}

/// A running session: the matcher, per-instruction match states and the
/// optional gateway used for validation and reflection.
pub struct InstructionEngine {
    matcher: Matcher,
    gateway: Option<Arc<Gateway>>,
    config: SessionConfig,
    session: InstructionSession,
    states: Vec<MatchState>,
    environment: String,
}

impl std::fmt::Debug for InstructionEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InstructionEngine")
            .field("session", &self.session)
            .finish()
    }
}

impl InstructionEngine {
    /// Plans `user_input` and grounds every instruction.
    pub fn start(
        user_input: &str,
        store: &ObservationStore,
        gateway: Option<Arc<Gateway>>,
        config: SessionConfig,
        embeddings: Option<Arc<dyn EmbeddingBackend>>,
    ) -> Result<Self, SessionError> {
        let environment = format!("{}/{}", store.header.environment, store.header.sub_config);
        let instructions = plan(user_input, &environment, config.plan, gateway.as_deref())?;
        Self::with_instructions(user_input, instructions, store, gateway, config, embeddings)
    }

    /// Grounds the instructions of an exported session again against `store`.
    pub fn import(
        file: &SessionFile,
        store: &ObservationStore,
        gateway: Option<Arc<Gateway>>,
        config: SessionConfig,
        embeddings: Option<Arc<dyn EmbeddingBackend>>,
    ) -> Result<Self, SessionError> {
        let expected = format!("{}/{}", store.header.environment, store.header.sub_config);
        let found = format!("{}/{}", file.environment, file.sub_config);
        if expected != found {
            return Err(SessionError::EnvironmentMismatch { expected, found });
        }
        let instructions = file.instructions.iter().map(|i| file.instruction(i)).collect();
        Self::with_instructions(&file.user_input, instructions, store, gateway, config, embeddings)
    }

    fn with_instructions(
        user_input: &str,
        instructions: Vec<Instruction>,
        store: &ObservationStore,
        gateway: Option<Arc<Gateway>>,
        config: SessionConfig,
        embeddings: Option<Arc<dyn EmbeddingBackend>>,
    ) -> Result<Self, SessionError> {
        if instructions.is_empty() {
            return Err(SessionError::EmptyPlan);
        }
        let texts: Vec<&str> = instructions.iter().map(|i| i.text.as_str()).collect();
        let matcher = Matcher::new(store, &texts, embeddings)?;
        let mut engine = Self {
            environment: format!("{}/{}", store.header.environment, store.header.sub_config),
            session: InstructionSession {
                environment: store.header.environment.clone(),
                sub_config: store.header.sub_config.clone(),
                user_input: user_input.to_string(),
                adapter_id: store.header.adapter_id.clone(),
                encoder: matcher.encoder().spec().label(),
                items: Vec::new(),
            },
            matcher,
            gateway,
            config,
            states: Vec::new(),
        };
        for ins in instructions {
            let (item, state) = engine.ground(ins)?;
            engine.session.items.push(item);
            engine.states.push(state);
        }
        Ok(engine)
    }

    pub fn session(&self) -> &InstructionSession {
        &self.session
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn matcher(&self) -> &Matcher {
        &self.matcher
    }

    pub fn match_state(&self, order: u32) -> Option<&MatchState> {
        self.states.get((order as usize).checked_sub(1)?)
    }

    pub fn sub_goals(&self) -> Vec<SubGoal> {
        self.session.sub_goals()
    }

    fn examples(&self) -> String {
        let mut seen = Vec::new();
        for t in self.matcher.store().texts() {
            if seen.len() >= self.config.examples {
                break;
            }
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
        seen.iter().map(|t| format!("- {t}")).collect::<Vec<_>>().join("\n")
    }

    /// The match → validate → (adjust + reflect) loop for one instruction.
    fn ground(&self, instruction: Instruction) -> Result<(SessionItem, MatchState), SessionError> {
        let mut ms = self.matcher.start(&instruction.text)?;
        let original = instruction.text.clone();
        let mut working = instruction;
        let mut rounds = Vec::new();
        let mut status = ItemStatus::Unchecked;
        if let Some(gw) = &self.gateway {
            let store = self.matcher.store();
            for r in 1..=self.config.round_limit {
                let best = ms.best();
                let rec = &store.records[best];
                let verdict = match gw.validate(&self.environment, &working.text, &rec.state.id, &rec.text) {
                    Ok(v) => v,
                    Err(GatewayError::Format { raw, .. }) => {
                        log::warn!("unreadable verdict {raw:?}; counting it as a rejection");
                        Verdict {
                            accept: false,
                            critique: GENERIC_CRITIQUE.into(),
                        }
                    }
                    Err(e) => {
                        log::warn!("validator unavailable ({e}); surfacing the current match");
                        status = ItemStatus::Unchecked;
                        break;
                    }
                };
                rounds.push(Round {
                    round: r,
                    reviewer: Reviewer::Validator,
                    instruction: working.text.clone(),
                    candidate: rec.state.id.clone(),
                    score: ms.best_score(),
                    accept: verdict.accept,
                    critique: verdict.critique.clone(),
                });
                if verdict.accept {
                    status = ItemStatus::Accepted;
                    break;
                }
                ms.adjust(best, self.config.delta);
                status = ItemStatus::Exhausted;
                if r == self.config.round_limit {
                    break;
                }
                match gw.reflect(&self.environment, &working.text, &verdict.critique, &self.examples()) {
                    Ok(text) if text != working.text => match self.matcher.cosines(&text) {
                        Ok(cos) => {
                            ms.replace_cosines(cos);
                            working = Instruction {
                                text,
                                source: InstructionSource::LlmRefined,
                                parent: working.parent.clone(),
                                order: working.order,
                                round: working.round + 1,
                            };
                        }
                        Err(e) => log::warn!("refined instruction unusable ({e}); keeping the previous text"),
                    },
                    Ok(_) => {}
                    Err(e) => log::warn!("reflection skipped: {e}"),
                }
            }
        }
        let item = self.item(working, original, rounds, status, &ms);
        Ok((item, ms))
    }

    fn item(
        &self,
        instruction: Instruction,
        original: String,
        rounds: Vec<Round>,
        status: ItemStatus,
        ms: &MatchState,
    ) -> SessionItem {
        let store = self.matcher.store();
        SessionItem {
            instruction,
            original,
            rounds,
            candidates: ms.candidates(store, CANDIDATES_SHOWN),
            states: ms
                .near_best(self.config.tie_margin, self.config.max_states)
                .into_iter()
                .map(|i| store.records[i].state.clone())
                .collect(),
            status,
            confirmed: self.config.auto_confirm,
        }
    }

    /// Applies a human decision to instruction `order` (1-based).
    pub fn confirm(&mut self, order: u32, decision: Decision) -> Result<&SessionItem, SessionError> {
        let idx = (order as usize)
            .checked_sub(1)
            .filter(|&i| i < self.session.items.len())
            .ok_or(SessionError::UnknownInstruction(order))?;
        if self.session.items[idx].confirmed {
            return Err(SessionError::AlreadyConfirmed(order));
        }
        match decision {
            Decision::Accept => self.session.items[idx].confirmed = true,
            Decision::Reject => {
                let used = self.session.items[idx].rounds.len() as u32;
                if used >= self.config.round_limit {
                    return Err(SessionError::RoundLimit(order, self.config.round_limit));
                }
                let ms = &mut self.states[idx];
                let best = ms.best();
                let round = Round {
                    round: used + 1,
                    reviewer: Reviewer::User,
                    instruction: self.session.items[idx].instruction.text.clone(),
                    candidate: self.matcher.store().records[best].state.id.clone(),
                    score: ms.best_score(),
                    accept: false,
                    critique: "Rejected by the user.".into(),
                };
                ms.adjust(best, self.config.delta);
                let old = &self.session.items[idx];
                let mut rounds = old.rounds.clone();
                rounds.push(round);
                let item = self.item(
                    old.instruction.clone(),
                    old.original.clone(),
                    rounds,
                    ItemStatus::Unchecked,
                    &self.states[idx],
                );
                self.session.items[idx] = SessionItem {
                    confirmed: false,
                    ..item
                };
            }
            Decision::Edit(text) => {
                let text = text.trim().to_string();
                if text.is_empty() {
                    return Err(SessionError::EmptyPlan);
                }
                let old = &self.session.items[idx].instruction;
                let ins = Instruction {
                    text,
                    source: InstructionSource::UserEdited,
                    parent: old.parent.clone(),
                    order: old.order,
                    round: 0,
                };
                self.widen(&ins.text)?;
                let (mut item, ms) = self.ground(ins)?;
                item.confirmed = false;
                self.session.items[idx] = item;
                self.states[idx] = ms;
            }
        }
        Ok(&self.session.items[idx])
    }

    /// Adds one instruction at the end of the plan and grounds it.
    pub fn append(&mut self, text: &str) -> Result<&SessionItem, SessionError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(SessionError::EmptyPlan);
        }
        let ins = Instruction {
            text: text.to_string(),
            source: InstructionSource::UserDirect,
            parent: None,
            order: self.session.items.len() as u32 + 1,
            round: 0,
        };
        self.widen(&ins.text)?;
        let (item, ms) = self.ground(ins)?;
        self.session.items.push(item);
        self.states.push(ms);
        Ok(self.session.items.last().expect("just pushed"))
    }

    /// Extends a bag-of-words vocabulary with the words of `text`. Columns
    /// only get added, so existing similarities are unchanged.
    fn widen(&mut self, text: &str) -> Result<(), SessionError> {
        if self.matcher.encoder().kind() != EncoderKind::Bow {
            return Ok(());
        }
        let mut texts: Vec<&str> = self
            .session
            .items
            .iter()
            .flat_map(|i| [i.instruction.text.as_str(), i.original.as_str()])
            .collect();
        texts.push(text);
        self.matcher = Matcher::new(self.matcher.store(), &texts, None)?;
        Ok(())
    }
}
