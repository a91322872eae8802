use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Mlp};
use super::{Agent, AgentError, AgentKind, Obs, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub buffer: usize,
    pub batch: usize,
    /// Gradient updates between target-network copies.
    pub target_sync: u64,
    /// Environment steps per gradient update.
    pub update_every: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            lr: 1e-3,
            gamma: 0.95,
            buffer: 10_000,
            batch: 64,
            target_sync: 200,
            update_every: 1,
        }
    }
}

/// FIFO experience replay with uniform sampling.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `n` indices drawn with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Learned {
    config: DqnConfig,
    online: Mlp,
    target: Mlp,
    adam: Adam,
    steps: u64,
    updates: u64,
}

/// Deep-Q agent with a target network. The replay buffer is not part of
/// the snapshot.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    s: Learned,
    buffer: ReplayBuffer,
    grad: Vec<f64>,
}

impl DqnAgent {
    pub fn new(input_dim: usize, n_actions: usize, config: DqnConfig, seed: u64) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend(&config.hidden);
        sizes.push(n_actions);
        let online = Mlp::new(&sizes, &mut ChaCha8Rng::seed_from_u64(seed));
        let n = online.params.len();
        Self {
            buffer: ReplayBuffer::new(config.buffer),
            grad: vec![0.0; n],
            s: Learned {
                target: online.clone(),
                adam: Adam::new(n, config.lr),
                online,
                config,
                steps: 0,
                updates: 0,
            },
        }
    }

    pub fn from_snapshot(json: &str) -> Result<Self, AgentError> {
        let s: Learned = serde_json::from_str(json).map_err(|e| AgentError::Snapshot(e.to_string()))?;
        if s.online.sizes != s.target.sizes || s.online.params.len() != Mlp::count(&s.online.sizes) {
            return Err(AgentError::Snapshot("network shapes disagree".into()));
        }
        Ok(Self {
            buffer: ReplayBuffer::new(s.config.buffer),
            grad: vec![0.0; s.online.params.len()],
            s,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.s.config
    }

    pub fn updates(&self) -> u64 {
        self.s.updates
    }

    pub fn network(&self) -> &Mlp {
        &self.s.online
    }

    fn check_dim(&self, obs: &Obs) -> Result<(), AgentError> {
        let expected = self.s.online.input_dim();
        if obs.vector.len() != expected {
            return Err(AgentError::Dim {
                expected,
                got: obs.vector.len(),
            });
        }
        Ok(())
    }

    /// One minibatch step on mean squared TD error; returns the loss.
    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<f64, AgentError> {
        let cfg = &self.s.config;
        let batch = self.buffer.sample(cfg.batch, rng);
        let scale = 1.0 / batch.len() as f64;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for t in batch {
            let future = if t.done {
                0.0
            } else {
                let next = self.s.target.predict(&t.next.vector);
                next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            let y = t.reward + cfg.gamma * future;
            let trace = self.s.online.forward(&t.obs.vector);
            let err = trace.output()[t.action] - y;
            loss += err * err * scale;
            let mut d_out = vec![0.0; trace.output().len()];
            d_out[t.action] = 2.0 * err * scale;
            self.s.online.backward(&trace, &d_out, &mut self.grad);
        }
        if !loss.is_finite() {
            return Err(AgentError::NonFinite {
                what: "loss",
                updates: self.s.updates,
            });
        }
        self.s.adam.step(&mut self.s.online.params, &self.grad);
        self.s.updates += 1;
        if !self.s.online.is_finite() {
            return Err(AgentError::NonFinite {
                what: "weights",
                updates: self.s.updates,
            });
        }
        if self.s.updates.is_multiple_of(self.s.config.target_sync.max(1)) {
            self.s.target.params.clone_from(&self.s.online.params);
        }
        Ok(loss)
    }
}

impl Agent for DqnAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Dqn
    }

    fn n_actions(&self) -> usize {
        self.s.online.output_dim()
    }

    fn values(&self, obs: &Obs) -> Vec<f64> {
        debug_assert!(self.check_dim(obs).is_ok());
        self.s.online.predict(&obs.vector)
    }

    fn learn(&mut self, t: Transition, rng: &mut ChaCha8Rng) -> Result<(), AgentError> {
        self.check_dim(&t.obs)?;
        self.check_dim(&t.next)?;
        self.buffer.push(t);
        self.s.steps += 1;
        if self.buffer.len() >= self.s.config.batch && self.s.steps.is_multiple_of(self.s.config.update_every.max(1)) {
            self.update(rng)?;
        }
        Ok(())
    }

    fn snapshot(&self) -> String {
        serde_json::to_string(&self.s).expect("dqn state serializes")
    }
}
