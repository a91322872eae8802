use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, AgentKind, Obs, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.95,
        }
    }
}

/// Tabular Q-learning over observation keys. Unseen keys read as zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableAgent {
    config: QConfig,
    n_actions: usize,
    table: BTreeMap<String, Vec<f64>>,
}

impl QTableAgent {
    pub fn new(n_actions: usize, config: QConfig) -> Self {
        Self {
            config,
            n_actions,
            table: BTreeMap::new(),
        }
    }

    pub fn table(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.table
    }

    pub fn from_snapshot(json: &str) -> Result<Self, AgentError> {
        serde_json::from_str(json).map_err(|e| AgentError::Snapshot(e.to_string()))
    }
}

impl Agent for QTableAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Qlearn
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn values(&self, obs: &Obs) -> Vec<f64> {
        self.table
            .get(&obs.key)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    fn learn(&mut self, t: Transition, _rng: &mut ChaCha8Rng) -> Result<(), AgentError> {
        let future = if t.done {
            0.0
        } else {
            self.table
                .get(&t.next.key)
                .map(|q| q.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .unwrap_or(0.0)
        };
        let target = t.reward + self.config.gamma * future;
        let n = self.n_actions;
        let q = self.table.entry(t.obs.key.clone()).or_insert_with(|| vec![0.0; n]);
        q[t.action] += self.config.alpha * (target - q[t.action]);
        if !q[t.action].is_finite() {
            return Err(AgentError::NonFinite {
                what: "q-value",
                updates: 0,
            });
        }
        Ok(())
    }

    fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("q-table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn obs(k: &str) -> Arc<Obs> {
        Arc::new(Obs {
            key: k.into(),
            vector: vec![],
        })
    }

    #[test]
    fn one_step_update_by_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = QTableAgent::new(2, QConfig::default());
        a.learn(Transition { obs: obs("b"), action: 1, reward: 1.0, next: obs("g"), done: true }, &mut rng).unwrap();
        // 0 + 0.1 * (1 - 0)
        assert!((a.values(&obs("b"))[1] - 0.1).abs() < 1e-15);
        a.learn(Transition { obs: obs("a"), action: 0, reward: 0.0, next: obs("b"), done: false }, &mut rng).unwrap();
        // 0 + 0.1 * (0 + 0.95 * 0.1)
        assert!((a.values(&obs("a"))[0] - 0.0095).abs() < 1e-15);
        assert_eq!(a.greedy(&obs("a")), 0);
        assert_eq!(a.greedy(&obs("unseen")), 0);
    }

    #[test]
    fn snapshot_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = QTableAgent::new(4, QConfig::default());
        a.learn(Transition { obs: obs("[1,1]"), action: 3, reward: 0.3, next: obs("[1,2]"), done: false }, &mut rng).unwrap();
        let snap = a.snapshot();
        let b = QTableAgent::from_snapshot(&snap).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.snapshot(), snap);
    }

    #[test]
    fn learns_a_two_state_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = QTableAgent::new(2, QConfig { alpha: 0.5, gamma: 0.9 });
        for _ in 0..200 {
            a.learn(Transition { obs: obs("s0"), action: 1, reward: 0.0, next: obs("s1"), done: false }, &mut rng).unwrap();
            a.learn(Transition { obs: obs("s0"), action: 0, reward: 0.0, next: obs("s0"), done: false }, &mut rng).unwrap();
            a.learn(Transition { obs: obs("s1"), action: 1, reward: 1.0, next: obs("end"), done: true }, &mut rng).unwrap();
        }
        assert!((a.values(&obs("s1"))[1] - 1.0).abs() < 1e-9);
        assert!((a.values(&obs("s0"))[1] - 0.9).abs() < 1e-9);
        assert_eq!(a.greedy(&obs("s0")), 1);
    }
}
