//! Built-in problem registry and the config-file environment reference.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::layout::Layout;
use super::{Direction, EnvError, EnvironmentSpec, Landmark, RewardProfile, StateRepr};

const CLASSROOM: &str = include_str!("../../data/layouts/classroom.txt");
const FROZENLAKE_4X4: &str = include_str!("../../data/layouts/frozenlake_4x4.txt");
const UMAZE: &str = include_str!("../../data/layouts/maze_umaze.txt");
const DOUBLE_T: &str = include_str!("../../data/layouts/maze_double_t.txt");
const MEDIUM: &str = include_str!("../../data/layouts/maze_medium.txt");
const LARGE: &str = include_str!("../../data/layouts/maze_large.txt");

/// Grid moves in the order used by the classroom and maze problems.
pub const GRID_ACTIONS: [Direction; 4] = [
    Direction::Up,
    Direction::Down,
    Direction::Left,
    Direction::Right,
];

/// FrozenLake keeps the Gymnasium action order: left, down, right, up.
pub const LAKE_ACTIONS: [Direction; 4] = [
    Direction::Left,
    Direction::Down,
    Direction::Right,
    Direction::Up,
];

/// One selectable application, grouping its sub-configurations.
#[derive(Debug, Clone, Serialize)]
pub struct Application {
    pub id: &'static str,
    pub title: &'static str,
    pub description: &'static str,
    pub sub_configs: Vec<&'static str>,
}

pub fn applications() -> Vec<Application> {
    vec![
        Application {
            id: "classroom",
            title: "Classroom",
            description: "Pass the scrap paper between students to the recycling bin without it reaching the punk student.",
            sub_configs: vec!["default"],
        },
        Application {
            id: "frozenlake",
            title: "FrozenLake",
            description: "Help the elf reach the present across a slippery frozen lake without falling through the ice.",
            sub_configs: vec!["4x4", "4x4-deterministic"],
        },
        Application {
            id: "maze",
            title: "Maze",
            description: "Grid mazes described by the position of the surrounding walls.",
            sub_configs: vec!["umaze", "double-t", "medium", "large"],
        },
    ]
}

/// Every registered `name/sub_config` key.
pub fn registered_keys() -> Vec<String> {
    applications()
        .into_iter()
        .flat_map(|app| {
            app.sub_configs
                .into_iter()
                .map(move |sub| format!("{}/{}", app.id, sub))
        })
        .collect()
}

/// Looks up a built-in environment.
pub fn builtin(name: &str, sub_config: &str) -> Result<EnvironmentSpec, EnvError> {
    let maze = |sub: &str, text: &str, cap: u32| {
        EnvironmentSpec::from_layout(
            "maze",
            sub,
            Layout::parse(text)?,
            GRID_ACTIONS.to_vec(),
            StateRepr::Coord,
            RewardProfile {
                goal: 1.0,
                hazard: 0.0,
                punk: 0.0,
                step: 0.0,
                timeout_penalty: -0.1,
            },
            cap,
            false,
            Vec::new(),
        )
    };
    match (name, sub_config) {
        ("classroom", "default") => EnvironmentSpec::from_layout(
            "classroom",
            "default",
            Layout::parse(CLASSROOM)?,
            GRID_ACTIONS.to_vec(),
            StateRepr::Coord,
            RewardProfile {
                goal: 1.0,
                hazard: 0.0,
                punk: -1.0,
                step: 0.0,
                timeout_penalty: 0.0,
            },
            100,
            false,
            vec![
                Landmark {
                    name: "teacher".into(),
                    coord: [3, 3],
                },
                Landmark {
                    name: "recycling bin".into(),
                    coord: [4, 3],
                },
            ],
        ),
        ("frozenlake", "4x4") | ("frozenlake", "4x4-deterministic") => {
            EnvironmentSpec::from_layout(
                "frozenlake",
                sub_config,
                Layout::parse(FROZENLAKE_4X4)?,
                LAKE_ACTIONS.to_vec(),
                StateRepr::Index,
                RewardProfile {
                    goal: 1.0,
                    hazard: 0.0,
                    punk: 0.0,
                    step: 0.0,
                    timeout_penalty: 0.0,
                },
                100,
                sub_config == "4x4",
                Vec::new(),
            )
        }
        ("maze", "umaze") => maze("umaze", UMAZE, 100),
        ("maze", "double-t") => maze("double-t", DOUBLE_T, 100),
        ("maze", "medium") => maze("medium", MEDIUM, 200),
        ("maze", "large") => maze("large", LARGE, 300),
        _ => Err(EnvError::UnknownEnvironment {
            key: format!("{name}/{sub_config}"),
            known: registered_keys(),
        }),
    }
}

/// Environment selection as written in an experiment config file.
///
/// `layout` and `rewards` override the built-in entry so new maps can be
/// dropped in as data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentRef {
    pub name: String,
    pub sub_config: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<RewardProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_cap: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slippery: Option<bool>,
}

impl EnvironmentRef {
    pub fn new(name: &str, sub_config: &str) -> Self {
        Self {
            name: name.into(),
            sub_config: sub_config.into(),
            layout: None,
            rewards: None,
            episode_cap: None,
            slippery: None,
        }
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.name, self.sub_config)
    }

    pub fn resolve(&self) -> Result<Arc<EnvironmentSpec>, EnvError> {
        let mut spec = builtin(&self.name, &self.sub_config)?;
        if let Some(path) = &self.layout {
            let text = std::fs::read_to_string(path).map_err(|e| {
                EnvError::Layout(format!("cannot read {}: {e}", path.display()))
            })?;
            spec = EnvironmentSpec::from_layout(
                &spec.name,
                &spec.sub_config,
                Layout::parse(&text)?,
                spec.action_set.clone(),
                spec.repr,
                spec.rewards,
                spec.episode_cap,
                spec.stochastic,
                spec.landmarks.clone(),
            )?;
        }
        if let Some(rewards) = self.rewards {
            spec.rewards = rewards;
        }
        if let Some(cap) = self.episode_cap {
            if cap == 0 {
                return Err(EnvError::Layout("episode_cap must be positive".into()));
            }
            spec.episode_cap = cap;
        }
        if let Some(slippery) = self.slippery {
            spec.stochastic = slippery;
        }
        Ok(Arc::new(spec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_key_resolves() {
        for key in registered_keys() {
            let (name, sub) = key.split_once('/').unwrap();
            builtin(name, sub).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn unknown_key_lists_alternatives() {
        match builtin("maze", "spiral") {
            Err(EnvError::UnknownEnvironment { key, known }) => {
                assert_eq!(key, "maze/spiral");
                assert!(known.contains(&"maze/umaze".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overrides_apply() {
        let mut r = EnvironmentRef::new("frozenlake", "4x4");
        r.slippery = Some(false);
        r.episode_cap = Some(7);
        let spec = r.resolve().unwrap();
        assert!(!spec.stochastic);
        assert_eq!(spec.episode_cap, 7);
    }
}
