//! Deterministic template descriptions for the built-in problems.

use std::sync::Arc;

use super::{band, Adapter, AdapterError, AdapterKind};
use crate::env::{CellKind, Direction, EnvState, EnvironmentSpec, StateRepr, GRID_ACTIONS};

/// Rule-based language: relative walls for mazes, cell kind for the lake,
/// room region plus neighbours for the classroom.
#[derive(Debug, Clone)]
pub struct RuleAdapter {
    spec: Arc<EnvironmentSpec>,
}

impl RuleAdapter {
    pub fn new(spec: Arc<EnvironmentSpec>) -> Self {
        Self { spec }
    }

    pub fn text(&self, state: &EnvState) -> Result<String, AdapterError> {
        let flat = self
            .spec
            .cell_of(state)
            .map_err(|e| AdapterError::State(state.id.clone(), e.to_string()))?;
        let kind = self.spec.layout.cell(flat);
        Ok(match (self.spec.name.as_str(), self.spec.repr) {
            ("classroom", _) => self.classroom(flat),
            (_, StateRepr::Index) => lake(kind).to_string(),
            _ => self.maze(flat, kind),
        })
    }

    fn maze(&self, flat: usize, kind: CellKind) -> String {
        if kind == CellKind::Goal {
            return "You have reached the goal.".into();
        }
        let mut walls = Vec::new();
        let mut open = Vec::new();
        let mut goal_dir = None;
        for dir in GRID_ACTIONS {
            let next = self.spec.move_from(flat, dir);
            if next == flat {
                walls.push(dir);
            } else {
                open.push(dir);
                if self.spec.layout.cell(next) == CellKind::Goal {
                    goal_dir = Some(dir);
                }
            }
        }
        // side walls first, then above/below
        walls.sort_by_key(|d| [Direction::Left, Direction::Right, Direction::Up, Direction::Down]
            .iter()
            .position(|x| x == d));
        let mut parts: Vec<String> = walls
            .iter()
            .map(|&d| format!("a wall is {}", where_is(d)))
            .collect();
        if open.len() == 1 {
            parts.push("this is a dead end".into());
        }
        let moves: Vec<&str> = open.iter().map(|d| d.name()).collect();
        let mut text = if parts.is_empty() {
            "There are no walls around you".to_string()
        } else {
            capitalize(&parts.join(", "))
        };
        match moves.as_slice() {
            [] => {}
            [only] => text.push_str(&format!(" and you can only move {only}.")),
            [init @ .., last] => {
                text.push_str(&format!(" and you can move {} or {last}.", init.join(", ")))
            }
        }
        if let Some(d) = goal_dir {
            text.push_str(&format!(" The goal is {}.", where_is(d)));
        }
        text
    }

    fn classroom(&self, flat: usize) -> String {
        let (y, x) = self.spec.layout.coord(flat);
        let rows = self.spec.layout.rows();
        let cols = self.spec.layout.cols();
        let side = if x <= 1 {
            "left"
        } else if x + 2 >= cols {
            "right"
        } else {
            "middle"
        };
        let landmark = self
            .spec
            .landmarks
            .iter()
            .find(|l| l.coord == [y, x] && l.name != "teacher");
        let region = if y <= 1 {
            match side {
                "middle" => "You are at the back of the classroom.".to_string(),
                s => format!("You are in the back {s} corner of the classroom."),
            }
        } else if y + 2 >= rows {
            match (landmark, side) {
                (Some(l), _) => format!("You are at the {} at the front of the classroom.", l.name),
                (None, "middle") => "You are at the front desk.".to_string(),
                (None, s) => format!("You are at the front {s} desk."),
            }
        } else {
            format!("You are in the {side} aisle of the classroom.")
        };

        let dist = |c: [usize; 2]| y.abs_diff(c[0]) + x.abs_diff(c[1]);
        let punk = self
            .spec
            .layout
            .find(CellKind::Punk)
            .map(|f| {
                let (py, px) = self.spec.layout.coord(f);
                dist([py, px])
            })
            .min();
        let punk = punk.map(|d| {
            band(
                d as f64,
                &[
                    (0.5, "You ran into the punk student and the paper has been taken."),
                    (1.5, "The punk student sits right beside you."),
                    (2.5, "The punk student is nearby."),
                    (3.5, "The punk student is two desks away."),
                ],
                "You are no longer in the vicinity of the punk student.",
            )
        });
        let teacher = self
            .spec
            .landmarks
            .iter()
            .find(|l| l.name == "teacher")
            .map(|l| {
                band(
                    dist(l.coord) as f64,
                    &[
                        (0.5, "You are with the teacher and can hand over the paper."),
                        (1.5, "The teacher is beside you."),
                        (2.5, "The teacher is close."),
                    ],
                    "The teacher is out of reach.",
                )
            });
        [Some(region.as_str()), punk, teacher]
            .into_iter()
            .flatten()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn lake(kind: CellKind) -> &'static str {
    match kind {
        CellKind::Start => "You are at the start on the frozen lake.",
        CellKind::Goal => "You are standing on the present.",
        CellKind::Hazard => "You have fallen through a hole in the ice.",
        _ => "You are standing on frozen ice.",
    }
}

fn where_is(d: Direction) -> &'static str {
    match d {
        Direction::Up => "above you",
        Direction::Down => "below you",
        Direction::Left => "on your left",
        Direction::Right => "on your right",
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl Adapter for RuleAdapter {
    fn id(&self) -> &str {
        "rule"
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::Rule
    }

    fn describe(
        &self,
        state: &EnvState,
        _history: &[Direction],
        _legal: &[Direction],
    ) -> Result<String, AdapterError> {
        self.text(state)
    }
}
