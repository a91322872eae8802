//! Plain-text grid layouts.
//!
//! One line per row, one character per cell:
//!
//! | char | cell |
//! |------|------|
//! | `#`  | wall |
//! | `.`  | open |
//! | `S`  | start (open) |
//! | `G`  | goal (terminal, positive reward) |
//! | `H`  | hazard / hole (terminal) |
//! | `P`  | punk student (terminal, negative reward) |
//!
//! Blank trailing lines are ignored. All rows must have the same width.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EnvError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Wall,
    Open,
    Start,
    Goal,
    Hazard,
    Punk,
}

impl CellKind {
    pub fn from_char(c: char) -> Option<Self> {
        Some(match c {
            '#' => CellKind::Wall,
            '.' => CellKind::Open,
            'S' => CellKind::Start,
            'G' => CellKind::Goal,
            'H' => CellKind::Hazard,
            'P' => CellKind::Punk,
            _ => return None,
        })
    }

    pub fn as_char(self) -> char {
        match self {
            CellKind::Wall => '#',
            CellKind::Open => '.',
            CellKind::Start => 'S',
            CellKind::Goal => 'G',
            CellKind::Hazard => 'H',
            CellKind::Punk => 'P',
        }
    }

    pub fn is_wall(self) -> bool {
        self == CellKind::Wall
    }

    /// Entering this cell ends the episode.
    pub fn is_terminal(self) -> bool {
        matches!(self, CellKind::Goal | CellKind::Hazard | CellKind::Punk)
    }
}

/// A rectangular grid of cells addressed as `[y, x]`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    rows: usize,
    cols: usize,
    cells: Vec<CellKind>,
}

impl Layout {
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let lines: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .skip_while(|l| l.trim().is_empty())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        if lines.is_empty() {
            return Err(EnvError::Layout("layout is empty".into()));
        }
        let cols = lines[0].chars().count();
        let mut cells = Vec::with_capacity(cols * lines.len());
        for (y, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(EnvError::Layout(format!(
                    "row {y} has width {} but row 0 has width {cols}",
                    line.chars().count()
                )));
            }
            for (x, c) in line.chars().enumerate() {
                let kind = CellKind::from_char(c).ok_or_else(|| {
                    EnvError::Layout(format!("unknown cell character {c:?} at [{y},{x}]"))
                })?;
                cells.push(kind);
            }
        }
        let layout = Layout {
            rows: lines.len(),
            cols,
            cells,
        };
        match layout.count(CellKind::Start) {
            1 => Ok(layout),
            n => Err(EnvError::Layout(format!(
                "layout needs exactly one start cell, found {n}"
            ))),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, flat: usize) -> CellKind {
        self.cells[flat]
    }

    pub fn at(&self, y: usize, x: usize) -> Option<CellKind> {
        (y < self.rows && x < self.cols).then(|| self.cells[y * self.cols + x])
    }

    pub fn flat(&self, y: usize, x: usize) -> usize {
        y * self.cols + x
    }

    pub fn coord(&self, flat: usize) -> (usize, usize) {
        (flat / self.cols, flat % self.cols)
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.cells.iter().filter(|&&c| c == kind).count()
    }

    pub fn find(&self, kind: CellKind) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == kind)
            .map(|(i, _)| i)
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }
}

impl FromStr for Layout {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Layout::parse(s)
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(self.cols) {
            for c in row {
                write!(f, "{}", c.as_char())?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
