//! Schematic ASCII and SVG previews of a grid problem.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{CellKind, EnvState, EnvironmentSpec};

const CELL: usize = 40;

/// Extra marking drawn over a cell, e.g. a candidate sub-goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellHighlight {
    pub state: EnvState,
    pub label: String,
    /// CSS colour of the outline.
    pub color: String,
}

/// ASCII rendering; the agent is drawn as `A` over its cell.
pub fn render_text(spec: &EnvironmentSpec, agent: Option<&EnvState>) -> String {
    let agent = agent.and_then(|s| spec.cell_of(s).ok());
    let mut out = String::with_capacity(spec.layout.len() + spec.layout.rows());
    for (flat, kind) in spec.layout.cells().iter().enumerate() {
        out.push(if Some(flat) == agent { 'A' } else { kind.as_char() });
        if (flat + 1) % spec.layout.cols() == 0 {
            out.push('\n');
        }
    }
    out
}

fn fill(kind: CellKind) -> (&'static str, &'static str) {
    match kind {
        CellKind::Wall => ("wall", "#3b3b3b"),
        CellKind::Open => ("open", "#f3f1ea"),
        CellKind::Start => ("start", "#d9ead3"),
        CellKind::Goal => ("goal", "#f6c94c"),
        CellKind::Hazard => ("hazard", "#6fa8dc"),
        CellKind::Punk => ("punk", "#e06666"),
    }
}

/// SVG rendering with one `<rect>` per cell carrying `class` and `data-cell`
/// attributes so pages can attach handlers to cells.
pub fn render_svg(
    spec: &EnvironmentSpec,
    agent: Option<&EnvState>,
    highlights: &[CellHighlight],
) -> String {
    let (rows, cols) = (spec.layout.rows(), spec.layout.cols());
    let (w, h) = (cols * CELL, rows * CELL);
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{w}" height="{h}" font-family="sans-serif">"#
    );
    for (flat, &kind) in spec.layout.cells().iter().enumerate() {
        let (y, x) = spec.layout.coord(flat);
        let (class, colour) = fill(kind);
        let id = spec.state_of(flat).id;
        let _ = write!(
            svg,
            r##"<rect class="{class}" data-cell="{id}" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{colour}" stroke="#999" stroke-width="0.5"/>"##,
            x * CELL,
            y * CELL,
        );
    }
    for lm in &spec.landmarks {
        let [y, x] = lm.coord;
        let _ = write!(
            svg,
            r##"<text class="landmark" x="{}" y="{}" font-size="8" text-anchor="middle" fill="#333">{}</text>"##,
            x * CELL + CELL / 2,
            y * CELL + CELL - 4,
            escape(&lm.name)
        );
    }
    for hl in highlights {
        let Ok(flat) = spec.cell_of(&hl.state) else {
            continue;
        };
        let (y, x) = spec.layout.coord(flat);
        let _ = write!(
            svg,
            r#"<rect class="highlight" data-cell="{}" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{}" stroke-width="3"/>"#,
            hl.state.id,
            x * CELL + 2,
            y * CELL + 2,
            CELL - 4,
            CELL - 4,
            escape(&hl.color),
        );
        if !hl.label.is_empty() {
            let _ = write!(
                svg,
                r#"<text class="highlight-label" x="{}" y="{}" font-size="11" font-weight="bold" fill="{}">{}</text>"#,
                x * CELL + 5,
                y * CELL + 13,
                escape(&hl.color),
                escape(&hl.label)
            );
        }
    }
    if let Some(flat) = agent.and_then(|s| spec.cell_of(s).ok()) {
        let (y, x) = spec.layout.coord(flat);
        let _ = write!(
            svg,
            r##"<circle class="agent" cx="{}" cy="{}" r="{}" fill="#1f4e79"/>"##,
            x * CELL + CELL / 2,
            y * CELL + CELL / 2,
            CELL / 4
        );
    }
    svg.push_str("</svg>");
    svg
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::builtin;

    #[test]
    fn agent_drawn_at_start() {
        for (n, s) in [("classroom", "default"), ("frozenlake", "4x4"), ("maze", "umaze")] {
            let spec = builtin(n, s).unwrap();
            let text = render_text(&spec, Some(&spec.start));
            assert_eq!(text.matches('A').count(), 1);
            assert_eq!(text.matches('S').count(), 0, "{n}: start glyph hidden by agent");
            let svg = render_svg(&spec, Some(&spec.start), &[]);
            assert_eq!(svg.matches(r#"class="agent""#).count(), 1);
        }
        let spec = builtin("maze", "umaze").unwrap();
        assert_eq!(
            render_text(&spec, Some(&spec.start)),
            "#####\n#...#\n#.#.#\n#A.G#\n#####\n"
        );
    }

    #[test]
    fn double_t_goal_marked() {
        let spec = builtin("maze", "double-t").unwrap();
        let svg = render_svg(&spec, None, &[]);
        assert!(svg.contains(r#"class="goal" data-cell="[8,6]""#));
        assert_eq!(svg.matches(r#"class="goal""#).count(), 1);
    }

    #[test]
    fn wall_rects_match_layout() {
        for key in crate::env::registered_keys() {
            let (n, s) = key.split_once('/').unwrap();
            let spec = builtin(n, s).unwrap();
            let svg = render_svg(&spec, None, &[]);
            assert_eq!(
                svg.matches(r#"class="wall""#).count(),
                spec.layout.count(CellKind::Wall),
                "{key}"
            );
        }
    }

    #[test]
    fn highlight_drawn_for_known_cells_only() {
        let spec = builtin("classroom", "default").unwrap();
        let hl = |id: &str| CellHighlight {
            state: EnvState::from_coord(
                id.as_bytes()[1] as usize - b'0' as usize,
                id.as_bytes()[3] as usize - b'0' as usize,
            ),
            label: "1".into(),
            color: "#c00".into(),
        };
        let svg = render_svg(&spec, None, &[hl("[1,3]"), hl("[0,0]")]);
        assert_eq!(svg.matches(r#"class="highlight""#).count(), 1);
        assert!(svg.contains(r#"class="highlight" data-cell="[1,3]""#));
    }
}
