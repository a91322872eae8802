//! Result directory layout:
//!
//! ```text
//! <dir>/config.toml
//! <dir>/summary.json
//! <dir>/figures.json
//! <dir>/figures/{train,test}_{plain,instr}.svg
//! <dir>/<arm>/train.tsv
//! <dir>/<arm>/test.tsv
//! <dir>/<arm>/agent.json
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{evaluate, line_chart_svg, EpisodeResult, FigureData, Phase, RunError, RunOutput, Summary};

/// Files written into every arm directory.
pub const RESULT_FILES: [&str; 3] = ["train.tsv", "test.tsv", "agent.json"];

const HEADER: &str = "repeat\tepisode\treward\tshaping\tsteps\tgoal\tsub_goals";

/// One row per episode. `sub_goals` is a 0/1 string per sub-goal, `-` when
/// the episode was not shaped.
pub fn write_records(w: &mut impl Write, records: &[EpisodeResult]) -> std::io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for r in records {
        let hits: String = if r.sub_goals_hit.is_empty() {
            "-".into()
        } else {
            r.sub_goals_hit.iter().map(|h| if *h { '1' } else { '0' }).collect()
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.repeat, r.episode, r.reward, r.shaping, r.steps, r.goal_reached as u8, hits
        )?;
    }
    Ok(())
}

pub fn read_records(text: &str, phase: Phase) -> Result<Vec<EpisodeResult>, RunError> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(RunError::Config("records file has an unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || RunError::Config(format!("records line {}: {line:?}", i + 2));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            Ok(EpisodeResult {
                repeat: f[0].parse().map_err(|_| bad())?,
                episode: f[1].parse().map_err(|_| bad())?,
                phase,
                reward: f[2].parse().map_err(|_| bad())?,
                shaping: f[3].parse().map_err(|_| bad())?,
                steps: f[4].parse().map_err(|_| bad())?,
                goal_reached: match f[5] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad()),
                },
                sub_goals_hit: match f[6] {
                    "-" => Vec::new(),
                    s => s
                        .chars()
                        .map(|c| match c {
                            '1' => Ok(true),
                            '0' => Ok(false),
                            _ => Err(bad()),
                        })
                        .collect::<Result<_, _>>()?,
                },
            })
        })
        .collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(|e| RunError::Io(path.display().to_string(), e))
}

fn mkdir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path).map_err(|e| RunError::Io(path.display().to_string(), e))
}

/// Writes every result file for `output` under `dir`. Contents depend only
/// on the run output, never on time or paths.
pub fn write_results(dir: &Path, output: &RunOutput) -> Result<(Summary, FigureData), RunError> {
    mkdir(&dir.join("figures"))?;
    write(&dir.join("config.toml"), output.config.to_toml().as_bytes())?;
    for arm in &output.arms {
        let arm_dir = dir.join(&arm.name);
        mkdir(&arm_dir)?;
        for (file, records) in [("train.tsv", &arm.train), ("test.tsv", &arm.test)] {
            let mut buf = Vec::new();
            write_records(&mut buf, records).expect("writing to memory");
            write(&arm_dir.join(file), &buf)?;
        }
        write(&arm_dir.join("agent.json"), arm.snapshot.as_bytes())?;
    }
    let (summary, figures) = evaluate(output);
    write(&dir.join("summary.json"), pretty(&summary).as_bytes())?;
    write(&dir.join("figures.json"), pretty(&figures).as_bytes())?;
    for panel in &figures.panels {
        let file = format!(
            "{}_{}.svg",
            panel.phase.as_str(),
            if panel.instructed { "instr" } else { "plain" }
        );
        write(&dir.join("figures").join(file), line_chart_svg(panel).as_bytes())?;
    }
    Ok((summary, figures))
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn records_round_trip(
            rows in proptest::collection::vec(
                (0u32..10, 0u32..10_000, -10.0f64..10.0, 0.0f64..2.0, 1u32..300, any::<bool>(),
                 proptest::collection::vec(any::<bool>(), 0..3)),
                0..40)
        ) {
            let records: Vec<EpisodeResult> = rows
                .into_iter()
                .map(|(repeat, episode, reward, shaping, steps, goal_reached, sub_goals_hit)| EpisodeResult {
                    repeat, episode, phase: Phase::Train, reward, shaping, steps, goal_reached, sub_goals_hit,
                })
                .collect();
            let mut buf = Vec::new();
            write_records(&mut buf, &records).unwrap();
            let back = read_records(std::str::from_utf8(&buf).unwrap(), Phase::Train).unwrap();
            prop_assert_eq!(back, records);
        }
    }

    #[test]
    fn bad_rows_are_rejected() {
        assert!(read_records("nope\n", Phase::Test).is_err());
        let text = format!("{HEADER}\n0\t0\t1\t0\t3\t2\t-\n");
        assert!(read_records(&text, Phase::Test).is_err());
    }
}
