use serde::{Deserialize, Serialize};

use super::{selection_score, EpisodeResult, Phase, RunOutput};

pub const ROLLING_WINDOW: usize = 100;
/// Most points kept per chart series.
const MAX_POINTS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub goal_rate: f64,
}

impl Stats {
    pub fn of(records: &[EpisodeResult]) -> Self {
        let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
        let goals = records.iter().filter(|r| r.goal_reached).count();
        let mut s = Self::of_values(&rewards);
        s.goal_rate = if records.is_empty() { 0.0 } else { goals as f64 / records.len() as f64 };
        s
    }

    pub fn of_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: 0.0, median: 0.0, std: 0.0, min: 0.0, max: 0.0, goal_rate: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Self {
            n,
            mean,
            median,
            std: var.sqrt(),
            min: sorted[0],
            max: sorted[n - 1],
            goal_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub name: String,
    pub agent: String,
    pub adapter: String,
    pub instructed: bool,
    pub best_repeat: u32,
    pub failed_repeats: Vec<u32>,
    pub train: Stats,
    pub test: Stats,
    /// Mean over repeats of the final-10% training reward.
    pub final_train_mean: f64,
    /// Mean training reward over the instruction budget window.
    pub early_train_mean: f64,
}

/// Plain versus instructed arm of one agent x adapter pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub agent: String,
    pub adapter: String,
    pub plain_test_mean: f64,
    pub instructed_test_mean: f64,
    pub plain_early_train_mean: f64,
    pub instructed_early_train_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub environment: String,
    pub arms: Vec<ArmSummary>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub arm: String,
    pub x: Vec<u32>,
    pub y: Vec<f64>,
}

/// One chart: a phase with or without instructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub phase: Phase,
    pub instructed: bool,
    pub title: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub environment: String,
    pub window: usize,
    pub panels: Vec<Panel>,
}

/// Trailing mean; the first points average what is available.
pub fn rolling_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let from = (i + 1).saturating_sub(window);
            let slice = &values[from..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Per-episode reward averaged over repeats.
fn episode_means(records: &[EpisodeResult]) -> Vec<f64> {
    let len = records.iter().map(|r| r.episode as usize + 1).max().unwrap_or(0);
    let mut sum = vec![0.0; len];
    let mut count = vec![0usize; len];
    for r in records {
        sum[r.episode as usize] += r.reward;
        count[r.episode as usize] += 1;
    }
    sum.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect()
}

fn by_repeat(records: &[EpisodeResult]) -> Vec<&[EpisodeResult]> {
    records.chunk_by(|a, b| a.repeat == b.repeat).collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

pub fn evaluate(output: &RunOutput) -> (Summary, FigureData) {
    let config = &output.config;
    let early = config.instruction_episode_budget.max(1);
    let arms: Vec<ArmSummary> = output
        .arms
        .iter()
        .map(|a| ArmSummary {
            name: a.name.clone(),
            agent: a.agent.as_str().into(),
            adapter: a.adapter.clone(),
            instructed: a.instructed,
            best_repeat: a.best_repeat,
            failed_repeats: a.failed.iter().map(|(r, _)| *r).collect(),
            train: Stats::of(&a.train),
            test: Stats::of(&a.test),
            final_train_mean: mean(by_repeat(&a.train).into_iter().map(selection_score)),
            early_train_mean: mean(a.train.iter().filter(|r| r.episode < early).map(|r| r.reward)),
        })
        .collect();

    let mut comparisons = Vec::new();
    for plain in arms.iter().filter(|a| !a.instructed) {
        if let Some(instr) = arms
            .iter()
            .find(|a| a.instructed && a.agent == plain.agent && a.adapter == plain.adapter)
        {
            comparisons.push(Comparison {
                agent: plain.agent.clone(),
                adapter: plain.adapter.clone(),
                plain_test_mean: plain.test.mean,
                instructed_test_mean: instr.test.mean,
                plain_early_train_mean: plain.early_train_mean,
                instructed_early_train_mean: instr.early_train_mean,
            });
        }
    }

    let mut panels = Vec::new();
    for phase in [Phase::Train, Phase::Test] {
        for instructed in [false, true] {
            let series: Vec<Series> = output
                .arms
                .iter()
                .filter(|a| a.instructed == instructed)
                .map(|a| {
                    let records = if phase == Phase::Train { &a.train } else { &a.test };
                    let curve = rolling_mean(&episode_means(records), ROLLING_WINDOW);
                    let step = curve.len().div_ceil(MAX_POINTS).max(1);
                    let keep: Vec<usize> = (0..curve.len())
                        .filter(|i| i % step == step - 1 || *i + 1 == curve.len())
                        .collect();
                    Series {
                        arm: a.name.clone(),
                        x: keep.iter().map(|&i| i as u32 + 1).collect(),
                        y: keep.iter().map(|&i| curve[i]).collect(),
                    }
                })
                .collect();
            if series.is_empty() {
                continue;
            }
            panels.push(Panel {
                phase,
                instructed,
                title: format!(
                    "{} {}, {} instructions",
                    config.environment.key(),
                    phase.as_str(),
                    if instructed { "with" } else { "without" }
                ),
                series,
            });
        }
    }
    let environment = config.environment.key();
    (
        Summary {
            name: config.name.clone(),
            environment: environment.clone(),
            arms,
            comparisons,
        },
        FigureData {
            environment,
            window: ROLLING_WINDOW,
            panels,
        },
    )
}
