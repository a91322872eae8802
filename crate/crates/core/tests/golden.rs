use std::path::Path;

use langrid_core::adapters::{AdapterKind, AdapterSpec};
use langrid_core::agents::AgentKind;
use langrid_core::runner::{import_published, run, write_results, ArmSpec, RunContext};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/smoke_summary.json");

/// A scaled-down UMaze run with both agents. Set `LANGRID_REGENERATE=1` to
/// rewrite the golden file after an intended change.
#[test]
fn summary_matches_golden() {
    let mut config = import_published("smoke_umaze").unwrap();
    config.train_episodes = 150;
    config.instruction_episode_budget = 30;
    config.test_episodes = 10;
    config.dqn.hidden = vec![16];
    config.arms.push(ArmSpec {
        agent: AgentKind::Dqn,
        adapter: AdapterSpec::new(AdapterKind::Rule),
    });
    let dir = tempfile::tempdir().unwrap();
    write_results(dir.path(), &run(&config, &RunContext::default()).unwrap()).unwrap();
    let got = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    if std::env::var("LANGRID_REGENERATE").is_ok() {
        std::fs::write(Path::new(GOLDEN), &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(GOLDEN).unwrap());
}
