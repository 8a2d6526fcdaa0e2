#![allow(dead_code)]

use minimmit::config::{Horizon, ScenarioConfig};
use std::path::PathBuf;

/// Presets pinned as golden traces.
pub const GOLDEN_PRESETS: [&str; 3] = ["honest_6", "silent_leader_6", "equivocating_leader_6"];

/// Views per golden run; short enough to keep the pinned files small.
pub const GOLDEN_VIEWS: u64 = 6;

pub const GOLDEN_SEED: u64 = 42;

pub fn presets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets")
}

pub fn preset_path(name: &str) -> PathBuf {
    presets_dir().join(format!("{name}.json"))
}

pub fn preset(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&preset_path(name)).unwrap_or_else(|e| panic!("preset {name}: {e}"))
}

pub fn golden_config(name: &str) -> ScenarioConfig {
    let mut cfg = preset(name);
    cfg.horizon = Horizon::Views(GOLDEN_VIEWS);
    cfg.seed = GOLDEN_SEED;
    cfg
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.jsonl"))
}
