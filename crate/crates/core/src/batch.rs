//! Seed sweeps and the paired progression comparison.
//!
//! Each run is single-threaded; runs are spread over the rayon pool.

use crate::config::{ConfigError, Scenario, ScenarioConfig};
use crate::metrics::{finalization_latency_samples, view_latency_samples, MetricsOptions, Summary};
use crate::sim::run_scenario;
use crate::trace::Trace;
use crate::types::Progression;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Runs `scenario` once per seed and maps each trace through `f`, in seed order.
pub fn run_seeds<T, F>(scenario: &Scenario, seeds: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, Trace) -> T + Sync,
{
    seeds
        .into_par_iter()
        .map(|seed| {
            let mut s = scenario.clone();
            s.seed = seed;
            f(seed, run_scenario(&s))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub progression: Progression,
    /// Pooled over every post-warmup view of every seed.
    pub view_latency: Option<Summary>,
    pub finalization_latency: Option<Summary>,
}

impl VariantStats {
    pub fn mean_view_latency(&self) -> Option<f64> {
        self.view_latency.map(|s| s.mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seeds: u64,
    pub mini: VariantStats,
    pub large: VariantStats,
    /// `(large - mini) / large` of mean view latency, in percent.
    pub view_latency_reduction_pct: Option<f64>,
}

fn variant(
    base: &ScenarioConfig,
    progression: Progression,
    seeds: Range<u64>,
    opts: MetricsOptions,
) -> Result<VariantStats, ConfigError> {
    let mut cfg = base.clone();
    cfg.progression = progression;
    let scenario = cfg.validate()?;
    let per_seed = run_seeds(&scenario, seeds, |_, t| {
        (
            view_latency_samples(&t, opts),
            finalization_latency_samples(&t, opts),
        )
    });
    let views: Vec<f64> = per_seed
        .iter()
        .flat_map(|(v, _)| v.iter().copied())
        .collect();
    let finals: Vec<f64> = per_seed
        .iter()
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    Ok(VariantStats {
        progression,
        view_latency: Summary::of(&views),
        finalization_latency: Summary::of(&finals),
    })
}

/// Runs both progressions over the same seeds.
pub fn compare(
    config: &ScenarioConfig,
    seeds: Range<u64>,
    opts: MetricsOptions,
) -> Result<Comparison, ConfigError> {
    let mini = variant(config, Progression::Mini, seeds.clone(), opts)?;
    let large = variant(config, Progression::Large, seeds.clone(), opts)?;
    let reduction = match (mini.mean_view_latency(), large.mean_view_latency()) {
        (Some(m), Some(l)) if l > 0.0 => Some((l - m) / l * 100.0),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(Comparison {
        seeds: seeds.end - seeds.start,
        mini,
        large,
        view_latency_reduction_pct: reduction,
    })
}
