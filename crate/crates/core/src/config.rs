//! Scenario configuration: JSON schema and validation.

use crate::adversary::{AdversarySpec, Strategy};
use crate::types::{ParamsError, ProcessorId, Progression, ProtocolParams, Time, Transaction};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

pub const CONFIG_SCHEMA: u32 = 1;

/// Ids at or above this value are reserved for generated transactions.
pub const GENERATED_TX_BASE: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Processor `p` lives in region `p mod regions`.
    #[default]
    RoundRobin,
    /// Region index per processor.
    Explicit(Vec<usize>),
}

/// Delivery schedule for messages sent before GST.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreGstPolicy {
    /// Pre-GST messages travel with ordinary latency.
    None,
    /// Messages to `targets` (all if absent) arrive at exactly GST + delta.
    MaxDelay {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        targets: Option<Vec<u32>>,
    },
    /// Messages to `targets` (all if absent) arrive uniformly between the
    /// sampled latency and GST + delta.
    Chaotic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        targets: Option<Vec<u32>>,
    },
}

impl Default for PreGstPolicy {
    fn default() -> Self {
        PreGstPolicy::MaxDelay { targets: None }
    }
}

impl PreGstPolicy {
    fn targets(&self) -> Option<&Vec<u32>> {
        match self {
            PreGstPolicy::None => None,
            PreGstPolicy::MaxDelay { targets } | PreGstPolicy::Chaotic { targets } => {
                targets.as_ref()
            }
        }
    }

    pub fn targets_processor(&self, p: ProcessorId) -> bool {
        match self {
            PreGstPolicy::None => false,
            _ => self.targets().is_none_or(|t| t.contains(&p.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledTx {
    pub at_ms: f64,
    pub to: u32,
    pub id: u64,
    #[serde(default)]
    pub payload: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTxs {
    pub count: usize,
    pub from_ms: f64,
    pub until_ms: f64,
    /// Only send to processors outside the corrupted set.
    #[serde(default)]
    pub correct_only: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    #[serde(default)]
    pub schedule: Vec<ScheduledTx>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomTxs>,
    /// Whenever a correct leader proposes in view v, hand a fresh transaction
    /// to the leader of view v+1 at the same instant.
    #[serde(default)]
    pub after_proposal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Stop once every correct processor has entered view `views + 1`.
    Views(u64),
    /// Stop at this instant.
    Ms(f64),
}

impl std::str::FromStr for Horizon {
    type Err = String;

    /// Accepts `30v`, `30views`, `5000ms`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(num) = s.strip_suffix("ms") {
            num.trim()
                .parse::<f64>()
                .map(Horizon::Ms)
                .map_err(|e| format!("bad horizon `{s}`: {e}"))
        } else if let Some(num) = s.strip_suffix("views").or_else(|| s.strip_suffix('v')) {
            num.trim()
                .parse::<u64>()
                .map(Horizon::Views)
                .map_err(|e| format!("bad horizon `{s}`: {e}"))
        } else {
            Err(format!("horizon `{s}` needs a `ms` or `v` suffix"))
        }
    }
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub n: u32,
    pub f: u32,
    pub delta_ms: f64,
    #[serde(default)]
    pub progression: Progression,
    pub regions: Vec<String>,
    #[serde(default)]
    pub assignment: Assignment,
    /// One-way `[base_ms, jitter_ms]` per ordered region pair.
    pub latency_ms: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub gst_ms: f64,
    #[serde(default)]
    pub pre_gst: PreGstPolicy,
    #[serde(default)]
    pub corrupted: Vec<u32>,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub workload: Workload,
    pub horizon: Horizon,
    /// Hard stop; derived from the horizon when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_time_ms: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// A validated scenario in simulator units.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub params: ProtocolParams,
    pub regions: Vec<String>,
    pub assignment: Vec<usize>,
    /// `(base, jitter)` per ordered region pair.
    pub latency: Vec<Vec<(Time, Time)>>,
    pub gst: Time,
    pub pre_gst: PreGstPolicy,
    pub corrupted: BTreeSet<ProcessorId>,
    pub adversary: AdversarySpec,
    pub scheduled_txs: Vec<(Time, ProcessorId, Transaction)>,
    pub random_txs: Option<RandomTxs>,
    pub after_proposal: bool,
    pub horizon: Horizon,
    pub max_time: Time,
    pub seed: u64,
}

impl Scenario {
    pub fn is_correct(&self, p: ProcessorId) -> bool {
        !self.corrupted.contains(&p)
    }

    /// Largest effective one-way delay, never more than delta.
    pub fn max_latency(&self) -> Time {
        self.latency
            .iter()
            .flatten()
            .map(|(base, jitter)| Time((base.0 + jitter.0).max(1)).min(self.params.delta))
            .max()
            .unwrap_or(self.params.delta)
    }
}

fn non_negative(field: &str, v: f64) -> Result<Time, ConfigError> {
    if !v.is_finite() || v < 0.0 {
        return Err(invalid(
            field,
            format!("must be a non-negative number, got {v}"),
        ));
    }
    Ok(Time::from_ms(v))
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<Scenario, ConfigError> {
        if self.schema != CONFIG_SCHEMA {
            return Err(invalid(
                "schema",
                format!("unsupported version {}", self.schema),
            ));
        }
        let delta = non_negative("delta_ms", self.delta_ms)?;
        let params = ProtocolParams::new(self.n, self.f, delta, self.progression).map_err(|e| {
            let field = match e {
                ParamsError::NoProcessors => "n",
                ParamsError::TooManyFaults { .. } => "f",
                ParamsError::ZeroDelta => "delta_ms",
            };
            invalid(field, e.to_string())
        })?;
        let n = self.n as usize;

        if self.regions.is_empty() {
            return Err(invalid("regions", "at least one region is required"));
        }
        let r = self.regions.len();
        if self.latency_ms.len() != r {
            return Err(invalid(
                "latency_ms",
                format!("expected {r} rows, found {}", self.latency_ms.len()),
            ));
        }
        let mut latency = Vec::with_capacity(r);
        for (i, row) in self.latency_ms.iter().enumerate() {
            if row.len() != r {
                return Err(invalid(
                    format!("latency_ms[{i}]"),
                    format!("expected {r} entries, found {}", row.len()),
                ));
            }
            let mut out = Vec::with_capacity(r);
            for (j, [base, jitter]) in row.iter().enumerate() {
                out.push((
                    non_negative(&format!("latency_ms[{i}][{j}] base"), *base)?,
                    non_negative(&format!("latency_ms[{i}][{j}] jitter"), *jitter)?,
                ));
            }
            latency.push(out);
        }

        let assignment = match &self.assignment {
            Assignment::RoundRobin => (0..n).map(|p| p % r).collect(),
            Assignment::Explicit(list) => {
                if list.len() != n {
                    return Err(invalid(
                        "assignment",
                        format!("expected {n} entries, found {}", list.len()),
                    ));
                }
                if let Some(bad) = list.iter().find(|&&x| x >= r) {
                    return Err(invalid(
                        "assignment",
                        format!("region index {bad} out of range"),
                    ));
                }
                list.clone()
            }
        };

        let gst = non_negative("gst_ms", self.gst_ms)?;
        if let Some(targets) = self.pre_gst.targets() {
            check_ids("pre_gst.targets", targets, self.n)?;
        }

        let corrupted: BTreeSet<ProcessorId> =
            self.corrupted.iter().map(|&p| ProcessorId(p)).collect();
        check_ids("corrupted", &self.corrupted, self.n)?;
        if corrupted.len() != self.corrupted.len() {
            return Err(invalid("corrupted", "duplicate processor"));
        }
        if corrupted.len() > self.f as usize {
            return Err(invalid(
                "corrupted",
                format!(
                    "{} corrupted processors exceed f = {}",
                    corrupted.len(),
                    self.f
                ),
            ));
        }
        for (p, rules) in &self.adversary.strategies {
            if !corrupted.contains(&ProcessorId(*p)) {
                return Err(invalid(
                    format!("adversary.strategies.{p}"),
                    "processor is not corrupted",
                ));
            }
            for rule in rules {
                if let Some([lo, hi]) = rule.views {
                    if lo > hi {
                        return Err(invalid(
                            format!("adversary.strategies.{p}"),
                            "empty view range",
                        ));
                    }
                }
                match &rule.strategy {
                    Strategy::EquivocatingLeader { blocks } if *blocks < 2 => {
                        return Err(invalid(
                            format!("adversary.strategies.{p}"),
                            "equivocation needs at least 2 blocks",
                        ));
                    }
                    Strategy::Withholder { recipients } => {
                        check_ids(&format!("adversary.strategies.{p}"), recipients, self.n)?;
                    }
                    _ => {}
                }
            }
        }
        if self.adversary.max_messages_per_activation == 0 {
            return Err(invalid(
                "adversary.max_messages_per_activation",
                "must be positive",
            ));
        }

        let mut ids = BTreeSet::new();
        let mut scheduled_txs = Vec::with_capacity(self.workload.schedule.len());
        for (i, tx) in self.workload.schedule.iter().enumerate() {
            let field = format!("workload.schedule[{i}]");
            let at = non_negative(&field, tx.at_ms)?;
            check_ids(&field, &[tx.to], self.n)?;
            if tx.id >= GENERATED_TX_BASE {
                return Err(invalid(
                    field,
                    format!("ids must be below {GENERATED_TX_BASE}"),
                ));
            }
            if !ids.insert(tx.id) {
                return Err(invalid(
                    field,
                    format!("duplicate transaction id {}", tx.id),
                ));
            }
            scheduled_txs.push((
                at,
                ProcessorId(tx.to),
                Transaction::new(tx.id, tx.payload.as_bytes()),
            ));
        }
        if let Some(random) = &self.workload.random {
            let from = non_negative("workload.random.from_ms", random.from_ms)?;
            let until = non_negative("workload.random.until_ms", random.until_ms)?;
            if until < from {
                return Err(invalid("workload.random", "until_ms precedes from_ms"));
            }
            if random.correct_only && corrupted.len() == n {
                return Err(invalid(
                    "workload.random",
                    "no correct processor to receive",
                ));
            }
        }

        let max_time = match (self.horizon, self.max_time_ms) {
            (_, Some(ms)) => non_negative("max_time_ms", ms)?,
            (Horizon::Views(v), None) => gst + delta + Time(8 * delta.0 * (v + 2)),
            (Horizon::Ms(ms), None) => non_negative("horizon", ms)?,
        };
        match self.horizon {
            Horizon::Views(0) => return Err(invalid("horizon", "needs at least one view")),
            Horizon::Ms(ms) => {
                non_negative("horizon", ms)?;
            }
            Horizon::Views(_) => {}
        }

        Ok(Scenario {
            name: self.name.clone(),
            params,
            regions: self.regions.clone(),
            assignment,
            latency,
            gst,
            pre_gst: self.pre_gst.clone(),
            corrupted,
            adversary: self.adversary.clone(),
            scheduled_txs,
            random_txs: self.workload.random.clone(),
            after_proposal: self.workload.after_proposal,
            horizon: self.horizon,
            max_time,
            seed: self.seed,
        })
    }

    /// Single region, fixed latency, no faults.
    pub fn uniform(n: u32, f: u32, delta_ms: f64, latency_ms: f64, horizon: Horizon) -> Self {
        Self {
            schema: CONFIG_SCHEMA,
            name: String::new(),
            n,
            f,
            delta_ms,
            progression: Progression::Mini,
            regions: vec!["local".into()],
            assignment: Assignment::RoundRobin,
            latency_ms: vec![vec![[latency_ms, 0.0]]],
            gst_ms: 0.0,
            pre_gst: PreGstPolicy::default(),
            corrupted: Vec::new(),
            adversary: AdversarySpec::default(),
            workload: Workload::default(),
            horizon,
            max_time_ms: None,
            seed: 0,
        }
    }
}

fn check_ids(field: &str, ids: &[u32], n: u32) -> Result<(), ConfigError> {
    match ids.iter().find(|&&p| p >= n) {
        Some(p) => Err(invalid(
            field,
            format!("processor {p} out of range for n = {n}"),
        )),
        None => Ok(()),
    }
}
