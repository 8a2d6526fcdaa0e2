//! Latency metrics over traces.
//!
//! Each per-view or per-block quantity is anchored at the median over correct
//! processors. A `None` summary means there were no samples.

use crate::trace::{EventKind, Trace, WireMsg};
use crate::types::{lead, BlockHash, ProcessorId, Time, TxId, View};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub const DEFAULT_WARMUP_VIEWS: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetricsOptions {
    /// Views `1..=warmup_views` are left out of every summary.
    pub warmup_views: u64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            warmup_views: DEFAULT_WARMUP_VIEWS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single sample.
    pub stddev: f64,
    pub p50: f64,
    pub p99: f64,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Option<Summary> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Summary {
            count: n,
            mean,
            stddev: var.sqrt(),
            p50: percentile(&sorted, 50.0),
            p99: percentile(&sorted, 99.0),
        })
    }
}

/// Nearest-rank percentile of sorted, non-empty data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Median of non-empty data; the mean of the middle pair for even sizes.
pub fn median(values: &mut [Time]) -> f64 {
    values.sort();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2].as_ms()
    } else {
        (values[n / 2 - 1].as_ms() + values[n / 2].as_ms()) / 2.0
    }
}

/// Timing facts extracted once from a trace.
struct Timeline {
    correct: Vec<ProcessorId>,
    region: HashMap<ProcessorId, String>,
    entries: BTreeMap<View, BTreeMap<ProcessorId, Time>>,
    /// block -> (view, proposal send time by its leader)
    proposals: HashMap<BlockHash, (View, Time)>,
    finals: HashMap<BlockHash, BTreeMap<ProcessorId, Time>>,
    injected: BTreeMap<TxId, (Time, ProcessorId)>,
    included: HashMap<TxId, BTreeMap<ProcessorId, Time>>,
}

impl Timeline {
    fn build(trace: &Trace) -> Self {
        let h = &trace.header;
        let correct = h.correct();
        let is_correct: BTreeSet<ProcessorId> = correct.iter().copied().collect();
        let region = correct
            .iter()
            .map(|p| (*p, h.region_of(*p).unwrap_or("").to_string()))
            .collect();
        let mut tl = Timeline {
            correct,
            region,
            entries: BTreeMap::new(),
            proposals: HashMap::new(),
            finals: HashMap::new(),
            injected: BTreeMap::new(),
            included: HashMap::new(),
        };
        for e in &trace.events {
            let Some(p) = e.proc else { continue };
            match &e.kind {
                EventKind::Send {
                    msg:
                        WireMsg::Proposal {
                            signer,
                            view,
                            block_hash,
                            ..
                        },
                    ..
                } if lead(*view, h.n).ok() == Some(*signer) => {
                    tl.proposals.entry(*block_hash).or_insert((*view, e.time));
                }
                EventKind::TxArrival { tx } => {
                    tl.injected.entry(*tx).or_insert((e.time, p));
                }
                _ if !is_correct.contains(&p) => {}
                EventKind::EnterView { view } => {
                    tl.entries
                        .entry(*view)
                        .or_default()
                        .entry(p)
                        .or_insert(e.time);
                }
                EventKind::Finalize {
                    block_hash,
                    appended,
                    ..
                } => {
                    tl.finals
                        .entry(*block_hash)
                        .or_default()
                        .entry(p)
                        .or_insert(e.time);
                    for tx in appended {
                        tl.included
                            .entry(*tx)
                            .or_default()
                            .entry(p)
                            .or_insert(e.time);
                    }
                }
                _ => {}
            }
        }
        tl
    }

    fn complete(&self, m: &BTreeMap<ProcessorId, Time>) -> bool {
        m.len() == self.correct.len()
    }

    fn in_region<'a>(
        &'a self,
        m: &'a BTreeMap<ProcessorId, Time>,
        region: Option<&'a str>,
    ) -> impl Iterator<Item = (ProcessorId, Time)> + 'a {
        m.iter()
            .filter(move |(p, _)| region.is_none_or(|r| self.region[p] == r))
            .map(|(p, t)| (*p, *t))
    }

    /// Median correct entry time of the first post-warmup view.
    fn steady_start(&self, opts: MetricsOptions) -> Option<f64> {
        let m = self.entries.get(&View(opts.warmup_views + 1))?;
        let mut times: Vec<Time> = m.values().copied().collect();
        (!times.is_empty()).then(|| median(&mut times))
    }

    fn view_samples(&self, opts: MetricsOptions, region: Option<&str>) -> Vec<f64> {
        let mut out = Vec::new();
        for (view, now) in self.entries.range(View(opts.warmup_views + 1)..) {
            let Some(next) = self.entries.get(&view.next()) else {
                break;
            };
            if !self.complete(now) || !self.complete(next) {
                continue;
            }
            match region {
                None => {
                    let mut a: Vec<Time> = now.values().copied().collect();
                    let mut b: Vec<Time> = next.values().copied().collect();
                    out.push(median(&mut b) - median(&mut a));
                }
                Some(_) => {
                    let mut d: Vec<Time> = self
                        .in_region(next, region)
                        .map(|(p, t)| t.saturating_sub(now[&p]))
                        .collect();
                    if !d.is_empty() {
                        out.push(median(&mut d));
                    }
                }
            }
        }
        out
    }

    fn finalization_samples(&self, opts: MetricsOptions, region: Option<&str>) -> Vec<f64> {
        let mut blocks: Vec<(View, Time, &BTreeMap<ProcessorId, Time>)> = self
            .finals
            .iter()
            .filter(|(_, m)| self.complete(m))
            .filter_map(|(h, m)| {
                let (view, sent) = self.proposals.get(h)?;
                (view.0 > opts.warmup_views).then_some((*view, *sent, m))
            })
            .collect();
        blocks.sort_by_key(|(v, _, _)| *v);
        blocks
            .into_iter()
            .filter_map(|(_, sent, m)| {
                let mut times: Vec<Time> = self.in_region(m, region).map(|(_, t)| t).collect();
                (!times.is_empty()).then(|| median(&mut times) - sent.as_ms())
            })
            .collect()
    }

    fn e2e_samples(&self, opts: MetricsOptions, region: Option<&str>) -> Vec<f64> {
        let Some(start) = self.steady_start(opts) else {
            return Vec::new();
        };
        self.injected
            .iter()
            .filter(|(_, (at, _))| at.as_ms() >= start)
            .filter_map(|(tx, (at, _))| {
                let m = self.included.get(tx)?;
                if !self.complete(m) {
                    return None;
                }
                let mut times: Vec<Time> = self.in_region(m, region).map(|(_, t)| t).collect();
                (!times.is_empty()).then(|| median(&mut times) - at.as_ms())
            })
            .collect()
    }

    fn regions(&self) -> BTreeSet<String> {
        self.region.values().cloned().collect()
    }
}

/// Per-view transition times after warmup, in ms.
pub fn view_latency_samples(trace: &Trace, opts: MetricsOptions) -> Vec<f64> {
    Timeline::build(trace).view_samples(opts, None)
}

/// Per-block delay from proposal to median correct finalization, in ms.
pub fn finalization_latency_samples(trace: &Trace, opts: MetricsOptions) -> Vec<f64> {
    Timeline::build(trace).finalization_samples(opts, None)
}

/// Per-transaction delay from injection to median correct log inclusion, in ms.
pub fn e2e_latency_samples(trace: &Trace, opts: MetricsOptions) -> Vec<f64> {
    Timeline::build(trace).e2e_samples(opts, None)
}

pub fn view_latency(trace: &Trace, opts: MetricsOptions) -> Option<Summary> {
    Summary::of(&view_latency_samples(trace, opts))
}

pub fn finalization_latency(trace: &Trace, opts: MetricsOptions) -> Option<Summary> {
    Summary::of(&finalization_latency_samples(trace, opts))
}

pub fn end_to_end_tx_latency(trace: &Trace, opts: MetricsOptions) -> Option<Summary> {
    Summary::of(&e2e_latency_samples(trace, opts))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySet {
    pub view_latency: Option<Summary>,
    pub finalization_latency: Option<Summary>,
    pub e2e_latency: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub warmup_views: u64,
    #[serde(flatten)]
    pub overall: LatencySet,
    pub regions: BTreeMap<String, LatencySet>,
}

impl MetricsReport {
    pub fn compute(trace: &Trace, opts: MetricsOptions) -> Self {
        let tl = Timeline::build(trace);
        let set = |region: Option<&str>| LatencySet {
            view_latency: Summary::of(&tl.view_samples(opts, region)),
            finalization_latency: Summary::of(&tl.finalization_samples(opts, region)),
            e2e_latency: Summary::of(&tl.e2e_samples(opts, region)),
        };
        Self {
            warmup_views: opts.warmup_views,
            overall: set(None),
            regions: tl
                .regions()
                .iter()
                .map(|r| (r.clone(), set(Some(r))))
                .collect(),
        }
    }

    /// Rows of `(metric, region, statistic, value)`; region `all` is the
    /// overall figure and statistic `empty` marks a metric without samples.
    pub fn csv_rows(&self) -> Vec<[String; 4]> {
        let mut rows = Vec::new();
        let mut emit = |region: &str, set: &LatencySet| {
            for (name, s) in [
                ("view_latency_ms", &set.view_latency),
                ("finalization_latency_ms", &set.finalization_latency),
                ("e2e_latency_ms", &set.e2e_latency),
            ] {
                let row = |stat: &str, value: String| {
                    [
                        name.to_string(),
                        region.to_string(),
                        stat.to_string(),
                        value,
                    ]
                };
                match s {
                    None => rows.push(row("empty", String::new())),
                    Some(s) => {
                        rows.push(row("count", s.count.to_string()));
                        rows.push(row("mean", format!("{:.3}", s.mean)));
                        rows.push(row("stddev", format!("{:.3}", s.stddev)));
                        rows.push(row("p50", format!("{:.3}", s.p50)));
                        rows.push(row("p99", format!("{:.3}", s.p99)));
                    }
                }
            }
        };
        emit("all", &self.overall);
        for (r, set) in &self.regions {
            emit(r, set);
        }
        rows
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "region", "statistic", "value"])?;
        for row in self.csv_rows() {
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// `view latency 120.46ms (σ=25.10ms), finalization 199.16ms (σ=32.52ms)`
    pub fn summary_line(&self) -> String {
        let fmt = |s: &Option<Summary>| match s {
            Some(s) => format!("{:.2}ms (σ={:.2}ms)", s.mean, s.stddev),
            None => "n/a".to_string(),
        };
        format!(
            "view latency {}, finalization {}",
            fmt(&self.overall.view_latency),
            fmt(&self.overall.finalization_latency)
        )
    }
}
