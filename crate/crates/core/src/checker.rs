//! Post-hoc verification of safety and liveness properties over a trace.
//!
//! Checks are pure functions of the trace. A failing verdict carries the
//! index of the earliest event that witnesses the violation.

use crate::config::Horizon;
use crate::sim::SETTLE_HOPS;
use crate::trace::{EndReason, EventKind, Trace, TraceEvent, WireMsg};
use crate::types::{lead, BlockHash, ProcessorId, SignerSet, Time, TxId, View};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub status: Status,
    /// Earliest event index witnessing a failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<usize>,
    pub detail: String,
}

impl Verdict {
    fn pass(check: &str, detail: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            status: Status::Pass,
            witness: None,
            detail: detail.into(),
        }
    }

    fn fail(check: &str, witness: usize, detail: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            status: Status::Fail,
            witness: Some(witness),
            detail: detail.into(),
        }
    }

    fn inconclusive(check: &str, detail: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            status: Status::Inconclusive,
            witness: None,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub all_pass: bool,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn new(verdicts: Vec<Verdict>) -> Self {
        Self {
            all_pass: verdicts.iter().all(|v| v.status != Status::Fail),
            verdicts,
        }
    }

    pub fn get(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| v.status == Status::Fail)
    }
}

/// The four safety checks.
pub fn check_safety(trace: &Trace) -> Report {
    Report::new(vec![
        check_one_vote(trace),
        check_x1(trace),
        check_x2(trace),
        check_consistency(trace),
    ])
}

/// Safety checks followed by the liveness checks.
pub fn check_all(trace: &Trace) -> Report {
    let mut verdicts = check_safety(trace).verdicts;
    verdicts.push(check_progression(trace));
    verdicts.push(check_post_gst_leader(trace));
    verdicts.push(check_tx_liveness(trace));
    Report::new(verdicts)
}

fn sent_messages(trace: &Trace) -> impl Iterator<Item = (usize, &TraceEvent, &WireMsg)> {
    trace
        .events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match &e.kind {
            EventKind::Send { msg, .. } => Some((i, e, msg)),
            _ => None,
        })
}

/// Correct processors vote for at most one block per view.
pub fn check_one_vote(trace: &Trace) -> Verdict {
    const NAME: &str = "one_vote";
    let corrupted = trace.header.corrupted_set();
    let mut voted: HashMap<(ProcessorId, View), BlockHash> = HashMap::new();
    for (i, _, msg) in sent_messages(trace) {
        if let WireMsg::Vote {
            signer,
            view,
            block_hash,
            ..
        } = msg
        {
            if corrupted.contains(signer) {
                continue;
            }
            let first = *voted.entry((*signer, *view)).or_insert(*block_hash);
            if first != *block_hash {
                return Verdict::fail(
                    NAME,
                    i,
                    format!("{signer} voted for {first} and {block_hash} in view {view}"),
                );
            }
        }
    }
    Verdict::pass(NAME, format!("{} correct votes", voted.len()))
}

/// Distinct vote senders per block, accumulated in trace order.
#[derive(Default)]
struct VoteTally {
    voters: HashMap<BlockHash, SignerSet>,
    by_view: BTreeMap<View, BTreeSet<BlockHash>>,
}

impl VoteTally {
    /// Returns the new count when the signer is new for this block.
    fn add(&mut self, view: View, block: BlockHash, signer: ProcessorId) -> Option<usize> {
        let set = self.voters.entry(block).or_default();
        if !set.insert(signer) {
            return None;
        }
        self.by_view.entry(view).or_default().insert(block);
        Some(set.len())
    }

    fn count(&self, block: &BlockHash) -> usize {
        self.voters.get(block).map_or(0, SignerSet::len)
    }

    fn blocks_in(&self, view: View) -> impl Iterator<Item = &BlockHash> {
        self.by_view.get(&view).into_iter().flatten()
    }
}

/// No view has an L-notarized block alongside a different M-notarized one.
pub fn check_x1(trace: &Trace) -> Verdict {
    const NAME: &str = "x1";
    let params = trace.header.params();
    let (l, m) = (params.l_quorum(), params.m_quorum());
    let mut tally = VoteTally::default();
    for (i, _, msg) in sent_messages(trace) {
        let WireMsg::Vote {
            signer,
            view,
            block_hash,
            ..
        } = msg
        else {
            continue;
        };
        let Some(count) = tally.add(*view, *block_hash, *signer) else {
            continue;
        };
        if count < m {
            continue;
        }
        for other in tally.blocks_in(*view) {
            if other == block_hash {
                continue;
            }
            let c = tally.count(other);
            if (count >= l && c >= m) || (count >= m && c >= l) {
                return Verdict::fail(
                    NAME,
                    i,
                    format!(
                        "view {view}: {block_hash} has {count} voters and {other} has {c} (l = {l}, m = {m})"
                    ),
                );
            }
        }
    }
    Verdict::pass(NAME, "no conflicting notarization beside an L-notarization")
}

/// No view has an L-notarized block and a nullification.
pub fn check_x2(trace: &Trace) -> Verdict {
    const NAME: &str = "x2";
    let params = trace.header.params();
    let (l, m) = (params.l_quorum(), params.m_quorum());
    let mut tally = VoteTally::default();
    let mut nullifiers: HashMap<View, SignerSet> = HashMap::new();
    let mut l_views: BTreeSet<View> = BTreeSet::new();
    for (i, _, msg) in sent_messages(trace) {
        let view = match msg {
            WireMsg::Vote {
                signer,
                view,
                block_hash,
                ..
            } => {
                if tally
                    .add(*view, *block_hash, *signer)
                    .is_some_and(|c| c >= l)
                {
                    l_views.insert(*view);
                }
                *view
            }
            WireMsg::Nullify { signer, view } => {
                nullifiers.entry(*view).or_default().insert(*signer);
                *view
            }
            _ => continue,
        };
        let nulls = nullifiers.get(&view).map_or(0, SignerSet::len);
        if l_views.contains(&view) && nulls >= m {
            return Verdict::fail(
                NAME,
                i,
                format!("view {view} has an L-notarized block and {nulls} nullify senders"),
            );
        }
    }
    Verdict::pass(NAME, "no L-notarized view is nullified")
}

/// Parent links of every block named in a send.
fn parent_map(trace: &Trace) -> HashMap<BlockHash, (View, Option<BlockHash>)> {
    let mut parents = HashMap::new();
    for (_, _, msg) in sent_messages(trace) {
        if let Some((hash, parent)) = msg.block_link() {
            parents.entry(hash).or_insert((msg.view(), parent));
        }
    }
    parents
}

/// Whether `ancestor` is `block` or one of its ancestors.
fn descends(
    parents: &HashMap<BlockHash, (View, Option<BlockHash>)>,
    block: BlockHash,
    ancestor: BlockHash,
    ancestor_view: View,
) -> bool {
    let mut cur = block;
    loop {
        if cur == ancestor {
            return true;
        }
        match parents.get(&cur) {
            Some((view, Some(parent))) if *view > ancestor_view => cur = *parent,
            _ => return false,
        }
    }
}

/// Correct logs are pairwise prefix-compatible at all times, and every
/// L-notarized block lies on one chain.
pub fn check_consistency(trace: &Trace) -> Verdict {
    const NAME: &str = "consistency";
    let corrupted = trace.header.corrupted_set();
    let params = trace.header.params();
    let mut logs: HashMap<ProcessorId, usize> = HashMap::new();
    let mut longest: Vec<TxId> = Vec::new();
    let mut tally = VoteTally::default();
    let mut l_blocks: Vec<(View, BlockHash, usize)> = Vec::new();

    for (i, e) in trace.events.iter().enumerate() {
        let Some(p) = e.proc else { continue };
        match &e.kind {
            EventKind::Conflict {
                view, block_hash, ..
            } if !corrupted.contains(&p) => {
                return Verdict::fail(
                    NAME,
                    i,
                    format!("{p} finalized {block_hash} (view {view}) off its log"),
                );
            }
            EventKind::Finalize { appended, .. } if !corrupted.contains(&p) => {
                let len = logs.entry(p).or_default();
                for tx in appended {
                    if *len < longest.len() {
                        if longest[*len] != *tx {
                            return Verdict::fail(
                                NAME,
                                i,
                                format!(
                                    "{p} log position {} holds tx {} but another log holds {}",
                                    *len, tx.0, longest[*len].0
                                ),
                            );
                        }
                    } else {
                        longest.push(*tx);
                    }
                    *len += 1;
                }
            }
            EventKind::Send {
                msg:
                    WireMsg::Vote {
                        signer,
                        view,
                        block_hash,
                        ..
                    },
                ..
            } => {
                let count = tally.add(*view, *block_hash, *signer);
                if count == Some(params.l_quorum()) {
                    l_blocks.push((*view, *block_hash, i));
                }
            }
            _ => {}
        }
    }

    let parents = parent_map(trace);
    let mut chain = l_blocks.clone();
    chain.sort();
    for pair in chain.windows(2) {
        let (lo_view, lo, lo_at) = pair[0];
        let (_, hi, hi_at) = pair[1];
        if !descends(&parents, hi, lo, lo_view) {
            return Verdict::fail(
                NAME,
                lo_at.max(hi_at),
                format!("L-notarized blocks {lo} and {hi} are not on one chain"),
            );
        }
    }
    Verdict::pass(
        NAME,
        format!(
            "{} log entries agree; {} L-notarized blocks chain",
            longest.len(),
            l_blocks.len()
        ),
    )
}

/// Per-view entry times of correct processors.
struct Entries {
    /// view -> processor -> (time, event index)
    by_view: BTreeMap<View, BTreeMap<ProcessorId, (Time, usize)>>,
}

impl Entries {
    fn collect(trace: &Trace) -> Self {
        let corrupted = trace.header.corrupted_set();
        let mut by_view: BTreeMap<View, BTreeMap<ProcessorId, (Time, usize)>> = BTreeMap::new();
        for (i, e) in trace.events.iter().enumerate() {
            if let (EventKind::EnterView { view }, Some(p)) = (&e.kind, e.proc) {
                if !corrupted.contains(&p) {
                    by_view
                        .entry(*view)
                        .or_default()
                        .entry(p)
                        .or_insert((e.time, i));
                }
            }
        }
        Self { by_view }
    }

    fn first(&self, view: View) -> Option<(Time, usize)> {
        self.by_view.get(&view)?.values().min().copied()
    }
}

/// Index of the first event strictly after `deadline`, or the last event.
fn first_after(trace: &Trace, deadline: Time) -> usize {
    trace
        .events
        .iter()
        .position(|e| e.time > deadline)
        .unwrap_or(trace.events.len().saturating_sub(1))
}

/// Every correct processor enters every view that some correct processor
/// entered early enough to oblige it.
pub fn check_progression(trace: &Trace) -> Verdict {
    const NAME: &str = "progression";
    let h = &trace.header;
    let correct = h.correct();
    let entries = Entries::collect(trace);
    for (view, who) in &entries.by_view {
        let (first, _) = entries.first(*view).expect("non-empty");
        let deadline = first.max(h.gst) + h.delta;
        if deadline > h.end {
            continue;
        }
        if let Some(p) = correct
            .iter()
            .find(|p| who.get(p).is_none_or(|(t, _)| *t > deadline))
        {
            return Verdict::fail(
                NAME,
                first_after(trace, deadline),
                format!("{p} did not enter view {view} by {deadline}"),
            );
        }
    }
    let Horizon::Views(target) = h.horizon else {
        let top = entries.by_view.keys().last().copied().unwrap_or(View(1));
        return Verdict::pass(NAME, format!("all correct processors reached view {top}"));
    };
    if h.ended_by == EndReason::TimeCap {
        return Verdict::inconclusive(NAME, format!("time cap hit before view {}", target + 1));
    }
    for p in &correct {
        for v in 1..=target + 1 {
            if !entries
                .by_view
                .get(&View(v))
                .is_some_and(|w| w.contains_key(p))
            {
                return Verdict::fail(
                    NAME,
                    trace.events.len().saturating_sub(1),
                    format!("{p} never entered view {v}"),
                );
            }
        }
    }
    Verdict::pass(
        NAME,
        format!("all correct processors entered views 1..={}", target + 1),
    )
}

/// Obliged views: correct leader, first correct entry at or after GST, and
/// four maximum-latency hops before the end (entry, proposal, votes, and
/// finalization everywhere).
fn obliged_views(trace: &Trace, entries: &Entries) -> Vec<(View, Time, usize)> {
    let h = &trace.header;
    let corrupted = h.corrupted_set();
    let slack = Time(SETTLE_HOPS * h.max_latency.0);
    entries
        .by_view
        .keys()
        .filter_map(|&v| {
            let (t, i) = entries.first(v)?;
            let leader = lead(v, h.n).ok()?;
            (!corrupted.contains(&leader) && t >= h.gst && t + slack <= h.end).then_some((v, t, i))
        })
        .collect()
}

/// Latest finalized block per correct processor.
fn finalized_tips(trace: &Trace) -> HashMap<ProcessorId, (View, BlockHash)> {
    let corrupted = trace.header.corrupted_set();
    let mut tips = HashMap::new();
    for e in &trace.events {
        if let (
            EventKind::Finalize {
                view, block_hash, ..
            },
            Some(p),
        ) = (&e.kind, e.proc)
        {
            if !corrupted.contains(&p) {
                let tip = tips.entry(p).or_insert((*view, *block_hash));
                if *view >= tip.0 {
                    *tip = (*view, *block_hash);
                }
            }
        }
    }
    tips
}

/// Views led by correct processors after GST produce a block that every
/// correct processor votes for within `2Δ + max latency`, leave the view
/// within `3Δ + max latency`, and finalize.
pub fn check_post_gst_leader(trace: &Trace) -> Verdict {
    const NAME: &str = "post_gst_leader";
    let h = &trace.header;
    let correct = h.correct();
    let l = h.params().l_quorum();
    let entries = Entries::collect(trace);
    let obliged = obliged_views(trace, &entries);
    if obliged.is_empty() {
        return Verdict::inconclusive(NAME, "no correct-leader view after GST fits before the end");
    }

    let mut proposals: HashMap<View, (BlockHash, usize)> = HashMap::new();
    let mut votes: HashMap<BlockHash, BTreeMap<ProcessorId, Time>> = HashMap::new();
    for (i, e, msg) in sent_messages(trace) {
        match msg {
            WireMsg::Proposal {
                signer,
                view,
                block_hash,
                ..
            } if lead(*view, h.n).ok() == Some(*signer) && e.proc == Some(*signer) => {
                proposals.entry(*view).or_insert((*block_hash, i));
            }
            WireMsg::Vote {
                signer, block_hash, ..
            } => {
                votes
                    .entry(*block_hash)
                    .or_default()
                    .entry(*signer)
                    .or_insert(e.time);
            }
            _ => {}
        }
    }
    let parents = parent_map(trace);
    let tips = finalized_tips(trace);

    for (view, t, _) in &obliged {
        let vote_deadline = *t + Time(2 * h.delta.0) + h.max_latency;
        let exit_deadline = *t + Time(3 * h.delta.0) + h.max_latency;
        let Some((block, _)) = proposals.get(view) else {
            return Verdict::fail(
                NAME,
                first_after(trace, vote_deadline),
                format!("no proposal from the correct leader of view {view}"),
            );
        };
        let voters = votes.get(block).cloned().unwrap_or_default();
        if voters.len() < l {
            return Verdict::fail(
                NAME,
                trace.events.len() - 1,
                format!(
                    "view {view}: block {block} has {} vote senders, needs {l}",
                    voters.len()
                ),
            );
        }
        for p in &correct {
            match voters.get(p) {
                Some(at) if *at <= vote_deadline => {}
                _ => {
                    return Verdict::fail(
                        NAME,
                        first_after(trace, vote_deadline),
                        format!("view {view}: {p} did not vote for {block} by {vote_deadline}"),
                    )
                }
            }
            let left = entries
                .by_view
                .get(&view.next())
                .and_then(|w| w.get(p))
                .map(|(at, _)| *at);
            if left.is_none_or(|at| at > exit_deadline) {
                return Verdict::fail(
                    NAME,
                    first_after(trace, exit_deadline),
                    format!(
                        "view {view}: {p} did not enter view {} by {exit_deadline}",
                        view.next()
                    ),
                );
            }
            let finalized = tips
                .get(p)
                .is_some_and(|(_, tip)| descends(&parents, *tip, *block, *view));
            if !finalized {
                return Verdict::fail(
                    NAME,
                    trace.events.len() - 1,
                    format!("view {view}: {p} never finalized {block}"),
                );
            }
        }
    }
    Verdict::pass(
        NAME,
        format!("{} correct-leader views after GST finalized", obliged.len()),
    )
}

/// Transactions handed to a correct processor that later leads an obliged
/// view appear in every correct log.
pub fn check_tx_liveness(trace: &Trace) -> Verdict {
    const NAME: &str = "tx_liveness";
    let h = &trace.header;
    let corrupted = h.corrupted_set();
    let correct = h.correct();
    let entries = Entries::collect(trace);
    let obliged = obliged_views(trace, &entries);

    let mut arrivals: Vec<(TxId, ProcessorId, Time)> = Vec::new();
    let mut included: HashMap<TxId, BTreeSet<ProcessorId>> = HashMap::new();
    for e in &trace.events {
        let Some(p) = e.proc else { continue };
        if corrupted.contains(&p) {
            continue;
        }
        match &e.kind {
            EventKind::TxArrival { tx } => arrivals.push((*tx, p, e.time)),
            EventKind::Finalize { appended, .. } => {
                for tx in appended {
                    included.entry(*tx).or_default().insert(p);
                }
            }
            _ => {}
        }
    }
    if arrivals.is_empty() {
        return Verdict::pass(NAME, "no transactions reached a correct processor");
    }

    let mut exempt_missing = 0;
    let mut checked = 0;
    for (tx, p, at) in &arrivals {
        let everywhere = included.get(tx).is_some_and(|s| s.len() == correct.len());
        let bound = (*at).max(h.gst);
        let is_obliged = obliged
            .iter()
            .any(|(v, t, _)| *t > bound && lead(*v, h.n).ok() == Some(*p));
        if is_obliged {
            checked += 1;
            if !everywhere {
                return Verdict::fail(
                    NAME,
                    trace.events.len() - 1,
                    format!(
                        "tx {} given to {p} at {at} is missing from some correct log",
                        tx.0
                    ),
                );
            }
        } else if !everywhere {
            exempt_missing += 1;
        }
    }
    if exempt_missing > 0 {
        return Verdict::inconclusive(
            NAME,
            format!("{checked} obliged transactions included; {exempt_missing} arrived too late to oblige"),
        );
    }
    Verdict::pass(
        NAME,
        format!("{} transactions in every correct log", arrivals.len()),
    )
}
