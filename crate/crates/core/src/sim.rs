//! Deterministic discrete-event simulation of a partially synchronous network.
//!
//! Events run in `(time, seq)` order. When a processor is activated at instant
//! `t`, every event addressed to it at `t` is folded into that one activation,
//! so a delivery and a timer expiry at the same instant are seen together.

use crate::adversary::{ByzantineNode, Recipients};
use crate::config::{
    ConfigError, Horizon, PreGstPolicy, Scenario, ScenarioConfig, GENERATED_TX_BASE,
};
use crate::replica::Replica;
use crate::trace::{
    EndReason, EventKind, MsgRef, Trace, TraceEvent, TraceHeader, WireMsg, TRACE_SCHEMA,
};
use crate::types::{
    lead, BlockHash, Certificate, CertificateKind, Message, MessageKind, Payload, ProcessorId,
    Time, Transaction, View,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::rc::Rc;

/// Ids of transactions injected by the after-proposal workload start here.
pub const AFTER_PROPOSAL_TX_BASE: u64 = 1 << 40;

/// Settling time after a view horizon is reached, in multiples of the
/// maximum latency: enough for the last started views to finalize.
pub const SETTLE_HOPS: u64 = 4;

pub fn run(config: &ScenarioConfig) -> Result<Trace, ConfigError> {
    Ok(run_scenario(&config.validate()?))
}

pub fn run_scenario(scenario: &Scenario) -> Trace {
    Simulator::new(scenario).run()
}

/// Base latency plus uniform jitter in `[0, jitter]`, at least one tick.
pub fn sample_latency<R: Rng>(base: Time, jitter: Time, rng: &mut R) -> Time {
    let j = if jitter.0 > 0 {
        rng.gen_range(0..=jitter.0)
    } else {
        0
    };
    Time((base.0 + j).max(1))
}

enum Pending {
    Start(ProcessorId),
    Gst,
    Timeout(ProcessorId),
    Tx(ProcessorId, Transaction),
    Deliver {
        to: ProcessorId,
        from: ProcessorId,
        sent: Time,
        payload: Rc<Payload>,
    },
}

impl Pending {
    fn target(&self) -> Option<ProcessorId> {
        match self {
            Pending::Start(p) | Pending::Timeout(p) | Pending::Tx(p, _) => Some(*p),
            Pending::Deliver { to, .. } => Some(*to),
            Pending::Gst => None,
        }
    }
}

enum Node {
    Correct(Replica),
    Byzantine(ByzantineNode),
    Idle,
}

/// Signatures that exist so far. Corrupted processors can only replay these
/// or sign under their own identity.
#[derive(Default)]
struct Registry {
    blocks: HashSet<BlockHash>,
    votes: HashSet<(ProcessorId, BlockHash)>,
    nullifies: HashSet<(ProcessorId, View)>,
}

impl Registry {
    fn record(&mut self, payload: &Payload) {
        if let Payload::Message(Message { kind, signer }) = payload {
            match kind {
                MessageKind::Proposal(b) | MessageKind::Vote(b) => {
                    if b.proposer() == Some(*signer) {
                        self.blocks.insert(b.hash());
                    }
                    if matches!(kind, MessageKind::Vote(_)) {
                        self.votes.insert((*signer, b.hash()));
                    }
                }
                MessageKind::Nullify(v) => {
                    self.nullifies.insert((*signer, *v));
                }
            }
        }
    }

    fn block_known(&self, b: &crate::types::Block, signer: Option<ProcessorId>) -> bool {
        b.is_genesis()
            || (signer.is_some() && b.proposer() == signer)
            || self.blocks.contains(&b.hash())
    }

    fn authentic(&self, sender: ProcessorId, payload: &Payload) -> bool {
        match payload {
            Payload::Message(m) => {
                m.signer == sender && m.block().is_none_or(|b| self.block_known(b, Some(sender)))
            }
            Payload::Certificate(Certificate { kind, signers }) => match kind {
                CertificateKind::MNotarization(b) | CertificateKind::LNotarization(b) => {
                    self.block_known(b, None)
                        && signers.iter().all(|s| self.votes.contains(&(s, b.hash())))
                }
                CertificateKind::Nullification(v) => {
                    signers.iter().all(|s| self.nullifies.contains(&(s, *v)))
                }
            },
        }
    }
}

struct Simulator<'a> {
    s: &'a Scenario,
    nodes: Vec<Node>,
    queue: BTreeMap<(Time, u64), Pending>,
    /// Sequence numbers of queued events per `(instant, target)`.
    index: HashMap<(Time, ProcessorId), Vec<u64>>,
    seq: u64,
    rng: ChaCha8Rng,
    events: Vec<TraceEvent>,
    registry: Option<Registry>,
    log_len: Vec<usize>,
    passed_target: Vec<bool>,
    passed_count: usize,
    correct_count: usize,
    end: Time,
    ended_by: EndReason,
    next_tx: u64,
}

impl<'a> Simulator<'a> {
    fn new(s: &'a Scenario) -> Self {
        let n = s.params.n as usize;
        let nodes: Vec<Node> = s
            .params
            .processors()
            .map(|p| {
                if s.is_correct(p) {
                    Node::Correct(Replica::new(p, s.params))
                } else {
                    let node = ByzantineNode::new(p, s.params, &s.adversary);
                    if node.is_silent() {
                        Node::Idle
                    } else {
                        Node::Byzantine(node)
                    }
                }
            })
            .collect();
        let adversarial = nodes.iter().any(|n| matches!(n, Node::Byzantine(_)));
        let (end, ended_by) = match s.horizon {
            Horizon::Ms(_) => (s.max_time, EndReason::Horizon),
            Horizon::Views(_) => (s.max_time, EndReason::TimeCap),
        };
        Self {
            s,
            nodes,
            queue: BTreeMap::new(),
            index: HashMap::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(s.seed),
            events: Vec::new(),
            registry: adversarial.then(Registry::default),
            log_len: vec![0; n],
            passed_target: vec![false; n],
            passed_count: 0,
            correct_count: n - s.corrupted.len(),
            end,
            ended_by,
            next_tx: AFTER_PROPOSAL_TX_BASE,
        }
    }

    fn push(&mut self, at: Time, ev: Pending) {
        let seq = self.seq;
        self.seq += 1;
        if let Some(p) = ev.target() {
            self.index.entry((at, p)).or_default().push(seq);
        }
        self.queue.insert((at, seq), ev);
    }

    fn record(&mut self, time: Time, proc: Option<ProcessorId>, kind: EventKind) {
        self.events.push(TraceEvent { time, proc, kind });
    }

    fn schedule_workload(&mut self) {
        for (at, p, tx) in &self.s.scheduled_txs {
            self.push(*at, Pending::Tx(*p, tx.clone()));
        }
        if let Some(random) = &self.s.random_txs {
            let mut rng = ChaCha8Rng::seed_from_u64(self.s.seed);
            rng.set_stream(1);
            let candidates: Vec<ProcessorId> = self
                .s
                .params
                .processors()
                .filter(|p| !random.correct_only || self.s.is_correct(*p))
                .collect();
            let from = Time::from_ms(random.from_ms);
            let until = Time::from_ms(random.until_ms);
            for i in 0..random.count {
                let at = Time(rng.gen_range(from.0..=until.0));
                let p = candidates[rng.gen_range(0..candidates.len())];
                self.push(
                    at,
                    Pending::Tx(p, Transaction::new(GENERATED_TX_BASE + i as u64, [])),
                );
            }
        }
    }

    fn run(mut self) -> Trace {
        self.push(self.s.gst, Pending::Gst);
        for p in self.s.params.processors() {
            if self.s.is_correct(p) {
                self.record(Time::ZERO, Some(p), EventKind::EnterView { view: View(1) });
            }
            self.push(Time::ZERO, Pending::Start(p));
            self.push(self.s.params.timeout(), Pending::Timeout(p));
        }
        self.schedule_workload();

        while let Some(entry) = self.queue.first_entry() {
            let (t, seq) = *entry.key();
            if t > self.end {
                break;
            }
            let first = entry.remove();
            let Some(p) = first.target() else {
                self.record(t, None, EventKind::Gst);
                continue;
            };
            let mut batch = vec![first];
            if let Some(seqs) = self.index.remove(&(t, p)) {
                for other in seqs {
                    if other != seq {
                        batch.push(
                            self.queue
                                .remove(&(t, other))
                                .expect("indexed event queued"),
                        );
                    }
                }
            }
            self.activate(p, t, batch);
        }

        let header = TraceHeader {
            schema: TRACE_SCHEMA,
            name: self.s.name.clone(),
            n: self.s.params.n,
            f: self.s.params.f,
            delta: self.s.params.delta,
            progression: self.s.params.progression,
            gst: self.s.gst,
            seed: self.s.seed,
            corrupted: self.s.corrupted.iter().copied().collect(),
            regions: self.s.regions.clone(),
            assignment: self.s.assignment.clone(),
            horizon: self.s.horizon,
            max_latency: self.s.max_latency(),
            end: self.end,
            ended_by: self.ended_by,
        };
        Trace {
            header,
            events: self.events,
        }
    }

    fn activate(&mut self, p: ProcessorId, t: Time, batch: Vec<Pending>) {
        let mut inbox = Vec::new();
        let mut txs = Vec::new();
        let mut wake = false;
        for ev in batch {
            match ev {
                Pending::Deliver {
                    from,
                    sent,
                    payload,
                    ..
                } => {
                    self.record(
                        t,
                        Some(p),
                        EventKind::Deliver {
                            from,
                            sent,
                            msg: MsgRef::of(&payload),
                        },
                    );
                    inbox.push(Rc::unwrap_or_clone(payload));
                }
                Pending::Tx(_, tx) => {
                    self.record(t, Some(p), EventKind::TxArrival { tx: tx.id });
                    txs.push(tx);
                }
                Pending::Start(_) => wake = true,
                Pending::Timeout(_) => {
                    wake |= match &self.nodes[p.index()] {
                        Node::Correct(r) => r.timeout_at() == t,
                        Node::Byzantine(b) => b.timeout_at() == t,
                        Node::Idle => false,
                    }
                }
                Pending::Gst => unreachable!("global events have no target"),
            }
        }
        if !wake && inbox.is_empty() && txs.is_empty() {
            return;
        }
        match std::mem::replace(&mut self.nodes[p.index()], Node::Idle) {
            Node::Correct(mut r) => {
                self.activate_correct(&mut r, t, inbox, txs);
                self.nodes[p.index()] = Node::Correct(r);
            }
            Node::Byzantine(mut b) => {
                let before = b.view();
                let out = b.act(t, inbox, txs, t < self.s.gst);
                for o in out {
                    let ok = self
                        .registry
                        .as_ref()
                        .is_none_or(|r| r.authentic(p, &o.payload));
                    if ok {
                        self.broadcast(p, t, o.payload, o.recipients);
                    }
                }
                if b.view() != before {
                    self.push(b.timeout_at(), Pending::Timeout(p));
                }
                self.nodes[p.index()] = Node::Byzantine(b);
            }
            Node::Idle => {}
        }
    }

    fn activate_correct(
        &mut self,
        r: &mut Replica,
        t: Time,
        inbox: Vec<Payload>,
        txs: Vec<Transaction>,
    ) {
        let p = r.id();
        let out = r.step(t, inbox, txs);
        for payload in out.broadcasts {
            if self.s.after_proposal {
                if let Payload::Message(Message {
                    kind: MessageKind::Proposal(b),
                    signer,
                }) = &payload
                {
                    if *signer == p {
                        let next =
                            lead(b.view().next(), self.s.params.n).expect("views after genesis");
                        let tx = Transaction::new(self.next_tx, []);
                        self.next_tx += 1;
                        self.push(t, Pending::Tx(next, tx));
                    }
                }
            }
            self.broadcast(p, t, payload, Recipients::All);
        }
        for view in &out.entered_views {
            self.record(t, Some(p), EventKind::EnterView { view: *view });
        }
        if !out.entered_views.is_empty() {
            self.push(r.timeout_at(), Pending::Timeout(p));
            self.note_progress(p, r.view(), t);
        }
        for fin in out.finalized {
            self.log_len[p.index()] += fin.appended.len();
            self.record(
                t,
                Some(p),
                EventKind::Finalize {
                    view: fin.block.view(),
                    block_hash: fin.block.hash(),
                    appended: fin.appended,
                    log_len: self.log_len[p.index()],
                },
            );
        }
        for c in out.conflicts {
            self.record(
                t,
                Some(p),
                EventKind::Conflict {
                    view: c.block.view(),
                    block_hash: c.block.hash(),
                    log_len: c.log_len,
                },
            );
        }
    }

    fn note_progress(&mut self, p: ProcessorId, view: View, t: Time) {
        let Horizon::Views(target) = self.s.horizon else {
            return;
        };
        if view.0 > target && !self.passed_target[p.index()] {
            self.passed_target[p.index()] = true;
            self.passed_count += 1;
            if self.passed_count == self.correct_count {
                let settle = t + Time(SETTLE_HOPS * self.s.max_latency().0);
                if settle <= self.end {
                    self.end = settle;
                    self.ended_by = EndReason::Views;
                }
            }
        }
    }

    fn broadcast(&mut self, from: ProcessorId, t: Time, payload: Payload, recipients: Recipients) {
        let to = match &recipients {
            Recipients::All => None,
            Recipients::Only(list) => Some(list.clone()),
        };
        self.record(
            t,
            Some(from),
            EventKind::Send {
                msg: WireMsg::summarize(&payload),
                to,
            },
        );
        if let Some(reg) = self.registry.as_mut() {
            reg.record(&payload);
        }
        let payload = Rc::new(payload);
        for q in self.s.params.processors() {
            if q == from || !recipients.includes(q) {
                continue;
            }
            let at = self.delivery_time(from, q, t);
            self.push(
                at,
                Pending::Deliver {
                    to: q,
                    from,
                    sent: t,
                    payload: payload.clone(),
                },
            );
        }
    }

    /// Sampled latency, stretched by the pre-GST policy, never later than
    /// `max(GST, sent) + delta`.
    fn delivery_time(&mut self, from: ProcessorId, to: ProcessorId, sent: Time) -> Time {
        let (base, jitter) =
            self.s.latency[self.s.assignment[from.index()]][self.s.assignment[to.index()]];
        let mut at = sent + sample_latency(base, jitter, &mut self.rng);
        let bound = sent.max(self.s.gst) + self.s.params.delta;
        if sent < self.s.gst && self.s.pre_gst.targets_processor(to) {
            match self.s.pre_gst {
                PreGstPolicy::MaxDelay { .. } => at = bound,
                PreGstPolicy::Chaotic { .. } if at < bound => {
                    at = Time(self.rng.gen_range(at.0..=bound.0));
                }
                _ => {}
            }
        }
        at.min(bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{AdversarySpec, Strategy};
    use crate::config::ScheduledTx;
    use std::collections::BTreeSet;

    fn sends(t: &Trace) -> impl Iterator<Item = (&TraceEvent, &WireMsg)> {
        t.events.iter().filter_map(|e| match &e.kind {
            EventKind::Send { msg, .. } => Some((e, msg)),
            _ => None,
        })
    }

    #[test]
    fn jitter_free_latency_is_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(
                sample_latency(Time(70_000), Time::ZERO, &mut rng),
                Time(70_000)
            );
        }
    }

    #[test]
    fn jitter_stays_in_range_and_is_seeded() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|_| sample_latency(Time::from_ms(70.0), Time::from_ms(10.0), &mut rng))
                .collect::<Vec<_>>()
        };
        let a = draw(9);
        assert!(a
            .iter()
            .all(|t| (Time::from_ms(70.0)..=Time::from_ms(80.0)).contains(t)));
        assert_eq!(a, draw(9));
        assert_ne!(a, draw(10));
    }

    #[test]
    fn honest_view_one_finalizes_everywhere() {
        let cfg = ScenarioConfig::uniform(6, 0, 10.0, 1.0, Horizon::Views(1));
        let t = run(&cfg).unwrap();
        let leader = ProcessorId(1);
        let (prop, msg) = sends(&t)
            .find(|(_, m)| matches!(m, WireMsg::Proposal { .. }))
            .unwrap();
        assert_eq!(prop.proc, Some(leader));
        assert_eq!(prop.time, Time::ZERO);
        let hash = msg.block_hash().unwrap();
        // One round to propose, one to vote: every replica holds 6 votes at 2ms.
        let finals: Vec<&TraceEvent> = t
            .events
            .iter()
            .filter(|e| matches!(&e.kind, EventKind::Finalize { block_hash, .. } if *block_hash == hash))
            .collect();
        assert_eq!(finals.len(), 6);
        assert!(finals.iter().all(|e| e.time == Time::from_ms(2.0)));
        let l = sends(&t).find_map(|(_, m)| match m {
            WireMsg::LNotarization {
                block_hash,
                signers,
                ..
            } if *block_hash == hash => Some(signers.len()),
            _ => None,
        });
        assert_eq!(l, Some(6));
    }

    #[test]
    fn latency_above_delta_is_clamped() {
        let cfg = ScenarioConfig::uniform(6, 1, 10.0, 50.0, Horizon::Views(3));
        let t = run(&cfg).unwrap();
        let delta = Time::from_ms(10.0);
        for e in &t.events {
            if let EventKind::Deliver { sent, .. } = &e.kind {
                assert!(e.time <= *sent + delta);
            }
        }
        // No spurious timeouts after GST: every view is notarized, none nullified.
        assert!(sends(&t).all(|(_, m)| !matches!(m, WireMsg::Nullify { .. })));
        assert_eq!(t.header.max_latency, delta);
    }

    #[test]
    fn silent_first_leader_times_out_then_advances() {
        let mut cfg = ScenarioConfig::uniform(6, 1, 100.0, 5.0, Horizon::Views(2));
        cfg.corrupted = vec![1];
        cfg.adversary = AdversarySpec::uniform(&[1], Strategy::Silent);
        let t = run(&cfg).unwrap();
        let delta = Time::from_ms(100.0);
        let nullifies: Vec<&TraceEvent> = sends(&t)
            .filter(|(_, m)| matches!(m, WireMsg::Nullify { view: View(1), .. }))
            .map(|(e, _)| e)
            .collect();
        assert_eq!(nullifies.len(), 5);
        assert!(nullifies.iter().all(|e| e.time == Time(2 * delta.0)));
        let entries: Vec<Time> = t
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::EnterView { view: View(2) }))
            .map(|e| e.time)
            .collect();
        assert_eq!(entries.len(), 5);
        assert!(entries
            .iter()
            .all(|&at| at > Time(2 * delta.0) && at <= Time(3 * delta.0)));
    }

    #[test]
    fn runs_are_reproducible() {
        let mut cfg = ScenarioConfig::uniform(6, 1, 100.0, 20.0, Horizon::Views(6));
        cfg.latency_ms = vec![vec![[20.0, 15.0]]];
        cfg.gst_ms = 150.0;
        cfg.pre_gst = PreGstPolicy::Chaotic { targets: None };
        cfg.seed = 77;
        let a = run(&cfg).unwrap().to_jsonl();
        assert_eq!(a, run(&cfg).unwrap().to_jsonl());
        cfg.seed = 78;
        assert_ne!(a, run(&cfg).unwrap().to_jsonl());
    }

    #[test]
    fn pre_gst_max_delay_holds_messages_until_bound() {
        let mut cfg = ScenarioConfig::uniform(6, 1, 50.0, 5.0, Horizon::Views(3));
        cfg.gst_ms = 400.0;
        let t = run(&cfg).unwrap();
        let bound = Time::from_ms(450.0);
        for e in &t.events {
            if let EventKind::Deliver { sent, .. } = &e.kind {
                if *sent < Time::from_ms(400.0) {
                    assert_eq!(e.time, bound);
                } else {
                    assert!(e.time <= *sent + Time::from_ms(50.0));
                }
            }
        }
    }

    #[test]
    fn every_correct_broadcast_delivered_once_to_each_other_processor() {
        let mut cfg = ScenarioConfig::uniform(6, 1, 100.0, 3.0, Horizon::Ms(2000.0));
        cfg.latency_ms = vec![vec![[3.0, 2.0]]];
        let t = run(&cfg).unwrap();
        let end = t.header.end;
        let mut sent: BTreeMap<(ProcessorId, Time, String), usize> = BTreeMap::new();
        for e in &t.events {
            if let EventKind::Send { msg, to: None } = &e.kind {
                if e.time + Time::from_ms(100.0) <= end {
                    *sent
                        .entry((e.proc.unwrap(), e.time, format!("{:?}", msg.reference())))
                        .or_default() += 5;
                }
            }
        }
        let mut got: BTreeMap<(ProcessorId, Time, String), usize> = BTreeMap::new();
        for e in &t.events {
            if let EventKind::Deliver {
                from,
                sent: at,
                msg,
            } = &e.kind
            {
                let key = (*from, *at, format!("{msg:?}"));
                if sent.contains_key(&key) {
                    *got.entry(key).or_default() += 1;
                }
            }
        }
        assert_eq!(sent, got);
    }

    #[test]
    fn scheduled_transactions_reach_logs() {
        let mut cfg = ScenarioConfig::uniform(6, 1, 50.0, 2.0, Horizon::Views(8));
        cfg.workload.schedule = vec![ScheduledTx {
            at_ms: 0.0,
            to: 3,
            id: 42,
            payload: "x".into(),
        }];
        let t = run(&cfg).unwrap();
        let holders: BTreeSet<ProcessorId> = t
            .events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::Finalize { appended, .. }
                    if appended.contains(&crate::types::TxId(42)) =>
                {
                    e.proc
                }
                _ => None,
            })
            .collect();
        assert_eq!(holders.len(), 6);
    }

    #[test]
    fn forged_certificates_are_dropped() {
        let mut reg = Registry::default();
        let g = crate::types::Block::genesis().hash();
        let b = std::sync::Arc::new(crate::types::Block::new(View(1), vec![], g, ProcessorId(1)));
        reg.record(&Message::proposal(b.clone(), ProcessorId(1)).into());
        reg.record(&Message::vote(b.clone(), ProcessorId(2)).into());
        let cert = |ids: &[u32]| -> Payload {
            Certificate {
                kind: CertificateKind::MNotarization(b.clone()),
                signers: crate::types::SignerSet::from_ids(ids.iter().map(|&i| ProcessorId(i))),
            }
            .into()
        };
        assert!(reg.authentic(ProcessorId(4), &cert(&[2])));
        assert!(!reg.authentic(ProcessorId(4), &cert(&[2, 3])));
        assert!(!reg.authentic(
            ProcessorId(4),
            &Message::vote(b.clone(), ProcessorId(3)).into()
        ));
        assert!(reg.authentic(ProcessorId(4), &Message::vote(b, ProcessorId(4)).into()));
    }
}
