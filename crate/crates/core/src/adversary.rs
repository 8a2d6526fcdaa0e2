//! Byzantine strategies for corrupted processors.
//!
//! A corrupted processor runs an honest shadow [`Replica`] to track views and
//! build well-formed blocks; its strategies then rewrite what the shadow
//! would send. A Byzantine processor only ever signs under its own identity;
//! the simulator rejects anything else.

use crate::replica::Replica;
use crate::types::{
    Block, BlockHash, Message, MessageKind, Payload, ProcessorId, ProtocolParams, Time,
    Transaction, View,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// Transaction ids at or above this value are equivocation markers.
pub const MARKER_TX_BASE: u64 = 1 << 62;

fn default_blocks() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// Sends nothing.
    Silent,
    /// In its own views, proposes `blocks` distinct blocks to disjoint groups.
    EquivocatingLeader {
        #[serde(default = "default_blocks")]
        blocks: usize,
    },
    /// Votes for every block it observes.
    DoubleVoter,
    /// Nullifies every view as soon as it enters it, and still votes.
    NullifySpammer,
    /// Before GST, sends only to `recipients`.
    Withholder { recipients: Vec<u32> },
}

/// A strategy, optionally limited to an inclusive view range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyRule {
    #[serde(flatten)]
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<[u64; 2]>,
}

impl StrategyRule {
    pub fn always(strategy: Strategy) -> Self {
        Self {
            strategy,
            views: None,
        }
    }

    fn active(&self, view: View) -> bool {
        self.views
            .is_none_or(|[lo, hi]| (lo..=hi).contains(&view.0))
    }
}

fn default_cap() -> usize {
    64
}

/// Strategy assignment for corrupted processors. Corrupted processors without
/// an entry are silent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default)]
    pub strategies: BTreeMap<u32, Vec<StrategyRule>>,
    /// Upper bound on messages a corrupted processor emits per activation.
    #[serde(default = "default_cap")]
    pub max_messages_per_activation: usize,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            strategies: BTreeMap::new(),
            max_messages_per_activation: default_cap(),
        }
    }
}

impl AdversarySpec {
    /// Every processor in `corrupted` follows `strategy`.
    pub fn uniform(corrupted: &[u32], strategy: Strategy) -> Self {
        Self {
            strategies: corrupted
                .iter()
                .map(|&p| (p, vec![StrategyRule::always(strategy.clone())]))
                .collect(),
            ..Self::default()
        }
    }

    pub fn rules_for(&self, p: ProcessorId) -> Vec<StrategyRule> {
        self.strategies
            .get(&p.0)
            .cloned()
            .unwrap_or_else(|| vec![StrategyRule::always(Strategy::Silent)])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Recipients {
    All,
    Only(Vec<ProcessorId>),
}

impl Recipients {
    pub fn includes(&self, p: ProcessorId) -> bool {
        match self {
            Recipients::All => true,
            Recipients::Only(list) => list.contains(&p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub payload: Payload,
    pub recipients: Recipients,
}

impl Outgoing {
    fn all(payload: Payload) -> Self {
        Self {
            payload,
            recipients: Recipients::All,
        }
    }
}

/// Block variants of one view, each with its recipient group.
type Variants = Vec<(Arc<Block>, Vec<ProcessorId>)>;

/// A corrupted processor.
#[derive(Clone, Debug)]
pub struct ByzantineNode {
    id: ProcessorId,
    params: ProtocolParams,
    rules: Vec<StrategyRule>,
    cap: usize,
    shadow: Replica,
    /// Honest proposal hash -> (variant, recipient group).
    equivocations: BTreeMap<BlockHash, Variants>,
    voted: BTreeSet<BlockHash>,
    nullified: BTreeSet<View>,
}

impl ByzantineNode {
    pub fn new(id: ProcessorId, params: ProtocolParams, spec: &AdversarySpec) -> Self {
        Self {
            id,
            params,
            rules: spec.rules_for(id),
            cap: spec.max_messages_per_activation,
            shadow: Replica::new(id, params),
            equivocations: BTreeMap::new(),
            voted: BTreeSet::new(),
            nullified: BTreeSet::new(),
        }
    }

    pub fn id(&self) -> ProcessorId {
        self.id
    }

    /// View of the honest shadow.
    pub fn view(&self) -> View {
        self.shadow.view()
    }

    pub fn timeout_at(&self) -> Time {
        self.shadow.timeout_at()
    }

    pub fn is_silent(&self) -> bool {
        self.rules
            .iter()
            .any(|r| r.strategy == Strategy::Silent && r.views.is_none())
    }

    /// One activation: feed the shadow, then let each active strategy rewrite
    /// its output in rule order. Deterministic in its inputs.
    pub fn act(
        &mut self,
        now: Time,
        inbox: Vec<Payload>,
        new_txs: Vec<Transaction>,
        before_gst: bool,
    ) -> Vec<Outgoing> {
        let observed: Vec<Arc<Block>> = inbox.iter().flat_map(blocks_in).collect();
        let view_before = self.shadow.view();
        let honest = self.shadow.step(now, inbox, new_txs);
        let view_after = self.shadow.view();

        let mut out: Vec<Outgoing> = honest.broadcasts.into_iter().map(Outgoing::all).collect();
        for payload in &out {
            if let Payload::Message(Message {
                kind: MessageKind::Vote(b),
                ..
            }) = &payload.payload
            {
                self.voted.insert(b.hash());
            }
        }
        let rules: Vec<StrategyRule> = self
            .rules
            .iter()
            .filter(|r| r.active(view_before) || r.active(view_after))
            .cloned()
            .collect();
        for rule in rules {
            out = match &rule.strategy {
                Strategy::Silent => Vec::new(),
                Strategy::EquivocatingLeader { blocks } => self.equivocate(out, *blocks),
                Strategy::DoubleVoter => self.double_vote(out, &observed),
                Strategy::NullifySpammer => self.spam_nullify(out, view_before, view_after),
                Strategy::Withholder { recipients } => {
                    if before_gst {
                        let only: Vec<ProcessorId> =
                            recipients.iter().map(|&p| ProcessorId(p)).collect();
                        out.into_iter()
                            .map(|o| Outgoing {
                                payload: o.payload,
                                recipients: Recipients::Only(only.clone()),
                            })
                            .collect()
                    } else {
                        out
                    }
                }
            };
        }
        out.truncate(self.cap);
        out
    }

    fn equivocate(&mut self, out: Vec<Outgoing>, k: usize) -> Vec<Outgoing> {
        let k = k.max(2);
        let mut result = Vec::with_capacity(out.len() + k);
        for o in out {
            match &o.payload {
                Payload::Message(Message {
                    kind: MessageKind::Proposal(b),
                    signer,
                }) if *signer == self.id => {
                    let variants = self.variants(b, k);
                    for (variant, group) in &variants {
                        result.push(Outgoing {
                            payload: Message::proposal(variant.clone(), self.id).into(),
                            recipients: Recipients::Only(group.clone()),
                        });
                    }
                    self.equivocations.insert(b.hash(), variants);
                }
                Payload::Message(Message {
                    kind: MessageKind::Vote(b),
                    signer,
                }) if *signer == self.id && self.equivocations.contains_key(&b.hash()) => {
                    for (variant, group) in &self.equivocations[&b.hash()] {
                        result.push(Outgoing {
                            payload: Message::vote(variant.clone(), self.id).into(),
                            recipients: Recipients::Only(group.clone()),
                        });
                    }
                }
                _ => result.push(o),
            }
        }
        result
    }

    /// Variant 0 is the honest block; variant i > 0 adds a marker transaction.
    /// Other processors are split into `k` contiguous groups.
    fn variants(&self, honest: &Arc<Block>, k: usize) -> Variants {
        let others: Vec<ProcessorId> = self.params.processors().filter(|p| *p != self.id).collect();
        let chunk = others.len().div_ceil(k).max(1);
        let mut groups: Vec<Vec<ProcessorId>> = others.chunks(chunk).map(|c| c.to_vec()).collect();
        groups.resize(k, Vec::new());
        groups
            .into_iter()
            .enumerate()
            .map(|(i, group)| {
                let block = if i == 0 {
                    honest.clone()
                } else {
                    let mut txs = honest.transactions().to_vec();
                    txs.push(Transaction::new(
                        MARKER_TX_BASE | (honest.view().0 << 8) | i as u64,
                        [],
                    ));
                    Arc::new(Block::new(
                        honest.view(),
                        txs,
                        honest.parent().expect("proposals have parents"),
                        self.id,
                    ))
                };
                (block, group)
            })
            .collect()
    }

    fn double_vote(&mut self, mut out: Vec<Outgoing>, observed: &[Arc<Block>]) -> Vec<Outgoing> {
        for b in observed {
            if b.view().is_genesis() || !self.voted.insert(b.hash()) {
                continue;
            }
            out.push(Outgoing::all(Message::vote(b.clone(), self.id).into()));
        }
        out
    }

    fn spam_nullify(&mut self, mut out: Vec<Outgoing>, before: View, after: View) -> Vec<Outgoing> {
        let mut v = before;
        while v <= after {
            if self.nullified.insert(v) {
                out.insert(0, Outgoing::all(Message::nullify(v, self.id).into()));
            }
            v = v.next();
        }
        out
    }
}

fn blocks_in(p: &Payload) -> Vec<Arc<Block>> {
    match p {
        Payload::Message(m) => m.block().cloned().into_iter().collect(),
        Payload::Certificate(c) => c.block().cloned().into_iter().collect(),
    }
}
