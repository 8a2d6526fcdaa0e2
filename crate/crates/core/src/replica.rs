//! One processor's protocol state machine.
//!
//! [`Replica::step`] runs the rule body in fixed order:
//!
//! 1. forward new nullifications, then new M-/L-notarizations
//! 2. propose, when leader of the current view
//! 3. vote for a valid proposal (`notarized = ⊥`, not nullified)
//! 4. timeout nullify after `2Δ` in the view without voting
//! 5. advance on a nullification of the current view
//! 6. advance on a notarization of a current-view block, voting first if still able
//! 7. nullify on 2f+1 conflicting signers after having voted
//! 8. finalize newly L-notarized blocks
//!
//! Messages a replica sends are delivered to its own store immediately. The
//! body is re-run at the same instant until nothing changes, so a view entered
//! mid-pass gets its proposal and vote without waiting for the next event.

use crate::store::Store;
use crate::types::{
    lead, Block, Certificate, CertificateKind, Message, Payload, ProcessorId, ProtocolParams, Time,
    Transaction, TxId, View,
};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

/// A finalization that changed (or confirmed) the local log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finalized {
    pub block: Arc<Block>,
    /// Transactions appended to the log; empty when the log already covered the block.
    pub appended: Vec<TxId>,
}

/// A finalization whose extended transaction sequence does not agree with
/// the local log. Only reachable if safety is broken.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinalizationConflict {
    pub block: Arc<Block>,
    pub log_len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplicaOutput {
    /// Messages and certificates for every other processor, in send order.
    pub broadcasts: Vec<Payload>,
    pub finalized: Vec<Finalized>,
    /// Views entered during this activation, ascending.
    pub entered_views: Vec<View>,
    pub conflicts: Vec<FinalizationConflict>,
}

impl ReplicaOutput {
    pub fn is_empty(&self) -> bool {
        self.broadcasts.is_empty()
            && self.finalized.is_empty()
            && self.entered_views.is_empty()
            && self.conflicts.is_empty()
    }

    fn absorb(&mut self, other: ReplicaOutput) {
        self.broadcasts.extend(other.broadcasts);
        self.finalized.extend(other.finalized);
        self.entered_views.extend(other.entered_views);
        self.conflicts.extend(other.conflicts);
    }
}

#[derive(Clone, Debug)]
pub struct Replica {
    id: ProcessorId,
    params: ProtocolParams,
    store: Store,
    view: View,
    view_entry: Time,
    nullified: bool,
    notarized: Option<Arc<Block>>,
    proposed_in: BTreeSet<View>,
    log: Vec<Transaction>,
    log_ids: HashSet<TxId>,
    finalized_tip: Option<Arc<Block>>,
    mempool: BTreeMap<TxId, Transaction>,
    /// L-notarized blocks waiting for ancestors.
    pending: BTreeMap<(View, crate::types::BlockHash), Arc<Block>>,
    /// Certificates formed by our own sends, forwarded on the next pass.
    unforwarded: Vec<Certificate>,
    last_now: Time,
}

impl Replica {
    pub fn new(id: ProcessorId, params: ProtocolParams) -> Self {
        Self {
            id,
            params,
            store: Store::new(params),
            view: View(1),
            view_entry: Time::ZERO,
            nullified: false,
            notarized: None,
            proposed_in: BTreeSet::new(),
            log: Vec::new(),
            log_ids: HashSet::new(),
            finalized_tip: None,
            mempool: BTreeMap::new(),
            pending: BTreeMap::new(),
            unforwarded: Vec::new(),
            last_now: Time::ZERO,
        }
    }

    pub fn id(&self) -> ProcessorId {
        self.id
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn view_entry(&self) -> Time {
        self.view_entry
    }

    pub fn nullified(&self) -> bool {
        self.nullified
    }

    pub fn notarized(&self) -> Option<&Arc<Block>> {
        self.notarized.as_ref()
    }

    pub fn log(&self) -> &[Transaction] {
        &self.log
    }

    pub fn finalized_tip(&self) -> Option<&Arc<Block>> {
        self.finalized_tip.as_ref()
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn has_proposed_in(&self, view: View) -> bool {
        self.proposed_in.contains(&view)
    }

    /// Instant at which the current view's timer expires.
    pub fn timeout_at(&self) -> Time {
        self.view_entry + self.params.timeout()
    }

    /// Stores `payload` without running any rule. For constructing states.
    pub fn receive(&mut self, payload: &Payload, now: Time) {
        let fresh = self.store.insert(payload, now);
        self.unforwarded.extend(fresh);
    }

    pub fn add_transactions<I: IntoIterator<Item = Transaction>>(&mut self, txs: I) {
        for tx in txs {
            self.mempool.entry(tx.id).or_insert(tx);
        }
    }

    /// One activation at `now`: store the inbox, admit transactions, then run
    /// the rule body until quiescent.
    pub fn step<I>(&mut self, now: Time, inbox: I, new_txs: Vec<Transaction>) -> ReplicaOutput
    where
        I: IntoIterator<Item = Payload>,
    {
        debug_assert!(now >= self.last_now, "activations must be monotone");
        self.last_now = now;
        self.add_transactions(new_txs);
        let inbox: Vec<Payload> = inbox.into_iter().collect();
        let fresh = self.store.insert_all(inbox.iter(), now);
        self.unforwarded.extend(fresh);

        let mut out = ReplicaOutput::default();
        loop {
            let pass = self.pass(now);
            if pass.is_empty() && self.unforwarded.is_empty() {
                break;
            }
            out.absorb(pass);
        }
        out
    }

    fn pass(&mut self, now: Time) -> ReplicaOutput {
        let mut out = ReplicaOutput::default();
        self.forward_new(&mut out);
        self.try_propose(now, &mut out);
        self.try_vote(now, &mut out);
        self.try_timeout(now, &mut out);
        self.advance_rules(now, &mut out);
        self.mixed_nullify_rule(now, &mut out);
        self.finalize_rule(&mut out);
        out
    }

    fn send(&mut self, msg: Message, now: Time, out: &mut ReplicaOutput) {
        let payload = Payload::Message(msg);
        let fresh = self.store.insert(&payload, now);
        self.unforwarded.extend(fresh);
        out.broadcasts.push(payload);
    }

    /// Nullifications first, then notarizations.
    fn forward_new(&mut self, out: &mut ReplicaOutput) {
        let certs = std::mem::take(&mut self.unforwarded);
        let (nullifications, notarizations): (Vec<_>, Vec<_>) = certs
            .into_iter()
            .partition(|c| matches!(c.kind, CertificateKind::Nullification(_)));
        out.broadcasts
            .extend(nullifications.into_iter().map(Payload::Certificate));
        out.broadcasts
            .extend(notarizations.into_iter().map(Payload::Certificate));
    }

    fn try_propose(&mut self, now: Time, out: &mut ReplicaOutput) {
        let leader = lead(self.view, self.params.n).expect("replica views start at 1");
        if leader != self.id || self.proposed_in.contains(&self.view) {
            return;
        }
        let block = self.build_proposal();
        self.proposed_in.insert(self.view);
        self.send(Message::proposal(block, self.id), now, out);
    }

    /// Child of the selected parent carrying every mempool transaction not
    /// already in a known ancestor of that parent, in id order.
    pub fn build_proposal(&self) -> Arc<Block> {
        let (parent, _) = self.store.select_parent(self.view);
        let included: HashSet<TxId> = self
            .store
            .known_ancestors(&parent)
            .iter()
            .flat_map(|b| b.transactions().iter().map(|t| t.id))
            .collect();
        let txs = self
            .mempool
            .values()
            .filter(|t| !included.contains(&t.id))
            .cloned()
            .collect();
        Arc::new(Block::new(self.view, txs, parent.hash(), self.id))
    }

    fn try_vote(&mut self, now: Time, out: &mut ReplicaOutput) {
        if self.notarized.is_some() || self.nullified {
            return;
        }
        if let Some(b) = self.store.valid_proposal(self.view) {
            self.notarized = Some(b.clone());
            self.send(Message::vote(b, self.id), now, out);
        }
    }

    fn try_timeout(&mut self, now: Time, out: &mut ReplicaOutput) {
        if now.saturating_sub(self.view_entry) >= self.params.timeout()
            && !self.nullified
            && self.notarized.is_none()
        {
            self.nullified = true;
            self.send(Message::nullify(self.view, self.id), now, out);
        }
    }

    fn enter_next_view(&mut self, now: Time, out: &mut ReplicaOutput) {
        self.view = self.view.next();
        self.nullified = false;
        self.notarized = None;
        self.view_entry = now;
        out.entered_views.push(self.view);
    }

    fn advance_rules(&mut self, now: Time, out: &mut ReplicaOutput) {
        if self.store.has_nullification(self.view) {
            self.enter_next_view(now, out);
        }
        // Evaluated against the view as possibly updated just above.
        if let Some(b) = self.store.advancing_block(self.view) {
            if self.notarized.is_none() && !self.nullified {
                self.send(Message::vote(b, self.id), now, out);
            }
            self.enter_next_view(now, out);
        }
    }

    fn mixed_nullify_rule(&mut self, now: Time, out: &mut ReplicaOutput) {
        if self.nullified {
            return;
        }
        let Some(voted) = &self.notarized else {
            return;
        };
        let conflicting = self.store.conflicting_signers(self.view, &voted.hash());
        if conflicting.len() >= self.params.m_quorum() {
            self.nullified = true;
            self.send(Message::nullify(self.view, self.id), now, out);
        }
    }

    fn finalize_rule(&mut self, out: &mut ReplicaOutput) {
        for b in self.store.take_new_l_notarizations() {
            self.pending.insert((b.view(), b.hash()), b);
        }
        let ready: Vec<_> = self
            .pending
            .iter()
            .filter(|(_, b)| self.store.ancestry(b).is_some())
            .map(|(k, _)| *k)
            .collect();
        for key in ready {
            let b = self.pending.remove(&key).expect("key taken from pending");
            self.finalize(&b, out);
        }
    }

    /// Extends the log to `block`'s extended transaction sequence.
    ///
    /// Returns false when ancestors are still missing.
    pub fn finalize(&mut self, block: &Arc<Block>, out: &mut ReplicaOutput) -> bool {
        let Some(chain) = self.store.ancestry(block) else {
            self.pending
                .insert((block.view(), block.hash()), block.clone());
            return false;
        };
        let extended = extended_transactions(&chain);
        let common = self.log.len().min(extended.len());
        let agrees = self.log[..common]
            .iter()
            .zip(&extended[..common])
            .all(|(a, b)| a.id == b.id);
        if !agrees {
            out.conflicts.push(FinalizationConflict {
                block: block.clone(),
                log_len: self.log.len(),
            });
            return true;
        }
        let appended: Vec<TxId> = extended[common..].iter().map(|t| t.id).collect();
        for tx in &extended[common..] {
            self.log_ids.insert(tx.id);
            self.log.push(tx.clone());
        }
        if self
            .finalized_tip
            .as_ref()
            .is_none_or(|tip| tip.view() < block.view())
        {
            self.finalized_tip = Some(block.clone());
        }
        out.finalized.push(Finalized {
            block: block.clone(),
            appended,
        });
        true
    }

    pub fn log_contains(&self, tx: TxId) -> bool {
        self.log_ids.contains(&tx)
    }
}

/// Concatenation of each block's transactions, root first, keeping the first
/// occurrence of every id.
pub fn extended_transactions(chain: &[Arc<Block>]) -> Vec<Transaction> {
    let mut seen = HashSet::new();
    chain
        .iter()
        .flat_map(|b| b.transactions().iter())
        .filter(|t| seen.insert(t.id))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{MessageKind, Progression, SignerSet};

    const DELTA_MS: f64 = 100.0;

    fn params(n: u32, f: u32) -> ProtocolParams {
        ProtocolParams::new(n, f, Time::from_ms(DELTA_MS), Progression::Mini).unwrap()
    }

    fn replica(id: u32) -> Replica {
        Replica::new(ProcessorId(id), params(6, 1))
    }

    fn g() -> Block {
        Block::genesis()
    }

    fn leader_block(view: u64, parent: &Block, txs: &[u64]) -> Arc<Block> {
        Arc::new(Block::new(
            View(view),
            txs.iter().map(|&i| Transaction::new(i, [])).collect(),
            parent.hash(),
            lead(View(view), 6).unwrap(),
        ))
    }

    fn proposal(b: &Arc<Block>) -> Payload {
        Message::proposal(b.clone(), b.proposer().unwrap()).into()
    }

    fn vote(b: &Arc<Block>, s: u32) -> Payload {
        Message::vote(b.clone(), ProcessorId(s)).into()
    }

    fn nullify(v: u64, s: u32) -> Payload {
        Message::nullify(View(v), ProcessorId(s)).into()
    }

    fn messages(out: &ReplicaOutput) -> Vec<&Message> {
        out.broadcasts
            .iter()
            .filter_map(|p| match p {
                Payload::Message(m) => Some(m),
                _ => None,
            })
            .collect()
    }

    fn certificates(out: &ReplicaOutput) -> Vec<&Certificate> {
        out.broadcasts
            .iter()
            .filter_map(|p| match p {
                Payload::Certificate(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    // Forwarding (new nullifications before new notarizations).
    #[test]
    fn forwards_new_certificates_nullifications_first() {
        let mut r = replica(3);
        let b = leader_block(1, &g(), &[1]);
        let mut inbox = vec![proposal(&b)];
        inbox.extend([0, 1, 2].map(|s| vote(&b, s)));
        inbox.extend([0, 1, 5].map(|s| nullify(7, s)));
        let out = r.step(Time(10), inbox, vec![]);
        let certs = certificates(&out);
        assert_eq!(certs.len(), 2);
        assert_eq!(certs[0].kind, CertificateKind::Nullification(View(7)));
        assert_eq!(
            certs[0].signers,
            SignerSet::from_ids([0, 1, 5].map(ProcessorId))
        );
        assert_eq!(certs[1].kind, CertificateKind::MNotarization(b.clone()));
        // certificates precede anything else in the activation
        assert!(matches!(out.broadcasts[0], Payload::Certificate(_)));
        assert!(matches!(out.broadcasts[1], Payload::Certificate(_)));
        // more signers for an already-formed nullification forward nothing
        let again = r.step(Time(11), [nullify(7, 2)], vec![]);
        assert!(certificates(&again).is_empty());
    }

    // Proposal by the leader.
    #[test]
    fn leader_proposes_child_of_genesis() {
        let mut r = replica(1);
        let out = r.step(Time(0), [], vec![Transaction::new(7, [])]);
        let msgs = messages(&out);
        let proposals: Vec<_> = msgs
            .iter()
            .filter_map(|m| match &m.kind {
                MessageKind::Proposal(b) => Some(b.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(proposals.len(), 1);
        let b = &proposals[0];
        assert_eq!(b.view(), View(1));
        assert_eq!(b.parent(), Some(g().hash()));
        assert_eq!(b.proposer(), Some(ProcessorId(1)));
        assert_eq!(b.transactions(), &[Transaction::new(7, [])]);
        // leader votes for its own block right after
        assert_eq!(*msgs[1], Message::vote(b.clone(), ProcessorId(1)));
        assert_eq!(msgs.len(), 2);
    }

    #[test]
    fn empty_mempool_still_proposes() {
        let mut r = replica(1);
        let out = r.step(Time(0), [], vec![]);
        match &messages(&out)[0].kind {
            MessageKind::Proposal(b) => assert!(b.transactions().is_empty()),
            other => panic!("expected proposal, got {other:?}"),
        }
    }

    #[test]
    fn proposal_skips_transactions_in_parent_chain() {
        let mut r = replica(2);
        let b1 = leader_block(1, &g(), &[1]);
        let mut inbox = vec![proposal(&b1)];
        inbox.extend([0, 1, 3].map(|s| vote(&b1, s)));
        let out = r.step(
            Time(5),
            inbox,
            vec![Transaction::new(1, []), Transaction::new(2, [])],
        );
        assert_eq!(r.view(), View(2));
        let b2 = messages(&out)
            .iter()
            .find_map(|m| match &m.kind {
                MessageKind::Proposal(b) => Some(b.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(b2.parent(), Some(b1.hash()));
        assert_eq!(
            b2.transactions().iter().map(|t| t.id.0).collect::<Vec<_>>(),
            vec![2]
        );
    }

    #[test]
    fn leader_proposes_once_per_view() {
        let mut r = replica(1);
        r.step(Time(0), [], vec![]);
        let out = r.step(Time(1), [], vec![Transaction::new(9, [])]);
        assert!(messages(&out).is_empty());
        assert!(r.has_proposed_in(View(1)));
    }

    // Vote on a valid proposal.
    #[test]
    fn votes_for_valid_proposal() {
        let mut r = replica(3);
        let b = leader_block(1, &g(), &[1]);
        let out = r.step(Time(5), [proposal(&b)], vec![]);
        assert_eq!(
            messages(&out),
            vec![&Message::vote(b.clone(), ProcessorId(3))]
        );
        assert_eq!(r.notarized(), Some(&b));
        let out = r.step(Time(6), [proposal(&b)], vec![]);
        assert!(out.broadcasts.is_empty());
    }

    #[test]
    fn no_vote_after_nullify() {
        let mut r = replica(3);
        r.step(Time::from_ms(2.0 * DELTA_MS), [], vec![]);
        assert!(r.nullified());
        let b = leader_block(1, &g(), &[1]);
        let out = r.step(Time::from_ms(2.0 * DELTA_MS + 1.0), [proposal(&b)], vec![]);
        assert!(out.broadcasts.is_empty());
        assert_eq!(r.notarized(), None);
    }

    // Timeout nullify.
    #[test]
    fn timeout_nullifies_exactly_at_two_delta() {
        let mut r = replica(3);
        let out = r.step(Time::from_ms(2.0 * DELTA_MS) - Time(1), [], vec![]);
        assert!(out.broadcasts.is_empty());
        let out = r.step(Time::from_ms(2.0 * DELTA_MS), [], vec![]);
        assert_eq!(
            messages(&out),
            vec![&Message::nullify(View(1), ProcessorId(3))]
        );
        assert!(r.nullified());
        let out = r.step(Time::from_ms(3.0 * DELTA_MS), [], vec![]);
        assert!(out.broadcasts.is_empty());
    }

    #[test]
    fn timeout_does_not_fire_after_voting() {
        let mut r = replica(3);
        let b = leader_block(1, &g(), &[1]);
        r.step(Time(1), [proposal(&b)], vec![]);
        let out = r.step(Time::from_ms(5.0 * DELTA_MS), [], vec![]);
        assert!(out.broadcasts.is_empty());
        assert!(!r.nullified());
    }

    #[test]
    fn delivery_at_timeout_instant_votes_first() {
        let mut r = replica(3);
        let b = leader_block(1, &g(), &[1]);
        let out = r.step(Time::from_ms(2.0 * DELTA_MS), [proposal(&b)], vec![]);
        assert_eq!(messages(&out), vec![&Message::vote(b, ProcessorId(3))]);
        assert!(!r.nullified());
    }

    // Advance on nullification.
    #[test]
    fn nullification_advances_view() {
        let mut r = replica(3);
        let out = r.step(Time(50), [0, 1, 2].map(|s| nullify(1, s)), vec![]);
        assert_eq!(r.view(), View(2));
        assert_eq!(out.entered_views, vec![View(2)]);
        assert!(!r.nullified());
        assert_eq!(r.notarized(), None);
        assert_eq!(r.view_entry(), Time(50));
        // the nullification is forwarded; no vote or nullify of our own
        assert!(messages(&out).is_empty());
        assert_eq!(certificates(&out).len(), 1);
    }

    // Advance on M-notarization with the late vote.
    #[test]
    fn m_notarization_votes_then_advances() {
        let mut r = replica(4);
        // r has not voted in view 1 when the notarization shows up.
        let b = leader_block(1, &g(), &[1]);
        r.receive(&vote(&b, 0), Time(1));
        r.receive(&vote(&b, 1), Time(1));
        r.receive(&vote(&b, 2), Time(1));
        // Run only the advancement rules so no other rule can emit the vote.
        let mut out = ReplicaOutput::default();
        r.advance_rules(Time(2), &mut out);
        assert_eq!(
            messages(&out),
            vec![&Message::vote(b.clone(), ProcessorId(4))]
        );
        assert_eq!(r.view(), View(2));
        assert_eq!(r.notarized(), None);
        assert!(r.store().signer_voted(&b.hash(), ProcessorId(4)));
    }

    #[test]
    fn m_notarization_advances_without_vote_when_nullified() {
        let mut r = replica(4);
        r.step(Time::from_ms(2.0 * DELTA_MS), [], vec![]);
        assert!(r.nullified());
        let b = leader_block(1, &g(), &[1]);
        let mut inbox = vec![proposal(&b)];
        inbox.extend([0, 1, 2].map(|s| vote(&b, s)));
        let out = r.step(Time::from_ms(2.0 * DELTA_MS + 1.0), inbox, vec![]);
        assert!(messages(&out)
            .iter()
            .all(|m| !matches!(m.kind, MessageKind::Vote(_))));
        assert_eq!(r.view(), View(2));
    }

    #[test]
    fn nullification_rule_precedes_notarization_rule() {
        let mut r = replica(4);
        let b = leader_block(1, &g(), &[1]);
        for s in 0..3 {
            r.receive(&vote(&b, s), Time(1));
            r.receive(&nullify(1, s + 3), Time(1));
        }
        let mut out = ReplicaOutput::default();
        r.advance_rules(Time(2), &mut out);
        assert!(
            messages(&out).is_empty(),
            "no late vote after nullification advance"
        );
        assert_eq!(r.view(), View(2));
        assert_eq!(out.entered_views, vec![View(2)]);
    }

    // Mixed-quorum nullify.
    #[test]
    fn mixed_quorum_nullifies_after_voting() {
        let mut r = replica(5);
        let b = leader_block(1, &g(), &[1]);
        r.step(Time(1), [proposal(&b)], vec![]);
        assert_eq!(r.notarized(), Some(&b));
        let b1 = Arc::new(Block::new(
            View(1),
            vec![Transaction::new(2, [])],
            g().hash(),
            ProcessorId(1),
        ));
        let b2 = Arc::new(Block::new(
            View(1),
            vec![Transaction::new(3, [])],
            g().hash(),
            ProcessorId(1),
        ));
        let out = r.step(Time(2), [nullify(1, 2), vote(&b1, 3), vote(&b2, 4)], vec![]);
        assert_eq!(
            messages(&out),
            vec![&Message::nullify(View(1), ProcessorId(5))]
        );
        assert!(r.nullified());
    }

    #[test]
    fn mixed_quorum_requires_a_vote_of_our_own() {
        let mut r = replica(5);
        let b1 = Arc::new(Block::new(
            View(1),
            vec![Transaction::new(2, [])],
            g().hash(),
            ProcessorId(2),
        ));
        let b2 = Arc::new(Block::new(
            View(1),
            vec![Transaction::new(3, [])],
            g().hash(),
            ProcessorId(2),
        ));
        r.receive(&nullify(1, 2), Time(1));
        r.receive(&vote(&b1, 3), Time(1));
        r.receive(&vote(&b2, 4), Time(1));
        let mut out = ReplicaOutput::default();
        r.mixed_nullify_rule(Time(2), &mut out);
        assert!(out.broadcasts.is_empty());
        assert!(!r.nullified());
    }

    #[test]
    fn mixed_quorum_counts_distinct_signers() {
        let mut r = replica(5);
        let b = leader_block(1, &g(), &[1]);
        r.step(Time(1), [proposal(&b)], vec![]);
        let b1 = Arc::new(Block::new(
            View(1),
            vec![Transaction::new(2, [])],
            g().hash(),
            ProcessorId(2),
        ));
        let out = r.step(Time(2), [nullify(1, 2), vote(&b1, 2), vote(&b1, 3)], vec![]);
        assert!(out.broadcasts.is_empty());
        assert!(!r.nullified());
    }

    // Finalization.
    #[test]
    fn l_notarization_finalizes_chain() {
        let mut r = replica(5);
        let b1 = leader_block(1, &g(), &[1]);
        let b2 = leader_block(2, &b1, &[2]);
        let mut inbox: Vec<Payload> = vec![proposal(&b1)];
        inbox.extend((0..5).map(|s| vote(&b2, s)));
        let out = r.step(Time(3), inbox, vec![]);
        // b2 is L-notarized and its parent b1 is held, so both finalize at once.
        assert_eq!(out.finalized.len(), 1);
        assert_eq!(out.finalized[0].block, b2);
        assert_eq!(out.finalized[0].appended, vec![TxId(1), TxId(2)]);
        assert_eq!(
            r.log().iter().map(|t| t.id.0).collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert_eq!(r.finalized_tip(), Some(&b2));
    }

    #[test]
    fn finalization_waits_for_ancestors() {
        let mut r = replica(5);
        let b1 = leader_block(1, &g(), &[1]);
        let b2 = leader_block(2, &b1, &[2]);
        let out = r.step(Time(3), (0..5).map(|s| vote(&b2, s)), vec![]);
        assert!(out.finalized.is_empty());
        let out = r.step(Time(4), [proposal(&b1)], vec![]);
        assert_eq!(out.finalized.len(), 1);
        assert_eq!(r.log().len(), 2);
    }

    #[test]
    fn duplicate_transactions_are_dropped_from_log() {
        let mut r = replica(5);
        let b1 = leader_block(1, &g(), &[1]);
        let b2 = leader_block(2, &b1, &[1, 2]);
        let mut inbox: Vec<Payload> = vec![proposal(&b1)];
        inbox.extend((0..5).map(|s| vote(&b2, s)));
        r.step(Time(3), inbox, vec![]);
        assert_eq!(
            r.log().iter().map(|t| t.id.0).collect::<Vec<_>>(),
            vec![1, 2]
        );
    }

    #[test]
    fn finalizing_genesis_leaves_log_empty() {
        let mut r = replica(0);
        let mut out = ReplicaOutput::default();
        let genesis = r.store().genesis().clone();
        assert!(r.finalize(&genesis, &mut out));
        assert!(r.log().is_empty());
        assert_eq!(out.finalized[0].appended, Vec::<TxId>::new());
    }

    #[test]
    fn older_finalization_is_a_no_op() {
        let mut r = replica(5);
        let b1 = leader_block(1, &g(), &[1]);
        let b2 = leader_block(2, &b1, &[2]);
        let mut inbox: Vec<Payload> = vec![proposal(&b1)];
        inbox.extend((0..5).map(|s| vote(&b2, s)));
        r.step(Time(3), inbox, vec![]);
        let out = r.step(Time(4), (0..5).map(|s| vote(&b1, s)), vec![]);
        assert_eq!(out.finalized.len(), 1);
        assert!(out.finalized[0].appended.is_empty());
        assert_eq!(r.log().len(), 2);
    }

    #[test]
    fn conflicting_finalization_is_reported() {
        let mut r = replica(5);
        let a = leader_block(1, &g(), &[1]);
        let b = Arc::new(Block::new(
            View(1),
            vec![Transaction::new(2, [])],
            g().hash(),
            ProcessorId(1),
        ));
        r.step(Time(3), (0..5).map(|s| vote(&a, s)), vec![]);
        let out = r.step(Time(4), (0..5).map(|s| vote(&b, s)), vec![]);
        assert_eq!(out.conflicts.len(), 1);
        assert_eq!(r.log().iter().map(|t| t.id.0).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn step_is_deterministic() {
        let run = || {
            let mut r = replica(2);
            let b = leader_block(1, &g(), &[1]);
            let mut outs = vec![r.step(Time(1), [proposal(&b)], vec![Transaction::new(5, [])])];
            outs.push(r.step(Time(2), [0, 1, 3].map(|s| vote(&b, s)), vec![]));
            outs
        };
        assert_eq!(run(), run());
    }
}
