//! The replica-local message store: every message received, indexed for the
//! quorum queries the replica asks each activation.

use crate::types::{
    lead, Block, BlockHash, Certificate, CertificateKind, Message, MessageKind, Payload,
    ProcessorId, ProtocolParams, SignerSet, Time, View,
};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// Identifies a certificate by kind and subject, ignoring its signers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CertKey {
    Nullification(View),
    MNotarization(BlockHash),
    LNotarization(BlockHash),
}

/// Insert-only store of messages and blocks.
///
/// Starts with genesis and its synthetic M- and L-notarizations. Those two
/// certificates are never reported as new.
#[derive(Clone, Debug)]
pub struct Store {
    params: ProtocolParams,
    genesis: Arc<Block>,
    blocks: BTreeMap<BlockHash, Arc<Block>>,
    /// Leader-signed blocks per view.
    leader_blocks: BTreeMap<View, BTreeSet<BlockHash>>,
    votes: BTreeMap<BlockHash, SignerSet>,
    voted_blocks_by_view: BTreeMap<View, BTreeSet<BlockHash>>,
    nullifies: BTreeMap<View, SignerSet>,
    /// M-notarized blocks per view, canonical order.
    m_notarized: BTreeMap<View, BTreeSet<Arc<Block>>>,
    /// When each certificate first formed locally.
    first_formed: BTreeMap<CertKey, Time>,
    new_l: Vec<Arc<Block>>,
}

impl Store {
    pub fn new(params: ProtocolParams) -> Self {
        let genesis = Arc::new(Block::genesis());
        let mut store = Self {
            params,
            genesis: genesis.clone(),
            blocks: BTreeMap::new(),
            leader_blocks: BTreeMap::new(),
            votes: BTreeMap::new(),
            voted_blocks_by_view: BTreeMap::new(),
            nullifies: BTreeMap::new(),
            m_notarized: BTreeMap::new(),
            first_formed: BTreeMap::new(),
            new_l: Vec::new(),
        };
        let h = genesis.hash();
        store.blocks.insert(h, genesis.clone());
        store
            .m_notarized
            .entry(View::GENESIS)
            .or_default()
            .insert(genesis);
        store
            .first_formed
            .insert(CertKey::MNotarization(h), Time::ZERO);
        store
            .first_formed
            .insert(CertKey::LNotarization(h), Time::ZERO);
        store
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn genesis(&self) -> &Arc<Block> {
        &self.genesis
    }

    /// Stores `payload` and returns the certificates that became new with it.
    pub fn insert(&mut self, payload: &Payload, now: Time) -> Vec<Certificate> {
        self.insert_all(std::iter::once(payload), now)
    }

    /// Stores every payload, then reports each certificate whose threshold
    /// was first crossed by this batch, carrying the least witness available
    /// once the whole batch is in.
    ///
    /// Nullifications come first, then M-notarizations, then
    /// L-notarizations; each group is ordered by subject.
    pub fn insert_all<'a, I>(&mut self, payloads: I, now: Time) -> Vec<Certificate>
    where
        I: IntoIterator<Item = &'a Payload>,
    {
        let mut touched = BTreeSet::new();
        for payload in payloads {
            match payload {
                Payload::Message(m) => self.record(m, &mut touched),
                Payload::Certificate(c) if !self.knows_all(c) => {
                    for m in c.messages() {
                        self.record(&m, &mut touched);
                    }
                }
                Payload::Certificate(_) => {}
            }
        }
        let mut fresh = Vec::new();
        for key in touched {
            if self.first_formed.contains_key(&key) {
                continue;
            }
            if let Some(cert) = self.witness(key) {
                self.first_formed.insert(key, now);
                if let CertificateKind::LNotarization(b) = &cert.kind {
                    self.new_l.push(b.clone());
                }
                fresh.push(cert);
            }
        }
        fresh
    }

    /// Whether every signature in `c` is already stored.
    fn knows_all(&self, c: &Certificate) -> bool {
        let held = match &c.kind {
            CertificateKind::Nullification(v) => self.nullifies.get(v),
            CertificateKind::MNotarization(b) | CertificateKind::LNotarization(b) => {
                self.votes.get(&b.hash())
            }
        };
        held.is_some_and(|h| h.is_superset(&c.signers))
    }

    fn record(&mut self, msg: &Message, touched: &mut BTreeSet<CertKey>) {
        match &msg.kind {
            MessageKind::Proposal(b) => {
                self.add_block(b);
            }
            MessageKind::Vote(b) => {
                let h = self.add_block(b);
                let voters = self.votes.entry(h).or_default();
                if voters.insert(msg.signer) {
                    self.voted_blocks_by_view
                        .entry(b.view())
                        .or_default()
                        .insert(h);
                    let count = voters.len();
                    // Counts grow by one, so each threshold is crossed exactly once.
                    if count == self.params.m_quorum() {
                        let block = self.blocks[&h].clone();
                        self.m_notarized
                            .entry(block.view())
                            .or_default()
                            .insert(block);
                        touched.insert(CertKey::MNotarization(h));
                    }
                    if count == self.params.l_quorum() {
                        touched.insert(CertKey::LNotarization(h));
                    }
                }
            }
            MessageKind::Nullify(v) => {
                let set = self.nullifies.entry(*v).or_default();
                if set.insert(msg.signer) && set.len() == self.params.m_quorum() {
                    touched.insert(CertKey::Nullification(*v));
                }
            }
        }
    }

    fn add_block(&mut self, b: &Arc<Block>) -> BlockHash {
        let h = b.hash();
        if self.blocks.contains_key(&h) {
            return h;
        }
        self.blocks.insert(h, b.clone());
        if !b.view().is_genesis() {
            if let (Some(p), Ok(leader)) = (b.proposer(), lead(b.view(), self.params.n)) {
                if p == leader {
                    self.leader_blocks.entry(b.view()).or_default().insert(h);
                }
            }
        }
        h
    }

    /// Lexicographically least certificate for `key` currently held.
    fn witness(&self, key: CertKey) -> Option<Certificate> {
        match key {
            CertKey::Nullification(v) => {
                let signers = self.nullifies.get(&v)?;
                let need = self.params.m_quorum();
                (signers.len() >= need).then(|| Certificate {
                    kind: CertificateKind::Nullification(v),
                    signers: signers.least(need),
                })
            }
            CertKey::MNotarization(h) | CertKey::LNotarization(h) => {
                let signers = self.votes.get(&h)?;
                let block = self.blocks.get(&h)?.clone();
                let (need, kind) = match key {
                    CertKey::MNotarization(_) => (
                        self.params.m_quorum(),
                        CertificateKind::MNotarization(block),
                    ),
                    _ => (
                        self.params.l_quorum(),
                        CertificateKind::LNotarization(block),
                    ),
                };
                (signers.len() >= need).then(|| Certificate {
                    kind,
                    signers: signers.least(need),
                })
            }
        }
    }

    pub fn block(&self, hash: &BlockHash) -> Option<&Arc<Block>> {
        self.blocks.get(hash)
    }

    pub fn contains_block(&self, hash: &BlockHash) -> bool {
        self.blocks.contains_key(hash)
    }

    pub fn voters(&self, hash: &BlockHash) -> Option<&SignerSet> {
        self.votes.get(hash)
    }

    pub fn nullifiers(&self, view: View) -> Option<&SignerSet> {
        self.nullifies.get(&view)
    }

    /// When the certificate identified by `key` first formed, if it has.
    pub fn first_formed(&self, key: CertKey) -> Option<Time> {
        self.first_formed.get(&key).copied()
    }

    pub fn has_nullification(&self, view: View) -> bool {
        self.nullifies
            .get(&view)
            .is_some_and(|s| s.len() >= self.params.m_quorum())
    }

    pub fn has_m_notarization(&self, hash: &BlockHash) -> bool {
        *hash == self.genesis.hash() || self.vote_count(hash) >= self.params.m_quorum()
    }

    pub fn has_l_notarization(&self, hash: &BlockHash) -> bool {
        *hash == self.genesis.hash() || self.vote_count(hash) >= self.params.l_quorum()
    }

    fn vote_count(&self, hash: &BlockHash) -> usize {
        self.votes.get(hash).map_or(0, SignerSet::len)
    }

    /// Canonical-least M-notarized block of `view`.
    pub fn m_notarized_block(&self, view: View) -> Option<Arc<Block>> {
        self.m_notarized.get(&view).and_then(|s| s.first().cloned())
    }

    /// Canonical-least block of `view` whose vote count reaches the
    /// progression quorum (2f+1 for Mini, n-f for Large).
    pub fn advancing_block(&self, view: View) -> Option<Arc<Block>> {
        let need = self.params.advance_quorum();
        if need == self.params.m_quorum() {
            return self.m_notarized_block(view);
        }
        self.m_notarized
            .get(&view)?
            .iter()
            .find(|b| self.vote_count(&b.hash()) >= need)
            .cloned()
    }

    /// The M-notarized block of greatest view below `view`, least among ties.
    pub fn select_parent(&self, view: View) -> (Arc<Block>, View) {
        let (v, blocks) = self
            .m_notarized
            .range(..view)
            .next_back()
            .expect("genesis is always M-notarized");
        let b = blocks.first().expect("m_notarized entries are non-empty");
        (b.clone(), *v)
    }

    /// The single leader block for `view` if it is a valid proposal:
    /// exactly one leader-signed block, an M-notarized parent from an
    /// earlier view, and a nullification for every view strictly between.
    pub fn valid_proposal(&self, view: View) -> Option<Arc<Block>> {
        let candidates = self.leader_blocks.get(&view)?;
        if candidates.len() != 1 {
            return None;
        }
        let block = &self.blocks[candidates.first()?];
        let parent_hash = block.parent()?;
        let parent = self.blocks.get(&parent_hash)?;
        if parent.view() >= view || !self.has_m_notarization(&parent_hash) {
            return None;
        }
        let mut gap = parent.view().next();
        while gap < view {
            if !self.has_nullification(gap) {
                return None;
            }
            gap = gap.next();
        }
        Some(block.clone())
    }

    /// Distinct signers that nullified `view` or voted for a view block
    /// other than `voted`.
    pub fn conflicting_signers(&self, view: View, voted: &BlockHash) -> SignerSet {
        let mut signers = self.nullifies.get(&view).cloned().unwrap_or_default();
        if let Some(blocks) = self.voted_blocks_by_view.get(&view) {
            for h in blocks.iter().filter(|h| *h != voted) {
                signers.union_with(&self.votes[h]);
            }
        }
        signers
    }

    /// Drains L-notarized blocks not yet handed out; each block appears once
    /// per store lifetime.
    pub fn take_new_l_notarizations(&mut self) -> Vec<Arc<Block>> {
        std::mem::take(&mut self.new_l)
    }

    /// `block` and its ancestors root-first, or `None` if any is missing.
    pub fn ancestry(&self, block: &Arc<Block>) -> Option<Vec<Arc<Block>>> {
        let mut chain = vec![block.clone()];
        let mut cur = block.clone();
        while let Some(parent) = cur.parent() {
            let p = self.blocks.get(&parent)?.clone();
            if p.view() >= cur.view() {
                return None;
            }
            chain.push(p.clone());
            cur = p;
        }
        if !cur.is_genesis() {
            return None;
        }
        chain.reverse();
        Some(chain)
    }

    /// Ancestors of `block` (inclusive) walking back while they are present.
    pub fn known_ancestors(&self, block: &Arc<Block>) -> Vec<Arc<Block>> {
        let mut out = vec![block.clone()];
        let mut cur = block.clone();
        while let Some(p) = cur.parent().and_then(|h| self.blocks.get(&h)) {
            if p.view() >= cur.view() {
                break;
            }
            out.push(p.clone());
            cur = p.clone();
        }
        out
    }

    pub fn signer_voted(&self, hash: &BlockHash, signer: ProcessorId) -> bool {
        self.votes.get(hash).is_some_and(|s| s.contains(signer))
    }
}
