//! Protocol value types: identities, views, blocks, messages, certificates,
//! the canonical block encoding and quorum arithmetic.
//!
//! # Canonical block encoding
//!
//! Every field is written in declaration order. Integers are big-endian.
//! Variable-length fields carry a `u32` length prefix.
//!
//! | field         | layout                                                        |
//! |---------------|---------------------------------------------------------------|
//! | view          | `u64`                                                         |
//! | transactions  | `u32` count, then per transaction: `u64` id, `u32` len, bytes |
//! | parent hash   | `u32` len (0 for genesis, 32 otherwise), digest bytes          |
//! | proposer      | `u32` len (0 for genesis, 4 otherwise), `u32` index            |
//!
//! The block hash is SHA-256 over this encoding. Blocks are ordered by
//! comparing their encodings byte-wise.

use bitvec::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};
use std::sync::Arc;
use thiserror::Error;

/// Index of a processor in `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessorId(pub u32);

impl ProcessorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ProcessorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Protocol view number. View 0 belongs to genesis alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct View(pub u64);

impl View {
    pub const GENESIS: View = View(0);

    pub const fn next(self) -> View {
        View(self.0 + 1)
    }

    pub const fn is_genesis(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Simulated instant or duration in microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Time(pub u64);

impl Time {
    pub const ZERO: Time = Time(0);

    pub fn from_ms(ms: f64) -> Time {
        Time((ms * 1000.0).round().max(0.0) as u64)
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, other: Time) -> Time {
        Time(self.0.saturating_sub(other.0))
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.as_ms())
    }
}

/// Serde adapter writing a [`Time`] as fractional milliseconds.
pub mod time_ms {
    use super::Time;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Time, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(t.as_ms())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Time, D::Error> {
        let ms = f64::deserialize(d)?;
        if !ms.is_finite() || ms < 0.0 {
            return Err(D::Error::custom(
                "time must be a non-negative number of milliseconds",
            ));
        }
        Ok(Time::from_ms(ms))
    }
}

/// Environment-assigned transaction identifier, unique within a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u64);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub id: TxId,
    pub payload: Vec<u8>,
}

impl Transaction {
    pub fn new(id: u64, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            id: TxId(id),
            payload: payload.into(),
        }
    }
}

/// 256-bit block digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockHash(pub [u8; 32]);

impl BlockHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(BlockHash(out))
    }
}

impl fmt::Debug for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..12])
    }
}

impl fmt::Display for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl Serialize for BlockHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BlockHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BlockHash::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// A proposed block `(view, transactions, parent)` signed by its proposer.
///
/// The encoding and hash are computed once at construction; equality and
/// ordering follow the canonical encoding.
#[derive(Clone)]
pub struct Block {
    view: View,
    transactions: Vec<Transaction>,
    parent: Option<BlockHash>,
    proposer: Option<ProcessorId>,
    encoded: Box<[u8]>,
    hash: BlockHash,
}

impl Block {
    /// The genesis block `(0, [], none)`.
    pub fn genesis() -> Block {
        Self::build(View::GENESIS, Vec::new(), None, None)
    }

    pub fn new(
        view: View,
        transactions: Vec<Transaction>,
        parent: BlockHash,
        proposer: ProcessorId,
    ) -> Block {
        Self::build(view, transactions, Some(parent), Some(proposer))
    }

    fn build(
        view: View,
        transactions: Vec<Transaction>,
        parent: Option<BlockHash>,
        proposer: Option<ProcessorId>,
    ) -> Block {
        let encoded =
            encode_block(view, &transactions, parent.as_ref(), proposer).into_boxed_slice();
        let hash = BlockHash(Sha256::digest(&encoded).into());
        Block {
            view,
            transactions,
            parent,
            proposer,
            encoded,
            hash,
        }
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    /// Parent digest; `None` only for genesis.
    pub fn parent(&self) -> Option<BlockHash> {
        self.parent
    }

    /// Claimed signer; `None` only for genesis.
    pub fn proposer(&self) -> Option<ProcessorId> {
        self.proposer
    }

    pub fn is_genesis(&self) -> bool {
        self.view.is_genesis() && self.parent.is_none()
    }

    pub fn hash(&self) -> BlockHash {
        self.hash
    }

    pub fn encoding(&self) -> &[u8] {
        &self.encoded
    }
}

/// Writes the canonical encoding documented at module level.
pub fn encode_block(
    view: View,
    transactions: &[Transaction],
    parent: Option<&BlockHash>,
    proposer: Option<ProcessorId>,
) -> Vec<u8> {
    let payload: usize = transactions.iter().map(|t| 12 + t.payload.len()).sum();
    let mut out = Vec::with_capacity(8 + 4 + payload + 36 + 8);
    out.extend_from_slice(&view.0.to_be_bytes());
    out.extend_from_slice(&(transactions.len() as u32).to_be_bytes());
    for tx in transactions {
        out.extend_from_slice(&tx.id.0.to_be_bytes());
        out.extend_from_slice(&(tx.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&tx.payload);
    }
    match parent {
        Some(h) => {
            out.extend_from_slice(&32u32.to_be_bytes());
            out.extend_from_slice(&h.0);
        }
        None => out.extend_from_slice(&0u32.to_be_bytes()),
    }
    match proposer {
        Some(p) => {
            out.extend_from_slice(&4u32.to_be_bytes());
            out.extend_from_slice(&p.0.to_be_bytes());
        }
        None => out.extend_from_slice(&0u32.to_be_bytes()),
    }
    out
}

pub fn hash_block(block: &Block) -> BlockHash {
    block.hash()
}

impl PartialEq for Block {
    fn eq(&self, other: &Self) -> bool {
        self.encoded == other.encoded
    }
}

impl Eq for Block {}

impl PartialOrd for Block {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Block {
    fn cmp(&self, other: &Self) -> Ordering {
        self.encoded.cmp(&other.encoded)
    }
}

impl std::hash::Hash for Block {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.hash.hash(state);
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Block")
            .field("view", &self.view.0)
            .field(
                "txs",
                &self.transactions.iter().map(|t| t.id.0).collect::<Vec<_>>(),
            )
            .field("parent", &self.parent)
            .field("proposer", &self.proposer.map(|p| p.0))
            .field("hash", &self.hash)
            .finish()
    }
}

/// A set of distinct signers, kept as a bitmap over processor indices.
///
/// Ordered lexicographically by the ascending list of member indices.
#[derive(Clone, Default)]
pub struct SignerSet(BitVec<u64, Lsb0>);

impl SignerSet {
    pub fn new() -> Self {
        Self(BitVec::new())
    }

    pub fn from_ids<I: IntoIterator<Item = ProcessorId>>(ids: I) -> Self {
        let mut set = Self::new();
        for id in ids {
            set.insert(id);
        }
        set
    }

    /// Returns true when `id` was not already present.
    pub fn insert(&mut self, id: ProcessorId) -> bool {
        let i = id.index();
        if i >= self.0.len() {
            self.0.resize(i + 1, false);
        }
        !self.0.replace(i, true)
    }

    pub fn contains(&self, id: ProcessorId) -> bool {
        self.0.get(id.index()).map(|b| *b).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.0.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.0.not_any()
    }

    pub fn iter(&self) -> impl Iterator<Item = ProcessorId> + '_ {
        self.0.iter_ones().map(|i| ProcessorId(i as u32))
    }

    pub fn is_superset(&self, other: &SignerSet) -> bool {
        other.iter().all(|p| self.contains(p))
    }

    pub fn union_with(&mut self, other: &SignerSet) {
        if other.0.len() > self.0.len() {
            self.0.resize(other.0.len(), false);
        }
        for i in other.0.iter_ones() {
            self.0.set(i, true);
        }
    }

    /// The `k` smallest members.
    pub fn least(&self, k: usize) -> SignerSet {
        SignerSet::from_ids(self.iter().take(k))
    }

    fn normalized(&self) -> &BitSlice<u64, Lsb0> {
        match self.0.last_one() {
            Some(last) => &self.0[..=last],
            None => &self.0[..0],
        }
    }
}

impl PartialOrd for SignerSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SignerSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

impl fmt::Debug for SignerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|p| p.0)).finish()
    }
}

impl Serialize for SignerSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(|p| p.0))
    }
}

impl<'de> Deserialize<'de> for SignerSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<u32>::deserialize(d)?;
        Ok(SignerSet::from_ids(ids.into_iter().map(ProcessorId)))
    }
}

// Bitmaps of different capacities can hold the same members.
impl PartialEq for SignerSet {
    fn eq(&self, other: &Self) -> bool {
        self.normalized() == other.normalized()
    }
}

impl Eq for SignerSet {}

impl std::hash::Hash for SignerSet {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        for id in self.iter() {
            id.hash(state);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MessageKind {
    Proposal(Arc<Block>),
    Vote(Arc<Block>),
    Nullify(View),
}

/// A signed protocol message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub signer: ProcessorId,
}

impl Message {
    pub fn proposal(block: Arc<Block>, signer: ProcessorId) -> Self {
        Self {
            kind: MessageKind::Proposal(block),
            signer,
        }
    }

    pub fn vote(block: Arc<Block>, signer: ProcessorId) -> Self {
        Self {
            kind: MessageKind::Vote(block),
            signer,
        }
    }

    pub fn nullify(view: View, signer: ProcessorId) -> Self {
        Self {
            kind: MessageKind::Nullify(view),
            signer,
        }
    }

    pub fn view(&self) -> View {
        match &self.kind {
            MessageKind::Proposal(b) | MessageKind::Vote(b) => b.view(),
            MessageKind::Nullify(v) => *v,
        }
    }

    pub fn block(&self) -> Option<&Arc<Block>> {
        match &self.kind {
            MessageKind::Proposal(b) | MessageKind::Vote(b) => Some(b),
            MessageKind::Nullify(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CertificateKind {
    MNotarization(Arc<Block>),
    LNotarization(Arc<Block>),
    Nullification(View),
}

impl CertificateKind {
    fn tag(&self) -> u8 {
        match self {
            CertificateKind::MNotarization(_) => 0,
            CertificateKind::LNotarization(_) => 1,
            CertificateKind::Nullification(_) => 2,
        }
    }
}

/// A bundle of matching signed votes or nullifies from distinct signers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub signers: SignerSet,
}

impl Certificate {
    pub fn view(&self) -> View {
        match &self.kind {
            CertificateKind::MNotarization(b) | CertificateKind::LNotarization(b) => b.view(),
            CertificateKind::Nullification(v) => *v,
        }
    }

    pub fn block(&self) -> Option<&Arc<Block>> {
        match &self.kind {
            CertificateKind::MNotarization(b) | CertificateKind::LNotarization(b) => Some(b),
            CertificateKind::Nullification(_) => None,
        }
    }

    /// Whether the signer count reaches the threshold for this kind.
    pub fn meets_threshold(&self, params: &ProtocolParams) -> bool {
        let need = match self.kind {
            CertificateKind::MNotarization(_) | CertificateKind::Nullification(_) => {
                params.m_quorum()
            }
            CertificateKind::LNotarization(_) => params.l_quorum(),
        };
        self.signers.len() >= need
    }

    /// The individual signed messages this certificate bundles.
    pub fn messages(&self) -> impl Iterator<Item = Message> + '_ {
        self.signers.iter().map(move |s| match &self.kind {
            CertificateKind::MNotarization(b) | CertificateKind::LNotarization(b) => {
                Message::vote(b.clone(), s)
            }
            CertificateKind::Nullification(v) => Message::nullify(*v, s),
        })
    }
}

impl PartialOrd for Certificate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ordered by kind tag, then subject (block hash or view), then sorted signers.
impl Ord for Certificate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind
            .tag()
            .cmp(&other.kind.tag())
            .then_with(|| match (&self.kind, &other.kind) {
                (CertificateKind::Nullification(a), CertificateKind::Nullification(b)) => a.cmp(b),
                _ => {
                    let a = self.block().map(|b| b.hash());
                    let b = other.block().map(|b| b.hash());
                    a.cmp(&b)
                }
            })
            .then_with(|| self.signers.cmp(&other.signers))
    }
}

/// Anything that travels on the wire between processors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Message(Message),
    Certificate(Certificate),
}

impl From<Message> for Payload {
    fn from(m: Message) -> Self {
        Payload::Message(m)
    }
}

impl From<Certificate> for Payload {
    fn from(c: Certificate) -> Self {
        Payload::Certificate(c)
    }
}

/// Which vote count lets a replica leave a view on a notarization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Progression {
    /// 2f+1 votes (the protocol as designed).
    #[default]
    Mini,
    /// n-f votes; comparison baseline only.
    Large,
}

impl fmt::Display for Progression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Progression::Mini => "mini",
            Progression::Large => "large",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamsError {
    #[error("n must be at least 1")]
    NoProcessors,
    #[error("fault bound violated: 5f+1 = {} > n = {n}", 5 * f + 1)]
    TooManyFaults { n: u32, f: u32 },
    #[error("delta must be positive")]
    ZeroDelta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolParams {
    pub n: u32,
    pub f: u32,
    /// Post-GST delivery bound; the view timer expires after twice this.
    pub delta: Time,
    pub progression: Progression,
}

impl ProtocolParams {
    pub fn new(n: u32, f: u32, delta: Time, progression: Progression) -> Result<Self, ParamsError> {
        let params = Self {
            n,
            f,
            delta,
            progression,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.n == 0 {
            return Err(ParamsError::NoProcessors);
        }
        if 5 * self.f + 1 > self.n {
            return Err(ParamsError::TooManyFaults {
                n: self.n,
                f: self.f,
            });
        }
        if self.delta == Time::ZERO {
            return Err(ParamsError::ZeroDelta);
        }
        Ok(())
    }

    /// 2f+1: M-notarization and nullification size.
    pub fn m_quorum(&self) -> usize {
        (2 * self.f + 1) as usize
    }

    /// n-f: L-notarization size.
    pub fn l_quorum(&self) -> usize {
        (self.n - self.f) as usize
    }

    /// Votes needed to leave a view on a notarization under the configured progression.
    pub fn advance_quorum(&self) -> usize {
        match self.progression {
            Progression::Mini => self.m_quorum(),
            Progression::Large => self.l_quorum(),
        }
    }

    /// Minimum overlap of any L-quorum and M-quorum: (n-f)+(2f+1)-n = f+1.
    pub fn quorum_intersection_bound(&self) -> usize {
        self.l_quorum() + self.m_quorum() - self.n as usize
    }

    pub fn timeout(&self) -> Time {
        Time(2 * self.delta.0)
    }

    pub fn processors(&self) -> impl Iterator<Item = ProcessorId> {
        (0..self.n).map(ProcessorId)
    }
}

pub fn m_quorum(params: &ProtocolParams) -> usize {
    params.m_quorum()
}

pub fn l_quorum(params: &ProtocolParams) -> usize {
    params.l_quorum()
}

pub fn quorum_intersection_bound(params: &ProtocolParams) -> usize {
    params.quorum_intersection_bound()
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("genesis view has no leader")]
pub struct GenesisHasNoLeader;

/// Round-robin leader: `v mod n`.
pub fn lead(view: View, n: u32) -> Result<ProcessorId, GenesisHasNoLeader> {
    if view.is_genesis() {
        return Err(GenesisHasNoLeader);
    }
    Ok(ProcessorId((view.0 % n as u64) as u32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(n: u32, f: u32) -> ProtocolParams {
        ProtocolParams::new(n, f, Time::from_ms(100.0), Progression::Mini).unwrap()
    }

    #[test]
    fn leader_is_view_mod_n() {
        assert_eq!(lead(View(5), 4), Ok(ProcessorId(1)));
        assert_eq!(lead(View(6), 6), Ok(ProcessorId(0)));
        assert_eq!(lead(View(1), 11), Ok(ProcessorId(1)));
        assert_eq!(lead(View(0), 4), Err(GenesisHasNoLeader));
    }

    #[test]
    fn quorum_sizes() {
        let p = params(6, 1);
        assert_eq!((p.m_quorum(), p.l_quorum()), (3, 5));
        let p = params(11, 2);
        assert_eq!((p.m_quorum(), p.l_quorum()), (5, 9));
        let p = params(6, 0);
        assert_eq!((p.m_quorum(), p.l_quorum()), (1, 6));
    }

    #[test]
    fn intersection_bound() {
        assert_eq!(params(6, 1).quorum_intersection_bound(), 2);
        assert_eq!(params(11, 2).quorum_intersection_bound(), 3);
        assert_eq!(params(16, 3).quorum_intersection_bound(), 4);
    }

    #[test]
    fn params_validation() {
        assert_eq!(
            ProtocolParams::new(5, 1, Time(1), Progression::Mini),
            Err(ParamsError::TooManyFaults { n: 5, f: 1 })
        );
        assert_eq!(
            ProtocolParams::new(6, 1, Time::ZERO, Progression::Mini),
            Err(ParamsError::ZeroDelta)
        );
        assert_eq!(
            ProtocolParams::new(0, 0, Time(1), Progression::Mini),
            Err(ParamsError::NoProcessors)
        );
    }

    #[test]
    fn genesis_encoding_golden() {
        let g = Block::genesis();
        assert_eq!(
            g.encoding(),
            &[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0][..]
        );
        // sha256 of twenty zero bytes.
        assert_eq!(
            g.hash().to_hex(),
            "de47c9b27eb8d300dbb5f2c353e632c393262cf06340c4fa7f1b40c4cbd36f90"
        );
    }

    #[test]
    fn one_transaction_id_changes_hash() {
        let g = Block::genesis().hash();
        let a = Block::new(View(1), vec![Transaction::new(1, [])], g, ProcessorId(1));
        let b = Block::new(View(1), vec![Transaction::new(2, [])], g, ProcessorId(1));
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }

    #[test]
    fn encoding_layout() {
        let parent = BlockHash([7; 32]);
        let b = Block::new(
            View(3),
            vec![Transaction::new(9, [0xaa])],
            parent,
            ProcessorId(2),
        );
        let mut expect = vec![0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0, 1];
        expect.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 9, 0, 0, 0, 1, 0xaa]);
        expect.extend_from_slice(&[0, 0, 0, 32]);
        expect.extend_from_slice(&[7; 32]);
        expect.extend_from_slice(&[0, 0, 0, 4, 0, 0, 0, 2]);
        assert_eq!(b.encoding(), &expect[..]);
    }

    #[test]
    fn nullification_order_by_signers() {
        let a = Certificate {
            kind: CertificateKind::Nullification(View(3)),
            signers: SignerSet::from_ids([0, 1, 2].map(ProcessorId)),
        };
        let b = Certificate {
            kind: CertificateKind::Nullification(View(3)),
            signers: SignerSet::from_ids([0, 1, 3].map(ProcessorId)),
        };
        assert_eq!(a.cmp(&a.clone()), Ordering::Equal);
        assert!(a < b);
    }

    #[test]
    fn block_order_follows_encoding() {
        let g = Block::genesis().hash();
        let a = Block::new(View(1), vec![], g, ProcessorId(1));
        let b = Block::new(View(2), vec![], g, ProcessorId(2));
        assert_eq!(a.cmp(&b), a.encoding().cmp(b.encoding()));
        assert!(a < b);
    }

    #[test]
    fn signer_set_basics() {
        let mut s = SignerSet::new();
        assert!(s.insert(ProcessorId(4)));
        assert!(!s.insert(ProcessorId(4)));
        s.insert(ProcessorId(1));
        assert_eq!(s.len(), 2);
        assert_eq!(
            s.iter().collect::<Vec<_>>(),
            vec![ProcessorId(1), ProcessorId(4)]
        );
        assert_eq!(s.least(1), SignerSet::from_ids([ProcessorId(1)]));
        assert!(
            SignerSet::from_ids([ProcessorId(0), ProcessorId(1)])
                < SignerSet::from_ids([ProcessorId(0), ProcessorId(1), ProcessorId(2)])
        );
    }

    fn arb_block() -> impl Strategy<Value = Block> {
        (
            1u64..20,
            proptest::collection::vec(0u64..50, 0..4),
            any::<[u8; 32]>(),
            0u32..8,
        )
            .prop_map(|(v, ids, parent, p)| {
                let txs = ids.into_iter().map(|i| Transaction::new(i, [])).collect();
                Block::new(View(v), txs, BlockHash(parent), ProcessorId(p))
            })
    }

    fn arb_cert() -> impl Strategy<Value = Certificate> {
        (
            0u8..3,
            1u64..4,
            proptest::collection::btree_set(0u32..8, 0..6),
        )
            .prop_map(|(k, v, s)| {
                let g = Block::genesis().hash();
                let b = Arc::new(Block::new(View(v), vec![], g, ProcessorId(v as u32)));
                let kind = match k {
                    0 => CertificateKind::MNotarization(b),
                    1 => CertificateKind::LNotarization(b),
                    _ => CertificateKind::Nullification(View(v)),
                };
                Certificate {
                    kind,
                    signers: SignerSet::from_ids(s.into_iter().map(ProcessorId)),
                }
            })
    }

    proptest! {
        #[test]
        fn quorum_overlap_exceeds_f(f in 0u32..20, extra in 0u32..20) {
            let p = params(5 * f + 1 + extra, f);
            prop_assert_eq!(p.m_quorum() + p.l_quorum() - p.n as usize, f as usize + 1);
            prop_assert!(p.l_quorum() + p.m_quorum() > p.n as usize + f as usize);
        }

        #[test]
        fn block_order_is_total(a in arb_block(), b in arb_block(), c in arb_block()) {
            // antisymmetry and totality
            prop_assert_eq!(a.cmp(&b), b.cmp(&a).reverse());
            prop_assert_eq!(a.cmp(&b) == Ordering::Equal, a == b);
            // transitivity
            if a <= b && b <= c {
                prop_assert!(a <= c);
            }
        }

        #[test]
        fn certificate_order_is_total(a in arb_cert(), b in arb_cert(), c in arb_cert()) {
            prop_assert_eq!(a.cmp(&b), b.cmp(&a).reverse());
            if a <= b && b <= c {
                prop_assert!(a <= c);
            }
        }

        #[test]
        fn distinct_blocks_hash_distinctly(blocks in proptest::collection::vec(arb_block(), 1..40)) {
            let mut seen = std::collections::BTreeMap::new();
            for b in blocks {
                if let Some(prev) = seen.insert(b.hash(), b.clone()) {
                    prop_assert!(prev == b);
                }
            }
        }
    }
}
