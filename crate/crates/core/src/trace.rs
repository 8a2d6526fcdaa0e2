//! Run traces and their JSON-lines encoding.
//!
//! Line 1 is a [`TraceHeader`]; every further line is one event. Event `i`
//! (0-based, header excluded) is the witness index used by the checker.

use crate::config::Horizon;
use crate::types::{
    time_ms, BlockHash, Certificate, CertificateKind, Message, MessageKind, Payload, ProcessorId,
    Progression, ProtocolParams, SignerSet, Time, TxId, View,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use thiserror::Error;

pub const TRACE_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// Fixed-duration horizon elapsed.
    Horizon,
    /// Every correct processor passed the target view.
    Views,
    /// The safety cap stopped a view-horizon run first.
    TimeCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub name: String,
    pub n: u32,
    pub f: u32,
    #[serde(rename = "delta_ms", with = "time_ms")]
    pub delta: Time,
    pub progression: Progression,
    #[serde(rename = "gst_ms", with = "time_ms")]
    pub gst: Time,
    pub seed: u64,
    pub corrupted: Vec<ProcessorId>,
    pub regions: Vec<String>,
    pub assignment: Vec<usize>,
    pub horizon: Horizon,
    /// Largest effective one-way delay in the run's latency model.
    #[serde(rename = "max_latency_ms", with = "time_ms")]
    pub max_latency: Time,
    #[serde(rename = "end_ms", with = "time_ms")]
    pub end: Time,
    pub ended_by: EndReason,
}

impl TraceHeader {
    pub fn params(&self) -> ProtocolParams {
        ProtocolParams {
            n: self.n,
            f: self.f,
            delta: self.delta,
            progression: self.progression,
        }
    }

    pub fn corrupted_set(&self) -> BTreeSet<ProcessorId> {
        self.corrupted.iter().copied().collect()
    }

    pub fn correct(&self) -> Vec<ProcessorId> {
        let bad = self.corrupted_set();
        (0..self.n)
            .map(ProcessorId)
            .filter(|p| !bad.contains(p))
            .collect()
    }

    pub fn region_of(&self, p: ProcessorId) -> Option<&str> {
        self.assignment
            .get(p.index())
            .and_then(|&r| self.regions.get(r))
            .map(String::as_str)
    }
}

/// Summary of a payload as sent on the wire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMsg {
    Proposal {
        signer: ProcessorId,
        view: View,
        block_hash: BlockHash,
        parent_hash: Option<BlockHash>,
        txs: Vec<TxId>,
    },
    Vote {
        signer: ProcessorId,
        view: View,
        block_hash: BlockHash,
        parent_hash: Option<BlockHash>,
    },
    Nullify {
        signer: ProcessorId,
        view: View,
    },
    MNotarization {
        view: View,
        block_hash: BlockHash,
        parent_hash: Option<BlockHash>,
        signers: SignerSet,
    },
    LNotarization {
        view: View,
        block_hash: BlockHash,
        parent_hash: Option<BlockHash>,
        signers: SignerSet,
    },
    Nullification {
        view: View,
        signers: SignerSet,
    },
}

impl WireMsg {
    pub fn summarize(payload: &Payload) -> Self {
        match payload {
            Payload::Message(Message { kind, signer }) => match kind {
                MessageKind::Proposal(b) => WireMsg::Proposal {
                    signer: *signer,
                    view: b.view(),
                    block_hash: b.hash(),
                    parent_hash: b.parent(),
                    txs: b.transactions().iter().map(|t| t.id).collect(),
                },
                MessageKind::Vote(b) => WireMsg::Vote {
                    signer: *signer,
                    view: b.view(),
                    block_hash: b.hash(),
                    parent_hash: b.parent(),
                },
                MessageKind::Nullify(v) => WireMsg::Nullify {
                    signer: *signer,
                    view: *v,
                },
            },
            Payload::Certificate(Certificate { kind, signers }) => match kind {
                CertificateKind::MNotarization(b) => WireMsg::MNotarization {
                    view: b.view(),
                    block_hash: b.hash(),
                    parent_hash: b.parent(),
                    signers: signers.clone(),
                },
                CertificateKind::LNotarization(b) => WireMsg::LNotarization {
                    view: b.view(),
                    block_hash: b.hash(),
                    parent_hash: b.parent(),
                    signers: signers.clone(),
                },
                CertificateKind::Nullification(v) => WireMsg::Nullification {
                    view: *v,
                    signers: signers.clone(),
                },
            },
        }
    }

    pub fn view(&self) -> View {
        match self {
            WireMsg::Proposal { view, .. }
            | WireMsg::Vote { view, .. }
            | WireMsg::Nullify { view, .. }
            | WireMsg::MNotarization { view, .. }
            | WireMsg::LNotarization { view, .. }
            | WireMsg::Nullification { view, .. } => *view,
        }
    }

    pub fn block_hash(&self) -> Option<BlockHash> {
        match self {
            WireMsg::Proposal { block_hash, .. }
            | WireMsg::Vote { block_hash, .. }
            | WireMsg::MNotarization { block_hash, .. }
            | WireMsg::LNotarization { block_hash, .. } => Some(*block_hash),
            _ => None,
        }
    }

    /// Block hash and parent hash, when the summary names a block.
    pub fn block_link(&self) -> Option<(BlockHash, Option<BlockHash>)> {
        match self {
            WireMsg::Proposal {
                block_hash,
                parent_hash,
                ..
            }
            | WireMsg::Vote {
                block_hash,
                parent_hash,
                ..
            }
            | WireMsg::MNotarization {
                block_hash,
                parent_hash,
                ..
            }
            | WireMsg::LNotarization {
                block_hash,
                parent_hash,
                ..
            } => Some((*block_hash, *parent_hash)),
            _ => None,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        match self {
            WireMsg::Proposal { .. } => MsgType::Proposal,
            WireMsg::Vote { .. } => MsgType::Vote,
            WireMsg::Nullify { .. } => MsgType::Nullify,
            WireMsg::MNotarization { .. } => MsgType::MNotarization,
            WireMsg::LNotarization { .. } => MsgType::LNotarization,
            WireMsg::Nullification { .. } => MsgType::Nullification,
        }
    }

    pub fn reference(&self) -> MsgRef {
        MsgRef {
            ty: self.msg_type(),
            view: self.view(),
            block_hash: self.block_hash(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgType {
    Proposal,
    Vote,
    Nullify,
    MNotarization,
    LNotarization,
    Nullification,
}

/// Short form of a delivered payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsgRef {
    #[serde(rename = "type")]
    pub ty: MsgType,
    pub view: View,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_hash: Option<BlockHash>,
}

impl MsgRef {
    pub fn of(payload: &Payload) -> Self {
        let (ty, view, block) = match payload {
            Payload::Message(m) => match &m.kind {
                MessageKind::Proposal(b) => (MsgType::Proposal, b.view(), Some(b.hash())),
                MessageKind::Vote(b) => (MsgType::Vote, b.view(), Some(b.hash())),
                MessageKind::Nullify(v) => (MsgType::Nullify, *v, None),
            },
            Payload::Certificate(c) => match &c.kind {
                CertificateKind::MNotarization(b) => {
                    (MsgType::MNotarization, b.view(), Some(b.hash()))
                }
                CertificateKind::LNotarization(b) => {
                    (MsgType::LNotarization, b.view(), Some(b.hash()))
                }
                CertificateKind::Nullification(v) => (MsgType::Nullification, *v, None),
            },
        };
        MsgRef {
            ty,
            view,
            block_hash: block,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Gst,
    TxArrival {
        tx: TxId,
    },
    /// `to` is absent for a broadcast to every other processor.
    Send {
        msg: WireMsg,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<Vec<ProcessorId>>,
    },
    Deliver {
        from: ProcessorId,
        #[serde(rename = "sent_ms", with = "time_ms")]
        sent: Time,
        msg: MsgRef,
    },
    EnterView {
        view: View,
    },
    /// `appended` lists the transactions the finalization added to the log.
    Finalize {
        view: View,
        block_hash: BlockHash,
        appended: Vec<TxId>,
        log_len: usize,
    },
    /// A finalization that did not extend the local log.
    Conflict {
        view: View,
        block_hash: BlockHash,
        log_len: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: Time,
    /// Absent for global events.
    pub proc: Option<ProcessorId>,
    pub kind: EventKind,
}

#[derive(Serialize)]
struct LineOut<'a> {
    seq: usize,
    time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    proc: Option<ProcessorId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    region: Option<&'a str>,
    #[serde(flatten)]
    kind: &'a EventKind,
}

#[derive(Deserialize)]
struct LineIn {
    seq: usize,
    #[serde(with = "time_ms")]
    time_ms: Time,
    #[serde(default)]
    proc: Option<ProcessorId>,
    #[serde(default)]
    #[allow(dead_code)]
    region: Option<String>,
    #[serde(flatten)]
    kind: EventKind,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for (seq, e) in self.events.iter().enumerate() {
            let line = LineOut {
                seq,
                time_ms: e.time.as_ms(),
                proc: e.proc,
                region: e.proc.and_then(|p| self.header.region_of(p)),
                kind: &e.kind,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or(TraceError::Parse {
            line: 1,
            message: "empty trace".into(),
        })??;
        let header: TraceHeader = serde_json::from_str(&first).map_err(|e| TraceError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.schema != TRACE_SCHEMA {
            return Err(TraceError::Parse {
                line: 1,
                message: format!("unsupported schema {}", header.schema),
            });
        }
        let mut events = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LineIn = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            if parsed.seq != events.len() {
                return Err(TraceError::Parse {
                    line: i + 2,
                    message: format!("expected seq {}, found {}", events.len(), parsed.seq),
                });
            }
            events.push(TraceEvent {
                time: parsed.time_ms,
                proc: parsed.proc,
                kind: parsed.kind,
            });
        }
        Ok(Trace { header, events })
    }

    pub fn from_jsonl(s: &str) -> Result<Trace, TraceError> {
        Self::read_jsonl(s.as_bytes())
    }
}
