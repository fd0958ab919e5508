//! A full node: graph, chain, and executor behind one interface, with
//! an append-only event log.
//!
//! The log captures everything that shaped state, in the order it
//! arrived: endowment grants, attached messages, inserted blocks.
//! Rendering the log and replaying it through a fresh node reproduces
//! the original state digest bit for bit, which is what the snapshot
//! format and the determinism checks lean on.

use thiserror::Error;

use crate::canonical::{Canonical, DecodeError};
use crate::chain::{Block, BlockError, ChainParams, ChainState, InsertReport};
use crate::hash::HashDigest;
use crate::keys::NodeId;
use crate::ledger::{Ledger, LedgerEvent, LedgerParams};
use crate::money::Money;
use crate::tangle::{AttachError, AttachReport, TangleMessage, TangleParams, TangleState};
use crate::trade::bundle::OutputRef;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct NodeParams {
    pub tangle: TangleParams,
    pub chain: ChainParams,
    pub ledger: LedgerParams,
}

enum LogEntry {
    Endow(NodeId, Money),
    Message(TangleMessage),
    Block(Block),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("line {0}: unrecognized record")]
    BadLine(usize),
    #[error("line {0}: malformed payload")]
    BadPayload(usize),
    #[error("line {0}: {1}")]
    Decode(usize, DecodeError),
    #[error("line {0}: {1}")]
    Attach(usize, AttachError),
    #[error("line {0}: {1}")]
    Block(usize, BlockError),
}

pub struct Node {
    params: NodeParams,
    tangle: TangleState,
    chain: ChainState,
    ledger: Ledger,
    log: Vec<LogEntry>,
}

impl Node {
    pub fn new(params: NodeParams) -> Self {
        Node {
            params,
            tangle: TangleState::new(params.tangle),
            chain: ChainState::new(params.chain),
            ledger: Ledger::new(params.ledger),
            log: Vec::new(),
        }
    }

    pub fn params(&self) -> &NodeParams {
        &self.params
    }

    pub fn tangle(&self) -> &TangleState {
        &self.tangle
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn endow(&mut self, grants: &[(NodeId, Money)]) -> Vec<OutputRef> {
        for (node, value) in grants {
            self.log.push(LogEntry::Endow(*node, *value));
        }
        self.ledger.endow(grants)
    }

    /// Admit a message to the graph, then let the executor chase
    /// whatever its confirmations unlocked.
    pub fn attach_message(
        &mut self,
        msg: TangleMessage,
    ) -> Result<(AttachReport, Vec<LedgerEvent>), AttachError> {
        let report = self.tangle.attach(msg.clone())?;
        self.log.push(LogEntry::Message(msg));
        let events = self.ledger.sweep(&self.tangle, &report.newly_confirmed);
        Ok((report, events))
    }

    /// Insert a block, settle coinbase credits against the possibly
    /// new canonical chain, and retry parked messages a credit may
    /// have funded.
    pub fn insert_block(
        &mut self,
        block: Block,
    ) -> Result<(InsertReport, Vec<LedgerEvent>), BlockError> {
        let report = self.chain.validate_and_insert(block.clone(), &self.tangle)?;
        self.log.push(LogEntry::Block(block));
        let mut events = self.ledger.observe_chain(&self.chain);
        events.extend(self.ledger.sweep(&self.tangle, &[]));
        Ok((report, events))
    }

    /// Digest over everything downstream of the log: executed ledger
    /// state plus graph and chain order. Two nodes fed the same events
    /// agree on this or they do not agree at all.
    pub fn state_digest(&self) -> HashDigest {
        let mut w = crate::canonical::Writer::new();
        w.raw(b"braid-node-state");
        self.ledger.state_digest().encode(&mut w);
        let order = self.tangle.attach_order();
        w.u32(order.len() as u32);
        for id in order {
            id.encode(&mut w);
        }
        let blocks = self.chain.insert_order();
        w.u32(blocks.len() as u32);
        for id in blocks {
            id.encode(&mut w);
        }
        self.chain.head().encode(&mut w);
        HashDigest::compute(&w.into_bytes())
    }

    /// The event log as text: one record per line, `E node amount` for
    /// grants, `M hex` for messages, `B hex` for blocks.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for entry in &self.log {
            match entry {
                LogEntry::Endow(node, value) => {
                    out.push_str(&format!("E {} {}\n", node.to_hex(), value));
                }
                LogEntry::Message(msg) => {
                    out.push_str(&format!("M {}\n", hex::encode(msg.canonical_bytes())));
                }
                LogEntry::Block(block) => {
                    out.push_str(&format!("B {}\n", hex::encode(block.canonical_bytes())));
                }
            }
        }
        out
    }

    /// Rebuild a node by feeding a snapshot through the same paths the
    /// original events took.
    pub fn replay(params: NodeParams, snapshot: &str) -> Result<Node, ReplayError> {
        let mut node = Node::new(params);
        for (i, line) in snapshot.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once(' ') {
                Some(("E", rest)) => {
                    let (node_hex, amount) =
                        rest.split_once(' ').ok_or(ReplayError::BadPayload(n))?;
                    let digest =
                        HashDigest::from_hex(node_hex).ok_or(ReplayError::BadPayload(n))?;
                    let value: u64 = amount.parse().map_err(|_| ReplayError::BadPayload(n))?;
                    node.endow(&[(NodeId(digest), Money::new(value))]);
                }
                Some(("M", hex_bytes)) => {
                    let raw = hex::decode(hex_bytes).map_err(|_| ReplayError::BadPayload(n))?;
                    let msg = TangleMessage::from_canonical_bytes(&raw)
                        .map_err(|e| ReplayError::Decode(n, e))?;
                    node.attach_message(msg).map_err(|e| ReplayError::Attach(n, e))?;
                }
                Some(("B", hex_bytes)) => {
                    let raw = hex::decode(hex_bytes).map_err(|_| ReplayError::BadPayload(n))?;
                    let block = Block::from_canonical_bytes(&raw)
                        .map_err(|e| ReplayError::Decode(n, e))?;
                    node.insert_block(block).map_err(|e| ReplayError::Block(n, e))?;
                }
                _ => return Err(ReplayError::BadLine(n)),
            }
        }
        Ok(node)
    }
}
