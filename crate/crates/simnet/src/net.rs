//! Single shared edge between every simulated participant and the
//! ledger node. Reliable broadcast at desk scale degenerates to one
//! canonical node; what matters for the experiments is that every
//! attach goes through the same seeded tip lottery and the same
//! bookkeeping, so runs with one seed are replayable bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use braid_core::chain::{Block, BlockError, InsertReport};
use braid_core::keys::{KeyPair, NodeId};
use braid_core::ledger::LedgerEvent;
use braid_core::node::{Node, NodeParams};
use braid_core::tangle::{AttachError, MessageId, MessageKind, TangleMessage};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;

use crate::rng;

/// Outcome of a successful attach, with the ledger events it caused.
pub struct Attached {
    pub id: MessageId,
    pub events: Vec<LedgerEvent>,
}

/// Per-class traffic counters, keyed by a static label such as
/// "payment" or "dumb".
#[derive(Default)]
pub struct Traffic {
    pub attached: BTreeMap<&'static str, u64>,
    pub confirmed: BTreeMap<&'static str, u64>,
    pub senders: BTreeMap<&'static str, BTreeSet<NodeId>>,
}

pub struct Broadcast {
    node: Node,
    tip_rng: ChaCha12Rng,
    class_of: BTreeMap<MessageId, &'static str>,
    pub traffic: Traffic,
}

impl Broadcast {
    pub fn new(params: NodeParams, seed: u64) -> Self {
        Broadcast {
            node: Node::new(params),
            tip_rng: rng::stream(seed, "tip-selection"),
            class_of: BTreeMap::new(),
            traffic: Traffic::default(),
        }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn endow(
        &mut self,
        grants: &[(NodeId, braid_core::money::Money)],
    ) -> Vec<braid_core::trade::bundle::OutputRef> {
        self.node.endow(grants)
    }

    /// Two attachment points drawn from the current tip set.
    pub fn parents(&mut self) -> [MessageId; 2] {
        let rng = &mut self.tip_rng;
        self.node
            .tangle()
            .select_tips(&mut |n| rng.random_range(0..n))
    }

    /// Build a message for `keys` at its next sequence number and
    /// attach it under the given traffic class.
    pub fn attach(
        &mut self,
        keys: &KeyPair,
        kind: MessageKind,
        payload: braid_core::tangle::Envelope,
        bits: u32,
        class: &'static str,
    ) -> Result<Attached, AttachError> {
        let parents = self.parents();
        self.attach_at(keys, parents, kind, payload, bits, class)
    }

    /// Same as `attach` but with caller-chosen attachment points, for
    /// scenarios that steer weight onto one side of a conflict.
    pub fn attach_at(
        &mut self,
        keys: &KeyPair,
        parents: [MessageId; 2],
        kind: MessageKind,
        payload: braid_core::tangle::Envelope,
        bits: u32,
        class: &'static str,
    ) -> Result<Attached, AttachError> {
        let seq = self.node.tangle().next_seq(&keys.node_id());
        let msg = TangleMessage::build(keys, seq, parents, kind, payload, bits)
            .expect("pow search space is never exhausted at sim difficulty");
        self.attach_prebuilt(msg, class)
    }

    /// Attach an already-built message. Replay actors use this to
    /// push verbatim copies of captured traffic.
    pub fn attach_prebuilt(
        &mut self,
        msg: TangleMessage,
        class: &'static str,
    ) -> Result<Attached, AttachError> {
        let sender = msg.sender;
        let (report, events) = self.node.attach_message(msg)?;
        self.class_of.insert(report.id, class);
        *self.traffic.attached.entry(class).or_default() += 1;
        self.traffic
            .senders
            .entry(class)
            .or_default()
            .insert(sender);
        for id in &report.newly_confirmed {
            if let Some(c) = self.class_of.get(id) {
                *self.traffic.confirmed.entry(c).or_default() += 1;
            }
        }
        Ok(Attached {
            id: report.id,
            events,
        })
    }

    pub fn insert_block(
        &mut self,
        block: Block,
    ) -> Result<(InsertReport, Vec<LedgerEvent>), BlockError> {
        self.node.insert_block(block)
    }

    pub fn is_confirmed(&self, id: &MessageId) -> bool {
        self.node.tangle().is_confirmed(id)
    }

    pub fn snapshot(&self) -> String {
        self.node.snapshot()
    }
}
