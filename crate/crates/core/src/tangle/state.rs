//! The message graph and its weight, confirmation, and conflict rules.
//!
//! Every message carries weight 1 and adds 1 to each ancestor it
//! reaches. A message confirms when its cumulative weight (itself plus
//! distinct descendants) reaches the configured threshold. Stored
//! weights saturate at that threshold: once a message is past
//! confirmation its exact count no longer matters for attachment, so
//! the per-attach update can stop expanding there and stays cheap on
//! long histories. Exact counts are still available on demand for
//! conflict comparison, which must keep discriminating above the cap.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::canonical::Canonical;
use crate::hash::HashDigest;
use crate::keys::NodeId;
use crate::pow::pow_verify;
use crate::trade::bundle::OutputRef;

use super::message::{MessageId, MessageKind, TangleMessage};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TangleParams {
    /// Minimum declared and met work for any message.
    pub message_bits: u32,
    /// Cumulative weight at which a message counts as confirmed. Also
    /// the margin a conflict winner needs before it may execute.
    pub confirmation_weight: u32,
}

impl Default for TangleParams {
    fn default() -> Self {
        TangleParams { message_bits: 8, confirmation_weight: 5 }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AttachError {
    #[error("parent {0} is not in the graph")]
    UnknownParent(MessageId),
    #[error("parents must be two distinct messages")]
    BadParents,
    #[error("work missing, below the floor, or not matching the message")]
    BadPow,
    #[error("signature does not match the sender")]
    BadSignature,
    #[error("payload rejected: {0}")]
    BadPayload(&'static str),
    #[error("sequence number {got} does not extend the sender's message count {expected}")]
    StaleSeqNo { expected: u64, got: u64 },
    #[error("message already attached")]
    DuplicateMessage,
}

/// What one successful attach did to the graph.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AttachReport {
    pub id: MessageId,
    /// Messages whose weight crossed the confirmation threshold during
    /// this attach, in discovery order. Each id appears exactly once
    /// across all reports.
    pub newly_confirmed: Vec<MessageId>,
}

/// Standing of the spenders of one output.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConflictStatus {
    /// (message, exact cumulative weight), heaviest first, ties by id.
    pub contenders: Vec<(MessageId, u64)>,
    /// The strictly heaviest contender at or above the confirmation
    /// threshold, if any. Never latched: a later query can name a
    /// different winner if the graph shifted.
    pub winner: Option<MessageId>,
    /// True when the winner leads the runner-up by at least the
    /// confirmation threshold. Execution waits for this.
    pub decisive: bool,
}

pub struct TangleState {
    params: TangleParams,
    genesis: MessageId,
    messages: BTreeMap<MessageId, TangleMessage>,
    children: BTreeMap<MessageId, Vec<MessageId>>,
    tips: BTreeSet<MessageId>,
    /// Cumulative weight, saturated at `confirmation_weight`.
    capped: BTreeMap<MessageId, u32>,
    confirmed: BTreeSet<MessageId>,
    next_seq: BTreeMap<NodeId, u64>,
    /// Attached messages spending each output, in attach order.
    spenders: BTreeMap<OutputRef, Vec<MessageId>>,
    /// Dumb messages grouped by their (height, block) anchor.
    dumb_index: BTreeMap<(u64, HashDigest), Vec<MessageId>>,
    attach_order: Vec<MessageId>,
}

/// The fixed root id every run starts from.
pub fn genesis_id() -> MessageId {
    HashDigest::compute(b"braid-genesis")
}

impl TangleState {
    pub fn new(params: TangleParams) -> Self {
        let genesis = genesis_id();
        let mut tips = BTreeSet::new();
        tips.insert(genesis);
        TangleState {
            params,
            genesis,
            messages: BTreeMap::new(),
            children: BTreeMap::new(),
            tips,
            capped: BTreeMap::new(),
            confirmed: BTreeSet::new(),
            next_seq: BTreeMap::new(),
            spenders: BTreeMap::new(),
            dumb_index: BTreeMap::new(),
            attach_order: Vec::new(),
        }
    }

    pub fn params(&self) -> &TangleParams {
        &self.params
    }

    pub fn genesis(&self) -> MessageId {
        self.genesis
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn contains(&self, id: &MessageId) -> bool {
        *id == self.genesis || self.messages.contains_key(id)
    }

    pub fn message(&self, id: &MessageId) -> Option<&TangleMessage> {
        self.messages.get(id)
    }

    /// Ids in attach order.
    pub fn attach_order(&self) -> &[MessageId] {
        &self.attach_order
    }

    pub fn tips(&self) -> Vec<MessageId> {
        self.tips.iter().copied().collect()
    }

    pub fn is_confirmed(&self, id: &MessageId) -> bool {
        *id == self.genesis || self.confirmed.contains(id)
    }

    /// Stored weight: min(confirmation threshold, exact weight).
    pub fn capped_weight(&self, id: &MessageId) -> u32 {
        self.capped.get(id).copied().unwrap_or(0)
    }

    /// Exact cumulative weight by walking distinct descendants. Linear
    /// in the subgraph below `id`; meant for conflict comparison, not
    /// for per-attach bookkeeping.
    pub fn cumulative_weight(&self, id: &MessageId) -> u64 {
        if !self.messages.contains_key(id) {
            return 0;
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(*id);
        queue.push_back(*id);
        while let Some(v) = queue.pop_front() {
            if let Some(kids) = self.children.get(&v) {
                for k in kids {
                    if seen.insert(*k) {
                        queue.push_back(*k);
                    }
                }
            }
        }
        seen.len() as u64
    }

    /// Attach one message. Checks run in a fixed order (signature,
    /// work, duplicate, parents, payload shape, sequence number) so
    /// rejection reasons are stable for a given message.
    pub fn attach(&mut self, msg: TangleMessage) -> Result<AttachReport, AttachError> {
        let body = msg.body();
        if !msg.signature.verify(&msg.sender, &body) {
            return Err(AttachError::BadSignature);
        }
        if msg.pow.difficulty_bits < self.params.message_bits {
            return Err(AttachError::BadPow);
        }
        let mut preimage = body;
        preimage.extend_from_slice(&msg.signature.canonical_bytes());
        if !pow_verify(&preimage, &msg.pow) {
            return Err(AttachError::BadPow);
        }

        let id = msg.id();
        if id == self.genesis || self.messages.contains_key(&id) {
            return Err(AttachError::DuplicateMessage);
        }

        let [p0, p1] = msg.parents;
        if p0 == p1 && p0 != self.genesis {
            return Err(AttachError::BadParents);
        }
        for p in [p0, p1] {
            if !self.contains(&p) {
                return Err(AttachError::UnknownParent(p));
            }
        }

        if matches!(msg.kind, MessageKind::Dumb { .. }) && !msg.payload.is_empty_raw() {
            return Err(AttachError::BadPayload("dumb messages carry no payload"));
        }

        let expected = self.next_seq.get(&msg.sender).copied().unwrap_or(0);
        if msg.seq_no != expected {
            return Err(AttachError::StaleSeqNo { expected, got: msg.seq_no });
        }

        // All checks passed; mutate.
        self.next_seq.insert(msg.sender, expected + 1);

        let parents: Vec<MessageId> = if p0 == p1 { vec![p0] } else { vec![p0, p1] };
        for p in &parents {
            self.children.entry(*p).or_default().push(id);
            self.tips.remove(p);
        }
        self.tips.insert(id);

        if let Some(bundle) = msg.payload.bundle() {
            let mut refs: Vec<OutputRef> = bundle.input_refs().to_vec();
            refs.sort();
            refs.dedup();
            for r in refs {
                self.spenders.entry(r).or_default().push(id);
            }
        }

        if let MessageKind::Dumb { assoc_height, assoc_block } = msg.kind {
            self.dumb_index.entry((assoc_height, assoc_block)).or_default().push(id);
        }

        self.messages.insert(id, msg);
        self.attach_order.push(id);

        let cap = self.params.confirmation_weight;
        let mut newly_confirmed = Vec::new();

        self.capped.insert(id, cap.min(1));
        if 1 >= cap {
            self.confirmed.insert(id);
            newly_confirmed.push(id);
        }

        // One unit of weight flows to every ancestor. Visit each at
        // most once; stop expanding through ancestors already at the
        // cap, whose own ancestors are necessarily at the cap too.
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<MessageId> = parents.into_iter().collect();
        while let Some(v) = queue.pop_front() {
            if v == self.genesis || !seen.insert(v) {
                continue;
            }
            let w = self.capped.get(&v).copied().unwrap_or(0);
            if w >= cap {
                continue;
            }
            let w = w + 1;
            self.capped.insert(v, w);
            if w >= cap {
                self.confirmed.insert(v);
                newly_confirmed.push(v);
            }
            if let Some(m) = self.messages.get(&v) {
                for p in m.parents {
                    queue.push_back(p);
                }
            }
        }

        Ok(AttachReport { id, newly_confirmed })
    }

    /// True when more than one attached message spends this output.
    pub fn has_conflict(&self, output: &OutputRef) -> bool {
        self.spenders.get(output).is_some_and(|s| s.len() > 1)
    }

    /// Messages spending this output, attach order.
    pub fn spenders(&self, output: &OutputRef) -> &[MessageId] {
        self.spenders.get(output).map_or(&[], Vec::as_slice)
    }

    /// Compare the spenders of one output by exact cumulative weight.
    pub fn conflict_status(&self, output: &OutputRef) -> ConflictStatus {
        let mut contenders: Vec<(MessageId, u64)> = self
            .spenders(output)
            .iter()
            .map(|id| (*id, self.cumulative_weight(id)))
            .collect();
        contenders.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

        let threshold = u64::from(self.params.confirmation_weight);
        let top = contenders.first().copied();
        let second_weight = contenders.get(1).map_or(0, |c| c.1);

        let winner = match top {
            Some((id, w)) if w >= threshold && w > second_weight => Some(id),
            _ => None,
        };
        let decisive = match (winner, top) {
            (Some(_), Some((_, w))) => w - second_weight >= threshold,
            _ => false,
        };
        ConflictStatus { contenders, winner, decisive }
    }

    /// Pick two attachment points uniformly among current tips.
    /// `pick(n)` must return a value in `0..n`. With a single tip the
    /// root serves as the second parent; at the start both slots are
    /// the root.
    pub fn select_tips(&self, pick: &mut dyn FnMut(u64) -> u64) -> [MessageId; 2] {
        let tips: Vec<MessageId> = self.tips.iter().copied().collect();
        match tips.len() {
            0 => [self.genesis, self.genesis],
            1 => {
                if tips[0] == self.genesis {
                    [self.genesis, self.genesis]
                } else {
                    [tips[0], self.genesis]
                }
            }
            n => {
                let i = pick(n as u64) as usize % n;
                let mut j = pick(n as u64 - 1) as usize % (n - 1);
                if j >= i {
                    j += 1;
                }
                [tips[i], tips[j]]
            }
        }
    }

    /// The sender's next expected sequence number.
    pub fn next_seq(&self, sender: &NodeId) -> u64 {
        self.next_seq.get(sender).copied().unwrap_or(0)
    }

    /// Dumb messages carrying this exact (height, block) anchor, in
    /// attach order.
    pub fn dumbs_anchored(&self, height: u64, block: &HashDigest) -> &[MessageId] {
        self.dumb_index.get(&(height, *block)).map_or(&[], Vec::as_slice)
    }
}
