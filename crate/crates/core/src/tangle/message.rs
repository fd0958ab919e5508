//! Messages of the DAG layer.
//!
//! A message approves two earlier messages (its parents), carries one
//! payload envelope, and is sealed by the sender's signature plus a
//! proof of work over the signed bytes. The message id is the work
//! digest itself, so holding a valid id is proof the work happened.

use crate::canonical::{decode_option, encode_option, Canonical, DecodeError, Reader, Writer};
use crate::hash::HashDigest;
use crate::keys::{KeyPair, NodeId, Signature};
use crate::pow::{pow_solve, PowError, PowSolution};
use crate::trade::bundle::Bundle;
use crate::trade::feedback::Feedback;
use crate::trade::initial::InitialMessage;
use crate::weakreq::{WeakReqMessage, WeakReqRequest};

pub type MessageId = HashDigest;

/// What a message is for. Dumb messages exist purely to bind work to a
/// block: the anchor names the chain position the work vouches for,
/// and the payload stays empty.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MessageKind {
    Normal,
    Dumb { assoc_height: u64, assoc_block: HashDigest },
}

impl Canonical for MessageKind {
    fn encode(&self, w: &mut Writer) {
        match self {
            MessageKind::Normal => w.u8(0),
            MessageKind::Dumb { assoc_height, assoc_block } => {
                w.u8(1);
                w.u64(*assoc_height);
                assoc_block.encode(w);
            }
        }
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(MessageKind::Normal),
            1 => Ok(MessageKind::Dumb { assoc_height: r.u64()?, assoc_block: HashDigest::decode(r)? }),
            tag => Err(DecodeError::BadTag { tag, context: "message kind" }),
        }
    }
}

/// Message payloads. Structural checks happen at attach time; the
/// semantic checks for each variant run when the message confirms and
/// the ledger executes it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Envelope {
    /// Opaque bytes. Dumb messages use this with empty content.
    Raw(Vec<u8>),
    /// A plain payment.
    Bundle(Bundle),
    /// Identity onboarding.
    Initial(InitialMessage),
    /// A payment into session escrow, with the parties spelled out so
    /// the ledger can couple later feedback to this trade.
    EscrowLock {
        session: HashDigest,
        buyer: NodeId,
        seller: NodeId,
        mediator: Option<NodeId>,
        bundle: Bundle,
    },
    /// A buyer's rating for a completed session.
    Feedback(Feedback),
    /// A miner anchoring a weak device's request. The first anchor
    /// carries the device's burn bundle; a fee escalation re-anchors
    /// with `burn` empty because the original burn still backs it.
    WeakReqAnchor { burn: Option<Bundle>, request: WeakReqRequest },
    /// A miner recording one served message of an anchored request,
    /// fee bundle included.
    WeakReqServed(WeakReqMessage),
}

impl Envelope {
    /// The payment this payload moves, if any. Conflict tracking keys
    /// off the outputs these bundles spend.
    pub fn bundle(&self) -> Option<&Bundle> {
        match self {
            Envelope::Bundle(b) => Some(b),
            Envelope::EscrowLock { bundle, .. } => Some(bundle),
            Envelope::WeakReqAnchor { burn, .. } => burn.as_ref(),
            Envelope::WeakReqServed(m) => Some(&m.fee_bundle),
            Envelope::Raw(_) | Envelope::Initial(_) | Envelope::Feedback(_) => None,
        }
    }

    pub fn is_empty_raw(&self) -> bool {
        matches!(self, Envelope::Raw(data) if data.is_empty())
    }
}

impl Canonical for Envelope {
    fn encode(&self, w: &mut Writer) {
        match self {
            Envelope::Raw(data) => {
                w.u8(0);
                w.bytes(data);
            }
            Envelope::Bundle(b) => {
                w.u8(1);
                b.encode(w);
            }
            Envelope::Initial(m) => {
                w.u8(2);
                m.encode(w);
            }
            Envelope::EscrowLock { session, buyer, seller, mediator, bundle } => {
                w.u8(3);
                session.encode(w);
                buyer.encode(w);
                seller.encode(w);
                encode_option(w, mediator);
                bundle.encode(w);
            }
            Envelope::Feedback(f) => {
                w.u8(4);
                f.encode(w);
            }
            Envelope::WeakReqAnchor { burn, request } => {
                w.u8(5);
                encode_option(w, burn);
                request.encode(w);
            }
            Envelope::WeakReqServed(m) => {
                w.u8(6);
                m.encode(w);
            }
        }
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(Envelope::Raw(r.bytes()?.to_vec())),
            1 => Ok(Envelope::Bundle(Bundle::decode(r)?)),
            2 => Ok(Envelope::Initial(InitialMessage::decode(r)?)),
            3 => Ok(Envelope::EscrowLock {
                session: HashDigest::decode(r)?,
                buyer: NodeId::decode(r)?,
                seller: NodeId::decode(r)?,
                mediator: decode_option(r)?,
                bundle: Bundle::decode(r)?,
            }),
            4 => Ok(Envelope::Feedback(Feedback::decode(r)?)),
            5 => Ok(Envelope::WeakReqAnchor { burn: decode_option(r)?, request: WeakReqRequest::decode(r)? }),
            6 => Ok(Envelope::WeakReqServed(WeakReqMessage::decode(r)?)),
            tag => Err(DecodeError::BadTag { tag, context: "payload envelope" }),
        }
    }
}

/// One attached unit of the DAG.
///
/// `seq_no` counts the sender's own messages from zero; the graph only
/// accepts the next number in line, which shuts out verbatim replays
/// of anything the sender already published.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TangleMessage {
    pub parents: [MessageId; 2],
    pub sender: NodeId,
    pub seq_no: u64,
    pub kind: MessageKind,
    pub payload: Envelope,
    pub signature: Signature,
    pub pow: PowSolution,
}

impl TangleMessage {
    pub fn body_bytes(
        parents: &[MessageId; 2],
        sender: &NodeId,
        seq_no: u64,
        kind: &MessageKind,
        payload: &Envelope,
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"braid-message");
        parents[0].encode(&mut w);
        parents[1].encode(&mut w);
        sender.encode(&mut w);
        w.u64(seq_no);
        kind.encode(&mut w);
        payload.encode(&mut w);
        w.into_bytes()
    }

    /// Sign the body, then work over body plus signature. The returned
    /// message's id is fixed the moment the work lands.
    pub fn build(
        keys: &KeyPair,
        seq_no: u64,
        parents: [MessageId; 2],
        kind: MessageKind,
        payload: Envelope,
        difficulty_bits: u32,
    ) -> Result<Self, PowError> {
        let sender = keys.node_id();
        let body = Self::body_bytes(&parents, &sender, seq_no, &kind, &payload);
        let signature = keys.sign(&body);
        let mut preimage = body;
        preimage.extend_from_slice(&signature.canonical_bytes());
        let pow = pow_solve(&preimage, difficulty_bits, 0)?;
        Ok(TangleMessage { parents, sender, seq_no, kind, payload, signature, pow })
    }

    /// The work digest doubles as the message id.
    pub fn id(&self) -> MessageId {
        self.pow.digest
    }

    pub fn body(&self) -> Vec<u8> {
        Self::body_bytes(&self.parents, &self.sender, self.seq_no, &self.kind, &self.payload)
    }

    pub fn pow_preimage(&self) -> Vec<u8> {
        let mut preimage = self.body();
        preimage.extend_from_slice(&self.signature.canonical_bytes());
        preimage
    }
}

impl Canonical for TangleMessage {
    fn encode(&self, w: &mut Writer) {
        self.parents[0].encode(w);
        self.parents[1].encode(w);
        self.sender.encode(w);
        w.u64(self.seq_no);
        self.kind.encode(w);
        self.payload.encode(w);
        self.signature.encode(w);
        self.pow.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(TangleMessage {
            parents: [MessageId::decode(r)?, MessageId::decode(r)?],
            sender: NodeId::decode(r)?,
            seq_no: r.u64()?,
            kind: MessageKind::decode(r)?,
            payload: Envelope::decode(r)?,
            signature: Signature::decode(r)?,
            pow: PowSolution::decode(r)?,
        })
    }
}
