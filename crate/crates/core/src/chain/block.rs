//! Block structure and identity.
//!
//! A block names its parent, its height, its miner, and the dumb
//! messages whose work it claims. The id is the work digest over the
//! signed header, so the id pins every field, and in header-work mode
//! the same digest is what the miner grinds.

use crate::canonical::{decode_list, encode_list, Canonical, DecodeError, Reader, Writer};
use crate::hash::HashDigest;
use crate::keys::{KeyPair, NodeId, Signature};
use crate::pow::{pow_solve, PowError, PowSolution};
use crate::tangle::message::MessageId;

pub type BlockId = HashDigest;

/// The anchor heights whose dumb messages a block at `height` may
/// claim. Two heights of slack lets work minted while a block was
/// being assembled still count for the next few blocks, without
/// reaching arbitrarily far back.
pub fn window_for(height: u64) -> std::ops::RangeInclusive<u64> {
    if height <= 2 {
        0..=0
    } else {
        height.saturating_sub(4)..=height - 2
    }
}

/// The anchor height a miner stamps on fresh dumbs while working at
/// `height`: the top of the window, so the work stays claimable for
/// the longest stretch of follow-up blocks.
pub fn fresh_anchor_height(height: u64) -> u64 {
    *window_for(height).end()
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    pub parent: BlockId,
    pub height: u64,
    pub miner: NodeId,
    pub dumb_refs: Vec<MessageId>,
    pub signature: Signature,
    pub pow: PowSolution,
}

impl Block {
    pub fn body_bytes(parent: &BlockId, height: u64, miner: &NodeId, dumb_refs: &[MessageId]) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"braid-block");
        parent.encode(&mut w);
        w.u64(height);
        miner.encode(&mut w);
        encode_list(&mut w, dumb_refs);
        w.into_bytes()
    }

    /// Sign and seal a block, grinding the header to `header_bits`.
    /// Dumb-work blocks pass 0 and get their id in one hash.
    pub fn build(
        keys: &KeyPair,
        parent: BlockId,
        height: u64,
        dumb_refs: Vec<MessageId>,
        header_bits: u32,
    ) -> Result<Self, PowError> {
        let prepared = PreparedBlock::new(keys, parent, height, dumb_refs);
        let pow = pow_solve(prepared.preimage(), header_bits, 0)?;
        Ok(prepared.into_block(pow))
    }

    pub fn id(&self) -> BlockId {
        self.pow.digest
    }

    pub fn body(&self) -> Vec<u8> {
        Self::body_bytes(&self.parent, self.height, &self.miner, &self.dumb_refs)
    }

    pub fn pow_preimage(&self) -> Vec<u8> {
        let mut preimage = self.body();
        preimage.extend_from_slice(&self.signature.canonical_bytes());
        preimage
    }
}

impl Canonical for Block {
    fn encode(&self, w: &mut Writer) {
        self.parent.encode(w);
        w.u64(self.height);
        self.miner.encode(w);
        encode_list(w, &self.dumb_refs);
        self.signature.encode(w);
        self.pow.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(Block {
            parent: BlockId::decode(r)?,
            height: r.u64()?,
            miner: NodeId::decode(r)?,
            dumb_refs: decode_list(r)?,
            signature: Signature::decode(r)?,
            pow: PowSolution::decode(r)?,
        })
    }
}

/// A signed header waiting for its work, for miners that grind across
/// scheduling slices instead of blocking.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PreparedBlock {
    parent: BlockId,
    height: u64,
    miner: NodeId,
    dumb_refs: Vec<MessageId>,
    signature: Signature,
    preimage: Vec<u8>,
}

impl PreparedBlock {
    pub fn new(keys: &KeyPair, parent: BlockId, height: u64, dumb_refs: Vec<MessageId>) -> Self {
        let miner = keys.node_id();
        let body = Block::body_bytes(&parent, height, &miner, &dumb_refs);
        let signature = keys.sign(&body);
        let mut preimage = body;
        preimage.extend_from_slice(&signature.canonical_bytes());
        PreparedBlock { parent, height, miner, dumb_refs, signature, preimage }
    }

    /// Bytes the work must cover.
    pub fn preimage(&self) -> &[u8] {
        &self.preimage
    }

    pub fn into_block(self, pow: PowSolution) -> Block {
        Block {
            parent: self.parent,
            height: self.height,
            miner: self.miner,
            dumb_refs: self.dumb_refs,
            signature: self.signature,
            pow,
        }
    }
}
