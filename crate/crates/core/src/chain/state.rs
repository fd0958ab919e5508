//! Chain storage, validation, and fork choice.
//!
//! Two fork rules live here. `HeaderWork` is the classic rule: blocks
//! carry their own ground header and the chain with the most header
//! work (greatest height at fixed difficulty) wins, first seen kept on
//! ties. `DumbWork` ranks forks by the work bound into referenced dumb
//! messages instead: each block must claim at least `dumb_factor`
//! eligible dumbs mined at a relaxed target, and the heaviest
//! accumulated dumb work wins, ties broken toward the lower block id.
//! Under the relaxation of log2(dumb_factor) bits, the expected work
//! for one block's worth of dumbs equals one full-difficulty header,
//! so the two rules secure a block with the same expected effort.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::hash::HashDigest;
use crate::money::Money;
use crate::pow::pow_verify;
use crate::tangle::message::{MessageId, MessageKind};
use crate::tangle::state::TangleState;

use super::block::{window_for, Block, BlockId};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ForkRule {
    /// Ground headers, most height wins, first seen kept on ties.
    HeaderWork,
    /// Dumb-message work wins, ties toward the lower block id.
    DumbWork,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ChainParams {
    /// Full block difficulty d.
    pub block_bits: u32,
    /// F: how many dumbs a dumb-work block must claim. The relaxed
    /// per-dumb target is d - log2(F). Must be a power of two.
    pub dumb_factor: u32,
    pub fork_rule: ForkRule,
    pub coinbase_value: Money,
    /// Depth at which a canonical block's coinbase pays out.
    pub coinbase_maturity: u64,
}

impl ChainParams {
    /// Per-dumb difficulty: d - log2(F).
    pub fn relaxed_bits(&self) -> u32 {
        debug_assert!(self.dumb_factor.is_power_of_two());
        self.block_bits.saturating_sub(self.dumb_factor.trailing_zeros())
    }

    /// Dumb references a block must carry under this rule.
    pub fn required_dumbs(&self) -> usize {
        match self.fork_rule {
            ForkRule::HeaderWork => 0,
            ForkRule::DumbWork => self.dumb_factor as usize,
        }
    }

    /// Header grinding target under this rule.
    pub fn header_bits(&self) -> u32 {
        match self.fork_rule {
            ForkRule::HeaderWork => self.block_bits,
            ForkRule::DumbWork => 0,
        }
    }
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            block_bits: 12,
            dumb_factor: 4,
            fork_rule: ForkRule::DumbWork,
            coinbase_value: Money::new(50),
            coinbase_maturity: 4,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BlockError {
    #[error("parent {0} is not in the chain")]
    UnknownParent(BlockId),
    #[error("height {got} where the parent implies {expected}")]
    WrongHeight { expected: u64, got: u64 },
    #[error("block signature does not match the miner")]
    BadSignature,
    #[error("header work missing or below target")]
    BadPow,
    #[error("block already known")]
    DuplicateBlock,
    #[error("{got} dumb references, need at least {need}")]
    NotEnoughDumbs { got: usize, need: usize },
    #[error("dumb reference {0} listed twice")]
    DuplicateDumbRef(MessageId),
    #[error("dumb reference {0} is not an attached message")]
    UnknownDumb(MessageId),
    #[error("referenced message {0} is not a dumb message")]
    NotADumb(MessageId),
    #[error("dumb {dumb} is anchored at height {anchor}, outside {lo}..={hi}")]
    AnchorOutsideWindow { dumb: MessageId, anchor: u64, lo: u64, hi: u64 },
    #[error("dumb {0} is anchored to a block off this fork")]
    AnchorOffFork(MessageId),
    #[error("dumb {0} was already claimed by a recent ancestor")]
    DumbAlreadyUsed(MessageId),
    #[error("dumb {0} declares less work than the relaxed target")]
    DumbBelowRelaxedTarget(MessageId),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct InsertReport {
    pub id: BlockId,
    pub head_moved: bool,
    pub head: BlockId,
}

/// The fixed root every chain starts from.
pub fn chain_genesis_id() -> BlockId {
    HashDigest::compute(b"braid-chain-genesis")
}

pub struct ChainState {
    params: ChainParams,
    genesis: BlockId,
    blocks: BTreeMap<BlockId, Block>,
    heights: BTreeMap<BlockId, u64>,
    /// Sum over the block and its ancestors of 2^bits per dumb ref.
    cum_dumb_work: BTreeMap<BlockId, u128>,
    head: BlockId,
    insert_order: Vec<BlockId>,
}

impl ChainState {
    pub fn new(params: ChainParams) -> Self {
        let genesis = chain_genesis_id();
        let mut heights = BTreeMap::new();
        heights.insert(genesis, 0);
        let mut cum = BTreeMap::new();
        cum.insert(genesis, 0);
        ChainState {
            params,
            genesis,
            blocks: BTreeMap::new(),
            heights,
            cum_dumb_work: cum,
            head: genesis,
            insert_order: Vec::new(),
        }
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn genesis(&self) -> BlockId {
        self.genesis
    }

    pub fn head(&self) -> BlockId {
        self.head
    }

    pub fn head_height(&self) -> u64 {
        self.heights[&self.head]
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        *id == self.genesis || self.blocks.contains_key(id)
    }

    pub fn block(&self, id: &BlockId) -> Option<&Block> {
        self.blocks.get(id)
    }

    pub fn height_of(&self, id: &BlockId) -> Option<u64> {
        self.heights.get(id).copied()
    }

    pub fn cumulative_dumb_work(&self, id: &BlockId) -> Option<u128> {
        self.cum_dumb_work.get(id).copied()
    }

    pub fn insert_order(&self) -> &[BlockId] {
        &self.insert_order
    }

    /// Walk up from `id` to the ancestor at `height`.
    pub fn ancestor_at(&self, id: &BlockId, height: u64) -> Option<BlockId> {
        let mut cur = *id;
        let mut h = self.height_of(&cur)?;
        if height > h {
            return None;
        }
        while h > height {
            cur = self.blocks.get(&cur)?.parent;
            h -= 1;
        }
        Some(cur)
    }

    /// Genesis to `id`, inclusive.
    pub fn chain_to(&self, id: &BlockId) -> Vec<BlockId> {
        let mut chain = Vec::new();
        let mut cur = *id;
        loop {
            chain.push(cur);
            if cur == self.genesis {
                break;
            }
            match self.blocks.get(&cur) {
                Some(b) => cur = b.parent,
                None => break,
            }
        }
        chain.reverse();
        chain
    }

    /// Genesis to the current head.
    pub fn canonical_chain(&self) -> Vec<BlockId> {
        self.chain_to(&self.head)
    }

    /// Depth of `id` below the head if it sits on the canonical chain.
    pub fn canonical_depth(&self, id: &BlockId) -> Option<u64> {
        let h = self.height_of(id)?;
        if self.ancestor_at(&self.head, h) == Some(*id) {
            Some(self.head_height() - h)
        } else {
            None
        }
    }

    /// Dumbs a block extending `parent` could claim right now: inside
    /// the window, anchored to this fork, unclaimed by recent
    /// ancestors, and carrying at least the relaxed work. Sorted by id.
    pub fn eligible_dumbs(&self, parent: &BlockId, tangle: &TangleState) -> Vec<MessageId> {
        let Some(parent_height) = self.height_of(parent) else {
            return Vec::new();
        };
        let height = parent_height + 1;
        let recent = self.recent_claims(parent);
        let relaxed = self.params.relaxed_bits();

        let mut found = BTreeSet::new();
        for anchor_height in window_for(height) {
            let Some(anchor_block) = self.ancestor_at(parent, anchor_height) else {
                continue;
            };
            for id in tangle.dumbs_anchored(anchor_height, &anchor_block) {
                if recent.contains(id) {
                    continue;
                }
                let Some(msg) = tangle.message(id) else { continue };
                if msg.pow.difficulty_bits >= relaxed {
                    found.insert(*id);
                }
            }
        }
        found.into_iter().collect()
    }

    /// Dumb refs claimed by the last four ancestors of `parent`,
    /// `parent` included. The window spans three heights, so no block
    /// further up could have claimed a dumb still claimable now.
    fn recent_claims(&self, parent: &BlockId) -> BTreeSet<MessageId> {
        let mut claimed = BTreeSet::new();
        let mut cur = *parent;
        for _ in 0..4 {
            let Some(b) = self.blocks.get(&cur) else { break };
            claimed.extend(b.dumb_refs.iter().copied());
            cur = b.parent;
        }
        claimed
    }

    /// Full validation and insertion. On success the head moves if the
    /// fork rule prefers the new block's chain.
    pub fn validate_and_insert(
        &mut self,
        block: Block,
        tangle: &TangleState,
    ) -> Result<InsertReport, BlockError> {
        let id = block.id();
        if self.contains(&id) {
            return Err(BlockError::DuplicateBlock);
        }
        let Some(parent_height) = self.height_of(&block.parent) else {
            return Err(BlockError::UnknownParent(block.parent));
        };
        let expected = parent_height + 1;
        if block.height != expected {
            return Err(BlockError::WrongHeight { expected, got: block.height });
        }
        if !block.signature.verify(&block.miner, &block.body()) {
            return Err(BlockError::BadSignature);
        }
        if block.pow.difficulty_bits < self.params.header_bits()
            || !pow_verify(&block.pow_preimage(), &block.pow)
        {
            return Err(BlockError::BadPow);
        }

        let need = self.params.required_dumbs();
        if block.dumb_refs.len() < need {
            return Err(BlockError::NotEnoughDumbs { got: block.dumb_refs.len(), need });
        }
        self.check_dumb_refs(&block, tangle)?;

        let work: u128 = block
            .dumb_refs
            .iter()
            .map(|r| {
                let bits = tangle.message(r).map_or(0, |m| m.pow.difficulty_bits);
                1u128 << bits.min(126)
            })
            .sum();
        let cum = self.cum_dumb_work[&block.parent] + work;

        self.heights.insert(id, block.height);
        self.cum_dumb_work.insert(id, cum);
        self.blocks.insert(id, block);
        self.insert_order.push(id);

        let head_moved = self.prefer(&id);
        if head_moved {
            self.head = id;
        }
        Ok(InsertReport { id, head_moved, head: self.head })
    }

    /// Every dumb ref must exist, be dumb, sit in the window, anchor
    /// to this fork, be unclaimed nearby, and meet the relaxed target.
    fn check_dumb_refs(&self, block: &Block, tangle: &TangleState) -> Result<(), BlockError> {
        if block.dumb_refs.is_empty() {
            return Ok(());
        }
        let mut seen = BTreeSet::new();
        for r in &block.dumb_refs {
            if !seen.insert(*r) {
                return Err(BlockError::DuplicateDumbRef(*r));
            }
        }
        let window = window_for(block.height);
        let recent = self.recent_claims(&block.parent);
        let relaxed = self.params.relaxed_bits();

        for r in &block.dumb_refs {
            let Some(msg) = tangle.message(r) else {
                return Err(BlockError::UnknownDumb(*r));
            };
            let MessageKind::Dumb { assoc_height, assoc_block } = msg.kind else {
                return Err(BlockError::NotADumb(*r));
            };
            if !window.contains(&assoc_height) {
                return Err(BlockError::AnchorOutsideWindow {
                    dumb: *r,
                    anchor: assoc_height,
                    lo: *window.start(),
                    hi: *window.end(),
                });
            }
            if self.ancestor_at(&block.parent, assoc_height) != Some(assoc_block) {
                return Err(BlockError::AnchorOffFork(*r));
            }
            if recent.contains(r) {
                return Err(BlockError::DumbAlreadyUsed(*r));
            }
            if msg.pow.difficulty_bits < relaxed {
                return Err(BlockError::DumbBelowRelaxedTarget(*r));
            }
        }
        Ok(())
    }

    /// Does the fork rule move the head to `id`?
    fn prefer(&self, id: &BlockId) -> bool {
        if *id == self.head {
            return false;
        }
        match self.params.fork_rule {
            ForkRule::HeaderWork => self.heights[id] > self.heights[&self.head],
            ForkRule::DumbWork => {
                let new = self.cum_dumb_work[id];
                let cur = self.cum_dumb_work[&self.head];
                new > cur || (new == cur && self.heights[id] > self.heights[&self.head])
                    || (new == cur && self.heights[id] == self.heights[&self.head] && *id < self.head)
            }
        }
    }
}
