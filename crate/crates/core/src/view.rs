//! Read-only view of confirmed ledger state, consumed by bundle, burn,
//! block and feedback validation. The full ledger implements it; tests
//! use the in-memory map variant.

use std::collections::{BTreeMap, BTreeSet};

use crate::hash::HashDigest;
use crate::keys::NodeId;
use crate::money::Money;
use crate::trade::bundle::{OutputRef, TxOutput};

/// Roles bound to a trade session's escrow.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EscrowParties {
    pub buyer: NodeId,
    pub seller: NodeId,
    pub mediator: Option<NodeId>,
}

/// How a resolved escrow was disbursed. Feedback is permitted only
/// after a buyer release or a mediator decision; a buyer clawing back
/// its own lock (the timeout path) is not a release.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EscrowOutcome {
    pub to_seller: bool,
    pub by_mediator: bool,
}

impl EscrowOutcome {
    /// True when the disbursement counts as a trade release.
    pub fn is_release(&self) -> bool {
        self.to_seller || self.by_mediator
    }
}

/// Confirmed escrow lock for one trade session.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EscrowRecord {
    pub parties: EscrowParties,
    /// Id of the bundle that locked the funds.
    pub lock_bundle: HashDigest,
    pub amount: Money,
    /// None while the escrow output is still unspent.
    pub outcome: Option<EscrowOutcome>,
}

/// Read access to confirmed ledger facts.
pub trait LedgerView {
    /// The output, if it was produced by a confirmed bundle or a
    /// credited coinbase. Spent outputs still resolve.
    fn output(&self, r: &OutputRef) -> Option<TxOutput>;

    /// True once a confirmed spend consumed the output.
    fn is_spent(&self, r: &OutputRef) -> bool;

    /// True once the burn output has backed an onboarding record or a
    /// service request. Burns are single-use cost signals.
    fn burn_used(&self, r: &OutputRef) -> bool;

    /// Who funded a confirmed burn output. A burn proves cost only for
    /// the node that paid for it.
    fn burn_owner(&self, r: &OutputRef) -> Option<NodeId>;

    /// Confirmed escrow lock for a trade session.
    fn escrow(&self, session: &HashDigest) -> Option<EscrowRecord>;

    /// True iff a confirmed message carries the bundle.
    fn bundle_confirmed(&self, bundle_id: &HashDigest) -> bool;

    /// True iff the identity completed onboarding.
    fn identity_registered(&self, id: &NodeId) -> bool;

    /// True once a feedback record for the session is confirmed.
    fn feedback_recorded(&self, session: &HashDigest) -> bool;
}

/// Map-backed view for unit tests.
#[derive(Default)]
pub struct MemoryLedgerView {
    outputs: BTreeMap<OutputRef, TxOutput>,
    spent: BTreeSet<OutputRef>,
    used_burns: BTreeSet<OutputRef>,
    burn_owners: BTreeMap<OutputRef, NodeId>,
    escrows: BTreeMap<HashDigest, EscrowRecord>,
    confirmed_bundles: BTreeSet<HashDigest>,
    identities: BTreeSet<NodeId>,
    feedback: BTreeSet<HashDigest>,
}

impl MemoryLedgerView {
    pub fn add_output(&mut self, r: OutputRef, out: TxOutput) {
        self.outputs.insert(r, out);
    }

    pub fn mark_spent(&mut self, r: OutputRef) {
        self.spent.insert(r);
    }

    pub fn mark_burn_used(&mut self, r: OutputRef) {
        self.used_burns.insert(r);
    }

    pub fn add_burn(&mut self, r: OutputRef, owner: NodeId, amount: Money) {
        self.outputs.insert(r, TxOutput { address: crate::trade::bundle::Address::Burn, value: amount });
        self.burn_owners.insert(r, owner);
    }

    pub fn add_escrow(&mut self, session: HashDigest, record: EscrowRecord) {
        self.escrows.insert(session, record);
    }

    pub fn add_confirmed_bundle(&mut self, id: HashDigest) {
        self.confirmed_bundles.insert(id);
    }

    pub fn add_identity(&mut self, id: NodeId) {
        self.identities.insert(id);
    }

    pub fn add_feedback(&mut self, session: HashDigest) {
        self.feedback.insert(session);
    }
}

impl LedgerView for MemoryLedgerView {
    fn output(&self, r: &OutputRef) -> Option<TxOutput> {
        self.outputs.get(r).copied()
    }

    fn is_spent(&self, r: &OutputRef) -> bool {
        self.spent.contains(r)
    }

    fn burn_used(&self, r: &OutputRef) -> bool {
        self.used_burns.contains(r)
    }

    fn burn_owner(&self, r: &OutputRef) -> Option<NodeId> {
        self.burn_owners.get(r).copied()
    }

    fn escrow(&self, session: &HashDigest) -> Option<EscrowRecord> {
        self.escrows.get(session).copied()
    }

    fn bundle_confirmed(&self, bundle_id: &HashDigest) -> bool {
        self.confirmed_bundles.contains(bundle_id)
    }

    fn identity_registered(&self, id: &NodeId) -> bool {
        self.identities.contains(id)
    }

    fn feedback_recorded(&self, session: &HashDigest) -> bool {
        self.feedback.contains(session)
    }
}
