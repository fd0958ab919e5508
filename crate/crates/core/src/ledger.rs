//! Executes confirmed messages into ledger state.
//!
//! Attachment admits a message to the graph; execution is what makes it
//! count. A message executes when it confirms, its payload passes the
//! semantic checks against executed state, and every payment it moves
//! has decisively won any contest over its inputs. Messages that fail a
//! check that can still heal (an input not executed yet, a conflict not
//! yet decided, a trade not yet released) wait in a retry queue;
//! messages that fail a permanent check are rejected with the reason
//! kept. Execution of one message is atomic: either all of its effects
//! land or none do.
//!
//! Execution order is a pure function of attach order, so two nodes
//! feeding the same events through a ledger end up byte-identical.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::canonical::{Canonical, Writer};
use crate::chain::{BlockId, ChainState};
use crate::hash::HashDigest;
use crate::keys::NodeId;
use crate::money::Money;
use crate::tangle::{Envelope, MessageId, TangleState};
use crate::trade::bundle::{validate_bundle, Address, Bundle, BundleError, OutputRef, TxOutput};
use crate::trade::feedback::{validate_feedback, FeedbackError, TradeRecord};
use crate::trade::initial::{validate_initial, InitialError, OnboardingParams};
use crate::view::{EscrowOutcome, EscrowParties, EscrowRecord, LedgerView};
use crate::weakreq::{
    validate_request, validate_weakreq_message, PobError, RequestError, ServeError, WeakReqParams,
};

/// Semantic floors the executor enforces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct LedgerParams {
    pub onboarding: OnboardingParams,
    pub weakreq: WeakReqParams,
}

/// What a burn output currently backs. A burn bound to a request stays
/// replaceable until the request is first served; after that, or once
/// it backs an onboarding, it is spent for good.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum BurnClaim {
    Onboarding(NodeId),
    Request { request_id: HashDigest, served_any: bool },
}

/// A registered onboarded identity.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IdentityRecord {
    pub service_descriptor: String,
    pub content_pointer: String,
}

/// An anchored request and its service progress.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RequestRecord {
    pub request: crate::weakreq::WeakReqRequest,
    /// The miner whose anchor message registered the request.
    pub miner: NodeId,
    pub served: BTreeSet<u32>,
    pub fees_collected: Money,
    pub superseded: bool,
}

/// A credited coinbase left the canonical chain after being spent. The
/// credit cannot be clawed back, so the books keep it minted and the
/// event is recorded for the operator.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Violation {
    SpentCoinbaseReorged(BlockId),
}

/// Permanent reasons a confirmed message never executes.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("payment rejected: {0}")]
    Bundle(#[from] BundleError),
    #[error("onboarding rejected: {0}")]
    Onboarding(#[from] InitialError),
    #[error("feedback rejected: {0}")]
    Feedback(#[from] FeedbackError),
    #[error("request rejected: {0}")]
    Request(#[from] RequestError),
    #[error("served message rejected: {0}")]
    Serve(#[from] ServeError),
    #[error("a conflicting spend of {0:?} won decisively")]
    ConflictLost(OutputRef),
    #[error("session already holds locked funds")]
    EscrowRelock,
    #[error("escrow lock rejected: {0}")]
    EscrowShape(&'static str),
    #[error("burn already pledged to a live request or onboarding")]
    BurnPledged,
    #[error("request does not raise the fee of the one it replaces")]
    NotSuperseding,
    #[error("request was already anchored")]
    DuplicateRequest,
    #[error("request was superseded by a higher fee")]
    RequestSuperseded,
    #[error("message is not in the graph")]
    UnknownMessage,
}

/// Reasons a confirmed message is waiting rather than dead. Parked
/// messages are retried after every execution that changes state.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParkReason {
    #[error("input {0:?} has not executed yet")]
    MissingInput(OutputRef),
    #[error("spend of {0:?} is contested and not yet decisive")]
    ConflictUndecided(OutputRef),
    #[error("burn {0:?} has not executed yet")]
    UnknownBurn(OutputRef),
    #[error("trade {0} has no released payment yet")]
    TradeUnsettled(HashDigest),
    #[error("request {0} has not been anchored yet")]
    RequestUnanchored(HashDigest),
}

/// One observable ledger effect, in the order it happened.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum LedgerEvent {
    Executed(MessageId),
    Rejected(MessageId, ExecError),
    CoinbaseCredited(BlockId, NodeId, Money),
    CoinbaseRevoked(BlockId),
    CoinbaseViolation(BlockId),
}

/// Supply cross-check: everything minted is either circulating,
/// provably destroyed at the burn address, or paid away as implicit
/// fees (which no one can spend either).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct AuditReport {
    pub minted: Money,
    pub circulating: Money,
    pub burned_outputs: Money,
    pub fees: Money,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("minted {minted} but accounted {circulating} + {burned_outputs} + {fees}")]
    SupplyMismatch { minted: Money, circulating: Money, burned_outputs: Money, fees: Money },
}

enum Step {
    Executed,
    Parked(ParkReason),
    Rejected(ExecError),
}

pub struct Ledger {
    params: LedgerParams,
    outputs: BTreeMap<OutputRef, TxOutput>,
    spent: BTreeSet<OutputRef>,
    burn_owners: BTreeMap<OutputRef, NodeId>,
    burn_claims: BTreeMap<OutputRef, BurnClaim>,
    /// Which session each escrow-addressed output locks for.
    escrow_outputs: BTreeMap<OutputRef, HashDigest>,
    escrows: BTreeMap<HashDigest, EscrowRecord>,
    identities: BTreeMap<NodeId, IdentityRecord>,
    feedback: BTreeMap<HashDigest, TradeRecord>,
    requests: BTreeMap<HashDigest, RequestRecord>,
    confirmed_bundles: BTreeSet<HashDigest>,
    executed: BTreeSet<MessageId>,
    exec_order: Vec<MessageId>,
    rejected: Vec<(MessageId, ExecError)>,
    queue: Vec<(MessageId, Option<ParkReason>)>,
    coinbase_credits: BTreeMap<BlockId, Money>,
    violated: BTreeSet<BlockId>,
    violations: Vec<Violation>,
    minted: Money,
    fees: Money,
    endow_index: u32,
}

/// Pseudo-txid under which endowment grants appear as outputs.
pub fn endowment_txid() -> HashDigest {
    HashDigest::compute(b"braid-endowment")
}

impl Ledger {
    pub fn new(params: LedgerParams) -> Self {
        Ledger {
            params,
            outputs: BTreeMap::new(),
            spent: BTreeSet::new(),
            burn_owners: BTreeMap::new(),
            burn_claims: BTreeMap::new(),
            escrow_outputs: BTreeMap::new(),
            escrows: BTreeMap::new(),
            identities: BTreeMap::new(),
            feedback: BTreeMap::new(),
            requests: BTreeMap::new(),
            confirmed_bundles: BTreeSet::new(),
            executed: BTreeSet::new(),
            exec_order: Vec::new(),
            rejected: Vec::new(),
            queue: Vec::new(),
            coinbase_credits: BTreeMap::new(),
            violated: BTreeSet::new(),
            violations: Vec::new(),
            minted: Money::ZERO,
            fees: Money::ZERO,
            endow_index: 0,
        }
    }

    pub fn params(&self) -> &LedgerParams {
        &self.params
    }

    /// Mint the starting supply. Each grant becomes one spendable
    /// output under the endowment txid.
    pub fn endow(&mut self, grants: &[(NodeId, Money)]) -> Vec<OutputRef> {
        let txid = endowment_txid();
        grants
            .iter()
            .map(|(node, value)| {
                let r = OutputRef { txid, index: self.endow_index };
                self.endow_index += 1;
                self.outputs.insert(r, TxOutput { address: Address::Node(*node), value: *value });
                self.minted = self.minted.checked_add(*value).expect("endowment overflows supply");
                r
            })
            .collect()
    }

    /// Feed newly confirmed messages in and drive the retry queue to a
    /// fixpoint. Call with an empty slice to retry after external state
    /// changes (a coinbase credit, say).
    pub fn sweep(&mut self, tangle: &TangleState, newly_confirmed: &[MessageId]) -> Vec<LedgerEvent> {
        for id in newly_confirmed {
            self.queue.push((*id, None));
        }
        let mut events = Vec::new();
        loop {
            let mut progressed = false;
            let mut i = 0;
            while i < self.queue.len() {
                let id = self.queue[i].0;
                match self.step(tangle, id) {
                    Step::Executed => {
                        self.queue.remove(i);
                        events.push(LedgerEvent::Executed(id));
                        progressed = true;
                    }
                    Step::Rejected(e) => {
                        self.queue.remove(i);
                        events.push(LedgerEvent::Rejected(id, e.clone()));
                        self.rejected.push((id, e));
                        progressed = true;
                    }
                    Step::Parked(reason) => {
                        self.queue[i].1 = Some(reason);
                        i += 1;
                    }
                }
            }
            if !progressed {
                break;
            }
        }
        events
    }

    /// Attempt one message. Validation happens against executed state
    /// only; nothing is written unless every check passes.
    fn step(&mut self, tangle: &TangleState, id: MessageId) -> Step {
        let Some(msg) = tangle.message(&id) else {
            return Step::Rejected(ExecError::UnknownMessage);
        };
        let carrier = msg.sender;

        // Any moved payment must have decisively won every contest over
        // its inputs before its effects become permanent.
        if let Some(bundle) = msg.payload.bundle() {
            let mut refs = bundle.input_refs();
            refs.sort();
            refs.dedup();
            for r in &refs {
                if !tangle.has_conflict(r) {
                    continue;
                }
                let status = tangle.conflict_status(r);
                match (status.winner, status.decisive) {
                    (Some(w), true) if w == id => {}
                    (Some(_), true) => return Step::Rejected(ExecError::ConflictLost(*r)),
                    _ => return Step::Parked(ParkReason::ConflictUndecided(*r)),
                }
            }
        }

        match &msg.payload {
            Envelope::Raw(_) => {}
            Envelope::Bundle(bundle) => {
                if let Err(stop) = self.bundle_gate(bundle) {
                    return stop;
                }
                self.apply_bundle(bundle);
            }
            Envelope::EscrowLock { session, buyer, seller, mediator, bundle } => {
                if self.escrows.contains_key(session) {
                    return Step::Rejected(ExecError::EscrowRelock);
                }
                if let Err(stop) = self.bundle_gate(bundle) {
                    return stop;
                }
                let mut amount = None;
                for out in &bundle.outputs {
                    if out.address == Address::Escrow(*session) {
                        if amount.is_some() {
                            return Step::Rejected(ExecError::EscrowShape(
                                "lock pays the session's escrow more than once",
                            ));
                        }
                        amount = Some(out.value);
                    }
                }
                let Some(amount) = amount else {
                    return Step::Rejected(ExecError::EscrowShape(
                        "lock carries no output into the session's escrow",
                    ));
                };
                self.apply_bundle(bundle);
                self.escrows.insert(
                    *session,
                    EscrowRecord {
                        parties: EscrowParties { buyer: *buyer, seller: *seller, mediator: *mediator },
                        lock_bundle: bundle.id(),
                        amount,
                        outcome: None,
                    },
                );
            }
            Envelope::Initial(m) => {
                match validate_initial(m, &self.params.onboarding, self) {
                    Ok(()) => {}
                    Err(InitialError::Pob(PobError::UnknownBurn)) => {
                        return Step::Parked(ParkReason::UnknownBurn(m.pob.burned_output));
                    }
                    Err(e) => return Step::Rejected(ExecError::Onboarding(e)),
                }
                if self.burn_claims.contains_key(&m.pob.burned_output) {
                    return Step::Rejected(ExecError::BurnPledged);
                }
                self.burn_claims.insert(m.pob.burned_output, BurnClaim::Onboarding(m.sender));
                self.identities.insert(
                    m.sender,
                    IdentityRecord {
                        service_descriptor: m.service_descriptor.clone(),
                        content_pointer: m.content_pointer.clone(),
                    },
                );
            }
            Envelope::Feedback(fb) => {
                match validate_feedback(fb, self) {
                    Ok(()) => {}
                    Err(FeedbackError::NoPayment | FeedbackError::NotReleased) => {
                        return Step::Parked(ParkReason::TradeUnsettled(fb.session));
                    }
                    Err(e) => return Step::Rejected(ExecError::Feedback(e)),
                }
                let escrow = self.escrows.get(&fb.session).expect("escrow checked by validation");
                self.feedback.insert(
                    fb.session,
                    TradeRecord {
                        buyer: fb.buyer,
                        seller: fb.seller,
                        amount: escrow.amount,
                        rating: fb.rating,
                    },
                );
            }
            Envelope::WeakReqAnchor { burn, request } => {
                let request_id = request.id();
                if self.requests.contains_key(&request_id) {
                    return Step::Rejected(ExecError::DuplicateRequest);
                }
                // Validate the request with the burn bundle's effects
                // overlaid but not yet written, so a junk request
                // cannot drag a real burn in with it.
                if let Some(b) = burn {
                    if let Err(stop) = self.bundle_gate(b) {
                        return stop;
                    }
                    let overlay = BundleOverlay::new(self, b);
                    if let Err(stop) = gate_request(request, &self.params.weakreq, &overlay) {
                        return stop;
                    }
                } else if let Err(stop) = gate_request(request, &self.params.weakreq, self) {
                    return stop;
                }
                // Binding: a free burn binds outright; a burn behind an
                // unserved request moves only to a strictly better fee.
                match self.burn_claims.get(&request.pob.burned_output).copied() {
                    None => {}
                    Some(BurnClaim::Onboarding(_)) => return Step::Rejected(ExecError::BurnPledged),
                    Some(BurnClaim::Request { request_id: old, .. }) => {
                        let old_fee = self.requests[&old].request.fee_total;
                        if request.fee_total <= old_fee {
                            return Step::Rejected(ExecError::NotSuperseding);
                        }
                        self.requests.get_mut(&old).expect("claimed request exists").superseded =
                            true;
                    }
                }
                if let Some(b) = burn {
                    self.apply_bundle(b);
                }
                self.burn_claims.insert(
                    request.pob.burned_output,
                    BurnClaim::Request { request_id, served_any: false },
                );
                self.requests.insert(
                    request_id,
                    RequestRecord {
                        request: request.clone(),
                        miner: carrier,
                        served: BTreeSet::new(),
                        fees_collected: Money::ZERO,
                        superseded: false,
                    },
                );
            }
            Envelope::WeakReqServed(m) => {
                let Some(rec) = self.requests.get(&m.request_id) else {
                    return Step::Parked(ParkReason::RequestUnanchored(m.request_id));
                };
                if rec.superseded {
                    return Step::Rejected(ExecError::RequestSuperseded);
                }
                let share = match validate_weakreq_message(m, &rec.request, &rec.served, &carrier, self)
                {
                    Ok(share) => share,
                    Err(ServeError::BadFeeBundle(BundleError::InputUnknown(r))) => {
                        return Step::Parked(ParkReason::MissingInput(r));
                    }
                    Err(e) => return Step::Rejected(ExecError::Serve(e)),
                };
                self.apply_bundle(&m.fee_bundle);
                let rec = self.requests.get_mut(&m.request_id).expect("checked above");
                rec.served.insert(m.index);
                rec.fees_collected =
                    rec.fees_collected.checked_add(share).expect("fees overflow supply");
                let burned = rec.request.pob.burned_output;
                if let Some(BurnClaim::Request { request_id, served_any }) =
                    self.burn_claims.get_mut(&burned)
                {
                    if *request_id == m.request_id {
                        *served_any = true;
                    }
                }
            }
        }

        self.executed.insert(id);
        self.exec_order.push(id);
        Step::Executed
    }

    /// Map payment validation onto the wait-or-die split: an input that
    /// does not resolve yet may still arrive, everything else is final.
    fn bundle_gate(&self, bundle: &Bundle) -> Result<(), Step> {
        match validate_bundle(bundle, self) {
            Ok(()) => Ok(()),
            Err(BundleError::InputUnknown(r)) => Err(Step::Parked(ParkReason::MissingInput(r))),
            Err(e) => Err(Step::Rejected(ExecError::Bundle(e))),
        }
    }

    /// Write a validated bundle's effects.
    fn apply_bundle(&mut self, bundle: &Bundle) {
        let bid = bundle.id();
        let mut input_total = Money::ZERO;
        for input in &bundle.inputs {
            let source = self.outputs.get(&input.output).expect("validated input resolves");
            input_total = input_total.checked_add(source.value).expect("validated totals fit");
            self.spent.insert(input.output);
            // Spending a locked output settles its trade. Validation
            // already forced full disbursement to exactly one party.
            if let Some(session) = self.escrow_outputs.get(&input.output).copied() {
                if let Some(rec) = self.escrows.get_mut(&session) {
                    let signer = input.signature.claimed_signer();
                    let to_seller = bundle
                        .outputs
                        .first()
                        .is_some_and(|o| o.address == Address::Node(rec.parties.seller));
                    let by_mediator = rec.parties.mediator == Some(signer);
                    rec.outcome = Some(EscrowOutcome { to_seller, by_mediator });
                }
            }
        }
        // A burn proves cost only when one node paid all of it.
        let owner = uniform_signer(bundle);
        let mut output_total = Money::ZERO;
        for (i, out) in bundle.outputs.iter().enumerate() {
            let r = OutputRef { txid: bid, index: i as u32 };
            output_total = output_total.checked_add(out.value).expect("validated totals fit");
            self.outputs.insert(r, *out);
            match out.address {
                Address::Burn => {
                    if let Some(owner) = owner {
                        self.burn_owners.insert(r, owner);
                    }
                }
                Address::Escrow(session) => {
                    self.escrow_outputs.insert(r, session);
                }
                Address::Node(_) => {}
            }
        }
        let fee = input_total.checked_sub(output_total).expect("validated conservation");
        self.fees = self.fees.checked_add(fee).expect("fees overflow supply");
        self.confirmed_bundles.insert(bid);
    }

    /// Settle coinbase credits against the current canonical chain:
    /// credit matured canonical blocks, revoke credits whose block fell
    /// off, flag the unrecoverable spent-then-reorged case.
    pub fn observe_chain(&mut self, chain: &ChainState) -> Vec<LedgerEvent> {
        let mut events = Vec::new();
        let canonical = chain.canonical_chain();
        let canonical_set: BTreeSet<BlockId> = canonical.iter().copied().collect();

        let credited: Vec<(BlockId, Money)> =
            self.coinbase_credits.iter().map(|(b, v)| (*b, *v)).collect();
        for (block, value) in credited {
            if canonical_set.contains(&block) || self.violated.contains(&block) {
                continue;
            }
            let r = OutputRef { txid: block, index: 0 };
            if self.spent.contains(&r) {
                // Already spent onward; the value stays minted and the
                // discrepancy is recorded instead of papered over.
                self.violated.insert(block);
                self.violations.push(Violation::SpentCoinbaseReorged(block));
                events.push(LedgerEvent::CoinbaseViolation(block));
            } else {
                self.outputs.remove(&r);
                self.coinbase_credits.remove(&block);
                self.minted = self.minted.checked_sub(value).expect("credited value was minted");
                events.push(LedgerEvent::CoinbaseRevoked(block));
            }
        }

        let maturity = chain.params().coinbase_maturity;
        let value = chain.params().coinbase_value;
        let head_height = chain.head_height();
        for id in canonical {
            let Some(block) = chain.block(&id) else { continue };
            if head_height - block.height < maturity {
                break;
            }
            if self.coinbase_credits.contains_key(&id) || self.violated.contains(&id) {
                continue;
            }
            let r = OutputRef { txid: id, index: 0 };
            self.outputs.insert(r, TxOutput { address: Address::Node(block.miner), value });
            self.coinbase_credits.insert(id, value);
            self.minted = self.minted.checked_add(value).expect("coinbase overflows supply");
            events.push(LedgerEvent::CoinbaseCredited(id, block.miner, value));
        }
        events
    }

    pub fn is_executed(&self, id: &MessageId) -> bool {
        self.executed.contains(id)
    }

    /// Executed message ids in execution order.
    pub fn exec_order(&self) -> &[MessageId] {
        &self.exec_order
    }

    pub fn rejections(&self) -> &[(MessageId, ExecError)] {
        &self.rejected
    }

    /// Confirmed messages still waiting, each with why.
    pub fn pending(&self) -> Vec<(MessageId, ParkReason)> {
        self.queue
            .iter()
            .filter_map(|(id, reason)| reason.clone().map(|r| (*id, r)))
            .collect()
    }

    /// Reviewed trades in session-id order, the reputation input.
    pub fn trade_records(&self) -> Vec<TradeRecord> {
        self.feedback.values().copied().collect()
    }

    pub fn identity(&self, id: &NodeId) -> Option<&IdentityRecord> {
        self.identities.get(id)
    }

    pub fn identity_count(&self) -> usize {
        self.identities.len()
    }

    pub fn request_record(&self, id: &HashDigest) -> Option<&RequestRecord> {
        self.requests.get(id)
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn minted(&self) -> Money {
        self.minted
    }

    /// Check the supply invariant and report the split.
    pub fn audit(&self) -> Result<AuditReport, AuditError> {
        let mut circulating = Money::ZERO;
        let mut burned_outputs = Money::ZERO;
        for (r, out) in &self.outputs {
            if self.spent.contains(r) {
                continue;
            }
            match out.address {
                Address::Burn => {
                    burned_outputs =
                        burned_outputs.checked_add(out.value).expect("burned total fits")
                }
                _ => circulating = circulating.checked_add(out.value).expect("circulating fits"),
            }
        }
        let accounted = circulating
            .checked_add(burned_outputs)
            .and_then(|m| m.checked_add(self.fees))
            .expect("account total fits");
        if accounted != self.minted {
            return Err(AuditError::SupplyMismatch {
                minted: self.minted,
                circulating,
                burned_outputs,
                fees: self.fees,
            });
        }
        Ok(AuditReport { minted: self.minted, circulating, burned_outputs, fees: self.fees })
    }

    /// Digest over the full executed state, for replay and cross-node
    /// equality checks.
    pub fn state_digest(&self) -> HashDigest {
        let mut w = Writer::new();
        w.raw(b"braid-ledger-state");
        w.u32(self.outputs.len() as u32);
        for (r, out) in &self.outputs {
            r.encode(&mut w);
            out.encode(&mut w);
        }
        w.u32(self.spent.len() as u32);
        for r in &self.spent {
            r.encode(&mut w);
        }
        w.u32(self.burn_owners.len() as u32);
        for (r, owner) in &self.burn_owners {
            r.encode(&mut w);
            owner.encode(&mut w);
        }
        w.u32(self.burn_claims.len() as u32);
        for (r, claim) in &self.burn_claims {
            r.encode(&mut w);
            match claim {
                BurnClaim::Onboarding(node) => {
                    w.u8(0);
                    node.encode(&mut w);
                }
                BurnClaim::Request { request_id, served_any } => {
                    w.u8(1);
                    request_id.encode(&mut w);
                    w.u8(u8::from(*served_any));
                }
            }
        }
        w.u32(self.escrows.len() as u32);
        for (session, rec) in &self.escrows {
            session.encode(&mut w);
            rec.parties.buyer.encode(&mut w);
            rec.parties.seller.encode(&mut w);
            match rec.parties.mediator {
                Some(m) => {
                    w.u8(1);
                    m.encode(&mut w);
                }
                None => w.u8(0),
            }
            rec.lock_bundle.encode(&mut w);
            rec.amount.encode(&mut w);
            match rec.outcome {
                Some(o) => {
                    w.u8(1);
                    w.u8(u8::from(o.to_seller));
                    w.u8(u8::from(o.by_mediator));
                }
                None => w.u8(0),
            }
        }
        w.u32(self.identities.len() as u32);
        for (node, rec) in &self.identities {
            node.encode(&mut w);
            w.str(&rec.service_descriptor);
            w.str(&rec.content_pointer);
        }
        w.u32(self.feedback.len() as u32);
        for (session, rec) in &self.feedback {
            session.encode(&mut w);
            rec.buyer.encode(&mut w);
            rec.seller.encode(&mut w);
            rec.amount.encode(&mut w);
            rec.rating.encode(&mut w);
        }
        w.u32(self.requests.len() as u32);
        for (id, rec) in &self.requests {
            id.encode(&mut w);
            rec.miner.encode(&mut w);
            w.u32(rec.served.len() as u32);
            for i in &rec.served {
                w.u32(*i);
            }
            rec.fees_collected.encode(&mut w);
            w.u8(u8::from(rec.superseded));
        }
        w.u32(self.coinbase_credits.len() as u32);
        for (block, value) in &self.coinbase_credits {
            block.encode(&mut w);
            value.encode(&mut w);
        }
        w.u32(self.violated.len() as u32);
        for block in &self.violated {
            block.encode(&mut w);
        }
        w.u32(self.exec_order.len() as u32);
        for id in &self.exec_order {
            id.encode(&mut w);
        }
        w.u32(self.rejected.len() as u32);
        for (id, _) in &self.rejected {
            id.encode(&mut w);
        }
        w.u32(self.queue.len() as u32);
        for (id, _) in &self.queue {
            id.encode(&mut w);
        }
        self.minted.encode(&mut w);
        self.fees.encode(&mut w);
        HashDigest::compute(&w.into_bytes())
    }
}

/// Gate request validation into wait-or-die, against any view.
fn gate_request(
    request: &crate::weakreq::WeakReqRequest,
    params: &WeakReqParams,
    view: &dyn LedgerView,
) -> Result<(), Step> {
    match validate_request(request, params, view) {
        Ok(()) => Ok(()),
        Err(RequestError::Pob(PobError::UnknownBurn)) => {
            Err(Step::Parked(ParkReason::UnknownBurn(request.pob.burned_output)))
        }
        Err(e) => Err(Step::Rejected(ExecError::Request(e))),
    }
}

/// The one signer behind every input of a bundle, if there is one.
fn uniform_signer(bundle: &Bundle) -> Option<NodeId> {
    let mut owner = None;
    for input in &bundle.inputs {
        let signer = input.signature.claimed_signer();
        match owner {
            None => owner = Some(signer),
            Some(o) if o == signer => {}
            Some(_) => return None,
        }
    }
    owner
}

/// The ledger as it would look after one more bundle, without writing
/// anything. Lets a request that rides along with its own burn be
/// validated before either is committed.
struct BundleOverlay<'a> {
    base: &'a Ledger,
    txid: HashDigest,
    outputs: &'a [TxOutput],
    spends: BTreeSet<OutputRef>,
    owner: Option<NodeId>,
}

impl<'a> BundleOverlay<'a> {
    fn new(base: &'a Ledger, bundle: &'a Bundle) -> Self {
        BundleOverlay {
            base,
            txid: bundle.id(),
            outputs: &bundle.outputs,
            spends: bundle.input_refs().into_iter().collect(),
            owner: uniform_signer(bundle),
        }
    }
}

impl LedgerView for BundleOverlay<'_> {
    fn output(&self, r: &OutputRef) -> Option<TxOutput> {
        if r.txid == self.txid {
            self.outputs.get(r.index as usize).copied()
        } else {
            self.base.output(r)
        }
    }

    fn is_spent(&self, r: &OutputRef) -> bool {
        self.spends.contains(r) || self.base.is_spent(r)
    }

    fn burn_used(&self, r: &OutputRef) -> bool {
        self.base.burn_used(r)
    }

    fn burn_owner(&self, r: &OutputRef) -> Option<NodeId> {
        if r.txid == self.txid {
            self.owner
        } else {
            self.base.burn_owner(r)
        }
    }

    fn escrow(&self, session: &HashDigest) -> Option<EscrowRecord> {
        self.base.escrow(session)
    }

    fn bundle_confirmed(&self, bundle_id: &HashDigest) -> bool {
        *bundle_id == self.txid || self.base.bundle_confirmed(bundle_id)
    }

    fn identity_registered(&self, id: &NodeId) -> bool {
        self.base.identity_registered(id)
    }

    fn feedback_recorded(&self, session: &HashDigest) -> bool {
        self.base.feedback_recorded(session)
    }
}

impl LedgerView for Ledger {
    fn output(&self, r: &OutputRef) -> Option<TxOutput> {
        self.outputs.get(r).copied()
    }

    fn is_spent(&self, r: &OutputRef) -> bool {
        self.spent.contains(r)
    }

    fn burn_used(&self, r: &OutputRef) -> bool {
        match self.burn_claims.get(r) {
            Some(BurnClaim::Onboarding(_)) => true,
            Some(BurnClaim::Request { served_any, .. }) => *served_any,
            None => false,
        }
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
        self.identities.contains_key(id)
    }

    fn feedback_recorded(&self, session: &HashDigest) -> bool {
        self.feedback.contains_key(session)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Block, ChainParams, ForkRule};
    use crate::keys::KeyPair;
    use crate::tangle::{genesis_id, MessageKind, TangleMessage, TangleParams};
    use crate::trade::feedback::{Feedback, Rating};
    use crate::trade::initial::InitialMessage;
    use crate::trade::session::{session_id, AckToken};
    use crate::weakreq::{ProofOfBurn, WeakReqMessage, WeakReqRequest};

    fn kp(n: u8) -> KeyPair {
        KeyPair::from_seed_bytes([n; 32])
    }

    fn pay(to: &KeyPair, value: u64) -> TxOutput {
        TxOutput { address: Address::Node(to.node_id()), value: Money::new(value) }
    }

    struct Harness {
        tangle: TangleState,
        ledger: Ledger,
        events: Vec<LedgerEvent>,
    }

    impl Harness {
        fn new(confirmation_weight: u32, params: LedgerParams) -> Self {
            Harness {
                tangle: TangleState::new(TangleParams { message_bits: 4, confirmation_weight }),
                ledger: Ledger::new(params),
                events: Vec::new(),
            }
        }

        fn attach(&mut self, keys: &KeyPair, payload: Envelope) -> MessageId {
            let g = genesis_id();
            let seq = self.tangle.next_seq(&keys.node_id());
            let msg = TangleMessage::build(keys, seq, [g, g], MessageKind::Normal, payload, 4)
                .expect("work within cap");
            let report = self.tangle.attach(msg).expect("attachable");
            let id = report.id;
            self.events.extend(self.ledger.sweep(&self.tangle, &report.newly_confirmed));
            id
        }

        /// Pile empty children on `target` until it confirms, sweeping
        /// after every attach the way a live node would.
        fn confirm(&mut self, target: MessageId, filler: &KeyPair) {
            let g = genesis_id();
            while !self.tangle.is_confirmed(&target) {
                let seq = self.tangle.next_seq(&filler.node_id());
                let msg = TangleMessage::build(
                    filler,
                    seq,
                    [target, g],
                    MessageKind::Normal,
                    Envelope::Raw(vec![]),
                    4,
                )
                .expect("work within cap");
                let report = self.tangle.attach(msg).expect("attachable");
                self.events.extend(self.ledger.sweep(&self.tangle, &report.newly_confirmed));
            }
        }

        fn run(&mut self, keys: &KeyPair, payload: Envelope, filler: &KeyPair) -> MessageId {
            let id = self.attach(keys, payload);
            self.confirm(id, filler);
            id
        }

        fn rejected_with(&self, id: &MessageId) -> Option<&ExecError> {
            self.ledger.rejections().iter().find(|(r, _)| r == id).map(|(_, e)| e)
        }
    }

    #[test]
    fn payment_executes_and_supply_is_conserved() {
        let alice = kp(1);
        let bob = kp(2);
        let filler = kp(9);
        let mut h = Harness::new(2, LedgerParams::default());
        let refs = h.ledger.endow(&[(alice.node_id(), Money::new(100))]);

        // 60 to bob, 39 back, 1 implicit fee.
        let bundle = Bundle::build(&[(refs[0], &alice)], vec![pay(&bob, 60), pay(&alice, 39)]);
        let bid = bundle.id();
        let m = h.run(&alice, Envelope::Bundle(bundle), &filler);

        assert!(h.ledger.is_executed(&m));
        assert!(h.ledger.bundle_confirmed(&bid));
        assert!(h.ledger.is_spent(&refs[0]));
        let to_bob = OutputRef { txid: bid, index: 0 };
        assert_eq!(h.ledger.output(&to_bob).unwrap().value, Money::new(60));

        let report = h.ledger.audit().unwrap();
        assert_eq!(report.minted, Money::new(100));
        assert_eq!(report.circulating, Money::new(99));
        assert_eq!(report.fees, Money::new(1));
        assert!(h.events.contains(&LedgerEvent::Executed(m)));
    }

    #[test]
    fn spender_parks_until_its_input_arrives() {
        let alice = kp(1);
        let bob = kp(2);
        let carol = kp(3);
        let filler = kp(9);
        let mut h = Harness::new(2, LedgerParams::default());
        let refs = h.ledger.endow(&[(alice.node_id(), Money::new(50))]);

        let first = Bundle::build(&[(refs[0], &alice)], vec![pay(&bob, 50)]);
        let bob_ref = OutputRef { txid: first.id(), index: 0 };
        let second = Bundle::build(&[(bob_ref, &bob)], vec![pay(&carol, 50)]);

        // The downstream spend confirms first and has to wait.
        let m_first = h.attach(&alice, Envelope::Bundle(first));
        let m_second = h.run(&bob, Envelope::Bundle(second), &filler);
        assert!(!h.ledger.is_executed(&m_second));
        assert_eq!(
            h.ledger.pending(),
            vec![(m_second, ParkReason::MissingInput(bob_ref))]
        );

        h.confirm(m_first, &filler);
        assert!(h.ledger.is_executed(&m_first));
        assert!(h.ledger.is_executed(&m_second));
        assert!(h.ledger.pending().is_empty());
        assert_eq!(h.ledger.exec_order().last(), Some(&m_second));
        h.ledger.audit().unwrap();
    }

    #[test]
    fn decisive_double_spend_executes_winner_and_rejects_loser() {
        let alice = kp(1);
        let bob = kp(2);
        let carol = kp(3);
        let filler = kp(9);
        let mut h = Harness::new(3, LedgerParams::default());
        let refs = h.ledger.endow(&[(alice.node_id(), Money::new(10))]);

        let to_bob = Bundle::build(&[(refs[0], &alice)], vec![pay(&bob, 10)]);
        let to_carol = Bundle::build(&[(refs[0], &alice)], vec![pay(&carol, 10)]);
        let bob_bid = to_bob.id();
        let carol_bid = to_carol.id();

        let winner = h.attach(&alice, Envelope::Bundle(to_bob));
        let loser = h.attach(&alice, Envelope::Bundle(to_carol));
        assert!(h.tangle.has_conflict(&refs[0]));

        // Confirm the loser first; the contest is level, so it parks.
        h.confirm(loser, &filler);
        assert!(matches!(
            h.ledger.pending().as_slice(),
            [(id, ParkReason::ConflictUndecided(_))] if *id == loser
        ));

        // Pile weight on the winner until its lead is decisive.
        let g = genesis_id();
        let helper = kp(8);
        loop {
            let status = h.tangle.conflict_status(&refs[0]);
            if status.decisive {
                break;
            }
            let seq = h.tangle.next_seq(&helper.node_id());
            let msg = TangleMessage::build(
                &helper,
                seq,
                [winner, g],
                MessageKind::Normal,
                Envelope::Raw(vec![]),
                4,
            )
            .unwrap();
            let report = h.tangle.attach(msg).unwrap();
            h.events.extend(h.ledger.sweep(&h.tangle, &report.newly_confirmed));
        }

        assert!(h.ledger.is_executed(&winner));
        assert_eq!(h.rejected_with(&loser), Some(&ExecError::ConflictLost(refs[0])));
        assert!(h.ledger.output(&OutputRef { txid: bob_bid, index: 0 }).is_some());
        assert!(h.ledger.output(&OutputRef { txid: carol_bid, index: 0 }).is_none());
        h.ledger.audit().unwrap();
    }

    fn lock_envelope(
        buyer: &KeyPair,
        seller: &KeyPair,
        mediator: Option<NodeId>,
        session: HashDigest,
        fund: OutputRef,
        locked: u64,
        change: u64,
    ) -> (Envelope, Bundle) {
        let mut outputs =
            vec![TxOutput { address: Address::Escrow(session), value: Money::new(locked) }];
        if change > 0 {
            outputs.push(pay(buyer, change));
        }
        let bundle = Bundle::build(&[(fund, buyer)], outputs);
        let envelope = Envelope::EscrowLock {
            session,
            buyer: buyer.node_id(),
            seller: seller.node_id(),
            mediator,
            bundle: bundle.clone(),
        };
        (envelope, bundle)
    }

    #[test]
    fn escrow_release_enables_feedback_once() {
        let buyer = kp(1);
        let seller = kp(2);
        let filler = kp(9);
        let mut h = Harness::new(2, LedgerParams::default());
        let refs = h.ledger.endow(&[(buyer.node_id(), Money::new(50))]);
        let session = session_id(&buyer.node_id(), &seller.node_id(), 7);

        let (lock, lock_bundle) =
            lock_envelope(&buyer, &seller, None, session, refs[0], 30, 20);
        let lock_id = lock_bundle.id();
        h.run(&buyer, lock, &filler);
        let rec = h.ledger.escrow(&session).unwrap();
        assert_eq!(rec.amount, Money::new(30));
        assert_eq!(rec.lock_bundle, lock_id);
        assert_eq!(rec.outcome, None);

        // Feedback lands before the release and has to wait.
        let ack = AckToken::build(&seller, session, buyer.node_id(), true);
        let fb = Feedback::build(
            &buyer,
            session,
            seller.node_id(),
            Rating::try_new(800).unwrap(),
            lock_id,
            ack.clone(),
        );
        let fb_msg = h.run(&buyer, Envelope::Feedback(fb), &filler);
        assert!(matches!(
            h.ledger.pending().as_slice(),
            [(id, ParkReason::TradeUnsettled(_))] if *id == fb_msg
        ));

        // Buyer releases to the seller; the parked feedback follows.
        let escrow_ref = OutputRef { txid: lock_id, index: 0 };
        let release = Bundle::build(&[(escrow_ref, &buyer)], vec![pay(&seller, 30)]);
        h.run(&buyer, Envelope::Bundle(release), &filler);
        let outcome = h.ledger.escrow(&session).unwrap().outcome.unwrap();
        assert!(outcome.to_seller);
        assert!(!outcome.by_mediator);
        assert!(h.ledger.is_executed(&fb_msg));
        let records = h.ledger.trade_records();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].amount, Money::new(30));
        assert_eq!(records[0].rating, Rating::try_new(800).unwrap());

        // A second rating for the same session is stuffing.
        let again = Feedback::build(
            &buyer,
            session,
            seller.node_id(),
            Rating::try_new(100).unwrap(),
            lock_id,
            ack,
        );
        let again_msg = h.run(&buyer, Envelope::Feedback(again), &filler);
        assert_eq!(
            h.rejected_with(&again_msg),
            Some(&ExecError::Feedback(FeedbackError::BallotStuffing))
        );
        h.ledger.audit().unwrap();
    }

    #[test]
    fn mediator_refund_counts_as_resolution() {
        let buyer = kp(1);
        let seller = kp(2);
        let mediator = kp(3);
        let filler = kp(9);
        let mut h = Harness::new(2, LedgerParams::default());
        let refs = h.ledger.endow(&[(buyer.node_id(), Money::new(30))]);
        let session = session_id(&buyer.node_id(), &seller.node_id(), 1);

        let (lock, lock_bundle) =
            lock_envelope(&buyer, &seller, Some(mediator.node_id()), session, refs[0], 30, 0);
        h.run(&buyer, lock, &filler);

        let escrow_ref = OutputRef { txid: lock_bundle.id(), index: 0 };
        let refund = Bundle::build(&[(escrow_ref, &mediator)], vec![pay(&buyer, 30)]);
        h.run(&mediator, Envelope::Bundle(refund), &filler);

        let outcome = h.ledger.escrow(&session).unwrap().outcome.unwrap();
        assert!(!outcome.to_seller);
        assert!(outcome.by_mediator);
        assert!(outcome.is_release());

        // The buyer may still rate the failed-but-mediated trade.
        let ack = AckToken::build(&seller, session, buyer.node_id(), true);
        let fb = Feedback::build(
            &buyer,
            session,
            seller.node_id(),
            Rating::try_new(0).unwrap(),
            lock_bundle.id(),
            ack,
        );
        let fb_msg = h.run(&buyer, Envelope::Feedback(fb), &filler);
        assert!(h.ledger.is_executed(&fb_msg));
        h.ledger.audit().unwrap();
    }

    #[test]
    fn buyer_clawback_blocks_feedback() {
        let buyer = kp(1);
        let seller = kp(2);
        let filler = kp(9);
        let mut h = Harness::new(2, LedgerParams::default());
        let refs = h.ledger.endow(&[(buyer.node_id(), Money::new(30))]);
        let session = session_id(&buyer.node_id(), &seller.node_id(), 2);

        let (lock, lock_bundle) = lock_envelope(&buyer, &seller, None, session, refs[0], 30, 0);
        h.run(&buyer, lock, &filler);

        // No mediator, buyer takes the lock back: not a release.
        let escrow_ref = OutputRef { txid: lock_bundle.id(), index: 0 };
        let clawback = Bundle::build(&[(escrow_ref, &buyer)], vec![pay(&buyer, 30)]);
        h.run(&buyer, Envelope::Bundle(clawback), &filler);
        let outcome = h.ledger.escrow(&session).unwrap().outcome.unwrap();
        assert!(!outcome.is_release());

        let ack = AckToken::build(&seller, session, buyer.node_id(), true);
        let fb = Feedback::build(
            &buyer,
            session,
            seller.node_id(),
            Rating::try_new(0).unwrap(),
            lock_bundle.id(),
            ack,
        );
        let fb_msg = h.run(&buyer, Envelope::Feedback(fb), &filler);
        assert!(!h.ledger.is_executed(&fb_msg));
        assert!(matches!(
            h.ledger.pending().as_slice(),
            [(id, ParkReason::TradeUnsettled(_))] if *id == fb_msg
        ));
        assert!(!h.ledger.feedback_recorded(&session));
        h.ledger.audit().unwrap();
    }

    fn easy_onboarding() -> LedgerParams {
        LedgerParams {
            onboarding: OnboardingParams { pow_bits: 4, burn_floor: Money::new(1) },
            weakreq: WeakReqParams::default(),
        }
    }

    #[test]
    fn onboarding_registers_once() {
        let device = kp(1);
        let filler = kp(9);
        let mut h = Harness::new(2, easy_onboarding());
        let refs = h.ledger.endow(&[(device.node_id(), Money::new(20))]);

        let burn = Bundle::build(
            &[(refs[0], &device)],
            vec![TxOutput { address: Address::Burn, value: Money::new(5) }, pay(&device, 15)],
        );
        let burn_ref = OutputRef { txid: burn.id(), index: 0 };
        h.run(&device, Envelope::Bundle(burn), &filler);
        assert_eq!(h.ledger.burn_owner(&burn_ref), Some(device.node_id()));

        let pob = ProofOfBurn { burned_output: burn_ref, amount: Money::new(5) };
        let initial =
            InitialMessage::build(&device, "sensor-feed".into(), "content:xyz".into(), pob, 4, 0)
                .unwrap();
        let m = h.run(&device, Envelope::Initial(initial), &filler);
        assert!(h.ledger.is_executed(&m));
        assert!(h.ledger.identity_registered(&device.node_id()));
        assert_eq!(
            h.ledger.identity(&device.node_id()).unwrap().service_descriptor,
            "sensor-feed"
        );

        // A fresh burn does not allow a second registration.
        let change = OutputRef { txid: burn_ref.txid, index: 1 };
        let burn2 = Bundle::build(
            &[(change, &device)],
            vec![TxOutput { address: Address::Burn, value: Money::new(5) }, pay(&device, 10)],
        );
        let burn2_ref = OutputRef { txid: burn2.id(), index: 0 };
        h.run(&device, Envelope::Bundle(burn2), &filler);
        let pob2 = ProofOfBurn { burned_output: burn2_ref, amount: Money::new(5) };
        let again =
            InitialMessage::build(&device, "sensor-feed".into(), "content:xyz".into(), pob2, 4, 0)
                .unwrap();
        let m2 = h.run(&device, Envelope::Initial(again), &filler);
        assert_eq!(
            h.rejected_with(&m2),
            Some(&ExecError::Onboarding(InitialError::DuplicateIdentity))
        );
        h.ledger.audit().unwrap();
    }

    #[test]
    fn weakreq_anchor_serve_collects_fees() {
        let device = kp(1);
        let miner = kp(2);
        let filler = kp(9);
        let mut h = Harness::new(2, easy_onboarding());
        let refs = h.ledger.endow(&[(device.node_id(), Money::new(100))]);

        // The burn rides inside the anchor, unexecuted until then.
        let burn = Bundle::build(
            &[(refs[0], &device)],
            vec![TxOutput { address: Address::Burn, value: Money::new(3) }, pay(&device, 97)],
        );
        let burn_ref = OutputRef { txid: burn.id(), index: 0 };
        let change_ref = OutputRef { txid: burn.id(), index: 1 };
        let pob = ProofOfBurn { burned_output: burn_ref, amount: Money::new(3) };
        let request = WeakReqRequest::build(&device, Money::new(30), 3, pob, 50);
        let request_id = request.id();

        let anchor = Envelope::WeakReqAnchor { burn: Some(burn), request: request.clone() };
        h.run(&miner, anchor, &filler);
        let rec = h.ledger.request_record(&request_id).unwrap();
        assert_eq!(rec.miner, miner.node_id());
        assert!(!rec.superseded);
        assert!(!h.ledger.burn_used(&burn_ref));

        // The pledged burn cannot also onboard the device.
        let onboard =
            InitialMessage::build(&device, "svc".into(), "ptr".into(), pob, 4, 0).unwrap();
        let m = h.run(&device, Envelope::Initial(onboard), &filler);
        assert_eq!(h.rejected_with(&m), Some(&ExecError::BurnPledged));

        // Serve all three messages, funding each fee from the last
        // change output.
        let mut fund = (change_ref, 97u64);
        for index in 1..=3u32 {
            let fee = Bundle::build(
                &[(fund.0, &device)],
                vec![pay(&miner, 10), pay(&device, fund.1 - 10)],
            );
            let next = (OutputRef { txid: fee.id(), index: 1 }, fund.1 - 10);
            let served = WeakReqMessage::build(
                &device,
                request_id,
                index,
                miner.node_id(),
                fee,
                b"reading".to_vec(),
            );
            let m = h.run(&miner, Envelope::WeakReqServed(served), &filler);
            assert!(h.ledger.is_executed(&m), "serve {index} failed");
            fund = next;
        }
        let rec = h.ledger.request_record(&request_id).unwrap();
        assert_eq!(rec.served.len(), 3);
        assert_eq!(rec.fees_collected, Money::new(30));
        assert!(h.ledger.burn_used(&burn_ref));

        // Serving an index twice is caught even with a fresh fee.
        let fee = Bundle::build(&[(fund.0, &device)], vec![pay(&miner, 10), pay(&device, fund.1 - 10)]);
        let dup = WeakReqMessage::build(&device, request_id, 2, miner.node_id(), fee, vec![]);
        let m = h.run(&miner, Envelope::WeakReqServed(dup), &filler);
        assert_eq!(h.rejected_with(&m), Some(&ExecError::Serve(ServeError::DuplicateIndex(2))));

        let report = h.ledger.audit().unwrap();
        assert_eq!(report.burned_outputs, Money::new(3));
        assert_eq!(report.minted, Money::new(100));
    }

    #[test]
    fn weakreq_supersession_rules() {
        let device = kp(1);
        let miner = kp(2);
        let filler = kp(9);
        let mut h = Harness::new(2, easy_onboarding());
        let refs =
            h.ledger.endow(&[(device.node_id(), Money::new(100)), (device.node_id(), Money::new(20))]);

        let burn = Bundle::build(
            &[(refs[0], &device)],
            vec![TxOutput { address: Address::Burn, value: Money::new(5) }, pay(&device, 95)],
        );
        let burn_ref = OutputRef { txid: burn.id(), index: 0 };
        let change_ref = OutputRef { txid: burn.id(), index: 1 };
        let pob = ProofOfBurn { burned_output: burn_ref, amount: Money::new(5) };

        let r1 = WeakReqRequest::build(&device, Money::new(10), 5, pob, 50);
        h.run(&miner, Envelope::WeakReqAnchor { burn: Some(burn), request: r1.clone() }, &filler);

        // Unserved, so a strictly higher fee replaces it.
        let r2 = WeakReqRequest::build(&device, Money::new(20), 5, pob, 50);
        h.run(&miner, Envelope::WeakReqAnchor { burn: None, request: r2.clone() }, &filler);
        assert!(h.ledger.request_record(&r1.id()).unwrap().superseded);
        assert!(!h.ledger.request_record(&r2.id()).unwrap().superseded);

        // Serving the replaced request is refused, and the rejection
        // keeps its fee payment unexecuted.
        let fee = Bundle::build(&[(change_ref, &device)], vec![pay(&miner, 2), pay(&device, 93)]);
        let stale = WeakReqMessage::build(&device, r1.id(), 1, miner.node_id(), fee, vec![]);
        let m = h.run(&miner, Envelope::WeakReqServed(stale), &filler);
        assert_eq!(h.rejected_with(&m), Some(&ExecError::RequestSuperseded));
        assert!(!h.ledger.is_spent(&change_ref));

        // An equal fee is not a raise: rejected.
        let r3 = WeakReqRequest::build(&device, Money::new(20), 5, pob, 51);
        let m = h.run(&miner, Envelope::WeakReqAnchor { burn: None, request: r3 }, &filler);
        assert_eq!(h.rejected_with(&m), Some(&ExecError::NotSuperseding));

        // First service locks the burn in. The fee comes from the
        // untouched second grant so the stale serve's dangling spend
        // of the change output cannot contest it.
        let fee = Bundle::build(&[(refs[1], &device)], vec![pay(&miner, 4), pay(&device, 16)]);
        let served = WeakReqMessage::build(&device, r2.id(), 1, miner.node_id(), fee, vec![]);
        let m = h.run(&miner, Envelope::WeakReqServed(served), &filler);
        assert!(h.ledger.is_executed(&m));
        assert!(h.ledger.burn_used(&burn_ref));

        let r4 = WeakReqRequest::build(&device, Money::new(40), 5, pob, 50);
        let m = h.run(&miner, Envelope::WeakReqAnchor { burn: None, request: r4 }, &filler);
        assert_eq!(
            h.rejected_with(&m),
            Some(&ExecError::Request(RequestError::Pob(PobError::BurnReused)))
        );
        h.ledger.audit().unwrap();
    }

    #[test]
    fn coinbase_maturity_credit_revoke_and_violation() {
        let miner1 = kp(1);
        let miner2 = kp(2);
        let filler = kp(9);
        let params = ChainParams {
            block_bits: 4,
            dumb_factor: 1,
            fork_rule: ForkRule::HeaderWork,
            coinbase_value: Money::new(50),
            coinbase_maturity: 2,
        };
        let mut h = Harness::new(2, LedgerParams::default());
        let mut chain = ChainState::new(params);

        let mine = |chain: &mut ChainState,
                        tangle: &TangleState,
                        keys: &KeyPair,
                        parent: BlockId,
                        height: u64|
         -> BlockId {
            let block = Block::build(keys, parent, height, vec![], params.block_bits).unwrap();
            let id = block.id();
            chain.validate_and_insert(block, tangle).unwrap();
            id
        };

        // Four blocks by miner1; the first two mature.
        let root = chain.genesis();
        let b1 = mine(&mut chain, &h.tangle, &miner1, root, 1);
        h.events.extend(h.ledger.observe_chain(&chain));
        let b2 = mine(&mut chain, &h.tangle, &miner1, b1, 2);
        h.events.extend(h.ledger.observe_chain(&chain));
        let b3 = mine(&mut chain, &h.tangle, &miner1, b2, 3);
        h.events.extend(h.ledger.observe_chain(&chain));
        assert!(h.events.contains(&LedgerEvent::CoinbaseCredited(b1, miner1.node_id(), Money::new(50))));
        let b4 = mine(&mut chain, &h.tangle, &miner1, b3, 4);
        h.events.extend(h.ledger.observe_chain(&chain));
        assert!(h.ledger.output(&OutputRef { txid: b2, index: 0 }).is_some());
        assert!(h.ledger.output(&OutputRef { txid: b3, index: 0 }).is_none());
        let _ = b4;

        // miner1 spends the first coinbase.
        let spend = Bundle::build(
            &[(OutputRef { txid: b1, index: 0 }, &miner1)],
            vec![pay(&miner1, 50)],
        );
        h.run(&miner1, Envelope::Bundle(spend), &filler);
        h.ledger.audit().unwrap();

        // A longer fork rewrites history below both credits.
        let mut parent = chain.genesis();
        for height in 1..=6 {
            parent = mine(&mut chain, &h.tangle, &miner2, parent, height);
        }
        assert_eq!(chain.head(), parent);
        let events = h.ledger.observe_chain(&chain);

        // b1's credit is spent: flagged, money stays minted. b2's is
        // intact: revoked outright.
        assert!(events.contains(&LedgerEvent::CoinbaseViolation(b1)));
        assert!(events.contains(&LedgerEvent::CoinbaseRevoked(b2)));
        assert_eq!(h.ledger.violations(), &[Violation::SpentCoinbaseReorged(b1)]);
        assert!(h.ledger.output(&OutputRef { txid: b2, index: 0 }).is_none());

        // Four fork blocks have matured (heights 1 through 4 of 6).
        let credited: Vec<_> = events
            .iter()
            .filter(|e| matches!(e, LedgerEvent::CoinbaseCredited(_, _, _)))
            .collect();
        assert_eq!(credited.len(), 4);

        let report = h.ledger.audit().unwrap();
        assert_eq!(report.minted, Money::new(50 + 4 * 50));
        assert_eq!(report.circulating, report.minted);
    }
}
