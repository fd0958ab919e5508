//! PoW-free submissions for weak devices.
//!
//! A weak device burns tokens once, broadcasts a request naming a fee
//! and a message quota, and waits for a miner to anchor the request in
//! a block. It then sends its messages to that miner, paying the fee
//! share per message; the miner does the proof of work and attaches
//! them to the DAG. An expired timer raises the fee or gives up.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::canonical::{Canonical, DecodeError, Reader, Writer};
use crate::hash::HashDigest;
use crate::keys::{KeyPair, NodeId, Signature};
use crate::money::Money;
use crate::trade::bundle::{Address, Bundle, BundleError, OutputRef, validate_bundle};
use crate::view::LedgerView;

/// Reference to a confirmed output at the burn address. Proves the
/// claimant destroyed `amount` tokens; single use.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ProofOfBurn {
    pub burned_output: OutputRef,
    pub amount: Money,
}

impl Canonical for ProofOfBurn {
    fn encode(&self, w: &mut Writer) {
        self.burned_output.encode(w);
        self.amount.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(ProofOfBurn { burned_output: OutputRef::decode(r)?, amount: Money::decode(r)? })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PobError {
    #[error("burned output is unknown or unconfirmed")]
    UnknownBurn,
    #[error("referenced output does not pay the burn address")]
    NotABurn,
    #[error("claimed amount {claimed} does not match the burned value {actual}")]
    AmountMismatch { claimed: Money, actual: Money },
    #[error("burn was funded by another node")]
    ForeignBurn,
    #[error("burn already backs another record")]
    BurnReused,
    #[error("burn of {got} is below the required floor {needed}")]
    BelowFloor { needed: Money, got: Money },
}

/// Check a proof of burn for `claimant` against the confirmed ledger.
pub fn validate_pob(
    pob: &ProofOfBurn,
    claimant: &NodeId,
    floor: Money,
    view: &dyn LedgerView,
) -> Result<(), PobError> {
    let Some(out) = view.output(&pob.burned_output) else {
        return Err(PobError::UnknownBurn);
    };
    if out.address != Address::Burn {
        return Err(PobError::NotABurn);
    }
    if out.value != pob.amount {
        return Err(PobError::AmountMismatch { claimed: pob.amount, actual: out.value });
    }
    match view.burn_owner(&pob.burned_output) {
        Some(owner) if owner == *claimant => {}
        Some(_) => return Err(PobError::ForeignBurn),
        None => return Err(PobError::UnknownBurn),
    }
    if view.burn_used(&pob.burned_output) {
        return Err(PobError::BurnReused);
    }
    if pob.amount < floor {
        return Err(PobError::BelowFloor { needed: floor, got: pob.amount });
    }
    Ok(())
}

/// Per-protocol economic floors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeakReqParams {
    /// Minimum fee per requested message.
    pub min_fee_unit: Money,
    /// Required burn per requested message.
    pub burn_floor_per_msg: Money,
}

impl Default for WeakReqParams {
    fn default() -> Self {
        WeakReqParams { min_fee_unit: Money::new(1), burn_floor_per_msg: Money::new(1) }
    }
}

/// A request for `n_msg` PoW-free attachments at a total fee.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WeakReqRequest {
    pub sender: NodeId,
    pub fee_total: Money,
    pub n_msg: u32,
    pub pob: ProofOfBurn,
    /// Ticks the device waits for anchoring before escalating.
    pub timer_interval: u64,
    pub signature: Signature,
}

impl WeakReqRequest {
    fn body_bytes(sender: &NodeId, fee_total: Money, n_msg: u32, pob: &ProofOfBurn, timer_interval: u64) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"braid-weakreq-request");
        sender.encode(&mut w);
        fee_total.encode(&mut w);
        w.u32(n_msg);
        pob.encode(&mut w);
        w.u64(timer_interval);
        w.into_bytes()
    }

    pub fn build(keys: &KeyPair, fee_total: Money, n_msg: u32, pob: ProofOfBurn, timer_interval: u64) -> Self {
        let sender = keys.node_id();
        let body = Self::body_bytes(&sender, fee_total, n_msg, &pob, timer_interval);
        WeakReqRequest { sender, fee_total, n_msg, pob, timer_interval, signature: keys.sign(&body) }
    }

    pub fn id(&self) -> HashDigest {
        HashDigest::compute(&self.canonical_bytes())
    }

    pub fn verify_signature(&self) -> bool {
        let body = Self::body_bytes(&self.sender, self.fee_total, self.n_msg, &self.pob, self.timer_interval);
        self.signature.verify(&self.sender, &body)
    }

    /// Fee share carried by message `index` (1-based). The integer
    /// remainder of the division rides on the final message.
    pub fn fee_share(&self, index: u32) -> Money {
        fee_share(self.fee_total, self.n_msg, index)
    }
}

impl Canonical for WeakReqRequest {
    fn encode(&self, w: &mut Writer) {
        self.sender.encode(w);
        self.fee_total.encode(w);
        w.u32(self.n_msg);
        self.pob.encode(w);
        w.u64(self.timer_interval);
        self.signature.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(WeakReqRequest {
            sender: NodeId::decode(r)?,
            fee_total: Money::decode(r)?,
            n_msg: r.u32()?,
            pob: ProofOfBurn::decode(r)?,
            timer_interval: r.u64()?,
            signature: Signature::decode(r)?,
        })
    }
}

/// Even fee division with the remainder on the last message, so the
/// shares sum exactly to the total.
pub fn fee_share(fee_total: Money, n_msg: u32, index: u32) -> Money {
    let n = n_msg as u64;
    let base = fee_total.amount() / n;
    if index == n_msg {
        Money::new(base + fee_total.amount() % n)
    } else {
        Money::new(base)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("request asks for zero messages")]
    ZeroMessages,
    #[error("fee {fee} is below the floor of {floor} per message")]
    FeeBelowFloor { fee: Money, floor: Money },
    #[error("request signature is invalid")]
    BadSignature,
    #[error("proof of burn rejected: {0}")]
    Pob(#[from] PobError),
}

/// Admission validity of a request, as checked before anchoring it in
/// a block. Profitability is a separate miner policy.
pub fn validate_request(
    req: &WeakReqRequest,
    params: &WeakReqParams,
    view: &dyn LedgerView,
) -> Result<(), RequestError> {
    if req.n_msg == 0 {
        return Err(RequestError::ZeroMessages);
    }
    let min_fee = params
        .min_fee_unit
        .checked_mul(req.n_msg as u64)
        .ok_or(RequestError::FeeBelowFloor { fee: req.fee_total, floor: params.min_fee_unit })?;
    if req.fee_total < min_fee {
        return Err(RequestError::FeeBelowFloor { fee: req.fee_total, floor: params.min_fee_unit });
    }
    if !req.verify_signature() {
        return Err(RequestError::BadSignature);
    }
    let burn_floor = params
        .burn_floor_per_msg
        .checked_mul(req.n_msg as u64)
        .expect("burn floor overflow");
    validate_pob(&req.pob, &req.sender, burn_floor, view)?;
    Ok(())
}

/// The default profitability policy: serve only requests whose fee per
/// message reaches the miner's minimum share.
pub fn is_profitable(req: &WeakReqRequest, min_share: Money) -> bool {
    // Integer form of fee_total / n_msg >= min_share.
    req.fee_total >= min_share.checked_mul(req.n_msg as u64).unwrap_or(Money::new(u64::MAX))
}

/// One PoW-free payload, addressed to the miner that anchored the
/// request, paying that message's fee share.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WeakReqMessage {
    pub request_id: HashDigest,
    /// 1-based position within the request's quota.
    pub index: u32,
    pub recipient_miner: NodeId,
    /// Pays at least the fee share to the miner.
    pub fee_bundle: Bundle,
    pub payload: Vec<u8>,
    pub signature: Signature,
}

impl WeakReqMessage {
    fn body_bytes(request_id: &HashDigest, index: u32, miner: &NodeId, fee_bundle: &Bundle, payload: &[u8]) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"braid-weakreq-message");
        request_id.encode(&mut w);
        w.u32(index);
        miner.encode(&mut w);
        fee_bundle.encode(&mut w);
        w.bytes(payload);
        w.into_bytes()
    }

    pub fn build(
        keys: &KeyPair,
        request_id: HashDigest,
        index: u32,
        recipient_miner: NodeId,
        fee_bundle: Bundle,
        payload: Vec<u8>,
    ) -> Self {
        let body = Self::body_bytes(&request_id, index, &recipient_miner, &fee_bundle, &payload);
        WeakReqMessage {
            request_id,
            index,
            recipient_miner,
            fee_bundle,
            payload,
            signature: keys.sign(&body),
        }
    }

    pub fn verify_signature(&self, sender: &NodeId) -> bool {
        let body = Self::body_bytes(&self.request_id, self.index, &self.recipient_miner, &self.fee_bundle, &self.payload);
        self.signature.verify(sender, &body)
    }
}

impl Canonical for WeakReqMessage {
    fn encode(&self, w: &mut Writer) {
        self.request_id.encode(w);
        w.u32(self.index);
        self.recipient_miner.encode(w);
        self.fee_bundle.encode(w);
        w.bytes(&self.payload);
        self.signature.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(WeakReqMessage {
            request_id: HashDigest::decode(r)?,
            index: r.u32()?,
            recipient_miner: NodeId::decode(r)?,
            fee_bundle: Bundle::decode(r)?,
            payload: r.bytes()?.to_vec(),
            signature: Signature::decode(r)?,
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ServeError {
    #[error("message references an unknown or unanchored request")]
    UnknownRequest,
    #[error("message index 0 is invalid, indices are 1-based")]
    BadIndex,
    #[error("index {index} exceeds the request quota of {quota}")]
    OverQuota { index: u32, quota: u32 },
    #[error("index {0} was already served")]
    DuplicateIndex(u32),
    #[error("message is addressed to a different miner")]
    WrongMiner,
    #[error("message signature is not the request sender's")]
    BadSignature,
    #[error("fee bundle pays {got} to the miner, share is {needed}")]
    UnderpaidShare { needed: Money, got: Money },
    #[error("fee bundle rejected: {0}")]
    BadFeeBundle(#[from] BundleError),
}

/// Miner-side validation of one incoming message against its anchored
/// request. Returns the fee share the miner collects by attaching it.
pub fn validate_weakreq_message(
    msg: &WeakReqMessage,
    req: &WeakReqRequest,
    served_indices: &BTreeSet<u32>,
    miner: &NodeId,
    view: &dyn LedgerView,
) -> Result<Money, ServeError> {
    if msg.request_id != req.id() {
        return Err(ServeError::UnknownRequest);
    }
    if msg.index == 0 {
        return Err(ServeError::BadIndex);
    }
    if msg.index > req.n_msg {
        return Err(ServeError::OverQuota { index: msg.index, quota: req.n_msg });
    }
    if served_indices.contains(&msg.index) {
        return Err(ServeError::DuplicateIndex(msg.index));
    }
    if msg.recipient_miner != *miner {
        return Err(ServeError::WrongMiner);
    }
    if !msg.verify_signature(&req.sender) {
        return Err(ServeError::BadSignature);
    }
    validate_bundle(&msg.fee_bundle, view)?;
    let share = req.fee_share(msg.index);
    let paid = Money::sum(
        msg.fee_bundle
            .outputs
            .iter()
            .filter(|o| o.address == Address::Node(*miner))
            .map(|o| o.value),
    )
    .unwrap_or(Money::ZERO);
    if paid < share {
        return Err(ServeError::UnderpaidShare { needed: share, got: paid });
    }
    Ok(share)
}

/// Fee escalation strategy: multiply by `factor_milli`/1000 on each
/// timer expiry, at most `max_attempts` broadcasts in total.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EscalationPolicy {
    pub factor_milli: u32,
    pub max_attempts: u32,
}

impl EscalationPolicy {
    /// Refusing to pay more means a single attempt.
    pub fn unwilling() -> Self {
        EscalationPolicy { factor_milli: 1000, max_attempts: 1 }
    }

    fn next_fee(&self, fee: Money) -> Money {
        // Strictly higher even for factors of 1.0xx at small fees.
        let raised = fee.amount().saturating_mul(self.factor_milli as u64) / 1000;
        Money::new(raised.max(fee.amount() + 1))
    }
}

/// What a device asks its gateway to do next.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum DeviceAction {
    /// Broadcast this request to miners.
    Broadcast(WeakReqRequest),
    /// The device declined to raise the fee and stopped.
    GiveUp,
}

#[derive(Clone, PartialEq, Eq, Debug)]
enum DevicePhase {
    /// Waiting for the current request to be anchored.
    Waiting { request_id: HashDigest, fee: Money, attempt: u32, deadline: u64 },
    /// Anchored; sending messages to the recorded miner.
    Sending { request_id: HashDigest, fee: Money, miner: NodeId, next_index: u32 },
    Done,
    Abandoned,
}

/// Outcome classification for a finished device run.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DeviceStatus {
    InFlight,
    Sending,
    Done,
    Abandoned,
}

/// The weak-device side of the protocol as an explicit state machine.
/// The caller supplies time, anchoring notifications and a wallet; the
/// machine yields requests to broadcast and messages to send.
pub struct WeakDevice {
    keys: KeyPair,
    n_msg: u32,
    pob: ProofOfBurn,
    timer_interval: u64,
    policy: EscalationPolicy,
    phase: DevicePhase,
}

impl WeakDevice {
    pub fn new(
        keys: KeyPair,
        initial_fee: Money,
        n_msg: u32,
        pob: ProofOfBurn,
        timer_interval: u64,
        policy: EscalationPolicy,
    ) -> (Self, WeakReqRequest) {
        let request = WeakReqRequest::build(&keys, initial_fee, n_msg, pob, timer_interval);
        let device = WeakDevice {
            keys,
            n_msg,
            pob,
            timer_interval,
            policy,
            phase: DevicePhase::Waiting {
                request_id: request.id(),
                fee: initial_fee,
                attempt: 1,
                deadline: timer_interval,
            },
        };
        (device, request)
    }

    pub fn status(&self) -> DeviceStatus {
        match self.phase {
            DevicePhase::Waiting { .. } => DeviceStatus::InFlight,
            DevicePhase::Sending { .. } => DeviceStatus::Sending,
            DevicePhase::Done => DeviceStatus::Done,
            DevicePhase::Abandoned => DeviceStatus::Abandoned,
        }
    }

    pub fn node_id(&self) -> NodeId {
        self.keys.node_id()
    }

    /// Id of the request this device currently stands behind.
    pub fn live_request(&self) -> Option<HashDigest> {
        match &self.phase {
            DevicePhase::Waiting { request_id, .. } | DevicePhase::Sending { request_id, .. } => {
                Some(*request_id)
            }
            _ => None,
        }
    }

    /// Advance the timer. On expiry the device either escalates the fee
    /// and rebroadcasts or gives up.
    pub fn on_tick(&mut self, now: u64) -> Option<DeviceAction> {
        let DevicePhase::Waiting { fee, attempt, deadline, .. } = self.phase else {
            return None;
        };
        if now < deadline {
            return None;
        }
        if attempt >= self.policy.max_attempts {
            self.phase = DevicePhase::Abandoned;
            return Some(DeviceAction::GiveUp);
        }
        let fee = self.policy.next_fee(fee);
        let request = WeakReqRequest::build(&self.keys, fee, self.n_msg, self.pob, self.timer_interval);
        self.phase = DevicePhase::Waiting {
            request_id: request.id(),
            fee,
            attempt: attempt + 1,
            deadline: now + self.timer_interval,
        };
        Some(DeviceAction::Broadcast(request))
    }

    /// Notification that a request of this device was anchored by
    /// `miner`. Superseded requests are ignored.
    pub fn on_anchored(&mut self, request_id: HashDigest, miner: NodeId) -> AnchorReaction {
        match &self.phase {
            DevicePhase::Waiting { request_id: live, fee, .. } if *live == request_id => {
                let fee = *fee;
                self.phase = DevicePhase::Sending { request_id, fee, miner, next_index: 1 };
                AnchorReaction::Accepted
            }
            // A stale (superseded or already-finished) request surfaced
            // in a block; the device does not send messages for it.
            _ => AnchorReaction::StaleRequest,
        }
    }

    /// Build the next message, paying its fee share from `wallet`.
    /// `None` once the quota is exhausted or the device is not anchored.
    pub fn next_message(
        &mut self,
        wallet: &mut crate::wallet::Wallet,
        payload: Vec<u8>,
    ) -> Result<Option<WeakReqMessage>, crate::wallet::WalletError> {
        let DevicePhase::Sending { request_id, fee, miner, next_index } = self.phase else {
            return Ok(None);
        };
        if next_index > self.n_msg {
            self.phase = DevicePhase::Done;
            return Ok(None);
        }
        let share = fee_share(fee, self.n_msg, next_index);
        let fee_bundle = wallet.pay(vec![crate::trade::bundle::TxOutput {
            address: Address::Node(miner),
            value: share,
        }])?;
        let msg = WeakReqMessage::build(&self.keys, request_id, next_index, miner, fee_bundle, payload);
        let finished = next_index == self.n_msg;
        self.phase = if finished {
            DevicePhase::Done
        } else {
            DevicePhase::Sending { request_id, fee, miner, next_index: next_index + 1 }
        };
        Ok(Some(msg))
    }
}

/// Reaction to an anchoring notification.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AnchorReaction {
    Accepted,
    StaleRequest,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;
    use crate::view::MemoryLedgerView;
    use crate::wallet::Wallet;

    fn kp(n: u8) -> KeyPair {
        KeyPair::from_seed_bytes([n; 32])
    }

    fn r(n: u8) -> OutputRef {
        OutputRef { txid: HashDigest::compute(&[n]), index: 0 }
    }

    fn view_with_burn(owner: &KeyPair, amount: u64) -> (MemoryLedgerView, ProofOfBurn) {
        let mut view = MemoryLedgerView::default();
        let burn_ref = r(42);
        view.add_burn(burn_ref, owner.node_id(), Money::new(amount));
        (view, ProofOfBurn { burned_output: burn_ref, amount: Money::new(amount) })
    }

    #[test]
    fn valid_pob_passes() {
        let owner = kp(1);
        let (view, pob) = view_with_burn(&owner, 5);
        assert_eq!(validate_pob(&pob, &owner.node_id(), Money::new(5), &view), Ok(()));
    }

    #[test]
    fn pob_floor_and_reuse_are_enforced() {
        let owner = kp(1);
        let (mut view, pob) = view_with_burn(&owner, 5);
        assert_eq!(
            validate_pob(&pob, &owner.node_id(), Money::new(6), &view),
            Err(PobError::BelowFloor { needed: Money::new(6), got: Money::new(5) })
        );
        view.mark_burn_used(pob.burned_output);
        assert_eq!(
            validate_pob(&pob, &owner.node_id(), Money::new(5), &view),
            Err(PobError::BurnReused)
        );
    }

    #[test]
    fn pob_of_another_node_is_rejected() {
        let owner = kp(1);
        let thief = kp(2);
        let (view, pob) = view_with_burn(&owner, 5);
        assert_eq!(
            validate_pob(&pob, &thief.node_id(), Money::new(1), &view),
            Err(PobError::ForeignBurn)
        );
    }

    #[test]
    fn fee_shares_sum_to_the_total() {
        let total = Money::new(103);
        let n = 10u32;
        let mut sum = Money::ZERO;
        for i in 1..=n {
            sum = sum.checked_add(fee_share(total, n, i)).unwrap();
        }
        assert_eq!(sum, total);
        assert_eq!(fee_share(total, n, 1), Money::new(10));
        assert_eq!(fee_share(total, n, 10), Money::new(13));
    }

    #[test]
    fn request_validation_enforces_floors_and_signature() {
        let device = kp(1);
        let (view, pob) = view_with_burn(&device, 10);
        let params = WeakReqParams::default();

        let good = WeakReqRequest::build(&device, Money::new(30), 10, pob, 50);
        assert_eq!(validate_request(&good, &params, &view), Ok(()));

        let cheap = WeakReqRequest::build(&device, Money::new(9), 10, pob, 50);
        assert!(matches!(validate_request(&cheap, &params, &view), Err(RequestError::FeeBelowFloor { .. })));

        let mut forged = good.clone();
        forged.fee_total = Money::new(31);
        assert_eq!(validate_request(&forged, &params, &view), Err(RequestError::BadSignature));

        let zero = WeakReqRequest::build(&device, Money::new(30), 0, pob, 50);
        assert_eq!(validate_request(&zero, &params, &view), Err(RequestError::ZeroMessages));

        // Burn floor scales with the quota: 10 burned < 11 needed.
        let wide = WeakReqRequest::build(&device, Money::new(30), 11, pob, 50);
        assert!(matches!(validate_request(&wide, &params, &view), Err(RequestError::Pob(PobError::BelowFloor { .. }))));
    }

    #[test]
    fn profitability_policy_compares_fee_per_message() {
        let device = kp(1);
        let (_, pob) = view_with_burn(&device, 1000);
        let a = WeakReqRequest::build(&device, Money::new(100), 10, pob, 50);
        let b = WeakReqRequest::build(&device, Money::new(1), 1000, pob, 50);
        assert!(is_profitable(&a, Money::new(1)));
        assert!(!is_profitable(&b, Money::new(1)));
    }

    fn served_setup() -> (KeyPair, KeyPair, MemoryLedgerView, WeakReqRequest, Wallet) {
        let device = kp(1);
        let miner = kp(2);
        let (mut view, pob) = view_with_burn(&device, 10);
        let req = WeakReqRequest::build(&device, Money::new(30), 3, pob, 50);
        let mut wallet = Wallet::new(device.clone());
        for n in 0..3u8 {
            let rf = r(10 + n);
            view.add_output(
                rf,
                crate::trade::bundle::TxOutput {
                    address: Address::Node(device.node_id()),
                    value: Money::new(20),
                },
            );
            wallet.credit(rf, Money::new(20));
        }
        (device, miner, view, req, wallet)
    }

    #[test]
    fn miner_accepts_a_valid_message_and_collects_the_share() {
        let (device, miner, view, req, mut wallet) = served_setup();
        let share = req.fee_share(1);
        let fee_bundle = wallet
            .pay(vec![crate::trade::bundle::TxOutput { address: Address::Node(miner.node_id()), value: share }])
            .unwrap();
        let msg = WeakReqMessage::build(&device, req.id(), 1, miner.node_id(), fee_bundle, b"data".to_vec());
        let collected =
            validate_weakreq_message(&msg, &req, &BTreeSet::new(), &miner.node_id(), &view).unwrap();
        assert_eq!(collected, Money::new(10));
    }

    #[test]
    fn miner_rejections_cover_each_reason() {
        let (device, miner, mut view, req, mut wallet) = served_setup();
        let miner_id = miner.node_id();
        // Six attempts follow and nothing confirms in between, so fund
        // each from its own confirmed output.
        for n in 0..3u8 {
            let rf = r(30 + n);
            view.add_output(
                rf,
                crate::trade::bundle::TxOutput {
                    address: Address::Node(device.node_id()),
                    value: Money::new(20),
                },
            );
            wallet.credit(rf, Money::new(20));
        }
        let pay_miner = |w: &mut Wallet, v: u64| {
            w.pay(vec![crate::trade::bundle::TxOutput { address: Address::Node(miner_id), value: Money::new(v) }])
                .unwrap()
        };
        let none = BTreeSet::new();

        let over = WeakReqMessage::build(&device, req.id(), 4, miner_id, pay_miner(&mut wallet, 10), vec![]);
        assert_eq!(
            validate_weakreq_message(&over, &req, &none, &miner_id, &view),
            Err(ServeError::OverQuota { index: 4, quota: 3 })
        );

        let zero = WeakReqMessage::build(&device, req.id(), 0, miner_id, pay_miner(&mut wallet, 10), vec![]);
        assert_eq!(validate_weakreq_message(&zero, &req, &none, &miner_id, &view), Err(ServeError::BadIndex));

        let other = kp(9).node_id();
        let misaddressed = WeakReqMessage::build(&device, req.id(), 1, other, pay_miner(&mut wallet, 10), vec![]);
        assert_eq!(
            validate_weakreq_message(&misaddressed, &req, &none, &miner_id, &view),
            Err(ServeError::WrongMiner)
        );

        let mut served = BTreeSet::new();
        served.insert(1u32);
        let dup = WeakReqMessage::build(&device, req.id(), 1, miner_id, pay_miner(&mut wallet, 10), vec![]);
        assert_eq!(
            validate_weakreq_message(&dup, &req, &served, &miner_id, &view),
            Err(ServeError::DuplicateIndex(1))
        );

        let cheap = WeakReqMessage::build(&device, req.id(), 1, miner_id, pay_miner(&mut wallet, 9), vec![]);
        assert_eq!(
            validate_weakreq_message(&cheap, &req, &none, &miner_id, &view),
            Err(ServeError::UnderpaidShare { needed: Money::new(10), got: Money::new(9) })
        );

        let forged = WeakReqMessage::build(&kp(9), req.id(), 1, miner_id, pay_miner(&mut wallet, 10), vec![]);
        assert_eq!(validate_weakreq_message(&forged, &req, &none, &miner_id, &view), Err(ServeError::BadSignature));
    }

    #[test]
    fn device_happy_path_sends_all_messages() {
        let device_keys = kp(1);
        let (_, pob) = view_with_burn(&device_keys, 3);
        let mut wallet = Wallet::new(device_keys.clone());
        for n in 0..3u8 {
            wallet.credit(r(20 + n), Money::new(10));
        }
        let (mut device, request) =
            WeakDevice::new(device_keys, Money::new(9), 3, pob, 50, EscalationPolicy::unwilling());
        assert_eq!(device.status(), DeviceStatus::InFlight);

        let miner = kp(2).node_id();
        assert_eq!(device.on_anchored(request.id(), miner), AnchorReaction::Accepted);

        let mut sent = Vec::new();
        while let Some(msg) = device.next_message(&mut wallet, b"m".to_vec()).unwrap() {
            sent.push(msg);
        }
        assert_eq!(sent.len(), 3);
        assert_eq!(device.status(), DeviceStatus::Done);
        assert!(sent.iter().all(|m| m.recipient_miner == miner));
        let indices: Vec<u32> = sent.iter().map(|m| m.index).collect();
        assert_eq!(indices, vec![1, 2, 3]);
    }

    #[test]
    fn unwilling_device_abandons_on_timer_expiry() {
        let device_keys = kp(1);
        let (_, pob) = view_with_burn(&device_keys, 1);
        let (mut device, _req) =
            WeakDevice::new(device_keys, Money::new(1), 1, pob, 50, EscalationPolicy::unwilling());
        assert_eq!(device.on_tick(49), None);
        assert_eq!(device.on_tick(50), Some(DeviceAction::GiveUp));
        assert_eq!(device.status(), DeviceStatus::Abandoned);
    }

    #[test]
    fn one_doubling_then_anchor() {
        let device_keys = kp(1);
        let (_, pob) = view_with_burn(&device_keys, 1);
        let policy = EscalationPolicy { factor_milli: 2000, max_attempts: 2 };
        let (mut device, first) = WeakDevice::new(device_keys, Money::new(4), 1, pob, 50, policy);

        let Some(DeviceAction::Broadcast(second)) = device.on_tick(50) else {
            panic!("expected an escalated rebroadcast");
        };
        assert_eq!(second.fee_total, Money::new(8));
        assert_ne!(second.id(), first.id());

        // The superseded request anchoring late is ignored.
        let miner = kp(2).node_id();
        assert_eq!(device.on_anchored(first.id(), miner), AnchorReaction::StaleRequest);
        assert_eq!(device.status(), DeviceStatus::InFlight);
        assert_eq!(device.on_anchored(second.id(), miner), AnchorReaction::Accepted);
        assert_eq!(device.status(), DeviceStatus::Sending);

        // Second expiry with no attempts left gives up.
        let (mut quitter, _q) = WeakDevice::new(
            kp(3),
            Money::new(4),
            1,
            pob,
            50,
            EscalationPolicy { factor_milli: 2000, max_attempts: 2 },
        );
        assert!(matches!(quitter.on_tick(50), Some(DeviceAction::Broadcast(_))));
        assert_eq!(quitter.on_tick(100), Some(DeviceAction::GiveUp));
    }

    #[test]
    fn request_canonical_round_trip() {
        let device = kp(1);
        let (_, pob) = view_with_burn(&device, 5);
        let req = WeakReqRequest::build(&device, Money::new(10), 5, pob, 30);
        let back = WeakReqRequest::from_canonical_bytes(&req.canonical_bytes()).unwrap();
        assert_eq!(back, req);
        assert_eq!(back.id(), req.id());
    }
}
