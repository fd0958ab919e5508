//! Buyer-seller trade sessions.
//!
//! A session starts with a buyer request and either ends denied, runs
//! the plain flow (ack, lock, deliver, release), or negotiates a
//! mediator first: the buyer proposes candidates, the seller answers
//! with its preferences, and the buyer's pick must lie in both lists.
//! Funds sit in a session escrow between lock and release. Either side
//! of a mediated trade may complain, putting the mediator in charge of
//! the locked money. Feedback is permitted once, after a release, and
//! only if the seller did not opt out.

use thiserror::Error;

use crate::canonical::{Canonical, DecodeError, Reader, Writer};
use crate::hash::HashDigest;
use crate::keys::{KeyPair, NodeId, Signature};
use crate::money::Money;

pub type SessionId = HashDigest;

/// Derive a session id from the parties and a buyer-chosen nonce.
pub fn session_id(buyer: &NodeId, seller: &NodeId, nonce: u64) -> SessionId {
    let mut w = Writer::new();
    w.raw(b"braid-trade-session");
    buyer.encode(&mut w);
    seller.encode(&mut w);
    w.u64(nonce);
    HashDigest::compute(&w.into_bytes())
}

/// The seller's signed trade permission. Travels with the ack and is
/// later embedded in the feedback record, proving the seller agreed to
/// the trade and did or did not allow a review.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct AckToken {
    pub session: SessionId,
    pub buyer: NodeId,
    pub allow_feedback: bool,
    pub signature: Signature,
}

impl AckToken {
    fn body_bytes(session: &SessionId, buyer: &NodeId, allow_feedback: bool) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"braid-trade-ack");
        session.encode(&mut w);
        buyer.encode(&mut w);
        w.bool(allow_feedback);
        w.into_bytes()
    }

    pub fn build(seller_keys: &KeyPair, session: SessionId, buyer: NodeId, allow_feedback: bool) -> Self {
        let body = Self::body_bytes(&session, &buyer, allow_feedback);
        AckToken { session, buyer, allow_feedback, signature: seller_keys.sign(&body) }
    }

    pub fn verify(&self, seller: &NodeId) -> bool {
        let body = Self::body_bytes(&self.session, &self.buyer, self.allow_feedback);
        self.signature.verify(seller, &body)
    }
}

impl Canonical for AckToken {
    fn encode(&self, w: &mut Writer) {
        self.session.encode(w);
        self.buyer.encode(w);
        w.bool(self.allow_feedback);
        self.signature.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(AckToken {
            session: SessionId::decode(r)?,
            buyer: NodeId::decode(r)?,
            allow_feedback: r.bool()?,
            signature: Signature::decode(r)?,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TradeState {
    Requested,
    Acked,
    MediatorProposed,
    MediatorChosen,
    FundsLocked,
    Delivered,
    Complained,
    MediatorReleased,
    BuyerReleased,
    Reviewed,
    Denied,
    Expired,
}

impl TradeState {
    /// No event leaves a terminal state.
    pub fn is_terminal(&self) -> bool {
        matches!(self, TradeState::Reviewed | TradeState::Denied | TradeState::Expired)
    }

    /// States with money sitting in escrow.
    pub fn holds_funds(&self) -> bool {
        matches!(self, TradeState::FundsLocked | TradeState::Delivered | TradeState::Complained)
    }

    /// States from which feedback may follow.
    pub fn is_release(&self) -> bool {
        matches!(self, TradeState::BuyerReleased | TradeState::MediatorReleased)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TradeSession {
    pub id: SessionId,
    pub buyer: NodeId,
    pub seller: NodeId,
    pub mediator: Option<NodeId>,
    pub state: TradeState,
    pub price: Money,
    /// Seller's opt-out, fixed at ack time.
    pub nofeedback: bool,
    /// Mediator candidates the buyer proposed; empty for the plain flow.
    pub buyer_candidates: Vec<NodeId>,
    /// Mediator preferences the seller answered with.
    pub seller_prefs: Vec<NodeId>,
    /// Id of the confirmed escrow lock bundle.
    pub escrow_bundle: Option<HashDigest>,
    pub ack_token: Option<AckToken>,
    /// True when a mediator decision paid the seller.
    pub mediator_paid_seller: Option<bool>,
    pub created_at: u64,
    pub updated_at: u64,
    pub timeout_ticks: u64,
}

impl TradeSession {
    /// Open a session from the buyer's request. A non-empty candidate
    /// list selects the mediated flow.
    pub fn open(
        buyer: NodeId,
        seller: NodeId,
        price: Money,
        buyer_candidates: Vec<NodeId>,
        nonce: u64,
        now: u64,
        timeout_ticks: u64,
    ) -> Self {
        TradeSession {
            id: session_id(&buyer, &seller, nonce),
            buyer,
            seller,
            mediator: None,
            state: TradeState::Requested,
            price,
            nofeedback: false,
            buyer_candidates,
            seller_prefs: Vec::new(),
            escrow_bundle: None,
            ack_token: None,
            mediator_paid_seller: None,
            created_at: now,
            updated_at: now,
            timeout_ticks,
        }
    }
}

/// Events are attributed to a sender; the machine checks the sender
/// against the role the current state expects.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum TradeEvent {
    SellerAck { nofeedback: bool, mediator_prefs: Vec<NodeId>, token: AckToken },
    SellerDeny,
    BuyerPickMediator(NodeId),
    BuyerLockFunds { lock_bundle: HashDigest, amount: Money },
    SellerDeliver,
    BuyerRelease,
    Complain,
    MediatorDecide { pay_seller: bool },
    BuyerFeedback,
    Timeout,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TradeError {
    #[error("event {event} is not legal in state {state:?}")]
    IllegalTransition { state: TradeState, event: &'static str },
    #[error("sender is not the party allowed to act here")]
    UnauthorizedRole,
    #[error("picked mediator is not in both parties' lists")]
    MediatorNotInIntersection,
}

fn event_name(e: &TradeEvent) -> &'static str {
    match e {
        TradeEvent::SellerAck { .. } => "SellerAck",
        TradeEvent::SellerDeny => "SellerDeny",
        TradeEvent::BuyerPickMediator(_) => "BuyerPickMediator",
        TradeEvent::BuyerLockFunds { .. } => "BuyerLockFunds",
        TradeEvent::SellerDeliver => "SellerDeliver",
        TradeEvent::BuyerRelease => "BuyerRelease",
        TradeEvent::Complain => "Complain",
        TradeEvent::MediatorDecide { .. } => "MediatorDecide",
        TradeEvent::BuyerFeedback => "BuyerFeedback",
        TradeEvent::Timeout => "Timeout",
    }
}

/// Apply one event. Pure: returns the updated session, the input is
/// untouched on error.
pub fn trade_step(
    session: &TradeSession,
    sender: NodeId,
    event: &TradeEvent,
    now: u64,
) -> Result<TradeSession, TradeError> {
    use TradeEvent as E;
    use TradeState as S;

    let illegal = || TradeError::IllegalTransition { state: session.state, event: event_name(event) };
    let mut next = session.clone();
    next.updated_at = now;

    match (&session.state, event) {
        // Timeout is checked first: it applies in any non-terminal,
        // non-release state once the session has sat idle long enough.
        (state, E::Timeout) => {
            if state.is_terminal() || state.is_release() {
                return Err(illegal());
            }
            if now < session.updated_at.saturating_add(session.timeout_ticks) {
                return Err(illegal());
            }
            next.state = S::Expired;
        }

        (S::Requested, E::SellerAck { nofeedback, mediator_prefs, token }) => {
            if sender != session.seller {
                return Err(TradeError::UnauthorizedRole);
            }
            next.nofeedback = *nofeedback;
            next.ack_token = Some(*token);
            if session.buyer_candidates.is_empty() {
                next.state = S::Acked;
            } else {
                next.seller_prefs = mediator_prefs.clone();
                next.state = S::MediatorProposed;
            }
        }
        (S::Requested, E::SellerDeny) => {
            if sender != session.seller {
                return Err(TradeError::UnauthorizedRole);
            }
            next.state = S::Denied;
        }

        (S::MediatorProposed, E::BuyerPickMediator(pick)) => {
            if sender != session.buyer {
                return Err(TradeError::UnauthorizedRole);
            }
            if !(session.buyer_candidates.contains(pick) && session.seller_prefs.contains(pick)) {
                return Err(TradeError::MediatorNotInIntersection);
            }
            next.mediator = Some(*pick);
            next.state = S::MediatorChosen;
        }

        (S::Acked | S::MediatorChosen, E::BuyerLockFunds { lock_bundle, amount }) => {
            if sender != session.buyer {
                return Err(TradeError::UnauthorizedRole);
            }
            if *amount != session.price {
                return Err(illegal());
            }
            next.escrow_bundle = Some(*lock_bundle);
            next.state = S::FundsLocked;
        }

        (S::FundsLocked, E::SellerDeliver) => {
            if sender != session.seller {
                return Err(TradeError::UnauthorizedRole);
            }
            next.state = S::Delivered;
        }

        (S::Delivered, E::BuyerRelease) => {
            if sender != session.buyer {
                return Err(TradeError::UnauthorizedRole);
            }
            next.state = S::BuyerReleased;
        }

        (S::FundsLocked | S::Delivered, E::Complain) => {
            if sender != session.buyer && sender != session.seller {
                return Err(TradeError::UnauthorizedRole);
            }
            // Without a mediator nobody can arbitrate a complaint.
            if session.mediator.is_none() {
                return Err(illegal());
            }
            next.state = S::Complained;
        }

        (S::Complained, E::MediatorDecide { pay_seller }) => {
            if Some(sender) != session.mediator {
                return Err(TradeError::UnauthorizedRole);
            }
            next.mediator_paid_seller = Some(*pay_seller);
            next.state = S::MediatorReleased;
        }

        (S::BuyerReleased | S::MediatorReleased, E::BuyerFeedback) => {
            if sender != session.buyer {
                return Err(TradeError::UnauthorizedRole);
            }
            if session.nofeedback {
                return Err(illegal());
            }
            next.state = S::Reviewed;
        }

        _ => return Err(illegal()),
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(n: u8) -> KeyPair {
        KeyPair::from_seed_bytes([n; 32])
    }

    fn open(buyer: &KeyPair, seller: &KeyPair, candidates: Vec<NodeId>) -> TradeSession {
        TradeSession::open(buyer.node_id(), seller.node_id(), Money::new(10), candidates, 1, 0, 100)
    }

    fn ack(seller: &KeyPair, s: &TradeSession, nofeedback: bool, prefs: Vec<NodeId>) -> TradeEvent {
        TradeEvent::SellerAck {
            nofeedback,
            mediator_prefs: prefs,
            token: AckToken::build(seller, s.id, s.buyer, !nofeedback),
        }
    }

    #[test]
    fn plain_happy_path_reaches_reviewed() {
        let buyer = kp(1);
        let seller = kp(2);
        let s0 = open(&buyer, &seller, vec![]);
        let s1 = trade_step(&s0, seller.node_id(), &ack(&seller, &s0, false, vec![]), 1).unwrap();
        assert_eq!(s1.state, TradeState::Acked);
        let lock = TradeEvent::BuyerLockFunds { lock_bundle: HashDigest::compute(b"lock"), amount: Money::new(10) };
        let s2 = trade_step(&s1, buyer.node_id(), &lock, 2).unwrap();
        assert_eq!(s2.state, TradeState::FundsLocked);
        let s3 = trade_step(&s2, seller.node_id(), &TradeEvent::SellerDeliver, 3).unwrap();
        assert_eq!(s3.state, TradeState::Delivered);
        let s4 = trade_step(&s3, buyer.node_id(), &TradeEvent::BuyerRelease, 4).unwrap();
        assert_eq!(s4.state, TradeState::BuyerReleased);
        let s5 = trade_step(&s4, buyer.node_id(), &TradeEvent::BuyerFeedback, 5).unwrap();
        assert_eq!(s5.state, TradeState::Reviewed);
        assert!(s5.state.is_terminal());
    }

    #[test]
    fn mediated_flow_negotiates_the_intersection() {
        let buyer = kp(1);
        let seller = kp(2);
        let m1 = kp(3).node_id();
        let m2 = kp(4).node_id();
        let m3 = kp(5).node_id();

        let s0 = open(&buyer, &seller, vec![m1, m2]);
        let s1 = trade_step(&s0, seller.node_id(), &ack(&seller, &s0, false, vec![m2, m3]), 1).unwrap();
        assert_eq!(s1.state, TradeState::MediatorProposed);

        // m1 is only in the buyer's list, m3 only in the seller's.
        for bad in [m1, m3] {
            assert_eq!(
                trade_step(&s1, buyer.node_id(), &TradeEvent::BuyerPickMediator(bad), 2),
                Err(TradeError::MediatorNotInIntersection)
            );
        }
        let s2 = trade_step(&s1, buyer.node_id(), &TradeEvent::BuyerPickMediator(m2), 2).unwrap();
        assert_eq!(s2.state, TradeState::MediatorChosen);
        assert_eq!(s2.mediator, Some(m2));
    }

    #[test]
    fn complaint_routes_through_the_mediator() {
        let buyer = kp(1);
        let seller = kp(2);
        let mediator = kp(3);

        let s0 = open(&buyer, &seller, vec![mediator.node_id()]);
        let s1 = trade_step(&s0, seller.node_id(), &ack(&seller, &s0, false, vec![mediator.node_id()]), 1).unwrap();
        let s2 = trade_step(&s1, buyer.node_id(), &TradeEvent::BuyerPickMediator(mediator.node_id()), 2).unwrap();
        let lock = TradeEvent::BuyerLockFunds { lock_bundle: HashDigest::compute(b"lock"), amount: Money::new(10) };
        let s3 = trade_step(&s2, buyer.node_id(), &lock, 3).unwrap();

        // Either side may complain while funds are held.
        let s4 = trade_step(&s3, seller.node_id(), &TradeEvent::Complain, 4).unwrap();
        assert_eq!(s4.state, TradeState::Complained);

        // Only the mediator decides.
        assert_eq!(
            trade_step(&s4, buyer.node_id(), &TradeEvent::MediatorDecide { pay_seller: false }, 5),
            Err(TradeError::UnauthorizedRole)
        );
        let s5 = trade_step(&s4, mediator.node_id(), &TradeEvent::MediatorDecide { pay_seller: false }, 5).unwrap();
        assert_eq!(s5.state, TradeState::MediatorReleased);
        assert_eq!(s5.mediator_paid_seller, Some(false));

        // Feedback is allowed after a mediator release too.
        let s6 = trade_step(&s5, buyer.node_id(), &TradeEvent::BuyerFeedback, 6).unwrap();
        assert_eq!(s6.state, TradeState::Reviewed);
    }

    #[test]
    fn complaint_without_mediator_is_illegal() {
        let buyer = kp(1);
        let seller = kp(2);
        let s0 = open(&buyer, &seller, vec![]);
        let s1 = trade_step(&s0, seller.node_id(), &ack(&seller, &s0, false, vec![]), 1).unwrap();
        let lock = TradeEvent::BuyerLockFunds { lock_bundle: HashDigest::compute(b"lock"), amount: Money::new(10) };
        let s2 = trade_step(&s1, buyer.node_id(), &lock, 2).unwrap();
        assert!(matches!(
            trade_step(&s2, buyer.node_id(), &TradeEvent::Complain, 3),
            Err(TradeError::IllegalTransition { .. })
        ));
    }

    #[test]
    fn nofeedback_blocks_review() {
        let buyer = kp(1);
        let seller = kp(2);
        let s0 = open(&buyer, &seller, vec![]);
        let s1 = trade_step(&s0, seller.node_id(), &ack(&seller, &s0, true, vec![]), 1).unwrap();
        assert!(s1.nofeedback);
        let lock = TradeEvent::BuyerLockFunds { lock_bundle: HashDigest::compute(b"lock"), amount: Money::new(10) };
        let s2 = trade_step(&s1, buyer.node_id(), &lock, 2).unwrap();
        let s3 = trade_step(&s2, seller.node_id(), &TradeEvent::SellerDeliver, 3).unwrap();
        let s4 = trade_step(&s3, buyer.node_id(), &TradeEvent::BuyerRelease, 4).unwrap();
        assert!(matches!(
            trade_step(&s4, buyer.node_id(), &TradeEvent::BuyerFeedback, 5),
            Err(TradeError::IllegalTransition { .. })
        ));
    }

    #[test]
    fn deny_is_terminal_and_produces_no_reputation_path() {
        let buyer = kp(1);
        let seller = kp(2);
        let s0 = open(&buyer, &seller, vec![]);
        let s1 = trade_step(&s0, seller.node_id(), &TradeEvent::SellerDeny, 1).unwrap();
        assert_eq!(s1.state, TradeState::Denied);
        assert!(s1.state.is_terminal());
        assert!(matches!(
            trade_step(&s1, buyer.node_id(), &TradeEvent::BuyerFeedback, 2),
            Err(TradeError::IllegalTransition { .. })
        ));
    }

    #[test]
    fn wrong_roles_are_rejected() {
        let buyer = kp(1);
        let seller = kp(2);
        let outsider = kp(9);
        let s0 = open(&buyer, &seller, vec![]);
        // Buyer cannot ack its own request; outsiders cannot either.
        assert_eq!(
            trade_step(&s0, buyer.node_id(), &ack(&seller, &s0, false, vec![]), 1),
            Err(TradeError::UnauthorizedRole)
        );
        assert_eq!(
            trade_step(&s0, outsider.node_id(), &TradeEvent::SellerDeny, 1),
            Err(TradeError::UnauthorizedRole)
        );
        let s1 = trade_step(&s0, seller.node_id(), &ack(&seller, &s0, false, vec![]), 1).unwrap();
        let lock = TradeEvent::BuyerLockFunds { lock_bundle: HashDigest::compute(b"lock"), amount: Money::new(10) };
        assert_eq!(
            trade_step(&s1, seller.node_id(), &lock, 2),
            Err(TradeError::UnauthorizedRole)
        );
    }

    #[test]
    fn lock_must_match_the_agreed_price() {
        let buyer = kp(1);
        let seller = kp(2);
        let s0 = open(&buyer, &seller, vec![]);
        let s1 = trade_step(&s0, seller.node_id(), &ack(&seller, &s0, false, vec![]), 1).unwrap();
        let short = TradeEvent::BuyerLockFunds { lock_bundle: HashDigest::compute(b"lock"), amount: Money::new(9) };
        assert!(matches!(
            trade_step(&s1, buyer.node_id(), &short, 2),
            Err(TradeError::IllegalTransition { .. })
        ));
    }

    #[test]
    fn timeout_expires_idle_sessions() {
        let buyer = kp(1);
        let seller = kp(2);
        let s0 = open(&buyer, &seller, vec![]);
        assert!(matches!(
            trade_step(&s0, buyer.node_id(), &TradeEvent::Timeout, 99),
            Err(TradeError::IllegalTransition { .. })
        ));
        let s1 = trade_step(&s0, buyer.node_id(), &TradeEvent::Timeout, 100).unwrap();
        assert_eq!(s1.state, TradeState::Expired);

        // Terminal and released states do not expire.
        assert!(matches!(
            trade_step(&s1, buyer.node_id(), &TradeEvent::Timeout, 500),
            Err(TradeError::IllegalTransition { .. })
        ));
    }

    #[test]
    fn ack_token_verifies_only_for_the_seller() {
        let buyer = kp(1);
        let seller = kp(2);
        let session = session_id(&buyer.node_id(), &seller.node_id(), 7);
        let token = AckToken::build(&seller, session, buyer.node_id(), true);
        assert!(token.verify(&seller.node_id()));
        assert!(!token.verify(&buyer.node_id()));
        let mut tampered = token;
        tampered.allow_feedback = false;
        assert!(!tampered.verify(&seller.node_id()));
    }
}
