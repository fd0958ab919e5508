//! Buyer feedback records and the checks that keep them honest.
//!
//! A feedback message rates one seller for one paid session. Its
//! validity hinges on the ack token the seller issued when agreeing to
//! the trade: a rating without a matching token is slander, a token
//! with feedback disallowed was an opt-out, and a rating for a session
//! whose escrow never paid out carries no weight. Each session accepts
//! at most one feedback record.

use thiserror::Error;

use crate::canonical::{Canonical, DecodeError, Reader, Writer};
use crate::hash::HashDigest;
use crate::keys::{KeyPair, NodeId, Signature};
use crate::money::Money;
use crate::trade::session::{AckToken, SessionId};
use crate::view::LedgerView;

/// A rating in thousandths, 0 through 1000.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Rating(u16);

impl Rating {
    pub const MAX_MILLI: u16 = 1000;

    pub fn try_new(milli: u16) -> Option<Self> {
        (milli <= Self::MAX_MILLI).then_some(Rating(milli))
    }

    pub fn milli(&self) -> u16 {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.0) / 1000.0
    }
}

impl Canonical for Rating {
    fn encode(&self, w: &mut Writer) {
        w.u16(self.0);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        let milli = r.u16()?;
        Rating::try_new(milli).ok_or(DecodeError::BadValue("rating above 1000"))
    }
}

/// The buyer's signed rating for one completed session.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Feedback {
    pub session: SessionId,
    pub buyer: NodeId,
    pub seller: NodeId,
    pub rating: Rating,
    /// Id of the escrow lock bundle that paid for the trade.
    pub payment_ref: HashDigest,
    pub ack: AckToken,
    pub signature: Signature,
}

impl Feedback {
    fn body_bytes(
        session: &SessionId,
        buyer: &NodeId,
        seller: &NodeId,
        rating: Rating,
        payment_ref: &HashDigest,
        ack: &AckToken,
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"braid-feedback");
        session.encode(&mut w);
        buyer.encode(&mut w);
        seller.encode(&mut w);
        rating.encode(&mut w);
        payment_ref.encode(&mut w);
        ack.encode(&mut w);
        w.into_bytes()
    }

    pub fn build(
        buyer_keys: &KeyPair,
        session: SessionId,
        seller: NodeId,
        rating: Rating,
        payment_ref: HashDigest,
        ack: AckToken,
    ) -> Self {
        let buyer = buyer_keys.node_id();
        let body = Self::body_bytes(&session, &buyer, &seller, rating, &payment_ref, &ack);
        Feedback {
            session,
            buyer,
            seller,
            rating,
            payment_ref,
            ack,
            signature: buyer_keys.sign(&body),
        }
    }

    pub fn verify_signature(&self) -> bool {
        let body = Self::body_bytes(
            &self.session,
            &self.buyer,
            &self.seller,
            self.rating,
            &self.payment_ref,
            &self.ack,
        );
        self.signature.verify(&self.buyer, &body)
    }
}

impl Canonical for Feedback {
    fn encode(&self, w: &mut Writer) {
        self.session.encode(w);
        self.buyer.encode(w);
        self.seller.encode(w);
        self.rating.encode(w);
        self.payment_ref.encode(w);
        self.ack.encode(w);
        self.signature.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(Feedback {
            session: SessionId::decode(r)?,
            buyer: NodeId::decode(r)?,
            seller: NodeId::decode(r)?,
            rating: Rating::decode(r)?,
            payment_ref: HashDigest::decode(r)?,
            ack: AckToken::decode(r)?,
            signature: Signature::decode(r)?,
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FeedbackError {
    #[error("session already has a feedback record")]
    BallotStuffing,
    #[error("no confirmed escrow payment matches this feedback")]
    NoPayment,
    #[error("ack token missing, mismatched, or not signed by the seller")]
    SellerNeverAcked,
    #[error("seller opted out of feedback for this session")]
    FeedbackOptedOut,
    #[error("escrow was never released to a party")]
    NotReleased,
    #[error("feedback signature invalid")]
    BadSignature,
    #[error("buyer and seller are the same node")]
    SelfRating,
}

/// Check a feedback record against ledger state. Order matters for
/// error reporting: identity problems before token problems before
/// payment problems before duplication.
pub fn validate_feedback(fb: &Feedback, view: &dyn LedgerView) -> Result<(), FeedbackError> {
    if fb.buyer == fb.seller {
        return Err(FeedbackError::SelfRating);
    }
    if !fb.verify_signature() {
        return Err(FeedbackError::BadSignature);
    }
    // The token must name this session and buyer and carry the
    // seller's signature; anything else is a fabricated rating.
    if fb.ack.session != fb.session || fb.ack.buyer != fb.buyer || !fb.ack.verify(&fb.seller) {
        return Err(FeedbackError::SellerNeverAcked);
    }
    if !fb.ack.allow_feedback {
        return Err(FeedbackError::FeedbackOptedOut);
    }
    let Some(escrow) = view.escrow(&fb.session) else {
        return Err(FeedbackError::NoPayment);
    };
    if escrow.lock_bundle != fb.payment_ref
        || escrow.parties.buyer != fb.buyer
        || escrow.parties.seller != fb.seller
    {
        return Err(FeedbackError::NoPayment);
    }
    match escrow.outcome {
        Some(outcome) if outcome.is_release() => {}
        _ => return Err(FeedbackError::NotReleased),
    }
    if view.feedback_recorded(&fb.session) {
        return Err(FeedbackError::BallotStuffing);
    }
    Ok(())
}

/// One settled, reviewed trade, as consumed by the reputation graph.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TradeRecord {
    pub buyer: NodeId,
    pub seller: NodeId,
    pub amount: Money,
    pub rating: Rating,
}
