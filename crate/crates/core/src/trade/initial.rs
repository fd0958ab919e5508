//! Identity onboarding. A newcomer publishes a service descriptor and a
//! content pointer, stakes a burn, and proves work. Registration makes
//! the identity discoverable; its reputation starts at zero regardless
//! of stake.

use thiserror::Error;

use crate::canonical::{Canonical, DecodeError, Reader, Writer};
use crate::keys::{KeyPair, NodeId, Signature};
use crate::money::Money;
use crate::pow::{pow_solve, pow_verify, PowError, PowSolution};
use crate::view::LedgerView;
use crate::weakreq::{validate_pob, PobError, ProofOfBurn};

/// Floors a newcomer must clear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OnboardingParams {
    pub pow_bits: u32,
    pub burn_floor: Money,
}

impl Default for OnboardingParams {
    fn default() -> Self {
        OnboardingParams { pow_bits: 12, burn_floor: Money::new(1) }
    }
}

/// Onboarding record: service discovery data plus stake evidence.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct InitialMessage {
    pub sender: NodeId,
    pub service_descriptor: String,
    /// Opaque content address of the full service description.
    pub content_pointer: String,
    pub pob: ProofOfBurn,
    pub pow: PowSolution,
    pub signature: Signature,
}

impl InitialMessage {
    fn body_bytes(
        sender: &NodeId,
        service_descriptor: &str,
        content_pointer: &str,
        pob: &ProofOfBurn,
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"braid-initial");
        sender.encode(&mut w);
        w.str(service_descriptor);
        w.str(content_pointer);
        pob.encode(&mut w);
        w.into_bytes()
    }

    /// Sign the record, then work the signed bytes.
    pub fn build(
        keys: &KeyPair,
        service_descriptor: String,
        content_pointer: String,
        pob: ProofOfBurn,
        pow_bits: u32,
        start_nonce: u64,
    ) -> Result<Self, PowError> {
        let sender = keys.node_id();
        let body = Self::body_bytes(&sender, &service_descriptor, &content_pointer, &pob);
        let signature = keys.sign(&body);
        let mut preimage = body;
        preimage.extend_from_slice(&signature.canonical_bytes());
        let pow = pow_solve(&preimage, pow_bits, start_nonce)?;
        Ok(InitialMessage { sender, service_descriptor, content_pointer, pob, pow, signature })
    }

    fn pow_preimage(&self) -> Vec<u8> {
        let mut preimage =
            Self::body_bytes(&self.sender, &self.service_descriptor, &self.content_pointer, &self.pob);
        preimage.extend_from_slice(&self.signature.canonical_bytes());
        preimage
    }

    pub fn verify_signature(&self) -> bool {
        let body = Self::body_bytes(&self.sender, &self.service_descriptor, &self.content_pointer, &self.pob);
        self.signature.verify(&self.sender, &body)
    }
}

impl Canonical for InitialMessage {
    fn encode(&self, w: &mut Writer) {
        self.sender.encode(w);
        w.str(&self.service_descriptor);
        w.str(&self.content_pointer);
        self.pob.encode(w);
        self.pow.encode(w);
        self.signature.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(InitialMessage {
            sender: NodeId::decode(r)?,
            service_descriptor: r.str()?,
            content_pointer: r.str()?,
            pob: ProofOfBurn::decode(r)?,
            pow: PowSolution::decode(r)?,
            signature: Signature::decode(r)?,
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum InitialError {
    #[error("onboarding stake too weak: {0}")]
    WeakOnboarding(&'static str),
    #[error("identity is already registered")]
    DuplicateIdentity,
    #[error("onboarding signature is invalid")]
    BadSignature,
    #[error("onboarding proof of work does not verify")]
    BadPow,
    #[error("onboarding burn rejected: {0}")]
    Pob(PobError),
}

/// Admission check for an onboarding record. Registration itself (the
/// registry write) happens when the carrying message confirms.
pub fn validate_initial(
    msg: &InitialMessage,
    params: &OnboardingParams,
    view: &dyn LedgerView,
) -> Result<(), InitialError> {
    if !msg.verify_signature() {
        return Err(InitialError::BadSignature);
    }
    if !pow_verify(&msg.pow_preimage(), &msg.pow) {
        return Err(InitialError::BadPow);
    }
    if msg.pow.difficulty_bits < params.pow_bits {
        return Err(InitialError::WeakOnboarding("proof of work below the onboarding difficulty"));
    }
    match validate_pob(&msg.pob, &msg.sender, params.burn_floor, view) {
        Ok(()) => {}
        Err(PobError::BelowFloor { .. }) => {
            return Err(InitialError::WeakOnboarding("burn below the onboarding floor"))
        }
        Err(e) => return Err(InitialError::Pob(e)),
    }
    if view.identity_registered(&msg.sender) {
        return Err(InitialError::DuplicateIdentity);
    }
    Ok(())
}
