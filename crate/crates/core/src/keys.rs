//! Node identities and message authentication.
//!
//! A node identity is the SHA3-512 digest of its Ed25519 verification
//! key. Signatures travel with the verification key so any receiver can
//! check both the signature and the key-to-identity binding.

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use thiserror::Error;

use crate::canonical::{Canonical, DecodeError, Reader, Writer};
use crate::hash::{HashDigest, DIGEST_LEN};

pub const VERIFYING_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("verification key bytes do not describe a valid key")]
    InvalidKey,
}

/// A node identity: the digest of an Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub HashDigest);

impl NodeId {
    pub fn from_verifying_key_bytes(vk: &[u8; VERIFYING_KEY_LEN]) -> Self {
        NodeId(HashDigest::compute(vk))
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        HashDigest::from_hex(s).map(NodeId)
    }

    pub fn short(&self) -> String {
        self.0.short()
    }
}

impl std::fmt::Debug for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "NodeId({}..)", self.short())
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Canonical for NodeId {
    fn encode(&self, w: &mut Writer) {
        w.raw(&self.0 .0);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        let mut arr = [0u8; DIGEST_LEN];
        arr.copy_from_slice(r.raw(DIGEST_LEN)?);
        Ok(NodeId(HashDigest(arr)))
    }
}

/// A signing key pair. Construction is deterministic from seed bytes so
/// simulations can derive per-actor keys from a run seed.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_seed_bytes(seed: [u8; 32]) -> Self {
        KeyPair { signing: SigningKey::from_bytes(&seed) }
    }

    /// Derive a key pair from a run seed and an actor label. Distinct
    /// labels under the same seed yield independent keys.
    pub fn derive(run_seed: u64, label: &[u8]) -> Self {
        let digest = HashDigest::compute_parts(&[b"braid-key", &run_seed.to_le_bytes(), label]);
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest.0[..32]);
        KeyPair::from_seed_bytes(seed)
    }

    pub fn node_id(&self) -> NodeId {
        NodeId::from_verifying_key_bytes(&self.signing.verifying_key().to_bytes())
    }

    pub fn verifying_key_bytes(&self) -> [u8; VERIFYING_KEY_LEN] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature {
            verifying_key: self.verifying_key_bytes(),
            sig: self.signing.sign(message).to_bytes(),
        }
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeyPair({}..)", self.node_id().short())
    }
}

/// A detached signature carrying its verification key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    pub verifying_key: [u8; VERIFYING_KEY_LEN],
    pub sig: [u8; SIGNATURE_LEN],
}

impl Signature {
    /// True iff the signature is valid for `message` and the carried
    /// key hashes to `signer`.
    pub fn verify(&self, signer: &NodeId, message: &[u8]) -> bool {
        if NodeId::from_verifying_key_bytes(&self.verifying_key) != *signer {
            return false;
        }
        let Ok(vk) = VerifyingKey::from_bytes(&self.verifying_key) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&self.sig);
        vk.verify(message, &sig).is_ok()
    }

    /// Identity implied by the carried verification key.
    pub fn claimed_signer(&self) -> NodeId {
        NodeId::from_verifying_key_bytes(&self.verifying_key)
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature(by {}..)", self.claimed_signer().short())
    }
}

impl Canonical for Signature {
    fn encode(&self, w: &mut Writer) {
        w.raw(&self.verifying_key);
        w.raw(&self.sig);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        let mut verifying_key = [0u8; VERIFYING_KEY_LEN];
        verifying_key.copy_from_slice(r.raw(VERIFYING_KEY_LEN)?);
        let mut sig = [0u8; SIGNATURE_LEN];
        sig.copy_from_slice(r.raw(SIGNATURE_LEN)?);
        Ok(Signature { verifying_key, sig })
    }
}
