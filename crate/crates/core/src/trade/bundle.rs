//! UTXO payment bundles. Outputs pay a node, the unspendable burn sink,
//! or a trade-session escrow; spent outputs are never reusable.

use thiserror::Error;

use crate::canonical::{decode_list, encode_list, Canonical, DecodeError, Reader, Writer};
use crate::hash::HashDigest;
use crate::keys::{KeyPair, NodeId, Signature};
use crate::money::Money;
use crate::view::LedgerView;

/// Destination of an output's value.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Address {
    /// Spendable by the named node.
    Node(NodeId),
    /// The canonical burn sink. No key exists, so the value is
    /// provably destroyed.
    Burn,
    /// Escrow for the trade session with this id; spendable by the
    /// session's buyer or mediator, payable only to buyer or seller.
    Escrow(HashDigest),
}

impl Canonical for Address {
    fn encode(&self, w: &mut Writer) {
        match self {
            Address::Node(id) => {
                w.u8(0);
                id.encode(w);
            }
            Address::Burn => w.u8(1),
            Address::Escrow(session) => {
                w.u8(2);
                session.encode(w);
            }
        }
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(Address::Node(NodeId::decode(r)?)),
            1 => Ok(Address::Burn),
            2 => Ok(Address::Escrow(HashDigest::decode(r)?)),
            tag => Err(DecodeError::BadTag { tag, context: "address" }),
        }
    }
}

/// Reference to one output of a prior bundle (or a block coinbase).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OutputRef {
    /// Id of the bundle that produced the output, or the header hash
    /// for a coinbase output.
    pub txid: HashDigest,
    pub index: u32,
}

impl Canonical for OutputRef {
    fn encode(&self, w: &mut Writer) {
        self.txid.encode(w);
        w.u32(self.index);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(OutputRef { txid: HashDigest::decode(r)?, index: r.u32()? })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct TxOutput {
    pub address: Address,
    pub value: Money,
}

impl Canonical for TxOutput {
    fn encode(&self, w: &mut Writer) {
        self.address.encode(w);
        self.value.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(TxOutput { address: Address::decode(r)?, value: Money::decode(r)? })
    }
}

/// One spent output plus the owner's signature over the bundle body.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct TxInput {
    pub output: OutputRef,
    pub signature: Signature,
}

impl Canonical for TxInput {
    fn encode(&self, w: &mut Writer) {
        self.output.encode(w);
        self.signature.encode(w);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(TxInput { output: OutputRef::decode(r)?, signature: Signature::decode(r)? })
    }
}

/// A value transfer. The genesis endowment is the only bundle with no
/// inputs; everywhere else at least one input is required and the input
/// total must cover the output total.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Bundle {
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
}

impl Bundle {
    /// The byte string every input owner signs: the spent refs and the
    /// outputs, without any signature material.
    pub fn body_bytes(inputs: &[OutputRef], outputs: &[TxOutput]) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"braid-bundle");
        encode_list(&mut w, inputs);
        encode_list(&mut w, outputs);
        w.into_bytes()
    }

    /// Build and sign a bundle. Each spent ref comes with the key pair
    /// that owns it.
    pub fn build(spends: &[(OutputRef, &KeyPair)], outputs: Vec<TxOutput>) -> Bundle {
        let refs: Vec<OutputRef> = spends.iter().map(|(r, _)| *r).collect();
        let body = Bundle::body_bytes(&refs, &outputs);
        let inputs = spends
            .iter()
            .map(|(r, kp)| TxInput { output: *r, signature: kp.sign(&body) })
            .collect();
        Bundle { inputs, outputs }
    }

    pub fn id(&self) -> HashDigest {
        HashDigest::compute(&self.canonical_bytes())
    }

    pub fn input_refs(&self) -> Vec<OutputRef> {
        self.inputs.iter().map(|i| i.output).collect()
    }

    pub fn total_output(&self) -> Option<Money> {
        Money::sum(self.outputs.iter().map(|o| o.value))
    }
}

impl Canonical for Bundle {
    fn encode(&self, w: &mut Writer) {
        encode_list(w, &self.inputs);
        encode_list(w, &self.outputs);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(Bundle { inputs: decode_list(r)?, outputs: decode_list(r)? })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BundleError {
    #[error("input {0:?} is already spent")]
    InputSpent(OutputRef),
    #[error("input {0:?} does not resolve to a confirmed unspent output")]
    InputUnknown(OutputRef),
    #[error("outputs total {outputs} exceeds inputs total {inputs}")]
    ValueOverdraw { inputs: Money, outputs: Money },
    #[error("signature on input {0:?} is not valid for the output owner")]
    BadSignature(OutputRef),
    #[error("escrow spend violates escrow rules: {0}")]
    EscrowViolation(&'static str),
}

/// Check a bundle against the confirmed UTXO view. Structural checks
/// first, then ownership, then conservation. Never mutates anything.
pub fn validate_bundle(bundle: &Bundle, view: &dyn LedgerView) -> Result<(), BundleError> {
    if bundle.inputs.is_empty() {
        // Only the genesis endowment may mint from nothing.
        return Err(BundleError::ValueOverdraw {
            inputs: Money::ZERO,
            outputs: bundle.total_output().unwrap_or(Money::ZERO),
        });
    }

    // Duplicate refs inside one bundle are a self double-spend.
    let refs = bundle.input_refs();
    for (i, r) in refs.iter().enumerate() {
        if refs[..i].contains(r) {
            return Err(BundleError::InputSpent(*r));
        }
    }

    let body = Bundle::body_bytes(&refs, &bundle.outputs);
    let mut input_total = Money::ZERO;
    let mut escrow_session = None;

    for input in &bundle.inputs {
        let Some(source) = view.output(&input.output) else {
            return Err(BundleError::InputUnknown(input.output));
        };
        if view.is_spent(&input.output) {
            return Err(BundleError::InputSpent(input.output));
        }
        match source.address {
            Address::Node(owner) => {
                if !input.signature.verify(&owner, &body) {
                    return Err(BundleError::BadSignature(input.output));
                }
            }
            // Burned value is not transferable: no key can satisfy it.
            Address::Burn => return Err(BundleError::BadSignature(input.output)),
            Address::Escrow(session) => {
                let Some(record) = view.escrow(&session) else {
                    return Err(BundleError::EscrowViolation("unknown escrow session"));
                };
                let signer = input.signature.claimed_signer();
                let authorized = signer == record.parties.buyer
                    || record.parties.mediator == Some(signer);
                if !authorized || !input.signature.verify(&signer, &body) {
                    return Err(BundleError::BadSignature(input.output));
                }
                escrow_session = Some((session, source.value));
            }
        }
        input_total = input_total
            .checked_add(source.value)
            .ok_or(BundleError::ValueOverdraw { inputs: Money::ZERO, outputs: Money::ZERO })?;
    }

    // An escrow spend disburses the full locked value to exactly one of
    // the session's buyer or seller, with no other inputs or outputs.
    if let Some((session, locked)) = escrow_session {
        let record = view.escrow(&session).expect("checked above");
        if bundle.inputs.len() != 1 || bundle.outputs.len() != 1 {
            return Err(BundleError::EscrowViolation("escrow spends are single-input single-output"));
        }
        let out = &bundle.outputs[0];
        if out.value != locked {
            return Err(BundleError::EscrowViolation("escrow must be disbursed in full"));
        }
        let allowed = out.address == Address::Node(record.parties.buyer)
            || out.address == Address::Node(record.parties.seller);
        if !allowed {
            return Err(BundleError::EscrowViolation("escrow pays only the buyer or the seller"));
        }
    }

    let output_total = bundle
        .total_output()
        .ok_or(BundleError::ValueOverdraw { inputs: input_total, outputs: Money::ZERO })?;
    if output_total > input_total {
        return Err(BundleError::ValueOverdraw { inputs: input_total, outputs: output_total });
    }
    Ok(())
}
