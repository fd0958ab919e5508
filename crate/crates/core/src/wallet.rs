//! A minimal wallet: tracks confirmed unspent outputs owned by one key
//! pair and builds signed payment and burn bundles.
//!
//! Selected inputs leave the wallet immediately; change returns only
//! when the ledger confirms the bundle and the owner credits it back.
//! That keeps the wallet honest about in-flight value.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::hash::HashDigest;
use crate::keys::{KeyPair, NodeId};
use crate::money::Money;
use crate::trade::bundle::{Address, Bundle, OutputRef, TxOutput};
use crate::weakreq::ProofOfBurn;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum WalletError {
    #[error("wallet holds {held} but the payment needs {needed}")]
    InsufficientFunds { held: Money, needed: Money },
}

pub struct Wallet {
    keys: KeyPair,
    utxos: BTreeMap<OutputRef, Money>,
}

impl Wallet {
    pub fn new(keys: KeyPair) -> Self {
        Wallet { keys, utxos: BTreeMap::new() }
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn node_id(&self) -> NodeId {
        self.keys.node_id()
    }

    /// Record a confirmed output owned by this wallet.
    pub fn credit(&mut self, r: OutputRef, value: Money) {
        self.utxos.insert(r, value);
    }

    /// Drop an output, e.g. when an external spend consumed it.
    pub fn forget(&mut self, r: &OutputRef) {
        self.utxos.remove(r);
    }

    pub fn balance(&self) -> Money {
        Money::sum(self.utxos.values().copied()).expect("wallet balance overflow")
    }

    /// Build a signed bundle paying `outputs`, selecting inputs in
    /// deterministic ref order and returning change to this wallet as a
    /// final output when needed. Inputs are removed immediately.
    pub fn pay(&mut self, mut outputs: Vec<TxOutput>) -> Result<Bundle, WalletError> {
        let needed = Money::sum(outputs.iter().map(|o| o.value)).expect("payment total overflow");
        let mut chosen: Vec<OutputRef> = Vec::new();
        let mut total = Money::ZERO;
        for (r, v) in self.utxos.iter() {
            if total >= needed {
                break;
            }
            chosen.push(*r);
            total = total.checked_add(*v).expect("wallet balance overflow");
        }
        if total < needed {
            return Err(WalletError::InsufficientFunds { held: self.balance(), needed });
        }
        let change = total.checked_sub(needed).expect("change underflow");
        if !change.is_zero() {
            outputs.push(TxOutput { address: Address::Node(self.node_id()), value: change });
        }
        for r in &chosen {
            self.utxos.remove(r);
        }
        let keys = self.keys.clone();
        let spends: Vec<(OutputRef, &KeyPair)> = chosen.iter().map(|r| (*r, &keys)).collect();
        Ok(Bundle::build(&spends, outputs))
    }

    /// Build a burn of `amount` and the proof referencing the burn
    /// output. The proof becomes usable once the bundle is confirmed.
    pub fn burn(&mut self, amount: Money) -> Result<(Bundle, ProofOfBurn), WalletError> {
        let bundle = self.pay(vec![TxOutput { address: Address::Burn, value: amount }])?;
        let pob = ProofOfBurn {
            burned_output: OutputRef { txid: bundle.id(), index: 0 },
            amount,
        };
        Ok((bundle, pob))
    }

    /// Expected change output ref of a bundle built by `pay`, if any.
    pub fn change_ref(&self, bundle: &Bundle) -> Option<(OutputRef, Money)> {
        let me = Address::Node(self.node_id());
        bundle
            .outputs
            .iter()
            .enumerate()
            .rev()
            .find(|(_, o)| o.address == me)
            .map(|(i, o)| (OutputRef { txid: bundle.id(), index: i as u32 }, o.value))
    }

    pub fn utxo_count(&self) -> usize {
        self.utxos.len()
    }
}

impl std::fmt::Debug for Wallet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Wallet({}.., {} utxos, {})", self.node_id().short(), self.utxos.len(), self.balance())
    }
}

/// Deterministic output ref for tests and genesis construction.
pub fn output_ref(txid: HashDigest, index: u32) -> OutputRef {
    OutputRef { txid, index }
}
