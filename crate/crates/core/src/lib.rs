//! Core protocol library for the braid ledger: a DAG message layer
//! secured by a proof-of-work blockchain, UTXO payment bundles, trade
//! and feedback protocols, and reputation aggregation back-ends.

#![forbid(unsafe_code)]

pub mod canonical;
pub mod chain;
pub mod hash;
pub mod keys;
pub mod ledger;
pub mod money;
pub mod node;
pub mod pow;
pub mod reputation;
pub mod tangle;
pub mod trade;
pub mod view;
pub mod wallet;
pub mod weakreq;
