//! The trading stack: UTXO payment bundles, identity onboarding with
//! burned stake, escrowed buyer-seller sessions with optional mediation,
//! and payment-coupled feedback records.

pub mod bundle;
pub mod feedback;
pub mod initial;
pub mod session;
