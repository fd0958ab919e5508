//! The DAG message layer. Every protocol object travels inside a
//! [`message::TangleMessage`]; [`state::TangleState`] holds the graph,
//! cumulative weights, confirmation, and conflict bookkeeping.

pub mod message;
pub mod state;

pub use message::{Envelope, MessageId, MessageKind, TangleMessage};
pub use state::{genesis_id, AttachError, AttachReport, ConflictStatus, TangleParams, TangleState};
