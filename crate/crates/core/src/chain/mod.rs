//! The block layer. Blocks checkpoint the message DAG and draw their
//! security either from their own header work or from the work bound
//! into the dumb messages they reference.

pub mod block;
pub mod state;

pub use block::{fresh_anchor_height, window_for, Block, BlockId, PreparedBlock};
pub use state::{chain_genesis_id, BlockError, ChainParams, ChainState, ForkRule, InsertReport};
