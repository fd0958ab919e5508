//! Reputation aggregation over settled, reviewed trades.
//!
//! Two aggregators read the same trade records. The average backend
//! takes each rater's mean rating of a subject and averages those
//! means. The flow backend treats every trade as a directed vouch,
//! buyer to seller, weighted by money times rating, and scores a
//! subject by how much flow it can push to the evaluator through that
//! graph, so fabricating vouches among sock puppets adds nothing an
//! evaluator can see.

pub mod flow;
pub mod graph;
pub mod score;

pub use flow::{max_flow, min_cut_by_enumeration, Dinic};
pub use graph::InteractionGraph;
pub use score::{average_score, classify_trusted, f_score, netflow_score, Confusion};
