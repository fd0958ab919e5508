//! Turns the interaction graph into per-node trust scores.
//!
//! Two aggregators are provided. `average_score` is the naive baseline:
//! every rater contributes the mean of their ratings for the subject and
//! the score is the mean over raters. `netflow_score` asks how much value
//! an evaluator can push to the subject through the graph, normalised by
//! the evaluator's own spending, which makes fabricated praise expensive:
//! an edge only helps if real capacity connects it back to the evaluator.

use crate::keys::NodeId;
use crate::trade::feedback::TradeRecord;

use super::graph::InteractionGraph;

/// Max-flow from `subject` to `evaluator`, normalised by the evaluator's
/// outgoing capacity and clamped to `[0, 1]`.
///
/// The clamp matters: flow into the sink is bounded by the evaluator's
/// incoming capacity, which strangers can inflate at will, while the
/// denominator is capacity the evaluator spent itself. Anything above 1
/// carries no extra information.
pub fn netflow_score(graph: &InteractionGraph, subject: usize, evaluator: usize) -> f64 {
    if subject == evaluator || subject >= graph.node_count() || evaluator >= graph.node_count() {
        return 0.0;
    }
    let denom = graph.out_capacity(evaluator);
    if denom == 0 {
        return 0.0;
    }
    let flow = graph.max_flow_between(subject, evaluator);
    let score = flow as f64 / denom as f64;
    score.clamp(0.0, 1.0)
}

/// Mean of per-rater mean ratings for `subject`, in `[0, 1]`.
///
/// Grouping by rater first means a chatty rater with fifty reviews weighs
/// the same as a quiet one with a single review. Self-ratings are dropped.
/// No reviews at all scores zero.
pub fn average_score(records: &[TradeRecord], subject: &NodeId) -> f64 {
    let mut per_rater: Vec<(&NodeId, f64, u64)> = Vec::new();
    for record in records {
        if record.seller != *subject || record.buyer == *subject {
            continue;
        }
        match per_rater.iter_mut().find(|(rater, _, _)| **rater == record.buyer) {
            Some((_, sum, count)) => {
                *sum += record.rating.as_f64();
                *count += 1;
            }
            None => per_rater.push((&record.buyer, record.rating.as_f64(), 1)),
        }
    }
    if per_rater.is_empty() {
        return 0.0;
    }
    let total: f64 = per_rater.iter().map(|(_, sum, count)| sum / *count as f64).sum();
    total / per_rater.len() as f64
}

/// A node is trusted when its score strictly exceeds the threshold.
pub fn classify_trusted(score: f64, threshold: f64) -> bool {
    score > threshold
}

/// Counts of classification outcomes against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_count: u64,
}

impl Confusion {
    /// The positive class is the caller's choice; pass both flags in
    /// the same orientation.
    pub fn record(&mut self, predicted_positive: bool, actually_positive: bool) {
        match (predicted_positive, actually_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_count += 1,
        }
    }

    pub fn precision(&self) -> f64 {
        let denom = self.tp + self.fp;
        if denom == 0 {
            return 0.0;
        }
        self.tp as f64 / denom as f64
    }

    pub fn recall(&self) -> f64 {
        let denom = self.tp + self.fn_count;
        if denom == 0 {
            return 0.0;
        }
        self.tp as f64 / denom as f64
    }
}

/// Harmonic mean of precision and recall, zero when both are zero.
pub fn f_score(confusion: &Confusion) -> f64 {
    let p = confusion.precision();
    let r = confusion.recall();
    if p + r == 0.0 {
        return 0.0;
    }
    2.0 * p * r / (p + r)
}
