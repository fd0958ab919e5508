//! Scoring a finished marketplace run with both reputation
//! aggregators and grading the verdicts against planted truth.
//!
//! The averaging aggregator is absolute: a score above the trust
//! threshold means trusted. Netflow is relative, so the run calibrates
//! its acceptance bar from the population being judged: every
//! evaluator scores every subject by max flow from the subject to
//! itself, the subject's network-wide score is the lower median over
//! the jury, and the bar is the trust threshold times the honest
//! population's own lower-median score. Flow units scale with trade
//! volume, which is why the bar cannot be a fixed constant.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use braid_core::keys::NodeId;
use braid_core::reputation::graph::InteractionGraph;
use braid_core::reputation::score::{
    average_score, classify_trusted, f_score, netflow_score, Confusion,
};
use braid_core::trade::feedback::TradeRecord;

/// Verdicts of one evaluation pass over one record set.
pub struct Evaluation {
    /// Mean-of-per-rater-means score per subject.
    pub average: BTreeMap<NodeId, f64>,
    /// Lower-median netflow consensus per subject.
    pub netflow: BTreeMap<NodeId, f64>,
    /// Netflow scores below this bar read as untrusted.
    pub netflow_bar: f64,
    pub confusion_average: Confusion,
    pub confusion_netflow: Confusion,
    pub fscore_average: f64,
    pub fscore_netflow: f64,
}

/// Element (n - 1) / 2 of the sorted values, zero when empty. The
/// lower median resists inflation: an attacker must win over more
/// than half the jury before the consensus moves at all.
fn lower_median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    values[(values.len() - 1) / 2]
}

/// Vertices reachable from `start` along positive-capacity edges.
/// Flow from a subject only arrives at evaluators inside this set, so
/// everyone outside scores zero without running the flow solver.
fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

pub fn evaluate(
    records: &[TradeRecord],
    universe: &[NodeId],
    malicious: &BTreeSet<NodeId>,
    evaluators: &[NodeId],
    threshold: f64,
) -> Evaluation {
    let graph = InteractionGraph::from_records(records);
    let mut adj = vec![Vec::new(); graph.node_count()];
    for (u, v, c) in graph.edges() {
        if c > 0 {
            adj[u].push(v);
        }
    }
    let jury_idx: Vec<Option<usize>> = evaluators.iter().map(|e| graph.index_of(e)).collect();

    let mut average = BTreeMap::new();
    let mut netflow = BTreeMap::new();
    for subject in universe {
        average.insert(*subject, average_score(records, subject));

        let s = graph.index_of(subject);
        let reach = s.map(|s| reachable(&adj, s));
        let mut scores = Vec::with_capacity(evaluators.len());
        for (juror, t) in evaluators.iter().zip(&jury_idx) {
            if juror == subject {
                continue;
            }
            let score = match (s, t, &reach) {
                (Some(s), Some(t), Some(reach)) if reach[*t] => netflow_score(&graph, s, *t),
                _ => 0.0,
            };
            scores.push(score);
        }
        netflow.insert(*subject, lower_median(&mut scores));
    }

    let mut honest_scores: Vec<f64> = universe
        .iter()
        .filter(|id| !malicious.contains(*id))
        .map(|id| netflow[id])
        .collect();
    let netflow_bar = threshold * lower_median(&mut honest_scores);

    let mut confusion_average = Confusion::default();
    let mut confusion_netflow = Confusion::default();
    for subject in universe {
        let truth = malicious.contains(subject);
        confusion_average.record(!classify_trusted(average[subject], threshold), truth);
        confusion_netflow.record(netflow[subject] < netflow_bar, truth);
    }

    Evaluation {
        fscore_average: f_score(&confusion_average),
        fscore_netflow: f_score(&confusion_netflow),
        average,
        netflow,
        netflow_bar,
        confusion_average,
        confusion_netflow,
    }
}
