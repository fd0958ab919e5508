//! Run results and their serialized forms.
//!
//! A scenario produces one [`MetricsReport`] plus the artifact texts
//! derived from it. Rendering is the determinism boundary: identical
//! reports must serialize to identical bytes, so every map is ordered,
//! every float is printed with a fixed precision, and nothing in here
//! consults the clock or the platform.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use braid_core::reputation::score::Confusion;

use crate::config::AttackKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AttackTally {
    /// Scripted attack actions taken.
    pub attempts: u64,
    /// Actions the protocol failed to stop.
    pub successes: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SupplySummary {
    pub minted: u64,
    pub circulating: u64,
    pub burned: u64,
    pub fees: u64,
}

/// Per-class throughput: confirmed messages per tick, plus the emitter
/// population behind the class for the CSV's nodes column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TpsLine {
    pub nodes: u32,
    pub tps: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub config_digest: String,
    pub elapsed_ticks: u64,
    pub supply: SupplySummary,
    pub tps: BTreeMap<String, TpsLine>,
    /// Aggregator name to F-score over malicious-node detection.
    pub fscore: BTreeMap<String, f64>,
    /// Aggregator name to raw classification counts, so the scores can
    /// be recomputed from the report alone.
    pub confusion: BTreeMap<String, Confusion>,
    pub attack_outcomes: BTreeMap<AttackKind, AttackTally>,
    /// Final wallet balances, one line per funded participant.
    pub balances: BTreeMap<String, u64>,
    /// Aggregator name to per-node score under full protections.
    pub reputations: BTreeMap<String, BTreeMap<String, f64>>,
    /// Scenario-specific measurements, rendered as observed lines.
    pub observed: BTreeMap<String, String>,
    /// Set when the run had no malicious cohort, leaving the positive
    /// class of the F-score undefined.
    pub no_positives: bool,
}

fn header(seed: u64, digest: &str) -> String {
    format!("# seed={seed} config_digest={digest}\n")
}

impl MetricsReport {
    pub fn render_report(&self) -> String {
        let mut out = header(self.seed, &self.config_digest);
        let _ = writeln!(out, "scenario {}", self.scenario);
        let _ = writeln!(out, "elapsed_ticks {}", self.elapsed_ticks);
        let s = &self.supply;
        let _ = writeln!(
            out,
            "supply minted={} circulating={} burned={} fees={}",
            s.minted, s.circulating, s.burned, s.fees
        );
        if self.no_positives {
            let _ = writeln!(out, "flag NoPositives");
        }
        for (class, line) in &self.tps {
            let _ = writeln!(out, "tps {class} nodes={} value={:.6}", line.nodes, line.tps);
        }
        for (agg, v) in &self.fscore {
            let _ = writeln!(out, "fscore {agg} {v:.6}");
        }
        for (agg, c) in &self.confusion {
            let _ = writeln!(
                out,
                "confusion {agg} tp={} fp={} tn={} fn={}",
                c.tp, c.fp, c.tn, c.fn_count
            );
        }
        for (kind, tally) in &self.attack_outcomes {
            let _ = writeln!(
                out,
                "attack {} attempts={} successes={}",
                kind.name(),
                tally.attempts,
                tally.successes
            );
        }
        for (key, value) in &self.observed {
            let _ = writeln!(out, "observed {key}={value}");
        }
        for (agg, scores) in &self.reputations {
            for (node, score) in scores {
                let _ = writeln!(out, "reputation {agg} {node} {score:.6}");
            }
        }
        for (node, balance) in &self.balances {
            let _ = writeln!(out, "balance {node} {balance}");
        }
        out
    }

    pub fn render_tps_csv(&self) -> String {
        let mut out = header(self.seed, &self.config_digest);
        out.push_str("class,nodes,tps\n");
        for (class, line) in &self.tps {
            let _ = writeln!(out, "{class},{},{:.6}", line.nodes, line.tps);
        }
        out
    }

    pub fn render_fscore_csv(&self) -> String {
        let mut out = header(self.seed, &self.config_digest);
        out.push_str("aggregator,fscore\n");
        for (agg, v) in &self.fscore {
            let _ = writeln!(out, "{agg},{v:.6}");
        }
        out
    }

    pub fn render_attacks_csv(&self) -> String {
        let mut out = header(self.seed, &self.config_digest);
        out.push_str("kind,attempts,successes\n");
        for (kind, tally) in &self.attack_outcomes {
            let _ = writeln!(out, "{},{},{}", kind.name(), tally.attempts, tally.successes);
        }
        out
    }
}

/// Copy the closed-world supply totals out of the ledger audit.
pub fn fill_supply(report: &mut MetricsReport, ledger: &braid_core::ledger::Ledger) {
    let audit = ledger.audit().expect("supply audit holds at reporting time");
    report.supply = SupplySummary {
        minted: audit.minted.amount(),
        circulating: audit.circulating.amount(),
        burned: audit.burned_outputs.amount(),
        fees: audit.fees.amount(),
    };
}

/// Everything a finished run hands to the caller: the structured
/// report plus the texts the runner writes to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub report: MetricsReport,
    /// Replayable ledger snapshot, parameter headers included.
    pub snapshot: String,
    /// One line per trade session opened by the honest engine.
    pub sessions: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_ordered_and_repeatable() {
        let mut r = MetricsReport {
            scenario: "mixed".into(),
            seed: 9,
            config_digest: "abcd".into(),
            elapsed_ticks: 10,
            ..MetricsReport::default()
        };
        r.tps.insert("payment".into(), TpsLine { nodes: 3, tps: 1.5 });
        r.tps.insert("dumb".into(), TpsLine { nodes: 1, tps: 0.25 });
        r.fscore.insert("netflow".into(), 1.0);
        r.fscore.insert("average".into(), 0.5);
        r.attack_outcomes
            .insert(AttackKind::Replay, AttackTally { attempts: 4, successes: 0 });

        let text = r.render_report();
        assert!(text.starts_with("# seed=9 config_digest=abcd\n"));
        let dumb = text.find("tps dumb").unwrap();
        let payment = text.find("tps payment").unwrap();
        assert!(dumb < payment, "map rendering follows key order");
        assert_eq!(text, r.render_report());

        let csv = r.render_fscore_csv();
        assert!(csv.contains("average,0.500000\n"));
        assert!(csv.contains("netflow,1.000000\n"));
        assert!(r.render_attacks_csv().contains("replay,4,0\n"));
    }
}
