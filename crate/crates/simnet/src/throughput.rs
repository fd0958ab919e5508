//! Parallel-capacity scenario: k independent emitters push
//! self-payments into the shared tangle at a fixed per-tick rate.
//! Because attachment never serializes on a global leader, confirmed
//! throughput should scale close to linearly with the emitter count.

use braid_core::keys::KeyPair;
use braid_core::money::Money;
use braid_core::tangle::{Envelope, MessageKind};
use braid_core::trade::bundle::{Address, OutputRef, TxOutput};
use braid_core::wallet::Wallet;

use crate::config::SimConfig;
use crate::metrics::{MetricsReport, RunArtifacts, TpsLine};
use crate::net::Broadcast;

pub fn run(cfg: &SimConfig) -> RunArtifacts {
    let mut bc = Broadcast::new(cfg.node_params(), cfg.seed);
    let k = cfg.throughput.emitters as usize;
    let mut wallets: Vec<Wallet> = (0..k)
        .map(|i| {
            let keys = KeyPair::derive(cfg.seed, format!("emitter-{i}").as_bytes());
            Wallet::new(keys)
        })
        .collect();

    let grants: Vec<_> = wallets
        .iter()
        .map(|w| (w.node_id(), Money::new(cfg.endowment)))
        .collect();
    let refs = bc.endow(&grants);
    for (w, r) in wallets.iter_mut().zip(refs) {
        w.credit(r, Money::new(cfg.endowment));
    }

    let bits = cfg.difficulty.message_bits;
    for _tick in 1..=cfg.duration_ticks {
        for w in wallets.iter_mut() {
            for _ in 0..cfg.throughput.rate {
                let me = w.node_id();
                let bundle = w
                    .pay(vec![TxOutput {
                        address: Address::Node(me),
                        value: Money::new(1),
                    }])
                    .expect("self-payments conserve the emitter balance");
                let paid = OutputRef {
                    txid: bundle.id(),
                    index: 0,
                };
                w.credit(paid, Money::new(1));
                if let Some((r, v)) = w.change_ref(&bundle) {
                    w.credit(r, v);
                }
                let keys = w.keys().clone();
                bc.attach(
                    &keys,
                    MessageKind::Normal,
                    Envelope::Bundle(bundle),
                    bits,
                    "payment",
                )
                .expect("emitter traffic is well formed");
            }
        }
    }
    bc.node()
        .ledger()
        .audit()
        .expect("self-payments cannot break the supply audit");

    let mut report = MetricsReport {
        scenario: cfg.scenario.name().to_string(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        elapsed_ticks: cfg.duration_ticks,
        ..MetricsReport::default()
    };
    crate::metrics::fill_supply(&mut report, bc.node().ledger());
    for (class, confirmed) in &bc.traffic.confirmed {
        let senders = bc.traffic.senders.get(class).map_or(0, |s| s.len());
        report.tps.insert(
            class.to_string(),
            TpsLine {
                nodes: senders as u32,
                tps: *confirmed as f64 / cfg.duration_ticks as f64,
            },
        );
    }
    for w in &wallets {
        report
            .balances
            .insert(w.node_id().to_hex(), w.balance().amount());
    }

    RunArtifacts {
        report,
        snapshot: bc.snapshot(),
        sessions: String::new(),
    }
}
