//! Double-spend race: two bundles spending the same output attach to
//! disjoint subtangles, and the run measures which side reaches a
//! decisive weight lead. The bare arm gives the attacker the higher
//! message rate, so the self-payment wins; the dumb-inflow arm lets
//! mining traffic rain onto the honest side, which flips the race
//! without any coordination among honest participants.

use braid_core::chain::chain_genesis_id;
use braid_core::keys::KeyPair;
use braid_core::ledger::{ExecError, LedgerEvent};
use braid_core::money::Money;
use braid_core::tangle::{genesis_id, Envelope, MessageId, MessageKind};
use braid_core::trade::bundle::{Address, Bundle, OutputRef, TxOutput};
use braid_core::view::LedgerView;
use braid_core::wallet::Wallet;

use crate::config::SimConfig;
use crate::metrics::{MetricsReport, RunArtifacts, TpsLine};
use crate::net::Broadcast;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Winner {
    Honest,
    Attacker,
}

/// Pick two distinct attachment points inside one side's cone.
fn side_parents(tip: MessageId, root: MessageId) -> [MessageId; 2] {
    if tip == root {
        [root, genesis_id()]
    } else {
        [tip, root]
    }
}

pub fn run(cfg: &SimConfig) -> RunArtifacts {
    let ds = &cfg.double_spend;
    let mut bc = Broadcast::new(cfg.node_params(), cfg.seed);
    let bits = cfg.difficulty.message_bits;

    let attacker = KeyPair::derive(cfg.seed, b"double-spender");
    let merchant = KeyPair::derive(cfg.seed, b"merchant");
    let observer = KeyPair::derive(cfg.seed, b"observer");
    let miner = KeyPair::derive(cfg.seed, b"dumb-miner");

    let endowment = Money::new(cfg.endowment);
    let mut wallet = Wallet::new(attacker.clone());
    let refs = bc.endow(&[(attacker.node_id(), endowment)]);
    let endow_ref = refs[0];
    wallet.credit(endow_ref, endowment);

    // The honest spend pays the merchant; the covert one returns the
    // whole endowment to the attacker. Same input, different bodies.
    let price = Money::new(cfg.endowment / 3);
    let paid = wallet
        .pay(vec![TxOutput {
            address: Address::Node(merchant.node_id()),
            value: price,
        }])
        .expect("endowment covers the purchase");
    let merchant_ref = OutputRef {
        txid: paid.id(),
        index: 0,
    };
    let reclaim = Bundle::build(
        &[(endow_ref, &attacker)],
        vec![TxOutput {
            address: Address::Node(attacker.node_id()),
            value: endowment,
        }],
    );

    let g = genesis_id();
    let honest_root = bc
        .attach_at(
            &attacker,
            [g, g],
            MessageKind::Normal,
            Envelope::Bundle(paid),
            bits,
            "conflict",
        )
        .expect("first spend attaches cleanly")
        .id;
    let attacker_root = bc
        .attach_at(
            &attacker,
            [g, g],
            MessageKind::Normal,
            Envelope::Bundle(reclaim),
            bits,
            "conflict",
        )
        .expect("conflicting spends attach; only execution arbitrates")
        .id;

    let mut honest_tip = honest_root;
    let mut attacker_tip = attacker_root;
    let mut winner: Option<(Winner, u64)> = None;
    let mut loser_rejected = false;

    fn note(
        events: &[LedgerEvent],
        tick: u64,
        roots: (MessageId, MessageId),
        winner: &mut Option<(Winner, u64)>,
        loser_rejected: &mut bool,
    ) {
        for ev in events {
            match ev {
                LedgerEvent::Executed(id) if *id == roots.0 => {
                    winner.get_or_insert((Winner::Honest, tick));
                }
                LedgerEvent::Executed(id) if *id == roots.1 => {
                    winner.get_or_insert((Winner::Attacker, tick));
                }
                LedgerEvent::Rejected(id, ExecError::ConflictLost(_))
                    if *id == roots.0 || *id == roots.1 =>
                {
                    *loser_rejected = true;
                }
                _ => {}
            }
        }
    }
    let roots = (honest_root, attacker_root);

    let mut elapsed = 0;
    let mut post_decision = 0u64;
    for tick in 1..=cfg.duration_ticks {
        elapsed = tick;
        for _ in 0..ds.attacker_rate {
            let parents = side_parents(attacker_tip, attacker_root);
            let got = bc
                .attach_at(
                    &attacker,
                    parents,
                    MessageKind::Normal,
                    Envelope::Raw(b"approve".to_vec()),
                    bits,
                    "attacker_pressure",
                )
                .expect("pressure traffic is well formed");
            attacker_tip = got.id;
            note(&got.events, tick, roots, &mut winner, &mut loser_rejected);
        }
        if tick % ds.honest_period == 0 {
            let parents = side_parents(honest_tip, honest_root);
            let got = bc
                .attach_at(
                    &observer,
                    parents,
                    MessageKind::Normal,
                    Envelope::Raw(b"seen".to_vec()),
                    bits,
                    "honest_traffic",
                )
                .expect("observer traffic is well formed");
            honest_tip = got.id;
            note(&got.events, tick, roots, &mut winner, &mut loser_rejected);
        }
        if ds.dumb_inflow {
            for _ in 0..ds.dumb_rate {
                let parents = side_parents(honest_tip, honest_root);
                let got = bc
                    .attach_at(
                        &miner,
                        parents,
                        MessageKind::Dumb {
                            assoc_height: 0,
                            assoc_block: chain_genesis_id(),
                        },
                        Envelope::Raw(Vec::new()),
                        cfg.dumb_bits(),
                        "dumb",
                    )
                    .expect("dumb traffic is well formed");
                honest_tip = got.id;
                note(&got.events, tick, roots, &mut winner, &mut loser_rejected);
            }
        }
        // Once decided, keep the losing side pushing for a while to
        // show the executed spend cannot be displaced.
        if winner.is_some() {
            post_decision += 1;
            if post_decision >= 20 {
                break;
            }
        }
    }

    let ledger = bc.node().ledger();
    ledger
        .audit()
        .expect("conflicting spends never mint or destroy value");
    let finality_held = match winner {
        Some((Winner::Honest, _)) => ledger.is_executed(&honest_root),
        Some((Winner::Attacker, _)) => ledger.is_executed(&attacker_root),
        None => false,
    };
    let merchant_paid = ledger.output(&merchant_ref).is_some();

    let mut report = MetricsReport {
        scenario: cfg.scenario.name().to_string(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        elapsed_ticks: elapsed,
        ..MetricsReport::default()
    };
    crate::metrics::fill_supply(&mut report, ledger);
    for (class, confirmed) in &bc.traffic.confirmed {
        let senders = bc.traffic.senders.get(class).map_or(0, |s| s.len());
        report.tps.insert(
            class.to_string(),
            TpsLine {
                nodes: senders as u32,
                tps: *confirmed as f64 / elapsed as f64,
            },
        );
    }
    let obs = &mut report.observed;
    obs.insert(
        "winner".into(),
        match winner {
            Some((Winner::Honest, _)) => "honest".into(),
            Some((Winner::Attacker, _)) => "attacker".into(),
            None => "undecided".into(),
        },
    );
    obs.insert(
        "decided_at_tick".into(),
        winner.map_or("never".into(), |(_, t)| t.to_string()),
    );
    obs.insert("loser_rejected".into(), loser_rejected.to_string());
    obs.insert("finality_held".into(), finality_held.to_string());
    obs.insert("merchant_paid".into(), merchant_paid.to_string());
    obs.insert("dumb_inflow".into(), ds.dumb_inflow.to_string());

    RunArtifacts {
        report,
        snapshot: bc.snapshot(),
        sessions: String::new(),
    }
}
