//! Balance attack on the block layer. The adversary splits honest
//! mining across two equal branches and spends withheld blocks to
//! cancel any public lead before the trailing cohort gives up on its
//! branch. Under header work a withheld block is free to produce, so
//! patches are plentiful and the stalemate can run for a long time.
//! Under dumb work a patch must carry real anchored messages, and the
//! honest majority claims most of those first, so the attacker runs
//! out of applicable reserve and one branch wins.

use std::collections::VecDeque;

use braid_core::chain::{chain_genesis_id, fresh_anchor_height, Block, BlockId, ChainState};
use braid_core::keys::KeyPair;
use braid_core::node::Node;
use braid_core::tangle::{Envelope, MessageKind};
use rand::RngExt;

use crate::config::{AttackKind, ForkRuleConfig, SimConfig};
use crate::metrics::{AttackTally, MetricsReport, RunArtifacts, TpsLine};
use crate::net::Broadcast;

/// The standing a cohort compares branches by: chain length under
/// header work, accumulated dumb work otherwise.
fn metric(node: &Node, dumbwork: bool, id: &BlockId) -> u128 {
    if dumbwork {
        node.chain()
            .cumulative_dumb_work(id)
            .expect("branch tips stay known")
    } else {
        node.chain().height_of(id).expect("branch tips stay known") as u128
    }
}

fn claim_work(block: &Block, dumb_bits: u32) -> u128 {
    block.dumb_refs.len() as u128 * (1u128 << dumb_bits)
}

fn mint_dumb(bc: &mut Broadcast, keys: &KeyPair, anchor_h: u64, anchor: BlockId, bits: u32) {
    bc.attach(
        keys,
        MessageKind::Dumb {
            assoc_height: anchor_h,
            assoc_block: anchor,
        },
        Envelope::Raw(Vec::new()),
        bits,
        "dumb",
    )
    .expect("dumb traffic is well formed");
}

/// Where the attacker grows its withheld chain next: the lagging
/// branch when one trails, otherwise whichever reserve is shorter.
fn build_target(m0: u128, m1: u128, reserve: &[VecDeque<Block>; 2]) -> usize {
    if m0 < m1 {
        0
    } else if m1 < m0 {
        1
    } else if reserve[0].len() < reserve[1].len() {
        0
    } else {
        1
    }
}

pub fn run(cfg: &SimConfig) -> RunArtifacts {
    let lv = &cfg.liveness;
    let mut bc = Broadcast::new(cfg.node_params(), cfg.seed);
    let mut mirror = ChainState::new(cfg.node_params().chain);
    let mut lottery = crate::rng::stream(cfg.seed, "lottery");

    let dumbwork = matches!(cfg.difficulty.fork_rule, ForkRuleConfig::DumbWork);
    let need = if dumbwork {
        cfg.difficulty.dumb_factor as usize
    } else {
        0
    };
    let header_bits = if dumbwork { 0 } else { cfg.difficulty.block_bits };
    let dumb_bits = cfg.dumb_bits();

    let honest_miner = [
        KeyPair::derive(cfg.seed, b"branch-miner-0"),
        KeyPair::derive(cfg.seed, b"branch-miner-1"),
    ];
    let attacker = KeyPair::derive(cfg.seed, b"withholding-miner");
    let honest_dumb = [
        KeyPair::derive(cfg.seed, b"branch-dumbs-0"),
        KeyPair::derive(cfg.seed, b"branch-dumbs-1"),
    ];
    let attacker_dumb = KeyPair::derive(cfg.seed, b"withheld-dumbs");

    let mut work_honest: u128 = 0;
    let mut work_attacker: u128 = 0;
    let mut blocks_built = 0u64;
    let mut built_private = 0u64;
    let mut released_private = 0u64;
    let mut work_snapshot: Option<(u128, u128, u64)> = None;

    // Seed enough anchored dumbs that both branch roots can claim a
    // full complement off the shared genesis window.
    let g = chain_genesis_id();
    if dumbwork {
        for i in 0..need {
            mint_dumb(&mut bc, &honest_dumb[i % 2], 0, g, dumb_bits);
        }
    }
    // Branch roots: one honest block and one the attacker reveals at
    // once, both at height 1. Claims are fork-local, so both may take
    // the same seed dumbs.
    let mut tips: [BlockId; 2] = [g, g];
    for b in 0..2usize {
        let keys = if b == 0 { &honest_miner[0] } else { &attacker };
        let dumbs = if dumbwork {
            bc.node().chain().eligible_dumbs(&g, bc.node().tangle())
        } else {
            Vec::new()
        };
        let block =
            Block::build(keys, g, 1, dumbs, header_bits).expect("pow search never exhausts");
        let work = claim_work(&block, dumb_bits);
        if b == 0 {
            work_honest += work;
        } else {
            work_attacker += work;
        }
        bc.insert_block(block.clone())
            .expect("branch roots extend genesis");
        mirror
            .validate_and_insert(block.clone(), bc.node().tangle())
            .expect("the mirror accepts every public block");
        tips[b] = block.id();
        blocks_built += 1;
    }

    let mut reserve: [VecDeque<Block>; 2] = [VecDeque::new(), VecDeque::new()];
    let mut streak: [u64; 2] = [0, 0];
    let mut broken_at: Option<u64> = None;
    let mut device_side = 0usize;
    let mut elapsed = 0u64;

    for tick in 1..=lv.max_ticks {
        elapsed = tick;

        if dumbwork {
            // Honest application traffic anchors to whichever branch
            // currently leads on work; on an exact tie it stays where
            // it last was. This is the lever that shuts the attack
            // down: a trailing branch sees only the attacker's inflow.
            let m0 = metric(bc.node(), dumbwork, &tips[0]);
            let m1 = metric(bc.node(), dumbwork, &tips[1]);
            if m0 > m1 {
                device_side = 0;
            } else if m1 > m0 {
                device_side = 1;
            }
            for _ in 0..lv.dumb_rate_honest {
                let b = device_side;
                let next_h = bc
                    .node()
                    .chain()
                    .height_of(&tips[b])
                    .expect("public tips stay known")
                    + 1;
                let ah = fresh_anchor_height(next_h);
                let anchor = bc
                    .node()
                    .chain()
                    .ancestor_at(&tips[b], ah)
                    .expect("branch tips have window ancestors");
                mint_dumb(&mut bc, &honest_dumb[b], ah, anchor, dumb_bits);
            }
            // The attacker aims its smaller inflow at the branch it
            // will extend next.
            let m0 = metric(bc.node(), dumbwork, &tips[0]);
            let m1 = metric(bc.node(), dumbwork, &tips[1]);
            let t = build_target(m0, m1, &reserve);
            let ptip = reserve[t].back().map_or(tips[t], |b| b.id());
            let next_h = mirror
                .height_of(&ptip)
                .expect("withheld tips stay mirrored")
                + 1;
            let ah = fresh_anchor_height(next_h);
            let anchor = mirror
                .ancestor_at(&ptip, ah)
                .expect("withheld tips have window ancestors");
            for _ in 0..lv.dumb_rate_attacker {
                mint_dumb(&mut bc, &attacker_dumb, ah, anchor, dumb_bits);
            }
        }

        // One scheduling lottery per tick decides who finds a block.
        if lottery.random::<f64>() < lv.block_chance {
            let who: f64 = lottery.random();
            if who < lv.attacker_share {
                let m0 = metric(bc.node(), dumbwork, &tips[0]);
                let m1 = metric(bc.node(), dumbwork, &tips[1]);
                let t = build_target(m0, m1, &reserve);
                let parent = reserve[t].back().map_or(tips[t], |b| b.id());
                let h = mirror
                    .height_of(&parent)
                    .expect("withheld parents stay mirrored")
                    + 1;
                let dumbs = if dumbwork {
                    mirror.eligible_dumbs(&parent, bc.node().tangle())
                } else {
                    Vec::new()
                };
                if !dumbwork || dumbs.len() >= need {
                    let block = Block::build(&attacker, parent, h, dumbs, header_bits)
                        .expect("pow search never exhausts");
                    work_attacker += claim_work(&block, dumb_bits);
                    mirror
                        .validate_and_insert(block.clone(), bc.node().tangle())
                        .expect("withheld blocks extend the mirror");
                    reserve[t].push_back(block);
                    blocks_built += 1;
                    built_private += 1;
                }
            } else {
                let split = lv.attacker_share + (1.0 - lv.attacker_share) / 2.0;
                let b = if who < split { 0 } else { 1 };
                let parent = tips[b];
                let h = bc
                    .node()
                    .chain()
                    .height_of(&parent)
                    .expect("public tips stay known")
                    + 1;
                let dumbs = if dumbwork {
                    bc.node()
                        .chain()
                        .eligible_dumbs(&parent, bc.node().tangle())
                } else {
                    Vec::new()
                };
                if !dumbwork || dumbs.len() >= need {
                    let block = Block::build(&honest_miner[b], parent, h, dumbs, header_bits)
                        .expect("pow search never exhausts");
                    work_honest += claim_work(&block, dumb_bits);
                    bc.insert_block(block.clone())
                        .expect("honest blocks extend public tips");
                    mirror
                        .validate_and_insert(block.clone(), bc.node().tangle())
                        .expect("the mirror accepts every public block");
                    tips[b] = block.id();
                    blocks_built += 1;
                }
            }
        }

        // A reserve whose front no longer extends the public tip of
        // its branch can never help again; drop the whole chain.
        for r in 0..2usize {
            if reserve[r].front().is_some_and(|f| f.parent != tips[r]) {
                reserve[r].clear();
            }
        }

        // Eager patching: the moment one branch leads in public, the
        // attacker reveals applicable reserve on the trailing side.
        // Holding back longer only lets the reserve rot, since any
        // honest block on that branch orphans the withheld chain.
        loop {
            let m0 = metric(bc.node(), dumbwork, &tips[0]);
            let m1 = metric(bc.node(), dumbwork, &tips[1]);
            if m0 == m1 {
                break;
            }
            let lag = if m0 < m1 { 0 } else { 1 };
            let Some(front) = reserve[lag].front() else {
                break;
            };
            if front.parent != tips[lag] {
                reserve[lag].clear();
                break;
            }
            let block = reserve[lag].pop_front().expect("front exists");
            match bc.insert_block(block.clone()) {
                Ok(_) => {
                    tips[lag] = block.id();
                    released_private += 1;
                }
                Err(_) => {
                    // Claims went stale against the public branch;
                    // the rest of the withheld chain is dead too.
                    reserve[lag].clear();
                    break;
                }
            }
        }

        // Convergence pressure: a cohort abandons its branch once the
        // other one has led for latency_ticks straight.
        let m0 = metric(bc.node(), dumbwork, &tips[0]);
        let m1 = metric(bc.node(), dumbwork, &tips[1]);
        if m0 == m1 {
            streak = [0, 0];
        } else {
            let lag = if m0 < m1 { 0 } else { 1 };
            streak[1 - lag] = 0;
            streak[lag] += 1;
            if streak[lag] >= lv.latency_ticks {
                broken_at = Some(tick);
            }
        }

        if work_snapshot.is_none() && blocks_built >= 50 {
            work_snapshot = Some((work_honest, work_attacker, blocks_built));
        }
        if broken_at.is_some() {
            break;
        }
    }

    let (snap_honest, snap_attacker, snap_blocks) =
        work_snapshot.unwrap_or((work_honest, work_attacker, blocks_built));

    bc.node()
        .ledger()
        .audit()
        .expect("mining traffic cannot break the supply audit");

    let mut report = MetricsReport {
        scenario: cfg.scenario.name().to_string(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        elapsed_ticks: elapsed,
        ..MetricsReport::default()
    };
    crate::metrics::fill_supply(&mut report, bc.node().ledger());
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
    report.attack_outcomes.insert(
        AttackKind::Liveness,
        AttackTally {
            attempts: 1,
            successes: u64::from(broken_at.is_none()),
        },
    );
    let obs = &mut report.observed;
    obs.insert(
        "fork_rule".into(),
        if dumbwork { "dumb_work" } else { "header_work" }.into(),
    );
    obs.insert(
        "balance_broken_at".into(),
        broken_at.map_or("never".into(), |t| t.to_string()),
    );
    obs.insert(
        "balance_duration".into(),
        broken_at.unwrap_or(lv.max_ticks).to_string(),
    );
    obs.insert("blocks_built".into(), blocks_built.to_string());
    obs.insert("blocks_private_built".into(), built_private.to_string());
    obs.insert(
        "blocks_private_released".into(),
        released_private.to_string(),
    );
    obs.insert("dumb_work_honest".into(), snap_honest.to_string());
    obs.insert("dumb_work_attacker".into(), snap_attacker.to_string());
    obs.insert("work_snapshot_blocks".into(), snap_blocks.to_string());
    obs.insert(
        "head_height".into(),
        bc.node().chain().head_height().to_string(),
    );

    RunArtifacts {
        report,
        snapshot: bc.snapshot(),
        sessions: String::new(),
    }
}
