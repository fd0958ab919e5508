//! Scenario configuration.
//!
//! A scenario file is a TOML document whose tables and keys map one to
//! one onto [`SimConfig`]. Parsing is strict: unknown keys are errors,
//! so a typo cannot silently fall back to a default. Every field has a
//! default, so the empty document is the standard mixed run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_512};
use thiserror::Error;

use braid_core::chain::state::{ChainParams, ForkRule};
use braid_core::ledger::LedgerParams;
use braid_core::money::Money;
use braid_core::node::NodeParams;
use braid_core::tangle::TangleParams;
use braid_core::trade::initial::OnboardingParams;
use braid_core::weakreq::WeakReqParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario file is not valid TOML: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Which experiment the run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Trading population plus scripted attackers, ending in a full
    /// reputation evaluation.
    Mixed,
    /// A withhold-and-release miner trying to keep two forks balanced.
    Liveness,
    /// Two bundles spending the same output racing for confirmation.
    DoubleSpend,
    /// Message emitters measuring confirmed throughput as the emitter
    /// count grows.
    Throughput,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Mixed => "mixed",
            ScenarioKind::Liveness => "liveness",
            ScenarioKind::DoubleSpend => "double_spend",
            ScenarioKind::Throughput => "throughput",
        }
    }
}

/// The scripted adversary catalogue. Each variant is one actor
/// behavior; the mixed scenario splits its malicious cohort across
/// them, and `Liveness` runs as its own scenario because it plays out
/// on the block layer rather than in the marketplace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Liveness,
    SelfPromoting,
    Whitewashing,
    Slandering,
    NetworkDos,
    AppDos,
    BallotStuffing,
    Sybil,
    Replay,
    WeakReqAbuse,
}

impl AttackKind {
    /// The kinds the mixed scenario scripts directly.
    pub const MIXED: [AttackKind; 9] = [
        AttackKind::SelfPromoting,
        AttackKind::Whitewashing,
        AttackKind::Slandering,
        AttackKind::NetworkDos,
        AttackKind::AppDos,
        AttackKind::BallotStuffing,
        AttackKind::Sybil,
        AttackKind::Replay,
        AttackKind::WeakReqAbuse,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Liveness => "liveness",
            AttackKind::SelfPromoting => "self_promoting",
            AttackKind::Whitewashing => "whitewashing",
            AttackKind::Slandering => "slandering",
            AttackKind::NetworkDos => "network_dos",
            AttackKind::AppDos => "app_dos",
            AttackKind::BallotStuffing => "ballot_stuffing",
            AttackKind::Sybil => "sybil",
            AttackKind::Replay => "replay",
            AttackKind::WeakReqAbuse => "weakreq_abuse",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForkRuleConfig {
    HeaderWork,
    DumbWork,
}

impl From<ForkRuleConfig> for ForkRule {
    fn from(v: ForkRuleConfig) -> ForkRule {
        match v {
            ForkRuleConfig::HeaderWork => ForkRule::HeaderWork,
            ForkRuleConfig::DumbWork => ForkRule::DumbWork,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DifficultyConfig {
    /// Work floor for ordinary tangle messages.
    pub message_bits: u32,
    /// Cumulative weight at which a message confirms.
    pub confirmation_weight: u32,
    /// Full block difficulty.
    pub block_bits: u32,
    /// Relaxation factor: dumb messages per block, power of two.
    pub dumb_factor: u32,
    pub fork_rule: ForkRuleConfig,
    pub coinbase_value: u64,
    pub coinbase_maturity: u64,
    /// Ticks between blocks in scenarios that mine on a schedule.
    pub block_period: u64,
}

impl Default for DifficultyConfig {
    fn default() -> Self {
        DifficultyConfig {
            message_bits: 6,
            confirmation_weight: 4,
            block_bits: 8,
            dumb_factor: 4,
            fork_rule: ForkRuleConfig::DumbWork,
            coinbase_value: 50,
            coinbase_maturity: 2,
            block_period: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnboardingConfig {
    pub pow_bits: u32,
    pub burn_floor: u64,
}

impl Default for OnboardingConfig {
    fn default() -> Self {
        OnboardingConfig { pow_bits: 6, burn_floor: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EscalationConfig {
    /// Fee multiplier applied on each timer expiry.
    pub factor: f64,
    /// Broadcast budget, the first request included.
    pub max_attempts: u32,
}

impl Default for EscalationConfig {
    fn default() -> Self {
        EscalationConfig { factor: 1.5, max_attempts: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakReqConfig {
    /// Total fee an honest device offers per request.
    pub fee: u64,
    /// Messages per request.
    pub n_msg: u32,
    /// Tokens an honest device burns to back its requests.
    pub burn: u64,
    /// Ticks a device waits for anchoring before escalating.
    pub timer_ticks: u64,
    /// Protocol floor for the fee per message.
    pub min_fee_unit: u64,
    /// Protocol floor for the burn per requested message.
    pub burn_floor_per_msg: u64,
    /// Miner policy: serve only when fee per message reaches this.
    pub miner_min_share: u64,
    pub escalation: EscalationConfig,
}

impl Default for WeakReqConfig {
    fn default() -> Self {
        WeakReqConfig {
            fee: 40,
            n_msg: 8,
            burn: 16,
            timer_ticks: 12,
            min_fee_unit: 1,
            burn_floor_per_msg: 2,
            miner_min_share: 3,
            escalation: EscalationConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LivenessConfig {
    /// Attacker's share of total hash power.
    pub attacker_share: f64,
    /// Chance that any block is found in a given tick.
    pub block_chance: f64,
    /// Ticks a strict fork lead must persist before honest miners
    /// abandon their first-seen branch. Models propagation latency.
    pub latency_ticks: u64,
    /// Tick budget; a run still balanced here counts as censored.
    pub max_ticks: u64,
    /// Dumb messages the honest cohort mints per tick.
    pub dumb_rate_honest: u32,
    /// Dumb messages the attacker mints per tick.
    pub dumb_rate_attacker: u32,
}

impl Default for LivenessConfig {
    fn default() -> Self {
        LivenessConfig {
            attacker_share: 0.33,
            block_chance: 0.8,
            latency_ticks: 20,
            max_ticks: 1200,
            dumb_rate_honest: 4,
            dumb_rate_attacker: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleSpendConfig {
    /// Whether miners pour dumb messages onto the first-seen branch.
    pub dumb_inflow: bool,
    /// Attacker approvals of its own branch per tick.
    pub attacker_rate: u32,
    /// One honest message lands every this many ticks.
    pub honest_period: u64,
    /// Dumb messages per tick when inflow is on.
    pub dumb_rate: u32,
}

impl Default for DoubleSpendConfig {
    fn default() -> Self {
        DoubleSpendConfig { dumb_inflow: true, attacker_rate: 2, honest_period: 4, dumb_rate: 6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThroughputConfig {
    /// Independent message emitters sharing one tangle.
    pub emitters: u32,
    /// Payments each emitter submits per tick.
    pub rate: u32,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        ThroughputConfig { emitters: 5, rate: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub n_honest: u32,
    pub n_malicious: u32,
    pub n_evaluators: u32,
    pub n_miners: u32,
    /// Honest weak devices running the fee-for-attachment protocol.
    pub n_devices: u32,
    pub duration_ticks: u64,
    /// New honest trades opened per tick.
    pub trades_per_tick: u32,
    pub trust_threshold: f64,
    /// With protections off, the final evaluation also swallows the
    /// fabricated claims the attackers circulated, the way a system
    /// without payment-coupled reviews would.
    pub protections: bool,
    /// Starting balance granted to every marketplace participant.
    pub endowment: u64,
    pub difficulty: DifficultyConfig,
    pub onboarding: OnboardingConfig,
    pub weakreq: WeakReqConfig,
    /// Malicious cohort split; empty means an even split over the
    /// mixed-scenario kinds.
    pub attack_mix: BTreeMap<AttackKind, u32>,
    pub liveness: LivenessConfig,
    pub double_spend: DoubleSpendConfig,
    pub throughput: ThroughputConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: ScenarioKind::Mixed,
            seed: 42,
            n_honest: 300,
            n_malicious: 200,
            n_evaluators: 100,
            n_miners: 4,
            n_devices: 4,
            duration_ticks: 400,
            trades_per_tick: 4,
            trust_threshold: 0.5,
            protections: true,
            endowment: 600,
            difficulty: DifficultyConfig::default(),
            onboarding: OnboardingConfig::default(),
            weakreq: WeakReqConfig::default(),
            attack_mix: BTreeMap::new(),
            liveness: LivenessConfig::default(),
            double_spend: DoubleSpendConfig::default(),
            throughput: ThroughputConfig::default(),
        }
    }
}

impl SimConfig {
    /// Parse a scenario document, fill derived defaults, validate.
    pub fn from_toml_str(text: &str) -> Result<SimConfig, ConfigError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.into_effective()
    }

    /// Resolve the empty attack mix into the even split and validate
    /// the result. Any config handed to a scenario runner has been
    /// through here.
    pub fn into_effective(mut self) -> Result<SimConfig, ConfigError> {
        if self.scenario == ScenarioKind::Mixed && self.attack_mix.is_empty() && self.n_malicious > 0
        {
            let kinds = AttackKind::MIXED;
            let base = self.n_malicious / kinds.len() as u32;
            let extra = self.n_malicious as usize % kinds.len();
            for (i, kind) in kinds.iter().enumerate() {
                let n = base + u32::from(i < extra);
                if n > 0 {
                    self.attack_mix.insert(*kind, n);
                }
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.duration_ticks == 0 {
            return bad("duration_ticks must be positive".into());
        }
        if !(self.trust_threshold > 0.0 && self.trust_threshold < 1.0) {
            return bad(format!("trust_threshold {} is outside (0, 1)", self.trust_threshold));
        }
        if self.n_evaluators > self.n_honest {
            return bad(format!(
                "n_evaluators {} exceeds n_honest {}",
                self.n_evaluators, self.n_honest
            ));
        }
        let d = &self.difficulty;
        if !d.dumb_factor.is_power_of_two() {
            return bad(format!("dumb_factor {} is not a power of two", d.dumb_factor));
        }
        if d.message_bits > 20 || d.block_bits > 24 || d.confirmation_weight == 0 {
            return bad("difficulty parameters are outside the simulation range".into());
        }
        if d.block_period == 0 {
            return bad("difficulty.block_period must be positive".into());
        }
        let w = &self.weakreq;
        if w.n_msg == 0 {
            return bad("weakreq.n_msg must be positive".into());
        }
        if w.fee < w.min_fee_unit * u64::from(w.n_msg) {
            return bad(format!(
                "weakreq.fee {} is below the floor of {} per message",
                w.fee, w.min_fee_unit
            ));
        }
        if w.burn < w.burn_floor_per_msg * u64::from(w.n_msg) {
            return bad(format!(
                "weakreq.burn {} is below the floor of {} per message",
                w.burn, w.burn_floor_per_msg
            ));
        }
        if w.escalation.factor < 1.0 || w.escalation.max_attempts == 0 {
            return bad("weakreq.escalation must keep factor >= 1 and attempt at least once".into());
        }
        match self.scenario {
            ScenarioKind::Mixed => {
                if self.n_honest < 2 {
                    return bad("mixed scenario needs at least two honest traders".into());
                }
                if self.n_miners == 0 {
                    return bad("mixed scenario needs at least one miner".into());
                }
                if self.trades_per_tick == 0 {
                    return bad("trades_per_tick must be positive".into());
                }
                if self.attack_mix.get(&AttackKind::Liveness).copied().unwrap_or(0) > 0 {
                    return bad(
                        "the liveness attack runs as its own scenario, not in the mixed suite"
                            .into(),
                    );
                }
                let assigned: u32 = self.attack_mix.values().sum();
                if assigned != self.n_malicious {
                    return bad(format!(
                        "attack_mix assigns {assigned} actors but n_malicious is {}",
                        self.n_malicious
                    ));
                }
            }
            ScenarioKind::Liveness => {
                let l = &self.liveness;
                if !(l.attacker_share > 0.0 && l.attacker_share < 0.5) {
                    return bad(format!(
                        "liveness.attacker_share {} is outside (0, 0.5)",
                        l.attacker_share
                    ));
                }
                if !(l.block_chance > 0.0 && l.block_chance <= 1.0) {
                    return bad(format!("liveness.block_chance {} is outside (0, 1]", l.block_chance));
                }
                if l.latency_ticks == 0 || l.max_ticks < 10 {
                    return bad("liveness timing parameters are too small".into());
                }
                if l.dumb_rate_honest == 0 || l.dumb_rate_attacker == 0 {
                    return bad("liveness dumb rates must be positive".into());
                }
            }
            ScenarioKind::DoubleSpend => {
                let ds = &self.double_spend;
                if ds.attacker_rate == 0 || ds.honest_period == 0 || ds.dumb_rate == 0 {
                    return bad("double_spend rates must be positive".into());
                }
            }
            ScenarioKind::Throughput => {
                let t = &self.throughput;
                if t.emitters == 0 || t.rate == 0 {
                    return bad("throughput.emitters and throughput.rate must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Short hex digest of the effective configuration, stamped into
    /// every artifact header so outputs are traceable to their inputs.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let mut h = Sha3_512::new();
        h.update(b"braid-sim-config");
        h.update(text.as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    /// Node parameters shared by every scenario.
    pub fn node_params(&self) -> NodeParams {
        NodeParams {
            tangle: TangleParams {
                message_bits: self.difficulty.message_bits,
                confirmation_weight: self.difficulty.confirmation_weight,
            },
            chain: ChainParams {
                block_bits: self.difficulty.block_bits,
                dumb_factor: self.difficulty.dumb_factor,
                fork_rule: self.difficulty.fork_rule.into(),
                coinbase_value: Money::new(self.difficulty.coinbase_value),
                coinbase_maturity: self.difficulty.coinbase_maturity,
            },
            ledger: LedgerParams {
                onboarding: OnboardingParams {
                    pow_bits: self.onboarding.pow_bits,
                    burn_floor: Money::new(self.onboarding.burn_floor),
                },
                weakreq: WeakReqParams {
                    min_fee_unit: Money::new(self.weakreq.min_fee_unit),
                    burn_floor_per_msg: Money::new(self.weakreq.burn_floor_per_msg),
                },
            },
        }
    }

    /// The work floor dumb messages must meet: at least the tangle
    /// floor, and at least the per-dumb block relaxation target.
    pub fn dumb_bits(&self) -> u32 {
        let relaxed = self.difficulty.block_bits.saturating_sub(self.difficulty.dumb_factor.trailing_zeros());
        relaxed.max(self.difficulty.message_bits)
    }
}
