//! Discrete-event simulation engine: schedules legitimate threat-report
//! interactions and planned attack trials on a shared simulated clock,
//! processes them in (time, sequence) order, and emits one trial record per
//! scheduled root event.
//!
//! Everything random is drawn up front from the seeded generator (population,
//! attack plan, interaction schedule), so a (config, seed) pair fixes the
//! entire run down to the output bytes.

use std::collections::BinaryHeap;
use std::path::PathBuf;

use rand::Rng;
use thiserror::Error;

use crate::adversary::{
    execute_attack, open_under, plan_campaign, verify_under, AdversaryState, AttackDetail,
    AttackOutcome, CampaignConfig, CapturedDelivery, DefensePosture, ProtocolContext,
    RejectionReason,
};
use crate::channel::{accept_channel, establish_channel, seal};
use crate::clock::SimClock;
use crate::latency::{CostModel, LatencyModel, DEFAULT_MU, DEFAULT_SIGMA};
use crate::policy::{data_access_circuit, prove, setup, PolicyError, Statement, Witness};
use crate::population::Population;
use crate::report::{summarize, write_csv, ReportError, RunSummary};
use crate::rng_from_seed;

/// Round to whole milliseconds. Records carry times at this resolution so
/// the in-memory values and their file form agree exactly.
pub fn quantize3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrialKind {
    Legit,
    Spoof,
    Violation,
    Tamper,
    Replay,
}

impl TrialKind {
    pub const ALL: [TrialKind; 5] = [
        TrialKind::Legit,
        TrialKind::Spoof,
        TrialKind::Violation,
        TrialKind::Tamper,
        TrialKind::Replay,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            TrialKind::Legit => "legit",
            TrialKind::Spoof => "spoof",
            TrialKind::Violation => "violation",
            TrialKind::Tamper => "tamper",
            TrialKind::Replay => "replay",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrialOutcome {
    /// Legitimate interaction ran end to end, proof verified.
    Completed,
    /// Honest prover refused an over-classification request. Correct
    /// behavior, not a failure.
    PolicyRefusal,
    /// Defenses rejected an attack trial.
    AttackBlocked,
    /// An attack trial was accepted as legitimate.
    AttackSuccess,
}

impl TrialOutcome {
    pub const ALL: [TrialOutcome; 4] = [
        TrialOutcome::Completed,
        TrialOutcome::PolicyRefusal,
        TrialOutcome::AttackBlocked,
        TrialOutcome::AttackSuccess,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            TrialOutcome::Completed => "completed",
            TrialOutcome::PolicyRefusal => "policy_refusal",
            TrialOutcome::AttackBlocked => "attack_blocked",
            TrialOutcome::AttackSuccess => "attack_success",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.label() == label)
    }
}

/// One row of the run log. Times are pre-rounded to milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub kind: TrialKind,
    pub initiator: String,
    pub target: String,
    pub clearance: Option<i64>,
    pub classification: Option<i64>,
    /// Present iff the trial minted a proof.
    pub proof_time_s: Option<f64>,
    pub outcome: TrialOutcome,
    pub rejection_reason: Option<RejectionReason>,
    pub sim_time_s: f64,
}

/// Full simulation input. `Default` gives the headline configuration:
/// 1,000 agents, 10,000 legitimate interactions, 10,000 + 10,000 attack
/// trials, defenses on.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub n_agents: usize,
    pub mu: f64,
    pub sigma: f64,
    /// Signed fractional latency-scale perturbation (0.2 means +20%).
    pub perturb: f64,
    pub legit_interactions: usize,
    pub spoof_trials: usize,
    pub violation_trials: usize,
    pub compromise_fraction: f64,
    pub baseline_insecure: bool,
    /// Adds tamper and replay trials against captured deliveries.
    pub extended_attacks: bool,
    pub extended_trials: usize,
    /// When set, the run also writes its records here as CSV.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            n_agents: 1_000,
            mu: DEFAULT_MU,
            sigma: DEFAULT_SIGMA,
            perturb: 0.0,
            legit_interactions: 10_000,
            spoof_trials: 10_000,
            violation_trials: 10_000,
            compromise_fraction: 0.05,
            baseline_insecure: false,
            extended_attacks: false,
            extended_trials: 1_000,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn posture(&self) -> DefensePosture {
        if self.baseline_insecure {
            DefensePosture::BaselineInsecure
        } else {
            DefensePosture::Secure
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let fail = |msg: &str| Err(RunError::Config(msg.to_string()));
        if self.n_agents < 2 {
            return fail("at least two agents are required");
        }
        if !self.mu.is_finite() {
            return fail("mu must be finite");
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return fail("sigma must be finite and positive");
        }
        if !(self.perturb.is_finite() && self.perturb > -1.0) {
            return fail("perturbation factor must be finite and greater than -1");
        }
        if !(0.0..=1.0).contains(&self.compromise_fraction) {
            return fail("compromise fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not write results: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ReportError> for RunError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io(io) => RunError::Io(io),
            ReportError::Malformed(msg) => RunError::Config(msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub records: Vec<TrialRecord>,
}

// ---------------------------------------------------------------------------
// Event queue
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct Event {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
}

#[derive(Debug)]
pub enum EventKind {
    InteractionStart { plan_index: usize },
    InteractionFinish(Box<FinishedInteraction>),
    AttackStart { plan_index: usize },
    AttackFinish { record: Box<TrialRecord> },
}

/// Payload of an interaction's finish event, boxed to keep queue entries
/// small: the record to emit and the delivery the adversary may now have
/// observed.
#[derive(Debug)]
pub struct FinishedInteraction {
    pub record: TrialRecord,
    pub capture: Option<CapturedDelivery>,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.sequence == other.sequence
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // (time, sequence) with the earliest first; sequence breaks ties so
    // simultaneous events stay in scheduling order.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Min-queue over (time, sequence). Never hands back an event earlier than
/// one it already delivered.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_sequence: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) {
        assert!(
            time.is_finite() && time >= self.now,
            "cannot schedule into the past"
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event {
            time,
            sequence,
            kind,
        });
    }

    pub fn pop(&mut self) -> Option<Event> {
        let event = self.heap.pop()?;
        debug_assert!(event.time >= self.now);
        self.now = event.time;
        Some(event)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Legitimate traffic
// ---------------------------------------------------------------------------

/// Pre-drawn parameters for one legitimate interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionPlan {
    pub reporter: usize,
    pub analyst: usize,
    pub classification: i64,
}

/// What one legitimate interaction produced, before record assembly.
#[derive(Debug)]
pub struct InteractionResult {
    pub outcome: TrialOutcome,
    pub rejection: Option<RejectionReason>,
    pub proof_time_s: Option<f64>,
    pub capture: Option<CapturedDelivery>,
}

/// One full legitimate exchange: handshake, sealed threat report, policy
/// proof, verification. Advances `clock` by every protocol cost it incurs.
/// The analyst proves compliance only when its clearance covers the report
/// classification; otherwise the prover refuses and the interaction ends as
/// a policy refusal.
pub fn legitimate_interaction(
    population: &mut Population,
    plan: InteractionPlan,
    ctx: &ProtocolContext<'_>,
    clock: &mut SimClock,
    rng: &mut impl Rng,
) -> InteractionResult {
    let ProtocolContext {
        pp,
        circuit,
        model,
        costs,
        posture,
    } = *ctx;
    let Population { agents, ledger } = population;
    assert_ne!(
        plan.reporter, plan.analyst,
        "an agent does not report to itself"
    );
    let analyst_did = agents[plan.analyst].did.clone();
    let reporter_did = agents[plan.reporter].did.clone();

    let (reporter_channel, init) = establish_channel(
        &reporter_did,
        &analyst_did.to_string(),
        ledger,
        rng,
        clock,
        costs,
    )
    .expect("population agents are registered");
    let analyst_channel = accept_channel(&analyst_did, &agents[plan.analyst].kem.private, &init)
        .expect("handshake targets the analyst's own registered key");

    let payload = format!("threat-report classification={}", plan.classification);
    let reporter_sig = agents[plan.reporter].sig.private;
    let env = seal(
        &reporter_channel,
        &reporter_sig,
        &mut agents[plan.reporter].nonces_out,
        payload.as_bytes(),
        clock,
        costs,
    );
    open_under(
        posture,
        &analyst_channel,
        &env,
        ledger,
        &mut agents[plan.analyst].nonces_in,
        clock,
        costs,
    )
    .expect("honest envelopes pass every check");
    let capture = Some(CapturedDelivery {
        env,
        channel: analyst_channel,
        target: plan.analyst,
    });

    let clearance = agents[plan.analyst].clearance;
    let statement = Statement::from_pairs([
        ("agent_clearance", clearance),
        ("data_classification", plan.classification),
    ]);
    let witness = Witness::from_pairs([("agent_private_state", 0)]);
    match prove(pp, circuit, &statement, &witness, model, rng, clock) {
        Ok((proof, proof_time_s)) => {
            let accepted = verify_under(posture, pp, circuit, &statement, &proof, clock, costs);
            assert!(accepted, "a freshly minted proof verifies");
            InteractionResult {
                outcome: TrialOutcome::Completed,
                rejection: None,
                proof_time_s: Some(proof_time_s),
                capture,
            }
        }
        Err(PolicyError::UnsatisfiedPolicy) => InteractionResult {
            outcome: TrialOutcome::PolicyRefusal,
            rejection: Some(RejectionReason::UnsatisfiedPolicy),
            proof_time_s: None,
            capture,
        },
        Err(e) => unreachable!("well-formed statement and witness: {e}"),
    }
}

// ---------------------------------------------------------------------------
// The run
// ---------------------------------------------------------------------------

/// Execute one full simulation. Root events (interactions and attack
/// trials) start at seed-drawn uniform times over a horizon of one second
/// per root, interleaving attacks with legitimate traffic; each trial's
/// record lands when its last protocol step completes.
pub fn run(config: &RunConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);

    let mut population = Population::build(config.n_agents, &mut rng);
    let mut adv = AdversaryState::setup(&mut population, config.compromise_fraction, &mut rng);
    let pp = setup(128, &mut rng);
    let circuit = data_access_circuit();
    let model = LatencyModel::new(config.mu, config.sigma).perturb(config.perturb);
    let costs = CostModel::default();
    let posture = config.posture();

    // Plan every root event before the first one executes.
    let reporters = population.indices_with_role(crate::population::Role::Reporter);
    let analysts = population.indices_with_role(crate::population::Role::Analyst);
    let interaction_plans: Vec<InteractionPlan> = (0..config.legit_interactions)
        .map(|_| InteractionPlan {
            reporter: reporters[rng.random_range(0..reporters.len())],
            analyst: analysts[rng.random_range(0..analysts.len())],
            classification: rng.random_range(1..=4),
        })
        .collect();
    let campaign = CampaignConfig {
        spoof_trials: config.spoof_trials,
        violation_trials: config.violation_trials,
        extended: config.extended_attacks,
        extended_trials: config.extended_trials,
    };
    let attack_plan = plan_campaign(&campaign, &population, &adv, &mut rng)
        .map_err(|e| RunError::Config(e.to_string()))?;

    let total_roots = interaction_plans.len() + attack_plan.len();
    let horizon = total_roots as f64;
    let mut queue = EventQueue::new();
    for plan_index in 0..interaction_plans.len() {
        let start = rng.random_range(0.0..horizon);
        queue.schedule(start, EventKind::InteractionStart { plan_index });
    }
    for plan_index in 0..attack_plan.len() {
        let start = rng.random_range(0.0..horizon);
        queue.schedule(start, EventKind::AttackStart { plan_index });
    }

    let ctx = ProtocolContext {
        pp: &pp,
        circuit: &circuit,
        model: &model,
        costs: &costs,
        posture,
    };
    let mut captures: Vec<CapturedDelivery> = Vec::new();
    let mut records: Vec<TrialRecord> = Vec::with_capacity(total_roots);
    while let Some(event) = queue.pop() {
        match event.kind {
            EventKind::InteractionStart { plan_index } => {
                let plan = interaction_plans[plan_index];
                let mut clock = SimClock::at(event.time);
                let result =
                    legitimate_interaction(&mut population, plan, &ctx, &mut clock, &mut rng);
                let record = TrialRecord {
                    trial_id: plan_index as u64,
                    kind: TrialKind::Legit,
                    initiator: population.agents[plan.reporter].did.identifier.clone(),
                    target: population.agents[plan.analyst].did.identifier.clone(),
                    clearance: Some(population.agents[plan.analyst].clearance),
                    classification: Some(plan.classification),
                    proof_time_s: result.proof_time_s.map(quantize3),
                    outcome: result.outcome,
                    rejection_reason: result.rejection,
                    sim_time_s: quantize3(clock.now()),
                };
                queue.schedule(
                    clock.now(),
                    EventKind::InteractionFinish(Box::new(FinishedInteraction {
                        record,
                        capture: result.capture,
                    })),
                );
            }
            EventKind::AttackStart { plan_index } => {
                let spec = &attack_plan[plan_index];
                let outcome =
                    execute_attack(spec, &mut adv, &mut population, &captures, &ctx, &mut rng);
                let finish = event.time + outcome.simulated_time;
                let trial_id = (interaction_plans.len() + plan_index) as u64;
                let record = attack_record(trial_id, &outcome, &captures, finish);
                queue.schedule(
                    finish,
                    EventKind::AttackFinish {
                        record: Box::new(record),
                    },
                );
            }
            EventKind::InteractionFinish(finished) => {
                records.push(finished.record);
                // The delivery is complete; from here the adversary may
                // replay or tamper with what it observed.
                captures.extend(finished.capture);
            }
            EventKind::AttackFinish { record } => records.push(*record),
        }
    }

    assert_eq!(
        records.len(),
        total_roots,
        "every root event yields exactly one record"
    );
    let summary = summarize(&records);
    if let Some(path) = &config.out {
        write_csv(&records, path)?;
    }
    Ok(RunOutput { summary, records })
}

/// Map an attack outcome onto the record schema. The initiator column names
/// the identity the attack wielded: the impersonated victim for spoofing,
/// the compromised agent for violations, the original sender for captured
/// traffic.
fn attack_record(
    trial_id: u64,
    outcome: &AttackOutcome,
    captures: &[CapturedDelivery],
    finish: f64,
) -> TrialRecord {
    let spec = &outcome.spec;
    let (kind, initiator, target, clearance, classification) = match &spec.detail {
        AttackDetail::Spoof { victim, .. } => (
            TrialKind::Spoof,
            victim.identifier.clone(),
            spec.target.clone(),
            None,
            None,
        ),
        AttackDetail::Violation {
            clearance,
            classification,
            ..
        } => (
            TrialKind::Violation,
            spec.target.clone(),
            String::new(),
            Some(*clearance),
            Some(*classification),
        ),
        AttackDetail::Tamper { capture_draw, .. } => {
            let (initiator, target) = captured_parties(captures, *capture_draw);
            (TrialKind::Tamper, initiator, target, None, None)
        }
        AttackDetail::ReplayCaptured { capture_draw } => {
            let (initiator, target) = captured_parties(captures, *capture_draw);
            (TrialKind::Replay, initiator, target, None, None)
        }
    };
    TrialRecord {
        trial_id,
        kind,
        initiator,
        target,
        clearance,
        classification,
        proof_time_s: outcome.proof_time_s.map(quantize3),
        outcome: if outcome.succeeded {
            TrialOutcome::AttackSuccess
        } else {
            TrialOutcome::AttackBlocked
        },
        rejection_reason: outcome.rejection,
        sim_time_s: quantize3(finish),
    }
}

fn captured_parties(captures: &[CapturedDelivery], capture_draw: u64) -> (String, String) {
    if captures.is_empty() {
        return (String::new(), String::new());
    }
    let captured = &captures[(capture_draw as usize) % captures.len()];
    let original_sender = captured.env.sender.identifier.clone();
    let receiver = captured.env.recipient.identifier.clone();
    (original_sender, receiver)
}
