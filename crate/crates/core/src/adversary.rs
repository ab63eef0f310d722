//! Extended Dolev-Yao adversary: full network control (intercept, inject,
//! modify, replay) plus per-run agent compromise, and the attack campaign
//! that exercises the protocol's defenses.
//!
//! The adversary only ever acts through public protocol operations and keys
//! it legitimately holds (its own registered identity, plus those of
//! compromised agents). Attacks are planned before execution, so the trial
//! stream under a fixed seed never depends on defense responses.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::channel::{
    accept_channel, establish_channel, open, seal_as, Channel, Envelope, EnvelopeMutation,
    NonceIssuer, NonceTable, OpenRejection,
};
use crate::clock::SimClock;
use crate::crypto::{KemKeyPair, SigKeyPair};
use crate::identity::{generate_identity, register, Did, Ledger};
use crate::latency::{CostModel, LatencyModel};
use crate::policy::{
    prove, verify_proof, PolicyCircuit, PolicyError, Proof, ProofParams, Statement, Witness,
};
use crate::population::{Agent, Population};
use crate::token::Digest32;

/// Why a defended system refused an action. One vocabulary for both attack
/// outcomes and honest-path rejections, so trial records stay uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectionReason {
    BadSignature,
    StaleNonce,
    UnknownSender,
    WrongChannel,
    UnsatisfiedPolicy,
    InvalidProof,
    NotFound,
    DecapsulationMismatch,
    NothingCaptured,
}

impl RejectionReason {
    pub const ALL: [RejectionReason; 9] = [
        RejectionReason::BadSignature,
        RejectionReason::StaleNonce,
        RejectionReason::UnknownSender,
        RejectionReason::WrongChannel,
        RejectionReason::UnsatisfiedPolicy,
        RejectionReason::InvalidProof,
        RejectionReason::NotFound,
        RejectionReason::DecapsulationMismatch,
        RejectionReason::NothingCaptured,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            RejectionReason::BadSignature => "bad_signature",
            RejectionReason::StaleNonce => "stale_nonce",
            RejectionReason::UnknownSender => "unknown_sender",
            RejectionReason::WrongChannel => "wrong_channel",
            RejectionReason::UnsatisfiedPolicy => "unsatisfied_policy",
            RejectionReason::InvalidProof => "invalid_proof",
            RejectionReason::NotFound => "not_found",
            RejectionReason::DecapsulationMismatch => "decapsulation_mismatch",
            RejectionReason::NothingCaptured => "nothing_captured",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.label() == label)
    }
}

impl From<OpenRejection> for RejectionReason {
    fn from(r: OpenRejection) -> Self {
        match r {
            OpenRejection::BadSignature => RejectionReason::BadSignature,
            OpenRejection::StaleNonce => RejectionReason::StaleNonce,
            OpenRejection::UnknownSender => RejectionReason::UnknownSender,
            OpenRejection::WrongChannel => RejectionReason::WrongChannel,
        }
    }
}

/// Whether defenses are active. The insecure posture is an experimental
/// control: every verification point accepts unconditionally, giving the
/// >0% baseline that the protocol's 0% is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefensePosture {
    Secure,
    BaselineInsecure,
}

impl DefensePosture {
    pub fn insecure(&self) -> bool {
        matches!(self, DefensePosture::BaselineInsecure)
    }
}

/// Open an envelope under the configured posture. Insecure mode skips every
/// check but still pays the verification cost, keeping timings comparable.
pub fn open_under(
    posture: DefensePosture,
    channel: &Channel,
    env: &Envelope,
    ledger: &Ledger,
    nonces: &mut NonceTable,
    clock: &mut SimClock,
    costs: &CostModel,
) -> Result<Vec<u8>, OpenRejection> {
    match posture {
        DefensePosture::Secure => open(channel, env, ledger, nonces, clock, costs),
        DefensePosture::BaselineInsecure => {
            clock.advance(costs.verify_sig_s);
            Ok(env.payload_unchecked().to_vec())
        }
    }
}

/// Verify a proof under the configured posture.
pub fn verify_under(
    posture: DefensePosture,
    pp: &ProofParams,
    circuit: &PolicyCircuit,
    statement: &Statement,
    proof: &Proof,
    clock: &mut SimClock,
    costs: &CostModel,
) -> bool {
    match posture {
        DefensePosture::Secure => verify_proof(pp, circuit, statement, proof, clock, costs),
        DefensePosture::BaselineInsecure => {
            clock.advance(costs.proof_verify_s);
            true
        }
    }
}

// ---------------------------------------------------------------------------
// Dolev-Yao network surface
// ---------------------------------------------------------------------------

/// Minimal wire: envelopes in flight, fully visible to the adversary.
#[derive(Debug, Clone, Default)]
pub struct Network {
    in_flight: VecDeque<Envelope>,
}

impl Network {
    pub fn transmit(&mut self, env: Envelope) {
        self.in_flight.push_back(env);
    }

    pub fn deliver(&mut self) -> Option<Envelope> {
        self.in_flight.pop_front()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}

/// An identity the adversary legitimately controls.
#[derive(Debug, Clone)]
pub struct AdversaryIdentity {
    pub did: Did,
    pub kem: KemKeyPair,
    pub sig: SigKeyPair,
}

/// Adversary state. Holds only its own keys and the indices of compromised
/// agents; everything else it knows came off the wire.
#[derive(Debug, Clone)]
pub struct AdversaryState {
    pub identity: AdversaryIdentity,
    pub compromised: BTreeSet<usize>,
    observed: Vec<Envelope>,
    nonces: NonceIssuer,
}

impl AdversaryState {
    /// Register one adversary identity and mark a seed-drawn fraction of the
    /// population as compromised. Runs during setup, before the ledger
    /// freezes.
    pub fn setup(
        population: &mut Population,
        compromise_fraction: f64,
        rng: &mut impl Rng,
    ) -> AdversaryState {
        assert!(
            (0.0..=1.0).contains(&compromise_fraction),
            "compromise fraction must lie in [0, 1]"
        );
        let (did, kem, sig, doc) = generate_identity(rng);
        register(&mut population.ledger, &did, doc).expect("fresh identifiers never collide");
        let count = (population.agents.len() as f64 * compromise_fraction).round() as usize;
        let compromised = rand::seq::index::sample(rng, population.agents.len(), count)
            .into_iter()
            .collect();
        AdversaryState {
            identity: AdversaryIdentity { did, kem, sig },
            compromised,
            observed: Vec::new(),
            nonces: NonceIssuer::default(),
        }
    }

    /// Record a transmission. The capture log is append-only.
    pub fn observe(&mut self, env: &Envelope) {
        self.observed.push(env.clone());
    }

    pub fn observed(&self) -> &[Envelope] {
        &self.observed
    }

    /// Remove an in-flight envelope from the wire, logging it.
    pub fn intercept(&mut self, network: &mut Network) -> Option<Envelope> {
        let env = network.deliver()?;
        self.observed.push(env.clone());
        Some(env)
    }

    /// Put an arbitrary envelope on the wire.
    pub fn inject(&self, network: &mut Network, env: Envelope) {
        network.transmit(env);
    }

    /// Mutated copy of an envelope; the original is untouched.
    pub fn modify(&self, env: &Envelope, mutation: EnvelopeMutation) -> Envelope {
        env.mutated(mutation)
    }

    /// Re-enqueue a previously observed envelope verbatim.
    pub fn replay(&self, network: &mut Network, env: &Envelope) {
        network.transmit(env.clone());
    }
}

// ---------------------------------------------------------------------------
// Attack taxonomy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackKind {
    Spoofing,
    PolicyViolation,
    Tampering,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationVector {
    /// Submit a proof whose attestation is random bytes.
    Fabricate,
    /// Mint a genuine proof for a satisfying statement, then submit it
    /// against the violating one.
    ReplayProof,
}

/// Fully pre-drawn attack parameters: executing a spec consumes no
/// outcome-dependent randomness beyond what the spec fixes.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackDetail {
    Spoof {
        /// Claimed sender. May be unregistered, in which case the receiver
        /// rejects with UnknownSender rather than BadSignature.
        victim: Did,
        /// Sign with a freshly fabricated key instead of the adversary's
        /// registered one. Both fail verification against the victim's
        /// registered key.
        fabricate_key: bool,
    },
    Violation {
        agent_index: usize,
        clearance: i64,
        classification: i64,
        vector: ViolationVector,
    },
    Tamper {
        capture_draw: u64,
        bit: u32,
    },
    ReplayCaptured {
        capture_draw: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Identifier of the attacked agent (receiver for spoof, the wielded
    /// agent for violations; resolved from the capture log for tamper and
    /// replay).
    pub target: String,
    pub detail: AttackDetail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub spec: AttackSpec,
    /// True iff a defended verification point accepted the action.
    pub succeeded: bool,
    pub rejection: Option<RejectionReason>,
    /// Simulated seconds the attempt consumed.
    pub simulated_time: f64,
    /// Present when the attempt minted a genuine proof along the way.
    pub proof_time_s: Option<f64>,
}

/// A delivery the event loop completed: envelope, the receiving channel,
/// and the receiver's population index. Tamper/replay trials re-present
/// these to the same receiver.
#[derive(Debug, Clone)]
pub struct CapturedDelivery {
    pub env: Envelope,
    pub channel: Channel,
    pub target: usize,
}

/// Shared read-only protocol state for executing one trial, legitimate or
/// adversarial: parameters, circuit, latency model, costs, and the active
/// defense posture.
#[derive(Clone, Copy)]
pub struct ProtocolContext<'a> {
    pub pp: &'a ProofParams,
    pub circuit: &'a PolicyCircuit,
    pub model: &'a LatencyModel,
    pub costs: &'a CostModel,
    pub posture: DefensePosture,
}

/// Impersonate `victim` toward `target`: a real handshake to the target
/// (encapsulation needs only public keys), then an envelope claiming the
/// victim's identity, signed with a key the adversary actually holds.
pub fn attempt_spoof(
    adv: &mut AdversaryState,
    victim: &Did,
    target: &mut Agent,
    ledger: &Ledger,
    fabricate_key: bool,
    ctx: &ProtocolContext<'_>,
    rng: &mut impl Rng,
) -> AttackOutcome {
    let spec = AttackSpec {
        kind: AttackKind::Spoofing,
        target: target.did.identifier.clone(),
        detail: AttackDetail::Spoof {
            victim: victim.clone(),
            fabricate_key,
        },
    };
    let mut clock = SimClock::new();
    let (adv_channel, init) = establish_channel(
        victim, // masquerade starts at the handshake
        &target.did.to_string(),
        ledger,
        rng,
        &mut clock,
        ctx.costs,
    )
    .expect("target is registered");
    let target_channel = accept_channel(&target.did, &target.kem.private, &init)
        .expect("handshake encapsulated to the target's registered key");

    let signing_key = if fabricate_key {
        SigKeyPair::generate(rng).private
    } else {
        adv.identity.sig.private
    };
    let nonce = adv.nonces.issue();
    let env = seal_as(
        victim,
        &adv_channel,
        &signing_key,
        nonce,
        b"spoofed directive",
    );
    clock.advance(ctx.costs.sign_s);

    let result = open_under(
        ctx.posture,
        &target_channel,
        &env,
        ledger,
        &mut target.nonces_in,
        &mut clock,
        ctx.costs,
    );
    AttackOutcome {
        spec,
        succeeded: result.is_ok(),
        rejection: result.err().map(RejectionReason::from),
        simulated_time: clock.now(),
        proof_time_s: None,
    }
}

/// Escalate a compromised agent past its clearance. The honest prover
/// refuses the violating statement, so the adversary falls back to a forged
/// or replayed proof; a defended verifier rejects both.
pub fn attempt_policy_violation(
    adv: &AdversaryState,
    agent: &Agent,
    agent_index: usize,
    classification: i64,
    vector: ViolationVector,
    ctx: &ProtocolContext<'_>,
    rng: &mut impl Rng,
) -> AttackOutcome {
    assert!(
        adv.compromised.contains(&agent_index),
        "adversary only wields keys of compromised agents"
    );
    assert!(
        classification > agent.clearance,
        "a permitted access is not an attack trial"
    );
    let spec = AttackSpec {
        kind: AttackKind::PolicyViolation,
        target: agent.did.identifier.clone(),
        detail: AttackDetail::Violation {
            agent_index,
            clearance: agent.clearance,
            classification,
            vector,
        },
    };
    let mut clock = SimClock::new();
    let violating = Statement::from_pairs([
        ("agent_clearance", agent.clearance),
        ("data_classification", classification),
    ]);
    let witness = Witness::from_pairs([("agent_private_state", 0)]);

    // Honest route first: the prover itself must refuse.
    match prove(
        ctx.pp,
        ctx.circuit,
        &violating,
        &witness,
        ctx.model,
        rng,
        &mut clock,
    ) {
        Err(PolicyError::UnsatisfiedPolicy) => {}
        Ok(_) => {
            // Soundness failure if ever reached; report it as the success
            // it would be rather than masking it.
            return AttackOutcome {
                spec,
                succeeded: true,
                rejection: None,
                simulated_time: clock.now(),
                proof_time_s: None,
            };
        }
        Err(e) => unreachable!("violating statement is well-formed: {e}"),
    }

    let (forged, proof_time_s) = match vector {
        ViolationVector::Fabricate => {
            let mut bytes = [0u8; 32];
            rng.fill(&mut bytes);
            let proof = Proof {
                circuit_id: ctx.circuit.circuit_id,
                statement_digest: violating.digest(),
                attestation: Digest32(bytes),
            };
            (proof, None)
        }
        ViolationVector::ReplayProof => {
            let permitted = rng.random_range(1..=agent.clearance);
            let satisfying = Statement::from_pairs([
                ("agent_clearance", agent.clearance),
                ("data_classification", permitted),
            ]);
            let (proof, dt) = prove(
                ctx.pp,
                ctx.circuit,
                &satisfying,
                &witness,
                ctx.model,
                rng,
                &mut clock,
            )
            .expect("satisfying statement proves");
            (proof, Some(dt))
        }
    };

    let accepted = verify_under(
        ctx.posture,
        ctx.pp,
        ctx.circuit,
        &violating,
        &forged,
        &mut clock,
        ctx.costs,
    );
    AttackOutcome {
        spec,
        succeeded: accepted,
        rejection: (!accepted).then_some(RejectionReason::InvalidProof),
        simulated_time: clock.now(),
        proof_time_s,
    }
}

/// Flip a payload bit in a captured delivery and re-present it.
pub fn attempt_tamper(
    captured: &CapturedDelivery,
    bit: u32,
    target: &mut Agent,
    ledger: &Ledger,
    ctx: &ProtocolContext<'_>,
) -> AttackOutcome {
    let spec = AttackSpec {
        kind: AttackKind::Tampering,
        target: target.did.identifier.clone(),
        detail: AttackDetail::Tamper {
            capture_draw: 0,
            bit,
        },
    };
    let mut clock = SimClock::new();
    let tampered = captured
        .env
        .mutated(EnvelopeMutation::FlipPayloadBit { bit });
    let result = open_under(
        ctx.posture,
        &captured.channel,
        &tampered,
        ledger,
        &mut target.nonces_in,
        &mut clock,
        ctx.costs,
    );
    AttackOutcome {
        spec,
        succeeded: result.is_ok(),
        rejection: result.err().map(RejectionReason::from),
        simulated_time: clock.now(),
        proof_time_s: None,
    }
}

/// Re-present a captured delivery verbatim.
pub fn attempt_replay(
    captured: &CapturedDelivery,
    target: &mut Agent,
    ledger: &Ledger,
    ctx: &ProtocolContext<'_>,
) -> AttackOutcome {
    let spec = AttackSpec {
        kind: AttackKind::Replay,
        target: target.did.identifier.clone(),
        detail: AttackDetail::ReplayCaptured { capture_draw: 0 },
    };
    let mut clock = SimClock::new();
    let result = open_under(
        ctx.posture,
        &captured.channel,
        &captured.env,
        ledger,
        &mut target.nonces_in,
        &mut clock,
        ctx.costs,
    );
    AttackOutcome {
        spec,
        succeeded: result.is_ok(),
        rejection: result.err().map(RejectionReason::from),
        simulated_time: clock.now(),
        proof_time_s: None,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CampaignError {
    #[error("policy-violation trials require a compromised agent below maximum clearance")]
    NoEligibleViolator,
    #[error("spoofing trials require a non-compromised agent to impersonate")]
    NoSpoofVictim,
}

/// Attack mix for one campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CampaignConfig {
    pub spoof_trials: usize,
    pub violation_trials: usize,
    /// Adds tamper and replay trials (excluded from the headline campaign).
    pub extended: bool,
    pub extended_trials: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            spoof_trials: 10_000,
            violation_trials: 10_000,
            extended: false,
            extended_trials: 1_000,
        }
    }
}

/// Pre-draw the whole campaign: every parameter of every trial is fixed
/// here, before any attack executes. This is what makes the adversary
/// non-adaptive by construction.
pub fn plan_campaign(
    campaign: &CampaignConfig,
    population: &Population,
    adv: &AdversaryState,
    rng: &mut impl Rng,
) -> Result<Vec<AttackSpec>, CampaignError> {
    let n = population.agents.len();
    let non_compromised: Vec<usize> = (0..n).filter(|i| !adv.compromised.contains(i)).collect();
    let eligible_violators: Vec<usize> = adv
        .compromised
        .iter()
        .copied()
        .filter(|&i| population.agents[i].clearance < 4)
        .collect();
    if campaign.violation_trials > 0 && eligible_violators.is_empty() {
        return Err(CampaignError::NoEligibleViolator);
    }
    if campaign.spoof_trials > 0 && non_compromised.is_empty() {
        return Err(CampaignError::NoSpoofVictim);
    }

    let mut kinds = Vec::new();
    kinds.extend(std::iter::repeat_n(
        AttackKind::Spoofing,
        campaign.spoof_trials,
    ));
    kinds.extend(std::iter::repeat_n(
        AttackKind::PolicyViolation,
        campaign.violation_trials,
    ));
    if campaign.extended {
        kinds.extend(std::iter::repeat_n(
            AttackKind::Tampering,
            campaign.extended_trials,
        ));
        kinds.extend(std::iter::repeat_n(
            AttackKind::Replay,
            campaign.extended_trials,
        ));
    }
    kinds.shuffle(rng);

    let mut plan = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let spec = match kind {
            AttackKind::Spoofing => {
                let victim = non_compromised[rng.random_range(0..non_compromised.len())];
                let target = loop {
                    let t = rng.random_range(0..n);
                    if t != victim {
                        break t;
                    }
                };
                AttackSpec {
                    kind,
                    target: population.agents[target].did.identifier.clone(),
                    detail: AttackDetail::Spoof {
                        victim: population.agents[victim].did.clone(),
                        fabricate_key: rng.random_bool(0.5),
                    },
                }
            }
            AttackKind::PolicyViolation => {
                let agent_index = eligible_violators[rng.random_range(0..eligible_violators.len())];
                let agent = &population.agents[agent_index];
                AttackSpec {
                    kind,
                    target: agent.did.identifier.clone(),
                    detail: AttackDetail::Violation {
                        agent_index,
                        clearance: agent.clearance,
                        classification: rng.random_range((agent.clearance + 1)..=4),
                        vector: if rng.random_bool(0.5) {
                            ViolationVector::Fabricate
                        } else {
                            ViolationVector::ReplayProof
                        },
                    },
                }
            }
            AttackKind::Tampering => AttackSpec {
                kind,
                target: String::new(), // resolved against the capture log at execution
                detail: AttackDetail::Tamper {
                    capture_draw: rng.random(),
                    bit: rng.random(),
                },
            },
            AttackKind::Replay => AttackSpec {
                kind,
                target: String::new(),
                detail: AttackDetail::ReplayCaptured {
                    capture_draw: rng.random(),
                },
            },
        };
        plan.push(spec);
    }
    Ok(plan)
}

/// Execute one planned attack against the population.
pub fn execute_attack(
    spec: &AttackSpec,
    adv: &mut AdversaryState,
    population: &mut Population,
    captures: &[CapturedDelivery],
    ctx: &ProtocolContext<'_>,
    rng: &mut impl Rng,
) -> AttackOutcome {
    let Population { agents, ledger } = population;
    match &spec.detail {
        AttackDetail::Spoof {
            victim,
            fabricate_key,
        } => {
            let target = agents
                .iter()
                .position(|a| a.did.identifier == spec.target)
                .expect("planned targets exist");
            attempt_spoof(
                adv,
                victim,
                &mut agents[target],
                ledger,
                *fabricate_key,
                ctx,
                rng,
            )
        }
        AttackDetail::Violation {
            agent_index,
            classification,
            vector,
            ..
        } => attempt_policy_violation(
            adv,
            &agents[*agent_index].clone(),
            *agent_index,
            *classification,
            *vector,
            ctx,
            rng,
        ),
        AttackDetail::Tamper { capture_draw, bit } => {
            if captures.is_empty() {
                return nothing_captured(spec.clone());
            }
            let captured = &captures[(*capture_draw as usize) % captures.len()];
            attempt_tamper(captured, *bit, &mut agents[captured.target], ledger, ctx)
        }
        AttackDetail::ReplayCaptured { capture_draw } => {
            if captures.is_empty() {
                return nothing_captured(spec.clone());
            }
            let captured = &captures[(*capture_draw as usize) % captures.len()];
            attempt_replay(captured, &mut agents[captured.target], ledger, ctx)
        }
    }
}

fn nothing_captured(spec: AttackSpec) -> AttackOutcome {
    AttackOutcome {
        spec,
        succeeded: false,
        rejection: Some(RejectionReason::NothingCaptured),
        simulated_time: 0.0,
        proof_time_s: None,
    }
}

/// Plan and execute a full campaign back to back. The event engine instead
/// interleaves the same planned specs with legitimate traffic; this entry
/// point runs them stand-alone.
pub fn run_attack_campaign(
    campaign: &CampaignConfig,
    population: &mut Population,
    adv: &mut AdversaryState,
    captures: &[CapturedDelivery],
    ctx: &ProtocolContext<'_>,
    rng: &mut impl Rng,
) -> Result<Vec<AttackOutcome>, CampaignError> {
    let plan = plan_campaign(campaign, population, adv, rng)?;
    Ok(plan
        .iter()
        .map(|spec| execute_attack(spec, adv, population, captures, ctx, rng))
        .collect())
}
