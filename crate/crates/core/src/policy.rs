//! Policy attestation: a declarative policy text compiles to an arithmetic
//! constraint circuit; a symbolically sound proof system attests that a
//! public statement satisfies it without exposing the witness.
//!
//! Soundness is carried by a module-private attestation secret: [`prove`] is
//! the only code path that mints a valid attestation, and it refuses
//! unsatisfied statements. A [`Proof`] is deliberately a fully public value
//! (anyone may fabricate one), so unforgeability is a property of the
//! attestation check, not of type privacy. [`forgery_game`] makes that
//! property executable.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::clock::SimClock;
use crate::latency::{CostModel, LatencyModel};
use crate::token::{push_field, Digest32, Token};
use crate::SimRng;

/// The data-access policy evaluated throughout the simulation: an analyst
/// may handle a report iff its clearance covers the data classification,
/// both on a four-level scale.
pub const DATA_ACCESS_POLICY: &str = "\
public agent_clearance int 1..4
public data_classification int 1..4
witness agent_private_state int
constraint agent_clearance - data_classification >= 0
";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("malformed policy line: {0:?}")]
    MalformedPolicy(String),
    #[error("unsupported constraint: {0:?}")]
    UnsupportedConstraint(String),
    #[error("undeclared variable: {0}")]
    UndeclaredVariable(String),
    #[error("variable declared twice: {0}")]
    DuplicateDeclaration(String),
    #[error("missing assignment for {0}")]
    MissingAssignment(String),
    #[error("statement does not satisfy the policy")]
    UnsatisfiedPolicy,
    #[error("witness variable {0} is constrained but has no declared range to search")]
    UnboundedWitness(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    /// lo <= var <= hi, from a ranged declaration.
    Range { var: String, lo: i64, hi: i64 },
    /// minuend - subtrahend >= 0.
    NonNegativeDifference { minuend: String, subtrahend: String },
}

/// Compiled policy. `circuit_id` is a digest of the normalized declarations
/// and constraints, so equal policies compile to equal ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyCircuit {
    pub circuit_id: Digest32,
    pub constraints: Vec<Constraint>,
    pub public_input_names: Vec<String>,
    pub witness_input_names: Vec<String>,
    ranges: BTreeMap<String, (i64, i64)>,
}

/// Public inputs by name. Canonical bytes are length-prefixed name/value
/// pairs in lexicographic name order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub assignments: BTreeMap<String, i64>,
}

impl Statement {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, i64)>) -> Self {
        Statement {
            assignments: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn digest(&self) -> Digest32 {
        let mut buf = Vec::new();
        for (name, value) in &self.assignments {
            push_field(&mut buf, name.as_bytes());
            push_field(&mut buf, &value.to_be_bytes());
        }
        Digest32::of(&buf)
    }
}

/// Private inputs by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub assignments: BTreeMap<String, i64>,
}

impl Witness {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, i64)>) -> Self {
        Witness {
            assignments: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

/// Proving parameters. The attestation secret never leaves this module;
/// everything else about a proof is public.
#[derive(Debug)]
pub struct ProofParams {
    pub params_id: Token,
    pub security_parameter: u32,
    attestation_secret: Token,
}

/// Attestation of a statement under some params and circuit. All fields are
/// public and forgeable; only [`verify_proof`] decides validity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proof {
    pub circuit_id: Digest32,
    pub statement_digest: Digest32,
    pub attestation: Digest32,
}

/// Compile a declarative policy text. One declaration per line:
/// `public <name> int [lo..hi]`, `witness <name> int [lo..hi]`, or
/// `constraint <a> - <b> >= 0`. Blank lines and `#` comments are skipped.
/// Ranged declarations compile to range constraints in declaration order.
pub fn compile_policy(spec: &str) -> Result<PolicyCircuit, PolicyError> {
    let mut public_input_names = Vec::new();
    let mut witness_input_names = Vec::new();
    let mut ranges = BTreeMap::new();
    let mut constraints = Vec::new();

    for raw in spec.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [vis @ ("public" | "witness"), name, "int", rest @ ..] => {
                let name = name.to_string();
                if public_input_names.contains(&name) || witness_input_names.contains(&name) {
                    return Err(PolicyError::DuplicateDeclaration(name));
                }
                match rest {
                    [] => {}
                    [range] => {
                        let (lo, hi) = parse_range(range)
                            .ok_or_else(|| PolicyError::MalformedPolicy(line.to_string()))?;
                        ranges.insert(name.clone(), (lo, hi));
                        constraints.push(Constraint::Range {
                            var: name.clone(),
                            lo,
                            hi,
                        });
                    }
                    _ => return Err(PolicyError::MalformedPolicy(line.to_string())),
                }
                if *vis == "public" {
                    public_input_names.push(name);
                } else {
                    witness_input_names.push(name);
                }
            }
            ["constraint", a, "-", b, ">=", "0"] => {
                constraints.push(Constraint::NonNegativeDifference {
                    minuend: a.to_string(),
                    subtrahend: b.to_string(),
                });
            }
            ["constraint", ..] => {
                return Err(PolicyError::UnsupportedConstraint(line.to_string()));
            }
            _ => return Err(PolicyError::MalformedPolicy(line.to_string())),
        }
    }

    let declared = |name: &str| {
        public_input_names.iter().any(|n| n == name)
            || witness_input_names.iter().any(|n| n == name)
    };
    for c in &constraints {
        let operands: &[&String] = match c {
            Constraint::Range { var, .. } => &[var],
            Constraint::NonNegativeDifference {
                minuend,
                subtrahend,
            } => &[minuend, subtrahend],
        };
        for op in operands {
            if !declared(op) {
                return Err(PolicyError::UndeclaredVariable((*op).clone()));
            }
        }
    }
    if constraints.is_empty() {
        return Err(PolicyError::MalformedPolicy(
            "policy declares no constraints".to_string(),
        ));
    }

    let circuit_id = circuit_digest(&public_input_names, &witness_input_names, &constraints);
    Ok(PolicyCircuit {
        circuit_id,
        constraints,
        public_input_names,
        witness_input_names,
        ranges,
    })
}

fn parse_range(text: &str) -> Option<(i64, i64)> {
    let (lo, hi) = text.split_once("..")?;
    let lo: i64 = lo.parse().ok()?;
    let hi: i64 = hi.parse().ok()?;
    (lo <= hi).then_some((lo, hi))
}

fn circuit_digest(
    publics: &[String],
    witnesses: &[String],
    constraints: &[Constraint],
) -> Digest32 {
    let mut buf = Vec::new();
    for name in publics {
        push_field(&mut buf, b"public");
        push_field(&mut buf, name.as_bytes());
    }
    for name in witnesses {
        push_field(&mut buf, b"witness");
        push_field(&mut buf, name.as_bytes());
    }
    for c in constraints {
        match c {
            Constraint::Range { var, lo, hi } => {
                push_field(&mut buf, b"range");
                push_field(&mut buf, var.as_bytes());
                push_field(&mut buf, &lo.to_be_bytes());
                push_field(&mut buf, &hi.to_be_bytes());
            }
            Constraint::NonNegativeDifference {
                minuend,
                subtrahend,
            } => {
                push_field(&mut buf, b"nonneg-diff");
                push_field(&mut buf, minuend.as_bytes());
                push_field(&mut buf, subtrahend.as_bytes());
            }
        }
    }
    Digest32::of(&buf)
}

/// The circuit compiled from [`DATA_ACCESS_POLICY`].
pub fn data_access_circuit() -> PolicyCircuit {
    compile_policy(DATA_ACCESS_POLICY).expect("built-in policy compiles")
}

fn check_coverage(
    provided: &BTreeMap<String, i64>,
    declared: &[String],
) -> Result<(), PolicyError> {
    for name in declared {
        if !provided.contains_key(name) {
            return Err(PolicyError::MissingAssignment(name.clone()));
        }
    }
    for name in provided.keys() {
        if !declared.contains(name) {
            return Err(PolicyError::UndeclaredVariable(name.clone()));
        }
    }
    Ok(())
}

/// Evaluate the constraint system. Total: every outcome is `Ok(bool)` once
/// the assignments cover exactly the declared inputs.
pub fn eval_circuit(
    circuit: &PolicyCircuit,
    statement: &Statement,
    witness: &Witness,
) -> Result<bool, PolicyError> {
    check_coverage(&statement.assignments, &circuit.public_input_names)?;
    check_coverage(&witness.assignments, &circuit.witness_input_names)?;
    let lookup = |name: &str| -> i64 {
        statement
            .assignments
            .get(name)
            .or_else(|| witness.assignments.get(name))
            .copied()
            .expect("coverage checked above")
    };
    for c in &circuit.constraints {
        let holds = match c {
            Constraint::Range { var, lo, hi } => {
                let v = lookup(var);
                *lo <= v && v <= *hi
            }
            Constraint::NonNegativeDifference {
                minuend,
                subtrahend,
            } => {
                // i128 widening: declared ranges are small, but assignments
                // are arbitrary i64 values.
                i128::from(lookup(minuend)) - i128::from(lookup(subtrahend)) >= 0
            }
        };
        if !holds {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Mint proving parameters with a fresh attestation secret.
pub fn setup(security_parameter: u32, rng: &mut impl Rng) -> ProofParams {
    assert!(
        security_parameter >= 1,
        "security parameter must be positive"
    );
    ProofParams {
        params_id: Token::mint(rng),
        security_parameter,
        attestation_secret: Token::mint(rng),
    }
}

fn attestation_for(pp: &ProofParams, circuit_id: Digest32, statement_digest: Digest32) -> Digest32 {
    let mut buf = Vec::new();
    push_field(&mut buf, b"attestation.v1");
    push_field(&mut buf, pp.attestation_secret.to_hex().as_bytes());
    push_field(&mut buf, pp.params_id.to_hex().as_bytes());
    push_field(&mut buf, &circuit_id.0);
    push_field(&mut buf, &statement_digest.0);
    Digest32::of(&buf)
}

/// Prove that `statement` satisfies `circuit` given `witness`. On success,
/// advances `clock` by a proof-generation latency sample and returns the
/// proof together with that sample. An unsatisfied statement is refused
/// without minting anything and without consuming simulated time.
pub fn prove(
    pp: &ProofParams,
    circuit: &PolicyCircuit,
    statement: &Statement,
    witness: &Witness,
    model: &LatencyModel,
    rng: &mut impl Rng,
    clock: &mut SimClock,
) -> Result<(Proof, f64), PolicyError> {
    if !eval_circuit(circuit, statement, witness)? {
        return Err(PolicyError::UnsatisfiedPolicy);
    }
    let statement_digest = statement.digest();
    let proof = Proof {
        circuit_id: circuit.circuit_id,
        statement_digest,
        attestation: attestation_for(pp, circuit.circuit_id, statement_digest),
    };
    let proof_time_s = model.sample(rng);
    clock.advance(proof_time_s);
    Ok((proof, proof_time_s))
}

/// Check a proof against (params, circuit, statement). Charges the constant
/// verification cost; rejection is a value.
pub fn verify_proof(
    pp: &ProofParams,
    circuit: &PolicyCircuit,
    statement: &Statement,
    proof: &Proof,
    clock: &mut SimClock,
    costs: &CostModel,
) -> bool {
    clock.advance(costs.proof_verify_s);
    let statement_digest = statement.digest();
    proof.circuit_id == circuit.circuit_id
        && proof.statement_digest == statement_digest
        && proof.attestation == attestation_for(pp, circuit.circuit_id, statement_digest)
}

/// Decide whether any witness satisfies `statement` by exhausting the
/// declared witness ranges. A witness variable with no declared range is
/// admissible only if no constraint mentions it (the built-in policy's
/// private state is such a variable); otherwise the search is undecidable
/// here and reported as an error.
pub fn witness_satisfiable(
    circuit: &PolicyCircuit,
    statement: &Statement,
) -> Result<bool, PolicyError> {
    let mut domains: Vec<(String, Vec<i64>)> = Vec::new();
    for name in &circuit.witness_input_names {
        match circuit.ranges.get(name) {
            Some((lo, hi)) => domains.push((name.clone(), (*lo..=*hi).collect())),
            None => {
                let constrained = circuit.constraints.iter().any(|c| match c {
                    Constraint::Range { var, .. } => var == name,
                    Constraint::NonNegativeDifference {
                        minuend,
                        subtrahend,
                    } => minuend == name || subtrahend == name,
                });
                if constrained {
                    return Err(PolicyError::UnboundedWitness(name.clone()));
                }
                domains.push((name.clone(), vec![0]));
            }
        }
    }

    let mut assignment = BTreeMap::new();
    search(circuit, statement, &domains, 0, &mut assignment)
}

fn search(
    circuit: &PolicyCircuit,
    statement: &Statement,
    domains: &[(String, Vec<i64>)],
    depth: usize,
    assignment: &mut BTreeMap<String, i64>,
) -> Result<bool, PolicyError> {
    if depth == domains.len() {
        let witness = Witness {
            assignments: assignment.clone(),
        };
        return eval_circuit(circuit, statement, &witness);
    }
    let (name, values) = &domains[depth];
    for v in values {
        assignment.insert(name.clone(), *v);
        if search(circuit, statement, domains, depth + 1, assignment)? {
            return Ok(true);
        }
    }
    assignment.remove(name);
    Ok(false)
}

/// Bounded prove oracle handed to a forgery adversary: honest proofs on
/// satisfying pairs of the adversary's choosing, up to the query budget.
pub struct ProveOracle<'a> {
    pp: &'a ProofParams,
    circuit: &'a PolicyCircuit,
    model: LatencyModel,
    queries_left: usize,
}

impl ProveOracle<'_> {
    pub fn queries_left(&self) -> usize {
        self.queries_left
    }

    /// Honest oracle: refuses once the budget is spent or when the pair
    /// does not satisfy the circuit.
    pub fn query(
        &mut self,
        statement: &Statement,
        witness: &Witness,
        rng: &mut SimRng,
    ) -> Option<Proof> {
        if self.queries_left == 0 {
            return None;
        }
        self.queries_left -= 1;
        let mut scratch = SimClock::new();
        prove(
            self.pp,
            self.circuit,
            statement,
            witness,
            &self.model,
            rng,
            &mut scratch,
        )
        .ok()
        .map(|(proof, _)| proof)
    }
}

/// A forgery adversary: given oracle access, output a claimed
/// (statement, proof) pair.
pub trait ForgeryStrategy {
    fn forge(
        &mut self,
        circuit: &PolicyCircuit,
        oracle: &mut ProveOracle<'_>,
        rng: &mut SimRng,
    ) -> (Statement, Proof);
}

/// Run one unforgeability game. The adversary wins iff its proof verifies
/// and its statement has no satisfying witness.
pub fn forgery_game(
    pp: &ProofParams,
    circuit: &PolicyCircuit,
    strategy: &mut dyn ForgeryStrategy,
    query_budget: usize,
    rng: &mut SimRng,
) -> bool {
    let mut oracle = ProveOracle {
        pp,
        circuit,
        model: LatencyModel::default(),
        queries_left: query_budget,
    };
    let (statement, proof) = strategy.forge(circuit, &mut oracle, rng);
    let mut scratch = SimClock::new();
    if !verify_proof(
        pp,
        circuit,
        &statement,
        &proof,
        &mut scratch,
        &CostModel::default(),
    ) {
        return false;
    }
    let satisfiable = witness_satisfiable(circuit, &statement)
        .expect("an accepted proof implies a well-formed statement");
    !satisfiable
}

/// Stock adversaries for the soundness game, all against the data-access
/// circuit's statement shape.
pub mod strategies {
    use super::*;

    fn random_statement_pair(rng: &mut SimRng) -> (Statement, Statement) {
        // A satisfying statement and a false one, sharing no digest.
        let c = rng.random_range(1..=4i64);
        let d = rng.random_range(1..=c);
        let satisfying =
            Statement::from_pairs([("agent_clearance", c), ("data_classification", d)]);
        let c = rng.random_range(1..=3i64);
        let d = rng.random_range((c + 1)..=4);
        let violating = Statement::from_pairs([("agent_clearance", c), ("data_classification", d)]);
        (satisfying, violating)
    }

    /// Queries the oracle on a satisfying pair, then re-submits the oracle's
    /// proof verbatim under a violating statement.
    pub struct Replay;

    impl ForgeryStrategy for Replay {
        fn forge(
            &mut self,
            _circuit: &PolicyCircuit,
            oracle: &mut ProveOracle<'_>,
            rng: &mut SimRng,
        ) -> (Statement, Proof) {
            let (satisfying, violating) = random_statement_pair(rng);
            let witness = Witness::from_pairs([("agent_private_state", 0)]);
            let proof = oracle
                .query(&satisfying, &witness, rng)
                .expect("oracle accepts a satisfying pair within budget");
            (violating, proof)
        }
    }

    /// Like [`Replay`], but also rewrites the proof's statement digest to
    /// match the violating statement, attacking the attestation directly.
    pub struct StatementSwap;

    impl ForgeryStrategy for StatementSwap {
        fn forge(
            &mut self,
            _circuit: &PolicyCircuit,
            oracle: &mut ProveOracle<'_>,
            rng: &mut SimRng,
        ) -> (Statement, Proof) {
            let (satisfying, violating) = random_statement_pair(rng);
            let witness = Witness::from_pairs([("agent_private_state", 0)]);
            let mut proof = oracle
                .query(&satisfying, &witness, rng)
                .expect("oracle accepts a satisfying pair within budget");
            proof.statement_digest = violating.digest();
            (violating, proof)
        }
    }

    /// No oracle use: fabricates the attestation from random bytes.
    pub struct RandomToken;

    impl ForgeryStrategy for RandomToken {
        fn forge(
            &mut self,
            circuit: &PolicyCircuit,
            _oracle: &mut ProveOracle<'_>,
            rng: &mut SimRng,
        ) -> (Statement, Proof) {
            let (_, violating) = random_statement_pair(rng);
            let mut bytes = [0u8; 32];
            rng.fill(&mut bytes);
            let proof = Proof {
                circuit_id: circuit.circuit_id,
                statement_digest: violating.digest(),
                attestation: Digest32(bytes),
            };
            (violating, proof)
        }
    }

    /// Control case: submits an honestly proven *true* statement. Verifies,
    /// but is not a win by the game's definition.
    pub struct HonestStatement;

    impl ForgeryStrategy for HonestStatement {
        fn forge(
            &mut self,
            _circuit: &PolicyCircuit,
            oracle: &mut ProveOracle<'_>,
            rng: &mut SimRng,
        ) -> (Statement, Proof) {
            let (satisfying, _) = random_statement_pair(rng);
            let witness = Witness::from_pairs([("agent_private_state", 0)]);
            let proof = oracle
                .query(&satisfying, &witness, rng)
                .expect("oracle accepts a satisfying pair within budget");
            (satisfying, proof)
        }
    }
}
