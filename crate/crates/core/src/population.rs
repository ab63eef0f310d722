//! Agent population: identity-generated, ledger-registered agents with
//! roles and clearances, built deterministically from a seed.

use rand::Rng;

use crate::channel::{NonceIssuer, NonceTable};
use crate::crypto::{KemKeyPair, SigKeyPair};
use crate::identity::{generate_identity, register, Did, Ledger, DEFAULT_METHOD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Reporter,
    Analyst,
}

/// A simulated agent. Clearance stays within the policy circuit's range.
#[derive(Debug, Clone)]
pub struct Agent {
    pub did: Did,
    pub role: Role,
    pub clearance: i64,
    pub kem: KemKeyPair,
    pub sig: SigKeyPair,
    pub nonces_out: NonceIssuer,
    pub nonces_in: NonceTable,
}

/// The registered population. The ledger is mutable only during setup;
/// the event loop treats it as read-only.
#[derive(Debug, Clone)]
pub struct Population {
    pub agents: Vec<Agent>,
    pub ledger: Ledger,
}

impl Population {
    /// Build `n` agents: the first half (rounded up) report, the rest
    /// analyze; clearances are drawn uniformly from 1..=4.
    pub fn build(n: usize, rng: &mut impl Rng) -> Population {
        let mut ledger = Ledger::new(DEFAULT_METHOD);
        let mut agents = Vec::with_capacity(n);
        let reporters = n.div_ceil(2);
        for i in 0..n {
            let (did, kem, sig, doc) = generate_identity(rng);
            register(&mut ledger, &did, doc).expect("fresh identifiers never collide");
            let clearance = rng.random_range(1..=4);
            agents.push(Agent {
                did,
                role: if i < reporters {
                    Role::Reporter
                } else {
                    Role::Analyst
                },
                clearance,
                kem,
                sig,
                nonces_out: NonceIssuer::default(),
                nonces_in: NonceTable::default(),
            });
        }
        Population { agents, ledger }
    }

    pub fn indices_with_role(&self, role: Role) -> Vec<usize> {
        self.agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == role)
            .map(|(i, _)| i)
            .collect()
    }
}
