//! Aegis: a three-layer agent security protocol (decentralized identity,
//! authenticated post-quantum-shaped channels, zero-knowledge policy
//! attestation) modeled symbolically under a Dolev-Yao adversary, together
//! with a deterministic discrete-event simulator that measures proof latency
//! and attack effectiveness over large agent populations.
//!
//! Cryptography here is *symbolic*: keys, secrets, and attestations are
//! opaque unforgeable tokens with perfect-cryptography semantics, not lattice
//! math. Timing is simulated: proof generation draws from a calibrated
//! log-normal model and advances a simulated clock, so campaigns that would
//! take days of wall time run in seconds.

pub mod adversary;
pub mod channel;
pub mod clock;
pub mod crypto;
pub mod engine;
pub mod identity;
pub mod latency;
pub mod policy;
pub mod population;
pub mod report;
pub mod token;

pub use clock::SimClock;
pub use engine::{RunConfig, RunOutput, TrialRecord};
pub use latency::{CostModel, LatencyModel};
pub use report::RunSummary;
pub use token::{Digest32, Token};

/// Deterministic RNG used everywhere a seed is threaded through the
/// simulator. ChaCha keeps the stream stable across platforms.
pub type SimRng = rand_chacha::ChaCha12Rng;

/// Build the run RNG for a seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
