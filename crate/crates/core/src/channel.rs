//! Symbolic secure channel: KEM handshake plus signed, nonce-protected
//! envelopes.
//!
//! Confidentiality is modeled as an access check: an envelope's payload is
//! reachable only through [`open`] on a channel holding the matching shared
//! secret, not by field access. Authenticity is a real check against the
//! ledger: [`open`] verifies the signature under the *registered* key of the
//! claimed sender, so an envelope sealed under any other key is rejected no
//! matter who claims to have sent it.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::clock::SimClock;
use crate::crypto::{
    kem_decapsulate, kem_encapsulate, sign, verify, Ciphertext, CryptoError, KemPrivateKey,
    SigPrivateKey,
};
use crate::identity::{resolve_did, Did, IdentityError, Ledger};
use crate::latency::CostModel;
use crate::token::push_field;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Typed rejection from [`open`]. Rejection is a value, not a panic: the
/// event loop logs it and moves on.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpenRejection {
    /// Claimed sender does not resolve on the ledger.
    #[error("unknown sender")]
    UnknownSender,
    /// Signature does not verify under the claimed sender's registered key.
    #[error("bad signature")]
    BadSignature,
    /// Envelope was sealed under a different channel secret.
    #[error("wrong channel")]
    WrongChannel,
    /// Nonce does not exceed the last accepted nonce from this sender.
    #[error("stale nonce")]
    StaleNonce,
}

/// One side of an established channel: the shared secret plus who it is with.
#[derive(Debug, Clone)]
pub struct Channel {
    shared: crate::crypto::SharedSecret,
    local: Did,
    peer: Did,
}

impl Channel {
    pub fn shared(&self) -> crate::crypto::SharedSecret {
        self.shared
    }

    pub fn local(&self) -> &Did {
        &self.local
    }

    pub fn peer(&self) -> &Did {
        &self.peer
    }
}

/// Handshake message carrying the encapsulated secret to the responder.
#[derive(Debug, Clone)]
pub struct HandshakeInit {
    pub initiator: Did,
    pub responder: Did,
    ciphertext: Ciphertext,
}

/// Signed wire message. `payload` and the channel tag are private: the only
/// read path is [`open`], which is what makes the confidentiality model an
/// access check rather than a convention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub sender: Did,
    pub recipient: Did,
    pub nonce: u64,
    pub signature: crate::crypto::Signature,
    payload: Vec<u8>,
    sealed_under: crate::token::Token,
}

impl Envelope {
    /// Text dump for log inspection: `sender|recipient|nonce|digest`.
    pub fn dump(&self) -> String {
        format!(
            "{}|{}|{}|{}",
            self.sender,
            self.recipient,
            self.nonce,
            self.signature.message_digest().to_hex()
        )
    }

    /// Payload without any defense check. Baseline-insecure control mode
    /// only; not reachable outside the crate.
    pub(crate) fn payload_unchecked(&self) -> &[u8] {
        &self.payload
    }

    /// Mutated copy, original untouched. This is the Dolev-Yao tampering
    /// capability: anyone can rewrite fields in transit, but the embedded
    /// signature still speaks only for the original bytes, and no mutation
    /// reveals the payload.
    pub fn mutated(&self, mutation: EnvelopeMutation) -> Envelope {
        let mut env = self.clone();
        match mutation {
            EnvelopeMutation::FlipPayloadBit { bit } => {
                if !env.payload.is_empty() {
                    let i = (bit / 8) as usize % env.payload.len();
                    env.payload[i] ^= 1 << (bit % 8);
                } else {
                    env.payload.push(1);
                }
            }
            EnvelopeMutation::ReplacePayload(bytes) => env.payload = bytes,
            EnvelopeMutation::ClaimSender(did) => env.sender = did,
            EnvelopeMutation::Redirect(did) => env.recipient = did,
            EnvelopeMutation::SetNonce(nonce) => env.nonce = nonce,
        }
        env
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvelopeMutation {
    FlipPayloadBit { bit: u32 },
    ReplacePayload(Vec<u8>),
    ClaimSender(Did),
    Redirect(Did),
    SetNonce(u64),
}

/// Canonical byte form signed by [`seal`]: length-prefixed fields in
/// declaration order (sender, recipient, payload, nonce).
fn canonical_bytes(sender: &Did, recipient: &Did, payload: &[u8], nonce: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    push_field(&mut buf, sender.to_string().as_bytes());
    push_field(&mut buf, recipient.to_string().as_bytes());
    push_field(&mut buf, payload);
    push_field(&mut buf, &nonce.to_be_bytes());
    buf
}

/// Strictly increasing nonce source. One per sending agent, shared across
/// all of that agent's channels.
#[derive(Debug, Clone, Default)]
pub struct NonceIssuer {
    next: u64,
}

impl NonceIssuer {
    pub fn issue(&mut self) -> u64 {
        self.next += 1;
        self.next
    }
}

/// Per-receiver record of the highest accepted nonce per sender.
#[derive(Debug, Clone, Default)]
pub struct NonceTable {
    last_accepted: HashMap<String, u64>,
}

impl NonceTable {
    pub fn last_accepted(&self, sender_identifier: &str) -> Option<u64> {
        self.last_accepted.get(sender_identifier).copied()
    }
}

/// Initiator half of the handshake: resolve the responder, encapsulate a
/// fresh secret to its registered KEM key. Charges the handshake cost.
pub fn establish_channel(
    initiator: &Did,
    responder_did: &str,
    ledger: &Ledger,
    rng: &mut impl Rng,
    clock: &mut SimClock,
    costs: &CostModel,
) -> Result<(Channel, HandshakeInit), ChannelError> {
    let doc = resolve_did(ledger, responder_did)?;
    let (ciphertext, shared) = kem_encapsulate(&doc.kem_public_key, rng);
    clock.advance(costs.handshake_s);
    let channel = Channel {
        shared,
        local: initiator.clone(),
        peer: doc.subject.clone(),
    };
    let init = HandshakeInit {
        initiator: initiator.clone(),
        responder: doc.subject.clone(),
        ciphertext,
    };
    Ok((channel, init))
}

/// Responder half: decapsulate with the private key matching the registered
/// document. A mismatch means ledger and key store disagree; the caller
/// counts it as a protocol fault, never as an attack success.
pub fn accept_channel(
    responder: &Did,
    kem_private: &KemPrivateKey,
    init: &HandshakeInit,
) -> Result<Channel, ChannelError> {
    let shared = kem_decapsulate(kem_private, &init.ciphertext)?;
    Ok(Channel {
        shared,
        local: responder.clone(),
        peer: init.initiator.clone(),
    })
}

/// Seal a payload for the channel peer: sign the canonical bytes with the
/// sender's key under a fresh monotone nonce. Charges the signing cost.
pub fn seal(
    channel: &Channel,
    sig_private: &SigPrivateKey,
    nonces: &mut NonceIssuer,
    payload: &[u8],
    clock: &mut SimClock,
    costs: &CostModel,
) -> Envelope {
    let nonce = nonces.issue();
    let signature = sign(
        sig_private,
        &canonical_bytes(&channel.local, &channel.peer, payload, nonce),
    );
    clock.advance(costs.sign_s);
    Envelope {
        sender: channel.local.clone(),
        recipient: channel.peer.clone(),
        nonce,
        signature,
        payload: payload.to_vec(),
        sealed_under: channel.shared.id(),
    }
}

/// Seal while claiming an arbitrary sender identity. This is the spoofing
/// capability: the signature is genuine under `sig_private` (a key the
/// caller actually holds), but the envelope names `claimed_sender`. Against
/// a verifying receiver the registered-key check exposes the mismatch.
pub fn seal_as(
    claimed_sender: &Did,
    channel: &Channel,
    sig_private: &SigPrivateKey,
    nonce: u64,
    payload: &[u8],
) -> Envelope {
    let signature = sign(
        sig_private,
        &canonical_bytes(claimed_sender, &channel.peer, payload, nonce),
    );
    Envelope {
        sender: claimed_sender.clone(),
        recipient: channel.peer.clone(),
        nonce,
        signature,
        payload: payload.to_vec(),
        sealed_under: channel.shared.id(),
    }
}

/// Open an envelope on a channel. Checks, in order: the claimed sender
/// resolves; the signature verifies under that sender's registered key; the
/// envelope was sealed under this channel's secret; the nonce advances.
/// The order distinguishes tampering (BadSignature) from replay
/// (StaleNonce) in the trial logs. Charges the verification cost.
pub fn open(
    channel: &Channel,
    env: &Envelope,
    ledger: &Ledger,
    nonces: &mut NonceTable,
    clock: &mut SimClock,
    costs: &CostModel,
) -> Result<Vec<u8>, OpenRejection> {
    clock.advance(costs.verify_sig_s);
    let doc =
        resolve_did(ledger, &env.sender.to_string()).map_err(|_| OpenRejection::UnknownSender)?;
    let message = canonical_bytes(&env.sender, &env.recipient, &env.payload, env.nonce);
    if !verify(&doc.sig_public_key, &message, &env.signature) {
        return Err(OpenRejection::BadSignature);
    }
    if env.sealed_under != channel.shared.id() {
        return Err(OpenRejection::WrongChannel);
    }
    let last = nonces
        .last_accepted
        .entry(env.sender.identifier.clone())
        .or_insert(0);
    if env.nonce <= *last {
        return Err(OpenRejection::StaleNonce);
    }
    *last = env.nonce;
    Ok(env.payload.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{KemKeyPair, SigKeyPair};
    use crate::identity::{generate_identity, register, DEFAULT_METHOD};
    use crate::rng_from_seed;

    struct Party {
        did: Did,
        kem: KemKeyPair,
        sig: SigKeyPair,
        nonces_out: NonceIssuer,
        nonces_in: NonceTable,
    }

    fn setup(n: usize, seed: u64) -> (Ledger, Vec<Party>, crate::SimRng) {
        let mut rng = rng_from_seed(seed);
        let mut ledger = Ledger::new(DEFAULT_METHOD);
        let mut parties = Vec::new();
        for _ in 0..n {
            let (did, kem, sig, doc) = generate_identity(&mut rng);
            register(&mut ledger, &did, doc).unwrap();
            parties.push(Party {
                did,
                kem,
                sig,
                nonces_out: NonceIssuer::default(),
                nonces_in: NonceTable::default(),
            });
        }
        (ledger, parties, rng)
    }

    fn pair_up(
        ledger: &Ledger,
        a: &Party,
        b: &Party,
        rng: &mut crate::SimRng,
        clock: &mut SimClock,
    ) -> (Channel, Channel) {
        let costs = CostModel::default();
        let (ch_a, init) =
            establish_channel(&a.did, &b.did.to_string(), ledger, rng, clock, &costs).unwrap();
        let ch_b = accept_channel(&b.did, &b.kem.private, &init).unwrap();
        (ch_a, ch_b)
    }

    #[test]
    fn handshake_agrees_on_the_secret() {
        let (ledger, parties, mut rng) = setup(2, 1);
        let mut clock = SimClock::new();
        let (ch_a, ch_b) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        assert_eq!(ch_a.shared(), ch_b.shared());
        assert_eq!(ch_a.peer(), &parties[1].did);
        assert_eq!(ch_b.peer(), &parties[0].did);
        assert_eq!(clock.now(), CostModel::default().handshake_s);
    }

    #[test]
    fn handshake_with_unregistered_responder_fails() {
        let (ledger, parties, mut rng) = setup(1, 2);
        let mut clock = SimClock::new();
        let ghost = format!("did:{DEFAULT_METHOD}:{}", "f".repeat(32));
        let err = establish_channel(
            &parties[0].did,
            &ghost,
            &ledger,
            &mut rng,
            &mut clock,
            &CostModel::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ChannelError::Identity(IdentityError::NotFound(_))
        ));
    }

    #[test]
    fn thousand_handshakes_zero_faults() {
        let (ledger, parties, mut rng) = setup(40, 3);
        let mut clock = SimClock::new();
        for _ in 0..1_000 {
            let i = rng.random_range(0..parties.len());
            let mut j = rng.random_range(0..parties.len());
            if j == i {
                j = (j + 1) % parties.len();
            }
            let (ch_a, ch_b) = pair_up(&ledger, &parties[i], &parties[j], &mut rng, &mut clock);
            assert_eq!(ch_a.shared(), ch_b.shared());
        }
    }

    #[test]
    fn seal_open_round_trip() {
        let (ledger, mut parties, mut rng) = setup(2, 4);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        let (ch_a, ch_b) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        let key = parties[0].sig.private;
        let env = seal(
            &ch_a,
            &key,
            &mut parties[0].nonces_out,
            b"indicator: 203.0.113.7",
            &mut clock,
            &costs,
        );
        let got = open(
            &ch_b,
            &env,
            &ledger,
            &mut parties[1].nonces_in,
            &mut clock,
            &costs,
        );
        assert_eq!(got.unwrap(), b"indicator: 203.0.113.7");
    }

    #[test]
    fn replay_is_stale_nonce() {
        let (ledger, mut parties, mut rng) = setup(2, 5);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        let (ch_a, ch_b) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        let key = parties[0].sig.private;
        let env = seal(
            &ch_a,
            &key,
            &mut parties[0].nonces_out,
            b"report",
            &mut clock,
            &costs,
        );
        open(
            &ch_b,
            &env,
            &ledger,
            &mut parties[1].nonces_in,
            &mut clock,
            &costs,
        )
        .unwrap();
        let replayed = open(
            &ch_b,
            &env,
            &ledger,
            &mut parties[1].nonces_in,
            &mut clock,
            &costs,
        );
        assert_eq!(replayed, Err(OpenRejection::StaleNonce));
    }

    #[test]
    fn out_of_order_delivery_is_stale_nonce() {
        let (ledger, mut parties, mut rng) = setup(2, 6);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        let (ch_a, ch_b) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        let key = parties[0].sig.private;
        let first = seal(
            &ch_a,
            &key,
            &mut parties[0].nonces_out,
            b"1",
            &mut clock,
            &costs,
        );
        let key = parties[0].sig.private;
        let second = seal(
            &ch_a,
            &key,
            &mut parties[0].nonces_out,
            b"2",
            &mut clock,
            &costs,
        );
        assert!(second.nonce > first.nonce);
        open(
            &ch_b,
            &second,
            &ledger,
            &mut parties[1].nonces_in,
            &mut clock,
            &costs,
        )
        .unwrap();
        let late = open(
            &ch_b,
            &first,
            &ledger,
            &mut parties[1].nonces_in,
            &mut clock,
            &costs,
        );
        assert_eq!(late, Err(OpenRejection::StaleNonce));
    }

    #[test]
    fn tampered_payload_is_bad_signature() {
        let (ledger, mut parties, mut rng) = setup(2, 7);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        let (ch_a, ch_b) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        let key = parties[0].sig.private;
        let env = seal(
            &ch_a,
            &key,
            &mut parties[0].nonces_out,
            b"classification: 2",
            &mut clock,
            &costs,
        );
        let tampered = env.mutated(EnvelopeMutation::FlipPayloadBit { bit: 3 });
        assert_ne!(tampered, env);
        let got = open(
            &ch_b,
            &tampered,
            &ledger,
            &mut parties[1].nonces_in,
            &mut clock,
            &costs,
        );
        assert_eq!(got, Err(OpenRejection::BadSignature));
    }

    #[test]
    fn every_field_mutation_invalidates_the_signature() {
        let (ledger, mut parties, mut rng) = setup(3, 8);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        let (ch_a, ch_b) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        let key = parties[0].sig.private;
        let env = seal(
            &ch_a,
            &key,
            &mut parties[0].nonces_out,
            b"payload",
            &mut clock,
            &costs,
        );
        let mutations = [
            EnvelopeMutation::ReplacePayload(b"other".to_vec()),
            EnvelopeMutation::ClaimSender(parties[2].did.clone()),
            EnvelopeMutation::Redirect(parties[2].did.clone()),
            EnvelopeMutation::SetNonce(env.nonce + 10),
        ];
        for mutation in mutations {
            let mutated = env.mutated(mutation.clone());
            let mut nonces = NonceTable::default();
            let got = open(&ch_b, &mutated, &ledger, &mut nonces, &mut clock, &costs);
            assert_eq!(
                got,
                Err(OpenRejection::BadSignature),
                "mutation {mutation:?}"
            );
        }
    }

    #[test]
    fn unregistered_claimed_sender_is_unknown() {
        let (ledger, mut parties, mut rng) = setup(2, 9);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        let (ch_a, ch_b) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        let ghost = Did::new(DEFAULT_METHOD, "e".repeat(32));
        let env = seal_as(&ghost, &ch_a, &parties[0].sig.private, 1, b"hi");
        let got = open(
            &ch_b,
            &env,
            &ledger,
            &mut parties[1].nonces_in,
            &mut clock,
            &costs,
        );
        assert_eq!(got, Err(OpenRejection::UnknownSender));
    }

    #[test]
    fn spoofed_registered_sender_is_bad_signature() {
        let (ledger, mut parties, mut rng) = setup(3, 10);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        // Party 2 talks to party 1 over a real channel but claims to be party 0.
        let (ch_adv, ch_b) = pair_up(&ledger, &parties[2], &parties[1], &mut rng, &mut clock);
        let victim = parties[0].did.clone();
        let env = seal_as(&victim, &ch_adv, &parties[2].sig.private, 1, b"trust me");
        let got = open(
            &ch_b,
            &env,
            &ledger,
            &mut parties[1].nonces_in,
            &mut clock,
            &costs,
        );
        assert_eq!(got, Err(OpenRejection::BadSignature));
    }

    #[test]
    fn envelope_for_another_channel_is_rejected() {
        let (ledger, mut parties, mut rng) = setup(3, 11);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        let (ch_a_to_b, _) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        let (_, ch_c) = pair_up(&ledger, &parties[0], &parties[2], &mut rng, &mut clock);
        let key = parties[0].sig.private;
        let env = seal(
            &ch_a_to_b,
            &key,
            &mut parties[0].nonces_out,
            b"for b only",
            &mut clock,
            &costs,
        );
        // Party 2 somehow receives the envelope; its channel secret differs,
        // and the signature names party 1 as recipient anyway.
        let redirected = env.mutated(EnvelopeMutation::Redirect(parties[2].did.clone()));
        let got = open(
            &ch_c,
            &redirected,
            &ledger,
            &mut parties[2].nonces_in,
            &mut clock,
            &costs,
        );
        assert_eq!(got, Err(OpenRejection::BadSignature));
        // Same secret mismatch with an intact envelope: rejected before the
        // nonce table is touched.
        let got = open(
            &ch_c,
            &env,
            &ledger,
            &mut parties[2].nonces_in,
            &mut clock,
            &costs,
        );
        assert_eq!(got, Err(OpenRejection::WrongChannel));
        assert_eq!(
            parties[2]
                .nonces_in
                .last_accepted(&parties[0].did.identifier),
            None
        );
    }

    #[test]
    fn nonces_increase_across_channels_of_one_sender() {
        let (ledger, mut parties, mut rng) = setup(3, 12);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        let (ch_to_b, _) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        let (ch_to_c, _) = pair_up(&ledger, &parties[0], &parties[2], &mut rng, &mut clock);
        let mut last = 0;
        for (i, ch) in [&ch_to_b, &ch_to_c, &ch_to_b, &ch_to_c]
            .into_iter()
            .enumerate()
        {
            let key = parties[0].sig.private;
            let env = seal(
                ch,
                &key,
                &mut parties[0].nonces_out,
                format!("m{i}").as_bytes(),
                &mut clock,
                &costs,
            );
            assert!(env.nonce > last);
            last = env.nonce;
        }
    }

    #[test]
    fn acceptance_implies_registered_signer() {
        let (ledger, mut parties, mut rng) = setup(8, 13);
        let mut clock = SimClock::new();
        let costs = CostModel::default();
        for _ in 0..200 {
            let i = rng.random_range(0..parties.len());
            let mut j = rng.random_range(0..parties.len());
            if j == i {
                j = (j + 1) % parties.len();
            }
            let (ch_i, ch_j) = pair_up(&ledger, &parties[i], &parties[j], &mut rng, &mut clock);
            let key = parties[i].sig.private;
            let env = seal(
                &ch_i,
                &key,
                &mut parties[i].nonces_out,
                b"m",
                &mut clock,
                &costs,
            );
            let mut table = std::mem::take(&mut parties[j].nonces_in);
            if open(&ch_j, &env, &ledger, &mut table, &mut clock, &costs).is_ok() {
                let registered = resolve_did(&ledger, &env.sender.to_string()).unwrap();
                assert_eq!(
                    env.signature.signer_key_id(),
                    registered.sig_public_key.key_id()
                );
            }
            parties[j].nonces_in = table;
        }
    }

    #[test]
    fn costs_are_charged_per_operation() {
        let (ledger, mut parties, mut rng) = setup(2, 14);
        let costs = CostModel::default();
        let mut clock = SimClock::new();
        let (ch_a, ch_b) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        assert_eq!(clock.now(), costs.handshake_s);
        let key = parties[0].sig.private;
        let env = seal(
            &ch_a,
            &key,
            &mut parties[0].nonces_out,
            b"m",
            &mut clock,
            &costs,
        );
        assert_eq!(clock.now(), costs.handshake_s + costs.sign_s);
        open(
            &ch_b,
            &env,
            &ledger,
            &mut parties[1].nonces_in,
            &mut clock,
            &costs,
        )
        .unwrap();
        assert_eq!(
            clock.now(),
            costs.handshake_s + costs.sign_s + costs.verify_sig_s
        );
    }

    #[test]
    fn dump_is_pipe_delimited() {
        let (ledger, mut parties, mut rng) = setup(2, 15);
        let mut clock = SimClock::new();
        let (ch_a, _) = pair_up(&ledger, &parties[0], &parties[1], &mut rng, &mut clock);
        let key = parties[0].sig.private;
        let env = seal(
            &ch_a,
            &key,
            &mut parties[0].nonces_out,
            b"m",
            &mut clock,
            &CostModel::default(),
        );
        let dump = env.dump();
        let parts: Vec<&str> = dump.split('|').collect();
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[0], parties[0].did.to_string());
        assert_eq!(parts[1], parties[1].did.to_string());
        assert_eq!(parts[2], "1");
        assert_eq!(parts[3].len(), 64);
    }
}
