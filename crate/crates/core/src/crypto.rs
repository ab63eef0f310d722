//! Symbolic post-quantum-shaped primitives: key encapsulation and digital
//! signatures with perfect-cryptography (Dolev-Yao) semantics.
//!
//! Keys and secrets are opaque tokens. Decapsulation succeeds only with the
//! matching private half; a signature verifies only under the signer's
//! public half and only for the exact signed bytes. There is deliberately
//! no public constructor for [`SharedSecret`], [`Ciphertext`], or
//! [`Signature`]: the operations in this module are the *only* ways those
//! values come into existence, which is what makes the model's closure
//! properties hold by construction.

use rand::Rng;
use thiserror::Error;

use crate::token::{Digest32, Token};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CryptoError {
    /// Presented private half does not match the ciphertext's recipient key.
    #[error("decapsulation mismatch: ciphertext is not addressed to this key")]
    DecapsulationMismatch,
}

// ---------------------------------------------------------------------------
// Key encapsulation
// ---------------------------------------------------------------------------

/// Public half of an encapsulation key pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KemPublicKey {
    key_id: Token,
}

/// Private half of an encapsulation key pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KemPrivateKey {
    key_id: Token,
}

/// Encapsulation key pair. Both halves carry the same fresh `key_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KemKeyPair {
    pub public: KemPublicKey,
    pub private: KemPrivateKey,
}

impl KemKeyPair {
    pub fn generate(rng: &mut impl Rng) -> Self {
        let key_id = Token::mint(rng);
        KemKeyPair {
            public: KemPublicKey { key_id },
            private: KemPrivateKey { key_id },
        }
    }

    pub fn key_id(&self) -> Token {
        self.public.key_id
    }
}

impl KemPublicKey {
    pub fn key_id(&self) -> Token {
        self.key_id
    }
}

/// Encapsulated secret in transit, bound to the recipient's key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ciphertext {
    recipient_key_id: Token,
    secret_id: Token,
}

impl Ciphertext {
    pub fn recipient_key_id(&self) -> Token {
        self.recipient_key_id
    }
}

/// Shared channel secret. Equality is token equality; values exist only via
/// encapsulation and decapsulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedSecret {
    secret_id: Token,
}

impl SharedSecret {
    /// Opaque identity of the secret, usable for equality bookkeeping.
    /// Knowing the id does not produce a `SharedSecret`.
    pub fn id(&self) -> Token {
        self.secret_id
    }
}

/// Encapsulate a fresh shared secret to `recipient`.
pub fn kem_encapsulate(recipient: &KemPublicKey, rng: &mut impl Rng) -> (Ciphertext, SharedSecret) {
    let secret_id = Token::mint(rng);
    (
        Ciphertext {
            recipient_key_id: recipient.key_id,
            secret_id,
        },
        SharedSecret { secret_id },
    )
}

/// Recover the shared secret; fails unless `private` matches the recipient
/// key the ciphertext was produced for.
pub fn kem_decapsulate(
    private: &KemPrivateKey,
    ct: &Ciphertext,
) -> Result<SharedSecret, CryptoError> {
    if private.key_id != ct.recipient_key_id {
        return Err(CryptoError::DecapsulationMismatch);
    }
    Ok(SharedSecret {
        secret_id: ct.secret_id,
    })
}

// ---------------------------------------------------------------------------
// Signatures
// ---------------------------------------------------------------------------

/// Public half of a signing key pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SigPublicKey {
    key_id: Token,
}

/// Private half of a signing key pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SigPrivateKey {
    key_id: Token,
}

/// Signing key pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SigKeyPair {
    pub public: SigPublicKey,
    pub private: SigPrivateKey,
}

impl SigKeyPair {
    pub fn generate(rng: &mut impl Rng) -> Self {
        let key_id = Token::mint(rng);
        SigKeyPair {
            public: SigPublicKey { key_id },
            private: SigPrivateKey { key_id },
        }
    }

    pub fn key_id(&self) -> Token {
        self.public.key_id
    }
}

impl SigPublicKey {
    pub fn key_id(&self) -> Token {
        self.key_id
    }
}

impl SigPrivateKey {
    pub fn key_id(&self) -> Token {
        self.key_id
    }
}

/// Signature over a message digest, bound to the signing key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    signer_key_id: Token,
    message_digest: Digest32,
}

impl Signature {
    pub fn signer_key_id(&self) -> Token {
        self.signer_key_id
    }

    pub fn message_digest(&self) -> Digest32 {
        self.message_digest
    }
}

/// Sign the digest of `message` with `private`.
pub fn sign(private: &SigPrivateKey, message: &[u8]) -> Signature {
    Signature {
        signer_key_id: private.key_id,
        message_digest: Digest32::of(message),
    }
}

/// True iff `sig` was produced by the private half of `public` over exactly
/// `message`. Rejection is a value, not an error.
pub fn verify(public: &SigPublicKey, message: &[u8], sig: &Signature) -> bool {
    sig.signer_key_id == public.key_id && sig.message_digest == Digest32::of(message)
}
