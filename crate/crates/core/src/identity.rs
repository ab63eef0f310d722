//! Self-sovereign agent identity: DID generation, parsing, registration on
//! an in-process append-only ledger, and resolution to a DID document.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::crypto::{KemKeyPair, KemPublicKey, SigKeyPair, SigPublicKey};
use crate::token::{push_field, Digest32, Token};

/// Ledger method used throughout the simulation.
pub const DEFAULT_METHOD: &str = "ion";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("malformed DID string")]
    MalformedDid,
    #[error("identifier already registered: {0}")]
    DuplicateIdentifier(String),
    #[error("document subject does not match the DID being registered")]
    SubjectMismatch,
    #[error("ledger serves method {ledger:?}, DID names method {requested:?}")]
    UnknownMethod { ledger: String, requested: String },
    #[error("identifier not registered: {0}")]
    NotFound(String),
}

/// Decentralized identifier, serialized as `did:<method>:<identifier>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did {
    pub method: String,
    pub identifier: String,
}

impl Did {
    pub fn new(method: impl Into<String>, identifier: impl Into<String>) -> Self {
        Did {
            method: method.into(),
            identifier: identifier.into(),
        }
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{}:{}", self.method, self.identifier)
    }
}

/// Resolved identity record: the subject DID plus its public key material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DidDocument {
    pub subject: Did,
    pub kem_public_key: KemPublicKey,
    pub sig_public_key: SigPublicKey,
    pub service_endpoints: Vec<(String, String)>,
}

impl DidDocument {
    /// Digest of the canonical byte form (length-prefixed fields in
    /// declaration order), used in ledger snapshots.
    pub fn digest(&self) -> Digest32 {
        let mut buf = Vec::new();
        push_field(&mut buf, self.subject.to_string().as_bytes());
        push_field(&mut buf, self.kem_public_key.key_id().to_hex().as_bytes());
        push_field(&mut buf, self.sig_public_key.key_id().to_hex().as_bytes());
        for (label, addr) in &self.service_endpoints {
            push_field(&mut buf, label.as_bytes());
            push_field(&mut buf, addr.as_bytes());
        }
        Digest32::of(&buf)
    }
}

/// Receipt returned by [`register`]; `sequence` is monotone per ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationReceipt {
    pub identifier: String,
    pub sequence: u64,
}

/// Append-only identifier store for one DID method. Registered documents are
/// never overwritten or deleted within a run.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    method: String,
    records: HashMap<String, DidDocument>,
    order: Vec<String>,
}

impl Ledger {
    pub fn new(method: impl Into<String>) -> Self {
        Ledger {
            method: method.into(),
            records: HashMap::new(),
            order: Vec::new(),
        }
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Line-delimited debugging snapshot, one `identifier<TAB>document-digest`
    /// per line in registration order.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for id in &self.order {
            out.push_str(id);
            out.push('\t');
            out.push_str(&self.records[id].digest().to_hex());
            out.push('\n');
        }
        out
    }
}

/// Mint a fresh identity: unique identifier, fresh key pairs, and a document
/// referencing the public halves. No ledger side effect.
pub fn generate_identity(rng: &mut impl Rng) -> (Did, KemKeyPair, SigKeyPair, DidDocument) {
    let identifier = Token::mint(rng).to_hex();
    let did = Did::new(DEFAULT_METHOD, identifier);
    let kem = KemKeyPair::generate(rng);
    let sig = SigKeyPair::generate(rng);
    let doc = DidDocument {
        subject: did.clone(),
        kem_public_key: kem.public,
        sig_public_key: sig.public,
        service_endpoints: Vec::new(),
    };
    (did, kem, sig, doc)
}

/// Split a DID string into (method, identifier). The identifier is everything
/// after the first separator following the method, so method-specific ids may
/// themselves contain colons.
pub fn parse_did(did_string: &str) -> Result<(&str, &str), IdentityError> {
    let rest = did_string
        .strip_prefix("did:")
        .ok_or(IdentityError::MalformedDid)?;
    let (method, identifier) = rest.split_once(':').ok_or(IdentityError::MalformedDid)?;
    if method.is_empty() || identifier.is_empty() {
        return Err(IdentityError::MalformedDid);
    }
    Ok((method, identifier))
}

/// Append `doc` under `did.identifier`. Fails on re-registration, preserving
/// the append-only invariant (key rotation is a non-goal).
pub fn register(
    ledger: &mut Ledger,
    did: &Did,
    doc: DidDocument,
) -> Result<RegistrationReceipt, IdentityError> {
    if doc.subject != *did {
        return Err(IdentityError::SubjectMismatch);
    }
    if ledger.records.contains_key(&did.identifier) {
        return Err(IdentityError::DuplicateIdentifier(did.identifier.clone()));
    }
    let sequence = ledger.order.len() as u64;
    ledger.order.push(did.identifier.clone());
    ledger.records.insert(did.identifier.clone(), doc);
    Ok(RegistrationReceipt {
        identifier: did.identifier.clone(),
        sequence,
    })
}

/// Resolve a DID string against the ledger. Pure read.
pub fn resolve_did<'a>(
    ledger: &'a Ledger,
    did_string: &str,
) -> Result<&'a DidDocument, IdentityError> {
    let (method, identifier) = parse_did(did_string)?;
    if method != ledger.method {
        return Err(IdentityError::UnknownMethod {
            ledger: ledger.method.clone(),
            requested: method.to_string(),
        });
    }
    ledger
        .records
        .get(identifier)
        .ok_or_else(|| IdentityError::NotFound(identifier.to_string()))
}
