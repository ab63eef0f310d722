//! Opaque tokens and digests backing the symbolic cryptography.
//!
//! A [`Token`] is a 128-bit value with identity semantics only: two tokens
//! are interchangeable iff they are equal, and fresh tokens are minted from
//! the run's seeded RNG. Holding a token value in a field is what "knowing"
//! a key or secret means in this model, so minting is crate-private; the
//! public API hands tokens out only through the protocol operations.

use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};

/// Opaque 128-bit token. Freshness comes from the run RNG.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(u128);

impl Token {
    pub(crate) fn mint(rng: &mut impl Rng) -> Self {
        Token(rng.random())
    }

    /// Lowercase hex form, 32 chars.
    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Token({:08x}…)", (self.0 >> 96) as u32)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// Fixed-width SHA-256 digest of some canonical byte form.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub fn of(bytes: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(bytes);
        Digest32(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(64);
        for b in self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Digest32({:02x}{:02x}{:02x}{:02x}…)",
            self.0[0], self.0[1], self.0[2], self.0[3]
        )
    }
}

/// Append one length-prefixed field to a canonical byte buffer: big-endian
/// u32 length, then the raw bytes. Every canonical form in the crate uses
/// this framing so digests are unambiguous.
pub(crate) fn push_field(buf: &mut Vec<u8>, field: &[u8]) {
    buf.extend_from_slice(&(field.len() as u32).to_be_bytes());
    buf.extend_from_slice(field);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn minting_is_deterministic_under_seed() {
        let mut a = crate::SimRng::seed_from_u64(9);
        let mut b = crate::SimRng::seed_from_u64(9);
        assert_eq!(Token::mint(&mut a), Token::mint(&mut b));
    }

    #[test]
    fn hex_form_is_32_lowercase_chars() {
        let mut rng = crate::SimRng::seed_from_u64(1);
        let hex = Token::mint(&mut rng).to_hex();
        assert_eq!(hex.len(), 32);
        assert!(hex
            .chars()
            .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn length_prefix_disambiguates_field_boundaries() {
        let mut a = Vec::new();
        push_field(&mut a, b"ab");
        push_field(&mut a, b"c");
        let mut b = Vec::new();
        push_field(&mut b, b"a");
        push_field(&mut b, b"bc");
        assert_ne!(a, b);
        assert_ne!(Digest32::of(&a), Digest32::of(&b));
    }
}
