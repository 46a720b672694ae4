//! SHA-256 commitment to the secret polynomial's coefficients.
//!
//! Canonical encoding: the ASCII header `FFV-COMMIT-1|q=<q>|k=<k>|` followed by
//! each coefficient `e_0 .. e_{k-1}` as a big-endian integer of
//! `ceil(bits(q) / 8)` bytes.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::field::FieldPoly;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Commitment(pub [u8; 32]);

impl Commitment {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", self.to_hex())
    }
}

impl fmt::Display for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("commitment must be 64 lowercase hex digits")]
pub struct ParseCommitmentError;

impl FromStr for Commitment {
    type Err = ParseCommitmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.bytes().any(|c| c.is_ascii_uppercase()) {
            return Err(ParseCommitmentError);
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseCommitmentError)?;
        Ok(Commitment(out))
    }
}

/// The exact byte string that gets hashed.
pub fn canonical_encoding(p: &FieldPoly) -> Vec<u8> {
    let field = p.field();
    let width = field.element_bytes();
    let mut buf = format!("FFV-COMMIT-1|q={}|k={}|", field.modulus(), p.len()).into_bytes();
    for &c in p.coeffs() {
        buf.extend_from_slice(&c.to_be_bytes()[8 - width..]);
    }
    buf
}

pub fn commit(p: &FieldPoly) -> Commitment {
    Commitment(Sha256::digest(canonical_encoding(p)).into())
}

pub fn verify_commit(p: &FieldPoly, c: &Commitment) -> bool {
    commit(p) == *c
}
