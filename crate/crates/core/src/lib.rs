//! Multi-finger fuzzy fingerprint vault.
//!
//! Minutiae locations from several fingers are fused into one vault of
//! genuine and chaff points over a prime field. A query that matches enough
//! genuine points recovers the secret polynomial, which is checked against a
//! SHA-256 commitment. The crate also carries the matcher, image
//! pre-alignment, a brute-force attack, security estimates and a synthetic
//! fingerprint model for experiments.

pub mod attack;
pub mod commit;
pub mod config;
pub mod experiment;
pub mod field;
pub mod geometry;
pub mod matcher;
pub mod minutia;
pub mod prealign;
pub mod rs;
pub mod security;
pub mod synth;
pub mod vault;
pub mod verify;
