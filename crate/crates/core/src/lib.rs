//! Unlinkable identifier portfolios with offline legitimacy verification.
//!
//! Participants hold private portfolios of single-use identifiers committed
//! under a Merkle root (their identity commitment). A coordinator registers
//! commitments and publishes signed, epoch-stamped allow/block roots. A
//! relying party that is handed an identifier can check, fully offline, that
//! it belongs to some allowed, non-revoked commitment, without learning
//! which one.
//!
//! Module map:
//! - [`hash`], [`merkle`]: domain-separated hashing and dense trees.
//! - [`smt`]: sparse Merkle tree backing the revocation list.
//! - [`portfolio`]: identifier generation, commitment, display encodings,
//!   authenticator binding, and delegation grants.
//! - [`coordinator`], [`store`], [`service`]: the registry, its durable log,
//!   and the request/response service contract.
//! - [`legitimacy`]: the membership relation, statement/witness encodings,
//!   and pluggable proof backends.
//! - [`participant`], [`verifier`]: the two endpoints of a presentation.
//! - [`keystore`]: passphrase-encrypted file container for participant state.

pub mod coordinator;
pub mod hash;
pub mod keystore;
pub mod legitimacy;
pub mod merkle;
pub mod participant;
pub mod portfolio;
pub mod service;
pub mod smt;
pub mod store;
pub mod verifier;

pub use hash::Digest;
pub use merkle::{verify_inclusion, InclusionProof, MerkleTree};
pub use smt::{SmtKey, SmtProof, SparseMerkleTree};
