//! Hash primitives shared by every tree and commitment in this crate.
//!
//! All digests are 32-byte SHA-256 outputs. Every hashing context carries a
//! leading domain tag byte so a value of one kind can never be reinterpreted
//! as another (dense-tree leaf vs. interior node, sparse-tree material,
//! identifier leaves, authenticator bindings, sparse-tree key derivation).

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Dense Merkle tree leaves.
pub const TAG_LEAF: u8 = 0x00;
/// Dense Merkle tree interior nodes.
pub const TAG_NODE: u8 = 0x01;
/// Sparse Merkle tree nodes and leaves.
pub const TAG_SMT: u8 = 0x02;
/// Identifier leaves (value plus attribute-commitment slot).
pub const TAG_IDENTIFIER: u8 = 0x03;
/// Authenticator binding of a commitment root.
pub const TAG_BINDING: u8 = 0x04;
/// Derivation of sparse-tree keys from commitment digests.
pub const TAG_SMT_KEY: u8 = 0x05;

/// Largest payload accepted by [`hash_leaf`], in bytes.
pub const MAX_LEAF_PAYLOAD: usize = 1 << 16;

/// A 32-byte hash output. Equality is byte equality.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    /// Length of a digest in bytes.
    pub const LEN: usize = 32;
    /// The all-zero digest, used as the sparse-tree leaf default.
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, HashError> {
        let bytes = hex::decode(s).map_err(|_| HashError::BadHex)?;
        Self::from_slice(&bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, HashError> {
        if bytes.len() != Self::LEN {
            return Err(HashError::BadLength(bytes.len()));
        }
        let mut out = [0u8; 32];
        out.copy_from_slice(bytes);
        Ok(Digest(out))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..8])
    }
}

impl FromStr for Digest {
    type Err = HashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HashError {
    #[error("leaf payload of {0} bytes exceeds the {MAX_LEAF_PAYLOAD}-byte limit")]
    PayloadTooLarge(usize),
    #[error("expected 32 bytes, got {0}")]
    BadLength(usize),
    #[error("invalid hex digest")]
    BadHex,
}

/// SHA-256 over a domain tag followed by the given parts.
pub(crate) fn hash_tagged(tag: u8, parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update([tag]);
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

/// Untagged SHA-256, for digests that never enter a tree structure
/// (statement digests, seed derivation).
pub(crate) fn hash_raw(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

/// Hash a leaf payload: `SHA-256(0x00 || payload)`.
pub fn hash_leaf(payload: &[u8]) -> Result<Digest, HashError> {
    if payload.len() > MAX_LEAF_PAYLOAD {
        return Err(HashError::PayloadTooLarge(payload.len()));
    }
    Ok(hash_tagged(TAG_LEAF, &[payload]))
}

/// Hash an interior node: `SHA-256(0x01 || left || right)`. Order-sensitive.
pub fn hash_node(left: &Digest, right: &Digest) -> Digest {
    hash_tagged(TAG_NODE, &[&left.0, &right.0])
}

/// The distinguished padding digest: 32 zero bytes hashed under the leaf tag.
/// Trees with a non-power-of-two leaf count are padded with this value.
pub fn empty_digest() -> Digest {
    static EMPTY: OnceLock<Digest> = OnceLock::new();
    *EMPTY.get_or_init(|| hash_leaf(&[0u8; 32]).expect("fixed-size payload"))
}
