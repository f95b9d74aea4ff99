//! Dense Merkle trees with inclusion proofs.
//!
//! Leaf counts are padded to the next power of two with [`empty_digest`].
//! A single-leaf tree has depth 0 and its root is the leaf digest itself.
//! Trees are immutable after construction and safe to share across threads.

use thiserror::Error;

use crate::hash::{empty_digest, hash_node, Digest};

/// Maximum number of (pre-padding) leaves in a tree, keeping proofs at most
/// 24 siblings long.
pub const MAX_TREE_LEAVES: usize = 1 << 24;

/// A fully materialized binary hash tree. `levels[0]` holds the padded
/// leaves; each higher level halves in width up to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest>>,
    leaf_count: usize,
}

impl MerkleTree {
    /// Build a tree over the given leaf digests.
    pub fn build(leaves: &[Digest]) -> Result<Self, MerkleError> {
        if leaves.is_empty() {
            return Err(MerkleError::EmptyLeaves);
        }
        if leaves.len() > MAX_TREE_LEAVES {
            return Err(MerkleError::TooManyLeaves(leaves.len()));
        }
        let padded_len = leaves.len().next_power_of_two();
        let mut level0 = Vec::with_capacity(padded_len);
        level0.extend_from_slice(leaves);
        level0.resize(padded_len, empty_digest());

        let mut levels = vec![level0];
        while levels.last().expect("non-empty").len() > 1 {
            let below = levels.last().expect("non-empty");
            let above = below
                .chunks_exact(2)
                .map(|pair| hash_node(&pair[0], &pair[1]))
                .collect();
            levels.push(above);
        }
        Ok(MerkleTree {
            levels,
            leaf_count: leaves.len(),
        })
    }

    pub fn root(&self) -> Digest {
        self.levels.last().expect("non-empty")[0]
    }

    /// Number of levels between a leaf and the root.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Original (pre-padding) leaf count.
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Leaf count after power-of-two padding.
    pub fn padded_len(&self) -> usize {
        self.levels[0].len()
    }

    /// The digest stored at `index` in the padded leaf level.
    pub fn leaf(&self, index: usize) -> Option<&Digest> {
        self.levels[0].get(index)
    }

    /// Interior node digest at `level` (0 = leaves) and `index`.
    pub(crate) fn node(&self, level: usize, index: usize) -> Digest {
        self.levels[level][index]
    }

    /// Produce an inclusion proof for the original leaf at `index`.
    pub fn prove_inclusion(&self, index: usize) -> Result<InclusionProof, MerkleError> {
        if index >= self.leaf_count {
            return Err(MerkleError::IndexOutOfRange {
                index,
                leaf_count: self.leaf_count,
            });
        }
        let depth = self.depth();
        let mut siblings = Vec::with_capacity(depth);
        let mut directions = Vec::with_capacity(depth);
        let mut position = index;
        for level in 0..depth {
            siblings.push(self.levels[level][position ^ 1]);
            directions.push(position & 1 == 1);
            position >>= 1;
        }
        Ok(InclusionProof {
            leaf_index: index as u32,
            siblings,
            directions,
        })
    }
}

/// A leaf-to-root authentication path. `directions[i]` is true when the
/// running node is the right child at level `i` (sibling on the left).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InclusionProof {
    pub leaf_index: u32,
    pub siblings: Vec<Digest>,
    pub directions: Vec<bool>,
}

/// Proofs longer than this are rejected as malformed before any hashing.
/// Trees cap at 2^24 leaves, so 32 leaves ample headroom while keeping the
/// leaf index able to express every direction bit.
pub const MAX_PROOF_DEPTH: usize = 32;

impl InclusionProof {
    pub fn depth(&self) -> usize {
        self.siblings.len()
    }

    /// Wire form: u32 LE leaf index, u8 depth, `depth` 32-byte siblings
    /// (leaf to root), then ceil(depth/8) direction bytes, LSB first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let depth = self.siblings.len();
        debug_assert_eq!(depth, self.directions.len());
        let mut out = Vec::with_capacity(5 + depth * 32 + depth.div_ceil(8));
        out.extend_from_slice(&self.leaf_index.to_le_bytes());
        out.push(depth as u8);
        for sibling in &self.siblings {
            out.extend_from_slice(sibling.as_bytes());
        }
        let mut bits = vec![0u8; depth.div_ceil(8)];
        for (i, &dir) in self.directions.iter().enumerate() {
            if dir {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProofCodecError> {
        if bytes.len() < 5 {
            return Err(ProofCodecError::Truncated);
        }
        let leaf_index = u32::from_le_bytes(bytes[..4].try_into().expect("len checked"));
        let depth = bytes[4] as usize;
        if depth > MAX_PROOF_DEPTH {
            return Err(ProofCodecError::DepthOutOfRange(depth));
        }
        let expected = 5 + depth * 32 + depth.div_ceil(8);
        if bytes.len() != expected {
            return Err(ProofCodecError::LengthMismatch {
                expected,
                actual: bytes.len(),
            });
        }
        let mut siblings = Vec::with_capacity(depth);
        for i in 0..depth {
            let start = 5 + i * 32;
            siblings.push(Digest::from_slice(&bytes[start..start + 32]).expect("len checked"));
        }
        let bits = &bytes[5 + depth * 32..];
        // Padding bits beyond `depth` must be clear; every wire byte is
        // semantically live.
        if (depth..bits.len() * 8).any(|i| bits[i / 8] >> (i % 8) & 1 == 1) {
            return Err(ProofCodecError::NonCanonical("direction padding bits set"));
        }
        let directions = (0..depth)
            .map(|i| bits[i / 8] >> (i % 8) & 1 == 1)
            .collect();
        Ok(InclusionProof {
            leaf_index,
            siblings,
            directions,
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MerkleError {
    #[error("cannot build a tree over an empty leaf list")]
    EmptyLeaves,
    #[error("leaf count {0} exceeds the maximum of {MAX_TREE_LEAVES}")]
    TooManyLeaves(usize),
    #[error("leaf index {index} out of range for {leaf_count} leaves")]
    IndexOutOfRange { index: usize, leaf_count: usize },
}

/// Why an inclusion check did not accept. `Malformed` signals a structurally
/// invalid proof, distinct from an honest-shape proof that fails to fold to
/// the root.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum InclusionRejection {
    #[error("malformed proof: {0}")]
    Malformed(&'static str),
    #[error("reconstructed root does not match")]
    RootMismatch,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProofCodecError {
    #[error("proof bytes truncated")]
    Truncated,
    #[error("proof depth {0} out of range")]
    DepthOutOfRange(usize),
    #[error("proof length mismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-canonical proof encoding: {0}")]
    NonCanonical(&'static str),
}

/// Accept iff folding `leaf` up through the proof's siblings, ordered by its
/// direction bits, reproduces `root`.
pub fn verify_inclusion(
    root: &Digest,
    leaf: &Digest,
    proof: &InclusionProof,
) -> Result<(), InclusionRejection> {
    if proof.siblings.len() != proof.directions.len() {
        return Err(InclusionRejection::Malformed(
            "sibling and direction counts differ",
        ));
    }
    let depth = proof.siblings.len();
    if depth > MAX_PROOF_DEPTH {
        return Err(InclusionRejection::Malformed("proof too deep"));
    }
    // The direction bits and the leaf index encode the same path; a proof
    // where they disagree is lying about one of them.
    if depth < 32 && proof.leaf_index >> depth != 0 {
        return Err(InclusionRejection::Malformed("leaf index exceeds depth"));
    }
    for (level, &dir) in proof.directions.iter().enumerate() {
        if dir != (proof.leaf_index >> level & 1 == 1) {
            return Err(InclusionRejection::Malformed(
                "direction bits disagree with leaf index",
            ));
        }
    }
    let mut current = *leaf;
    for (sibling, &node_is_right) in proof.siblings.iter().zip(&proof.directions) {
        current = if node_is_right {
            hash_node(sibling, &current)
        } else {
            hash_node(&current, sibling)
        };
    }
    if current == *root {
        Ok(())
    } else {
        Err(InclusionRejection::RootMismatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::hash_leaf;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_leaves(n: usize, seed: u64) -> Vec<Digest> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..n).map(|_| Digest(rng.gen())).collect()
    }

    #[test]
    fn empty_leaf_list_is_rejected() {
        assert_eq!(MerkleTree::build(&[]), Err(MerkleError::EmptyLeaves));
    }

    #[test]
    fn single_leaf_root_is_the_leaf() {
        let d = hash_leaf(b"only").unwrap();
        let tree = MerkleTree::build(&[d]).unwrap();
        assert_eq!(tree.root(), d);
        assert_eq!(tree.depth(), 0);
        let proof = tree.prove_inclusion(0).unwrap();
        assert!(proof.siblings.is_empty());
        assert!(verify_inclusion(&tree.root(), &d, &proof).is_ok());
    }

    #[test]
    fn four_leaf_root_matches_manual_fold() {
        let leaves = random_leaves(4, 1);
        let tree = MerkleTree::build(&leaves).unwrap();
        let expected = hash_node(
            &hash_node(&leaves[0], &leaves[1]),
            &hash_node(&leaves[2], &leaves[3]),
        );
        assert_eq!(tree.root(), expected);
    }

    #[test]
    fn padding_with_empty_digest_is_explicit() {
        let leaves = random_leaves(3, 2);
        let padded: Vec<Digest> = leaves
            .iter()
            .copied()
            .chain(std::iter::once(empty_digest()))
            .collect();
        assert_eq!(
            MerkleTree::build(&leaves).unwrap().root(),
            MerkleTree::build(&padded).unwrap().root()
        );
    }

    #[test]
    fn node_of_two_empties_is_the_level_one_padding_digest() {
        // Forced by the padding rule: a fully padded pair hashes to the
        // value that appears at level 1 above any padded region.
        let leaves = random_leaves(5, 3);
        let tree = MerkleTree::build(&leaves).unwrap();
        assert_eq!(tree.node(1, 3), hash_node(&empty_digest(), &empty_digest()));
    }

    #[test]
    fn build_is_deterministic() {
        let leaves = random_leaves(37, 4);
        assert_eq!(
            MerkleTree::build(&leaves).unwrap().root(),
            MerkleTree::build(&leaves).unwrap().root()
        );
    }

    #[test]
    fn every_index_of_a_sixteen_leaf_tree_round_trips() {
        let leaves = random_leaves(16, 5);
        let tree = MerkleTree::build(&leaves).unwrap();
        for (i, leaf) in leaves.iter().enumerate() {
            let proof = tree.prove_inclusion(i).unwrap();
            assert!(verify_inclusion(&tree.root(), leaf, &proof).is_ok());
        }
    }

    #[test]
    fn proof_fails_against_another_trees_root() {
        let a = MerkleTree::build(&random_leaves(8, 6)).unwrap();
        let b = MerkleTree::build(&random_leaves(8, 7)).unwrap();
        let proof = a.prove_inclusion(3).unwrap();
        assert_eq!(
            verify_inclusion(&b.root(), a.leaf(3).unwrap(), &proof),
            Err(InclusionRejection::RootMismatch)
        );
    }

    #[test]
    fn out_of_range_index_is_an_argument_error() {
        let tree = MerkleTree::build(&random_leaves(5, 8)).unwrap();
        // Index 5 addresses padding, not an original leaf.
        assert_eq!(
            tree.prove_inclusion(5),
            Err(MerkleError::IndexOutOfRange {
                index: 5,
                leaf_count: 5
            })
        );
    }

    #[test]
    fn length_mismatch_is_a_distinct_malformed_signal() {
        let leaves = random_leaves(8, 9);
        let tree = MerkleTree::build(&leaves).unwrap();
        let mut proof = tree.prove_inclusion(2).unwrap();
        proof.directions.pop();
        assert!(matches!(
            verify_inclusion(&tree.root(), &leaves[2], &proof),
            Err(InclusionRejection::Malformed(_))
        ));
    }

    #[test]
    fn wire_round_trip_and_strictness() {
        let tree = MerkleTree::build(&random_leaves(11, 10)).unwrap();
        let proof = tree.prove_inclusion(6).unwrap();
        let bytes = proof.to_bytes();
        assert_eq!(InclusionProof::from_bytes(&bytes).unwrap(), proof);
        // Trailing garbage is rejected.
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(InclusionProof::from_bytes(&extended).is_err());
        assert!(InclusionProof::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn random_trees_round_trip(n in 1usize..200, seed in 0u64..1_000) {
            let leaves = random_leaves(n, seed);
            let tree = MerkleTree::build(&leaves).unwrap();
            let index = (seed as usize) % n;
            let proof = tree.prove_inclusion(index).unwrap();
            prop_assert!(verify_inclusion(&tree.root(), &leaves[index], &proof).is_ok());
        }

        #[test]
        fn sibling_bit_flips_reject(
            n in 2usize..64,
            seed in 0u64..1_000,
            bit in 0usize..256,
        ) {
            let leaves = random_leaves(n, seed);
            let tree = MerkleTree::build(&leaves).unwrap();
            let index = (seed as usize) % n;
            let mut proof = tree.prove_inclusion(index).unwrap();
            let pos = bit % (proof.siblings.len() * 256);
            proof.siblings[pos / 256].0[(pos % 256) / 8] ^= 1 << (pos % 8);
            prop_assert_eq!(
                verify_inclusion(&tree.root(), &leaves[index], &proof),
                Err(InclusionRejection::RootMismatch)
            );
        }

        #[test]
        fn leaf_bit_flips_reject(n in 1usize..64, seed in 0u64..1_000, bit in 0usize..256) {
            let leaves = random_leaves(n, seed);
            let tree = MerkleTree::build(&leaves).unwrap();
            let index = (seed as usize) % n;
            let proof = tree.prove_inclusion(index).unwrap();
            let mut leaf = leaves[index];
            leaf.0[bit / 8] ^= 1 << (bit % 8);
            prop_assert_eq!(
                verify_inclusion(&tree.root(), &leaf, &proof),
                Err(InclusionRejection::RootMismatch)
            );
        }

        #[test]
        fn direction_flips_reject_when_siblings_differ(
            n in 2usize..64,
            seed in 0u64..1_000,
            level in 0usize..6,
        ) {
            let leaves = random_leaves(n, seed);
            let tree = MerkleTree::build(&leaves).unwrap();
            let index = (seed as usize) % n;
            let mut proof = tree.prove_inclusion(index).unwrap();
            let level = level % proof.directions.len();
            proof.directions[level] = !proof.directions[level];
            // With random leaves the sibling at `level` differs from the
            // running node, so the flipped path can never reach the root;
            // the flip is also caught as disagreeing with the leaf index.
            prop_assert!(verify_inclusion(&tree.root(), &leaves[index], &proof).is_err());
        }
    }
}
