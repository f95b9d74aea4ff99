//! Sparse Merkle tree mapping 256-bit keys to boolean flags, with inclusion
//! and non-inclusion proofs. Backs the revocation (block) list.
//!
//! Absent keys implicitly map to `false`: the leaf default is the all-zero
//! digest, and empty subtrees hash to precomputed per-level defaults. A key
//! set to `true` stores `SHA-256(0x02 || key || 0x01)` at its leaf, binding
//! the full key into the leaf so proofs cannot be transplanted between keys.
//!
//! Updates are copy-on-write: `set` returns a new logical tree sharing every
//! unchanged subtree with its parent, which makes per-epoch snapshots cheap.
//! Trees are immutable values and safe to share across threads.
//!
//! The tree depth is configurable so exhaustive oracles can run at depth 8;
//! production use is depth 256. At reduced depth only the first `depth` bits
//! of a key select the leaf slot, so callers must keep test keys distinct in
//! that prefix.

use std::sync::Arc;

use thiserror::Error;

use crate::hash::{hash_tagged, Digest, TAG_SMT, TAG_SMT_KEY};

/// Depth used outside tests: one level per key bit.
pub const PRODUCTION_DEPTH: u16 = 256;
/// Smallest depth accepted; keeps the exhaustive test oracles meaningful.
pub const MIN_DEPTH: u16 = 8;

/// A 256-bit sparse-tree key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct SmtKey(pub [u8; 32]);

impl SmtKey {
    /// Derive the block-list key for an identity commitment digest:
    /// `SHA-256(0x05 || commitment)`.
    pub fn for_commitment(commitment: &Digest) -> SmtKey {
        SmtKey(hash_tagged(TAG_SMT_KEY, &[commitment.as_bytes()]).0)
    }

    /// Path bit at `level` counted from the root, MSB-first within bytes.
    fn bit(&self, level: usize) -> bool {
        self.0[level / 8] >> (7 - level % 8) & 1 == 1
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// Leaf digest for a key set to `true`.
fn leaf_true_digest(key: &SmtKey) -> Digest {
    hash_tagged(TAG_SMT, &[&key.0, &[0x01]])
}

/// Interior node rule, domain-separated from the dense tree.
fn node_digest(left: &Digest, right: &Digest) -> Digest {
    hash_tagged(TAG_SMT, &[left.as_bytes(), right.as_bytes()])
}

/// `defaults[h]` is the digest of an all-default subtree of height `h`;
/// `defaults[0]` is the absent-leaf digest.
fn compute_defaults(depth: u16) -> Vec<Digest> {
    let mut defaults = Vec::with_capacity(depth as usize + 1);
    defaults.push(Digest::ZERO);
    for h in 0..depth as usize {
        defaults.push(node_digest(&defaults[h], &defaults[h]));
    }
    defaults
}

#[derive(Debug)]
enum Node {
    Leaf {
        key: SmtKey,
        digest: Digest,
    },
    Inner {
        digest: Digest,
        left: Option<Arc<Node>>,
        right: Option<Arc<Node>>,
    },
}

impl Node {
    fn digest(&self) -> Digest {
        match self {
            Node::Leaf { digest, .. } => *digest,
            Node::Inner { digest, .. } => *digest,
        }
    }
}

fn child_digest(child: &Option<Arc<Node>>, height: usize, defaults: &[Digest]) -> Digest {
    child
        .as_ref()
        .map(|n| n.digest())
        .unwrap_or(defaults[height])
}

#[derive(Clone, Debug)]
pub struct SparseMerkleTree {
    depth: u16,
    root: Option<Arc<Node>>,
    defaults: Arc<Vec<Digest>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmtError {
    #[error("depth {0} outside supported range {MIN_DEPTH}..={PRODUCTION_DEPTH}")]
    DepthOutOfRange(u16),
}

impl SparseMerkleTree {
    /// An empty tree at the given depth; every key provably maps to `false`.
    pub fn new(depth: u16) -> Result<Self, SmtError> {
        if !(MIN_DEPTH..=PRODUCTION_DEPTH).contains(&depth) {
            return Err(SmtError::DepthOutOfRange(depth));
        }
        Ok(SparseMerkleTree {
            depth,
            root: None,
            defaults: Arc::new(compute_defaults(depth)),
        })
    }

    /// An empty tree at production depth.
    pub fn production() -> Self {
        Self::new(PRODUCTION_DEPTH).expect("production depth is valid")
    }

    pub fn depth(&self) -> u16 {
        self.depth
    }

    pub fn root(&self) -> Digest {
        child_digest(&self.root, self.depth as usize, &self.defaults)
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    /// Current value for `key` (`false` when absent).
    pub fn get(&self, key: &SmtKey) -> bool {
        let mut node = &self.root;
        for level in 0..self.depth as usize {
            match node.as_deref() {
                None => return false,
                Some(Node::Leaf { .. }) => unreachable!("leaf above leaf level"),
                Some(Node::Inner { left, right, .. }) => {
                    node = if key.bit(level) { right } else { left };
                }
            }
        }
        matches!(node.as_deref(), Some(Node::Leaf { key: stored, .. }) if stored == key)
    }

    /// Return a new tree with `key` mapped to `value`, sharing unchanged
    /// subtrees with `self`. Setting `false` on an absent key is a no-op.
    pub fn set(&self, key: &SmtKey, value: bool) -> SparseMerkleTree {
        let root = set_rec(
            &self.root,
            key,
            value,
            0,
            self.depth as usize,
            &self.defaults,
        );
        SparseMerkleTree {
            depth: self.depth,
            root,
            defaults: Arc::clone(&self.defaults),
        }
    }

    /// Prove the current mapping of `key` (inclusion when `true`,
    /// non-inclusion when `false`). Siblings run from the root toward the
    /// leaf and always number exactly `depth`.
    pub fn prove(&self, key: &SmtKey) -> SmtProof {
        let depth = self.depth as usize;
        let mut siblings = Vec::with_capacity(depth);
        let mut node = &self.root;
        for level in 0..depth {
            let child_height = depth - level - 1;
            match node.as_deref() {
                None => {
                    siblings.push(self.defaults[child_height]);
                }
                Some(Node::Leaf { .. }) => unreachable!("leaf above leaf level"),
                Some(Node::Inner { left, right, .. }) => {
                    let (next, sibling) = if key.bit(level) {
                        (right, left)
                    } else {
                        (left, right)
                    };
                    siblings.push(child_digest(sibling, child_height, &self.defaults));
                    node = next;
                }
            }
        }
        let value =
            matches!(node.as_deref(), Some(Node::Leaf { key: stored, .. }) if stored == key);
        SmtProof {
            key: *key,
            value,
            siblings,
        }
    }

    /// All keys currently mapped to `true`, in path order.
    pub fn true_keys(&self) -> Vec<SmtKey> {
        let mut keys = Vec::new();
        fn walk(node: &Option<Arc<Node>>, keys: &mut Vec<SmtKey>) {
            match node.as_deref() {
                None => {}
                Some(Node::Leaf { key, .. }) => keys.push(*key),
                Some(Node::Inner { left, right, .. }) => {
                    walk(left, keys);
                    walk(right, keys);
                }
            }
        }
        walk(&self.root, &mut keys);
        keys
    }
}

fn set_rec(
    node: &Option<Arc<Node>>,
    key: &SmtKey,
    value: bool,
    level: usize,
    depth: usize,
    defaults: &[Digest],
) -> Option<Arc<Node>> {
    if level == depth {
        return value.then(|| {
            Arc::new(Node::Leaf {
                key: *key,
                digest: leaf_true_digest(key),
            })
        });
    }
    let (left, right) = match node.as_deref() {
        None => (&None, &None),
        Some(Node::Inner { left, right, .. }) => (left, right),
        Some(Node::Leaf { .. }) => unreachable!("leaf above leaf level"),
    };
    let (new_left, new_right) = if key.bit(level) {
        (
            left.clone(),
            set_rec(right, key, value, level + 1, depth, defaults),
        )
    } else {
        (
            set_rec(left, key, value, level + 1, depth, defaults),
            right.clone(),
        )
    };
    if new_left.is_none() && new_right.is_none() {
        return None;
    }
    let child_height = depth - level - 1;
    let digest = node_digest(
        &child_digest(&new_left, child_height, defaults),
        &child_digest(&new_right, child_height, defaults),
    );
    Some(Arc::new(Node::Inner {
        digest,
        left: new_left,
        right: new_right,
    }))
}

/// Proof that a key maps to a value under some root. Carries a full sibling
/// list in memory; the wire form omits siblings equal to the level default,
/// marked in a bitmap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmtProof {
    pub key: SmtKey,
    pub value: bool,
    /// Root-to-leaf order, exactly `depth` entries.
    pub siblings: Vec<Digest>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmtRejection {
    #[error("malformed proof: {0}")]
    Malformed(&'static str),
    #[error("reconstructed root does not match")]
    RootMismatch,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmtCodecError {
    #[error("proof bytes truncated")]
    Truncated,
    #[error("depth {0} outside supported range")]
    DepthOutOfRange(u16),
    #[error("bitmap marks {marked} siblings but {present} are present")]
    BitmapMismatch { marked: usize, present: usize },
    #[error("trailing bytes after proof")]
    TrailingBytes,
    #[error("non-canonical proof encoding: {0}")]
    NonCanonical(&'static str),
}

impl SmtProof {
    pub fn depth(&self) -> u16 {
        self.siblings.len() as u16
    }

    /// Wire form: 32-byte key, u8 value, u16 LE depth, 32-byte bitmap
    /// (bit i, LSB-first per byte, marks a non-default sibling at path step
    /// i), then the non-default siblings in path order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let depth = self.siblings.len();
        let defaults = compute_defaults(depth as u16);
        let mut bitmap = [0u8; 32];
        let mut present = Vec::new();
        for (i, sibling) in self.siblings.iter().enumerate() {
            let child_height = depth - i - 1;
            if *sibling != defaults[child_height] {
                bitmap[i / 8] |= 1 << (i % 8);
                present.push(*sibling);
            }
        }
        let mut out = Vec::with_capacity(32 + 1 + 2 + 32 + present.len() * 32);
        out.extend_from_slice(&self.key.0);
        out.push(self.value as u8);
        out.extend_from_slice(&(depth as u16).to_le_bytes());
        out.extend_from_slice(&bitmap);
        for sibling in &present {
            out.extend_from_slice(sibling.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SmtCodecError> {
        if bytes.len() < 32 + 1 + 2 + 32 {
            return Err(SmtCodecError::Truncated);
        }
        let key = SmtKey(bytes[..32].try_into().expect("len checked"));
        let value = match bytes[32] {
            0 => false,
            1 => true,
            _ => return Err(SmtCodecError::NonCanonical("value byte must be 0 or 1")),
        };
        let depth = u16::from_le_bytes(bytes[33..35].try_into().expect("len checked"));
        if !(MIN_DEPTH..=PRODUCTION_DEPTH).contains(&depth) {
            return Err(SmtCodecError::DepthOutOfRange(depth));
        }
        let bitmap: [u8; 32] = bytes[35..67].try_into().expect("len checked");
        let marked = (0..depth as usize)
            .filter(|i| bitmap[i / 8] >> (i % 8) & 1 == 1)
            .count();
        // Bits beyond `depth` must be clear.
        if (depth as usize..256).any(|i| bitmap[i / 8] >> (i % 8) & 1 == 1) {
            return Err(SmtCodecError::BitmapMismatch {
                marked,
                present: (bytes.len() - 67) / 32,
            });
        }
        let rest = &bytes[67..];
        if !rest.len().is_multiple_of(32) {
            return Err(SmtCodecError::Truncated);
        }
        let present = rest.len() / 32;
        if present != marked {
            return Err(SmtCodecError::BitmapMismatch { marked, present });
        }
        let defaults = compute_defaults(depth);
        let mut siblings = Vec::with_capacity(depth as usize);
        let mut cursor = 0;
        for i in 0..depth as usize {
            let child_height = depth as usize - i - 1;
            if bitmap[i / 8] >> (i % 8) & 1 == 1 {
                let sibling = Digest::from_slice(&rest[cursor..cursor + 32]).expect("len checked");
                cursor += 32;
                if sibling == defaults[child_height] {
                    return Err(SmtCodecError::NonCanonical(
                        "explicit sibling equals the level default",
                    ));
                }
                siblings.push(sibling);
            } else {
                siblings.push(defaults[child_height]);
            }
        }
        if cursor != rest.len() {
            return Err(SmtCodecError::TrailingBytes);
        }
        Ok(SmtProof {
            key,
            value,
            siblings,
        })
    }
}

/// Accept iff reconstructing the root from the key path, the leaf encoding
/// of `proof.value`, and the expanded siblings equals `root`.
pub fn verify_proof(root: &Digest, proof: &SmtProof) -> Result<(), SmtRejection> {
    let depth = proof.siblings.len();
    if !(MIN_DEPTH as usize..=PRODUCTION_DEPTH as usize).contains(&depth) {
        return Err(SmtRejection::Malformed("sibling count out of range"));
    }
    let mut current = if proof.value {
        leaf_true_digest(&proof.key)
    } else {
        Digest::ZERO
    };
    for level in (0..depth).rev() {
        let sibling = &proof.siblings[level];
        current = if proof.key.bit(level) {
            node_digest(sibling, &current)
        } else {
            node_digest(&current, sibling)
        };
    }
    if current == *root {
        Ok(())
    } else {
        Err(SmtRejection::RootMismatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::{hash_leaf, hash_node};
    use rand::{Rng, SeedableRng};

    const TEST_DEPTH: u16 = 8;

    fn key_from_byte(b: u8) -> SmtKey {
        // Distinct in the first 8 bits, as reduced-depth trees require.
        let mut k = [0u8; 32];
        k[0] = b;
        k[1] = b.wrapping_mul(7);
        SmtKey(k)
    }

    fn random_key(rng: &mut impl Rng) -> SmtKey {
        SmtKey(rng.gen())
    }

    #[test]
    fn empty_tree_root_is_the_top_default() {
        let tree = SparseMerkleTree::new(TEST_DEPTH).unwrap();
        let defaults = compute_defaults(TEST_DEPTH);
        assert_eq!(tree.root(), defaults[TEST_DEPTH as usize]);
    }

    #[test]
    fn fresh_trees_have_identical_roots() {
        let a = SparseMerkleTree::new(TEST_DEPTH).unwrap();
        let b = SparseMerkleTree::new(TEST_DEPTH).unwrap();
        assert_eq!(a.root(), b.root());
        assert_eq!(
            SparseMerkleTree::production().root(),
            SparseMerkleTree::production().root()
        );
    }

    #[test]
    fn absent_key_proves_false_on_empty_tree() {
        let tree = SparseMerkleTree::production();
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        for _ in 0..32 {
            let key = random_key(&mut rng);
            let proof = tree.prove(&key);
            assert!(!proof.value);
            assert!(verify_proof(&tree.root(), &proof).is_ok());
        }
    }

    #[test]
    fn set_then_prove_true_verifies() {
        let tree = SparseMerkleTree::new(TEST_DEPTH).unwrap();
        let key = key_from_byte(42);
        let updated = tree.set(&key, true);
        assert!(updated.get(&key));
        let proof = updated.prove(&key);
        assert!(proof.value);
        assert!(verify_proof(&updated.root(), &proof).is_ok());
        // The original tree is untouched (copy-on-write).
        assert!(!tree.get(&key));
    }

    #[test]
    fn set_true_then_false_restores_the_empty_root() {
        let empty = SparseMerkleTree::new(TEST_DEPTH).unwrap();
        let key = key_from_byte(9);
        let restored = empty.set(&key, true).set(&key, false);
        assert_eq!(restored.root(), empty.root());
        assert!(restored.is_empty());
    }

    #[test]
    fn setting_false_on_absent_key_is_a_noop() {
        let empty = SparseMerkleTree::new(TEST_DEPTH).unwrap();
        let tree = empty.set(&key_from_byte(1), true);
        let same = tree.set(&key_from_byte(2), false);
        assert_eq!(tree.root(), same.root());
    }

    #[test]
    fn root_is_order_independent() {
        let empty = SparseMerkleTree::new(TEST_DEPTH).unwrap();
        let (k1, k2, k3) = (key_from_byte(3), key_from_byte(200), key_from_byte(77));
        let a = empty.set(&k1, true).set(&k2, true).set(&k3, true);
        let b = empty.set(&k3, true).set(&k1, true).set(&k2, true);
        assert_eq!(a.root(), b.root());
        // History independence: an insert-delete detour leaves no trace.
        let c = empty
            .set(&k2, true)
            .set(&key_from_byte(140), true)
            .set(&key_from_byte(140), false)
            .set(&k1, true)
            .set(&k3, true);
        assert_eq!(a.root(), c.root());
    }

    #[test]
    fn proof_for_one_key_fails_for_another() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let tree = SparseMerkleTree::production();
        for _ in 0..50 {
            let k1 = random_key(&mut rng);
            let k2 = random_key(&mut rng);
            let t = tree.set(&k1, true);
            let mut proof = t.prove(&k1);
            proof.key = k2;
            assert!(verify_proof(&t.root(), &proof).is_err());
        }
    }

    #[test]
    fn stale_proof_fails_after_unrelated_update() {
        let tree = SparseMerkleTree::new(TEST_DEPTH)
            .unwrap()
            .set(&key_from_byte(5), true);
        let proof = tree.prove(&key_from_byte(10));
        assert!(verify_proof(&tree.root(), &proof).is_ok());
        let later = tree.set(&key_from_byte(10), true);
        assert_eq!(
            verify_proof(&later.root(), &proof),
            Err(SmtRejection::RootMismatch)
        );
    }

    #[test]
    fn value_flip_rejects() {
        let tree = SparseMerkleTree::new(TEST_DEPTH)
            .unwrap()
            .set(&key_from_byte(6), true);
        let mut proof = tree.prove(&key_from_byte(6));
        proof.value = false;
        assert_eq!(
            verify_proof(&tree.root(), &proof),
            Err(SmtRejection::RootMismatch)
        );
    }

    #[test]
    fn wire_round_trip_is_identity_and_never_larger() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let mut tree = SparseMerkleTree::production();
        for _ in 0..8 {
            tree = tree.set(&random_key(&mut rng), true);
        }
        for _ in 0..16 {
            let key = random_key(&mut rng);
            let proof = tree.prove(&key);
            let bytes = proof.to_bytes();
            assert_eq!(SmtProof::from_bytes(&bytes).unwrap(), proof);
            // Compressed form is no larger than a fully expanded sibling list.
            assert!(bytes.len() <= 32 + 1 + 2 + 32 + proof.siblings.len() * 32);
        }
        // At production depth with few entries, compression is dramatic.
        let proof = tree.prove(&random_key(&mut rng));
        assert!(proof.to_bytes().len() < 1024);
    }

    #[test]
    fn malformed_wire_forms_are_rejected() {
        let tree = SparseMerkleTree::new(TEST_DEPTH)
            .unwrap()
            .set(&key_from_byte(8), true);
        let proof = tree.prove(&key_from_byte(8));
        let bytes = proof.to_bytes();
        // Truncated.
        assert!(SmtProof::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        // Bitmap claims a sibling that is not present.
        let mut tampered = bytes.clone();
        tampered[35] |= 0x80;
        assert!(matches!(
            SmtProof::from_bytes(&tampered),
            Err(SmtCodecError::BitmapMismatch { .. })
        ));
        // Bitmap bits beyond the depth must be clear.
        let mut high_bits = bytes.clone();
        high_bits[35 + 31] |= 0x80;
        assert!(SmtProof::from_bytes(&high_bits).is_err());
    }

    #[test]
    fn smt_key_derivation_is_domain_separated() {
        let commitment = hash_leaf(b"commitment").unwrap();
        let key = SmtKey::for_commitment(&commitment);
        assert_ne!(key.0, commitment.0);
        assert_eq!(key, SmtKey::for_commitment(&commitment));
    }

    #[test]
    fn smt_nodes_do_not_collide_with_dense_nodes() {
        let a = hash_leaf(b"a").unwrap();
        let b = hash_leaf(b"b").unwrap();
        assert_ne!(node_digest(&a, &b), hash_node(&a, &b));
    }

    /// Dense-tree oracle at depth 8: materialize all 256 leaves, fold with
    /// the sparse node rule, and derive proofs by direct sibling lookup.
    /// Written independently of the `Node`-based implementation.
    struct DenseOracle {
        levels: Vec<Vec<Digest>>,
    }

    impl DenseOracle {
        fn build(entries: &[(SmtKey, bool)]) -> DenseOracle {
            let mut leaves = vec![Digest::ZERO; 256];
            for (key, value) in entries {
                if *value {
                    leaves[key.0[0] as usize] = leaf_true_digest(key);
                } else {
                    leaves[key.0[0] as usize] = Digest::ZERO;
                }
            }
            let mut levels = vec![leaves];
            while levels.last().unwrap().len() > 1 {
                let below = levels.last().unwrap();
                let above = below
                    .chunks_exact(2)
                    .map(|p| node_digest(&p[0], &p[1]))
                    .collect();
                levels.push(above);
            }
            DenseOracle { levels }
        }

        fn root(&self) -> Digest {
            self.levels.last().unwrap()[0]
        }

        fn prove(&self, key: &SmtKey) -> Vec<Digest> {
            // Root-to-leaf sibling order, matching SmtProof.
            let mut position = key.0[0] as usize;
            let mut bottom_up = Vec::new();
            for level in 0..8 {
                bottom_up.push(self.levels[level][position ^ 1]);
                position >>= 1;
            }
            bottom_up.reverse();
            bottom_up
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arbitrary_keys() -> impl Strategy<Value = Vec<[u8; 32]>> {
            proptest::collection::vec(proptest::array::uniform32(any::<u8>()), 1..12)
        }

        proptest! {
            #[test]
            fn root_depends_only_on_the_final_mapping(keys in arbitrary_keys(), seed in any::<u64>()) {
                let keys: Vec<SmtKey> = keys.into_iter().map(SmtKey).collect();
                let mut forward = SparseMerkleTree::production();
                for key in &keys {
                    forward = forward.set(key, true);
                }
                // Insert in a shuffled order with a detour through a key
                // that is later cleared.
                let mut shuffled = keys.clone();
                let mut state = seed | 1;
                for i in (1..shuffled.len()).rev() {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    shuffled.swap(i, (state >> 33) as usize % (i + 1));
                }
                let detour = SmtKey([0x5C; 32]);
                let mut reordered = SparseMerkleTree::production().set(&detour, true);
                for key in &shuffled {
                    reordered = reordered.set(key, true);
                }
                reordered = reordered.set(&detour, keys.contains(&detour));
                prop_assert_eq!(forward.root(), reordered.root());
            }

            #[test]
            fn every_key_proves_its_value_and_round_trips(keys in arbitrary_keys(), probe in proptest::array::uniform32(any::<u8>())) {
                let keys: Vec<SmtKey> = keys.into_iter().map(SmtKey).collect();
                let mut tree = SparseMerkleTree::production();
                for key in &keys {
                    tree = tree.set(key, true);
                }
                for key in keys.iter().chain([&SmtKey(probe)]) {
                    let proof = tree.prove(key);
                    prop_assert_eq!(proof.value, tree.get(key));
                    prop_assert!(verify_proof(&tree.root(), &proof).is_ok());
                    let decoded = SmtProof::from_bytes(&proof.to_bytes()).unwrap();
                    prop_assert_eq!(&decoded, &proof);
                }
            }
        }
    }

    #[test]
    fn depth_eight_matches_dense_oracle_exhaustively() {
        // Every subset of a 32-key universe would be 2^32 cases; cover all
        // subsets of an 8-key slice exhaustively plus random 32-key subsets.
        let universe: Vec<SmtKey> = (0..32).map(|i| key_from_byte(i * 8 + 3)).collect();

        for mask in 0u32..256 {
            let entries: Vec<(SmtKey, bool)> =
                (0..8).map(|i| (universe[i], mask >> i & 1 == 1)).collect();
            check_against_oracle(&entries, &universe[..8]);
        }

        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        for _ in 0..100 {
            let entries: Vec<(SmtKey, bool)> =
                universe.iter().map(|k| (*k, rng.gen_bool(0.5))).collect();
            check_against_oracle(&entries, &universe);
        }
    }

    fn check_against_oracle(entries: &[(SmtKey, bool)], universe: &[SmtKey]) {
        let mut tree = SparseMerkleTree::new(TEST_DEPTH).unwrap();
        for (key, value) in entries {
            tree = tree.set(key, *value);
        }
        let oracle = DenseOracle::build(entries);
        assert_eq!(tree.root(), oracle.root());
        for key in universe {
            let proof = tree.prove(key);
            let expected = entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .unwrap_or(false);
            assert_eq!(proof.value, expected);
            assert_eq!(proof.siblings, oracle.prove(key));
            assert!(verify_proof(&tree.root(), &proof).is_ok());
        }
    }
}
