//! Participant-side identifier portfolios: generation, commitment,
//! authenticator binding, display encodings, and delegation grants.
//!
//! Identifiers are opaque 128-bit values, generated either from a secure
//! randomness source or deterministically from a seed via HKDF so that the
//! same secret always reproduces the same portfolio (and extending it
//! preserves the existing prefix). A portfolio is committed by a Merkle root
//! over its identifier leaves; that root is the only thing a coordinator
//! ever sees.

use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use thiserror::Error;

use crate::hash::{hash_raw, hash_tagged, Digest, TAG_BINDING, TAG_IDENTIFIER};
use crate::merkle::{InclusionProof, MerkleError, MerkleTree};

/// Identifier width in bytes.
pub const ID_LEN: usize = 16;
/// Largest portfolio size accepted.
pub const MAX_PORTFOLIO: usize = 1 << 20;
/// Authenticator byte-length bounds for [`bind_authenticator`].
pub const MIN_AUTHENTICATOR: usize = 16;
pub const MAX_AUTHENTICATOR: usize = 1 << 12;

/// An opaque 128-bit identifier value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdValue(pub [u8; ID_LEN]);

impl IdValue {
    pub fn as_bytes(&self) -> &[u8; ID_LEN] {
        &self.0
    }

    pub fn as_u128(&self) -> u128 {
        u128::from_be_bytes(self.0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for IdValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "IdValue({}..)", &self.to_hex()[..8])
    }
}

/// One identifier in a portfolio, with its position and the optional
/// attribute-commitment slot. The slot is hashed into the leaf whether or
/// not it is populated (zeros when absent), so leaf digests do not reveal
/// whether attributes are present.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Identifier {
    pub value: IdValue,
    pub index: u32,
    pub attr_commitment: Option<Digest>,
}

impl Identifier {
    /// Leaf digest: `SHA-256(0x03 || value || attr_commitment-or-zeros)`.
    pub fn leaf_digest(&self) -> Digest {
        identifier_leaf_digest(&self.value, self.attr_commitment.as_ref())
    }
}

/// Leaf digest for an identifier value plus its attribute slot.
pub fn identifier_leaf_digest(value: &IdValue, attr: Option<&Digest>) -> Digest {
    let zeros = [0u8; 32];
    let attr_bytes: &[u8] = attr.map(|d| d.as_bytes().as_slice()).unwrap_or(&zeros);
    hash_tagged(TAG_IDENTIFIER, &[&value.0, attr_bytes])
}

/// Seed material for deterministic portfolios.
#[derive(Clone)]
pub struct PortfolioSecret {
    pub seed: [u8; 32],
    pub derivation_label: Vec<u8>,
}

impl PortfolioSecret {
    pub fn new(seed: [u8; 32], derivation_label: impl Into<Vec<u8>>) -> Self {
        PortfolioSecret {
            seed,
            derivation_label: derivation_label.into(),
        }
    }

    /// Migration path for an existing lifelong identifier: the seed is
    /// `SHA-256(salt || legacy)`, so the legacy string itself never appears
    /// in anything derived downstream, and a salt prevents dictionary
    /// derivation from known identifiers.
    pub fn from_legacy_identifier(legacy: &str, salt: &[u8], label: impl Into<Vec<u8>>) -> Self {
        let seed = hash_raw(&[salt, legacy.as_bytes()]);
        PortfolioSecret::new(seed.0, label)
    }
}

impl std::fmt::Debug for PortfolioSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Never print the seed.
        f.debug_struct("PortfolioSecret")
            .field("derivation_label", &self.derivation_label)
            .finish_non_exhaustive()
    }
}

/// Merkle root over a portfolio, optionally bound to an authenticator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentityCommitment {
    pub root: Digest,
    pub bound_root: Option<Digest>,
    pub portfolio_size: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PortfolioError {
    #[error("portfolio size {0} outside 1..={MAX_PORTFOLIO}")]
    SizeOutOfRange(usize),
    #[error("identifier at position {position} has index {index}; indices must be 0..n in order")]
    IndexDisorder { position: usize, index: u32 },
    #[error("authenticator of {0} bytes outside {MIN_AUTHENTICATOR}..={MAX_AUTHENTICATOR}")]
    AuthenticatorLength(usize),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
}

/// Generate `n` distinct identifiers from the operating system's randomness
/// source. The secret-absent counterpart of [`derive_portfolio`].
pub fn generate_random_portfolio(n: usize) -> Result<Vec<Identifier>, PortfolioError> {
    generate_portfolio_with_rng(n, &mut rand::rngs::OsRng)
}

/// Generate `n` distinct identifiers from the caller's randomness source.
pub fn generate_portfolio_with_rng<R: RngCore + CryptoRng>(
    n: usize,
    rng: &mut R,
) -> Result<Vec<Identifier>, PortfolioError> {
    if n == 0 || n > MAX_PORTFOLIO {
        return Err(PortfolioError::SizeOutOfRange(n));
    }
    let mut seen = std::collections::HashSet::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    while ids.len() < n {
        let mut value = [0u8; ID_LEN];
        rng.fill_bytes(&mut value);
        // Collisions are negligible but regenerate rather than ship one.
        if seen.insert(value) {
            ids.push(Identifier {
                value: IdValue(value),
                index: ids.len() as u32,
                attr_commitment: None,
            });
        }
    }
    Ok(ids)
}

/// Derive `n` identifiers from a secret. Identifier `i` is the first 128
/// bits of `HKDF-SHA256(seed)` expanded with `(label, i)` as context, so the
/// sequence is reproducible and prefix-stable: `derive(s, n)` is a prefix of
/// `derive(s, n + k)`.
pub fn derive_portfolio(
    secret: &PortfolioSecret,
    n: usize,
) -> Result<Vec<Identifier>, PortfolioError> {
    if n == 0 || n > MAX_PORTFOLIO {
        return Err(PortfolioError::SizeOutOfRange(n));
    }
    let hk = Hkdf::<Sha256>::new(None, &secret.seed);
    let label = &secret.derivation_label;
    let mut ids = Vec::with_capacity(n);
    for index in 0..n as u32 {
        let mut info = Vec::with_capacity(2 + label.len() + 8);
        info.extend_from_slice(&(label.len() as u16).to_le_bytes());
        info.extend_from_slice(label);
        info.extend_from_slice(&u64::from(index).to_le_bytes());
        let mut value = [0u8; ID_LEN];
        hk.expand(&info, &mut value)
            .expect("16 bytes is a valid HKDF length");
        ids.push(Identifier {
            value: IdValue(value),
            index,
            attr_commitment: None,
        });
    }
    Ok(ids)
}

/// Build the Merkle tree over a portfolio's leaf digests, checking index
/// order on the way.
pub fn portfolio_tree(ids: &[Identifier]) -> Result<MerkleTree, PortfolioError> {
    if ids.is_empty() || ids.len() > MAX_PORTFOLIO {
        return Err(PortfolioError::SizeOutOfRange(ids.len()));
    }
    let mut leaves = Vec::with_capacity(ids.len());
    for (position, id) in ids.iter().enumerate() {
        if id.index as usize != position {
            return Err(PortfolioError::IndexDisorder {
                position,
                index: id.index,
            });
        }
        leaves.push(id.leaf_digest());
    }
    Ok(MerkleTree::build(&leaves)?)
}

/// Commit to a portfolio: the Merkle root over its identifier leaves.
pub fn commit_portfolio(ids: &[Identifier]) -> Result<IdentityCommitment, PortfolioError> {
    let tree = portfolio_tree(ids)?;
    Ok(IdentityCommitment {
        root: tree.root(),
        bound_root: None,
        portfolio_size: ids.len() as u32,
    })
}

/// Bind a commitment to a persistent authenticator (public key, biometric
/// tag, ...): `bound_root = SHA-256(0x04 || root || authenticator)`. The
/// unbound root is unchanged.
pub fn bind_authenticator(
    commitment: &IdentityCommitment,
    authenticator: &[u8],
) -> Result<IdentityCommitment, PortfolioError> {
    if !(MIN_AUTHENTICATOR..=MAX_AUTHENTICATOR).contains(&authenticator.len()) {
        return Err(PortfolioError::AuthenticatorLength(authenticator.len()));
    }
    Ok(IdentityCommitment {
        root: commitment.root,
        bound_root: Some(hash_tagged(
            TAG_BINDING,
            &[commitment.root.as_bytes(), authenticator],
        )),
        portfolio_size: commitment.portfolio_size,
    })
}

// ---------------------------------------------------------------------------
// Display encodings

/// How an identifier is rendered for entry into existing forms and systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DisplayFormat {
    /// Canonical 36-character hex-dash form of the 128-bit value.
    Uuid,
    /// 26-character unpadded RFC 4648 base32.
    Base32,
    /// The value reduced modulo 10^d, zero-padded to d digits. Lossy:
    /// distinct identifiers can collide at small d (bounded by the birthday
    /// bound, exercised in tests).
    LegacyNumeric(u8),
}

pub const MIN_LEGACY_DIGITS: u8 = 9;
pub const MAX_LEGACY_DIGITS: u8 = 38;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("legacy-numeric width {0} outside {MIN_LEGACY_DIGITS}..={MAX_LEGACY_DIGITS}")]
    DigitsOutOfRange(u8),
    #[error("legacy-numeric encoding is lossy and cannot be decoded")]
    LossyFormat,
    #[error("display string is not valid for the requested format")]
    BadDisplay,
}

pub fn encode_identifier(value: &IdValue, format: DisplayFormat) -> Result<String, EncodeError> {
    match format {
        DisplayFormat::Uuid => {
            let h = value.to_hex();
            Ok(format!(
                "{}-{}-{}-{}-{}",
                &h[..8],
                &h[8..12],
                &h[12..16],
                &h[16..20],
                &h[20..]
            ))
        }
        DisplayFormat::Base32 => Ok(data_encoding::BASE32_NOPAD.encode(&value.0)),
        DisplayFormat::LegacyNumeric(d) => {
            if !(MIN_LEGACY_DIGITS..=MAX_LEGACY_DIGITS).contains(&d) {
                return Err(EncodeError::DigitsOutOfRange(d));
            }
            let modulus = 10u128.pow(u32::from(d));
            Ok(format!(
                "{:0width$}",
                value.as_u128() % modulus,
                width = d as usize
            ))
        }
    }
}

/// Recover the 128-bit value from a lossless display form.
pub fn decode_identifier(display: &str, format: DisplayFormat) -> Result<IdValue, EncodeError> {
    match format {
        DisplayFormat::Uuid => {
            let parts: Vec<&str> = display.split('-').collect();
            if parts.len() != 5
                || [8, 4, 4, 4, 12]
                    != [
                        parts[0].len(),
                        parts[1].len(),
                        parts[2].len(),
                        parts[3].len(),
                        parts[4].len(),
                    ]
            {
                return Err(EncodeError::BadDisplay);
            }
            let joined: String = parts.concat().to_ascii_lowercase();
            let bytes = hex::decode(&joined).map_err(|_| EncodeError::BadDisplay)?;
            let arr: [u8; ID_LEN] = bytes.try_into().map_err(|_| EncodeError::BadDisplay)?;
            Ok(IdValue(arr))
        }
        DisplayFormat::Base32 => {
            let bytes = data_encoding::BASE32_NOPAD
                .decode(display.as_bytes())
                .map_err(|_| EncodeError::BadDisplay)?;
            let arr: [u8; ID_LEN] = bytes.try_into().map_err(|_| EncodeError::BadDisplay)?;
            Ok(IdValue(arr))
        }
        DisplayFormat::LegacyNumeric(_) => Err(EncodeError::LossyFormat),
    }
}

/// Check a display string against an expected value. Accepts when the
/// string equals the value's rendering in any format whose shape it fits;
/// the shapes overlap (a 26-character run of digits 2..7 is both base32 and
/// a legacy width), so each candidate format is tried rather than inferred.
pub fn display_matches(display: &str, value: &IdValue) -> bool {
    if display.len() == 36
        && decode_identifier(display, DisplayFormat::Uuid)
            .map(|v| v == *value)
            .unwrap_or(false)
    {
        return true;
    }
    if display.len() == 26
        && decode_identifier(display, DisplayFormat::Base32)
            .map(|v| v == *value)
            .unwrap_or(false)
    {
        return true;
    }
    if display.bytes().all(|b| b.is_ascii_digit())
        && (MIN_LEGACY_DIGITS as usize..=MAX_LEGACY_DIGITS as usize).contains(&display.len())
        && encode_identifier(value, DisplayFormat::LegacyNumeric(display.len() as u8))
            .map(|s| s == display)
            .unwrap_or(false)
    {
        return true;
    }
    false
}

// ---------------------------------------------------------------------------
// Delegation

/// A complete subtree of a portfolio handed to a surrogate, plus the path
/// linking the subtree root to the identity commitment. The surrogate can
/// compose full inclusion proofs for every index in range and learns nothing
/// about other identifiers beyond sibling digests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelegationGrant {
    pub subtree_root: Digest,
    pub range_start: u32,
    /// Exclusive.
    pub range_end: u32,
    pub portfolio_size: u32,
    /// The identity commitment root the grant chains up to.
    pub commitment_root: Digest,
    /// Identifiers at indices `range_start..min(range_end, portfolio_size)`.
    pub identifiers: Vec<Identifier>,
    /// Path from `subtree_root` to `commitment_root`; empty when the range
    /// covers the whole padded tree.
    pub upper_path: InclusionProof,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DelegationError {
    #[error("range [{start}, {end}) is not a complete aligned subtree of a {padded}-leaf tree")]
    MisalignedRange { start: u32, end: u32, padded: u32 },
    #[error("grant does not cover index {0}")]
    OutOfRange(u32),
    #[error("no identifier exists at padded index {0}")]
    NoIdentifierAtIndex(u32),
    #[error("portfolio does not match commitment")]
    CommitmentMismatch,
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}

impl From<MerkleError> for DelegationError {
    fn from(e: MerkleError) -> Self {
        DelegationError::Portfolio(PortfolioError::Merkle(e))
    }
}

/// Carve out the aligned subtree `start..end` of a portfolio as a grant.
pub fn delegate_subtree(
    ids: &[Identifier],
    commitment: &IdentityCommitment,
    start: u32,
    end: u32,
) -> Result<DelegationGrant, DelegationError> {
    let tree = portfolio_tree(ids)?;
    if tree.root() != commitment.root || commitment.portfolio_size as usize != ids.len() {
        return Err(DelegationError::CommitmentMismatch);
    }
    let padded = tree.padded_len() as u32;
    let len = end.saturating_sub(start);
    let aligned = len >= 1 && len.is_power_of_two() && start.is_multiple_of(len) && end <= padded;
    if !aligned {
        return Err(DelegationError::MisalignedRange { start, end, padded });
    }
    let subtree_level = len.trailing_zeros() as usize;
    let subtree_index = (start >> subtree_level) as usize;
    let subtree_root = tree.node(subtree_level, subtree_index);

    // Siblings from the subtree root up to the commitment root.
    let mut siblings = Vec::new();
    let mut directions = Vec::new();
    let mut position = subtree_index;
    for level in subtree_level..tree.depth() {
        siblings.push(tree.node(level, position ^ 1));
        directions.push(position & 1 == 1);
        position >>= 1;
    }
    let upper_path = InclusionProof {
        leaf_index: subtree_index as u32,
        siblings,
        directions,
    };

    let covered_end = end.min(ids.len() as u32);
    let identifiers = ids[start as usize..covered_end.max(start) as usize].to_vec();
    Ok(DelegationGrant {
        subtree_root,
        range_start: start,
        range_end: end,
        portfolio_size: ids.len() as u32,
        commitment_root: commitment.root,
        identifiers,
        upper_path,
    })
}

impl DelegationGrant {
    /// The granted identifier at absolute portfolio `index`, if any.
    pub fn identifier(&self, index: u32) -> Option<&Identifier> {
        if index < self.range_start || index >= self.range_end {
            return None;
        }
        self.identifiers.get((index - self.range_start) as usize)
    }

    /// Surrogate-side acceptance check: the granted identifiers rebuild the
    /// claimed subtree root, and the upper path links it to the claimed
    /// commitment root. A grant that fails this check proves nothing.
    pub fn validate(&self) -> Result<(), DelegationError> {
        let len = self.range_end.saturating_sub(self.range_start);
        let padded = (self.portfolio_size.max(1) as usize).next_power_of_two() as u32;
        let aligned = len >= 1
            && len.is_power_of_two()
            && self.range_start.is_multiple_of(len)
            && self.range_end <= padded;
        if !aligned {
            return Err(DelegationError::MisalignedRange {
                start: self.range_start,
                end: self.range_end,
                padded,
            });
        }
        let covered = self
            .range_end
            .min(self.portfolio_size)
            .saturating_sub(self.range_start);
        if self.identifiers.len() != covered as usize
            || self
                .identifiers
                .iter()
                .enumerate()
                .any(|(offset, id)| id.index != self.range_start + offset as u32)
        {
            return Err(DelegationError::CommitmentMismatch);
        }
        let mut leaves: Vec<Digest> = self.identifiers.iter().map(|id| id.leaf_digest()).collect();
        leaves.resize(len as usize, crate::hash::empty_digest());
        let subtree = MerkleTree::build(&leaves)?;
        if subtree.root() != self.subtree_root {
            return Err(DelegationError::CommitmentMismatch);
        }
        if self.upper_path.leaf_index != self.range_start >> len.trailing_zeros() {
            return Err(DelegationError::CommitmentMismatch);
        }
        crate::merkle::verify_inclusion(&self.commitment_root, &self.subtree_root, &self.upper_path)
            .map_err(|_| DelegationError::CommitmentMismatch)
    }
}

/// Compose a full inclusion proof against the identity commitment root for
/// an in-range index. Byte-identical to the proof the portfolio owner would
/// produce for the same index.
pub fn compose_delegated_proof(
    grant: &DelegationGrant,
    index: u32,
) -> Result<InclusionProof, DelegationError> {
    if index < grant.range_start || index >= grant.range_end {
        return Err(DelegationError::OutOfRange(index));
    }
    let covered = grant.range_start + grant.identifiers.len() as u32;
    if index >= covered {
        return Err(DelegationError::NoIdentifierAtIndex(index));
    }
    let len = grant.range_end - grant.range_start;
    let relative = index - grant.range_start;

    let mut siblings;
    let mut directions;
    if len == 1 {
        siblings = Vec::new();
        directions = Vec::new();
    } else {
        // Rebuild the subtree exactly as it sits inside the padded portfolio
        // tree: granted leaves first, empty padding beyond the portfolio.
        let mut leaves: Vec<Digest> = grant
            .identifiers
            .iter()
            .map(|id| id.leaf_digest())
            .collect();
        leaves.resize(len as usize, crate::hash::empty_digest());
        let subtree = MerkleTree::build(&leaves)?;
        debug_assert_eq!(subtree.root(), grant.subtree_root);
        let lower = subtree.prove_inclusion(relative as usize)?;
        siblings = lower.siblings;
        directions = lower.directions;
    }
    siblings.extend_from_slice(&grant.upper_path.siblings);
    directions.extend_from_slice(&grant.upper_path.directions);
    Ok(InclusionProof {
        leaf_index: index,
        siblings,
        directions,
    })
}

// ---------------------------------------------------------------------------
// Portfolio file codec (participant keystore payload)

pub const PORTFOLIO_MAGIC: &[u8; 5] = b"ULID1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PortfolioCodecError {
    #[error("bad magic or truncated portfolio file")]
    BadHeader,
    #[error("portfolio file length does not match its header")]
    LengthMismatch,
}

/// Versioned binary form: magic, u32 LE count, u8 seed flag (+ 32-byte seed),
/// then per identifier a 16-byte value and a 32-byte attribute commitment
/// (zeros when absent).
pub fn encode_portfolio_file(ids: &[Identifier], seed: Option<&[u8; 32]>) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 4 + 1 + 32 + ids.len() * 48);
    out.extend_from_slice(PORTFOLIO_MAGIC);
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    match seed {
        Some(seed) => {
            out.push(1);
            out.extend_from_slice(seed);
        }
        None => out.push(0),
    }
    for id in ids {
        out.extend_from_slice(&id.value.0);
        match &id.attr_commitment {
            Some(d) => out.extend_from_slice(d.as_bytes()),
            None => out.extend_from_slice(&[0u8; 32]),
        }
    }
    out
}

pub fn decode_portfolio_file(
    bytes: &[u8],
) -> Result<(Vec<Identifier>, Option<[u8; 32]>), PortfolioCodecError> {
    if bytes.len() < 10 || &bytes[..5] != PORTFOLIO_MAGIC {
        return Err(PortfolioCodecError::BadHeader);
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().expect("len checked")) as usize;
    let (seed, body_start) = match bytes[9] {
        0 => (None, 10),
        1 => {
            if bytes.len() < 42 {
                return Err(PortfolioCodecError::BadHeader);
            }
            let seed: [u8; 32] = bytes[10..42].try_into().expect("len checked");
            (Some(seed), 42)
        }
        _ => return Err(PortfolioCodecError::BadHeader),
    };
    if bytes.len() != body_start + n * 48 {
        return Err(PortfolioCodecError::LengthMismatch);
    }
    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let offset = body_start + i * 48;
        let value = IdValue(bytes[offset..offset + 16].try_into().expect("len checked"));
        let attr_bytes: [u8; 32] = bytes[offset + 16..offset + 48]
            .try_into()
            .expect("len checked");
        let attr_commitment = if attr_bytes == [0u8; 32] {
            None
        } else {
            Some(Digest(attr_bytes))
        };
        ids.push(Identifier {
            value,
            index: i as u32,
            attr_commitment,
        });
    }
    Ok((ids, seed))
}
