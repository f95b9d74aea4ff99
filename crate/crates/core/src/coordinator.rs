//! The coordinator: accepts identity-commitment registrations, maintains the
//! allow tree and the block (revocation) tree, and publishes epoch-stamped
//! signed root bundles.
//!
//! The coordinator never sees identifiers, only commitment digests. All
//! mutations flow through an append-only audit log; replaying the log from
//! genesis reproduces every published root pair. Registrations and
//! revocations queue until an explicit `publish_epoch` folds them in.
//!
//! Durability protocol per publish: write the bundle file, then append the
//! publish record. The log record is the commit point; an orphaned bundle
//! file without its record is discarded on reload, and a logged publish
//! with a missing bundle file is completed by re-signing (Ed25519 signing is
//! deterministic, so recovery is byte-exact). Either way no epoch is ever
//! skipped or duplicated.

use std::collections::HashSet;
use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use thiserror::Error;

use crate::hash::{empty_digest, Digest};
use crate::merkle::{InclusionProof, MerkleTree};
use crate::smt::{SmtKey, SmtProof, SparseMerkleTree};
use crate::store::RegistryStore;

/// An epoch-stamped, signed (allow root, block root) pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootBundle {
    pub epoch: u64,
    pub allow_root: Digest,
    pub block_root: Digest,
    /// Seconds; the coordinator's clock, not a trusted timestamp.
    pub issued_at: u64,
    pub signature: [u8; 64],
}

impl RootBundle {
    /// The signed portion: u64 LE epoch, allow root, block root,
    /// u64 LE issued_at.
    pub fn signing_bytes(
        epoch: u64,
        allow_root: &Digest,
        block_root: &Digest,
        issued_at: u64,
    ) -> [u8; 80] {
        let mut out = [0u8; 80];
        out[..8].copy_from_slice(&epoch.to_le_bytes());
        out[8..40].copy_from_slice(allow_root.as_bytes());
        out[40..72].copy_from_slice(block_root.as_bytes());
        out[72..80].copy_from_slice(&issued_at.to_le_bytes());
        out
    }

    pub fn sign(
        key: &SigningKey,
        epoch: u64,
        allow_root: Digest,
        block_root: Digest,
        issued_at: u64,
    ) -> RootBundle {
        let msg = Self::signing_bytes(epoch, &allow_root, &block_root, issued_at);
        RootBundle {
            epoch,
            allow_root,
            block_root,
            issued_at,
            signature: key.sign(&msg).to_bytes(),
        }
    }

    pub fn verify_signature(&self, key: &VerifyingKey) -> bool {
        let msg = Self::signing_bytes(
            self.epoch,
            &self.allow_root,
            &self.block_root,
            self.issued_at,
        );
        key.verify(&msg, &Signature::from_bytes(&self.signature))
            .is_ok()
    }

    /// Canonical encoding: the 80 signed bytes followed by the signature.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(144);
        out.extend_from_slice(&Self::signing_bytes(
            self.epoch,
            &self.allow_root,
            &self.block_root,
            self.issued_at,
        ));
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleCodecError> {
        if bytes.len() != 144 {
            return Err(BundleCodecError::BadLength(bytes.len()));
        }
        Ok(RootBundle {
            epoch: u64::from_le_bytes(bytes[..8].try_into().expect("len checked")),
            allow_root: Digest::from_slice(&bytes[8..40]).expect("len checked"),
            block_root: Digest::from_slice(&bytes[40..72]).expect("len checked"),
            issued_at: u64::from_le_bytes(bytes[72..80].try_into().expect("len checked")),
            signature: bytes[80..144].try_into().expect("len checked"),
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BundleCodecError {
    #[error("bundle must be 144 bytes, got {0}")]
    BadLength(usize),
}

// ---------------------------------------------------------------------------
// Audit log

/// One append-only log record. The log is newline-delimited text so it can
/// be served and inspected as-is.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditRecord {
    pub epoch: u64,
    pub action: AuditAction,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditAction {
    Genesis,
    Register(Digest),
    Revoke(Digest),
    Publish {
        allow_root: Digest,
        block_root: Digest,
        issued_at: u64,
    },
}

impl fmt::Display for AuditRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.action {
            AuditAction::Genesis => write!(f, "{} genesis -", self.epoch),
            AuditAction::Register(c) => write!(f, "{} register {}", self.epoch, c),
            AuditAction::Revoke(c) => write!(f, "{} revoke {}", self.epoch, c),
            AuditAction::Publish {
                allow_root,
                block_root,
                issued_at,
            } => write!(
                f,
                "{} publish {} {} {}",
                self.epoch, allow_root, block_root, issued_at
            ),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditParseError {
    #[error("bad audit record: {0}")]
    Malformed(String),
}

impl FromStr for AuditRecord {
    type Err = AuditParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let bad = || AuditParseError::Malformed(line.to_string());
        let mut parts = line.split_whitespace();
        let epoch: u64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let action = match (parts.next().ok_or_else(bad)?, parts.next()) {
            ("genesis", Some("-")) => AuditAction::Genesis,
            ("register", Some(hex)) => {
                AuditAction::Register(Digest::from_hex(hex).map_err(|_| bad())?)
            }
            ("revoke", Some(hex)) => AuditAction::Revoke(Digest::from_hex(hex).map_err(|_| bad())?),
            ("publish", Some(allow)) => {
                let block = parts.next().ok_or_else(bad)?;
                let issued_at: u64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                AuditAction::Publish {
                    allow_root: Digest::from_hex(allow).map_err(|_| bad())?,
                    block_root: Digest::from_hex(block).map_err(|_| bad())?,
                    issued_at,
                }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(AuditRecord { epoch, action })
    }
}

// ---------------------------------------------------------------------------
// Time

/// Clock abstraction so harness runs are reproducible.
pub trait TimeSource: Send {
    fn now(&mut self) -> u64;
}

/// Wall-clock seconds.
#[derive(Debug, Default)]
pub struct SystemTimeSource;

impl TimeSource for SystemTimeSource {
    fn now(&mut self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

/// Deterministic clock: `base`, `base + step`, `base + 2*step`, ...
#[derive(Debug)]
pub struct StepTimeSource {
    next: u64,
    step: u64,
}

impl StepTimeSource {
    pub fn new(base: u64, step: u64) -> Self {
        StepTimeSource { next: base, step }
    }
}

impl TimeSource for StepTimeSource {
    fn now(&mut self) -> u64 {
        let now = self.next;
        self.next += self.step;
        now
    }
}

// ---------------------------------------------------------------------------
// Registry

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("commitment {0} is already registered")]
    Duplicate(Digest),
    #[error("commitment {0} is not registered")]
    UnknownCommitment(Digest),
    #[error("epoch {0} has not been published")]
    UnknownEpoch(u64),
    #[error("no epochs have been published yet")]
    NoPublishedEpochs,
    #[error("commitment {commitment} was not yet registered at epoch {epoch}")]
    NotRegisteredAtEpoch { commitment: Digest, epoch: u64 },
    #[error("storage: {0}")]
    Storage(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("storage: {0}")]
    Storage(#[from] io::Error),
    #[error(transparent)]
    Audit(#[from] AuditParseError),
    #[error("audit log does not start with a genesis record")]
    MissingGenesis,
    #[error("log replay diverges at epoch {epoch}: {detail}")]
    Divergence { epoch: u64, detail: String },
    #[error("stored bundle for epoch {0} has an invalid signature")]
    BadBundleSignature(u64),
}

/// Receipt for a queued registration: the commitment will be in the allow
/// tree from `epoch_effective` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingReceipt {
    pub commitment: Digest,
    pub epoch_effective: u64,
}

pub struct Coordinator<S: RegistryStore> {
    signing_key: SigningKey,
    clock: Box<dyn TimeSource>,
    store: S,
    smt_depth: u16,
    commitments: Vec<Digest>,
    known: HashSet<Digest>,
    revoked: HashSet<Digest>,
    block: SparseMerkleTree,
    pending_registers: Vec<Digest>,
    pending_revokes: Vec<Digest>,
    bundles: Vec<RootBundle>,
    epoch_allow_len: Vec<usize>,
    epoch_block: Vec<SparseMerkleTree>,
    audit: Vec<AuditRecord>,
}

impl<S: RegistryStore> Coordinator<S> {
    /// Open a coordinator over a store, replaying any existing log. A fresh
    /// store gets a genesis record.
    pub fn open(
        mut store: S,
        signing_key: SigningKey,
        clock: Box<dyn TimeSource>,
        smt_depth: u16,
    ) -> Result<Self, LoadError> {
        let stored = store.load()?;
        let mut coordinator = Coordinator {
            signing_key,
            clock,
            store,
            smt_depth,
            commitments: Vec::new(),
            known: HashSet::new(),
            revoked: HashSet::new(),
            block: SparseMerkleTree::new(smt_depth).expect("validated depth"),
            pending_registers: Vec::new(),
            pending_revokes: Vec::new(),
            bundles: Vec::new(),
            epoch_allow_len: Vec::new(),
            epoch_block: Vec::new(),
            audit: Vec::new(),
        };

        if stored.log_lines.is_empty() {
            let genesis = AuditRecord {
                epoch: 0,
                action: AuditAction::Genesis,
            };
            coordinator.store.append_record(&genesis.to_string())?;
            coordinator.audit.push(genesis);
            return Ok(coordinator);
        }

        let records: Vec<AuditRecord> = stored
            .log_lines
            .iter()
            .map(|l| l.parse())
            .collect::<Result<_, _>>()?;
        if records.first().map(|r| &r.action) != Some(&AuditAction::Genesis) {
            return Err(LoadError::MissingGenesis);
        }

        for record in &records {
            coordinator.audit.push(record.clone());
            match &record.action {
                AuditAction::Genesis => {}
                AuditAction::Register(c) => {
                    coordinator.pending_registers.push(*c);
                    coordinator.known.insert(*c);
                }
                AuditAction::Revoke(c) => {
                    if !coordinator.revoked.contains(c) && !coordinator.pending_revokes.contains(c)
                    {
                        coordinator.pending_revokes.push(*c);
                    }
                }
                AuditAction::Publish {
                    allow_root,
                    block_root,
                    issued_at,
                } => {
                    let epoch = coordinator.bundles.len() as u64 + 1;
                    if record.epoch != epoch {
                        return Err(LoadError::Divergence {
                            epoch: record.epoch,
                            detail: format!("expected publish epoch {epoch}"),
                        });
                    }
                    coordinator.fold_pending();
                    let allow = allow_tree(&coordinator.commitments).root();
                    let block = coordinator.block.root();
                    if allow != *allow_root || block != *block_root {
                        return Err(LoadError::Divergence {
                            epoch,
                            detail: "recomputed roots differ from the logged roots".into(),
                        });
                    }
                    // Prefer the stored bundle; re-sign if it is missing
                    // (crash between log append and a later manual removal).
                    let bundle = match stored.bundles.get(&epoch) {
                        Some(stored_bundle)
                            if stored_bundle.allow_root == allow
                                && stored_bundle.block_root == block
                                && stored_bundle.issued_at == *issued_at =>
                        {
                            stored_bundle.clone()
                        }
                        _ => {
                            let resigned = RootBundle::sign(
                                &coordinator.signing_key,
                                epoch,
                                allow,
                                block,
                                *issued_at,
                            );
                            coordinator.store.put_bundle(&resigned)?;
                            resigned
                        }
                    };
                    if !bundle.verify_signature(&coordinator.signing_key.verifying_key()) {
                        return Err(LoadError::BadBundleSignature(epoch));
                    }
                    coordinator
                        .epoch_allow_len
                        .push(coordinator.commitments.len());
                    coordinator.epoch_block.push(coordinator.block.clone());
                    coordinator.bundles.push(bundle);
                }
            }
        }
        Ok(coordinator)
    }

    fn fold_pending(&mut self) {
        for c in self.pending_registers.drain(..) {
            self.commitments.push(c);
        }
        for c in self.pending_revokes.drain(..) {
            self.block = self.block.set(&SmtKey::for_commitment(&c), true);
            self.revoked.insert(c);
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing_key.verifying_key()
    }

    /// Number of published epochs; bundles are numbered 1..=current.
    pub fn current_epoch(&self) -> u64 {
        self.bundles.len() as u64
    }

    /// Queue a commitment for inclusion at the next publish. The record is
    /// durable before the call returns.
    pub fn register_commitment(
        &mut self,
        commitment: Digest,
    ) -> Result<PendingReceipt, RegistryError> {
        if self.known.contains(&commitment) {
            return Err(RegistryError::Duplicate(commitment));
        }
        let epoch_effective = self.current_epoch() + 1;
        let record = AuditRecord {
            epoch: epoch_effective,
            action: AuditAction::Register(commitment),
        };
        self.store.append_record(&record.to_string())?;
        self.audit.push(record);
        self.known.insert(commitment);
        self.pending_registers.push(commitment);
        Ok(PendingReceipt {
            commitment,
            epoch_effective,
        })
    }

    /// Queue a revocation, effective at the next publish. Revoking an
    /// already-revoked commitment succeeds idempotently but still appends an
    /// audit entry. Revocation is permanent: there is no unrevoke operation,
    /// since reversal would silently re-validate leaked credentials.
    pub fn revoke_commitment(
        &mut self,
        commitment: Digest,
    ) -> Result<PendingReceipt, RegistryError> {
        if !self.known.contains(&commitment) {
            return Err(RegistryError::UnknownCommitment(commitment));
        }
        let epoch_effective = self.current_epoch() + 1;
        let record = AuditRecord {
            epoch: epoch_effective,
            action: AuditAction::Revoke(commitment),
        };
        self.store.append_record(&record.to_string())?;
        self.audit.push(record);
        if !self.revoked.contains(&commitment) && !self.pending_revokes.contains(&commitment) {
            self.pending_revokes.push(commitment);
        }
        Ok(PendingReceipt {
            commitment,
            epoch_effective,
        })
    }

    /// Fold pending changes, sign the new roots, persist, and serve. With no
    /// pending changes this re-signs the same roots at a fresh epoch.
    pub fn publish_epoch(&mut self) -> Result<RootBundle, RegistryError> {
        let mut next_commitments = self.commitments.clone();
        next_commitments.extend_from_slice(&self.pending_registers);
        let mut next_block = self.block.clone();
        for c in &self.pending_revokes {
            next_block = next_block.set(&SmtKey::for_commitment(c), true);
        }
        let epoch = self.current_epoch() + 1;
        let issued_at = self.clock.now();
        let bundle = RootBundle::sign(
            &self.signing_key,
            epoch,
            allow_tree(&next_commitments).root(),
            next_block.root(),
            issued_at,
        );
        let record = AuditRecord {
            epoch,
            action: AuditAction::Publish {
                allow_root: bundle.allow_root,
                block_root: bundle.block_root,
                issued_at,
            },
        };

        // Bundle file first, then the log record as the commit point. A
        // failure anywhere leaves the epoch unconsumed and the queue intact.
        self.store.put_bundle(&bundle)?;
        self.store.append_record(&record.to_string())?;

        self.audit.push(record);
        for c in self.pending_revokes.drain(..) {
            self.revoked.insert(c);
        }
        self.pending_registers.clear();
        self.commitments = next_commitments;
        self.block = next_block;
        self.epoch_allow_len.push(self.commitments.len());
        self.epoch_block.push(self.block.clone());
        self.bundles.push(bundle.clone());
        Ok(bundle)
    }

    /// The signed bundle for `epoch` (current when unspecified).
    pub fn fetch_bundle(&self, epoch: Option<u64>) -> Result<&RootBundle, RegistryError> {
        let epoch = match epoch {
            Some(e) => e,
            None => self.current_epoch(),
        };
        if epoch == 0 && self.bundles.is_empty() {
            return Err(RegistryError::NoPublishedEpochs);
        }
        self.bundles
            .get(epoch.wrapping_sub(1) as usize)
            .filter(|_| epoch >= 1)
            .ok_or(RegistryError::UnknownEpoch(epoch))
    }

    /// Serve the allow-tree inclusion proof and the block-tree proof for a
    /// commitment at an epoch, so its owner can assemble witnesses without a
    /// local copy of the trees. A revoked commitment gets a block proof with
    /// value `true`.
    pub fn membership_witness(
        &self,
        commitment: Digest,
        epoch: Option<u64>,
    ) -> Result<(InclusionProof, SmtProof), RegistryError> {
        let bundle = self.fetch_bundle(epoch)?;
        let epoch = bundle.epoch;
        let allow_len = self.epoch_allow_len[(epoch - 1) as usize];
        let index = self.commitments[..allow_len]
            .iter()
            .position(|c| *c == commitment)
            .ok_or({
                if self.known.contains(&commitment) {
                    RegistryError::NotRegisteredAtEpoch { commitment, epoch }
                } else {
                    RegistryError::UnknownCommitment(commitment)
                }
            })?;
        let tree = allow_tree(&self.commitments[..allow_len]);
        let allow_proof = tree
            .prove_inclusion(index)
            .expect("index is within the epoch's tree");
        let block_proof =
            self.epoch_block[(epoch - 1) as usize].prove(&SmtKey::for_commitment(&commitment));
        Ok((allow_proof, block_proof))
    }

    /// The full append-only audit log.
    pub fn audit_export(&self) -> &[AuditRecord] {
        &self.audit
    }

    /// The audit log as served text: one record per line.
    pub fn audit_text(&self) -> String {
        let mut out = String::new();
        for record in &self.audit {
            out.push_str(&record.to_string());
            out.push('\n');
        }
        out
    }

    pub fn smt_depth(&self) -> u16 {
        self.smt_depth
    }

    /// Consume the coordinator, returning its store (test support for
    /// crash/restart simulation).
    pub fn into_store(self) -> S {
        self.store
    }
}

/// The allow tree over a commitment list. An empty registry publishes the
/// tree over a single padding leaf.
pub fn allow_tree(commitments: &[Digest]) -> MerkleTree {
    if commitments.is_empty() {
        MerkleTree::build(&[empty_digest()]).expect("single leaf")
    } else {
        MerkleTree::build(commitments).expect("bounded leaf count")
    }
}

/// Replay an audit log from genesis, recomputing the tree roots at every
/// publish record and checking them against the logged roots. Returns the
/// (epoch, allow root, block root) sequence.
pub fn replay_audit(
    records: &[AuditRecord],
    smt_depth: u16,
) -> Result<Vec<(u64, Digest, Digest)>, LoadError> {
    if records.first().map(|r| &r.action) != Some(&AuditAction::Genesis) {
        return Err(LoadError::MissingGenesis);
    }
    let mut commitments: Vec<Digest> = Vec::new();
    let mut block = SparseMerkleTree::new(smt_depth).expect("validated depth");
    let mut roots = Vec::new();
    for record in &records[1..] {
        match &record.action {
            AuditAction::Genesis => {
                return Err(LoadError::Divergence {
                    epoch: record.epoch,
                    detail: "duplicate genesis".into(),
                })
            }
            AuditAction::Register(c) => commitments.push(*c),
            AuditAction::Revoke(c) => {
                block = block.set(&SmtKey::for_commitment(c), true);
            }
            AuditAction::Publish {
                allow_root,
                block_root,
                ..
            } => {
                let epoch = roots.len() as u64 + 1;
                if record.epoch != epoch {
                    return Err(LoadError::Divergence {
                        epoch: record.epoch,
                        detail: format!("expected publish epoch {epoch}"),
                    });
                }
                let allow = allow_tree(&commitments).root();
                let recomputed_block = block.root();
                if allow != *allow_root || recomputed_block != *block_root {
                    return Err(LoadError::Divergence {
                        epoch,
                        detail: "replayed roots differ from the logged roots".into(),
                    });
                }
                roots.push((epoch, allow, recomputed_block));
            }
        }
    }
    Ok(roots)
}
