//! The participant agent: identifier selection policy, witness assembly,
//! proof generation, and root-bundle caching.
//!
//! Witness material (bundle plus per-commitment proofs) is fetched at sync
//! time, decoupled from presentations, so the timing and count of
//! presentations leak nothing to the coordinator. A presentation itself
//! touches only local state.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::coordinator::RootBundle;
use crate::legitimacy::{
    LegitimacyProof, LegitimacyStatement, LegitimacyWitness, ProofBackend, ProveError,
    StatementError,
};
use crate::merkle::{verify_inclusion, InclusionProof, MerkleTree};
use crate::portfolio::{
    commit_portfolio, encode_identifier, portfolio_tree, DisplayFormat, EncodeError, Identifier,
    IdentityCommitment, PortfolioError, PortfolioSecret,
};
use crate::smt::{self, SmtKey, SmtProof};
use ed25519_dalek::VerifyingKey;

/// How a participant picks which identifier to present.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum SelectionMode {
    /// A fresh identifier for every presentation; never reuses an index.
    PerInteraction = 0,
    /// A stable identifier per relying-party label, distinct across labels.
    PerRelyingParty = 1,
    /// One fixed identifier for every presentation; the explicit opt-in to
    /// linkability for a trusted party.
    StaticScoped = 2,
}

impl SelectionMode {
    pub fn from_byte(b: u8) -> Option<SelectionMode> {
        match b {
            0 => Some(SelectionMode::PerInteraction),
            1 => Some(SelectionMode::PerRelyingParty),
            2 => Some(SelectionMode::StaticScoped),
            _ => None,
        }
    }
}

impl std::str::FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_interaction" | "per-interaction" => Ok(SelectionMode::PerInteraction),
            "per_rp" | "per-rp" | "per_relying_party" => Ok(SelectionMode::PerRelyingParty),
            "static" | "static_scoped" => Ok(SelectionMode::StaticScoped),
            other => Err(format!("unknown selection mode `{other}`")),
        }
    }
}

/// Selection state: the next unused index and the per-relying-party map.
/// Both policies draw fresh indices from the same cursor, so an identifier
/// handed to one relying party is never re-issued per interaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionPolicy {
    pub mode: SelectionMode,
    cursor: u32,
    rp_map: BTreeMap<Vec<u8>, u32>,
    static_index: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error(
        "portfolio exhausted at index {cursor}: extend the portfolio (deterministic portfolios \
         extend prefix-stably) and re-commit"
    )]
    Exhausted { cursor: u32 },
    #[error("selection mode requires a relying-party label")]
    LabelRequired,
    #[error("portfolio is empty")]
    EmptyPortfolio,
}

impl SelectionPolicy {
    pub fn new(mode: SelectionMode) -> Self {
        SelectionPolicy {
            mode,
            cursor: 0,
            rp_map: BTreeMap::new(),
            static_index: 0,
        }
    }

    pub fn cursor(&self) -> u32 {
        self.cursor
    }

    /// Labels are ASCII case-folded before keying the per-RP map, so
    /// "Clinic" and "clinic" cannot silently alias to distinct identifiers.
    pub fn canonical_label(label: &[u8]) -> Vec<u8> {
        label.to_ascii_lowercase()
    }

    /// Pick the portfolio index to present. Mutates cursor state; the
    /// caller persists the policy after use.
    pub fn select(
        &mut self,
        portfolio_len: u32,
        rp_label: Option<&[u8]>,
    ) -> Result<u32, SelectionError> {
        if portfolio_len == 0 {
            return Err(SelectionError::EmptyPortfolio);
        }
        match self.mode {
            SelectionMode::PerInteraction => {
                if self.cursor >= portfolio_len {
                    return Err(SelectionError::Exhausted {
                        cursor: self.cursor,
                    });
                }
                let index = self.cursor;
                self.cursor += 1;
                Ok(index)
            }
            SelectionMode::PerRelyingParty => {
                let label = rp_label.ok_or(SelectionError::LabelRequired)?;
                let key = Self::canonical_label(label);
                if let Some(&index) = self.rp_map.get(&key) {
                    return Ok(index);
                }
                if self.cursor >= portfolio_len {
                    return Err(SelectionError::Exhausted {
                        cursor: self.cursor,
                    });
                }
                let index = self.cursor;
                self.cursor += 1;
                self.rp_map.insert(key, index);
                Ok(index)
            }
            SelectionMode::StaticScoped => Ok(self.static_index.min(portfolio_len - 1)),
        }
    }

    /// Policy state file: u8 version, u8 mode, u32 LE cursor, u32 LE map
    /// count, then per entry u16 LE label length, label, u32 LE index.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![1u8, self.mode as u8];
        out.extend_from_slice(&self.cursor.to_le_bytes());
        out.extend_from_slice(&(self.rp_map.len() as u32).to_le_bytes());
        for (label, index) in &self.rp_map {
            out.extend_from_slice(&(label.len() as u16).to_le_bytes());
            out.extend_from_slice(label);
            out.extend_from_slice(&index.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyCodecError> {
        if bytes.len() < 10 || bytes[0] != 1 {
            return Err(PolicyCodecError::BadHeader);
        }
        let mode = SelectionMode::from_byte(bytes[1]).ok_or(PolicyCodecError::BadHeader)?;
        let cursor = u32::from_le_bytes(bytes[2..6].try_into().expect("len checked"));
        let count = u32::from_le_bytes(bytes[6..10].try_into().expect("len checked")) as usize;
        let mut rp_map = BTreeMap::new();
        let mut offset = 10usize;
        for _ in 0..count {
            if bytes.len() < offset + 2 {
                return Err(PolicyCodecError::Truncated);
            }
            let len = u16::from_le_bytes(bytes[offset..offset + 2].try_into().expect("len checked"))
                as usize;
            offset += 2;
            if bytes.len() < offset + len + 4 {
                return Err(PolicyCodecError::Truncated);
            }
            let label = bytes[offset..offset + len].to_vec();
            offset += len;
            let index =
                u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("len checked"));
            offset += 4;
            rp_map.insert(label, index);
        }
        if offset != bytes.len() {
            return Err(PolicyCodecError::Truncated);
        }
        Ok(SelectionPolicy {
            mode,
            cursor,
            rp_map,
            static_index: 0,
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyCodecError {
    #[error("bad policy file header")]
    BadHeader,
    #[error("policy file truncated or over-long")]
    Truncated,
}

/// Witness material cached per epoch at sync time.
#[derive(Clone, Debug)]
pub struct EpochMaterial {
    pub bundle: RootBundle,
    pub allow_proof: InclusionProof,
    pub block_proof: SmtProof,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SyncError {
    #[error("bundle signature does not verify under the coordinator key")]
    BadBundleSignature,
    #[error("allow proof does not verify against the bundle's allow root")]
    StaleAllowProof,
    #[error("block proof does not verify against the bundle's block root")]
    StaleBlockProof,
    #[error("block proof does not carry this commitment's key")]
    WrongBlockKey,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WitnessError {
    #[error("cached proofs are stale for this bundle: re-fetch witness material")]
    StaleWitness,
    #[error("identifier does not belong to this portfolio")]
    ForeignIdentifier,
}

#[derive(Debug, Error)]
pub enum PresentError {
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("no witness material cached for epoch {0}: sync first")]
    NoMaterialForEpoch(u64),
    #[error(transparent)]
    Witness(#[from] WitnessError),
    #[error(transparent)]
    Statement(#[from] StatementError),
    #[error(transparent)]
    Prove(#[from] ProveError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Everything a relying party receives.
#[derive(Clone, Debug)]
pub struct Presentation {
    pub display: String,
    pub statement: LegitimacyStatement,
    pub proof: LegitimacyProof,
}

/// Assemble the relation witness for one identifier from synced material.
/// Rejects stale proofs (root mismatches) up front so the prover fails with
/// a re-fetch hint instead of a refusal.
pub fn assemble_witness(
    tree: &MerkleTree,
    ids: &[Identifier],
    commitment: &IdentityCommitment,
    id: &Identifier,
    bundle: &RootBundle,
    allow_proof: &InclusionProof,
    block_proof: &SmtProof,
) -> Result<LegitimacyWitness, WitnessError> {
    if ids.get(id.index as usize) != Some(id) {
        return Err(WitnessError::ForeignIdentifier);
    }
    if verify_inclusion(&bundle.allow_root, &commitment.root, allow_proof).is_err() {
        return Err(WitnessError::StaleWitness);
    }
    if block_proof.key != SmtKey::for_commitment(&commitment.root)
        || smt::verify_proof(&bundle.block_root, block_proof).is_err()
    {
        return Err(WitnessError::StaleWitness);
    }
    let proof_id_in_commitment = tree
        .prove_inclusion(id.index as usize)
        .expect("index bounded by portfolio length");
    Ok(LegitimacyWitness {
        id_value: id.value,
        attr_commitment: id.attr_commitment,
        identity_commitment: commitment.root,
        proof_id_in_commitment,
        proof_commitment_in_allow: allow_proof.clone(),
        proof_commitment_not_blocked: block_proof.clone(),
    })
}

/// A participant's in-memory state: portfolio, commitment, policy, and
/// synced witness material. Single-writer by construction (methods take
/// `&mut self`); persistence is the CLI layer's keystore.
pub struct Participant {
    identifiers: Vec<Identifier>,
    secret: Option<PortfolioSecret>,
    commitment: IdentityCommitment,
    tree: MerkleTree,
    pub policy: SelectionPolicy,
    pub display_format: DisplayFormat,
    coordinator_key: Option<VerifyingKey>,
    material: BTreeMap<u64, EpochMaterial>,
}

impl Participant {
    pub fn new(
        identifiers: Vec<Identifier>,
        secret: Option<PortfolioSecret>,
        policy: SelectionPolicy,
    ) -> Result<Self, PortfolioError> {
        let tree = portfolio_tree(&identifiers)?;
        let commitment = commit_portfolio(&identifiers)?;
        Ok(Participant {
            identifiers,
            secret,
            commitment,
            tree,
            policy,
            display_format: DisplayFormat::Uuid,
            coordinator_key: None,
            material: BTreeMap::new(),
        })
    }

    pub fn commitment(&self) -> &IdentityCommitment {
        &self.commitment
    }

    pub fn identifiers(&self) -> &[Identifier] {
        &self.identifiers
    }

    pub fn secret(&self) -> Option<&PortfolioSecret> {
        self.secret.as_ref()
    }

    pub fn tree(&self) -> &MerkleTree {
        &self.tree
    }

    pub fn trust_coordinator(&mut self, key: VerifyingKey) {
        self.coordinator_key = Some(key);
    }

    pub fn coordinator_key(&self) -> Option<&VerifyingKey> {
        self.coordinator_key.as_ref()
    }

    /// Cache a bundle plus this commitment's witness proofs, verifying all
    /// of it first. This is the only step that talks to the coordinator.
    pub fn sync(
        &mut self,
        bundle: RootBundle,
        allow_proof: InclusionProof,
        block_proof: SmtProof,
    ) -> Result<(), SyncError> {
        if let Some(key) = &self.coordinator_key {
            if !bundle.verify_signature(key) {
                return Err(SyncError::BadBundleSignature);
            }
        }
        if verify_inclusion(&bundle.allow_root, &self.commitment.root, &allow_proof).is_err() {
            return Err(SyncError::StaleAllowProof);
        }
        if block_proof.key != SmtKey::for_commitment(&self.commitment.root) {
            return Err(SyncError::WrongBlockKey);
        }
        if smt::verify_proof(&bundle.block_root, &block_proof).is_err() {
            return Err(SyncError::StaleBlockProof);
        }
        self.material.insert(
            bundle.epoch,
            EpochMaterial {
                bundle,
                allow_proof,
                block_proof,
            },
        );
        Ok(())
    }

    pub fn material(&self, epoch: Option<u64>) -> Option<&EpochMaterial> {
        match epoch {
            Some(e) => self.material.get(&e),
            None => self.material.values().next_back(),
        }
    }

    /// One presentation: select an identifier per policy, build the
    /// statement (with context), prove, and render the display string.
    /// Entirely offline against synced material.
    pub fn present(
        &mut self,
        backend: &dyn ProofBackend,
        rp_label: Option<&[u8]>,
        epoch: Option<u64>,
        context: &[u8],
    ) -> Result<Presentation, PresentError> {
        let material = self
            .material(epoch)
            .ok_or(PresentError::NoMaterialForEpoch(epoch.unwrap_or(0)))?
            .clone();
        let index = self
            .policy
            .select(self.identifiers.len() as u32, rp_label)?;
        let id = self.identifiers[index as usize];
        let witness = assemble_witness(
            &self.tree,
            &self.identifiers,
            &self.commitment,
            &id,
            &material.bundle,
            &material.allow_proof,
            &material.block_proof,
        )?;
        let statement = LegitimacyStatement::new(
            id.value,
            material.bundle.allow_root,
            material.bundle.block_root,
            material.bundle.epoch,
        )
        .bind_context(context)?;
        let proof = backend.prove(&statement, &witness)?;
        let display = encode_identifier(&id.value, self.display_format)?;
        Ok(Presentation {
            display,
            statement,
            proof,
        })
    }
}
