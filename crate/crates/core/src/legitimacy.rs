//! The identifier-legitimacy relation and its proof backends.
//!
//! A presenter claims: "this identifier belongs to some identity commitment
//! that is on the allow list and not on the block list". The claim is a
//! relation between a public statement (identifier value, allow root, block
//! root, epoch, optional context) and a private witness (the commitment and
//! three tree proofs). [`relation_check`] evaluates the relation directly;
//! proof backends package it so a verifier can check the claim without the
//! witness.
//!
//! Two backends ship behind one interface:
//!
//! - [`DisclosingBackend`]: the payload *is* the serialized witness and the
//!   verifier re-runs the relation. Correct and sound, but it reveals the
//!   identity commitment to the verifier; useful for validating protocol
//!   logic and as the reference for backend-agreement tests, not for
//!   deployments that need unlinkability against verifiers.
//! - [`ExternalZkBackend`]: an adapter that fixes the exact byte encodings
//!   and relation semantics a succinct zero-knowledge proof system must
//!   implement (see [`ZkEngine`]). No SNARK ships here; [`LoopbackEngine`]
//!   is a keyed stand-in that exercises the adapter end to end.

use thiserror::Error;

use crate::hash::{hash_raw, Digest};
use crate::merkle::{verify_inclusion, InclusionProof, ProofCodecError};
use crate::portfolio::{identifier_leaf_digest, IdValue, ID_LEN};
use crate::smt::{self, SmtCodecError, SmtKey, SmtProof};

pub const STATEMENT_VERSION: u8 = 1;
/// Largest context tag accepted by [`LegitimacyStatement::bind_context`].
pub const MAX_CONTEXT_LEN: usize = 1 << 10;

/// The public input of the relation. Its canonical encoding contains exactly
/// these fields and nothing else; verifiers parse it strictly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegitimacyStatement {
    pub id_value: IdValue,
    pub allow_root: Digest,
    pub block_root: Digest,
    pub epoch: u64,
    /// Interaction-specific bytes; empty means absent.
    pub context_tag: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatementError {
    #[error("context of {0} bytes exceeds the {MAX_CONTEXT_LEN}-byte limit")]
    ContextTooLong(usize),
    #[error("statement bytes malformed: {0}")]
    Malformed(&'static str),
}

impl LegitimacyStatement {
    pub fn new(id_value: IdValue, allow_root: Digest, block_root: Digest, epoch: u64) -> Self {
        LegitimacyStatement {
            id_value,
            allow_root,
            block_root,
            epoch,
            context_tag: Vec::new(),
        }
    }

    /// Bind interaction-specific context into the statement. Proofs made for
    /// one context do not verify under another. An empty context equals an
    /// absent one.
    pub fn bind_context(&self, context: &[u8]) -> Result<Self, StatementError> {
        if context.len() > MAX_CONTEXT_LEN {
            return Err(StatementError::ContextTooLong(context.len()));
        }
        let mut bound = self.clone();
        bound.context_tag = context.to_vec();
        Ok(bound)
    }

    /// Canonical encoding: u8 version, 16-byte id, 32-byte allow root,
    /// 32-byte block root, u64 LE epoch, u16 LE context length, context.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + ID_LEN + 64 + 8 + 2 + self.context_tag.len());
        out.push(STATEMENT_VERSION);
        out.extend_from_slice(&self.id_value.0);
        out.extend_from_slice(self.allow_root.as_bytes());
        out.extend_from_slice(self.block_root.as_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&(self.context_tag.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.context_tag);
        out
    }

    /// Strict parse of the canonical encoding; trailing bytes are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StatementError> {
        const FIXED: usize = 1 + ID_LEN + 32 + 32 + 8 + 2;
        if bytes.len() < FIXED {
            return Err(StatementError::Malformed("truncated"));
        }
        if bytes[0] != STATEMENT_VERSION {
            return Err(StatementError::Malformed("unknown version"));
        }
        let id_value = IdValue(bytes[1..17].try_into().expect("len checked"));
        let allow_root = Digest::from_slice(&bytes[17..49]).expect("len checked");
        let block_root = Digest::from_slice(&bytes[49..81]).expect("len checked");
        let epoch = u64::from_le_bytes(bytes[81..89].try_into().expect("len checked"));
        let context_len =
            u16::from_le_bytes(bytes[89..91].try_into().expect("len checked")) as usize;
        if context_len > MAX_CONTEXT_LEN {
            return Err(StatementError::Malformed("context too long"));
        }
        if bytes.len() != FIXED + context_len {
            return Err(StatementError::Malformed("length mismatch"));
        }
        Ok(LegitimacyStatement {
            id_value,
            allow_root,
            block_root,
            epoch,
            context_tag: bytes[FIXED..].to_vec(),
        })
    }

    /// Hash of the canonical encoding; embedded in every proof so proofs
    /// cannot be transplanted across statements, epochs, or contexts.
    pub fn digest(&self) -> Digest {
        hash_raw(&[&self.to_bytes()])
    }
}

/// The private input: the identity commitment and the three tree proofs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegitimacyWitness {
    pub id_value: IdValue,
    pub attr_commitment: Option<Digest>,
    pub identity_commitment: Digest,
    pub proof_id_in_commitment: InclusionProof,
    pub proof_commitment_in_allow: InclusionProof,
    pub proof_commitment_not_blocked: SmtProof,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WitnessCodecError {
    #[error("witness bytes truncated")]
    Truncated,
    #[error("inclusion proof: {0}")]
    Inclusion(#[from] ProofCodecError),
    #[error("sparse proof: {0}")]
    Sparse(#[from] SmtCodecError),
    #[error("trailing bytes after witness")]
    TrailingBytes,
    #[error("non-canonical witness encoding: {0}")]
    NonCanonical(&'static str),
}

impl LegitimacyWitness {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.id_value.0);
        match &self.attr_commitment {
            Some(d) => {
                out.push(1);
                out.extend_from_slice(d.as_bytes());
            }
            None => out.push(0),
        }
        out.extend_from_slice(self.identity_commitment.as_bytes());
        for proof in [
            &self.proof_id_in_commitment,
            &self.proof_commitment_in_allow,
        ] {
            let bytes = proof.to_bytes();
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        let smt_bytes = self.proof_commitment_not_blocked.to_bytes();
        out.extend_from_slice(&(smt_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&smt_bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WitnessCodecError> {
        let mut cursor = 0usize;
        let take = |cursor: &mut usize, n: usize| -> Result<&[u8], WitnessCodecError> {
            let start = *cursor;
            let end = start.checked_add(n).ok_or(WitnessCodecError::Truncated)?;
            if end > bytes.len() {
                return Err(WitnessCodecError::Truncated);
            }
            *cursor = end;
            Ok(&bytes[start..end])
        };
        let id_value = IdValue(take(&mut cursor, ID_LEN)?.try_into().expect("len checked"));
        let attr_commitment = match take(&mut cursor, 1)?[0] {
            0 => None,
            1 => Some(Digest::from_slice(take(&mut cursor, 32)?).expect("len checked")),
            _ => return Err(WitnessCodecError::NonCanonical("attribute flag")),
        };
        let identity_commitment = Digest::from_slice(take(&mut cursor, 32)?).expect("len checked");
        let framed = |cursor: &mut usize| -> Result<Vec<u8>, WitnessCodecError> {
            let len =
                u32::from_le_bytes(take(cursor, 4)?.try_into().expect("len checked")) as usize;
            Ok(take(cursor, len)?.to_vec())
        };
        let proof_id_in_commitment = InclusionProof::from_bytes(&framed(&mut cursor)?)?;
        let proof_commitment_in_allow = InclusionProof::from_bytes(&framed(&mut cursor)?)?;
        let proof_commitment_not_blocked = SmtProof::from_bytes(&framed(&mut cursor)?)?;
        if cursor != bytes.len() {
            return Err(WitnessCodecError::TrailingBytes);
        }
        Ok(LegitimacyWitness {
            id_value,
            attr_commitment,
            identity_commitment,
            proof_id_in_commitment,
            proof_commitment_in_allow,
            proof_commitment_not_blocked,
        })
    }
}

/// Which constraint of the relation failed.
#[derive(Debug, Error, PartialEq, Eq, Clone, Copy)]
pub enum RelationViolation {
    #[error("identifier is not proven inside the identity commitment")]
    IdentifierNotInCommitment,
    #[error("identity commitment is not proven under the allow root")]
    CommitmentNotAllowed,
    #[error("block proof does not carry the commitment's key")]
    WrongBlockKey,
    #[error("commitment is revoked (block proof value is true)")]
    CommitmentBlocked,
    #[error("block proof does not verify under the block root")]
    BlockProofInvalid,
    #[error("witness identifier differs from the statement identifier")]
    IdentifierMismatch,
}

/// Evaluate the relation. Accepts iff:
/// 1. the identifier leaf is proven inside the witness's identity commitment;
/// 2. the identity commitment is proven under the statement's allow root;
/// 3. the commitment's key maps to `false` under the statement's block root;
/// 4. the witness and statement agree on the identifier value.
pub fn relation_check(
    statement: &LegitimacyStatement,
    witness: &LegitimacyWitness,
) -> Result<(), RelationViolation> {
    let leaf = identifier_leaf_digest(&witness.id_value, witness.attr_commitment.as_ref());
    if verify_inclusion(
        &witness.identity_commitment,
        &leaf,
        &witness.proof_id_in_commitment,
    )
    .is_err()
    {
        return Err(RelationViolation::IdentifierNotInCommitment);
    }
    if verify_inclusion(
        &statement.allow_root,
        &witness.identity_commitment,
        &witness.proof_commitment_in_allow,
    )
    .is_err()
    {
        return Err(RelationViolation::CommitmentNotAllowed);
    }
    let block = &witness.proof_commitment_not_blocked;
    if block.key != SmtKey::for_commitment(&witness.identity_commitment) {
        return Err(RelationViolation::WrongBlockKey);
    }
    if block.value {
        return Err(RelationViolation::CommitmentBlocked);
    }
    if smt::verify_proof(&statement.block_root, block).is_err() {
        return Err(RelationViolation::BlockProofInvalid);
    }
    if witness.id_value != statement.id_value {
        return Err(RelationViolation::IdentifierMismatch);
    }
    Ok(())
}

/// Constraint-style view of [`relation_check`]: any failure is a reject.
pub fn relation_holds(statement: &LegitimacyStatement, witness: &LegitimacyWitness) -> bool {
    relation_check(statement, witness).is_ok()
}

// ---------------------------------------------------------------------------
// Proof backends

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum BackendId {
    Disclosing = 0,
    ExternalZk = 1,
}

impl BackendId {
    pub fn from_byte(b: u8) -> Option<BackendId> {
        match b {
            0 => Some(BackendId::Disclosing),
            1 => Some(BackendId::ExternalZk),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BackendId::Disclosing => "disclosing",
            BackendId::ExternalZk => "external-zk",
        }
    }
}

impl std::str::FromStr for BackendId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disclosing" => Ok(BackendId::Disclosing),
            "external-zk" | "external_zk" => Ok(BackendId::ExternalZk),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

/// A proof of legitimacy. Verification needs only the proof and the
/// statement, never the witness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegitimacyProof {
    pub backend_id: BackendId,
    pub statement_digest: Digest,
    pub payload: Vec<u8>,
}

impl LegitimacyProof {
    /// Envelope wire form: u8 backend id, 32-byte statement digest,
    /// u32 LE payload length, payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 32 + 4 + self.payload.len());
        out.push(self.backend_id as u8);
        out.extend_from_slice(self.statement_digest.as_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProofEnvelopeError> {
        if bytes.len() < 37 {
            return Err(ProofEnvelopeError::Truncated);
        }
        let backend_id =
            BackendId::from_byte(bytes[0]).ok_or(ProofEnvelopeError::UnknownBackend(bytes[0]))?;
        let statement_digest = Digest::from_slice(&bytes[1..33]).expect("len checked");
        let len = u32::from_le_bytes(bytes[33..37].try_into().expect("len checked")) as usize;
        if bytes.len() != 37 + len {
            return Err(ProofEnvelopeError::LengthMismatch);
        }
        Ok(LegitimacyProof {
            backend_id,
            statement_digest,
            payload: bytes[37..].to_vec(),
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProofEnvelopeError {
    #[error("proof envelope truncated")]
    Truncated,
    #[error("unknown backend id {0}")]
    UnknownBackend(u8),
    #[error("payload length does not match envelope")]
    LengthMismatch,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProveError {
    /// The witness does not satisfy the relation; refusing to emit a proof
    /// prevents accidental invalid-proof emission.
    #[error("refusing to prove: {0}")]
    RefusalToProve(RelationViolation),
    #[error("backend failure: {0}")]
    Backend(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProofRejection {
    #[error("proof was produced by backend {actual:?}, verifier ran {expected:?}")]
    IncompatibleBackend {
        expected: BackendId,
        actual: BackendId,
    },
    #[error("proof is bound to a different statement")]
    StatementMismatch,
    #[error("proof payload is malformed")]
    MalformedPayload,
    #[error("relation violated: {0}")]
    Relation(RelationViolation),
    #[error("backend rejected the proof")]
    Unsound,
}

/// A stateless proof system for the legitimacy relation.
pub trait ProofBackend {
    fn id(&self) -> BackendId;

    /// Produce a proof for `statement`. Must refuse when the witness does
    /// not satisfy the relation.
    fn prove(
        &self,
        statement: &LegitimacyStatement,
        witness: &LegitimacyWitness,
    ) -> Result<LegitimacyProof, ProveError>;

    /// Check a proof against a statement. Accepts iff the backend's
    /// soundness condition holds for the pair.
    fn verify(
        &self,
        proof: &LegitimacyProof,
        statement: &LegitimacyStatement,
    ) -> Result<(), ProofRejection>;
}

fn envelope_checks(
    backend: BackendId,
    proof: &LegitimacyProof,
    statement: &LegitimacyStatement,
) -> Result<(), ProofRejection> {
    if proof.backend_id != backend {
        return Err(ProofRejection::IncompatibleBackend {
            expected: backend,
            actual: proof.backend_id,
        });
    }
    if proof.statement_digest != statement.digest() {
        return Err(ProofRejection::StatementMismatch);
    }
    Ok(())
}

/// Backend whose payload is the serialized witness; the verifier re-runs the
/// relation. Sound and complete, but it discloses the identity commitment.
#[derive(Debug, Default, Clone, Copy)]
pub struct DisclosingBackend;

impl ProofBackend for DisclosingBackend {
    fn id(&self) -> BackendId {
        BackendId::Disclosing
    }

    fn prove(
        &self,
        statement: &LegitimacyStatement,
        witness: &LegitimacyWitness,
    ) -> Result<LegitimacyProof, ProveError> {
        relation_check(statement, witness).map_err(ProveError::RefusalToProve)?;
        Ok(LegitimacyProof {
            backend_id: BackendId::Disclosing,
            statement_digest: statement.digest(),
            payload: witness.to_bytes(),
        })
    }

    fn verify(
        &self,
        proof: &LegitimacyProof,
        statement: &LegitimacyStatement,
    ) -> Result<(), ProofRejection> {
        envelope_checks(self.id(), proof, statement)?;
        let witness = LegitimacyWitness::from_bytes(&proof.payload)
            .map_err(|_| ProofRejection::MalformedPayload)?;
        relation_check(statement, &witness).map_err(ProofRejection::Relation)
    }
}

/// The contract an external succinct proof system must implement to slot
/// into [`ExternalZkBackend`].
///
/// - `statement_bytes` is exactly [`LegitimacyStatement::to_bytes`].
/// - `witness_bytes` is exactly [`LegitimacyWitness::to_bytes`].
/// - The relation the engine must enforce is [`relation_check`]: proving
///   must fail for any (statement, witness) pair the relation rejects, and
///   `verify` must accept exactly the payloads produced by an honest `prove`
///   run for that statement.
/// - Payloads must not reveal witness material if the engine is to provide
///   zero-knowledge; this crate treats that as a property of the engine, not
///   something it can test.
pub trait ZkEngine {
    fn engine_name(&self) -> &'static str;

    fn prove(&self, statement_bytes: &[u8], witness_bytes: &[u8]) -> Result<Vec<u8>, String>;

    fn verify(&self, statement_bytes: &[u8], payload: &[u8]) -> bool;
}

/// Adapter exposing a [`ZkEngine`] behind the backend interface. The adapter
/// re-checks the relation before invoking the engine, so refusal semantics
/// hold regardless of the engine's own checks.
#[derive(Debug, Clone)]
pub struct ExternalZkBackend<E: ZkEngine> {
    engine: E,
}

impl<E: ZkEngine> ExternalZkBackend<E> {
    pub fn new(engine: E) -> Self {
        ExternalZkBackend { engine }
    }
}

impl<E: ZkEngine> ProofBackend for ExternalZkBackend<E> {
    fn id(&self) -> BackendId {
        BackendId::ExternalZk
    }

    fn prove(
        &self,
        statement: &LegitimacyStatement,
        witness: &LegitimacyWitness,
    ) -> Result<LegitimacyProof, ProveError> {
        relation_check(statement, witness).map_err(ProveError::RefusalToProve)?;
        let payload = self
            .engine
            .prove(&statement.to_bytes(), &witness.to_bytes())
            .map_err(ProveError::Backend)?;
        Ok(LegitimacyProof {
            backend_id: BackendId::ExternalZk,
            statement_digest: statement.digest(),
            payload,
        })
    }

    fn verify(
        &self,
        proof: &LegitimacyProof,
        statement: &LegitimacyStatement,
    ) -> Result<(), ProofRejection> {
        envelope_checks(self.id(), proof, statement)?;
        if self.engine.verify(&statement.to_bytes(), &proof.payload) {
            Ok(())
        } else {
            Err(ProofRejection::Unsound)
        }
    }
}

/// Keyed stand-in for a real proof system: the payload is a MAC over the
/// statement, mintable only through a prove call that re-validated the
/// relation. It models a designated-verifier deployment (prover and verifier
/// share the engine key), keeps witness bytes out of the payload, and lets
/// the adapter contract be exercised end to end. It is not succinct
/// verification by an untrusted party and makes no zero-knowledge claim
/// beyond omitting the witness.
#[derive(Debug, Clone)]
pub struct LoopbackEngine {
    key: [u8; 32],
}

impl LoopbackEngine {
    pub fn new(key: [u8; 32]) -> Self {
        LoopbackEngine { key }
    }
}

impl ZkEngine for LoopbackEngine {
    fn engine_name(&self) -> &'static str {
        "loopback"
    }

    fn prove(&self, statement_bytes: &[u8], witness_bytes: &[u8]) -> Result<Vec<u8>, String> {
        // Re-derive both sides and re-run the relation, as a real circuit
        // would; the adapter has already checked it, but the engine must not
        // rely on that.
        let statement = LegitimacyStatement::from_bytes(statement_bytes)
            .map_err(|e| format!("bad statement encoding: {e}"))?;
        let witness = LegitimacyWitness::from_bytes(witness_bytes)
            .map_err(|e| format!("bad witness encoding: {e}"))?;
        relation_check(&statement, &witness).map_err(|e| format!("relation violated: {e}"))?;
        Ok(hash_raw(&[&self.key, statement_bytes]).0.to_vec())
    }

    fn verify(&self, statement_bytes: &[u8], payload: &[u8]) -> bool {
        payload == hash_raw(&[&self.key, statement_bytes]).0
    }
}
