//! The relying-party verifier: a pure function over a presentation, a signed
//! bundle, and the verifier's own freshness policy. No network, no state.
//!
//! Bundles carry no expiry, so freshness is the verifier's responsibility:
//! it keeps an estimate of the current epoch (clock-based or from its last
//! bundle refresh) and refuses bundles older than a configured staleness
//! window. Without that window, a revoked participant could replay
//! pre-revocation bundles forever.

use thiserror::Error;

use crate::coordinator::RootBundle;
use crate::legitimacy::{BackendId, LegitimacyProof, LegitimacyStatement, ProofBackend};
use crate::portfolio::display_matches;
use ed25519_dalek::VerifyingKey;

/// Relying-party verification policy.
pub struct VerifierConfig {
    pub trusted_coordinator_key: VerifyingKey,
    /// Accept bundles at most this many epochs behind the verifier's
    /// current-epoch estimate.
    pub max_epoch_staleness: u64,
    /// Backends this verifier is willing to run, keyed by their ids.
    pub backends: Vec<Box<dyn ProofBackend>>,
}

impl VerifierConfig {
    pub fn new(
        trusted_coordinator_key: VerifyingKey,
        max_epoch_staleness: u64,
        backends: Vec<Box<dyn ProofBackend>>,
    ) -> Self {
        VerifierConfig {
            trusted_coordinator_key,
            max_epoch_staleness,
            backends,
        }
    }

    fn backend(&self, id: BackendId) -> Option<&dyn ProofBackend> {
        self.backends
            .iter()
            .find(|b| b.id() == id)
            .map(|b| b.as_ref())
    }
}

/// Why a presentation was rejected. Every check has its own code so
/// operators can tell a stale bundle from a forged proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    BadBundleSignature,
    StaleEpoch,
    StatementBundleMismatch,
    IdMismatch,
    BackendNotAccepted,
    ProofInvalid,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::BadBundleSignature => "bad_bundle_signature",
            RejectReason::StaleEpoch => "stale_epoch",
            RejectReason::StatementBundleMismatch => "statement_bundle_mismatch",
            RejectReason::IdMismatch => "id_mismatch",
            RejectReason::BackendNotAccepted => "backend_not_accepted",
            RejectReason::ProofInvalid => "proof_invalid",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("presentation rejected: {reason}")]
pub struct Rejection {
    pub reason: RejectReason,
}

/// Verify a presentation offline. Accepts iff, in order:
/// the bundle signature is valid under the trusted key; the bundle epoch is
/// within the staleness window of `current_epoch_estimate`; the statement's
/// roots and epoch equal the bundle's; the display string decodes to the
/// statement's identifier; the proof's backend is accepted; and the backend
/// accepts the proof for the statement.
pub fn rp_verify(
    config: &VerifierConfig,
    display: &str,
    proof: &LegitimacyProof,
    statement: &LegitimacyStatement,
    bundle: &RootBundle,
    current_epoch_estimate: u64,
) -> Result<(), Rejection> {
    let reject = |reason| Err(Rejection { reason });
    if !bundle.verify_signature(&config.trusted_coordinator_key) {
        return reject(RejectReason::BadBundleSignature);
    }
    if current_epoch_estimate.saturating_sub(bundle.epoch) > config.max_epoch_staleness {
        return reject(RejectReason::StaleEpoch);
    }
    if statement.allow_root != bundle.allow_root
        || statement.block_root != bundle.block_root
        || statement.epoch != bundle.epoch
    {
        return reject(RejectReason::StatementBundleMismatch);
    }
    if !display_matches(display, &statement.id_value) {
        return reject(RejectReason::IdMismatch);
    }
    let Some(backend) = config.backend(proof.backend_id) else {
        return reject(RejectReason::BackendNotAccepted);
    };
    if backend.verify(proof, statement).is_err() {
        return reject(RejectReason::ProofInvalid);
    }
    Ok(())
}
