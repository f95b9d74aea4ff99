//! Transport-agnostic request/response contract for the coordinator.
//!
//! Every operation is JSON-encodable so any transport (HTTP, a local socket,
//! an in-process loopback in tests) can carry it. Binary artifacts (bundles,
//! proofs) travel hex-encoded in their canonical wire forms.

use serde::{Deserialize, Serialize};

use crate::coordinator::{Coordinator, RegistryError};
use crate::hash::Digest;
use crate::store::RegistryStore;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ServiceRequest {
    /// POST /register
    Register { commitment: String },
    /// POST /revoke
    Revoke { commitment: String },
    /// GET /bundle?epoch=e
    Bundle { epoch: Option<u64> },
    /// GET /witness?commitment=hex&epoch=e
    Witness {
        commitment: String,
        epoch: Option<u64>,
    },
    /// GET /audit
    Audit,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ServiceResponse {
    Registered {
        epoch_effective: u64,
    },
    Revoked {
        epoch_effective: u64,
    },
    /// Hex of the canonical 144-byte bundle encoding.
    Bundle {
        bundle: String,
    },
    /// Hex of the canonical proof wire forms.
    Witness {
        allow_proof: String,
        block_proof: String,
    },
    /// Newline-delimited audit records.
    Audit {
        log: String,
    },
    Error {
        code: String,
        message: String,
    },
}

impl ServiceResponse {
    fn error(code: &str, message: impl std::fmt::Display) -> ServiceResponse {
        ServiceResponse::Error {
            code: code.to_string(),
            message: message.to_string(),
        }
    }

    fn from_registry_error(e: RegistryError) -> ServiceResponse {
        let code = match &e {
            RegistryError::Duplicate(_) => "duplicate",
            RegistryError::UnknownCommitment(_) | RegistryError::NotRegisteredAtEpoch { .. } => {
                "not_found"
            }
            RegistryError::UnknownEpoch(_) | RegistryError::NoPublishedEpochs => "not_found",
            RegistryError::Storage(_) => "storage",
        };
        ServiceResponse::error(code, e)
    }
}

/// Dispatch one request against a coordinator. Registration and revocation
/// are writes and follow the coordinator's single-writer discipline; the
/// remaining operations only read published state.
pub fn handle_request<S: RegistryStore>(
    coordinator: &mut Coordinator<S>,
    request: &ServiceRequest,
) -> ServiceResponse {
    match request {
        ServiceRequest::Register { commitment } => match Digest::from_hex(commitment) {
            Err(e) => ServiceResponse::error("bad_argument", e),
            Ok(digest) => match coordinator.register_commitment(digest) {
                Ok(receipt) => ServiceResponse::Registered {
                    epoch_effective: receipt.epoch_effective,
                },
                Err(e) => ServiceResponse::from_registry_error(e),
            },
        },
        ServiceRequest::Revoke { commitment } => match Digest::from_hex(commitment) {
            Err(e) => ServiceResponse::error("bad_argument", e),
            Ok(digest) => match coordinator.revoke_commitment(digest) {
                Ok(receipt) => ServiceResponse::Revoked {
                    epoch_effective: receipt.epoch_effective,
                },
                Err(e) => ServiceResponse::from_registry_error(e),
            },
        },
        ServiceRequest::Bundle { epoch } => match coordinator.fetch_bundle(*epoch) {
            Ok(bundle) => ServiceResponse::Bundle {
                bundle: hex::encode(bundle.to_bytes()),
            },
            Err(e) => ServiceResponse::from_registry_error(e),
        },
        ServiceRequest::Witness { commitment, epoch } => match Digest::from_hex(commitment) {
            Err(e) => ServiceResponse::error("bad_argument", e),
            Ok(digest) => match coordinator.membership_witness(digest, *epoch) {
                Ok((allow_proof, block_proof)) => ServiceResponse::Witness {
                    allow_proof: hex::encode(allow_proof.to_bytes()),
                    block_proof: hex::encode(block_proof.to_bytes()),
                },
                Err(e) => ServiceResponse::from_registry_error(e),
            },
        },
        ServiceRequest::Audit => ServiceResponse::Audit {
            log: coordinator.audit_text(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinator::StepTimeSource;
    use crate::store::MemStore;
    use ed25519_dalek::SigningKey;

    fn new_coordinator() -> Coordinator<MemStore> {
        Coordinator::open(
            MemStore::new(),
            SigningKey::from_bytes(&[9; 32]),
            Box::new(StepTimeSource::new(100, 1)),
            crate::smt::PRODUCTION_DEPTH,
        )
        .unwrap()
    }

    /// Encode each request to JSON and back before dispatch, as a transport
    /// would.
    fn loopback(
        coordinator: &mut Coordinator<MemStore>,
        request: &ServiceRequest,
    ) -> ServiceResponse {
        let wire = serde_json::to_string(request).unwrap();
        let decoded: ServiceRequest = serde_json::from_str(&wire).unwrap();
        let response = handle_request(coordinator, &decoded);
        let wire = serde_json::to_string(&response).unwrap();
        serde_json::from_str(&wire).unwrap()
    }

    #[test]
    fn register_publish_witness_flow_over_the_wire() {
        let mut coordinator = new_coordinator();
        let commitment = crate::hash::hash_leaf(b"c").unwrap();
        let response = loopback(
            &mut coordinator,
            &ServiceRequest::Register {
                commitment: commitment.to_hex(),
            },
        );
        assert_eq!(response, ServiceResponse::Registered { epoch_effective: 1 });

        coordinator.publish_epoch().unwrap();

        let response = loopback(&mut coordinator, &ServiceRequest::Bundle { epoch: None });
        let bundle_hex = match response {
            ServiceResponse::Bundle { bundle } => bundle,
            other => panic!("unexpected response {other:?}"),
        };
        let bundle =
            crate::coordinator::RootBundle::from_bytes(&hex::decode(bundle_hex).unwrap()).unwrap();
        assert_eq!(bundle.epoch, 1);

        let response = loopback(
            &mut coordinator,
            &ServiceRequest::Witness {
                commitment: commitment.to_hex(),
                epoch: Some(1),
            },
        );
        match response {
            ServiceResponse::Witness {
                allow_proof,
                block_proof,
            } => {
                let allow =
                    crate::merkle::InclusionProof::from_bytes(&hex::decode(allow_proof).unwrap())
                        .unwrap();
                assert!(
                    crate::merkle::verify_inclusion(&bundle.allow_root, &commitment, &allow)
                        .is_ok()
                );
                let block =
                    crate::smt::SmtProof::from_bytes(&hex::decode(block_proof).unwrap()).unwrap();
                assert!(crate::smt::verify_proof(&bundle.block_root, &block).is_ok());
            }
            other => panic!("unexpected response {other:?}"),
        }
    }

    #[test]
    fn errors_carry_stable_codes() {
        let mut coordinator = new_coordinator();
        let commitment = crate::hash::hash_leaf(b"d").unwrap().to_hex();
        let register = ServiceRequest::Register {
            commitment: commitment.clone(),
        };
        loopback(&mut coordinator, &register);
        match loopback(&mut coordinator, &register) {
            ServiceResponse::Error { code, .. } => assert_eq!(code, "duplicate"),
            other => panic!("unexpected response {other:?}"),
        }
        match loopback(
            &mut coordinator,
            &ServiceRequest::Register {
                commitment: "zz".into(),
            },
        ) {
            ServiceResponse::Error { code, .. } => assert_eq!(code, "bad_argument"),
            other => panic!("unexpected response {other:?}"),
        }
        match loopback(&mut coordinator, &ServiceRequest::Bundle { epoch: Some(9) }) {
            ServiceResponse::Error { code, .. } => assert_eq!(code, "not_found"),
            other => panic!("unexpected response {other:?}"),
        }
        match loopback(
            &mut coordinator,
            &ServiceRequest::Revoke {
                commitment: crate::hash::hash_leaf(b"missing").unwrap().to_hex(),
            },
        ) {
            ServiceResponse::Error { code, .. } => assert_eq!(code, "not_found"),
            other => panic!("unexpected response {other:?}"),
        }
    }

    #[test]
    fn audit_streams_the_full_log() {
        let mut coordinator = new_coordinator();
        coordinator
            .register_commitment(crate::hash::hash_leaf(b"e").unwrap())
            .unwrap();
        coordinator.publish_epoch().unwrap();
        match loopback(&mut coordinator, &ServiceRequest::Audit) {
            ServiceResponse::Audit { log } => {
                let lines: Vec<&str> = log.lines().collect();
                assert_eq!(lines.len(), 3);
                assert!(lines[0].ends_with("genesis -"));
                assert!(lines[1].contains("register"));
                assert!(lines[2].contains("publish"));
            }
            other => panic!("unexpected response {other:?}"),
        }
    }
}
