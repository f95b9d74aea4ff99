//! HTTP adapter over the coordinator service contract.
//!
//! Routes:
//! - `POST /register` body `{"commitment": "<hex>"}` -> `{"epoch_effective": n}`
//! - `POST /revoke`   body `{"commitment": "<hex>"}` -> `{"epoch_effective": n}`
//! - `GET /bundle?epoch=N` -> canonical bundle bytes (octet-stream)
//! - `GET /witness?commitment=<hex>&epoch=N` -> `{"allow_proof","block_proof"}`
//! - `GET /audit` -> newline-delimited log (text/plain)
//!
//! One thread, one writer: requests are handled sequentially, which is the
//! registry's concurrency contract anyway.

use anyhow::Result;
use tiny_http::{Header, Method, Response, Server};

use unlinkid_core::coordinator::Coordinator;
use unlinkid_core::service::{handle_request, ServiceRequest, ServiceResponse};
use unlinkid_core::store::RegistryStore;

fn query_param(url: &str, key: &str) -> Option<String> {
    let query = url.split_once('?')?.1;
    query.split('&').find_map(|pair| {
        let (k, v) = pair.split_once('=')?;
        (k == key).then(|| v.to_string())
    })
}

fn parse_request(method: &Method, url: &str, body: &str) -> Result<ServiceRequest, String> {
    let path = url.split('?').next().unwrap_or(url);
    let commitment_from_body = || -> Result<String, String> {
        let value: serde_json::Value =
            serde_json::from_str(body).map_err(|e| format!("bad json body: {e}"))?;
        value
            .get("commitment")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| "body must carry a `commitment` field".to_string())
    };
    let epoch = query_param(url, "epoch")
        .map(|raw| raw.parse::<u64>().map_err(|_| "bad epoch".to_string()))
        .transpose()?;
    match (method, path) {
        (Method::Post, "/register") => Ok(ServiceRequest::Register {
            commitment: commitment_from_body()?,
        }),
        (Method::Post, "/revoke") => Ok(ServiceRequest::Revoke {
            commitment: commitment_from_body()?,
        }),
        (Method::Get, "/bundle") => Ok(ServiceRequest::Bundle { epoch }),
        (Method::Get, "/witness") => Ok(ServiceRequest::Witness {
            commitment: query_param(url, "commitment")
                .ok_or_else(|| "missing commitment".to_string())?,
            epoch,
        }),
        (Method::Get, "/audit") => Ok(ServiceRequest::Audit),
        _ => Err(format!("no route for {method} {path}")),
    }
}

fn json_header() -> Header {
    Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header")
}

/// Serve until the process is killed.
pub fn serve_http<S: RegistryStore>(coordinator: Coordinator<S>, addr: &str) -> Result<()> {
    let server = Server::http(addr).map_err(|e| anyhow::anyhow!("bind {addr}: {e}"))?;
    serve_on(server, coordinator)
}

/// Serve on an already-bound listener (lets tests bind port 0).
pub fn serve_on<S: RegistryStore>(server: Server, mut coordinator: Coordinator<S>) -> Result<()> {
    for mut request in server.incoming_requests() {
        let mut body = String::new();
        let _ = request.as_reader().read_to_string(&mut body);
        let parsed = parse_request(request.method(), request.url(), &body);
        let response = match parsed {
            Err(message) => Response::from_string(
                serde_json::json!({"code": "bad_request", "message": message}).to_string(),
            )
            .with_status_code(400)
            .with_header(json_header()),
            Ok(service_request) => {
                match handle_request(&mut coordinator, &service_request) {
                    ServiceResponse::Registered { epoch_effective }
                    | ServiceResponse::Revoked { epoch_effective } => Response::from_string(
                        serde_json::json!({"epoch_effective": epoch_effective}).to_string(),
                    )
                    .with_header(json_header()),
                    ServiceResponse::Bundle { bundle } => {
                        // Raw canonical bytes on the wire.
                        let bytes = hex::decode(&bundle).expect("service emits valid hex");
                        Response::from_data(bytes).with_header(
                            Header::from_bytes(
                                &b"Content-Type"[..],
                                &b"application/octet-stream"[..],
                            )
                            .expect("static header"),
                        )
                    }
                    ServiceResponse::Witness {
                        allow_proof,
                        block_proof,
                    } => Response::from_string(
                        serde_json::json!({
                            "allow_proof": allow_proof,
                            "block_proof": block_proof,
                        })
                        .to_string(),
                    )
                    .with_header(json_header()),
                    ServiceResponse::Audit { log } => Response::from_data(log.into_bytes())
                        .with_header(
                            Header::from_bytes(&b"Content-Type"[..], &b"text/plain"[..])
                                .expect("static header"),
                        ),
                    ServiceResponse::Error { code, message } => {
                        let status = match code.as_str() {
                            "not_found" => 404,
                            "duplicate" => 409,
                            "bad_argument" => 400,
                            _ => 500,
                        };
                        Response::from_string(
                            serde_json::json!({"code": code, "message": message}).to_string(),
                        )
                        .with_status_code(status)
                        .with_header(json_header())
                    }
                }
            }
        };
        let _ = request.respond(response);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routes_parse_into_the_service_contract() {
        assert_eq!(
            parse_request(&Method::Post, "/register", r#"{"commitment":"ab"}"#).unwrap(),
            ServiceRequest::Register {
                commitment: "ab".into()
            }
        );
        assert_eq!(
            parse_request(&Method::Get, "/bundle?epoch=3", "").unwrap(),
            ServiceRequest::Bundle { epoch: Some(3) }
        );
        assert_eq!(
            parse_request(&Method::Get, "/bundle", "").unwrap(),
            ServiceRequest::Bundle { epoch: None }
        );
        assert_eq!(
            parse_request(&Method::Get, "/witness?commitment=ab&epoch=1", "").unwrap(),
            ServiceRequest::Witness {
                commitment: "ab".into(),
                epoch: Some(1)
            }
        );
        assert_eq!(
            parse_request(&Method::Get, "/audit", "").unwrap(),
            ServiceRequest::Audit
        );
        assert!(parse_request(&Method::Get, "/register", "").is_err());
        assert!(parse_request(&Method::Post, "/register", "{}").is_err());
        assert!(parse_request(&Method::Get, "/bundle?epoch=x", "").is_err());
    }
}
