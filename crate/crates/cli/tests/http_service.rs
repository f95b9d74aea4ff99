//! The registry API over a real loopback socket: the HTTP adapter mapped
//! onto the service contract, driven by a plain TCP client.

use std::io::{Read, Write};
use std::net::TcpStream;

use ed25519_dalek::SigningKey;
use unlinkid_cli::http::serve_on;
use unlinkid_core::coordinator::{Coordinator, RootBundle, StepTimeSource};
use unlinkid_core::store::MemStore;

fn start_server() -> (
    std::net::SocketAddr,
    ed25519_dalek::VerifyingKey,
    unlinkid_core::Digest,
) {
    let key = SigningKey::from_bytes(&[14; 32]);
    let verifying_key = key.verifying_key();
    let mut coordinator = Coordinator::open(
        MemStore::new(),
        key,
        Box::new(StepTimeSource::new(9_000, 60)),
        unlinkid_core::smt::PRODUCTION_DEPTH,
    )
    .unwrap();
    let commitment = unlinkid_core::hash::hash_leaf(b"service-test").unwrap();
    coordinator.register_commitment(commitment).unwrap();
    coordinator.publish_epoch().unwrap();

    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let addr = match server.server_addr() {
        tiny_http::ListenAddr::IP(addr) => addr,
        other => panic!("unexpected listen addr {other:?}"),
    };
    std::thread::spawn(move || {
        let _ = serve_on(server, coordinator);
    });
    (addr, verifying_key, commitment)
}

fn request(addr: std::net::SocketAddr, raw: &str) -> (u16, Vec<u8>) {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.write_all(raw.as_bytes()).unwrap();
    let mut response = Vec::new();
    stream.read_to_end(&mut response).unwrap();
    let header_end = response
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .expect("complete response");
    let head = String::from_utf8_lossy(&response[..header_end]).into_owned();
    let status: u16 = head
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .expect("status line");
    (status, response[header_end + 4..].to_vec())
}

fn get(addr: std::net::SocketAddr, path: &str) -> (u16, Vec<u8>) {
    request(
        addr,
        &format!("GET {path} HTTP/1.1\r\nHost: t\r\nConnection: close\r\n\r\n"),
    )
}

fn post(addr: std::net::SocketAddr, path: &str, body: &str) -> (u16, Vec<u8>) {
    request(
        addr,
        &format!(
            "POST {path} HTTP/1.1\r\nHost: t\r\nConnection: close\r\nContent-Length: {}\r\n\r\n{body}",
            body.len()
        ),
    )
}

#[test]
fn registry_api_over_loopback() {
    let (addr, verifying_key, registered) = start_server();

    // The published bundle comes back as canonical bytes and verifies.
    let (status, body) = get(addr, "/bundle");
    assert_eq!(status, 200);
    let bundle = RootBundle::from_bytes(&body).unwrap();
    assert_eq!(bundle.epoch, 1);
    assert!(bundle.verify_signature(&verifying_key));

    // Witness proofs verify against that bundle.
    let (status, body) = get(
        addr,
        &format!("/witness?commitment={}&epoch=1", registered.to_hex()),
    );
    assert_eq!(status, 200);
    let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let allow = unlinkid_core::merkle::InclusionProof::from_bytes(
        &hex::decode(json["allow_proof"].as_str().unwrap()).unwrap(),
    )
    .unwrap();
    assert!(unlinkid_core::verify_inclusion(&bundle.allow_root, &registered, &allow).is_ok());
    let block = unlinkid_core::smt::SmtProof::from_bytes(
        &hex::decode(json["block_proof"].as_str().unwrap()).unwrap(),
    )
    .unwrap();
    assert!(unlinkid_core::smt::verify_proof(&bundle.block_root, &block).is_ok());

    // Registration, duplicate conflict, and bad input codes.
    let fresh = unlinkid_core::hash::hash_leaf(b"another").unwrap();
    let (status, body) = post(
        addr,
        "/register",
        &format!(r#"{{"commitment":"{}"}}"#, fresh.to_hex()),
    );
    assert_eq!(status, 200);
    let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(json["epoch_effective"], 2);

    let (status, _) = post(
        addr,
        "/register",
        &format!(r#"{{"commitment":"{}"}}"#, fresh.to_hex()),
    );
    assert_eq!(status, 409);
    let (status, _) = post(addr, "/register", r#"{"commitment":"zz"}"#);
    assert_eq!(status, 400);
    let (status, _) = get(addr, "/bundle?epoch=9");
    assert_eq!(status, 404);
    let (status, _) = get(addr, "/nope");
    assert_eq!(status, 400);

    // Revocation of the registered commitment.
    let (status, _) = post(
        addr,
        "/revoke",
        &format!(r#"{{"commitment":"{}"}}"#, registered.to_hex()),
    );
    assert_eq!(status, 200);

    // The audit log streams as text and records everything so far.
    let (status, body) = get(addr, "/audit");
    assert_eq!(status, 200);
    let log = String::from_utf8(body).unwrap();
    assert!(log.lines().next().unwrap().ends_with("genesis -"));
    assert!(log.contains(&format!("register {}", fresh.to_hex())));
    assert!(log.contains(&format!("revoke {}", registered.to_hex())));
}
