//! Encrypted-at-rest file container for participant state.
//!
//! Every keystore file is independently sealed: a cleartext header records
//! the KDF parameters and salt, followed by a ChaCha20-Poly1305 box under a
//! scrypt-derived key. Opening with the wrong passphrase fails
//! authentication rather than yielding garbage.

use std::fs;
use std::io;
use std::path::Path;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;
use thiserror::Error;

pub const KEYSTORE_MAGIC: &[u8; 5] = b"ULKS1";
const VERSION: u8 = 1;
const KDF_SCRYPT: u8 = 1;
const SALT_LEN: usize = 16;
const NONCE_LEN: usize = 12;

/// scrypt cost parameters, recorded in each file's header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KdfParams {
    pub log_n: u8,
    pub r: u32,
    pub p: u32,
}

impl KdfParams {
    /// Interactive-use default.
    pub const DEFAULT: KdfParams = KdfParams {
        log_n: 15,
        r: 8,
        p: 1,
    };
    /// Cheap parameters for tests and throwaway harness keystores.
    pub const FAST: KdfParams = KdfParams {
        log_n: 10,
        r: 8,
        p: 1,
    };
}

#[derive(Debug, Error)]
pub enum KeystoreError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a keystore file or unsupported version")]
    BadHeader,
    #[error("unsupported key-derivation parameters")]
    BadKdfParams,
    #[error("wrong passphrase or corrupted file")]
    AuthenticationFailed,
}

fn derive_key(
    passphrase: &[u8],
    salt: &[u8],
    params: KdfParams,
) -> Result<[u8; 32], KeystoreError> {
    let scrypt_params = scrypt::Params::new(params.log_n, params.r, params.p, 32)
        .map_err(|_| KeystoreError::BadKdfParams)?;
    let mut key = [0u8; 32];
    scrypt::scrypt(passphrase, salt, &scrypt_params, &mut key)
        .map_err(|_| KeystoreError::BadKdfParams)?;
    Ok(key)
}

/// Seal `plaintext` under `passphrase` into the container byte form.
pub fn seal_bytes(
    passphrase: &[u8],
    plaintext: &[u8],
    params: KdfParams,
) -> Result<Vec<u8>, KeystoreError> {
    let mut salt = [0u8; SALT_LEN];
    rand::rngs::OsRng.fill_bytes(&mut salt);
    let mut nonce = [0u8; NONCE_LEN];
    rand::rngs::OsRng.fill_bytes(&mut nonce);

    let key = derive_key(passphrase, &salt, params)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .map_err(|_| KeystoreError::AuthenticationFailed)?;

    let mut out = Vec::with_capacity(5 + 2 + 9 + SALT_LEN + NONCE_LEN + ciphertext.len());
    out.extend_from_slice(KEYSTORE_MAGIC);
    out.push(VERSION);
    out.push(KDF_SCRYPT);
    out.push(params.log_n);
    out.extend_from_slice(&params.r.to_le_bytes());
    out.extend_from_slice(&params.p.to_le_bytes());
    out.extend_from_slice(&salt);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ciphertext);
    Ok(out)
}

/// Open a sealed container.
pub fn open_bytes(passphrase: &[u8], bytes: &[u8]) -> Result<Vec<u8>, KeystoreError> {
    const HEADER: usize = 5 + 1 + 1 + 1 + 4 + 4 + SALT_LEN + NONCE_LEN;
    if bytes.len() < HEADER + 16 || &bytes[..5] != KEYSTORE_MAGIC || bytes[5] != VERSION {
        return Err(KeystoreError::BadHeader);
    }
    if bytes[6] != KDF_SCRYPT {
        return Err(KeystoreError::BadKdfParams);
    }
    let params = KdfParams {
        log_n: bytes[7],
        r: u32::from_le_bytes(bytes[8..12].try_into().expect("len checked")),
        p: u32::from_le_bytes(bytes[12..16].try_into().expect("len checked")),
    };
    // Refuse absurd cost factors rather than grinding for minutes.
    if params.log_n > 22 || params.r > 32 || params.p > 16 {
        return Err(KeystoreError::BadKdfParams);
    }
    let salt = &bytes[16..16 + SALT_LEN];
    let nonce = &bytes[16 + SALT_LEN..16 + SALT_LEN + NONCE_LEN];
    let ciphertext = &bytes[HEADER..];

    let key = derive_key(passphrase, salt, params)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    cipher
        .decrypt(Nonce::from_slice(nonce), ciphertext)
        .map_err(|_| KeystoreError::AuthenticationFailed)
}

/// Seal to a file.
pub fn seal_file(
    path: &Path,
    passphrase: &[u8],
    plaintext: &[u8],
    params: KdfParams,
) -> Result<(), KeystoreError> {
    let bytes = seal_bytes(passphrase, plaintext, params)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Open a sealed file.
pub fn open_file(path: &Path, passphrase: &[u8]) -> Result<Vec<u8>, KeystoreError> {
    let bytes = fs::read(path)?;
    open_bytes(passphrase, &bytes)
}
