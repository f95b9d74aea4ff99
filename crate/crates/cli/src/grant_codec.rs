//! File form of a delegation grant, handed from owner to surrogate.
//!
//! Layout: magic "ULGR1", u32 LE start, u32 LE end, u32 LE portfolio size,
//! 32-byte subtree root, 32-byte commitment root, framed upper path, u32 LE
//! identifier count, then per identifier a 16-byte value and a 32-byte
//! attribute commitment (zeros when absent).

use anyhow::{bail, Result};

use unlinkid_core::merkle::InclusionProof;
use unlinkid_core::portfolio::{DelegationGrant, IdValue, Identifier};
use unlinkid_core::Digest;

pub const GRANT_MAGIC: &[u8; 5] = b"ULGR1";

pub fn encode_grant(grant: &DelegationGrant) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(GRANT_MAGIC);
    out.extend_from_slice(&grant.range_start.to_le_bytes());
    out.extend_from_slice(&grant.range_end.to_le_bytes());
    out.extend_from_slice(&grant.portfolio_size.to_le_bytes());
    out.extend_from_slice(grant.subtree_root.as_bytes());
    out.extend_from_slice(grant.commitment_root.as_bytes());
    let path = grant.upper_path.to_bytes();
    out.extend_from_slice(&(path.len() as u32).to_le_bytes());
    out.extend_from_slice(&path);
    out.extend_from_slice(&(grant.identifiers.len() as u32).to_le_bytes());
    for id in &grant.identifiers {
        out.extend_from_slice(&id.value.0);
        match &id.attr_commitment {
            Some(d) => out.extend_from_slice(d.as_bytes()),
            None => out.extend_from_slice(&[0u8; 32]),
        }
    }
    out
}

pub fn decode_grant(bytes: &[u8]) -> Result<DelegationGrant> {
    if bytes.len() < 5 + 12 + 64 + 4 || &bytes[..5] != GRANT_MAGIC {
        bail!("not a grant file");
    }
    let word = |offset: usize| -> u32 {
        u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("len checked"))
    };
    let range_start = word(5);
    let range_end = word(9);
    let portfolio_size = word(13);
    let subtree_root = Digest::from_slice(&bytes[17..49]).expect("len checked");
    let commitment_root = Digest::from_slice(&bytes[49..81]).expect("len checked");
    let path_len = word(81) as usize;
    let mut cursor = 85usize;
    if bytes.len() < cursor + path_len + 4 {
        bail!("grant file truncated");
    }
    let upper_path = InclusionProof::from_bytes(&bytes[cursor..cursor + path_len])?;
    cursor += path_len;
    let count = word(cursor) as usize;
    cursor += 4;
    if bytes.len() != cursor + count * 48 {
        bail!("grant file length mismatch");
    }
    let mut identifiers = Vec::with_capacity(count);
    for i in 0..count {
        let offset = cursor + i * 48;
        let value = IdValue(bytes[offset..offset + 16].try_into().expect("len checked"));
        let attr: [u8; 32] = bytes[offset + 16..offset + 48]
            .try_into()
            .expect("len checked");
        identifiers.push(Identifier {
            value,
            index: range_start + i as u32,
            attr_commitment: if attr == [0u8; 32] {
                None
            } else {
                Some(Digest(attr))
            },
        });
    }
    Ok(DelegationGrant {
        subtree_root,
        range_start,
        range_end,
        portfolio_size,
        commitment_root,
        identifiers,
        upper_path,
    })
}
