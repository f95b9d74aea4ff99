//! On-disk participant keystore: a directory of passphrase-sealed files.
//!
//! ```text
//! <keystore>/
//!   portfolio.bin    sealed portfolio file (values, attribute slots, seed)
//!   policy.bin       sealed selection-policy state
//!   coordinator.vk   hex verification key of the trusted coordinator
//!   cache/epoch-N.bin  sealed witness material per synced epoch
//! ```
//!
//! The two state files are encrypted at rest; the coordinator key is public
//! and stays cleartext so verifiers can be pointed at it directly.

use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use ed25519_dalek::VerifyingKey;

use unlinkid_core::coordinator::RootBundle;
use unlinkid_core::keystore::{open_file, seal_file, KdfParams};
use unlinkid_core::merkle::InclusionProof;
use unlinkid_core::participant::{EpochMaterial, Participant, SelectionPolicy};
use unlinkid_core::portfolio::{decode_portfolio_file, encode_portfolio_file, PortfolioSecret};
use unlinkid_core::smt::SmtProof;

/// Deterministic portfolios created by this CLI always derive under this
/// label; the portfolio file format stores only the seed, so the label is a
/// fixed constant rather than per-keystore state.
pub const CLI_DERIVATION_LABEL: &[u8] = b"unlinkid/portfolio/v1";

pub struct KeystoreDir {
    pub dir: PathBuf,
    passphrase: Vec<u8>,
    params: KdfParams,
}

impl KeystoreDir {
    pub fn new(dir: impl Into<PathBuf>, passphrase: &[u8], params: KdfParams) -> Self {
        KeystoreDir {
            dir: dir.into(),
            passphrase: passphrase.to_vec(),
            params,
        }
    }

    fn portfolio_path(&self) -> PathBuf {
        self.dir.join("portfolio.bin")
    }

    fn policy_path(&self) -> PathBuf {
        self.dir.join("policy.bin")
    }

    fn vk_path(&self) -> PathBuf {
        self.dir.join("coordinator.vk")
    }

    fn cache_path(&self, epoch: u64) -> PathBuf {
        self.dir.join("cache").join(format!("epoch-{epoch}.bin"))
    }

    pub fn exists(&self) -> bool {
        self.portfolio_path().exists()
    }

    /// Write a fresh keystore. Fails if one already exists.
    pub fn init(&self, participant: &Participant) -> Result<()> {
        if self.exists() {
            bail!("keystore already exists at {}", self.dir.display());
        }
        fs::create_dir_all(self.dir.join("cache"))?;
        self.save(participant)
    }

    /// Persist portfolio, policy, coordinator key, and cached material.
    pub fn save(&self, participant: &Participant) -> Result<()> {
        fs::create_dir_all(self.dir.join("cache"))?;
        let seed = participant.secret().map(|s| s.seed);
        let portfolio_bytes = encode_portfolio_file(participant.identifiers(), seed.as_ref());
        seal_file(
            &self.portfolio_path(),
            &self.passphrase,
            &portfolio_bytes,
            self.params,
        )?;
        seal_file(
            &self.policy_path(),
            &self.passphrase,
            &participant.policy.to_bytes(),
            self.params,
        )?;
        if let Some(key) = participant.coordinator_key() {
            fs::write(self.vk_path(), hex::encode(key.to_bytes()))?;
        }
        Ok(())
    }

    pub fn save_material(&self, material: &EpochMaterial) -> Result<()> {
        fs::create_dir_all(self.dir.join("cache"))?;
        seal_file(
            &self.cache_path(material.bundle.epoch),
            &self.passphrase,
            &encode_material(material),
            self.params,
        )?;
        Ok(())
    }

    /// Drop all cached witness material. Required after extending the
    /// portfolio: the commitment root changes and every cached proof goes
    /// stale with it.
    pub fn clear_cache(&self) -> Result<()> {
        let cache_dir = self.dir.join("cache");
        if cache_dir.is_dir() {
            for entry in fs::read_dir(&cache_dir)? {
                let path = entry?.path();
                if path.is_file() {
                    fs::remove_file(path)?;
                }
            }
        }
        Ok(())
    }

    /// Load the participant and every cached epoch back into memory.
    pub fn load(&self) -> Result<Participant> {
        let portfolio_bytes = open_file(&self.portfolio_path(), &self.passphrase)
            .with_context(|| format!("opening {}", self.portfolio_path().display()))?;
        let (identifiers, seed) =
            decode_portfolio_file(&portfolio_bytes).map_err(|e| anyhow!("portfolio file: {e}"))?;
        let secret = seed.map(|seed| PortfolioSecret::new(seed, CLI_DERIVATION_LABEL.to_vec()));
        let policy_bytes = open_file(&self.policy_path(), &self.passphrase)?;
        let policy =
            SelectionPolicy::from_bytes(&policy_bytes).map_err(|e| anyhow!("policy file: {e}"))?;
        let mut participant = Participant::new(identifiers, secret, policy)?;

        if let Ok(hex_key) = fs::read_to_string(self.vk_path()) {
            let bytes: [u8; 32] = hex::decode(hex_key.trim())?
                .try_into()
                .map_err(|_| anyhow!("coordinator.vk must hold 32 hex-encoded bytes"))?;
            participant.trust_coordinator(VerifyingKey::from_bytes(&bytes)?);
        }

        let cache_dir = self.dir.join("cache");
        if cache_dir.is_dir() {
            for entry in fs::read_dir(&cache_dir)? {
                let path = entry?.path();
                if path.extension().map(|e| e == "bin").unwrap_or(false) {
                    let bytes = open_file(&path, &self.passphrase)?;
                    let material = decode_material(&bytes)
                        .with_context(|| format!("decoding {}", path.display()))?;
                    participant
                        .sync(material.bundle, material.allow_proof, material.block_proof)
                        .map_err(|e| anyhow!("cached material rejected: {e}"))?;
                }
            }
        }
        Ok(participant)
    }
}

fn encode_material(material: &EpochMaterial) -> Vec<u8> {
    let mut out = material.bundle.to_bytes();
    let allow = material.allow_proof.to_bytes();
    out.extend_from_slice(&(allow.len() as u32).to_le_bytes());
    out.extend_from_slice(&allow);
    let block = material.block_proof.to_bytes();
    out.extend_from_slice(&(block.len() as u32).to_le_bytes());
    out.extend_from_slice(&block);
    out
}

fn decode_material(bytes: &[u8]) -> Result<EpochMaterial> {
    if bytes.len() < 144 + 4 {
        bail!("material file truncated");
    }
    let bundle = RootBundle::from_bytes(&bytes[..144])?;
    let mut cursor = 144usize;
    let mut framed = || -> Result<Vec<u8>> {
        if bytes.len() < cursor + 4 {
            bail!("material file truncated");
        }
        let len = u32::from_le_bytes(bytes[cursor..cursor + 4].try_into().unwrap()) as usize;
        cursor += 4;
        if bytes.len() < cursor + len {
            bail!("material file truncated");
        }
        let out = bytes[cursor..cursor + len].to_vec();
        cursor += len;
        Ok(out)
    };
    let allow_proof = InclusionProof::from_bytes(&framed()?)?;
    let block_proof = SmtProof::from_bytes(&framed()?)?;
    Ok(EpochMaterial {
        bundle,
        allow_proof,
        block_proof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use unlinkid_core::participant::SelectionMode;
    use unlinkid_core::portfolio::derive_portfolio;

    #[test]
    fn keystore_round_trips_participant_state() {
        let dir = tempfile::tempdir().unwrap();
        let store = KeystoreDir::new(dir.path().join("ks"), b"pp", KdfParams::FAST);

        let secret = PortfolioSecret::new([3; 32], CLI_DERIVATION_LABEL.to_vec());
        let ids = derive_portfolio(&secret, 8).unwrap();
        let mut participant = Participant::new(
            ids,
            Some(secret),
            SelectionPolicy::new(SelectionMode::PerRelyingParty),
        )
        .unwrap();
        participant.policy.select(8, Some(b"agency")).unwrap();
        store.init(&participant).unwrap();

        let loaded = store.load().unwrap();
        assert_eq!(loaded.identifiers(), participant.identifiers());
        assert_eq!(loaded.policy, participant.policy);
        assert_eq!(loaded.commitment(), participant.commitment());

        // Wrong passphrase cannot open it.
        let wrong = KeystoreDir::new(store.dir.clone(), b"other", KdfParams::FAST);
        assert!(wrong.load().is_err());

        // Double init is refused.
        assert!(store.init(&participant).is_err());
    }

    #[test]
    fn material_cache_round_trips() {
        use unlinkid_core::coordinator::{Coordinator, StepTimeSource};
        use unlinkid_core::store::MemStore;

        let dir = tempfile::tempdir().unwrap();
        let store = KeystoreDir::new(dir.path().join("ks"), b"pp", KdfParams::FAST);
        let secret = PortfolioSecret::new([4; 32], CLI_DERIVATION_LABEL.to_vec());
        let ids = derive_portfolio(&secret, 4).unwrap();
        let mut participant = Participant::new(
            ids,
            Some(secret),
            SelectionPolicy::new(SelectionMode::PerInteraction),
        )
        .unwrap();

        let mut coordinator = Coordinator::open(
            MemStore::new(),
            ed25519_dalek::SigningKey::from_bytes(&[8; 32]),
            Box::new(StepTimeSource::new(100, 1)),
            unlinkid_core::smt::PRODUCTION_DEPTH,
        )
        .unwrap();
        coordinator
            .register_commitment(participant.commitment().root)
            .unwrap();
        coordinator.publish_epoch().unwrap();
        let bundle = coordinator.fetch_bundle(None).unwrap().clone();
        let (allow, block) = coordinator
            .membership_witness(participant.commitment().root, None)
            .unwrap();
        participant.trust_coordinator(coordinator.verifying_key());
        participant
            .sync(bundle.clone(), allow.clone(), block.clone())
            .unwrap();

        store.init(&participant).unwrap();
        store
            .save_material(&EpochMaterial {
                bundle,
                allow_proof: allow,
                block_proof: block,
            })
            .unwrap();

        let loaded = store.load().unwrap();
        assert!(loaded.material(Some(1)).is_some());
    }
}
