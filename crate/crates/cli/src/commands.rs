//! Command-line surface: participant, coordinator, and relying-party roles
//! plus the scenario and adversary harnesses.
//!
//! Exit codes: 0 success, 1 verification reject / scenario failure, 2 usage
//! error (from argument parsing), 3 internal error.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ed25519_dalek::{SigningKey, VerifyingKey};
use rand::RngCore;

use unlinkid_core::coordinator::{Coordinator, RootBundle, SystemTimeSource};
use unlinkid_core::keystore::KdfParams;
use unlinkid_core::legitimacy::{
    BackendId, DisclosingBackend, ExternalZkBackend, LegitimacyProof, LegitimacyStatement,
    LoopbackEngine, ProofBackend, ProveError,
};
use unlinkid_core::participant::{Participant, PresentError, SelectionMode, SelectionPolicy};
use unlinkid_core::portfolio::{
    bind_authenticator, delegate_subtree, derive_portfolio, generate_random_portfolio,
    DisplayFormat, PortfolioSecret,
};
use unlinkid_core::store::FileStore;
use unlinkid_core::verifier::{rp_verify, VerifierConfig};

use crate::adversary::{run_linkage_adversary, Regime};
use crate::http::serve_http;
use crate::participant_store::{KeystoreDir, CLI_DERIVATION_LABEL};
use crate::scenario::{parse_scenario, run_scenario};

fn fill_os_random(buffer: &mut [u8]) {
    rand::rngs::OsRng.fill_bytes(buffer);
}

#[derive(Parser)]
#[command(
    name = "unlinkid",
    version,
    about = "Unlinkable identifier portfolios with offline legitimacy proofs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Manage a participant keystore and present identifiers.
    Participant {
        #[command(subcommand)]
        command: ParticipantCommand,
    },
    /// Run the registry: registrations, revocations, epoch publishing.
    Coordinator {
        #[command(subcommand)]
        command: CoordinatorCommand,
    },
    /// Relying-party checks.
    Rp {
        #[command(subcommand)]
        command: RpCommand,
    },
    /// Scripted end-to-end scenarios.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
    /// Record-linkage simulations.
    Adversary {
        #[command(subcommand)]
        command: AdversaryCommand,
    },
}

#[derive(Args)]
pub struct KeystoreArgs {
    /// Participant keystore directory.
    #[arg(long)]
    keystore: PathBuf,
    /// Passphrase for the keystore files (falls back to
    /// $UNLINKID_PASSPHRASE, then empty).
    #[arg(long)]
    passphrase: Option<String>,
}

impl KeystoreArgs {
    fn open(&self) -> KeystoreDir {
        let passphrase = self
            .passphrase
            .clone()
            .or_else(|| std::env::var("UNLINKID_PASSPHRASE").ok())
            .unwrap_or_default();
        KeystoreDir::new(&self.keystore, passphrase.as_bytes(), KdfParams::DEFAULT)
    }
}

#[derive(Subcommand)]
pub enum ParticipantCommand {
    /// Create a keystore with a fresh identifier portfolio.
    Init {
        #[command(flatten)]
        keystore: KeystoreArgs,
        /// Portfolio size.
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Derive deterministically from this 32-byte hex seed instead of
        /// random generation.
        #[arg(long, conflicts_with_all = ["legacy", "salt"])]
        seed: Option<String>,
        /// Derive the seed from an existing legacy identifier string
        /// (migration path); requires --salt.
        #[arg(long, requires = "salt")]
        legacy: Option<String>,
        /// Salt for --legacy, any string.
        #[arg(long)]
        salt: Option<String>,
        /// Identifier selection policy.
        #[arg(long, default_value = "per-interaction")]
        policy: String,
    },
    /// Extend a deterministic portfolio to N identifiers (prefix-stable).
    Derive {
        #[command(flatten)]
        keystore: KeystoreArgs,
        #[arg(long)]
        n: usize,
    },
    /// Print the identity commitment (optionally authenticator-bound).
    Commit {
        #[command(flatten)]
        keystore: KeystoreArgs,
        /// Hex authenticator bytes to bind (16..4096 bytes).
        #[arg(long)]
        authenticator: Option<String>,
    },
    /// Register the commitment with a coordinator state directory.
    Register {
        #[command(flatten)]
        keystore: KeystoreArgs,
        #[arg(long)]
        coordinator: PathBuf,
    },
    /// Fetch and cache the current (or given) epoch's bundle and witness.
    Sync {
        #[command(flatten)]
        keystore: KeystoreArgs,
        #[arg(long)]
        coordinator: PathBuf,
        #[arg(long)]
        epoch: Option<u64>,
    },
    /// Present an identifier: prints the display string and writes
    /// statement/proof/bundle files for the relying party.
    Present {
        #[command(flatten)]
        keystore: KeystoreArgs,
        /// Relying-party label (required by the per-rp policy).
        #[arg(long)]
        rp: Option<String>,
        /// Interaction context bound into the statement.
        #[arg(long, default_value = "")]
        context: String,
        /// Present against this cached epoch (default: newest synced).
        #[arg(long)]
        epoch: Option<u64>,
        /// Proof backend.
        #[arg(long, default_value = "disclosing")]
        backend: String,
        /// Shared engine key (hex, 32 bytes) for the external-zk backend.
        #[arg(long, default_value = "")]
        engine_key: String,
        /// Display format: uuid, base32, or legacy-N (N digits).
        #[arg(long, default_value = "uuid")]
        format: String,
        /// Directory for statement.bin, proof.bin, bundle.bin.
        #[arg(long)]
        out: PathBuf,
    },
    /// Hand a portfolio subtree to a surrogate as a grant file.
    Delegate {
        #[command(flatten)]
        keystore: KeystoreArgs,
        #[arg(long)]
        start: u32,
        /// Exclusive end of the index range.
        #[arg(long)]
        end: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
pub enum CoordinatorCommand {
    /// Create a coordinator state directory and signing key.
    Init {
        #[arg(long)]
        state: PathBuf,
        /// 32-byte hex seed for the signing key (random when omitted).
        #[arg(long)]
        key_seed: Option<String>,
    },
    /// Serve the registry API over HTTP.
    Serve {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8628")]
        addr: String,
    },
    /// Queue a commitment registration.
    Register {
        #[arg(long)]
        state: PathBuf,
        /// Commitment digest, hex.
        #[arg(long)]
        commitment: String,
    },
    /// Queue a revocation.
    Revoke {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        commitment: String,
    },
    /// Fold pending changes and publish a signed root bundle.
    Publish {
        #[arg(long)]
        state: PathBuf,
    },
    /// Serve the allow/block proofs for a commitment at an epoch.
    Witness {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        commitment: String,
        #[arg(long)]
        epoch: Option<u64>,
        /// Write allow.bin / block.bin here instead of printing hex.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the audit log.
    Audit {
        #[arg(long)]
        state: PathBuf,
    },
}

#[derive(Subcommand)]
pub enum RpCommand {
    /// Verify a presentation offline against a signed bundle.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        statement: PathBuf,
        #[arg(long)]
        proof: PathBuf,
        /// The identifier display string that was presented.
        #[arg(long)]
        id: String,
        /// Maximum accepted bundle age in epochs.
        #[arg(long, default_value_t = 2)]
        max_stale: u64,
        /// Coordinator verification key, hex (overrides the key file).
        #[arg(long)]
        coordinator_key: Option<String>,
        /// File holding the coordinator verification key in hex.
        #[arg(long, default_value = "coordinator.vk")]
        coordinator_key_file: PathBuf,
        /// The verifier's estimate of the current epoch (defaults to the
        /// bundle's own epoch, i.e. no staleness check beyond signatures).
        #[arg(long)]
        current_epoch: Option<u64>,
        /// Shared engine key (hex, 32 bytes) for the external-zk backend.
        #[arg(long, default_value = "")]
        engine_key: String,
    },
}

#[derive(Subcommand)]
pub enum ScenarioCommand {
    /// Execute a scenario script and check its expectations.
    Run {
        script: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write transcript, rp logs, and coordinator dumps here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
pub enum AdversaryCommand {
    /// Simulate an identifier regime and report exact-match join rates.
    Run {
        #[arg(long)]
        regime: String,
        #[arg(long, default_value_t = 5)]
        services: u32,
        #[arg(long, default_value_t = 100)]
        users: u32,
        /// Interactions per user per service.
        #[arg(long, default_value_t = 20)]
        interactions: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_hex32(hex_str: &str, what: &str) -> Result<[u8; 32]> {
    let bytes = hex::decode(hex_str).with_context(|| format!("{what}: invalid hex"))?;
    bytes
        .try_into()
        .map_err(|_| anyhow!("{what} must be exactly 32 bytes of hex"))
}

fn parse_format(s: &str) -> Result<DisplayFormat> {
    match s {
        "uuid" => Ok(DisplayFormat::Uuid),
        "base32" => Ok(DisplayFormat::Base32),
        other => other
            .strip_prefix("legacy-")
            .and_then(|d| d.parse().ok())
            .map(DisplayFormat::LegacyNumeric)
            .ok_or_else(|| anyhow!("unknown display format `{other}`")),
    }
}

fn engine_key_or_default(hex_str: &str) -> Result<[u8; 32]> {
    if hex_str.is_empty() {
        Ok([0u8; 32])
    } else {
        parse_hex32(hex_str, "engine key")
    }
}

fn backends_for(engine_key: [u8; 32]) -> Vec<Box<dyn ProofBackend>> {
    vec![
        Box::new(DisclosingBackend),
        Box::new(ExternalZkBackend::new(LoopbackEngine::new(engine_key))),
    ]
}

fn open_coordinator(state: &Path) -> Result<Coordinator<FileStore>> {
    let key_path = state.join("signing.key");
    let key_hex = fs::read_to_string(&key_path).with_context(|| {
        format!(
            "reading {} (run `coordinator init` first)",
            key_path.display()
        )
    })?;
    let key = SigningKey::from_bytes(&parse_hex32(key_hex.trim(), "signing key")?);
    let store = FileStore::open(state)?;
    Ok(Coordinator::open(
        store,
        key,
        Box::new(SystemTimeSource),
        unlinkid_core::smt::PRODUCTION_DEPTH,
    )?)
}

/// Run a parsed command line; the returned code is the process exit status.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Participant { command } => participant(command),
        Command::Coordinator { command } => coordinator(command),
        Command::Rp { command } => rp(command),
        Command::Scenario { command } => scenario(command),
        Command::Adversary { command } => adversary(command),
    }
}

fn participant(command: ParticipantCommand) -> Result<i32> {
    match command {
        ParticipantCommand::Init {
            keystore,
            n,
            seed,
            legacy,
            salt,
            policy,
        } => {
            let mode: SelectionMode = policy.parse().map_err(|e: String| anyhow!(e))?;
            let (identifiers, secret) = match (seed, legacy) {
                (Some(seed_hex), None) => {
                    let secret = PortfolioSecret::new(
                        parse_hex32(&seed_hex, "seed")?,
                        CLI_DERIVATION_LABEL.to_vec(),
                    );
                    (derive_portfolio(&secret, n)?, Some(secret))
                }
                (None, Some(legacy)) => {
                    let salt = salt.expect("clap requires salt with legacy");
                    let secret = PortfolioSecret::from_legacy_identifier(
                        &legacy,
                        salt.as_bytes(),
                        CLI_DERIVATION_LABEL.to_vec(),
                    );
                    (derive_portfolio(&secret, n)?, Some(secret))
                }
                (None, None) => (generate_random_portfolio(n)?, None),
                _ => unreachable!("clap conflicts prevent seed+legacy"),
            };
            let agent = Participant::new(identifiers, secret, SelectionPolicy::new(mode))?;
            let store = keystore.open();
            store.init(&agent)?;
            println!("keystore: {}", store.dir.display());
            println!("portfolio: {n} identifiers");
            println!("commitment: {}", agent.commitment().root);
            Ok(0)
        }
        ParticipantCommand::Derive { keystore, n } => {
            let store = keystore.open();
            let agent = store.load()?;
            let secret = agent
                .secret()
                .ok_or_else(|| anyhow!("portfolio has no seed; cannot extend deterministically"))?
                .clone();
            if n <= agent.identifiers().len() {
                bail!(
                    "portfolio already has {} identifiers",
                    agent.identifiers().len()
                );
            }
            let extended = derive_portfolio(&secret, n)?;
            debug_assert_eq!(&extended[..agent.identifiers().len()], agent.identifiers());
            let mut new_agent = Participant::new(extended, Some(secret), agent.policy.clone())?;
            if let Some(key) = agent.coordinator_key() {
                new_agent.trust_coordinator(*key);
            }
            store.save(&new_agent)?;
            // The commitment root changed, so every cached witness is stale.
            store.clear_cache()?;
            println!("portfolio extended to {n} identifiers");
            println!(
                "commitment: {} (register it and re-sync)",
                new_agent.commitment().root
            );
            Ok(0)
        }
        ParticipantCommand::Commit {
            keystore,
            authenticator,
        } => {
            let agent = keystore.open().load()?;
            let mut commitment = agent.commitment().clone();
            if let Some(auth_hex) = authenticator {
                let auth = hex::decode(auth_hex).context("authenticator hex")?;
                commitment = bind_authenticator(&commitment, &auth)?;
            }
            println!("commitment: {}", commitment.root);
            if let Some(bound) = commitment.bound_root {
                println!("bound commitment: {bound}");
            }
            println!("portfolio size: {}", commitment.portfolio_size);
            Ok(0)
        }
        ParticipantCommand::Register {
            keystore,
            coordinator,
        } => {
            let store = keystore.open();
            let mut agent = store.load()?;
            let mut registry = open_coordinator(&coordinator)?;
            let receipt = registry.register_commitment(agent.commitment().root)?;
            agent.trust_coordinator(registry.verifying_key());
            store.save(&agent)?;
            println!(
                "registered {}; effective at epoch {}",
                receipt.commitment, receipt.epoch_effective
            );
            Ok(0)
        }
        ParticipantCommand::Sync {
            keystore,
            coordinator,
            epoch,
        } => {
            let store = keystore.open();
            let mut agent = store.load()?;
            let registry = open_coordinator(&coordinator)?;
            let bundle = registry.fetch_bundle(epoch)?.clone();
            let (allow, block) = registry.membership_witness(agent.commitment().root, epoch)?;
            agent.trust_coordinator(registry.verifying_key());
            agent
                .sync(bundle.clone(), allow.clone(), block.clone())
                .map_err(|e| anyhow!("sync rejected: {e}"))?;
            store.save(&agent)?;
            store.save_material(&unlinkid_core::participant::EpochMaterial {
                bundle: bundle.clone(),
                allow_proof: allow,
                block_proof: block,
            })?;
            println!("synced epoch {}", bundle.epoch);
            Ok(0)
        }
        ParticipantCommand::Present {
            keystore,
            rp,
            context,
            epoch,
            backend,
            engine_key,
            format,
            out,
        } => {
            let store = keystore.open();
            let mut agent = store.load()?;
            agent.display_format = parse_format(&format)?;
            let backend_id: BackendId = backend.parse().map_err(|e: String| anyhow!(e))?;
            let backends = backends_for(engine_key_or_default(&engine_key)?);
            let backend = backends
                .iter()
                .find(|b| b.id() == backend_id)
                .expect("both backends constructed");
            let presentation = match agent.present(
                backend.as_ref(),
                rp.as_deref().map(|s| s.as_bytes()),
                epoch,
                context.as_bytes(),
            ) {
                Ok(presentation) => presentation,
                // A refusal is the protocol working (e.g. the commitment was
                // revoked), not an internal fault: report it like a reject.
                Err(PresentError::Prove(ProveError::RefusalToProve(violation))) => {
                    eprintln!("refusing to prove: {violation}");
                    return Ok(1);
                }
                Err(e) => return Err(e.into()),
            };
            let bundle = agent
                .material(epoch)
                .expect("present succeeded from this material")
                .bundle
                .clone();
            store.save(&agent)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("statement.bin"), presentation.statement.to_bytes())?;
            fs::write(out.join("proof.bin"), presentation.proof.to_bytes())?;
            fs::write(out.join("bundle.bin"), bundle.to_bytes())?;
            println!("{}", presentation.display);
            Ok(0)
        }
        ParticipantCommand::Delegate {
            keystore,
            start,
            end,
            out,
        } => {
            let agent = keystore.open().load()?;
            let grant = delegate_subtree(agent.identifiers(), agent.commitment(), start, end)?;
            fs::write(&out, crate::grant_codec::encode_grant(&grant))?;
            println!(
                "grant for [{start}, {end}) of commitment {} written to {}",
                grant.commitment_root,
                out.display()
            );
            Ok(0)
        }
    }
}

fn coordinator(command: CoordinatorCommand) -> Result<i32> {
    match command {
        CoordinatorCommand::Init { state, key_seed } => {
            fs::create_dir_all(&state)?;
            let key_path = state.join("signing.key");
            if key_path.exists() {
                bail!("coordinator already initialized at {}", state.display());
            }
            let seed = match key_seed {
                Some(hex_seed) => parse_hex32(&hex_seed, "key seed")?,
                None => {
                    let mut seed = [0u8; 32];
                    fill_os_random(&mut seed);
                    seed
                }
            };
            let key = SigningKey::from_bytes(&seed);
            fs::write(&key_path, hex::encode(seed))?;
            fs::write(
                state.join("coordinator.vk"),
                hex::encode(key.verifying_key().to_bytes()),
            )?;
            // Writes the genesis record.
            open_coordinator(&state)?;
            println!("coordinator state: {}", state.display());
            println!(
                "verification key: {}",
                hex::encode(key.verifying_key().to_bytes())
            );
            Ok(0)
        }
        CoordinatorCommand::Serve { state, addr } => {
            let coordinator = open_coordinator(&state)?;
            println!("serving on http://{addr}");
            serve_http(coordinator, &addr)?;
            Ok(0)
        }
        CoordinatorCommand::Register { state, commitment } => {
            let mut coordinator = open_coordinator(&state)?;
            let digest = unlinkid_core::Digest::from_hex(&commitment)?;
            let receipt = coordinator.register_commitment(digest)?;
            println!("queued; effective at epoch {}", receipt.epoch_effective);
            Ok(0)
        }
        CoordinatorCommand::Revoke { state, commitment } => {
            let mut coordinator = open_coordinator(&state)?;
            let digest = unlinkid_core::Digest::from_hex(&commitment)?;
            let receipt = coordinator.revoke_commitment(digest)?;
            println!("queued; effective at epoch {}", receipt.epoch_effective);
            Ok(0)
        }
        CoordinatorCommand::Publish { state } => {
            let mut coordinator = open_coordinator(&state)?;
            let bundle = coordinator.publish_epoch()?;
            println!("epoch: {}", bundle.epoch);
            println!("allow root: {}", bundle.allow_root);
            println!("block root: {}", bundle.block_root);
            Ok(0)
        }
        CoordinatorCommand::Witness {
            state,
            commitment,
            epoch,
            out,
        } => {
            let coordinator = open_coordinator(&state)?;
            let digest = unlinkid_core::Digest::from_hex(&commitment)?;
            let (allow, block) = coordinator.membership_witness(digest, epoch)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join("allow.bin"), allow.to_bytes())?;
                    fs::write(dir.join("block.bin"), block.to_bytes())?;
                    println!("witness written to {}", dir.display());
                }
                None => {
                    println!("allow: {}", hex::encode(allow.to_bytes()));
                    println!("block: {}", hex::encode(block.to_bytes()));
                }
            }
            Ok(0)
        }
        CoordinatorCommand::Audit { state } => {
            let coordinator = open_coordinator(&state)?;
            print!("{}", coordinator.audit_text());
            Ok(0)
        }
    }
}

fn rp(command: RpCommand) -> Result<i32> {
    match command {
        RpCommand::Verify {
            bundle,
            statement,
            proof,
            id,
            max_stale,
            coordinator_key,
            coordinator_key_file,
            current_epoch,
            engine_key,
        } => {
            let bundle = RootBundle::from_bytes(&fs::read(&bundle)?)?;
            let statement = LegitimacyStatement::from_bytes(&fs::read(&statement)?)?;
            let proof = LegitimacyProof::from_bytes(&fs::read(&proof)?)?;
            let key_hex = match coordinator_key {
                Some(k) => k,
                None => fs::read_to_string(&coordinator_key_file)
                    .with_context(|| {
                        format!(
                            "reading {} (pass --coordinator-key instead)",
                            coordinator_key_file.display()
                        )
                    })?
                    .trim()
                    .to_string(),
            };
            let key = VerifyingKey::from_bytes(&parse_hex32(&key_hex, "coordinator key")?)?;
            let config = VerifierConfig::new(
                key,
                max_stale,
                backends_for(engine_key_or_default(&engine_key)?),
            );
            let estimate = current_epoch.unwrap_or(bundle.epoch);
            match rp_verify(&config, &id, &proof, &statement, &bundle, estimate) {
                Ok(()) => {
                    println!("accept");
                    Ok(0)
                }
                Err(rejection) => {
                    println!("reject: {}", rejection.reason.code());
                    Ok(1)
                }
            }
        }
    }
}

fn scenario(command: ScenarioCommand) -> Result<i32> {
    match command {
        ScenarioCommand::Run {
            script,
            seed,
            out_dir,
        } => {
            let name = script
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("scenario")
                .to_string();
            let text = fs::read_to_string(&script)
                .with_context(|| format!("reading {}", script.display()))?;
            let parsed = parse_scenario(&name, &text)?;
            let outcome = run_scenario(&parsed, seed, out_dir.as_deref())?;
            print!("{}", outcome.transcript);
            println!("transcript sha256: {}", outcome.transcript_digest);
            if outcome.passed {
                println!("PASS ({} steps)", parsed.steps.len());
                Ok(0)
            } else {
                for failure in &outcome.failures {
                    println!("FAIL {failure}");
                }
                Ok(1)
            }
        }
    }
}

fn adversary(command: AdversaryCommand) -> Result<i32> {
    match command {
        AdversaryCommand::Run {
            regime,
            services,
            users,
            interactions,
            seed,
        } => {
            let regime: Regime = regime.parse().map_err(|e: String| anyhow!(e))?;
            let report = run_linkage_adversary(regime, services, users, interactions, seed)?;
            println!("{report}");
            Ok(0)
        }
    }
}
