//! Scenario scripts: a flat, line-oriented format driving in-process
//! coordinator, participant, and relying-party actors.
//!
//! Format (UTF-8, `#` comments, one step per line):
//!
//! ```text
//! version 1
//! <actor> <verb> key=value ...
//! ```
//!
//! Actors are declared by their `init` step and must be declared before any
//! other step references them. Every run is deterministic in (script, seed):
//! portfolios are derived from per-actor seeds, the coordinator clock is a
//! fixed step sequence, and all actors run in-process with no sockets.
//!
//! Verbs:
//! - `init role=coordinator|participant|rp` plus per-role arguments
//!   (`n=`, `policy=`, `format=` for participants; `max-stale=` for rps)
//! - participant: `register coordinator=<c>`, `sync coordinator=<c>
//!   [epoch=N]`, `present rp=<r> [context=s] [epoch=N] [backend=b]`,
//!   `check distinct=N [rp=<r>]`
//! - coordinator: `publish`, `revoke target=<participant>`
//!
//! Any step may carry `expect=accept|ok|refuse|reject:<code>|error:<code>`;
//! steps without an expectation must simply succeed.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest as _, Sha256};

use unlinkid_core::coordinator::{Coordinator, StepTimeSource};
use unlinkid_core::legitimacy::{
    BackendId, DisclosingBackend, ExternalZkBackend, LoopbackEngine, ProofBackend, ProveError,
};
use unlinkid_core::participant::{Participant, PresentError, SelectionMode, SelectionPolicy};
use unlinkid_core::portfolio::{derive_portfolio, DisplayFormat, IdValue, PortfolioSecret};
use unlinkid_core::store::MemStore;
use unlinkid_core::verifier::{rp_verify, VerifierConfig};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioScript {
    pub name: String,
    pub version: u32,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub line_no: usize,
    pub actor: String,
    pub verb: String,
    pub args: BTreeMap<String, String>,
    pub expect: Option<Expectation>,
}

impl Step {
    fn arg(&self, key: &str) -> Option<&str> {
        self.args.get(key).map(|s| s.as_str())
    }
}

/// What a step is expected to produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    /// Plain success ("accept" for presentations, "ok" otherwise).
    Success,
    /// The prover refuses to produce a proof.
    Refuse,
    /// The relying party rejects with this reason code.
    Reject(String),
    /// The step fails with this error code.
    Error(String),
}

impl Expectation {
    fn parse(s: &str) -> Result<Expectation, String> {
        match s {
            "accept" | "ok" => Ok(Expectation::Success),
            "refuse" => Ok(Expectation::Refuse),
            other => {
                if let Some(code) = other.strip_prefix("reject:") {
                    Ok(Expectation::Reject(code.to_string()))
                } else if let Some(code) = other.strip_prefix("error:") {
                    Ok(Expectation::Error(code.to_string()))
                } else {
                    Err(format!("unknown expectation `{other}`"))
                }
            }
        }
    }

    fn matches(&self, outcome: &str) -> bool {
        match self {
            Expectation::Success => outcome == "ok" || outcome == "accept",
            Expectation::Refuse => outcome == "refuse",
            Expectation::Reject(code) => outcome == format!("reject:{code}"),
            Expectation::Error(code) => outcome == format!("error:{code}"),
        }
    }
}

#[derive(Debug)]
pub struct ScenarioError {
    pub line_no: usize,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line_no, self.message)
    }
}

impl std::error::Error for ScenarioError {}

fn err(line_no: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError {
        line_no,
        message: message.into(),
    }
}

/// Parse a script. Purely syntactic; reference checking happens in
/// [`validate`].
pub fn parse_scenario(name: &str, text: &str) -> Result<ScenarioScript, ScenarioError> {
    let mut version = None;
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let first = tokens.next().expect("non-empty line");
        if version.is_none() {
            if first != "version" {
                return Err(err(line_no, "script must start with `version <n>`"));
            }
            let v: u32 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| err(line_no, "bad version number"))?;
            if v != SCENARIO_VERSION {
                return Err(err(line_no, format!("unsupported script version {v}")));
            }
            version = Some(v);
            continue;
        }
        let verb = tokens
            .next()
            .ok_or_else(|| err(line_no, "step needs `<actor> <verb>`"))?
            .to_string();
        let mut args = BTreeMap::new();
        let mut expect = None;
        for token in tokens {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("bad argument `{token}`, want key=value")))?;
            if key == "expect" {
                expect = Some(Expectation::parse(value).map_err(|message| err(line_no, message))?);
            } else {
                args.insert(key.to_string(), value.to_string());
            }
        }
        steps.push(Step {
            line_no,
            actor: first.to_string(),
            verb,
            args,
            expect,
        });
    }
    Ok(ScenarioScript {
        name: name.to_string(),
        version: version.ok_or_else(|| err(0, "empty script"))?,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Coordinator,
    Participant,
    Rp,
}

/// Check every actor reference and argument shape before executing anything.
pub fn validate(script: &ScenarioScript) -> Result<(), ScenarioError> {
    let mut roles: BTreeMap<&str, Role> = BTreeMap::new();
    for step in &script.steps {
        let line = step.line_no;
        let require = |name: &str, role: Role, roles: &BTreeMap<&str, Role>| match roles.get(name) {
            Some(r) if *r == role => Ok(()),
            Some(_) => Err(err(line, format!("actor `{name}` has the wrong role"))),
            None => Err(err(line, format!("actor `{name}` is not declared"))),
        };
        match step.verb.as_str() {
            "init" => {
                if roles.contains_key(step.actor.as_str()) {
                    return Err(err(line, format!("actor `{}` declared twice", step.actor)));
                }
                let role = match step.arg("role") {
                    Some("coordinator") => Role::Coordinator,
                    Some("participant") => Role::Participant,
                    Some("rp") => Role::Rp,
                    other => return Err(err(line, format!("bad or missing role {other:?}"))),
                };
                roles.insert(step.actor.as_str(), role);
            }
            "register" | "sync" => {
                require(&step.actor, Role::Participant, &roles)?;
                let c = step
                    .arg("coordinator")
                    .ok_or_else(|| err(line, "missing coordinator="))?;
                require(c, Role::Coordinator, &roles)?;
            }
            "present" => {
                require(&step.actor, Role::Participant, &roles)?;
                if let Some(rp) = step.arg("rp") {
                    require(rp, Role::Rp, &roles)?;
                } else {
                    return Err(err(line, "missing rp="));
                }
            }
            "check" => {
                require(&step.actor, Role::Participant, &roles)?;
                if let Some(rp) = step.arg("rp") {
                    require(rp, Role::Rp, &roles)?;
                }
                step.arg("distinct")
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| err(line, "check needs distinct=<n>"))?;
            }
            "publish" => require(&step.actor, Role::Coordinator, &roles)?,
            "revoke" => {
                require(&step.actor, Role::Coordinator, &roles)?;
                let target = step
                    .arg("target")
                    .ok_or_else(|| err(line, "missing target="))?;
                require(target, Role::Participant, &roles)?;
            }
            other => return Err(err(line, format!("unknown verb `{other}`"))),
        }
    }
    Ok(())
}

/// What one presentation left behind at a relying party. Only
/// protocol-visible bytes: this is exactly what an adversarial pooling of
/// relying-party databases could see.
#[derive(Debug, Clone)]
pub struct RpRecord {
    pub outcome: String,
    pub display: String,
    pub statement: Vec<u8>,
    pub proof: Vec<u8>,
    pub bundle: Vec<u8>,
}

/// A full scenario run: transcript, verdict, and the artifacts tests poke
/// at (relying-party databases, coordinator persisted state, presented
/// identifier values).
pub struct RunOutcome {
    pub passed: bool,
    pub failures: Vec<String>,
    pub transcript: String,
    pub transcript_digest: String,
    pub rp_records: BTreeMap<String, Vec<RpRecord>>,
    /// Presented identifier values per participant: (rp, value, display).
    pub presented: BTreeMap<String, Vec<(String, IdValue, String)>>,
    /// Participant portfolios (ground truth for leakage scans).
    pub portfolio_values: BTreeMap<String, Vec<IdValue>>,
    /// Concatenation of each coordinator's persisted state: the audit log
    /// text followed by every bundle's canonical bytes.
    pub coordinator_state: BTreeMap<String, Vec<u8>>,
}

struct ParticipantActor {
    agent: Participant,
    coordinator: String,
}

struct RpActor {
    max_stale: u64,
    records: Vec<RpRecord>,
}

struct Runner {
    seed: u64,
    coordinators: BTreeMap<String, Coordinator<MemStore>>,
    participants: BTreeMap<String, ParticipantActor>,
    rps: BTreeMap<String, RpActor>,
    presented: BTreeMap<String, Vec<(String, IdValue, String)>>,
}

fn derive_key(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

impl Runner {
    fn backend(&self, id: BackendId) -> Box<dyn ProofBackend> {
        match id {
            BackendId::Disclosing => Box::new(DisclosingBackend),
            BackendId::ExternalZk => {
                Box::new(ExternalZkBackend::new(LoopbackEngine::new(derive_key(&[
                    b"scenario-engine",
                    &self.seed.to_le_bytes(),
                ]))))
            }
        }
    }

    fn verifier_config(&self, coordinator: &str, max_stale: u64) -> VerifierConfig {
        VerifierConfig::new(
            self.coordinators[coordinator].verifying_key(),
            max_stale,
            vec![
                self.backend(BackendId::Disclosing),
                self.backend(BackendId::ExternalZk),
            ],
        )
    }

    /// Execute one step; returns (outcome, payload bytes for the
    /// transcript digest).
    fn execute(&mut self, step: &Step) -> Result<(String, Vec<u8>), ScenarioError> {
        let line = step.line_no;
        match step.verb.as_str() {
            "init" => self.init(step),
            "register" => {
                let coordinator_name = step.arg("coordinator").expect("validated").to_string();
                let participant = self.participants.get_mut(&step.actor).expect("validated");
                participant.coordinator = coordinator_name.clone();
                let root = participant.agent.commitment().root;
                let coordinator = self
                    .coordinators
                    .get_mut(&coordinator_name)
                    .expect("validated");
                match coordinator.register_commitment(root) {
                    Ok(_) => {
                        let key = coordinator.verifying_key();
                        self.participants
                            .get_mut(&step.actor)
                            .expect("validated")
                            .agent
                            .trust_coordinator(key);
                        Ok(("ok".into(), root.as_bytes().to_vec()))
                    }
                    Err(e) => Ok((format!("error:{}", registry_code(&e)), Vec::new())),
                }
            }
            "publish" => {
                let coordinator = self.coordinators.get_mut(&step.actor).expect("validated");
                match coordinator.publish_epoch() {
                    Ok(bundle) => Ok(("ok".into(), bundle.to_bytes())),
                    Err(e) => Ok((format!("error:{}", registry_code(&e)), Vec::new())),
                }
            }
            "revoke" => {
                let target = step.arg("target").expect("validated");
                let root = self.participants[target].agent.commitment().root;
                let coordinator = self.coordinators.get_mut(&step.actor).expect("validated");
                match coordinator.revoke_commitment(root) {
                    Ok(_) => Ok(("ok".into(), root.as_bytes().to_vec())),
                    Err(e) => Ok((format!("error:{}", registry_code(&e)), Vec::new())),
                }
            }
            "sync" => {
                let epoch = parse_epoch(step, line)?;
                let coordinator = &self.coordinators[step.arg("coordinator").expect("validated")];
                let participant = self.participants.get_mut(&step.actor).expect("validated");
                let bundle = match coordinator.fetch_bundle(epoch) {
                    Ok(b) => b.clone(),
                    Err(e) => return Ok((format!("error:{}", registry_code(&e)), Vec::new())),
                };
                let witness =
                    coordinator.membership_witness(participant.agent.commitment().root, epoch);
                let (allow, block) = match witness {
                    Ok(pair) => pair,
                    Err(e) => return Ok((format!("error:{}", registry_code(&e)), Vec::new())),
                };
                let mut payload = bundle.to_bytes();
                payload.extend_from_slice(&allow.to_bytes());
                payload.extend_from_slice(&block.to_bytes());
                match participant.agent.sync(bundle, allow, block) {
                    Ok(()) => Ok(("ok".into(), payload)),
                    Err(_) => Ok(("error:sync_rejected".into(), Vec::new())),
                }
            }
            "present" => self.present(step),
            "check" => {
                let want: usize = step
                    .arg("distinct")
                    .and_then(|v| v.parse().ok())
                    .expect("validated");
                let records = self.presented.get(&step.actor).cloned().unwrap_or_default();
                let values: std::collections::BTreeSet<IdValue> = records
                    .iter()
                    .filter(|(rp, _, _)| step.arg("rp").map(|want| want == rp).unwrap_or(true))
                    .map(|(_, value, _)| *value)
                    .collect();
                if values.len() == want {
                    Ok(("ok".into(), Vec::new()))
                } else {
                    Ok((
                        format!("error:distinct_{}_want_{}", values.len(), want),
                        Vec::new(),
                    ))
                }
            }
            _ => unreachable!("validated verbs"),
        }
    }

    fn init(&mut self, step: &Step) -> Result<(String, Vec<u8>), ScenarioError> {
        let line = step.line_no;
        match step.arg("role").expect("validated") {
            "coordinator" => {
                let key = ed25519_dalek::SigningKey::from_bytes(&derive_key(&[
                    b"scenario-coordinator",
                    &self.seed.to_le_bytes(),
                    step.actor.as_bytes(),
                ]));
                let coordinator = Coordinator::open(
                    MemStore::new(),
                    key,
                    Box::new(StepTimeSource::new(1_700_000_000, 60)),
                    unlinkid_core::smt::PRODUCTION_DEPTH,
                )
                .map_err(|e| err(line, format!("coordinator init failed: {e}")))?;
                self.coordinators.insert(step.actor.clone(), coordinator);
            }
            "participant" => {
                let n: usize = step
                    .arg("n")
                    .unwrap_or("8")
                    .parse()
                    .map_err(|_| err(line, "bad n="))?;
                let mode: SelectionMode = step
                    .arg("policy")
                    .unwrap_or("per-interaction")
                    .parse()
                    .map_err(|message| err(line, message))?;
                let format = match step.arg("format").unwrap_or("uuid") {
                    "uuid" => DisplayFormat::Uuid,
                    "base32" => DisplayFormat::Base32,
                    other => match other.strip_prefix("legacy-").and_then(|d| d.parse().ok()) {
                        Some(d) => DisplayFormat::LegacyNumeric(d),
                        None => return Err(err(line, format!("bad format `{other}`"))),
                    },
                };
                let secret = PortfolioSecret::new(
                    derive_key(&[
                        b"scenario-portfolio",
                        &self.seed.to_le_bytes(),
                        step.actor.as_bytes(),
                    ]),
                    b"unlinkid/scenario/v1".to_vec(),
                );
                let ids = derive_portfolio(&secret, n)
                    .map_err(|e| err(line, format!("portfolio: {e}")))?;
                let mut agent = Participant::new(ids, Some(secret), SelectionPolicy::new(mode))
                    .map_err(|e| err(line, format!("participant: {e}")))?;
                agent.display_format = format;
                self.participants.insert(
                    step.actor.clone(),
                    ParticipantActor {
                        agent,
                        coordinator: String::new(),
                    },
                );
            }
            "rp" => {
                let max_stale: u64 = step
                    .arg("max-stale")
                    .unwrap_or("2")
                    .parse()
                    .map_err(|_| err(line, "bad max-stale="))?;
                self.rps.insert(
                    step.actor.clone(),
                    RpActor {
                        max_stale,
                        records: Vec::new(),
                    },
                );
            }
            _ => unreachable!("validated roles"),
        }
        Ok(("ok".into(), Vec::new()))
    }

    fn present(&mut self, step: &Step) -> Result<(String, Vec<u8>), ScenarioError> {
        let line = step.line_no;
        let rp_name = step.arg("rp").expect("validated").to_string();
        let epoch = parse_epoch(step, line)?;
        let context = step.arg("context").unwrap_or("").as_bytes().to_vec();
        let backend_id: BackendId = step
            .arg("backend")
            .unwrap_or("disclosing")
            .parse()
            .map_err(|message: String| err(line, message))?;
        let backend = self.backend(backend_id);

        let coordinator_name = self.participants[&step.actor].coordinator.clone();
        if coordinator_name.is_empty() {
            return Err(err(
                line,
                format!("`{}` presented before registering", step.actor),
            ));
        }
        let participant = self.participants.get_mut(&step.actor).expect("validated");
        let presentation = match participant.agent.present(
            backend.as_ref(),
            Some(rp_name.as_bytes()),
            epoch,
            &context,
        ) {
            Ok(p) => p,
            Err(PresentError::Prove(ProveError::RefusalToProve(_))) => {
                return Ok(("refuse".into(), Vec::new()))
            }
            Err(e) => return Ok((format!("error:{}", present_code(&e)), Vec::new())),
        };
        let bundle = participant
            .agent
            .material(epoch)
            .expect("present succeeded from this material")
            .bundle
            .clone();

        let estimate = self.coordinators[&coordinator_name].current_epoch();
        let max_stale = self.rps[&rp_name].max_stale;
        let config = self.verifier_config(&coordinator_name, max_stale);
        let outcome = match rp_verify(
            &config,
            &presentation.display,
            &presentation.proof,
            &presentation.statement,
            &bundle,
            estimate,
        ) {
            Ok(()) => "accept".to_string(),
            Err(rejection) => format!("reject:{}", rejection.reason.code()),
        };

        let statement_bytes = presentation.statement.to_bytes();
        let proof_bytes = presentation.proof.to_bytes();
        let mut payload = presentation.display.clone().into_bytes();
        payload.push(b'\n');
        payload.extend_from_slice(&statement_bytes);
        payload.extend_from_slice(&proof_bytes);

        self.rps
            .get_mut(&rp_name)
            .expect("validated")
            .records
            .push(RpRecord {
                outcome: outcome.clone(),
                display: presentation.display.clone(),
                statement: statement_bytes,
                proof: proof_bytes,
                bundle: bundle.to_bytes(),
            });
        self.presented.entry(step.actor.clone()).or_default().push((
            rp_name,
            presentation.statement.id_value,
            presentation.display,
        ));
        Ok((outcome, payload))
    }
}

fn parse_epoch(step: &Step, line: usize) -> Result<Option<u64>, ScenarioError> {
    match step.arg("epoch") {
        None => Ok(None),
        Some(raw) => raw.parse().map(Some).map_err(|_| err(line, "bad epoch=")),
    }
}

fn registry_code(e: &unlinkid_core::coordinator::RegistryError) -> &'static str {
    use unlinkid_core::coordinator::RegistryError as E;
    match e {
        E::Duplicate(_) => "duplicate",
        E::UnknownCommitment(_) | E::NotRegisteredAtEpoch { .. } => "not_found",
        E::UnknownEpoch(_) | E::NoPublishedEpochs => "not_found",
        E::Storage(_) => "storage",
    }
}

fn present_code(e: &PresentError) -> &'static str {
    match e {
        PresentError::Selection(s) => match s {
            unlinkid_core::participant::SelectionError::Exhausted { .. } => "exhausted",
            unlinkid_core::participant::SelectionError::LabelRequired => "label_required",
            unlinkid_core::participant::SelectionError::EmptyPortfolio => "empty_portfolio",
        },
        PresentError::NoMaterialForEpoch(_) => "no_material",
        PresentError::Witness(_) => "stale_witness",
        PresentError::Statement(_) => "bad_context",
        PresentError::Prove(_) => "prove",
        PresentError::Encode(_) => "encode",
    }
}

/// Run a script. Validation failures abort before any step executes;
/// expectation mismatches run to completion and report as failures.
pub fn run_scenario(
    script: &ScenarioScript,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<RunOutcome, ScenarioError> {
    validate(script)?;
    let mut runner = Runner {
        seed,
        coordinators: BTreeMap::new(),
        participants: BTreeMap::new(),
        rps: BTreeMap::new(),
        presented: BTreeMap::new(),
    };
    let mut transcript = String::new();
    let mut failures = Vec::new();
    for (index, step) in script.steps.iter().enumerate() {
        let (outcome, payload) = runner.execute(step)?;
        let digest = hex::encode(Sha256::digest(&payload));
        writeln!(
            transcript,
            "{index} {} {} {} {digest}",
            step.actor, step.verb, outcome
        )
        .expect("writing to a String cannot fail");
        let expectation = step.expect.clone().unwrap_or(Expectation::Success);
        if !expectation.matches(&outcome) {
            failures.push(format!(
                "step {index} (line {}): expected {expectation:?}, got `{outcome}`",
                step.line_no
            ));
        }
    }

    let transcript_digest = hex::encode(Sha256::digest(transcript.as_bytes()));
    let rp_records: BTreeMap<String, Vec<RpRecord>> = runner
        .rps
        .into_iter()
        .map(|(name, actor)| (name, actor.records))
        .collect();
    let portfolio_values = runner
        .participants
        .iter()
        .map(|(name, actor)| {
            (
                name.clone(),
                actor
                    .agent
                    .identifiers()
                    .iter()
                    .map(|id| id.value)
                    .collect(),
            )
        })
        .collect();
    let coordinator_state = runner
        .coordinators
        .iter()
        .map(|(name, coordinator)| {
            let mut bytes = coordinator.audit_text().into_bytes();
            for epoch in 1..=coordinator.current_epoch() {
                bytes.extend_from_slice(
                    &coordinator
                        .fetch_bundle(Some(epoch))
                        .expect("published")
                        .to_bytes(),
                );
            }
            (name.clone(), bytes)
        })
        .collect();

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| err(0, format!("out dir: {e}")))?;
        std::fs::write(dir.join(format!("{}.transcript", script.name)), &transcript)
            .map_err(|e| err(0, format!("transcript write: {e}")))?;
        for (name, records) in &rp_records {
            let mut text = String::new();
            for record in records {
                writeln!(
                    text,
                    "{} {} {} {}",
                    record.outcome,
                    record.display,
                    hex::encode(&record.statement),
                    hex::encode(&record.proof)
                )
                .expect("writing to a String cannot fail");
            }
            std::fs::write(dir.join(format!("rp-{name}.log")), text)
                .map_err(|e| err(0, format!("rp log write: {e}")))?;
        }
        for (name, bytes) in &coordinator_state {
            std::fs::write(dir.join(format!("coordinator-{name}.state")), bytes)
                .map_err(|e| err(0, format!("coordinator dump write: {e}")))?;
        }
    }

    Ok(RunOutcome {
        passed: failures.is_empty(),
        failures,
        transcript,
        transcript_digest,
        rp_records,
        presented: runner.presented,
        portfolio_values,
        coordinator_state,
    })
}
