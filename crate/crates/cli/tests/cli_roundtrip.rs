//! Drive the built `unlinkid` binary through a complete file-based flow:
//! coordinator lifecycle, participant keystore, presentation artifacts, and
//! offline verification, checking the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn unlinkid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unlinkid"))
        .args(args)
        .current_dir(cwd)
        .env("UNLINKID_PASSPHRASE", "test-passphrase")
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn expect_success(output: &Output, what: &str) -> String {
    assert!(
        output.status.success(),
        "{what} failed: {}\n{}",
        stdout(output),
        String::from_utf8_lossy(&output.stderr)
    );
    stdout(output)
}

#[test]
fn full_flow_over_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Coordinator up.
    let out = unlinkid(
        &[
            "coordinator",
            "init",
            "--state",
            "registry",
            "--key-seed",
            &"11".repeat(32),
        ],
        root,
    );
    expect_success(&out, "coordinator init");

    // Participant keystore with a deterministic portfolio.
    let out = unlinkid(
        &[
            "participant",
            "init",
            "--keystore",
            "alice",
            "--n",
            "8",
            "--seed",
            &"22".repeat(32),
        ],
        root,
    );
    let text = expect_success(&out, "participant init");
    assert!(text.contains("commitment: "));

    // Register, publish, sync.
    expect_success(
        &unlinkid(
            &[
                "participant",
                "register",
                "--keystore",
                "alice",
                "--coordinator",
                "registry",
            ],
            root,
        ),
        "register",
    );
    let publish1 = expect_success(
        &unlinkid(&["coordinator", "publish", "--state", "registry"], root),
        "publish",
    );
    expect_success(
        &unlinkid(
            &[
                "participant",
                "sync",
                "--keystore",
                "alice",
                "--coordinator",
                "registry",
            ],
            root,
        ),
        "sync",
    );

    // Present: emits the display string and the verification artifacts.
    let out = unlinkid(
        &[
            "participant",
            "present",
            "--keystore",
            "alice",
            "--rp",
            "clinic",
            "--context",
            "visit-1",
            "--out",
            "handoff",
        ],
        root,
    );
    let display = expect_success(&out, "present").trim().to_string();
    assert_eq!(display.len(), 36, "uuid display expected, got {display}");

    // Offline verification; the coordinator key
    // file is picked up from the working directory.
    std::fs::copy(
        root.join("registry/coordinator.vk"),
        root.join("coordinator.vk"),
    )
    .unwrap();
    let out = unlinkid(
        &[
            "rp",
            "verify",
            "--bundle",
            "handoff/bundle.bin",
            "--statement",
            "handoff/statement.bin",
            "--proof",
            "handoff/proof.bin",
            "--id",
            &display,
            "--max-stale",
            "2",
        ],
        root,
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "honest verify: {}",
        stdout(&out)
    );
    assert!(stdout(&out).contains("accept"));

    // A tampered display digit exits 1 with the reason code.
    let mut tampered = display.clone().into_bytes();
    tampered[0] = if tampered[0] == b'0' { b'1' } else { b'0' };
    let out = unlinkid(
        &[
            "rp",
            "verify",
            "--bundle",
            "handoff/bundle.bin",
            "--statement",
            "handoff/statement.bin",
            "--proof",
            "handoff/proof.bin",
            "--id",
            &String::from_utf8(tampered).unwrap(),
            "--max-stale",
            "2",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("id_mismatch"));

    // Publishing twice with no changes: fresh epochs, same roots.
    let publish2 = expect_success(
        &unlinkid(&["coordinator", "publish", "--state", "registry"], root),
        "second publish",
    );
    let roots = |text: &str| -> (String, String) {
        let allow = text
            .lines()
            .find_map(|l| l.strip_prefix("allow root: "))
            .unwrap()
            .to_string();
        let block = text
            .lines()
            .find_map(|l| l.strip_prefix("block root: "))
            .unwrap()
            .to_string();
        (allow, block)
    };
    assert!(publish1.contains("epoch: 1"));
    assert!(publish2.contains("epoch: 2"));
    assert_eq!(roots(&publish1), roots(&publish2));

    // Audit log shows the full history.
    let audit = expect_success(
        &unlinkid(&["coordinator", "audit", "--state", "registry"], root),
        "audit",
    );
    let lines: Vec<&str> = audit.lines().collect();
    assert!(lines[0].ends_with("genesis -"));
    assert_eq!(audit.matches(" publish ").count(), 2);

    // Witness service writes proof files.
    let commitment = text
        .lines()
        .find_map(|l| l.strip_prefix("commitment: "))
        .unwrap()
        .trim();
    expect_success(
        &unlinkid(
            &[
                "coordinator",
                "witness",
                "--state",
                "registry",
                "--commitment",
                commitment,
                "--out",
                "witness-files",
            ],
            root,
        ),
        "witness",
    );
    assert!(root.join("witness-files/allow.bin").exists());
    assert!(root.join("witness-files/block.bin").exists());

    // Delegation grant file.
    expect_success(
        &unlinkid(
            &[
                "participant",
                "delegate",
                "--keystore",
                "alice",
                "--start",
                "4",
                "--end",
                "8",
                "--out",
                "grant.bin",
            ],
            root,
        ),
        "delegate",
    );
    assert!(root.join("grant.bin").exists());

    // Extending the portfolio keeps the old prefix, changes the commitment,
    // and clears the now-stale witness cache; the refreshed commitment goes
    // through the same register/sync/present cycle.
    let out = unlinkid(
        &["participant", "derive", "--keystore", "alice", "--n", "16"],
        root,
    );
    let text = expect_success(&out, "derive");
    let extended_commitment = text
        .lines()
        .find_map(|l| l.strip_prefix("commitment: "))
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .to_string();
    assert_ne!(extended_commitment, commitment);
    expect_success(
        &unlinkid(
            &[
                "participant",
                "register",
                "--keystore",
                "alice",
                "--coordinator",
                "registry",
            ],
            root,
        ),
        "re-register",
    );
    expect_success(
        &unlinkid(&["coordinator", "publish", "--state", "registry"], root),
        "third publish",
    );
    expect_success(
        &unlinkid(
            &[
                "participant",
                "sync",
                "--keystore",
                "alice",
                "--coordinator",
                "registry",
            ],
            root,
        ),
        "re-sync",
    );
    let out = unlinkid(
        &[
            "participant",
            "present",
            "--keystore",
            "alice",
            "--rp",
            "clinic",
            "--out",
            "handoff2",
        ],
        root,
    );
    expect_success(&out, "present after extension");

    // Revocation turns presentation into a refusal (exit 1).
    expect_success(
        &unlinkid(
            &[
                "coordinator",
                "revoke",
                "--state",
                "registry",
                "--commitment",
                &extended_commitment,
            ],
            root,
        ),
        "revoke",
    );
    expect_success(
        &unlinkid(&["coordinator", "publish", "--state", "registry"], root),
        "post-revoke publish",
    );
    expect_success(
        &unlinkid(
            &[
                "participant",
                "sync",
                "--keystore",
                "alice",
                "--coordinator",
                "registry",
            ],
            root,
        ),
        "post-revoke sync",
    );
    let out = unlinkid(
        &[
            "participant",
            "present",
            "--keystore",
            "alice",
            "--out",
            "handoff3",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing to prove"));

    // Wrong passphrase cannot open the keystore (internal error, exit 3).
    let out = Command::new(env!("CARGO_BIN_EXE_unlinkid"))
        .args([
            "participant",
            "commit",
            "--keystore",
            "alice",
            "--passphrase",
            "wrong",
        ])
        .current_dir(root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn scenario_runs_are_reproducible_from_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/eligibility.scn");
    let run = || {
        let out = unlinkid(
            &["scenario", "run", scenario.to_str().unwrap(), "--seed", "7"],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
        stdout(&out)
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
    assert!(first.contains("PASS"));

    // A failing expectation exits 1.
    let bad = dir.path().join("bad.scn");
    std::fs::write(
        &bad,
        "version 1\nc init role=coordinator\np init role=participant n=2\nr init role=rp\n\
         p register coordinator=c\nc publish\np sync coordinator=c\n\
         p present rp=r expect=refuse\n",
    )
    .unwrap();
    let out = unlinkid(&["scenario", "run", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn adversary_reports_from_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = unlinkid(
        &[
            "adversary",
            "run",
            "--regime",
            "uli",
            "--services",
            "3",
            "--users",
            "10",
            "--interactions",
            "2",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    let text = expect_success(&out, "adversary run");
    assert!(text.contains("join_rate=1.000000"));

    let out = unlinkid(
        &[
            "adversary",
            "run",
            "--regime",
            "per-interaction",
            "--services",
            "3",
            "--users",
            "10",
            "--interactions",
            "2",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert!(stdout(&out).contains("join_rate=0.000000"));

    // Unknown flags are usage errors: exit 2.
    let out = unlinkid(&["adversary", "run", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
