//! Durable storage for the coordinator: an append-only audit log plus one
//! file per published bundle.
//!
//! The write protocol during a publish is: append the publish record to the
//! log first, then write the bundle file. Recovery tolerates a crash at any
//! point: a partial trailing log line is discarded, and a logged publish
//! whose bundle file is missing is completed by re-deriving and re-signing
//! the bundle (signatures are deterministic, so the re-signed bundle is
//! byte-identical).

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::coordinator::RootBundle;

/// Persistence boundary for the registry. One record is one log line.
pub trait RegistryStore {
    fn append_record(&mut self, line: &str) -> io::Result<()>;
    fn put_bundle(&mut self, bundle: &RootBundle) -> io::Result<()>;
    fn load(&mut self) -> io::Result<StoredRegistry>;
}

/// Everything a store holds: log lines in append order and bundles by epoch.
#[derive(Debug, Default, Clone)]
pub struct StoredRegistry {
    pub log_lines: Vec<String>,
    pub bundles: BTreeMap<u64, RootBundle>,
}

/// In-memory store for tests and ephemeral harness runs.
#[derive(Debug, Default)]
pub struct MemStore {
    log_lines: Vec<String>,
    bundles: BTreeMap<u64, RootBundle>,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl RegistryStore for MemStore {
    fn append_record(&mut self, line: &str) -> io::Result<()> {
        self.log_lines.push(line.to_string());
        Ok(())
    }

    fn put_bundle(&mut self, bundle: &RootBundle) -> io::Result<()> {
        self.bundles.insert(bundle.epoch, bundle.clone());
        Ok(())
    }

    fn load(&mut self) -> io::Result<StoredRegistry> {
        Ok(StoredRegistry {
            log_lines: self.log_lines.clone(),
            bundles: self.bundles.clone(),
        })
    }
}

/// File-backed store: `audit.log` plus `bundle-<epoch>.bin` files in a
/// state directory.
#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(FileStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn log_path(&self) -> PathBuf {
        self.dir.join("audit.log")
    }

    fn bundle_path(&self, epoch: u64) -> PathBuf {
        self.dir.join(format!("bundle-{epoch}.bin"))
    }
}

impl RegistryStore for FileStore {
    fn append_record(&mut self, line: &str) -> io::Result<()> {
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.log_path())?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        file.sync_data()
    }

    fn put_bundle(&mut self, bundle: &RootBundle) -> io::Result<()> {
        let path = self.bundle_path(bundle.epoch);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bundle.to_bytes())?;
        fs::rename(&tmp, &path)
    }

    fn load(&mut self) -> io::Result<StoredRegistry> {
        let mut stored = StoredRegistry::default();
        match fs::read_to_string(self.log_path()) {
            Ok(text) => {
                let complete = match text.rfind('\n') {
                    Some(last) => &text[..last],
                    // A log with no terminator holds only a torn write.
                    None => "",
                };
                stored.log_lines = complete
                    .split('\n')
                    .filter(|l| !l.is_empty())
                    .map(str::to_string)
                    .collect();
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(epoch) = name
                .strip_prefix("bundle-")
                .and_then(|r| r.strip_suffix(".bin"))
                .and_then(|e| e.parse::<u64>().ok())
            {
                let bytes = fs::read(entry.path())?;
                let bundle = RootBundle::from_bytes(&bytes).map_err(|e| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("{name}: {e}"))
                })?;
                stored.bundles.insert(epoch, bundle);
            }
        }
        Ok(stored)
    }
}

/// Which store operation a [`FaultyStore`] should fail on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Fail the Nth `append_record` call (0-based).
    AppendRecord(u32),
    /// Fail the Nth `put_bundle` call (0-based).
    PutBundle(u32),
}

/// Wrapper that injects a single failure at a chosen operation, for
/// crash-recovery testing at the persist/serve boundary.
#[derive(Debug)]
pub struct FaultyStore<S> {
    inner: S,
    fault: Option<FaultPoint>,
    appends: u32,
    puts: u32,
}

impl<S> FaultyStore<S> {
    pub fn new(inner: S, fault: FaultPoint) -> Self {
        FaultyStore {
            inner,
            fault: Some(fault),
            appends: 0,
            puts: 0,
        }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }

    fn fail() -> io::Error {
        io::Error::other("injected storage fault")
    }
}

impl<S: RegistryStore> RegistryStore for FaultyStore<S> {
    fn append_record(&mut self, line: &str) -> io::Result<()> {
        let n = self.appends;
        self.appends += 1;
        if self.fault == Some(FaultPoint::AppendRecord(n)) {
            self.fault = None;
            return Err(Self::fail());
        }
        self.inner.append_record(line)
    }

    fn put_bundle(&mut self, bundle: &RootBundle) -> io::Result<()> {
        let n = self.puts;
        self.puts += 1;
        if self.fault == Some(FaultPoint::PutBundle(n)) {
            self.fault = None;
            return Err(Self::fail());
        }
        self.inner.put_bundle(bundle)
    }

    fn load(&mut self) -> io::Result<StoredRegistry> {
        self.inner.load()
    }
}
