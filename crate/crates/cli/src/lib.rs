//! Harness and command-line layers over `unlinkid-core`: keystore-backed
//! participant commands, a file-backed coordinator, the HTTP adapter for the
//! registry API, scripted scenarios, and the record-linkage adversary.

pub mod adversary;
pub mod commands;
pub mod grant_codec;
pub mod http;
pub mod participant_store;
pub mod scenario;
