//! Workload spec files and reference profile files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use inferbench_core::graph::{layer_table, validate, LayerRow};
use inferbench_core::scoring::ReferenceProfile;
use inferbench_core::zoo::{WorkloadSpec, ZooError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the default profile file.
pub const PROFILE_ENV: &str = "INFER_BENCH_PROFILE";

/// Profile shipped with the tool, calibrated at scale 0.25.
pub const DEFAULT_PROFILE: &str = include_str!("../profiles/default.json");

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

impl FileError {
    pub fn is_io(&self) -> bool {
        matches!(self, FileError::Io { .. })
    }
}

fn read(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), FileError> {
    fs::write(path, text).map_err(|source| FileError::Io { path: path.to_path_buf(), source })
}

/// On-disk workload: the spec plus its layer table at the spec's resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFile {
    #[serde(flatten)]
    pub spec: WorkloadSpec,
    #[serde(default)]
    pub layers: Vec<LayerRow>,
}

impl WorkloadFile {
    pub fn new(spec: WorkloadSpec) -> Result<Self, ZooError> {
        let graph = validate(spec.architecture.build(spec.input_resolution, spec.seed)?)?;
        Ok(Self { layers: layer_table(&graph), spec })
    }
}

pub fn workload_json(spec: &WorkloadSpec) -> Result<String, ZooError> {
    let file = WorkloadFile::new(spec.clone())?;
    Ok(serde_json::to_string_pretty(&file).expect("plain data") + "\n")
}

pub fn save_spec(path: &Path, spec: &WorkloadSpec) -> Result<(), FileError> {
    let text =
        workload_json(spec).map_err(|e| FileError::Invalid { path: path.to_path_buf(), message: e.to_string() })?;
    write(path, &text)
}

pub fn parse_spec(text: &str, path: &Path) -> Result<WorkloadSpec, FileError> {
    let file: WorkloadFile =
        serde_json::from_str(text).map_err(|source| FileError::Parse { path: path.to_path_buf(), source })?;
    file.spec.validate().map_err(|e| FileError::Invalid { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(file.spec)
}

pub fn load_spec(path: &Path) -> Result<WorkloadSpec, FileError> {
    parse_spec(&read(path)?, path)
}

pub fn parse_profile(text: &str, path: &Path) -> Result<ReferenceProfile, FileError> {
    let p: ReferenceProfile =
        serde_json::from_str(text).map_err(|source| FileError::Parse { path: path.to_path_buf(), source })?;
    p.validate().map_err(|e| FileError::Invalid { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(p)
}

pub fn load_profile(path: &Path) -> Result<ReferenceProfile, FileError> {
    parse_profile(&read(path)?, path)
}

pub fn profile_json(profile: &ReferenceProfile) -> String {
    serde_json::to_string_pretty(profile).expect("plain data") + "\n"
}

pub fn save_profile(path: &Path, profile: &ReferenceProfile) -> Result<(), FileError> {
    write(path, &profile_json(profile))
}

pub fn default_profile() -> ReferenceProfile {
    parse_profile(DEFAULT_PROFILE, Path::new("<built-in profile>")).expect("shipped profile is valid")
}

/// Explicit path, then the environment variable, then the built-in profile.
pub fn resolve_profile(explicit: Option<&Path>) -> Result<ReferenceProfile, FileError> {
    match explicit {
        Some(p) => load_profile(p),
        None => match std::env::var_os(PROFILE_ENV) {
            Some(p) if !p.is_empty() => load_profile(Path::new(&p)),
            _ => Ok(default_profile()),
        },
    }
}
