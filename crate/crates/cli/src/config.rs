//! Resolved run configuration; written as the manifest so any run can be
//! reproduced byte for byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use leaf_core::detector::KswinConfig;
use leaf_core::mitigator::MitigationConfig;
use leaf_core::models::RegressorSpec;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub data: PathBuf,
    /// Hex sha-256 of the dataset file; verified on re-runs.
    pub data_sha256: String,
    pub target: String,
    pub schemes: Vec<String>,
    pub horizon_days: u32,
    pub train_window_days: u32,
    pub min_event_gap_days: u32,
    pub model: RegressorSpec,
    pub detector: KswinConfig,
    pub mitigation: MitigationConfig,
    pub seed: u64,
}

/// Optional fields loadable from a config file. Flags beat the file; the
/// file beats defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialRunConfig {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub schemes: Option<Vec<String>>,
    pub horizon_days: Option<u32>,
    pub train_window_days: Option<u32>,
    pub min_event_gap_days: Option<u32>,
    pub model: Option<RegressorSpec>,
    pub detector: Option<KswinConfig>,
    pub mitigation: Option<MitigationConfig>,
    pub seed: Option<u64>,
}

pub fn sha256_hex(path: &Path) -> std::io::Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
