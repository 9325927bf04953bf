//! Artifact bundle on disk.
//!
//! ```text
//! <dir>/bundle.json       trained pipeline (features, R_eff set, ensembles, inputs)
//! <dir>/collateral.json   optional collateral model
//! <dir>/config.toml       resolved configuration used for training
//! <dir>/manifest.json     version, hashes, seeds, validation scores
//! ```
//!
//! Every file is written to a temporary name and renamed into place, and the
//! manifest goes last, so a bundle without a manifest is an unfinished one.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use pansim_core::collateral::CollateralModel;
use pansim_core::correction::BandMethod;
use pansim_core::data::Target;
use pansim_core::pipeline::{TrainedPipeline, BUNDLE_VERSION};
use pansim_core::Date;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const COLLATERAL_FILE: &str = "collateral.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEntry {
    pub target: Target,
    pub level: f64,
    pub method: BandMethod,
    pub seeds: Vec<u64>,
    pub feature_version: u32,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollateralEntry {
    pub gdp_gate_p: f64,
    pub lyl_gate_p: f64,
    pub composed_validation_r2: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub created: DateTime<Utc>,
    pub config_hash: String,
    pub data_hash: String,
    pub files: Vec<FileEntry>,
    pub window_start: Date,
    pub window_end: Date,
    pub features: Vec<String>,
    /// Links the R_eff networks to the feature standardisation they expect.
    pub scaling_fingerprint: u64,
    /// Lower, mean, upper.
    pub reff_seeds: [u64; 3],
    pub reff_validation_r2: [Option<f64>; 3],
    pub ensembles: Vec<EnsembleEntry>,
    pub collateral: Option<CollateralEntry>,
    pub skipped_npis: Vec<String>,
    pub train_wall_time_ms: u64,
}

/// A loaded or freshly trained bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub pipeline: TrainedPipeline,
    pub collateral: Option<CollateralModel>,
    /// SHA-256 of the serialised pipeline; part of every scenario hash.
    pub bundle_sha256: String,
}

impl Artifacts {
    pub fn new(pipeline: TrainedPipeline, collateral: Option<CollateralModel>) -> Result<Self> {
        let bytes = serde_json::to_vec(&pipeline)?;
        Ok(Artifacts {
            bundle_sha256: sha256(&bytes),
            pipeline,
            collateral,
        })
    }
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn artifact_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Artifact {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// What `save` needs besides the models.
#[derive(Debug, Clone)]
pub struct SaveInfo {
    pub config_toml: String,
    pub config_hash: String,
    pub data_hash: String,
    pub skipped_npis: Vec<String>,
    pub collateral_seed: u64,
    pub train_wall_time_ms: u64,
}

pub fn save(dir: &Path, art: &Artifacts, info: &SaveInfo) -> Result<Manifest> {
    // an old manifest must not vouch for new files
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        write_atomic(&dir.join(name), bytes)?;
        files.push(FileEntry {
            name: name.to_string(),
            sha256: sha256(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    };
    let bundle = serde_json::to_vec(&art.pipeline)?;
    put(BUNDLE_FILE, &bundle)?;
    let collateral_path = dir.join(COLLATERAL_FILE);
    match &art.collateral {
        Some(c) => put(COLLATERAL_FILE, &serde_json::to_vec(c)?)?,
        None if collateral_path.exists() => {
            fs::remove_file(&collateral_path).map_err(|e| Error::io(&collateral_path, e))?;
        }
        None => {}
    }
    put(CONFIG_FILE, info.config_toml.as_bytes())?;

    let p = &art.pipeline;
    let losses = &p.report.correction_validation_loss;
    let manifest = Manifest {
        version: BUNDLE_VERSION,
        created: Utc::now(),
        config_hash: info.config_hash.clone(),
        data_hash: info.data_hash.clone(),
        files,
        window_start: p.window_start,
        window_end: p.window_end,
        features: p.reff.feature_names.clone(),
        scaling_fingerprint: p.reff.scaling_fingerprint,
        reff_seeds: [p.reff.lower.model.seed(), p.reff.mean.model.seed(), p.reff.upper.model.seed()],
        reff_validation_r2: p.report.reff_validation_r2,
        ensembles: p
            .ensembles
            .iter()
            .map(|e| EnsembleEntry {
                target: e.target,
                level: e.level,
                method: e.method,
                seeds: e.seeds.clone(),
                feature_version: e.features.version,
                validation_loss: losses.iter().find(|(t, _)| *t == e.target).map(|x| x.1),
            })
            .collect(),
        collateral: art.collateral.as_ref().map(|c| CollateralEntry {
            gdp_gate_p: c.gdp_gate.p_value,
            lyl_gate_p: c.lyl_gate.p_value,
            composed_validation_r2: c.composed_validation_r2,
            seed: info.collateral_seed,
        }),
        skipped_npis: info.skipped_npis.clone(),
        train_wall_time_ms: info.train_wall_time_ms,
    };
    write_atomic(&manifest_path, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

fn read_checked(dir: &Path, entry: &FileEntry) -> Result<Vec<u8>> {
    let path = dir.join(&entry.name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let got = sha256(&bytes);
    if got != entry.sha256 {
        return Err(artifact_err(
            &path,
            format!("checksum mismatch (manifest {}, file {got}); retrain or restore the bundle", entry.sha256),
        ));
    }
    Ok(bytes)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(artifact_err(dir, "no manifest.json; run `pansim train` first"));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| artifact_err(&path, e.to_string()))?;
    if m.version != BUNDLE_VERSION {
        return Err(artifact_err(
            &path,
            format!("bundle version {} is not supported (expected {BUNDLE_VERSION})", m.version),
        ));
    }
    Ok(m)
}

/// Loads and verifies a bundle.
pub fn load(dir: &Path) -> Result<(Artifacts, Manifest)> {
    let manifest = load_manifest(dir)?;
    let entry = |name: &str| manifest.files.iter().find(|f| f.name == name);
    let bundle_entry = entry(BUNDLE_FILE).ok_or_else(|| artifact_err(dir, "manifest lists no bundle.json"))?;
    let bytes = read_checked(dir, bundle_entry)?;
    let pipeline: TrainedPipeline =
        serde_json::from_slice(&bytes).map_err(|e| artifact_err(&dir.join(BUNDLE_FILE), e.to_string()))?;
    pipeline.check_version()?;
    let collateral = match entry(COLLATERAL_FILE) {
        Some(e) => {
            let b = read_checked(dir, e)?;
            Some(serde_json::from_slice(&b).map_err(|e| artifact_err(&dir.join(COLLATERAL_FILE), e.to_string()))?)
        }
        None => None,
    };
    Ok((
        Artifacts {
            bundle_sha256: sha256(&bytes),
            pipeline,
            collateral,
        },
        manifest,
    ))
}

/// `PANSIM_DATA_DIR` layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataDir {
    pub root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    /// Input CSVs live at the root.
    pub fn inputs(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> PathBuf {
        self.root.join("artifacts")
    }

    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }
}
