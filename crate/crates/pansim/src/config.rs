//! TOML configuration.
//!
//! One file with a section per stage; every section and key is optional and
//! unknown keys are rejected. `--seed` overrides the section seeds.

use std::fs;
use std::path::{Path, PathBuf};

use pansim_core::collateral::CollateralConfig;
use pansim_core::correction::CorrectionConfig;
use pansim_core::features::FeatureConfig;
use pansim_core::pipeline::PipelineConfig;
use pansim_core::reff::ReffConfig;
use pansim_core::seirfv::EpiParams;
use pansim_core::Date;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// File looked up in the data directory when `--config` is not given.
pub const DEFAULT_CONFIG_FILE: &str = "pansim.toml";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub start: Option<Date>,
    pub end: Option<Date>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// Infectious persons at the window start, spread by population share.
    pub seed_infections: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { seed_infections: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// NPI columns accepted on top of the OxGRT indicator names.
    pub extra_npis: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    /// Scenario worker threads.
    pub workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            workers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub window: WindowConfig,
    pub features: FeatureConfig,
    pub reff: ReffConfig,
    pub correction: CorrectionConfig,
    pub collateral: CollateralConfig,
    pub epi: EpiParams,
    pub initial: InitialConfig,
    pub ingest: IngestConfig,
    pub service: ServiceConfig,
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> Result<Config> {
        let cfg: Config = from_toml(text).map_err(|message| Error::Config {
            path: origin.to_path_buf(),
            message,
        })?;
        cfg.validate().map_err(|message| Error::Config {
            path: origin.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path)
    }

    /// `explicit` if given, else `<data_dir>/pansim.toml` if present, else
    /// defaults.
    pub fn resolve(explicit: Option<&Path>, data_dir: Option<&Path>) -> Result<(Config, Option<PathBuf>)> {
        if let Some(p) = explicit {
            return Ok((Config::load(p)?, Some(p.to_path_buf())));
        }
        if let Some(d) = data_dir {
            let p = d.join(DEFAULT_CONFIG_FILE);
            if p.exists() {
                return Ok((Config::load(&p)?, Some(p)));
            }
        }
        Ok((Config::default(), None))
    }

    fn validate(&self) -> std::result::Result<(), String> {
        // artifacts are JSON, which has no infinities
        let epi = &self.epi;
        let values = [
            ("incubation_rate", epi.incubation_rate),
            ("recovery_rate", epi.recovery_rate),
            ("vaccine_efficacy", epi.vaccine_efficacy),
            ("vaccine_immunity_days", epi.vaccine_immunity_days),
            ("recovery_immunity_days", epi.recovery_immunity_days),
            ("hospital_capacity", epi.hospital_capacity),
            ("icu_capacity", epi.icu_capacity),
        ];
        for (name, v) in values {
            if !v.is_finite() {
                return Err(format!("epi.{name} must be finite (use a large value such as 1e9 to disable waning)"));
            }
        }
        epi.validate().map_err(|e| format!("epi: {e}"))?;
        let s = self.initial.seed_infections;
        if !(s.is_finite() && s >= 0.0) {
            return Err(format!("initial.seed_infections must be a finite count >= 0, got {s}"));
        }
        self.correction.validate().map_err(|e| format!("correction: {e}"))?;
        if self.service.workers == 0 {
            return Err("service.workers must be at least 1".into());
        }
        Ok(())
    }

    /// Derives every stage seed from one value: R_eff `s`, correction `s+1`,
    /// collateral `s+2`.
    pub fn apply_seed(&mut self, seed: u64) {
        self.reff.seed = seed;
        self.correction.seed = seed.wrapping_add(1);
        self.collateral.seed = seed.wrapping_add(2);
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            features: self.features.clone(),
            reff: self.reff.clone(),
            correction: self.correction.clone(),
            window_start: self.window.start,
            window_end: self.window.end,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises to TOML")
    }
}

/// Deserialises TOML text, reading bare TOML dates (`2020-03-01`) as ISO
/// strings so they land in the same date fields JSON input uses.
pub fn from_toml<T: serde::de::DeserializeOwned>(text: &str) -> std::result::Result<T, String> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    for (_, v) in table.iter_mut() {
        dates_to_strings(v);
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| e.to_string())
}

fn dates_to_strings(v: &mut toml::Value) {
    match v {
        toml::Value::Datetime(dt) if dt.time.is_none() && dt.offset.is_none() => {
            *v = toml::Value::String(dt.to_string());
        }
        toml::Value::Array(items) => items.iter_mut().for_each(dates_to_strings),
        toml::Value::Table(t) => t.iter_mut().for_each(|(_, v)| dates_to_strings(v)),
        _ => {}
    }
}

/// SHA-256 over the JSON encoding of `value` (struct fields serialise in
/// declaration order and maps are ordered, so equal values hash equally).
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serialisable value");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> &'static Path {
        Path::new("test.toml")
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(Config::parse("", origin()).unwrap(), Config::default());
    }

    #[test]
    fn sections_override_defaults() {
        let text = r#"
            [window]
            start = 2020-03-15
            [correction]
            members = 4
            hidden = [8, 8, 8]
            [correction.levels]
            icu = 0.9
            [epi]
            hospital_capacity = 1000.0
            [initial]
            seed_infections = 2000.0
            [service]
            port = 9000
        "#;
        let c = Config::parse(text, origin()).unwrap();
        assert_eq!(c.window.start, Date::from_ymd_opt(2020, 3, 15));
        assert_eq!(c.correction.members, 4);
        assert_eq!(c.correction.levels.icu, 0.9);
        assert_eq!(c.correction.levels.fatal, CorrectionConfig::default().levels.fatal);
        assert_eq!(c.epi.hospital_capacity, 1000.0);
        assert_eq!(c.epi.icu_capacity, EpiParams::default().icu_capacity);
        assert_eq!(c.service.port, 9000);
        assert_eq!(c.pipeline().window_start, c.window.start);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["[reff]\nhiden = [4]\n", "[nope]\n", "seed = 3\n"] {
            let err = Config::parse(text, origin()).unwrap_err().to_string();
            assert!(err.contains("test.toml"), "{err}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[epi]\nvaccine_immunity_days = inf\n",
            "[epi]\nvaccine_efficacy = 1.5\n",
            "[correction]\nmembers = 0\n",
            "[initial]\nseed_infections = -1.0\n",
        ] {
            assert!(Config::parse(text, origin()).is_err(), "{text}");
        }
    }

    #[test]
    fn seed_override_and_hash() {
        let mut a = Config::default();
        let b = Config::default();
        assert_eq!(a.hash(), b.hash());
        a.apply_seed(5);
        assert_eq!((a.reff.seed, a.correction.seed, a.collateral.seed), (5, 6, 7));
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = Config::default();
        c.window.end = Date::from_ymd_opt(2021, 1, 31);
        c.ingest.extra_npis = vec!["Curfew".into()];
        assert_eq!(Config::parse(&c.to_toml(), origin()).unwrap(), c);
    }
}
