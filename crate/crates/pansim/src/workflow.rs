//! Train and run orchestration shared by the CLI and the service.

use std::path::Path;
use std::time::Instant;

use pansim_core::collateral::{self, CollateralModel, Quarter, QuarterlyNpis};
use pansim_core::pipeline::{self, EpiSetup, Executor, HistoricalInputs};
use pansim_core::scenario::{self, Scenario, ScenarioResult};
use pansim_core::seirfv::VaccinePlan;
use serde::Serialize;

use crate::artifacts::Artifacts;
use crate::config::{self, hash_json, Config};
use crate::error::{Error, Result};
use crate::ingest::Dataset;

/// Trains the scenario pipeline and, if asked, the collateral model.
pub fn train<E: Executor>(ds: &Dataset, cfg: &Config, with_collateral: bool, exec: &E) -> Result<Artifacts> {
    let inputs = HistoricalInputs {
        weather: ds.weather.clone(),
        npis: ds.npis.clone(),
        reff: ds.reff.clone(),
    };
    let pc = cfg.pipeline();
    let (start, _) = pipeline::training_window(&inputs, &ds.targets, &pc)?;
    let epi = EpiSetup {
        params: cfg.epi.clone(),
        age: ds.age.clone(),
        seed_infections: cfg.initial.seed_infections,
        vaccination: VaccinePlan::from_supply(&ds.vaccination, start)?,
    };
    let trained = pipeline::train_pipeline(inputs, &ds.targets, epi, &pc, exec)?;
    let collateral = if with_collateral {
        Some(train_collateral(ds, cfg)?)
    } else {
        None
    };
    Artifacts::new(trained, collateral)
}

/// Quarterly NPI levels for the economic series: the file's own NPI columns
/// if present, else the daily schedule averaged per quarter.
pub fn econ_npis(ds: &Dataset) -> Result<QuarterlyNpis> {
    let econ = ds.econ.as_ref().ok_or_else(|| Error::Data {
        file: crate::ingest::ECON_FILE.into(),
        message: "required for --with-collateral but not present in the data directory".into(),
    })?;
    Ok(match &econ.npis {
        Some(n) => n.clone(),
        None => QuarterlyNpis::aggregate(&ds.npis).align(econ.econ.periods()),
    })
}

pub fn train_collateral(ds: &Dataset, cfg: &Config) -> Result<CollateralModel> {
    let npis = econ_npis(ds)?;
    let econ = &ds.econ.as_ref().expect("checked by econ_npis").econ;
    Ok(collateral::train_collateral(&npis, econ, &cfg.collateral)?)
}

/// Hash identifying a reproducible run: the scenario minus its label, plus
/// the exact artifact bundle.
pub fn scenario_hash(scenario: &Scenario, art: &Artifacts) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        scenario: &'a Scenario,
        bundle: &'a str,
    }
    let mut s = scenario.clone();
    s.id.clear();
    hash_json(&Key {
        scenario: &s,
        bundle: &art.bundle_sha256,
    })
}

/// [`scenario::run_scenario`] plus the config hash and wall time.
pub fn run(scenario: &Scenario, art: &Artifacts) -> Result<ScenarioResult> {
    let t0 = Instant::now();
    let mut r = scenario::run_scenario(scenario, &art.pipeline)?;
    r.metadata.config_hash = scenario_hash(scenario, art);
    r.metadata.wall_time_ms = Some(t0.elapsed().as_millis() as u64);
    Ok(r)
}

/// Reads a scenario definition; `.toml` files are TOML, anything else JSON.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        config::from_toml(&text)
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| Error::Config {
        path: path.to_path_buf(),
        message,
    })
}

/// One quarter of collateral output for a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollateralRow {
    pub quarter: Quarter,
    pub stringency: f64,
    pub gdp: f64,
    pub lyl: f64,
}

/// Per-quarter GDP and LYL for the NPI schedule the scenario runs on.
pub fn collateral_rows(scenario: &Scenario, art: &Artifacts) -> Result<Vec<CollateralRow>> {
    let model = art.collateral.as_ref().ok_or_else(|| Error::Artifact {
        path: crate::artifacts::COLLATERAL_FILE.into(),
        message: "bundle has no collateral model; train with --with-collateral".into(),
    })?;
    let p = &art.pipeline;
    let end = scenario.end.unwrap_or(p.window_end);
    let npis = scenario::scenario_npis(scenario, &p.inputs.npis, p.window_start, end)?;
    let q = QuarterlyNpis::aggregate(&npis);
    let gdp = collateral::predict_gdp(model, &q)?;
    let lyl = collateral::lyl_from_gdp(model, &gdp)?;
    Ok(q
        .periods
        .iter()
        .zip(q.stringency())
        .zip(gdp.iter().zip(&lyl))
        .map(|((&quarter, stringency), (&gdp, &lyl))| CollateralRow {
            quarter,
            stringency,
            gdp,
            lyl,
        })
        .collect())
}

/// The synthetic R_eff world and collateral data as a data directory's
/// contents, plus the matching configuration (seed infections of the
/// generator).
pub fn synthetic_dataset(seed: Option<u64>) -> Result<(Dataset, Config)> {
    use pansim_core::synthetic::{self, CollateralSpec, SyntheticSpec};
    let mut spec = SyntheticSpec::default();
    let mut cspec = CollateralSpec::default();
    if let Some(s) = seed {
        spec.seed = s;
        cspec.seed = s.wrapping_add(1);
    }
    let sd = synthetic::generate(&spec)?;
    let coll = synthetic::synthetic_collateral(&cspec);
    let ds = Dataset {
        npis: sd.npis,
        weather: sd.weather,
        reff: sd.reff,
        age: sd.age,
        vaccination: sd.vaccination,
        targets: sd.targets,
        econ: Some(crate::ingest::EconData {
            econ: coll.econ,
            npis: Some(coll.npis),
        }),
        skipped_npis: Vec::new(),
    };
    let mut cfg = Config::default();
    cfg.initial.seed_infections = sd.seed_infections;
    cfg.epi = sd.epi;
    Ok((ds, cfg))
}
