//! Plots-ready delimited tables and the JSON result document.
//!
//! | file | rows |
//! |------|------|
//! | `result.json` | the full scenario result |
//! | `forecasts.csv` | `date,band,target,lower,mean,upper` (long format, 12 series) |
//! | `reff.csv` | `date,lower,mean,upper` (R_eff fed to the engine) |
//! | `raw.csv` | `date,band,` raw compartmental series |
//! | `summary.csv` | one row per R_eff band |
//! | `trajectory_<band>.csv` | one row per day, `S_00_04 ... V_85_plus` plus derived series |
//! | `selection.csv` | both feature-selection passes |
//! | `history.csv` | historical replay beside the observed targets |
//! | `collateral.csv` | per-quarter stringency, GDP and LYL |

use std::path::{Path, PathBuf};

use chrono::Days;
use pansim_core::data::{canonical_range, Band, Target, TargetSeries, AGE_GROUPS};
use pansim_core::features::SelectionReport;
use pansim_core::pipeline::TrainedPipeline;
use pansim_core::scenario::{self, Scenario, ScenarioResult};
use pansim_core::seirfv::{self, Clinical, Trajectory};
use pansim_core::Date;

use crate::artifacts::{write_atomic, Artifacts};
use crate::error::{Error, Result};
use crate::workflow::CollateralRow;

struct Table {
    name: &'static str,
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new<I: IntoIterator<Item = S>, S: AsRef<[u8]>>(name: &'static str, header: I) -> Result<Self> {
        let mut t = Table {
            name,
            w: csv::Writer::from_writer(Vec::new()),
        };
        t.row(header)?;
        Ok(t)
    }

    fn row<I: IntoIterator<Item = S>, S: AsRef<[u8]>>(&mut self, rec: I) -> Result<()> {
        self.w.write_record(rec).map_err(|e| Error::data(self.name, e.to_string()))
    }

    fn save(self, dir: &Path, name: &str) -> Result<PathBuf> {
        let bytes = self.w.into_inner().map_err(|e| Error::data(self.name, e.to_string()))?;
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

fn day(start: Date, i: usize) -> String {
    (start + Days::new(i as u64)).to_string()
}

/// Shortest round-trip form; exponent notation for very small or large
/// magnitudes (p-values).
fn f(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-6..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// `result.json`, `forecasts.csv`, `reff.csv`, `raw.csv`, `summary.csv`.
pub fn write_result(dir: &Path, r: &ScenarioResult) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let json = dir.join("result.json");
    write_atomic(&json, &serde_json::to_vec_pretty(r)?)?;
    out.push(json);

    let mut t = Table::new("forecasts.csv", ["date", "band", "target", "lower", "mean", "upper"])?;
    for s in &r.forecasts.series {
        let fc = &s.forecast;
        for i in 0..fc.len() {
            t.row([
                day(fc.start_date, i),
                s.band.as_str().into(),
                fc.target.as_str().into(),
                f(fc.lower[i]),
                f(fc.mean[i]),
                f(fc.upper[i]),
            ])?;
        }
    }
    out.push(t.save(dir, "forecasts.csv")?);

    let mut t = Table::new("reff.csv", ["date", "lower", "mean", "upper"])?;
    for i in 0..r.reff.len() {
        t.row([day(r.reff.start_date, i), f(r.reff.lower[i]), f(r.reff.mean[i]), f(r.reff.upper[i])])?;
    }
    out.push(t.save(dir, "reff.csv")?);

    let mut t = Table::new(
        "raw.csv",
        [
            "date",
            "band",
            "cumulative_infections",
            "active_infected",
            "cumulative_fatalities",
            "hospital_demand",
            "icu_demand",
        ],
    )?;
    for s in &r.raw {
        for i in 0..s.active_infected.len() {
            t.row([
                day(r.start_date, i),
                s.band.as_str().into(),
                f(s.cumulative_infections[i]),
                f(s.active_infected[i]),
                f(s.cumulative_fatalities[i]),
                f(s.hospital_demand[i]),
                f(s.icu_demand[i]),
            ])?;
        }
    }
    out.push(t.save(dir, "raw.csv")?);

    let mut t = Table::new(
        "summary.csv",
        [
            "band",
            "peak_infected",
            "total_fatalities",
            "peak_hospital_beds",
            "peak_icu",
            "hospital_overflow_days",
            "icu_overflow_days",
        ],
    )?;
    for s in &r.summary {
        t.row([
            s.band.as_str().into(),
            f(s.peak_infected),
            f(s.total_fatalities),
            f(s.peak_hospital_beds),
            f(s.peak_icu),
            s.hospital_overflow_days.to_string(),
            s.icu_overflow_days.to_string(),
        ])?;
    }
    out.push(t.save(dir, "summary.csv")?);
    Ok(out)
}

fn group_label(g: usize) -> String {
    let (lo, hi) = canonical_range(g);
    if g + 1 == AGE_GROUPS {
        format!("{lo:02}_plus")
    } else {
        format!("{lo:02}_{:02}", hi - 1)
    }
}

/// Daily compartments per age group plus derived series for one run.
pub fn trajectory_table(t: &Trajectory, clinical: &Clinical, params: &seirfv::EpiParams) -> Result<Vec<u8>> {
    let hs = seirfv::hospital_series(t, clinical, params);
    let mut header = vec!["date".to_string()];
    for c in ["S", "E", "I", "R", "F", "V"] {
        header.extend((0..AGE_GROUPS).map(|g| format!("{c}_{}", group_label(g))));
    }
    header.extend(
        [
            "new_infections",
            "cumulative_infections",
            "active_infected",
            "cumulative_fatalities",
            "hospital_demand",
            "icu_demand",
            "hospital_overflow",
            "icu_overflow",
            "doses",
        ]
        .map(String::from),
    );
    let mut tab = Table::new("trajectory", &header)?;
    for (d, st) in t.states.iter().enumerate() {
        let mut rec = vec![day(t.start_date, d)];
        for pick in [
            |c: &seirfv::Compartments| c.s,
            |c: &seirfv::Compartments| c.e,
            |c: &seirfv::Compartments| c.i,
            |c: &seirfv::Compartments| c.r,
            |c: &seirfv::Compartments| c.f,
            |c: &seirfv::Compartments| c.v,
        ] {
            rec.extend(st.groups.iter().map(|c| f(pick(c))));
        }
        rec.extend(
            [
                t.new_infections[d],
                t.cumulative_infections[d],
                t.active_infected[d],
                t.cumulative_fatalities[d],
                hs.beds[d],
                hs.icu[d],
                t.hospital_overflow[d],
                t.icu_overflow[d],
                t.doses[d],
            ]
            .map(f),
        );
        tab.row(&rec)?;
    }
    tab.w.into_inner().map_err(|e| Error::data("trajectory", e.to_string()))
}

/// `trajectory_lower.csv`, `trajectory_mean.csv`, `trajectory_upper.csv`.
pub fn write_trajectories(dir: &Path, s: &Scenario, p: &TrainedPipeline) -> Result<Vec<PathBuf>> {
    let bands = scenario::scenario_bands(s, p)?;
    let runs = p.epi.simulate_bands(&bands)?;
    let clinical = Clinical::from(&p.epi.age);
    let mut out = Vec::new();
    for (b, t) in Band::ALL.into_iter().zip(&runs) {
        let path = dir.join(format!("trajectory_{}.csv", b.as_str()));
        write_atomic(&path, &trajectory_table(t, &clinical, &p.epi.params)?)?;
        out.push(path);
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

/// Both selection passes: `pass,name,provenance,coefficient,p_value,kept,reason`.
pub fn write_selection(dir: &Path, p: &TrainedPipeline) -> Result<PathBuf> {
    let mut t = Table::new("selection.csv", ["pass", "name", "provenance", "coefficient", "p_value", "kept", "reason"])?;
    let mut pass = |label: &str, r: &SelectionReport| -> Result<()> {
        for e in &r.entries {
            t.row([
                label.to_string(),
                e.name.clone(),
                serde_plain(&e.provenance)?,
                opt(e.coefficient),
                opt(e.p_value),
                e.kept.to_string(),
                serde_plain(&e.reason)?,
            ])?;
        }
        Ok(())
    };
    pass("weather", &p.features.weather_report)?;
    pass("merged", &p.features.merged_report)?;
    t.save(dir, "selection.csv")
}

fn serde_plain<T: serde::Serialize>(v: &T) -> Result<String> {
    match serde_json::to_value(v)? {
        serde_json::Value::String(s) => Ok(s),
        other => Ok(other.to_string()),
    }
}

/// Historical replay next to the observed targets:
/// `date,target,observed,lower,mean,upper` on the mean R_eff band.
pub fn write_history(dir: &Path, historical: &ScenarioResult, observed: Option<&TargetSeries>) -> Result<PathBuf> {
    let mut t = Table::new("history.csv", ["date", "target", "observed", "lower", "mean", "upper"])?;
    for target in Target::ALL {
        let fc = historical
            .forecasts
            .get(Band::Mean, target)
            .ok_or_else(|| Error::data("history.csv", format!("no {} series", target.as_str())))?;
        for i in 0..fc.len() {
            let date = fc.start_date + Days::new(i as u64);
            let obs = observed
                .and_then(|o| {
                    let k = (date - o.start_date()).num_days();
                    (k >= 0).then(|| o.get(target).get(k as usize).copied()).flatten()
                })
                .map(f)
                .unwrap_or_default();
            t.row([date.to_string(), target.as_str().into(), obs, f(fc.lower[i]), f(fc.mean[i]), f(fc.upper[i])])?;
        }
    }
    t.save(dir, "history.csv")
}

pub fn write_collateral(dir: &Path, rows: &[CollateralRow]) -> Result<PathBuf> {
    let mut t = Table::new("collateral.csv", ["quarter", "stringency", "gdp", "lyl"])?;
    for r in rows {
        t.row([r.quarter.to_string(), f(r.stringency), f(r.gdp), f(r.lyl)])?;
    }
    t.save(dir, "collateral.csv")
}

/// Everything `pansim export` writes for one scenario.
pub fn export_all(
    dir: &Path,
    s: &Scenario,
    art: &Artifacts,
    result: &ScenarioResult,
    historical: &ScenarioResult,
    observed: Option<&TargetSeries>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = write_result(dir, result)?;
    out.extend(write_trajectories(dir, s, &art.pipeline)?);
    out.push(write_selection(dir, &art.pipeline)?);
    out.push(write_history(dir, historical, observed)?);
    Ok(out)
}
