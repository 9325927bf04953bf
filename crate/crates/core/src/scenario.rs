//! Counterfactual and forecast scenarios on top of a trained pipeline.
//!
//! Backwards scenarios (historical, take-one-out, custom NPIs, no
//! mitigation) replay the training window with modified NPI inputs; their
//! predicted R_eff is clamped from below by the historical estimates. Forecast
//! scenarios run past the window with NPIs repeated yearly and, beyond the
//! observed weather, statistically generated weather; they are never clamped.
//! Every run starts from the seeded initial state at the window start.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::Datelike;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::correction::{self, ForecastSet};
use crate::data::{day_offset, Band, NpiSchedule, Target, WeatherSeries};
use crate::fourier::anchor_date;
use crate::pipeline::{self, TrainedPipeline, BUNDLE_VERSION};
use crate::reff::{self, ClampMode, ReffBands};
use crate::seirfv::{self, Clinical};
use crate::{stats, Date, Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Historical,
    TakeOneOut,
    CustomNpis,
    NoMitigation,
    Forecast,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Historical => "historical",
            ScenarioKind::TakeOneOut => "take-one-out",
            ScenarioKind::CustomNpis => "custom-npis",
            ScenarioKind::NoMitigation => "no-mitigation",
            ScenarioKind::Forecast => "forecast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum WeatherSource {
    #[default]
    Historical,
    /// Month climatology plus seeded Gaussian residuals past the observed months.
    Generated { seed: u64 },
}

/// Sets one NPI to `level` on `from..=to` (open ends reach the schedule ends).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpiOverride {
    pub npi: String,
    pub level: f64,
    #[serde(default)]
    pub from: Option<Date>,
    #[serde(default)]
    pub to: Option<Date>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub id: String,
    pub kind: ScenarioKind,
    /// NPIs zeroed over the whole run.
    #[serde(default)]
    pub remove: Vec<String>,
    #[serde(default)]
    pub overrides: Vec<NpiOverride>,
    #[serde(default)]
    pub weather: WeatherSource,
    /// Last simulated day; defaults to the training window end.
    #[serde(default)]
    pub end: Option<Date>,
    /// Defaults to backwards for replay kinds; forecasts are always forward.
    #[serde(default)]
    pub clamp: Option<ClampMode>,
    /// Forecast only: replay the historical R_eff up to the window end.
    #[serde(default)]
    pub warm_start: bool,
}

/// Validation failure of one scenario field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

fn field_error(field: impl Into<String>, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.into(),
    }
}

impl Scenario {
    fn bare(id: &str, kind: ScenarioKind) -> Self {
        Scenario {
            id: id.to_string(),
            kind,
            remove: Vec::new(),
            overrides: Vec::new(),
            weather: WeatherSource::Historical,
            end: None,
            clamp: None,
            warm_start: false,
        }
    }

    pub fn historical(id: &str) -> Self {
        Scenario::bare(id, ScenarioKind::Historical)
    }

    pub fn take_one_out(id: &str, npi: &str) -> Self {
        Scenario {
            remove: vec![npi.to_string()],
            ..Scenario::bare(id, ScenarioKind::TakeOneOut)
        }
    }

    pub fn no_mitigation(id: &str) -> Self {
        Scenario::bare(id, ScenarioKind::NoMitigation)
    }

    pub fn forecast(id: &str, end: Date, weather_seed: u64) -> Self {
        Scenario {
            end: Some(end),
            weather: WeatherSource::Generated { seed: weather_seed },
            ..Scenario::bare(id, ScenarioKind::Forecast)
        }
    }

    pub fn clamp_mode(&self) -> ClampMode {
        match self.kind {
            ScenarioKind::Forecast => ClampMode::Forward,
            _ => self.clamp.unwrap_or(ClampMode::Backwards),
        }
    }

    /// Checks the scenario against the trained NPI set and window; reports
    /// every offending field.
    pub fn validate(&self, npi_names: &[String], window_start: Date, window_end: Date) -> core::result::Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        let known = |n: &str| npi_names.iter().any(|k| k == n);
        for (i, n) in self.remove.iter().enumerate() {
            if !known(n) {
                errs.push(field_error(format!("remove[{i}]"), format!("unknown NPI '{n}'")));
            }
        }
        for (i, o) in self.overrides.iter().enumerate() {
            if !known(&o.npi) {
                errs.push(field_error(format!("overrides[{i}].npi"), format!("unknown NPI '{}'", o.npi)));
            }
            if !(o.level.is_finite() && o.level >= 0.0) {
                errs.push(field_error(format!("overrides[{i}].level"), "level must be finite and >= 0"));
            }
            if let (Some(a), Some(b)) = (o.from, o.to) {
                if b < a {
                    errs.push(field_error(format!("overrides[{i}].to"), "override ends before it starts"));
                }
            }
        }
        let no_edits = |errs: &mut Vec<FieldError>| {
            if !self.remove.is_empty() {
                errs.push(field_error("remove", format!("{} scenarios take no removals", self.kind.as_str())));
            }
            if !self.overrides.is_empty() {
                errs.push(field_error("overrides", format!("{} scenarios take no overrides", self.kind.as_str())));
            }
        };
        match self.kind {
            ScenarioKind::Historical | ScenarioKind::NoMitigation => no_edits(&mut errs),
            ScenarioKind::TakeOneOut => {
                if self.remove.len() != 1 {
                    errs.push(field_error("remove", "take-one-out names exactly one NPI"));
                }
                if !self.overrides.is_empty() {
                    errs.push(field_error("overrides", "take-one-out scenarios take no overrides"));
                }
            }
            ScenarioKind::CustomNpis => {
                if self.remove.is_empty() && self.overrides.is_empty() {
                    errs.push(field_error("overrides", "custom-npis needs at least one removal or override"));
                }
            }
            ScenarioKind::Forecast => {}
        }
        match (self.kind, self.end) {
            (ScenarioKind::Forecast, None) => errs.push(field_error("end", "forecasts need an end date")),
            (ScenarioKind::Forecast, Some(e)) if e <= window_end => {
                errs.push(field_error("end", format!("forecast end must lie after the training window end {window_end}")))
            }
            (ScenarioKind::Forecast, Some(_)) => {}
            (_, Some(e)) if e < window_start || e > window_end => errs.push(field_error(
                "end",
                format!("end must lie within the training window {window_start}..={window_end}"),
            )),
            _ => {}
        }
        if self.kind == ScenarioKind::Forecast && self.clamp == Some(ClampMode::Backwards) {
            errs.push(field_error("clamp", "forecasts are never clamped to history"));
        }
        if self.warm_start && self.kind != ScenarioKind::Forecast {
            errs.push(field_error("warm_start", "warm start applies to forecasts only"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// Zeroes one NPI column; all other cells are untouched.
pub fn take_one_out(base: &NpiSchedule, npi: &str) -> Result<NpiSchedule> {
    base.with_column(npi, &vec![0.0; base.days()])
}

/// Zeroes every NPI column.
pub fn no_mitigation(base: &NpiSchedule) -> NpiSchedule {
    base.with_levels(Matrix::zeros(base.days(), base.npi_names().len()))
}

/// Applies level overrides in order.
pub fn apply_overrides(base: &NpiSchedule, overrides: &[NpiOverride]) -> Result<NpiSchedule> {
    let mut out = base.clone();
    for o in overrides {
        let c = out.index_of_npi(&o.npi)?;
        let mut col = out.levels().column(c);
        for (d, v) in col.iter_mut().enumerate() {
            let day = out.date_at(d);
            if o.from.is_none_or(|f| day >= f) && o.to.is_none_or(|t| day <= t) {
                *v = o.level;
            }
        }
        out = out.with_column(&o.npi, &col)?;
    }
    Ok(out)
}

/// Appends `horizon` generated months to `history`: per calendar month, the
/// historical mean plus a seeded normal draw with the historical standard
/// deviation of that month.
pub fn generate_future_weather(history: &WeatherSeries, horizon: usize, seed: u64) -> Result<WeatherSeries> {
    if history.months() < 24 {
        return Err(Error::invalid(format!(
            "weather generation needs at least 24 months of history, got {}",
            history.months()
        )));
    }
    let vars = history.variables().len();
    // climatology per (calendar month, variable)
    let mut clim = vec![(0.0, 0.0); 12 * vars];
    for m in 0..12 {
        let rows: Vec<usize> = (0..history.months()).filter(|&i| history.month_at(i).month0() as usize == m).collect();
        for v in 0..vars {
            let xs: Vec<f64> = rows.iter().map(|&r| history.values().get(r, v)).collect();
            let sd = if xs.len() > 1 { stats::std_sample(&xs) } else { 0.0 };
            clim[m * vars + v] = (stats::mean(&xs), sd);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extra = Matrix::zeros(horizon, vars);
    for k in 0..horizon {
        let m = history.month_at(history.months() + k).month0() as usize;
        for v in 0..vars {
            let (mu, sd) = clim[m * vars + v];
            let draw = if sd > 0.0 {
                Normal::new(0.0, sd).expect("positive sd").sample(&mut rng)
            } else {
                0.0
            };
            extra.set(k, v, mu + draw);
        }
    }
    history.extended(&extra)
}

/// Source date of a repeated future day: the latest day on or before `end`
/// with the same month and day (29 February maps to 28 February).
fn yearly_source(day: Date, start: Date, end: Date) -> Date {
    let (m, d) = if day.month() == 2 && day.day() == 29 { (2, 28) } else { (day.month(), day.day()) };
    let mut y = end.year();
    loop {
        if let Some(c) = Date::from_ymd_opt(y, m, d) {
            if c <= end {
                return c.max(start);
            }
        }
        y -= 1;
    }
}

/// Extends `history` by `horizon` days, repeating the final year's levels.
pub fn extend_npis_yearly(history: &NpiSchedule, horizon: usize) -> Result<NpiSchedule> {
    if history.days() < 365 {
        return Err(Error::invalid(format!(
            "yearly NPI extension needs at least 365 days of history, got {}",
            history.days()
        )));
    }
    if horizon == 0 {
        return Ok(history.clone());
    }
    let (start, end) = (history.start_date(), history.end_date());
    let mut levels = Matrix::zeros(history.days() + horizon, history.npi_names().len());
    for r in 0..history.days() {
        levels.row_mut(r).copy_from_slice(history.levels().row(r));
    }
    for k in 0..horizon {
        let day = day_offset(end, k as i64 + 1);
        let src = history.index_of_date(yearly_source(day, start, end)).expect("source inside history");
        levels.row_mut(history.days() + k).copy_from_slice(history.levels().row(src));
    }
    NpiSchedule::new(start, history.npi_names().to_vec(), levels)
}

/// NPI schedule over `start..=end` for a scenario.
pub fn scenario_npis(scenario: &Scenario, base: &NpiSchedule, start: Date, end: Date) -> Result<NpiSchedule> {
    let extended = if end > base.end_date() {
        extend_npis_yearly(base, (end - base.end_date()).num_days() as usize)?
    } else {
        base.clone()
    };
    let mut s = extended.window(start, end)?;
    match scenario.kind {
        ScenarioKind::Historical => {}
        ScenarioKind::NoMitigation => s = no_mitigation(&s),
        ScenarioKind::TakeOneOut | ScenarioKind::CustomNpis | ScenarioKind::Forecast => {
            for n in &scenario.remove {
                s = take_one_out(&s, n)?;
            }
            s = apply_overrides(&s, &scenario.overrides)?;
        }
    }
    Ok(s)
}

/// Weather covering `end`, generating months past the observations if the
/// scenario asks for it.
pub fn scenario_weather(source: WeatherSource, history: &WeatherSeries, end: Date) -> Result<WeatherSeries> {
    let last = anchor_date(history.start_month(), history.months().saturating_sub(1));
    if history.months() > 0 && end <= last {
        return Ok(history.clone());
    }
    match source {
        WeatherSource::Historical => Err(Error::Coverage {
            what: "observed weather (use generated weather for forecasts)",
            start: last,
            end,
        }),
        WeatherSource::Generated { seed } => {
            let mut extra = 1;
            while anchor_date(history.start_month(), history.months() + extra - 1) < end {
                extra += 1;
            }
            generate_future_weather(history, extra, seed)
        }
    }
}

/// Raw compartmental output of one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub band: Band,
    pub cumulative_infections: Vec<f64>,
    pub active_infected: Vec<f64>,
    pub cumulative_fatalities: Vec<f64>,
    pub hospital_demand: Vec<f64>,
    pub icu_demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub band: Band,
    /// Peak of the corrected mean infected series.
    pub peak_infected: f64,
    /// Final value of the corrected mean fatality series.
    pub total_fatalities: f64,
    pub peak_hospital_beds: f64,
    pub peak_icu: f64,
    /// Days the raw bed demand exceeds capacity.
    pub hospital_overflow_days: usize,
    pub icu_overflow_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub weather: Option<u64>,
    pub reff: u64,
    pub correction: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub bundle_version: u32,
    pub seeds: Seeds,
    /// Filled in by the caller that hashes scenario and artifacts.
    pub config_hash: String,
    /// Filled in by callers with a clock.
    pub wall_time_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub start_date: Date,
    pub end_date: Date,
    pub clamp: ClampMode,
    pub reff: ReffBands,
    pub forecasts: ForecastSet,
    pub raw: Vec<RawSeries>,
    pub summary: Vec<BandSummary>,
    pub metadata: RunMetadata,
}

impl ScenarioResult {
    pub fn raw_band(&self, band: Band) -> &RawSeries {
        self.raw.iter().find(|r| r.band == band).expect("all bands present")
    }

    /// Copy without the timing field, for bit-level comparisons.
    pub fn without_timing(&self) -> ScenarioResult {
        let mut r = self.clone();
        r.metadata.wall_time_ms = None;
        r
    }
}

fn invalid_scenario(errs: Vec<FieldError>) -> Error {
    let msg: Vec<String> = errs.iter().map(|e| format!("{}: {}", e.field, e.message)).collect();
    Error::invalid(format!("invalid scenario: {}", msg.join("; ")))
}

/// R_eff bands a scenario feeds into the compartmental engine.
pub fn scenario_bands(scenario: &Scenario, pipeline: &TrainedPipeline) -> Result<ReffBands> {
    let start = pipeline.window_start;
    let end = scenario.end.unwrap_or(pipeline.window_end);
    let weather = scenario_weather(scenario.weather, &pipeline.inputs.weather, end)?;
    let npis = scenario_npis(scenario, &pipeline.inputs.npis, start, end)?;
    let fm = pipeline.features.transform(&weather, &npis, start, end)?;
    let predicted = reff::predict_reff(&pipeline.reff, &fm)?;
    let mut bands = reff::clamp_to_historical(&predicted, &pipeline.inputs.reff, scenario.clamp_mode())?;
    if scenario.warm_start {
        let hist_npis = pipeline.inputs.npis.window(start, pipeline.window_end)?;
        let hist_fm = pipeline
            .features
            .transform(&pipeline.inputs.weather, &hist_npis, start, pipeline.window_end)?;
        let hist = pipeline::historical_bands(&pipeline.reff, &hist_fm, &pipeline.inputs.reff)?;
        for b in Band::ALL {
            let dst = match b {
                Band::Lower => &mut bands.lower,
                Band::Mean => &mut bands.mean,
                Band::Upper => &mut bands.upper,
            };
            dst[..hist.len()].copy_from_slice(hist.band(b));
        }
    }
    Ok(bands)
}

/// Full pipeline run for one scenario; a pure function of its inputs.
pub fn run_scenario(scenario: &Scenario, pipeline: &TrainedPipeline) -> Result<ScenarioResult> {
    pipeline.check_version()?;
    scenario
        .validate(&pipeline.features.npi_names, pipeline.window_start, pipeline.window_end)
        .map_err(invalid_scenario)?;
    let bands = scenario_bands(scenario, pipeline)?;
    let trajectories = pipeline.epi.simulate_bands(&bands)?;
    let pairs: Vec<(Band, &seirfv::Trajectory)> = Band::ALL.into_iter().zip(trajectories.iter()).collect();
    let forecasts = correction::correct_all(&pairs, &pipeline.ensembles)?;

    let clinical = Clinical::from(&pipeline.epi.age);
    let mut raw = Vec::with_capacity(3);
    let mut summary = Vec::with_capacity(3);
    for (band, t) in &pairs {
        let hs = seirfv::hospital_series(t, &clinical, &pipeline.epi.params);
        let corrected = |target: Target| &forecasts.get(*band, target).expect("twelve series").mean;
        let peak = |xs: &[f64]| xs.iter().copied().fold(0.0, f64::max);
        summary.push(BandSummary {
            band: *band,
            peak_infected: peak(corrected(Target::Infected)),
            total_fatalities: corrected(Target::Fatal).last().copied().unwrap_or(0.0),
            peak_hospital_beds: peak(corrected(Target::HospitalBeds)),
            peak_icu: peak(corrected(Target::Icu)),
            hospital_overflow_days: hs.bed_overflow_days,
            icu_overflow_days: hs.icu_overflow_days,
        });
        raw.push(RawSeries {
            band: *band,
            cumulative_infections: t.cumulative_infections.clone(),
            active_infected: t.active_infected.clone(),
            cumulative_fatalities: t.cumulative_fatalities.clone(),
            hospital_demand: t.hospital_demand.clone(),
            icu_demand: t.icu_demand.clone(),
        });
    }

    let weather_seed = match scenario.weather {
        WeatherSource::Generated { seed } => Some(seed),
        WeatherSource::Historical => None,
    };
    Ok(ScenarioResult {
        scenario: scenario.clone(),
        start_date: bands.start_date,
        end_date: day_offset(bands.start_date, bands.len() as i64 - 1),
        clamp: scenario.clamp_mode(),
        reff: bands,
        forecasts,
        raw,
        summary,
        metadata: RunMetadata {
            bundle_version: BUNDLE_VERSION,
            seeds: Seeds {
                weather: weather_seed,
                reff: pipeline.reff.lower.model.seed(),
                correction: pipeline.ensembles.first().and_then(|e| e.seeds.first().copied()).unwrap_or(0),
            },
            config_hash: String::new(),
            wall_time_ms: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> Date {
        Date::from_ymd_opt(y, m, day).unwrap()
    }

    fn schedule() -> NpiSchedule {
        synthetic::synthetic_npis(d(2020, 3, 1), 396).unwrap()
    }

    #[test]
    fn take_one_out_zeroes_only_that_column() {
        let s = schedule();
        let t = take_one_out(&s, "Workplace closing").unwrap();
        assert!(t.levels().column(0).iter().all(|v| *v == 0.0));
        for c in 1..3 {
            let (a, b) = (s.levels().column(c), t.levels().column(c));
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(take_one_out(&t, "Workplace closing").unwrap(), t);
        assert!(matches!(take_one_out(&s, "Curfew"), Err(Error::Unknown { .. })));
    }

    #[test]
    fn no_mitigation_is_take_one_out_composition() {
        let s = schedule();
        let mut composed = s.clone();
        for n in s.npi_names() {
            composed = take_one_out(&composed, n).unwrap();
        }
        let nm = no_mitigation(&s);
        assert_eq!(nm, composed);
        assert_eq!(no_mitigation(&nm), nm);
        assert!(nm.levels().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn yearly_extension_examples() {
        let s = schedule(); // 2020-03-01 ..= 2021-03-31
        assert_eq!(extend_npis_yearly(&s, 0).unwrap(), s);
        let e = extend_npis_yearly(&s, 300).unwrap();
        let row = |x: &NpiSchedule, day: Date| x.levels().row(x.index_of_date(day).unwrap()).to_vec();
        assert_eq!(row(&e, d(2021, 12, 24)), row(&s, d(2020, 12, 24)));
        assert_eq!(row(&e, d(2021, 4, 1)), row(&s, d(2020, 4, 1)));
        assert_eq!(yearly_source(d(2024, 2, 29), d(2020, 3, 1), d(2023, 6, 30)), d(2023, 2, 28));
        assert!(extend_npis_yearly(&s.window(d(2020, 3, 1), d(2021, 2, 27)).unwrap(), 5).is_err());
    }

    fn history(values: impl Fn(usize) -> f64) -> WeatherSeries {
        let m = Matrix::from_columns(&[(0..36).map(values).collect()]).unwrap();
        WeatherSeries::new(d(2018, 1, 1), vec!["t".into()], m).unwrap()
    }

    #[test]
    fn zero_variance_history_gives_climatology() {
        let h = history(|i| (i % 12) as f64 * 1.5);
        let g = generate_future_weather(&h, 15, 3).unwrap();
        assert_eq!(g.months(), 51);
        for k in 36..51 {
            assert_eq!(g.values().get(k, 0), (k % 12) as f64 * 1.5);
        }
    }

    #[test]
    fn generated_weather_is_seeded() {
        let h = history(|i| libm::sin(i as f64) * 4.0 + (i % 12) as f64);
        assert_eq!(generate_future_weather(&h, 6, 9).unwrap(), generate_future_weather(&h, 6, 9).unwrap());
        assert_ne!(generate_future_weather(&h, 6, 9).unwrap(), generate_future_weather(&h, 6, 10).unwrap());
        let short = WeatherSeries::new(d(2018, 1, 1), vec!["t".into()], Matrix::zeros(23, 1)).unwrap();
        assert!(generate_future_weather(&short, 1, 0).is_err());
    }

    #[test]
    fn generated_january_matches_climatology() {
        let h = history(|i| libm::sin(i as f64 * 1.7) * 3.0 + 10.0);
        let jan: Vec<f64> = (0..36).step_by(12).map(|i| h.values().get(i, 0)).collect();
        let (mu, sd) = (stats::mean(&jan), stats::std_sample(&jan));
        let draws: Vec<f64> = (0..1000u64)
            .map(|seed| generate_future_weather(&h, 1, seed).unwrap().values().get(36, 0))
            .collect();
        let se = sd / libm::sqrt(1000.0);
        assert!((stats::mean(&draws) - mu).abs() < 3.0 * se);
    }

    #[test]
    fn weather_coverage_rules() {
        let h = history(|i| i as f64);
        // last anchor is 2020-12-15
        assert_eq!(scenario_weather(WeatherSource::Historical, &h, d(2020, 12, 15)).unwrap(), h);
        assert!(matches!(
            scenario_weather(WeatherSource::Historical, &h, d(2020, 12, 16)),
            Err(Error::Coverage { .. })
        ));
        let g = scenario_weather(WeatherSource::Generated { seed: 1 }, &h, d(2021, 2, 16)).unwrap();
        assert_eq!(g.months(), 39);
    }

    #[test]
    fn scenario_validation_names_fields() {
        let names: Vec<String> = synthetic::NPI_NAMES.iter().map(|s| s.to_string()).collect();
        let (ws, we) = (d(2020, 3, 1), d(2021, 3, 31));
        assert!(Scenario::take_one_out("a", "Facial coverings").validate(&names, ws, we).is_ok());
        let errs = Scenario::take_one_out("a", "Curfew").validate(&names, ws, we).unwrap_err();
        assert_eq!(errs[0].field, "remove[0]");
        let mut two = Scenario::take_one_out("a", "Facial coverings");
        two.remove.push("Workplace closing".into());
        assert_eq!(two.validate(&names, ws, we).unwrap_err()[0].field, "remove");
        let mut f = Scenario::forecast("f", d(2021, 1, 1), 0);
        assert_eq!(f.validate(&names, ws, we).unwrap_err()[0].field, "end");
        f.end = Some(d(2021, 12, 31));
        f.clamp = Some(ClampMode::Backwards);
        assert_eq!(f.validate(&names, ws, we).unwrap_err()[0].field, "clamp");
        let mut h = Scenario::historical("h");
        h.warm_start = true;
        assert_eq!(h.validate(&names, ws, we).unwrap_err()[0].field, "warm_start");
        assert_eq!(Scenario::forecast("f", d(2021, 6, 1), 0).clamp_mode(), ClampMode::Forward);
    }

    #[test]
    fn overrides_respect_dates() {
        let s = schedule();
        let o = NpiOverride {
            npi: "Facial coverings".into(),
            level: 4.0,
            from: Some(d(2020, 3, 3)),
            to: Some(d(2020, 3, 4)),
        };
        let t = apply_overrides(&s, &[o]).unwrap();
        assert_eq!(&t.levels().column(1)[..6], &[0.0, 0.0, 4.0, 4.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn take_one_out_preserves_other_columns(col in 0usize..3, seed in 0u64..1000) {
            let mut levels = Matrix::zeros(40, 3);
            let mut x = seed;
            for r in 0..40 {
                for c in 0..3 {
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    levels.set(r, c, (x >> 61) as f64);
                }
            }
            let names: Vec<String> = synthetic::NPI_NAMES.iter().map(|s| s.to_string()).collect();
            let s = NpiSchedule::new(d(2020, 1, 1), names.clone(), levels).unwrap();
            let t = take_one_out(&s, &names[col]).unwrap();
            for c in 0..3 {
                let (a, b) = (s.levels().column(c), t.levels().column(c));
                if c == col {
                    prop_assert!(b.iter().all(|v| *v == 0.0));
                } else {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }
}
