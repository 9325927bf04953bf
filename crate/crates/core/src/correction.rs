//! Third stage: ensembles of small MLPs mapping raw compartmental output to
//! historical-scale series, with confidence bands from the member spread.
//!
//! Inputs per day are the raw active infected, cumulative fatalities, bed and
//! ICU demand, their trailing 7-day means, and a sine/cosine day-of-year
//! encoding. Count columns enter as `ln(1 + x)` so that counterfactual runs
//! orders of magnitude above the training range stay in a sane input range;
//! all columns are then standardised with parameters stored in the ensemble.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::data::{day_offset, Band};
pub use crate::data::{Target, TargetSeries};
use crate::features::Scaling;
use crate::neural::TrainConfig;
use crate::reff::ScaledRegressor;
use crate::seirfv::Trajectory;
use crate::{stats, Date, Error, Matrix, Result};

/// Bumped whenever the input layout changes.
pub const FEATURE_VERSION: u32 = 1;

pub const FEATURE_NAMES: [&str; 10] = [
    "infected",
    "fatal",
    "hospital_beds",
    "icu",
    "infected_ma7",
    "fatal_ma7",
    "hospital_beds_ma7",
    "icu_ma7",
    "doy_sin",
    "doy_cos",
];

const WINDOW: usize = 7;

/// Trailing mean over up to `WINDOW` days (fewer at the start).
pub fn rolling_mean(xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            let w = &xs[(i + 1).saturating_sub(WINDOW)..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Seasonal encoding with a 365-day period on the calendar day of year.
pub fn day_of_year_encoding(date: Date) -> (f64, f64) {
    let ang = 2.0 * PI * date.ordinal0() as f64 / 365.0;
    (libm::sin(ang), libm::cos(ang))
}

/// Unscaled input matrix (rows = trajectory days, columns = [`FEATURE_NAMES`]).
pub fn raw_correction_features(trajectory: &Trajectory) -> Result<Matrix> {
    let n = trajectory.days();
    if n == 0 {
        return Err(Error::invalid("correction inputs need a non-empty trajectory"));
    }
    let base = [
        &trajectory.active_infected,
        &trajectory.cumulative_fatalities,
        &trajectory.hospital_demand,
        &trajectory.icu_demand,
    ];
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(FEATURE_NAMES.len());
    for s in base {
        cols.push(s.iter().map(|v| libm::log1p(v.max(0.0))).collect());
    }
    for s in base {
        cols.push(rolling_mean(s).iter().map(|v| libm::log1p(v.max(0.0))).collect());
    }
    let (sin, cos): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|d| day_of_year_encoding(day_offset(trajectory.start_date, d as i64)))
        .unzip();
    cols.push(sin);
    cols.push(cos);
    Matrix::from_columns(&cols)
}

fn feature_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Input layout and stored standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFeatures {
    pub version: u32,
    pub scaling: Scaling,
}

impl CorrectionFeatures {
    pub fn fit(trajectory: &Trajectory) -> Result<Self> {
        let raw = raw_correction_features(trajectory)?;
        Ok(CorrectionFeatures {
            version: FEATURE_VERSION,
            scaling: Scaling::fit(&feature_names(), &raw)?,
        })
    }
}

/// Scaled per-day inputs for a trajectory.
pub fn build_correction_inputs(trajectory: &Trajectory, spec: &CorrectionFeatures) -> Result<Matrix> {
    if spec.version != FEATURE_VERSION {
        return Err(Error::FeatureMismatch(format!(
            "correction feature version {} is not supported (expected {FEATURE_VERSION})",
            spec.version
        )));
    }
    let raw = raw_correction_features(trajectory)?;
    spec.scaling.apply(&feature_names(), &raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandMethod {
    /// μ ± z·s with the two-sided normal quantile z.
    #[default]
    Normal,
    /// Empirical member quantiles, linearly interpolated.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetLevels {
    pub infected: f64,
    pub fatal: f64,
    pub hospital_beds: f64,
    pub icu: f64,
}

impl Default for TargetLevels {
    fn default() -> Self {
        TargetLevels {
            infected: Target::Infected.default_level(),
            fatal: Target::Fatal.default_level(),
            hospital_beds: Target::HospitalBeds.default_level(),
            icu: Target::Icu.default_level(),
        }
    }
}

impl TargetLevels {
    pub fn get(&self, target: Target) -> f64 {
        match target {
            Target::Infected => self.infected,
            Target::Fatal => self.fatal,
            Target::HospitalBeds => self.hospital_beds,
            Target::Icu => self.icu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    pub members: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub seed: u64,
    pub levels: TargetLevels,
    pub method: BandMethod,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            members: 10,
            hidden: vec![32, 32, 32],
            train: TrainConfig::default(),
            seed: 101,
            levels: TargetLevels::default(),
            method: BandMethod::Normal,
        }
    }
}

impl CorrectionConfig {
    /// First member seed of `target`; members use `seed₀ + i`.
    pub fn base_seed(&self, target: Target) -> u64 {
        let t = Target::ALL.iter().position(|&x| x == target).expect("listed target") as u64;
        self.seed.wrapping_add(1000 * t)
    }

    pub fn member_seed(&self, target: Target, index: usize) -> u64 {
        self.base_seed(target).wrapping_add(index as u64)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![FEATURE_NAMES.len()];
        s.extend_from_slice(&self.hidden);
        s.push(1);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.members == 0 {
            return Err(Error::invalid("correction ensembles need at least one member"));
        }
        for t in Target::ALL {
            let l = self.levels.get(t);
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::invalid(format!("band level for {} must lie in (0, 1), got {l}", t.as_str())));
            }
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEnsemble {
    pub target: Target,
    pub level: f64,
    pub method: BandMethod,
    pub seeds: Vec<u64>,
    pub members: Vec<ScaledRegressor>,
    pub features: CorrectionFeatures,
}

/// Trains member `index` of the `target` ensemble.
pub fn train_member(inputs: &Matrix, target_values: &[f64], target: Target, config: &CorrectionConfig, index: usize) -> Result<ScaledRegressor> {
    ScaledRegressor::train(
        inputs,
        target_values,
        &config.layer_sizes(),
        &config.train,
        config.member_seed(target, index),
    )
}

/// Assembles independently trained members into an ensemble.
pub fn ensemble_from_members(target: Target, config: &CorrectionConfig, features: CorrectionFeatures, members: Vec<ScaledRegressor>) -> Result<CorrectionEnsemble> {
    if members.is_empty() {
        return Err(Error::invalid("empty correction ensemble"));
    }
    let arch = members[0].model.layer_sizes().to_vec();
    if members.iter().any(|m| m.model.layer_sizes() != arch.as_slice()) {
        return Err(Error::invalid("ensemble members must share one architecture"));
    }
    Ok(CorrectionEnsemble {
        target,
        level: config.levels.get(target),
        method: config.method,
        seeds: (0..members.len()).map(|i| config.member_seed(target, i)).collect(),
        members,
        features,
    })
}

/// Trains `config.members` networks sequentially.
pub fn train_ensemble(inputs: &Matrix, target_values: &[f64], target: Target, features: CorrectionFeatures, config: &CorrectionConfig) -> Result<CorrectionEnsemble> {
    config.validate()?;
    let members = (0..config.members)
        .map(|i| train_member(inputs, target_values, target, config, i))
        .collect::<Result<Vec<_>>>()?;
    ensemble_from_members(target, config, features, members)
}

/// Per-day member predictions, one vector per member.
pub fn member_predictions(ensemble: &CorrectionEnsemble, inputs: &Matrix) -> Result<Vec<Vec<f64>>> {
    ensemble.members.iter().map(|m| m.predict(inputs)).collect()
}

/// Ensemble mean per day.
pub fn ensemble_mean(ensemble: &CorrectionEnsemble, inputs: &Matrix) -> Result<Vec<f64>> {
    let preds = member_predictions(ensemble, inputs)?;
    Ok((0..inputs.rows())
        .map(|d| preds.iter().map(|p| p[d]).sum::<f64>() / preds.len() as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleForecast {
    pub target: Target,
    pub level: f64,
    pub start_date: Date,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl EnsembleForecast {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Whether `0 ≤ lower ≤ mean ≤ upper` holds on every day.
    pub fn is_ordered(&self) -> bool {
        (0..self.len()).all(|d| 0.0 <= self.lower[d] && self.lower[d] <= self.mean[d] && self.mean[d] <= self.upper[d])
    }

    /// Fraction of days on which `observed` lies inside the band.
    pub fn coverage(&self, observed: &[f64]) -> f64 {
        let n = self.len().min(observed.len());
        if n == 0 {
            return 0.0;
        }
        let inside = (0..n).filter(|&d| self.lower[d] <= observed[d] && observed[d] <= self.upper[d]).count();
        inside as f64 / n as f64
    }
}

/// Band statistics of one day's member predictions.
pub fn band_from_samples(samples: &[f64], level: f64, method: BandMethod) -> (f64, f64, f64) {
    let mu = stats::mean(samples);
    let (lo, hi) = match method {
        BandMethod::Normal => {
            let s = if samples.len() > 1 { stats::std_sample(samples) } else { 0.0 };
            let z = stats::two_sided_z(level);
            (mu - z * s, mu + z * s)
        }
        BandMethod::Empirical => {
            let mut v = samples.to_vec();
            v.sort_by(f64::total_cmp);
            (quantile(&v, (1.0 - level) / 2.0), quantile(&v, (1.0 + level) / 2.0))
        }
    };
    let mean = mu.max(0.0);
    (lo.clamp(0.0, mean), mean, hi.max(mean))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Corrected series with a band at `level`.
pub fn correct(ensemble: &CorrectionEnsemble, inputs: &Matrix, start_date: Date, level: f64) -> Result<EnsembleForecast> {
    if ensemble.members.is_empty() {
        return Err(Error::invalid("empty correction ensemble"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("band level must lie in (0, 1), got {level}")));
    }
    let preds = member_predictions(ensemble, inputs)?;
    let n = inputs.rows();
    let mut out = EnsembleForecast {
        target: ensemble.target,
        level,
        start_date,
        mean: Vec::with_capacity(n),
        lower: Vec::with_capacity(n),
        upper: Vec::with_capacity(n),
    };
    let mut day = vec![0.0; preds.len()];
    for d in 0..n {
        for (slot, p) in day.iter_mut().zip(&preds) {
            *slot = p[d];
        }
        let (lo, mu, hi) = band_from_samples(&day, level, ensemble.method);
        out.lower.push(lo);
        out.mean.push(mu);
        out.upper.push(hi);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandForecast {
    pub band: Band,
    #[serde(flatten)]
    pub forecast: EnsembleForecast,
}

/// Corrected series for every (R_eff band, target) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub series: Vec<BandForecast>,
}

impl ForecastSet {
    pub fn get(&self, band: Band, target: Target) -> Option<&EnsembleForecast> {
        self.series
            .iter()
            .find(|s| s.band == band && s.forecast.target == target)
            .map(|s| &s.forecast)
    }
}

/// Applies every ensemble to the trajectory of every band at the ensemble's
/// configured level.
pub fn correct_all(trajectories: &[(Band, &Trajectory)], ensembles: &[CorrectionEnsemble]) -> Result<ForecastSet> {
    let mut series = Vec::with_capacity(12);
    for band in Band::ALL {
        let traj = trajectories
            .iter()
            .find(|(b, _)| *b == band)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::invalid(format!("missing {} band trajectory", band.as_str())))?;
        for target in Target::ALL {
            let ens = ensembles
                .iter()
                .find(|e| e.target == target)
                .ok_or_else(|| Error::invalid(format!("missing correction ensemble for {}", target.as_str())))?;
            let inputs = build_correction_inputs(traj, &ens.features)?;
            series.push(BandForecast {
                band,
                forecast: correct(ens, &inputs, traj.start_date, ens.level)?,
            });
        }
    }
    Ok(ForecastSet { series })
}
