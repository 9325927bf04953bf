//! First learned stage: daily R_eff bands from the feature matrix.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{check_bands, day_offset, Band, ReffEstimates};
use crate::features::FeatureMatrix;
use crate::neural::{self, MlpModel, TrainConfig};
use crate::{stats, Date, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReffConfig {
    /// Hidden layer widths; three hidden layers plus the output make four weight layers.
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Base seed; band `b` uses `seed + b`.
    pub seed: u64,
}

impl Default for ReffConfig {
    fn default() -> Self {
        ReffConfig {
            hidden: alloc::vec![32, 32, 32],
            train: TrainConfig::default(),
            seed: 17,
        }
    }
}

impl ReffConfig {
    pub fn layer_sizes(&self, inputs: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(inputs);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(1);
        sizes
    }

    pub fn band_seed(&self, band: Band) -> u64 {
        self.seed.wrapping_add(band as u64)
    }
}

/// A single-output network with target standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledRegressor {
    pub model: MlpModel,
    pub target_shift: f64,
    pub target_scale: f64,
    pub validation_r2: Option<f64>,
    pub validation_loss: f64,
}

impl ScaledRegressor {
    /// Trains `layer_sizes` on `(x, y)` with `y` standardised internally.
    /// `seed` drives both initialisation and the train/validation split.
    pub fn train(x: &crate::Matrix, y: &[f64], layer_sizes: &[usize], train: &TrainConfig, seed: u64) -> Result<Self> {
        let shift = stats::mean(y);
        let sd = stats::std_population(y);
        let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - shift) / scale).collect();
        let init = MlpModel::init(layer_sizes, seed)?;
        let cfg = TrainConfig {
            seed,
            ..train.clone()
        };
        let outcome = neural::train(&init, x, &ys, &cfg)?;
        let validation_r2 = neural::validation_r_squared(&outcome, x, &ys)?;
        let validation_loss = outcome.best_validation_loss() * scale * scale;
        Ok(ScaledRegressor {
            model: outcome.model,
            target_shift: shift,
            target_scale: scale,
            validation_r2,
            validation_loss,
        })
    }

    pub fn predict(&self, x: &crate::Matrix) -> Result<Vec<f64>> {
        Ok(self
            .model
            .predict_column(x)?
            .into_iter()
            .map(|v| v * self.target_scale + self.target_shift)
            .collect())
    }
}

/// Three independently trained band regressors sharing one feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReffRegressorSet {
    pub lower: ScaledRegressor,
    pub mean: ScaledRegressor,
    pub upper: ScaledRegressor,
    pub feature_names: Vec<String>,
    pub scaling_fingerprint: u64,
}

impl ReffRegressorSet {
    pub fn band(&self, band: Band) -> &ScaledRegressor {
        match band {
            Band::Lower => &self.lower,
            Band::Mean => &self.mean,
            Band::Upper => &self.upper,
        }
    }

    pub fn validation_r2(&self) -> [Option<f64>; 3] {
        [self.lower.validation_r2, self.mean.validation_r2, self.upper.validation_r2]
    }

    pub fn from_bands(features: &FeatureMatrix, lower: ScaledRegressor, mean: ScaledRegressor, upper: ScaledRegressor) -> Result<Self> {
        for r in [&lower, &mean, &upper] {
            if r.model.input_width() != features.feature_names.len() {
                return Err(Error::Shape {
                    what: "R_eff regressor input width",
                    expected: features.feature_names.len(),
                    found: r.model.input_width(),
                });
            }
        }
        Ok(ReffRegressorSet {
            lower,
            mean,
            upper,
            feature_names: features.feature_names.clone(),
            scaling_fingerprint: features.scaling.fingerprint(),
        })
    }
}

/// Targets of one band aligned to the feature window.
pub fn aligned_targets(features: &FeatureMatrix, targets: &ReffEstimates, band: Band) -> Result<Vec<f64>> {
    let end = day_offset(features.start_date, features.days() as i64 - 1);
    Ok(targets.window(features.start_date, end)?.band(band).to_vec())
}

/// Trains the regressor for one band.
pub fn train_band(features: &FeatureMatrix, targets: &ReffEstimates, band: Band, config: &ReffConfig) -> Result<ScaledRegressor> {
    let y = aligned_targets(features, targets, band)?;
    ScaledRegressor::train(
        &features.values,
        &y,
        &config.layer_sizes(features.feature_names.len()),
        &config.train,
        config.band_seed(band),
    )
}

/// Trains all three band regressors sequentially.
pub fn train_reff(features: &FeatureMatrix, targets: &ReffEstimates, config: &ReffConfig) -> Result<ReffRegressorSet> {
    let lower = train_band(features, targets, Band::Lower, config)?;
    let mean = train_band(features, targets, Band::Mean, config)?;
    let upper = train_band(features, targets, Band::Upper, config)?;
    ReffRegressorSet::from_bands(features, lower, mean, upper)
}

/// Daily predicted R_eff bands; non-negative and ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReffBands {
    pub start_date: Date,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ReffBands {
    pub fn band(&self, band: Band) -> &[f64] {
        match band {
            Band::Lower => &self.lower,
            Band::Mean => &self.mean,
            Band::Upper => &self.upper,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        check_bands(self.start_date, &self.lower, &self.mean, &self.upper)
    }
}

fn check_provenance(set: &ReffRegressorSet, features: &FeatureMatrix) -> Result<()> {
    if set.feature_names != features.feature_names {
        return Err(Error::FeatureMismatch(alloc::format!(
            "regressors expect {:?}, got {:?}",
            set.feature_names,
            features.feature_names
        )));
    }
    if set.scaling_fingerprint != features.scaling.fingerprint() {
        return Err(Error::FeatureMismatch("feature scaling differs from the training scaling".into()));
    }
    Ok(())
}

/// Raw per-band network outputs before clamping and ordering repair.
pub fn predict_unclamped(set: &ReffRegressorSet, features: &FeatureMatrix) -> Result<[Vec<f64>; 3]> {
    check_provenance(set, features)?;
    Ok([
        set.lower.predict(&features.values)?,
        set.mean.predict(&features.values)?,
        set.upper.predict(&features.values)?,
    ])
}

/// Per-day predictions clamped at zero with the three values sorted so that
/// lower ≤ mean ≤ upper.
pub fn predict_reff(set: &ReffRegressorSet, features: &FeatureMatrix) -> Result<ReffBands> {
    let [l, m, u] = predict_unclamped(set, features)?;
    Ok(repair_bands(features.start_date, &l, &m, &u))
}

pub(crate) fn repair_bands(start_date: Date, l: &[f64], m: &[f64], u: &[f64]) -> ReffBands {
    let n = m.len();
    let (mut lower, mut mean, mut upper) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let mut v = [l[i].max(0.0), m[i].max(0.0), u[i].max(0.0)];
        v.sort_by(f64::total_cmp);
        lower.push(v[0]);
        mean.push(v[1]);
        upper.push(v[2]);
    }
    ReffBands {
        start_date,
        lower,
        mean,
        upper,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampMode {
    /// Counterfactual analysis of the past: R_eff may not fall below history.
    Backwards,
    /// Forecasting: predictions are used as-is.
    Forward,
}

/// Backwards mode takes the band-wise maximum of prediction and historical
/// estimate on every day; forward mode returns the input unchanged.
pub fn clamp_to_historical(predicted: &ReffBands, historical: &ReffEstimates, mode: ClampMode) -> Result<ReffBands> {
    match mode {
        ClampMode::Forward => Ok(predicted.clone()),
        ClampMode::Backwards => {
            if predicted.is_empty() {
                return Ok(predicted.clone());
            }
            let end = day_offset(predicted.start_date, predicted.len() as i64 - 1);
            let hist = historical.window(predicted.start_date, end)?;
            let lift = |band: Band| -> Vec<f64> {
                predicted
                    .band(band)
                    .iter()
                    .zip(hist.band(band))
                    .map(|(p, h)| p.max(*h))
                    .collect()
            };
            Ok(ReffBands {
                start_date: predicted.start_date,
                lower: lift(Band::Lower),
                mean: lift(Band::Mean),
                upper: lift(Band::Upper),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn d(y: i32, m: u32, day: u32) -> Date {
        Date::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn repair_sorts_and_clamps() {
        let b = repair_bands(d(2020, 3, 1), &[1.2, -0.5], &[1.0, 0.3], &[0.9, 0.4]);
        assert_eq!(b.lower, vec![0.9, 0.0]);
        assert_eq!(b.mean, vec![1.0, 0.3]);
        assert_eq!(b.upper, vec![1.2, 0.4]);
        b.check().unwrap();
    }

    #[test]
    fn backwards_clamp_lifts_to_history() {
        let start = d(2020, 3, 1);
        let pred = ReffBands {
            start_date: start,
            lower: vec![0.7, 1.0],
            mean: vec![0.8, 1.1],
            upper: vec![0.9, 1.2],
        };
        let hist = ReffEstimates::new(start, vec![0.8, 0.5], vec![0.9, 0.6], vec![1.0, 0.7]).unwrap();
        let c = clamp_to_historical(&pred, &hist, ClampMode::Backwards).unwrap();
        assert_eq!(c.mean, vec![0.9, 1.1]);
        assert_eq!(c.lower, vec![0.8, 1.0]);
        assert_eq!(c.upper, vec![1.0, 1.2]);
        assert_eq!(clamp_to_historical(&pred, &hist, ClampMode::Forward).unwrap(), pred);
    }

    #[test]
    fn backwards_clamp_needs_overlap() {
        let pred = ReffBands {
            start_date: d(2020, 3, 1),
            lower: vec![1.0; 3],
            mean: vec![1.0; 3],
            upper: vec![1.0; 3],
        };
        let hist = ReffEstimates::new(d(2020, 3, 2), vec![0.5; 3], vec![0.6; 3], vec![0.7; 3]).unwrap();
        assert!(matches!(
            clamp_to_historical(&pred, &hist, ClampMode::Backwards),
            Err(Error::Coverage { .. })
        ));
    }
}
