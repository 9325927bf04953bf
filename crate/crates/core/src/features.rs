//! Daily feature matrix construction: Fourier-upsampled weather, power/log
//! engineered weather columns, NPI levels, OLS significance filtering and
//! standardisation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{NpiSchedule, WeatherSeries};
use crate::{fourier, stats, Date, Error, Matrix, Result};

/// Origin of a feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    WeatherRaw,
    WeatherEngineered,
    Npi,
}

/// Per-feature standardisation `(x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub names: Vec<String>,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    /// Fits mean/population-std per column; constant columns get scale 1.
    pub fn fit(names: &[String], m: &Matrix) -> Result<Self> {
        if names.len() != m.cols() {
            return Err(Error::Shape {
                what: "feature name count",
                expected: m.cols(),
                found: names.len(),
            });
        }
        let mut shift = Vec::with_capacity(m.cols());
        let mut scale = Vec::with_capacity(m.cols());
        for c in 0..m.cols() {
            let col = m.column(c);
            let mu = stats::mean(&col);
            let sd = stats::std_population(&col);
            shift.push(mu);
            scale.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Ok(Scaling {
            names: names.to_vec(),
            shift,
            scale,
        })
    }

    /// Applies stored parameters; never re-fits.
    pub fn apply(&self, names: &[String], m: &Matrix) -> Result<Matrix> {
        if names != self.names.as_slice() {
            return Err(Error::FeatureMismatch(format!(
                "expected columns {:?}, got {:?}",
                self.names, names
            )));
        }
        let mut out = m.clone();
        for r in 0..m.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.shift[c]) / self.scale[c];
            }
        }
        Ok(out)
    }

    pub fn invert(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.names.len() {
            return Err(Error::Shape {
                what: "scaled column count",
                expected: self.names.len(),
                found: m.cols(),
            });
        }
        let mut out = m.clone();
        for r in 0..m.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.scale[c] + self.shift[c];
            }
        }
        Ok(out)
    }

    /// Stable fingerprint of names and parameters, used to link trained
    /// models to the scaling they expect.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for ((n, s), k) in self.names.iter().zip(&self.shift).zip(&self.scale) {
            h.write(n.as_bytes());
            h.write(&[0xff]);
            h.write(&s.to_bits().to_le_bytes());
            h.write(&k.to_bits().to_le_bytes());
        }
        h.finish()
    }
}

pub(crate) struct Fnv(u64);

impl Fnv {
    pub(crate) fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// Scaled daily feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub start_date: Date,
    pub feature_names: Vec<String>,
    pub values: Matrix,
    pub scaling: Scaling,
    pub provenance: Vec<Provenance>,
}

impl FeatureMatrix {
    pub fn days(&self) -> usize {
        self.values.rows()
    }
}

/// Standardises every column and records the parameters.
pub fn scale_features(names: &[String], m: &Matrix, provenance: &[Provenance], start_date: Date) -> Result<FeatureMatrix> {
    let scaling = Scaling::fit(names, m)?;
    let values = scaling.apply(names, m)?;
    Ok(FeatureMatrix {
        start_date,
        feature_names: names.to_vec(),
        values,
        scaling,
        provenance: provenance.to_vec(),
    })
}

/// Re-applies stored scaling parameters to new data with the same columns.
pub fn apply_scaling(m: &Matrix, names: &[String], scaling: &Scaling) -> Result<Matrix> {
    scaling.apply(names, m)
}

/// Which engineered transforms to append per weather column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSet {
    pub square: bool,
    pub cube: bool,
    pub log: bool,
}

impl Default for TransformSet {
    fn default() -> Self {
        TransformSet {
            square: true,
            cube: true,
            log: true,
        }
    }
}

/// Fitted engineering step: remembers the log shift of each base column so
/// the same transform can be replayed on scenario data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Engineering {
    pub base: Vec<String>,
    pub log_shift: Vec<f64>,
    pub transforms: TransformSet,
}

impl Engineering {
    pub fn fit(base: &[String], m: &Matrix, transforms: TransformSet) -> Result<Self> {
        if base.len() != m.cols() {
            return Err(Error::Shape {
                what: "engineering base columns",
                expected: m.cols(),
                found: base.len(),
            });
        }
        let log_shift = (0..m.cols())
            .map(|c| m.column(c).into_iter().fold(f64::INFINITY, f64::min))
            .map(|mn| if mn.is_finite() { mn } else { 0.0 })
            .collect();
        Ok(Engineering {
            base: base.to_vec(),
            log_shift,
            transforms,
        })
    }

    pub fn output_names(&self) -> Vec<String> {
        let mut names = self.base.clone();
        for b in &self.base {
            if self.transforms.square {
                names.push(format!("{b}_pow2"));
            }
            if self.transforms.cube {
                names.push(format!("{b}_pow3"));
            }
            if self.transforms.log {
                names.push(format!("{b}_log"));
            }
        }
        names
    }

    pub fn output_provenance(&self) -> Vec<Provenance> {
        let n = self.output_names().len();
        (0..n)
            .map(|i| {
                if i < self.base.len() {
                    Provenance::WeatherRaw
                } else {
                    Provenance::WeatherEngineered
                }
            })
            .collect()
    }

    /// Originals followed by `_pow2`, `_pow3`, `_log` per base column.
    ///
    /// The log column is `ln(x - min + 1)` with the minimum taken from the
    /// fitting data; values below that minimum saturate at `ln 1 = 0`.
    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.base.len() {
            return Err(Error::Shape {
                what: "engineering input columns",
                expected: self.base.len(),
                found: m.cols(),
            });
        }
        let mut cols = m.columns();
        let base = cols.clone();
        for (c, x) in base.iter().enumerate() {
            if self.transforms.square {
                cols.push(x.iter().map(|v| v * v).collect());
            }
            if self.transforms.cube {
                cols.push(x.iter().map(|v| v * v * v).collect());
            }
            if self.transforms.log {
                let s = self.log_shift[c];
                cols.push(x.iter().map(|v| libm::log((v - s).max(0.0) + 1.0)).collect());
            }
        }
        if cols.is_empty() {
            return Ok(Matrix::zeros(m.rows(), 0));
        }
        Matrix::from_columns(&cols)
    }
}

/// Convenience: fit and apply the engineering step in one call.
pub fn engineer_features(names: &[String], m: &Matrix, transforms: TransformSet) -> Result<(Vec<String>, Matrix)> {
    let eng = Engineering::fit(names, m, transforms)?;
    Ok((eng.output_names(), eng.apply(m)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NpiDecision {
    Keep,
    Drop,
}

/// Manual keep/drop decision per NPI, overriding significance testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpiPolicy {
    pub decisions: BTreeMap<String, NpiDecision>,
    /// Decision for NPIs not listed.
    pub default: NpiDecision,
}

impl NpiPolicy {
    pub fn decide(&self, npi: &str) -> NpiDecision {
        self.decisions.get(npi).copied().unwrap_or(self.default)
    }
}

/// NPIs kept regardless of significance.
pub const DEFAULT_KEEP: [&str; 11] = [
    "School closing",
    "Workplace closing",
    "Cancel public events",
    "Restrictions on gatherings",
    "Stay at home requirements",
    "Facial coverings",
    "Close public transport",
    "Restrictions on internal movement",
    "International travel controls",
    "Testing policy",
    "Contact tracing",
];

/// Economic support measures excluded from the R_eff model.
pub const DEFAULT_DROP: [&str; 3] = ["Fiscal measures", "Debt/contract relief", "Income support"];

impl Default for NpiPolicy {
    fn default() -> Self {
        let mut decisions = BTreeMap::new();
        for n in DEFAULT_KEEP {
            decisions.insert(n.to_string(), NpiDecision::Keep);
        }
        for n in DEFAULT_DROP {
            decisions.insert(n.to_string(), NpiDecision::Drop);
        }
        NpiPolicy {
            decisions,
            default: NpiDecision::Keep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionReason {
    Significant,
    WhitelistKeep,
    ManualDrop,
    Insignificant,
    Collinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub name: String,
    pub provenance: Provenance,
    pub p_value: Option<f64>,
    pub coefficient: Option<f64>,
    pub kept: bool,
    pub reason: SelectionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub alpha: f64,
    pub entries: Vec<SelectionEntry>,
    /// R² of the OLS re-fit on the kept features.
    pub r_squared: Option<f64>,
}

impl SelectionReport {
    pub fn kept_names(&self) -> Vec<String> {
        self.entries.iter().filter(|e| e.kept).map(|e| e.name.clone()).collect()
    }
}

/// Unscaled candidate columns with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub names: Vec<String>,
    pub provenance: Vec<Provenance>,
    pub values: Matrix,
}

impl Candidates {
    pub fn new(names: Vec<String>, provenance: Vec<Provenance>, values: Matrix) -> Result<Self> {
        if names.len() != values.cols() || provenance.len() != values.cols() {
            return Err(Error::Shape {
                what: "candidate column metadata",
                expected: values.cols(),
                found: names.len().min(provenance.len()),
            });
        }
        Ok(Candidates {
            names,
            provenance,
            values,
        })
    }

    pub fn select(&self, idx: &[usize]) -> Candidates {
        Candidates {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
            values: self.values.select_columns(idx),
        }
    }
}

/// OLS significance filter.
///
/// Fits the target on all candidates, then keeps non-NPI columns with
/// two-sided p ≤ `alpha` and decides NPI columns solely by `policy`. Non-NPI
/// columns that are perfectly collinear with earlier columns are dropped.
/// The report carries the R² of a re-fit on the survivors.
pub fn select_columns(candidates: &Candidates, target: &[f64], alpha: f64, policy: &NpiPolicy) -> Result<(Vec<usize>, SelectionReport)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let fit = stats::ols(&candidates.values, target)?;
    let mut kept = Vec::new();
    let mut entries = Vec::with_capacity(candidates.names.len());
    for (i, name) in candidates.names.iter().enumerate() {
        let coef = fit.coefficients[i];
        let prov = candidates.provenance[i];
        let (keep, reason) = match (prov, coef) {
            (Provenance::Npi, _) => match policy.decide(name) {
                NpiDecision::Keep => (true, SelectionReason::WhitelistKeep),
                NpiDecision::Drop => (false, SelectionReason::ManualDrop),
            },
            (_, None) => (false, SelectionReason::Collinear),
            (_, Some(c)) if c.p_value <= alpha => (true, SelectionReason::Significant),
            (_, Some(_)) => (false, SelectionReason::Insignificant),
        };
        if keep {
            kept.push(i);
        }
        entries.push(SelectionEntry {
            name: name.clone(),
            provenance: prov,
            p_value: coef.map(|c| c.p_value),
            coefficient: coef.map(|c| c.estimate),
            kept: keep,
            reason,
        });
    }
    let r_squared = if kept.is_empty() {
        Some(0.0)
    } else {
        stats::ols(&candidates.values.select_columns(&kept), target)?.r_squared
    };
    Ok((
        kept,
        SelectionReport {
            alpha,
            entries,
            r_squared,
        },
    ))
}

/// [`select_columns`] followed by standardisation of the survivors.
pub fn select_features(
    candidates: &Candidates,
    target: &[f64],
    alpha: f64,
    policy: &NpiPolicy,
    start_date: Date,
) -> Result<(FeatureMatrix, SelectionReport)> {
    let (kept, report) = select_columns(candidates, target, alpha, policy)?;
    let sel = candidates.select(&kept);
    let fm = scale_features(&sel.names, &sel.values, &sel.provenance, start_date)?;
    Ok((fm, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub alpha: f64,
    pub transforms: TransformSet,
    pub npi_policy: NpiPolicy,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            alpha: 0.05,
            transforms: TransformSet::default(),
            npi_policy: NpiPolicy::default(),
        }
    }
}

/// Fitted two-pass feature pipeline: weather-only significance pass,
/// engineering on the surviving weather columns, merged pass with NPIs,
/// standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub weather_variables: Vec<String>,
    pub npi_names: Vec<String>,
    pub weather_kept: Vec<usize>,
    pub engineering: Engineering,
    /// Indices into `[engineered weather.., npis..]` kept by the merged pass.
    pub merged_kept: Vec<usize>,
    pub scaling: Scaling,
    pub provenance: Vec<Provenance>,
    pub weather_report: SelectionReport,
    pub merged_report: SelectionReport,
}

impl FeaturePipeline {
    /// Fits on `start..=end` against the daily `target` (mean R_eff).
    pub fn fit(
        weather: &WeatherSeries,
        npis: &NpiSchedule,
        target: &[f64],
        start: Date,
        end: Date,
        config: &FeatureConfig,
    ) -> Result<(Self, FeatureMatrix)> {
        let daily = fourier::fourier_upsample(weather, start, end)?;
        if target.len() != daily.rows() {
            return Err(Error::Shape {
                what: "feature target length",
                expected: daily.rows(),
                found: target.len(),
            });
        }
        let raw = Candidates::new(
            weather.variables().to_vec(),
            alloc::vec![Provenance::WeatherRaw; weather.variables().len()],
            daily,
        )?;
        let (weather_kept, weather_report) = select_columns(&raw, target, config.alpha, &config.npi_policy)?;
        let base = raw.select(&weather_kept);
        let engineering = Engineering::fit(&base.names, &base.values, config.transforms)?;

        let merged = Self::merge(&engineering, &base.values, npis, start, end)?;
        let (merged_kept, merged_report) = select_columns(&merged, target, config.alpha, &config.npi_policy)?;
        let sel = merged.select(&merged_kept);
        let fm = scale_features(&sel.names, &sel.values, &sel.provenance, start)?;
        let pipeline = FeaturePipeline {
            weather_variables: weather.variables().to_vec(),
            npi_names: npis.npi_names().to_vec(),
            weather_kept,
            engineering,
            merged_kept,
            scaling: fm.scaling.clone(),
            provenance: fm.provenance.clone(),
            weather_report,
            merged_report,
        };
        Ok((pipeline, fm))
    }

    fn merge(engineering: &Engineering, base: &Matrix, npis: &NpiSchedule, start: Date, end: Date) -> Result<Candidates> {
        let eng = engineering.apply(base)?;
        let npi = npis.window(start, end)?;
        let mut names = engineering.output_names();
        let mut prov = engineering.output_provenance();
        names.extend(npi.npi_names().iter().cloned());
        prov.extend(core::iter::repeat_n(Provenance::Npi, npi.npi_names().len()));
        Candidates::new(names, prov, eng.hstack(npi.levels())?)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.scaling.names
    }

    /// Feature matrix for `start..=end` from (possibly counterfactual) inputs,
    /// using only stored parameters.
    pub fn transform(&self, weather: &WeatherSeries, npis: &NpiSchedule, start: Date, end: Date) -> Result<FeatureMatrix> {
        if weather.variables() != self.weather_variables.as_slice() {
            return Err(Error::FeatureMismatch(format!(
                "weather variables {:?} differ from training variables {:?}",
                weather.variables(),
                self.weather_variables
            )));
        }
        if npis.npi_names() != self.npi_names.as_slice() {
            return Err(Error::FeatureMismatch(format!(
                "NPI columns {:?} differ from training columns {:?}",
                npis.npi_names(),
                self.npi_names
            )));
        }
        let daily = fourier::fourier_upsample(weather, start, end)?;
        let base = daily.select_columns(&self.weather_kept);
        let merged = Self::merge(&self.engineering, &base, npis, start, end)?;
        let sel = merged.select(&self.merged_kept);
        let values = self.scaling.apply(&sel.names, &sel.values)?;
        Ok(FeatureMatrix {
            start_date: start,
            feature_names: sel.names,
            values,
            scaling: self.scaling.clone(),
            provenance: sel.provenance,
        })
    }
}
