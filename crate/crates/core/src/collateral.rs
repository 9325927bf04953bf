//! Collateral-damage chain: NPIs → GDP → life-years-lost (LYL).
//!
//! Two networks are trained on quarterly data, each only after an OLS slope
//! test confirms a significant relation: NPI stringency (mean level across
//! NPIs) against GDP, and GDP against LYL. The composed model maps a quarter's
//! mean NPI levels to LYL.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::data::NpiSchedule;
use crate::features::Scaling;
use crate::neural::{Split, TrainConfig};
use crate::reff::ScaledRegressor;
use crate::{stats, Date, Error, Matrix, Result};

/// Calendar quarter, `quarter` in 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::invalid(format!("quarter must be 1..=4, got {quarter}")));
        }
        Ok(Quarter { year, quarter })
    }

    pub fn of(date: Date) -> Self {
        Quarter {
            year: date.year(),
            quarter: ((date.month() - 1) / 3 + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Quarter {
                year: self.year + 1,
                quarter: 1,
            }
        } else {
            Quarter {
                year: self.year,
                quarter: self.quarter + 1,
            }
        }
    }

    /// Parses `2020Q3` (case-insensitive `q`).
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let pos = s.find(['Q', 'q'])?;
        let year = s[..pos].parse().ok()?;
        let quarter = s[pos + 1..].parse().ok()?;
        Quarter::new(year, quarter).ok()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

/// Consecutive quarterly GDP and life-years-lost observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconSeries {
    periods: Vec<Quarter>,
    gdp: Vec<f64>,
    lyl: Vec<f64>,
}

impl EconSeries {
    pub fn new(periods: Vec<Quarter>, gdp: Vec<f64>, lyl: Vec<f64>) -> Result<Self> {
        if gdp.len() != periods.len() || lyl.len() != periods.len() {
            return Err(Error::invalid("econ periods, gdp and lyl must have equal length"));
        }
        for w in periods.windows(2) {
            if w[1] != w[0].next() {
                return Err(Error::invalid(format!("econ periods must be consecutive: {} follows {}", w[1], w[0])));
            }
        }
        for (i, p) in periods.iter().enumerate() {
            if !(gdp[i].is_finite() && gdp[i] > 0.0) {
                return Err(Error::invalid(format!("gdp in {p} must be > 0, got {}", gdp[i])));
            }
            if !(lyl[i].is_finite() && lyl[i] >= 0.0) {
                return Err(Error::invalid(format!("lyl in {p} must be >= 0, got {}", lyl[i])));
            }
        }
        Ok(EconSeries { periods, gdp, lyl })
    }

    pub fn periods(&self) -> &[Quarter] {
        &self.periods
    }

    pub fn gdp(&self) -> &[f64] {
        &self.gdp
    }

    pub fn lyl(&self) -> &[f64] {
        &self.lyl
    }
}

/// Per-quarter mean NPI levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterlyNpis {
    pub npi_names: Vec<String>,
    pub periods: Vec<Quarter>,
    pub levels: Matrix,
}

impl QuarterlyNpis {
    /// Mean level over the days of each quarter the schedule covers.
    pub fn aggregate(schedule: &NpiSchedule) -> Self {
        let mut periods: Vec<Quarter> = Vec::new();
        let mut sums: Vec<Vec<f64>> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        let cols = schedule.npi_names().len();
        for d in 0..schedule.days() {
            let q = Quarter::of(schedule.date_at(d));
            if periods.last() != Some(&q) {
                periods.push(q);
                sums.push(vec![0.0; cols]);
                counts.push(0);
            }
            let acc = sums.last_mut().expect("pushed above");
            for (a, v) in acc.iter_mut().zip(schedule.levels().row(d)) {
                *a += v;
            }
            *counts.last_mut().expect("pushed above") += 1;
        }
        let rows: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
            .collect();
        let levels = if rows.is_empty() {
            Matrix::zeros(0, cols)
        } else {
            Matrix::from_rows(&rows).expect("equal row widths")
        };
        QuarterlyNpis {
            npi_names: schedule.npi_names().to_vec(),
            periods,
            levels,
        }
    }

    /// Levels for `periods`; quarters outside the schedule count as no NPIs.
    pub fn align(&self, periods: &[Quarter]) -> QuarterlyNpis {
        let mut levels = Matrix::zeros(periods.len(), self.npi_names.len());
        for (r, q) in periods.iter().enumerate() {
            if let Some(src) = self.periods.iter().position(|p| p == q) {
                levels.row_mut(r).copy_from_slice(self.levels.row(src));
            }
        }
        QuarterlyNpis {
            npi_names: self.npi_names.clone(),
            periods: periods.to_vec(),
            levels,
        }
    }

    /// Mean level across NPIs per quarter.
    pub fn stringency(&self) -> Vec<f64> {
        self.levels.iter_rows().map(stats::mean).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub t_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub passed: bool,
}

/// OLS slope t-test of `y` on `x`; passes iff `p ≤ alpha`.
pub fn check_relation(x: &[f64], y: &[f64], alpha: f64) -> Result<SignificanceReport> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            what: "relation series length",
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 8 {
        return Err(Error::invalid(format!("significance check needs at least 8 periods, got {}", x.len())));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let fit = stats::ols(&Matrix::from_columns(&[x.to_vec()])?, y)?;
    let coef = fit.coefficients[0].ok_or_else(|| Error::invalid("explanatory series is constant"))?;
    Ok(SignificanceReport {
        n: x.len(),
        slope: coef.estimate,
        intercept: fit.intercept,
        t_value: coef.t_value,
        p_value: coef.p_value,
        alpha,
        passed: coef.p_value <= alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollateralConfig {
    pub alpha: f64,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Shared by both networks so they hold out the same quarters.
    pub seed: u64,
}

impl Default for CollateralConfig {
    fn default() -> Self {
        CollateralConfig {
            alpha: 0.05,
            hidden: vec![16, 16, 16],
            train: TrainConfig::default(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollateralModel {
    pub npi_names: Vec<String>,
    pub npi_scaling: Scaling,
    pub gdp_model: ScaledRegressor,
    pub gdp_scaling: Scaling,
    pub lyl_model: ScaledRegressor,
    pub gdp_gate: SignificanceReport,
    pub lyl_gate: SignificanceReport,
    /// R² of the composed NPI → LYL prediction on the held-out quarters.
    pub composed_validation_r2: Option<f64>,
}

fn gdp_name() -> Vec<String> {
    vec!["gdp".to_string()]
}

/// Trains both networks after both significance gates pass.
pub fn train_collateral(npis: &QuarterlyNpis, econ: &EconSeries, config: &CollateralConfig) -> Result<CollateralModel> {
    if npis.periods != econ.periods() {
        return Err(Error::invalid("NPI and econ quarters are not aligned"));
    }
    let gdp_gate = check_relation(&npis.stringency(), econ.gdp(), config.alpha)?;
    if !gdp_gate.passed {
        return Err(Error::GateFailed {
            gate: "npi->gdp",
            p_value: gdp_gate.p_value,
            alpha: config.alpha,
        });
    }
    let lyl_gate = check_relation(econ.gdp(), econ.lyl(), config.alpha)?;
    if !lyl_gate.passed {
        return Err(Error::GateFailed {
            gate: "gdp->lyl",
            p_value: lyl_gate.p_value,
            alpha: config.alpha,
        });
    }

    let npi_scaling = Scaling::fit(&npis.npi_names, &npis.levels)?;
    let x = npi_scaling.apply(&npis.npi_names, &npis.levels)?;
    let sizes = |inputs: usize| {
        let mut s = vec![inputs];
        s.extend_from_slice(&config.hidden);
        s.push(1);
        s
    };
    let gdp_model = ScaledRegressor::train(&x, econ.gdp(), &sizes(x.cols()), &config.train, config.seed)?;

    let gdp_col = Matrix::from_columns(&[econ.gdp().to_vec()])?;
    let gdp_scaling = Scaling::fit(&gdp_name(), &gdp_col)?;
    let g = gdp_scaling.apply(&gdp_name(), &gdp_col)?;
    let lyl_model = ScaledRegressor::train(&g, econ.lyl(), &sizes(1), &config.train, config.seed)?;

    let mut model = CollateralModel {
        npi_names: npis.npi_names.clone(),
        npi_scaling,
        gdp_model,
        gdp_scaling,
        lyl_model,
        gdp_gate,
        lyl_gate,
        composed_validation_r2: None,
    };
    let split = Split::new(econ.periods().len(), config.train.validation_fraction, config.seed);
    let composed = predict_lyl(&model, npis)?;
    let pred: Vec<f64> = split.validation.iter().map(|&r| composed[r]).collect();
    let truth: Vec<f64> = split.validation.iter().map(|&r| econ.lyl()[r]).collect();
    model.composed_validation_r2 = if truth.len() >= 2 { stats::r_squared(&pred, &truth)? } else { None };
    Ok(model)
}

fn check_names(model: &CollateralModel, npis: &QuarterlyNpis) -> Result<()> {
    if model.npi_names != npis.npi_names {
        return Err(Error::FeatureMismatch(format!(
            "collateral model expects NPIs {:?}, got {:?}",
            model.npi_names, npis.npi_names
        )));
    }
    Ok(())
}

/// GDP per quarter from the NPI network alone.
pub fn predict_gdp(model: &CollateralModel, npis: &QuarterlyNpis) -> Result<Vec<f64>> {
    check_names(model, npis)?;
    let x = model.npi_scaling.apply(&npis.npi_names, &npis.levels)?;
    model.gdp_model.predict(&x)
}

/// LYL from GDP values through the second network, clamped at 0.
pub fn lyl_from_gdp(model: &CollateralModel, gdp: &[f64]) -> Result<Vec<f64>> {
    let g = model.gdp_scaling.apply(&gdp_name(), &Matrix::from_columns(&[gdp.to_vec()])?)?;
    Ok(model.lyl_model.predict(&g)?.into_iter().map(|v| v.max(0.0)).collect())
}

/// `LYL_t = lyl_model(gdp_model(npis_t))`, clamped at 0.
pub fn predict_lyl(model: &CollateralModel, npis: &QuarterlyNpis) -> Result<Vec<f64>> {
    let gdp = predict_gdp(model, npis)?;
    lyl_from_gdp(model, &gdp)
}
