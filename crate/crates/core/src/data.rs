//! Validated domain objects for the four input data families: NPI schedules,
//! monthly weather, R_eff estimates, and demographic/clinical/vaccination
//! tables.
//!
//! Constructors enforce every invariant and reject rather than impute. Text
//! parsing lives in the companion crate; everything here is format agnostic.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{Datelike, Days, Months};
use serde::{Deserialize, Serialize};

use crate::{stats, Date, Error, Matrix, Result};

/// Daily matrix of ordinal NPI intensity levels, one column per NPI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpiSchedule {
    start_date: Date,
    npi_names: Vec<String>,
    levels: Matrix,
}

impl NpiSchedule {
    pub fn new(start_date: Date, npi_names: Vec<String>, levels: Matrix) -> Result<Self> {
        if levels.cols() != npi_names.len() {
            return Err(Error::Shape {
                what: "NPI column count",
                expected: npi_names.len(),
                found: levels.cols(),
            });
        }
        check_unique(&npi_names, "NPI")?;
        for (r, row) in levels.iter_rows().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!(
                        "NPI '{}' on day {r} has level {v}; levels must be finite and >= 0",
                        npi_names[c]
                    )));
                }
            }
        }
        Ok(NpiSchedule {
            start_date,
            npi_names,
            levels,
        })
    }

    pub fn start_date(&self) -> Date {
        self.start_date
    }

    /// Last covered day (inclusive). Equals `start_date` minus one for an empty schedule.
    pub fn end_date(&self) -> Date {
        day_offset(self.start_date, self.days() as i64 - 1)
    }

    pub fn days(&self) -> usize {
        self.levels.rows()
    }

    pub fn npi_names(&self) -> &[String] {
        &self.npi_names
    }

    pub fn levels(&self) -> &Matrix {
        &self.levels
    }

    pub fn date_at(&self, day: usize) -> Date {
        day_offset(self.start_date, day as i64)
    }

    pub fn index_of_npi(&self, name: &str) -> Result<usize> {
        self.npi_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Unknown {
                kind: "NPI",
                name: name.to_string(),
            })
    }

    pub fn index_of_date(&self, date: Date) -> Option<usize> {
        let off = (date - self.start_date).num_days();
        (off >= 0 && (off as usize) < self.days()).then_some(off as usize)
    }

    /// Replaces one NPI column; all other cells are untouched.
    pub fn with_column(&self, name: &str, values: &[f64]) -> Result<Self> {
        let c = self.index_of_npi(name)?;
        if values.len() != self.days() {
            return Err(Error::Shape {
                what: "NPI column length",
                expected: self.days(),
                found: values.len(),
            });
        }
        let mut levels = self.levels.clone();
        for (r, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("NPI '{name}' level {v} on day {r}")));
            }
            levels.set(r, c, v);
        }
        Ok(NpiSchedule {
            start_date: self.start_date,
            npi_names: self.npi_names.clone(),
            levels,
        })
    }

    pub(crate) fn with_levels(&self, levels: Matrix) -> Self {
        debug_assert_eq!(levels.cols(), self.npi_names.len());
        NpiSchedule {
            start_date: self.start_date,
            npi_names: self.npi_names.clone(),
            levels,
        }
    }

    /// Rows covering `start..=end`.
    pub fn window(&self, start: Date, end: Date) -> Result<Self> {
        let (a, b) = window_bounds(self.start_date, self.days(), start, end, "NPI schedule")?;
        Ok(NpiSchedule {
            start_date: start,
            npi_names: self.npi_names.clone(),
            levels: self.levels.slice_rows(a, b),
        })
    }
}

/// Monthly weather observations, one row per calendar month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    start_month: Date,
    variables: Vec<String>,
    values: Matrix,
}

impl WeatherSeries {
    /// `start_month` is normalised to the first day of its month.
    pub fn new(start_month: Date, variables: Vec<String>, values: Matrix) -> Result<Self> {
        if values.cols() != variables.len() {
            return Err(Error::Shape {
                what: "weather column count",
                expected: variables.len(),
                found: values.cols(),
            });
        }
        check_unique(&variables, "weather variable")?;
        for (r, row) in values.iter_rows().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "weather variable '{}' in month {r} is not finite",
                        variables[c]
                    )));
                }
            }
        }
        Ok(WeatherSeries {
            start_month: first_of_month(start_month),
            variables,
            values,
        })
    }

    pub fn start_month(&self) -> Date {
        self.start_month
    }

    pub fn months(&self) -> usize {
        self.values.rows()
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// First day of the `i`-th month.
    pub fn month_at(&self, i: usize) -> Date {
        self.start_month + Months::new(i as u32)
    }

    /// Appends further months (same variables) directly after the last month.
    pub fn extended(&self, extra: &Matrix) -> Result<Self> {
        if extra.cols() != self.variables.len() {
            return Err(Error::Shape {
                what: "weather extension column count",
                expected: self.variables.len(),
                found: extra.cols(),
            });
        }
        let mut rows: Vec<Vec<f64>> = self.values.iter_rows().map(<[f64]>::to_vec).collect();
        rows.extend(extra.iter_rows().map(<[f64]>::to_vec));
        let values = if rows.is_empty() {
            Matrix::zeros(0, self.variables.len())
        } else {
            Matrix::from_rows(&rows)?
        };
        WeatherSeries::new(self.start_month, self.variables.clone(), values)
    }
}

/// The three reproduction-number bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Lower,
    Mean,
    Upper,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Lower, Band::Mean, Band::Upper];

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Lower => "lower",
            Band::Mean => "mean",
            Band::Upper => "upper",
        }
    }
}

/// Daily lower/mean/upper effective reproduction number estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReffEstimates {
    start_date: Date,
    lower: Vec<f64>,
    mean: Vec<f64>,
    upper: Vec<f64>,
}

impl ReffEstimates {
    pub fn new(start_date: Date, lower: Vec<f64>, mean: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_bands(start_date, &lower, &mean, &upper)?;
        Ok(ReffEstimates {
            start_date,
            lower,
            mean,
            upper,
        })
    }

    pub fn start_date(&self) -> Date {
        self.start_date
    }

    pub fn end_date(&self) -> Date {
        day_offset(self.start_date, self.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn band(&self, band: Band) -> &[f64] {
        match band {
            Band::Lower => &self.lower,
            Band::Mean => &self.mean,
            Band::Upper => &self.upper,
        }
    }

    pub fn window(&self, start: Date, end: Date) -> Result<Self> {
        let (a, b) = window_bounds(self.start_date, self.len(), start, end, "R_eff estimates")?;
        Ok(ReffEstimates {
            start_date: start,
            lower: self.lower[a..b].to_vec(),
            mean: self.mean[a..b].to_vec(),
            upper: self.upper[a..b].to_vec(),
        })
    }
}

pub(crate) fn check_bands(start: Date, lower: &[f64], mean: &[f64], upper: &[f64]) -> Result<()> {
    if lower.len() != mean.len() || upper.len() != mean.len() {
        return Err(Error::Shape {
            what: "R_eff band length",
            expected: mean.len(),
            found: if lower.len() != mean.len() {
                lower.len()
            } else {
                upper.len()
            },
        });
    }
    for i in 0..mean.len() {
        let (l, m, u) = (lower[i], mean[i], upper[i]);
        let date = day_offset(start, i as i64);
        if !(l.is_finite() && m.is_finite() && u.is_finite()) || l < 0.0 {
            return Err(Error::invalid(format!(
                "R_eff on {date} must be finite and >= 0 (got {l}, {m}, {u})"
            )));
        }
        if !(l <= m && m <= u) {
            return Err(Error::invalid(format!(
                "R_eff bands out of order on {date}: lower {l}, mean {m}, upper {u}"
            )));
        }
    }
    Ok(())
}

/// Historical series the correction stage is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Infected,
    Fatal,
    HospitalBeds,
    Icu,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::Infected, Target::Fatal, Target::HospitalBeds, Target::Icu];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Infected => "infected",
            Target::Fatal => "fatal",
            Target::HospitalBeds => "hospital_beds",
            Target::Icu => "icu",
        }
    }

    pub fn parse(s: &str) -> Option<Target> {
        Target::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Band level used unless configured otherwise.
    pub fn default_level(self) -> f64 {
        match self {
            Target::Infected | Target::Fatal => 0.95,
            Target::HospitalBeds | Target::Icu => 0.85,
        }
    }
}

/// Daily historical infected (active cases), cumulative fatalities, and
/// occupied hospital/ICU beds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSeries {
    start_date: Date,
    infected: Vec<f64>,
    fatal: Vec<f64>,
    hospital_beds: Vec<f64>,
    icu: Vec<f64>,
}

impl TargetSeries {
    pub fn new(start_date: Date, infected: Vec<f64>, fatal: Vec<f64>, hospital_beds: Vec<f64>, icu: Vec<f64>) -> Result<Self> {
        let n = infected.len();
        for (what, v) in [("fatal", &fatal), ("hospital_beds", &hospital_beds), ("icu", &icu)] {
            if v.len() != n {
                return Err(Error::invalid(format!("target column {what} has {} rows, expected {n}", v.len())));
            }
        }
        for (what, v) in [("infected", &infected), ("fatal", &fatal), ("hospital_beds", &hospital_beds), ("icu", &icu)] {
            if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::invalid(format!(
                    "target {what} on {} must be finite and >= 0",
                    day_offset(start_date, i as i64)
                )));
            }
        }
        Ok(TargetSeries {
            start_date,
            infected,
            fatal,
            hospital_beds,
            icu,
        })
    }

    pub fn start_date(&self) -> Date {
        self.start_date
    }

    pub fn end_date(&self) -> Date {
        day_offset(self.start_date, self.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.infected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infected.is_empty()
    }

    pub fn get(&self, target: Target) -> &[f64] {
        match target {
            Target::Infected => &self.infected,
            Target::Fatal => &self.fatal,
            Target::HospitalBeds => &self.hospital_beds,
            Target::Icu => &self.icu,
        }
    }

    pub fn window(&self, start: Date, end: Date) -> Result<Self> {
        let (a, b) = window_bounds(self.start_date, self.len(), start, end, "historical targets")?;
        Ok(TargetSeries {
            start_date: start,
            infected: self.infected[a..b].to_vec(),
            fatal: self.fatal[a..b].to_vec(),
            hospital_beds: self.hospital_beds[a..b].to_vec(),
            icu: self.icu[a..b].to_vec(),
        })
    }
}

/// Number of canonical age groups.
pub const AGE_GROUPS: usize = 18;

/// Labels of the canonical 5-year age brackets, youngest first.
pub const AGE_GROUP_LABELS: [&str; AGE_GROUPS] = [
    "<5", "5-9", "10-14", "15-19", "20-24", "25-29", "30-34", "35-39", "40-44", "45-49", "50-54",
    "55-59", "60-64", "65-69", "70-74", "75-79", "80-84", ">84",
];

/// Open-ended brackets are treated as ending at this age when splitting by width.
pub const MAX_AGE: u32 = 100;

/// Population and per-group clinical rates on the 18 canonical brackets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeStructure {
    pub population: Vec<f64>,
    pub ifr: Vec<f64>,
    pub hosp_rate: Vec<f64>,
    pub icu_rate: Vec<f64>,
}

/// A bracket in some source's age grouping: ages `from..=to` (`to = None`
/// means open-ended).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceBracket {
    pub from: u32,
    pub to: Option<u32>,
    pub population: f64,
    pub ifr: f64,
    pub hosp_rate: f64,
    pub icu_rate: f64,
}

impl SourceBracket {
    fn upper_exclusive(&self) -> u32 {
        self.to.map_or(MAX_AGE, |t| t + 1)
    }
}

impl AgeStructure {
    pub fn new(population: Vec<f64>, ifr: Vec<f64>, hosp_rate: Vec<f64>, icu_rate: Vec<f64>) -> Result<Self> {
        for (what, v) in [
            ("population", &population),
            ("ifr", &ifr),
            ("hosp_rate", &hosp_rate),
            ("icu_rate", &icu_rate),
        ] {
            if v.len() != AGE_GROUPS {
                return Err(Error::Shape {
                    what,
                    expected: AGE_GROUPS,
                    found: v.len(),
                });
            }
        }
        for (g, &p) in population.iter().enumerate() {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::invalid(format!(
                    "population of age group {} must be > 0 (got {p})",
                    AGE_GROUP_LABELS[g]
                )));
            }
        }
        for (what, v) in [("ifr", &ifr), ("hosp_rate", &hosp_rate), ("icu_rate", &icu_rate)] {
            for (g, &r) in v.iter().enumerate() {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::invalid(format!(
                        "{what} of age group {} must lie in [0, 1] (got {r})",
                        AGE_GROUP_LABELS[g]
                    )));
                }
            }
        }
        Ok(AgeStructure {
            population,
            ifr,
            hosp_rate,
            icu_rate,
        })
    }

    pub fn total_population(&self) -> f64 {
        self.population.iter().sum()
    }

    /// Maps arbitrary source brackets onto the canonical 5-year brackets.
    ///
    /// Each source bracket's population is split across the canonical
    /// brackets it overlaps in proportion to the overlap width (the last
    /// piece takes the remainder, so every source total is conserved).
    /// Canonical rates are the population-weighted mean of the contributing
    /// source rates. Source brackets must tile `[0, ∞)` without gaps or
    /// overlaps; the last one must be open-ended.
    pub fn homogenize(brackets: &[SourceBracket]) -> Result<Self> {
        if brackets.is_empty() {
            return Err(Error::invalid("no age brackets"));
        }
        let mut sorted: Vec<&SourceBracket> = brackets.iter().collect();
        sorted.sort_by_key(|b| b.from);
        let mut expected_from = 0;
        for (i, b) in sorted.iter().enumerate() {
            if b.from != expected_from {
                return Err(Error::invalid(format!(
                    "age brackets must be contiguous from 0: expected a bracket starting at {expected_from}, found {}",
                    b.from
                )));
            }
            match b.to {
                Some(t) if t < b.from => {
                    return Err(Error::invalid(format!("age bracket {}-{t} is inverted", b.from)))
                }
                Some(t) if t + 1 >= MAX_AGE && i + 1 < sorted.len() => {
                    return Err(Error::invalid(format!("age bracket {}-{t} exceeds {MAX_AGE}", b.from)))
                }
                None if i + 1 != sorted.len() => {
                    return Err(Error::invalid("only the last age bracket may be open-ended"))
                }
                _ => {}
            }
            if !(b.population.is_finite() && b.population >= 0.0) {
                return Err(Error::invalid(format!("age bracket {} has invalid population", b.from)));
            }
            for (what, r) in [("ifr", b.ifr), ("hosp_rate", b.hosp_rate), ("icu_rate", b.icu_rate)] {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::invalid(format!(
                        "{what} of age bracket starting at {} must lie in [0, 1] (got {r})",
                        b.from
                    )));
                }
            }
            expected_from = b.upper_exclusive();
        }
        if sorted.last().is_some_and(|b| b.to.is_some()) {
            return Err(Error::invalid("the oldest age bracket must be open-ended"));
        }

        let mut pop = [0.0; AGE_GROUPS];
        let mut ifr_w = [0.0; AGE_GROUPS];
        let mut hosp_w = [0.0; AGE_GROUPS];
        let mut icu_w = [0.0; AGE_GROUPS];
        // a group fed by a single bracket keeps that bracket's rates verbatim
        let mut single: [Option<&SourceBracket>; AGE_GROUPS] = [None; AGE_GROUPS];
        let mut sources = [0usize; AGE_GROUPS];
        for b in &sorted {
            let (lo, hi) = (b.from, b.upper_exclusive());
            let width = f64::from(hi - lo);
            let overlaps: Vec<(usize, u32)> = (0..AGE_GROUPS)
                .filter_map(|g| {
                    let (clo, chi) = canonical_range(g);
                    let ov = hi.min(chi).saturating_sub(lo.max(clo));
                    (ov > 0).then_some((g, ov))
                })
                .collect();
            let mut assigned = 0.0;
            for (k, &(g, ov)) in overlaps.iter().enumerate() {
                let share = if k + 1 == overlaps.len() {
                    b.population - assigned
                } else {
                    b.population * f64::from(ov) / width
                };
                assigned += share;
                pop[g] += share;
                ifr_w[g] += share * b.ifr;
                hosp_w[g] += share * b.hosp_rate;
                icu_w[g] += share * b.icu_rate;
                sources[g] += 1;
                single[g] = Some(b);
            }
        }
        let rate = |w: &[f64; AGE_GROUPS], g: usize, pick: fn(&SourceBracket) -> f64| match single[g] {
            Some(b) if sources[g] == 1 => pick(b),
            _ if pop[g] > 0.0 => w[g] / pop[g],
            _ => 0.0,
        };
        AgeStructure::new(
            pop.to_vec(),
            (0..AGE_GROUPS).map(|g| rate(&ifr_w, g, |b| b.ifr)).collect(),
            (0..AGE_GROUPS).map(|g| rate(&hosp_w, g, |b| b.hosp_rate)).collect(),
            (0..AGE_GROUPS).map(|g| rate(&icu_w, g, |b| b.icu_rate)).collect(),
        )
    }
}

/// Canonical bracket `g` as `[from, to_exclusive)`.
pub fn canonical_range(g: usize) -> (u32, u32) {
    let lo = 5 * g as u32;
    if g + 1 == AGE_GROUPS {
        (lo, MAX_AGE)
    } else {
        (lo, lo + 5)
    }
}

/// Cumulative vaccine doses administered over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaccinationSupply {
    observations: Vec<(Date, f64)>,
}

impl VaccinationSupply {
    pub fn new(mut observations: Vec<(Date, f64)>) -> Result<Self> {
        observations.sort_by_key(|(d, _)| *d);
        for w in observations.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!("duplicate vaccination date {}", w[0].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::invalid(format!(
                    "cumulative doses decrease from {} on {} to {} on {}",
                    w[0].1, w[0].0, w[1].1, w[1].0
                )));
            }
        }
        if let Some((d, v)) = observations.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("invalid cumulative doses {v} on {d}")));
        }
        Ok(VaccinationSupply { observations })
    }

    pub fn observations(&self) -> &[(Date, f64)] {
        &self.observations
    }

    /// Date of the first observation (start of the vaccination campaign).
    pub fn start_date(&self) -> Option<Date> {
        self.observations.first().map(|(d, _)| *d)
    }

    /// Average doses per day: the least-squares slope of cumulative doses
    /// against day index, clamped at zero.
    pub fn daily_rate(&self) -> Result<f64> {
        fit_daily_vaccine_rate(self)
    }
}

/// Least-squares slope of cumulative doses against days since the first
/// observation; negative slopes clamp to 0.
pub fn fit_daily_vaccine_rate(supply: &VaccinationSupply) -> Result<f64> {
    let obs = supply.observations();
    if obs.len() < 2 {
        return Err(Error::invalid(format!(
            "vaccine rate fit needs at least 2 observations, got {}",
            obs.len()
        )));
    }
    let t0 = obs[0].0;
    let xs: Vec<f64> = obs.iter().map(|(d, _)| (*d - t0).num_days() as f64).collect();
    let ys: Vec<f64> = obs.iter().map(|(_, v)| *v).collect();
    let (slope, _) = stats::fit_line(&xs, &ys)?;
    Ok(slope.max(0.0))
}

pub(crate) fn day_offset(start: Date, days: i64) -> Date {
    if days >= 0 {
        start + Days::new(days as u64)
    } else {
        start - Days::new(days.unsigned_abs())
    }
}

pub(crate) fn first_of_month(d: Date) -> Date {
    d.with_day(1).expect("day 1 exists in every month")
}

/// Row bounds `[a, b)` of `start..=end` in a daily series.
pub(crate) fn window_bounds(
    series_start: Date,
    len: usize,
    start: Date,
    end: Date,
    what: &'static str,
) -> Result<(usize, usize)> {
    let a = (start - series_start).num_days();
    let b = (end - series_start).num_days() + 1;
    if a < 0 || b > len as i64 || b < a {
        return Err(Error::Coverage { what, start, end });
    }
    Ok((a as usize, b as usize))
}

fn check_unique(names: &[String], kind: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::invalid(format!("duplicate {kind} name '{n}'")));
        }
    }
    Ok(())
}
