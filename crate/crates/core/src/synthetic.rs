//! Seeded synthetic datasets with known ground truth.
//!
//! # R_eff world ([`generate`])
//!
//! * Monthly weather from `weather_start` for `weather_months` months, three
//!   variables with an annual cycle plus Gaussian month-to-month noise
//!   (`m` = months since January):
//!   - `temperature` = 10 − 10·cos(2πm/12) + N(0, 1.5²) °C
//!   - `humidity` = 75 + 8·cos(2πm/12) + N(0, 3²) %
//!   - `sunshine` = 5 − 3.5·cos(2πm/12 − 0.3) + N(0, 0.8²) h/day
//! * A fixed daily NPI timetable over three NPIs ([`NPI_NAMES`]); only the
//!   first two act on transmission.
//! * Mean R_eff from [`reff_formula`] on the Fourier-upsampled daily weather
//!   and the NPI levels, times log-normal noise `exp(N(0, noise²))`. Lower and
//!   upper bands are the noiseless value times 0.87 and 1.13, each with its own
//!   noise draw.
//! * An Austria-sized 18-group age structure with exponential IFR,
//!   hospitalisation and ICU profiles, and a vaccine supply growing by
//!   `vaccine_rate` doses/day from `vaccine_start`.
//! * Historical targets: the compartmental engine (default parameters) is run
//!   on the mean R_eff; reported series are fixed smooth transforms of its
//!   output with multiplicative noise `1 + N(0, report_noise²)`:
//!   - infected = 0.4 · active infected · (1 + 0.15·sin(2π·doy/365))
//!   - fatal = running sum of 0.9 · daily deaths
//!   - hospital_beds = 0.55 · bed demand, icu = 0.7 · ICU demand
//!
//! # Other fixtures
//!
//! [`ols_fixture`] builds one true predictor plus pure-noise columns;
//! [`synthetic_collateral`] and [`noise_collateral`] build quarterly
//! NPI/GDP/LYL data with and without a real relation.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use chrono::Datelike;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::collateral::{EconSeries, Quarter, QuarterlyNpis};
use crate::data::{day_offset, AgeStructure, NpiSchedule, ReffEstimates, TargetSeries, VaccinationSupply, WeatherSeries, AGE_GROUPS};
use crate::pipeline::{EpiSetup, HistoricalInputs};
use crate::seirfv::{self, Clinical, EpiParams, SeedAllocation, VaccinePlan};
use crate::{fourier, Date, Matrix, Result};

pub const WEATHER_VARIABLES: [&str; 3] = ["temperature", "humidity", "sunshine"];

pub const NPI_NAMES: [&str; 3] = ["Workplace closing", "Facial coverings", "Cancel public events"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub start: Date,
    pub days: usize,
    pub weather_start: Date,
    pub weather_months: usize,
    pub seed_infections: f64,
    /// Standard deviation of the log-normal R_eff estimate noise.
    pub noise: f64,
    /// Standard deviation of the multiplicative reporting noise on targets.
    pub report_noise: f64,
    pub vaccine_start: Date,
    pub vaccine_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 42,
            start: date(2020, 3, 1),
            days: 396,
            weather_start: date(2018, 1, 1),
            weather_months: 40,
            seed_infections: 2_000.0,
            noise: 0.02,
            report_noise: 0.005,
            vaccine_start: date(2020, 12, 27),
            vaccine_rate: 15_000.0,
        }
    }
}

fn date(y: i32, m: u32, d: u32) -> Date {
    Date::from_ymd_opt(y, m, d).expect("valid literal date")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub weather: WeatherSeries,
    pub npis: NpiSchedule,
    pub reff: ReffEstimates,
    /// Noiseless mean R_eff from [`reff_formula`].
    pub reff_truth: Vec<f64>,
    pub age: AgeStructure,
    pub vaccination: VaccinationSupply,
    pub targets: TargetSeries,
    pub epi: EpiParams,
    pub seed_infections: f64,
}

impl SyntheticDataset {
    pub fn historical_inputs(&self) -> HistoricalInputs {
        HistoricalInputs {
            weather: self.weather.clone(),
            npis: self.npis.clone(),
            reff: self.reff.clone(),
        }
    }

    /// Engine setup matching the one that produced the targets.
    pub fn epi_setup(&self) -> Result<EpiSetup> {
        Ok(EpiSetup {
            params: self.epi.clone(),
            age: self.age.clone(),
            seed_infections: self.seed_infections,
            vaccination: VaccinePlan::from_supply(&self.vaccination, self.reff.start_date())?,
        })
    }
}

/// Ground-truth mean R_eff for one day.
pub fn reff_formula(temperature: f64, humidity: f64, sunshine: f64, workplace: f64, masks: f64) -> f64 {
    let log_r = libm::log(1.73) - 0.015 * (temperature - 10.0) + 0.008 * (humidity - 75.0) - 0.015 * (sunshine - 5.0)
        - 0.125 * workplace
        - 0.23 * masks;
    libm::exp(log_r)
}

/// Piecewise-constant NPI timetable: `(first day, level)` steps per NPI.
fn npi_timetable() -> [Vec<(Date, f64)>; 3] {
    [
        vec![
            (date(2020, 3, 16), 3.0),
            (date(2020, 5, 1), 2.0),
            (date(2020, 6, 15), 0.0),
            (date(2020, 10, 1), 1.0),
            (date(2020, 11, 3), 3.0),
            (date(2020, 12, 7), 2.0),
            (date(2020, 12, 26), 3.0),
            (date(2021, 2, 8), 1.0),
        ],
        vec![(date(2020, 4, 6), 2.0), (date(2020, 6, 15), 1.0), (date(2020, 11, 3), 3.0)],
        vec![
            (date(2020, 3, 10), 2.0),
            (date(2020, 6, 1), 1.0),
            (date(2020, 11, 3), 2.0),
        ],
    ]
}

fn level_on(steps: &[(Date, f64)], day: Date) -> f64 {
    steps.iter().take_while(|(d, _)| *d <= day).last().map_or(0.0, |(_, l)| *l)
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative sd")
}

/// Synthetic daily NPI schedule over `start` + `days`.
pub fn synthetic_npis(start: Date, days: usize) -> Result<NpiSchedule> {
    let table = npi_timetable();
    let mut levels = Matrix::zeros(days, NPI_NAMES.len());
    for d in 0..days {
        let day = day_offset(start, d as i64);
        for (c, steps) in table.iter().enumerate() {
            levels.set(d, c, level_on(steps, day));
        }
    }
    NpiSchedule::new(start, names(&NPI_NAMES), levels)
}

/// Monthly weather following the documented annual cycles.
pub fn synthetic_weather(start_month: Date, months: usize, rng: &mut ChaCha8Rng) -> Result<WeatherSeries> {
    let mut m = Matrix::zeros(months, WEATHER_VARIABLES.len());
    let (nt, nh, ns) = (normal(1.5), normal(3.0), normal(0.8));
    for i in 0..months {
        let month0 = ((start_month.month0() as usize + i) % 12) as f64;
        let ang = 2.0 * PI * month0 / 12.0;
        m.set(i, 0, 10.0 - 10.0 * libm::cos(ang) + nt.sample(rng));
        m.set(i, 1, 75.0 + 8.0 * libm::cos(ang) + nh.sample(rng));
        m.set(i, 2, (5.0 - 3.5 * libm::cos(ang - 0.3) + ns.sample(rng)).max(0.0));
    }
    WeatherSeries::new(start_month, names(&WEATHER_VARIABLES), m)
}

/// 18-group population (≈ 8.9 million) with clinical profiles.
pub fn synthetic_age_structure() -> AgeStructure {
    let population: Vec<f64> = (0..AGE_GROUPS)
        .map(|g| match g {
            0..=10 => 480_000.0 + 12_000.0 * g as f64,
            11..=13 => 600_000.0 - 60_000.0 * (g - 11) as f64,
            _ => 430_000.0 - 95_000.0 * (g - 14) as f64,
        })
        .collect();
    let ifr: Vec<f64> = (0..AGE_GROUPS).map(|g| 1e-5 * libm::exp(0.55 * g as f64)).collect();
    let hosp: Vec<f64> = (0..AGE_GROUPS).map(|g| 0.005 * libm::exp(0.22 * g as f64)).collect();
    let icu: Vec<f64> = hosp.iter().map(|h| 0.25 * h).collect();
    AgeStructure::new(population, ifr, hosp, icu).expect("valid synthetic age structure")
}

fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

/// Builds the documented R_eff world.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weather = synthetic_weather(spec.weather_start, spec.weather_months, &mut rng)?;
    let npis = synthetic_npis(spec.start, spec.days)?;
    let end = day_offset(spec.start, spec.days as i64 - 1);
    let daily = fourier::fourier_upsample(&weather, spec.start, end)?;

    let eps = normal(spec.noise);
    let mut truth = Vec::with_capacity(spec.days);
    let (mut lower, mut mean, mut upper) = (Vec::new(), Vec::new(), Vec::new());
    for d in 0..spec.days {
        let w = daily.row(d);
        let l = npis.levels().row(d);
        let r = reff_formula(w[0], w[1], w[2], l[0], l[1]);
        truth.push(r);
        let mut v = [
            0.87 * r * libm::exp(eps.sample(&mut rng)),
            r * libm::exp(eps.sample(&mut rng)),
            1.13 * r * libm::exp(eps.sample(&mut rng)),
        ];
        v.sort_by(f64::total_cmp);
        lower.push(v[0]);
        mean.push(v[1]);
        upper.push(v[2]);
    }
    let reff = ReffEstimates::new(spec.start, lower, mean, upper)?;

    let age = synthetic_age_structure();
    let mut obs = Vec::new();
    let mut cumulative = 0.0;
    for week in 0..16 {
        let day = day_offset(spec.vaccine_start, 7 * week);
        if week > 0 {
            cumulative += 7.0 * spec.vaccine_rate * (1.0 + 0.1 * (rng.random::<f64>() - 0.5));
        }
        obs.push((day, cumulative));
    }
    let vaccination = VaccinationSupply::new(obs)?;

    let epi = EpiParams::default();
    let clinical = Clinical::from(&age);
    let init = seirfv::init_state(&age.population, spec.seed_infections, SeedAllocation::default())?;
    let plan = VaccinePlan::from_supply(&vaccination, spec.start)?;
    let traj = seirfv::simulate(&init, reff.band(crate::data::Band::Mean), &epi, &clinical, plan, spec.start)?;

    let report = normal(spec.report_noise);
    let mut mult = || (1.0 + report.sample(&mut rng)).max(0.0);
    let mut infected = Vec::with_capacity(spec.days);
    let mut fatal = Vec::with_capacity(spec.days);
    let mut beds = Vec::with_capacity(spec.days);
    let mut icu = Vec::with_capacity(spec.days);
    let mut prev_dead = 0.0;
    let mut reported_dead = 0.0;
    for d in 0..spec.days {
        let doy = day_offset(spec.start, d as i64).ordinal0() as f64;
        infected.push(0.4 * traj.active_infected[d] * (1.0 + 0.15 * libm::sin(2.0 * PI * doy / 365.0)) * mult());
        let dead = traj.cumulative_fatalities[d];
        reported_dead += 0.9 * (dead - prev_dead) * mult();
        prev_dead = dead;
        fatal.push(reported_dead);
        beds.push(0.55 * traj.hospital_demand[d] * mult());
        icu.push(0.7 * traj.icu_demand[d] * mult());
    }
    let targets = TargetSeries::new(spec.start, infected, fatal, beds, icu)?;

    Ok(SyntheticDataset {
        weather,
        npis,
        reff,
        reff_truth: truth,
        age,
        vaccination,
        targets,
        epi,
        seed_infections: spec.seed_infections,
    })
}

/// Seed of the canonical feature-selection fixture.
pub const OLS_FIXTURE_SEED: u64 = 2024;

/// `n` rows: column `x_true` drives `y = 1 + 2·x_true + N(0, 1)`, columns
/// `noise_1..=noise_k` are independent standard normals.
pub fn ols_fixture(seed: u64, n: usize, noise_columns: usize) -> (Vec<String>, Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = normal(1.0);
    let mut names = vec!["x_true".to_string()];
    names.extend((1..=noise_columns).map(|i| alloc::format!("noise_{i}")));
    let mut m = Matrix::zeros(n, noise_columns + 1);
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        for c in 0..=noise_columns {
            m.set(r, c, std.sample(&mut rng));
        }
        y.push(1.0 + 2.0 * m.get(r, 0) + std.sample(&mut rng));
    }
    (names, m, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollateralSpec {
    pub seed: u64,
    pub first: Quarter,
    pub quarters: usize,
    pub gdp_noise: f64,
    pub lyl_noise: f64,
}

impl Default for CollateralSpec {
    fn default() -> Self {
        CollateralSpec {
            seed: 11,
            first: Quarter { year: 1996, quarter: 1 },
            quarters: 100,
            gdp_noise: 0.2,
            lyl_noise: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollateralData {
    pub npis: QuarterlyNpis,
    pub econ: EconSeries,
}

/// Ground-truth GDP for one quarter's mean NPI levels.
pub fn gdp_formula(levels: &[f64]) -> f64 {
    100.0 * libm::exp(-0.05 * (levels[0] + 0.6 * levels[1] + 0.3 * levels[2]))
}

/// Ground-truth LYL for a GDP value.
pub fn lyl_formula(gdp: f64) -> f64 {
    3000.0 + 0.8 * (105.0 - gdp) * (105.0 - gdp)
}

fn quarters(first: Quarter, n: usize) -> Vec<Quarter> {
    core::iter::successors(Some(first), |q| Some(q.next())).take(n).collect()
}

fn random_levels(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, NPI_NAMES.len());
    for r in 0..n {
        for c in 0..NPI_NAMES.len() {
            m.set(r, c, 3.0 * rng.random::<f64>());
        }
    }
    m
}

/// Quarterly data with `gdp = gdp_formula(npis) + noise`, `lyl = lyl_formula(gdp) + noise`.
pub fn synthetic_collateral(spec: &CollateralSpec) -> CollateralData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let levels = random_levels(&mut rng, spec.quarters);
    let (gn, ln) = (normal(spec.gdp_noise), normal(spec.lyl_noise));
    let gdp: Vec<f64> = levels.iter_rows().map(|r| gdp_formula(r) + gn.sample(&mut rng)).collect();
    let lyl: Vec<f64> = gdp.iter().map(|g| (lyl_formula(*g) + ln.sample(&mut rng)).max(0.0)).collect();
    let periods = quarters(spec.first, spec.quarters);
    CollateralData {
        npis: QuarterlyNpis {
            npi_names: names(&NPI_NAMES),
            periods: periods.clone(),
            levels,
        },
        econ: EconSeries::new(periods, gdp, lyl).expect("positive synthetic gdp"),
    }
}

/// Quarterly data where GDP and LYL are independent of everything.
pub fn noise_collateral(seed: u64, n: usize) -> CollateralData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = random_levels(&mut rng, n);
    let nn = normal(1.0);
    let gdp: Vec<f64> = (0..n).map(|_| 100.0 + nn.sample(&mut rng)).collect();
    let lyl: Vec<f64> = (0..n).map(|_| 3000.0 + 10.0 * nn.sample(&mut rng)).collect();
    let periods = quarters(Quarter { year: 2005, quarter: 1 }, n);
    CollateralData {
        npis: QuarterlyNpis {
            npi_names: names(&NPI_NAMES),
            periods: periods.clone(),
            levels,
        },
        econ: EconSeries::new(periods, gdp, lyl).expect("positive gdp"),
    }
}
