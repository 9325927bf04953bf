//! Age-stratified S/E/I/R/F/V compartmental engine driven by a daily R_eff
//! series.
//!
//! One forward-Euler step per day. All flows of a step are computed from the
//! start-of-day state:
//!
//! * force of infection `λ = reff · γ · ΣI / N` with `N` the living
//!   population; susceptibles of group `a` are exposed at `λ · S_a`,
//!   vaccinated at `(1 - ε) · λ · V_a`
//! * `E → I` at rate `σ`, `I` resolves at rate `γ`
//! * resolving cases die with the group's IFR, raised by hospital/ICU
//!   overflow: the unserved share of demand becomes fatal
//! * doses move susceptibles to `V`, oldest group first
//! * `V → S` at `1 / D_V`, `R → S` at `1 / D_R`
//!
//! Every outflow is limited to the compartment content, so compartments stay
//! non-negative and the population total is conserved.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{AgeStructure, VaccinationSupply};
use crate::{Date, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpiParams {
    /// σ, 1/days (E → I).
    pub incubation_rate: f64,
    /// γ, 1/days (I → R or F).
    pub recovery_rate: f64,
    /// ε in [0, 1].
    pub vaccine_efficacy: f64,
    /// D_V in days; infinite disables waning.
    pub vaccine_immunity_days: f64,
    /// D_R in days; infinite disables waning.
    pub recovery_immunity_days: f64,
    pub hospital_capacity: f64,
    pub icu_capacity: f64,
    /// Whether unmet hospital/ICU demand converts resolving cases to fatalities.
    pub overflow_fatalities: bool,
}

impl Default for EpiParams {
    fn default() -> Self {
        EpiParams {
            incubation_rate: 1.0 / 3.0,
            recovery_rate: 1.0 / 7.0,
            vaccine_efficacy: 0.9,
            vaccine_immunity_days: 180.0,
            recovery_immunity_days: 180.0,
            hospital_capacity: 45_000.0,
            icu_capacity: 2_500.0,
            overflow_fatalities: true,
        }
    }
}

impl EpiParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && !v.is_nan();
        if !(pos(self.incubation_rate) && self.incubation_rate.is_finite()) {
            return Err(Error::invalid("incubation_rate must be a positive finite rate"));
        }
        if !(pos(self.recovery_rate) && self.recovery_rate.is_finite()) {
            return Err(Error::invalid("recovery_rate must be a positive finite rate"));
        }
        if !(0.0..=1.0).contains(&self.vaccine_efficacy) {
            return Err(Error::invalid("vaccine_efficacy must lie in [0, 1]"));
        }
        if !pos(self.vaccine_immunity_days) || !pos(self.recovery_immunity_days) {
            return Err(Error::invalid("immunity durations must be > 0"));
        }
        if !(self.hospital_capacity >= 0.0 && self.icu_capacity >= 0.0) {
            return Err(Error::invalid("capacities must be >= 0"));
        }
        Ok(())
    }
}

/// Per-group clinical probabilities used by the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clinical {
    pub ifr: Vec<f64>,
    pub hosp_rate: Vec<f64>,
    pub icu_rate: Vec<f64>,
}

impl From<&AgeStructure> for Clinical {
    fn from(a: &AgeStructure) -> Self {
        Clinical {
            ifr: a.ifr.clone(),
            hosp_rate: a.hosp_rate.clone(),
            icu_rate: a.icu_rate.clone(),
        }
    }
}

impl Clinical {
    pub fn groups(&self) -> usize {
        self.ifr.len()
    }

    fn check(&self, groups: usize) -> Result<()> {
        for v in [&self.ifr, &self.hosp_rate, &self.icu_rate] {
            if v.len() != groups {
                return Err(Error::Shape {
                    what: "clinical rate groups",
                    expected: groups,
                    found: v.len(),
                });
            }
            if v.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::invalid("clinical rates must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Census of one age group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Compartments {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    pub f: f64,
    pub v: f64,
}

impl Compartments {
    pub fn total(&self) -> f64 {
        self.s + self.e + self.i + self.r + self.f + self.v
    }

    pub fn living(&self) -> f64 {
        self.s + self.e + self.i + self.r + self.v
    }

    fn is_valid(&self) -> bool {
        [self.s, self.e, self.i, self.r, self.f, self.v]
            .iter()
            .all(|x| x.is_finite() && *x >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentState {
    pub day: usize,
    pub groups: Vec<Compartments>,
}

impl CompartmentState {
    pub fn total_population(&self) -> f64 {
        self.groups.iter().map(Compartments::total).sum()
    }

    pub fn living(&self) -> f64 {
        self.groups.iter().map(Compartments::living).sum()
    }

    pub fn infectious(&self) -> f64 {
        self.groups.iter().map(|g| g.i).sum()
    }

    pub fn fatalities(&self) -> f64 {
        self.groups.iter().map(|g| g.f).sum()
    }
}

/// How initial infections are spread across age groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedAllocation {
    #[default]
    ProportionalToPopulation,
}

/// Everyone susceptible except `seed_infections` infectious persons spread
/// across groups by `rule`.
pub fn init_state(population: &[f64], seed_infections: f64, rule: SeedAllocation) -> Result<CompartmentState> {
    let total: f64 = population.iter().sum();
    if !(seed_infections >= 0.0) {
        return Err(Error::invalid(format!("seed infections must be >= 0, got {seed_infections}")));
    }
    if seed_infections >= total {
        return Err(Error::invalid(format!(
            "seed infections {seed_infections} must be below the total population {total}"
        )));
    }
    if population.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid("group populations must be finite and >= 0"));
    }
    let groups = population
        .iter()
        .map(|&p| {
            let i = match rule {
                SeedAllocation::ProportionalToPopulation => seed_infections * p / total,
            };
            Compartments {
                s: p - i,
                i,
                ..Compartments::default()
            }
        })
        .collect();
    Ok(CompartmentState { day: 0, groups })
}

/// Old-first dose allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub per_group: Vec<f64>,
    /// Doses left over once every group's susceptibles are vaccinated.
    pub surplus: f64,
}

/// Distributes `doses` over the susceptibles `available` (youngest first in
/// the slice), filling the oldest group before moving to the next-oldest.
pub fn allocate_vaccines(available: &[f64], doses: f64) -> Allocation {
    let mut left = doses.max(0.0);
    let mut per_group = vec![0.0; available.len()];
    for (slot, &s) in per_group.iter_mut().zip(available).rev() {
        if left <= 0.0 {
            break;
        }
        let give = left.min(s.max(0.0));
        *slot = give;
        left -= give;
    }
    Allocation {
        per_group,
        surplus: left,
    }
}

/// Flows and statistics of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub next: CompartmentState,
    pub new_infections: f64,
    pub new_fatalities: f64,
    pub doses_used: f64,
    pub dose_surplus: f64,
    pub hospital_demand: f64,
    pub icu_demand: f64,
}

/// Daily hospital and ICU bed demand of a state.
pub fn bed_demand(state: &CompartmentState, clinical: &Clinical) -> (f64, f64) {
    let mut h = 0.0;
    let mut c = 0.0;
    for (g, x) in state.groups.iter().enumerate() {
        h += clinical.hosp_rate[g] * x.i;
        c += clinical.icu_rate[g] * x.i;
    }
    (h, c)
}

/// Advances one day.
pub fn step(state: &CompartmentState, reff: f64, params: &EpiParams, clinical: &Clinical, doses: f64) -> Result<StepReport> {
    if !reff.is_finite() || reff < 0.0 {
        return Err(Error::invalid(format!("R_eff must be finite and >= 0 on day {}, got {reff}", state.day)));
    }
    if doses.is_nan() {
        return Err(Error::invalid("doses must not be NaN"));
    }
    params.validate()?;
    clinical.check(state.groups.len())?;
    if let Some(g) = state.groups.iter().position(|g| !g.is_valid()) {
        return Err(Error::invalid(format!("compartments of group {g} are negative or not finite")));
    }

    let foi = force_of_infection(reff, params.recovery_rate, state.infectious(), state.living());
    let p_exp = foi.min(1.0);
    let p_exp_v = (foi * (1.0 - params.vaccine_efficacy)).min(1.0);
    let p_inc = params.incubation_rate.min(1.0);
    let p_res = params.recovery_rate.min(1.0);
    let p_wane_v = (1.0 / params.vaccine_immunity_days).min(1.0);
    let p_wane_r = (1.0 / params.recovery_immunity_days).min(1.0);

    let (hosp_demand, icu_demand) = bed_demand(state, clinical);
    let (u_hosp, u_icu) = if params.overflow_fatalities {
        (
            unmet_share(hosp_demand, params.hospital_capacity),
            unmet_share(icu_demand, params.icu_capacity),
        )
    } else {
        (0.0, 0.0)
    };

    let exposed_s: Vec<f64> = state.groups.iter().map(|g| p_exp * g.s).collect();
    let available: Vec<f64> = state.groups.iter().zip(&exposed_s).map(|(g, x)| (g.s - x).max(0.0)).collect();
    let alloc = allocate_vaccines(&available, doses);

    let mut next = Vec::with_capacity(state.groups.len());
    let mut new_inf = 0.0;
    let mut new_dead = 0.0;
    for (a, g) in state.groups.iter().enumerate() {
        let exp_s = exposed_s[a];
        let vacc = alloc.per_group[a].min(available[a]);
        let mut exp_v = p_exp_v * g.v;
        let mut wane_v = p_wane_v * g.v;
        let v_out = exp_v + wane_v;
        if v_out > g.v {
            let k = g.v / v_out;
            exp_v *= k;
            wane_v *= k;
        }
        let inc = p_inc * g.e;
        let res = p_res * g.i;
        let wane_r = p_wane_r * g.r;
        let ifr = clinical.ifr[a];
        let overflow = (u_hosp * clinical.hosp_rate[a]).max(u_icu * clinical.icu_rate[a]);
        let p_fatal = (ifr + (1.0 - ifr) * overflow).min(1.0);
        let deaths = p_fatal * res;
        let recov = res - deaths;

        next.push(Compartments {
            s: g.s - exp_s - vacc + wane_v + wane_r,
            e: g.e + exp_s + exp_v - inc,
            i: g.i + inc - res,
            r: g.r + recov - wane_r,
            f: g.f + deaths,
            v: g.v + vacc - exp_v - wane_v,
        });
        new_inf += exp_s + exp_v;
        new_dead += deaths;
    }
    // clip round-off below zero back onto the largest compartment of the group
    for g in next.iter_mut() {
        fix_roundoff(g);
    }
    let used: f64 = alloc.per_group.iter().sum();
    Ok(StepReport {
        next: CompartmentState {
            day: state.day + 1,
            groups: next,
        },
        new_infections: new_inf,
        new_fatalities: new_dead,
        doses_used: used,
        dose_surplus: alloc.surplus,
        hospital_demand: hosp_demand,
        icu_demand,
    })
}

/// Per-susceptible daily exposure probability `reff · γ · I / N`.
///
/// The input R_eff is an *effective* reproduction number, i.e. it already
/// reflects susceptible depletion, so no further `S / N` factor enters the
/// transmission rate. `N` counts the living population.
pub fn force_of_infection(reff: f64, gamma: f64, infectious: f64, living: f64) -> f64 {
    if living > 0.0 {
        reff * gamma * infectious / living
    } else {
        0.0
    }
}

fn unmet_share(demand: f64, capacity: f64) -> f64 {
    if demand > capacity && demand > 0.0 {
        (demand - capacity) / demand
    } else {
        0.0
    }
}

fn fix_roundoff(g: &mut Compartments) {
    let mut deficit = 0.0;
    for x in [&mut g.s, &mut g.e, &mut g.i, &mut g.r, &mut g.f, &mut g.v] {
        if *x < 0.0 {
            deficit += *x;
            *x = 0.0;
        }
    }
    if deficit < 0.0 {
        let largest = [&mut g.s, &mut g.e, &mut g.i, &mut g.r, &mut g.f, &mut g.v]
            .into_iter()
            .max_by(|a, b| a.total_cmp(b))
            .expect("six compartments");
        *largest += deficit;
    }
}

/// Vaccination campaign: constant daily doses from `start_day` on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VaccinePlan {
    pub start_day: usize,
    pub daily_doses: f64,
}

impl VaccinePlan {
    pub fn none() -> Self {
        VaccinePlan::default()
    }

    /// Plan relative to `start` using the supply's fitted daily rate.
    pub fn from_supply(supply: &VaccinationSupply, start: Date) -> Result<Self> {
        let Some(first) = supply.start_date() else {
            return Ok(VaccinePlan::none());
        };
        Ok(VaccinePlan {
            start_day: (first - start).num_days().max(0) as usize,
            daily_doses: supply.daily_rate()?,
        })
    }

    pub fn doses_on(&self, day: usize) -> f64 {
        if day >= self.start_day {
            self.daily_doses
        } else {
            0.0
        }
    }
}

/// Simulated run: end-of-day states plus derived daily series (index `t`
/// refers to the end of day `start_date + t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_date: Date,
    pub initial: CompartmentState,
    pub states: Vec<CompartmentState>,
    pub new_infections: Vec<f64>,
    pub cumulative_infections: Vec<f64>,
    pub active_infected: Vec<f64>,
    pub cumulative_fatalities: Vec<f64>,
    pub hospital_demand: Vec<f64>,
    pub icu_demand: Vec<f64>,
    pub hospital_overflow: Vec<f64>,
    pub icu_overflow: Vec<f64>,
    pub doses: Vec<f64>,
}

impl Trajectory {
    pub fn days(&self) -> usize {
        self.states.len()
    }

    pub fn final_state(&self) -> &CompartmentState {
        self.states.last().unwrap_or(&self.initial)
    }
}

/// Folds [`step`] over the R_eff series.
pub fn simulate(
    initial: &CompartmentState,
    reff: &[f64],
    params: &EpiParams,
    clinical: &Clinical,
    vaccines: VaccinePlan,
    start_date: Date,
) -> Result<Trajectory> {
    params.validate()?;
    clinical.check(initial.groups.len())?;
    let n = reff.len();
    let mut t = Trajectory {
        start_date,
        initial: initial.clone(),
        states: Vec::with_capacity(n),
        new_infections: Vec::with_capacity(n),
        cumulative_infections: Vec::with_capacity(n),
        active_infected: Vec::with_capacity(n),
        cumulative_fatalities: Vec::with_capacity(n),
        hospital_demand: Vec::with_capacity(n),
        icu_demand: Vec::with_capacity(n),
        hospital_overflow: Vec::with_capacity(n),
        icu_overflow: Vec::with_capacity(n),
        doses: Vec::with_capacity(n),
    };
    let mut state = initial.clone();
    let mut cum_inf = 0.0;
    for (day, &r) in reff.iter().enumerate() {
        let rep = step(&state, r, params, clinical, vaccines.doses_on(day))?;
        state = rep.next;
        cum_inf += rep.new_infections;
        let (h, c) = bed_demand(&state, clinical);
        t.new_infections.push(rep.new_infections);
        t.cumulative_infections.push(cum_inf);
        t.active_infected.push(state.infectious());
        t.cumulative_fatalities.push(state.fatalities());
        t.hospital_demand.push(h);
        t.icu_demand.push(c);
        t.hospital_overflow.push((h - params.hospital_capacity).max(0.0));
        t.icu_overflow.push((c - params.icu_capacity).max(0.0));
        t.doses.push(rep.doses_used);
        t.states.push(state.clone());
    }
    Ok(t)
}

/// Bed demand series recomputed from the stored states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HospitalSeries {
    pub beds: Vec<f64>,
    pub icu: Vec<f64>,
    pub bed_overflow_days: usize,
    pub icu_overflow_days: usize,
}

pub fn hospital_series(trajectory: &Trajectory, clinical: &Clinical, params: &EpiParams) -> HospitalSeries {
    let (beds, icu): (Vec<f64>, Vec<f64>) = trajectory.states.iter().map(|s| bed_demand(s, clinical)).unzip();
    let bed_overflow_days = beds.iter().filter(|&&b| b > params.hospital_capacity).count();
    let icu_overflow_days = icu.iter().filter(|&&c| c > params.icu_capacity).count();
    HospitalSeries {
        beds,
        icu,
        bed_overflow_days,
        icu_overflow_days,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn d0() -> Date {
        Date::from_ymd_opt(2020, 3, 1).unwrap()
    }

    fn no_waning() -> EpiParams {
        EpiParams {
            vaccine_immunity_days: f64::INFINITY,
            recovery_immunity_days: f64::INFINITY,
            hospital_capacity: f64::INFINITY,
            icu_capacity: f64::INFINITY,
            ..EpiParams::default()
        }
    }

    fn single(ifr: f64) -> Clinical {
        Clinical {
            ifr: vec![ifr],
            hosp_rate: vec![0.1],
            icu_rate: vec![0.02],
        }
    }

    fn clinical18() -> Clinical {
        Clinical {
            ifr: (0..18).map(|g| 1e-5 * libm::exp(0.5 * g as f64)).collect(),
            hosp_rate: (0..18).map(|g| 0.005 + 0.01 * g as f64).collect(),
            icu_rate: (0..18).map(|g| 0.001 + 0.002 * g as f64).collect(),
        }
    }

    #[test]
    fn init_examples() {
        let s = init_state(&[500.0, 500.0], 0.0, SeedAllocation::default()).unwrap();
        assert!(s.groups.iter().all(|g| g.i == 0.0 && g.s == 500.0));
        let s = init_state(&[500.0, 500.0], 100.0, SeedAllocation::default()).unwrap();
        assert_eq!(s.groups[0].i, 50.0);
        assert_eq!(s.groups[1].i, 50.0);
        let s = init_state(&[750.0, 250.0], 100.0, SeedAllocation::default()).unwrap();
        assert_eq!(s.groups[0].i, 75.0);
        assert_eq!(s.groups[1].i, 25.0);
        assert!(init_state(&[10.0], -1.0, SeedAllocation::default()).is_err());
        assert!(init_state(&[10.0], 10.0, SeedAllocation::default()).is_err());
    }

    #[test]
    fn allocation_examples() {
        // youngest first in the slice: [next-oldest S = 100, oldest S = 60]
        let a = allocate_vaccines(&[100.0, 60.0], 100.0);
        assert_eq!(a.per_group, vec![40.0, 60.0]);
        assert_eq!(a.surplus, 0.0);
        assert_eq!(allocate_vaccines(&[5.0, 5.0], 0.0).per_group, vec![0.0, 0.0]);
        let a = allocate_vaccines(&[5.0, 5.0], 25.0);
        assert_eq!(a.per_group, vec![5.0, 5.0]);
        assert_eq!(a.surplus, 15.0);
    }

    #[test]
    fn hand_computed_step() {
        let state = CompartmentState {
            day: 0,
            groups: vec![Compartments {
                s: 999.0,
                i: 1.0,
                ..Compartments::default()
            }],
        };
        let params = no_waning();
        let rep = step(&state, 2.0, &params, &single(0.01), 0.0).unwrap();
        let g = rep.next.groups[0];
        // λ = 2 · (1/7) · 1 / 1000; exposures = 999 λ
        let exposures = 999.0 * 2.0 / 7.0 / 1000.0;
        assert_relative_eq!(g.s, 999.0 - exposures, epsilon = 1e-9);
        assert_relative_eq!(g.e, exposures, epsilon = 1e-9);
        assert_relative_eq!(g.i, 1.0 - 1.0 / 7.0, epsilon = 1e-9);
        assert_relative_eq!(g.r, 0.99 / 7.0, epsilon = 1e-9);
        assert_relative_eq!(g.f, 0.01 / 7.0, epsilon = 1e-9);
        assert_eq!(g.v, 0.0);
        assert_relative_eq!(rep.next.total_population(), 1000.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_reff_only_decays() {
        let state = init_state(&[1000.0], 10.0, SeedAllocation::default()).unwrap();
        let rep = step(&state, 0.0, &no_waning(), &single(0.0), 0.0).unwrap();
        assert_eq!(rep.new_infections, 0.0);
        assert_relative_eq!(rep.next.groups[0].i, 10.0 * (1.0 - 1.0 / 7.0), epsilon = 1e-12);
    }

    #[test]
    fn step_rejects_nan() {
        let state = init_state(&[1000.0], 10.0, SeedAllocation::default()).unwrap();
        assert!(step(&state, f64::NAN, &no_waning(), &single(0.0), 0.0).is_err());
        assert!(step(&state, 1.0, &no_waning(), &single(0.0), f64::NAN).is_err());
    }

    #[test]
    fn horizon_zero() {
        let s = init_state(&[1000.0], 10.0, SeedAllocation::default()).unwrap();
        let t = simulate(&s, &[], &EpiParams::default(), &single(0.01), VaccinePlan::none(), d0()).unwrap();
        assert_eq!(t.days(), 0);
        assert_eq!(t.final_state(), &s);
    }

    #[test]
    fn zero_reff_fatalities_bounded_by_initial_cases() {
        // with no new exposures the initial I resolves geometrically; at most an
        // IFR share of it can die (infinite capacity)
        let pop: Vec<f64> = (0..18).map(|g| 1e5 + 1e3 * g as f64).collect();
        let s = init_state(&pop, 5_000.0, SeedAllocation::default()).unwrap();
        let c = clinical18();
        let t = simulate(&s, &vec![0.0; 400], &no_waning(), &c, VaccinePlan::none(), d0()).unwrap();
        let bound: f64 = s.groups.iter().zip(&c.ifr).map(|(g, f)| g.i * f).sum();
        let dead = *t.cumulative_fatalities.last().unwrap();
        assert!(dead <= bound * (1.0 + 1e-12), "{dead} > {bound}");
        // geometric decay leaves (6/7)^400 of the initial cases unresolved
        let left = 1.0 - libm::pow(6.0 / 7.0, 400.0);
        assert_relative_eq!(dead, bound * left, max_relative = 1e-9);
    }

    #[test]
    fn hospital_series_examples() {
        let state = CompartmentState {
            day: 0,
            groups: vec![Compartments {
                s: 750.0,
                i: 250.0,
                ..Compartments::default()
            }],
        };
        assert_eq!(bed_demand(&state, &single(0.0)).0, 25.0);
        let t = simulate(&state, &[1.0; 30], &EpiParams::default(), &single(0.0), VaccinePlan::none(), d0()).unwrap();
        let h = hospital_series(&t, &single(0.0), &EpiParams::default());
        for (day, st) in t.states.iter().enumerate() {
            let oracle = 0.1 * st.groups[0].i;
            assert!((h.beds[day] - oracle).abs() <= 1e-12 * oracle.max(1.0));
            assert_eq!(h.beds[day], t.hospital_demand[day]);
        }
        let empty = CompartmentState {
            day: 0,
            groups: vec![Compartments { s: 10.0, ..Compartments::default() }],
        };
        assert_eq!(bed_demand(&empty, &single(0.0)), (0.0, 0.0));
    }

    #[test]
    fn vaccination_goes_old_first_and_conserves() {
        let pop = vec![1000.0; 18];
        let s = init_state(&pop, 10.0, SeedAllocation::default()).unwrap();
        let plan = VaccinePlan {
            start_day: 0,
            daily_doses: 1500.0,
        };
        let t = simulate(&s, &[1.0; 3], &EpiParams::default(), &clinical18(), plan, d0()).unwrap();
        let st = &t.states[0];
        // first day: the oldest group is saturated before the next-oldest gets anything
        assert!(st.groups[17].v > 990.0);
        assert!(st.groups[16].v > 490.0 && st.groups[16].v < 510.0);
        assert_eq!(st.groups[15].v, 0.0);
        assert_relative_eq!(t.final_state().total_population(), 18_000.0, max_relative = 1e-12);
    }

    fn run_total(reff: &[f64], params: &EpiParams) -> Trajectory {
        let pop: Vec<f64> = (0..18).map(|g| 4e5 + 1e4 * g as f64).collect();
        let s = init_state(&pop, 200.0, SeedAllocation::default()).unwrap();
        simulate(
            &s,
            reff,
            params,
            &clinical18(),
            VaccinePlan {
                start_day: 200,
                daily_doses: 5_000.0,
            },
            d0(),
        )
        .unwrap()
    }

    #[test]
    fn conservation_over_ten_thousand_steps() {
        let reff: Vec<f64> = (0..10_000).map(|d| 1.0 + 0.6 * libm::sin(d as f64 / 40.0)).collect();
        let t = run_total(&reff, &EpiParams::default());
        let total0 = t.initial.total_population();
        for s in t.states.iter().step_by(97).chain(core::iter::once(t.final_state())) {
            let rel = (s.total_population() - total0).abs() / total0;
            assert!(rel < 1e-9, "relative drift {rel}");
            assert!(s.groups.iter().all(Compartments::is_valid));
        }
        assert!(t.cumulative_fatalities.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn zero_capacity_never_fewer_deaths() {
        let reff: Vec<f64> = (0..365).map(|d| 1.1 + 0.5 * libm::sin(d as f64 / 30.0)).collect();
        let inf = EpiParams {
            hospital_capacity: f64::INFINITY,
            icu_capacity: f64::INFINITY,
            ..EpiParams::default()
        };
        let zero = EpiParams {
            hospital_capacity: 0.0,
            icu_capacity: 0.0,
            ..EpiParams::default()
        };
        let a = run_total(&reff, &zero);
        let b = run_total(&reff, &inf);
        assert!(a.cumulative_fatalities.last() >= b.cumulative_fatalities.last());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn larger_reff_never_fewer_infections(
            base in prop::collection::vec(0.3f64..2.0, 180),
            bump in prop::collection::vec(0.0f64..0.8, 180),
        ) {
            let hi: Vec<f64> = base.iter().zip(&bump).map(|(b, k)| b + k).collect();
            let a = run_total(&base, &EpiParams::default());
            let b = run_total(&hi, &EpiParams::default());
            for (x, y) in a.cumulative_infections.iter().zip(&b.cumulative_infections) {
                prop_assert!(y + 1e-9 * x.abs().max(1.0) >= *x);
            }
        }

        #[test]
        fn larger_capacity_never_more_fatalities(
            reff in prop::collection::vec(0.5f64..2.2, 240),
            cap in 0.0f64..50_000.0,
            extra in 0.0f64..50_000.0,
        ) {
            let small = EpiParams { hospital_capacity: cap, icu_capacity: cap / 10.0, ..EpiParams::default() };
            let large = EpiParams { hospital_capacity: cap + extra, icu_capacity: (cap + extra) / 10.0, ..EpiParams::default() };
            let a = run_total(&reff, &small);
            let b = run_total(&reff, &large);
            let fa = *a.cumulative_fatalities.last().unwrap();
            let fb = *b.cumulative_fatalities.last().unwrap();
            prop_assert!(fb <= fa + 1e-9 * fa.max(1.0), "{} > {}", fb, fa);
        }

        #[test]
        fn state_stays_non_negative(reff in prop::collection::vec(0.0f64..12.0, 120)) {
            let t = run_total(&reff, &EpiParams { hospital_capacity: 100.0, icu_capacity: 10.0, ..EpiParams::default() });
            for s in &t.states {
                prop_assert!(s.groups.iter().all(Compartments::is_valid));
            }
        }
    }
}
