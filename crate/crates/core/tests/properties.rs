//! Cross-module invariants as property tests.

use pansim_core::correction::{band_from_samples, BandMethod};
use pansim_core::data::ReffEstimates;
use pansim_core::features::Scaling;
use pansim_core::reff::{clamp_to_historical, ClampMode, ReffBands};
use pansim_core::seirfv::{self, allocate_vaccines, Clinical, EpiParams, SeedAllocation, VaccinePlan};
use pansim_core::synthetic::synthetic_age_structure;
use pansim_core::{Date, Matrix};
use proptest::prelude::*;

fn start() -> Date {
    Date::from_ymd_opt(2020, 3, 1).unwrap()
}

fn method() -> impl Strategy<Value = BandMethod> {
    prop_oneof![Just(BandMethod::Normal), Just(BandMethod::Empirical)]
}

fn sorted3(a: f64, b: f64, c: f64) -> [f64; 3] {
    let mut v = [a, b, c];
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #[test]
    fn allocation_is_old_first(
        available in prop::collection::vec(0.0f64..1e5, 18),
        doses in 0.0f64..1e6,
    ) {
        let a = allocate_vaccines(&available, doses);
        let used: f64 = a.per_group.iter().sum();
        prop_assert!((used + a.surplus - doses).abs() <= 1e-9 * doses.max(1.0));
        for g in 0..18 {
            prop_assert!(a.per_group[g] >= 0.0 && a.per_group[g] <= available[g]);
            if a.per_group[g] > 0.0 {
                // every older group is fully covered before group g gets a dose
                for h in g + 1..18 {
                    prop_assert_eq!(a.per_group[h], available[h]);
                }
            }
        }
    }

    #[test]
    fn scaling_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..30)) {
        let m = Matrix::from_rows(&rows).unwrap();
        let names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let s = Scaling::fit(&names, &m).unwrap();
        let back = s.invert(&s.apply(&names, &m).unwrap()).unwrap();
        for (x, y) in back.as_slice().iter().zip(m.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn bands_are_ordered_and_nested(
        samples in prop::collection::vec(-50.0f64..500.0, 1..12),
        method in method(),
        narrow in 0.5f64..0.9,
        widen in 0.0f64..0.09,
    ) {
        let (lo, mu, hi) = band_from_samples(&samples, narrow, method);
        prop_assert!(0.0 <= lo && lo <= mu && mu <= hi);
        let (wlo, _, whi) = band_from_samples(&samples, narrow + widen, method);
        prop_assert!(wlo <= lo + 1e-12 && whi + 1e-12 >= hi);
    }

    #[test]
    fn backwards_clamp_dominates_history(
        days in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0), 1..60),
    ) {
        let (mut pl, mut pm, mut pu, mut hl, mut hm, mut hu) = (vec![], vec![], vec![], vec![], vec![], vec![]);
        for &(a, b, c, x, y, z) in &days {
            let p = sorted3(a, b, c);
            let h = sorted3(x, y, z);
            pl.push(p[0]); pm.push(p[1]); pu.push(p[2]);
            hl.push(h[0]); hm.push(h[1]); hu.push(h[2]);
        }
        let predicted = ReffBands { start_date: start(), lower: pl, mean: pm, upper: pu };
        let hist = ReffEstimates::new(start(), hl, hm, hu).unwrap();
        let back = clamp_to_historical(&predicted, &hist, ClampMode::Backwards).unwrap();
        let fwd = clamp_to_historical(&predicted, &hist, ClampMode::Forward).unwrap();
        prop_assert_eq!(&fwd, &predicted);
        for i in 0..days.len() {
            prop_assert!(back.lower[i] >= hist.band(pansim_core::data::Band::Lower)[i]);
            prop_assert!(back.mean[i] >= hist.band(pansim_core::data::Band::Mean)[i]);
            prop_assert!(back.upper[i] >= hist.band(pansim_core::data::Band::Upper)[i]);
            prop_assert!(back.lower[i] >= predicted.lower[i] && back.upper[i] >= predicted.upper[i]);
            prop_assert!(back.lower[i] <= back.mean[i] && back.mean[i] <= back.upper[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn three_year_runs_conserve_population(
        levels in prop::collection::vec(0.2f64..3.0, 36),
        doses in 0.0f64..50_000.0,
        seeds in 1.0f64..50_000.0,
    ) {
        let age = synthetic_age_structure();
        let clinical = Clinical::from(&age);
        let params = EpiParams { hospital_capacity: 500.0, icu_capacity: 50.0, ..EpiParams::default() };
        let init = seirfv::init_state(&age.population, seeds, SeedAllocation::default()).unwrap();
        // one level per ~month
        let reff: Vec<f64> = (0..3 * 365).map(|d| levels[(d / 31).min(35)]).collect();
        let plan = VaccinePlan { start_day: 200, daily_doses: doses };
        let t = seirfv::simulate(&init, &reff, &params, &clinical, plan, start()).unwrap();
        let n0 = init.total_population();
        for s in &t.states {
            prop_assert!((s.total_population() - n0).abs() / n0 < 1e-9);
        }
        prop_assert!(t.cumulative_fatalities.windows(2).all(|w| w[1] >= w[0]));
    }
}
