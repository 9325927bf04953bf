//! Independent oracles for the statistical and resampling building blocks.

use nalgebra::{DMatrix, DVector};
use pansim_core::data::WeatherSeries;
use pansim_core::features::{select_columns, Candidates, NpiPolicy, Provenance};
use pansim_core::fourier::{self, month_position};
use pansim_core::{stats, synthetic, Date, Matrix};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

struct OracleFit {
    beta: Vec<f64>,
    p: Vec<f64>,
}

// Textbook OLS: β = (XᵀX)⁻¹Xᵀy with an intercept column, σ² = RSS/(n−k−1),
// se_j = sqrt(σ²·[(XᵀX)⁻¹]_jj), p_j = 2·(1 − F_t(|β_j/se_j|; n−k−1)).
fn oracle_ols(x: &Matrix, y: &[f64]) -> OracleFit {
    let (n, k) = (x.rows(), x.cols());
    let design = DMatrix::from_fn(n, k + 1, |r, c| if c == 0 { 1.0 } else { x.get(r, c - 1) });
    let yv = DVector::from_column_slice(y);
    let xtx_inv = (design.transpose() * &design).try_inverse().expect("full-rank design");
    let beta = &xtx_inv * design.transpose() * &yv;
    let resid = &yv - &design * &beta;
    let df = (n - k - 1) as f64;
    let sigma2 = resid.norm_squared() / df;
    let t = StudentsT::new(0.0, 1.0, df).unwrap();
    let p = (0..=k)
        .map(|j| {
            let se = (sigma2 * xtx_inv[(j, j)]).sqrt();
            2.0 * (1.0 - t.cdf((beta[j] / se).abs()))
        })
        .collect();
    OracleFit {
        beta: beta.iter().copied().collect(),
        p,
    }
}

fn candidates(names: Vec<String>, m: Matrix) -> Candidates {
    let prov = vec![Provenance::WeatherRaw; names.len()];
    Candidates::new(names, prov, m).unwrap()
}

#[test]
fn ols_matches_normal_equation_oracle() {
    for seed in 0..20 {
        let (_, x, y) = synthetic::ols_fixture(seed, 120, 5);
        let ours = stats::ols(&x, &y).unwrap();
        let oracle = oracle_ols(&x, &y);
        assert!((ours.intercept - oracle.beta[0]).abs() < 1e-9);
        for (j, c) in ours.coefficients.iter().enumerate() {
            let c = c.expect("no collinear columns in the fixture");
            assert!((c.estimate - oracle.beta[j + 1]).abs() < 1e-9, "seed {seed} coef {j}");
            assert!((c.p_value - oracle.p[j + 1]).abs() < 1e-8, "seed {seed} p {j}: {} vs {}", c.p_value, oracle.p[j + 1]);
        }
    }
}

#[test]
fn selection_keep_set_matches_t_test_oracle() {
    let alpha = 0.05;
    for seed in 0..50 {
        let (names, x, y) = synthetic::ols_fixture(seed, 150, 6);
        let oracle = oracle_ols(&x, &y);
        let expected: Vec<usize> = (0..x.cols()).filter(|&j| oracle.p[j + 1] <= alpha).collect();
        let (kept, report) = select_columns(&candidates(names, x), &y, alpha, &NpiPolicy::default()).unwrap();
        assert_eq!(kept, expected, "seed {seed}");
        assert_eq!(report.entries.iter().filter(|e| e.kept).count(), kept.len());
    }
}

#[test]
fn canonical_fixture_keeps_only_the_true_predictor() {
    let (names, x, y) = synthetic::ols_fixture(synthetic::OLS_FIXTURE_SEED, 200, 6);
    let (kept, report) = select_columns(&candidates(names, x), &y, 0.05, &NpiPolicy::default()).unwrap();
    assert_eq!(kept, vec![0]);
    assert_eq!(report.kept_names(), vec!["x_true".to_string()]);
}

fn d(y: i32, m: u32, day: u32) -> Date {
    Date::from_ymd_opt(y, m, day).unwrap()
}

fn series(values: &[f64]) -> WeatherSeries {
    let m = Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap();
    WeatherSeries::new(d(2018, 1, 1), vec!["v".into()], m).unwrap()
}

#[test]
fn single_harmonic_matches_closed_form_between_samples() {
    let months = 36;
    let f = |t: f64| 10.0 + 4.0 * (2.0 * std::f64::consts::PI * t / 12.0).sin();
    let samples: Vec<f64> = (0..months).map(|m| f(m as f64)).collect();
    let s = series(&samples);
    let (start, end) = (d(2018, 1, 15), d(2020, 12, 15));
    let daily = fourier::fourier_upsample(&s, start, end).unwrap();
    let mut worst: f64 = 0.0;
    for r in 0..daily.rows() {
        let day = start + chrono::Days::new(r as u64);
        let t = month_position(s.start_month(), months, day).unwrap();
        worst = worst.max((daily.get(r, 0) - f(t)).abs());
    }
    assert!(worst < 0.05, "max deviation {worst}");
}

proptest! {
    #[test]
    fn upsampling_reproduces_every_sample(values in prop::collection::vec(-50.0f64..50.0, 2..40)) {
        let s = series(&values);
        let last = fourier::anchor_date(s.start_month(), values.len() - 1);
        let daily = fourier::fourier_upsample(&s, d(2018, 1, 15), last).unwrap();
        for (i, v) in values.iter().enumerate() {
            let row = (fourier::anchor_date(s.start_month(), i) - d(2018, 1, 15)).num_days() as usize;
            prop_assert!((daily.get(row, 0) - v).abs() < 1e-9);
        }
    }

    #[test]
    fn upsampling_is_linear(
        pair in (3usize..30).prop_flat_map(|n| (
            prop::collection::vec(-20.0f64..20.0, n),
            prop::collection::vec(-20.0f64..20.0, n),
        )),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let (x, y) = pair;
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let last = fourier::anchor_date(d(2018, 1, 1), x.len() - 1);
        let up = |v: &[f64]| fourier::fourier_upsample(&series(v), d(2018, 1, 15), last).unwrap().column(0);
        let (ux, uy, uc) = (up(&x), up(&y), up(&combo));
        for i in 0..uc.len() {
            prop_assert!((uc[i] - (a * ux[i] + b * uy[i])).abs() < 1e-9);
        }
    }
}
