//! Monthly → daily resampling by Fourier interpolation.
//!
//! Each monthly sample sits at the 15th of its month. A variable's monthly
//! sequence is detrended, transformed with a DFT, and its zero-padded
//! spectrum is evaluated at every day's fractional month position. Evaluating
//! the band-limited trigonometric polynomial directly is what an inverse
//! transform of the zero-padded spectrum computes on a uniform grid; doing it
//! per day handles unequal month lengths without a second interpolation.
//!
//! The interpolant passes through every monthly sample, and the whole
//! operation is linear in the input values.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use chrono::{Datelike, Months};

use crate::data::{day_offset, WeatherSeries};
use crate::{stats, Date, Error, Matrix, Result};

/// Day of month carrying each monthly sample.
pub const ANCHOR_DAY: u32 = 15;

/// Anchor date of month `i` of a series starting at `start_month`.
pub fn anchor_date(start_month: Date, i: usize) -> Date {
    let m = start_month + Months::new(i as u32);
    m.with_day(ANCHOR_DAY).expect("every month has a 15th")
}

/// Fractional month position of `day` relative to the anchors of a series of
/// `months` samples starting at `start_month`: `i` at the `i`-th anchor,
/// linear in days between anchors.
pub fn month_position(start_month: Date, months: usize, day: Date) -> Option<f64> {
    if months == 0 {
        return None;
    }
    let first = anchor_date(start_month, 0);
    let last = anchor_date(start_month, months - 1);
    if day < first || day > last {
        return None;
    }
    // months since the first anchor, then correct if the anchor lies after `day`
    let mut i = ((day.year() - first.year()) * 12 + day.month() as i32 - first.month() as i32) as usize;
    if anchor_date(start_month, i) > day {
        i -= 1;
    }
    if i + 1 >= months {
        return Some(i as f64);
    }
    let a = anchor_date(start_month, i);
    let b = anchor_date(start_month, i + 1);
    Some(i as f64 + (day - a).num_days() as f64 / (b - a).num_days() as f64)
}

/// Upsamples every variable of `series` to daily resolution over
/// `start..=end` (inclusive). Rows are days, columns follow the series'
/// variable order.
///
/// The target range must lie between the first and last monthly anchors; no
/// extrapolation is performed.
pub fn fourier_upsample(series: &WeatherSeries, start: Date, end: Date) -> Result<Matrix> {
    let months = series.months();
    let coverage_err = Error::Coverage {
        what: "monthly weather series",
        start,
        end,
    };
    if end < start || months == 0 {
        return Err(coverage_err);
    }
    let days = (end - start).num_days() as usize + 1;
    let positions: Vec<f64> = (0..days)
        .map(|d| month_position(series.start_month(), months, day_offset(start, d as i64)))
        .collect::<Option<_>>()
        .ok_or(coverage_err)?;

    let mut out = Matrix::zeros(days, series.variables().len());
    for (c, col) in series.values().columns().iter().enumerate() {
        let interp = TrigInterpolant::fit(col);
        for (r, &t) in positions.iter().enumerate() {
            out.set(r, c, interp.eval(t));
        }
    }
    Ok(out)
}

/// Band-limited periodic interpolant of a detrended sample sequence.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    n: usize,
    slope: f64,
    // spectrum bins 0..=n/2 as (re, im)
    spectrum: Vec<(f64, f64)>,
}

impl TrigInterpolant {
    pub fn fit(samples: &[f64]) -> Self {
        let n = samples.len();
        let slope = trend_slope(samples);
        let resid: Vec<f64> = samples
            .iter()
            .enumerate()
            .map(|(m, x)| x - slope * m as f64)
            .collect();
        let bins = n / 2 + 1;
        let mut spectrum = vec![(0.0, 0.0); bins.min(n.max(1))];
        for (k, bin) in spectrum.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (m, &r) in resid.iter().enumerate() {
                // reduce k*m mod n before forming the angle to keep it small
                let ang = -2.0 * PI * ((k * m) % n) as f64 / n as f64;
                re += r * libm::cos(ang);
                im += r * libm::sin(ang);
            }
            *bin = (re, im);
        }
        TrigInterpolant { n, slope, spectrum }
    }

    /// Value at fractional sample position `t` (0 = first sample).
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.n;
        if n == 0 {
            return f64::NAN;
        }
        let nf = n as f64;
        let mut acc = self.spectrum[0].0;
        for (k, &(re, im)) in self.spectrum.iter().enumerate().skip(1) {
            let ang = 2.0 * PI * k as f64 * t / nf;
            let term = re * libm::cos(ang) - im * libm::sin(ang);
            // the Nyquist bin of an even-length sequence is not mirrored
            if n.is_multiple_of(2) && k == n / 2 {
                acc += term;
            } else {
                acc += 2.0 * term;
            }
        }
        acc / nf + self.slope * t
    }
}

/// Linear trend removed before the transform.
///
/// With at least two years of data the slope is the difference between the
/// mean of the last and the first twelve samples divided by their distance,
/// which leaves whole seasonal cycles untouched. Shorter sequences use the
/// least-squares slope.
fn trend_slope(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n >= 24 {
        let first = stats::mean(&samples[..12]);
        let last = stats::mean(&samples[n - 12..]);
        (last - first) / (n - 12) as f64
    } else if n >= 2 {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        stats::fit_line(&xs, samples).map_or(0.0, |(s, _)| s)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn d(y: i32, m: u32, day: u32) -> Date {
        Date::from_ymd_opt(y, m, day).unwrap()
    }

    fn series(values: Vec<f64>) -> WeatherSeries {
        let m = Matrix::from_columns(&[values]).unwrap();
        WeatherSeries::new(d(2018, 1, 1), vec![String::from("t")], m).unwrap()
    }

    #[test]
    fn constant_series_stays_constant() {
        let s = series(vec![7.0; 36]);
        let up = fourier_upsample(&s, d(2018, 1, 15), d(2020, 12, 15)).unwrap();
        for r in 0..up.rows() {
            assert_abs_diff_eq!(up.get(r, 0), 7.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reproduces_samples_at_anchors() {
        let vals: Vec<f64> = (0..30).map(|i| libm::sin(i as f64 * 0.7) * 5.0 + i as f64 * 0.3).collect();
        let s = series(vals.clone());
        let up = fourier_upsample(&s, d(2018, 1, 15), d(2020, 6, 15)).unwrap();
        for (i, v) in vals.iter().enumerate() {
            let day = anchor_date(d(2018, 1, 1), i);
            let r = (day - d(2018, 1, 15)).num_days() as usize;
            assert_abs_diff_eq!(up.get(r, 0), *v, epsilon = 1e-9);
        }
    }

    #[test]
    fn short_odd_series_interpolates() {
        let vals = vec![1.0, 4.0, 2.0, 8.0, 5.0];
        let interp = TrigInterpolant::fit(&vals);
        for (i, v) in vals.iter().enumerate() {
            assert_abs_diff_eq!(interp.eval(i as f64), *v, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_extrapolation() {
        let s = series(vec![1.0; 12]);
        assert!(fourier_upsample(&s, d(2018, 1, 14), d(2018, 3, 1)).is_err());
        assert!(fourier_upsample(&s, d(2018, 1, 15), d(2018, 12, 16)).is_err());
        assert!(fourier_upsample(&s, d(2018, 1, 15), d(2018, 12, 15)).is_ok());
    }

    #[test]
    fn month_position_is_linear_between_anchors() {
        let start = d(2018, 1, 1);
        assert_eq!(month_position(start, 3, d(2018, 1, 15)), Some(0.0));
        assert_eq!(month_position(start, 3, d(2018, 2, 15)), Some(1.0));
        // January 15th to February 15th spans 31 days
        assert_abs_diff_eq!(month_position(start, 3, d(2018, 1, 31)).unwrap(), 16.0 / 31.0);
        assert_eq!(month_position(start, 3, d(2018, 3, 16)), None);
    }
}
