//! Small statistics toolkit: descriptive moments, ordinary least squares with
//! per-coefficient t-tests, Student-t and normal distribution helpers, R².

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by `n`).
pub fn std_population(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    libm::sqrt(var)
}

/// Sample standard deviation (divides by `n - 1`); zero for fewer than two values.
pub fn std_sample(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    libm::sqrt(var)
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
///
/// Returns `Ok(None)` when the targets are constant (R² undefined).
pub fn r_squared(predictions: &[f64], targets: &[f64]) -> Result<Option<f64>> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape {
            what: "r_squared lengths",
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if targets.len() < 2 {
        return Err(Error::invalid("r_squared needs at least 2 values"));
    }
    let m = mean(targets);
    let ss_tot: f64 = targets.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

/// Least-squares line `y = slope * x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            what: "fit_line lengths",
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::invalid("line fit needs at least 2 points"));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return Err(Error::Singular("all x values are identical".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Per-coefficient inference of an OLS fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

/// Result of [`ols`]. Candidate columns found to be linearly dependent on
/// earlier columns (or on the intercept) carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<Option<Coefficient>>,
    pub r_squared: Option<f64>,
    pub residual_df: usize,
    pub sigma2: f64,
}

impl OlsFit {
    pub fn collinear(&self) -> impl Iterator<Item = usize> + '_ {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| i)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, c)| c.map_or(0.0, |c| c.estimate * x))
                .sum::<f64>()
    }
}

const COLLINEAR_TOL: f64 = 1e-10;

/// Ordinary least squares of `y` on an intercept plus the columns of `x`, with
/// two-sided t-test p-values per coefficient.
///
/// Columns are orthogonalised in index order (modified Gram-Schmidt with one
/// re-orthogonalisation pass); a column whose residual norm falls below
/// `1e-10` of its own norm is perfectly collinear with earlier columns and is
/// excluded, so the later-indexed column of a dependent pair always loses.
pub fn ols(x: &Matrix, y: &[f64]) -> Result<OlsFit> {
    let n = x.rows();
    let k = x.cols();
    if y.len() != n {
        return Err(Error::Shape {
            what: "ols target length",
            expected: n,
            found: y.len(),
        });
    }
    if n < k + 2 {
        return Err(Error::invalid(alloc::format!(
            "ols needs more rows than columns: {n} rows for {k} candidate columns plus intercept"
        )));
    }

    // design columns: intercept first
    let mut design: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    design.push(vec![1.0; n]);
    design.extend(x.columns());

    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    // r[j] holds column j of R for kept column j (length = index of j among kept + 1)
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    for (j, col) in design.iter().enumerate() {
        let norm0 = libm::sqrt(dot(col, col));
        let mut v = col.clone();
        let mut r = vec![0.0; q.len() + 1];
        for _pass in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let proj = dot(qi, &v);
                r[i] += proj;
                for (vv, qq) in v.iter_mut().zip(qi) {
                    *vv -= proj * qq;
                }
            }
        }
        let norm = libm::sqrt(dot(&v, &v));
        if norm0 == 0.0 || norm <= COLLINEAR_TOL * norm0 {
            continue;
        }
        for vv in v.iter_mut() {
            *vv /= norm;
        }
        r[q.len()] = norm;
        q.push(v);
        r_cols.push(r);
        kept.push(j);
    }

    let p = kept.len();
    if n <= p {
        return Err(Error::invalid("no residual degrees of freedom left"));
    }

    // R is upper triangular p×p: R[i][j] = r_cols[j][i]
    let qty: Vec<f64> = q.iter().map(|qi| dot(qi, y)).collect();
    let r_at = |i: usize, j: usize| -> f64 {
        if i <= j {
            r_cols[j][i]
        } else {
            0.0
        }
    };
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = qty[i];
        for j in i + 1..p {
            s -= r_at(i, j) * beta[j];
        }
        beta[i] = s / r_at(i, i);
    }

    // R^{-1} by back substitution, column by column
    let mut rinv = vec![vec![0.0; p]; p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for j in i + 1..=c {
                s -= r_at(i, j) * rinv[j][c];
            }
            rinv[i][c] = s / r_at(i, i);
        }
    }

    let mut fitted = vec![0.0; n];
    for (bi, &j) in beta.iter().zip(&kept) {
        for (f, d) in fitted.iter_mut().zip(&design[j]) {
            *f += bi * d;
        }
    }
    let sse: f64 = fitted.iter().zip(y).map(|(f, t)| (t - f) * (t - f)).sum();
    let my = mean(y);
    let sst: f64 = y.iter().map(|t| (t - my) * (t - my)).sum();
    let df = n - p;
    let sigma2 = sse / df as f64;
    let perfect = sse <= 1e-24 * sst.max(f64::MIN_POSITIVE);

    let mut coefficients = vec![None; k];
    let mut intercept = 0.0;
    for (slot, &j) in kept.iter().enumerate() {
        let est = beta[slot];
        if j == 0 {
            intercept = est;
            continue;
        }
        let var_factor: f64 = rinv[slot].iter().map(|v| v * v).sum();
        let se = libm::sqrt(sigma2 * var_factor);
        let (t, pval) = if perfect || se == 0.0 {
            // exact fit: a coefficient either carries signal or is numerically zero
            let contrib = libm::fabs(est) * libm::sqrt(dot(&design[j], &design[j]));
            let scale = libm::sqrt(sst).max(f64::MIN_POSITIVE);
            if contrib > 1e-8 * scale {
                (f64::INFINITY, 0.0)
            } else {
                (0.0, 1.0)
            }
        } else {
            let t = est / se;
            (t, student_t_two_sided_p(t, df as f64))
        };
        coefficients[j - 1] = Some(Coefficient {
            estimate: est,
            std_error: se,
            t_value: t,
            p_value: pval,
        });
    }

    Ok(OlsFit {
        intercept,
        coefficients,
        r_squared: if sst == 0.0 { None } else { Some(1.0 - sse / sst) },
        residual_df: df,
        sigma2,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-sided p-value `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    // continued fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if libm::fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if libm::fabs(del - 1.0) < EPS {
            break;
        }
    }
    h
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile function (inverse CDF) for `p` in (0, 1).
///
/// Rational approximation (Acklam) followed by one Halley refinement step,
/// accurate to about 1e-15.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log1p(-p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Two-sided normal critical value for a central interval at `level`,
/// e.g. 1.959964 for 0.95.
pub fn two_sided_z(level: f64) -> f64 {
    normal_quantile(0.5 + 0.5 * level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

    #[test]
    fn r_squared_edge_cases() {
        let t = [1.0, 2.0, 4.0];
        assert_eq!(r_squared(&t, &t).unwrap(), Some(1.0));
        let m = mean(&t);
        assert_relative_eq!(r_squared(&[m; 3], &t).unwrap().unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(r_squared(&[1.0, 2.0], &[3.0, 3.0]).unwrap(), None);
        assert!(r_squared(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn r_squared_hand_dataset() {
        // targets 1.1, 1.9, 3.2 against predictions 1, 2, 3:
        // mean 2.0667, SS_tot = 0.9344+0.0278+1.2844 = 2.24667, SS_res = 0.01+0.01+0.04 = 0.06
        let r2 = r_squared(&[1.0, 2.0, 3.0], &[1.1, 1.9, 3.2]).unwrap().unwrap();
        assert_relative_eq!(r2, 1.0 - 0.06 / 2.246_666_666_666_667, epsilon = 1e-12);
    }

    #[test]
    fn t_distribution_matches_statrs() {
        for &df in &[1.0, 3.0, 10.0, 97.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for &t in &[0.0, 0.3, 1.0, 2.1, 4.5, -3.2] {
                let expected = 2.0 * (1.0 - dist.cdf(libm::fabs(t)));
                assert_relative_eq!(
                    student_t_two_sided_p(t, df),
                    expected,
                    epsilon = 1e-10,
                    max_relative = 1e-8
                );
            }
        }
    }

    #[test]
    fn normal_quantile_matches_statrs() {
        let n = Normal::standard();
        for &p in &[1e-10, 0.001, 0.025, 0.3, 0.5, 0.8, 0.975, 0.999_999] {
            assert_relative_eq!(normal_quantile(p), n.inverse_cdf(p), epsilon = 1e-9);
        }
        assert_relative_eq!(two_sided_z(0.95), 1.959_963_984_540_054, epsilon = 1e-12);
    }

    #[test]
    fn ols_recovers_exact_line_and_flags_collinear() {
        let x = Matrix::from_columns(&[
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![2.0, 4.0, 6.0, 8.0, 10.0],
            vec![1.0, 0.0, 1.0, 0.0, 2.0],
        ])
        .unwrap();
        let y: Vec<f64> = (0..5).map(|i| 3.0 + 2.0 * x.get(i, 0) - x.get(i, 2)).collect();
        let fit = ols(&x, &y).unwrap();
        assert_relative_eq!(fit.intercept, 3.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coefficients[0].unwrap().estimate, 2.0, epsilon = 1e-10);
        assert!(fit.coefficients[1].is_none());
        assert_eq!(fit.collinear().collect::<Vec<_>>(), vec![1]);
        assert_eq!(fit.coefficients[0].unwrap().p_value, 0.0);
    }

    #[test]
    fn ols_rejects_wide_design() {
        let x = Matrix::zeros(3, 3);
        assert!(ols(&x, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn fit_line_two_points() {
        let (s, i) = fit_line(&[0.0, 10.0], &[0.0, 1000.0]).unwrap();
        assert_relative_eq!(s, 100.0);
        assert_relative_eq!(i, 0.0);
    }
}
