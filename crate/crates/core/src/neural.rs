//! Feed-forward ReLU networks trained on mean squared error.
//!
//! Parameters live in one flat vector: for every layer, the row-major
//! `out × in` weight block followed by the `out` biases. Hidden layers use
//! ReLU, the output layer is linear.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{stats, Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr")]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    seed: u64,
}

#[derive(Deserialize)]
struct MlpRepr {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    seed: u64,
}

impl TryFrom<MlpRepr> for MlpModel {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        check_sizes(&r.layer_sizes)?;
        let expected = param_count(&r.layer_sizes);
        if r.params.len() != expected {
            return Err(Error::Shape {
                what: "MLP parameter count",
                expected,
                found: r.params.len(),
            });
        }
        if r.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("MLP parameters must be finite"));
        }
        Ok(MlpModel {
            layer_sizes: r.layer_sizes,
            params: r.params,
            seed: r.seed,
        })
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid("an MLP needs at least an input and an output layer"));
    }
    if let Some(i) = layer_sizes.iter().position(|&w| w == 0) {
        return Err(Error::invalid(format!("layer {i} has zero width")));
    }
    Ok(())
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpModel {
    /// Draws weights uniformly from `±sqrt(6 / fan_in)` with zero biases.
    /// Equal seeds give bit-identical parameters.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = libm::sqrt(6.0 / fan_in as f64);
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            params,
            seed,
        })
    }

    /// Builds a model from explicit parameters (same flat layout as [`MlpModel::parameters`]).
    pub fn from_parameters(layer_sizes: &[usize], params: Vec<f64>, seed: u64) -> Result<Self> {
        MlpModel::try_from(MlpRepr {
            layer_sizes: layer_sizes.to_vec(),
            params,
            seed,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                what: "MLP parameter count",
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (offset, fan_in, fan_out)
        self.layer_sizes.windows(2).scan(0usize, |off, w| {
            let here = *off;
            *off += w[0] * w[1] + w[1];
            Some((here, w[0], w[1]))
        })
    }

    /// Prediction for a single input row.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::Shape {
                what: "MLP input width",
                expected: self.input_width(),
                found: x.len(),
            });
        }
        let mut ws = Workspace::new(&self.layer_sizes);
        self.forward_into(x, &mut ws);
        Ok(ws.acts.last().expect("output layer").clone())
    }

    /// Predictions for every row of `x` (rows × output width).
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape {
                what: "MLP input width",
                expected: self.input_width(),
                found: x.cols(),
            });
        }
        let mut ws = Workspace::new(&self.layer_sizes);
        let mut out = Matrix::zeros(x.rows(), self.output_width());
        for r in 0..x.rows() {
            self.forward_into(x.row(r), &mut ws);
            out.row_mut(r).copy_from_slice(ws.acts.last().expect("output layer"));
        }
        Ok(out)
    }

    /// First output of every row; convenience for single-output regressors.
    pub fn predict_column(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict(x)?.column(0))
    }

    fn forward_into(&self, x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        let n_layers = self.layer_sizes.len() - 1;
        for (l, (off, fan_in, fan_out)) in self.layers().enumerate() {
            let (w, b) = self.params[off..off + fan_in * fan_out + fan_out].split_at(fan_in * fan_out);
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let a_in = &prev[l];
            let a_out = &mut next[0];
            for o in 0..fan_out {
                let z = b[o] + dot(&w[o * fan_in..(o + 1) * fan_in], a_in);
                a_out[o] = if l + 1 < n_layers { z.max(0.0) } else { z };
            }
        }
    }

    /// Mean squared error over `rows` of `(x, y)` and its gradient with respect
    /// to the flat parameter vector.
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[f64], rows: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = Workspace::new(&self.layer_sizes);
        let loss = self.accumulate_gradient(x, y, rows, &mut grad, &mut ws);
        (loss, grad)
    }

    fn accumulate_gradient(
        &self,
        x: &Matrix,
        y: &[f64],
        rows: &[usize],
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let layers: Vec<(usize, usize, usize)> = self.layers().collect();
        let n_layers = layers.len();
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &r in rows {
            self.forward_into(x.row(r), ws);
            let out = &ws.acts[n_layers];
            let err = out[0] - y[r];
            loss += err * err;
            ws.deltas[n_layers - 1][0] = 2.0 * err * scale;
            for l in (0..n_layers).rev() {
                let (off, fan_in, fan_out) = layers[l];
                let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                let a_in = &ws.acts[l];
                let (lower, upper) = ws.deltas.split_at_mut(l);
                let delta = &upper[0];
                let w = &self.params[off..off + fan_in * fan_out];
                let mut prev = lower.last_mut();
                if let Some(p) = prev.as_deref_mut() {
                    p.fill(0.0);
                }
                for o in 0..fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    axpy(d, a_in, &mut gw[o * fan_in..(o + 1) * fan_in]);
                    if let Some(p) = prev.as_deref_mut() {
                        axpy(d, &w[o * fan_in..(o + 1) * fan_in], p);
                    }
                }
                if let Some(p) = prev {
                    // ReLU derivative: active iff the stored activation is positive
                    for (pi, ai) in p.iter_mut().zip(a_in) {
                        if *ai <= 0.0 {
                            *pi = 0.0;
                        }
                    }
                }
            }
        }
        loss * scale
    }

    /// Mean squared error over every row.
    pub fn mse(&self, x: &Matrix, y: &[f64]) -> Result<f64> {
        let pred = self.predict_column(x)?;
        Ok(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums let the compiler vectorise the reduction
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(sizes: &[usize]) -> Self {
        Workspace {
            acts: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            deltas: sizes[1..].iter().map(|&s| vec![0.0; s]).collect(),
        }
    }
}

/// Hyper-parameters of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
    /// Classical momentum coefficient; 0 gives plain mini-batch gradient descent.
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 2000,
            batch_size: 32,
            validation_fraction: 0.30,
            patience: 100,
            seed: 0,
            momentum: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction must lie in (0, 1)"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::invalid("epochs, batch_size and patience must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub train: f64,
    pub validation: f64,
}

/// Seeded train/validation partition of `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Split {
    pub fn new(n: usize, validation_fraction: f64, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let n_val = ((n as f64 * validation_fraction) as usize).clamp(1, n.saturating_sub(1).max(1));
        let validation = idx[..n_val].to_vec();
        let train = idx[n_val..].to_vec();
        Split { train, validation }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation loss seen.
    pub model: MlpModel,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub split: Split,
}

impl TrainOutcome {
    pub fn best_validation_loss(&self) -> f64 {
        self.history[self.best_epoch].validation
    }

    /// Running minimum of the validation loss, one entry per epoch.
    pub fn best_envelope(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::INFINITY, |best, e| {
                *best = best.min(e.validation);
                Some(*best)
            })
            .collect()
    }
}

/// Minimises mean squared error by mini-batch gradient descent.
///
/// Rows are split into train/validation by a shuffle seeded with
/// `config.seed`; training stops after `config.patience` epochs without a
/// validation improvement and returns the best-validation parameters.
pub fn train(model: &MlpModel, x: &Matrix, y: &[f64], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if x.rows() != y.len() {
        return Err(Error::Shape {
            what: "training rows",
            expected: x.rows(),
            found: y.len(),
        });
    }
    if x.rows() < 10 {
        return Err(Error::invalid(format!("training needs at least 10 rows, got {}", x.rows())));
    }
    if x.cols() != model.input_width() {
        return Err(Error::Shape {
            what: "MLP input width",
            expected: model.input_width(),
            found: x.cols(),
        });
    }
    if model.output_width() != 1 {
        return Err(Error::invalid("training supports single-output networks"));
    }
    if let Some(r) = (0..x.rows()).find(|&r| x.row(r).iter().any(|v| !v.is_finite()) || !y[r].is_finite()) {
        return Err(Error::invalid(format!("training row {r} contains a non-finite value")));
    }

    let split = Split::new(x.rows(), config.validation_fraction, config.seed);
    if y.iter().all(|v| *v == y[0]) {
        return Ok(fit_constant(model, x, y, split));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut order = split.train.clone();
    let mut grad = vec![0.0; current.params.len()];
    let mut velocity = vec![0.0; current.params.len()];
    let mut ws = Workspace::new(&current.layer_sizes);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            current.accumulate_gradient(x, y, batch, &mut grad, &mut ws);
            for ((p, v), g) in current.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
        }
        let train_loss = subset_mse(&current, x, y, &split.train, &mut ws);
        let val_loss = subset_mse(&current, x, y, &split.validation, &mut ws);
        if !train_loss.is_finite() || !val_loss.is_finite() || current.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                epoch,
                detail: format!("train loss {train_loss}, validation loss {val_loss}"),
            });
        }
        history.push(EpochLoss {
            train: train_loss,
            validation: val_loss,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best.params.copy_from_slice(&current.params);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        split,
    })
}

// A constant target is fitted exactly by the output bias alone.
fn fit_constant(model: &MlpModel, x: &Matrix, y: &[f64], split: Split) -> TrainOutcome {
    let mut m = model.clone();
    let (off, fan_in, fan_out) = m.layers().last().expect("at least one layer");
    let w_end = off + fan_in * fan_out;
    m.params[off..w_end].fill(0.0);
    m.params[w_end..w_end + fan_out].fill(y[0]);
    let mut ws = Workspace::new(&m.layer_sizes);
    let loss = EpochLoss {
        train: subset_mse(&m, x, y, &split.train, &mut ws),
        validation: subset_mse(&m, x, y, &split.validation, &mut ws),
    };
    TrainOutcome {
        model: m,
        history: vec![loss],
        best_epoch: 0,
        split,
    }
}

fn subset_mse(model: &MlpModel, x: &Matrix, y: &[f64], rows: &[usize], ws: &mut Workspace) -> f64 {
    let mut s = 0.0;
    for &r in rows {
        model.forward_into(x.row(r), ws);
        let e = ws.acts.last().expect("output layer")[0] - y[r];
        s += e * e;
    }
    s / rows.len() as f64
}

/// Validation R² of a trained model on its own held-out split.
pub fn validation_r_squared(outcome: &TrainOutcome, x: &Matrix, y: &[f64]) -> Result<Option<f64>> {
    let xv = x.select_rows(&outcome.split.validation);
    let yv: Vec<f64> = outcome.split.validation.iter().map(|&r| y[r]).collect();
    let pred = outcome.model.predict_column(&xv)?;
    stats::r_squared(&pred, &yv)
}

/// Central finite-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

/// Largest relative discrepancy between the analytic MSE gradient over all
/// rows and central finite differences.
pub fn gradient_check(model: &MlpModel, x: &Matrix, y: &[f64]) -> Result<f64> {
    let rows: Vec<usize> = (0..x.rows()).collect();
    let (_, analytic) = model.loss_and_gradient(x, y, &rows);
    compare_with_finite_differences(model, x, y, &analytic)
}

/// Compares a supplied gradient (flat layout) against central finite
/// differences of the MSE over all rows.
pub fn compare_with_finite_differences(model: &MlpModel, x: &Matrix, y: &[f64], analytic: &[f64]) -> Result<f64> {
    if x.rows() != y.len() {
        return Err(Error::Shape {
            what: "gradient check rows",
            expected: x.rows(),
            found: y.len(),
        });
    }
    if analytic.len() != model.params.len() {
        return Err(Error::Shape {
            what: "gradient length",
            expected: model.params.len(),
            found: analytic.len(),
        });
    }
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.params.len() {
        let orig = model.params[i];
        probe.params[i] = orig + FD_STEP;
        let plus = probe.mse(x, y)?;
        probe.params[i] = orig - FD_STEP;
        let minus = probe.mse(x, y)?;
        probe.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[i];
        let denom = libm::fabs(a).max(libm::fabs(numeric)).max(1e-6);
        worst = worst.max(libm::fabs(a - numeric) / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand::Rng;

    pub(super) fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = MlpModel::init(&[4, 16, 16, 16, 1], 7).unwrap();
        let b = MlpModel::init(&[4, 16, 16, 16, 1], 7).unwrap();
        let c = MlpModel::init(&[4, 16, 16, 16, 1], 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.parameters(), c.parameters());
        // four weight layers: three hidden ReLU layers and a linear output
        assert_eq!(a.layer_sizes().len() - 1, 4);
        assert_eq!(a.parameters().len(), 4 * 16 + 16 + 2 * (16 * 16 + 16) + 16 + 1);
    }

    #[test]
    fn init_rejects_degenerate_shapes() {
        assert!(MlpModel::init(&[3], 0).is_err());
        assert!(MlpModel::init(&[3, 0, 1], 0).is_err());
    }

    #[test]
    fn zero_weights_output_bias() {
        let sizes = [3, 5, 1];
        let mut params = vec![0.0; param_count(&sizes)];
        *params.last_mut().unwrap() = 2.5;
        let m = MlpModel::from_parameters(&sizes, params, 0).unwrap();
        assert_eq!(m.forward(&[1.0, -4.0, 9.0]).unwrap(), vec![2.5]);
        assert_eq!(m.forward(&[0.0, 0.0, 0.0]).unwrap(), vec![2.5]);
    }

    #[test]
    fn single_layer_is_affine() {
        // W = [[1, 2], [3, 4]] (out × in), b = [0.5, -1]
        let m = MlpModel::from_parameters(&[2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.5, -1.0], 0).unwrap();
        assert_eq!(m.forward(&[1.0, -1.0]).unwrap(), vec![-0.5, -2.0]);
    }

    #[test]
    fn forward_matches_naive_matrix_oracle() {
        let m = MlpModel::init(&[4, 6, 5, 2], 3).unwrap();
        let x = random_matrix(3, 4, 9);
        let got = m.predict(&x).unwrap();
        // independent evaluation: explicit matrices built from the flat layout
        let sizes = m.layer_sizes().to_vec();
        let p = m.parameters();
        let mut off = 0;
        let mut act: Vec<Vec<f64>> = (0..3).map(|r| x.row(r).to_vec()).collect();
        for (l, w) in sizes.windows(2).enumerate() {
            let (fi, fo) = (w[0], w[1]);
            let weights: Vec<Vec<f64>> = (0..fo).map(|o| p[off + o * fi..off + (o + 1) * fi].to_vec()).collect();
            let bias = &p[off + fi * fo..off + fi * fo + fo];
            off += fi * fo + fo;
            act = act
                .iter()
                .map(|a| {
                    (0..fo)
                        .map(|o| {
                            let z: f64 = bias[o] + (0..fi).map(|i| weights[o][i] * a[i]).sum::<f64>();
                            if l + 2 < sizes.len() {
                                z.max(0.0)
                            } else {
                                z
                            }
                        })
                        .collect()
                })
                .collect();
        }
        for r in 0..3 {
            for c in 0..2 {
                assert_relative_eq!(got.get(r, c), act[r][c], epsilon = 1e-12);
            }
        }
        assert!(m.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_check_linear_model() {
        let m = MlpModel::from_parameters(&[1, 1], vec![0.7, -0.2], 0).unwrap();
        let x = random_matrix(20, 1, 1);
        let y: Vec<f64> = (0..20).map(|r| 1.5 * x.get(r, 0) + 0.3).collect();
        assert!(gradient_check(&m, &x, &y).unwrap() < 1e-8);
    }

    #[test]
    fn gradient_check_relu_network() {
        let m = MlpModel::init(&[5, 8, 8, 8, 1], 21).unwrap();
        let x = random_matrix(30, 5, 2);
        let y: Vec<f64> = (0..30).map(|r| libm::sin(x.get(r, 0)) + x.get(r, 1) * x.get(r, 2)).collect();
        let err = gradient_check(&m, &x, &y).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn gradient_check_detects_wrong_gradient() {
        let m = MlpModel::init(&[3, 6, 1], 5).unwrap();
        let x = random_matrix(15, 3, 4);
        let y: Vec<f64> = (0..15).map(|r| x.get(r, 0) - x.get(r, 2)).collect();
        let rows: Vec<usize> = (0..15).collect();
        let (_, mut g) = m.loss_and_gradient(&x, &y, &rows);
        let last = g.len() - 1;
        g[last] = g[last] * 1.5 + 0.1;
        assert!(compare_with_finite_differences(&m, &x, &y, &g).unwrap() > 1e-2);
    }

    #[test]
    fn trains_constant_target() {
        let x = random_matrix(60, 3, 10);
        let y = vec![5.0; 60];
        let m = MlpModel::init(&[3, 8, 8, 1], 1).unwrap();
        let cfg = TrainConfig {
            momentum: 0.9,
            ..TrainConfig::default()
        };
        let out = train(&m, &x, &y, &cfg).unwrap();
        for p in out.model.predict_column(&x).unwrap() {
            assert!((p - 5.0).abs() < 1e-3, "prediction {p}");
        }
    }

    #[test]
    fn trains_linear_target() {
        let n = 200;
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let x = Matrix::from_columns(&[xs.clone()]).unwrap();
        let y: Vec<f64> = xs.iter().map(|v| 3.0 * v).collect();
        let m = MlpModel::init(&[1, 8, 1], 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 1500,
            ..TrainConfig::default()
        };
        let out = train(&m, &x, &y, &cfg).unwrap();
        let r2 = validation_r_squared(&out, &x, &y).unwrap().unwrap();
        assert!(r2 >= 0.99, "validation R² {r2}");
        // running-best envelope never increases
        let env = out.best_envelope();
        assert!(env.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let x = random_matrix(40, 2, 3);
        let y: Vec<f64> = (0..40).map(|r| x.get(r, 0) * x.get(r, 1)).collect();
        let m = MlpModel::init(&[2, 8, 8, 1], 4).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&m, &x, &y, &cfg).unwrap();
        let b = train(&m, &x, &y, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn divergence_is_reported() {
        let x = random_matrix(30, 2, 3);
        let y: Vec<f64> = (0..30).map(|r| 1e3 * x.get(r, 0)).collect();
        let m = MlpModel::init(&[2, 16, 16, 1], 4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 10.0,
            epochs: 200,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&m, &x, &y, &cfg), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn training_preconditions() {
        let m = MlpModel::init(&[2, 4, 1], 0).unwrap();
        let x = random_matrix(5, 2, 0);
        assert!(train(&m, &x, &[0.0; 5], &TrainConfig::default()).is_err());
        let x = random_matrix(20, 2, 0);
        let bad = TrainConfig {
            validation_fraction: 1.0,
            ..TrainConfig::default()
        };
        assert!(train(&m, &x, &[0.0; 20], &bad).is_err());
    }

    #[test]
    fn serde_rejects_inconsistent_parameters() {
        let repr = MlpRepr {
            layer_sizes: vec![2, 1],
            params: vec![1.0, 2.0],
            seed: 0,
        };
        assert!(MlpModel::try_from(repr).is_err());
    }
}
