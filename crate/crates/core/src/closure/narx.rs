use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rmse_between, MinMax, ResidualDataset};
use crate::error::{Error, Result};
use crate::scalar::Real;

const CLAMP: f64 = 1.5;

/// NARX network and Levenberg–Marquardt settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NarxConfig {
    pub hidden_size: usize,
    pub seed: u64,
    pub epochs: usize,
    pub mu: f64,
    pub mu_dec: f64,
    pub mu_inc: f64,
    pub mu_max: f64,
    pub max_fail: usize,
    pub min_grad: f64,
    /// Weight decay `λ‖θ‖²` added to the normalized sum of squares.
    pub regularization: f64,
}

impl Default for NarxConfig {
    fn default() -> Self {
        NarxConfig {
            hidden_size: 10,
            seed: 0,
            epochs: 1000,
            mu: 1e-3,
            mu_dec: 0.1,
            mu_inc: 10.0,
            mu_max: 1e10,
            max_fail: 6,
            min_grad: 1e-15,
            regularization: 0.0,
        }
    }
}

/// Outcome of a NARX training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NarxReport {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub stop_reason: String,
    pub gradient_norm: f64,
    /// Teacher-forced mean squared errors in physical units.
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: f64,
    /// One-step (teacher-forced) RMSE on the training block.
    pub train_rmse: f64,
    /// Closed-loop replay RMSE on the training block.
    pub closed_loop_rmse: f64,
    /// Zero-predictor RMSE on the training block.
    pub zero_rmse: f64,
    /// Normalized sum of squares per epoch.
    pub trace: Vec<f64>,
}

/// One-hidden-layer network with input and feedback delay 1:
/// `ℜ̃_j = f(ℜ_j, ℜ_{j−1}, ℜ̃_{j−1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct NarxModel<T> {
    pub config: NarxConfig,
    pub n_inputs: usize,
    pub n_outputs: usize,
    /// `hidden × (2 n_inputs + n_outputs)`, row-major.
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    /// `n_outputs × hidden`, row-major.
    pub w2: Vec<T>,
    pub b2: Vec<T>,
    pub input_norm: MinMax<T>,
    pub output_norm: MinMax<T>,
    pub report: NarxReport,
}

/// Contiguous train/validation/test block sizes.
pub fn narx_splits(n: usize) -> (usize, usize, usize) {
    let val = (0.15 * n as f64).round() as usize;
    let test = (0.05 * n as f64).round() as usize;
    (n - val - test, val, test)
}

#[derive(Clone, Copy)]
struct Layout {
    m: usize,
    h: usize,
    o: usize,
}

impl Layout {
    fn n_params(self) -> usize {
        self.h * (self.m + 1) + self.o * (self.h + 1)
    }
    fn b1(self) -> usize {
        self.h * self.m
    }
    fn w2(self) -> usize {
        self.b1() + self.h
    }
    fn b2(self) -> usize {
        self.w2() + self.o * self.h
    }
}

fn forward<T: Real>(theta: &[T], lay: Layout, z: &[T], a: &mut [T], y: &mut [T]) {
    for k in 0..lay.h {
        let row = &theta[k * lay.m..(k + 1) * lay.m];
        let s = row.iter().zip(z).fold(theta[lay.b1() + k], |s, (&w, &v)| s + w * v);
        a[k] = s.tanh();
    }
    for i in 0..lay.o {
        let row = &theta[lay.w2() + i * lay.h..lay.w2() + (i + 1) * lay.h];
        y[i] = row.iter().zip(a.iter()).fold(theta[lay.b2() + i], |s, (&w, &v)| s + w * v);
    }
}

/// Normalized regressors and targets of the delay-1 pairs `j = 1..n`.
fn regressors<T: Real>(
    data: &ResidualDataset<T>,
    inorm: &MinMax<T>,
    onorm: &MinMax<T>,
) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let (ni, no) = (inorm.len(), onorm.len());
    let norm_in: Vec<Vec<T>> = data
        .inputs
        .iter()
        .map(|x| {
            let mut v = vec![T::zero(); ni];
            inorm.normalize_into(x, &mut v);
            v
        })
        .collect();
    let norm_out: Vec<Vec<T>> = data
        .targets
        .iter()
        .map(|x| {
            let mut v = vec![T::zero(); no];
            onorm.normalize_into(x, &mut v);
            v
        })
        .collect();
    let mut zs = Vec::with_capacity(data.len() - 1);
    let mut ts = Vec::with_capacity(data.len() - 1);
    for j in 1..data.len() {
        let mut z = norm_in[j].clone();
        z.extend_from_slice(&norm_in[j - 1]);
        z.extend_from_slice(&norm_out[j - 1]);
        zs.push(z);
        ts.push(norm_out[j].clone());
    }
    (zs, ts)
}

fn sse<T: Real>(theta: &[T], lay: Layout, zs: &[Vec<T>], ts: &[Vec<T>]) -> f64 {
    let mut a = vec![T::zero(); lay.h];
    let mut y = vec![T::zero(); lay.o];
    let mut s = 0.0;
    for (z, t) in zs.iter().zip(ts) {
        forward(theta, lay, z, &mut a, &mut y);
        for (yi, ti) in y.iter().zip(t) {
            let e = (*yi - *ti).as_f64();
            s += e * e;
        }
    }
    s
}

/// Jacobian of the stacked errors with respect to the parameters, and the errors.
fn jacobian<T: Real>(theta: &[T], lay: Layout, zs: &[Vec<T>], ts: &[Vec<T>]) -> (DMatrix<T>, DVector<T>) {
    let rows = zs.len() * lay.o;
    let mut jac = DMatrix::<T>::zeros(rows, lay.n_params());
    let mut err = DVector::<T>::zeros(rows);
    let mut a = vec![T::zero(); lay.h];
    let mut y = vec![T::zero(); lay.o];
    for (s, (z, t)) in zs.iter().zip(ts).enumerate() {
        forward(theta, lay, z, &mut a, &mut y);
        for i in 0..lay.o {
            let row = s * lay.o + i;
            err[row] = y[i] - t[i];
            for k in 0..lay.h {
                let back = theta[lay.w2() + i * lay.h + k] * (T::one() - a[k] * a[k]);
                for l in 0..lay.m {
                    jac[(row, k * lay.m + l)] = back * z[l];
                }
                jac[(row, lay.b1() + k)] = back;
                jac[(row, lay.w2() + i * lay.h + k)] = a[k];
            }
            jac[(row, lay.b2() + i)] = T::one();
        }
    }
    (jac, err)
}

/// Trains open loop (teacher forcing) with Levenberg–Marquardt on the first
/// block, early stopping on the second, and reports errors on the third.
pub fn narx_train<T: Real>(data: &ResidualDataset<T>, config: NarxConfig) -> Result<NarxModel<T>> {
    if data.len() < 10 {
        return Err(Error::Degenerate(format!(
            "NARX training needs at least 10 samples, got {}",
            data.len()
        )));
    }
    if config.hidden_size == 0 {
        return Err(Error::config("hidden size must be positive"));
    }
    let ni = data.n_features();
    let no = data.targets[0].len();
    let inorm = MinMax::fit(&data.inputs)?;
    let onorm = MinMax::fit(&data.targets)?;
    let (zs, ts) = regressors(data, &inorm, &onorm);
    let (n_train, n_val, n_test) = narx_splits(zs.len());
    let lay = Layout {
        m: 2 * ni + no,
        h: config.hidden_size,
        o: no,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |fan_in: usize| T::lit((rng.random::<f64>() * 2.0 - 1.0) / (fan_in as f64).sqrt());
    let mut theta: Vec<T> = Vec::with_capacity(lay.n_params());
    for _ in 0..lay.h * lay.m + lay.h {
        theta.push(draw(lay.m));
    }
    for _ in 0..lay.o * lay.h + lay.o {
        theta.push(draw(lay.h));
    }

    let (ztr, ttr) = (&zs[..n_train], &ts[..n_train]);
    let (zval, tval) = (&zs[n_train..n_train + n_val], &ts[n_train..n_train + n_val]);
    let lambda = config.regularization;
    let objective = |th: &[T]| sse(th, lay, ztr, ttr) + lambda * th.iter().map(|v| v.as_f64().powi(2)).sum::<f64>();
    let mut perf = objective(&theta);
    let mut best = theta.clone();
    let mut best_val = if n_val > 0 { sse(&theta, lay, zval, tval) } else { f64::INFINITY };
    let mut fails = 0;
    let mut mu = config.mu;
    let mut trace = vec![perf];
    let mut grad_norm = f64::INFINITY;
    let mut epochs = 0;
    let mut stop_reason = String::from("maximum epochs reached");
    for epoch in 0..config.epochs {
        let (jac, err) = jacobian(&theta, lay, ztr, ttr);
        let mut jtj = jac.tr_mul(&jac);
        let mut jte = jac.tr_mul(&err);
        for (d, &th) in theta.iter().enumerate() {
            jtj[(d, d)] += T::lit(lambda);
            jte[d] += T::lit(lambda) * th;
        }
        grad_norm = 2.0 * jte.norm().as_f64();
        if grad_norm < config.min_grad {
            stop_reason = "minimum gradient reached".into();
            break;
        }
        let mut accepted = false;
        while mu <= config.mu_max {
            let mut lhs = jtj.clone();
            for d in 0..lhs.nrows() {
                lhs[(d, d)] += T::lit(mu);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&jte),
                None => {
                    mu *= config.mu_inc;
                    continue;
                }
            };
            let trial: Vec<T> = theta.iter().zip(step.iter()).map(|(&t, &d)| t - d).collect();
            let p = objective(&trial);
            if p.is_finite() && p < perf {
                theta = trial;
                perf = p;
                mu *= config.mu_dec;
                accepted = true;
                break;
            }
            mu *= config.mu_inc;
        }
        if !accepted {
            if epoch == 0 {
                return Err(Error::Training {
                    message: format!("Levenberg-Marquardt damping exceeded {:e} without progress", config.mu_max),
                    trace,
                });
            }
            stop_reason = "maximum damping reached".into();
            break;
        }
        epochs = epoch + 1;
        trace.push(perf);
        if n_val > 0 {
            let v = sse(&theta, lay, zval, tval);
            if v < best_val {
                best_val = v;
                best = theta.clone();
                fails = 0;
            } else {
                fails += 1;
                if fails >= config.max_fail {
                    stop_reason = "validation stop".into();
                    break;
                }
            }
        } else {
            best = theta.clone();
        }
    }
    if n_val == 0 {
        best = theta;
    }

    let mut model = NarxModel {
        config,
        n_inputs: ni,
        n_outputs: no,
        w1: best[..lay.b1()].to_vec(),
        b1: best[lay.b1()..lay.w2()].to_vec(),
        w2: best[lay.w2()..lay.b2()].to_vec(),
        b2: best[lay.b2()..].to_vec(),
        input_norm: inorm,
        output_norm: onorm,
        report: NarxReport {
            n_train,
            n_val,
            n_test,
            epochs,
            stop_reason,
            gradient_norm: grad_norm,
            train_mse: 0.0,
            val_mse: 0.0,
            test_mse: 0.0,
            train_rmse: 0.0,
            closed_loop_rmse: 0.0,
            zero_rmse: 0.0,
            trace,
        },
    };
    let open = narx_open_loop(&model, data)?;
    let block_mse = |range: std::ops::Range<usize>| {
        // pair s predicts column s + 1
        let cols = range.start + 1..range.end + 1;
        let r = rmse_between(&data.targets[cols.clone()], Some(&open[cols]));
        r * r
    };
    model.report.train_mse = block_mse(0..n_train);
    model.report.val_mse = block_mse(n_train..n_train + n_val);
    model.report.test_mse = block_mse(n_train + n_val..n_train + n_val + n_test);
    model.report.train_rmse = model.report.train_mse.sqrt();
    let closed = narx_closed_loop(&model, &data.inputs)?;
    model.report.closed_loop_rmse = rmse_between(&data.targets[1..=n_train], Some(&closed[1..=n_train]));
    model.report.zero_rmse = rmse_between(&data.targets[1..=n_train], None);
    Ok(model)
}

impl<T: Real> NarxModel<T> {
    fn layout(&self) -> Layout {
        Layout {
            m: 2 * self.n_inputs + self.n_outputs,
            h: self.config.hidden_size,
            o: self.n_outputs,
        }
    }

    fn theta(&self) -> Vec<T> {
        let mut t = self.w1.clone();
        t.extend_from_slice(&self.b1);
        t.extend_from_slice(&self.w2);
        t.extend_from_slice(&self.b2);
        t
    }

    fn eval(&self, theta: &[T], now: &[T], prev: &[T], out_prev: &[T], clamp: bool) -> Vec<T> {
        let lay = self.layout();
        let ni = self.n_inputs;
        let mut z = vec![T::zero(); lay.m];
        self.input_norm.normalize_into(now, &mut z[..ni]);
        self.input_norm.normalize_into(prev, &mut z[ni..2 * ni]);
        self.output_norm.normalize_into(out_prev, &mut z[2 * ni..]);
        let mut a = vec![T::zero(); lay.h];
        let mut y = vec![T::zero(); lay.o];
        forward(theta, lay, &z, &mut a, &mut y);
        if clamp {
            let c = T::lit(CLAMP);
            for v in &mut y {
                *v = if *v > c {
                    c
                } else if *v < -c {
                    -c
                } else {
                    *v
                };
            }
        }
        self.output_norm.denormalize(&y)
    }
}

/// One closed-loop prediction; `out_prev` is the caller's previous output.
pub fn narx_predict<T: Real>(model: &NarxModel<T>, now: &[T], prev: &[T], out_prev: &[T]) -> Result<Vec<T>> {
    if now.len() != model.n_inputs || prev.len() != model.n_inputs || out_prev.len() != model.n_outputs {
        return Err(Error::dim(format!(
            "NARX inputs of lengths ({}, {}, {}), expected ({n}, {n}, {})",
            now.len(),
            prev.len(),
            out_prev.len(),
            model.n_outputs,
            n = model.n_inputs
        )));
    }
    Ok(model.eval(&model.theta(), now, prev, out_prev, true))
}

/// Closed-loop replay over a sequence of inputs; the first step uses
/// `ℜ_{−1} = ℜ_0` and `ℜ̃_{−1} = 0`.
pub fn narx_closed_loop<T: Real>(model: &NarxModel<T>, inputs: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(inputs.len());
    let mut last = vec![T::zero(); model.n_outputs];
    for (j, x) in inputs.iter().enumerate() {
        let prev = if j == 0 { x } else { &inputs[j - 1] };
        last = narx_predict(model, x, prev, &last)?;
        out.push(last.clone());
    }
    Ok(out)
}

/// Teacher-forced predictions; column 0 has no predecessor and is zero.
pub fn narx_open_loop<T: Real>(model: &NarxModel<T>, data: &ResidualDataset<T>) -> Result<Vec<Vec<T>>> {
    if data.n_features() != model.n_inputs {
        return Err(Error::dim("dataset does not match the NARX inputs"));
    }
    let theta = model.theta();
    let mut out = vec![vec![T::zero(); model.n_outputs]];
    for j in 1..data.len() {
        out.push(model.eval(&theta, &data.inputs[j], &data.inputs[j - 1], &data.targets[j - 1], false));
    }
    Ok(out)
}
