use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rmse_between, MinMax, ResidualDataset};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn default_hidden() -> usize {
    10
}

/// ELM training settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElmConfig {
    #[serde(default = "default_hidden")]
    pub hidden_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Ridge parameter added to the squared singular values.
    #[serde(default)]
    pub regularization: f64,
}

impl Default for ElmConfig {
    fn default() -> Self {
        ElmConfig {
            hidden_size: default_hidden(),
            seed: 0,
            regularization: 0.0,
        }
    }
}

/// Extreme learning machine `f(x) = W² tanh(W¹ x + B¹)`.
///
/// `W¹` and `B¹` are drawn once from the seed and already contain the
/// min-max scaling of the training inputs; only `W²` is fitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ElmModel<T> {
    pub config: ElmConfig,
    pub n_inputs: usize,
    pub n_outputs: usize,
    /// `hidden × inputs`, row-major.
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    /// `outputs × hidden`, row-major.
    pub w2: Vec<T>,
    /// Singular values of `H` dropped by the cutoff.
    pub n_cut: usize,
    pub train_rmse: f64,
    pub zero_rmse: f64,
}

impl<T: Real> ElmModel<T> {
    /// Hidden-layer activations `tanh(W¹ x + B¹)`.
    pub fn hidden(&self, x: &[T]) -> Vec<T> {
        let h = self.config.hidden_size;
        let n = self.n_inputs;
        (0..h)
            .map(|k| {
                let row = &self.w1[k * n..(k + 1) * n];
                let z = row.iter().zip(x).fold(self.b1[k], |s, (&w, &v)| s + w * v);
                z.tanh()
            })
            .collect()
    }
}

/// Fits the output weights by an SVD pseudo-inverse of the hidden-layer
/// matrix (relative cutoff `1e-12`, optional ridge).
pub fn elm_train<T: Real>(data: &ResidualDataset<T>, config: ElmConfig) -> Result<ElmModel<T>> {
    if data.is_empty() || data.n_features() == 0 {
        return Err(Error::Degenerate("empty residual dataset".into()));
    }
    if config.hidden_size == 0 {
        return Err(Error::config("hidden size must be positive"));
    }
    if !(config.regularization >= 0.0) {
        return Err(Error::config("regularization must be non-negative"));
    }
    let n_in = data.n_features();
    let n_out = data.targets[0].len();
    let hsize = config.hidden_size;
    let scaling = MinMax::fit(&data.inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w1 = vec![T::zero(); hsize * n_in];
    let mut b1 = vec![T::zero(); hsize];
    for k in 0..hsize {
        let mut bias = rng.random::<f64>() * 2.0 - 1.0;
        for i in 0..n_in {
            let w = rng.random::<f64>() * 2.0 - 1.0;
            // fold x ↦ 2(x − min)/(max − min) − 1 into the weights
            if !scaling.zero_width(i) {
                let (lo, hi) = (scaling.min[i].as_f64(), scaling.max[i].as_f64());
                let s = 2.0 / (hi - lo);
                w1[k * n_in + i] = T::lit(w * s);
                bias -= w * (s * lo + 1.0);
            }
        }
        b1[k] = T::lit(bias);
    }
    let mut model = ElmModel {
        config,
        n_inputs: n_in,
        n_outputs: n_out,
        w1,
        b1,
        w2: vec![T::zero(); n_out * hsize],
        n_cut: 0,
        train_rmse: 0.0,
        zero_rmse: data.zero_rmse(),
    };

    // Hᵀ: samples × hidden
    let ns = data.len();
    let hidden: Vec<Vec<T>> = data.inputs.iter().map(|x| model.hidden(x)).collect();
    let ht = DMatrix::from_fn(ns, hsize, |j, k| hidden[j][k]);
    let tt = DMatrix::from_fn(ns, n_out, |j, i| data.targets[j][i]);
    let svd = ht.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Degenerate("hidden-layer SVD failed".into())),
    };
    let sigma = svd.singular_values;
    let smax = sigma.iter().fold(T::zero(), |m, &s| if s > m { s } else { m });
    let cutoff = T::lit(1e-12) * smax;
    let ridge = T::lit(config.regularization);
    let utt = u.transpose() * &tt;
    let mut x = DMatrix::<T>::zeros(hsize, n_out);
    for (m, &s) in sigma.iter().enumerate() {
        if !(s > cutoff) || s == T::zero() {
            model.n_cut += 1;
            continue;
        }
        let f = s / (s * s + ridge);
        for k in 0..hsize {
            let v = vt[(m, k)] * f;
            for i in 0..n_out {
                x[(k, i)] += v * utt[(m, i)];
            }
        }
    }
    model.n_cut += hsize.saturating_sub(sigma.len());
    for i in 0..n_out {
        for k in 0..hsize {
            model.w2[i * hsize + k] = x[(k, i)];
        }
    }
    let fit = data
        .inputs
        .iter()
        .map(|c| elm_predict(&model, c))
        .collect::<Result<Vec<_>>>()?;
    model.train_rmse = rmse_between(&data.targets, Some(&fit));
    Ok(model)
}

/// Evaluates the trained network.
pub fn elm_predict<T: Real>(model: &ElmModel<T>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != model.n_inputs {
        return Err(Error::dim(format!(
            "closure input of length {}, expected {}",
            x.len(),
            model.n_inputs
        )));
    }
    let g = model.hidden(x);
    let h = model.config.hidden_size;
    Ok((0..model.n_outputs)
        .map(|i| {
            let row = &model.w2[i * h..(i + 1) * h];
            row.iter().zip(&g).fold(T::zero(), |s, (&w, &v)| s + w * v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_dataset(ns: usize, nf: usize, seed: u64) -> ResidualDataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut col = |n: usize| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect::<Vec<f64>>();
        let inputs: Vec<Vec<f64>> = (0..ns).map(|_| col(nf)).collect();
        let targets: Vec<Vec<f64>> = (0..ns).map(|_| col(nf)).collect();
        ResidualDataset::new((0..ns).map(|j| j as f64).collect(), inputs, targets).unwrap()
    }

    fn normal_equations(model: &ElmModel<f64>, data: &ResidualDataset<f64>) -> DMatrix<f64> {
        let h = model.config.hidden_size;
        let ns = data.len();
        let ht = DMatrix::from_fn(ns, h, |j, k| model.hidden(&data.inputs[j])[k]);
        let tt = DMatrix::from_fn(ns, model.n_outputs, |j, i| data.targets[j][i]);
        if ns >= h {
            (ht.transpose() * &ht).lu().solve(&(ht.transpose() * tt)).unwrap()
        } else {
            // minimum-norm solution of the underdetermined system
            let y = (&ht * ht.transpose()).lu().solve(&tt).unwrap();
            ht.transpose() * y
        }
    }

    #[test]
    fn matches_normal_equations() {
        for (rep, (ns, nf, h)) in [(5, 3, 10), (40, 3, 10), (30, 4, 6), (4, 2, 12)].into_iter().cycle().take(20).enumerate() {
            let data = random_dataset(ns, nf, rep as u64);
            let model = elm_train(&data, ElmConfig { hidden_size: h, seed: 100 + rep as u64, regularization: 0.0 }).unwrap();
            let x = normal_equations(&model, &data);
            let num: f64 = (0..model.n_outputs)
                .flat_map(|i| (0..h).map(move |k| (i, k)))
                .map(|(i, k)| (model.w2[i * h + k] - x[(k, i)]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(num <= 1e-8 * x.norm(), "rep {rep}: {num}");
        }
    }

    #[test]
    fn residual_is_orthogonal_to_hidden_space() {
        let data = random_dataset(30, 3, 7);
        let model = elm_train(&data, ElmConfig::default()).unwrap();
        let h = model.config.hidden_size;
        for i in 0..model.n_outputs {
            for k in 0..h {
                let mut dot = 0.0;
                let mut scale = 0.0;
                for (x, t) in data.inputs.iter().zip(&data.targets) {
                    let g = model.hidden(x);
                    let e = elm_predict(&model, x).unwrap()[i] - t[i];
                    dot += g[k] * e;
                    scale += (g[k] * t[i]).abs();
                }
                assert!(dot.abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn zero_targets_give_zero_model() {
        let mut data = random_dataset(8, 3, 1);
        for t in &mut data.targets {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        let model = elm_train(&data, ElmConfig::default()).unwrap();
        assert_eq!(model.config.hidden_size, 10);
        assert!(model.w2.iter().all(|&w| w == 0.0));
        assert_eq!(elm_predict(&model, &[5.0, -3.0, 1e3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn output_bounded_by_weight_rows() {
        let data = random_dataset(20, 3, 4);
        let model = elm_train(&data, ElmConfig::default()).unwrap();
        let h = model.config.hidden_size;
        let bound: f64 = (0..model.n_outputs)
            .map(|i| model.w2[i * h..(i + 1) * h].iter().map(|w| w.abs()).sum::<f64>())
            .sum();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| (rng.random::<f64>() - 0.5) * 100.0).collect();
            let y = elm_predict(&model, &x).unwrap();
            assert!(y.iter().map(|v| v.abs()).sum::<f64>() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = random_dataset(20, 3, 4);
        let a = elm_train(&data, ElmConfig::default()).unwrap();
        let b = elm_train(&data, ElmConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = elm_train(&data, ElmConfig { seed: 1, ..ElmConfig::default() }).unwrap();
        assert_ne!(a.w1, c.w1);
        assert_eq!(elm_predict(&a, &data.inputs[3]).unwrap(), elm_predict(&b, &data.inputs[3]).unwrap());
        assert!(matches!(elm_predict(&a, &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn ridge_shrinks_weights() {
        let data = random_dataset(30, 3, 2);
        let plain = elm_train(&data, ElmConfig::default()).unwrap();
        let ridge = elm_train(&data, ElmConfig { regularization: 1.0, ..ElmConfig::default() }).unwrap();
        let norm = |m: &ElmModel<f64>| m.w2.iter().map(|w| w * w).sum::<f64>();
        assert!(norm(&ridge) < norm(&plain));
        assert!(ridge.train_rmse >= plain.train_rmse);
    }

    #[test]
    fn constant_hidden_rows_are_cut_not_fatal() {
        let inputs = vec![vec![1.0, 2.0]; 6];
        let targets: Vec<Vec<f64>> = (0..6).map(|j| vec![j as f64, 0.0]).collect();
        let data = ResidualDataset::new((0..6).map(|j| j as f64).collect(), inputs, targets).unwrap();
        let model = elm_train(&data, ElmConfig::default()).unwrap();
        assert!(model.n_cut >= 9);
        assert!(model.w2.iter().all(|w| w.is_finite()));
    }
}
