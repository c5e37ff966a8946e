//! Surrogates mapping `(T_c, Γ_c)` to a sampled load curve.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CzmError, TSLParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurrogateKind {
    /// Gaussian radial basis interpolant with a linear tail.
    Interpolant,
    /// One hidden layer of `tanh` units.
    Network,
}

#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub hidden: usize,
    /// L2 weight penalty relative to the data misfit.
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: 10,
            l2: 1e-4,
            epochs: 300,
            seed: 7,
            split: [0.80, 0.15, 0.05],
        }
    }
}

#[derive(Clone, Debug)]
enum Model {
    Rbf {
        epsilon: f64,
        centers: Vec<[f64; 2]>,
        /// `n × outputs` kernel weights.
        weights: DMatrix<f64>,
        /// `3 × outputs` coefficients of `1, x, y`.
        tail: DMatrix<f64>,
    },
    Network {
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        w2: DMatrix<f64>,
        b2: DVector<f64>,
        out_mean: DVector<f64>,
        out_scale: DVector<f64>,
        /// Mean squared error (physical units) on the held-out test split.
        test_mse: Option<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct SurrogateModel {
    pub kind: SurrogateKind,
    pub inputs: Vec<TSLParams>,
    pub outputs: Vec<Vec<f64>>,
    /// `[[T_min, T_max], [Γ_min, Γ_max]]` used to map inputs onto `[0, 1]²`.
    pub ranges: [[f64; 2]; 2],
    model: Model,
}

fn normalize(p: &TSLParams, ranges: &[[f64; 2]; 2]) -> [f64; 2] {
    [
        (p.tc - ranges[0][0]) / (ranges[0][1] - ranges[0][0]),
        (p.gamma_c - ranges[1][0]) / (ranges[1][1] - ranges[1][0]),
    ]
}

fn gaussian(epsilon: f64, a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let r2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    (-epsilon * epsilon * r2).exp()
}

fn training_ranges(inputs: &[TSLParams]) -> [[f64; 2]; 2] {
    let span = |f: fn(&TSLParams) -> f64| {
        let lo = inputs.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = inputs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            [lo, hi]
        } else {
            [lo - 0.5, lo + 0.5]
        }
    };
    [span(|p| p.tc), span(|p| p.gamma_c)]
}

impl SurrogateModel {
    /// Trains on `(params, curve loads)` pairs. Normalization ranges default
    /// to the bounding box of the inputs.
    pub fn train(
        samples: &[(TSLParams, Vec<f64>)],
        kind: SurrogateKind,
        ranges: Option<[[f64; 2]; 2]>,
        network: &NetworkConfig,
    ) -> Result<Self, CzmError> {
        if samples.len() < 3 {
            return Err(CzmError::TooFewSamples(samples.len()));
        }
        let outputs = samples[0].1.len();
        if outputs == 0 || samples.iter().any(|s| s.1.len() != outputs) {
            return Err(CzmError::BadCurve(
                "training outputs differ in length".into(),
            ));
        }
        let inputs: Vec<TSLParams> = samples.iter().map(|s| s.0).collect();
        let ranges = ranges.unwrap_or_else(|| training_ranges(&inputs));
        let x: Vec<[f64; 2]> = inputs.iter().map(|p| normalize(p, &ranges)).collect();
        for i in 0..x.len() {
            for j in 0..i {
                if (x[i][0] - x[j][0]).abs() < 1e-12 && (x[i][1] - x[j][1]).abs() < 1e-12 {
                    return Err(CzmError::DuplicateInputs(inputs[i]));
                }
            }
        }
        let y = DMatrix::from_fn(samples.len(), outputs, |i, k| samples[i].1[k]);
        let model = match kind {
            SurrogateKind::Interpolant => fit_rbf(&x, &y)?,
            SurrogateKind::Network => fit_network(&x, &y, network)?,
        };
        Ok(SurrogateModel {
            kind,
            inputs,
            outputs: samples.iter().map(|s| s.1.clone()).collect(),
            ranges,
            model,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn predict(&self, p: &TSLParams) -> Vec<f64> {
        self.predict_normalized(normalize(p, &self.ranges))
    }

    pub(crate) fn predict_normalized(&self, u: [f64; 2]) -> Vec<f64> {
        match &self.model {
            Model::Rbf {
                epsilon,
                centers,
                weights,
                tail,
            } => (0..weights.ncols())
                .map(|k| {
                    let mut v = tail[(0, k)] + tail[(1, k)] * u[0] + tail[(2, k)] * u[1];
                    for (i, c) in centers.iter().enumerate() {
                        v += weights[(i, k)] * gaussian(*epsilon, &u, c);
                    }
                    v
                })
                .collect(),
            Model::Network {
                w1,
                b1,
                w2,
                b2,
                out_mean,
                out_scale,
                ..
            } => {
                let input = DVector::from_vec(vec![2.0 * u[0] - 1.0, 2.0 * u[1] - 1.0]);
                let h = (w1 * input + b1).map(f64::tanh);
                let o = w2 * h + b2;
                o.iter()
                    .zip(out_mean.iter().zip(out_scale.iter()))
                    .map(|(v, (m, s))| m + s * v)
                    .collect()
            }
        }
    }

    /// Held-out test error of a network surrogate, when the split left any
    /// samples for testing.
    pub fn test_mse(&self) -> Option<f64> {
        match &self.model {
            Model::Network { test_mse, .. } => *test_mse,
            Model::Rbf { .. } => None,
        }
    }
}

/// Kernel width relative to the mean nearest-neighbour spacing.
const SHAPE_FACTOR: f64 = 0.3;

fn fit_rbf(x: &[[f64; 2]], y: &DMatrix<f64>) -> Result<Model, CzmError> {
    let n = x.len();
    // shape from the mean nearest-neighbour spacing
    let spacing = x
        .iter()
        .enumerate()
        .map(|(i, a)| {
            x.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / n as f64;
    let epsilon = SHAPE_FACTOR / spacing;

    let m = n + 3;
    let mut a = DMatrix::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = gaussian(epsilon, &x[i], &x[j]);
        }
        let poly = [1.0, x[i][0], x[i][1]];
        for (k, v) in poly.into_iter().enumerate() {
            a[(i, n + k)] = v;
            a[(n + k, i)] = v;
        }
    }
    let mut rhs = DMatrix::zeros(m, y.ncols());
    rhs.rows_mut(0, n).copy_from(y);
    let lu = a.lu();
    let sol = lu.solve(&rhs).ok_or(CzmError::SingularSystem)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(CzmError::SingularSystem);
    }
    Ok(Model::Rbf {
        epsilon,
        centers: x.to_vec(),
        weights: sol.rows(0, n).into_owned(),
        tail: sol.rows(n, 3).into_owned(),
    })
}

struct Net {
    hidden: usize,
    outputs: usize,
}

impl Net {
    fn len(&self) -> usize {
        self.hidden * 3 + self.outputs * (self.hidden + 1)
    }

    fn unpack(&self, w: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let (h, o) = (self.hidden, self.outputs);
        let w1 = DMatrix::from_fn(h, 2, |i, j| w[i * 2 + j]);
        let b1 = DVector::from_fn(h, |i, _| w[2 * h + i]);
        let off = 3 * h;
        let w2 = DMatrix::from_fn(o, h, |i, j| w[off + i * h + j]);
        let b2 = DVector::from_fn(o, |i, _| w[off + o * h + i]);
        (w1, b1, w2, b2)
    }

    /// Residuals over `rows` of the (scaled) data and their Jacobian.
    fn residuals(
        &self,
        w: &DVector<f64>,
        x: &[[f64; 2]],
        y: &DMatrix<f64>,
        rows: &[usize],
    ) -> (DVector<f64>, DMatrix<f64>) {
        let (h, o) = (self.hidden, self.outputs);
        let (w1, b1, w2, b2) = self.unpack(w);
        let mut r = DVector::zeros(rows.len() * o);
        let mut jac = DMatrix::zeros(rows.len() * o, self.len());
        let off = 3 * h;
        for (n, &s) in rows.iter().enumerate() {
            let input = [2.0 * x[s][0] - 1.0, 2.0 * x[s][1] - 1.0];
            let z = &w1 * DVector::from_row_slice(&input) + &b1;
            let a = z.map(f64::tanh);
            let out = &w2 * &a + &b2;
            for k in 0..o {
                let row = n * o + k;
                r[row] = out[k] - y[(s, k)];
                for j in 0..h {
                    jac[(row, off + k * h + j)] = a[j];
                    let back = w2[(k, j)] * (1.0 - a[j] * a[j]);
                    jac[(row, j * 2)] = back * input[0];
                    jac[(row, j * 2 + 1)] = back * input[1];
                    jac[(row, 2 * h + j)] = back;
                }
                jac[(row, off + o * h + k)] = 1.0;
            }
        }
        (r, jac)
    }

    fn loss(
        &self,
        w: &DVector<f64>,
        x: &[[f64; 2]],
        y: &DMatrix<f64>,
        rows: &[usize],
        l2: f64,
    ) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let (r, _) = self.residuals(w, x, y, rows);
        r.norm_squared() + l2 * w.norm_squared()
    }
}

/// Levenberg–Marquardt on the L2-penalized misfit, keeping the weights with
/// the lowest validation error when a validation split exists.
fn fit_network(x: &[[f64; 2]], y: &DMatrix<f64>, cfg: &NetworkConfig) -> Result<Model, CzmError> {
    let (n, outputs) = (x.len(), y.ncols());
    if cfg.hidden == 0 {
        return Err(CzmError::BadCurve(
            "network needs at least one hidden unit".into(),
        ));
    }
    let out_mean = DVector::from_fn(outputs, |k, _| y.column(k).mean());
    let out_scale = DVector::from_fn(outputs, |k, _| {
        let c = y.column(k);
        let s = c
            .iter()
            .map(|v| (v - out_mean[k]).abs())
            .fold(0.0f64, f64::max);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    let ys = DMatrix::from_fn(n, outputs, |i, k| (y[(i, k)] - out_mean[k]) / out_scale[k]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let total: f64 = cfg.split.iter().sum();
    let n_val = ((cfg.split[1] / total) * n as f64).round() as usize;
    let n_test = ((cfg.split[2] / total) * n as f64).round() as usize;
    let n_train = n.saturating_sub(n_val + n_test).max(1);
    let (train, rest) = order.split_at(n_train.min(n));
    let (val, test) = rest.split_at(n_val.min(rest.len()));

    let net = Net {
        hidden: cfg.hidden,
        outputs,
    };
    let p = net.len();
    let mut w = DVector::from_fn(p, |_, _| rng.gen_range(-0.5..0.5));
    let mut mu = 1e-2;
    let mut loss = net.loss(&w, x, &ys, train, cfg.l2);
    let mut best = (w.clone(), net.loss(&w, x, &ys, val, 0.0));
    for _ in 0..cfg.epochs {
        let (r, jac) = net.residuals(&w, x, &ys, train);
        let jt = jac.transpose();
        let grad = &jt * &r + cfg.l2 * &w;
        let jtj = &jt * &jac;
        let mut improved = false;
        for _ in 0..20 {
            let mut lhs = jtj.clone();
            for i in 0..p {
                lhs[(i, i)] += cfg.l2 + mu;
            }
            let Some(chol) = lhs.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let trial = &w - chol.solve(&grad);
            let trial_loss = net.loss(&trial, x, &ys, train, cfg.l2);
            if trial_loss < loss {
                w = trial;
                loss = trial_loss;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !val.is_empty() {
            let v = net.loss(&w, x, &ys, val, 0.0);
            if v < best.1 {
                best = (w.clone(), v);
            }
        }
        if !improved || grad.norm() < 1e-12 {
            break;
        }
    }
    let w = if val.is_empty() { w } else { best.0 };
    let (w1, b1, w2, b2) = net.unpack(&w);
    let test_mse = (!test.is_empty()).then(|| {
        let (r, _) = net.residuals(&w, x, &ys, test);
        let mut sum = 0.0;
        for (idx, v) in r.iter().enumerate() {
            sum += (v * out_scale[idx % outputs]).powi(2);
        }
        sum / r.len() as f64
    });
    if w.iter().any(|v| !v.is_finite()) {
        return Err(CzmError::SingularSystem);
    }
    Ok(Model::Network {
        w1,
        b1,
        w2,
        b2,
        out_mean,
        out_scale,
        test_mse,
    })
}
