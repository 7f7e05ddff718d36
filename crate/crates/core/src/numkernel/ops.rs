use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{dim_err, Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
pub const LEAKY_SLOPE: f64 = 0.01;

/// Forward-pass mode for layers with train/eval behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// `out[i] = x[i]·W + b`
pub fn affine_forward(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols() {
        return Err(dim_err(
            "affine_forward",
            format!(
                "x {:?}, W {:?}, b {:?}",
                x.shape(),
                w.shape(),
                b.shape()
            ),
        ));
    }
    let mut out = x.matmul(w)?;
    for r in 0..out.rows() {
        for (o, &bv) in out.row_mut(r).iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
    Ok(out)
}

/// Gradients of an affine map: `(dx, dW, db)`.
pub fn affine_backward(x: &Matrix, w: &Matrix, dy: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
    let dx = dy.matmul_nt(w)?;
    let dw = x.matmul_tn(dy)?;
    let db = dy.column_sums();
    Ok((dx, dw, db))
}

/// Running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Matrix,
    pub var: Matrix,
}

impl RunningStats {
    pub fn new(width: usize) -> Self {
        Self {
            mean: Matrix::zeros(1, width),
            var: Matrix::filled(1, width, 1.0),
        }
    }

    /// Exponential moving average with momentum [`BN_MOMENTUM`]; `batch_var` is the
    /// biased batch variance and is corrected to the unbiased estimate here.
    pub fn update(&mut self, batch_mean: &Matrix, batch_var: &Matrix, batch_size: usize) {
        let correction = if batch_size > 1 {
            batch_size as f64 / (batch_size as f64 - 1.0)
        } else {
            1.0
        };
        for (r, &m) in self.mean.data_mut().iter_mut().zip(batch_mean.data()) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
        }
        for (r, &v) in self.var.data_mut().iter_mut().zip(batch_var.data()) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v * correction;
        }
    }
}

/// Values retained from a batch-norm forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
    pub mode: Mode,
    pub batch_mean: Matrix,
    pub batch_var: Matrix,
}

/// Batch normalization without side effects; the caller decides whether to fold
/// the returned batch statistics into the running statistics.
pub fn batchnorm_forward_pure(
    x: &Matrix,
    gamma: &Matrix,
    beta: &Matrix,
    running: &RunningStats,
    mode: Mode,
) -> Result<(Matrix, BatchNormCache)> {
    let (n, c) = x.shape();
    if gamma.shape() != (1, c) || beta.shape() != (1, c) || running.mean.shape() != (1, c) {
        return Err(dim_err(
            "batchnorm_forward",
            format!(
                "x {:?}, gamma {:?}, beta {:?}",
                x.shape(),
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let (mean, var) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::DegenerateBatch(format!(
                    "batch norm in train mode needs at least 2 rows, got {n}"
                )));
            }
            let mean = x.column_means();
            let mut var = Matrix::zeros(1, c);
            for row in x.iter_rows() {
                for ((v, &xv), &m) in var.data_mut().iter_mut().zip(row).zip(mean.data()) {
                    *v += (xv - m) * (xv - m);
                }
            }
            let var = var.scale(1.0 / n as f64);
            (mean, var)
        }
        Mode::Eval => (running.mean.clone(), running.var.clone()),
    };
    let inv_std: Vec<f64> = var.data().iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut normalized = Matrix::zeros(n, c);
    let mut out = Matrix::zeros(n, c);
    for r in 0..n {
        let xr = x.row(r);
        for j in 0..c {
            let xh = (xr[j] - mean.data()[j]) * inv_std[j];
            normalized.set(r, j, xh);
            out.set(r, j, gamma.data()[j] * xh + beta.data()[j]);
        }
    }
    Ok((
        out,
        BatchNormCache {
            normalized,
            inv_std,
            mode,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

/// Batch normalization that also updates `state` in train mode.
pub fn batchnorm_forward(
    x: &Matrix,
    gamma: &Matrix,
    beta: &Matrix,
    state: &mut RunningStats,
    mode: Mode,
) -> Result<Matrix> {
    let (out, cache) = batchnorm_forward_pure(x, gamma, beta, state, mode)?;
    if mode == Mode::Train {
        state.update(&cache.batch_mean, &cache.batch_var, x.rows());
    }
    Ok(out)
}

/// Gradients of batch norm: `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    gamma: &Matrix,
    dy: &Matrix,
) -> Result<(Matrix, Matrix, Matrix)> {
    let (n, c) = dy.shape();
    cache.normalized.ensure_same_shape(dy, "batchnorm_backward")?;
    let mut dgamma = Matrix::zeros(1, c);
    let dbeta = dy.column_sums();
    for r in 0..n {
        for j in 0..c {
            dgamma.data_mut()[j] += dy.get(r, j) * cache.normalized.get(r, j);
        }
    }
    let mut dx = Matrix::zeros(n, c);
    match cache.mode {
        Mode::Eval => {
            for r in 0..n {
                for j in 0..c {
                    dx.set(r, j, dy.get(r, j) * gamma.data()[j] * cache.inv_std[j]);
                }
            }
        }
        Mode::Train => {
            let nf = n as f64;
            for j in 0..c {
                let scale = gamma.data()[j] * cache.inv_std[j] / nf;
                let sum_dy = dbeta.data()[j];
                let sum_dy_xh = dgamma.data()[j];
                for r in 0..n {
                    let v = scale
                        * (nf * dy.get(r, j) - sum_dy - cache.normalized.get(r, j) * sum_dy_xh);
                    dx.set(r, j, v);
                }
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

pub fn leaky_relu(x: &Matrix, slope: f64) -> Matrix {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

/// `pre` is the activation input.
pub fn leaky_relu_backward(pre: &Matrix, dy: &Matrix, slope: f64) -> Result<Matrix> {
    pre.zip_map(dy, |p, g| if p >= 0.0 { g } else { slope * g })
}

/// Inverted dropout. Returns the output and, in train mode with a positive
/// rate, the keep mask scaled by `1/(1-rate)`.
pub fn dropout_apply<R: Rng + ?Sized>(
    x: &Matrix,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Matrix, Option<Matrix>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0,1), got {rate}")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Matrix::zeros(x.rows(), x.cols());
    for m in mask.data_mut() {
        *m = if rng.gen::<f64>() < rate { 0.0 } else { keep };
    }
    let out = x.zip_map(&mask, |a, m| a * m)?;
    Ok((out, Some(mask)))
}
