use super::tensor::Tensor2;
use super::Mode;
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-column batch normalization.
///
/// Train mode normalizes with the biased batch variance and folds the unbiased
/// variance into the running estimate:
/// `running = momentum · running + (1 − momentum) · batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Values retained by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: Mode,
    normalized: Tensor2,
    inv_std: Vec<f64>,
}

impl BatchNormState {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor2, mode: Mode) -> Result<(Tensor2, BatchNormCache)> {
        let dim = self.dim();
        if x.cols() != dim {
            return Err(Error::shape("batchnorm_forward", dim, x.cols()));
        }
        let n = x.rows();
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::BatchTooSmall(n));
                }
                let mut mean = vec![0.0; dim];
                for r in 0..n {
                    for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; dim];
                for r in 0..n {
                    for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                let unbias = n as f64 / (n as f64 - 1.0);
                for c in 0..dim {
                    self.running_mean[c] =
                        self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean[c];
                    self.running_var[c] = self.momentum * self.running_var[c]
                        + (1.0 - self.momentum) * var[c] * unbias;
                }
                (mean, var)
            }
            Mode::Infer => (self.running_mean.clone(), self.running_var.clone()),
        };
        Ok(self.normalize(x, mode, &mean, &var))
    }

    /// Infer-mode forward without retaining a cache.
    pub fn infer(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.dim() {
            return Err(Error::shape("batchnorm_forward", self.dim(), x.cols()));
        }
        Ok(self
            .normalize(x, Mode::Infer, &self.running_mean, &self.running_var)
            .0)
    }

    fn normalize(
        &self,
        x: &Tensor2,
        mode: Mode,
        mean: &[f64],
        var: &[f64],
    ) -> (Tensor2, BatchNormCache) {
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect();
        let mut normalized = x.clone();
        let mut out = x.clone();
        for r in 0..x.rows() {
            let nrow = normalized.row_mut(r);
            for c in 0..nrow.len() {
                nrow[c] = (nrow[c] - mean[c]) * inv_std[c];
            }
            let orow = out.row_mut(r);
            for c in 0..orow.len() {
                orow[c] = self.gamma[c] * normalized[(r, c)] + self.beta[c];
            }
        }
        (
            out,
            BatchNormCache {
                mode,
                normalized,
                inv_std,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache,
        grad_out: &Tensor2,
    ) -> Result<(Tensor2, BatchNormGrads)> {
        if grad_out.shape() != cache.normalized.shape() {
            return Err(Error::shape(
                "batchnorm_backward",
                format!("{:?}", cache.normalized.shape()),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let dim = self.dim();
        let n = grad_out.rows() as f64;
        let mut gamma = vec![0.0; dim];
        let mut beta = vec![0.0; dim];
        for r in 0..grad_out.rows() {
            for c in 0..dim {
                let g = grad_out[(r, c)];
                gamma[c] += g * cache.normalized[(r, c)];
                beta[c] += g;
            }
        }
        let mut grad_x = Tensor2::zeros(grad_out.rows(), dim);
        match cache.mode {
            Mode::Infer => {
                for r in 0..grad_out.rows() {
                    for c in 0..dim {
                        grad_x[(r, c)] = grad_out[(r, c)] * self.gamma[c] * cache.inv_std[c];
                    }
                }
            }
            Mode::Train => {
                // dxhat = g·γ; dx = inv_std/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
                // where Σdxhat = γ·Σg = γ·dβ and Σ(dxhat·xhat) = γ·dγ.
                for r in 0..grad_out.rows() {
                    for c in 0..dim {
                        let dxhat = grad_out[(r, c)] * self.gamma[c];
                        let xhat = cache.normalized[(r, c)];
                        grad_x[(r, c)] = cache.inv_std[c] / n
                            * (n * dxhat
                                - self.gamma[c] * beta[c]
                                - xhat * self.gamma[c] * gamma[c]);
                    }
                }
            }
        }
        Ok((grad_x, BatchNormGrads { gamma, beta }))
    }
}
