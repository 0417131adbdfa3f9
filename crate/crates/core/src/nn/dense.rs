use super::tensor::Tensor2;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected layer computing `x · W + b`, with `W` stored `in_dim × out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weight: Tensor2, bias: Vec<f64>) -> Result<Self> {
        if weight.cols() != bias.len() {
            return Err(Error::shape("DenseLayer::new", weight.cols(), bias.len()));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Tensor2::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights on `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    /// Weights are drawn in row-major order.
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim);
        for w in layer.weight.as_mut_slice() {
            *w = rng.uniform_range(-limit, limit);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("dense_forward", self.in_dim(), x.cols()));
        }
        let mut out = x.matmul(&self.weight)?;
        out.add_row_vector(&self.bias)?;
        Ok(out)
    }

    /// Returns `(grad_x, grads)` for the input `x` seen by [`forward`](Self::forward).
    pub fn backward(&self, x: &Tensor2, grad_out: &Tensor2) -> Result<(Tensor2, DenseGrads)> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(
                "dense_backward input",
                self.in_dim(),
                x.cols(),
            ));
        }
        if grad_out.shape() != (x.rows(), self.out_dim()) {
            return Err(Error::shape(
                "dense_backward grad_out",
                format!("{}x{}", x.rows(), self.out_dim()),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        let grad_x = grad_out.matmul_t(&self.weight)?;
        let weight = x.t_matmul(grad_out)?;
        let bias = grad_out.column_sums();
        Ok((grad_x, DenseGrads { weight, bias }))
    }
}

impl DenseGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weight: Tensor2::zeros(layer.in_dim(), layer.out_dim()),
            bias: vec![0.0; layer.out_dim()],
        }
    }
}
