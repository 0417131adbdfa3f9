//! Dense kernels and layer primitives with hand-written backward passes.

mod activation;
mod batchnorm;
mod dense;
mod dropout;
pub mod gradcheck;
mod tensor;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_scalar, softmax_rows};
pub use batchnorm::{BatchNormCache, BatchNormGrads, BatchNormState};
pub use dense::{DenseGrads, DenseLayer};
pub use dropout::{DropoutMask, DropoutSpec, DEFAULT_RATE as DEFAULT_DROPOUT_RATE};
pub use gradcheck::{grad_check, GradCheckReport};
pub use tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Trainable parameters exposed as slices in a fixed traversal order.
///
/// Gradient containers implement the same trait with the same order, so a
/// parameter and its gradient can be zipped slice by slice.
pub trait Parameterized {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }
}

impl Parameterized for DenseLayer {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

impl Parameterized for DenseGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

impl Parameterized for BatchNormState {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![&self.gamma, &self.beta]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

impl Parameterized for BatchNormGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![&self.gamma, &self.beta]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
