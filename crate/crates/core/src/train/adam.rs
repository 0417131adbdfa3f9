use crate::error::{Error, Result};
use crate::nn::Parameterized;

pub const DEFAULT_LR: f64 = 0.001;
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam. Moment buffers are allocated on the first step and
/// mirror the parameter slices from then on.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameterized + ?Sized,
        G: Parameterized + ?Sized,
    {
        let grad_slices = grads.param_slices();
        let mut param_slices = params.param_slices_mut();
        let shapes_match = param_slices.len() == grad_slices.len()
            && param_slices
                .iter()
                .zip(&grad_slices)
                .all(|(p, g)| p.len() == g.len());
        if !shapes_match {
            return Err(Error::shape(
                "adam_step",
                format!("{} parameter slices", param_slices.len()),
                format!("{} gradient slices", grad_slices.len()),
            ));
        }
        if self.first.is_empty() {
            self.first = grad_slices.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != grad_slices.len()
            || self
                .first
                .iter()
                .zip(&grad_slices)
                .any(|(m, g)| m.len() != g.len())
        {
            return Err(Error::shape(
                "adam_step moments",
                "the shapes of the first step",
                "different gradient shapes",
            ));
        }

        self.step += 1;
        let t = self.step as i32;
        let correct1 = 1.0 - self.beta1.powi(t);
        let correct2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in param_slices
            .iter_mut()
            .zip(&grad_slices)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / correct1;
                let v_hat = v[i] / correct2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
