use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Probabilities are clamped to `[CLAMP_EPS, 1 − CLAMP_EPS]` before the log.
pub const CLAMP_EPS: f64 = 1e-7;

/// Binary cross-entropy averaged over the `K` classes of one clip.
///
/// The gradient is the analytic derivative evaluated at the clamped
/// probability, `(z − t) / (z (1 − z) K)`, so saturated wrong predictions
/// still receive a signal.
pub fn bce_loss(z: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if z.len() != targets.len() {
        return Err(Error::shape("bce_loss targets", z.len(), targets.len()));
    }
    let k = z.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(z.len());
    for (&p, &t) in z.iter().zip(targets) {
        let p = p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        grad.push((p - t) / (p * (1.0 - p) * k));
    }
    Ok((loss / k, grad))
}

/// Mean of [`bce_loss`] over the rows of `z` (`N × K`), with its gradient.
pub fn bce_batch(z: &Tensor2, targets: &Tensor2) -> Result<(f64, Tensor2)> {
    if z.shape() != targets.shape() {
        return Err(Error::shape(
            "bce_batch targets",
            format!("{:?}", z.shape()),
            format!("{:?}", targets.shape()),
        ));
    }
    let n = z.rows() as f64;
    let mut total = 0.0;
    let mut grad = Tensor2::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let (l, g) = bce_loss(z.row(r), targets.row(r))?;
        total += l;
        for (dst, v) in grad.row_mut(r).iter_mut().zip(g) {
            *dst = v / n;
        }
    }
    Ok((total / n, grad))
}
