//! Central-difference gradient checking.

use super::Parameterized;
use crate::error::{Error, Result};

pub const STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is zero (e.g. a dense bias feeding batch normalization) compare on
/// an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the parameter that produced `max_rel_error`.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` (flattened in [`Parameterized`] order) against central
/// differences of `loss` for every parameter of `subject`. The subject is
/// restored bit-for-bit afterwards.
pub fn grad_check<P, F>(subject: &mut P, analytic: &[f64], mut loss: F) -> Result<GradCheckReport>
where
    P: Parameterized,
    F: FnMut(&mut P) -> Result<f64>,
{
    let count = subject.param_count();
    if analytic.len() != count {
        return Err(Error::shape("grad_check", count, analytic.len()));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: count,
    };
    for index in 0..count {
        let original = get_param(subject, index);
        set_param(subject, index, original + STEP);
        let plus = loss(subject)?;
        set_param(subject, index, original - STEP);
        let minus = loss(subject)?;
        set_param(subject, index, original);
        let numeric = (plus - minus) / (2.0 * STEP);
        let err = relative_error(analytic[index], numeric);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_index = index;
            report.analytic = analytic[index];
            report.numeric = numeric;
        }
    }
    Ok(report)
}

fn locate(slices_lens: impl Iterator<Item = usize>, mut index: usize) -> (usize, usize) {
    for (s, len) in slices_lens.enumerate() {
        if index < len {
            return (s, index);
        }
        index -= len;
    }
    panic!("parameter index out of range");
}

fn get_param<P: Parameterized>(p: &P, index: usize) -> f64 {
    let slices = p.param_slices();
    let (s, i) = locate(slices.iter().map(|s| s.len()), index);
    slices[s][i]
}

fn set_param<P: Parameterized>(p: &mut P, index: usize, value: f64) {
    let lens: Vec<usize> = p.param_slices().iter().map(|s| s.len()).collect();
    let (s, i) = locate(lens.into_iter(), index);
    p.param_slices_mut()[s][i] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{sigmoid_scalar, DenseLayer, Tensor2};
    use crate::rng::Rng;

    fn bce(layer: &DenseLayer, x: &Tensor2, targets: &[f64]) -> f64 {
        let logits = layer.forward(x).unwrap();
        let n = logits.as_slice().len() as f64;
        logits
            .as_slice()
            .iter()
            .zip(targets)
            .map(|(&l, &t)| {
                let z = sigmoid_scalar(l);
                -(t * z.ln() + (1.0 - t) * (1.0 - z).ln())
            })
            .sum::<f64>()
            / n
    }

    #[test]
    fn dense_layer_with_bce_passes() {
        for seed in 0..10 {
            let mut rng = Rng::new(seed);
            let x = Tensor2::from_vec(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
            let mut layer = DenseLayer::glorot(3, 2, &mut rng);
            layer.bias = vec![rng.normal(), rng.normal()];
            let targets: Vec<f64> = (0..8).map(|_| (rng.below(2)) as f64).collect();

            let logits = layer.forward(&x).unwrap();
            let n = 8.0;
            let grad_logits = Tensor2::from_vec(
                4,
                2,
                logits
                    .as_slice()
                    .iter()
                    .zip(&targets)
                    .map(|(&l, &t)| (sigmoid_scalar(l) - t) / n)
                    .collect(),
            )
            .unwrap();
            let (_, grads) = layer.backward(&x, &grad_logits).unwrap();
            let analytic = grads.flat_params();
            let report = grad_check(&mut layer, &analytic, |l| Ok(bce(l, &x, &targets))).unwrap();
            assert!(report.max_rel_error < 1e-6, "{report:?}");
        }
    }

    #[test]
    fn subject_is_restored() {
        let mut rng = Rng::new(3);
        let mut layer = DenseLayer::glorot(2, 2, &mut rng);
        let before = layer.clone();
        let analytic = vec![0.0; layer.param_count()];
        grad_check(&mut layer, &analytic, |l| {
            Ok(l.weight.as_slice().iter().sum())
        })
        .unwrap();
        assert_eq!(layer, before);
    }

    #[test]
    fn wrong_gradient_length_is_rejected() {
        let mut layer = DenseLayer::zeros(2, 2);
        assert!(grad_check(&mut layer, &[0.0], |_| Ok(0.0)).is_err());
    }
}
