use super::tensor::Tensor2;
use crate::error::{Error, Result};

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

/// Passes `grad_out` where `x > 0`.
pub fn relu_backward(x: &Tensor2, grad_out: &Tensor2) -> Result<Tensor2> {
    if x.shape() != grad_out.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?}", x.shape()),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let mut out = grad_out.clone();
    for (g, &v) in out.as_mut_slice().iter_mut().zip(x.as_slice()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor2) -> Tensor2 {
    x.map(sigmoid_scalar)
}

/// Softmax along each row, shifted by the row maximum.
pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn relu_definition() {
        let x = Tensor2::from_rows(&[vec![-1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_all_negative() {
        let x = Tensor2::from_rows(&[vec![-1.0, -0.5, -3.0]]).unwrap();
        assert!(relu(&x).as_slice().iter().all(|&v| v == 0.0));
        let g = Tensor2::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(relu_backward(&x, &g)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn relu_gradient_matches_central_difference() {
        let mut rng = Rng::new(21);
        for _ in 0..10 {
            let vals: Vec<f64> = (0..12)
                .map(|_| {
                    let v = rng.normal();
                    // stay away from the kink
                    if v.abs() < 0.05 {
                        v + 0.1
                    } else {
                        v
                    }
                })
                .collect();
            let x = Tensor2::from_vec(3, 4, vals).unwrap();
            let w: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
            let upstream = Tensor2::from_vec(3, 4, w.clone()).unwrap();
            let analytic = relu_backward(&x, &upstream).unwrap();
            let loss = |t: &Tensor2| -> f64 {
                relu(t).as_slice().iter().zip(&w).map(|(a, b)| a * b).sum()
            };
            let h = 1e-5;
            for i in 0..12 {
                let mut plus = x.clone();
                plus.as_mut_slice()[i] += h;
                let mut minus = x.clone();
                minus.as_mut_slice()[i] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let a = analytic.as_slice()[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    rel < 1e-6 || (a - numeric).abs() < 1e-10,
                    "{a} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!(sigmoid_scalar(-800.0) >= 0.0 && sigmoid_scalar(-800.0).is_finite());
        assert_eq!(sigmoid_scalar(800.0), 1.0);
        assert!((sigmoid_scalar(-2.0) + sigmoid_scalar(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_constant_row_is_uniform() {
        let x = Tensor2::from_rows(&[vec![3.0; 5]]).unwrap();
        for &v in softmax_rows(&x).as_slice() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let x = Tensor2::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let s = softmax_rows(&x);
        assert_eq!(s.as_slice()[0], 1.0);
        assert!(s.as_slice()[1] >= 0.0 && s.as_slice()[1] < 1e-300);
    }
}
