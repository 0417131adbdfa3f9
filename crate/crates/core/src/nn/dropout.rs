use super::tensor::Tensor2;
use super::Mode;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_RATE: f64 = 0.4;

/// Inverted dropout: survivors are scaled by `1 / (1 − rate)` at train time so
/// inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub mode: Mode,
}

/// Per-element multiplier applied in train mode (`0` or `1 / (1 − rate)`).
#[derive(Debug, Clone)]
pub struct DropoutMask(Option<Vec<f64>>);

impl DropoutSpec {
    pub fn new(rate: f64, mode: Mode) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate, mode })
    }

    pub fn is_active(&self) -> bool {
        self.mode == Mode::Train && self.rate > 0.0
    }

    /// One uniform draw per element in row-major order; an element is kept
    /// when its draw is `>= rate`.
    pub fn apply(&self, x: &Tensor2, rng: &mut Rng) -> (Tensor2, DropoutMask) {
        if !self.is_active() {
            return (x.clone(), DropoutMask(None));
        }
        let scale = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.as_slice().len())
            .map(|_| {
                if rng.uniform() >= self.rate {
                    scale
                } else {
                    0.0
                }
            })
            .collect();
        let mut out = x.clone();
        for (v, &m) in out.as_mut_slice().iter_mut().zip(&mask) {
            *v *= m;
        }
        (out, DropoutMask(Some(mask)))
    }
}

impl DropoutMask {
    pub fn backward(&self, grad_out: &Tensor2) -> Tensor2 {
        match &self.0 {
            None => grad_out.clone(),
            Some(mask) => {
                let mut g = grad_out.clone();
                for (v, &m) in g.as_mut_slice().iter_mut().zip(mask) {
                    *v *= m;
                }
                g
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Tensor2 {
        Tensor2::from_vec(4, 5, (0..20).map(|i| i as f64 - 7.5).collect()).unwrap()
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = Rng::new(0);
        for mode in [Mode::Train, Mode::Infer] {
            let spec = DropoutSpec::new(0.0, mode).unwrap();
            assert_eq!(spec.apply(&ramp(), &mut rng).0, ramp());
        }
    }

    #[test]
    fn infer_mode_is_identity() {
        let mut rng = Rng::new(0);
        let spec = DropoutSpec::new(0.9, Mode::Infer).unwrap();
        assert_eq!(spec.apply(&ramp(), &mut rng).0, ramp());
    }

    #[test]
    fn rate_must_be_below_one() {
        assert!(DropoutSpec::new(1.0, Mode::Train).is_err());
        assert!(DropoutSpec::new(-0.1, Mode::Train).is_err());
    }

    #[test]
    fn expectation_is_preserved() {
        let mut rng = Rng::new(17);
        let ones = Tensor2::from_vec(1000, 100, vec![1.0; 100_000]).unwrap();
        let spec = DropoutSpec::new(0.4, Mode::Train).unwrap();
        let (out, _) = spec.apply(&ones, &mut rng);
        let mean = out.as_slice().iter().sum::<f64>() / 100_000.0;
        assert!((0.97..=1.03).contains(&mean), "mean {mean}");
    }

    #[test]
    fn backward_reuses_the_mask() {
        let mut rng = Rng::new(2);
        let spec = DropoutSpec::new(0.5, Mode::Train).unwrap();
        let x = Tensor2::from_vec(2, 10, vec![1.0; 20]).unwrap();
        let (out, mask) = spec.apply(&x, &mut rng);
        assert_eq!(mask.backward(&x), out);
    }
}
