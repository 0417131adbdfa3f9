//! Attention pooling over the frames of a clip.
//!
//! For frame embeddings `h_t` the head computes attention logits
//! `a_t = att(h_t)` and classifier logits `c_t = cls(h_t)`, then
//!
//! ```text
//! v_t    = softmax over the K classes of a_t
//! f_t    = sigmoid(c_t)
//! w_tk   = v_tk / Σ_τ v_τk
//! y_k    = Σ_t w_tk · f_tk
//! ```
//!
//! so each `y_k` is a convex combination of per-frame class probabilities.
//! The time normalization is evaluated as a softmax over `t` of `ln v_tk`,
//! which is the same quantity but cannot underflow to `0 / 0`.

use crate::error::{Error, Result};
use crate::nn::{sigmoid_scalar, DenseGrads, DenseLayer, Parameterized, Tensor2};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    pub att: DenseLayer,
    pub cls: DenseLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub att: DenseGrads,
    pub cls: DenseGrads,
}

/// One level's clip-level output.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPrediction {
    pub y: Vec<f64>,
    /// `T × K`; column `k` is the time distribution of attention for class `k`.
    pub att_weights: Tensor2,
}

/// Forward values retained for [`AttentionHead::backward`].
#[derive(Debug, Clone)]
pub struct AttentionCache {
    frames: usize,
    input: Tensor2,
    /// class-softmax `v`
    attention: Tensor2,
    /// time-normalized `w`
    weights: Tensor2,
    classifier: Tensor2,
    y: Tensor2,
}

impl AttentionHead {
    pub fn new(att: DenseLayer, cls: DenseLayer) -> Result<Self> {
        if att.in_dim() != cls.in_dim() || att.out_dim() != cls.out_dim() {
            return Err(Error::shape(
                "AttentionHead::new",
                format!("{}x{}", att.in_dim(), att.out_dim()),
                format!("{}x{}", cls.in_dim(), cls.out_dim()),
            ));
        }
        Ok(Self { att, cls })
    }

    /// Glorot init, attention layer first.
    pub fn glorot(in_dim: usize, n_classes: usize, rng: &mut Rng) -> Self {
        let att = DenseLayer::glorot(in_dim, n_classes, rng);
        let cls = DenseLayer::glorot(in_dim, n_classes, rng);
        Self { att, cls }
    }

    pub fn in_dim(&self) -> usize {
        self.att.in_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.att.out_dim()
    }

    /// Single clip: `h` is `T × H`.
    pub fn forward(&self, h: &Tensor2) -> Result<LevelPrediction> {
        let frames = h.rows();
        let (mut preds, _) = self.forward_batch(h, frames)?;
        Ok(preds.pop().expect("one clip"))
    }

    /// `h` stacks `N` clips of `frames` rows each, clip-major.
    pub fn forward_batch(
        &self,
        h: &Tensor2,
        frames: usize,
    ) -> Result<(Vec<LevelPrediction>, AttentionCache)> {
        if frames == 0 || h.rows() == 0 {
            return Err(Error::NoFrames);
        }
        if !h.rows().is_multiple_of(frames) {
            return Err(Error::shape(
                "attention_forward",
                format!("a multiple of {frames} rows"),
                h.rows(),
            ));
        }
        if h.cols() != self.in_dim() {
            return Err(Error::shape("attention_forward", self.in_dim(), h.cols()));
        }
        let k = self.n_classes();
        let clips = h.rows() / frames;
        // log-softmax over classes, per frame
        let mut log_v = self.att.forward(h)?;
        for r in 0..log_v.rows() {
            let row = log_v.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|a| (a - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|a| *a -= lse);
        }
        let attention = log_v.map(f64::exp);
        let classifier = self.cls.forward(h)?.map(sigmoid_scalar);

        let mut weights = Tensor2::zeros(h.rows(), k);
        let mut y = Tensor2::zeros(clips, k);
        let mut preds = Vec::with_capacity(clips);
        for n in 0..clips {
            let base = n * frames;
            for c in 0..k {
                let max = (0..frames)
                    .map(|t| log_v[(base + t, c)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for t in 0..frames {
                    let e = (log_v[(base + t, c)] - max).exp();
                    weights[(base + t, c)] = e;
                    total += e;
                }
                let mut acc = 0.0;
                for t in 0..frames {
                    let w = weights[(base + t, c)] / total;
                    weights[(base + t, c)] = w;
                    acc += w * classifier[(base + t, c)];
                }
                y[(n, c)] = acc;
            }
            preds.push(LevelPrediction {
                y: y.row(n).to_vec(),
                att_weights: weights.row_block(base, frames),
            });
        }
        let cache = AttentionCache {
            frames,
            input: h.clone(),
            attention,
            weights,
            classifier,
            y,
        };
        Ok((preds, cache))
    }

    /// `grad_y` is `N × K`; returns the gradient for the stacked frame input.
    pub fn backward(
        &self,
        cache: &AttentionCache,
        grad_y: &Tensor2,
    ) -> Result<(Tensor2, AttentionGrads)> {
        let k = self.n_classes();
        let frames = cache.frames;
        let clips = cache.y.rows();
        if grad_y.shape() != (clips, k) {
            return Err(Error::shape(
                "attention_backward",
                format!("{clips}x{k}"),
                format!("{}x{}", grad_y.rows(), grad_y.cols()),
            ));
        }
        let rows = clips * frames;
        let mut grad_cls_logits = Tensor2::zeros(rows, k);
        let mut grad_att_logits = Tensor2::zeros(rows, k);
        let mut scaled = vec![0.0; k];
        for n in 0..clips {
            for t in 0..frames {
                let r = n * frames + t;
                for c in 0..k {
                    let g = grad_y[(n, c)];
                    let w = cache.weights[(r, c)];
                    let f = cache.classifier[(r, c)];
                    // ∂y/∂f = w and v·∂y/∂v = w·(f − y)
                    grad_cls_logits[(r, c)] = g * w * f * (1.0 - f);
                    scaled[c] = g * w * (f - cache.y[(n, c)]);
                }
                // softmax Jacobian over classes
                let total: f64 = scaled.iter().sum();
                for c in 0..k {
                    grad_att_logits[(r, c)] = scaled[c] - cache.attention[(r, c)] * total;
                }
            }
        }
        let (mut grad_h, att) = self.att.backward(&cache.input, &grad_att_logits)?;
        let (grad_h_cls, cls) = self.cls.backward(&cache.input, &grad_cls_logits)?;
        grad_h.add_assign(&grad_h_cls)?;
        Ok((grad_h, AttentionGrads { att, cls }))
    }
}

impl Parameterized for AttentionHead {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.att.param_slices();
        v.extend(self.cls.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.att.param_slices_mut();
        v.extend(self.cls.param_slices_mut());
        v
    }
}

impl Parameterized for AttentionGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.att.param_slices();
        v.extend(self.cls.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.att.param_slices_mut();
        v.extend(self.cls.param_slices_mut());
        v
    }
}

/// Attention mass on known event frames, pooled over (clip, class) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concentration {
    pub pairs: usize,
    /// Mean of `Σ_{t ∈ events} w_tk`.
    pub mean_mass: f64,
    /// Mean of `|events| / T`, the mass a uniform distribution would give.
    pub mean_uniform_share: f64,
}

impl Concentration {
    pub fn ratio(&self) -> f64 {
        self.mean_mass / self.mean_uniform_share
    }
}

/// Pools `(weights T × K, class, event frames)` triples.
pub fn concentration<'a, I>(pairs: I) -> Result<Concentration>
where
    I: IntoIterator<Item = (&'a Tensor2, usize, &'a [usize])>,
{
    let (mut n, mut mass, mut share) = (0usize, 0.0, 0.0);
    for (weights, class, frames) in pairs {
        let t = weights.rows();
        if class >= weights.cols() {
            return Err(Error::shape("concentration class", weights.cols(), class));
        }
        if frames.is_empty() || frames.iter().any(|&f| f >= t) {
            return Err(Error::InvalidSample {
                sample: n,
                message: format!("event frames {frames:?} do not fit T={t}"),
            });
        }
        mass += frames.iter().map(|&f| weights[(f, class)]).sum::<f64>();
        share += frames.len() as f64 / t as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoPositives);
    }
    Ok(Concentration {
        pairs: n,
        mean_mass: mass / n as f64,
        mean_uniform_share: share / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn random_head(h: usize, k: usize, rng: &mut Rng) -> AttentionHead {
        let mut head = AttentionHead::glorot(h, k, rng);
        for b in head.att.bias.iter_mut().chain(head.cls.bias.iter_mut()) {
            *b = 0.3 * rng.normal();
        }
        head
    }

    fn random_frames(t: usize, h: usize, rng: &mut Rng) -> Tensor2 {
        Tensor2::from_vec(t, h, (0..t * h).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn single_frame_reduces_to_classifier() {
        let mut rng = Rng::new(1);
        let head = random_head(5, 3, &mut rng);
        let h = random_frames(1, 5, &mut rng);
        let pred = head.forward(&h).unwrap();
        let logits = head.cls.forward(&h).unwrap();
        for c in 0..3 {
            assert_eq!(pred.y[c], sigmoid_scalar(logits[(0, c)]));
            assert!((pred.att_weights[(0, c)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_attention_layer_is_mean_pooling() {
        let mut rng = Rng::new(2);
        let mut head = random_head(4, 3, &mut rng);
        head.att = DenseLayer::zeros(4, 3);
        let h = random_frames(6, 4, &mut rng);
        let pred = head.forward(&h).unwrap();
        let f = head.cls.forward(&h).unwrap();
        for c in 0..3 {
            let mean = (0..6).map(|t| sigmoid_scalar(f[(t, c)])).sum::<f64>() / 6.0;
            assert!((pred.y[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let head = AttentionHead::glorot(3, 2, &mut Rng::new(0));
        assert!(matches!(
            head.forward(&Tensor2::zeros(0, 3)),
            Err(Error::NoFrames)
        ));
    }

    #[test]
    fn batched_forward_matches_per_clip_forward() {
        let mut rng = Rng::new(3);
        let head = random_head(4, 3, &mut rng);
        let h = random_frames(3 * 5, 4, &mut rng);
        let (preds, _) = head.forward_batch(&h, 5).unwrap();
        for n in 0..3 {
            let single = head.forward(&h.row_block(n * 5, 5)).unwrap();
            assert_eq!(single, preds[n]);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(4);
        let head = random_head(4, 3, &mut rng);
        let h = random_frames(10, 4, &mut rng);
        let (_, cache) = head.forward_batch(&h, 5).unwrap();
        let (gh, grads) = head.backward(&cache, &Tensor2::zeros(2, 3)).unwrap();
        assert!(gh.as_slice().iter().all(|&v| v == 0.0));
        assert!(grads.flat_params().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_gradient_skips_attention_path() {
        let mut rng = Rng::new(5);
        let head = random_head(4, 3, &mut rng);
        let h = random_frames(1, 4, &mut rng);
        let (_, cache) = head.forward_batch(&h, 1).unwrap();
        let g = Tensor2::from_rows(&[vec![0.3, -1.0, 2.0]]).unwrap();
        let (_, grads) = head.backward(&cache, &g).unwrap();
        for &v in grads.att.weight.as_slice().iter().chain(&grads.att.bias) {
            assert!(v.abs() < 1e-12, "{v}");
        }
        assert!(grads.cls.bias.iter().any(|v| v.abs() > 1e-3));
    }

    fn weighted_loss(head: &AttentionHead, h: &Tensor2, frames: usize, w: &Tensor2) -> f64 {
        let (preds, _) = head.forward_batch(h, frames).unwrap();
        preds
            .iter()
            .enumerate()
            .map(|(n, p)| p.y.iter().zip(w.row(n)).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    #[test]
    fn gradients_match_central_differences() {
        for seed in 0..10 {
            let mut rng = Rng::new(100 + seed);
            let mut head = random_head(4, 3, &mut rng);
            let frames = 4;
            let h = random_frames(2 * frames, 4, &mut rng);
            let w = random_frames(2, 3, &mut rng);
            let (_, cache) = head.forward_batch(&h, frames).unwrap();
            let (grad_h, grads) = head.backward(&cache, &w).unwrap();

            let report = grad_check(&mut head, &grads.flat_params(), |p| {
                Ok(weighted_loss(p, &h, frames, &w))
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-5, "{report:?}");

            let step = 1e-5;
            for i in 0..h.as_slice().len() {
                let mut plus = h.clone();
                plus.as_mut_slice()[i] += step;
                let mut minus = h.clone();
                minus.as_mut_slice()[i] -= step;
                let numeric = (weighted_loss(&head, &plus, frames, &w)
                    - weighted_loss(&head, &minus, frames, &w))
                    / (2.0 * step);
                let err = crate::nn::gradcheck::relative_error(grad_h.as_slice()[i], numeric);
                assert!(err < 1e-5, "h[{i}]: {err}");
            }
        }
    }

    #[test]
    fn concentration_pools_pairs() {
        let w = Tensor2::from_rows(&[vec![0.7, 0.25], vec![0.2, 0.25], vec![0.1, 0.5]]).unwrap();
        let c = concentration([(&w, 0, &[0usize][..]), (&w, 1, &[1, 2][..])]).unwrap();
        assert_eq!(c.pairs, 2);
        assert!((c.mean_mass - 0.725).abs() < 1e-15);
        assert!((c.mean_uniform_share - 0.5).abs() < 1e-15);
        assert!((c.ratio() - 1.45).abs() < 1e-12);
        assert!(concentration([(&w, 2, &[0usize][..])]).is_err());
        assert!(concentration([(&w, 0, &[3usize][..])]).is_err());
        assert!(concentration(std::iter::empty()).is_err());
    }
}
