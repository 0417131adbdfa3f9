use super::Sample;
use crate::error::{Error, Result};
use crate::nn::Tensor2;
use crate::rng::Rng;

/// Shuffled mini-batches over one epoch.
///
/// The order is a Fisher–Yates permutation drawn from `Rng::new(shuffle_seed)`;
/// the last batch holds the remainder.
pub fn batch_iter(
    samples: &[Sample],
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<impl Iterator<Item = Vec<&Sample>>> {
    let order = epoch_order(samples.len(), batch_size, &mut Rng::new(shuffle_seed))?;
    Ok(order
        .into_iter()
        .map(move |batch| batch.into_iter().map(|i| &samples[i]).collect()))
}

/// Index batches for one epoch, drawing the permutation from `rng`.
pub fn epoch_order(n: usize, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Stacks the frames of `batch` clip-major into an `(N·T) × M` tensor.
pub fn stack_features(batch: &[&Sample]) -> Result<Tensor2> {
    let first = batch.first().ok_or(Error::EmptyDataset)?;
    let (t, m) = (first.frames, first.feature_dim);
    let mut data = Vec::with_capacity(batch.len() * t * m);
    for s in batch {
        if (s.frames, s.feature_dim) != (t, m) {
            return Err(Error::shape(
                "stack_features",
                format!("{t}x{m}"),
                format!("{}x{}", s.frames, s.feature_dim),
            ));
        }
        data.extend(s.features.iter().map(|&v| v as f64));
    }
    Tensor2::from_vec(batch.len() * t, m, data)
}

/// `N × K` multi-hot targets.
pub fn multi_hot(batch: &[&Sample], n_classes: usize) -> Result<Tensor2> {
    let mut out = Tensor2::zeros(batch.len(), n_classes);
    for (n, s) in batch.iter().enumerate() {
        for &l in &s.labels {
            if l >= n_classes {
                return Err(Error::InvalidSample {
                    sample: n,
                    message: format!("label {l} out of range for K={n_classes}"),
                });
            }
            out[(n, l)] = 1.0;
        }
    }
    Ok(out)
}
