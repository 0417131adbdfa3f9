//! Synthetic weakly labelled bags with known event frames.
//!
//! Draw order from `Rng::new(seed)`:
//!
//! 1. For each class in order, `M` normals normalized to a unit-norm prototype.
//! 2. For each sample: the label count `between(labels_min, labels_max)`, the
//!    classes `choose_distinct(K, count)`, then for each chosen class in
//!    ascending order the event-frame count `between(events_min, events_max)`
//!    and the frames `choose_distinct(T, count)`.
//! 3. Then the features, row-major: `σ · normal() + α · Σ prototype_c[m]`
//!    over the classes whose event frames include `t`, rounded to `f32`.
//!
//! Sample ids are `syn-000000`, `syn-000001`, ...

use std::io::{BufRead, Write};

use super::Sample;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_samples: usize,
    pub frames: usize,
    pub feature_dim: usize,
    pub event_frames_min: usize,
    pub event_frames_max: usize,
    pub labels_per_sample_min: usize,
    pub labels_per_sample_max: usize,
    pub signal_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 8,
            n_samples: 2000,
            frames: 10,
            feature_dim: 32,
            event_frames_min: 1,
            event_frames_max: 3,
            labels_per_sample_min: 1,
            labels_per_sample_max: 2,
            signal_scale: 2.0,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.n_classes == 0 || self.frames == 0 || self.feature_dim == 0 {
            return fail("n_classes, frames and feature_dim must be positive".into());
        }
        if self.n_classes > u16::MAX as usize + 1 {
            return fail(format!("n_classes {} exceeds 65536", self.n_classes));
        }
        if self.event_frames_min == 0
            || self.event_frames_min > self.event_frames_max
            || self.event_frames_max > self.frames
        {
            return fail(format!(
                "need 1 <= event_frames_min ({}) <= event_frames_max ({}) <= frames ({})",
                self.event_frames_min, self.event_frames_max, self.frames
            ));
        }
        if self.labels_per_sample_min == 0
            || self.labels_per_sample_min > self.labels_per_sample_max
            || self.labels_per_sample_max > self.n_classes
        {
            return fail(format!(
                "need 1 <= labels_per_sample_min ({}) <= labels_per_sample_max ({}) <= n_classes ({})",
                self.labels_per_sample_min, self.labels_per_sample_max, self.n_classes
            ));
        }
        if !(self.signal_scale > 0.0 && self.signal_scale.is_finite()) {
            return fail(format!(
                "signal_scale must be > 0, got {}",
                self.signal_scale
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        Ok(())
    }
}

/// Event frames of one assigned class in one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEvents {
    pub class: usize,
    pub frames: Vec<usize>,
}

/// Ground truth for every sample, in sample order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SynthTruth {
    pub sample_ids: Vec<String>,
    pub events: Vec<Vec<ClassEvents>>,
}

impl SynthTruth {
    /// Event frames of `class` in sample `index`, if the class is present.
    pub fn frames_of(&self, index: usize, class: usize) -> Option<&[usize]> {
        self.events[index]
            .iter()
            .find(|e| e.class == class)
            .map(|e| e.frames.as_slice())
    }

    /// One `sample_id<TAB>class<TAB>f1,f2,...` line per (sample, class).
    pub fn write<W: Write>(&self, sink: &mut W) -> Result<()> {
        for (id, events) in self.sample_ids.iter().zip(&self.events) {
            for e in events {
                let frames: Vec<String> = e.frames.iter().map(usize::to_string).collect();
                writeln!(sink, "{id}\t{}\t{}", e.class, frames.join(","))?;
            }
        }
        Ok(())
    }

    /// Parses the sidecar format written by [`write`](Self::write). Records
    /// for one sample must be contiguous.
    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut truth = SynthTruth::default();
        for (lineno, line) in source.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::InvalidConfig(format!("truth line {}: {m}", lineno + 1));
            let mut parts = line.split('\t');
            let (Some(id), Some(class), Some(frames), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad("expected three tab-separated fields"));
            };
            let class: usize = class.parse().map_err(|_| bad("class is not an integer"))?;
            let frames = frames
                .split(',')
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("frame list is not comma-separated integers"))?;
            if truth.sample_ids.last().map(String::as_str) != Some(id) {
                truth.sample_ids.push(id.to_string());
                truth.events.push(Vec::new());
            }
            truth
                .events
                .last_mut()
                .unwrap()
                .push(ClassEvents { class, frames });
        }
        Ok(truth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub samples: Vec<Sample>,
    pub truth: SynthTruth,
    /// `K` unit-norm class prototypes of length `M`.
    pub prototypes: Vec<Vec<f64>>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let (k, t, m) = (cfg.n_classes, cfg.frames, cfg.feature_dim);
    let mut rng = Rng::new(cfg.seed);

    let prototypes: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut p: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            p.iter_mut().for_each(|v| *v /= norm);
            p
        })
        .collect();

    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut truth = SynthTruth::default();
    let mut signal = vec![0.0f64; t * m];
    for n in 0..cfg.n_samples {
        let n_labels = rng.between(cfg.labels_per_sample_min, cfg.labels_per_sample_max);
        let classes = rng.choose_distinct(k, n_labels);
        let mut events = Vec::with_capacity(n_labels);
        for &class in &classes {
            let count = rng.between(cfg.event_frames_min, cfg.event_frames_max);
            let frames = rng.choose_distinct(t, count);
            events.push(ClassEvents { class, frames });
        }

        signal.fill(0.0);
        for e in &events {
            for &f in &e.frames {
                for (s, p) in signal[f * m..(f + 1) * m]
                    .iter_mut()
                    .zip(&prototypes[e.class])
                {
                    *s += cfg.signal_scale * p;
                }
            }
        }
        let features: Vec<f32> = signal
            .iter()
            .map(|&s| (cfg.noise_sigma * rng.normal() + s) as f32)
            .collect();

        let id = format!("syn-{n:06}");
        truth.sample_ids.push(id.clone());
        truth.events.push(events);
        samples.push(Sample {
            id,
            frames: t,
            feature_dim: m,
            features,
            labels: classes,
        });
    }
    Ok(Synthetic {
        samples,
        truth,
        prototypes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{write_dataset, DatasetHeader};

    fn small() -> SynthConfig {
        SynthConfig {
            n_samples: 50,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let encode = |cfg: &SynthConfig| {
            let syn = generate_synthetic(cfg).unwrap();
            let header =
                DatasetHeader::new(cfg.frames, cfg.feature_dim, cfg.n_classes, cfg.n_samples);
            let mut bytes = Vec::new();
            write_dataset(&syn.samples, &header, &mut bytes).unwrap();
            syn.truth.write(&mut bytes).unwrap();
            bytes
        };
        assert_eq!(encode(&small()), encode(&small()));
        let other = SynthConfig { seed: 1, ..small() };
        assert_ne!(encode(&small()), encode(&other));
    }

    #[test]
    fn noise_free_full_event_equals_prototype() {
        let cfg = SynthConfig {
            n_classes: 1,
            n_samples: 3,
            frames: 4,
            feature_dim: 5,
            event_frames_min: 4,
            event_frames_max: 4,
            labels_per_sample_min: 1,
            labels_per_sample_max: 1,
            signal_scale: 1.0,
            noise_sigma: 0.0,
            seed: 9,
        };
        let syn = generate_synthetic(&cfg).unwrap();
        let proto: Vec<f32> = syn.prototypes[0].iter().map(|&v| v as f32).collect();
        let norm: f64 = syn.prototypes[0].iter().map(|v| v * v).sum::<f64>();
        assert!((norm - 1.0).abs() < 1e-12);
        for s in &syn.samples {
            for t in 0..4 {
                assert_eq!(s.frame(t), &proto[..]);
            }
        }
    }

    #[test]
    fn truth_matches_labels() {
        let syn = generate_synthetic(&small()).unwrap();
        for (i, s) in syn.samples.iter().enumerate() {
            assert!((1..=2).contains(&s.labels.len()));
            for class in 0..8 {
                match syn.truth.frames_of(i, class) {
                    Some(frames) => {
                        assert!(s.labels.contains(&class));
                        assert!((1..=3).contains(&frames.len()));
                        assert!(frames.iter().all(|&f| f < 10));
                    }
                    None => assert!(!s.labels.contains(&class)),
                }
            }
        }
    }

    #[test]
    fn truth_sidecar_round_trip() {
        let syn = generate_synthetic(&small()).unwrap();
        let mut text = Vec::new();
        syn.truth.write(&mut text).unwrap();
        let first = String::from_utf8(text.clone()).unwrap();
        assert!(first.lines().next().unwrap().starts_with("syn-000000\t"));
        assert_eq!(SynthTruth::read(&text[..]).unwrap(), syn.truth);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            SynthConfig {
                event_frames_max: 11,
                ..small()
            },
            SynthConfig {
                event_frames_min: 4,
                ..small()
            },
            SynthConfig {
                labels_per_sample_max: 9,
                ..small()
            },
            SynthConfig {
                labels_per_sample_min: 0,
                ..small()
            },
            SynthConfig {
                signal_scale: 0.0,
                ..small()
            },
            SynthConfig {
                noise_sigma: -1.0,
                ..small()
            },
            SynthConfig {
                frames: 0,
                ..small()
            },
        ];
        for cfg in bad {
            assert!(
                matches!(generate_synthetic(&cfg), Err(Error::InvalidConfig(_))),
                "{cfg:?}"
            );
        }
    }
}
