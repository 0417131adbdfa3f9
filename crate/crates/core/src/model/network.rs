use super::arch::ArchSpec;
use crate::attention::{AttentionCache, AttentionGrads, AttentionHead, LevelPrediction};
use crate::error::{Error, Result};
use crate::nn::{
    grad_check, relu, relu_backward, sigmoid_scalar, BatchNormCache, BatchNormGrads,
    BatchNormState, DenseGrads, DenseLayer, DropoutMask, DropoutSpec, GradCheckReport, Mode,
    Parameterized, Tensor2, DEFAULT_DROPOUT_RATE,
};
use crate::rng::{Rng, Stream};

/// Dense → batch norm → ReLU → dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    pub dense: DenseLayer,
    pub norm: BatchNormState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayerGrads {
    pub dense: DenseGrads,
    pub norm: BatchNormGrads,
}

/// Embedding blocks interleaved with attention heads, followed by a sigmoid
/// layer over the concatenated level predictions.
#[derive(Debug, Clone)]
pub struct MultiLevelModel {
    spec: ArchSpec,
    feature_dim: usize,
    pub dropout_rate: f64,
    pub blocks: Vec<Vec<HiddenLayer>>,
    pub heads: Vec<AttentionHead>,
    /// `KL × K`
    pub output: DenseLayer,
    tape: Option<Tape>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub blocks: Vec<Vec<HiddenLayerGrads>>,
    pub heads: Vec<AttentionGrads>,
    pub output: DenseGrads,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipPrediction {
    pub z: Vec<f64>,
    /// `[y⁽¹⁾, …, y⁽ᴸ⁾]`
    pub u: Vec<f64>,
    pub levels: Vec<LevelPrediction>,
}

#[derive(Debug, Clone)]
struct LayerTape {
    input: Tensor2,
    norm: BatchNormCache,
    normalized: Tensor2,
    dropout: DropoutMask,
}

#[derive(Debug, Clone)]
struct Tape {
    layers: Vec<Vec<LayerTape>>,
    heads: Vec<AttentionCache>,
    u: Tensor2,
    z: Tensor2,
}

impl MultiLevelModel {
    /// Glorot-initialized model. Draw order from the init stream: every hidden
    /// dense layer block by block, then each head (attention before
    /// classifier), then the output layer.
    pub fn build(spec: ArchSpec, feature_dim: usize, init_seed: u64) -> Self {
        let mut rng = Rng::derive(init_seed, Stream::Init, 0);
        let h = spec.hidden_units;
        let mut in_dim = feature_dim;
        let blocks = spec
            .block_depths
            .iter()
            .map(|&depth| {
                (0..depth)
                    .map(|_| {
                        let layer = HiddenLayer {
                            dense: DenseLayer::glorot(in_dim, h, &mut rng),
                            norm: BatchNormState::new(h),
                        };
                        in_dim = h;
                        layer
                    })
                    .collect()
            })
            .collect();
        let heads = (0..spec.levels())
            .map(|_| AttentionHead::glorot(h, spec.n_classes, &mut rng))
            .collect();
        let output = DenseLayer::glorot(spec.n_classes * spec.levels(), spec.n_classes, &mut rng);
        Self {
            spec,
            feature_dim,
            dropout_rate: DEFAULT_DROPOUT_RATE,
            blocks,
            heads,
            output,
            tape: None,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        DropoutSpec::new(rate, Mode::Train)?;
        self.dropout_rate = rate;
        Ok(self)
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn levels(&self) -> usize {
        self.spec.levels()
    }

    fn check_input(&self, x: &Tensor2, frames: usize) -> Result<usize> {
        if frames == 0 {
            return Err(Error::NoFrames);
        }
        if x.cols() != self.feature_dim {
            return Err(Error::shape(
                "model input width",
                self.feature_dim,
                x.cols(),
            ));
        }
        if x.rows() == 0 || !x.rows().is_multiple_of(frames) {
            return Err(Error::shape(
                "model input rows",
                format!("a positive multiple of T={frames}"),
                x.rows(),
            ));
        }
        Ok(x.rows() / frames)
    }

    /// Inference over `x` stacking `N` clips of `frames` rows (`(N·T) × M`).
    /// Uses running batch-norm statistics and no dropout.
    pub fn predict(&self, x: &Tensor2, frames: usize) -> Result<Vec<ClipPrediction>> {
        self.check_input(x, frames)?;
        let mut h = x.clone();
        let mut level_preds = Vec::with_capacity(self.levels());
        for (block, head) in self.blocks.iter().zip(&self.heads) {
            for layer in block {
                h = relu(&layer.norm.infer(&layer.dense.forward(&h)?)?);
            }
            level_preds.push(head.forward_batch(&h, frames)?.0);
        }
        let u = self.concat_levels(&level_preds)?;
        let z = self.output.forward(&u)?.map(sigmoid_scalar);
        Ok(Self::assemble(level_preds, &u, &z))
    }

    /// Forward pass in `mode`. Train mode uses batch statistics (updating the
    /// running estimates), draws dropout masks from `rng`, and retains what
    /// [`backward`](Self::backward) needs.
    pub fn forward(
        &mut self,
        x: &Tensor2,
        frames: usize,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Vec<ClipPrediction>> {
        if mode == Mode::Infer {
            self.tape = None;
            return self.predict(x, frames);
        }
        self.check_input(x, frames)?;
        let dropout = DropoutSpec::new(self.dropout_rate, mode)?;
        let mut h = x.clone();
        let mut layer_tapes = Vec::with_capacity(self.levels());
        let mut head_caches = Vec::with_capacity(self.levels());
        let mut level_preds = Vec::with_capacity(self.levels());
        for (block, head) in self.blocks.iter_mut().zip(&self.heads) {
            let mut tapes = Vec::with_capacity(block.len());
            for layer in block.iter_mut() {
                let affine = layer.dense.forward(&h)?;
                let (normalized, norm) = layer.norm.forward(&affine, mode)?;
                let (out, mask) = dropout.apply(&relu(&normalized), rng);
                tapes.push(LayerTape {
                    input: std::mem::replace(&mut h, out),
                    norm,
                    normalized,
                    dropout: mask,
                });
            }
            let (preds, cache) = head.forward_batch(&h, frames)?;
            layer_tapes.push(tapes);
            head_caches.push(cache);
            level_preds.push(preds);
        }
        let u = self.concat_levels(&level_preds)?;
        let z = self.output.forward(&u)?.map(sigmoid_scalar);
        let out = Self::assemble(level_preds, &u, &z);
        self.tape = Some(Tape {
            layers: layer_tapes,
            heads: head_caches,
            u,
            z,
        });
        Ok(out)
    }

    /// Gradients of every trainable parameter given `∂loss/∂z` (`N × K`) for
    /// the most recent train-mode [`forward`](Self::forward). Consumes that
    /// forward pass.
    pub fn backward(&mut self, grad_z: &Tensor2) -> Result<ModelGrads> {
        let tape = self.tape.take().ok_or(Error::MissingForward)?;
        if grad_z.shape() != tape.z.shape() {
            return Err(Error::shape(
                "model backward grad_z",
                format!("{:?}", tape.z.shape()),
                format!("{:?}", grad_z.shape()),
            ));
        }
        let mut grad_logits = grad_z.clone();
        for (g, &z) in grad_logits.as_mut_slice().iter_mut().zip(tape.z.as_slice()) {
            *g *= z * (1.0 - z);
        }
        let (grad_u, output) = self.output.backward(&tape.u, &grad_logits)?;

        let k = self.n_classes();
        let levels = self.levels();
        let mut head_grads = Vec::with_capacity(levels);
        let mut block_grads = Vec::with_capacity(levels);
        let mut carry: Option<Tensor2> = None;
        for l in (0..levels).rev() {
            let grad_y = grad_u.column_block(l * k, k);
            let (mut grad_h, hg) = self.heads[l].backward(&tape.heads[l], &grad_y)?;
            head_grads.push(hg);
            if let Some(c) = carry.take() {
                grad_h.add_assign(&c)?;
            }
            let mut layer_grads = Vec::with_capacity(self.blocks[l].len());
            for (layer, lt) in self.blocks[l].iter().zip(&tape.layers[l]).rev() {
                let g = lt.dropout.backward(&grad_h);
                let g = relu_backward(&lt.normalized, &g)?;
                let (g, norm) = layer.norm.backward(&lt.norm, &g)?;
                let (g, dense) = layer.dense.backward(&lt.input, &g)?;
                layer_grads.push(HiddenLayerGrads { dense, norm });
                grad_h = g;
            }
            layer_grads.reverse();
            block_grads.push(layer_grads);
            carry = Some(grad_h);
        }
        head_grads.reverse();
        block_grads.reverse();
        Ok(ModelGrads {
            blocks: block_grads,
            heads: head_grads,
            output,
        })
    }

    /// Central-difference check of [`backward`](Self::backward) for the loss
    /// `loss(z) -> (value, ∂value/∂z)`. Dropout must be off in train mode.
    pub fn grad_check<L>(
        &self,
        x: &Tensor2,
        frames: usize,
        mode: Mode,
        loss: L,
    ) -> Result<GradCheckReport>
    where
        L: Fn(&Tensor2) -> Result<(f64, Tensor2)>,
    {
        if mode == Mode::Train && self.dropout_rate > 0.0 {
            return Err(Error::NonDeterministic(format!(
                "dropout rate {} is active in train mode",
                self.dropout_rate
            )));
        }
        let mut rng = Rng::new(0);
        let mut model = self.clone();
        let analytic = match mode {
            Mode::Train => {
                let preds = model.forward(x, frames, mode, &mut rng)?;
                let (_, grad_z) = loss(&stack_z(&preds)?)?;
                model.backward(&grad_z)?.flat_params()
            }
            Mode::Infer => model.infer_mode_grads(x, frames, &loss)?,
        };
        let snapshot = model.clone();
        grad_check(&mut model, &analytic, |m| {
            // keep running statistics identical across evaluations
            restore_running_stats(m, &snapshot);
            let preds = m.forward(x, frames, mode, &mut rng)?;
            Ok(loss(&stack_z(&preds)?)?.0)
        })
    }

    /// Gradient of an infer-mode forward pass: the same backward recursion
    /// with batch norm treated as a fixed affine map.
    fn infer_mode_grads<L>(&mut self, x: &Tensor2, frames: usize, loss: &L) -> Result<Vec<f64>>
    where
        L: Fn(&Tensor2) -> Result<(f64, Tensor2)>,
    {
        let dropout = DropoutSpec::new(self.dropout_rate, Mode::Infer)?;
        let mut rng = Rng::new(0);
        let mut h = x.clone();
        let mut layer_tapes = Vec::new();
        let mut head_caches = Vec::new();
        let mut level_preds = Vec::new();
        for (block, head) in self.blocks.iter_mut().zip(&self.heads) {
            let mut tapes = Vec::new();
            for layer in block.iter_mut() {
                let affine = layer.dense.forward(&h)?;
                let (normalized, norm) = layer.norm.forward(&affine, Mode::Infer)?;
                let (out, mask) = dropout.apply(&relu(&normalized), &mut rng);
                tapes.push(LayerTape {
                    input: std::mem::replace(&mut h, out),
                    norm,
                    normalized,
                    dropout: mask,
                });
            }
            let (preds, cache) = head.forward_batch(&h, frames)?;
            layer_tapes.push(tapes);
            head_caches.push(cache);
            level_preds.push(preds);
        }
        let u = self.concat_levels(&level_preds)?;
        let z = self.output.forward(&u)?.map(sigmoid_scalar);
        let (_, grad_z) = loss(&z)?;
        self.tape = Some(Tape {
            layers: layer_tapes,
            heads: head_caches,
            u,
            z,
        });
        Ok(self.backward(&grad_z)?.flat_params())
    }

    /// Smallest `|pre-activation|` over every hidden ReLU for `x` in `mode`
    /// (dropout off). Central differences with a step near this margin
    /// straddle a kink.
    pub fn relu_margin(&self, x: &Tensor2, frames: usize, mode: Mode) -> Result<f64> {
        self.check_input(x, frames)?;
        let mut scratch = self.clone();
        let mut margin = f64::INFINITY;
        let mut h = x.clone();
        for block in scratch.blocks.iter_mut() {
            for layer in block.iter_mut() {
                let (pre, _) = layer.norm.forward(&layer.dense.forward(&h)?, mode)?;
                margin = pre.as_slice().iter().fold(margin, |m, v| m.min(v.abs()));
                h = relu(&pre);
            }
        }
        Ok(margin)
    }

    fn concat_levels(&self, level_preds: &[Vec<LevelPrediction>]) -> Result<Tensor2> {
        let clips = level_preds.first().map_or(0, Vec::len);
        let k = self.n_classes();
        let mut u = Tensor2::zeros(clips, k * level_preds.len());
        for (l, preds) in level_preds.iter().enumerate() {
            for (n, p) in preds.iter().enumerate() {
                u.row_mut(n)[l * k..(l + 1) * k].copy_from_slice(&p.y);
            }
        }
        Ok(u)
    }

    fn assemble(
        level_preds: Vec<Vec<LevelPrediction>>,
        u: &Tensor2,
        z: &Tensor2,
    ) -> Vec<ClipPrediction> {
        let clips = u.rows();
        let mut per_clip: Vec<Vec<LevelPrediction>> = (0..clips).map(|_| Vec::new()).collect();
        for preds in level_preds {
            for (n, p) in preds.into_iter().enumerate() {
                per_clip[n].push(p);
            }
        }
        per_clip
            .into_iter()
            .enumerate()
            .map(|(n, levels)| ClipPrediction {
                z: z.row(n).to_vec(),
                u: u.row(n).to_vec(),
                levels,
            })
            .collect()
    }
}

/// `N × K` matrix of final probabilities.
pub fn stack_z(preds: &[ClipPrediction]) -> Result<Tensor2> {
    let k = preds.first().map_or(0, |p| p.z.len());
    Tensor2::from_vec(
        preds.len(),
        k,
        preds.iter().flat_map(|p| p.z.iter().copied()).collect(),
    )
}

fn restore_running_stats(model: &mut MultiLevelModel, from: &MultiLevelModel) {
    for (block, src) in model.blocks.iter_mut().zip(&from.blocks) {
        for (layer, s) in block.iter_mut().zip(src) {
            layer.norm.running_mean.clone_from(&s.norm.running_mean);
            layer.norm.running_var.clone_from(&s.norm.running_var);
        }
    }
}

impl Parameterized for MultiLevelModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for layer in self.blocks.iter().flatten() {
            v.extend(layer.dense.param_slices());
            v.extend(layer.norm.param_slices());
        }
        for head in &self.heads {
            v.extend(head.param_slices());
        }
        v.extend(self.output.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for layer in self.blocks.iter_mut().flatten() {
            v.extend(layer.dense.param_slices_mut());
            v.extend(layer.norm.param_slices_mut());
        }
        for head in &mut self.heads {
            v.extend(head.param_slices_mut());
        }
        v.extend(self.output.param_slices_mut());
        v
    }
}

impl Parameterized for ModelGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for layer in self.blocks.iter().flatten() {
            v.extend(layer.dense.param_slices());
            v.extend(layer.norm.param_slices());
        }
        for head in &self.heads {
            v.extend(head.param_slices());
        }
        v.extend(self.output.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for layer in self.blocks.iter_mut().flatten() {
            v.extend(layer.dense.param_slices_mut());
            v.extend(layer.norm.param_slices_mut());
        }
        for head in &mut self.heads {
            v.extend(head.param_slices_mut());
        }
        v.extend(self.output.param_slices_mut());
        v
    }
}
