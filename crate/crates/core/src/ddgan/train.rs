//! Model state, the alternating discriminator/generator update, and checkpoints.

use super::bridge::{coefficients_to_tensor, pixels_to_tensor, target_from_gt};
use super::config::{InputKind, ModelConfig, OptimizerConfig, TrainConfig};
use super::loss::total_loss_var;
use super::nets::{Generator, GlobalDiscriminator, LocalDiscriminator};
use crate::error::{Error, Result};
use crate::imageio;
use cdbin_autodiff::{checkpoint, Adam, BnMode, ParamId, ParamStore, Tape, Tensor};
use cdbin_jpeg::{decode_image, partial_decode, PixelImage};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One network input with its binary target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `(64, H/8, W/8)` coefficients or `(1, H, W)` pixels.
    pub input: Tensor<f32>,
    /// `(1, H, W)` with 1 for background and 0 for text.
    pub target: Tensor<f32>,
}

/// Network input for a stored tile. Compressed input stops after entropy decoding.
pub fn input_from_stream(stream: &[u8], kind: InputKind) -> Result<Tensor<f32>> {
    match kind {
        InputKind::Compressed => {
            let ci = partial_decode(stream)?;
            Ok(coefficients_to_tensor(&ci.components[0]))
        }
        InputKind::Pixels => pixels_to_tensor(&imageio::to_gray(&decode_image(stream)?)),
    }
}

impl Sample {
    pub fn from_stream(stream: &[u8], ground_truth: &PixelImage, kind: InputKind) -> Result<Self> {
        Ok(Sample { input: input_from_stream(stream, kind)?, target: target_from_gt(ground_truth)? })
    }
}

/// One line of the metrics log. Wall time is logged separately so this record is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub epoch: usize,
    pub l_gen: f64,
    pub l_global: f64,
    pub l_local: f64,
    pub l_total: f64,
    /// Discriminator losses, each the mean of the real and fake BCE terms.
    pub d_global: f64,
    pub d_local: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    step: u64,
    train: Option<TrainConfig>,
}

/// Generator, both discriminators, their optimizers and the shared parameter store.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore<f32>,
    pub generator: Generator,
    pub global: GlobalDiscriminator,
    pub local: LocalDiscriminator,
    g_opt: Adam<f32>,
    d_opt: Adam<f32>,
    g_ids: Vec<ParamId>,
    d_ids: Vec<ParamId>,
    step: u64,
}

fn stack(items: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let shape = items.first().ok_or(Error::EmptyBatch)?.shape().to_vec();
    let mut data = Vec::with_capacity(items.len() * items[0].len());
    for t in items {
        if t.shape() != shape.as_slice() {
            return Err(Error::Shape(format!("batch mixes shapes {shape:?} and {:?}", t.shape())));
        }
        data.extend_from_slice(t.data());
    }
    let mut full = vec![items.len()];
    full.extend(shape);
    Ok(Tensor::new(&full, data)?)
}

/// Adds the instance noise for `(step, phase)`; a no-op when the deviation is zero.
fn add_noise(t: &mut Tensor<f32>, cfg: &TrainConfig, step: u64, phase: u64) {
    if cfg.instance_noise <= 0.0 {
        return;
    }
    let seed = cfg.seed ^ step.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (phase << 63);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, cfg.instance_noise as f32).expect("validated deviation");
    t.data_mut().iter_mut().for_each(|v| *v += normal.sample(&mut rng));
}

fn concat_batch(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>> {
    if a.shape()[1..] != b.shape()[1..] {
        return Err(Error::Shape(format!("cannot stack {:?} and {:?}", a.shape(), b.shape())));
    }
    let mut shape = a.shape().to_vec();
    shape[0] += b.shape()[0];
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Ok(Tensor::new(&shape, data)?)
}

impl Model {
    /// Model whose generator and discriminators share one optimizer configuration.
    pub fn new(config: &ModelConfig, optimizer: &OptimizerConfig, seed: u64) -> Result<Self> {
        Self::with_optimizers(config, optimizer, optimizer, seed)
    }

    /// Model configured for `train`, including a separate discriminator optimizer if one is set.
    pub fn for_training(train: &TrainConfig) -> Result<Self> {
        Self::with_optimizers(&train.model, &train.optimizer, &train.discriminator_optimizer(), train.seed)
    }

    pub fn with_optimizers(config: &ModelConfig, g_optimizer: &OptimizerConfig, d_optimizer: &OptimizerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let generator = Generator::new(&mut store, &config.generator, config.input, &mut rng)?;
        let global = GlobalDiscriminator::new(&mut store, &config.global_disc, config.tile_size, &mut rng)?;
        let local = LocalDiscriminator::new(&mut store, &config.local_disc, config.patch_size, &mut rng)?;
        let g_ids = store.trainable_with_prefix(Generator::PREFIX);
        let mut d_ids = store.trainable_with_prefix(GlobalDiscriminator::PREFIX);
        d_ids.extend(store.trainable_with_prefix(LocalDiscriminator::PREFIX));
        let g_opt = Adam::new(&store, g_ids.clone(), (*g_optimizer).into());
        let d_opt = Adam::new(&store, d_ids.clone(), (*d_optimizer).into());
        Ok(Model { config: config.clone(), store, generator, global, local, g_opt, d_opt, g_ids, d_ids, step: 0 })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn generator_params(&self) -> &[ParamId] {
        &self.g_ids
    }

    pub fn discriminator_params(&self) -> &[ParamId] {
        &self.d_ids
    }

    fn batch_tensors(&self, batch: &[Sample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let t = self.config.tile_size;
        let (c, side) = match self.config.input {
            InputKind::Compressed => (64, t / 8),
            InputKind::Pixels => (1, t),
        };
        for s in batch {
            if s.input.shape() != [c, side, side] || s.target.shape() != [1, t, t] {
                return Err(Error::Unpaired {
                    inputs: format!("{:?}", s.input.shape()),
                    targets: format!("{:?}", s.target.shape()),
                });
            }
        }
        let inputs = stack(&batch.iter().map(|s| &s.input).collect::<Vec<_>>())?;
        let targets = stack(&batch.iter().map(|s| &s.target).collect::<Vec<_>>())?;
        Ok((inputs, targets))
    }

    /// Generator probabilities `(N, 1, H, W)` for stacked inputs.
    pub fn predict_batch(&self, inputs: Tensor<f32>) -> Result<Tensor<f32>> {
        let mut tape = Tape::new(&self.store);
        let x = tape.constant(inputs);
        let p = self.generator.forward(&mut tape, x)?;
        Ok(tape.value(p).clone())
    }

    /// Generator probabilities `(1, H, W)` for one input.
    pub fn predict(&self, input: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut shape = vec![1];
        shape.extend_from_slice(input.shape());
        let out = self.predict_batch(input.clone().reshape(&shape)?)?;
        let s = out.shape()[1..].to_vec();
        Ok(out.reshape(&s)?)
    }

    /// Mean global and mean local scores of maps `(N, 1, H, W)` in inference mode.
    pub fn discriminator_scores(&self, maps: &Tensor<f32>) -> Result<(f64, f64)> {
        let mut tape = Tape::new(&self.store);
        let m = tape.constant(maps.clone());
        let g = self.global.forward(&mut tape, m, BnMode::Eval)?;
        let l = self.local.forward_maps(&mut tape, m, BnMode::Eval)?;
        let mean = |t: &Tensor<f32>| t.data().iter().map(|&v| v as f64).sum::<f64>() / t.len() as f64;
        Ok((mean(tape.value(g)), mean(tape.value(l))))
    }

    /// One discriminator update on detached fakes followed by one generator update.
    pub fn train_step(&mut self, batch: &[Sample], cfg: &TrainConfig, epoch: usize) -> Result<MetricsRecord> {
        let (inputs, targets) = self.batch_tensors(batch)?;
        let n = batch.len();
        let patches_per_map = (self.config.tile_size / self.config.patch_size).pow(2);
        let ones = |k: usize| Tensor::<f32>::full(&[k, 1], 1.0);
        let zeros = |k: usize| Tensor::<f32>::zeros(&[k, 1]);

        let fake = self.predict_batch(inputs.clone())?;

        // discriminator update
        self.store.zero_grads();
        let (d_global, d_local, stats) = {
            let mut tape = Tape::new(&self.store);
            // real and fake share one batch so batch-norm statistics cannot separate them
            let mut both = concat_batch(&targets, &fake)?;
            add_noise(&mut both, cfg, self.step, 0);
            let both = tape.constant(both);
            let g_both = self.global.logits(&mut tape, both, BnMode::Train)?;
            let l_both = self.local.logits_maps(&mut tape, both, BnMode::Train)?;
            let k = patches_per_map;
            let labels = |per: usize| concat_batch(&ones(n * per), &zeros(n * per));
            let dg = tape.bce_loss_logits(g_both, &labels(1)?)?;
            let dl = tape.bce_loss_logits(l_both, &labels(k)?)?;
            let total = tape.add(dg, dl)?;
            let grads = tape.backward(total)?;
            let (vg, vl) = (tape.value(dg).item() as f64, tape.value(dl).item() as f64);
            let stats = tape.into_stat_updates();
            let d_ids = &self.d_ids;
            grads.accumulate_into(&mut self.store, |id| d_ids.contains(&id))?;
            (vg, vl, stats)
        };
        self.d_opt.step(&mut self.store)?;
        self.store.apply_stat_updates(&stats, cfg.bn_momentum as f32);

        // generator update through frozen discriminators
        self.store.zero_grads();
        let record = {
            let mut tape = Tape::new(&self.store);
            tape.freeze(self.d_ids.iter().copied());
            let x = tape.constant(inputs);
            let z = self.generator.logits(&mut tape, x)?;
            let p = tape.sigmoid(z)?;
            let l_gen = tape.focal_loss_logits(z, &targets, cfg.focal_alpha, cfg.focal_gamma)?;
            // fakes are scored in the same mixed batch the discriminators were trained on
            let real = tape.constant(targets.clone());
            let mut both = tape.concat_batch(real, p)?;
            if cfg.instance_noise > 0.0 {
                let mut noise = Tensor::zeros(tape.shape(both));
                add_noise(&mut noise, cfg, self.step, 1);
                let noise = tape.constant(noise);
                both = tape.add(both, noise)?;
            }
            let g = self.global.logits(&mut tape, both, BnMode::Train)?;
            let g = tape.slice_batch(g, n, n)?;
            let l_global = tape.bce_loss_logits(g, &ones(n))?;
            let k = patches_per_map;
            let l = self.local.logits_maps(&mut tape, both, BnMode::Train)?;
            let l = tape.slice_batch(l, n * k, n * k)?;
            let l_local = tape.bce_loss_logits(l, &ones(n * k))?;
            let total = total_loss_var(&mut tape, l_global, l_local, l_gen, &cfg.weights_at(self.step + 1))?;
            let grads = tape.backward(total)?;
            let v = |var| tape.value(var).item() as f64;
            let record = MetricsRecord {
                step: self.step + 1,
                epoch,
                l_gen: v(l_gen),
                l_global: v(l_global),
                l_local: v(l_local),
                l_total: v(total),
                d_global,
                d_local,
            };
            let g_ids = &self.g_ids;
            grads.accumulate_into(&mut self.store, |id| g_ids.contains(&id))?;
            record
        };
        self.g_opt.step(&mut self.store)?;
        self.step += 1;
        for v in [record.l_gen, record.l_global, record.l_local, record.l_total, record.d_global, record.d_local] {
            if !v.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
        }
        Ok(record)
    }

    pub fn to_checkpoint(&self, train: Option<&TrainConfig>) -> Result<Vec<u8>> {
        let meta = CheckpointMeta { model: self.config.clone(), step: self.step, train: train.cloned() };
        let meta = serde_json::to_string(&meta)?;
        Ok(checkpoint::encode(&meta, &self.store, &[("generator", &self.g_opt), ("discriminators", &self.d_opt)])?)
    }

    pub fn save(&self, path: &Path, train: Option<&TrainConfig>) -> Result<()> {
        use crate::error::IoContext;
        std::fs::write(path, self.to_checkpoint(train)?).at(path)
    }

    /// Restores a model and its optimizer state. Returns the stored training config if any.
    pub fn from_checkpoint(bytes: &[u8]) -> Result<(Self, Option<TrainConfig>)> {
        let ck = checkpoint::decode::<f32>(bytes)?;
        let meta: CheckpointMeta = serde_json::from_str(&ck.metadata)?;
        let g_opt = meta.train.as_ref().map(|t| t.optimizer).unwrap_or_default();
        let d_opt = meta.train.as_ref().map(|t| t.discriminator_optimizer()).unwrap_or_default();
        let mut model = Model::with_optimizers(&meta.model, &g_opt, &d_opt, 0)?;
        if model.store.len() != ck.store.len() {
            return Err(Error::CheckpointMismatch(format!("{} stored tensors, model has {}", ck.store.len(), model.store.len())));
        }
        model.store.copy_values_from(&ck.store).map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
        for (name, adam) in ck.optimizers {
            let slot = match name.as_str() {
                "generator" => &mut model.g_opt,
                "discriminators" => &mut model.d_opt,
                other => return Err(Error::CheckpointMismatch(format!("unknown optimizer {other}"))),
            };
            if adam.params() != slot.params() {
                return Err(Error::CheckpointMismatch(format!("optimizer {name} covers different parameters")));
            }
            *slot = adam;
        }
        model.step = meta.step;
        Ok((model, meta.train))
    }

    pub fn load(path: &Path) -> Result<(Self, Option<TrainConfig>)> {
        use crate::error::IoContext;
        Self::from_checkpoint(&std::fs::read(path).at(path)?)
    }
}

/// Batches of sample indices for one epoch, shuffled by `(seed, epoch)`.
pub fn epoch_order(len: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    idx.shuffle(&mut rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Runs `cfg.epochs` epochs (or until `cfg.max_steps`), calling `on_step` after every step.
/// Training stops early when `on_step` returns false.
pub fn train(
    model: &mut Model,
    samples: &[Sample],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&Model, &MetricsRecord) -> bool,
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut records = Vec::new();
    for epoch in 0..cfg.epochs {
        for batch in epoch_order(samples.len(), cfg.batch_size, cfg.seed, epoch) {
            if cfg.max_steps.is_some_and(|m| model.steps() >= m) {
                return Ok(records);
            }
            let batch: Vec<Sample> = batch.iter().map(|&i| samples[i].clone()).collect();
            let r = model.train_step(&batch, cfg, epoch)?;
            let go_on = on_step(model, &r);
            records.push(r);
            if !go_on {
                return Ok(records);
            }
        }
    }
    Ok(records)
}
