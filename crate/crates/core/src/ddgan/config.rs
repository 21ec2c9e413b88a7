//! Serializable model and training configuration.

use crate::error::{Error, Result};
use cdbin_autodiff::AdamConfig;
use serde::{Deserialize, Serialize};

/// What the generator consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Dequantized DCT coefficients, one channel per zig-zag position, on the block grid.
    Compressed,
    /// Decoded pixels at full tile resolution (baseline pipeline).
    Pixels,
}

impl InputKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InputKind::Compressed => "compressed",
            InputKind::Pixels => "pixels",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Channel width per resolution level; the last entry is the bottleneck.
    pub widths: Vec<usize>,
    /// Fixed multiplier applied to the pixel-domain logits before the sigmoid.
    pub logit_gain: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { widths: vec![64, 128, 256, 512], logit_gain: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalDiscConfig {
    /// Output channels of the two stride-2 convolutions.
    pub channels: [usize; 2],
    /// Hidden widths of the fully connected layers before the score unit.
    pub dense: [usize; 2],
}

impl Default for GlobalDiscConfig {
    fn default() -> Self {
        GlobalDiscConfig { channels: [32, 64], dense: [256, 64] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalDiscConfig {
    pub channels: [usize; 5],
    pub strides: [usize; 5],
    pub dense: [usize; 3],
}

impl Default for LocalDiscConfig {
    fn default() -> Self {
        LocalDiscConfig { channels: [32, 64, 64, 128, 128], strides: [1, 2, 1, 2, 1], dense: [512, 256, 64] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input: InputKind,
    pub tile_size: usize,
    pub patch_size: usize,
    pub generator: GeneratorConfig,
    pub global_disc: GlobalDiscConfig,
    pub local_disc: LocalDiscConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input: InputKind::Compressed,
            tile_size: 256,
            patch_size: 32,
            generator: GeneratorConfig::default(),
            global_disc: GlobalDiscConfig::default(),
            local_disc: LocalDiscConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Narrow networks sized for a single CPU core.
    pub fn desk() -> Self {
        ModelConfig {
            generator: GeneratorConfig { widths: vec![32, 64, 96, 128], logit_gain: 8.0 },
            global_disc: GlobalDiscConfig { channels: [8, 16], dense: [32, 16] },
            local_disc: LocalDiscConfig { channels: [4, 8, 8, 8, 8], strides: [1, 2, 1, 2, 1], dense: [64, 32, 16] },
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.tile_size;
        if t == 0 || self.patch_size == 0 || !t.is_multiple_of(self.patch_size) || !t.is_multiple_of(8) {
            return Err(Error::Config(format!("tile size {t} must be divisible by the patch size {} and by 8", self.patch_size)));
        }
        let w = &self.generator.widths;
        if w.len() < 2 || w.contains(&0) {
            return Err(Error::Config("generator needs at least one down-block and non-zero widths".into()));
        }
        let grid = match self.input {
            InputKind::Compressed => t / 8,
            InputKind::Pixels => t,
        };
        if grid % (1 << (w.len() - 1)) != 0 {
            return Err(Error::Config(format!("input grid {grid} is not divisible by 2^{}", w.len() - 1)));
        }
        let down: usize = self.local_disc.strides.iter().product();
        if self.local_disc.strides.contains(&0) || !self.patch_size.is_multiple_of(down) {
            return Err(Error::Config("patch size must be divisible by the product of local strides".into()));
        }
        if !self.generator.logit_gain.is_finite() || self.generator.logit_gain <= 0.0 {
            return Err(Error::Config("logit gain must be positive".into()));
        }
        Ok(())
    }
}

/// Weights of `mu * (L_global + sigma * L_local) + lambda * L_gen`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { mu: 0.5, sigma: 5.0, lambda: 75.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let LossWeights { mu, sigma, lambda } = *self;
        if !(mu > 0.0 && sigma > 1.0 && lambda > mu) || ![mu, sigma, lambda].iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("loss weights need mu > 0, sigma > 1, lambda > mu; got {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        OptimizerConfig { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps }
    }
}

impl From<OptimizerConfig> for AdamConfig {
    fn from(o: OptimizerConfig) -> Self {
        AdamConfig { lr: o.lr, beta1: o.beta1, beta2: o.beta2, eps: o.eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    /// Discriminator optimizer; the generator settings apply when absent.
    #[serde(default)]
    pub discriminator_optimizer: Option<OptimizerConfig>,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    /// Steps over which the adversarial weight `mu` rises linearly from 0. Zero disables the ramp.
    #[serde(default)]
    pub adversarial_ramp: u64,
    /// Standard deviation of Gaussian noise added to every discriminator input, real or fake.
    #[serde(default)]
    pub instance_noise: f64,
    /// Weight of the previous running statistics in batch-norm updates.
    pub bn_momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stops training after this many steps when set.
    pub max_steps: Option<u64>,
    pub quality: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
            discriminator_optimizer: None,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            adversarial_ramp: 0,
            instance_noise: 0.0,
            bn_momentum: 0.9,
            epochs: 1,
            batch_size: 4,
            seed: 0,
            max_steps: None,
            quality: 50,
        }
    }
}

impl TrainConfig {
    /// Loss weights in effect for the update that produces step `step` (1-based).
    pub fn weights_at(&self, step: u64) -> LossWeights {
        let mut w = self.weights;
        if self.adversarial_ramp > 0 && step <= self.adversarial_ramp {
            w.mu *= (step - 1) as f64 / self.adversarial_ramp as f64;
        }
        w
    }

    pub fn discriminator_optimizer(&self) -> OptimizerConfig {
        self.discriminator_optimizer.unwrap_or(self.optimizer)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("bn momentum must lie in [0, 1)".into()));
        }
        if !(self.focal_alpha > 0.0 && self.focal_gamma >= 0.0) {
            return Err(Error::Config("focal alpha must be positive and gamma non-negative".into()));
        }
        if !(1..=100).contains(&self.quality) {
            return Err(Error::Config(format!("quality {} outside 1..=100", self.quality)));
        }
        if !(self.instance_noise >= 0.0 && self.instance_noise.is_finite()) {
            return Err(Error::Config("instance noise must be a finite non-negative deviation".into()));
        }
        Ok(())
    }
}
