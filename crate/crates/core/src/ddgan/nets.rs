//! Generator U-Net and the two discriminators.

use super::bridge::idct_stage;
use super::config::{GeneratorConfig, GlobalDiscConfig, InputKind, LocalDiscConfig};
use crate::error::{Error, Result};
use cdbin_autodiff::{BatchNorm2d, BnMode, Conv2d, ConvTranspose2d, Dense, ParamStore, Real, Tape, Var};
use rand::Rng;

pub const LEAKY_SLOPE: f64 = 0.2;

fn conv3<T: Real, R: Rng>(
    store: &mut ParamStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    stride: usize,
    bias: bool,
    rng: &mut R,
) -> Result<Conv2d> {
    Ok(Conv2d::new(store, name, cin, cout, 3, stride, 1, bias, rng)?)
}

#[derive(Debug, Clone)]
struct DoubleConv {
    a: Conv2d,
    b: Conv2d,
}

impl DoubleConv {
    fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, rng: &mut R) -> Result<Self> {
        Ok(DoubleConv {
            a: conv3(store, &format!("{name}.conv1"), cin, cout, 1, true, rng)?,
            b: conv3(store, &format!("{name}.conv2"), cout, cout, 1, true, rng)?,
        })
    }

    fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let h = self.a.forward(tape, x)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        let h = self.b.forward(tape, h)?;
        Ok(tape.leaky_relu(h, LEAKY_SLOPE)?)
    }
}

/// U-Net with max-pool down-sampling, 2x2 transposed-convolution up-sampling and skip concatenation.
///
/// Compressed input `(N, 64, H/8, W/8)` ends in the fixed block-IDCT stage; pixel input
/// `(N, 1, H, W)` uses a one-channel head. Both return probabilities `(N, 1, H, W)`.
#[derive(Debug, Clone)]
pub struct Generator {
    kind: InputKind,
    depth: usize,
    gain: f64,
    down: Vec<DoubleConv>,
    bottleneck: DoubleConv,
    up: Vec<(ConvTranspose2d, DoubleConv)>,
    head: Conv2d,
}

impl Generator {
    pub const PREFIX: &'static str = "gen";

    pub fn channels(kind: InputKind) -> usize {
        match kind {
            InputKind::Compressed => 64,
            InputKind::Pixels => 1,
        }
    }

    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &GeneratorConfig, kind: InputKind, rng: &mut R) -> Result<Self> {
        let w = &cfg.widths;
        if w.len() < 2 {
            return Err(Error::Config("generator needs at least two widths".into()));
        }
        let depth = w.len() - 1;
        let p = Self::PREFIX;
        let mut down = Vec::with_capacity(depth);
        let mut cin = Self::channels(kind);
        for (l, &width) in w[..depth].iter().enumerate() {
            down.push(DoubleConv::new(store, &format!("{p}.down{l}"), cin, width, rng)?);
            cin = width;
        }
        let bottleneck = DoubleConv::new(store, &format!("{p}.bottleneck"), w[depth - 1], w[depth], rng)?;
        let mut up = Vec::with_capacity(depth);
        for l in (0..depth).rev() {
            let t = ConvTranspose2d::new(store, &format!("{p}.up{l}.upsample"), w[l + 1], w[l], 2, 2, 0, true, rng)?;
            let c = DoubleConv::new(store, &format!("{p}.up{l}"), 2 * w[l], w[l], rng)?;
            up.push((t, c));
        }
        let head = Conv2d::new(store, &format!("{p}.head"), w[0], Self::channels(kind), 1, 1, 0, true, rng)?;
        Ok(Generator { kind, depth, gain: cfg.logit_gain, down, bottleneck, up, head })
    }

    pub fn kind(&self) -> InputKind {
        self.kind
    }

    fn check_input<T: Real>(&self, tape: &Tape<T>, x: Var) -> Result<()> {
        let s = tape.shape(x);
        let unit = 1 << self.depth;
        let ok = s.len() == 4 && s[1] == Self::channels(self.kind) && s[2].is_multiple_of(unit) && s[3].is_multiple_of(unit) && s[2] > 0;
        if !ok {
            return Err(Error::Shape(format!(
                "generator expects (N, {}, H, W) with H, W multiples of {unit}, got {s:?}",
                Self::channels(self.kind)
            )));
        }
        Ok(())
    }

    fn features<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        self.check_input(tape, x)?;
        let mut skips = Vec::with_capacity(self.depth);
        let mut h = x;
        for block in &self.down {
            h = block.forward(tape, h)?;
            skips.push(h);
            h = tape.max_pool2(h)?;
        }
        h = self.bottleneck.forward(tape, h)?;
        for ((upsample, block), skip) in self.up.iter().zip(skips.into_iter().rev()) {
            h = upsample.forward(tape, h)?;
            h = tape.concat_channels(h, skip)?;
            h = block.forward(tape, h)?;
        }
        h = self.head.forward(tape, h)?;
        match self.kind {
            InputKind::Compressed => idct_stage(tape, h),
            InputKind::Pixels => Ok(h),
        }
    }

    /// Pixel-domain logits `(N, 1, H, W)`, already multiplied by the gain.
    pub fn logits<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let h = self.features(tape, x)?;
        Ok(tape.scale(h, self.gain)?)
    }

    /// Background probabilities `(N, 1, H, W)`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let h = self.logits(tape, x)?;
        Ok(tape.sigmoid(h)?)
    }
}

fn check_map<T: Real>(tape: &Tape<T>, x: Var, size: usize, who: &str) -> Result<()> {
    let s = tape.shape(x);
    if s.len() != 4 || s[1] != 1 || s[2] != size || s[3] != size {
        return Err(Error::Shape(format!("{who} expects (N, 1, {size}, {size}), got {s:?}")));
    }
    Ok(())
}

fn dense_stack<T: Real>(tape: &mut Tape<T>, layers: &[Dense], mut h: Var) -> Result<Var> {
    let last = layers.len() - 1;
    for (i, d) in layers.iter().enumerate() {
        h = d.forward(tape, h)?;
        if i != last {
            h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        }
    }
    Ok(h)
}

/// Two stride-2 conv/BN/leaky-ReLU stages, 2x2 average pooling, three dense layers, sigmoid score.
#[derive(Debug, Clone)]
pub struct GlobalDiscriminator {
    size: usize,
    convs: Vec<(Conv2d, BatchNorm2d)>,
    dense: Vec<Dense>,
}

impl GlobalDiscriminator {
    pub const PREFIX: &'static str = "dglobal";

    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &GlobalDiscConfig, size: usize, rng: &mut R) -> Result<Self> {
        let p = Self::PREFIX;
        let mut convs = Vec::new();
        let mut cin = 1;
        for (i, &c) in cfg.channels.iter().enumerate() {
            let conv = conv3(store, &format!("{p}.conv{i}"), cin, c, 2, false, rng)?;
            convs.push((conv, BatchNorm2d::new(store, &format!("{p}.bn{i}"), c)?));
            cin = c;
        }
        let side = size.div_ceil(2).div_ceil(2) / 2;
        let mut fan = cin * side * side;
        let mut dense = Vec::new();
        for (i, &out) in cfg.dense.iter().chain(&[1]).enumerate() {
            dense.push(Dense::new(store, &format!("{p}.fc{i}"), fan, out, rng)?);
            fan = out;
        }
        Ok(GlobalDiscriminator { size, convs, dense })
    }

    /// Scores `(N, 1)` for maps `(N, 1, S, S)`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var, mode: BnMode) -> Result<Var> {
        let z = self.logits(tape, x, mode)?;
        Ok(tape.sigmoid(z)?)
    }

    /// Pre-sigmoid scores `(N, 1)`.
    pub fn logits<T: Real>(&self, tape: &mut Tape<T>, x: Var, mode: BnMode) -> Result<Var> {
        check_map(tape, x, self.size, "global discriminator")?;
        let mut h = x;
        for (conv, bn) in &self.convs {
            h = conv.forward(tape, h)?;
            h = bn.forward(tape, h, mode)?;
            h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        }
        h = tape.avg_pool2(h)?;
        h = tape.flatten(h)?;
        dense_stack(tape, &self.dense, h)
    }
}

/// Five conv/BN/leaky-ReLU stages without pooling, four dense layers, sigmoid score.
#[derive(Debug, Clone)]
pub struct LocalDiscriminator {
    size: usize,
    convs: Vec<(Conv2d, BatchNorm2d)>,
    dense: Vec<Dense>,
}

impl LocalDiscriminator {
    pub const PREFIX: &'static str = "dlocal";

    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &LocalDiscConfig, size: usize, rng: &mut R) -> Result<Self> {
        let p = Self::PREFIX;
        let mut convs = Vec::new();
        let (mut cin, mut side) = (1, size);
        for (i, (&c, &s)) in cfg.channels.iter().zip(&cfg.strides).enumerate() {
            let conv = conv3(store, &format!("{p}.conv{i}"), cin, c, s, false, rng)?;
            convs.push((conv, BatchNorm2d::new(store, &format!("{p}.bn{i}"), c)?));
            cin = c;
            side = (side + 2 - 3) / s + 1;
        }
        let mut fan = cin * side * side;
        let mut dense = Vec::new();
        for (i, &out) in cfg.dense.iter().chain(&[1]).enumerate() {
            dense.push(Dense::new(store, &format!("{p}.fc{i}"), fan, out, rng)?);
            fan = out;
        }
        Ok(LocalDiscriminator { size, convs, dense })
    }

    pub fn patch_size(&self) -> usize {
        self.size
    }

    /// Scores `(N, 1)` for patches `(N, 1, P, P)`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var, mode: BnMode) -> Result<Var> {
        let z = self.logits(tape, x, mode)?;
        Ok(tape.sigmoid(z)?)
    }

    /// Pre-sigmoid scores `(N, 1)` for patches.
    pub fn logits<T: Real>(&self, tape: &mut Tape<T>, x: Var, mode: BnMode) -> Result<Var> {
        check_map(tape, x, self.size, "local discriminator")?;
        let mut h = x;
        for (conv, bn) in &self.convs {
            h = conv.forward(tape, h)?;
            h = bn.forward(tape, h, mode)?;
            h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        }
        h = tape.flatten(h)?;
        dense_stack(tape, &self.dense, h)
    }

    /// Cuts maps `(N, 1, H, W)` into row-major patches and scores each: `(N * H/P * W/P, 1)`.
    pub fn forward_maps<T: Real>(&self, tape: &mut Tape<T>, maps: Var, mode: BnMode) -> Result<Var> {
        let p = tape.patches(maps, self.size)?;
        self.forward(tape, p, mode)
    }

    /// [`Self::forward_maps`] before the sigmoid.
    pub fn logits_maps<T: Real>(&self, tape: &mut Tape<T>, maps: Var, mode: BnMode) -> Result<Var> {
        let p = tape.patches(maps, self.size)?;
        self.logits(tape, p, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddgan::config::ModelConfig;
    use cdbin_autodiff::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layer_counts_and_shapes() {
        let cfg = ModelConfig::desk();
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Generator::new(&mut store, &cfg.generator, InputKind::Compressed, &mut rng).unwrap();
        let dg = GlobalDiscriminator::new(&mut store, &cfg.global_disc, 256, &mut rng).unwrap();
        let dl = LocalDiscriminator::new(&mut store, &cfg.local_disc, 32, &mut rng).unwrap();
        assert_eq!(dg.convs.len(), 2);
        assert_eq!(dg.dense.len(), 3);
        assert_eq!(dl.convs.len(), 5);
        assert_eq!(dl.dense.len(), 4);

        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::uniform(&[1, 64, 32, 32], 0.1, &mut rng));
        let p = g.forward(&mut tape, x).unwrap();
        assert_eq!(tape.shape(p), &[1, 1, 256, 256]);
        assert!(tape.value(p).data().iter().all(|&v| v > 0.0 && v < 1.0));
        let s = dg.forward(&mut tape, p, BnMode::Eval).unwrap();
        assert_eq!(tape.shape(s), &[1, 1]);
        let l = dl.forward_maps(&mut tape, p, BnMode::Eval).unwrap();
        assert_eq!(tape.shape(l), &[64, 1]);

        let bad = tape.constant(Tensor::zeros(&[1, 63, 32, 32]));
        assert!(matches!(g.forward(&mut tape, bad), Err(Error::Shape(_))));
        let bad = tape.constant(Tensor::zeros(&[1, 64, 30, 32]));
        assert!(matches!(g.forward(&mut tape, bad), Err(Error::Shape(_))));
        let small = tape.constant(Tensor::zeros(&[1, 1, 128, 128]));
        assert!(matches!(dg.forward(&mut tape, small, BnMode::Eval), Err(Error::Shape(_))));
    }

    #[test]
    fn default_flatten_sizes() {
        let cfg = ModelConfig::default();
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        GlobalDiscriminator::new(&mut store, &cfg.global_disc, 256, &mut rng).unwrap();
        LocalDiscriminator::new(&mut store, &cfg.local_disc, 32, &mut rng).unwrap();
        assert_eq!(store.value(store.id("dglobal.fc0.weight").unwrap()).shape(), &[256, 64 * 32 * 32]);
        assert_eq!(store.value(store.id("dlocal.fc0.weight").unwrap()).shape(), &[512, 128 * 8 * 8]);
    }
}
