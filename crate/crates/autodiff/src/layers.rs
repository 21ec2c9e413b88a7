//! Parameterized layers: each owns parameter ids in a [`ParamStore`] and records itself on a [`Tape`].

use crate::error::Result;
use crate::param::{ParamId, ParamStore, Role};
use crate::real::Real;
use crate::tape::{BnMode, Tape, Var};
use crate::tensor::Tensor;
use rand::Rng;

/// He-uniform bound for a leaky-ReLU network.
fn he_bound(fan_in: usize, slope: f64) -> f64 {
    (6.0 / ((1.0 + slope * slope) * fan_in.max(1) as f64)).sqrt()
}

pub const INIT_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = he_bound(cin * kernel * kernel, INIT_SLOPE);
        let weight =
            store.add(format!("{name}.weight"), Role::Kernel, Tensor::uniform(&[cout, cin, kernel, kernel], bound, rng))?;
        let bias = if bias { Some(store.add(format!("{name}.bias"), Role::Bias, Tensor::zeros(&[cout]))?) } else { None };
        Ok(Conv2d { weight, bias, stride, pad })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let k = tape.param(self.weight);
        let b = self.bias.map(|b| tape.param(b));
        tape.conv2d(x, k, b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        // each output pixel sees cin * (kernel / stride)^2 inputs
        let taps = (kernel / stride.max(1)).max(1);
        let bound = he_bound(cin * taps * taps, INIT_SLOPE);
        let weight =
            store.add(format!("{name}.weight"), Role::Kernel, Tensor::uniform(&[cin, cout, kernel, kernel], bound, rng))?;
        let bias = if bias { Some(store.add(format!("{name}.bias"), Role::Bias, Tensor::zeros(&[cout]))?) } else { None };
        Ok(ConvTranspose2d { weight, bias, stride, pad })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let k = tape.param(self.weight);
        let b = self.bias.map(|b| tape.param(b));
        tape.conv_transpose2d(x, k, b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = he_bound(inputs, INIT_SLOPE);
        let weight = store.add(format!("{name}.weight"), Role::Kernel, Tensor::uniform(&[outputs, inputs], bound, rng))?;
        let bias = store.add(format!("{name}.bias"), Role::Bias, Tensor::zeros(&[outputs]))?;
        Ok(Dense { weight, bias })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.dense(x, w, Some(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm2d {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: store.add(format!("{name}.gamma"), Role::BnGamma, Tensor::full(&[channels], T::one()))?,
            beta: store.add(format!("{name}.beta"), Role::BnBeta, Tensor::zeros(&[channels]))?,
            running_mean: store.add(format!("{name}.running_mean"), Role::RunningMean, Tensor::zeros(&[channels]))?,
            running_var: store.add(format!("{name}.running_var"), Role::RunningVar, Tensor::full(&[channels], T::one()))?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var, mode: BnMode) -> Result<Var> {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.batch_norm2d(x, g, b, (self.running_mean, self.running_var), mode)
    }
}
