use crate::error::{AutodiffError, Result};
use crate::param::{ParamId, ParamStore};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment buffers for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

/// Adam with bias correction over a fixed set of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    params: Vec<ParamId>,
    moments: Vec<Moments<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, params: Vec<ParamId>, config: AdamConfig) -> Self {
        let moments = params
            .iter()
            .map(|&id| {
                let n = store.value(id).len();
                Moments { m: vec![T::zero(); n], v: vec![T::zero(); n] }
            })
            .collect();
        Adam { config, step: 0, params, moments }
    }

    /// Rebuilds an optimizer from checkpointed state.
    pub fn from_state(config: AdamConfig, step: u64, params: Vec<ParamId>, moments: Vec<Moments<T>>) -> Result<Self> {
        if params.len() != moments.len() {
            return Err(AutodiffError::Invalid("one moment pair per parameter".into()));
        }
        Ok(Adam { config, step, params, moments })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn moments(&self) -> &[Moments<T>] {
        &self.moments
    }

    /// Applies one update from the stored gradients, then clears them.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        for &id in &self.params {
            let p = store.get(id);
            match &p.grad {
                None => return Err(AutodiffError::MissingGradient(p.name.clone())),
                Some(g) if g.len() != p.value.len() => {
                    return crate::error::shape_err("adam", format!("{} gradient length", p.name))
                }
                Some(_) => {}
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for (&id, mom) in self.params.iter().zip(&mut self.moments) {
            let p = store.get_mut(id);
            let grad = p.grad.take().expect("checked above");
            for (((w, &g), m), v) in
                p.value.data_mut().iter_mut().zip(grad.data()).zip(&mut mom.m).zip(&mut mom.v)
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
