//! Central-difference gradient checking at double precision.

use crate::error::Result;
use crate::param::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Denominator floor for relative errors, so entries whose true gradient is ~0 are judged absolutely.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)`.
    pub max_rel_error: f64,
    /// Which entry produced the maximum, e.g. `input 0 [13]` or `param conv.weight [4]`.
    pub worst: String,
    pub entries: usize,
}

impl GradCheckReport {
    fn record(&mut self, analytic: f64, numeric: f64, what: impl FnOnce() -> String) {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        self.entries += 1;
        if rel > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = self.max_rel_error.max(rel);
            self.worst = what();
        }
    }
}

fn eval<F>(store: &ParamStore<f64>, inputs: &[Tensor<f64>], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    Ok(tape.value(loss).item())
}

/// Checks every entry of `inputs` and of the trainable parameters listed in `params`.
pub fn check_gradients<F>(
    store: &ParamStore<f64>,
    params: &[ParamId],
    inputs: &[Tensor<f64>],
    step: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: String::new(), entries: 0 };

    let mut probe = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for (j, &a) in analytic.iter().enumerate() {
            let x0 = inputs[i].data()[j];
            probe[i].data_mut()[j] = x0 + step;
            let up = eval(store, &probe, &f)?;
            probe[i].data_mut()[j] = x0 - step;
            let down = eval(store, &probe, &f)?;
            probe[i].data_mut()[j] = x0;
            report.record(a, (up - down) / (2.0 * step), || format!("input {i} [{j}]"));
        }
    }

    let mut shifted = store.clone();
    for &id in params {
        let n = store.value(id).len();
        let analytic = grads.param(id).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        for (j, &a) in analytic.iter().enumerate() {
            let w0 = store.value(id).data()[j];
            shifted.get_mut(id).value.data_mut()[j] = w0 + step;
            let up = eval(&shifted, inputs, &f)?;
            shifted.get_mut(id).value.data_mut()[j] = w0 - step;
            let down = eval(&shifted, inputs, &f)?;
            shifted.get_mut(id).value.data_mut()[j] = w0;
            let name = &store.get(id).name;
            report.record(a, (up - down) / (2.0 * step), || format!("param {name} [{j}]"));
        }
    }
    Ok(report)
}

type LossFn<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

/// One named check from [`layer_suite`] with its tolerance.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: &'static str,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl SuiteCase {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < self.tolerance
    }
}

pub const SMOOTH_TOL: f64 = 1e-6;
pub const NONSMOOTH_TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

/// Gradient checks for every layer type and both losses at randomized points.
///
/// Piecewise-linear ops are sampled away from their kinks; batch norm in training
/// mode and the composite network use the looser tolerance.
pub fn layer_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    use crate::layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Dense};
    use crate::tape::BnMode;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let mut run = |name: &'static str,
                   tolerance: f64,
                   store: &ParamStore<f64>,
                   inputs: Vec<Tensor<f64>>,
                   f: &LossFn<'_>|
     -> Result<()> {
        let params: Vec<ParamId> = store.iter().filter(|(_, p)| p.role.trainable()).map(|(id, _)| id).collect();
        let report = check_gradients(store, &params, &inputs, STEP, f)?;
        cases.push(SuiteCase { name, tolerance, report });
        Ok(())
    };
    // projects an output onto a fixed random direction so every entry matters
    fn project(tape: &mut Tape<f64>, y: Var, dir: &Tensor<f64>) -> Result<Var> {
        let d = tape.constant(dir.clone().reshape(tape.shape(y))?);
        let prod = tape.mul(y, d)?;
        tape.sum(prod)
    }
    let uniform = |shape: &[usize], rng: &mut rand::rngs::StdRng| Tensor::<f64>::uniform(shape, 1.0, rng);
    let away_from_zero = |shape: &[usize], rng: &mut rand::rngs::StdRng| {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let m: f64 = rng.gen_range(0.1..1.0);
                if rng.gen_bool(0.5) { m } else { -m }
            })
            .collect();
        Tensor::new(shape, data).unwrap()
    };

    {
        let mut store = ParamStore::new();
        let conv = Conv2d::new(&mut store, "conv", 2, 3, 3, 2, 1, true, &mut rng)?;
        let x = uniform(&[2, 2, 5, 5], &mut rng);
        let dir = uniform(&[2 * 3 * 3 * 3], &mut rng);
        run("conv2d", SMOOTH_TOL, &store, vec![x], &|t, v| {
            let y = conv.forward(t, v[0])?;
            project(t, y, &dir)
        })?;
    }
    {
        let mut store = ParamStore::new();
        let up = ConvTranspose2d::new(&mut store, "up", 3, 2, 3, 2, 1, true, &mut rng)?;
        let x = uniform(&[2, 3, 3, 3], &mut rng);
        let dir = uniform(&[2 * 2 * 5 * 5], &mut rng);
        run("conv_transpose2d", SMOOTH_TOL, &store, vec![x], &|t, v| {
            let y = up.forward(t, v[0])?;
            project(t, y, &dir)
        })?;
    }
    {
        let store = ParamStore::new();
        // well-separated distinct values keep finite differences away from ties
        let mut vals: Vec<f64> = (0..64).map(|i| i as f64 * 0.05 - 1.6).collect();
        vals.shuffle(&mut rng);
        let x = Tensor::new(&[2, 2, 4, 4], vals)?;
        let dir = uniform(&[16], &mut rng);
        run("max_pool2", NONSMOOTH_TOL, &store, vec![x], &|t, v| {
            let y = t.max_pool2(v[0])?;
            project(t, y, &dir)
        })?;
    }
    {
        let store = ParamStore::new();
        let x = uniform(&[2, 2, 4, 6], &mut rng);
        let dir = uniform(&[24], &mut rng);
        run("avg_pool2", SMOOTH_TOL, &store, vec![x], &|t, v| {
            let y = t.avg_pool2(v[0])?;
            project(t, y, &dir)
        })?;
    }
    for (name, mode, tol) in
        [("batch_norm2d_train", BnMode::Train, NONSMOOTH_TOL), ("batch_norm2d_eval", BnMode::Eval, SMOOTH_TOL)]
    {
        let mut store = ParamStore::new();
        let bn = BatchNorm2d::new(&mut store, "bn", 2)?;
        for id in [bn.gamma, bn.beta, bn.running_mean] {
            store.get_mut(id).value = uniform(&[2], &mut rng);
        }
        store.get_mut(bn.running_var).value = Tensor::from_f64(&[2], &[0.7, 1.9])?;
        let x = uniform(&[3, 2, 3, 3], &mut rng);
        let dir = uniform(&[54], &mut rng);
        run(name, tol, &store, vec![x], &|t, v| {
            let y = bn.forward(t, v[0], mode)?;
            project(t, y, &dir)
        })?;
    }
    {
        let store = ParamStore::new();
        let x = away_from_zero(&[2, 3, 2, 2], &mut rng);
        let dir = uniform(&[24], &mut rng);
        run("leaky_relu", SMOOTH_TOL, &store, vec![x], &|t, v| {
            let y = t.leaky_relu(v[0], 0.2)?;
            project(t, y, &dir)
        })?;
    }
    {
        let store = ParamStore::new();
        let x = Tensor::uniform(&[2, 10], 4.0, &mut rng);
        let dir = uniform(&[20], &mut rng);
        run("sigmoid", SMOOTH_TOL, &store, vec![x], &|t, v| {
            let y = t.sigmoid(v[0])?;
            project(t, y, &dir)
        })?;
    }
    {
        let mut store = ParamStore::new();
        let fc = Dense::new(&mut store, "fc", 4, 5, &mut rng)?;
        store.get_mut(fc.bias).value = uniform(&[5], &mut rng);
        let x = uniform(&[3, 4], &mut rng);
        let dir = uniform(&[15], &mut rng);
        run("dense", SMOOTH_TOL, &store, vec![x], &|t, v| {
            let y = fc.forward(t, v[0])?;
            project(t, y, &dir)
        })?;
    }
    {
        let store = ParamStore::new();
        let a = uniform(&[2, 1, 4, 4], &mut rng);
        let b = uniform(&[2, 2, 4, 4], &mut rng);
        let dir = uniform(&[96], &mut rng);
        run("concat_patches", SMOOTH_TOL, &store, vec![a, b], &|t, v| {
            let c = t.concat_channels(v[0], v[1])?;
            let p = t.patches(c, 2)?;
            let f = t.flatten(p)?;
            project(t, f, &dir)
        })?;
    }
    for (name, alpha, gamma) in [("focal_loss", 0.25, 2.0), ("focal_loss_gamma_half", 0.6, 0.5)] {
        let store = ParamStore::new();
        let p = Tensor::new(&[2, 1, 3, 3], (0..18).map(|_| rng.gen_range(0.05..0.95)).collect())?;
        let target = Tensor::new(&[2, 1, 3, 3], (0..18).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())?;
        run(name, SMOOTH_TOL, &store, vec![p], &|t, v| t.focal_loss(v[0], &target, alpha, gamma))?;
    }
    {
        let store = ParamStore::new();
        let p = Tensor::new(&[6, 1], (0..6).map(|_| rng.gen_range(0.05..0.95)).collect())?;
        let target = Tensor::new(&[6, 1], (0..6).map(|i| (i % 2) as f64).collect())?;
        run("bce_loss", SMOOTH_TOL, &store, vec![p], &|t, v| t.bce_loss(v[0], &target))?;
    }
    {
        let store = ParamStore::new();
        let a = uniform(&[2, 1, 3, 3], &mut rng);
        let b = uniform(&[3, 1, 3, 3], &mut rng);
        let dir = uniform(&[27], &mut rng);
        run("concat_slice_batch", SMOOTH_TOL, &store, vec![a, b], &|t, v| {
            let c = t.concat_batch(v[0], v[1])?;
            let c = t.slice_batch(c, 1, 3)?;
            project(t, c, &dir)
        })?;
    }
    for (name, alpha, gamma) in [("focal_loss_logits", 0.25, 2.0), ("bce_loss_logits", 1.0, 0.0)] {
        let store = ParamStore::new();
        let z = Tensor::new(&[2, 1, 3, 3], (0..18).map(|_| rng.gen_range(-6.0..6.0)).collect())?;
        let target = Tensor::new(&[2, 1, 3, 3], (0..18).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())?;
        if gamma == 0.0 {
            run(name, SMOOTH_TOL, &store, vec![z], &|t, v| t.bce_loss_logits(v[0], &target))?;
        } else {
            run(name, SMOOTH_TOL, &store, vec![z], &|t, v| t.focal_loss_logits(v[0], &target, alpha, gamma))?;
        }
    }
    {
        let mut store = ParamStore::new();
        let conv = Conv2d::new(&mut store, "c", 1, 2, 3, 1, 1, true, &mut rng)?;
        let bn = BatchNorm2d::new(&mut store, "bn", 2)?;
        let fc = Dense::new(&mut store, "fc", 2 * 4 * 4, 1, &mut rng)?;
        let x = uniform(&[3, 1, 4, 4], &mut rng);
        let target = Tensor::from_f64(&[3, 1], &[1.0, 0.0, 1.0])?;
        run("composite_network", NONSMOOTH_TOL, &store, vec![x], &|t, v| {
            let y = conv.forward(t, v[0])?;
            let y = bn.forward(t, y, BnMode::Train)?;
            let y = t.leaky_relu(y, 0.2)?;
            let y = t.flatten(y)?;
            let y = fc.forward(t, y)?;
            let p = t.sigmoid(y)?;
            t.bce_loss(p, &target)
        })?;
    }
    Ok(cases)
}
