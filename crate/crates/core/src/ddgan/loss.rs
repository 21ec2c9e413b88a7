//! Loss arithmetic and patch tiling outside of a training tape.

use super::config::LossWeights;
use crate::error::{Error, Result};
use cdbin_autodiff::{ParamStore, Real, Tape, Tensor, Var};

/// `mu * (l_global + sigma * l_local) + lambda * l_gen`.
pub fn total_loss(l_global: f64, l_local: f64, l_gen: f64, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("l_global", l_global), ("l_local", l_local), ("l_gen", l_gen)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    Ok(w.mu * (l_global + w.sigma * l_local) + w.lambda * l_gen)
}

/// [`total_loss`] recorded on a tape.
pub fn total_loss_var<T: Real>(tape: &mut Tape<T>, l_global: Var, l_local: Var, l_gen: Var, w: &LossWeights) -> Result<Var> {
    let local = tape.scale(l_local, w.sigma)?;
    let adv = tape.add(l_global, local)?;
    let adv = tape.scale(adv, w.mu)?;
    let gen = tape.scale(l_gen, w.lambda)?;
    Ok(tape.add(adv, gen)?)
}

fn eval_loss<T: Real>(pred: &Tensor<T>, f: impl FnOnce(&mut Tape<T>, Var) -> cdbin_autodiff::Result<Var>) -> Result<T> {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let p = tape.constant(pred.clone());
    let l = f(&mut tape, p)?;
    Ok(tape.value(l).item())
}

/// Mean of `-alpha (1 - p_t)^gamma ln p_t`.
pub fn focal_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, alpha: f64, gamma: f64) -> Result<T> {
    eval_loss(pred, |t, p| t.focal_loss(p, target, alpha, gamma))
}

/// Mean binary cross entropy.
pub fn bce_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    eval_loss(pred, |t, p| t.bce_loss(p, target))
}

/// Non-overlapping row-major `size x size` patches of an `h x w` map.
pub fn extract_patches<T: Copy>(map: &[T], width: usize, height: usize, size: usize) -> Result<Vec<Vec<T>>> {
    if size == 0 || !width.is_multiple_of(size) || !height.is_multiple_of(size) || map.len() != width * height {
        return Err(Error::Shape(format!("{width}x{height} map is not divisible into {size}x{size} patches")));
    }
    let mut out = Vec::with_capacity((width / size) * (height / size));
    for pr in 0..height / size {
        for pc in 0..width / size {
            let mut p = Vec::with_capacity(size * size);
            for y in 0..size {
                let start = (pr * size + y) * width + pc * size;
                p.extend_from_slice(&map[start..start + size]);
            }
            out.push(p);
        }
    }
    Ok(out)
}

/// Inverse of [`extract_patches`].
pub fn reassemble_patches<T: Copy + Default>(patches: &[Vec<T>], width: usize, height: usize, size: usize) -> Result<Vec<T>> {
    let cols = width.checked_div(size).unwrap_or(0);
    if size == 0 || !width.is_multiple_of(size) || !height.is_multiple_of(size) || patches.len() != cols * (height / size) {
        return Err(Error::Shape(format!("{} patches do not tile a {width}x{height} map", patches.len())));
    }
    let mut map = vec![T::default(); width * height];
    for (i, p) in patches.iter().enumerate() {
        if p.len() != size * size {
            return Err(Error::Shape(format!("patch {i} has {} values", p.len())));
        }
        let (pr, pc) = (i / cols, i % cols);
        for y in 0..size {
            let start = (pr * size + y) * width + pc * size;
            map[start..start + size].copy_from_slice(&p[y * size..(y + 1) * size]);
        }
    }
    Ok(map)
}
