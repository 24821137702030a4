//! Central finite-difference check of the analytic NCD gradients.

use rand::Rng as _;

use super::{NcdData, NcdModel};
use crate::error::Result;
use crate::rng;

/// Largest relative error over the probed parameters; the denominator is
/// floored at [`GRAD_FLOOR`] so vanishing gradients compare absolutely.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub probes: usize,
}

pub const GRAD_FLOOR: f64 = 1e-3;

/// Compare `loss_and_grad` against `(L(θ+h) - L(θ-h)) / 2h` at `probes_per_tensor`
/// random entries of every parameter tensor, with the gate noise held fixed.
pub fn finite_difference_check(
    model: &NcdModel,
    batch: &NcdData,
    tau: f64,
    probes_per_tensor: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheck> {
    let mut r = rng::seeded(seed);
    let x = model.standardize_x(batch.x.view());
    let y = model.standardize_y(batch.y.view());
    let noise = model.draw_noise(batch.len(), &mut r);
    let eval = model.loss_and_grad(&x, &y, &batch.truth, &noise, tau)?;
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    for net in 0..2 {
        let grads = if net == 0 { &eval.grads_f } else { &eval.grads_g };
        for (t, grad) in grads.iter().enumerate() {
            for _ in 0..probes_per_tensor {
                let (i, j) = (r.random_range(0..grad.nrows()), r.random_range(0..grad.ncols()));
                let at = |delta: f64| -> Result<f64> {
                    let mut m = model.clone();
                    let p = if net == 0 { m.f.params_mut() } else { m.g.params_mut() };
                    p[t][[i, j]] += delta;
                    m.loss_only(&x, &y, &batch.truth, &noise, tau)
                };
                let numeric = (at(h)? - at(-h)?) / (2.0 * h);
                let analytic = grad[[i, j]];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
                worst = worst.max(rel);
                probes += 1;
            }
        }
    }
    Ok(GradCheck { max_rel_err: worst, probes })
}
