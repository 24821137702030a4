use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied as `p -= lr * weight_decay * p`, outside the moment estimates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-5 }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes.into_iter().map(|s| (Array2::zeros(s), Array2::zeros(s))).unzip();
        AdamState { config, m, v, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[&Array2<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} moment slots, {} parameters, {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for i in 0..params.len() {
            if params[i].dim() != self.m[i].dim() || grads[i].dim() != self.m[i].dim() {
                return Err(Error::ShapeMismatch(format!(
                    "slot {i}: moments {:?}, parameter {:?}, gradient {:?}",
                    self.m[i].dim(),
                    params[i].dim(),
                    grads[i].dim()
                )));
            }
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            Zip::from(&mut *params[i])
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(grads[i])
                .for_each(|p, m, v, &g| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                    *p -= c.lr * (update + c.weight_decay * *p);
                });
        }
        Ok(())
    }
}

pub fn adam_step(st: &mut AdamState, params: &mut [&mut Array2<f64>], grads: &[&Array2<f64>]) -> Result<()> {
    st.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = AdamConfig { weight_decay: 0.0, ..Default::default() };
        let mut p = array![[1.0, -2.0]];
        let before = p.clone();
        let mut st = AdamState::new(cfg, [(1, 2)]);
        let g = Array2::zeros((1, 2));
        for _ in 0..10 {
            st.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut p = array![[0.0, 0.0]];
        let g = array![[0.5, -3.0]];
        let mut st = AdamState::new(AdamConfig::default(), [(1, 2)]);
        for _ in 0..50 {
            st.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert!(p[[0, 0]] < 0.0 && p[[0, 1]] > 0.0);
        assert_eq!(st.steps(), 50);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(p) = sum (p - c)^2 / 2 has its minimum at c.
        let c = array![[1.5, -0.75, 3.0]];
        let mut p = Array2::zeros((1, 3));
        let cfg = AdamConfig { lr: 1e-2, weight_decay: 0.0, ..Default::default() };
        let mut st = AdamState::new(cfg, [(1, 3)]);
        let mut converged_at = None;
        for step in 1..=2000 {
            let g = &p - &c;
            st.step(&mut [&mut p], &[&g]).unwrap();
            if converged_at.is_none() && (&p - &c).iter().all(|d: &f64| d.abs() < 1e-3) {
                converged_at = Some(step);
            }
        }
        assert!(converged_at.is_some());
        assert!((&p - &c).iter().all(|d| d.abs() < 1e-3));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut st = AdamState::new(AdamConfig::default(), [(2, 2)]);
        let mut p = Array2::zeros((1, 2));
        let g = Array2::zeros((1, 2));
        assert!(matches!(st.step(&mut [&mut p], &[&g]), Err(Error::ShapeMismatch(_))));
    }
}
