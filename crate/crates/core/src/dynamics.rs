//! Two-dimensional multi-object simulator with sparse interactions.
//!
//! Each object `i` contributes two parent variables, its position
//! (`X_{2i+1}`, 1-based) and its velocity (`X_{2i+2}`); the action point is the
//! last variable. Targets are next-step position and velocity of every object.
//! An object's next state depends on another object only when the two collide,
//! and on the action only when it is the object nearest to the action point.
//!
//! One step, in order: pairwise elastic collisions (index order), action
//! impulse on the nearest object, velocity damping, Gaussian velocity noise,
//! Euler position update, reflection at the walls of the unit square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tags, Rng};
use crate::scm::{DatasetMeta, LabeledDataset, ParentSet, Row, VarLayout};

pub type Vec2 = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub n_objects: usize,
    pub n_steps: usize,
    pub radius: f64,
    /// Velocity change per unit distance toward the action point.
    pub action_gain: f64,
    /// Fraction of velocity lost per step.
    pub damping: f64,
    /// Standard deviation of the per-coordinate velocity noise.
    pub noise_std: f64,
    /// Initial speeds are uniform in `[-init_speed, init_speed]` per coordinate.
    pub init_speed: f64,
    pub seed: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            n_objects: 2,
            n_steps: 10_000,
            radius: 0.08,
            action_gain: 0.05,
            damping: 0.02,
            noise_std: 0.005,
            init_speed: 0.05,
            seed: 0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.n_objects) {
            return Err(Error::invalid_config("n_objects", format!("{} not in 1..=8", self.n_objects)));
        }
        if !(self.radius > 0.0 && self.radius < 0.25) {
            return Err(Error::invalid_config("radius", format!("{} not in (0, 0.25)", self.radius)));
        }
        if !(0.0..1.0).contains(&self.damping) || !(self.noise_std >= 0.0) || !(self.action_gain >= 0.0) {
            return Err(Error::invalid_config("damping", "damping in [0, 1), noise_std and action_gain non-negative"));
        }
        Ok(())
    }

    pub fn layout(&self) -> VarLayout {
        VarLayout::blocks(vec![2; 2 * self.n_objects + 1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub pos: Vec<Vec2>,
    pub vel: Vec<Vec2>,
    pub radius: Vec<f64>,
    pub action: Vec2,
}

impl WorldState {
    pub fn n_objects(&self) -> usize {
        self.pos.len()
    }

    /// Parent vector `(p_1, v_1, ..., p_n, v_n, a)`, flattened.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.n_objects() + 2);
        for i in 0..self.n_objects() {
            out.extend(self.pos[i]);
            out.extend(self.vel[i]);
        }
        out.extend(self.action);
        out
    }

    /// Target vector `(p'_1, v'_1, ..., p'_n, v'_n)`.
    pub fn flatten_objects(&self) -> Vec<f64> {
        let mut out = self.flatten();
        out.truncate(4 * self.n_objects());
        out
    }

    pub fn nearest_to_action(&self) -> usize {
        let dist2 = |p: &Vec2| (p[0] - self.action[0]).powi(2) + (p[1] - self.action[1]).powi(2);
        let mut best = 0;
        for i in 1..self.n_objects() {
            if dist2(&self.pos[i]) < dist2(&self.pos[best]) {
                best = i;
            }
        }
        best
    }
}

/// Physical constants of a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Physics {
    pub action_gain: f64,
    pub damping: f64,
}

impl From<&DynamicsConfig> for Physics {
    fn from(c: &DynamicsConfig) -> Self {
        Physics { action_gain: c.action_gain, damping: c.damping }
    }
}

/// Equal-mass elastic response: if the discs overlap and approach each other,
/// swap the velocity components along the line of centers.
pub fn resolve_collision(pi: Vec2, vi: Vec2, ri: f64, pj: Vec2, vj: Vec2, rj: f64) -> Option<(Vec2, Vec2)> {
    let d = [pj[0] - pi[0], pj[1] - pi[1]];
    let dist = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if dist >= ri + rj || dist == 0.0 {
        return None;
    }
    let closing = (vj[0] - vi[0]) * d[0] + (vj[1] - vi[1]) * d[1];
    if closing >= 0.0 {
        return None;
    }
    let n = [d[0] / dist, d[1] / dist];
    let ui = vi[0] * n[0] + vi[1] * n[1];
    let uj = vj[0] * n[0] + vj[1] * n[1];
    let delta = uj - ui;
    let vi2 = [vi[0] + delta * n[0], vi[1] + delta * n[1]];
    let vj2 = [vj[0] - delta * n[0], vj[1] - delta * n[1]];
    Some((vi2, vj2))
}

/// What happened during a step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub collisions: Vec<(usize, usize)>,
    pub nearest: usize,
    /// Per target `Y_k`: local parent set over the `2n + 1` input variables.
    pub local_graph: Vec<ParentSet>,
}

impl StepInfo {
    /// Compact code of the context: nearest object plus the set of objects
    /// involved in a collision.
    pub fn region_code(&self) -> usize {
        let mut collided = 0usize;
        for &(i, j) in &self.collisions {
            collided |= (1 << i) | (1 << j);
        }
        self.nearest | (collided << 4)
    }
}

/// Advance one step. `noise[i]` is the velocity noise of object `i`.
pub fn step(s: &WorldState, noise: &[Vec2], physics: Physics) -> (WorldState, StepInfo) {
    let n = s.n_objects();
    assert_eq!(noise.len(), n, "one noise vector per object");
    let mut next = s.clone();
    let mut group: Vec<usize> = (0..n).collect();
    fn root(g: &mut [usize], mut i: usize) -> usize {
        while g[i] != i {
            g[i] = g[g[i]];
            i = g[i];
        }
        i
    }
    let mut collisions = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if let Some((vi, vj)) =
                resolve_collision(next.pos[i], next.vel[i], next.radius[i], next.pos[j], next.vel[j], next.radius[j])
            {
                next.vel[i] = vi;
                next.vel[j] = vj;
                collisions.push((i, j));
                let (ri, rj) = (root(&mut group, i), root(&mut group, j));
                group[ri] = rj;
            }
        }
    }
    let nearest = s.nearest_to_action();
    for c in 0..2 {
        next.vel[nearest][c] += physics.action_gain * (s.action[c] - s.pos[nearest][c]);
    }
    for i in 0..n {
        for c in 0..2 {
            let v = next.vel[i][c] * (1.0 - physics.damping) + noise[i][c];
            let r = next.radius[i];
            let mut p = next.pos[i][c] + v;
            let mut v = v;
            if p < r {
                p = 2.0 * r - p;
                v = -v;
            } else if p > 1.0 - r {
                p = 2.0 * (1.0 - r) - p;
                v = -v;
            }
            next.pos[i][c] = p.clamp(r, 1.0 - r);
            next.vel[i][c] = v;
        }
    }
    let action_var = 2 * n;
    let mut local_graph = Vec::with_capacity(2 * n);
    for i in 0..n {
        let ri = root(&mut group, i);
        let mut parents = ParentSet::empty();
        for j in 0..n {
            if root(&mut group, j) == ri {
                parents = parents.with(2 * j).with(2 * j + 1);
            }
        }
        if i == nearest {
            parents = parents.with(action_var);
        }
        local_graph.push(parents);
        local_graph.push(parents);
    }
    (next, StepInfo { collisions, nearest, local_graph })
}

pub fn initial_state(cfg: &DynamicsConfig, rng: &mut Rng) -> WorldState {
    let r = cfg.radius;
    let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng::open01(rng);
    let mut pos = Vec::with_capacity(cfg.n_objects);
    let mut vel = Vec::with_capacity(cfg.n_objects);
    for _ in 0..cfg.n_objects {
        pos.push([uniform(r, 1.0 - r), uniform(r, 1.0 - r)]);
        vel.push([uniform(-cfg.init_speed, cfg.init_speed), uniform(-cfg.init_speed, cfg.init_speed)]);
    }
    WorldState { pos, vel, radius: vec![r; cfg.n_objects], action: [uniform(0.0, 1.0), uniform(0.0, 1.0)] }
}

/// Simulate `n_steps` transitions of one trajectory under uniformly random
/// actions and record them as a dataset.
pub fn rollout(cfg: &DynamicsConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let n = cfg.n_objects;
    let key = rng::derive_seed(cfg.seed, tags::DYNAMICS);
    let mut state_rng = rng::substream(key, 0);
    let mut noise_rng = rng::substream(key, 1);
    let mut action_rng = rng::substream(key, 2);
    let physics = Physics::from(cfg);
    let mut s = initial_state(cfg, &mut state_rng);
    let mut rows = Vec::with_capacity(cfg.n_steps);
    let mut colliding = 0usize;
    for _ in 0..cfg.n_steps {
        s.action = [rng::open01(&mut action_rng), rng::open01(&mut action_rng)];
        let noise: Vec<Vec2> = (0..n)
            .map(|_| {
                [cfg.noise_std * rng::standard_normal(&mut noise_rng), cfg.noise_std * rng::standard_normal(&mut noise_rng)]
            })
            .collect();
        let (next, info) = step(&s, &noise, physics);
        if !info.collisions.is_empty() {
            colliding += 1;
        }
        rows.push(Row { x: s.flatten(), y: next.flatten_objects(), region: info.region_code(), masks: info.local_graph });
        s = next;
    }
    let mut meta = DatasetMeta::new("dynamics", cfg.seed, cfg.layout(), 2 * n, 2);
    let rate = if cfg.n_steps == 0 { 0.0 } else { colliding as f64 / cfg.n_steps as f64 };
    meta.extra.insert("collision_rate".into(), rate.into());
    meta.extra.insert("config".into(), serde_json::to_value(cfg).expect("serializable"));
    Ok(LabeledDataset::new(meta, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phys() -> Physics {
        Physics::from(&DynamicsConfig::default())
    }

    fn two(p1: Vec2, v1: Vec2, p2: Vec2, v2: Vec2, action: Vec2) -> WorldState {
        WorldState { pos: vec![p1, p2], vel: vec![v1, v2], radius: vec![0.08, 0.08], action }
    }

    #[test]
    fn far_apart_objects_have_own_parents_and_action_on_nearest() {
        let s = two([0.2, 0.2], [0.01, 0.0], [0.8, 0.8], [0.0, -0.01], [0.1, 0.3]);
        let (_, info) = step(&s, &[[0.0; 2]; 2], phys());
        let one = ParentSet::from_one_based(&[1, 2, 5]);
        let two = ParentSet::from_one_based(&[3, 4]);
        assert_eq!(info.local_graph, vec![one, one, two, two]);
    }

    #[test]
    fn receding_overlap_is_not_a_collision() {
        let s = two([0.45, 0.5], [-0.02, 0.0], [0.55, 0.5], [0.02, 0.0], [0.0, 0.0]);
        let (_, info) = step(&s, &[[0.0; 2]; 2], phys());
        assert!(info.collisions.is_empty());
        assert!(!info.local_graph[2].contains(0));
    }

    #[test]
    fn head_on_collision_exchanges_velocities() {
        let (a, b) = resolve_collision([0.45, 0.5], [0.03, 0.0], 0.08, [0.55, 0.5], [-0.03, 0.0], 0.08).unwrap();
        assert!((a[0] + 0.03).abs() < 1e-15 && (b[0] - 0.03).abs() < 1e-15);
        assert_eq!((a[1], b[1]), (0.0, 0.0));
    }

    #[test]
    fn collisions_conserve_momentum() {
        let mut r = rng::seeded(5);
        let mut checked = 0;
        while checked < 1000 {
            let mut u = || rng::open01(&mut r);
            let pi = [u(), u()];
            let pj = [pi[0] + 0.2 * (u() - 0.5), pi[1] + 0.2 * (u() - 0.5)];
            let vi = [u() - 0.5, u() - 0.5];
            let vj = [u() - 0.5, u() - 0.5];
            if let Some((a, b)) = resolve_collision(pi, vi, 0.08, pj, vj, 0.08) {
                for c in 0..2 {
                    assert!((a[c] + b[c] - vi[c] - vj[c]).abs() <= 1e-12);
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn rollout_shapes_and_sparsity() {
        let cfg = DynamicsConfig { n_steps: 10_000, seed: 1, ..Default::default() };
        let ds = rollout(&cfg).unwrap();
        assert_eq!(ds.len(), 10_000);
        assert_eq!(ds.meta.n_targets, 4);
        assert_eq!(ds.meta.d, 5);
        let rate = ds.meta.extra["collision_rate"].as_f64().unwrap();
        assert!(rate > 0.0 && rate < 0.2, "collision rate {rate}");
        for row in &ds.rows {
            let with_action = (0..2).filter(|&i| row.masks[2 * i].contains(4)).count();
            assert_eq!(with_action, 1);
            for i in 0..2 {
                assert!(row.masks[2 * i].contains(2 * i) && row.masks[2 * i].contains(2 * i + 1));
            }
            for k in 0..4 {
                let p = [row.y[2 * k], row.y[2 * k + 1]];
                if k % 2 == 0 {
                    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }
        }
        let empty = rollout(&DynamicsConfig { n_steps: 0, ..Default::default() }).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn non_parents_do_not_change_targets() {
        let cfg = DynamicsConfig { n_objects: 3, n_steps: 2_000, seed: 9, ..Default::default() };
        let ds = rollout(&cfg).unwrap();
        let mut r = rng::seeded(2);
        let mut compared = 0;
        for row in &ds.rows {
            let s = unflatten(&row.x, 3, cfg.radius);
            let noise: Vec<Vec2> = (0..3).map(|_| [0.001, -0.002]).collect();
            let (base, info) = step(&s, &noise, Physics::from(&cfg));
            for var in 0..7 {
                let mut x = row.x.clone();
                x[2 * var] += 0.3 * (rng::open01(&mut r) - 0.5);
                x[2 * var + 1] += 0.3 * (rng::open01(&mut r) - 0.5);
                let (alt, alt_info) = step(&unflatten(&x, 3, cfg.radius), &noise, Physics::from(&cfg));
                if alt_info.collisions != info.collisions || alt_info.nearest != info.nearest {
                    continue;
                }
                let (yb, ya) = (base.flatten_objects(), alt.flatten_objects());
                for k in 0..6 {
                    if !info.local_graph[k].contains(var) {
                        assert_eq!(&yb[2 * k..2 * k + 2], &ya[2 * k..2 * k + 2]);
                        compared += 1;
                    }
                }
            }
        }
        assert!(compared > 1000);
    }

    fn unflatten(x: &[f64], n: usize, r: f64) -> WorldState {
        WorldState {
            pos: (0..n).map(|i| [x[4 * i], x[4 * i + 1]]).collect(),
            vel: (0..n).map(|i| [x[4 * i + 2], x[4 * i + 3]]).collect(),
            radius: vec![r; n],
            action: [x[4 * n], x[4 * n + 1]],
        }
    }
}
