//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! Every node holds a 2-D array; a batch of rows flows through one node rather
//! than one scalar per node. Nodes are appended in evaluation order, so the
//! node list is already topologically sorted and the backward pass is a single
//! reverse sweep.

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `x . w + b` with `b` a single row.
    Affine(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    TileRows(Var, usize),
    ExpandCols(Var, Vec<usize>),
    RowSum(Var),
    SumAll(Var),
    GaussLogLik(Var, Var, Var),
    LogMeanExpGroups(Var, usize),
    BinaryConcrete(Var, f64),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of `shape` if the loss does not depend on it.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.grads[v.0].take().unwrap_or_else(|| Array2::zeros(shape))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::ConcatCols(vs) => vs.iter().any(|v| self.nodes[v.0].needs_grad),
            _ => op_inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf (a parameter).
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable leaf (data).
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    fn v(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.v(a).dim() != self.v(b).dim() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.v(a).dim(),
                self.v(b).dim()
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.v(a).ncols() != self.v(b).nrows() {
            return Err(Error::ShapeMismatch(format!(
                "matmul {:?} x {:?}",
                self.v(a).dim(),
                self.v(b).dim()
            )));
        }
        let out = self.v(a).dot(self.v(b));
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xd, wd, bd) = (self.v(x).dim(), self.v(w).dim(), self.v(b).dim());
        if xd.1 != wd.0 || bd != (1, wd.1) {
            return Err(Error::ShapeMismatch(format!("affine x {xd:?}, w {wd:?}, b {bd:?}")));
        }
        let mut out = self.v(x).dot(self.v(w));
        out += self.v(b);
        Ok(self.push(out, Op::Affine(x, w, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.v(a) + self.v(b);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.v(a) - self.v(b);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.v(a) * self.v(b);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.v(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.v(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.v(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.v(a).mapv(super::sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.v(a).mapv(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.v(a).mapv(f64::ln);
        self.push(out, Op::Log(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|&p| self.v(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::ShapeMismatch(format!("concat_cols: {e}")))?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        if start > end || end > self.v(a).ncols() {
            return Err(Error::ShapeMismatch(format!(
                "slice_cols {start}..{end} of {} columns",
                self.v(a).ncols()
            )));
        }
        let out = self.v(a).slice(s![.., start..end]).to_owned();
        Ok(self.push(out, Op::SliceCols(a, start, end)))
    }

    /// Stack `n` copies of `a` vertically: row `k * rows + i` is row `i` of `a`.
    pub fn tile_rows(&mut self, a: Var, n: usize) -> Var {
        let views = vec![self.v(a).view(); n];
        let out = ndarray::concatenate(Axis(0), &views).expect("same shapes");
        self.push(out, Op::TileRows(a, n))
    }

    /// Repeat column `j` of `a` `widths[j]` times.
    pub fn expand_cols(&mut self, a: Var, widths: &[usize]) -> Result<Var> {
        let src = self.v(a);
        if src.ncols() != widths.len() {
            return Err(Error::ShapeMismatch(format!(
                "expand_cols: {} columns, {} widths",
                src.ncols(),
                widths.len()
            )));
        }
        let mut out = Array2::zeros((src.nrows(), widths.iter().sum()));
        let mut c = 0;
        for (j, &w) in widths.iter().enumerate() {
            for _ in 0..w {
                out.column_mut(c).assign(&src.column(j));
                c += 1;
            }
        }
        Ok(self.push(out, Op::ExpandCols(a, widths.to_vec())))
    }

    /// Sum across columns, giving one column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let out = self.v(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(out, Op::RowSum(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.v(a).sum());
        self.push(out, Op::SumAll(a))
    }

    /// Elementwise Gaussian log-density with `log_var` clamped to [-10, 10].
    pub fn gaussian_loglik(&mut self, y: Var, mean: Var, log_var: Var) -> Result<Var> {
        self.same_shape(y, mean, "gaussian_loglik")?;
        self.same_shape(y, log_var, "gaussian_loglik")?;
        let mut out = Array2::zeros(self.v(y).dim());
        Zip::from(&mut out)
            .and(self.v(y))
            .and(self.v(mean))
            .and(self.v(log_var))
            .for_each(|o, &y, &m, &lv| *o = super::gaussian_loglik(y, m, lv));
        Ok(self.push(out, Op::GaussLogLik(y, mean, log_var)))
    }

    /// For a column of `n * b` values laid out as `n` stacked groups of `b`
    /// rows, returns `log(1/n sum_k exp(a[k*b + i]))` for each `i`.
    pub fn log_mean_exp_groups(&mut self, a: Var, n: usize) -> Result<Var> {
        let src = self.v(a);
        if n == 0 {
            return Err(Error::EmptyList);
        }
        if src.ncols() != 1 || src.nrows() % n != 0 {
            return Err(Error::ShapeMismatch(format!("log_mean_exp_groups {:?} / {n}", src.dim())));
        }
        let b = src.nrows() / n;
        let mut out = Array2::zeros((b, 1));
        let mut buf = vec![0.0; n];
        for i in 0..b {
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = src[[k * b + i, 0]];
            }
            out[[i, 0]] = super::log_mean_exp(&buf)?;
        }
        Ok(self.push(out, Op::LogMeanExpGroups(a, n)))
    }

    /// Binary-concrete relaxation `sigmoid((logit + noise) / tau)` with the
    /// logistic `noise` supplied by the caller.
    pub fn binary_concrete(&mut self, logits: Var, noise: &Array2<f64>, tau: f64) -> Result<Var> {
        if self.v(logits).dim() != noise.dim() {
            return Err(Error::ShapeMismatch(format!(
                "binary_concrete logits {:?}, noise {:?}",
                self.v(logits).dim(),
                noise.dim()
            )));
        }
        let mut out = self.v(logits) + noise;
        out.mapv_inplace(|v| super::relaxed_gate(v, tau));
        Ok(self.push(out, Op::BinaryConcrete(logits, tau)))
    }

    /// Reverse sweep from a 1x1 node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.v(loss).dim() != (1, 1) {
            return Err(Error::ShapeMismatch(format!("loss shape {:?}", self.v(loss).dim())));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(&node.op, &node.value, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, op: &Op, out: &Array2<f64>, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let mut acc = |v: Var, delta: Array2<f64>| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.dot(&self.v(*b).t()));
                }
                if self.needs(*b) {
                    acc(*b, self.v(*a).t().dot(g));
                }
            }
            Op::Affine(x, w, b) => {
                if self.needs(*x) {
                    acc(*x, g.dot(&self.v(*w).t()));
                }
                if self.needs(*w) {
                    acc(*w, self.v(*x).t().dot(g));
                }
                if self.needs(*b) {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g * self.v(*b));
                }
                if self.needs(*b) {
                    acc(*b, g * self.v(*a));
                }
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(out).for_each(|d, &y| *d *= 1.0 - y * y);
                acc(*a, d);
            }
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(self.v(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(out).for_each(|d, &y| *d *= y * (1.0 - y));
                acc(*a, d);
            }
            Op::Exp(a) => acc(*a, g * out),
            Op::Log(a) => acc(*a, g / self.v(*a)),
            Op::ConcatCols(parts) => {
                let mut c = 0;
                for &p in parts {
                    let w = self.v(p).ncols();
                    acc(p, g.slice(s![.., c..c + w]).to_owned());
                    c += w;
                }
            }
            Op::SliceCols(a, start, end) => {
                let mut d = Array2::zeros(self.v(*a).dim());
                d.slice_mut(s![.., *start..*end]).assign(g);
                acc(*a, d);
            }
            Op::TileRows(a, n) => {
                let rows = self.v(*a).nrows();
                let mut d = Array2::zeros(self.v(*a).dim());
                for k in 0..*n {
                    d += &g.slice(s![k * rows..(k + 1) * rows, ..]);
                }
                acc(*a, d);
            }
            Op::ExpandCols(a, widths) => {
                let mut d = Array2::zeros(self.v(*a).dim());
                let mut c = 0;
                for (j, &w) in widths.iter().enumerate() {
                    let mut col = d.column_mut(j);
                    for _ in 0..w {
                        col += &g.column(c);
                        c += 1;
                    }
                }
                acc(*a, d);
            }
            Op::RowSum(a) => {
                let d = g.broadcast(self.v(*a).dim()).expect("column broadcast").to_owned();
                acc(*a, d);
            }
            Op::SumAll(a) => acc(*a, Array2::from_elem(self.v(*a).dim(), g[[0, 0]])),
            Op::GaussLogLik(y, m, lv) => {
                let (yv, mv, lvv) = (self.v(*y), self.v(*m), self.v(*lv));
                // d/dmean = (y - mean) * exp(-log_var); d/dy is its negative.
                let mut dm = Array2::zeros(yv.dim());
                let mut dlv = Array2::zeros(yv.dim());
                Zip::from(&mut dm)
                    .and(&mut dlv)
                    .and(g)
                    .and(yv)
                    .and(mv)
                    .and(lvv)
                    .for_each(|dm, dlv, &g, &y, &m, &lv| {
                        let lvc = lv.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
                        let prec = (-lvc).exp();
                        let r = y - m;
                        *dm = g * r * prec;
                        *dlv = if (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&lv) {
                            -0.5 * g * (1.0 - r * r * prec)
                        } else {
                            0.0
                        };
                    });
                if self.needs(*y) {
                    acc(*y, -&dm);
                }
                acc(*m, dm);
                acc(*lv, dlv);
            }
            Op::LogMeanExpGroups(a, n) => {
                let src = self.v(*a);
                let b = src.nrows() / n;
                let mut d = Array2::zeros(src.dim());
                for k in 0..*n {
                    for i in 0..b {
                        let w = (src[[k * b + i, 0]] - out[[i, 0]]).exp() / *n as f64;
                        d[[k * b + i, 0]] = g[[i, 0]] * w;
                    }
                }
                acc(*a, d);
            }
            Op::BinaryConcrete(a, tau) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(out).for_each(|d, &z| *d *= z * (1.0 - z) / tau);
                acc(*a, d);
            }
        }
    }
}

fn op_inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::Affine(a, b, c) | Op::GaussLogLik(a, b, c) => vec![*a, *b, *c],
        Op::Scale(a, _)
        | Op::Tanh(a)
        | Op::Relu(a)
        | Op::Sigmoid(a)
        | Op::Exp(a)
        | Op::Log(a)
        | Op::SliceCols(a, _, _)
        | Op::TileRows(a, _)
        | Op::ExpandCols(a, _)
        | Op::RowSum(a)
        | Op::SumAll(a)
        | Op::LogMeanExpGroups(a, _)
        | Op::BinaryConcrete(a, _) => vec![*a],
        Op::ConcatCols(vs) => vs.clone(),
    }
}
