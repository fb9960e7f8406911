//! Small dense-network kernel: two-layer MLPs, masked mean pooling, Adam and
//! a finite-difference gradient checker. Everything is `f64`, row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `x · w + b` for `x: n×i`, `w: i×o`. Zero inputs are skipped, which pays
/// off on one-hot and bitmap features.
fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(x.rows, w.cols);
    for r in 0..x.rows {
        let o = &mut out.data[r * w.cols..(r + 1) * w.cols];
        o.copy_from_slice(b);
        for (k, &xv) in x.row(r).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (ov, wv) in o.iter_mut().zip(w.row(k)) {
                *ov += xv * wv;
            }
        }
    }
    out
}

/// Accumulates `dW += xᵀ·g`, `db += Σ g` and returns `g·wᵀ` if asked.
fn affine_backward(x: &Matrix, w: &Matrix, g: &Matrix, dw: &mut [f64], db: &mut [f64], need_dx: bool) -> Option<Matrix> {
    for r in 0..x.rows {
        let gr = g.row(r);
        for (dbv, gv) in db.iter_mut().zip(gr) {
            *dbv += gv;
        }
        for (k, &xv) in x.row(r).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let dwr = &mut dw[k * w.cols..(k + 1) * w.cols];
            for (d, gv) in dwr.iter_mut().zip(gr) {
                *d += xv * gv;
            }
        }
    }
    need_dx.then(|| {
        let mut dx = Matrix::zeros(x.rows, w.rows);
        for r in 0..x.rows {
            let gr = g.row(r);
            for k in 0..w.rows {
                dx.data[r * w.rows + k] = w.row(k).iter().zip(gr).map(|(a, b)| a * b).sum();
            }
        }
        dx
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Sigmoid => v.iter_mut().for_each(|x| *x = sigmoid(*x)),
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two dense layers: `act2(relu(x·W1 + b1)·W2 + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense2 {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub out_act: Activation,
}

#[derive(Debug, Clone)]
pub struct Dense2Cache {
    x: Matrix,
    h: Matrix,
    y: Matrix,
}

impl Dense2Cache {
    pub fn output(&self) -> &Matrix {
        &self.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense2Grads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Dense2Grads {
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
    }
}

impl Dense2 {
    /// Weights ~ U(-1/√fan_in, 1/√fan_in), biases zero.
    pub fn init(input: usize, hidden: usize, output: usize, out_act: Activation, rng: &mut impl Rng) -> Self {
        let uniform = |rows: usize, cols: usize, rng: &mut dyn rand::RngCore| {
            let bound = 1.0 / (rows.max(1) as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
            Matrix { rows, cols, data }
        };
        Dense2 {
            w1: uniform(input, hidden, rng),
            b1: vec![0.0; hidden],
            w2: uniform(hidden, output, rng),
            b2: vec![0.0; output],
            out_act,
        }
    }

    pub fn input_width(&self) -> usize {
        self.w1.rows
    }

    pub fn output_width(&self) -> usize {
        self.w2.cols
    }

    pub fn param_count(&self) -> usize {
        self.w1.data.len() + self.b1.len() + self.w2.data.len() + self.b2.len()
    }

    pub fn forward(&self, x: Matrix) -> Result<Dense2Cache> {
        if x.cols != self.w1.rows {
            return Err(Error::Dimension(format!(
                "input width {} does not match layer width {}",
                x.cols, self.w1.rows
            )));
        }
        let mut h = affine(&x, &self.w1, &self.b1);
        Activation::Relu.apply(&mut h.data);
        let mut y = affine(&h, &self.w2, &self.b2);
        self.out_act.apply(&mut y.data);
        Ok(Dense2Cache { x, h, y })
    }

    /// Backpropagates `dy` (gradient w.r.t. the activated output).
    pub fn backward(&self, cache: &Dense2Cache, dy: &Matrix, need_dx: bool) -> (Dense2Grads, Option<Matrix>) {
        let mut g = dy.clone();
        for (gv, &yv) in g.data.iter_mut().zip(&cache.y.data) {
            *gv *= self.out_act.grad_from_output(yv);
        }
        let mut grads = Dense2Grads {
            w1: vec![0.0; self.w1.data.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.data.len()],
            b2: vec![0.0; self.b2.len()],
        };
        let mut dh = affine_backward(&cache.h, &self.w2, &g, &mut grads.w2, &mut grads.b2, true).unwrap();
        for (d, &hv) in dh.data.iter_mut().zip(&cache.h.data) {
            if hv <= 0.0 {
                *d = 0.0;
            }
        }
        let dx = affine_backward(&cache.x, &self.w1, &dh, &mut grads.w1, &mut grads.b1, need_dx);
        (grads, dx)
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w1.data);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2.data);
        out.extend_from_slice(&self.b2);
    }

    /// Overwrites the parameters from `src`, returning the unread tail.
    pub fn load_from<'a>(&mut self, src: &'a [f64]) -> Result<&'a [f64]> {
        if src.len() < self.param_count() {
            return Err(Error::Dimension("parameter vector too short".into()));
        }
        let mut rest = src;
        for dst in [
            &mut self.w1.data[..],
            &mut self.b1[..],
            &mut self.w2.data[..],
            &mut self.b2[..],
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(rest)
    }
}

/// Averages the rows of `x` into `groups` outputs. `owner[r]` names the
/// group of row `r`; every group must own at least one row.
pub fn masked_mean_pool(x: &Matrix, owner: &[usize], groups: usize) -> Result<(Matrix, Vec<f64>)> {
    let mut counts = vec![0.0; groups];
    let mut out = Matrix::zeros(groups, x.cols);
    for (r, &g) in owner.iter().enumerate() {
        counts[g] += 1.0;
        for (o, v) in out.row_mut(g).iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    for (g, &c) in counts.iter().enumerate() {
        if c == 0.0 {
            return Err(Error::Dimension(format!("set {g} has no unmasked elements")));
        }
        out.row_mut(g).iter_mut().for_each(|v| *v /= c);
    }
    Ok((out, counts))
}

/// Spreads pooled gradients back to the rows that were averaged.
pub fn masked_mean_pool_backward(d_pooled: &Matrix, owner: &[usize], counts: &[f64]) -> Matrix {
    let mut dx = Matrix::zeros(owner.len(), d_pooled.cols);
    for (r, &g) in owner.iter().enumerate() {
        for (d, v) in dx.row_mut(r).iter_mut().zip(d_pooled.row(g)) {
            *d = v / counts[g];
        }
    }
    dx
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients leave the
/// parameters untouched and are reported.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || grads.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam: {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient {i} is {}", grads[i])));
    }
    state.t += 1;
    let c1 = 1.0 - state.beta1.powi(state.t as i32);
    let c2 = 1.0 - state.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Compares `analytic` against central differences of `loss` at up to
/// `coords` randomly chosen coordinates. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    mut loss: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    h: f64,
    coords: usize,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if coords >= point.len() {
        (0..point.len()).collect()
    } else {
        rand::seq::index::sample(&mut rng, point.len(), coords).into_vec()
    };
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        checked: picks.len(),
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in picks {
        let orig = x[i];
        x[i] = orig + h;
        let up = loss(&x);
        x[i] = orig - h;
        let down = loss(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report
}
