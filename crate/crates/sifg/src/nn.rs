//! Minimal dense network with explicit forward/backward passes.
//!
//! [`ScoreNet`] is a plain MLP `y = A_L act(... act(A_1 x + b_1) ...) + b_L`
//! used both as the score estimator trained by denoising score matching and
//! as the velocity field of the quadratic-regularized flow baseline. Only
//! this fixed topology is differentiated; there is no general autodiff.
//!
//! Values are immutable once constructed: training steps return new stores.
//! Batch losses are accumulated over fixed-size chunks in a fixed order, so
//! results are bit-stable regardless of the rayon worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{tag, RngStream};
use crate::{Error, Result};

/// Batch items per reduction chunk. Fixed so parallel gradient accumulation
/// is order-deterministic.
const CHUNK: usize = 64;

/// Elementwise nonlinearity applied after every affine layer except the last.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Tanh,
    LeakyRelu { slope: f64 },
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::LeakyRelu { slope } => {
                if a >= 0.0 {
                    a
                } else {
                    slope * a
                }
            }
        }
    }

    /// Derivative in terms of the pre-activation. At exactly 0 the leaky
    /// branch takes the positive slope 1.
    #[inline]
    fn deriv(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
            Activation::LeakyRelu { slope } => {
                if a >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    /// Second derivative in terms of the pre-activation (zero a.e. for the
    /// piecewise-linear branch).
    #[inline]
    fn deriv2(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::LeakyRelu { .. } => 0.0,
        }
    }
}

/// Per-layer weight matrices (row-major, `out x in`) and bias vectors.
///
/// The same shape is reused for gradients and optimizer accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamStore {
    pub fn zeros_like(other: &ParamStore) -> Self {
        ParamStore {
            weights: other.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: other.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn same_shape(&self, other: &ParamStore) -> bool {
        self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&other.biases)
                .all(|(a, b)| a.len() == b.len())
    }

    pub fn is_finite(&self) -> bool {
        self.iter_values().all(f64::is_finite)
    }

    fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter().copied())
    }

    fn add_assign(&mut self, other: &ParamStore) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    fn scale(&mut self, c: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= c;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= c;
            }
        }
    }

    /// Flat view in a fixed order (weights then bias, layer by layer); used
    /// by checkpoint serialization and the finite-difference tests.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn unflatten_into(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Usage(format!(
                "flat parameter vector has {} entries, store holds {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut k = 0;
        for i in 0..self.weights.len() {
            let wl = self.weights[i].len();
            self.weights[i].copy_from_slice(&flat[k..k + wl]);
            k += wl;
            let bl = self.biases[i].len();
            self.biases[i].copy_from_slice(&flat[k..k + bl]);
            k += bl;
        }
        Ok(())
    }
}

/// Fully-connected network mapping `R^d -> R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    layer_dims: Vec<usize>,
    params: ParamStore,
    activation: Activation,
}

/// Build a network with fan-in-scaled uniform weights and zero biases,
/// deterministically from `seed`.
pub fn net_init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<ScoreNet> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(
            "layer_dims needs at least an input and an output width".into(),
        ));
    }
    if layer_dims.iter().any(|&w| w == 0) {
        return Err(Error::Config("layer widths must be positive".into()));
    }
    if layer_dims.first() != layer_dims.last() {
        return Err(Error::Config(format!(
            "input width {} and output width {} must both equal the particle dimension",
            layer_dims[0],
            layer_dims[layer_dims.len() - 1]
        )));
    }
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for l in 0..layer_dims.len() - 1 {
        let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut stream = RngStream::new(seed, tag::NET_INIT, l as u64, 0);
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| stream.next_range(-bound, bound))
            .collect();
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(ScoreNet {
        layer_dims: layer_dims.to_vec(),
        params: ParamStore { weights, biases },
        activation,
    })
}

/// Intermediate values of one forward pass, kept for the backward pass.
struct Trace {
    /// `inputs[l]` is the input to layer `l` (so `inputs[0]` is `x`).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers only.
    preacts: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ScoreNet {
    pub fn dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Replace the parameter store, keeping the architecture. Shapes must
    /// match exactly.
    pub fn with_params(&self, params: ParamStore) -> Result<ScoreNet> {
        if !params.same_shape(&self.params) {
            return Err(Error::Usage("parameter store shape mismatch".into()));
        }
        Ok(ScoreNet {
            layer_dims: self.layer_dims.clone(),
            params,
            activation: self.activation,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "input dimension mismatch");
        let n_layers = self.layer_dims.len() - 1;
        let mut cur = x.to_vec();
        for l in 0..n_layers {
            let mut next = self.affine(l, &cur);
            if l + 1 < n_layers {
                for v in &mut next {
                    *v = self.activation.apply(*v);
                }
            }
            cur = next;
        }
        cur
    }

    fn affine(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
        let w = &self.params.weights[l];
        let b = &self.params.biases[l];
        let mut out = Vec::with_capacity(n_out);
        for r in 0..n_out {
            let row = &w[r * n_in..(r + 1) * n_in];
            let mut acc = b[r];
            for (wv, xv) in row.iter().zip(input) {
                acc += wv * xv;
            }
            out.push(acc);
        }
        out
    }

    fn forward_trace(&self, x: &[f64]) -> Trace {
        let n_layers = self.layer_dims.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut preacts = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut cur = x.to_vec();
        for l in 0..n_layers {
            inputs.push(cur.clone());
            let pre = self.affine(l, &cur);
            if l + 1 < n_layers {
                preacts.push(pre.clone());
                cur = pre.iter().map(|&a| self.activation.apply(a)).collect();
            } else {
                cur = pre;
            }
        }
        Trace {
            inputs,
            preacts,
            output: cur,
        }
    }

    /// Accumulate parameter gradients for one item given the output
    /// cotangent `dl_dy`.
    fn backward_into(&self, trace: &Trace, dl_dy: &[f64], grads: &mut ParamStore) {
        let n_layers = self.layer_dims.len() - 1;
        let mut cot = dl_dy.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let input = &trace.inputs[l];
            let gw = &mut grads.weights[l];
            for r in 0..n_out {
                let c = cot[r];
                grads.biases[l][r] += c;
                let row = &mut gw[r * n_in..(r + 1) * n_in];
                for (g, xv) in row.iter_mut().zip(input) {
                    *g += c * xv;
                }
            }
            if l > 0 {
                let w = &self.params.weights[l];
                let mut prev = vec![0.0; n_in];
                for r in 0..n_out {
                    let c = cot[r];
                    let row = &w[r * n_in..(r + 1) * n_in];
                    for (p, wv) in prev.iter_mut().zip(row) {
                        *p += c * wv;
                    }
                }
                let pre = &trace.preacts[l - 1];
                for (p, &a) in prev.iter_mut().zip(pre) {
                    *p *= self.activation.deriv(a);
                }
                cot = prev;
            }
        }
    }
}

/// Which regression target the score-matching loss uses. The derivation form
/// regresses onto `-(x - z)/sigma^2`; the literal form flips that sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DsmSign {
    #[default]
    Derivation,
    LiteralAlg1,
}

/// Denoising score matching loss and its exact parameter gradient.
///
/// `xs`/`zs` are flat row-major `n x d` with `x_i = z_i + noise`. Returns
/// `(1/n) sum_i ||f(x_i) + (x_i - z_i)/sigma^2||^2` (derivation sign) and the
/// gradient of that mean with respect to every net parameter.
pub fn dsm_loss_and_grad(
    net: &ScoreNet,
    xs: &[f64],
    zs: &[f64],
    sigma: f64,
    sign: DsmSign,
) -> Result<(f64, ParamStore)> {
    if sigma <= 0.0 {
        return Err(Error::Config(format!("sigma must be > 0, got {sigma}")));
    }
    let d = net.dim();
    if xs.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    if xs.len() != zs.len() || xs.len() % d != 0 {
        return Err(Error::Usage("batch shape mismatch".into()));
    }
    let n = xs.len() / d;
    let target_scale = match sign {
        DsmSign::Derivation => 1.0,
        DsmSign::LiteralAlg1 => -1.0,
    } / (sigma * sigma);

    let per_chunk: Vec<(f64, ParamStore)> = xs
        .par_chunks(CHUNK * d)
        .zip(zs.par_chunks(CHUNK * d))
        .map(|(xc, zc)| {
            let mut grads = ParamStore::zeros_like(&net.params);
            let mut loss = 0.0;
            let mut dl_dy = vec![0.0; d];
            for (x, z) in xc.chunks_exact(d).zip(zc.chunks_exact(d)) {
                let trace = net.forward_trace(x);
                for j in 0..d {
                    let r = trace.output[j] + target_scale * (x[j] - z[j]);
                    loss += r * r;
                    dl_dy[j] = 2.0 * r;
                }
                net.backward_into(&trace, &dl_dy, &mut grads);
            }
            (loss, grads)
        })
        .collect();

    let mut total = ParamStore::zeros_like(&net.params);
    let mut loss = 0.0;
    for (l, g) in &per_chunk {
        loss += l;
        total.add_assign(g);
    }
    loss /= n as f64;
    total.scale(1.0 / n as f64);
    Ok((loss, total))
}

/// Velocity-fit objective for the quadratic-regularized flow baseline:
/// `(1/n) sum_i [ -<s_i, v(z_i)> - div v(z_i) + 0.5 ||v(z_i)||^2 ]`
/// where `s_i` is the target score at `z_i`. The divergence is exact, built
/// from `d` tangent propagations per item, and the returned gradient
/// differentiates the whole expression including the divergence term.
pub fn velocity_fit_loss_and_grad(
    net: &ScoreNet,
    zs: &[f64],
    target_scores: &[f64],
) -> Result<(f64, ParamStore)> {
    let d = net.dim();
    if zs.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    if zs.len() != target_scores.len() || zs.len() % d != 0 {
        return Err(Error::Usage("batch shape mismatch".into()));
    }
    let n = zs.len() / d;

    let per_chunk: Vec<(f64, ParamStore)> = zs
        .par_chunks(CHUNK * d)
        .zip(target_scores.par_chunks(CHUNK * d))
        .map(|(zc, sc)| {
            let mut grads = ParamStore::zeros_like(&net.params);
            let mut loss = 0.0;
            for (z, s) in zc.chunks_exact(d).zip(sc.chunks_exact(d)) {
                loss += velocity_fit_item(net, z, s, &mut grads);
            }
            (loss, grads)
        })
        .collect();

    let mut total = ParamStore::zeros_like(&net.params);
    let mut loss = 0.0;
    for (l, g) in &per_chunk {
        loss += l;
        total.add_assign(g);
    }
    loss /= n as f64;
    total.scale(1.0 / n as f64);
    Ok((loss, total))
}

/// One item of the velocity-fit objective: forward pass, Jacobian tangent
/// sweep for the divergence, then reverse sweep over both.
///
/// Tangent matrices are stored row-major `width x d`; column `i` tracks
/// d/dz_i. Writing the Jacobian of layer `l` as `D_l W_l ... D_1 W_1`, the
/// parameter gradient of `tr(J)` needs the second derivative of the
/// activation, which shows up as the `U ⊙ Tbar` row sums below.
fn velocity_fit_item(net: &ScoreNet, z: &[f64], s: &[f64], grads: &mut ParamStore) -> f64 {
    let dims = &net.layer_dims;
    let n_layers = dims.len() - 1;
    let d = dims[0];
    let act = net.activation;

    // Forward; keep inputs and hidden pre-activations.
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut preacts: Vec<Vec<f64>> = Vec::with_capacity(n_layers - 1);
    let mut cur = z.to_vec();
    for l in 0..n_layers {
        inputs.push(cur.clone());
        let pre = net.affine(l, &cur);
        if l + 1 < n_layers {
            preacts.push(pre.clone());
            cur = pre.iter().map(|&a| act.apply(a)).collect();
        } else {
            cur = pre;
        }
    }
    let v = cur;

    // Tangent sweep: T_0 = I, U_l = W_l T_{l-1}, T_l = diag(act'(h_l)) U_l.
    let mut tangents: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
    let mut pre_tangents: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut t_cur = vec![0.0; d * d];
    for i in 0..d {
        t_cur[i * d + i] = 1.0;
    }
    tangents.push(t_cur.clone());
    for l in 0..n_layers {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w = &net.params.weights[l];
        let mut u = vec![0.0; n_out * d];
        for r in 0..n_out {
            let row = &w[r * n_in..(r + 1) * n_in];
            let dst = &mut u[r * d..(r + 1) * d];
            for (c, &wv) in row.iter().enumerate() {
                let src = &t_cur[c * d..(c + 1) * d];
                for i in 0..d {
                    dst[i] += wv * src[i];
                }
            }
        }
        pre_tangents.push(u.clone());
        if l + 1 < n_layers {
            let pre = &preacts[l];
            for r in 0..n_out {
                let dv = act.deriv(pre[r]);
                for i in 0..d {
                    u[r * d + i] *= dv;
                }
            }
        }
        tangents.push(u.clone());
        t_cur = u;
    }
    let t_out = &tangents[n_layers];
    let mut div = 0.0;
    for i in 0..d {
        div += t_out[i * d + i];
    }

    let mut dot_sv = 0.0;
    let mut v_sq = 0.0;
    for j in 0..d {
        dot_sv += s[j] * v[j];
        v_sq += v[j] * v[j];
    }
    let loss = -dot_sv - div + 0.5 * v_sq;

    // Reverse sweep. Output cotangents: vbar = v - s, Tbar_L = -I.
    let mut vbar: Vec<f64> = (0..d).map(|j| v[j] - s[j]).collect();
    let mut tbar = vec![0.0; d * d];
    for i in 0..d {
        tbar[i * d + i] = -1.0;
    }

    for l in (0..n_layers).rev() {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w = &net.params.weights[l];
        let input = &inputs[l];
        let t_prev = &tangents[l];

        // Hidden layers fold the activation cotangents in first.
        let (hbar, ubar) = if l + 1 < n_layers {
            let pre = &preacts[l];
            let u = &pre_tangents[l];
            let mut hbar = vec![0.0; n_out];
            let mut ubar = vec![0.0; n_out * d];
            for r in 0..n_out {
                let d1 = act.deriv(pre[r]);
                let d2 = act.deriv2(pre[r]);
                let mut acc = d1 * vbar[r];
                for i in 0..d {
                    let tb = tbar[r * d + i];
                    ubar[r * d + i] = d1 * tb;
                    acc += d2 * u[r * d + i] * tb;
                }
                hbar[r] = acc;
            }
            (hbar, ubar)
        } else {
            (vbar.clone(), tbar.clone())
        };

        for r in 0..n_out {
            grads.biases[l][r] += hbar[r];
            let grow = &mut grads.weights[l][r * n_in..(r + 1) * n_in];
            let hb = hbar[r];
            let ub = &ubar[r * d..(r + 1) * d];
            for c in 0..n_in {
                let mut acc = hb * input[c];
                let tp = &t_prev[c * d..(c + 1) * d];
                for i in 0..d {
                    acc += ub[i] * tp[i];
                }
                grow[c] += acc;
            }
        }

        if l > 0 {
            let mut prev_vbar = vec![0.0; n_in];
            let mut prev_tbar = vec![0.0; n_in * d];
            for r in 0..n_out {
                let row = &w[r * n_in..(r + 1) * n_in];
                let hb = hbar[r];
                let ub = &ubar[r * d..(r + 1) * d];
                for c in 0..n_in {
                    prev_vbar[c] += row[c] * hb;
                    let dst = &mut prev_tbar[c * d..(c + 1) * d];
                    for i in 0..d {
                        dst[i] += row[c] * ub[i];
                    }
                }
            }
            vbar = prev_vbar;
            tbar = prev_tbar;
        }
    }

    loss
}

/// Evaluate only the velocity-fit objective (no gradient); used by tests.
pub fn velocity_fit_loss(net: &ScoreNet, zs: &[f64], target_scores: &[f64]) -> Result<f64> {
    let d = net.dim();
    if zs.is_empty() || zs.len() != target_scores.len() || zs.len() % d != 0 {
        return Err(Error::Usage("batch shape mismatch".into()));
    }
    let n = zs.len() / d;
    let mut scratch = ParamStore::zeros_like(&net.params);
    let mut loss = 0.0;
    for (z, s) in zs.chunks_exact(d).zip(target_scores.chunks_exact(d)) {
        loss += velocity_fit_item(net, z, s, &mut scratch);
    }
    Ok(loss / n as f64)
}

/// First-order update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    /// Nesterov-style momentum; `beta = 0` reduces to plain SGD.
    SgdMomentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Accumulator buffers mirroring the net shape, plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    momentum: ParamStore,
    second_moment: Option<ParamStore>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, net: &ScoreNet) -> Self {
        let momentum = ParamStore::zeros_like(&net.params);
        let second_moment = match kind {
            OptimizerKind::Adam { .. } => Some(ParamStore::zeros_like(&net.params)),
            _ => None,
        };
        OptimizerState {
            kind,
            momentum,
            second_moment,
            step_count: 0,
        }
    }

    pub fn buffers(&self) -> (&ParamStore, Option<&ParamStore>) {
        (&self.momentum, self.second_moment.as_ref())
    }

    pub fn buffers_mut(&mut self) -> (&mut ParamStore, Option<&mut ParamStore>) {
        (&mut self.momentum, self.second_moment.as_mut())
    }
}

/// Apply one optimizer step, returning the updated net and state.
/// Errors on shape mismatch and on non-finite resulting parameters.
pub fn optimizer_step(
    net: &ScoreNet,
    grads: &ParamStore,
    state: &OptimizerState,
    lr: f64,
) -> Result<(ScoreNet, OptimizerState)> {
    if lr <= 0.0 {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    if !grads.same_shape(&net.params) {
        return Err(Error::Usage("gradient shape mismatch".into()));
    }
    let mut params = net.params.clone();
    let mut st = state.clone();
    st.step_count += 1;

    match st.kind {
        OptimizerKind::Sgd => {
            apply_elementwise(&mut params, grads, |p, g| *p -= lr * g);
        }
        OptimizerKind::SgdMomentum { beta } => {
            let buf = &mut st.momentum;
            zip3(&mut params, buf, grads, |p, m, g| {
                *m = beta * *m + g;
                *p -= lr * (g + beta * *m);
            });
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            let t = st.step_count as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            let (m, v) = (&mut st.momentum, st.second_moment.as_mut().expect("adam buffers"));
            zip4(&mut params, m, v, grads, |p, m, v, g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }

    if !params.is_finite() {
        return Err(Error::Numerical(
            "optimizer step produced non-finite parameters".into(),
        ));
    }
    let net = net.with_params(params)?;
    Ok((net, st))
}

fn apply_elementwise(params: &mut ParamStore, grads: &ParamStore, mut f: impl FnMut(&mut f64, f64)) {
    for (p, g) in params.weights.iter_mut().zip(&grads.weights) {
        for (pv, gv) in p.iter_mut().zip(g) {
            f(pv, *gv);
        }
    }
    for (p, g) in params.biases.iter_mut().zip(&grads.biases) {
        for (pv, gv) in p.iter_mut().zip(g) {
            f(pv, *gv);
        }
    }
}

fn zip3(
    params: &mut ParamStore,
    buf: &mut ParamStore,
    grads: &ParamStore,
    mut f: impl FnMut(&mut f64, &mut f64, f64),
) {
    for ((p, m), g) in params
        .weights
        .iter_mut()
        .zip(buf.weights.iter_mut())
        .zip(&grads.weights)
    {
        for ((pv, mv), gv) in p.iter_mut().zip(m.iter_mut()).zip(g) {
            f(pv, mv, *gv);
        }
    }
    for ((p, m), g) in params
        .biases
        .iter_mut()
        .zip(buf.biases.iter_mut())
        .zip(&grads.biases)
    {
        for ((pv, mv), gv) in p.iter_mut().zip(m.iter_mut()).zip(g) {
            f(pv, mv, *gv);
        }
    }
}

fn zip4(
    params: &mut ParamStore,
    m: &mut ParamStore,
    v: &mut ParamStore,
    grads: &ParamStore,
    mut f: impl FnMut(&mut f64, &mut f64, &mut f64, f64),
) {
    for (((p, mb), vb), g) in params
        .weights
        .iter_mut()
        .zip(m.weights.iter_mut())
        .zip(v.weights.iter_mut())
        .zip(&grads.weights)
    {
        for (((pv, mv), vv), gv) in p.iter_mut().zip(mb.iter_mut()).zip(vb.iter_mut()).zip(g) {
            f(pv, mv, vv, *gv);
        }
    }
    for (((p, mb), vb), g) in params
        .biases
        .iter_mut()
        .zip(m.biases.iter_mut())
        .zip(v.biases.iter_mut())
        .zip(&grads.biases)
    {
        for (((pv, mv), vv), gv) in p.iter_mut().zip(mb.iter_mut()).zip(vb.iter_mut()).zip(g) {
            f(pv, mv, vv, *gv);
        }
    }
}
