use super::params::{Architecture, ConvSpec, NetworkParams};
use crate::{Error, Result};

/// LSTM hidden and cell vectors carried across the steps of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(arch: &Architecture) -> Self {
        RecurrentState {
            h: vec![0.0; arch.lstm],
            c: vec![0.0; arch.lstm],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.h.iter().chain(&self.c).all(|&v| v == 0.0)
    }
}

/// Gradient of some loss with respect to a [`RecurrentState`].
pub type RecurrentGrad = RecurrentState;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkInput {
    /// Row-major `input_size × input_size` raster.
    pub image: Vec<f64>,
    /// Index of the previous action; `None` at episode start (all-zero one-hot).
    pub prev_action: Option<usize>,
    pub prev_reward: f64,
}

impl NetworkInput {
    pub fn first(image: Vec<f64>) -> Self {
        NetworkInput {
            image,
            prev_action: None,
            prev_reward: 0.0,
        }
    }

    pub fn prev_action_one_hot(&self, n_actions: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_actions];
        if let Some(a) = self.prev_action {
            v[a] = 1.0;
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOutput {
    pub logits: Vec<f64>,
    pub policy: Vec<f64>,
    pub value: f64,
    pub state: RecurrentState,
}

/// Upstream gradient for one step: dL/dlogits and dL/dvalue.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputGrad {
    pub logits: Vec<f64>,
    pub value: f64,
}

impl OutputGrad {
    pub fn zeros(n_actions: usize) -> Self {
        OutputGrad {
            logits: vec![0.0; n_actions],
            value: 0.0,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// log-softmax, stable for large logits.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct StepCache {
    image: Vec<f64>,
    /// Post-ReLU activations.
    conv1: Vec<f64>,
    conv2: Vec<f64>,
    fc: Vec<f64>,
    x: Vec<f64>,
    /// Activated gates i, f, g, o.
    gates: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl StepCache {
    /// Which ReLU units are active; two caches with equal patterns lie in the same linear
    /// piece of the network.
    pub fn relu_pattern(&self, out: &mut Vec<bool>) {
        for v in self.conv1.iter().chain(&self.conv2).chain(&self.fc) {
            out.push(*v > 0.0);
        }
    }
}

fn check_input(arch: &Architecture, input: &NetworkInput, state: &RecurrentState) -> Result<()> {
    let n = arch.input_size * arch.input_size;
    if input.image.len() != n {
        return Err(Error::Shape {
            what: "network input image",
            expected: format!("{}x{} = {n}", arch.input_size, arch.input_size),
            actual: input.image.len().to_string(),
        });
    }
    if let Some(a) = input.prev_action {
        if a >= arch.n_actions {
            return Err(Error::Shape {
                what: "previous action",
                expected: format!("index < {}", arch.n_actions),
                actual: a.to_string(),
            });
        }
    }
    if state.h.len() != arch.lstm || state.c.len() != arch.lstm {
        return Err(Error::Shape {
            what: "recurrent state",
            expected: arch.lstm.to_string(),
            actual: format!("h {}, c {}", state.h.len(), state.c.len()),
        });
    }
    Ok(())
}

/// Valid (no padding) strided convolution followed by ReLU.
/// Weights are laid out `[filter][channel][ky][kx]`, activations `[channel][y][x]`.
fn conv_relu(
    input: &[f64],
    channels: usize,
    size: usize,
    spec: &ConvSpec,
    w: &[f64],
    b: &[f64],
    out: &mut Vec<f64>,
) {
    let k = spec.kernel;
    let s = spec.stride;
    let o = spec.output_size(size);
    out.clear();
    out.resize(spec.filters * o * o, 0.0);
    for f in 0..spec.filters {
        let plane = &mut out[f * o * o..(f + 1) * o * o];
        plane.fill(b[f]);
        for c in 0..channels {
            let inp = &input[c * size * size..(c + 1) * size * size];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w[((f * channels + c) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..o {
                        let row = &inp[(y * s + ky) * size + kx..];
                        let dst = &mut plane[y * o..(y + 1) * o];
                        for (x, d) in dst.iter_mut().enumerate() {
                            *d += wv * row[x * s];
                        }
                    }
                }
            }
        }
        for v in plane.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Backward of [`conv_relu`]: `dout` is dL/d(post-ReLU output) and is masked in place.
/// Accumulates weight/bias gradients and, if requested, dL/dinput.
#[allow(clippy::too_many_arguments)]
fn conv_relu_backward(
    input: &[f64],
    channels: usize,
    size: usize,
    spec: &ConvSpec,
    w: &[f64],
    out: &[f64],
    dout: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let k = spec.kernel;
    let s = spec.stride;
    let o = spec.output_size(size);
    for (d, &v) in dout.iter_mut().zip(out) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    for f in 0..spec.filters {
        let plane = &dout[f * o * o..(f + 1) * o * o];
        db[f] += plane.iter().sum::<f64>();
        for c in 0..channels {
            let inp = &input[c * size * size..(c + 1) * size * size];
            for ky in 0..k {
                for kx in 0..k {
                    let wi = ((f * channels + c) * k + ky) * k + kx;
                    let mut acc = 0.0;
                    for y in 0..o {
                        let row = &inp[(y * s + ky) * size + kx..];
                        let g = &plane[y * o..(y + 1) * o];
                        for (x, &gv) in g.iter().enumerate() {
                            acc += gv * row[x * s];
                        }
                    }
                    dw[wi] += acc;
                    if let Some(di) = dinput.as_deref_mut() {
                        let wv = w[wi];
                        let di = &mut di[c * size * size..(c + 1) * size * size];
                        for y in 0..o {
                            let g = &plane[y * o..(y + 1) * o];
                            let base = (y * s + ky) * size + kx;
                            for (x, &gv) in g.iter().enumerate() {
                                di[base + x * s] += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// y = W x + b with W row-major `[rows][cols]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], y: &mut Vec<f64>) {
    let cols = x.len();
    y.clear();
    y.extend(b.iter().enumerate().map(|(r, &bias)| {
        bias + w[r * cols..(r + 1) * cols]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }));
}

/// dW += dy ⊗ x, db += dy, dx += Wᵀ dy.
fn affine_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], db: Option<&mut [f64]>, dx: Option<&mut [f64]>) {
    let cols = x.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (d, &xv) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *d += g * xv;
        }
    }
    if let Some(db) = db {
        for (d, &g) in db.iter_mut().zip(dy) {
            *d += g;
        }
    }
    if let Some(dx) = dx {
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, &wv) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *d += g * wv;
            }
        }
    }
}

/// One forward step, keeping the intermediate activations.
pub fn forward_cached(
    params: &NetworkParams,
    input: &NetworkInput,
    state: &RecurrentState,
) -> Result<(NetworkOutput, StepCache)> {
    let a = *params.arch();
    check_input(&a, input, state)?;
    let l = params.layout();
    let p = &params.data;

    let mut conv1 = Vec::new();
    conv_relu(&input.image, 1, a.input_size, &a.conv1, &p[l.conv1_w.clone()], &p[l.conv1_b.clone()], &mut conv1);
    let mut conv2 = Vec::new();
    conv_relu(
        &conv1,
        a.conv1.filters,
        a.conv1_out(),
        &a.conv2,
        &p[l.conv2_w.clone()],
        &p[l.conv2_b.clone()],
        &mut conv2,
    );
    let mut fc = Vec::new();
    affine(&p[l.fc_w.clone()], &p[l.fc_b.clone()], &conv2, &mut fc);
    for v in &mut fc {
        *v = v.max(0.0);
    }

    let mut x = fc.clone();
    x.extend(input.prev_action_one_hot(a.n_actions));
    x.push(input.prev_reward);

    let hsz = a.lstm;
    let mut z = Vec::new();
    affine(&p[l.lstm_wx.clone()], &p[l.lstm_b.clone()], &x, &mut z);
    let wh = &p[l.lstm_wh.clone()];
    for (r, zr) in z.iter_mut().enumerate() {
        *zr += wh[r * hsz..(r + 1) * hsz]
            .iter()
            .zip(&state.h)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }
    let mut gates = z;
    for (j, g) in gates.iter_mut().enumerate() {
        *g = if j / hsz == 2 { g.tanh() } else { sigmoid(*g) };
    }
    let mut c = vec![0.0; hsz];
    let mut tanh_c = vec![0.0; hsz];
    let mut h = vec![0.0; hsz];
    for j in 0..hsz {
        let (i, f, g, o) = (gates[j], gates[hsz + j], gates[2 * hsz + j], gates[3 * hsz + j]);
        c[j] = f * state.c[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }

    let mut logits = Vec::new();
    affine(&p[l.policy_w.clone()], &p[l.policy_b.clone()], &h, &mut logits);
    let value = p[l.value_b.start]
        + p[l.value_w.clone()]
            .iter()
            .zip(&h)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    if !value.is_finite() || logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite network output".into()));
    }
    let policy = softmax(&logits);
    let out = NetworkOutput {
        logits,
        policy,
        value,
        state: RecurrentState { h: h.clone(), c },
    };
    let cache = StepCache {
        image: input.image.clone(),
        conv1,
        conv2,
        fc,
        x,
        gates,
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        tanh_c,
        h,
    };
    Ok((out, cache))
}

pub fn forward(params: &NetworkParams, input: &NetworkInput, state: &RecurrentState) -> Result<NetworkOutput> {
    forward_cached(params, input, state).map(|(o, _)| o)
}

/// A forward pass over consecutive steps with the recurrent state threaded through.
#[derive(Clone, Debug)]
pub struct Unroll {
    pub initial: RecurrentState,
    pub outputs: Vec<NetworkOutput>,
    pub caches: Vec<StepCache>,
}

impl Unroll {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn final_state(&self) -> &RecurrentState {
        self.outputs.last().map(|o| &o.state).unwrap_or(&self.initial)
    }

    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for c in &self.caches {
            c.relu_pattern(&mut out);
        }
        out
    }
}

pub fn unroll(params: &NetworkParams, inputs: &[NetworkInput], initial: &RecurrentState) -> Result<Unroll> {
    let mut state = initial.clone();
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for input in inputs {
        let (out, cache) = forward_cached(params, input, &state)?;
        state = out.state.clone();
        outputs.push(out);
        caches.push(cache);
    }
    Ok(Unroll {
        initial: initial.clone(),
        outputs,
        caches,
    })
}

/// Backpropagation through time over `run`.
///
/// `grads[t]` is the upstream gradient of step `t`. `d_final` is dL/d(final recurrent state)
/// coming from a later chunk (`None` = zero). Parameter gradients are accumulated into
/// `grad_out`; the gradient with respect to `run.initial` is returned so earlier chunks can
/// continue the chain.
pub fn backward(
    params: &NetworkParams,
    run: &Unroll,
    grads: &[OutputGrad],
    d_final: Option<&RecurrentGrad>,
    grad_out: &mut [f64],
) -> Result<RecurrentGrad> {
    let a = *params.arch();
    if run.is_empty() {
        return Err(Error::Precondition("backward over an empty unroll".into()));
    }
    if grads.len() != run.len() {
        return Err(Error::Shape {
            what: "per-step output gradients",
            expected: run.len().to_string(),
            actual: grads.len().to_string(),
        });
    }
    if grad_out.len() != params.len() {
        return Err(Error::Shape {
            what: "gradient buffer",
            expected: params.len().to_string(),
            actual: grad_out.len().to_string(),
        });
    }
    let l = params.layout().clone();
    let p = &params.data;
    let hsz = a.lstm;
    let n_fc = a.fc;

    let mut dh_next = d_final.map(|d| d.h.clone()).unwrap_or_else(|| vec![0.0; hsz]);
    let mut dc_next = d_final.map(|d| d.c.clone()).unwrap_or_else(|| vec![0.0; hsz]);
    let mut dz = vec![0.0; 4 * hsz];
    let mut dx = vec![0.0; a.lstm_input()];
    let mut dconv2 = vec![0.0; a.flat_size()];
    let mut dconv1 = vec![0.0; a.conv1.filters * a.conv1_out() * a.conv1_out()];

    for t in (0..run.len()).rev() {
        let cache = &run.caches[t];
        let g = &grads[t];
        if g.logits.len() != a.n_actions {
            return Err(Error::Shape {
                what: "logit gradient",
                expected: a.n_actions.to_string(),
                actual: g.logits.len().to_string(),
            });
        }
        if !g.value.is_finite() || g.logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite upstream gradient at step {t}")));
        }

        // heads
        let mut dh = dh_next.clone();
        affine_backward(
            &p[l.policy_w.clone()],
            &cache.h,
            &g.logits,
            &mut grad_out[l.policy_w.clone()],
            None,
            Some(&mut dh),
        );
        for (d, &gl) in grad_out[l.policy_b.clone()].iter_mut().zip(&g.logits) {
            *d += gl;
        }
        for (j, d) in grad_out[l.value_w.clone()].iter_mut().enumerate() {
            *d += g.value * cache.h[j];
        }
        grad_out[l.value_b.start] += g.value;
        for (j, d) in dh.iter_mut().enumerate() {
            *d += g.value * p[l.value_w.start + j];
        }

        // LSTM cell
        for j in 0..hsz {
            let (i, f, gg, o) = (
                cache.gates[j],
                cache.gates[hsz + j],
                cache.gates[2 * hsz + j],
                cache.gates[3 * hsz + j],
            );
            let tc = cache.tanh_c[j];
            let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dc * gg * i * (1.0 - i);
            dz[hsz + j] = dc * cache.c_prev[j] * f * (1.0 - f);
            dz[2 * hsz + j] = dc * i * (1.0 - gg * gg);
            dz[3 * hsz + j] = dh[j] * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        dx.fill(0.0);
        affine_backward(
            &p[l.lstm_wx.clone()],
            &cache.x,
            &dz,
            &mut grad_out[l.lstm_wx.clone()],
            None,
            Some(&mut dx),
        );
        for (d, &v) in grad_out[l.lstm_b.clone()].iter_mut().zip(&dz) {
            *d += v;
        }
        dh_next.fill(0.0);
        affine_backward(
            &p[l.lstm_wh.clone()],
            &cache.h_prev,
            &dz,
            &mut grad_out[l.lstm_wh.clone()],
            None,
            Some(&mut dh_next),
        );

        // FC with ReLU; the action/reward tail of x has no parameters upstream
        let mut dfc = dx[..n_fc].to_vec();
        for (d, &v) in dfc.iter_mut().zip(&cache.fc) {
            if v <= 0.0 {
                *d = 0.0;
            }
        }
        dconv2.fill(0.0);
        affine_backward(
            &p[l.fc_w.clone()],
            &cache.conv2,
            &dfc,
            &mut grad_out[l.fc_w.clone()],
            None,
            Some(&mut dconv2),
        );
        for (d, &v) in grad_out[l.fc_b.clone()].iter_mut().zip(&dfc) {
            *d += v;
        }

        dconv1.fill(0.0);
        {
            let (lo, hi) = grad_out.split_at_mut(l.conv2_b.start);
            conv_relu_backward(
                &cache.conv1,
                a.conv1.filters,
                a.conv1_out(),
                &a.conv2,
                &p[l.conv2_w.clone()],
                &cache.conv2,
                &mut dconv2,
                &mut lo[l.conv2_w.clone()],
                &mut hi[..l.conv2_b.len()],
                Some(&mut dconv1),
            );
        }
        {
            let (lo, hi) = grad_out.split_at_mut(l.conv1_b.start);
            conv_relu_backward(
                &cache.image,
                1,
                a.input_size,
                &a.conv1,
                &p[l.conv1_w.clone()],
                &cache.conv1,
                &mut dconv1,
                &mut lo[l.conv1_w.clone()],
                &mut hi[..l.conv1_b.len()],
                None,
            );
        }
    }
    if grad_out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite parameter gradient".into()));
    }
    Ok(RecurrentGrad {
        h: dh_next,
        c: dc_next,
    })
}

/// Exact full-episode BPTT with memory bounded by `chunk` steps.
///
/// A first pass records only the recurrent state at chunk boundaries; chunks are then
/// re-run and back-propagated last to first, carrying the state gradient between them.
/// `input_at(t)` produces the input of step `t`; `step_loss(t, out)` returns the loss of step
/// `t` and its gradient with respect to that step's outputs. Returns the summed loss.
pub fn bptt_chunked(
    params: &NetworkParams,
    n_steps: usize,
    chunk: usize,
    mut input_at: impl FnMut(usize) -> NetworkInput,
    mut step_loss: impl FnMut(usize, &NetworkOutput) -> (f64, OutputGrad),
    grad_out: &mut [f64],
) -> Result<f64> {
    if n_steps == 0 {
        return Err(Error::Precondition("BPTT over zero steps".into()));
    }
    let chunk = if chunk == 0 { n_steps } else { chunk };
    let a = *params.arch();
    let mut boundaries = vec![RecurrentState::zeros(&a)];
    let mut state = RecurrentState::zeros(&a);
    for t in 0..n_steps {
        if t > 0 && t % chunk == 0 {
            boundaries.push(state.clone());
        }
        state = forward(params, &input_at(t), &state)?.state;
    }
    let mut total = 0.0;
    let mut carry: Option<RecurrentGrad> = None;
    for (k, start_state) in boundaries.iter().enumerate().rev() {
        let start = k * chunk;
        let end = (start + chunk).min(n_steps);
        let inputs: Vec<NetworkInput> = (start..end).map(&mut input_at).collect();
        let run = unroll(params, &inputs, start_state)?;
        let mut grads = Vec::with_capacity(run.len());
        for (i, out) in run.outputs.iter().enumerate() {
            let (l, g) = step_loss(start + i, out);
            total += l;
            grads.push(g);
        }
        carry = Some(backward(params, &run, &grads, carry.as_ref(), grad_out)?);
    }
    if !total.is_finite() {
        return Err(Error::Numeric("non-finite episode loss".into()));
    }
    Ok(total)
}
