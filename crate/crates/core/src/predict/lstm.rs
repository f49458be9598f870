use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PredictError, Predictor, SequenceSample};

const N_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub heads: usize,
    pub key_dim: usize,
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            hidden1: 64,
            hidden2: 32,
            heads: 4,
            key_dim: 32,
            dropout: 0.2,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<(), PredictError> {
        if self.hidden1 == 0 || self.hidden2 == 0 || self.heads == 0 || self.key_dim == 0 {
            return Err(PredictError::InvalidConfig("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(PredictError::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        Layout::new(self).total
    }
}

/// Offsets of each weight block in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    h1: usize,
    h2: usize,
    heads: usize,
    dk: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    wd: usize,
    bd: usize,
    total: usize,
}

impl Layout {
    fn new(a: &ArchConfig) -> Layout {
        let (h1, h2) = (a.hidden1, a.hidden2);
        let hd = a.heads * a.key_dim;
        let mut at = 0;
        let mut take = |n: usize| {
            let s = at;
            at += n;
            s
        };
        let w1 = take(4 * h1 * (N_FEATURES + h1));
        let b1 = take(4 * h1);
        let w2 = take(4 * h2 * (h1 + h2));
        let b2 = take(4 * h2);
        let wq = take(hd * h2);
        let bq = take(hd);
        let wk = take(hd * h1);
        let bk = take(hd);
        let wv = take(hd * h1);
        let bv = take(hd);
        let wo = take(h2 * hd);
        let bo = take(h2);
        let wd = take(h2);
        let bd = take(1);
        Layout {
            h1,
            h2,
            heads: a.heads,
            dk: a.key_dim,
            w1,
            b1,
            w2,
            b2,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            wd,
            bd,
            total: at,
        }
    }

    fn hd(&self) -> usize {
        self.heads * self.dk
    }

    /// (start, len, fan_in) of every weight matrix; biases are the gaps.
    fn weight_blocks(&self) -> [(usize, usize, usize); 7] {
        let (h1, h2, hd) = (self.h1, self.h2, self.hd());
        [
            (self.w1, 4 * h1 * (N_FEATURES + h1), N_FEATURES + h1),
            (self.w2, 4 * h2 * (h1 + h2), h1 + h2),
            (self.wq, hd * h2, h2),
            (self.wk, hd * h1, h1),
            (self.wv, hd * h1, h1),
            (self.wo, h2 * hd, hd),
            (self.wd, h2, h2),
        ]
    }
}

/// Two stacked LSTM layers, multi-head attention over the first layer's
/// output sequence queried by the second layer's final state, and a scalar
/// affine head.
///
/// Inputs are standardized per feature and the output is mapped back to
/// return units with the stored target scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub arch: ArchConfig,
    /// Flat parameters, row-major, in this order: layer-1 gate weights
    /// (4·h1 rows of `[input | recurrent]`, gate blocks i, f, g, o), layer-1
    /// biases, the same two blocks for layer 2, then query, key, value and
    /// output projections each followed by its bias, head weights, head bias.
    pub params: Vec<f64>,
    pub input_mean: [f64; 3],
    pub input_scale: [f64; 3],
    pub target_mean: f64,
    pub target_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub prediction: f64,
    /// Attention mass per lag (oldest first), averaged over heads.
    pub attention: Vec<f64>,
}

struct LayerTrace {
    /// Activated gates per step, ordered input, forget, cell, output.
    gates: Vec<f64>,
    /// Cell states, row 0 is the zero initial state.
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Hidden states, row 0 is the zero initial state.
    h: Vec<f64>,
}

struct Trace {
    k: usize,
    x: Vec<f64>,
    l1: LayerTrace,
    m1: Option<Vec<f64>>,
    d1: Vec<f64>,
    l2: LayerTrace,
    m2: Option<Vec<f64>>,
    query_in: Vec<f64>,
    q: Vec<f64>,
    keys: Vec<f64>,
    values: Vec<f64>,
    alpha: Vec<f64>,
    ctx: Vec<f64>,
    o: Vec<f64>,
    out: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// Accumulates dW += dy ⊗ x, db += dy and optionally dx += Wᵀ dy.
fn affine_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64], dx: Option<&mut [f64]>) {
    let cols = x.len();
    for (r, &d) in dy.iter().enumerate() {
        db[r] += d;
        axpy(d, x, &mut dw[r * cols..(r + 1) * cols]);
    }
    if let Some(dx) = dx {
        for (r, &d) in dy.iter().enumerate() {
            axpy(d, &w[r * cols..(r + 1) * cols], dx);
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn layer_forward(w: &[f64], b: &[f64], input: &[f64], k: usize, nin: usize, h: usize) -> LayerTrace {
    let cols = nin + h;
    let mut tr = LayerTrace {
        gates: vec![0.0; k * 4 * h],
        c: vec![0.0; (k + 1) * h],
        tanh_c: vec![0.0; k * h],
        h: vec![0.0; (k + 1) * h],
    };
    let mut z = vec![0.0; 4 * h];
    for t in 0..k {
        let x = &input[t * nin..(t + 1) * nin];
        let hprev = &tr.h[t * h..(t + 1) * h];
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &w[r * cols..(r + 1) * cols];
            *zr = b[r] + dot(&row[..nin], x) + dot(&row[nin..], hprev);
        }
        let g = &mut tr.gates[t * 4 * h..(t + 1) * 4 * h];
        for j in 0..h {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[h + j]);
            let gg = z[2 * h + j].tanh();
            let o = sigmoid(z[3 * h + j]);
            g[j] = i;
            g[h + j] = f;
            g[2 * h + j] = gg;
            g[3 * h + j] = o;
            let c = f * tr.c[t * h + j] + i * gg;
            let tc = c.tanh();
            tr.c[(t + 1) * h + j] = c;
            tr.tanh_c[t * h + j] = tc;
            tr.h[(t + 1) * h + j] = o * tc;
        }
    }
    tr
}

#[allow(clippy::too_many_arguments)]
fn layer_backward(
    w: &[f64],
    tr: &LayerTrace,
    input: &[f64],
    k: usize,
    nin: usize,
    h: usize,
    dh_out: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let cols = nin + h;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..k).rev() {
        let g = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
        for j in 0..h {
            let dh = dh_out[t * h + j] + dh_next[j];
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = tr.tanh_c[t * h + j];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            dz[j] = dc * gg * i * (1.0 - i);
            dz[h + j] = dc * tr.c[t * h + j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - gg * gg);
            dz[3 * h + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let x = &input[t * nin..(t + 1) * nin];
        let hprev = &tr.h[t * h..(t + 1) * h];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            db[r] += d;
            let grow = &mut dw[r * cols..(r + 1) * cols];
            axpy(d, x, &mut grow[..nin]);
            axpy(d, hprev, &mut grow[nin..]);
            let row = &w[r * cols..(r + 1) * cols];
            if let Some(di) = dinput.as_deref_mut() {
                axpy(d, &row[..nin], &mut di[t * nin..(t + 1) * nin]);
            }
            axpy(d, &row[nin..], &mut dh_next);
        }
    }
}

fn dropout_mask(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

impl LstmModel {
    /// Weights uniform in ±1/√fan_in, biases zero, identity scalers.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self, PredictError> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (start, len, fan_in) in layout.weight_blocks() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[start..start + len] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(Self::with_params(arch, params))
    }

    /// All weights and biases zero.
    pub fn zeros(arch: ArchConfig) -> Result<Self, PredictError> {
        arch.validate()?;
        Ok(Self::with_params(arch, vec![0.0; arch.parameter_count()]))
    }

    fn with_params(arch: ArchConfig, params: Vec<f64>) -> Self {
        LstmModel {
            arch,
            params,
            input_mean: [0.0; 3],
            input_scale: [1.0; 3],
            target_mean: 0.0,
            target_scale: 1.0,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn check_parameters(&self) -> Result<(), PredictError> {
        if self.params.len() != self.arch.parameter_count() {
            return Err(PredictError::Shape(format!(
                "{} parameters for an architecture of {}",
                self.params.len(),
                self.arch.parameter_count()
            )));
        }
        match self.params.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(PredictError::NonFiniteParameter(i)),
            None => Ok(()),
        }
    }

    fn scale_inputs(&self, inputs: &[[f64; 3]]) -> Vec<f64> {
        inputs
            .iter()
            .flat_map(|row| (0..3).map(move |j| (row[j] - self.input_mean[j]) / self.input_scale[j]))
            .collect()
    }

    fn scale_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_scale
    }

    fn forward_trace(&self, inputs: &[[f64; 3]], mut rng: Option<&mut ChaCha8Rng>) -> Trace {
        let l = Layout::new(&self.arch);
        let p = &self.params;
        let (h1, h2, heads, dk, hd) = (l.h1, l.h2, l.heads, l.dk, l.hd());
        let k = inputs.len();
        let x = self.scale_inputs(inputs);
        let rate = self.arch.dropout;
        let l1 = layer_forward(&p[l.w1..l.b1], &p[l.b1..l.w2], &x, k, N_FEATURES, h1);
        let seq1 = &l1.h[h1..];
        let m1 = rng.as_deref_mut().filter(|_| rate > 0.0).map(|r| dropout_mask(k * h1, rate, r));
        let d1: Vec<f64> = match &m1 {
            Some(m) => seq1.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => seq1.to_vec(),
        };
        let l2 = layer_forward(&p[l.w2..l.b2], &p[l.b2..l.wq], &d1, k, h1, h2);
        let last = &l2.h[k * h2..];
        let m2 = rng.filter(|_| rate > 0.0).map(|r| dropout_mask(h2, rate, r));
        let query_in: Vec<f64> = match &m2 {
            Some(m) => last.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => last.to_vec(),
        };

        let mut q = vec![0.0; hd];
        affine(&p[l.wq..l.bq], &p[l.bq..l.wk], &query_in, &mut q);
        let mut keys = vec![0.0; k * hd];
        let mut values = vec![0.0; k * hd];
        for t in 0..k {
            let d = &d1[t * h1..(t + 1) * h1];
            affine(&p[l.wk..l.bk], &p[l.bk..l.wv], d, &mut keys[t * hd..(t + 1) * hd]);
            affine(&p[l.wv..l.bv], &p[l.bv..l.wo], d, &mut values[t * hd..(t + 1) * hd]);
        }
        let inv_sqrt = 1.0 / (dk as f64).sqrt();
        let mut alpha = vec![0.0; heads * k];
        let mut ctx = vec![0.0; hd];
        for hh in 0..heads {
            let qh = &q[hh * dk..(hh + 1) * dk];
            let a = &mut alpha[hh * k..(hh + 1) * k];
            for (t, at) in a.iter_mut().enumerate() {
                *at = inv_sqrt * dot(qh, &keys[t * hd + hh * dk..t * hd + (hh + 1) * dk]);
            }
            let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for at in a.iter_mut() {
                *at = (*at - max).exp();
                sum += *at;
            }
            for at in a.iter_mut() {
                *at /= sum;
            }
            for (t, &at) in a.iter().enumerate() {
                axpy(at, &values[t * hd + hh * dk..t * hd + (hh + 1) * dk], &mut ctx[hh * dk..(hh + 1) * dk]);
            }
        }
        let mut o = vec![0.0; h2];
        affine(&p[l.wo..l.bo], &p[l.bo..l.wd], &ctx, &mut o);
        let out = p[l.bd] + dot(&p[l.wd..l.bd], &o);
        Trace {
            k,
            x,
            l1,
            m1,
            d1,
            l2,
            m2,
            query_in,
            q,
            keys,
            values,
            alpha,
            ctx,
            o,
            out,
        }
    }

    /// Adds dOut/dθ · `dout` to `grad`, where Out is the network output in
    /// standardized target units.
    fn backward(&self, tr: &Trace, dout: f64, grad: &mut [f64]) {
        let l = Layout::new(&self.arch);
        let p = &self.params;
        let (h1, h2, heads, dk, hd, k) = (l.h1, l.h2, l.heads, l.dk, l.hd(), tr.k);

        grad[l.bd] += dout;
        axpy(dout, &tr.o, &mut grad[l.wd..l.bd]);
        let d_o: Vec<f64> = p[l.wd..l.bd].iter().map(|w| w * dout).collect();

        let mut dctx = vec![0.0; hd];
        {
            let (gw, gb) = grad[l.wo..l.wd].split_at_mut(h2 * hd);
            affine_backward(&p[l.wo..l.bo], &tr.ctx, &d_o, gw, gb, Some(&mut dctx));
        }

        let inv_sqrt = 1.0 / (dk as f64).sqrt();
        let mut dq = vec![0.0; hd];
        let mut dkeys = vec![0.0; k * hd];
        let mut dvalues = vec![0.0; k * hd];
        let mut dalpha = vec![0.0; k];
        for hh in 0..heads {
            let a = &tr.alpha[hh * k..(hh + 1) * k];
            let dc = &dctx[hh * dk..(hh + 1) * dk];
            for t in 0..k {
                let off = t * hd + hh * dk;
                dalpha[t] = dot(dc, &tr.values[off..off + dk]);
                axpy(a[t], dc, &mut dvalues[off..off + dk]);
            }
            let avg = dot(a, &dalpha);
            for t in 0..k {
                let ds = a[t] * (dalpha[t] - avg) * inv_sqrt;
                let off = t * hd + hh * dk;
                axpy(ds, &tr.keys[off..off + dk], &mut dq[hh * dk..(hh + 1) * dk]);
                axpy(ds, &tr.q[hh * dk..(hh + 1) * dk], &mut dkeys[off..off + dk]);
            }
        }

        let mut dquery = vec![0.0; h2];
        {
            let (gw, gb) = grad[l.wq..l.wk].split_at_mut(hd * h2);
            affine_backward(&p[l.wq..l.bq], &tr.query_in, &dq, gw, gb, Some(&mut dquery));
        }
        let mut dd1 = vec![0.0; k * h1];
        for t in 0..k {
            let d = &tr.d1[t * h1..(t + 1) * h1];
            let dx = &mut dd1[t * h1..(t + 1) * h1];
            {
                let (gw, gb) = grad[l.wk..l.wv].split_at_mut(hd * h1);
                affine_backward(&p[l.wk..l.bk], d, &dkeys[t * hd..(t + 1) * hd], gw, gb, Some(&mut *dx));
            }
            let (gw, gb) = grad[l.wv..l.wo].split_at_mut(hd * h1);
            affine_backward(&p[l.wv..l.bv], d, &dvalues[t * hd..(t + 1) * hd], gw, gb, Some(dx));
        }

        let mut dh2 = vec![0.0; k * h2];
        for (j, v) in dquery.iter().enumerate() {
            let m = tr.m2.as_ref().map_or(1.0, |m| m[j]);
            dh2[(k - 1) * h2 + j] = v * m;
        }
        {
            let (gw, gb) = grad[l.w2..l.wq].split_at_mut(4 * h2 * (h1 + h2));
            layer_backward(&p[l.w2..l.b2], &tr.l2, &tr.d1, k, h1, h2, &dh2, gw, gb, Some(&mut dd1));
        }
        if let Some(m) = &tr.m1 {
            dd1.iter_mut().zip(m).for_each(|(d, m)| *d *= m);
        }
        let (gw, gb) = grad[l.w1..l.w2].split_at_mut(4 * h1 * (N_FEATURES + h1));
        layer_backward(&p[l.w1..l.b1], &tr.l1, &tr.x, k, N_FEATURES, h1, &dd1, gw, gb, None);
    }

    fn profile(&self, tr: &Trace) -> Vec<f64> {
        let heads = self.arch.heads;
        let mut prof = vec![0.0; tr.k];
        for hh in 0..heads {
            for (t, p) in prof.iter_mut().enumerate() {
                *p += tr.alpha[hh * tr.k + t] / heads as f64;
            }
        }
        prof
    }

    /// Mean squared error in standardized target units over `samples`.
    /// With `mask_seed` dropout is active, with masks drawn in sample order
    /// from a generator seeded by it.
    pub fn loss(&self, samples: &[&SequenceSample], mask_seed: Option<u64>) -> f64 {
        let mut rng = mask_seed.map(ChaCha8Rng::seed_from_u64);
        let mut total = 0.0;
        for s in samples {
            let tr = self.forward_trace(&s.inputs, rng.as_mut());
            let e = tr.out - self.scale_target(s.target);
            total += e * e;
        }
        total / samples.len() as f64
    }

    /// [`LstmModel::loss`] and its gradient with respect to `params`.
    pub fn loss_gradient(&self, samples: &[&SequenceSample], mask_seed: Option<u64>) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(samples, mask_seed, &mut grad);
        (loss, grad)
    }

    pub(crate) fn accumulate_gradient(&self, samples: &[&SequenceSample], mask_seed: Option<u64>, grad: &mut [f64]) -> f64 {
        let mut rng = mask_seed.map(ChaCha8Rng::seed_from_u64);
        let n = samples.len() as f64;
        let mut total = 0.0;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for s in samples {
            let tr = self.forward_trace(&s.inputs, rng.as_mut());
            let e = tr.out - self.scale_target(s.target);
            total += e * e;
            self.backward(&tr, 2.0 * e / n, grad);
        }
        total / n
    }

    pub(crate) fn predict_unchecked(&self, inputs: &[[f64; 3]]) -> ForwardOutput {
        let tr = self.forward_trace(inputs, None);
        ForwardOutput {
            prediction: self.target_mean + self.target_scale * tr.out,
            attention: self.profile(&tr),
        }
    }
}

/// One forward pass. With `train_mode` dropout masks are drawn from a
/// generator seeded by `seed`; otherwise the pass is deterministic.
pub fn lstm_forward(model: &LstmModel, inputs: &[[f64; 3]], train_mode: bool, seed: u64) -> Result<ForwardOutput, PredictError> {
    model.check_parameters()?;
    if inputs.is_empty() {
        return Err(PredictError::Shape("empty input window".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tr = model.forward_trace(inputs, train_mode.then_some(&mut rng));
    Ok(ForwardOutput {
        prediction: model.target_mean + model.target_scale * tr.out,
        attention: model.profile(&tr),
    })
}

impl Predictor for LstmModel {
    fn predict(&self, inputs: &[[f64; 3]]) -> f64 {
        self.predict_unchecked(inputs).prediction
    }

    fn attention_profile(&self, inputs: &[[f64; 3]]) -> Option<Vec<f64>> {
        Some(self.predict_unchecked(inputs).attention)
    }
}
