use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Layer widths of the shared trunk and the number of ternary heads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetArch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub heads: usize,
}

impl NetArch {
    /// Three tanh layers of 50 units.
    pub fn standard(input: usize, heads: usize) -> Self {
        Self { input, hidden: vec![50; 3], heads }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.input == 0 || self.heads == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(NeuralError::Architecture(format!("{self:?}")));
        }
        if self.checked_param_count().is_none() {
            return Err(NeuralError::Architecture(format!("{self:?} overflows the parameter count")));
        }
        Ok(())
    }

    /// Parameter count, or `None` if it does not fit in `usize`.
    pub fn checked_param_count(&self) -> Option<usize> {
        let mut total = 0usize;
        let mut prev = self.input;
        let outs = self.hidden.iter().copied().chain([self.heads.checked_mul(3)?]);
        for out in outs {
            total = total.checked_add(prev.checked_add(1)?.checked_mul(out)?)?;
            prev = out;
        }
        let last = *self.hidden.last()?;
        total.checked_add(last.checked_add(1)?)
    }

    fn dense_layers(&self) -> Vec<Dense> {
        let mut layers = Vec::with_capacity(self.hidden.len() + 2);
        let mut off = 0;
        let mut push = |input: usize, output: usize| {
            let d = Dense { input, output, w: off, b: off + input * output };
            off += (input + 1) * output;
            layers.push(d);
        };
        let mut prev = self.input;
        for &h in &self.hidden {
            push(prev, h);
            prev = h;
        }
        push(prev, 3 * self.heads);
        push(prev, 1);
        layers
    }

    /// Panics on overflow; see [`NetArch::checked_param_count`].
    pub fn param_count(&self) -> usize {
        self.checked_param_count().expect("parameter count overflow")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    input: usize,
    output: usize,
    /// Offset of the row-major `output x input` weight block.
    w: usize,
    b: usize,
}

impl Dense {
    fn apply(&self, p: &[f64], x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.output {
            let row = &p[self.w + o * self.input..self.w + (o + 1) * self.input];
            out.push(p[self.b + o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }

    /// Accumulates parameter gradients for upstream `dy` and returns `dx`.
    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.input];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let base = self.w + o * self.input;
            grad[self.b + o] += g;
            for i in 0..self.input {
                grad[base + i] += g * x[i];
                dx[i] += g * p[base + i];
            }
        }
        dx
    }
}

/// Trunk activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l + 1]` the output of trunk layer `l`.
    acts: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub value: f64,
}

/// Shared tanh trunk with `heads` ternary logit heads and a scalar value head.
/// Parameters live in one flat vector, layer by layer, weights before biases.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    arch: NetArch,
    layers: Vec<Dense>,
    pub params: Vec<f64>,
}

fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // orthonormalize the columns of a tall gaussian matrix, transposing for wide shapes
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut q: Vec<Vec<f64>> = (0..short).map(|_| (0..tall).map(|_| StandardNormal.sample(rng)).collect()).collect();
    for j in 0..short {
        for k in 0..j {
            let d: f64 = q[j].iter().zip(&q[k]).map(|(a, b)| a * b).sum();
            let qk = q[k].clone();
            q[j].iter_mut().zip(&qk).for_each(|(a, b)| *a -= d * b);
        }
        let n = q[j].iter().map(|a| a * a).sum::<f64>().sqrt();
        q[j].iter_mut().for_each(|a| *a /= n);
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = gain * if rows >= cols { q[c][r] } else { q[r][c] };
        }
    }
    w
}

impl PolicyNet {
    pub fn zeros(arch: NetArch) -> Result<Self, NeuralError> {
        arch.validate()?;
        let layers = arch.dense_layers();
        let params = vec![0.0; arch.param_count()];
        Ok(Self { arch, layers, params })
    }

    /// Orthogonal weights (gain 1 for trunk and value, 0.01 for the policy heads), zero biases.
    pub fn new(arch: NetArch, seed: u64) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = net.layers.len() - 2;
        for (i, d) in net.layers.clone().iter().enumerate() {
            let gain = if i == policy { 0.01 } else { 1.0 };
            let w = orthogonal(d.output, d.input, gain, &mut rng);
            net.params[d.w..d.w + w.len()].copy_from_slice(&w);
        }
        Ok(net)
    }

    pub fn from_params(arch: NetArch, params: Vec<f64>) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(arch)?;
        if params.len() != net.params.len() {
            return Err(NeuralError::ParamCount { expected: net.params.len(), got: params.len() });
        }
        net.params = params;
        Ok(net)
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input
    }

    pub fn heads(&self) -> usize {
        self.arch.heads
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward_cached(&self, obs: &[f64]) -> Result<ForwardCache, NeuralError> {
        if obs.len() != self.arch.input {
            return Err(NeuralError::InputWidth { expected: self.arch.input, got: obs.len() });
        }
        let trunk = self.layers.len() - 2;
        let mut acts = Vec::with_capacity(trunk + 1);
        acts.push(obs.to_vec());
        for d in &self.layers[..trunk] {
            let mut z = Vec::with_capacity(d.output);
            d.apply(&self.params, acts.last().unwrap(), &mut z);
            z.iter_mut().for_each(|v| *v = v.tanh());
            acts.push(z);
        }
        let h = acts.last().unwrap();
        let mut logits = Vec::with_capacity(3 * self.arch.heads);
        self.layers[trunk].apply(&self.params, h, &mut logits);
        let mut value = Vec::with_capacity(1);
        self.layers[trunk + 1].apply(&self.params, h, &mut value);
        Ok(ForwardCache { acts, logits, value: value[0] })
    }

    /// Logits (`3·heads`, head-major) and the value estimate.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, f64), NeuralError> {
        let c = self.forward_cached(obs)?;
        Ok((c.logits, c.value))
    }

    /// Adds the parameter gradient for output gradients `dlogits`, `dvalue` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
        let trunk = self.layers.len() - 2;
        let h = &cache.acts[trunk];
        let mut dh = self.layers[trunk].backward(&self.params, h, dlogits, grad);
        let dv = self.layers[trunk + 1].backward(&self.params, h, &[dvalue], grad);
        dh.iter_mut().zip(dv).for_each(|(a, b)| *a += b);
        for l in (0..trunk).rev() {
            let a = &cache.acts[l + 1];
            let dz: Vec<f64> = dh.iter().zip(a).map(|(g, a)| g * (1.0 - a * a)).collect();
            dh = self.layers[l].backward(&self.params, &cache.acts[l], &dz, grad);
        }
    }
}
