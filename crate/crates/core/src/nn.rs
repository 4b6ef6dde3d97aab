//! Multilayer perceptron Q-network with analytic backpropagation.
//!
//! Parameters live in one flat buffer, layer by layer: the weight matrix of
//! layer `l` (shape `in x out`, row-major, so `w[i * out + o]` connects input
//! `i` to output `o`) followed by its `out` biases. Hidden layers use the
//! rectifier, the output layer is linear.
//!
//! The training loss is the importance-weighted squared TD error on the
//! taken action only:
//!
//! ```text
//! L = (1/H) * sum_i w_i * (target_i - q(x_i)[a_i])^2
//! ```

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// A training batch. Inputs are borrowed from wherever the states live.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
    pub is_weights: Vec<f64>,
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn validate(&self, net: &Mlp) -> Result<()> {
        let h = self.inputs.len();
        if self.actions.len() != h || self.targets.len() != h || self.is_weights.len() != h {
            return Err(Error::invalid("batch fields have different lengths"));
        }
        for (x, &a) in self.inputs.iter().zip(&self.actions) {
            if x.len() != net.input_size() {
                return Err(Error::invalid(format!(
                    "batch input has {} features, network expects {}",
                    x.len(),
                    net.input_size()
                )));
            }
            if a >= net.output_size() {
                return Err(Error::invalid(format!("batch action {a} out of range")));
            }
        }
        if self.is_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("importance weights must be finite and non-negative"));
        }
        Ok(())
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let mut net = Self::zeros(sizes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = net.offsets[l];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    fn zeros(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for l in 0..sizes.len() - 1 {
            offsets.push(total);
            total += sizes[l] * sizes[l + 1] + sizes[l + 1];
        }
        offsets.push(total);
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; total],
            offsets,
        }
    }

    /// Builds a network from explicit parameters in the flat layout.
    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let mut net = Self::zeros(sizes);
        if params.len() != net.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn weights(&self, l: usize) -> &[f64] {
        let s = self.offsets[l];
        &self.params[s..s + self.sizes[l] * self.sizes[l + 1]]
    }

    fn biases(&self, l: usize) -> &[f64] {
        let s = self.offsets[l] + self.sizes[l] * self.sizes[l + 1];
        &self.params[s..s + self.sizes[l + 1]]
    }

    /// Weights of layer `l`, row `i` (the fan-out of input `i`).
    pub fn weight_row(&self, l: usize, i: usize) -> &[f64] {
        let out = self.sizes[l + 1];
        &self.weights(l)[i * out..(i + 1) * out]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_size() {
            return Err(Error::invalid(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_size()
            )));
        }
        let mut ws = Workspace::new(self);
        self.forward_ws(x, &mut ws);
        Ok(ws.acts.last().unwrap().clone())
    }

    /// Full forward pass; every layer's output is left in `ws.acts`.
    fn forward_ws(&self, x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        let n = self.n_layers();
        for l in 0..n {
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            out.copy_from_slice(self.biases(l));
            let width = out.len();
            let w = self.weights(l);
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                axpy(xi, &w[i * width..(i + 1) * width], out);
            }
            if l + 1 < n {
                out.iter_mut().for_each(|z| *z = z.max(0.0));
            }
        }
    }

    /// Hidden layers only, then the single output unit `a`.
    fn forward_one_output(&self, x: &[f64], a: usize, ws: &mut Workspace) -> f64 {
        ws.acts[0].copy_from_slice(x);
        let n = self.n_layers();
        for l in 0..n - 1 {
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            out.copy_from_slice(self.biases(l));
            let width = out.len();
            let w = self.weights(l);
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                axpy(xi, &w[i * width..(i + 1) * width], out);
            }
            out.iter_mut().for_each(|z| *z = z.max(0.0));
        }
        let last = n - 1;
        let width = self.sizes[n];
        let w = self.weights(last);
        let mut q = self.biases(last)[a];
        for (i, &h) in ws.acts[last].iter().enumerate() {
            q += h * w[i * width + a];
        }
        q
    }

    /// Forward passes for a batch of inputs, reusing one workspace.
    pub fn forward_batch(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut ws = Workspace::new(self);
        inputs
            .iter()
            .map(|x| {
                if x.len() != self.input_size() {
                    return Err(Error::invalid("input size mismatch"));
                }
                self.forward_ws(x, &mut ws);
                Ok(ws.acts.last().unwrap().clone())
            })
            .collect()
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        batch.validate(self)?;
        if batch.is_empty() {
            return Ok(0.0);
        }
        let mut ws = Workspace::new(self);
        let mut total = 0.0;
        for i in 0..batch.len() {
            let q = self.forward_one_output(batch.inputs[i], batch.actions[i], &mut ws);
            let e = batch.targets[i] - q;
            total += batch.is_weights[i] * e * e;
        }
        Ok(total / batch.len() as f64)
    }

    /// Gradient of [`Mlp::loss`] in the flat parameter layout, plus the loss.
    pub fn gradient(&self, batch: &Batch) -> Result<(Vec<f64>, f64)> {
        let (grad, loss, _) = self.gradient_with_errors(batch)?;
        Ok((grad, loss))
    }

    /// As [`Mlp::gradient`], also returning each sample's error `target - q`.
    pub fn gradient_with_errors(&self, batch: &Batch) -> Result<(Vec<f64>, f64, Vec<f64>)> {
        batch.validate(self)?;
        let mut grad = vec![0.0; self.params.len()];
        let mut errors = Vec::with_capacity(batch.len());
        if batch.is_empty() {
            return Ok((grad, 0.0, errors));
        }
        let mut ws = Workspace::new(self);
        let h = batch.len() as f64;
        let n = self.n_layers();
        let mut total = 0.0;
        for i in 0..batch.len() {
            let a = batch.actions[i];
            let q = self.forward_one_output(batch.inputs[i], a, &mut ws);
            let e = batch.targets[i] - q;
            errors.push(e);
            total += batch.is_weights[i] * e * e;
            let d_out = -2.0 * batch.is_weights[i] * e / h;
            if d_out == 0.0 {
                continue;
            }

            // Output layer: only unit `a` carries gradient.
            let last = n - 1;
            let width = self.sizes[n];
            let w_off = self.offsets[last];
            let b_off = w_off + self.sizes[last] * width;
            grad[b_off + a] += d_out;
            let w = self.weights(last);
            {
                let hidden = &ws.acts[last];
                let delta = &mut ws.deltas[last];
                for (j, &hj) in hidden.iter().enumerate() {
                    grad[w_off + j * width + a] += hj * d_out;
                    delta[j] = if hj > 0.0 { w[j * width + a] * d_out } else { 0.0 };
                }
            }

            // Hidden layers, walking backwards.
            for l in (0..last).rev() {
                let width = self.sizes[l + 1];
                let w_off = self.offsets[l];
                let b_off = w_off + self.sizes[l] * width;
                let (lower, upper) = ws.deltas.split_at_mut(l + 1);
                let delta = &upper[0];
                for (g, d) in grad[b_off..b_off + width].iter_mut().zip(delta.iter()) {
                    *g += d;
                }
                let input = &ws.acts[l];
                for (j, &xj) in input.iter().enumerate() {
                    if xj == 0.0 {
                        continue;
                    }
                    let row = w_off + j * width;
                    axpy(xj, delta, &mut grad[row..row + width]);
                }
                if l > 0 {
                    let w = self.weights(l);
                    let prev = &mut lower[l];
                    for (j, &hj) in ws.acts[l].iter().enumerate() {
                        prev[j] = if hj > 0.0 { dot(&w[j * width..(j + 1) * width], delta) } else { 0.0 };
                    }
                }
            }
        }
        Ok((grad, total / h, errors))
    }

    /// One gradient step; returns the batch loss before the step.
    pub fn backward_and_update(&mut self, batch: &Batch, lr: f64) -> Result<f64> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        let (grad, loss) = self.gradient(batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!("non-finite loss or gradient (loss = {loss})")));
        }
        for (p, g) in self.params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        Ok(loss)
    }

    /// Applies an already computed gradient through an optimizer.
    pub fn apply_gradient(&mut self, grad: &[f64], opt: &mut Optimizer) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::invalid("gradient length does not match parameter count"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        opt.step(&mut self.params, grad);
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence("non-finite parameters after update".into()));
        }
        Ok(())
    }
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(net: &Mlp) -> Self {
        Self {
            acts: net.sizes.iter().map(|&s| vec![0.0; s]).collect(),
            deltas: net.sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let xc = x.chunks_exact(4);
    let yc = y.chunks_exact(4);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (a, b) in xr.iter().zip(yr) {
        s += a * b;
    }
    s
}

/// Parameter update rule. Plain gradient descent unless configured otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Momentum {
        lr: f64,
        beta: f64,
        velocity: Vec<f64>,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "momentum" => Ok(Self::Momentum),
            "adam" => Ok(Self::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd, momentum or adam)")),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Momentum => "momentum",
            Self::Adam => "adam",
        })
    }
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::Sgd { lr },
            OptimizerKind::Momentum => Self::Momentum {
                lr,
                beta: 0.9,
                velocity: vec![0.0; n_params],
            },
            OptimizerKind::Adam => Self::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Self::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Self::Momentum { lr, beta, velocity } => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *v = *beta * *v + g;
                    *p -= *lr * *v;
                }
            }
            Self::Adam {
                lr,
                beta1,
                beta2,
                eps,
                m,
                v,
                t,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t as i32);
                let c2 = 1.0 - beta2.powi(*t as i32);
                for (((p, g), mi), vi) in params.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = *beta1 * *mi + (1.0 - *beta1) * g;
                    *vi = *beta2 * *vi + (1.0 - *beta2) * g * g;
                    *p -= *lr * (*mi / c1) / ((*vi / c2).sqrt() + *eps);
                }
            }
        }
    }
}

const CHECKPOINT_MAGIC: &str = "secbeam-mlp 1";

/// A network plus any named real vectors that travel with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub extras: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    /// Text format, one token group per line:
    ///
    /// ```text
    /// secbeam-mlp 1
    /// layers <n0> <n1> ... <nL>
    /// params <count>
    /// <value>            (count lines, flat layout)
    /// extra <name> <len> (optional, repeatable)
    /// <value>            (len lines)
    /// ```
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        let sizes: Vec<String> = self.net.sizes.iter().map(|s| s.to_string()).collect();
        writeln!(w, "layers {}", sizes.join(" "))?;
        writeln!(w, "params {}", self.net.params.len())?;
        for p in &self.net.params {
            writeln!(w, "{p:?}")?;
        }
        for (name, vals) in &self.extras {
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::Checkpoint(format!("invalid extra name `{name}`")));
            }
            writeln!(w, "extra {name} {}", vals.len())?;
            for v in vals {
                writeln!(w, "{v:?}")?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(l) => Ok(l?.trim().to_string()),
                None => Err(Error::Checkpoint(format!("unexpected end of file, expected {what}"))),
            }
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("bad number `{s}`")))
        };
        if next("header")? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("missing `secbeam-mlp 1` header".into()));
        }
        let layers = next("layers line")?;
        let sizes: Vec<usize> = match layers.strip_prefix("layers ") {
            Some(rest) => rest
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Checkpoint(format!("bad layer size `{t}`"))))
                .collect::<Result<_>>()?,
            None => return Err(Error::Checkpoint("expected `layers` line".into())),
        };
        let count_line = next("params line")?;
        let count: usize = count_line
            .strip_prefix("params ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Checkpoint("expected `params <count>` line".into()))?;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(parse_f(&next("parameter")?)?);
        }
        let net = Mlp::from_params(&sizes, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut extras = Vec::new();
        loop {
            let line = match next("extra") {
                Ok(l) => l,
                Err(_) => break,
            };
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 || toks[0] != "extra" {
                return Err(Error::Checkpoint(format!("unexpected line `{line}`")));
            }
            let len: usize = toks[2]
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad extra length `{}`", toks[2])))?;
            let mut vals = Vec::with_capacity(len);
            for _ in 0..len {
                vals.push(parse_f(&next("extra value")?)?);
            }
            extras.push((toks[1].to_string(), vals));
        }
        Ok(Self { net, extras })
    }

    pub fn extra(&self, name: &str) -> Option<&[f64]> {
        self.extras.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}
