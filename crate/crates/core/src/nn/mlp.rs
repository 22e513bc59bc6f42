use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network with `tanh` hidden units and a linear output layer.
///
/// All weights and biases live in one flat vector: for each layer the weight
/// matrix (row-major, `out x in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass, reused by [`Mlp::backward`].
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let mut mlp = Self::zeros(dims);
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut mlp.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        mlp
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "a network needs input and output sizes");
        assert!(dims.iter().all(|&d| d > 0), "layer sizes must be positive");
        let count = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            dims: dims.to_vec(),
            params: vec![0.0; count],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Network output `h(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = Trace::default();
        self.forward_trace(x, &mut trace)?;
        Ok(trace.acts.pop().unwrap())
    }

    /// Forward pass that keeps the activations for a subsequent backward pass.
    pub fn forward_trace<'t>(&self, x: &[f64], trace: &'t mut Trace) -> Result<&'t [f64]> {
        self.check_input(x)?;
        let layers = self.dims.len() - 1;
        trace.acts.resize_with(layers + 1, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let (head, tail) = trace.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.clear();
            for (row, b) in weights.chunks_exact(n_in).zip(bias) {
                let s: f64 = row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + b;
                out.push(if l + 1 < layers { s.tanh() } else { s });
            }
            offset += n_in * n_out + n_out;
        }
        Ok(trace.output())
    }

    /// Accumulates `d(loss)/d(params)` into `grads`, given `d(loss)/d(output)`
    /// for the forward pass recorded in `trace`.
    pub fn backward(&self, trace: &mut Trace, grad_out: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len());
        assert_eq!(grad_out.len(), self.output_dim());
        let layers = self.dims.len() - 1;
        let Trace {
            acts,
            delta,
            delta_next,
        } = trace;
        delta.clear();
        delta.extend_from_slice(grad_out);
        let mut end = self.params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let start = end - (n_in * n_out + n_out);
            let input = &acts[l];
            {
                let (gw, gb) = grads[start..end].split_at_mut(n_in * n_out);
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l > 0 {
                let weights = &self.params[start..start + n_in * n_out];
                delta_next.clear();
                delta_next.resize(n_in, 0.0);
                for (o, d) in delta.iter().enumerate() {
                    for (dn, w) in delta_next.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *dn += d * w;
                    }
                }
                // tanh'(s) = 1 - tanh(s)^2
                for (dn, a) in delta_next.iter_mut().zip(input) {
                    *dn *= 1.0 - a * a;
                }
                std::mem::swap(delta, delta_next);
            }
            end = start;
        }
    }
}
