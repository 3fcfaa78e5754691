use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "drone-marl-mlp";

/// Fully connected network with ReLU hidden layers and an affine output.
///
/// Parameters live in one flat vector, layer by layer: the weight matrix
/// (`out × in`, row-major) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Gradient of a scalar loss with respect to every parameter of an [`Mlp`].
pub type Gradient = Vec<f64>;

fn parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims[1..].contains(&0) {
            return Err(Error::InvalidParameter {
                name: "layer_dims",
                reason: format!("need at least two non-empty layers, got {dims:?}"),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; parameter_count(dims)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let mut offset = 0;
        for w in net.dims.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.gen_range(-limit..=limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_parts(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn copy_from(&mut self, other: &Mlp) {
        assert_eq!(
            self.dims, other.dims,
            "copy between differently shaped networks"
        );
        self.params.copy_from_slice(&other.params);
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let mut acts = Activations::default();
        self.forward_cached(input, &mut acts);
        Ok(acts.layers.pop().expect("output layer"))
    }

    /// Forward pass that keeps every layer's output for backprop. Hidden
    /// outputs are post-ReLU.
    pub(crate) fn forward_cached(&self, input: &[f64], acts: &mut Activations) {
        debug_assert_eq!(input.len(), self.input_dim());
        let n_layers = self.dims.len() - 1;
        acts.layers.resize_with(n_layers, Vec::new);
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;

            let (done, rest) = acts.layers.split_at_mut(l);
            let x: &[f64] = if l == 0 { input } else { &done[l - 1] };
            let out = &mut rest[0];
            out.clear();
            out.extend(
                weights
                    .chunks_exact(fan_in)
                    .zip(bias)
                    .map(|(row, b)| b + dot(row, x)),
            );
            if l + 1 < n_layers {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
    }

    /// Adds the gradient for one sample to `grad`, given the cached
    /// activations and `output_grad`, the loss gradient at the outputs.
    #[cfg(test)]
    pub(crate) fn backward(
        &self,
        input: &[f64],
        acts: &Activations,
        output_grad: &[f64],
        grad: &mut [f64],
        scratch: &mut Backprop,
    ) {
        let n_layers = self.dims.len() - 1;
        scratch.delta.clear();
        scratch.delta.extend_from_slice(output_grad);
        let mut end = self.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w_start = end - fan_out - fan_in * fan_out;
            let b_start = end - fan_out;
            let x: &[f64] = if l == 0 { input } else { &acts.layers[l - 1] };

            for (g, d) in grad[b_start..end].iter_mut().zip(&scratch.delta) {
                *g += d;
            }
            let weights = &self.params[w_start..b_start];
            let w_grad = &mut grad[w_start..b_start];
            if l > 0 {
                scratch.next.clear();
                scratch.next.resize(fan_in, 0.0);
            }
            for (j, &d) in scratch.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = j * fan_in..(j + 1) * fan_in;
                axpy(d, x, &mut w_grad[row.clone()]);
                if l > 0 {
                    axpy(d, &weights[row], &mut scratch.next);
                }
            }
            if l > 0 {
                // ReLU derivative: cached outputs are post-activation
                for (n, &a) in scratch.next.iter_mut().zip(x) {
                    if a <= 0.0 {
                        *n = 0.0;
                    }
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.next);
            }
            end = w_start;
        }
    }

    /// Batched forward pass over `batch` row-major inputs.
    pub(crate) fn forward_batch(&self, inputs: &[f64], batch: usize, acts: &mut Activations) {
        debug_assert_eq!(inputs.len(), batch * self.input_dim());
        let n_layers = self.dims.len() - 1;
        acts.layers.resize_with(n_layers, Vec::new);
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;

            let (done, rest) = acts.layers.split_at_mut(l);
            let x: &[f64] = if l == 0 { inputs } else { &done[l - 1] };
            let out = &mut rest[0];
            out.clear();
            for _ in 0..batch {
                out.extend_from_slice(bias);
            }
            // out (B×out) += x (B×in) · Wᵀ (in×out)
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    fan_in,
                    fan_out,
                    1.0,
                    x.as_ptr(),
                    fan_in as isize,
                    1,
                    weights.as_ptr(),
                    1,
                    fan_in as isize,
                    1.0,
                    out.as_mut_ptr(),
                    fan_out as isize,
                    1,
                );
            }
            if l + 1 < n_layers {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
    }

    /// Batched counterpart of [`Mlp::backward`]; `output_grad` is `B×out`.
    pub(crate) fn backward_batch(
        &self,
        inputs: &[f64],
        batch: usize,
        acts: &Activations,
        output_grad: &[f64],
        grad: &mut [f64],
        scratch: &mut Backprop,
    ) {
        let n_layers = self.dims.len() - 1;
        scratch.delta.clear();
        scratch.delta.extend_from_slice(output_grad);
        let mut end = self.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w_start = end - fan_out - fan_in * fan_out;
            let b_start = end - fan_out;
            let x: &[f64] = if l == 0 { inputs } else { &acts.layers[l - 1] };
            let delta = &scratch.delta;

            for row in delta.chunks_exact(fan_out) {
                for (g, d) in grad[b_start..end].iter_mut().zip(row) {
                    *g += d;
                }
            }
            // dW (out×in) += deltaᵀ (out×B) · x (B×in)
            unsafe {
                matrixmultiply::dgemm(
                    fan_out,
                    batch,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    fan_out as isize,
                    x.as_ptr(),
                    fan_in as isize,
                    1,
                    1.0,
                    grad[w_start..b_start].as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            if l > 0 {
                let weights = &self.params[w_start..b_start];
                scratch.next.clear();
                scratch.next.resize(batch * fan_in, 0.0);
                // dx (B×in) = delta (B×out) · W (out×in)
                unsafe {
                    matrixmultiply::dgemm(
                        batch,
                        fan_out,
                        fan_in,
                        1.0,
                        delta.as_ptr(),
                        fan_out as isize,
                        1,
                        weights.as_ptr(),
                        fan_in as isize,
                        1,
                        0.0,
                        scratch.next.as_mut_ptr(),
                        fan_in as isize,
                        1,
                    );
                }
                for (n, &a) in scratch.next.iter_mut().zip(x) {
                    if a <= 0.0 {
                        *n = 0.0;
                    }
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.next);
            }
            end = w_start;
        }
    }

    /// Writes the dims header line followed by the little-endian parameters.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        writeln!(w, "{CHECKPOINT_MAGIC} {}", dims.join(" "))?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing header".into()));
        }
        let dims = fields
            .map(|f| f.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("bad dimension: {e}")))?;
        let mut net = Self::zeros(&dims).map_err(|e| bad(e.to_string()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != net.params.len() * 8 {
            return Err(bad(format!(
                "expected {} parameter bytes, found {}",
                net.params.len() * 8,
                bytes.len()
            )));
        }
        for (p, chunk) in net.params.iter_mut().zip(bytes.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Ok(net)
    }
}

#[derive(Debug, Default, Clone)]
pub(crate) struct Activations {
    pub(crate) layers: Vec<Vec<f64>>,
}

impl Activations {
    pub(crate) fn output(&self) -> &[f64] {
        self.layers.last().expect("forward ran")
    }
}

#[derive(Debug, Default, Clone)]
pub(crate) struct Backprop {
    delta: Vec<f64>,
    next: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4 * 4;
    for (ca, cb) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += ca[i] * cb[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in a[chunks..].iter().zip(&b[chunks..]) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
