//! Dense multilayer perceptrons over a flat parameter vector.
//!
//! Layout of a [`ParamVector`]: layers in order; within a layer the weight
//! matrix in row-major `(out × in)` order, followed by the `out` biases.

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// One dense layer's slice of a parameter vector.
#[derive(Debug, Clone, Copy)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the weight block; biases follow at `offset + fan_in * fan_out`.
    offset: usize,
}

impl LayerShape {
    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }
    fn end(&self) -> usize {
        self.bias_offset() + self.fan_out
    }
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden_activation: Activation) -> Result<Self> {
        let spec = MlpSpec {
            layer_sizes,
            hidden_activation,
            output_activation: Activation::Identity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least input and output sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layers(&self) -> impl Iterator<Item = LayerShape> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let shape = LayerShape {
                fan_in: w[0],
                fan_out: w[1],
                offset,
            };
            offset = shape.end();
            shape
        })
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Range of the weight block of `layer` inside the flat vector.
    pub fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let l = self.layers().nth(layer).expect("layer index in range");
        l.offset..l.bias_offset()
    }

    /// Range of the bias block of `layer` inside the flat vector.
    pub fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let l = self.layers().nth(layer).expect("layer index in range");
        l.bias_offset()..l.end()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = rng_from_seed(seed);
        let mut values = vec![0.0; self.param_count()];
        for l in self.layers() {
            let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            for w in &mut values[l.offset..l.bias_offset()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        ParamVector(values)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
        let mut scratch = ForwardScratch::default();
        Ok(self.forward_into(params.as_slice(), input, &mut scratch)?.to_vec())
    }

    /// Forward pass reusing `scratch`; the returned slice borrows from it.
    pub fn forward_into<'s>(
        &self,
        params: &[f64],
        input: &[f64],
        scratch: &'s mut ForwardScratch,
    ) -> Result<&'s [f64]> {
        self.check_params(params)?;
        self.check_input(input)?;
        let ForwardScratch { a, b } = scratch;
        a.clear();
        a.extend_from_slice(input);
        for (i, l) in self.layers().enumerate() {
            let act = self.activation(i);
            dense(params, &l, a, b);
            b.iter_mut().for_each(|v| *v = act.apply(*v));
            std::mem::swap(a, b);
        }
        Ok(&scratch.a[..])
    }

    /// All layer activations, input first.
    fn activations(&self, params: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layer_sizes.len());
        acts.push(input.to_vec());
        for (i, l) in self.layers().enumerate() {
            let act = self.activation(i);
            let mut out = Vec::new();
            dense(params, &l, acts.last().expect("nonempty"), &mut out);
            out.iter_mut().for_each(|v| *v = act.apply(*v));
            acts.push(out);
        }
        acts
    }

    /// Gradient of `output · output_grad` with respect to the parameters.
    pub fn backward(
        &self,
        params: &ParamVector,
        input: &[f64],
        output_grad: &[f64],
    ) -> Result<GradVector> {
        let mut grad = vec![0.0; self.param_count()];
        self.backward_accumulate(params.as_slice(), input, output_grad, &mut grad)?;
        Ok(GradVector(grad))
    }

    /// Like [`MlpSpec::backward`] but adds into an existing gradient buffer.
    pub fn backward_accumulate(
        &self,
        params: &[f64],
        input: &[f64],
        output_grad: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_params(params)?;
        self.check_input(input)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "output gradient",
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        if grad.len() != params.len() {
            return Err(Error::DimensionMismatch {
                what: "gradient buffer",
                expected: params.len(),
                got: grad.len(),
            });
        }
        let acts = self.activations(params, input);
        let layers: Vec<LayerShape> = self.layers().collect();
        let mut delta = output_grad.to_vec();
        for (i, l) in layers.iter().enumerate().rev() {
            let act = self.activation(i);
            let out = &acts[i + 1];
            for (d, &y) in delta.iter_mut().zip(out) {
                *d *= act.derivative_from_output(y);
            }
            let x = &acts[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = l.offset + o * l.fan_in;
                for (g, &xi) in grad[row..row + l.fan_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
                grad[l.bias_offset() + o] += d;
            }
            if i > 0 {
                let mut prev = vec![0.0; l.fan_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &params[l.offset + o * l.fan_in..l.offset + (o + 1) * l.fan_in];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }
}

/// `out = W x + b` for one layer.
#[inline]
fn dense(params: &[f64], l: &LayerShape, x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let w = &params[l.offset..l.bias_offset()];
    let b = &params[l.bias_offset()..l.end()];
    out.extend(
        w.chunks_exact(l.fan_in)
            .zip(b)
            .map(|(row, &bias)| bias + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()),
    );
}

/// Reusable activation buffers for [`MlpSpec::forward_into`].
#[derive(Debug, Clone, Default)]
pub struct ForwardScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

pub fn param_count(spec: &MlpSpec) -> usize {
    spec.param_count()
}

/// Flat network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

/// Gradient with the same layout as its [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl GradVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

const MAGIC: &[u8; 4] = b"R2PV";

/// Writes `params` as: magic `R2PV`, `u32` number of layer sizes, the sizes
/// as `u32`, `u64` value count, then the values as `f64`. All little-endian.
pub fn write_params<W: Write>(mut w: W, spec: &MlpSpec, params: &ParamVector) -> Result<()> {
    spec.check_params(params.as_slice())?;
    w.write_all(MAGIC)?;
    w.write_all(&(spec.layer_sizes.len() as u32).to_le_bytes())?;
    for &s in &spec.layer_sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for v in params.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads the format produced by [`write_params`]. Returns the layer sizes and values.
pub fn read_params<R: Read>(mut r: R) -> Result<(Vec<usize>, ParamVector)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n_sizes = u32::from_le_bytes(u32buf) as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(Error::Format(format!("implausible layer count {n_sizes}")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        r.read_exact(&mut u32buf)?;
        sizes.push(u32::from_le_bytes(u32buf) as usize);
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf) as usize;
    let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if count != expected {
        return Err(Error::Format(format!(
            "value count {count} does not match layer sizes {sizes:?} ({expected})"
        )));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut u64buf)?;
        values.push(f64::from_le_bytes(u64buf));
    }
    Ok((sizes, ParamVector(values)))
}

#[derive(Serialize)]
struct ParamsJson<'a> {
    spec: &'a MlpSpec,
    values: &'a [f64],
}

/// Human-readable export for debugging.
pub fn params_to_json(spec: &MlpSpec, params: &ParamVector) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ParamsJson {
        spec,
        values: params.as_slice(),
    })?)
}
