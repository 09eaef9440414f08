//! Dense feed-forward network with tanh hidden layers, explicit reverse-mode
//! gradients and an Adam optimizer.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite parameter after update")]
    NonFinite,
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Multilayer perceptron; every layer but the last is followed by tanh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `activations[0]` is the input, the last entry the network output.
    activations: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let k = (6.0 / (inputs + outputs) as f64).sqrt();
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs).map(|_| rng.gen_range(-k..=k)).collect(),
                    biases: vec![0.0; outputs],
                }
            })
            .collect();
        DenseNet { layers }
    }

    /// `input`, `hidden...`, `output`.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, seed: u64) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(&sizes, seed)
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Multiplies the last layer's weights, e.g. to start a policy head near uniform.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let last = self.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w *= factor);
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache, NnError> {
        let mut cache = ForwardCache::default();
        self.forward_into(input, &mut cache)?;
        Ok(cache)
    }

    /// Forward pass reusing the buffers in `cache`.
    pub fn forward_into(&self, input: &[f64], cache: &mut ForwardCache) -> Result<(), NnError> {
        if input.len() != self.input_size() {
            return Err(NnError::Shape {
                expected: self.input_size(),
                got: input.len(),
            });
        }
        let n = self.layers.len();
        cache.activations.resize_with(n + 1, Vec::new);
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = cache.activations.split_at_mut(i + 1);
            let x = &prev[i];
            let out = &mut rest[0];
            out.clear();
            out.extend(
                layer
                    .weights
                    .chunks_exact(layer.inputs)
                    .zip(&layer.biases)
                    .map(|(row, b)| dot(row, x) + b),
            );
            if i + 1 < n {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        Ok(())
    }

    /// Accumulates parameter gradients of `Σ grad_output · output` into `grads`.
    pub fn backward(&self, cache: &mut ForwardCache, grad_output: &[f64], grads: &mut Gradients) -> Result<(), NnError> {
        if grad_output.len() != self.output_size() {
            return Err(NnError::Shape {
                expected: self.output_size(),
                got: grad_output.len(),
            });
        }
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(NnError::Shape {
                expected: self.layers.len() + 1,
                got: cache.activations.len(),
            });
        }
        let ForwardCache {
            activations,
            delta,
            delta_prev,
        } = cache;
        delta.clear();
        delta.extend_from_slice(grad_output);
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &activations[i];
            let g = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, x, &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                }
                g.biases[o] += d;
            }
            if i == 0 {
                break;
            }
            delta_prev.clear();
            delta_prev.resize(layer.inputs, 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &layer.weights[o * layer.inputs..(o + 1) * layer.inputs], delta_prev);
                }
            }
            // tanh'(z) = 1 − tanh(z)²
            for (dp, &a) in delta_prev.iter_mut().zip(x.iter()) {
                *dp *= 1.0 - a * a;
            }
            std::mem::swap(delta, delta_prev);
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            format_version: u32,
            sizes: Vec<usize>,
            layers: &'a [Layer],
        }
        serde_json::to_string(&File {
            format_version: CHECKPOINT_FORMAT_VERSION,
            sizes: self.sizes(),
            layers: &self.layers,
        })
        .expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        #[derive(Deserialize)]
        struct File {
            format_version: u32,
            sizes: Vec<usize>,
            layers: Vec<Layer>,
        }
        let file: File = serde_json::from_str(text).map_err(|e| NnError::Format(e.to_string()))?;
        if file.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(NnError::Format(format!("unsupported format_version {}", file.format_version)));
        }
        let net = DenseNet { layers: file.layers };
        net.check_shapes()?;
        if net.sizes() != file.sizes {
            return Err(NnError::Format("declared sizes do not match layers".into()));
        }
        Ok(net)
    }

    pub(crate) fn check_shapes(&self) -> Result<(), NnError> {
        if self.layers.is_empty() {
            return Err(NnError::Format("network has no layers".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(NnError::Format("layer chain is inconsistent".into()));
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(NnError::Format("parameter array has the wrong length".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Parameter-shaped gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn clear(&mut self) {
        self.values_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|g| *g *= factor);
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    pub steps: u64,
}

impl AdamState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        let n = net.param_count();
        AdamState {
            config,
            first: vec![0.0; n],
            second: vec![0.0; n],
            steps: 0,
        }
    }

    /// One bias-corrected Adam update. Fails if any parameter becomes non-finite.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<(), NnError> {
        let n = net.param_count();
        if self.first.len() != n {
            return Err(NnError::Shape {
                expected: self.first.len(),
                got: n,
            });
        }
        self.steps += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads.values())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        if net.is_finite() {
            Ok(())
        } else {
            Err(NnError::NonFinite)
        }
    }
}

/// Compares analytic gradients of `loss(net(input))` with central finite
/// differences of step `h`, returning the largest relative error
/// `|a − n| / max(|a|, |n|, 1e-6)`.
///
/// `loss` returns the scalar loss and its gradient with respect to the output.
pub fn gradient_check<F>(net: &DenseNet, input: &[f64], loss: F, h: f64) -> Result<f64, NnError>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut cache = net.forward(input)?;
    let (_, grad_out) = loss(cache.output());
    let mut grads = net.zero_gradients();
    net.backward(&mut cache, &grad_out, &mut grads)?;
    let analytic: Vec<f64> = grads.values().copied().collect();

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (idx, &a) in analytic.iter().enumerate() {
        let original = *probe.params_mut().nth(idx).unwrap();
        *probe.params_mut().nth(idx).unwrap() = original + h;
        let plus = loss(probe.forward(input)?.output()).0;
        *probe.params_mut().nth(idx).unwrap() = original - h;
        let minus = loss(probe.forward(input)?.output()).0;
        *probe.params_mut().nth(idx).unwrap() = original;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// `½‖y − target‖²` and its gradient.
pub fn squared_error(target: &[f64]) -> impl Fn(&[f64]) -> (f64, Vec<f64>) + '_ {
    move |y: &[f64]| {
        let g: Vec<f64> = y.iter().zip(target).map(|(a, b)| a - b).collect();
        (0.5 * g.iter().map(|d| d * d).sum::<f64>(), g)
    }
}
