use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::rng::uniform_symmetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => libm::tanh(x),
        }
    }

    /// Derivative expressed through the pre-activation and the activation value.
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }
}

/// Shape of a fully connected network. Hidden layers use `activation`, the
/// output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            activation: Activation::Relu,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, input to output.
    pub fn layers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let dims: Vec<usize> = core::iter::once(self.input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(core::iter::once(self.output_dim))
            .collect();
        (0..dims.len() - 1).map(move |i| (dims[i], dims[i + 1]))
    }

    /// Offsets of each layer's weight block; the bias block follows the
    /// `fan_out × fan_in` row-major weights.
    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::new();
        let mut at = 0;
        for (fan_in, fan_out) in self.layers() {
            offsets.push(at);
            at += fan_in * fan_out + fan_out;
        }
        offsets
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|(i, o)| i * o + o).sum()
    }
}

/// Flat parameter storage for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Uniform in ±1/√fan_in for every weight and bias of the layer.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(spec.param_count());
        for (fan_in, fan_out) in spec.layers() {
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            for _ in 0..fan_in * fan_out + fan_out {
                values.push(uniform_symmetric(rng, bound));
            }
        }
        Self(values)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Values saved by the forward pass for the reverse pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input of every layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

fn affine(params: &[f64], offset: usize, fan_in: usize, fan_out: usize, x: &[f64]) -> Vec<f64> {
    let weights = &params[offset..offset + fan_in * fan_out];
    let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
    weights
        .chunks_exact(fan_in)
        .zip(bias)
        .map(|(row, b)| b + dot(row, x))
        .collect()
}

/// Four interleaved partial sums; the fixed order keeps results reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let split = a.len() - a.len() % 4;
    for (ca, cb) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        for k in 0..4 {
            s[k] += ca[k] * cb[k];
        }
    }
    for (k, (x, y)) in a[split..].iter().zip(&b[split..]).enumerate() {
        s[k] += x * y;
    }
    (s[0] + s[1]) + (s[2] + s[3])
}

fn check_shapes(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Result<()> {
    check_len("network parameters", spec.param_count(), params.len())?;
    check_len("network input", spec.input_dim, x.len())
}

/// Forward pass keeping the intermediate values needed by [`backward`].
pub fn forward_traced(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Result<MlpTrace> {
    check_shapes(spec, params, x)?;
    let offsets = spec.layer_offsets();
    let n_layers = offsets.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre = Vec::with_capacity(n_layers - 1);
    let mut current = x.to_vec();
    for (layer, ((fan_in, fan_out), offset)) in spec.layers().zip(offsets).enumerate() {
        let z = affine(params, offset, fan_in, fan_out, &current);
        inputs.push(current);
        if layer + 1 == n_layers {
            current = z;
        } else {
            current = z.iter().map(|&v| spec.activation.apply(v)).collect();
            pre.push(z);
        }
    }
    Ok(MlpTrace {
        inputs,
        pre,
        output: current,
    })
}

/// Pure forward map of the network.
pub fn mlp_forward(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_traced(spec, params, x)?.output)
}

/// Reverse pass: accumulates parameter gradients into `param_grads` and
/// returns the gradient with respect to the network input.
pub(crate) fn backward_into(
    spec: &MlpSpec,
    params: &[f64],
    trace: &MlpTrace,
    upstream: &[f64],
    param_grads: &mut [f64],
) -> Result<Vec<f64>> {
    check_len("upstream gradient", spec.output_dim, upstream.len())?;
    check_len("parameter gradient", spec.param_count(), param_grads.len())?;
    let offsets = spec.layer_offsets();
    let layers: Vec<(usize, usize)> = spec.layers().collect();
    let mut delta = upstream.to_vec();
    for layer in (0..layers.len()).rev() {
        let (fan_in, fan_out) = layers[layer];
        let offset = offsets[layer];
        let input = &trace.inputs[layer];
        let (w_grad, rest) = param_grads[offset..].split_at_mut(fan_in * fan_out);
        for (o, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                for (g, &xi) in w_grad[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            rest[o] += d;
        }
        let weights = &params[offset..offset + fan_in * fan_out];
        let mut next = vec![0.0; fan_in];
        for (o, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                for (n, &w) in next.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                    *n += d * w;
                }
            }
        }
        if layer > 0 {
            let pre = &trace.pre[layer - 1];
            for (i, n) in next.iter_mut().enumerate() {
                *n *= spec.activation.derivative(pre[i], input[i]);
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "backward pass",
                index: layer,
            });
        }
        delta = next;
    }
    Ok(delta)
}

/// Exact reverse-mode gradients of the forward map at `x` for the upstream
/// gradient `upstream_grad`. Returns `(param_grads, input_grad)`.
pub fn backward(
    spec: &MlpSpec,
    params: &[f64],
    x: &[f64],
    upstream_grad: &[f64],
) -> Result<(ParamVector, Vec<f64>)> {
    let trace = forward_traced(spec, params, x)?;
    let mut grads = ParamVector::zeros(spec.param_count());
    let input_grad = backward_into(spec, params, &trace, upstream_grad, &mut grads)?;
    Ok((grads, input_grad))
}

/// A network spec bundled with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl Mlp {
    pub fn new(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        check_len("network parameters", spec.param_count(), params.len())?;
        Ok(Self { spec, params })
    }

    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = ParamVector::init(&spec, rng);
        Ok(Self { spec, params })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.spec, &self.params, x)
    }

    pub fn forward_traced(&self, x: &[f64]) -> Result<MlpTrace> {
        forward_traced(&self.spec, &self.params, x)
    }

    pub fn backward_into(
        &self,
        trace: &MlpTrace,
        upstream: &[f64],
        param_grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        backward_into(&self.spec, &self.params, trace, upstream, param_grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximators::finite_diff_check;
    use crate::rng::{stream, Stream};

    fn random_net(spec: &MlpSpec, seed: u64) -> ParamVector {
        ParamVector::init(spec, &mut stream(seed, Stream::InitInner))
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let spec = MlpSpec::new(3, &[5, 4], 2);
        let params = ParamVector::zeros(spec.param_count());
        assert_eq!(mlp_forward(&spec, &params, &[0.3, -2.0, 7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let spec = MlpSpec::new(2, &[], 2);
        let params = ParamVector(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(mlp_forward(&spec, &params, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn small_tanh_net_matches_hand_evaluation() {
        let spec = MlpSpec::new(2, &[3], 1).with_activation(Activation::Tanh);
        let params = random_net(&spec, 3);
        let p = &params.0;
        let x = [0.7, -1.3];
        // straight-line evaluation: h_j = tanh(W1[j]·x + b1[j]); y = W2·h + b2
        let w1 = [[p[0], p[1]], [p[2], p[3]], [p[4], p[5]]];
        let b1 = [p[6], p[7], p[8]];
        let w2 = [p[9], p[10], p[11]];
        let b2 = p[12];
        let mut y = b2;
        for j in 0..3 {
            let h = (w1[j][0] * x[0] + w1[j][1] * x[1] + b1[j]).tanh();
            y += w2[j] * h;
        }
        let out = mlp_forward(&spec, &params, &x).unwrap();
        assert!((out[0] - y).abs() < 1e-14, "{} vs {}", out[0], y);
    }

    #[test]
    fn shape_errors() {
        let spec = MlpSpec::new(2, &[3], 1);
        let params = ParamVector::zeros(spec.param_count());
        assert!(matches!(
            mlp_forward(&spec, &params, &[1.0]),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            mlp_forward(&spec, &params[1..], &[1.0, 2.0]),
            Err(Error::Shape { .. })
        ));
        assert!(backward(&spec, &params, &[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let spec = MlpSpec::new(3, &[], 2);
        let params = random_net(&spec, 5);
        let x = [0.5, -1.0, 2.0];
        let up = [1.5, -0.25];
        let (grads, input_grad) = backward(&spec, &params, &x, &up).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(grads[o * 3 + i], up[o] * x[i]);
            }
            assert_eq!(grads[6 + o], up[o]);
        }
        for i in 0..3 {
            let expected = up[0] * params[i] + up[1] * params[3 + i];
            assert!((input_grad[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = MlpSpec::new(4, &[8, 8], 3);
        let params = random_net(&spec, 9);
        let (grads, input_grad) = backward(&spec, &params, &[1.0, 2.0, 3.0, 4.0], &[0.0; 3]).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
        assert!(input_grad.iter().all(|&g| g == 0.0));
    }

    fn check_shape(spec: MlpSpec, seed: u64) {
        let params = random_net(&spec, seed);
        let x: Vec<f64> = (0..spec.input_dim).map(|i| 0.3 * i as f64 - 0.4).collect();
        let up: Vec<f64> = (0..spec.output_dim).map(|i| 1.0 - 0.7 * i as f64).collect();
        let f = |p: &[f64]| {
            let out = mlp_forward(&spec, p, &x).unwrap();
            let value: f64 = out.iter().zip(&up).map(|(o, u)| o * u).sum();
            let (grads, _) = backward(&spec, p, &x, &up).unwrap();
            (value, grads.0)
        };
        let err = finite_diff_check(f, &params, 1e-6);
        assert!(err < 1e-6, "{spec:?}: {err}");
        // input gradient as well
        let g = |xv: &[f64]| {
            let out = mlp_forward(&spec, &params, xv).unwrap();
            let value: f64 = out.iter().zip(&up).map(|(o, u)| o * u).sum();
            let (_, input_grad) = backward(&spec, &params, xv, &up).unwrap();
            (value, input_grad)
        };
        assert!(finite_diff_check(g, &x, 1e-6) < 1e-6);
    }

    #[test]
    fn backward_matches_finite_differences() {
        check_shape(MlpSpec::new(3, &[7, 5], 2).with_activation(Activation::Tanh), 1);
        check_shape(MlpSpec::new(6, &[16, 16, 16], 4), 2);
        check_shape(MlpSpec::new(9, &[32, 32], 1), 3);
        check_shape(MlpSpec::new(2, &[3], 1).with_activation(Activation::Tanh), 4);
    }

    #[test]
    fn forward_and_backward_are_pure() {
        let spec = MlpSpec::new(4, &[8], 2);
        let params = random_net(&spec, 21);
        let x = [0.1, 0.2, -0.3, 0.4];
        let a = backward(&spec, &params, &x, &[1.0, -1.0]).unwrap();
        let b = backward(&spec, &params, &x, &[1.0, -1.0]).unwrap();
        assert_eq!(a.0 .0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.0 .0.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn init_is_bounded_by_fan_in() {
        let spec = MlpSpec::new(16, &[64], 4);
        let params = random_net(&spec, 8);
        let offsets = spec.layer_offsets();
        assert!(params[..offsets[1]].iter().all(|v| v.abs() <= 0.25));
        assert!(params[offsets[1]..].iter().all(|v| v.abs() <= 0.125));
    }
}
