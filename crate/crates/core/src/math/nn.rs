//! Dense feed-forward networks with analytic gradients.
//!
//! Parameters live in one flat buffer, layer by layer: the row-major
//! `(out x in)` weight matrix followed by the bias vector. [`Gradients`] uses
//! the same layout, so optimizers and finite-difference checks can treat both
//! as plain slices.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};

/// Nonlinearity applied to every hidden layer. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Parameter gradients, shape-congruent with the [`Mlp`] that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    sizes: Vec<usize>,
    values: Vec<f64>,
}

/// Per-layer activations of a batched forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    batch: usize,
    // layers[0] is the input batch; layers[l + 1] is the output of layer l.
    layers: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Network outputs, row-major `(batch x output_dim)`.
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace holds at least the input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn layer_offsets(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut total = 0;
    for w in sizes.windows(2) {
        offsets.push(total);
        total += w[1] * w[0] + w[1];
    }
    (offsets, total)
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least input and output widths, got {sizes:?}"
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArchitecture(format!(
            "layer widths must be positive, got {sizes:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// A network whose weights and biases are all zero.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(sizes)?;
        let (offsets, total) = layer_offsets(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            params: vec![0.0; total],
            offsets,
        })
    }

    /// He initialization: weights of a layer with fan-in `n` are drawn from
    /// `Normal(0, 2/n)`, biases start at zero.
    pub fn he_init<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        for layer in 0..net.num_layers() {
            let fan_in = net.sizes[layer];
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("std is positive and finite");
            for w in net.weight_mut(layer) {
                *w = normal.sample(rng);
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from a flat parameter buffer.
    pub fn from_params(sizes: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, activation)?;
        check_len("mlp parameters", net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_range(&self, layer: usize) -> (usize, usize, usize) {
        let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
        (self.offsets[layer], fan_in, fan_out)
    }

    /// Row-major `(out x in)` weight matrix of `layer`.
    pub fn weight(&self, layer: usize) -> &[f64] {
        let (off, n_in, n_out) = self.layer_range(layer);
        &self.params[off..off + n_in * n_out]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let (off, n_in, n_out) = self.layer_range(layer);
        &mut self.params[off..off + n_in * n_out]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (off, n_in, n_out) = self.layer_range(layer);
        let start = off + n_in * n_out;
        &self.params[start..start + n_out]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let (off, n_in, n_out) = self.layer_range(layer);
        let start = off + n_in * n_out;
        &mut self.params[start..start + n_out]
    }

    /// A zero gradient buffer shaped like this network.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            sizes: self.sizes.clone(),
            values: vec![0.0; self.params.len()],
        }
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("mlp input", self.input_dim(), input.len())?;
        self.forward_batch(input, 1)
    }

    /// Batched forward pass over row-major `(batch x input_dim)` inputs,
    /// recording every layer's activations.
    pub fn forward_trace(&self, inputs: &[f64], batch: usize) -> Result<ForwardTrace> {
        check_len("mlp batch input", batch * self.input_dim(), inputs.len())?;
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(inputs.to_vec());
        let last = self.num_layers() - 1;
        for layer in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let w = self.weight(layer);
            let b = self.bias(layer);
            let prev = &layers[layer];
            let mut out = Vec::with_capacity(batch * n_out);
            for _ in 0..batch {
                out.extend_from_slice(b);
            }
            // out (batch x n_out) += prev (batch x n_in) . W^T
            gemm(
                (batch, n_in, n_out),
                (prev, n_in, 1),
                (w, 1, n_in),
                (&mut out, n_out, 1),
                1.0,
            );
            if layer != last {
                for v in out.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            layers.push(out);
        }
        Ok(ForwardTrace { batch, layers })
    }

    /// Batched forward pass returning only the outputs.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut trace = self.forward_trace(inputs, batch)?;
        Ok(trace.layers.pop().expect("non-empty"))
    }

    /// Gradient of `output . output_gradient` with respect to every parameter.
    pub fn backward(&self, input: &[f64], output_gradient: &[f64]) -> Result<Gradients> {
        let trace = self.forward_trace(input, 1)?;
        let mut grads = self.zero_gradients();
        self.backward_trace(&trace, output_gradient, &mut grads)?;
        Ok(grads)
    }

    /// Accumulates into `grads` the gradient of
    /// `sum_i output_i . output_gradient_i` over the batch recorded in `trace`.
    pub fn backward_trace(
        &self,
        trace: &ForwardTrace,
        output_gradient: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        check_len(
            "mlp output gradient",
            trace.batch * self.output_dim(),
            output_gradient.len(),
        )?;
        check_len("gradient buffer", self.params.len(), grads.values.len())?;
        if grads.sizes != self.sizes {
            return Err(Error::InvalidArchitecture(format!(
                "gradient shaped for {:?}, network is {:?}",
                grads.sizes, self.sizes
            )));
        }
        let batch = trace.batch;
        let mut delta = output_gradient.to_vec();
        for layer in (0..self.num_layers()).rev() {
            let (off, n_in, n_out) = self.layer_range(layer);
            let input_acts = &trace.layers[layer];
            {
                let (gw, rest) = grads.values[off..].split_at_mut(n_in * n_out);
                let gb = &mut rest[..n_out];
                for d_row in delta.chunks_exact(n_out) {
                    for (g, &d) in gb.iter_mut().zip(d_row) {
                        *g += d;
                    }
                }
                // gW (n_out x n_in) += delta^T . inputs
                gemm(
                    (n_out, batch, n_in),
                    (&delta, 1, n_out),
                    (input_acts, n_in, 1),
                    (gw, n_in, 1),
                    1.0,
                );
            }
            if layer == 0 {
                break;
            }
            let w = self.weight(layer);
            let mut prev_delta = vec![0.0; batch * n_in];
            // prev_delta (batch x n_in) = delta . W
            gemm(
                (batch, n_out, n_in),
                (&delta, n_out, 1),
                (w, n_in, 1),
                (&mut prev_delta, n_in, 1),
                0.0,
            );
            for (p, &a) in prev_delta.iter_mut().zip(input_acts) {
                *p *= self.activation.derivative_from_output(a);
            }
            delta = prev_delta;
        }
        Ok(())
    }
}

/// `C (m x n) = A (m x k) . B (k x n) + beta * C` with explicit
/// `(slice, row stride, column stride)` layouts.
fn gemm(
    (m, k, n): (usize, usize, usize),
    (a, rsa, csa): (&[f64], usize, usize),
    (b, rsb, csb): (&[f64], usize, usize),
    (c, rsc, csc): (&mut [f64], usize, usize),
    beta: f64,
) {
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= last(m, k, rsa, csa));
    assert!(b.len() >= last(k, n, rsb, csb));
    assert!(c.len() >= last(m, n, rsc, csc));
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

impl Gradients {
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn layer_range(&self, layer: usize) -> (usize, usize, usize) {
        let offset: usize = self.sizes[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (offset, self.sizes[layer], self.sizes[layer + 1])
    }

    /// Row-major `(out x in)` weight gradient of `layer`.
    pub fn weight(&self, layer: usize) -> &[f64] {
        let (off, n_in, n_out) = self.layer_range(layer);
        &self.values[off..off + n_in * n_out]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (off, n_in, n_out) = self.layer_range(layer);
        let start = off + n_in * n_out;
        &self.values[start..start + n_out]
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.values {
            *g *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|g| g.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&g| g == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream_rng;

    #[test]
    fn rejects_bad_architectures() {
        assert!(matches!(
            Mlp::zeros(&[], Activation::Relu),
            Err(Error::InvalidArchitecture(_))
        ));
        assert!(matches!(
            Mlp::zeros(&[3], Activation::Relu),
            Err(Error::InvalidArchitecture(_))
        ));
        assert!(matches!(
            Mlp::zeros(&[3, 0, 2], Activation::Relu),
            Err(Error::InvalidArchitecture(_))
        ));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], Activation::Tanh).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let mut net = Mlp::zeros(&[3, 3], Activation::Relu).unwrap();
        for i in 0..3 {
            net.weight_mut(0)[i * 3 + i] = 1.0;
        }
        let x = [0.5, -1.5, 2.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = Mlp::zeros(&[2, 4, 1], Activation::Relu).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn he_init_fan_in_two_has_unit_std() {
        let mut rng = stream_rng(3, 0);
        let net = Mlp::he_init(&[2, 20000, 1], Activation::Relu, &mut rng).unwrap();
        let w = net.weight(0);
        let var = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
        assert!(net.bias(0).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn he_init_fan_in_fifty_matches_expected_std() {
        // 50 x 2000 = 1e5 draws from Normal(0, 2/50)
        let mut rng = stream_rng(11, 0);
        let net = Mlp::he_init(&[50, 2000], Activation::Relu, &mut rng).unwrap();
        let w = net.weight(0);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expected = (2.0f64 / 50.0).sqrt();
        assert!((std - expected).abs() / expected < 0.05, "std {std}");
    }

    #[test]
    fn he_init_is_deterministic() {
        let a = Mlp::he_init(&[4, 8, 2], Activation::Relu, &mut stream_rng(5, 1)).unwrap();
        let b = Mlp::he_init(&[4, 8, 2], Activation::Relu, &mut stream_rng(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (net.sizes()[l], net.sizes()[l + 1]);
            let w = net.weight(l);
            let b = net.bias(l);
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut s = b[o];
                for i in 0..n_in {
                    s += w[o * n_in + i] * h[i];
                }
                next[o] = if l + 1 < net.num_layers() {
                    match net.activation() {
                        Activation::Relu => s.max(0.0),
                        Activation::Tanh => s.tanh(),
                        Activation::Identity => s,
                    }
                } else {
                    s
                };
            }
            h = next;
        }
        h
    }

    #[test]
    fn forward_matches_naive_matrix_oracle() {
        let mut rng = stream_rng(17, 0);
        for act in [Activation::Relu, Activation::Tanh] {
            let mut net = Mlp::he_init(&[2, 16, 3], act, &mut rng).unwrap();
            for b in net.bias_mut(0) {
                *b = rng.random_range(-0.5..0.5);
            }
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = net.forward(&x).unwrap();
            let want = naive_forward(&net, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batched_forward_matches_single() {
        let mut rng = stream_rng(2, 0);
        let net = Mlp::he_init(&[3, 7, 7, 2], Activation::Tanh, &mut rng).unwrap();
        let xs: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batched = net.forward_batch(&xs, 5).unwrap();
        for (x, y) in xs.chunks(3).zip(batched.chunks(2)) {
            assert_eq!(net.forward(x).unwrap(), y.to_vec());
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = Mlp::he_init(&[3, 4, 2], Activation::Relu, &mut stream_rng(1, 0)).unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn single_linear_layer_weight_gradient_is_outer_product() {
        let net = Mlp::he_init(&[3, 2], Activation::Relu, &mut stream_rng(1, 0)).unwrap();
        let x = [1.0, -2.0, 0.5];
        let g = [3.0, -1.0];
        let grads = net.backward(&x, &g).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(grads.weight(0)[o * 3 + i], g[o] * x[i]);
            }
            assert_eq!(grads.bias(0)[o], g[o]);
        }
    }

    #[test]
    fn backward_rejects_bad_shapes() {
        let net = Mlp::zeros(&[3, 4, 2], Activation::Relu).unwrap();
        assert!(matches!(
            net.backward(&[0.0; 3], &[1.0]),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            net.backward(&[0.0; 2], &[1.0, 1.0]),
            Err(Error::Shape { .. })
        ));
    }

    fn finite_difference_check(sizes: &[usize], act: Activation, seed: u64) {
        let mut rng = stream_rng(seed, 0);
        let mut net = Mlp::he_init(sizes, act, &mut rng).unwrap();
        for p in net.params_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out_g: Vec<f64> = (0..*sizes.last().unwrap())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let analytic = net.backward(&x, &out_g).unwrap();
        let objective = |n: &Mlp| -> f64 {
            n.forward(&x)
                .unwrap()
                .iter()
                .zip(&out_g)
                .map(|(y, g)| y * g)
                .sum()
        };
        let h = 1e-5;
        for i in 0..net.num_params() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = objective(&net);
            net.params_mut()[i] = orig - h;
            let down = objective(&net);
            net.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.values()[i];
            let err = (a - numeric).abs();
            assert!(
                err <= 1e-7 || err / a.abs().max(numeric.abs()) <= 1e-4,
                "param {i}: analytic {a} numeric {numeric}"
            );
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        for seed in 0..5 {
            finite_difference_check(&[3, 8, 8, 2], Activation::Tanh, seed);
            finite_difference_check(&[3, 8, 8, 2], Activation::Relu, seed + 100);
            finite_difference_check(&[2, 6, 5, 4, 3], Activation::Tanh, seed + 200);
        }
    }

    #[test]
    fn batched_backward_sums_single_sample_gradients() {
        let mut rng = stream_rng(9, 0);
        let net = Mlp::he_init(&[2, 5, 3], Activation::Tanh, &mut rng).unwrap();
        let xs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gs: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let trace = net.forward_trace(&xs, 4).unwrap();
        let mut batched = net.zero_gradients();
        net.backward_trace(&trace, &gs, &mut batched).unwrap();
        let mut summed = vec![0.0; net.num_params()];
        for (x, g) in xs.chunks(2).zip(gs.chunks(3)) {
            let single = net.backward(x, g).unwrap();
            for (s, v) in summed.iter_mut().zip(single.values()) {
                *s += v;
            }
        }
        for (a, b) in batched.values().iter().zip(&summed) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
