//! Dense layers, layer normalization, and the composed stack with its
//! backward pass. Shapes are validated when a stack is built; the batched
//! forward/backward paths assume consistent shapes after that.

use rand::Rng;

use super::tensor::{matmul, matmul_transa, matmul_transb, Tensor2};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// Fully connected layer; weights are stored out x in, so row `j` holds the
/// input weights of output unit `j`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Layer normalization over the feature dimension.
#[derive(Debug, Clone)]
pub struct NormLayer {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
    pub epsilon: f64,
}

impl NormLayer {
    pub fn new(dim: usize) -> Self {
        Self { gain: vec![1.0; dim], shift: vec![0.0; dim], epsilon: 1e-5 }
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    Norm(NormLayer),
}

impl Layer {
    fn out_dim(&self, in_dim: usize) -> Result<usize, NnError> {
        match self {
            Layer::Dense(d) => {
                if d.in_dim() != in_dim {
                    return Err(NnError::ShapeMismatch {
                        expected: d.in_dim(),
                        got: in_dim,
                    });
                }
                if d.bias.len() != d.out_dim() {
                    return Err(NnError::ShapeMismatch {
                        expected: d.out_dim(),
                        got: d.bias.len(),
                    });
                }
                Ok(d.out_dim())
            }
            Layer::Norm(n) => {
                if n.gain.len() != in_dim || n.shift.len() != in_dim {
                    return Err(NnError::ShapeMismatch {
                        expected: in_dim,
                        got: n.gain.len(),
                    });
                }
                Ok(in_dim)
            }
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.data().len() + d.bias.len(),
            Layer::Norm(n) => n.gain.len() + n.shift.len(),
        }
    }
}

/// A stack of layers applied in order.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    in_dim: usize,
    out_dim: usize,
}

/// Per-layer cache retained by a forward pass so the matching backward pass
/// can run without recomputation.
pub struct MlpTape {
    input: Tensor2,
    /// Output of each layer, in order.
    outputs: Vec<Tensor2>,
    /// For each norm layer index: (xhat, inv_std per row).
    norm_caches: Vec<Option<(Tensor2, Vec<f64>)>>,
}

impl MlpTape {
    pub fn output(&self) -> &Tensor2 {
        self.outputs.last().unwrap_or(&self.input)
    }
}

/// Gradient accumulator shaped like an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone)]
pub enum LayerGrads {
    Dense { weights: Tensor2, bias: Vec<f64> },
    Norm { gain: Vec<f64>, shift: Vec<f64> },
}

impl MlpGrads {
    pub fn zero(&mut self) {
        for g in &mut self.layers {
            match g {
                LayerGrads::Dense { weights, bias } => {
                    weights.fill(0.0);
                    bias.fill(0.0);
                }
                LayerGrads::Norm { gain, shift } => {
                    gain.fill(0.0);
                    shift.fill(0.0);
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (
                    LayerGrads::Dense { weights: wa, bias: ba },
                    LayerGrads::Dense { weights: wb, bias: bb },
                ) => {
                    wa.add_assign(wb);
                    for (x, y) in ba.iter_mut().zip(bb) {
                        *x += y;
                    }
                }
                (
                    LayerGrads::Norm { gain: ga, shift: sa },
                    LayerGrads::Norm { gain: gb, shift: sb },
                ) => {
                    for (x, y) in ga.iter_mut().zip(gb) {
                        *x += y;
                    }
                    for (x, y) in sa.iter_mut().zip(sb) {
                        *x += y;
                    }
                }
                _ => panic!("mismatched gradient structure"),
            }
        }
    }
}

impl Mlp {
    /// Build a stack, validating that consecutive layer shapes agree.
    pub fn new(in_dim: usize, layers: Vec<Layer>) -> Result<Self, NnError> {
        let mut dim = in_dim;
        for layer in &layers {
            dim = layer.out_dim(dim)?;
        }
        Ok(Self { layers, in_dim, out_dim: dim })
    }

    /// Dense layers with the given widths and hidden activation; output
    /// layer is linear. `dims = [in, h1, ..., out]`.
    pub fn dense_stack(dims: &[usize], hidden: Activation, rng: &mut impl Rng) -> Self {
        let n_layers = dims.len() - 1;
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            let act = if i + 1 == n_layers { Activation::Identity } else { hidden };
            layers.push(Layer::Dense(init_dense(w[0], w[1], act, rng)));
        }
        Mlp::new(dims[0], layers).expect("consecutive dims agree by construction")
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Total scalar parameter count.
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Multiply the last dense layer's weights and bias by `factor`
    /// (small-scale head initialization).
    pub fn scale_last_dense(&mut self, factor: f64) {
        if let Some(Layer::Dense(d)) = self
            .layers
            .iter_mut()
            .rev()
            .find(|l| matches!(l, Layer::Dense(_)))
        {
            d.weights.scale(factor);
            for b in &mut d.bias {
                *b *= factor;
            }
        }
    }

    pub fn zero_grads(&self) -> MlpGrads {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => LayerGrads::Dense {
                    weights: Tensor2::zeros(d.out_dim(), d.in_dim()),
                    bias: vec![0.0; d.out_dim()],
                },
                Layer::Norm(n) => LayerGrads::Norm {
                    gain: vec![0.0; n.gain.len()],
                    shift: vec![0.0; n.shift.len()],
                },
            })
            .collect();
        MlpGrads { layers }
    }

    /// Batched forward pass; rows are independent samples.
    pub fn forward(&self, input: &Tensor2) -> MlpTape {
        debug_assert_eq!(input.cols(), self.in_dim);
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut norm_caches = Vec::with_capacity(self.layers.len());
        let mut x = input;
        for layer in &self.layers {
            let (y, cache) = match layer {
                Layer::Dense(d) => {
                    let mut y = matmul_transb(x, &d.weights);
                    for r in 0..y.rows() {
                        let row = y.row_mut(r);
                        for (v, b) in row.iter_mut().zip(&d.bias) {
                            *v += b;
                        }
                        if d.activation == Activation::Relu {
                            for v in row.iter_mut() {
                                if *v < 0.0 {
                                    *v = 0.0;
                                }
                            }
                        }
                    }
                    (y, None)
                }
                Layer::Norm(n) => {
                    let mut xhat = Tensor2::zeros(x.rows(), x.cols());
                    let mut y = Tensor2::zeros(x.rows(), x.cols());
                    let mut inv_stds = vec![0.0; x.rows()];
                    let dim = x.cols() as f64;
                    for r in 0..x.rows() {
                        let src = x.row(r);
                        let mean = src.iter().sum::<f64>() / dim;
                        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim;
                        let inv_std = 1.0 / (var + n.epsilon).sqrt();
                        inv_stds[r] = inv_std;
                        let xh = xhat.row_mut(r);
                        let yr = y.row_mut(r);
                        for c in 0..src.len() {
                            xh[c] = (src[c] - mean) * inv_std;
                            yr[c] = n.gain[c] * xh[c] + n.shift[c];
                        }
                    }
                    (y, Some((xhat, inv_stds)))
                }
            };
            outputs.push(y);
            norm_caches.push(cache);
            x = outputs.last().unwrap();
        }
        MlpTape { input: input.clone(), outputs, norm_caches }
    }

    /// Forward pass without retaining intermediates.
    pub fn forward_nograd(&self, input: &Tensor2) -> Tensor2 {
        // Tape construction is cheap relative to the GEMMs; reuse it.
        let mut tape = self.forward(input);
        tape.outputs.pop().unwrap_or(tape.input)
    }

    /// Backward pass. Accumulates parameter gradients into `grads` (when
    /// provided) and returns the gradient with respect to the input.
    pub fn backward(&self, tape: &MlpTape, dy: &Tensor2, mut grads: Option<&mut MlpGrads>) -> Tensor2 {
        debug_assert_eq!(dy.cols(), self.out_dim);
        let mut grad = dy.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = if idx == 0 { &tape.input } else { &tape.outputs[idx - 1] };
            let output = &tape.outputs[idx];
            grad = match layer {
                Layer::Dense(d) => {
                    let mut g = grad;
                    if d.activation == Activation::Relu {
                        for r in 0..g.rows() {
                            let out_row = output.row(r);
                            for (gv, ov) in g.row_mut(r).iter_mut().zip(out_row) {
                                if *ov <= 0.0 {
                                    *gv = 0.0;
                                }
                            }
                        }
                    }
                    if let Some(gr) = grads.as_deref_mut() {
                        if let LayerGrads::Dense { weights, bias } = &mut gr.layers[idx] {
                            weights.add_assign(&matmul_transa(&g, input));
                            for r in 0..g.rows() {
                                for (bv, gv) in bias.iter_mut().zip(g.row(r)) {
                                    *bv += gv;
                                }
                            }
                        }
                    }
                    matmul(&g, &d.weights)
                }
                Layer::Norm(n) => {
                    let (xhat, inv_stds) = tape.norm_caches[idx]
                        .as_ref()
                        .expect("norm cache present for norm layer");
                    let dim = n.gain.len() as f64;
                    let mut dx = Tensor2::zeros(grad.rows(), grad.cols());
                    for r in 0..grad.rows() {
                        let dyr = grad.row(r);
                        let xh = xhat.row(r);
                        // d xhat
                        let dxh: Vec<f64> =
                            dyr.iter().zip(&n.gain).map(|(g, gn)| g * gn).collect();
                        let mean_dxh = dxh.iter().sum::<f64>() / dim;
                        let mean_dxh_xh =
                            dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / dim;
                        let dst = dx.row_mut(r);
                        for c in 0..dst.len() {
                            dst[c] = inv_stds[r] * (dxh[c] - mean_dxh - xh[c] * mean_dxh_xh);
                        }
                    }
                    if let Some(gr) = grads.as_deref_mut() {
                        if let LayerGrads::Norm { gain, shift } = &mut gr.layers[idx] {
                            for r in 0..grad.rows() {
                                let dyr = grad.row(r);
                                let xh = xhat.row(r);
                                for c in 0..dyr.len() {
                                    gain[c] += dyr[c] * xh[c];
                                    shift[c] += dyr[c];
                                }
                            }
                        }
                    }
                    dx
                }
            };
        }
        grad
    }

    /// Backward pass that only propagates input gradients (parameters held
    /// fixed), used when a frozen network sits inside another loss.
    pub fn backward_input(&self, tape: &MlpTape, dy: &Tensor2) -> Tensor2 {
        self.backward(tape, dy, None)
    }
}

fn init_dense(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> DenseLayer {
    let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
    let mut weights = Tensor2::zeros(out_dim, in_dim);
    for v in weights.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    let bias = (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
    DenseLayer { weights, bias, activation }
}

/// Linear layer followed by layer normalization, the helper's q/k/v shape.
pub fn linear_norm(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Mlp {
    let dense = init_dense(in_dim, out_dim, Activation::Identity, rng);
    Mlp::new(in_dim, vec![Layer::Dense(dense), Layer::Norm(NormLayer::new(out_dim))])
        .expect("shapes agree by construction")
}

/// Single dense layer stack.
pub fn single_dense(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Mlp {
    let dense = init_dense(in_dim, out_dim, activation, rng);
    Mlp::new(in_dim, vec![Layer::Dense(dense)]).expect("shapes agree by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_dense_is_identity() {
        let mut w = Tensor2::zeros(3, 3);
        for i in 0..3 {
            w.set(i, i, 1.0);
        }
        let mlp = Mlp::new(
            3,
            vec![Layer::Dense(DenseLayer {
                weights: w,
                bias: vec![0.0; 3],
                activation: Activation::Identity,
            })],
        )
        .unwrap();
        let x = Tensor2::from_row(&[1.5, -2.0, 0.25]);
        let y = mlp.forward_nograd(&x);
        assert_eq!(y.row(0), &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut w = Tensor2::zeros(2, 2);
        w.set(0, 0, 1.0);
        w.set(1, 1, 1.0);
        let mlp = Mlp::new(
            2,
            vec![Layer::Dense(DenseLayer {
                weights: w,
                bias: vec![0.0; 2],
                activation: Activation::Relu,
            })],
        )
        .unwrap();
        let y = mlp.forward_nograd(&Tensor2::from_row(&[-1.0, 2.0]));
        assert_eq!(y.row(0), &[0.0, 2.0]);
    }

    #[test]
    fn norm_layer_zeroes_constant_vector() {
        let mlp = Mlp::new(4, vec![Layer::Norm(NormLayer::new(4))]).unwrap();
        let y = mlp.forward_nograd(&Tensor2::from_row(&[3.0, 3.0, 3.0, 3.0]));
        for v in y.row(0) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected_at_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = Mlp::new(
            5,
            vec![Layer::Dense(init_dense(4, 3, Activation::Identity, &mut rng))],
        );
        assert!(matches!(bad, Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn linear_backward_is_wt_times_grad() {
        let mut w = Tensor2::zeros(2, 3);
        // y0 = x0 + 2 x1, y1 = 3 x2
        w.set(0, 0, 1.0);
        w.set(0, 1, 2.0);
        w.set(1, 2, 3.0);
        let mlp = Mlp::new(
            3,
            vec![Layer::Dense(DenseLayer {
                weights: w,
                bias: vec![0.0; 2],
                activation: Activation::Identity,
            })],
        )
        .unwrap();
        let tape = mlp.forward(&Tensor2::from_row(&[0.5, -1.0, 2.0]));
        let dx = mlp.backward(&tape, &Tensor2::from_row(&[1.0, 1.0]), None);
        assert_eq!(dx.row(0), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn relu_gradient_zero_at_negative_preactivation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(
            1,
            vec![Layer::Dense(DenseLayer {
                weights: Tensor2::from_vec(1, 1, vec![1.0]),
                bias: vec![-2.0],
                activation: Activation::Relu,
            })],
        )
        .unwrap();
        let _ = &mut rng;
        let tape = mlp.forward(&Tensor2::from_row(&[1.0])); // preact = -1
        let dx = mlp.backward(&tape, &Tensor2::from_row(&[1.0]), None);
        assert_eq!(dx.row(0), &[0.0]);
    }

    // Full-stack finite-difference check lives in tests/gradients.rs with
    // the rest of the oracle suite.

    #[test]
    fn dense_stack_dims_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::dense_stack(&[63, 63, 63], Activation::Relu, &mut rng);
        assert_eq!(mlp.in_dim(), 63);
        assert_eq!(mlp.out_dim(), 63);
        assert_eq!(mlp.parameter_count(), 2 * (63 * 63 + 63));
    }

    #[test]
    fn dense_63x21_param_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = single_dense(63, 21, Activation::Relu, &mut rng);
        assert_eq!(mlp.parameter_count(), 63 * 21 + 21);
    }
}
