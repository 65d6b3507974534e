//! Adam with bias correction over an [`Mlp`]'s parameters.

use super::layers::{Layer, LayerGrads, Mlp, MlpGrads};

#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates skipped because a gradient was non-finite.
    pub skipped: u64,
}

impl AdamState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            skipped: 0,
        }
    }

    pub fn for_model(model: &Mlp, learning_rate: f64) -> Self {
        Self::new(model.parameter_count(), learning_rate)
    }

    /// Apply one Adam update. If any gradient entry is non-finite the whole
    /// update is skipped and the diagnostics counter incremented.
    pub fn step(&mut self, model: &mut Mlp, grads: &MlpGrads) {
        let mut finite = true;
        visit_grads(grads, &mut |g| {
            if !g.is_finite() {
                finite = false;
            }
        });
        if !finite {
            self.skipped += 1;
            return;
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let lr = self.learning_rate;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut idx = 0usize;
        let first = &mut self.first;
        let second = &mut self.second;
        zip_params(model, grads, &mut |p, g| {
            let m = b1 * first[idx] + (1.0 - b1) * g;
            let v = b2 * second[idx] + (1.0 - b2) * g * g;
            first[idx] = m;
            second[idx] = v;
            let mhat = m / bc1;
            let vhat = v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
            idx += 1;
        });
        debug_assert_eq!(idx, first.len());
    }
}

fn visit_grads(grads: &MlpGrads, f: &mut impl FnMut(f64)) {
    for layer in &grads.layers {
        match layer {
            LayerGrads::Dense { weights, bias } => {
                for &g in weights.data() {
                    f(g);
                }
                for &g in bias {
                    f(g);
                }
            }
            LayerGrads::Norm { gain, shift } => {
                for &g in gain {
                    f(g);
                }
                for &g in shift {
                    f(g);
                }
            }
        }
    }
}

/// Walk model parameters and their gradients in a fixed structural order.
fn zip_params(model: &mut Mlp, grads: &MlpGrads, f: &mut impl FnMut(&mut f64, f64)) {
    for (layer, grad) in model.layers_mut().iter_mut().zip(&grads.layers) {
        match (layer, grad) {
            (Layer::Dense(d), LayerGrads::Dense { weights, bias }) => {
                for (p, g) in d.weights.data_mut().iter_mut().zip(weights.data()) {
                    f(p, *g);
                }
                for (p, g) in d.bias.iter_mut().zip(bias) {
                    f(p, *g);
                }
            }
            (Layer::Norm(n), LayerGrads::Norm { gain, shift }) => {
                for (p, g) in n.gain.iter_mut().zip(gain) {
                    f(p, *g);
                }
                for (p, g) in n.shift.iter_mut().zip(shift) {
                    f(p, *g);
                }
            }
            _ => panic!("gradient structure does not match model"),
        }
    }
}

/// `target = tau * main + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut Mlp, main: &Mlp, tau: f64) {
    for (t_layer, m_layer) in target.layers_mut().iter_mut().zip(main.layers()) {
        match (t_layer, m_layer) {
            (Layer::Dense(t), Layer::Dense(m)) => {
                for (tp, mp) in t.weights.data_mut().iter_mut().zip(m.weights.data()) {
                    *tp = tau * mp + (1.0 - tau) * *tp;
                }
                for (tp, mp) in t.bias.iter_mut().zip(&m.bias) {
                    *tp = tau * mp + (1.0 - tau) * *tp;
                }
            }
            (Layer::Norm(t), Layer::Norm(m)) => {
                for (tp, mp) in t.gain.iter_mut().zip(&m.gain) {
                    *tp = tau * mp + (1.0 - tau) * *tp;
                }
                for (tp, mp) in t.shift.iter_mut().zip(&m.shift) {
                    *tp = tau * mp + (1.0 - tau) * *tp;
                }
            }
            _ => panic!("target structure does not match main"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::dense_stack(&[2, 3, 1], Activation::Relu, &mut rng)
    }

    fn snapshot(m: &Mlp) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in m.layers() {
            if let Layer::Dense(d) = layer {
                out.extend_from_slice(d.weights.data());
                out.extend_from_slice(&d.bias);
            }
        }
        out
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut model = tiny_model(0);
        let before = snapshot(&model);
        let grads = model.zero_grads();
        let mut adam = AdamState::for_model(&model, 1e-3);
        adam.step(&mut model, &grads);
        assert_eq!(before, snapshot(&model));
    }

    #[test]
    fn constant_gradient_step_approaches_lr_sign() {
        // With g constant, bias-corrected Adam step -> lr * sign(g).
        let mut model = tiny_model(1);
        let mut grads = model.zero_grads();
        if let LayerGrads::Dense { weights, .. } = &mut grads.layers[0] {
            weights.data_mut().fill(0.5);
        }
        let mut adam = AdamState::for_model(&model, 1e-3);
        let mut prev = snapshot(&model);
        let mut last_delta = 0.0;
        for _ in 0..200 {
            adam.step(&mut model, &grads);
            let cur = snapshot(&model);
            last_delta = prev[0] - cur[0];
            prev = cur;
        }
        assert!(
            (last_delta - 1e-3).abs() < 1e-5,
            "per-step delta {last_delta} should approach lr"
        );
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let mut model = tiny_model(2);
        let before = snapshot(&model);
        let mut grads = model.zero_grads();
        if let LayerGrads::Dense { bias, .. } = &mut grads.layers[0] {
            bias[0] = f64::NAN;
        }
        let mut adam = AdamState::for_model(&model, 1e-3);
        adam.step(&mut model, &grads);
        assert_eq!(before, snapshot(&model));
        assert_eq!(adam.skipped, 1);
    }

    #[test]
    fn soft_update_is_exact_blend() {
        let main = tiny_model(3);
        let mut target = tiny_model(4);
        let t0 = snapshot(&target);
        let m0 = snapshot(&main);
        soft_update(&mut target, &main, 0.25);
        let t1 = snapshot(&target);
        for i in 0..t1.len() {
            assert_eq!(t1[i], 0.25 * m0[i] + 0.75 * t0[i]);
        }
    }
}
