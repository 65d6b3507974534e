//! Tanh-squashed Gaussian policy head: sampling, log-probability with the
//! squash correction, and the reparameterized backward pass.

use rand::Rng;
use rand_distr::StandardNormal;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Result of sampling the squashed Gaussian; retains everything the
/// backward pass needs.
#[derive(Debug, Clone)]
pub struct GaussianSample {
    /// Action scaled to `[-scale, scale]` per component.
    pub action: Vec<f64>,
    /// Log-density of `action` under the squashed, scaled distribution.
    pub log_prob: f64,
    /// tanh(pre_tanh), kept for the backward pass.
    pub tanh: Vec<f64>,
    /// Standard normal draws used by the reparameterization.
    pub noise: Vec<f64>,
    /// Whether each log-std entry was clamped (zero gradient there).
    pub clamped: Vec<bool>,
    /// exp(clamped log_std).
    pub std: Vec<f64>,
    pub scale: f64,
}

/// Draw a reparameterized sample `a = scale * tanh(mean + std * eps)`.
pub fn gaussian_policy_sample(
    mean: &[f64],
    log_std: &[f64],
    scale: f64,
    rng: &mut impl Rng,
) -> GaussianSample {
    let noise: Vec<f64> = mean.iter().map(|_| rng.sample(StandardNormal)).collect();
    gaussian_policy_with_noise(mean, log_std, scale, &noise)
}

/// Deterministic variant used by batched updates: the caller supplies the
/// standard-normal noise.
pub fn gaussian_policy_with_noise(
    mean: &[f64],
    log_std: &[f64],
    scale: f64,
    noise: &[f64],
) -> GaussianSample {
    assert_eq!(mean.len(), log_std.len());
    assert_eq!(mean.len(), noise.len());
    let mut action = vec![0.0; mean.len()];
    let mut tanh = vec![0.0; mean.len()];
    let mut clamped = vec![false; mean.len()];
    let mut std = vec![0.0; mean.len()];
    let mut log_prob = 0.0;
    for i in 0..mean.len() {
        let ls = if log_std[i] < LOG_STD_MIN {
            clamped[i] = true;
            LOG_STD_MIN
        } else if log_std[i] > LOG_STD_MAX {
            clamped[i] = true;
            LOG_STD_MAX
        } else {
            log_std[i]
        };
        let s = ls.exp();
        std[i] = s;
        let x = mean[i] + s * noise[i];
        let t = x.tanh();
        tanh[i] = t;
        action[i] = scale * t;
        // log N(x; mean, s) at the sampled point, then the tanh and scale
        // change-of-variables terms. ln(1 - tanh^2 x) = 2(ln 2 - x - softplus(-2x)).
        let log_det_tanh = 2.0 * (std::f64::consts::LN_2 - x - softplus(-2.0 * x));
        log_prob += -0.5 * noise[i] * noise[i] - ls - HALF_LN_2PI - log_det_tanh - scale.ln();
    }
    GaussianSample { action, log_prob, tanh, noise: noise.to_vec(), clamped, std, scale }
}

/// Squashed mean, the deterministic evaluation action.
pub fn squashed_mean(mean: &[f64], scale: f64) -> Vec<f64> {
    mean.iter().map(|m| scale * m.tanh()).collect()
}

/// Backward pass of the reparameterized sample. Given upstream gradients
/// with respect to the action vector and the scalar log-prob, returns
/// gradients with respect to the mean and (unclamped) log-std outputs.
pub fn gaussian_policy_backward(
    sample: &GaussianSample,
    d_action: &[f64],
    d_log_prob: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = sample.tanh.len();
    let mut d_mean = vec![0.0; n];
    let mut d_log_std = vec![0.0; n];
    for i in 0..n {
        let t = sample.tanh[i];
        let dadx = sample.scale * (1.0 - t * t);
        // d log_prob / dx: only the squash correction depends on x once the
        // noise is held fixed (the Gaussian term is -0.5 eps^2 - ls - const).
        let dlogp_dx = 2.0 * t;
        let dx_dmean = 1.0;
        let dx_dls = sample.std[i] * sample.noise[i];
        d_mean[i] = d_action[i] * dadx * dx_dmean + d_log_prob * dlogp_dx * dx_dmean;
        let g_ls = d_action[i] * dadx * dx_dls + d_log_prob * (dlogp_dx * dx_dls - 1.0);
        d_log_std[i] = if sample.clamped[i] { 0.0 } else { g_ls };
    }
    (d_mean, d_log_std)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn near_deterministic_at_log_std_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mean = [0.8, -1.3];
        let s = gaussian_policy_sample(&mean, &[-20.0, -20.0], 5.0, &mut rng);
        for i in 0..2 {
            assert!((s.action[i] - 5.0 * mean[i].tanh()).abs() < 1e-6);
        }
    }

    #[test]
    fn log_prob_finite_across_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let s = gaussian_policy_sample(&[0.0, 3.0], &[1.9, -3.0], 5.0, &mut rng);
            assert!(s.log_prob.is_finite());
            for a in &s.action {
                assert!(a.abs() <= 5.0);
            }
        }
    }

    #[test]
    fn monte_carlo_entropy_matches_closed_form() {
        // E[-log p] over draws = Gaussian entropy + E[squash + scale terms].
        let mean = [0.4, -0.2];
        let log_std = [-0.5, 0.3];
        let scale = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut mc = 0.0;
        let mut squash_expect = 0.0;
        for _ in 0..n {
            let s = gaussian_policy_with_noise(
                &mean,
                &log_std,
                scale,
                &[rng.sample(StandardNormal), rng.sample(StandardNormal)],
            );
            mc += -s.log_prob;
            for i in 0..2 {
                let x = mean[i] + log_std[i].exp() * s.noise[i];
                squash_expect +=
                    2.0 * (std::f64::consts::LN_2 - x - softplus(-2.0 * x)) + scale.ln();
            }
        }
        mc /= n as f64;
        squash_expect /= n as f64;
        let gauss_entropy: f64 = log_std.iter().map(|ls| ls + HALF_LN_2PI + 0.5).sum();
        let closed = gauss_entropy + squash_expect;
        assert!(
            (mc - closed).abs() / closed.abs() < 0.01,
            "mc {mc} vs closed {closed}"
        );
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mean = [0.3, -0.7];
        let log_std = [-0.2, 0.4];
        let noise = [0.9, -1.4];
        let scale = 3.0;
        let d_action = [0.5, -0.25];
        let d_log_prob = 0.7;
        let base = gaussian_policy_with_noise(&mean, &log_std, scale, &noise);
        let (dm, dls) = gaussian_policy_backward(&base, &d_action, d_log_prob);
        let f = |mean: &[f64], log_std: &[f64]| -> f64 {
            let s = gaussian_policy_with_noise(mean, log_std, scale, &noise);
            s.action.iter().zip(&d_action).map(|(a, g)| a * g).sum::<f64>()
                + d_log_prob * s.log_prob
        };
        let h = 1e-6;
        for i in 0..2 {
            let mut mp = mean;
            mp[i] += h;
            let mut mm = mean;
            mm[i] -= h;
            let fd = (f(&mp, &log_std) - f(&mm, &log_std)) / (2.0 * h);
            assert!((fd - dm[i]).abs() < 1e-6, "mean {i}: {fd} vs {}", dm[i]);
            let mut lp = log_std;
            lp[i] += h;
            let mut lm = log_std;
            lm[i] -= h;
            let fd = (f(&mean, &lp) - f(&mean, &lm)) / (2.0 * h);
            assert!((fd - dls[i]).abs() < 1e-6, "log_std {i}: {fd} vs {}", dls[i]);
        }
    }
}
