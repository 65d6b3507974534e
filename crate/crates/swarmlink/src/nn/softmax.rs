//! Temperature softmax over a masked score vector.

use super::NnError;

/// `exp(s_i / beta) / sum_j exp(s_j / beta)` over unmasked entries, exact
/// zero on masked ones (`mask[i] == true` excludes entry `i`). Stabilized by
/// max subtraction.
pub fn softmax_temp(scores: &[f64], beta: f64, mask: &[bool]) -> Result<Vec<f64>, NnError> {
    assert_eq!(scores.len(), mask.len());
    assert!(beta > 0.0, "temperature must be positive");
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, m)| !**m)
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NnError::AllMasked);
    }
    let mut out = vec![0.0; scores.len()];
    let mut total = 0.0;
    for i in 0..scores.len() {
        if !mask[i] {
            let e = ((scores[i] - max) / beta).exp();
            out[i] = e;
            total += e;
        }
    }
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

/// Gradient of [`softmax_temp`] with respect to the scores, given the
/// forward output `probs` and upstream gradient `dy`. Masked entries get
/// exact zero gradient.
pub fn softmax_temp_backward(probs: &[f64], beta: f64, mask: &[bool], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = probs
        .iter()
        .zip(dy)
        .zip(mask)
        .filter(|(_, m)| !**m)
        .map(|((p, g), _)| p * g)
        .sum();
    probs
        .iter()
        .zip(dy)
        .zip(mask)
        .map(|((p, g), m)| if *m { 0.0 } else { p * (g - dot) / beta })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_scores_uniform() {
        let out = softmax_temp(&[2.0, 2.0, 2.0, 2.0], 1.0, &[false, true, false, false]).unwrap();
        assert_eq!(out[1], 0.0);
        for &i in &[0usize, 2, 3] {
            assert!((out[i] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_evaluated_three_scores() {
        let out = softmax_temp(&[2.0, 1.0, 0.0], 1.0, &[false; 3]).unwrap();
        assert!((out[0] - 0.6652).abs() < 1e-4);
        assert!((out[1] - 0.2447).abs() < 1e-4);
        assert!((out[2] - 0.0900).abs() < 1e-4);
    }

    #[test]
    fn sums_to_one_and_preserves_argmax() {
        let scores = [0.3, -1.2, 2.7, 0.0, 2.69];
        for beta in [0.1, 1.0, 10.0] {
            let out = softmax_temp(&scores, beta, &[false; 5]).unwrap();
            let sum: f64 = out.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            let argmax_in = 2;
            let argmax_out = out
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax_in, argmax_out);
        }
    }

    #[test]
    fn all_masked_is_an_error() {
        assert!(matches!(
            softmax_temp(&[1.0, 2.0], 1.0, &[true, true]),
            Err(NnError::AllMasked)
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let scores = [0.5, -0.3, 1.1, 0.0];
        let mask = [false, false, true, false];
        let beta = 0.7;
        let dy = [0.2, -0.4, 0.9, 0.1];
        let probs = softmax_temp(&scores, beta, &mask).unwrap();
        let analytic = softmax_temp_backward(&probs, beta, &mask, &dy);
        let h = 1e-6;
        for i in 0..scores.len() {
            let mut plus = scores;
            plus[i] += h;
            let mut minus = scores;
            minus[i] -= h;
            let f = |s: &[f64]| -> f64 {
                let p = softmax_temp(s, beta, &mask).unwrap();
                p.iter().zip(&dy).map(|(a, b)| a * b).sum()
            };
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!(
                (fd - analytic[i]).abs() < 1e-6,
                "entry {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }
}
