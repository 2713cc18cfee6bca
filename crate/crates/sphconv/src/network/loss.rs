//! Softmax cross-entropy.

use ndarray::Array1;

use crate::network::NetworkError;
use crate::real::Real;

/// Numerically stable softmax cross-entropy via log-sum-exp.
/// Returns the scalar loss and the logit gradient `softmax − one_hot`.
pub fn loss_softmax_ce<F: Real>(
    logits: &Array1<F>,
    label: usize,
) -> Result<(F, Array1<F>), NetworkError> {
    let classes = logits.len();
    if label >= classes {
        return Err(NetworkError::LabelOutOfRange { label, classes });
    }
    let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let sum_exp: F = logits.iter().map(|&v| (v - max).exp()).sum();
    let lse = max + sum_exp.ln();
    let loss = lse - logits[label];
    let mut grad = logits.mapv(|v| (v - lse).exp());
    grad[label] -= F::one();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        for c in [2usize, 4, 10] {
            let logits = Array1::<f64>::from_elem(c, 0.7);
            let (loss, grad) = loss_softmax_ce(&logits, 0).unwrap();
            assert!((loss - (c as f64).ln()).abs() < 1e-12);
            let sum: f64 = grad.sum();
            assert!(sum.abs() < 1e-12, "logit grad sums to zero");
        }
    }

    #[test]
    fn gradient_sums_to_zero() {
        let logits = Array1::from_vec(vec![1.0_f64, -2.0, 0.5, 3.0]);
        let (_, grad) = loss_softmax_ce(&logits, 2).unwrap();
        assert!(grad.sum().abs() < 1e-12);
    }

    #[test]
    fn out_of_range_label_rejected() {
        let logits = Array1::<f64>::zeros(3);
        assert!(matches!(
            loss_softmax_ce(&logits, 3),
            Err(NetworkError::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn stable_for_large_logits() {
        let logits = Array1::from_vec(vec![1000.0_f64, 998.0]);
        let (loss, grad) = loss_softmax_ce(&logits, 0).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        assert!(grad.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn matches_finite_differences() {
        let logits = Array1::from_vec(vec![0.3_f64, -1.2, 0.9, 0.1]);
        let label = 1;
        let (_, grad) = loss_softmax_ce(&logits, label).unwrap();
        let h = 1e-6;
        for k in 0..logits.len() {
            let mut lp = logits.clone();
            lp[k] += h;
            let mut lm = logits.clone();
            lm[k] -= h;
            let (fp, _) = loss_softmax_ce(&lp, label).unwrap();
            let (fm, _) = loss_softmax_ce(&lm, label).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-6, "logit {k}: {} vs {}", grad[k], fd);
        }
    }
}
