use super::tensor::Real;
use super::NumError;

/// Max-subtracted softmax, in place.
pub fn softmax_in_place<T: Real>(x: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        z += *v;
    }
    let inv = T::one() / z;
    for v in x.iter_mut() {
        *v *= inv;
    }
}

pub fn softmax<T: Real>(x: &[T]) -> Vec<T> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn log_softmax<T: Real>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = x.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    x.iter().map(|&v| v - lse).collect()
}

/// Cross-entropy of `gold` under `softmax(logits)` and its gradient
/// `softmax(logits) − onehot(gold)`.
pub fn softmax_xent<T: Real>(logits: &[T], gold: usize) -> Result<(T, Vec<T>), NumError> {
    if gold >= logits.len() {
        return Err(NumError::IndexOutOfRange {
            index: gold,
            len: logits.len(),
        });
    }
    let lp = log_softmax(logits);
    let loss = -lp[gold];
    let mut grad: Vec<T> = lp.iter().map(|v| v.exp()).collect();
    grad[gold] -= T::one();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        for k in [1usize, 2, 7, 100] {
            let (loss, _) = softmax_xent(&vec![0.3f64; k], 0).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logit_is_finite_and_near_zero() {
        let (loss, grad) = softmax_xent(&[0.0f64, 1e9, -3.0], 1).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn gold_out_of_range() {
        assert_eq!(
            softmax_xent(&[0.0f64; 3], 3),
            Err(NumError::IndexOutOfRange { index: 3, len: 3 })
        );
    }

    #[test]
    fn gradient_matches_central_differences() {
        let logits = [0.4f64, -1.3, 2.2, 0.05, -0.7];
        let gold = 2;
        let (_, grad) = softmax_xent(&logits, gold).unwrap();
        let eps = 1e-6;
        for k in 0..logits.len() {
            let mut up = logits;
            let mut dn = logits;
            up[k] += eps;
            dn[k] -= eps;
            let num = (softmax_xent(&up, gold).unwrap().0 - softmax_xent(&dn, gold).unwrap().0) / (2.0 * eps);
            let rel = (num - grad[k]).abs() / num.abs().max(grad[k].abs()).max(1e-12);
            assert!(rel < 1e-6, "component {k}: {num} vs {}", grad[k]);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_a_strict_simplex(xs in prop::collection::vec(-30.0f64..30.0, 1..40)) {
            let p = softmax(&xs);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v > 0.0));
        }
    }
}
