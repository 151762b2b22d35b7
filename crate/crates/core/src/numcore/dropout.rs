use rand::Rng;

use super::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted dropout in place. Returns the mask that was applied (each entry
/// is `0` or `1/(1−p)`), or `None` when the input was left unchanged.
pub fn dropout<T: Real, R: Rng>(x: &mut [T], p: f64, mode: DropoutMode, rng: &mut R) -> Option<Vec<T>> {
    assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
    if mode == DropoutMode::Eval || p == 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
        .collect();
    for (v, &m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let orig = vec![1.0f64, -2.0, 3.5];
        for (p, mode) in [(0.0, DropoutMode::Train), (0.0, DropoutMode::Eval), (0.5, DropoutMode::Eval)] {
            let mut x = orig.clone();
            assert!(dropout(&mut x, p, mode, &mut rng).is_none());
            assert_eq!(x, orig);
        }
    }

    #[test]
    fn zero_rate_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut x = vec![1.0f32; 1_000_000];
        dropout(&mut x, 0.2, DropoutMode::Train, &mut rng).unwrap();
        let zeros = x.iter().filter(|&&v| v == 0.0).count() as f64 / x.len() as f64;
        assert!((0.198..=0.202).contains(&zeros), "zero rate {zeros}");
        assert!(x.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-6));
    }
}
