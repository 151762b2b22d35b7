use rand::Rng;

use super::loss::softmax_in_place;
use super::tensor::{axpy, dot, matvec, Real, Tensor};
use super::{expect_len, NumError, ParamSet};

/// Additive attention: `e_i = vᵀ tanh(W_s s + W_h h_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    /// `att × d_s`
    pub w_s: Tensor<T>,
    /// `att × d_h`
    pub w_h: Tensor<T>,
    /// `att`
    pub v: Tensor<T>,
}

impl<T: Real> AttentionParams<T> {
    pub fn zeros(d_s: usize, d_h: usize, att: usize) -> Self {
        AttentionParams {
            w_s: Tensor::zeros(&[att, d_s]),
            w_h: Tensor::zeros(&[att, d_h]),
            v: Tensor::zeros(&[att]),
        }
    }

    pub fn init<R: Rng>(d_s: usize, d_h: usize, att: usize, scale: f64, rng: &mut R) -> Self {
        AttentionParams {
            w_s: Tensor::uniform(&[att, d_s], scale, rng),
            w_h: Tensor::uniform(&[att, d_h], scale, rng),
            v: Tensor::uniform(&[att], scale, rng),
        }
    }

    pub fn att_dim(&self) -> usize {
        self.v.len()
    }

    /// Projects every encoder row once: `K = H W_hᵀ`, shape `m × att`.
    pub fn keys(&self, h: &Tensor<T>) -> Tensor<T> {
        let m = h.rows();
        let att = self.att_dim();
        let mut k = Tensor::zeros(&[m, att]);
        for i in 0..m {
            matvec(&self.w_h, h.row(i), k.row_mut(i));
        }
        k
    }
}

impl<T: Real> ParamSet<T> for AttentionParams<T> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![&self.w_s, &self.w_h, &self.v]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w_s, &mut self.w_h, &mut self.v]
    }

    fn names(&self) -> Vec<String> {
        vec!["w_s".into(), "w_h".into(), "v".into()]
    }
}

/// Intermediate values of one attention step.
#[derive(Debug, Clone)]
pub struct AttentionStep<T> {
    /// `tanh(W_s s + k_i)` per source position, `m × att`.
    pub t: Tensor<T>,
    /// Attention weights, a simplex over source positions.
    pub a: Vec<T>,
}

/// Attention step against precomputed keys (see [`AttentionParams::keys`]).
pub fn attention_forward<T: Real>(p: &AttentionParams<T>, s_prev: &[T], keys: &Tensor<T>) -> AttentionStep<T> {
    let att = p.att_dim();
    let m = keys.rows();
    let mut q = vec![T::zero(); att];
    matvec(&p.w_s, s_prev, &mut q);
    let mut t = Tensor::zeros(&[m, att]);
    let mut a = vec![T::zero(); m];
    for i in 0..m {
        let row = t.row_mut(i);
        for ((r, &k), &qv) in row.iter_mut().zip(keys.row(i)).zip(&q) {
            *r = (k + qv).tanh();
        }
        a[i] = dot(p.v.data(), row);
    }
    softmax_in_place(&mut a);
    AttentionStep { t, a }
}

/// Attention weights of `s_prev` over the rows of `h`.
pub fn attention_scores<T: Real>(s_prev: &[T], h: &Tensor<T>, params: &AttentionParams<T>) -> Result<Vec<T>, NumError> {
    if h.shape().len() != 2 || h.rows() == 0 {
        return Err(NumError::ShapeMismatch("attention needs a non-empty m×d matrix".into()));
    }
    expect_len("attention state", s_prev.len(), params.w_s.cols())?;
    expect_len("attention source width", h.cols(), params.w_h.cols())?;
    let keys = params.keys(h);
    Ok(attention_forward(params, s_prev, &keys).a)
}

/// `C = Σ_i a_i h_i`.
pub fn context<T: Real>(a: &[T], h: &Tensor<T>) -> Result<Vec<T>, NumError> {
    expect_len("attention weights", a.len(), h.rows())?;
    let mut c = vec![T::zero(); h.cols()];
    for (i, &ai) in a.iter().enumerate() {
        axpy(ai, h.row(i), &mut c);
    }
    Ok(c)
}

/// Backward through softmax and the scoring network given `da` = ∂L/∂a.
///
/// Accumulates into `grads.w_s`, `grads.v`, `ds_prev` and `dkeys`; the
/// caller folds `dkeys` back through `W_h` once per sequence.
pub fn attention_backward<T: Real>(
    p: &AttentionParams<T>,
    step: &AttentionStep<T>,
    s_prev: &[T],
    da: &[T],
    grads: &mut AttentionParams<T>,
    ds_prev: &mut [T],
    dkeys: &mut Tensor<T>,
) {
    let att = p.att_dim();
    let m = step.a.len();
    let mean: T = step.a.iter().zip(da).map(|(&a, &d)| a * d).sum();
    let mut dq = vec![T::zero(); att];
    for i in 0..m {
        let de = step.a[i] * (da[i] - mean);
        if de == T::zero() {
            continue;
        }
        let t = step.t.row(i);
        axpy(de, t, grads.v.data_mut());
        let dk = dkeys.row_mut(i);
        for k in 0..att {
            let du = de * p.v.data()[k] * (T::one() - t[k] * t[k]);
            dk[k] += du;
            dq[k] += du;
        }
    }
    super::tensor::outer_acc(&mut grads.w_s, &dq, s_prev);
    super::tensor::matvec_t_acc(&p.w_s, &dq, ds_prev);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(seed: u64) -> AttentionParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AttentionParams::init(4, 3, 5, 0.8, &mut rng)
    }

    fn matrix(m: usize, d: usize, f: impl Fn(usize, usize) -> f64) -> Tensor<f64> {
        let data = (0..m * d).map(|k| f(k / d, k % d)).collect();
        Tensor::from_vec(&[m, d], data).unwrap()
    }

    #[test]
    fn singleton_is_one() {
        let h = matrix(1, 3, |_, j| j as f64 - 1.0);
        let a = attention_scores(&[0.1, 0.2, 0.3, 0.4], &h, &params(1)).unwrap();
        assert_eq!(a, vec![1.0]);
    }

    #[test]
    fn identical_rows_are_uniform() {
        let h = matrix(4, 3, |_, j| 0.3 * j as f64);
        let a = attention_scores(&[0.5, -0.2, 0.9, 0.0], &h, &params(2)).unwrap();
        for v in a {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_direct_formula() {
        let p = params(3);
        let h = matrix(3, 3, |i, j| ((i * 3 + j) as f64 * 0.77).sin());
        let s = [0.3, -0.1, 0.8, -0.6];
        let a = attention_scores(&s, &h, &p).unwrap();
        let w = |t: &Tensor<f64>, i: usize, j: usize| t.data()[i * t.cols() + j];
        let mut e = vec![0.0; 3];
        for (i, ei) in e.iter_mut().enumerate() {
            for k in 0..5 {
                let mut u = 0.0;
                for j in 0..4 {
                    u += w(&p.w_s, k, j) * s[j];
                }
                for j in 0..3 {
                    u += w(&p.w_h, k, j) * h.row(i)[j];
                }
                *ei += p.v.data()[k] * u.tanh();
            }
        }
        let z: f64 = e.iter().map(|x| x.exp()).sum();
        for i in 0..3 {
            assert!((a[i] - e[i].exp() / z).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn context_cases() {
        let h = matrix(3, 2, |i, j| (i * 2 + j) as f64);
        assert_eq!(context(&[1.0, 0.0, 0.0], &h).unwrap(), h.row(0).to_vec());
        let same = matrix(3, 2, |_, j| j as f64 + 0.5);
        let c = context(&[1.0 / 3.0; 3], &same).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 1.5).abs() < 1e-15);
        let a = [0.2, 0.5, 0.3];
        let c = context(&a, &h).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..3).map(|i| h.row(i)[j]).collect();
            assert!((c[j] - dot(&a, &col)).abs() < 1e-12);
        }
        assert!(context(&[0.5, 0.5], &h).is_err());
    }

    #[test]
    fn shape_errors() {
        let h = matrix(2, 3, |_, _| 0.0);
        assert!(attention_scores(&[0.0; 3], &h, &params(4)).is_err());
        let wide = matrix(2, 4, |_, _| 0.0);
        assert!(attention_scores(&[0.0; 4], &wide, &params(4)).is_err());
    }
}
