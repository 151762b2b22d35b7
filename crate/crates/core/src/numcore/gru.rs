use rand::Rng;

use super::tensor::{matvec, matvec_acc, matvec_t_acc, outer_acc, Real, Tensor};
use super::{expect_len, NumError, ParamSet};

/// Gated recurrent unit weights for input size `d_in` and hidden size `d_h`.
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h̃  = tanh(W_c x + U_c (r ⊙ h) + b_c)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub w_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_c: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_c: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_c: Tensor<T>,
}

impl<T: Real> GruParams<T> {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        GruParams {
            w_z: Tensor::zeros(&[d_h, d_in]),
            w_r: Tensor::zeros(&[d_h, d_in]),
            w_c: Tensor::zeros(&[d_h, d_in]),
            u_z: Tensor::zeros(&[d_h, d_h]),
            u_r: Tensor::zeros(&[d_h, d_h]),
            u_c: Tensor::zeros(&[d_h, d_h]),
            b_z: Tensor::zeros(&[d_h]),
            b_r: Tensor::zeros(&[d_h]),
            b_c: Tensor::zeros(&[d_h]),
        }
    }

    /// Weights uniform in `[-scale, scale]`, biases zero.
    pub fn init<R: Rng>(d_in: usize, d_h: usize, scale: f64, rng: &mut R) -> Self {
        GruParams {
            w_z: Tensor::uniform(&[d_h, d_in], scale, rng),
            w_r: Tensor::uniform(&[d_h, d_in], scale, rng),
            w_c: Tensor::uniform(&[d_h, d_in], scale, rng),
            u_z: Tensor::uniform(&[d_h, d_h], scale, rng),
            u_r: Tensor::uniform(&[d_h, d_h], scale, rng),
            u_c: Tensor::uniform(&[d_h, d_h], scale, rng),
            b_z: Tensor::zeros(&[d_h]),
            b_r: Tensor::zeros(&[d_h]),
            b_c: Tensor::zeros(&[d_h]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }
}

impl<T: Real> ParamSet<T> for GruParams<T> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![&self.w_z, &self.w_r, &self.w_c, &self.u_z, &self.u_r, &self.u_c, &self.b_z, &self.b_r, &self.b_c]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_c,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_c,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_c,
        ]
    }

    fn names(&self) -> Vec<String> {
        ["w_z", "w_r", "w_c", "u_z", "u_r", "u_c", "b_z", "b_r", "b_c"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Forward step without shape checks.
pub fn gru_forward<T: Real>(p: &GruParams<T>, x: &[T], h_prev: &[T]) -> GruCache<T> {
    let d_h = p.hidden_dim();
    let mut z = p.b_z.data().to_vec();
    let mut r = p.b_r.data().to_vec();
    matvec_acc(&p.w_z, x, &mut z);
    matvec_acc(&p.u_z, h_prev, &mut z);
    matvec_acc(&p.w_r, x, &mut r);
    matvec_acc(&p.u_r, h_prev, &mut r);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));
    r.iter_mut().for_each(|v| *v = sigmoid(*v));

    let rh: Vec<T> = r.iter().zip(h_prev).map(|(&a, &b)| a * b).collect();
    let mut c = vec![T::zero(); d_h];
    matvec(&p.u_c, &rh, &mut c);
    matvec_acc(&p.w_c, x, &mut c);
    for (v, &b) in c.iter_mut().zip(p.b_c.data()) {
        *v = (*v + b).tanh();
    }
    let h = (0..d_h)
        .map(|i| (T::one() - z[i]) * h_prev[i] + z[i] * c[i])
        .collect();
    GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        z,
        r,
        c,
        h,
    }
}

/// One GRU step.
pub fn gru_cell<T: Real>(x: &[T], h_prev: &[T], params: &GruParams<T>) -> Result<Vec<T>, NumError> {
    expect_len("gru input", x.len(), params.input_dim())?;
    expect_len("gru state", h_prev.len(), params.hidden_dim())?;
    Ok(gru_forward(params, x, h_prev).h)
}

/// Accumulates parameter gradients into `grads` and input/state gradients
/// into `dx` and `dh_prev`, given `dh` = ∂L/∂h'.
pub fn gru_backward<T: Real>(
    p: &GruParams<T>,
    cache: &GruCache<T>,
    dh: &[T],
    grads: &mut GruParams<T>,
    dx: &mut [T],
    dh_prev: &mut [T],
) {
    let d_h = p.hidden_dim();
    let one = T::one();
    let mut da_c = vec![T::zero(); d_h];
    let mut da_z = vec![T::zero(); d_h];
    for i in 0..d_h {
        let (z, c, hp) = (cache.z[i], cache.c[i], cache.h_prev[i]);
        dh_prev[i] += dh[i] * (one - z);
        da_c[i] = dh[i] * z * (one - c * c);
        da_z[i] = dh[i] * (c - hp) * z * (one - z);
    }
    let rh: Vec<T> = cache.r.iter().zip(&cache.h_prev).map(|(&a, &b)| a * b).collect();
    outer_acc(&mut grads.w_c, &da_c, &cache.x);
    outer_acc(&mut grads.u_c, &da_c, &rh);
    axpy_into(&mut grads.b_c, &da_c);
    matvec_t_acc(&p.w_c, &da_c, dx);
    let mut drh = vec![T::zero(); d_h];
    matvec_t_acc(&p.u_c, &da_c, &mut drh);

    let mut da_r = vec![T::zero(); d_h];
    for i in 0..d_h {
        let r = cache.r[i];
        dh_prev[i] += drh[i] * r;
        da_r[i] = drh[i] * cache.h_prev[i] * r * (one - r);
    }
    outer_acc(&mut grads.w_z, &da_z, &cache.x);
    outer_acc(&mut grads.u_z, &da_z, &cache.h_prev);
    axpy_into(&mut grads.b_z, &da_z);
    matvec_t_acc(&p.w_z, &da_z, dx);
    matvec_t_acc(&p.u_z, &da_z, dh_prev);

    outer_acc(&mut grads.w_r, &da_r, &cache.x);
    outer_acc(&mut grads.u_r, &da_r, &cache.h_prev);
    axpy_into(&mut grads.b_r, &da_r);
    matvec_t_acc(&p.w_r, &da_r, dx);
    matvec_t_acc(&p.u_r, &da_r, dh_prev);
}

fn axpy_into<T: Real>(t: &mut Tensor<T>, d: &[T]) {
    for (a, &b) in t.data_mut().iter_mut().zip(d) {
        *a += b;
    }
}
