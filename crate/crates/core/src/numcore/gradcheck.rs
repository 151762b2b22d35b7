use super::tensor::ParamSet;

/// Denominator floor for relative error, so that components whose true
/// gradient is numerically zero are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(tensor name, max relative error, elements checked)` in parameter order.
    pub groups: Vec<(String, f64, usize)>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&(String, f64, usize)> {
        self.groups.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Compares `analytic` against central differences of `loss` around
/// `params`, perturbing every element (or at most `max_per_tensor` evenly
/// spaced elements per tensor when given). `params` is restored on return.
pub fn grad_check<P, F>(
    mut loss: F,
    params: &mut P,
    analytic: &P,
    eps: f64,
    max_per_tensor: Option<usize>,
) -> GradCheckReport
where
    P: ParamSet<f64>,
    F: FnMut(&P) -> f64,
{
    let names = params.names();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut groups = Vec::with_capacity(sizes.len());
    for (ti, &n) in sizes.iter().enumerate() {
        let stride = match max_per_tensor {
            Some(k) if k > 0 && n > k => n.div_ceil(k),
            _ => 1,
        };
        let mut worst = 0.0f64;
        let mut checked = 0;
        for j in (0..n).step_by(stride) {
            let orig = params.tensors()[ti].data()[j];
            params.tensors_mut()[ti].data_mut()[j] = orig + eps;
            let up = loss(params);
            params.tensors_mut()[ti].data_mut()[j] = orig - eps;
            let dn = loss(params);
            params.tensors_mut()[ti].data_mut()[j] = orig;
            let numeric = (up - dn) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.tensors()[ti].data()[j], numeric));
            checked += 1;
        }
        groups.push((names[ti].clone(), worst, checked));
    }
    let max_rel_error = groups.iter().map(|g| g.1).fold(0.0, f64::max);
    GradCheckReport { groups, max_rel_error }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    #[test]
    fn quadratic() {
        let mut w = Tensor::from_vec(&[1], vec![3.0]).unwrap();
        let g = Tensor::from_vec(&[1], vec![3.0]).unwrap();
        let rep = grad_check(|p: &Tensor<f64>| 0.5 * p.data()[0] * p.data()[0], &mut w, &g, 1e-5, None);
        assert!(rep.max_rel_error < 1e-9, "{rep:?}");
        assert_eq!(w.data()[0], 3.0);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut w: Tensor<f64> = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let loss = |p: &Tensor<f64>| p.data().iter().map(|x| x.sin() * x).sum::<f64>();
        let mut g = Tensor::from_vec(&[3], w.data().iter().map(|&x: &f64| x.cos() * x + x.sin()).collect()).unwrap();
        assert!(grad_check(loss, &mut w, &g, 1e-5, None).max_rel_error < 1e-8);
        g.data_mut()[1] *= 1.05;
        assert!(grad_check(loss, &mut w, &g, 1e-5, None).max_rel_error > 1e-2);
    }
}
