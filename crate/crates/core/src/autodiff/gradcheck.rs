use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::graph::{Graph, NodeId};

/// Largest relative disagreement between reverse-mode and central finite
/// difference gradients of a scalar function at `point`.
///
/// `f` receives a fresh graph and the leaf holding the (possibly perturbed)
/// point, and returns the scalar output node. Per coordinate the error is
/// `|analytic - fd| / max(|analytic|, |fd|, 1e-12)`.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("grad_check eps must be > 0, got {eps}")));
    }
    let eval = |p: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.param(p);
        let out = f(&mut g, x)?;
        let v = g.value(out);
        if v.numel() != 1 {
            return Err(Error::NonScalarLoss(v.shape().to_vec()));
        }
        if !v.item().is_finite() {
            return Err(Error::NonFinite("grad_check function value".into()));
        }
        Ok(v.item())
    };

    let mut g = Graph::new();
    let x = g.param(point.clone());
    let out = f(&mut g, x)?;
    let analytic = g.backward(out)?.get_or_zeros(&g, x);

    let mut worst: f64 = 0.0;
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_exact() {
        let p = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let err = grad_check(
            |g, x| {
                let s = g.square(x)?;
                g.sum(s)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn rejects_bad_eps() {
        let p = Tensor::scalar(1.0);
        assert!(grad_check(|g, x| g.square(x), &p, 0.0).is_err());
    }

    #[test]
    fn non_finite_value_is_error() {
        let p = Tensor::scalar(1e-7);
        // log(x) at x - eps < 0
        assert!(grad_check(|g, x| g.log(x), &p, 1e-5).is_err());
    }
}
