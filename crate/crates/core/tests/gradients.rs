//! Reverse-mode gradients against central differences at random points.

use auxmtl_core::autodiff::{grad_check, Conv2dAttrs, Graph, NodeId, PoolAttrs};
use auxmtl_core::losses::{
    combine_learned_graph, depth_loss, pixelwise_ce_loss, scalar_ce_loss, time_loss, RegularizerKind,
};
use auxmtl_core::{Result, TaskId, Tensor};
use proptest::prelude::*;

const TOL: f64 = 1e-4;

fn tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn weighted_sum(g: &mut Graph, y: NodeId, w: &Tensor) -> Result<NodeId> {
    let w = g.constant(w.clone());
    let p = g.mul(y, w)?;
    g.sum(p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv2d_input_and_kernel(
        x in tensor(vec![1, 4, 4, 2], -1.0, 1.0),
        k in tensor(vec![3, 3, 2, 2], -1.0, 1.0),
        w in tensor(vec![1, 4, 4, 2], -1.0, 1.0),
        dilation in 1usize..3,
    ) {
        let attrs = Conv2dAttrs { stride: 1, padding: dilation, dilation };
        let b = Tensor::from_vec(vec![0.1, -0.2]);
        let (k1, b1, w1) = (k.clone(), b.clone(), w.clone());
        let err = grad_check(move |g, x| {
            let (kn, bn) = (g.constant(k1.clone()), g.constant(b1.clone()));
            let y = g.conv2d(x, kn, bn, attrs)?;
            weighted_sum(g, y, &w1)
        }, &x, 1e-6).unwrap();
        prop_assert!(err < TOL, "input {err}");
        let err = grad_check(move |g, k| {
            let (xn, bn) = (g.constant(x.clone()), g.constant(b.clone()));
            let y = g.conv2d(xn, k, bn, attrs)?;
            weighted_sum(g, y, &w)
        }, &k, 1e-6).unwrap();
        prop_assert!(err < TOL, "kernel {err}");
    }

    #[test]
    fn pool_then_upsample(x in tensor(vec![1, 4, 4, 1], -1.0, 1.0), w in tensor(vec![1, 4, 4, 1], -1.0, 1.0)) {
        let err = grad_check(move |g, x| {
            let p = g.max_pool2d(x, PoolAttrs { window: 2, stride: 2, padding: 0 })?;
            let u = g.upsample(p, 2)?;
            weighted_sum(g, u, &w)
        }, &x, 1e-6).unwrap();
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn elementwise_chain(x in tensor(vec![6], 0.2, 2.0), w in tensor(vec![6], -1.0, 1.0)) {
        let err = grad_check(move |g, x| {
            let s = g.sigmoid(x)?;
            let l = g.log(x)?;
            let q = g.square(l)?;
            let d = g.div(s, x)?;
            let m = g.min(q, d)?;
            let r = g.relu(m)?;
            let a = g.add_scalar(r, 0.5)?;
            weighted_sum(g, a, &w)
        }, &x, 1e-6).unwrap();
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn classification_losses(logits in tensor(vec![3, 11], -4.0, 4.0), classes in prop::collection::vec(0usize..11, 3)) {
        let err = grad_check(move |g, x| scalar_ce_loss(g, x, &classes), &logits, 1e-6).unwrap();
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn pixel_losses(
        logits in tensor(vec![1, 2, 3, 3], -3.0, 3.0),
        mask in prop::collection::vec(0usize..3, 6),
        pred in tensor(vec![1, 2, 3], 0.01, 0.99),
        target in tensor(vec![1, 2, 3], 0.0, 1.0),
    ) {
        let err = grad_check(move |g, x| pixelwise_ce_loss(g, x, &mask), &logits, 1e-6).unwrap();
        prop_assert!(err < TOL, "ce {err}");
        let err = grad_check(move |g, x| {
            let t = g.constant(target.clone());
            depth_loss(g, x, t)
        }, &pred, 1e-6).unwrap();
        prop_assert!(err < TOL, "depth {err}");
    }

    #[test]
    fn cyclic_time_loss(pred in tensor(vec![3, 1], -1000.0, 2500.0), target in prop::collection::vec(0.0f64..1440.0, 3)) {
        // Stay clear of the kinks where the nearest day boundary switches.
        let kink = |p: f64, t: f64| ((t - p.rem_euclid(1440.0)).abs() - 720.0).abs() < 1e-3 || (p.rem_euclid(1440.0)) < 1e-3;
        prop_assume!(pred.data().iter().zip(&target).all(|(&p, &t)| !kink(p, t)));
        let err = grad_check(move |g, x| time_loss(g, x, &target, 1e-5), &pred, 1e-6).unwrap();
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn learned_combination_in_c(c in 0.05f64..3.0, l in 0.0f64..10.0, pos in any::<bool>()) {
        let kind = if pos { RegularizerKind::Pos } else { RegularizerKind::Log };
        let err = grad_check(move |g, c| {
            let raw = [(TaskId::Seg, g.constant(Tensor::scalar(l)))].into_iter().collect();
            let cs = [(TaskId::Seg, c)].into_iter().collect();
            Ok(combine_learned_graph(g, &raw, &cs, kind)?.0)
        }, &Tensor::scalar(c), 1e-7).unwrap();
        prop_assert!(err < TOL, "{err}");
    }
}
