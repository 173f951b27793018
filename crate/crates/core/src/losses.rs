//! Single-task losses, target transforms and multi-task loss combination.
//!
//! Graph-building functions take a [`Graph`] and return the scalar loss node
//! so the result can be differentiated with respect to network parameters
//! and, for the learned combination, the per-task weights `c`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::task::{TaskId, TaskSet};
use crate::tensor::Tensor;

pub const DAY_MINUTES: f64 = 1440.0;

/// Default multiplier applied to the mean squared cyclic time difference.
pub const DEFAULT_TIME_LOSS_SCALE: f64 = 1e-5;

/// Lower bound on `c²` in the `1 / (2c²)` weighting term.
pub const C_SQUARED_GUARD: f64 = 1e-8;

const DEPTH_NEAR_M: f64 = 1.0;
const DEPTH_FAR_M: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    /// `ln(c²)`; unbounded below.
    Log,
    /// `ln(1 + c²)`; never negative.
    Pos,
}

/// Learnable per-task weighting coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    pub c: BTreeMap<TaskId, f64>,
    pub kind: RegularizerKind,
}

impl TaskWeights {
    /// Every coefficient starts at `1 / |T|`.
    pub fn init(tasks: TaskSet, kind: RegularizerKind) -> Self {
        let c0 = 1.0 / tasks.len() as f64;
        TaskWeights { c: tasks.iter().map(|t| (t, c0)).collect(), kind }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub raw: BTreeMap<TaskId, f64>,
    pub weighted: BTreeMap<TaskId, f64>,
    pub reg: BTreeMap<TaskId, f64>,
    pub combined: f64,
}

/// Maps metric depth to the unitless range `r = 1 - ln d / ln 1000`,
/// clipped so that `d < 1 m` gives 1 and `d > 1000 m` gives 0.
pub fn depth_target_transform(depth_m: f64) -> Result<f64> {
    if !(depth_m > 0.0) {
        return Err(Error::InvalidArgument(format!("depth must be positive, got {depth_m}")));
    }
    Ok(if depth_m <= DEPTH_NEAR_M {
        1.0
    } else if depth_m >= DEPTH_FAR_M {
        0.0
    } else {
        1.0 - depth_m.ln() / DEPTH_FAR_M.ln()
    })
}

/// Squared cyclic time difference in squared minutes. Both arguments are
/// first reduced into `[0, 1440)`.
pub fn sctd(t: f64, t_pred: f64) -> f64 {
    let d = t.rem_euclid(DAY_MINUTES) - t_pred.rem_euclid(DAY_MINUTES);
    let a = d * d;
    let b = (d + DAY_MINUTES) * (d + DAY_MINUTES);
    let c = (d - DAY_MINUTES) * (d - DAY_MINUTES);
    a.min(b).min(c)
}

pub fn regularizer(c: f64, kind: RegularizerKind) -> Result<f64> {
    match kind {
        RegularizerKind::Pos => Ok((1.0 + c * c).ln()),
        RegularizerKind::Log if c == 0.0 => Err(Error::InvalidArgument("log regularizer is undefined at c = 0".into())),
        RegularizerKind::Log => Ok((c * c).ln()),
    }
}

/// Weighted sum of task losses with fixed coefficients.
pub fn combine_fixed(raw: &BTreeMap<TaskId, f64>, coeffs: &BTreeMap<TaskId, f64>) -> Result<f64> {
    check_keys(raw.keys(), coeffs.keys())?;
    Ok(raw.iter().map(|(t, l)| l * coeffs[t]).sum())
}

/// Learned combination `Σ L/(2c²) + R(c)` evaluated on plain numbers.
pub fn combine_learned(raw: &BTreeMap<TaskId, f64>, weights: &TaskWeights) -> Result<LossReport> {
    let mut g = Graph::new();
    let raw_nodes = raw.iter().map(|(&t, &l)| (t, g.constant(Tensor::scalar(l)))).collect();
    let c_nodes = weights.c.iter().map(|(&t, &c)| (t, g.constant(Tensor::scalar(c)))).collect();
    let (_, report) = combine_learned_graph(&mut g, &raw_nodes, &c_nodes, weights.kind)?;
    Ok(report)
}

/// Minimiser of `L/(2c²) + ln(1+c²)` over `c > 0`, returned as `c²`.
pub fn optimal_c_squared(loss: f64) -> f64 {
    (loss + (loss * loss + 8.0 * loss).sqrt()) / 4.0
}

fn check_keys<'a>(a: impl Iterator<Item = &'a TaskId>, b: impl Iterator<Item = &'a TaskId>) -> Result<()> {
    let (a, b): (Vec<_>, Vec<_>) = (a.collect(), b.collect());
    if a != b {
        return Err(Error::InvalidArgument(format!("task key mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

fn scalar_sum(g: &mut Graph, terms: &[NodeId]) -> Result<NodeId> {
    let mut acc = *terms.first().ok_or_else(|| Error::InvalidArgument("no loss terms to combine".into()))?;
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// Graph form of [`combine_fixed`].
pub fn combine_fixed_graph(
    g: &mut Graph,
    raw: &BTreeMap<TaskId, NodeId>,
    coeffs: &BTreeMap<TaskId, f64>,
) -> Result<(NodeId, LossReport)> {
    check_keys(raw.keys(), coeffs.keys())?;
    let mut report = LossReport::default();
    let mut terms = Vec::new();
    for (&task, &loss) in raw {
        let weighted = g.mul_scalar(loss, coeffs[&task])?;
        report.raw.insert(task, g.value(loss).item());
        report.weighted.insert(task, g.value(weighted).item());
        terms.push(weighted);
    }
    let combined = scalar_sum(g, &terms)?;
    report.combined = g.value(combined).item();
    Ok((combined, report))
}

/// Graph form of [`combine_learned`]; `c` holds one scalar node per task so
/// the combined loss is differentiable with respect to the coefficients.
pub fn combine_learned_graph(
    g: &mut Graph,
    raw: &BTreeMap<TaskId, NodeId>,
    c: &BTreeMap<TaskId, NodeId>,
    kind: RegularizerKind,
) -> Result<(NodeId, LossReport)> {
    check_keys(raw.keys(), c.keys())?;
    let mut report = LossReport::default();
    let mut terms = Vec::new();
    for (&task, &loss) in raw {
        let c_sq = g.square(c[&task])?;
        let c_sq_value = g.value(c_sq).item();
        if !(c_sq_value >= C_SQUARED_GUARD) {
            return Err(Error::InvalidArgument(format!(
                "c² = {c_sq_value:e} for task {task} is below the {C_SQUARED_GUARD:e} guard"
            )));
        }
        let denom = g.mul_scalar(c_sq, 2.0)?;
        let weighted = g.div(loss, denom)?;
        let reg = match kind {
            RegularizerKind::Pos => {
                let shifted = g.add_scalar(c_sq, 1.0)?;
                g.log(shifted)?
            }
            RegularizerKind::Log => g.log(c_sq)?,
        };
        let term = g.add(weighted, reg)?;
        report.raw.insert(task, g.value(loss).item());
        report.weighted.insert(task, g.value(weighted).item());
        report.reg.insert(task, g.value(reg).item());
        terms.push(term);
    }
    let combined = scalar_sum(g, &terms)?;
    report.combined = g.value(combined).item();
    Ok((combined, report))
}

/// Mean squared error between predicted and target `r`-space depth maps.
pub fn depth_loss(g: &mut Graph, pred: NodeId, target: NodeId) -> Result<NodeId> {
    if g.value(pred).shape() != g.value(target).shape() {
        return Err(Error::ShapeMismatch {
            op: "depth_loss",
            shapes: vec![g.value(pred).shape().to_vec(), g.value(target).shape().to_vec()],
        });
    }
    let diff = g.sub(pred, target)?;
    let sq = g.square(diff)?;
    g.mean(sq)
}

/// Mean negative log-likelihood of `targets` under softmax over the last
/// axis of `logits`; one target per row.
fn softmax_nll(g: &mut Graph, logits: NodeId, targets: &[usize], op: &'static str) -> Result<NodeId> {
    let shape = g.value(logits).shape().to_vec();
    let k = *shape.last().unwrap_or(&0);
    let rows = g.value(logits).numel() / k.max(1);
    if k == 0 || rows != targets.len() || rows == 0 {
        return Err(Error::ShapeMismatch { op, shapes: vec![shape, vec![targets.len()]] });
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::InvalidArgument(format!("{op}: class id {bad} outside [0, {k})")));
    }
    let mut select = vec![0.0; rows * k];
    let w = -1.0 / rows as f64;
    for (row, &t) in targets.iter().enumerate() {
        select[row * k + t] = w;
    }
    let select = g.constant(Tensor::new(shape, select)?);
    let log_p = g.log_softmax(logits)?;
    let picked = g.mul(log_p, select)?;
    g.sum(picked)
}

/// Pixel-wise softmax cross-entropy; `logits` is `[.., K]` and `mask` holds
/// one class id per pixel in the same row-major order.
pub fn pixelwise_ce_loss(g: &mut Graph, logits: NodeId, mask: &[usize]) -> Result<NodeId> {
    softmax_nll(g, logits, mask, "pixelwise_ce_loss")
}

/// Softmax cross-entropy for `[B, K]` logits, averaged over the batch.
pub fn scalar_ce_loss(g: &mut Graph, logits: NodeId, classes: &[usize]) -> Result<NodeId> {
    softmax_nll(g, logits, classes, "scalar_ce_loss")
}

/// Elementwise squared cyclic time difference; `pred` is wrapped into one day first.
pub fn sctd_graph(g: &mut Graph, target: NodeId, pred: NodeId) -> Result<NodeId> {
    let wrapped = g.wrap(pred, DAY_MINUTES)?;
    let d = g.sub(target, wrapped)?;
    let plus = g.add_scalar(d, DAY_MINUTES)?;
    let minus = g.add_scalar(d, -DAY_MINUTES)?;
    let (d, plus, minus) = (g.square(d)?, g.square(plus)?, g.square(minus)?);
    let m = g.min(d, plus)?;
    g.min(m, minus)
}

/// Batch-mean squared cyclic time difference times `scale`.
pub fn time_loss(g: &mut Graph, pred: NodeId, target_min: &[f64], scale: f64) -> Result<NodeId> {
    let b = target_min.len();
    if b == 0 {
        return Err(Error::InvalidArgument("time_loss: empty batch".into()));
    }
    if g.value(pred).numel() != b {
        return Err(Error::ShapeMismatch { op: "time_loss", shapes: vec![g.value(pred).shape().to_vec(), vec![b]] });
    }
    let pred = g.reshape(pred, &[b])?;
    let wrapped_targets = target_min.iter().map(|t| t.rem_euclid(DAY_MINUTES)).collect();
    let target = g.constant(Tensor::from_vec(wrapped_targets));
    let per_sample = sctd_graph(g, target, pred)?;
    let mean = g.mean(per_sample)?;
    g.mul_scalar(mean, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;

    fn map(pairs: &[(TaskId, f64)]) -> BTreeMap<TaskId, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn depth_transform_reference_points() {
        assert_eq!(depth_target_transform(1.0).unwrap(), 1.0);
        assert_eq!(depth_target_transform(1000.0).unwrap(), 0.0);
        assert!((depth_target_transform(10.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(depth_target_transform(5000.0).unwrap(), 0.0);
        assert_eq!(depth_target_transform(0.2).unwrap(), 1.0);
        assert!(depth_target_transform(0.0).is_err());
        assert!(depth_target_transform(-3.0).is_err());
    }

    #[test]
    fn sctd_reference_points() {
        assert_eq!(sctd(700.0, 700.0), 0.0);
        assert_eq!(sctd(1439.0, 0.0), 1.0);
        assert_eq!(sctd(0.0, 720.0), 518400.0);
        assert_eq!(sctd(0.0, 1439.0 + 1440.0), 1.0);
    }

    #[test]
    fn regularizer_values() {
        assert_eq!(regularizer(0.0, RegularizerKind::Pos).unwrap(), 0.0);
        assert!((regularizer(1.0, RegularizerKind::Pos).unwrap() - 2f64.ln()).abs() < 1e-15);
        let log = regularizer(0.5, RegularizerKind::Log).unwrap();
        let pos = regularizer(0.5, RegularizerKind::Pos).unwrap();
        assert!((log - (-1.3862943611198906)).abs() < 1e-12 && log < 0.0);
        assert!((pos - 0.22314355131420976).abs() < 1e-12 && pos > 0.0);
        assert!(regularizer(0.0, RegularizerKind::Log).is_err());
    }

    #[test]
    fn fixed_combination() {
        assert_eq!(combine_fixed(&map(&[(TaskId::Seg, 3.0)]), &map(&[(TaskId::Seg, 1.0)])).unwrap(), 3.0);
        let raw = map(&[(TaskId::Seg, 1.0), (TaskId::Depth, 2.0)]);
        let c = map(&[(TaskId::Seg, 0.5), (TaskId::Depth, 0.25)]);
        assert_eq!(combine_fixed(&raw, &c).unwrap(), 1.0);
        let zero = map(&[(TaskId::Seg, 0.0), (TaskId::Depth, 0.0)]);
        assert_eq!(combine_fixed(&zero, &c).unwrap(), 0.0);
        assert!(combine_fixed(&raw, &map(&[(TaskId::Seg, 1.0)])).is_err());
    }

    #[test]
    fn learned_combination_reference_values() {
        let w = |c: f64| TaskWeights { c: map(&[(TaskId::Depth, c)]), kind: RegularizerKind::Pos };
        let r = combine_learned(&map(&[(TaskId::Depth, 2.0)]), &w(1.0)).unwrap();
        assert!((r.combined - (1.0 + 2f64.ln())).abs() < 1e-12);
        let r = combine_learned(&map(&[(TaskId::Depth, 0.0)]), &w(1.0)).unwrap();
        assert!((r.combined - 2f64.ln()).abs() < 1e-12);
        let r = combine_learned(&map(&[(TaskId::Depth, 1.0)]), &w(0.25)).unwrap();
        assert!((r.combined - (8.0 + 1.0625f64.ln())).abs() < 1e-12);
        assert!((r.combined - 8.0606).abs() < 1e-4);
    }

    #[test]
    fn learned_combination_guards_small_c() {
        let w = TaskWeights { c: map(&[(TaskId::Seg, 1e-5)]), kind: RegularizerKind::Pos };
        assert!(combine_learned(&map(&[(TaskId::Seg, 1.0)]), &w).is_err());
    }

    #[test]
    fn report_sums_terms() {
        let raw = map(&[(TaskId::Seg, 0.7), (TaskId::Depth, 0.02), (TaskId::Time, 1.3)]);
        let w = TaskWeights::init(TaskSet::new(raw.keys().copied()).unwrap(), RegularizerKind::Log);
        let r = combine_learned(&raw, &w).unwrap();
        let total: f64 = raw.keys().map(|t| r.weighted[t] + r.reg[t]).sum();
        assert!((total - r.combined).abs() < 1e-12);
    }

    #[test]
    fn init_is_inverse_task_count() {
        let w = TaskWeights::init(TaskSet::all(), RegularizerKind::Pos);
        assert!(w.c.values().all(|&c| c == 0.25));
        let w = TaskWeights::init("1,2".parse().unwrap(), RegularizerKind::Pos);
        assert!(w.c.values().all(|&c| c == 0.5));
    }

    fn eval_depth_loss(pred: &[f64], gt: &[f64], shape: &[usize]) -> f64 {
        let mut g = Graph::new();
        let p = g.constant(Tensor::new(shape.to_vec(), pred.to_vec()).unwrap());
        let t = g.constant(Tensor::new(shape.to_vec(), gt.to_vec()).unwrap());
        let l = depth_loss(&mut g, p, t).unwrap();
        g.value(l).item()
    }

    #[test]
    fn depth_loss_values() {
        let gt = [0.2, 0.4, 0.9, 0.5];
        assert_eq!(eval_depth_loss(&gt, &gt, &[2, 2]), 0.0);
        let shifted: Vec<f64> = gt.iter().map(|v| v + 0.1).collect();
        assert!((eval_depth_loss(&shifted, &gt, &[2, 2]) - 0.01).abs() < 1e-12);
        assert_eq!(eval_depth_loss(&[0.0, 1.0], &[1.0, 0.0], &[1, 2]), 1.0);

        let mut g = Graph::new();
        let p = g.constant(Tensor::zeros(&[2, 2]));
        let t = g.constant(Tensor::zeros(&[4]));
        assert!(matches!(depth_loss(&mut g, p, t), Err(Error::ShapeMismatch { .. })));
    }

    fn eval_ce(logits: &[f64], shape: &[usize], targets: &[usize]) -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(shape.to_vec(), logits.to_vec()).unwrap());
        let l = pixelwise_ce_loss(&mut g, x, targets)?;
        Ok(g.value(l).item())
    }

    #[test]
    fn cross_entropy_values() {
        let uniform = eval_ce(&[0.0; 12], &[1, 2, 2, 3], &[0, 1, 2, 0]).unwrap();
        assert!((uniform - 3f64.ln()).abs() < 1e-12);

        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 11]));
        let l = scalar_ce_loss(&mut g, x, &[3, 10]).unwrap();
        assert!((g.value(l).item() - 11f64.ln()).abs() < 1e-12);

        // monotone in the margin of the target logit
        let mut prev = f64::INFINITY;
        for m in [0.0, 1.0, 2.0, 5.0, 10.0, 30.0] {
            let v = eval_ce(&[m, 0.0, 0.0], &[1, 3], &[0]).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-12);

        let a = eval_ce(&[1.0, 0.0, -1.0], &[1, 3], &[2]).unwrap();
        let b = eval_ce(&[0.5, 0.5, 2.0], &[1, 3], &[0]).unwrap();
        let both = eval_ce(&[1.0, 0.0, -1.0, 0.5, 0.5, 2.0], &[2, 3], &[2, 0]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-12);

        let single = eval_ce(&[0.3, 1.0, -0.2], &[1, 3], &[1]).unwrap();
        let pair = eval_ce(&[0.3, 1.0, -0.2, 0.3, 1.0, -0.2], &[2, 3], &[1, 1]).unwrap();
        assert!((single - pair).abs() < 1e-12);

        assert!(eval_ce(&[0.0; 3], &[1, 3], &[3]).is_err());
    }

    fn eval_time(pred: &[f64], gt: &[f64]) -> f64 {
        let mut g = Graph::new();
        let p = g.constant(Tensor::from_vec(pred.to_vec()));
        let l = time_loss(&mut g, p, gt, DEFAULT_TIME_LOSS_SCALE).unwrap();
        g.value(l).item()
    }

    #[test]
    fn time_loss_values() {
        assert_eq!(eval_time(&[10.0, 1000.0], &[10.0, 1000.0]), 0.0);
        assert!((eval_time(&[600.0], &[500.0]) - 0.1).abs() < 1e-12);
        assert!((eval_time(&[0.0, 1.0, 2.0, 3.0], &[0.0, 0.0, 0.0, 0.0]) - 3.5e-5).abs() < 1e-15);
        let mut g = Graph::new();
        let p = g.constant(Tensor::from_vec(vec![]));
        assert!(time_loss(&mut g, p, &[], 1e-5).is_err());
    }

    #[test]
    fn graph_sctd_matches_scalar() {
        let pairs = [(1439.0, 0.0), (0.0, 720.0), (100.0, -50.0), (5.0, 3000.0), (719.5, 1439.9)];
        let mut g = Graph::new();
        let t = g.constant(Tensor::from_vec(pairs.iter().map(|p| p.0).collect()));
        let p = g.constant(Tensor::from_vec(pairs.iter().map(|p| p.1).collect()));
        let s = sctd_graph(&mut g, t, p).unwrap();
        for (i, &(a, b)) in pairs.iter().enumerate() {
            assert!((g.value(s).data()[i] - sctd(a, b)).abs() < 1e-9);
        }
    }

    #[test]
    fn learned_loss_gradient_in_c() {
        let err = grad_check(
            |g, c| {
                let l = g.constant(Tensor::scalar(1.0));
                let raw = [(TaskId::Seg, l)].into_iter().collect();
                let cs = [(TaskId::Seg, c)].into_iter().collect();
                Ok(combine_learned_graph(g, &raw, &cs, RegularizerKind::Pos)?.0)
            },
            &Tensor::scalar(0.7),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn depth_loss_gradient_in_predictions() {
        let gt = Tensor::new(vec![2, 3], vec![0.1, 0.5, 0.9, 1.0, 0.0, 0.33]).unwrap();
        let pred = Tensor::new(vec![2, 3], vec![0.2, 0.45, 0.7, 0.8, 0.1, 0.5]).unwrap();
        let err = grad_check(
            |g, p| {
                let t = g.constant(gt.clone());
                depth_loss(g, p, t)
            },
            &pred,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
