//! Test-set evaluation metrics, one per task.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::sctd;
use crate::task::{TaskId, TaskSet};

/// Metrics at one evaluation snapshot. A field is present exactly when its
/// task is part of the experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub miou: Option<f64>,
    pub depth_rmse_r: Option<f64>,
    pub rmsctd_min: Option<f64>,
    pub weather_acc: Option<f64>,
}

impl MetricRecord {
    pub fn get(&self, task: TaskId) -> Option<f64> {
        match task {
            TaskId::Seg => self.miou,
            TaskId::Depth => self.depth_rmse_r,
            TaskId::Time => self.rmsctd_min,
            TaskId::Weather => self.weather_acc,
        }
    }

    pub fn set(&mut self, task: TaskId, value: f64) {
        let slot = match task {
            TaskId::Seg => &mut self.miou,
            TaskId::Depth => &mut self.depth_rmse_r,
            TaskId::Time => &mut self.rmsctd_min,
            TaskId::Weather => &mut self.weather_acc,
        };
        *slot = Some(value);
    }

    pub fn tasks(&self) -> TaskSet {
        TaskSet::new(TaskId::ALL.into_iter().filter(|&t| self.get(t).is_some())).unwrap_or_else(|_| TaskSet::all())
    }
}

fn check_lengths(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a == 0 || b == 0 {
        return Err(Error::InvalidArgument(format!("{op}: empty input")));
    }
    if a != b {
        return Err(Error::ShapeMismatch { op, shapes: vec![vec![a], vec![b]] });
    }
    Ok(())
}

/// Mean intersection-over-union over the classes in `0..k` that occur in
/// either mask. Classes absent from both are skipped.
pub fn miou(pred: &[usize], gt: &[usize], k: usize) -> Result<f64> {
    let classes: Vec<usize> = (0..k).collect();
    miou_over(pred, gt, k, &classes)
}

/// [`miou`] restricted to `classes`.
pub fn miou_over(pred: &[usize], gt: &[usize], k: usize, classes: &[usize]) -> Result<f64> {
    check_lengths("miou", pred.len(), gt.len())?;
    let mut inter = vec![0u64; k];
    let mut union = vec![0u64; k];
    for (&p, &g) in pred.iter().zip(gt) {
        if p >= k || g >= k {
            return Err(Error::InvalidArgument(format!("miou: class id outside [0, {k})")));
        }
        if p == g {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[g] += 1;
        }
    }
    let ious: Vec<f64> =
        classes.iter().filter(|&&c| c < k && union[c] > 0).map(|&c| inter[c] as f64 / union[c] as f64).collect();
    if ious.is_empty() {
        return Err(Error::InvalidArgument("miou: no scored class present".into()));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Root mean squared error in `r`-space.
pub fn depth_rmse(pred_r: &[f64], gt_r: &[f64]) -> Result<f64> {
    check_lengths("depth_rmse", pred_r.len(), gt_r.len())?;
    let sse: f64 = pred_r.iter().zip(gt_r).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok((sse / pred_r.len() as f64).sqrt())
}

/// Root mean squared cyclic time difference, in minutes.
pub fn rmsctd(t_gt: &[f64], t_pred: &[f64]) -> Result<f64> {
    check_lengths("rmsctd", t_gt.len(), t_pred.len())?;
    let total: f64 = t_gt.iter().zip(t_pred).map(|(&t, &p)| sctd(t, p)).sum();
    Ok((total / t_gt.len() as f64).sqrt())
}

pub fn accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    check_lengths("accuracy", pred.len(), gt.len())?;
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn miou_examples() {
        let gt = [0, 0, 1, 1];
        assert_eq!(miou(&gt, &gt, 3).unwrap(), 1.0);
        let pred = [0, 1, 1, 1];
        assert!((miou(&pred, &gt, 2).unwrap() - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!(miou(&[1, 1], &[0, 0], 2).unwrap(), 0.0);
        assert!(miou(&[], &[], 2).is_err());
        assert!(miou(&[3], &[0], 3).is_err());
    }

    #[test]
    fn miou_can_exclude_background() {
        let gt = [0, 0, 1, 2];
        let pred = [0, 1, 1, 2];
        let all = miou(&pred, &gt, 3).unwrap();
        let objects = miou_over(&pred, &gt, 3, &[1, 2]).unwrap();
        assert!((all - (0.5 + 0.5 + 1.0) / 3.0).abs() < 1e-15);
        assert!((objects - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(depth_rmse(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
        assert!((depth_rmse(&[0.4, 0.6], &[0.3, 0.5]).unwrap() - 0.1).abs() < 1e-12);
        assert!((depth_rmse(&[0.3, 0.4], &[0.0, 0.0]).unwrap() - 0.125f64.sqrt()).abs() < 1e-15);
        assert!(depth_rmse(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn rmsctd_examples() {
        assert_eq!(rmsctd(&[5.0, 700.0], &[5.0, 700.0]).unwrap(), 0.0);
        assert_eq!(rmsctd(&[1439.0], &[0.0]).unwrap(), 1.0);
        assert!((rmsctd(&[10.0, 20.0], &[13.0, 16.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmsctd(&[], &[]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2], &[2, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn record_tracks_presence() {
        let mut r = MetricRecord::default();
        r.set(TaskId::Seg, 0.5);
        r.set(TaskId::Depth, 0.1);
        assert_eq!(r.tasks(), "1,2".parse().unwrap());
        assert_eq!(r.get(TaskId::Time), None);
    }
}
