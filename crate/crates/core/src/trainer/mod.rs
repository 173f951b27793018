//! Adam training of the multi-task model, snapshot evaluation and the
//! task-set comparison matrix.

mod adam;
mod data;
mod history;
mod matrix;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use data::{batch_indices, Batch, Dataset};
pub use history::{StepRecord, TrainHistory, ALL_TASKS, HISTORY_HEADER};
pub use matrix::{curve_file, results_table, run_matrix, MatrixRow, RESULTS_HEADER};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{backward, Graph, NodeId};
use crate::error::{Error, Result};
use crate::losses::{
    combine_fixed_graph, combine_learned_graph, depth_loss, pixelwise_ce_loss, scalar_ce_loss, time_loss,
    RegularizerKind, DEFAULT_TIME_LOSS_SCALE,
};
use crate::metrics::{accuracy, depth_rmse, miou_over, rmsctd, MetricRecord};
use crate::model::{build_model, Model, ModelConfig};
use crate::task::{TaskId, TaskSet};
use crate::tensor::Tensor;

/// How task losses are combined into the optimised objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingMode {
    /// The raw loss of the only task.
    Single,
    /// `Σ c_τ L_τ` with constant coefficients.
    Fixed,
    /// `Σ L_τ / (2c_τ²) + R(c_τ)` with `c` trained alongside the network.
    Learned,
}

impl std::str::FromStr for WeightingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "fixed" => Ok(Self::Fixed),
            "learned" => Ok(Self::Learned),
            _ => Err(Error::InvalidArgument(format!("unknown weighting mode {s:?} (single, fixed, learned)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub lr: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub snapshot_every: usize,
    pub regularizer: RegularizerKind,
    pub mode: WeightingMode,
    pub seed: u64,
    /// Learning rate of the coefficients; `lr` when unset.
    pub c_lr: Option<f64>,
    /// Clamp each coefficient into `[lo, hi]` after every update.
    pub c_clamp: Option<[f64; 2]>,
    /// Coefficients of fixed weighting; tasks not listed get 1.
    pub fixed_coeffs: BTreeMap<TaskId, f64>,
    pub time_loss_scale: f64,
    /// Whether the background class counts towards MIoU.
    pub miou_include_background: bool,
    pub eval_batch_size: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 1e-3,
            batch_size: 4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 2000,
            snapshot_every: 100,
            regularizer: RegularizerKind::Pos,
            mode: WeightingMode::Learned,
            seed: 0,
            c_lr: None,
            c_clamp: None,
            fixed_coeffs: BTreeMap::new(),
            time_loss_scale: DEFAULT_TIME_LOSS_SCALE,
            miou_include_background: true,
            eval_batch_size: 16,
        }
    }
}

impl Hyperparams {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn adam_c(&self) -> AdamConfig {
        AdamConfig { lr: self.c_lr.unwrap_or(self.lr), ..self.adam() }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        self.adam_c().validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1".into());
        }
        if let Some([lo, hi]) = self.c_clamp {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("invalid coefficient clamp [{lo}, {hi}]"));
            }
        }
        if !(self.time_loss_scale > 0.0 && self.time_loss_scale.is_finite()) {
            return bad("time_loss_scale must be positive".into());
        }
        if self.fixed_coeffs.values().any(|c| !c.is_finite()) {
            return bad("fixed coefficients must be finite".into());
        }
        Ok(())
    }

    fn fixed_coeffs_for(&self, tasks: TaskSet) -> BTreeMap<TaskId, f64> {
        tasks.iter().map(|t| (t, self.fixed_coeffs.get(&t).copied().unwrap_or(1.0))).collect()
    }
}

/// One training run: which tasks, how to optimise, and the network shape.
/// `model.task_set` is overridden by `task_set`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task_set: TaskSet,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub model: ModelConfig,
}

impl ExperimentSpec {
    pub fn new(task_set: TaskSet, hyper: Hyperparams, model: ModelConfig) -> Self {
        ExperimentSpec { task_set, hyper, model }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { task_set: self.task_set, ..self.model.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.model_config().validate()?;
        if self.hyper.mode == WeightingMode::Single && self.task_set.len() != 1 {
            return Err(Error::InvalidConfig(format!(
                "single-task weighting needs exactly one task, got {}",
                self.task_set
            )));
        }
        Ok(())
    }
}

/// Unweighted per-task losses of one batch.
pub fn task_losses(
    g: &mut Graph,
    outputs: &BTreeMap<TaskId, NodeId>,
    batch: &Batch,
    time_loss_scale: f64,
) -> Result<BTreeMap<TaskId, NodeId>> {
    let mut raw = BTreeMap::new();
    for (&task, &out) in outputs {
        let loss = match task {
            TaskId::Seg => pixelwise_ce_loss(g, out, &batch.mask)?,
            TaskId::Depth => {
                let target = g.constant(batch.depth_r.clone());
                depth_loss(g, out, target)?
            }
            TaskId::Time => time_loss(g, out, &batch.time_min, time_loss_scale)?,
            TaskId::Weather => scalar_ce_loss(g, out, &batch.weather)?,
        };
        raw.insert(task, loss);
    }
    Ok(raw)
}

fn argmax_rows(values: &[f64], k: usize) -> impl Iterator<Item = usize> + '_ {
    values.chunks_exact(k).map(|row| {
        let mut best = 0;
        for (i, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = i;
            }
        }
        best
    })
}

/// Metrics of `model` on every sample of `data`.
pub fn evaluate(model: &Model, data: &Dataset, hyper: &Hyperparams) -> Result<MetricRecord> {
    let tasks = model.cfg.task_set;
    let mut seg_pred = Vec::new();
    let mut seg_gt = Vec::new();
    let mut depth_pred = Vec::new();
    let mut depth_gt = Vec::new();
    let mut time_pred = Vec::new();
    let mut time_gt = Vec::new();
    let mut weather_pred = Vec::new();
    let mut weather_gt = Vec::new();
    let positions: Vec<usize> = (0..data.len()).collect();
    for chunk in positions.chunks(hyper.eval_batch_size) {
        let batch = data.batch(chunk)?;
        let out = model.predict(&batch.input)?;
        for (task, y) in out {
            match task {
                TaskId::Seg => {
                    seg_pred.extend(argmax_rows(y.data(), model.cfg.n_seg_classes));
                    seg_gt.extend_from_slice(&batch.mask);
                }
                TaskId::Depth => {
                    depth_pred.extend_from_slice(y.data());
                    depth_gt.extend_from_slice(batch.depth_r.data());
                }
                TaskId::Time => {
                    time_pred.extend_from_slice(y.data());
                    time_gt.extend_from_slice(&batch.time_min);
                }
                TaskId::Weather => {
                    weather_pred.extend(argmax_rows(y.data(), model.cfg.n_weather_classes));
                    weather_gt.extend_from_slice(&batch.weather);
                }
            }
        }
    }
    let mut rec = MetricRecord::default();
    for task in tasks.iter() {
        let v = match task {
            TaskId::Seg => {
                let k = model.cfg.n_seg_classes;
                let first = if hyper.miou_include_background { 0 } else { 1 };
                let classes: Vec<usize> = (first..k).collect();
                miou_over(&seg_pred, &seg_gt, k, &classes)?
            }
            TaskId::Depth => depth_rmse(&depth_pred, &depth_gt)?,
            TaskId::Time => rmsctd(&time_gt, &time_pred)?,
            TaskId::Weather => accuracy(&weather_pred, &weather_gt)?,
        };
        rec.set(task, v);
    }
    Ok(rec)
}

fn diverged(iteration: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(_) | Error::InvalidArgument(_) => Error::Diverged { iteration, reason: e.to_string() },
        other => other,
    }
}

/// Trains one experiment from scratch. Deterministic in `spec`, `train`
/// and `test`.
pub fn train(spec: &ExperimentSpec, train: &Dataset, test: &Dataset) -> Result<(TrainHistory, Model)> {
    spec.validate()?;
    let cfg = spec.model_config();
    let hyper = &spec.hyper;
    for (name, d) in [("train", train), ("test", test)] {
        if d.is_empty() {
            return Err(Error::InvalidArgument(format!("{name} dataset is empty")));
        }
        if (d.height, d.width) != (cfg.input_h, cfg.input_w) {
            return Err(Error::InvalidConfig(format!(
                "{name} images are {}x{} but the model expects {}x{}",
                d.height, d.width, cfg.input_h, cfg.input_w
            )));
        }
    }
    let mut model = build_model(&cfg, hyper.seed, hyper.regularizer)?;
    let learned = hyper.mode == WeightingMode::Learned;
    let fixed = hyper.fixed_coeffs_for(spec.task_set);
    let (adam_theta, adam_c) = (hyper.adam(), hyper.adam_c());

    let mut params: Vec<Tensor> = model.params.iter().map(|p| p.value.clone()).collect();
    let mut theta_state = AdamState::new(&params);
    let mut c: Vec<Tensor> = model.weights.c.values().map(|&v| Tensor::scalar(v)).collect();
    let mut c_state = AdamState::new(&c);

    let mut history = TrainHistory::new(spec.task_set);
    if learned {
        history.initial_c = model.weights.c.clone();
    }
    history.snapshots.push(evaluate(&model, test, hyper)?);

    for it in 1..=hyper.max_iters {
        let idx = batch_indices(hyper.seed, it, train.len(), hyper.batch_size);
        let batch = train.batch(&idx)?;
        let mut g = Graph::new();
        let bound = model.bind(&mut g, true);
        let input = g.constant(batch.input.clone());
        let step = (|| {
            let outputs = model.forward(&mut g, &bound, input)?;
            let raw = task_losses(&mut g, &outputs, &batch, hyper.time_loss_scale)?;
            let (loss, report) = match hyper.mode {
                WeightingMode::Single => {
                    let (&task, &node) = raw.iter().next().expect("one task");
                    let v = g.value(node).item();
                    let report = crate::losses::LossReport {
                        raw: [(task, v)].into(),
                        weighted: [(task, v)].into(),
                        reg: BTreeMap::new(),
                        combined: v,
                    };
                    (node, report)
                }
                WeightingMode::Fixed => combine_fixed_graph(&mut g, &raw, &fixed)?,
                WeightingMode::Learned => combine_learned_graph(&mut g, &raw, &bound.c, hyper.regularizer)?,
            };
            if !report.combined.is_finite() {
                return Err(Error::NonFinite(format!("combined loss {}", report.combined)));
            }
            let grads = backward(&g, loss)?;
            Ok((report, grads))
        })();
        let (report, grads) = step.map_err(|e| diverged(it, e))?;

        let theta_grads: Vec<Tensor> = bound.params.iter().map(|&p| grads.get_or_zeros(&g, p)).collect();
        adam_step(&mut params, &theta_grads, &mut theta_state, &adam_theta).map_err(|e| diverged(it, e))?;
        if learned {
            let c_grads: Vec<Tensor> = bound.c.values().map(|&n| grads.get_or_zeros(&g, n)).collect();
            adam_step(&mut c, &c_grads, &mut c_state, &adam_c).map_err(|e| diverged(it, e))?;
            if let Some([lo, hi]) = hyper.c_clamp {
                for t in &mut c {
                    t.data_mut()[0] = t.item().clamp(lo, hi);
                }
            }
        }
        let c_map: BTreeMap<TaskId, f64> = model.weights.c.keys().zip(&c).map(|(&t, v)| (t, v.item())).collect();
        if let Some((t, v)) = c_map.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Diverged { iteration: it, reason: format!("coefficient of {t} became {v}") });
        }
        model.set_values(params.clone(), &c_map);

        history.steps.push(StepRecord {
            iteration: it,
            combined: report.combined,
            raw: report.raw,
            weighted: report.weighted,
            c: if learned { c_map } else { BTreeMap::new() },
        });
        if it % hyper.snapshot_every == 0 || it == hyper.max_iters {
            let rec = evaluate(&model, test, hyper).map_err(|e| diverged(it, e))?;
            history.snapshots.push(MetricRecord { iteration: it, ..rec });
        }
    }
    Ok((history, model))
}

/// Adam on the coefficients alone against constant task losses, as when
/// the network is frozen. Returns the coefficient values after `iters` steps.
pub fn fit_coefficients(
    raw: &BTreeMap<TaskId, f64>,
    init: &BTreeMap<TaskId, f64>,
    kind: RegularizerKind,
    adam: &AdamConfig,
    iters: usize,
) -> Result<BTreeMap<TaskId, f64>> {
    let mut c: Vec<Tensor> = init.values().map(|&v| Tensor::scalar(v)).collect();
    let mut state = AdamState::new(&c);
    for _ in 0..iters {
        let mut g = Graph::new();
        let losses = raw.iter().map(|(&t, &l)| (t, g.constant(Tensor::scalar(l)))).collect();
        let nodes: BTreeMap<TaskId, NodeId> = init.keys().zip(&c).map(|(&t, v)| (t, g.param(v.clone()))).collect();
        let (loss, _) = combine_learned_graph(&mut g, &losses, &nodes, kind)?;
        let grads = backward(&g, loss)?;
        let gc: Vec<Tensor> = nodes.values().map(|&n| grads.get_or_zeros(&g, n)).collect();
        adam_step(&mut c, &gc, &mut state, adam)?;
    }
    Ok(init.keys().zip(&c).map(|(&t, v)| (t, v.item())).collect())
}
