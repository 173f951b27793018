//! Shared convolutional encoder with an atrous pyramid block and one
//! decoder head per active task.
//!
//! Layout of the forward pass for an `H x W` input:
//!
//! ```text
//! input [B,H,W,3]
//!   -> encoder: one 3x3 stride-2 conv + ReLU per stage   [B,H/s,W/s,C]
//!   -> ASPP: parallel dilated 3x3 convs, concat, 1x1 fuse
//!   -> seg:     3x3 conv, 3x3 conv, 1x1 conv, upsample x s      [B,H,W,K]
//!   -> depth:   3x3 conv, 3x3 conv, 1x1 conv, upsample, sigmoid  [B,H,W]
//!   -> weather: 5x5 conv, pool 3/3, 3x3 conv, pool 3/3, 1x1, FC  [B,11]
//!   -> time:    5x5 conv, pool 5/5, 3x3 conv, pool 3/3, 1x1, FC  [B,1]
//! ```
//!
//! Pooling layers pad by `window / 2` so they also apply to the small
//! feature maps used at desk-scale resolution.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Conv2dAttrs, Graph, NodeId, PoolAttrs};
use crate::error::{Error, Result};
use crate::losses::{RegularizerKind, TaskWeights};
use crate::task::{TaskId, TaskSet};
use crate::tensor::Tensor;

/// The time head's linear output is multiplied by this to give minutes.
pub const TIME_OUTPUT_SCALE: f64 = 1440.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    /// Output channels of each stride-2 encoder stage.
    pub encoder_channels: Vec<usize>,
    pub aspp_rates: Vec<usize>,
    pub aspp_channels: usize,
    pub decoder_channels: usize,
    pub output_stride: usize,
    pub n_seg_classes: usize,
    pub n_weather_classes: usize,
    pub task_set: TaskSet,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_h: 48,
            input_w: 64,
            encoder_channels: vec![16, 32, 64, 64],
            aspp_rates: vec![1, 2, 4],
            aspp_channels: 64,
            decoder_channels: 32,
            output_stride: 16,
            n_seg_classes: 3,
            n_weather_classes: 11,
            task_set: TaskSet::all(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.output_stride == 0 || self.input_h % self.output_stride != 0 || self.input_w % self.output_stride != 0 {
            return bad(format!(
                "input {}x{} is not divisible by output stride {}",
                self.input_h, self.input_w, self.output_stride
            ));
        }
        if self.input_h == 0 || self.input_w == 0 {
            return bad("input size must be positive".into());
        }
        let stages = self.encoder_channels.len() as u32;
        if stages == 0 || 1usize.checked_shl(stages) != Some(self.output_stride) {
            return bad(format!(
                "{stages} stride-2 encoder stages give output stride {}, not {}",
                1usize << stages.min(63),
                self.output_stride
            ));
        }
        if self.encoder_channels.iter().any(|&c| c == 0) || self.aspp_channels == 0 || self.decoder_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.aspp_rates.is_empty() || self.aspp_rates.contains(&0) {
            return bad("ASPP needs at least one positive rate".into());
        }
        if self.task_set.contains(TaskId::Seg) && self.n_seg_classes < 2 {
            return bad("segmentation needs at least two classes".into());
        }
        if self.task_set.contains(TaskId::Weather) && self.n_weather_classes != 11 {
            return bad(format!("weather head must have 11 classes, got {}", self.n_weather_classes));
        }
        Ok(())
    }

    /// Spatial size of the shared feature map.
    pub fn feature_size(&self) -> (usize, usize) {
        (self.input_h / self.output_stride, self.input_w / self.output_stride)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: Vec<Param>,
    pub weights: TaskWeights,
    index: HashMap<String, usize>,
}

/// Pooling window and stride of the two pooling layers of a global head.
fn global_head_pools(task: TaskId) -> [usize; 2] {
    match task {
        TaskId::Time => [5, 3],
        _ => [3, 3],
    }
}

fn pool_out(size: usize, window: usize) -> usize {
    let pad = window / 2;
    (size + 2 * pad - window) / window + 1
}

struct Init {
    rng: ChaCha8Rng,
    params: Vec<Param>,
}

impl Init {
    fn tensor(&mut self, name: String, shape: &[usize], std: f64) {
        let value = if std == 0.0 {
            Tensor::zeros(shape)
        } else {
            let normal = Normal::new(0.0, std).expect("positive std");
            let data = (0..shape.iter().product()).map(|_| normal.sample(&mut self.rng)).collect();
            Tensor::new(shape.to_vec(), data).expect("consistent shape")
        };
        self.params.push(Param { name, value });
    }

    /// Kernel with He-normal (ReLU) or unit-gain fan-in scaling, plus zero bias.
    fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize, relu: bool) {
        let fan_in = (k * k * cin) as f64;
        let gain = if relu { 2.0 } else { 1.0 };
        self.tensor(format!("{name}.w"), &[k, k, cin, cout], (gain / fan_in).sqrt());
        self.tensor(format!("{name}.b"), &[cout], 0.0);
    }

    fn linear(&mut self, name: &str, fin: usize, fout: usize) {
        self.tensor(format!("{name}.w"), &[fin, fout], (1.0 / fin as f64).sqrt());
        self.tensor(format!("{name}.b"), &[fout], 0.0);
    }
}

/// Deterministically initialises a model from `seed`.
pub fn build_model(cfg: &ModelConfig, seed: u64, kind: RegularizerKind) -> Result<Model> {
    cfg.validate()?;
    let mut init = Init { rng: ChaCha8Rng::seed_from_u64(seed), params: Vec::new() };

    let mut cin = 3;
    for (i, &c) in cfg.encoder_channels.iter().enumerate() {
        init.conv(&format!("enc.{i}"), 3, cin, c, true);
        cin = c;
    }
    for (i, _) in cfg.aspp_rates.iter().enumerate() {
        init.conv(&format!("aspp.{i}"), 3, cin, cfg.aspp_channels, true);
    }
    init.conv("aspp.fuse", 1, cfg.aspp_channels * cfg.aspp_rates.len(), cfg.aspp_channels, true);

    let feat = cfg.aspp_channels;
    let dc = cfg.decoder_channels;
    let (fh, fw) = cfg.feature_size();
    for task in cfg.task_set.iter() {
        let name = task.name();
        match task {
            TaskId::Seg | TaskId::Depth => {
                let out = if task == TaskId::Seg { cfg.n_seg_classes } else { 1 };
                init.conv(&format!("{name}.conv1"), 3, feat, dc, true);
                init.conv(&format!("{name}.conv2"), 3, dc, dc, true);
                init.conv(&format!("{name}.out"), 1, dc, out, false);
            }
            TaskId::Weather | TaskId::Time => {
                let [p1, p2] = global_head_pools(task);
                let (h, w) = (pool_out(pool_out(fh, p1), p2), pool_out(pool_out(fw, p1), p2));
                let out = if task == TaskId::Weather { cfg.n_weather_classes } else { 1 };
                init.conv(&format!("{name}.conv1"), 5, feat, dc, true);
                init.conv(&format!("{name}.conv2"), 3, dc, dc, true);
                init.conv(&format!("{name}.proj"), 1, dc, dc, false);
                init.linear(&format!("{name}.fc"), h * w * dc, out);
            }
        }
    }
    Ok(Model::from_parts(cfg.clone(), init.params, TaskWeights::init(cfg.task_set, kind)))
}

/// Parameter leaves of one model bound into a graph.
pub struct Bound {
    pub params: Vec<NodeId>,
    pub c: BTreeMap<TaskId, NodeId>,
}

impl Model {
    fn from_parts(cfg: ModelConfig, params: Vec<Param>, weights: TaskWeights) -> Model {
        let index = params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        Model { cfg, params, weights, index }
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Adds every parameter and weighting coefficient to `g` as a leaf.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let params = self.params.iter().map(|p| g.leaf(p.value.clone(), trainable)).collect();
        let c = self.weights.c.iter().map(|(&t, &c)| (t, g.leaf(Tensor::scalar(c), trainable))).collect();
        Bound { params, c }
    }

    fn node(&self, bound: &Bound, name: &str) -> NodeId {
        bound.params[self.index[name]]
    }

    fn conv(&self, g: &mut Graph, b: &Bound, x: NodeId, name: &str, attrs: Conv2dAttrs, relu: bool) -> Result<NodeId> {
        let w = self.node(b, &format!("{name}.w"));
        let bias = self.node(b, &format!("{name}.b"));
        let y = g.conv2d(x, w, bias, attrs)?;
        if relu {
            g.relu(y)
        } else {
            Ok(y)
        }
    }

    /// Shared representation at `1/output_stride` resolution.
    pub fn encode(&self, g: &mut Graph, b: &Bound, input: NodeId) -> Result<NodeId> {
        let shape = g.value(input).shape().to_vec();
        if shape.len() != 4 || shape[1] != self.cfg.input_h || shape[2] != self.cfg.input_w || shape[3] != 3 {
            return Err(Error::ShapeMismatch {
                op: "predict",
                shapes: vec![shape, vec![0, self.cfg.input_h, self.cfg.input_w, 3]],
            });
        }
        let mut x = input;
        for i in 0..self.cfg.encoder_channels.len() {
            let attrs = Conv2dAttrs { stride: 2, padding: 1, dilation: 1 };
            x = self.conv(g, b, x, &format!("enc.{i}"), attrs, true)?;
        }
        let mut branches = Vec::with_capacity(self.cfg.aspp_rates.len());
        for (i, &rate) in self.cfg.aspp_rates.iter().enumerate() {
            let attrs = Conv2dAttrs { stride: 1, padding: rate, dilation: rate };
            branches.push(self.conv(g, b, x, &format!("aspp.{i}"), attrs, true)?);
        }
        let cat = g.concat(&branches, 3)?;
        self.conv(g, b, cat, "aspp.fuse", Conv2dAttrs::same(1), true)
    }

    fn dense_head(&self, g: &mut Graph, b: &Bound, feat: NodeId, task: TaskId) -> Result<NodeId> {
        let name = task.name();
        let x = self.conv(g, b, feat, &format!("{name}.conv1"), Conv2dAttrs::same(3), true)?;
        let x = self.conv(g, b, x, &format!("{name}.conv2"), Conv2dAttrs::same(3), true)?;
        let x = self.conv(g, b, x, &format!("{name}.out"), Conv2dAttrs::same(1), false)?;
        g.upsample(x, self.cfg.output_stride)
    }

    fn global_head(&self, g: &mut Graph, b: &Bound, feat: NodeId, task: TaskId) -> Result<NodeId> {
        let name = task.name();
        let [p1, p2] = global_head_pools(task);
        let pool = |w: usize| PoolAttrs { window: w, stride: w, padding: w / 2 };
        let x = self.conv(g, b, feat, &format!("{name}.conv1"), Conv2dAttrs::same(5), true)?;
        let x = g.max_pool2d(x, pool(p1))?;
        let x = self.conv(g, b, x, &format!("{name}.conv2"), Conv2dAttrs::same(3), true)?;
        let x = g.max_pool2d(x, pool(p2))?;
        let x = self.conv(g, b, x, &format!("{name}.proj"), Conv2dAttrs::same(1), false)?;
        let s = g.value(x).shape().to_vec();
        let flat = g.reshape(x, &[s[0], s[1] * s[2] * s[3]])?;
        let w = self.node(b, &format!("{name}.fc.w"));
        let bias = self.node(b, &format!("{name}.fc.b"));
        g.linear(flat, w, bias)
    }

    /// Builds every active task head on top of the shared encoder.
    ///
    /// Output shapes: seg `[B,H,W,K]` logits, depth `[B,H,W]` in `(0,1)`,
    /// weather `[B,11]` logits, time `[B,1]` minutes.
    pub fn forward(&self, g: &mut Graph, b: &Bound, input: NodeId) -> Result<BTreeMap<TaskId, NodeId>> {
        let feat = self.encode(g, b, input)?;
        let batch = g.value(input).shape()[0];
        let (h, w) = (self.cfg.input_h, self.cfg.input_w);
        let mut out = BTreeMap::new();
        for task in self.cfg.task_set.iter() {
            let node = match task {
                TaskId::Seg => self.dense_head(g, b, feat, task)?,
                TaskId::Depth => {
                    let x = self.dense_head(g, b, feat, task)?;
                    let x = g.sigmoid(x)?;
                    g.reshape(x, &[batch, h, w])?
                }
                TaskId::Weather => self.global_head(g, b, feat, task)?,
                TaskId::Time => {
                    let x = self.global_head(g, b, feat, task)?;
                    g.mul_scalar(x, TIME_OUTPUT_SCALE)?
                }
            };
            out.insert(task, node);
        }
        Ok(out)
    }

    /// Inference on a `[B,H,W,3]` batch.
    pub fn predict(&self, batch: &Tensor) -> Result<BTreeMap<TaskId, Tensor>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let input = g.constant(batch.clone());
        let out = self.forward(&mut g, &bound, input)?;
        Ok(out.into_iter().map(|(t, n)| (t, g.value(n).clone())).collect())
    }

    /// Replaces parameter values and weighting coefficients in place.
    pub fn set_values(&mut self, params: Vec<Tensor>, c: &BTreeMap<TaskId, f64>) {
        debug_assert_eq!(params.len(), self.params.len());
        for (p, v) in self.params.iter_mut().zip(params) {
            p.value = v;
        }
        for (t, v) in c {
            self.weights.c.insert(*t, *v);
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"AMCK";
const CHECKPOINT_VERSION: u32 = 1;

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_blob(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    write_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    write_u32(out, t.rank() as u32);
    for &d in t.shape() {
        write_u32(out, d as u32);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn blob(&mut self) -> Option<(String, Tensor)> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec()).ok()?;
        let rank = self.u32()? as usize;
        let shape = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Option<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let bytes = self.take(numel.checked_mul(8)?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Some((name, Tensor::new(shape, data).ok()?))
    }
}

impl Model {
    /// Serialises the model. Layout (little-endian):
    /// `"AMCK"`, u32 version, u32 config length, config JSON, u32 blob count,
    /// then per blob: u32 name length, UTF-8 name, u32 rank, rank x u32 dims,
    /// f64 payload. Weighting coefficients are stored as rank-0 blobs named
    /// `c.<task>`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        write_u32(&mut out, CHECKPOINT_VERSION);
        let cfg = serde_json::to_vec(&(&self.cfg, self.weights.kind)).expect("config serialises");
        write_u32(&mut out, cfg.len() as u32);
        out.extend_from_slice(&cfg);
        write_u32(&mut out, (self.params.len() + self.weights.c.len()) as u32);
        for p in &self.params {
            write_blob(&mut out, &p.name, &p.value);
        }
        for (t, &c) in &self.weights.c {
            write_blob(&mut out, &format!("c.{}", t.name()), &Tensor::scalar(c));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Model> {
        let fail = |reason: &str| Error::format(path, reason);
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4) != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(fail("bad magic"));
        }
        match r.u32() {
            Some(CHECKPOINT_VERSION) => {}
            Some(v) => return Err(fail(&format!("unsupported version {v}"))),
            None => return Err(fail("truncated header")),
        }
        let cfg_len = r.u32().ok_or_else(|| fail("truncated header"))? as usize;
        let cfg_bytes = r.take(cfg_len).ok_or_else(|| fail("truncated config"))?;
        let (cfg, kind): (ModelConfig, RegularizerKind) =
            serde_json::from_slice(cfg_bytes).map_err(|e| fail(&format!("config: {e}")))?;
        let count = r.u32().ok_or_else(|| fail("truncated header"))?;
        let mut blobs = Vec::new();
        for _ in 0..count {
            blobs.push(r.blob().ok_or_else(|| fail("truncated blob"))?);
        }
        if r.pos != bytes.len() {
            return Err(fail("trailing bytes"));
        }

        let template = build_model(&cfg, 0, kind)?;
        let mut values: HashMap<String, Tensor> = blobs.into_iter().collect();
        let mut params = Vec::with_capacity(template.params.len());
        for p in &template.params {
            let v = values.remove(&p.name).ok_or_else(|| fail(&format!("missing parameter {}", p.name)))?;
            if v.shape() != p.value.shape() {
                return Err(fail(&format!("parameter {} has shape {:?}", p.name, v.shape())));
            }
            params.push(Param { name: p.name.clone(), value: v });
        }
        let mut weights = template.weights.clone();
        for (t, c) in weights.c.iter_mut() {
            let v = values.remove(&format!("c.{}", t.name())).ok_or_else(|| fail("missing weighting coefficient"))?;
            *c = v.item();
        }
        if let Some(extra) = values.keys().next() {
            return Err(fail(&format!("unexpected blob {extra}")));
        }
        Ok(Model::from_parts(cfg, params, weights))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let mut bytes = Vec::new();
        std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
        Model::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tasks: &str) -> ModelConfig {
        ModelConfig { task_set: tasks.parse().unwrap(), ..ModelConfig::default() }
    }

    #[test]
    fn coefficients_start_at_inverse_task_count() {
        let m = build_model(&cfg("1,2,3,4"), 1, RegularizerKind::Pos).unwrap();
        assert!(m.weights.c.values().all(|&c| c == 0.25));
        let m = build_model(&cfg("1,2"), 1, RegularizerKind::Pos).unwrap();
        assert_eq!(m.weights.c.len(), 2);
        assert!(m.weights.c.values().all(|&c| c == 0.5));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_model(&cfg("1,2,3,4"), 9, RegularizerKind::Pos).unwrap();
        let b = build_model(&cfg("1,2,3,4"), 9, RegularizerKind::Pos).unwrap();
        let c = build_model(&cfg("1,2,3,4"), 10, RegularizerKind::Pos).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn absent_tasks_have_no_parameters() {
        let m = build_model(&cfg("2"), 1, RegularizerKind::Pos).unwrap();
        assert!(m.params.iter().all(|p| !p.name.starts_with("seg") && !p.name.starts_with("time")));
        assert!(m.param("depth.out.w").is_some());
    }

    #[test]
    fn rejects_indivisible_input() {
        let mut c = cfg("1");
        c.input_w = 60;
        assert!(build_model(&c, 0, RegularizerKind::Pos).is_err());
        let mut c = cfg("1");
        c.encoder_channels = vec![8, 8, 8];
        assert!(build_model(&c, 0, RegularizerKind::Pos).is_err());
        let mut c = cfg("4");
        c.n_weather_classes = 10;
        assert!(build_model(&c, 0, RegularizerKind::Pos).is_err());
    }

    #[test]
    fn output_shapes_for_all_tasks() {
        let mut c = cfg("1,2,3,4");
        c.input_h = 64;
        c.input_w = 48;
        let m = build_model(&c, 3, RegularizerKind::Pos).unwrap();
        let x = Tensor::full(&[4, 64, 48, 3], 0.5);
        let out = m.predict(&x).unwrap();
        assert_eq!(out[&TaskId::Seg].shape(), &[4, 64, 48, 3]);
        assert_eq!(out[&TaskId::Depth].shape(), &[4, 64, 48]);
        assert_eq!(out[&TaskId::Weather].shape(), &[4, 11]);
        assert_eq!(out[&TaskId::Time].shape(), &[4, 1]);
        assert!(out[&TaskId::Depth].data().iter().all(|&d| d > 0.0 && d < 1.0));
    }

    #[test]
    fn single_task_single_output() {
        let m = build_model(&cfg("2"), 3, RegularizerKind::Pos).unwrap();
        let out = m.predict(&Tensor::full(&[1, 48, 64, 3], 0.2)).unwrap();
        assert_eq!(out.keys().copied().collect::<Vec<_>>(), vec![TaskId::Depth]);
    }

    #[test]
    fn encoder_reaches_output_stride() {
        let m = build_model(&cfg("1"), 3, RegularizerKind::Pos).unwrap();
        let mut g = Graph::new();
        let b = m.bind(&mut g, false);
        let x = g.constant(Tensor::full(&[2, 48, 64, 3], 0.1));
        let feat = m.encode(&mut g, &b, x).unwrap();
        assert_eq!(g.value(feat).shape(), &[2, 3, 4, 64]);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let m = build_model(&cfg("1"), 3, RegularizerKind::Pos).unwrap();
        assert!(matches!(m.predict(&Tensor::zeros(&[1, 32, 64, 3])), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = build_model(&cfg("1,3"), 5, RegularizerKind::Log).unwrap();
        m.weights.c.insert(TaskId::Time, -1.75);
        let bytes = m.to_bytes();
        let back = Model::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, m);
        assert!(Model::from_bytes(&bytes[..bytes.len() - 3], Path::new("mem")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Model::from_bytes(&bad, Path::new("mem")).is_err());
    }
}
