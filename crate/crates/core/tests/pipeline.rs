//! Dataset generation through training at toy scale.

use auxmtl_core::model::ModelConfig;
use auxmtl_core::scenegen::{
    generate_dataset, load_manifest, read_sample, spatial_split, LabelDistribution, SplitSpec,
};
use auxmtl_core::trainer::{train, Dataset, ExperimentSpec, Hyperparams};
use auxmtl_core::TaskId;

fn tiny_dist() -> LabelDistribution {
    LabelDistribution { image_h: 16, image_w: 16, ..LabelDistribution::default() }
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        input_h: 16,
        input_w: 16,
        encoder_channels: vec![4, 4],
        aspp_rates: vec![1, 2],
        aspp_channels: 4,
        decoder_channels: 4,
        output_stride: 4,
        ..ModelConfig::default()
    }
}

#[test]
fn generated_samples_are_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(20, 4, &tiny_dist(), dir.path()).unwrap();
    assert_eq!(load_manifest(dir.path()).unwrap(), manifest);
    for entry in &manifest.entries {
        let s = read_sample(&dir.path().join(&entry.file)).unwrap();
        assert_eq!(s.image.len(), 16 * 16 * 3);
        assert!(s.image.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(s.depth_m.iter().all(|&d| d > 0.0));
        assert!(s.mask.iter().all(|&m| m < 3));
        assert!((0.0..1440.0).contains(&s.time_min));
        assert!(s.weather < 11);
        assert_eq!(s.time_min, entry.time_min);
        assert_eq!(s.world_pos, entry.world_pos);
    }
}

#[test]
fn split_then_train_reduces_loss() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(40, 9, &tiny_dist(), dir.path()).unwrap();
    let spec = SplitSpec { bin_size_m: 400.0, n_test_bins: 2, buffer_m: 10.0, rng_seed: 1 };
    let split = spatial_split(&manifest, &spec).unwrap();
    assert_eq!(split.train.len() + split.test.len() + split.buffer.len(), 40);
    let train_set = Dataset::load(dir.path(), Some(&split.train)).unwrap();
    let test_set = Dataset::load(dir.path(), Some(&split.test)).unwrap();

    let hyper = Hyperparams { lr: 3e-3, max_iters: 40, snapshot_every: 20, batch_size: 4, ..Hyperparams::default() };
    let spec = ExperimentSpec::new("1,2".parse().unwrap(), hyper, tiny_model());
    let (history, model) = train(&spec, &train_set, &test_set).unwrap();
    assert_eq!(history.steps.len(), 40);
    let first = history.steps.first().unwrap().combined;
    let last = history.steps.last().unwrap().combined;
    assert!(last < first, "{first} -> {last}");
    let snapshot = history.last_snapshot().unwrap();
    assert_eq!(snapshot.iteration, 40);
    assert!(snapshot.get(TaskId::Seg).is_some() && snapshot.get(TaskId::Depth).is_some());
    assert!(snapshot.get(TaskId::Time).is_none());
    assert_eq!(model.weights.c.len(), 2);
}
