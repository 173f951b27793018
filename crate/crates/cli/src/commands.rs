use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use auxmtl_core::losses::RegularizerKind;
use auxmtl_core::model::ModelConfig;
use auxmtl_core::scenegen::{
    generate_dataset, load_manifest, manifest_hash, spatial_split, LabelDistribution, SplitSpec,
};
use auxmtl_core::trainer::{
    curve_file, results_table, run_matrix, train as train_experiment, Dataset, ExperimentSpec, Hyperparams,
    TrainHistory, WeightingMode,
};
use auxmtl_core::TaskSet;

use crate::config::{
    default_seed, read_json, write_json, DataConfig, GenerateConfig, MatrixConfig, SplitFile, TrainConfig, CONFIG_FILE,
};
use crate::{CliError, GenerateArgs, MatrixArgs, ModeArg, RegArg, ReportArgs, RunArgs, SplitArgs, TrainArgs};

pub const HISTORY_FILE: &str = "history.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const SUMMARY_FILE: &str = "summary.csv";

type CliResult = Result<(), CliError>;

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Absolute form of `p` when it exists, so saved configs work from any directory.
fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

pub fn generate(a: GenerateArgs) -> CliResult {
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let dist: LabelDistribution = match &a.dist {
        Some(p) => read_json(p)?,
        None => LabelDistribution::default(),
    };
    dist.validate()?;
    let cfg = GenerateConfig { n: a.n, seed: a.seed.map_or_else(default_seed, Ok)?, dist };
    let manifest = generate_dataset(cfg.n, cfg.seed, &cfg.dist, &a.out)?;
    write_json(&a.out.join(CONFIG_FILE), &cfg)?;
    let hash = manifest_hash(&a.out)?;
    eprintln!("wrote {} samples to {} (manifest sha256 {hash})", manifest.len(), a.out.display());
    Ok(())
}

pub fn split(a: SplitArgs) -> CliResult {
    let spec = SplitSpec {
        bin_size_m: a.bin,
        n_test_bins: a.test_bins,
        buffer_m: a.buffer,
        rng_seed: a.seed.map_or_else(default_seed, Ok)?,
    };
    spec.validate()?;
    let manifest = load_manifest(&a.data)?;
    let s = spatial_split(&manifest, &spec)?;
    let out = a.out.unwrap_or_else(|| a.data.join("split.json"));
    let file = SplitFile { data: absolute(&a.data), spec, train: s.train, test: s.test, buffer: s.buffer };
    write_json(&out, &file)?;
    eprintln!(
        "split {} samples: {} train, {} test, {} buffer -> {}",
        manifest.len(),
        file.train.len(),
        file.test.len(),
        file.buffer.len(),
        out.display()
    );
    Ok(())
}

fn mode(m: ModeArg) -> WeightingMode {
    match m {
        ModeArg::Single => WeightingMode::Single,
        ModeArg::Fixed => WeightingMode::Fixed,
        ModeArg::Learned => WeightingMode::Learned,
    }
}

fn reg(r: RegArg) -> RegularizerKind {
    match r {
        RegArg::Log => RegularizerKind::Log,
        RegArg::Pos => RegularizerKind::Pos,
    }
}

/// Applies the command-line overrides of `run` to `data` and `hyper`.
fn apply_overrides(run: &RunArgs, data: &mut Option<DataConfig>, hyper: &mut Hyperparams) -> CliResult {
    if let Some(d) = &run.data {
        let cfg = data.get_or_insert_with(|| DataConfig { data: d.clone(), test_data: None, split: None });
        cfg.data = d.clone();
    }
    let Some(cfg) = data.as_mut() else {
        return Err(CliError::Usage("--data is required (or a --config naming it)".into()));
    };
    if run.test_data.is_some() {
        cfg.test_data = run.test_data.clone();
        cfg.split = None;
    }
    if run.split.is_some() {
        cfg.split = run.split.clone();
        cfg.test_data = None;
    }
    match (&cfg.test_data, &cfg.split) {
        (None, None) => return Err(CliError::Usage("one of --test-data or --split is required".into())),
        (Some(_), Some(_)) => return Err(CliError::Usage("--test-data and --split are exclusive".into())),
        _ => {}
    }
    cfg.data = absolute(&cfg.data);
    cfg.test_data = cfg.test_data.as_deref().map(absolute);
    cfg.split = cfg.split.as_deref().map(absolute);

    if let Some(m) = run.mode {
        hyper.mode = mode(m);
    }
    if let Some(r) = run.reg {
        hyper.regularizer = reg(r);
    }
    if let Some(v) = run.iters {
        hyper.max_iters = v;
    }
    if let Some(v) = run.lr {
        hyper.lr = v;
    }
    if let Some(v) = run.c_lr {
        hyper.c_lr = Some(v);
    }
    if let Some(v) = run.batch {
        hyper.batch_size = v;
    }
    if let Some(v) = run.snapshot_every {
        hyper.snapshot_every = v;
    }
    if let Some(v) = run.seed {
        hyper.seed = v;
    }
    Ok(())
}

fn load_data(cfg: &DataConfig) -> anyhow::Result<(Dataset, Dataset)> {
    if let Some(split) = &cfg.split {
        let file: SplitFile = serde_json::from_str(
            &fs::read_to_string(split).with_context(|| format!("reading split file {}", split.display()))?,
        )
        .with_context(|| format!("parsing split file {}", split.display()))?;
        let train = Dataset::load(&cfg.data, Some(&file.train))?;
        let test = Dataset::load(&cfg.data, Some(&file.test))?;
        Ok((train, test))
    } else {
        let test_dir = cfg.test_data.as_ref().expect("validated data config");
        Ok((Dataset::load(&cfg.data, None)?, Dataset::load(test_dir, None)?))
    }
}

/// Model input size follows the images.
fn fit_model_to_data(model: &mut ModelConfig, data: &Dataset) {
    model.input_h = data.height;
    model.input_w = data.width;
}

fn write_run_outputs(dir: &Path, history: &TrainHistory, model: &auxmtl_core::model::Model) -> anyhow::Result<()> {
    history.save_csv(&dir.join(HISTORY_FILE))?;
    model.save(&dir.join(CHECKPOINT_FILE))?;
    Ok(())
}

pub fn train(a: TrainArgs) -> CliResult {
    let (mut data, mut spec) = match &a.run.config {
        Some(p) => {
            let cfg: TrainConfig = read_json(p)?;
            (Some(cfg.data), cfg.experiment)
        }
        None => {
            let Some(tasks) = a.tasks else {
                return Err(CliError::Usage("--tasks is required (or a --config naming them)".into()));
            };
            let hyper = Hyperparams { seed: default_seed()?, ..Hyperparams::default() };
            (None, ExperimentSpec::new(tasks, hyper, ModelConfig::default()))
        }
    };
    if let Some(t) = a.tasks {
        spec.task_set = t;
    }
    apply_overrides(&a.run, &mut data, &mut spec.hyper)?;
    let data = data.expect("checked by apply_overrides");
    spec.validate()?;

    let (train_data, test_data) = load_data(&data)?;
    fit_model_to_data(&mut spec.model, &train_data);
    spec.model.task_set = spec.task_set;
    let out = &a.run.out;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), &TrainConfig { data, experiment: spec.clone() })?;

    eprintln!("training {} for {} iterations on {} samples", spec.task_set, spec.hyper.max_iters, train_data.len());
    let (history, model) = train_experiment(&spec, &train_data, &test_data)?;
    write_run_outputs(out, &history, &model)?;
    let table = results_table(&[(spec.task_set, history.last_snapshot())]);
    fs::write(out.join(RESULTS_FILE), &table).context("writing results table")?;
    print!("{table}");
    Ok(())
}

pub fn matrix(a: MatrixArgs) -> CliResult {
    let (mut data, mut cfg) = match &a.run.config {
        Some(p) => {
            let cfg: MatrixConfig = read_json(p)?;
            (Some(cfg.data.clone()), cfg)
        }
        None => {
            let hyper = Hyperparams { seed: default_seed()?, ..Hyperparams::default() };
            let placeholder = DataConfig { data: PathBuf::new(), test_data: None, split: None };
            let cfg = MatrixConfig {
                data: placeholder,
                task_sets: TaskSet::MATRIX.to_vec(),
                hyper,
                model: ModelConfig::default(),
            };
            (None, cfg)
        }
    };
    apply_overrides(&a.run, &mut data, &mut cfg.hyper)?;
    cfg.data = data.expect("checked by apply_overrides");
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    if cfg.task_sets.is_empty() {
        return Err(CliError::Usage("the matrix has no task sets".into()));
    }
    for &set in &cfg.task_sets {
        ExperimentSpec::new(set, cfg.hyper.clone(), cfg.model.clone()).validate()?;
    }

    let (train_data, test_data) = load_data(&cfg.data)?;
    fit_model_to_data(&mut cfg.model, &train_data);
    let out = &a.run.out;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), &cfg)?;

    eprintln!("running {} experiments with {} worker(s)", cfg.task_sets.len(), a.jobs);
    let rows = run_matrix(&cfg.hyper, &cfg.model, &cfg.task_sets, &train_data, &test_data, a.jobs)?;
    let mut table_rows = Vec::with_capacity(rows.len());
    let mut failures = Vec::new();
    for row in &rows {
        let dir = out.join(row.task_set.label());
        create_dir(&dir)?;
        let mut spec = row.spec.clone();
        spec.model.task_set = spec.task_set;
        write_json(&dir.join(CONFIG_FILE), &TrainConfig { data: cfg.data.clone(), experiment: spec })?;
        match &row.result {
            Ok((history, model)) => {
                write_run_outputs(&dir, history, model)?;
                table_rows.push((row.task_set, history.last_snapshot()));
            }
            Err(e) => {
                eprintln!("experiment {} failed: {e}", row.task_set);
                failures.push(row.task_set.label());
                table_rows.push((row.task_set, None));
            }
        }
    }
    let table = results_table(&table_rows);
    fs::write(out.join(RESULTS_FILE), &table).context("writing results table")?;
    print!("{table}");
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow::anyhow!("{} experiment(s) failed: {}", failures.len(), failures.join(", "))))
    }
}

/// History files under `path`: the file itself, or `history.csv` in the
/// directory and in each of its immediate subdirectories.
fn find_histories(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    anyhow::ensure!(path.is_dir(), "{} does not exist", path.display());
    let mut found = Vec::new();
    if path.join(HISTORY_FILE).is_file() {
        found.push(path.join(HISTORY_FILE));
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(HISTORY_FILE).is_file())
        .collect();
    subdirs.sort();
    found.extend(subdirs.into_iter().map(|d| d.join(HISTORY_FILE)));
    anyhow::ensure!(!found.is_empty(), "no {HISTORY_FILE} found under {}", path.display());
    Ok(found)
}

pub fn report(a: ReportArgs) -> CliResult {
    let mut histories = Vec::new();
    for path in find_histories(&a.history)? {
        let h = TrainHistory::load_csv(&path)?;
        if histories.iter().any(|o: &TrainHistory| o.task_set == h.task_set) {
            return Err(CliError::Runtime(anyhow::anyhow!(
                "two histories for task set {} (second: {})",
                h.task_set,
                path.display()
            )));
        }
        histories.push(h);
    }
    let rank = |s: TaskSet| TaskSet::MATRIX.iter().position(|&m| m == s).unwrap_or(usize::MAX);
    histories.sort_by_key(|h| (rank(h.task_set), h.task_set.label()));
    create_dir(&a.out)?;
    for h in &histories {
        let path = a.out.join(format!("{}.dat", h.task_set.label()));
        fs::write(&path, curve_file(h)).with_context(|| format!("writing {}", path.display()))?;
    }
    let rows: Vec<_> = histories.iter().map(|h| (h.task_set, h.last_snapshot())).collect();
    let table = results_table(&rows);
    fs::write(a.out.join(SUMMARY_FILE), &table).context("writing summary table")?;
    print!("{table}");
    eprintln!("wrote {} curve file(s) to {}", histories.len(), a.out.display());
    Ok(())
}
