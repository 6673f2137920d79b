//! Dataset pipeline, learning-rate schedule, training loop and checkpoints.
//!
//! Patches are cut once per run (non-overlapping HR tiles by default) and kept
//! in memory; each epoch visits them in an order drawn from `(seed, epoch)`.
//! Convolutions reduce in a fixed order, so a run is bit-reproducible at any
//! thread count; `single_threaded` additionally pins the work to one thread.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use crate::error::{ensure, Error, Result};
use crate::imageops::{
    bicubic_resize, extract_patches, load_rgb, rgb_to_ycbcr, PatchPair, Plane, PATCH_SIZE,
};
use crate::model::{
    backward, forward_cached, index_records, init_params, params_from_records, params_to_bytes,
    read_records, write_records, ModelParams, NetworkConfig,
};
use crate::tensor::{mse_loss, mse_loss_backward, AdamState, Tensor};

/// Name of the optional file listing dataset images, one relative path per line.
pub const MANIFEST_NAME: &str = "manifest.txt";

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub scale: usize,
    pub batch_size: usize,
    /// LR patch side.
    pub patch_size: usize,
    pub lr_initial: f64,
    pub lr_halving_per_epoch: bool,
    /// Training stops at the first epoch whose rate is strictly below this.
    pub lr_stop: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub dataset_root: PathBuf,
    pub checkpoint_dir: Option<PathBuf>,
    /// Distance between patch origins in HR pixels; `None` tiles without overlap.
    pub stride: Option<usize>,
    /// Run exactly this many epochs instead of following `lr_stop`.
    pub max_epochs: Option<u64>,
    pub single_threaded: bool,
}

impl TrainConfig {
    pub fn new(scale: usize, dataset_root: impl Into<PathBuf>) -> Self {
        Self {
            scale,
            batch_size: 20,
            patch_size: PATCH_SIZE,
            lr_initial: 2e-3,
            lr_halving_per_epoch: true,
            lr_stop: 2e-5,
            beta1: crate::tensor::adam::DEFAULT_BETA1,
            beta2: crate::tensor::adam::DEFAULT_BETA2,
            epsilon: crate::tensor::adam::DEFAULT_EPSILON,
            seed: 0,
            dataset_root: dataset_root.into(),
            checkpoint_dir: None,
            stride: None,
            max_epochs: None,
            single_threaded: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        NetworkConfig::new(self.scale).map_err(|e| Error::Config(e.to_string()))?;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.into()))
            }
        };
        check(self.batch_size >= 1, "batch size must be at least 1")?;
        check(self.patch_size >= 3, "patch size must be at least 3")?;
        check(self.stride != Some(0), "stride must be positive")?;
        check(
            self.lr_initial.is_finite() && self.lr_initial > 0.0,
            "initial learning rate must be positive",
        )?;
        check(
            self.lr_stop < self.lr_initial,
            "lr_stop must be below lr_initial",
        )?;
        check(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
            "Adam betas must lie in [0, 1)",
        )?;
        check(
            self.lr_halving_per_epoch || self.max_epochs.is_some(),
            "a constant learning rate never reaches lr_stop; set max_epochs",
        )
    }

    pub fn hr_stride(&self) -> usize {
        self.stride.unwrap_or(self.patch_size * self.scale)
    }
}

/// `lr_initial / 2^epoch` with halving, otherwise constant.
pub fn lr_at_epoch(config: &TrainConfig, epoch: u64) -> f64 {
    if config.lr_halving_per_epoch {
        config.lr_initial / 2f64.powi(epoch.min(i32::MAX as u64) as i32)
    } else {
        config.lr_initial
    }
}

/// Number of epochs the schedule runs before the rate drops below `lr_stop`.
pub fn scheduled_epochs(config: &TrainConfig) -> u64 {
    if let Some(n) = config.max_epochs {
        return n;
    }
    (0..)
        .find(|&e| lr_at_epoch(config, e) < config.lr_stop)
        .unwrap_or(0)
}

/// A stacked mini-batch, with the bicubic base the residual is added to.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub lr: Tensor,
    pub edge: Tensor,
    pub hr: Tensor,
    pub base: Tensor,
}

impl Batch {
    pub fn from_pairs(pairs: &[&PatchPair]) -> Result<Self> {
        ensure(!pairs.is_empty(), || {
            "batch needs at least one patch".into()
        })?;
        let bases = pairs
            .iter()
            .map(|p| bicubic_base(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lr: Tensor::stack(&pairs.iter().map(|p| p.lr_patch.clone()).collect::<Vec<_>>())?,
            edge: Tensor::stack(
                &pairs
                    .iter()
                    .map(|p| p.edge_patch.clone())
                    .collect::<Vec<_>>(),
            )?,
            hr: Tensor::stack(&pairs.iter().map(|p| p.hr_patch.clone()).collect::<Vec<_>>())?,
            base: Tensor::stack(&bases)?,
        })
    }

    pub fn len(&self) -> usize {
        self.lr.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn bicubic_base(p: &PatchPair) -> Result<Tensor> {
    let lr = Plane::from_tensor(&p.lr_patch, 0)?;
    let [_, _, h, w] = p.hr_patch.shape();
    Ok(bicubic_resize(&lr, w, h)?.to_tensor())
}

/// In-memory training patches for one run.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub patches: Vec<PatchPair>,
    pub images_loaded: usize,
    /// Files that could not be decoded.
    pub images_skipped: usize,
}

impl Dataset {
    pub fn from_patches(patches: Vec<PatchPair>) -> Self {
        Self {
            patches,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.patches.len() / batch_size.max(1)
    }

    /// Patch indices for `epoch`, shuffled from `(seed, epoch)`, cut into full
    /// batches. The trailing partial batch is dropped.
    pub fn epoch_order(&self, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.patches.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
        order
            .chunks_exact(batch_size.max(1))
            .map(<[usize]>::to_vec)
            .collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let pairs: Vec<&PatchPair> = indices.iter().map(|&i| &self.patches[i]).collect();
        Batch::from_pairs(&pairs)
    }
}

/// Image files under `root`: the manifest if present, otherwise every
/// PNG/JPEG found recursively, sorted by path.
pub fn list_images(root: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(root)?;
    let manifest = root.join(MANIFEST_NAME);
    if manifest.is_file() {
        let text = fs::read_to_string(&manifest)?;
        return Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| root.join(l))
            .collect());
    }
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .follow_links(true)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn ensure_dir(root: &Path) -> Result<()> {
    if root.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "dataset directory {} does not exist",
            root.display()
        )))
    }
}

/// Load every image under `config.dataset_root`, convert to luma and tile it
/// into patches. Undecodable files are skipped and counted.
pub fn build_dataset(config: &TrainConfig) -> Result<Dataset> {
    let files = list_images(&config.dataset_root)?;
    let stride = config.hr_stride();
    let per_file: Vec<Option<Vec<PatchPair>>> = files
        .par_iter()
        .map(|path| {
            let luma = load_rgb(path)
                .and_then(|rgb| rgb_to_ycbcr(&rgb))
                .map(|img| img.y);
            match luma {
                Ok(y) => extract_patches(&y, config.scale, config.patch_size, stride).ok(),
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    None
                }
            }
        })
        .collect();
    let mut ds = Dataset::default();
    for item in per_file {
        match item {
            Some(p) => {
                ds.images_loaded += 1;
                ds.patches.extend(p);
            }
            None => ds.images_skipped += 1,
        }
    }
    log::info!(
        "dataset: {} images, {} skipped, {} patches",
        ds.images_loaded,
        ds.images_skipped,
        ds.patches.len()
    );
    Ok(ds)
}

/// One optimisation step on `batch`; returns the loss before the update.
///
/// The prediction is the network residual plus the bicubic base, unclamped.
/// On a non-finite loss or gradient nothing is updated and the error carries
/// `step`.
pub fn train_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    batch: &Batch,
    lr: f64,
    step: u64,
) -> Result<f64> {
    let acts = forward_cached(params, &batch.lr, &batch.edge)?;
    let pred = acts.output.add(&batch.base)?;
    let loss = mse_loss(&pred, &batch.hr)?;
    if !loss.is_finite() {
        return Err(Error::Numerical {
            step,
            message: format!("loss is {loss}"),
        });
    }
    let grads = backward(params, &acts, &mse_loss_backward(&pred, &batch.hr)?)?;
    params.zero_grads();
    grads.apply_to(params)?;
    adam.step_tensors(&mut params.tensors_mut(), lr)
        .map_err(|e| match e {
            Error::Numerical { message, .. } => Error::Numerical { step, message },
            other => other,
        })?;
    Ok(loss)
}

/// Loss of the current parameters on `batch` without updating anything.
pub fn batch_loss(params: &ModelParams, batch: &Batch) -> Result<f64> {
    let out = crate::model::forward(params, &batch.lr, &batch.edge)?;
    mse_loss(&out.add(&batch.base)?, &batch.hr)
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed optimisation steps.
    pub step: u64,
    /// Mean training loss over the last completed epoch.
    pub loss: f64,
}

/// Scalars in the state file are single-element `f32` records, exact for
/// integers below this bound.
const MAX_EXACT_COUNTER: u64 = 1 << 24;

impl Checkpoint {
    pub fn new(params: ModelParams, config: &TrainConfig) -> Self {
        let adam = AdamState::with_hyper(
            &params.tensor_lengths(),
            config.beta1,
            config.beta2,
            config.epsilon,
        );
        Self {
            params,
            adam,
            epoch: 0,
            step: 0,
            loss: f64::NAN,
        }
    }

    /// `epoch-NNN.tsrm` (model) and `epoch-NNN.state` in `dir`.
    pub fn paths(dir: &Path, epoch: u64) -> (PathBuf, PathBuf) {
        (
            dir.join(format!("epoch-{epoch:03}.tsrm")),
            dir.join(format!("epoch-{epoch:03}.state")),
        )
    }

    /// State file path next to a model file.
    pub fn state_path(model_path: &Path) -> PathBuf {
        model_path.with_extension("state")
    }

    pub fn state_bytes(&self) -> Result<Vec<u8>> {
        for (name, v) in [
            ("step", self.step),
            ("epoch", self.epoch),
            ("adam.step", self.adam.step_count),
        ] {
            ensure(v < MAX_EXACT_COUNTER, || {
                format!("{name} counter {v} too large for the state file")
            })?;
        }
        let scalar = |v: f32| Tensor::full([1, 1, 1, 1], v);
        let mut owned: Vec<(String, Tensor)> = Vec::new();
        let named = self.params.named_tensors();
        for (i, (name, t)) in named.iter().enumerate() {
            owned.push((
                format!("m.{name}"),
                Tensor::from_vec(t.shape(), self.adam.first_moment[i].clone())?,
            ));
            owned.push((
                format!("v.{name}"),
                Tensor::from_vec(t.shape(), self.adam.second_moment[i].clone())?,
            ));
        }
        owned.push(("step".into(), scalar(self.step as f32)));
        owned.push(("epoch".into(), scalar(self.epoch as f32)));
        owned.push(("adam.step".into(), scalar(self.adam.step_count as f32)));
        owned.push(("loss".into(), scalar(self.loss as f32)));
        let records: Vec<(&str, &Tensor)> = owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
        write_records(self.params.config.scale, &records)
    }

    /// Write model and state files for this checkpoint into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let (model, state) = Self::paths(dir, self.epoch);
        fs::write(&model, params_to_bytes(&self.params)?)?;
        fs::write(&state, self.state_bytes()?)?;
        Ok((model, state))
    }

    /// Load from a model file and its adjacent state file. Adam
    /// hyper-parameters come from `config`; they are not stored.
    pub fn load(model_path: &Path, config: &TrainConfig) -> Result<Self> {
        let (_, scale, records) = read_records(&fs::read(model_path)?)?;
        let params = params_from_records(scale, records)?;
        let (_, state_scale, records) = read_records(&fs::read(Self::state_path(model_path))?)?;
        if state_scale != scale {
            return Err(Error::Format(format!(
                "state file scale {state_scale} differs from model scale {scale}"
            )));
        }
        let mut map = index_records(records)?;
        let mut take = |name: &str, shape: [usize; 4]| -> Result<Tensor> {
            let t = map
                .remove(name)
                .ok_or_else(|| Error::Format(format!("state file is missing {name}")))?;
            if t.shape() != shape {
                return Err(Error::Format(format!(
                    "state record {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t)
        };
        let mut ckpt = Self::new(params.clone(), config);
        for (i, (name, t)) in params.named_tensors().iter().enumerate() {
            ckpt.adam.first_moment[i] = take(&format!("m.{name}"), t.shape())?.into_data();
            ckpt.adam.second_moment[i] = take(&format!("v.{name}"), t.shape())?.into_data();
        }
        let mut counter = |name: &str| -> Result<u64> {
            let v = take(name, [1, 1, 1, 1])?.data()[0];
            if v.is_finite() && v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(Error::Format(format!(
                    "state record {name} is not a counter: {v}"
                )))
            }
        };
        ckpt.step = counter("step")?;
        ckpt.epoch = counter("epoch")?;
        ckpt.adam.step_count = counter("adam.step")?;
        ckpt.loss = f64::from(take("loss", [1, 1, 1, 1])?.data()[0]);
        if let Some(extra) = map.keys().next() {
            return Err(Error::Format(format!("unexpected state record {extra}")));
        }
        Ok(ckpt)
    }
}

/// One line of the per-epoch metrics log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSummary {
    /// 0-based index of the epoch just finished.
    pub epoch: u64,
    pub lr: f64,
    pub mean_loss: f64,
    pub batches: usize,
    pub steps_total: u64,
    pub elapsed_s: f64,
}

/// Name of the JSON-lines log written next to the checkpoints.
pub const METRICS_LOG: &str = "metrics.jsonl";

/// Train on patches from `config.dataset_root` starting from seeded He
/// initialisation.
pub fn train(config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    let dataset = build_dataset(config)?;
    let params = init_params(NetworkConfig::new(config.scale)?, config.seed)?;
    train_with(config, &dataset, Checkpoint::new(params, config), |s| {
        log::info!("epoch {} lr {:.3e} loss {:.6e}", s.epoch, s.lr, s.mean_loss)
    })
}

/// Continue from `start` (a fresh or loaded checkpoint) until the schedule
/// ends, calling `on_epoch` after each epoch.
pub fn train_with(
    config: &TrainConfig,
    dataset: &Dataset,
    start: Checkpoint,
    on_epoch: impl FnMut(&EpochSummary) + Send,
) -> Result<Checkpoint> {
    config.validate()?;
    if dataset.batches_per_epoch(config.batch_size) == 0 {
        return Err(Error::Config(format!(
            "dataset has {} patches, fewer than one batch of {}",
            dataset.len(),
            config.batch_size
        )));
    }
    ensure(start.params.config.scale == config.scale, || {
        format!(
            "checkpoint scale {} does not match configured scale {}",
            start.params.config.scale, config.scale
        )
    })?;
    if config.single_threaded {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| run_epochs(config, dataset, start, on_epoch))
    } else {
        run_epochs(config, dataset, start, on_epoch)
    }
}

fn run_epochs(
    config: &TrainConfig,
    dataset: &Dataset,
    mut ckpt: Checkpoint,
    mut on_epoch: impl FnMut(&EpochSummary),
) -> Result<Checkpoint> {
    let total = scheduled_epochs(config);
    let mut log_file = match &config.checkpoint_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(
                fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join(METRICS_LOG))?,
            )
        }
        None => None,
    };
    while ckpt.epoch < total {
        let started = std::time::Instant::now();
        let lr = lr_at_epoch(config, ckpt.epoch);
        let order = dataset.epoch_order(config.batch_size, config.seed, ckpt.epoch);
        let mut sum = 0.0;
        for indices in &order {
            let batch = dataset.batch(indices)?;
            sum += train_step(&mut ckpt.params, &mut ckpt.adam, &batch, lr, ckpt.step)?;
            ckpt.step += 1;
        }
        if !ckpt.params.is_finite() {
            return Err(Error::Numerical {
                step: ckpt.step,
                message: format!("non-finite parameter after epoch {}", ckpt.epoch),
            });
        }
        let summary = EpochSummary {
            epoch: ckpt.epoch,
            lr,
            mean_loss: sum / order.len() as f64,
            batches: order.len(),
            steps_total: ckpt.step,
            elapsed_s: started.elapsed().as_secs_f64(),
        };
        ckpt.epoch += 1;
        ckpt.loss = summary.mean_loss;
        if let Some(dir) = &config.checkpoint_dir {
            ckpt.save(dir)?;
        }
        if let Some(f) = log_file.as_mut() {
            let line = serde_json::to_string(&summary).expect("summary serialises");
            writeln!(f, "{line}")?;
        }
        on_epoch(&summary);
    }
    Ok(ckpt)
}
