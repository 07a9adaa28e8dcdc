//! Transfer: fine-tune an exported encoder on labeled classification data
//! under a labeling ratio, select the learning rate on validation AUC, and
//! evaluate with rank-based AUC.
//!
//! The fine-tuning input is the low-resolution pipeline the encoder was
//! trained on (no masking, all patches visible); features are the GAP over
//! patch embeddings; the head is a single linear map.

pub mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::config::{FusionMode, ModelConfig};
use crate::nets::forward::{encode_backward, encode_cached, global_pool_backward, global_pool_cached};
use crate::nets::params::{Gradients, ParameterStore, SEC_ENCODER};
use crate::parallel;
use crate::pretrain::checkpoint::{read_container, write_container};
use crate::pretrain::schedule::lr_at;
use crate::record_io::image::{downsample, patchify, Image};
use crate::record_io::synth::synth_generate_labeled;
use crate::rng::{derive_rng, stream};

pub use metrics::{auc, auc_bruteforce, mean_auc, per_class_auc};

const CLASSIFIER_MAGIC: &[u8; 8] = b"MRMCLSF1";

#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub image: Image,
    /// One 0/1 entry per class (one entry for binary tasks).
    pub labels: Vec<f32>,
}

#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl LabeledSet {
    pub fn num_classes(&self) -> usize {
        self.train
            .first()
            .or_else(|| self.val.first())
            .or_else(|| self.test.first())
            .map(|e| e.labels.len())
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let classes = self.num_classes();
        if classes == 0 {
            return Err(Error::Validation("labeled set is empty".into()));
        }
        for split in [&self.train, &self.val, &self.test] {
            for e in split {
                if e.labels.len() != classes {
                    return Err(Error::Validation(format!(
                        "inconsistent class count: {} vs {classes}",
                        e.labels.len()
                    )));
                }
                if e.labels.iter().any(|&l| l != 0.0 && l != 1.0) {
                    return Err(Error::Validation("labels must be 0 or 1".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabeledLine {
    image: String,
    labels: Vec<u8>,
    split: String,
}

/// JSON-lines manifest with "image", "labels" (0/1 array), "split".
pub fn load_labeled_manifest(path: &Path) -> Result<LabeledSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut set = LabeledSet::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: LabeledLine = serde_json::from_str(line).map_err(|e| Error::Record {
            line: i + 1,
            message: format!("malformed entry: {e}"),
        })?;
        let image = crate::record_io::image::load_png(&base.join(&entry.image))
            .map_err(|e| Error::Record { line: i + 1, message: e.to_string() })?;
        let example =
            LabeledExample { image, labels: entry.labels.iter().map(|&l| l as f32).collect() };
        match entry.split.as_str() {
            "train" => set.train.push(example),
            "val" => set.val.push(example),
            "test" => set.test.push(example),
            other => {
                return Err(Error::Record {
                    line: i + 1,
                    message: format!("unknown split {other:?}"),
                })
            }
        }
    }
    set.validate()?;
    Ok(set)
}

/// Synthetic binary disc-vs-rectangle task with disjoint split seeds.
pub fn synth_labeled_set(
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
    image_size: usize,
) -> Result<LabeledSet> {
    let make = |n: usize, salt: u64| -> Result<Vec<LabeledExample>> {
        Ok(synth_generate_labeled(n, seed.wrapping_add(salt), image_size)?
            .into_iter()
            .map(|(image, label)| LabeledExample { image, labels: vec![label as f32] })
            .collect())
    };
    let set = LabeledSet {
        train: make(n_train, 0x74726169)?,
        val: make(n_val, 0x76616c69)?,
        test: make(n_test, 0x74657374)?,
    };
    set.validate()?;
    Ok(set)
}

/// Deterministic uniform subset of the training split.
#[derive(Debug, Clone)]
pub struct Subsample {
    pub indices: Vec<usize>,
    /// Classes left without a single positive example (reported, not fixed).
    pub empty_classes: Vec<usize>,
}

pub fn subsample_labels(
    train: &[LabeledExample],
    ratio: f64,
    seed: u64,
) -> Result<Subsample> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Argument(format!("labeling ratio {ratio} outside (0,1]")));
    }
    let n = train.len();
    let m = (ratio * n as f64 + 0.5).floor() as usize;
    if m == 0 {
        return Err(Error::Argument(format!(
            "labeling ratio {ratio} of {n} examples selects nothing"
        )));
    }
    use rand::Rng;
    let mut rng = derive_rng(seed, &[stream::LABEL_SUBSET]);
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..n.saturating_sub(1) {
        let j = rng.gen_range(i..n);
        order.swap(i, j);
    }
    let mut indices = order[..m].to_vec();
    indices.sort_unstable();

    let classes = train.first().map(|e| e.labels.len()).unwrap_or(0);
    let mut empty_classes = Vec::new();
    for c in 0..classes {
        if !indices.iter().any(|&i| train[i].labels[c] == 1.0) {
            log::warn!("labeling ratio {ratio} left class {c} without positives");
            empty_classes.push(c);
        }
    }
    Ok(Subsample { indices, empty_classes })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub labeling_ratio: f64,
    pub lr_grid: Vec<f64>,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Per-class sigmoid cross-entropy when true (multi-label tasks);
    /// softmax cross-entropy for mutually exclusive tasks.
    pub multi_label: bool,
    pub warmup_epochs: Option<usize>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            labeling_ratio: 1.0,
            lr_grid: vec![3e-2, 3e-3, 5e-4],
            momentum: 0.9,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            multi_label: true,
            warmup_epochs: None,
        }
    }
}

impl FinetuneConfig {
    fn warmup_epochs(&self) -> usize {
        self.warmup_epochs.unwrap_or(self.epochs / 10)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.labeling_ratio > 0.0 && self.labeling_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "labeling ratio {} outside (0,1]",
                self.labeling_ratio
            )));
        }
        if self.lr_grid.is_empty() || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("empty lr grid, epochs, or batch size".into()));
        }
        if self.warmup_epochs() >= self.epochs {
            return Err(Error::Config("warmup must be shorter than fine-tuning".into()));
        }
        Ok(())
    }
}

/// Fine-tuned model: the (fully trainable) encoder plus one linear head.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub encoder: ParameterStore<f32>,
    pub head_weight: Vec<f32>,
    pub head_bias: Vec<f32>,
    pub model: ModelConfig,
    pub multi_label: bool,
}

impl Classifier {
    pub fn num_classes(&self) -> usize {
        self.head_bias.len()
    }

    /// Class scores in [0,1] for one high-resolution source image.
    pub fn score(&self, image: &Image) -> Result<Vec<f64>> {
        let patches = prepare_input(image, &self.model)?;
        let logits = classifier_logits(&patches, &self.encoder, self, &self.model)?;
        Ok(activate(&logits, self.multi_label))
    }
}

fn activate(logits: &[f32], multi_label: bool) -> Vec<f64> {
    if multi_label {
        logits.iter().map(|&z| 1.0 / (1.0 + (-z as f64).exp())).collect()
    } else {
        let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = logits.iter().map(|&z| ((z as f64) - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|e| e / sum).collect()
    }
}

/// Downsample to the encoder's input resolution and patchify; all patches
/// are visible in transfer.
fn prepare_input(image: &Image, model: &ModelConfig) -> Result<Vec<Vec<f32>>> {
    if image.height != 2 * model.image_size || image.width != 2 * model.image_size {
        return Err(Error::Dimension(format!(
            "image {}x{} does not match 2x input size {}",
            image.height,
            image.width,
            2 * model.image_size
        )));
    }
    let low = downsample(image)?;
    patchify(&low, model.patch_size)
}

fn classifier_logits(
    patches: &[Vec<f32>],
    encoder: &ParameterStore<f32>,
    clf: &Classifier,
    model: &ModelConfig,
) -> Result<Vec<f32>> {
    let n = model.num_patches();
    let positions: Vec<usize> = (0..n).collect();
    let (enc_out, _) = encode_cached(patches, &positions, encoder, model)?;
    let (g, _) = global_pool_cached(&enc_out, n, model.encoder_dim, FusionMode::Gap)?;
    let classes = clf.head_bias.len();
    let d = model.encoder_dim;
    let mut logits = clf.head_bias.clone();
    for (c, logit) in logits.iter_mut().enumerate() {
        for j in 0..d {
            *logit += clf.head_weight[c * d + j] * g[j];
        }
    }
    let _ = classes;
    Ok(logits)
}

struct PreparedExample {
    patches: Vec<Vec<f32>>,
    labels: Vec<f32>,
}

fn prepare_split(split: &[LabeledExample], model: &ModelConfig) -> Result<Vec<PreparedExample>> {
    parallel::map_collect(split, |e| {
        Ok(PreparedExample { patches: prepare_input(&e.image, model)?, labels: e.labels.clone() })
    })
    .into_iter()
    .collect()
}

/// Gradient of the mean cross-entropy of one example. Returns (loss,
/// encoder grads, head weight grads, head bias grads).
fn example_grads(
    ex: &PreparedExample,
    params: &ParameterStore<f32>,
    head_w: &[f32],
    head_b: &[f32],
    model: &ModelConfig,
    multi_label: bool,
) -> Result<(f64, Gradients<f32>, Vec<f32>, Vec<f32>)> {
    let n = model.num_patches();
    let d = model.encoder_dim;
    let classes = head_b.len();
    let positions: Vec<usize> = (0..n).collect();
    let (enc_out, enc_cache) = encode_cached(&ex.patches, &positions, params, model)?;
    let (g, pool) = global_pool_cached(&enc_out, n, d, FusionMode::Gap)?;

    let mut logits = head_b.to_vec();
    for c in 0..classes {
        for j in 0..d {
            logits[c] += head_w[c * d + j] * g[j];
        }
    }

    // d loss / d logit and the scalar loss, both per task kind.
    let mut d_logits = vec![0.0f32; classes];
    let mut loss = 0.0f64;
    if multi_label {
        for c in 0..classes {
            let z = logits[c] as f64;
            let y = ex.labels[c] as f64;
            // log(1 + exp(-|z|)) keeps the loss finite for large |z|.
            loss += z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).ln();
            let p = 1.0 / (1.0 + (-z).exp());
            d_logits[c] = (p - y) as f32;
        }
    } else {
        let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = logits.iter().map(|&z| ((z as f64) - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for c in 0..classes {
            let p = exps[c] / sum;
            let y = ex.labels[c] as f64;
            if y == 1.0 {
                loss -= p.ln();
            }
            d_logits[c] = (p - y) as f32;
        }
    }

    let mut d_head_w = vec![0.0f32; classes * d];
    let d_head_b = d_logits.clone();
    let mut d_g = vec![0.0f32; d];
    for c in 0..classes {
        for j in 0..d {
            d_head_w[c * d + j] = d_logits[c] * g[j];
            d_g[j] += d_logits[c] * head_w[c * d + j];
        }
    }

    let mut d_enc_out = vec![0.0f32; n * d];
    global_pool_backward(&d_g, &pool, &mut d_enc_out, d);
    let mut grads = Gradients::zeros_like(params);
    encode_backward(d_enc_out, &enc_cache, params, &mut grads, model);
    Ok((loss, grads, d_head_w, d_head_b))
}

/// Validation log of one learning-rate run.
#[derive(Debug, Clone, Serialize)]
pub struct LrRun {
    pub lr: f64,
    pub val_auc_per_epoch: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

#[derive(Debug)]
pub struct FinetuneOutcome {
    pub classifier: Classifier,
    pub chosen_lr: f64,
    pub val_auc: f64,
    pub runs: Vec<LrRun>,
    pub subset_size: usize,
    pub empty_classes: Vec<usize>,
}

fn mean_val_auc(
    examples: &[PreparedExample],
    params: &ParameterStore<f32>,
    head_w: &[f32],
    head_b: &[f32],
    model: &ModelConfig,
    multi_label: bool,
) -> Result<f64> {
    let scores: Vec<Result<Vec<f64>>> = parallel::map_collect(examples, |ex| {
        let clf_logits = {
            let n = model.num_patches();
            let d = model.encoder_dim;
            let positions: Vec<usize> = (0..n).collect();
            let (enc_out, _) = encode_cached(&ex.patches, &positions, params, model)?;
            let (g, _) = global_pool_cached(&enc_out, n, d, FusionMode::Gap)?;
            let mut logits = head_b.to_vec();
            for (c, logit) in logits.iter_mut().enumerate() {
                for j in 0..d {
                    *logit += head_w[c * d + j] * g[j];
                }
            }
            logits
        };
        Ok(activate(&clf_logits, multi_label))
    });
    let scores: Vec<Vec<f64>> = scores.into_iter().collect::<Result<_>>()?;
    let labels: Vec<Vec<f32>> = examples.iter().map(|e| e.labels.clone()).collect();
    mean_auc(&per_class_auc(&scores, &labels)?)
}

struct LrRunResult {
    run: LrRun,
    best_params: ParameterStore<f32>,
    best_head_w: Vec<f32>,
    best_head_b: Vec<f32>,
}

#[allow(clippy::too_many_arguments)]
fn run_one_lr(
    lr_index: usize,
    lr: f64,
    encoder: &ParameterStore<f32>,
    train: &[PreparedExample],
    subset: &[usize],
    val: &[PreparedExample],
    model: &ModelConfig,
    cfg: &FinetuneConfig,
) -> Result<LrRunResult> {
    let d = model.encoder_dim;
    let classes = train
        .first()
        .map(|e| e.labels.len())
        .ok_or_else(|| Error::Argument("empty training split".into()))?;
    let mut params = encoder.clone();
    let mut head_w = vec![0.0f32; classes * d];
    let mut head_b = vec![0.0f32; classes];
    let mut vel = Gradients::zeros_like(&params);
    let mut vel_w = vec![0.0f32; classes * d];
    let mut vel_b = vec![0.0f32; classes];

    let bpe = (subset.len() as u64).div_ceil(cfg.batch_size as u64);
    let total_steps = cfg.epochs as u64 * bpe;
    let warmup_steps = cfg.warmup_epochs() as u64 * bpe;
    let mu = cfg.momentum as f32;

    let mut best: Option<(f64, usize, ParameterStore<f32>, Vec<f32>, Vec<f32>)> = None;
    let mut val_per_epoch = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        use rand::Rng;
        let mut rng =
            derive_rng(cfg.seed, &[stream::FINETUNE, lr_index as u64, epoch as u64]);
        let mut order: Vec<usize> = subset.to_vec();
        for i in 0..order.len().saturating_sub(1) {
            let j = rng.gen_range(i..order.len());
            order.swap(i, j);
        }

        for batch in order.chunks(cfg.batch_size) {
            let per: Vec<Result<(f64, Gradients<f32>, Vec<f32>, Vec<f32>)>> =
                parallel::map_collect(batch, |&i| {
                    example_grads(&train[i], &params, &head_w, &head_b, model, cfg.multi_label)
                });
            let mut grads = Gradients::zeros_like(&params);
            let mut gw = vec![0.0f32; classes * d];
            let mut gb = vec![0.0f32; classes];
            for item in per {
                let (_, g, w, b) = item?;
                grads.accumulate(&g);
                crate::linalg::add_assign(&mut gw, &w);
                crate::linalg::add_assign(&mut gb, &b);
            }
            let inv = 1.0 / batch.len() as f32;
            grads.scale(inv);
            crate::linalg::scale(&mut gw, inv);
            crate::linalg::scale(&mut gb, inv);

            let lr_t = lr_at(step, total_steps, warmup_steps, lr) as f32;
            for i in 0..params.len() {
                let p = params.at_mut(i);
                let v = vel.slot_mut(i);
                let g = grads.slot(i);
                for j in 0..g.len() {
                    v[j] = mu * v[j] + g[j];
                    p.tensor.data[j] -= lr_t * v[j];
                }
            }
            for j in 0..gw.len() {
                vel_w[j] = mu * vel_w[j] + gw[j];
                head_w[j] -= lr_t * vel_w[j];
            }
            for j in 0..gb.len() {
                vel_b[j] = mu * vel_b[j] + gb[j];
                head_b[j] -= lr_t * vel_b[j];
            }
            step += 1;
        }

        let val_auc = mean_val_auc(val, &params, &head_w, &head_b, model, cfg.multi_label)?;
        val_per_epoch.push(val_auc);
        let improved = best.as_ref().map(|(b, ..)| val_auc > *b).unwrap_or(true);
        if improved {
            best = Some((val_auc, epoch, params.clone(), head_w.clone(), head_b.clone()));
        }
    }

    let (best_val, best_epoch, best_params, best_head_w, best_head_b) =
        best.expect("at least one epoch ran");
    Ok(LrRunResult {
        run: LrRun { lr, val_auc_per_epoch: val_per_epoch, best_epoch, best_val_auc: best_val },
        best_params,
        best_head_w,
        best_head_b,
    })
}

/// End-to-end fine-tuning over the learning-rate grid with per-epoch
/// validation-AUC model selection. All encoder weights are trainable.
pub fn finetune(
    encoder: &ParameterStore<f32>,
    set: &LabeledSet,
    model: &ModelConfig,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    set.validate()?;
    model.validate()?;
    if set.train.is_empty() || set.val.is_empty() {
        return Err(Error::Argument("fine-tuning needs train and val splits".into()));
    }
    if encoder.section(SEC_ENCODER).next().is_none() {
        return Err(Error::Argument("parameter store has no encoder section".into()));
    }
    // Only the encoder transfers; drop any decoder sections a full
    // checkpoint store may carry.
    let mut enc_only = ParameterStore::new();
    for p in encoder.section(SEC_ENCODER) {
        enc_only.insert(&p.name, p.tensor.shape.clone(), p.tensor.data.clone(), p.decay);
    }
    let encoder = &enc_only;

    let train = prepare_split(&set.train, model)?;
    let val = prepare_split(&set.val, model)?;
    let sub = subsample_labels(&set.train, cfg.labeling_ratio, cfg.seed)?;

    let lr_results: Vec<Result<LrRunResult>> = parallel::map_indices(cfg.lr_grid.len(), |i| {
        run_one_lr(i, cfg.lr_grid[i], encoder, &train, &sub.indices, &val, model, cfg)
    });
    let lr_results: Vec<LrRunResult> = lr_results.into_iter().collect::<Result<_>>()?;

    let best_idx = lr_results
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.run.best_val_auc.partial_cmp(&b.1.run.best_val_auc).unwrap())
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let runs: Vec<LrRun> = lr_results.iter().map(|r| r.run.clone()).collect();
    let chosen = &lr_results[best_idx];

    Ok(FinetuneOutcome {
        classifier: Classifier {
            encoder: chosen.best_params.clone(),
            head_weight: chosen.best_head_w.clone(),
            head_bias: chosen.best_head_b.clone(),
            model: model.clone(),
            multi_label: cfg.multi_label,
        },
        chosen_lr: chosen.run.lr,
        val_auc: chosen.run.best_val_auc,
        runs,
        subset_size: sub.indices.len(),
        empty_classes: sub.empty_classes,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalMetrics {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// Rank-based AUC of a classifier over a labeled split.
pub fn evaluate_classifier(clf: &Classifier, examples: &[LabeledExample]) -> Result<EvalMetrics> {
    if examples.is_empty() {
        return Err(Error::Argument("empty evaluation split".into()));
    }
    let scores: Vec<Result<Vec<f64>>> = parallel::map_collect(examples, |e| clf.score(&e.image));
    let scores: Vec<Vec<f64>> = scores.into_iter().collect::<Result<_>>()?;
    let labels: Vec<Vec<f32>> = examples.iter().map(|e| e.labels.clone()).collect();
    let per_class = per_class_auc(&scores, &labels)?;
    let mean = mean_auc(&per_class)?;
    Ok(EvalMetrics { per_class, mean })
}

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    model: ModelConfig,
    config_hash: u64,
    multi_label: bool,
    num_classes: usize,
}

pub fn save_classifier(clf: &Classifier, path: &Path) -> Result<()> {
    let meta = ClassifierMeta {
        model: clf.model.clone(),
        config_hash: clf.model.hash(),
        multi_label: clf.multi_label,
        num_classes: clf.num_classes(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Internal(e.to_string()))?;
    let mut records: Vec<(String, Vec<usize>, Vec<f32>)> = clf
        .encoder
        .iter()
        .map(|p| (p.name.clone(), p.tensor.shape.clone(), p.tensor.data.clone()))
        .collect();
    let d = clf.model.encoder_dim;
    records.push((
        "classifier.head.weight".into(),
        vec![clf.num_classes(), d],
        clf.head_weight.clone(),
    ));
    records.push(("classifier.head.bias".into(), vec![clf.num_classes()], clf.head_bias.clone()));
    write_container(path, CLASSIFIER_MAGIC, &json, &records)
}

pub fn load_classifier(path: &Path) -> Result<Classifier> {
    let (json, records) = read_container(path, CLASSIFIER_MAGIC)?;
    let meta: ClassifierMeta = serde_json::from_slice(&json)
        .map_err(|e| Error::Parse(format!("classifier metadata: {e}")))?;
    if meta.config_hash != meta.model.hash() {
        return Err(Error::Incompatible("classifier config hash mismatch".into()));
    }
    let mut encoder = ParameterStore::new();
    let mut head_weight = None;
    let mut head_bias = None;
    for (name, shape, data) in records {
        match name.as_str() {
            "classifier.head.weight" => head_weight = Some(data),
            "classifier.head.bias" => head_bias = Some(data),
            _ if name.starts_with(SEC_ENCODER) => {
                encoder.insert(&name, shape, data, crate::nets::params::decay_for_name(&name));
            }
            other => {
                return Err(Error::Parse(format!("unexpected classifier record {other}")))
            }
        }
    }
    let head_weight =
        head_weight.ok_or_else(|| Error::Parse("classifier lacks head weights".into()))?;
    let head_bias = head_bias.ok_or_else(|| Error::Parse("classifier lacks head bias".into()))?;
    if head_bias.len() != meta.num_classes {
        return Err(Error::Parse("head shape does not match class count".into()));
    }
    Ok(Classifier {
        encoder,
        head_weight,
        head_bias,
        model: meta.model,
        multi_label: meta.multi_label,
    })
}
