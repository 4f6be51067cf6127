//! Training loop, rectangle-metric evaluation, threshold and top-k sweeps,
//! and k-fold cross-validation.

mod report;

pub use report::{ReportRecord, config_checksum, format_loss_history, records_to_jsonl};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AugmentParams, Sample, SplitMode, augment_sample, split_folds};
use crate::error::{Error, Result};
use crate::grasp::{
    DEFAULT_HEIGHT_RATIO, DEFAULT_JACCARD_THRESHOLD, GraspMapSet, LossWeights, PixelGrasp,
    decode_best_grasp, decode_top_k, default_width_max, pixel_grasp_to_rectangle,
    rectangle_metric_match,
};
use crate::model::{GraspFcn, GraspFcnConfig};
use crate::tensor::{AdamConfig, MapPlanes, Mode, Tensor, adam_step, weighted_mse_loss};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss_weights: LossWeights,
    pub folds: usize,
    pub split: SplitMode,
    pub seed: u64,
    /// Width normalizer in pixels; `None` scales 150 px at 400 px input.
    pub width_max: Option<f64>,
    /// Fresh random crop / zoom / rotation of every sample every epoch.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 0.001,
            loss_weights: LossWeights::default(),
            folds: 5,
            split: SplitMode::ImageWise,
            seed: 0,
            width_max: None,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn width_max_for(&self, input_size: usize) -> f64 {
        self.width_max.unwrap_or_else(|| default_width_max(input_size))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("train", "batch size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("train", format!("learning rate {} must be positive", self.lr)));
        }
        if self.folds == 0 {
            return Err(Error::invalid("train", "folds must be positive"));
        }
        if let Some(w) = self.width_max.filter(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("train", format!("width_max {w} must be positive")));
        }
        let w = self.loss_weights;
        if [w.lambda_q, w.lambda_phi, w.lambda_w].iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::invalid("train", "loss weights must be positive"));
        }
        Ok(())
    }
}

/// Reported after every epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochProgress {
    pub epoch: usize,
    pub epochs: usize,
    pub mean_loss: f64,
}

/// Brings a sample to `size × size`: unchanged when it already fits, centre
/// cropped when larger.
pub fn fit_sample(s: &Sample, size: usize) -> Result<Sample> {
    if s.depth.height == size && s.depth.width == size {
        return Ok(s.clone());
    }
    if s.depth.height < size || s.depth.width < size {
        return Err(Error::ShapeMismatch {
            op: "fit_sample",
            dim: if s.depth.height < size { "height" } else { "width" },
            expected: size,
            found: s.depth.height.min(s.depth.width),
        });
    }
    augment_sample(s, &AugmentParams::identity(), size)
}

fn input_batch(samples: &[&Sample], size: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(samples.len() * size * size);
    for s in samples {
        if s.depth.height != size || s.depth.width != size {
            return Err(Error::ShapeMismatch {
                op: "input_batch",
                dim: "height",
                expected: size,
                found: s.depth.height,
            });
        }
        data.extend(s.depth.normalized::<f32>());
    }
    Tensor::new([samples.len(), 1, size, size], data)
}

/// Trains `net` in place and returns the mean training loss of every epoch.
///
/// Epoch `e` shuffles with a generator seeded by `(cfg.seed, e)`; the same
/// generator draws each sample's augmentation. When an augmentation drops
/// every rectangle, the sample is used with a centre crop instead.
pub fn train(
    net: &mut GraspFcn<f32>,
    samples: &[Sample],
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&EpochProgress),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("train", "empty training set"));
    }
    let size = net.config().input_size;
    let width_max = cfg.width_max_for(size);
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut count) = (0.0f64, 0usize);
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &samples[i];
                let aug_seed: u64 = rng.random();
                let prepared = if cfg.augment {
                    let p = AugmentParams::draw(aug_seed, s.depth.height, s.depth.width, size);
                    augment_sample(s, &p, size).or_else(|_| fit_sample(s, size))
                } else {
                    fit_sample(s, size)
                };
                batch.push(prepared.map_err(|e| e.in_file(&s.id))?);
            }
            let refs: Vec<&Sample> = batch.iter().collect();
            let x = input_batch(&refs, size)?;
            let maps: Vec<GraspMapSet> = batch
                .iter()
                .map(|s| GraspMapSet::from_rects(size, size, &s.rects, width_max))
                .collect();
            let target: MapPlanes<f32> = GraspMapSet::stack(&maps)?;
            net.zero_grad();
            let trace = net.forward(&x, Mode::Train)?;
            let (loss, grad) = weighted_mse_loss(&trace.output, &target, &cfg.loss_weights)?;
            let loss = loss as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            net.backward(&trace, &grad)?;
            for p in net.parameters_mut() {
                adam_step(p, &adam)?;
            }
            loss_sum += loss * chunk.len() as f64;
            count += chunk.len();
        }
        let mean_loss = loss_sum / count as f64;
        history.push(mean_loss);
        progress(&EpochProgress {
            epoch: epoch + 1,
            epochs: cfg.epochs,
            mean_loss,
        });
    }
    Ok(history)
}

/// `Eval`-mode grasp maps of one sample and the wall-clock time of its
/// forward pass.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub sample: Sample,
    pub maps: GraspMapSet,
    pub inference_ms: f64,
}

/// Runs the network once per sample (batch of one, for per-image timing).
pub fn predict(net: &GraspFcn<f32>, samples: &[Sample]) -> Result<Vec<Prediction>> {
    let size = net.config().input_size;
    samples
        .iter()
        .map(|s| {
            let sample = fit_sample(s, size).map_err(|e| e.in_file(&s.id))?;
            let x = input_batch(&[&sample], size)?;
            let start = Instant::now();
            let out = net.infer(&x)?;
            let inference_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(Prediction {
                maps: GraspMapSet::from_planes(&out, 0)?,
                sample,
                inference_ms,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Fraction of samples whose best grasp passes the rectangle metric.
    pub accuracy: f64,
    pub per_fold: Vec<f64>,
    pub jaccard_threshold: f64,
    pub mean_inference_ms: f64,
    pub n_test: usize,
    /// Per-sample pass / fail, in input order.
    pub passed: Vec<bool>,
}

fn best_grasps(preds: &[Prediction], width_max: f64) -> Result<Vec<PixelGrasp>> {
    preds.iter().map(|p| decode_best_grasp(&p.maps, width_max)).collect()
}

fn score(
    preds: &[Prediction],
    grasps: &[PixelGrasp],
    threshold: f64,
) -> Result<EvalReport> {
    let passed = preds
        .iter()
        .zip(grasps)
        .map(|(p, g)| {
            if p.sample.rects.is_empty() {
                return Ok(false);
            }
            let rect = pixel_grasp_to_rectangle(g, DEFAULT_HEIGHT_RATIO)?;
            rectangle_metric_match(&rect, &p.sample.rects, threshold)
        })
        .collect::<Result<Vec<bool>>>()?;
    let n = passed.len();
    let accuracy = passed.iter().filter(|&&b| b).count() as f64 / n as f64;
    Ok(EvalReport {
        accuracy,
        per_fold: Vec::new(),
        jaccard_threshold: threshold,
        mean_inference_ms: preds.iter().map(|p| p.inference_ms).sum::<f64>() / n as f64,
        n_test: n,
        passed,
    })
}

/// Best-grasp accuracy under the rectangle metric at `jaccard_threshold`.
pub fn evaluate(
    net: &GraspFcn<f32>,
    samples: &[Sample],
    jaccard_threshold: f64,
    width_max: f64,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluate", "empty test set"));
    }
    let preds = predict(net, samples)?;
    score(&preds, &best_grasps(&preds, width_max)?, jaccard_threshold)
}

/// One report per threshold, all from a single set of predictions.
/// Thresholds must be strictly increasing.
pub fn jaccard_sweep(
    net: &GraspFcn<f32>,
    samples: &[Sample],
    thresholds: &[f64],
    width_max: f64,
) -> Result<Vec<EvalReport>> {
    if thresholds.is_empty() {
        return Err(Error::invalid("jaccard_sweep", "no thresholds"));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("jaccard_sweep", "thresholds must be strictly increasing"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("jaccard_sweep", "empty test set"));
    }
    let preds = predict(net, samples)?;
    let grasps = best_grasps(&preds, width_max)?;
    thresholds.iter().map(|&t| score(&preds, &grasps, t)).collect()
}

/// One row of a top-k sweep. `accuracy` is `None` when no grasp cleared the
/// quality threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub k: usize,
    pub emitted: usize,
    pub passed: usize,
    pub accuracy: Option<f64>,
    /// Lowest quality among emitted grasps.
    pub min_quality: Option<f64>,
}

/// Per-grasp accuracy of the top `k` grasps for every `k`, pooled over
/// samples. Scored at the default Jaccard threshold.
pub fn multi_grasp_eval(
    net: &GraspFcn<f32>,
    samples: &[Sample],
    k_values: &[usize],
    q_threshold: f64,
    min_separation: f64,
    width_max: f64,
) -> Result<Vec<TopKRow>> {
    if k_values.contains(&0) {
        return Err(Error::invalid("multi_grasp_eval", "k must be positive"));
    }
    let k_max = k_values.iter().copied().max().unwrap_or(0);
    let preds = predict(net, samples)?;
    // Greedy selection in quality order makes top-k a prefix of top-k_max.
    let scored = preds
        .iter()
        .map(|p| {
            decode_top_k(&p.maps, k_max, q_threshold, min_separation, width_max)
                .iter()
                .map(|g| {
                    let rect = pixel_grasp_to_rectangle(g, DEFAULT_HEIGHT_RATIO)?;
                    let ok = !p.sample.rects.is_empty()
                        && rectangle_metric_match(&rect, &p.sample.rects, DEFAULT_JACCARD_THRESHOLD)?;
                    Ok((g.quality, ok))
                })
                .collect::<Result<Vec<(f64, bool)>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(k_values
        .iter()
        .map(|&k| {
            let emitted: Vec<&(f64, bool)> = scored.iter().flat_map(|s| s.iter().take(k)).collect();
            let passed = emitted.iter().filter(|(_, ok)| *ok).count();
            TopKRow {
                k,
                emitted: emitted.len(),
                passed,
                accuracy: (!emitted.is_empty()).then(|| passed as f64 / emitted.len() as f64),
                min_quality: emitted.iter().map(|(q, _)| *q).reduce(f64::min),
            }
        })
        .collect())
}

/// Seed of fold `fold`'s network and training run.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64 + 1);
    rng.random()
}

pub struct FoldOutcome {
    pub fold: usize,
    pub net: GraspFcn<f32>,
    pub loss_history: Vec<f64>,
    pub report: EvalReport,
}

pub struct CrossValidation {
    pub folds: Vec<FoldOutcome>,
    /// Accuracy is the mean of the fold accuracies; `per_fold` lists them.
    pub aggregate: EvalReport,
}

/// Trains a fresh network per fold on the fold's training split and
/// evaluates it on the held-out split.
pub fn cross_validate(
    samples: &[Sample],
    net_config: &GraspFcnConfig,
    cfg: &TrainConfig,
    jaccard_threshold: f64,
    progress: &mut dyn FnMut(usize, &EpochProgress),
) -> Result<CrossValidation> {
    cfg.validate()?;
    let splits = split_folds(samples, cfg.split, cfg.folds, cfg.seed)?;
    let width_max = cfg.width_max_for(net_config.input_size);
    let mut folds = Vec::with_capacity(splits.len());
    for (fold, split) in splits.iter().enumerate() {
        let mut run = || -> Result<FoldOutcome> {
            let seed = fold_seed(cfg.seed, fold);
            let mut net = GraspFcn::build(net_config.clone(), seed)?;
            let train_set: Vec<Sample> = split.train.iter().map(|&i| samples[i].clone()).collect();
            let test_set: Vec<Sample> = split.test.iter().map(|&i| samples[i].clone()).collect();
            let fold_cfg = TrainConfig { seed, ..cfg.clone() };
            let loss_history = train(&mut net, &train_set, &fold_cfg, &mut |p| progress(fold, p))?;
            let report = evaluate(&net, &test_set, jaccard_threshold, width_max)?;
            Ok(FoldOutcome {
                fold,
                net,
                loss_history,
                report,
            })
        };
        folds.push(run().map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })?);
    }
    let per_fold: Vec<f64> = folds.iter().map(|f| f.report.accuracy).collect();
    let n = folds.len() as f64;
    let aggregate = EvalReport {
        accuracy: per_fold.iter().sum::<f64>() / n,
        per_fold,
        jaccard_threshold,
        mean_inference_ms: folds.iter().map(|f| f.report.mean_inference_ms).sum::<f64>() / n,
        n_test: folds.iter().map(|f| f.report.n_test).sum(),
        passed: folds.iter().flat_map(|f| f.report.passed.iter().copied()).collect(),
    };
    Ok(CrossValidation { folds, aggregate })
}
