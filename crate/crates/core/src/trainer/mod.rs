//! Training, tiled evaluation and the iterated tree-structure procedure.

mod iteration;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::geometry::{extract_tile, gaussian_weight_map, plan_tiles, StitchAccumulator, DEFAULT_SIGMA};
use crate::metrics::{default_class_names, score, ConfusionMatrix, ScoreReport};
use crate::network::{NetworkSpec, TreeSegNet};
use crate::nn::{argmax_labels, reset_velocity, softmax_ce_loss, zero_grads, Module, Sgd, Tensor, DEFAULT_MOMENTUM};
use crate::raster::{Image, LabelMap};
use crate::seeding;

pub use iteration::{
    load_checkpoint, resume_structure_iteration, run_structure_iteration, save_checkpoint, tree_from_confusion,
    PassRecord, Transcript,
};

pub const BASE_LR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Network layout; the class tree is chosen by the structure iteration.
    pub network: NetworkSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub tile: usize,
    pub margin: usize,
    pub sigma: f64,
    pub base_lr: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Upper bound on trained passes, the no-tree pass included.
    pub max_passes: usize,
    /// Threads for tiled inference.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            network: NetworkSpec::default(),
            epochs: 8,
            batch_size: 4,
            tile: 64,
            margin: 8,
            sigma: DEFAULT_SIGMA,
            base_lr: BASE_LR,
            momentum: DEFAULT_MOMENTUM,
            seed: 0,
            max_passes: 10,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.max_passes == 0 || self.workers == 0 {
            return bad("epochs, batch size, max passes and workers must be at least 1".into());
        }
        let m = self.network.size_multiple();
        if self.tile == 0 || self.tile % m != 0 {
            return bad(format!("tile side {} is not a multiple of {m}", self.tile));
        }
        if self.tile <= 2 * self.margin {
            return bad(format!("tile side {} leaves no core with margin {}", self.tile, self.margin));
        }
        if !(self.sigma > 0.0) || !(self.base_lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("sigma and learning rate must be positive, momentum in [0, 1)".into());
        }
        Ok(())
    }
}

/// Step schedule: `base` for the first half of training, `base/10` until three
/// quarters, `base/100` after.
pub fn lr_at(step: usize, total_steps: usize, base_lr: f64) -> Result<f64> {
    if step >= total_steps {
        return Err(Error::InvalidArgument(format!("step {step} outside 0..{total_steps}")));
    }
    Ok(if 2 * step < total_steps {
        base_lr
    } else if 4 * step < 3 * total_steps {
        base_lr * 0.1
    } else {
        base_lr * 0.01
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub steps: usize,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

fn stack_images(images: &[&Image]) -> Result<Tensor<f32>> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (c, h, w) = (first.channels(), first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for im in images {
        if (im.channels(), im.height(), im.width()) != (c, h, w) {
            return Err(Error::Shape(format!(
                "batch mixes {c}x{h}x{w} with {}x{}x{}",
                im.channels(),
                im.height(),
                im.width()
            )));
        }
        data.extend_from_slice(im.data());
    }
    Tensor::from_vec([images.len(), c, h, w], data)
}

/// Minibatch SGD with momentum over `data` for `cfg.epochs` epochs. Sample order is
/// reshuffled every epoch from `(seed, pass, epoch)`; velocities start at zero.
pub fn train_pass(net: &mut TreeSegNet<f32>, data: &[Sample], cfg: &TrainConfig, pass: usize) -> Result<TrainStats> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let per_epoch = data.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let sgd = Sgd { momentum: cfg.momentum };
    reset_velocity(net);
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut seeding::rng(cfg.seed, "train-order", &[pass as u64, epoch as u64]));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let images: Vec<&Image> = chunk.iter().map(|&i| &data[i].image).collect();
            let x = stack_images(&images)?;
            let mut targets = Vec::with_capacity(x.len() / x.channels());
            for &i in chunk {
                targets.extend_from_slice(data[i].labels.data());
            }
            zero_grads(net);
            let logits = net.forward(&x, true)?;
            let (loss, grad) = softmax_ce_loss(&logits, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Invariant(format!("loss diverged at pass {pass}, step {step}")));
            }
            net.backward(&grad)?;
            sgd.step(net, lr_at(step, total, cfg.base_lr)?)?;
            loss_sum += loss;
            step += 1;
        }
        let mean = loss_sum / per_epoch as f64;
        log::info!(
            "pass {pass} epoch {epoch}: loss {mean:.4} ({:.1}s)",
            started.elapsed().as_secs_f64()
        );
        epoch_losses.push(mean);
    }
    Ok(TrainStats {
        steps: step,
        epoch_losses,
    })
}

/// Mean cross-entropy over `data` in training mode (batch statistics), without
/// touching `net`.
pub fn dataset_loss(net: &TreeSegNet<f32>, data: &[Sample], batch_size: usize) -> Result<f64> {
    let mut probe = net.clone();
    let mut total = 0.0;
    let mut pixels = 0usize;
    for chunk in data.chunks(batch_size.max(1)) {
        let images: Vec<&Image> = chunk.iter().map(|s| &s.image).collect();
        let targets: Vec<u8> = chunk.iter().flat_map(|s| s.labels.data().iter().copied()).collect();
        let (loss, _) = softmax_ce_loss(&probe.forward(&stack_images(&images)?, true)?, &targets)?;
        total += loss * targets.len() as f64;
        pixels += targets.len();
    }
    if pixels == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    Ok(total / pixels as f64)
}

/// Class probabilities for a whole image: overlap tiles are predicted in batches of
/// `cfg.batch_size` and blended with the Gaussian weight map.
pub fn predict_scores(net: &TreeSegNet<f32>, image: &Image, cfg: &TrainConfig) -> Result<Image> {
    let plan = plan_tiles(image.height(), image.width(), cfg.tile, cfg.margin)?;
    let weight = gaussian_weight_map(cfg.tile, cfg.sigma)?;
    let tiles = (0..plan.len())
        .map(|i| extract_tile(image, &plan, i))
        .collect::<Result<Vec<_>>>()?;
    let batches: Vec<&[Image]> = tiles.chunks(cfg.batch_size).collect();
    let workers = cfg.workers.min(batches.len()).max(1);

    let run = |net: &mut TreeSegNet<f32>, batch: &[Image]| -> Result<Vec<Image>> {
        let x = stack_images(&batch.iter().collect::<Vec<_>>())?;
        let (_, scores) = net.predict(&x)?;
        let [n, c, h, w] = scores.shape();
        (0..n)
            .map(|s| Image::from_vec(c, h, w, scores.sample(s).to_vec()))
            .collect()
    };
    let mut outputs: Vec<Option<Vec<Image>>> = vec![None; batches.len()];
    if workers == 1 {
        let mut local = net.clone();
        for (k, b) in batches.iter().enumerate() {
            outputs[k] = Some(run(&mut local, b)?);
        }
    } else {
        let results: Vec<Result<Vec<(usize, Vec<Image>)>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|wk| {
                    let batches = &batches;
                    let run = &run;
                    scope.spawn(move || {
                        let mut local = net.clone();
                        (wk..batches.len())
                            .step_by(workers)
                            .map(|k| run(&mut local, batches[k]).map(|o| (k, o)))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Invariant("inference worker panicked".into()))))
                .collect()
        });
        for r in results {
            for (k, o) in r? {
                outputs[k] = Some(o);
            }
        }
    }
    let mut acc = StitchAccumulator::new(&plan, &weight, net.spec().num_classes)?;
    for tile in outputs.into_iter().flatten().flatten() {
        acc.push(&tile)?;
    }
    acc.finish()
}

pub fn predict_labels(net: &TreeSegNet<f32>, image: &Image, cfg: &TrainConfig) -> Result<LabelMap> {
    let scores = predict_scores(net, image, cfg)?;
    let (c, h, w) = (scores.channels(), scores.height(), scores.width());
    let t = Tensor::from_vec([1, c, h, w], scores.into_vec())?;
    LabelMap::from_vec(h, w, argmax_labels(&t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub report: ScoreReport,
    pub predictions: Vec<LabelMap>,
}

/// Tiled prediction of every validation image, with one confusion matrix over all.
pub fn evaluate_pass(net: &TreeSegNet<f32>, val: &[Sample], cfg: &TrainConfig) -> Result<Evaluation> {
    if val.is_empty() {
        return Err(Error::InvalidArgument("no validation samples".into()));
    }
    let c = net.spec().num_classes;
    let mut confusion = ConfusionMatrix::zeros(c)?.with_class_names(default_class_names(c))?;
    let mut predictions = Vec::with_capacity(val.len());
    for s in val {
        let pred = predict_labels(net, &s.image, cfg)?;
        confusion.accumulate(&s.labels, &pred)?;
        predictions.push(pred);
    }
    let report = score(&confusion)?;
    Ok(Evaluation {
        confusion,
        report,
        predictions,
    })
}

#[cfg(test)]
mod tests;
