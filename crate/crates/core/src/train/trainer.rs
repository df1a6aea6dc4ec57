use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xtasc_tensor::{grad, Float, Tensor};

use super::adam::{adam_step, AdamState};
use super::config::{Precision, TrainConfig};
use super::eval::{evaluate, normalization, EvalReport};
use crate::data::{augment, prepare_eval, read_dataset, Batch, Dataset};
use crate::error::{config_err, CoreError, Result};
use crate::loss::{compute_losses, LossReport};
use crate::model::{save_checkpoint, CheckpointMeta, ModelConfig, XTaskNet};
use crate::nn::Mode;
use crate::weighting::{gradnorm_update, Weighting};

const ORDER_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;
/// Stream id of the generated held-out split.
pub const EVAL_SPLIT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    #[serde(flatten)]
    pub losses: LossReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    /// Per-field mean over the epoch's steps.
    pub mean: LossReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub step: u64,
    #[serde(flatten)]
    pub report: EvalReport,
}

pub struct TrainOutcome<T: Float> {
    pub net: XTaskNet<T>,
    pub weighting: Weighting<T>,
    pub epochs: Vec<EpochRecord>,
    pub evals: Vec<EvalRecord>,
    pub steps: u64,
    pub final_checkpoint: Option<PathBuf>,
}

impl<T: Float> TrainOutcome<T> {
    pub fn final_eval(&self) -> &EvalReport {
        &self.evals.last().expect("the last epoch is always evaluated").report
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            steps: self.steps,
            epochs: self.epochs.clone(),
            final_eval: self.final_eval().clone(),
            final_checkpoint: self.final_checkpoint.clone(),
        }
    }
}

/// Precision-independent result of [`train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub epochs: Vec<EpochRecord>,
    pub final_eval: EvalReport,
    pub final_checkpoint: Option<PathBuf>,
}

/// Reads the training set and the held-out split named by `cfg`.
pub fn load_datasets(cfg: &TrainConfig) -> Result<(Dataset, Dataset)> {
    let dir = cfg.data_dir.as_ref().ok_or_else(|| config_err("data_dir is required"))?;
    let train = read_dataset(dir)?;
    let eval = match &cfg.eval_dir {
        Some(d) => read_dataset(d)?,
        None => Dataset::from_generator(&train.manifest.generator, EVAL_SPLIT, cfg.eval_count)?,
    };
    Ok((train, eval))
}

/// Reads data from disk and trains in the configured precision.
pub fn train(cfg: &TrainConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let (train_set, eval_set) = load_datasets(cfg)?;
    match cfg.precision {
        Precision::F32 => Ok(train_on::<f32>(cfg, &train_set, &eval_set)?.summary()),
        Precision::F64 => Ok(train_on::<f64>(cfg, &train_set, &eval_set)?.summary()),
    }
}

pub fn model_config_for(cfg: &TrainConfig, train: &Dataset) -> ModelConfig {
    cfg.architecture.model_config(train.manifest.num_classes, cfg.variant)
}

struct Logs {
    dir: PathBuf,
    losses: BufWriter<File>,
    metrics: BufWriter<File>,
}

impl Logs {
    fn open(dir: &Path, cfg: &TrainConfig, model: &ModelConfig, train: &Dataset, eval: &Dataset) -> Result<Logs> {
        fs::create_dir_all(dir)?;
        let run = serde_json::json!({
            "config": cfg,
            "model": model,
            "train_data": train.manifest,
            "eval_data": eval.manifest,
        });
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run)?)?;
        Ok(Logs {
            dir: dir.to_path_buf(),
            losses: BufWriter::new(File::create(dir.join("losses.ndjson"))?),
            metrics: BufWriter::new(File::create(dir.join("metrics.ndjson"))?),
        })
    }

    fn line(w: &mut BufWriter<File>, value: &impl Serialize) -> Result<()> {
        serde_json::to_writer(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

fn mean_report(reports: &[LossReport]) -> LossReport {
    let n = reports.len().max(1) as f64;
    let mut m = LossReport::default();
    for r in reports {
        m.ell1 += r.ell1 / n;
        m.ell2 += r.ell2 / n;
        m.ell_2to1 += r.ell_2to1 / n;
        m.ell_1to2 += r.ell_1to2 / n;
        m.l1 += r.l1 / n;
        m.l2 += r.l2 / n;
        m.omega1 += r.omega1 / n;
        m.omega2 += r.omega2 / n;
        m.reg += r.reg / n;
        m.total += r.total / n;
    }
    m
}

fn to_f64(v: &[impl Float]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Trains on in-memory datasets. Results depend only on `cfg` and the data.
pub fn train_on<T: Float>(cfg: &TrainConfig, train: &Dataset, eval: &Dataset) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let tm = &train.manifest;
    let em = &eval.manifest;
    if (tm.height, tm.width, tm.num_classes) != (em.height, em.width, em.num_classes) {
        return Err(CoreError::Mismatch(format!(
            "train is {}x{} with {} classes, eval is {}x{} with {}",
            tm.height, tm.width, tm.num_classes, em.height, em.width, em.num_classes
        )));
    }
    if train.len() < 2 {
        return Err(CoreError::Mismatch("need at least two training samples".into()));
    }
    let model_cfg = model_config_for(cfg, train);
    model_cfg.check_resolution(tm.height, tm.width)?;
    let net = XTaskNet::<T>::new(model_cfg.clone(), cfg.seed)?;
    let mut weighting = Weighting::<T>::from_config(&cfg.loss);
    let params: Vec<Tensor<T>> = net
        .parameters()
        .into_iter()
        .chain(weighting.parameters())
        .map(|(_, t)| t)
        .collect();
    let mut adam = AdamState::new(&params, cfg.adam);
    let stats = tm.stats.clone();
    let norm = normalization(&stats);

    let mut logs = match &cfg.out_dir {
        Some(dir) => Some(Logs::open(dir, cfg, &model_cfg, train, eval)?),
        None => None,
    };
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(ORDER_STREAM);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    aug_rng.set_stream(AUGMENT_STREAM);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut evals = Vec::new();
    let mut final_checkpoint = None;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut order_rng);
        let mut reports = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let samples: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let s = &train.samples[i];
                    if cfg.augment {
                        augment(s, &norm, &mut aug_rng)
                    } else {
                        prepare_eval(s, &norm)
                    }
                })
                .collect();
            let batch = Batch::<T>::from_samples(&samples)?;
            let out = net.forward(&batch.images, Mode::Train)?;
            let terms = compute_losses(cfg.variant, &out, &batch, &cfg.loss, &weighting)?;
            if !terms.report.total.is_finite() {
                return Err(CoreError::Divergence(format!("loss {} at step {step}", terms.report.total)));
            }
            params.iter().for_each(|p| p.zero_grad());
            terms.total.backward()?;
            if let Weighting::GradNorm(state) = &mut weighting {
                let reference = net.reference_layer();
                let g1 = to_f64(&grad(&terms.task[0], &[reference])?[0]);
                let g2 = to_f64(&grad(&terms.task[1], &[reference])?[0]);
                let current = [terms.report.l1, terms.report.l2];
                let initial = *state.initial_losses.get_or_insert(current);
                state.weights = gradnorm_update([&g1, &g2], initial, current, state.weights, state.alpha, state.lr)?;
            }
            adam_step(&params, &mut adam, lr)?;
            if let Some(l) = logs.as_mut() {
                let record = StepRecord { epoch, step, lr, losses: terms.report.clone() };
                Logs::line(&mut l.losses, &record)?;
            }
            reports.push(terms.report);
            step += 1;
        }
        epochs.push(EpochRecord { epoch, lr, steps: reports.len(), mean: mean_report(&reports) });

        let last = epoch + 1 == cfg.epochs;
        if last || (epoch + 1) % cfg.eval_every == 0 {
            let report = evaluate(&net, eval, &stats, cfg.batch_size, cfg.loss.seg_ignore_index)?;
            let record = EvalRecord { epoch, step, report };
            if let Some(l) = logs.as_mut() {
                Logs::line(&mut l.metrics, &record)?;
                l.losses.flush()?;
                l.metrics.flush()?;
                let dir = l.dir.join("checkpoints").join(format!("epoch_{:04}", epoch + 1));
                let meta = CheckpointMeta {
                    step,
                    epoch: epoch + 1,
                    weighting: serde_json::to_value(weighting.snapshot())?,
                    input_stats: Some(stats.clone()),
                };
                save_checkpoint(&dir, &net, &meta)?;
                final_checkpoint = Some(dir);
            }
            evals.push(record);
        }
    }
    Ok(TrainOutcome { net, weighting, epochs, evals, steps: step, final_checkpoint })
}
