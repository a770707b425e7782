use super::model::{adam_step, forward, init_params, loss_and_grads, FeatureStore, LcModel, Mode, ModelParams};
use super::{Precision, Scalar, TrainConfig, TrainError};
use crate::block::PrecomputedFeatures;
use crate::dense::DenseMatrix;
use crate::synthetic::{Split, SplitRole};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub cum_time_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Wall-clock time of the precomputation that produced the features;
    /// left at 0 by [`train`] for the caller to fill in.
    pub precompute_ms: f64,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Result of a run. Parameters are those of the best validation epoch,
/// widened to `f64` whatever precision was used for training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub best_val_acc: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub weights: BTreeMap<usize, DenseMatrix<f64>>,
    pub attn: Vec<f64>,
}

const EVAL_CHUNK: usize = 4096;

/// Fraction of `rows` whose arg-max logit (lowest index on ties) equals the label.
pub fn evaluate_accuracy<T: Scalar>(
    model: &LcModel,
    params: &ModelParams<T>,
    store: &FeatureStore<T>,
    labels: &[usize],
    rows: &[usize],
) -> Result<f64, TrainError> {
    if rows.is_empty() {
        return Err(TrainError::EmptyMask);
    }
    let cfg = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut correct = 0usize;
    for chunk in rows.chunks(EVAL_CHUNK) {
        let logits = forward(model, params, store, chunk, Mode::Eval, &cfg, &mut rng)?;
        for (i, &r) in chunk.iter().enumerate() {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            let label = *labels
                .get(r)
                .ok_or_else(|| TrainError::Shape(format!("no label for row {r}")))?;
            correct += usize::from(best == label);
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

/// Mini-batch Adam with early stopping on validation accuracy.
pub fn train<T: Scalar>(
    model: &LcModel,
    store: &FeatureStore<T>,
    labels: &[usize],
    split: &Split,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if labels.len() != store.num_rows() || split.len() != store.num_rows() {
        return Err(TrainError::Shape(format!(
            "{} feature rows, {} labels, {} split entries",
            store.num_rows(),
            labels.len(),
            split.len()
        )));
    }
    let mut train_rows = split.indices(SplitRole::Train);
    let val_rows = split.indices(SplitRole::Val);
    let test_rows = split.indices(SplitRole::Test);
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(TrainError::EmptyMask);
    }

    let mut params: ModelParams<T> = init_params(model, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let start = Instant::now();
    let mut history = TrainHistory::default();
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::NEG_INFINITY;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        train_rows.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in train_rows.chunks(cfg.batch_size) {
            let (loss, grads) = loss_and_grads(model, &params, store, batch, labels, Mode::Train, cfg, &mut rng)?;
            adam_step(&mut params, &grads, cfg)?;
            loss_sum += loss.to_f64().unwrap_or(f64::NAN) * batch.len() as f64;
        }
        let val_acc = evaluate_accuracy(model, &params, store, labels, &val_rows)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_rows.len() as f64,
            val_acc,
            cum_time_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let train_acc = evaluate_accuracy(model, &best, store, labels, &train_rows)?;
    let test_acc = if test_rows.is_empty() {
        f64::NAN
    } else {
        evaluate_accuracy(model, &best, store, labels, &test_rows)?
    };
    history.best_epoch = best_epoch;
    Ok(TrainOutcome {
        history,
        best_val_acc: best_val,
        train_acc,
        test_acc,
        weights: best.weights.iter().map(|(&i, w)| (i, w.cast())).collect(),
        attn: best.attn.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
    })
}

/// [`train`] in the precision selected by `cfg.precision`.
pub fn train_any(
    model: &LcModel,
    features: &PrecomputedFeatures,
    labels: &[usize],
    split: &Split,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    match cfg.precision {
        Precision::F32 => train(
            model,
            &FeatureStore::<f32>::from_precomputed(features, model.plan())?,
            labels,
            split,
            cfg,
        ),
        Precision::F64 => train(
            model,
            &FeatureStore::<f64>::from_precomputed(features, model.plan())?,
            labels,
            split,
            cfg,
        ),
    }
}

/// CSV with columns `epoch,train_loss,val_acc,cum_time_ms`.
pub fn write_history_csv(path: &Path, history: &TrainHistory) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,train_loss,val_acc,cum_time_ms")?;
    for r in &history.epochs {
        writeln!(out, "{},{},{},{:.3}", r.epoch, r.train_loss, r.val_acc, r.cum_time_ms)?;
    }
    out.flush()
}
