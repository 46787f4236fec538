use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError, ParamStore, Result};
use crate::data::{make_windows, split_with, MtsFrame, NormStats, Split, SplitScheme, WindowPair};
use crate::tensor::{Array, Tape, TensorError, Var};

/// Mean squared error over every entry.
pub fn mse_loss<'t>(pred: Var<'t>, target: &Array) -> std::result::Result<Var<'t>, TensorError> {
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "mse_loss",
            lhs: pred.shape(),
            rhs: target.shape().to_vec(),
        });
    }
    let t = pred.tape().constant(target.clone());
    Ok(pred.sub(t)?.square().mean())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Array>,
    v: Vec<Array>,
    t: i32,
}

impl Adam {
    pub fn new(learning_rate: f64, params: &ParamStore) -> Self {
        let zeros = || params.values().iter().map(|a| Array::zeros(a.shape().to_vec())).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Array]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((x, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *x -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Only filled when timing was requested; left out so that reruns give
    /// identical history files.
    pub wall_seconds: Option<f64>,
}

/// Writes `epoch,train_mse,val_mse,wall_seconds`.
pub fn write_history<W: Write>(writer: W, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_mse", "val_mse", "wall_seconds"])
        .map_err(csv_err)?;
    for r in history {
        let wall = r.wall_seconds.map(|s| format!("{s:.3}")).unwrap_or_default();
        w.write_record([r.epoch.to_string(), format!("{:e}", r.train_mse), format!("{:e}", r.val_mse), wall])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> ModelError {
    ModelError::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model holding the best-validation parameters.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
}

fn window_grad(model: &Model, w: &WindowPair) -> Result<(f64, Vec<Array>)> {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = model.params().values().iter().map(|a| tape.param(a.clone())).collect();
    let pred = model.forward(&tape, &vars, &w.input)?;
    let loss = mse_loss(pred, &w.target)?;
    let value = loss.item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let mut grads = tape.backward(loss)?;
    let g = vars
        .iter()
        .zip(model.params().values())
        .map(|(v, a)| grads.take(*v).unwrap_or_else(|| Array::zeros(a.shape().to_vec())))
        .collect();
    Ok((value, g))
}

/// Mean per-window MSE with parameters held constant.
pub fn mean_loss(model: &Model, windows: &[WindowPair]) -> Result<f64> {
    let losses: Vec<f64> = windows
        .par_iter()
        .map(|w| {
            let p = model.predict_normalized(&w.input)?;
            Ok(p.data().iter().zip(w.target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Adam on mini-batches of normalised windows with early stopping on the
/// validation MSE. Windows of one batch run on separate tapes in parallel;
/// their gradients are summed in window order so the result does not
/// depend on scheduling.
pub fn train(mut model: Model, train_windows: &[WindowPair], val_windows: &[WindowPair], record_time: bool) -> Result<TrainOutcome> {
    if train_windows.is_empty() {
        return Err(ModelError::Config("no training windows".into()));
    }
    let c = model.config().clone();
    let mut adam = Adam::new(c.learning_rate, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x5eed_7a1e);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().clone());
    let mut stale = 0;
    let mut stopped_early = false;
    let started = Instant::now();

    for epoch in 1..=c.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(c.batch_size) {
            let results: Vec<(f64, Vec<Array>)> = batch
                .par_iter()
                .map(|&i| window_grad(&model, &train_windows[i]))
                .collect::<Result<_>>()?;
            let mut sum: Option<Vec<Array>> = None;
            for (&i, (loss, g)) in batch.iter().zip(results) {
                if !loss.is_finite() {
                    return Err(ModelError::NonFinite {
                        loss,
                        epoch,
                        origin: train_windows[i].origin_index,
                        learning_rate: c.learning_rate,
                    });
                }
                total += loss;
                match &mut sum {
                    None => sum = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let grads: Vec<Array> = sum.expect("non-empty batch").iter().map(|g| g.map(|x| x * inv)).collect();
            adam.step(model.params_mut(), &grads);
        }
        let train_mse = total / train_windows.len() as f64;
        let val_mse = if val_windows.is_empty() {
            mean_loss(&model, train_windows)?
        } else {
            mean_loss(&model, val_windows)?
        };
        if !val_mse.is_finite() {
            return Err(ModelError::NonFinite {
                loss: val_mse,
                epoch,
                origin: val_windows.first().map_or(0, |w| w.origin_index),
                learning_rate: c.learning_rate,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            wall_seconds: record_time.then(|| started.elapsed().as_secs_f64()),
        });
        if val_mse < best.0 {
            best = (val_mse, epoch, model.params().clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= c.patience {
                stopped_early = epoch < c.epochs;
                break;
            }
        }
    }
    let (best_val_mse, best_epoch, params) = best;
    *model.params_mut() = params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_mse,
        stopped_early,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    /// Fraction, not percent. Zero targets are skipped.
    pub mape: f64,
    pub mape_skipped: usize,
    pub count: usize,
}

impl Metrics {
    pub fn compute<'a>(pairs: impl IntoIterator<Item = (&'a Array, &'a Array)>) -> Self {
        let (mut se, mut ae, mut ape) = (0.0, 0.0, 0.0);
        let (mut count, mut skipped) = (0usize, 0usize);
        for (pred, target) in pairs {
            for (p, y) in pred.data().iter().zip(target.data()) {
                let e = p - y;
                se += e * e;
                ae += e.abs();
                if *y == 0.0 {
                    skipped += 1;
                } else {
                    ape += (e / y).abs();
                }
                count += 1;
            }
        }
        let n = count.max(1) as f64;
        let kept = count - skipped;
        Self {
            mse: se / n,
            mae: ae / n,
            rmse: (se / n).sqrt(),
            mape: if kept == 0 { f64::NAN } else { ape / kept as f64 },
            mape_skipped: skipped,
            count,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Metrics in original units.
    pub denormalized: Metrics,
    /// Metrics on the z-scored scale.
    pub normalized: Metrics,
    /// De-normalised forecast per window origin.
    pub predictions: Vec<(usize, Array)>,
}

impl Evaluation {
    pub fn metrics(&self, normalized: bool) -> &Metrics {
        if normalized {
            &self.normalized
        } else {
            &self.denormalized
        }
    }
}

/// Metrics of `model` on normalised windows, reported both before and after
/// undoing the normalisation.
pub fn evaluate(model: &Model, windows: &[WindowPair]) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(ModelError::Config("empty evaluation set".into()));
    }
    let preds: Vec<Array> = windows
        .par_iter()
        .map(|w| model.predict_normalized(&w.input))
        .collect::<Result<_>>()?;
    let normalized = Metrics::compute(preds.iter().zip(windows.iter().map(|w| &w.target)));
    let norm = model.norm_stats();
    let raw_preds: Vec<Array> = preds.iter().map(|p| norm.invert(p)).collect();
    let raw_targets: Vec<Array> = windows.iter().map(|w| norm.invert(&w.target)).collect();
    let denormalized = Metrics::compute(raw_preds.iter().zip(&raw_targets));
    Ok(Evaluation {
        denormalized,
        normalized,
        predictions: windows.iter().map(|w| w.origin_index).zip(raw_preds).collect(),
    })
}

/// Outcome of the whole pipeline on one frame.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub outcome: TrainOutcome,
    pub test: Evaluation,
    pub split: Split,
    /// Raw-frame index of the first step of each segment's window origins.
    pub window_offsets: [usize; 3],
}

impl Experiment {
    pub fn model(&self) -> &Model {
        &self.outcome.model
    }
}

/// Splits, normalises on the training segment, builds the structure from
/// it, trains and evaluates on the test segment. Window origins in the
/// returned predictions index the raw frame.
pub fn fit(frame: &MtsFrame, config: &ModelConfig, scheme: SplitScheme, record_time: bool) -> Result<Experiment> {
    let l = config.input_len;
    let split = split_with(frame, scheme, l)?;
    split.check_trainable(l, config.horizon)?;
    let (norm, _) = NormStats::fit(split.train.values(), split.train.len())?;
    let train_f = split.train.normalized_with(&norm);
    let val_f = split.val.normalized_with(&norm);
    let test_f = split.test.normalized_with(&norm);
    let model = Model::build(config, train_f.values(), frame.variate_names.clone(), norm)?;
    let stride = model.config().train_stride;
    let train_w = make_windows(&train_f, l, config.horizon, stride)?;
    let val_w = make_windows(&val_f, l, config.horizon, 1)?;
    let mut test_w = make_windows(&test_f, l, config.horizon, 1)?;
    let back = |k: usize| split.offsets[k].saturating_sub(split.lookback);
    let window_offsets = [0, back(1), back(2)];
    for w in &mut test_w {
        w.origin_index += window_offsets[2];
    }
    let outcome = train(model, &train_w, &val_w, record_time)?;
    let test = evaluate(&outcome.model, &test_w)?;
    Ok(Experiment {
        outcome,
        test,
        split,
        window_offsets,
    })
}
