//! Loss, optimizer and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GradSlot, Gradients};
use crate::engine::{Forecaster, Hyperparams, Query};
use crate::error::{Error, Result};
use crate::eval::{evaluate, FactIndex, TimeAwareFilter};
use crate::params::ParameterSet;
use crate::sampler::SamplingConfig;
use crate::store::{Quadruple, TemporalAdjacency};
use crate::tensor::Tensor;

/// Clamp bound for normalized scores inside the logarithms.
pub const LOSS_EPS: f64 = 1e-12;

fn normalized(scores: &[f64]) -> (f64, Vec<f64>) {
    let total: f64 = scores.iter().sum();
    let a = if total > 0.0 {
        scores.iter().map(|s| s / total).collect()
    } else {
        vec![0.0; scores.len()]
    };
    (total, a)
}

/// Mean binary cross-entropy of `scores / Σ scores` against `labels`.
pub fn bce_from_scores(scores: &[f64], labels: &[f64], eps: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let (_, a) = normalized(scores);
    let n = scores.len() as f64;
    a.iter()
        .zip(labels)
        .map(|(&x, &y)| {
            let x = x.clamp(eps, 1.0 - eps);
            -(y * x.ln() + (1.0 - y) * (1.0 - x).ln())
        })
        .sum::<f64>()
        / n
}

/// Gradient of [`bce_from_scores`] with respect to the raw scores. Clamped
/// entries pass no gradient.
pub fn bce_from_scores_grad(scores: &[f64], labels: &[f64], eps: f64) -> Vec<f64> {
    let (total, a) = normalized(scores);
    if scores.is_empty() || total <= 0.0 {
        return vec![0.0; scores.len()];
    }
    let n = scores.len() as f64;
    // dL/dâ_i
    let ga: Vec<f64> = a
        .iter()
        .zip(labels)
        .map(|(&x, &y)| {
            if x < eps || x > 1.0 - eps {
                0.0
            } else {
                (-y / x + (1.0 - y) / (1.0 - x)) / n
            }
        })
        .collect();
    // â_i = s_i / S  ⇒  dL/ds_j = (g_j − Σ_i g_i â_i) / S
    let dot: f64 = ga.iter().zip(&a).map(|(g, x)| g * x).sum();
    ga.iter().map(|g| (g - dot) / total).collect()
}

/// Mean over queries of the per-query loss; queries without candidates are
/// excluded.
pub fn bce_loss(batch: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let per_query: Vec<f64> = batch
        .iter()
        .filter(|(s, _)| !s.is_empty())
        .map(|(s, y)| {
            if s.len() != y.len() {
                return Err(Error::LengthMismatch(format!("{} scores vs {} labels", s.len(), y.len())));
            }
            Ok(bce_from_scores(s, y, LOSS_EPS))
        })
        .collect::<Result<_>>()?;
    if per_query.is_empty() {
        return Err(Error::EmptyRecords);
    }
    Ok(per_query.iter().sum::<f64>() / per_query.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Drop queries whose answer never enters the inference graph instead of
    /// training them as all-negative.
    pub skip_missing_answer: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            batch: 128,
            epochs: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            skip_missing_answer: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr must be a finite non-negative number, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::Config("train.batch must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Tensor,
    v: Tensor,
}

/// Adam. Row-sparse gradients update only their rows, and only those rows'
/// moments advance.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: Vec<Option<Moments>>,
}

impl Adam {
    pub fn new(cfg: &TrainingConfig) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParameterSet, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        if self.moments.len() < params.len() {
            self.moments.resize(params.len(), None);
        }
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        };
        for id in params.ids().collect::<Vec<_>>() {
            let Some(slot) = grads.slots.get(id.0) else { continue };
            if matches!(slot, GradSlot::Empty) {
                continue;
            }
            let tensor = params.get_mut(id);
            let mom = self.moments[id.0].get_or_insert_with(|| Moments {
                m: Tensor::zeros(tensor.rows, tensor.cols),
                v: Tensor::zeros(tensor.rows, tensor.cols),
            });
            match slot {
                GradSlot::Empty => {}
                GradSlot::Dense(g) => {
                    for i in 0..tensor.data.len() {
                        update(&mut tensor.data[i], g.data[i], &mut mom.m.data[i], &mut mom.v.data[i]);
                    }
                }
                GradSlot::Rows(rows) => {
                    let c = tensor.cols;
                    for (&r, g) in rows {
                        for j in 0..c {
                            let i = r * c + j;
                            update(&mut tensor.data[i], g[j], &mut mom.m.data[i], &mut mom.v.data[i]);
                        }
                    }
                }
            }
        }
    }
}

/// Loss and gradients of one query, or `None` when the query is skipped.
pub fn query_gradients(
    fc: &Forecaster<'_>,
    q: &Quadruple,
    stream: u64,
    skip_missing: bool,
) -> Result<Option<(f64, Gradients)>> {
    let mut s = fc.session(Query::new(q.subject, q.predicate, q.timestamp), stream)?;
    s.run()?;
    let Some(loss) = s.loss(q.object, LOSS_EPS, skip_missing)? else {
        return Ok(None);
    };
    let value = s.tape().value(loss).scalar();
    let grads = s.tape().backward(loss, fc.params.len())?;
    Ok(Some((value, grads)))
}

/// Mean loss and mean gradients over a batch, accumulated in query order.
pub fn batch_gradients(
    fc: &Forecaster<'_>,
    batch: &[Quadruple],
    first_stream: u64,
    skip_missing: bool,
) -> Result<Option<(f64, Gradients)>> {
    let per_query: Vec<Result<Option<(f64, Gradients)>>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, q)| query_gradients(fc, q, first_stream + i as u64, skip_missing))
        .collect();
    let mut total = Gradients::new(fc.params.len());
    let mut loss = 0.0;
    let mut n = 0usize;
    for r in per_query {
        if let Some((l, g)) = r? {
            loss += l;
            total.merge(&g);
            n += 1;
        }
    }
    if n == 0 {
        return Ok(None);
    }
    total.scale(1.0 / n as f64);
    Ok(Some((loss / n as f64, total)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_mrr: Option<f64>,
    pub valid_hits1: Option<f64>,
    /// Per-batch losses in order.
    pub batch_losses: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Best-on-validation parameters (last epoch when there is no validation set).
    pub params: ParameterSet,
    pub best_epoch: Option<usize>,
    pub trace: Vec<EpochRecord>,
}

/// Inputs shared by every epoch.
pub struct TrainingData<'a> {
    /// Reciprocal-augmented training quadruples; each one is a query.
    pub train: &'a [Quadruple],
    /// Reciprocal-augmented validation quadruples.
    pub valid: &'a [Quadruple],
    pub adj: &'a TemporalAdjacency,
    /// Facts used by the time-aware filter during validation.
    pub facts: &'a FactIndex,
}

pub fn fit(
    init: ParameterSet,
    data: &TrainingData<'_>,
    hyper: &Hyperparams,
    sampling: &SamplingConfig,
    cfg: &TrainingConfig,
) -> Result<FitOutcome> {
    cfg.validate()?;
    hyper.validate()?;
    let mut params = init;
    let mut best: Option<(f64, usize, ParameterSet)> = None;
    let mut adam = Adam::new(cfg);
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut stream = 0u64;

    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<Quadruple> = chunk.iter().map(|&i| data.train[i]).collect();
            let fc = Forecaster::new(&params, hyper, sampling, data.adj);
            let result = batch_gradients(&fc, &batch, stream, cfg.skip_missing_answer)?;
            stream += batch.len() as u64;
            let Some((loss, grads)) = result else { continue };
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_good: Box::new(params),
                });
            }
            adam.step(&mut params, &grads);
            batch_losses.push(loss);
        }
        let train_loss = if batch_losses.is_empty() {
            0.0
        } else {
            batch_losses.iter().sum::<f64>() / batch_losses.len() as f64
        };
        let (valid_mrr, valid_hits1) = if data.valid.is_empty() {
            (None, None)
        } else {
            let fc = Forecaster::new(&params, hyper, sampling, data.adj);
            let report = evaluate(&fc, data.valid, data.facts, &TimeAwareFilter, &[1])?;
            (Some(report.metrics.mrr), report.metrics.hits.get(&1).copied())
        };
        log::info!(
            "epoch {epoch}: loss {train_loss:.6}, valid MRR {}",
            valid_mrr.map_or("-".to_string(), |m| format!("{m:.4}"))
        );
        match valid_mrr {
            Some(m) if best.as_ref().map_or(true, |b| m > b.0) => best = Some((m, epoch, params.clone())),
            _ => {}
        }
        trace.push(EpochRecord {
            epoch,
            train_loss,
            valid_mrr,
            valid_hits1,
            batch_losses,
        });
    }
    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, Some(e)),
        None => (params, None),
    };
    Ok(FitOutcome {
        params,
        best_epoch,
        trace,
    })
}
