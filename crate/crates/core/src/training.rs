//! Weighted 1-vs-all cross-entropy, Adagrad, and the epoch loop with
//! validation-based model selection.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Precision, TrainConfig};
use crate::data::{Dataset, FilterIndex, FrequencyTable};
use crate::error::{KgeError, Result};
use crate::evaluation::{evaluate_split, RankingReport};
use crate::models::{BatchExample, Gradients, ModelParams, Shape};
use crate::regularizers::{example_penalty, timestamp_smoother, RegSpec, SmootherKind};

pub const INIT_STREAM: u64 = 0;
pub const SHUFFLE_STREAM: u64 = 1;

/// `weight · (logsumexp(scores) − scores[target])` and its gradient over scores.
pub fn weighted_cross_entropy(scores: &[f64], target: u32, weight: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; scores.len()];
    let loss = cross_entropy_into(scores, target, weight, &mut grad)?;
    Ok((loss, grad))
}

fn cross_entropy_into(scores: &[f64], target: u32, weight: f64, grad: &mut [f64]) -> Result<f64> {
    let t = target as usize;
    if t >= scores.len() {
        return Err(KgeError::Data(format!(
            "target {target} out of range for {} candidates",
            scores.len()
        )));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (g, &s) in grad.iter_mut().zip(scores) {
        *g = (s - max).exp();
        z += *g;
    }
    for g in grad.iter_mut() {
        *g *= weight / z;
    }
    grad[t] -= weight;
    Ok(weight * (max + z.ln() - scores[t]))
}

/// Accumulated squared gradients, one table per parameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState {
    pub entity: Array2<f64>,
    pub tail: Option<Array2<f64>>,
    pub relation: Array2<f64>,
    pub time: Option<Array2<f64>>,
    pub eps: f64,
}

impl AdagradState {
    pub fn new(params: &ModelParams, eps: f64) -> Self {
        AdagradState {
            entity: Array2::zeros(params.entity.raw_dim()),
            tail: params.tail.as_ref().map(|t| Array2::zeros(t.raw_dim())),
            relation: Array2::zeros(params.relation.raw_dim()),
            time: params.time.as_ref().map(|t| Array2::zeros(t.raw_dim())),
            eps,
        }
    }
}

fn adagrad_slice(p: &mut [f64], g: &[f64], s: &mut [f64], lr: f64, eps: f64) {
    for ((p, &g), s) in p.iter_mut().zip(g).zip(s.iter_mut()) {
        if g == 0.0 {
            continue;
        }
        *s += g * g;
        *p -= lr * g / (s.sqrt() + eps);
    }
}

fn adagrad_dense(p: &mut Array2<f64>, g: &Array2<f64>, s: &mut Array2<f64>, lr: f64, eps: f64) -> Result<()> {
    if p.dim() != g.dim() || p.dim() != s.dim() {
        return Err(KgeError::Dimension(format!(
            "adagrad: parameter {:?}, gradient {:?}, state {:?}",
            p.dim(),
            g.dim(),
            s.dim()
        )));
    }
    adagrad_slice(
        p.as_slice_mut().unwrap(),
        g.as_slice().unwrap(),
        s.as_slice_mut().unwrap(),
        lr,
        eps,
    );
    Ok(())
}

fn adagrad_rows(
    p: &mut Array2<f64>,
    rows: &std::collections::BTreeMap<u32, Vec<f64>>,
    s: &mut Array2<f64>,
    lr: f64,
    eps: f64,
) -> Result<()> {
    for (&i, g) in rows {
        let i = i as usize;
        if i >= p.nrows() || g.len() != p.ncols() {
            return Err(KgeError::Dimension(format!(
                "adagrad: gradient row {i} of width {} against table {:?}",
                g.len(),
                p.dim()
            )));
        }
        let mut prow = p.row_mut(i);
        let mut srow = s.row_mut(i);
        adagrad_slice(
            prow.as_slice_mut().unwrap(),
            g,
            srow.as_slice_mut().unwrap(),
            lr,
            eps,
        );
    }
    Ok(())
}

/// `state += g²; param −= lr · g / (√state + ε)` on every entry with a
/// nonzero gradient.
pub fn adagrad_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdagradState,
    lr: f64,
) -> Result<()> {
    let eps = state.eps;
    adagrad_dense(&mut params.entity, &grads.entity, &mut state.entity, lr, eps)?;
    match (&mut params.tail, &grads.tail, &mut state.tail) {
        (Some(p), Some(g), Some(s)) => adagrad_dense(p, g, s, lr, eps)?,
        (None, None, None) => {}
        _ => return Err(KgeError::Dimension("adagrad: tail table presence differs".into())),
    }
    adagrad_rows(&mut params.relation, &grads.relation, &mut state.relation, lr, eps)?;
    match (&mut params.time, &mut state.time) {
        (Some(p), Some(s)) => adagrad_rows(p, &grads.time, s, lr, eps)?,
        (None, None) => {
            if !grads.time.is_empty() {
                return Err(KgeError::Dimension("adagrad: time gradient without time table".into()));
            }
        }
        _ => return Err(KgeError::Dimension("adagrad: time table presence differs".into())),
    }
    Ok(())
}

/// Number of leading timestamp rows the smoother chains over.
pub fn smoother_chain_len(dataset: &Dataset) -> usize {
    let n = dataset.num_timestamps();
    if dataset.no_time.is_some() {
        n.saturating_sub(1)
    } else {
        n
    }
}

/// Mini-batch objective
/// `(1/b) Σ_i (w_i · CE_i + λ · pen_i) + smoother_weight · smoother`
/// together with its gradient.
pub fn batch_objective(
    params: &ModelParams,
    batch: &[BatchExample],
    reg: &RegSpec,
    chain_len: usize,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(params);
    let loss = batch_objective_into(params, batch, reg, chain_len, &mut grads)?;
    Ok((loss, grads))
}

fn batch_objective_into(
    params: &ModelParams,
    batch: &[BatchExample],
    reg: &RegSpec,
    chain_len: usize,
    grads: &mut Gradients,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(KgeError::Data("empty batch".into()));
    }
    reg.validate(params.kind)?;
    grads.clear();
    let inv_b = 1.0 / batch.len() as f64;
    let queries = params.batch_queries(batch)?;
    let mut upstream = params.batch_scores(&queries);
    let mut loss = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let mut row = upstream.row_mut(i);
        let row = row.as_slice_mut().unwrap();
        let scores = row.to_vec();
        loss += cross_entropy_into(&scores, ex.tail, ex.weight, row)?;
        row.iter_mut().for_each(|g| *g *= inv_b);
    }
    loss *= inv_b;
    params.backward_into(batch, &queries, upstream.view(), grads);
    if reg.lambda > 0.0 {
        let scale = reg.lambda * inv_b;
        let mut pen = 0.0;
        for ex in batch {
            pen += example_penalty(reg, params, ex, Some(grads), scale)?;
        }
        loss += scale * pen;
    }
    if reg.smoother != SmootherKind::None && reg.smoother_weight > 0.0 {
        if let Some(table) = &params.time {
            let s = timestamp_smoother(
                reg.smoother,
                params.kind,
                table,
                chain_len,
                Some(grads),
                reg.smoother_weight,
            );
            loss += reg.smoother_weight * s;
        }
    }
    Ok(loss)
}

/// One evaluation point of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid: Option<RankingReport>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Selected parameters (best validation MRR), rounded to f32 as stored
    /// in checkpoints.
    pub best: ModelParams,
    /// Parameters after the last epoch, unrounded.
    pub last: ModelParams,
    pub best_epoch: usize,
    pub best_valid: Option<RankingReport>,
    pub log: Vec<LogEntry>,
    /// Mean objective of every epoch, in order.
    pub epoch_losses: Vec<f64>,
}

impl FitOutcome {
    /// Tab-separated log: epoch, train loss, valid MRR, H@1, H@3, H@10.
    pub fn log_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tvalid_mrr\tvalid_h1\tvalid_h3\tvalid_h10\n");
        for e in &self.log {
            let _ = write!(s, "{}\t{:.6}", e.epoch, e.train_loss);
            match &e.valid {
                Some(r) => {
                    let _ = writeln!(s, "\t{}\t{}\t{}\t{}", r.mrr, r.hits1, r.hits3, r.hits10);
                }
                None => s.push_str("\t\t\t\t\n"),
            }
        }
        s
    }
}

/// Trainer state for step-by-step use.
pub struct Trainer {
    pub params: ModelParams,
    pub state: AdagradState,
    pub config: TrainConfig,
    chain_len: usize,
    grads: Gradients,
}

impl Trainer {
    pub fn new(config: TrainConfig, shape: Shape, chain_len: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(INIT_STREAM);
        let mut params = ModelParams::init(config.model, config.dim, shape, config.init_scale, &mut rng)?;
        if config.precision == Precision::F32 {
            params.round_to_f32();
        }
        Ok(Self::from_params(config, params, chain_len))
    }

    pub fn from_params(config: TrainConfig, params: ModelParams, chain_len: usize) -> Self {
        let state = AdagradState::new(&params, config.adagrad_eps);
        let grads = Gradients::zeros_like(&params);
        Trainer {
            params,
            state,
            config,
            chain_len,
            grads,
        }
    }

    /// Objective on `batch` before the update, then one Adagrad step.
    pub fn step(&mut self, batch: &[BatchExample]) -> Result<f64> {
        let loss = batch_objective_into(&self.params, batch, &self.config.reg, self.chain_len, &mut self.grads)?;
        if !loss.is_finite() || !self.grads.is_finite() {
            return Err(KgeError::Diverged {
                epoch: 0,
                batch: 0,
                max_abs_param: self.params.max_abs(),
            });
        }
        adagrad_step(&mut self.params, &self.grads, &mut self.state, self.config.learning_rate)?;
        if self.config.precision == Precision::F32 {
            self.params.round_to_f32();
        }
        Ok(loss)
    }
}

/// Trains on a reciprocal-augmented dataset and keeps the parameters with the
/// best filtered validation MRR.
pub fn fit(dataset: &Dataset, config: &TrainConfig) -> Result<FitOutcome> {
    if !dataset.reciprocal_applied {
        return Err(KgeError::Protocol(
            "training expects a reciprocal-augmented dataset".into(),
        ));
    }
    if dataset.temporal != config.model.is_temporal() {
        return Err(KgeError::Config(format!(
            "{} does not match a {} dataset",
            config.model,
            if dataset.temporal { "temporal" } else { "static" }
        )));
    }
    let shape = Shape {
        entities: dataset.num_entities(),
        relations: dataset.num_relations(),
        timestamps: dataset.num_timestamps(),
    };
    let mut trainer = Trainer::new(config.clone(), shape, smoother_chain_len(dataset))?;
    let freq = FrequencyTable::from_train(&dataset.train, dataset.num_entities());
    let examples = dataset
        .train
        .iter()
        .map(|f| Ok(BatchExample::new(f, freq.weight(f.tail, config.w0)?)))
        .collect::<Result<Vec<_>>>()?;
    let filter = if config.valid_every > 0 && !dataset.valid.is_empty() {
        Some(FilterIndex::build(dataset)?)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut batch: Vec<BatchExample> = Vec::with_capacity(config.batch_size);

    let mut best: Option<(ModelParams, usize, RankingReport)> = None;
    let mut log = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    log::info!("training {} dim={} seed={}", config.model, config.dim, config.seed);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i]));
            let loss = trainer.step(&batch).map_err(|e| match e {
                KgeError::Diverged { max_abs_param, .. } => KgeError::Diverged {
                    epoch,
                    batch: bi,
                    max_abs_param,
                },
                other => other,
            })?;
            total += loss * batch.len() as f64;
        }
        let train_loss = total / examples.len() as f64;
        epoch_losses.push(train_loss);

        let due = config.valid_every > 0 && (epoch % config.valid_every == 0 || epoch == config.epochs);
        if due {
            let valid = match &filter {
                Some(filter) => {
                    let mut snapshot = trainer.params.clone();
                    snapshot.round_to_f32();
                    let report = evaluate_split(&snapshot, &dataset.valid, filter, None)?;
                    let better = best.as_ref().is_none_or(|(_, _, b)| report.mrr > b.mrr);
                    if better {
                        best = Some((snapshot, epoch, report.clone()));
                    }
                    Some(report)
                }
                None => None,
            };
            log::info!(
                "epoch {epoch} loss {train_loss:.6}{}",
                valid.as_ref().map(|r| format!(" valid mrr {:.4}", r.mrr)).unwrap_or_default()
            );
            log.push(LogEntry {
                epoch,
                train_loss,
                valid,
            });
        }
    }

    let last = trainer.params;
    let (best, best_epoch, best_valid) = match best {
        Some((p, e, r)) => (p, e, Some(r)),
        None => {
            let mut p = last.clone();
            p.round_to_f32();
            (p, config.epochs, None)
        }
    };
    Ok(FitOutcome {
        best,
        last,
        best_epoch,
        best_valid,
        log,
        epoch_losses,
    })
}
