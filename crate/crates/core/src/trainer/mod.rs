//! 1:N training with reciprocal relations, validation-driven model
//! selection, grid search and checkpoints.
//!
//! Random streams: the batch order of epoch `e` comes from
//! `(seed, Shuffle, e, 0)`; the dropout masks of group `i` in batch `b` come
//! from `(seed, Dropout, e, b << 32 | i)`; initialization uses
//! `(seed, Init, 0, _)`.

mod adam;
mod checkpoint;
mod grid;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use grid::{grid_search, GridCell, GridResult, GridSpec};

use crate::error::{Error, Result};
use crate::eval::{self, RankMode};
use crate::kg::{Fold, KnowledgeGraph, Triple};
use crate::models::{BaselineParams, BatchOptions, DropoutSpec, Group, Model, ModelKind, TuckerParams};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate after every epoch.
    pub decay_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub dropout: DropoutSpec,
    /// Entity embedding width (baselines use it as their embedding width).
    pub d_e: usize,
    pub d_r: usize,
    pub adam: AdamConfig,
    pub label_smoothing: f64,
    /// Epochs between validation passes; 0 disables validation.
    pub eval_every: usize,
    /// Non-improving validation passes tolerated before stopping.
    pub patience: usize,
    /// Offset turning the TransE distance score into a logit.
    pub transe_margin: f64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Tucker,
            batch_size: 128,
            learning_rate: 0.005,
            decay_rate: 1.0,
            epochs: 200,
            seed: 0,
            dropout: DropoutSpec::default(),
            d_e: 200,
            d_r: 10,
            adam: AdamConfig::default(),
            label_smoothing: 0.0,
            eval_every: 10,
            patience: 20,
            transe_margin: 6.0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return bad(format!("learning_rate {} must be non-negative", self.learning_rate));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return bad(format!("decay_rate {} outside (0, 1]", self.decay_rate));
        }
        if self.d_e == 0 || self.d_r == 0 {
            return bad("embedding dimensions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing {} outside [0, 1)", self.label_smoothing));
        }
        self.dropout.validate()
    }

    /// Freshly initialized model for the given vocabulary sizes.
    pub fn init_model(&self, n_e: usize, n_r: usize) -> Result<Model> {
        match self.model.baseline() {
            None => Ok(Model::Tucker(TuckerParams::init(n_e, n_r, self.d_e, self.d_r, self.seed)?)),
            Some(kind) => Ok(Model::Baseline(BaselineParams::init(
                kind,
                n_e,
                n_r,
                self.d_e,
                self.transe_margin,
                self.seed,
            )?)),
        }
    }
}

/// `(h, r)` groups of the (reciprocal-augmented) training fold in key order.
pub fn build_groups(train: &[Triple]) -> Vec<Group> {
    let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for t in train {
        map.entry((t.h, t.r)).or_default().push(t.t);
    }
    map.into_iter()
        .map(|((h, r), mut tails)| {
            tails.sort_unstable();
            tails.dedup();
            Group { h, r, tails }
        })
        .collect()
}

/// One pass over the shuffled groups; returns the mean batch loss.
pub fn train_epoch(
    model: &mut Model,
    state: &mut AdamState,
    groups: &[Group],
    config: &TrainConfig,
    epoch: usize,
    lr: f64,
) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng::stream(config.seed, rng::Purpose::Shuffle, epoch as u64, 0));
    let mut total = 0.0;
    let mut batches = 0;
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let batch: Vec<Group> = chunk.iter().map(|&i| groups[i].clone()).collect();
        let seed = config.seed;
        let rng_for = move |i: usize| {
            rng::stream(seed, rng::Purpose::Dropout, epoch as u64, ((b as u64) << 32) | i as u64)
        };
        let opts = BatchOptions {
            dropout: if model.kind() == ModelKind::Tucker { config.dropout } else { DropoutSpec::NONE },
            label_smoothing: config.label_smoothing,
            rng_for: &rng_for,
        };
        let (loss, grads) = model.batch_gradients(&batch, &opts)?;
        if !loss.is_finite() {
            return Err(Error::Runtime(format!("non-finite loss in epoch {epoch}, batch {b}")));
        }
        adam_step(&mut model.blocks_mut(), &grads, state, lr, &config.adam)?;
        total += loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_mrr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    /// Parameters with the best validation MRR (final ones without validation).
    pub model: Model,
    /// Optimizer state matching `model`.
    pub adam: AdamState,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mrr: Option<f64>,
    pub epochs_run: usize,
}

impl FitOutput {
    pub fn log_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for rec in &self.log {
            s.push_str(&serde_json::to_string(rec)?);
            s.push('\n');
        }
        Ok(s)
    }
}

/// Trains with periodic validation and keeps the best-by-validation-MRR
/// parameters, stopping after more than `patience` non-improving passes.
pub fn fit(kg: &KnowledgeGraph, config: &TrainConfig) -> Result<FitOutput> {
    fit_from(kg, config, None)
}

/// As [`fit`], optionally starting from given parameters.
pub fn fit_from(kg: &KnowledgeGraph, config: &TrainConfig, start: Option<Model>) -> Result<FitOutput> {
    config.validate()?;
    let mut augmented = kg.clone();
    if !augmented.has_reciprocals() {
        augmented.add_reciprocals()?;
    }
    let groups = build_groups(augmented.train());
    let known = kg.known_true_set();
    let mut model = match start {
        Some(m) => m,
        None => config.init_model(kg.n_entities(), kg.n_model_relations())?,
    };
    eval::check_compatible(&model, kg)?;
    let mut state = AdamState::for_blocks(&model.blocks());
    let validate = config.eval_every > 0 && !kg.valid().is_empty();

    let mut lr = config.learning_rate;
    let mut log = Vec::new();
    let mut best: Option<(f64, Model, AdamState, usize)> = None;
    let mut stale = 0;
    let mut epochs_run = 0;
    for epoch in 0..config.epochs {
        let loss = train_epoch(&mut model, &mut state, &groups, config, epoch, lr)?;
        epochs_run = epoch + 1;
        let mut entry = EpochLog { epoch: epoch + 1, loss, lr, val_mrr: None };
        let due = validate && (epochs_run % config.eval_every == 0 || epochs_run == config.epochs);
        if due {
            let report = eval::evaluate(&model, kg, &known, Fold::Valid, RankMode::Filtered, config.threads)?;
            let mrr = report.overall.mrr;
            entry.val_mrr = Some(mrr);
            log::info!("epoch {epochs_run}: loss {loss:.6} val_mrr {mrr:.4}");
            if best.as_ref().is_none_or(|(b, ..)| mrr > *b) {
                best = Some((mrr, model.clone(), state.clone(), epochs_run));
                stale = 0;
            } else {
                stale += 1;
            }
        } else {
            log::debug!("epoch {epochs_run}: loss {loss:.6}");
        }
        log.push(entry);
        lr *= config.decay_rate;
        if stale > config.patience {
            log::info!("early stop after epoch {epochs_run}");
            break;
        }
    }
    Ok(match best {
        Some((mrr, m, s, e)) => FitOutput {
            model: m,
            adam: s,
            log,
            best_epoch: e,
            best_val_mrr: Some(mrr),
            epochs_run,
        },
        None => FitOutput { model, adam: state, log, best_epoch: epochs_run, best_val_mrr: None, epochs_run },
    })
}
