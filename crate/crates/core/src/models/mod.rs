//! Link-prediction scorers with closed-form gradients.

mod baseline;
mod dropout;
mod loss;
mod tucker;

use serde::{Deserialize, Serialize};

pub use baseline::{BaselineKind, BaselineParams};
pub use dropout::{apply_dropout, DropoutMasks, DropoutSpec};
pub use loss::{bce_loss, predict_sigmoid, sigmoid, smooth_labels, BceLoss};
pub use tucker::{grad_tucker, TuckerAccumulator, TuckerGrads, TuckerParams};

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::rng::Rng;
use crate::tensor::Vector;

/// One 1:N training unit: a `(head, relation)` pair and all its true tails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub h: EntityId,
    pub r: RelationId,
    pub tails: Vec<EntityId>,
}

pub struct BatchOptions<'a> {
    pub dropout: DropoutSpec,
    pub label_smoothing: f64,
    /// Dropout stream for the `i`-th group of the batch.
    pub rng_for: &'a dyn Fn(usize) -> Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tucker,
    TransE,
    DistMult,
    ComplEx,
}

impl ModelKind {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            ModelKind::Tucker => None,
            ModelKind::TransE => Some(BaselineKind::TransE),
            ModelKind::DistMult => Some(BaselineKind::DistMult),
            ModelKind::ComplEx => Some(BaselineKind::ComplEx),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Tucker => "tucker",
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tucker" => Ok(ModelKind::Tucker),
            "transe" => Ok(ModelKind::TransE),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

/// Any trainable scorer.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tucker(TuckerParams),
    Baseline(BaselineParams),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Tucker(_) => ModelKind::Tucker,
            Model::Baseline(b) => match b.kind {
                BaselineKind::TransE => ModelKind::TransE,
                BaselineKind::DistMult => ModelKind::DistMult,
                BaselineKind::ComplEx => ModelKind::ComplEx,
            },
        }
    }

    pub fn n_entities(&self) -> usize {
        match self {
            Model::Tucker(p) => p.n_entities(),
            Model::Baseline(p) => p.n_entities(),
        }
    }

    pub fn n_relations(&self) -> usize {
        match self {
            Model::Tucker(p) => p.n_relations(),
            Model::Baseline(p) => p.n_relations(),
        }
    }

    /// Inference-time scores of every candidate tail.
    pub fn score_all_tails(&self, h: EntityId, r: RelationId) -> Result<Vector> {
        match self {
            Model::Tucker(p) => p.score_all_tails(h, r, None),
            Model::Baseline(p) => p.score_all_tails(h, r),
        }
    }

    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<f64> {
        match self {
            Model::Tucker(p) => p.score(h, r, t, None),
            Model::Baseline(p) => p.score(h, r, t),
        }
    }

    /// Batch-mean loss and gradients, one vector per parameter block.
    pub fn batch_gradients(&self, batch: &[Group], opts: &BatchOptions<'_>) -> Result<(f64, Vec<Vec<f64>>)> {
        match self {
            Model::Tucker(p) => tucker::batch_gradients(p, batch, opts),
            Model::Baseline(p) => baseline::batch_gradients(p, batch, opts),
        }
    }

    /// Parameter block names, matching the checkpoint file stems.
    pub fn block_names(&self) -> &'static [&'static str] {
        match self {
            Model::Tucker(_) => &["E", "R", "G"],
            Model::Baseline(_) => &["E", "R"],
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        match self {
            Model::Tucker(p) => vec![p.entities.data(), p.relations.data(), p.core.data()],
            Model::Baseline(p) => vec![p.entities.data(), p.relations.data()],
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Tucker(p) => vec![p.entities.data_mut(), p.relations.data_mut(), p.core.data_mut()],
            Model::Baseline(p) => vec![p.entities.data_mut(), p.relations.data_mut()],
        }
    }

    pub fn as_tucker(&self) -> Option<&TuckerParams> {
        match self {
            Model::Tucker(p) => Some(p),
            Model::Baseline(_) => None,
        }
    }
}
