//! Checkpoint directory: `meta.json` plus one little-endian `f64` array per
//! parameter block (`E.bin`, `R.bin`, `G.bin`) and per Adam moment
//! (`adam_m_E.bin`, `adam_v_E.bin`, ...).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, TrainConfig};
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_dir_atomic};
use crate::kg::KnowledgeGraph;
use crate::models::{BaselineParams, Model, ModelKind, TuckerParams};
use crate::tensor::{Matrix, Tensor3};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub model: ModelKind,
    pub n_entities: usize,
    pub n_relations: usize,
    pub entity_vocab_hash: String,
    pub relation_vocab_hash: String,
    /// Relation labels including reciprocals, in id order.
    pub relation_labels: Vec<String>,
    pub blocks: Vec<BlockMeta>,
    pub config: TrainConfig,
    pub epoch: usize,
    pub adam_step: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_val_mrr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: Model,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(
        model: Model,
        adam: Option<AdamState>,
        kg: &KnowledgeGraph,
        config: &TrainConfig,
        epoch: usize,
        best_val_mrr: Option<f64>,
    ) -> Result<Self> {
        crate::eval::check_compatible(&model, kg)?;
        let relation_labels = kg.relation_labels_with_reciprocals();
        let meta = CheckpointMeta {
            format_version: FORMAT_VERSION,
            model: model.kind(),
            n_entities: model.n_entities(),
            n_relations: model.n_relations(),
            entity_vocab_hash: kg.entities().hash(),
            relation_vocab_hash: crate::kg::Vocab::from_labels(relation_labels.iter().cloned())?.hash(),
            relation_labels,
            blocks: block_shapes(&model),
            config: config.clone(),
            epoch,
            adam_step: adam.as_ref().map_or(0, |a| a.step),
            best_val_mrr,
        };
        Ok(Self { meta, model, adam })
    }

    /// Refuses a graph whose vocabularies differ from the training ones.
    pub fn check_vocab(&self, kg: &KnowledgeGraph) -> Result<()> {
        let rel_hash =
            crate::kg::Vocab::from_labels(kg.relation_labels_with_reciprocals())?.hash();
        if kg.entities().hash() != self.meta.entity_vocab_hash || rel_hash != self.meta.relation_vocab_hash {
            return Err(Error::Consistency(
                "checkpoint vocabulary does not match the data (stale checkpoint?)".into(),
            ));
        }
        Ok(())
    }
}

fn block_shapes(model: &Model) -> Vec<BlockMeta> {
    let m = |name: &str, shape: Vec<usize>| BlockMeta { name: name.into(), shape };
    match model {
        Model::Tucker(p) => vec![
            m("E", vec![p.entities.rows(), p.entities.cols()]),
            m("R", vec![p.relations.rows(), p.relations.cols()]),
            m("G", p.core.dims().to_vec()),
        ],
        Model::Baseline(p) => vec![
            m("E", vec![p.entities.rows(), p.entities.cols()]),
            m("R", vec![p.relations.rows(), p.relations.cols()]),
        ],
    }
}

fn to_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Consistency(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

/// Writes the checkpoint directory atomically (staging dir + rename).
pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_dir_atomic(dir, |stage| {
        let mut meta = serde_json::to_string_pretty(&ckpt.meta)?;
        meta.push('\n');
        write_atomic(&stage.join("meta.json"), meta.as_bytes())?;
        let names = ckpt.model.block_names();
        for (name, block) in names.iter().zip(ckpt.model.blocks()) {
            write_atomic(&stage.join(format!("{name}.bin")), &to_bytes(block))?;
        }
        if let Some(adam) = &ckpt.adam {
            for (i, name) in names.iter().enumerate() {
                write_atomic(&stage.join(format!("adam_m_{name}.bin")), &to_bytes(&adam.m[i]))?;
                write_atomic(&stage.join(format!("adam_v_{name}.bin")), &to_bytes(&adam.v[i]))?;
            }
        }
        Ok(())
    })
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Consistency(format!("unsupported checkpoint version {}", meta.format_version)));
    }
    let mut blocks = Vec::new();
    for b in &meta.blocks {
        let n = b.shape.iter().product();
        blocks.push(read_f64s(&dir.join(format!("{}.bin", b.name)), n)?);
    }
    let shape = |i: usize| &meta.blocks[i].shape;
    let model = match meta.model.baseline() {
        None => {
            if meta.blocks.len() != 3 || shape(2).len() != 3 {
                return Err(Error::Consistency("TuckER checkpoint needs E, R, G blocks".into()));
            }
            let g = shape(2);
            Model::Tucker(TuckerParams::new(
                Matrix::from_vec(shape(0)[0], shape(0)[1], blocks[0].clone())?,
                Matrix::from_vec(shape(1)[0], shape(1)[1], blocks[1].clone())?,
                Tensor3::from_vec([g[0], g[1], g[2]], blocks[2].clone())?,
            )?)
        }
        Some(kind) => {
            if meta.blocks.len() != 2 {
                return Err(Error::Consistency("baseline checkpoint needs E, R blocks".into()));
            }
            Model::Baseline(BaselineParams::new(
                kind,
                Matrix::from_vec(shape(0)[0], shape(0)[1], blocks[0].clone())?,
                Matrix::from_vec(shape(1)[0], shape(1)[1], blocks[1].clone())?,
                meta.config.transe_margin,
            )?)
        }
    };
    let adam_path = dir.join(format!("adam_m_{}.bin", meta.blocks[0].name));
    let adam = if adam_path.exists() {
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (b, data) in meta.blocks.iter().zip(&blocks) {
            m.push(read_f64s(&dir.join(format!("adam_m_{}.bin", b.name)), data.len())?);
            v.push(read_f64s(&dir.join(format!("adam_v_{}.bin", b.name)), data.len())?);
        }
        Some(AdamState { step: meta.adam_step, m, v })
    } else {
        None
    };
    Ok(Checkpoint { meta, model, adam })
}
