//! Flat `key = value` run configuration.
//!
//! Values come from the built-in defaults, then an optional config file,
//! then `--set key=value` overrides. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::affinity::BuilderConfig;
use crate::error::{Error, Result};
use crate::eval::RankMode;
use crate::models::{DropoutSpec, ModelKind};
use crate::snn::SnnConfig;
use crate::synth::SyntheticSpec;
use crate::trainer::{AdamConfig, GridSpec, TrainConfig};

/// `(key, default, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "global seed for splitting, initialization, shuffling and dropout"),
    ("threads", "1", "evaluation worker threads; 1 keeps runs bit-reproducible"),
    ("graph.undirected", "true", "treat triples as undirected edges"),
    ("builder.k_security", "20", "multiplier on the random co-occurrence expectation (> 1)"),
    ("builder.min_occurrences", "20", "drop pairs involving surnames seen fewer times"),
    ("builder.kcore_k", "2", "k of the k-core pruning"),
    ("builder.n_deciles", "10", "number of SES quantile bins"),
    ("builder.rare_filter_first", "false", "apply the rare-surname filter before thresholding"),
    ("split.valid", "5000", "validation fold size"),
    ("split.test", "5000", "test fold size"),
    ("train.model", "tucker", "tucker | transe | distmult | complex"),
    ("train.batch_size", "128", "(head, relation) groups per batch"),
    ("train.learning_rate", "0.005", "Adam step size"),
    ("train.decay_rate", "1.0", "per-epoch learning-rate multiplier in (0, 1]"),
    ("train.epochs", "200", "maximum epochs"),
    ("train.d_e", "200", "entity embedding width"),
    ("train.d_r", "10", "relation embedding width (TuckER)"),
    ("train.dropout_input", "0.5", "dropout on the head embedding"),
    ("train.dropout_relation", "0.2", "dropout on the relation matrix"),
    ("train.dropout_combined", "0.2", "dropout on the combined head-relation vector"),
    ("train.adam_beta1", "0.9", "Adam first-moment decay"),
    ("train.adam_beta2", "0.999", "Adam second-moment decay"),
    ("train.adam_eps", "1e-8", "Adam denominator offset"),
    ("train.label_smoothing", "0", "label smoothing in [0, 1)"),
    ("train.eval_every", "10", "epochs between validation passes; 0 disables"),
    ("train.patience", "20", "non-improving validation passes before stopping"),
    ("train.transe_margin", "6", "offset turning the TransE distance into a logit"),
    ("grid.d_r", "10,20,30", "grid candidates for d_r"),
    ("grid.d_e", "100,200,500,1000", "grid candidates for d_e"),
    ("grid.dropout_input", "0.2,0.3,0.4,0.5", "grid candidates for the input dropout"),
    ("grid.dropout_relation", "0.2,0.3,0.4,0.5", "grid candidates for the relation dropout"),
    ("grid.dropout_combined", "0.2,0.3,0.4,0.5", "grid candidates for the combined dropout"),
    ("grid.learning_rate", "0.005", "grid candidates for the learning rate"),
    ("eval.mode", "filtered", "filtered | raw"),
    ("snn.tau", "0", "SNN above which a source explains a hit"),
    ("snn.k", "50", "neighbors per entity in the embedding kNN"),
    ("snn.cutoff", "10", "largest filtered rank counted as a hit"),
    ("synth.communities", "2", "planted communities"),
    ("synth.surnames_per_community", "150", "surnames per community"),
    ("synth.individuals", "10000", "individuals generated"),
    ("synth.bias", "0.6", "probability of carrying a planted surname pair"),
    ("synth.blocks_per_community", "20", "census blocks per community"),
];

/// Key/default table for `--help`.
pub fn help_table() -> String {
    let width = KEYS.iter().map(|(k, _, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (default in brackets):\n");
    for (k, d, h) in KEYS {
        s.push_str(&format!("  {k:width$}  [{d}] {h}\n"));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect() }
    }
}

impl RunConfig {
    /// Applies a config file: `key = value` lines, `#` comments, blank lines.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected key = value, got {line:?}") })?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key listed in KEYS")
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e| Error::InvalidArgument(format!("{key} = {v:?}: {e}")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .split(',')
            .map(|v| v.trim().parse().map_err(|e| Error::InvalidArgument(format!("{key} item {v:?}: {e}"))))
            .collect()
    }

    /// Effective configuration, one sorted `key = value` per line.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Parses every key once so bad values surface before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.threads()?;
        self.undirected()?;
        self.builder()?.validate()?;
        self.split_sizes()?;
        self.train()?.validate()?;
        self.grid()?.validate()?;
        self.rank_mode()?;
        self.snn()?;
        self.synthetic()?;
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    pub fn threads(&self) -> Result<usize> {
        let t: usize = self.parse("threads")?;
        if t == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        Ok(t)
    }

    pub fn undirected(&self) -> Result<bool> {
        self.parse("graph.undirected")
    }

    pub fn builder(&self) -> Result<BuilderConfig> {
        Ok(BuilderConfig {
            k_security: self.parse("builder.k_security")?,
            min_occurrences: self.parse("builder.min_occurrences")?,
            kcore_k: self.parse("builder.kcore_k")?,
            n_deciles: self.parse("builder.n_deciles")?,
            rare_filter_first: self.parse("builder.rare_filter_first")?,
        })
    }

    pub fn split_sizes(&self) -> Result<(usize, usize)> {
        Ok((self.parse("split.valid")?, self.parse("split.test")?))
    }

    pub fn train(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            model: self.parse::<ModelKind>("train.model")?,
            batch_size: self.parse("train.batch_size")?,
            learning_rate: self.parse("train.learning_rate")?,
            decay_rate: self.parse("train.decay_rate")?,
            epochs: self.parse("train.epochs")?,
            seed: self.seed()?,
            dropout: DropoutSpec {
                input: self.parse("train.dropout_input")?,
                relation: self.parse("train.dropout_relation")?,
                combined: self.parse("train.dropout_combined")?,
            },
            d_e: self.parse("train.d_e")?,
            d_r: self.parse("train.d_r")?,
            adam: AdamConfig {
                beta1: self.parse("train.adam_beta1")?,
                beta2: self.parse("train.adam_beta2")?,
                eps: self.parse("train.adam_eps")?,
            },
            label_smoothing: self.parse("train.label_smoothing")?,
            eval_every: self.parse("train.eval_every")?,
            patience: self.parse("train.patience")?,
            transe_margin: self.parse("train.transe_margin")?,
            threads: self.threads()?,
        })
    }

    pub fn grid(&self) -> Result<GridSpec> {
        Ok(GridSpec {
            d_r: self.list("grid.d_r")?,
            d_e: self.list("grid.d_e")?,
            dropout_input: self.list("grid.dropout_input")?,
            dropout_relation: self.list("grid.dropout_relation")?,
            dropout_combined: self.list("grid.dropout_combined")?,
            learning_rate: self.list("grid.learning_rate")?,
        })
    }

    pub fn rank_mode(&self) -> Result<RankMode> {
        self.parse("eval.mode")
    }

    pub fn snn(&self) -> Result<SnnConfig> {
        Ok(SnnConfig { tau: self.parse("snn.tau")?, k: self.parse("snn.k")?, cutoff: self.parse("snn.cutoff")? })
    }

    pub fn synthetic(&self) -> Result<SyntheticSpec> {
        Ok(SyntheticSpec {
            communities: self.parse("synth.communities")?,
            surnames_per_community: self.parse("synth.surnames_per_community")?,
            individuals: self.parse("synth.individuals")?,
            bias: self.parse("synth.bias")?,
            blocks_per_community: self.parse("synth.blocks_per_community")?,
            seed: self.seed()?,
        })
    }
}
