use serde::{Deserialize, Serialize};

use super::{fit, FitOutput, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{self, RankMode};
use crate::kg::{Fold, KnowledgeGraph};
use crate::models::DropoutSpec;

/// Candidate values per hyperparameter; the sweep is their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d_r: Vec<usize>,
    pub d_e: Vec<usize>,
    pub dropout_input: Vec<f64>,
    pub dropout_relation: Vec<f64>,
    pub dropout_combined: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

impl GridSpec {
    /// The reference search ranges at the default learning rate.
    pub fn reference() -> Self {
        let rates = vec![0.2, 0.3, 0.4, 0.5];
        Self {
            d_r: vec![10, 20, 30],
            d_e: vec![100, 200, 500, 1000],
            dropout_input: rates.clone(),
            dropout_relation: rates.clone(),
            dropout_combined: rates,
            learning_rate: vec![0.005],
        }
    }

    /// A one-cell grid holding exactly the values of `base`.
    pub fn single(base: &TrainConfig) -> Self {
        Self {
            d_r: vec![base.d_r],
            d_e: vec![base.d_e],
            dropout_input: vec![base.dropout.input],
            dropout_relation: vec![base.dropout.relation],
            dropout_combined: vec![base.dropout.combined],
            learning_rate: vec![base.learning_rate],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lens = [
            ("d_r", self.d_r.len()),
            ("d_e", self.d_e.len()),
            ("dropout_input", self.dropout_input.len()),
            ("dropout_relation", self.dropout_relation.len()),
            ("dropout_combined", self.dropout_combined.len()),
            ("learning_rate", self.learning_rate.len()),
        ];
        for (name, n) in lens {
            if n == 0 {
                return Err(Error::InvalidArgument(format!("grid list {name} is empty")));
            }
        }
        Ok(())
    }

    /// Every cell applied on top of `base`, in lexicographic list order.
    pub fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &d_r in &self.d_r {
            for &d_e in &self.d_e {
                for &input in &self.dropout_input {
                    for &relation in &self.dropout_relation {
                        for &combined in &self.dropout_combined {
                            for &learning_rate in &self.learning_rate {
                                out.push(TrainConfig {
                                    d_r,
                                    d_e,
                                    learning_rate,
                                    dropout: DropoutSpec { input, relation, combined },
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub config: TrainConfig,
    pub val_mrr: f64,
    pub val_hits1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Cells sorted by validation MRR, then hits@1, both descending.
    pub cells: Vec<GridCell>,
    pub best: FitOutput,
}

impl GridResult {
    pub fn csv(&self) -> String {
        let mut s = String::from(
            "rank,d_r,d_e,dropout_input,dropout_relation,dropout_combined,learning_rate,val_mrr,val_hits1,best_epoch\n",
        );
        for (i, c) in self.cells.iter().enumerate() {
            let k = &c.config;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                i + 1,
                k.d_r,
                k.d_e,
                k.dropout.input,
                k.dropout.relation,
                k.dropout.combined,
                k.learning_rate,
                c.val_mrr,
                c.val_hits1,
                c.best_epoch
            ));
        }
        s
    }
}

/// Trains every cell with the same seed and ranks them on the validation fold.
pub fn grid_search(kg: &KnowledgeGraph, grid: &GridSpec, base: &TrainConfig) -> Result<GridResult> {
    grid.validate()?;
    if kg.valid().is_empty() {
        return Err(Error::InvalidArgument("grid search needs a validation fold".into()));
    }
    let known = kg.known_true_set();
    let mut scored = Vec::new();
    for (i, config) in grid.cells(base).into_iter().enumerate() {
        log::info!("grid cell {}: d_r={} d_e={} lr={}", i + 1, config.d_r, config.d_e, config.learning_rate);
        let out = fit(kg, &config)?;
        let report = eval::evaluate(&out.model, kg, &known, Fold::Valid, RankMode::Filtered, config.threads)?;
        let cell = GridCell {
            config,
            val_mrr: report.overall.mrr,
            val_hits1: report.overall.hits1,
            best_epoch: out.best_epoch,
            epochs_run: out.epochs_run,
        };
        scored.push((cell, out));
    }
    scored.sort_by(|(a, _), (b, _)| {
        b.val_mrr.total_cmp(&a.val_mrr).then(b.val_hits1.total_cmp(&a.val_hits1))
    });
    let mut iter = scored.into_iter();
    let (first, best) = iter.next().expect("grid has at least one cell");
    let mut cells = vec![first];
    cells.extend(iter.map(|(c, _)| c));
    Ok(GridResult { cells, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kg() -> KnowledgeGraph {
        // Two 8-cliques: held-out intra-community edges are predictable.
        let mut triples = Vec::new();
        for c in 0..2 {
            for i in 0..8 {
                for j in i + 1..8 {
                    let rel = if c == 0 { "d1" } else { "d2" };
                    triples.push((format!("c{c}e{i}"), rel.to_string(), format!("c{c}e{j}")));
                }
            }
        }
        KnowledgeGraph::from_labeled(triples, true).unwrap().split(6, 6, 7).unwrap()
    }

    fn base() -> TrainConfig {
        TrainConfig { d_e: 8, d_r: 2, epochs: 100, eval_every: 25, ..Default::default() }
    }

    #[test]
    fn reference_grid_contains_winning_cell() {
        let cells = GridSpec::reference().cells(&TrainConfig::default());
        assert_eq!(cells.len(), 3 * 4 * 4 * 4 * 4);
        assert!(cells.iter().any(|c| c.d_r == 10
            && c.d_e == 200
            && c.dropout == DropoutSpec { input: 0.5, relation: 0.2, combined: 0.2 }));
    }

    #[test]
    fn single_cell_matches_fit() {
        let kg = kg();
        let res = grid_search(&kg, &GridSpec::single(&base()), &base()).unwrap();
        let direct = fit(&kg, &base()).unwrap();
        assert_eq!(res.cells.len(), 1);
        assert_eq!(res.best.model, direct.model);
        assert_eq!(res.cells[0].val_mrr, direct.best_val_mrr.unwrap());
    }

    #[test]
    fn zero_lr_cell_ranks_last() {
        let kg = kg();
        let grid = GridSpec { learning_rate: vec![0.0, 0.005], ..GridSpec::single(&base()) };
        let res = grid_search(&kg, &grid, &base()).unwrap();
        assert_eq!(res.cells[0].config.learning_rate, 0.005);
        assert!(res.cells[0].val_mrr > res.cells[1].val_mrr);
        assert_eq!(res.csv().lines().count(), 3);
    }

    #[test]
    fn empty_list_rejected() {
        let grid = GridSpec { d_e: vec![], ..GridSpec::single(&base()) };
        assert!(grid_search(&kg(), &grid, &base()).is_err());
    }
}
