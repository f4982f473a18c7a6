//! Pipeline commands behind the CLI. Each reads its inputs, writes its
//! artifacts atomically under an output directory and echoes the effective
//! configuration next to them.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::affinity::{self, read_records, write_records};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{self, MetricsReport};
use crate::io::write_atomic;
use crate::kg::{Fold, KnowledgeGraph};
use crate::snn;
use crate::synth;
use crate::trainer::{self, load_checkpoint, save_checkpoint, Checkpoint};

pub const TRAIN_FILE: &str = "train.tsv";
pub const VALID_FILE: &str = "valid.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn echo_config(out: &Path, command: &str, config: &RunConfig) -> Result<()> {
    write_atomic(&out.join(format!("effective_config_{command}.txt")), config.to_text().as_bytes())
}

/// Loads `train.tsv`, `valid.tsv` and `test.tsv` from `dir`.
pub fn load_folds(dir: &Path, undirected: bool) -> Result<KnowledgeGraph> {
    KnowledgeGraph::from_folds(
        open(&dir.join(TRAIN_FILE))?,
        open(&dir.join(VALID_FILE))?,
        open(&dir.join(TEST_FILE))?,
        undirected,
    )
}

fn load_model_for(kg: &KnowledgeGraph, checkpoint: &Path) -> Result<Checkpoint> {
    let ck = load_checkpoint(checkpoint)?;
    ck.check_vocab(kg)?;
    eval::check_compatible(&ck.model, kg)?;
    Ok(ck)
}

pub fn gen_synthetic(config: &RunConfig, out: &Path) -> Result<()> {
    let spec = config.synthetic()?;
    let pop = synth::generate(&spec)?;
    let mut buf = Vec::new();
    write_records(&pop.records, &mut buf)?;
    write_atomic(&out.join("records.csv"), &buf)?;
    write_json(&out.join("planted_truth.json"), &pop.truth)?;
    echo_config(out, "gen-synthetic", config)?;
    log::info!("{} records, {} planted pairs", pop.records.len(), pop.truth.planted_pairs.len());
    Ok(())
}

pub fn build_network(config: &RunConfig, records: &Path, out: &Path) -> Result<()> {
    let recs = read_records(open(records)?)?;
    let built = affinity::build(&recs, &config.builder()?)?;
    let mut tsv = String::new();
    for (h, r, t) in &built.triples {
        let _ = writeln!(tsv, "{h}\t{r}\t{t}");
    }
    write_atomic(&out.join("triples.tsv"), tsv.as_bytes())?;
    write_json(&out.join("build_report.json"), &built.report)?;
    echo_config(out, "build-network", config)?;
    log::info!("{} nodes, {} triples", built.report.nodes, built.report.edges);
    Ok(())
}

#[derive(Serialize)]
struct SplitReport {
    train: usize,
    valid: usize,
    test: usize,
    entities: usize,
    relations: usize,
    duplicates: usize,
    self_loops: usize,
}

pub fn split(config: &RunConfig, triples: &Path, out: &Path) -> Result<()> {
    let kg = KnowledgeGraph::read_tsv(open(triples)?, config.undirected()?)?;
    let (valid, test) = config.split_sizes()?;
    let split = kg.split(valid, test, config.seed()?)?;
    for (fold, name) in [(Fold::Train, TRAIN_FILE), (Fold::Valid, VALID_FILE), (Fold::Test, TEST_FILE)] {
        let mut buf = Vec::new();
        split.write_tsv(fold, &mut buf).map_err(|e| Error::io(out.join(name), e))?;
        write_atomic(&out.join(name), &buf)?;
    }
    let report = SplitReport {
        train: split.train().len(),
        valid: split.valid().len(),
        test: split.test().len(),
        entities: split.n_entities(),
        relations: split.n_base_relations(),
        duplicates: kg.duplicates(),
        self_loops: kg.self_loops(),
    };
    write_json(&out.join("split_report.json"), &report)?;
    echo_config(out, "split", config)
}

#[derive(Serialize)]
struct TrainSummary {
    model: String,
    epochs_run: usize,
    best_epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_val_mrr: Option<f64>,
    final_loss: f64,
}

pub fn train(config: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let kg = load_folds(data, config.undirected()?)?;
    let cfg = config.train()?;
    let fitted = trainer::fit(&kg, &cfg)?;
    let ck = Checkpoint::new(
        fitted.model.clone(),
        Some(fitted.adam.clone()),
        &kg,
        &cfg,
        fitted.best_epoch,
        fitted.best_val_mrr,
    )?;
    save_checkpoint(&out.join(CHECKPOINT_DIR), &ck)?;
    write_atomic(&out.join("train_log.jsonl"), fitted.log_jsonl()?.as_bytes())?;
    let summary = TrainSummary {
        model: cfg.model.name().into(),
        epochs_run: fitted.epochs_run,
        best_epoch: fitted.best_epoch,
        best_val_mrr: fitted.best_val_mrr,
        final_loss: fitted.log.last().map_or(f64::NAN, |l| l.loss),
    };
    write_json(&out.join("train_summary.json"), &summary)?;
    echo_config(out, "train", config)
}

pub fn grid_search(config: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let kg = load_folds(data, config.undirected()?)?;
    let base = config.train()?;
    let result = trainer::grid_search(&kg, &config.grid()?, &base)?;
    write_atomic(&out.join("grid.csv"), result.csv().as_bytes())?;
    write_json(&out.join("grid.json"), &result.cells)?;
    let best = &result.cells[0];
    let ck = Checkpoint::new(
        result.best.model.clone(),
        Some(result.best.adam.clone()),
        &kg,
        &best.config,
        result.best.best_epoch,
        result.best.best_val_mrr,
    )?;
    save_checkpoint(&out.join(CHECKPOINT_DIR), &ck)?;
    echo_config(out, "grid-search", config)
}

fn ranks_csv(kg: &KnowledgeGraph, records: &[eval::RankRecord]) -> String {
    let mut s = String::from("head,relation,tail,direction,raw_rank,filtered_rank\n");
    let e = |i| kg.entities().label(i).unwrap_or_default();
    for r in records {
        let dir = match r.direction {
            eval::Direction::Tail => "tail",
            eval::Direction::Head => "head",
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e(r.triple.h),
            kg.relations().label(r.triple.r).unwrap_or_default(),
            e(r.triple.t),
            dir,
            r.raw_rank,
            r.filtered_rank
        );
    }
    s
}

pub fn evaluate(config: &RunConfig, data: &Path, checkpoint: &Path, fold: Fold, out: &Path) -> Result<()> {
    let kg = load_folds(data, config.undirected()?)?;
    let ck = load_model_for(&kg, checkpoint)?;
    if kg.fold(fold).is_empty() {
        return Err(Error::InvalidArgument(format!("{fold:?} fold is empty")));
    }
    let known = kg.known_true_set();
    let records = eval::rank_fold(&ck.model, &kg, &known, fold, config.threads()?)?;
    let report = MetricsReport::from_records(&records, &kg, fold, config.rank_mode()?)?;
    write_json(&out.join("metrics.json"), &report)?;
    write_atomic(&out.join("metrics_per_relation.csv"), report.relation_csv().as_bytes())?;
    write_atomic(&out.join("rank_hits.csv"), report.rank_hits_csv().as_bytes())?;
    write_atomic(&out.join("ranks.csv"), ranks_csv(&kg, &records).as_bytes())?;
    echo_config(out, "evaluate", config)?;
    let o = &report.overall;
    log::info!("hits@1 {:.4} hits@3 {:.4} hits@10 {:.4} mrr {:.4}", o.hits1, o.hits3, o.hits10, o.mrr);
    Ok(())
}

pub fn analyze(config: &RunConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let kg = load_folds(data, config.undirected()?)?;
    let ck = load_model_for(&kg, checkpoint)?;
    let params = ck
        .model
        .as_tucker()
        .ok_or_else(|| Error::InvalidArgument("SNN analysis needs a TuckER checkpoint".into()))?;
    let snn_cfg = config.snn()?;
    let known = kg.known_true_set();
    let records = eval::rank_fold(&ck.model, &kg, &known, Fold::Test, config.threads()?)?;
    let hits = snn::collect_hits(&records, snn_cfg.cutoff);
    let report = snn::analyze_predictions(params, &kg, &hits, &snn_cfg)?;
    write_json(&out.join("snn_report.json"), &report)?;
    write_atomic(&out.join("snn_per_decile.csv"), report.csv().as_bytes())?;
    echo_config(out, "analyze", config)?;
    log::info!("{} hits, {:.3} network-grounded", report.n_hits, report.frac_network_grounded);
    Ok(())
}

pub fn export_heatmaps(config: &RunConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let kg = load_folds(data, config.undirected()?)?;
    let ck = load_model_for(&kg, checkpoint)?;
    let params = ck
        .model
        .as_tucker()
        .ok_or_else(|| Error::InvalidArgument("heatmaps need a TuckER checkpoint".into()))?;
    let maps = snn::export_relation_heatmaps(params, &kg)?;
    let mut written = Vec::new();
    let mut asym = String::from("relation,asymmetry\n");
    for m in &maps {
        let path = out.join(m.file_name());
        write_atomic(&path, snn::matrix_to_csv(&m.matrix).as_bytes())?;
        written.push(path);
        let _ = writeln!(asym, "{},{}", m.relation, m.asymmetry);
    }
    write_atomic(&out.join("asymmetry.csv"), asym.as_bytes())?;
    echo_config(out, "export-heatmaps", config)?;
    Ok(written)
}

pub fn parse_fold(s: &str) -> Result<Fold> {
    match s {
        "train" => Ok(Fold::Train),
        "valid" => Ok(Fold::Valid),
        "test" => Ok(Fold::Test),
        other => Err(Error::InvalidArgument(format!("unknown fold {other:?}"))),
    }
}
