//! Decile-stratified surname affinity graph construction.
//!
//! Pipeline: SES normalization → decile assignment → pair counting →
//! co-occurrence thresholding → rare-surname removal → k-core pruning.
//! Surname occurrence counts `n_s` and the population size `N` are fixed
//! at counting time; filters never recompute them, which keeps every stage
//! idempotent.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub paternal: String,
    pub maternal: String,
    #[serde(rename = "ses")]
    pub ses_raw: f64,
    #[serde(rename = "block")]
    pub block_id: String,
}

impl IndividualRecord {
    /// Case-folds and trims both surnames.
    pub fn new(paternal: &str, maternal: &str, ses_raw: f64, block_id: &str) -> Result<Self> {
        let paternal = fold_surname(paternal);
        let maternal = fold_surname(maternal);
        if paternal.is_empty() || maternal.is_empty() {
            return Err(Error::InvalidArgument("surnames must be non-empty".into()));
        }
        if !ses_raw.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite SES value {ses_raw}")));
        }
        Ok(Self { paternal, maternal, ses_raw, block_id: block_id.to_owned() })
    }

    /// The two surnames in lexicographic order.
    pub fn canonical_pair(&self) -> (&str, &str) {
        if self.paternal <= self.maternal {
            (&self.paternal, &self.maternal)
        } else {
            (&self.maternal, &self.paternal)
        }
    }
}

fn fold_surname(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Reads the `paternal,maternal,ses,block` CSV format.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<IndividualRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(&e, 1))?.clone();
    let expected = ["paternal", "maternal", "ses", "block"];
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, found {:?}", expected.join(","), headers),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| csv_error(&e, line))?;
        let ses: f64 = row[2].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid SES value {:?}", &row[2]),
        })?;
        let rec = IndividualRecord::new(&row[0], &row[1], ses, row[3].trim())
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

fn csv_error(e: &csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse { line, message: e.to_string() }
}

pub fn write_records<W: std::io::Write>(records: &[IndividualRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let wrap = |e: csv::Error| Error::Runtime(e.to_string());
    wtr.write_record(["paternal", "maternal", "ses", "block"]).map_err(wrap)?;
    for r in records {
        wtr.write_record([&r.paternal, &r.maternal, &r.ses_raw.to_string(), &r.block_id])
            .map_err(wrap)?;
    }
    wtr.flush().map_err(|e| Error::Runtime(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuilderConfig {
    /// Security multiplier on the random co-occurrence expectation; must exceed 1.
    pub k_security: f64,
    pub min_occurrences: u64,
    pub kcore_k: usize,
    pub n_deciles: usize,
    /// Run the rare-surname filter before thresholding instead of after.
    pub rare_filter_first: bool,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self { k_security: 20.0, min_occurrences: 20, kcore_k: 2, n_deciles: 10, rare_filter_first: false }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_security.is_nan() || self.k_security <= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "k_security must be > 1, got {}",
                self.k_security
            )));
        }
        if self.n_deciles < 2 {
            return Err(Error::InvalidArgument("n_deciles must be at least 2".into()));
        }
        Ok(())
    }
}

/// `z_i = 100 (x_i - min) / (max - min)`.
pub fn normalize_ses(values: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if values.is_empty() || hi <= lo {
        return Err(Error::InvalidArgument(
            "SES normalization needs at least two distinct values".into(),
        ));
    }
    let span = hi - lo;
    Ok(values.iter().map(|&x| 100.0 * (x - lo) / span).collect())
}

/// Equal-count cut points: boundary `d` is the order statistic at
/// `floor(d * n / n_deciles)` for `d = 1..n_deciles-1`.
pub fn decile_boundaries(z: &[f64], n_deciles: usize) -> Result<Vec<f64>> {
    if z.is_empty() || n_deciles < 2 {
        return Err(Error::InvalidArgument("need values and at least two deciles".into()));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let b: Vec<f64> = (1..n_deciles).map(|d| sorted[d * n / n_deciles]).collect();
    if b.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "SES quantiles are not strictly increasing (too many tied values)".into(),
        ));
    }
    Ok(b)
}

/// 1-based decile of `z`: interval `[b_{d-1}, b_d)`, the top one closed at 100.
pub fn decile_of(z: f64, boundaries: &[f64]) -> Result<usize> {
    if !(0.0..=100.0).contains(&z) {
        return Err(Error::InvalidArgument(format!("score {z} outside [0, 100]")));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("decile boundaries must be strictly increasing".into()));
    }
    Ok(1 + boundaries.partition_point(|&b| b <= z))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub s1: String,
    pub s2: String,
    pub decile: usize,
    pub weight: u64,
}

/// Per-pair decile weights plus population-level occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairTable {
    n_deciles: usize,
    /// `(s1, s2)` with `s1 < s2` → weight per decile (index `d - 1`).
    pairs: BTreeMap<(String, String), Vec<u64>>,
    occurrences: BTreeMap<String, u64>,
    total: u64,
}

impl PairTable {
    pub fn n_deciles(&self) -> usize {
        self.n_deciles
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Individuals in the sample (`N`).
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Occurrences `n_s` of a surname in either slot.
    pub fn occurrences(&self, s: &str) -> u64 {
        self.occurrences.get(s).copied().unwrap_or(0)
    }

    pub fn occurrence_map(&self) -> &BTreeMap<String, u64> {
        &self.occurrences
    }

    /// Total weight `n_ss` of a pair summed over deciles.
    pub fn pair_weight(&self, s1: &str, s2: &str) -> u64 {
        let key = ordered(s1, s2);
        self.pairs.get(&key).map_or(0, |w| w.iter().sum())
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str, &[u64])> {
        self.pairs.iter().map(|((a, b), w)| (a.as_str(), b.as_str(), w.as_slice()))
    }

    /// Flattened per-decile counts, zero weights omitted.
    pub fn pair_counts(&self) -> Vec<PairCount> {
        let mut out = Vec::new();
        for ((s1, s2), w) in &self.pairs {
            for (d, &weight) in w.iter().enumerate() {
                if weight > 0 {
                    out.push(PairCount { s1: s1.clone(), s2: s2.clone(), decile: d + 1, weight });
                }
            }
        }
        out
    }

    fn retain(&self, mut keep: impl FnMut(&str, &str, &[u64]) -> bool) -> PairTable {
        let pairs = self
            .pairs
            .iter()
            .filter(|((a, b), w)| keep(a, b, w))
            .map(|(k, w)| (k.clone(), w.clone()))
            .collect();
        PairTable { pairs, ..self.without_pairs() }
    }

    fn without_pairs(&self) -> PairTable {
        PairTable {
            n_deciles: self.n_deciles,
            pairs: BTreeMap::new(),
            occurrences: self.occurrences.clone(),
            total: self.total,
        }
    }

    /// Surnames touched by at least one pair.
    pub fn nodes(&self) -> BTreeSet<&str> {
        self.pairs.keys().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect()
    }

    /// Merges another table's counts; addition is order-independent.
    pub fn merge(&mut self, other: &PairTable) -> Result<()> {
        if other.n_deciles != self.n_deciles {
            return Err(Error::Consistency("decile counts differ".into()));
        }
        for (k, w) in &other.pairs {
            let e = self.pairs.entry(k.clone()).or_insert_with(|| vec![0; self.n_deciles]);
            for (a, b) in e.iter_mut().zip(w) {
                *a += b;
            }
        }
        for (s, n) in &other.occurrences {
            *self.occurrences.entry(s.clone()).or_insert(0) += n;
        }
        self.total += other.total;
        Ok(())
    }
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Counts individuals per unordered surname pair and decile.
///
/// `deciles[i]` is the 1-based decile of `records[i]`. Individuals whose two
/// surnames coincide count towards `n_s` once and produce no pair.
pub fn count_pairs(
    records: &[IndividualRecord],
    deciles: &[usize],
    n_deciles: usize,
) -> Result<PairTable> {
    if records.len() != deciles.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} records but {} decile labels",
            records.len(),
            deciles.len()
        )));
    }
    let mut table = PairTable {
        n_deciles,
        pairs: BTreeMap::new(),
        occurrences: BTreeMap::new(),
        total: records.len() as u64,
    };
    for (rec, &d) in records.iter().zip(deciles) {
        if d == 0 || d > n_deciles {
            return Err(Error::InvalidArgument(format!("decile {d} outside 1..={n_deciles}")));
        }
        let (a, b) = rec.canonical_pair();
        *table.occurrences.entry(a.to_owned()).or_insert(0) += 1;
        if a == b {
            continue;
        }
        *table.occurrences.entry(b.to_owned()).or_insert(0) += 1;
        let w = table
            .pairs
            .entry((a.to_owned(), b.to_owned()))
            .or_insert_with(|| vec![0; n_deciles]);
        w[d - 1] += 1;
    }
    Ok(table)
}

/// Co-occurrence threshold `k · n_s1 · n_s2 / N`.
pub fn mateos_threshold(k_security: f64, n_s1: u64, n_s2: u64, total: u64) -> f64 {
    k_security * n_s1 as f64 * n_s2 as f64 / total as f64
}

/// Drops pairs whose total weight is below the co-occurrence threshold.
pub fn mateos_filter(table: &PairTable, k_security: f64) -> Result<PairTable> {
    if table.total == 0 {
        return Err(Error::InvalidArgument("population size N must be positive".into()));
    }
    Ok(table.retain(|a, b, w| {
        let n_ss: u64 = w.iter().sum();
        let threshold =
            mateos_threshold(k_security, table.occurrences(a), table.occurrences(b), table.total);
        n_ss as f64 >= threshold
    }))
}

/// Drops every pair touching a surname with fewer than `min_occurrences` bearers.
pub fn min_occurrence_filter(table: &PairTable, min_occurrences: u64) -> PairTable {
    table.retain(|a, b, _| {
        table.occurrences(a) >= min_occurrences && table.occurrences(b) >= min_occurrences
    })
}

/// Peels nodes of degree `< k` until none remain; returns survivor flags.
/// Parallel edges and self-loops in `edges` are ignored.
pub fn kcore(n_nodes: usize, edges: &[(usize, usize)], k: usize) -> Vec<bool> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_nodes];
    for &(a, b) in edges {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    let mut degree: Vec<usize> = adj.iter().map(BTreeSet::len).collect();
    let mut alive = vec![true; n_nodes];
    let mut queue: VecDeque<usize> = (0..n_nodes).filter(|&v| degree[v] < k).collect();
    for &v in &queue {
        alive[v] = false;
    }
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if alive[u] {
                degree[u] -= 1;
                if degree[u] < k {
                    alive[u] = false;
                    queue.push_back(u);
                }
            }
        }
    }
    alive
}

/// Restricts the table to the `kcore_k`-core of its decile-collapsed graph.
pub fn kcore_prune(table: &PairTable, kcore_k: usize) -> PairTable {
    let nodes: Vec<&str> = table.nodes().into_iter().collect();
    let id: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let edges: Vec<(usize, usize)> = table.pairs().map(|(a, b, _)| (id[a], id[b])).collect();
    let alive = kcore(nodes.len(), &edges, kcore_k);
    table.retain(|a, b, _| alive[id[a]] && alive[id[b]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub pairs_counted: usize,
    pub after_threshold: usize,
    pub after_min_occurrence: usize,
    pub after_kcore: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub individuals: u64,
    pub homonymous_individuals: u64,
    pub surnames: usize,
    pub decile_boundaries: Vec<f64>,
    pub individuals_per_decile: Vec<u64>,
    pub stages: StageCounts,
    pub nodes: usize,
    /// Decile-stratified edges, i.e. emitted triples.
    pub edges: usize,
    /// Edges of the decile-collapsed simple graph.
    pub collapsed_edges: usize,
    /// `2 · edges / nodes`.
    pub average_degree: f64,
    pub min_collapsed_degree: usize,
    pub edges_per_decile: Vec<usize>,
    pub edge_fraction_per_decile: Vec<f64>,
    /// Multi-relational node degree → number of nodes.
    pub degree_histogram: BTreeMap<usize, usize>,
}

/// Output of [`build`]: `(s1, "d<k>", s2)` triples and the report.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub triples: Vec<(String, String, String)>,
    pub table: PairTable,
    pub report: BuildReport,
}

/// Relation label for a 1-based decile.
pub fn decile_label(d: usize) -> String {
    format!("d{d}")
}

pub fn build(records: &[IndividualRecord], config: &BuilderConfig) -> Result<BuildOutput> {
    config.validate()?;
    let raw: Vec<f64> = records.iter().map(|r| r.ses_raw).collect();
    let z = normalize_ses(&raw)?;
    let boundaries = decile_boundaries(&z, config.n_deciles)?;
    let deciles = z.iter().map(|&v| decile_of(v, &boundaries)).collect::<Result<Vec<_>>>()?;
    let mut individuals_per_decile = vec![0u64; config.n_deciles];
    for &d in &deciles {
        individuals_per_decile[d - 1] += 1;
    }

    let counted = count_pairs(records, &deciles, config.n_deciles)?;
    let (filtered, after_threshold, after_min_occurrence) = if config.rare_filter_first {
        let rare = min_occurrence_filter(&counted, config.min_occurrences);
        let thr = mateos_filter(&rare, config.k_security)?;
        (thr.clone(), thr.n_pairs(), rare.n_pairs())
    } else {
        let thr = mateos_filter(&counted, config.k_security)?;
        let rare = min_occurrence_filter(&thr, config.min_occurrences);
        (rare.clone(), thr.n_pairs(), rare.n_pairs())
    };
    let pruned = kcore_prune(&filtered, config.kcore_k);

    let mut triples = Vec::new();
    let mut edges_per_decile = vec![0usize; config.n_deciles];
    let mut multi_degree: BTreeMap<&str, usize> = BTreeMap::new();
    let mut simple_degree: BTreeMap<&str, usize> = BTreeMap::new();
    for (a, b, w) in pruned.pairs() {
        *simple_degree.entry(a).or_insert(0) += 1;
        *simple_degree.entry(b).or_insert(0) += 1;
        for (d, &weight) in w.iter().enumerate() {
            if weight > 0 {
                triples.push((a.to_owned(), decile_label(d + 1), b.to_owned()));
                edges_per_decile[d] += 1;
                *multi_degree.entry(a).or_insert(0) += 1;
                *multi_degree.entry(b).or_insert(0) += 1;
            }
        }
    }
    let nodes = simple_degree.len();
    let edges = triples.len();
    let mut degree_histogram = BTreeMap::new();
    for &deg in multi_degree.values() {
        *degree_histogram.entry(deg).or_insert(0) += 1;
    }
    let report = BuildReport {
        individuals: counted.total,
        homonymous_individuals: records.iter().filter(|r| r.paternal == r.maternal).count() as u64,
        surnames: counted.occurrences.len(),
        decile_boundaries: boundaries,
        individuals_per_decile,
        stages: StageCounts {
            pairs_counted: counted.n_pairs(),
            after_threshold,
            after_min_occurrence,
            after_kcore: pruned.n_pairs(),
        },
        nodes,
        edges,
        collapsed_edges: pruned.n_pairs(),
        average_degree: if nodes == 0 { 0.0 } else { 2.0 * edges as f64 / nodes as f64 },
        min_collapsed_degree: simple_degree.values().copied().min().unwrap_or(0),
        edge_fraction_per_decile: edges_per_decile
            .iter()
            .map(|&e| if edges == 0 { 0.0 } else { e as f64 / edges as f64 })
            .collect(),
        edges_per_decile,
        degree_histogram,
    };
    Ok(BuildOutput { triples, table: pruned, report })
}
