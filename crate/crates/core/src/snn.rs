//! Shared-nearest-neighbor explanations of correct predictions and
//! relation-matrix exports.
//!
//! A hit `(h, d, t)` is explained from three neighborhoods of its endpoints:
//! training-graph neighbors through `d`, training-graph neighbors through
//! `d` and its adjacent deciles, and the `k` nearest entities in the
//! embedding space transformed by `M_d`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Direction, RankMode, RankRecord};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::models::TuckerParams;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub entity: EntityId,
    /// Base relations the neighborhood was taken over.
    pub scope: BTreeSet<RelationId>,
    pub members: BTreeSet<EntityId>,
}

/// `|A ∩ B| / |A ∪ B|`, or 0 when both are empty.
pub fn snn(a: &NeighborSet, b: &NeighborSet) -> f64 {
    let inter = a.members.intersection(&b.members).count();
    let union = a.members.len() + b.members.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Undirected training-fold adjacency per base relation.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    adjacency: BTreeMap<(RelationId, EntityId), BTreeSet<EntityId>>,
    n_deciles: usize,
}

impl NeighborIndex {
    pub fn new(kg: &KnowledgeGraph) -> Self {
        let n_base = kg.n_base_relations();
        let mut adjacency: BTreeMap<(RelationId, EntityId), BTreeSet<EntityId>> = BTreeMap::new();
        for t in kg.train() {
            if t.h == t.t {
                continue;
            }
            let r = if t.r < n_base { t.r } else { kg.reciprocal_of(t.r) };
            adjacency.entry((r, t.h)).or_default().insert(t.t);
            adjacency.entry((r, t.t)).or_default().insert(t.h);
        }
        let n_deciles = (0..n_base).filter_map(|r| kg.relation_decile(r)).max().unwrap_or(0);
        Self { adjacency, n_deciles }
    }

    /// Largest decile number among the relation labels.
    pub fn n_deciles(&self) -> usize {
        self.n_deciles
    }

    fn union_over(&self, kg: &KnowledgeGraph, entity: EntityId, deciles: impl Iterator<Item = usize>) -> NeighborSet {
        let mut scope = BTreeSet::new();
        let mut members = BTreeSet::new();
        for d in deciles {
            if let Some(r) = kg.decile_relation(d) {
                scope.insert(r);
                if let Some(n) = self.adjacency.get(&(r, entity)) {
                    members.extend(n);
                }
            }
        }
        NeighborSet { entity, scope, members }
    }

    pub fn grounded(&self, kg: &KnowledgeGraph, entity: EntityId, decile: usize) -> Result<NeighborSet> {
        self.check_decile(decile)?;
        Ok(self.union_over(kg, entity, std::iter::once(decile)))
    }

    /// Union over deciles `d − 1, d, d + 1`, clamped to the valid range.
    pub fn near_deciles(&self, kg: &KnowledgeGraph, entity: EntityId, decile: usize) -> Result<NeighborSet> {
        self.check_decile(decile)?;
        let lo = decile.saturating_sub(1).max(1);
        let hi = (decile + 1).min(self.n_deciles);
        Ok(self.union_over(kg, entity, lo..=hi))
    }

    fn check_decile(&self, decile: usize) -> Result<()> {
        if decile == 0 || decile > self.n_deciles {
            return Err(Error::InvalidArgument(format!("decile {decile} outside 1..={}", self.n_deciles)));
        }
        Ok(())
    }
}

pub fn neighbors_grounded(kg: &KnowledgeGraph, entity: EntityId, decile: usize) -> Result<NeighborSet> {
    NeighborIndex::new(kg).grounded(kg, entity, decile)
}

pub fn neighbors_near_deciles(kg: &KnowledgeGraph, entity: EntityId, decile: usize) -> Result<NeighborSet> {
    NeighborIndex::new(kg).near_deciles(kg, entity, decile)
}

/// Rows `e_iᵀ M_r` for every entity.
pub fn transform_embeddings(params: &TuckerParams, r: RelationId) -> Result<Matrix> {
    let m = params.relation_matrix(r)?;
    let e = &params.entities;
    let mut out = Matrix::zeros(e.rows(), m.cols());
    for i in 0..e.rows() {
        out.row_mut(i).copy_from_slice(&m.left_mul_vec(e.row(i))?);
    }
    Ok(out)
}

/// The `k` rows closest to `entity` in Euclidean distance, itself excluded,
/// ties broken by lower id.
pub fn knn_embedding(transformed: &Matrix, entity: EntityId, k: usize) -> Result<Vec<EntityId>> {
    let n = transformed.rows();
    if entity >= n {
        return Err(Error::IndexOutOfRange(format!("entity {entity} outside 0..{n}")));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..{n}")));
    }
    let q = transformed.row(entity);
    let mut dist: Vec<(f64, EntityId)> = (0..n)
        .filter(|&i| i != entity)
        .map(|i| {
            let d2: f64 = transformed.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(dist.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Tail-direction test triples whose filtered rank is at most `cutoff`.
pub fn collect_hits(records: &[RankRecord], cutoff: usize) -> Vec<Triple> {
    records
        .iter()
        .filter(|r| r.direction == Direction::Tail && r.rank(RankMode::Filtered) <= cutoff)
        .map(|r| r.triple)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnnConfig {
    /// A source explains a hit when its SNN exceeds this value.
    pub tau: f64,
    pub k: usize,
    /// Largest filtered rank counted as a hit.
    pub cutoff: usize,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self { tau: 0.0, k: 50, cutoff: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitClass {
    NetworkGrounded,
    EmbeddingGrounded,
    Unexplained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSnn {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub decile: usize,
    pub snn_grounded: f64,
    pub snn_near: f64,
    pub snn_embedding: f64,
    pub class: HitClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileSnn {
    pub decile: usize,
    pub n_hits: usize,
    pub snn_grounded: f64,
    pub snn_near: f64,
    pub snn_embedding: f64,
    pub frac_network_grounded: f64,
    pub frac_embedding_grounded: f64,
    pub frac_unexplained: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnReport {
    pub config: SnnConfig,
    pub n_hits: usize,
    /// Hits whose relation carries no decile label.
    pub skipped: usize,
    pub frac_network_grounded: f64,
    pub frac_embedding_grounded: f64,
    pub frac_unexplained: f64,
    pub per_decile: Vec<DecileSnn>,
    pub hits: Vec<HitSnn>,
}

impl SnnReport {
    /// `decile,snn_grounded,snn_near,snn_embedding,frac_network_grounded,n_hits`
    pub fn csv(&self) -> String {
        let mut s = String::from("decile,snn_grounded,snn_near,snn_embedding,frac_network_grounded,n_hits\n");
        for d in &self.per_decile {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                d.decile, d.snn_grounded, d.snn_near, d.snn_embedding, d.frac_network_grounded, d.n_hits
            );
        }
        s
    }
}

fn classify(grounded: f64, near: f64, embedding: f64, tau: f64) -> HitClass {
    if grounded > tau || near > tau {
        HitClass::NetworkGrounded
    } else if embedding > tau {
        HitClass::EmbeddingGrounded
    } else {
        HitClass::Unexplained
    }
}

fn frac(hits: &[&HitSnn], class: HitClass) -> f64 {
    if hits.is_empty() {
        return 0.0;
    }
    hits.iter().filter(|h| h.class == class).count() as f64 / hits.len() as f64
}

fn mean(hits: &[&HitSnn], f: impl Fn(&HitSnn) -> f64) -> f64 {
    if hits.is_empty() {
        return 0.0;
    }
    hits.iter().map(|h| f(h)).sum::<f64>() / hits.len() as f64
}

/// SNN of each hit under the three neighborhood sources, with per-decile
/// means and classification fractions.
pub fn analyze_predictions(
    params: &TuckerParams,
    kg: &KnowledgeGraph,
    hits: &[Triple],
    config: &SnnConfig,
) -> Result<SnnReport> {
    if params.n_entities() != kg.n_entities() {
        return Err(Error::Consistency("model and graph disagree on entity count".into()));
    }
    let index = NeighborIndex::new(kg);
    let mut transformed: BTreeMap<RelationId, Matrix> = BTreeMap::new();
    let mut knn_cache: BTreeMap<(RelationId, EntityId), NeighborSet> = BTreeMap::new();
    let k = config.k.min(kg.n_entities().saturating_sub(1));
    let mut out = Vec::new();
    let mut skipped = 0;
    for t in hits {
        let Some(decile) = kg.relation_decile(t.r) else {
            skipped += 1;
            continue;
        };
        let g = snn(&index.grounded(kg, t.h, decile)?, &index.grounded(kg, t.t, decile)?);
        let n = snn(&index.near_deciles(kg, t.h, decile)?, &index.near_deciles(kg, t.t, decile)?);
        let mut knn = |e: EntityId| -> Result<NeighborSet> {
            if let Some(s) = knn_cache.get(&(t.r, e)) {
                return Ok(s.clone());
            }
            let m = match transformed.entry(t.r) {
                std::collections::btree_map::Entry::Occupied(o) => o.into_mut(),
                std::collections::btree_map::Entry::Vacant(v) => v.insert(transform_embeddings(params, t.r)?),
            };
            let members = if k == 0 { Vec::new() } else { knn_embedding(m, e, k)? };
            let set = NeighborSet { entity: e, scope: [t.r].into(), members: members.into_iter().collect() };
            knn_cache.insert((t.r, e), set.clone());
            Ok(set)
        };
        let emb = snn(&knn(t.h)?, &knn(t.t)?);
        let label = |e: EntityId| kg.entities().label(e).unwrap_or_default().to_owned();
        out.push(HitSnn {
            head: label(t.h),
            relation: kg.relations().label(t.r).unwrap_or_default().to_owned(),
            tail: label(t.t),
            decile,
            snn_grounded: g,
            snn_near: n,
            snn_embedding: emb,
            class: classify(g, n, emb, config.tau),
        });
    }
    let mut per_decile = Vec::new();
    for d in 1..=index.n_deciles() {
        let sel: Vec<&HitSnn> = out.iter().filter(|h| h.decile == d).collect();
        per_decile.push(DecileSnn {
            decile: d,
            n_hits: sel.len(),
            snn_grounded: mean(&sel, |h| h.snn_grounded),
            snn_near: mean(&sel, |h| h.snn_near),
            snn_embedding: mean(&sel, |h| h.snn_embedding),
            frac_network_grounded: frac(&sel, HitClass::NetworkGrounded),
            frac_embedding_grounded: frac(&sel, HitClass::EmbeddingGrounded),
            frac_unexplained: frac(&sel, HitClass::Unexplained),
        });
    }
    let all: Vec<&HitSnn> = out.iter().collect();
    Ok(SnnReport {
        config: *config,
        n_hits: out.len(),
        skipped,
        frac_network_grounded: frac(&all, HitClass::NetworkGrounded),
        frac_embedding_grounded: frac(&all, HitClass::EmbeddingGrounded),
        frac_unexplained: frac(&all, HitClass::Unexplained),
        per_decile,
        hits: out,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationHeatmap {
    pub relation: String,
    pub matrix: Matrix,
    /// `‖M − Mᵀ‖_F / ‖M‖_F`, 0 for a zero matrix.
    pub asymmetry: f64,
}

impl RelationHeatmap {
    pub fn file_name(&self) -> String {
        format!("relmat_{}.csv", self.relation)
    }
}

pub fn asymmetry_index(m: &Matrix) -> Result<f64> {
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", m.rows(), m.cols())));
    }
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let mut diff = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let d = m.get(i, j) - m.get(j, i);
            diff += d * d;
        }
    }
    Ok(diff.sqrt() / norm)
}

/// `M_r` and its asymmetry for every base relation, decile relations first
/// in decile order.
pub fn export_relation_heatmaps(params: &TuckerParams, kg: &KnowledgeGraph) -> Result<Vec<RelationHeatmap>> {
    let mut order: Vec<RelationId> = (0..kg.n_base_relations()).collect();
    order.sort_by_key(|&r| (kg.relation_decile(r).unwrap_or(usize::MAX), r));
    order
        .into_iter()
        .map(|r| {
            let matrix = params.relation_matrix(r)?;
            Ok(RelationHeatmap {
                relation: kg.relations().label(r).unwrap_or_default().to_owned(),
                asymmetry: asymmetry_index(&matrix)?,
                matrix,
            })
        })
        .collect()
}

/// Headerless CSV; shortest round-trip decimal formatting.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut s = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn matrix_from_csv<R: BufRead>(reader: R) -> Result<Matrix> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<matrix csv>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Fold;
    use crate::rng::{stream, Purpose};
    use crate::tensor::Tensor3;
    use rand::Rng;

    fn set(members: &[usize]) -> NeighborSet {
        NeighborSet { entity: 999, scope: BTreeSet::new(), members: members.iter().copied().collect() }
    }

    #[test]
    fn snn_hand_cases() {
        assert_eq!(snn(&set(&[0, 1, 2]), &set(&[1, 2, 3])), 0.5);
        assert_eq!(snn(&set(&[4, 5]), &set(&[4, 5])), 1.0);
        assert_eq!(snn(&set(&[1]), &set(&[2])), 0.0);
        assert_eq!(snn(&set(&[]), &set(&[])), 0.0);
    }

    fn decile_kg() -> KnowledgeGraph {
        KnowledgeGraph::from_labeled(
            [("a", "d3", "b"), ("a", "d2", "c"), ("b", "d4", "c"), ("c", "d1", "d"), ("d", "d5", "a")],
            true,
        )
        .unwrap()
    }

    #[test]
    fn grounded_and_near_neighbors() {
        let kg = decile_kg();
        let id = |s: &str| kg.entities().get(s).unwrap();
        let g = neighbors_grounded(&kg, id("a"), 3).unwrap();
        assert_eq!(g.members, [id("b")].into());
        assert!(!g.members.contains(&id("a")));
        let near = neighbors_near_deciles(&kg, id("a"), 3).unwrap();
        assert_eq!(near.members, [id("b"), id("c")].into());
        // Decile 1 clamps to {1, 2}.
        let d1 = neighbors_near_deciles(&kg, id("c"), 1).unwrap();
        assert_eq!(d1.members, [id("d"), id("a")].into());
        assert!(neighbors_grounded(&kg, id("a"), 0).is_err());
        assert!(neighbors_grounded(&kg, id("a"), 6).is_err());
    }

    #[test]
    fn test_fold_edges_are_excluded() {
        let kg = decile_kg().split(0, 1, 3).unwrap();
        let held = kg.fold(Fold::Test)[0];
        let d = kg.relation_decile(held.r).unwrap();
        let n = neighbors_grounded(&kg, held.h, d).unwrap();
        assert!(!n.members.contains(&held.t));
    }

    #[test]
    fn knn_line_and_ties() {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(knn_embedding(&m, 0, 1).unwrap(), vec![1]);
        assert_eq!(knn_embedding(&m, 2, 2).unwrap(), vec![1, 0]);
        let tie = Matrix::from_rows(&[vec![0.0], vec![-1.0], vec![1.0]]).unwrap();
        assert_eq!(knn_embedding(&tie, 0, 1).unwrap(), vec![1]);
        assert!(knn_embedding(&m, 0, 3).is_err());
    }

    #[test]
    fn transform_identity_and_zero() {
        let mut rng = stream(3, Purpose::Test, 0, 0);
        let e = Matrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        // Core with G[:, 0, :] = I and relation vector e_0 yields M = I.
        let mut g = Tensor3::zeros([3, 2, 3]).unwrap();
        for i in 0..3 {
            g.set(i, 0, i, 1.0);
        }
        let r = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let p = TuckerParams::new(e.clone(), r, g).unwrap();
        assert_eq!(transform_embeddings(&p, 0).unwrap(), e);
        assert!(transform_embeddings(&p, 1).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transformed_rows_reproduce_scores() {
        let p = TuckerParams::init(7, 4, 5, 3, 11).unwrap();
        for r in 0..4 {
            let x = transform_embeddings(&p, r).unwrap();
            for h in 0..7 {
                for t in 0..7 {
                    let via = crate::tensor::dot(x.row(h), p.entities.row(t));
                    let s = p.score(h, r, t, None).unwrap();
                    assert!((via - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn asymmetry_cases() {
        let sym = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(asymmetry_index(&sym).unwrap(), 0.0);
        // Antisymmetric: ‖M − Mᵀ‖ = ‖2M‖ = 2‖M‖.
        let anti = Matrix::from_rows(&[vec![0.0, 3.0], vec![-3.0, 0.0]]).unwrap();
        assert!((asymmetry_index(&anti).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(asymmetry_index(&Matrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn heatmap_csv_round_trip() {
        let p = TuckerParams::init(3, 2, 6, 2, 5).unwrap();
        let m = p.relation_matrix(1).unwrap();
        let back = matrix_from_csv(matrix_to_csv(&m).as_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn classification_rule() {
        assert_eq!(classify(0.1, 0.1, 0.0, 0.0), HitClass::NetworkGrounded);
        assert_eq!(classify(0.0, 0.2, 0.0, 0.0), HitClass::NetworkGrounded);
        assert_eq!(classify(0.0, 0.0, 0.3, 0.0), HitClass::EmbeddingGrounded);
        assert_eq!(classify(0.0, 0.0, 0.0, 0.0), HitClass::Unexplained);
    }

    #[test]
    fn analysis_fractions_and_means() {
        let kg = decile_kg();
        let mut kg2 = kg.clone();
        kg2.add_reciprocals().unwrap();
        let p = TuckerParams::init(kg.n_entities(), kg.n_model_relations(), 4, 2, 1).unwrap();
        let hits: Vec<Triple> = kg.train().to_vec();
        let rep = analyze_predictions(&p, &kg, &hits, &SnnConfig { k: 2, ..Default::default() }).unwrap();
        assert_eq!(rep.n_hits, hits.len());
        assert_eq!(rep.per_decile.len(), 5);
        for d in &rep.per_decile {
            if d.n_hits > 0 {
                let s = d.frac_network_grounded + d.frac_embedding_grounded + d.frac_unexplained;
                assert!((s - 1.0).abs() < 1e-12);
            }
            let flat: Vec<&HitSnn> = rep.hits.iter().filter(|h| h.decile == d.decile).collect();
            let m: f64 = flat.iter().map(|h| h.snn_near).sum::<f64>() / flat.len().max(1) as f64;
            assert!((m - d.snn_near).abs() < 1e-15);
        }
        assert_eq!(rep.csv().lines().count(), 6);
        let empty = analyze_predictions(&p, &kg, &[], &SnnConfig::default()).unwrap();
        assert_eq!(empty.n_hits, 0);
    }
}
