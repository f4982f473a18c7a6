//! Entity/relation vocabularies, triple folds, reciprocal augmentation and
//! the known-true lookup used by filtered ranking.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

pub type EntityId = usize;
pub type RelationId = usize;

/// Suffix appended to a relation label to name its reciprocal.
pub const RECIPROCAL_SUFFIX: &str = "_inv";

/// Bijection between labels and dense ids in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::new();
        for l in labels {
            let l = l.into();
            if v.get(&l).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary label {l:?}")));
            }
            v.intern(&l);
        }
        Ok(v)
    }

    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// SHA-256 over the newline-joined labels, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.labels {
            h.update(l.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub h: EntityId,
    pub r: RelationId,
    pub t: EntityId,
}

impl Triple {
    pub fn new(h: EntityId, r: RelationId, t: EntityId) -> Self {
        Self { h, r, t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Valid,
    Test,
}

/// Vocabularies plus the train/valid/test folds.
///
/// In undirected mode every triple is stored once with its endpoints in
/// lexicographic label order. Reciprocal relations, once added, occupy ids
/// `n_base..2*n_base` where `r + n_base` is the inverse of `r`.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    undirected: bool,
    n_base_relations: usize,
    reciprocal_train: bool,
    duplicates: usize,
    self_loops: usize,
}

impl KnowledgeGraph {
    /// Builds a single-fold graph (everything in train) from labelled triples.
    pub fn from_labeled<I, S>(triples: I, undirected: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        let mut b = GraphBuilder::new(undirected);
        for (i, (h, r, t)) in triples.into_iter().enumerate() {
            b.push(Fold::Train, h.as_ref(), r.as_ref(), t.as_ref(), i + 1)?;
        }
        Ok(b.finish())
    }

    /// Reads one triple file into the train fold.
    pub fn read_tsv<R: BufRead>(reader: R, undirected: bool) -> Result<Self> {
        let mut b = GraphBuilder::new(undirected);
        b.read_fold(Fold::Train, reader)?;
        Ok(b.finish())
    }

    /// Builds a graph from pre-split folds, interning labels train first.
    pub fn from_folds<R: BufRead>(train: R, valid: R, test: R, undirected: bool) -> Result<Self> {
        let mut b = GraphBuilder::new(undirected);
        b.read_fold(Fold::Train, train)?;
        b.read_fold(Fold::Valid, valid)?;
        b.read_fold(Fold::Test, test)?;
        let kg = b.finish();
        kg.check_disjoint()?;
        Ok(kg)
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    /// Number of relations before reciprocal augmentation.
    pub fn n_base_relations(&self) -> usize {
        self.n_base_relations
    }

    /// Relation count including reciprocals (always `2 * n_base`).
    pub fn n_model_relations(&self) -> usize {
        2 * self.n_base_relations
    }

    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    pub fn has_reciprocals(&self) -> bool {
        self.reciprocal_train
    }

    /// Number of input lines collapsed into an existing triple.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    /// Number of input lines dropped because head equals tail.
    pub fn self_loops(&self) -> usize {
        self.self_loops
    }

    pub fn fold(&self, fold: Fold) -> &[Triple] {
        match fold {
            Fold::Train => &self.train,
            Fold::Valid => &self.valid,
            Fold::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    /// Total triples across folds (training counted without reciprocals).
    pub fn n_triples(&self) -> usize {
        let train = if self.reciprocal_train { self.train.len() / 2 } else { self.train.len() };
        train + self.valid.len() + self.test.len()
    }

    /// Id of the reciprocal of base relation `r`.
    pub fn reciprocal_of(&self, r: RelationId) -> RelationId {
        if r < self.n_base_relations {
            r + self.n_base_relations
        } else {
            r - self.n_base_relations
        }
    }

    /// Base relation id for decile `d` (label `d<d>`).
    pub fn decile_relation(&self, d: usize) -> Option<RelationId> {
        self.relations.get(&format!("d{d}")).filter(|&r| r < self.n_base_relations)
    }

    /// Decile number encoded in a base relation label, if it has the `d<k>` form.
    pub fn relation_decile(&self, r: RelationId) -> Option<usize> {
        let label = self.relations.label(r)?;
        label.strip_prefix('d')?.parse().ok().filter(|_| r < self.n_base_relations)
    }

    /// Canonical form: endpoints ordered by label. Identity in directed mode.
    pub fn canonicalize(&self, t: Triple) -> Triple {
        if !self.undirected {
            return t;
        }
        canonicalize_by(&self.entities, t)
    }

    /// Samples validation and test folds uniformly without replacement from
    /// all current triples; the remainder becomes training.
    pub fn split(&self, valid_size: usize, test_size: usize, seed: u64) -> Result<Self> {
        if self.reciprocal_train {
            return Err(Error::InvalidArgument("split must precede reciprocal augmentation".into()));
        }
        let mut all: Vec<Triple> = Vec::with_capacity(self.n_triples());
        all.extend_from_slice(&self.train);
        all.extend_from_slice(&self.valid);
        all.extend_from_slice(&self.test);
        let total = all.len();
        if valid_size + test_size >= total {
            return Err(Error::InvalidArgument(format!(
                "valid ({valid_size}) + test ({test_size}) must be below the {total} triples"
            )));
        }
        let mut r = rng::stream(seed, rng::Purpose::Split, 0, 0);
        let picked = index::sample(&mut r, total, valid_size + test_size).into_vec();
        let mut role = vec![Fold::Train; total];
        for (n, &i) in picked.iter().enumerate() {
            role[i] = if n < valid_size { Fold::Valid } else { Fold::Test };
        }
        let mut out = self.clone();
        out.train.clear();
        out.valid.clear();
        out.test.clear();
        for (t, f) in all.into_iter().zip(role) {
            match f {
                Fold::Train => out.train.push(t),
                Fold::Valid => out.valid.push(t),
                Fold::Test => out.test.push(t),
            }
        }
        Ok(out)
    }

    /// Doubles the relation vocabulary and adds `(t, r⁻¹, h)` for every
    /// training triple. Evaluation folds are untouched.
    pub fn add_reciprocals(&mut self) -> Result<()> {
        if self.reciprocal_train {
            return Err(Error::InvalidArgument("reciprocal relations already added".into()));
        }
        let n = self.n_base_relations;
        for r in 0..n {
            let label = format!("{}{}", self.relations.labels[r], RECIPROCAL_SUFFIX);
            if self.relations.get(&label).is_some() {
                return Err(Error::Consistency(format!("relation label {label:?} already present")));
            }
            self.relations.intern(&label);
        }
        let inverse: Vec<Triple> =
            self.train.iter().map(|t| Triple::new(t.t, t.r + n, t.h)).collect();
        self.train.extend(inverse);
        self.reciprocal_train = true;
        Ok(())
    }

    /// Returns the graph with reciprocal labels registered but no triples
    /// added, so a model vocabulary can be checked against it.
    pub fn relation_labels_with_reciprocals(&self) -> Vec<String> {
        let base = &self.relations.labels[..self.n_base_relations];
        base.iter()
            .cloned()
            .chain(base.iter().map(|l| format!("{l}{RECIPROCAL_SUFFIX}")))
            .collect()
    }

    /// Writes one fold in the TAB-separated triple format.
    pub fn write_tsv<W: std::io::Write>(&self, fold: Fold, mut w: W) -> std::io::Result<()> {
        for t in self.fold(fold) {
            if t.r >= self.n_base_relations {
                continue;
            }
            writeln!(
                w,
                "{}\t{}\t{}",
                self.entities.labels[t.h], self.relations.labels[t.r], self.entities.labels[t.t]
            )?;
        }
        Ok(())
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen: HashSet<Triple> = HashSet::new();
        for fold in [Fold::Train, Fold::Valid, Fold::Test] {
            for &t in self.fold(fold) {
                if !seen.insert(self.canonicalize(t)) {
                    return Err(Error::Consistency(format!(
                        "triple ({}, {}, {}) appears in more than one fold",
                        self.entities.labels[t.h],
                        self.relations.labels[t.r],
                        self.entities.labels[t.t]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lookup of every true tail for each `(head, relation)` across all folds.
    pub fn known_true_set(&self) -> KnownTrue {
        let n = self.n_base_relations;
        let mut map: HashMap<(EntityId, RelationId), HashSet<EntityId>> = HashMap::new();
        let mut add = |h, r, t| {
            map.entry((h, r)).or_default().insert(t);
        };
        for fold in [Fold::Train, Fold::Valid, Fold::Test] {
            for t in self.fold(fold) {
                if t.r >= n {
                    continue;
                }
                add(t.h, t.r, t.t);
                add(t.t, t.r + n, t.h);
                if self.undirected {
                    add(t.t, t.r, t.h);
                    add(t.h, t.r + n, t.t);
                }
            }
        }
        KnownTrue { map }
    }
}

pub(crate) fn canonicalize_by(entities: &Vocab, t: Triple) -> Triple {
    if entities.labels[t.h] <= entities.labels[t.t] {
        t
    } else {
        Triple::new(t.t, t.r, t.h)
    }
}

/// Membership lookup over `(h, r) → {t}` including reciprocal directions.
#[derive(Debug, Clone, Default)]
pub struct KnownTrue {
    map: HashMap<(EntityId, RelationId), HashSet<EntityId>>,
}

impl KnownTrue {
    pub fn contains(&self, h: EntityId, r: RelationId, t: EntityId) -> bool {
        self.map.get(&(h, r)).is_some_and(|s| s.contains(&t))
    }

    pub fn tails(&self, h: EntityId, r: RelationId) -> Option<&HashSet<EntityId>> {
        self.map.get(&(h, r))
    }
}

struct GraphBuilder {
    entities: Vocab,
    relations: Vocab,
    folds: [Vec<Triple>; 3],
    seen: HashSet<(String, String, String)>,
    undirected: bool,
    duplicates: usize,
    self_loops: usize,
}

impl GraphBuilder {
    fn new(undirected: bool) -> Self {
        Self {
            entities: Vocab::new(),
            relations: Vocab::new(),
            folds: Default::default(),
            seen: HashSet::new(),
            undirected,
            duplicates: 0,
            self_loops: 0,
        }
    }

    fn push(&mut self, fold: Fold, h: &str, r: &str, t: &str, line: usize) -> Result<()> {
        if h.is_empty() || r.is_empty() || t.is_empty() {
            return Err(Error::Parse { line, message: "empty label".into() });
        }
        if h == t {
            self.self_loops += 1;
            return Ok(());
        }
        let (h, t) = if self.undirected && t < h { (t, h) } else { (h, t) };
        let key = (h.to_owned(), r.to_owned(), t.to_owned());
        if self.seen.contains(&key) {
            self.duplicates += 1;
            return Ok(());
        }
        let hi = self.entities.intern(h);
        let ri = self.relations.intern(r);
        let ti = self.entities.intern(t);
        self.seen.insert(key);
        let slot = match fold {
            Fold::Train => 0,
            Fold::Valid => 1,
            Fold::Test => 2,
        };
        self.folds[slot].push(Triple::new(hi, ri, ti));
        Ok(())
    }

    fn read_fold<R: BufRead>(&mut self, fold: Fold, reader: R) -> Result<()> {
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 3 TAB-separated fields, found {}", fields.len()),
                });
            }
            self.push(fold, fields[0], fields[1], fields[2], i + 1)?;
        }
        Ok(())
    }

    fn finish(self) -> KnowledgeGraph {
        let [train, valid, test] = self.folds;
        let n_base_relations = self.relations.len();
        KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            train,
            valid,
            test,
            undirected: self.undirected,
            n_base_relations,
            reciprocal_train: false,
            duplicates: self.duplicates,
            self_loops: self.self_loops,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kg(triples: &[(&str, &str, &str)], undirected: bool) -> KnowledgeGraph {
        KnowledgeGraph::from_labeled(triples.iter().copied(), undirected).unwrap()
    }

    #[test]
    fn load_single_triple() {
        let g = kg(&[("perez", "d10", "soto")], true);
        assert_eq!(g.n_entities(), 2);
        assert_eq!(g.n_base_relations(), 1);
        assert_eq!(g.train().len(), 1);
    }

    #[test]
    fn duplicates_collapse() {
        let g = kg(&[("perez", "d10", "soto"), ("perez", "d10", "soto")], true);
        assert_eq!(g.train().len(), 1);
        assert_eq!(g.duplicates(), 1);
        let g = kg(&[("a", "d1", "b"), ("b", "d1", "a")], true);
        assert_eq!(g.train().len(), 1);
        let g = kg(&[("a", "d1", "b"), ("b", "d1", "a")], false);
        assert_eq!(g.train().len(), 2);
    }

    #[test]
    fn canonical_order() {
        let g = kg(&[("soto", "d3", "perez")], true);
        let t = g.train()[0];
        assert_eq!(g.entities().label(t.h), Some("perez"));
        assert_eq!(g.entities().label(t.t), Some("soto"));
        assert_eq!(g.canonicalize(t), t);
        let flipped = Triple::new(t.t, t.r, t.h);
        assert_eq!(g.canonicalize(flipped), t);
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = "# header\na\td1\tb\nbroken line\n";
        let err = KnowledgeGraph::read_tsv(text.as_bytes(), true).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn tsv_round_trip() {
        let text = "a\td1\tb\nb\td2\tc\n";
        let g = KnowledgeGraph::read_tsv(text.as_bytes(), true).unwrap();
        let mut out = Vec::new();
        g.write_tsv(Fold::Train, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    fn numbered(n: usize) -> KnowledgeGraph {
        let triples: Vec<(String, String, String)> =
            (0..n).map(|i| (format!("e{i:03}"), "d1".to_string(), format!("f{i:03}"))).collect();
        KnowledgeGraph::from_labeled(triples, true).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let g = numbered(100);
        let s = g.split(10, 10, 7).unwrap();
        assert_eq!((s.train().len(), s.valid().len(), s.test().len()), (80, 10, 10));
        let mut all: Vec<Triple> =
            s.train().iter().chain(s.valid()).chain(s.test()).copied().collect();
        all.sort();
        let mut orig = g.train().to_vec();
        orig.sort();
        assert_eq!(all, orig);
        let again = g.split(10, 10, 7).unwrap();
        assert_eq!(s.valid(), again.valid());
        assert_eq!(s.test(), again.test());
        assert!(g.split(50, 50, 1).is_err());
    }

    #[test]
    fn split_membership_is_uniform() {
        // Each triple lands in the test fold with p = 10/100 per seed.
        let g = numbered(100);
        let seeds = 1000;
        let index: HashMap<Triple, usize> = g.train().iter().enumerate().map(|(i, t)| (*t, i)).collect();
        let mut counts = vec![0usize; 100];
        for seed in 0..seeds {
            for t in g.split(10, 10, seed).unwrap().test() {
                counts[index[t]] += 1;
            }
        }
        let p = 0.1;
        let mean = seeds as f64 * p;
        let sd = (seeds as f64 * p * (1.0 - p)).sqrt();
        // 3.5σ across 100 cells keeps the family-wise false alarm rate small.
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.5 * sd, "count {c} vs {mean}±{sd}");
        }
    }

    #[test]
    fn reciprocals() {
        let mut g = numbered(5);
        g.add_reciprocals().unwrap();
        assert_eq!(g.relations().len(), 2);
        assert_eq!(g.train().len(), 10);
        assert_eq!(g.relations().label(1), Some("d1_inv"));
        for t in &g.train()[..5] {
            assert!(g.train().contains(&Triple::new(t.t, 1, t.h)));
        }
        assert!(g.add_reciprocals().is_err());
        assert_eq!(g.n_triples(), 5);

        let split = numbered(20).split(3, 4, 1).unwrap();
        let mut aug = split.clone();
        aug.add_reciprocals().unwrap();
        assert_eq!(aug.valid().len(), 3);
        assert_eq!(aug.test().len(), 4);
        assert_eq!(aug.train().len(), 26);
    }

    #[test]
    fn known_true_agrees_with_scan() {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut triples = Vec::new();
        for _ in 0..1000 {
            let h = r.random_range(0..60);
            let mut t = r.random_range(0..60);
            if t == h {
                t = (t + 1) % 60;
            }
            triples.push((format!("n{h}"), format!("d{}", r.random_range(1..=3)), format!("n{t}")));
        }
        let g = KnowledgeGraph::from_labeled(triples, true).unwrap().split(100, 100, 5).unwrap();
        let known = g.known_true_set();
        let n = g.n_base_relations();
        let all: Vec<Triple> = g.train().iter().chain(g.valid()).chain(g.test()).copied().collect();
        for h in 0..g.n_entities() {
            for rel in 0..2 * n {
                for t in 0..g.n_entities() {
                    let base = rel % n;
                    let scan = all.iter().any(|x| {
                        x.r == base && ((x.h == h && x.t == t) || (x.h == t && x.t == h))
                    });
                    assert_eq!(known.contains(h, rel, t), scan);
                }
            }
        }
    }

    #[test]
    fn vocab_round_trip() {
        let g = numbered(10);
        for (i, l) in g.entities().labels().iter().enumerate() {
            assert_eq!(g.entities().get(l), Some(i));
        }
        assert_eq!(g.entities().hash(), numbered(10).entities().hash());
        assert_ne!(g.entities().hash(), numbered(11).entities().hash());
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent(pairs in proptest::collection::vec((0usize..20, 0usize..20), 1..30)) {
            let triples: Vec<(String, String, String)> = pairs
                .iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (format!("x{a}"), "d1".into(), format!("x{b}")))
                .collect();
            let g = KnowledgeGraph::from_labeled(triples, false).unwrap();
            let mut undirected = g.clone();
            undirected.undirected = true;
            for &t in g.train() {
                let c = undirected.canonicalize(t);
                prop_assert_eq!(undirected.canonicalize(c), c);
                let flipped = Triple::new(t.t, t.r, t.h);
                prop_assert_eq!(undirected.canonicalize(flipped), c);
            }
        }
    }
}
