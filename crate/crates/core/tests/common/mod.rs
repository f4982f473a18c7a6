//! Fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use affinity_kg::kg::{Fold, KnowledgeGraph, KnownTrue};
use affinity_kg::rng::{stream, Purpose};
use rand::seq::index::sample;
use rand::Rng;

pub const BLOCKS: usize = 2;
pub const LEVELS: usize = 10;
pub const PER_CELL: usize = 10;

fn entity(block: usize, level: usize, member: usize) -> String {
    format!("b{block}l{level:02}m{member}")
}

/// Symmetric two-block graph over 200 entities and relations `d1..d10`.
///
/// Each block holds ten levels of ten entities. Relation `d<k>` links
/// entities inside level `k` and between levels `k` and `k + 1` of the same
/// block. 2160 of the 2700 structured edges are kept and 240 uniformly
/// random noise edges are added; the 2400 triples are split 2000/200/200.
pub fn two_block_kg(seed: u64) -> KnowledgeGraph {
    let mut structured = Vec::new();
    for b in 0..BLOCKS {
        for k in 1..=LEVELS {
            for i in 0..PER_CELL {
                for j in i + 1..PER_CELL {
                    structured.push((entity(b, k, i), format!("d{k}"), entity(b, k, j)));
                }
                if k < LEVELS {
                    for j in 0..PER_CELL {
                        structured.push((entity(b, k, i), format!("d{k}"), entity(b, k + 1, j)));
                    }
                }
            }
        }
    }
    let mut rng = stream(seed, Purpose::Test, 0, 0);
    let mut keep = sample(&mut rng, structured.len(), 2160).into_vec();
    keep.sort_unstable();
    let mut triples: Vec<(String, String, String)> = keep.into_iter().map(|i| structured[i].clone()).collect();

    // Noise pairs are unordered, so compare them in sorted-label form.
    let pair_key = |a: &str, b: &str| if a < b { (a.to_owned(), b.to_owned()) } else { (b.to_owned(), a.to_owned()) };
    let taken: BTreeSet<(String, String)> = structured.iter().map(|(h, _, t)| pair_key(h, t)).collect();
    let n = BLOCKS * LEVELS * PER_CELL;
    let label = |x: usize| entity(x / (LEVELS * PER_CELL), x % (LEVELS * PER_CELL) / PER_CELL + 1, x % PER_CELL);
    let mut noise = BTreeSet::new();
    while noise.len() < 240 {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a == b {
            continue;
        }
        let key = pair_key(&label(a), &label(b));
        if taken.contains(&key) {
            continue;
        }
        let k = rng.random_range(1..=LEVELS);
        noise.insert((key.0, format!("d{k}"), key.1));
    }
    triples.extend(noise);
    KnowledgeGraph::from_labeled(triples, true)
        .expect("generated triples are valid")
        .split(200, 200, seed)
        .expect("enough triples to split")
}

/// Mean and standard deviation of the MRR of a ranker that orders the
/// unfiltered candidates of every query uniformly at random.
///
/// Query `q` has `n_q` candidates (all entities minus the filtered known
/// positives other than the target); its reciprocal rank is `1/R` with `R`
/// uniform on `1..=n_q`.
pub fn uniform_filtered_mrr(kg: &KnowledgeGraph, known: &KnownTrue, fold: Fold) -> (f64, f64) {
    let n_e = kg.n_entities();
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut q = 0usize;
    for t in kg.fold(fold) {
        let inv = kg.reciprocal_of(t.r);
        for (h, r, target) in [(t.h, t.r, t.t), (t.t, inv, t.h)] {
            let filtered = known.tails(h, r).map_or(0, |s| s.iter().filter(|&&e| e != target).count());
            let n = (n_e - filtered) as f64;
            let m1: f64 = (1..=n as usize).map(|k| 1.0 / k as f64).sum::<f64>() / n;
            let m2: f64 = (1..=n as usize).map(|k| 1.0 / (k * k) as f64).sum::<f64>() / n;
            mean += m1;
            var += m2 - m1 * m1;
            q += 1;
        }
    }
    let q = q as f64;
    (mean / q, var.sqrt() / q)
}
