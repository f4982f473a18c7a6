//! Deterministic synthetic population with planted surname affinities.
//!
//! Each community owns a block of surnames partitioned into small cycles
//! (triangles, with the last group absorbing any remainder). With
//! probability `bias` an individual carries a planted pair from their own
//! community; otherwise both surnames are drawn uniformly from the whole
//! population. SES comes from the individual's block, and block SES values
//! lie in a band that rises with the community index.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::IndividualRecord;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub communities: usize,
    pub surnames_per_community: usize,
    pub individuals: usize,
    /// Probability that an individual carries a planted pair.
    pub bias: f64,
    pub blocks_per_community: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            communities: 2,
            surnames_per_community: 150,
            individuals: 10_000,
            bias: 0.6,
            blocks_per_community: 20,
            seed: 1,
        }
    }
}

/// Planted ground truth written next to the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub spec: SyntheticSpec,
    /// Lexicographically ordered surname pairs; empty when `bias == 0`.
    pub planted_pairs: Vec<(String, String)>,
    pub community_of: Vec<(String, usize)>,
}

#[derive(Debug, Clone)]
pub struct SyntheticPopulation {
    pub records: Vec<IndividualRecord>,
    pub truth: PlantedTruth,
}

pub fn surname(community: usize, index: usize) -> String {
    format!("c{community}s{index:03}")
}

fn planted_edges(n: usize) -> Vec<(usize, usize)> {
    let groups = n / 3;
    let mut edges = Vec::new();
    for g in 0..groups {
        let start = g * 3;
        let end = if g + 1 == groups { n } else { start + 3 };
        for i in start..end {
            let j = if i + 1 == end { start } else { i + 1 };
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticPopulation> {
    if spec.communities == 0 || spec.surnames_per_community < 3 || spec.blocks_per_community == 0 {
        return Err(Error::InvalidArgument(
            "need at least one community, three surnames and one block per community".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.bias) {
        return Err(Error::InvalidArgument(format!("bias {} outside [0, 1]", spec.bias)));
    }
    let mut r = rng::stream(spec.seed, rng::Purpose::Synthetic, 0, 0);
    let n_c = spec.communities;
    let per = spec.surnames_per_community;

    // Block SES in raw units: community c occupies [1000 c, 1000 (c + 1)).
    let block_ses: Vec<Vec<f64>> = (0..n_c)
        .map(|c| {
            (0..spec.blocks_per_community)
                .map(|_| 1000.0 * (c as f64 + r.random::<f64>()))
                .collect()
        })
        .collect();
    let edges = planted_edges(per);

    let mut records = Vec::with_capacity(spec.individuals);
    for _ in 0..spec.individuals {
        let c = r.random_range(0..n_c);
        let b = r.random_range(0..spec.blocks_per_community);
        let (s1, s2) = if r.random::<f64>() < spec.bias {
            let (i, j) = edges[r.random_range(0..edges.len())];
            (surname(c, i), surname(c, j))
        } else {
            let mut draw = || {
                let k = r.random_range(0..n_c * per);
                surname(k / per, k % per)
            };
            (draw(), draw())
        };
        let (p, m) = if r.random::<bool>() { (s1, s2) } else { (s2, s1) };
        records.push(IndividualRecord::new(&p, &m, block_ses[c][b], &format!("c{c}b{b:03}"))?);
    }

    let planted_pairs: Vec<(String, String)> = if spec.bias > 0.0 {
        let set: BTreeSet<(String, String)> = (0..n_c)
            .flat_map(|c| edges.iter().map(move |&(i, j)| (surname(c, i), surname(c, j))))
            .collect();
        set.into_iter().collect()
    } else {
        Vec::new()
    };
    let community_of =
        (0..n_c).flat_map(|c| (0..per).map(move |i| (surname(c, i), c))).collect();
    Ok(SyntheticPopulation {
        records,
        truth: PlantedTruth { spec: spec.clone(), planted_pairs, community_of },
    })
}
