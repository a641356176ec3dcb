//! Planted low-rank multi-relational data: ground-truth entity factors and
//! diagonal relation factors; each subject's top-scored objects per relation
//! become its positives.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dictionary, EntityId, MultiRelationalDataset, RelationId, Triple};
use crate::factors::{gaussian_vec, Matrix, RelationFactors};
use crate::seed::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    /// Rank of the planted factors.
    pub k: usize,
    /// Positives per subject per relation.
    pub top_n: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_entities: 1000,
            n_relations: 10,
            k: 8,
            top_n: 20,
            seed: 0,
        }
    }
}

/// Ground truth used to generate a synthetic dataset.
#[derive(Debug, Clone)]
pub struct PlantedModel {
    pub a: Matrix<f64>,
    pub w: Vec<RelationFactors<f64>>,
}

pub fn planted_model(cfg: &SyntheticConfig) -> PlantedModel {
    let mut rng = stream_rng(cfg.seed, Stream::Synthetic, 0);
    let a = Matrix::from_vec(cfg.n_entities, cfg.k, gaussian_vec(cfg.n_entities * cfg.k, 1.0, &mut rng));
    let w = (0..cfg.n_relations)
        .map(|_| RelationFactors::diagonal(gaussian_vec(cfg.k, 1.0, &mut rng)))
        .collect();
    PlantedModel { a, w }
}

/// Generates the dataset; entity `i` is named `e{i}` and relation `j` is `r{j}`,
/// so dictionary ids equal the planted indices. Self-links are excluded.
pub fn generate(cfg: &SyntheticConfig) -> MultiRelationalDataset {
    assert!(cfg.top_n < cfg.n_entities, "top_n must leave unlinked objects");
    let truth = planted_model(cfg);
    let mut entities = Dictionary::new();
    for i in 0..cfg.n_entities {
        entities.get_or_insert(&format!("e{i}"));
    }
    let mut relations = Dictionary::new();
    for j in 0..cfg.n_relations {
        relations.get_or_insert(&format!("r{j}"));
    }

    let mut triples = Vec::with_capacity(cfg.n_entities * cfg.n_relations * cfg.top_n);
    let mut scored: Vec<(f64, u32)> = Vec::with_capacity(cfg.n_entities);
    for (r, w) in truth.w.iter().enumerate() {
        for s in 0..cfg.n_entities {
            let mut left = vec![0.0; cfg.k];
            w.apply_transpose(truth.a.row(s), &mut left);
            scored.clear();
            scored.extend((0..cfg.n_entities).filter(|&o| o != s).map(|o| {
                let y: f64 = left.iter().zip(truth.a.row(o)).map(|(x, y)| x * y).sum();
                (y, o as u32)
            }));
            let top = cfg.top_n;
            scored.select_nth_unstable_by(top - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut chosen: Vec<u32> = scored[..top].iter().map(|&(_, o)| o).collect();
            chosen.sort_unstable();
            triples.extend(chosen.into_iter().map(|o| Triple {
                subject: EntityId(s as u32),
                object: EntityId(o),
                relation: RelationId(r as u32),
                value: 1.0,
            }));
        }
    }
    MultiRelationalDataset::from_triples(Arc::new(entities), Arc::new(relations), triples)
}
