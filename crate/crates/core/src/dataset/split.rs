use rand::seq::SliceRandom;

use super::{EntityId, MultiRelationalDataset, RelationId, Scope, Triple, Which};
use crate::error::{Error, Result};
use crate::seed::{stream_rng, Stream};

/// How held-out triples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitStrategy {
    /// Sample held-out triples uniformly from all triples.
    #[default]
    Global,
    /// Apply the fractions to each relation separately.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub test_frac: f64,
    /// Fraction of the triples remaining after the test draw.
    pub valid_frac: f64,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_frac: 0.1,
            valid_frac: 0.1,
            seed: 0,
            strategy: SplitStrategy::Global,
        }
    }
}

/// Train/validation/test views over one dictionary, plus the union for
/// evaluation-time membership.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: MultiRelationalDataset,
    pub valid: MultiRelationalDataset,
    pub test: MultiRelationalDataset,
    all: MultiRelationalDataset,
}

impl SplitDataset {
    /// Builds a split from explicit parts; they must share dictionaries.
    pub fn from_parts(
        train: MultiRelationalDataset,
        valid: MultiRelationalDataset,
        test: MultiRelationalDataset,
    ) -> Self {
        debug_assert!(std::sync::Arc::ptr_eq(train.entities(), test.entities()));
        let all = MultiRelationalDataset::from_triples(
            train.entities().clone(),
            train.relations().clone(),
            train
                .triples()
                .iter()
                .chain(valid.triples())
                .chain(test.triples())
                .copied(),
        );
        Self {
            train,
            valid,
            test,
            all,
        }
    }

    /// Union of the three splits.
    pub fn all(&self) -> &MultiRelationalDataset {
        &self.all
    }

    pub fn n_relations(&self) -> usize {
        self.train.n_relations()
    }
}

impl Scope for SplitDataset {
    fn n_entities(&self) -> usize {
        self.train.n_entities()
    }

    #[inline]
    fn contains(&self, s: EntityId, r: RelationId, o: EntityId, which: Which) -> bool {
        match which {
            Which::TrainOnly => self.train.contains(s, r, o),
            Which::AllSplits => self.all.contains(s, r, o),
        }
    }

    fn degree(&self, s: EntityId, r: RelationId, which: Which) -> usize {
        match which {
            Which::TrainOnly => self.train.relation(r).degree(s),
            Which::AllSplits => self.all.relation(r).degree(s),
        }
    }
}

// Rounding guard so that e.g. 0.1 * 90 floors to 9, not 8.
fn held_out(frac: f64, n: usize) -> usize {
    ((frac * n as f64) + 1e-9).floor() as usize
}

/// Global split with the default strategy.
pub fn split_dataset(
    ds: &MultiRelationalDataset,
    test_frac: f64,
    valid_frac: f64,
    seed: u64,
) -> Result<SplitDataset> {
    split_dataset_with(
        ds,
        &SplitConfig {
            test_frac,
            valid_frac,
            seed,
            strategy: SplitStrategy::Global,
        },
    )
}

/// Test receives `floor(test_frac * N)` triples; validation receives
/// `floor(valid_frac * remaining)`; the rest is training data.
pub fn split_dataset_with(ds: &MultiRelationalDataset, cfg: &SplitConfig) -> Result<SplitDataset> {
    let (t, v) = (cfg.test_frac, cfg.valid_frac);
    if !(t > 0.0 && v > 0.0 && t + (1.0 - t) * v < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fractions test={t}, valid={v} leave no training data"
        )));
    }
    let mut rng = stream_rng(cfg.seed, Stream::Split, 0);
    let groups: Vec<Vec<usize>> = match cfg.strategy {
        SplitStrategy::Global => vec![(0..ds.n_triples()).collect()],
        SplitStrategy::Stratified => {
            let mut g = vec![Vec::new(); ds.n_relations()];
            for (i, tr) in ds.triples().iter().enumerate() {
                g[tr.relation.index()].push(i);
            }
            g
        }
    };

    // 0 = train, 1 = valid, 2 = test
    let mut assignment = vec![0u8; ds.n_triples()];
    for mut idx in groups {
        idx.shuffle(&mut rng);
        let n_test = held_out(t, idx.len());
        let n_valid = held_out(v, idx.len() - n_test);
        for &i in &idx[..n_test] {
            assignment[i] = 2;
        }
        for &i in &idx[n_test..n_test + n_valid] {
            assignment[i] = 1;
        }
    }

    let pick = |which: u8| -> Vec<Triple> {
        ds.triples()
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == which)
            .map(|(t, _)| *t)
            .collect()
    };
    let build = |which: u8| {
        MultiRelationalDataset::from_triples(ds.entities().clone(), ds.relations().clone(), pick(which))
    };
    let train = build(0);
    if let Some(r) = train.relation_ids().find(|&r| train.relation(r).is_empty()) {
        return Err(Error::SplitRejected {
            relation: ds.relations().name(r.0).to_owned(),
        });
    }
    Ok(SplitDataset::from_parts(train, build(1), build(2)))
}
