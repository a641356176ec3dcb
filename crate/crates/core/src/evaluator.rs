//! Ranking evaluation: per-(relation, subject) candidate sets of held-out
//! positives and sampled unobserved negatives, scored by AUC, precision@k
//! and recall@k and macro-averaged over units.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{
    sample_unlinked_object, split_dataset, EntityId, MultiRelationalDataset, RelationId, Scope, SplitDataset, Which,
};
use crate::error::{Error, Result};
use crate::factors::RelationParams;
use crate::scalar::Scalar;
use crate::seed::{derive_seed, stream_rng, Stream};

/// Anything that can score candidate objects for a `(relation, subject)` query.
pub trait Scorer<F: Scalar>: Sync {
    fn n_relations(&self) -> usize;

    fn score_candidates(&self, r: RelationId, s: EntityId, objects: &[EntityId]) -> Vec<F>;
}

impl<F: Scalar> Scorer<F> for [RelationParams<F>] {
    fn n_relations(&self) -> usize {
        self.len()
    }

    fn score_candidates(&self, r: RelationId, s: EntityId, objects: &[EntityId]) -> Vec<F> {
        self[r.index()].score_candidates(s, objects)
    }
}

impl<F: Scalar> Scorer<F> for [&RelationParams<F>] {
    fn n_relations(&self) -> usize {
        self.len()
    }

    fn score_candidates(&self, r: RelationId, s: EntityId, objects: &[EntityId]) -> Vec<F> {
        self[r.index()].score_candidates(s, objects)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub relation: RelationId,
    pub subject: EntityId,
    pub positives: Vec<EntityId>,
    pub negatives: Vec<EntityId>,
}

impl CandidateSet {
    /// Candidates in ranking tie-break order: negatives, then positives.
    pub fn candidates(&self) -> Vec<EntityId> {
        self.negatives.iter().chain(&self.positives).copied().collect()
    }
}

/// Draws up to `m_neg` distinct objects unlinked to `s` in any split. When at
/// most `m_neg` objects qualify, all of them are returned in id order.
pub fn sample_negatives<S: Scope + ?Sized, G: Rng + ?Sized>(
    scope: &S,
    r: RelationId,
    s: EntityId,
    m_neg: usize,
    rng: &mut G,
) -> Result<Vec<EntityId>> {
    let n = scope.n_entities();
    let feasible = n.saturating_sub(scope.degree(s, r, Which::AllSplits));
    if feasible == 0 {
        return Err(Error::Saturated {
            subject: s,
            relation: r,
            attempts: 0,
        });
    }
    let enumerate = || -> Vec<EntityId> {
        (0..n as u32)
            .map(EntityId)
            .filter(|&o| !scope.contains(s, r, o, Which::AllSplits))
            .collect()
    };
    if feasible <= m_neg {
        return Ok(enumerate());
    }
    if feasible <= 2 * m_neg {
        let mut pool = enumerate();
        let (chosen, _) = pool.partial_shuffle(rng, m_neg);
        return Ok(chosen.to_vec());
    }
    let mut seen = rustc_hash::FxHashSet::default();
    let mut out = Vec::with_capacity(m_neg);
    while out.len() < m_neg {
        let o = sample_unlinked_object(scope, s, r, Which::AllSplits, rng)?;
        if seen.insert(o) {
            out.push(o);
        }
    }
    Ok(out)
}

/// Test positives of `(r, s)` plus `m_neg` sampled negatives.
pub fn build_candidate_set<G: Rng + ?Sized>(
    splits: &SplitDataset,
    r: RelationId,
    s: EntityId,
    m_neg: usize,
    rng: &mut G,
) -> Result<CandidateSet> {
    let positives: Vec<EntityId> = splits
        .test
        .relation(r)
        .pairs()
        .iter()
        .filter(|(subj, _)| *subj == s)
        .map(|&(_, o)| o)
        .collect();
    if positives.is_empty() {
        return Err(Error::InvalidArgument(format!("subject {s} has no test positives under relation {r}")));
    }
    Ok(CandidateSet {
        relation: r,
        subject: s,
        negatives: sample_negatives(splits, r, s, m_neg, rng)?,
        positives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankMetrics {
    pub auc: f64,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
}

/// AUC with ties counted one half; precision and recall over the top `k`
/// candidates, ranking negatives ahead of positives on equal scores.
pub fn rank_metrics<F: Scalar>(pos_scores: &[F], neg_scores: &[F], k: usize) -> RankMetrics {
    assert!(!pos_scores.is_empty() && !neg_scores.is_empty(), "rank_metrics needs both classes");
    assert!(k >= 1);
    let pos: Vec<f64> = pos_scores.iter().map(|x| x.as_f64()).collect();
    let neg: Vec<f64> = neg_scores.iter().map(|x| x.as_f64()).collect();

    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    let auc = wins / (pos.len() * neg.len()) as f64;

    // (score, is_positive) in candidate order; the stable sort keeps that order on ties.
    let mut ranked: Vec<(f64, bool)> = neg.iter().map(|&x| (x, false)).chain(pos.iter().map(|&x| (x, true))).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let hits = ranked.iter().take(k).filter(|(_, p)| *p).count() as f64;
    RankMetrics {
        auc,
        precision_at_k: hits / k as f64,
        recall_at_k: hits / pos.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitMetrics {
    pub relation: RelationId,
    pub subject: EntityId,
    pub metrics: RankMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationSummary {
    pub relation: RelationId,
    pub name: String,
    pub units: usize,
    pub auc: f64,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub m_neg: usize,
    pub auc: f64,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub units: Vec<UnitMetrics>,
    /// Units dropped because no unobserved object exists for them.
    pub skipped: usize,
    pub per_relation: Vec<RelationSummary>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    fn from_units(units: Vec<UnitMetrics>, skipped: usize, k: usize, m_neg: usize, names: &[String]) -> Self {
        let macro_of = |units: &[&UnitMetrics]| {
            (
                mean(units.iter().map(|u| u.metrics.auc)),
                mean(units.iter().map(|u| u.metrics.precision_at_k)),
                mean(units.iter().map(|u| u.metrics.recall_at_k)),
            )
        };
        let all: Vec<&UnitMetrics> = units.iter().collect();
        let (auc, precision_at_k, recall_at_k) = macro_of(&all);
        let mut by_rel: BTreeMap<RelationId, Vec<&UnitMetrics>> = BTreeMap::new();
        for u in &units {
            by_rel.entry(u.relation).or_default().push(u);
        }
        let per_relation = by_rel
            .into_iter()
            .map(|(relation, us)| {
                let (auc, p, r) = macro_of(&us);
                RelationSummary {
                    relation,
                    name: names.get(relation.index()).cloned().unwrap_or_else(|| relation.to_string()),
                    units: us.len(),
                    auc,
                    precision_at_k: p,
                    recall_at_k: r,
                }
            })
            .collect();
        Self {
            k,
            m_neg,
            auc,
            precision_at_k,
            recall_at_k,
            units,
            skipped,
            per_relation,
        }
    }

    /// CSV `relation,units,auc,precision_at_k,recall_at_k` with a closing `__macro__` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["relation", "units", "auc", "precision_at_k", "recall_at_k"])?;
        let fmt = |x: f64| format!("{x:.10}");
        for r in &self.per_relation {
            w.write_record([r.name.clone(), r.units.to_string(), fmt(r.auc), fmt(r.precision_at_k), fmt(r.recall_at_k)])?;
        }
        w.write_record([
            "__macro__".to_owned(),
            self.units.len().to_string(),
            fmt(self.auc),
            fmt(self.precision_at_k),
            fmt(self.recall_at_k),
        ])?;
        w.flush().map_err(|e| Error::io("<report>", e))
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "units: {} (skipped {}), negatives per unit: {}, k = {}",
            self.units.len(),
            self.skipped,
            self.m_neg,
            self.k
        )?;
        writeln!(f, "AUC          {:.4}", self.auc)?;
        writeln!(f, "precision@{}  {:.4}", self.k, self.precision_at_k)?;
        write!(f, "recall@{}     {:.4}", self.k, self.recall_at_k)
    }
}

/// Evaluates `model` against the positives of `heldout`, excluding as
/// negatives every triple known in any split of `splits`.
pub fn evaluate_on<F: Scalar, M: Scorer<F> + ?Sized>(
    model: &M,
    splits: &SplitDataset,
    heldout: &MultiRelationalDataset,
    m_neg: usize,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    if heldout.n_triples() == 0 {
        return Err(Error::InvalidArgument("held-out split is empty".into()));
    }
    let mut groups: BTreeMap<(RelationId, EntityId), Vec<EntityId>> = BTreeMap::new();
    for t in heldout.triples() {
        groups.entry((t.relation, t.subject)).or_default().push(t.object);
    }
    let mut units = Vec::with_capacity(groups.len());
    let mut skipped = 0;
    for (u, ((r, s), positives)) in groups.into_iter().enumerate() {
        let mut rng = stream_rng(seed, Stream::Eval, u as u64);
        let negatives = match sample_negatives(splits, r, s, m_neg, &mut rng) {
            Ok(n) => n,
            Err(Error::Saturated { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let candidates: Vec<EntityId> = negatives.iter().chain(&positives).copied().collect();
        let scores = model.score_candidates(r, s, &candidates);
        let (neg_scores, pos_scores) = scores.split_at(negatives.len());
        units.push(UnitMetrics {
            relation: r,
            subject: s,
            metrics: rank_metrics(pos_scores, neg_scores, k),
        });
    }
    Ok(EvalReport::from_units(units, skipped, k, m_neg, heldout.relations().names()))
}

/// Evaluates on the test split.
pub fn evaluate_model<F: Scalar, M: Scorer<F> + ?Sized>(
    model: &M,
    splits: &SplitDataset,
    m_neg: usize,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    evaluate_on(model, splits, &splits.test, m_neg, k, seed)
}

/// How cross-validation folds are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FoldMode {
    /// Each fold is an independent random split.
    #[default]
    Resample,
    /// Test sets partition the triples; validation is drawn from the rest.
    Disjoint,
}

pub fn make_folds(ds: &MultiRelationalDataset, n_folds: usize, seed: u64) -> Result<Vec<SplitDataset>> {
    make_folds_with(ds, n_folds, seed, FoldMode::Resample, 0.1, 0.1)
}

pub fn make_folds_with(
    ds: &MultiRelationalDataset,
    n_folds: usize,
    seed: u64,
    mode: FoldMode,
    test_frac: f64,
    valid_frac: f64,
) -> Result<Vec<SplitDataset>> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument("at least two folds are required".into()));
    }
    match mode {
        FoldMode::Resample => (0..n_folds)
            .map(|i| split_dataset(ds, test_frac, valid_frac, derive_seed(seed, Stream::Fold, i as u64)))
            .collect(),
        FoldMode::Disjoint => {
            let mut idx: Vec<usize> = (0..ds.n_triples()).collect();
            idx.shuffle(&mut stream_rng(seed, Stream::Fold, u64::MAX));
            let n = idx.len();
            (0..n_folds)
                .map(|i| {
                    let (lo, hi) = (i * n / n_folds, (i + 1) * n / n_folds);
                    let mut rest: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
                    rest.shuffle(&mut stream_rng(seed, Stream::Fold, i as u64));
                    let n_valid = ((valid_frac * rest.len() as f64) + 1e-9).floor() as usize;
                    let view = |ids: &[usize]| {
                        MultiRelationalDataset::from_triples(
                            ds.entities().clone(),
                            ds.relations().clone(),
                            ids.iter().map(|&j| ds.triples()[j]),
                        )
                    };
                    let train = view(&rest[n_valid..]);
                    if let Some(r) = train.relation_ids().find(|&r| train.relation(r).is_empty()) {
                        return Err(Error::SplitRejected {
                            relation: ds.relations().name(r.0).to_owned(),
                        });
                    }
                    Ok(SplitDataset::from_parts(train, view(&rest[..n_valid]), view(&idx[lo..hi])))
                })
                .collect()
        }
    }
}

/// Mean and 99% Student-t confidence half-width of one metric across folds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

pub fn confidence_99(values: &[f64]) -> Interval {
    let n = values.len();
    let m = mean(values.iter().copied());
    if n < 2 {
        return Interval {
            mean: m,
            half_width: f64::NAN,
        };
    }
    let var = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.995);
    Interval {
        mean: m,
        half_width: t * (var / n as f64).sqrt(),
    }
}

/// CSV `fold,auc,precision_at_k,recall_at_k` with `mean` and `ci99_half_width` rows.
pub fn write_fold_summary<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fold", "auc", "precision_at_k", "recall_at_k"])?;
    let fmt = |x: f64| format!("{x:.10}");
    for (i, r) in reports.iter().enumerate() {
        w.write_record([i.to_string(), fmt(r.auc), fmt(r.precision_at_k), fmt(r.recall_at_k)])?;
    }
    let cols = [
        confidence_99(&reports.iter().map(|r| r.auc).collect::<Vec<_>>()),
        confidence_99(&reports.iter().map(|r| r.precision_at_k).collect::<Vec<_>>()),
        confidence_99(&reports.iter().map(|r| r.recall_at_k).collect::<Vec<_>>()),
    ];
    w.write_record(std::iter::once("mean".to_owned()).chain(cols.iter().map(|c| fmt(c.mean))))?;
    w.write_record(std::iter::once("ci99_half_width".to_owned()).chain(cols.iter().map(|c| fmt(c.half_width))))?;
    w.flush().map_err(|e| Error::io("<folds>", e))
}
