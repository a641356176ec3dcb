//! Complete-sharing (CD) and decoupled multi-target (DMF) factorizations,
//! trained with the same BPR-SGD step as the consensus model.

use std::time::Instant;

use rand::Rng;

use crate::consensus::{check_convergence, sum_losses, RelationScope};
use crate::curve::{CurveRow, LearningCurve, TimingRow};
use crate::dataset::{sample_positive, sample_unlinked_object, EntityId, MultiRelationalDataset, RelationId, SplitDataset, Which};
use crate::error::{Error, Result};
use crate::evaluator::Scorer;
use crate::factors::{Hyperparams, Matrix, RelationFactors, RelationWeightShape};
use crate::objective::{estimate_loss_with, sgd_step, AdagradRefs, GradientBundle};
use crate::parallel::{effective_workers, lpt_assignment, run_assigned};
use crate::scalar::Scalar;
use crate::seed::{stream_rng, Rng as StreamRng, Stream};

/// One entity matrix shared by every relation.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedModel<F> {
    pub a: Matrix<F>,
    pub w: Vec<RelationFactors<F>>,
    pub rounds: usize,
    pub converged: bool,
    pub curve: LearningCurve,
    pub timings: Vec<TimingRow>,
}

impl<F: Scalar> SharedModel<F> {
    pub fn parameter_count(&self) -> usize {
        self.a.len() + self.w.iter().map(|w| w.params().len()).sum::<usize>()
    }
}

impl<F: Scalar> Scorer<F> for SharedModel<F> {
    fn n_relations(&self) -> usize {
        self.w.len()
    }

    fn score_candidates(&self, r: RelationId, s: EntityId, objects: &[EntityId]) -> Vec<F> {
        crate::factors::score_candidates_with(&self.a, &self.w[r.index()], s, objects)
    }
}

/// Per-target entity factors with one relation matrix per (target, relation).
/// Target `t` predicts with `a[t]` and `w[t][t]`; the other `w[t][r]` only
/// regularise `a[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmfModel<F> {
    pub a: Vec<Matrix<F>>,
    pub w: Vec<Vec<RelationFactors<F>>>,
    pub alpha: f64,
    pub rounds: usize,
    pub converged: bool,
    pub curve: LearningCurve,
    pub timings: Vec<TimingRow>,
}

impl<F: Scalar> DmfModel<F> {
    pub fn parameter_count(&self) -> usize {
        self.a.iter().map(|a| a.len()).sum::<usize>()
            + self.w.iter().flatten().map(|w| w.params().len()).sum::<usize>()
    }
}

impl<F: Scalar> Scorer<F> for DmfModel<F> {
    fn n_relations(&self) -> usize {
        self.a.len()
    }

    fn score_candidates(&self, r: RelationId, s: EntityId, objects: &[EntityId]) -> Vec<F> {
        crate::factors::score_candidates_with(&self.a[r.index()], &self.w[r.index()][r.index()], s, objects)
    }
}

/// Picks relations with probability proportional to their training size.
/// With a single candidate no randomness is consumed.
#[derive(Debug, Clone)]
struct RelationSampler {
    relations: Vec<RelationId>,
    cumulative: Vec<usize>,
}

impl RelationSampler {
    fn new(train: &MultiRelationalDataset, relations: Vec<RelationId>) -> Self {
        let mut acc = 0;
        let cumulative = relations
            .iter()
            .map(|&r| {
                acc += train.relation(r).len();
                acc
            })
            .collect();
        Self { relations, cumulative }
    }

    fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> RelationId {
        if self.relations.len() == 1 {
            return self.relations[0];
        }
        let u = rng.random_range(0..*self.cumulative.last().unwrap());
        self.relations[self.cumulative.partition_point(|&c| c <= u)]
    }
}

fn check_training_data(train: &MultiRelationalDataset, hp: &Hyperparams) -> Result<()> {
    hp.validate().map_err(Error::InvalidArgument)?;
    if train.n_relations() == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(r) = train.relation_ids().find(|&r| train.relation(r).is_empty()) {
        return Err(Error::SplitRejected {
            relation: train.relations().name(r.0).to_owned(),
        });
    }
    Ok(())
}

fn per_relation_budget(train: &MultiRelationalDataset, r: RelationId, hp: &Hyperparams) -> usize {
    hp.inner_budget.unwrap_or_else(|| train.relation(r).len())
}

fn relation_loss<F: Scalar>(
    train: &MultiRelationalDataset,
    r: RelationId,
    a: &Matrix<F>,
    w: &RelationFactors<F>,
    hp: &Hyperparams,
    round: usize,
) -> Result<f64> {
    let d_r = train.relation(r);
    let scope = RelationScope {
        triples: d_r,
        n_entities: a.rows(),
    };
    let mut rng = stream_rng(hp.seed, Stream::Loss, ((round as u64) << 32) | r.0 as u64);
    let n = crate::consensus::loss_samples(d_r, hp);
    Ok(estimate_loss_with(d_r, r, a, w, &scope, &mut rng, n)?.as_f64())
}

/// One BPR-SGD step for relation `r` on factors `(a, w)`, gradient scaled by `weight`.
#[allow(clippy::too_many_arguments)]
fn bpr_step<F: Scalar, G: Rng + ?Sized>(
    train: &MultiRelationalDataset,
    r: RelationId,
    a: &mut Matrix<F>,
    w: &mut RelationFactors<F>,
    weight: F,
    hp: &Hyperparams,
    ada: AdagradRefs<'_, F>,
    grads: &mut GradientBundle<F>,
    rng: &mut G,
) -> Result<(), Error> {
    let d_r = train.relation(r);
    let scope = RelationScope {
        triples: d_r,
        n_entities: a.rows(),
    };
    let (s, o) = sample_positive(d_r, rng);
    let o_neg = sample_unlinked_object(&scope, s, r, Which::TrainOnly, rng)?;
    grads.compute(a, w, s, o, o_neg);
    sgd_step(a, w, grads, (s, o, o_neg), weight, hp, None, ada).map_err(|_| Error::Divergence { round: 0, relation: r })
}

fn with_round(e: Error, round: usize) -> Error {
    match e {
        Error::Divergence { relation, .. } => Error::Divergence { round, relation },
        e => e,
    }
}

/// Complete sharing: samples relations in proportion to `|D_r|` and updates
/// the shared entity rows and that relation's `W_r`. Single-threaded; the
/// `n_workers` argument is accepted for interface parity.
pub fn train_cd<F: Scalar>(
    splits: &SplitDataset,
    hp: &Hyperparams,
    shape: RelationWeightShape,
    _n_workers: usize,
) -> Result<SharedModel<F>> {
    let train = &splits.train;
    check_training_data(train, hp)?;
    let n_entities = train.n_entities();
    let n_relations = train.n_relations();

    let mut a = Matrix::gaussian(n_entities, hp.k, hp.sigma_init, &mut stream_rng(hp.seed, Stream::InitEntity, 0));
    let mut w: Vec<RelationFactors<F>> = (0..n_relations)
        .map(|r| RelationFactors::gaussian(shape, hp.k, hp.sigma_init, &mut stream_rng(hp.seed, Stream::InitRelation, r as u64)))
        .collect();
    let mut ada_a = Matrix::<F>::zeros(n_entities, hp.k);
    let mut ada_w: Vec<Vec<F>> = w.iter().map(|w| vec![F::zero(); w.params().len()]).collect();
    let delta = F::lit(hp.adagrad_delta);
    let mut rng = stream_rng(hp.seed, Stream::Train, 0);
    let sampler = RelationSampler::new(train, train.relation_ids().collect());
    let budget: usize = train.relation_ids().map(|r| per_relation_budget(train, r, hp)).sum();
    let mut grads = GradientBundle::zeros(hp.k, shape);

    let total_loss = |a: &Matrix<F>, w: &[RelationFactors<F>], round: usize| {
        sum_losses(train.relation_ids().map(|r| relation_loss(train, r, a, &w[r.index()], hp, round)).collect())
    };

    let mut curve = LearningCurve::default();
    let mut timings = Vec::new();
    let (mut rounds, mut converged) = (0, false);
    let start = Instant::now();
    if hp.max_rounds > 0 {
        curve.initial_loss = Some(total_loss(&a, &w, 0)?);
    }
    let mut prev = curve.initial_loss.unwrap_or(f64::NAN);
    for round in 1..=hp.max_rounds {
        let t0 = Instant::now();
        for _ in 0..budget {
            let r = sampler.sample(&mut rng);
            let ada = AdagradRefs {
                entity: &mut ada_a,
                relation: &mut ada_w[r.index()],
                delta,
            };
            bpr_step(train, r, &mut a, &mut w[r.index()], F::one(), hp, ada, &mut grads, &mut rng)
                .map_err(|e| with_round(e, round))?;
        }
        timings.push(TimingRow {
            round,
            unit: 0,
            samples: budget,
            seconds: t0.elapsed().as_secs_f64(),
        });
        let total = total_loss(&a, &w, round)?;
        rounds = round;
        curve.rows.push(CurveRow {
            round,
            seconds: start.elapsed().as_secs_f64(),
            train_loss: total,
            valid_auc: None,
        });
        if check_convergence(prev, total, hp.epsilon) {
            converged = true;
            break;
        }
        prev = total;
    }
    Ok(SharedModel {
        a,
        w,
        rounds,
        converged,
        curve,
        timings,
    })
}

struct DmfTarget<F> {
    t: RelationId,
    a: Matrix<F>,
    w: Vec<RelationFactors<F>>,
    ada_a: Matrix<F>,
    ada_w: Vec<Vec<F>>,
    rng: StreamRng,
    sampler: RelationSampler,
    budget: usize,
}

/// Decoupled multi-target factorization: every target relation `t` learns its
/// own entity factors from all relations, auxiliary losses weighted by
/// `hp.alpha`. Targets run in parallel, each reading the whole training set.
pub fn train_dmf<F: Scalar>(
    splits: &SplitDataset,
    hp: &Hyperparams,
    shape: RelationWeightShape,
    n_workers: usize,
) -> Result<DmfModel<F>> {
    let train = &splits.train;
    check_training_data(train, hp)?;
    let n_entities = train.n_entities();
    let n_relations = train.n_relations();
    let factor = hp.dmf_budget_factor.unwrap_or(n_relations);

    let mut targets: Vec<DmfTarget<F>> = train
        .relation_ids()
        .map(|t| {
            let w: Vec<RelationFactors<F>> = (0..n_relations)
                .map(|r| {
                    let mut rng = if r == t.index() {
                        stream_rng(hp.seed, Stream::InitRelation, r as u64)
                    } else {
                        stream_rng(hp.seed, Stream::InitAuxiliary, (t.index() * n_relations + r) as u64)
                    };
                    RelationFactors::gaussian(shape, hp.k, hp.sigma_init, &mut rng)
                })
                .collect();
            let eligible = train
                .relation_ids()
                .filter(|&r| r == t || hp.alpha > 0.0)
                .collect();
            DmfTarget {
                t,
                a: Matrix::gaussian(n_entities, hp.k, hp.sigma_init, &mut stream_rng(hp.seed, Stream::InitEntity, t.0 as u64)),
                ada_a: Matrix::zeros(n_entities, hp.k),
                ada_w: w.iter().map(|w| vec![F::zero(); w.params().len()]).collect(),
                w,
                rng: stream_rng(hp.seed, Stream::Train, t.0 as u64),
                sampler: RelationSampler::new(train, eligible),
                budget: per_relation_budget(train, t, hp) * factor,
            }
        })
        .collect();
    let n_workers = effective_workers(n_workers);
    let assignment = lpt_assignment(&targets.iter().map(|t| t.budget).collect::<Vec<_>>(), n_workers);
    let delta = F::lit(hp.adagrad_delta);
    let alpha = F::lit(hp.alpha);

    let target_loss = |tg: &DmfTarget<F>, round: usize| relation_loss(train, tg.t, &tg.a, &tg.w[tg.t.index()], hp, round);

    let mut curve = LearningCurve::default();
    let mut timings = Vec::new();
    let (mut rounds, mut converged) = (0, false);
    let start = Instant::now();
    if hp.max_rounds > 0 {
        curve.initial_loss = Some(sum_losses(run_assigned(&mut targets, &assignment, n_workers, |tg| target_loss(tg, 0)))?);
    }
    let mut prev = curve.initial_loss.unwrap_or(f64::NAN);
    for round in 1..=hp.max_rounds {
        let results = run_assigned(&mut targets, &assignment, n_workers, |tg| {
            let t0 = Instant::now();
            let mut grads = GradientBundle::zeros(hp.k, shape);
            for _ in 0..tg.budget {
                let r = tg.sampler.sample(&mut tg.rng);
                let weight = if r == tg.t { F::one() } else { alpha };
                let ada = AdagradRefs {
                    entity: &mut tg.ada_a,
                    relation: &mut tg.ada_w[r.index()],
                    delta,
                };
                bpr_step(train, r, &mut tg.a, &mut tg.w[r.index()], weight, hp, ada, &mut grads, &mut tg.rng)
                    .map_err(|e| match e {
                        Error::Divergence { .. } => Error::Divergence { round, relation: tg.t },
                        e => e,
                    })?;
            }
            let seconds = t0.elapsed().as_secs_f64();
            Ok::<_, Error>((tg.budget, seconds, target_loss(tg, round)?))
        });
        let mut total = 0.0;
        for (t, res) in results.into_iter().enumerate() {
            let (samples, seconds, loss) = res?;
            timings.push(TimingRow {
                round,
                unit: t,
                samples,
                seconds,
            });
            total += loss;
        }
        rounds = round;
        curve.rows.push(CurveRow {
            round,
            seconds: start.elapsed().as_secs_f64(),
            train_loss: total,
            valid_auc: None,
        });
        if check_convergence(prev, total, hp.epsilon) {
            converged = true;
            break;
        }
        prev = total;
    }
    let (a, w) = targets.into_iter().map(|tg| (tg.a, tg.w)).unzip();
    Ok(DmfModel {
        a,
        w,
        alpha: hp.alpha,
        rounds,
        converged,
        curve,
        timings,
    })
}
