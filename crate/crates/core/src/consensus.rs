//! The consensus ADMM outer loop: per-relation penalised SGD in parallel,
//! averaging into the consensus matrix, dual ascent, and early stopping on the
//! summed training loss.

use std::time::Instant;

use rand::Rng;

use crate::curve::{CurveRow, LearningCurve, TimingRow};
use crate::dataset::{sample_positive, sample_unlinked_object, EntityId, RelationId, RelationTriples, Scope, SplitDataset, Which};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate_on, Scorer};
use crate::factors::{init_model, ConsensusState, EntityFactors, Hyperparams, Matrix, RelationParams, RelationWeightShape};
use crate::objective::{apply_admm_sgd_step, estimate_relation_loss, AdagradState, GradientBundle};
use crate::parallel::{effective_workers, lpt_assignment, run_assigned};
use crate::scalar::Scalar;
use crate::seed::{stream_rng, Rng as StreamRng, Stream};

/// Membership view over a single relation's training triples. Update steps see
/// only this, never the other relations.
#[derive(Debug, Clone, Copy)]
pub struct RelationScope<'a> {
    pub triples: &'a RelationTriples,
    pub n_entities: usize,
}

impl Scope for RelationScope<'_> {
    fn n_entities(&self) -> usize {
        self.n_entities
    }

    #[inline]
    fn contains(&self, s: EntityId, _r: RelationId, o: EntityId, _which: Which) -> bool {
        self.triples.contains(s, o)
    }

    fn degree(&self, s: EntityId, _r: RelationId, _which: Which) -> usize {
        self.triples.degree(s)
    }
}

/// Output of [`train_consmrf`]. Relation `r` is predicted with `A_r`, `W_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<F> {
    pub params: Vec<RelationParams<F>>,
    pub consensus: ConsensusState<F>,
    pub rounds: usize,
    pub converged: bool,
    pub curve: LearningCurve,
    pub timings: Vec<TimingRow>,
}

impl<F: Scalar> TrainedModel<F> {
    /// Entity factors, duals and relation factors, in scalars.
    pub fn parameter_count(&self) -> usize {
        let entity = self.consensus.z.len() + self.params.iter().map(|p| p.a.len()).sum::<usize>();
        let duals: usize = self.consensus.v.iter().map(|v| v.len()).sum();
        let relation: usize = self.params.iter().map(|p| p.w.params().len()).sum();
        entity + duals + relation
    }

    /// `mean_r ||A_r - Z||_F`.
    pub fn mean_consensus_gap(&self) -> f64 {
        let total: f64 = self
            .params
            .iter()
            .map(|p| p.a.frobenius_distance(&self.consensus.z).as_f64())
            .sum();
        total / self.params.len() as f64
    }
}

impl<F: Scalar> Scorer<F> for TrainedModel<F> {
    fn n_relations(&self) -> usize {
        self.params.len()
    }

    fn score_candidates(&self, r: RelationId, s: EntityId, objects: &[EntityId]) -> Vec<F> {
        self.params[r.index()].score_candidates(s, objects)
    }
}

/// Runs `budget` penalised BPR-SGD steps on relation `r`, drawing positives
/// from `d_r` and negatives from its complement.
#[allow(clippy::too_many_arguments)]
pub fn update_aw<F: Scalar, G: Rng + ?Sized>(
    r: RelationId,
    d_r: &RelationTriples,
    p_r: &mut RelationParams<F>,
    z: &EntityFactors<F>,
    v_r: &EntityFactors<F>,
    hp: &Hyperparams,
    ada: &mut AdagradState<F>,
    rng: &mut G,
    budget: usize,
    round: usize,
) -> Result<()> {
    if budget == 0 {
        return Ok(());
    }
    assert!(!d_r.is_empty(), "relation {r} has no training data");
    let scope = RelationScope {
        triples: d_r,
        n_entities: p_r.n_entities(),
    };
    let mut grads = GradientBundle::zeros(p_r.k(), p_r.w.shape());
    for _ in 0..budget {
        let (s, o) = sample_positive(d_r, rng);
        let o_neg = sample_unlinked_object(&scope, s, r, Which::TrainOnly, rng)?;
        grads.compute(&p_r.a, &p_r.w, s, o, o_neg);
        apply_admm_sgd_step(p_r, &grads, (s, o, o_neg), z, v_r, hp, ada)
            .map_err(|_| Error::Divergence { round, relation: r })?;
    }
    Ok(())
}

/// Elementwise mean of the relation entity factors.
pub fn update_z<F: Scalar>(all_a: &[&EntityFactors<F>]) -> EntityFactors<F> {
    let first = all_a.first().expect("update_z needs at least one matrix");
    let mut z = Matrix::zeros(first.rows(), first.cols());
    update_z_into(&mut z, all_a);
    z
}

pub fn update_z_into<F: Scalar>(z: &mut EntityFactors<F>, all_a: &[&EntityFactors<F>]) {
    let r = F::lit(all_a.len() as f64);
    let out = z.as_mut_slice();
    out.iter_mut().for_each(|x| *x = F::zero());
    for a in all_a {
        assert_eq!(a.len(), out.len(), "factor matrices differ in shape");
        for (x, &y) in out.iter_mut().zip(a.as_slice()) {
            *x += y;
        }
    }
    out.iter_mut().for_each(|x| *x /= r);
}

/// `V_r + rho (A_r - Z)`, in place.
pub fn update_v<F: Scalar>(v_r: &mut EntityFactors<F>, a_r: &EntityFactors<F>, z: &EntityFactors<F>, rho: F) {
    for ((v, &a), &zz) in v_r.as_mut_slice().iter_mut().zip(a_r.as_slice()).zip(z.as_slice()) {
        *v += rho * (a - zz);
    }
}

/// True when the summed training loss moved by less than `epsilon`.
pub fn check_convergence(prev_total_loss: f64, cur_total_loss: f64, epsilon: f64) -> bool {
    (cur_total_loss - prev_total_loss).abs() < epsilon
}

pub(crate) fn loss_samples(d_r: &RelationTriples, hp: &Hyperparams) -> usize {
    d_r.len().min(hp.loss_samples).max(1)
}

struct Worker<'d, F> {
    r: RelationId,
    data: &'d RelationTriples,
    params: RelationParams<F>,
    ada: AdagradState<F>,
    rng: StreamRng,
}

/// Trains the consensus model on `splits.train` with `n_workers` threads.
///
/// Every relation owns its generator, derived from `(hp.seed, r)`, so the
/// result does not depend on `n_workers`. Requests beyond the available
/// cores are capped.
pub fn train_consmrf<F: Scalar>(
    splits: &SplitDataset,
    hp: &Hyperparams,
    shape: RelationWeightShape,
    n_workers: usize,
) -> Result<TrainedModel<F>> {
    hp.validate().map_err(Error::InvalidArgument)?;
    let train = &splits.train;
    let n_entities = train.n_entities();
    let n_relations = train.n_relations();
    if n_relations == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(r) = train.relation_ids().find(|&r| train.relation(r).is_empty()) {
        return Err(Error::SplitRejected {
            relation: train.relations().name(r.0).to_owned(),
        });
    }

    let (params, mut consensus) = init_model::<F>(n_entities, n_relations, hp, shape);
    let mut workers: Vec<Worker<'_, F>> = params
        .into_iter()
        .enumerate()
        .map(|(i, params)| {
            let r = RelationId(i as u32);
            Worker {
                r,
                data: train.relation(r),
                ada: AdagradState::for_params(&params, hp.adagrad_delta),
                params,
                rng: stream_rng(hp.seed, Stream::Train, i as u64),
            }
        })
        .collect();
    let n_workers = effective_workers(n_workers);
    let assignment = lpt_assignment(&workers.iter().map(|w| w.data.len()).collect::<Vec<_>>(), n_workers);
    let rho = F::lit(hp.rho);

    let mut curve = LearningCurve::default();
    let mut timings = Vec::new();
    let mut rounds = 0;
    let mut converged = false;
    let start = Instant::now();

    if hp.max_rounds > 0 {
        let losses = run_assigned(&mut workers, &assignment, n_workers, |w| relation_loss(w, hp, 0));
        curve.initial_loss = Some(sum_losses(losses)?);
    }
    let mut prev = curve.initial_loss.unwrap_or(f64::NAN);

    for round in 1..=hp.max_rounds {
        let z = &consensus.z;
        let v = &consensus.v;
        let results = run_assigned(&mut workers, &assignment, n_workers, |w| {
            let t0 = Instant::now();
            if hp.reset_to_consensus {
                w.params.a.copy_from(z);
                if !hp.persist_adagrad {
                    w.ada.reset_entities();
                }
            }
            let budget = hp.inner_budget.unwrap_or(w.data.len());
            update_aw(
                w.r,
                w.data,
                &mut w.params,
                z,
                &v[w.r.index()],
                hp,
                &mut w.ada,
                &mut w.rng,
                budget,
                round,
            )?;
            Ok::<_, Error>((budget, t0.elapsed().as_secs_f64()))
        });
        for (i, res) in results.into_iter().enumerate() {
            let (samples, seconds) = res?;
            timings.push(TimingRow {
                round,
                unit: i,
                samples,
                seconds,
            });
        }

        {
            let all_a: Vec<&EntityFactors<F>> = workers.iter().map(|w| &w.params.a).collect();
            update_z_into(&mut consensus.z, &all_a);
        }

        let z = &consensus.z;
        let mut pairs: Vec<(&mut Worker<'_, F>, &mut EntityFactors<F>)> =
            workers.iter_mut().zip(consensus.v.iter_mut()).collect();
        let losses = run_assigned(&mut pairs, &assignment, n_workers, |(w, v_r)| {
            update_v(v_r, &w.params.a, z, rho);
            if !v_r.is_finite() {
                return Err(Error::Divergence { round, relation: w.r });
            }
            relation_loss(w, hp, round)
        });
        drop(pairs);
        let total = sum_losses(losses)?;

        let valid_auc = if hp.valid_every > 0 && round % hp.valid_every == 0 && splits.valid.n_triples() > 0 {
            let view: Vec<&RelationParams<F>> = workers.iter().map(|w| &w.params).collect();
            Some(evaluate_on(&view[..], splits, &splits.valid, hp.eval_negatives, hp.top_k, hp.seed)?.auc)
        } else {
            None
        };

        rounds = round;
        curve.rows.push(CurveRow {
            round,
            seconds: start.elapsed().as_secs_f64(),
            train_loss: total,
            valid_auc,
        });
        if check_convergence(prev, total, hp.epsilon) {
            converged = true;
            break;
        }
        prev = total;
    }

    Ok(TrainedModel {
        params: workers.into_iter().map(|w| w.params).collect(),
        consensus,
        rounds,
        converged,
        curve,
        timings,
    })
}

fn relation_loss<F: Scalar>(w: &Worker<'_, F>, hp: &Hyperparams, round: usize) -> Result<f64> {
    let scope = RelationScope {
        triples: w.data,
        n_entities: w.params.n_entities(),
    };
    let mut rng = stream_rng(hp.seed, Stream::Loss, ((round as u64) << 32) | w.r.0 as u64);
    let loss = estimate_relation_loss(w.data, w.r, &w.params, &scope, &mut rng, loss_samples(w.data, hp))?;
    Ok(loss.as_f64())
}

pub(crate) fn sum_losses(losses: Vec<Result<f64>>) -> Result<f64> {
    losses.into_iter().try_fold(0.0, |acc, l| Ok(acc + l?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn mean_of_ones_and_zeros() {
        let ones = Matrix::from_fn(3, 2, |_, _| 1.0f64);
        let zeros = Matrix::zeros(3, 2);
        let z = update_z(&[&ones, &zeros]);
        assert!(z.as_slice().iter().all(|&x| x == 0.5));
        assert_eq!(update_z(&[&ones]), ones);
    }

    #[test]
    fn dual_update() {
        let z = Matrix::from_fn(2, 2, |i, j| (i + j) as f64);
        let mut v = Matrix::zeros(2, 2);
        update_v(&mut v, &z, &z, 0.3);
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
        let a = Matrix::from_fn(2, 2, |i, j| (i + j) as f64 + 1.0);
        let zero = Matrix::zeros(2, 2);
        let ones = Matrix::from_fn(2, 2, |_, _| 1.0);
        let mut v = Matrix::zeros(2, 2);
        update_v(&mut v, &ones, &zero, 0.005);
        assert!(v.as_slice().iter().all(|&x| x == 0.005));
        let _ = a;
    }

    #[test]
    fn convergence_rule() {
        assert!(check_convergence(1.3, 1.3, 1e-12));
        assert!(!check_convergence(1.0, 1.1, 0.05));
        assert!(check_convergence(1.0, 1.01, 0.05));
        assert!(check_convergence(1.01, 1.0, 0.05));
    }

    #[test]
    fn zero_budget_is_a_no_op() {
        let mut d = RelationTriples::default();
        d.insert(EntityId(0), EntityId(1));
        let mut p = RelationParams::new(
            Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64),
            crate::factors::RelationFactors::diagonal(vec![1.0, 2.0]),
        );
        let before = p.clone();
        let z = Matrix::zeros(3, 2);
        let mut ada = AdagradState::for_params(&p, 1e-8);
        let mut rng = StreamRng::seed_from_u64(1);
        update_aw(RelationId(0), &d, &mut p, &z, &z.clone(), &Hyperparams::default(), &mut ada, &mut rng, 0, 1).unwrap();
        assert_eq!(p, before);
    }
}
