//! BPR pairwise loss, its stochastic gradients, and the ADAGRAD-scaled SGD step
//! with optional consensus penalty.

use rand::Rng;

use crate::dataset::{sample_positive, sample_unlinked_object, EntityId, RelationId, RelationTriples, Scope, Which};
use crate::error::Result;
use crate::factors::{score_with, EntityFactors, Hyperparams, Matrix, RelationFactors, RelationParams, RelationWeightShape};
use crate::scalar::Scalar;

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `-ln sigmoid(y_pos - y_neg)`.
#[inline]
pub fn bpr_pair_loss<F: Scalar>(y_pos: F, y_neg: F) -> F {
    let d = y_pos - y_neg;
    if d >= F::zero() {
        (-d).exp().ln_1p()
    } else {
        -d + d.exp().ln_1p()
    }
}

/// Gradients of one BPR pair term with respect to `a_s`, `a_o`, `a_o'` and `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle<F> {
    pub g_as: Vec<F>,
    pub g_ao: Vec<F>,
    pub g_ao_prime: Vec<F>,
    /// Same layout as [`RelationFactors::params`].
    pub g_w: Vec<F>,
    diff: Vec<F>,
}

impl<F: Scalar> GradientBundle<F> {
    pub fn zeros(k: usize, shape: RelationWeightShape) -> Self {
        Self {
            g_as: vec![F::zero(); k],
            g_ao: vec![F::zero(); k],
            g_ao_prime: vec![F::zero(); k],
            g_w: vec![F::zero(); shape.param_count(k)],
            diff: vec![F::zero(); k],
        }
    }

    /// Fills the bundle for the pair `(s, o)` against `o'` and returns the
    /// score margin `y(s,o) - y(s,o')`.
    pub fn compute(&mut self, a: &Matrix<F>, w: &RelationFactors<F>, s: EntityId, o: EntityId, o_neg: EntityId) -> F {
        let a_s = a.row(s.index());
        let a_o = a.row(o.index());
        let a_n = a.row(o_neg.index());
        for ((d, &p), &n) in self.diff.iter_mut().zip(a_o).zip(a_n) {
            *d = p - n;
        }
        let margin = w.bilinear(a_s, a_o) - w.bilinear(a_s, a_n);
        // -1 / (1 + e^margin)
        let c = -sigmoid(-margin);

        w.apply(&self.diff, &mut self.g_as);
        w.apply_transpose(a_s, &mut self.g_ao);
        for f in 0..self.g_as.len() {
            self.g_as[f] = c * self.g_as[f];
            self.g_ao[f] = c * self.g_ao[f];
            self.g_ao_prime[f] = -self.g_ao[f];
        }
        let k = self.diff.len();
        match w.shape() {
            RelationWeightShape::Identity => {}
            RelationWeightShape::Diagonal => {
                for f in 0..k {
                    self.g_w[f] = c * (a_s[f] * self.diff[f]);
                }
            }
            RelationWeightShape::Full => {
                for i in 0..k {
                    for j in 0..k {
                        self.g_w[i * k + j] = c * (a_s[i] * self.diff[j]);
                    }
                }
            }
        }
        margin
    }
}

/// Stochastic BPR gradients at the current parameters.
pub fn bpr_stochastic_gradients<F: Scalar>(p: &RelationParams<F>, s: EntityId, o: EntityId, o_neg: EntityId) -> GradientBundle<F> {
    let mut g = GradientBundle::zeros(p.k(), p.w.shape());
    g.compute(&p.a, &p.w, s, o, o_neg);
    g
}

/// Per-coordinate squared-gradient accumulators for one `(A, W)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState<F> {
    pub entity: Matrix<F>,
    pub relation: Vec<F>,
    delta: F,
}

impl<F: Scalar> AdagradState<F> {
    pub fn new(n_entities: usize, k: usize, relation_params: usize, delta: f64) -> Self {
        Self {
            entity: Matrix::zeros(n_entities, k),
            relation: vec![F::zero(); relation_params],
            delta: F::lit(delta),
        }
    }

    pub fn for_params(p: &RelationParams<F>, delta: f64) -> Self {
        Self::new(p.n_entities(), p.k(), p.w.params().len(), delta)
    }

    pub fn reset_entities(&mut self) {
        self.entity.fill(F::zero());
    }

    pub fn refs(&mut self) -> AdagradRefs<'_, F> {
        AdagradRefs {
            entity: &mut self.entity,
            relation: &mut self.relation,
            delta: self.delta,
        }
    }

    /// Step size the next update of a coordinate with accumulator `acc` would get.
    #[inline]
    pub fn effective_step(&self, eta: F, acc: F) -> F {
        eta / (acc.sqrt() + self.delta)
    }
}

/// Borrowed accumulators; lets several relation matrices share one entity accumulator.
#[derive(Debug)]
pub struct AdagradRefs<'a, F> {
    pub entity: &'a mut Matrix<F>,
    pub relation: &'a mut [F],
    pub delta: F,
}

/// Marker for a step that produced non-finite parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFinite;

/// Consensus terms applied to entity rows: `v_row + rho (a_row - z_row)`.
#[derive(Debug, Clone, Copy)]
pub struct Penalty<'a, F> {
    pub z: &'a EntityFactors<F>,
    pub v: &'a EntityFactors<F>,
    pub rho: F,
}

#[inline]
fn adagrad_update<F: Scalar>(param: &mut F, acc: &mut F, total: F, eta: F, delta: F) {
    *acc += total * total;
    *param -= eta / (acc.sqrt() + delta) * total;
}

#[allow(clippy::too_many_arguments)]
fn update_row<F: Scalar>(
    a: &mut Matrix<F>,
    acc: &mut Matrix<F>,
    row: usize,
    grad: &[F],
    weight: F,
    lambda: F,
    eta: F,
    delta: F,
    penalty: Option<&Penalty<'_, F>>,
) -> bool {
    let params = a.row_mut(row);
    let accs = acc.row_mut(row);
    for f in 0..params.len() {
        let x = params[f];
        let mut total = weight * grad[f] + lambda * x;
        if let Some(p) = penalty {
            total = total + p.v.get(row, f) + p.rho * (x - p.z.get(row, f));
        }
        adagrad_update(&mut params[f], &mut accs[f], total, eta, delta);
    }
    params.iter().all(|x| x.is_finite())
}

/// One SGD update of rows `s`, `o`, `o'` of `a` and of `w`.
///
/// Each entity row receives `weight * loss_grad + lambda * row`, plus
/// `v_row + rho (row - z_row)` when a penalty is given; `w` receives
/// `weight * loss_grad + lambda * w`. Rows that coincide are updated once with
/// the summed loss gradient.
#[allow(clippy::too_many_arguments)]
pub fn sgd_step<F: Scalar>(
    a: &mut Matrix<F>,
    w: &mut RelationFactors<F>,
    grads: &GradientBundle<F>,
    rows: (EntityId, EntityId, EntityId),
    weight: F,
    hp: &Hyperparams,
    penalty: Option<Penalty<'_, F>>,
    ada: AdagradRefs<'_, F>,
) -> Result<(), NonFinite> {
    let lambda = F::lit(hp.lambda);
    let eta = F::lit(hp.eta);
    let delta = ada.delta;
    let (s, o, n) = (rows.0.index(), rows.1.index(), rows.2.index());
    let penalty = penalty.as_ref();

    let mut finite = true;
    if s != o && s != n && o != n {
        for (row, g) in [(s, &grads.g_as), (o, &grads.g_ao), (n, &grads.g_ao_prime)] {
            finite &= update_row(a, ada.entity, row, g, weight, lambda, eta, delta, penalty);
        }
    } else {
        let mut merged: Vec<(usize, Vec<F>)> = Vec::with_capacity(3);
        for (row, g) in [(s, &grads.g_as), (o, &grads.g_ao), (n, &grads.g_ao_prime)] {
            match merged.iter_mut().find(|(r, _)| *r == row) {
                Some((_, acc)) => acc.iter_mut().zip(g).for_each(|(x, &y)| *x += y),
                None => merged.push((row, g.clone())),
            }
        }
        for (row, g) in &merged {
            finite &= update_row(a, ada.entity, *row, g, weight, lambda, eta, delta, penalty);
        }
    }

    let params = w.params_mut();
    for (i, (x, acc)) in params.iter_mut().zip(ada.relation.iter_mut()).enumerate() {
        let total = weight * grads.g_w[i] + lambda * *x;
        adagrad_update(x, acc, total, eta, delta);
        finite &= x.is_finite();
    }
    if finite {
        Ok(())
    } else {
        Err(NonFinite)
    }
}

/// The penalised step of the per-relation ADMM subproblem.
#[allow(clippy::too_many_arguments)]
pub fn apply_admm_sgd_step<F: Scalar>(
    p: &mut RelationParams<F>,
    grads: &GradientBundle<F>,
    rows: (EntityId, EntityId, EntityId),
    z: &EntityFactors<F>,
    v_r: &EntityFactors<F>,
    hp: &Hyperparams,
    ada: &mut AdagradState<F>,
) -> Result<(), NonFinite> {
    let penalty = Penalty {
        z,
        v: v_r,
        rho: F::lit(hp.rho),
    };
    sgd_step(&mut p.a, &mut p.w, grads, rows, F::one(), hp, Some(penalty), ada.refs())
}

/// Plain L2-regularised BPR step.
pub fn apply_sgd_step<F: Scalar>(
    p: &mut RelationParams<F>,
    grads: &GradientBundle<F>,
    rows: (EntityId, EntityId, EntityId),
    hp: &Hyperparams,
    ada: &mut AdagradState<F>,
) -> Result<(), NonFinite> {
    sgd_step(&mut p.a, &mut p.w, grads, rows, F::one(), hp, None, ada.refs())
}

/// Monte-Carlo estimate of the mean BPR pair loss of one relation: positives
/// drawn uniformly from `d_r`, negatives from the training-scope complement.
#[allow(clippy::too_many_arguments)]
pub fn estimate_loss_with<F: Scalar, S: Scope + ?Sized, G: Rng + ?Sized>(
    d_r: &RelationTriples,
    r: RelationId,
    a: &Matrix<F>,
    w: &RelationFactors<F>,
    scope: &S,
    rng: &mut G,
    n_samples: usize,
) -> Result<F> {
    assert!(n_samples >= 1 && !d_r.is_empty());
    let mut total = F::zero();
    for _ in 0..n_samples {
        let (s, o) = sample_positive(d_r, rng);
        let o_neg = sample_unlinked_object(scope, s, r, Which::TrainOnly, rng)?;
        total += bpr_pair_loss(score_with(a, w, s, o), score_with(a, w, s, o_neg));
    }
    Ok(total / F::lit(n_samples as f64))
}

pub fn estimate_relation_loss<F: Scalar, S: Scope + ?Sized, G: Rng + ?Sized>(
    d_r: &RelationTriples,
    r: RelationId,
    p: &RelationParams<F>,
    scope: &S,
    rng: &mut G,
    n_samples: usize,
) -> Result<F> {
    estimate_loss_with(d_r, r, &p.a, &p.w, scope, rng, n_samples)
}
