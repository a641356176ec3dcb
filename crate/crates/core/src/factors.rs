//! Learnable parameters and the bilinear relation score.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::EntityId;
use crate::scalar::Scalar;
use crate::seed::{stream_rng, Stream};

/// Dense row-major matrix; one row per entity for entity factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

/// `|E| x k` entity factors (`A_r`, `Z`, and the duals `V_r`).
pub type EntityFactors<F> = Matrix<F>;

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data }
    }

    /// Entries drawn i.i.d. from `Normal(0, sigma^2)`.
    pub fn gaussian<G: Rng + ?Sized>(rows: usize, cols: usize, sigma: f64, rng: &mut G) -> Self {
        Self {
            rows,
            cols,
            data: gaussian_vec(rows * cols, sigma, rng),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: F) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn copy_from(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.copy_from_slice(&other.data);
    }

    pub fn fill(&mut self, value: F) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn frobenius_norm(&self) -> F {
        self.data.iter().map(|&x| x * x).sum::<F>().sqrt()
    }

    /// `||self - other||_F`.
    pub fn frobenius_distance(&self, other: &Self) -> F {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<F>()
            .sqrt()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub(crate) fn gaussian_vec<F: Scalar, G: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut G) -> Vec<F> {
    if sigma == 0.0 {
        return vec![F::zero(); n];
    }
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            F::lit(sigma * z)
        })
        .collect()
}

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Parameterisation of the relation matrix `W_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationWeightShape {
    /// `W_r = I`, no parameters.
    Identity,
    /// `W_r = diag(w)`, `k` parameters.
    #[default]
    Diagonal,
    /// Dense `k x k`.
    Full,
}

impl RelationWeightShape {
    pub fn param_count(self, k: usize) -> usize {
        match self {
            Self::Identity => 0,
            Self::Diagonal => k,
            Self::Full => k * k,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Self::Identity => 0,
            Self::Diagonal => 1,
            Self::Full => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Self::Identity),
            1 => Some(Self::Diagonal),
            2 => Some(Self::Full),
            _ => None,
        }
    }
}

impl fmt::Display for RelationWeightShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Diagonal => "diagonal",
            Self::Full => "full",
        })
    }
}

impl FromStr for RelationWeightShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Self::Identity),
            "diagonal" => Ok(Self::Diagonal),
            "full" => Ok(Self::Full),
            _ => Err(format!("unknown relation shape `{s}`")),
        }
    }
}

/// Relation matrix `W_r` stored according to its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationFactors<F> {
    shape: RelationWeightShape,
    k: usize,
    params: Vec<F>,
}

impl<F: Scalar> RelationFactors<F> {
    pub fn new(shape: RelationWeightShape, k: usize, params: Vec<F>) -> Self {
        assert_eq!(params.len(), shape.param_count(k), "wrong parameter count for {shape}");
        Self { shape, k, params }
    }

    pub fn identity(k: usize) -> Self {
        Self::new(RelationWeightShape::Identity, k, Vec::new())
    }

    pub fn diagonal(w: Vec<F>) -> Self {
        let k = w.len();
        Self::new(RelationWeightShape::Diagonal, k, w)
    }

    /// Dense `k x k` matrix given row-major.
    pub fn full(k: usize, w: Vec<F>) -> Self {
        Self::new(RelationWeightShape::Full, k, w)
    }

    pub fn gaussian<G: Rng + ?Sized>(shape: RelationWeightShape, k: usize, sigma: f64, rng: &mut G) -> Self {
        Self::new(shape, k, gaussian_vec(shape.param_count(k), sigma, rng))
    }

    pub fn shape(&self) -> RelationWeightShape {
        self.shape
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    /// Row-major dense form of `W`.
    pub fn to_dense(&self) -> Vec<F> {
        let k = self.k;
        match self.shape {
            RelationWeightShape::Full => self.params.clone(),
            _ => {
                let mut d = vec![F::zero(); k * k];
                for f in 0..k {
                    d[f * k + f] = match self.shape {
                        RelationWeightShape::Identity => F::one(),
                        _ => self.params[f],
                    };
                }
                d
            }
        }
    }

    /// `out = W x`.
    pub fn apply(&self, x: &[F], out: &mut [F]) {
        let k = self.k;
        match self.shape {
            RelationWeightShape::Identity => out.copy_from_slice(x),
            RelationWeightShape::Diagonal => {
                for f in 0..k {
                    out[f] = self.params[f] * x[f];
                }
            }
            RelationWeightShape::Full => {
                for (i, o) in out.iter_mut().enumerate().take(k) {
                    *o = dot(&self.params[i * k..(i + 1) * k], x);
                }
            }
        }
    }

    /// `out = W^T x`, i.e. the row vector `x^T W`.
    pub fn apply_transpose(&self, x: &[F], out: &mut [F]) {
        let k = self.k;
        match self.shape {
            RelationWeightShape::Full => {
                out[..k].iter_mut().for_each(|o| *o = F::zero());
                for (i, &xi) in x.iter().enumerate().take(k) {
                    let row = &self.params[i * k..(i + 1) * k];
                    for (o, &w) in out.iter_mut().zip(row) {
                        *o += xi * w;
                    }
                }
            }
            _ => self.apply(x, out),
        }
    }

    /// `x^T W y`.
    #[inline]
    pub fn bilinear(&self, x: &[F], y: &[F]) -> F {
        let k = self.k;
        match self.shape {
            RelationWeightShape::Identity => dot(x, y),
            RelationWeightShape::Diagonal => (0..k).fold(F::zero(), |acc, f| acc + x[f] * self.params[f] * y[f]),
            RelationWeightShape::Full => (0..k).fold(F::zero(), |acc, i| {
                acc + x[i] * dot(&self.params[i * k..(i + 1) * k], y)
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }
}

/// `y_r(s, o) = a_s^T W a_o` with entity factors `a` and relation factors `w`.
#[inline]
pub fn score_with<F: Scalar>(a: &Matrix<F>, w: &RelationFactors<F>, s: EntityId, o: EntityId) -> F {
    w.bilinear(a.row(s.index()), a.row(o.index()))
}

/// Batch score for one subject; `a_s^T W` is formed once.
pub fn score_candidates_with<F: Scalar>(
    a: &Matrix<F>,
    w: &RelationFactors<F>,
    s: EntityId,
    objects: &[EntityId],
) -> Vec<F> {
    let mut left = vec![F::zero(); w.k()];
    w.apply_transpose(a.row(s.index()), &mut left);
    objects.iter().map(|o| dot(&left, a.row(o.index()))).collect()
}

/// Entity and relation factors used to predict one relation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationParams<F> {
    pub a: EntityFactors<F>,
    pub w: RelationFactors<F>,
}

impl<F: Scalar> RelationParams<F> {
    pub fn new(a: EntityFactors<F>, w: RelationFactors<F>) -> Self {
        assert_eq!(a.cols(), w.k(), "entity and relation factors disagree on k");
        Self { a, w }
    }

    pub fn k(&self) -> usize {
        self.w.k()
    }

    pub fn n_entities(&self) -> usize {
        self.a.rows()
    }

    #[inline]
    pub fn score(&self, s: EntityId, o: EntityId) -> F {
        score_with(&self.a, &self.w, s, o)
    }

    pub fn score_candidates(&self, s: EntityId, objects: &[EntityId]) -> Vec<F> {
        score_candidates_with(&self.a, &self.w, s, objects)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.w.is_finite()
    }
}

/// Free-function form of [`RelationParams::score`].
pub fn score<F: Scalar>(p: &RelationParams<F>, s: EntityId, o: EntityId) -> F {
    p.score(s, o)
}

pub fn score_candidates<F: Scalar>(p: &RelationParams<F>, s: EntityId, objects: &[EntityId]) -> Vec<F> {
    p.score_candidates(s, objects)
}

/// Global consensus factors `Z` and one dual matrix `V_r` per relation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState<F> {
    pub z: EntityFactors<F>,
    pub v: Vec<EntityFactors<F>>,
}

/// Training hyperparameters shared by the consensus trainer and the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Latent dimension.
    pub k: usize,
    /// L2 weight.
    pub lambda: f64,
    /// Base step size before ADAGRAD scaling.
    pub eta: f64,
    /// ADMM penalty.
    pub rho: f64,
    /// Standard deviation of the Gaussian initialisation.
    pub sigma_init: f64,
    /// Early-stopping threshold on the change of the summed training loss.
    pub epsilon: f64,
    /// SGD samples per relation per round; `None` means `|D_r|`.
    pub inner_budget: Option<usize>,
    pub max_rounds: usize,
    /// Negatives sampled per (relation, subject) at evaluation.
    pub eval_negatives: usize,
    pub top_k: usize,
    /// Auxiliary relation weight of DMF.
    pub alpha: f64,
    pub seed: u64,
    /// Reset `A_r` to `Z` at the start of every round.
    pub reset_to_consensus: bool,
    /// Keep the `A_r` ADAGRAD accumulators across the reset.
    pub persist_adagrad: bool,
    pub adagrad_delta: f64,
    /// Cap on Monte-Carlo samples per relation in the convergence check.
    pub loss_samples: usize,
    /// DMF samples per target per round, as a multiple of `|D_t|`; `None` means `R`.
    pub dmf_budget_factor: Option<usize>,
    /// Compute validation AUC every this many rounds (0 disables).
    pub valid_every: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 10,
            lambda: 0.005,
            eta: 0.5,
            rho: 0.0005,
            sigma_init: 0.1,
            epsilon: 1e-4,
            inner_budget: None,
            max_rounds: 200,
            eval_negatives: 100,
            top_k: 5,
            alpha: 0.25,
            seed: 0,
            reset_to_consensus: true,
            persist_adagrad: false,
            adagrad_delta: 1e-8,
            loss_samples: 10_000,
            dmf_budget_factor: None,
            valid_every: 0,
        }
    }
}

impl Hyperparams {
    // Negated comparisons so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if !(self.eta > 0.0) {
            return Err("eta must be positive".into());
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("rho", self.rho),
            ("sigma_init", self.sigma_init),
            ("epsilon", self.epsilon),
            ("alpha", self.alpha),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("{name} must be finite and non-negative"));
            }
        }
        if self.loss_samples == 0 {
            return Err("loss_samples must be at least 1".into());
        }
        Ok(())
    }
}

/// Initial relation factors of relation `r`, drawn from its own seeded streams.
pub fn init_relation<F: Scalar>(
    n_entities: usize,
    r: usize,
    hp: &Hyperparams,
    shape: RelationWeightShape,
) -> RelationParams<F> {
    let a = Matrix::gaussian(n_entities, hp.k, hp.sigma_init, &mut stream_rng(hp.seed, Stream::InitEntity, r as u64));
    let w = RelationFactors::gaussian(
        shape,
        hp.k,
        hp.sigma_init,
        &mut stream_rng(hp.seed, Stream::InitRelation, r as u64),
    );
    RelationParams::new(a, w)
}

/// Gaussian `Z`, `A_r`, `W_r`; all-zero duals.
pub fn init_model<F: Scalar>(
    n_entities: usize,
    n_relations: usize,
    hp: &Hyperparams,
    shape: RelationWeightShape,
) -> (Vec<RelationParams<F>>, ConsensusState<F>) {
    let z = Matrix::gaussian(n_entities, hp.k, hp.sigma_init, &mut stream_rng(hp.seed, Stream::InitConsensus, 0));
    let params = (0..n_relations).map(|r| init_relation(n_entities, r, hp, shape)).collect();
    let v = (0..n_relations).map(|_| Matrix::zeros(n_entities, hp.k)).collect();
    (params, ConsensusState { z, v })
}
