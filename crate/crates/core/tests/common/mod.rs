//! Independent oracles shared by the integration suites. Nothing here calls
//! the scoring or gradient code under test.
#![allow(dead_code)]

use consmrf::dataset::{sample_positive, sample_unlinked_object, MultiRelationalDataset, SplitDataset, Which};
use consmrf::factors::{Matrix, RelationFactors};
use consmrf::objective::{apply_sgd_step, AdagradState, GradientBundle};
use consmrf::seed::{stream_rng, Stream};
use consmrf::synthetic::{generate, SyntheticConfig};
use consmrf::{EntityId, Hyperparams, RelationId, RelationParams, RelationWeightShape};

/// Dense `k x k` matrix of any shape, built element by element.
pub fn dense_w(w: &RelationFactors<f64>) -> Vec<Vec<f64>> {
    let k = w.k();
    let p = w.params();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| match w.shape() {
                    RelationWeightShape::Identity => f64::from(u8::from(i == j)),
                    RelationWeightShape::Diagonal => {
                        if i == j {
                            p[i]
                        } else {
                            0.0
                        }
                    }
                    RelationWeightShape::Full => p[i * k + j],
                })
                .collect()
        })
        .collect()
}

/// Triple loop `sum_i sum_j x_i W_ij y_j`.
pub fn naive_bilinear(x: &[f64], w: &[Vec<f64>], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len() {
        for j in 0..y.len() {
            total += x[i] * w[i][j] * y[j];
        }
    }
    total
}

pub fn naive_score(p: &RelationParams, s: usize, o: usize) -> f64 {
    naive_bilinear(p.a.row(s), &dense_w(&p.w), p.a.row(o))
}

/// `ln(1 + e^{-d})` written directly, valid for moderate margins.
pub fn naive_pair_loss(d: f64) -> f64 {
    (1.0 + (-d).exp()).ln()
}

/// Loss of the pair `(s, o)` against `o'` from the naive evaluator.
pub fn naive_loss(p: &RelationParams, s: usize, o: usize, n: usize) -> f64 {
    naive_pair_loss(naive_score(p, s, o) - naive_score(p, s, n))
}

pub fn random_params(rng: &mut impl rand::Rng, n: usize, k: usize, shape: RelationWeightShape) -> RelationParams {
    let a = Matrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let w = RelationFactors::new(
        shape,
        k,
        (0..shape.param_count(k)).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    RelationParams::new(a, w)
}

/// Central finite differences of the pair loss with respect to the rows
/// `s`, `o`, `o'` and to every relation parameter.
pub struct FdGradients {
    pub g_as: Vec<f64>,
    pub g_ao: Vec<f64>,
    pub g_ao_prime: Vec<f64>,
    pub g_w: Vec<f64>,
}

pub fn fd_gradients(p: &RelationParams, s: usize, o: usize, n: usize, h: f64) -> FdGradients {
    let k = p.k();
    let row_grad = |row: usize| -> Vec<f64> {
        (0..k)
            .map(|f| {
                let mut plus = p.clone();
                plus.a.set(row, f, p.a.get(row, f) + h);
                let mut minus = p.clone();
                minus.a.set(row, f, p.a.get(row, f) - h);
                (naive_loss(&plus, s, o, n) - naive_loss(&minus, s, o, n)) / (2.0 * h)
            })
            .collect()
    };
    let g_w = (0..p.w.params().len())
        .map(|i| {
            let mut plus = p.clone();
            plus.w.params_mut()[i] += h;
            let mut minus = p.clone();
            minus.w.params_mut()[i] -= h;
            (naive_loss(&plus, s, o, n) - naive_loss(&minus, s, o, n)) / (2.0 * h)
        })
        .collect();
    FdGradients {
        g_as: row_grad(s),
        g_ao: row_grad(o),
        g_ao_prime: row_grad(n),
        g_w,
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Plain single-relation BPR-SGD on relation `r`, seeded like relation `r`
/// of the consensus trainer: `rounds * |D_r|` steps from the relation's own
/// init and training streams.
pub fn independent_bpr(
    train: &MultiRelationalDataset,
    r: RelationId,
    hp: &Hyperparams,
    shape: RelationWeightShape,
    steps: usize,
) -> RelationParams {
    let n = train.n_entities();
    let a = Matrix::gaussian(n, hp.k, hp.sigma_init, &mut stream_rng(hp.seed, Stream::InitEntity, r.0 as u64));
    let w = RelationFactors::gaussian(shape, hp.k, hp.sigma_init, &mut stream_rng(hp.seed, Stream::InitRelation, r.0 as u64));
    let mut p = RelationParams::new(a, w);
    let mut ada = AdagradState::for_params(&p, hp.adagrad_delta);
    let mut rng = stream_rng(hp.seed, Stream::Train, r.0 as u64);
    let d_r = train.relation(r);
    let mut grads = GradientBundle::zeros(hp.k, shape);
    for _ in 0..steps {
        let (s, o) = sample_positive(d_r, &mut rng);
        let o_neg = sample_unlinked_object(train, s, r, Which::TrainOnly, &mut rng).unwrap();
        grads.compute(&p.a, &p.w, s, o, o_neg);
        apply_sgd_step(&mut p, &grads, (s, o, o_neg), hp, &mut ada).unwrap();
    }
    p
}

pub fn bits(m: &Matrix<f64>) -> Vec<u64> {
    m.as_slice().iter().map(|x| x.to_bits()).collect()
}

pub fn small_synthetic(n_entities: usize, n_relations: usize, top_n: usize, seed: u64) -> MultiRelationalDataset {
    generate(&SyntheticConfig {
        n_entities,
        n_relations,
        k: 4,
        top_n,
        seed,
    })
}

/// The synthetic recovery set: |E| = 1000, k = 8, R = 10, top-20 per subject.
pub fn recovery_splits() -> SplitDataset {
    let ds = generate(&SyntheticConfig::default());
    consmrf::dataset::split_dataset(&ds, 0.1, 0.1, 0).unwrap()
}

pub fn e(i: u32) -> EntityId {
    EntityId(i)
}
