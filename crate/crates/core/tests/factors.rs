mod common;

use common::{dense_w, naive_bilinear, naive_score, random_params};
use consmrf::factors::{score_candidates, RelationFactors};
use consmrf::seed::{stream_rng, Stream};
use consmrf::{EntityId, RelationWeightShape};
use proptest::prelude::*;
use rand::Rng;

const SHAPES: [RelationWeightShape; 3] = [
    RelationWeightShape::Identity,
    RelationWeightShape::Diagonal,
    RelationWeightShape::Full,
];

#[test]
fn score_matches_triple_loop() {
    let mut rng = stream_rng(1, Stream::Synthetic, 9);
    for shape in SHAPES {
        for k in 1..=8 {
            let p = random_params(&mut rng, 6, k, shape);
            for s in 0..6 {
                for o in 0..6 {
                    let got = p.score(EntityId(s as u32), EntityId(o as u32));
                    assert!((got - naive_score(&p, s, o)).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn batched_scores_match_single_scores() {
    let mut rng = stream_rng(2, Stream::Synthetic, 9);
    for shape in SHAPES {
        let p = random_params(&mut rng, 20, 5, shape);
        let objects: Vec<EntityId> = (0..20).map(EntityId).collect();
        for s in 0..20 {
            let batch = score_candidates(&p, EntityId(s), &objects);
            for (o, y) in objects.iter().zip(batch) {
                assert!((y - p.score(EntityId(s), *o)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn restricted_shapes_equal_their_dense_form() {
    let mut rng = stream_rng(3, Stream::Synthetic, 9);
    for shape in [RelationWeightShape::Identity, RelationWeightShape::Diagonal] {
        let w = RelationFactors::gaussian(shape, 4, 1.0, &mut rng);
        let full = RelationFactors::full(4, w.to_dense());
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!((w.bilinear(&x, &y) - full.bilinear(&x, &y)).abs() < 1e-12);
        }
    }
}

fn vec_k(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, k)
}

proptest! {
    #[test]
    fn bilinear_is_linear_in_each_argument(
        (w, x1, x2, y) in (1usize..7).prop_flat_map(|k| (vec_k(k * k), vec_k(k), vec_k(k), vec_k(k))),
        c in -2.0..2.0f64,
    ) {
        let k = x1.len();
        let w = RelationFactors::full(k, w);
        let mixed: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + c * b).collect();
        let lhs = w.bilinear(&mixed, &y);
        let rhs = w.bilinear(&x1, &y) + c * w.bilinear(&x2, &y);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        let lhs = w.bilinear(&y, &mixed);
        let rhs = w.bilinear(&y, &x1) + c * w.bilinear(&y, &x2);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        prop_assert!((w.bilinear(&x1, &y) - naive_bilinear(&x1, &dense_w(&w), &y)).abs() < 1e-9);
    }
}
