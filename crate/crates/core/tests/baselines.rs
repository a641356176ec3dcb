mod common;

use common::{bits, independent_bpr, small_synthetic};
use consmrf::baselines::{train_cd, train_dmf};
use consmrf::consensus::train_consmrf;
use consmrf::dataset::split_dataset;
use consmrf::{Hyperparams, RelationWeightShape, SplitDataset};

const SHAPE: RelationWeightShape = RelationWeightShape::Diagonal;

fn splits(n: usize, r: usize, top_n: usize, seed: u64) -> SplitDataset {
    split_dataset(&small_synthetic(n, r, top_n, seed), 0.1, 0.1, seed).unwrap()
}

fn hp(rounds: usize, seed: u64) -> Hyperparams {
    Hyperparams {
        k: 4,
        max_rounds: rounds,
        epsilon: 0.0,
        seed,
        ..Hyperparams::default()
    }
}

#[test]
fn single_relation_cd_equals_unpenalised_consensus() {
    let sp = splits(40, 1, 4, 1);
    let h = Hyperparams {
        rho: 0.0,
        reset_to_consensus: false,
        ..hp(3, 1)
    };
    let cd = train_cd::<f64>(&sp, &h, SHAPE, 1).unwrap();
    let cons = train_consmrf::<f64>(&sp, &h, SHAPE, 1).unwrap();
    assert_eq!(bits(&cd.a), bits(&cons.params[0].a));
    assert_eq!(cd.w[0], cons.params[0].w);
    let losses = |rows: &[consmrf::curve::CurveRow]| rows.iter().map(|r| r.train_loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(losses(&cd.curve.rows), losses(&cons.curve.rows));
}

#[test]
fn dmf_without_auxiliaries_is_per_relation_bpr() {
    let sp = splits(40, 3, 3, 2);
    let h = Hyperparams { alpha: 0.0, ..hp(2, 2) };
    let dmf = train_dmf::<f64>(&sp, &h, SHAPE, 2).unwrap();
    let r = sp.n_relations();
    for t in sp.train.relation_ids() {
        let steps = 2 * r * sp.train.relation(t).len();
        let solo = independent_bpr(&sp.train, t, &h, SHAPE, steps);
        assert_eq!(bits(&dmf.a[t.index()]), bits(&solo.a));
        assert_eq!(dmf.w[t.index()][t.index()], solo.w);
    }
}

#[test]
fn single_relation_dmf_equals_cd() {
    let sp = splits(40, 1, 4, 3);
    let h = hp(3, 3);
    let dmf = train_dmf::<f64>(&sp, &h, SHAPE, 1).unwrap();
    let cd = train_cd::<f64>(&sp, &h, SHAPE, 1).unwrap();
    assert_eq!(bits(&dmf.a[0]), bits(&cd.a));
    assert_eq!(dmf.w[0][0], cd.w[0]);
}

#[test]
fn cd_training_loss_decreases() {
    let sp = splits(150, 3, 8, 4);
    let h = Hyperparams { k: 8, ..hp(20, 4) };
    let cd = train_cd::<f64>(&sp, &h, SHAPE, 1).unwrap();
    assert!(cd.curve.final_loss().unwrap() < cd.curve.initial_loss.unwrap());
}

#[test]
fn parameter_counts_follow_the_layout() {
    let sp = splits(30, 3, 2, 5);
    let h = hp(1, 5);
    let (n, k, r) = (sp.train.n_entities(), h.k, 3);
    let cd = train_cd::<f64>(&sp, &h, SHAPE, 1).unwrap();
    let dmf = train_dmf::<f64>(&sp, &h, SHAPE, 1).unwrap();
    let cons = train_consmrf::<f64>(&sp, &h, SHAPE, 1).unwrap();
    assert_eq!(cd.parameter_count(), n * k + r * k);
    assert_eq!(dmf.parameter_count(), r * n * k + r * r * k);
    assert_eq!(cons.parameter_count(), n * k + 2 * r * n * k + r * k);
}
