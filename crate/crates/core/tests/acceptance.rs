//! End-to-end acceptance checks. Runs every criterion, prints one
//! `PASS`/`FAIL` line each, and exits non-zero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{bits, fd_gradients, independent_bpr, random_params, rel_err};
use consmrf::baselines::train_dmf;
use consmrf::checkpoint::{write_checkpoint, AnyModel, Checkpoint};
use consmrf::consensus::{train_consmrf, update_z};
use consmrf::curve::{Clock, LearningCurve};
use consmrf::dataset::{split_dataset, split_dataset_with, SplitConfig, SplitStrategy};
use consmrf::evaluator::{evaluate_model, Scorer};
use consmrf::seed::{stream_rng, Stream};
use consmrf::synthetic::{generate, SyntheticConfig};
use consmrf::{EntityId, Hyperparams, Matrix, MultiRelationalDataset, RelationId, RelationWeightShape, SplitDataset};
use rand::seq::index::sample;

const SHAPE: RelationWeightShape = RelationWeightShape::Diagonal;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn gradient_oracle() -> Result<String, String> {
    let start = Instant::now();
    let shapes = [
        RelationWeightShape::Identity,
        RelationWeightShape::Diagonal,
        RelationWeightShape::Full,
    ];
    let mut rng = stream_rng(2024, Stream::Synthetic, 0);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let k = 1 + i % 8;
        let p = random_params(&mut rng, 12, k, shapes[i % 3]);
        let rows = sample(&mut rng, 12, 3).into_vec();
        let ids: Vec<EntityId> = rows.iter().map(|&x| EntityId(x as u32)).collect();
        let g = consmrf::objective::bpr_stochastic_gradients(&p, ids[0], ids[1], ids[2]);
        let fd = fd_gradients(&p, rows[0], rows[1], rows[2], 1e-5);
        for (a, n) in [(&g.g_as, &fd.g_as), (&g.g_ao, &fd.g_ao), (&g.g_ao_prime, &fd.g_ao_prime), (&g.g_w, &fd.g_w)] {
            for (x, y) in a.iter().zip(n) {
                worst = worst.max(rel_err(*x, *y));
            }
        }
    }
    ensure(worst < 1e-5, format!("max relative error {worst:.3e}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("max relative error {worst:.3e}"))
}

fn admm_algebra() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = stream_rng(7, Stream::Synthetic, 0);
    let mats: Vec<Matrix> = (0..5).map(|_| Matrix::gaussian(30, 6, 1.0, &mut rng)).collect();
    let z = update_z(&mats.iter().collect::<Vec<_>>());
    let mut worst = 0.0f64;
    for (i, x) in z.as_slice().iter().enumerate() {
        let mean = mats.iter().map(|m| m.as_slice()[i]).sum::<f64>() / mats.len() as f64;
        worst = worst.max((x - mean).abs());
    }
    ensure(worst <= 1e-15, format!("consensus differs from mean by {worst:.3e}"))?;

    let ds = generate(&SyntheticConfig {
        n_entities: 60,
        n_relations: 3,
        k: 4,
        top_n: 3,
        seed: 7,
    });
    let sp = split_dataset(&ds, 0.1, 0.1, 7).map_err(|e| e.to_string())?;
    let hp = Hyperparams {
        k: 4,
        max_rounds: 1,
        rho: 0.01,
        seed: 7,
        ..Hyperparams::default()
    };
    let m = train_consmrf::<f64>(&sp, &hp, SHAPE, 1).map_err(|e| e.to_string())?;
    for (p, v) in m.params.iter().zip(&m.consensus.v) {
        for ((v, a), z) in v.as_slice().iter().zip(p.a.as_slice()).zip(m.consensus.z.as_slice()) {
            ensure(*v == hp.rho * (a - z), "dual after round 1 differs from rho (A_r - Z)")?;
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("mean error {worst:.1e}; duals exact"))
}

fn decoupling_oracle() -> Result<String, String> {
    let start = Instant::now();
    let ds = generate(&SyntheticConfig {
        n_entities: 50,
        n_relations: 4,
        k: 4,
        top_n: 1,
        seed: 3,
    });
    // Every triple trains; nothing is held out.
    let empty = || MultiRelationalDataset::from_triples(ds.entities().clone(), ds.relations().clone(), []);
    let sp = SplitDataset::from_parts(ds.clone(), empty(), empty());
    let rounds = 5;
    let hp = Hyperparams {
        k: 6,
        rho: 0.0,
        reset_to_consensus: false,
        epsilon: 0.0,
        max_rounds: rounds,
        seed: 3,
        ..Hyperparams::default()
    };
    let m = train_consmrf::<f64>(&sp, &hp, SHAPE, 2).map_err(|e| e.to_string())?;
    for r in sp.train.relation_ids() {
        let solo = independent_bpr(&sp.train, r, &hp, SHAPE, rounds * sp.train.relation(r).len());
        let p = &m.params[r.index()];
        ensure(bits(&p.a) == bits(&solo.a), format!("relation {r}: entity factors differ"))?;
        let w_bits = |w: &[f64]| w.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(w_bits(p.w.params()) == w_bits(solo.w.params()), format!("relation {r}: relation factors differ"))?;
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("{} relations, {} triples, {rounds} rounds, bit-identical", sp.n_relations(), sp.train.n_triples()))
}

fn recovery_splits(seed: u64) -> SplitDataset {
    let ds = generate(&SyntheticConfig::default());
    split_dataset(&ds, 0.1, 0.1, seed).expect("split")
}

fn synthetic_recovery() -> Result<String, String> {
    let start = Instant::now();
    let sp = recovery_splits(0);
    let hp = Hyperparams {
        k: 8,
        max_rounds: 50,
        ..Hyperparams::default()
    };
    let trained = train_consmrf::<f64>(&sp, &hp, SHAPE, 1).map_err(|e| e.to_string())?;
    let auc = evaluate_model(&trained, &sp, hp.eval_negatives, hp.top_k, hp.seed)
        .map_err(|e| e.to_string())?
        .auc;
    let random = train_consmrf::<f64>(&sp, &Hyperparams { max_rounds: 0, ..hp.clone() }, SHAPE, 1).map_err(|e| e.to_string())?;
    let random_auc = evaluate_model(&random, &sp, hp.eval_negatives, hp.top_k, hp.seed)
        .map_err(|e| e.to_string())?
        .auc;
    let detail = format!(
        "{} triples, {} rounds, test AUC {auc:.4}, random AUC {random_auc:.4}",
        sp.all().n_triples(),
        trained.rounds
    );
    ensure(auc >= 0.85, detail.clone())?;
    ensure((random_auc - 0.5).abs() <= 0.05, detail.clone())?;
    within(start.elapsed(), 300.0)?;
    Ok(detail)
}

fn consensus_tightening() -> Result<String, String> {
    let start = Instant::now();
    let mut wins = 0;
    let mut gaps = Vec::new();
    for seed in 0..10 {
        let sp = recovery_splits(seed);
        let gap = |rho: f64| -> Result<f64, String> {
            let hp = Hyperparams {
                k: 8,
                rho,
                max_rounds: 50,
                seed,
                ..Hyperparams::default()
            };
            Ok(train_consmrf::<f64>(&sp, &hp, SHAPE, 1).map_err(|e| e.to_string())?.mean_consensus_gap())
        };
        let (tight, loose) = (gap(0.005)?, gap(0.00005)?);
        wins += usize::from(tight < loose);
        gaps.push(format!("{tight:.1}/{loose:.1}"));
    }
    let detail = format!("{wins}/10 seeds tighter (gap at 0.005/0.00005: {})", gaps.join(" "));
    ensure(wins >= 9, detail.clone())?;
    within(start.elapsed(), 900.0)?;
    Ok(detail)
}

fn per_round_seconds(curve: &LearningCurve) -> f64 {
    let rows = &curve.rows;
    (rows[rows.len() - 1].seconds - rows[0].seconds) / (rows.len() - 1) as f64
}

fn relation_scaling() -> Result<String, String> {
    let start = Instant::now();
    let mut cons = Vec::new();
    let mut dmf = Vec::new();
    for r in [4usize, 16, 64] {
        let ds = generate(&SyntheticConfig {
            n_entities: 1000,
            n_relations: r,
            k: 8,
            top_n: 64 / r,
            seed: 1,
        });
        let sp = split_dataset_with(
            &ds,
            &SplitConfig {
                seed: 1,
                strategy: SplitStrategy::Stratified,
                ..SplitConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let hp = Hyperparams {
            k: 8,
            epsilon: 0.0,
            seed: 1,
            ..Hyperparams::default()
        };
        let c = train_consmrf::<f64>(&sp, &Hyperparams { max_rounds: 6, ..hp.clone() }, SHAPE, 1).map_err(|e| e.to_string())?;
        let d = train_dmf::<f64>(&sp, &Hyperparams { max_rounds: 3, ..hp.clone() }, SHAPE, 1).map_err(|e| e.to_string())?;
        cons.push(per_round_seconds(&c.curve));
        dmf.push(per_round_seconds(&d.curve));
    }
    let max = cons.iter().cloned().fold(f64::MIN, f64::max);
    let min = cons.iter().cloned().fold(f64::MAX, f64::min);
    let cons_ratio = max / min;
    let dmf_ratio = dmf[2] / dmf[0];
    let detail = format!(
        "ConsMRF s/round {:.4}/{:.4}/{:.4} (spread {cons_ratio:.2}x), DMF s/round {:.4}/{:.4}/{:.4} (R=64 vs R=4 {dmf_ratio:.1}x)",
        cons[0], cons[1], cons[2], dmf[0], dmf[1], dmf[2]
    );
    ensure(cons_ratio < 2.0, detail.clone())?;
    ensure(dmf_ratio >= 8.0, detail.clone())?;
    within(start.elapsed(), 600.0)?;
    Ok(detail)
}

fn parallel_speedup() -> Result<String, String> {
    let start = Instant::now();
    let ds = generate(&SyntheticConfig {
        n_relations: 16,
        ..SyntheticConfig::default()
    });
    let sp = split_dataset(&ds, 0.1, 0.1, 0).map_err(|e| e.to_string())?;
    let hp = Hyperparams {
        k: 8,
        epsilon: 0.0,
        max_rounds: 3,
        ..Hyperparams::default()
    };
    let time = |workers: usize| -> Result<f64, String> {
        let t0 = Instant::now();
        train_consmrf::<f64>(&sp, &hp, SHAPE, workers).map_err(|e| e.to_string())?;
        Ok(t0.elapsed().as_secs_f64())
    };
    let one = time(1)?;
    let four = time(4)?;
    let speedup = one / four;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let detail = format!("1 worker {one:.2} s, 4 workers {four:.2} s, speedup {speedup:.2}x on {cores} available core(s)");
    ensure(speedup >= 2.0, detail.clone())?;
    within(start.elapsed(), 600.0)?;
    Ok(detail)
}

/// Fixed score table over five entities.
struct Table;

impl Scorer<f64> for Table {
    fn n_relations(&self) -> usize {
        1
    }

    fn score_candidates(&self, _r: RelationId, s: EntityId, objects: &[EntityId]) -> Vec<f64> {
        const SCORES: [[f64; 5]; 5] = [
            [0.9, 0.0, 0.8, 0.1, 0.5],
            [0.0, 0.5, 0.2, 0.7, 0.5],
            [0.0; 5],
            [0.0; 5],
            [0.0; 5],
        ];
        objects.iter().map(|o| SCORES[s.index()][o.index()]).collect()
    }
}

fn evaluator_oracle() -> Result<String, String> {
    let start = Instant::now();
    // Entities a..e get ids 0..4 in order of appearance.
    let train = MultiRelationalDataset::from_named([("a", "r", "b"), ("b", "r", "a"), ("c", "r", "d"), ("d", "r", "e")]);
    let ents = train.entities().clone();
    let rels = train.relations().clone();
    let held_out = |pairs: &[(u32, u32)]| {
        MultiRelationalDataset::from_triples(
            ents.clone(),
            rels.clone(),
            pairs.iter().map(|&(s, o)| consmrf::Triple {
                subject: EntityId(s),
                object: EntityId(o),
                relation: RelationId(0),
                value: 1.0,
            }),
        )
    };
    let sp = SplitDataset::from_parts(train.clone(), held_out(&[]), held_out(&[(0, 2), (0, 3), (1, 4)]));
    let rep = evaluate_model(&Table, &sp, 100, 5, 0).map_err(|e| e.to_string())?;

    // Subject a: positives c (0.8), d (0.1); negatives a (0.9), e (0.5).
    //   AUC = (1 + 0) / 4; all four candidates fit in the top 5.
    // Subject b: positive e (0.5); negatives b (0.5), c (0.2), d (0.7).
    //   AUC = (0.5 + 1 + 0) / 3.
    let units = [(0.25, 2.0 / 5.0, 1.0), (0.5, 1.0 / 5.0, 1.0)];
    ensure(rep.units.len() == 2, format!("{} units", rep.units.len()))?;
    for (u, (auc, p, r)) in rep.units.iter().zip(units) {
        let m = u.metrics;
        ensure(
            m.auc == auc && m.precision_at_k == p && m.recall_at_k == r,
            format!("unit {}: {:?}", u.subject, m),
        )?;
    }
    let mean = |i: usize| {
        let v: Vec<f64> = units.iter().map(|u| [u.0, u.1, u.2][i]).collect();
        (0.0 + v[0] + v[1]) / 2.0
    };
    ensure(
        rep.auc == mean(0) && rep.precision_at_k == mean(1) && rep.recall_at_k == mean(2),
        format!("macro {} {} {}", rep.auc, rep.precision_at_k, rep.recall_at_k),
    )?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("AUC {} P@5 {} R@5 {}", rep.auc, rep.precision_at_k, rep.recall_at_k))
}

fn run_artifacts() -> Result<Vec<Vec<u8>>, String> {
    let ds = generate(&SyntheticConfig {
        n_entities: 200,
        n_relations: 4,
        k: 4,
        top_n: 5,
        seed: 5,
    });
    let sp = split_dataset(&ds, 0.1, 0.1, 5).map_err(|e| e.to_string())?;
    let hp = Hyperparams {
        k: 6,
        max_rounds: 10,
        valid_every: 2,
        seed: 5,
        ..Hyperparams::default()
    };
    let m = train_consmrf::<f64>(&sp, &hp, SHAPE, 1).map_err(|e| e.to_string())?;
    let report = evaluate_model(&m, &sp, hp.eval_negatives, hp.top_k, hp.seed).map_err(|e| e.to_string())?;
    let mut curve = Vec::new();
    m.curve.write_csv(&mut curve, Clock::Off).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(|e| e.to_string())?;
    let ck = Checkpoint {
        hp,
        shape: SHAPE,
        n_entities: sp.train.n_entities(),
        n_relations: sp.n_relations(),
        model: AnyModel::ConsMrf(m),
    };
    let mut bin = Vec::new();
    write_checkpoint(&ck, &mut bin).map_err(|e| e.to_string())?;
    Ok(vec![curve, csv, bin])
}

fn determinism() -> Result<String, String> {
    let a = run_artifacts()?;
    let b = run_artifacts()?;
    for (name, (x, y)) in ["learning curve", "report", "checkpoint"].iter().zip(a.iter().zip(&b)) {
        ensure(x == y, format!("{name} differs between runs"))?;
    }
    Ok(format!("curve {} B, report {} B, checkpoint {} B identical", a[0].len(), a[1].len(), a[2].len()))
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("gradient oracle", gradient_oracle),
        ("ADMM algebra", admm_algebra),
        ("decoupling oracle", decoupling_oracle),
        ("synthetic recovery", synthetic_recovery),
        ("consensus tightening", consensus_tightening),
        ("relation-count scaling", relation_scaling),
        ("parallel speedup", parallel_speedup),
        ("evaluator oracle", evaluator_oracle),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
