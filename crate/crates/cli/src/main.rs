mod args;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use consmrf::baselines::{train_cd, train_dmf};
use consmrf::checkpoint::{load_checkpoint, save_checkpoint, AnyModel, Checkpoint};
use consmrf::consensus::train_consmrf;
use consmrf::curve::{write_timing_csv, Clock};
use consmrf::dataset::{parse_triples, read_cache, split_dataset_with, write_cache, write_stats_csv, TripleFormat, CACHE_MAGIC};
use consmrf::evaluator::{evaluate_model, make_folds_with, write_fold_summary, EvalReport};
use consmrf::synthetic::generate;
use consmrf::{Error, Hyperparams, MultiRelationalDataset, RelationWeightShape, SplitDataset};
use serde_json::json;

use crate::args::{BenchArgs, Cli, Command, DataArgs, EvaluateArgs, IngestArgs, ModelArg, SweepArgs, TrainArgs};

/// Exit statuses, one per failure class.
mod exit {
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const MISSING_DATA: u8 = 3;
    pub const PARSE: u8 = 4;
    pub const DIVERGENCE: u8 = 5;
    pub const SATURATION: u8 = 6;
    pub const SPLIT_REJECTED: u8 = 7;
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Usage(String),
    Io(PathBuf, std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io(..) => exit::MISSING_DATA,
            CliError::Core(e) => match e {
                Error::Io { .. } | Error::EmptyDataset => exit::MISSING_DATA,
                Error::Parse { .. } | Error::Cache(_) | Error::Checkpoint(_) => exit::PARSE,
                Error::Divergence { .. } => exit::DIVERGENCE,
                Error::Saturated { .. } => exit::SATURATION,
                Error::SplitRejected { .. } => exit::SPLIT_REJECTED,
                Error::InvalidArgument(_) => exit::USAGE,
                _ => exit::OTHER,
            },
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::SweepRho(a) => sweep_rho(a),
        Command::BenchCores(a) => bench_cores(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_dataset(args: &DataArgs) -> CliResult<MultiRelationalDataset> {
    if args.synthetic {
        let cfg = args.synthetic_config();
        if cfg.n_entities < 2 || cfg.n_relations == 0 || cfg.k == 0 || cfg.top_n == 0 || cfg.top_n >= cfg.n_entities {
            return Err(CliError::Usage(format!("invalid synthetic dataset size {cfg:?}")));
        }
        return Ok(generate(&cfg));
    }
    let path = args.data.as_ref().expect("clap requires --data without --synthetic");
    let mut first = String::new();
    BufReader::new(File::open(path).map_err(|e| CliError::Io(path.clone(), e))?)
        .read_line(&mut first)
        .map_err(|e| CliError::Io(path.clone(), e))?;
    if first.trim_end() == CACHE_MAGIC {
        Ok(read_cache(path)?)
    } else {
        Ok(parse_triples(path, TripleFormat::Tsv)?)
    }
}

/// Run directory that refuses to overwrite the input dataset.
struct RunDir {
    root: PathBuf,
    input: Option<PathBuf>,
}

impl RunDir {
    fn create(root: &Path, data: &DataArgs) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(root.to_owned(), e))?;
        Ok(Self {
            root: root.to_owned(),
            input: data.data.as_ref().and_then(|p| p.canonicalize().ok()),
        })
    }

    fn path(&self, name: &str) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        if let (Some(input), Ok(existing)) = (&self.input, path.canonicalize()) {
            if &existing == input {
                return Err(CliError::Usage(format!("refusing to overwrite input file {}", path.display())));
            }
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_owned(), e))?;
        }
        Ok(path)
    }

    fn create_file(&self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.path(name)?;
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::Io(path, e))
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> CliResult) -> CliResult {
        let mut out = self.create_file(name)?;
        f(&mut out)?;
        out.flush().map_err(|e| CliError::Io(self.root.join(name), e))
    }

    fn write_config(&self, command: &str, fields: serde_json::Value) -> CliResult {
        let mut config = json!({
            "tool": "consmrf",
            "version": env!("CARGO_PKG_VERSION"),
            "checkpoint_format": consmrf::checkpoint::VERSION,
            "command": command,
            "argv": std::env::args().collect::<Vec<_>>(),
        });
        if let (Some(map), serde_json::Value::Object(extra)) = (config.as_object_mut(), fields) {
            map.extend(extra);
        }
        self.write_with("config.json", |out| {
            serde_json::to_writer_pretty(&mut *out, &config).map_err(|e| CliError::Io(self.root.join("config.json"), e.into()))?;
            writeln!(out).map_err(|e| CliError::Io(self.root.join("config.json"), e))
        })
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(path.to_owned(), e)
}

fn ingest(a: &IngestArgs) -> CliResult {
    let ds = load_dataset(&a.data)?;
    let run = RunDir::create(&a.out.out, &a.data)?;
    run.write_config("ingest", json!({ "data": a.data }))?;
    let cache = run.path("dataset.cache")?;
    write_cache(&ds, &cache)?;
    run.write_with("stats.csv", |out| Ok(write_stats_csv(&ds, out)?))?;
    println!(
        "{} entities, {} relations, {} triples -> {}",
        ds.n_entities(),
        ds.n_relations(),
        ds.n_triples(),
        cache.display()
    );
    Ok(())
}

fn train_model(
    sp: &SplitDataset,
    hp: &Hyperparams,
    shape: RelationWeightShape,
    model: ModelArg,
    workers: usize,
) -> consmrf::Result<AnyModel<f64>> {
    Ok(match model {
        ModelArg::Consmrf => AnyModel::ConsMrf(train_consmrf(sp, hp, shape, workers)?),
        ModelArg::Cd => AnyModel::Cd(train_cd(sp, hp, shape, workers)?),
        ModelArg::Dmf => AnyModel::Dmf(train_dmf(sp, hp, shape, workers)?),
    })
}

fn check_workers(workers: usize) -> CliResult {
    if workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    Ok(())
}

fn resolved(a: &TrainArgs, hp: &Hyperparams, workers: serde_json::Value) -> serde_json::Value {
    let split = a.split.config(hp.seed);
    json!({
        "seed": hp.seed,
        "model": a.model.model,
        "shape": a.model.shape,
        "clock": a.model.clock,
        "n_workers": workers,
        "data": a.data,
        "split": {
            "test_frac": split.test_frac,
            "valid_frac": split.valid_frac,
            "seed": split.seed,
            "stratified": a.split.stratified,
        },
        "hyperparams": hp,
    })
}

fn prepare(a: &TrainArgs) -> CliResult<(Hyperparams, SplitDataset)> {
    check_workers(a.workers)?;
    let hp = a.hyper.hyperparams();
    hp.validate().map_err(CliError::Usage)?;
    let ds = load_dataset(&a.data)?;
    let sp = split_dataset_with(&ds, &a.split.config(hp.seed))?;
    Ok((hp, sp))
}

fn write_training_outputs(run: &RunDir, prefix: &str, model: &AnyModel<f64>, clock: Clock) -> CliResult {
    run.write_with(&format!("{prefix}learning_curve.csv"), |out| Ok(model.curve().write_csv(out, clock)?))?;
    run.write_with(&format!("{prefix}timing.csv"), |out| Ok(write_timing_csv(model.timings(), out)?))
}

fn train(a: &TrainArgs) -> CliResult {
    let (hp, sp) = prepare(a)?;
    let run = RunDir::create(&a.out.out, &a.data)?;
    run.write_config("train", resolved(a, &hp, json!(a.workers)))?;
    let shape = a.model.shape.into();
    let model = train_model(&sp, &hp, shape, a.model.model, a.workers)?;
    write_training_outputs(&run, "", &model, a.model.clock.into())?;
    let ck = Checkpoint {
        hp,
        shape,
        n_entities: sp.train.n_entities(),
        n_relations: sp.n_relations(),
        model,
    };
    save_checkpoint(&ck, run.path("checkpoint.bin")?)?;
    let curve = ck.model.curve();
    println!(
        "{} rounds ({}), final training loss {}",
        ck.model.rounds(),
        if converged(&ck.model) { "converged" } else { "round limit" },
        curve.final_loss().map_or("n/a".into(), |l| format!("{l:.6}"))
    );
    Ok(())
}

fn converged(m: &AnyModel<f64>) -> bool {
    match m {
        AnyModel::ConsMrf(m) => m.converged,
        AnyModel::Cd(m) => m.converged,
        AnyModel::Dmf(m) => m.converged,
    }
}

fn write_report(run: &RunDir, name: &str, report: &EvalReport) -> CliResult {
    run.write_with(name, |out| Ok(report.write_csv(out)?))
}

fn evaluate(a: &EvaluateArgs) -> CliResult {
    let t = &a.train;
    let (hp, sp) = prepare(t)?;
    let run = RunDir::create(&t.out.out, &t.data)?;
    let mut config = resolved(t, &hp, json!(t.workers));
    config["folds"] = json!(a.folds);
    config["fold_mode"] = json!(a.fold_mode);
    config["checkpoint"] = json!(a.checkpoint);
    config["eval_negatives"] = json!(hp.eval_negatives);
    run.write_config("evaluate", config)?;

    if let Some(path) = &a.checkpoint {
        let ck = load_checkpoint::<f64>(path)?;
        if ck.n_entities != sp.train.n_entities() || ck.n_relations != sp.n_relations() {
            return Err(CliError::Usage(format!(
                "checkpoint covers {} entities and {} relations, dataset has {} and {}",
                ck.n_entities,
                ck.n_relations,
                sp.train.n_entities(),
                sp.n_relations()
            )));
        }
        let report = evaluate_model(&ck.model, &sp, hp.eval_negatives, hp.top_k, hp.seed)?;
        write_report(&run, "report.csv", &report)?;
        println!("{report}");
        return Ok(());
    }

    let shape = t.model.shape.into();
    let clock = t.model.clock.into();
    if a.folds <= 1 {
        let model = train_model(&sp, &hp, shape, t.model.model, t.workers)?;
        write_training_outputs(&run, "", &model, clock)?;
        let report = evaluate_model(&model, &sp, hp.eval_negatives, hp.top_k, hp.seed)?;
        write_report(&run, "report.csv", &report)?;
        println!("{report}");
        return Ok(());
    }

    let ds = sp.all();
    let split = t.split.config(hp.seed);
    let folds = make_folds_with(ds, a.folds, split.seed, a.fold_mode.into(), split.test_frac, split.valid_frac)?;
    let mut reports = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        let model = train_model(fold, &hp, shape, t.model.model, t.workers)?;
        let prefix = format!("fold_{i}/");
        write_training_outputs(&run, &prefix, &model, clock)?;
        let report = evaluate_model(&model, fold, hp.eval_negatives, hp.top_k, hp.seed)?;
        write_report(&run, &format!("{prefix}report.csv"), &report)?;
        println!("fold {i}: AUC {:.4}", report.auc);
        reports.push(report);
    }
    run.write_with("folds_summary.csv", |out| Ok(write_fold_summary(&reports, out)?))?;
    let auc = consmrf::evaluator::confidence_99(&reports.iter().map(|r| r.auc).collect::<Vec<_>>());
    println!("AUC {:.4} +/- {:.4} (99% CI over {} folds)", auc.mean, auc.half_width, reports.len());
    Ok(())
}

fn sweep_rho(a: &SweepArgs) -> CliResult {
    let t = &a.train;
    if a.values.is_empty() {
        return Err(CliError::Usage("--values needs at least one penalty".into()));
    }
    let (hp, sp) = prepare(t)?;
    let run = RunDir::create(&t.out.out, &t.data)?;
    let mut config = resolved(t, &hp, json!(t.workers));
    config["model"] = json!(ModelArg::Consmrf);
    config["rho_values"] = json!(a.values);
    run.write_config("sweep-rho", config)?;

    let shape = t.model.shape.into();
    let path = run.path("sweep_rho.csv")?;
    let mut out = run.create_file("sweep_rho.csv")?;
    let err = io_err(&path);
    writeln!(out, "rho,auc,precision_at_k,recall_at_k,final_loss,rounds,mean_consensus_gap,diverged").map_err(&err)?;
    for &rho in &a.values {
        let hp = Hyperparams { rho, ..hp.clone() };
        hp.validate().map_err(CliError::Usage)?;
        match train_consmrf::<f64>(&sp, &hp, shape, t.workers) {
            Ok(m) => {
                let report = evaluate_model(&m, &sp, hp.eval_negatives, hp.top_k, hp.seed)?;
                writeln!(
                    out,
                    "{rho},{:.10},{:.10},{:.10},{},{},{:.10},false",
                    report.auc,
                    report.precision_at_k,
                    report.recall_at_k,
                    m.curve.final_loss().map_or(String::new(), |l| format!("{l:.10}")),
                    m.rounds,
                    m.mean_consensus_gap()
                )
                .map_err(&err)?;
                println!("rho {rho}: AUC {:.4}", report.auc);
            }
            Err(Error::Divergence { round, .. }) => {
                writeln!(out, "{rho},,,,,{round},,true").map_err(&err)?;
                println!("rho {rho}: diverged in round {round}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.flush().map_err(&err)
}

fn bench_cores(a: &BenchArgs) -> CliResult {
    if a.workers.is_empty() {
        return Err(CliError::Usage("--workers needs at least one count".into()));
    }
    for &w in &a.workers {
        check_workers(w)?;
    }
    if a.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let hp = a.hyper.hyperparams();
    hp.validate().map_err(CliError::Usage)?;
    let ds = load_dataset(&a.data)?;
    let split = a.split.config(hp.seed);
    let sp = split_dataset_with(&ds, &split)?;
    let run = RunDir::create(&a.out.out, &a.data)?;
    run.write_config(
        "bench-cores",
        json!({
            "seed": hp.seed,
            "model": a.model.model,
            "shape": a.model.shape,
            "n_workers": a.workers,
            "repeats": a.repeats,
            "data": a.data,
            "split": { "test_frac": split.test_frac, "valid_frac": split.valid_frac, "seed": split.seed, "stratified": a.split.stratified },
            "hyperparams": hp,
        }),
    )?;

    let shape = a.model.shape.into();
    let path = run.path("bench_cores.csv")?;
    let mut out = run.create_file("bench_cores.csv")?;
    let err = io_err(&path);
    writeln!(out, "n_workers,wall_seconds").map_err(&err)?;
    // One untimed warm-up run; repeats then sweep the worker counts forwards
    // and backwards in turn so that drift affects every count alike.
    train_model(&sp, &hp, shape, a.model.model, a.workers[0])?;
    let mut best = vec![f64::INFINITY; a.workers.len()];
    for rep in 0..a.repeats {
        let mut order: Vec<usize> = (0..a.workers.len()).collect();
        if rep % 2 == 1 {
            order.reverse();
        }
        for i in order {
            let t0 = Instant::now();
            train_model(&sp, &hp, shape, a.model.model, a.workers[i])?;
            best[i] = best[i].min(t0.elapsed().as_secs_f64());
        }
    }
    for (&w, secs) in a.workers.iter().zip(best) {
        writeln!(out, "{w},{secs:.6}").map_err(&err)?;
        println!("{w} worker(s): {secs:.3} s");
    }
    out.flush().map_err(&err)
}
