use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use consmrf::curve::Clock;
use consmrf::dataset::{SplitConfig, SplitStrategy};
use consmrf::evaluator::FoldMode;
use consmrf::synthetic::SyntheticConfig;
use consmrf::{Hyperparams, RelationWeightShape};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "consmrf", version, about = "Consensus multi-relational factorization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a triple file into a dataset cache and write per-relation counts.
    Ingest(IngestArgs),
    /// Train a model and write its checkpoint, learning curve and timings.
    Train(TrainArgs),
    /// Score a checkpoint, or train and score over one or more folds.
    Evaluate(EvaluateArgs),
    /// Train and evaluate ConsMRF once per penalty value.
    SweepRho(SweepArgs),
    /// Time training under several worker counts.
    BenchCores(BenchArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Tab-separated triple file or dataset cache.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate the planted low-rank dataset in-process instead of reading one.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 1000)]
    pub entities: usize,
    #[arg(long, default_value_t = 10)]
    pub relations: usize,
    /// Rank of the planted factors.
    #[arg(long, default_value_t = 8)]
    pub planted_rank: usize,
    /// Positives per subject per relation.
    #[arg(long, default_value_t = 20)]
    pub top_n: usize,
    #[arg(long, default_value_t = 0)]
    pub synthetic_seed: u64,
}

impl DataArgs {
    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_entities: self.entities,
            n_relations: self.relations,
            k: self.planted_rank,
            top_n: self.top_n,
            seed: self.synthetic_seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0.1)]
    pub test_frac: f64,
    /// Fraction of the triples left after the test draw.
    #[arg(long, default_value_t = 0.1)]
    pub valid_frac: f64,
    /// Defaults to `--seed`.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Apply the fractions per relation.
    #[arg(long)]
    pub stratified: bool,
}

impl SplitArgs {
    pub fn config(&self, seed: u64) -> SplitConfig {
        SplitConfig {
            test_frac: self.test_frac,
            valid_frac: self.valid_frac,
            seed: self.split_seed.unwrap_or(seed),
            strategy: if self.stratified {
                SplitStrategy::Stratified
            } else {
                SplitStrategy::Global
            },
        }
    }
}

/// One flag per training hyperparameter.
#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.0005)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma_init: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// SGD samples per relation per round; defaults to the relation size.
    #[arg(long)]
    pub inner_budget: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 100)]
    pub eval_negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long, default_value_t = 0.25)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub reset_to_consensus: bool,
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub persist_adagrad: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub adagrad_delta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub loss_samples: usize,
    /// DMF samples per target per round as a multiple of the target size; defaults to the relation count.
    #[arg(long)]
    pub dmf_budget_factor: Option<usize>,
    /// Record validation AUC every this many rounds; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub valid_every: usize,
}

impl HyperArgs {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            k: self.k,
            lambda: self.lambda,
            eta: self.eta,
            rho: self.rho,
            sigma_init: self.sigma_init,
            epsilon: self.epsilon,
            inner_budget: self.inner_budget,
            max_rounds: self.max_rounds,
            eval_negatives: self.eval_negatives,
            top_k: self.top_k,
            alpha: self.alpha,
            seed: self.seed,
            reset_to_consensus: self.reset_to_consensus,
            persist_adagrad: self.persist_adagrad,
            adagrad_delta: self.adagrad_delta,
            loss_samples: self.loss_samples,
            dmf_budget_factor: self.dmf_budget_factor,
            valid_every: self.valid_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Consmrf,
    Cd,
    Dmf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeArg {
    Identity,
    Diagonal,
    Full,
}

impl From<ShapeArg> for RelationWeightShape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Identity => RelationWeightShape::Identity,
            ShapeArg::Diagonal => RelationWeightShape::Diagonal,
            ShapeArg::Full => RelationWeightShape::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockArg {
    /// Fill the `seconds` column of the learning curve.
    Wall,
    /// Leave `seconds` empty so repeated runs produce identical files.
    Off,
}

impl From<ClockArg> for Clock {
    fn from(c: ClockArg) -> Self {
        match c {
            ClockArg::Wall => Clock::Wall,
            ClockArg::Off => Clock::Off,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldModeArg {
    Resample,
    Disjoint,
}

impl From<FoldModeArg> for FoldMode {
    fn from(m: FoldModeArg) -> Self {
        match m {
            FoldModeArg::Resample => FoldMode::Resample,
            FoldModeArg::Disjoint => FoldMode::Disjoint,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Run directory; created if missing.
    #[arg(long, env = "CONSMRF_OUT", default_value = "consmrf-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Consmrf)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = ShapeArg::Diagonal)]
    pub shape: ShapeArg,
    #[arg(long, value_enum, default_value_t = ClockArg::Wall)]
    pub clock: ClockArg,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Score this checkpoint on the test split instead of training.
    #[arg(long, conflicts_with = "folds")]
    pub checkpoint: Option<PathBuf>,
    /// Number of folds; 1 trains and scores a single split.
    #[arg(long, default_value_t = 1)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = FoldModeArg::Resample)]
    pub fold_mode: FoldModeArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Comma-separated penalty values.
    #[arg(long, value_delimiter = ',', default_value = "0.00005,0.0005,0.005")]
    pub values: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub workers: Vec<usize>,
    /// Timed runs per worker count after one warm-up, sweeping the counts in
    /// alternating order; the fastest run per count is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[command(flatten)]
    pub out: OutArgs,
}
