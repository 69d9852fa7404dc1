//! `lli`: train, complete, evaluate and query latent-scaling tensor models.

mod check;
mod model;
mod tensor_io;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lli_core::completion::Provenance;
use lli_core::data::{self, parse_categories, DatasetKind, RatingRecord, RatingsDataset, Vocabulary};
use lli_core::eval::{self, BaselineKind, EvalConfig, FeatureMask, Mode};
use lli_core::recsys;
use lli_core::{tca, CompletedTensor, SolverConfig, SparseTensor};

use crate::model::{Catalog, ModelDocument};

/// `println!` that reports write failures (such as a closed pipe) instead
/// of panicking.
macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(io::stdout().lock(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(name = "lli", version, about = "Unit-consistent sparse tensor completion")]
struct Cli {
    /// Worker threads for the solver (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Balance a tensor and fill its unobserved cells.
    Complete(CompleteArgs),
    /// Cross-validate the completion as a rating predictor.
    Evaluate(EvaluateArgs),
    /// Rank products for one user.
    Recommend(RecommendArgs),
    /// Run the seeded property suites.
    Check(CheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetArg {
    Movielens1m,
    Movielens10m,
    Jester2,
    /// Text tensor file: `shape d1,d2,...` then `i1,i2,...,value` lines.
    Tensor,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    #[value(name = "2d")]
    TwoD,
    #[value(name = "3d")]
    ThreeD,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MaskArg {
    /// Maximise over the held-out user's own feature indices.
    Test,
    /// Maximise over the whole feature dimension.
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum BaselineArg {
    GlobalMean,
    ItemMean,
    UserMean,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_enum)]
    dataset: Option<DatasetArg>,
    /// Ratings file (or tensor file for `--dataset tensor`).
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// MovieLens users file, needed for 3-D mode.
    #[arg(long)]
    users: Option<PathBuf>,
    /// Directory holding `ml-1m/`, `ml-10M100K/` and `jester2/`.
    #[arg(long, env = "LLI_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "2d")]
    mode: ModeArg,
    /// Feature categories for 3-D mode: any of age, gender, occup.
    #[arg(long, default_value = "age,gender,occup")]
    features: String,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-10)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            max_sweeps: self.max_sweeps,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct CompleteArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Subtensor order (default: D - 1).
    #[arg(long)]
    k: Option<usize>,
    /// Output path: every completed cell for tensor input, the model
    /// document for rating datasets. Tensor output goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the model document here.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clamp predictions into the native rating range.
    #[arg(long)]
    clamp: bool,
    #[arg(long, value_enum, default_value = "test")]
    feature_mask: MaskArg,
    /// Record per-fold solver wall time in the report.
    #[arg(long)]
    timings: bool,
    /// Write the first fold's residual trace as CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Score a mean predictor instead of the completion.
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    /// Report path (JSON); printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    /// Model document written by `complete`; otherwise trains from the data flags.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Raw user id (row index for tensor input).
    #[arg(long)]
    user: u64,
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Leave out products the user has rated.
    #[arg(long)]
    exclude_observed: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instances per suite.
    #[arg(long, default_value_t = 30)]
    cases: usize,
    /// Stopping tolerance for the constraint-satisfaction suite.
    #[arg(long, default_value_t = 1e-10)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    /// Perturb one suite to confirm the harness reports it.
    #[arg(long, value_enum)]
    inject_fault: Option<check::Property>,
}

fn dataset_kind(arg: DatasetArg) -> Option<DatasetKind> {
    match arg {
        DatasetArg::Movielens1m => Some(DatasetKind::MovieLens1M),
        DatasetArg::Movielens10m => Some(DatasetKind::MovieLens10M),
        DatasetArg::Jester2 => Some(DatasetKind::Jester2),
        DatasetArg::Tensor => None,
    }
}

fn read_tensor_file(path: &Path) -> Result<SparseTensor> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    tensor_io::read_tensor(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// A 2-D tensor file seen as a ratings table: rows are users, columns
/// products, ids equal to indices.
fn tensor_as_dataset(t: &SparseTensor) -> Result<RatingsDataset> {
    if t.ndim() != 2 {
        bail!("evaluating a tensor file needs a 2-D tensor, got {}-D", t.ndim());
    }
    let records = t
        .iter()
        .map(|(i, v)| RatingRecord {
            user_id: i[0] as u64,
            product_id: i[1] as u64,
            rating: v,
            timestamp: None,
        })
        .collect();
    let lo = t.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(RatingsDataset::from_records(
        "tensor",
        records,
        (0..t.shape()[0] as u64).collect::<Vocabulary>(),
        (0..t.shape()[1] as u64).collect::<Vocabulary>(),
        0.0,
        (lo, hi),
    ))
}

enum Input {
    Tensor(SparseTensor),
    Ratings(RatingsDataset),
}

impl DataArgs {
    fn load(&self, default: DatasetArg) -> Result<Input> {
        let arg = self.dataset.unwrap_or(default);
        let Some(kind) = dataset_kind(arg) else {
            let path = self.ratings.as_ref().context("--dataset tensor needs --ratings PATH")?;
            if self.mode == ModeArg::ThreeD {
                bail!("features unavailable for tensor input");
            }
            return Ok(Input::Tensor(read_tensor_file(path)?));
        };
        if self.mode == ModeArg::ThreeD && !kind.has_features() {
            bail!(
                "features unavailable for {}: 3-D mode needs MovieLens 1M user demographics",
                kind.name()
            );
        }
        let (default_ratings, default_users) = match &self.data_dir {
            Some(root) => {
                let (r, u) = kind.default_paths(root);
                (Some(r), u)
            }
            None => (None, None),
        };
        let ratings = self.ratings.clone().or(default_ratings).with_context(|| {
            format!(
                "no ratings file for {}: pass --ratings or set LLI_DATA_DIR",
                kind.name()
            )
        })?;
        let users = match self.mode {
            ModeArg::ThreeD => Some(
                self.users
                    .clone()
                    .or(default_users)
                    .context("3-D mode needs --users PATH or LLI_DATA_DIR")?,
            ),
            ModeArg::TwoD => self.users.clone(),
        };
        Ok(Input::Ratings(data::load_dataset(kind, &ratings, users.as_deref())?))
    }

    fn mode(&self) -> Result<Mode> {
        Ok(match self.mode {
            ModeArg::TwoD => Mode::TwoD,
            ModeArg::ThreeD => Mode::ThreeD {
                categories: parse_categories(&self.features)?,
            },
        })
    }
}

/// Trains on every record of a ratings dataset.
fn train_dataset(ds: &RatingsDataset, mode: &Mode, cfg: &SolverConfig) -> Result<(CompletedTensor, Catalog)> {
    let mut catalog = Catalog {
        dataset: ds.name.clone(),
        shift: ds.shift,
        users: ds.users.ids().collect(),
        products: ds.products.ids().collect(),
        ..Catalog::default()
    };
    let tensor = match mode {
        Mode::TwoD => data::full_tensor_2d(ds)?,
        Mode::ThreeD { categories } => {
            let enc = data::feature_encoding(ds, categories)?;
            catalog.categories = Some(categories.clone());
            catalog.user_features = enc.user_indices.clone();
            data::full_tensor_3d(ds, &enc)?
        }
    };
    let completed = tca(&tensor, mode.k(), cfg)?;
    Ok((completed, catalog))
}

fn tensor_catalog(t: &SparseTensor) -> Catalog {
    Catalog {
        dataset: "tensor".into(),
        users: (0..t.shape()[0] as u64).collect(),
        products: (0..t.shape()[t.ndim() - 1] as u64).collect(),
        ..Catalog::default()
    }
}

fn solve_tensor(t: &SparseTensor, k: Option<usize>, cfg: &SolverConfig) -> Result<CompletedTensor> {
    let k = k.unwrap_or(t.ndim().saturating_sub(1).max(1));
    Ok(tca(t, k, cfg)?)
}

fn cmd_complete(args: &CompleteArgs) -> Result<()> {
    let cfg = args.solver.config();
    let (completed, catalog, is_tensor) = match args.data.load(DatasetArg::Tensor)? {
        Input::Tensor(t) => {
            let c = solve_tensor(&t, args.k, &cfg)?;
            (c, tensor_catalog(&t), true)
        }
        Input::Ratings(ds) => {
            if args.k.is_some() {
                bail!("--k applies to tensor input only; rating datasets use k = 1 (2d) or 2 (3d)");
            }
            let (c, cat) = train_dataset(&ds, &args.data.mode()?, &cfg)?;
            (c, cat, false)
        }
    };
    let model = completed.model();
    eprintln!("sweeps: {}", model.sweeps_run);
    eprintln!("final residual: {:e}", model.final_residual);
    let weak = if is_tensor && completed.source().num_cells() <= lli_core::completion::MAX_DENSE_CELLS {
        lli_core::completion::CellIter::new(completed.shape())
            .filter(|i| completed.provenance(i).ok() == Some(Provenance::WeaklyDetermined))
            .count()
    } else {
        0
    };
    if weak > 0 {
        eprintln!("warning: {weak} cells touch subtensors with no observations and use the implicit scale 1");
    }

    let doc = || ModelDocument::new(&completed, &cfg, catalog.clone());
    if let Some(path) = &args.model_out {
        doc().save(path)?;
    }
    match (is_tensor, &args.out) {
        (true, Some(path)) => {
            let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut w = BufWriter::new(file);
            tensor_io::write_completed(&mut w, &completed)?;
            w.flush()?;
        }
        (true, None) => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            tensor_io::write_completed(&mut w, &completed)?;
            w.flush()?;
        }
        (false, Some(path)) => doc().save(path)?,
        (false, None) if args.model_out.is_none() => {
            bail!("rating datasets are too large to print; pass --out or --model-out for the model document")
        }
        (false, None) => {}
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let ds = match args.data.load(DatasetArg::Movielens1m)? {
        Input::Tensor(t) => tensor_as_dataset(&t)?,
        Input::Ratings(ds) => ds,
    };
    let mode = args.data.mode()?;
    let config = EvalConfig {
        solver: args.solver.config(),
        n_folds: args.folds,
        seed: args.seed,
        clamp: args.clamp,
        feature_mask: match args.feature_mask {
            MaskArg::Test => FeatureMask::TestMask,
            MaskArg::All => FeatureMask::AllFeatures,
        },
        record_timings: args.timings,
    };
    let report = match args.baseline {
        None => eval::run_experiment(&ds, &mode, &config)?,
        Some(b) => {
            if mode != Mode::TwoD {
                bail!("baselines are defined for 2-D mode only");
            }
            let kind = match b {
                BaselineArg::GlobalMean => BaselineKind::GlobalMean,
                BaselineArg::ItemMean => BaselineKind::ItemMean,
                BaselineArg::UserMean => BaselineKind::UserMean,
            };
            let plan = data::split_kfold(&ds, config.n_folds, config.seed)?;
            eval::baseline_predict(&ds, &plan, kind, &config)?
        }
    };
    if let Some(path) = &args.trace_out {
        let trace = eval::convergence_trace(&ds, &mode, &config)?;
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        eval::write_trace_csv(BufWriter::new(file), &trace)?;
    }

    outln!("dataset: {} ({})", report.dataset, report.mode);
    outln!("RMSE: {:.4} +/- {:.4}", report.rmse_mean, report.rmse_std);
    outln!("MAE:  {:.4} +/- {:.4}", report.mae_mean, report.mae_std);
    let unconverged = report.per_fold.iter().filter(|f| !f.converged).count();
    if unconverged > 0 {
        eprintln!("warning: {unconverged} folds hit the sweep cap before converging");
    }
    let json = report.to_json();
    match &args.out {
        Some(path) => std::fs::write(path, json + "\n").with_context(|| format!("cannot write {}", path.display()))?,
        None => outln!("{json}"),
    }
    Ok(())
}

fn cmd_recommend(args: &RecommendArgs) -> Result<()> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let doc = match &args.model {
        Some(path) => ModelDocument::load(path)?,
        None => {
            let cfg = args.solver.config();
            let (completed, catalog) = match args.data.load(DatasetArg::Tensor)? {
                Input::Tensor(t) => (solve_tensor(&t, None, &cfg)?, tensor_catalog(&t)),
                Input::Ratings(ds) => train_dataset(&ds, &args.data.mode()?, &cfg)?,
            };
            ModelDocument::new(&completed, &cfg, catalog)
        }
    };
    let user = doc
        .users
        .iter()
        .position(|&u| u == args.user)
        .ok_or_else(|| anyhow!("unknown user {}", args.user))?;
    let completed = doc.to_completed()?;
    let features = doc.user_features.get(&args.user).map(Vec::as_slice);
    let ranked = recsys::top_n(&completed, user, args.n, args.exclude_observed, features)?;
    for (rank, p) in ranked.iter().enumerate() {
        let product = doc.products.get(p.product).copied().unwrap_or(p.product as u64);
        let source = match p.source {
            recsys::Source::Observed => "observed",
            recsys::Source::Completed => "completed",
        };
        outln!("{},{product},{},{source}", rank + 1, p.rating - doc.shift);
    }
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> Result<bool> {
    let settings = check::CheckSettings {
        seed: args.seed,
        cases: args.cases.max(1),
        epsilon: args.epsilon,
        max_sweeps: args.max_sweeps,
        fault: args.inject_fault,
    };
    let results = check::run(&settings);
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        outln!("{tag} {}: {}", r.property.name(), r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Complete(a) => cmd_complete(a).map(|_| true),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| true),
        Command::Recommend(a) => cmd_recommend(a).map(|_| true),
        Command::Check(a) => cmd_check(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
