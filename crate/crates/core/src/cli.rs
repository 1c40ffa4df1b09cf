//! The `topgraph` command-line tool.
//!
//! Every command writes its artifacts plus `<out>.manifest.json`, which echoes
//! the arguments, seed, and SHA-256 digests of every input file. Exit codes:
//! 0 ok, 1 internal, 2 usage, 3 data, 4 non-convergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::adapt::{adapt_kappa, adapt_trace_csv, AdaptConfig, AdaptError, Direction, GradientForm, InnerSolver};
use crate::archive::{self, ArchiveError};
use crate::eval::{evaluate_completions, make_split, one_class_nn_score, EvalError};
use crate::graphio::{knn_sparsify, load_edge_list, load_tuples, symmetric_normalize, GraphError, SparseGraph, TupleSet};
use crate::model::{Model, ModelError};
use crate::oracle::{run_suites, Suite};
use crate::sgp::{build_kappa_tensor, KappaKind, KappaSpec, SgpError};
use crate::spectral::{select_rank_by_energy, top_eigensystem, EigenOptions, EigenSystem, EnergyMeasure, SpectralError};
use crate::train::{trace_csv, train_with_validation, FullBatchConfig, TrainConfig, TrainError};

/// Largest graph for which `--energy` computes the full spectrum.
pub const ENERGY_FULL_LIMIT: usize = 4096;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    NonConvergence(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::NonConvergence(m) => write!(f, "did not converge: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ArchiveError> for CliError {
    fn from(e: ArchiveError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::MissingVertexCount | GraphError::BadFraction(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            SpectralError::Shape(_) => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SgpError> for CliError {
    fn from(e: SgpError) -> Self {
        match e {
            SgpError::ExponentialArity(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BadGamma(_) => CliError::Usage(e.to_string()),
            ModelError::Sgp(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NotConverged { .. } | TrainError::NonFinite { .. } => CliError::NonConvergence(e.to_string()),
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::Model(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AdaptError> for CliError {
    fn from(e: AdaptError) -> Self {
        match e {
            AdaptError::Config(_) => CliError::Usage(e.to_string()),
            AdaptError::Infeasible { .. } => CliError::NonConvergence(e.to_string()),
            AdaptError::Train(inner) => inner.into(),
            AdaptError::Model(inner) => inner.into(),
            AdaptError::Sgp(inner) => inner.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadMode { .. } | EvalError::GraphCount { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "topgraph", version, about = "Transductive tuple ranking over spectral graph products")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load an edge list, optionally kNN-sparsify and normalize it, and archive the graph.
    Graph(GraphArgs),
    /// Compute the top eigenpairs of an archived graph.
    Eigen(EigenArgs),
    /// Train a model with AdaGrad on positive tuples.
    Train(TrainArgs),
    /// Learn a nonparametric kappa tensor together with the model.
    Adapt(AdaptArgs),
    /// Split a tuple file into train / validation / test thirds.
    Split(SplitArgs),
    /// Evaluate completion queries (MAP, AUC, Hits@5).
    Eval(EvalArgs),
    /// Run the built-in desk-scale consistency checks.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Vertex count; overrides a `# n=` header.
    #[arg(long)]
    pub n: Option<usize>,
    /// Keep each vertex's top `round(f * n)` neighbours (union symmetrized).
    #[arg(long)]
    pub knn_frac: Option<f64>,
    /// Apply `D^{-1/2} A D^{-1/2}`.
    #[arg(long)]
    pub normalize: bool,
    /// Remove isolated vertices after the other steps.
    #[arg(long, requires = "map_out")]
    pub drop_isolated: bool,
    /// Old-to-new vertex mapping written when dropping isolated vertices.
    #[arg(long)]
    pub map_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EnergyArg {
    Absolute,
    Squared,
}

#[derive(Debug, Args)]
pub struct EigenArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, conflicts_with = "energy", required_unless_present = "energy")]
    pub rank: Option<usize>,
    /// Smallest rank covering this fraction of spectral energy.
    #[arg(long)]
    pub energy: Option<f64>,
    #[arg(long, value_enum, default_value = "absolute")]
    pub energy_measure: EnergyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    /// One eigensystem archive per mode, in tuple order.
    #[arg(long = "eigen", required = true)]
    pub eigen: Vec<PathBuf>,
    /// Positive tuples, one tab-separated index list per line.
    #[arg(long)]
    pub tuples: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct SgdArgs {
    #[arg(long, default_value_t = 1.0)]
    pub eta0: f64,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 1_000)]
    pub eval_every: usize,
    /// Pairs sampled for the monitored loss (exact when omitted and feasible).
    #[arg(long)]
    pub monitor_samples: Option<usize>,
}

impl SgdArgs {
    fn config(&self, patience: Option<usize>) -> TrainConfig {
        TrainConfig {
            eta0: self.eta0,
            iterations: self.iters,
            seed: self.seed,
            batch: self.batch,
            eval_every: self.eval_every,
            monitor_samples: self.monitor_samples,
            patience,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// tensor | cartesian | exp | flat | file:<kappa archive>
    #[arg(long, default_value = "exp")]
    pub kappa: String,
    #[command(flatten)]
    pub sgd: SgdArgs,
    /// Validation tuples for early stopping.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long, requires = "validation")]
    pub patience: Option<usize>,
    /// Loss trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InnerArg {
    Fullbatch,
    Sgd,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Starting kappa: tensor | cartesian | exp | flat | file:<kappa archive>.
    #[arg(long, default_value = "cartesian")]
    pub kappa_init: String,
    #[arg(long, default_value_t = 10)]
    pub outer_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub kappa_step: f64,
    #[arg(long, value_enum, default_value = "fullbatch")]
    pub inner: InnerArg,
    #[arg(long, default_value_t = 200)]
    pub newton_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub newton_tol: f64,
    #[command(flatten)]
    pub sgd: SgdArgs,
    #[arg(long, default_value_t = 10_000)]
    pub dykstra_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub dykstra_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub pava_tol: f64,
    /// Use the unsquared `alpha / kappa^2` gradient.
    #[arg(long)]
    pub literal_gradient: bool,
    /// Step kappa uphill instead of downhill.
    #[arg(long)]
    pub ascent: bool,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out_kappa: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub tuples: PathBuf,
    /// Grid sizes, comma separated (e.g. `60,60`).
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving train.tsv, validation.tsv, test.tsv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineArg {
    Nn,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model archive; required unless a baseline is selected.
    #[arg(long, required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    /// Training tuples (excluded from candidate lists).
    #[arg(long, conflicts_with = "tuples", required_unless_present = "tuples")]
    pub train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,
    /// All tuples; split with `--split-seed` and evaluate on the test third.
    #[arg(long)]
    pub tuples: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Grid sizes, required without a model (e.g. `60,60`).
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Wildcard mode of the completion queries (0-based).
    #[arg(long, default_value_t = 0)]
    pub complete_mode: usize,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    /// Graph archives for the baseline, one per mode.
    #[arg(long = "graph")]
    pub graphs: Vec<PathBuf>,
    #[arg(long)]
    pub per_query: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// all | dense | seminorm | commutativity | gradient | projection
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    args: Vec<String>,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

struct Run {
    args: Vec<String>,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

impl Run {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        Ok(bytes)
    }

    fn read_text(&mut self, path: &Path) -> Result<String, CliError> {
        String::from_utf8(self.read(path)?).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    fn finish(self, command: &str, seed: Option<u64>, manifest_for: &Path) -> Result<(), CliError> {
        let manifest = RunManifest {
            tool: "topgraph",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            args: self.args,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut path = manifest_for.as_os_str().to_owned();
        path.push(".manifest.json");
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        fs::write(PathBuf::from(path), json + "\n")?;
        Ok(())
    }
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("{e}");
        return e.exit_code();
    }
    let run = Run {
        args: argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    match execute(cli.command, run) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("topgraph: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("TOPGRAPH_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("TOPGRAPH_THREADS must be a positive integer, got {value:?}")))?;
    // a pool may already exist when running in-process more than once
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn execute(command: Command, run: Run) -> Result<(), CliError> {
    match command {
        Command::Graph(a) => cmd_graph(a, run),
        Command::Eigen(a) => cmd_eigen(a, run),
        Command::Train(a) => cmd_train(a, run),
        Command::Adapt(a) => cmd_adapt(a, run),
        Command::Split(a) => cmd_split(a, run),
        Command::Eval(a) => cmd_eval(a, run),
        Command::Oracle(a) => cmd_oracle(a, run),
    }
}

fn cmd_graph(a: GraphArgs, mut run: Run) -> Result<(), CliError> {
    let text = run.read_text(&a.input)?;
    let mut g: SparseGraph<f64> = load_edge_list(&text, a.n)?;
    if let Some(f) = a.knn_frac {
        g = knn_sparsify(&g, f)?;
    }
    if a.normalize {
        g = symmetric_normalize(&g);
    }
    if a.drop_isolated {
        let (kept, map) = g.drop_isolated();
        g = kept;
        let mut lines = String::from("old\tnew\n");
        for (old, new) in map.iter().enumerate() {
            if let Some(new) = new {
                lines.push_str(&format!("{old}\t{new}\n"));
            }
        }
        let path = a.map_out.as_ref().expect("clap enforces --map-out");
        run.write(path, lines.as_bytes())?;
    }
    run.write(&a.out, &archive::write_graph(&g))?;
    eprintln!("graph: n={} nnz={}", g.n(), g.nnz());
    run.finish("graph", None, &a.out)
}

fn cmd_eigen(a: EigenArgs, mut run: Run) -> Result<(), CliError> {
    let g: SparseGraph<f64> = archive::read_graph(&run.read(&a.graph)?)?;
    let opts = EigenOptions { seed: a.seed, tol: a.tol, ..Default::default() };
    let sys = match (a.rank, a.energy) {
        (Some(d), _) => top_eigensystem(&g, d, &opts)?,
        (None, Some(coverage)) => {
            let measure = match a.energy_measure {
                EnergyArg::Absolute => EnergyMeasure::Absolute,
                EnergyArg::Squared => EnergyMeasure::Squared,
            };
            if g.n() > ENERGY_FULL_LIMIT {
                return Err(CliError::Usage(format!(
                    "--energy needs the full spectrum; n={} exceeds {ENERGY_FULL_LIMIT}, pass --rank",
                    g.n()
                )));
            }
            let full = top_eigensystem(&g, g.n(), &EigenOptions { dense_limit: usize::MAX, ..opts })?;
            let d = select_rank_by_energy(full.lambdas().as_slice().unwrap(), coverage, measure)?;
            full.truncate(d)
        }
        (None, None) => return Err(CliError::Usage("pass --rank or --energy".into())),
    };
    run.write(&a.out, &archive::write_eigensystem(&sys))?;
    eprintln!("eigen: n={} d={}", sys.n(), sys.d());
    run.finish("eigen", Some(a.seed), &a.out)
}

fn load_inputs(inputs: &ModelInputs, run: &mut Run) -> Result<(Vec<EigenSystem<f64>>, TupleSet), CliError> {
    let mut systems = Vec::with_capacity(inputs.eigen.len());
    for p in &inputs.eigen {
        systems.push(archive::read_eigensystem(&run.read(p)?)?);
    }
    let dims: Vec<usize> = systems.iter().map(EigenSystem::n).collect();
    let tuples = load_tuples(&run.read_text(&inputs.tuples)?, &dims)?;
    Ok((systems, tuples))
}

fn parse_kappa(spec: &str, run: &mut Run) -> Result<(KappaSpec<f64>, KappaKind), CliError> {
    let kind = match spec {
        "tensor" => KappaKind::Tensor,
        "cartesian" => KappaKind::Cartesian,
        "exp" | "exponential" => KappaKind::Exponential,
        "flat" => KappaKind::Flat,
        other => {
            let Some(path) = other.strip_prefix("file:") else {
                return Err(CliError::Usage(format!("unknown kappa {other:?}")));
            };
            let k = archive::read_kappa(&run.read(Path::new(path))?)?;
            return Ok((KappaSpec::Nonparametric(k), KappaKind::Nonparametric));
        }
    };
    Ok((KappaSpec::parametric(kind).expect("parametric kind"), kind))
}

fn cmd_train(a: TrainArgs, mut run: Run) -> Result<(), CliError> {
    let (systems, tuples) = load_inputs(&a.inputs, &mut run)?;
    let (spec, kind) = parse_kappa(&a.kappa, &mut run)?;
    let built = build_kappa_tensor(&spec, &systems)?;
    if built.clamped > 0 {
        eprintln!("train: {} kappa entries clamped to the floor", built.clamped);
    }
    let model = Model::new(systems, built.kappa, kind, a.inputs.gamma)?;
    let validation = match &a.validation {
        Some(p) => Some(load_tuples(&run.read_text(p)?, tuples.dims())?),
        None => None,
    };
    let cfg = a.sgd.config(a.patience);
    let out = train_with_validation(model, &tuples, validation.as_ref(), &cfg)?;
    run.write(&a.out, &archive::write_model(&out.model))?;
    if let Some(p) = &a.trace {
        run.write(p, trace_csv(&out.trace).as_bytes())?;
    }
    eprintln!("train: {} iterations", out.iterations);
    run.finish("train", Some(a.sgd.seed), &a.out)
}

fn cmd_adapt(a: AdaptArgs, mut run: Run) -> Result<(), CliError> {
    let (systems, tuples) = load_inputs(&a.inputs, &mut run)?;
    let (spec, _) = parse_kappa(&a.kappa_init, &mut run)?;
    let init = build_kappa_tensor(&spec, &systems)?.kappa;
    let inner = match a.inner {
        InnerArg::Fullbatch => InnerSolver::FullBatch(FullBatchConfig { tol: a.newton_tol, max_iter: a.newton_iters }),
        InnerArg::Sgd => InnerSolver::Sgd(a.sgd.config(None)),
    };
    let cfg = AdaptConfig {
        outer_iters: a.outer_iters,
        kappa_step: a.kappa_step,
        inner,
        dykstra_iters: a.dykstra_iters,
        dykstra_tol: a.dykstra_tol,
        pava_tol: a.pava_tol,
        total: 1.0,
        gradient_form: if a.literal_gradient { GradientForm::Literal } else { GradientForm::Squared },
        direction: if a.ascent { Direction::Ascent } else { Direction::Descent },
    };
    let out = adapt_kappa(&tuples, systems, a.inputs.gamma, Some(init), &cfg)?;
    run.write(&a.out_kappa, &archive::write_kappa(&out.kappa))?;
    run.write(&a.out, &archive::write_model(&out.model))?;
    if let Some(p) = &a.trace {
        run.write(p, adapt_trace_csv(&out.trace).as_bytes())?;
    }
    let seed = matches!(a.inner, InnerArg::Sgd).then_some(a.sgd.seed);
    run.finish("adapt", seed, &a.out)
}

fn cmd_split(a: SplitArgs, mut run: Run) -> Result<(), CliError> {
    let tuples = load_tuples(&run.read_text(&a.tuples)?, &a.dims)?;
    let split = make_split(&tuples, a.seed)?;
    fs::create_dir_all(&a.out_dir)?;
    for (name, set) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        run.write(&a.out_dir.join(format!("{name}.tsv")), set.to_text().as_bytes())?;
    }
    run.finish("split", Some(a.seed), &a.out_dir.join("split"))
}

fn cmd_eval(a: EvalArgs, mut run: Run) -> Result<(), CliError> {
    let model: Option<Model<f64>> = match &a.model {
        Some(p) => Some(archive::read_model(&run.read(p)?)?),
        None => None,
    };
    let dims = match (&model, &a.dims) {
        (Some(m), _) => m.dims_n(),
        (None, Some(d)) => d.clone(),
        (None, None) => return Err(CliError::Usage("--dims is required without --model".into())),
    };
    let (train, test) = match (&a.train, &a.test, &a.tuples) {
        (Some(tr), Some(te), _) => {
            (load_tuples(&run.read_text(tr)?, &dims)?, load_tuples(&run.read_text(te)?, &dims)?)
        }
        (None, None, Some(all)) => {
            let split = make_split(&load_tuples(&run.read_text(all)?, &dims)?, a.split_seed)?;
            (split.train, split.test)
        }
        _ => return Err(CliError::Usage("pass --train and --test, or --tuples".into())),
    };
    let report = match a.baseline {
        Some(BaselineArg::Nn) => {
            let mut graphs = Vec::with_capacity(a.graphs.len());
            for p in &a.graphs {
                graphs.push(archive::read_graph::<f64>(&run.read(p)?)?);
            }
            if graphs.len() != dims.len() {
                return Err(EvalError::GraphCount { graphs: graphs.len(), order: dims.len() }.into());
            }
            if train.is_empty() {
                return Err(EvalError::EmptyTrain.into());
            }
            evaluate_completions(
                |t: &[usize]| one_class_nn_score(&graphs, &train, t).expect("checked above"),
                &train,
                &test,
                a.complete_mode,
            )?
        }
        None => {
            let m = model.as_ref().expect("clap requires --model without a baseline");
            evaluate_completions(|t: &[usize]| m.score_tuple(t), &train, &test, a.complete_mode)?
        }
    };
    run.write(&a.out, (report.to_json() + "\n").as_bytes())?;
    if let Some(p) = &a.per_query {
        run.write(p, report.per_query_csv().as_bytes())?;
    }
    println!("{}", report.to_json());
    let seed = a.tuples.is_some().then_some(a.split_seed);
    run.finish("eval", seed, &a.out)
}

fn cmd_oracle(a: OracleArgs, mut run: Run) -> Result<(), CliError> {
    let suites = Suite::parse(&a.suite).ok_or_else(|| CliError::Usage(format!("unknown suite {:?}", a.suite)))?;
    let report = run_suites(&suites, a.seed);
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    print!("{json}");
    if let Some(out) = &a.out {
        run.write(out, json.as_bytes())?;
        run.finish("oracle", Some(a.seed), out)?;
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<String> =
            report.suites.iter().filter(|s| !s.passed).map(|s| format!("{:?}", s.suite).to_lowercase()).collect();
        Err(CliError::Internal(format!("oracle suites failed: {}", failed.join(", "))))
    }
}
