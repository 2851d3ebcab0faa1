//! `casc`: cluster graphs with node covariates, tune alpha, run blockmodel
//! simulation sweeps and evaluate the theoretical bounds.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure (solver did not
//! converge; partial results are still written).

mod io;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use casc::cluster::{spectral_cluster_with, SpectralOptions};
use casc::eigen::top_k_symmetric;
use casc::experiment::{run_design, BaseDesign, SimDesign};
use casc::graph::{PreprocessOptions, SimilarityOperator};
use casc::sbm::{misspecify_membership, population_alpha_init, sample_with_covariate_labels};
use casc::theory::{
    bernoulli_gamma, check_block_conditions, population_eigengap_closedform, two_block_lower_bound,
    theory_report,
};
use casc::tune::{tune_alpha_with, TuneOptions, TuningResult};
use casc::{CascError, CovariateMatrix, KmeansConfig, OperatorKind, OperatorSpec, SolverConfig, SparseGraph};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<CascError> for CliError {
    fn from(e: CascError) -> Self {
        match e {
            CascError::Degenerate(_) => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "casc", version, about = "Covariate-assisted spectral clustering")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster a graph, optionally with node covariates.
    Cluster(ClusterArgs),
    /// Grid search for alpha and report the objective curve.
    Tune(TuneArgs),
    /// Run a simulation design from a JSON file.
    Sweep(SweepArgs),
    /// Sample one blockmodel instance to files.
    Simulate(SimulateArgs),
    /// Evaluate the theoretical bounds for a blockmodel design.
    Bounds(BoundsArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct InputArgs {
    /// Edge list: `i j [weight]` per line, 0-based, `#` comments.
    #[arg(long)]
    graph: PathBuf,
    /// Covariate CSV with a `node_id` first column.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Covariate columns to dummy code (comma separated).
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Center numeric covariates.
    #[arg(long)]
    center: bool,
    /// Scale numeric covariates to unit sample variance.
    #[arg(long)]
    scale: bool,
    /// Node count when larger than what the files imply.
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    /// rsc, acasc, casc, cca or cov.
    #[arg(long, default_value = "casc")]
    method: OperatorKind,
    /// Number of clusters.
    #[arg(short, long)]
    k: usize,
    /// Covariate weight; tuned when omitted for acasc and casc.
    #[arg(long)]
    alpha: Option<f64>,
    /// Degree regularizer; the mean degree when omitted.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    normalize_rows: bool,
    /// Grid size when alpha is tuned.
    #[arg(long, default_value_t = 20)]
    grid_size: usize,
    #[arg(long, default_value_t = 20)]
    n_init: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct TuneArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(short, long)]
    k: usize,
    /// casc or acasc.
    #[arg(long, default_value = "casc")]
    variant: OperatorKind,
    #[arg(long, default_value_t = 20)]
    grid_size: usize,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    normalize_rows: bool,
    #[arg(long, default_value_t = 20)]
    n_init: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SweepArgs {
    /// Simulation design JSON.
    #[arg(long)]
    design: PathBuf,
    /// Methods to compare (comma separated); all five by default.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<OperatorKind>,
    /// Overrides the seed in the design file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DesignArgs {
    /// Simulation design JSON; its base design replaces the flags below.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long, default_value_t = 1500)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long, default_value_t = 0.03)]
    p: f64,
    #[arg(long, default_value_t = 0.015)]
    q: f64,
    #[arg(long, default_value_t = 0.8)]
    m1: f64,
    #[arg(long, default_value_t = 0.2)]
    m2: f64,
    /// Use the non-assortative block matrix (q on the diagonal).
    #[arg(long)]
    non_assortative: bool,
}

impl DesignArgs {
    fn resolve(&self) -> Result<BaseDesign, CliError> {
        match &self.design {
            Some(path) => Ok(read_design(path)?.base),
            None => Ok(BaseDesign {
                n_nodes: self.n,
                k: self.blocks,
                r: self.r,
                p: self.p,
                q: self.q,
                m1: self.m1,
                m2: self.m2,
                assortative: !self.non_assortative,
            }),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Fraction of covariate labels agreeing with the graph blocks.
    #[arg(long, default_value_t = 1.0)]
    agreement: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BoundsArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Covariate weight; the population balancing value when omitted.
    #[arg(long)]
    alpha: Option<f64>,
    /// Degree regularizer; the mean expected degree when omitted.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Use the eigengap of a sampled instance instead of the population value.
    #[arg(long)]
    sample_lambda: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct RunReport {
    command: &'static str,
    config_echo: Value,
    seed: u64,
    results: Value,
    timing: BTreeMap<String, f64>,
    version: &'static str,
}

struct Timer {
    stages: BTreeMap<String, f64>,
    last: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            stages: BTreeMap::new(),
            last: Instant::now(),
        }
    }

    fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages
            .insert(name.to_string(), (now - self.last).as_secs_f64());
        self.last = now;
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))
}

fn write_report(dir: &Path, report: &RunReport) -> Result<(), CliError> {
    io::write_json(&dir.join("report.json"), report)
}

fn read_design(path: &Path) -> Result<SimDesign, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

struct LoadedInput {
    graph: SparseGraph,
    covariates: Option<CovariateMatrix>,
    covariate_names: Vec<String>,
}

fn load_input(args: &InputArgs) -> Result<LoadedInput, CliError> {
    let edges = io::read_edge_list(&args.graph)?;
    let options = PreprocessOptions {
        center: args.center,
        scale: args.scale,
    };
    let table = match &args.covariates {
        Some(path) => Some(io::read_covariates(path, &args.categorical, options)?),
        None => None,
    };
    let from_cov = table.as_ref().map_or(0, |t| t.matrix.n_nodes());
    let from_edges = io::edges_node_count(&edges);
    let n = args.nodes.unwrap_or(0).max(from_edges).max(from_cov);
    if let Some(t) = &table {
        if t.matrix.n_nodes() != n {
            return Err(CliError::Input(format!(
                "covariates cover {} nodes but the graph has {n}",
                t.matrix.n_nodes()
            )));
        }
    }
    let graph = SparseGraph::from_edges(n, &edges)?;
    let (covariates, covariate_names) = match table {
        Some(t) => (Some(t.matrix), t.names),
        None => (None, Vec::new()),
    };
    Ok(LoadedInput {
        graph,
        covariates,
        covariate_names,
    })
}

fn cmd_cluster(args: &ClusterArgs) -> Result<(), CliError> {
    let mut timer = Timer::new();
    prepare_out(&args.out)?;
    let input = load_input(&args.input)?;
    timer.stage("load");
    let kind = args.method;
    if kind.needs_covariates() && input.covariates.is_none() {
        return Err(CliError::Input(format!("method {kind} needs --covariates")));
    }
    let tau = args.tau.unwrap_or_else(|| input.graph.default_tau());
    let kcfg = KmeansConfig {
        n_init: args.n_init,
        ..KmeansConfig::new(args.k, args.seed)
    };
    let options = SpectralOptions::new(args.normalize_rows, args.seed);

    let mut tuning: Option<TuningResult> = None;
    let alpha = match (kind.uses_alpha(), args.alpha) {
        (true, Some(a)) => a,
        (true, None) => {
            let x = input.covariates.as_ref().expect("checked above");
            let opts = TuneOptions {
                grid_size: args.grid_size,
                variant: kind,
                normalize_rows: args.normalize_rows,
                solver: options.solver,
            };
            let t = tune_alpha_with(&input.graph, x, tau, args.k, &kcfg, &opts)?;
            timer.stage("tune");
            let a = t.alpha_star;
            tuning = Some(t);
            a
        }
        (false, _) => 0.0,
    };
    let spec = OperatorSpec::new(kind, alpha, tau)?;
    let res = spectral_cluster_with(&input.graph, input.covariates.as_ref(), &spec, &kcfg, &options)?;
    timer.stage("cluster");
    let labels_path = args.out.join("labels.csv");
    io::write_labels(&labels_path, &res.labels)?;
    for w in &res.warnings {
        log::warn!("{w}");
    }
    let converged = res.converged();
    let report = RunReport {
        command: "cluster",
        config_echo: json!({
            "args": args,
            "resolved": {
                "n_nodes": input.graph.n_nodes(),
                "covariate_columns": input.covariate_names,
                "alpha": alpha,
                "tau": tau,
                "kmeans": kcfg,
                "solver": options.solver,
            }
        }),
        seed: args.seed,
        results: json!({
            "labels_file": "labels.csv",
            "converged": converged,
            "clustering": res.summary(),
            "tuning": tuning,
        }),
        timing: timer.stages,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_report(&args.out, &report)?;
    if converged {
        Ok(())
    } else {
        Err(CliError::Numerical("eigensolver did not converge".into()))
    }
}

#[derive(Serialize)]
struct GridRow {
    alpha: f64,
    wcss: Option<f64>,
    converged: Option<bool>,
    error: Option<String>,
}

fn cmd_tune(args: &TuneArgs) -> Result<(), CliError> {
    let mut timer = Timer::new();
    prepare_out(&args.out)?;
    let input = load_input(&args.input)?;
    timer.stage("load");
    let x = input
        .covariates
        .as_ref()
        .ok_or_else(|| CliError::Input("tune needs --covariates".into()))?;
    if !args.variant.uses_alpha() {
        return Err(CliError::Input("--variant must be casc or acasc".into()));
    }
    let tau = args.tau.unwrap_or_else(|| input.graph.default_tau());
    let kcfg = KmeansConfig {
        n_init: args.n_init,
        ..KmeansConfig::new(args.k, args.seed)
    };
    let opts = TuneOptions {
        grid_size: args.grid_size,
        variant: args.variant,
        normalize_rows: args.normalize_rows,
        solver: SolverConfig::default().with_seed(args.seed),
    };
    let t = tune_alpha_with(&input.graph, x, tau, args.k, &kcfg, &opts)?;
    timer.stage("tune");
    let rows: Vec<GridRow> = t
        .grid
        .iter()
        .map(|g| GridRow {
            alpha: g.alpha,
            wcss: g.wcss,
            converged: g.summary.as_ref().map(|s| s.eigen.converged),
            error: g.error.clone(),
        })
        .collect();
    io::write_rows(&args.out.join("grid.csv"), &rows)?;
    let all_converged = rows.iter().all(|r| r.converged != Some(false));
    let report = RunReport {
        command: "tune",
        config_echo: json!({
            "args": args,
            "resolved": {
                "n_nodes": input.graph.n_nodes(),
                "covariate_columns": input.covariate_names,
                "tau": tau,
                "kmeans": kcfg,
                "solver": opts.solver,
            }
        }),
        seed: args.seed,
        results: to_value(&t),
        timing: timer.stages,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_report(&args.out, &report)?;
    if all_converged {
        Ok(())
    } else {
        Err(CliError::Numerical("eigensolver did not converge at some grid points".into()))
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let mut timer = Timer::new();
    prepare_out(&args.out)?;
    let mut design = read_design(&args.design)?;
    if let Some(seed) = args.seed {
        design.seed = seed;
    }
    let methods = if args.methods.is_empty() {
        OperatorKind::ALL.to_vec()
    } else {
        args.methods.clone()
    };
    let table = run_design(&design, &methods)?;
    timer.stage("sweep");
    io::write_rows(&args.out.join("sweep.csv"), &table.rows)?;
    io::write_rows(&args.out.join("summary.csv"), &table.summary)?;
    let failures = table.rows.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        log::warn!("{failures} cells failed; see the error column of sweep.csv");
    }
    let report = RunReport {
        command: "sweep",
        config_echo: json!({ "args": args, "design": design, "methods": methods }),
        seed: design.seed,
        results: json!({
            "table": "sweep.csv",
            "summary": table.summary,
            "failed_cells": failures,
        }),
        timing: timer.stages,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_report(&args.out, &report)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut timer = Timer::new();
    prepare_out(&args.out)?;
    let base = args.design.resolve()?;
    let params = base.params()?;
    let z = params.labels();
    let y = if args.agreement < 1.0 {
        misspecify_membership(&z, base.k, args.agreement, args.seed.wrapping_add(1))?
    } else {
        z.clone()
    };
    let sample = sample_with_covariate_labels(&params, &y, args.seed)?;
    timer.stage("sample");
    io::write_edge_list(&args.out.join("graph.txt"), &sample.graph)?;
    io::write_covariates(&args.out.join("covariates.csv"), &sample.covariates)?;
    io::write_labels(&args.out.join("labels.csv"), &sample.labels)?;
    io::write_labels(&args.out.join("covariate_labels.csv"), &sample.covariate_labels)?;
    let report = RunReport {
        command: "simulate",
        config_echo: json!({ "args": args, "base": base }),
        seed: args.seed,
        results: json!({
            "n_nodes": sample.graph.n_nodes(),
            "n_edges": sample.graph.n_edges(),
            "mean_degree": sample.graph.default_tau(),
            "warnings": params.warnings(),
        }),
        timing: timer.stages,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_report(&args.out, &report)
}

fn sample_eigengap(base: &BaseDesign, alpha: f64, seed: u64) -> Result<f64, CliError> {
    let params = base.params()?;
    let sample = sample_with_covariate_labels(&params, &params.labels(), seed)?;
    let tau = sample.graph.default_tau();
    let spec = OperatorSpec::new(OperatorKind::Casc, alpha, tau)?;
    let op = SimilarityOperator::new(&spec, &sample.graph, Some(&sample.covariates))?;
    let cfg = SolverConfig::new(base.k + 1).with_seed(seed);
    let eig = top_k_symmetric(|v, out| op.apply_into(v, out), params.n_nodes(), &cfg)?;
    if !eig.converged {
        return Err(CliError::Numerical("sample eigensolve did not converge".into()));
    }
    Ok(eig.eigenvalues[base.k - 1] - eig.eigenvalues[base.k])
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let mut timer = Timer::new();
    let base = args.design.resolve()?;
    if base.n_nodes < 8 {
        return Err(CliError::Input(format!(
            "the bounds need N >= 8, got {}",
            base.n_nodes
        )));
    }
    prepare_out(&args.out)?;
    let params = base.params()?;
    let tau = args.tau.unwrap_or_else(|| params.expected_mean_degree());
    let alpha = match args.alpha {
        Some(a) => a,
        None => population_alpha_init(&params, tau)?,
    };
    let sample_lambda = if args.sample_lambda {
        Some(sample_eigengap(&base, alpha, args.seed)?)
    } else {
        None
    };
    let theory = theory_report(&params, alpha, tau, args.epsilon, sample_lambda)?;
    let conditions = check_block_conditions(&params, alpha, tau)?;
    let closed_form = if base.r % base.k == 0 {
        let (within, between) = if base.assortative { (base.p, base.q) } else { (base.q, base.p) };
        Some(population_eigengap_closedform(
            within, between, base.m1, base.m2, base.k, base.n_nodes, base.r, alpha, tau,
        )?)
    } else {
        None
    };
    let (gamma, lower) = if base.k == 2 {
        let g = bernoulli_gamma(params.m())?;
        let b = params.b();
        let lb = two_block_lower_bound(b[(0, 0)], base.n_nodes, g.gamma, args.epsilon, Some(b[(0, 0)] - b[(0, 1)]))?;
        (Some(g), Some(lb))
    } else {
        (None, None)
    };
    timer.stage("bounds");
    let report = RunReport {
        command: "bounds",
        config_echo: json!({
            "args": args,
            "base": base,
            "resolved": { "alpha": alpha, "tau": tau },
        }),
        seed: args.seed,
        results: json!({
            "theory": theory,
            "block_conditions": conditions,
            "eigengap_closedform": closed_form,
            "gamma": gamma,
            "lower_bound": lower,
        }),
        timing: timer.stages,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_report(&args.out, &report)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Cluster(a) => cmd_cluster(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bounds(a) => cmd_bounds(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("casc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
