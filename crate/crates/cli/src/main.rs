use std::ffi::OsString;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ppt_ising::bp::{bethe_pressure, bp_solve, BpConfig, Init};
use ppt_ising::critical::{beta_critical, detect_transition, sweep, write_sweep_csv, TransitionSummary};
use ppt_ising::exact::enumerate;
use ppt_ising::graph::{generate, read_edge_list, write_edge_list, MultiGraph, PaParams};
use ppt_ising::ising::IsingParams;
use ppt_ising::mcmc::{glauber_run, pressure_by_integration, write_series_csv, McmcConfig};
use ppt_ising::ppt::{sample_tree, PptParams, PptTree, DEFAULT_NODE_CAP};
use ppt_ising::rde::{estimate_limits, LimitRecord, RdeConfig};
use ppt_ising::rng::stream_rng;
use ppt_ising::Error;

mod config;
mod output;

use config::{parse_grid, parse_list};
use output::{to_json, Run};

#[derive(Debug, Parser)]
#[command(name = "ppt-ising", version, about = "Ising models on preferential attachment graphs and the Polya point tree")]
pub struct Cli {
    /// `key = value` file supplying defaults; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for parallel sampling.
    #[arg(long, global = true, env = "PPT_ISING_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grow a preferential attachment graph and write its edge list.
    #[command(args_override_self = true)]
    GenerateGraph(GenerateArgs),
    /// Exact enumeration on a small graph.
    #[command(args_override_self = true)]
    Exact(ExactArgs),
    /// Belief propagation and the Bethe pressure.
    #[command(args_override_self = true)]
    Bp(BpArgs),
    /// Glauber dynamics, optionally with thermodynamic integration.
    #[command(args_override_self = true)]
    Mcmc(McmcArgs),
    /// Sample a Polya point tree to a given depth.
    #[command(args_override_self = true)]
    PptSample(PptArgs),
    /// Limit quantities from the recursive distributional equation.
    #[command(args_override_self = true)]
    Rde(RdeArgs),
    /// Limit quantities over a (beta, B) grid, as CSV.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Closed-form critical inverse temperature, optionally with an empirical sweep.
    #[command(args_override_self = true)]
    CriticalTemp(CriticalArgs),
    /// Quick cross-checks between the solvers.
    #[command(args_override_self = true)]
    SelfTest(SelfTestArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ExactArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long = "B", allow_negative_numbers = true)]
    #[serde(rename = "B")]
    field: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// A graph read from disk or grown on the fly.
#[derive(Debug, Args, Serialize)]
struct GraphSource {
    /// Edge-list file; without it a graph is grown from --m/--delta/--n.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    graph_seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum InitArg {
    Free,
    Plus,
}

#[derive(Debug, Args, Serialize)]
struct BpArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: GraphSource,
    #[arg(long)]
    beta: f64,
    #[arg(long = "B", allow_negative_numbers = true)]
    #[serde(rename = "B")]
    field: f64,
    #[arg(long, value_enum, default_value = "free")]
    init: InitArg,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct McmcArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: GraphSource,
    #[arg(long)]
    beta: f64,
    #[arg(long = "B", allow_negative_numbers = true)]
    #[serde(rename = "B")]
    field: f64,
    #[arg(long, default_value_t = 20_000)]
    sweeps: usize,
    #[arg(long, default_value_t = 2_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 4)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also estimate the pressure by integrating over this many beta points.
    #[arg(long)]
    integrate_points: Option<usize>,
    /// CSV of the replicate-averaged measurement series.
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PptArgs {
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
    node_cap: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct RdeSettings {
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    #[arg(long, default_value_t = 10_000)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Give up after this many seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl RdeSettings {
    fn config(&self, beta: f64, field: f64) -> Result<RdeConfig, CliError> {
        let mut cfg = RdeConfig::new(beta, field, self.depth, self.replicates, self.seed);
        if let Some(t) = self.time_limit {
            let d = Duration::try_from_secs_f64(t).map_err(|e| CliError::Usage(format!("--time-limit: {e}")))?;
            cfg = cfg.with_deadline(Instant::now() + d);
        }
        Ok(cfg)
    }

    fn params(&self) -> Result<PptParams, CliError> {
        Ok(PptParams::new(self.m, self.delta)?)
    }
}

#[derive(Debug, Args, Serialize)]
struct RdeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    rde: RdeSettings,
    #[arg(long)]
    beta: f64,
    #[arg(long = "B", allow_negative_numbers = true)]
    #[serde(rename = "B")]
    field: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    rde: RdeSettings,
    /// Inverse temperatures as start:stop:step.
    #[arg(long)]
    beta_grid: String,
    /// Comma-separated field values.
    #[arg(long = "B", conflicts_with = "field_grid")]
    #[serde(rename = "B")]
    fields: Option<String>,
    /// Field values as start:stop:step.
    #[arg(long = "B-grid")]
    #[serde(rename = "B-grid")]
    field_grid: Option<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CriticalArgs {
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    delta: f64,
    /// Also locate the transition empirically over this start:stop:step grid.
    #[arg(long, requires = "fields")]
    beta_grid: Option<String>,
    /// Comma-separated fields for the zero-field extrapolation.
    #[arg(long)]
    fields: Option<String>,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    #[arg(long, default_value_t = 10_000)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SelfTestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0} self-test check(s) failed")]
    SelfTest(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(
                Error::InvalidParameter(_)
                | Error::Parse { .. }
                | Error::VertexOutOfRange { .. }
                | Error::TooLarge { .. }
                | Error::NotATree,
            ) => 2,
            CliError::NotConverged(_) => 3,
            _ => 1,
        }
    }
}

type CliResult = Result<(), CliError>;

fn read_graph(path: &Path) -> Result<MultiGraph, CliError> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_edge_list(BufReader::new(file))?.1)
}

impl GraphSource {
    fn load(&self) -> Result<MultiGraph, CliError> {
        match (&self.graph, self.n) {
            (Some(p), _) => read_graph(p),
            (None, Some(n)) => Ok(generate(&PaParams::new(self.m, self.delta, n, self.graph_seed)?)?.graph),
            (None, None) => Err(CliError::Usage("give either --graph or --n".into())),
        }
    }
}

#[derive(Serialize)]
struct ExactRecord {
    n: usize,
    log_z: f64,
    pressure: f64,
    #[serde(rename = "M")]
    magnetisation: f64,
    #[serde(rename = "U")]
    internal_energy: f64,
    marginals: Vec<f64>,
}

#[derive(Serialize)]
struct BpRecord {
    n: usize,
    pressure: f64,
    #[serde(rename = "M")]
    magnetisation: f64,
    #[serde(rename = "U")]
    internal_energy: f64,
    converged: bool,
    iterations: usize,
    residual: f64,
}

#[derive(Serialize)]
struct McmcRecord {
    n: usize,
    #[serde(rename = "M")]
    magnetisation: f64,
    #[serde(rename = "M_err")]
    magnetisation_err: f64,
    #[serde(rename = "U")]
    internal_energy: f64,
    #[serde(rename = "U_err")]
    internal_energy_err: f64,
    pressure: Option<f64>,
    pressure_err: Option<f64>,
}

#[derive(Serialize)]
struct CriticalRecord {
    m: usize,
    delta: f64,
    beta_c: f64,
    r_kappa: f64,
    pi_c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    transition: Option<TransitionSummary>,
}

fn generate_graph(a: &GenerateArgs) -> CliResult {
    let g = generate(&PaParams::new(a.m, a.delta, a.n, a.seed)?)?;
    let mut buf = Vec::new();
    write_edge_list(&mut buf, &g.graph, a.m, a.delta)?;
    let mut run = Run::new("generate-graph", a, Some(a.seed));
    run.emit(a.output.as_deref(), &buf)?;
    Ok(run.finish()?)
}

fn exact(a: &ExactArgs) -> CliResult {
    let g = read_graph(&a.graph)?;
    let r = enumerate(&g, &IsingParams::uniform(a.beta, a.field))?;
    let rec = ExactRecord {
        n: g.n(),
        log_z: r.log_z,
        pressure: r.pressure,
        magnetisation: r.magnetisation(),
        internal_energy: r.internal_energy(&g),
        marginals: r.marginals.clone(),
    };
    let mut run = Run::new("exact", a, None);
    run.emit(a.output.as_deref(), &to_json(&rec))?;
    Ok(run.finish()?)
}

fn bp(a: &BpArgs) -> CliResult {
    let g = a.source.load()?;
    let p = IsingParams::uniform(a.beta, a.field);
    let init = match a.init {
        InitArg::Free => Init::Free,
        InitArg::Plus => Init::Plus,
    };
    let cfg = BpConfig { max_iters: a.max_iters, damping: a.damping, ..BpConfig::default().with_init(init).with_tol(a.tol) };
    let msgs = bp_solve(&g, &p, &cfg)?;
    let b = bethe_pressure(&g, &msgs, &p)?;
    let rec = BpRecord {
        n: g.n(),
        pressure: b.pressure,
        magnetisation: b.magnetisation,
        internal_energy: b.internal_energy,
        converged: msgs.converged,
        iterations: msgs.iterations,
        residual: msgs.residual,
    };
    let mut run = Run::new("bp", a, None);
    run.emit(a.output.as_deref(), &to_json(&rec))?;
    run.finish()?;
    if !msgs.converged {
        return Err(CliError::NotConverged(format!(
            "belief propagation did not converge in {} sweeps (residual {:e})",
            msgs.iterations, msgs.residual
        )));
    }
    Ok(())
}

fn mcmc(a: &McmcArgs) -> CliResult {
    let g = a.source.load()?;
    let cfg = McmcConfig { sweeps: a.sweeps, burn_in: a.burn_in, thin: a.thin, seed: a.seed, replicates: a.replicates };
    let est = glauber_run(&g, &IsingParams::uniform(a.beta, a.field), &cfg)?;
    let pressure = match a.integrate_points {
        Some(k) => {
            let grid: Vec<f64> = (0..k).map(|i| a.beta * i as f64 / (k.max(2) - 1) as f64).collect();
            Some(pressure_by_integration(&g, &IsingParams::uniform(0.0, a.field), &grid, &cfg)?)
        }
        None => None,
    };
    let rec = McmcRecord {
        n: g.n(),
        magnetisation: est.magnetisation.mean,
        magnetisation_err: est.magnetisation.err,
        internal_energy: est.internal_energy.mean,
        internal_energy_err: est.internal_energy.err,
        pressure: pressure.as_ref().map(|p| p.pressure),
        pressure_err: pressure.as_ref().map(|p| p.err),
    };
    let mut run = Run::new("mcmc", a, Some(a.seed));
    run.emit(a.output.as_deref(), &to_json(&rec))?;
    if let Some(path) = &a.series {
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &est.series)?;
        run.emit(Some(path), &buf)?;
    }
    Ok(run.finish()?)
}

fn ppt_sample(a: &PptArgs) -> CliResult {
    let p = PptParams::new(a.m, a.delta)?;
    let tree = sample_tree(&p, a.depth, a.node_cap, &mut stream_rng(a.seed, 0))?;
    let mut buf = Vec::new();
    tree.write_text(&mut buf)?;
    let mut run = Run::new("ppt-sample", a, Some(a.seed));
    run.emit(a.output.as_deref(), &buf)?;
    Ok(run.finish()?)
}

fn deadline(e: Error) -> CliError {
    match e {
        Error::DeadlineExceeded => CliError::NotConverged("run stopped at its time limit".into()),
        e => e.into(),
    }
}

fn rde(a: &RdeArgs) -> CliResult {
    let cfg = a.rde.config(a.beta, a.field)?;
    let est = estimate_limits(&a.rde.params()?, &cfg).map_err(deadline)?;
    let mut run = Run::new("rde", a, Some(a.rde.seed));
    run.emit(a.output.as_deref(), &to_json(&LimitRecord::new(&cfg, &est)))?;
    Ok(run.finish()?)
}

fn run_sweep(a: &SweepArgs) -> CliResult {
    let betas = parse_grid(&a.beta_grid).map_err(CliError::Usage)?;
    let fields = match (&a.fields, &a.field_grid) {
        (_, Some(g)) => parse_grid(g),
        (Some(l), None) => parse_list(l),
        (None, None) => Err("give --B or --B-grid".into()),
    }
    .map_err(CliError::Usage)?;
    let points = sweep(&a.rde.params()?, &betas, &fields, &a.rde.config(0.0, 0.0)?).map_err(deadline)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &points)?;
    let mut run = Run::new("sweep", a, Some(a.rde.seed));
    run.emit(a.output.as_deref(), &buf)?;
    Ok(run.finish()?)
}

fn critical_temp(a: &CriticalArgs) -> CliResult {
    let c = beta_critical(a.m, a.delta)?;
    let transition = match (&a.beta_grid, &a.fields) {
        (Some(grid), Some(fields)) => {
            let betas = parse_grid(grid).map_err(CliError::Usage)?;
            let fields = parse_list(fields).map_err(CliError::Usage)?;
            let p = PptParams::new(a.m, a.delta)?;
            let res = detect_transition(&p, &betas, &fields, &RdeConfig::new(0.0, 0.0, a.depth, a.replicates, a.seed))?;
            Some(TransitionSummary::new(&p, &res))
        }
        _ => None,
    };
    let rec = CriticalRecord { m: a.m, delta: a.delta, beta_c: c.beta_c, r_kappa: c.r_kappa, pi_c: c.pi_c, transition };
    let mut run = Run::new("critical-temp", a, None);
    run.emit(a.output.as_deref(), &to_json(&rec))?;
    Ok(run.finish()?)
}

fn tree_graph(tree: &PptTree) -> MultiGraph {
    let mut g = MultiGraph::new(tree.len());
    for (i, node) in tree.nodes.iter().enumerate() {
        for &c in &node.children {
            g.add_edge(i, c).expect("child indices are in range");
        }
    }
    g
}

fn report(name: &str, pass: bool, detail: String) -> usize {
    println!("{} {name}: {detail}", if pass { "ok  " } else { "FAIL" });
    usize::from(!pass)
}

fn self_test(a: &SelfTestArgs) -> CliResult {
    let mut failures = 0;

    // BP is exact on trees; small Polya point trees serve as test cases
    let p = PptParams::new(2, 1.0)?;
    let mut worst = 0.0f64;
    let mut trees = 0;
    for k in 0..200 {
        let Ok(tree) = sample_tree(&p, 2, 14, &mut stream_rng(a.seed, k)) else { continue };
        let g = tree_graph(&tree);
        let ising = IsingParams::uniform(0.01 * (k % 100) as f64, 0.1 + 0.004 * k as f64);
        let msgs = bp_solve(&g, &ising, &BpConfig::default())?;
        let exact = enumerate(&g, &ising)?;
        worst = worst.max((bethe_pressure(&g, &msgs, &ising)?.pressure - exact.pressure).abs());
        trees += 1;
    }
    failures += report("BP = exact on trees", trees > 0 && worst < 1e-10, format!("{trees} trees, max pressure error {worst:.1e}"));

    let k2 = MultiGraph::path(2);
    let ising = IsingParams::uniform(0.5, 0.2);
    let exact = enumerate(&k2, &ising)?;
    let cfg = McmcConfig { sweeps: 40_000, burn_in: 1_000, thin: 1, seed: a.seed, replicates: 4 };
    let est = glauber_run(&k2, &ising, &cfg)?;
    let (m, u) = (exact.magnetisation(), exact.internal_energy(&k2));
    let pass = (est.magnetisation.mean - m).abs() <= 4.0 * est.magnetisation.err
        && (est.internal_energy.mean - u).abs() <= 4.0 * est.internal_energy.err;
    failures += report(
        "MCMC = exact on K2",
        pass,
        format!("M {:.4} vs {m:.4}, U {:.4} vs {u:.4}", est.magnetisation.mean, est.internal_energy.mean),
    );

    let (beta, field) = (0.2, 0.2);
    let g = generate(&PaParams::new(2, 1.0, 10_000, a.seed)?)?.graph;
    let ising = IsingParams::uniform(beta, field);
    let bethe = bethe_pressure(&g, &bp_solve(&g, &ising, &BpConfig::default().with_tol(1e-10))?, &ising)?;
    let est = estimate_limits(&p, &RdeConfig::new(beta, field, 4, 2_000, a.seed))?;
    let (m, u) = (est.magnetisation.pooled.mean, est.internal_energy.pooled.mean);
    let pass = (m - bethe.magnetisation).abs() <= 2e-2 && (u - bethe.internal_energy).abs() <= 2e-2;
    failures += report(
        "RDE = BP on a PA graph",
        pass,
        format!("M {m:.4} vs {:.4}, U {u:.4} vs {:.4}", bethe.magnetisation, bethe.internal_energy),
    );

    match failures {
        0 => Ok(()),
        k => Err(CliError::SelfTest(k)),
    }
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::GenerateGraph(a) => generate_graph(a),
        Command::Exact(a) => exact(a),
        Command::Bp(a) => bp(a),
        Command::Mcmc(a) => mcmc(a),
        Command::PptSample(a) => ppt_sample(a),
        Command::Rde(a) => rde(a),
        Command::Sweep(a) => run_sweep(a),
        Command::CriticalTemp(a) => critical_temp(a),
        Command::SelfTest(a) => self_test(a),
    }
}

fn main() -> ExitCode {
    output::mark_start();
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::with_config_defaults(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
