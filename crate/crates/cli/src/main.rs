//! `cm`: command-line front end for the cmcrit toolkit.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cmcrit::coalescent::{simulate_with, write_merge_log, CoalescentState, SimulateOptions};
use cmcrit::degrees::{critical_law, materialize_law, sample_iid, tune_to_critical, DegreeSequence};
use cmcrit::dynamic::{trajectory, write_trajectory_csv};
use cmcrit::exploration::{explore, explore_components, explored_vector};
use cmcrit::harness::{
    compare_to_limit, limit_ensemble, run_experiment, CompareThresholds, DegreeMode, EnsembleTable,
    ExperimentConfig, LimitSpec, Pipeline, Summary,
};
use cmcrit::io::{read_degrees, read_dist, write_atomic, write_degrees};
use cmcrit::limit::{limit_params, percolation_limit_params, LimitParams, Scaling};
use cmcrit::multigraph::uniform_match;
use cmcrit::percolation::{coupled_grid, p_critical, percolate_direct, percolate_via_explosion};
use cmcrit::rng::substream;
use cmcrit::{Error, Result};

const AFTER_HELP: &str = "\
CSV columns (stable order):
  explore, percolate (single p)  rank,size,edges,surplus,open_halfedges
  explore --trace                stage,vertex,degree,c,S,s,A
  percolate --grid               lambda,rank,rescaled_size,surplus,open_halfedges
  dynamic                        lambda,rank,rescaled_size,rescaled_mass,surplus,bad_edges_so_far
  coalescent                     time,i,j,new_mass,new_weight
  limit                          replica,rank,length,marks,truncated_flag
  sweep                          pipeline,n,lambda,replica,seed,rank,size,rescaled_size,surplus,refined

Degree files: one integer per line, or JSON {\"n\": N, \"counts\": {\"d\": count}}.
Degree laws: JSON mapping degree to probability, e.g. {\"1\": 0.5, \"3\": 0.5}.
The seed falls back to the CM_SEED environment variable.
Exit status: 0 on success (and, for compare, when every threshold passes); 1 otherwise.";

#[derive(Parser, Debug)]
#[command(name = "cm", version, about = "Critical configuration model simulations", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a degree sequence from a degree law.
    #[command(after_help = AFTER_HELP)]
    Gen(GenArgs),
    /// Explore a configuration model and write its ordered component vector.
    #[command(after_help = AFTER_HELP)]
    Explore(ExploreArgs),
    /// Bond percolation at one location or along a coupled λ grid.
    #[command(after_help = AFTER_HELP)]
    Percolate(PercolateArgs),
    /// Dynamic construction with the kept-alive coupling over a λ grid.
    #[command(after_help = AFTER_HELP)]
    Dynamic(DynamicArgs),
    /// Simulate the multiplicative coalescent from given masses.
    #[command(after_help = AFTER_HELP)]
    Coalescent(CoalescentArgs),
    /// Sample the limiting excursion ensemble.
    #[command(after_help = AFTER_HELP)]
    Limit(LimitArgs),
    /// Compare an ensemble table against a simulated limit ensemble.
    #[command(after_help = AFTER_HELP)]
    Compare(CompareArgs),
    /// Run an ensemble experiment over n and λ grids.
    #[command(after_help = AFTER_HELP)]
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random stream (falls back to CM_SEED).
    #[arg(long, env = "CM_SEED")]
    seed: Option<u64>,
    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary format (ensembles and tables are always CSV).
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Validate the configuration and exit without simulating.
    #[arg(long)]
    dry_run: bool,
    /// Worker threads for ensemble work (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Common {
    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidConfig("--seed (or CM_SEED) is required".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Tuned,
    Materialized,
    Iid,
}

impl From<Mode> for DegreeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Tuned => DegreeMode::Tuned,
            Mode::Materialized => DegreeMode::Materialized,
            Mode::Iid => DegreeMode::Iid,
        }
    }
}

/// Degree source: a degree file, or a law with a vertex count.
#[derive(Args, Debug, Clone)]
struct Source {
    /// Degree sequence file.
    #[arg(long, conflicts_with_all = ["dist", "n"])]
    deg: Option<PathBuf>,
    /// Degree law (JSON).
    #[arg(long, requires = "n")]
    dist: Option<PathBuf>,
    /// Number of vertices when generating from --dist.
    #[arg(long, requires = "dist")]
    n: Option<usize>,
    /// How degrees are built from --dist: tuned (requires --lambda for
    /// explore), materialized or iid. Default: tuned when --lambda is given
    /// to gen/explore, materialized otherwise.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

fn parse_count(s: &str) -> std::result::Result<usize, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1e18 => Ok(f as usize),
        _ => Err(format!("{s:?} is not a non-negative integer")),
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    source: Source,
    /// Window location: tunes ν_n to 1 + λ n^{-1/3}.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ExploreArgs {
    #[command(flatten)]
    source: Source,
    /// Window location used when tuning degrees from --dist.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Also write the exploration trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Explosion,
    Direct,
}

#[derive(Args, Debug)]
struct PercolateArgs {
    #[command(flatten)]
    source: Source,
    /// Window location: p = (1 + λ n^{-1/3}) / ν_n.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["p", "grid"])]
    lambda: Option<f64>,
    /// Retention probability.
    #[arg(long, conflicts_with = "grid")]
    p: Option<f64>,
    /// Comma-separated λ grid for the coupled construction.
    #[arg(long, alias = "lambda-grid", value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
    /// Single-location construction.
    #[arg(long, value_enum, default_value_t = Method::Explosion)]
    method: Method,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct DynamicArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated λ grid (sorted).
    #[arg(long, alias = "grid", value_delimiter = ',', allow_hyphen_values = true, required = true)]
    lambda_grid: Vec<f64>,
    /// Components reported per grid point.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct CoalescentArgs {
    /// File of particles: `mass` or `mass,weight` per line.
    #[arg(long, conflicts_with = "masses")]
    input: Option<PathBuf>,
    /// Comma-separated masses (weights equal masses).
    #[arg(long, value_delimiter = ',')]
    masses: Option<Vec<f64>>,
    /// Time horizon.
    #[arg(long)]
    t_end: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LimitKind {
    /// Parameters of the law itself.
    Plain,
    /// Parameters of the law tuned to ν = 1 (as `gen --lambda`).
    Critical,
    /// Percolation limit of a supercritical law.
    Percolation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScalingKind {
    Rescaled,
    Stated,
}

#[derive(Args, Debug, Clone)]
struct LimitSource {
    /// Degree law (JSON).
    #[arg(long)]
    dist: PathBuf,
    /// Window location.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    lambda: f64,
    /// Which limit the law determines.
    #[arg(long, value_enum, default_value_t = LimitKind::Critical)]
    kind: LimitKind,
    /// Percolation size scaling.
    #[arg(long, value_enum, default_value_t = ScalingKind::Rescaled)]
    scaling: ScalingKind,
    /// Horizon of each limit path.
    #[arg(long = "T", alias = "horizon", default_value_t = 16.0)]
    horizon: f64,
    /// Grid step; defaults to T / 2^20.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Debug)]
struct LimitArgs {
    #[command(flatten)]
    limit: LimitSource,
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Ensemble table written by `sweep`.
    #[arg(long)]
    table: PathBuf,
    #[command(flatten)]
    limit: LimitSource,
    /// Size whose rows are compared.
    #[arg(long)]
    n: usize,
    /// Ranks compared (from 1).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    ranks: Vec<usize>,
    /// Limit paths simulated.
    #[arg(long, default_value_t = 4000)]
    limit_replicas: usize,
    /// Quantile of the split-half KS null used as the band.
    #[arg(long, default_value_t = 0.99)]
    band_quantile: f64,
    /// Also write the limit ensemble CSV here.
    #[arg(long)]
    limit_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Degree law (JSON).
    #[arg(long)]
    dist: PathBuf,
    #[arg(long, value_enum, default_value_t = PipelineArg::Direct)]
    pipeline: PipelineArg,
    /// Degree construction; tuned for direct, materialized otherwise by default.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Comma-separated vertex counts (scientific notation accepted).
    #[arg(long, value_delimiter = ',', value_parser = parse_count, required = true)]
    n_grid: Vec<usize>,
    /// Comma-separated λ grid.
    #[arg(long, alias = "lambda-grid", value_delimiter = ',', allow_hyphen_values = true, required = true)]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    replicas: usize,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Experiment name recorded in the summary.
    #[arg(long, default_value = "sweep")]
    name: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PipelineArg {
    Direct,
    Percolation,
    Coupled,
    Dynamic,
}

impl From<PipelineArg> for Pipeline {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Direct => Pipeline::Direct,
            PipelineArg::Percolation => Pipeline::Percolation,
            PipelineArg::Coupled => Pipeline::Coupled,
            PipelineArg::Dynamic => Pipeline::Dynamic,
        }
    }
}

fn load_source(src: &Source, lambda: Option<f64>, seed: u64) -> Result<DegreeSequence> {
    if let Some(p) = &src.deg {
        return read_degrees(p);
    }
    let (Some(dist), Some(n)) = (&src.dist, src.n) else {
        return Err(Error::InvalidConfig(
            "a degree source is required: --deg, or --dist with --n".into(),
        ));
    };
    let dist = read_dist(dist)?;
    let mode = src.mode.unwrap_or(if lambda.is_some() {
        Mode::Tuned
    } else {
        Mode::Materialized
    });
    match mode {
        Mode::Tuned => {
            let lambda = lambda.ok_or_else(|| {
                Error::InvalidConfig("--mode tuned needs --lambda".into())
            })?;
            tune_to_critical(&dist, n, lambda, seed)
        }
        Mode::Materialized => materialize_law(&dist, n, seed),
        Mode::Iid => sample_iid(&dist, n, seed),
    }
}

fn check_source(src: &Source) -> Result<()> {
    for p in src.deg.iter().chain(&src.dist) {
        if !p.exists() {
            return Err(Error::InvalidConfig(format!("{} does not exist", p.display())));
        }
    }
    if src.deg.is_none() && src.dist.is_none() {
        return Err(Error::InvalidConfig(
            "a degree source is required: --deg, or --dist with --n".into(),
        ));
    }
    Ok(())
}

/// Writes to the path, or to standard output.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut so = std::io::stdout().lock();
            match so.write_all(bytes).and_then(|_| so.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("in-memory write");
    buf
}

/// Prints a summary when the main output went to a file.
fn summary(common: &Common, pairs: &[(&str, serde_json::Value)]) {
    if common.out.is_none() {
        return;
    }
    match common.format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect();
            println!("{}", serde_json::to_string_pretty(&map).expect("json"));
        }
        Format::Csv => {
            println!("metric,value");
            for (k, v) in pairs {
                match v {
                    serde_json::Value::String(s) => println!("{k},{s}"),
                    v => println!("{k},{v}"),
                }
            }
        }
    }
}

fn dry_run(common: &Common, what: &str) -> bool {
    if common.dry_run {
        eprintln!("configuration valid: {what}");
    }
    common.dry_run
}

fn cmd_gen(a: &GenArgs) -> Result<bool> {
    check_source(&a.source)?;
    if a.source.deg.is_some() {
        return Err(Error::InvalidConfig("gen needs --dist and --n, not --deg".into()));
    }
    let seed = a.common.seed()?;
    if dry_run(&a.common, "gen") {
        return Ok(true);
    }
    let ds = load_source(&a.source, a.lambda, seed)?;
    match &a.common.out {
        Some(p) => write_degrees(&ds, p)?,
        None => emit(None, cmcrit::io::degrees_text(&ds).as_bytes())?,
    }
    let st = ds.stats::<f64>();
    summary(
        &a.common,
        &[
            ("n", ds.n().into()),
            ("ell_n", st.ell_n.into()),
            ("nu_n", st.nu_n.into()),
        ],
    );
    Ok(true)
}

fn cmd_explore(a: &ExploreArgs) -> Result<bool> {
    check_source(&a.source)?;
    let seed = a.common.seed()?;
    if dry_run(&a.common, "explore") {
        return Ok(true);
    }
    let ds = load_source(&a.source, a.lambda, substream(seed, 0))?;
    let graph_seed = substream(seed, 1);
    let vector = if let Some(trace_path) = &a.trace {
        let trace = explore(&ds, graph_seed);
        write_atomic(trace_path, &render(|b| trace.write_csv(b)))?;
        let comps = explore_components(&ds, graph_seed);
        explored_vector(&comps, ds.n())
    } else {
        explored_vector(&explore_components(&ds, graph_seed), ds.n())
    };
    emit(a.common.out.as_deref(), &render(|b| vector.write_csv(b)))?;
    summary(
        &a.common,
        &[
            ("n", ds.n().into()),
            ("components", vector.entries.len().into()),
            ("largest", vector.entries.first().map_or(0, |e| e.size).into()),
            ("largest_rescaled", vector.rescaled(0).into()),
        ],
    );
    Ok(true)
}

fn cmd_percolate(a: &PercolateArgs) -> Result<bool> {
    check_source(&a.source)?;
    let seed = a.common.seed()?;
    if a.lambda.is_none() && a.p.is_none() && a.grid.is_none() {
        return Err(Error::InvalidConfig(
            "one of --lambda, --p or --grid is required".into(),
        ));
    }
    if dry_run(&a.common, "percolate") {
        return Ok(true);
    }
    let ds = load_source(&a.source, None, substream(seed, 0))?;
    let sim_seed = substream(seed, 1);
    if let Some(grid) = &a.grid {
        let g = coupled_grid(&ds, grid, sim_seed)?;
        emit(a.common.out.as_deref(), &render(|b| g.write_csv(b)))?;
        summary(
            &a.common,
            &[
                ("n", ds.n().into()),
                ("grid_points", grid.len().into()),
                ("refinement_holds", g.refinement_holds().into()),
            ],
        );
        return Ok(true);
    }
    let p = match (a.p, a.lambda) {
        (Some(p), _) => p,
        (None, Some(l)) => p_critical(ds.stats::<f64>().nu_n, ds.n(), l)?,
        _ => unreachable!("checked above"),
    };
    let vector = match a.method {
        Method::Explosion => percolate_via_explosion(&ds, p, sim_seed)?.component_vector(),
        Method::Direct => {
            let g = uniform_match(&ds, substream(sim_seed, 0))?;
            let kept = percolate_direct(&g, p, substream(sim_seed, 1))?;
            cmcrit::multigraph::to_component_vector(&cmcrit::multigraph::components(&kept), ds.n())
        }
    };
    emit(a.common.out.as_deref(), &render(|b| vector.write_csv(b)))?;
    summary(
        &a.common,
        &[
            ("n", ds.n().into()),
            ("p", p.into()),
            ("largest", vector.entries.first().map_or(0, |e| e.size).into()),
        ],
    );
    Ok(true)
}

fn cmd_dynamic(a: &DynamicArgs) -> Result<bool> {
    check_source(&a.source)?;
    let seed = a.common.seed()?;
    if a.lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("--lambda-grid is required".into()));
    }
    if dry_run(&a.common, "dynamic") {
        return Ok(true);
    }
    let ds = load_source(&a.source, None, substream(seed, 0))?;
    let rows = trajectory(&ds, &a.lambda_grid, a.top_k, substream(seed, 1))?;
    emit(a.common.out.as_deref(), &render(|b| write_trajectory_csv(&rows, b)))?;
    summary(
        &a.common,
        &[
            ("n", ds.n().into()),
            ("rows", rows.len().into()),
            (
                "bad_edges",
                rows.last().map_or(0, |r| r.bad_edges_so_far).into(),
            ),
        ],
    );
    Ok(true)
}

fn read_particles(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let (mut m, mut w) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            msg: format!("line {}: expected mass[,weight]", i + 1),
        };
        let mut parts = line.split(',').map(|x| x.trim().parse::<f64>());
        let mass = parts.next().ok_or_else(bad)?.map_err(|_| bad())?;
        let weight = match parts.next() {
            Some(x) => x.map_err(|_| bad())?,
            None => mass,
        };
        m.push(mass);
        w.push(weight);
    }
    Ok((m, w))
}

fn cmd_coalescent(a: &CoalescentArgs) -> Result<bool> {
    let seed = a.common.seed()?;
    let (mass, weight) = match (&a.input, &a.masses) {
        (Some(p), None) => read_particles(p)?,
        (None, Some(m)) => (m.clone(), m.clone()),
        _ => {
            return Err(Error::InvalidConfig(
                "exactly one of --input or --masses is required".into(),
            ))
        }
    };
    let state = CoalescentState::new(mass, weight)?;
    if dry_run(&a.common, "coalescent") {
        return Ok(true);
    }
    let out = simulate_with(
        &state,
        a.t_end,
        seed,
        SimulateOptions {
            record_log: true,
            audit_rate: false,
        },
    )?;
    emit(a.common.out.as_deref(), &render(|b| write_merge_log(&out.log, b)))?;
    let ordered: Vec<[f64; 2]> = out.state.ordered().into_iter().map(|(m, w)| [m, w]).collect();
    summary(
        &a.common,
        &[
            ("merges", out.log.len().into()),
            ("particles", ordered.len().into()),
            ("largest_mass", ordered.first().map_or(0.0, |p| p[0]).into()),
        ],
    );
    Ok(true)
}

fn limit_setup(src: &LimitSource) -> Result<(LimitParams<f64>, Scaling<f64>, f64)> {
    let dist = read_dist(&src.dist)?;
    let (params, scaling) = match src.kind {
        LimitKind::Plain => (limit_params(&dist, src.lambda)?, Scaling::identity()),
        LimitKind::Critical => {
            let (law, _) = critical_law(&dist, 1.0)?;
            (limit_params(&law, src.lambda)?, Scaling::identity())
        }
        LimitKind::Percolation => {
            let pl = percolation_limit_params(&dist, dist.nu(), src.lambda)?;
            let s = match src.scaling {
                ScalingKind::Rescaled => pl.rescaled_scaling(),
                ScalingKind::Stated => pl.stated_scaling(),
            };
            (pl.params, s)
        }
    };
    let dt = src.dt.unwrap_or(src.horizon / (1u64 << 20) as f64);
    Ok((params, scaling, dt))
}

fn cmd_limit(a: &LimitArgs) -> Result<bool> {
    let seed = a.common.seed()?;
    let (params, scaling, dt) = limit_setup(&a.limit)?;
    let spec = LimitSpec {
        horizon: a.limit.horizon,
        dt,
        replicas: a.replicas,
        top_k: a.top_k,
        seed,
        jobs: a.common.jobs,
    };
    if dry_run(&a.common, "limit") {
        return Ok(true);
    }
    let e = limit_ensemble(&params, scaling, &spec)?;
    emit(a.common.out.as_deref(), &render(|b| e.write_csv(b)))?;
    summary(
        &a.common,
        &[
            ("mu", params.mu.into()),
            ("eta", params.eta.into()),
            ("beta", params.beta.into()),
            ("replicas", a.replicas.into()),
            ("truncated", e.truncated_count().into()),
        ],
    );
    Ok(true)
}

fn cmd_compare(a: &CompareArgs) -> Result<bool> {
    let seed = a.common.seed()?;
    let table = EnsembleTable::read_csv(&a.table)?;
    let (params, scaling, dt) = limit_setup(&a.limit)?;
    let spec = LimitSpec {
        horizon: a.limit.horizon,
        dt,
        replicas: a.limit_replicas,
        top_k: a.ranks.iter().copied().max().unwrap_or(1),
        seed: substream(seed, 0),
        jobs: a.common.jobs,
    };
    if dry_run(&a.common, "compare") {
        return Ok(true);
    }
    let e = limit_ensemble(&params, scaling, &spec)?;
    if let Some(p) = &a.limit_out {
        write_atomic(p, &render(|b| e.write_csv(b)))?;
    }
    let thresholds = CompareThresholds {
        band_quantile: a.band_quantile,
        ..CompareThresholds::default()
    };
    let report = compare_to_limit(
        &table,
        a.n,
        a.limit.lambda,
        &e,
        &a.ranks,
        &thresholds,
        substream(seed, 1),
    )?;
    let s = Summary::new("compare", &thresholds, &report, report.pass)?;
    match a.common.format {
        Format::Json => emit(a.common.out.as_deref(), format!("{}\n", s.to_json()).as_bytes())?,
        Format::Csv => {
            let body = render(|b| {
                writeln!(b, "rank,ks,p_value,ci_low,ci_high,band,pass")?;
                for r in &report.ranks {
                    writeln!(
                        b,
                        "{},{},{},{},{},{},{}",
                        r.rank, r.ks, r.p_value, r.ci.0, r.ci.1, r.band, r.pass
                    )?;
                }
                if let Some(t) = report.surplus {
                    writeln!(b, "surplus,{},{},,,,{}", t.statistic, t.p_value, report.pass)?;
                }
                Ok(())
            });
            emit(a.common.out.as_deref(), &body)?;
        }
    }
    Ok(report.pass)
}

fn cmd_sweep(a: &SweepArgs) -> Result<bool> {
    let seed = a.common.seed()?;
    let pipeline: Pipeline = a.pipeline.into();
    let mode = a.mode.map(DegreeMode::from).unwrap_or(match pipeline {
        Pipeline::Direct => DegreeMode::Tuned,
        _ => DegreeMode::Materialized,
    });
    let cfg = ExperimentConfig {
        experiment: a.name.clone(),
        dist: read_dist(&a.dist)?,
        degree_mode: mode,
        n_grid: a.n_grid.clone(),
        lambda_grid: a.grid.clone(),
        replicas: a.replicas,
        seed,
        pipeline,
        top_k: a.top_k,
        output: a.common.out.clone(),
        jobs: a.common.jobs,
    };
    cfg.validate()?;
    if dry_run(&a.common, "sweep") {
        return Ok(true);
    }
    let table = run_experiment(&cfg)?;
    if a.common.out.is_none() {
        emit(None, table.to_csv_string().as_bytes())?;
    }
    summary(
        &a.common,
        &[
            ("experiment", a.name.clone().into()),
            ("rows", table.rows.len().into()),
            ("valid", table.validate().into()),
        ],
    );
    Ok(true)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Explore(a) => cmd_explore(a),
        Command::Percolate(a) => cmd_percolate(a),
        Command::Dynamic(a) => cmd_dynamic(a),
        Command::Coalescent(a) => cmd_coalescent(a),
        Command::Limit(a) => cmd_limit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
