use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use sieve_gmrf::experiment::{run_experiment, ExperimentConfig, GraphSource};
use sieve_gmrf::gmrf::{direct_sample, gibbs_chain, ChainConfig, GmrfSpec};
use sieve_gmrf::graph::{concliques, eta_range};
use sieve_gmrf::regression::{auto_rho, default_rho, fit, predict, select_level, Dataset, RegressionFit};
use sieve_gmrf::theory::{covering_bound, pairs_to_csv, rate_curve};
use sieve_gmrf::wavelet::{cascade, BoundingBox, WaveletKind, WaveletSieve, DEFAULT_RESOLUTION};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "SIEVE_GMRF_THREADS";

#[derive(Parser)]
#[command(name = "sieve-gmrf", version, about = "Gaussian Markov random field simulation and wavelet sieve regression")]
struct Cli {
    /// Log progress (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated simulation study and write results.{csv,json,txt}.
    Run(RunArgs),
    /// Simulate one field on a graph and print `node_id,value` CSV.
    Simulate(SimulateArgs),
    /// Fit a wavelet sieve estimator to an `x1,...,xd,y` CSV file.
    Fit(FitArgs),
    /// Evaluate a stored fit at the points of an `x1,...,xd[,y]` CSV file.
    Predict(PredictArgs),
    /// Tabulate a scaling function as `x,phi` CSV.
    Phi(PhiArgs),
    /// Shape of the convergence rate `(ln n)^(N+2) n^(-2r/(d+2r))`.
    RateCurve(RateArgs),
    /// Upper bound on the log covering number of a VC class.
    Covering(CoveringArgs),
    /// Admissible dependence parameters `(1/h0, 1/hm)` of a graph.
    EtaRange(GraphArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON config; missing keys take preset values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Starting preset when no config is given.
    #[arg(long, default_value = "bivariate")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config `out_dir`, else `results`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    /// `torus:RxC[+CHORDS]`, `knn:POINTS,K` or `file:PATH`.
    #[arg(long)]
    graph: Option<String>,
    /// Comma-separated levels, e.g. `1,2,3,4`.
    #[arg(long)]
    levels: Option<String>,
    /// Comma-separated wavelets, e.g. `haar,d4`.
    #[arg(long)]
    wavelets: Option<String>,
    /// Print the effective config and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Gibbs,
    Direct,
}

#[derive(clap::Args)]
struct GraphArgs {
    /// `torus:RxC[+CHORDS]`, `knn:POINTS,K` or `file:PATH`.
    #[arg(long)]
    graph: String,
    /// Seed for random graph construction.
    #[arg(long, default_value_t = 0)]
    graph_seed: u64,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, allow_hyphen_values = true)]
    eta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, value_enum, default_value_t = Method::Gibbs)]
    method: Method,
    #[arg(long, default_value_t = 3000)]
    iterations: usize,
    /// Default: 20% of the iterations.
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "d4")]
    wavelet: WaveletKind,
    /// Resolution level; default from the sample size and `--smoothness`.
    #[arg(long, allow_hyphen_values = true)]
    level: Option<i32>,
    /// Assumed Hoelder exponent for the default level.
    #[arg(long, default_value_t = 1.0)]
    smoothness: f64,
    /// Truncation constant `c` in `c ln n`; default is data-driven.
    #[arg(long)]
    truncation_c: Option<f64>,
    #[arg(long, default_value_t = sieve_gmrf::regression::DEFAULT_SVD_RTOL)]
    svd_rtol: f64,
    /// Fit JSON output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PredictArgs {
    #[arg(long)]
    fit: PathBuf,
    /// Points as CSV; with `--with-response` the last column is ignored.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    with_response: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PhiArgs {
    #[arg(long, default_value = "d4")]
    wavelet: WaveletKind,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RateArgs {
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Lattice dimension N.
    #[arg(long, default_value_t = 1)]
    lattice_dim: usize,
    /// Comma-separated sample sizes.
    #[arg(long, default_value = "256,512,1024,2048,4096,8192,16384")]
    sizes: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CoveringArgs {
    /// VC dimension of the subgraph class (>= 2).
    #[arg(long)]
    v: u32,
    /// Width `b - a` of the value range.
    #[arg(long)]
    width: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    if let Err(e) = init_threads() {
        return report(&e);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// Machine-readable error on stderr.
fn report(e: &anyhow::Error) -> ExitCode {
    let kind = e
        .downcast_ref::<sieve_gmrf::Error>()
        .map_or("cli", sieve_gmrf::Error::kind);
    let message = format!("{e:#}");
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::FAILURE
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run(a) => cmd_run(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Phi(a) => {
            let table = cascade(&a.wavelet.filter(), a.resolution)?;
            emit(a.out.as_deref(), &table.to_csv())
        }
        Command::RateCurve(a) => {
            let sizes = parse_list::<usize>(&a.sizes, "sizes")?;
            let values = rate_curve(a.d, a.r, a.lattice_dim, &sizes)?;
            let rows: Vec<(usize, f64)> = sizes.into_iter().zip(values).collect();
            emit(a.out.as_deref(), &pairs_to_csv(("size", "rate"), &rows))
        }
        Command::Covering(a) => {
            let bound = covering_bound(a.v, a.width, a.eps, a.p)?;
            emit(None, &format!("{}\n", json!({ "log_covering_bound": bound })))
        }
        Command::EtaRange(a) => {
            let g = build_graph(&a)?;
            let b = g.spectrum()?;
            let (lo, hi) = eta_range(&g)?;
            let out = json!({
                "nodes": g.node_count(),
                "edges": g.edge_count(),
                "h0": b.h0,
                "hm": b.hm,
                "eta_min": lo,
                "eta_max": hi,
            });
            emit(None, &(serde_json::to_string_pretty(&out)? + "\n"))
        }
    }
}

fn cmd_run(a: RunArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::read_json(path)?,
        None => ExperimentConfig::preset(&a.preset)?,
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = a.reps {
        cfg.replications = reps;
    }
    if let Some(g) = &a.graph {
        cfg.graph = g.parse::<GraphSource>()?;
    }
    if let Some(l) = &a.levels {
        cfg.levels = parse_list(l, "levels")?;
    }
    if let Some(w) = &a.wavelets {
        cfg.wavelets = parse_list(w, "wavelets")?;
    }
    if let Some(out) = &a.out {
        cfg.out_dir = Some(out.clone());
    }
    if a.dry_run {
        cfg.validate()?;
        return emit(None, &(cfg.to_json()? + "\n"));
    }
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    let run = run_experiment(&cfg)?;
    let written = run.write(&out_dir)?;
    emit(None, &run.table.to_pretty())?;
    if !run.failures.is_empty() {
        log::warn!("{} of {} replications failed", run.failures.len(), cfg.replications);
    }
    for path in written {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn build_graph(a: &GraphArgs) -> anyhow::Result<sieve_gmrf::graph::Graph> {
    Ok(a.graph.parse::<GraphSource>()?.build(a.graph_seed)?)
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let g = build_graph(&a.graph)?;
    let spec = GmrfSpec::stationary(&g, a.mean, a.eta, a.sigma2)?;
    let field = match a.method {
        Method::Direct => direct_sample(&spec, a.seed)?,
        Method::Gibbs => {
            let mut cfg = ChainConfig::new(a.iterations, a.seed);
            if let Some(b) = a.burn_in {
                cfg.burn_in = b;
            }
            gibbs_chain(&spec, &concliques(&g), &cfg, false)?.state
        }
    };
    emit(a.out.as_deref(), &field.to_csv())
}

fn cmd_fit(a: FitArgs) -> anyhow::Result<()> {
    let data = Dataset::read_csv(&a.data)?;
    if data.is_empty() {
        bail!("{} contains no observations", a.data.display());
    }
    let level = match a.level {
        Some(j) => j,
        None => select_level(data.len(), data.dim(), a.smoothness)?,
    };
    let bbox = BoundingBox::of_points(data.points()).expect("non-empty");
    let sieve = WaveletSieve::covering(a.wavelet.filter(), level, &bbox)?;
    let table = cascade(&a.wavelet.filter(), DEFAULT_RESOLUTION)?;
    let rho = match a.truncation_c {
        Some(c) => default_rho(data.len(), c)?,
        None => auto_rho(data.y())?,
    };
    let f = fit(&data, &sieve, &table, rho, a.svd_rtol)?;
    let r = f.svd_report();
    log::info!(
        "{} level {level}: {} functions, rank {}, condition {:.3e}",
        a.wavelet,
        sieve.len(),
        r.rank,
        r.condition_number
    );
    emit(a.out.as_deref(), &(f.to_json()? + "\n"))
}

fn cmd_predict(a: PredictArgs) -> anyhow::Result<()> {
    let path = &a.fit;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let f = RegressionFit::from_json(&text)?;
    let table = cascade(&f.sieve().filter().clone(), DEFAULT_RESOLUTION)?;
    let points = read_points(&a.data, a.with_response)?;
    let d = f.sieve().dim();
    let mut out = (1..=d).map(|i| format!("x{i},")).collect::<String>() + "yhat\n";
    for (line, p) in points.iter().enumerate() {
        if p.len() != d {
            bail!("point {} has {} coordinates, the fit expects {d}", line + 1, p.len());
        }
        for v in p {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", predict(&f, &table, p)));
    }
    emit(a.out.as_deref(), &out)
}

fn read_points(path: &Path, with_response: bool) -> anyhow::Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let mut p = match parsed {
            Ok(p) => p,
            Err(_) if idx == 0 => continue,
            Err(e) => bail!("{}:{}: {e}", path.display(), idx + 1),
        };
        if with_response {
            p.pop();
        }
        points.push(p);
    }
    Ok(points)
}

fn parse_list<T>(text: &str, what: &str) -> anyhow::Result<Vec<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let items = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow::anyhow!("invalid {what} entry {s:?}: {e}")))
        .collect::<anyhow::Result<Vec<T>>>()?;
    if items.is_empty() {
        bail!("{what} list is empty");
    }
    Ok(items)
}

fn emit(path: Option<&Path>, body: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(body.as_bytes()).and_then(|()| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}
