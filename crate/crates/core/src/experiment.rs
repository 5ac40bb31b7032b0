//! Configuration-driven simulation study: simulate design and noise fields
//! on a graph, split the nodes into connected learning and test sets, fit
//! wavelet sieve estimators across levels and compare against an i.i.d.
//! reference sample of the same size.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmrf::{
    check_eta, couple_fields, gibbs_chain, gibbs_coupled_pair, to_uniform, ChainConfig, FieldSample,
    GmrfSpec,
};
use crate::graph::{concliques, connected_split, knn_geometric_graph, load_graph, torus_lattice, Graph};
use crate::regression::{
    auto_rho, default_rho, fit, mean_squared_error, predict, Dataset, DEFAULT_SVD_RTOL,
};
use crate::rng::{derive_seed, NormalSampler};
use crate::wavelet::{cascade, PhiTable, WaveletKind, WaveletSieve, DEFAULT_RESOLUTION};

// stream labels under the root seed
const GRAPH_STREAM: u64 = 0x0067_7261_7068;
const REPLICATION_BASE: u64 = 1 << 32;
// stream labels under a replication seed
const DESIGN_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;
const REFERENCE_STREAM: u64 = 4;
const EXTRA_DESIGN_BASE: u64 = 16;

/// `(2 - 3 x2^2 + 4 x2^4) exp(-(2 x1 - 1)^2)`.
pub fn m_bivariate(x1: f64, x2: f64) -> f64 {
    (2.0 - 3.0 * x2.powi(2) + 4.0 * x2.powi(4)) * (-(2.0 * x1 - 1.0).powi(2)).exp()
}

/// `2 + 8x^2 - (1.7x)^4` on `[0, 0.7]`, `2(sqrt(4(x - 0.7)) + 1)` on `(0.7, 1]`.
pub fn m_univariate(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "univariate regression function is defined on [0, 1], got {x}"
        )));
    }
    Ok(if x <= 0.7 {
        2.0 + 8.0 * x * x - (1.7 * x).powi(4)
    } else {
        2.0 * ((4.0 * (x - 0.7)).sqrt() + 1.0)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    /// Edge-list file, see [`crate::graph::parse_edge_list`].
    File { path: PathBuf },
    /// 4-nearest-neighbour torus plus `chords` random extra edges.
    Torus {
        rows: usize,
        cols: usize,
        #[serde(default)]
        chords: usize,
    },
    /// Symmetrized k-nearest-neighbour graph of uniform points in the unit square.
    Knn { points: usize, k: usize },
}

impl GraphSource {
    /// Builds the graph; random parts draw from `seed`.
    pub fn build(&self, seed: u64) -> Result<Graph> {
        match self {
            GraphSource::File { path } => load_graph(path),
            GraphSource::Torus { rows, cols, chords } => {
                let g = torus_lattice(*rows, *cols)?;
                if *chords == 0 {
                    Ok(g)
                } else {
                    g.with_random_chords(*chords, seed)
                }
            }
            GraphSource::Knn { points, k } => knn_geometric_graph(*points, *k, seed),
        }
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSource::File { path } => write!(f, "file:{}", path.display()),
            GraphSource::Torus { rows, cols, chords: 0 } => write!(f, "torus:{rows}x{cols}"),
            GraphSource::Torus { rows, cols, chords } => write!(f, "torus:{rows}x{cols}+{chords}"),
            GraphSource::Knn { points, k } => write!(f, "knn:{points},{k}"),
        }
    }
}

/// Accepts `torus:RxC`, `torus:RxC+CHORDS`, `knn:POINTS,K` and `file:PATH`.
impl FromStr for GraphSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognised graph source {s:?}"));
        let num = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "file" if !rest.is_empty() => Ok(GraphSource::File { path: rest.into() }),
            "torus" => {
                let (dims, chords) = match rest.split_once('+') {
                    Some((d, c)) => (d, num(c)?),
                    None => (rest, 0),
                };
                let (r, c) = dims.split_once(['x', 'X']).ok_or_else(bad)?;
                Ok(GraphSource::Torus {
                    rows: num(r)?,
                    cols: num(c)?,
                    chords,
                })
            }
            "knn" => {
                let (p, k) = rest.split_once(',').ok_or_else(bad)?;
                Ok(GraphSource::Knn {
                    points: num(p)?,
                    k: num(k)?,
                })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionFunction {
    /// [`m_bivariate`], `d = 2`.
    Bivariate,
    /// [`m_univariate`], `d = 1`.
    Univariate,
    /// Arithmetic expression in `x1..xd` (`x` is an alias of `x1`), e.g.
    /// `math::sin(6.28 * x)`.
    Expression { expression: String, dim: usize },
}

impl RegressionFunction {
    pub fn dim(&self) -> usize {
        match self {
            RegressionFunction::Bivariate => 2,
            RegressionFunction::Univariate => 1,
            RegressionFunction::Expression { dim, .. } => *dim,
        }
    }

    pub fn compile(&self) -> Result<Target> {
        let expr = match self {
            RegressionFunction::Expression { expression, dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidArgument("expression dimension must be >= 1".into()));
                }
                let node = evalexpr::build_operator_tree::<DefaultNumericTypes>(expression)
                    .map_err(|e| Error::Expression(format!("{expression:?}: {e}")))?;
                let allowed: Vec<String> = std::iter::once("x".to_string())
                    .chain((1..=*dim).map(|i| format!("x{i}")))
                    .collect();
                if let Some(v) = node.iter_variable_identifiers().find(|v| !allowed.iter().any(|a| a == v)) {
                    return Err(Error::Expression(format!(
                        "unknown variable {v:?} in {expression:?}; use x1..x{dim}"
                    )));
                }
                Some(node)
            }
            _ => None,
        };
        let target = Target {
            function: self.clone(),
            expr,
        };
        // surface evaluation errors (e.g. non-numeric results) before simulating
        target.eval(&vec![0.5; self.dim()])?;
        Ok(target)
    }
}

/// A compiled regression function.
#[derive(Debug, Clone)]
pub struct Target {
    function: RegressionFunction,
    expr: Option<Node<DefaultNumericTypes>>,
}

impl Target {
    pub fn dim(&self) -> usize {
        self.function.dim()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        match (&self.function, &self.expr) {
            (RegressionFunction::Bivariate, _) => Ok(m_bivariate(x[0], x[1])),
            (RegressionFunction::Univariate, _) => m_univariate(x[0]),
            (_, Some(node)) => {
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                let set = |ctx: &mut HashMapContext<DefaultNumericTypes>, k: &str, v: f64| {
                    ctx.set_value(k.into(), Value::Float(v))
                        .map_err(|e| Error::Expression(e.to_string()))
                };
                set(&mut ctx, "x", x[0])?;
                for (i, &v) in x.iter().enumerate() {
                    set(&mut ctx, &format!("x{}", i + 1), v)?;
                }
                let v = node
                    .eval_number_with_context(&ctx)
                    .map_err(|e| Error::Expression(e.to_string()))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Expression(format!("non-finite value {v} at {x:?}")))
                }
            }
            (RegressionFunction::Expression { .. }, None) => unreachable!("compiled expression"),
        }
    }
}

/// How the first two design components are made dependent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopulaMode {
    /// Correlated innovations at every Gibbs update.
    #[default]
    Innovations,
    /// Independent chains, then `rho Z1 + sqrt(1 - rho^2) Z2`.
    FinalFields,
}

/// Experiment description; JSON keys match the field names. Missing keys
/// take the bivariate preset values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub function: RegressionFunction,
    /// One dependence parameter per design component followed by the noise
    /// component (`d + 1` values).
    pub etas: Vec<f64>,
    pub copula_rho: f64,
    pub copula_mode: CopulaMode,
    /// Multiplier of the noise field in `Y = m(X) + noise_scale * Z`.
    pub noise_scale: f64,
    pub wavelets: Vec<WaveletKind>,
    pub levels: Vec<i32>,
    pub replications: usize,
    /// Sweep counts; the seed is ignored (streams derive from `seed`).
    pub chain: ChainConfig,
    pub test_fraction: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Truncation constant `c` in `rho = c ln n`; `None` uses [`auto_rho`].
    pub truncation_c: Option<f64>,
    pub svd_rtol: f64,
    pub cascade_resolution: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::bivariate()
    }
}

impl ExperimentConfig {
    /// Two copula-coupled design fields mapped to the unit square,
    /// `Y = m_bivariate(X) + Z3`.
    pub fn bivariate() -> Self {
        Self {
            graph: GraphSource::Torus {
                rows: 18,
                cols: 18,
                chords: 60,
            },
            function: RegressionFunction::Bivariate,
            etas: vec![0.12, -0.18, 0.12],
            copula_rho: 0.7,
            copula_mode: CopulaMode::Innovations,
            noise_scale: 1.0,
            wavelets: vec![WaveletKind::Haar, WaveletKind::D4],
            levels: vec![1, 2, 3, 4],
            replications: 50,
            chain: ChainConfig {
                iterations: 3000,
                burn_in: 600,
                thin: 1,
                seed: 0,
            },
            test_fraction: 0.3,
            seed: 20_200_101,
            out_dir: None,
            truncation_c: None,
            svd_rtol: DEFAULT_SVD_RTOL,
            cascade_resolution: DEFAULT_RESOLUTION,
        }
    }

    /// One design field mapped to `[0, 1]`, `Y = m_univariate(X) + Z2 / 2`.
    pub fn univariate() -> Self {
        Self {
            graph: GraphSource::Knn { points: 330, k: 5 },
            function: RegressionFunction::Univariate,
            etas: vec![0.15, 0.15],
            noise_scale: 0.5,
            levels: vec![2, 3, 4, 5, 6],
            ..Self::bivariate()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "bivariate" => Ok(Self::bivariate()),
            "univariate" => Ok(Self::univariate()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset {other:?} (expected bivariate or univariate)"
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks everything that does not need the graph.
    pub fn validate_basic(&self) -> Result<()> {
        let d = self.function.dim();
        if self.etas.len() != d + 1 {
            return Err(Error::InvalidArgument(format!(
                "need {} etas ({d} design components and one noise component), got {}",
                d + 1,
                self.etas.len()
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be >= 1".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidArgument("level list is empty".into()));
        }
        if self.wavelets.is_empty() {
            return Err(Error::InvalidArgument("wavelet list is empty".into()));
        }
        if !(self.copula_rho.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "copula correlation must satisfy |rho| < 1, got {}",
                self.copula_rho
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise scale must be finite and >= 0, got {}",
                self.noise_scale
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if let Some(c) = self.truncation_c {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("truncation constant must be > 0, got {c}")));
            }
        }
        if !(1..=24).contains(&self.cascade_resolution) {
            return Err(Error::InvalidArgument(format!(
                "cascade resolution must lie in 1..=24, got {}",
                self.cascade_resolution
            )));
        }
        self.chain.validate()
    }

    /// Full validation including the admissible range of every eta.
    pub fn validate(&self) -> Result<Graph> {
        self.validate_basic()?;
        self.function.compile()?;
        let g = self.graph.build(derive_seed(self.seed, GRAPH_STREAM))?;
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        for &eta in &self.etas {
            check_eta(&g, eta)?;
        }
        Ok(g)
    }
}

/// Errors of one replication for one `(wavelet, level)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub wavelet: WaveletKind,
    pub j: i32,
    pub l2: f64,
    pub ref_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub learn_size: usize,
    pub test_size: usize,
    pub learn_connected: bool,
    pub cells: Vec<CellError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub wavelet: WaveletKind,
    pub j: i32,
    pub mean_l2: f64,
    pub sd_l2: f64,
    pub ref_mean_l2: f64,
    pub ref_sd_l2: f64,
    pub n_reps: usize,
}

/// Rows ordered by configured wavelet, then configured level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn row(&self, wavelet: WaveletKind, j: i32) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.wavelet == wavelet && r.j == j)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("wavelet,j,mean_l2,sd_l2,ref_mean_l2,ref_sd_l2,n_reps\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.wavelet, r.j, r.mean_l2, r.sd_l2, r.ref_mean_l2, r.ref_sd_l2, r.n_reps
            );
        }
        out
    }

    /// Fixed-width table, standard deviations in parentheses.
    pub fn to_pretty(&self) -> String {
        let mut out = format!(
            "{:<8}{:>4}  {:<22}{:<22}{}\n",
            "wavelet", "j", "field L2 (sd)", "i.i.d. L2 (sd)", "better"
        );
        for r in &self.rows {
            let field = format!("{:.4} ({:.4})", r.mean_l2, r.sd_l2);
            let reference = format!("{:.4} ({:.4})", r.ref_mean_l2, r.ref_sd_l2);
            let _ = writeln!(
                out,
                "{:<8}{:>4}  {:<22}{:<22}{}",
                r.wavelet.name(),
                r.j,
                field,
                reference,
                better_label(r)
            );
        }
        out
    }
}

fn better_label(r: &ResultRow) -> &'static str {
    match r.ref_mean_l2.partial_cmp(&r.mean_l2) {
        Some(std::cmp::Ordering::Less) => "iid",
        Some(std::cmp::Ordering::Greater) => "field",
        _ => "tie",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub table: ResultTable,
    pub replications: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
}

/// Contents of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub table: ResultTable,
    pub failures: Vec<ReplicationFailure>,
}

impl ResultsFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct Prepared<'g> {
    cfg: &'g ExperimentConfig,
    graph: &'g Graph,
    partition: crate::graph::ConcliquePartition,
    specs: Vec<GmrfSpec<'g>>,
    target: Target,
    tables: Vec<(WaveletKind, PhiTable)>,
}

/// Runs all replications (in parallel) and aggregates them.
///
/// A failing replication is logged and left out; every row reports how many
/// replications completed. Fails only if none completes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    let graph = cfg.validate()?;
    let specs = cfg
        .etas
        .iter()
        .map(|&eta| GmrfSpec::stationary(&graph, 0.0, eta, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let tables = cfg
        .wavelets
        .iter()
        .map(|&w| Ok((w, cascade(&w.filter(), cfg.cascade_resolution)?)))
        .collect::<Result<Vec<_>>>()?;
    let prep = Prepared {
        cfg,
        graph: &graph,
        partition: concliques(&graph),
        specs,
        target: cfg.function.compile()?,
        tables,
    };
    log::info!(
        "experiment: {} nodes, {} edges, {} concliques, {} replications",
        graph.node_count(),
        graph.edge_count(),
        prep.partition.len(),
        cfg.replications
    );

    let mut outcomes: Vec<(usize, Result<ReplicationRecord>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| (rep, run_replication(&prep, rep)))
        .collect();
    outcomes.sort_by_key(|(rep, _)| *rep);

    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(record) => replications.push(record),
            Err(e) => {
                log::error!("replication {rep} failed: {e}");
                failures.push(ReplicationFailure {
                    replication: rep,
                    cause: e.to_string(),
                });
            }
        }
    }
    if replications.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "all {} replications failed; first cause: {}",
            cfg.replications, failures[0].cause
        )));
    }
    let table = aggregate(cfg, &replications);
    for r in &table.rows {
        log::info!(
            "{} j={}: field {:.4}, iid {:.4}, ref - field = {:+.4} ({} better)",
            r.wavelet,
            r.j,
            r.mean_l2,
            r.ref_mean_l2,
            r.ref_mean_l2 - r.mean_l2,
            better_label(r)
        );
    }
    Ok(ExperimentRun {
        config: cfg.clone(),
        table,
        replications,
        failures,
    })
}

fn aggregate(cfg: &ExperimentConfig, records: &[ReplicationRecord]) -> ResultTable {
    let mut rows = Vec::new();
    for &wavelet in &cfg.wavelets {
        for &j in &cfg.levels {
            let cells: Vec<&CellError> = records
                .iter()
                .flat_map(|r| r.cells.iter())
                .filter(|c| c.wavelet == wavelet && c.j == j)
                .collect();
            let field: Vec<f64> = cells.iter().map(|c| c.l2).collect();
            let reference: Vec<f64> = cells.iter().map(|c| c.ref_l2).collect();
            let (mean_l2, sd_l2) = mean_sd(&field);
            let (ref_mean_l2, ref_sd_l2) = mean_sd(&reference);
            rows.push(ResultRow {
                wavelet,
                j,
                mean_l2,
                sd_l2,
                ref_mean_l2,
                ref_sd_l2,
                n_reps: cells.len(),
            });
        }
    }
    ResultTable { rows }
}

/// Mean and sample standard deviation (`n - 1` denominator, 0 for `n = 1`).
fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_replication(prep: &Prepared<'_>, rep: usize) -> Result<ReplicationRecord> {
    let cfg = prep.cfg;
    let seed = derive_seed(cfg.seed, REPLICATION_BASE + rep as u64);
    let d = prep.target.dim();
    let chain = |label: u64| ChainConfig {
        seed: derive_seed(seed, label),
        ..cfg.chain
    };

    let mut design: Vec<FieldSample> = Vec::with_capacity(d);
    if d >= 2 {
        let (z1, z2) = match cfg.copula_mode {
            CopulaMode::Innovations => gibbs_coupled_pair(
                &prep.specs[0],
                &prep.specs[1],
                &prep.partition,
                &chain(DESIGN_STREAM),
                cfg.copula_rho,
            )?,
            CopulaMode::FinalFields => {
                let z1 = gibbs_chain(&prep.specs[0], &prep.partition, &chain(DESIGN_STREAM), false)?.state;
                let z2 = gibbs_chain(
                    &prep.specs[1],
                    &prep.partition,
                    &chain(EXTRA_DESIGN_BASE + 1),
                    false,
                )?
                .state;
                let z2 = couple_fields(&z1, &z2, cfg.copula_rho)?;
                (z1, z2)
            }
        };
        design.push(z1);
        design.push(z2);
    } else {
        design.push(gibbs_chain(&prep.specs[0], &prep.partition, &chain(DESIGN_STREAM), false)?.state);
    }
    for i in design.len()..d {
        let z = gibbs_chain(&prep.specs[i], &prep.partition, &chain(EXTRA_DESIGN_BASE + i as u64), false)?;
        design.push(z.state);
    }
    let noise = gibbs_chain(&prep.specs[d], &prep.partition, &chain(NOISE_STREAM), false)?.state;

    let uniform = design
        .iter()
        .map(|z| to_uniform(z, 0.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let n = prep.graph.node_count();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|s| uniform.iter().map(|u| u.values[s]).collect())
        .collect();
    let m: Vec<f64> = x.iter().map(|p| prep.target.eval(p)).collect::<Result<_>>()?;
    let y: Vec<f64> = m
        .iter()
        .zip(&noise.values)
        .map(|(mv, z)| mv + cfg.noise_scale * z)
        .collect();

    let split = connected_split(prep.graph, cfg.test_fraction, derive_seed(seed, SPLIT_STREAM))?;
    let pick = |idx: &[usize], v: &[Vec<f64>]| idx.iter().map(|&s| v[s].clone()).collect::<Vec<_>>();
    let learn = Dataset::new(
        pick(&split.learn, &x),
        split.learn.iter().map(|&s| y[s]).collect(),
    )?;
    let test_x = pick(&split.test, &x);
    let test_m: Vec<f64> = split.test.iter().map(|&s| m[s]).collect();

    let (ref_learn, ref_test_x, ref_test_m) =
        reference_sample(prep, split.learn.len(), split.test.len(), derive_seed(seed, REFERENCE_STREAM))?;

    let mut cells = Vec::with_capacity(prep.tables.len() * cfg.levels.len());
    for (wavelet, table) in &prep.tables {
        for &j in &cfg.levels {
            let sieve = WaveletSieve::unit_cube(wavelet.filter(), d, j)?;
            let l2 = sieve_error(cfg, &sieve, table, &learn, &test_x, &test_m)?;
            let ref_l2 = sieve_error(cfg, &sieve, table, &ref_learn, &ref_test_x, &ref_test_m)?;
            cells.push(CellError {
                wavelet: *wavelet,
                j,
                l2,
                ref_l2,
            });
        }
    }
    log::debug!("replication {rep} done");
    Ok(ReplicationRecord {
        replication: rep,
        seed,
        learn_size: split.learn.len(),
        test_size: split.test.len(),
        learn_connected: split.learn_connected,
        cells,
    })
}

/// Independent sites with the same marginal law as the field: Gaussian-copula
/// design (first two coordinates correlated by `copula_rho`) and i.i.d.
/// normal noise.
fn reference_sample(
    prep: &Prepared<'_>,
    learn_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<(Dataset, Vec<Vec<f64>>, Vec<f64>)> {
    let cfg = prep.cfg;
    let d = prep.target.dim();
    let rho = cfg.copula_rho;
    let orth = (1.0 - rho * rho).sqrt();
    let mut normals = NormalSampler::new(seed);
    let mut draw = || -> Result<(Vec<f64>, f64, f64)> {
        let mut z: Vec<f64> = (0..d).map(|_| normals.sample()).collect();
        if d >= 2 {
            z[1] = rho * z[0] + orth * z[1];
        }
        let x: Vec<f64> = z.iter().map(|&v| crate::rng::normal_cdf(v)).collect();
        let m = prep.target.eval(&x)?;
        let y = m + cfg.noise_scale * normals.sample();
        Ok((x, m, y))
    };
    let mut learn_x = Vec::with_capacity(learn_size);
    let mut learn_y = Vec::with_capacity(learn_size);
    for _ in 0..learn_size {
        let (x, _, y) = draw()?;
        learn_x.push(x);
        learn_y.push(y);
    }
    let mut test_x = Vec::with_capacity(test_size);
    let mut test_m = Vec::with_capacity(test_size);
    for _ in 0..test_size {
        let (x, m, _) = draw()?;
        test_x.push(x);
        test_m.push(m);
    }
    Ok((Dataset::new(learn_x, learn_y)?, test_x, test_m))
}

fn sieve_error(
    cfg: &ExperimentConfig,
    sieve: &WaveletSieve,
    table: &PhiTable,
    learn: &Dataset,
    test_x: &[Vec<f64>],
    test_m: &[f64],
) -> Result<f64> {
    let rho = match cfg.truncation_c {
        Some(c) => default_rho(learn.len(), c)?,
        None => auto_rho(learn.y())?,
    };
    let f = fit(learn, sieve, table, rho, cfg.svd_rtol)?;
    let pred: Vec<f64> = test_x.iter().map(|x| predict(&f, table, x)).collect();
    mean_squared_error(&pred, test_m)
}

/// Writes `results.csv`, `results.json` and `results.txt` for a table.
pub fn emit_table(
    table: &ResultTable,
    config: &ExperimentConfig,
    failures: &[ReplicationFailure],
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(Error::InvalidArgument("refusing to write an empty table".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = ResultsFile {
        seed: config.seed,
        config: config.clone(),
        table: table.clone(),
        failures: failures.to_vec(),
    };
    let outputs = [
        ("results.csv", table.to_csv()),
        ("results.json", serde_json::to_string_pretty(&file)?),
        ("results.txt", table.to_pretty()),
    ];
    let mut written = Vec::new();
    for (name, body) in outputs {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

impl ExperimentRun {
    /// `replication,seed,learn_size,test_size,learn_connected,wavelet,j,l2,ref_l2`
    /// with one line per replication and cell; failures are listed as comments.
    pub fn replication_csv(&self) -> String {
        let mut out =
            String::from("replication,seed,learn_size,test_size,learn_connected,wavelet,j,l2,ref_l2\n");
        for r in &self.replications {
            for c in &r.cells {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.replication,
                    r.seed,
                    r.learn_size,
                    r.test_size,
                    r.learn_connected,
                    c.wavelet,
                    c.j,
                    c.l2,
                    c.ref_l2
                );
            }
        }
        for f in &self.failures {
            let _ = writeln!(out, "# replication {} failed: {}", f.replication, f.cause);
        }
        out
    }

    /// [`emit_table`] plus `replications.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut written = emit_table(&self.table, &self.config, &self.failures, dir)?;
        let path = dir.join("replications.csv");
        std::fs::write(&path, self.replication_csv()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}
