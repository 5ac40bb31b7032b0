//! Conditional-autoregressive (CAR) Gaussian Markov random fields on a graph.
//!
//! A field `Y` is specified node-wise by
//!
//! ```text
//! Y(s) | Y(-s) ~ N( alpha(s) + eta * sum_{t ~ s} (Y(t) - alpha(t)), tau2(s) )
//! ```
//!
//! which, when `(I - eta H)^{-1} T` is symmetric positive definite, is the
//! joint law `N(alpha, (I - eta H)^{-1} T)` with `T = diag(tau2)`.
//! Choosing `tau2(s) = sigma2 / [(I - eta H)^{-1}](s, s)` makes every
//! marginal variance equal to `sigma2`.
//!
//! Samples are drawn either by conclique-blocked Gibbs sweeps or exactly,
//! through a Cholesky factor of the (symmetrized) joint covariance.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{eta_range, ConcliquePartition, Graph};
use crate::rng::{normal_cdf, NormalSampler};

/// Symmetry tolerance for the joint covariance used by [`DirectSampler`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Checks `eta` against the admissible range of `g`. Edgeless graphs accept
/// every `eta` since `H = 0`.
pub fn check_eta(g: &Graph, eta: f64) -> Result<()> {
    if g.edge_count() == 0 {
        return Ok(());
    }
    let (lo, hi) = eta_range(g)?;
    if eta > lo && eta < hi {
        Ok(())
    } else {
        Err(Error::EtaOutOfRange { eta, lo, hi })
    }
}

fn system_inverse(g: &Graph, eta: f64) -> Result<DMatrix<f64>> {
    let n = g.node_count();
    let m = DMatrix::<f64>::identity(n, n) - eta * g.adjacency_matrix();
    m.try_inverse()
        .ok_or_else(|| Error::Singular(format!("I - eta H with eta = {eta}")))
}

/// Conditional variances giving unit marginal variances:
/// `tau2(s) = 1 / [(I - eta H)^{-1}](s, s)`.
pub fn tau_from_eta(g: &Graph, eta: f64) -> Result<Vec<f64>> {
    check_eta(g, eta)?;
    let inv = system_inverse(g, eta)?;
    (0..g.node_count())
        .map(|s| {
            let d = inv[(s, s)];
            if d > 0.0 && d.is_finite() {
                Ok(1.0 / d)
            } else {
                Err(Error::Singular(format!(
                    "diagonal entry {d} of (I - eta H)^-1 at node {s}"
                )))
            }
        })
        .collect()
}

/// CAR specification with equal neighbour weights `c(s, t) = eta H(s, t)`.
#[derive(Debug, Clone)]
pub struct GmrfSpec<'g> {
    graph: &'g Graph,
    alpha: Vec<f64>,
    eta: f64,
    tau2: Vec<f64>,
    sigma2: f64,
}

impl<'g> GmrfSpec<'g> {
    pub fn new(
        graph: &'g Graph,
        alpha: Vec<f64>,
        eta: f64,
        tau2: Vec<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        let n = graph.node_count();
        for len in [alpha.len(), tau2.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        if let Some(bad) = tau2.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "conditional variances must be positive, found {bad}"
            )));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "marginal variance must be positive, found {sigma2}"
            )));
        }
        check_eta(graph, eta)?;
        Ok(Self {
            graph,
            alpha,
            eta,
            tau2,
            sigma2,
        })
    }

    /// Constant mean `mean`, marginal variance `sigma2` at every node.
    pub fn stationary(graph: &'g Graph, mean: f64, eta: f64, sigma2: f64) -> Result<Self> {
        let tau2 = tau_from_eta(graph, eta)?
            .into_iter()
            .map(|t| sigma2 * t)
            .collect();
        Self::new(graph, vec![mean; graph.node_count()], eta, tau2, sigma2)
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tau2(&self) -> &[f64] {
        &self.tau2
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `(I - eta H)^{-1} T`. Not symmetrized.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let mut a = system_inverse(self.graph, self.eta)?;
        for (mut col, &t) in a.column_iter_mut().zip(&self.tau2) {
            col *= t;
        }
        Ok(a)
    }
}

/// Values of one field component on the nodes of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub component: String,
    pub values: Vec<f64>,
}

impl FieldSample {
    pub fn new(component: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            component: component.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `node_id,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id,value\n");
        for (s, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{s},{v}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Mean and variance of `Y(s)` given all other node values in `state`.
pub fn conditional_params(spec: &GmrfSpec<'_>, state: &[f64], s: usize) -> (f64, f64) {
    let alpha = &spec.alpha;
    let pull: f64 = spec
        .graph
        .neighbours(s)
        .iter()
        .map(|&t| state[t] - alpha[t])
        .sum();
    (alpha[s] + spec.eta * pull, spec.tau2[s])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Total number of full sweeps.
    pub iterations: usize,
    /// Sweeps discarded before states are retained.
    pub burn_in: usize,
    /// Retain every `thin`-th post-burn-in state.
    pub thin: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::new(3000, 0)
    }
}

impl ChainConfig {
    /// Burn-in of 20% of the sweeps, no thinning.
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in: iterations / 5,
            thin: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations > 0 && self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thinning interval must be >= 1".into()));
        }
        Ok(())
    }

    fn retains(&self, sweep: usize) -> bool {
        sweep > self.burn_in && (sweep - self.burn_in).is_multiple_of(self.thin)
    }
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub state: FieldSample,
    /// Retained post-burn-in states; empty unless requested.
    pub trace: Vec<Vec<f64>>,
}

fn check_partition(g: &Graph, partition: &ConcliquePartition) -> Result<()> {
    let covered: usize = partition.classes().iter().map(Vec::len).sum();
    if covered != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            found: covered,
        });
    }
    Ok(())
}

/// Conclique-blocked Gibbs sampler started at `alpha`.
///
/// Each sweep visits the classes in index order and redraws every node of the
/// current class (ascending ids) from its full conditional. `visit` sees each
/// retained state. Returns the final state.
pub fn gibbs_chain_visit<F>(
    spec: &GmrfSpec<'_>,
    partition: &ConcliquePartition,
    cfg: &ChainConfig,
    mut visit: F,
) -> Result<FieldSample>
where
    F: FnMut(&[f64]),
{
    cfg.validate()?;
    check_partition(spec.graph, partition)?;
    let mut state = spec.alpha.clone();
    let sd: Vec<f64> = spec.tau2.iter().map(|t| t.sqrt()).collect();
    let mut normals = NormalSampler::new(cfg.seed);
    for sweep in 1..=cfg.iterations {
        for class in partition.classes() {
            for &s in class {
                let (mean, _) = conditional_params(spec, &state, s);
                state[s] = mean + sd[s] * normals.sample();
            }
        }
        if cfg.retains(sweep) {
            visit(&state);
        }
    }
    Ok(FieldSample::new("gibbs", state))
}

pub fn gibbs_chain(
    spec: &GmrfSpec<'_>,
    partition: &ConcliquePartition,
    cfg: &ChainConfig,
    keep_trace: bool,
) -> Result<ChainRun> {
    let mut trace = Vec::new();
    let state = gibbs_chain_visit(spec, partition, cfg, |s| {
        if keep_trace {
            trace.push(s.to_vec());
        }
    })?;
    Ok(ChainRun { state, trace })
}

/// Runs two Gibbs chains on the same graph in lock-step. At every node update
/// the two standardized innovations are drawn as a Gaussian-copula pair with
/// correlation `rho` (see [`coupled_innovation_pairs`]).
pub fn gibbs_coupled_pair(
    first: &GmrfSpec<'_>,
    second: &GmrfSpec<'_>,
    partition: &ConcliquePartition,
    cfg: &ChainConfig,
    rho: f64,
) -> Result<(FieldSample, FieldSample)> {
    cfg.validate()?;
    check_rho(rho)?;
    if !std::ptr::eq(first.graph, second.graph) && first.graph != second.graph {
        return Err(Error::InvalidArgument(
            "coupled components must live on the same graph".into(),
        ));
    }
    check_partition(first.graph, partition)?;
    let mut x = first.alpha.clone();
    let mut y = second.alpha.clone();
    let sd_x: Vec<f64> = first.tau2.iter().map(|t| t.sqrt()).collect();
    let sd_y: Vec<f64> = second.tau2.iter().map(|t| t.sqrt()).collect();
    let orth = (1.0 - rho * rho).sqrt();
    let mut normals = NormalSampler::new(cfg.seed);
    for _ in 0..cfg.iterations {
        for class in partition.classes() {
            for &s in class {
                let u = normals.sample();
                let v = normals.sample();
                let (mx, _) = conditional_params(first, &x, s);
                let (my, _) = conditional_params(second, &y, s);
                x[s] = mx + sd_x[s] * u;
                y[s] = my + sd_y[s] * (rho * u + orth * v);
            }
        }
    }
    Ok((FieldSample::new("z1", x), FieldSample::new("z2", y)))
}

/// Exact sampler for `N(alpha, A)` with `A = (I - eta H)^{-1} T`.
///
/// When `A` is asymmetric beyond [`SYMMETRY_TOL`] it is replaced by
/// `(A + A^T) / 2`; the residual `max |A - A^T|` is kept in
/// [`DirectSampler::asymmetry`].
#[derive(Debug, Clone)]
pub struct DirectSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    asymmetry: f64,
}

impl DirectSampler {
    pub fn new(spec: &GmrfSpec<'_>) -> Result<Self> {
        let mut a = spec.covariance()?;
        let asymmetry = (&a - a.transpose()).amax();
        if asymmetry > SYMMETRY_TOL {
            log::warn!(
                "CAR covariance is asymmetric (max residual {asymmetry:.3e}); sampling its symmetric part"
            );
        }
        a = (&a + a.transpose()) * 0.5;
        let chol = a.cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite("symmetrized (I - eta H)^-1 T".into())
        })?;
        Ok(Self {
            mean: DVector::from_column_slice(spec.alpha()),
            factor: chol.l(),
            asymmetry,
        })
    }

    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn draw(&self, normals: &mut NormalSampler) -> Vec<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| normals.sample());
        (&self.mean + &self.factor * z).data.into()
    }
}

/// One exact draw; see [`DirectSampler`].
pub fn direct_sample(spec: &GmrfSpec<'_>, seed: u64) -> Result<FieldSample> {
    let sampler = DirectSampler::new(spec)?;
    Ok(FieldSample::new(
        "direct",
        sampler.draw(&mut NormalSampler::new(seed)),
    ))
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "copula correlation must satisfy |rho| < 1, got {rho}"
        )))
    }
}

/// Pairs `(U, rho U + sqrt(1 - rho^2) V)` of standard normals with
/// correlation `rho`.
pub fn coupled_innovation_pairs(rho: f64, count: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    check_rho(rho)?;
    let orth = (1.0 - rho * rho).sqrt();
    let mut normals = NormalSampler::new(seed);
    Ok((0..count)
        .map(|_| {
            let u = normals.sample();
            let v = normals.sample();
            (u, rho * u + orth * v)
        })
        .collect())
}

/// Couples two finished standard-normal fields: returns
/// `rho * first + sqrt(1 - rho^2) * second` node-wise.
pub fn couple_fields(first: &FieldSample, second: &FieldSample, rho: f64) -> Result<FieldSample> {
    check_rho(rho)?;
    if first.len() != second.len() {
        return Err(Error::DimensionMismatch {
            expected: first.len(),
            found: second.len(),
        });
    }
    let orth = (1.0 - rho * rho).sqrt();
    Ok(FieldSample::new(
        second.component.clone(),
        first
            .values
            .iter()
            .zip(&second.values)
            .map(|(a, b)| rho * a + orth * b)
            .collect(),
    ))
}

/// Applies the standard normal CDF to `(value - mean) / sd`.
pub fn to_uniform(field: &FieldSample, mean: f64, sd: f64) -> Result<FieldSample> {
    if !(sd > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "standard deviation must be positive, got {sd}"
        )));
    }
    Ok(FieldSample::new(
        field.component.clone(),
        field
            .values
            .iter()
            .map(|v| normal_cdf((v - mean) / sd))
            .collect(),
    ))
}
