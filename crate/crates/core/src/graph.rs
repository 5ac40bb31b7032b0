//! Undirected graphs, lattice index sets, spectral bounds of the adjacency
//! matrix, conclique partitions and connected learning/test splits.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, NormalSampler};

/// Default tolerance for [`eigen_bounds`].
pub const EIGEN_TOL: f64 = 1e-8;
/// Iteration cap for the power iterations in [`eigen_bounds`].
pub const EIGEN_MAX_ITER: usize = 100_000;

/// A finite simple undirected graph on nodes `0..node_count`.
///
/// Adjacency lists are sorted ascending; `edges` holds each edge once as
/// `(s, t)` with `s < t`, sorted lexicographically.
#[derive(Debug, Clone)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbours: Vec<Vec<usize>>,
    bounds: OnceLock<std::result::Result<EigenBounds, String>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count && self.edges == other.edges
    }
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges (in either
    /// orientation) are collapsed; self-loops and out-of-range ids are errors.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (s, t) in edges {
            if s == t {
                return Err(Error::SelfLoop { node: s as u64 });
            }
            if s >= node_count || t >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({s}, {t}) references a node outside 0..{node_count}"
                )));
            }
            set.insert((s.min(t), s.max(t)));
        }
        let mut neighbours = vec![Vec::new(); node_count];
        for &(s, t) in &set {
            neighbours[s].push(t);
            neighbours[t].push(s);
        }
        for list in &mut neighbours {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: set.into_iter().collect(),
            neighbours,
            bounds: OnceLock::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, s: usize) -> &[usize] {
        &self.neighbours[s]
    }

    pub fn degree(&self, s: usize) -> usize {
        self.neighbours[s].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbours.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, s: usize, t: usize) -> bool {
        self.neighbours
            .get(s)
            .is_some_and(|list| list.binary_search(&t).is_ok())
    }

    /// Dense 0/1 adjacency matrix `H`.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.node_count;
        let mut h = DMatrix::zeros(n, n);
        for &(s, t) in &self.edges {
            h[(s, t)] = 1.0;
            h[(t, s)] = 1.0;
        }
        h
    }

    /// `y = H x` using the adjacency lists.
    pub fn adjacency_mul(&self, x: &[f64], y: &mut [f64]) {
        for (s, out) in y.iter_mut().enumerate() {
            *out = self.neighbours[s].iter().map(|&t| x[t]).sum();
        }
    }

    /// Returns a copy with additional edges. Pairs already present are ignored.
    pub fn with_extra_edges<I>(&self, extra: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Graph::from_edges(
            self.node_count,
            self.edges.iter().copied().chain(extra),
        )
    }

    /// Adds `count` distinct new edges between uniformly chosen non-adjacent
    /// node pairs.
    pub fn with_random_chords(&self, count: usize, seed: u64) -> Result<Self> {
        let n = self.node_count;
        let possible = n * n.saturating_sub(1) / 2;
        if self.edges.len() + count > possible {
            return Err(Error::InvalidArgument(format!(
                "cannot add {count} chords to a graph with {} of {possible} edges",
                self.edges.len()
            )));
        }
        let mut rng = stream(seed);
        let mut added = BTreeSet::new();
        while added.len() < count {
            let s = rng.random_range(0..n);
            let t = rng.random_range(0..n);
            if s == t || self.has_edge(s, t) {
                continue;
            }
            added.insert((s.min(t), s.max(t)));
        }
        self.with_extra_edges(added)
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return true;
        }
        let all: Vec<usize> = (0..self.node_count).collect();
        self.is_connected_subset(&all)
    }

    /// Whether the subgraph induced by `nodes` is connected (an empty set
    /// counts as connected).
    pub fn is_connected_subset(&self, nodes: &[usize]) -> bool {
        let Some(&start) = nodes.first() else {
            return true;
        };
        let mut member = vec![false; self.node_count];
        for &s in nodes {
            member[s] = true;
        }
        let mut seen = vec![false; self.node_count];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut reached = 1;
        while let Some(s) = queue.pop_front() {
            for &t in &self.neighbours[s] {
                if member[t] && !seen[t] {
                    seen[t] = true;
                    reached += 1;
                    queue.push_back(t);
                }
            }
        }
        reached == nodes.iter().collect::<BTreeSet<_>>().len()
    }

    /// Cached [`eigen_bounds`] at the default tolerance.
    pub fn spectrum(&self) -> Result<EigenBounds> {
        self.bounds
            .get_or_init(|| eigen_bounds(self, EIGEN_TOL).map_err(|e| e.to_string()))
            .clone()
            .map_err(Error::Spectrum)
    }

    /// Serializes to the edge-list format read by [`load_graph`].
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {} edges {}\n", self.node_count, self.edges.len());
        for &(s, t) in &self.edges {
            let _ = writeln!(out, "{s} {t}");
        }
        out
    }
}

/// Parses an edge list: one `s t` pair of non-negative integer ids per line,
/// `#` starts a comment, blank lines are skipped. Ids are compacted to
/// `0..n` in ascending order of the original id.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected two node ids, found {}", fields.len()),
            });
        }
        let parse = |f: &str| {
            f.parse::<u64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid node id {f:?}"),
            })
        };
        let (s, t) = (parse(fields[0])?, parse(fields[1])?);
        if s == t {
            return Err(Error::SelfLoop { node: s });
        }
        raw.push((s, t));
    }
    let ids: BTreeMap<u64, usize> = raw
        .iter()
        .flat_map(|&(s, t)| [s, t])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    Graph::from_edges(ids.len(), raw.into_iter().map(|(s, t)| (ids[&s], ids[&t])))
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text)
}

/// Four-nearest-neighbour lattice with periodic boundary.
pub fn torus_lattice(rows: usize, cols: usize) -> Result<Graph> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidArgument(format!(
            "torus needs rows, cols >= 2, got {rows}x{cols}"
        )));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            edges.push((id(r, c), id((r + 1) % rows, c)));
            edges.push((id(r, c), id(r, (c + 1) % cols)));
        }
    }
    Graph::from_edges(rows * cols, edges)
}

/// `points` uniform sites in the unit square, each joined to its `k`
/// nearest neighbours; the relation is symmetrized.
pub fn knn_geometric_graph(points: usize, k: usize, seed: u64) -> Result<Graph> {
    if k >= points {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be smaller than the number of points {points}"
        )));
    }
    let mut sampler = NormalSampler::new(seed);
    let xy: Vec<(f64, f64)> = (0..points)
        .map(|_| (sampler.uniform(), sampler.uniform()))
        .collect();
    let mut edges = Vec::with_capacity(points * k);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(points);
    for (s, &(xs, ys)) in xy.iter().enumerate() {
        order.clear();
        order.extend(xy.iter().enumerate().filter(|&(t, _)| t != s).map(|(t, &(xt, yt))| {
            ((xs - xt).powi(2) + (ys - yt).powi(2), t)
        }));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        edges.extend(order.iter().take(k).map(|&(_, t)| (s, t)));
    }
    Graph::from_edges(points, edges)
}

/// Smallest (`h0`) and largest (`hm`) eigenvalue of the adjacency matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenBounds {
    pub h0: f64,
    pub hm: f64,
}

/// Power iteration for the dominant eigenvalue of `apply`, assumed
/// symmetric positive semi-definite. Stops when `||A x - lambda x|| <= tol`.
fn dominant_eigenvalue<F>(n: usize, mut x: DVector<f64>, tol: f64, mut apply: F) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut y = DVector::zeros(n);
    x /= x.norm();
    for _ in 0..EIGEN_MAX_ITER {
        apply(x.as_slice(), y.as_mut_slice());
        let lambda = x.dot(&y);
        let residual = (&y - lambda * &x).norm();
        if residual <= tol {
            return Ok(lambda);
        }
        let norm = y.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        x.copy_from(&y);
        x /= norm;
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: EIGEN_MAX_ITER,
    })
}

/// Extreme adjacency eigenvalues by power iteration.
///
/// `hm` comes from iterating `H + D I` (`D` the maximum degree, so the
/// shifted spectrum is non-negative); `h0` from iterating `hm I - H`.
pub fn eigen_bounds(g: &Graph, tol: f64) -> Result<EigenBounds> {
    if g.edge_count() == 0 {
        return Err(Error::InvalidArgument(
            "eigen bounds need a graph with at least one edge".into(),
        ));
    }
    let n = g.node_count();
    let shift = g.max_degree() as f64;
    let mut sampler = NormalSampler::new(derive_seed(0x5eed, n as u64));
    let start = DVector::from_fn(n, |_, _| 1.0 + 0.1 * sampler.sample());
    let top = dominant_eigenvalue(n, start, tol, |x, y| {
        g.adjacency_mul(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += shift * xi;
        }
    })?;
    let hm = top - shift;
    let start = DVector::from_fn(n, |_, _| sampler.sample());
    let gap = dominant_eigenvalue(n, start, tol, |x, y| {
        g.adjacency_mul(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = hm * xi - *yi;
        }
    })?;
    Ok(EigenBounds { h0: hm - gap, hm })
}

/// Open interval `(1/h0, 1/hm)` of dependence parameters for which
/// `I - eta H` is invertible.
pub fn eta_range(g: &Graph) -> Result<(f64, f64)> {
    let EigenBounds { h0, hm } = g.spectrum()?;
    if h0 >= 0.0 || hm <= 0.0 {
        return Err(Error::Spectrum(format!(
            "admissible eta range needs h0 < 0 < hm, got h0 = {h0}, hm = {hm}"
        )));
    }
    Ok((1.0 / h0, 1.0 / hm))
}

/// Classes of pairwise non-adjacent nodes covering the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcliquePartition {
    classes: Vec<Vec<usize>>,
}

impl ConcliquePartition {
    /// Validates that `classes` partition the nodes of `g` into independent sets.
    pub fn new(g: &Graph, classes: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; g.node_count()];
        for class in &classes {
            for (i, &s) in class.iter().enumerate() {
                if s >= g.node_count() || std::mem::replace(&mut seen[s], true) {
                    return Err(Error::InvalidArgument(format!(
                        "node {s} is out of range or appears in two classes"
                    )));
                }
                if let Some(&t) = class[i + 1..].iter().find(|&&t| g.has_edge(s, t)) {
                    return Err(Error::InvalidArgument(format!(
                        "nodes {s} and {t} are adjacent but share a class"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|&b| !b) {
            return Err(Error::InvalidArgument(format!(
                "node {missing} is not covered by the partition"
            )));
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Greedy colouring in descending-degree order (ties by node id); each
/// colour class is a conclique. Classes are returned with ascending members.
pub fn concliques(g: &Graph) -> ConcliquePartition {
    let n = g.node_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    let mut colour = vec![usize::MAX; n];
    let mut used = Vec::new();
    for s in order {
        used.clear();
        used.extend(g.neighbours(s).iter().map(|&t| colour[t]).filter(|&c| c != usize::MAX));
        used.sort_unstable();
        used.dedup();
        let c = used
            .iter()
            .enumerate()
            .find(|&(i, &c)| i != c)
            .map_or(used.len(), |(i, _)| i);
        colour[s] = c;
    }
    let count = colour.iter().copied().max().map_or(0, |m| m + 1);
    let mut classes = vec![Vec::new(); count];
    for (s, &c) in colour.iter().enumerate() {
        classes[c].push(s);
    }
    ConcliquePartition { classes }
}

/// Learning/test split of the node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub learn: Vec<usize>,
    pub test: Vec<usize>,
    /// Whether the learning set induces a connected subgraph.
    pub learn_connected: bool,
}

/// Grows the test set by breadth-first search from a seeded start node
/// until it holds `ceil(test_fraction * |V|)` nodes; the learning set is the
/// complement. Both lists are sorted.
pub fn connected_split(g: &Graph, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = g.node_count();
    if n == 0 || !g.is_connected() {
        return Err(Error::Disconnected);
    }
    // guard against 0.3 * 10 = 3.0000000000000004
    let target = ((test_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let start = stream(seed).random_range(0..n);
    let mut in_test = vec![false; n];
    in_test[start] = true;
    let mut test = vec![start];
    let mut queue = VecDeque::from([start]);
    'bfs: while let Some(s) = queue.pop_front() {
        for &t in g.neighbours(s) {
            if test.len() >= target {
                break 'bfs;
            }
            if !in_test[t] {
                in_test[t] = true;
                test.push(t);
                queue.push_back(t);
            }
        }
    }
    test.sort_unstable();
    let learn: Vec<usize> = (0..n).filter(|&s| !in_test[s]).collect();
    let learn_connected = g.is_connected_subset(&learn);
    if !learn_connected {
        log::warn!("learning set of the connected split is not connected");
    }
    Ok(Split {
        learn,
        test,
        learn_connected,
    })
}

/// The rectangle `{s in Z^N : 1 <= s <= n}` of lattice sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeIndexSet {
    n: Vec<usize>,
}

impl LatticeIndexSet {
    pub fn new(n: Vec<usize>) -> Result<Self> {
        if n.is_empty() || n.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "lattice extents must be positive, got {n:?}"
            )));
        }
        Ok(Self { n })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Members in lexicographic order, 1-based coordinates.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let total = self.len();
        (0..total).map(move |mut idx| {
            let mut s = vec![0; self.n.len()];
            for (coord, &extent) in s.iter_mut().zip(&self.n).rev() {
                *coord = idx % extent + 1;
                idx /= extent;
            }
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_assume, proptest, ProptestConfig, Strategy};

    fn triangle() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    fn dense_oracle(g: &Graph) -> (f64, f64) {
        let eig = SymmetricEigen::new(g.adjacency_matrix());
        let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    #[test]
    fn parse_basic_and_empty() {
        let g = parse_edge_list("0 1\n1 2").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (3, 2));
        let g = parse_edge_list("").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (0, 0));
    }

    #[test]
    fn parse_compacts_ids_and_collapses_duplicates() {
        let g = parse_edge_list("# comment\n10 30\n30 10 # again\n\n30 7\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges(), &[(0, 2), (1, 2)]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_edge_list("0 0"), Err(Error::SelfLoop { node: 0 })));
        assert!(matches!(
            parse_edge_list("0 1\n1 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_edge_list("0 1 2"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = torus_lattice(3, 4).unwrap();
        assert_eq!(parse_edge_list(&g.to_edge_list()).unwrap(), g);
    }

    #[test]
    fn torus_sizes() {
        let g = torus_lattice(2, 2).unwrap();
        assert_eq!(g.node_count(), 4);
        assert!((0..4).all(|s| g.degree(s) == 2));
        let g = torus_lattice(3, 3).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (9, 18));
        assert!((0..9).all(|s| g.degree(s) == 4));
        let g = torus_lattice(4, 4).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (16, 32));
        assert!(torus_lattice(1, 5).is_err());
    }

    #[test]
    fn knn_graphs() {
        let g = knn_geometric_graph(3, 1, 99).unwrap();
        assert!((0..3).all(|s| g.degree(s) >= 1));
        let a = knn_geometric_graph(100, 4, 7).unwrap();
        let b = knn_geometric_graph(100, 4, 7).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert!((0..100).all(|s| a.degree(s) >= 4));
        let k5 = knn_geometric_graph(5, 4, 3).unwrap();
        assert_eq!(k5.edge_count(), 10);
        assert!(knn_geometric_graph(5, 5, 3).is_err());
    }

    #[test]
    fn eigen_bounds_small_cases() {
        let edge = Graph::from_edges(2, [(0, 1)]).unwrap();
        let b = eigen_bounds(&edge, 1e-12).unwrap();
        assert!((b.h0 + 1.0).abs() < 1e-10 && (b.hm - 1.0).abs() < 1e-10);
        let b = eigen_bounds(&triangle(), 1e-12).unwrap();
        let (lo, hi) = dense_oracle(&triangle());
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
        assert!((b.h0 - lo).abs() < 1e-10 && (b.hm - hi).abs() < 1e-10);
        assert!(eigen_bounds(&Graph::from_edges(3, []).unwrap(), 1e-8).is_err());
    }

    #[test]
    fn eigen_bounds_even_torus() {
        // spectrum 2cos(2 pi a / rows) + 2cos(2 pi b / cols)
        let g = torus_lattice(6, 8).unwrap();
        let analytic: Vec<f64> = (0..6)
            .flat_map(|a| {
                (0..8).map(move |b| {
                    2.0 * (2.0 * std::f64::consts::PI * a as f64 / 6.0).cos()
                        + 2.0 * (2.0 * std::f64::consts::PI * b as f64 / 8.0).cos()
                })
            })
            .collect();
        let lo = analytic.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = analytic.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo + 4.0).abs() < 1e-12 && (hi - 4.0).abs() < 1e-12);
        let b = eigen_bounds(&g, 1e-10).unwrap();
        assert!((b.h0 - lo).abs() < 1e-8 && (b.hm - hi).abs() < 1e-8);
    }

    #[test]
    fn eta_ranges() {
        let (lo, hi) = eta_range(&torus_lattice(6, 6).unwrap()).unwrap();
        assert!((lo + 0.25).abs() < 1e-6 && (hi - 0.25).abs() < 1e-6);
        let (lo, hi) = eta_range(&Graph::from_edges(2, [(0, 1)]).unwrap()).unwrap();
        assert!((lo + 1.0).abs() < 1e-8 && (hi - 1.0).abs() < 1e-8);
        let (lo, hi) = eta_range(&triangle()).unwrap();
        assert!((lo + 1.0).abs() < 1e-8 && (hi - 0.5).abs() < 1e-8);
    }

    #[test]
    fn conclique_cases() {
        let p = concliques(&torus_lattice(6, 6).unwrap());
        assert_eq!(p.len(), 2);
        let p = concliques(&triangle());
        assert_eq!(p.classes(), &[vec![0], vec![1], vec![2]]);
        let p = concliques(&Graph::from_edges(4, []).unwrap());
        assert_eq!(p.classes(), &[vec![0, 1, 2, 3]]);
        let g = knn_geometric_graph(60, 5, 1).unwrap();
        let p = concliques(&g);
        assert!(p.len() <= g.max_degree() + 1);
        ConcliquePartition::new(&g, p.classes().to_vec()).unwrap();
    }

    #[test]
    fn partition_validation_rejects_adjacent_pair() {
        let g = path(3);
        assert!(ConcliquePartition::new(&g, vec![vec![0, 1], vec![2]]).is_err());
        assert!(ConcliquePartition::new(&g, vec![vec![0, 2]]).is_err());
        assert!(ConcliquePartition::new(&g, vec![vec![0, 2], vec![1]]).is_ok());
    }

    #[test]
    fn split_on_path() {
        let g = path(10);
        let split = connected_split(&g, 0.3, 4).unwrap();
        assert_eq!(split.test.len(), 3);
        assert!(split.test.windows(2).all(|w| w[1] == w[0] + 1));
        assert_eq!(split, connected_split(&g, 0.3, 4).unwrap());
    }

    #[test]
    fn split_on_torus() {
        let g = torus_lattice(6, 6).unwrap();
        let split = connected_split(&g, 0.25, 17).unwrap();
        assert_eq!(split.test.len(), 9);
        assert!(g.is_connected_subset(&split.test));
        assert!(split.learn_connected);
    }

    #[test]
    fn split_errors() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(connected_split(&g, 0.5, 0), Err(Error::Disconnected)));
        assert!(connected_split(&path(4), 1.0, 0).is_err());
    }

    #[test]
    fn lattice_index_set_members() {
        let set = LatticeIndexSet::new(vec![2, 3]).unwrap();
        assert_eq!(set.len(), 6);
        let members: Vec<_> = set.iter().collect();
        assert_eq!(members.first().unwrap(), &vec![1, 1]);
        assert_eq!(members.last().unwrap(), &vec![2, 3]);
        assert!(LatticeIndexSet::new(vec![2, 0]).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (3usize..30, 0.05f64..0.6, any::<u64>()).prop_map(|(n, p, seed)| {
            let mut rng = stream(seed);
            let edges: Vec<_> = (0..n)
                .flat_map(|s| (s + 1..n).map(move |t| (s, t)))
                .filter(|_| rng.random::<f64>() < p)
                .collect();
            Graph::from_edges(n, edges).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn concliques_are_independent_sets(g in arb_graph()) {
            let p = concliques(&g);
            prop_assert!(p.len() <= g.max_degree() + 1);
            for class in p.classes() {
                for (i, &s) in class.iter().enumerate() {
                    for &t in &class[i + 1..] {
                        prop_assert!(!g.has_edge(s, t));
                    }
                }
            }
            prop_assert_eq!(p.classes().iter().map(Vec::len).sum::<usize>(), g.node_count());
        }

        #[test]
        fn rayleigh_quotients_within_bounds(g in arb_graph(), seed in any::<u64>()) {
            prop_assume!(g.edge_count() > 0);
            let b = eigen_bounds(&g, 1e-9).unwrap();
            let (lo, hi) = dense_oracle(&g);
            prop_assert!((b.h0 - lo).abs() < 1e-6 && (b.hm - hi).abs() < 1e-6);
            let h = g.adjacency_matrix();
            let mut sampler = NormalSampler::new(seed);
            for _ in 0..100 {
                let x = DVector::from_fn(g.node_count(), |_, _| sampler.sample());
                let q = x.dot(&(&h * &x)) / x.dot(&x);
                prop_assert!(q >= b.h0 - 1e-8 && q <= b.hm + 1e-8);
            }
        }

        #[test]
        fn interior_eta_gives_positive_definite_system(g in arb_graph()) {
            let Ok((lo, hi)) = eta_range(&g) else { return Ok(()); };
            let h = g.adjacency_matrix();
            let id = DMatrix::<f64>::identity(g.node_count(), g.node_count());
            for k in 1..=20 {
                let eta = lo + (hi - lo) * k as f64 / 21.0;
                let m = &id - eta * &h;
                let sym = (&m + m.transpose()) * 0.5;
                prop_assert!(sym.cholesky().is_some(), "eta = {}", eta);
            }
        }

        #[test]
        fn split_partitions_nodes(seed in any::<u64>(), frac in 0.05f64..0.95) {
            let g = torus_lattice(5, 7).unwrap().with_random_chords(6, seed).unwrap();
            let split = connected_split(&g, frac, seed).unwrap();
            let mut all: Vec<usize> = split.learn.iter().chain(&split.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..g.node_count()).collect::<Vec<_>>());
            prop_assert!(g.is_connected_subset(&split.test));
        }
    }
}
