//! Deterministic constructions from the consistency analysis: the
//! interlaced blocking of a lattice rectangle, the block-size rule, the
//! Haussler covering-number bound and shape-only rate curves.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::LatticeIndexSet;

/// `ceil(2 ln(sample_size) / c1)`.
pub fn block_size_q(sample_size: usize, c1: f64) -> Result<usize> {
    if sample_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "block size needs sample_size >= 2, got {sample_size}"
        )));
    }
    block_size_real(sample_size as f64, c1)
}

fn block_size_real(size: f64, c1: f64) -> Result<usize> {
    if !(c1 > 0.0) {
        return Err(Error::InvalidArgument(format!("c1 must be > 0, got {c1}")));
    }
    // ceil after removing rounding noise: 2 ln(e^2) / 2 must give 2, not 3
    let raw = 2.0 * size.ln() / c1;
    Ok((raw - 1e-12 * raw.abs().max(1.0)).ceil().max(1.0) as usize)
}

/// Partition of the enlarged rectangle `I_{n*}`, `n*_i = 2 q R_i`, into the
/// blocks `I(l, u)`: `l` picks one of the `2^N` interlaced classes, `u` one
/// of the `R = prod R_i` super-blocks of side `2q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockingPartition {
    n: Vec<usize>,
    q: usize,
    counts: Vec<usize>,
}

impl BlockingPartition {
    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Per-axis super-block counts `R_i`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `R = prod R_i`.
    pub fn block_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn class_count(&self) -> usize {
        1 << self.n.len()
    }

    /// Original extents `n`.
    pub fn extents(&self) -> &[usize] {
        &self.n
    }

    /// Extents `n*` of the enlarged rectangle.
    pub fn enlarged(&self) -> LatticeIndexSet {
        LatticeIndexSet::new(self.counts.iter().map(|r| 2 * self.q * r).collect())
            .expect("positive extents")
    }

    /// `(l, u)`, both 1-based, of the block containing the 1-based site `s`.
    pub fn locate(&self, s: &[usize]) -> (usize, usize) {
        let mut l = 0;
        let mut u = 0;
        for (axis, (&si, &r)) in s.iter().zip(&self.counts).enumerate() {
            let t = si - 1;
            let half = (t % (2 * self.q)) / self.q;
            l |= half << axis;
            u = u * r + t / (2 * self.q);
        }
        (l + 1, u + 1)
    }

    /// Sites of `I(l, u)` in lexicographic order.
    pub fn block(&self, l: usize, u: usize) -> Vec<Vec<usize>> {
        let dim = self.n.len();
        let mut super_idx = vec![0; dim];
        let mut rest = u - 1;
        for axis in (0..dim).rev() {
            super_idx[axis] = rest % self.counts[axis];
            rest /= self.counts[axis];
        }
        let origin: Vec<usize> = (0..dim)
            .map(|axis| {
                let half = ((l - 1) >> axis) & 1;
                super_idx[axis] * 2 * self.q + half * self.q + 1
            })
            .collect();
        LatticeIndexSet::new(vec![self.q; dim])
            .expect("q >= 1")
            .iter()
            .map(|off| origin.iter().zip(&off).map(|(o, d)| o + d - 1).collect())
            .collect()
    }
}

/// Builds the blocking for extents `n` and block side `q`, requiring
/// `2q < min n_i`. `R_i` is the smallest count with `2q(R_i - 1) < n_i <= 2q R_i`.
pub fn blocking_partition(n: &[usize], q: usize) -> Result<BlockingPartition> {
    if n.is_empty() || q == 0 {
        return Err(Error::InvalidArgument("need N >= 1 and q >= 1".into()));
    }
    let min = *n.iter().min().expect("non-empty");
    if 2 * q >= min {
        return Err(Error::InvalidArgument(format!(
            "block side q = {q} too large: need 2q < min n_i = {min}"
        )));
    }
    Ok(BlockingPartition {
        n: n.to_vec(),
        q,
        counts: n.iter().map(|&ni| ni.div_ceil(2 * q)).collect(),
    })
}

/// Upper bound on `log N(eps, G, L^p(nu))` for a class with values in an
/// interval of width `range_width` and subgraph VC dimension `v`:
///
/// `ln 3 + v ln( (2e W^p / eps^p) ln(3e W^p / eps^p) )`.
///
/// For an `r`-dimensional linear space pass `v = r + 1`.
pub fn covering_bound(v: u32, range_width: f64, eps: f64, p: f64) -> Result<f64> {
    if v < 2 {
        return Err(Error::InvalidArgument(format!("VC dimension must be >= 2, got {v}")));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    if !(eps > 0.0 && eps < range_width / 4.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < eps < (b - a)/4 = {}, got eps = {eps}",
            range_width / 4.0
        )));
    }
    let ratio = (range_width / eps).powf(p);
    let e = std::f64::consts::E;
    Ok(3f64.ln() + v as f64 * (2.0 * e * ratio * (3.0 * e * ratio).ln()).ln())
}

/// `(ln n)^{N+2} n^{-2r/(d+2r)}` for each size (unit constant).
pub fn rate_curve(d: usize, r: f64, lattice_dim: usize, sizes: &[usize]) -> Result<Vec<f64>> {
    if d == 0 || !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rate curve needs d >= 1 and r in (0, 1], got {d}, {r}"
        )));
    }
    if let Some(&bad) = sizes.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidArgument(format!("sizes must be >= 2, got {bad}")));
    }
    Ok(sizes
        .iter()
        .map(|&n| rate_value(d, r, lattice_dim, n as f64))
        .collect())
}

fn rate_value(d: usize, r: f64, lattice_dim: usize, n: f64) -> f64 {
    n.ln().powi(lattice_dim as i32 + 2) * n.powf(-2.0 * r / (d as f64 + 2.0 * r))
}

/// Two-column CSV with the given header.
pub fn pairs_to_csv<X: std::fmt::Display>(header: (&str, &str), rows: &[(X, f64)]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (x, v) in rows {
        let _ = writeln!(out, "{x},{v}");
    }
    out
}
