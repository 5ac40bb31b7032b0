//! Compactly supported orthonormal scaling functions and their tensor
//! products on `R^d`.
//!
//! A one-dimensional filter `h_0..h_{L-1}` defines `phi` through the
//! two-scale relation `phi(x) = sqrt(2) * sum_l h_l phi(2x - l)`; `phi` is
//! supported on `[0, L-1]`. The mother filter uses the alternating flip
//! `g_l = (-1)^l h_{L-1-l}`. In `d` dimensions the dilation is `M = 2 I`
//! and the scaled, translated basis functions are
//!
//! ```text
//! Phi_{j,gamma}(x) = 2^{jd/2} prod_i phi(2^j x_i - gamma_i)
//! ```

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default table resolution exponent: `phi` is tabulated at step `2^-10`.
pub const DEFAULT_RESOLUTION: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Haar,
    D4,
}

impl WaveletKind {
    pub fn filter(self) -> ScalingFilter {
        match self {
            WaveletKind::Haar => haar_filter(),
            WaveletKind::D4 => d4_filter(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WaveletKind::Haar => "haar",
            WaveletKind::D4 => "d4",
        }
    }
}

impl fmt::Display for WaveletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "haar" => Ok(WaveletKind::Haar),
            "d4" | "db2" | "daubechies4" => Ok(WaveletKind::D4),
            other => Err(Error::InvalidArgument(format!("unknown wavelet {other:?}"))),
        }
    }
}

/// Refinement coefficients `h` and the derived mother coefficients `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFilter {
    kind: WaveletKind,
    h: Vec<f64>,
    g: Vec<f64>,
}

impl ScalingFilter {
    fn from_h(kind: WaveletKind, h: Vec<f64>) -> Self {
        let len = h.len();
        let g = (0..len)
            .map(|l| if l % 2 == 0 { h[len - 1 - l] } else { -h[len - 1 - l] })
            .collect();
        Self { kind, h, g }
    }

    pub fn kind(&self) -> WaveletKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Length of the support `[0, L-1]` of `phi`.
    pub fn support(&self) -> usize {
        self.h.len() - 1
    }
}

/// `sum_l a_l b_{l + 2z}` with zero extension.
pub fn shifted_correlation(a: &[f64], b: &[f64], z: i64) -> f64 {
    a.iter()
        .enumerate()
        .filter_map(|(l, &al)| {
            let idx = l as i64 + 2 * z;
            (idx >= 0 && (idx as usize) < b.len()).then(|| al * b[idx as usize])
        })
        .sum()
}

/// `h = (1/sqrt 2, 1/sqrt 2)`, `phi = 1_[0,1)`.
pub fn haar_filter() -> ScalingFilter {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    ScalingFilter::from_h(WaveletKind::Haar, vec![c, c])
}

/// Daubechies filter with two vanishing moments (db2).
pub fn d4_filter() -> ScalingFilter {
    let s3 = 3f64.sqrt();
    let denom = 4.0 * std::f64::consts::SQRT_2;
    ScalingFilter::from_h(
        WaveletKind::D4,
        vec![(1.0 + s3) / denom, (3.0 + s3) / denom, (3.0 - s3) / denom, (1.0 - s3) / denom],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Right-continuous step between grid points (discontinuous `phi`).
    Step,
    Linear,
}

/// `phi` sampled on `[0, L-1]` at step `2^-resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTable {
    kind: WaveletKind,
    resolution: u32,
    support: usize,
    values: Vec<f64>,
    interpolation: Interpolation,
}

impl PhiTable {
    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn step(&self) -> f64 {
        (-(self.resolution as f64)).exp2()
    }

    pub fn support(&self) -> usize {
        self.support
    }

    pub fn kind(&self) -> WaveletKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    fn per_unit(&self) -> usize {
        1 << self.resolution
    }

    /// Value at grid index `i` (`x = i 2^-r`), zero outside the table.
    pub fn at_index(&self, i: i64) -> f64 {
        if i < 0 {
            0.0
        } else {
            self.values.get(i as usize).copied().unwrap_or(0.0)
        }
    }

    /// `phi(x)`; zero outside `[0, L-1)`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(x >= 0.0 && x < self.support as f64) {
            return 0.0;
        }
        let pos = x * self.per_unit() as f64;
        let i = pos.floor() as usize;
        match self.interpolation {
            Interpolation::Step => self.values[i],
            Interpolation::Linear => {
                let frac = pos - i as f64;
                let right = self.values.get(i + 1).copied().unwrap_or(0.0);
                self.values[i] * (1.0 - frac) + right * frac
            }
        }
    }

    /// `max_i |phi(x_i) - sqrt 2 sum_l h_l phi(2 x_i - l)|` over the grid.
    pub fn refinement_residual(&self, filter: &ScalingFilter) -> f64 {
        let unit = self.per_unit() as i64;
        (0..self.values.len() as i64)
            .map(|i| {
                let rhs: f64 = filter
                    .h()
                    .iter()
                    .enumerate()
                    .map(|(l, &hl)| hl * self.at_index(2 * i - l as i64 * unit))
                    .sum();
                (self.values[i as usize] - std::f64::consts::SQRT_2 * rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `max_x |sum_k phi(x + k) - 1|` over grid points `x` in `[0, 1)`.
    pub fn partition_of_unity_error(&self) -> f64 {
        let unit = self.per_unit();
        (0..unit)
            .map(|i| {
                let s: f64 = (0..=self.support).map(|k| self.at_index((i + k * unit) as i64)).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `x,phi` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,phi\n");
        let step = self.step();
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i as f64 * step, v);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Values of `phi` at the integers `0..=L-1`.
///
/// Solves the fixed-point equations `v_i = sqrt 2 sum_k h_{2i-k} v_k`
/// together with `sum_k v_k = 1`, taking `v_{L-1} = 0` (right continuity at
/// the end of the support). Fails unless the solution is unique and exact.
fn integer_values(filter: &ScalingFilter) -> Result<Vec<f64>> {
    let len = filter.len();
    let unknowns = len - 1;
    let h = |idx: i64| -> f64 {
        if idx >= 0 && (idx as usize) < len {
            filter.h()[idx as usize]
        } else {
            0.0
        }
    };
    let mut a = DMatrix::zeros(len + 1, unknowns);
    for i in 0..len {
        for k in 0..unknowns {
            a[(i, k)] = std::f64::consts::SQRT_2 * h(2 * i as i64 - k as i64);
        }
        if i < unknowns {
            a[(i, i)] -= 1.0;
        }
    }
    for k in 0..unknowns {
        a[(len, k)] = 1.0;
    }
    let mut b = DVector::zeros(len + 1);
    b[len] = 1.0;
    let svd = a.clone().svd(true, true);
    let smallest = svd.singular_values.min();
    if smallest < 1e-10 {
        return Err(Error::Cascade(format!(
            "fixed-point system is rank deficient (smallest singular value {smallest:.3e})"
        )));
    }
    let v = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Cascade(e.to_string()))?;
    let residual = (&a * &v - &b).amax();
    if residual > 1e-10 {
        return Err(Error::Cascade(format!(
            "no exact fixed point (residual {residual:.3e})"
        )));
    }
    let mut out: Vec<f64> = v.iter().copied().collect();
    out.push(0.0);
    Ok(out)
}

/// Tabulates `phi` on the dyadic grid of step `2^-r` over `[0, L-1]`.
///
/// Integer values come from the fixed point of the refinement matrix; each
/// finer level is filled from the previous one by the two-scale relation.
pub fn cascade(filter: &ScalingFilter, r: u32) -> Result<PhiTable> {
    if r == 0 || r > 24 {
        return Err(Error::InvalidArgument(format!(
            "cascade resolution must lie in 1..=24, got {r}"
        )));
    }
    let support = filter.support();
    let unit = 1usize << r;
    let mut values = vec![0.0; support * unit + 1];
    for (k, v) in integer_values(filter)?.into_iter().enumerate() {
        values[k * unit] = v;
    }
    for level in 1..=r {
        let stride = 1usize << (r - level);
        for i in (stride..values.len()).step_by(2 * stride) {
            let acc: f64 = filter
                .h()
                .iter()
                .enumerate()
                .filter_map(|(l, &hl)| {
                    let idx = 2 * i as i64 - (l * unit) as i64;
                    (idx >= 0 && (idx as usize) < values.len()).then(|| hl * values[idx as usize])
                })
                .sum();
            values[i] = std::f64::consts::SQRT_2 * acc;
        }
    }
    let interpolation = if values[0].abs() > 1e-12 {
        Interpolation::Step
    } else {
        Interpolation::Linear
    };
    Ok(PhiTable {
        kind: filter.kind(),
        resolution: r,
        support,
        values,
        interpolation,
    })
}

/// Axis-aligned box `[lo, hi]` in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn unit(d: usize) -> Self {
        Self {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    /// Smallest box containing `points`; `None` for an empty slice.
    pub fn of_points(points: &[Vec<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for p in points {
            for (i, &v) in p.iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        Some(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Restricts a translation box to functions whose support box
/// `[gamma, gamma + support] / 2^level` meets `bbox`.
#[derive(Debug, Clone, Copy)]
pub struct Pruning<'a> {
    pub bbox: &'a BoundingBox,
    pub level: i32,
    pub support: usize,
}

impl Pruning<'_> {
    fn axis_range(&self, axis: usize) -> (i64, i64) {
        let scale = (self.level as f64).exp2();
        let lo = self.bbox.lo[axis] * scale;
        let hi = self.bbox.hi[axis] * scale;
        let s = self.support as f64;
        // gamma + s > lo and gamma < hi (gamma <= hi for a degenerate box)
        let first = (lo - s).floor() as i64 + 1;
        let last = if hi > lo { hi.ceil() as i64 - 1 } else { hi.floor() as i64 };
        (first, last)
    }

    fn keeps(&self, gamma: &[i64]) -> bool {
        gamma.iter().enumerate().all(|(axis, &g)| {
            let (first, last) = self.axis_range(axis);
            g >= first && g <= last
        })
    }
}

/// `{gamma in Z^d : |gamma|_inf <= w}` in lexicographic order (first
/// coordinate slowest), optionally pruned.
pub fn translation_set(w: u32, d: usize, prune_to: Option<&Pruning<'_>>) -> Vec<Vec<i64>> {
    let side = 2 * w as usize + 1;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut gamma = vec![0i64; d];
            for g in gamma.iter_mut().rev() {
                *g = (idx % side) as i64 - w as i64;
                idx /= side;
            }
            gamma
        })
        .filter(|gamma| prune_to.is_none_or(|p| p.keeps(gamma)))
        .collect()
}

/// The finite set of design functions `Phi_{j,gamma}`, `gamma in K`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletSieve {
    filter: ScalingFilter,
    d: usize,
    level: i32,
    width: u32,
    translations: Vec<Vec<i64>>,
}

impl WaveletSieve {
    /// Full translation box of half-width `width`.
    pub fn new(filter: ScalingFilter, d: usize, level: i32, width: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        let translations = translation_set(width, d, None);
        Ok(Self {
            filter,
            d,
            level,
            width,
            translations,
        })
    }

    /// Smallest box width whose pruned translation set covers `bbox`: every
    /// `Phi_{j,gamma}` not vanishing identically on `bbox` is kept.
    pub fn covering(filter: ScalingFilter, level: i32, bbox: &BoundingBox) -> Result<Self> {
        let d = bbox.dim();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        let pruning = Pruning {
            bbox,
            level,
            support: filter.support(),
        };
        let width = (0..d)
            .map(|axis| {
                let (first, last) = pruning.axis_range(axis);
                first.unsigned_abs().max(last.unsigned_abs())
            })
            .max()
            .unwrap_or(0) as u32;
        let translations = translation_set(width, d, Some(&pruning));
        Ok(Self {
            filter,
            d,
            level,
            width,
            translations,
        })
    }

    /// Explicit translation list, e.g. read back from a stored fit. Every
    /// translation must lie in the box of half-width `width`.
    pub fn with_translations(
        filter: ScalingFilter,
        d: usize,
        level: i32,
        width: u32,
        translations: Vec<Vec<i64>>,
    ) -> Result<Self> {
        if let Some(g) = translations
            .iter()
            .find(|g| g.len() != d || g.iter().any(|c| c.unsigned_abs() > width as u64))
        {
            return Err(Error::InvalidArgument(format!(
                "translation {g:?} is not in the d = {d} box of width {width}"
            )));
        }
        Ok(Self {
            filter,
            d,
            level,
            width,
            translations,
        })
    }

    pub fn unit_cube(filter: ScalingFilter, d: usize, level: i32) -> Result<Self> {
        Self::covering(filter, level, &BoundingBox::unit(d))
    }

    pub fn filter(&self) -> &ScalingFilter {
        &self.filter
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn translations(&self) -> &[Vec<i64>] {
        &self.translations
    }

    pub fn len(&self) -> usize {
        self.translations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.translations.is_empty()
    }
}

/// `Phi_{j,gamma}(x) = 2^{jd/2} prod_i phi(2^j x_i - gamma_i)`.
pub fn phi_eval(sieve: &WaveletSieve, table: &PhiTable, gamma: &[i64], x: &[f64]) -> f64 {
    let scale = (sieve.level as f64).exp2();
    let mut acc = (sieve.level as f64 * sieve.d as f64 / 2.0).exp2();
    for (&xi, &gi) in x.iter().zip(gamma) {
        let v = table.eval(scale * xi - gi as f64);
        if v == 0.0 {
            return 0.0;
        }
        acc *= v;
    }
    acc
}

/// Tensor refinement coefficients `a_k(gamma) = prod_i a^{k_i}_{gamma_i}`
/// with `a^0 = sqrt 2 h`, `a^1 = sqrt 2 g`, for one `k in {0,1}^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFamily {
    pub k: Vec<u8>,
    factors: [Vec<f64>; 2],
}

impl TensorFamily {
    /// `a_k(gamma)`; zero outside `[0, L-1]^d`.
    pub fn coeff(&self, gamma: &[i64]) -> f64 {
        let len = self.factors[0].len() as i64;
        gamma
            .iter()
            .zip(&self.k)
            .map(|(&g, &k)| {
                if (0..len).contains(&g) {
                    self.factors[k as usize][g as usize]
                } else {
                    0.0
                }
            })
            .product()
    }

    /// Index box `[0, L-1]^d` holding the nonzero coefficients.
    pub fn support(&self) -> Vec<Vec<i64>> {
        let len = self.factors[0].len();
        let d = self.k.len();
        (0..len.pow(d as u32))
            .map(|mut idx| {
                let mut g = vec![0i64; d];
                for gi in g.iter_mut().rev() {
                    *gi = (idx % len) as i64;
                    idx /= len;
                }
                g
            })
            .collect()
    }
}

/// All `2^d` families, `k` in lexicographic order (`k = 0` first).
pub fn mother_tensor_coeffs(filter: &ScalingFilter, d: usize) -> Vec<TensorFamily> {
    let s2 = std::f64::consts::SQRT_2;
    let a0: Vec<f64> = filter.h().iter().map(|h| s2 * h).collect();
    let a1: Vec<f64> = filter.g().iter().map(|g| s2 * g).collect();
    (0..1usize << d)
        .map(|bits| TensorFamily {
            k: (0..d).rev().map(|i| ((bits >> i) & 1) as u8).collect(),
            factors: [a0.clone(), a1.clone()],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const S3: f64 = 1.732_050_807_568_877_2;

    fn identity_families(f: &ScalingFilter) -> f64 {
        let mut worst: f64 = 0.0;
        for z in -3..=3 {
            let delta = if z == 0 { 1.0 } else { 0.0 };
            worst = worst
                .max((shifted_correlation(f.h(), f.h(), z) - delta).abs())
                .max((shifted_correlation(f.g(), f.g(), z) - delta).abs())
                .max(shifted_correlation(f.g(), f.h(), z).abs())
                .max(shifted_correlation(f.h(), f.g(), z).abs());
        }
        worst.max((f.h().iter().sum::<f64>() - std::f64::consts::SQRT_2).abs())
    }

    #[test]
    fn haar_identities() {
        let f = haar_filter();
        assert_eq!(f.h().iter().sum::<f64>(), std::f64::consts::SQRT_2);
        assert_eq!(shifted_correlation(f.h(), f.h(), 1), 0.0);
        assert_eq!(f.g(), &[std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2]);
        assert!(identity_families(&f) < 1e-15);
    }

    #[test]
    fn d4_constraints() {
        let f = d4_filter();
        let h = f.h();
        let g = f.g();
        let sum_h: f64 = h.iter().sum();
        let energy: f64 = h.iter().map(|x| x * x).sum();
        let shift = h[0] * h[2] + h[1] * h[3];
        let moment0: f64 = g.iter().sum();
        let moment1: f64 = g.iter().enumerate().map(|(l, x)| l as f64 * x).sum();
        assert!((sum_h - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((energy - 1.0).abs() < 1e-12);
        assert!(shift.abs() < 1e-12);
        assert!(moment0.abs() < 1e-12 && moment1.abs() < 1e-12);
        assert!(identity_families(&f) < 1e-12);
    }

    #[test]
    fn haar_table_is_indicator() {
        for r in [1, 4, 10] {
            let t = cascade(&haar_filter(), r).unwrap();
            assert_eq!(t.interpolation(), Interpolation::Step);
            let unit = 1usize << r;
            assert!(t.values()[..unit].iter().all(|&v| (v - 1.0).abs() < 1e-15));
            assert_eq!(t.values()[unit], 0.0);
            assert!((t.eval(0.999_999) - 1.0).abs() < 1e-15);
            assert_eq!(t.eval(1.0), 0.0);
            assert_eq!(t.eval(-0.1), 0.0);
        }
    }

    #[test]
    fn haar_refinement_pointwise() {
        let t = cascade(&haar_filter(), 8).unwrap();
        for i in -50..150 {
            let x = i as f64 / 97.0;
            assert_eq!(t.eval(x), t.eval(2.0 * x) + t.eval(2.0 * x - 1.0));
        }
    }

    #[test]
    fn d4_integer_values() {
        // interior fixed point of [[sqrt2 h1, sqrt2 h0], [sqrt2 h3, sqrt2 h2]]
        let t = cascade(&d4_filter(), 10).unwrap();
        let unit = 1 << 10;
        assert!(t.values()[0].abs() < 1e-12);
        assert!((t.values()[unit] - (1.0 + S3) / 2.0).abs() < 1e-10);
        assert!((t.values()[2 * unit] - (1.0 - S3) / 2.0).abs() < 1e-10);
        assert_eq!(t.values()[3 * unit], 0.0);
        assert_eq!(t.interpolation(), Interpolation::Linear);
    }

    #[test]
    fn d4_dyadic_half_points() {
        // phi(1/2) = sqrt2 h0 phi(1), phi(3/2) = sqrt2 (h1 phi(2) + h2 phi(1)),
        // phi(5/2) = sqrt2 h3 phi(2)
        let f = d4_filter();
        let (p1, p2) = ((1.0 + S3) / 2.0, (1.0 - S3) / 2.0);
        let s2 = std::f64::consts::SQRT_2;
        let t = cascade(&f, 3).unwrap();
        assert!((t.eval(0.5) - s2 * f.h()[0] * p1).abs() < 1e-12);
        assert!((t.eval(1.5) - s2 * (f.h()[1] * p2 + f.h()[2] * p1)).abs() < 1e-12);
        assert!((t.eval(2.5) - s2 * f.h()[3] * p2).abs() < 1e-12);
    }

    #[test]
    fn cascade_residuals() {
        for f in [haar_filter(), d4_filter()] {
            let t = cascade(&f, 10).unwrap();
            assert!(t.refinement_residual(&f) <= 1e-8);
            assert!(t.partition_of_unity_error() <= 1e-6);
        }
        assert!(cascade(&haar_filter(), 0).is_err());
    }

    #[test]
    fn cascade_rejects_non_refinable_filter() {
        let bogus = ScalingFilter::from_h(WaveletKind::D4, vec![0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(cascade(&bogus, 4), Err(Error::Cascade(_))));
    }

    #[test]
    fn table_csv_header() {
        let t = cascade(&haar_filter(), 1).unwrap();
        let csv = t.to_csv();
        let rows: Vec<(f64, f64)> = csv
            .lines()
            .skip(1)
            .map(|l| {
                let (x, v) = l.split_once(',').unwrap();
                (x.parse().unwrap(), v.parse().unwrap())
            })
            .collect();
        assert!(csv.starts_with("x,phi\n"));
        assert_eq!(rows.len(), 3);
        for ((x, v), (wx, wv)) in rows.into_iter().zip([(0.0, 1.0), (0.5, 1.0), (1.0, 0.0)]) {
            assert_eq!(x, wx);
            assert!((v - wv).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_eval_haar() {
        let t = cascade(&haar_filter(), 10).unwrap();
        let s0 = WaveletSieve::new(haar_filter(), 2, 0, 0).unwrap();
        assert!((phi_eval(&s0, &t, &[0, 0], &[0.5, 0.5]) - 1.0).abs() < 1e-15);
        let s1 = WaveletSieve::new(haar_filter(), 2, 1, 1).unwrap();
        assert!((phi_eval(&s1, &t, &[0, 0], &[0.2, 0.2]) - 2.0).abs() < 1e-15);
        assert_eq!(phi_eval(&s1, &t, &[0, 0], &[0.7, 0.2]), 0.0);
        let d4 = cascade(&d4_filter(), 10).unwrap();
        let s = WaveletSieve::new(d4_filter(), 2, 2, 3).unwrap();
        assert_eq!(phi_eval(&s, &d4, &[0, 0], &[-0.1, 0.3]), 0.0);
        assert_eq!(phi_eval(&s, &d4, &[0, 0], &[0.3, 0.75]), 0.0);
    }

    #[test]
    fn scaled_partition_of_unity() {
        let d4 = cascade(&d4_filter(), 10).unwrap();
        let sieve = WaveletSieve::unit_cube(d4_filter(), 2, 2).unwrap();
        for &x in &[[0.1, 0.2], [0.5, 0.5], [0.33, 0.91], [0.77, 0.01]] {
            let total: f64 = sieve
                .translations()
                .iter()
                .map(|g| phi_eval(&sieve, &d4, g, &x))
                .sum();
            assert!((total - 4.0).abs() < 1e-5, "{total}");
        }
    }

    #[test]
    fn haar_orthonormal_at_scale() {
        let t = cascade(&haar_filter(), 12).unwrap();
        let sieve = WaveletSieve::unit_cube(haar_filter(), 1, 2).unwrap();
        let step = 2f64.powi(-12);
        let grid: Vec<f64> = (0..4096).map(|i| (i as f64 + 0.5) * step).collect();
        for a in sieve.translations() {
            for b in sieve.translations() {
                let ip: f64 = grid
                    .iter()
                    .map(|&x| phi_eval(&sieve, &t, a, &[x]) * phi_eval(&sieve, &t, b, &[x]))
                    .sum::<f64>()
                    * step;
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn translation_boxes() {
        assert_eq!(translation_set(0, 2, None), vec![vec![0, 0]]);
        assert_eq!(translation_set(1, 2, None).len(), 9);
        assert_eq!(translation_set(2, 1, None), vec![vec![-2], vec![-1], vec![0], vec![1], vec![2]]);
        let set = translation_set(1, 2, None);
        assert!(set.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn covering_sieves() {
        let haar = WaveletSieve::unit_cube(haar_filter(), 1, 3).unwrap();
        assert_eq!(haar.translations(), (0..8).map(|g| vec![g]).collect::<Vec<_>>());
        assert_eq!(haar.width(), 7);
        let d4 = WaveletSieve::unit_cube(d4_filter(), 2, 1).unwrap();
        assert_eq!(d4.len(), 16);
        assert_eq!(d4.translations()[0], vec![-2, -2]);
        assert_eq!(d4.translations()[15], vec![1, 1]);
        let coarse = WaveletSieve::unit_cube(haar_filter(), 2, 0).unwrap();
        assert_eq!(coarse.translations(), &[vec![0, 0]]);
    }

    fn tensor_identity(f: &ScalingFilter, d: usize) -> f64 {
        let fams = mother_tensor_coeffs(f, d);
        let m = 2f64.powi(d as i32);
        let mut worst: f64 = 0.0;
        let gammas = translation_set(2, d, None);
        for fj in &fams {
            for fk in &fams {
                for gamma in &gammas {
                    let sum: f64 = fj
                        .support()
                        .iter()
                        .map(|gp| {
                            let shifted: Vec<i64> =
                                gamma.iter().zip(gp).map(|(g, p)| 2 * g + p).collect();
                            fj.coeff(gp) * fk.coeff(&shifted)
                        })
                        .sum();
                    let want = if fj.k == fk.k && gamma.iter().all(|&g| g == 0) { m } else { 0.0 };
                    worst = worst.max((sum - want).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn tensor_coefficient_sums() {
        let one = mother_tensor_coeffs(&haar_filter(), 1);
        assert_eq!(one[0].k, vec![0]);
        let s: f64 = one[0].support().iter().map(|g| one[0].coeff(g)).sum();
        assert!((s - 2.0).abs() < 1e-15);
        let two = mother_tensor_coeffs(&haar_filter(), 2);
        assert_eq!(two.len(), 4);
        let s: f64 = two[0].support().iter().map(|g| two[0].coeff(g)).sum();
        assert!((s - 4.0).abs() < 1e-14);
        assert!(tensor_identity(&haar_filter(), 2) < 1e-12);
        assert!(tensor_identity(&d4_filter(), 2) < 1e-12);
    }

    proptest! {
        #[test]
        fn unit_cube_sieve_covers_every_point(x in 0.0f64..1.0, y in 0.0f64..1.0, j in 0i32..4) {
            for kind in [WaveletKind::Haar, WaveletKind::D4] {
                let t = cascade(&kind.filter(), 10).unwrap();
                let sieve = WaveletSieve::unit_cube(kind.filter(), 2, j).unwrap();
                let full = WaveletSieve::new(kind.filter(), 2, j, sieve.width() + 2).unwrap();
                let kept: f64 = sieve.translations().iter().map(|g| phi_eval(&sieve, &t, g, &[x, y])).sum();
                let all: f64 = full.translations().iter().map(|g| phi_eval(&full, &t, g, &[x, y])).sum();
                prop_assert!((kept - all).abs() < 1e-12);
            }
        }
    }
}
