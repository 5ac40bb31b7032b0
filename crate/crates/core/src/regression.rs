//! Truncated least-squares regression over a wavelet sieve.
//!
//! The estimator minimizes the empirical squared error over the span of the
//! sieve functions `Phi_{j,gamma}` (minimum-norm solution through a
//! truncated singular value decomposition) and clamps predictions to
//! `[-rho, rho]`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::{phi_eval, PhiTable, WaveletKind, WaveletSieve};

/// Relative singular-value cutoff used when none is given.
pub const DEFAULT_SVD_RTOL: f64 = 1e-10;

/// Design sites and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if points.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: y.len(),
            });
        }
        let d = points.first().map_or(0, Vec::len);
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
        if points.iter().flatten().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(Self { points, y })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Rows `x_1,...,x_d,y`; a non-numeric first line is taken as a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut y = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let fields = match fields {
                Ok(f) => f,
                Err(_) if points.is_empty() && idx == 0 => continue,
                Err(e) => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: e.to_string(),
                    })
                }
            };
            if fields.len() < 2 {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: "need at least one coordinate and a response".into(),
                });
            }
            let (resp, x) = fields.split_last().expect("non-empty");
            y.push(*resp);
            points.push(x.to_vec());
        }
        Self::new(points, y)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = (1..=d).map(|i| format!("x{i},")).collect::<String>();
        out.push_str("y\n");
        for (p, y) in self.points.iter().zip(&self.y) {
            for v in p {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{y}");
        }
        out
    }
}

/// Matrix with entry `(s, gamma) = Phi_{j,gamma}(X(s))`; columns follow the
/// lexicographic order of the sieve's translations.
pub fn design_matrix(data: &Dataset, sieve: &WaveletSieve, table: &PhiTable) -> Result<DMatrix<f64>> {
    design_matrix_points(data.points(), sieve, table)
}

fn design_matrix_points(
    points: &[Vec<f64>],
    sieve: &WaveletSieve,
    table: &PhiTable,
) -> Result<DMatrix<f64>> {
    check_table(sieve, table)?;
    if let Some(p) = points.iter().find(|p| p.len() != sieve.dim()) {
        return Err(Error::DimensionMismatch {
            expected: sieve.dim(),
            found: p.len(),
        });
    }
    let cols = sieve.len();
    let rows: Vec<f64> = points
        .par_iter()
        .flat_map_iter(|x| {
            sieve
                .translations()
                .iter()
                .map(move |g| phi_eval(sieve, table, g, x))
        })
        .collect();
    Ok(DMatrix::from_row_slice(points.len(), cols, &rows))
}

fn check_table(sieve: &WaveletSieve, table: &PhiTable) -> Result<()> {
    if table.kind() != sieve.filter().kind() {
        return Err(Error::InvalidArgument(format!(
            "table for {} used with a {} sieve",
            table.kind(),
            sieve.filter().kind()
        )));
    }
    Ok(())
}

/// Diagnostics of the truncated singular value decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdReport {
    pub rank: usize,
    /// `sigma_max / sigma_min` over retained values; infinite when none kept.
    #[serde(with = "nonfinite_as_null")]
    pub condition_number: f64,
    #[serde(with = "nonfinite_as_null")]
    pub largest_singular_value: f64,
    pub dropped: Vec<f64>,
    /// All singular values fell below the cutoff; coefficients are zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    sieve: WaveletSieve,
    coeffs: Vec<f64>,
    rho: f64,
    svd_report: SvdReport,
}

impl RegressionFit {
    /// Assembles a fit from known coefficients (no decomposition performed).
    pub fn from_parts(sieve: WaveletSieve, coeffs: Vec<f64>, rho: f64) -> Result<Self> {
        if coeffs.len() != sieve.len() {
            return Err(Error::DimensionMismatch {
                expected: sieve.len(),
                found: coeffs.len(),
            });
        }
        if !(rho >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "truncation bound must be >= 0, got {rho}"
            )));
        }
        Ok(Self {
            sieve,
            coeffs,
            rho,
            svd_report: SvdReport {
                rank: 0,
                condition_number: f64::INFINITY,
                largest_singular_value: 0.0,
                dropped: Vec::new(),
                degenerate: false,
            },
        })
    }

    pub fn sieve(&self) -> &WaveletSieve {
        &self.sieve
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn svd_report(&self) -> &SvdReport {
        &self.svd_report
    }

    pub fn to_record(&self) -> FitRecord {
        FitRecord {
            filter: self.sieve.filter().kind(),
            d: self.sieve.dim(),
            j: self.sieve.level(),
            w: self.sieve.width(),
            rho: self.rho.is_finite().then_some(self.rho),
            svd_report: self.svd_report.clone(),
            coefficients: self
                .sieve
                .translations()
                .iter()
                .zip(&self.coeffs)
                .map(|(g, &value)| Coefficient {
                    gamma: g.clone(),
                    value,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<FitRecord>(text)?.into_fit()
    }
}

/// JSON form of a [`RegressionFit`]. `rho = null` means no truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub filter: WaveletKind,
    pub d: usize,
    pub j: i32,
    pub w: u32,
    pub rho: Option<f64>,
    pub svd_report: SvdReport,
    pub coefficients: Vec<Coefficient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub gamma: Vec<i64>,
    pub value: f64,
}

impl FitRecord {
    pub fn into_fit(self) -> Result<RegressionFit> {
        let translations: Vec<Vec<i64>> = self.coefficients.iter().map(|c| c.gamma.clone()).collect();
        if translations.iter().any(|g| g.len() != self.d) {
            return Err(Error::InvalidArgument("translation dimension differs from d".into()));
        }
        let sieve = WaveletSieve::with_translations(
            self.filter.filter(),
            self.d,
            self.j,
            self.w,
            translations,
        )?;
        let mut fit = RegressionFit::from_parts(
            sieve,
            self.coefficients.iter().map(|c| c.value).collect(),
            self.rho.unwrap_or(f64::INFINITY),
        )?;
        fit.svd_report = self.svd_report;
        Ok(fit)
    }
}

/// Minimum-norm least-squares fit; singular values below
/// `svd_rtol * sigma_max` are discarded.
pub fn fit(
    data: &Dataset,
    sieve: &WaveletSieve,
    table: &PhiTable,
    rho: f64,
    svd_rtol: f64,
) -> Result<RegressionFit> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot fit an empty dataset".into()));
    }
    if !(svd_rtol >= 0.0) {
        return Err(Error::InvalidArgument(format!("svd_rtol must be >= 0, got {svd_rtol}")));
    }
    let a = design_matrix(data, sieve, table)?;
    let y = DVector::from_column_slice(data.y());
    let (coeffs, report) = truncated_svd_solve(a, &y, svd_rtol);
    if report.degenerate {
        log::warn!(
            "degenerate design for {} level {}: all singular values dropped",
            sieve.filter().name(),
            sieve.level()
        );
    }
    let mut out = RegressionFit::from_parts(sieve.clone(), coeffs, rho)?;
    out.svd_report = report;
    Ok(out)
}

/// Solves `min ||A x - y||` with minimum norm via the singular value
/// decomposition, keeping singular values `>= rtol * sigma_max`.
pub fn truncated_svd_solve(a: DMatrix<f64>, y: &DVector<f64>, rtol: f64) -> (Vec<f64>, SvdReport) {
    let cols = a.ncols();
    if a.nrows() == 0 || cols == 0 {
        return (
            vec![0.0; cols],
            SvdReport {
                rank: 0,
                condition_number: f64::INFINITY,
                largest_singular_value: 0.0,
                dropped: Vec::new(),
                degenerate: true,
            },
        );
    }
    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.max();
    let cutoff = rtol * sigma_max;
    let mut x = DVector::zeros(cols);
    let mut rank = 0;
    let mut sigma_min = f64::INFINITY;
    let mut dropped = Vec::new();
    for (k, &s) in sigma.iter().enumerate() {
        if s > 0.0 && s >= cutoff {
            rank += 1;
            sigma_min = sigma_min.min(s);
            let weight = u.column(k).dot(y) / s;
            x += weight * v_t.row(k).transpose();
        } else {
            dropped.push(s);
        }
    }
    dropped.sort_by(|a, b| b.total_cmp(a));
    let report = SvdReport {
        rank,
        condition_number: if rank > 0 { sigma_max / sigma_min } else { f64::INFINITY },
        largest_singular_value: sigma_max,
        dropped,
        degenerate: rank == 0,
    };
    (x.data.into(), report)
}

/// Clamps `y` to `[-bound, bound]`.
pub fn truncate_value(y: f64, bound: f64) -> f64 {
    y.clamp(-bound, bound)
}

/// Untruncated sieve expansion `sum_gamma a_gamma Phi_{j,gamma}(x)`.
pub fn predict_raw(fit: &RegressionFit, table: &PhiTable, x: &[f64]) -> f64 {
    fit.sieve
        .translations()
        .iter()
        .zip(&fit.coeffs)
        .filter(|(_, &a)| a != 0.0)
        .map(|(g, &a)| a * phi_eval(&fit.sieve, table, g, x))
        .sum()
}

pub fn predict(fit: &RegressionFit, table: &PhiTable, x: &[f64]) -> f64 {
    truncate_value(predict_raw(fit, table, x), fit.rho)
}

/// `c * ln(sample_size)`.
pub fn default_rho(sample_size: usize, c: f64) -> Result<f64> {
    if sample_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "default_rho needs sample_size >= 2, got {sample_size}"
        )));
    }
    log_bound(sample_size as f64, c)
}

fn log_bound(size: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("truncation constant must be > 0, got {c}")));
    }
    Ok(c * size.ln())
}

/// Truncation bound with `c = max(1, 2 max|Y| / ln n)`, i.e.
/// `rho = max(ln n, 2 max|Y|)`.
pub fn auto_rho(y: &[f64]) -> Result<f64> {
    let n = y.len();
    let max_abs = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let log_n = (n.max(2) as f64).ln();
    default_rho(n.max(2), (2.0 * max_abs / log_n).max(1.0))
}

/// The `j` with `2^j <= n^{1/(d + 2r)} < 2^{j+1}`.
pub fn select_level(sample_size: usize, d: usize, r: f64) -> Result<i32> {
    if sample_size < 2 || d == 0 || !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "select_level needs n >= 2, d >= 1, r in (0, 1]; got {sample_size}, {d}, {r}"
        )));
    }
    let log2_a = (sample_size as f64).log2() / (d as f64 + 2.0 * r);
    // exact powers such as 4096^(1/4) = 8 must land on the lower boundary
    Ok((log2_a + 1e-12).floor() as i32)
}

/// `mean (pred - truth)^2`.
pub fn mean_squared_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.len(),
            found: truth.len(),
        });
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Monte-Carlo `L^2(mu_X)` error over the test sites:
/// `|V_T|^{-1} sum_s (m_hat(X(s)) - m(X(s)))^2`.
pub fn l2_error_mc<F>(fit: &RegressionFit, table: &PhiTable, m_true: F, test_x: &[Vec<f64>]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if test_x.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let pred: Vec<f64> = test_x.iter().map(|x| predict(fit, table, x)).collect();
    let truth: Vec<f64> = test_x.iter().map(|x| m_true(x)).collect();
    mean_squared_error(&pred, &truth)
}

mod nonfinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
