//! Entry-wise tests of `H_ij: no difference at (i, j)` with asymptotic FDR
//! control.
//!
//! Both procedures start from node-wise lasso residuals ε̂ of each condition
//! and the bias-corrected residual covariances
//!
//! ```text
//! r̃ᵢⱼ = ε̂ᵢᵀε̂ⱼ / n
//! r̂ᵢⱼ = −(r̃ᵢⱼ + r̃ⱼⱼ·β̂ᵢ,ⱼ + r̃ᵢᵢ·β̂ⱼ,ᵢ)      (i ≠ j)
//! ```
//!
//! where β̂ᵢ,ⱼ is the coefficient of variable j in the regression of i. Then
//! r̂ᵢⱼ/(r̃ᵢᵢr̃ⱼⱼ) estimates Ωᵢⱼ and −r̂ᵢⱼ/√(r̃ᵢᵢr̃ⱼⱼ) the partial correlation.
//!
//! * PMat standardizes `T⁽¹⁾ − T⁽²⁾` with `θ = (1 + ρ̂²)/(n r̃ᵢᵢ r̃ⱼⱼ)` per condition.
//! * PCor compares Fisher z-transforms of the partial correlations.
//!
//! The threshold is the smallest t on a grid over `[0, √(4 log p)]` with
//! `p(p−1)(1 − Φ(t)) / max(R(t), 1) ≤ α`, else `√(4 log p)`.

use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use super::nodewise::{default_lambdas, nodewise_regressions_with};
use super::{DifferentialEstimate, Diagnostics, Method, Param};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::{DataMatrix, SymMatrix};

pub const FDR_GRID: usize = 512;
/// Residual variances at or below this are treated as degenerate.
pub const MIN_RESIDUAL_VARIANCE: f64 = 1e-12;
const RHO_CLAMP: f64 = 1.0 - 1e-12;

/// Standardized statistics for every pair; reusable across α.
#[derive(Clone, Debug)]
pub struct TestStatistics {
    pub method: Method,
    /// Symmetric with zero diagonal.
    pub w: SymMatrix,
}

impl TestStatistics {
    pub fn p(&self) -> usize {
        self.w.dim()
    }

    fn upper_abs(&self) -> Vec<f64> {
        let p = self.p();
        let mut v = Vec::with_capacity(p * p.saturating_sub(1) / 2);
        for i in 0..p {
            for j in (i + 1)..p {
                v.push(self.w.get(i, j).abs());
            }
        }
        v
    }

    pub fn threshold(&self, alpha: f64) -> Result<f64> {
        fdr_threshold(&self.upper_abs(), self.p(), alpha)
    }

    /// Rejects every pair with `|W| ≥ t̂(α)`.
    pub fn estimate(&self, alpha: f64) -> Result<DifferentialEstimate> {
        let t = self.threshold(alpha)?;
        let p = self.p();
        let mut edges = Graph::empty(p);
        for i in 0..p {
            for j in (i + 1)..p {
                if self.w.get(i, j).abs() >= t {
                    edges.add_edge(i, j)?;
                }
            }
        }
        Ok(DifferentialEstimate {
            method: self.method,
            edges,
            delta: None,
            param: Param::Alpha(alpha),
            diagnostics: Diagnostics {
                iterations: None,
                threshold: t,
            },
        })
    }
}

/// Upper tail of the standard normal.
pub fn normal_sf(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

/// FDR threshold for `abs_stats`, the |W| values of the p(p−1)/2 pairs.
pub fn fdr_threshold(abs_stats: &[f64], p: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let t_max = (4.0 * (p.max(1) as f64).ln()).sqrt();
    let mut sorted: Vec<f64> = abs_stats.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let pairs = (p * p.saturating_sub(1)) as f64;
    for k in 0..FDR_GRID {
        let t = t_max * k as f64 / (FDR_GRID - 1) as f64;
        let rejected = sorted.partition_point(|&s| s >= t);
        if pairs * normal_sf(t) / rejected.max(1) as f64 <= alpha {
            return Ok(t);
        }
    }
    Ok(t_max)
}

fn check_inputs(x1: &DataMatrix, x2: &DataMatrix) -> Result<()> {
    if x1.p() != x2.p() {
        return Err(Error::arg(format!(
            "conditions have different variable counts: {} vs {}",
            x1.p(),
            x2.p()
        )));
    }
    Ok(())
}

struct ConditionStats {
    n: f64,
    /// r̂ off the diagonal, r̃ on it.
    r: DMatrix<f64>,
    fit: super::nodewise::NodewiseFit,
}

fn condition_stats(x: &DataMatrix, lambda_scale: f64, condition: usize) -> Result<ConditionStats> {
    let fit = nodewise_regressions_with(x, &default_lambdas(x, lambda_scale))?;
    let n = x.n() as f64;
    let rt = fit.residuals.tr_mul(&fit.residuals) / n;
    let p = x.p();
    for i in 0..p {
        if !(rt[(i, i)] > MIN_RESIDUAL_VARIANCE) {
            return Err(Error::DegenerateVariance { variable: i, condition });
        }
    }
    let b = &fit.coefficients;
    let r = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            rt[(i, i)]
        } else {
            // b[(j, i)]: coefficient of j in the regression of i.
            -(rt[(i, j)] + rt[(j, j)] * b[(j, i)] + rt[(i, i)] * b[(i, j)])
        }
    });
    // Average the two triangles; rt and the correction are symmetric up to rounding.
    let r = (&r + r.transpose()) * 0.5;
    Ok(ConditionStats { n, r, fit })
}

fn lambda_scale_ok(s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("lambda scale must be nonnegative, got {s}")))
    }
}

/// PMat statistics: standardized differences of bias-corrected precision entries.
pub fn pmat_statistics(x1: &DataMatrix, x2: &DataMatrix, lambda_scale: f64) -> Result<TestStatistics> {
    check_inputs(x1, x2)?;
    lambda_scale_ok(lambda_scale)?;
    let a = condition_stats(x1, lambda_scale, 1)?;
    let b = condition_stats(x2, lambda_scale, 2)?;
    let p = x1.p();
    let entry = |c: &ConditionStats, i: usize, j: usize| {
        let (rii, rjj, rij) = (c.r[(i, i)], c.r[(j, j)], c.r[(i, j)]);
        let t = rij / (rii * rjj);
        let rho2 = (rij * rij / (rii * rjj)).min(1.0);
        let theta = (1.0 + rho2) / (c.n * rii * rjj);
        (t, theta)
    };
    let w = SymMatrix::from_upper_fn(p, |i, j| {
        if i == j {
            return 0.0;
        }
        let (t1, v1) = entry(&a, i, j);
        let (t2, v2) = entry(&b, i, j);
        (t1 - t2) / (v1 + v2).sqrt()
    });
    Ok(TestStatistics { method: Method::PMat, w })
}

/// PCor statistics: standardized differences of Fisher-transformed partial
/// correlations.
pub fn pcor_statistics(x1: &DataMatrix, x2: &DataMatrix, lambda_scale: f64) -> Result<TestStatistics> {
    check_inputs(x1, x2)?;
    lambda_scale_ok(lambda_scale)?;
    let a = condition_stats(x1, lambda_scale, 1)?;
    let b = condition_stats(x2, lambda_scale, 2)?;
    let p = x1.p();
    let supports = |c: &ConditionStats| -> Vec<Vec<bool>> {
        (0..p)
            .map(|j| {
                let mut s = vec![false; p];
                for k in c.fit.support(j) {
                    s[k] = true;
                }
                s
            })
            .collect()
    };
    let (sa, sb) = (supports(&a), supports(&b));
    let z_and_var = |c: &ConditionStats, s: &[Vec<bool>], i: usize, j: usize| {
        let rho = (-c.r[(i, j)] / (c.r[(i, i)] * c.r[(j, j)]).sqrt()).clamp(-RHO_CLAMP, RHO_CLAMP);
        let selected = (0..p).filter(|&k| k != i && k != j && (s[i][k] || s[j][k])).count();
        let adj = selected.max(3) as f64;
        (rho.atanh(), 1.0 / (c.n - adj).max(1.0))
    };
    let w = SymMatrix::from_upper_fn(p, |i, j| {
        if i == j {
            return 0.0;
        }
        let (z1, v1) = z_and_var(&a, &sa, i, j);
        let (z2, v2) = z_and_var(&b, &sb, i, j);
        (z1 - z2) / (v1 + v2).sqrt()
    });
    Ok(TestStatistics { method: Method::PCor, w })
}

pub fn pmat_test(x1: &DataMatrix, x2: &DataMatrix, alpha: f64) -> Result<DifferentialEstimate> {
    pmat_statistics(x1, x2, 1.0)?.estimate(alpha)
}

pub fn pcor_test(x1: &DataMatrix, x2: &DataMatrix, alpha: f64) -> Result<DifferentialEstimate> {
    pcor_statistics(x1, x2, 1.0)?.estimate(alpha)
}

/// `ρᵢⱼ = −Ωᵢⱼ/√(ΩᵢᵢΩⱼⱼ)` off the diagonal, 1 on it.
pub fn partial_correlations(omega: &SymMatrix) -> SymMatrix {
    let p = omega.dim();
    SymMatrix::from_upper_fn(p, |i, j| {
        if i == j {
            1.0
        } else {
            -omega.get(i, j) / (omega.get(i, i) * omega.get(j, j)).sqrt()
        }
    })
}
