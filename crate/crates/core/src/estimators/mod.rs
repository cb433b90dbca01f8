//! Differential network estimators.
//!
//! Two penalized estimators ([`dtrace`], [`fgl`]) and two entry-wise multiple
//! testing procedures ([`testing`]) built on node-wise lasso regressions
//! ([`nodewise`]). [`bic`] selects tuning parameters on real data.

pub mod bic;
pub mod dtrace;
pub mod fgl;
pub mod nodewise;
pub mod testing;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::SymMatrix;

pub use bic::{bic_select, fgl_two_stage, BicSelection, FglSelection, FglWeights};
pub use dtrace::{
    dtrace_differential, dtrace_fit, dtrace_gradient, dtrace_kkt_residual, dtrace_loss, dtrace_path, DTraceFit,
};
pub use fgl::{
    fgl_differential, fgl_fit, fgl_fit_warm, fgl_kkt_residual, fgl_objective, fgl_path, FglFit, FglState,
};
pub use nodewise::{nodewise_regressions, nodewise_regressions_with, NodewiseFit};
pub use testing::{
    fdr_threshold, partial_correlations, pcor_statistics, pcor_test, pmat_statistics, pmat_test, TestStatistics,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fgl,
    DTrace,
    PCor,
    PMat,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fgl, Method::DTrace, Method::PCor, Method::PMat];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fgl => "fgl",
            Method::DTrace => "dtrace",
            Method::PCor => "pcor",
            Method::PMat => "pmat",
        }
    }

    /// Whether the method is a multiple-testing procedure tuned by an FDR level.
    pub fn is_test(self) -> bool {
        matches!(self, Method::PCor | Method::PMat)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fgl" => Ok(Method::Fgl),
            "dtrace" => Ok(Method::DTrace),
            "pcor" => Ok(Method::PCor),
            "pmat" => Ok(Method::PMat),
            other => Err(Error::arg(format!(
                "unknown method {other:?} (expected fgl, dtrace, pcor or pmat)"
            ))),
        }
    }
}

/// Tuning value an estimate was produced at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Param {
    Lambda(f64),
    Lambdas { lambda1: f64, lambda2: f64 },
    Alpha(f64),
}

impl Param {
    /// The value that varies along a curve: λ, λ₂, or α.
    pub fn sweep_value(&self) -> f64 {
        match *self {
            Param::Lambda(l) => l,
            Param::Lambdas { lambda2, .. } => lambda2,
            Param::Alpha(a) => a,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Solver iterations, for the penalized estimators.
    pub iterations: Option<usize>,
    /// Entry threshold used to read off edges (|Δ̂ᵢⱼ| cutoff, or the test threshold t̂).
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub struct DifferentialEstimate {
    pub method: Method,
    pub edges: Graph,
    /// Δ̂ for DTrace, Ω̂⁽¹⁾ − Ω̂⁽²⁾ for FGL.
    pub delta: Option<SymMatrix>,
    pub param: Param,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub admm_rho: f64,
    pub max_iter: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub diff_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            admm_rho: 1.0,
            max_iter: 500,
            tol_abs: 1e-5,
            tol_rel: 1e-4,
            diff_threshold: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("admm_rho", self.admm_rho),
            ("tol_abs", self.tol_abs),
            ("tol_rel", self.tol_rel),
            ("diff_threshold", self.diff_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::arg(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::arg("max_iter must be positive"));
        }
        Ok(())
    }
}

/// Edges are the off-diagonal pairs with `|delta| > threshold` (strict).
pub(crate) fn support_graph(delta: &SymMatrix, threshold: f64) -> Graph {
    let p = delta.dim();
    let mut g = Graph::empty(p);
    for (i, j) in delta.off_diagonal_support(threshold) {
        g.add_edge(i, j).expect("support pairs are off-diagonal and in range");
    }
    g
}

pub(crate) fn check_pair(s1: &SymMatrix, s2: &SymMatrix) -> Result<()> {
    if s1.dim() != s2.dim() {
        return Err(Error::arg(format!(
            "covariance dimensions differ: {} vs {}",
            s1.dim(),
            s2.dim()
        )));
    }
    let finite = |m: &SymMatrix| m.as_matrix().iter().all(|v| v.is_finite());
    if !finite(s1) || !finite(s2) {
        return Err(Error::InvalidData("non-finite covariance entry".into()));
    }
    Ok(())
}

/// Relabels variables: entry `(i, j)` of the input lands at `(perm[i], perm[j])`.
pub fn permute_estimate(est: &DifferentialEstimate, perm: &[usize]) -> DifferentialEstimate {
    DifferentialEstimate {
        method: est.method,
        edges: est.edges.permuted(perm),
        delta: est.delta.as_ref().map(|d| d.permuted(perm)),
        param: est.param,
        diagnostics: est.diagnostics.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("ondsa".parse::<Method>().is_err());
        assert!(Method::PMat.is_test() && !Method::Fgl.is_test());
    }

    #[test]
    fn default_solver_config() {
        let c = SolverConfig::default();
        assert_eq!((c.admm_rho, c.max_iter), (1.0, 500));
        assert_eq!((c.tol_abs, c.tol_rel, c.diff_threshold), (1e-5, 1e-4, 1e-3));
        c.validate().unwrap();
        let bad = SolverConfig {
            tol_abs: 0.0,
            ..c
        };
        assert!(bad.validate().is_err());
    }
}
