//! BIC selection of penalty parameters for the penalized estimators.
//!
//! ```text
//! FGL:    Σₖ nₖ[tr(SₖΩ̂ₖ) − log det Ω̂ₖ] + log(nₖ)·|Ω̂ₖ|₀
//! DTrace: (n₁+n₂)·L_D(Δ̂) + log(n₁+n₂)·|Δ̂|₀
//! ```
//!
//! with `|·|₀` the number of nonzero upper-triangle entries, diagonal included.

use serde::{Deserialize, Serialize};

use super::dtrace::{dtrace_loss, dtrace_path, DTraceFit};
use super::fgl::{fgl_fit_warm, FglFit, FglState};
use super::{Method, Param, SolverConfig};
use crate::error::{Error, Result};
use crate::matrix::{log_det_spd, sample_covariance, DataMatrix, SymMatrix};

/// Likelihood weights used when fitting FGL.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FglWeights {
    /// Both conditions weigh 1.
    #[default]
    Equal,
    /// Each condition weighs its sample size.
    SampleSize,
}

impl FglWeights {
    pub fn weights(self, n1: usize, n2: usize) -> (f64, f64) {
        match self {
            FglWeights::Equal => (1.0, 1.0),
            FglWeights::SampleSize => (n1 as f64, n2 as f64),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BicSelection {
    /// Index into the grid as given.
    pub index: usize,
    pub param: Param,
    /// BIC per grid point; `None` where the fit failed.
    pub scores: Vec<Option<f64>>,
    /// Model sizes per grid point.
    pub sizes: Vec<Option<usize>>,
    /// The minimum sits at the smallest or largest grid value.
    pub boundary: bool,
}

fn nnz_upper(m: &SymMatrix) -> usize {
    let p = m.dim();
    (0..p)
        .flat_map(|i| (i..p).map(move |j| (i, j)))
        .filter(|&(i, j)| m.get(i, j) != 0.0)
        .count()
}

pub fn dtrace_bic(s1: &SymMatrix, s2: &SymMatrix, n1: usize, n2: usize, delta: &SymMatrix) -> f64 {
    let n = (n1 + n2) as f64;
    n * dtrace_loss(s1, s2, delta) + n.ln() * nnz_upper(delta) as f64
}

pub fn fgl_bic(
    s1: &SymMatrix,
    s2: &SymMatrix,
    n1: usize,
    n2: usize,
    omega1: &SymMatrix,
    omega2: &SymMatrix,
) -> Result<f64> {
    let term = |s: &SymMatrix, o: &SymMatrix, n: usize| -> Result<f64> {
        let n = n as f64;
        Ok(n * (s.inner(o) - log_det_spd(o)?) + n.ln() * nnz_upper(o) as f64)
    };
    Ok(term(s1, omega1, n1)? + term(s2, omega2, n2)?)
}

/// Picks the grid point with the smallest score; ties go to the smaller
/// model, then to the earlier grid position.
fn argmin(scores: &[Option<f64>], sizes: &[Option<usize>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, s) in scores.iter().enumerate() {
        let Some(s) = *s else { continue };
        match best {
            None => best = Some(k),
            Some(b) => {
                let bs = scores[b].expect("best has a score");
                if s < bs || (s == bs && sizes[k] < sizes[b]) {
                    best = Some(k);
                }
            }
        }
    }
    best
}

fn is_boundary(values: &[f64], scores: &[Option<f64>], index: usize) -> bool {
    let ok: Vec<f64> = values
        .iter()
        .zip(scores)
        .filter(|(_, s)| s.is_some())
        .map(|(v, _)| *v)
        .collect();
    if ok.len() < 3 {
        return false;
    }
    let lo = ok.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ok.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values[index] == lo || values[index] == hi
}

fn finish(grid: &[Param], scores: Vec<Option<f64>>, sizes: Vec<Option<usize>>, first_err: Option<Error>) -> Result<BicSelection> {
    let Some(index) = argmin(&scores, &sizes) else {
        return Err(first_err.unwrap_or_else(|| Error::arg("empty grid")));
    };
    let values: Vec<f64> = grid.iter().map(Param::sweep_value).collect();
    let boundary = is_boundary(&values, &scores, index);
    Ok(BicSelection {
        index,
        param: grid[index],
        scores,
        sizes,
        boundary,
    })
}

/// Scores every grid point and returns the BIC minimizer. DTrace grids hold
/// `Param::Lambda`, FGL grids `Param::Lambdas`; data are column-centered.
pub fn bic_select(
    method: Method,
    x1: &DataMatrix,
    x2: &DataMatrix,
    grid: &[Param],
    cfg: &SolverConfig,
    weights: FglWeights,
) -> Result<BicSelection> {
    if grid.is_empty() {
        return Err(Error::arg("BIC grid is empty"));
    }
    let s1 = sample_covariance(x1, true);
    let s2 = sample_covariance(x2, true);
    let (n1, n2) = (x1.n(), x2.n());
    let mut first_err = None;
    let mut scores = Vec::with_capacity(grid.len());
    let mut sizes = Vec::with_capacity(grid.len());
    match method {
        Method::DTrace => {
            let lambdas = grid
                .iter()
                .map(|g| match g {
                    Param::Lambda(l) => Ok(*l),
                    other => Err(Error::arg(format!("DTrace grid needs a single lambda, got {other:?}"))),
                })
                .collect::<Result<Vec<f64>>>()?;
            for fit in dtrace_path(&s1, &s2, &lambdas, cfg)? {
                match fit {
                    Ok(DTraceFit { delta, .. }) => {
                        scores.push(Some(dtrace_bic(&s1, &s2, n1, n2, &delta)));
                        sizes.push(Some(nnz_upper(&delta)));
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                        scores.push(None);
                        sizes.push(None);
                    }
                }
            }
        }
        Method::Fgl => {
            let (w1, w2) = weights.weights(n1, n2);
            let mut warm: Option<FglState> = None;
            for g in grid {
                let Param::Lambdas { lambda1, lambda2 } = *g else {
                    return Err(Error::arg(format!("FGL grid needs (lambda1, lambda2), got {g:?}")));
                };
                let scored = fgl_fit_warm(&s1, &s2, w1, w2, lambda1, lambda2, cfg, warm.as_ref()).and_then(
                    |f: FglFit| {
                        let b = fgl_bic(&s1, &s2, n1, n2, &f.omega1, &f.omega2)?;
                        let size = nnz_upper(&f.omega1) + nnz_upper(&f.omega2);
                        warm = Some(f.state);
                        Ok((b, size))
                    },
                );
                match scored {
                    Ok((b, size)) => {
                        scores.push(Some(b));
                        sizes.push(Some(size));
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                        scores.push(None);
                        sizes.push(None);
                    }
                }
            }
        }
        Method::PCor | Method::PMat => {
            return Err(Error::arg(format!("{method} is tuned by an FDR level, not by BIC")));
        }
    }
    finish(grid, scores, sizes, first_err)
}

#[derive(Clone, Debug)]
pub struct FglSelection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub stage1: BicSelection,
    pub stage2: BicSelection,
    /// λ₂ came from the maximum second difference because BIC had no interior
    /// minimum.
    pub elbow: bool,
}

/// λ₁ is chosen with λ₂ held at `lambda2_fixed`; then λ₂ is chosen with that
/// λ₁. When the second BIC curve has no interior minimum, the λ₂ with the
/// largest discrete second difference of BIC is taken instead.
pub fn fgl_two_stage(
    x1: &DataMatrix,
    x2: &DataMatrix,
    lambda1_grid: &[f64],
    lambda2_grid: &[f64],
    lambda2_fixed: f64,
    cfg: &SolverConfig,
    weights: FglWeights,
) -> Result<FglSelection> {
    let grid1: Vec<Param> = lambda1_grid
        .iter()
        .map(|&l| Param::Lambdas { lambda1: l, lambda2: lambda2_fixed })
        .collect();
    let stage1 = bic_select(Method::Fgl, x1, x2, &grid1, cfg, weights)?;
    let lambda1 = lambda1_grid[stage1.index];
    let grid2: Vec<Param> = lambda2_grid
        .iter()
        .map(|&l| Param::Lambdas { lambda1, lambda2: l })
        .collect();
    let mut stage2 = bic_select(Method::Fgl, x1, x2, &grid2, cfg, weights)?;
    let mut elbow = false;
    if stage2.boundary {
        if let Some(k) = elbow_index(lambda2_grid, &stage2.scores) {
            stage2.index = k;
            stage2.param = grid2[k];
            elbow = true;
        }
    }
    Ok(FglSelection {
        lambda1,
        lambda2: lambda2_grid[stage2.index],
        stage1,
        stage2,
        elbow,
    })
}

/// Grid index (into the original order) of the largest second difference of
/// the scored points sorted by parameter value.
pub fn elbow_index(values: &[f64], scores: &[Option<f64>]) -> Option<usize> {
    let mut pts: Vec<(f64, f64, usize)> = values
        .iter()
        .zip(scores)
        .enumerate()
        .filter_map(|(k, (&v, s))| s.map(|s| (v, s, k)))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    (1..pts.len() - 1)
        .map(|i| (pts[i - 1].1 - 2.0 * pts[i].1 + pts[i + 1].1, pts[i].2))
        .fold(None, |best: Option<(f64, usize)>, (d, k)| match best {
            Some((bd, _)) if bd >= d => best,
            _ => Some((d, k)),
        })
        .map(|(_, k)| k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::sim::sample_gaussian;

    fn planted_pair(n: usize, seed: u64) -> (DataMatrix, DataMatrix) {
        let p = 6;
        let mut o1 = SymMatrix::identity(p);
        let mut o2 = SymMatrix::identity(p);
        o1.set(0, 1, 0.45);
        o2.set(2, 3, -0.45);
        let s1 = crate::matrix::invert_spd(&o1).unwrap();
        let s2 = crate::matrix::invert_spd(&o2).unwrap();
        (
            sample_gaussian(&s1, n, seed).unwrap(),
            sample_gaussian(&s2, n, seed + 1).unwrap(),
        )
    }

    #[test]
    fn single_point_grid() {
        let (x1, x2) = planted_pair(50, 1);
        let cfg = SolverConfig::default();
        let sel = bic_select(Method::DTrace, &x1, &x2, &[Param::Lambda(0.2)], &cfg, FglWeights::Equal).unwrap();
        assert_eq!(sel.index, 0);
        assert!(!sel.boundary);
        let g = [Param::Lambdas { lambda1: 0.1, lambda2: 0.05 }];
        let sel = bic_select(Method::Fgl, &x1, &x2, &g, &cfg, FglWeights::Equal).unwrap();
        assert_eq!(sel.param, g[0]);
    }

    #[test]
    fn wrong_grid_kinds_are_rejected() {
        let (x1, x2) = planted_pair(30, 2);
        let cfg = SolverConfig::default();
        assert!(bic_select(Method::DTrace, &x1, &x2, &[Param::Alpha(0.1)], &cfg, FglWeights::Equal).is_err());
        assert!(bic_select(Method::Fgl, &x1, &x2, &[Param::Lambda(0.1)], &cfg, FglWeights::Equal).is_err());
        assert!(bic_select(Method::PCor, &x1, &x2, &[Param::Alpha(0.1)], &cfg, FglWeights::Equal).is_err());
        assert!(bic_select(Method::DTrace, &x1, &x2, &[], &cfg, FglWeights::Equal).is_err());
    }

    #[test]
    fn dtrace_selection_finds_planted_edges() {
        let (x1, x2) = planted_pair(2000, 3);
        let grid: Vec<Param> = (1..=20).map(|k| Param::Lambda(0.02 * k as f64)).collect();
        let sel = bic_select(Method::DTrace, &x1, &x2, &grid, &SolverConfig::default(), FglWeights::Equal).unwrap();
        let lam = sel.param.sweep_value();
        let s1 = sample_covariance(&x1, true);
        let s2 = sample_covariance(&x2, true);
        let fit = super::super::dtrace_fit(&s1, &s2, lam, &SolverConfig::default(), None).unwrap();
        let est = fit.estimate(1e-3);
        let truth = Graph::from_edges(6, [(0, 1), (2, 3)]).unwrap();
        assert!(truth.is_subgraph_of(&est.edges), "lambda {lam}: {:?}", est.edges);
    }

    #[test]
    fn ties_prefer_smaller_models() {
        let scores = [Some(1.0), Some(0.5), Some(0.5)];
        assert_eq!(argmin(&scores, &[Some(3), Some(4), Some(2)]), Some(2));
        assert_eq!(argmin(&scores, &[Some(3), Some(2), Some(2)]), Some(1));
        assert_eq!(argmin(&[None, None], &[None, None]), None);
    }

    #[test]
    fn elbow_on_monotone_curve() {
        // Sharp bend at the third point.
        let values = [0.5, 0.1, 0.2, 0.3, 0.4];
        let scores = [Some(0.0), Some(10.0), Some(5.0), Some(0.3), Some(0.1)];
        // Sorted: 10, 5, 0.3, 0.1, 0.0; second differences 0.3, 4.5, 0.1.
        assert_eq!(elbow_index(&values, &scores), Some(3));
        assert_eq!(elbow_index(&values[..2], &scores[..2]), None);
    }

    #[test]
    fn two_stage_runs_and_reports_shape() {
        let (x1, x2) = planted_pair(300, 4);
        let l1 = [0.05, 0.1, 0.2];
        let l2 = [0.01, 0.05, 0.1, 0.2];
        let sel = fgl_two_stage(&x1, &x2, &l1, &l2, 0.01, &SolverConfig::default(), FglWeights::Equal).unwrap();
        assert_eq!(sel.stage1.scores.len(), 3);
        assert_eq!(sel.stage2.scores.len(), 4);
        assert!(l1.contains(&sel.lambda1) && l2.contains(&sel.lambda2));
        for p in &sel.stage1.scores {
            assert!(p.is_some());
        }
    }
}
