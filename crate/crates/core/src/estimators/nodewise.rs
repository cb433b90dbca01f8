//! Node-wise lasso regressions: every variable on all the others.
//!
//! For column `j` the fit minimizes `(1/2n)‖x̃ⱼ − X̃₋ⱼβ‖² + λⱼ‖β‖₁` on
//! column-centered data, by covariance-update coordinate descent on the Gram
//! matrix with an active-set outer loop.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{shrink, DataMatrix};

/// Convergence tolerance on the largest scaled coefficient change in a sweep.
pub const CD_TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;

#[derive(Clone, Debug)]
pub struct NodewiseFit {
    /// `coefficients[(k, j)]` is the coefficient of variable `k` in the
    /// regression of variable `j`; the diagonal is zero.
    pub coefficients: DMatrix<f64>,
    /// n×p; column `j` holds the residuals of regression `j`.
    pub residuals: DMatrix<f64>,
    pub lambdas: Vec<f64>,
}

impl NodewiseFit {
    /// Indices with a nonzero coefficient in regression `j`.
    pub fn support(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        let col = self.coefficients.column(j);
        (0..col.len()).filter(move |&k| col[k] != 0.0)
    }
}

/// `scale · σ̂ⱼ · √(2 log p / n)` per column, σ̂ⱼ the column standard deviation
/// (divisor n).
pub fn default_lambdas(x: &DataMatrix, scale: f64) -> Vec<f64> {
    let (n, p) = (x.n() as f64, x.p());
    let rate = (2.0 * (p.max(2) as f64).ln() / n).sqrt();
    let xc = x.centered();
    xc.column_iter()
        .map(|c| scale * (c.norm_squared() / n).sqrt() * rate)
        .collect()
}

/// Same penalty for every regression.
pub fn nodewise_regressions(x: &DataMatrix, lambda_reg: f64) -> Result<NodewiseFit> {
    nodewise_regressions_with(x, &vec![lambda_reg; x.p()])
}

pub fn nodewise_regressions_with(x: &DataMatrix, lambdas: &[f64]) -> Result<NodewiseFit> {
    let p = x.p();
    if lambdas.len() != p {
        return Err(Error::arg(format!("expected {p} penalties, got {}", lambdas.len())));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::arg(format!("penalty must be nonnegative, got {l}")));
    }
    let xc = x.centered();
    let n = x.n() as f64;
    let gram = xc.tr_mul(&xc) / n;
    let mut coef = DMatrix::zeros(p, p);
    for j in 0..p {
        let beta = lasso_gram(&gram, j, lambdas[j])?;
        coef.set_column(j, &beta);
    }
    let residuals = &xc - &xc * &coef;
    Ok(NodewiseFit {
        coefficients: coef,
        residuals,
        lambdas: lambdas.to_vec(),
    })
}

/// Lasso of variable `j` on the rest, from the Gram matrix. Returns a length-p
/// vector with a zero at `j`.
fn lasso_gram(g: &DMatrix<f64>, j: usize, lambda: f64) -> Result<nalgebra::DVector<f64>> {
    let p = g.nrows();
    let mut beta = nalgebra::DVector::zeros(p);
    // grad[k] = G_jk − Σ_l G_kl β_l
    let mut grad: Vec<f64> = (0..p).map(|k| g[(j, k)]).collect();
    let usable: Vec<usize> = (0..p).filter(|&k| k != j && g[(k, k)] > 1e-12).collect();
    let mut active: Vec<usize> = Vec::new();
    let mut full_pass = true;

    let sweep = |set: &[usize], beta: &mut nalgebra::DVector<f64>, grad: &mut Vec<f64>| -> f64 {
        let mut max_change = 0.0f64;
        for &k in set {
            let gkk = g[(k, k)];
            let old = beta[k];
            let new = shrink(grad[k] + gkk * old, lambda) / gkk;
            if new != old {
                let d = new - old;
                beta[k] = new;
                for (l, gl) in grad.iter_mut().enumerate() {
                    *gl -= g[(l, k)] * d;
                }
                max_change = max_change.max(d.abs() * gkk.sqrt());
            }
        }
        max_change
    };

    for _ in 0..MAX_SWEEPS {
        if full_pass {
            let change = sweep(&usable, &mut beta, &mut grad);
            let new_active: Vec<usize> = usable.iter().copied().filter(|&k| beta[k] != 0.0).collect();
            if change <= CD_TOL && new_active == active {
                return Ok(beta);
            }
            active = new_active;
            full_pass = false;
        } else if sweep(&active, &mut beta, &mut grad) <= CD_TOL {
            full_pass = true;
        }
    }
    Err(Error::NoConvergence {
        what: "node-wise lasso",
        iterations: MAX_SWEEPS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SymMatrix;
    use crate::seeds::rng;
    use crate::sim::sample_gaussian;
    use rand::Rng;

    fn objective(x: &DataMatrix, j: usize, beta: &[f64], lambda: f64) -> f64 {
        let xc = x.centered();
        let n = x.n() as f64;
        let mut ss = 0.0;
        for r in 0..x.n() {
            let mut fit = 0.0;
            for (k, b) in beta.iter().enumerate() {
                fit += xc[(r, k)] * b;
            }
            ss += (xc[(r, j)] - fit).powi(2);
        }
        ss / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Exact lasso by enumerating every active set and sign pattern for two
    /// regressors.
    fn enumerate_lasso(x: &DataMatrix, j: usize, lambda: f64) -> Vec<f64> {
        let xc = x.centered();
        let n = x.n() as f64;
        let g = xc.tr_mul(&xc) / n;
        let others: Vec<usize> = (0..3).filter(|&k| k != j).collect();
        let mut best = (objective(x, j, &[0.0; 3], lambda), vec![0.0; 3]);
        let (a, b) = (others[0], others[1]);
        for sa in [-1.0, 1.0] {
            // single active
            for (k, s) in [(a, sa), (b, sa)] {
                let v = (g[(j, k)] - lambda * s) / g[(k, k)];
                if v * s > 0.0 {
                    let mut beta = vec![0.0; 3];
                    beta[k] = v;
                    let o = objective(x, j, &beta, lambda);
                    if o < best.0 {
                        best = (o, beta);
                    }
                }
            }
            for sb in [-1.0, 1.0] {
                let m = nalgebra::Matrix2::new(g[(a, a)], g[(a, b)], g[(b, a)], g[(b, b)]);
                let rhs = nalgebra::Vector2::new(g[(j, a)] - lambda * sa, g[(j, b)] - lambda * sb);
                if let Some(sol) = m.lu().solve(&rhs) {
                    if sol[0] * sa > 0.0 && sol[1] * sb > 0.0 {
                        let mut beta = vec![0.0; 3];
                        beta[a] = sol[0];
                        beta[b] = sol[1];
                        let o = objective(x, j, &beta, lambda);
                        if o < best.0 {
                            best = (o, beta);
                        }
                    }
                }
            }
        }
        best.1
    }

    #[test]
    fn matches_enumeration_oracle() {
        let mut r = rng(11);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..12)
                .map(|_| {
                    let z: f64 = r.gen_range(-1.0..1.0);
                    vec![z + r.gen_range(-0.5..0.5), r.gen_range(-1.0..1.0), z - 0.3 * r.gen_range(-1.0..1.0)]
                })
                .collect();
            let x = DataMatrix::from_rows(&rows).unwrap();
            let lambda = r.gen_range(0.0..0.2);
            let fit = nodewise_regressions(&x, lambda).unwrap();
            for j in 0..3 {
                let want = enumerate_lasso(&x, j, lambda);
                for k in 0..3 {
                    assert!((fit.coefficients[(k, j)] - want[k]).abs() < 1e-4, "j={j} k={k}");
                }
            }
        }
    }

    #[test]
    fn huge_penalty_zeroes_everything() {
        let mut r = rng(12);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| r.gen_range(0.0..5.0)).collect()).collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let fit = nodewise_regressions(&x, 1e6).unwrap();
        assert!(fit.coefficients.iter().all(|&c| c == 0.0));
        assert_eq!(fit.residuals, x.centered());
    }

    #[test]
    fn independent_columns_give_small_coefficients() {
        let x = sample_gaussian(&SymMatrix::identity(6), 20_000, 13).unwrap();
        let fit = nodewise_regressions_with(&x, &default_lambdas(&x, 1.0)).unwrap();
        // Population coefficients are zero; 5/√n is a loose Monte Carlo bound.
        assert!(fit.coefficients.amax() < 5.0 / (20_000f64).sqrt());
    }

    #[test]
    fn constant_column_is_harmless() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0, (i * i) as f64]).collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let fit = nodewise_regressions(&x, 0.01).unwrap();
        assert_eq!(fit.coefficients.row(1).amax(), 0.0);
        assert!(fit.residuals.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_penalties() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(nodewise_regressions(&x, -1.0).is_err());
        assert!(nodewise_regressions_with(&x, &[0.1]).is_err());
    }
}
