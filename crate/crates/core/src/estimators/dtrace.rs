//! Lasso-penalized D-trace estimation of Δ = Ω⁽¹⁾ − Ω⁽²⁾.
//!
//! ```text
//! L_D(Δ) = ¼(⟨S₁Δ, ΔS₂⟩ + ⟨S₂Δ, ΔS₁⟩) + ⟨Δ, S₁ − S₂⟩
//! ```
//!
//! Its stationarity condition `½(S₁ΔS₂ + S₂ΔS₁) = S₂ − S₁` is solved by
//! `Σ₁⁻¹ − Σ₂⁻¹` at the population level. The penalty `λ‖Δ‖₁` covers every
//! entry, diagonal included.
//!
//! The solver is ADMM on the consensus split `Δ₁ = Z`, `Δ₂ = Z`:
//!
//! ```text
//! f₁(Δ₁) = ¼⟨S₁Δ₁S₂, Δ₁⟩ + ½⟨S₁ − S₂, Δ₁⟩
//! f₂(Δ₂) = ¼⟨S₂Δ₂S₁, Δ₂⟩ + ½⟨S₁ − S₂, Δ₂⟩
//! g(Z)   = λ‖Z‖₁
//! ```
//!
//! Each Δₖ step is the matrix equation `½SₐΔS_b + ρΔ = B`, which diagonalizes
//! in the eigenbases of S₁ and S₂ (computed once per fit). Keeping `U₂ = U₁ᵀ`
//! makes `Δ₂ = Δ₁ᵀ`, so only Δ₁ is ever formed. Once the ADMM residuals are
//! small the iterate is polished by conjugate gradients on its sign pattern.

use nalgebra::{DMatrix, DVector};

use super::{check_pair, support_graph, DifferentialEstimate, Diagnostics, Method, Param, SolverConfig};
use crate::error::{Error, Result};
use crate::matrix::{shrink, sym_eigen, SymMatrix};

/// Optimality tolerance on the subgradient residual (max-norm).
pub const KKT_TOL: f64 = 1e-4;
const EIGEN_FLOOR: f64 = 1e-8;
/// Polishing is attempted once the ADMM iterate is this close.
const POLISH_FROM: f64 = 1e-2;
const POLISH_STEPS: usize = 60;

#[derive(Clone, Debug)]
pub struct DTraceFit {
    pub delta: SymMatrix,
    pub lambda: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

fn tr_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(AB) = Σ Aᵢⱼ Bⱼᵢ
    a.dot(&b.transpose())
}

pub fn dtrace_loss(s1: &SymMatrix, s2: &SymMatrix, delta: &SymMatrix) -> f64 {
    let (s1, s2, d) = (s1.as_matrix(), s2.as_matrix(), delta.as_matrix());
    let a = s1 * d;
    let b = d * s2;
    let c = s2 * d;
    let e = d * s1;
    0.25 * (a.dot(&b) + c.dot(&e)) + tr_prod(d, &(s1 - s2))
}

/// `½(S₁ΔS₂ + S₂ΔS₁) + (S₁ − S₂)`.
pub fn dtrace_gradient(s1: &SymMatrix, s2: &SymMatrix, delta: &SymMatrix) -> DMatrix<f64> {
    let (s1, s2, d) = (s1.as_matrix(), s2.as_matrix(), delta.as_matrix());
    let a = s1 * d * s2;
    let b = s2 * d * s1;
    (a + b) * 0.5 + (s1 - s2)
}

/// `max_ij dist(−g(Δ)ᵢⱼ, λ ∂|Δᵢⱼ|)`.
pub fn dtrace_kkt_residual(s1: &SymMatrix, s2: &SymMatrix, delta: &SymMatrix, lambda: f64) -> f64 {
    kkt_from_gradient(&dtrace_gradient(s1, s2, delta), delta.as_matrix(), lambda)
}

fn kkt_from_gradient(g: &DMatrix<f64>, d: &DMatrix<f64>, lambda: f64) -> f64 {
    g.iter()
        .zip(d.iter())
        .map(|(&g, &d)| {
            if d > 0.0 {
                (g + lambda).abs()
            } else if d < 0.0 {
                (g - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Cached eigenbases of one (S₁, S₂) pair; solves along a λ grid share it.
pub struct DTraceSolver {
    s1: DMatrix<f64>,
    s2: DMatrix<f64>,
    v1: DMatrix<f64>,
    v1t: DMatrix<f64>,
    v2: DMatrix<f64>,
    v2t: DMatrix<f64>,
    w1: DVector<f64>,
    w2: DVector<f64>,
    half_diff: DMatrix<f64>,
    max_diff: f64,
    cfg: SolverConfig,
}

impl DTraceSolver {
    pub fn new(s1: &SymMatrix, s2: &SymMatrix, cfg: &SolverConfig) -> Result<Self> {
        check_pair(s1, s2)?;
        cfg.validate()?;
        let e1 = sym_eigen(s1)?;
        let e2 = sym_eigen(s2)?;
        let diff = s1.as_matrix() - s2.as_matrix();
        let max_diff = diff.amax();
        Ok(DTraceSolver {
            s1: s1.as_matrix().clone(),
            s2: s2.as_matrix().clone(),
            v1t: e1.vectors.transpose(),
            v1: e1.vectors,
            v2t: e2.vectors.transpose(),
            v2: e2.vectors,
            w1: e1.values.map(|w| w.max(EIGEN_FLOOR)),
            w2: e2.values.map(|w| w.max(EIGEN_FLOOR)),
            half_diff: diff * 0.5,
            max_diff,
            cfg: *cfg,
        })
    }

    fn gradient(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        // d symmetric, so S₂ d S₁ = (S₁ d S₂)ᵀ.
        let a = &self.s1 * d * &self.s2;
        (&a + a.transpose()) * 0.5 + &self.half_diff * 2.0
    }

    fn denominators(&self, rho: f64) -> DMatrix<f64> {
        let p = self.w1.len();
        DMatrix::from_fn(p, p, |i, j| 0.5 * self.w1[i] * self.w2[j] + rho)
    }

    pub fn solve(&self, lambda: f64, warm_start: Option<&SymMatrix>) -> Result<DTraceFit> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::arg(format!("lambda must be nonnegative, got {lambda}")));
        }
        let p = self.s1.nrows();
        if let Some(w) = warm_start.filter(|w| w.dim() != p) {
            return Err(Error::arg(format!("warm start has dimension {}, expected {p}", w.dim())));
        }
        if lambda >= self.max_diff {
            // The subgradient condition already holds at zero.
            return Ok(DTraceFit {
                delta: SymMatrix::zeros(p),
                lambda,
                iterations: 0,
                kkt_residual: 0.0,
            });
        }
        let cfg = &self.cfg;
        let mut rho = cfg.admm_rho;
        let mut denom = self.denominators(rho);
        let (mut z, mut u) = match warm_start {
            Some(w) => {
                let z = w.as_matrix().clone();
                let a = &self.s1 * &z * &self.s2;
                let u = -(a * 0.5 + &self.half_diff) / rho;
                (z, u)
            }
            None => (DMatrix::zeros(p, p), DMatrix::zeros(p, p)),
        };
        let root2 = std::f64::consts::SQRT_2;
        let scale = root2 * p as f64;
        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;
        let mut last_check = 0usize;
        let mut polished: Option<DMatrix<f64>> = None;

        for it in 1..=cfg.max_iter {
            let b = (&z - &u) * rho - &self.half_diff;
            let mut bt = &self.v1t * b * &self.v2;
            bt.component_div_assign(&denom);
            let d1 = &self.v1 * bt * &self.v2t;

            let mut avg = &d1 + &u;
            avg = (&avg + avg.transpose()) * 0.5;
            let t = lambda / (2.0 * rho);
            let z_old = std::mem::replace(&mut z, avg.map(|v| shrink(v, t)));
            let r = &d1 - &z;
            u += &r;

            primal = root2 * r.norm();
            dual = root2 * rho * (&z - &z_old).norm();
            let eps_pri = scale * cfg.tol_abs + cfg.tol_rel * root2 * d1.norm().max(z.norm());
            let eps_dual = scale * cfg.tol_abs + cfg.tol_rel * root2 * rho * u.norm();

            if primal <= eps_pri && dual <= eps_dual && it >= last_check + 5 {
                last_check = it;
                if let Some(fit) = self.finish(&z, lambda, it, &mut polished, false) {
                    return Ok(fit);
                }
            }

            // Residual balancing; frozen in the second half so the final
            // iterations run with a fixed penalty.
            if it % 10 == 0 && it < cfg.max_iter / 2 {
                let new_rho = if primal > 10.0 * dual {
                    rho * 2.0
                } else if dual > 10.0 * primal {
                    rho / 2.0
                } else {
                    rho
                };
                if new_rho != rho {
                    u *= rho / new_rho;
                    rho = new_rho;
                    denom = self.denominators(rho);
                }
            }
        }
        if let Some(fit) = self.finish(&z, lambda, cfg.max_iter, &mut polished, true) {
            return Ok(fit);
        }
        Err(Error::Convergence {
            solver: "dtrace",
            iterations: cfg.max_iter,
            primal,
            dual,
        })
    }

    /// Returns `z`, or its polished version, if it meets the optimality
    /// tolerance. A sign pattern is polished at most once per solve except on
    /// the last iteration, since the restricted quadratic only depends on it.
    fn finish(
        &self,
        z: &DMatrix<f64>,
        lambda: f64,
        iterations: usize,
        polished: &mut Option<DMatrix<f64>>,
        last: bool,
    ) -> Option<DTraceFit> {
        let kkt_z = kkt_from_gradient(&self.gradient(z), z, lambda);
        let signs = z.map(f64::signum);
        let fresh = polished.as_ref() != Some(&signs);
        let attempt = last || (kkt_z <= POLISH_FROM && fresh);
        let (best, kkt) = match attempt.then(|| self.polish(z, lambda)).flatten() {
            Some((x, k)) if k < kkt_z => (x, k),
            _ => (z.clone(), kkt_z),
        };
        if attempt {
            *polished = Some(signs);
        }
        (kkt <= KKT_TOL).then(|| DTraceFit {
            delta: SymMatrix::symmetrized(best),
            lambda,
            iterations,
            kkt_residual: kkt,
        })
    }

    /// Conjugate gradients on the quadratic obtained by fixing the signs of
    /// `z`'s nonzero entries. Returns `None` if a sign flips.
    fn polish(&self, z: &DMatrix<f64>, lambda: f64) -> Option<(DMatrix<f64>, f64)> {
        let mask = z.map(|v| if v != 0.0 { 1.0 } else { 0.0 });
        if mask.iter().all(|&m| m == 0.0) {
            return None;
        }
        let sgn = z.map(f64::signum).component_mul(&mask);
        let hess = |d: &DMatrix<f64>| {
            let a = &self.s1 * d * &self.s2;
            ((&a + a.transpose()) * 0.5).component_mul(&mask)
        };
        let c = (&self.half_diff * 2.0 + &sgn * lambda).component_mul(&mask);
        let mut x = z.clone();
        let mut r = -(hess(&x) + &c);
        let mut dir = r.clone();
        let mut rr = r.norm_squared();
        let tiny = 1e-28 * (1.0 + c.norm_squared());
        for _ in 0..POLISH_STEPS {
            if rr <= tiny {
                break;
            }
            let hd = hess(&dir);
            let curv = dir.dot(&hd);
            if curv <= 0.0 {
                break;
            }
            let step = rr / curv;
            x += &dir * step;
            r -= &hd * step;
            let rr_new = r.norm_squared();
            dir = &r + &dir * (rr_new / rr);
            rr = rr_new;
        }
        let consistent = x.iter().zip(sgn.iter()).all(|(&v, &s)| s == 0.0 || v * s > 0.0);
        if !consistent {
            return None;
        }
        let x = (&x + x.transpose()) * 0.5;
        let k = kkt_from_gradient(&self.gradient(&x), &x, lambda);
        Some((x, k))
    }
}

/// Minimizes `L_D(Δ) + λ‖Δ‖₁` over symmetric Δ.
pub fn dtrace_fit(
    s1: &SymMatrix,
    s2: &SymMatrix,
    lambda: f64,
    cfg: &SolverConfig,
    warm_start: Option<&SymMatrix>,
) -> Result<DTraceFit> {
    DTraceSolver::new(s1, s2, cfg)?.solve(lambda, warm_start)
}

/// Fits every λ in `lambdas`, largest first with warm starts. Results come
/// back in input order; a failed fit does not stop the path.
pub fn dtrace_path(
    s1: &SymMatrix,
    s2: &SymMatrix,
    lambdas: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<Result<DTraceFit>>> {
    let solver = DTraceSolver::new(s1, s2, cfg)?;
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut out: Vec<Option<Result<DTraceFit>>> = (0..lambdas.len()).map(|_| None).collect();
    let mut warm: Option<SymMatrix> = None;
    for k in order {
        let fit = solver.solve(lambdas[k], warm.as_ref());
        if let Ok(f) = &fit {
            warm = Some(f.delta.clone());
        }
        out[k] = Some(fit);
    }
    Ok(out.into_iter().map(|f| f.expect("every index visited")).collect())
}

pub fn dtrace_differential(delta: &SymMatrix, threshold: f64) -> DifferentialEstimate {
    DifferentialEstimate {
        method: Method::DTrace,
        edges: support_graph(delta, threshold),
        delta: Some(delta.clone()),
        param: Param::Lambda(f64::NAN),
        diagnostics: Diagnostics {
            iterations: None,
            threshold,
        },
    }
}

impl DTraceFit {
    pub fn estimate(&self, threshold: f64) -> DifferentialEstimate {
        let mut est = dtrace_differential(&self.delta, threshold);
        est.param = Param::Lambda(self.lambda);
        est.diagnostics.iterations = Some(self.iterations);
        est
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::invert_spd;
    use crate::seeds::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_cov(r: &mut impl Rng, p: usize, n: usize) -> SymMatrix {
        let x = DMatrix::from_fn(n, p, |_, _| r.gen_range(-1.0..1.0));
        let mix = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { r.gen_range(-0.5..0.5) });
        let y = x * mix;
        SymMatrix::symmetrized(y.tr_mul(&y) / n as f64)
    }

    fn scalar(v: f64) -> SymMatrix {
        SymMatrix::from_diagonal(&[v])
    }

    #[test]
    fn scalar_stationary_point() {
        let fit = dtrace_fit(&scalar(1.0), &scalar(2.0), 0.0, &SolverConfig::default(), None).unwrap();
        assert!((fit.delta.get(0, 0) - 0.5).abs() <= 1e-6, "{}", fit.delta.get(0, 0));
    }

    #[test]
    fn scalar_soft_thresholded_solution() {
        // 2Δ − 1 + λ = 0 for Δ > 0.
        let fit = dtrace_fit(&scalar(1.0), &scalar(2.0), 0.4, &SolverConfig::default(), None).unwrap();
        assert!((fit.delta.get(0, 0) - 0.3).abs() <= 1e-6);
    }

    #[test]
    fn identical_covariances_give_zero() {
        let mut r = rng(3);
        let s = random_cov(&mut r, 5, 20);
        for lam in [1e-3, 0.1, 1.0] {
            let fit = dtrace_fit(&s, &s, lam, &SolverConfig::default(), None).unwrap();
            assert_eq!(fit.delta.max_abs(), 0.0);
        }
    }

    #[test]
    fn cutoff_gives_exact_zero() {
        let mut r = rng(4);
        let s1 = random_cov(&mut r, 6, 15);
        let s2 = random_cov(&mut r, 6, 15);
        let lmax = (&s1 - &s2).max_abs();
        let fit = dtrace_fit(&s1, &s2, lmax, &SolverConfig::default(), None).unwrap();
        assert_eq!(fit.delta, SymMatrix::zeros(6));
        let below = dtrace_fit(&s1, &s2, 0.9 * lmax, &SolverConfig::default(), None).unwrap();
        assert!(below.delta.max_abs() > 0.0);
    }

    #[test]
    fn unpenalized_fit_recovers_precision_difference() {
        let mut r = rng(5);
        let s1 = random_cov(&mut r, 4, 40);
        let s2 = random_cov(&mut r, 4, 40);
        let want = &invert_spd(&s1).unwrap() - &invert_spd(&s2).unwrap();
        let fit = dtrace_fit(&s1, &s2, 0.0, &SolverConfig::default(), None).unwrap();
        assert!((&fit.delta - &want).max_abs() < 1e-5 * (1.0 + want.max_abs()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(6);
        for _ in 0..10 {
            let s1 = random_cov(&mut r, 5, 12);
            let s2 = random_cov(&mut r, 5, 12);
            let d = SymMatrix::from_upper_fn(5, |_, _| r.gen_range(-1.0..1.0));
            let g = dtrace_gradient(&s1, &s2, &d);
            let h = 1e-5;
            for i in 0..5 {
                for j in 0..5 {
                    // Perturb one entry of a general matrix; the loss
                    // formula is valid for non-symmetric arguments too.
                    let bump = |sgn: f64| {
                        let mut m = d.as_matrix().clone();
                        m[(i, j)] += sgn * h;
                        general_loss(&s1, &s2, &m)
                    };
                    let fd = (bump(1.0) - bump(-1.0)) / (2.0 * h);
                    assert!((fd - g[(i, j)]).abs() <= 1e-5 * g[(i, j)].abs().max(1.0));
                }
            }
        }
    }

    fn general_loss(s1: &SymMatrix, s2: &SymMatrix, d: &DMatrix<f64>) -> f64 {
        let (s1, s2) = (s1.as_matrix(), s2.as_matrix());
        let t1 = (s1 * d * s2 * d.transpose()).trace();
        let t2 = (s2 * d * s1 * d.transpose()).trace();
        0.25 * (t1 + t2) + (d.transpose() * (s1 - s2)).trace()
    }

    #[test]
    fn loss_agrees_with_trace_form() {
        let mut r = rng(7);
        let s1 = random_cov(&mut r, 4, 9);
        let s2 = random_cov(&mut r, 4, 9);
        let d = SymMatrix::from_upper_fn(4, |_, _| r.gen_range(-1.0..1.0));
        let a = dtrace_loss(&s1, &s2, &d);
        let b = general_loss(&s1, &s2, d.as_matrix());
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn rank_deficient_covariances() {
        // With n < p the loss is flat along null directions and the problem
        // is unbounded below for small λ (λ ≤ 0.5 here, confirmed with a
        // conic solver); λ = 1 is bounded.
        let mut r = rng(8);
        let s1 = random_cov(&mut r, 12, 5);
        let s2 = random_cov(&mut r, 12, 5);
        let fit = dtrace_fit(&s1, &s2, 1.0, &SolverConfig::default(), None).unwrap();
        assert!(fit.kkt_residual <= KKT_TOL);
        assert!(fit.delta.as_matrix().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn path_matches_cold_fits() {
        let mut r = rng(9);
        let s1 = random_cov(&mut r, 8, 30);
        let s2 = random_cov(&mut r, 8, 30);
        let cfg = SolverConfig::default();
        let lams = [0.05, 0.2, 0.1];
        let path = dtrace_path(&s1, &s2, &lams, &cfg).unwrap();
        for (lam, fit) in lams.iter().zip(path) {
            let warm = fit.unwrap();
            let cold = dtrace_fit(&s1, &s2, *lam, &cfg, None).unwrap();
            assert_eq!(warm.lambda, *lam);
            assert!((&warm.delta - &cold.delta).max_abs() < 1e-3);
        }
    }

    #[test]
    fn differential_extraction() {
        assert!(dtrace_differential(&SymMatrix::zeros(4), 1e-3).edges.is_empty());
        let mut d = SymMatrix::zeros(4);
        d.set(1, 3, 0.2);
        d.set(0, 0, 5.0);
        let est = dtrace_differential(&d, 1e-3);
        assert_eq!(est.edges.edges().collect::<Vec<_>>(), vec![(1, 3)]);
        d.set(0, 2, 1e-3);
        assert_eq!(dtrace_differential(&d, 1e-3).edges.edge_count(), 1);
        assert_eq!(dtrace_differential(&d, 0.0).edges.edge_count(), 2);
    }

    #[test]
    fn rejects_bad_lambda_and_shapes() {
        let s = SymMatrix::identity(3);
        let cfg = SolverConfig::default();
        assert!(dtrace_fit(&s, &s, -1.0, &cfg, None).is_err());
        assert!(dtrace_fit(&s, &SymMatrix::identity(2), 0.1, &cfg, None).is_err());
        assert!(dtrace_fit(&s, &s, 0.1, &cfg, Some(&SymMatrix::zeros(2))).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn condition_swap_negates(seed in 0u64..1000, lam in 0.01f64..0.3) {
            let mut r = rng(seed);
            let s1 = random_cov(&mut r, 5, 14);
            let s2 = random_cov(&mut r, 5, 14);
            let cfg = SolverConfig::default();
            let a = dtrace_fit(&s1, &s2, lam, &cfg, None).unwrap();
            let b = dtrace_fit(&s2, &s1, lam, &cfg, None).unwrap();
            prop_assert!((&a.delta + &b.delta).max_abs() < 1e-4);
        }

        #[test]
        fn warm_start_does_not_change_solution(seed in 0u64..1000, lam in 0.01f64..0.3) {
            let mut r = rng(seed);
            let s1 = random_cov(&mut r, 5, 14);
            let s2 = random_cov(&mut r, 5, 14);
            let start = SymMatrix::from_upper_fn(5, |_, _| r.gen_range(-2.0..2.0));
            let cfg = SolverConfig::default();
            let a = dtrace_fit(&s1, &s2, lam, &cfg, None).unwrap();
            let b = dtrace_fit(&s1, &s2, lam, &cfg, Some(&start)).unwrap();
            prop_assert!((&a.delta - &b.delta).max_abs() < 1e-4);
            prop_assert!(b.kkt_residual <= KKT_TOL);
        }

        #[test]
        fn scalar_path_support_is_monotone(s1 in 0.2f64..3.0, s2 in 0.2f64..3.0) {
            let cfg = SolverConfig::default();
            let mut last = 0usize;
            for k in (0..12).rev() {
                let lam = 0.25 * k as f64;
                let fit = dtrace_fit(&scalar(s1), &scalar(s2), lam, &cfg, None).unwrap();
                let size = usize::from(fit.delta.get(0, 0) != 0.0);
                prop_assert!(size >= last);
                last = size;
            }
        }
    }
}
