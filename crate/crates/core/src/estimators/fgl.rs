//! Fused graphical lasso for two conditions.
//!
//! Maximizes
//!
//! ```text
//! Σₖ wₖ{log det Ωₖ − tr(SₖΩₖ)} − λ₁ Σₖ Σ_{i≠j} |Ωₖ,ᵢⱼ| − λ₂ Σ_{i,j} |Ω₁,ᵢⱼ − Ω₂,ᵢⱼ|
//! ```
//!
//! by ADMM on the split Ωₖ = Zₖ. The likelihood step has a closed form in the
//! eigenbasis of `ρ(Zₖ − Uₖ) − wₖSₖ`; the penalty step is the two-sequence
//! fused lasso prox (fuse, then soft-threshold). The weights `wₖ` are the
//! sample sizes in the likelihood; passing 1 for both weighs the conditions
//! equally.

use nalgebra::DMatrix;

use super::{check_pair, support_graph, DifferentialEstimate, Diagnostics, Method, Param, SolverConfig};
use crate::error::{Error, Result};
use crate::matrix::{invert_spd, is_positive_definite, log_det_spd, shrink, sym_eigen, SymMatrix};

/// Optimality tolerance on the stationarity residual (max-norm).
pub const KKT_TOL: f64 = 1e-3;
/// Over-relaxation factor applied to the likelihood step.
const RELAX: f64 = 1.7;

#[derive(Clone, Debug)]
pub struct FglState {
    z1: DMatrix<f64>,
    z2: DMatrix<f64>,
    u1: DMatrix<f64>,
    u2: DMatrix<f64>,
    rho: f64,
}

#[derive(Clone, Debug)]
pub struct FglFit {
    pub omega1: SymMatrix,
    pub omega2: SymMatrix,
    pub lambda1: f64,
    pub lambda2: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Solver state for warm-starting a neighbouring fit.
    pub state: FglState,
}

/// Penalized log-likelihood; `Err` if either matrix is not positive definite.
#[allow(clippy::too_many_arguments)]
pub fn fgl_objective(
    s1: &SymMatrix,
    s2: &SymMatrix,
    n1: f64,
    n2: f64,
    lambda1: f64,
    lambda2: f64,
    omega1: &SymMatrix,
    omega2: &SymMatrix,
) -> Result<f64> {
    let ll = |s: &SymMatrix, o: &SymMatrix, n: f64| -> Result<f64> {
        Ok(n * (log_det_spd(o)? - s.inner(o)))
    };
    let off = |o: &SymMatrix| o.as_matrix().iter().map(|v| v.abs()).sum::<f64>() - o.as_matrix().diagonal().abs().sum();
    let fuse = (omega1.as_matrix() - omega2.as_matrix()).abs().sum();
    Ok(ll(s1, omega1, n1)? + ll(s2, omega2, n2)? - lambda1 * (off(omega1) + off(omega2)) - lambda2 * fuse)
}

/// Closed-form prox of `t₁(|z₁| + |z₂|) + t₂|z₁ − z₂|` at `(a₁, a₂)`.
fn pair_prox(a1: f64, a2: f64, t1: f64, t2: f64) -> (f64, f64) {
    let (f1, f2) = if (a1 - a2).abs() <= 2.0 * t2 {
        let m = 0.5 * (a1 + a2);
        (m, m)
    } else if a1 > a2 {
        (a1 - t2, a2 + t2)
    } else {
        (a1 + t2, a2 - t2)
    };
    (shrink(f1, t1), shrink(f2, t1))
}

/// Subdifferential of `lam·|θ|` as an interval.
fn subdiff(theta: f64, lam: f64) -> (f64, f64) {
    if theta > 0.0 {
        (lam, lam)
    } else if theta < 0.0 {
        (-lam, -lam)
    } else {
        (-lam, lam)
    }
}

/// Smallest achievable `max(dist(g₁ − x, ∂₁), dist(g₂ + x, ∂₂))` over the
/// fusion subgradient `x`, which ranges over `[−l₂, l₂]` when `a = b` and is
/// pinned to `l₂·sign(a − b)` otherwise.
fn entry_violation(g1: f64, g2: f64, a: f64, b: f64, l1: f64, l2: f64) -> f64 {
    let (lo1, hi1) = subdiff(a, l1);
    let (lo2, hi2) = subdiff(b, l1);
    // Both distances have the form max(0, A − x, x − B); so does their max.
    let lower = (g1 - hi1).max(lo2 - g2);
    let upper = (g1 - lo1).min(hi2 - g2);
    let x = if a != b {
        l2 * (a - b).signum()
    } else {
        (0.5 * (lower + upper)).clamp(-l2, l2)
    };
    (lower - x).max(x - upper).max(0.0)
}

/// Stationarity residual at `(Ω₁, Ω₂)`: for each entry the smallest achievable
/// max-violation over the subgradients of both penalty terms.
#[allow(clippy::too_many_arguments)]
pub fn fgl_kkt_residual(
    s1: &SymMatrix,
    s2: &SymMatrix,
    n1: f64,
    n2: f64,
    lambda1: f64,
    lambda2: f64,
    omega1: &SymMatrix,
    omega2: &SymMatrix,
) -> Result<f64> {
    let g1 = (invert_spd(omega1)?.as_matrix() - s1.as_matrix()) * n1;
    let g2 = (invert_spd(omega2)?.as_matrix() - s2.as_matrix()) * n2;
    let (o1, o2) = (omega1.as_matrix(), omega2.as_matrix());
    let p = o1.nrows();
    let mut worst = 0.0f64;
    for j in 0..p {
        for i in 0..p {
            let l1 = if i == j { 0.0 } else { lambda1 };
            let r = entry_violation(g1[(i, j)], g2[(i, j)], o1[(i, j)], o2[(i, j)], l1, lambda2);
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

fn likelihood_step(z: &DMatrix<f64>, u: &DMatrix<f64>, s: &DMatrix<f64>, n: f64, rho: f64) -> Result<DMatrix<f64>> {
    let m = SymMatrix::symmetrized((z - u) * rho - s * n);
    let e = sym_eigen(&m)?;
    Ok(e
        .reconstruct_with(|d| (d + (d * d + 4.0 * rho * n).sqrt()) / (2.0 * rho))
        .into_inner())
}

pub fn fgl_fit(
    s1: &SymMatrix,
    s2: &SymMatrix,
    n1: f64,
    n2: f64,
    lambda1: f64,
    lambda2: f64,
    cfg: &SolverConfig,
) -> Result<(SymMatrix, SymMatrix)> {
    fgl_fit_warm(s1, s2, n1, n2, lambda1, lambda2, cfg, None).map(|f| (f.omega1, f.omega2))
}

#[allow(clippy::too_many_arguments)]
pub fn fgl_fit_warm(
    s1: &SymMatrix,
    s2: &SymMatrix,
    n1: f64,
    n2: f64,
    lambda1: f64,
    lambda2: f64,
    cfg: &SolverConfig,
    warm: Option<&FglState>,
) -> Result<FglFit> {
    check_pair(s1, s2)?;
    cfg.validate()?;
    for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::arg(format!("{name} must be nonnegative, got {v}")));
        }
    }
    for (name, v) in [("n1", n1), ("n2", n2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::arg(format!("{name} must be positive, got {v}")));
        }
    }
    let p = s1.dim();
    let (sm1, sm2) = (s1.as_matrix(), s2.as_matrix());
    let mut st = match warm {
        Some(w) if w.z1.nrows() == p => w.clone(),
        Some(_) => return Err(Error::arg("warm start has the wrong dimension")),
        None => FglState {
            z1: DMatrix::identity(p, p),
            z2: DMatrix::identity(p, p),
            u1: DMatrix::zeros(p, p),
            u2: DMatrix::zeros(p, p),
            rho: cfg.admm_rho,
        },
    };
    let scale = std::f64::consts::SQRT_2 * p as f64;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut last_check = 0usize;

    for it in 1..=cfg.max_iter {
        let rho = st.rho;
        let t1 = likelihood_step(&st.z1, &st.u1, sm1, n1, rho)?;
        let t2 = likelihood_step(&st.z2, &st.u2, sm2, n2, rho)?;
        let h1 = &t1 * RELAX + &st.z1 * (1.0 - RELAX);
        let h2 = &t2 * RELAX + &st.z2 * (1.0 - RELAX);
        let a1 = &h1 + &st.u1;
        let a2 = &h2 + &st.u2;
        let (mut z1, mut z2) = (DMatrix::zeros(p, p), DMatrix::zeros(p, p));
        let (l1, l2) = (lambda1 / rho, lambda2 / rho);
        for j in 0..p {
            for i in 0..=j {
                let (x, y) = pair_prox(
                    0.5 * (a1[(i, j)] + a1[(j, i)]),
                    0.5 * (a2[(i, j)] + a2[(j, i)]),
                    if i == j { 0.0 } else { l1 },
                    l2,
                );
                z1[(i, j)] = x;
                z1[(j, i)] = x;
                z2[(i, j)] = y;
                z2[(j, i)] = y;
            }
        }
        let r1 = &t1 - &z1;
        let r2 = &t2 - &z2;
        st.u1 += &h1 - &z1;
        st.u2 += &h2 - &z2;
        primal = (r1.norm_squared() + r2.norm_squared()).sqrt();
        dual = rho * ((&z1 - &st.z1).norm_squared() + (&z2 - &st.z2).norm_squared()).sqrt();
        st.z1 = z1;
        st.z2 = z2;

        let theta_norm = (t1.norm_squared() + t2.norm_squared()).sqrt();
        let z_norm = (st.z1.norm_squared() + st.z2.norm_squared()).sqrt();
        let u_norm = (st.u1.norm_squared() + st.u2.norm_squared()).sqrt();
        let eps_pri = scale * cfg.tol_abs + cfg.tol_rel * theta_norm.max(z_norm);
        let eps_dual = scale * cfg.tol_abs + cfg.tol_rel * rho * u_norm;

        if primal <= eps_pri && dual <= eps_dual && it >= last_check + 5 {
            last_check = it;
            if let Some(fit) = finish(s1, s2, n1, n2, lambda1, lambda2, &st, it)? {
                return Ok(fit);
            }
        }

        if it % 10 == 0 && it < cfg.max_iter / 2 {
            let new_rho = if primal > 10.0 * dual {
                rho * 2.0
            } else if dual > 10.0 * primal {
                rho / 2.0
            } else {
                rho
            };
            if new_rho != rho {
                st.u1 *= rho / new_rho;
                st.u2 *= rho / new_rho;
                st.rho = new_rho;
            }
        }
    }
    Err(Error::Convergence {
        solver: "fgl",
        iterations: cfg.max_iter,
        primal,
        dual,
    })
}

/// Returns the sparse iterate Z when it is positive definite and optimal to
/// tolerance; otherwise `None` so the caller keeps iterating.
#[allow(clippy::too_many_arguments)]
fn finish(
    s1: &SymMatrix,
    s2: &SymMatrix,
    n1: f64,
    n2: f64,
    lambda1: f64,
    lambda2: f64,
    st: &FglState,
    iterations: usize,
) -> Result<Option<FglFit>> {
    let o1 = SymMatrix::symmetrized(st.z1.clone());
    let o2 = SymMatrix::symmetrized(st.z2.clone());
    if !is_positive_definite(&o1) || !is_positive_definite(&o2) {
        return Ok(None);
    }
    let kkt = fgl_kkt_residual(s1, s2, n1, n2, lambda1, lambda2, &o1, &o2)?;
    if kkt > KKT_TOL {
        return Ok(None);
    }
    Ok(Some(FglFit {
        omega1: o1,
        omega2: o2,
        lambda1,
        lambda2,
        iterations,
        kkt_residual: kkt,
        state: st.clone(),
    }))
}

pub fn fgl_differential(omega1: &SymMatrix, omega2: &SymMatrix, threshold: f64) -> Result<DifferentialEstimate> {
    if omega1.dim() != omega2.dim() {
        return Err(Error::arg("precision matrices differ in dimension"));
    }
    let delta = omega1 - omega2;
    Ok(DifferentialEstimate {
        method: Method::Fgl,
        edges: support_graph(&delta, threshold),
        delta: Some(delta),
        param: Param::Lambdas {
            lambda1: f64::NAN,
            lambda2: f64::NAN,
        },
        diagnostics: Diagnostics {
            iterations: None,
            threshold,
        },
    })
}

impl FglFit {
    pub fn estimate(&self, threshold: f64) -> DifferentialEstimate {
        let mut est = fgl_differential(&self.omega1, &self.omega2, threshold).expect("fit outputs share a dimension");
        est.param = Param::Lambdas {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        };
        est.diagnostics.iterations = Some(self.iterations);
        est
    }
}

/// Fits `(lambda1, λ₂)` for every λ₂ in `lambda2s`, largest first with warm
/// starts; results in input order.
#[allow(clippy::too_many_arguments)]
pub fn fgl_path(
    s1: &SymMatrix,
    s2: &SymMatrix,
    n1: f64,
    n2: f64,
    lambda1: f64,
    lambda2s: &[f64],
    cfg: &SolverConfig,
) -> Vec<Result<FglFit>> {
    let mut order: Vec<usize> = (0..lambda2s.len()).collect();
    order.sort_by(|&a, &b| lambda2s[b].total_cmp(&lambda2s[a]));
    let mut out: Vec<Option<Result<FglFit>>> = (0..lambda2s.len()).map(|_| None).collect();
    let mut warm: Option<FglState> = None;
    for k in order {
        let fit = fgl_fit_warm(s1, s2, n1, n2, lambda1, lambda2s[k], cfg, warm.as_ref());
        if let Ok(f) = &fit {
            warm = Some(f.state.clone());
        }
        out[k] = Some(fit);
    }
    out.into_iter().map(|f| f.expect("every index visited")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng;
    use rand::Rng;

    fn random_cov(r: &mut impl Rng, p: usize, n: usize) -> SymMatrix {
        let x = DMatrix::from_fn(n, p, |_, _| r.gen_range(-1.0..1.0));
        let mix = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { r.gen_range(-0.5..0.5) });
        let y = x * mix;
        SymMatrix::symmetrized(y.tr_mul(&y) / n as f64)
    }

    #[test]
    fn identity_mle() {
        let s = SymMatrix::identity(4);
        let (a, b) = fgl_fit(&s, &s, 10.0, 10.0, 0.0, 0.0, &SolverConfig::default()).unwrap();
        assert!((&a - &s).max_abs() < 1e-4);
        assert!((&b - &s).max_abs() < 1e-4);
    }

    #[test]
    fn large_fusion_penalty_equalizes() {
        let mut r = rng(1);
        let s1 = random_cov(&mut r, 5, 30);
        let s2 = random_cov(&mut r, 5, 30);
        let (a, b) = fgl_fit(&s1, &s2, 1.0, 1.0, 0.05, 1e3, &SolverConfig::default()).unwrap();
        assert!((&a - &b).max_abs() <= 1e-3);
    }

    #[test]
    fn pair_prox_cases() {
        assert_eq!(pair_prox(1.0, 1.1, 0.0, 0.1), (1.05, 1.05));
        assert_eq!(pair_prox(2.0, 0.0, 0.0, 0.5), (1.5, 0.5));
        assert_eq!(pair_prox(2.0, 0.0, 0.6, 0.5), (0.9, 0.0));
    }

    #[test]
    fn pair_prox_is_optimal_by_grid() {
        // Brute-force the two-variable prox on a fine grid.
        let cases = [(0.7, -0.2, 0.1, 0.3), (0.3, 0.25, 0.2, 0.05), (-1.0, 0.4, 0.05, 0.2)];
        for (a1, a2, t1, t2) in cases {
            let obj = |z1: f64, z2: f64| {
                0.5 * ((z1 - a1).powi(2) + (z2 - a2).powi(2)) + t1 * (z1.abs() + z2.abs()) + t2 * (z1 - z2).abs()
            };
            let (z1, z2) = pair_prox(a1, a2, t1, t2);
            let best = obj(z1, z2);
            for i in -300..=300 {
                for j in -300..=300 {
                    assert!(obj(i as f64 * 0.005, j as f64 * 0.005) >= best - 1e-12);
                }
            }
        }
    }

    #[test]
    fn entry_violation_matches_grid_search() {
        let mut r = rng(5);
        for _ in 0..500 {
            let g1 = r.gen_range(-2.0..2.0);
            let g2 = r.gen_range(-2.0..2.0);
            let pick = |r: &mut rand_chacha::ChaCha8Rng| [0.0, 0.5, -0.5][r.gen_range(0..3)];
            let a = pick(&mut r);
            let b = if r.gen_bool(0.5) { a } else { pick(&mut r) };
            let (l1, l2) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
            let (lo1, hi1) = subdiff(a, l1);
            let (lo2, hi2) = subdiff(b, l1);
            let dist = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
            let f = |x: f64| dist(g1 - x, lo1, hi1).max(dist(g2 + x, lo2, hi2));
            let want = if a != b {
                f(l2 * (a - b).signum())
            } else {
                (0..=4000).map(|k| f(-l2 + 2.0 * l2 * k as f64 / 4000.0)).fold(f64::INFINITY, f64::min)
            };
            let got = entry_violation(g1, g2, a, b, l1, l2);
            assert!(got <= want + 1e-12 && got >= want - 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn coordinate_perturbations_do_not_improve() {
        let mut r = rng(2);
        let s1 = random_cov(&mut r, 4, 25);
        let s2 = random_cov(&mut r, 4, 25);
        let (n1, n2, l1, l2) = (25.0, 25.0, 0.5, 0.3);
        let (a, b) = fgl_fit(&s1, &s2, n1, n2, l1, l2, &SolverConfig::default()).unwrap();
        let base = fgl_objective(&s1, &s2, n1, n2, l1, l2, &a, &b).unwrap();
        for which in 0..2 {
            for i in 0..4 {
                for j in i..4 {
                    for h in [1e-4, -1e-4] {
                        let (mut x, mut y) = (a.clone(), b.clone());
                        let m = if which == 0 { &mut x } else { &mut y };
                        m.set(i, j, m.get(i, j) + h);
                        let v = fgl_objective(&s1, &s2, n1, n2, l1, l2, &x, &y).unwrap();
                        assert!(v <= base + 1e-7 * base.abs().max(1.0), "({i},{j}) {v} > {base}");
                    }
                }
            }
        }
    }

    #[test]
    fn outputs_are_positive_definite_and_warm_paths_agree() {
        let mut r = rng(3);
        let s1 = random_cov(&mut r, 8, 6);
        let s2 = random_cov(&mut r, 8, 6);
        let cfg = SolverConfig::default();
        let l2s = [0.3, 0.02, 0.1];
        let path = fgl_path(&s1, &s2, 1.0, 1.0, 0.1, &l2s, &cfg);
        for (l2, fit) in l2s.iter().zip(path) {
            let fit = fit.unwrap();
            assert!(is_positive_definite(&fit.omega1) && is_positive_definite(&fit.omega2));
            let (a, b) = fgl_fit(&s1, &s2, 1.0, 1.0, 0.1, *l2, &cfg).unwrap();
            assert!((&a - &fit.omega1).max_abs() < 1e-2);
            assert!((&b - &fit.omega2).max_abs() < 1e-2);
        }
    }

    #[test]
    fn differential_uses_strict_threshold() {
        let a = SymMatrix::identity(3);
        assert!(fgl_differential(&a, &a, 1e-3).unwrap().edges.is_empty());
        let mut b = a.clone();
        b.set(0, 1, 0.5);
        assert_eq!(fgl_differential(&a, &b, 1e-3).unwrap().edges.edge_count(), 1);
        let mut c = a.clone();
        c.set(0, 2, 1e-3);
        assert!(fgl_differential(&a, &c, 1e-3).unwrap().edges.is_empty());
    }
}
