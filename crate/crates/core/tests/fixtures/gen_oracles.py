"""Freeze convex-solver reference optima for the D-trace and fused graphical lasso tests.

Run from this directory: python3 gen_oracles.py
Writes dtrace_oracle.json and fgl_oracle.json. Requires numpy and cvxpy (Clarabel).
"""
import json

import cvxpy as cp
import numpy as np


def random_cov(rng, p, n):
    x = rng.standard_normal((n, p))
    mix = rng.uniform(-0.6, 0.6, (p, p))
    x = x @ (np.eye(p) + mix)
    return x.T @ x / n


def dtrace_instances(rng):
    out = []
    for k in range(25):
        p = [3, 4, 5][k % 3]
        s1 = random_cov(rng, p, 2 * p + 3)
        s2 = random_cov(rng, p, 2 * p + 3)
        lam = float(rng.uniform(0.02, 0.3))
        d = cp.Variable((p, p), symmetric=True)
        kq = 0.5 * (np.kron(s2, s1) + np.kron(s1, s2))
        kq = 0.5 * (kq + kq.T)
        v = cp.vec(d, order="F")
        obj = 0.5 * cp.quad_form(v, cp.psd_wrap(kq)) + cp.trace(d @ (s1 - s2)) + lam * cp.sum(cp.abs(d))
        prob = cp.Problem(cp.Minimize(obj))
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)
        dv = d.value
        # independent re-evaluation of the objective at the solver point
        ld = 0.25 * (np.trace(s1 @ dv @ s2 @ dv) + np.trace(s2 @ dv @ s1 @ dv)) + np.trace(dv @ (s1 - s2))
        val = ld + lam * np.abs(dv).sum()
        assert abs(val - prob.value) < 1e-7 * max(1.0, abs(val)), (val, prob.value)
        out.append({"p": p, "s1": s1.tolist(), "s2": s2.tolist(), "lambda": lam,
                    "objective": float(val), "delta": dv.tolist()})
    return out


def fgl_instances(rng):
    out = []
    pairs = [(0.1, 0.05), (0.2, 0.1), (0.05, 0.2), (0.3, 0.02)]
    for p in [3, 4]:
        for lam1, lam2 in pairs:
            n1, n2 = float(p + 4), float(p + 7)
            s1 = random_cov(rng, p, int(n1))
            s2 = random_cov(rng, p, int(n2))
            o1 = cp.Variable((p, p), symmetric=True)
            o2 = cp.Variable((p, p), symmetric=True)
            off = 1.0 - np.eye(p)
            ll = n1 * (cp.log_det(o1) - cp.trace(s1 @ o1)) + n2 * (cp.log_det(o2) - cp.trace(s2 @ o2))
            pen = lam1 * (cp.sum(cp.abs(cp.multiply(off, o1))) + cp.sum(cp.abs(cp.multiply(off, o2)))) \
                + lam2 * cp.sum(cp.abs(o1 - o2))
            prob = cp.Problem(cp.Maximize(ll - pen))
            prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10, max_iter=500)
            a, b = o1.value, o2.value
            val = n1 * (np.linalg.slogdet(a)[1] - np.trace(s1 @ a)) + n2 * (np.linalg.slogdet(b)[1] - np.trace(s2 @ b)) \
                - lam1 * (np.abs(off * a).sum() + np.abs(off * b).sum()) - lam2 * np.abs(a - b).sum()
            assert abs(val - prob.value) < 1e-6 * max(1.0, abs(val)), (val, prob.value)
            out.append({"p": p, "n1": n1, "n2": n2, "s1": s1.tolist(), "s2": s2.tolist(),
                        "lambda1": lam1, "lambda2": lam2, "objective": float(val),
                        "omega1": a.tolist(), "omega2": b.tolist()})
    return out


if __name__ == "__main__":
    rng = np.random.default_rng(20241201)
    with open("dtrace_oracle.json", "w") as f:
        json.dump(dtrace_instances(rng), f, indent=1)
    with open("fgl_oracle.json", "w") as f:
        json.dump(fgl_instances(rng), f, indent=1)
