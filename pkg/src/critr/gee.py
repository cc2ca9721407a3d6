"""Weighted GEE solver for log-time outcome models with a treatment-scaled
blip block, exchangeable or independence working correlation, alternating
generalized-least-squares and method-of-moments updates.

The estimating equation solved for theta = (beta, psi) is

    sum_i D_i' V_i^{-1} W_i (y_i - D_i theta) = 0,
    D_i = [X_beta | a * X_psi],  W_i = diag(w_ij),

accumulated clusterwise. Rows with zero weight are dropped and each
cluster's working-correlation block is formed over its remaining rows only,
so zero-weight rows are inert.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

RHO_MAX = 0.99
COND_LIMIT = 1e12


@dataclass
class WorkingCorrelation:
    """Exchangeable or independence working correlation.

    V_i = sigma2 * [(1 - rho) I + rho J] for a cluster of size m; the
    independence kind fixes rho = 0.
    """

    kind: str
    rho: float
    sigma2: float

    def matrix(self, m):
        """Dense m x m working covariance block."""
        return self.sigma2 * ((1.0 - self.rho) * np.eye(m) + self.rho * np.ones((m, m)))


@dataclass
class GeeFit:
    beta: np.ndarray
    psi: np.ndarray
    corr: WorkingCorrelation
    iterations: int
    converged: bool
    n_effective: int
    sandwich_cov: np.ndarray | None = None

    @property
    def theta(self):
        return np.concatenate([self.beta, self.psi])


def _weight_values(w):
    return np.asarray(getattr(w, "values", w), dtype=float)


def _assemble(design_free, design_blip, a):
    Xb = np.asarray(design_free, dtype=float)
    Xp = np.asarray(design_blip, dtype=float)
    a = np.asarray(a, dtype=float)
    return np.hstack([Xb, a[:, None] * Xp]), Xb.shape[1]


def _compact(D, y, w, clusters):
    keep = w > 0
    _, codes = np.unique(np.asarray(clusters)[keep], return_inverse=True)
    return D[keep], y[keep], w[keep], codes, np.bincount(codes)


def _colsums(M, codes, r):
    # per-cluster column sums, (r, p)
    out = np.empty((r, M.shape[1]))
    for j in range(M.shape[1]):
        out[:, j] = np.bincount(codes, weights=M[:, j], minlength=r)
    return out


def _normal_equations(D, y, w, codes, counts, corr):
    """LHS matrix and RHS of the estimating equation, both scaled by
    sigma2*(1-rho); the scale cancels in the solve."""
    wD = D * w[:, None]
    wy = w * y
    lhs = D.T @ wD
    rhs = D.T @ wy
    if corr.kind == "exchangeable" and corr.rho > 0:
        r = counts.shape[0]
        shrink = corr.rho / (1.0 + (counts - 1) * corr.rho)
        S = _colsums(D, codes, r)
        T = _colsums(wD, codes, r)
        u = np.bincount(codes, weights=wy, minlength=r)
        lhs = lhs - S.T @ (shrink[:, None] * T)
        rhs = rhs - S.T @ (shrink * u)
    return lhs, rhs


def _solve(lhs, rhs):
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise np.linalg.LinAlgError(
            f"estimating equation is singular or near-singular (condition estimate {cond:.3e})"
        )
    return np.linalg.solve(lhs, rhs)


def _moment(e, w, codes, counts, p, kind):
    total = w.sum()
    if total <= p:
        raise ValueError(f"degenerate sample: total weight {total:.3g} <= {p} parameters")
    sigma2 = float(w @ (e * e) / (total - p))
    if sigma2 <= 0:
        raise ValueError("degenerate sample: zero residual variance")
    if kind == "independence":
        return WorkingCorrelation("independence", 0.0, sigma2)
    u = np.sqrt(w) * e
    su = np.bincount(codes, weights=u)
    su2 = np.bincount(codes, weights=u * u)
    cross = float((su * su - su2).sum())
    pairs = float((counts * (counts - 1)).sum() - p)
    rho = 0.0 if pairs <= 0 else min(max(cross / sigma2 / pairs, 0.0), RHO_MAX)
    return WorkingCorrelation("exchangeable", rho, sigma2)


def gls_step(design_free, design_blip, a, y, w, clusters, corr):
    """One generalized-least-squares solve at a fixed working correlation.

    Returns
    -------
    (beta, psi) : pair of ndarrays
        Solution of the weighted estimating equation; zero-weight rows
        contribute nothing.
    """
    wv = _weight_values(w)
    D, p_free = _assemble(design_free, design_blip, a)
    if (wv > 0).sum() < D.shape[1]:
        raise ValueError("fewer positive-weight rows than parameters")
    Dc, yc, wc, codes, counts = _compact(D, np.asarray(y, dtype=float), wv, clusters)
    theta = _solve(*_normal_equations(Dc, yc, wc, codes, counts, corr))
    return theta[:p_free], theta[p_free:]


def moment_update(residuals, w, clusters, p, kind="exchangeable"):
    """Method-of-moments working-correlation update from weighted residuals.

    sigma2 = sum(w e^2) / (sum w - p); rho pools sqrt(w_j w_l)-weighted
    cross-products over within-cluster pairs, divided by sigma2 and by
    sum_i m_i(m_i - 1) - p with m_i the positive-weight rows of cluster i,
    then clamped to [0, 0.99]. Size-1 clusters inform sigma2 only.
    """
    wv = _weight_values(w)
    e = np.asarray(residuals, dtype=float)
    keep = wv > 0
    _, codes = np.unique(np.asarray(clusters)[keep], return_inverse=True)
    return _moment(e[keep], wv[keep], codes, np.bincount(codes), p, kind)


def fit_weighted_gee(
    design_free,
    design_blip,
    a,
    y,
    w,
    clusters,
    corr_kind="exchangeable",
    max_alternations=25,
    tol=1e-6,
    one_step=False,
):
    """Alternate GLS and moment updates until the coefficients settle.

    Parameters
    ----------
    design_free, design_blip : ndarray
        Treatment-free and blip design matrices (intercepts included).
    a, y, w, clusters : ndarray
        Treatment, log-time response, weights, cluster labels.
    corr_kind : {"exchangeable", "independence"}
    max_alternations : int
        Cap on (moment update, GLS) rounds.
    tol : float
        Relative max-norm change in theta that counts as converged.
    one_step : bool
        After the independence initial fit, do exactly one moment update
        and one final GLS solve.

    Returns
    -------
    GeeFit
        Non-convergence yields converged=False plus a warning, not an error.
    """
    wv = _weight_values(w)
    D, p_free = _assemble(design_free, design_blip, a)
    p = D.shape[1]
    if (wv > 0).sum() < p:
        raise ValueError("fewer positive-weight rows than parameters")
    Dc, yc, wc, codes, counts = _compact(D, np.asarray(y, dtype=float), wv, clusters)

    indep = WorkingCorrelation("independence", 0.0, 1.0)
    theta = _solve(*_normal_equations(Dc, yc, wc, codes, counts, indep))

    if corr_kind == "independence":
        corr = _moment(yc - Dc @ theta, wc, codes, counts, p, "independence")
        iterations, converged = 1, True
    elif one_step:
        corr = _moment(yc - Dc @ theta, wc, codes, counts, p, "exchangeable")
        theta = _solve(*_normal_equations(Dc, yc, wc, codes, counts, corr))
        iterations, converged = 1, True
    else:
        corr = indep
        iterations, converged = 0, False
        for iterations in range(1, max_alternations + 1):
            corr = _moment(yc - Dc @ theta, wc, codes, counts, p, "exchangeable")
            new = _solve(*_normal_equations(Dc, yc, wc, codes, counts, corr))
            rel = np.max(np.abs(new - theta)) / max(np.max(np.abs(theta)), 1e-12)
            theta = new
            if rel < tol:
                converged = True
                break
        if not converged:
            warnings.warn(
                f"weighted GEE did not converge in {max_alternations} alternations",
                RuntimeWarning,
                stacklevel=2,
            )

    return GeeFit(
        beta=theta[:p_free],
        psi=theta[p_free:],
        corr=corr,
        iterations=iterations,
        converged=converged,
        n_effective=int((wv > 0).sum()),
    )


def exchangeable_solve(rho, sigma2, v):
    """Apply the analytic inverse of one exchangeable block to a vector:
    V^{-1} v = [v - rho/(1+(m-1)rho) * sum(v)] / (sigma2 (1-rho))."""
    if not 0.0 <= rho <= RHO_MAX:
        raise ValueError(f"rho must be in [0, {RHO_MAX}]")
    v = np.asarray(v, dtype=float)
    m = v.shape[0]
    shrink = rho / (1.0 + (m - 1) * rho)
    return (v - shrink * v.sum()) / (sigma2 * (1.0 - rho))


def sandwich_se(fit, design_free, design_blip, a, y, w, clusters):
    """Clusterwise sandwich covariance A^{-1} B A^{-T} at the fitted theta.

    A is the derivative of the estimating equation, B the outer-product sum
    of per-cluster scores. Treats weights as fixed.
    """
    wv = _weight_values(w)
    D, _ = _assemble(design_free, design_blip, a)
    Dc, yc, wc, codes, counts = _compact(D, np.asarray(y, dtype=float), wv, clusters)
    corr = fit.corr
    r = counts.shape[0]

    scale = 1.0 / (corr.sigma2 * (1.0 - corr.rho))
    lhs, _ = _normal_equations(Dc, yc, wc, codes, counts, corr)
    A = scale * lhs

    e = yc - Dc @ fit.theta
    we = wc * e
    if corr.kind == "exchangeable" and corr.rho > 0:
        shrink = corr.rho / (1.0 + (counts - 1) * corr.rho)
        cluster_we = np.bincount(codes, weights=we, minlength=r)
        q = scale * (we - (shrink * cluster_we)[codes])
    else:
        q = scale * we
    G = _colsums(Dc * q[:, None], codes, r)
    B = G.T @ G

    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise np.linalg.LinAlgError(
            f"sandwich bread matrix singular or near-singular (condition estimate {cond:.3e})"
        )
    A_inv = np.linalg.inv(A)
    return A_inv @ B @ A_inv.T
