"""L1-penalized state precision matrices.

The penalized objective of a K-state model is

    F = loglik - (T / 2) * rho * sum_k sqrt(nu_k) * ||Theta_k||_1,off

where ``||.||_1,off`` sums absolute off-diagonal entries. Putting ``T/2`` in
front makes ``rho`` a per-observation penalty, so one grid of ``rho`` values
works across sample sizes. The precision step of state ``k`` solves a
graphical lasso on ``S_k / n_k`` with penalty ``rho sqrt(nu_k) T / n_k``, where
``S_k`` is the ``gamma * u``-weighted scatter and ``n_k`` the effective sample
size, and then optionally rescales the solution to unit determinant. Under the
unit-determinant constraint that rescaled solution is the exact constrained
maximizer, so the penalized objective still rises monotonically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .ecme import (GHHMM, FitConfig, FitError, FitResult, LatentMoments, _weighted_location,
                   multistart, run_ecme)
from .gh import GhParams
from .hmm import Posteriors

WEIGHTING_MODES = ("uniform", "effective_sample")


class GlassoError(RuntimeError):
    """The graphical lasso did not converge; ``gap`` is the last duality gap."""

    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


@dataclass(frozen=True)
class PenaltySpec:
    """Tuning parameter and state weights of the L1 penalty.

    ``nu`` is only used when ``weighting_mode`` is ``"uniform"`` and given
    explicitly; otherwise the weights are ``1/K`` (uniform) or the current
    occupancy shares ``sum_t gamma_t(k) / T`` (effective_sample), recomputed
    from the posteriors at every iteration.
    """

    rho: float = 0.0
    nu: tuple | None = None
    weighting_mode: str = "uniform"

    def __post_init__(self):
        if not (np.isfinite(self.rho) and self.rho >= 0):
            raise ValueError("rho must be a finite non-negative number")
        if self.weighting_mode not in WEIGHTING_MODES:
            raise ValueError(f"weighting_mode must be one of {WEIGHTING_MODES}")
        if self.nu is not None:
            nu = tuple(float(x) for x in self.nu)
            if any(x <= 0 for x in nu) or abs(sum(nu) - 1.0) > 1e-12:
                raise ValueError("nu must be positive and sum to one")
            object.__setattr__(self, "nu", nu)

    def weights(self, K: int, gamma=None) -> np.ndarray:
        if self.weighting_mode == "effective_sample" and gamma is not None:
            occ = np.asarray(gamma).sum(axis=0)
            occ = np.maximum(occ, 1e-12)
            return occ / occ.sum()
        if self.nu is not None:
            if len(self.nu) != K:
                raise ValueError("nu has the wrong length")
            return np.array(self.nu)
        return np.full(K, 1.0 / K)


def rho_grid(lo: float = 0.01, hi: float = 0.9, n: int = 50, spacing: str = "log") -> np.ndarray:
    """Grid of tuning parameters, log- or equally spaced."""
    if not (0 < lo <= hi) or n < 1:
        raise ValueError("need 0 < lo <= hi and n >= 1")
    if spacing == "log":
        return np.geomspace(lo, hi, n)
    if spacing == "linear":
        return np.linspace(lo, hi, n)
    raise ValueError("spacing must be 'log' or 'linear'")


def weighted_scatter(data, post: Posteriors, mom: LatentMoments, mu) -> list:
    """``S_k = sum_t gamma_t(k) u_tk (y_t - mu_k)(y_t - mu_k)'`` for every state."""
    data = np.asarray(data, dtype=float)
    out = []
    for k in range(post.K):
        diff = data - np.asarray(mu[k], dtype=float)
        w = post.gamma[:, k] * mom.u[:, k]
        s = (diff * w[:, None]).T @ diff
        out.append(0.5 * (s + s.T))
    return out


# ---------------------------------------------------------------------------
# graphical lasso


@njit(cache=True, nogil=True)
def _lasso_cd(w11, s12, beta, penalty, tol, max_iter):
    """Coordinate descent for min 0.5 b'W b - s'b + penalty |b|_1."""
    p = s12.size
    for _ in range(max_iter):
        dmax = 0.0
        for i in range(p):
            r = s12[i]
            for k in range(p):
                if k != i:
                    r -= w11[i, k] * beta[k]
            if r > penalty:
                b = (r - penalty) / w11[i, i]
            elif r < -penalty:
                b = (r + penalty) / w11[i, i]
            else:
                b = 0.0
            ch = abs(b - beta[i])
            if ch > dmax:
                dmax = ch
            beta[i] = b
        if dmax < tol:
            break
    return beta


@njit(cache=True, nogil=True)
def _glasso_kernel(s, penalty, tol, max_sweeps, w, betas):
    d = s.shape[0]
    idx = np.empty(d - 1, dtype=np.int64)
    scale = 0.0
    for i in range(d):
        for j in range(d):
            if i != j:
                scale += abs(s[i, j])
    scale = max(scale / (d * (d - 1)), 1e-12)
    sweeps = 0
    converged = False
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        change = 0.0
        for j in range(d):
            m = 0
            for i in range(d):
                if i != j:
                    idx[m] = i
                    m += 1
            w11 = np.empty((d - 1, d - 1))
            s12 = np.empty(d - 1)
            for a in range(d - 1):
                s12[a] = s[idx[a], j]
                for b in range(d - 1):
                    w11[a, b] = w[idx[a], idx[b]]
            beta = betas[j].copy()
            beta = _lasso_cd(w11, s12, beta, penalty, 1e-12 * scale, 10000)
            betas[j, :] = beta
            for a in range(d - 1):
                val = 0.0
                for b in range(d - 1):
                    val += w11[a, b] * beta[b]
                change += abs(val - w[idx[a], j])
                w[idx[a], j] = val
                w[j, idx[a]] = val
        if change / (d * (d - 1)) < tol * scale:
            converged = True
            break
    return sweeps, converged


def _assemble_theta(w, betas):
    d = w.shape[0]
    theta = np.zeros((d, d))
    for j in range(d):
        others = np.delete(np.arange(d), j)
        beta = betas[j]
        t22 = 1.0 / (w[j, j] - w[others, j] @ beta)
        theta[j, j] = t22
        theta[others, j] = -beta * t22
    # column j carries the entries above the diagonal; mirror them below
    upper = np.triu(theta, 1)
    return upper + upper.T + np.diag(np.diag(theta))


def duality_gap(s, theta, penalty) -> float:
    """``tr(S Theta) - d + penalty ||Theta||_1,off``; zero at the optimum."""
    off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return float(np.sum(s * theta) - s.shape[0] + penalty * off)


def glasso(s, penalty: float, tol: float = 1e-6, max_sweeps: int = 500):
    """Graphical lasso with an off-diagonal L1 penalty.

    Maximizes ``log|Theta| - tr(S Theta) - penalty * sum_{i != j} |Theta_ij|``
    by block coordinate descent on the covariance ``W``; each column is a
    lasso problem solved by cyclic coordinate descent with soft thresholding,
    so zeros in ``Theta`` are exact.

    Parameters
    ----------
    s : (d, d) array
        Symmetric positive semidefinite matrix with a positive diagonal.
    penalty : float
        Non-negative penalty; must be positive if ``s`` is singular.
    tol : float
        Sweeps stop once the mean absolute change of the off-diagonal of
        ``W`` falls below ``tol`` times the mean absolute off-diagonal of ``s``.
    max_sweeps : int
        Sweep budget.

    Returns
    -------
    theta, sigma : (d, d) arrays
        The precision estimate and its inverse.

    Raises
    ------
    GlassoError
        If the sweep budget runs out; carries the last duality gap.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("s must be a square matrix")
    if not np.all(np.isfinite(s)) or not np.allclose(s, s.T, rtol=1e-10, atol=1e-12):
        raise ValueError("s must be finite and symmetric")
    if penalty < 0 or not np.isfinite(penalty):
        raise ValueError("penalty must be non-negative")
    s = 0.5 * (s + s.T)
    d = s.shape[0]
    if np.any(np.diag(s) <= 0):
        raise ValueError("s must have a positive diagonal")
    if penalty == 0 or d == 1:
        try:
            np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            raise ValueError("an unpenalized fit needs a positive definite s") from None
        theta = np.linalg.inv(s)
        theta = 0.5 * (theta + theta.T)
        return theta, s.copy()
    w = s.copy()
    betas = np.zeros((d, d - 1))
    _, converged = _glasso_kernel(s, float(penalty), float(tol), int(max_sweeps), w, betas)
    theta = _assemble_theta(w, betas)
    if not converged:
        raise GlassoError(
            f"graphical lasso did not converge in {max_sweeps} sweeps",
            duality_gap(s, theta, penalty),
        )
    try:
        np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise GlassoError("graphical lasso returned an indefinite matrix",
                          duality_gap(s, theta, penalty)) from None
    sigma = np.linalg.inv(theta)
    return theta, 0.5 * (sigma + sigma.T)


def kkt_residual(s, theta, penalty) -> float:
    """Largest violation of the stationarity conditions of :func:`glasso`."""
    s = np.asarray(s, dtype=float)
    w = np.linalg.inv(theta)
    g = w - s
    d = s.shape[0]
    off = ~np.eye(d, dtype=bool)
    nz = off & (theta != 0)
    zero = off & (theta == 0)
    res = [np.max(np.abs(np.diag(g)))]
    if np.any(nz):
        res.append(np.max(np.abs(g[nz] - penalty * np.sign(theta[nz]))))
    if np.any(zero):
        res.append(max(np.max(np.abs(g[zero])) - penalty, 0.0))
    return float(max(res))


# ---------------------------------------------------------------------------
# penalized CM-step and fit


def l1_off(theta) -> float:
    theta = np.asarray(theta)
    return float(np.abs(theta).sum() - np.abs(np.diag(theta)).sum())


def penalty_value(model: GHHMM, spec: PenaltySpec, T: int, gamma=None) -> float:
    """``(T/2) rho sum_k sqrt(nu_k) ||Theta_k||_1,off``."""
    if spec.rho == 0:
        return 0.0
    nu = spec.weights(model.K, gamma)
    return 0.5 * T * spec.rho * sum(np.sqrt(n) * l1_off(p.theta)
                                    for n, p in zip(nu, model.emissions))


def penalized_cm_step2(data, post: Posteriors, mom: LatentMoments, spec: PenaltySpec,
                       renormalize_det: bool = True, glasso_tol: float = 1e-6,
                       max_sweeps: int = 500):
    """Locations, sparse precisions and scales for every state.

    Returns a list of ``(mu_k, theta_k, sigma_k)``.
    """
    data = np.asarray(data, dtype=float)
    T = data.shape[0]
    nu = spec.weights(post.K, post.gamma)
    out = []
    for k in range(post.K):
        mu, n_k, wu = _weighted_location(data, post.gamma[:, k], mom.u[:, k], k)
        diff = data - mu
        s = (diff * wu[:, None]).T @ diff / n_k
        s = 0.5 * (s + s.T)
        pen = spec.rho * np.sqrt(nu[k]) * T / n_k
        try:
            theta, sigma = glasso(s, pen, glasso_tol, max_sweeps)
        except ValueError as exc:
            raise FitError(f"state {k}: {exc}", state=k) from None
        if renormalize_det:
            sign, logdet = np.linalg.slogdet(theta)
            c = np.exp(-logdet / theta.shape[0])
            theta = theta * c
            sigma = sigma / c
        out.append((mu, theta, sigma))
    return out


def edge_set(theta) -> set:
    """Unordered pairs ``(i, l)``, ``i < l``, with a nonzero precision entry."""
    theta = np.asarray(theta)
    rows, cols = np.nonzero(np.triu(theta != 0, 1))
    return {(int(i), int(l)) for i, l in zip(rows, cols)}


@dataclass
class PenalizedFit:
    result: FitResult
    spec: PenaltySpec
    edges: list

    @property
    def model(self) -> GHHMM:
        return self.result.model

    @property
    def posteriors(self) -> Posteriors:
        return self.result.posteriors

    @property
    def trace(self) -> np.ndarray:
        return self.result.trace

    @property
    def loglik(self) -> float:
        return self.result.loglik


def fit_penalized(data, K: int, spec: PenaltySpec, cfg: FitConfig | None = None,
                  init: GHHMM | None = None, renormalize_det: bool = True,
                  glasso_tol: float = 1e-6, max_sweeps: int = 500) -> PenalizedFit:
    """Penalized ECME fit.

    With ``init`` the iterations start from that model (warm start along a
    ``rho`` path); otherwise a multi-start over K-means initializations is
    run as in the unpenalized fit. The trace holds the penalized objective.
    """
    cfg = cfg or FitConfig()
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or not np.all(np.isfinite(data)):
        raise ValueError("data must be a finite T x d matrix")
    T = data.shape[0]

    def location_step(data_, post, mom, model):
        return [
            GhParams(mu, sigma, p.lam, p.chi, p.psi, theta=theta)
            for (mu, theta, sigma), p in zip(
                penalized_cm_step2(data_, post, mom, spec, renormalize_det, glasso_tol, max_sweeps),
                model.emissions,
            )
        ]

    def penalty_term(model, post):
        return penalty_value(model, spec, T, post.gamma)

    def make_run(start_model, max_iter, s):
        if isinstance(start_model, FitResult):
            return _resume(start_model)
        return run_ecme(data, start_model, cfg, max_iter=max_iter, location_step=location_step,
                        penalty_term=penalty_term, start=s)

    def _resume(res):
        more = run_ecme(data, res.model, cfg, max_iter=max(cfg.max_iter - res.n_iter, 0),
                        location_step=location_step, penalty_term=penalty_term, start=res.start)
        more.trace = np.concatenate([res.trace[:-1], more.trace])
        more.loglik_trace = np.concatenate([res.loglik_trace[:-1], more.loglik_trace])
        more.n_iter += res.n_iter
        more.flags = res.flags + more.flags
        return more

    if init is not None:
        if init.K != K:
            raise ValueError("initial model has the wrong number of states")
        res = make_run(init, None, 0)
    else:
        res = multistart(data, K, cfg, make_run)
    return PenalizedFit(res, spec, [edge_set(p.theta) for p in res.model.emissions])


def fit_path(data, K: int, rhos, cfg: FitConfig | None = None,
             weighting_mode: str = "uniform", renormalize_det: bool = True,
             **kw) -> list:
    """Penalized fits along a grid of ``rho`` values.

    The smallest ``rho`` is fitted by multi-start; every later grid point is
    warm-started from the previous solution, in increasing order of ``rho``.
    Results are returned in the order of ``rhos``.
    """
    rhos = np.asarray(rhos, dtype=float)
    order = np.argsort(rhos, kind="stable")
    fits = [None] * rhos.size
    prev = None
    for i in order:
        spec = PenaltySpec(float(rhos[i]), weighting_mode=weighting_mode)
        fitted = fit_penalized(data, K, spec, cfg, init=prev,
                               renormalize_det=renormalize_det, **kw)
        fits[i] = fitted
        prev = fitted.model
    return fits
