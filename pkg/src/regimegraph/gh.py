"""Symmetric multivariate generalized hyperbolic (GH) distribution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .special import PARAM_FLOOR, DomainError, GigParams, gig_sample, log_bessel_k

LOG_2PI = np.log(2.0 * np.pi)

# (lambda, chi, psi); None marks the dimension-dependent gh index (d + 1) / 2.
PRESETS: dict[str, tuple[float | None, float, float]] = {
    "gaussian": (-20.0, 40.0, 0.001),
    "student_t": (-1.0, 2.0, 0.001),
    "cauchy": (-0.5, 2.0, 0.001),
    "laplace": (1.0, 0.001, 0.5),
    "generalized_hyperbolic": (None, 2.0, 3.0),
    "variance_gamma": (1.5, 0.001, 0.5),
}

PRESET_ALIASES = {
    "normal": "gaussian",
    "n": "gaussian",
    "t": "student_t",
    "c": "cauchy",
    "l": "laplace",
    "gh": "generalized_hyperbolic",
    "vg": "variance_gamma",
}


def preset_shape(name: str, d: int) -> tuple[float, float, float]:
    """Return ``(lambda, chi, psi)`` for a named special case at dimension ``d``."""
    key = PRESET_ALIASES.get(name.lower(), name.lower())
    if key not in PRESETS:
        raise KeyError(f"unknown distribution preset {name!r}")
    lam, chi, psi = PRESETS[key]
    if lam is None:
        lam = (d + 1) / 2.0
    return float(lam), float(chi), float(psi)


def _check_spd(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"{what} must be a square matrix")
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{what} has non-finite entries")
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-12):
        raise DomainError(f"{what} must be symmetric")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise DomainError(f"{what} is not positive definite") from None


@dataclass(frozen=True, eq=False)
class GhParams:
    """Parameters of ``GH_d(mu, Sigma, lambda, chi, psi)``.

    Build from a scale matrix with the default constructor or from a precision
    matrix with :meth:`from_precision`. Whichever matrix is supplied is kept
    verbatim (exact zeros in a sparse precision survive), the other one is
    derived from it.
    """

    mu: np.ndarray
    sigma: np.ndarray
    lam: float
    chi: float
    psi: float
    theta: np.ndarray = field(default=None)
    logdet_sigma: float = field(init=False)
    _chol_theta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float)).copy()
        sigma = np.asarray(self.sigma, dtype=float).copy()
        if mu.ndim != 1 or sigma.shape != (mu.size, mu.size):
            raise ValueError("mu and sigma dimensions disagree")
        _check_spd(sigma, "sigma")
        # remove round-off asymmetry so the stored matrix is exactly symmetric
        sigma = 0.5 * (sigma + sigma.T)
        chol = np.linalg.cholesky(sigma)
        if self.theta is None:
            theta = np.linalg.inv(sigma)
            theta = 0.5 * (theta + theta.T)
        else:
            theta = np.asarray(self.theta, dtype=float).copy()
        chol_theta = _check_spd(theta, "theta")
        if not np.isfinite(self.lam):
            raise DomainError("lambda must be finite")
        if not (self.chi > 0 and self.psi > 0):
            raise DomainError("chi and psi must be positive")
        for arr in (mu, sigma, theta):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "chi", max(float(self.chi), PARAM_FLOOR))
        object.__setattr__(self, "psi", max(float(self.psi), PARAM_FLOOR))
        object.__setattr__(self, "logdet_sigma", 2.0 * float(np.sum(np.log(np.diag(chol)))))
        object.__setattr__(self, "_chol_theta", chol_theta)

    @classmethod
    def from_precision(cls, mu, theta, lam, chi, psi) -> "GhParams":
        theta = np.asarray(theta, dtype=float)
        theta = 0.5 * (theta + theta.T)
        _check_spd(theta, "theta")
        sigma = np.linalg.inv(theta)
        return cls(mu, 0.5 * (sigma + sigma.T), lam, chi, psi, theta=theta)

    @classmethod
    def from_preset(cls, name: str, mu, sigma) -> "GhParams":
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return cls(mu, sigma, *preset_shape(name, mu.size))

    @property
    def d(self) -> int:
        return self.mu.size

    @property
    def shape(self) -> tuple[float, float, float]:
        return self.lam, self.chi, self.psi

    @property
    def gig(self) -> GigParams:
        return GigParams(self.lam, self.chi, self.psi)

    def with_shape(self, lam, chi, psi) -> "GhParams":
        return GhParams(self.mu, self.sigma, lam, chi, psi, theta=self.theta)


def mahalanobis_sq(y, p: GhParams):
    """Squared Mahalanobis distance ``(y - mu)' Theta (y - mu)``.

    ``y`` may be a single vector or a ``T x d`` matrix; the result is a float
    or a length-``T`` array.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != p.d:
        raise ValueError(f"expected observations of dimension {p.d}, got {y.shape[-1]}")
    diff = y - p.mu
    # ||L' (y - mu)||^2 with Theta = L L'
    proj = diff @ p._chol_theta
    return np.sum(proj * proj, axis=-1)


def gh_logpdf(y, p: GhParams):
    """Log-density of the symmetric GH distribution.

    Evaluated entirely in the log domain:

    ``log f = (lam/2) log(psi/chi) - (d/2) log(2 pi) - (1/2) log|Sigma|
    - log K_lam(sqrt(chi psi)) + ((lam - d/2)/2) log((chi + delta)/psi)
    + log K_{lam - d/2}(sqrt((chi + delta) psi))``
    """
    delta = mahalanobis_sq(y, p)
    return _gh_logpdf_from_delta(delta, p.d, p.logdet_sigma, p.lam, p.chi, p.psi)


def _gh_logpdf_from_delta(delta, d, logdet_sigma, lam, chi, psi):
    chi = max(chi, PARAM_FLOOR)
    psi = max(psi, PARAM_FLOOR)
    nu = lam - 0.5 * d
    q = chi + delta
    const = (
        0.5 * lam * (np.log(psi) - np.log(chi))
        - 0.5 * d * LOG_2PI
        - 0.5 * logdet_sigma
        - log_bessel_k(lam, np.sqrt(chi * psi))
    )
    return const + 0.5 * nu * (np.log(q) - np.log(psi)) + log_bessel_k(nu, np.sqrt(q * psi))


def normalize_scale(s_star) -> np.ndarray:
    """Rescale an SPD matrix to unit determinant, ``|S|^{-1/d} S``."""
    s_star = np.asarray(s_star, dtype=float)
    chol = _check_spd(0.5 * (s_star + s_star.T), "scale matrix")
    d = s_star.shape[0]
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    out = s_star * np.exp(-logdet / d)
    return 0.5 * (out + out.T)


def sym_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition."""
    vals, vecs = np.linalg.eigh(m)
    return (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


def gh_sample(p: GhParams, n: int, seed=None) -> np.ndarray:
    """Draw an ``n x d`` sample via ``Y = mu + sqrt(W) Sigma^{1/2} Z``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    w = gig_sample(p.gig, n, rng)
    z = rng.standard_normal((n, p.d))
    return p.mu + np.sqrt(w)[:, None] * (z @ sym_sqrt(p.sigma))
