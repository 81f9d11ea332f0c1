"""
Modified Bessel functions of the third kind and the generalized inverse
Gaussian (GIG) distribution.

The GIG density used throughout the package is

.. math::
    f(w; \\lambda, \\chi, \\psi) = \\frac{(\\psi/\\chi)^{\\lambda/2}}
    {2 K_\\lambda(\\sqrt{\\chi\\psi})} w^{\\lambda-1}
    \\exp\\left(-\\frac{\\chi/w + \\psi w}{2}\\right), \\quad w > 0.

Everything is evaluated in the log domain: the E-step needs ratios of Bessel
values that individually over- or underflow double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc
from scipy.stats import geninvgauss

# Floor applied to chi and psi everywhere; keeps the GIG proper near the
# limiting (gamma / inverse-gamma) cases.
PARAM_FLOOR = 1e-8

# Orders at or above this use the uniform (Debye) expansion when the scaled
# AMOS routine overflows.
_DEBYE_MIN_ORDER = 10.0


class DomainError(ValueError):
    """Raised when a special-function argument is outside its domain."""


@dataclass(frozen=True)
class GigParams:
    """Parameters of a GIG distribution; ``chi`` and ``psi`` are floored."""

    lam: float
    chi: float
    psi: float

    def __post_init__(self):
        for name in ("lam", "chi", "psi"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"GIG parameter {name} must be finite")
        if self.chi <= 0 or self.psi <= 0:
            raise DomainError("GIG requires chi > 0 and psi > 0")
        object.__setattr__(self, "chi", max(float(self.chi), PARAM_FLOOR))
        object.__setattr__(self, "psi", max(float(self.psi), PARAM_FLOOR))
        object.__setattr__(self, "lam", float(self.lam))


def _debye_u(p):
    p2 = p * p
    u1 = p * (3.0 - 5.0 * p2) / 24.0
    u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0
    u3 = p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2**2 - 425425.0 * p2**3) / 414720.0
    u4 = p2 * p2 * (
        4465125.0
        - 94121676.0 * p2
        + 349922430.0 * p2**2
        - 446185740.0 * p2**3
        + 185910725.0 * p2**4
    ) / 39813120.0
    return u1, u2, u3, u4


def _log_bessel_k_debye(nu, x):
    """Uniform asymptotic expansion of log K_nu(x) for large nu."""
    z = x / nu
    root = np.hypot(1.0, z)
    # log(z / (1 + root)) written to stay accurate for tiny z
    eta = root + np.log(z) - np.log1p(root)
    p = 1.0 / root
    u1, u2, u3, u4 = _debye_u(p)
    series = 1.0 - u1 / nu + u2 / nu**2 - u3 / nu**3 + u4 / nu**4
    return (
        0.5 * np.log(np.pi / (2.0 * nu))
        - nu * eta
        - 0.5 * np.log(root)
        + np.log(series)
    )


def _log_bessel_k_small_x(nu, x):
    """Leading small-argument term, log(Gamma(nu)/2 * (2/x)^nu), nu > 0."""
    return sc.gammaln(nu) - np.log(2.0) + nu * (np.log(2.0) - np.log(x))


def log_bessel_k(nu, x):
    """Logarithm of the modified Bessel function of the third kind.

    Parameters
    ----------
    nu : float or ndarray
        Real order; broadcast against ``x``. ``K_{-nu} = K_nu``.
    x : float or ndarray
        Positive argument.

    Returns
    -------
    float or ndarray
        ``log K_nu(x)``.

    Notes
    -----
    The exponentially scaled AMOS routine (``scipy.special.kve``) is used
    wherever it is representable. Where it overflows, large orders switch to
    the Debye expansion and small orders (which can only overflow for
    vanishing ``x``) to the leading term of the small-argument series.
    """
    if isinstance(nu, (float, int)) and isinstance(x, (float, int)):
        return _log_bessel_k_scalar(float(nu), float(x))
    nu_arr = np.abs(np.asarray(nu, dtype=float))
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)) or np.any(x_arr <= 0):
        raise DomainError("log_bessel_k requires finite x > 0")
    if not np.all(np.isfinite(nu_arr)):
        raise DomainError("log_bessel_k requires a finite order")
    nu_b, x_b = np.broadcast_arrays(nu_arr, x_arr)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        scaled = sc.kve(nu_b, x_b)
        out = np.log(scaled) - x_b
    bad = ~np.isfinite(out)
    if np.any(bad):
        nb, xb = nu_b[bad], x_b[bad]
        fixed = np.where(
            nb >= _DEBYE_MIN_ORDER,
            _log_bessel_k_debye(np.maximum(nb, _DEBYE_MIN_ORDER), xb),
            _log_bessel_k_small_x(np.maximum(nb, 1e-300), xb),
        )
        out = np.array(out, dtype=float, copy=True)
        out[bad] = fixed
    if out.ndim == 0:
        return float(out)
    return out


def _log_bessel_k_scalar(nu: float, x: float) -> float:
    if not (math.isfinite(x) and x > 0):
        raise DomainError("log_bessel_k requires finite x > 0")
    if not math.isfinite(nu):
        raise DomainError("log_bessel_k requires a finite order")
    nu = abs(nu)
    scaled = sc.kve(nu, x)
    if 0.0 < scaled < math.inf:
        return math.log(scaled) - x
    if nu >= _DEBYE_MIN_ORDER:
        return float(_log_bessel_k_debye(nu, x))
    return float(_log_bessel_k_small_x(max(nu, 1e-300), x))


def _fd_step(nu):
    return np.maximum(1e-6, 1e-6 * np.abs(nu))


def dlog_bessel_k_dnu(nu, x):
    """Derivative of ``log K_nu(x)`` with respect to the order.

    Central difference with step ``max(1e-6, 1e-6 |nu|)``. The result is odd
    in ``nu`` and exactly zero at ``nu = 0``.
    """
    nu_arr = np.asarray(nu, dtype=float)
    h = _fd_step(nu_arr)
    out = (log_bessel_k(nu_arr + h, x) - log_bessel_k(nu_arr - h, x)) / (2.0 * h)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _clamp(chi, psi):
    chi = np.maximum(np.asarray(chi, dtype=float), PARAM_FLOOR)
    psi = np.maximum(np.asarray(psi, dtype=float), PARAM_FLOOR)
    return chi, psi


def gig_moments(lam, chi=None, psi=None):
    """Return ``(E[W], E[1/W], E[log W])`` for ``W ~ GIG(lam, chi, psi)``.

    Accepts either a :class:`GigParams` or three array-likes that broadcast.
    ``E[1/W]`` uses ``K_{lam-1}`` rather than the recurrence form, which
    avoids cancellation; it coincides with ``E[W]`` of ``GIG(-lam, psi, chi)``.
    """
    if isinstance(lam, GigParams):
        lam, chi, psi = lam.lam, lam.chi, lam.psi
    lam = np.asarray(lam, dtype=float)
    chi, psi = _clamp(chi, psi)
    omega = np.sqrt(chi * psi)
    log_scale = 0.5 * (np.log(chi) - np.log(psi))
    lk = log_bessel_k(lam, omega)
    e_w = np.exp(log_scale + log_bessel_k(lam + 1.0, omega) - lk)
    e_inv_w = np.exp(-log_scale + log_bessel_k(lam - 1.0, omega) - lk)
    e_log_w = log_scale + dlog_bessel_k_dnu(lam, omega)
    if np.ndim(e_w) == 0:
        return float(e_w), float(e_inv_w), float(e_log_w)
    return e_w, e_inv_w, e_log_w


def gig_logpdf(w, lam, chi, psi):
    """Log-density of ``GIG(lam, chi, psi)`` at ``w > 0``."""
    w = np.asarray(w, dtype=float)
    chi, psi = _clamp(chi, psi)
    omega = np.sqrt(chi * psi)
    return (
        0.5 * lam * (np.log(psi) - np.log(chi))
        - np.log(2.0)
        - log_bessel_k(lam, omega)
        + (lam - 1.0) * np.log(w)
        - 0.5 * (chi / w + psi * w)
    )


def gig_sample(params: GigParams, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` GIG variates.

    ``seed`` may be an integer or a ``numpy.random.Generator``; a request for
    zero draws returns an empty array. Sampling delegates to scipy's
    ratio-of-uniforms generator (``geninvgauss``) in the standardized
    parameterization ``p = lam, b = sqrt(chi psi)``, scaled by
    ``sqrt(chi/psi)``.
    """
    if not isinstance(params, GigParams):
        params = GigParams(*params)
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return np.empty(0)
    rng = np.random.default_rng(seed)
    b = np.sqrt(params.chi * params.psi)
    scale = np.sqrt(params.chi / params.psi)
    draws = geninvgauss.rvs(params.lam, b, scale=scale, size=n, random_state=rng)
    return np.asarray(draws, dtype=float)
