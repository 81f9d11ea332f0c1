"""Independent reference computations used across the test suite.

Nothing here calls into the package; every value comes from quadrature,
enumeration or direct arithmetic.
"""

import itertools

import numpy as np
from scipy.integrate import quad


def log_bessel_k_quad(nu, x):
    """log K_nu(x) from the integral of exp(-x cosh t) cosh(nu t) over t > 0.

    The integrand is rescaled by its peak value so the quadrature stays in
    range for large orders and tiny arguments.
    """
    nu = abs(float(nu))
    x = float(x)
    ts = np.arcsinh(nu / x) if nu > 0 else 0.0

    def g(t):
        with np.errstate(over="ignore"):
            return -x * np.cosh(t) + nu * t

    gs = g(ts)

    def f(t):
        return np.exp(g(t) - gs) * 0.5 * (1.0 + np.exp(-2.0 * nu * t))

    width = 1.0 / np.sqrt(x * np.cosh(ts))
    a, b = max(0.0, ts - 40.0 * width), ts + 40.0 * width
    total = 0.0
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=500)
    if a > 0:
        total += quad(f, 0.0, a, **opts)[0]
    total += quad(f, a, b, points=[ts] if ts > a else None, **opts)[0]
    total += quad(f, b, np.inf, **opts)[0]
    return gs + np.log(total)


def gig_unnormalized_log(w, lam, chi, psi):
    return (lam - 1.0) * np.log(w) - 0.5 * (chi / w + psi * w)


def gig_quad_moment(lam, chi, psi, g):
    """E[g(W)] for W ~ GIG by quadrature in log w, normalized by quadrature."""
    # locate the mode of the integrand in s = log w to centre the integral
    mode = ((lam - 1.0) + np.sqrt((lam - 1.0) ** 2 + chi * psi)) / psi
    s0 = np.log(mode)
    peak = gig_unnormalized_log(mode, lam, chi, psi) + s0

    def dens(s):
        w = np.exp(s)
        return np.exp(gig_unnormalized_log(w, lam, chi, psi) + s - peak)

    opts = dict(epsabs=0.0, epsrel=1e-12, limit=500)
    lo, hi = s0 - 60.0, s0 + 60.0
    norm = quad(dens, lo, hi, points=[s0], **opts)[0]
    num = quad(lambda s: g(np.exp(s)) * dens(s), lo, hi, points=[s0], **opts)[0]
    return num / norm


def gig_quad_norm(lam, chi, psi):
    """Integral of the normalized GIG density, by quadrature."""
    from scipy.special import kv

    omega = np.sqrt(chi * psi)
    const = (psi / chi) ** (lam / 2.0) / (2.0 * kv(lam, omega))
    mode = ((lam - 1.0) + np.sqrt((lam - 1.0) ** 2 + chi * psi)) / psi
    s0 = np.log(mode)
    f = lambda s: const * np.exp(gig_unnormalized_log(np.exp(s), lam, chi, psi) + s)
    return quad(f, s0 - 60.0, s0 + 60.0, points=[s0], epsabs=0.0, epsrel=1e-12, limit=500)[0]


def brute_force_hmm(log_e, pi, trans):
    """gamma, xi, loglik and the MAP path by enumerating all K^T paths."""
    log_e = np.asarray(log_e, dtype=float)
    T, K = log_e.shape
    with np.errstate(divide="ignore"):
        lpi, la = np.log(pi), np.log(trans)
    paths = np.array(list(itertools.product(range(K), repeat=T)))
    lp = lpi[paths[:, 0]] + log_e[0, paths[:, 0]]
    for t in range(1, T):
        lp = lp + la[paths[:, t - 1], paths[:, t]] + log_e[t, paths[:, t]]
    m = lp[np.isfinite(lp)].max()
    w = np.exp(lp - m)
    total = w.sum()
    gamma = np.zeros((T, K))
    xi = np.zeros((max(T - 1, 0), K, K))
    for p, wt in zip(paths, w):
        gamma[np.arange(T), p] += wt
        for t in range(T - 1):
            xi[t, p[t], p[t + 1]] += wt
    best = paths[int(np.argmax(lp))]
    return gamma / total, xi / total, m + np.log(total), best, lp.max()


def mixture_logpdf_quad(y, mu, sigma, lam, chi, psi):
    """log of the normal variance mixture over GIG weights, by quadrature."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = mu.size
    delta = float((y - mu) @ np.linalg.solve(sigma, y - mu))
    logdet = np.linalg.slogdet(sigma)[1]
    log_kl = log_bessel_k_quad(lam, np.sqrt(chi * psi))
    log_c = 0.5 * lam * np.log(psi / chi) - np.log(2.0) - log_kl

    def log_integrand(s):
        w = np.exp(s)
        normal = -0.5 * d * np.log(2 * np.pi * w) - 0.5 * logdet - 0.5 * delta / w
        return normal + log_c + gig_unnormalized_log(w, lam, chi, psi) + s

    # the joint integrand in s is log-concave enough to locate its peak on a grid
    grid = np.linspace(-40.0, 40.0, 8001)
    vals = log_integrand(grid)
    s0 = grid[int(np.argmax(vals))]
    peak = vals.max()
    f = lambda s: np.exp(log_integrand(s) - peak)
    val = quad(f, s0 - 50.0, s0 + 50.0, points=[s0], epsabs=0.0, epsrel=1e-12, limit=1000)[0]
    return peak + np.log(val)


def glasso_objective(s, theta, penalty):
    off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return -np.inf
    return logdet - np.sum(s * theta) - penalty * off
