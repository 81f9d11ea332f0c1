"""Data-generating models for the three simulation scenarios."""

from __future__ import annotations

import numpy as np

from .ecme import GHHMM
from .gh import GhParams, preset_shape, sym_sqrt
from .hmm import ChainParams
from .special import gig_sample

LOCATIONS = (np.array([5.0, 5.0]), np.array([-5.0, -5.0]), np.array([0.0, 0.0]))
SCALES = (
    np.array([[1.51, -1.13], [-1.13, 1.51]]),
    np.array([[1.51, 1.13], [1.13, 1.51]]),
    np.array([[1.01, 0.12], [0.12, 1.01]]),
)
CHAINS = {
    1: ChainParams([1.0], [[1.0]]),
    2: ChainParams([0.7, 0.3], [[0.9, 0.1], [0.1, 0.9]]),
    3: ChainParams([0.4, 0.3, 0.3], [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]),
}
# Location of state k in the d-dimensional graph scenario: LOCATION_LEVELS[k] * ones(d).
LOCATION_LEVELS = (5.0, -5.0, 0.0)


def sample_path(chain: ChainParams, T: int, rng) -> np.ndarray:
    """Draw a state path of length ``T`` from the chain."""
    rng = np.random.default_rng(rng)
    states = np.empty(T, dtype=int)
    states[0] = rng.choice(chain.K, p=chain.pi)
    cum = np.cumsum(chain.trans, axis=1)
    draws = rng.random(T)
    for t in range(1, T):
        states[t] = min(np.searchsorted(cum[states[t - 1]], draws[t], side="right"), chain.K - 1)
    return states


def sample_hmm(model: GHHMM, T: int, seed=None):
    """Simulate ``(data, states)`` from a GH hidden Markov model."""
    rng = np.random.default_rng(seed)
    states = sample_path(model.chain, T, rng)
    data = np.empty((T, model.d))
    for k, p in enumerate(model.emissions):
        idx = np.flatnonzero(states == k)
        if idx.size == 0:
            continue
        w = gig_sample(p.gig, idx.size, rng)
        z = rng.standard_normal((idx.size, p.d))
        data[idx] = p.mu + np.sqrt(w)[:, None] * (z @ sym_sqrt(p.sigma))
    return data, states


def scenario_model(preset: str, K: int) -> GHHMM:
    """Bivariate model shared by the parameter-recovery and clustering scenarios."""
    if K not in CHAINS:
        raise ValueError("K must be 1, 2 or 3")
    shape = preset_shape(preset, 2)
    emissions = tuple(GhParams(LOCATIONS[k], SCALES[k], *shape) for k in range(K))
    return GHHMM(emissions, CHAINS[K])


def random_sparse_precision(d: int, seed=None, min_eigenvalue: float = 0.6) -> np.ndarray:
    """Random sparse precision matrix.

    Each lower-triangular entry is -1, 0 or 1 with probabilities 0.15, 0.70,
    0.15 and mirrored; each diagonal entry is one plus the number of nonzero
    off-diagonal entries in its row. The diagonal is then shifted uniformly so
    the smallest eigenvalue equals ``min_eigenvalue``; off-diagonal support is
    untouched.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    rng = np.random.default_rng(seed)
    theta = np.zeros((d, d))
    rows, cols = np.tril_indices(d, -1)
    theta[rows, cols] = rng.choice([-1.0, 0.0, 1.0], size=rows.size, p=[0.15, 0.70, 0.15])
    theta = theta + theta.T
    np.fill_diagonal(theta, 1.0 + np.count_nonzero(theta, axis=1))
    shift = min_eigenvalue - np.linalg.eigvalsh(theta)[0]
    theta[np.diag_indices(d)] += shift
    return theta


def graph_scenario_model(preset: str, K: int, d: int = 10, seed=None) -> GHHMM:
    """d-dimensional model with a random sparse precision matrix per state."""
    if K not in CHAINS:
        raise ValueError("K must be 1, 2 or 3")
    rng = np.random.default_rng(seed)
    shape = preset_shape(preset, d)
    emissions = []
    for k in range(K):
        theta = random_sparse_precision(d, rng)
        emissions.append(GhParams.from_precision(LOCATION_LEVELS[k] * np.ones(d), theta, *shape))
    return GHHMM(tuple(emissions), CHAINS[K])
