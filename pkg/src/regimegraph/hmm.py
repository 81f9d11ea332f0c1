"""Log-domain forward-backward, Viterbi and local decoding for a homogeneous chain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True, eq=False)
class ChainParams:
    """Initial distribution ``pi`` and row-stochastic transition matrix ``trans``."""

    pi: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        pi = np.atleast_1d(np.asarray(self.pi, dtype=float)).copy()
        trans = np.atleast_2d(np.asarray(self.trans, dtype=float)).copy()
        K = pi.size
        if trans.shape != (K, K):
            raise ValueError("pi and trans dimensions disagree")
        if np.any(pi < 0) or np.any(trans < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(pi.sum() - 1.0) > 1e-10 or np.any(np.abs(trans.sum(axis=1) - 1.0) > 1e-10):
            raise ValueError("pi and the rows of trans must sum to one")
        # exact renormalization absorbs the tolerated rounding
        pi /= pi.sum()
        trans /= trans.sum(axis=1, keepdims=True)
        pi.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "trans", trans)

    @property
    def K(self) -> int:
        return self.pi.size

    def permuted(self, perm) -> "ChainParams":
        """Relabel states so that new state ``i`` is old state ``perm[i]``."""
        perm = np.asarray(perm)
        return ChainParams(self.pi[perm], self.trans[np.ix_(perm, perm)])


@dataclass(frozen=True, eq=False)
class Posteriors:
    """Smoothed marginals ``gamma`` (T x K), pairwise ``xi`` ((T-1) x K x K), log-likelihood."""

    gamma: np.ndarray
    xi: np.ndarray
    loglik: float

    @property
    def T(self) -> int:
        return self.gamma.shape[0]

    @property
    def K(self) -> int:
        return self.gamma.shape[1]


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


@njit(cache=True, nogil=True)
def _forward(log_pi, log_a, log_e):
    T, K = log_e.shape
    la = np.empty((T, K))
    for k in range(K):
        la[0, k] = log_pi[k] + log_e[0, k]
    for t in range(1, T):
        for k in range(K):
            m = -np.inf
            for j in range(K):
                v = la[t - 1, j] + log_a[j, k]
                if v > m:
                    m = v
            if m == -np.inf:
                la[t, k] = -np.inf
                continue
            s = 0.0
            for j in range(K):
                s += np.exp(la[t - 1, j] + log_a[j, k] - m)
            la[t, k] = m + np.log(s) + log_e[t, k]
    return la


@njit(cache=True, nogil=True)
def _backward(log_a, log_e):
    T, K = log_e.shape
    lb = np.empty((T, K))
    for k in range(K):
        lb[T - 1, k] = 0.0
    tmp = np.empty(K)
    for t in range(T - 2, -1, -1):
        for j in range(K):
            m = -np.inf
            for k in range(K):
                tmp[k] = log_a[j, k] + log_e[t + 1, k] + lb[t + 1, k]
                if tmp[k] > m:
                    m = tmp[k]
            if m == -np.inf:
                lb[t, j] = -np.inf
                continue
            s = 0.0
            for k in range(K):
                s += np.exp(tmp[k] - m)
            lb[t, j] = m + np.log(s)
    return lb


@njit(cache=True, nogil=True)
def _logsumexp_row(v):
    m = -np.inf
    for x in v:
        if x > m:
            m = x
    if m == -np.inf:
        return m
    s = 0.0
    for x in v:
        s += np.exp(x - m)
    return m + np.log(s)


@njit(cache=True, nogil=True)
def _pairwise(la, lb, log_a, log_e, loglik):
    T, K = log_e.shape
    xi = np.empty((max(T - 1, 0), K, K))
    for t in range(T - 1):
        tot = 0.0
        for j in range(K):
            for k in range(K):
                v = np.exp(la[t, j] + log_a[j, k] + log_e[t + 1, k] + lb[t + 1, k] - loglik)
                xi[t, j, k] = v
                tot += v
        for j in range(K):
            for k in range(K):
                xi[t, j, k] /= tot
    return xi


@njit(cache=True, nogil=True)
def _viterbi(log_pi, log_a, log_e):
    T, K = log_e.shape
    delta = np.empty((T, K))
    back = np.zeros((T, K), dtype=np.int64)
    for k in range(K):
        delta[0, k] = log_pi[k] + log_e[0, k]
    for t in range(1, T):
        for k in range(K):
            best = -np.inf
            arg = 0
            for j in range(K):
                v = delta[t - 1, j] + log_a[j, k]
                if v > best:
                    best = v
                    arg = j
            delta[t, k] = best + log_e[t, k]
            back[t, k] = arg
    path = np.empty(T, dtype=np.int64)
    best = -np.inf
    arg = 0
    for k in range(K):
        if delta[T - 1, k] > best:
            best = delta[T - 1, k]
            arg = k
    path[T - 1] = arg
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


def _check(log_emissions, chain: ChainParams) -> np.ndarray:
    log_e = np.ascontiguousarray(np.atleast_2d(np.asarray(log_emissions, dtype=float)))
    if log_e.ndim != 2 or log_e.shape[0] < 1:
        raise ValueError("log_emissions must be a non-empty T x K matrix")
    if log_e.shape[1] != chain.K:
        raise ValueError(f"log_emissions has {log_e.shape[1]} columns, chain has {chain.K} states")
    if not np.all(np.isfinite(log_e)):
        raise ValueError("log_emissions must be finite")
    return log_e


def forward_backward(log_emissions, chain: ChainParams) -> Posteriors:
    """Smoothed state and pairwise posteriors by log-domain recursions."""
    log_e = _check(log_emissions, chain)
    log_pi, log_a = _log(chain.pi), _log(chain.trans)
    la = _forward(log_pi, log_a, log_e)
    lb = _backward(log_a, log_e)
    loglik = _logsumexp_row(la[-1])
    if not np.isfinite(loglik):
        raise FloatingPointError("observation sequence has zero probability under the chain")
    gamma = np.exp(la + lb - loglik)
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = _pairwise(la, lb, log_a, log_e, loglik)
    return Posteriors(gamma, xi, float(loglik))


def log_likelihood(log_emissions, chain: ChainParams) -> float:
    """Observed-data log-likelihood from the forward pass alone."""
    log_e = _check(log_emissions, chain)
    la = _forward(_log(chain.pi), _log(chain.trans), log_e)
    return float(_logsumexp_row(la[-1]))


def backward_log_likelihood(log_emissions, chain: ChainParams) -> float:
    """Observed-data log-likelihood assembled from the backward pass."""
    log_e = _check(log_emissions, chain)
    lb = _backward(_log(chain.trans), log_e)
    return float(_logsumexp_row(_log(chain.pi) + log_e[0] + lb[0]))


def viterbi(log_emissions, chain: ChainParams) -> np.ndarray:
    """Jointly most probable state path (0-based labels)."""
    log_e = _check(log_emissions, chain)
    path, _ = _viterbi(_log(chain.pi), _log(chain.trans), log_e)
    return path


def path_log_prob(path, log_emissions, chain: ChainParams) -> float:
    """Joint log-probability of a state path and the observations."""
    path = np.asarray(path)
    log_e = np.asarray(log_emissions, dtype=float)
    log_pi, log_a = _log(chain.pi), _log(chain.trans)
    out = log_pi[path[0]] + log_e[0, path[0]]
    if path.size > 1:
        out += np.sum(log_a[path[:-1], path[1:]]) + np.sum(log_e[np.arange(1, path.size), path[1:]])
    return float(out)


def local_decode(post: Posteriors) -> np.ndarray:
    """Per-time argmax of ``gamma``; ties go to the lowest state index."""
    return np.argmax(post.gamma, axis=1)


def stationary_distribution(trans) -> np.ndarray:
    """Left eigenvector of ``trans`` for eigenvalue one, normalized to sum to one."""
    trans = np.asarray(trans, dtype=float)
    vals, vecs = np.linalg.eig(trans.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()
