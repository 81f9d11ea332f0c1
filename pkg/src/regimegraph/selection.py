"""Information criteria, clustering agreement and edge-recovery metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import linear_sum_assignment
from scipy.special import comb

from .simulate import random_sparse_precision  # noqa: F401  (re-exported)

DF_MODES = ("printed", "strict")


def degrees_of_freedom(theta, mode: str = "printed") -> int:
    """Parameter count of one state's precision matrix.

    ``"printed"`` is ``d`` plus the number of nonzero entries on and below
    the diagonal. ``"strict"`` is ``d`` plus the nonzero entries strictly
    below it, which counts the diagonal once.
    """
    theta = np.asarray(theta)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValueError("theta must be square")
    if mode not in DF_MODES:
        raise ValueError(f"mode must be one of {DF_MODES}")
    d = theta.shape[0]
    k = 0 if mode == "printed" else -1
    return int(d + np.count_nonzero(np.tril(theta, k)))


@dataclass(frozen=True)
class SelectionScore:
    K: int
    rho: float
    loglik: float
    df: tuple
    bic: float
    mmdl: float

    @property
    def df_total(self) -> int:
        return int(sum(self.df))


def score(loglik: float, T: int, K: int, df: Sequence[int], nu: Sequence[float],
          rho: float = 0.0) -> SelectionScore:
    """BIC and MMDL of a fitted model; lower is better.

    ``BIC = -loglik + log(T) K (K - 1) / 2 + log(T) sum_k df_k / 2`` and
    ``MMDL = -loglik + log(T) K (K - 1) / 2 + sum_k log(T nu_k) df_k / 2``.
    """
    df = tuple(int(x) for x in df)
    nu = tuple(float(x) for x in nu)
    if T < 2:
        raise ValueError("T must be at least 2")
    if len(df) != K or len(nu) != K:
        raise ValueError("df and nu must have one entry per state")
    if any(x <= 0 for x in nu):
        raise ValueError("nu must be positive")
    log_t = math.log(T)
    chain = 0.5 * log_t * K * (K - 1)
    bic = -loglik + chain + 0.5 * log_t * sum(df)
    mmdl = -loglik + chain + 0.5 * sum(math.log(T * n) * f for n, f in zip(nu, df))
    return SelectionScore(K, float(rho), float(loglik), df, bic, mmdl)


def select(scores: Iterable[SelectionScore], criterion: str = "bic") -> SelectionScore:
    """Entry minimizing ``criterion``; ties go to smaller K, then smaller rho."""
    scores = list(scores)
    if not scores:
        raise ValueError("empty grid")
    if criterion not in ("bic", "mmdl"):
        raise ValueError("criterion must be 'bic' or 'mmdl'")
    return min(scores, key=lambda s: (getattr(s, criterion), s.K, s.rho))


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index between two labelings of the same items."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("partitions must be 1-d and of equal length")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all singletons or one block)
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def align_states(true_labels, est_labels, K: int | None = None) -> np.ndarray:
    """Permutation ``perm`` with estimated state ``perm[k]`` matched to true state ``k``.

    Hungarian assignment on the contingency table of the two labelings.
    """
    true_labels = np.asarray(true_labels)
    est_labels = np.asarray(est_labels)
    K = K or int(max(true_labels.max(), est_labels.max()) + 1)
    table = np.zeros((K, K))
    np.add.at(table, (true_labels, est_labels), 1.0)
    _, cols = linear_sum_assignment(-table)
    return cols


def align_by_location(true_mu, est_mu) -> np.ndarray:
    """Permutation matching estimated to true locations by Hungarian assignment."""
    true_mu = np.asarray(true_mu, dtype=float)
    est_mu = np.asarray(est_mu, dtype=float)
    cost = np.linalg.norm(true_mu[:, None, :] - est_mu[None, :, :], axis=2)
    _, cols = linear_sum_assignment(cost)
    return cols


@dataclass(frozen=True)
class EdgeRecovery:
    tpr: float
    fpr: float
    true_edges: frozenset
    estimated_edges: frozenset
    n_pairs: int

    @property
    def tp(self) -> int:
        return len(self.true_edges & self.estimated_edges)

    @property
    def fp(self) -> int:
        return len(self.estimated_edges - self.true_edges)


def _edges(theta) -> frozenset:
    rows, cols = np.nonzero(np.triu(np.asarray(theta) != 0, 1))
    return frozenset(zip(rows.tolist(), cols.tolist()))


def edge_recovery(theta_true, theta_est) -> EdgeRecovery:
    """True- and false-positive rates of the estimated off-diagonal support."""
    theta_true = np.asarray(theta_true)
    theta_est = np.asarray(theta_est)
    if theta_true.shape != theta_est.shape:
        raise ValueError("precision matrices must have the same shape")
    d = theta_true.shape[0]
    n_pairs = d * (d - 1) // 2
    true_e = _edges(theta_true)
    est_e = _edges(theta_est)
    n_pos = len(true_e)
    n_neg = n_pairs - n_pos
    tp = len(true_e & est_e)
    fp = len(est_e - true_e)
    tpr = tp / n_pos if n_pos else 0.0
    fpr = fp / n_neg if n_neg else 0.0
    return EdgeRecovery(tpr, fpr, true_e, est_e, n_pairs)


def roc_auc(fpr, tpr) -> float:
    """Area under a ROC curve by the trapezoid rule.

    The points are sorted by false-positive rate (ties by true-positive rate)
    and the corners ``(0, 0)`` and ``(1, 1)`` are added.
    """
    fpr = np.asarray(fpr, dtype=float)
    tpr = np.asarray(tpr, dtype=float)
    pts = sorted(zip(np.r_[0.0, fpr, 1.0], np.r_[0.0, tpr, 1.0]))
    x, y = np.array(pts).T
    return float(trapezoid(y, x))
