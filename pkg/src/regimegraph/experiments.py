"""Monte Carlo harness for the three simulation scenarios.

Replicate ``r`` draws its data and fits with seeds spawned from one master
seed, so any replicate can be rerun on its own. With ``workers > 1`` the
replicates run on a thread pool; results are identical to a serial run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ecme import FitConfig, fit
from .hmm import local_decode
from .selection import adjusted_rand_index, align_states, edge_recovery, roc_auc
from .simulate import graph_scenario_model, sample_hmm, scenario_model
from .sparse import fit_path, rho_grid


def _replicate_seeds(seed, n):
    return [(int(a.generate_state(1)[0]), int(b.generate_state(1)[0]))
            for a, b in (ss.spawn(2) for ss in np.random.SeedSequence(seed).spawn(n))]


def _with_seed(cfg: FitConfig, seed: int) -> FitConfig:
    return FitConfig(**{**cfg.__dict__, "seed": seed})


def parallel_map(fn, items, workers: int = 1) -> list:
    """``[fn(x) for x in items]``, on a thread pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def parameter_vector(model) -> dict:
    """Flat ``name -> value`` view of the emission parameters (1-based states)."""
    out = {}
    for k, p in enumerate(model.emissions, start=1):
        for i, m in enumerate(p.mu, start=1):
            out[f"mu{k}[{i}]"] = m
        d = p.d
        for i in range(d):
            for j in range(i, d):
                out[f"sigma{k}[{i + 1},{j + 1}]"] = p.sigma[i, j]
        out[f"lambda{k}"] = p.lam
        out[f"chi{k}"] = p.chi
        out[f"psi{k}"] = p.psi
    return out


@dataclass
class ReplicateLog:
    """Per-fit diagnostics kept by every scenario runner."""

    n_iter: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    max_decrease: list = field(default_factory=list)

    def add(self, res):
        self.n_iter.append(res.n_iter)
        self.converged.append(res.converged)
        self.violations.append(res.monotone_violations)
        steps = np.diff(res.trace)
        self.max_decrease.append(float(max(0.0, -steps.min())) if steps.size else 0.0)


@dataclass
class Scenario1Result:
    preset: str
    K: int
    truth: dict
    estimates: list
    log: ReplicateLog

    def table(self):
        """Rows ``(name, true, mean, sd)`` in the order of the truth vector."""
        est = np.array([[e[n] for n in self.truth] for e in self.estimates])
        sd = est.std(axis=0, ddof=1) if len(est) > 1 else np.zeros(est.shape[1])
        return [(n, self.truth[n], m, s) for n, m, s in zip(self.truth, est.mean(axis=0), sd)]


def run_scenario1(preset: str, K: int, replicates: int = 10, T: int = 1000, seed: int = 0,
                  cfg: FitConfig | None = None, workers: int = 1) -> Scenario1Result:
    """Parameter recovery: fit each replicate, relabel states to the truth."""
    cfg = cfg or FitConfig()
    truth_model = scenario_model(preset, K)

    def one(seeds):
        data_seed, fit_seed = seeds
        data, states = sample_hmm(truth_model, T, data_seed)
        res = fit(data, K, _with_seed(cfg, fit_seed))
        perm = align_states(states, local_decode(res.posteriors), K)
        return res, parameter_vector(res.model.permuted(perm))

    estimates, log = [], ReplicateLog()
    for res, est in parallel_map(one, _replicate_seeds(seed, replicates), workers):
        log.add(res)
        estimates.append(est)
    return Scenario1Result(preset, K, parameter_vector(truth_model), estimates, log)


@dataclass
class Scenario2Result:
    preset: str
    K: int
    ari: np.ndarray
    log: ReplicateLog

    @property
    def mean(self) -> float:
        return float(np.mean(self.ari))

    @property
    def sd(self) -> float:
        return float(np.std(self.ari, ddof=1)) if self.ari.size > 1 else 0.0


def run_scenario2(preset: str, K: int, replicates: int = 10, T: int = 1000, seed: int = 0,
                  cfg: FitConfig | None = None, workers: int = 1) -> Scenario2Result:
    """Clustering: ARI between the true path and the local decoding."""
    cfg = cfg or FitConfig()
    truth_model = scenario_model(preset, K)

    def one(seeds):
        data_seed, fit_seed = seeds
        data, states = sample_hmm(truth_model, T, data_seed)
        res = fit(data, K, _with_seed(cfg, fit_seed))
        return res, adjusted_rand_index(states, local_decode(res.posteriors))

    ari, log = [], ReplicateLog()
    for res, a in parallel_map(one, _replicate_seeds(seed, replicates), workers):
        log.add(res)
        ari.append(a)
    return Scenario2Result(preset, K, np.array(ari), log)


@dataclass
class Scenario3Result:
    preset: str
    K: int
    rhos: np.ndarray
    tpr: np.ndarray  # replicates x len(rhos), averaged over states
    fpr: np.ndarray
    log: ReplicateLog

    @property
    def mean_tpr(self) -> np.ndarray:
        return self.tpr.mean(axis=0)

    @property
    def mean_fpr(self) -> np.ndarray:
        return self.fpr.mean(axis=0)

    @property
    def auc(self) -> float:
        return roc_auc(self.mean_fpr, self.mean_tpr)


def run_scenario3(preset: str, K: int, replicates: int = 10, T: int = 1000, d: int = 10,
                  rhos=None, seed: int = 0, cfg: FitConfig | None = None,
                  weighting_mode: str = "uniform", renormalize_det: bool = True,
                  workers: int = 1) -> Scenario3Result:
    """Edge recovery along a tuning grid.

    Every replicate draws fresh sparse precisions, fits the whole path with
    warm starts, relabels the states by overlap with the true path and
    records TPR and FPR averaged over states at each grid point.
    """
    cfg = cfg or FitConfig()
    rhos = rho_grid() if rhos is None else np.asarray(rhos, dtype=float)

    def one(seeds):
        data_seed, fit_seed = seeds
        rng = np.random.default_rng(data_seed)
        truth_model = graph_scenario_model(preset, K, d, rng)
        data, states = sample_hmm(truth_model, T, rng)
        fits = fit_path(data, K, rhos, _with_seed(cfg, fit_seed),
                        weighting_mode=weighting_mode, renormalize_det=renormalize_det)
        rows = []
        for fitted in fits:
            perm = align_states(states, local_decode(fitted.posteriors), K)
            recs = [edge_recovery(truth_model.emissions[k].theta,
                                  fitted.model.emissions[perm[k]].theta) for k in range(K)]
            rows.append((np.mean([e.tpr for e in recs]), np.mean([e.fpr for e in recs])))
        return fits, rows

    tpr = np.empty((replicates, rhos.size))
    fpr = np.empty_like(tpr)
    log = ReplicateLog()
    for r, (fits, rows) in enumerate(parallel_map(one, _replicate_seeds(seed, replicates),
                                                  workers)):
        for g, (fitted, (tp, fp)) in enumerate(zip(fits, rows)):
            log.add(fitted.result)
            tpr[r, g], fpr[r, g] = tp, fp
    return Scenario3Result(preset, K, rhos, tpr, fpr, log)
