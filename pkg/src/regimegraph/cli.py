"""Command-line entry point: ``regimegraph <command> [options]``.

Exit codes: 0 on success, 2 for usage or input errors, 3 when a fit fails
numerically.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .ecme import FitConfig, FitError, fit
from .experiments import parallel_map, run_scenario1, run_scenario2, run_scenario3
from .hmm import forward_backward, local_decode, viterbi
from .selection import degrees_of_freedom, score, select
from .simulate import graph_scenario_model, sample_hmm, scenario_model
from .sparse import GlassoError, PenaltySpec, fit_path, fit_penalized
from .special import DomainError

logger = logging.getLogger("regimegraph")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def _fit_config(cfg: io.RunConfig) -> FitConfig:
    return FitConfig(tol=cfg.tol, max_iter=cfg.max_iter, n_starts=cfg.n_starts, seed=cfg.seed,
                     shape_target=cfg.shape_target, screen_iter=cfg.screen_iter or None)


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(cfg) -> io.ReturnsTable:
    if not cfg.data:
        raise io.InputError("--data is required")
    if cfg.data_kind == "prices":
        table = io.ingest_prices(cfg.data)
        if table.n_dropped:
            logger.info("dropped %d incomplete price rows", table.n_dropped)
        return table
    if cfg.data_kind != "returns":
        raise io.InputError("data_kind must be 'returns' or 'prices'")
    return io.read_returns(cfg.data)


def _single_k(cfg) -> int:
    ks = io.parse_int_range(cfg.k)
    if len(ks) != 1:
        raise io.InputError("this command takes a single state count")
    return ks[0]


def _write_trace(path, res):
    io.write_table(path, "iteration", range(len(res.trace)), ["objective", "loglik"],
                   np.column_stack([res.trace, res.loglik_trace]))


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: io.RunConfig):
    if cfg.scenario not in (1, 2, 3):
        raise io.InputError("scenario must be 1, 2 or 3")
    K = _single_k(cfg)
    try:
        if cfg.scenario == 3:
            model = graph_scenario_model(cfg.preset, K, cfg.d, np.random.default_rng(cfg.seed))
        else:
            model = scenario_model(cfg.preset, K)
    except (KeyError, ValueError) as exc:
        raise io.InputError(str(exc)) from None
    data, states = sample_hmm(model, cfg.T, np.random.default_rng([cfg.seed, 1]))
    out = _out_dir(cfg)
    names = [f"y{i + 1}" for i in range(model.d)]
    index = range(1, cfg.T + 1)
    io.write_table(out / "data.csv", "date", index, names, data)
    io.write_states(out / "states.csv", index, {"state": states})
    io.write_params(out / "truth.txt", model, names)
    print(f"wrote {cfg.T} x {model.d} observations to {out / 'data.csv'}")


def cmd_fit(cfg: io.RunConfig):
    table = _load_data(cfg)
    K = _single_k(cfg)
    fcfg = _fit_config(cfg)
    out = _out_dir(cfg)
    if cfg.rho:
        rhos = io.parse_rho_grid(cfg.rho)
        if rhos.size != 1:
            raise io.InputError("fit takes a single rho; use select for a grid")
        spec = PenaltySpec(float(rhos[0]), weighting_mode=cfg.weighting_mode)
        res = fit_penalized(table.values, K, spec, fcfg,
                            renormalize_det=cfg.renormalize_det).result
    else:
        res = fit(table.values, K, fcfg)
    io.write_params(out / "params.txt", res.model, table.names)
    _write_trace(out / "trace.csv", res)
    status = "converged" if res.converged else "stopped at max_iter"
    print(f"{status} after {res.n_iter} iterations, loglik {res.loglik:.6f}")
    for flag in res.flags:
        logger.warning(flag)


def cmd_select(cfg: io.RunConfig):
    table = _load_data(cfg)
    ks = io.parse_int_range(cfg.k)
    rhos = io.parse_rho_grid(cfg.rho or "log:0.01:0.9:50")
    fcfg = _fit_config(cfg)
    T = table.values.shape[0]

    def path(K):
        return fit_path(table.values, K, rhos, fcfg, weighting_mode=cfg.weighting_mode,
                        renormalize_det=cfg.renormalize_det)

    # one warm-started path per state count; paths run in parallel
    scores, models = [], {}
    for K, fits in zip(ks, parallel_map(path, ks, cfg.workers)):
        for rho, fitted in zip(rhos, fits):
            model = fitted.model
            df = [degrees_of_freedom(p.theta, cfg.df_mode) for p in model.emissions]
            nu = fitted.posteriors.gamma.sum(axis=0) / T
            s = score(fitted.loglik, T, K, df, np.maximum(nu, 1e-300), rho)
            scores.append(s)
            models[(K, float(rho))] = model
    out = _out_dir(cfg)
    io.write_scores(out / "scores.csv", scores)
    lines = []
    for crit in ("bic", "mmdl"):
        best = select(scores, crit)
        io.write_params(out / f"params_{crit}.txt", models[(best.K, best.rho)], table.names)
        lines.append(f"{crit} K={best.K} rho={io.fmt(best.rho)} value={io.fmt(getattr(best, crit))}")
    (out / "selection.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


def cmd_decode(cfg: io.RunConfig):
    table = _load_data(cfg)
    if not cfg.params:
        raise io.InputError("--params is required")
    model, _ = io.read_params(cfg.params)
    if model.d != table.values.shape[1]:
        raise io.InputError("data and parameter file dimensions disagree")
    log_e = model.log_emissions(table.values)
    post = forward_backward(log_e, model.chain)
    out = _out_dir(cfg)
    io.write_table(out / "posteriors.csv", "date", table.dates,
                   [f"state{k + 1}" for k in range(model.K)], post.gamma)
    io.write_states(out / "decoded.csv", table.dates,
                    {"local": local_decode(post), "viterbi": viterbi(log_e, model.chain)})
    print(f"decoded {post.T} observations, loglik {post.loglik:.6f}")


def cmd_graph(cfg: io.RunConfig):
    if not cfg.params:
        raise io.InputError("--params is required")
    model, names = io.read_params(cfg.params)
    out = _out_dir(cfg)
    io.write_edge_list(out / "edges.csv", model, names)
    io.write_centrality(out / "centrality.csv", model, names)
    io.write_dot(out / "graph.dot", model, names)
    io.write_graphml(out / "graph.graphml", model, names)
    counts = [int(np.count_nonzero(np.triu(p.theta != 0, 1))) for p in model.emissions]
    print("edges per state: " + ", ".join(str(c) for c in counts))


def cmd_montecarlo(cfg: io.RunConfig):
    K = _single_k(cfg)
    fcfg = _fit_config(cfg)
    out = _out_dir(cfg)
    try:
        if cfg.scenario == 1:
            res = run_scenario1(cfg.preset, K, cfg.replicates, cfg.T, cfg.seed, fcfg,
                                workers=cfg.workers)
            rows = res.table()
            io.write_table(out / "scenario1.csv", "parameter", [r[0] for r in rows],
                           ["true", "mean", "sd"], [r[1:] for r in rows])
            summary = f"scenario 1, {cfg.preset}, K={K}: {len(res.estimates)} replicates"
        elif cfg.scenario == 2:
            res = run_scenario2(cfg.preset, K, cfg.replicates, cfg.T, cfg.seed, fcfg,
                                workers=cfg.workers)
            io.write_table(out / "scenario2.csv", "replicate",
                           range(1, res.ari.size + 1), ["ari"], res.ari[:, None])
            summary = f"scenario 2, {cfg.preset}, K={K}: ARI mean {res.mean:.4f} sd {res.sd:.4f}"
        elif cfg.scenario == 3:
            rhos = io.parse_rho_grid(cfg.rho or "log:0.01:0.9:50")
            res = run_scenario3(cfg.preset, K, cfg.replicates, cfg.T, cfg.d, rhos, cfg.seed,
                                fcfg, cfg.weighting_mode, cfg.renormalize_det,
                                workers=cfg.workers)
            io.write_table(out / "scenario3.csv", "rho", [io.fmt(r) for r in rhos],
                           ["fpr", "tpr"], np.column_stack([res.mean_fpr, res.mean_tpr]))
            summary = f"scenario 3, {cfg.preset}, K={K}: AUC {res.auc:.4f}"
        else:
            raise io.InputError("scenario must be 1, 2 or 3")
    except KeyError as exc:
        raise io.InputError(str(exc)) from None
    (out / "summary.txt").write_text(summary + "\n")
    print(summary)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "decode": cmd_decode,
    "graph": cmd_graph,
    "montecarlo": cmd_montecarlo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regimegraph",
        description="Sparse hidden Markov graphical models with GH emissions.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "draw data from a simulation scenario",
        "fit": "fit a model (penalized when --rho is given)",
        "select": "score a (K, rho) grid by BIC and MMDL",
        "decode": "posterior probabilities and decoded state paths",
        "graph": "edge lists, centralities, DOT and GraphML per state",
        "montecarlo": "Monte Carlo summary tables for a scenario",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--data", help="returns CSV (or prices with --data-kind prices)")
        p.add_argument("--data-kind", dest="data_kind", choices=("returns", "prices"))
        p.add_argument("--params", help="parameter file written by fit or select")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--k", help="state count or range, e.g. 2 or 1-3")
        p.add_argument("--rho", help="tuning value or grid, e.g. 0.1 or log:0.01:0.9:50")
        p.add_argument("--preset", help="distribution preset")
        p.add_argument("--scenario", type=int, help="simulation scenario 1, 2 or 3")
        p.add_argument("--T", dest="T", type=int, help="series length for simulations")
        p.add_argument("--replicates", type=int, help="Monte Carlo replicates")
        p.add_argument("--n-starts", dest="n_starts", type=int, help="random starts per fit")
        p.add_argument("--workers", type=int, help="threads for replicates or state counts")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "verbose")}
    try:
        cfg = io.load_config(args.config, overrides)
        COMMANDS[args.command](cfg)
    except io.InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitError, GlassoError, DomainError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
