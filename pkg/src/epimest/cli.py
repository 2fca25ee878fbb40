"""Command-line front end.

Exit codes: 0 success, 1 configuration or input error, 2 infeasible problem,
3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiments, formats
from .epispline import eval_grid
from .estimate import run
from .exceptions import EpimestError, InfeasibleProblemError, SolverError
from .hypodist import dl
from .plugins import plugin_report

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3

logger = logging.getLogger("epimest")


def _cells(v, d):
    return tuple(int(c) for c in np.broadcast_to(np.atleast_1d(v), (d,)))


def cmd_estimate(config, sample, out, seed=None) -> int:
    data = formats.read_json(config)
    if seed is not None and isinstance(data, dict):
        data = {**data, "seed": int(seed)}
    cfg = formats.problem_from_dict(data)
    smp = formats.read_sample_csv(sample, cfg.box, regression=cfg.loss == "ls_regression")
    try:
        res = run(cfg, smp)
    except InfeasibleProblemError as exc:
        logger.error("infeasible at level %s: %s", exc.level, exc)
        formats.write_json(out, {"status": "infeasible", "level": exc.level, "message": str(exc),
                                 "certificate": exc.certificate})
        return EXIT_INFEASIBLE
    # wall times are left out so that identical inputs give identical bytes
    payload = res.to_dict(timing=False)
    payload["sample"] = {"n_used": smp.n, "n_rejected": smp.n_rejected}
    formats.write_json(out, payload)
    return EXIT_OK


def cmd_distance(model_a, model_b, config=None, out=None) -> int:
    f, g = formats.load_model(model_a), formats.load_model(model_b)
    cfg = formats.hypodist_from_dict(formats.read_json(config) if config else None)
    rep = dl(f, g, cfg)
    _emit(out, formats.canonical_json(rep.to_dict()))
    return EXIT_OK


def cmd_report(model, delta=0.0, alpha=None, reference=None, out=None) -> int:
    f = formats.load_model(model)
    ref = formats.read_json(reference) if reference else None
    rep = plugin_report(f, delta=delta, alpha=alpha, reference=ref)
    _emit(out, formats.canonical_json(rep.to_dict()))
    return EXIT_OK


def cmd_eval_grid(model, resolution, out) -> int:
    f = formats.load_model(model)
    res = _cells(resolution, f.dim)
    eval_grid(f, res).to_csv(out)
    return EXIT_OK


def cmd_experiment(config, out, threads=None, seed=None) -> int:
    data = formats.read_json(config)
    formats.validate(data, formats.STUDY_SCHEMA, "study config")
    mix = experiments.MixtureOfUniforms.from_dict(data["mixture"]) if "mixture" in data \
        else experiments.default_mixture()
    specs = [formats.spec_from_dict(c) for c in data["constraints"]] if "constraints" in data \
        else experiments.study_constraints()
    d = mix.box.dim
    sizes = tuple(data.get("sample_sizes", (100, 1000, 10000)))
    if data["kind"] == "scaling":
        parts = [_cells(p, d) for p in data.get("partitions", [10, 20])]
        rows = experiments.scaling_study(parts, sizes, penalty=float(data.get("penalty", 0.0)),
                                         mixture=mix, seed=int(seed or 0), constraints=specs)
        cols = ["N", "n", "lam", "n_vars", "n_aux", "n_reduced_vars", "iterations", "wall_time", "status"]
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(str(experiments._fmt(r[c])) for c in cols) + "\n")
        return EXIT_OK
    seeds = data.get("seeds", 10)
    seeds = tuple(range(seeds)) if isinstance(seeds, int) else tuple(seeds)
    if seed is not None:
        seeds = tuple(int(seed) + s for s in seeds)
    cfg = experiments.StudyConfig(
        mixture=mix,
        sample_sizes=sizes,
        seeds=seeds,
        schedule=tuple(_cells(c, d) for c in data.get("schedule", [10])),
        penalty=float(data.get("penalty", 0.0)),
        constraints=specs,
        kl_samples=int(data.get("kl_samples", 100_000)),
        epsilon=float(data.get("epsilon", 1e-6)),
        hypodist=formats.hypodist_from_dict(data.get("hypodist")),
        threads=int(threads or data.get("threads", 1)),
    )
    experiments.consistency_study(cfg).to_csv(out)
    return EXIT_OK


def _emit(out, text: str) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epimest", description="Constrained M-estimation over epi-splines.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="fit a model from a problem config and a sample CSV")
    e.add_argument("--config", required=True)
    e.add_argument("--sample", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--threads", type=int, help="accepted for interface stability; the fit is sequential")

    d = sub.add_parser("distance", help="aw-distance between two models")
    d.add_argument("model_a")
    d.add_argument("model_b")
    d.add_argument("--config", help="hypo-distance config JSON")
    d.add_argument("--out")

    r = sub.add_parser("report", help="plug-in modes, sup-height and level sets")
    r.add_argument("model")
    r.add_argument("--delta", type=float, default=0.0)
    r.add_argument("--alpha", type=float)
    r.add_argument("--reference", help="JSON list of reference mode points")
    r.add_argument("--out")

    g = sub.add_parser("eval-grid", help="evaluate a model on a regular grid (CSV)")
    g.add_argument("model")
    g.add_argument("--resolution", type=int, nargs="+", default=[101])
    g.add_argument("--out", required=True)

    x = sub.add_parser("experiment", help="run a consistency or scaling study")
    x.add_argument("--config", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--threads", type=int)
    x.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "estimate":
            return cmd_estimate(args.config, args.sample, args.out, args.seed)
        if args.command == "distance":
            return cmd_distance(args.model_a, args.model_b, args.config, args.out)
        if args.command == "report":
            return cmd_report(args.model, args.delta, args.alpha, args.reference, args.out)
        if args.command == "eval-grid":
            res = args.resolution[0] if len(args.resolution) == 1 else args.resolution
            return cmd_eval_grid(args.model, res, args.out)
        return cmd_experiment(args.config, args.out, args.threads, args.seed)
    except InfeasibleProblemError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (formats.ConfigError, EpimestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
