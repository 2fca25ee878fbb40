"""Refinement loop: solve on successively finer partitions with warm starts.

Level nu builds a Kuhn partition, compiles the loss, assembles the constraint
rows and the gradient penalty, prolongates the previous estimate as a warm
start and solves to an eps_nu-argmin. The loop stops at the end of the schedule
or once both the objective change and the aw-distance between consecutive
estimates fall below their tolerances.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    ArgmaxCovers,
    Concavity,
    IntegralBand,
    IntegralEquals,
    assemble,
    assemble_penalty,
    check_feasibility,
    spec_to_dict,
)
from .epispline import EpiSpline, prolongate
from .exceptions import InfeasibleProblemError
from .geometry import BoxDomain, kuhn_triangulation
from .hypodist import HypoDistanceConfig, dl
from .losses import LOSS_KINDS, Sample, compile_loss, value_grad_hess
from .solver import SolverConfig, solve

logger = logging.getLogger(__name__)

BAND_DELTA = 1e-6


@dataclass
class EstimationConfig:
    box: BoxDomain
    loss: str = "ml_density"
    penalty: float = 0.0
    constraints: list = field(default_factory=list)
    schedule: list = field(default_factory=lambda: [(10, 10)])
    epsilon: float = 1e-6
    epsilon_schedule: list | None = None
    stop_objective_tol: float = 1e-4
    stop_dl_tol: float = 1e-3
    hypodist: HypoDistanceConfig = field(default_factory=HypoDistanceConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        if not self.penalty >= 0:
            raise ValueError("penalty lambda must be >= 0")
        if not self.schedule:
            raise ValueError("schedule must hold at least one level")
        d = self.box.dim
        sched = [tuple(int(c) for c in np.broadcast_to(np.atleast_1d(lvl), (d,))) for lvl in self.schedule]
        for a, b in zip(sched, sched[1:]):
            if not all(y >= x for x, y in zip(a, b)) or a == b:
                raise ValueError("schedule must be strictly refining")
        self.schedule = sched
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.epsilon_schedule is not None:
            eps = [float(e) for e in self.epsilon_schedule]
            if len(eps) != len(sched):
                raise ValueError("epsilon_schedule needs one entry per level")
            if any(b > a for a, b in zip(eps, eps[1:])):
                raise ValueError("epsilon_schedule must be nonincreasing")
            if any(e < 0 for e in eps):
                raise ValueError("epsilon_schedule entries must be >= 0")
            self.epsilon_schedule = eps

    def level_epsilon(self, nu: int) -> float:
        """eps_nu for level nu (1-based): eps (1 + 2^(1 - nu)) unless given explicitly."""
        if self.epsilon_schedule is not None:
            return self.epsilon_schedule[nu - 1]
        return self.epsilon * (1.0 + 2.0 ** (1 - nu))


@dataclass
class LevelReport:
    level: int
    cells_per_dim: tuple
    n_simplices: int
    epsilon: float
    objective: float
    loss_value: float
    penalty_value: float
    warm_objective: float | None
    dl_to_previous: float | None
    solve: object
    feasibility: list

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "level": self.level,
            "cells_per_dim": list(self.cells_per_dim),
            "n_simplices": self.n_simplices,
            "epsilon": self.epsilon,
            "objective": self.objective,
            "loss_value": self.loss_value,
            "penalty_value": self.penalty_value,
            "warm_objective": self.warm_objective,
            "dl_to_previous": self.dl_to_previous,
            "solve": self.solve.to_dict(timing=timing),
            "feasibility": [{"constraint": n, "ok": bool(ok), "violation": v} for n, ok, v in self.feasibility],
        }


@dataclass
class EstimateResult:
    model: EpiSpline
    levels: list
    termination: str
    constraints: list

    @property
    def objective(self) -> float:
        return self.levels[-1].objective

    @property
    def feasible(self) -> bool:
        return all(ok for lvl in self.levels for _, ok, _ in lvl.feasibility)

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "model": self.model.to_dict(),
            "levels": [lvl.to_dict(timing=timing) for lvl in self.levels],
            "termination": self.termination,
            "constraints": [spec_to_dict(s) for s in self.constraints],
        }


def effective_constraints(specs) -> list:
    """Swap IntegralEquals for a thin IntegralBand when the set has no Slater point otherwise."""
    specs = list(specs)
    if any(isinstance(s, (ArgmaxCovers, Concavity)) for s in specs):
        return [IntegralBand(s.target, BAND_DELTA) if isinstance(s, IntegralEquals) else s for s in specs]
    return specs


def objective_value(loss, penalty, f: EpiSpline) -> tuple[float, float]:
    """(loss value, penalty value) of f at its own level."""
    lv = value_grad_hess(loss, f.flat, order=0)[0]
    pv = penalty.value(f) if penalty is not None and penalty.n_aux else 0.0
    return float(lv), float(pv)


def run(cfg: EstimationConfig, sample: Sample) -> EstimateResult:
    specs = effective_constraints(cfg.constraints)
    levels: list[LevelReport] = []
    prev: EpiSpline | None = None
    termination = "schedule_exhausted"

    for nu, cells in enumerate(cfg.schedule, start=1):
        cx = kuhn_triangulation(cfg.box, cells)
        loss = compile_loss(cfg.loss, sample, cx)
        form = assemble(specs, cx)
        penalty = assemble_penalty(cfg.penalty, cx)
        eps = cfg.level_epsilon(nu)
        scfg = SolverConfig(**{**cfg.solver.__dict__, "epsilon_argmin": eps})

        warm = warm_obj = None
        if prev is not None:
            fw = prolongate(prev, cx)
            lv, pv = objective_value(loss, penalty, fw)
            warm_obj = lv + pv
            warm = fw.flat
        try:
            x, rep = solve(loss, penalty, form, warm=warm, cfg=scfg)
        except InfeasibleProblemError as exc:
            exc.level = nu
            raise
        f = EpiSpline(cx, x[: cx.n_heights])
        lv, pv = objective_value(loss, penalty, f)
        feas = check_feasibility(f, specs, seed=cfg.seed)
        dist = dl(prev, f, cfg.hypodist).dl_value if prev is not None else None
        levels.append(LevelReport(nu, tuple(cells), cx.n_simplices, eps, rep.objective, lv, pv,
                                  warm_obj, dist, rep, feas))
        logger.info("level %d cells=%s objective=%.10g dl_prev=%s status=%s",
                    nu, cells, rep.objective, dist, rep.status)

        if prev is not None:
            drop = abs(levels[-2].objective - rep.objective)
            if drop <= cfg.stop_objective_tol and dist <= cfg.stop_dl_tol:
                prev = f
                termination = "stagnation"
                break
        prev = f

    return EstimateResult(prev, levels, termination, specs)
