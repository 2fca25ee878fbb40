"""Mixture-of-uniforms studies: sampling, KL divergence, consistency and scaling."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constraints import ArgmaxCovers, IntegralEquals, LipschitzBound, PointwiseBounds, assemble, assemble_penalty
from .epispline import EpiSpline, evaluate
from .estimate import EstimationConfig, effective_constraints, run
from .geometry import BoxDomain, SimplicialComplex, kuhn_triangulation
from .hypodist import HypoDistanceConfig, dl
from .losses import Sample, compile_loss
from .solver import SolverConfig, solve

MODE_X = (0.4702, 0.4657)
MODE_Y = (0.7746, 0.7773)
HIGH, LOW = 3.0, 0.6150


@dataclass(frozen=True)
class Rectangle:
    lower: tuple
    upper: tuple

    @property
    def area(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.all((x >= np.asarray(self.lower)) & (x <= np.asarray(self.upper)), axis=1)


@dataclass(frozen=True)
class MixtureOfUniforms:
    """Mixture of uniform densities on rectangles inside a box."""

    box: BoxDomain
    components: tuple  # ((Rectangle, weight), ...)

    def __post_init__(self):
        w = np.array([wt for _, wt in self.components], dtype=float)
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        for rect, _ in self.components:
            if np.any(np.asarray(rect.lower) < self.box.lower) or np.any(np.asarray(rect.upper) > self.box.upper):
                raise ValueError("mixture rectangles must lie inside the box")
            if rect.area <= 0:
                raise ValueError("mixture rectangles need positive area")

    @property
    def weights(self) -> np.ndarray:
        return np.array([wt for _, wt in self.components])

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for rect, wt in self.components:
            out += wt / rect.area * rect.contains(x)
        return out

    def sample(self, n: int, seed) -> np.ndarray:
        if n < 1:
            raise ValueError("sample size must be >= 1")
        rng = np.random.default_rng(seed)
        comp = rng.choice(len(self.components), size=n, p=self.weights)
        u = rng.random((n, self.box.dim))
        lo = np.array([r.lower for r, _ in self.components], dtype=float)[comp]
        hi = np.array([r.upper for r, _ in self.components], dtype=float)[comp]
        return lo + u * (hi - lo)

    def atoms(self) -> list[tuple[float, float]]:
        """(mass, density value) of each region where the density is constant.

        Supported layout: background components covering the whole box plus
        pairwise disjoint inner rectangles.
        """
        full = [(r, w) for r, w in self.components
                if np.allclose(r.lower, self.box.lower) and np.allclose(r.upper, self.box.upper)]
        inner = [(r, w) for r, w in self.components if all(r is not fr for fr, _ in full)]
        base = sum(w for _, w in full) / self.box.volume
        for i, (a, _) in enumerate(inner):
            for b, _ in inner[i + 1:]:
                if np.all(np.minimum(a.upper, b.upper) > np.maximum(a.lower, b.lower)):
                    raise ValueError("atoms() needs disjoint inner rectangles")
        out, covered = [], 0.0
        for r, w in inner:
            v = base + w / r.area
            out.append((v * r.area, v))
            covered += r.area
        rest = self.box.volume - covered
        if rest > 0:
            out.append((base * rest, base))
        return out

    def kl_to_constant(self, c: float) -> float:
        """Closed-form KL(f0 || c)."""
        return float(sum(m * math.log(v / c) for m, v in self.atoms() if m > 0))

    def to_dict(self) -> dict:
        return {
            "lower": self.box.lower.tolist(),
            "upper": self.box.upper.tolist(),
            "components": [{"lower": list(r.lower), "upper": list(r.upper), "weight": w}
                           for r, w in self.components],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MixtureOfUniforms":
        box = BoxDomain(data["lower"], data["upper"])
        comps = tuple((Rectangle(tuple(c["lower"]), tuple(c["upper"])), float(c["weight"]))
                      for c in data["components"])
        return cls(box, comps)


def default_mixture(high: float = HIGH, low: float = LOW, centers=(MODE_X, MODE_Y)) -> MixtureOfUniforms:
    """Two equal squares centered at the constrained modes on a uniform background of weight ``low``.

    Square area a solves low + ((1 - low) / k) / a = high for k squares, so the
    density is ``high`` on the squares and ``low`` elsewhere.
    """
    box = BoxDomain([0.0, 0.0], [1.0, 1.0])
    k = len(centers)
    w = (1.0 - low) / k
    side = math.sqrt(w / (high - low))
    comps = [(Rectangle((0.0, 0.0), (1.0, 1.0)), low)]
    for c in centers:
        comps.append((Rectangle(tuple(ci - side / 2 for ci in c), tuple(ci + side / 2 for ci in c)), w))
    return MixtureOfUniforms(box, tuple(comps))


def sample_mixture(mix: MixtureOfUniforms, n: int, seed) -> Sample:
    return Sample(mix.sample(n, seed))


def kl_monte_carlo(f0: MixtureOfUniforms, f: EpiSpline, m: int, seed) -> tuple[float, float]:
    """(mean, standard error) of log(f0(Z) / f(Z)) over m draws Z ~ f0; +inf if f <= 0 at a draw."""
    z = f0.sample(m, seed)
    fz = np.atleast_1d(evaluate(f, z))
    if np.any(fz <= 0):
        return float("inf"), float("inf")
    terms = np.log(f0(z)) - np.log(fz)
    se = float(terms.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return float(terms.mean()), se


def truth_projection(mix: MixtureOfUniforms, cx: SimplicialComplex, order: int = 24) -> EpiSpline:
    """Per-simplex constant spline holding the mean of f0 over each simplex.

    Means use the barycentric lattice of the given order (interior points),
    which is exact for simplices inside one constant region.
    """
    d = cx.dim
    lat = np.array([c for c in np.ndindex(*(order,) * (d + 1)) if sum(c) == order - 1], dtype=float)
    bary = (lat + 1.0 / (d + 1)) / (order - 1 + 1.0)
    coords = cx.simplex_coords()
    pts = np.einsum("qi,kid->kqd", bary, coords).reshape(-1, d)
    means = mix(pts).reshape(cx.n_simplices, -1).mean(axis=1)
    return EpiSpline(cx, np.repeat(means[:, None], d + 1, axis=1))


# -- studies ------------------------------------------------------------------------------


def study_constraints(kappa: float = 100.0, lower: float = 1e-4, upper: float = 1e4) -> list:
    return [PointwiseBounds(lower, upper), IntegralEquals(1.0), ArgmaxCovers([MODE_X, MODE_Y]),
            LipschitzBound(kappa)]


@dataclass
class StudyConfig:
    mixture: MixtureOfUniforms = field(default_factory=default_mixture)
    sample_sizes: tuple = (100, 1000, 10000)
    seeds: tuple = tuple(range(10))
    schedule: tuple = ((10, 10),)
    penalty: float = 0.0
    constraints: list = field(default_factory=study_constraints)
    kl_samples: int = 100_000
    epsilon: float = 1e-6
    hypodist: HypoDistanceConfig = field(default_factory=HypoDistanceConfig)
    threads: int = 1


@dataclass
class StudyResult:
    rows: list

    COLUMNS = ("n", "seed", "N", "lam", "kl", "kl_se", "dl", "wall_time", "feasible", "n_vars")

    def to_csv(self, path, timing: bool = True) -> None:
        cols = [c for c in self.COLUMNS if timing or c != "wall_time"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.rows:
                w.writerow([_fmt(row[c]) for c in cols])

    def medians(self, key: str) -> dict:
        out = {}
        for n in sorted({r["n"] for r in self.rows}):
            out[n] = float(np.median([r[key] for r in self.rows if r["n"] == n]))
        return out


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def _study_cell(args):
    cfg, n, seed = args
    mix = cfg.mixture
    sample = sample_mixture(mix, n, seed)
    ecfg = EstimationConfig(box=mix.box, loss="ml_density", penalty=cfg.penalty,
                            constraints=list(cfg.constraints), schedule=list(cfg.schedule),
                            epsilon=cfg.epsilon, hypodist=cfg.hypodist, seed=seed)
    t0 = time.perf_counter()
    res = run(ecfg, sample)
    wall = time.perf_counter() - t0
    f = res.model
    kl, se = kl_monte_carlo(mix, f, cfg.kl_samples, seed=10_000 + seed)
    dist = dl(truth_projection(mix, f.complex), f, cfg.hypodist).dl_value
    return {"n": n, "seed": seed, "N": f.complex.n_simplices, "lam": cfg.penalty, "kl": kl, "kl_se": se,
            "dl": dist, "wall_time": wall, "feasible": res.feasible,
            "n_vars": res.levels[-1].solve.n_vars}


def consistency_study(cfg: StudyConfig) -> StudyResult:
    cells = [(cfg, n, s) for n in cfg.sample_sizes for s in cfg.seeds]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            rows = list(ex.map(_study_cell, cells))
    else:
        rows = [_study_cell(c) for c in cells]
    rows.sort(key=lambda r: (r["n"], r["seed"]))
    return StudyResult(rows)


def scaling_study(partitions=((10, 10), (20, 20)), sample_sizes=(100, 1000, 10000), penalty: float = 0.0,
                  mixture: MixtureOfUniforms | None = None, seed: int = 0, constraints=None) -> list[dict]:
    """Single solves per (partition, n): problem sizes and wall times."""
    mix = mixture or default_mixture()
    specs = effective_constraints(constraints or study_constraints())
    rows = []
    for cells in partitions:
        cx = kuhn_triangulation(mix.box, cells)
        form = assemble(specs, cx)
        pen = assemble_penalty(penalty, cx)
        for n in sample_sizes:
            sample = sample_mixture(mix, n, seed)
            t0 = time.perf_counter()
            loss = compile_loss("ml_density", sample, cx)
            _, rep = solve(loss, pen, form, cfg=SolverConfig(epsilon_argmin=1e-6))
            wall = time.perf_counter() - t0
            rows.append({"N": cx.n_simplices, "n": n, "lam": penalty, "n_vars": rep.n_vars,
                         "n_aux": rep.n_vars - cx.n_heights, "n_reduced_vars": rep.n_reduced_vars,
                         "iterations": rep.iterations, "wall_time": wall, "status": rep.status})
    return rows
