"""Attouch-Wets (aw) distance between piecewise-affine usc functions.

dl(f, g) = int_0^inf dl_rho(f, g) exp(-rho) d rho with
dl_rho(f, g) = max over ||p - center|| <= rho of |dist(p, hypo f) - dist(p, hypo g)|.

The maximum over each ball is taken over one fixed, nested sample set: every
sample carries a radius r and contributes to all balls with rho >= r, so the
sampled dl_rho is exactly nondecreasing and the metric axioms hold exactly for
the discretized distance.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm as normal_dist
from scipy.stats import qmc

from .epispline import EpiSpline, evaluate
from .exceptions import UnsupportedDimensionError

NORMS = ("euclidean", "max")
MAX_DIM = 3
_CHUNK = 256  # sample points per vectorized block
_ROUND = 4  # simplices per point per pruning round


@dataclass(frozen=True)
class HypoDistanceConfig:
    center: tuple | None = None  # (d+1)-vector; None means (box centroid, 0)
    norm: str = "euclidean"
    rho_max: float = 8.0
    rho_nodes: int = 64
    ball_samples: int = 4096
    seed: int = 0

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        if not self.rho_max > 0:
            raise ValueError("rho_max must be > 0")
        if self.rho_nodes < 8:
            raise ValueError("rho_nodes must be >= 8")
        if self.ball_samples < 64:
            raise ValueError("ball_samples must be >= 64")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def resolve_center(self, f: EpiSpline) -> np.ndarray:
        if self.center is None:
            return np.append(f.complex.box.centroid, 0.0)
        c = np.asarray(self.center, dtype=float)
        if c.size != f.dim + 1:
            raise ValueError(f"center must have {f.dim + 1} entries")
        return c

    def to_dict(self) -> dict:
        return {
            "center": None if self.center is None else list(self.center),
            "norm": self.norm,
            "rho_max": self.rho_max,
            "rho_nodes": self.rho_nodes,
            "ball_samples": self.ball_samples,
            "seed": self.seed,
        }


@dataclass
class DistanceReport:
    dl_value: float
    dl_rho_curve: list  # [(rho, dl_rho)]
    truncation_bound: float
    sampling_resolution: float
    n_samples: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dl_value": self.dl_value,
            "dl_rho_curve": [[float(r), float(v)] for r, v in self.dl_rho_curve],
            "truncation_bound": self.truncation_bound,
            "sampling_resolution": self.sampling_resolution,
            "n_samples": self.n_samples,
            "config": self.config,
        }


# -- projections -------------------------------------------------------------------


@lru_cache(maxsize=None)
def _faces(m: int) -> tuple:
    return tuple(s for k in range(1, m + 1) for s in itertools.combinations(range(m), k))


def _simplex_distance(P: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean distance from points P (n, m) to simplices V (n, s, m) and the projections.

    Exact by enumeration of faces: the projection onto the simplex is the
    projection onto the affine hull of the face whose relative interior holds it.
    """
    n, s, _ = V.shape
    best = np.full(n, np.inf)
    proj = np.empty_like(P)
    for face in _faces(s):
        v0 = V[:, face[0]]
        diff = P - v0
        if len(face) == 1:
            q, ok = v0, np.ones(n, dtype=bool)
        else:
            E = V[:, face[1:]] - v0[:, None, :]  # (n, k, m)
            gram = np.einsum("nkm,nlm->nkl", E, E)
            rhs = np.einsum("nkm,nm->nk", E, diff)
            c = np.linalg.solve(gram, rhs[..., None])[..., 0]
            ok = np.all(c >= -1e-12, axis=1) & (c.sum(axis=1) <= 1 + 1e-12)
            q = v0 + np.einsum("nk,nkm->nm", c, E)
        dist = np.linalg.norm(P - q, axis=1)
        better = ok & (dist < best)
        best[better] = dist[better]
        proj[better] = q[better]
    return best, proj


def _euclid_pairs(P: np.ndarray, coords: np.ndarray, heights: np.ndarray) -> np.ndarray:
    """Distance from p (n, d+1) to the hypograph piece over simplex (coords (n, d+1, d), heights (n, d+1))."""
    py, pb = P[:, :-1], P[:, -1]
    dy, proj = _simplex_distance(py, coords)
    # affine value at the projection of p_y onto the simplex
    E = np.transpose(coords[:, 1:] - coords[:, :1], (0, 2, 1))
    mu = np.linalg.solve(E, (proj - coords[:, 0])[..., None])[..., 0]
    a = heights[:, 0] + np.einsum("nk,nk->n", mu, heights[:, 1:] - heights[:, :1])
    vertical_ok = pb <= a
    out = np.empty(P.shape[0])
    out[vertical_ok] = dy[vertical_ok]
    rest = ~vertical_ok
    if np.any(rest):
        lifted = np.concatenate([coords[rest], heights[rest][..., None]], axis=2)
        out[rest] = _simplex_distance(P[rest], lifted)[0]
    return out


@lru_cache(maxsize=None)
def _max_norm_bases(d: int) -> np.ndarray:
    n_ineq = 3 * d + 2
    return np.array(list(itertools.combinations(range(n_ineq), d + 1)), dtype=np.int64)


def _max_pairs(P: np.ndarray, coords: np.ndarray, heights: np.ndarray) -> np.ndarray:
    """max-norm distance to a hypograph piece: min r over (mu, r) by basic-solution enumeration.

    Rows: -mu_i <= 0; (C mu - p_y)_j - r <= 0; -(C mu - p_y)_j - r <= 0; p_b - h.mu - r <= 0,
    plus sum(mu) = 1.
    """
    n, s, d = coords.shape
    C = np.transpose(coords, (0, 2, 1))  # (n, d, d+1)
    nv = s + 1
    rows = np.zeros((n, 3 * d + 2, nv))
    rhs = np.zeros((n, 3 * d + 2))
    rows[:, :s, :s] = -np.eye(s)
    rows[:, s:s + d, :s] = C
    rows[:, s:s + d, s] = -1.0
    rhs[:, s:s + d] = P[:, :d]
    rows[:, s + d:s + 2 * d, :s] = -C
    rows[:, s + d:s + 2 * d, s] = -1.0
    rhs[:, s + d:s + 2 * d] = -P[:, :d]
    rows[:, -1, :s] = -heights
    rows[:, -1, s] = -1.0
    rhs[:, -1] = -P[:, -1]
    eq = np.zeros(nv)
    eq[:s] = 1.0

    bases = _max_norm_bases(d)
    M = np.empty((n, bases.shape[0], nv, nv))
    M[:, :, :-1, :] = rows[:, bases]
    M[:, :, -1, :] = eq
    b = np.empty((n, bases.shape[0], nv))
    b[:, :, :-1] = rhs[:, bases]
    b[:, :, -1] = 1.0
    det = np.linalg.det(M)
    good = np.abs(det) > 1e-12
    M[~good] = np.eye(nv)
    sol = np.linalg.solve(M, b[..., None])[..., 0]
    viol = np.einsum("nij,nbj->nbi", rows, sol) - rhs[:, None, :]
    feas = good & np.all(viol <= 1e-10, axis=2)
    r = np.where(feas, sol[..., -1], np.inf)
    return r.min(axis=1)


def _hypo_distances(points: np.ndarray, f: EpiSpline, norm: str) -> np.ndarray:
    """Distance from each (d+1)-point to hypo f, pruning simplices by a lower bound."""
    cx = f.complex
    d = cx.dim
    if d > MAX_DIM:
        raise UnsupportedDimensionError(f"hypo-distance supports d <= {MAX_DIM}, got {d}")
    coords = cx.simplex_coords()
    heights = f.heights
    lo_box, hi_box = coords.min(axis=1), coords.max(axis=1)
    top = heights.max(axis=1)
    out = np.empty(points.shape[0])
    pair_fn = _euclid_pairs if norm == "euclidean" else _max_pairs

    for start in range(0, points.shape[0], _CHUNK):
        P = points[start:start + _CHUNK]
        py, pb = P[:, :-1], P[:, -1]
        # upper bound from the nearest box point, either straight below/above it
        y0 = np.clip(py, cx.box.lower, cx.box.upper)
        f0 = np.atleast_1d(evaluate(f, y0))
        gap_y = py - y0
        rise = np.maximum(pb - f0, 0.0)
        if norm == "euclidean":
            ub = np.sqrt(np.sum(gap_y ** 2, axis=1) + rise ** 2)
        else:
            ub = np.maximum(np.max(np.abs(gap_y), axis=1, initial=0.0), rise)
        # lower bound per simplex from its bounding box and highest tent pole
        dy = np.maximum(np.maximum(lo_box[None] - py[:, None], py[:, None] - hi_box[None]), 0.0)
        db = np.maximum(pb[:, None] - top[None], 0.0)
        if norm == "euclidean":
            lb = np.sqrt(np.sum(dy ** 2, axis=2) + db ** 2)
        else:
            lb = np.maximum(dy.max(axis=2), db)
        # visit simplices in order of their lower bound, shrinking the incumbent
        order = np.argsort(lb, axis=1, kind="stable")
        lb_sorted = np.take_along_axis(lb, order, axis=1)
        best = ub.copy()
        for j in range(0, order.shape[1], _ROUND):
            live = lb_sorted[:, j:j + _ROUND] < best[:, None]
            if not live.any():
                break
            ii, jj = np.nonzero(live)
            kk = order[ii, j + jj]
            dist = pair_fn(P[ii], coords[kk], heights[kk])
            np.minimum.at(best, ii, dist)
        out[start:start + P.shape[0]] = best
    return np.maximum(out, 0.0)


def dist_point_to_hypo(p, f: EpiSpline, norm: str = "euclidean") -> float | np.ndarray:
    """Distance from a (d+1)-point (or an (m, d+1) batch) to the hypograph of f."""
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != f.dim + 1:
        raise ValueError(f"points must have {f.dim + 1} coordinates")
    out = _hypo_distances(pts, f, norm)
    return float(out[0]) if single else out


# -- sampling --------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _unit_samples(dim: int, n: int, seed: int, norm: str) -> tuple[np.ndarray, np.ndarray]:
    """Nested ball samples: (offsets (n+1, dim) in the unit ball, radii (n+1,)), center first.

    Radii are uniform in [0, 1] so that small balls, which carry the largest
    exp(-rho) weight, hold a proportional share of the samples.
    """
    u = qmc.Halton(d=dim + 1, scramble=True, seed=seed).random(n)
    gauss = normal_dist.ppf(np.clip(u[:, :dim], 1e-12, 1 - 1e-12))
    length = np.linalg.norm(gauss, axis=1) if norm == "euclidean" else np.max(np.abs(gauss), axis=1)
    radii = u[:, dim]
    offsets = gauss / length[:, None] * radii[:, None]
    return np.vstack([np.zeros(dim), offsets]), np.concatenate([[0.0], radii])


def _samples(cfg: HypoDistanceConfig, center: np.ndarray, radius: float):
    off, r = _unit_samples(center.size, cfg.ball_samples, cfg.seed, cfg.norm)
    return center + radius * off, radius * r


def _rho_grid(cfg: HypoDistanceConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.rho_max, cfg.rho_nodes)


def _curve(delta: np.ndarray, radii: np.ndarray, rhos: np.ndarray) -> np.ndarray:
    order = np.argsort(radii, kind="stable")
    cummax = np.maximum.accumulate(delta[order])
    idx = np.searchsorted(radii[order], rhos, side="right") - 1
    return np.where(idx >= 0, cummax[np.maximum(idx, 0)], 0.0)


def _check_pair(f: EpiSpline, g: EpiSpline):
    if not (np.array_equal(f.complex.box.lower, g.complex.box.lower)
            and np.array_equal(f.complex.box.upper, g.complex.box.upper)):
        raise ValueError("both functions must live on the same box")


def dl_rho(f: EpiSpline, g: EpiSpline, rho: float, cfg: HypoDistanceConfig | None = None) -> float:
    """Sampled rho-distance over the nested sample set of radius max(rho, rho_max)."""
    cfg = cfg or HypoDistanceConfig()
    if rho < 0:
        raise ValueError("rho must be >= 0")
    _check_pair(f, g)
    center = cfg.resolve_center(f)
    pts, radii = _samples(cfg, center, max(rho, cfg.rho_max))
    inside = radii <= rho
    pts = pts[inside]
    delta = np.abs(_hypo_distances(pts, f, cfg.norm) - _hypo_distances(pts, g, cfg.norm))
    return float(delta.max(initial=0.0))


@lru_cache(maxsize=32)
def _fill_curve(dim: int, n: int, seed: int, norm: str, rho_max: float, nodes: int) -> np.ndarray:
    """Estimated covering radius of the samples inside each rho-ball (probe-based)."""
    off, r = _unit_samples(dim, n, seed, norm)
    pts, radii = off * rho_max, r * rho_max
    probes_u, _ = _unit_samples(dim, 1024, seed + 7919, norm)
    rhos = np.linspace(0.0, rho_max, nodes)
    p_norm = 2 if norm == "euclidean" else np.inf
    out = np.zeros(nodes)
    for i, rho in enumerate(rhos):
        if rho == 0:
            continue
        sub = pts[radii <= rho]
        dist, _ = cKDTree(sub).query(probes_u * rho, p=p_norm)
        out[i] = float(dist.max())
    return out


def sampling_resolution(cfg: HypoDistanceConfig, dim: int) -> float:
    """Upper estimate of the under-approximation of dl by sampling.

    |dist(., hypo f) - dist(., hypo g)| is 2-Lipschitz, so a sample set with
    covering radius h misses the ball maximum by at most 2 h.
    """
    fill = _fill_curve(dim + 1, cfg.ball_samples, cfg.seed, cfg.norm, cfg.rho_max, cfg.rho_nodes)
    rhos = _rho_grid(cfg)
    return float(np.trapezoid(2.0 * fill * np.exp(-rhos), rhos))


def dl(f: EpiSpline, g: EpiSpline, cfg: HypoDistanceConfig | None = None) -> DistanceReport:
    cfg = cfg or HypoDistanceConfig()
    _check_pair(f, g)
    center = cfg.resolve_center(f)
    pts, radii = _samples(cfg, center, cfg.rho_max)
    df = _hypo_distances(pts, f, cfg.norm)
    dg = _hypo_distances(pts, g, cfg.norm)
    rhos = _rho_grid(cfg)
    curve = _curve(np.abs(df - dg), radii, rhos)
    value = float(np.trapezoid(curve * np.exp(-rhos), rhos))
    c0 = max(df[0], dg[0])  # sample 0 is the center
    tail = float((c0 + cfg.rho_max + 1.0) * np.exp(-cfg.rho_max))
    return DistanceReport(
        dl_value=value,
        dl_rho_curve=list(zip(rhos.tolist(), curve.tolist())),
        truncation_bound=tail,
        sampling_resolution=sampling_resolution(cfg, f.dim),
        n_samples=int(pts.shape[0]),
        config=cfg.to_dict(),
    )
