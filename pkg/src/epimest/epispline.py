"""First-order epi-splines stored as per-simplex vertex heights.

Values on shared facets follow the upper semicontinuous convention: the
maximum over every piece whose closed simplex contains the point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import SimplicialComplex

TOL_ARGMAX = 1e-9


def product_moment_matrix(d: int) -> np.ndarray:
    """(d+1)x(d+1) matrix of int_T lambda_i lambda_j / |T| = (1 + delta_ij) / ((d+1)(d+2))."""
    return (np.eye(d + 1) + np.ones((d + 1, d + 1))) / ((d + 1) * (d + 2))


@dataclass(frozen=True, eq=False)
class EpiSpline:
    complex: SimplicialComplex
    heights: np.ndarray

    def __post_init__(self):
        cx = self.complex
        h = np.array(self.heights, dtype=float).reshape(cx.n_simplices, cx.dim + 1)
        if not np.all(np.isfinite(h)):
            raise ValueError("epi-spline heights must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @classmethod
    def constant(cls, complex: SimplicialComplex, value: float) -> "EpiSpline":
        return cls(complex, np.full((complex.n_simplices, complex.dim + 1), float(value)))

    @classmethod
    def from_vertex_values(cls, complex: SimplicialComplex, values) -> "EpiSpline":
        values = np.asarray(values, dtype=float)
        return cls(complex, values[complex.simplices])

    @classmethod
    def interpolate(cls, complex: SimplicialComplex, func) -> "EpiSpline":
        """Continuous interpolant of ``func`` (vectorized over (m, d) points) at the vertices."""
        return cls.from_vertex_values(complex, np.asarray(func(complex.vertices), dtype=float))

    @property
    def dim(self) -> int:
        return self.complex.dim

    @property
    def n_params(self) -> int:
        return self.heights.size

    @property
    def flat(self) -> np.ndarray:
        return self.heights.ravel()

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    def vertex_values(self) -> np.ndarray:
        """usc value at every vertex: the max of the incident tent-pole heights."""
        out = np.full(self.complex.n_vertices, -np.inf)
        np.maximum.at(out, self.complex.simplices.ravel(), self.heights.ravel())
        return out

    def to_dict(self) -> dict:
        return {"complex": self.complex.to_dict(), "heights": self.heights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "EpiSpline":
        return cls(SimplicialComplex.from_dict(data["complex"]), np.asarray(data["heights"], dtype=float))


def evaluate(f: EpiSpline, x) -> np.ndarray | float:
    """usc evaluation; scalar for a single point, array for an (m, d) batch."""
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 0 or (x_arr.ndim == 1 and x_arr.size == f.dim)
    _, ks, bary = f.complex.candidates(x_arr)
    vals = np.einsum("nmi,nmi->nm", bary, f.heights[np.maximum(ks, 0)])
    vals = np.where(ks >= 0, vals, -np.inf).max(axis=1)
    return float(vals[0]) if single else vals


def evaluate_located(f: EpiSpline, ks: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Affine value inside the given simplices (no usc max)."""
    return np.einsum("ni,ni->n", mu, f.heights[ks])


def piece_gradients(f: EpiSpline) -> np.ndarray:
    """(N, d) array of affine-piece gradients."""
    return np.einsum("kji,ki->kj", f.complex.gradient_maps, f.heights)


def piece_gradient(f: EpiSpline, k: int) -> np.ndarray:
    return f.complex.gradient_maps[k] @ f.heights[k]


def integral_weights(cx: SimplicialComplex) -> np.ndarray:
    """Row vector w with integral(f) = w . heights.ravel()."""
    return np.repeat(cx.volumes / (cx.dim + 1), cx.dim + 1)


def integral(f: EpiSpline) -> float:
    cx = f.complex
    return float(np.dot(cx.volumes, f.heights.sum(axis=1)) / (cx.dim + 1))


def first_moment_matrix(cx: SimplicialComplex) -> np.ndarray:
    """(d, N(d+1)) matrix mapping heights to int x f(x) dx."""
    d = cx.dim
    pm = product_moment_matrix(d)
    coords = cx.simplex_coords()  # (N, d+1, d)
    # coefficient of h_k^j in coordinate r: alpha_k sum_i c_k^i[r] pm[i, j]
    block = np.einsum("k,kir,ij->rkj", cx.volumes, coords, pm)
    return block.reshape(d, -1)


def first_moment(f: EpiSpline) -> np.ndarray:
    return first_moment_matrix(f.complex) @ f.flat


def gram_matrix(cx: SimplicialComplex) -> sp.csr_matrix:
    """Sparse PSD form Q with int f g = h_f^T Q h_g on per-simplex heights."""
    pm = product_moment_matrix(cx.dim)
    blocks = cx.volumes[:, None, None] * pm[None]
    return sp.block_diag(list(blocks), format="csr")


def quadratic_form(f: EpiSpline, g: EpiSpline) -> float:
    if not f.complex.same_as(g.complex):
        raise ValueError("quadratic_form requires both splines on the same complex")
    pm = product_moment_matrix(f.dim)
    return float(np.einsum("k,ki,ij,kj->", f.complex.volumes, f.heights, pm, g.heights))


def sup_and_argmax(f: EpiSpline, tol_argmax: float = TOL_ARGMAX) -> tuple[float, np.ndarray]:
    vv = f.vertex_values()
    top = float(vv.max())
    return top, f.complex.vertices[vv >= top - tol_argmax]


def superlevel_points(f: EpiSpline, alpha: float) -> np.ndarray:
    return f.complex.vertices[f.vertex_values() >= alpha]


def prolongate(f: EpiSpline, finer: SimplicialComplex) -> EpiSpline:
    """Transfer onto ``finer`` by usc evaluation at each new tent-pole location."""
    if not (np.array_equal(finer.box.lower, f.complex.box.lower) and np.array_equal(finer.box.upper, f.complex.box.upper)):
        raise ValueError("prolongation requires the same box")
    values = evaluate(f, finer.vertices)
    return EpiSpline.from_vertex_values(finer, values)


@dataclass(frozen=True, eq=False)
class GridEvaluation:
    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.points) != len(self.values):
            raise ValueError("points and values must have equal length")

    def to_csv(self, path) -> None:
        d = self.points.shape[1]
        header = ",".join([f"x{i + 1}" for i in range(d)] + ["value"])
        np.savetxt(path, np.column_stack([self.points, self.values]), delimiter=",",
                   header=header, comments="", fmt="%.17g")


def eval_grid(f: EpiSpline, resolution) -> GridEvaluation:
    box = f.complex.box
    res = np.broadcast_to(np.atleast_1d(np.asarray(resolution, dtype=int)), (f.dim,))
    if np.any(res < 2):
        raise ValueError("grid resolution must be >= 2 points per dimension")
    axes = [np.linspace(box.lower[i], box.upper[i], int(res[i])) for i in range(f.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    return GridEvaluation(pts, evaluate(f, pts))
