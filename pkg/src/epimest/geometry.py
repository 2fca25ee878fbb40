"""Simplicial complex partitions of box domains (Kuhn/Freudenthal triangulation)."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateGeometryError, InfeasiblePartitionError, OutOfDomainError

LOCATE_TOL = 1e-10
MAX_SIMPLICES = 2_000_000


@dataclass(frozen=True)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size < 1:
            raise ValueError("box bounds must be 1-d vectors of equal length >= 1")
        if not np.all(lo < hi):
            raise ValueError(f"box requires lower < upper in every coordinate, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def centroid(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


def simplex_volume(coords, reference_volume: float | None = None) -> float:
    """Hyper-volume |det(c1-c0, ..., cd-c0)| / d! of a simplex given as (d+1, d) points."""
    c = np.asarray(coords, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    d = c.shape[1]
    if c.shape[0] != d + 1:
        raise ValueError(f"a {d}-simplex needs {d + 1} vertices, got {c.shape[0]}")
    edges = (c[1:] - c[0]).T
    vol = abs(float(np.linalg.det(edges))) / math.factorial(d)
    ref = 1.0 if reference_volume is None else reference_volume
    if vol < 1e-14 * ref:
        raise DegenerateGeometryError(f"degenerate simplex (volume {vol:.3e})")
    return vol


@dataclass(frozen=True, eq=False)
class Location:
    simplex_index: int
    barycentric: np.ndarray


@dataclass(eq=False)
class SimplicialComplex:
    """Kuhn triangulation of a box.

    Simplex ``k`` lives in grid cell ``k // d!`` (C order) and is the chain
    corner, corner + e_{p0}, corner + e_{p0} + e_{p1}, ... for the ``k % d!``-th
    permutation ``p`` in lexicographic order.
    """

    box: BoxDomain
    cells_per_dim: tuple
    vertices: np.ndarray  # (V, d)
    simplices: np.ndarray  # (N, d+1) vertex ids
    volumes: np.ndarray = field(repr=False)
    adjacency: np.ndarray = field(repr=False)  # (N, d+1); neighbor opposite vertex i, -1 on boundary
    _edge_inv: np.ndarray = field(repr=False)  # (N, d, d) inverse of the edge matrix

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def n_simplices(self) -> int:
        return self.simplices.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_heights(self) -> int:
        return self.simplices.size

    @property
    def cell_widths(self) -> np.ndarray:
        return (self.box.upper - self.box.lower) / np.asarray(self.cells_per_dim, dtype=float)

    @property
    def mesh_size(self) -> float:
        """Largest simplex diameter (the cell diagonal for Kuhn simplices)."""
        return float(np.linalg.norm(self.cell_widths))

    def simplex_coords(self, k=None) -> np.ndarray:
        if k is None:
            return self.vertices[self.simplices]
        return self.vertices[self.simplices[k]]

    @property
    def gradient_maps(self) -> np.ndarray:
        """(N, d, d+1) maps taking per-simplex heights to the piece gradient."""
        d = self.dim
        # g = E^{-T} (h[1:] - h[0])
        inv_t = np.transpose(self._edge_inv, (0, 2, 1))
        out = np.empty((self.n_simplices, d, d + 1))
        out[:, :, 1:] = inv_t
        out[:, :, 0] = -inv_t.sum(axis=2)
        return out

    # -- point location -------------------------------------------------

    def _check_points(self, x) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(x, dtype=float))
        if pts.ndim == 1:
            pts = pts.reshape(1, -1) if pts.size == self.dim else pts.reshape(-1, 1)
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {pts.shape[1]}")
        lo, hi = self.box.lower, self.box.upper
        outside = np.any((pts < lo - LOCATE_TOL) | (pts > hi + LOCATE_TOL), axis=1)
        if np.any(outside):
            raise OutOfDomainError(f"{int(outside.sum())} point(s) outside the box")
        return np.clip(pts, lo, hi)

    def _barycentric(self, pts: np.ndarray, ks: np.ndarray) -> np.ndarray:
        c0 = self.vertices[self.simplices[ks, 0]]
        mu = np.einsum("...ij,...j->...i", self._edge_inv[ks], pts - c0)
        return np.concatenate([1.0 - mu.sum(axis=-1, keepdims=True), mu], axis=-1)

    def candidates(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All simplices containing each point (within tolerance).

        Returns (points, candidate simplex ids (n, m), barycentric (n, m, d+1));
        non-containing candidates carry simplex id -1.
        """
        pts = self._check_points(x)
        d = self.dim
        cells = np.asarray(self.cells_per_dim)
        u = (pts - self.box.lower) / self.cell_widths
        lo_cell = np.clip(np.floor(u - 1e-9).astype(np.int64), 0, cells - 1)
        hi_cell = np.clip(np.floor(u + 1e-9).astype(np.int64), 0, cells - 1)
        nfact = math.factorial(d)
        strides = np.array([int(np.prod(cells[i + 1:])) for i in range(d)], dtype=np.int64)
        near = np.any(lo_cell != hi_cell, axis=1)
        # points away from cell faces only need the d! simplices of their own cell
        width = nfact * 2 ** d if near.any() else nfact
        ks = np.full((pts.shape[0], width), -1, dtype=np.int64)
        ks[:, :nfact] = (lo_cell * strides).sum(axis=1)[:, None] * nfact + np.arange(nfact)
        if near.any():
            cand = []
            for choice in itertools.product((0, 1), repeat=d):
                cell = np.where(np.array(choice, dtype=bool), hi_cell[near], lo_cell[near])
                base = (cell * strides).sum(axis=1) * nfact
                cand.extend(base + p for p in range(nfact))
            ks[near] = np.sort(np.stack(cand, axis=1), axis=1)
        valid = ks >= 0
        bary = np.zeros(ks.shape + (d + 1,))
        bary[valid] = self._barycentric(np.broadcast_to(pts[:, None, :], ks.shape + (d,))[valid], ks[valid])
        inside = valid & np.all(bary >= -LOCATE_TOL, axis=2)
        # drop duplicates produced when lo_cell == hi_cell in some coordinate
        dup = np.zeros_like(inside)
        dup[:, 1:] = ks[:, 1:] == ks[:, :-1]
        inside &= ~dup
        ks = np.where(inside, ks, -1)
        return pts, ks, bary

    def locate_many(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized locate: (simplex ids, barycentric weights) with lowest-index tie-break."""
        pts, ks, bary = self.candidates(x)
        valid = ks >= 0
        if not np.all(valid.any(axis=1)):
            raise OutOfDomainError("point could not be located in any simplex")
        first = np.argmax(valid, axis=1)
        rows = np.arange(pts.shape[0])
        mu = np.clip(bary[rows, first], 0.0, None)
        mu /= mu.sum(axis=1, keepdims=True)
        return ks[rows, first], mu

    def locate(self, x) -> Location:
        ks, mu = self.locate_many(np.asarray(x, dtype=float).reshape(1, -1))
        return Location(int(ks[0]), mu[0])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "lower": self.box.lower.tolist(),
            "upper": self.box.upper.tolist(),
            "cells_per_dim": list(self.cells_per_dim),
            "vertices": self.vertices.tolist(),
            "simplices": self.simplices.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimplicialComplex":
        box = BoxDomain(np.asarray(data["lower"], float), np.asarray(data["upper"], float))
        cx = kuhn_triangulation(box, data["cells_per_dim"])
        if "simplices" in data and not np.array_equal(cx.simplices, np.asarray(data["simplices"])):
            raise ValueError("serialized simplices do not match the Kuhn triangulation of the box")
        return cx

    def same_as(self, other: "SimplicialComplex") -> bool:
        return (
            self is other
            or (
                tuple(self.cells_per_dim) == tuple(other.cells_per_dim)
                and np.array_equal(self.box.lower, other.box.lower)
                and np.array_equal(self.box.upper, other.box.upper)
            )
        )


def kuhn_triangulation(box: BoxDomain, cells_per_dim, max_simplices: int = MAX_SIMPLICES) -> SimplicialComplex:
    d = box.dim
    cells = np.broadcast_to(np.atleast_1d(np.asarray(cells_per_dim, dtype=np.int64)), (d,)).copy()
    if np.any(cells < 1):
        raise ValueError("cells_per_dim entries must be >= 1")
    nfact = math.factorial(d)
    n_simp = nfact * int(np.prod(cells))
    if n_simp > max_simplices:
        raise InfeasiblePartitionError(f"{n_simp} simplices exceeds the cap of {max_simplices}")

    grid_shape = tuple(int(c) + 1 for c in cells)
    idx = np.indices(grid_shape).reshape(d, -1).T  # C order vertex grid indices
    widths = (box.upper - box.lower) / cells
    vertices = box.lower + idx * widths
    vertices[idx == cells] = np.broadcast_to(box.upper, vertices.shape)[idx == cells]
    vstride = np.array([int(np.prod(grid_shape[i + 1:])) for i in range(d)], dtype=np.int64)

    corners = np.indices(tuple(cells)).reshape(d, -1).T
    perms = list(itertools.permutations(range(d)))
    simplices = np.empty((corners.shape[0], nfact, d + 1), dtype=np.int64)
    for p, perm in enumerate(perms):
        cur = corners.copy()
        simplices[:, p, 0] = cur @ vstride
        for step, axis in enumerate(perm):
            cur[:, axis] += 1
            simplices[:, p, step + 1] = cur @ vstride
    simplices = simplices.reshape(-1, d + 1)

    coords = vertices[simplices]
    edges = np.transpose(coords[:, 1:] - coords[:, :1], (0, 2, 1))  # columns are edges
    dets = np.linalg.det(edges)
    volumes = np.abs(dets) / nfact
    if np.any(volumes < 1e-14 * box.volume):
        raise DegenerateGeometryError("degenerate simplex in triangulation")
    edge_inv = np.linalg.inv(edges)

    return SimplicialComplex(
        box=box,
        cells_per_dim=tuple(int(c) for c in cells),
        vertices=vertices,
        simplices=simplices,
        volumes=volumes,
        adjacency=_facet_adjacency(simplices),
        _edge_inv=edge_inv,
    )


def _facet_adjacency(simplices: np.ndarray) -> np.ndarray:
    n, dp1 = simplices.shape
    adj = -np.ones((n, dp1), dtype=np.int64)
    owners: dict[tuple, tuple[int, int]] = {}
    for k in range(n):
        row = simplices[k]
        for i in range(dp1):
            facet = tuple(sorted(np.delete(row, i).tolist()))
            other = owners.pop(facet, None)
            if other is None:
                owners[facet] = (k, i)
            else:
                adj[k, i] = other[0]
                adj[other[0], other[1]] = k
    return adj
