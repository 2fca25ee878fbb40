"""Declarative shape constraints and their compiled convex standard form."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from .epispline import (
    EpiSpline,
    TOL_ARGMAX,
    evaluate,
    first_moment,
    first_moment_matrix,
    integral,
    integral_weights,
    piece_gradients,
    sup_and_argmax,
)
from .exceptions import InfeasibleSpecError, InvalidConstraintError
from .geometry import LOCATE_TOL, SimplicialComplex

PENALTY_OWNER = -1

# -- constraint specifications -------------------------------------------


@dataclass(frozen=True)
class Nonnegativity:
    pass


@dataclass(frozen=True)
class IntegralEquals:
    target: float = 1.0


@dataclass(frozen=True)
class IntegralBand:
    target: float = 1.0
    delta: float = 1e-6

    def __post_init__(self):
        if not self.delta >= 0:
            raise InvalidConstraintError("IntegralBand.delta must be >= 0")


@dataclass(frozen=True)
class ArgmaxCovers:
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))


@dataclass(frozen=True)
class LevelSetCovers:
    points: tuple
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))


@dataclass(frozen=True)
class PointwiseBounds:
    """Bounds on tent-pole heights; scalars or per-vertex sequences, ``None`` for unbounded."""

    lower: object = None
    upper: object = None

    def __post_init__(self):
        for name in ("lower", "upper"):
            v = getattr(self, name)
            if v is not None and not np.isscalar(v):
                object.__setattr__(self, name, tuple(float(a) for a in v))


@dataclass(frozen=True)
class Continuity:
    pass


@dataclass(frozen=True)
class LipschitzBound:
    kappa: float
    norm: str = "euclidean"

    def __post_init__(self):
        if not self.kappa >= 0:
            raise InvalidConstraintError("LipschitzBound.kappa must be >= 0")
        if self.norm not in ("euclidean", "max", "one"):
            raise InvalidConstraintError(f"unknown norm {self.norm!r}")


@dataclass(frozen=True)
class Monotone:
    direction: tuple

    def __post_init__(self):
        dirs = tuple(int(np.sign(s)) for s in self.direction)
        object.__setattr__(self, "direction", dirs)


@dataclass(frozen=True)
class Concavity:
    pass


@dataclass(frozen=True)
class MomentBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(a) for a in self.lower))
        object.__setattr__(self, "upper", tuple(float(a) for a in self.upper))


SPEC_TYPES = {
    cls.__name__: cls
    for cls in (
        Nonnegativity, IntegralEquals, IntegralBand, ArgmaxCovers, LevelSetCovers,
        PointwiseBounds, Continuity, LipschitzBound, Monotone, Concavity, MomentBox,
    )
}
IMPLIES_CONTINUITY = (LipschitzBound, Monotone, Concavity)


def _as_points(points) -> tuple:
    arr = np.atleast_2d(np.asarray(points, dtype=float))
    return tuple(tuple(float(v) for v in row) for row in arr)


def spec_from_dict(data: dict):
    data = dict(data)
    kind = data.pop("type")
    if kind not in SPEC_TYPES:
        raise InvalidConstraintError(f"unknown constraint type {kind!r}")
    return SPEC_TYPES[kind](**data)


def spec_to_dict(spec) -> dict:
    out = {"type": type(spec).__name__}
    for f in fields(spec):
        v = getattr(spec, f.name)
        if isinstance(v, tuple):
            v = [list(p) if isinstance(p, tuple) else p for p in v]
        out[f.name] = v
    return out


# -- standard form -----------------------------------------------------------


@dataclass(frozen=True)
class SocBlock:
    """||M x||_2 <= bound."""

    M: sp.csr_matrix
    bound: float
    owner: int


@dataclass(eq=False)
class StandardForm:
    """Feasible set {x : A x = b, G x <= u, ||M_i x|| <= bound_i}.

    The first ``n_heights`` variables are tent-pole heights in row-major
    (simplex, vertex) order; the rest are auxiliaries described by ``var_map``.
    """

    n_vars: int
    n_heights: int
    A: sp.csr_matrix
    b: np.ndarray
    eq_owner: np.ndarray
    G: sp.csr_matrix
    u: np.ndarray
    ineq_owner: np.ndarray
    soc: list = field(default_factory=list)
    var_map: list = field(default_factory=list)
    objective: np.ndarray | None = None  # linear objective term (penalty)

    @property
    def n_aux(self) -> int:
        return self.n_vars - self.n_heights

    def linear_objective(self) -> np.ndarray:
        return np.zeros(self.n_vars) if self.objective is None else self.objective

    def rows_for(self, owner: int) -> dict:
        return {
            "eq": np.flatnonzero(self.eq_owner == owner),
            "ineq": np.flatnonzero(self.ineq_owner == owner),
            "soc": [i for i, blk in enumerate(self.soc) if blk.owner == owner],
        }

    def residuals(self, x: np.ndarray) -> dict:
        eq = self.A @ x - self.b if self.A.shape[0] else np.zeros(0)
        ineq = self.G @ x - self.u if self.G.shape[0] else np.zeros(0)
        soc = np.array([np.linalg.norm(blk.M @ x) - blk.bound for blk in self.soc])
        return {
            "eq": float(np.abs(eq).max(initial=0.0)),
            "ineq": float(np.max(ineq, initial=0.0)),
            "soc": float(np.max(soc, initial=0.0)),
        }

    def with_penalty(self, block: "PenaltyBlock") -> "StandardForm":
        if block.n_aux == 0:
            return self
        if self.n_aux:
            raise ValueError("form already carries auxiliary variables")
        n = self.n_vars + block.n_aux
        pad = lambda m: sp.hstack([m, sp.csr_matrix((m.shape[0], block.n_aux))], format="csr")
        soc = [SocBlock(pad(blk.M), blk.bound, blk.owner) for blk in self.soc]
        c = np.concatenate([self.linear_objective(), block.objective])
        return StandardForm(
            n_vars=n,
            n_heights=self.n_heights,
            A=pad(self.A),
            b=self.b,
            eq_owner=self.eq_owner,
            G=sp.vstack([pad(self.G), block.G], format="csr"),
            u=np.concatenate([self.u, np.zeros(block.G.shape[0])]),
            ineq_owner=np.concatenate([self.ineq_owner, np.full(block.G.shape[0], PENALTY_OWNER)]),
            soc=soc,
            var_map=list(self.var_map) + list(block.var_map),
            objective=c,
        )


class _RowBuilder:
    def __init__(self, n_vars: int):
        self.n_vars = n_vars
        self.rows, self.cols, self.vals, self.rhs, self.owner = [], [], [], [], []
        self.count = 0

    def add(self, cols, vals, rhs: float, owner: int):
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        self.rows.append(np.full(cols.size, self.count))
        self.cols.append(cols)
        self.vals.append(vals)
        self.rhs.append(float(rhs))
        self.owner.append(owner)
        self.count += 1

    def add_block(self, cols, vals, rhs, owner: int):
        """Add many rows at once; cols/vals are (m, nnz_per_row)."""
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
        m = cols.shape[0]
        self.rows.append(np.repeat(np.arange(self.count, self.count + m), cols.shape[1]))
        self.cols.append(cols.ravel())
        self.vals.append(vals.ravel())
        self.rhs.extend(np.broadcast_to(np.asarray(rhs, dtype=float), (m,)).tolist())
        self.owner.extend([owner] * m)
        self.count += m

    def matrix(self) -> sp.csr_matrix:
        if not self.count:
            return sp.csr_matrix((0, self.n_vars))
        mat = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.count, self.n_vars),
        ).tocsr()
        mat.sum_duplicates()
        mat.eliminate_zeros()
        return mat

    def vector(self) -> np.ndarray:
        return np.asarray(self.rhs, dtype=float)

    def owners(self) -> np.ndarray:
        return np.asarray(self.owner, dtype=np.int64)


def _hid(cx: SimplicialComplex, k, i):
    return np.asarray(k) * (cx.dim + 1) + np.asarray(i)


def _check_inside(cx: SimplicialComplex, points, what: str) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != cx.dim:
        raise InvalidConstraintError(f"{what} points must be {cx.dim}-dimensional")
    lo, hi = cx.box.lower, cx.box.upper
    if np.any((pts < lo - LOCATE_TOL) | (pts > hi + LOCATE_TOL)):
        raise InvalidConstraintError(f"{what} point outside the box")
    return pts


def _continuity_rows(cx: SimplicialComplex, eq: _RowBuilder, owner: int):
    vid = cx.simplices.ravel()
    order = np.argsort(vid, kind="stable")
    sorted_vid = vid[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_vid)) + 1]
    first = np.repeat(order[starts], np.diff(np.r_[starts, vid.size]))
    keep = first != order
    cols = np.column_stack([first[keep], order[keep]])
    eq.add_block(cols, np.array([1.0, -1.0]), 0.0, owner)


def _per_height(cx: SimplicialComplex, value) -> np.ndarray:
    if np.isscalar(value):
        return np.full(cx.n_heights, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.size != cx.n_vertices:
        raise InvalidConstraintError(f"per-vertex bounds need {cx.n_vertices} values, got {arr.size}")
    return arr[cx.simplices.ravel()]


def _gradient_rows(cx: SimplicialComplex):
    """cols (N, d+1) and coefficient tensor (N, d, d+1) of the gradient maps."""
    k = np.arange(cx.n_simplices)
    cols = _hid(cx, k[:, None], np.arange(cx.dim + 1)[None, :])
    return cols, cx.gradient_maps


def assemble(specs, cx: SimplicialComplex) -> StandardForm:
    d, n = cx.dim, cx.n_heights
    eq, ineq = _RowBuilder(n), _RowBuilder(n)
    soc: list[SocBlock] = []
    all_h = np.arange(n)
    grad_cols, grad_maps = _gradient_rows(cx)

    for owner, spec in enumerate(specs):
        if isinstance(spec, IMPLIES_CONTINUITY):
            _continuity_rows(cx, eq, owner)

        if isinstance(spec, Nonnegativity):
            ineq.add_block(all_h[:, None], -1.0, 0.0, owner)

        elif isinstance(spec, IntegralEquals):
            eq.add(all_h, integral_weights(cx), spec.target, owner)

        elif isinstance(spec, IntegralBand):
            w = integral_weights(cx)
            ineq.add(all_h, w, spec.target + spec.delta, owner)
            ineq.add(all_h, -w, -(spec.target - spec.delta), owner)

        elif isinstance(spec, ArgmaxCovers):
            pts = _check_inside(cx, spec.points, "ArgmaxCovers")
            ks, eta = cx.locate_many(pts)
            for kstar, w in zip(ks, eta):
                star_cols = _hid(cx, kstar, np.arange(d + 1))
                # h_k^i' - sum_i eta^i h_{k*}^i <= 0 for every tent pole
                cols = np.column_stack([all_h, np.broadcast_to(star_cols, (n, d + 1))])
                vals = np.concatenate([[1.0], -w])
                ineq.add_block(cols, vals, 0.0, owner)

        elif isinstance(spec, LevelSetCovers):
            pts = _check_inside(cx, spec.points, "LevelSetCovers")
            ks, mu = cx.locate_many(pts)
            for k, w in zip(ks, mu):
                ineq.add(_hid(cx, k, np.arange(d + 1)), -w, -spec.alpha, owner)

        elif isinstance(spec, PointwiseBounds):
            lo = None if spec.lower is None else _per_height(cx, spec.lower)
            hi = None if spec.upper is None else _per_height(cx, spec.upper)
            if lo is not None and hi is not None and np.any(lo > hi):
                raise InfeasibleSpecError("PointwiseBounds has lower > upper")
            if lo is not None:
                keep = np.isfinite(lo)
                ineq.add_block(all_h[keep, None], -1.0, -lo[keep], owner)
            if hi is not None:
                keep = np.isfinite(hi)
                ineq.add_block(all_h[keep, None], 1.0, hi[keep], owner)

        elif isinstance(spec, Continuity):
            _continuity_rows(cx, eq, owner)

        elif isinstance(spec, LipschitzBound):
            kappa = float(spec.kappa)
            if kappa == 0.0:
                for j in range(d):
                    eq.add_block(grad_cols, grad_maps[:, j, :], 0.0, owner)
            elif spec.norm == "euclidean" and d > 1:
                for k in range(cx.n_simplices):
                    rows = np.repeat(np.arange(d), d + 1)
                    M = sp.csr_matrix((grad_maps[k].ravel(), (rows, np.tile(grad_cols[k], d))), shape=(d, n))
                    soc.append(SocBlock(M, kappa, owner))
            elif spec.norm == "max" or d == 1:
                for j in range(d):
                    ineq.add_block(grad_cols, grad_maps[:, j, :], kappa, owner)
                    ineq.add_block(grad_cols, -grad_maps[:, j, :], kappa, owner)
            else:  # one-norm: every sign pattern
                for signs in itertools.product((1.0, -1.0), repeat=d):
                    coef = np.einsum("j,kji->ki", np.asarray(signs), grad_maps)
                    ineq.add_block(grad_cols, coef, kappa, owner)

        elif isinstance(spec, Monotone):
            if len(spec.direction) != d:
                raise InvalidConstraintError(f"Monotone.direction needs {d} entries")
            for j, s in enumerate(spec.direction):
                if s != 0:
                    ineq.add_block(grad_cols, -s * grad_maps[:, j, :], 0.0, owner)

        elif isinstance(spec, Concavity):
            for k in range(cx.n_simplices):
                for i in range(d + 1):
                    l = cx.adjacency[k, i]
                    if l < 0:
                        continue
                    opp = int(np.flatnonzero(~np.isin(cx.simplices[l], cx.simplices[k]))[0])
                    point = cx.vertices[cx.simplices[l, opp]]
                    beta = cx._barycentric(point[None, :], np.array([k]))[0]
                    cols = np.concatenate([[_hid(cx, l, opp)], _hid(cx, k, np.arange(d + 1))])
                    ineq.add(cols, np.concatenate([[1.0], -beta]), 0.0, owner)

        elif isinstance(spec, MomentBox):
            lo, hi = np.asarray(spec.lower), np.asarray(spec.upper)
            if lo.size != d or hi.size != d:
                raise InvalidConstraintError(f"MomentBox bounds need {d} entries")
            if np.any(lo > hi):
                raise InfeasibleSpecError("MomentBox has lower > upper")
            mm = first_moment_matrix(cx)
            for j in range(d):
                ineq.add(all_h, mm[j], hi[j], owner)
                ineq.add(all_h, -mm[j], -lo[j], owner)

        else:
            raise InvalidConstraintError(f"unsupported constraint {spec!r}")

    return StandardForm(
        n_vars=n,
        n_heights=n,
        A=eq.matrix(),
        b=eq.vector(),
        eq_owner=eq.owners(),
        G=ineq.matrix(),
        u=ineq.vector(),
        ineq_owner=ineq.owners(),
        soc=soc,
    )


@dataclass(eq=False)
class PenaltyBlock:
    """Epigraph encoding of lam * sum_k ||g_k||_1 with N*d auxiliaries t_kj >= |g_kj|."""

    lam: float
    n_heights: int
    n_aux: int
    G: sp.csr_matrix  # over [heights, aux]
    objective: np.ndarray  # over aux
    var_map: list

    def value(self, f: EpiSpline) -> float:
        return self.lam * float(np.abs(piece_gradients(f)).sum())

    def lower_envelope(self, f: EpiSpline) -> np.ndarray:
        """Auxiliary values at their smallest feasible level, |g_kj|."""
        if self.n_aux == 0:
            return np.zeros(0)
        return np.abs(piece_gradients(f)).ravel()


def assemble_penalty(lam: float, cx: SimplicialComplex) -> PenaltyBlock:
    if not lam >= 0:
        raise InvalidConstraintError("penalty lambda must be >= 0")
    n, d, nsimp = cx.n_heights, cx.dim, cx.n_simplices
    if lam == 0:
        return PenaltyBlock(0.0, n, 0, sp.csr_matrix((0, n)), np.zeros(0), [])
    n_aux = nsimp * d
    grad_cols, grad_maps = _gradient_rows(cx)
    rows = _RowBuilder(n + n_aux)
    aux = n + np.arange(n_aux).reshape(nsimp, d)
    for sign in (1.0, -1.0):
        for j in range(d):
            cols = np.column_stack([grad_cols, aux[:, j]])
            vals = np.concatenate([sign * grad_maps[:, j, :], -np.ones((nsimp, 1))], axis=1)
            rows.add_block(cols, vals, 0.0, PENALTY_OWNER)
    var_map = [("penalty", int(k), int(j)) for k in range(nsimp) for j in range(d)]
    return PenaltyBlock(float(lam), n, n_aux, rows.matrix(), np.full(n_aux, float(lam)), var_map)


# -- semantic checks -----------------------------------------------------------


def check_feasibility(f: EpiSpline, specs, tol: float = 1e-8, tol_argmax: float = TOL_ARGMAX,
                      n_pairs: int = 1000, seed: int = 0) -> list[tuple[str, bool, float]]:
    """Check a spline against each spec directly, independent of the compiled rows.

    Returns one (name, ok, violation) triple per spec.
    """
    cx = f.complex
    rng = np.random.default_rng(seed)
    out = []
    for spec in specs:
        name = type(spec).__name__
        if isinstance(spec, Nonnegativity):
            viol = max(0.0, -float(f.heights.min()))
            ok = viol <= tol
        elif isinstance(spec, IntegralEquals):
            viol = abs(integral(f) - spec.target)
            ok = viol <= tol
        elif isinstance(spec, IntegralBand):
            viol = max(0.0, abs(integral(f) - spec.target) - spec.delta)
            ok = viol <= tol
        elif isinstance(spec, ArgmaxCovers):
            top, _ = sup_and_argmax(f, tol_argmax)
            vals = evaluate(f, np.asarray(spec.points))
            viol = float(max(0.0, np.max(top - vals)))
            ok = viol <= tol_argmax
        elif isinstance(spec, LevelSetCovers):
            vals = evaluate(f, np.asarray(spec.points))
            viol = float(max(0.0, np.max(spec.alpha - vals)))
            ok = viol <= tol
        elif isinstance(spec, PointwiseBounds):
            h = f.flat
            viol = 0.0
            if spec.lower is not None:
                viol = max(viol, float(np.max(_per_height(cx, spec.lower) - h)))
            if spec.upper is not None:
                viol = max(viol, float(np.max(h - _per_height(cx, spec.upper))))
            viol = max(viol, 0.0)
            ok = viol <= tol
        elif isinstance(spec, Continuity):
            viol = _continuity_gap(f)
            ok = viol == 0.0
        elif isinstance(spec, LipschitzBound):
            g = piece_gradients(f)
            ord_ = {"euclidean": 2, "max": np.inf, "one": 1}[spec.norm]
            viol = max(0.0, float(np.linalg.norm(g, ord=ord_, axis=1).max()) - spec.kappa)
            ok = viol <= tol and _continuity_gap(f) == 0.0
        elif isinstance(spec, Monotone):
            g = piece_gradients(f)
            s = np.asarray(spec.direction, dtype=float)
            viol = max(0.0, float(np.max(-(g * s))))
            # sampling oracle: moving along the sign direction never decreases f
            x = cx.box.lower + rng.random((n_pairs, cx.dim)) * (cx.box.upper - cx.box.lower)
            step = rng.random((n_pairs, cx.dim)) * (cx.box.upper - cx.box.lower) * s
            y = np.clip(x + step, cx.box.lower, cx.box.upper)
            viol = max(viol, float(np.max(evaluate(f, x) - evaluate(f, y), initial=0.0)))
            ok = viol <= tol and _continuity_gap(f) == 0.0
        elif isinstance(spec, Concavity):
            viol = concavity_violation(f, n_pairs, rng)
            ok = viol <= tol and _continuity_gap(f) == 0.0
        elif isinstance(spec, MomentBox):
            m = first_moment(f)
            viol = float(max(0.0, np.max(np.asarray(spec.lower) - m), np.max(m - np.asarray(spec.upper))))
            ok = viol <= tol
        else:
            raise InvalidConstraintError(f"unsupported constraint {spec!r}")
        out.append((name, bool(ok), float(viol)))
    return out


def _continuity_gap(f: EpiSpline) -> float:
    vid = f.complex.simplices.ravel()
    h = f.flat
    hi = np.full(f.complex.n_vertices, -np.inf)
    lo = np.full(f.complex.n_vertices, np.inf)
    np.maximum.at(hi, vid, h)
    np.minimum.at(lo, vid, h)
    return float(np.max(hi - lo))


def concavity_violation(f: EpiSpline, n_pairs: int = 1000, rng=None) -> float:
    """Largest midpoint-concavity defect (f(x)+f(y))/2 - f((x+y)/2) over random pairs."""
    rng = np.random.default_rng(0) if rng is None else rng
    box = f.complex.box
    x = box.lower + rng.random((n_pairs, box.dim)) * (box.upper - box.lower)
    y = box.lower + rng.random((n_pairs, box.dim)) * (box.upper - box.lower)
    gap = 0.5 * (evaluate(f, x) + evaluate(f, y)) - evaluate(f, 0.5 * (x + y))
    return float(max(0.0, gap.max()))
