"""Log-barrier interior-point solver for convex losses over a StandardForm.

The solve runs in three stages:

1. presolve: two-term equalities ``x_a = x_b`` (continuity) are aggregated into
   a single variable, remaining equality rows are reduced to a full-rank set;
2. phase 1: a max-margin LP finds a strictly feasible point; inequality rows
   that cannot be strict anywhere (implicit equalities, e.g. the tent poles of
   the simplex holding an argmax point) are promoted to equalities so that a
   Slater point exists;
3. path following: Newton centering on ``t*phi + barrier`` with equality rows
   kept exactly in the KKT system, ``t`` increased geometrically until the
   duality gap ``theta / t`` is certified below the requested tolerance.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

from .constraints import StandardForm
from .exceptions import InfeasibleProblemError, SolverError
from .losses import CompiledLoss, value_grad_hess

logger = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    tol_gap: float = 1e-7
    max_iters: int = 200
    barrier_init: float | None = None  # initial barrier weight 1/t; None picks it from the start point
    barrier_reduction: float = 0.1
    backtrack: float = 0.5
    armijo: float = 0.01
    epsilon_argmin: float = 0.0
    centering_tol: float = 1e-7
    dense_threshold: int = 600
    regularization: float = 1e-12

    def __post_init__(self):
        if not self.tol_gap > 0:
            raise ValueError("tol_gap must be > 0")
        if not self.epsilon_argmin >= 0:
            raise ValueError("epsilon_argmin must be >= 0")
        if not 0 < self.barrier_reduction < 1:
            raise ValueError("barrier_reduction must lie in (0, 1)")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo < 0.5:
            raise ValueError("line-search parameters out of range")


@dataclass
class SolveReport:
    status: str  # optimal | epsilon_optimal | max_iters | infeasible
    objective: float
    kkt_residuals: dict
    iterations: int
    wall_time: float
    outer_objectives: list = field(default_factory=list)
    barrier_weights: list = field(default_factory=list)
    initial_objective: float = float("nan")
    center_objective: float = float("nan")
    warm_started: bool = False
    phase1_margin: float = float("nan")
    n_vars: int = 0
    n_reduced_vars: int = 0
    promoted_rows: int = 0

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "status": self.status,
            "objective": self.objective,
            "kkt_residuals": dict(self.kkt_residuals),
            "iterations": self.iterations,
            "outer_objectives": list(self.outer_objectives),
            "barrier_weights": list(self.barrier_weights),
            "initial_objective": self.initial_objective,
            "center_objective": self.center_objective,
            "warm_started": self.warm_started,
            "phase1_margin": self.phase1_margin,
            "n_vars": self.n_vars,
            "n_reduced_vars": self.n_reduced_vars,
            "promoted_rows": self.promoted_rows,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


# -- presolve -------------------------------------------------------------------


@dataclass(eq=False)
class Reduction:
    """x = P z; reduced rows A z = b, G z <= u, ||M z|| <= bound."""

    P: sp.csr_matrix
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    u: np.ndarray
    soc: list  # (M_z, bound)
    promoted: np.ndarray  # original G row ids moved to equalities
    g_rows: np.ndarray  # original G row id of each reduced inequality row

    @property
    def n_z(self) -> int:
        return self.P.shape[1]

    @property
    def theta(self) -> float:
        """Barrier parameter: 1 per linear row, 2 per second-order cone."""
        return float(self.G.shape[0] + 2 * len(self.soc))

    def lift(self, z: np.ndarray) -> np.ndarray:
        return self.P @ z

    def restrict(self, x: np.ndarray) -> np.ndarray:
        """Least-squares inverse of lift (average over aggregated variables)."""
        counts = np.asarray(self.P.sum(axis=0)).ravel()
        return (self.P.T @ x) / counts

    def __post_init__(self):
        if self.soc:
            self.M_all = sp.vstack([M for M, _ in self.soc], format="csr")
            sizes = np.array([M.shape[0] for M, _ in self.soc])
            self.soc_block = np.repeat(np.arange(len(self.soc)), sizes)
            self.soc_bound = np.array([bd for _, bd in self.soc], dtype=float)
        else:
            self.M_all = None
        nnz = np.diff(self.G.indptr) if self.G.shape[0] else np.zeros(0, dtype=int)
        self.dense_rows = nnz > max(32, self.n_z // 10)

    def soc_values(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(M z stacked, bound^2 - ||M_b z||^2 per block)."""
        if self.M_all is None:
            return np.zeros(0), np.zeros(0)
        y = self.M_all @ z
        sq = np.bincount(self.soc_block, weights=y * y, minlength=len(self.soc))
        return y, self.soc_bound ** 2 - sq

    def slacks(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = self.u - self.G @ z if self.G.shape[0] else np.zeros(0)
        return s, self.soc_values(z)[1]

    def strictly_feasible(self, z: np.ndarray) -> bool:
        s, q = self.slacks(z)
        return bool(np.all(s > 0) and np.all(q > 0))


class _UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            lo, hi = min(ra, rb), max(ra, rb)
            self.parent[hi] = lo


def _two_term_mask(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    nnz = np.diff(A.indptr)
    mask = (nnz == 2) & (b == 0)
    for r in np.flatnonzero(mask):
        v = A.data[A.indptr[r]:A.indptr[r + 1]]
        if v[0] != -v[1]:
            mask[r] = False
    return mask


def _aggregate(n: int, A: sp.csr_matrix, b: np.ndarray):
    """Merge variables tied by rows x_a - x_b = 0; return P and the remaining rows."""
    mask = _two_term_mask(A, b)
    uf = _UnionFind(n)
    for r in np.flatnonzero(mask):
        a, c = A.indices[A.indptr[r]:A.indptr[r + 1]]
        uf.union(int(a), int(c))
    roots = np.array([uf.find(i) for i in range(n)])
    _, cls = np.unique(roots, return_inverse=True)
    P = sp.csr_matrix((np.ones(n), (np.arange(n), cls)), shape=(n, int(cls.max()) + 1 if n else 0))
    return P, A[~mask], b[~mask]


def _independent_rows(A: sp.csr_matrix, b: np.ndarray, tol: float = 1e-10):
    """Drop zero and linearly dependent equality rows; raise if inconsistent."""
    if A.shape[0] == 0:
        return A, b
    norms = spla.norm(A, axis=1)
    zero = norms <= tol
    if np.any(np.abs(b[zero]) > 1e-9):
        raise InfeasibleProblemError("equality rows 0 = b with b != 0", certificate={"kind": "equality"})
    A, b = A[~zero], b[~zero]
    if A.shape[0] == 0:
        return A, b
    dense = A.toarray()
    _, R, piv = sla.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(1.0, diag[0])))
    keep = np.sort(piv[:rank])
    if rank < A.shape[0]:
        z, *_ = np.linalg.lstsq(dense[keep], b[keep], rcond=None)
        resid = dense @ z - b
        if np.max(np.abs(resid)) > 1e-8 * (1.0 + np.max(np.abs(b))):
            raise InfeasibleProblemError("inconsistent equality rows", certificate={"kind": "equality",
                                                                                    "residual": float(np.max(np.abs(resid)))})
    return A[keep], b[keep]


def _clean(M, rel: float = 1e-13) -> sp.csr_matrix:
    """Drop cancellation residue: entries tiny relative to the row's largest entry."""
    M = sp.csr_matrix(M, copy=True)
    if M.nnz:
        rowmax = np.maximum.reduceat(np.abs(M.data), M.indptr[:-1][np.diff(M.indptr) > 0])
        scale = np.zeros(M.shape[0])
        scale[np.diff(M.indptr) > 0] = rowmax
        per_entry = np.repeat(scale, np.diff(M.indptr))
        M.data[np.abs(M.data) <= rel * np.maximum(per_entry, 1.0)] = 0.0
        M.eliminate_zeros()
    return M


def _constant_on_manifold(G, u, A, b, rows, rel: float = 1e-7) -> np.ndarray:
    """Rows of G lying in the row space of A (constant on {A z = b}).

    Such rows are either implied or violated everywhere; violated ones raise.
    """
    Ad = A.toarray()
    gram = Ad @ Ad.T
    idx = np.flatnonzero(rows)
    C = np.asarray((G[idx] @ A.T).todense())  # (p, r)
    sol = np.linalg.solve(gram, C.T)  # (r, p)
    proj_sq = np.einsum("pr,rp->p", C, sol)
    norm_sq = np.asarray(G[idx].multiply(G[idx]).sum(axis=1)).ravel()
    resid = np.sqrt(np.maximum(norm_sq - proj_sq, 0.0))
    const = resid <= rel * np.sqrt(norm_sq)
    out = np.zeros(G.shape[0], dtype=bool)
    if np.any(const):
        z0 = np.linalg.lstsq(Ad, b, rcond=None)[0]
        vals = G[idx[const]] @ z0
        if np.any(vals > u[idx[const]] + 1e-9 * (1.0 + np.abs(u[idx[const]]))):
            raise InfeasibleProblemError("inequality row violated on the equality manifold",
                                         certificate={"kind": "constant_row"})
        out[idx[const]] = True
    return out


def _reduce(form: StandardForm, promoted: np.ndarray) -> Reduction:
    keep = np.ones(form.G.shape[0], dtype=bool)
    keep[promoted] = False
    A_all = sp.vstack([form.A, form.G[promoted]], format="csr")
    b_all = np.concatenate([form.b, form.u[promoted]])
    P, A_rest, b_rest = _aggregate(form.n_vars, A_all, b_all)
    A_z, b_z = _independent_rows(_clean(A_rest @ P), b_rest)
    G_z = _clean(form.G[keep] @ P)
    u_z = form.u[keep]
    nz = np.diff(G_z.indptr) > 0
    if np.any(u_z[~nz] < -1e-12):
        raise InfeasibleProblemError("constant inequality row violated", certificate={"kind": "constant_row"})
    if A_z.shape[0] and np.any(nz):
        nz &= ~_constant_on_manifold(G_z, u_z, A_z, b_z, nz)
    soc = []
    for blk in form.soc:
        Mz = _clean(blk.M @ P)
        if Mz.nnz:
            soc.append((Mz, float(blk.bound)))
    return Reduction(P, sp.csr_matrix(A_z), b_z, G_z[nz], u_z[nz], soc, np.asarray(promoted, dtype=np.int64),
                     np.flatnonzero(keep)[nz])


# -- phase 1 --------------------------------------------------------------------


@dataclass(eq=False)
class Phase1Result:
    x: np.ndarray
    z: np.ndarray
    margin: float
    reduction: Reduction


def _row_norms(M: sp.csr_matrix) -> np.ndarray:
    return np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel()) if M.shape[0] else np.zeros(0)


def phase1(form: StandardForm, guard: sp.csr_matrix | None = None, max_rounds: int = 50) -> Phase1Result:
    """Strictly feasible point of ``form`` via a max-margin LP.

    ``guard`` holds extra rows that must be strictly positive (density values at
    data points for ml losses). Raises InfeasibleProblemError with a dual
    certificate when the feasible set is empty.
    """
    promoted = np.zeros(0, dtype=np.int64)
    for _ in range(max_rounds):
        red = _reduce(form, promoted)
        nz_rows = red.g_rows
        blocks, rhs, kinds = [red.G], [red.u], [np.zeros(red.G.shape[0], dtype=int)]
        for M, bd in red.soc:
            # inner box approximation of the ball
            r = bd / np.sqrt(M.shape[0])
            blocks += [M, -M]
            rhs += [np.full(M.shape[0], r)] * 2
            kinds += [np.ones(2 * M.shape[0], dtype=int)]
        if guard is not None:
            Wz = sp.csr_matrix(guard @ red.P)
            blocks.append(-Wz)
            rhs.append(np.zeros(Wz.shape[0]))
            kinds.append(np.full(Wz.shape[0], 2))
        Gl = sp.vstack(blocks, format="csr") if blocks else sp.csr_matrix((0, red.n_z))
        ul = np.concatenate(rhs)
        kind = np.concatenate(kinds)
        m, nz_ = Gl.shape
        if m == 0:
            z = _equality_point(red)
            return Phase1Result(red.lift(z), z, np.inf, red)

        omega = _row_norms(Gl)
        omega[omega == 0] = 1.0
        c = np.zeros(nz_ + 1)
        c[-1] = -1.0
        A_ub = sp.hstack([Gl, sp.csr_matrix(omega[:, None])], format="csr")
        A_eq = sp.hstack([red.A, sp.csr_matrix((red.A.shape[0], 1))], format="csr") if red.A.shape[0] else None
        b_eq = red.b if red.A.shape[0] else None
        bounds = [(None, None)] * nz_ + [(None, 1.0)]
        res = linprog(c, A_ub=A_ub, b_ub=ul, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if res.status == 2:
            raise InfeasibleProblemError("equality rows admit no solution", certificate={"kind": "lp_infeasible"})
        if res.status != 0:
            raise SolverError(f"phase-1 LP failed: {res.message}")
        tau = -res.fun
        z = res.x[:-1]
        duals = -np.asarray(res.ineqlin.marginals)
        scale = max(1.0, float(np.max(np.abs(z), initial=0.0)))
        if tau > 1e-9 * scale:
            z = _spread_margins(Gl, ul, omega, red, tau, z)
            return Phase1Result(red.lift(z), z, float(tau), red)
        if tau < -1e-7 * scale:
            active = np.flatnonzero(duals > 1e-9)
            raise InfeasibleProblemError(
                f"constraint set is empty (max margin {tau:.3e})",
                certificate={"kind": "margin", "margin": float(tau),
                             "rows": [int(nz_rows[i]) for i in active if kind[i] == 0 and i < nz_rows.size],
                             "multipliers": [float(duals[i]) for i in active if kind[i] == 0 and i < nz_rows.size]},
            )
        tight = np.flatnonzero((duals > 1e-9) & (kind == 0))
        if np.any((duals > 1e-9) & (kind == 2)):
            raise InfeasibleProblemError("density is forced to vanish at a data point",
                                         certificate={"kind": "ml_domain"})
        if tight.size == 0:
            raise SolverError("no strictly feasible point found for the second-order cone rows")
        logger.debug("phase1 round: tau=%.3e promote %d rows", tau, tight.size)
        promoted = np.union1d(promoted, nz_rows[tight])
    raise SolverError("phase 1 did not converge while detecting implicit equalities")


def _spread_margins(Gl, ul, omega, red: Reduction, tau: float, z0: np.ndarray) -> np.ndarray:
    """Second phase-1 stage: keep every margin >= tau/2, maximize sum(min(margin_i, 1)).

    The max-margin LP ends at a vertex where most rows sit at the minimal margin;
    spreading the margins gives a far better centered start for the barrier.
    """
    m, nz_ = Gl.shape
    c = np.concatenate([np.zeros(nz_), -np.ones(m)])
    A_ub = sp.hstack([Gl, sp.diags(omega)], format="csr")
    A_eq = sp.hstack([red.A, sp.csr_matrix((red.A.shape[0], m))], format="csr") if red.A.shape[0] else None
    b_eq = red.b if red.A.shape[0] else None
    bounds = [(None, None)] * nz_ + [(min(0.5 * tau, 1.0), 1.0)] * m
    res = linprog(c, A_ub=A_ub, b_ub=ul, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        return z0
    return res.x[:nz_]


def _equality_point(red: Reduction) -> np.ndarray:
    if red.A.shape[0] == 0:
        return np.zeros(red.n_z)
    z, *_ = np.linalg.lstsq(red.A.toarray(), red.b, rcond=None)
    return z


# -- barrier path following --------------------------------------------------------


class _Problem:
    """Objective and barrier on the reduced variables."""

    def __init__(self, loss: CompiledLoss | None, c: np.ndarray, red: Reduction, n_x: int):
        self.loss, self.red, self.n_x = loss, red, n_x
        self.P = red.P
        self.c = red.P.T @ c
        self.c_x = c
        self.PT = sp.csr_matrix(red.P.T)

    def phi(self, z, order=2):
        x = self.P @ z
        if self.loss is None:
            val, g, H = 0.0, np.zeros(self.n_x), sp.csr_matrix((self.n_x, self.n_x))
        else:
            val, g, H = value_grad_hess(self.loss, x, order=order)
        if not np.isfinite(val):
            return np.inf, None, None
        val += float(self.c_x @ x)
        gz = Hz = None
        if order >= 1:
            gz = self.PT @ g + self.c
        if order >= 2:
            Hz = sp.csr_matrix(self.PT @ H @ self.P)
        return val, gz, Hz

    def barrier(self, z, order=2):
        """Value, gradient and Hessian of the log barrier.

        The Hessian is returned as ``(H, U, dvec)`` meaning ``H + U^T diag(dvec) U``;
        dense inequality rows (integral band, moments) are kept in ``U`` so that
        the sparse part stays sparse.
        """
        red = self.red
        s, q = red.slacks(z)
        if np.any(s <= 0) or np.any(q <= 0):
            return np.inf, None, None
        val = -float(np.sum(np.log(s))) - float(np.sum(np.log(q)))
        if order == 0:
            return val, None, None
        inv = 1.0 / s
        g = red.G.T @ inv if s.size else np.zeros(red.n_z)
        if red.M_all is not None:
            y, _ = red.soc_values(z)
            w = 2.0 / q[red.soc_block]
            g = g + red.M_all.T @ (w * y)
        if order == 1:
            return val, g, None
        d2 = inv * inv
        sparse_rows = ~red.dense_rows
        Gs = red.G[sparse_rows]
        H = (Gs.T @ sp.diags(d2[sparse_rows]) @ Gs) if Gs.shape[0] else sp.csr_matrix((red.n_z, red.n_z))
        if red.M_all is not None:
            # rank-one terms v_b v_b^T with v_b = M_b^T y_b
            Y = sp.csr_matrix((y, (red.soc_block, np.arange(y.size))), shape=(q.size, y.size))
            V = Y @ red.M_all
            H = H + red.M_all.T @ sp.diags(w) @ red.M_all + V.T @ sp.diags(4.0 / (q * q)) @ V
        return val, g, (sp.csr_matrix(H), red.G[red.dense_rows], d2[red.dense_rows])


def _kkt_solve(H, U, dvec, A, rhs_top, rhs_bot, cfg: SolverConfig):
    """Solve [[H + U^T D U, A^T], [A, 0]] [dz; w] = [rhs_top; rhs_bot].

    The system is symmetrically equilibrated by the Hessian diagonal, regularized
    relative to each diagonal entry, and polished by iterative refinement.
    """
    n, r = H.shape[0], A.shape[0]
    m = U.shape[0]
    dense = n + r <= cfg.dense_threshold
    if dense and m:
        H = sp.csr_matrix(H + U.T @ sp.diags(dvec) @ U)
        m = 0
    diag = np.abs(H.diagonal())
    if m:
        diag = diag + np.asarray(U.multiply(U).T @ dvec).ravel()
    pos = diag[diag > 0]
    floor = float(pos.max()) * 1e-30 if pos.size else 1.0
    sc_h = 1.0 / np.sqrt(np.maximum(diag, floor))
    sc = np.concatenate([sc_h, np.ones(r), np.sqrt(dvec) if m else np.zeros(0)])
    rhs = np.concatenate([rhs_top, rhs_bot, np.zeros(m)])

    def build(reg):
        Hr = H + sp.diags(reg * np.maximum(diag, floor))
        top = [Hr] + ([A.T] if r else []) + ([U.T] if m else [])
        blocks = [top]
        if r:
            blocks.append([A] + [None] * (len(top) - 1))
        if m:
            blocks.append([U] + ([None] if r else []) + [sp.diags(-1.0 / dvec)])
        return sp.bmat(blocks, format="csc")

    K0 = build(0.0)
    S = sp.diags(sc)
    reg = cfg.regularization
    for attempt in range(4):
        Ks = sp.csc_matrix(S @ build(reg) @ S)
        try:
            if dense:
                lu = sla.lu_factor(Ks.toarray(), check_finite=True)
                fsolve = lambda v: sla.lu_solve(lu, v)
            else:
                fsolve = spla.splu(Ks).solve
            with warnings.catch_warnings():
                # barrier Hessians are ill-conditioned near the boundary by design
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                sol = sc * fsolve(sc * rhs)
                for _ in range(2):
                    res = rhs - K0 @ sol
                    sol = sol + sc * fsolve(sc * res)
            if np.all(np.isfinite(sol)):
                return sol[:n], sol[n:n + r]
        except (np.linalg.LinAlgError, RuntimeError, sla.LinAlgWarning, ValueError):
            pass
        reg *= 1e3
    raise SolverError(
        "KKT factorization failed",
        report={"n": n, "r": r, "hess_diag_min": float(diag.min(initial=0.0)),
                "hess_diag_max": float(diag.max(initial=0.0)), "regularization": reg},
    )


def solve(loss: CompiledLoss | None, penalty, form: StandardForm, warm: np.ndarray | None = None,
          cfg: SolverConfig | None = None) -> tuple[np.ndarray, SolveReport]:
    """Minimize loss + penalty over the feasible set of ``form``.

    ``penalty`` is a PenaltyBlock (or None); ``warm`` is a full variable vector
    (heights, optionally followed by auxiliaries). Returns the optimal variable
    vector (heights first) and a report. Raises InfeasibleProblemError or
    SolverError.
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    if penalty is not None and penalty.n_aux:
        form = form.with_penalty(penalty)
    guard = loss.W if (loss is not None and loss.kind == "ml_density") else None
    if guard is not None and form.n_aux:
        guard = sp.hstack([guard, sp.csr_matrix((guard.shape[0], form.n_aux))], format="csr")
    p1 = phase1(form, guard)
    red = p1.reduction
    prob = _Problem(loss, form.linear_objective(), red, form.n_vars)

    z_center = p1.z
    center_obj = prob.phi(z_center, order=0)[0]
    z, warm_used = z_center, False
    if warm is not None:
        z_w = _warm_point(warm, form, red)
        # theta > 0 keeps every linear slack at least theta times its phase-1 value
        for theta in (1e-3, 1e-2, 0.1, 0.3, 0.6, 0.9):
            cand = (1.0 - theta) * z_w + theta * z_center
            if red.strictly_feasible(cand) and np.isfinite(prob.phi(cand, order=0)[0]):
                z, warm_used = cand, True
                break
    init_obj = prob.phi(z, order=0)[0]

    theta_b = red.theta
    target = max(cfg.tol_gap, cfg.epsilon_argmin)
    if theta_b == 0:
        t = 1.0
    elif cfg.barrier_init is not None:
        t = 1.0 / cfg.barrier_init
    else:
        t = _initial_t(prob, z, theta_b, target)

    iters = 0
    outer_obj, weights = [], []
    status = "max_iters"
    last = None
    while True:
        z, iters, last = _center(prob, z, t, cfg, iters)
        val = prob.phi(z, order=0)[0]
        outer_obj.append(val)
        weights.append(1.0 / t)
        gap = theta_b / t
        if gap <= cfg.tol_gap:
            status = "optimal"
            break
        if gap <= cfg.epsilon_argmin:
            status = "epsilon_optimal"
            break
        if iters >= cfg.max_iters:
            break
        t /= cfg.barrier_reduction
        if theta_b / t < target:
            t = theta_b / target * (1 + 1e-12)

    x = red.lift(z)
    resid = _kkt_residuals(prob, form, z, x, t, cfg)
    report = SolveReport(
        status=status,
        objective=float(outer_obj[-1]),
        kkt_residuals=resid,
        iterations=iters,
        wall_time=time.perf_counter() - t_start,
        outer_objectives=outer_obj,
        barrier_weights=weights,
        initial_objective=float(init_obj),
        center_objective=float(center_obj),
        warm_started=warm_used,
        phase1_margin=p1.margin,
        n_vars=form.n_vars,
        n_reduced_vars=red.n_z,
        promoted_rows=int(red.promoted.size),
    )
    if status == "max_iters":
        raise SolverError(f"iteration limit {cfg.max_iters} reached (gap {theta_b / t:.3e})", report=report)
    return x, report


def _warm_point(warm, form: StandardForm, red: Reduction) -> np.ndarray:
    w = np.asarray(warm, dtype=float).ravel()
    if w.size < form.n_vars:
        # fill auxiliaries at their lower envelope plus a margin: t_kj >= |g_kj|
        aux = np.zeros(form.n_vars - w.size)
        if form.n_aux and w.size == form.n_heights:
            x = np.concatenate([w, aux])
            pen_rows = np.flatnonzero(form.ineq_owner == -1)
            lhs = form.G[pen_rows] @ x
            aux_cols = form.G[pen_rows][:, form.n_heights:]
            need = np.zeros(form.n_aux)
            idx = aux_cols.tocoo()
            np.maximum.at(need, idx.col, lhs[idx.row])
            aux = need * 1.01 + 1e-3
        w = np.concatenate([w, aux])
    z = red.restrict(w)
    if red.A.shape[0]:
        A = red.A.toarray()
        r = red.b - A @ z
        z = z + A.T @ np.linalg.solve(A @ A.T, r)
    return z


def _initial_t(prob: _Problem, z, theta_b, target) -> float:
    """t minimizing the centrality residual ||t g_phi + g_B + A^T nu|| at z."""
    _, g, _ = prob.phi(z, order=1)
    _, gb, _ = prob.barrier(z, order=1)
    A = prob.red.A
    cols = [g[:, None]] + ([A.T.toarray()] if A.shape[0] else [])
    M = np.hstack(cols)
    coef, *_ = np.linalg.lstsq(M, -gb, rcond=None)
    t = float(coef[0])
    lo, hi = 1e-2, theta_b / target
    if not np.isfinite(t) or t <= lo:
        return max(lo, min(1.0, hi))
    return min(t, hi)


def _center(prob: _Problem, z, t, cfg: SolverConfig, iters):
    red = prob.red
    last = None
    stalls = 0
    while iters < cfg.max_iters:
        val, g, H = prob.phi(z)
        bval, gb, (Hb, U, dvec) = prob.barrier(z)
        ft = t * val + bval
        gt = t * g + gb
        Ht = t * H + Hb
        r_eq = red.b - red.A @ z if red.A.shape[0] else np.zeros(0)
        dz, w = _kkt_solve(Ht, U, dvec, red.A, -gt, r_eq, cfg)
        iters += 1
        last = (t, dz, w)
        Ud = U @ dz
        dec = float(dz @ (Ht @ dz)) + float(dvec @ (Ud * Ud))
        if dec / 2.0 <= cfg.centering_tol and np.max(np.abs(r_eq), initial=0.0) <= 1e-12:
            break
        alpha = 1.0
        if red.G.shape[0]:
            Gd = red.G @ dz
            s = red.u - red.G @ z
            pos = Gd > 0
            if np.any(pos):
                alpha = min(1.0, 0.99 * float(np.min(s[pos] / Gd[pos])))
        slope = float(gt @ dz)
        accepted = False
        while alpha > 1e-14:
            zn = z + alpha * dz
            bn = prob.barrier(zn, order=0)[0]
            if np.isfinite(bn):
                vn = prob.phi(zn, order=0)[0]
                if np.isfinite(vn) and t * vn + bn <= ft + cfg.armijo * alpha * min(slope, 0.0):
                    accepted = True
                    break
            alpha *= cfg.backtrack
        if not accepted:
            break
        z = zn
        # progress below the roundoff of ft: the center is resolved to machine precision
        stalls = stalls + 1 if ft - (t * vn + bn) <= 100 * np.finfo(float).eps * (1.0 + abs(ft)) else 0
        if stalls >= 3:
            break
    return z, iters, last


def _kkt_residuals(prob: _Problem, form: StandardForm, z, x, t, cfg: SolverConfig) -> dict:
    """KKT measures at the returned point.

    Two multiplier estimates are tried: the barrier ones (lambda_i = 1/(t s_i))
    and the ones linearized through one more Newton step at ``z``
    (lambda_i = (1 + (G dz)_i / s_i) / (t s_i), nu = w / t). Once slacks reach
    roundoff scale the first estimate loses relative accuracy while the second
    stays consistent, so the better stationarity residual is reported.
    """
    red = prob.red
    _, g, H = prob.phi(z)
    s, q = red.slacks(z)
    lam = 1.0 / (t * s) if s.size else np.zeros(0)
    y = red.soc_values(z)[0]
    soc_grad = red.M_all.T @ ((2.0 / (t * q[red.soc_block])) * y) if red.M_all is not None else 0.0
    r = g + (red.G.T @ lam if s.size else 0.0) + soc_grad
    At = red.A.T.toarray() if red.A.shape[0] else np.zeros((red.n_z, 0))
    stat = _project_out(r, At)
    dual = 0.0

    _, gb, (Hb, U, dvec) = prob.barrier(z)
    r_eq = red.b - red.A @ z if red.A.shape[0] else np.zeros(0)
    try:
        dz, w = _kkt_solve(t * H + Hb, U, dvec, red.A, -(t * g + gb), r_eq, cfg)
    except SolverError:
        dz = None
    if dz is not None:
        Ud = U @ dz
        hb_dz = Hb @ dz + (U.T @ (dvec * Ud) if U.shape[0] else 0.0)
        r_lin = g + (gb + hb_dz) / t + (red.A.T @ w) / t if red.A.shape[0] else g + (gb + hb_dz) / t
        stat_lin = float(np.max(np.abs(r_lin), initial=0.0))
        lam_lin = lam * (1.0 + (red.G @ dz) / s) if s.size else lam
        dual_lin = float(max(0.0, -np.min(lam_lin, initial=0.0)))
        if stat_lin < stat and dual_lin <= cfg.tol_gap:
            stat, dual = stat_lin, dual_lin

    pres = form.residuals(x)
    return {
        "stationarity": float(stat),
        "primal": float(max(pres["eq"], pres["ineq"], pres["soc"])),
        "dual": float(dual),
        "gap": float(red.theta / t),
    }


def _project_out(r: np.ndarray, At: np.ndarray) -> float:
    """max |r + A^T nu| at the least-squares nu."""
    if At.shape[1]:
        nu, *_ = np.linalg.lstsq(At, -r, rcond=None)
        r = r + At @ nu
    return float(np.max(np.abs(r), initial=0.0))
