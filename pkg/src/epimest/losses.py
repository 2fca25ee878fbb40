"""Empirical loss functionals as convex functions of the tent-pole heights."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .epispline import gram_matrix
from .exceptions import OutOfDomainError
from .geometry import LOCATE_TOL, SimplicialComplex

logger = logging.getLogger(__name__)

LOSS_KINDS = ("ml_density", "ls_density", "ls_regression")


@dataclass(frozen=True, eq=False)
class Sample:
    covariates: np.ndarray
    responses: np.ndarray | None = None
    n_rejected: int = 0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        if X.shape[0] == 1 and X.shape[1] > 1 and np.asarray(self.covariates).ndim == 1:
            X = X.T
        object.__setattr__(self, "covariates", X)
        if self.responses is not None:
            y = np.asarray(self.responses, dtype=float).ravel()
            if y.size != X.shape[0]:
                raise ValueError("responses must have one entry per covariate row")
            object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def dim(self) -> int:
        return self.covariates.shape[1]

    @classmethod
    def within_box(cls, covariates, box, responses=None) -> "Sample":
        """Keep rows inside ``box`` (with locate tolerance) and count the rejects."""
        X = np.asarray(covariates, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, box.dim)
        keep = np.all((X >= box.lower - LOCATE_TOL) & (X <= box.upper + LOCATE_TOL), axis=1)
        n_rej = int((~keep).sum())
        if n_rej:
            logger.warning("rejected %d sample row(s) outside the box", n_rej)
        y = None if responses is None else np.asarray(responses, dtype=float)[keep]
        return cls(X[keep], y, n_rej)


@dataclass(frozen=True, eq=False)
class CompiledLoss:
    kind: str
    n: int
    n_heights: int
    simplex_index: np.ndarray  # (n,)
    weights: np.ndarray  # (n, d+1) barycentric weights
    W: sp.csr_matrix  # (n, n_heights); f(x_j) = (W h)_j
    responses: np.ndarray | None = None
    Q: sp.csr_matrix | None = None  # int f^2 = h^T Q h

    def values_at_data(self, h: np.ndarray) -> np.ndarray:
        return self.W @ h[: self.n_heights]

    def value(self, h: np.ndarray) -> float:
        return value_grad_hess(self, h, order=0)[0]

    def grad(self, h: np.ndarray) -> np.ndarray:
        return value_grad_hess(self, h, order=1)[1]


def compile_loss(kind: str, sample: Sample, cx: SimplicialComplex) -> CompiledLoss:
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
    if sample.n == 0:
        raise ValueError("empty sample")
    if sample.dim != cx.dim:
        raise ValueError(f"sample dimension {sample.dim} does not match complex dimension {cx.dim}")
    if (kind == "ls_regression") != (sample.responses is not None):
        raise ValueError("responses are required for ls_regression and only for it")
    try:
        ks, mu = cx.locate_many(sample.covariates)
    except OutOfDomainError as exc:
        raise OutOfDomainError(f"sample contains data outside the box: {exc}") from None
    d1 = cx.dim + 1
    cols = ks[:, None] * d1 + np.arange(d1)[None, :]
    rows = np.repeat(np.arange(sample.n), d1)
    W = sp.csr_matrix((mu.ravel(), (rows, cols.ravel())), shape=(sample.n, cx.n_heights))
    Q = gram_matrix(cx) if kind == "ls_density" else None
    return CompiledLoss(kind, sample.n, cx.n_heights, ks, mu, W, sample.responses, Q)


def value_grad_hess(loss: CompiledLoss, h: np.ndarray, order: int = 2):
    """Value, gradient and Hessian (sparse matrix, usable as an operator) at ``h``.

    ``h`` may carry trailing auxiliary variables; derivatives are padded with
    zeros for them. ml_density returns ``inf`` (and no derivatives) when the
    density is nonpositive at a datum.
    """
    h = np.asarray(h, dtype=float)
    nh, n_tot = loss.n_heights, h.size
    heights = h[:nh]
    fx = loss.W @ heights
    grad = hess = None

    if loss.kind == "ml_density":
        if np.any(fx <= 0):
            return np.inf, None, None
        val = -float(np.mean(np.log(fx)))
        if order >= 1:
            grad = -(loss.W.T @ (1.0 / fx)) / loss.n
        if order >= 2:
            hess = loss.W.T @ sp.diags(1.0 / (fx * fx * loss.n)) @ loss.W
    elif loss.kind == "ls_density":
        Qh = loss.Q @ heights
        val = float(-2.0 * fx.mean() + heights @ Qh)
        if order >= 1:
            grad = -2.0 * np.asarray(loss.W.sum(axis=0)).ravel() / loss.n + 2.0 * Qh
        if order >= 2:
            hess = 2.0 * loss.Q
    else:
        r = fx - loss.responses
        val = float(np.mean(r * r))
        if order >= 1:
            grad = 2.0 * (loss.W.T @ r) / loss.n
        if order >= 2:
            hess = (2.0 / loss.n) * (loss.W.T @ loss.W)

    if n_tot > nh:
        if grad is not None:
            grad = np.concatenate([grad, np.zeros(n_tot - nh)])
        if hess is not None:
            hess = sp.block_diag([hess, sp.csr_matrix((n_tot - nh, n_tot - nh))], format="csr")
    if hess is not None:
        hess = sp.csr_matrix(hess)
    return val, grad, hess
