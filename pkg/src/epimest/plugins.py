"""Plug-in estimators: modes, near-modes, sup-height and super-level sets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from .epispline import TOL_ARGMAX, EpiSpline, evaluate, superlevel_points


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        return 0.0 if a.size == b.size else float("inf")
    return float(max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0]))


@dataclass
class PluginReport:
    sup_height: float
    modes: np.ndarray
    delta: float
    near_modes: np.ndarray
    alpha: float
    superlevel: np.ndarray
    hausdorff_to_reference: float | None = None

    def to_dict(self) -> dict:
        return {
            "sup_height": self.sup_height,
            "modes": self.modes.tolist(),
            "delta": self.delta,
            "near_modes": self.near_modes.tolist(),
            "alpha": self.alpha,
            "superlevel": self.superlevel.tolist(),
            "hausdorff_to_reference": self.hausdorff_to_reference,
        }


def near_modes(f: EpiSpline, delta: float) -> np.ndarray:
    """Vertices whose usc value is within delta of the supremum."""
    vv = f.vertex_values()
    return f.complex.vertices[vv >= vv.max() - delta]


def is_mode(f: EpiSpline, points, tol_argmax: float = TOL_ARGMAX) -> np.ndarray:
    """Whether each point attains the supremum of f (within tol_argmax)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.atleast_1d(evaluate(f, pts)) >= f.vertex_values().max() - tol_argmax


def plugin_report(f: EpiSpline, delta: float = 0.0, alpha: float | None = None,
                  reference=None, tol_argmax: float = TOL_ARGMAX) -> PluginReport:
    """Plug-in summary of f.

    Modes are represented by the vertices at the supremum; the argmax set of a
    piecewise-affine function is the union of faces spanned by such vertices.
    ``alpha`` defaults to the sup-height, ``reference`` is an optional point
    set whose Hausdorff distance to the modes is reported.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    sup = float(f.vertex_values().max())
    a = sup if alpha is None else float(alpha)
    modes = near_modes(f, tol_argmax)
    near = near_modes(f, max(delta, tol_argmax))
    h = None if reference is None else hausdorff(modes, reference)
    # the default level is the sup itself, so it gets the same tolerance as the modes
    level = sup - tol_argmax if alpha is None else a
    return PluginReport(sup, modes, float(delta), near, a, superlevel_points(f, level), h)
