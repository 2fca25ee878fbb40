"""Constrained nonparametric M-estimation over first-order epi-splines."""
from .constraints import (
    ArgmaxCovers,
    Concavity,
    Continuity,
    IntegralBand,
    IntegralEquals,
    LevelSetCovers,
    LipschitzBound,
    MomentBox,
    Monotone,
    Nonnegativity,
    PointwiseBounds,
    assemble,
    assemble_penalty,
    check_feasibility,
)
from .epispline import EpiSpline, eval_grid, evaluate, integral, prolongate, sup_and_argmax
from .estimate import EstimationConfig, EstimateResult, run
from .estimators import EpiSplineDensity, EpiSplineRegressor
from .exceptions import EpimestError, InfeasibleProblemError, SolverError
from .geometry import BoxDomain, SimplicialComplex, kuhn_triangulation
from .hypodist import DistanceReport, HypoDistanceConfig, dist_point_to_hypo, dl, dl_rho
from .losses import Sample, compile_loss
from .plugins import PluginReport, plugin_report
from .solver import SolveReport, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "ArgmaxCovers", "BoxDomain", "Concavity", "Continuity", "DistanceReport", "EpiSpline",
    "EpiSplineDensity", "EpiSplineRegressor", "EpimestError", "EstimateResult", "EstimationConfig",
    "HypoDistanceConfig", "InfeasibleProblemError", "IntegralBand", "IntegralEquals", "LevelSetCovers",
    "LipschitzBound", "MomentBox", "Monotone", "Nonnegativity", "PluginReport", "PointwiseBounds",
    "Sample", "SimplicialComplex", "SolveReport", "SolverConfig", "SolverError", "assemble",
    "assemble_penalty", "check_feasibility", "compile_loss", "dist_point_to_hypo", "dl", "dl_rho",
    "eval_grid", "evaluate", "integral", "kuhn_triangulation", "plugin_report", "prolongate", "run",
    "solve", "sup_and_argmax",
]
