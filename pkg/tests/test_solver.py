import math

import numpy as np
import pytest

from epimest import (
    ArgmaxCovers, BoxDomain, Continuity, EpiSpline, IntegralEquals, LipschitzBound, Nonnegativity,
    PointwiseBounds, Sample, SolverConfig, assemble, assemble_penalty, check_feasibility, compile_loss,
    kuhn_triangulation, solve,
)
from epimest.exceptions import InfeasibleProblemError, SolverError

LINE = BoxDomain([0.0], [1.0])


def _solve(kind, x, specs, cells=1, y=None, lam=0.0, **cfg):
    cx = kuhn_triangulation(LINE, cells)
    loss = compile_loss(kind, Sample(np.asarray(x, float).reshape(-1, 1), y), cx)
    form = assemble(specs, cx)
    z, rep = solve(loss, assemble_penalty(lam, cx), form, cfg=SolverConfig(**cfg))
    return EpiSpline(cx, z[: cx.n_heights]), z, rep


def test_ml_single_datum_closed_form():
    # max 0.75 a + 0.25 b subject to a + b = 2, a, b >= 0  ->  a = 2, b = 0
    f, _, rep = _solve("ml_density", [0.25], [Nonnegativity(), IntegralEquals(1.0)])
    assert rep.status == "optimal"
    assert abs(rep.objective + math.log(1.5)) < 1e-6
    assert np.allclose(f.flat, [2.0, 0.0], atol=1e-5)


def test_ls_density_unconstrained_closed_form():
    # stationarity: 2a + b = 4.5, a + 2b = 1.5
    f, _, rep = _solve("ls_density", [0.25], [])
    assert np.allclose(f.flat, [2.5, -0.5], atol=1e-6)
    assert abs(rep.objective + 1.75) < 1e-8


def test_regression_interpolates_single_datum():
    f, _, rep = _solve("ls_regression", [0.3], [Continuity()], cells=2, y=[2.0])
    assert abs(rep.objective) < 1e-7


def test_kkt_residuals_small_with_penalty(rng):
    x = rng.random(30)
    f, z, rep = _solve("ml_density", x, [Nonnegativity(), IntegralEquals(1.0)], cells=4, lam=0.01)
    res = rep.kkt_residuals
    assert res["primal"] < 1e-9 and res["stationarity"] < 1e-7 and res["gap"] <= 1e-7
    assert all(ok for _, ok, _ in check_feasibility(f, [Nonnegativity(), IntegralEquals(1.0)]))


def test_infeasible_constraints_certified():
    specs = [PointwiseBounds(2.0, 3.0), IntegralEquals(1.0)]
    with pytest.raises(InfeasibleProblemError) as exc:
        _solve("ml_density", [0.5], specs)
    cert = exc.value.certificate
    assert cert["margin"] < 0


def test_iteration_limit_raises():
    with pytest.raises(SolverError) as exc:
        _solve("ml_density", [0.2, 0.7], [Nonnegativity(), IntegralEquals(1.0)], cells=3, max_iters=1)
    assert exc.value.report is not None


def test_warm_start_is_used_and_agrees(rng):
    cx = kuhn_triangulation(BoxDomain([0, 0], [1, 1]), 3)
    specs = [PointwiseBounds(1e-4, None), IntegralEquals(1.0), LipschitzBound(10.0)]
    loss = compile_loss("ml_density", Sample(rng.random((80, 2))), cx)
    form = assemble(specs, cx)
    z0, r0 = solve(loss, None, form)
    z1, r1 = solve(loss, None, form, warm=z0)
    assert r1.warm_started
    assert abs(r0.objective - r1.objective) < 1e-6


def test_argmax_constraint_solution_is_feasible(rng):
    cx = kuhn_triangulation(BoxDomain([0, 0], [1, 1]), 4)
    specs = [PointwiseBounds(1e-4, 1e4), IntegralEquals(1.0), ArgmaxCovers([[0.25, 0.25], [0.75, 0.75]]),
             LipschitzBound(50.0)]
    from epimest.estimate import effective_constraints

    specs = effective_constraints(specs)
    loss = compile_loss("ml_density", Sample(rng.random((60, 2))), cx)
    z, rep = solve(loss, None, assemble(specs, cx))
    f = EpiSpline(cx, z[: cx.n_heights])
    report = check_feasibility(f, specs)
    assert all(ok for _, ok, _ in report), report


def test_variable_count_independent_of_sample_size(rng):
    cx = kuhn_triangulation(BoxDomain([0, 0], [1, 1]), 3)
    form = assemble([Nonnegativity(), IntegralEquals(1.0)], cx)
    pen = assemble_penalty(0.1, cx)
    counts = set()
    for n in (5, 50, 500):
        _, rep = solve(compile_loss("ml_density", Sample(rng.random((n, 2))), cx), pen, form)
        counts.add(rep.n_vars)
    assert counts == {cx.n_heights + cx.n_simplices * 2}


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol_gap=0)
    with pytest.raises(ValueError):
        SolverConfig(barrier_reduction=1.5)
