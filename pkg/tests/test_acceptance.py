"""Acceptance criteria, one test per criterion.

A pass/fail line per criterion is printed in the terminal summary (see conftest.py).
"""
import itertools
import time

import numpy as np
import pytest

from epimest import (
    ArgmaxCovers, BoxDomain, Concavity, Continuity, EpiSpline, EstimationConfig, HypoDistanceConfig, IntegralEquals,
    LevelSetCovers, LipschitzBound, MomentBox, Monotone, Nonnegativity, PointwiseBounds, Sample, SolverConfig,
    assemble, assemble_penalty, check_feasibility, cli, compile_loss, dl, evaluate, integral, kuhn_triangulation,
    run, solve,
)
from epimest.epispline import first_moment, quadratic_form
from epimest.estimate import effective_constraints
from epimest.experiments import StudyConfig, consistency_study, default_mixture, scaling_study, study_constraints
from epimest.losses import value_grad_hess
from epimest.plugins import hausdorff, near_modes

UNIT_SQUARE = BoxDomain([0.0, 0.0], [1.0, 1.0])
XBAR, YBAR = (0.4702, 0.4657), (0.7746, 0.7773)


# -- 1. functional exactness against a Monte-Carlo oracle ---------------------------------


def _uniform_barycentric(rng, m, d):
    """Uniform points on the standard simplex via spacings of sorted uniforms."""
    if d == 1:
        u = rng.random(m)
        return np.column_stack([1 - u, u])
    a, b = rng.random(m), rng.random(m)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return np.column_stack([lo, hi - lo, 1 - hi])


def test_c1_functional_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    m = 10**6
    worst = []
    for i in range(200):
        d = 1 if i % 2 == 0 else 2
        if d == 1:
            cells = (int(rng.integers(1, 201)),)
        else:
            a = int(rng.integers(1, 11))
            cells = (a, int(rng.integers(1, 100 // a + 1)))
        lo = rng.uniform(-1, 1, d)
        box = BoxDomain(lo, lo + rng.uniform(0.5, 2, d))
        cx = kuhn_triangulation(box, cells)
        assert cx.n_simplices <= 200
        f = EpiSpline(cx, rng.normal(size=(cx.n_simplices, d + 1)))
        g = EpiSpline(cx, rng.normal(size=(cx.n_simplices, d + 1)))

        # uniform draws on the box: simplex by volume, then uniform barycentric weights
        mu = _uniform_barycentric(rng, m, d)
        if np.allclose(cx.volumes, cx.volumes[0], rtol=1e-12):
            k = rng.integers(0, cx.n_simplices, m)
        else:
            cdf = np.cumsum(cx.volumes) / cx.volumes.sum()
            k = np.minimum(np.searchsorted(cdf, rng.random(m), side="right"), cx.n_simplices - 1)
        coords = cx.simplex_coords()
        x = np.column_stack([np.einsum("ni,ni->n", mu, coords[:, :, j][k]) for j in range(d)])
        fx = np.einsum("ni,ni->n", mu, f.heights[k])
        gx = np.einsum("ni,ni->n", mu, g.heights[k])
        vol = box.volume

        checks = [(integral(f), vol * fx)]
        checks += [(first_moment(f)[j], vol * x[:, j] * fx) for j in range(d)]
        checks += [(quadratic_form(f, g), vol * fx * gx)]
        for exact, samples in checks:
            se = samples.std(ddof=1) / np.sqrt(m)
            worst.append(abs(samples.mean() - exact) / se)
    elapsed = time.perf_counter() - t0
    worst = np.asarray(worst)
    print(f"c1: {worst.size} comparisons, max |z| = {worst.max():.3f}, {elapsed:.1f}s")
    assert np.all(worst <= 3.0), f"{int((worst > 3).sum())} comparison(s) beyond 3 standard errors"
    assert elapsed < 60.0


# -- 2. solver against a refined grid-search oracle --------------------------------------


def _piecewise_values(H, cells, x):
    """Per-cell affine pieces on [0, 1] at interior data x; H holds one height vector per row."""
    k = np.minimum((x * cells).astype(int), cells - 1)
    t = x * cells - k
    h = H.reshape(H.shape[0], cells, 2)
    return h[:, k, 0] * (1 - t) + h[:, k, 1] * t


def _oracle_objective(kind, H, cells, x, y):
    fx = _piecewise_values(H, cells, x)
    if kind == "ml_density":
        with np.errstate(divide="ignore", invalid="ignore"):
            val = -np.mean(np.log(fx), axis=1)
        return np.where(np.all(fx > 0, axis=1), val, np.inf)
    if kind == "ls_density":
        h = H.reshape(H.shape[0], cells, 2)
        sq = np.sum(h[..., 0] ** 2 + h[..., 0] * h[..., 1] + h[..., 1] ** 2, axis=1) / (3 * cells)
        return -2 * fx.mean(axis=1) + sq
    return np.mean((fx - y) ** 2, axis=1)


def _grid_search(objective, center, width, points=9, shrink=0.7, rounds=90):
    """Zooming grid search: evaluate a points^k lattice around the incumbent, then shrink it."""
    best = np.asarray(center, float)
    best_val = objective(best[None])[0]
    offsets = np.array(list(itertools.product(np.linspace(-1, 1, points), repeat=best.size)))
    for _ in range(rounds):
        cand = best + width * offsets
        vals = objective(cand)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best, best_val = cand[j], vals[j]
        width *= shrink
    return best_val


def _instances():
    rng = np.random.default_rng(2)
    kinds = ["ml_free", "ml_cont", "ls_free", "ls_cont", "reg_free", "reg_mono"]
    for i in range(20):
        yield kinds[i % len(kinds)], rng.random(int(rng.integers(5, 30))), rng


def _free_cells(P):
    """Two cells, heights (a0, b0, a1, b1) with b1 fixed by the unit integral."""
    return np.column_stack([P, 4.0 - P.sum(axis=1)])


def _continuous_cells(P):
    """Three cells, vertex values v0..v3 with (v0 + 2 v1 + 2 v2 + v3) / 6 = 1."""
    v3 = 6.0 - P[:, 0] - 2 * P[:, 1] - 2 * P[:, 2]
    v = np.column_stack([P, v3])
    return v[:, [0, 1, 1, 2, 2, 3]]


def _nonneg(H):
    return np.all(H >= 0, axis=1)


def _anything(H):
    return np.ones(H.shape[0], dtype=bool)


def test_c2_solver_oracle_equivalence():
    t0 = time.perf_counter()
    gaps = []
    for kind, x, rng in _instances():
        y = None
        if kind.startswith("reg"):
            y = np.sin(3 * x) + 0.2 * rng.normal(size=x.size)
        if kind == "ml_free":
            cells, loss, specs = 2, "ml_density", [Nonnegativity(), IntegralEquals(1.0)]
            to_h, ok, center, width = _free_cells, _nonneg, np.ones(3), 2.0
        elif kind == "ml_cont":
            cells, loss, specs = 3, "ml_density", [Nonnegativity(), IntegralEquals(1.0), Continuity()]
            to_h, ok, center, width = _continuous_cells, _nonneg, np.ones(3), 2.0
        elif kind == "ls_free":
            cells, loss, specs = 2, "ls_density", [Nonnegativity(), IntegralEquals(1.0)]
            to_h, ok, center, width = _free_cells, _nonneg, np.ones(3), 2.0
        elif kind == "ls_cont":
            cells, loss, specs = 3, "ls_density", [IntegralEquals(1.0), Continuity()]
            to_h, ok, center, width = _continuous_cells, _anything, np.ones(3), 4.0
        elif kind == "reg_free":
            cells, loss, specs = 2, "ls_regression", []
            to_h, ok, center, width = (lambda P: P), _anything, np.full(4, y.mean()), 4.0
        else:
            cells, loss, specs = 3, "ls_regression", [Monotone((1,))]
            to_h = lambda P: P[:, [0, 1, 1, 2, 2, 3]]
            ok = lambda H: np.all(np.diff(H[:, [0, 1, 3, 5]], axis=1) >= 0, axis=1)
            center, width = np.full(4, y.mean()), 4.0

        def objective(P, to_h=to_h, ok=ok, cells=cells, loss=loss, x=x, y=y):
            H = to_h(P)
            return np.where(ok(H), _oracle_objective(loss, H, cells, x, y), np.inf)

        oracle = _grid_search(objective, center, width)
        cx = kuhn_triangulation(BoxDomain([0.0], [1.0]), cells)
        _, rep = solve(compile_loss(loss, Sample(x[:, None], y), cx), None, assemble(specs, cx))
        gaps.append(abs(rep.objective - oracle))
        assert gaps[-1] <= 1e-4, (kind, rep.objective, oracle)
    elapsed = time.perf_counter() - t0
    print(f"c2: max |solver - oracle| = {max(gaps):.2e}, {elapsed:.1f}s")
    assert elapsed < 60.0


# -- 3. semantic feasibility of estimates -------------------------------------------------


def _feasibility_cases():
    rng = np.random.default_rng(3)
    mix = default_mixture()
    hd = HypoDistanceConfig(ball_samples=512)
    yield "model problem", EstimationConfig(
        UNIT_SQUARE, penalty=0.05, schedule=[(5, 5), (10, 10)], hypodist=hd,
        constraints=[PointwiseBounds(1e-4, 1e4), IntegralEquals(1.0), ArgmaxCovers([XBAR, YBAR]),
                     LipschitzBound(100.0)]), Sample(mix.sample(100, 0))
    yield "concave density", EstimationConfig(
        UNIT_SQUARE, schedule=[4, 8], hypodist=hd,
        constraints=[Nonnegativity(), IntegralEquals(1.0), Concavity()]), Sample(mix.sample(300, 1))
    x = rng.random((200, 2))
    yield "monotone regression", EstimationConfig(
        UNIT_SQUARE, loss="ls_regression", schedule=[3, 6], hypodist=hd,
        constraints=[Monotone((1, 1)), LipschitzBound(5.0, "max")]), Sample(x, x.sum(axis=1) + rng.normal(size=200))
    yield "moments and level set", EstimationConfig(
        UNIT_SQUARE, loss="ls_density", schedule=[4], hypodist=hd,
        constraints=[Nonnegativity(), IntegralEquals(1.0), MomentBox((0.45, 0.45), (0.55, 0.55)),
                     LevelSetCovers([[0.5, 0.5]], 1.2)]), Sample(mix.sample(200, 2))
    yield "one-dimensional", EstimationConfig(
        BoxDomain([0.0], [1.0]), schedule=[5, 10, 20], hypodist=hd,
        constraints=[PointwiseBounds(1e-4, None), IntegralEquals(1.0), LipschitzBound(3.0), ArgmaxCovers([[0.3]])]), \
        Sample(rng.beta(2, 3, size=(150, 1)))


def test_c3_feasibility_suite():
    for name, cfg, sample in _feasibility_cases():
        res = run(cfg, sample)
        f = res.model
        report = check_feasibility(f, res.constraints, tol=1e-8, n_pairs=1000)
        assert all(ok for _, ok, _ in report), (name, report)
        for spec in res.constraints:
            if isinstance(spec, IntegralEquals):
                assert abs(integral(f) - spec.target) <= 1e-8, name
            if isinstance(spec, (LipschitzBound, Concavity, Monotone, Continuity)):
                vid = f.complex.simplices.ravel()
                vv = f.vertex_values()[vid]
                assert np.array_equal(vv, f.flat), (name, "continuity")
        for lvl in res.levels:
            assert all(ok for _, ok, _ in lvl.feasibility), (name, lvl.level)


# -- 4. loss calculus against finite differences ------------------------------------------


@pytest.mark.parametrize("kind", ["ml_density", "ls_density", "ls_regression"])
def test_c4_loss_calculus(kind):
    rng = np.random.default_rng(4)
    worst_g = worst_h = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 3))
        cx = kuhn_triangulation(BoxDomain(np.zeros(d), np.ones(d)), int(rng.integers(1, 4)))
        n = int(rng.integers(5, 60))
        x = rng.random((n, d))
        y = rng.normal(size=n) if kind == "ls_regression" else None
        loss = compile_loss(kind, Sample(x, y), cx)
        h = 0.5 + rng.random(cx.n_heights)
        _, g, H = value_grad_hess(loss, h)
        step = 1e-5
        fd = np.empty_like(h)
        for i in range(h.size):
            e = np.zeros_like(h)
            e[i] = step
            fd[i] = (loss.value(h + e) - loss.value(h - e)) / (2 * step)
        worst_g = max(worst_g, np.linalg.norm(fd - g) / np.linalg.norm(g))
        v = rng.normal(size=h.size)
        hv = H @ v
        dd = (loss.grad(h + step * v) - loss.grad(h - step * v)) / (2 * step)
        worst_h = max(worst_h, np.linalg.norm(dd - hv) / np.linalg.norm(hv))
    print(f"c4 {kind}: gradient rel err {worst_g:.2e}, Hessian action rel err {worst_h:.2e}")
    assert worst_g <= 1e-5
    assert worst_h <= 1e-4


# -- 5. hypo-distance metric axioms -------------------------------------------------------


def test_c5_metric_axioms():
    rng = np.random.default_rng(5)
    cfg = HypoDistanceConfig()
    worst = -np.inf
    for i in range(100):
        d = 1 if i % 2 == 0 else 2
        cx = kuhn_triangulation(BoxDomain(np.zeros(d), np.ones(d)), int(rng.integers(1, 5)))
        f, g, h = (EpiSpline(cx, rng.normal(size=(cx.n_simplices, d + 1))) for _ in range(3))
        fg, gh, fh = dl(f, g, cfg), dl(g, h, cfg), dl(f, h, cfg)
        slack = 2 * max(r.truncation_bound for r in (fg, gh, fh)) + fg.sampling_resolution
        worst = max(worst, fh.dl_value - fg.dl_value - gh.dl_value - slack)
        assert fh.dl_value <= fg.dl_value + gh.dl_value + slack
        for rep in (fg, gh, fh):
            curve = np.asarray(rep.dl_rho_curve)[:, 1]
            assert np.all(np.diff(curve) >= 0)
        if i < 20:
            assert dl(f, f, cfg).dl_value == 0.0
            assert dl(g, f, cfg).dl_value == fg.dl_value
    print(f"c5: worst triangle excess over slack {worst:.3e}")


# -- 6. plug-in consistency under mesh refinement -----------------------------------------


def _targets():
    a, b, c = np.array([0.31, 0.62]), np.array([0.73, 0.27]), np.array([0.4, 0.55])
    yield "cone", lambda x: 2 - np.linalg.norm(x - a, axis=1), np.array([a]), 2.0
    yield "twin cones", lambda x: 1 - np.minimum(np.linalg.norm(x - a, axis=1), np.linalg.norm(x - b, axis=1)), \
        np.array([a, b]), 1.0
    yield "gaussian bump", lambda x: np.exp(-3 * np.sum((x - c) ** 2, axis=1)), np.array([c]), 1.0


def test_c6_plugin_consistency():
    g = np.linspace(0, 1, 513)
    probe = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    for name, fn, modes, sup in _targets():
        pts = np.vstack([probe, modes])
        haus, dsup = [], []
        for cells in (4, 8, 16, 32):
            cx = kuhn_triangulation(UNIT_SQUARE, cells)
            fn_nu = EpiSpline.interpolate(cx, fn)
            # near-modes at twice the uniform approximation error capture every true maximizer
            delta = 2 * np.max(np.abs(evaluate(fn_nu, pts) - fn(pts)))
            haus.append(hausdorff(near_modes(fn_nu, delta), modes))
            dsup.append(abs(fn_nu.vertex_values().max() - sup))
        h_final = kuhn_triangulation(UNIT_SQUARE, 32).mesh_size
        print(f"c6 {name}: hausdorff {np.round(haus, 4)}, sup error {np.round(dsup, 5)}, 2h = {2 * h_final:.4f}")
        for seq in (haus, dsup):
            assert all(b <= a for a, b in zip(seq, seq[1:])), (name, seq)
            assert seq[-1] < seq[0] and seq[-1] < 2 * h_final, (name, seq)


# -- 7. consistency trend -----------------------------------------------------------------


def test_c7_consistency_trend():
    t0 = time.perf_counter()
    cfg = StudyConfig(sample_sizes=(100, 1000, 10000), seeds=tuple(range(10)), schedule=((10, 10),),
                      penalty=0.0, constraints=study_constraints(kappa=100.0))
    res = consistency_study(cfg)
    elapsed = time.perf_counter() - t0
    kl, dist = res.medians("kl"), res.medians("dl")
    print(f"c7: median KL {kl}, median dl {dist}, {elapsed:.0f}s")
    assert all(r["N"] == 200 and r["feasible"] for r in res.rows)
    assert kl[100] > kl[1000] > kl[10000]
    assert dist[100] > dist[1000] > dist[10000]
    assert elapsed <= 1800


# -- 8. scaling in the sample size --------------------------------------------------------


def test_c8_scaling():
    times = {}
    counts = set()
    for _ in range(3):
        for row in scaling_study(partitions=[(10, 10)], sample_sizes=(100, 1000, 10000), penalty=0.0):
            assert row["N"] == 200
            counts.add(row["n_vars"])
            times.setdefault(row["n"], []).append(row["wall_time"])
    t = {n: float(np.median(v)) for n, v in times.items()}
    print(f"c8: n_vars {counts}, median wall times {t}, ratio {t[10000] / t[100]:.2f}")
    assert len(counts) == 1
    assert t[10000] / t[100] <= 3.0


# -- 9. penalty accounting ----------------------------------------------------------------


def _independent_l1_gradients(f):
    total = 0.0
    for k in range(f.complex.n_simplices):
        v = f.complex.simplex_coords(k)
        # affine a.x + c through the vertex heights
        sol = np.linalg.solve(np.column_stack([v, np.ones(len(v))]), f.heights[k])
        total += np.abs(sol[:-1]).sum()
    return total


def test_c9_penalty_accounting():
    lam = 0.05
    mix = default_mixture()
    specs = effective_constraints(study_constraints())
    cx = kuhn_triangulation(UNIT_SQUARE, 10)
    pen = assemble_penalty(lam, cx)
    assert pen.n_aux == cx.n_simplices * cx.dim == 400
    loss = compile_loss("ml_density", Sample(mix.sample(200, 9)), cx)
    z, rep = solve(loss, pen, assemble(specs, cx))
    assert rep.n_vars == cx.n_heights + 400
    f = EpiSpline(cx, z[: cx.n_heights])
    exact = lam * _independent_l1_gradients(f)
    assert abs(pen.value(f) - exact) <= 1e-10
    # auxiliaries sit above |g| and close the gap at the solver tolerance
    envelope = pen.lower_envelope(f)
    assert np.all(z[cx.n_heights:] >= envelope - 1e-12)
    assert lam * np.sum(z[cx.n_heights:] - envelope) <= 10 * SolverConfig().tol_gap

    cfg = EstimationConfig(UNIT_SQUARE, penalty=lam, constraints=study_constraints(), schedule=[(10, 10)],
                           hypodist=HypoDistanceConfig(ball_samples=512))
    res = run(cfg, Sample(mix.sample(200, 9)))
    lvl = res.levels[-1]
    assert lvl.solve.n_vars == res.model.complex.n_heights + lvl.n_simplices * 2
    assert abs(lvl.penalty_value - lam * _independent_l1_gradients(res.model)) <= 1e-10


# -- 10. determinism ----------------------------------------------------------------------


def test_c10_determinism(tmp_path):
    from importlib import resources

    cfg = resources.files("epimest").joinpath("data/default_problem.json")
    sample = tmp_path / "sample.csv"
    np.savetxt(sample, default_mixture().sample(100, seed=0), delimiter=",", fmt="%.17g")
    outs = []
    for i in range(2):
        out = tmp_path / f"out{i}.json"
        assert cli.main(["estimate", "--config", str(cfg), "--sample", str(sample), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
