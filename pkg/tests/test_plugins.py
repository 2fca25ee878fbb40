import numpy as np
import pytest

from epimest import BoxDomain, EpiSpline, kuhn_triangulation, plugin_report
from epimest.plugins import hausdorff, is_mode, near_modes


def _two_peaks():
    cx = kuhn_triangulation(BoxDomain([0, 0], [1, 1]), 4)
    a, b = np.array([0.25, 0.25]), np.array([0.75, 0.75])
    fn = lambda x: 1 - np.minimum(np.abs(x - a).sum(axis=1), np.abs(x - b).sum(axis=1))
    return EpiSpline.interpolate(cx, fn), np.array([a, b])


def test_hausdorff_basics():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert hausdorff(a, a) == 0.0
    assert hausdorff(a, [[0.0, 0.0]]) == 1.0
    assert hausdorff(a, [[0.0, 0.0]]) == hausdorff([[0.0, 0.0]], a)


def test_modes_of_two_peak_function():
    f, peaks = _two_peaks()
    rep = plugin_report(f, reference=peaks)
    assert rep.sup_height == pytest.approx(1.0)
    assert hausdorff(rep.modes, peaks) == 0.0 and rep.hausdorff_to_reference == 0.0
    assert np.all(is_mode(f, peaks))


def test_delta_zero_near_modes_are_modes():
    f, _ = _two_peaks()
    rep = plugin_report(f, delta=0.0)
    assert np.array_equal(rep.near_modes, rep.modes)


def test_superlevel_at_sup_contains_modes():
    f, _ = _two_peaks()
    rep = plugin_report(f)
    assert rep.alpha == rep.sup_height
    modes = {tuple(p) for p in rep.modes}
    assert modes <= {tuple(p) for p in rep.superlevel}


def test_near_modes_grow_with_delta():
    f, _ = _two_peaks()
    sizes = [len(near_modes(f, dlt)) for dlt in (0.0, 0.3, 0.6, 2.0)]
    assert sizes == sorted(sizes) and sizes[-1] == f.complex.n_vertices


def test_negative_delta_rejected():
    f, _ = _two_peaks()
    with pytest.raises(ValueError):
        plugin_report(f, delta=-1.0)
