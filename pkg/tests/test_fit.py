import json

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from oscurve.curves import parse_curve
from oscurve.fit import fit_decay, path_point, sharpness_path
from oscurve.multiplier import OperatorParams


def test_exact_power_of_two():
    xs = np.arange(0, 8)
    r = fit_decay(xs, 2.0 ** (-xs))
    assert r.slope == pytest.approx(-1.0, abs=1e-14)
    assert r.residual == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("c", [1e-6, 0.3, 1.0, 7.0, 1e5])
def test_cube_root_decay(c):
    xs = np.arange(4, 13)
    assert fit_decay(xs, c * 2.0 ** (-xs / 3)).slope == pytest.approx(-1 / 3, abs=1e-13)


def test_margin_and_serialization():
    r = fit_decay([1, 2, 3], [1.0, 0.5, 0.25], target=-0.5)
    assert r.margin == pytest.approx(0.5)
    assert json.loads(r.to_json())["slope"] == pytest.approx(-1.0)
    lines = r.to_csv().splitlines()
    assert len(lines) == 2 and lines[0].startswith("slope,")


@pytest.mark.parametrize("xs,ys", [([1, 2], [1.0, 2.0]), ([1, 1, 1], [1.0, 2.0, 3.0]),
                                   ([1, 2, 3], [1.0, 0.0, 2.0]), ([1, 2, 3], [1.0, -1.0, 2.0])])
def test_fit_errors(xs, ys):
    with pytest.raises(ValueError):
        fit_decay(xs, ys)


_ys = st.lists(st.floats(1e-8, 1e8), min_size=3, max_size=12)


@settings(max_examples=200, deadline=None)
@given(ys=_ys, k=st.floats(-50, 50), c=st.floats(1e-6, 1e6))
def test_affine_equivariance(ys, k, c):
    xs = np.arange(len(ys), dtype=float)
    base = fit_decay(xs, ys)
    assume(np.ptp(np.log2(ys)) > 1e-6)
    shifted = fit_decay(xs + k, ys)
    assert shifted.slope == pytest.approx(base.slope, rel=1e-9, abs=1e-9)
    assert shifted.intercept == pytest.approx(base.intercept - base.slope * k, abs=1e-8)
    scaled = fit_decay(xs, np.asarray(ys) * c)
    assert scaled.slope == pytest.approx(base.slope, rel=1e-9, abs=1e-9)
    assert scaled.intercept == pytest.approx(base.intercept + np.log2(c), abs=1e-8)


# --- sharpness path -----------------------------------------------------------------------

def test_path_point_scaling():
    p = OperatorParams(0.0, 1.0, parse_curve("a=1,2"))
    np.testing.assert_allclose(path_point(p, 3, (1.0, 1.0)), [2.0**6, 2.0**9])


def test_sharpness_one_dimensional():
    p = OperatorParams(0.0, 1.0, parse_curve("a=1"))
    r = sharpness_path(p, range(4, 13))
    assert r.fit.slope == pytest.approx(p.alpha - p.beta / 2, abs=0.05)
    assert not r.inconclusive


def test_sharpness_requires_model_curve():
    p = OperatorParams(0.0, 1.0, parse_curve("a=1,2; mode=standard"))
    with pytest.raises(ValueError):
        sharpness_path(p, range(4, 8))


def test_sharpness_box_stability():
    p = OperatorParams(0.0, 1.0, parse_curve("a=1,2"))
    js = range(4, 13)
    a = sharpness_path(p, js, box=4.0)
    b = sharpness_path(p, js, box=8.0)
    np.testing.assert_allclose(a.c, b.c, atol=1e-4)


def test_sharpness_frozen_constants():
    p = OperatorParams(0.0, 1.0, parse_curve("a=1,2"))
    r = sharpness_path(p, range(4, 9), c=(1.794, 0.4625))
    assert r.search == {}
    assert len(r.values) == 5 and r.A > 0
    assert r.factor == pytest.approx(max(r.normalized) / min(r.normalized))
