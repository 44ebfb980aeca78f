import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscurve.curves import parse_curve
from oscurve.multiplier import OperatorParams, sum_multiplier
from oscurve.operator import (MAGIC, GridFunction, apply_direct, apply_via_multiplier,
                              distribution_function, l2_ratio, lattice_mode_near,
                              lattice_multiplier, shift_interpolate)

P = OperatorParams(0.0, 1.0, parse_curve("a=1,2"))


def gaussian(N, L, sigma=0.8, center=(0.0, 0.0)):
    c = np.asarray(center)
    return GridFunction.from_function(lambda x: np.exp(-((x - c) ** 2).sum(-1) / (2 * sigma**2)),
                                      N, L, 2)


# --- GridFunction ------------------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ValueError):
        GridFunction(np.zeros((6, 6)), 1.0)
    with pytest.raises(ValueError):
        GridFunction(np.zeros((8, 4)), 1.0)
    with pytest.raises(ValueError):
        GridFunction(np.full((4, 4), np.nan), 1.0)
    with pytest.raises(ValueError):
        GridFunction(np.zeros((4, 4)), -1.0)


def test_grid_geometry():
    f = GridFunction(np.zeros((8, 8)), 2.0)
    assert f.h == pytest.approx(0.5)
    assert f.axis()[0] == -2.0 and f.axis()[-1] == pytest.approx(1.5)
    k = f.frequencies()
    assert k.shape == (8, 8, 2)
    assert k[1, 0, 0] == pytest.approx(math.pi / 2.0)


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    f = GridFunction(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)), 1.5)
    path = tmp_path / "f.grid"
    f.save(path)
    data = path.read_bytes()
    assert data[:8] == MAGIC
    assert len(data) == 8 + 4 + 4 + 8 + 64 * 16
    g = GridFunction.load(path)
    np.testing.assert_array_equal(g.samples, f.samples)
    assert g.L == f.L
    assert list(tmp_path.iterdir()) == [path]


@pytest.mark.parametrize("mutate", [lambda b: b"XXXXXXXX" + b[8:], lambda b: b[:-16],
                                    lambda b: b[:10]])
def test_file_corruption(mutate):
    f = GridFunction(np.ones((4, 4)), 1.0)
    with pytest.raises(ValueError):
        GridFunction.from_bytes(mutate(f.to_bytes()))


def test_slice_csv():
    f = gaussian(4, 1.0)
    lines = f.slice_csv().splitlines()
    assert lines[0] == "i1,i2,x1,x2,re,im,abs"
    assert len(lines) == 17


# --- multiplier route ----------------------------------------------------------------------

def test_zero_function():
    f = GridFunction(np.zeros((16, 16)), math.pi)
    assert np.all(apply_via_multiplier(f, P, 4).samples == 0)
    assert np.all(apply_direct(f, P, 4).samples == 0)


@pytest.mark.parametrize("k", [(1, 0), (-3, 5), (7, -2)])
def test_single_mode_eigenvalue(k):
    N, L = 32, math.pi
    f = GridFunction.mode(k, N, L)
    xi = (math.pi / L) * np.asarray(k, dtype=float)
    M = sum_multiplier(P, xi, 6).value
    g = apply_via_multiplier(f, P, 6)
    err = np.linalg.norm(g.samples - M * f.samples) / np.linalg.norm(M * f.samples)
    assert err <= 1e-12


def test_l2_ratio_single_mode():
    f = GridFunction.mode((2, -5), 32, math.pi)
    xi = np.array([2.0, -5.0])
    assert l2_ratio(f, P, 5) == pytest.approx(abs(sum_multiplier(P, xi, 5).value), rel=1e-12)


def test_l2_ratio_zero_raises():
    with pytest.raises(ValueError):
        l2_ratio(GridFunction(np.zeros((8, 8)), 1.0), P, 3)


def test_linearity():
    N, L = 16, math.pi
    f = gaussian(N, L, 0.6, (0.3, -0.2))
    g = gaussian(N, L, 0.9, (-0.5, 0.4))
    a, b = 1.5 - 0.5j, -0.75
    lhs = apply_via_multiplier(GridFunction(a * f.samples + b * g.samples, L), P, 5)
    rhs = a * apply_via_multiplier(f, P, 5).samples + b * apply_via_multiplier(g, P, 5).samples
    assert np.linalg.norm(lhs.samples - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_translation_equivariance():
    N, L = 16, math.pi
    f = gaussian(N, L, 0.7, (0.2, 0.1))
    out = apply_via_multiplier(f, P, 5)
    out_shift = apply_via_multiplier(f.shifted((1, 0)), P, 5)
    ref = np.roll(out.samples, 1, axis=0)
    assert np.linalg.norm(out_shift.samples - ref) <= 1e-12 * np.linalg.norm(ref)


def test_parseval_bound():
    f = gaussian(16, math.pi, 0.5)
    g, table = apply_via_multiplier(f, P, 5, return_table=True)
    assert g.norm() <= np.abs(table).max() * f.norm() * (1 + 1e-12)


def test_threads_do_not_change_table(monkeypatch):
    a = lattice_multiplier(P, 8, math.pi, 4, workers=1)
    monkeypatch.setenv("OSCURVE_THREADS", "3")
    b = lattice_multiplier(P, 8, math.pi, 4)
    np.testing.assert_array_equal(a, b)


def test_bounded_regime_plateaus():
    f = gaussian(16, math.pi, 0.6)
    ratios = [l2_ratio(f, P, J) for J in range(3, 9)]
    assert abs(ratios[-1] - ratios[-2]) <= 0.05 * ratios[-1]


def test_lattice_mode_near():
    xi = np.array([123.4, 5678.9])
    k, L, err = lattice_mode_near(xi, 256)
    assert np.all(np.abs(k) < 128)
    placed = (math.pi / L) * k
    assert placed[1] == pytest.approx(xi[1], rel=1e-14)
    assert abs(placed[0] - xi[0]) / abs(xi[0]) == pytest.approx(err)
    assert err < 0.05


# --- direct route -----------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(m=st.integers(-20, 20), u=st.floats(0.0, 1.0))
def test_shift_interpolate(m, u):
    N, L = 32, 1.0
    h = 2 * L / N
    x = -L + h * np.arange(N)
    f = np.cos(np.pi * x / L)[:, None] * np.sin(np.pi * x / L)[None, :]
    # whole-cell shifts are exact rolls
    np.testing.assert_allclose(shift_interpolate(f, (m * h, 0.0), h), np.roll(f, m, axis=0),
                               atol=1e-14)
    # fractional shifts of a smooth periodic function: fourth-order accurate
    got = shift_interpolate(f, (u * h, 0.0), h)
    want = np.cos(np.pi * (x - u * h) / L)[:, None] * np.sin(np.pi * x / L)[None, :]
    assert np.abs(got - want).max() <= (np.pi * h / L) ** 4


def test_constant_annihilated():
    f = GridFunction(np.ones((16, 16)), math.pi)
    assert np.abs(apply_direct(f, P, 5).samples).max() <= 1e-10


def test_single_mode_direct_matches_multiplier():
    f = GridFunction.mode((1, 2), 32, math.pi)
    a = apply_via_multiplier(f, P, 5)
    b = apply_direct(f, P, 5)
    assert np.linalg.norm(a.samples - b.samples) <= 1e-3 * np.linalg.norm(a.samples)


# --- distribution function ----------------------------------------------------------------------

def test_distribution_zero():
    g = GridFunction(np.zeros((8, 8)), 1.0)
    assert distribution_function(g, [0.1, 1.0]) == [0.0, 0.0]


def test_distribution_bump():
    s = np.zeros((16, 16))
    s[2:6, 3:8] = 2.0
    g = GridFunction(s, 1.0)
    V = 20 * g.cell_volume
    assert distribution_function(g, [0.5, 1.9, 2.5]) == [pytest.approx(V), pytest.approx(V), 0.0]


def test_distribution_validation():
    g = GridFunction(np.ones((4, 4)), 1.0)
    with pytest.raises(ValueError):
        distribution_function(g, [0.0])
    with pytest.raises(ValueError):
        distribution_function(g, [2.0, 1.0])
