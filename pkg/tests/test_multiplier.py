import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscurve.curves import parse_curve
from oscurve.multiplier import (CutoffSpec, OperatorParams, XiGrid, check_refined, csv_header,
                                eval_multiplier, multiplier_bound, orthogonality_scan, sample,
                                samples_to_csv, samples_to_json, scan_sup, smooth_step,
                                sum_multiplier, translation_check)
from oracles import brute_multiplier, theta

P = OperatorParams(0.0, 1.0, parse_curve("a=1,2"))
SMALL = XiGrid(shells=tuple(range(-3, 4)), n_random=4)


# --- cutoff ------------------------------------------------------------------------

def test_cutoff_matches_independent_bump():
    s = np.linspace(0.3, 2.5, 1001)
    np.testing.assert_allclose(CutoffSpec().theta(s), theta(s), atol=1e-15)


def test_partition_of_unity():
    cut = CutoffSpec()
    t = np.linspace(2.0**-11, 1.0, 500)
    np.testing.assert_allclose(cut.partition_sum(t, 12), 1.0, atol=1e-12)
    # telescoping: sum_{j<=J} theta(2^j t) = eta(t) - eta(2^{J+1} t)
    t = np.linspace(1e-4, 2.5, 777)
    np.testing.assert_allclose(cut.partition_sum(t, 6), cut.eta(t) - cut.eta(2.0**7 * t),
                               atol=1e-14)


def test_amplitude_mass_alpha_zero():
    assert P.amplitude_mass == pytest.approx(math.log(2.0), rel=1e-10)


def test_smooth_step_limits():
    np.testing.assert_array_equal(smooth_step(np.array([-1.0, 0.0, 1.0, 2.0])), [0, 0, 1, 1])


# --- eval_multiplier ------------------------------------------------------------------

@pytest.mark.parametrize("j", range(0, 13))
def test_zero_frequency_vanishes(j):
    tol = 1e-9
    assert abs(eval_multiplier(P, j, (0.0, 0.0), tol)) <= tol


@pytest.mark.parametrize("sign", ["natural", "odd", "even"])
def test_zero_frequency_any_sign_mode(sign):
    p = OperatorParams(0.4, 1.3, parse_curve(f"a=1,3; sign={sign}"))
    assert abs(eval_multiplier(p, 5, (0.0, 0.0), 1e-9)) <= 1e-9


@pytest.mark.parametrize("alpha,beta,exps,j,xi", [
    (0.0, 1.0, (1, 2), 3, (8.0, 64.0)),
    (0.0, 1.0, (1, 2), 6, (-200.0, 3000.0)),
    (0.3, 1.5, (1, 2, 3), 4, (10.0, -50.0, 300.0)),
    (0.5, 0.7, (1,), 7, (40.0,)),
])
def test_against_brute_force_oracle(alpha, beta, exps, j, xi):
    p = OperatorParams(alpha, beta, parse_curve("a=" + ",".join(map(str, exps))))
    ref, disc = brute_multiplier(alpha, beta, exps, j, xi)
    assert disc < 1e-11
    got = eval_multiplier(p, j, xi, 1e-11)
    assert abs(got - ref) <= 1e-10


_xi = st.tuples(st.floats(-1e4, 1e4), st.floats(-1e5, 1e5))


@settings(max_examples=60, deadline=None)
@given(j=st.integers(0, 8), xi=_xi)
def test_trivial_bound(j, xi):
    s = sample(P, j, xi, 1e-9)
    assert s.abs <= P.trivial_bound(j) + 1e-9


@settings(max_examples=60, deadline=None)
@given(j=st.integers(0, 8), xi=_xi)
def test_reflection_symmetry(j, xi):
    # gamma(-t) = R gamma(t) gives m_j(R xi) = -m_j(xi)
    tol = 1e-10
    R = P.curve.parity()
    a = eval_multiplier(P, j, xi, tol)
    b = eval_multiplier(P, j, R * np.asarray(xi), tol)
    assert abs(a + b) <= 2 * tol


@settings(max_examples=60, deadline=None)
@given(j=st.integers(0, 10), xi=_xi)
def test_cheap_bound_dominates(j, xi):
    tol = 1e-10
    assert abs(eval_multiplier(P, j, xi, tol)) <= multiplier_bound(P, j, xi) + tol


def test_fixed_frequency_decay_in_j():
    js = list(range(2, 9))
    vals = [abs(eval_multiplier(P, j, (1.0, 1.0), 1e-13)) for j in js]
    slope = np.polyfit(js, np.log2(vals), 1)[0]
    assert slope <= (P.alpha - P.beta) + 0.05


def test_sample_row_schema():
    s = sample(P, 3, (8.0, 64.0))
    assert len(s.row()) == len(csv_header(2))
    text = samples_to_csv([s], 2)
    assert text.splitlines()[0] == "j,xi_1,xi_2,re,im,abs,shell,tol"
    assert '"abs"' in samples_to_json([s], 2)


def test_params_validation():
    with pytest.raises(ValueError):
        OperatorParams(0.0, 0.0, parse_curve("a=1,2"))
    with pytest.raises(ValueError):
        OperatorParams(-0.1, 1.0, parse_curve("a=1,2"))


# --- grids and scans -----------------------------------------------------------------

def test_grid_deterministic():
    a = XiGrid(seed=3).points(P, 5)
    b = XiGrid(seed=3).points(P, 5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, XiGrid(seed=4).points(P, 5))


def test_scan_origin_grid():
    r = scan_sup(P, 4, XiGrid.single((0.0, 0.0)), 1e-9)
    assert r.sup <= 1e-9
    assert r.argmax == (0.0, 0.0)


def test_scan_single_point_matches_eval():
    xi = (12.0, -100.0)
    r = scan_sup(P, 4, XiGrid.single(xi), 1e-10)
    assert r.sup == abs(eval_multiplier(P, 4, xi, 1e-10))


def test_scan_threads_do_not_change_result():
    serial = scan_sup(P, 5, SMALL, workers=1)
    parallel = scan_sup(P, 5, SMALL, workers=4)
    assert serial.sup == parallel.sup and serial.argmax == parallel.argmax


def test_scan_decreasing_sups():
    sups = [scan_sup(P, j, SMALL).sup for j in range(2, 9)]
    slope = np.polyfit(range(2, 9), np.log2(sups), 1)[0]
    assert slope <= P.critical + 0.05


def test_scan_budget_skips():
    r = scan_sup(P, 6, SMALL, budget=1e3)
    assert r.skipped
    assert len(r.samples) + len(r.skipped) == len(SMALL.points(P, 6))


# --- refined bounds --------------------------------------------------------------------

def test_refined_origin():
    rep = check_refined(P, 3, (0.0, 0.0), 1e-9)
    assert rep.lhs <= 1e-9 and rep.ratio_i <= 1e-8


def test_refined_outside_window_has_second_bound():
    ratios = []
    for j in range(1, 9):
        mu = np.array([600.0, 800.0])  # |mu| = 10^3
        xi = mu * 2.0 ** (j * (P.beta + np.array(P.curve.exponents)))
        rep = check_refined(P, j, xi, 1e-10)
        assert rep.regime == "outside" and rep.bound_ii is not None
        ratios.append(rep.ratio_ii)
    assert all(math.isfinite(r) for r in ratios)


def test_refined_constant_stability():
    grid = XiGrid(shells=tuple(range(-4, 5)), n_random=4)
    pts1 = grid.points(P, 1)
    C = max(check_refined(P, 1, xi).ratio_i for xi in pts1)
    for j in range(2, 13):
        for xi in grid.points(P, j):
            rep = check_refined(P, j, xi)
            assert rep.lhs <= 3 * C * rep.bound_i


# --- orthogonality ----------------------------------------------------------------------

def test_orthogonality_symmetric():
    a = orthogonality_scan(P, 4, 7, SMALL)
    b = orthogonality_scan(P, 7, 4, SMALL)
    assert a.sup == b.sup and a.argmax == b.argmax and a.upper == b.upper


def test_orthogonality_diagonal_cauchy_schwarz():
    tol = 1e-10
    r = orthogonality_scan(P, 5, 5, SMALL, tol, bridge=False)
    s = scan_sup(P, 5, SMALL, tol)
    assert r.sup <= s.sup**2 * (1 + 1e-9) + tol


def test_orthogonality_origin():
    tol = 1e-10
    r = orthogonality_scan(P, 3, 6, XiGrid.single((0.0, 0.0)), tol)
    assert r.sup <= tol**2


def test_orthogonality_decays():
    ups = [orthogonality_scan(P, 4, jp, SMALL).upper for jp in range(6, 11)]
    assert ups[-1] < ups[0]


# --- translation -------------------------------------------------------------------------

def test_translation_zero_shift():
    r = translation_check(P, -4, 6, (0.0, 0.0), SMALL)
    assert r.sup == 0.0


def test_translation_rejects_large_shift():
    with pytest.raises(ValueError):
        translation_check(P, -4, 6, (1.0, 1.0), SMALL)


def test_translation_small_phase_spot_check():
    # x0 . xi tiny and |2^{-(j+l)} o xi| huge: |1 - e^{i x0.xi}| |m| <= 2 |m|
    x0 = np.array([2.0**-6, 0.0])
    xi = np.array([0.0, 2.0**20])
    r = translation_check(P, -4, 6, x0, XiGrid.single(xi))
    m = abs(eval_multiplier(P, 2, xi))
    assert r.sup <= 2 * m + 1e-9


# --- partial sums --------------------------------------------------------------------------

def test_sum_at_origin():
    tol = 1e-9
    r = sum_multiplier(P, (0.0, 0.0), 8, tol)
    assert abs(r.value) <= 9 * tol


def test_sum_cauchy_tail():
    xi = (30.0, 500.0)
    first = sum_multiplier(P, xi, 6)
    for J in range(6, 11):
        a = sum_multiplier(P, xi, J, calib=first.calib)
        b = sum_multiplier(P, xi, J + 1, calib=first.calib)
        assert abs(b.value - a.value) <= a.tail + 1e-9
