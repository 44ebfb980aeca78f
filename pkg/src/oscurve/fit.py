"""Decay-exponent fits on log2 scales and the sharpness-path experiment."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .multiplier import DEFAULT_TOL, OperatorParams, eval_multiplier
from .curves import beta_undilate


@dataclass(frozen=True)
class DecayFitResult:
    """Least-squares line through (x, log2 y).

    ``margin`` is ``target - slope`` when a target exponent is given, so a
    positive margin means the data decay at least as fast as the target.
    """

    slope: float
    intercept: float
    residual: float
    n: int
    target: float | None = None
    margin: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = list(self.to_dict())
        w.writerow(keys)
        w.writerow(["" if v is None else v for v in self.to_dict().values()])
        return buf.getvalue()


def fit_decay(xs, ys, target: float | None = None) -> DecayFitResult:
    """Ordinary least squares of log2(ys) against xs.

    Parameters
    ----------
    xs, ys : sequences of equal length, at least 3 points, ys > 0.
    target : float, optional
        Theoretical exponent stored with the fit.

    Raises
    ------
    ValueError
        Fewer than 3 points, nonpositive ys, or all xs equal.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d of equal length")
    if len(x) < 3:
        raise ValueError("a decay fit needs at least 3 points")
    if not np.all(y > 0) or not np.all(np.isfinite(y)):
        raise ValueError("ys must be positive and finite")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise ValueError("xs are all equal")
    ly = np.log2(y)
    slope = float(xc @ (ly - ly.mean())) / sxx
    intercept = float(ly.mean() - slope * x.mean())
    res = ly - (intercept + slope * x)
    rms = float(np.sqrt(np.mean(res**2)))
    margin = None if target is None else target - slope
    return DecayFitResult(slope, intercept, rms, len(x), target, margin)


# --- sharpness path -------------------------------------------------------


def path_point(params: OperatorParams, j: int, c) -> np.ndarray:
    """xi = 2^j o_beta c, i.e. (c_1 X, c_2 X^{(beta+a_2)/(beta+a_1)}, ...) with X = 2^{j(beta+a_1)}."""
    return beta_undilate(params.curve, params.beta, j, np.asarray(c, dtype=float))


@dataclass
class PathSearch:
    c: tuple
    value: float
    j_ref: int
    evaluations: int
    box: tuple


def _grid_local_maxima(vals: np.ndarray) -> list:
    """Flat indices of grid points not exceeded by any neighbour (ties kept)."""
    pad = np.pad(vals, 1, constant_values=-np.inf)
    core = tuple(slice(1, -1) for _ in range(vals.ndim))
    ok = np.ones(vals.shape, dtype=bool)
    for shift in np.ndindex(*(3,) * vals.ndim):
        if all(s == 1 for s in shift):
            continue
        sl = tuple(slice(s, s + n) for s, n in zip(shift, vals.shape))
        ok &= pad[core] >= pad[sl]
    idx = np.flatnonzero(ok)
    return sorted(idx, key=lambda i: (-vals.flat[i], i))


def locate_path_constants(params: OperatorParams, j_ref: int, *, box: float = 4.0,
                          grid: int = 33, j_start: int = 4, starts: int = 6,
                          search_budget: int = 8000, tol: float = DEFAULT_TOL) -> PathSearch:
    """Maximize |m_j(2^j o_beta c)| over c in [-box, box]^d.

    A grid search at the coarse scale ``j_start`` supplies the strongest local
    maxima as starts; Nelder-Mead tracks each through j_start+2, j_start+4,
    ..., j_ref (the peaks narrow as j grows) and the best one at ``j_ref`` is
    kept.  Evaluation stops after ``search_budget`` multiplier calls.
    """
    if params.curve.mode != "model":
        raise ValueError("the sharpness path needs a model-monomial curve")
    d = params.d
    count = [0]

    def value(j, c):
        if count[0] >= search_budget:
            raise _Exhausted
        count[0] += 1
        return abs(eval_multiplier(params, j, path_point(params, j, c), tol))

    axis = np.linspace(-box, box, grid)
    cands = np.array(np.meshgrid(*[axis] * d, indexing="ij")).reshape(d, -1).T
    j0 = min(j_start, j_ref)
    if len(cands) > search_budget:
        raise ValueError("search budget too small for the initial grid")
    vals = np.array([value(j0, c) for c in cands]).reshape((grid,) * d)
    stages = list(range(j0 + 2, j_ref, 2)) + ([j_ref] if j_ref > j0 else [])
    best_c, best_v = None, -1.0
    for i in _grid_local_maxima(vals)[:starts]:
        c, v = cands[i], float(vals.flat[i])
        try:
            for j in stages:
                step = 2.0 * box / (grid - 1) * 2.0 ** (-(j - j0) / 2.0)
                simplex = np.vstack([c] + [c + step * np.eye(d)[k] for k in range(d)])
                res = optimize.minimize(lambda x, j=j: -value(j, np.clip(x, -box, box)), c,
                                        method="Nelder-Mead",
                                        options={"initial_simplex": simplex, "xatol": 1e-7,
                                                 "fatol": 1e-13, "maxfev": 300})
                c, v = np.clip(res.x, -box, box), -float(res.fun)
        except _Exhausted:
            break
        if v > best_v:
            best_c, best_v = c, v
    if best_c is None:
        raise ValueError("search budget exhausted before any start was tracked")
    return PathSearch(tuple(float(x) for x in best_c), best_v, j_ref, count[0], (-box, box))


def flatten_path(params: OperatorParams, js, c0, *, maxfev: int = 400, step: float = 0.05,
                 tol: float = DEFAULT_TOL):
    """Polish path constants by minimizing log(max/min) of the normalized path values.

    The maximizer at one fixed scale sits on the peak of the local profile
    and drifts off it at other scales; the flattest nearby path is the one on
    which |m_j| 2^{-j (alpha - beta/(d+1))} stays level.  Paths with a value
    within 100 tol of zero are rejected.  Returns (c, log spread, evaluations).
    """
    js = [int(j) for j in js]
    e = params.critical
    count = [0]

    def spread(c):
        vals = []
        for j in js:
            count[0] += 1
            vals.append(abs(eval_multiplier(params, j, path_point(params, j, c), tol)))
        if min(vals) <= 100.0 * tol:
            return math.inf
        norm = [v * 2.0 ** (-j * e) for j, v in zip(js, vals)]
        return math.log(max(norm) / min(norm))

    c0 = np.asarray(c0, dtype=float)
    d = len(c0)
    simplex = np.vstack([c0] + [c0 + step * np.eye(d)[k] for k in range(d)])
    res = optimize.minimize(spread, c0, method="Nelder-Mead",
                            options={"initial_simplex": simplex, "xatol": 1e-8,
                                     "fatol": 1e-10, "maxfev": maxfev})
    return tuple(float(x) for x in res.x), float(res.fun), count[0]


class _Exhausted(Exception):
    pass


@dataclass
class SharpnessResult:
    c: tuple
    js: list
    points: list
    values: list
    normalized: list
    fit: DecayFitResult
    A: float
    factor: float
    inconclusive: bool
    search: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"c": list(self.c), "js": list(self.js), "points": [list(p) for p in self.points],
                "values": list(self.values), "normalized": list(self.normalized),
                "fit": self.fit.to_dict(), "A": self.A, "factor": self.factor,
                "inconclusive": self.inconclusive, "search": self.search}


def sharpness_path(params: OperatorParams, js, c=None, *, j_ref: int | None = None,
                   box: float = 4.0, search_budget: int = 8000, flatten: bool = True,
                   tol: float = DEFAULT_TOL) -> SharpnessResult:
    """|m_j| along xi_j = 2^j o_beta c for j in ``js``.

    Without ``c`` the constants are located by ``locate_path_constants`` at
    ``j_ref`` (default: the largest j), polished by ``flatten_path`` unless
    ``flatten`` is off, and frozen.  ``normalized`` holds
    |m_j| 2^{-j (alpha - beta/(d+1))}; A is the largest constant in (0, 1]
    with A <= normalized <= 1/A, and ``factor`` is max/min of the
    normalized values.  The run is inconclusive when some value is within
    100 tol of the evaluation noise.
    """
    js = [int(j) for j in js]
    search = {}
    if c is None:
        found = locate_path_constants(params, max(js) if j_ref is None else j_ref, box=box,
                                      search_budget=search_budget, tol=tol)
        c = found.c
        search = {"j_ref": found.j_ref, "evaluations": found.evaluations,
                  "value": found.value, "box": list(found.box), "c_ref": list(found.c)}
        if flatten:
            c, spread, n = flatten_path(params, js, c, tol=tol)
            search.update(flatten_spread=spread, flatten_evaluations=n)
    c = tuple(float(v) for v in c)
    pts = [path_point(params, j, c) for j in js]
    vals = [abs(eval_multiplier(params, j, xi, tol)) for j, xi in zip(js, pts)]
    e = params.critical
    norm = [v * 2.0 ** (-j * e) for j, v in zip(js, vals)]
    inconclusive = min(vals) <= 100.0 * tol
    fit = fit_decay(js, [max(v, tol) for v in vals], target=e)
    lo, hi = min(norm), max(norm)
    if lo > 0:
        A = min(1.0, lo, 1.0 / hi)
        factor = hi / lo
    else:
        A, factor = 0.0, math.inf
    return SharpnessResult(c, js, [tuple(map(float, p)) for p in pts], vals, norm, fit, A,
                           factor, inconclusive, search)
