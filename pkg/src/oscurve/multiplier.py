"""Dyadic multipliers m_j(xi) of the strongly singular operator along a curve.

    m_j(xi) = 2^{j alpha} int theta(|t|) t^{-1} |t|^{-alpha} exp(i psi(t)) dt,
    psi(t)  = 2^{j beta} |t|^{-beta} - gamma(2^{-j} t) . xi

The t-integral is split into t in (1/2, 2) and t in (-2, -1/2); each half is a
generalized-polynomial phase integral handed to ``integrate_oscillatory``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import _kernels
from .curves import Curve, Dilation, beta_dilate, beta_undilate, quasi_norm
from .quadrature import (DEFAULT_MAX_PANELS, PhasePoly, QuadratureError,
                         integrate_oscillatory, phase_variation)

DEFAULT_TOL = 1e-9
# phase variation (radians) above which a grid point is reported as skipped
DEFAULT_BUDGET = 2.0**25
DEFAULT_EPS = 2.0**-4
# products of two multipliers need a lower floor than single values
ORTHO_TOL = 1e-12


def smooth_step(x):
    """C-infinity step g(x) / (g(x) + g(1-x)), g(x) = exp(-1/x) for x > 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        gx = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        g1 = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return gx / (gx + g1)


@dataclass(frozen=True)
class CutoffSpec:
    """eta = 1 on [0, 1], 0 on [2, inf); theta(t) = eta(t) - eta(2t)."""

    kind: str = "exp-bump"

    def __post_init__(self):
        if self.kind != "exp-bump":
            raise ValueError(f"unsupported cutoff kind {self.kind!r}")

    def eta(self, t):
        return smooth_step(2.0 - np.abs(np.asarray(t, dtype=float)))

    def theta(self, t):
        t = np.asarray(t, dtype=float)
        return _kernels.theta_values(np.ascontiguousarray(t).ravel()).reshape(t.shape)

    def amplitude(self, s, alpha: float):
        """theta(s) s^{-1-alpha} for s > 0."""
        s = np.asarray(s, dtype=float)
        return _kernels.cutoff_amplitude(np.ascontiguousarray(s).ravel(), alpha).reshape(s.shape)

    def partition_sum(self, t, jmax: int):
        """sum_{j=0}^{jmax} theta(2^j t)."""
        t = np.asarray(t, dtype=float)
        return sum(self.theta(2.0**j * t) for j in range(jmax + 1))


@lru_cache(maxsize=None)
def _amplitude_mass(alpha: float, kind: str) -> float:
    cut = CutoffSpec(kind)
    val, _ = integrate.quad(lambda s: float(cut.theta(s)) * s ** (-1.0 - alpha), 0.5, 2.0,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


@dataclass(frozen=True)
class OperatorParams:
    alpha: float
    beta: float
    curve: Curve
    cutoff: CutoffSpec = CutoffSpec()

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def d(self) -> int:
        return self.curve.dim

    @property
    def critical(self) -> float:
        """Exponent alpha - beta/(d+1) of the dyadic bound."""
        return self.alpha - self.beta / (self.d + 1)

    @property
    def amplitude_mass(self) -> float:
        """int_{1/2}^2 theta(s) s^{-1-alpha} ds."""
        return _amplitude_mass(float(self.alpha), self.cutoff.kind)

    def trivial_bound(self, j: int) -> float:
        """|m_j(xi)| <= 2^{j alpha} int |theta(|t|) t^{-1} |t|^{-alpha}| dt."""
        return 2.0 ** (j * self.alpha) * 2.0 * self.amplitude_mass

    def shell(self, j, xi) -> float:
        return float(np.linalg.norm(beta_dilate(self.curve, self.beta, j, xi)))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "curve": str(self.curve),
                "cutoff": self.cutoff.kind}


def half_phases(params: OperatorParams, j: int, xi):
    """Phases psi(s)/2^{j beta} and psi(-s)/2^{j beta}, s in (1/2, 2), as PhasePoly."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (params.d,):
        raise ValueError(f"xi must have {params.d} components")
    beta = params.beta
    out = []
    for getter in (params.curve.terms, params.curve.reflection_terms):
        coef = {}
        for k in range(params.d):
            if xi[k] == 0.0:
                continue
            for e, c in getter(k):
                # -xi_k c 2^{-j e} s^e, divided by 2^{j beta}
                coef[e] = coef.get(e, 0.0) - xi[k] * c * 2.0 ** (-j * (e + beta))
        exps = sorted(coef)
        out.append(PhasePoly((-beta, *exps), tuple(coef[e] for e in exps),
                             lam=2.0 ** (j * beta)))
    return tuple(out)


def evaluation_cost(params: OperatorParams, j: int, xi) -> float:
    """Total phase variation in radians over both halves."""
    return sum(phase_variation(ph, 0.5, 2.0) for ph in half_phases(params, j, xi))


def eval_multiplier(params: OperatorParams, j: int, xi, tol: float = DEFAULT_TOL, *,
                    max_panels: int = DEFAULT_MAX_PANELS) -> complex:
    """m_j(xi) with total error at most ``tol``."""
    plus, minus = half_phases(params, j, xi)
    alpha = float(params.alpha)
    cut = params.cutoff

    def amp(s):
        return cut.amplitude(s, alpha)

    scale = 2.0 ** (j * alpha)
    htol = tol / (2.0 * scale * (1.0 + params.amplitude_mass))
    ip = integrate_oscillatory(amp, plus, (0.5, 2.0), htol, max_panels=max_panels)
    im = integrate_oscillatory(amp, minus, (0.5, 2.0), htol, max_panels=max_panels)
    return scale * (ip - im)


_IBP_NODES = np.linspace(0.5, 2.0, 4097)
_IBP_ORDER = 4


def multiplier_bound(params: OperatorParams, j: int, xi) -> float:
    """Cheap upper bound for |m_j(xi)| without resolving the oscillation.

    On a half where psi' keeps one sign, k-fold integration by parts gives
    |int a e^{i psi}| <= int |D^k a| with D g = (g / psi')'; the amplitude
    vanishes to all orders at both ends, so no boundary terms appear.  The
    derivatives are taken by finite differences on a dense sample of the
    non-oscillatory quotients and the smallest of k = 1..4 is used.  Halves
    where psi' changes sign fall back to the trivial bound.
    """
    s = _IBP_NODES
    mass = params.amplitude_mass
    amp = params.cutoff.amplitude(s, float(params.alpha))
    total = 0.0
    for ph in half_phases(params, j, xi):
        dpsi = ph.lam * ph.derivative(s, 1)
        best = mass
        if np.all(dpsi > 0) or np.all(dpsi < 0):
            g = amp
            for _ in range(_IBP_ORDER):
                g = np.gradient(g / dpsi, s, edge_order=2)
                best = min(best, float(integrate.trapezoid(np.abs(g), s)))
        total += best
    return 2.0 ** (j * params.alpha) * total


@dataclass(frozen=True)
class MultiplierSample:
    j: int
    xi: tuple
    value: complex
    tol: float
    shell: float = float("nan")
    bound: float = float("inf")

    def __post_init__(self):
        if abs(self.value) > self.bound + self.tol:
            raise ValueError(
                f"|m_{self.j}| = {abs(self.value):.6g} exceeds the trivial bound {self.bound:.6g}")

    @property
    def abs(self) -> float:
        return abs(self.value)

    def row(self) -> list:
        return [self.j, *self.xi, self.value.real, self.value.imag, abs(self.value),
                self.shell, self.tol]


def sample(params: OperatorParams, j: int, xi, tol: float = DEFAULT_TOL) -> MultiplierSample:
    xi = tuple(float(x) for x in xi)
    val = eval_multiplier(params, j, xi, tol)
    return MultiplierSample(j, xi, val, tol, params.shell(j, xi), params.trivial_bound(j))


# --- frequency grids ------------------------------------------------------


def default_directions(d: int, n_random: int = 16, seed: int = 0) -> np.ndarray:
    """+-axis directions, +-diagonal, and seeded random unit vectors."""
    dirs = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        dirs += [e, -e]
    diag = np.ones(d) / math.sqrt(d)
    if d > 1:
        dirs += [diag, -diag]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        v = rng.standard_normal(d)
        dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


@dataclass(frozen=True)
class XiGrid:
    """Frequency grid: shells |2^{-j} o_beta xi| = 2^m crossed with unit directions.

    Directions are built for the operator's dimension when points are requested.
    ``fixed`` replaces the shell construction by an explicit, j-independent set.
    """

    shells: tuple = tuple(range(-8, 9))
    n_random: int = 16
    seed: int = 0
    include_origin: bool = True
    fixed: tuple | None = None

    @classmethod
    def single(cls, xi) -> "XiGrid":
        return cls.explicit([xi])

    @classmethod
    def explicit(cls, xis) -> "XiGrid":
        return cls(shells=(), include_origin=False,
                   fixed=tuple(tuple(float(v) for v in x) for x in xis))

    def mu_points(self, d: int) -> np.ndarray:
        dirs = default_directions(d, self.n_random, self.seed)
        pts = [2.0**m * u for m in self.shells for u in dirs]
        if self.include_origin:
            pts.append(np.zeros(d))
        return np.array(pts).reshape(-1, d)

    def points(self, params: OperatorParams, j: int) -> np.ndarray:
        if self.fixed is not None:
            return np.array(self.fixed, dtype=float).reshape(-1, params.d)
        return np.array([beta_undilate(params.curve, params.beta, j, mu)
                         for mu in self.mu_points(params.d)]).reshape(-1, params.d)

    def describe(self) -> dict:
        if self.fixed is not None:
            return {"fixed": [list(x) for x in self.fixed]}
        return {"shells": list(self.shells), "random_directions": self.n_random,
                "seed": self.seed, "origin": self.include_origin}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("OSCURVE_THREADS", "1")))
    except ValueError:
        return 1


def _lexmax(samples):
    """Max by |value|; ties go to the lexicographically smallest xi."""
    best = None
    for s in samples:
        if best is None or s.abs > best.abs or (s.abs == best.abs and s.xi < best.xi):
            best = s
    return best


@dataclass
class ScanResult:
    j: int
    sup: float
    argmax: tuple
    best: MultiplierSample
    samples: list
    skipped: list

    def to_dict(self) -> dict:
        return {"j": self.j, "sup": self.sup, "argmax": list(self.argmax),
                "shell": self.best.shell, "evaluated": len(self.samples),
                "skipped": len(self.skipped)}


def scan_sup(params: OperatorParams, j: int, grid: XiGrid, tol: float = DEFAULT_TOL, *,
             budget: float = DEFAULT_BUDGET, workers: int | None = None) -> ScanResult:
    """Exact max of |m_j| over the finite grid (points above ``budget`` are skipped)."""
    pts = grid.points(params, j)
    if len(pts) == 0:
        raise ValueError("empty grid")
    todo, skipped = [], []
    for xi in pts:
        (todo if evaluation_cost(params, j, xi) <= budget else skipped).append(tuple(map(float, xi)))
    workers = workers or _workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            samples = list(ex.map(lambda x: sample(params, j, x, tol), todo))
    else:
        samples = [sample(params, j, x, tol) for x in todo]
    if not samples:
        raise QuadratureError("every grid point exceeds the evaluation budget")
    best = _lexmax(samples)
    return ScanResult(j, best.abs, best.xi, best, samples, skipped)


@dataclass
class RefinedReport:
    j: int
    xi: tuple
    lhs: float
    shell: float
    bound_i: float
    bound_ii: float | None
    regime: str
    ratio_i: float
    ratio_ii: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__, xi=list(self.xi))


def check_refined(params: OperatorParams, j: int, xi, tol: float = DEFAULT_TOL,
                  eps: float = DEFAULT_EPS) -> RefinedReport:
    """Compare |m_j(xi)| with both refined dyadic bounds (constants set to one)."""
    d = params.d
    lhs = abs(eval_multiplier(params, j, xi, tol))
    shell = params.shell(j, xi)
    b1 = 2.0 ** (j * params.critical) * (1.0 + shell) ** (-1.0 / (d + 1))
    inside = eps < shell < 1.0 / eps
    b2 = None if inside else 2.0 ** (j * (params.alpha - params.beta / d)) * (1.0 + shell) ** (-1.0 / d)
    return RefinedReport(j, tuple(map(float, xi)), lhs, shell, b1, b2,
                         "inside" if inside else "outside", lhs / b1,
                         None if b2 is None else lhs / b2)


@dataclass
class OrthoResult:
    """Grid maximum of |m_j m_j'|.

    ``floor`` is the size below which a product cannot be told apart from the
    evaluation error; ``upper`` = max(sup, floor, skipped_bound) is a safe
    upper bound for the grid maximum and ``resolved`` says whether the
    maximum stands above both the floor and every skipped point.
    """

    j: int
    jp: int
    sup: float
    argmax: tuple
    floor: float
    upper: float
    resolved: bool
    evaluated: int
    pruned: int
    skipped: int
    skipped_bound: float

    def to_dict(self) -> dict:
        return dict(self.__dict__, argmax=None if self.argmax is None else list(self.argmax))


class _Factors:
    """Cached |m_j(xi)| values and cheap bounds for one parameter set."""

    def __init__(self, params, tol, budget):
        self.params, self.tol, self.budget = params, tol, budget
        self._val, self._bnd, self._cost = {}, {}, {}
        # loosest tolerance actually achieved; rounding can defeat very small tol
        self.used_tol = tol

    def cost(self, j, xi):
        if (j, xi) not in self._cost:
            self._cost[j, xi] = evaluation_cost(self.params, j, xi)
        return self._cost[j, xi]

    def feasible(self, j, xi):
        return self.cost(j, xi) <= self.budget

    def bound(self, j, xi):
        if (j, xi) not in self._bnd:
            self._bnd[j, xi] = min(self.params.trivial_bound(j),
                                   multiplier_bound(self.params, j, xi)) + self.tol
        return self._bnd[j, xi]

    def value(self, j, xi):
        if (j, xi) not in self._val:
            tol = self.tol
            while True:
                try:
                    self._val[j, xi] = abs(eval_multiplier(self.params, j, xi, tol))
                    break
                except QuadratureError:
                    if tol >= DEFAULT_TOL:
                        raise
                    tol = min(10.0 * tol, DEFAULT_TOL)
            self.used_tol = max(self.used_tol, tol)
        return self._val[j, xi]

    def floor(self, ja, jb):
        t = self.used_tol
        return t * (self.params.trivial_bound(ja) + self.params.trivial_bound(jb)) + t * t

    def best_known(self, j, xi):
        return self._val[j, xi] if (j, xi) in self._val else self.bound(j, xi)


def _keyed(points):
    return sorted({tuple(float(v) for v in x) for x in points})


def orthogonality_scan(params: OperatorParams, j: int, jp: int, grid: XiGrid,
                       tol: float = ORTHO_TOL, *, budget: float = DEFAULT_BUDGET,
                       bridge: bool = True) -> OrthoResult:
    """max over the grid of |m_j(xi) m_j'(xi)|.

    The grid is the union of the shell grids at scales j and j' and, with
    ``bridge``, at every scale in between; the bridging shells hold the
    frequencies where both phases can be stationary at once.  Branch and
    bound: points are visited in decreasing order of an upper bound for the
    product and dropped once that bound falls below the running maximum or
    the noise floor 2 tol (trivial bound) + tol^2.  A point is skipped when a
    factor it still needs is over the evaluation budget.  The visiting order
    and the arithmetic are symmetric in (j, j'), so swapping them gives the
    identical result.
    """
    fac = _Factors(params, tol, budget)
    lo, hi = sorted((j, jp))
    scales = range(lo, hi + 1) if bridge else sorted({lo, hi})
    pts = _keyed([x for k in scales for x in grid.points(params, k)])
    order = sorted(((-fac.bound(lo, xi) * fac.bound(hi, xi), xi) for xi in pts))
    best, arg = 0.0, None
    evaluated = pruned = 0
    skipped = []

    def ub(xi):
        return fac.best_known(lo, xi) * fac.best_known(hi, xi)

    for neg_ub, xi in order:
        cut = max(best, fac.floor(lo, hi))
        if -neg_ub < cut:
            pruned += 1
            continue
        done = True
        for jj in sorted((lo, hi), key=lambda q: (fac.cost(q, xi), q)):
            if ub(xi) < cut:
                break
            if not fac.feasible(jj, xi):
                done = False
                break
            fac.value(jj, xi)
        if ub(xi) < cut:
            pruned += 1
        elif not done:
            skipped.append(ub(xi))
        else:
            prod = fac.value(lo, xi) * fac.value(hi, xi)
            evaluated += 1
            if prod > best:
                best, arg = prod, xi
    floor = fac.floor(lo, hi)
    late = [b for b in skipped if b >= max(best, floor)]
    sb = max(late, default=0.0)
    return OrthoResult(j, jp, best, arg, floor, max(best, floor, sb),
                       best >= floor and not late, evaluated,
                       pruned + len(skipped) - len(late), len(late), sb)


@dataclass
class TranslationResult:
    j: int
    ell: int
    sup: float
    argmax: tuple
    evaluated: int
    pruned: int
    skipped: int
    skipped_bound: float

    def to_dict(self) -> dict:
        return dict(self.__dict__, argmax=list(self.argmax))


def translation_check(params: OperatorParams, j: int, ell: int, x0, grid: XiGrid,
                      tol: float = DEFAULT_TOL, *, budget: float = DEFAULT_BUDGET) -> TranslationResult:
    """max over the grid at scale j+ell of |(1 - exp(i x0.xi)) m_{j+ell}(xi)|.

    Uses the same branch and bound as ``orthogonality_scan``.
    """
    if ell < 1:
        raise ValueError("ell must be a positive integer")
    x0 = np.asarray(x0, dtype=float)
    rho = quasi_norm(Dilation.for_curve(params.curve), x0)
    if rho > 2.0**j * (1 + 1e-12):
        raise ValueError(f"quasi-norm of x0 ({rho:.6g}) exceeds 2^j = {2.0**j:.6g}")
    jj = j + ell
    zero = TranslationResult(j, ell, 0.0, (0.0,) * params.d, 0, 0, 0, 0.0)
    if jj < 0 or not x0.any():
        return zero
    fac = _Factors(params, tol, budget)
    # |1 - e^{i x0.xi}|
    weight = {xi: abs(2.0 * math.sin(0.5 * float(np.dot(x0, xi))))
              for xi in _keyed(grid.points(params, jj))}
    order = sorted((-w * fac.bound(jj, xi), xi) for xi, w in weight.items() if w > 0.0)
    best, arg = 0.0, None
    evaluated = pruned = 0
    skipped = []
    for neg_ub, xi in order:
        if -neg_ub <= best:
            pruned += 1
        elif not fac.feasible(jj, xi):
            skipped.append(-neg_ub)
        else:
            val = weight[xi] * fac.value(jj, xi)
            evaluated += 1
            if val > best:
                best, arg = val, xi
    if arg is None:
        return zero
    late = [b for b in skipped if b > best]
    return TranslationResult(j, ell, best, arg, evaluated, pruned + len(skipped) - len(late),
                             len(late), max(late, default=0.0))


@dataclass
class SumResult:
    value: complex
    terms: list
    tail: float
    calib: float
    divergent: bool


def sum_multiplier(params: OperatorParams, xi, J_max: int, tol: float = DEFAULT_TOL,
                   calib: float | None = None) -> SumResult:
    """sum_{j=0}^{J_max} m_j(xi) with the tail estimate C 2^{J e} / (1 - 2^e), e = critical.

    Without ``calib`` the constant is max_j |m_j(xi)| 2^{-j e} over the evaluated terms.
    """
    if J_max < 0:
        raise ValueError("J_max must be >= 0")
    terms = [eval_multiplier(params, j, xi, tol) for j in range(J_max + 1)]
    e = params.critical
    if calib is None:
        calib = max(abs(t) * 2.0 ** (-j * e) for j, t in enumerate(terms))
    divergent = e >= 0
    tail = math.inf if divergent else calib * 2.0 ** (J_max * e) / (1.0 - 2.0**e)
    return SumResult(complex(sum(terms)), terms, tail, calib, divergent)


# --- output --------------------------------------------------------------


def csv_header(d: int) -> list:
    return ["j", *[f"xi_{k + 1}" for k in range(d)], "re", "im", "abs", "shell", "tol"]


def samples_to_csv(samples, d: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(d))
    for s in samples:
        w.writerow([repr(v) if isinstance(v, float) else v for v in s.row()])
    return buf.getvalue()


def samples_to_json(samples, d: int) -> str:
    keys = csv_header(d)
    return json.dumps([dict(zip(keys, s.row())) for s in samples], indent=1)
