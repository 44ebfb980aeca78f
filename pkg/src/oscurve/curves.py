"""Curves in R^d, nonisotropic dilations, and the derivative-floor certificate."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .quadrature import PhasePoly, falling_factorial

SIGN_MODES = ("natural", "odd", "even")


@dataclass(frozen=True)
class Curve:
    """gamma(t) in R^d with leading monomials t**a_k.

    ``mode="model"`` uses gamma_k(t) = t**a_k, ``mode="standard"`` uses
    t**a_k / a_k!.  ``perturbation`` maps a 0-based coordinate index to a
    tuple of (exponent, coefficient) pairs added to that coordinate; the
    perturbation terms are always ordinary polynomials in t.

    ``sign_mode`` fixes the leading terms for t < 0:

    * ``natural``: t**a_k (the polynomial itself; default)
    * ``odd``: sgn(t) |t|**a_k in every coordinate, e.g. (t, t|t|)
    * ``even``: first coordinate sgn(t) |t|**a_1, the rest |t|**a_k,
      e.g. (t, |t|**2)
    """

    exponents: tuple
    mode: str = "model"
    perturbation: tuple = ()
    sign_mode: str = "natural"

    def __post_init__(self):
        exps = tuple(int(a) for a in self.exponents)
        if any(a != b for a, b in zip(exps, self.exponents)):
            raise ValueError("curve exponents must be integers")
        object.__setattr__(self, "exponents", exps)
        if not exps or exps[0] < 1 or any(x >= y for x, y in zip(exps, exps[1:])):
            raise ValueError(f"exponents must satisfy 1 <= a_1 < ... < a_d, got {exps}")
        if self.mode not in ("model", "standard"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.sign_mode not in SIGN_MODES:
            raise ValueError(f"unknown sign_mode {self.sign_mode!r}")
        pert = tuple(
            (int(k), tuple((float(e), float(c)) for e, c in terms))
            for k, terms in (self.perturbation.items() if isinstance(self.perturbation, dict)
                             else self.perturbation)
        )
        for k, terms in pert:
            if not 0 <= k < len(exps):
                raise ValueError(f"perturbation coordinate {k + 1} out of range")
            for e, _ in terms:
                if e <= exps[k]:
                    raise ValueError(
                        f"perturbation exponent {e:g} must exceed a_{k + 1} = {exps[k]}")
        object.__setattr__(self, "perturbation", tuple(sorted(pert)))

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def lead_coef(self, k: int) -> float:
        a = self.exponents[k]
        return 1.0 if self.mode == "model" else 1.0 / math.factorial(a)

    def terms(self, k: int):
        """(exponent, coefficient) pairs of coordinate k for t > 0."""
        out = [(float(self.exponents[k]), self.lead_coef(k))]
        for kk, extra in self.perturbation:
            if kk == k:
                out.extend(extra)
        return out

    def reflection_terms(self, k: int):
        """(exponent, coefficient) pairs of s -> gamma_k(-s) for s > 0."""
        a = self.exponents[k]
        if self.sign_mode == "natural":
            lead = (-1.0) ** a
        elif self.sign_mode == "odd" or k == 0:
            lead = -1.0
        else:
            lead = 1.0
        out = [(float(a), lead * self.lead_coef(k))]
        for kk, extra in self.perturbation:
            if kk == k:
                out.extend((e, c * _parity(e)) for e, c in extra)
        return out

    def parity(self) -> np.ndarray:
        """Diagonal R with gamma(-t) = R gamma(t), or None if no such R exists."""
        signs = []
        for k in range(self.dim):
            r = {np.sign(c2 / c1) for (_, c1), (_, c2) in zip(self.terms(k), self.reflection_terms(k))}
            if len(r) != 1:
                return None
            signs.append(r.pop())
        return np.array(signs, dtype=float)

    def __str__(self) -> str:
        return format_curve(self)


def _parity(e: float) -> float:
    if e != int(e):
        raise ValueError("non-integer perturbation exponents have no polynomial reflection")
    return -1.0 if int(e) % 2 else 1.0


def eval_curve(curve: Curve, t) -> np.ndarray:
    """gamma(t); vectorised over t (the coordinate axis is last)."""
    t = np.asarray(t, dtype=float)
    s = np.abs(t)
    neg = t < 0
    out = np.empty(t.shape + (curve.dim,))
    for k in range(curve.dim):
        pos = sum(c * s**e for e, c in curve.terms(k))
        refl = sum(c * s**e for e, c in curve.reflection_terms(k))
        out[..., k] = np.where(neg, refl, pos)
    return out


@dataclass(frozen=True)
class Dilation:
    """r o x = (r**e_1 x_1, ..., r**e_d x_d)."""

    exponents: tuple

    def __post_init__(self):
        exps = tuple(float(e) for e in self.exponents)
        if not exps or any(e <= 0 for e in exps):
            raise ValueError("dilation exponents must be positive")
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def for_curve(cls, curve: Curve, beta: float = 0.0) -> "Dilation":
        """Dilations adapted to the curve; ``beta`` > 0 gives the beta-shifted family."""
        return cls(tuple(beta + a for a in curve.exponents))


def dilate(dil: Dilation, r: float, x) -> np.ndarray:
    if not r > 0:
        raise ValueError("dilation parameter must be positive")
    x = np.asarray(x, dtype=float)
    return np.power(float(r), np.asarray(dil.exponents)) * x


def quasi_norm(dil: Dilation, x) -> float:
    """The unique r > 0 with |r^{-1} o x| = 1, and 0 at the origin.

    Bisection in log r followed by Newton steps; F(s) = sum x_k^2 exp(-2 e_k s)
    is strictly decreasing and convex in s = log r.
    """
    x = np.asarray(x, dtype=float)
    x2 = x * x
    if not x2.any():
        return 0.0
    e = np.asarray(dil.exponents)
    mask = x2 > 0
    x2, e = x2[mask], e[mask]

    def F(s):
        return float(np.sum(x2 * np.exp(-2.0 * e * s))) - 1.0

    nx = math.sqrt(float(x2.sum()))
    lo = math.log(1e-6 * nx ** (1.0 / e.max()))
    hi = math.log(1e6 * (1.0 + nx))
    while F(lo) < 0:
        lo -= 10.0
    while F(hi) > 0:
        hi += 10.0
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if F(mid) > 0:
            lo = mid
        else:
            hi = mid
    # Newton from the left of the root converges monotonically (convex, decreasing)
    s = lo
    for _ in range(8):
        f = F(s)
        df = float(np.sum(-2.0 * e * x2 * np.exp(-2.0 * e * s)))
        step = f / df
        s -= step
        if abs(step) < 1e-16:
            break
    return math.exp(s)


def beta_dilate(curve: Curve, beta: float, j: float, xi) -> np.ndarray:
    """2^{-j} o_beta xi = (2^{-j(beta+a_1)} xi_1, ..., 2^{-j(beta+a_d)} xi_d)."""
    a = np.asarray(curve.exponents, dtype=float)
    return np.exp2(-j * (beta + a)) * np.asarray(xi, dtype=float)


def beta_undilate(curve: Curve, beta: float, j: float, mu) -> np.ndarray:
    """Inverse of ``beta_dilate``: xi with 2^{-j} o_beta xi = mu."""
    return beta_dilate(curve, beta, -j, mu)


class NotWellCurved(ValueError):
    pass


def normalize_to_standard(taylor, rtol: float = 1e-10):
    """Find M with M gamma of standard type.

    ``taylor[k, n-1]`` is the coefficient of t**n in gamma_k (gamma(0) = 0).
    Returns ``(M, curve)`` where ``curve`` is the standard-type curve
    t**a_k / a_k! + higher order terms, truncated at the supplied order.
    """
    C = np.atleast_2d(np.asarray(taylor, dtype=float))
    d, N = C.shape
    picks = []
    basis = np.zeros((d, 0))
    scale = max(float(np.abs(C).max()), 1.0)
    for n in range(N):
        cand = np.column_stack([basis, C[:, n]])
        if np.linalg.matrix_rank(cand, tol=rtol * scale) > basis.shape[1]:
            picks.append(n + 1)
            basis = cand
            if len(picks) == d:
                break
    if len(picks) < d:
        raise NotWellCurved(
            f"not well-curved at truncation order {N}: rank {len(picks)} < {d}")
    A = np.column_stack([C[:, a - 1] for a in picks])
    M = np.diag([1.0 / math.factorial(a) for a in picks]) @ np.linalg.inv(A)
    MC = M @ C
    pert = {}
    for k, a in enumerate(picks):
        terms = tuple((float(n + 1), float(MC[k, n])) for n in range(a, N)
                      if abs(MC[k, n]) > rtol * scale * max(1.0, abs(M).max()))
        if terms:
            pert[k] = terms
    return M, Curve(tuple(picks), mode="standard", perturbation=pert)


def phase_derivative_floor(phase: PhasePoly, t: float):
    """k in 1..n+1 maximising |phi^(k)(t)| t^(k - b0), and that value."""
    b0 = phase.exponents[0]
    vals = [abs(float(phase.derivative(t, k))) * t ** (k - b0) for k in range(1, phase.n + 2)]
    k = int(np.argmax(vals))
    return k + 1, vals[k]


def derivative_matrix(exponents) -> np.ndarray:
    """m_{k,j} = b_{j-1} (b_{j-1} - 1) ... (b_{j-1} - k + 1), k, j = 1..n+1."""
    b = np.asarray(exponents, dtype=float)
    return np.array([falling_factorial(b, k) for k in range(1, len(b) + 1)])


def vandermonde_det(exponents) -> float:
    """Closed form prod_j b_j * prod_{i<j} (b_i - b_j)."""
    b = [float(x) for x in exponents]
    if any(x == 0 for x in b) or len(set(b)) != len(b):
        raise ValueError("exponents must be distinct and nonzero")
    out = math.prod(b)
    for i in range(len(b)):
        for j in range(i + 1, len(b)):
            out *= b[i] - b[j]
    return out


def derivative_floor_constant(exponents) -> float:
    """C_1 with max_k |phi^(k)(t)| t^(k-b0) >= C_1 for every t > 0 and every mu.

    With w = M v and v_1 = 1, |w|_inf >= |w|_2 / sqrt(n+1) >= 1 / (sqrt(n+1) |M^{-1}|_2).
    """
    M = derivative_matrix(exponents)
    smin = np.linalg.svd(M, compute_uv=False).min()
    return float(smin / math.sqrt(len(exponents)))


# --- textual curve syntax -------------------------------------------------

_TERM = re.compile(r"^\s*([+-]?\s*[0-9.eE+-]*)\s*\*?\s*t\s*\^\s*([0-9]+)\s*$")


def parse_curve(text: str) -> Curve:
    """Parse ``"a=1,2"`` or ``"a=1,2; p2=+1.0*t^3; mode=standard; sign=odd"``.

    Clauses are separated by ``;``.  ``a=`` lists the leading exponents;
    ``pK=`` adds polynomial terms ``c*t^e`` (joined by further ``+``/``-``
    signs) to coordinate K (1-based); ``mode=`` is ``model`` or ``standard``;
    ``sign=`` is ``natural``, ``odd`` or ``even``.
    """
    exps = None
    mode = "model"
    sign = "natural"
    pert = {}
    for clause in filter(None, (c.strip() for c in text.split(";"))):
        key, _, val = clause.partition("=")
        key = key.strip().lower()
        if not _:
            raise ValueError(f"bad curve clause {clause!r}")
        if key == "a":
            exps = tuple(int(v) for v in val.split(","))
        elif key == "mode":
            mode = val.strip()
        elif key == "sign":
            sign = val.strip()
        elif re.fullmatch(r"p[0-9]+", key):
            k = int(key[1:]) - 1
            terms = []
            for piece in filter(None, re.split(r"(?<![eE])(?=[+-])", val.replace(" ", ""))):
                m = _TERM.match(piece)
                if not m:
                    raise ValueError(f"bad perturbation term {piece!r}")
                coef = m.group(1).replace(" ", "")
                coef = float(coef + "1") if coef in ("", "+", "-") else float(coef)
                terms.append((float(m.group(2)), coef))
            pert.setdefault(k, []).extend(terms)
        else:
            raise ValueError(f"unknown curve clause {key!r}")
    if exps is None:
        raise ValueError("curve needs an 'a=' clause")
    return Curve(exps, mode=mode, perturbation={k: tuple(v) for k, v in pert.items()},
                 sign_mode=sign)


def format_curve(curve: Curve) -> str:
    """Canonical text form accepted by ``parse_curve``."""
    parts = ["a=" + ",".join(str(a) for a in curve.exponents)]
    for k, terms in curve.perturbation:
        body = "".join(f"{c:+.17g}*t^{int(e)}" for e, c in terms)
        parts.append(f"p{k + 1}={body}")
    if curve.mode != "model":
        parts.append(f"mode={curve.mode}")
    if curve.sign_mode != "natural":
        parts.append(f"sign={curve.sign_mode}")
    return "; ".join(parts)
