"""Oscillatory quadrature for generalized-polynomial phases.

Integrals of the form ``int_a^b amp(t) exp(i lam phi(t)) dt`` where
``phi(t) = t**b0 + sum_k mu_k t**bk`` with distinct nonzero real exponents,
on intervals bounded away from the origin.  The integrator is composite
16-point Gauss-Legendre on panels that each hold a bounded number of
oscillations, with a two-level (panel vs. bisected panel) error certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels

GL_ORDER = 16
OSC_PER_PANEL = 4
DEFAULT_MAX_PANELS = 2**22
_CHUNK = 2**15  # panels per vectorised block

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)
# nodes of the two bisected halves, expressed on [-1, 1]
_GL_X2 = np.concatenate([(_GL_X - 1.0) / 2.0, (_GL_X + 1.0) / 2.0])
_GL_W2 = np.concatenate([_GL_W, _GL_W]) / 2.0
# interior sample points used to estimate max |phi'| on a panel
_PROBE = np.linspace(-1.0, 1.0, 5)

# van der Corput constants: C_1 for the monotone first-derivative case,
# C_k = 2**k for k >= 2
VDC_C1 = 3.0


class QuadratureError(RuntimeError):
    """Raised when the panel budget is exhausted before the tolerance is met."""

    def __init__(self, message: str, estimate: float = math.inf, panels: int = 0):
        super().__init__(message)
        self.estimate = estimate
        self.panels = panels


def falling_factorial(b, k: int):
    """b (b-1) ... (b-k+1); equals 1 for k == 0."""
    out = np.ones_like(np.asarray(b, dtype=float))
    for i in range(k):
        out = out * (np.asarray(b, dtype=float) - i)
    return out


@dataclass(frozen=True)
class PhasePoly:
    """phi(t) = sign * (t**b0 + mu_1 t**b1 + ... + mu_n t**bn), scaled by lam.

    The coefficient of the leading term is fixed to one; ``mu`` holds the
    remaining n coefficients.  ``sign`` flips the whole phase, which is how a
    conjugated integral is expressed without touching the leading coefficient.
    """

    exponents: tuple
    mu: tuple = ()
    lam: float = 1.0
    sign: int = 1

    def __post_init__(self):
        exps = tuple(float(b) for b in self.exponents)
        mu = tuple(float(m) for m in self.mu)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "mu", mu)
        if len(exps) == 0:
            raise ValueError("phase needs at least the leading exponent")
        if len(mu) != len(exps) - 1:
            raise ValueError(f"expected {len(exps) - 1} coefficients, got {len(mu)}")
        if any(b == 0.0 for b in exps):
            raise ValueError("exponents must be nonzero")
        if len(set(exps)) != len(exps):
            raise ValueError("exponents must be pairwise distinct")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def n(self) -> int:
        return len(self.exponents) - 1

    @property
    def coefficients(self) -> tuple:
        return (1.0,) + self.mu

    def with_lam(self, lam: float) -> "PhasePoly":
        return PhasePoly(self.exponents, self.mu, lam, self.sign)

    def negated(self) -> "PhasePoly":
        return PhasePoly(self.exponents, self.mu, self.lam, -self.sign)

    @property
    def signed_arrays(self):
        """(exponents, sign * coefficients) as float arrays for the compiled kernels."""
        return (np.asarray(self.exponents, dtype=float),
                self.sign * np.asarray(self.coefficients, dtype=float))

    def derivative(self, t, order: int = 0):
        """Signed ``phi^(order)(t)`` without the ``lam`` factor (t > 0, vectorised)."""
        t = np.asarray(t, dtype=float)
        exps, coefs = self.signed_arrays
        flat = _kernels.phase_values(np.ascontiguousarray(t).ravel(), exps, coefs, order)
        return flat.reshape(t.shape)

    def __call__(self, t):
        return self.derivative(t, 0)


def eval_phase(phase: PhasePoly, t: float, order: int = 0) -> float:
    """Exact derivative of the generalized polynomial at t > 0."""
    if not t > 0:
        raise ValueError(f"phase is defined for t > 0 only, got t={t}")
    if order < 0:
        raise ValueError("order must be nonnegative")
    return float(phase.derivative(t, order))


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    c: float = field(default=0.25, compare=False)

    def __post_init__(self):
        if not (0 < self.c <= self.a < self.b <= 1.0 / self.c):
            raise ValueError(
                f"interval [{self.a}, {self.b}] violates 0 < {self.c} <= a < b <= {1 / self.c}"
            )

    @property
    def width(self) -> float:
        return self.b - self.a


def _oscillation_panels(phase, a, b, osc_per_panel, max_panels):
    """Partition [a, b] so that lam * max|phi'| * width <= 2 pi osc_per_panel on each panel."""
    limit = 2.0 * math.pi * osc_per_panel
    exps, coefs = phase.signed_arrays
    panels = _kernels.greedy_panels(a, b, _PROBE, exps, coefs, phase.lam, limit, max_panels)
    if len(panels) == 0 or len(panels) > max_panels:
        raise QuadratureError(
            f"oscillation resolution needs more than {max_panels} panels", panels=max_panels)
    return panels


def _two_level(amplitude, phase, panels):
    """Per-panel coarse (one GL16) and fine (GL16 on each half) sums."""
    coarse = np.empty(len(panels), dtype=complex)
    fine = np.empty(len(panels), dtype=complex)
    exps, coefs = phase.signed_arrays
    for start in range(0, len(panels), _CHUNK):
        blk = panels[start:start + _CHUNK]
        mid = 0.5 * (blk[:, 0] + blk[:, 1])
        half = 0.5 * (blk[:, 1] - blk[:, 0])
        for xs, ws, dst in ((_GL_X, _GL_W, coarse), (_GL_X2, _GL_W2, fine)):
            if amplitude is None:
                amp = _NO_AMP
            else:
                t = mid[:, None] + half[:, None] * xs[None, :]
                amp = np.ascontiguousarray(
                    np.broadcast_to(np.asarray(amplitude(t), dtype=complex), t.shape))
            dst[start:start + len(blk)] = _kernels.weighted_sums(
                mid, half, xs, ws, amp, exps, coefs, phase.lam)
    return coarse, fine


_NO_AMP = np.empty((0, 0), dtype=complex)


def integrate_oscillatory(
    amplitude: Callable | None,
    phase: PhasePoly,
    interval: Interval | Sequence[float],
    tol: float = 1e-8,
    *,
    osc_per_panel: float = OSC_PER_PANEL,
    max_panels: int = DEFAULT_MAX_PANELS,
    max_refinements: int = 12,
    return_info: bool = False,
):
    """Integrate ``amplitude(t) * exp(i lam phi(t))`` over an interval with t > 0.

    Parameters
    ----------
    amplitude : callable or None
        Vectorised function of t; ``None`` means the constant 1.
    phase : PhasePoly
    interval : Interval or (a, b)
    tol : float
        Target: ``|R - I| <= tol * (1 + |I|)``, certified by the sum over panels
        of |coarse - fine| differences.

    Returns
    -------
    complex, or (complex, dict) when ``return_info`` is set.  The info dict
    carries ``error`` (the certified estimate) and ``panels``.

    Raises
    ------
    QuadratureError
        If the tolerance is not met within ``max_panels`` panels, or the
        estimate stops decreasing under refinement (rounding floor).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if isinstance(interval, Interval):
        a, b = interval.a, interval.b
    else:
        a, b = map(float, interval)
        if not 0 < a < b:
            raise ValueError("need 0 < a < b")
    if phase_variation(phase, a, b) <= 2.0 * math.pi:
        # at most one period (this covers lam <= 1 with O(1) coefficients):
        # start from a handful of panels, refine on error only
        edges = np.linspace(a, b, 5)
        panels = np.stack([edges[:-1], edges[1:]], axis=1)
    else:
        panels = _oscillation_panels(phase, a, b, osc_per_panel, max_panels)

    coarse, fine = _two_level(amplitude, phase, panels)
    prev, stalled = math.inf, 0
    for _ in range(max_refinements + 1):
        value = fine.sum()
        perr = np.abs(coarse - fine)
        err = float(perr.sum())
        target = tol * (1.0 + abs(value))
        if err <= target:
            break
        # rounding floor: refinement no longer reduces the estimate
        stalled = stalled + 1 if err > 0.7 * prev else 0
        prev = err
        if stalled >= 3:
            raise QuadratureError(
                f"tolerance {tol:g} below the attainable accuracy (estimate {err:.3g} stalled)",
                estimate=err, panels=len(panels),
            )
        # bisect panels whose error exceeds their length share of the budget
        share = target * (panels[:, 1] - panels[:, 0]) / (b - a)
        bad = perr > share
        if not bad.any():
            bad = perr >= perr.max()
        if len(panels) + int(bad.sum()) > max_panels:
            raise QuadratureError(
                f"tolerance {tol:g} not met within {max_panels} panels (estimate {err:.3g})",
                estimate=err, panels=len(panels),
            )
        keep = panels[~bad]
        split = panels[bad]
        mid = 0.5 * (split[:, 0] + split[:, 1])
        new = np.concatenate([np.stack([split[:, 0], mid], 1), np.stack([mid, split[:, 1]], 1)])
        nc, nf = _two_level(amplitude, phase, new)
        panels = np.concatenate([keep, new])
        coarse = np.concatenate([coarse[~bad], nc])
        fine = np.concatenate([fine[~bad], nf])
        order = np.argsort(panels[:, 0], kind="stable")
        panels, coarse, fine = panels[order], coarse[order], fine[order]
    else:
        raise QuadratureError(
            f"tolerance {tol:g} not met after {max_refinements} refinements (estimate {err:.3g})",
            estimate=err, panels=len(panels),
        )
    value = complex(fine.sum())
    if return_info:
        return value, {"error": err, "panels": int(len(panels))}
    return value


def phase_variation(phase: PhasePoly, a: float, b: float) -> float:
    """Upper bound for ``lam * int_a^b |phi'|`` from termwise variation."""
    total = 0.0
    for bk, c in zip(phase.exponents, phase.coefficients):
        total += abs(c) * abs(b**bk - a**bk)
    return phase.lam * total


def vdc_bound(k: int, lower: float, lam: float) -> float:
    """van der Corput bound ``k C_k (lam * lower)**(-1/k)``.

    Valid when ``|psi^(k)| >= lower`` on the interval (with psi' monotone
    when k == 1).  Uses C_1 = 3 and C_k = 2**k for k >= 2.
    """
    if k < 1 or not lower > 0 or not lam > 0:
        raise ValueError("need k >= 1, lower > 0, lam > 0")
    ck = VDC_C1 if k == 1 else 2.0**k
    return k * ck * (lam * lower) ** (-1.0 / k)


@dataclass(frozen=True)
class PhaseFamily:
    """Sampler of phases ``t**b0 + sum mu_k t**bk`` with mu uniform in [-M, M]^n."""

    exponents: tuple
    bound: float = 10.0

    def sample(self, rng: np.random.Generator) -> PhasePoly:
        n = len(self.exponents) - 1
        return PhasePoly(self.exponents, tuple(rng.uniform(-self.bound, self.bound, n)))


@dataclass
class UniformityReport:
    max_ratio: float
    worst_case: PhasePoly
    lambdas: list
    per_lambda_max: list        # max over trials of |I| at each lambda
    per_lambda_max_ratio: list  # the same, times lambda**(1/(n+1))
    median_ratio: float
    growth: float               # per_lambda_max_ratio[-1] / per_lambda_max_ratio[0]
    growth_factor: float
    uniform: bool
    ratios: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "max_ratio": self.max_ratio,
            "worst_case": {"exponents": list(self.worst_case.exponents),
                           "mu": list(self.worst_case.mu),
                           "lam": self.worst_case.lam},
            "lambdas": list(self.lambdas),
            "per_lambda_max": list(self.per_lambda_max),
            "per_lambda_max_ratio": list(self.per_lambda_max_ratio),
            "median_ratio": self.median_ratio,
            "growth": self.growth,
            "growth_factor": self.growth_factor,
            "uniform": self.uniform,
        }


def check_uniform_bound(
    family: PhaseFamily,
    interval: Interval,
    lambdas: Sequence[float],
    trials: int,
    *,
    tol: float = 1e-9,
    seed: int = 0,
    growth_factor: float = 5.0,
    amplitude: Callable | None = None,
) -> UniformityReport:
    """Measure ``max |int e^{i lam phi}| * lam**(1/(n+1))`` over random mu and lam.

    Non-uniformity is flagged only when the per-lambda maximum ratio grows by
    more than ``growth_factor`` between the smallest and the largest lambda.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    lambdas = sorted(float(x) for x in lambdas)
    if not lambdas or lambdas[0] <= 0:
        raise ValueError("lambdas must be nonempty and positive")
    rng = np.random.default_rng(seed)
    phases = [family.sample(rng) for _ in range(trials)]
    n = len(family.exponents) - 1
    expo = 1.0 / (n + 1)
    vals = np.empty((trials, len(lambdas)))
    for i, ph in enumerate(phases):
        for k, lam in enumerate(lambdas):
            vals[i, k] = abs(integrate_oscillatory(amplitude, ph.with_lam(lam), interval, tol))
    lam_arr = np.asarray(lambdas)
    ratios = vals * lam_arr[None, :] ** expo
    i, k = np.unravel_index(np.argmax(ratios), ratios.shape)
    per_max = vals.max(axis=0)
    per_ratio = ratios.max(axis=0)
    growth = float(per_ratio[-1] / per_ratio[0]) if per_ratio[0] > 0 else math.inf
    return UniformityReport(
        max_ratio=float(ratios[i, k]),
        worst_case=phases[i].with_lam(lambdas[k]),
        lambdas=lambdas,
        per_lambda_max=per_max.tolist(),
        per_lambda_max_ratio=per_ratio.tolist(),
        median_ratio=float(np.median(per_ratio)),
        growth=growth,
        growth_factor=growth_factor,
        uniform=bool(growth <= growth_factor),
        ratios=ratios,
    )
