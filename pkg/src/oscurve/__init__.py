"""Numerics for strongly singular oscillatory integrals along curves.

Modules
-------
quadrature   panel Gauss-Legendre integration of oscillatory integrals
curves       curves, nonisotropic dilations, quasi-norms
multiplier   dyadic multipliers m_j and grid scans
operator     the operator on periodic grids (FFT and direct routes)
fit          log2 decay fits and the sharpness path
experiments  default experiments with pass criteria
cli          command-line driver
"""

from .curves import Curve, Dilation, dilate, format_curve, parse_curve, quasi_norm
from .fit import DecayFitResult, fit_decay, sharpness_path
from .multiplier import OperatorParams, XiGrid, eval_multiplier, scan_sup
from .operator import GridFunction, apply_direct, apply_via_multiplier
from .quadrature import Interval, PhasePoly, QuadratureError, integrate_oscillatory

__version__ = "0.1.0"

__all__ = [
    "Curve", "DecayFitResult", "Dilation", "GridFunction", "Interval", "OperatorParams",
    "PhasePoly", "QuadratureError", "XiGrid", "apply_direct", "apply_via_multiplier", "dilate",
    "eval_multiplier", "fit_decay", "format_curve", "integrate_oscillatory", "parse_curve",
    "quasi_norm", "scan_sup", "sharpness_path",
]
