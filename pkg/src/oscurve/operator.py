"""Applying the operator to periodic grid functions.

Grid convention: the box [-L, L)^d is sampled at x_i = -L + i h, h = 2L/N, and
the lattice frequencies are xi = (pi/L) k with k in {-N/2, ..., N/2-1}.  FFTs
are unitary (``norm="ortho"``), so discrete Parseval holds exactly.

The multiplier route multiplies the FFT by M(xi) = sum_{j=0}^{J} m_j(xi).  The
direct route integrates the rescaled kernels in t against periodic cubic
interpolants of the samples.  Both realize the same torus operator.
"""

from __future__ import annotations

import csv
import io
import math
import os
import struct
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .curves import eval_curve
from .multiplier import DEFAULT_TOL, OperatorParams, _workers, eval_multiplier
from .quadrature import GL_ORDER, QuadratureError

MAGIC = b"OSCGRID1"
_HEADER = struct.Struct("<8sIId")  # magic, d, N, L


@dataclass
class GridFunction:
    """Complex samples on the periodic grid of [-L, L)^d with N points per axis."""

    samples: np.ndarray
    L: float

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.complex128)
        shape = self.samples.shape
        if len(shape) == 0 or len(set(shape)) != 1:
            raise ValueError("samples must be an N x ... x N array")
        n = shape[0]
        if n < 2 or n & (n - 1):
            raise ValueError("N must be a power of two")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def d(self) -> int:
        return self.samples.ndim

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    def coords(self) -> np.ndarray:
        """(N, ..., N, d) array of sample positions."""
        ax = self.axis()
        return np.stack(np.meshgrid(*[ax] * self.d, indexing="ij"), axis=-1)

    def frequencies(self) -> np.ndarray:
        """(N, ..., N, d) lattice frequencies in FFT order."""
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        w = (math.pi / self.L) * k
        return np.stack(np.meshgrid(*[w] * self.d, indexing="ij"), axis=-1)

    def norm(self) -> float:
        """Discrete L^2 norm, (sum |f|^2 h^d)^{1/2}."""
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2) * self.cell_volume))

    @classmethod
    def from_function(cls, func, N: int, L: float, d: int) -> "GridFunction":
        probe = cls(np.zeros((N,) * d), L)
        return cls(func(probe.coords()), L)

    @classmethod
    def mode(cls, k, N: int, L: float) -> "GridFunction":
        """exp(i xi.x) for the lattice frequency xi = (pi/L) k."""
        k = np.asarray(k, dtype=float)
        if np.any(k < -N // 2) or np.any(k >= N // 2) or np.any(k != np.round(k)):
            raise ValueError("k must be integers in [-N/2, N/2)")
        probe = cls(np.zeros((N,) * len(k)), L)
        xi = (math.pi / L) * k
        return cls(np.exp(1j * probe.coords() @ xi), L)

    def shifted(self, shift) -> "GridFunction":
        """Cyclic shift by whole cells along each axis."""
        return GridFunction(np.roll(self.samples, tuple(shift), axis=tuple(range(self.d))), self.L)

    # --- file format ------------------------------------------------------

    def to_bytes(self) -> bytes:
        return _HEADER.pack(MAGIC, self.d, self.N, float(self.L)) + \
            self.samples.astype("<c16", copy=False).tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFunction":
        if len(data) < _HEADER.size:
            raise ValueError("truncated grid function header")
        magic, d, n, L = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError("not a grid function file")
        if (len(data) - _HEADER.size) % 16:
            raise ValueError("grid function body is not a whole number of samples")
        body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
        if body.size != n**d:
            raise ValueError(f"expected {n**d} samples, found {body.size}")
        return cls(body.reshape((n,) * d).astype(np.complex128), L)

    def save(self, path) -> None:
        _atomic_write(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "GridFunction":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def slice_csv(self, index=None) -> str:
        """CSV of a 2-d slice: axes 1 and 2 vary, the others sit at ``index`` (default N/2, x=0)."""
        if self.d < 2:
            raise ValueError("a 2-d slice needs d >= 2")
        rest = [self.N // 2] * (self.d - 2) if index is None else list(index)
        ax = self.axis()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i1", "i2", "x1", "x2", "re", "im", "abs"])
        for a in range(self.N):
            for b in range(self.N):
                v = self.samples[(a, b, *rest)]
                w.writerow([a, b, repr(float(ax[a])), repr(float(ax[b])),
                            repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v)))])
        return buf.getvalue()


def _atomic_write(path, data) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    os.chmod(tmp, 0o644)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data if isinstance(data, bytes) else data.encode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- multiplier route -----------------------------------------------------


def lattice_multiplier(params: OperatorParams, N: int, L: float, J_max: int,
                       tol: float = DEFAULT_TOL, mask=None, *, workers: int | None = None):
    """M(xi) = sum_{j=0}^{J_max} m_j(xi) on the lattice (FFT order).

    Entries outside ``mask`` are left at zero and not evaluated.
    """
    if J_max < 0:
        raise ValueError("J_max must be >= 0")
    probe = GridFunction(np.zeros((N,) * params.d), L)
    freqs = probe.frequencies().reshape(-1, params.d)
    sel = np.arange(len(freqs)) if mask is None else np.flatnonzero(np.asarray(mask).ravel())

    def total(i):
        xi = tuple(float(v) for v in freqs[i])
        return sum(eval_multiplier(params, j, xi, tol) for j in range(J_max + 1))

    workers = workers or _workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            vals = list(ex.map(total, sel))
    else:
        vals = [total(i) for i in sel]
    out = np.zeros(len(freqs), dtype=np.complex128)
    out[sel] = vals
    return out.reshape((N,) * params.d)


def spectrum_mask(f: GridFunction, drop_below: float = 0.0) -> np.ndarray:
    """Lattice frequencies where |f^| exceeds ``drop_below`` times its maximum."""
    fh = np.abs(np.fft.fftn(f.samples, norm="ortho"))
    return fh > drop_below * fh.max() if fh.max() > 0 else np.zeros(fh.shape, dtype=bool)


def apply_multiplier_table(f: GridFunction, table: np.ndarray, drop_below: float = 0.0) -> GridFunction:
    """Inverse FFT of table * f^ restricted to ``spectrum_mask(f, drop_below)``.

    Checks the Parseval bound ||out|| <= max|table| ||f|| on every call.
    """
    fh = np.fft.fftn(f.samples, norm="ortho")
    mask = spectrum_mask(f, drop_below)
    gh = np.where(mask, table * fh, 0.0)
    out = GridFunction(np.fft.ifftn(gh, norm="ortho"), f.L)
    bound = float(np.abs(table[mask]).max(initial=0.0)) * f.norm()
    if out.norm() > bound * (1.0 + 1e-12) + 1e-300:
        raise AssertionError("Parseval bound violated")
    return out


def apply_via_multiplier(f: GridFunction, params: OperatorParams, J_max: int,
                         tol: float = DEFAULT_TOL, *, drop_below: float = 0.0,
                         return_table: bool = False):
    """T f through the FFT: multiply f^ by sum_{j <= J_max} m_j at each lattice frequency.

    The multiplier is evaluated only where f^ is nonzero; ``drop_below`` > 0
    also skips coefficients below that fraction of max|f^| (useful for single
    modes, whose FFT carries rounding-level leakage).
    """
    if f.d != params.d:
        raise ValueError(f"grid dimension {f.d} does not match d = {params.d}")
    mask = spectrum_mask(f, drop_below)
    table = lattice_multiplier(params, f.N, f.L, J_max, tol, mask)
    out = apply_multiplier_table(f, table, drop_below)
    return (out, table) if return_table else out


def l2_ratio(f: GridFunction, params: OperatorParams, J_max: int, tol: float = DEFAULT_TOL,
             *, drop_below: float = 0.0) -> float:
    """||T f||_2 / ||f||_2 on the grid."""
    nf = f.norm()
    if nf == 0.0:
        raise ValueError("f must be nonzero")
    return apply_via_multiplier(f, params, J_max, tol, drop_below=drop_below).norm() / nf


def lattice_mode_near(xi, N: int):
    """Integer k and box half-width L with (pi/L) k close to ``xi``.

    The last nonzero component is matched exactly; the remaining ratios
    xi_i / xi_last are approximated by fractions with denominator below N/2.
    Returns (k, L, relative error of the other components).
    """
    xi = np.asarray(xi, dtype=float)
    nz = np.flatnonzero(xi)
    if len(nz) == 0:
        return np.zeros(len(xi), dtype=int), math.pi, 0.0
    last = nz[-1]
    best = None
    for q in range(1, N // 2):
        target = q * xi / abs(xi[last])
        k = np.round(target).astype(int)
        if np.any(k < -N // 2) or np.any(k >= N // 2):
            break
        err = float(np.max(np.abs(k - target)[nz] / np.abs(target[nz])))
        if best is None or err < best[0] - 1e-15:
            best = (err, k)
    if best is None:
        raise ValueError("N too small to place the mode")
    err, k = best
    L = math.pi * abs(k[last]) / abs(xi[last])
    return k, L, err


# --- direct route ---------------------------------------------------------


def _cubic_weights(u):
    """4-point Lagrange weights at offset u in [0, 1) for nodes -1, 0, 1, 2."""
    return ((-u * (u - 1) * (u - 2)) / 6.0, ((u + 1) * (u - 1) * (u - 2)) / 2.0,
            (-(u + 1) * u * (u - 2)) / 2.0, ((u + 1) * u * (u - 1)) / 6.0)


def shift_interpolate(samples: np.ndarray, shift, h: float) -> np.ndarray:
    """Periodic cubic interpolant of ``samples`` evaluated at x - shift."""
    out = samples
    for ax, s in enumerate(shift):
        delta = -float(s) / h
        k0 = math.floor(delta)
        u = delta - k0
        w = _cubic_weights(u)
        acc = None
        for m, wm in zip((-1, 0, 1, 2), w):
            term = wm * np.roll(out, -(k0 + m), axis=ax)
            acc = term if acc is None else acc + term
        out = acc
    return out


def _t_panels(params: OperatorParams, j: int, kmax: float, per_panel: float) -> int:
    """Panel count on s in [1/2, 2] from the kernel oscillation plus the shift speed."""
    beta = params.beta
    var = 2.0 ** (j * beta) * (0.5 ** (-beta) - 2.0 ** (-beta))
    for t in (-1.0, 1.0):
        a = eval_curve(params.curve, t * 2.0 ** (1 - j))
        b = eval_curve(params.curve, t * 2.0 ** (-1 - j))
        var += kmax * float(np.abs(a - b).sum())
    return max(4, math.ceil(var / (2.0 * math.pi * per_panel)))


def _direct_piece(f: GridFunction, params: OperatorParams, j: int, panels: int) -> np.ndarray:
    x, w = np.polynomial.legendre.leggauss(GL_ORDER)
    edges = np.linspace(0.5, 2.0, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    s = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    amp = params.cutoff.amplitude(s, float(params.alpha))
    kern = ws * amp * np.exp(1j * 2.0 ** (j * params.beta) * s ** (-params.beta))
    scale = 2.0 ** (-j)
    gp = eval_curve(params.curve, scale * s)
    gm = eval_curve(params.curve, -scale * s)
    acc = np.zeros_like(f.samples)
    for q in range(len(s)):
        if kern[q] == 0.0:
            continue
        acc += kern[q] * (shift_interpolate(f.samples, gp[q], f.h)
                          - shift_interpolate(f.samples, gm[q], f.h))
    return 2.0 ** (j * params.alpha) * acc


def apply_direct(f: GridFunction, params: OperatorParams, J_max: int, tol: float = 1e-6, *,
                 per_panel: float = 1.0, max_panels: int = 4096, return_info: bool = False):
    """T f by quadrature in t of the rescaled kernels against shifted interpolants.

    T_j f(x) = 2^{j alpha} int theta(|t|) t^{-1} |t|^{-alpha} e^{i 2^{j beta} |t|^{-beta}}
               f(x - gamma(2^{-j} t)) dt,
    with f between grid points given by periodic 4-point (cubic) Lagrange
    interpolation.  Each piece is computed with n and 2n Gauss-Legendre
    panels; the panel count doubles until the two agree to ``tol`` relative
    to ||f||_inf.  Cost is O(N^d x nodes) per piece.
    """
    if f.d != params.d:
        raise ValueError(f"grid dimension {f.d} does not match d = {params.d}")
    if J_max < 0:
        raise ValueError("J_max must be >= 0")
    kmax = math.pi / f.L * (f.N / 2) * math.sqrt(f.d)
    fmax = float(np.abs(f.samples).max(initial=0.0))
    total = np.zeros_like(f.samples)
    info = []
    for j in range(J_max + 1):
        n = _t_panels(params, j, kmax, per_panel)
        coarse = _direct_piece(f, params, j, n)
        err = math.inf
        while True:
            if 2 * n > max_panels:
                raise QuadratureError(f"direct quadrature for j={j} exceeded {max_panels} panels",
                                      estimate=err, panels=n)
            fine = _direct_piece(f, params, j, 2 * n)
            err = float(np.abs(fine - coarse).max(initial=0.0))
            n *= 2
            if err <= tol * max(fmax, 1e-300):
                break
            coarse = fine
        total += fine
        info.append({"j": j, "panels": n, "error": err})
    out = GridFunction(total, f.L)
    return (out, info) if return_info else out


# --- weak-type diagnostics ------------------------------------------------


def distribution_function(g: GridFunction, lambdas) -> list:
    """Cell-counting measure of {x : |g(x)| > lambda} for each lambda."""
    lams = [float(x) for x in lambdas]
    if any(x <= 0 for x in lams):
        raise ValueError("lambdas must be positive")
    if any(b < a for a, b in zip(lams, lams[1:])):
        raise ValueError("lambdas must be sorted ascending")
    mag = np.sort(np.abs(g.samples).ravel())
    counts = len(mag) - np.searchsorted(mag, lams, side="right")
    return [float(c) * g.cell_volume for c in counts]
