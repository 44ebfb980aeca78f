"""Log2 decay plots rendered to files with matplotlib (Agg backend)."""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "oscurve"
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed metadata keeps SVG output byte-identical between runs.
_METADATA = {"svg": {"Date": None, "Creator": None}, "png": {"Software": None},
             "pdf": {"CreationDate": None, "Creator": None, "Producer": None}}


def decay_figure(xs, ys, fit=None, *, xlabel="j", ylabel="log2 sup", title=None,
                 reference=None):
    """Figure of log2(ys) against xs with the fitted line.

    Parameters
    ----------
    xs, ys : sequences
        Data; nonpositive ys are dropped.
    fit : DecayFitResult or dict, optional
        Adds the line ``intercept + slope * x``.
    reference : float, optional
        Slope of a dashed reference line through the first point.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    keep = y > 0
    x, ly = x[keep], np.log2(y[keep])
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(x, ly, "o", color="k", ms=4, label="data")
    if fit is not None:
        f = fit if isinstance(fit, dict) else fit.to_dict()
        ax.plot(x, f["intercept"] + f["slope"] * x, "-", color="C0",
                label=f"fit slope {f['slope']:.4f}")
    if reference is not None and len(x):
        ax.plot(x, ly[0] + reference * (x - x[0]), "--", color="C3", lw=1,
                label=f"slope {reference:.4f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def save_figure(fig, path) -> None:
    """Write ``fig`` atomically; the format follows the file suffix (default svg)."""
    path = os.fspath(path)
    fmt = os.path.splitext(path)[1].lstrip(".").lower() or "svg"
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix="." + fmt)
    os.close(fd)
    os.chmod(tmp, 0o644)
    try:
        fig.savefig(tmp, format=fmt, metadata=_METADATA.get(fmt))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def plot_decay(path, xs, ys, fit=None, **kwargs) -> None:
    """``decay_figure`` followed by ``save_figure``."""
    save_figure(decay_figure(xs, ys, fit, **kwargs), path)
