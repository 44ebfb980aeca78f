"""Command-line driver: ``oscurve <subcommand> [flags]``.

Exit codes: 0 criterion met (or no criterion), 1 criterion failed, 2 usage
or configuration error, 3 numerical failure.  Outputs are written through a
temporary file and renamed, so a failed run never leaves a partial file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import shlex
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import experiments as ex
from .curves import format_curve, parse_curve
from .multiplier import (DEFAULT_TOL, ORTHO_TOL, OperatorParams, XiGrid, samples_to_csv,
                         samples_to_json, scan_sup)
from .operator import GridFunction, _atomic_write
from .quadrature import QuadratureError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid command-line configuration (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# --- value parsers ----------------------------------------------------------


def parse_range(text: str) -> tuple:
    """``"4..12"`` -> (4, 12); ``"7"`` -> (7, 7)."""
    lo, sep, hi = str(text).partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError:
        raise ConfigError(f"bad integer range {text!r}; expected a..b") from None
    if b < a:
        raise ConfigError(f"empty range {text!r}")
    return a, b


def format_range(r) -> str:
    return f"{r[0]}..{r[1]}"


def parse_grid(text: str) -> XiGrid:
    """``"shells=K,dirs=R,seed=S,origin=0|1"``; any key may be omitted.

    ``shells=K`` keeps K shells centred on 0, m = -(K-1)//2 .. K//2 (so
    ``shells=1`` is the single shell m = 0); ``shells=a:b`` gives m = a..b.
    """
    base = XiGrid()
    kw = {}
    for item in filter(None, (p.strip() for p in str(text).split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"bad grid item {item!r}")
        try:
            if key == "shells":
                if ":" in val:
                    a, b = (int(v) for v in val.split(":"))
                else:
                    k = int(val)
                    if k < 1:
                        raise ConfigError("shells must be >= 1")
                    a, b = -((k - 1) // 2), k // 2
                if b < a:
                    raise ConfigError(f"empty shell range {val!r}")
                kw["shells"] = tuple(range(a, b + 1))
            elif key == "dirs":
                kw["n_random"] = int(val)
                if kw["n_random"] < 0:
                    raise ConfigError("dirs must be >= 0")
            elif key == "seed":
                kw["seed"] = int(val)
            elif key == "origin":
                kw["include_origin"] = bool(int(val))
            else:
                raise ConfigError(f"unknown grid key {key!r}")
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"bad grid value {item!r}") from None
    return XiGrid(**{**asdict(base), **kw})


def format_grid(g: XiGrid) -> str:
    return (f"shells={g.shells[0]}:{g.shells[-1]},dirs={g.n_random},seed={g.seed},"
            f"origin={int(g.include_origin)}")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved run configuration.

    ``options`` holds the subcommand-specific settings as sorted
    (name, canonical text) pairs.  ``to_argv`` and ``from_argv`` round-trip
    exactly, and ``canonical`` is the shell-quoted form of ``to_argv``.
    """

    subcommand: str
    alpha: float | None
    beta: float | None
    curve: str | None
    tol: float
    seed: int
    fmt: str
    out: str | None = None
    plot: str | None = None
    options: tuple = field(default_factory=tuple)

    def option(self, name: str):
        return dict(self.options)[name]

    def to_argv(self) -> list:
        argv = [self.subcommand]
        if self.alpha is not None:
            argv += ["--alpha", repr(self.alpha), "--beta", repr(self.beta), "--curve", self.curve]
        argv += ["--tol", repr(self.tol), "--seed", str(self.seed), "--format", self.fmt]
        for name, val in self.options:
            argv.append(f"--{name}={val}")  # '=' keeps values like -4..2 from reading as flags
        if self.out is not None:
            argv += ["--out", self.out]
        if self.plot is not None:
            argv += ["--plot", self.plot]
        return argv

    def canonical(self) -> str:
        return " ".join(shlex.quote(a) for a in self.to_argv())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["options"] = dict(self.options)
        d["command"] = self.canonical()
        return d

    @classmethod
    def from_argv(cls, argv) -> "ExperimentConfig":
        return _resolve(build_parser().parse_args(list(argv)))

    def params(self) -> OperatorParams:
        return OperatorParams(self.alpha, self.beta, parse_curve(self.curve))


# Each entry: flag name, default, parser to canonical text.
_OPTIONS = {
    "multiplier-scan": {"j": ("2..10", lambda v: format_range(parse_range(v))),
                        "grid": ("", lambda v: format_grid(parse_grid(v)))},
    "decay-fit": {"j": ("4..12", lambda v: format_range(parse_range(v))),
                  "grid": ("", lambda v: format_grid(parse_grid(v)))},
    "ortho-scan": {"j": ("4", lambda v: str(int(v))),
                   "jp": ("6..14", lambda v: format_range(parse_range(v))),
                   "grid": ("", lambda v: format_grid(parse_grid(v)))},
    "sharpness": {"j": ("4..12", lambda v: format_range(parse_range(v))),
                  "box": ("4.0", lambda v: repr(float(v))),
                  "search-budget": ("8000", lambda v: str(int(v))),
                  "c": ("", lambda v: ",".join(repr(x) for x in _floats(v)) if v else "")},
    "vdc-check": {"n": ("1", lambda v: str(int(v))),
                  "trials": ("50", lambda v: str(int(v))),
                  "mu-bound": ("10.0", lambda v: repr(float(v))),
                  "lambdas": ("8..20", lambda v: format_range(parse_range(v)))},
    "translation-check": {"j": ("-4", lambda v: str(int(v))),
                          "ell": ("5..12", lambda v: format_range(parse_range(v))),
                          "direction": ("", lambda v: ",".join(repr(x) for x in _floats(v))
                                        if v else ""),
                          "grid": ("", lambda v: format_grid(parse_grid(v)))},
    "apply": {"mode": ("crossval", str),
              "grid": ("", lambda v: str(int(v)) if v else ""),
              "jmax": ("", lambda v: str(int(v)) if v else ""),
              "L": ("", lambda v: repr(float(v)) if v else ""),
              "input": ("", str),
              "save": ("", str)},
}

_HELP = {
    "multiplier-scan": "grid sup of |m_j| for each j (one CSV row per j)",
    "decay-fit": "log2-slope of the grid sup of |m_j|",
    "ortho-scan": "decay of sup |m_j m_j'| in |j' - j|",
    "sharpness": "|m_j| along the numerically located sharpness path",
    "vdc-check": "uniform decay of int e^{i lam (t^-1 + mu_1 t^2 + ...)} over random mu",
    "translation-check": "decay in ell of sup |m_{j+ell}(xi)(e^{i x0.xi} - 1)|",
    "apply": "apply the operator on a periodic grid (crossval, unbounded or weak mode)",
}

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oscurve", description="Numerical experiments for strongly singular "
                     "oscillatory integrals along curves.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, opts in _OPTIONS.items():
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        if name != "vdc-check":
            # multiplier-scan has no default experiment, so both exponents are required there.
            req = name == "multiplier-scan"
            p.add_argument("--alpha", type=float, required=req, default=None)
            p.add_argument("--beta", type=float, required=req, default=None)
            p.add_argument("--curve", default="a=1,2", help='curve spec, e.g. "a=1,2"')
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", dest="fmt", choices=("json", "csv"), default=None)
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--plot", default=None, help="figure file; format from suffix")
        for opt, (default, _) in opts.items():
            p.add_argument("--" + opt, dest=opt.replace("-", "_"), default=default,
                           help=f"default {default!r}; write --{opt}=VALUE for values "
                                "starting with '-'" if default else None)
    return parser


def _default_tol(sub: str) -> float:
    return ORTHO_TOL if sub == "ortho-scan" else DEFAULT_TOL


def _resolve(ns) -> ExperimentConfig:
    sub = ns.subcommand
    opts = []
    for opt, (_, canon) in _OPTIONS[sub].items():
        raw = getattr(ns, opt.replace("-", "_"))
        if opt == "grid" and sub != "apply" and "seed=" not in raw:
            # the grid inherits --seed unless it names its own
            raw = ",".join(filter(None, [raw, f"seed={int(ns.seed)}"]))
        try:
            opts.append((opt, canon(raw)))
        except (TypeError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"bad value for --{opt}: {raw!r}") from None
    opts = tuple(sorted(opts))
    alpha = beta = curve = None
    if sub != "vdc-check":
        mode = dict(opts).get("mode")
        alpha = ns.alpha if ns.alpha is not None else (0.5 if mode == "unbounded" else 0.0)
        beta = ns.beta if ns.beta is not None else 1.0
        try:
            curve = format_curve(parse_curve(ns.curve))
            OperatorParams(alpha, beta, parse_curve(curve))
        except ValueError as err:
            raise ConfigError(str(err)) from None
    if sub == "apply" and dict(opts)["mode"] not in ("crossval", "unbounded", "weak"):
        raise ConfigError("--mode must be crossval, unbounded or weak")
    tol = _default_tol(sub) if ns.tol is None else float(ns.tol)
    if not (tol > 0 and math.isfinite(tol)):
        raise ConfigError("--tol must be positive")
    fmt = ns.fmt or ("csv" if sub == "multiplier-scan" else "json")
    return ExperimentConfig(sub, alpha, beta, curve, tol, int(ns.seed), fmt, ns.out, ns.plot, opts)


# --- runners ------------------------------------------------------------------


def _grid(cfg: ExperimentConfig) -> XiGrid:
    return parse_grid(cfg.option("grid"))


def _js(cfg, name="j"):
    a, b = parse_range(cfg.option(name))
    return list(range(a, b + 1))


def _series_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def run_multiplier_scan(cfg):
    params = cfg.params()
    grid = _grid(cfg)
    best = [scan_sup(params, j, grid, cfg.tol).best for j in _js(cfg)]
    result = {"rows": json.loads(samples_to_json(best, params.d))}
    text = samples_to_csv(best, params.d) if cfg.fmt == "csv" else None
    series = ([s.j for s in best], [s.abs for s in best], None, "log2 sup |m_j|", "j")
    return result, text, series


def run_decay_fit(cfg):
    params = cfg.params()
    res = ex.dyadic_decay(params, _js(cfg), _grid(cfg), cfg.tol)
    rows = [(s["j"], s["sup"], *s["argmax"], s["shell"]) for s in res["scans"]]
    header = ["j", "sup", *[f"xi_{k + 1}" for k in range(params.d)], "shell"]
    return res, _series_csv(header, rows), (res["js"], res["sups"], res["fit"],
                                             "log2 sup |m_j|", "j")


def run_ortho_scan(cfg):
    params = cfg.params()
    j = int(cfg.option("j"))
    res = ex.orthogonality(params, j, _js(cfg, "jp"), _grid(cfg), cfg.tol)
    rows = [(s["jp"], s["sup"], s["upper"], s["floor"], int(s["resolved"])) for s in res["scans"]]
    gaps = [abs(jp - j) for jp in res["jps"]]
    return res, _series_csv(["jp", "sup", "upper", "floor", "resolved"], rows), \
        (gaps, res["uppers"], res["fit"], "log2 upper bound of sup |m_j m_j'|", "|j' - j|")


def run_sharpness(cfg):
    params = cfg.params()
    c = cfg.option("c")
    out = ex.sharpness(params, _js(cfg), _floats(c) if c else None, box=float(cfg.option("box")),
                       search_budget=int(cfg.option("search-budget")), tol=cfg.tol)
    rows = [(j, v, n) for j, v, n in zip(out["js"], out["values"], out["normalized"])]
    return out, _series_csv(["j", "abs", "normalized"], rows), \
        (out["js"], out["values"], out["fit"], "log2 |m_j| on the path", "j")


def run_vdc_check(cfg):
    a, b = parse_range(cfg.option("lambdas"))
    res = ex.uniformity(ex.vdc_exponents(int(cfg.option("n"))),
                        float(cfg.option("mu-bound")), int(cfg.option("trials")),
                        range(a, b + 1), seed=cfg.seed, tol=cfg.tol)
    rows = list(zip(res["lambdas"], res["per_lambda_max"], res["per_lambda_max_ratio"]))
    return res, _series_csv(["lambda", "max_abs", "max_ratio"], rows), \
        (np.log2(res["lambdas"]).tolist(), res["per_lambda_max"], res["fit"],
         "log2 max |I(lambda)|", "log2 lambda")


def run_translation_check(cfg):
    params = cfg.params()
    direction = cfg.option("direction")
    res = ex.translation(params, int(cfg.option("j")), _js(cfg, "ell"),
                         _floats(direction) if direction else None, _grid(cfg), cfg.tol)
    rows = [(r["ell"], r["sup"], r["skipped_bound"]) for r in res["runs"]]
    return res, _series_csv(["ell", "sup", "skipped_bound"], rows), \
        (res["ells"], res["sups"], res["fit"], "log2 sup", "ell")


def run_apply(cfg):
    params = cfg.params()
    mode = cfg.option("mode")
    kw = {}
    if cfg.option("grid"):
        kw["N"] = int(cfg.option("grid"))
    if cfg.option("jmax"):
        if mode == "unbounded":
            raise ConfigError("--jmax does not apply to --mode unbounded")
        kw["J_max"] = int(cfg.option("jmax"))
    if cfg.option("L"):
        if mode == "unbounded":
            raise ConfigError("--L does not apply to --mode unbounded (L is chosen by placement)")
        kw["L"] = float(cfg.option("L"))
    if cfg.option("input") and mode != "crossval":
        raise ConfigError("--input is only used with --mode crossval")
    if cfg.option("save") and mode != "crossval":
        raise ConfigError("--save is only used with --mode crossval")
    if mode == "crossval":
        if cfg.option("input"):
            if "N" in kw or "L" in kw:
                raise ConfigError("--grid and --L are taken from the --input file")
            try:
                kw["f"] = GridFunction.load(cfg.option("input"))
            except ValueError as err:
                raise ConfigError(f"bad grid file: {err}") from None
        res, out_f = ex.crossval(params, tol=cfg.tol, return_output=True, **kw)
        if cfg.option("save"):
            out_f.save(cfg.option("save"))
    elif mode == "unbounded":
        res = ex.unbounded(params, tol=cfg.tol, **kw)
    else:
        res = ex.weak_type(params, tol=cfg.tol, **kw)
    scalars = {k: v for k, v in sorted(res.items())
               if isinstance(v, (int, float, bool, str)) or v is None}
    text = _series_csv(list(scalars), [list(scalars.values())])
    series = None
    if mode == "weak":
        m = max(res["members"], key=lambda m: m["sup"])
        series = (np.log2(m["lambdas"]).tolist(), m["lambda_measure"], None,
                  "log2 lambda |{|Tf| > lambda}|", "log2 lambda")
    return res, text, series


RUNNERS = {"multiplier-scan": run_multiplier_scan, "decay-fit": run_decay_fit,
           "ortho-scan": run_ortho_scan, "sharpness": run_sharpness,
           "vdc-check": run_vdc_check, "translation-check": run_translation_check,
           "apply": run_apply}


# --- output -------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def render_json(cfg: ExperimentConfig, result: dict) -> str:
    doc = {"config": cfg.to_dict(), "result": result}
    return json.dumps(_jsonable(doc), sort_keys=True, indent=1) + "\n"


def _emit(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        _atomic_write(path, text)


def run(cfg: ExperimentConfig) -> int:
    """Run a resolved configuration, write its outputs, and return the exit code."""
    result, csv_text, series = RUNNERS[cfg.subcommand](cfg)
    ok = result.get("pass")
    text = render_json(cfg, result) if cfg.fmt == "json" else csv_text
    if cfg.plot is not None:
        if series is None:
            raise ConfigError(f"{cfg.subcommand} in this mode has no plot")
        from .plotting import plot_decay

        xs, ys, fit, ylabel, xlabel = series
        plot_decay(cfg.plot, xs, ys, fit, xlabel=xlabel, ylabel=ylabel, title=cfg.subcommand)
    _emit(text, cfg.out)
    return EXIT_FAIL if ok is False else EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = ExperimentConfig.from_argv(argv)
        return run(cfg)
    except ConfigError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, ArithmeticError, AssertionError, ValueError) as err:
        print(f"numerical failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
