import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscurve.cli import (ConfigError, ExperimentConfig, format_grid, main, parse_grid,
                         parse_range)
from oscurve.operator import GridFunction


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# --- value parsing --------------------------------------------------------------------

def test_parse_range():
    assert parse_range("2..10") == (2, 10)
    assert parse_range("-4") == (-4, -4)
    for bad in ["a..b", "5..2", "1...3"]:
        with pytest.raises(ConfigError):
            parse_range(bad)


def test_parse_grid():
    assert parse_grid("shells=1").shells == (0,)
    assert parse_grid("shells=4").shells == (-1, 0, 1, 2)
    assert parse_grid("shells=-2:3").shells == tuple(range(-2, 4))
    g = parse_grid("dirs=3,seed=9,origin=0")
    assert (g.n_random, g.seed, g.include_origin) == (3, 9, False)
    assert parse_grid(format_grid(g)) == g
    for bad in ["shells=0", "dirs=-1", "foo=1", "shells", "seed=x"]:
        with pytest.raises(ConfigError):
            parse_grid(bad)


# --- configuration --------------------------------------------------------------------

_argvs = st.one_of(
    st.builds(lambda a, b, j, s: ["multiplier-scan", "--alpha", a, "--beta", b, "--j=" + j,
                                  "--grid", s],
              st.sampled_from(["0", "0.5", "1e-1"]), st.sampled_from(["1", "2.0", "0.7"]),
              st.sampled_from(["2..10", "4", "-3..2"]),
              st.sampled_from(["shells=1", "shells=3,dirs=2", "seed=4", ""])),
    st.builds(lambda n, t, s: ["vdc-check", "--n", n, "--trials", t, "--seed", s],
              st.sampled_from(["1", "2"]), st.sampled_from(["5", "50"]),
              st.sampled_from(["0", "17"])),
    st.builds(lambda m, g: ["apply", "--mode", m, "--grid", g],
              st.sampled_from(["crossval", "weak"]), st.sampled_from(["16", "32"])),
    st.builds(lambda c, e: ["translation-check", "--curve", c, "--ell", e,
                            "--direction=-1,2", "--j=-5"],
              st.sampled_from(["a=1,2", "a=1,3; sign=odd"]), st.sampled_from(["5..12", "6..7"])),
)


@settings(max_examples=100, deadline=None)
@given(argv=_argvs)
def test_config_round_trip(argv):
    cfg = ExperimentConfig.from_argv(argv)
    again = ExperimentConfig.from_argv(cfg.to_argv())
    assert again == cfg
    assert again.canonical() == cfg.canonical()


def test_seed_determines_grid():
    a = ExperimentConfig.from_argv(["decay-fit", "--seed", "5"])
    assert "seed=5" in a.option("grid")
    b = ExperimentConfig.from_argv(["decay-fit", "--seed", "5", "--grid", "seed=2"])
    assert "seed=2" in b.option("grid")


# --- exit codes ------------------------------------------------------------------------

def test_missing_beta_is_usage_error(capsys):
    code, _, err = run(["multiplier-scan", "--alpha", "0", "--curve", "a=1,2"], capsys)
    assert code == 2 and "--beta" in err


@pytest.mark.parametrize("argv", [
    ["no-such-command"],
    ["decay-fit", "--curve", "a=2,1"],
    ["decay-fit", "--j", "9..3"],
    ["decay-fit", "--tol", "-1"],
    ["apply", "--mode", "bogus"],
    ["apply", "--mode", "unbounded", "--jmax", "3"],
    ["multiplier-scan", "--alpha", "0", "--beta", "0"],
])
def test_usage_errors(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_numerical_failure_leaves_no_file(tmp_path, capsys):
    out = tmp_path / "scan.csv"
    code, _, err = run(["multiplier-scan", "--alpha", "0", "--beta", "1", "--j", "8",
                        "--tol", "1e-16", "--out", str(out)], capsys)
    assert code == 3 and "QuadratureError" in err
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_criterion_failure_exit_one(capsys):
    code, out, _ = run(["sharpness", "--c", "0.01,0.01", "--j", "4..8"], capsys)
    assert code == 1
    assert json.loads(out)["result"]["pass"] is False


# --- subcommands ------------------------------------------------------------------------------

def test_multiplier_scan_example(capsys):
    code, out, _ = run(["multiplier-scan", "--alpha", "0", "--beta", "1", "--curve", "a=1,2",
                        "--j", "2..10"], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["j", "xi_1", "xi_2", "re", "im", "abs", "shell", "tol"]
    assert [int(r[0]) for r in rows[1:]] == list(range(2, 11))


def test_multiplier_scan_minimal_grid(capsys):
    code, out, _ = run(["multiplier-scan", "--alpha", "0", "--beta", "1", "--j", "2..5",
                        "--grid", "shells=1"], capsys)
    assert code == 0
    assert len(out.strip().splitlines()) == 1 + 4


def test_json_and_plot_outputs_are_deterministic(tmp_path, capsys):
    out, fig = tmp_path / "r.json", tmp_path / "r.svg"
    argv = ["ortho-scan", "--jp", "6..8", "--grid", "shells=5,dirs=2", "--out", str(out),
            "--plot", str(fig)]
    assert run(argv, capsys)[0] == 0
    first, first_fig = out.read_bytes(), fig.read_bytes()
    assert run(argv, capsys)[0] == 0
    assert out.read_bytes() == first
    assert fig.read_bytes() == first_fig
    doc = json.loads(first)
    assert doc["config"]["command"] == ExperimentConfig.from_argv(argv).canonical()
    assert doc["result"]["delta"] > 0
    assert first_fig.lstrip().startswith(b"<?xml")


def test_decay_fit_reduced_window(capsys):
    code, out, _ = run(["decay-fit", "--j", "4..8", "--grid", "shells=7,dirs=4"], capsys)
    res = json.loads(out)["result"]
    assert code == (0 if res["pass"] else 1)
    assert res["fit"]["slope"] <= -1 / 3 + 0.05


def test_vdc_check_reduced_sweep(capsys):
    code, out, _ = run(["vdc-check", "--n", "1", "--trials", "50", "--lambdas", "8..12"],
                       capsys)
    assert code == 0
    res = json.loads(out)["result"]
    assert "max_ratio" in res and "worst_case" in res


def test_translation_check_csv(capsys):
    code, out, _ = run(["translation-check", "--ell", "5..8", "--grid", "shells=5,dirs=2",
                        "--format", "csv"], capsys)
    assert code in (0, 1)
    assert out.splitlines()[0] == "ell,sup,skipped_bound"
    assert len(out.splitlines()) == 5


def test_apply_crossval_example(capsys):
    code, out, _ = run(["apply", "--grid", "32", "--mode", "crossval"], capsys)
    assert code == 0
    assert json.loads(out)["result"]["relative_error"] <= 1e-3


def test_apply_crossval_input_and_save(tmp_path, capsys):
    src, dst = tmp_path / "in.grid", tmp_path / "out.grid"
    GridFunction.from_function(lambda x: np.exp(-(x**2).sum(-1) / 1.28), 32, np.pi, 2).save(src)
    code, out, _ = run(["apply", "--mode", "crossval", "--input", str(src), "--save", str(dst),
                        "--jmax", "4"], capsys)
    assert code == 0
    g = GridFunction.load(dst)
    assert g.N == 32 and g.L == np.pi
    assert json.loads(out)["result"]["N"] == 32


def test_apply_weak_reports_without_criterion(capsys):
    code, out, _ = run(["apply", "--mode", "weak", "--grid", "16", "--jmax", "3"], capsys)
    assert code == 0
    res = json.loads(out)["result"]
    assert res["pass"] is None and len(res["members"]) == 3


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "oscurve.cli", "multiplier-scan", "--alpha", "0"],
                       capture_output=True, text=True)
    assert r.returncode == 2
