import csv
import hashlib
import math

import pytest
from hypothesis import given, settings, strategies as st

from denjoylab import acceptance, cli
from denjoylab.cli import EXPERIMENTS, ExperimentConfig, main
from denjoylab.errors import ConfigError


def _manifest(d):
    out = {}
    for line in (d / "manifest.txt").read_text().splitlines():
        if line.startswith("#"):
            continue
        k, v = line.split("=", 1)
        out[k] = v.split("  #")[0]
    return out


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_urn_exact_example(tmp_path):
    assert main(["run", "urn-exact", "--set", "d=2", "--set", "k=10", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "arrival.csv")
    assert rows[0] == ["n1", "n2", "probability"] and len(rows) == 12
    assert all(float(r[2]) == pytest.approx(1 / 11, abs=1e-15) for r in rows[1:])
    m = _manifest(tmp_path)
    assert m["experiment"] == "urn-exact" and m["k"] == "10" and m["d"] == "2" and m["seed"] == "0"
    digest = hashlib.sha256((tmp_path / "arrival.csv").read_bytes()).hexdigest()
    assert m["artifact.arrival.csv"] == "sha256:" + digest
    assert m["status"] == "ok"


def test_lyapunov_rotation_row(tmp_path):
    assert main(["run", "lyapunov", "--set", "count=50", "--set", "length=50", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "lyapunov.csv")
    b = dict(zip(rows[0], rows[2]))
    assert b["mode"] == "birkhoff" and abs(float(b["value"])) <= 2 * float(b["stderr"])


def test_spring_hunt_affine_oracle(tmp_path):
    assert main(["run", "spring-hunt", "--set", "kind=affine", "--set", "trials=100",
                 "--set", "max_len=60", "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "certificates.csv")) - 1 >= 100
    assert _manifest(tmp_path)["check.ifs_oracle"] == "pass"


@pytest.mark.parametrize("argv", [
    ["run", "urn-exact", "--set", "bogus=1"],
    ["run", "urn-exact", "--set", "k=ten"],
    ["run", "no-such-experiment"],
    ["run"],
    ["run", "urn-exact", "--set", "k"],
    ["run", "lyapunov", "--set", "scenario=hyperbolic"],
    ["run", "urn-exact", "--set", "k=500"],
])
def test_config_errors(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 3
    assert "configuration error" in capsys.readouterr().err


def test_unknown_key_is_named(capsys):
    main(["run", "kopell-check", "--set", "bq=0.5"])
    assert "bq" in capsys.readouterr().err


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# a comment\nexperiment=urn-sample\nseed=5\nlength=7\ncount=3\ndrift_paths=0\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--set", "count=4", "--seed", "9", "--out", str(out)]) == 0
    m = _manifest(out)
    assert (m["seed"], m["length"], m["count"]) == ("9", "7", "4")
    assert len(_rows(out / "words.csv")) == 5


def test_resolve_rejects_bad_seed():
    with pytest.raises(ConfigError):
        ExperimentConfig.resolve("urn-exact", "seed=-1")


def test_check_failure_exit_2(tmp_path):
    assert main(["run", "interval-escape", "--set", "iters=5", "--out", str(tmp_path)]) == 2
    assert _manifest(tmp_path)["status"] == "fail"


def test_nonfinite_output_fails(tmp_path, monkeypatch):
    def bad(run):
        run.table("x.csv", ["a"], [(math.nan,)])
    monkeypatch.setitem(EXPERIMENTS, "urn-exact", cli.Experiment("urn-exact", bad, {}, ""))
    assert main(["run", "urn-exact", "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "x.csv").exists()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.sampled_from(["urn", "bernoulli"]))
def test_reruns_byte_identical(tmp_path_factory, seed, law):
    a, b = tmp_path_factory.mktemp("a"), tmp_path_factory.mktemp("b")
    args = ["run", "urn-sample", "--set", "length=20", "--set", "count=5", "--set", "drift_paths=3",
            "--set", f"law={law}", "--seed", str(seed)]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    for f in ("words.csv", "final_states.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


SMALL = {
    "denjoy-build": ["R=60", "samples=200"],
    "pixton-build": ["R=20", "samples=200"],
    "holder-scan": ["values=4,16", "samples=200", "expect=decreasing"],
    "urn-exact": ["d=3", "k=6"],
    "urn-sample": ["count=5", "length=30", "drift_paths=20"],
    "ell-tau": ["count=20", "length=40", "R=120"],
    "schwartz-hunt": ["trials=10"],
    "spring-hunt": ["trials=10"],
    "stationary-solve": ["scenario=rotation", "initial=bump", "tol=1e-3"],
    "uniqueness": ["scenario=rotation", "first=lebesgue", "tol=1e-3"],
    "dirac-collapse": ["count=10", "length=40", "solve_tol=1e-4"],
    "contraction-trace": ["count=10", "length=50"],
    "lyapunov": ["scenario=psl", "count=50", "length=200", "solve_tol=1e-4"],
    "interval-escape": ["iters=2000"],
    "conjugate-cdf": ["solve_tol=1e-4"],
    "kopell-check": ["samples=200"],
    "cano-check": ["n_max=50"],
    "tangente-check": ["R=60", "n_max=40", "samples=200"],
}


def test_small_covers_registry():
    assert set(SMALL) == set(EXPERIMENTS) and len(EXPERIMENTS) == 18


@pytest.mark.parametrize("name", sorted(SMALL))
def test_every_experiment_runs(name, tmp_path):
    argv = ["run", name, "--out", str(tmp_path)]
    for s in SMALL[name]:
        argv += ["--set", s]
    assert main(argv) == 0
    m = _manifest(tmp_path)
    arts = [k.split(".", 1)[1] for k in m if k.startswith("artifact.")]
    assert arts
    for f in arts:
        for row in _rows(tmp_path / f)[1:]:
            for cell in row:
                try:
                    v = float(cell)
                except ValueError:
                    continue
                assert math.isfinite(v)


def test_plots_flag(tmp_path):
    pytest.importorskip("matplotlib")
    assert main(["run", "interval-escape", "--set", "iters=200", "--set", "threshold=1.0",
                 "--plots", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "escape.svg").read_text().lstrip().startswith("<?xml")
    assert "artifact.escape.svg" in _manifest(tmp_path)


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in EXPERIMENTS)


def test_suite_tag_and_summary(tmp_path, capsys):
    assert main(["suite", "maps", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS]  2" in out and "1/1 criteria passed" in out
    rows = _rows(tmp_path / "suite.csv")
    assert rows[1][:4] == ["2", "Yoccoz equivariance and tangency", "maps", "1"]


def test_suite_unknown_tag():
    assert main(["suite", "nonsense"]) == 3


def test_suite_corrupted_builtin(monkeypatch, capsys):
    real = acceptance.yoccoz_transfer_deriv
    monkeypatch.setattr(acceptance, "yoccoz_transfer_deriv", lambda a, b, x: -real(a, b, x))
    assert main(["suite", "maps"]) == 2
    out = capsys.readouterr().out
    assert "[FAIL]  2 Yoccoz" in out and "tangency<1e-4" in out
