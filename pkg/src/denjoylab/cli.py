"""Command line runner.

    denjoylab run EXPERIMENT [--config PATH] [--set KEY=VALUE ...] [--seed N] [--out DIR] [--plots]
    denjoylab suite [TAG] [--out DIR]
    denjoylab list

Config files are flat ``key=value`` lines (``#`` starts a comment).  The
keys ``experiment``, ``seed`` and ``out`` are recognised there too; every
other key must be a parameter of the experiment.  Precedence: defaults <
config file < --set < --seed/--out.

Every run writes its CSV tables and ``manifest.txt`` (resolved config,
check verdicts and sha256 of each table) into the output directory.
Exit status: 0 success, 2 a check failed, 3 configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import itertools
import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DomainError, PreconditionError, TruncationError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 2, 3


class CheckFailed(Exception):
    pass


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass
class Experiment:
    name: str
    fn: object
    defaults: dict
    doc: str


EXPERIMENTS: dict[str, Experiment] = {}


def experiment(name, **defaults):
    def deco(fn):
        EXPERIMENTS[name] = Experiment(name, fn, defaults, (fn.__doc__ or "").strip())
        return fn
    return deco


def _coerce(key, raw, default):
    """Parse ``raw`` with the type of the default value."""
    if not isinstance(raw, str):
        return raw
    s = raw.strip()
    try:
        if isinstance(default, bool):
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            v = float(s)
            if not math.isfinite(v):
                raise ValueError(s)
            return v
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return s


def parse_kv_lines(text, source="config"):
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = 0
    out: str = "out"

    @classmethod
    def resolve(cls, name=None, config_text=None, sets=(), seed=None, out=None):
        raw = parse_kv_lines(config_text) if config_text else {}
        for s in sets:
            if "=" not in s:
                raise ConfigError(f"--set expects KEY=VALUE, got {s!r}")
            k, v = s.split("=", 1)
            raw[k.strip()] = v.strip()
        name = name or raw.pop("experiment", None)
        raw.pop("experiment", None)
        if name is None:
            raise ConfigError("experiment: no experiment given")
        if name not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown experiment {name!r}")
        seed_raw = raw.pop("seed", 0)
        out_raw = raw.pop("out", "out")
        seed = _coerce("seed", seed_raw, 0) if seed is None else int(seed)
        if not 0 <= seed < 1 << 64:
            raise ConfigError("seed: must be a 64-bit unsigned integer")
        out = out_raw if out is None else out
        defaults = EXPERIMENTS[name].defaults
        unknown = sorted(set(raw) - set(defaults))
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown key for {name} (known: {', '.join(sorted(defaults))})")
        params = {k: _coerce(k, raw.get(k, v), v) for k, v in defaults.items()}
        return cls(name, params, seed, str(out))


# ---------------------------------------------------------------------------
# run context: tables, checks, manifest
# ---------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return str(v)


@dataclass
class Run:
    config: ExperimentConfig
    plots: bool = False
    tables: dict = field(default_factory=dict)      # file name -> text
    checks: dict = field(default_factory=dict)      # name -> (bool, detail)
    results: dict = field(default_factory=dict)
    figures: list = field(default_factory=list)

    @property
    def p(self):
        return self.config.params

    @property
    def seed(self):
        return self.config.seed

    def table(self, fname, header, rows):
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for i, r in enumerate(rows):
            if len(r) != len(header):
                raise ValueError(f"{fname}: row {i} has {len(r)} cells for {len(header)} columns")
            for h, v in zip(header, r):
                if isinstance(v, (float, np.floating)) and not math.isfinite(v):
                    raise CheckFailed(f"finite-output: {fname} column {h} row {i} is {v}")
            buf.write(",".join(_cell(v) for v in r) + "\n")
        self.tables[fname] = buf.getvalue()

    def check(self, name, ok, detail=""):
        self.checks[name] = (bool(ok), detail)

    def result(self, **kw):
        self.results.update(kw)

    def plot(self, fname, x, ys, xlabel="", ylabel="", logy=False):
        self.figures.append((fname, np.asarray(x, dtype=float),
                             {k: np.asarray(v, dtype=float) for k, v in ys.items()}, xlabel, ylabel, logy))

    @property
    def passed(self):
        return all(ok for ok, _ in self.checks.values())

    def write(self, out: Path, elapsed):
        out.mkdir(parents=True, exist_ok=True)
        sums = {}
        for fname, text in self.tables.items():
            data = text.encode()
            (out / fname).write_bytes(data)
            sums[fname] = hashlib.sha256(data).hexdigest()
        if self.plots:
            self._render(out, sums)
        lines = [f"# denjoylab {__version__}",
                 f"created={time.strftime('%Y-%m-%dT%H:%M:%S')}",
                 f"elapsed_seconds={elapsed:.3f}",
                 f"experiment={self.config.experiment}",
                 f"seed={self.config.seed}",
                 f"out={self.config.out}"]
        lines += [f"{k}={_cell(v)}" for k, v in sorted(self.p.items())]
        lines += [f"result.{k}={_cell(v)}" for k, v in self.results.items()]
        lines += [f"check.{k}={'pass' if ok else 'FAIL'}" + (f"  # {d}" if d else "")
                  for k, (ok, d) in self.checks.items()]
        lines.append(f"status={'ok' if self.passed else 'fail'}")
        lines += [f"artifact.{f}=sha256:{h}" for f, h in sums.items()]
        (out / "manifest.txt").write_text("\n".join(lines) + "\n")

    def _render(self, out, sums):
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("--plots: matplotlib is not installed, skipping figures", file=sys.stderr)
            return
        for fname, x, ys, xl, yl, logy in self.figures:
            fig, ax = plt.subplots(figsize=(6, 4))
            for label, y in ys.items():
                ax.plot(x, y, label=label)
            if logy:
                ax.set_yscale("log")
            ax.set_xlabel(xl)
            ax.set_ylabel(yl)
            if len(ys) > 1:
                ax.legend()
            fig.tight_layout()
            fig.savefig(out / fname, format="svg", metadata={"Date": None})
            plt.close(fig)
            sums[fname] = hashlib.sha256((out / fname).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _floats(s, key):
    try:
        return [float(t) for t in str(s).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected a comma separated list of numbers") from None


def _gap_spec(p, kind="circle"):
    from .constructions import GapSpec
    return GapSpec(d=p["d"], m=p["m"], epsilon=p["epsilon"], R=p["R"], kind=kind)


def _scenario(name):
    from .ergodic import GeneratorMeasure, interval_pair, north_south, psl_pair, rotation_pair
    if name == "psl":
        return psl_pair()
    if name == "rotation":
        return rotation_pair()
    if name == "north-south":
        return GeneratorMeasure((north_south(100),), (1.0,))
    if name == "interval":
        return interval_pair()
    raise ConfigError(f"scenario: unknown scenario {name!r} (psl, rotation, north-south, interval)")


def _seed_measure(name, circle=True, x=0.3):
    from .ergodic import MeasureCDF
    if name == "lebesgue":
        return MeasureCDF.lebesgue(circle=circle)
    if name == "bump":
        return MeasureCDF.from_density(lambda t: 1 + 0.5 * np.sin(2 * np.pi * t), circle=circle)
    if name == "dirac":
        return MeasureCDF.dirac(x, circle=circle)
    raise ConfigError(f"initial: unknown initial measure {name!r} (lebesgue, bump, dirac)")


def _spring(kind):
    from .sacksteder import build_spring_example
    if kind not in ("affine", "mobius"):
        raise ConfigError(f"kind: expected affine or mobius, got {kind!r}")
    return build_spring_example(kind)


def _measure_rows(nu):
    return [(x, F) for x, F in zip(nu.nodes, nu.values)]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@experiment("denjoy-build", d=2, m=8, epsilon=1.0, R=200, samples=1000)
def _denjoy_build(run: Run):
    """Gap catalog of the circle construction; checks commutation and semiconjugacy."""
    from .constructions import build_circle_denjoy
    p = run.p
    sys_ = build_circle_denjoy(_gap_spec(p))
    d = sys_.d
    run.table("gaps.csv", [f"i{j + 1}" for j in range(d)] + ["left", "length"],
              [tuple(int(t) for t in i) + (a, b) for i, a, b in zip(sys_.idx, sys_.left, sys_.length)])
    x, _ = sys_.sample_gap_points(p["samples"], seed=run.seed)
    comm = 0.0
    for f, g in itertools.combinations(sys_.generators, 2):
        comm = max(comm, float(np.abs(f(g(x)) - g(f(x))).max()))
    semi = 0.0
    for j, f in enumerate(sys_.generators):
        diff = sys_.collapse(f(x)) - sys_.collapse(x) - sys_.spec.thetas[j]
        semi = max(semi, float(np.abs(diff - np.round(diff)).max()))
    run.result(gaps=len(sys_.left), gap_mass=sys_.total_gap_mass, commute_err=comm, semiconj_err=semi)
    run.check("commute", comm < 1e-9, f"max {comm:.3g}")
    run.check("semiconjugacy", semi < 1e-9, f"max {semi:.3g}")


@experiment("pixton-build", d=2, m=8, epsilon=1.0, R=40, samples=1000)
def _pixton_build(run: Run):
    """Gap catalog of the interval construction; generators fix 0 and 1 and commute on the gaps."""
    from .constructions import build_interval_pixton
    p = run.p
    sys_ = build_interval_pixton(_gap_spec(p, "interval"))
    run.table("gaps.csv", [f"i{j + 1}" for j in range(sys_.d)] + ["left", "length"],
              [tuple(int(t) for t in i) + (a, b) for i, a, b in zip(sys_.idx, sys_.left, sys_.length)])
    ends = max(max(abs(float(f.eval(0.0))), abs(float(f.eval(1.0)) - 1)) for f in sys_.generators)
    x, _ = sys_.sample_gap_points(p["samples"], seed=run.seed)
    comm = 0.0
    for f, g in itertools.combinations(sys_.generators, 2):
        comm = max(comm, float(np.abs(f(g(x)) - g(f(x))).max()))
    run.result(gaps=len(sys_.left), gap_mass=sys_.total_gap_mass, ends_err=ends, commute_err=comm)
    run.check("fix_ends", ends < 1e-12)
    run.check("commute", comm < 1e-9, f"max {comm:.3g}")


@experiment("holder-scan", scan="m", values="4,16,64", modulus="logpower", tau=0.5, d=2, m=8,
            epsilon=1.0, R=200, samples=1000, expect="none")
def _holder_scan(run: Run):
    """Empirical C^{1+modulus} constant of f_1 while one of m, R, epsilon varies."""
    from .constructions import LogPowerModulus, PowerModulus, build_circle_denjoy, holder_constant
    p = run.p
    if p["scan"] not in ("m", "R", "epsilon"):
        raise ConfigError("scan: must be m, R or epsilon")
    if p["expect"] not in ("none", "increasing", "decreasing"):
        raise ConfigError("expect: must be none, increasing or decreasing")
    if p["modulus"] not in ("logpower", "power"):
        raise ConfigError("modulus: must be logpower or power")
    rows = []
    for v in _floats(p["values"], "values"):
        q = dict(p)
        q[p["scan"]] = int(v) if p["scan"] in ("m", "R") else v
        sys_ = build_circle_denjoy(_gap_spec(q))
        mod = LogPowerModulus(q["d"], q["epsilon"]) if p["modulus"] == "logpower" else PowerModulus(p["tau"])
        c = holder_constant(sys_.generators[0], mod, p["samples"], intervals=sys_.exact_intervals(0))
        rows.append((q[p["scan"]], c))
    run.table("holder.csv", [p["scan"], "constant"], rows)
    run.plot("holder.svg", [r[0] for r in rows], {"constant": [r[1] for r in rows]}, p["scan"], "constant")
    diffs = np.diff([r[1] for r in rows])
    if p["expect"] == "increasing":
        run.check("increasing", np.all(diffs > 0))
    elif p["expect"] == "decreasing":
        run.check("decreasing", np.all(diffs < 0))


@experiment("urn-exact", d=2, k=10, exact="auto")
def _urn_exact(run: Run):
    """Exact law of the urn walk after k steps."""
    from .walks import exact_arrival_distribution
    p = run.p
    mode = {"auto": None, "true": True, "false": False}.get(str(p["exact"]).lower(), "bad")
    if mode == "bad":
        raise ConfigError("exact: must be auto, true or false")
    D = exact_arrival_distribution(p["d"], p["k"], mode)
    rows = [s + (float(D[s]),) for s in sorted(D, reverse=True)]
    run.table("arrival.csv", [f"n{j + 1}" for j in range(p["d"])] + ["probability"], rows)
    total = math.fsum(float(v) for v in D.values())
    run.result(states=len(D), total=total)
    run.check("normalized", abs(total - 1) < 1e-12)
    if p["d"] == 2:
        err = max(abs(float(v) - 1 / (p["k"] + 1)) for v in D.values())
        run.result(max_err=err)
        run.check("uniform", err < 1e-12, f"max |p - 1/(k+1)| = {err:.3g}")


@experiment("urn-sample", d=2, length=100, count=100, law="urn", drift_paths=200)
def _urn_sample(run: Run):
    """Sampled words; final urn states and the diagonal-drift frequency check."""
    from .walks import Bernoulli, Urn, diagonal_drift_check, sample_words, urn_path
    p = run.p
    if p["law"] == "urn":
        law = Urn(p["d"])
    elif p["law"] == "bernoulli":
        law = Bernoulli([1.0 / p["d"]] * p["d"])
    else:
        raise ConfigError("law: must be urn or bernoulli")
    W = sample_words(law, p["length"], run.seed, p["count"])
    run.table("words.csv", ["trial", "word"], [(i, "".join(str(int(a)) for a in w)) for i, w in enumerate(W)])
    finals = [urn_path(w, p["d"])[-1] for w in W]
    run.table("final_states.csv", ["trial"] + [f"n{j + 1}" for j in range(p["d"])],
              [(i,) + tuple(int(v) for v in s) for i, s in enumerate(finals)])
    if p["law"] == "urn" and p["drift_paths"] > 0:
        rep = diagonal_drift_check(p["d"], p["drift_paths"], p["length"], run.seed)
        run.result(drift_min_freq=rep.min_freq, drift_formula_min=rep.formula_min)
        run.check("diagonal_drift", rep.ok)


@experiment("ell-tau", system="denjoy", tau=0.6, length=100, count=1000, R=200, d=2, m=8, epsilon=1.0)
def _ell_tau(run: Run):
    """l_tau sums along sampled words; Denjoy words are compared with the expectation bound."""
    from .constructions import build_circle_denjoy
    from .distortion import ell_tau, expectation_bound
    from .walks import Bernoulli, Urn, sample_words
    p = run.p
    if p["system"] == "denjoy":
        sys_ = build_circle_denjoy(_gap_spec(p))
        W = sample_words(Urn(p["d"]), p["length"], run.seed, p["count"])
        vals = [ell_tau(sys_, w, None, p["tau"])[-1] for w in W]
        bound = expectation_bound(sys_.total_gap_mass, p["tau"], p["d"])
        if not math.isfinite(bound):
            raise ConfigError(f"tau: expectation bound is infinite for tau <= 1/d")
        mean = float(np.mean(vals))
        run.result(mean=mean, bound=bound)
        run.check("mean_below_bound", mean <= bound, f"{mean:.6g} <= {bound:.6g}")
    elif p["system"] in ("affine", "mobius"):
        cfg = _spring(p["system"])
        W = sample_words(Bernoulli(), p["length"], run.seed, p["count"])
        vals = [ell_tau(cfg, w, cfg.I, p["tau"])[-1] for w in W]
        if p["system"] == "affine":
            ref = (1 / 3) ** p["tau"] * (1 - 3 ** (-p["tau"] * (p["length"] + 1))) / (1 - 3 ** -p["tau"])
            err = max(abs(v - ref) for v in vals)
            run.result(closed_form=ref, max_err=err)
            run.check("closed_form", err < 1e-9)
        run.result(mean=float(np.mean(vals)))
    else:
        raise ConfigError("system: must be denjoy, affine or mobius")
    run.table("ell_tau.csv", ["trial", "ell_tau"], list(enumerate(vals)))


def _hunt(run: Run, route):
    from .sacksteder import distance_to_attractor, hunt_hyperbolic
    p = run.p
    cfg = _spring(p["kind"])
    res = hunt_hyperbolic(cfg, route, trials=p["trials"], max_len=p["max_len"], seed=run.seed,
                          tau=p["tau"], eps=p["eps"])
    rows = [(s.trial, s.first_hit, s.fixed_point, s.derivative, s.rate) for s in res.stats]
    # trials without a certificate get empty cells rather than nan
    run.table("hunt.csv", ["trial", "first_hit", "fixed_point", "derivative", "rate"],
              [r if r[1] >= 0 else (r[0], r[1], "", "", r[4]) for r in rows])
    certs = res.certificates
    run.table("certificates.csv", ["word", "fixed_point", "derivative", "residual", "side"],
              [("".join(str(a) for a in c.word), c.fixed_point, c.derivative, c.residual, c.side)
               for c in certs])
    run.result(certificates=len(certs), success_rate=res.success_rate)
    run.check("contracting", all(c.derivative < 1 for c in certs))
    if certs:
        fps = np.array([c.fixed_point for c in certs])
        run.check("in_attractor", np.all(distance_to_attractor(cfg, fps, 10) == 0.0))
    if p["kind"] == "affine":
        err = 0.0
        for c in certs:
            n = len(c.word)
            ref = sum(Fraction(2, 3 ** (n - k)) for k, j in enumerate(c.word) if j == 1) / (1 - Fraction(1, 3 ** n))
            err = max(err, abs(c.fixed_point - float(ref)))
        run.result(oracle_err=err)
        run.check("ifs_oracle", err < 1e-10 and len(certs) == p["trials"])
    run.check("success_rate", res.success_rate >= p["min_rate"], f"{res.success_rate:.4g}")


@experiment("schwartz-hunt", kind="mobius", trials=100, max_len=200, tau=1.0, eps=0.1, min_rate=0.0)
def _schwartz_hunt(run: Run):
    """Hyperbolic fixed points from the Hoelder budget route."""
    _hunt(run, "holder")


@experiment("spring-hunt", kind="mobius", trials=100, max_len=200, tau=1.0, eps=0.1, min_rate=0.0)
def _spring_hunt(run: Run):
    """Hyperbolic fixed points from the C^1 envelope route on a spring configuration."""
    _hunt(run, "c1")


@experiment("stationary-solve", scenario="psl", initial="lebesgue", dirac_x=0.3, tol=1e-4, max_iter=20000)
def _stationary_solve(run: Run):
    """Cesaro averages of the diffusion until the residual drops below tol."""
    from .ergodic import solve_stationary
    p = run.p
    mu = _scenario(p["scenario"])
    rep = solve_stationary(mu, _seed_measure(p["initial"], mu.circle, p["dirac_x"]), p["tol"], p["max_iter"])
    run.table("measure.csv", ["x", "cdf"], _measure_rows(rep.measure))
    run.table("residuals.csv", ["N", "residual"], rep.residuals)
    run.plot("residuals.svg", [r[0] for r in rep.residuals], {"residual": [r[1] for r in rep.residuals]},
             "N", "residual", logy=True)
    run.result(N=rep.N, residual=rep.residual)
    run.check("converged", rep.converged, f"residual {rep.residual:.3g} after {rep.N}")


@experiment("uniqueness", scenario="psl", first="lebesgue", second="bump", dirac_x=0.3, tol=1e-3,
            max_iter=20000)
def _uniqueness(run: Run):
    """Solve from two initial measures and compare (sup-CDF distance)."""
    from .ergodic import check_uniqueness
    p = run.p
    mu = _scenario(p["scenario"])
    a = _seed_measure(p["first"], mu.circle, p["dirac_x"])
    b = _seed_measure(p["second"], mu.circle, p["dirac_x"])
    rep = check_uniqueness(mu, a, b, tol=p["tol"], max_iter=p["max_iter"])
    run.table("uniqueness.csv", ["distance", "residual_first", "residual_second", "verdict"],
              [(rep.distance, rep.a.residual, rep.b.residual, rep.verdict)])
    run.table("measure.csv", ["x", "cdf"], _measure_rows(rep.a.measure))
    run.result(distance=rep.distance, verdict=rep.verdict)
    run.check("unique", rep.verdict == "unique", f"distance {rep.distance:.3g}")


@experiment("dirac-collapse", scenario="psl", count=200, length=100, eps=0.05, solve_tol=1e-5,
            min_fraction=0.95)
def _dirac_collapse(run: Run):
    """Pushes of the stationary measure along random words concentrate on small arcs."""
    from .ergodic import MeasureCDF, dirac_collapse, solve_stationary
    p = run.p
    mu = _scenario(p["scenario"])
    nu = solve_stationary(mu, MeasureCDF.lebesgue(circle=mu.circle), p["solve_tol"], 50000).measure
    rep = dirac_collapse(mu, nu, count=p["count"], length=p["length"], eps=p["eps"], seed=run.seed)
    run.table("collapse.csv", ["checkpoint", "median_arc", "median_max_mass"],
              list(zip(rep.checkpoints, rep.median_arc, rep.median_max_mass)))
    run.table("arcs.csv", ["trial", "arc_length"], list(enumerate(rep.arc_lengths)))
    run.plot("collapse.svg", rep.checkpoints, {"median arc": rep.median_arc}, "n", "arc length")
    run.result(fraction=rep.fraction, stationary_residual=rep.stationary_residual)
    run.check("fraction", rep.fraction >= p["min_fraction"], f"{rep.fraction:.4g}")


@experiment("contraction-trace", scenario="psl", count=200, length=100, max_final_median=1.0)
def _contraction_trace(run: Run):
    """Contraction coefficient c(h_n) along random words, median and 90% quantile."""
    from .ergodic import contraction_along_words
    p = run.p
    tr = contraction_along_words(_scenario(p["scenario"]), count=p["count"], length=p["length"], seed=run.seed)
    run.table("contraction.csv", ["checkpoint", "median", "q90"], list(zip(tr.checkpoints, tr.median, tr.q90)))
    run.plot("contraction.svg", tr.checkpoints, {"median": tr.median, "q90": tr.q90}, "n", "c(h_n)")
    run.result(final_median=float(tr.median[-1]), monotone=tr.monotone)
    run.check("final_median", tr.median[-1] <= p["max_final_median"], f"{tr.median[-1]:.4g}")


@experiment("lyapunov", scenario="rotation", count=1000, length=1000, solve_tol=1e-5)
def _lyapunov(run: Run):
    """Lyapunov exponent by quadrature against nu and by Birkhoff sums along words."""
    from .ergodic import MeasureCDF, lyapunov_agree, lyapunov_exponent, solve_stationary
    p = run.p
    mu = _scenario(p["scenario"])
    if p["scenario"] == "rotation":
        nu = MeasureCDF.lebesgue()
    else:
        nu = solve_stationary(mu, MeasureCDF.lebesgue(circle=mu.circle), p["solve_tol"], 50000).measure
    q = lyapunov_exponent(mu, nu)
    b = lyapunov_exponent(mu, nu, "birkhoff", count=p["count"], length=p["length"], seed=run.seed)
    run.table("lyapunov.csv", ["mode", "value", "stderr", "ci_low", "ci_high"],
              [(r.mode, r.value, r.stderr) + tuple(r.ci()) for r in (q, b)])
    run.result(quadrature=q.value, birkhoff=b.value)
    run.check("modes_agree", lyapunov_agree(q, b))
    if p["scenario"] == "rotation":
        run.check("zero", q.value == 0.0 and abs(b.value) <= 2 * b.stderr)


@experiment("interval-escape", iters=10000, delta=0.05, stop_below=0.0, threshold=0.1)
def _interval_escape(run: Run):
    """Mass of [delta, 1 - delta] under the diffusion of Lebesgue by f, f^-1 with f(x) = x/(2-x)."""
    from .ergodic import MeasureCDF, interval_escape, interval_pair
    p = run.p
    rep = interval_escape(interval_pair(), MeasureCDF.lebesgue(circle=False), iters=p["iters"],
                          delta=p["delta"], stop_below=p["stop_below"] or None)
    run.table("escape.csv", ["step", "middle_mass"], [(i + 1, v) for i, v in enumerate(rep.trace)])
    run.plot("escape.svg", np.arange(1, len(rep.trace) + 1), {"middle mass": rep.trace}, "step", "mass")
    run.result(final=rep.final, left=rep.left, right=rep.right)
    run.check("escape", rep.final < p["threshold"], f"{rep.final:.4g}")


@experiment("conjugate-cdf", scenario="psl", solve_tol=1e-5)
def _conjugate_cdf(run: Run):
    """Conjugate each generator by the CDF of the stationary measure; Lipschitz constants vs 1/mu(g)."""
    from .ergodic import MeasureCDF, conjugate_by_cdf, solve_stationary
    p = run.p
    mu = _scenario(p["scenario"])
    nu = solve_stationary(mu, MeasureCDF.lebesgue(circle=mu.circle), p["solve_tol"], 50000).measure
    rep = conjugate_by_cdf(mu, nu)
    run.table("lipschitz.csv", ["generator", "weight", "lipschitz", "bound"],
              [(j, w, L, b) for j, (w, L, b) in enumerate(zip(mu.weights, rep.lipschitz, rep.bounds))])
    run.table("phi.csv", ["x", "phi"], _measure_rows(nu))
    run.check("lipschitz", rep.ok)


@experiment("kopell-check", map="mobius", b=0.9, samples=1000, n_max=50)
def _kopell(run: Run):
    """Distortion of iterates of a contraction of [0, b]: sampled log ratios against M."""
    from .distortion import kopell_check, kopell_variation
    from .maps import Affine, Mobius
    p = run.p
    if p["map"] == "mobius":
        f = Mobius(np.array([[1.0, 0.0], [-1.0, 4.0]]), (0.0, 1.0))
    elif p["map"] == "affine":
        f = Affine(0.5, 0.0, (0.0, 1.0))
    else:
        raise ConfigError("map: must be mobius or affine")
    M = kopell_variation(f, p["b"])
    rep = kopell_check(f, p["b"], M, samples=p["samples"], n_max=p["n_max"], seed=run.seed)
    run.table("kopell.csv", ["M", "max_log_ratio", "samples"], [(M, rep.max_log_ratio, rep.samples)])
    run.check("kopell", rep.ok, f"{rep.max_log_ratio:.4g} <= {M:.4g}")


@experiment("cano-check", map="affine", tau=0.618033988749895, n_max=200, lo=1 / 3, hi=2 / 3)
def _cano(run: Run):
    """Partial sums of |f^k(J)|^(tau(1 + tau)) for a contraction f."""
    from .distortion import cano_series
    from .maps import Affine, Mobius
    p = run.p
    if p["map"] == "affine":
        f = Affine(1 / 3, 0.0, (0.0, 1.0))
    elif p["map"] == "mobius":
        f = Mobius(np.array([[1.0, 0.0], [-1.0, 4.0]]), (0.0, 1.0))
    else:
        raise ConfigError("map: must be affine or mobius")
    if not 0 <= p["lo"] < p["hi"] <= 1:
        raise ConfigError("lo, hi: need 0 <= lo < hi <= 1")
    rep = cano_series(f, (p["lo"], p["hi"]), p["tau"], p["n_max"])
    run.table("cano.csv", ["k", "partial_sum"], list(enumerate(rep.partial_sums)))
    run.result(exponent=rep.exponent, bounded_regime=rep.bounded_regime, final=float(rep.partial_sums[-1]))
    run.check("contracting", rep.contracting)


@experiment("tangente-check", d=2, m=8, epsilon=1.0, R=60, n_max=60, samples=1000)
def _tangente(run: Run):
    """Recursive length inequalities on the minimal gap lengths of the circle construction."""
    from .constructions import (
        PowerModulus, build_circle_denjoy, check_tangente_recursion, holder_constant, min_gap_sequence,
    )
    p = run.p
    sys_ = build_circle_denjoy(_gap_spec(p))
    seq = min_gap_sequence(sys_, p["n_max"])
    C = holder_constant(sys_.generators[0], PowerModulus(0.5), p["samples"], intervals=sys_.exact_intervals(0))
    rep = check_tangente_recursion(seq, C, p["d"], start=0)
    run.table("min_gaps.csv", ["n", "min_length"], list(enumerate(seq)))
    run.result(A=rep.A, C=C, eles_violations=len(rep.eles_violations),
               pata2_violations=len(rep.pata2_violations))
    run.check("eles", not rep.eles_violations)


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def run(config: ExperimentConfig, plots=False, stream=None) -> int:
    stream = stream or sys.stdout
    r = Run(config, plots)
    t0 = time.perf_counter()
    try:
        EXPERIMENTS[config.experiment].fn(r)
    except (ConfigError, DomainError, TruncationError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckFailed, PreconditionError) as e:
        r.check("precondition" if isinstance(e, PreconditionError) else "finite-output", False, str(e))
        print(f"check failed: {e}", file=sys.stderr)
    r.write(Path(config.out), time.perf_counter() - t0)
    for k, v in r.results.items():
        print(f"{k} = {_cell(v)}", file=stream)
    for k, (ok, d) in r.checks.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {k}" + (f"  {d}" if d else ""), file=stream)
    print(f"wrote {len(r.tables)} table(s) and manifest.txt to {config.out}", file=stream)
    return EXIT_OK if r.passed else EXIT_FAIL


def suite(tag="all", out=None, stream=None) -> int:
    stream = stream or sys.stdout
    from .acceptance import run_suite, select
    try:
        select(tag)
    except KeyError as e:
        print(f"configuration error: {e.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_suite(tag, echo=lambda s: print(s, file=stream, flush=True))
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed", file=stream)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        rows = [r.row() for r in results]
        cols = ["number", "name", "tag", "passed", "values", "failed"]
        text = ",".join(cols) + "\n" + "".join(
            ",".join(f'"{row[c]}"' if c in ("values", "failed", "name") else str(row[c]) for c in cols) + "\n"
            for row in rows)
        (Path(out) / "suite.csv").write_text(text)
    return EXIT_OK if n_ok == len(results) else EXIT_FAIL


def build_parser():
    ap = argparse.ArgumentParser(prog="denjoylab", description="Seeded experiments and the acceptance suite.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("experiment", nargs="?", help="experiment name (or experiment= in the config)")
    r.add_argument("--config", metavar="PATH", help="flat key=value file")
    r.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], help="override a key (repeatable)")
    r.add_argument("--seed", type=int, help="64-bit seed")
    r.add_argument("--out", metavar="DIR", help="output directory")
    r.add_argument("--plots", action="store_true", help="also write SVG figures (needs matplotlib)")
    s = sub.add_parser("suite", help="run acceptance criteria")
    s.add_argument("tag", nargs="?", default="all", help="all, a module tag or a criterion number")
    s.add_argument("--out", metavar="DIR", help="write suite.csv here")
    sub.add_parser("list", help="list experiments and their defaults")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, ex in EXPERIMENTS.items():
            print(f"{name}: {ex.doc.splitlines()[0] if ex.doc else ''}")
            print("    " + " ".join(f"{k}={_cell(v)}" for k, v in ex.defaults.items()))
        return EXIT_OK
    if args.command == "suite":
        return suite(args.tag, args.out)
    try:
        text = Path(args.config).read_text() if args.config else None
        cfg = ExperimentConfig.resolve(args.experiment, text, args.set, args.seed, args.out)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"configuration error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.plots)


if __name__ == "__main__":
    sys.exit(main())
