"""Acceptance criteria as plain functions.

Each criterion runs at fixed seeds and horizons and returns a
``CriterionResult`` with the measured values.  ``run_suite`` selects them
by tag; the runtime limit of each criterion is part of its verdict.
"""
from __future__ import annotations

import dataclasses
import functools
import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .constructions import (
    GapSpec, LogPowerModulus, PowerModulus, build_circle_denjoy, holder_constant,
)
from .distortion import (
    c1_budget, c1_envelope_check, cano_series, ell_tau, expectation_bound, grosero_bound,
    kopell_check, kopell_variation, tau_d,
)
from .ergodic import (
    GRID, GeneratorMeasure, MeasureCDF, check_uniqueness, conjugate_by_cdf,
    contraction_along_words, contraction_coefficient, dirac_collapse, fixed_point_inventory,
    hunt_d_eta_words, interval_escape, interval_pair, lyapunov_agree, lyapunov_exponent,
    morse_smale_check, psl_pair, reduced_words, rotation_pair, solve_stationary, sup_distance,
    symmetry_integral_check,
)
from .maps import (
    Affine, ExplicitMap, Identity, Mobius, Rotation, Word, sampled_second_deriv,
    second_deriv_bound, yoccoz_transfer, yoccoz_transfer_deriv,
)
from .sacksteder import (
    build_spring_example, distance_to_attractor, hunt_hyperbolic, word_B, word_fixed_point,
    word_map,
)
from .walks import Bernoulli, Urn, exact_arrival_distribution, sample_word, sample_words, substream

TAGS = ("walks", "maps", "constructions", "distortion", "sacksteder", "ergodic")


@dataclass
class CriterionResult:
    number: int
    name: str
    tag: str
    checks: dict                    # check name -> bool
    values: dict                    # measured numbers
    seconds: float
    limit: float
    error: str | None = None

    @property
    def in_time(self):
        return self.seconds < self.limit

    @property
    def passed(self):
        return self.error is None and all(self.checks.values()) and self.in_time

    def failed_checks(self):
        out = [k for k, v in self.checks.items() if not v]
        if not self.in_time:
            out.append("runtime")
        if self.error:
            out.append("error")
        return out

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        vals = " ".join(f"{k}={_fmt(v)}" for k, v in self.values.items())
        s = f"[{status}] {self.number:2d} {self.name} ({self.tag}, {self.seconds:.1f}s < {self.limit:g}s) {vals}"
        bad = self.failed_checks()
        if bad:
            s += "  failed: " + ", ".join(bad)
        if self.error:
            s += f"  ({self.error})"
        return s

    def row(self):
        return {"number": self.number, "name": self.name, "tag": self.tag,
                "passed": int(self.passed), "seconds": round(self.seconds, 3),
                "values": ";".join(f"{k}={_fmt(v)}" for k, v in self.values.items()),
                "failed": ";".join(self.failed_checks())}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


@dataclass
class _Criterion:
    number: int
    name: str
    tag: str
    limit: float
    fn: object = field(repr=False)


REGISTRY: dict[int, _Criterion] = {}


def criterion(number, name, tag, limit):
    def deco(fn):
        REGISTRY[number] = _Criterion(number, name, tag, limit, fn)
        return fn
    return deco


def run_criterion(number) -> CriterionResult:
    c = REGISTRY[number]
    checks, values = {}, {}
    t0 = time.perf_counter()
    err = None
    try:
        c.fn(checks, values)
    except Exception as e:  # a crash is a failed criterion, named in the summary
        err = f"{type(e).__name__}: {e}"
    return CriterionResult(c.number, c.name, c.tag, checks, values,
                           time.perf_counter() - t0, c.limit, err)


def select(tag="all"):
    if tag in (None, "all"):
        return sorted(REGISTRY)
    if tag.isdigit():
        if int(tag) not in REGISTRY:
            raise KeyError(f"no criterion {tag}")
        return [int(tag)]
    if tag not in TAGS:
        raise KeyError(f"unknown tag {tag!r}; choose from all, {', '.join(TAGS)} or a number")
    return [n for n in sorted(REGISTRY) if REGISTRY[n].tag == tag]


def run_suite(tag="all", echo=None):
    out = []
    for n in select(tag):
        r = run_criterion(n)
        if echo is not None:
            echo(r.line())
        out.append(r)
    return out


# ---------------------------------------------------------------------------
# shared fixtures (cached so criteria 7, 8 and 12 solve the PSL measure once)
# ---------------------------------------------------------------------------

def _bump():
    return MeasureCDF.from_density(lambda x: 1 + 0.5 * np.sin(2 * np.pi * x))


@functools.lru_cache(maxsize=1)
def _psl_stationary():
    mu = psl_pair()
    rep = solve_stationary(mu, MeasureCDF.lebesgue(), 1e-5, max_iter=50000)
    return mu, rep


F_KOPELL = Mobius(np.array([[1.0, 0.0], [-1.0, 4.0]]), (0.0, 1.0))     # x / (4 - x)


# ---------------------------------------------------------------------------
# 1-6
# ---------------------------------------------------------------------------

@criterion(1, "urn equidistribution", "walks", 1.0)
def _c1(checks, values):
    worst_f, exact = 0.0, True
    for k in range(21):
        ref = Fraction(1, k + 1)
        D = exact_arrival_distribution(2, k, exact=True)
        exact &= len(D) == k + 1 and all(p == ref for p in D.values())
        Df = exact_arrival_distribution(2, k, exact=False)
        worst_f = max(worst_f, max(abs(p - 1 / (k + 1)) for p in Df.values()))
    values["max_err_float"] = worst_f
    checks["exact_fractions"] = exact
    checks["float_err<1e-12"] = worst_f < 1e-12


@criterion(2, "Yoccoz equivariance and tangency", "maps", 1.0)
def _c2(checks, values):
    rng = substream(2)
    triples = np.exp(rng.uniform(math.log(1e-3), math.log(10.0), size=(10, 3)))
    comp, tang = 0.0, 0.0
    for a, b, c in triples:
        x = a * np.linspace(0, 1, 100)
        lhs = yoccoz_transfer(b, c, yoccoz_transfer(a, b, x))
        comp = max(comp, float(np.abs(lhs - yoccoz_transfer(a, c, x)).max()))
        for p, q in ((a, b), (b, c), (a, c)):
            tang = max(tang, abs(float(yoccoz_transfer_deriv(p, q, 1e-8 * p)) - 1))
    ratio = 0.0
    for a in (0.01, 0.3, 1.0, 4.0):
        for r in np.linspace(0.5, 2.0, 9):
            if r == 1.0:
                continue
            ratio = max(ratio, sampled_second_deriv(a, r * a) / second_deriv_bound(a, r * a))
    values.update(composition_err=comp, tangency_err=tang, max_second_diff_ratio=ratio)
    checks["composition<1e-10"] = comp < 1e-10
    checks["tangency<1e-4"] = tang < 1e-4
    checks["second_diff_bound"] = ratio <= 1 + 1e-3


@criterion(3, "Denjoy construction health", "constructions", 30.0)
def _c3(checks, values):
    sys = build_circle_denjoy(GapSpec(d=2, m=8, epsilon=1.0, R=200))
    f1, f2 = sys.generators
    x, _ = sys.sample_gap_points(1000, seed=1)
    comm = float(np.abs(f1(f2(x)) - f2(f1(x))).max())
    ends, semi = 0.0, 0.0
    for j, f in enumerate(sys.generators):
        left, length = sys.exact_intervals(j)
        e = np.concatenate([left, left + length])
        ends = max(ends, float(np.abs(f.deriv(e) - 1).max()))
        diff = sys.collapse(f(x)) - sys.collapse(x) - sys.spec.thetas[j]
        semi = max(semi, float(np.abs(diff - np.round(diff)).max()))
    by_m = []
    for m in (4, 16, 64):
        s = build_circle_denjoy(GapSpec(m=m, R=200))
        by_m.append(holder_constant(s.generators[0], LogPowerModulus(2, 1.0), 1000,
                                    intervals=s.exact_intervals(0)))
    by_R = []
    for R in (50, 100, 200):
        s = build_circle_denjoy(GapSpec(R=R))
        by_R.append(holder_constant(s.generators[0], PowerModulus(0.5), 1000,
                                    intervals=s.exact_intervals(0)))
    values.update(commute_err=comm, endpoint_deriv_err=ends, semiconj_err=semi,
                  holder_m4=by_m[0], holder_m16=by_m[1], holder_m64=by_m[2],
                  half_R50=by_R[0], half_R100=by_R[1], half_R200=by_R[2])
    checks["commute<1e-9"] = comm < 1e-9
    checks["endpoint_deriv<1e-6"] = ends < 1e-6
    checks["semiconjugacy<1e-9"] = semi < 1e-9
    checks["holder_decreases_in_m"] = bool(np.all(np.diff(by_m) < 0))
    checks["half_holder_increases_in_R"] = bool(np.all(np.diff(by_R) > 0))


@criterion(4, "l_tau budget", "distortion", 60.0)
def _c4(checks, values):
    aff = build_spring_example("affine")
    err = 0.0
    for tau in (0.3, 0.6, 1.0):
        w = sample_word(Bernoulli(), 400, seed=3)
        s = ell_tau(aff, w, aff.I, tau)
        err = max(err, abs(s[-1] - (1 / 3) ** tau / (1 - 3 ** -tau)))
    sys = build_circle_denjoy(GapSpec(R=200))
    W = sample_words(Urn(2), 100, seed=4, count=1000)
    mean = float(np.mean([ell_tau(sys, w, None, 0.6)[-1] for w in W]))
    bound = expectation_bound(sys.total_gap_mass, 0.6, 2)
    values.update(affine_err=err, mc_mean=mean, bound=bound)
    checks["affine_closed_form<1e-9"] = err < 1e-9
    checks["mean<=bound"] = mean <= bound


def _ifs_fixed_point(word):
    n = len(word)
    c = sum(Fraction(2, 3 ** (n - k)) for k, j in enumerate(word) if j == 1)
    return c / (1 - Fraction(1, 3 ** n))


@criterion(5, "hyperbolic hunting", "sacksteder", 120.0)
def _c5(checks, values):
    aff = build_spring_example("affine")
    fp_err, der_err = 0.0, 0.0
    for word in itertools.product((0, 1), repeat=6):
        c = word_fixed_point(aff, word)
        fp_err = max(fp_err, abs(c.fixed_point - float(_ifs_fixed_point(word))))
        der_err = max(der_err, abs(c.derivative - 3.0 ** -6))
    mob = build_spring_example("mobius")
    res = hunt_hyperbolic(mob, "holder", trials=1000, max_len=200, seed=0)
    certs = res.certificates
    h_res = max((abs(float(word_map(mob, c.word).eval(c.fixed_point)) - c.fixed_point)
                 for c in certs), default=math.inf)
    fps = np.array([c.fixed_point for c in certs])
    on_attr = bool(np.all(distance_to_attractor(mob, fps, 10) == 0.0)) if len(fps) else False
    contracting = all(c.derivative < 1 for c in certs)
    eps = 0.1
    b = c1_budget(mob.f, mob.g, mob.I, 1.0, eps)
    violations = 0
    for w in sample_words(Bernoulli(), 1000, seed=5, count=100):
        rep = c1_envelope_check(mob, w, mob.I, dataclasses.replace(b, B=word_B(mob, w, eps)))
        violations += not rep.ok
    values.update(affine_fp_err=fp_err, affine_deriv_err=der_err, mobius_rate=res.success_rate,
                  mobius_residual=h_res, c1_violations=violations)
    checks["affine_fixed_points<1e-10"] = fp_err < 1e-10
    checks["affine_derivatives_exact"] = der_err <= 1e-12 * 3.0 ** -6
    checks["mobius_rate>=0.99"] = res.success_rate >= 0.99
    checks["mobius_derivative<1"] = contracting
    checks["mobius_residual<1e-10"] = h_res < 1e-10
    checks["mobius_in_attractor"] = on_attr
    checks["c1_no_violations"] = violations == 0


@criterion(6, "Kopell inequality and summability", "distortion", 10.0)
def _c6(checks, values):
    M = kopell_variation(F_KOPELL, 0.9)
    rep = kopell_check(F_KOPELL, 0.9, M, samples=1000, n_max=50, seed=0)
    gro = [grosero_bound(Identity((0.0, 1.0)), 1.0),
           grosero_bound(ExplicitMap(lambda x: x / (2 - x), lambda x: 2 / (2 - x) ** 2), 1.0)]
    F3 = Affine(1 / 3, 0.0, (0.0, 1.0))
    golden = (math.sqrt(5) - 1) / 2
    cano = [cano_series(F3, (1 / 3, 2 / 3), golden, 50), cano_series(F3, (1 / 3, 2 / 3), 0.7, 400)]
    e = 0.7 * 1.7
    cano_ok = (cano[0].bounded_regime and abs(cano[0].exponent - 1) < 1e-12 and cano[1].contracting
               and math.isclose(cano[1].partial_sums[-1], (1 / 3) ** e / (1 - 3 ** -e), rel_tol=1e-12))
    t3 = tau_d(3)
    values.update(M=M, max_log_ratio=rep.max_log_ratio, tau3=t3)
    checks["kopell"] = rep.ok and rep.max_log_ratio <= M
    checks["grosero"] = all(g.ok for g in gro)
    checks["cano"] = bool(cano_ok)
    checks["tau3_golden"] = abs(t3 - 0.618034) <= 1e-6


# ---------------------------------------------------------------------------
# 7-12
# ---------------------------------------------------------------------------

@criterion(7, "stationary measures", "ergodic", 120.0)
def _c7(checks, values):
    rot = solve_stationary(rotation_pair(), _bump(), 1e-4)
    d_rot = sup_distance(rot.measure, MeasureCDF.lebesgue())
    mu, psl = _psl_stationary()
    uq = check_uniqueness(mu, MeasureCDF.lebesgue(), _bump(), tol=1e-3)
    col = dirac_collapse(mu, psl.measure, count=1000, length=100, eps=0.05, seed=0)
    values.update(rotation_dist=d_rot, uniqueness_dist=uq.distance, collapse_fraction=col.fraction)
    checks["rotation_to_lebesgue"] = rot.converged and d_rot < 1e-3
    checks["psl_unique"] = uq.distance < 1e-3
    checks["collapse>=0.95"] = col.fraction >= 0.95


@criterion(8, "Lyapunov signs", "ergodic", 120.0)
def _c8(checks, values):
    rmu, leb = rotation_pair(), MeasureCDF.lebesgue()
    rq = lyapunov_exponent(rmu, leb)
    rb = lyapunov_exponent(rmu, leb, "birkhoff", count=1000, length=1000, seed=0)
    mu, psl = _psl_stationary()
    q = lyapunov_exponent(mu, psl.measure)
    b = lyapunov_exponent(mu, psl.measure, "birkhoff", count=1000, length=1000, seed=0)
    values.update(rotation_quad=rq.value, rotation_birkhoff=rb.value, psl_quad=q.value,
                  psl_birkhoff=b.value, psl_stderr=b.stderr)
    checks["rotation_quadrature_zero"] = rq.value == 0.0
    checks["rotation_birkhoff_2sigma"] = abs(rb.value) <= 2 * rb.stderr
    checks["psl_negative_99ci"] = q.value < 0 and b.ci()[1] < 0
    checks["modes_agree"] = lyapunov_agree(q, b)


@criterion(9, "contraction coefficients", "ergodic", 60.0)
def _c9(checks, values):
    gold = (math.sqrt(5) - 1) / 2
    c_rot = contraction_coefficient(Rotation(gold)).c
    mu = psl_pair()
    tr = contraction_along_words(mu, count=1000, length=100, seed=0)
    sym = 0.0
    for w in sample_words(mu.law, 30, 5, 100):
        h = Word([mu.generators[j] for j in w])
        sym = max(sym, abs(contraction_coefficient(h).c - contraction_coefficient(h.inverse()).c))
    values.update(c_rotation=c_rot, median_c100=tr.median[-1], inverse_gap=sym)
    checks["rotation_half"] = abs(c_rot - 0.5) <= 1 / GRID
    checks["median<0.05"] = tr.median[-1] < 0.05
    checks["inverse_symmetry"] = sym <= 1 / GRID


@criterion(10, "Morse-Smale words", "ergodic", 60.0)
def _c10(checks, values):
    found = hunt_d_eta_words(psl_pair(), eta=0.05, want=10, length=20, seed=0)
    good = 0
    for _, h in found:
        rep = morse_smale_check(h, 0.05)
        d = sorted(p.derivative for p in rep.points)
        good += bool(rep.premise and len(d) == 2 and d[0] < 1 - 1e-3 and d[1] > 1 + 1e-3)
    values.update(words=len(found), two_hyperbolic=good)
    checks["found>=10"] = len(found) >= 10
    checks["all_two_fixed_points"] = good == len(found)


def _sine_map(a, k):
    return ExplicitMap(lambda x: x + a * np.sin(2 * np.pi * k * x) / (2 * np.pi * k),
                       lambda x: 1 + a * np.cos(2 * np.pi * k * x))


@criterion(11, "interval escape", "ergodic", 60.0)
def _c11(checks, values):
    rep = interval_escape(interval_pair(), MeasureCDF.lebesgue(circle=False), iters=10000,
                          delta=0.05, stop_below=0.1)
    rng = substream(11)
    ineq, iff = True, True
    for _ in range(1000):
        a, k, t = rng.uniform(-0.9, 0.9), int(rng.integers(1, 4)), rng.uniform()
        at_fixed = rng.random() < 0.5
        if at_fixed:
            t = math.floor(t * 2 * k) / (2 * k)
        r = symmetry_integral_check(_sine_map(a, k), t)
        fixed = abs(float(_sine_map(a, k).eval(t)) - t) < 1e-12
        ineq &= r.ok and (r.lhs > r.rhs or r.equality)
        iff &= r.equality == fixed
    values.update(final_mass=rep.final, steps=len(rep.trace))
    checks["mass<0.1"] = rep.final < 0.1
    checks["symmetry_inequality"] = bool(ineq)
    checks["equality_iff_fixed"] = bool(iff)


@criterion(12, "Lipschitz conjugation", "ergodic", 30.0)
def _c12(checks, values):
    mu, psl = _psl_stationary()
    rep = conjugate_by_cdf(mu, psl.measure)
    ratio = max(L / b for L, b in zip(rep.lipschitz, rep.bounds))
    same, moved = True, 0.0
    words = [[j] for j in range(len(mu))] + [list(w) for w in reduced_words(mu, 3, 15, seed=1)]
    for w in words:
        h = Word([mu.generators[j] for j in w])
        hc = Word([rep.measure.generators[j] for j in w])
        a, b = fixed_point_inventory(h), fixed_point_inventory(hc)
        same &= [p.topo for p in a] == [p.topo for p in b]
        if same and a:
            x = np.mod(np.asarray(rep.phi.eval(np.array([p.x for p in a]))), 1.0)
            dx = np.abs(np.array([p.x for p in b]) - x)
            moved = max(moved, float(np.minimum(dx, 1 - dx).max()))
    values.update(max_lip_ratio=ratio, max_fixed_point_shift=moved)
    checks["lipschitz<=1.01/mu"] = ratio <= 1.01
    checks["inventory_preserved"] = bool(same) and moved <= 1 / GRID
