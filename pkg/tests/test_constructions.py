import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from denjoylab.constructions import (
    GapSpec, GapSystem, LogPowerModulus, PowerModulus, build_circle_denjoy,
    build_interval_pixton, check_tangente_recursion, extend_by_commutation,
    gap_length, holder_constant, l1_ball, min_gap_sequence, mobius_bump,
    shell_count, total_mass,
)
from denjoylab.errors import ConfigError, DomainError, TruncationError
from denjoylab.maps import Identity, Rotation


@pytest.fixture(scope="module")
def circle():
    return build_circle_denjoy(GapSpec(R=60))


@pytest.fixture(scope="module")
def interval():
    return build_interval_pixton(GapSpec(kind="interval", R=40))


# -- length formula -------------------------------------------------------------

def test_gap_length_examples():
    assert gap_length(GapSpec(d=2, m=2), (0, 0)) == pytest.approx(1 / (4 * math.log(2) ** 2))
    assert gap_length(GapSpec(d=2, m=2), (0, 0)) == pytest.approx(0.520342, abs=1e-6)
    assert gap_length(GapSpec(d=1, m=2, thetas=(0.3,)), (0,)) == pytest.approx(1 / (2 * math.log(2) ** 2))


@given(st.lists(st.integers(-50, 50), min_size=2, max_size=2))
def test_gap_length_symmetric(idx):
    s = GapSpec()
    assert gap_length(s, idx) == gap_length(s, [-i for i in idx])


def test_shell_count_matches_enumeration():
    for d in (1, 2, 3):
        pts = l1_ball(d, 12)
        norms = np.abs(pts).sum(axis=1)
        counts = np.bincount(norms)
        assert np.array_equal(shell_count(d, np.arange(13)), counts)


def test_total_mass_against_direct_sum():
    # oracle: 10^7 terms plus the exact tail integral of the majorant
    m, K = 8, 10 ** 7
    k = np.arange(1, K, dtype=float)
    f = lambda x: 1 / ((x + m) * math.log(x + m) ** 2)
    ref = 1 / (m * math.log(m) ** 2) + 2 * np.sum(1 / ((k + m) * np.log(k + m) ** 2))
    ref += 2 * (1 / math.log(K + m) + f(K) / 2)
    assert total_mass(1, m, 1.0) == pytest.approx(ref, rel=1e-12)


def test_total_mass_d2_against_direct_sum():
    m, K = 8, 2 * 10 ** 6
    k = np.arange(1, K, dtype=float)
    g = lambda x: 4 * x / ((x + m) ** 2 * math.log(x + m) ** 2)
    ref = 1 / (m ** 2 * math.log(m) ** 2) + np.sum(4 * k / ((k + m) ** 2 * np.log(k + m) ** 2))
    # substitute x + m = e^y in the tail integral
    tail, _ = integrate.quad(lambda y: 4 * (1 - m * math.exp(-y)) / y ** 2, math.log(K + m), np.inf,
                             epsrel=1e-13, limit=500)
    ref += tail + g(K) / 2
    assert total_mass(2, m, 1.0) == pytest.approx(ref, rel=1e-9)


# -- circle layout ----------------------------------------------------------------

def test_guard_rejects_rational_angles():
    with pytest.raises(ConfigError):
        build_circle_denjoy(GapSpec(thetas=(0.25, SQRT2M1), R=5))


SQRT2M1 = math.sqrt(2) - 1


def test_mass_guard():
    with pytest.raises(ConfigError, match="increase R"):
        build_circle_denjoy(GapSpec(R=3), min_mass_fraction=0.99)


def test_circle_normalization(circle):
    assert circle.total_gap_mass + circle.remainder_mass == pytest.approx(1.0, abs=1e-12)
    assert 0 < circle.total_gap_mass <= 1


def test_circle_disjoint_and_in_orbit_order(circle):
    o = np.argsort(circle.left, kind="stable")
    right = circle.left[o] + circle.length[o]
    assert np.all(right[:-1] <= circle.left[o][1:])
    assert right[-1] <= 1.0
    assert np.all(np.diff(circle.v[o]) > 0)


def test_circle_generators_permute_gaps(circle):
    for j, f in enumerate(circle.generators):
        src, tgt = circle.matched(j)
        assert np.allclose(f.eval(circle.left[src]), circle.left[tgt], atol=1e-12)
        right = f.lift(circle.left[src] + circle.length[src])
        assert np.allclose(np.mod(right, 1.0), np.mod(circle.left[tgt] + circle.length[tgt], 1.0), atol=1e-12)
        assert np.array_equal(circle.idx[tgt] - circle.idx[src], np.eye(circle.d, dtype=int)[j][None, :].repeat(len(src), 0))


def test_circle_commute(circle):
    f1, f2 = circle.generators
    x, _ = circle.sample_gap_points(1000, seed=1)
    assert np.max(np.abs(f1(f2(x)) - f2(f1(x)))) < 1e-9


def test_circle_endpoint_derivative(circle):
    for j, f in enumerate(circle.generators):
        left, length = circle.exact_intervals(j)
        x = np.concatenate([left, left + length])
        assert np.max(np.abs(f.deriv(x) - 1)) < 1e-6


def test_circle_semiconjugacy(circle):
    x, _ = circle.sample_gap_points(1000, seed=2)
    for j, f in enumerate(circle.generators):
        diff = circle.collapse(f(x)) - circle.collapse(x) - circle.spec.thetas[j]
        assert np.max(np.abs(diff - np.round(diff))) < 1e-9


def test_circle_generators_monotone(circle):
    x = np.linspace(0, 1, 1000, endpoint=False)
    for f in circle.generators:
        assert np.all(np.diff(f.lift(x)) > 0)
        assert np.allclose(f.lift_inv(f.lift(x)), x, atol=1e-9)


def test_d1_no_periodic_orbits():
    s = build_circle_denjoy(GapSpec(d=1, m=8, R=200, thetas=((math.sqrt(5) - 1) / 2,)))
    f = s.generators[0]
    x0 = np.linspace(0, 1, 1000, endpoint=False)
    x = x0.copy()
    closest = np.inf
    for _ in range(1000):
        x = f.eval(x)
        d = np.abs(x - x0)
        closest = min(closest, float(np.min(np.minimum(d, 1 - d))))
    assert closest > 1e-12


def test_csv_roundtrip(circle, interval, tmp_path):
    for sys in (circle, interval):
        p = tmp_path / f"{sys.spec.kind}.csv"
        sys.to_csv(p)
        back = GapSystem.from_csv(str(p))
        assert np.array_equal(back.left, sys.left)
        assert np.array_equal(back.length, sys.length)
        assert np.array_equal(back.idx, sys.idx)
        x = np.linspace(0, 0.999, 50)
        assert np.array_equal(back.generators[0].eval(x), sys.generators[0].eval(x))


# -- interval layout ----------------------------------------------------------------

def test_interval_normalization_and_symmetry(interval):
    o = np.argsort(interval.left)
    right = interval.left[o] + interval.length[o]
    assert np.all(right[:-1] <= interval.left[o][1:])
    # the layout is symmetric under i -> -i
    assert interval.left[o][0] == pytest.approx(1 - right[-1], abs=1e-12)
    assert interval.total_gap_mass + interval.remainder_mass == pytest.approx(1.0, abs=1e-12)


def test_interval_lexicographic(interval):
    # rows are built in lexicographic order, so positions must increase along them
    assert np.all(np.diff(interval.left) > 0)


def test_interval_generators_fix_ends(interval):
    for f in interval.generators:
        assert f.eval(0.0) == 0.0
        assert f.eval(1.0) == pytest.approx(1.0, abs=1e-15)


def test_interval_combinatorics(interval):
    for j, f in enumerate(interval.generators):
        src, tgt = interval.matched(j)
        assert np.allclose(f.eval(interval.left[src]), interval.left[tgt], atol=1e-9)
        assert np.allclose(f.eval(interval.left[src] + interval.length[src]),
                           interval.left[tgt] + interval.length[tgt], atol=1e-9)
        shift = interval.idx[src] - interval.idx[tgt]
        assert np.all(shift[:, j] == 1) and np.all(np.delete(shift, j, axis=1) == 0)


def test_interval_commute(interval):
    f1, f2 = interval.generators
    x, _ = interval.sample_gap_points(1000, seed=3)
    assert np.max(np.abs(f1(f2(x)) - f2(f1(x)))) < 1e-9


def test_interval_d1_matches_direct_layout():
    s = build_interval_pixton(GapSpec(d=1, kind="interval", R=30, m=4))
    tot = total_mass(1, 4, 1.0)
    r0, r1 = s.row(np.array([0])), s.row(np.array([1]))
    # gaps 0 and 1 abut; gap 0 starts after all gaps with negative index
    assert s.left[r1] == pytest.approx(s.left[r0] + s.length[r0], abs=1e-15)
    neg = (tot - gap_length(s.spec, (0,)) * 1) / 2 / tot
    assert s.left[r0] == pytest.approx(neg, rel=1e-12)


# -- extension by commutation ---------------------------------------------------------

def test_extension_identity(circle):
    x0, a = circle.gap((0, 0))
    ext = extend_by_commutation(circle, Identity((x0, x0 + a)))
    x = np.linspace(0, 0.999, 300)
    assert np.allclose(ext.eval(x), x, atol=1e-12)


def test_extension_fixes_gaps_and_commutes(interval):
    x0, a = interval.gap((0, 0))
    ext = extend_by_commutation(interval, mobius_bump(x0, a, 2.0))
    ends = np.concatenate([interval.left, interval.left + interval.length])
    assert np.allclose(ext.eval(ends), ends, atol=1e-12)
    x, _ = interval.sample_gap_points(1000, seed=4)
    for f in interval.generators:
        assert np.max(np.abs(f(ext(x)) - ext(f(x)))) < 1e-9


def test_extension_conjugation_consistency(circle):
    x0, a = circle.gap((0, 0))
    h0 = mobius_bump(x0, a, 0.5)
    ext = extend_by_commutation(circle, h0)
    f1 = circle.generators[0]
    y0, b = circle.gap((1, 0))
    y = y0 + b * np.linspace(0.01, 0.99, 50)
    ref = f1(h0(f1.eval_inv(y)))
    assert np.allclose(ext(y), ref, atol=1e-10)


def test_extension_rejects_moving_endpoints(circle):
    x0, a = circle.gap((0, 0))
    from denjoylab.maps import Affine
    with pytest.raises(DomainError):
        extend_by_commutation(circle, Affine(0.5, x0 / 2, (x0, x0 + a)))


# -- regularity diagnostics -------------------------------------------------------------

def test_holder_rotation_zero():
    assert holder_constant(Rotation(0.3), PowerModulus(0.5), 1000) == 0.0


def test_holder_monotone_in_samples(circle):
    f = circle.generators[0]
    vals = [holder_constant(f, PowerModulus(0.5), n) for n in (1000, 1500, 2000)]
    assert vals[0] <= vals[1] <= vals[2]


def test_log_power_modulus_value():
    eta = LogPowerModulus(2, 1.0)
    s = 0.01
    assert eta(s) == pytest.approx(s ** 0.5 * math.log(1 / s) ** 1.5)


def test_min_gap_sequence(circle):
    seq = min_gap_sequence(circle, 20)
    assert seq[0] == pytest.approx(circle.gap((0, 0))[1])
    assert all(a >= b for a, b in zip(seq, seq[1:]))
    with pytest.raises(TruncationError):
        min_gap_sequence(circle, 61)


def test_min_gap_sequence_asymptotics():
    s = build_circle_denjoy(GapSpec(m=2, R=80), min_mass_fraction=0.01)
    seq = np.array(min_gap_sequence(s, 80))
    n = np.arange(2, 81)
    scaled = seq[2:] * n ** 2 * np.log(n) ** 2
    # (n/(n+m))^2 (log n / log(n+m))^2 < 1 and tends to 1
    bound = 1 / s.meta["total_raw"]
    assert np.all(scaled < bound)
    assert scaled[-1] > 0.5 * bound


def test_tangente_equality_case():
    d, C, A = 2, 1.0, 1e-3
    seq = [A / n ** d for n in range(1, 200)]
    rep = check_tangente_recursion(seq, C, d, start=1)
    assert rep.A == pytest.approx(A)
    assert rep.pata2_violations == []


def test_tangente_geometric_fails():
    seq = [2.0 ** -n for n in range(1, 80)]
    rep = check_tangente_recursion(seq, 0.1, 2, start=1)
    assert rep.pata2_violations and max(rep.pata2_violations) == 79


def test_tangente_on_construction(circle):
    seq = min_gap_sequence(circle, 60)
    C = holder_constant(circle.generators[0], PowerModulus(0.5), 1000,
                        intervals=circle.exact_intervals(0))
    rep = check_tangente_recursion(seq, C, 2, start=0)
    assert rep.eles_violations == []


def test_tangente_precondition_flagged():
    rep = check_tangente_recursion([0.9, 0.8], 1.0, 2, start=1)
    assert rep.precondition_violations == [1, 2]


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 6))
def test_l1_ball_count(d, R):
    pts = l1_ball(d, R)
    assert len({tuple(p) for p in pts}) == len(pts)
    assert np.all(np.abs(pts).sum(axis=1) <= R)
    assert len(pts) == int(shell_count(d, np.arange(R + 1)).sum())
