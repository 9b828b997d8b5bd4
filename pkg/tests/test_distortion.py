import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from denjoylab.constructions import GapSpec, build_circle_denjoy
from denjoylab.distortion import (
    Budget, budget_constant, c1_budget, c1_envelope_check, c1_propagate, cano_series,
    detect_hyperbolic_fixed_point, ell_tau, expectation_bound, grosero_bound, image_orbit,
    kopell_check, kopell_variation, log_deriv_holder_constant, modulus_radius,
    read_certificates_csv, schwartz_control, tau_d, write_certificates_csv, all_fixed_points,
)
from denjoylab.errors import ConfigError, PreconditionError, TruncationError
from denjoylab.maps import Affine, ExplicitMap, Identity, Mobius, Rotation, Word
from denjoylab.walks import Bernoulli, Urn, sample_word, sample_words

F3 = Affine(1 / 3, 0.0, (0.0, 1.0))
G3 = Affine(1 / 3, 2 / 3, (0.0, 1.0))
FM = Mobius(np.array([[1.0, 0.0], [-1.0, 4.0]]), (0.0, 1.0))      # x / (4 - x)
GM = Mobius(np.array([[-1.0, 2.0], [-2.0, 3.0]]), (0.0, 1.0))     # (2 - x) / (3 - 2x)
MID = (1 / 3, 2 / 3)


@pytest.fixture(scope="module")
def denjoy():
    return build_circle_denjoy(GapSpec(R=60))


def _ifs_fixed_point(word):
    """Closed form for h = g_{w_n} o ... o g_{w_1}, letters 0 -> x/3, 1 -> (x+2)/3."""
    n = len(word)
    c = sum(Fraction(2, 3 ** (n - k)) for k, j in enumerate(word) if j == 1)
    return c / (1 - Fraction(1, 3 ** n))


# -- l_tau ----------------------------------------------------------------------

@pytest.mark.parametrize("tau", [0.3, 0.6, 1.0])
def test_ell_tau_affine_closed_form(tau):
    w = sample_word(Bernoulli(), 400, seed=3)
    s = ell_tau([F3, G3], w, MID, tau)
    assert s[-1] == pytest.approx((1 / 3) ** tau / (1 - 3 ** -tau), rel=1e-9)
    assert np.all(np.diff(s) >= 0)


def test_ell_tau_disjoint_images_bounded(denjoy):
    for i in range(10):
        s = ell_tau(denjoy, sample_word(Urn(2), 60, seed=1, index=i), None, 1.0)
        assert s[-1] <= 1.0


def test_ell_tau_gap_system_matches_pushforward(denjoy):
    w = sample_word(Urn(2), 20, seed=5)
    left, length = denjoy.gap((0, 0))
    exact = ell_tau(denjoy, w, (left, left + length), 0.6)
    pushed = ell_tau(denjoy.generators, w, (left, left + length), 0.6)
    assert np.allclose(exact, pushed, rtol=1e-8)


def test_ell_tau_truncation(denjoy):
    w = sample_word(Urn(2), 70, seed=2)
    with pytest.raises(TruncationError) as e:
        ell_tau(denjoy, w, None, 0.6)
    assert e.value.last_valid == 60


def test_ell_tau_word_too_short():
    with pytest.raises(ConfigError):
        ell_tau([F3, G3], [0, 1], MID, 0.5, n_max=5)


def test_image_orbit_long_words_do_not_underflow():
    W = sample_words(Bernoulli(), 1000, seed=0, count=5)
    _, logs = image_orbit([F3, G3], W, MID)
    n = np.arange(1001)
    assert np.allclose(logs, np.log(1 / 3) - n * np.log(3), rtol=1e-12)
    _, logs = image_orbit([FM, GM], W, MID)
    assert np.all(np.isfinite(logs)) and np.all(np.diff(logs, axis=1) < 0)
    # vectorized and single-word paths agree
    assert np.array_equal(image_orbit([FM, GM], W[2], MID)[1], logs[2])


# -- expectation bound --------------------------------------------------------------

def test_expectation_bound_examples():
    assert expectation_bound(1.0, 0.5, 2) == math.inf
    assert expectation_bound(1.0, 1 / 3, 3) == math.inf
    assert expectation_bound(1.0, 1.0, 2) == 1.0
    # sum k^-3 by direct summation plus the integral tail
    K = 10 ** 6
    z3 = math.fsum(1.0 / k ** 3 for k in range(1, K + 1)) + 1 / (2 * K ** 2)
    assert expectation_bound(1.0, 0.75, 2) == pytest.approx(z3 ** 0.25, abs=1e-9)
    assert expectation_bound(1.0, 0.75, 2) == pytest.approx(1.047083, abs=1e-6)


def test_expectation_bound_general_d():
    # N_k = (k+1)(k+2)/2: sum 2/((k+1)(k+2)) telescopes to 2
    assert expectation_bound(1.0, 0.5, 3) == pytest.approx(math.sqrt(2), rel=1e-9)
    # sum 4/((k+1)^2 (k+2)^2) = 4 (pi^2/3 - 3)
    ref = (4 * (math.pi ** 2 / 3 - 3)) ** (1 / 3)
    assert expectation_bound(1.0, 2 / 3, 3) == pytest.approx(ref, rel=1e-9)


@given(st.integers(2, 6), st.floats(0.01, 0.999))
def test_expectation_bound_finite_iff(d, tau):
    b = expectation_bound(0.5, tau, d)
    assert math.isfinite(b) == (tau > 1 / d)


def test_expectation_bound_dominates_monte_carlo(denjoy):
    W = sample_words(Urn(2), 60, seed=11, count=200)
    vals = [ell_tau(denjoy, w, None, 0.6)[-1] for w in W]
    assert np.mean(vals) <= expectation_bound(denjoy.total_gap_mass, 0.6, 2)


# -- Hoelder constants and budgets -------------------------------------------------

def test_log_deriv_holder_examples():
    assert log_deriv_holder_constant(Rotation(0.3), 0.5) == 0.0
    assert log_deriv_holder_constant(F3, 0.5) == 0.0
    assert log_deriv_holder_constant(FM, 1.0) == pytest.approx(2 / 3, rel=0.05)
    with pytest.raises(ConfigError):
        log_deriv_holder_constant(FM, 1.0, samples=100)


@given(st.floats(0.05, 1.0), st.floats(0, 50), st.floats(0, 5), st.floats(1e-6, 1.0))
def test_budget_L_formula(tau, C, M, width):
    b = Budget(tau, C, M, (0.1, 0.1 + width))
    w = b.I[1] - b.I[0]
    assert b.L * 2 * math.exp(2 ** tau * C * M) == pytest.approx(w, rel=1e-12)
    assert b.L <= w / 2
    assert b.J[0] <= b.left[1] and b.right[0] == b.I[1]


def test_schwartz_identity_and_affine():
    I = (0.4, 0.5)
    idw = Identity((0.0, 1.0))
    rep = schwartz_control([idw], [0] * 10, I, Budget(1.0, 0.0, 1.0, I))
    assert rep.ok and rep.max_log_ratio == 0.0
    w = sample_word(Bernoulli(), 40, seed=4)
    rep = schwartz_control([F3, G3], w, MID, Budget(1.0, 0.1, 1.0, MID))
    assert rep.ok and rep.max_log_ratio == 0.0


def test_schwartz_denjoy_word_passes(denjoy):
    tau = 0.6
    C = budget_constant(denjoy, tau, intervals=[denjoy.exact_intervals(j) for j in range(2)])
    left, length = denjoy.gap((0, 0))
    I = (left, left + length)
    w = sample_word(Urn(2), 60, seed=9)
    M = ell_tau(denjoy, w, None, tau)[-1]
    rep = schwartz_control(denjoy, w, I, Budget(tau, C, M, I))
    assert rep.ok, rep.first_violation
    assert rep.ell <= M * (1 + 1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_schwartz_mobius_monotone_in_budget(seed):
    C = budget_constant([FM, GM], 1.0)
    w = sample_word(Bernoulli(), 60, seed=seed)
    M = ell_tau([FM, GM], w, MID, 1.0)[-1]
    base = schwartz_control([FM, GM], w, MID, Budget(1.0, C, M, MID))
    assert base.ok
    for c2, m2 in [(C * 1.5, M), (C, M * 2), (2 * C, 3 * M)]:
        rep = schwartz_control([FM, GM], w, MID, Budget(1.0, c2, m2, MID))
        assert rep.ok and rep.log_bound >= base.log_bound


def test_schwartz_flags_a_too_small_budget():
    w = [1] * 30
    rep = schwartz_control([FM, GM], w, MID, Budget(1.0, 1e-3, 1e-3, MID))
    assert not rep.ok and rep.max_log_ratio > rep.log_bound


def test_schwartz_control_domain_violation():
    w = [0, 1, 1]
    with pytest.raises(PreconditionError, match="step 2"):
        schwartz_control([F3, G3], w, MID, Budget(1.0, 0.0, 1.0, MID),
                         control=[(0.0, 1.0), (0.5, 1.0)])


# -- fixed points -------------------------------------------------------------

def test_detector_examples():
    c = detect_hyperbolic_fixed_point(Affine(1 / 3, 0.0), (0.0, 0.5))
    assert c.fixed_point == 0.0 and c.derivative == pytest.approx(1 / 3)
    assert detect_hyperbolic_fixed_point(Rotation(0.3), (0.0, 1.0)) is None
    h = Word([F3, G3, F3])
    c = detect_hyperbolic_fixed_point(h, (0.0, 1.0))
    assert c.fixed_point == pytest.approx(float(_ifs_fixed_point([0, 1, 0])), abs=1e-12)
    assert c.derivative == pytest.approx(1 / 27, rel=1e-12)


def test_detector_rejects_parabolic_points():
    h = ExplicitMap(lambda x: x - 0.1 * (x - 0.5) ** 3, lambda x: 1 - 0.3 * (x - 0.5) ** 2)
    assert all_fixed_points(h, (0.0, 1.0))
    assert detect_hyperbolic_fixed_point(h, (0.0, 1.0)) is None


def test_detector_circle_mobius():
    A = Mobius(np.array([[2.0, 0.0], [0.0, 0.5]]))
    c = detect_hyperbolic_fixed_point(A, (0.3, 0.7))
    assert c.fixed_point == pytest.approx(0.5, abs=1e-12) and c.derivative == pytest.approx(4.0)
    c = detect_hyperbolic_fixed_point(A, (0.9, 1.1))
    assert min(c.fixed_point % 1, 1 - c.fixed_point % 1) < 1e-12 and c.contracting


@pytest.mark.parametrize("n", range(1, 11))
def test_detector_affine_oracle_exhaustive(n):
    for word in itertools.product((0, 1), repeat=n):
        h = Word([(F3, G3)[j] for j in word])
        c = detect_hyperbolic_fixed_point(h, (0.0, 1.0))
        assert abs(c.fixed_point - float(_ifs_fixed_point(word))) < 1e-10
        assert c.derivative == pytest.approx(3.0 ** -n, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=40))
def test_detector_soundness(word):
    h = Word([(FM, GM)[j] for j in word])
    c = detect_hyperbolic_fixed_point(h, (0.0, 1.0))
    if 0 not in word:
        # powers of g fix 1 with derivative 1: parabolic, left undecided
        assert c is None
        return
    assert abs(float(h.eval(c.fixed_point)) - c.fixed_point) < 1e-10
    assert abs(math.log(float(h.deriv(c.fixed_point)))) > 1e-3


def test_certificates_csv_roundtrip(tmp_path):
    certs = [detect_hyperbolic_fixed_point(Word([F3, G3]), (0.0, 1.0), word=[0, 1])]
    p = tmp_path / "c.csv"
    write_certificates_csv(p, certs)
    back = read_certificates_csv(p)
    assert back[0].word == (0, 1) and back[0].fixed_point == certs[0].fixed_point


# -- C^1 envelopes --------------------------------------------------------------

def test_c1_budget_affine():
    b = c1_budget(F3, G3, MID, 1.0, 0.25)
    assert b.N == 0 and b.C_bar >= 1
    w = sample_word(Bernoulli(), 300, seed=1)
    assert c1_envelope_check([F3, G3], w, MID, b).ok
    # eps -> 0: the envelope tends to B C_bar / 2^n, still above 3^-n
    b0 = c1_budget(F3, G3, MID, 1.0, 1e-6)
    assert c1_envelope_check([F3, G3], w, MID, b0).ok


def test_c1_budget_mobius_envelope():
    eps = 0.1
    b = c1_budget(FM, GM, MID, 1.0, eps)
    assert b.N >= 1 and b.eps0 > 0
    W = sample_words(Bernoulli(), 300, seed=2, count=20)
    from denjoylab.distortion import envelope_membership
    checked = 0
    for w in W:
        if envelope_membership([FM, GM], w, MID, 1.0, eps)[0]:
            assert c1_envelope_check([FM, GM], w, MID, b).ok
            checked += 1
    assert checked >= 15


def test_c1_budget_rejects_bad_eps():
    with pytest.raises(ConfigError):
        c1_budget(F3, G3, MID, 1.0, 0.4)


def test_modulus_failure_is_config_error():
    wild = ExplicitMap(lambda x: x + 0.9 * np.sin(3000 * x) / 3000, lambda x: 1 + 0.9 * np.cos(3000 * x))
    with pytest.raises(ConfigError):
        modulus_radius([wild], (0.0, 1.0), 0.05)


def test_c1_propagate_examples():
    eps = 0.1
    w = sample_word(Bernoulli(), 200, seed=6)
    rep = c1_propagate(1.0, eps, 0.5, [F3, G3], w, 0.5, 0.5)
    assert rep.ok
    rep = c1_propagate(1.0, eps, 0.5, [F3, G3], w, 0.5, 0.9)
    assert rep.ok
    with pytest.raises(PreconditionError):
        c1_propagate(1.0, eps, 0.1, [F3, G3], w, 0.5, 0.9)
    with pytest.raises(PreconditionError):
        c1_propagate(0.5, eps, 0.1, [F3, G3], w, 0.5, 0.5)


def test_c1_propagate_mobius():
    eps = 0.1
    b = c1_budget(FM, GM, MID, 1.0, eps)
    eps1 = modulus_radius([FM, GM], (0.0, 1.0), math.log((2 - 2 * eps) / (2 - 3 * eps)))
    from denjoylab.distortion import envelope_membership
    x = 0.5
    y = x + eps1 / (2 * b.C)
    done = 0
    for w in sample_words(Bernoulli(), 300, seed=8, count=20):
        if envelope_membership([FM, GM], w, MID, 1.0, eps)[0]:
            assert c1_propagate(b.C, eps, eps1, [FM, GM], w, x, y).ok
            done += 1
    assert done >= 15


# -- Kopell, displacement, summability ----------------------------------------------

def test_kopell_affine():
    f = Affine(0.5, 0.0, (0.0, 1.0))
    M = kopell_variation(f, 0.9)
    assert M == 0.0
    rep = kopell_check(f, 0.9, M)
    assert rep.ok and rep.max_log_ratio == 0.0


def test_kopell_mobius():
    M = kopell_variation(FM, 0.9)
    assert M == pytest.approx(2 * math.log(4 / 3.1), abs=1e-6)
    rep = kopell_check(FM, 0.9, M, samples=1000, n_max=50, seed=3)
    assert rep.ok and rep.max_log_ratio <= M


def test_kopell_needs_contraction():
    with pytest.raises(PreconditionError):
        kopell_check(Affine(1.0, 0.0, (0.0, 1.0)), 0.9, 0.0)


def test_grosero_examples():
    rep = grosero_bound(Identity((0.0, 1.0)), 1.0)
    assert rep.displacement == 0.0 and rep.ok
    g = ExplicitMap(lambda x: x / (2 - x), lambda x: 2 / (2 - x) ** 2)
    rep = grosero_bound(g, 1.0)
    assert rep.ok and rep.C == pytest.approx(4.0, rel=0.02)
    with pytest.raises(PreconditionError):
        grosero_bound(Affine(0.5, 0.1, (0.0, 1.0)), 1.0)


def test_grosero_shrinking_domains():
    # g_k(x) = x - c x (2^-k - x): g_k'' = 2c on every [0, 2^-k]
    c = 0.5
    disp, bound = [], []
    for k in range(1, 11):
        s = 2.0 ** -k
        g = ExplicitMap(lambda x, s=s: x - c * x * (s - x), lambda x, s=s: 1 - c * s + 2 * c * x, (0.0, s))
        rep = grosero_bound(g, 1.0)
        assert rep.ok
        disp.append(rep.displacement)
        bound.append(rep.bound)
    assert np.allclose(np.diff(np.log2(bound)), -2.0, atol=1e-6)
    assert np.allclose(np.diff(np.log2(disp)), -2.0, atol=1e-3)


def test_cano_examples():
    rep = cano_series(F3, MID, (math.sqrt(5) - 1) / 2, 50)
    assert rep.exponent == pytest.approx(1.0, abs=1e-15) and rep.bounded_regime
    rep = cano_series(F3, MID, 0.7, 400)
    e = 0.7 * 1.7
    assert rep.partial_sums[-1] == pytest.approx((1 / 3) ** e / (1 - 3 ** -e), rel=1e-12)
    assert rep.contracting
    rep = cano_series(FM, (0.5, 0.9), 1.0, 200)
    _, logs = image_orbit([FM], np.zeros(200, dtype=int), (0.5, 0.9))
    assert rep.partial_sums[-1] <= math.fsum(np.exp(logs)) ** 2
    assert not cano_series(Identity((0.0, 1.0)), MID, 0.7, 20).contracting


def test_tau_d_examples():
    assert tau_d(3) == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-12)
    assert tau_d(4) == pytest.approx(0.465571, abs=1e-6)
    for d in range(3, 30):
        t = tau_d(d)
        assert t > 1 / (d - 1)
        assert abs(t * (1 + t) ** (d - 2) - 1) < 1e-12
    with pytest.raises(ConfigError):
        tau_d(2)
