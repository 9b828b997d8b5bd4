"""Distortion control along random compositions.

Everything here is about one question: given generators g_j, a word
(g_{w_1}, g_{w_2}, ...) and an interval I, how much do the compositions
h_n = g_{w_n} o ... o g_{w_1} distort I and its neighbours?

* ``ell_tau`` and ``expectation_bound``: the sums sum_n |h_n(I)|^tau;
* ``Budget`` / ``schwartz_control``: the Schwartz-type ratio control on a
  neighbourhood of I whose size only depends on (tau, C, M, |I|);
* ``c1_budget`` / ``c1_propagate``: the C^1 analogue with exponential
  envelopes;
* ``detect_hyperbolic_fixed_point``: bracket, bisect, certify;
* Kopell, displacement and summability helpers.

Interval images are tracked as (left end, length).  Once a length drops
below ``_LOG_SWITCH`` it is carried as a log-length through log-derivatives
at the left end, so words of length 10^3 never underflow.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .constructions import GapSystem, PowerModulus, holder_constant
from .errors import ConfigError, DomainError, PreconditionError, TruncationError
from .maps import Diffeo

MARGIN = 1e-3          # hyperbolicity margin on |log h'(x*)|
RESIDUAL = 1e-10
SAFETY = 1.1           # multiplier for sampled sup estimates
_LOG_SWITCH = 1e-200


def _letters(word):
    w = getattr(word, "word", word)
    return np.asarray(w, dtype=np.int64).ravel()


def _gens(obj):
    return list(getattr(obj, "generators", obj))


def _interval(I):
    lo, hi = float(I[0]), float(I[1])
    if not hi > lo:
        raise DomainError(f"empty interval {I}")
    return lo, hi


# ---------------------------------------------------------------------------
# image orbits and l_tau
# ---------------------------------------------------------------------------

def image_orbit(gens, word, I, n=None):
    """Left ends and log-lengths of h_k(I), k = 0..n.

    ``word`` may be a single word or a (T, length) array of words; the
    outputs then have shape (T, n + 1).
    """
    gens = _gens(gens)
    W = getattr(word, "word", word)
    W = np.asarray(W, dtype=np.int64)
    single = W.ndim == 1
    W = np.atleast_2d(W)
    n = W.shape[1] if n is None else int(n)
    if n > W.shape[1]:
        raise ConfigError(f"word of length {W.shape[1]} is shorter than n = {n}")
    a, b = _interval(I)
    T = W.shape[0]
    los = np.empty((T, n + 1))
    logs = np.empty((T, n + 1))
    lo = np.full(T, a)
    length = np.full(T, b - a)
    loglen = np.full(T, math.log(b - a))
    los[:, 0], logs[:, 0] = lo, loglen
    small = np.zeros(T, dtype=bool)
    for k in range(n):
        new_lo = np.empty(T)
        new_log = np.empty(T)
        for j, g in enumerate(gens):
            m = W[:, k] == j
            if not m.any():
                continue
            # the left end of the image does not depend on the length
            im_lo, im_len = g.push(lo[m], np.where(small[m], 1.0, length[m]))
            new_lo[m] = im_lo
            with np.errstate(divide="ignore"):
                direct = np.log(im_len)
            if small[m].any():
                direct = np.where(small[m], loglen[m] + g.log_deriv(lo[m]), direct)
            new_log[m] = direct
        lo, loglen = new_lo, new_log
        small = loglen < math.log(_LOG_SWITCH)
        length = np.where(small, 0.0, np.exp(loglen))
        los[:, k + 1], logs[:, k + 1] = lo, loglen
    if single:
        return los[0], logs[0]
    return los, logs


def _gap_orbit_lengths(sys: GapSystem, word, I, n_max):
    w = _letters(word)
    base = np.zeros(sys.d, dtype=np.int64)
    if I is not None:
        r = int(sys.which_gap(0.5 * (I[0] + I[1])))
        if r < 0 or abs(sys.left[r] - I[0]) > 1e-12 or abs(sys.length[r] - (I[1] - I[0])) > 1e-12:
            raise DomainError("I must be a realized gap of the system")
        base = sys.idx[r].copy()
    steps = np.stack([sys.shift(j) for j in range(sys.d)])
    path = base + np.vstack([np.zeros((1, sys.d), dtype=np.int64), np.cumsum(steps[w[:n_max]], axis=0)])
    rows = sys.rows(path)
    bad = np.nonzero(rows < 0)[0]
    if bad.size:
        raise TruncationError(f"h_n(I) leaves the truncated catalog at n = {bad[0]}",
                              last_valid=int(bad[0]) - 1)
    return sys.length[rows]


def ell_tau(sys, word, I, tau, n_max=None):
    """Partial sums S_0..S_n of sum_k |h_k(I)|^tau.

    On a GapSystem the images are read off the catalog by index arithmetic
    (``I=None`` means the gap of index 0); otherwise ``sys`` is anything
    with ``generators`` (or a list of maps) and I is pushed forward.
    """
    if not 0 < tau <= 1:
        raise ConfigError("tau must be in (0, 1]")
    w = _letters(word)
    n_max = len(w) if n_max is None else int(n_max)
    if n_max > len(w):
        raise ConfigError(f"word of length {len(w)} is shorter than n_max = {n_max}")
    if isinstance(sys, GapSystem):
        lengths = _gap_orbit_lengths(sys, w, I, n_max)
        terms = lengths ** tau
    else:
        _, logs = image_orbit(sys, w, I, n_max)
        terms = np.exp(tau * logs)
    return np.cumsum(terms)


def _shell_sizes(k, d):
    return special.comb(k + d - 1, d - 1, exact=False)


def expectation_bound(total_gap_mass, tau, d=2):
    """Upper bound for E[l_tau] under the uniform-arrival urn law.

    Hoelder in each shell and then across shells gives
    (sum of gap lengths)^tau * (sum_k N_k^(-tau/(1-tau)))^(1-tau), with
    N_k = C(k+d-1, d-1) the size of shell k.  Infinite for tau <= 1/d.
    """
    if tau <= 1.0 / d:
        return math.inf
    if tau >= 1:
        return float(total_gap_mass)
    p = tau / (1 - tau)
    if d == 2:
        z = float(special.zeta(p, 1))
    else:
        z = _shell_power_sum(d, p)
    return float(total_gap_mass) ** tau * z ** (1 - tau)


def _shell_power_sum(d, p, K=2000):
    """sum_{k>=0} N_k^(-p): direct sum plus Euler-Maclaurin tail.

    The tail integral is taken in t = log(x), where the integrand decays
    exponentially.
    """
    k = np.arange(K, dtype=float)
    head = math.fsum(_shell_sizes(k, d) ** -p)

    def log_n(x):
        return sum(math.log(x + j) for j in range(1, d)) - math.lgamma(d)

    def f(x):
        return math.exp(-p * log_n(x))

    X = 1e12
    tail, _ = integrate.quad(lambda t: math.exp(t - p * log_n(math.exp(t))), math.log(K), math.log(X),
                             epsabs=0, epsrel=1e-13, limit=400)
    # beyond X, N_x = x^(d-1) / (d-1)! up to a relative O(d^2 / X)
    q = (d - 1) * p
    tail += math.exp(p * math.lgamma(d) + (1 - q) * math.log(X)) / (q - 1)
    h = 1e-2 * K
    fp = (f(K + h) - f(K - h)) / (2 * h)
    return head + tail + 0.5 * f(K) - fp / 12


# ---------------------------------------------------------------------------
# Hoelder constants of log-derivatives and the Schwartz budget
# ---------------------------------------------------------------------------

def log_deriv_holder_constant(g: Diffeo, tau, domain=None, samples=1000, intervals=None):
    """Sampled sup of |log g'(x) - log g'(y)| / |x - y|^tau (a lower bound)."""
    if samples < 1000:
        raise ConfigError("samples must be >= 1000")
    return holder_constant(g, PowerModulus(tau), samples, intervals=intervals, log=True,
                           domain=domain)


def budget_constant(gens, tau, domains=None, samples=1000, intervals=None):
    """SAFETY x the largest sampled log-derivative constant over the generators."""
    gens = _gens(gens)
    domains = domains or [None] * len(gens)
    ivs = intervals or [None] * len(gens)
    return SAFETY * max(log_deriv_holder_constant(g, tau, D, samples, iv)
                        for g, D, iv in zip(gens, domains, ivs))


@dataclass(frozen=True)
class Budget:
    tau: float
    C: float
    M: float
    I: tuple

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ConfigError("tau must be in (0, 1]")
        if self.C < 0 or self.M < 0:
            raise ConfigError("C and M must be nonnegative")
        _interval(self.I)

    @property
    def ratio_bound(self):
        return math.exp(2 ** self.tau * self.C * self.M)

    @property
    def log_ratio_bound(self):
        return 2 ** self.tau * self.C * self.M

    @property
    def L(self):
        return (self.I[1] - self.I[0]) / (2 * self.ratio_bound)

    @property
    def J(self):
        return (self.I[0] - 2 * self.L, self.I[1] + 2 * self.L)

    @property
    def J_prime(self):
        return (self.I[0] - self.L, self.I[1] + self.L)

    @property
    def right(self):
        """I': right component of J minus I."""
        return (self.I[1], self.I[1] + 2 * self.L)

    @property
    def left(self):
        """I'': left component of J minus I."""
        return (self.I[0] - 2 * self.L, self.I[0])


@dataclass
class ControlReport:
    ok: bool
    n: int
    max_log_ratio: float
    log_bound: float
    first_violation: tuple | None = None      # (k, "length" | "ratio", side)
    ell: float = 0.0

    @property
    def max_ratio(self):
        return math.exp(self.max_log_ratio)


def _contains(dom, lo, hi, tol=1e-12):
    return lo >= dom[0] - tol and hi <= dom[1] + tol


def schwartz_control(gens, word, I, budget: Budget, control=None, n=None, points=33):
    """Check the two conditions of the Schwartz-type induction along a word.

    For k = 0..n: (i) |h_k(I')| <= |h_k(I)| and |h_k(I'')| <= |h_k(I)|;
    (ii) sup over x, y in I u I' (and I'' u I) of h_k'(x) / h_k'(y) stays
    below exp(2^tau C M) (1 + 1e-6).  ``control`` lists a closed interval
    per generator (default: its domain) which must contain h_{k-1}(I)
    whenever that generator is applied.
    """
    gens = _gens(gens)
    w = _letters(word)
    n = len(w) if n is None else int(n)
    if control is None:
        control = [None if g.circle else g.domain for g in gens]
    lo, hi = _interval(I)
    Ip, Ipp = budget.right, budget.left
    sides = {
        "right": np.concatenate([np.linspace(lo, hi, points), np.linspace(Ip[0], Ip[1], points)[1:]]),
        "left": np.concatenate([np.linspace(Ipp[0], Ipp[1], points), np.linspace(lo, hi, points)[1:]]),
    }
    circle = gens[0].circle
    logD = {s: np.zeros_like(x) for s, x in sides.items()}
    pts = {s: x.copy() for s, x in sides.items()}
    ivs = {"I": (lo, hi - lo), "right": (Ip[0], Ip[1] - Ip[0]), "left": (Ipp[0], Ipp[1] - Ipp[0])}
    log_bound = budget.log_ratio_bound + math.log1p(1e-6)
    worst = 0.0
    ell = 0.0
    first = None
    for k in range(n + 1):
        ell += ivs["I"][1] ** budget.tau
        for s in ("right", "left"):
            if ivs[s][1] > ivs["I"][1] * (1 + 1e-9) and first is None:
                first = (k, "length", s)
            spread = float(logD[s].max() - logD[s].min())
            worst = max(worst, spread)
            if spread > log_bound and first is None:
                first = (k, "ratio", s)
        if k == n:
            break
        j = w[k]
        g = gens[j]
        dom = control[j]
        if dom is not None:
            a, length = ivs["I"]
            if not _contains(dom, a, a + length):
                raise PreconditionError(f"step {k + 1}: image of I leaves the control interval of generator {j}")
        for s in ("right", "left"):
            x = pts[s]
            if not circle:
                x = np.clip(x, *g.domain)
            logD[s] += g.log_deriv(x)
            pts[s] = np.asarray(g.eval(x), dtype=float)
        ivs = {s: tuple(float(v) for v in g.push(*ivs[s])) for s in ivs}
    return ControlReport(first is None, n, worst, log_bound, first, ell)


# ---------------------------------------------------------------------------
# hyperbolic fixed points
# ---------------------------------------------------------------------------

@dataclass
class HyperbolicCertificate:
    word: tuple
    fixed_point: float
    derivative: float
    bracket: tuple
    residual: float
    side: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def log_derivative(self):
        return math.log(self.derivative)

    @property
    def contracting(self):
        return self.derivative < 1


def _displacement(h, x):
    """h(x) - x, as a lift on the circle."""
    return np.asarray(h.lift(x) if h.circle else h.eval(x), dtype=float) - x


def all_fixed_points(h: Diffeo, J, grid=257):
    """Roots of h(x) - x - k (k integer on the circle) bracketed on a grid of J."""
    lo, hi = _interval(J)
    x = np.linspace(lo, hi, grid)
    F = _displacement(h, x)
    shifts = [0]
    if h.circle:
        shifts = range(int(math.floor(F.min())), int(math.ceil(F.max())) + 1)
    roots = []
    for k in shifts:
        G = F - k
        for i in range(grid - 1):
            if G[i] == 0:
                roots.append((float(x[i]), (float(x[i]), float(x[i]))))
            elif G[i] * G[i + 1] < 0:
                r = optimize.brentq(lambda t: float(_displacement(h, t)) - k, x[i], x[i + 1],
                                    xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=400)
                roots.append((float(r), (float(x[i]), float(x[i + 1]))))
        if G[-1] == 0:
            roots.append((float(x[-1]), (float(x[-1]), float(x[-1]))))
    return sorted(set(roots))


def _residual(h, x):
    y = float(h.eval(x))
    r = abs(y - x)
    return min(r, 1 - r) if h.circle else r


def detect_hyperbolic_fixed_point(h: Diffeo, J, margin=MARGIN, tol=RESIDUAL, I=None, word=(),
                                  grid=257):
    """First fixed point of h in J with residual < tol and |log h'| > margin.

    Returns None when there is no sign change or no root passes both
    tests (e.g. parabolic points).
    """
    for x, br in all_fixed_points(h, J, grid):
        res = _residual(h, x)
        ld = float(h.log_deriv(x))
        if res < tol and abs(ld) > margin:
            side = ""
            if I is not None:
                side = "left" if x < I[0] else ("right" if x > I[1] else "inside")
            return HyperbolicCertificate(tuple(int(v) for v in _letters(word)), x, math.exp(ld),
                                         br, res, side)
    return None


def write_certificates_csv(path, certs):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["word", "fixed_point", "derivative", "residual"])
        for c in certs:
            wr.writerow([".".join(str(v) for v in c.word), repr(c.fixed_point),
                         repr(c.derivative), repr(c.residual)])


def read_certificates_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        word = tuple(int(v) for v in r["word"].split(".")) if r["word"] else ()
        x = float(r["fixed_point"])
        out.append(HyperbolicCertificate(word, x, float(r["derivative"]), (x, x), float(r["residual"])))
    return out


# ---------------------------------------------------------------------------
# C^1 envelopes
# ---------------------------------------------------------------------------

def modulus_radius(gens, domain, log_ratio, grid=4097):
    """Largest s such that |log g'(y) - log g'(z)| <= log_ratio whenever |y - z| <= s.

    Measured on a uniform grid with sliding max/min windows; one grid step
    is given up for the points in between.  Raises ConfigError if even a
    single grid step violates the bound.
    """
    a, b = _interval(domain)
    x = np.linspace(a, b, grid)
    h = (b - a) / (grid - 1)
    best = grid - 1
    for g in _gens(gens):
        L = np.asarray(g.log_deriv(x), dtype=float)
        if not np.all(np.isfinite(L)):
            raise ConfigError("log-derivative not finite on the domain")
        k = 1
        while k <= best:
            # osc over windows of k + 1 points
            size = k + 1
            osc = maximum_filter1d(L, size, origin=-(size // 2)) - minimum_filter1d(L, size, origin=-(size // 2))
            if osc[:grid - k].max() > log_ratio:
                break
            k *= 2
        lo_k, hi_k = k // 2, min(k, best + 1)
        if lo_k == 0:
            raise ConfigError("modulus of continuity too large at the grid resolution")
        while hi_k - lo_k > 1:
            mid = (lo_k + hi_k) // 2
            size = mid + 1
            osc = maximum_filter1d(L, size, origin=-(size // 2)) - minimum_filter1d(L, size, origin=-(size // 2))
            if osc[:grid - mid].max() > log_ratio:
                hi_k = mid
            else:
                lo_k = mid
        best = min(best, lo_k)
    if best <= 1:
        raise ConfigError("modulus of continuity too large at the grid resolution")
    return (best - 1) * h


@dataclass(frozen=True)
class C1Budget:
    eps: float
    B: float
    eps0: float
    N: int
    A: float
    A_bar: float

    @property
    def C_bar(self):
        return SAFETY * max(self.A, self.A_bar)

    @property
    def C(self):
        """Constant of the derivative envelope B C_bar / (2 - 2 eps)^n (at least 1)."""
        return max(1.0, self.B * self.C_bar)


def _all_words_images(gens, lo, length, N):
    lo, length = np.array([lo]), np.array([length])
    for _ in range(N):
        parts = [g.push(lo, length) for g in gens]
        lo = np.concatenate([np.broadcast_to(p[0], length.shape) for p in parts])
        length = np.concatenate([np.broadcast_to(p[1], length.shape) for p in parts])
    return lo, length


def _shrink_depth(gens, domain, I, eps0, n_cap):
    """Least N with |w(I)| <= eps0 for every word of length >= N.

    When every generator has f' <= 1 the largest image at depth n is
    nonincreasing in n and the images of I are scanned level by level;
    otherwise the images of the whole domain are used.
    """
    a, d = domain
    x = np.linspace(a, d, 1025)
    contracting = all(float(np.max(g.log_deriv(x))) <= 1e-12 for g in gens)
    lo, length = (I[0], I[1] - I[0]) if contracting else (a, d - a)
    for N in range(n_cap + 1):
        _, lens = _all_words_images(gens, lo, length, N)
        if lens.max() <= eps0:
            return N
    raise ConfigError(f"no depth <= {n_cap} brings all images below eps0 = {eps0:g}")


def c1_budget(f: Diffeo, g: Diffeo, I, B, eps, domain=None, points=33, n_cap=22):
    """(eps0, N, C_bar) of the C^1 envelope h_n'(x) <= B C_bar / (2 - 2 eps)^n on I.

    eps0 comes from the modulus of log f', log g' at log((2-eps)/(2-2eps));
    N is the least depth from which on every image of I has length <= eps0
    (see ``_shrink_depth``); A and A_bar are the two sups, taken
    exhaustively over words of length <= N on a grid of I.
    """
    if not 0 < eps < 1 / 3:
        raise ConfigError("eps must be in (0, 1/3)")
    if B <= 0:
        raise ConfigError("B must be positive")
    gens = [f, g]
    domain = f.domain if domain is None else domain
    a, d = _interval(domain)
    eps0 = modulus_radius(gens, domain, math.log((2 - eps) / (2 - 2 * eps)))
    lo, hi = _interval(I)
    N = _shrink_depth(gens, (a, d), (lo, hi), eps0, n_cap)
    lo, hi = _interval(I)
    X = np.linspace(lo, hi, points)[None, :]
    logD = np.zeros_like(X)
    log_A = math.log(1.0 / B)
    for n in range(1, N + 1):
        nx, nd = [], []
        for h in gens:
            nd.append(logD + h.log_deriv(X))
            nx.append(np.asarray(h.eval(X), dtype=float))
        X, logD = np.concatenate(nx), np.concatenate(nd)
        log_A = max(log_A, float(logD.max()) + n * math.log(2 - 2 * eps) - math.log(B))
    spread = float((logD.max(axis=1) - logD.min(axis=1)).max())
    log_Abar = spread - math.log(hi - lo) + N * math.log((2 - 2 * eps) / (2 - eps))
    return C1Budget(eps, B, eps0, N, math.exp(log_A), math.exp(log_Abar))


def envelope_membership(gens, word, I, B, eps, n=None):
    """(member, first n with |h_n(I)| > B / (2 - eps)^n or None)."""
    _, logs = image_orbit(gens, word, I, n)
    k = np.arange(len(logs))
    bad = np.nonzero(logs > math.log(B) - k * math.log(2 - eps) + 1e-12)[0]
    return (bad.size == 0, int(bad[0]) if bad.size else None)


def log_derivatives_along(gens, word, x, n=None):
    """log h_k'(x) for k = 0..n (rows) at the points x (columns)."""
    gens = _gens(gens)
    w = _letters(word)
    n = len(w) if n is None else int(n)
    x = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    out = np.zeros((n + 1, x.size))
    for k in range(n):
        g = gens[w[k]]
        if not g.circle:
            x = np.clip(x, *g.domain)
        out[k + 1] = out[k] + g.log_deriv(x)
        x = np.asarray(g.eval(x), dtype=float)
    return out


@dataclass
class EnvelopeReport:
    ok: bool
    n: int
    max_excess: float             # max over n of log h_n' - log envelope_n
    first_failure: int | None = None


def _envelope_check(logD, logC, rate, tol=1e-9):
    k = np.arange(logD.shape[0])
    excess = logD.max(axis=1) - (logC - k * math.log(rate))
    bad = np.nonzero(excess > tol)[0]
    return EnvelopeReport(bad.size == 0, logD.shape[0] - 1, float(excess.max()),
                          int(bad[0]) if bad.size else None)


def c1_envelope_check(gens, word, I, budget: C1Budget, points=33, n=None):
    """Check h_k'(x) <= B C_bar / (2 - 2 eps)^k on a grid of I."""
    x = np.linspace(*_interval(I), points)
    logD = log_derivatives_along(gens, word, x, n)
    return _envelope_check(logD, math.log(budget.B * budget.C_bar), 2 - 2 * budget.eps)


def c1_propagate(C, eps, eps1, gens, word, x, y, n=None):
    """Check h_k'(y) <= C / (2 - 3 eps)^k given the hypothesis at x.

    Raises PreconditionError if C < 1, |x - y| > eps1 / C or x itself
    violates h_k'(x) <= C / (2 - 2 eps)^k for some k.
    """
    if C < 1:
        raise PreconditionError("C must be >= 1")
    if abs(x - y) > eps1 / C * (1 + 1e-12):
        raise PreconditionError(f"|x - y| = {abs(x - y):g} exceeds eps1 / C = {eps1 / C:g}")
    logD = log_derivatives_along(gens, word, [x, y], n)
    hyp = _envelope_check(logD[:, :1], math.log(C), 2 - 2 * eps)
    if not hyp.ok:
        raise PreconditionError(f"hypothesis fails at x for n = {hyp.first_failure}")
    return _envelope_check(logD[:, 1:], math.log(C), 2 - 3 * eps)


# ---------------------------------------------------------------------------
# Kopell, displacement, summability
# ---------------------------------------------------------------------------

def kopell_variation(f: Diffeo, b, lo=0.0, tol=1e-6, max_level=24):
    """Total variation of log f' on [lo, b], refined dyadically until stable."""
    prev = None
    for level in range(4, max_level + 1):
        x = np.linspace(lo, b, 2 ** level + 1)
        tv = math.fsum(np.abs(np.diff(np.asarray(f.log_deriv(x), dtype=float))))
        if prev is not None and abs(tv - prev) < tol:
            return tv
        prev = tv
    raise ConfigError("total variation did not stabilize")


@dataclass
class KopellReport:
    ok: bool
    M: float
    max_log_ratio: float
    samples: int


def kopell_check(f: Diffeo, b, M, samples=1000, n_max=50, seed=0):
    """Sample (u, v, n) with u, v in [f(b), b] and check |log (f^n)'(v) / (f^n)'(u)| <= M."""
    x = np.linspace(0, b, 257)[1:]
    if np.any(np.asarray(f.eval(x)) >= x):
        raise PreconditionError("f(x) < x fails on ]0, b]")
    rng = np.random.Generator(np.random.Philox(seed))
    a = float(f.eval(b))
    u = a + (b - a) * rng.random(samples)
    v = a + (b - a) * rng.random(samples)
    n = rng.integers(1, n_max + 1, samples)
    lu = np.zeros(samples)
    lv = np.zeros(samples)
    for k in range(n_max):
        act = k < n
        lu += np.where(act, f.log_deriv(u), 0.0)
        lv += np.where(act, f.log_deriv(v), 0.0)
        u, v = np.asarray(f.eval(u)), np.asarray(f.eval(v))
    worst = float(np.abs(lv - lu).max())
    return KopellReport(worst <= M + 1e-12, M, worst, samples)


@dataclass
class DisplacementReport:
    ok: bool
    C: float
    displacement: float
    bound: float


def grosero_bound(g: Diffeo, tau, domain=None, grid=1000, samples=1000):
    """Compare max |x - g(x)| on [a, b] with C |b - a|^(1 + tau).

    C is the sampled tau-Hoelder constant of g' (not of log g').
    """
    a, b = _interval(g.domain if domain is None else domain)
    if abs(float(g.eval(a)) - a) > 1e-12 or abs(float(g.eval(b)) - b) > 1e-12:
        raise PreconditionError("g must fix both endpoints")
    C = holder_constant(g, PowerModulus(tau), samples, domain=(a, b))
    x = np.linspace(a, b, grid)
    disp = float(np.abs(np.asarray(g.eval(x)) - x).max())
    bound = C * (b - a) ** (1 + tau)
    return DisplacementReport(disp <= bound * (1 + 1e-9) + 1e-15, C, disp, bound)


@dataclass
class CanoReport:
    partial_sums: np.ndarray
    exponent: float
    bounded_regime: bool          # exponent >= 1
    contracting: bool


def cano_series(f: Diffeo, J, tau, n_max=200):
    """Partial sums of sum_k |f^k(J)|^(tau (1 + tau))."""
    e = tau * (1 + tau)
    _, logs = image_orbit([f], np.zeros(n_max, dtype=np.int64), J)
    sums = np.cumsum(np.exp(e * logs))
    contracting = bool(logs[-1] < logs[0]) and bool(np.all(np.diff(logs[len(logs) // 2:]) <= 1e-12))
    return CanoReport(sums, e, e >= 1 - 1e-12, contracting)


def tau_d(d):
    """Positive root of tau (1 + tau)^(d - 2) = 1."""
    if d < 3:
        raise ConfigError("d must be >= 3")
    fn = lambda t: t * (1 + t) ** (d - 2) - 1
    t = optimize.brentq(fn, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    if abs(fn(t)) > 1e-12:
        raise ConfigError("root residual too large")
    return t
