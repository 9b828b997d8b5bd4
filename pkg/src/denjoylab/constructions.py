"""Z^d actions by C^1 diffeomorphisms with wandering intervals.

Two layouts are built from the same length profile

    l(i) = 1 / ((|i|_1 + m)^d * log(|i|_1 + m)^(1 + eps)):

* circle: gaps sit at the rotation orbit p + sum_j i_j theta_j and the
  generator f_j sends gap i onto gap i + e_j;
* interval: gaps are ordered lexicographically in [0, 1] and f_j sends gap
  i onto gap i - e_j.

On every gap the generator is the Yoccoz map phi(I, J), which is tangent to
the identity at both ends.  Only indices with |i|_1 <= R are materialized.
The mass of the gaps that are not materialized is kept (spread along the
orbit order on the circle, at its exact location on the interval), and on
each arc between two consecutive exactly-mapped gaps the generator is again
a Yoccoz map from source arc to target arc.  So the generators are genuine
C^1 diffeomorphisms, exact on the materialized catalog.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, DomainError, TruncationError
from .maps import Diffeo, Mobius, YoccozGapMap, _arr, _mod1, _transfer, _transfer_deriv

GOLDEN = (math.sqrt(5) - 1) / 2
SILVER = math.sqrt(2) - 1


@dataclass(frozen=True)
class GapSpec:
    d: int = 2
    m: int = 8
    epsilon: float = 1.0
    R: int = 200
    thetas: tuple = (GOLDEN, SILVER)
    p: float = 0.0
    kind: str = "circle"

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.m < 2:
            raise ConfigError("m must be >= 2")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if self.R < 1:
            raise ConfigError("R must be >= 1")
        if self.kind not in ("circle", "interval"):
            raise ConfigError("kind must be circle or interval")
        if self.kind == "circle" and len(self.thetas) < self.d:
            raise ConfigError("need one angle per generator")


def default_thetas(d):
    """Golden ratio, sqrt(2)-1, then fractional parts of sqrt of primes."""
    base = [GOLDEN, SILVER]
    primes = [3, 5, 7, 11, 13, 17, 19, 23]
    extra = [math.sqrt(q) % 1 for q in primes]
    return tuple((base + extra)[:d])


def gap_length(spec: GapSpec, idx) -> float:
    n = int(np.abs(np.asarray(idx)).sum())
    return float(_ell(n, spec.d, spec.m, spec.epsilon))


def _ell(n, d, m, eps):
    x = np.asarray(n, dtype=float) + m
    return 1.0 / (x ** d * np.log(x) ** (1 + eps))


# ---------------------------------------------------------------------------
# infinite sums over lattice shells
# ---------------------------------------------------------------------------

def shell_count(q, k):
    """Number of points of Z^q with l1 norm k (vectorized over k, float)."""
    k = np.asarray(k, dtype=float)
    if q == 0:
        return (k == 0).astype(float)
    out = np.zeros_like(k)
    for j in range(1, q + 1):
        out += 2.0 ** j * special.comb(q, j) * _binom_real(k - 1, j - 1)
    return np.where(k == 0, 1.0, out)


def _binom_real(x, r):
    # polynomial binomial coefficient C(x, r) for real x
    out = np.ones_like(x)
    for s in range(r):
        out = out * (x - s) / (s + 1)
    return out


_K_DIRECT = 1 << 16


@lru_cache(maxsize=64)
def shell_tail_table(d, m, eps, q, n_hi):
    """T_q(n) = sum_{k>=0} N_q(k) l(n + k) for n = 0..n_hi.

    T_q(n) is the total length of the gaps that share a fixed prefix of
    l1 norm n and have q free coordinates.  Direct summation up to 2^16
    terms, then the Euler-Maclaurin tail.
    """
    n_vals = np.arange(n_hi + 1)
    if q == 0:
        return _ell(n_vals, d, m, eps)
    k = np.arange(_K_DIRECT, dtype=float)
    N = shell_count(q, k)
    out = np.empty(n_hi + 1)
    for n0 in n_vals:
        head = np.dot(N, _ell(n0 + k, d, m, eps))
        out[n0] = head + _em_tail(d, m, eps, q, n0, _K_DIRECT)
    return out


def _em_tail(d, m, eps, q, n0, K):
    c = n0 + m

    def f(x):
        return shell_count(q, np.array([x]))[0] * _ell(n0 + x, d, m, eps)

    # integral over y = log(x + c), which tames the slow 1/log decay;
    # N_q(x) is divided by e^((q-1) y) term by term to avoid overflow
    def g(y):
        E = math.exp(-y)
        r = 1.0 - c * E
        acc = 0.0
        for j in range(1, q + 1):
            term = 2.0 ** j * math.comb(q, j) * E ** (q - j)
            for s in range(j - 1):
                term *= (r - (1 + s) * E) / (s + 1)
            acc += term
        return acc * math.exp((q - d) * y) / y ** (1 + eps)

    y0 = math.log(K + c)
    integral, _ = integrate.quad(g, y0, np.inf, epsabs=0, epsrel=1e-12, limit=400)
    h = 1e-3 * K
    fprime = (f(K + h) - f(K - h)) / (2 * h)
    return integral + f(K) / 2 - fprime / 12


def total_mass(d, m, eps):
    """Sum of l(i) over all of Z^d (before renormalization)."""
    return float(shell_tail_table(d, m, eps, d, 0)[0])


# ---------------------------------------------------------------------------
# index bookkeeping
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _l1_ball(d, R):
    if d == 1:
        return np.arange(-R, R + 1, dtype=np.int64)[:, None]
    parts = []
    for i1 in range(-R, R + 1):
        sub = _l1_ball(d - 1, R - abs(i1))
        parts.append(np.hstack([np.full((len(sub), 1), i1, dtype=np.int64), sub]))
    return np.vstack(parts)


def l1_ball(d, R):
    """All i in Z^d with |i|_1 <= R, in lexicographic order."""
    return _l1_ball(d, R).copy()


class _IndexTable:
    def __init__(self, idx, R):
        self.R = R
        self.base = 2 * R + 3
        keys = self.encode(idx)
        self.order = np.argsort(keys)
        self.sorted_keys = keys[self.order]

    def encode(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        w = self.base ** np.arange(idx.shape[1], dtype=np.int64)
        return ((idx + self.R + 1) * w).sum(axis=1)

    def lookup(self, idx):
        """Row of each index, -1 when not realized."""
        idx = np.atleast_2d(idx)
        inside = np.abs(idx).sum(axis=1) <= self.R
        keys = self.encode(np.clip(idx, -self.R - 1, self.R + 1))
        pos = np.clip(np.searchsorted(self.sorted_keys, keys), 0, len(self.sorted_keys) - 1)
        hit = (self.sorted_keys[pos] == keys) & inside
        return np.where(hit, self.order[pos], -1)


def rational_independence_margin(thetas, rmax=10):
    """min over 0 < |r|_inf <= rmax of dist(sum r_j theta_j, Z)."""
    th = np.asarray(thetas, dtype=float)
    grids = np.meshgrid(*[np.arange(-rmax, rmax + 1)] * len(th), indexing="ij")
    r = np.stack([g.ravel() for g in grids], axis=1)
    r = r[np.any(r != 0, axis=1)]
    s = r @ th
    return float(np.min(np.abs(s - np.round(s))))


# ---------------------------------------------------------------------------
# the system
# ---------------------------------------------------------------------------

@dataclass
class GapSystem:
    spec: GapSpec
    idx: np.ndarray          # (N, d) integer indices
    left: np.ndarray         # renormalized left endpoints
    length: np.ndarray       # renormalized lengths
    generators: list = field(default_factory=list)
    v: np.ndarray | None = None      # circle: orbit coordinate relative to gap 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._table = _IndexTable(self.idx, self.spec.R)
        self._order = np.argsort(self.left, kind="stable")

    @property
    def d(self):
        return self.spec.d

    @property
    def circle(self):
        return self.spec.kind == "circle"

    @property
    def total_gap_mass(self):
        return float(self.length.sum())

    @property
    def remainder_mass(self):
        return float(1.0 - self.length.sum())

    def row(self, idx):
        r = int(self._table.lookup(np.asarray(idx)[None, :])[0])
        if r < 0:
            raise TruncationError(f"index {tuple(idx)} beyond truncation radius {self.spec.R}")
        return r

    def rows(self, idx):
        return self._table.lookup(idx)

    def gap(self, idx):
        r = self.row(idx)
        return float(self.left[r]), float(self.length[r])

    def shift(self, j):
        """Index shift of generator j (+e_j on the circle, -e_j on the interval)."""
        e = np.zeros(self.d, dtype=np.int64)
        e[j] = 1 if self.circle else -1
        return e

    def matched(self, j):
        """(source rows, target rows) of gaps mapped exactly by generator j."""
        tgt = self.rows(self.idx + self.shift(j))
        src = np.nonzero(tgt >= 0)[0]
        return src, tgt[src]

    def exact_intervals(self, j, margin=0):
        """(left, length) of gaps on which generator j is the exact recipe.

        ``margin`` further restricts to |i|_1 <= R - margin.
        """
        src, _ = self.matched(j)
        keep = np.abs(self.idx[src]).sum(axis=1) <= self.spec.R - margin
        src = src[keep]
        return self.left[src], self.length[src]

    def which_gap(self, x):
        """Row of the realized gap containing x (closed), -1 if none."""
        x = _arr(x)
        if self.circle:
            x = _mod1(x)
        ls = self.left[self._order]
        k = np.clip(np.searchsorted(ls, x, side="right") - 1, 0, len(ls) - 1)
        r = self._order[k]
        inside = (x >= self.left[r]) & (x <= self.left[r] + self.length[r])
        return np.where(inside, r, -1)

    def sample_gap_points(self, n, seed=0, margin=2):
        """n points drawn inside gaps with |i|_1 <= R - margin (gap chosen
        uniformly among such gaps, position uniform inside the gap)."""
        rng = np.random.Generator(np.random.Philox(seed))
        ok = np.nonzero(np.abs(self.idx).sum(axis=1) <= self.spec.R - margin)[0]
        rows = rng.choice(ok, size=n)
        return self.left[rows] + rng.random(n) * self.length[rows], rows

    def collapse(self, x):
        """Semiconjugacy to the rotation model: gaps collapse to their orbit point."""
        if not self.circle:
            raise DomainError("collapse is defined for circle systems")
        x = _mod1(_arr(x))
        o = self._order
        ls = self.left[o]
        k = np.clip(np.searchsorted(ls, x, side="right") - 1, 0, len(ls) - 1)
        r = o[k]
        right = self.left[r] + self.length[r]
        rem = self.remainder_mass
        vk = self.v[r]
        v_next = np.where(k + 1 < len(o), self.v[o[np.minimum(k + 1, len(o) - 1)]], 1.0)
        left_next = np.where(k + 1 < len(o), ls[np.minimum(k + 1, len(o) - 1)], 1.0)
        # linear on the continuous part between gap r and the next one
        span = np.maximum(left_next - right, 1e-300)
        frac = np.clip((x - right) / span, 0.0, 1.0)
        vv = np.where(x <= right, vk, vk + frac * (v_next - vk))
        if rem <= 0:
            vv = vk
        return _mod1(vv + self.meta["u0"])

    # -- csv ----------------------------------------------------------------
    def to_csv(self, path=None):
        buf = io.StringIO()
        s = self.spec
        buf.write(f"# kind={s.kind}\n# d={s.d}\n# m={s.m}\n# epsilon={s.epsilon!r}\n# R={s.R}\n")
        buf.write("# thetas=" + ";".join(repr(float(t)) for t in s.thetas) + "\n")
        buf.write(f"# p={s.p!r}\n")
        buf.write(",".join([f"i{j + 1}" for j in range(s.d)] + ["left", "length"]) + "\n")
        for i, a, b in zip(self.idx, self.left, self.length):
            buf.write(",".join(str(int(t)) for t in i) + f",{a:.17g},{b:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source):
        text = open(source).read() if not isinstance(source, str) or "\n" not in source else source
        meta, rows = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                k, v = line[1:].strip().split("=", 1)
                meta[k] = v
            elif line and not line.startswith("i1"):
                rows.append(line.split(","))
        d = int(meta["d"])
        thetas = tuple(float(t) for t in meta["thetas"].split(";") if t)
        spec = GapSpec(d=d, m=int(meta["m"]), epsilon=float(meta["epsilon"]), R=int(meta["R"]),
                       thetas=thetas, p=float(meta["p"]), kind=meta["kind"])
        arr = np.array(rows, dtype=object)
        idx = arr[:, :d].astype(np.int64)
        left = np.array([float(t) for t in arr[:, d]])
        length = np.array([float(t) for t in arr[:, d + 1]])
        return _assemble(spec, idx, left, length)


def _orbit_coords(spec, idx):
    th = np.asarray(spec.thetas[: spec.d], dtype=float)
    u = _mod1(spec.p + idx.astype(float) @ th)
    zero = np.nonzero(~np.any(idx != 0, axis=1))[0][0]
    u0 = u[zero]
    return _mod1(u - u0), float(u0)


def _assemble(spec, idx, left, length):
    """Attach generators (and orbit coordinates) to a laid-out catalog."""
    sys = GapSystem(spec, idx, left, length)
    if sys.circle:
        sys.v, sys.meta["u0"] = _orbit_coords(spec, idx)
    sys.generators = [_generator(sys, j) for j in range(spec.d)]
    return sys


def _generator(sys: GapSystem, j) -> YoccozGapMap:
    src, tgt = sys.matched(j)
    order = np.argsort(sys.left[src], kind="stable")
    src, tgt = src[order], tgt[order]
    sl, sn = sys.left[src], sys.length[src]
    tl, tn = sys.left[tgt], sys.length[tgt]
    if sys.circle:
        # targets follow the cyclic order of sources; unwrap to a lift
        tl = tl + np.concatenate([[0.0], np.cumsum(np.diff(tl) < 0)])
        arc_s0, arc_s1 = sl + sn, np.append(sl[1:], sl[0] + 1.0)
        arc_t0, arc_t1 = tl + tn, np.append(tl[1:], tl[0] + 1.0)
        pieces = _interleave(sl, sn, tl, tn, arc_s0, arc_s1 - arc_s0, arc_t0, arc_t1 - arc_t0)
        return YoccozGapMap(*pieces, domain="circle")
    # interval: arcs before, between and after the matched gaps
    arc_s0 = np.concatenate([[0.0], sl + sn])
    arc_s1 = np.concatenate([sl, [1.0]])
    arc_t0 = np.concatenate([[0.0], tl + tn])
    arc_t1 = np.concatenate([tl, [1.0]])
    a_sl, a_sn, a_tl, a_tn = arc_s0, arc_s1 - arc_s0, arc_t0, arc_t1 - arc_t0
    gl = np.concatenate([a_sl[:1], _zip(sl, a_sl[1:])])
    gn = np.concatenate([a_sn[:1], _zip(sn, a_sn[1:])])
    hl = np.concatenate([a_tl[:1], _zip(tl, a_tl[1:])])
    hn = np.concatenate([a_tn[:1], _zip(tn, a_tn[1:])])
    return YoccozGapMap(*_drop_empty(gl, gn, hl, hn), domain=(0.0, 1.0))


def _zip(a, b):
    out = np.empty(2 * len(a))
    out[0::2], out[1::2] = a, b
    return out


def _interleave(sl, sn, tl, tn, asl, asn, atl, atn):
    return _drop_empty(_zip(sl, asl), _zip(sn, asn), _zip(tl, atl), _zip(tn, atn))


_EMPTY = 1e-13


def _drop_empty(sl, sn, tl, tn):
    # arcs between abutting gaps are empty on both sides
    empty_s, empty_t = sn <= _EMPTY, tn <= _EMPTY
    if np.any(empty_s != empty_t):
        k = int(np.nonzero(empty_s != empty_t)[0][0])
        raise DomainError(f"arc {k} is empty on one side only ({sn[k]:.3g} vs {tn[k]:.3g})")
    keep = ~empty_s
    return sl[keep], sn[keep], tl[keep], tn[keep]


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _accumulate(x0, lens, fills):
    # sequential sum over x0, l0, f0, l1, f1, ... so that each left end is
    # computed from the float right end of its predecessor
    steps = np.empty(2 * len(lens) + 1)
    steps[0], steps[1::2], steps[2::2] = x0, lens, fills
    acc = np.cumsum(steps)
    return acc[0::2][:-1]


def build_circle_denjoy(spec: GapSpec | None = None, min_mass_fraction=0.1) -> GapSystem:
    """Denjoy-type Z^d action on the circle.

    ``min_mass_fraction`` guards the share of total length carried by the
    materialized gaps.  The tail decays like log(R)^(-eps), so a guard near
    1 is out of reach for any practical R; 0.1 flags clearly useless
    truncations only.
    """
    spec = spec or GapSpec()
    if spec.kind != "circle":
        raise ConfigError("build_circle_denjoy needs kind='circle'")
    d, m, eps, R = spec.d, spec.m, spec.epsilon, spec.R
    margin = rational_independence_margin(spec.thetas[:d])
    if margin < 1e-9:
        raise ConfigError(f"thetas fail the rational-independence guard (margin {margin:.3g})")
    idx = l1_ball(d, R)
    raw = _ell(np.abs(idx).sum(axis=1), d, m, eps)
    total = total_mass(d, m, eps)
    realized = raw.sum()
    if realized < min_mass_fraction * total:
        raise ConfigError(
            f"R={R} keeps only {realized / total:.3f} of the total length "
            f"(< {min_mass_fraction}); increase R")
    v, _ = _orbit_coords(spec, idx)
    order = np.argsort(v, kind="stable")
    tail = total - realized
    lens = raw / total
    vs = v[order]
    fill = tail / total * np.diff(np.append(vs, 1.0))
    left_sorted = _accumulate(0.0, lens[order], fill)
    left = np.empty_like(left_sorted)
    left[order] = left_sorted
    sys = _assemble(spec, idx, left, lens)
    sys.meta.update(total_raw=total, realized_raw=realized, rational_margin=margin)
    return sys


def build_interval_pixton(spec: GapSpec | None = None) -> GapSystem:
    """Lexicographic Z^d action on [0, 1]; f_j maps gap i onto gap i - e_j."""
    spec = spec or GapSpec(kind="interval")
    if spec.kind != "interval":
        raise ConfigError("build_interval_pixton needs kind='interval'")
    d, m, eps, R = spec.d, spec.m, spec.epsilon, spec.R
    idx = l1_ball(d, R)
    T = [shell_tail_table(d, m, eps, q, R + 2) for q in range(d + 1)]
    total = T[d][0]
    cumT = [np.concatenate([[0.0], np.cumsum(t)]) for t in T]  # cumT[q][n] = sum_{k<n} T_q(k)

    def U(q, n):
        # sum_{k>=n} T_q(k) for n >= 1
        return (T[q + 1][n - 1] - T[q][n - 1]) / 2

    x = np.zeros(len(idx))
    P = np.zeros(len(idx), dtype=np.int64)
    for j in range(d):
        q = d - j - 1
        c = idx[:, j] - 1
        neg = c < 0
        term = np.where(neg, U(q, np.where(neg, P + np.abs(c), 1)), 0.0)
        pos = ~neg
        cc = np.where(pos, c, 0)
        term = term + np.where(pos, U(q, P + 1) + cumT[q][P + cc + 1] - cumT[q][P], 0.0)
        x += term
        P += np.abs(idx[:, j])
    lens = _ell(np.abs(idx).sum(axis=1), d, m, eps) / total
    x = x / total
    # rebuild as a cumulative sum so disjointness holds exactly in floating point
    fill = np.diff(x) - lens[:-1]
    fill = np.where(np.abs(fill) < _EMPTY, 0.0, fill)
    if np.any(fill < 0):
        raise DomainError("lexicographic layout produced overlapping gaps")
    left = _accumulate(x[0], lens, np.append(fill, 0.0))
    sys = _assemble(spec, idx, left, lens)
    sys.meta.update(total_raw=total, realized_raw=float(lens.sum() * total))
    return sys


# ---------------------------------------------------------------------------
# extension by commutation
# ---------------------------------------------------------------------------

class GapExtension(Diffeo):
    """phi(I0, Ik) o h0 o phi(Ik, I0) on each catalog gap, identity elsewhere."""

    def __init__(self, sys: GapSystem, h0: Diffeo):
        self.sys, self.h0 = sys, h0
        self.circle = sys.circle
        self.domain = (0.0, 1.0)
        self.base = sys.gap(np.zeros(sys.d, dtype=np.int64))

    def _apply(self, x, h, deriv=False):
        x = _arr(x)
        r = self.sys.which_gap(x)
        x0, a = self.base
        out = x.copy() if not deriv else np.ones_like(x)
        hit = np.nonzero(r >= 0)[0]
        if len(hit):
            rr = r[hit]
            xl, b = self.sys.left[rr], self.sys.length[rr]
            s = np.clip(x[hit] - xl, 0.0, b)
            t = x0 + _transfer(b, a, s)                     # into I0
            t = np.clip(t, x0, x0 + a)
            ht = _arr(h._eval(t)) if not h.circle else _arr(h.eval(t))
            back = _transfer(a, b, np.clip(ht - x0, 0.0, a))  # back to Ik
            if deriv:
                out[hit] = (_transfer_deriv(b, a, s) * _arr(h._deriv(t))
                            * _transfer_deriv(a, b, np.clip(ht - x0, 0.0, a)))
            else:
                out[hit] = xl + back
        return out

    def lift(self, x):
        x = _arr(x)
        n = np.floor(x)
        return self._apply(x - n, self.h0) + n

    def lift_inv(self, y):
        y = _arr(y)
        n = np.floor(y)
        return self._apply(y - n, self.h0.inverse()) + n

    def _eval(self, x):
        return self._apply(x, self.h0)

    def _eval_inv(self, y):
        return self._apply(y, self.h0.inverse())

    def _deriv(self, x):
        return self._apply(x, self.h0, deriv=True)

    def inverse(self):
        return GapExtension(self.sys, self.h0.inverse())


def extend_by_commutation(sys: GapSystem, h0: Diffeo) -> GapExtension:
    x0, a = sys.gap(np.zeros(sys.d, dtype=np.int64))
    if h0.circle:
        raise DomainError("h0 must be an interval map on the base gap")
    lo, hi = h0.domain
    if abs(lo - x0) > 1e-12 or abs(hi - (x0 + a)) > 1e-12:
        raise DomainError("h0 must be declared on the base gap")
    ends = _arr(h0._eval(np.array([lo, hi])))
    if abs(ends[0] - lo) > 1e-12 * max(1, a) or abs(ends[1] - hi) > 1e-12:
        raise DomainError("h0 must fix both endpoints of the base gap")
    return GapExtension(sys, h0)


def mobius_bump(left, length, lam=2.0) -> Mobius:
    """Mobius map of [left, left+length] fixing both ends, slope 1/lam at the left end."""
    a, x0 = float(length), float(left)
    T = np.array([[1 / a, -x0 / a], [0.0, 1.0]])
    G = np.array([[1.0, 0.0], [1 - lam, lam]])
    Ti = np.array([[a, x0], [0.0, 1.0]])
    return Mobius(Ti @ G @ T, (x0, x0 + a))


# ---------------------------------------------------------------------------
# regularity diagnostics
# ---------------------------------------------------------------------------

class PowerModulus:
    """eta(s) = s^tau."""

    def __init__(self, tau):
        self.tau = float(tau)

    def __call__(self, s):
        return np.asarray(s, dtype=float) ** self.tau

    def __repr__(self):
        return f"PowerModulus({self.tau})"


class LogPowerModulus:
    """eta(s) = s^(1/d) * log(1/s)^(1/d + eps), for 0 < s < 1."""

    def __init__(self, d, eps):
        self.d, self.eps = int(d), float(eps)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return s ** (1 / self.d) * np.log(1 / s) ** (1 / self.d + self.eps)

    def __repr__(self):
        return f"LogPowerModulus(d={self.d}, eps={self.eps})"


def _van_der_corput(n, base=2):
    out = np.zeros(n)
    for i in range(n):
        q, denom, k = 0.0, 1.0, i + 1
        while k:
            k, r = divmod(k, base)
            denom *= base
            q += r / denom
        out[i] = q
    return out


def _pair_sup(x, dx, modulus, circle, chunk=2048):
    best = 0.0
    n = len(x)
    for s in range(0, n, chunk):
        xa, da = x[s:s + chunk, None], dx[s:s + chunk, None]
        dist = np.abs(xa - x[None, :])
        if circle:
            dist = np.minimum(dist, 1 - dist)
        ok = dist > 1e-14
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(ok, np.abs(da - dx[None, :]) / modulus(np.where(ok, dist, 0.5)), 0.0)
        best = max(best, float(np.nanmax(r)))
    return best


def holder_constant(f: Diffeo, modulus, samples=1000, intervals=None, stencil=9, log=False,
                    domain=None):
    """Empirical sup of |f'(x) - f'(y)| / eta(|x - y|) over sampled pairs.

    ``samples`` nested van der Corput points over the domain give the
    global pairs (so the value is nondecreasing in ``samples``).  When
    ``intervals`` = (left, length) is given, each interval also gets a fixed
    stencil: all within-interval pairs plus pairs with the next interval.
    ``log=True`` measures log f' instead of f'; ``domain`` restricts the
    sampled region (pairs then never wrap around the circle).
    """
    deriv = f.log_deriv if log else f.deriv
    wrap = f.circle and domain is None
    if domain is None:
        domain = (0.0, 1.0) if f.circle else f.domain
    lo, hi = domain
    pts = lo + (hi - lo) * _van_der_corput(samples)
    best = _pair_sup(pts, _arr(deriv(pts)), modulus, wrap)
    if intervals is not None:
        left, length = (np.asarray(a, dtype=float) for a in intervals)
        o = np.argsort(left)
        left, length = left[o], length[o]
        t = np.linspace(0.0, 1.0, stencil)
        X = left[:, None] + length[:, None] * t[None, :]
        X = np.clip(X, lo, hi if not f.circle else min(hi, np.nextafter(1.0, 0)))
        D = _arr(deriv(X.ravel())).reshape(X.shape)
        # within intervals
        for a in range(stencil):
            for b in range(a + 1, stencil):
                dist = X[:, b] - X[:, a]
                ok = dist > 1e-300
                r = np.abs(D[:, b] - D[:, a])[ok] / modulus(dist[ok])
                if r.size:
                    best = max(best, float(r.max()))
        # neighbouring intervals
        for a in range(stencil):
            for b in range(stencil):
                dist = np.abs(X[1:, b] - X[:-1, a])
                if wrap:
                    dist = np.minimum(dist, 1 - dist)
                ok = dist > 1e-300
                r = np.abs(D[1:, b] - D[:-1, a])[ok] / modulus(dist[ok])
                if r.size:
                    best = max(best, float(r.max()))
    return best


def min_gap_sequence(sys: GapSystem, n_max):
    """l_n = min over i >= 0 with sum i = n of |f^i(I_0)|, n = 0..n_max."""
    if n_max > sys.spec.R:
        raise TruncationError(f"n_max={n_max} exceeds truncation radius {sys.spec.R}",
                              last_valid=sys.spec.R)
    out = []
    sign = 1 if sys.circle else -1
    for n in range(n_max + 1):
        pts = l1_ball(sys.d, n)
        pts = pts[(pts >= 0).all(axis=1) & (pts.sum(axis=1) == n)]
        rows = sys.rows(sign * pts)
        if np.any(rows < 0):
            raise TruncationError(f"gap missing at n={n}", last_valid=n - 1)
        out.append(float(sys.length[rows].min()))
    return out


@dataclass
class TangenteReport:
    A: float
    eles_violations: list
    pata2_violations: list
    precondition_violations: list

    @property
    def ok(self):
        return not self.eles_violations and not self.pata2_violations


def check_tangente_recursion(seq, C, d, start=1, rtol=1e-12):
    """Check l_{n+1} >= l_n (1 - C l_n^(1/d)) and l_n >= A / n^d.

    ``seq[k]`` is l_{start + k}.  A = min{l_1, d^d / (2^(d^2) C^d)}.
    Sequence values above (1/(C(1 + 1/d)))^d are reported as precondition
    violations (not fatal).
    """
    seq = [float(s) for s in seq]
    n_of = [start + k for k in range(len(seq))]
    val = dict(zip(n_of, seq))
    if 1 not in val:
        raise ConfigError("sequence must contain l_1")
    A = min(val[1], d ** d / (2 ** (d * d) * C ** d))
    cap = (1 / (C * (1 + 1 / d))) ** d
    pre = [n for n, s in val.items() if s > cap]
    eles = [n for n in n_of if n + 1 in val and n >= 1
            and val[n + 1] < val[n] * (1 - C * val[n] ** (1 / d)) * (1 - rtol)]
    pata = [n for n in n_of if n >= 1 and val[n] < A / n ** d * (1 - rtol)]
    return TangenteReport(A, eles, pata, pre)
