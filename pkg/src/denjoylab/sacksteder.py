"""Two-generator spring configurations and random hunts for hyperbolic points.

A spring configuration on [a, d] is a pair f, g with f(a) = a, f([a,d]) =
[a, b], g(d) = d, g([a,d]) = [c, d] and b < c.  The open gap I = ]b, c[ is
wandering, its images under words are pairwise disjoint, and the closure
of the orbit of the endpoints is a Cantor set Lambda.  Random words with
i.i.d. fair letters shrink I exponentially, and the distortion budgets of
``distortion`` turn a return of h_n(I) next to I into a hyperbolic fixed
point of h_n.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .distortion import (
    budget_constant, c1_budget, detect_hyperbolic_fixed_point,
    envelope_membership, image_orbit, modulus_radius, _all_words_images,
    _letters,
)
from .errors import ConfigError
from .maps import Affine, Diffeo, Mobius, Word
from .walks import Bernoulli, sample_words

ENDPOINT_TOL = 1e-12


@dataclass(frozen=True)
class SpringConfig:
    f: Diffeo
    g: Diffeo
    a: float
    b: float
    c: float
    d: float
    kind: str = "custom"
    law: Bernoulli = Bernoulli((0.5, 0.5))

    def __post_init__(self):
        checks = [(self.f, self.a, self.a), (self.f, self.d, self.b),
                  (self.g, self.a, self.c), (self.g, self.d, self.d)]
        for h, x, y in checks:
            if abs(float(h.eval(x)) - y) > ENDPOINT_TOL:
                raise ConfigError(f"endpoint condition fails: {float(h.eval(x))!r} != {y!r}")
        if not self.a < self.b < self.c < self.d:
            raise ConfigError("need a < b < c < d")

    @property
    def generators(self):
        return [self.f, self.g]

    @property
    def I(self):
        return (self.b, self.c)

    @property
    def ambient(self):
        return (self.a, self.d)


def build_spring_example(kind="affine") -> SpringConfig:
    """affine: x/3 and (x+2)/3 (middle thirds); mobius: x/(4-x) and (2-x)/(3-2x)."""
    if kind == "affine":
        f = Affine(1 / 3, 0.0, (0.0, 1.0))
        g = Affine(1 / 3, 2 / 3, (0.0, 1.0))
    elif kind == "mobius":
        f = Mobius(np.array([[1.0, 0.0], [-1.0, 4.0]]), (0.0, 1.0))
        g = Mobius(np.array([[-1.0, 2.0], [-2.0, 3.0]]), (0.0, 1.0))
    else:
        raise ConfigError(f"unknown spring example {kind!r}")
    return SpringConfig(f, g, 0.0, 1 / 3, 2 / 3, 1.0, kind)


def ping_pong_check(cfg: SpringConfig, depth=6):
    """Images of [a, d] under distinct words of equal length are disjoint (all lengths <= depth)."""
    for n in range(1, depth + 1):
        lo, length = _all_words_images(cfg.generators, cfg.a, cfg.d - cfg.a, n)
        o = np.argsort(lo)
        lo, hi = lo[o], lo[o] + length[o]
        if np.any(lo[1:] <= hi[:-1]):
            return False
    return True


def lambda_attractor(cfg: SpringConfig, depth):
    """The 2^depth level-`depth` intervals covering Lambda, as sorted (left, right) rows."""
    if not 0 <= depth <= 20:
        raise ConfigError("depth must be in [0, 20]")
    lo, length = _all_words_images(cfg.generators, cfg.a, cfg.d - cfg.a, depth)
    o = np.argsort(lo)
    return np.column_stack([lo[o], lo[o] + length[o]])


def distance_to_attractor(cfg: SpringConfig, x, depth=10):
    iv = lambda_attractor(cfg, depth)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.clip(np.searchsorted(iv[:, 0], x, side="right") - 1, 0, len(iv) - 1)
    d_here = np.maximum(0.0, np.maximum(iv[k, 0] - x, x - iv[k, 1]))
    k2 = np.clip(k + 1, 0, len(iv) - 1)
    d_next = np.maximum(0.0, np.maximum(iv[k2, 0] - x, x - iv[k2, 1]))
    return np.minimum(d_here, d_next)


# ---------------------------------------------------------------------------
# shrinking statistics
# ---------------------------------------------------------------------------

@dataclass
class SeriesReport:
    partial_sums: np.ndarray
    floored_at: int | None      # first n with increment below 1e-15, if any


def sum_2n_gap(cfg: SpringConfig, word, n_max=None) -> SeriesReport:
    """Partial sums of 2^n |h_n(I)|."""
    _, logs = image_orbit(cfg, word, cfg.I, n_max)
    k = np.arange(len(logs))
    inc = np.exp(k * math.log(2) + logs)
    hit = np.nonzero(inc < 1e-15)[0]
    return SeriesReport(np.cumsum(inc), int(hit[0]) if hit.size else None)


def omega_B_eps_membership(cfg: SpringConfig, word, B, eps):
    """(member, first violation): is |h_n(I)| <= B / (2 - eps)^n along the whole word?"""
    if not 0 < eps < 1:
        raise ConfigError("eps must be in (0, 1)")
    return envelope_membership(cfg, word, cfg.I, B, eps)


def word_B(cfg: SpringConfig, word, eps):
    """Smallest B >= 1 with |h_n(I)| <= B / (2 - eps)^n along the word."""
    _, logs = image_orbit(cfg, word, cfg.I)
    k = np.arange(len(logs))
    return max(1.0, float(np.exp((logs + k * math.log(2 - eps)).max())))


def envelope_M(B, eps, tau):
    """B^tau sum_n (2 - eps)^(-n tau): the l_tau bound for words of Omega(B, eps)."""
    return B ** tau / (1 - (2 - eps) ** -tau)


# ---------------------------------------------------------------------------
# hunting hyperbolic fixed points
# ---------------------------------------------------------------------------

def word_map(cfg: SpringConfig, word, n=None) -> Word:
    w = _letters(word)
    n = len(w) if n is None else n
    return Word([cfg.generators[j] for j in w[:n]])


def word_fixed_point(cfg: SpringConfig, word, **kw):
    """Detector applied to the whole word on the ambient interval."""
    w = _letters(word)
    return detect_hyperbolic_fixed_point(word_map(cfg, w), cfg.ambient, word=w, **kw)


@dataclass
class TrialStats:
    trial: int
    first_hit: int              # step of the first certificate, -1 if none
    fixed_point: float
    derivative: float
    rate: float                 # log|h_n(I)| / n at the end of the word
    events: int                 # returns next to I that were tested


@dataclass
class HuntResult:
    route: str
    certificates: list
    stats: list
    params: dict = field(default_factory=dict)

    @property
    def success_rate(self):
        return float(np.mean([s.first_hit >= 0 for s in self.stats])) if self.stats else 0.0

    def first_hit_histogram(self):
        hits = np.array([s.first_hit for s in self.stats if s.first_hit >= 0], dtype=np.int64)
        return np.bincount(hits) if hits.size else np.zeros(0, dtype=np.int64)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["trial", "first_hit", "fixed_point", "derivative", "rate"])
            for s in self.stats:
                wr.writerow([s.trial, s.first_hit, repr(s.fixed_point), repr(s.derivative), repr(s.rate)])


def _returns(los, logs, I, L):
    """Mask of steps n >= 1 with h_n(I) inside the L-neighbourhood of I but off I."""
    b, c = I
    hi = los + np.exp(logs)
    right = (los >= c) & (hi <= c + L)
    left = (los >= b - L) & (hi <= b)
    m = right | left
    m[..., 0] = False
    return m


def _max_log_deriv(gens, W, x):
    """max over the points x of log h_k'(x), for every word (rows) and k = 0..n."""
    T, n = W.shape
    X = np.broadcast_to(x, (T, len(x))).copy()
    D = np.zeros_like(X)
    out = np.zeros((T, n + 1))
    for k in range(n):
        for j, g in enumerate(gens):
            m = W[:, k] == j
            if m.any():
                D[m] += g.log_deriv(X[m])
                X[m] = g.eval(X[m])
        out[:, k + 1] = D.max(axis=1)
    return out


def hunt_hyperbolic(cfg: SpringConfig, route="holder", trials=1000, max_len=200, seed=0, tau=1.0,
                    eps=0.1, B=1.0, first_only=True, samples=2000) -> HuntResult:
    """Sample words and certify fixed points at returns of h_n(I) next to I.

    holder: at step n the budget uses M = sum_{k<n} |h_k(I)|^tau of the
    word itself, so L shrinks as the word gets longer; the detector runs on
    the 2L-neighbourhood J of I.
    c1: C = B C_bar from ``c1_budget``, L = min(eps1 / (2C), |I| / 2), and a
    return at step m counts when (2 - 3 eps)^m > C and the derivative
    envelope C / (2 - 2 eps)^k holds on I up to m.
    """
    I = cfg.I
    gens = cfg.generators
    W = sample_words(cfg.law, max_len, seed, trials)
    los, logs = image_orbit(gens, W, I)
    steps = np.arange(max_len + 1)
    if route == "holder":
        C = budget_constant(gens, tau, [cfg.ambient] * 2, samples)
        M = np.concatenate([np.zeros((trials, 1)), np.cumsum(np.exp(tau * logs[:, :-1]), axis=1)], axis=1)
        L = (I[1] - I[0]) / (2 * np.exp(2 ** tau * C * M))
        mask = _returns(los, logs, I, L)
        params = {"tau": tau, "C": C}
    elif route == "c1":
        bud = c1_budget(cfg.f, cfg.g, I, B, eps, cfg.ambient)
        C = bud.C
        eps1 = modulus_radius(gens, cfg.ambient, math.log((2 - 2 * eps) / (2 - 3 * eps)))
        L = min(eps1 / (2 * C), (I[1] - I[0]) / 2)
        mask = _returns(los, logs, I, L) & (steps * math.log(2 - 3 * eps) > math.log(C))
        params = {"eps": eps, "B": B, "C": C, "eps1": eps1, "L": L, "N": bud.N}
    else:
        raise ConfigError(f"unknown route {route!r}")
    if route == "c1":
        # the envelope must hold on I up to the return step
        env = math.log(C) - steps * math.log(2 - 2 * eps)
        ok = np.logical_and.accumulate(_max_log_deriv(gens, W, np.linspace(I[0], I[1], 33)) <= env + 1e-9,
                                       axis=1)
        mask &= ok
    certs, stats = [], []
    for t in range(trials):
        events = np.nonzero(mask[t])[0]
        first, cert, tested = -1, None, 0
        for n in events:
            Ln = float(L[t, n]) if np.ndim(L) else L
            J = (I[0] - 2 * Ln, I[1] + 2 * Ln)
            tested += 1
            c = detect_hyperbolic_fixed_point(word_map(cfg, W[t], n), J, I=I, word=W[t, :n])
            if c is not None:
                c.meta.update(trial=t, n=int(n))
                certs.append(c)
                if cert is None:
                    first, cert = int(n), c
                if first_only:
                    break
        rate = float(logs[t, -1] / max_len)
        stats.append(TrialStats(t, first, cert.fixed_point if cert else math.nan,
                                cert.derivative if cert else math.nan, rate, tested))
    params.update(trials=trials, max_len=max_len, seed=seed)
    return HuntResult(route, certs, stats, params)
