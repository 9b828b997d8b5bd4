"""Random word laws: the Polya-urn walk on N_0^d and Bernoulli product laws.

Randomness: every trajectory gets its own Philox4x64 stream keyed by
``SeedSequence([seed, index])`` (see ``substream``), so Monte-Carlo output
does not depend on how trajectories are scheduled.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DomainError

MAX_DP_STEPS = 64


def substream(seed, index=0) -> np.random.Generator:
    """Independent generator for trajectory ``index`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


# ---------------------------------------------------------------------------
# urn walk
# ---------------------------------------------------------------------------

@dataclass
class UrnWalk:
    d: int = 2
    state: np.ndarray = None

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError("urn walk needs d >= 2")
        if self.state is None:
            self.state = np.zeros(self.d, dtype=np.int64)
        self.state = np.asarray(self.state, dtype=np.int64)
        if self.state.shape != (self.d,) or np.any(self.state < 0):
            raise DomainError("state must be d nonnegative integers")

    def probabilities(self):
        """(1 + n_i) / (n_1 + ... + n_d + d)."""
        return (1.0 + self.state) / (self.state.sum() + self.d)

    def exact_probabilities(self):
        tot = int(self.state.sum()) + self.d
        return [Fraction(1 + int(n), tot) for n in self.state]


def urn_step(w: UrnWalk, rng) -> int:
    """Advance the walk by one step; returns the coordinate that was incremented."""
    i = int(rng.choice(w.d, p=w.probabilities()))
    w.state[i] += 1
    return i


def exact_arrival_distribution(d, k, exact=None):
    """Law of the urn walk after k steps, as {state: probability}.

    ``exact=True`` uses Fractions; ``exact=False`` a vectorized float DP
    (each cell receives at most d contributions, so plain summation is
    accurate to a few ulp).  By default Fractions are used while the
    final layer has at most 2000 states.
    """
    if d < 2:
        raise ConfigError("urn walk needs d >= 2")
    if k < 0 or k > MAX_DP_STEPS:
        raise ConfigError(f"k must be in [0, {MAX_DP_STEPS}], got {k}")
    if exact is None:
        exact = math.comb(k + d - 1, d - 1) <= 2000
    if exact:
        layer = {(0,) * d: Fraction(1)}
        for t in range(k):
            nxt = {}
            for s, p in layer.items():
                for i in range(d):
                    ns = s[:i] + (s[i] + 1,) + s[i + 1:]
                    nxt[ns] = nxt.get(ns, 0) + p * Fraction(1 + s[i], t + d)
            layer = nxt
        return layer
    states = np.zeros((1, d), dtype=np.int64)
    probs = np.ones(1)
    base = k + 1
    w = base ** np.arange(d, dtype=np.int64)
    for t in range(k):
        new = np.concatenate([states + np.eye(d, dtype=np.int64)[i] for i in range(d)])
        wt = np.concatenate([probs * (1.0 + states[:, i]) / (t + d) for i in range(d)])
        keys = new @ w
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        probs = np.bincount(inv, weights=wt, minlength=len(uniq))
        states = new[first]
    return {tuple(int(v) for v in s): float(p) for s, p in zip(states, probs)}


# ---------------------------------------------------------------------------
# word laws and sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Urn:
    d: int = 2

    @property
    def tag(self):
        return f"Urn({self.d})"


@dataclass(frozen=True)
class Bernoulli:
    weights: tuple = (0.5, 0.5)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ConfigError("Bernoulli weights must be a probability vector")

    @property
    def tag(self):
        return "Bernoulli(" + ",".join(f"{w:g}" for w in self.weights) + ")"


@dataclass
class WordSample:
    word: np.ndarray
    seed: int
    law: object
    index: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.word)


def sample_word(law, length, seed, index=0) -> WordSample:
    """Draw a word of generator indices from ``law``.

    The urn law is sampled through its mixture form: a Polya urn started
    with one ball of each colour is i.i.d. given p ~ Dirichlet(1, ..., 1),
    so the whole word is drawn at once.
    """
    if length < 1:
        raise ConfigError("length must be >= 1")
    rng = substream(seed, index)
    if isinstance(law, Urn):
        p = rng.dirichlet(np.ones(law.d))
        word = rng.choice(law.d, size=length, p=p)
        return WordSample(word, seed, law, index, {"mixing": p})
    if isinstance(law, Bernoulli):
        word = rng.choice(len(law.weights), size=length, p=np.asarray(law.weights))
        return WordSample(word, seed, law, index)
    raise ConfigError(f"unknown law {law!r}")


def sample_words(law, length, seed, count, batch=0):
    """``count`` words at once, as a (count, length) array.

    Drawn from the single substream (seed, 2^32 + batch); rows are not the
    words sample_word would return for the same seed.
    """
    if length < 1 or count < 1:
        raise ConfigError("length and count must be >= 1")
    rng = substream(seed, (1 << 32) + batch)
    if isinstance(law, Urn):
        p = rng.dirichlet(np.ones(law.d), size=count)
    elif isinstance(law, Bernoulli):
        p = np.broadcast_to(np.asarray(law.weights, dtype=float), (count, len(law.weights)))
    else:
        raise ConfigError(f"unknown law {law!r}")
    cdf = np.cumsum(p, axis=1)
    u = rng.random((count, length))
    # index of the first cdf entry above u
    return (u[:, :, None] >= cdf[:, None, :-1]).sum(axis=2).astype(np.int64)


def urn_path(word, d):
    """States visited by the urn walk that emits ``word`` (length+1 rows)."""
    steps = np.zeros((len(word), d), dtype=np.int64)
    steps[np.arange(len(word)), word] = 1
    return np.vstack([np.zeros((1, d), dtype=np.int64), np.cumsum(steps, axis=0)])


def write_words_csv(path, sample: WordSample):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "generator"])
        for k, g in enumerate(sample.word):
            wr.writerow([k, int(g)])


def read_words_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return np.array([int(r["generator"]) for r in rows], dtype=np.int64)


# ---------------------------------------------------------------------------
# drift towards the diagonal
# ---------------------------------------------------------------------------

@dataclass
class DriftReport:
    d: int
    trials: np.ndarray        # per direction: steps taken from states where it is a max coordinate
    hits: np.ndarray          # ... of which went in that direction
    formula_min: float        # min over visited such states of (1 + max) / (sum + d)

    @property
    def freq(self):
        return self.hits / np.maximum(self.trials, 1)

    @property
    def sigma(self):
        p = 1.0 / self.d
        return np.sqrt(p * (1 - p) / np.maximum(self.trials, 1))

    @property
    def min_freq(self):
        return float(self.freq.min())

    @property
    def ok(self):
        return bool(np.all(self.freq >= 1.0 / self.d - 3 * self.sigma) and self.formula_min >= 1.0 / self.d)


def diagonal_drift_check(d, paths, length, seed) -> DriftReport:
    """Empirical frequency of stepping along a coordinate that is currently maximal."""
    trials = np.zeros(d, dtype=np.int64)
    hits = np.zeros(d, dtype=np.int64)
    fmin = 1.0
    for t in range(paths):
        s = sample_word(Urn(d), length, seed, t)
        st = urn_path(s.word, d)[:-1]
        mx = st.max(axis=1)
        is_max = st == mx[:, None]
        took = np.zeros_like(is_max)
        took[np.arange(length), s.word] = True
        trials += is_max.sum(axis=0)
        hits += (is_max & took).sum(axis=0)
        fmin = min(fmin, float(np.min((1.0 + mx) / (st.sum(axis=1) + d))))
    return DriftReport(d, trials, hits, fmin)
