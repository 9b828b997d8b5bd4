"""Random walks on groups of circle (or interval) maps and their stationary measures.

A law mu = sum_g mu(g) delta_g acts on probability measures by
mu * nu = sum_g mu(g) g_* nu.  Measures live on a uniform grid of G cells:
the continuous part is a CDF sampled at the nodes k/G (linear in between)
and point masses are tracked separately until they drop below 1e-6, when
they are spread over their grid cell.  Pushforwards by monotone maps are
exact at the nodes: the mass of [0, y] under g_* nu is nu([0, g^{-1}(y)]),
taken on lifts for circle maps.

CDFs on the circle are measured from 0: F(x) = nu([0, x]).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d

from .distortion import MARGIN, all_fixed_points
from .errors import ConfigError, DomainError, PreconditionError
from .maps import Diffeo, Identity, Mobius, PiecewiseExplicit, Rotation, Word, _mod1
from .walks import Bernoulli, sample_words, substream

GRID = 4096
ATOM_FLOOR = 1e-6
MAX_ATOMS = 1 << 16
MERGE_TOL = 1e-12
MASS_TOL = 1e-12
CHECKPOINTS = (10, 25, 50, 100)


# ---------------------------------------------------------------------------
# the law mu
# ---------------------------------------------------------------------------

def _is_inverse(g, h, probes=np.linspace(0.013, 0.987, 17)):
    """h o g = id, checked on probe points."""
    if g.circle != h.circle:
        return False
    try:
        if g.circle:
            y = h.lift(g.lift(probes))
            return bool(np.all(np.abs(y - probes) < 1e-9))
        lo, hi = g.domain
        x = lo + probes * (hi - lo)
        return bool(np.all(np.abs(h.eval(g.eval(x)) - x) < 1e-9))
    except DomainError:
        return False


@dataclass(frozen=True)
class GeneratorMeasure:
    generators: tuple
    weights: tuple
    symmetric: bool = field(init=False)

    def __post_init__(self):
        gens, w = tuple(self.generators), tuple(float(v) for v in self.weights)
        if len(gens) != len(w) or not gens:
            raise ConfigError("need one weight per generator")
        if any(v <= 0 for v in w) or abs(math.fsum(w) - 1) > 1e-12:
            raise ConfigError("weights must be positive and sum to 1")
        if len({g.circle for g in gens}) != 1:
            raise ConfigError("cannot mix circle and interval maps")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "symmetric", self._check_symmetric())

    def _check_symmetric(self):
        for g, wg in zip(self.generators, self.weights):
            if not any(abs(wg - wh) < 1e-12 and _is_inverse(g, h)
                       for h, wh in zip(self.generators, self.weights)):
                return False
        return True

    @classmethod
    def symmetrized(cls, gens, weights=None):
        """gens and their inverses, each pair sharing the weight of its generator."""
        gens = list(gens)
        w = np.full(len(gens), 1 / len(gens)) if weights is None else np.asarray(weights, float)
        out_g, out_w = [], []
        for g, v in zip(gens, w):
            out_g += [g, g.inverse()]
            out_w += [v / 2, v / 2]
        return cls(tuple(out_g), tuple(out_w))

    @property
    def circle(self):
        return self.generators[0].circle

    @property
    def inverse_index(self):
        """For each generator the index of its inverse in the list, or -1."""
        return [next((k for k, h in enumerate(self.generators) if _is_inverse(g, h)), -1)
                for g in self.generators]

    @property
    def law(self):
        return Bernoulli(self.weights)

    def __len__(self):
        return len(self.generators)


def psl_pair() -> GeneratorMeasure:
    """A = diag(2, 1/2), B = R A R^-1 with R the rotation of the plane by 1/8 turn; 1/4 on A^+-1, B^+-1."""
    A = np.diag([2.0, 0.5])
    c = s = math.sqrt(0.5)
    R = np.array([[c, -s], [s, c]])
    a, b = Mobius(A), Mobius(R @ A @ R.T)
    return GeneratorMeasure((a, a.inverse(), b, b.inverse()), (0.25,) * 4)


def rotation_pair(theta=(math.sqrt(5) - 1) / 2) -> GeneratorMeasure:
    return GeneratorMeasure((Rotation(theta), Rotation(-theta)), (0.5, 0.5))


def north_south(multiplier=100.0) -> Mobius:
    """Circle Mobius map attracting to 0 with derivative 1/multiplier, repelling at 1/2."""
    r = math.sqrt(multiplier)
    return Mobius(np.diag([r, 1 / r]))


def interval_pair() -> GeneratorMeasure:
    """f(x) = x / (2 - x) and its inverse on [0, 1], weights 1/2."""
    f = Mobius(np.array([[1.0, 0.0], [-1.0, 2.0]]), (0.0, 1.0))
    return GeneratorMeasure((f, f.inverse()), (0.5, 0.5))


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureCDF:
    """Continuous part Fc at the nodes plus atoms (ax, am).

    Fc[0] = 0 and Fc[G] + sum(am) = 1.  Nodes default to k/G; interval
    measures may use a graded node set (see ``graded_nodes``).
    """
    Fc: np.ndarray
    ax: np.ndarray = field(default_factory=lambda: np.zeros(0))
    am: np.ndarray = field(default_factory=lambda: np.zeros(0))
    circle: bool = True
    xs: np.ndarray | None = None

    def __post_init__(self):
        Fc = np.asarray(self.Fc, dtype=float)
        G = len(Fc) - 1
        if G < 2 or G & (G - 1):
            raise ConfigError("grid size must be a power of two")
        if self.xs is not None:
            xs = np.asarray(self.xs, dtype=float)
            if self.circle or len(xs) != G + 1 or xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
                raise ConfigError("custom nodes: increasing from 0 to 1, interval measures only")
            xs.setflags(write=False)
            object.__setattr__(self, "xs", xs)
        d = np.diff(Fc)
        if Fc[0] != 0.0 or np.any(d < -1e-15):
            raise InternalMeasureError("CDF must start at 0 and be nondecreasing")
        am = np.asarray(self.am, dtype=float)
        if np.any(am < 0) or abs(Fc[-1] + am.sum() - 1) > MASS_TOL:
            raise InternalMeasureError(f"total mass {Fc[-1] + am.sum()!r} != 1")
        Fc = np.maximum.accumulate(Fc)
        Fc.setflags(write=False)
        object.__setattr__(self, "Fc", Fc)
        object.__setattr__(self, "ax", np.asarray(self.ax, dtype=float))
        object.__setattr__(self, "am", am)

    # -- constructors ------------------------------------------------------
    @classmethod
    def lebesgue(cls, G=GRID, circle=True, xs=None):
        nodes = np.linspace(0.0, 1.0, G + 1) if xs is None else np.asarray(xs, dtype=float)
        return cls(nodes.copy(), circle=circle, xs=xs)

    @classmethod
    def dirac(cls, x, G=GRID, circle=True, xs=None):
        return cls(np.zeros(G + 1), np.array([float(x)]), np.array([1.0]), circle, xs)

    @classmethod
    def from_density(cls, rho, G=GRID, circle=True, fine=8, xs=None):
        """CDF of the normalized density rho (midpoint rule, `fine` points per cell)."""
        nodes = np.linspace(0.0, 1.0, G + 1) if xs is None else np.asarray(xs, dtype=float)
        t = (np.arange(fine) + 0.5) / fine
        x = nodes[:-1, None] + t[None, :] * np.diff(nodes)[:, None]
        cell = np.asarray(rho(x), dtype=float).mean(axis=1) * np.diff(nodes)
        if np.any(cell < 0):
            raise ConfigError("density must be nonnegative")
        return cls(np.concatenate([[0.0], np.cumsum(cell) / cell.sum()]), circle=circle, xs=xs)

    # -- evaluation ---------------------------------------------------------
    @property
    def G(self):
        return len(self.Fc) - 1

    @property
    def nodes(self):
        return np.linspace(0.0, 1.0, self.G + 1) if self.xs is None else self.xs

    @property
    def atom_mass(self):
        return float(self.am.sum())

    def _cont(self, x):
        return np.interp(x, self.nodes, self.Fc)

    def cdf(self, x, left=False):
        """nu([0, x]) (or nu([0, x[) with left=True) for x in [0, 1]."""
        x = np.asarray(x, dtype=float)
        out = self._cont(x)
        if self.am.size:
            o = np.argsort(self.ax)
            cum = np.concatenate([[0.0], np.cumsum(self.am[o])])
            k = np.searchsorted(self.ax[o], x, side="left" if left else "right")
            out = out + cum[k]
        return out

    def cdf_lift(self, t):
        """Lift of the CDF: cdf(t - n) + n on the circle, clipped on the interval."""
        t = np.asarray(t, dtype=float)
        if not self.circle:
            return self.cdf(np.clip(t, 0.0, 1.0))
        n = np.floor(t)
        return self.cdf(t - n) + n

    @property
    def values(self):
        """Full CDF at the nodes."""
        return self.cdf(self.nodes)

    def mass(self, lo, hi):
        """nu([lo, hi]), closed; on the circle [lo, hi] is an arc of the lift (hi >= lo)."""
        if self.circle:
            return float(self.cdf_lift(hi) - self.cdf_lift(np.nextafter(lo, -np.inf)))
        return float(self.cdf(hi) - self.cdf(lo, left=True))

    def sample(self, n, rng):
        """n points drawn from nu (inverse CDF)."""
        u = rng.random(n)
        out = np.empty(n)
        split = u < self.atom_mass
        if self.am.size:
            out[split] = rng.choice(self.ax, size=int(split.sum()), p=self.am / self.am.sum())
        cont = ~split
        if self.Fc[-1] > 0:
            v = rng.random(int(cont.sum())) * self.Fc[-1]
            # inverse of the piecewise-linear CDF; flat cells are skipped
            k = np.clip(np.searchsorted(self.Fc, v, side="right") - 1, 0, self.G - 1)
            dF = self.Fc[k + 1] - self.Fc[k]
            frac = np.where(dF > 0, (v - self.Fc[k]) / np.where(dF > 0, dF, 1.0), 0.5)
            x = self.nodes
            out[cont] = x[k] + frac * (x[k + 1] - x[k])
        return out


class InternalMeasureError(DomainError):
    pass


def sup_distance(a: MeasureCDF, b: MeasureCDF) -> float:
    """sup |F_a - F_b| over [0, 1], checked at nodes and on both sides of every atom.

    Atoms closer than the merge tolerance count as the same point.
    """
    ax = np.concatenate([a.ax, b.ax])
    pts = np.clip(np.concatenate([a.nodes, ax + 2 * MERGE_TOL, ax - 2 * MERGE_TOL]), 0.0, 1.0)
    return float(np.abs(a.cdf(pts) - b.cdf(pts)).max())


def graded_nodes(G=GRID, lo=-60.0, hi=30.0):
    """Interval nodes uniform in the logit chart u = log(x / (1 - x)), u in [lo, hi], plus 0 and 1.

    Random walks that push mass towards 0 and 1 move by steps of fixed
    size in u, so the mass keeps moving instead of piling up in the end
    cells of a uniform grid.  hi is limited by the spacing of floats below 1.
    """
    u = np.linspace(lo, hi, G - 1)
    x = np.concatenate([[0.0], 1 / (1 + np.exp(-u)), [1.0]])
    if np.any(np.diff(x) <= 0):
        raise ConfigError("graded nodes collapse in floating point; lower hi")
    return x


def _merge_atoms(ax, am, circle, nodes):
    """Combine atoms closer than MERGE_TOL; fold light ones into their grid cell."""
    G = len(nodes) - 1
    if ax.size == 0:
        return ax, am, np.zeros(G + 1)
    if circle:
        ax = np.where(ax > 1 - MERGE_TOL, 0.0, ax)
    o = np.argsort(ax, kind="stable")
    ax, am = ax[o], am[o]
    start = np.concatenate([[True], np.diff(ax) > MERGE_TOL])
    grp = np.cumsum(start) - 1
    ax = ax[start]
    am = np.bincount(grp, weights=am)
    light = am < ATOM_FLOOR
    if (~light).sum() > MAX_ATOMS:
        cut = np.sort(am)[-MAX_ATOMS]
        light |= am < cut
    inc = np.zeros(G + 1)
    if light.any():
        # spread uniformly over the cell [k/G, (k+1)/G]
        k = np.clip(np.searchsorted(nodes, ax[light], side="right") - 1, 0, G - 1)
        np.add.at(inc, k + 1, am[light])
    return ax[~light], am[~light], np.cumsum(inc)


def _combine(parts, like: MeasureCDF):
    """sum of (weight, Fc, ax, am) pieces into one MeasureCDF on the nodes of `like`."""
    circle = like.circle
    Fc = np.zeros(like.G + 1)
    axs, ams = [], []
    for w, F, ax, am in parts:
        Fc += w * F
        axs.append(ax)
        ams.append(w * am)
    ax, am, folded = _merge_atoms(np.concatenate(axs), np.concatenate(ams), circle, like.nodes)
    Fc = Fc + folded
    total = Fc[-1] + am.sum()
    if abs(total - 1) > 1e-9:
        raise InternalMeasureError(f"mass drifted to {total!r}")
    # remove rounding drift from the continuous part
    if Fc[-1] > 0:
        Fc = Fc * ((1 - am.sum()) / Fc[-1])
    Fc[0] = 0.0
    return MeasureCDF(Fc, ax, am, circle, like.xs)


def pushforward_parts(nu: MeasureCDF, g: Diffeo):
    """(Fc, ax, am) of g_* nu."""
    y = nu.nodes
    mc = nu.Fc[-1]
    if nu.circle:
        t = g.lift_inv(y)
        n = np.floor(t)
        F = nu._cont(t - n) + n * mc
        F = F - F[0]
        ax = _mod1(g.lift(nu.ax)) if nu.ax.size else nu.ax
    else:
        lo, hi = g.image()
        F = nu._cont(np.clip(g.eval_inv(np.clip(y, lo, hi)), 0.0, 1.0))
        F = np.where(y < lo, 0.0, F)
        ax = g.eval(nu.ax) if nu.ax.size else nu.ax
    return np.maximum.accumulate(F), ax, nu.am


def pushforward(nu: MeasureCDF, g: Diffeo) -> MeasureCDF:
    return _combine([(1.0, *pushforward_parts(nu, g))], nu)


def diffuse(nu: MeasureCDF, mu: GeneratorMeasure) -> MeasureCDF:
    """mu * nu = sum_g mu(g) g_* nu."""
    if mu.circle != nu.circle:
        raise ConfigError("measure and maps live on different spaces")
    return _combine([(w, *pushforward_parts(nu, g)) for g, w in zip(mu.generators, mu.weights)], nu)


def mix(measures, weights) -> MeasureCDF:
    m0 = measures[0]
    return _combine([(w, m.Fc, m.ax, m.am) for m, w in zip(measures, weights)], m0)


def integrate(nu: MeasureCDF, psi):
    """(int psi dnu, error estimate): Simpson on every cell of the continuous part plus atoms."""
    x = nu.nodes
    a, m, b = psi(x[:-1]), psi((x[:-1] + x[1:]) / 2), psi(x[1:])
    dF = np.diff(nu.Fc)
    simpson = math.fsum(dF * (a + 4 * m + b) / 6)
    mid = math.fsum(dF * m)
    atoms = math.fsum(nu.am * psi(nu.ax)) if nu.am.size else 0.0
    return simpson + atoms, abs(simpson - mid)


def apply_diffusion_operator(mu: GeneratorMeasure, psi):
    """D psi = sum_g mu(g) psi o g."""
    return lambda x: sum(w * psi(g.eval(x)) for g, w in zip(mu.generators, mu.weights))


# ---------------------------------------------------------------------------
# stationary measures
# ---------------------------------------------------------------------------

@dataclass
class StationaryReport:
    measure: MeasureCDF
    residual: float
    N: int
    converged: bool
    residuals: list = field(default_factory=list)     # (N, residual) at every check


def solve_stationary(mu: GeneratorMeasure, nu0: MeasureCDF, tol=1e-3, max_iter=20000,
                     check_every=10) -> StationaryReport:
    """Cesaro averages of mu^n * nu0 until sup |avg - mu * avg| < tol."""
    if not tol > 0:
        raise ConfigError("tol must be positive")
    cur = nu0
    total = None
    trace = []
    N = 0
    residual = math.inf
    while N < max_iter:
        acc = (cur.Fc, cur.ax, cur.am)
        if total is None:
            total = [acc[0].copy(), [acc[1]], [acc[2]]]
        else:
            total[0] += acc[0]
            total[1].append(acc[1])
            total[2].append(acc[2])
        N += 1
        cur = diffuse(cur, mu)
        if N % check_every == 0 or N == max_iter:
            avg = _combine([(1.0 / N, total[0], np.concatenate(total[1]), np.concatenate(total[2]))], nu0)
            # keep the running atom list short
            total = [avg.Fc * N, [avg.ax], [avg.am * N]]
            residual = sup_distance(avg, diffuse(avg, mu))
            trace.append((N, residual))
            if residual < tol:
                return StationaryReport(avg, residual, N, True, trace)
    avg = _combine([(1.0 / N, total[0], np.concatenate(total[1]), np.concatenate(total[2]))], nu0)
    return StationaryReport(avg, residual, N, False, trace)


@dataclass
class UniquenessReport:
    distance: float
    a: StationaryReport
    b: StationaryReport
    tol: float

    @property
    def verdict(self):
        if not (self.a.converged and self.b.converged):
            return "inconclusive"
        return "unique" if self.distance < self.tol else "distinct"

    @property
    def passed(self):
        return self.verdict == "unique"


def check_uniqueness(mu, nu0_a, nu0_b, tol=1e-3, solve_tol=None, max_iter=20000) -> UniquenessReport:
    """Solve from both seeds and compare; solve_tol defaults to tol / 10."""
    st = tol / 10 if solve_tol is None else solve_tol
    a = solve_stationary(mu, nu0_a, st, max_iter)
    b = solve_stationary(mu, nu0_b, st, max_iter)
    return UniquenessReport(sup_distance(a.measure, b.measure), a, b, tol)


# ---------------------------------------------------------------------------
# random products on a grid
# ---------------------------------------------------------------------------

def _lift_nodes(h: Diffeo, G):
    """Lift of a circle map at the nodes k/G, k = 0..G, with H(1) = H(0) + 1 exactly.

    Evaluating at 1 directly would feed sin(pi) != 0 into Mobius charts.
    """
    H = h.lift(np.arange(G) / G)
    return np.concatenate([H, H[:1] + 1.0])


def _grid_orbits(gens, W, G, inverse=False, record=()):
    """Lifts X_k = g_{w_k}(X_{k-1}) (or g_{w_k}^{-1}) of the nodes k/G for every word row.

    Yields (k, X) at the record steps, X of shape (T, G + 1).
    """
    T, n = W.shape
    X = np.broadcast_to(np.arange(G) / G, (T, G)).copy()
    rec = set(record)
    for k in range(n):
        for j, g in enumerate(gens):
            m = W[:, k] == j
            if m.any():
                X[m] = g.lift_inv(X[m]) if inverse else g.lift(X[m])
        if k + 1 in rec:
            yield k + 1, np.concatenate([X, X[:, :1] + 1.0], axis=1)


def _min_arc_with_mass(Flift_rows, target):
    """Shortest arc [x_i, x_j] of the node grid with F(x_j) - F(x_i) >= target, per row.

    Flift_rows: (T, G+1) lifted CDF values at the nodes; returns lengths.
    """
    T, P = Flift_rows.shape
    G = P - 1
    xs = np.arange(2 * G + 1) / G
    out = np.empty(T)
    for t in range(T):
        F = np.maximum.accumulate(Flift_rows[t])
        Fe = np.concatenate([F, F[1:] + (F[-1] - F[0])])
        j = np.searchsorted(Fe, Fe[:G] + target - 1e-15, side="left")
        j = np.minimum(j, 2 * G)
        out[t] = float((xs[j] - xs[:G]).min())
    return out


@dataclass
class CollapseReport:
    eps: float
    length: int
    fraction: float                 # words whose (1-eps)-mass arc has length <= eps at the end
    arc_lengths: np.ndarray         # per word, at the final time
    checkpoints: tuple
    median_arc: np.ndarray          # median arc length at each checkpoint
    median_max_mass: np.ndarray     # median of the largest eps-arc mass at each checkpoint
    stationary_residual: float


def _max_mass_eps_arc(Flift_rows, eps):
    G = Flift_rows.shape[1] - 1
    k = max(1, int(math.floor(eps * G)))
    F = Flift_rows
    Fe = np.concatenate([F, F[:, 1:] + (F[:, -1:] - F[:, :1])], axis=1)
    return (Fe[:, k:k + G] - Fe[:, :G]).max(axis=1)


def dirac_collapse(mu: GeneratorMeasure, nu: MeasureCDF, count=1000, length=100, eps=0.05, seed=0,
                   checkpoints=CHECKPOINTS, check_stationary=True, grid=None) -> CollapseReport:
    """Push nu by reversed products g_1 o ... o g_n of sampled words.

    (g_1 ... g_n)^{-1}(y) = g_n^{-1}(... g_1^{-1}(y)) is built one letter at a
    time on a node grid of y, so the pushed CDF at y is exact for every n.
    """
    if not nu.circle:
        raise ConfigError("dirac_collapse works on the circle")
    res = sup_distance(nu, diffuse(nu, mu))
    if check_stationary and res >= 1e-3:
        raise PreconditionError(f"nu is not stationary (residual {res:.3g})")
    G = grid or nu.G
    W = sample_words(mu.law, length, seed, count)
    cps = tuple(c for c in checkpoints if c < length) + (length,)
    med_arc, med_mass, final = [], [], None
    for n, Y in _grid_orbits(mu.generators, W, G, inverse=True, record=cps):
        F = nu.cdf_lift(Y)
        F = F - F[:, :1]
        arcs = _min_arc_with_mass(F, 1 - eps)
        med_arc.append(float(np.median(arcs)))
        med_mass.append(float(np.median(_max_mass_eps_arc(F, eps))))
        final = arcs
    return CollapseReport(eps, length, float(np.mean(final <= eps)), final, cps,
                          np.array(med_arc), np.array(med_mass), res)


# ---------------------------------------------------------------------------
# contraction coefficient
# ---------------------------------------------------------------------------

@dataclass
class ContractionReport:
    c: float
    I: tuple        # (left, length)
    J: tuple        # (left, length), J = h(closure of the complement of I)
    grid: int


def _contraction_from_lift(H):
    """min over node arcs I = [x_i, x_j] of max(|I|, 1 - |h(I)|) from lifted values H at the nodes."""
    G = len(H) - 1
    H = np.maximum.accumulate(np.asarray(H, dtype=float))
    x = np.arange(2 * G + 1) / G
    He = np.concatenate([H, H[1:] + (H[-1] - H[0])])
    S = x + He
    i = np.arange(G)
    j = np.minimum(np.searchsorted(S, S[:G] + 1.0, side="left"), 2 * G)
    best = (math.inf, 0, 0)
    for jj in (j, np.maximum(j - 1, i)):
        v = np.maximum(x[jj] - x[i], 1.0 - (He[jj] - He[i]))
        k = int(np.argmin(v))
        if v[k] < best[0]:
            best = (float(v[k]), int(i[k]), int(jj[k]))
    c, a, b = best
    I = (x[a], x[b] - x[a])
    J = (float(_mod1(He[b])), 1.0 - (He[b] - He[a]))
    return c, I, J


def contraction_coefficient(h: Diffeo, G=GRID) -> ContractionReport:
    if not h.circle:
        raise ConfigError("contraction coefficient is defined for circle maps")
    c, I, J = _contraction_from_lift(_lift_nodes(h, G))
    return ContractionReport(c, I, J, G)


@dataclass
class ContractionTrace:
    checkpoints: tuple
    median: np.ndarray
    q90: np.ndarray
    values: np.ndarray      # (count, len(checkpoints))

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.median) <= 1.0 / GRID))


def contraction_along_words(mu: GeneratorMeasure, count=1000, length=100, seed=0,
                            checkpoints=CHECKPOINTS, G=GRID) -> ContractionTrace:
    """c(h_n) for h_n = g_{w_n} o ... o g_{w_1} at the checkpoints.

    Reversing the letters of an i.i.d. word does not change its law, so the
    statistics are those of the left products g_1 ... g_n as well.
    """
    W = sample_words(mu.law, length, seed, count)
    cps = tuple(c for c in checkpoints if c <= length)
    vals = np.empty((count, len(cps)))
    for col, (n, X) in enumerate(_grid_orbits(mu.generators, W, G, record=cps)):
        for t in range(count):
            vals[t, col] = _contraction_from_lift(X[t])[0]
    return ContractionTrace(cps, np.median(vals, axis=0), np.quantile(vals, 0.9, axis=0), vals)


# ---------------------------------------------------------------------------
# D_eta and fixed-point inventories
# ---------------------------------------------------------------------------

@dataclass
class DEtaReport:
    member: bool
    eta: float
    I: tuple | None         # (left, length) of I'
    J: tuple | None         # (left, length) of J' = g(closure of the complement of I')
    max_deriv: float
    reason: str = ""


def d_eta_membership(g: Diffeo, eta, G=GRID) -> DEtaReport:
    """Search node arcs I' (|I'| <= eta) with J' = g(complement) of size <= eta, 2 eta away, g' < 1 off I'."""
    if not 0 < eta < 0.25:
        raise ConfigError("eta must be in (0, 1/4)")
    if not g.circle:
        raise ConfigError("D_eta is defined for circle maps")
    x = np.arange(2 * G + 1) / G
    H = np.maximum.accumulate(_lift_nodes(g, G))
    He = np.concatenate([H, H[1:] + (H[-1] - H[0])])
    D = g.deriv(x[:G])
    De = np.concatenate([D, D, D[:1]])
    i = np.arange(G)
    reasons = set()
    best = None
    for k in range(1, int(math.floor(eta * G + 1e-9)) + 1):
        t = 1.0 - (He[i + k] - He[i])
        s = k / G
        ok_size = t <= eta
        q = He[i + k]
        u = np.mod(q - x[i], 1.0)
        dist = np.where((u >= s) & (u + t <= 1), np.minimum(u - s, 1 - u - t), 0.0)
        ok_dist = dist >= 2 * eta
        w = G - k + 1
        mx = maximum_filter1d(De, size=w, mode="nearest")
        # window [i+k, i+G] has centre i + k + w // 2
        sup = mx[i + k + w // 2]
        ok_der = sup < 1.0
        good = ok_size & ok_dist & ok_der
        if good.any():
            a = int(np.argmax(good))
            best = DEtaReport(True, eta, (float(x[a]), s), (float(_mod1(q[a])), float(t[a])),
                              float(sup[a]))
            return best
        if not ok_size.any():
            reasons.add("size")
        elif not (ok_size & ok_dist).any():
            reasons.add("separation")
        else:
            reasons.add("derivative")
    order = ["derivative", "separation", "size"]
    why = next((r for r in order if r in reasons), "size")
    return DEtaReport(False, eta, None, None, math.nan, why)


@dataclass
class FixedPoint:
    x: float
    derivative: float
    kind: str       # contracting / dilating / undecided
    topo: str       # attracting / repelling / semi, from the sign change of g(x) - x


@dataclass
class MorseSmaleReport:
    points: list
    premise: bool | None
    ok: bool

    @property
    def counts(self):
        return {k: sum(p.kind == k for p in self.points) for k in ("contracting", "dilating", "undecided")}

    @property
    def topo_signature(self):
        return sorted(p.topo for p in self.points)


def fixed_point_inventory(g: Diffeo, grid=GRID + 1, margin=MARGIN):
    if not g.circle:
        roots = all_fixed_points(g, g.domain, grid)
        # endpoints fixed up to rounding give no sign change
        roots += [(e, None) for e in g.domain if abs(float(g.eval(e)) - e) < 1e-12]
    else:
        roots = all_fixed_points(g, (0.0, 1.0), grid)
    xs = []
    for r, _ in roots:
        r = float(_mod1(r)) if g.circle else r
        gap = (lambda v: min(abs(r - v), 1 - abs(r - v))) if g.circle else (lambda v: abs(r - v))
        if all(gap(v) > 1e-9 for v in xs):
            xs.append(r)
    pts = []
    h = 1e-7
    for r in sorted(xs):
        ld = float(g.log_deriv(r))
        kind = "contracting" if ld < -margin else ("dilating" if ld > margin else "undecided")
        lo, hi = r - h, r + h
        if g.circle:
            dl, dr = float(g.lift(lo)) - lo, float(g.lift(hi)) - hi
            k = round(float(g.lift(r)) - r)
            dl, dr = dl - k, dr - k
        else:
            a, b = g.domain
            dl = float(g.eval(max(lo, a))) - max(lo, a) if r > a else -1.0
            dr = float(g.eval(min(hi, b))) - min(hi, b) if r < b else 1.0
            if r <= a:
                dl = -dr
            if r >= b:
                dr = -dl
        topo = "attracting" if dl > 0 > dr else ("repelling" if dl < 0 < dr else "semi")
        pts.append(FixedPoint(r, math.exp(ld), kind, topo))
    return pts


def morse_smale_check(g: Diffeo, eta=None, G=GRID) -> MorseSmaleReport:
    """Fixed-point inventory; when g and g^-1 are both in D_eta it must be one contracting and one dilating point."""
    pts = fixed_point_inventory(g, G + 1)
    premise = None
    ok = True
    if eta is not None:
        premise = d_eta_membership(g, eta, G).member and d_eta_membership(g.inverse(), eta, G).member
        if premise:
            kinds = sorted(p.kind for p in pts)
            ok = kinds == ["contracting", "dilating"]
    return MorseSmaleReport(pts, premise, ok)


# ---------------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------------

@dataclass
class LyapunovReport:
    mode: str
    value: float
    stderr: float           # Birkhoff standard error, or quadrature error estimate
    per_word: np.ndarray | None = None

    def ci(self, z=2.576):
        return (self.value - z * self.stderr, self.value + z * self.stderr)


def _check_derivatives(mu, G=GRID):
    x = (np.arange(G) + 0.5) / G
    for g in mu.generators:
        pts = x if g.circle else g.domain[0] + x * (g.domain[1] - g.domain[0])
        d = np.asarray(g.deriv(pts))
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise DomainError(f"nonpositive or non-finite derivative for {g!r}")


def lyapunov_exponent(mu: GeneratorMeasure, nu: MeasureCDF, mode="quadrature", count=1000,
                      length=1000, seed=0) -> LyapunovReport:
    """lambda(nu) = sum_g mu(g) int log g' dnu.

    quadrature: cellwise Simpson against nu (error = Simpson vs midpoint).
    birkhoff: (1/n) log h_n'(x) along sampled words with x ~ nu; mean and
    standard error over words.
    """
    _check_derivatives(mu)
    if mode == "quadrature":
        val, err = 0.0, 0.0
        for g, w in zip(mu.generators, mu.weights):
            v, e = integrate(nu, lambda x, g=g: np.asarray(g.log_deriv(x), dtype=float))
            val += w * v
            err += w * e
        return LyapunovReport("quadrature", val, err)
    if mode != "birkhoff":
        raise ConfigError(f"unknown mode {mode!r}")
    W = sample_words(mu.law, length, seed, count)
    x = nu.sample(count, substream(seed, 7))
    S = np.zeros(count)
    for k in range(length):
        for j, g in enumerate(mu.generators):
            m = W[:, k] == j
            if m.any():
                S[m] += g.log_deriv(x[m])
                x[m] = g.eval(x[m])
    per = S / length
    se = float(per.std(ddof=1) / math.sqrt(count)) if count > 1 else math.inf
    return LyapunovReport("birkhoff", float(per.mean()), se, per)


def lyapunov_agree(q: LyapunovReport, b: LyapunovReport):
    """Modes agree within 2 joint standard errors."""
    return abs(q.value - b.value) <= 2 * math.hypot(q.stderr, b.stderr)


# ---------------------------------------------------------------------------
# interval groups
# ---------------------------------------------------------------------------

@dataclass
class EscapeReport:
    delta: float
    trace: np.ndarray       # mass of [delta, 1 - delta] after each step
    left: float             # final mass of [0, delta[
    right: float            # final mass of ]1 - delta, 1]

    @property
    def final(self):
        return float(self.trace[-1])

    @property
    def passed(self):
        return self.final < 0.1


def regrid(nu: MeasureCDF, xs) -> MeasureCDF:
    """The same measure on new interval nodes (exact at the new nodes)."""
    xs = np.asarray(xs, dtype=float)
    F = nu._cont(xs)
    return MeasureCDF(F - F[0], nu.ax, nu.am, nu.circle, xs)


def interval_escape(mu: GeneratorMeasure, nu0: MeasureCDF, iters=10000, delta=0.05,
                    require_symmetric=True, stop_below=None, graded=True) -> EscapeReport:
    """Iterate nu_n = mu * nu_{n-1} on [0, 1] and record the mass left in [delta, 1 - delta].

    With graded=True a uniform-grid nu0 is first moved onto ``graded_nodes``.
    """
    if mu.circle or nu0.circle:
        raise ConfigError("interval_escape works on [0, 1]")
    if require_symmetric and not mu.symmetric:
        raise PreconditionError("mu must be symmetric")
    for g in mu.generators:
        if abs(float(g.eval(0.0))) > 1e-12 or abs(float(g.eval(1.0)) - 1) > 1e-12:
            raise PreconditionError(f"{g!r} does not fix 0 and 1")
    x = np.linspace(0.0, 1.0, 1025)[1:-1]
    moved = np.max([np.abs(g.eval(x) - x) for g in mu.generators], axis=0)
    if np.any(moved < 1e-12):
        raise PreconditionError("the generators have a common interior fixed point")
    trace = []
    nu = regrid(nu0, graded_nodes(nu0.G)) if graded and nu0.xs is None else nu0
    for _ in range(iters):
        nu = diffuse(nu, mu)
        trace.append(nu.mass(delta, 1 - delta))
        if stop_below is not None and trace[-1] < stop_below:
            break
    left = float(nu.cdf(delta, left=True))
    right = float(1 - nu.cdf(1 - delta))
    return EscapeReport(delta, np.array(trace), left, right)


@dataclass
class SymmetryReport:
    t: float
    lhs: float
    rhs: float
    equality: bool

    @property
    def ok(self):
        # the inverse is solved to ~1e-12, which enters lhs only quadratically
        return self.lhs >= self.rhs * (1 - 1e-9) - 1e-20


def _simpson(fn, a, b, panels):
    x = np.linspace(a, b, panels + 1)
    y = np.asarray(fn(x), dtype=float)
    h = (b - a) / panels
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def symmetry_integral_check(f: Diffeo, t, panels=1 << 10) -> SymmetryReport:
    """int_0^t (f + f^-1) >= t^2, equality iff f(t) = t."""
    if f.circle:
        raise ConfigError("needs a map of [0, 1]")
    if abs(float(f.eval(0.0))) > 1e-12 or abs(float(f.eval(1.0)) - 1) > 1e-12:
        raise PreconditionError("f must fix 0 and 1")
    t = float(t)
    # int_0^t f^-1 = t s - int_0^s f with s = f^-1(t): only f itself is integrated
    s = float(f.eval_inv(t)) if t > 0 else 0.0
    lhs = _simpson(f.eval, 0.0, t, panels) + t * s - _simpson(f.eval, 0.0, s, panels) if t > 0 else 0.0
    return SymmetryReport(t, float(lhs), t * t, abs(float(f.eval(t)) - t) < 1e-9)


# ---------------------------------------------------------------------------
# conjugation by the stationary CDF
# ---------------------------------------------------------------------------

@dataclass
class ConjugationReport:
    measure: GeneratorMeasure       # phi g phi^-1 as PiecewiseExplicit maps
    lipschitz: list                 # max grid slope of each conjugate
    bounds: list                    # 1 / mu(g)
    phi: PiecewiseExplicit

    @property
    def ok(self):
        return all(L <= b * (1 + 1e-2) for L, b in zip(self.lipschitz, self.bounds))


def cdf_map(nu: MeasureCDF) -> PiecewiseExplicit:
    """phi = CDF of nu as a degree-one circle map (or an interval map)."""
    if nu.am.size:
        raise PreconditionError("nu has atoms; its CDF is not a homeomorphism")
    if np.any(np.diff(nu.Fc) <= 0):
        k = int(np.argmin(np.diff(nu.Fc)))
        raise PreconditionError(f"nu has a support gap near x = {k / nu.G:.6f}")
    return PiecewiseExplicit(nu.nodes, nu.Fc, "circle" if nu.circle else (0.0, 1.0))


def conjugate_map(phi: PiecewiseExplicit, g: Diffeo) -> PiecewiseExplicit:
    """phi o g o phi^-1, exact at the nodes phi(x_k)."""
    x = phi.nodes
    u = phi.values
    if g.circle:
        return PiecewiseExplicit(u, phi.lift(g.lift(x)), "circle")
    return PiecewiseExplicit(u, phi.eval(g.eval(x)), (0.0, 1.0))


def conjugate_by_cdf(mu: GeneratorMeasure, nu: MeasureCDF) -> ConjugationReport:
    phi = cdf_map(nu)
    conj, lips = [], []
    for g in mu.generators:
        c = conjugate_map(phi, g)
        conj.append(c)
        lips.append(float(c.slopes.max()))
    return ConjugationReport(GeneratorMeasure(tuple(conj), mu.weights), lips,
                             [1.0 / w for w in mu.weights], phi)


def lip_inequality_check(mu: GeneratorMeasure, nu: MeasureCDF, count=1000, seed=0):
    """max over random node arcs I and generators of nu(g(I)) - nu(I) / mu(g) (should be <= slack)."""
    rng = substream(seed, 11)
    G = nu.G
    a = rng.integers(0, G, count)
    k = rng.integers(1, G // 2, count)
    lo, hi = a / G, (a + k) / G
    worst = -math.inf
    for g, w in zip(mu.generators, mu.weights):
        if nu.circle:
            gl, gh = g.lift(lo), g.lift(hi)
            lhs = nu.cdf_lift(gh) - nu.cdf_lift(gl)
            rhs = nu.cdf_lift(hi) - nu.cdf_lift(lo)
        else:
            hi_ = np.minimum(hi, 1.0)
            lhs = nu.cdf(g.eval(hi_)) - nu.cdf(g.eval(lo))
            rhs = nu.cdf(hi_) - nu.cdf(lo)
        worst = max(worst, float((lhs - rhs / w).max()))
    return worst


def alpha_nu(nu: MeasureCDF, delta) -> float:
    """inf of nu(I) over (closed) intervals of length >= 1 - delta, starts on the node grid."""
    if not 0 < delta < 1:
        raise ConfigError("delta must be in (0, 1)")
    G = nu.G
    L = 1 - delta
    if nu.circle:
        x = nu.nodes[:-1]
        m = nu.cdf_lift(x + L) - nu.cdf_lift(x - 1e-15)
        # also starts just past each atom, which the closed arc can then avoid
        if nu.ax.size:
            xa = nu.ax + 1e-12
            m = np.concatenate([m, nu.cdf_lift(xa + L) - nu.cdf_lift(xa - 1e-15)])
        return float(m.min())
    x = np.linspace(0.0, delta, max(2, int(round(delta * G)) + 1))
    m = nu.cdf(x + L) - nu.cdf(x, left=True)
    return float(m.min())


# ---------------------------------------------------------------------------
# hunting Morse-Smale words
# ---------------------------------------------------------------------------

def hunt_d_eta_words(mu: GeneratorMeasure, eta=0.05, want=10, length=20, max_words=500, seed=0, G=GRID):
    """Random words h = g_{w_n} o ... o g_{w_1} with h and h^-1 both in D_eta."""
    W = sample_words(mu.law, length, seed, max_words)
    found = []
    for w in W:
        h = Word([mu.generators[j] for j in w])
        if d_eta_membership(h, eta, G).member and d_eta_membership(h.inverse(), eta, G).member:
            found.append((tuple(int(v) for v in w), h))
            if len(found) >= want:
                break
    return found


def reduced_words(mu: GeneratorMeasure, length, count, seed=0):
    """Cyclically reduced words (no letter next to its inverse, also across the wrap), as rows."""
    inv = mu.inverse_index
    rng = substream(seed, 13)
    n = len(mu)
    p = np.asarray(mu.weights)
    out = np.empty((count, length), dtype=np.int64)
    for t in range(count):
        while True:
            w = [int(rng.choice(n, p=p))]
            for _ in range(length - 1):
                q = p.copy()
                if inv[w[-1]] >= 0:
                    q[inv[w[-1]]] = 0.0
                w.append(int(rng.choice(n, p=q / q.sum())))
            if length == 1 or inv[w[-1]] != w[0]:
                break
        out[t] = w
    return out


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_measure_csv(path, nu: MeasureCDF):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "cdf"])
        for x, v in zip(nu.nodes, nu.values):
            wr.writerow([repr(float(x)), repr(float(v))])


def read_measure_csv(path, circle=True) -> MeasureCDF:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    F = np.array([float(r["cdf"]) for r in rows])
    return MeasureCDF(F - F[0], circle=circle)


def write_rows_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
