"""Orientation-preserving maps of the circle R/Z and of compact intervals.

Every map exposes ``eval``, ``deriv``, ``log_deriv``, ``eval_inv`` and
``inverse``.  Circle maps additionally expose ``lift`` / ``lift_inv``; the
public ``eval`` reduces mod 1, lifts are kept unreduced internally so that
rotation numbers can be accumulated.

All functions accept scalars or numpy arrays.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, InternalError

TOL = 1e-12


def _arr(x):
    return np.asarray(x, dtype=float)


def _out(v, like):
    # hand back a python float when the caller passed a scalar
    return float(v) if np.ndim(like) == 0 else v


# ---------------------------------------------------------------------------
# Yoccoz family
# ---------------------------------------------------------------------------

def yoccoz_phi(a, u):
    """phi_a(u) = a/2 + (a/pi) arctan(a u), a diffeo R -> ]0, a[."""
    u_ = _arr(u)
    if not (np.isfinite(a) and a > 0) or not np.all(np.isfinite(u_)):
        raise DomainError(f"yoccoz_phi needs finite a>0 and finite u (a={a})")
    return _out(a / 2 + a / np.pi * np.arctan(a * u_), u)


def yoccoz_phi_inv(a, x):
    """Inverse of phi_a, i.e. tan(pi (x/a - 1/2)) / a.

    Evaluated as -cot(pi x/a)/a on the left half and cot(pi (a-x)/a)/a on
    the right half, which keeps full relative precision near the ends.
    """
    x_ = _arr(x)
    if not (np.isfinite(a) and a > 0):
        raise DomainError(f"a must be positive, got {a}")
    if np.any(x_ <= 0) or np.any(x_ >= a) or not np.all(np.isfinite(x_)):
        raise DomainError("yoccoz_phi_inv needs 0 < x < a")
    left = x_ <= a / 2
    t = np.where(left, x_, a - x_)
    with np.errstate(divide="ignore"):
        c = 1.0 / (a * np.tan(np.pi * t / a))
    c = np.where(np.abs(t - a / 2) < 1e-300, 0.0, c)
    return _out(np.where(left, -c, c), x)


def _check_ab(a, b):
    if not (np.isfinite(a) and np.isfinite(b) and a > 0 and b > 0):
        raise DomainError(f"lengths must be positive (a={a}, b={b})")


def _transfer(a, b, s):
    # phi_{a,b}(s) = phi_b(phi_a^{-1}(s)).  Substituting u = phi_a^{-1}(s)
    # gives the projective form (b/pi) atan2(a sin(pi s/a), b cos(pi s/a));
    # we use it on the left half and reflect on the right half.
    left = s <= a / 2
    t = np.where(left, s, a - s)
    th = np.pi * t / a
    v = b / np.pi * np.arctan2(a * np.sin(th), b * np.cos(th))
    return np.where(left, v, b - v)


def _transfer_deriv(a, b, s):
    left = s <= a / 2
    t = np.where(left, s, a - s)
    th = np.pi * t / a
    k = a / b
    return 1.0 / (np.cos(th) ** 2 + (k * np.sin(th)) ** 2)


def yoccoz_transfer(a, b, x):
    """phi_{a,b} = phi_b o phi_a^{-1} : [0,a] -> [0,b], with 0->0 and a->b."""
    _check_ab(a, b)
    x_ = _arr(x)
    if np.any(x_ < -TOL * a) or np.any(x_ > a * (1 + TOL)):
        raise DomainError("yoccoz_transfer needs 0 <= x <= a")
    return _out(_transfer(a, b, np.clip(x_, 0.0, a)), x)


def yoccoz_transfer_deriv(a, b, x):
    """Derivative of phi_{a,b}; equals (u^2 + 1/a^2)/(u^2 + 1/b^2), u = phi_a^{-1}(x).

    Tends to 1 at both endpoints.
    """
    _check_ab(a, b)
    x_ = _arr(x)
    if np.any(x_ < -TOL * a) or np.any(x_ > a * (1 + TOL)):
        raise DomainError("yoccoz_transfer_deriv needs 0 <= x <= a")
    return _out(_transfer_deriv(a, b, np.clip(x_, 0.0, a)), x)


def yoccoz_gap_map(x, I, J):
    """phi(I, J)(x) = x1 + phi_{|I|,|J|}(x - x0) for I = (x0, |I|), J = (x1, |J|)."""
    (x0, a), (x1, b) = I, J
    return x1 + yoccoz_transfer(a, b, _arr(x) - x0)


def second_deriv_bound(a, b):
    """Upper bound (6 pi / a) |b/a - 1| for |phi''_{a,b}|.

    The bound is only valid for moderate ratios; numerically it holds for
    b/a in roughly [0.12, 2.49], which covers consecutive gap ratios.
    """
    _check_ab(a, b)
    return 6 * np.pi / a * abs(b / a - 1)


def sampled_second_deriv(a, b, n=4001):
    """max |phi''_{a,b}| from central differences of the derivative on n nodes."""
    _check_ab(a, b)
    s = np.linspace(0.0, a, n)
    h = a / (n - 1) * 1e-3
    inner = s[1:-1]
    d2 = (_transfer_deriv(a, b, inner + h) - _transfer_deriv(a, b, inner - h)) / (2 * h)
    return float(np.max(np.abs(d2)))


# ---------------------------------------------------------------------------
# map classes
# ---------------------------------------------------------------------------

class Diffeo:
    """Base class.  Subclasses set ``circle`` and implement the private hooks.

    Interval maps implement ``_eval``, ``_eval_inv`` and ``_deriv`` on their
    declared ``domain = (lo, hi)``.  Circle maps implement ``lift``,
    ``lift_inv`` and ``_deriv`` (the latter for x in [0, 1)).
    """

    circle = False
    domain = (0.0, 1.0)

    # -- public contract ---------------------------------------------------
    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x_ = _arr(x)
        if self.circle:
            return _out(_mod1(self.lift(x_)), x)
        return _out(self._eval(self._check(x_)), x)

    def eval_inv(self, y):
        y_ = _arr(y)
        if self.circle:
            return _out(_mod1(self.lift_inv(y_)), y)
        return _out(self._eval_inv(self._check_image(y_)), y)

    def deriv(self, x):
        x_ = _arr(x)
        x_ = _mod1(x_) if self.circle else self._check(x_)
        return _out(self._deriv(x_), x)

    def log_deriv(self, x):
        x_ = _arr(x)
        x_ = _mod1(x_) if self.circle else self._check(x_)
        return _out(self._log_deriv(x_), x)

    def inverse(self) -> "Diffeo":
        raise NotImplementedError

    def image(self):
        """Image of the declared domain (interval maps)."""
        lo, hi = self.domain
        return (float(self._eval(_arr(lo))), float(self._eval(_arr(hi))))

    def image_length(self, lo, hi):
        """|h([lo, hi])|; subclasses may override with a cancellation-free form."""
        if self.circle:
            return self.lift(_arr(hi)) - self.lift(_arr(lo))
        return self._eval(_arr(hi)) - self._eval(_arr(lo))

    def push(self, lo, length):
        """Image of [lo, lo + length] as (left end, length).

        Short intervals use the midpoint derivative, which keeps full
        relative precision when length is far below ulp(lo).
        """
        lo, length = _arr(lo), _arr(length)
        if self.circle:
            new_lo = self.lift(lo)
            full = self.lift(lo + length) - new_lo
            new_lo = _mod1(new_lo)
        else:
            new_lo = self._eval(lo)
            full = self._eval(lo + length) - new_lo
        small = length < 1e-9 * np.maximum(1.0, np.abs(lo))
        if np.any(small):
            mid = lo + length / 2
            mid = _mod1(mid) if self.circle else np.clip(mid, *self.domain)
            full = np.where(small, length * self._deriv(mid), full)
        return new_lo, full

    def then(self, other) -> "Word":
        """The composition other o self (apply self first)."""
        return Word([self, other])

    # -- hooks -------------------------------------------------------------
    def _log_deriv(self, x):
        return np.log(self._deriv(x))

    def _check(self, x, dom=None):
        lo, hi = self.domain if dom is None else dom
        tol = TOL * max(1.0, hi - lo)
        if np.any(x < lo - tol) or np.any(x > hi + tol) or np.any(np.isnan(x)):
            raise DomainError(f"point outside domain [{lo}, {hi}] of {self!r}")
        return np.clip(x, lo, hi)

    def _check_image(self, y):
        return self._check(y, self.image())

    def lift(self, x):
        raise DomainError("lift is only defined for circle maps")

    def lift_inv(self, y):
        raise DomainError("lift is only defined for circle maps")


def _mod1(x):
    r = np.mod(x, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(r >= 1.0, 0.0, r)


class Rotation(Diffeo):
    circle = True

    def __init__(self, theta):
        self.theta = float(theta)

    def lift(self, x):
        return _arr(x) + self.theta

    def lift_inv(self, y):
        return _arr(y) - self.theta

    def _deriv(self, x):
        return np.ones_like(x)

    def _log_deriv(self, x):
        return np.zeros_like(x)

    def inverse(self):
        return Rotation(-self.theta)

    def __repr__(self):
        return f"Rotation({self.theta:.6g})"


class Identity(Diffeo):
    """Identity of the circle or of an interval."""

    def __init__(self, domain="circle"):
        self.circle = domain == "circle"
        if not self.circle:
            self.domain = (float(domain[0]), float(domain[1]))

    def lift(self, x):
        return _arr(x) + 0.0

    lift_inv = lift

    def _eval(self, x):
        return x + 0.0

    _eval_inv = _eval

    def _deriv(self, x):
        return np.ones_like(x)

    def _log_deriv(self, x):
        return np.zeros_like(x)

    def inverse(self):
        return self

    def __repr__(self):
        return "Identity()"


class Affine(Diffeo):
    """x -> slope * x + offset on an interval (slope > 0)."""

    def __init__(self, slope, offset=0.0, domain=(0.0, 1.0)):
        if not slope > 0:
            raise DomainError("Affine needs slope > 0")
        self.slope, self.offset = float(slope), float(offset)
        self.domain = (float(domain[0]), float(domain[1]))

    def _eval(self, x):
        return self.slope * x + self.offset

    def _eval_inv(self, y):
        return (y - self.offset) / self.slope

    def _deriv(self, x):
        return np.full_like(x, self.slope)

    def image_length(self, lo, hi):
        return self.slope * (_arr(hi) - _arr(lo))

    def push(self, lo, length):
        return self.slope * _arr(lo) + self.offset, self.slope * _arr(length)

    def inverse(self):
        return Affine(1 / self.slope, -self.offset / self.slope, self.image())

    def __repr__(self):
        return f"Affine({self.slope:.6g}, {self.offset:.6g})"


class Mobius(Diffeo):
    """Projective action of a 2x2 real matrix with positive determinant.

    ``domain="circle"`` uses the angle chart x -> line of angle pi*x, so
    S^1 = R/Z is identified with RP^1.  An interval domain uses the affine
    chart x -> (a x + b)/(c x + d).

    The matrix is stored as ``m`` (max-abs entry 1) together with
    ``log_scale`` s, the determinant-one matrix being exp(s) * m.  Long
    products stay finite this way.
    """

    def __init__(self, matrix, domain="circle", *, shift=0, _normalized=None):
        if _normalized is not None:
            m, s = _normalized
        else:
            A = np.array(matrix, dtype=float).reshape(2, 2)
            det = np.linalg.det(A)
            if not det > 0:
                raise DomainError("Mobius needs a matrix with positive determinant")
            A = A / math.sqrt(det)
            k = np.abs(A).max()
            m, s = A / k, math.log(k)
        self.m = np.array(m, dtype=float)
        self.log_scale = float(s)
        self.circle = domain == "circle"
        self.shift = int(shift)
        if not self.circle:
            self.domain = (float(domain[0]), float(domain[1]))
            c, d = self.m[1]
            den = c * np.array(self.domain) + d
            if den[0] * den[1] <= 0:
                raise DomainError("Mobius pole inside the interval domain")
        # sign convention for the circle lift: no negative eigenvalues
        self._lm = -self.m if np.trace(self.m) < 0 else self.m

    @property
    def matrix(self):
        return np.exp(self.log_scale) * self.m

    @classmethod
    def _from(cls, m, s, domain, shift=0):
        k = np.abs(m).max()
        return cls(None, domain, shift=shift, _normalized=(m / k, s + math.log(k)))

    def _dom(self):
        return "circle" if self.circle else self.domain

    # circle chart
    def _angle_step(self, x, M):
        v0, v1 = np.cos(np.pi * x), np.sin(np.pi * x)
        w0 = M[0, 0] * v0 + M[0, 1] * v1
        w1 = M[1, 0] * v0 + M[1, 1] * v1
        return np.arctan2(v0 * w1 - v1 * w0, v0 * w0 + v1 * w1) / np.pi, w0, w1

    def lift(self, x):
        x = _arr(x)
        psi, _, _ = self._angle_step(x, self._lm)
        return x + psi + self.shift

    def lift_inv(self, y):
        y = _arr(y)
        adj = np.array([[self._lm[1, 1], -self._lm[0, 1]], [-self._lm[1, 0], self._lm[0, 0]]])
        psi, _, _ = self._angle_step(y - self.shift, adj)
        return y - self.shift + psi

    def _log_deriv(self, x):
        if self.circle:
            _, w0, w1 = self._angle_step(x, self.m)
            return -2 * self.log_scale - np.log(w0 * w0 + w1 * w1)
        c, d = self.m[1]
        return -2 * self.log_scale - 2 * np.log(np.abs(c * x + d))

    def _deriv(self, x):
        return np.exp(self._log_deriv(x))

    # affine chart
    def _eval(self, x):
        (a, b), (c, d) = self.m
        return (a * x + b) / (c * x + d)

    def _eval_inv(self, y):
        (a, b), (c, d) = self.m
        return (d * y - b) / (a - c * y)

    def image_length(self, lo, hi):
        if self.circle:
            return super().image_length(lo, hi)
        lo, hi = _arr(lo), _arr(hi)
        c, d = self.m[1]
        return (hi - lo) * np.exp(-2 * self.log_scale) / np.abs((c * lo + d) * (c * hi + d))

    def push(self, lo, length):
        lo, length = _arr(lo), _arr(length)
        if self.circle:
            # angle between the images of the two lines; det(m) = exp(-2 s)
            v0, v1 = np.cos(np.pi * lo), np.sin(np.pi * lo)
            u0, u1 = np.cos(np.pi * (lo + length)), np.sin(np.pi * (lo + length))
            M = self.m
            a0, a1 = M[0, 0] * v0 + M[0, 1] * v1, M[1, 0] * v0 + M[1, 1] * v1
            b0, b1 = M[0, 0] * u0 + M[0, 1] * u1, M[1, 0] * u0 + M[1, 1] * u1
            cross = np.exp(-2 * self.log_scale) * np.sin(np.pi * length)
            new_len = np.arctan2(cross, a0 * b0 + a1 * b1) / np.pi
            # arcs longer than 1/2 need the lifted difference
            big = length >= 0.5
            if np.any(big):
                new_len = np.where(big, self.lift(lo + length) - self.lift(lo), new_len)
            return _mod1(self.lift(lo)), new_len
        c, d = self.m[1]
        new_len = length * np.exp(-2 * self.log_scale) / np.abs((c * lo + d) * (c * (lo + length) + d))
        return self._eval(lo), new_len

    def log_image_length(self, lo, hi):
        """log |h([lo, hi])| without forming the (possibly underflowing) length."""
        lo, hi = _arr(lo), _arr(hi)
        c, d = self.m[1]
        return (np.log(hi - lo) - 2 * self.log_scale
                - np.log(np.abs(c * lo + d)) - np.log(np.abs(c * hi + d)))

    def inverse(self):
        (a, b), (c, d) = self.m
        adj = np.array([[d, -b], [-c, a]])
        if self.circle:
            return Mobius._from(adj, self.log_scale, "circle", shift=-self.shift)
        return Mobius._from(adj, self.log_scale, self.image())

    def compose(self, first: "Mobius") -> "Mobius":
        """self o first as a single Mobius map (lift-consistent on the circle)."""
        m = self.m @ first.m
        s = self.log_scale + first.log_scale
        if not self.circle:
            return Mobius._from(m, s, first.domain)
        out = Mobius._from(m, s, "circle")
        x0 = np.array([0.123456789])
        k = np.round(self.lift(first.lift(x0)) - out.lift(x0))[0]
        out.shift = int(k)
        return out

    def __repr__(self):
        return f"Mobius({np.round(self.matrix, 6).tolist()}, {self._dom()!r})"


class YoccozGapMap(Diffeo):
    """Piecewise Yoccoz map: phi(I_k, J_k) on each source piece I_k.

    Source pieces tile [start, start + length) contiguously (length 1 for the
    circle), target pieces tile the image in the same order.  Because every
    phi(I, J) is tangent to the identity at both ends, the map is C^1.
    On the circle the target pieces are given in lifted coordinates.
    """

    def __init__(self, src_left, src_len, tgt_left, tgt_len, domain="circle"):
        self.src_left = np.asarray(src_left, dtype=float)
        self.src_len = np.asarray(src_len, dtype=float)
        self.tgt_left = np.asarray(tgt_left, dtype=float)
        self.tgt_len = np.asarray(tgt_len, dtype=float)
        if np.any(self.src_len <= 0) or np.any(self.tgt_len <= 0):
            raise DomainError("YoccozGapMap pieces must have positive length")
        if np.any(np.diff(self.src_left) <= 0) or np.any(np.diff(self.tgt_left) <= 0):
            raise DomainError("YoccozGapMap pieces must be sorted")
        self.circle = domain == "circle"
        self.start = self.src_left[0]
        self.tstart = self.tgt_left[0]
        if not self.circle:
            self.domain = (float(domain[0]), float(domain[1]))

    def _locate(self, x, left, length, other_left, other_len, start):
        k = np.searchsorted(left, x, side="right") - 1
        k = np.clip(k, 0, len(left) - 1)
        s = np.clip(x - left[k], 0.0, length[k])
        return other_left[k] + _transfer(length[k], other_len[k], s)

    def _wrap(self, x, start):
        n = np.floor(x - start)
        return x - n, n

    def lift(self, x):
        xr, n = self._wrap(_arr(x), self.start)
        return self._locate(xr, self.src_left, self.src_len, self.tgt_left, self.tgt_len, self.start) + n

    def lift_inv(self, y):
        yr, n = self._wrap(_arr(y), self.tstart)
        return self._locate(yr, self.tgt_left, self.tgt_len, self.src_left, self.src_len, self.tstart) + n

    def _eval(self, x):
        return self._locate(x, self.src_left, self.src_len, self.tgt_left, self.tgt_len, self.start)

    def _eval_inv(self, y):
        return self._locate(y, self.tgt_left, self.tgt_len, self.src_left, self.src_len, self.tstart)

    def _image_dom(self):
        return (self.tgt_left[0], self.tgt_left[-1] + self.tgt_len[-1])

    def image(self):
        return tuple(float(v) for v in self._image_dom())

    def _deriv(self, x):
        if self.circle:
            x, _ = self._wrap(x, self.start)
        k = np.clip(np.searchsorted(self.src_left, x, side="right") - 1, 0, len(self.src_left) - 1)
        s = np.clip(x - self.src_left[k], 0.0, self.src_len[k])
        return _transfer_deriv(self.src_len[k], self.tgt_len[k], s)

    def piece_of(self, x):
        """Index of the source piece containing x."""
        x = _arr(x)
        if self.circle:
            x, _ = self._wrap(x, self.start)
        return np.clip(np.searchsorted(self.src_left, x, side="right") - 1, 0, len(self.src_left) - 1)

    def inverse(self):
        dom = "circle" if self.circle else self.image()
        return YoccozGapMap(self.tgt_left, self.tgt_len, self.src_left, self.src_len, dom)

    def __repr__(self):
        return f"YoccozGapMap({len(self.src_left)} pieces)"


class PiecewiseExplicit(Diffeo):
    """Increasing piecewise-linear map through (nodes, values).

    On the circle, nodes span [0, 1] and values are lifted with
    values[-1] = values[0] + 1.  Each piece has a closed-form inverse.
    """

    def __init__(self, nodes, values, domain="circle"):
        self.nodes = np.asarray(nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if np.any(np.diff(self.nodes) <= 0) or np.any(np.diff(self.values) < 0):
            raise DomainError("PiecewiseExplicit needs increasing nodes and nondecreasing values")
        self.circle = domain == "circle"
        if self.circle:
            if abs(self.nodes[-1] - self.nodes[0] - 1) > 1e-12 or abs(self.values[-1] - self.values[0] - 1) > 1e-9:
                raise DomainError("circle PiecewiseExplicit must have degree one")
        else:
            self.domain = (float(domain[0]), float(domain[1]))
        self.slopes = np.diff(self.values) / np.diff(self.nodes)

    def lift(self, x):
        x = _arr(x)
        n = np.floor(x - self.nodes[0])
        return np.interp(x - n, self.nodes, self.values) + n

    def lift_inv(self, y):
        y = _arr(y)
        n = np.floor(y - self.values[0])
        return np.interp(y - n, self.values, self.nodes) + n

    def _eval(self, x):
        return np.interp(x, self.nodes, self.values)

    def _eval_inv(self, y):
        return np.interp(y, self.values, self.nodes)

    def image(self):
        return (float(self.values[0]), float(self.values[-1]))

    def _deriv(self, x):
        k = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.slopes) - 1)
        return self.slopes[k]

    def inverse(self):
        dom = "circle" if self.circle else self.image()
        return PiecewiseExplicit(self.values, self.nodes, dom)

    def __repr__(self):
        return f"PiecewiseExplicit({len(self.nodes)} nodes)"


def bisect_monotone(fn, y, lo, hi, tol=1e-12, max_iter=200):
    """Solve fn(x) = y for increasing fn on [lo, hi], vectorized over y."""
    y = _arr(y)
    lo_ = np.full_like(y, lo)
    hi_ = np.full_like(y, hi)
    flo, fhi = fn(lo_), fn(hi_)
    if np.any(flo > y + 1e-12) or np.any(fhi < y - 1e-12):
        raise InternalError("bisection target not bracketed; map not monotone?")
    for _ in range(max_iter):
        mid = 0.5 * (lo_ + hi_)
        up = fn(mid) < y
        lo_ = np.where(up, mid, lo_)
        hi_ = np.where(up, hi_, mid)
        if np.max(hi_ - lo_) < tol:
            break
    return 0.5 * (lo_ + hi_)


class ExplicitMap(Diffeo):
    """Interval map given by closed-form callables; inverse by bisection."""

    def __init__(self, fn, dfn, domain=(0.0, 1.0), name="explicit"):
        self.fn, self.dfn, self.name = fn, dfn, name
        self.domain = (float(domain[0]), float(domain[1]))

    def _eval(self, x):
        return _arr(self.fn(x))

    def _deriv(self, x):
        return _arr(self.dfn(x))

    def _eval_inv(self, y):
        return bisect_monotone(self._eval, y, *self.domain)

    def inverse(self):
        fwd = self

        def dinv(y):
            return 1.0 / fwd._deriv(fwd._eval_inv(_arr(y)))

        return ExplicitMap(self._eval_inv, dinv, self.image(), name=f"inv({self.name})")

    def __repr__(self):
        return f"ExplicitMap({self.name})"


class Word(Diffeo):
    """Composition of factors, applied left to right: factors[0] acts first.

    Factors may be Diffeo objects or (Diffeo, +1/-1) pairs.
    """

    def __init__(self, factors):
        fs = []
        for f in factors:
            if isinstance(f, tuple):
                g, e = f
                if e not in (1, -1):
                    raise DomainError("Word exponents must be +1 or -1")
                f = g if e == 1 else g.inverse()
            fs.append(f)
        if not fs:
            raise DomainError("empty Word; use Identity")
        kinds = {f.circle for f in fs}
        if len(kinds) != 1:
            raise DomainError("cannot mix circle and interval maps in a Word")
        self.factors = fs
        self.circle = fs[0].circle
        if not self.circle:
            self.domain = fs[0].domain

    def lift(self, x):
        x = _arr(x)
        for f in self.factors:
            x = f.lift(x)
        return x

    def lift_inv(self, y):
        y = _arr(y)
        for f in reversed(self.factors):
            y = f.lift_inv(y)
        return y

    def _eval(self, x):
        for f in self.factors:
            x = f._eval(x)
        return x

    def _eval_inv(self, y):
        for f in reversed(self.factors):
            y = f._eval_inv(y)
        return y

    def image(self):
        lo, hi = self.domain
        return (float(self._eval(_arr(lo))), float(self._eval(_arr(hi))))

    def push(self, lo, length):
        for f in self.factors:
            lo, length = f.push(lo, length)
        return lo, length

    def _log_deriv(self, x):
        total = np.zeros_like(x)
        for f in self.factors:
            if f.circle:
                x = _mod1(x)
            total = total + f._log_deriv(x)
            x = f.lift(x) if f.circle else f._eval(x)
        return total

    def _deriv(self, x):
        return np.exp(self._log_deriv(x))

    def inverse(self):
        return Word([f.inverse() for f in reversed(self.factors)])

    def collapse(self) -> Diffeo:
        """Single Mobius map when every factor is Mobius, else self."""
        if not all(isinstance(f, Mobius) for f in self.factors):
            return self
        out = self.factors[0]
        for f in self.factors[1:]:
            out = f.compose(out)
        return out

    def __repr__(self):
        return f"Word({self.factors!r})"


def compose(*maps) -> Diffeo:
    """compose(f, g, h) = h o g o f, collapsing pure Mobius words."""
    return Word(list(maps)).collapse() if len(maps) > 1 else maps[0]


def rotation_number(f: Diffeo, n_iter=1000, x0=0.0):
    """Rotation number (F^n(x0) - x0)/n mod 1 and its error bound 1/n."""
    if not f.circle:
        raise DomainError("rotation_number needs a circle map")
    if n_iter < 1000:
        raise DomainError("rotation_number needs n_iter >= 1000")
    x = _arr(x0)
    for _ in range(n_iter):
        x = f.lift(x)
    return float(_mod1((x - x0) / n_iter)), 1.0 / n_iter
