"""Levy measures on R^d and the measure-level functionals the criteria consume.

A measure spec is a finite collection of atom families (explicit lists or
closed-form factorial rules) and radial density components.  Infinite
families are kept as rules, not truncated lists: functionals are evaluated
over a "deep" atom table that extends until 1/n! underflows double precision
(the dropped tail is then exactly zero in floats, so the evaluation is exact
to machine precision), while ``truncation_depth`` only controls how many
atoms get materialized for characteristic-function sums and jump simulation.

Density components use the convention  Pi(du) = q(r) dr sigma(dxi)  where
``q`` is the radial jump intensity and ``sigma`` a probability distribution
over unit directions (uniform on the sphere, or a finite weighted set).
With this convention the stable-like profile q(r) = c r^{-1-alpha} has
small-ball second moment  int_{|u|<=eps} |u|^2 Pi = c eps^{2-alpha}/(2-alpha)
in every dimension.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionError, DomainError, MeasureError
from .linalg import Subspace, as_vector, span_of

_ATOM_CAP = 600  # hard cap on rule-atom indices; 1/n! underflows well before


def _inv_factorial(n: int) -> float:
    """1/n! as a double, underflowing to exactly 0.0 instead of overflowing."""
    f = math.factorial(n)
    if f.bit_length() > 1100:  # far past 1/double-min, quotient is exactly 0
        return 0.0
    try:
        return 1.0 / f
    except OverflowError:
        return math.exp(-math.lgamma(n + 1.0))


# ---------------------------------------------------------------------------
# Radial profiles (piecewise power laws)
# ---------------------------------------------------------------------------

def _segment_power_integral(a, b, c, p, n, lo, hi):
    # int_{max(a,lo)}^{min(b,hi)} c * r^(n+p) dr, with b possibly infinite
    lo2 = max(a, lo)
    hi2 = min(b, hi)
    if hi2 <= lo2:
        return 0.0
    e = n + p
    try:
        if math.isinf(hi2):
            if e + 1 >= 0:
                return math.inf
            return -c * lo2 ** (e + 1) / (e + 1)
        if e == -1:
            return c * math.log(hi2 / lo2)
        return c * (hi2 ** (e + 1) - lo2 ** (e + 1)) / (e + 1)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class PowerLawProfile:
    """Stable-like radial intensity q(r) = c * r^(-1-alpha) on (0, r_max]."""

    c: float
    alpha: float
    r_max: float = math.inf

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise MeasureError(f"power-law alpha must be in (0, 2), got {self.alpha}")
        if self.c <= 0.0 or self.r_max <= 0.0:
            raise MeasureError("power-law scale and r_max must be positive")

    @property
    def support_lo(self):
        return 0.0

    @property
    def support_hi(self):
        return self.r_max

    def segments(self):
        return [(0.0, self.r_max, self.c, -1.0 - self.alpha)]

    def infinite_mass(self) -> bool:
        return True  # int_0 q diverges for every alpha > 0

    def power_integral(self, n, lo, hi) -> float:
        """int_lo^hi r^n q(r) dr, closed form (possibly +inf)."""
        total = 0.0
        for a, b, c, p in self.segments():
            v = _segment_power_integral(a, b, c, p, n, lo, hi)
            if math.isinf(v):
                return math.inf
            total += v
        return total

    def mass_above(self, eps) -> float:
        return self.power_integral(0, eps, math.inf)

    def quantile_above(self, eps, u):
        """Inverse CDF of the normalized restriction to r > eps (for sampling)."""
        lo = eps
        hi = self.r_max
        a = self.alpha
        if math.isinf(hi):
            return lo * np.asarray(1.0 - u) ** (-1.0 / a)
        lo_a, hi_a = lo ** (-a), hi ** (-a)
        return (lo_a - np.asarray(u) * (lo_a - hi_a)) ** (-1.0 / a)


@dataclass(frozen=True)
class TabulatedProfile:
    """Positive radial intensity on increasing knots, power-law interpolated.

    Support is [r_0, r_K]; the profile is zero below the first knot, so the
    component always has finite total mass.
    """

    knots_r: tuple
    knots_q: tuple

    def __post_init__(self):
        r = np.asarray(self.knots_r, dtype=float)
        q = np.asarray(self.knots_q, dtype=float)
        if r.ndim != 1 or r.shape != q.shape or r.size < 2:
            raise MeasureError("tabulated profile needs matching r/q knot arrays (>= 2)")
        if not (np.all(np.diff(r) > 0) and np.all(r > 0)):
            raise MeasureError("knots_r must be positive and strictly increasing")
        if not np.all(q > 0):
            raise MeasureError("knots_q must be positive")
        object.__setattr__(self, "knots_r", tuple(float(x) for x in r))
        object.__setattr__(self, "knots_q", tuple(float(x) for x in q))

    @property
    def support_lo(self):
        return self.knots_r[0]

    @property
    def support_hi(self):
        return self.knots_r[-1]

    def segments(self):
        segs = []
        r, q = self.knots_r, self.knots_q
        for j in range(len(r) - 1):
            p = math.log(q[j + 1] / q[j]) / math.log(r[j + 1] / r[j])
            c = q[j] / r[j] ** p
            segs.append((r[j], r[j + 1], c, p))
        return segs

    def infinite_mass(self) -> bool:
        return False

    def power_integral(self, n, lo, hi) -> float:
        total = 0.0
        for a, b, c, p in self.segments():
            total += _segment_power_integral(a, b, c, p, n, lo, hi)
        return total

    def mass_above(self, eps) -> float:
        return self.power_integral(0, eps, math.inf)

    def quantile_above(self, eps, u):
        lo = max(eps, self.support_lo)
        total = self.power_integral(0, lo, self.support_hi)
        target = float(u) * total
        acc = 0.0
        segs = self.segments()
        for k, (a, b, c, p) in enumerate(segs):
            seg = _segment_power_integral(a, b, c, p, 0, lo, self.support_hi)
            if acc + seg >= target or k == len(segs) - 1:
                a2 = max(a, lo)
                rem = target - acc
                if p == -1.0:
                    return a2 * math.exp(rem / c)
                e1 = p + 1.0
                return (a2 ** e1 + rem * e1 / c) ** (1.0 / e1)
            acc += seg
        return self.support_hi


# ---------------------------------------------------------------------------
# Atom families
# ---------------------------------------------------------------------------

EXPLICIT = "explicit"
FACTORIAL_RADIAL = "factorial_radial"
FACTORIAL_CURVE = "factorial_curve"

CONSTANT = "constant"
LINEAR = "linear"


@dataclass(frozen=True, eq=False)
class AtomFamily:
    """A family of point masses: an explicit finite list or a factorial rule.

    Factorial rules place atoms at u_n = v / n! (radial) or on the moment
    curve u_n = (x, x^2, ..., x^d) with x = 1/n! (curve), with weights
    w_n = c (constant) or w_n = c*n (linear), for n >= 1.
    """

    dimension: int
    rule: str
    points: np.ndarray | None = None
    point_weights: np.ndarray | None = None
    direction: np.ndarray | None = None
    weight_kind: str = CONSTANT
    weight_scale: float = 1.0

    def __post_init__(self):
        if self.dimension < 1:
            raise MeasureError("atom family dimension must be >= 1")
        if self.rule == EXPLICIT:
            pts = np.atleast_2d(np.asarray(self.points, dtype=float))
            w = np.asarray(self.point_weights, dtype=float).reshape(-1)
            if pts.shape != (w.shape[0], self.dimension):
                raise DimensionError("explicit atoms: points/weights shapes disagree")
            if np.any(w <= 0):
                raise MeasureError("atom weights must be positive")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "point_weights", w)
        elif self.rule == FACTORIAL_RADIAL:
            v = as_vector(self.direction, self.dimension, "direction")
            nv = np.linalg.norm(v)
            if nv == 0:
                raise MeasureError("factorial_radial needs a nonzero direction")
            object.__setattr__(self, "direction", v / nv)
        elif self.rule != FACTORIAL_CURVE:
            raise MeasureError(f"unknown atom rule {self.rule!r}")
        if self.rule != EXPLICIT:
            if self.weight_kind not in (CONSTANT, LINEAR):
                raise MeasureError(f"unknown weight rule {self.weight_kind!r}")
            if self.weight_scale <= 0:
                raise MeasureError("weight scale must be positive")
        object.__setattr__(self, "_deep", None)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def explicit(points, weights) -> "AtomFamily":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return AtomFamily(pts.shape[1], EXPLICIT, points=pts,
                          point_weights=np.asarray(weights, dtype=float))

    @staticmethod
    def factorial_radial(direction, weight_kind=CONSTANT, scale=1.0) -> "AtomFamily":
        v = np.asarray(direction, dtype=float).reshape(-1)
        return AtomFamily(v.shape[0], FACTORIAL_RADIAL, direction=v,
                          weight_kind=weight_kind, weight_scale=scale)

    @staticmethod
    def factorial_curve(dimension, weight_kind=CONSTANT, scale=1.0) -> "AtomFamily":
        return AtomFamily(dimension, FACTORIAL_CURVE,
                          weight_kind=weight_kind, weight_scale=scale)

    # -- rule evaluation ----------------------------------------------------

    @property
    def infinite_mass(self) -> bool:
        return self.rule != EXPLICIT

    def weight(self, n: int) -> float:
        if self.weight_kind == LINEAR:
            return self.weight_scale * n
        return self.weight_scale

    def point(self, n: int) -> np.ndarray:
        x = _inv_factorial(n)
        if self.rule == FACTORIAL_RADIAL:
            return x * self.direction
        return np.array([x ** j for j in range(1, self.dimension + 1)])

    def deep_atoms(self):
        """(points, weights, norms) for every atom representable in doubles.

        For rule families the table runs until 1/n! underflows to exactly 0;
        atoms past that point contribute 0.0 to every functional here (all
        integrands vanish at u = 0), so vectorized sums over this table are
        exact to double precision.
        """
        cached = self._deep
        if cached is not None:
            return cached
        if self.rule == EXPLICIT:
            pts, w = self.points, self.point_weights
        else:
            rows, ws = [], []
            for n in range(1, _ATOM_CAP + 1):
                u = self.point(n)
                if not np.any(u != 0.0):
                    break
                rows.append(u)
                ws.append(self.weight(n))
            pts = np.array(rows).reshape(-1, self.dimension)
            w = np.array(ws)
        norms = np.linalg.norm(pts, axis=1)
        out = (pts, w, norms)
        object.__setattr__(self, "_deep", out)
        return out

    def materialize(self, n_max: int):
        """Atoms as dense arrays (points, weights); rule atoms to depth n_max."""
        if self.rule == EXPLICIT:
            return self.points.copy(), self.point_weights.copy()
        pts, w, _ = self.deep_atoms()
        if n_max < pts.shape[0]:
            return pts[:n_max].copy(), w[:n_max].copy()
        if self.rule != EXPLICIT and n_max > pts.shape[0]:
            warnings.warn("requested truncation depth exceeds the atoms "
                          "representable in doubles; extra atoms dropped")
        return pts.copy(), w.copy()

    def tail_span_exact(self) -> Subspace | None:
        """Minimal subspace containing all but finitely many atoms.

        Rule atoms have exact rational coordinates, so the tail rank is
        computed with Fraction arithmetic; the span stabilizes once the rank
        repeats for ``dimension`` consecutive starting indices.
        """
        if self.rule == EXPLICIT:
            return None
        if self.rule == FACTORIAL_RADIAL:
            return span_of([self.direction])
        d = self.dimension
        window = d + 3
        prev, stable, rank = -1, 0, 0
        for n_tail in range(1, 40):
            rows = []
            for n in range(n_tail, n_tail + window):
                x = Fraction(1, math.factorial(n))
                rows.append([x ** j for j in range(1, d + 1)])
            rank = _fraction_rank(rows)
            if rank == prev:
                stable += 1
                if stable >= d:
                    break
            else:
                prev, stable = rank, 0
        if rank >= d:
            return Subspace.full(d)
        pts = [self.point(n) for n in range(1, 2 * d + 4)]
        return span_of(pts)


def _fraction_rank(rows) -> int:
    """Exact rank of a small matrix of Fractions via Gaussian elimination."""
    M = [list(r) for r in rows]
    nrow = len(M)
    ncol = len(M[0]) if nrow else 0
    rank = 0
    for col in range(ncol):
        pivot = None
        for r in range(rank, nrow):
            if M[r][col] != 0:
                pivot = r
                break
        if pivot is None:
            continue
        M[rank], M[pivot] = M[pivot], M[rank]
        pr = M[rank]
        for r in range(rank + 1, nrow):
            if M[r][col] != 0:
                fac = M[r][col] / pr[col]
                M[r] = [a - fac * b for a, b in zip(M[r], pr)]
        rank += 1
        if rank == nrow:
            break
    return rank


# ---------------------------------------------------------------------------
# Density components
# ---------------------------------------------------------------------------

UNIFORM = "uniform"


@dataclass(frozen=True, eq=False)
class DensityComponent:
    """Radial density component: Pi(du) = q(r) dr sigma(dxi).

    ``directions`` is either the string "uniform" (normalized surface measure
    on the unit sphere; the two-point measure on {-1,+1} for d=1) or a pair
    (vectors, weights) of directions with probability weights.
    """

    dimension: int
    profile: object  # PowerLawProfile | TabulatedProfile
    directions: object = UNIFORM

    def __post_init__(self):
        if self.dimension < 1:
            raise MeasureError("density component dimension must be >= 1")
        if not isinstance(self.directions, str):
            vecs, w = self.directions
            V = np.atleast_2d(np.asarray(vecs, dtype=float))
            w = np.asarray(w, dtype=float).reshape(-1)
            if V.shape != (w.shape[0], self.dimension):
                raise DimensionError("direction vectors/weights shapes disagree")
            if np.any(w <= 0):
                raise MeasureError("direction weights must be positive")
            norms = np.linalg.norm(V, axis=1)
            if np.any(norms == 0):
                raise MeasureError("zero direction vector")
            V = V / norms[:, None]
            w = w / w.sum()
            object.__setattr__(self, "directions", (V, w))
        elif self.directions != UNIFORM:
            raise MeasureError(f"unknown direction distribution {self.directions!r}")
        if self.dimension > 3 and self.directions == UNIFORM:
            raise MeasureError("uniform sphere directions supported for d <= 3")
        levy = self.profile.power_integral(2, 0.0, 1.0) + self.profile.mass_above(1.0)
        if not math.isfinite(levy):
            raise MeasureError("density profile violates the Levy integrability condition")

    @property
    def uniform(self) -> bool:
        return isinstance(self.directions, str)

    @property
    def infinite_mass(self) -> bool:
        return self.profile.infinite_mass()

    def mass_above(self, eps) -> float:
        return self.profile.mass_above(eps)

    def second_norm_below(self, eps) -> float:
        return self.profile.power_integral(2, 0.0, eps)

    def moment_norm_above(self, n, lo=1.0) -> float:
        return self.profile.power_integral(n, lo, math.inf)

    def mean_vector(self, lo, hi) -> np.ndarray:
        if self.uniform:
            return np.zeros(self.dimension)
        V, w = self.directions
        return (w @ V) * self.profile.power_integral(1, lo, hi)

    def second_matrix_below(self, eps) -> np.ndarray:
        m2 = self.profile.power_integral(2, 0.0, eps)
        if self.uniform:
            return (m2 / self.dimension) * np.eye(self.dimension)
        V, w = self.directions
        return m2 * (V.T * w) @ V

    def directional_truncated(self, l, eps) -> float:
        """int_{|(u,l)| <= eps} (u,l)^2 Pi_c(du)."""
        d = self.dimension
        hi = self.profile.support_hi
        if not self.uniform:
            V, w = self.directions
            p = V @ l
            total = 0.0
            for pi, wi in zip(p, w):
                if pi == 0.0:
                    continue
                r_cut = min(hi, eps / abs(pi))
                total += wi * pi * pi * self.profile.power_integral(2, 0.0, r_cut)
            return total
        if d == 1:
            return self.profile.power_integral(2, 0.0, eps)
        if d == 3:
            # E[(rU)^2 1_{r|U|<=eps}] with U ~ Unif[-1,1]: r^2/3 below eps,
            # eps^3/(3r) above.
            below = self.profile.power_integral(2, 0.0, eps) / 3.0
            above = (eps ** 3 / 3.0) * self.profile.power_integral(-1.0, eps, hi)
            return below + above
        # d == 2: angular average has an arcsin closed form; integrate it
        # against the radial profile numerically (smooth, ~eps^3/r decay).
        below = 0.5 * self.profile.power_integral(2, 0.0, eps)
        above = 0.0
        for a, b, c, p in self.profile.segments():
            lo2, hi2 = max(a, eps), b
            if hi2 <= lo2:
                continue
            if math.isinf(hi2):
                hi2 = max(eps * 1e8, 10.0 * lo2)  # dropped tail is O((eps/R)^(1+alpha)) relative
            nodes, wts = _log_gl_nodes(lo2, hi2, per_decade=24)
            aa = np.arcsin(np.minimum(eps / nodes, 1.0))
            g = (2.0 * nodes ** 2 / math.pi) * (aa / 2.0 - np.sin(2.0 * aa) / 4.0)
            above += float(np.sum(wts * c * nodes ** p * g))
        return below + above

    def direction_span(self) -> Subspace:
        if self.uniform:
            return Subspace.full(self.dimension)
        V, _ = self.directions
        return span_of(V)


_GL_CACHE: dict = {}


def _gl_rule(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _log_gl_nodes(lo, hi, per_decade=16, order=8, max_nodes=20000):
    """Gauss-Legendre nodes/weights on log-spaced panels covering [lo, hi]."""
    if lo <= 0:
        raise DomainError("log panels need lo > 0")
    decades = math.log10(hi / lo)
    n_panels = max(1, min(int(math.ceil(decades * per_decade)), max_nodes // order))
    edges = np.geomspace(lo, hi, n_panels + 1)
    x, w = _gl_rule(order)
    mid = (edges[1:] + edges[:-1])[:, None] / 2
    half = (edges[1:] - edges[:-1])[:, None] / 2
    return (mid + half * x[None, :]).ravel(), (half * w[None, :]).ravel()


# ---------------------------------------------------------------------------
# The measure spec and its functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LevyMeasureSpec:
    """A Levy measure on R^d: atom families plus density components."""

    dimension: int
    families: tuple = ()
    densities: tuple = ()
    truncation_depth: int = 30

    def __post_init__(self):
        fams = tuple(self.families)
        dens = tuple(self.densities)
        for f in fams:
            if f.dimension != self.dimension:
                raise DimensionError("atom family dimension mismatch")
        for c in dens:
            if c.dimension != self.dimension:
                raise DimensionError("density component dimension mismatch")
        if self.truncation_depth < 1:
            raise MeasureError("truncation_depth must be >= 1")
        object.__setattr__(self, "families", fams)
        object.__setattr__(self, "densities", dens)
        for f in fams:
            _, w, norms = f.deep_atoms()
            levy = float(np.sum(w * np.minimum(norms ** 2, 1.0)))
            if not math.isfinite(levy):
                raise MeasureError("atom family violates the Levy integrability condition")

    @property
    def is_zero(self) -> bool:
        return not self.families and not self.densities

    @property
    def has_infinite_mass(self) -> bool:
        return any(f.infinite_mass for f in self.families) or any(
            c.infinite_mass for c in self.densities)

    def total_mass(self) -> float:
        if self.has_infinite_mass:
            return math.inf
        tot = sum(float(f.point_weights.sum()) for f in self.families)
        tot += sum(c.mass_above(0.0) for c in self.densities)
        return tot

    def materialize_atoms(self):
        """All materialized atoms as (points, weights, family_index) arrays."""
        pts, ws, idx = [], [], []
        for i, f in enumerate(self.families):
            p, w = f.materialize(self.truncation_depth)
            pts.append(p)
            ws.append(w)
            idx.append(np.full(w.shape[0], i, dtype=int))
        if not pts:
            return np.zeros((0, self.dimension)), np.zeros(0), np.zeros(0, dtype=int)
        return np.vstack(pts), np.concatenate(ws), np.concatenate(idx)

    def factorial_families_only(self) -> bool:
        return (bool(self.families)
                and all(f.rule in (FACTORIAL_RADIAL, FACTORIAL_CURVE) for f in self.families)
                and not self.densities)


def mass_above(spec: LevyMeasureSpec, eps: float) -> float:
    """Pi({|u| > eps}); exact index cutoff for rule atoms, closed form for densities."""
    if eps <= 0:
        raise DomainError("mass_above needs eps > 0")
    total = 0.0
    for f in spec.families:
        _, w, norms = f.deep_atoms()
        total += float(w[norms > eps].sum())
    total += sum(c.mass_above(eps) for c in spec.densities)
    return total


def truncated_second_moment(spec: LevyMeasureSpec, eps: float) -> float:
    """int (u^2 ^ eps^2) Pi(du) for one-dimensional measures."""
    if eps <= 0:
        raise DomainError("truncated_second_moment needs eps > 0")
    if spec.dimension != 1:
        raise DimensionError("truncated_second_moment is one-dimensional; "
                             "use directional_truncated_moment for d > 1")
    total = 0.0
    for f in spec.families:
        _, w, norms = f.deep_atoms()
        total += float(np.sum(w * np.minimum(norms ** 2, eps ** 2)))
    for c in spec.densities:
        total += c.second_norm_below(eps) + eps ** 2 * c.mass_above(eps)
    return total


def small_second_moment(spec: LevyMeasureSpec, eps: float) -> float:
    """int_{|u| <= eps} |u|^2 Pi(du)  (the Kallenberg-condition integrand)."""
    if eps <= 0:
        raise DomainError("small_second_moment needs eps > 0")
    total = 0.0
    for f in spec.families:
        _, w, norms = f.deep_atoms()
        mask = norms <= eps
        total += float(np.sum(w[mask] * norms[mask] ** 2))
    total += sum(c.second_norm_below(eps) for c in spec.densities)
    return total


def rho(spec: LevyMeasureSpec, eps: float) -> float:
    """The clipped-moment quotient [eps^2 ln(1/eps)]^(-1) int (u^2 ^ eps^2) Pi."""
    if not 0.0 < eps < 1.0:
        raise DomainError("rho needs 0 < eps < 1")
    return truncated_second_moment(spec, eps) / (eps * eps * math.log(1.0 / eps))


def directional_truncated_moment(spec: LevyMeasureSpec, l, eps: float) -> float:
    """int_{|(u,l)| <= eps} (u,l)^2 Pi(du) for a unit direction l."""
    l = as_vector(l, spec.dimension, "l")
    if abs(np.linalg.norm(l) - 1.0) > 1e-10:
        raise DomainError("direction l must be a unit vector")
    if eps <= 0:
        raise DomainError("directional_truncated_moment needs eps > 0")
    total = 0.0
    for f in spec.families:
        pts, w, _ = f.deep_atoms()
        p = pts @ l
        mask = np.abs(p) <= eps
        total += float(np.sum(w[mask] * p[mask] ** 2))
    total += sum(c.directional_truncated(l, eps) for c in spec.densities)
    return total


def moment_above_one(spec: LevyMeasureSpec, n: int) -> float:
    """int_{|u| > 1} |u|^n Pi(du); +inf when a power-law tail with alpha <= n reaches past 1."""
    if n < 1:
        raise DomainError("moment order must be >= 1")
    total = 0.0
    for f in spec.families:
        _, w, norms = f.deep_atoms()
        mask = norms > 1.0
        total += float(np.sum(w[mask] * norms[mask] ** n))
    for c in spec.densities:
        v = c.moment_norm_above(n, 1.0)
        if math.isinf(v):
            return math.inf
        total += v
    return total


def compensator_mean(spec: LevyMeasureSpec, lo: float, hi: float) -> np.ndarray:
    """int_{lo < |u| <= hi} u Pi(du)  (the truncated-jump drift correction)."""
    if not 0.0 <= lo < hi:
        raise DomainError("compensator_mean needs 0 <= lo < hi")
    acc = np.zeros(spec.dimension)
    for f in spec.families:
        pts, w, norms = f.deep_atoms()
        mask = (norms > lo) & (norms <= hi)
        acc += (w[mask][:, None] * pts[mask]).sum(axis=0)
    for c in spec.densities:
        acc += c.mean_vector(lo, hi)
    return acc


def second_matrix_below(spec: LevyMeasureSpec, eps: float) -> np.ndarray:
    """int_{|u| <= eps} u u^T Pi(du)  (small-jump covariance for simulation)."""
    if eps <= 0:
        raise DomainError("second_matrix_below needs eps > 0")
    d = spec.dimension
    M = np.zeros((d, d))
    for f in spec.families:
        pts, w, norms = f.deep_atoms()
        mask = norms <= eps
        P = pts[mask]
        M += (P * w[mask][:, None]).T @ P
    for c in spec.densities:
        M += c.second_matrix_below(eps)
    return M


def essential_linear_support(spec: LevyMeasureSpec, tol: float | None = None) -> Subspace:
    """Minimal subspace L with Pi(R^d \\ L) < inf.

    Finite-mass components contribute nothing; each infinite atom family
    contributes its stabilized tail span (exact rational rank for factorial
    rules), and each infinite density component the span of its direction
    support.
    """
    d = spec.dimension
    basis_rows = []
    for f in spec.families:
        if not f.infinite_mass:
            continue
        sub = f.tail_span_exact()
        if sub is not None and sub.dim:
            basis_rows.append(sub.basis)
    for c in spec.densities:
        if not c.infinite_mass:
            continue
        sub = c.direction_span()
        if sub.dim:
            basis_rows.append(sub.basis)
    if not basis_rows:
        return Subspace.zero(d)
    return span_of(np.vstack(basis_rows), tol=tol)


def yamazato_check(spec: LevyMeasureSpec, tol: float | None = None):
    """Essential linear non-degeneracy: is the essential support all of R^d?"""
    sub = essential_linear_support(spec, tol=tol)
    return sub.dim == spec.dimension, sub


# ---------------------------------------------------------------------------
# Limit-profile classification
# ---------------------------------------------------------------------------

DIVERGES = "diverges"
VANISHES = "vanishes"
BOUNDED = "bounded"
UNDECIDED = "undecided"

DYADIC_J = np.arange(4, 41)
FACTORIAL_N = np.arange(5, 15)


@dataclass
class LimitDiagnostic:
    """Evidence for a limit claim about a profile value(eps), eps -> 0+."""

    verdict: str
    eps: np.ndarray
    values: np.ndarray
    slope: float = math.nan
    factorial_n: np.ndarray | None = None
    factorial_values: np.ndarray | None = None

    def to_dict(self):
        out = {
            "verdict": self.verdict,
            "eps": [float(x) for x in self.eps],
            "values": [float(x) for x in self.values],
            "slope": None if math.isnan(self.slope) else float(self.slope),
        }
        if self.factorial_n is not None:
            out["factorial_n"] = [int(x) for x in self.factorial_n]
            out["factorial_values"] = [float(x) for x in self.factorial_values]
        return out


def _fit_loglog_slope(eps, values):
    eps = np.asarray(eps, float)
    values = np.asarray(values, float)
    mask = values > 0
    if mask.sum() < 3:
        return math.nan
    x = np.log(np.log(1.0 / eps[mask]))
    y = np.log(values[mask])
    return float(np.polyfit(x, y, 1)[0])


def classify_profile(eps, values, factorial_n=None, factorial_values=None,
                     high=10.0, low=0.1, slope_tol=0.05) -> LimitDiagnostic:
    """Heuristic limit classification of a nonnegative profile as eps -> 0+.

    The dyadic thresholds decide the clear-cut cases (last five values above
    ``high`` and increasing -> diverges; below ``low`` and non-increasing ->
    vanishes).  Measures built from factorial atom rules are re-examined
    along their own scale eps = 1/N!, where the trend of log(value) against
    log log(1/eps) captures slowly diverging or vanishing limits.
    "undecided" is a valid outcome: the underlying conditions are genuine
    limits and no finite procedure settles every case.
    """
    eps = np.asarray(eps, float)
    values = np.asarray(values, float)
    diag = LimitDiagnostic(UNDECIDED, eps, values,
                           slope=_fit_loglog_slope(eps, values),
                           factorial_n=None if factorial_n is None else np.asarray(factorial_n),
                           factorial_values=None if factorial_values is None
                           else np.asarray(factorial_values, float))
    last = values[-5:]
    if last.min() > high and np.all(np.diff(last) > 0):
        diag.verdict = DIVERGES
        return diag
    if last.max() < low and np.all(np.diff(last) <= 0):
        diag.verdict = VANISHES
        return diag
    if diag.factorial_values is not None and diag.factorial_values.size >= 6:
        fv = diag.factorial_values
        fe = 1.0 / np.array([float(math.factorial(int(n))) for n in diag.factorial_n])
        slope = _fit_loglog_slope(fe, fv)
        diag.slope = slope
        if np.all(np.diff(fv) > 0) and slope > slope_tol:
            diag.verdict = DIVERGES
        elif np.all(np.diff(fv) < 0) and slope < -slope_tol:
            diag.verdict = VANISHES
        elif fv.max() - fv.min() <= 0.05 * max(abs(fv).max(), 1e-12):
            diag.verdict = BOUNDED
    elif last.max() - last.min() <= 0.02 * max(abs(last).max(), 1e-12):
        diag.verdict = BOUNDED
    return diag
