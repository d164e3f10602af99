"""The OU model container, config ingestion, and the Gaussian covariance integral.

The model is the linear SDE  dX = A X dt + B dW + D dZ  on R^m, with W a
Wiener process in R^k and Z a pure-jump Levy process in R^d whose jump
measure is a :class:`~oulevy.measures.LevyMeasureSpec`.  A drift vector ``a``
And an initial state ``x0`` are retained: they shift the law of X(t) without
affecting existence or smoothness of its density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, DomainError
from .linalg import Propagator, as_matrix, as_vector, expm, expm_integral
from .measures import (
    CONSTANT,
    LINEAR,
    UNIFORM,
    AtomFamily,
    DensityComponent,
    LevyMeasureSpec,
    PowerLawProfile,
    TabulatedProfile,
)


@dataclass(frozen=True, eq=False)
class OUModel:
    """Immutable model data: dimensions, coefficient blocks, jump measure."""

    m: int
    k: int
    d: int
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    a: np.ndarray
    x0: np.ndarray
    measure: LevyMeasureSpec

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if A.shape != (self.m, self.m):
            raise DimensionError(f"A: expected {(self.m, self.m)}, got {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(self.m, -1)
        if B.shape != (self.m, self.k):
            raise DimensionError(f"B: expected {(self.m, self.k)}, got {B.shape}")
        D = np.asarray(self.D, dtype=float).reshape(self.m, -1)
        if D.shape != (self.m, self.d):
            raise DimensionError(f"D: expected {(self.m, self.d)}, got {D.shape}")
        a = as_vector(self.a, self.m, "a")
        x0 = as_vector(self.x0, self.m, "x0")
        if self.measure.dimension != self.d:
            raise DimensionError(
                f"measure: dimension {self.measure.dimension} does not match d={self.d}")
        for name, val in (("A", A), ("B", B), ("D", D), ("a", a), ("x0", x0)):
            arr = np.ascontiguousarray(val)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def has_gaussian_part(self) -> bool:
        return self.k > 0 and bool(np.any(self.B != 0.0))

    @property
    def has_jump_part(self) -> bool:
        return not self.measure.is_zero and bool(np.any(self.D != 0.0))

    def deterministic_part(self, t: float) -> np.ndarray:
        """e^{tA} x0 + int_0^t e^{(t-s)A} a ds."""
        return expm(t * self.A) @ self.x0 + expm_integral(self.A, t) @ self.a


def make_model(A, D=None, B=None, a=None, x0=None, measure=None) -> OUModel:
    """Assemble a validated model, applying the zero defaults."""
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got {A.shape}")
    m = A.shape[0]
    if B is None:
        B = np.zeros((m, 0))
    B = np.atleast_2d(np.asarray(B, dtype=float)) if np.asarray(B).size else np.asarray(
        B, dtype=float).reshape(m, 0)
    if B.shape[0] != m:
        raise DimensionError(f"B: expected {m} rows, got shape {B.shape}")
    k = B.shape[1]
    if measure is None:
        d = 1 if D is None else as_matrix(D, "D").shape[1]
        measure = LevyMeasureSpec(dimension=d)
    d = measure.dimension
    if D is None:
        D = np.zeros((m, d))
    D = as_matrix(D, "D")
    a = np.zeros(m) if a is None else as_vector(a, m, "a")
    x0 = np.zeros(m) if x0 is None else as_vector(x0, m, "x0")
    return OUModel(m=m, k=k, d=d, A=A, B=B, D=D, a=a, x0=x0, measure=measure)


# ---------------------------------------------------------------------------
# Config ingestion
# ---------------------------------------------------------------------------

def _measure_from_config(doc, prefix="measure") -> LevyMeasureSpec:
    if doc is None:
        raise ConfigError(f"{prefix}: missing section")
    dim = doc.get("dimension")
    comps = doc.get("components", [])
    families, densities = [], []
    for i, comp in enumerate(comps):
        where = f"{prefix}.components[{i}]"
        kind = comp.get("kind")
        try:
            if kind == "atoms":
                families.append(AtomFamily.explicit(comp["points"], comp["weights"]))
            elif kind == "factorial_radial":
                families.append(AtomFamily.factorial_radial(
                    comp["direction"],
                    weight_kind=comp.get("weight_rule", CONSTANT),
                    scale=comp.get("weight_scale", 1.0)))
            elif kind == "factorial_curve":
                families.append(AtomFamily.factorial_curve(
                    int(comp["dimension"]),
                    weight_kind=comp.get("weight_rule", CONSTANT),
                    scale=comp.get("weight_scale", 1.0)))
            elif kind == "power_law":
                r_max = comp.get("r_max")
                profile = PowerLawProfile(
                    c=float(comp.get("c", 1.0)),
                    alpha=float(comp["alpha"]),
                    r_max=math.inf if r_max in (None, "inf") else float(r_max))
                densities.append(DensityComponent(
                    int(comp["dimension"]), profile,
                    directions=_directions_from_config(comp.get("directions", UNIFORM))))
            elif kind == "tabulated":
                profile = TabulatedProfile(tuple(comp["knots_r"]), tuple(comp["knots_q"]))
                densities.append(DensityComponent(
                    int(comp["dimension"]), profile,
                    directions=_directions_from_config(comp.get("directions", UNIFORM))))
            else:
                raise ConfigError(f"{where}: unknown component kind {kind!r}")
        except KeyError as exc:
            raise ConfigError(f"{where}: missing field {exc.args[0]!r}") from exc
    dims = [f.dimension for f in families] + [c.dimension for c in densities]
    if dim is None:
        if not dims:
            raise ConfigError(f"{prefix}: empty measure needs an explicit dimension")
        dim = dims[0]
    if any(d_ != dim for d_ in dims):
        raise ConfigError(f"{prefix}: component dimensions disagree with dimension={dim}")
    return LevyMeasureSpec(dimension=int(dim),
                           families=tuple(families),
                           densities=tuple(densities),
                           truncation_depth=int(doc.get("truncation_depth", 30)))


def _directions_from_config(spec):
    if spec == UNIFORM or spec is None:
        return UNIFORM
    return (spec["vectors"], spec["weights"])


def load_model(config: dict) -> OUModel:
    """Build a validated model from a parsed config document.

    The document has sections ``model`` (m, k, d, A, B, D, a, x0 -- matrices
    as nested row-major arrays, omitted blocks default to zero) and
    ``measure`` (component list).  Errors name the offending block.
    """
    if not isinstance(config, dict):
        raise ConfigError("config document must be a mapping")
    mdoc = config.get("model")
    if mdoc is None:
        raise ConfigError("model: missing section")
    if "A" not in mdoc:
        raise ConfigError("model.A: missing")
    A = as_matrix(mdoc["A"], "model.A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"model.A: must be square, got {A.shape}")
    m = A.shape[0]
    if "m" in mdoc and int(mdoc["m"]) != m:
        raise ConfigError(f"model.m={mdoc['m']} disagrees with A of shape {A.shape}")

    measure = _measure_from_config(config.get("measure", {"dimension": mdoc.get("d", 1),
                                                          "components": []}))

    B = mdoc.get("B")
    if B is not None:
        B = np.asarray(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != m:
            raise DimensionError(f"model.B: expected {m} rows, got shape {B.shape}")
    if "k" in mdoc:
        k = int(mdoc["k"])
        if B is not None and B.shape[1] != k:
            raise ConfigError(f"model.k={k} disagrees with B of shape {B.shape}")
        if B is None:
            B = np.zeros((m, k))
    D = mdoc.get("D")
    if D is not None:
        D = np.asarray(D, dtype=float)
        if D.ndim != 2 or D.shape != (m, measure.dimension):
            raise DimensionError(
                f"model.D: expected shape {(m, measure.dimension)}, got {D.shape}")
    if "d" in mdoc and int(mdoc["d"]) != measure.dimension:
        raise ConfigError(f"model.d={mdoc['d']} disagrees with the measure dimension "
                          f"{measure.dimension}")
    try:
        return make_model(A, D=D, B=B, a=mdoc.get("a"), x0=mdoc.get("x0"), measure=measure)
    except (DimensionError,) as exc:
        raise type(exc)(f"model: {exc}") from exc


# ---------------------------------------------------------------------------
# Gaussian covariance
# ---------------------------------------------------------------------------

_MAX_PANELS = 4096


def _outer_integral(A, Q, t, rtol=1e-10) -> np.ndarray:
    """int_0^t e^{sA} Q e^{sA*} ds by Gauss-Legendre panels, doubled to rtol."""
    m = A.shape[0]
    if t == 0.0:
        return np.zeros((m, m))
    glx, glw = np.polynomial.legendre.leggauss(16)
    prev = None
    panels = 1
    while panels <= _MAX_PANELS:
        edges = np.linspace(0.0, t, panels + 1)
        mid = (edges[1:, None] + edges[:-1, None]) / 2
        half = (edges[1:, None] - edges[:-1, None]) / 2
        s = (mid + half * glx[None, :]).ravel()
        w = (half * np.broadcast_to(glw, (panels, glw.size))).ravel()
        acc = np.zeros((m, m))
        mats = Propagator(A).matrices(s)
        for wi, E in zip(w, mats):
            EQ = E @ Q
            acc += wi * (EQ @ E.T)
        if prev is not None:
            scale = max(np.linalg.norm(acc), 1e-300)
            if np.linalg.norm(acc - prev) <= rtol * scale:
                return 0.5 * (acc + acc.T)
        prev = acc
        panels *= 2
    return 0.5 * (prev + prev.T)


def gaussian_covariance(model: OUModel, t: float) -> np.ndarray:
    """Covariance of the Wiener integral: Sigma(t) = int_0^t e^{sA} B B* e^{sA*} ds.

    Quadrature rather than a Lyapunov solve so singular A (A = 0 included)
    shares the same code path.
    """
    if t < 0:
        raise DomainError("gaussian_covariance needs t >= 0")
    if model.k == 0:
        return np.zeros((model.m, model.m))
    return _outer_integral(model.A, model.B @ model.B.T, float(t))


def propagated_jump_covariance(model: OUModel, t: float, C_small: np.ndarray) -> np.ndarray:
    """Time-propagated small-jump covariance int_0^t e^{sA} D C D* e^{sA*} ds."""
    if t < 0:
        raise DomainError("propagated_jump_covariance needs t >= 0")
    Q = model.D @ C_small @ model.D.T
    return _outer_integral(model.A, Q, float(t))
