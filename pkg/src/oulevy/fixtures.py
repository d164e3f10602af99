"""Built-in fixture measures and models used by tests and the reproduce harness."""

from __future__ import annotations

import math

import numpy as np

from .measures import (
    LINEAR,
    AtomFamily,
    DensityComponent,
    LevyMeasureSpec,
    PowerLawProfile,
)
from .model import OUModel, make_model


def linear_factorial_measure() -> LevyMeasureSpec:
    """Atoms at 1/n! with weights n: infinite mass, slowly diverging rho."""
    fam = AtomFamily.factorial_radial([1.0], weight_kind=LINEAR, scale=1.0)
    return LevyMeasureSpec(dimension=1, families=(fam,))


def unit_factorial_measure() -> LevyMeasureSpec:
    """Atoms at 1/n! with unit weights: infinite mass, vanishing rho."""
    fam = AtomFamily.factorial_radial([1.0])
    return LevyMeasureSpec(dimension=1, families=(fam,))


def curve_measure(dimension: int) -> LevyMeasureSpec:
    """Atoms on the moment curve (x, x^2, ..., x^d) at x = 1/k!.

    Any hyperplane meets the curve in at most d points (Vandermonde), so the
    essential linear support is all of R^d.
    """
    fam = AtomFamily.factorial_curve(dimension)
    return LevyMeasureSpec(dimension=dimension, families=(fam,))


def axis_measure_2d() -> LevyMeasureSpec:
    """Infinite-mass atoms confined to the e1-axis of R^2."""
    fam = AtomFamily.factorial_radial([1.0, 0.0])
    return LevyMeasureSpec(dimension=2, families=(fam,))


def stable_like_measure(dimension: int, alpha: float, c: float = 1.0,
                        r_max: float = math.inf) -> LevyMeasureSpec:
    """Isotropic stable-like density component."""
    comp = DensityComponent(dimension, PowerLawProfile(c=c, alpha=alpha, r_max=r_max))
    return LevyMeasureSpec(dimension=dimension, densities=(comp,))


def single_atom_measure(point, mass: float) -> LevyMeasureSpec:
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    fam = AtomFamily.explicit(pts, [mass])
    return LevyMeasureSpec(dimension=pts.shape[1], families=(fam,))


def zero_measure(dimension: int = 1) -> LevyMeasureSpec:
    return LevyMeasureSpec(dimension=dimension)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

def drifted_1d_model(measure: LevyMeasureSpec, A: float = 1.0) -> OUModel:
    """Scalar model with non-degenerate drift and pure jump noise (B = 0, D = 1)."""
    return make_model([[A]], D=[[1.0]], measure=measure)


def gaussian_1d_model(A: float = 1.0, B: float = 1.0) -> OUModel:
    return make_model([[A]], B=[[B]], measure=zero_measure(1))


def pure_noise_model(measure: LevyMeasureSpec) -> OUModel:
    """X(t) = Z(t): A = 0, B = 0, D = I."""
    d = measure.dimension
    return make_model(np.zeros((d, d)), D=np.eye(d), measure=measure)


def kolmogorov_first_system(measure: LevyMeasureSpec | None = None) -> OUModel:
    """dX1 = X1 dt + dZ, dX2 = X1 dt: smoothness is preserved, not created."""
    if measure is None:
        measure = unit_factorial_measure()
    return make_model([[1.0, 0.0], [1.0, 0.0]], D=[[1.0], [0.0]], measure=measure)


def kolmogorov_modified_system(measure: LevyMeasureSpec | None = None) -> OUModel:
    """dX1 = X2 dt + dZ, dX2 = X1 dt: the rotated drift regularizes the law."""
    if measure is None:
        measure = unit_factorial_measure()
    return make_model([[0.0, 1.0], [1.0, 0.0]], D=[[1.0], [0.0]], measure=measure)


def compound_poisson_regularized_model(B: float = 0.05) -> OUModel:
    """Single atom 0.5 with mass 2 under A = 1 drift, small Gaussian regularizer."""
    return make_model([[1.0]], B=[[B]], D=[[1.0]],
                      measure=single_atom_measure([0.5], 2.0))
