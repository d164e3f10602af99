"""Measure functionals against direct-summation and closed-form oracles."""

import math

import numpy as np
import pytest

from oulevy.errors import DimensionError, DomainError, MeasureError
from oulevy.fixtures import (
    axis_measure_2d,
    curve_measure,
    linear_factorial_measure,
    single_atom_measure,
    stable_like_measure,
    unit_factorial_measure,
    zero_measure,
)
from oulevy.measures import (
    AtomFamily,
    DensityComponent,
    LevyMeasureSpec,
    PowerLawProfile,
    TabulatedProfile,
    classify_profile,
    compensator_mean,
    directional_truncated_moment,
    essential_linear_support,
    mass_above,
    moment_above_one,
    rho,
    second_matrix_below,
    small_second_moment,
    truncated_second_moment,
    yamazato_check,
)


def _factorial_atoms(weights, n=60):
    """Oracle: flat (u, w) lists for 1-d factorial families, summed directly."""
    out = []
    for k in range(1, n + 1):
        u = 1.0 / math.factorial(k)
        if u == 0.0:
            break
        out.append((u, weights(k)))
    return out


EX_LINEAR = linear_factorial_measure()   # weights n
EX_UNIT = unit_factorial_measure()       # weights 1


# -- mass_above --------------------------------------------------------------

def test_mass_above_linear_weights():
    # atoms n=1 (u=1, w=1) and n=2 (u=1/2, w=2) sit strictly above 1/6
    assert mass_above(EX_LINEAR, 1.0 / 6.0) == pytest.approx(3.0)


def test_mass_above_empty_measure():
    assert mass_above(zero_measure(1), 0.5) == 0.0


@pytest.mark.parametrize("N", [4, 7, 10, 15])
def test_mass_above_unit_weights_index_count(N):
    eps = 1.0 / math.factorial(N)
    assert mass_above(EX_UNIT, eps) == pytest.approx(N - 1)


def test_mass_above_rejects_nonpositive_eps():
    with pytest.raises(DomainError):
        mass_above(EX_UNIT, 0.0)


# -- truncated second moment and rho -----------------------------------------

def test_truncated_second_moment_single_atom():
    spec = single_atom_measure([0.5], 2.0)
    assert truncated_second_moment(spec, 1.0) == pytest.approx(0.5)
    assert truncated_second_moment(spec, 0.1) == pytest.approx(0.02)


def test_truncated_second_moment_unit_factorial():
    eps = 1.0 / math.factorial(10)
    oracle = sum(w * min(u * u, eps * eps) for u, w in _factorial_atoms(lambda k: 1.0))
    got = truncated_second_moment(EX_UNIT, eps)
    assert got == pytest.approx(oracle, rel=1e-14)
    assert got / eps ** 2 == pytest.approx(10.008, abs=2e-3)


def test_rho_values_on_the_factorial_scale():
    eps = 1.0 / math.factorial(10)
    oracle_unit = sum(w * min(u * u, eps * eps)
                      for u, w in _factorial_atoms(lambda k: 1.0))
    oracle_unit /= eps * eps * math.log(1.0 / eps)
    assert rho(EX_UNIT, eps) == pytest.approx(oracle_unit, rel=1e-14)
    assert rho(EX_UNIT, eps) == pytest.approx(0.663, abs=0.01)

    oracle_lin = sum(w * min(u * u, eps * eps)
                     for u, w in _factorial_atoms(lambda k: float(k)))
    oracle_lin /= eps * eps * math.log(1.0 / eps)
    assert rho(EX_LINEAR, eps) == pytest.approx(oracle_lin, rel=1e-14)
    assert rho(EX_LINEAR, eps) == pytest.approx(3.65, abs=0.05)


def test_rho_zero_measure_and_domain():
    assert rho(zero_measure(1), 0.25) == 0.0
    with pytest.raises(DomainError):
        rho(EX_UNIT, 1.0)


def test_rho_trends_along_the_factorial_scale():
    lin = [rho(EX_LINEAR, 1.0 / math.factorial(N)) for N in range(5, 13)]
    unit = [rho(EX_UNIT, 1.0 / math.factorial(N)) for N in range(5, 13)]
    assert np.all(np.diff(lin) > 0)
    assert np.all(np.diff(unit) < 0)


def test_split_recombine_identity():
    # clipped part + unclipped part computed independently
    for spec in (EX_LINEAR, EX_UNIT, single_atom_measure([0.3], 1.5)):
        for eps in (0.3, 1e-3, 1.0 / math.factorial(8)):
            whole = truncated_second_moment(spec, eps)
            split = small_second_moment(spec, eps) + eps ** 2 * mass_above(spec, eps)
            assert whole == pytest.approx(split, rel=1e-12)


def test_mass_above_monotone_in_eps():
    eps = np.geomspace(1e-9, 0.9, 25)
    vals = [mass_above(EX_LINEAR, e) for e in eps]
    assert np.all(np.diff(vals) <= 0)


# -- directional truncated moment ---------------------------------------------

def test_directional_orthogonal_support_is_zero():
    assert directional_truncated_moment(axis_measure_2d(), [0.0, 1.0], 0.5) == 0.0


def test_directional_single_atom_projection():
    spec = single_atom_measure([0.3, 0.4], 1.0)
    assert directional_truncated_moment(spec, [1.0, 0.0], 1.0) == pytest.approx(0.09)


def test_directional_curve_measure_truncation():
    # atoms with first coordinate 1/k! <= 1/3! contribute (1/k!)^2, k >= 3
    spec = curve_measure(2)
    oracle = sum((1.0 / math.factorial(k)) ** 2 for k in range(3, 40))
    got = directional_truncated_moment(spec, [1.0, 0.0], 1.0 / 6.0)
    assert got == pytest.approx(oracle, rel=1e-14)
    assert got == pytest.approx(0.029585, abs=1e-5)


def test_directional_requires_unit_vector():
    with pytest.raises(DomainError):
        directional_truncated_moment(axis_measure_2d(), [1.0, 1.0], 0.5)


def test_directional_reduces_to_1d_truncated_form():
    # for d = 1 and l = 1 the integral is the small-ball second moment
    for eps in (0.4, 1e-2, 1.0 / math.factorial(7)):
        assert directional_truncated_moment(EX_LINEAR, [1.0], eps) == pytest.approx(
            small_second_moment(EX_LINEAR, eps), rel=1e-13)


def test_directional_axis_atoms_match_1d_formula():
    rng = np.random.default_rng(42)
    for _ in range(10):
        n = int(rng.integers(2, 8))
        us = rng.uniform(0.05, 2.0, size=n)
        ws = rng.uniform(0.1, 3.0, size=n)
        pts = np.zeros((n, 2))
        pts[:, 0] = us
        spec2 = LevyMeasureSpec(2, families=(AtomFamily.explicit(pts, ws),))
        spec1 = LevyMeasureSpec(1, families=(AtomFamily.explicit(us[:, None], ws),))
        eps = float(rng.uniform(0.05, 1.5))
        a = directional_truncated_moment(spec2, [1.0, 0.0], eps)
        b = sum(w * u * u for u, w in zip(us, ws) if u <= eps)
        assert a == pytest.approx(b, rel=1e-13)
        assert a == pytest.approx(
            small_second_moment(spec1, eps), rel=1e-13)


def test_directional_uniform_profiles_match_monte_carlo():
    # closed-form angular kernels for d = 2, 3 against direction sampling
    rng = np.random.default_rng(1)
    for d in (2, 3):
        spec = stable_like_measure(d, alpha=1.2, r_max=2.0)
        comp = spec.densities[0]
        eps = 0.35
        l = np.zeros(d)
        l[0] = 1.0
        xi = rng.normal(size=(200_000, d))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        # integrate the sampled angular expectation on a radial grid
        proj = xi @ l
        vals = []
        for ri in np.geomspace(1e-4, 2.0, 60):
            p = ri * proj
            vals.append(np.mean(np.where(np.abs(p) <= eps, p * p, 0.0)))
        vals = np.array(vals)
        grid = np.geomspace(1e-4, 2.0, 60)
        qr = comp.profile.c * grid ** (-1.0 - comp.profile.alpha)
        mc = np.trapezoid(vals * qr, grid)
        exact = comp.directional_truncated(l, eps)
        low_piece = comp.profile.power_integral(2, 0.0, 1e-4) / d
        assert exact == pytest.approx(mc + low_piece, rel=0.02)


# -- moments and means ---------------------------------------------------------

def test_moment_above_one_cases():
    assert moment_above_one(unit_factorial_measure(), 2) == 0.0
    assert moment_above_one(single_atom_measure([2.0], 3.0), 2) == pytest.approx(12.0)
    assert math.isinf(moment_above_one(stable_like_measure(1, 1.5), 2))
    assert moment_above_one(stable_like_measure(1, 1.5, r_max=0.9), 5) == 0.0


def test_compensator_mean_cases():
    sym = LevyMeasureSpec(1, families=(
        AtomFamily.explicit([[0.5], [-0.5]], [1.0, 1.0]),))
    assert compensator_mean(sym, 0.1, 1.0)[0] == pytest.approx(0.0)
    atom = single_atom_measure([0.5], 2.0)
    assert compensator_mean(atom, 0.1, 1.0)[0] == pytest.approx(1.0)
    # atoms of the unit-weight factorial measure in (1/3!, 1]: 1/1! + 1/2!
    got = compensator_mean(EX_UNIT, 1.0 / 6.0, 1.0)
    assert got[0] == pytest.approx(1.5)
    with pytest.raises(DomainError):
        compensator_mean(atom, 1.0, 0.5)


def test_second_matrix_below():
    spec = single_atom_measure([0.3, 0.4], 2.0)
    M = second_matrix_below(spec, 1.0)
    assert np.allclose(M, 2.0 * np.outer([0.3, 0.4], [0.3, 0.4]))
    iso = stable_like_measure(2, 1.5, r_max=1.0)
    M2 = second_matrix_below(iso, 1.0)
    expected = 0.5 * np.eye(2) * (1.0 / (2 - 1.5))
    assert np.allclose(M2, expected, rtol=1e-12)


# -- essential linear support ---------------------------------------------------

def test_essential_support_cases():
    assert essential_linear_support(single_atom_measure([1.0, 2.0], 5.0)).dim == 0
    assert essential_linear_support(axis_measure_2d()).dim == 1
    for d in (2, 3):
        assert essential_linear_support(curve_measure(d)).dim == d
    ok, sub = yamazato_check(curve_measure(3))
    assert ok and sub.dim == 3
    assert yamazato_check(axis_measure_2d())[0] is False
    assert yamazato_check(single_atom_measure([1.0], 2.0))[0] is False


def test_essential_support_monotone_under_components():
    base = axis_measure_2d()
    plus_finite = LevyMeasureSpec(2, families=base.families + (
        AtomFamily.explicit([[0.0, 3.0]], [4.0]),))
    assert essential_linear_support(plus_finite).dim == 1
    plus_infinite = LevyMeasureSpec(2, families=base.families + (
        AtomFamily.factorial_radial([0.0, 1.0]),))
    assert essential_linear_support(plus_infinite).dim == 2


def test_uniform_density_support_is_full():
    assert essential_linear_support(stable_like_measure(2, 1.1)).dim == 2


# -- profiles -------------------------------------------------------------------

def test_power_law_validation():
    with pytest.raises(MeasureError):
        PowerLawProfile(c=1.0, alpha=2.5)
    with pytest.raises(MeasureError):
        PowerLawProfile(c=-1.0, alpha=1.0)


def test_power_law_closed_forms():
    p = PowerLawProfile(c=2.0, alpha=1.5)
    # mass above eps: 2 * eps^{-1.5} / 1.5
    assert p.mass_above(0.1) == pytest.approx(2.0 * 0.1 ** -1.5 / 1.5, rel=1e-14)
    # second moment below eps: 2 * eps^{0.5} / 0.5
    assert p.power_integral(2, 0.0, 0.1) == pytest.approx(2.0 * 0.1 ** 0.5 / 0.5, rel=1e-14)


def test_tabulated_profile_matches_power_law():
    # log-log interpolation reproduces an exact power law through its knots
    knots_r = np.geomspace(1e-3, 1.0, 9)
    knots_q = 2.0 * knots_r ** (-2.5)
    tab = TabulatedProfile(tuple(knots_r), tuple(knots_q))
    ref = PowerLawProfile(c=2.0, alpha=1.5)
    got = tab.power_integral(2, 1e-3, 1.0)
    assert got == pytest.approx(ref.power_integral(2, 1e-3, 1.0), rel=1e-12)
    spec = LevyMeasureSpec(1, densities=(DensityComponent(1, tab),))
    assert not spec.has_infinite_mass


def test_stable_small_ball_scaling():
    # int_{|u|<=eps} u^2 Pi = c eps^{2-alpha}/(2-alpha), any dimension
    for d in (1, 2, 3):
        spec = stable_like_measure(d, alpha=1.5, c=1.0)
        for eps in (0.1, 0.01):
            want = eps ** 0.5 / 0.5
            assert small_second_moment(spec, eps) == pytest.approx(want, rel=1e-12)


# -- classification ---------------------------------------------------------------

def _rho_profile(spec):
    eps = 0.5 ** np.arange(4, 41)
    vals = np.array([rho(spec, e) for e in eps])
    if spec.factorial_families_only():
        ns = np.arange(5, 15)
        fvals = np.array([rho(spec, 1.0 / math.factorial(int(n))) for n in ns])
        return classify_profile(eps, vals, factorial_n=ns, factorial_values=fvals)
    return classify_profile(eps, vals)


def test_classify_linear_factorial_diverges():
    assert _rho_profile(EX_LINEAR).verdict == "diverges"


def test_classify_unit_factorial_vanishes():
    assert _rho_profile(EX_UNIT).verdict == "vanishes"


def test_classify_zero_measure_vanishes():
    assert _rho_profile(zero_measure(1)).verdict == "vanishes"


def test_classify_stable_diverges():
    assert _rho_profile(stable_like_measure(1, alpha=1.5)).verdict == "diverges"


# -- spec validation ----------------------------------------------------------------

def test_dimension_mismatch_rejected():
    with pytest.raises(DimensionError):
        LevyMeasureSpec(2, families=(AtomFamily.factorial_radial([1.0]),))


def test_materialize_atoms_depth():
    pts, w, idx = EX_LINEAR.materialize_atoms()
    assert pts.shape == (30, 1) and w[0] == 1.0 and w[29] == 30.0
    spec = LevyMeasureSpec(1, families=EX_LINEAR.families, truncation_depth=5)
    pts, w, _ = spec.materialize_atoms()
    assert pts.shape == (5, 1)
