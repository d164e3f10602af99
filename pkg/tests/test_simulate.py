"""Monte Carlo sampler: laws, determinism, coupling, density bridge."""

import math

import numpy as np
import pytest
from scipy import stats

from oulevy.density import invert_1d
from oulevy.errors import DimensionError, DomainError
from oulevy.fixtures import (
    compound_poisson_regularized_model,
    drifted_1d_model,
    gaussian_1d_model,
    single_atom_measure,
    unit_factorial_measure,
    zero_measure,
)
from oulevy.measures import AtomFamily, LevyMeasureSpec, mass_above
from oulevy.model import gaussian_covariance, make_model
from oulevy.simulate import (
    SimConfig,
    compare_to_density,
    default_cutoff,
    sample_endpoint,
    sample_endpoint_split,
    sample_path,
)

GAUSS_VAR = (math.e ** 2 - 1.0) / 2.0


def test_zero_noise_samples_are_deterministic_flow():
    model = make_model([[0.5, 0.0], [0.3, -0.2]], D=np.zeros((2, 1)),
                       x0=[1.0, -2.0], measure=zero_measure(1))
    batch = sample_endpoint(model, 1.3, SimConfig(seed=5, n_samples=64))
    want = model.deterministic_part(1.3)
    assert np.array_equal(batch.samples, np.tile(want, (64, 1)))


def test_poisson_jump_count_law():
    # atom above 1: no compensation; jump count recoverable from X / (e^{0} u)
    lam, t, n = 3.0, 1.0, 100_000
    model = make_model([[0.0]], D=[[1.0]], measure=single_atom_measure([2.0], lam))
    batch = sample_endpoint(model, t, SimConfig(seed=11, n_samples=n))
    counts = batch.samples[:, 0] / 2.0
    assert np.allclose(counts, np.round(counts))
    mean = counts.mean()
    band = 3.0 * math.sqrt(lam * t / n)
    assert abs(mean - lam * t) <= band
    assert batch.jump_intensity == pytest.approx(lam)


def test_gaussian_moments():
    n = 200_000
    model = gaussian_1d_model()
    batch = sample_endpoint(model, 1.0, SimConfig(seed=2, n_samples=n))
    x = batch.samples[:, 0]
    assert abs(x.mean()) <= 3.0 * math.sqrt(GAUSS_VAR / n)
    var_band = 3.0 * GAUSS_VAR * math.sqrt(2.0 / n)
    assert abs(x.var() - GAUSS_VAR) <= var_band


def test_gaussian_covariance_multid_bands():
    rng_model = make_model([[0.2, 0.1], [0.0, -0.3]], B=[[1.0, 0.0], [0.4, 0.8]],
                           D=np.zeros((2, 1)), measure=zero_measure(1))
    n = 100_000
    batch = sample_endpoint(rng_model, 0.8, SimConfig(seed=3, n_samples=n))
    S = gaussian_covariance(rng_model, 0.8)
    emp = np.cov(batch.samples.T)
    for i in range(2):
        for j in range(2):
            band = 3.0 * math.sqrt((S[i, i] * S[j, j] + S[i, j] ** 2) / n)
            assert abs(emp[i, j] - S[i, j]) <= band


def test_determinism_bit_identical():
    model = drifted_1d_model(unit_factorial_measure())
    cfg = SimConfig(seed=42, n_samples=5000, stream=7)
    a = sample_endpoint(model, 1.0, cfg)
    b = sample_endpoint(model, 1.0, cfg)
    assert np.array_equal(a.samples, b.samples)
    c = sample_endpoint(model, 1.0, SimConfig(seed=42, n_samples=5000, stream=8))
    assert not np.array_equal(a.samples, c.samples)


def test_default_cutoff_caps_intensity():
    meas = unit_factorial_measure()
    eps = default_cutoff(meas, 1.0)
    assert mass_above(meas, max(eps, 1e-300)) <= 1e4
    from oulevy.fixtures import stable_like_measure
    stab = stable_like_measure(1, 1.5)
    eps = default_cutoff(stab, 2.0)
    assert mass_above(stab, eps) == pytest.approx(1e4 / 2.0, rel=1e-3)


def test_cutoff_robustness_within_bands():
    # cutoffs with a negligible dropped-variance gap (atom 1/5! between them)
    model = drifted_1d_model(unit_factorial_measure())
    n = 100_000
    a = sample_endpoint(model, 1.0, SimConfig(seed=9, n_samples=n, cutoff=0.01))
    b = sample_endpoint(model, 1.0, SimConfig(seed=10, n_samples=n, cutoff=0.005))
    xa, xb = a.samples[:, 0], b.samples[:, 0]
    band = 3.0 * math.sqrt(xa.var() / n + xb.var() / n)
    assert abs(xa.mean() - xb.mean()) <= band
    var_band = 3.0 * math.sqrt(2.0) * max(xa.var(), xb.var()) * math.sqrt(2.0 / n)
    assert abs(xa.var() - xb.var()) <= var_band
    # dropped-variance bookkeeping is reported
    assert b.dropped_variance < a.dropped_variance


def test_gaussian_approx_policy_folds_small_jumps():
    model = drifted_1d_model(unit_factorial_measure())
    n = 100_000
    drop = sample_endpoint(model, 1.0, SimConfig(seed=1, n_samples=n, cutoff=0.3))
    fold = sample_endpoint(model, 1.0, SimConfig(
        seed=1, n_samples=n, cutoff=0.3, small_jump_policy="gaussian_approx"))
    # folded variance exceeds the dropped one by roughly the propagated residual
    assert fold.samples[:, 0].var() > drop.samples[:, 0].var()


def test_linearity_coupled_split():
    fam1 = AtomFamily.explicit([[0.5]], [1.0])
    fam2 = AtomFamily.explicit([[0.8], [2.0]], [0.7, 0.5])
    meas = LevyMeasureSpec(1, families=(fam1, fam2))
    model = make_model([[0.6]], D=[[1.0]], measure=meas)
    total, parts = sample_endpoint_split(
        model, 1.0, SimConfig(seed=21, n_samples=1000), partition=[{0}, {1}])
    recon = parts[0].samples + parts[1].samples
    assert np.allclose(recon, total.samples, rtol=0.0, atol=1e-12)


def test_split_partition_validated():
    model = drifted_1d_model(unit_factorial_measure())
    with pytest.raises(DomainError):
        sample_endpoint_split(model, 1.0, SimConfig(seed=0, n_samples=10),
                              partition=[{0}, {0}])


def test_path_zero_noise_deterministic():
    model = make_model([[0.4]], D=[[0.0]], x0=[2.0], measure=zero_measure(1))
    times = [0.25, 0.5, 1.0]
    paths = sample_path(model, times, SimConfig(seed=4, n_samples=8))
    for j, tj in enumerate(times):
        want = 2.0 * math.exp(0.4 * tj)
        assert np.allclose(paths.paths[:, j, 0], want, rtol=1e-12)


def test_path_endpoint_consistency():
    model = drifted_1d_model(unit_factorial_measure())
    n = 20_000
    t = 1.0
    paths = sample_path(model, [0.3, 0.7, t], SimConfig(seed=5, n_samples=n))
    ends = sample_endpoint(model, t, SimConfig(seed=6, n_samples=n))
    stat = stats.ks_2samp(paths.paths[:, -1, 0], ends.samples[:, 0]).statistic
    crit = 1.63 * math.sqrt(2.0 / n)
    assert stat <= crit


def test_path_monotone_grid_required():
    model = drifted_1d_model(unit_factorial_measure())
    with pytest.raises(DomainError):
        sample_path(model, [0.5, 0.5, 1.0], SimConfig(seed=0, n_samples=2))


def test_compare_to_density_self_consistent():
    model = compound_poisson_regularized_model()
    grid = invert_1d(model, 1.0, -2.5, 13.5, n=1024)
    # resample from the inverted density itself via inverse CDF
    n = 50_000
    rng = np.random.default_rng(8)
    x = grid.axis(0)
    dx = x[1] - x[0]
    cdf = np.cumsum(grid.clipped()) * dx
    cdf /= cdf[-1]
    xs = np.interp(rng.random(n), cdf, x + dx)
    from oulevy.simulate import SampleBatch
    batch = SampleBatch(1.0, 1, xs[:, None], SimConfig(seed=0, n_samples=n),
                        2.0, 1e-300, 0.0)
    out = compare_to_density(batch, grid)
    assert out["ks_pass"] and out["ks"] <= 1.63 / math.sqrt(n)


def test_compare_to_density_gaussian_l1():
    model = gaussian_1d_model()
    sigma = math.sqrt(GAUSS_VAR)
    grid = invert_1d(model, 1.0, -6 * sigma, 6 * sigma, n=1024)
    n = 200_000
    batch = sample_endpoint(model, 1.0, SimConfig(seed=12, n_samples=n))
    out = compare_to_density(batch, grid, n_bins=256)
    assert out["l1"] <= 0.02
    assert out["ks_pass"]


def test_compare_to_density_validates():
    model = gaussian_1d_model()
    sigma = math.sqrt(GAUSS_VAR)
    grid = invert_1d(model, 1.0, -6 * sigma, 6 * sigma, n=512)
    batch = sample_endpoint(gaussian_1d_model(), 1.0, SimConfig(seed=1, n_samples=100))
    two_d = make_model(np.zeros((2, 2)), B=np.eye(2), D=np.zeros((2, 1)),
                       measure=zero_measure(1))
    batch2 = sample_endpoint(two_d, 1.0, SimConfig(seed=1, n_samples=100))
    with pytest.raises(DimensionError):
        compare_to_density(batch2, grid)
