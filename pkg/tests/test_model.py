"""Model container, config loading, Gaussian covariance."""

import numpy as np
import pytest

from oulevy.errors import ConfigError, DimensionError, DomainError
from oulevy.fixtures import (
    gaussian_1d_model,
    kolmogorov_first_system,
    unit_factorial_measure,
    zero_measure,
)
from oulevy.linalg import expm
from oulevy.model import gaussian_covariance, load_model, make_model


def test_kolmogorov_first_system_loads():
    m = kolmogorov_first_system()
    assert (m.m, m.k, m.d) == (2, 0, 1)
    assert np.array_equal(m.A, [[1.0, 0.0], [1.0, 0.0]])
    assert np.array_equal(m.D, [[1.0], [0.0]])
    assert not m.has_gaussian_part and m.has_jump_part


def test_load_model_from_config_document():
    cfg = {
        "model": {"m": 2, "k": 0, "d": 1,
                  "A": [[1.0, 0.0], [1.0, 0.0]],
                  "D": [[1.0], [0.0]]},
        "measure": {"components": [
            {"kind": "factorial_radial", "direction": [1.0]}]},
    }
    m = load_model(cfg)
    assert m.measure.factorial_families_only()
    assert m.a.tolist() == [0.0, 0.0] and m.x0.tolist() == [0.0, 0.0]


def test_load_model_dimension_errors():
    with pytest.raises(DimensionError):
        load_model({"model": {"A": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]}})
    with pytest.raises((ConfigError, DimensionError)):
        load_model({"model": {"A": [[1.0]], "D": [[1.0], [1.0]]},
                    "measure": {"components": [
                        {"kind": "atoms", "points": [[0.5]], "weights": [1.0]}]}})
    with pytest.raises(ConfigError):
        load_model({"model": {"A": [[1.0]], "m": 3}})


def test_omitted_b_means_no_gaussian_part():
    m = make_model([[0.0]], D=[[1.0]], measure=unit_factorial_measure())
    assert m.k == 0 and not m.has_gaussian_part
    assert gaussian_covariance(m, 1.0) == pytest.approx(0.0)


def test_gaussian_covariance_values():
    assert gaussian_covariance(gaussian_1d_model(), 0.0)[0, 0] == 0.0
    flat = make_model([[0.0]], B=[[1.0]], measure=zero_measure(1))
    assert gaussian_covariance(flat, 2.0)[0, 0] == pytest.approx(2.0, rel=1e-12)
    # closed form int_0^1 e^{2s} ds = (e^2 - 1)/2
    g = gaussian_1d_model(A=1.0, B=1.0)
    want = (np.e ** 2 - 1.0) / 2.0
    assert gaussian_covariance(g, 1.0)[0, 0] == pytest.approx(want, rel=1e-10)
    with pytest.raises(DomainError):
        gaussian_covariance(g, -0.5)


def test_gaussian_covariance_symmetry_psd_additivity():
    rng = np.random.default_rng(9)
    for _ in range(10):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(1, 3))
        A = rng.normal(size=(m, m))
        B = rng.normal(size=(m, k))
        model = make_model(A, B=B, measure=zero_measure(1), D=np.zeros((m, 1)))
        t = float(rng.uniform(0.3, 1.5))
        S = gaussian_covariance(model, t)
        assert np.allclose(S, S.T, atol=1e-12 * max(1.0, np.linalg.norm(S)))
        eig = np.linalg.eigvalsh(S)
        assert eig.min() >= -1e-10 * max(np.linalg.norm(S), 1.0)
        # semigroup split Sigma(t) = e^{sA} Sigma(t-s) e^{sA*} + Sigma(s)
        s = float(rng.uniform(0.1, t - 0.05))
        E = expm(s * A)
        split = E @ gaussian_covariance(model, t - s) @ E.T + gaussian_covariance(model, s)
        assert np.linalg.norm(split - S) <= 1e-9 * max(np.linalg.norm(S), 1e-12)


def test_deterministic_part():
    m = make_model([[1.0]], D=[[1.0]], a=[2.0], x0=[3.0],
                   measure=zero_measure(1))
    # e^t x0 + a (e^t - 1)
    want = 3.0 * np.e + 2.0 * (np.e - 1.0)
    assert m.deterministic_part(1.0)[0] == pytest.approx(want, rel=1e-12)
