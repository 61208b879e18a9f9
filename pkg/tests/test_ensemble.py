import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sphereflow.ensemble import (CircleDensity, ParticleEnsemble, dirac, example_2_4_limit,
                                 make_example_2_1, make_example_2_4, make_example_2_6,
                                 sample_from_circle_density, sample_tilted)
from sphereflow.errors import RangeError, SupportOverlapError
from sphereflow.fields import velocity_simple
from sphereflow.observables import energy_simple, mean_and_order, w2_to_dirac

from strategies import seeds, unit


def test_ensemble_validation():
    e = np.eye(3)
    with pytest.raises(ValueError):
        ParticleEnsemble(e[:2], [0.5, 0.6])
    with pytest.raises(ValueError):
        ParticleEnsemble(e[:2], [1.0, 0.0])
    with pytest.raises(ValueError):
        ParticleEnsemble(e[:2], [1.0])
    with pytest.raises(ValueError):
        ParticleEnsemble(2 * e[:2])
    mu = ParticleEnsemble(e)
    assert np.allclose(mu.weights, 1 / 3)
    with pytest.raises(ValueError):
        mu.points[0, 0] = 2.0


@given(seeds, st.integers(1, 20))
def test_ensemble_json_roundtrip(seed, n):
    rng = np.random.default_rng(seed)
    mu = ParticleEnsemble(unit(rng, 3, n), rng.dirichlet(np.ones(n)))
    back = ParticleEnsemble.from_dict(json.loads(json.dumps(mu.to_dict())))
    assert np.array_equal(back.points, mu.points) and np.array_equal(back.weights, mu.weights)


def test_circle_density_validation_and_roundtrip():
    with pytest.raises(ValueError):
        CircleDensity(np.ones(64))
    f = CircleDensity.uniform(64)
    assert f.cell_masses.sum() == pytest.approx(1.0, abs=1e-14)
    g = CircleDensity.from_dict(f.to_dict())
    assert np.array_equal(g.values, f.values)


def test_example_2_4():
    mu = make_example_2_4(0.005)
    assert mu.n == 3 and mu.weights.sum() == pytest.approx(1.0, abs=1e-15)
    M, R, _ = mean_and_order(mu)
    expected = abs(1 / 50 - 49 / 50 * np.cos(0.005))
    assert R == pytest.approx(expected, abs=1e-15) and R > 0.7
    assert abs(M[0]) <= 1e-14
    with pytest.raises(RangeError):
        make_example_2_4(0.02)
    assert np.allclose(example_2_4_limit().weights, [1 / 50, 49 / 50])


def test_example_2_6():
    eta = xi = 0.008
    f = make_example_2_6(eta, xi, 4096)
    assert f.cell_masses.sum() == pytest.approx(1.0, abs=1e-10)
    ang = np.angle(np.exp(1j * f.theta))
    near0 = np.abs(ang) <= eta
    nearpi = np.abs(np.angle(np.exp(1j * (f.theta - np.pi)))) <= xi
    assert f.cell_masses[near0].sum() == pytest.approx(1 / 3, abs=1e-6)
    assert f.cell_masses[nearpi].sum() == pytest.approx(2 / 3, abs=1e-6)
    assert mean_and_order(f)[1] == pytest.approx(1 / 3, abs=2e-3)
    with pytest.raises(SupportOverlapError):
        make_example_2_6(eta, xi, 512)


def test_example_2_1():
    for eps in (0.05, 0.1, 0.3):
        mu = make_example_2_1(eps)
        for beta in (0.1, 1.0, 5.0):
            assert np.abs(velocity_simple(mu, beta, mu.points)).max() <= 1e-15
    eps, beta = 0.1, 1.0
    closed = ((1 - eps) ** 2 * np.e + 2 * eps * (1 - eps) / np.e + eps**2 * np.e) / (2 * beta)
    assert energy_simple(make_example_2_1(eps), beta) == pytest.approx(closed, rel=1e-14)
    assert closed != pytest.approx(np.e / 2)
    top = np.array([0.0, 1.0])
    w = [w2_to_dirac(make_example_2_1(e), top) for e in (0.4, 0.2, 0.1, 0.01)]
    assert all(a > b for a, b in zip(w, w[1:]))


def test_sample_from_circle_density():
    n = 4000
    mu = sample_from_circle_density(CircleDensity.uniform(256), n, 3)
    assert mean_and_order(mu)[1] <= 3 / np.sqrt(n)
    v = np.zeros(64)
    v[10] = 1.0
    hot = CircleDensity.from_unnormalized(v)
    mu = sample_from_circle_density(hot, 200, 5)
    theta = np.mod(np.arctan2(mu.points[:, 1], mu.points[:, 0]), 2 * np.pi)
    h = hot.h
    assert np.all(np.abs(theta - 10 * h) <= h / 2 + 1e-12)
    again = sample_from_circle_density(hot, 200, 5)
    assert np.array_equal(mu.points, again.points)


def test_sample_tilted_mean():
    mu = sample_tilted(3, 20_000, 0.75, 0)
    M = mean_and_order(mu)[0]
    assert M[2] == pytest.approx(0.25, abs=0.02)
    assert np.array_equal(mu.points, sample_tilted(3, 20_000, 0.75, 0).points)


def test_dirac():
    mu = dirac(np.array([0.0, 1.0]))
    assert mu.n == 1 and mu.weights[0] == 1.0
