import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sphereflow.ensemble import CircleDensity, ParticleEnsemble, make_example_2_4, make_example_2_6
from sphereflow.fields import (is_tangent, kuramoto_part_and_perturbation,
                               perturbation_time_derivative, velocity_circle, velocity_field_batch,
                               velocity_general, velocity_gradient, velocity_simple)
from sphereflow.kernel import (Custom, Kuramoto, SimpleAttention, affine_kernel, epsilon_phi,
                               scaled_exponential)
from sphereflow.observables import mean_and_order
from sphereflow.sphere import project_tangent

from strategies import seeds, unit


def random_ensemble(rng, d, n):
    return ParticleEnsemble(unit(rng, d, n), rng.dirichlet(np.ones(n)))


def kernels(d):
    B = np.diag(np.linspace(-0.8, 1.0, d))
    return [SimpleAttention(1.3, d), Kuramoto(d), scaled_exponential(0.05, d),
            affine_kernel(0.3, B)]


@given(seeds, st.integers(2, 5), st.integers(1, 30))
def test_fields_tangent(seed, d, n):
    rng = np.random.default_rng(seed)
    mu = random_ensemble(rng, d, n)
    x = unit(rng, d, 7)
    for spec in kernels(d):
        assert is_tangent(x, velocity_general(mu, spec, x), 1e-12)
        assert is_tangent(x, velocity_gradient(mu, spec, x), 1e-12)


def test_velocity_of_dirac_vanishes_at_its_atom():
    x = np.array([0.0, 0.6, 0.8])
    mu = ParticleEnsemble(x[None])
    assert np.array_equal(velocity_simple(mu, 2.0, x), np.zeros(3))
    assert np.array_equal(velocity_gradient(mu, SimpleAttention(2.0, 3), x), np.zeros(3))


def test_example_2_4_velocities():
    xi = 0.005
    mu = make_example_2_4(xi)
    assert np.abs(velocity_simple(mu, 1.0, np.array([0.0, 1.0]))).max() <= 1e-14
    left, right = mu.points[1], mu.points[2]
    vl = velocity_simple(mu, 1.0, left)
    vr = velocity_simple(mu, 1.0, right)
    # unit tangent pointing toward -pi/2 along the circle
    to_bottom_l = project_tangent(left, np.array([0.0, -1.0]))
    assert vl @ to_bottom_l > 0
    assert vl[0] == pytest.approx(-vr[0], abs=1e-15)
    assert vl[1] == pytest.approx(vr[1], abs=1e-15)


def test_velocity_circle_examples():
    f = CircleDensity.uniform(256)
    assert np.abs(velocity_circle(f, 3.0, np.linspace(0, 6, 13))).max() <= 1e-10
    eta = 0.008
    g = make_example_2_6(eta, eta, 4096)
    v = velocity_circle(g, 100.0, np.array([0.0, np.pi, eta]))
    scale = np.exp(100.0)
    assert abs(v[0]) <= 1e-12 * scale and abs(v[1]) <= 1e-12 * scale
    assert v[2] < 0 and abs(v[2]) > eta * 1e35


def test_velocity_circle_matches_particle_field(rng):
    th = rng.uniform(0, 2 * np.pi, 9)
    pts = np.stack([np.cos(th), np.sin(th)], 1)
    mu = ParticleEnsemble(pts, rng.dirichlet(np.ones(9)))
    t = 0.77
    x = np.array([np.cos(t), np.sin(t)])
    v = velocity_simple(mu, 1.5, x)
    tangent = np.array([-np.sin(t), np.cos(t)])
    assert velocity_circle(mu, 1.5, t) == pytest.approx(v @ tangent, abs=1e-14)


@given(seeds, st.integers(2, 5))
def test_gradient_is_beta_times_simple(seed, d):
    rng = np.random.default_rng(seed)
    mu = random_ensemble(rng, d, 12)
    x = unit(rng, d, 5)
    beta = 0.9
    g = velocity_gradient(mu, SimpleAttention(beta, d), x)
    assert np.abs(g - beta * velocity_simple(mu, beta, x)).max() <= 1e-12


@given(seeds, st.integers(2, 5))
def test_kuramoto_field_is_projected_mean(seed, d):
    rng = np.random.default_rng(seed)
    mu = random_ensemble(rng, d, 15)
    x = unit(rng, d, 4)
    M = mean_and_order(mu)[0]
    expect = project_tangent(x, np.broadcast_to(M, x.shape))
    assert np.abs(velocity_gradient(mu, Kuramoto(d), x) - expect).max() <= 1e-14
    assert np.abs(velocity_general(mu, Kuramoto(d), x) - expect).max() <= 1e-14


def test_general_equals_simple_for_attention(rng):
    mu = random_ensemble(rng, 3, 20)
    x = unit(rng, 3, 6)
    assert np.array_equal(velocity_general(mu, SimpleAttention(0.4, 3), x),
                          velocity_simple(mu, 0.4, x))


def test_norm_bound_random_inputs(rng):
    worst = 0.0
    for _ in range(400):
        d = int(rng.integers(2, 5))
        n = int(rng.integers(1, 8))
        pts = unit(rng, d, n)
        w = rng.uniform(0.1, 1.0, n)  # any total mass
        spec = kernels(d)[int(rng.integers(4))]
        x = unit(rng, d, 25)
        Y = velocity_general((pts, w), spec, x)
        bound = (1 + epsilon_phi(spec)) * w.sum()
        worst = max(worst, float(np.linalg.norm(Y, axis=1).max() / bound))
    assert worst <= 1.0 + 1e-12


def test_perturbation_bounds(rng):
    for _ in range(300):
        d = int(rng.integers(2, 5))
        mu = random_ensemble(rng, d, int(rng.integers(1, 10)))
        spec = kernels(d)[int(rng.integers(4))]
        x = unit(rng, d, 30)
        V, W = kuramoto_part_and_perturbation(mu, spec, x)
        assert np.linalg.norm(W, axis=1).max() <= epsilon_phi(spec) + 1e-12
        if spec.kind == "kuramoto":
            assert np.array_equal(W, np.zeros_like(W))


def test_perturbation_time_derivative_matches_differences(rng):
    from sphereflow.dynamics import FlowState, IntegratorConfig, evolve

    mu = random_ensemble(rng, 3, 10)
    spec = scaled_exponential(0.3, 3)
    x = unit(rng, 3, 4)
    h = 1e-4
    ahead = evolve(FlowState(0.0, mu), spec, IntegratorConfig("rk4", h / 2, h)).final_state.ensemble
    _, W0 = kuramoto_part_and_perturbation(mu, spec, x)
    _, W1 = kuramoto_part_and_perturbation(ahead, spec, x)
    ahead2 = evolve(FlowState(0.0, mu), spec, IntegratorConfig("rk4", h / 2, 2 * h)).final_state.ensemble
    _, W2 = kuramoto_part_and_perturbation(ahead2, spec, x)
    fd = (-3 * W0 + 4 * W1 - W2) / (2 * h)
    an = perturbation_time_derivative(mu, spec, x)
    assert np.abs(fd - an).max() <= 1e-6


def test_batch_equals_pointwise_bitwise(rng):
    mu = random_ensemble(rng, 4, 50)
    spec = SimpleAttention(1.1, 4)
    T = unit(rng, 4, 20)
    batch = velocity_field_batch(mu, spec, T)
    for i in range(20):
        assert np.array_equal(batch[i], velocity_general(mu, spec, T[i]))


@given(seeds, st.integers(2, 5))
def test_rotation_equivariance(seed, d):
    rng = np.random.default_rng(seed)
    mu = random_ensemble(rng, d, 10)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    x = unit(rng, d, 5)
    spec = SimpleAttention(1.7, d)
    rotated = ParticleEnsemble(mu.points @ Q.T, mu.weights)
    lhs = velocity_field_batch(rotated, spec, x @ Q.T)
    rhs = velocity_field_batch(mu, spec, x) @ Q.T
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_callable_kernel_matches_builtin(rng):
    beta = 0.6
    mu = random_ensemble(rng, 3, 15)
    x = unit(rng, 3, 5)
    c = Custom(np.eye(3), lambda s: np.exp(beta * s), lambda s: beta * np.exp(beta * s))
    ref = velocity_general(mu, scaled_exponential(beta, 3), x)
    assert np.abs(velocity_general(mu, c, x) - ref).max() <= 1e-14
