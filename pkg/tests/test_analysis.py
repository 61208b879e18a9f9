import numpy as np
import pytest
from hypothesis import given

from sphereflow.analysis import (InequalityVerdict, attractor_bound, attractor_diagnostics,
                                 cone_inequality_check, entropy_production_check,
                                 entropy_production_verdict, equality_violation,
                                 escape_direction_search, first_variation, hemisphere_critical_test,
                                 large_beta_cone_check, perturbation_jacobian_norm, pl_inequality_check,
                                 pl_regime, pl_w2_bound, pointwise_eigen_inequality, pushforward,
                                 rate_fit, second_variation, second_variation_at_critical,
                                 small_time, theorem39_constants)
from sphereflow.dynamics import FlowState, IntegratorConfig, evolve
from sphereflow.ensemble import ParticleEnsemble, random_cap_ensemble
from sphereflow.errors import (HypothesisError, InsufficientDataError, NonTangentError,
                               NotCriticalError, RangeError, SupportError)
from sphereflow.fields import velocity_gradient
from sphereflow.kernel import Custom, Kuramoto, SimpleAttention, eigen
from sphereflow.observables import energy_general, mean_and_order
from sphereflow.scenarios import collect_states, kernel_for_epsilon
from sphereflow.sphere import project_tangent, sample_cap

from strategies import seeds, unit

E3 = np.eye(3)


def random_measure(rng, d, n):
    return ParticleEnsemble(unit(rng, d, n), rng.dirichlet(np.ones(n)))


def equator(n):
    th = 2 * np.pi * np.arange(n) / n
    return ParticleEnsemble(np.stack([np.cos(th), np.sin(th), np.zeros(n)], axis=1))


def energy_along(mu, spec, V, h, accel=None):
    pts, w = pushforward(mu, V, h, accel)
    return energy_general((pts, w), spec)


def test_first_variation_zero_field(rng):
    mu = random_measure(rng, 3, 7)
    assert first_variation(mu, SimpleAttention(1.0, 3), np.zeros((7, 3))) == 0.0


def test_first_variation_rejects_normal_field(rng):
    mu = random_measure(rng, 3, 4)
    with pytest.raises(NonTangentError):
        first_variation(mu, SimpleAttention(1.0, 3), mu.points)


@given(seed=seeds)
def test_variations_match_differences(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 5))
    mu = random_measure(rng, d, 6)
    spec = SimpleAttention(float(rng.uniform(0.2, 2.0)), d)
    V = project_tangent(mu.points, rng.standard_normal((6, d)))
    h = 1e-3
    e = [energy_along(mu, spec, V, k * h) for k in (-2, -1, 0, 1, 2)]
    d1 = (e[0] - 8 * e[1] + 8 * e[3] - e[4]) / (12 * h)
    d2 = (-e[0] + 16 * e[1] - 30 * e[2] + 16 * e[3] - e[4]) / (12 * h * h)
    rep = second_variation(mu, spec, V)
    scale = 1.0 + np.abs(V).max() ** 2 * np.exp(spec.beta)
    assert rep.first_variation == pytest.approx(d1, abs=1e-7 * scale)
    assert rep.second_variation == pytest.approx(d2, abs=1e-4 * scale)


def test_first_variation_of_gradient_field_is_its_energy(rng):
    mu = random_measure(rng, 3, 9)
    spec = SimpleAttention(1.3, 3)
    G = velocity_gradient(mu, spec, mu.points)
    assert first_variation(mu, spec, G) == pytest.approx(mu.weights @ np.sum(G * G, axis=1))


def test_second_variation_at_dirac_along_its_axis_vanishes():
    mu = ParticleEnsemble(E3[2][None])
    rep = second_variation_at_critical(mu, SimpleAttention(1.0, 3), E3[2])
    assert rep.second_variation == 0.0


@pytest.mark.parametrize("beta", [0.1, 1.0, 4.0])
def test_antipodal_pair_closed_form(beta):
    mu = ParticleEnsemble(np.stack([E3[2], -E3[2]]), np.array([0.5, 0.5]))
    rep = second_variation_at_critical(mu, SimpleAttention(beta, 3), E3[0])
    assert rep.second_variation == pytest.approx(beta * np.exp(-beta), rel=1e-12)
    assert len(rep.decomposition) == 4


def test_second_variation_requires_critical_point(rng):
    with pytest.raises(NotCriticalError):
        second_variation_at_critical(random_measure(rng, 3, 5), SimpleAttention(1.0, 3), E3[0])


def test_escape_from_equator_points_off_the_plane():
    found = escape_direction_search(equator(64), SimpleAttention(1.0, 3), full=True)
    assert found is not None
    w, value = found
    assert value > 0
    assert abs(w[2]) == pytest.approx(1.0, abs=1e-12)


def test_no_escape_at_dirac():
    mu = ParticleEnsemble(E3[2][None])
    assert escape_direction_search(mu, SimpleAttention(1.0, 3), full=True) is None


@given(seed=seeds)
def test_pointwise_inequality_nonnegative(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(3, 6))
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = 1.5
    vals = np.concatenate([[lam] * 3, rng.uniform(-lam, lam, d - 3)])
    eig = eigen(Q @ np.diag(vals) @ Q.T)
    x, y = unit(rng, d, 200), unit(rng, d, 200)
    assert pointwise_eigen_inequality(x, y, eig).min() >= -1e-12


def test_pointwise_equality_cases():
    eig = eigen(2.0 * np.eye(3))
    x = unit(np.random.default_rng(1), 3, 5)
    assert np.abs(pointwise_eigen_inequality(x, x, eig)).max() <= 1e-12
    assert equality_violation(x, x, eig).max() == 0.0


def test_pointwise_rejects_bad_spectrum():
    with pytest.raises(HypothesisError):
        pointwise_eigen_inequality(E3[0], E3[1], eigen(np.diag([2.0, 1.0, 1.0])))
    with pytest.raises(HypothesisError):
        pointwise_eigen_inequality(np.ones(4) / 2, np.ones(4) / 2, eigen(np.diag([1.0, 1, 1, -3])))


def test_pl_at_dirac_is_tight():
    v = pl_inequality_check(ParticleEnsemble(E3[2][None]), 2.0, E3[2], 0.01)
    assert v.holds
    assert abs(v.lhs) <= 1e-12 and v.rhs == 0.0


def test_pl_random_caps():
    rng = np.random.default_rng(7)
    beta = 1.0
    alpha = np.arctan(1 / 20)
    assert pl_regime(beta, alpha)
    for _ in range(1000):
        u = unit(rng, 3)
        mu = random_cap_ensemble(3, int(rng.integers(1, 20)), u, alpha, rng)
        assert pl_inequality_check(mu, beta, u, alpha).holds


def test_pl_support_error(rng):
    with pytest.raises(SupportError):
        pl_inequality_check(ParticleEnsemble(E3[:2]), 1.0, E3[2], 0.1)


def test_pl_w2_bound_decreases():
    b = pl_w2_bound(1.0, np.array([0.0, 1.0, 5.0]), 2.0)
    assert b[0] == pytest.approx(20 * np.exp(-1.0) * np.sqrt(2.0))
    assert np.all(np.diff(b) < 0)


def test_large_beta_cone():
    rng = np.random.default_rng(3)
    beta = 25.0
    alpha = np.arctan(1 / 60)
    for _ in range(100):
        u = unit(rng, 3)
        mu = random_cap_ensemble(3, int(rng.integers(2, 20)), u, alpha, rng)
        v = large_beta_cone_check(mu, beta, u, alpha)
        assert v.regime_ok and v.holds


def test_cone_inequality_small_perturbation(rng):
    spec = kernel_for_epsilon(0.01, 3)
    alpha = np.pi / 25
    for _ in range(50):
        u = unit(rng, 3)
        nu = random_cap_ensemble(3, 12, u, alpha, rng)
        v = cone_inequality_check((nu.points, 0.3 * nu.weights), spec, u, alpha)
        assert v.regime_ok and v.holds


def test_entropy_production_at_dirac():
    v = entropy_production_verdict(ParticleEnsemble(E3[2][None]), Kuramoto(3), np.pi / 25)
    assert v.holds and v.regime_ok
    assert v.lhs == pytest.approx(0.0, abs=1e-15)


def test_entropy_production_along_kuramoto_run():
    rng = np.random.default_rng(11)
    mu = random_cap_ensemble(3, 100, E3[2], np.pi / 2, rng)
    states = []
    evolve(FlowState(0.0, mu), Kuramoto(3), IntegratorConfig("rk4", 0.05, 10.0),
           observers=[collect_states(states)], every=0.5)
    verdicts = entropy_production_check(states, Kuramoto(3), np.pi / 25)
    assert all(v.holds and v.regime_ok for v in verdicts)


def test_entropy_production_regime_flag_for_attention():
    mu = random_cap_ensemble(3, 20, E3[2], 0.1, np.random.default_rng(0))
    v = entropy_production_verdict(mu, SimpleAttention(0.005, 3), np.pi / 25)
    assert not v.regime_ok


def test_hemisphere_critical_test(rng):
    spec = Kuramoto(3)
    dirac = hemisphere_critical_test(ParticleEnsemble(E3[2][None]), spec, E3[2], 1.0)
    assert dirac["is_dirac"] and dirac["consistent"]
    spread = hemisphere_critical_test(random_cap_ensemble(3, 10, E3[2], 1.0, rng), spec, E3[2], 1.0)
    assert not spread["is_dirac"] and spread["consistent"] and spread["I"] > 0
    with pytest.raises(RangeError):
        hemisphere_critical_test(ParticleEnsemble(E3[2][None]), spec, E3[2], np.pi / 2)


def test_perturbation_jacobian_vanishes_for_kuramoto(rng):
    mu = random_measure(rng, 3, 6)
    assert perturbation_jacobian_norm(mu, Kuramoto(3), unit(rng, 3)) <= 1e-9


def test_waiting_time_constants():
    T0, log_decay = theorem39_constants(1.0, 2, 1.0)
    assert T0 == pytest.approx(8e41, rel=1e-12)
    assert log_decay(T0) == pytest.approx(0.0)
    prev = T0
    for R0 in (0.8, 0.5, 0.2):
        cur, _ = theorem39_constants(R0, 2, 1.0)
        assert cur > prev
        prev = cur
    assert theorem39_constants(1.0, 2, 10.0)[0] > T0
    with pytest.raises(RangeError):
        theorem39_constants(0.0, 2, 1.0)


def test_attractor_diagnostics():
    one = attractor_diagnostics(E3[2], 1.0)
    assert one.D == 1.0 and one.Gamma == 1.0 and one.valid
    rng = np.random.default_rng(2)
    cap = attractor_diagnostics(sample_cap(E3[2], np.pi / 8, 200, rng), 0.9)
    assert cap.D >= np.cos(np.pi / 4) and cap.valid
    assert attractor_bound(0.9, 1.0, 0.0, 0.0) == pytest.approx(0.1)


def test_small_time():
    assert small_time(1.0, 1.0, np.pi / 2) == pytest.approx(4.0)


def test_rate_fit():
    t = np.linspace(0, 10, 50)
    rate, icpt, r2 = rate_fit(t, 3.0 * np.exp(-0.7 * t))
    assert rate == pytest.approx(0.7) and icpt == pytest.approx(np.log(3.0)) and r2 == 1.0
    assert rate_fit(t, np.full(50, 2.0))[0] == pytest.approx(0.0, abs=1e-14)
    noisy = np.exp(-0.5 * t + 0.01 * np.random.default_rng(0).standard_normal(50))
    assert rate_fit(t, noisy)[0] == pytest.approx(0.5, rel=0.05)
    with pytest.raises(InsufficientDataError):
        rate_fit(t, np.exp(-t), t_start=9.5)


def test_verdict_dict():
    v = InequalityVerdict.make("x", 1.0, 2.0, t=0.5)
    assert v.holds and v.slack == 1.0
    assert v.to_dict()["t"] == 0.5


def test_custom_kernel_variation(rng):
    spec = Custom(np.eye(3), lambda s: 2 + s, lambda s: np.ones_like(s), phi=lambda s: 2 * s + s * s / 2)
    mu = random_measure(rng, 3, 5)
    V = project_tangent(mu.points, rng.standard_normal((5, 3)))
    h = 1e-4
    d1 = (energy_along(mu, spec, V, h) - energy_along(mu, spec, V, -h)) / (2 * h)
    assert first_variation(mu, spec, V) == pytest.approx(d1, rel=1e-6)
    _, R, _ = mean_and_order(mu)
    assert 0 <= R <= 1
