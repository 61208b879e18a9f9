"""
Property suites behind ``sphereflow check``.

Every suite is seeded and returns a list of check dicts (see
``scenarios.check``). Reports contain no timings, so reruns with the same
seed are byte-identical.
"""

import json

import numpy as np

from . import __version__, _backend, _fallback
from .analysis import (cone_inequality_check, entropy_production_verdict, escape_direction_search,
                       large_beta_cone_check, perturbation_monitors, pl_inequality_check,
                       second_variation_at_critical)
from .dynamics import FlowState, IntegratorConfig, evolve
from .ensemble import ParticleEnsemble, random_cap_ensemble
from .fields import kuramoto_part_and_perturbation, velocity_field_batch, velocity_simple
from .kernel import SimpleAttention
from .observables import dissipation, dissipation_rate, energy_simple
from .scenarios import (check, collect_states, kernel_for_epsilon, pl_angle, random_kernel,
                        run_pointwise_sweep, run_variation_oracles)
from .sphere import (GnomonicChart, geodesic_distance, normalize, project_tangent, rotation_to,
                     sample_cap, sample_uniform)


def suite_geometry(rng):
    out = []
    worst_round = worst_line = worst_tan = worst_rot = worst_proj = 0.0
    tri = 0
    for _ in range(50):
        d = int(rng.integers(2, 7))
        north = normalize(rng.standard_normal(d))
        chart = GnomonicChart(north)
        x = sample_cap(north, 1.2, 8, rng)
        worst_round = max(worst_round, float(np.abs(chart.inverse(chart.forward(x)) - x).max()))
        # points on one great circle map to collinear chart points
        if d >= 3:
            a, b = x[0], project_tangent(x[0], rng.standard_normal(d))
            b = b / np.linalg.norm(b)
            ts = np.array([-0.3, 0.1, 0.4])
            g = chart.forward(np.cos(ts)[:, None] * a + np.sin(ts)[:, None] * b)
            u, v = g[1] - g[0], g[2] - g[0]
            e = u / np.linalg.norm(u)
            resid = v - (v @ e) * e
            worst_line = max(worst_line, float(np.linalg.norm(resid) / (1.0 + np.linalg.norm(v))))
        u0 = chart.forward(x[0])
        X = rng.standard_normal(d - 1)
        h = 1e-6
        fd = (chart.inverse(u0 + h * X) - chart.inverse(u0 - h * X)) / (2 * h)
        worst_tan = max(worst_tan, float(np.abs(fd - chart.tangent_map(u0, X)).max()))
        R = rotation_to(north)
        worst_rot = max(worst_rot, float(np.abs(R.T @ R - np.eye(d)).max()),
                        float(np.abs(R[:, -1] - north).max()))
        v = rng.standard_normal(d)
        p = project_tangent(x[0], v)
        worst_proj = max(worst_proj, abs(float(p @ x[0])),
                         float(np.abs(project_tangent(x[0], p) - p).max()))
        y, z = x[1], x[2]
        tri += geodesic_distance(x[0], z) > geodesic_distance(x[0], y) + geodesic_distance(y, z) + 1e-12
    out.append(check("gnomonic round trip", worst_round, 1e-12, worst_round <= 1e-12))
    out.append(check("great circles to lines", worst_line, 1e-9, worst_line <= 1e-9))
    out.append(check("gnomonic tangent map vs differences", worst_tan, 1e-7, worst_tan <= 1e-7))
    out.append(check("rotation orthogonal and aligned", worst_rot, 1e-12, worst_rot <= 1e-12))
    out.append(check("tangent projection", worst_proj, 1e-12, worst_proj <= 1e-12))
    out.append(check("geodesic triangle violations", tri, 0, tri == 0))
    return out


def suite_fields(rng):
    out = []
    agree = tangent = simple_gap = split_gap = rate_gap = energy_gap = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 6))
        n = int(rng.integers(2, 40))
        spec = random_kernel(rng, d)
        X = normalize(rng.standard_normal((n, d)))
        w = rng.dirichlet(np.ones(n))
        mu = ParticleEnsemble(X, w)
        Y = velocity_field_batch(mu, spec, X)
        ref = _fallback.field_batch(X, _fallback.matvec_rows(X, spec.A), X, X, w,
                                    spec.family_code, spec.param)
        agree = max(agree, float(np.abs(Y - ref).max() / max(1.0, np.abs(ref).max())))
        tangent = max(tangent, float(np.abs(np.sum(Y * X, axis=1)).max()))
        V, W = kuramoto_part_and_perturbation(mu, spec, X)
        split_gap = max(split_gap, float(np.abs(V + W - Y).max()))
        # dI/dt from the Q form against differences of I along the flow
        h = 1e-4
        cfg = IntegratorConfig("rk4", h / 4, h)
        fwd = evolve(FlowState(0.0, mu), spec, cfg).final_state.ensemble
        Ip = dissipation(fwd, spec)
        I0 = dissipation(mu, spec)
        fwd2 = evolve(FlowState(0.0, mu), spec, IntegratorConfig("rk4", h / 4, 2 * h)).final_state.ensemble
        I2 = dissipation(fwd2, spec)
        fd = (-3 * I0 + 4 * Ip - I2) / (2 * h)
        an = dissipation_rate(mu, spec)
        rate_gap = max(rate_gap, abs(fd - an) / max(1.0, abs(an)))
        if spec.kind == "simple":
            simple_gap = max(simple_gap, float(np.abs(velocity_simple(mu, spec.beta, X) - Y).max()))
            Ep = energy_simple(fwd, spec.beta)
            E2 = energy_simple(fwd2, spec.beta)
            dE = (-3 * energy_simple(mu, spec.beta) + 4 * Ep - E2) / (2 * h)
            energy_gap = max(energy_gap, abs(dE - I0) / max(1.0, I0))
    out.append(check("compiled vs reference field", agree, 1e-13, agree <= 1e-13))
    out.append(check("field tangent to sphere", tangent, 1e-13, tangent <= 1e-13))
    out.append(check("Kuramoto split sums to field", split_gap, 1e-13, split_gap <= 1e-13))
    out.append(check("simple field equals general field", simple_gap, 1e-13, simple_gap <= 1e-13))
    out.append(check("dI/dt analytic vs differences", rate_gap, 1e-5, rate_gap <= 1e-5))
    out.append(check("dE/dt equals I", energy_gap, 1e-5, energy_gap <= 1e-5))
    return out


def suite_variations(rng):
    rep = run_variation_oracles(seed=int(rng.integers(1 << 31)), trials=20)
    out = list(rep["checks"])
    # antipodal pair: the second variation in the escape direction equals beta e^{-beta}
    worst = 0.0
    for beta in (0.3, 1.0, 2.5):
        e = np.eye(3)
        mu = ParticleEnsemble(np.stack([e[2], -e[2]]), np.array([0.5, 0.5]))
        spec = SimpleAttention(beta, 3)
        val = second_variation_at_critical(mu, spec, e[0]).second_variation
        worst = max(worst, abs(val - beta * np.exp(-beta)) / (beta * np.exp(-beta)))
    out.append(check("antipodal second variation closed form", worst, 1e-12, worst <= 1e-12))
    found = escape_direction_search(ParticleEnsemble(np.array([[0.0, 0.0, 1.0]])),
                                    SimpleAttention(1.0, 3))
    out.append(check("no escape direction at a Dirac", float(found is not None), 0.0, found is None))
    return out


def suite_inequalities(rng):
    out = []
    rep = run_pointwise_sweep(seed=int(rng.integers(1 << 31)), samples=20_000)
    out.extend(rep["checks"])
    pl_fail = 0
    for k in range(200):
        beta = (0.5, 1.0, 2.0)[k % 3]
        d = (2, 3, 5)[k % 3]
        u = normalize(rng.standard_normal(d))
        alpha = pl_angle(beta)
        mu = random_cap_ensemble(d, int(rng.integers(1, 65)), u, alpha, rng)
        pl_fail += not pl_inequality_check(mu, beta, u, alpha).holds
    out.append(check("PL violations", pl_fail, 0, pl_fail == 0))
    lb_fail = 0
    for k in range(100):
        beta = float(rng.uniform(0.5, 6.0))
        d = int(rng.integers(2, 5))
        u = normalize(rng.standard_normal(d))
        alpha = float(np.arctan(1.0 / (10.0 * (1.0 + np.sqrt(beta)))))
        mu = random_cap_ensemble(d, int(rng.integers(2, 40)), u, alpha, rng)
        lb_fail += not large_beta_cone_check(mu, beta, u, alpha).holds
    out.append(check("large-beta cone violations", lb_fail, 0, lb_fail == 0))
    spec = kernel_for_epsilon(0.01, 3)
    cone_fail = ep_fail = 0
    alpha = np.pi / 25
    for k in range(100):
        u = normalize(rng.standard_normal(3))
        nu = random_cap_ensemble(3, int(rng.integers(2, 40)), u, alpha, rng)
        scale = float(rng.uniform(0.1, 1.0))
        cone_fail += not cone_inequality_check((nu.points, scale * nu.weights), spec, u, alpha).holds
        ep_fail += not entropy_production_verdict(nu, spec, alpha).holds
    out.append(check("cone inequality violations", cone_fail, 0, cone_fail == 0))
    out.append(check("entropy production violations (cap ensembles)", ep_fail, 0, ep_fail == 0))
    mon_fail = 0
    for eps in (0.0, 0.05):
        spec = kernel_for_epsilon(eps, 3)
        mu = ParticleEnsemble(sample_uniform(3, 32, int(rng.integers(1 << 31))))
        states = []
        evolve(FlowState(0.0, mu), spec, IntegratorConfig("rk4", 0.01, 3.0),
               observers=[collect_states(states)], every=0.05)
        verdicts = perturbation_monitors([s[0] for s in states], [s[1] for s in states], spec,
                                         pairs="consecutive")
        mon_fail += sum(not v.holds for v in verdicts)
    out.append(check("perturbation sandwich violations", mon_fail, 0, mon_fail == 0))
    return out


SUITES = {
    "geometry": suite_geometry,
    "fields": suite_fields,
    "variations": suite_variations,
    "inequalities": suite_inequalities,
}


def run_suite(name, seed=0):
    """Run one suite (or ``"all"``) and return a JSON-ready report."""
    names = list(SUITES) if name == "all" else [name]
    if any(n not in SUITES for n in names):
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    suites = {}
    for n in names:
        rng = np.random.default_rng([seed, list(SUITES).index(n)])
        checks = SUITES[n](rng)
        suites[n] = {"checks": checks, "passed": all(c["passed"] for c in checks)}
    return {
        "suite": name,
        "seed": seed,
        "version": __version__,
        "backend": _backend.NAME,
        "suites": suites,
        "passed": all(s["passed"] for s in suites.values()),
    }


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
