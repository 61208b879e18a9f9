"""
Convergence checks: variation formulas, saddle escape directions, the
Polyak-Lojasiewicz and entropy-production inequalities, perturbation
bounds, the explicit convergence-time constant, attractor diagnostics and
exponential rate fits.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (HypothesisError, InsufficientDataError, NonTangentError, NotCriticalError,
                     RangeError, SupportError)
from .fields import (as_atoms, kuramoto_part_and_perturbation, perturbation_time_derivative,
                     velocity_general, velocity_gradient)
from .kernel import EIG_TOL, SimpleAttention, check_theorem31_hypotheses, eigen, epsilon_phi
from .observables import (cap_masses, dissipation, dissipation_rate, energy_simple,
                          mean_and_order)
from .sphere import normalize, project_tangent

CRITICAL_TOL = 1e-8
TANGENT_TOL = 1e-10
ESCAPE_TOL = 1e-10

# constants of the inequalities, fixed by the theory
PL_CONSTANT = 10.0
PL_RATE_PREFACTOR = 20.0
PL_RATE_DIVISOR = 20.0
ENTROPY_CAP_WEIGHT = 100.0
ENTROPY_EPS_MAX = 1e-2
ENTROPY_ALPHA_MAX = np.pi / 20
LARGE_BETA_DIVISOR = 10.0


@dataclass
class InequalityVerdict:
    """``holds`` is ``lhs <= rhs + tol``; ``regime_ok`` records whether the hypotheses were met."""

    name: str
    lhs: float
    rhs: float
    holds: bool
    slack: float
    regime_ok: bool
    t: float = float("nan")

    @classmethod
    def make(cls, name, lhs, rhs, tol=0.0, regime_ok=True, t=float("nan")):
        lhs, rhs = float(lhs), float(rhs)
        return cls(name, lhs, rhs, bool(lhs <= rhs + tol), rhs - lhs, bool(regime_ok), float(t))

    def to_dict(self):
        return {"name": self.name, "t": self.t, "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "holds": self.holds, "regime_ok": self.regime_ok}


@dataclass
class VariationReport:
    first_variation: float
    second_variation: float
    direction: str
    decomposition: list = field(default_factory=list)


def _check_tangent(pts, V, tol=TANGENT_TOL):
    if np.abs(np.sum(pts * V, axis=1)).max() > tol:
        raise NonTangentError("direction field is not tangent at the atoms")


def first_variation(mu, spec, V):
    """``sum_ij w_i w_j phi'(<A x_i, x_j>) <A x_j, V(x_i)>``: derivative of the energy along ``V``.

    Parameters
    ----------
    V : (n, d) array
        Tangent vectors at the atoms.
    """
    pts, w = as_atoms(mu)
    V = np.asarray(V, dtype=float)
    _check_tangent(pts, V)
    AX = pts @ spec.A
    F = spec.phi_prime(AX @ pts.T)
    return float(np.einsum("i,j,ij,ij->", w, w, F, V @ AX.T))


def second_variation_terms(mu, spec, V, accel=None):
    """The four integrals of the second variation along a curve with velocity ``V``.

    ``accel`` is the tangential (covariant) acceleration of the curve at the
    atoms; it is zero for the pushforward ``x -> normalize(x + h V(x))``.

    Returns
    -------
    list of float
        ``[phi'' term, <A V, V> term, -<Ax, y>(|V|^2 + |V|^2)/2 term, acceleration term]``.
    """
    pts, w = as_atoms(mu)
    V = np.asarray(V, dtype=float)
    _check_tangent(pts, V)
    AX = pts @ spec.A
    S = AX @ pts.T
    F1 = spec.phi_prime(S)
    F2 = spec.phi_double_prime(S)
    VAy = V @ AX.T  # <V(x_i), A x_j>
    inner = VAy + VAy.T
    W = np.outer(w, w)
    AV = V @ spec.A
    n2 = np.sum(V * V, axis=1)
    t1 = 0.5 * np.sum(W * F2 * inner ** 2)
    t2 = np.sum(W * F1 * (AV @ V.T))
    t3 = -0.5 * np.sum(W * F1 * S * (n2[:, None] + n2[None, :]))
    t4 = 0.0
    if accel is not None:
        a = np.asarray(accel, dtype=float)
        _check_tangent(pts, a)
        t4 = float(np.sum(W * F1 * (a @ AX.T)))
    return [float(t1), float(t2), float(t3), float(t4)]


def second_variation(mu, spec, V, accel=None):
    terms = second_variation_terms(mu, spec, V, accel)
    return VariationReport(first_variation(mu, spec, V), float(sum(terms)), "sampled field", terms)


def pushforward(mu, V, h, accel=None):
    """Atoms moved to ``normalize(x + h V + h^2 a / 2)`` with unchanged weights."""
    pts, w = as_atoms(mu)
    step = pts + h * np.asarray(V, dtype=float)
    if accel is not None:
        step = step + 0.5 * h * h * np.asarray(accel, dtype=float)
    return normalize(step), w


def max_speed(mu, spec):
    pts, _ = as_atoms(mu)
    G = velocity_gradient(mu, spec, pts)
    return float(np.linalg.norm(G, axis=1).max())


def second_variation_at_critical(mu, spec, w_dir, tol=CRITICAL_TOL):
    """Second variation at a critical point along ``X0(x) = P_x[w]``.

    Evaluates ``(1/2) sum phi'' (<Ay, X0(x)> + <Ax, X0(y)>)^2`` plus
    ``(1/2) sum phi' [2 <A X0(x), X0(y)> - <Ax, y> (|X0(x)|^2 + |X0(y)|^2)]``.
    The acceleration term of the general formula (with the covariant
    acceleration ``-<x, w> P_x[w]`` of the flow of ``X0``) is the fourth entry
    of the decomposition and is included in the total; it vanishes at
    critical points.

    Raises
    ------
    NotCriticalError
        If some atom moves faster than ``tol`` under the gradient field.
    """
    pts, _ = as_atoms(mu)
    speed = max_speed(mu, spec)
    if speed > tol:
        raise NotCriticalError(f"max atom speed {speed:.3e} exceeds {tol:.0e}")
    w_dir = np.asarray(w_dir, dtype=float)
    X0 = project_tangent(pts, np.broadcast_to(w_dir, pts.shape))
    accel = -(pts @ w_dir)[:, None] * X0
    terms = second_variation_terms(mu, spec, X0, accel)
    value = float(sum(terms))
    return VariationReport(first_variation(mu, spec, X0), value, f"P_x[{w_dir.tolist()}]", terms)


def _pointwise(xe, ye, lam, lam_top):
    """Core of the pointwise inequality in eigen-coordinates (vectorized over rows)."""
    axy = np.sum(lam * xe * ye, axis=-1)
    x3, y3 = xe[..., :3], ye[..., :3]
    part = 2.0 * lam[:3] * (1.0 - x3 ** 2 - y3 ** 2) - axy[..., None] * (
        2.0 - x3 ** 2 - y3 ** 2 - 2.0 * x3 * y3)
    return part.sum(axis=-1)


def pointwise_eigen_inequality(x, y, eig, tol=EIG_TOL):
    """``sum_{i<=3} [2 lambda_i (1 - x_i^2 - y_i^2) - <Ax, y> (2 - x_i^2 - y_i^2 - 2 x_i y_i)]``.

    Coordinates are taken in the eigenbasis of ``eig``. Vectorized over
    leading axes of ``x`` and ``y``.

    Raises
    ------
    HypothesisError
        Unless ``lambda_1 = lambda_2 = lambda_3 = lambda > 0`` and ``|lambda_d| <= lambda``.
    """
    ok, report = check_theorem31_hypotheses(eig, tol)
    if not ok:
        raise HypothesisError("; ".join(report))
    V = eig.eigenvectors
    xe = np.asarray(x, dtype=float) @ V
    ye = np.asarray(y, dtype=float) @ V
    return _pointwise(xe, ye, eig.eigenvalues, eig.eigenvalues[0])


def equality_violation(x, y, eig, tol=EIG_TOL):
    """Largest deviation from the equality conditions of the pointwise inequality.

    For ``|lambda_j| < lambda`` both coordinates must vanish, for
    ``lambda_j = lambda`` they must agree, and for ``lambda_j = -lambda`` they
    must be opposite.
    """
    lam = eig.eigenvalues
    top = lam[0]
    xe = np.asarray(x, dtype=float) @ eig.eigenvectors
    ye = np.asarray(y, dtype=float) @ eig.eigenvectors
    top_mask = np.abs(lam - top) <= tol
    bot_mask = np.abs(lam + top) <= tol
    mid_mask = ~(top_mask | bot_mask)
    viol = np.zeros(xe.shape[:-1])
    if top_mask.any():
        viol = np.maximum(viol, np.abs(xe - ye)[..., top_mask].max(axis=-1))
    if bot_mask.any():
        viol = np.maximum(viol, np.abs(xe + ye)[..., bot_mask].max(axis=-1))
    if mid_mask.any():
        viol = np.maximum(viol, np.maximum(np.abs(xe), np.abs(ye))[..., mid_mask].max(axis=-1))
    return viol


def escape_direction_search(mu, spec, full=False, tol=CRITICAL_TOL):
    """Look for ``w`` among the top eigenvectors of ``A`` with positive second variation.

    Parameters
    ----------
    full : bool
        Scan all ``d`` eigenvectors instead of the top three.

    Returns
    -------
    (w, value) or None
        ``None`` when no direction gives a value above ``1e-10``.
    """
    eig = eigen(spec.A)
    k = eig.dim if full else min(3, eig.dim)
    for i in range(k):
        w_dir = eig.eigenvectors[:, i]
        rep = second_variation_at_critical(mu, spec, w_dir, tol)
        if rep.second_variation > ESCAPE_TOL:
            return w_dir, rep.second_variation
    return None


def _cap_support(pts, u, alpha, slack=1e-12):
    if np.any(pts @ np.asarray(u, dtype=float) < np.cos(alpha) - slack):
        raise SupportError("measure has atoms outside the cap")


def pl_regime(beta, alpha):
    return PL_CONSTANT * (1.0 + np.sqrt(beta)) * np.tan(alpha) <= 1.0


def pl_inequality_check(mu, beta, u, alpha):
    """``E[delta_u] - E[mu] <= 10 e^{-beta} I(mu)`` for a cap-supported measure.

    Raises
    ------
    SupportError
        If an atom lies outside the cap of angle ``alpha`` around ``u``.
    """
    pts, w = as_atoms(mu)
    _cap_support(pts, u, alpha)
    d = pts.shape[1]
    spec = SimpleAttention(beta, d)
    gap = np.exp(beta) / (2.0 * beta) - energy_simple(mu, beta)
    I = dissipation(mu, spec)
    rhs = PL_CONSTANT * np.exp(-beta) * I
    tol = 1e-12 * np.exp(beta) / (2.0 * beta)
    return InequalityVerdict.make("pl", gap, rhs, tol, pl_regime(beta, alpha))


def pl_w2_bound(beta, t, I0):
    """``20 e^{-beta} exp(-e^beta t / 20) sqrt(I0)``, evaluated in the log domain."""
    return np.exp(np.log(PL_RATE_PREFACTOR) - beta - np.exp(beta) * np.asarray(t) / PL_RATE_DIVISOR
                  + 0.5 * np.log(max(I0, 1e-300)))


def cone_inequality_check(nu, spec, U, alpha):
    """Cone inequality ``sum Q dnu dnu <= -nu(S) int |Y|^2 dnu`` for cap-supported ``nu``.

    ``nu`` may have any total mass. Both sides are homogeneous of degree 4 in
    the weights.
    """
    pts, w = as_atoms(nu)
    _cap_support(pts, U, alpha)
    Y = velocity_general((pts, w), spec, pts)
    lhs = dissipation_rate((pts, w), spec, Y)
    I = float(w @ np.sum(Y * Y, axis=1))
    rhs = -float(w.sum()) * I
    regime = epsilon_phi(spec) <= ENTROPY_EPS_MAX and alpha < ENTROPY_ALPHA_MAX
    return InequalityVerdict.make("cone", lhs, rhs, 1e-12 * max(1.0, abs(rhs)), regime)


def large_beta_cone_check(mu, beta, U, alpha):
    """Large inverse temperature: ``dI/dt <= -(e^beta / 10) I`` when ``tan(alpha) <= 1 / (10 (1 + sqrt(beta)))``."""
    pts, w = as_atoms(mu)
    _cap_support(pts, U, alpha)
    spec = SimpleAttention(beta, pts.shape[1])
    Y = velocity_general(mu, spec, pts)
    lhs = dissipation_rate(mu, spec, Y)
    I = dissipation(mu, spec, Y)
    rhs = -np.exp(beta) / LARGE_BETA_DIVISOR * I
    regime = np.tan(alpha) <= 1.0 / (10.0 * (1.0 + np.sqrt(beta)))
    return InequalityVerdict.make("large_beta_cone", lhs, rhs, 1e-12 * max(1.0, abs(rhs)), regime)


def entropy_production_verdict(mu, spec, alpha, t=float("nan"), tol=1e-6, eps=None):
    """``dI/dt <= -I + 100 mu(S \\ S_alpha^+(U))`` at one instant, with ``dI/dt`` from the Q form."""
    pts, w = as_atoms(mu)
    Y = velocity_general(mu, spec, pts)
    dI = dissipation_rate(mu, spec, Y)
    I = dissipation(mu, spec, Y)
    _, R, U = mean_and_order(mu)
    outside = 1.0 if U is None else 1.0 - cap_masses(mu, U, alpha)[0]
    eps = epsilon_phi(spec) if eps is None else eps
    regime = eps <= ENTROPY_EPS_MAX and 0 < alpha < ENTROPY_ALPHA_MAX
    return InequalityVerdict.make("entropy_production", dI, -I + ENTROPY_CAP_WEIGHT * outside,
                                  tol, regime, t)


def entropy_production_check(states, spec, alpha, tol=1e-6):
    """Entropy-production verdicts along ``states``, an iterable of ``(t, measure)`` pairs."""
    eps = epsilon_phi(spec)
    return [entropy_production_verdict(mu, spec, alpha, t, tol, eps) for t, mu in states]


def hemisphere_critical_test(mu, spec, U, alpha, zero_tol=1e-16):
    """A cap-supported measure with vanishing dissipation must be a Dirac mass.

    Returns
    -------
    dict
        ``I``, ``is_dirac`` and ``consistent`` (``I > zero_tol`` or Dirac).
    """
    if not alpha < np.pi / 2:
        raise RangeError("alpha must be below pi/2")
    pts, w = as_atoms(mu)
    _cap_support(pts, U, alpha)
    I = dissipation(mu, spec)
    spread = float(np.max(np.linalg.norm(pts - pts[0], axis=1)))
    is_dirac = spread <= 1e-6
    return {"I": I, "is_dirac": bool(is_dirac), "consistent": bool(I > zero_tol or is_dirac)}


def perturbation_jacobian_norm(mu, spec, x, h=1e-6):
    """Spectral norm of the ambient Jacobian of ``W`` at ``x`` by central differences.

    ``W`` is extended off the sphere by its defining formula
    ``sum_j w_j (y_j - <x, y_j> x) (phi'(<Ax, y_j>) - 1)``.
    """
    pts, w = as_atoms(mu)
    x = np.asarray(x, dtype=float)
    d = x.shape[0]

    def W(z):
        s = (z @ spec.A) @ pts.T
        c = (spec.phi_prime(s) - 1.0) * w
        return c @ pts - (c @ (pts @ z)) * z

    J = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        J[:, k] = (W(x + e) - W(x - e)) / (2 * h)
    return float(np.linalg.norm(J, 2))


def _central_diff(t, y):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    return (y[2:] - y[:-2]) / (t[2:] - t[:-2])


def perturbation_monitors(times, ensembles, spec, slack=1e-3, pairs="all"):
    """Bounds on the perturbation along a trajectory.

    Checks at each tick: ``|W| <= eps`` at the atoms; the sandwich
    ``I - eps^2 <= d(R^2)/dt <= 3 I + eps^2`` with central differences and
    slack ``slack * max(1, I)``; the lower bound
    ``I(t2) >= I(t1) e^{-3 (t2 - t1)} (1 - slack)``; the bound
    ``|dU/dt| <= sqrt(d(R^2)/dt + eps^2) / R``; and the pairing
    ``|int <dW/dt, Y>| <= eps I``.

    Returns
    -------
    list of InequalityVerdict
    """
    eps = epsilon_phi(spec)
    regime = eps < 0.1
    t = np.asarray(times, dtype=float)
    I = np.empty(len(t))
    R2 = np.empty(len(t))
    Us = []
    out = []
    for k, mu in enumerate(ensembles):
        pts, w = as_atoms(mu)
        Y = velocity_general(mu, spec, pts)
        I[k] = float(w @ np.sum(Y * Y, axis=1))
        M, R, U = mean_and_order(mu)
        R2[k] = R * R
        Us.append(U)
        _, W = kuramoto_part_and_perturbation(mu, spec, pts)
        out.append(InequalityVerdict.make("W_norm", np.linalg.norm(W, axis=1).max(), eps, 1e-12,
                                          True, t[k]))
        dW = perturbation_time_derivative(mu, spec, pts, Y)
        pair = abs(float(w @ np.sum(dW * Y, axis=1)))
        out.append(InequalityVerdict.make("dW_pairing", pair, eps * I[k], slack * max(1.0, I[k]),
                                          True, t[k]))
    dR2 = _central_diff(t, R2)
    for k in range(1, len(t) - 1):
        tol = slack * max(1.0, I[k])
        out.append(InequalityVerdict.make("dR2_lower", I[k] - eps ** 2, dR2[k - 1], tol, True, t[k]))
        out.append(InequalityVerdict.make("dR2_upper", dR2[k - 1], 3 * I[k] + eps ** 2, tol, True, t[k]))
        if Us[k - 1] is not None and Us[k + 1] is not None and R2[k] > 0:
            dU = np.linalg.norm((Us[k + 1] - Us[k - 1]) / (t[k + 1] - t[k - 1]))
            bound = np.sqrt(max(dR2[k - 1] + eps ** 2, 0.0)) / np.sqrt(R2[k])
            out.append(InequalityVerdict.make("dU_bound", dU, bound, tol, True, t[k]))
    if pairs == "all":
        idx = [(i, j) for i in range(len(t)) for j in range(i + 1, len(t))]
    else:
        idx = [(i, i + 1) for i in range(len(t) - 1)]
    for i, j in idx:
        lower = I[i] * np.exp(-3.0 * (t[j] - t[i])) * (1.0 - slack)
        out.append(InequalityVerdict.make("I_lower", lower, I[j], 0.0, regime, t[j]))
    return out


def theorem39_constants(R0, d, l2_norm_sq):
    """Explicit waiting time ``T0`` for the mean-field convergence theorem.

    ``T0 = max(8/R0, d-1) [1e41 (d-1) R0^-14 + 1e26 R0^-6 log(l2_norm_sq)]``.

    Returns
    -------
    T0 : float
    log_decay : callable
        ``t -> log(||f0|| e^{-(d-1)(t - T0)/16})``, the log of the decay envelope.
    """
    if not 0.0 < R0 <= 1.0:
        raise RangeError("R0 must lie in (0, 1]")
    if d < 2:
        raise RangeError("d must be >= 2")
    if not l2_norm_sq > 0:
        raise RangeError("l2_norm_sq must be positive")
    lead = max(8.0 / R0, d - 1.0)
    a = np.exp(np.log(1e41) + np.log(d - 1.0) - 14.0 * np.log(R0))
    b = np.exp(np.log(1e26) - 6.0 * np.log(R0)) * np.log(l2_norm_sq)
    T0 = lead * (a + b)

    def log_decay(t):
        return 0.5 * np.log(l2_norm_sq) - (d - 1.0) * (np.asarray(t, dtype=float) - T0) / 16.0

    return float(T0), log_decay


@dataclass
class AttractorDiagnostics:
    D: float
    Gamma: float
    valid: bool


def attractor_diagnostics(markers, mass):
    """Minimum pairwise inner product ``D`` of tracked points and ``Gamma = mass (1 + D) - 1``.

    ``valid`` means ``D > sqrt(2)/2``, where the pairwise minimum equals the
    infimum over the geodesic convex hull.
    """
    P = np.atleast_2d(np.asarray(markers, dtype=float))
    D = 1.0 if P.shape[0] < 2 else float(np.clip((P @ P.T).min(), -1.0, 1.0))
    return AttractorDiagnostics(D, float(mass * (1.0 + D) - 1.0), D > np.sqrt(2) / 2)


def attractor_bound(D1, Gamma, dt, eps):
    """``max((1 - D1) e^{-Gamma dt / 4}, 4 eps^2 / Gamma^2)``."""
    return max((1.0 - D1) * np.exp(-Gamma * dt / 4.0), 4.0 * eps ** 2 / Gamma ** 2)


def small_time(lam, R0, alpha):
    """``4 / (lambda R0 sin^2 alpha)``."""
    return 4.0 / (lam * R0 * np.sin(alpha) ** 2)


def rate_fit(t, values, t_start=-np.inf):
    """Least-squares line through ``(t, log value)`` for ``t >= t_start``.

    Returns
    -------
    rate : float
        Negated slope.
    intercept : float
    r_squared : float

    Raises
    ------
    InsufficientDataError
        With fewer than 10 points after ``t_start``.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = t >= t_start
    t, v = t[keep], v[keep]
    if t.size < 10:
        raise InsufficientDataError(f"need at least 10 points, got {t.size}")
    if np.any(v <= 0):
        raise ValueError("values must be positive")
    y = np.log(v)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot == 0.0 or ss_res <= 1e-30 * max(ss_tot, 1.0) else 1.0 - ss_res / ss_tot
    return float(-slope), float(intercept), float(r2)
