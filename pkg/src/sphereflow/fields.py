"""
Velocity fields generated by a measure.

All particle fields go through one batched kernel,

    out(x) = sum_j w_j phi'(<A x, y_j>) (p_j - <x, p_j> x),

with ``p_j = y_j`` for the general field and ``p_j = A y_j`` for the
Wasserstein gradient. Sources are summed in ascending index with
compensated summation, so evaluating one target gives the same bits as
evaluating it inside a batch.
"""

import numpy as np

from . import _backend
from ._fallback import matvec_rows
from .ensemble import CircleDensity, ParticleEnsemble
from .kernel import KernelSpec, SimpleAttention, Kuramoto


def as_atoms(mu):
    """Return ``(points, weights)`` for an ensemble, a circle density or a tuple.

    Circle densities become atoms at the centres of their nonzero cells,
    carrying the cell masses. Tuples may have any positive total mass.
    """
    if isinstance(mu, ParticleEnsemble):
        return mu.points, mu.weights
    if isinstance(mu, CircleDensity):
        nz = np.flatnonzero(mu.values)
        th = mu.theta[nz]
        return np.stack([np.cos(th), np.sin(th)], axis=1), mu.cell_masses[nz]
    pts, w = mu
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    w = np.asarray(w, dtype=float).reshape(-1)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return pts, w


def _field(mu, spec, targets, gradient):
    pts, w = as_atoms(mu)
    T = np.asarray(targets, dtype=float)
    single = T.ndim == 1
    T = np.atleast_2d(T)
    AT = matvec_rows(T, spec.A)
    P = matvec_rows(pts, spec.A) if gradient else pts
    family = spec.family_code if spec.family != "callable" else spec.phi_prime
    mod = _backend.module_for(family)
    out = mod.field_batch(T, AT, pts, P, w, family, float(spec.param), _backend.threads())
    return out[0] if single else out


def velocity_field_batch(mu, spec, targets, gradient=False):
    """General field (or gradient field) of ``mu`` at every target.

    Parameters
    ----------
    mu : ParticleEnsemble, CircleDensity or (points, weights)
    spec : KernelSpec
    targets : (m, d) or (d,) array
    gradient : bool
        Use ``P_x[A y]`` instead of ``P_x[y]``.
    """
    return _field(mu, spec, targets, gradient)


def velocity_general(nu, spec, x):
    """``Y[nu](x) = sum_j w_j P_x[y_j] phi'(<A x, y_j>)``; ``nu`` may have any positive mass."""
    return _field(nu, spec, x, False)


def velocity_gradient(mu, spec, x):
    """Wasserstein gradient ``sum_j w_j P_x[A y_j] phi'(<A x, y_j>)`` of the interaction energy."""
    return _field(mu, spec, x, True)


def velocity_simple(mu, beta, x):
    """Attention field ``sum_j w_j P_x[y_j] exp(beta <x, y_j>)``."""
    d = np.shape(x)[-1]
    return _field(mu, SimpleAttention(beta, d), x, False)


def kuramoto_part_and_perturbation(mu, spec, x):
    """Split the general field into ``V = P_x[M]`` and the remainder ``W``.

    ``V`` is the field of the Kuramoto kernel and ``W = Y - V`` is the
    perturbation, so ``V + W`` reproduces :func:`velocity_general` up to one
    rounding per coordinate.
    """
    d = np.shape(x)[-1]
    V = _field(mu, Kuramoto(d), x, False)
    Y = _field(mu, spec, x, False)
    return V, Y - V


def perturbation_time_derivative(mu, spec, x, Ymu=None):
    """Time derivative of ``W`` along the general flow, at fixed ``x``.

    ``dW/dt(x) = sum_j w_j P_x[(phi'(<Ax,y_j>) - 1) Y(y_j) + phi''(<Ax,y_j>) <Ax, Y(y_j)> y_j]``.
    """
    pts, w = as_atoms(mu)
    if Ymu is None:
        Ymu = velocity_general(mu, spec, pts)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    AX = X @ spec.A
    S = AX @ pts.T
    f1 = spec.phi_prime(S) - 1.0
    f2 = spec.phi_double_prime(S) * (AX @ Ymu.T)
    vec = (f1 * w) @ Ymu + (f2 * w) @ pts
    out = vec - np.sum(vec * X, axis=1, keepdims=True) * X
    return out[0] if np.ndim(x) == 1 else out


def circle_atoms(mu):
    """Angles and masses of a circle measure (density cells or d = 2 atoms)."""
    if isinstance(mu, CircleDensity):
        nz = np.flatnonzero(mu.values)
        return mu.theta[nz], mu.cell_masses[nz]
    pts, w = as_atoms(mu)
    if pts.shape[1] != 2:
        raise ValueError("circle velocity needs d = 2")
    return np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi), w


def velocity_circle(mu, beta, theta):
    """Angular velocity ``-sum_k m_k sin(theta - omega_k) exp(beta cos(theta - omega_k))``.

    For a density the sum is the periodic trapezoid rule on the cell centres,
    restricted to nonzero cells (an exact restriction).
    """
    omega, mass = circle_atoms(mu)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    out = _backend.impl.circle_velocity(th, omega, mass, float(beta), _backend.threads())
    return out[0] if np.ndim(theta) == 0 else out


def is_tangent(x, v, tol=1e-12):
    return bool(np.all(np.abs(np.sum(np.atleast_2d(x) * np.atleast_2d(v), axis=1)) <= tol))


__all__ = [
    "KernelSpec",
    "as_atoms",
    "velocity_field_batch",
    "velocity_general",
    "velocity_gradient",
    "velocity_simple",
    "velocity_circle",
    "kuramoto_part_and_perturbation",
    "perturbation_time_derivative",
]
