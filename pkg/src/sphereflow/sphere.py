"""
Geometry on the unit sphere S^{d-1} embedded in R^d.

Points are plain numpy arrays: a single point has shape ``(d,)``, a set of
points shape ``(n, d)``. Functions broadcast over leading axes where that is
cheap to support.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, PoleHemisphereError, RangeError

UNIT_TOL = 1e-12


def as_sphere_point(x, tol=UNIT_TOL):
    """Validate and return ``x`` as a float array of unit vectors.

    Raises
    ------
    DimensionError
        If the ambient dimension is below 2.
    ValueError
        If some row deviates from unit norm by more than ``tol``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        raise DimensionError(f"ambient dimension must be >= 2, got {x.shape[-1]}")
    dev = np.abs(np.linalg.norm(x, axis=-1) - 1.0)
    if np.any(dev > tol):
        raise ValueError(f"not on the unit sphere (max norm deviation {dev.max():.3e})")
    return x


def normalize(x):
    """Radial projection onto the sphere."""
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def project_tangent(x, y):
    """Orthogonal projection of ``y`` onto the tangent plane at ``x``.

    Returns ``y - <x, y> x``. Broadcasts over leading axes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return y - np.sum(x * y, axis=-1, keepdims=True) * x


def geodesic_distance(x, y):
    """Great-circle distance in radians, in ``[0, pi]``.

    Uses ``2 atan2(|x - y|, |x + y|)``, which keeps full relative accuracy
    for nearly equal and nearly antipodal points, unlike ``arccos``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 2.0 * np.arctan2(np.linalg.norm(x - y, axis=-1), np.linalg.norm(x + y, axis=-1))


def angle_to_point(theta):
    """Circle angle(s) to unit vectors in R^2."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def point_to_angle(x):
    """Unit vectors in R^2 to angles in ``[0, 2 pi)``."""
    x = np.asarray(x, dtype=float)
    return np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)


def circular_distance(a, b):
    """Geodesic distance between circle angles."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def sample_uniform(d, n, seed):
    """Draw ``n`` i.i.d. uniform points on S^{d-1} (normalized Gaussians).

    Deterministic for a fixed ``seed``.
    """
    if n < 1:
        raise RangeError("n must be >= 1")
    if d < 2:
        raise DimensionError("d must be >= 2")
    rng = np.random.default_rng(seed)
    return normalize(rng.standard_normal((n, d)))


def random_tangent(x, rng):
    """A random tangent vector at each row of ``x``."""
    return project_tangent(x, rng.standard_normal(np.shape(x)))


@dataclass(frozen=True)
class SphericalCap:
    """Closed cap ``{x : <x, center> >= cos(angle)}``."""

    center: np.ndarray
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_sphere_point(self.center))
        if not 0.0 < self.angle < np.pi:
            raise RangeError(f"cap angle must lie in (0, pi), got {self.angle}")

    @property
    def cos_angle(self):
        return float(np.cos(self.angle))

    def contains(self, x):
        """Membership test; boundary points count as inside."""
        return np.asarray(x, dtype=float) @ self.center >= self.cos_angle

    def opposite(self):
        return SphericalCap(-self.center, self.angle)


def rotation_to(north):
    """Orthogonal matrix ``Q`` with ``Q @ e_d == north``.

    Built from two Householder reflections: ``e_d -> -e_d`` followed by the
    reflection sending ``-e_d`` to ``north``. The result is a rotation, equals
    the identity at ``north = e_d`` and is smooth away from ``north = -e_d``,
    where the single reflection ``diag(1, ..., 1, -1)`` is used instead.
    """
    u = as_sphere_point(north)
    d = u.shape[0]
    e = np.zeros(d)
    e[-1] = 1.0
    h1 = np.eye(d)
    h1[-1, -1] = -1.0
    v = u + e
    vv = v @ v
    if vv < 1e-24:
        return h1
    h2 = np.eye(d) - 2.0 * np.outer(v, v) / vv
    return h2 @ h1


@dataclass(frozen=True)
class GnomonicChart:
    """Gnomonic chart centred at ``north``.

    Local coordinates are ``basis.T @ x``; the last local coordinate is the
    component along ``north``. The open hemisphere around ``north`` maps
    diffeomorphically onto R^{d-1}.
    """

    north: np.ndarray
    basis: np.ndarray = field(default=None)

    def __post_init__(self):
        north = as_sphere_point(self.north)
        object.__setattr__(self, "north", north)
        if self.basis is None:
            object.__setattr__(self, "basis", rotation_to(north))

    @property
    def dim(self):
        return self.north.shape[0]

    def forward(self, x):
        """``G(x) = (x_1/x_d, ..., x_{d-1}/x_d)`` in chart coordinates."""
        local = np.asarray(x, dtype=float) @ self.basis
        h = local[..., -1]
        if np.any(h <= 0.0):
            raise PoleHemisphereError("point not in the open hemisphere of the chart")
        return local[..., :-1] / h[..., None]

    def inverse(self, u):
        """``F(u) = (u + e_d) / sqrt(1 + |u|^2)``, returned in ambient coordinates."""
        u = np.asarray(u, dtype=float)
        ones = np.ones(u.shape[:-1] + (1,))
        local = np.concatenate([u, ones], axis=-1)
        local = local / np.sqrt(1.0 + np.sum(u * u, axis=-1, keepdims=True))
        return local @ self.basis.T

    def tangent_map(self, u, X):
        """Differential ``dF_u(X)`` as an ambient vector tangent at ``F(u)``."""
        u = np.asarray(u, dtype=float)
        X = np.asarray(X, dtype=float)
        nu2 = np.sum(u * u, axis=-1, keepdims=True)
        xu = np.sum(X * u, axis=-1, keepdims=True)
        top = (1.0 + nu2) * X - xu * u
        last = -xu
        local = np.concatenate([top, last], axis=-1) / (1.0 + nu2) ** 1.5
        return local @ self.basis.T


def gnomonic_forward(chart, x):
    return chart.forward(x)


def gnomonic_inverse(chart, u):
    return chart.inverse(u)


def gnomonic_tangent_map(chart, u, X):
    return chart.tangent_map(u, X)


def sample_cap(center, angle, n, rng):
    """Uniform samples from the cap of the given angle around ``center``.

    Rejection from the uniform measure for wide caps, otherwise uniform in
    the gnomonic ball pushed through ``F`` and reweighted by rejection so the
    output is uniform on the sphere.
    """
    center = as_sphere_point(center)
    d = center.shape[0]
    cos_a = np.cos(angle)
    out = []
    have = 0
    if angle > 0.5:
        while have < n:
            x = normalize(rng.standard_normal((max(4 * n, 64), d)))
            x = x[x @ center >= cos_a]
            out.append(x)
            have += len(x)
        return np.concatenate(out)[:n]
    chart = GnomonicChart(center)
    r = np.tan(angle)
    # density of the uniform sphere measure in gnomonic coordinates ~ (1+|u|^2)^{-d/2}
    while have < n:
        m = max(4 * n, 64)
        g = rng.standard_normal((m, d - 1))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = r * rng.random(m) ** (1.0 / (d - 1))
        u = g * rad[:, None]
        accept = rng.random(m) < (1.0 + rad**2) ** (-d / 2.0)
        out.append(chart.inverse(u[accept]))
        have += int(accept.sum())
    return np.concatenate(out)[:n]
