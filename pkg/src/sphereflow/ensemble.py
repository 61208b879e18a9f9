"""
Probability measures on the sphere: weighted particle ensembles and
piecewise-constant densities on the circle.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import RangeError, SupportOverlapError
from .sphere import as_sphere_point, normalize, sample_cap

MASS_TOL = 1e-12
DENSITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Weighted atoms ``sum_i w_i delta_{x_i}`` with unit total mass.

    Parameters
    ----------
    points : (n, d) array of unit vectors
    weights : (n,) array of positive reals summing to 1, optional
        Defaults to equal weights.
    """

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = as_sphere_point(np.atleast_2d(np.array(self.points, dtype=float)))
        if pts.shape[0] < 1:
            raise ValueError("an ensemble needs at least one atom")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise ValueError("points and weights differ in length")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def with_points(self, points):
        """Pushforward: same weights at new locations."""
        return ParticleEnsemble(points, self.weights)

    def to_dict(self):
        return {"d": self.d, "points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data):
        pts = np.asarray(data["points"], dtype=float)
        if "d" in data and pts.shape[1] != data["d"]:
            raise ValueError("declared d does not match the points")
        return cls(pts, data.get("weights"))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def from_csv(cls, path, weight_column=False):
        """Read atoms from CSV rows ``x1,...,xd`` or ``x1,...,xd,w``.

        Lines starting with ``#`` and a non-numeric header row are skipped.
        Points are renormalized; weights are normalized to sum to 1.
        """
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    if rows:
                        raise
        arr = np.asarray(rows, dtype=float)
        if weight_column:
            pts, w = arr[:, :-1], arr[:, -1]
            w = w / w.sum()
        else:
            pts, w = arr, None
        return cls(normalize(pts), w)


def dirac(x):
    return ParticleEnsemble(np.atleast_2d(x), [1.0])


@dataclass(frozen=True, eq=False)
class CircleDensity:
    """Density on ``R / 2 pi Z`` stored as cell averages.

    Cell ``k`` is centred at ``theta_k = 2 pi k / N`` with width ``2 pi / N``.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size < 8:
            raise ValueError("grid too small")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        mass = v.sum() * (2 * np.pi / v.size)
        if abs(mass - 1.0) > DENSITY_TOL:
            raise ValueError(f"density integrates to {mass!r}, not 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self):
        return self.values.size

    @property
    def h(self):
        return 2 * np.pi / self.N

    @property
    def theta(self):
        return self.h * np.arange(self.N)

    @property
    def cell_masses(self):
        return self.values * self.h

    def to_dict(self):
        return {"N": self.N, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data):
        vals = np.asarray(data["values"], dtype=float)
        if "N" in data and vals.size != data["N"]:
            raise ValueError("declared N does not match the values")
        return cls(vals)

    @classmethod
    def uniform(cls, N):
        return cls(np.full(N, 1.0 / (2 * np.pi)))

    @classmethod
    def from_unnormalized(cls, values):
        v = np.asarray(values, dtype=float)
        return cls(v / (v.sum() * 2 * np.pi / v.size))


def _on_circle(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def make_example_2_4(xi):
    """Three atoms at ``pi/2, -pi/2 - xi, -pi/2 + xi`` with weights 1/50, 49/100, 49/100."""
    if not 0.0 < xi < 0.01:
        raise RangeError("xi must lie in (0, 1/100)")
    s, c = np.sin(xi), np.cos(xi)
    pts = np.array([[0.0, 1.0], [-s, -c], [s, -c]])
    return ParticleEnsemble(pts, [1 / 50, 49 / 100, 49 / 100])


def example_2_4_limit():
    """The two-atom limit ``(1/50) delta_{pi/2} + (49/50) delta_{-pi/2}``."""
    return ParticleEnsemble(np.array([[0.0, 1.0], [0.0, -1.0]]), [1 / 50, 49 / 50])


def make_example_2_1(eps):
    """``(1 - eps) delta_{pi/2} + eps delta_{-pi/2}`` on the circle."""
    if not 0.0 < eps < 1.0:
        raise RangeError("eps must lie in (0, 1)")
    return ParticleEnsemble(np.array([[0.0, 1.0], [0.0, -1.0]]), [1.0 - eps, eps])


def mollifier(x, width):
    """Unnormalized bump ``exp(-1 / (1 - (x/width)^2))`` on ``(-width, width)``."""
    r = np.asarray(x, dtype=float) / width
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def make_example_2_6(eta, xi, N):
    """Two disjoint bumps: mass 1/3 on ``[-eta, eta]`` and 2/3 on ``[pi - xi, pi + xi]``.

    Each bump is a mollifier sampled at cell centres and rescaled so that its
    discrete mass is exact.

    Raises
    ------
    RangeError
        If ``eta`` or ``xi`` is outside ``(0, 1/100)``.
    SupportOverlapError
        If a bump spans fewer than 8 cells (``N * width < 8``).
    """
    for name, v in (("eta", eta), ("xi", xi)):
        if not 0.0 < v < 0.01:
            raise RangeError(f"{name} must lie in (0, 1/100)")
    if N * eta < 8 or N * xi < 8:
        raise SupportOverlapError(f"grid N={N} cannot resolve bumps of half-width {min(eta, xi)}")
    h = 2 * np.pi / N
    theta = h * np.arange(N)
    around0 = np.angle(np.exp(1j * theta))
    aroundpi = np.angle(np.exp(1j * (theta - np.pi)))
    b1 = mollifier(around0, eta)
    b2 = mollifier(aroundpi, xi)
    b1 *= (1.0 / 3.0) / (b1.sum() * h)
    b2 *= (2.0 / 3.0) / (b2.sum() * h)
    return CircleDensity.from_unnormalized(b1 + b2)


def sample_from_circle_density(f, n, seed):
    """Equal-weight atoms drawn by inverse CDF of the piecewise-constant density."""
    rng = np.random.default_rng(seed)
    masses = f.cell_masses
    cdf = np.cumsum(masses)
    cdf /= cdf[-1]
    u = rng.random(n)
    k = np.minimum(np.searchsorted(cdf, u, side="right"), f.N - 1)
    lo = np.concatenate([[0.0], cdf[:-1]])[k]
    frac = (u - lo) / np.maximum(masses[k] / masses.sum(), 1e-300)
    theta = f.h * (k - 0.5 + np.clip(frac, 0.0, 1.0))
    return ParticleEnsemble(_on_circle(theta))


def sample_tilted(d, n, tilt, seed, axis=None):
    """Equal-weight samples from the density proportional to ``1 + tilt <x, axis>``.

    The mean is ``tilt / d * axis``. Drawn by rejection from the uniform measure.
    """
    if not 0.0 <= tilt <= 1.0:
        raise RangeError("tilt must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    if axis is None:
        axis = np.zeros(d)
        axis[-1] = 1.0
    out, have = [], 0
    while have < n:
        x = normalize(rng.standard_normal((2 * n, d)))
        keep = rng.random(2 * n) * (1.0 + tilt) < 1.0 + tilt * (x @ axis)
        out.append(x[keep])
        have += int(keep.sum())
    return ParticleEnsemble(np.concatenate(out)[:n])


def random_cap_ensemble(d, n, center, angle, rng, dirichlet=True):
    """Random atoms uniform in a cap with random (Dirichlet) or equal weights."""
    pts = sample_cap(center, angle, n, rng)
    if dirichlet:
        w = rng.dirichlet(np.ones(n))
        w = np.maximum(w, 1e-12)
        w /= w.sum()
    else:
        w = None
    return ParticleEnsemble(pts, w)
