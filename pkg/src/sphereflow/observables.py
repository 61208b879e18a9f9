"""
Diagnostics of a measure: energies, mean and order parameter, dissipation
and its time derivative, cap masses, cutoff-weighted masses, L2 norms and
Wasserstein distances.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .ensemble import CircleDensity
from .errors import BetaZeroError, RangeError
from .fields import as_atoms, circle_atoms, velocity_field_batch
from .sphere import geodesic_distance

R_UNDEFINED = 1e-12


def energy_simple(mu, beta):
    """``(1 / (2 beta)) sum_ij w_i w_j exp(beta <x_i, x_j>)``.

    Raises
    ------
    BetaZeroError
        For ``beta == 0``; use :func:`energy_general` with a custom kernel.
    """
    if beta == 0:
        raise BetaZeroError("energy_simple is undefined at beta = 0")
    pts, w = as_atoms(mu)
    G = np.exp(beta * (pts @ pts.T))
    return float(w @ G @ w) / (2.0 * beta)


def energy_general(mu, spec):
    """``(1/2) sum_ij w_i w_j phi(<A x_i, x_j>)``."""
    pts, w = as_atoms(mu)
    G = spec.phi((pts @ spec.A) @ pts.T)
    return 0.5 * float(w @ G @ w)


def energy(mu, spec):
    """The energy that the dynamics of ``spec`` increases at rate ``I``.

    Simple attention uses the ``1/(2 beta)`` normalization; every other kernel
    uses the general form (which needs ``phi``).
    """
    if spec.kind == "simple":
        return energy_simple(mu, spec.beta)
    return energy_general(mu, spec)


def mean_and_order(mu):
    """Mean ``M``, order parameter ``R = |M|`` and direction ``U = M / R``.

    ``U`` is ``None`` when ``R < 1e-12``.
    """
    pts, w = as_atoms(mu)
    M = w @ pts
    R = float(np.linalg.norm(M))
    U = M / R if R >= R_UNDEFINED else None
    return M, R, U


def dissipation(mu, spec, Y=None):
    """``I = sum_i w_i |Y(x_i)|^2``."""
    pts, w = as_atoms(mu)
    if Y is None:
        Y = velocity_field_batch(mu, spec, pts)
    return float(w @ np.sum(Y * Y, axis=1))


def q_matrix(pts, spec, Y):
    """Pairwise integrand ``Q(x_i, x_j)`` of the dissipation rate."""
    AX = pts @ spec.A
    S = AX @ pts.T
    G = pts @ pts.T
    YY = Y @ Y.T
    n2 = np.sum(Y * Y, axis=1)
    YAy = Y @ AX.T  # <Y(x_i), A x_j>
    Yy = Y @ pts.T  # <Y(x_i), x_j>
    cross = 2.0 * (YAy + YAy.T) * Yy * spec.phi_double_prime(S)
    sym = (2.0 * YY - G * (n2[:, None] + n2[None, :])) * spec.phi_prime(S)
    return cross + sym


def dissipation_rate(mu, spec, Y=None):
    """Analytic time derivative of ``I`` along the general flow, ``sum_ij w_i w_j Q(x_i, x_j)``."""
    pts, w = as_atoms(mu)
    if Y is None:
        Y = velocity_field_batch(mu, spec, pts)
    return float(w @ q_matrix(pts, spec, Y) @ w)


def cap_masses(mu, U, alpha):
    """Masses of the caps of angle ``alpha`` around ``U`` and ``-U``, and the rest."""
    pts, w = as_atoms(mu)
    c = pts @ np.asarray(U, dtype=float)
    ca = np.cos(alpha)
    plus = float(w[c >= ca].sum())
    minus = float(w[-c >= ca].sum())
    return plus, minus, 1.0 - plus - minus


def _check_xi_angles(alpha1, alpha2):
    if not 0.0 <= alpha1 < alpha2 <= np.pi:
        raise RangeError("need 0 <= alpha1 < alpha2 <= pi")


def xi_cutoff(a, alpha1, alpha2):
    """Quintic smoothstep: 1 for ``a >= cos(alpha1)``, 0 for ``a <= cos(alpha2)``."""
    _check_xi_angles(alpha1, alpha2)
    c1, c2 = np.cos(alpha1), np.cos(alpha2)
    t = np.clip((np.asarray(a, dtype=float) - c2) / (c1 - c2), 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def xi_cutoff_derivative(a, alpha1, alpha2):
    _check_xi_angles(alpha1, alpha2)
    c1, c2 = np.cos(alpha1), np.cos(alpha2)
    t = np.clip((np.asarray(a, dtype=float) - c2) / (c1 - c2), 0.0, 1.0)
    return 30.0 * t * t * (1.0 - t) ** 2 / (c1 - c2)


def xi_cutoff_mass(mu, U, alpha1, alpha2):
    """``int xi(-<y, U>) dmu(y)``: a smoothed mass of the cap around ``-U``."""
    pts, w = as_atoms(mu)
    return float(w @ xi_cutoff(-(pts @ np.asarray(U, dtype=float)), alpha1, alpha2))


def w2_to_dirac(mu, x0):
    """Quadratic-mean geodesic distance to ``x0``, which is exactly ``W2(mu, delta_x0)``."""
    pts, w = as_atoms(mu)
    dist = geodesic_distance(pts, np.asarray(x0, dtype=float))
    return float(np.sqrt(w @ (dist * dist)))


def _circle_quantiles(mu):
    theta, mass = circle_atoms(mu)
    pos = np.mod(np.asarray(theta, dtype=float), 2 * np.pi) / (2 * np.pi)
    pos[pos >= 1.0] = 0.0
    order = np.argsort(pos, kind="stable")
    pos, mass = pos[order], np.asarray(mass, dtype=float)[order]
    cum = np.cumsum(mass)
    cum /= cum[-1]
    cum[-1] = 1.0
    return pos, cum


def _shift_costs(pa, ca, pb, cb, shifts):
    """``int_0^1 |Fa^{-1}(t) - Fb^{-1}(t + s)|^2 dt`` for each shift ``s``.

    Uses the periodic lift ``Fb^{-1}(t + 1) = Fb^{-1}(t) + 1``. The integrand
    is piecewise constant between merged breakpoints, so the integral is exact.
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    fs = (shifts - np.floor(shifts))[:, None]
    br = np.concatenate([np.zeros_like(fs), np.broadcast_to(ca, (len(shifts), len(ca))),
                         cb[None, :] - fs, cb[None, :] + 1.0 - fs], axis=1)
    br = np.sort(np.clip(br, 0.0, 1.0), axis=1)
    lengths = np.diff(br, axis=1)
    mid = 0.5 * (br[:, :-1] + br[:, 1:])
    qa = pa[np.minimum(np.searchsorted(ca, mid.ravel(), side="right"), len(pa) - 1)]
    s = (mid + shifts[:, None]).ravel()
    k = np.floor(s)
    qb = pb[np.minimum(np.searchsorted(cb, s - k, side="right"), len(pb) - 1)] + k
    return np.sum(lengths * (qa - qb).reshape(mid.shape) ** 2, axis=1)


def w2_circle(mu, nu, iterations=100, grid=2048):
    """Exact 2-Wasserstein distance on the circle with geodesic ground metric.

    Lifts both measures to quantile functions on ``[0, 1)`` and minimizes the
    shifted quantile coupling cost over the shift, which is convex in the
    shift. Ternary search is combined with an exhaustive grid of shifts and
    with every shift at which the cost has a kink.
    """
    pa, ca = _circle_quantiles(mu)
    pb, cb = _circle_quantiles(nu)
    lo, hi = -1.0, 1.0
    for _ in range(iterations):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        c1, c2 = _shift_costs(pa, ca, pb, cb, [m1, m2])
        if c1 <= c2:
            hi = m2
        else:
            lo = m1
    cand = [np.array([0.5 * (lo + hi)]), np.linspace(-1.0, 1.0, grid)]
    if len(ca) * len(cb) <= 4096:
        kinks = (ca[:, None] - cb[None, :]).ravel()
        kinks = np.concatenate([kinks - 1.0, kinks, kinks + 1.0])
        cand.append(kinks[(kinks >= -1.0) & (kinks <= 1.0)])
    best = float(_shift_costs(pa, ca, pb, cb, np.concatenate(cand)).min())
    return float(2 * np.pi * np.sqrt(max(best, 0.0)))


def l2_norm_sq(f):
    """``int f^2`` for a circle density."""
    return float(np.sum(f.values ** 2) * f.h)


def f2_cap(f, U, alpha):
    """``int_{cap(U, alpha)} f^2`` for a circle density; ``U`` is a 2-vector or an angle."""
    if np.ndim(U) == 0:
        U = np.array([np.cos(U), np.sin(U)])
    th = f.theta
    inside = np.cos(th) * U[0] + np.sin(th) * U[1] >= np.cos(alpha)
    return float(np.sum(f.values[inside] ** 2) * f.h)


@dataclass
class ObservableSnapshot:
    t: float
    E: float
    M: np.ndarray
    R: float
    U: np.ndarray
    I: float
    cap_plus: float
    cap_minus: float
    xi_mass: float
    W2: float = float("nan")
    l2: float = float("nan")
    f2cap: float = float("nan")
    extra: dict = field(default_factory=dict)


def snapshot(mu, spec, t, alpha=np.pi / 20, alpha1=None, alpha2=None, ref=None, Y=None):
    """All standard observables of ``mu`` at time ``t``.

    ``ref`` is a reference point (W2 to a Dirac) or, for ``d = 2``, a
    reference measure (exact circle W2).
    """
    M, R, U = mean_and_order(mu)
    d = M.shape[0]
    if alpha1 is None:
        alpha1, alpha2 = alpha, 2 * alpha
    try:
        E = energy(mu, spec)
    except Exception:
        E = float("nan")
    I = dissipation(mu, spec, Y)
    if U is None:
        Uv = np.full(d, np.nan)
        plus = minus = xi = float("nan")
    else:
        Uv = U
        plus, minus, _ = cap_masses(mu, U, alpha)
        xi = xi_cutoff_mass(mu, U, alpha1, alpha2)
    W2 = float("nan")
    if ref is not None:
        if isinstance(ref, np.ndarray) and ref.ndim == 1:
            W2 = w2_to_dirac(mu, ref)
        else:
            W2 = w2_circle(mu, ref)
    l2 = f2 = float("nan")
    if isinstance(mu, CircleDensity):
        l2 = l2_norm_sq(mu)
        if U is not None:
            f2 = f2_cap(mu, -U, np.pi / 2 - alpha)
    return ObservableSnapshot(float(t), E, M, R, Uv, I, plus, minus, xi, W2, l2, f2)


def _fmt(v):
    return repr(float(v))


@dataclass
class TrajectoryRecord:
    """Time-ordered snapshots with run metadata."""

    snapshots: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, snap):
        if self.snapshots and snap.t <= self.snapshots[-1].t:
            raise ValueError("snapshot times must be strictly increasing")
        self.snapshots.append(snap)

    def __len__(self):
        return len(self.snapshots)

    def column(self, name):
        return np.array([getattr(s, name) for s in self.snapshots])

    @property
    def times(self):
        return self.column("t")

    def header(self):
        d = len(self.snapshots[0].U) if self.snapshots else 0
        return ["t", "E", "R"] + [f"U{k}" for k in range(d)] + [
            "I", "cap_plus", "cap_minus", "xi_mass", "W2", "l2", "f2cap"]

    def to_csv(self, path=None):
        """CSV with fixed columns. Metadata goes in leading ``#`` comment lines."""
        buf = io.StringIO()
        for key in sorted(self.metadata):
            buf.write(f"# {key}={json.dumps(self.metadata[key], sort_keys=True)}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.header())
        for s in self.snapshots:
            wr.writerow([_fmt(s.t), _fmt(s.E), _fmt(s.R)] + [_fmt(u) for u in s.U] + [
                _fmt(s.I), _fmt(s.cap_plus), _fmt(s.cap_minus), _fmt(s.xi_mass),
                _fmt(s.W2), _fmt(s.l2), _fmt(s.f2cap)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_jsonl(self, path=None):
        lines = [json.dumps({"metadata": self.metadata}, sort_keys=True)]
        for s in self.snapshots:
            rec = {"t": s.t, "E": s.E, "M": list(map(float, s.M)), "R": s.R,
                   "U": list(map(float, s.U)), "I": s.I, "cap_plus": s.cap_plus,
                   "cap_minus": s.cap_minus, "xi_mass": s.xi_mass, "W2": s.W2,
                   "l2": s.l2, "f2cap": s.f2cap}
            rec.update(s.extra)
            lines.append(json.dumps(rec, sort_keys=True))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text
