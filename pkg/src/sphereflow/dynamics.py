"""
Time evolution: projected Runge-Kutta for particle ensembles (with passive
markers following the same field) and a conservative finite-volume scheme
for densities on the circle.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import _backend
from .ensemble import CircleDensity, ParticleEnsemble
from .errors import CflError, StepSizeError
from .fields import velocity_circle
from .observables import TrajectoryRecord, snapshot

MIN_DT_RELATIVE = 1e-12
VELOCITY_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    Parameters
    ----------
    method : {"rk4", "euler"}
        Projected schemes: stages are evaluated in the ambient space and
        points are radially renormalized.
    dt : float
        Step size (initial step when adaptive).
    t_end : float
    adaptive : bool
        Step-doubling error control with tolerance ``tol`` on the max
        coordinate error per step.
    renormalize_each_stage : bool
    gradient : bool
        Follow the Wasserstein gradient field instead of the general field.
    """

    method: str = "rk4"
    dt: float = 0.01
    t_end: float = 1.0
    adaptive: bool = False
    tol: float = 1e-9
    renormalize_each_stage: bool = True
    gradient: bool = False

    def __post_init__(self):
        if self.method not in ("rk4", "euler"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.adaptive and not self.tol > 0:
            raise ValueError("tol must be positive when adaptive")

    @property
    def method_code(self):
        return 1 if self.method == "rk4" else 0


@dataclass(frozen=True, eq=False)
class FlowState:
    """Time, ensemble and optional passive markers (samples of the characteristic flow)."""

    time: float
    ensemble: ParticleEnsemble
    markers: np.ndarray = None

    def __post_init__(self):
        if self.markers is None:
            object.__setattr__(self, "markers", np.zeros((0, self.ensemble.d)))
        else:
            m = np.atleast_2d(np.asarray(self.markers, dtype=float))
            if m.size and np.abs(np.linalg.norm(m, axis=1) - 1.0).max() > 1e-12:
                raise ValueError("markers must be unit vectors")
            object.__setattr__(self, "markers", m.reshape(-1, self.ensemble.d))

    def to_dict(self):
        return {"time": self.time, "ensemble": self.ensemble.to_dict(),
                "markers": self.markers.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(float(data["time"]), ParticleEnsemble.from_dict(data["ensemble"]),
                   np.asarray(data.get("markers", []), dtype=float).reshape(-1, data["ensemble"]["d"]))


def _advance(points, weights, markers, spec, cfg, dt, nsteps):
    family = spec.family_code if spec.family != "callable" else spec.phi_prime
    mod = _backend.module_for(family)
    return mod.rk_advance(points, weights, markers, spec.A, family, float(spec.param),
                          bool(cfg.gradient), float(dt), int(nsteps), cfg.method_code,
                          bool(cfg.renormalize_each_stage), _backend.threads())


def min_step(spec):
    """Smallest admissible adaptive step: ``1e-12`` in units of the kernel time scale."""
    return MIN_DT_RELATIVE / max(spec.sup_phi_prime(), 1.0)


def step_particles(state, spec, cfg, dt=None):
    """One fixed step of size ``dt`` (default ``cfg.dt``). Weights never change."""
    dt = cfg.dt if dt is None else dt
    X, M = _advance(state.ensemble.points, state.ensemble.weights, state.markers, spec, cfg, dt, 1)
    return FlowState(state.time + dt, state.ensemble.with_points(X), M)


def step_adaptive(state, spec, cfg, dt):
    """One accepted step-doubling step starting from trial size ``dt``.

    Returns
    -------
    new_state : FlowState
    dt_next : float
        Suggested size of the following step.

    Raises
    ------
    StepSizeError
        If the controller shrinks ``dt`` below :func:`min_step`.
    """
    floor = min_step(spec)
    order = 4 if cfg.method == "rk4" else 1
    pts, w, mk = state.ensemble.points, state.ensemble.weights, state.markers
    while True:
        if dt < floor:
            raise StepSizeError(f"adaptive step underflow: dt = {dt:.3e} < {floor:.3e}")
        Xb, Mb = _advance(pts, w, mk, spec, cfg, dt, 1)
        Xh, Mh = _advance(pts, w, mk, spec, cfg, 0.5 * dt, 2)
        err = np.abs(Xb - Xh).max()
        if Mh.size:
            err = max(err, np.abs(Mb - Mh).max())
        if err <= cfg.tol:
            fac = 4.0 if err == 0 else min(4.0, max(0.2, 0.9 * (cfg.tol / err) ** (1.0 / (order + 1))))
            return FlowState(state.time + dt, state.ensemble.with_points(Xh), Mh), dt * fac
        dt *= max(0.2, 0.9 * (cfg.tol / err) ** (1.0 / (order + 1)))


def _observe(state, spec, observers, record, ref, alpha):
    snap = snapshot(state.ensemble, spec, state.time, alpha=alpha, ref=ref)
    for obs in observers:
        extra = obs(state, spec, snap)
        if extra:
            snap.extra.update(extra)
    record.append(snap)


def evolve(state, spec, cfg, observers=(), every=None, ref=None, alpha=np.pi / 20,
           checkpoint_every=None, checkpoint_path=None, metadata=None):
    """Integrate from ``state.time`` to ``cfg.t_end`` and record snapshots.

    Parameters
    ----------
    observers : sequence of callables ``obs(state, spec, snapshot) -> dict or None``
        Called at every observer tick; returned items are stored in the
        snapshot's ``extra`` field.
    every : float, optional
        Observer cadence in time units (default: every step for fixed steps).
    ref : array or measure, optional
        Reference for the W2 column.
    checkpoint_every : int, optional
        Write the full state as JSON every this many observer ticks.

    Returns
    -------
    TrajectoryRecord
        The final state is available as ``record.final_state``.
    """
    record = TrajectoryRecord(metadata=dict(metadata or {}))
    ticks = 0

    def tick(s):
        nonlocal ticks
        _observe(s, spec, observers, record, ref, alpha)
        ticks += 1
        if checkpoint_every and checkpoint_path and ticks % checkpoint_every == 0:
            with open(checkpoint_path, "w") as fh:
                json.dump(s.to_dict(), fh)

    tick(state)
    if not cfg.adaptive:
        total = int(round((cfg.t_end - state.time) / cfg.dt))
        per = max(1, int(round(every / cfg.dt))) if every else 1
        t0 = state.time
        done = 0
        while done < total:
            k = min(per, total - done)
            X, M = _advance(state.ensemble.points, state.ensemble.weights, state.markers,
                            spec, cfg, cfg.dt, k)
            done += k
            state = FlowState(t0 + done * cfg.dt, state.ensemble.with_points(X), M)
            tick(state)
    else:
        dt = cfg.dt
        next_obs = state.time + every if every else None
        while state.time < cfg.t_end * (1 - 1e-14):
            step = min(dt, cfg.t_end - state.time)
            if next_obs is not None:
                step = min(step, next_obs - state.time)
            new, dt_next = step_adaptive(state, spec, cfg, step)
            # keep the controller's suggestion unless the step was clipped
            dt = dt_next if new.time - state.time >= dt * (1 - 1e-12) else max(dt, dt_next)
            state = new
            if next_obs is None or state.time >= next_obs * (1 - 1e-14):
                tick(state)
                if next_obs is not None:
                    next_obs += every
    record.final_state = state
    return record


def track_characteristics(state, spec, cfg, seeds, every=None, alpha=np.pi / 20):
    """Evolve with passive markers started at ``seeds``.

    Returns
    -------
    record : TrajectoryRecord
    times : (T,) array
    paths : (T, k, d) array of marker positions at observer ticks
    """
    start = FlowState(state.time, state.ensemble, np.asarray(seeds, dtype=float))
    paths = []

    def grab(s, spec_, snap):
        paths.append(s.markers.copy())

    rec = evolve(start, spec, cfg, observers=[grab], every=every, alpha=alpha)
    return rec, rec.times, np.array(paths)


@dataclass(frozen=True)
class CircleSolverConfig:
    """Finite-volume settings for circle densities."""

    N: int = 4096
    cfl: float = 0.9
    limiter: str = "none"

    def __post_init__(self):
        if self.N < 64:
            raise ValueError("N must be >= 64")
        if not 0 < self.cfl <= 0.9:
            raise ValueError("cfl must lie in (0, 0.9]")
        if self.limiter not in ("none", "minmod"):
            raise ValueError(f"unknown limiter {self.limiter!r}")


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def interface_velocities(f, beta):
    """Velocity at interfaces ``theta_k + h/2`` adjacent to nonzero cells (zero elsewhere)."""
    N = f.N
    nz = np.flatnonzero(f.values)
    active = np.unique(np.concatenate([nz, (nz - 1) % N]))
    v = np.zeros(N)
    if active.size:
        vals = velocity_circle(f, beta, f.h * (active + 0.5))
        scale = f.values.sum() * f.h * np.exp(abs(beta))
        vals[np.abs(vals) <= VELOCITY_ZERO_TOL * scale] = 0.0
        v[active] = vals
    return v


def step_circle_density(f, beta, cfg, dt=None, v=None):
    """One conservative finite-volume step of ``f_t + (f v)_theta = 0``.

    Upwind fluxes (optionally minmod-limited) with interface velocities from
    :func:`velocity_circle`. When ``dt`` is omitted it is chosen so that no
    cell loses more than ``cfl`` of its content.

    Returns
    -------
    CircleDensity, float
        The new density and the step used.

    Raises
    ------
    CflError
        If an explicit ``dt`` gives ``max|v| dt / h > 1``.
    """
    if v is None:
        v = interface_velocities(f, beta)
    h = f.h
    vmax = np.abs(v).max()
    if vmax == 0.0:
        return f, (np.inf if dt is None else dt)
    out_rate = np.maximum(v, 0.0) + np.maximum(-np.roll(v, 1), 0.0)
    if dt is None:
        dt = cfg.cfl * h / out_rate.max()
    elif vmax * dt / h > 1.0:
        raise CflError(f"CFL number {vmax * dt / h:.3f} exceeds 1")
    u = np.asarray(f.values)
    if cfg.limiter == "minmod":
        du = _minmod(u - np.roll(u, 1), np.roll(u, -1) - u)
        left = u + 0.5 * du
        right = np.roll(u - 0.5 * du, -1)
    else:
        left, right = u, np.roll(u, -1)
    flux = np.maximum(v, 0.0) * left + np.minimum(v, 0.0) * right
    new = u - (dt / h) * (flux - np.roll(flux, 1))
    new = np.where(np.abs(new) < 1e-300, 0.0, new)
    new = np.maximum(new, 0.0)
    total = new.sum() * h
    return CircleDensity(new / total), dt


def evolve_circle(f, beta, cfg, t_end=None, max_steps=100_000, stop=None, observers=(),
                  every_steps=1, ref=None, alpha=np.pi / 20):
    """Run the circle solver until ``t_end``, ``stop(f, t)`` returns True, or ``max_steps``.

    Returns a :class:`TrajectoryRecord` with density-mode observables; the final
    density and time are attached as ``record.final_density``/``record.final_time``.
    """
    from .kernel import SimpleAttention

    spec = SimpleAttention(beta, 2)
    record = TrajectoryRecord()
    t = 0.0

    def tick(g, t):
        snap = snapshot(g, spec, t, alpha=alpha, ref=ref)
        for obs in observers:
            extra = obs(g, t, snap)
            if extra:
                snap.extra.update(extra)
        record.append(snap)

    tick(f, t)
    for k in range(max_steps):
        dt_cap = None if t_end is None else t_end - t
        g, dt = step_circle_density(f, beta, cfg)
        if dt_cap is not None and dt > dt_cap:
            g, dt = step_circle_density(f, beta, cfg, dt=dt_cap)
        if not np.isfinite(dt):
            break
        f, t = g, t + dt
        done = (t_end is not None and t >= t_end * (1 - 1e-14)) or (stop is not None and stop(f, t))
        if (k + 1) % every_steps == 0 or done:
            tick(f, t)
        if done:
            break
    record.final_density = f
    record.final_time = t
    return record
