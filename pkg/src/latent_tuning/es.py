"""Bounded extremum seeking.

Each controlled parameter follows

    dv_i/dt = sqrt(alpha * w_i) * cos(w_i t + k C)

integrated with explicit Euler. The cost only enters through the phase,
so every step moves a parameter by at most dt * sqrt(alpha * w_max)
regardless of the cost's magnitude. On average the parameters perform
gradient descent, dv/dt ~ -(k alpha / 2) grad C, provided the dither
frequencies are distinct and high relative to the cost's time variation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson


class MeasurementFault(RuntimeError):
    pass


def make_frequencies(n: int, omega_base: float) -> np.ndarray:
    """Dither frequencies r_i * omega_base with r_i evenly spread over [1, 1.75]."""
    if n < 1:
        raise ValueError("need at least one frequency")
    return omega_base * dither_ratios(n)


def dither_ratios(n: int) -> np.ndarray:
    i = np.arange(n)
    return 1.0 + 0.75 * i / max(n - 1, 1)


def has_integer_multiples(freqs, rtol: float = 1e-9) -> bool:
    """True if any two frequencies are equal or one is an integer multiple of the other."""
    f = np.sort(np.abs(np.asarray(freqs, dtype=float)))
    ratio = f[None, :] / f[:, None]  # ratio[i, j] = f_j / f_i >= 1 for j >= i
    iu = np.triu_indices(len(f), k=1)
    r = ratio[iu]
    return bool(np.any(np.abs(r - np.round(r)) <= rtol * r))


@dataclass(frozen=True)
class EsConfig:
    alpha: float
    k: float
    omega_base: float
    ratios: tuple
    dt: float

    def __post_init__(self):
        r = np.asarray(self.ratios, dtype=float)
        object.__setattr__(self, "ratios", tuple(float(x) for x in r))
        if self.alpha < 0 or self.k < 0 or self.omega_base <= 0 or self.dt <= 0:
            raise ValueError("alpha, k must be non-negative; omega_base, dt positive")
        if r.size == 0 or np.any(r <= 0):
            raise ValueError("need positive dither ratios")
        if len(set(r.tolist())) != r.size or has_integer_multiples(r):
            raise ValueError("dither frequencies must be distinct and not integer multiples")
        if self.omegas.max() * self.dt >= math.pi / 10:
            raise ValueError(
                f"fastest dither w_max*dt = {self.omegas.max() * self.dt:.3f} must stay below pi/10"
            )

    @classmethod
    def for_dim(cls, n: int, alpha: float, k: float, dt: float = 1.0,
                steps_per_period: int = 50) -> "EsConfig":
        """Config whose slowest dither period spans ``steps_per_period`` steps."""
        omega = 2.0 * math.pi / (steps_per_period * dt)
        return cls(alpha, k, omega, tuple(dither_ratios(n)), dt)

    @property
    def dim(self) -> int:
        return len(self.ratios)

    @property
    def omegas(self) -> np.ndarray:
        return self.omega_base * np.asarray(self.ratios)

    @property
    def max_increment(self) -> float:
        return self.dt * math.sqrt(self.alpha * self.omegas.max())

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "k": self.k, "omega_base": self.omega_base,
                "ratios": list(self.ratios), "dt": self.dt}

    @classmethod
    def from_dict(cls, d) -> "EsConfig":
        return cls(float(d["alpha"]), float(d["k"]), float(d["omega_base"]),
                   tuple(d["ratios"]), float(d["dt"]))


@dataclass(frozen=True)
class EsState:
    """Controller state. ``history`` is shared and append-only across steps."""

    t: float
    v: np.ndarray
    last_cost: float = float("nan")
    history: list = field(default_factory=list, compare=False, repr=False)

    @classmethod
    def start(cls, v0, t0: float = 0.0) -> "EsState":
        return cls(t0, np.array(v0, dtype=float))


def es_step(state: EsState, cost: float, cfg: EsConfig) -> EsState:
    """One Euler step of the dither law using the cost measured at ``state.v``."""
    if not np.isfinite(cost):
        raise MeasurementFault(f"measurement fault: non-finite cost {cost!r} at t={state.t}")
    if state.v.shape != (cfg.dim,):
        raise ValueError(f"state has {state.v.shape[0]} parameters, config has {cfg.dim}")
    w = cfg.omegas
    dv = cfg.dt * np.sqrt(cfg.alpha * w) * np.cos(w * state.t + cfg.k * cost)
    state.history.append((state.t, float(cost), state.v.copy()))
    return EsState(state.t + cfg.dt, state.v + dv, float(cost), state.history)


@dataclass
class Trajectory:
    t: np.ndarray  # (n,) measurement times
    cost: np.ndarray  # (n,) cost fed to the controller
    raw_cost: np.ndarray  # (n,) cost before scaling
    v: np.ndarray  # (n, N) parameters at which each cost was measured
    v_final: np.ndarray
    cost_scale: float = 1.0

    def __len__(self):
        return len(self.t)

    def increments(self) -> np.ndarray:
        v = np.vstack([self.v, self.v_final])
        return np.diff(v, axis=0)

    def tail_mean_cost(self, fraction: float = 0.1, raw: bool = False) -> float:
        c = self.raw_cost if raw else self.cost
        n = max(1, int(round(len(c) * fraction)))
        return float(np.mean(c[-n:]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "t", "cost"] + [f"v{i + 1}" for i in range(self.v.shape[1])])
            for i, (t, c, v) in enumerate(zip(self.t, self.cost, self.v)):
                wr.writerow([i, repr(float(t)), repr(float(c))] + [repr(float(x)) for x in v])


def _resolve_scale(cost_scale, first_cost):
    if cost_scale is None:
        return 1.0
    if cost_scale == "initial":
        return first_cost if first_cost > 1e-300 else 1.0
    return float(cost_scale)


def _run(cost_at: Callable, cfg: EsConfig, v0, steps: int, cost_scale) -> Trajectory:
    state = EsState.start(v0)
    scale = None
    raw = np.empty(steps)
    for i in range(steps):
        c = float(cost_at(state.v, state.t))
        if scale is None:
            if not np.isfinite(c):
                raise MeasurementFault(f"measurement fault: non-finite cost {c!r} at t=0")
            scale = _resolve_scale(cost_scale, c)
        raw[i] = c
        state = es_step(state, c / scale, cfg)
    h = state.history
    return Trajectory(
        t=np.array([e[0] for e in h]),
        cost=np.array([e[1] for e in h]),
        raw_cost=raw,
        v=np.array([e[2] for e in h]).reshape(len(h), cfg.dim),
        v_final=state.v,
        cost_scale=scale if scale is not None else 1.0,
    )


def run_static(cost_fn: Callable, cfg: EsConfig, v0, steps: int, cost_scale="initial") -> Trajectory:
    """Minimize a time-invariant cost ``cost_fn(v)``.

    ``cost_scale`` divides every measurement before it reaches the
    controller: ``"initial"`` uses the first measurement, ``None`` leaves
    costs untouched, a number is used as given.
    """
    return _run(lambda v, t: cost_fn(v), cfg, v0, steps, cost_scale)


@dataclass
class TrackingResult:
    trajectory: Trajectory
    error: np.ndarray  # |v(t) - v*(t)| at each measurement


def run_tracking(cost_fn: Callable, cfg: EsConfig, v0, steps: int,
                 minimizer: Callable | None = None, cost_scale="initial") -> TrackingResult:
    """Track the minimum of a time-varying cost ``cost_fn(v, t)``.

    ``minimizer(t)`` supplies the true minimizer for the error series; when
    omitted the error series is empty.
    """
    traj = _run(cost_fn, cfg, v0, steps, cost_scale)
    if minimizer is None:
        err = np.array([])
    else:
        vstar = np.array([np.broadcast_to(minimizer(t), (cfg.dim,)) for t in traj.t])
        err = np.linalg.norm(traj.v - vstar, axis=1)
    return TrackingResult(traj, err)


def window_means(x: np.ndarray, window: int) -> np.ndarray:
    """Means of ``x`` over every window of ``window`` consecutive samples."""
    c = np.cumsum(np.concatenate([np.zeros((1,) + x.shape[1:]), x]), axis=0)
    return (c[window:] - c[:-window]) / window


def common_period_steps(cfg: EsConfig, max_multiple: int = 1000) -> int:
    """Steps in the shortest span holding a whole number of periods of every dither.

    Falls back to the slowest dither period (rounded) when the ratios share
    no period within ``max_multiple`` slowest periods.
    """
    r = np.asarray(cfg.ratios) / min(cfg.ratios)
    slowest = 2.0 * math.pi / (cfg.omegas.min() * cfg.dt)
    for m in range(1, max_multiple + 1):
        if np.allclose(r * m, np.round(r * m), atol=1e-9):
            steps = m * slowest
            if abs(steps - round(steps)) < 1e-6:
                return int(round(steps))
    return int(round(slowest))


@dataclass
class DescentCheck:
    empirical: float  # d<C>/dt from period-averaged cost
    predicted: float  # -(k alpha / 2) |grad C|^2 averaged over the span

    @property
    def relative_error(self) -> float:
        return abs(self.empirical - self.predicted) / abs(self.predicted)


def averaged_descent(traj: Trajectory, grad_fn: Callable, cfg: EsConfig, start: int,
                     span: int, window: int) -> DescentCheck:
    """Compare the windowed cost slope with the averaged gradient-flow rate.

    Cost and parameters are averaged over ``window`` steps (a whole number
    of dither periods). The slope of the averaged cost between window starts
    ``start`` and ``start + span`` is compared with ``-(k alpha / 2)|grad C|^2``
    evaluated at the averaged parameters over the same span. The trajectory
    must hold unscaled costs.
    """
    cbar = window_means(traj.cost, window)
    vbar = window_means(traj.v, window)
    emp = (cbar[start + span] - cbar[start]) / (span * cfg.dt)
    g2 = np.array([np.sum(grad_fn(v) ** 2) for v in vbar[start:start + span + 1]])
    pred = -(cfg.k * cfg.alpha / 2.0) * float(np.mean(g2))
    return DescentCheck(float(emp), pred)


@dataclass
class OrthogonalityTable:
    omegas: np.ndarray
    cross: np.ndarray  # (n, n) integrals of cos(w_i t) f cos(w_j t), diagonal zeroed
    self_terms: np.ndarray  # (n,) integrals of cos^2(w_i t) f
    half_integral: float  # (1/2) integral of f
    horizon: float

    @property
    def max_cross(self) -> float:
        return float(np.max(np.abs(self.cross)))

    @property
    def max_self_error(self) -> float:
        return float(np.max(np.abs(self.self_terms - self.half_integral) / abs(self.half_integral)))


def orthogonality_check(omega_base: float, ratios, f: Callable, horizon: float,
                        points_per_period: int = 64) -> OrthogonalityTable:
    """Quadrature of the dither inner products over [0, horizon] (composite Simpson)."""
    w = omega_base * np.asarray(ratios, dtype=float)
    n_pts = int(math.ceil(horizon * w.max() / (2 * math.pi) * points_per_period)) | 1
    tau = np.linspace(0.0, horizon, n_pts)
    fv = np.broadcast_to(np.asarray(f(tau), dtype=float), tau.shape)
    cs = np.cos(np.outer(w, tau))
    gram = np.array([[simpson(ci * fv * cj, x=tau) for cj in cs] for ci in cs])
    self_terms = np.diag(gram).copy()
    cross = gram - np.diag(self_terms)
    return OrthogonalityTable(w, cross, self_terms, 0.5 * float(simpson(fv, x=tau)), horizon)
