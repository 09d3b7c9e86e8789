"""Smooth periodic drift of the initial beam and machine settings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import MachineParams
from .mixture import BeamState


@dataclass(frozen=True)
class DriftSchedule:
    """Single-harmonic drift, anchored so that t = 0 reproduces the base.

    ``beam_amplitudes`` holds 6 centroid amplitudes followed by one relative
    size amplitude that scales every covariance by ``(1 + a s(t))**2``.
    Each component follows ``a (sin(2 pi t / period + phase) - sin(phase))``.
    """

    period: float = 20000.0
    input_amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(5))
    beam_amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(7))
    phases: np.ndarray = field(default_factory=lambda: np.zeros(12))

    def __post_init__(self):
        ia = np.array(self.input_amplitudes, dtype=float)
        ba = np.array(self.beam_amplitudes, dtype=float)
        ph = np.array(self.phases, dtype=float)
        if ia.shape != (5,) or ba.shape != (7,) or ph.shape != (12,):
            raise ValueError("drift schedule needs 5 input, 7 beam amplitudes and 12 phases")
        if not self.period > 0:
            raise ValueError("drift period must be positive")
        if abs(ba[6]) >= 0.5:
            raise ValueError("relative size amplitude must stay below 0.5")
        for a in (ia, ba, ph):
            a.setflags(write=False)
        object.__setattr__(self, "input_amplitudes", ia)
        object.__setattr__(self, "beam_amplitudes", ba)
        object.__setattr__(self, "phases", ph)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.concatenate([self.input_amplitudes, self.beam_amplitudes])

    def offsets(self, t: float) -> np.ndarray:
        """The 12 drift offsets at time ``t`` (5 params, 6 centroid, 1 size)."""
        arg = 2.0 * np.pi * t / self.period
        return self.amplitudes * (np.sin(arg + self.phases) - np.sin(self.phases))

    def rate_bound(self) -> float:
        """Analytic bound on the norm of d(offsets)/dt."""
        return float(2.0 * np.pi / self.period * np.linalg.norm(self.amplitudes))

    @classmethod
    def none(cls) -> "DriftSchedule":
        return cls()


def drift_trajectory(t: float, schedule: DriftSchedule, base_state: BeamState,
                     base_params) -> tuple[BeamState, MachineParams]:
    if t < 0:
        raise ValueError("drift time must be non-negative")
    ranges = base_params.ranges if isinstance(base_params, MachineParams) else None
    p0 = np.asarray(base_params, dtype=float)
    off = schedule.offsets(t)
    params = MachineParams(p0 + off[:5], ranges)
    scale = (1.0 + off[11]) ** 2
    state = BeamState(base_state.weights, base_state.means + off[5:11], base_state.covs * scale)
    return state, params


def drift_rate_estimate(schedule: DriftSchedule, n: int = 1000, seed: int = 0,
                        h: float | None = None) -> float:
    """Largest central-difference rate of the drift offsets over random times."""
    rng = np.random.default_rng(seed)
    h = schedule.period * 1e-5 if h is None else h
    ts = rng.uniform(h, 3.0 * schedule.period, size=n)
    return max(
        float(np.linalg.norm((schedule.offsets(t + h) - schedule.offsets(t - h)) / (2 * h)))
        for t in ts
    )
