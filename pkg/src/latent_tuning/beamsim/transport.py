"""Parameter-dependent linear transport through the beamline analog.

The drift of length L = p1 is energy dependent: it adds dispersion
(x and y move by 0.3 L per unit energy) and an energy-dependent slip of
the arrival time (z moves by 0.5 L per unit energy). Otherwise the map is
block diagonal in (x, x', y, y') and (z, E). Composition order, applied to
a particle left to right:

    transverse:    solenoid(K) -> drift(L) with dispersion
    longitudinal:  slip(L) -> rotation(theta) -> chirp shear in a frame rotated by phi

with K = p5 / (1 + p1 / 2), theta = 0.6 p2, chirp h = p3, phi = p4. The
all-zero parameter vector is neutral: it yields the identity map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import MachineParams, ParamRanges
from .mixture import BeamState

NEUTRAL_PARAMS = np.zeros(5)

DEFAULT_PARAM_RANGES = ParamRanges(
    lo=[0.6, -0.5, 0.2, -0.5, 0.4],
    hi=[1.4, 0.5, 1.0, 0.5, 1.2],
)

_THETA_GAIN = 0.6
_SLIP = 0.5
_SOL_ROT = 0.5
_SOL_FOCUS = 0.8
_DISPERSION = 0.3


class TransportError(ValueError):
    pass


@dataclass(frozen=True)
class TransportMap:
    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        c = np.array(self.offset, dtype=float)
        if m.shape != (6, 6) or c.shape != (6,):
            raise TransportError(f"bad map shapes {m.shape}, {c.shape}")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise TransportError("transport matrix is not invertible")
        m.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", c)

    def then(self, other: "TransportMap") -> "TransportMap":
        """Apply ``self`` first, then ``other``."""
        return TransportMap(other.matrix @ self.matrix, other.matrix @ self.offset + other.offset)


def _rot(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, s], [-s, c]])


def _values(params) -> np.ndarray:
    p = np.asarray(params.values if isinstance(params, MachineParams) else params, dtype=float)
    if p.shape != (5,):
        raise TransportError(f"expected 5 machine parameters, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise TransportError(f"non-finite machine parameters {p}")
    return p


def solenoid_strength(p1: float, p5: float) -> float:
    return p5 / (1.0 + 0.5 * p1)


def map_from_params(params) -> TransportMap:
    p1, p2, p3, p4, p5 = _values(params)
    if 1.0 + 0.5 * p1 <= 0:
        raise TransportError(f"gun energy setting {p1} outside the physical domain")
    A = np.eye(6)

    k = solenoid_strength(p1, p5)
    # solenoid: x-y rotation of both position and angle, then thin-lens focus
    phi = _SOL_ROT * k
    c, s = np.cos(phi), np.sin(phi)
    rot = np.zeros((4, 4))
    rot[[0, 1, 2, 3], [0, 1, 2, 3]] = c
    rot[0, 2] = rot[1, 3] = s
    rot[2, 0] = rot[3, 1] = -s
    lens = np.eye(4)
    lens[1, 0] = lens[3, 2] = -_SOL_FOCUS * k
    drift = np.eye(4)
    drift[0, 1] = drift[2, 3] = p1
    A[:4, :4] = drift @ lens @ rot
    A[0, 5] = A[2, 5] = _DISPERSION * p1

    shear = np.array([[1.0, 0.0], [p3, 1.0]])
    chirp = _rot(-p4) @ shear @ _rot(p4)
    slip = np.array([[1.0, _SLIP * p1], [0.0, 1.0]])
    A[4:, 4:] = chirp @ _rot(_THETA_GAIN * p2) @ slip
    return TransportMap(A, np.zeros(6))


def transport(state: BeamState, params) -> BeamState:
    """Push every mixture component through the linear map of ``params``."""
    tm = params if isinstance(params, TransportMap) else map_from_params(params)
    A, c = tm.matrix, tm.offset
    means = state.means @ A.T + c
    covs = A @ state.covs @ A.T
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    return BeamState(state.weights, means, covs)



def map_distance(a: TransportMap, b: TransportMap) -> float:
    """Operator-norm distance of matrices plus Euclidean distance of offsets."""
    return float(np.linalg.norm(a.matrix - b.matrix, 2) + np.linalg.norm(a.offset - b.offset))


@dataclass(frozen=True)
class SystemBounds:
    """Regularity constants the drifting system is required to respect."""

    lipschitz_L: float = 3.0
    variation_M: float = 4.0
    drift_rate_MF: float = 0.05

    def __post_init__(self):
        for name in ("lipschitz_L", "variation_M", "drift_rate_MF"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def sample_params(ranges: ParamRanges, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(ranges.lo, ranges.hi, size=(n, len(ranges.lo)))


def lipschitz_estimate(ranges: ParamRanges, n_pairs: int = 1000, seed: int = 0,
                       step: float = 1e-3) -> float:
    """Largest finite-difference slope of the map over random nearby pairs."""
    rng = np.random.default_rng(seed)
    p = sample_params(ranges, n_pairs, rng)
    d = rng.standard_normal(p.shape)
    d *= step / np.linalg.norm(d, axis=1, keepdims=True)
    return max(
        map_distance(map_from_params(a), map_from_params(a + da)) / step for a, da in zip(p, d)
    )


def variation_estimate(ranges: ParamRanges, n_pairs: int = 1000, seed: int = 0) -> float:
    """Largest operator-norm difference between maps of random setting pairs."""
    rng = np.random.default_rng(seed)
    a = sample_params(ranges, n_pairs, rng)
    b = sample_params(ranges, n_pairs, rng)
    return max(
        float(np.linalg.norm(map_from_params(x).matrix - map_from_params(y).matrix, 2))
        for x, y in zip(a, b)
    )
