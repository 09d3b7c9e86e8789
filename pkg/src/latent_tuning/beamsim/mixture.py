"""Gaussian-mixture beams in 6D phase space (x, x', y, y', z, E)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from ..core import ParamRanges


class InvalidBeamError(ValueError):
    pass


@dataclass(frozen=True)
class BeamState:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, 6)
    covs: np.ndarray  # (K, 6, 6)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        mu = np.array(self.means, dtype=float)
        cov = np.array(self.covs, dtype=float)
        k = w.shape[0]
        if w.ndim != 1 or mu.shape != (k, 6) or cov.shape != (k, 6, 6):
            raise InvalidBeamError(
                f"inconsistent mixture shapes: weights {w.shape}, means {mu.shape}, covs {cov.shape}"
            )
        if np.any(w <= 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidBeamError(f"weights must lie in (0, 1] and sum to 1, got {w}")
        for i, c in enumerate(cov):
            if np.max(np.abs(c - c.T)) > 1e-10:
                raise InvalidBeamError(f"covariance of component {i} is not symmetric")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                raise InvalidBeamError(f"covariance of component {i} is not positive definite") from None
        for a in (w, mu, cov):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` iid phase-space points, shape (n, 6)."""
        counts = rng.multinomial(n, self.weights)
        out = []
        for c, mu, cov in zip(counts, self.means, self.covs):
            L = np.linalg.cholesky(cov)
            out.append(mu + rng.standard_normal((c, 6)) @ L.T)
        return np.concatenate(out)

    def sample_qmc(self, n: int, seed: int = 0) -> np.ndarray:
        """``n`` phase-space points from scrambled Sobol sequences, shape (n, 6).

        Components receive ``n * weight`` points (largest remainder
        rounding), each from its own 6D Sobol stream mapped through the
        normal quantile and the component's Cholesky factor. Histograms
        converge faster than with ``sample``.
        """
        exact = n * self.weights
        counts = np.floor(exact).astype(int)
        short = n - counts.sum()
        counts[np.argsort(counts - exact, kind="stable")[:short]] += 1
        out = []
        for i, (c, mu, cov) in enumerate(zip(counts, self.means, self.covs)):
            with warnings.catch_warnings():  # counts are not powers of two
                warnings.simplefilter("ignore", UserWarning)
                u = qmc.Sobol(6, scramble=True, seed=np.random.default_rng([seed, i])).random(c)
            z = ndtri(np.clip(u, 1e-16, 1.0 - 1e-16))
            out.append(mu + z @ np.linalg.cholesky(cov).T)
        return np.concatenate(out)

    def equals(self, other: "BeamState") -> bool:
        return (
            np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.covs, other.covs)
        )


KNOB_NAMES = ("spot", "sat_sep", "sat_frac", "aspect", "x0", "y0")

# default sampling ranges of the randomized initial beam
DEFAULT_KNOB_RANGES = ParamRanges(
    lo=[0.8, 0.8, 0.15, 0.8, -0.3, -0.3],
    hi=[1.2, 1.6, 0.35, 1.2, 0.3, 0.3],
)

_DIVERGENCE = 0.5
_ENERGY_SPREAD = 0.4
_SAT_SCALE = 0.5
_CHIRP = 0.2
# off-axis emission shifts arrival time (x0) and energy (y0)
_EMIT_Z = 1.0
_EMIT_E = 1.0
# satellite offset direction per unit separation: (x, x', y, y', z, E)
_SAT_DIR = np.array([1.0, 0.0, 0.5, 0.0, 0.8, -0.3])


def initial_beam(knobs) -> BeamState:
    """Three-component photoinjector-like beam built from 6 knobs.

    A core Gaussian plus two mirror-image satellites. Every knob leaves a
    footprint in the longitudinal plane: the satellites are displaced
    jointly in (x, y) and (z, E), the spot size sets both the transverse
    size and the bunch length, the transverse aspect sets the uncorrelated
    energy spread, and an off-axis centroid shifts arrival time and energy.
    Every knob is also visible in the (x, y) projection, so a beam is fully
    determined by its input image.
    """
    spot, sep, frac, aspect, x0, y0 = np.asarray(knobs, dtype=float)
    if spot <= 0 or aspect <= 0 or not 0 < frac < 1:
        raise InvalidBeamError(f"unphysical beam knobs {knobs}")

    def cov(scale):
        c = np.zeros((6, 6))
        c[0, 0] = (scale * spot) ** 2
        c[1, 1] = (scale * _DIVERGENCE) ** 2
        c[2, 2] = (scale * spot * aspect) ** 2
        c[3, 3] = (scale * _DIVERGENCE) ** 2
        sz2 = (scale * spot) ** 2
        c[4, 4] = sz2
        c[4, 5] = c[5, 4] = _CHIRP * sz2
        c[5, 5] = (scale * _ENERGY_SPREAD / aspect) ** 2 + _CHIRP**2 * sz2
        return c

    center = np.array([x0, 0.0, y0, 0.0, _EMIT_Z * x0, _EMIT_E * y0])
    offset = sep * _SAT_DIR
    return BeamState(
        weights=[1.0 - frac, frac / 2, frac / 2],
        means=[center, center + offset, center - offset],
        covs=[cov(1.0), cov(_SAT_SCALE), cov(_SAT_SCALE)],
    )
