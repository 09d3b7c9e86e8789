"""Exact pixel masses of 2D marginals of a Gaussian mixture."""

from __future__ import annotations

import logging

import numpy as np

from ..core import AxisPair, ImageGrid, ProjectionSet
from ._bvn import bvn_cdf
from .mixture import BeamState

log = logging.getLogger(__name__)

COVERAGE_MIN = 0.99


class CollapsedProjectionError(ValueError):
    pass


def _component_masses(mu, cov, xe, ye):
    """Cell masses of one bivariate normal on a rectilinear grid.

    Returns shape (len(ye)-1, len(xe)-1) and the total mass inside the grid.
    """
    sx, sy = np.sqrt(cov[0, 0]), np.sqrt(cov[1, 1])
    r = cov[0, 1] / (sx * sy)
    u = (xe - mu[0]) / sx
    v = (ye - mu[1]) / sy
    F = bvn_cdf(u[None, :], v[:, None], r)  # F[j, i] = P(X <= xe_i, Y <= ye_j)
    cells = F[1:, 1:] - F[1:, :-1] - F[:-1, 1:] + F[:-1, :-1]
    return np.maximum(cells, 0.0)


def project(state: BeamState, pair: AxisPair, width: int, height: int, extent,
            warnings: list | None = None) -> ImageGrid:
    """Normalized 2D marginal of ``state`` on ``pair``.

    Pixel (j, i) holds the exact Gaussian mass of the cell spanning bin i of
    the first axis and bin j of the second, weight-summed over components and
    renormalized over the extent. Extents covering under 99% of the mass on
    either axis are appended to ``warnings`` when given, logged otherwise.
    """
    (x0, x1), (y0, y1) = extent
    xe = np.linspace(x0, x1, width + 1)
    ye = np.linspace(y0, y1, height + 1)
    i, j = pair.indices
    idx = np.array([i, j])
    img = np.zeros((height, width))
    for w, mu, cov in zip(state.weights, state.means, state.covs):
        c2 = cov[np.ix_(idx, idx)]
        if np.linalg.eigvalsh(c2)[0] < 1e-12:
            raise CollapsedProjectionError(f"collapsed projection on {pair}")
        img += w * _component_masses(mu[idx], c2, xe, ye)
    total = img.sum()
    coverage = _axis_coverage(state, idx, ((x0, x1), (y0, y1)))
    if min(coverage) < COVERAGE_MIN:
        msg = f"extent of {pair} covers only {min(coverage):.4f} of the beam mass"
        if warnings is not None:
            warnings.append(msg)
        else:
            log.warning(msg)
    if not total > 0:
        raise CollapsedProjectionError(f"no beam mass inside the extent of {pair}")
    return ImageGrid(img / total, extent)


def _axis_coverage(state, idx, extent):
    from scipy.special import ndtr

    out = []
    for ax, (lo, hi) in zip(idx, extent):
        s = np.sqrt(state.covs[:, ax, ax])
        m = state.means[:, ax]
        out.append(float(state.weights @ (ndtr((hi - m) / s) - ndtr((lo - m) / s))))
    return out


def project_all(state: BeamState, pairs, size: int, extents: dict,
                warnings: list | None = None) -> ProjectionSet:
    """Projection set of ``state`` on ``pairs``; ``extents`` maps axis label -> (lo, hi)."""
    return ProjectionSet({
        p: project(state, p, size, size, (extents[p.first], extents[p.second]), warnings)
        for p in pairs
    })


def histogram(samples: np.ndarray, pair: AxisPair, width: int, height: int, extent) -> np.ndarray:
    """Counts of phase-space samples per cell, same layout as ``project``."""
    i, j = pair.indices
    (x0, x1), (y0, y1) = extent
    h, _, _ = np.histogram2d(
        samples[:, j], samples[:, i], bins=(height, width), range=((y0, y1), (x0, x1))
    )
    return h
