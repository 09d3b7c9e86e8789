"""Independent oracles shared by several test files."""

import numpy as np

from latent_tuning.beamsim import (
    DEFAULT_EXTENTS,
    DEFAULT_KNOB_RANGES,
    DEFAULT_PARAM_RANGES,
    histogram,
    initial_beam,
    project,
    transport,
)
from latent_tuning.core import enumerate_axis_pairs

MIN_EXPECTED = 5.0


def histogram_z_scores(counts: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Per-bin |count - expected| in units of the binomial sampling error.

    Bins expecting fewer than five counts, where the normal approximation
    of a count fails, are pooled into one tail bin whose score comes last.
    """
    n = counts.sum()
    expected = n * masses
    dense = expected >= MIN_EXPECTED
    z = np.abs(counts[dense] - expected[dense]) / np.sqrt(n * masses[dense] * (1 - masses[dense]))
    p_tail = masses[~dense].sum()
    z_tail = abs(counts[~dense].sum() - n * p_tail) / np.sqrt(max(n * p_tail * (1 - p_tail), 1.0))
    return np.append(z, z_tail)


def projection_case(case: int, size: int = 32):
    """Seeded (transported beam, pair, extent, analytic image) for the sampling check."""
    rng = np.random.default_rng([2024, case])
    knobs = rng.uniform(DEFAULT_KNOB_RANGES.lo, DEFAULT_KNOB_RANGES.hi)
    params = rng.uniform(DEFAULT_PARAM_RANGES.lo, DEFAULT_PARAM_RANGES.hi)
    pair = enumerate_axis_pairs()[rng.integers(15)]
    state = transport(initial_beam(knobs), params)
    ext = (DEFAULT_EXTENTS[pair.first], DEFAULT_EXTENTS[pair.second])
    return state, pair, ext, project(state, pair, size, size, ext).pixels


def sampled_histogram(state, pair, ext, n: int, seed: int, size: int = 32) -> np.ndarray:
    return histogram(state.sample_qmc(n, seed=seed), pair, size, size, ext)
