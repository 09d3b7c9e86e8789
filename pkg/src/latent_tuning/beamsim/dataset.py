"""Randomized (initial beam, settings) -> projections datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import XY, X_XP, Y_YP, Z_E, AxisPair, ImageGrid, MachineParams, ParamRanges, ProjectionSet
from .mixture import DEFAULT_KNOB_RANGES, BeamState, initial_beam
from .projection import project, project_all
from .transport import DEFAULT_PARAM_RANGES, transport

DEFAULT_PAIRS = (X_XP, Y_YP, Z_E)

DEFAULT_EXTENTS = {
    "x": (-5.0, 5.0),
    "x'": (-5.0, 5.0),
    "y": (-5.0, 5.0),
    "y'": (-5.0, 5.0),
    "z": (-6.5, 6.5),
    "E": (-6.0, 8.0),
}
DEFAULT_INPUT_EXTENT = ((-4.0, 4.0), (-4.0, 4.0))


@dataclass(frozen=True)
class GeneratorConfig:
    input_size: int = 16
    output_size: int = 32
    pairs: tuple[AxisPair, ...] = DEFAULT_PAIRS
    param_ranges: ParamRanges = DEFAULT_PARAM_RANGES
    knob_ranges: ParamRanges = DEFAULT_KNOB_RANGES
    input_extent: tuple = DEFAULT_INPUT_EXTENT
    extents: dict = field(default_factory=lambda: dict(DEFAULT_EXTENTS))

    def output_extent(self, pair: AxisPair):
        return (tuple(self.extents[pair.first]), tuple(self.extents[pair.second]))

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "output_size": self.output_size,
            "pairs": [p.key for p in self.pairs],
            "param_ranges": {"lo": self.param_ranges.lo.tolist(), "hi": self.param_ranges.hi.tolist()},
            "knob_ranges": {"lo": self.knob_ranges.lo.tolist(), "hi": self.knob_ranges.hi.tolist()},
            "input_extent": [list(e) for e in self.input_extent],
            "extents": {k: list(v) for k, v in self.extents.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(
            input_size=int(d["input_size"]),
            output_size=int(d["output_size"]),
            pairs=tuple(AxisPair.parse(k) for k in d["pairs"]),
            param_ranges=ParamRanges(**d["param_ranges"]),
            knob_ranges=ParamRanges(**d["knob_ranges"]),
            input_extent=tuple(tuple(e) for e in d["input_extent"]),
            extents={k: tuple(v) for k, v in d["extents"].items()},
        )


@dataclass(frozen=True)
class SampleRecord:
    input_image: ImageGrid
    params: MachineParams
    knobs: np.ndarray
    projections: ProjectionSet


def observe_input(state: BeamState, cfg: GeneratorConfig, warnings=None) -> ImageGrid:
    """The (x, y) image of an initial beam, as recorded at the gun."""
    return project(state, XY, cfg.input_size, cfg.input_size, cfg.input_extent, warnings)


def simulate(knobs, params, cfg: GeneratorConfig, warnings=None):
    """Input image and downstream projection set for one (beam, settings) pair."""
    state = initial_beam(knobs)
    img = observe_input(state, cfg, warnings)
    out = project_all(transport(state, params), cfg.pairs, cfg.output_size, cfg.extents, warnings)
    return img, out


class Dataset(Sequence):
    """Array-backed collection of ``SampleRecord``.

    ``inputs`` (n, H_in, W_in), ``params`` (n, 5), ``knobs`` (n, 6) and
    ``targets`` (n, C, H, W), all in probability-mass units.
    """

    def __init__(self, inputs, params, knobs, targets, config: GeneratorConfig, seed: int | None = None):
        self.inputs = np.asarray(inputs, dtype=float)
        self.params = np.asarray(params, dtype=float)
        self.knobs = np.asarray(knobs, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        self.config = config
        self.seed = seed
        n = len(self.inputs)
        if not (len(self.params) == len(self.knobs) == len(self.targets) == n):
            raise ValueError("dataset arrays have mismatched lengths")

    def __len__(self):
        return len(self.inputs)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.inputs[i], self.params[i], self.knobs[i], self.targets[i],
                           self.config, self.seed)
        cfg = self.config
        return SampleRecord(
            input_image=ImageGrid(self.inputs[i], cfg.input_extent),
            params=MachineParams(self.params[i], cfg.param_ranges),
            knobs=self.knobs[i].copy(),
            projections=ProjectionSet.from_stack(
                self.targets[i], cfg.pairs, [cfg.output_extent(p) for p in cfg.pairs]
            ),
        )

    def input_images(self) -> list[ImageGrid]:
        return [ImageGrid(x, self.config.input_extent) for x in self.inputs]


def generate_dataset(n: int, seed: int, config: GeneratorConfig | None = None,
                     param_ranges: ParamRanges | None = None,
                     knob_ranges: ParamRanges | None = None,
                     warnings: list | None = None) -> Dataset:
    """Sample ``n`` records; record ``i`` depends only on ``(seed, i)``."""
    if n < 1:
        raise ValueError("dataset size must be at least 1")
    cfg = config or GeneratorConfig()
    pr = param_ranges or cfg.param_ranges
    kr = knob_ranges or cfg.knob_ranges
    inputs = np.empty((n, cfg.input_size, cfg.input_size))
    targets = np.empty((n, len(cfg.pairs), cfg.output_size, cfg.output_size))
    params = np.empty((n, 5))
    knobs = np.empty((n, len(kr.lo)))
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        knobs[i] = rng.uniform(kr.lo, kr.hi)
        params[i] = rng.uniform(pr.lo, pr.hi)
        img, out = simulate(knobs[i], params[i], cfg, warnings)
        inputs[i] = img.pixels
        targets[i] = out.stack()
    return Dataset(inputs, params, knobs, targets, cfg, seed)
