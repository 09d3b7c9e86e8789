"""Shared domain types and the image error metric.

Pixel values are probability mass per cell, so a normalized grid sums to
one. Grids are stored with shape ``(height, width)``: columns run along the
first axis of the pair, rows along the second.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

AXES = ("x", "x'", "y", "y'", "z", "E")
AXIS_INDEX = {name: i for i, name in enumerate(AXES)}

# listing order of the 15 phase-space projections
_PAIR_ORDER = (
    ("x", "y"), ("x", "z"), ("x", "x'"), ("x", "y'"), ("x", "E"),
    ("x'", "y"), ("x'", "z"), ("x'", "y'"), ("x'", "E"),
    ("y", "z"), ("y", "y'"), ("y", "E"),
    ("y'", "z"), ("y'", "E"),
    ("z", "E"),
)


class ShapeError(ValueError):
    pass


class DegenerateDensityError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class AxisPair:
    first: str
    second: str

    def __post_init__(self):
        if self.first not in AXIS_INDEX or self.second not in AXIS_INDEX:
            raise ValueError(f"unknown axis label in ({self.first}, {self.second})")
        if AXIS_INDEX[self.first] >= AXIS_INDEX[self.second]:
            raise ValueError(
                f"axis pair must be ordered as {AXES}, got ({self.first}, {self.second})"
            )

    @property
    def indices(self) -> tuple[int, int]:
        return AXIS_INDEX[self.first], AXIS_INDEX[self.second]

    @property
    def key(self) -> str:
        return f"{self.first},{self.second}"

    @classmethod
    def parse(cls, text: str) -> "AxisPair":
        a, b = (s.strip() for s in text.strip("() ").split(","))
        return cls(a, b)

    def __str__(self):
        return f"({self.first},{self.second})"


def enumerate_axis_pairs() -> list[AxisPair]:
    """All 15 axis pairs in canonical order, (x,y) first and (z,E) last."""
    return [AxisPair(a, b) for a, b in _PAIR_ORDER]


def pair_rank(pair: AxisPair) -> int:
    return _PAIR_ORDER.index((pair.first, pair.second))


XY = AxisPair("x", "y")
X_XP = AxisPair("x", "x'")
Y_YP = AxisPair("y", "y'")
Z_E = AxisPair("z", "E")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ImageGrid:
    """A 2D density projection on a fixed physical extent.

    ``extent`` is ``((first_min, first_max), (second_min, second_max))``.
    """

    pixels: np.ndarray
    extent: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 1.0), (0.0, 1.0))

    def __post_init__(self):
        px = _frozen(self.pixels)
        if px.ndim != 2:
            raise ShapeError(f"pixels must be 2D, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixels must be finite")
        if np.any(px < 0):
            raise ValueError("pixels must be non-negative")
        object.__setattr__(self, "pixels", px)
        ext = tuple((float(lo), float(hi)) for lo, hi in self.extent)
        object.__setattr__(self, "extent", ext)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates along the first and second axis."""
        (x0, x1), (y0, y1) = self.extent
        xe = np.linspace(x0, x1, self.width + 1)
        ye = np.linspace(y0, y1, self.height + 1)
        return 0.5 * (xe[1:] + xe[:-1]), 0.5 * (ye[1:] + ye[:-1])

    def centroid(self) -> tuple[float, float]:
        xc, yc = self.centers()
        total = self.pixels.sum()
        return (
            float((self.pixels.sum(axis=0) * xc).sum() / total),
            float((self.pixels.sum(axis=1) * yc).sum() / total),
        )

    def to_record(self) -> dict:
        """Row-major structured record (JSON-friendly)."""
        return {
            "width": self.width,
            "height": self.height,
            "extent": [list(self.extent[0]), list(self.extent[1])],
            "pixels": self.pixels.ravel().tolist(),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "ImageGrid":
        px = np.asarray(rec["pixels"], dtype=float)
        if px.size != rec["width"] * rec["height"]:
            raise ShapeError(
                f"record holds {px.size} pixels, expected {rec['width']}x{rec['height']}"
            )
        ext = rec["extent"]
        return cls(px.reshape(rec["height"], rec["width"]), (tuple(ext[0]), tuple(ext[1])))


def mse(a: ImageGrid | np.ndarray, b: ImageGrid | np.ndarray) -> float:
    """Mean squared pixel difference between two equal-shape grids."""
    pa = a.pixels if isinstance(a, ImageGrid) else np.asarray(a, dtype=float)
    pb = b.pixels if isinstance(b, ImageGrid) else np.asarray(b, dtype=float)
    if pa.shape != pb.shape:
        raise ShapeError(f"cannot compare grids of shape {pa.shape} and {pb.shape}")
    d = pa - pb
    return float(np.mean(d * d))


def normalize(g: ImageGrid) -> ImageGrid:
    total = g.pixels.sum()
    if not total > 0:
        raise DegenerateDensityError("degenerate density: grid has no positive mass")
    return ImageGrid(g.pixels / total, g.extent)


@dataclass(frozen=True)
class ProjectionSet:
    """Stack of same-shape projections keyed by axis pair."""

    channels: Mapping[AxisPair, ImageGrid]

    def __post_init__(self):
        ordered = dict(sorted(self.channels.items(), key=lambda kv: pair_rank(kv[0])))
        shapes = {g.shape for g in ordered.values()}
        if len(shapes) > 1:
            raise ShapeError(f"projection channels have mixed shapes {sorted(shapes)}")
        object.__setattr__(self, "channels", ordered)

    def __getitem__(self, pair: AxisPair) -> ImageGrid:
        try:
            return self.channels[pair]
        except KeyError:
            raise KeyError(f"channel {pair} not in set {self.pairs}") from None

    def __iter__(self) -> Iterator[AxisPair]:
        return iter(self.channels)

    def __len__(self):
        return len(self.channels)

    @property
    def pairs(self) -> list[AxisPair]:
        return list(self.channels)

    def stack(self) -> np.ndarray:
        """Array of shape (n_channels, height, width) in canonical order."""
        return np.stack([g.pixels for g in self.channels.values()])

    @classmethod
    def from_stack(cls, stack, pairs: Sequence[AxisPair], extents) -> "ProjectionSet":
        stack = np.asarray(stack, dtype=float)
        if stack.shape[0] != len(pairs):
            raise ShapeError(f"stack has {stack.shape[0]} channels, {len(pairs)} pairs given")
        return cls({p: ImageGrid(s, e) for p, s, e in zip(pairs, stack, extents)})


@dataclass(frozen=True)
class ParamRanges:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.lo), _frozen(self.hi)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("ranges need matching shapes and lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def contains(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return (v >= self.lo) & (v <= self.hi)


PARAM_NAMES = ("gun_energy", "gun_phase", "buncher_field", "buncher_phase", "solenoid")


@dataclass(frozen=True)
class MachineParams:
    """The five accelerator settings, with their declared training ranges."""

    values: np.ndarray
    ranges: ParamRanges | None = field(default=None, compare=False)

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (5,):
            raise ShapeError(f"machine params must have 5 entries, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def out_of_range(self) -> bool:
        if self.ranges is None:
            return False
        return not bool(np.all(self.ranges.contains(self.values)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

