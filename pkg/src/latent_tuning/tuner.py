"""Adaptive latent-space tuning against a drifting beam.

The controller loop sees one projection of the true beam (the observable
pair, (z, E) by default) through a ``MeasurementChannel`` and adjusts the
additive latent control of a frozen generative network until the
network's prediction of that projection matches. Hidden projections are
scored afterwards by ``evaluate_hidden``, which the loop never calls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .beamsim import (
    DriftSchedule,
    GeneratorConfig,
    drift_trajectory,
    initial_beam,
    project,
    project_all,
    transport,
)
from .beamsim.dataset import observe_input
from .core import X_XP, Y_YP, Z_E, AxisPair, ImageGrid, MachineParams, ParamRanges, ProjectionSet, ShapeError, mse
from .es import EsConfig, EsState, MeasurementFault, es_step
from .net import NetworkWeights, decode_batch, encode, inject_latent

log = logging.getLogger(__name__)

HIDDEN_PAIRS = (X_XP, Y_YP)


class TrueSystem:
    """The drifting beamline: initial beam and settings evolve with time."""

    def __init__(self, knobs, params, gen: GeneratorConfig, schedule: DriftSchedule | None = None):
        self.knobs = np.asarray(knobs, dtype=float)
        self.base_state = initial_beam(self.knobs)
        self.base_params = MachineParams(params, gen.param_ranges)
        self.gen = gen
        self.schedule = schedule or DriftSchedule.none()

    def state_at(self, t: float):
        return drift_trajectory(t, self.schedule, self.base_state, self.base_params)

    def final_state(self, t: float):
        state, params = self.state_at(t)
        return transport(state, params)

    def projection(self, t: float, pair: AxisPair) -> ImageGrid:
        n = self.gen.output_size
        return project(self.final_state(t), pair, n, n, self.gen.output_extent(pair))

    def projections(self, t: float, pairs=None) -> ProjectionSet:
        pairs = self.gen.pairs if pairs is None else pairs
        return project_all(self.final_state(t), pairs, self.gen.output_size, self.gen.extents)

    def input_image(self, t: float = 0.0) -> ImageGrid:
        state, _ = self.state_at(t)
        return observe_input(state, self.gen)


class MeasurementChannel:
    """Online diagnostic exposing exactly one projection of the true beam."""

    def __init__(self, system: TrueSystem, pair: AxisPair = Z_E, noise: float = 0.0, seed: int = 0):
        self.pair = pair
        self.noise = float(noise)
        self._system = system
        self._rng = np.random.default_rng(seed)

    def measure(self, t: float) -> ImageGrid:
        img = self._system.projection(t, self.pair)
        if self.noise <= 0:
            return img
        # additive noise relative to the mean pixel, clipped to stay a density
        px = img.pixels + self.noise * img.pixels.mean() * self._rng.standard_normal(img.shape)
        return ImageGrid(np.maximum(px, 0.0), img.extent)


@dataclass(frozen=True)
class StaleGuess:
    image: ImageGrid
    params: MachineParams


def make_stale_guess(dataset) -> StaleGuess:
    """Pixelwise-mean input image and componentwise-mean settings of a dataset."""
    if len(dataset) == 0:
        raise ValueError("cannot form a stale guess from an empty dataset")
    img = np.mean(dataset.inputs, axis=0)
    img = img / img.sum()
    cfg = dataset.config
    return StaleGuess(ImageGrid(img, cfg.input_extent),
                      MachineParams(np.mean(dataset.params, axis=0), cfg.param_ranges))


def _channel_index(w: NetworkWeights, pair: AxisPair) -> int:
    try:
        return w.spec.axis_pairs.index(pair)
    except ValueError:
        raise ShapeError(f"network does not generate channel {pair}") from None


def cost_eval(weights: NetworkWeights, guess: StaleGuess, v_control, measured,
              pair: AxisPair = Z_E, scale: float = 1.0) -> float:
    """Observable-channel mismatch of the prediction at latent ``v_L + v_control``.

    Returns ``mse(predicted, measured) / scale``.
    """
    p = inject_latent(encode(guess.image, guess.params, weights), v_control)
    pred = decode_batch(p, weights)[0, _channel_index(weights, pair)]
    m = measured.pixels if isinstance(measured, ImageGrid) else np.asarray(measured, dtype=float)
    if m.shape != pred.shape:
        raise ShapeError(f"measured image {m.shape} does not match prediction {pred.shape}")
    if not np.all(np.isfinite(pred)):
        raise FloatingPointError("network prediction is not finite")
    return mse(pred, m) / scale


@dataclass
class TuningRun:
    weights: NetworkWeights
    guess: StaleGuess
    es: EsConfig
    steps: int = 5000
    snapshot_every: int = 50
    pair: AxisPair = Z_E


@dataclass
class Snapshot:
    step: int
    t: float
    v_control: np.ndarray
    prediction: np.ndarray  # mass-unit stack (N_c, N_im, N_im)


@dataclass
class TuningResult:
    t: np.ndarray
    cost: np.ndarray  # normalized observable cost per step
    raw_cost: np.ndarray
    v_control: np.ndarray  # (steps, N_L), value at which each cost was measured
    v_latent: np.ndarray  # encoder output for the stale guess
    snapshots: list = field(default_factory=list)
    baseline: np.ndarray | None = None  # untuned prediction stack
    cost_scale: float = 1.0
    fault: str | None = None
    pairs: tuple = ()

    def tail_mean_cost(self, fraction: float = 0.1) -> float:
        n = max(1, int(round(len(self.cost) * fraction)))
        return float(np.mean(self.cost[-n:]))

    @property
    def final_prediction(self) -> np.ndarray:
        return self.snapshots[-1].prediction


def adapt(run: TuningRun, channel: MeasurementChannel) -> TuningResult:
    """Close the loop: measure, compare, update the latent control.

    One measurement per ES step. The first raw cost normalizes all later
    ones. Predictions are recorded every ``snapshot_every`` steps and at the
    final step. A non-finite measurement or cost stops the loop; the
    partial result carries the reason in ``fault``.
    """
    w = run.weights
    ci = _channel_index(w, run.pair)
    v_lat = encode(run.guess.image, run.guess.params, w)
    baseline = decode_batch(v_lat, w)[0]
    state = EsState.start(np.zeros(w.spec.latent_dim))
    raw, snaps = [], []
    scale = None
    fault = None
    for step in range(run.steps):
        t = state.t
        pred = decode_batch(inject_latent(v_lat, state.v), w)[0]
        try:
            measured = channel.measure(t)
            m = measured.pixels if isinstance(measured, ImageGrid) else np.asarray(measured, float)
            c = mse(pred[ci], m)
            if scale is None:
                if not np.isfinite(c):
                    raise MeasurementFault(f"measurement fault: non-finite cost at t={t}")
                scale = c if c > 0 else 1.0
            if step % run.snapshot_every == 0 or step == run.steps - 1:
                snaps.append(Snapshot(step, t, state.v.copy(), pred))
            state = es_step(state, c / scale, run.es)
        except (MeasurementFault, ValueError) as exc:
            fault = str(exc)
            log.error("tuning halted at step %d: %s", step, fault)
            break
        raw.append(c)
    h = state.history
    return TuningResult(
        t=np.array([e[0] for e in h]),
        cost=np.array([e[1] for e in h]),
        raw_cost=np.array(raw),
        v_control=np.array([e[2] for e in h]).reshape(len(h), w.spec.latent_dim),
        v_latent=v_lat,
        snapshots=snaps,
        baseline=baseline,
        cost_scale=scale or 1.0,
        fault=fault,
        pairs=tuple(w.spec.axis_pairs),
    )


@dataclass
class HiddenEval:
    steps: np.ndarray
    t: np.ndarray
    tuned: dict  # pair -> mse series at snapshot times
    baseline: dict  # pair -> mse of the untuned prediction at the same times

    def final(self, pair: AxisPair, fraction: float = 0.1) -> tuple[float, float]:
        """Mean (tuned, baseline) mse over the last ``fraction`` of snapshots."""
        n = max(1, int(round(len(self.t) * fraction)))
        return float(np.mean(self.tuned[pair][-n:])), float(np.mean(self.baseline[pair][-n:]))


def evaluate_hidden(result: TuningResult, system: TrueSystem, pairs=HIDDEN_PAIRS,
                    dt: float | None = None) -> HiddenEval:
    """Score recorded predictions of the hidden pairs against the oracle."""
    if dt is not None:
        for s in result.snapshots:
            if abs(s.t - s.step * dt) > 1e-6 * max(1.0, abs(s.t)):
                raise ValueError(f"timestamp mismatch: snapshot {s.step} at t={s.t}")
    tuned = {p: [] for p in pairs}
    base = {p: [] for p in pairs}
    idx = {p: list(result.pairs).index(p) for p in pairs}
    for s in result.snapshots:
        truth = system.projections(s.t, pairs)
        for p in pairs:
            tuned[p].append(mse(s.prediction[idx[p]], truth[p]))
            base[p].append(mse(result.baseline[idx[p]], truth[p]))
    return HiddenEval(
        steps=np.array([s.step for s in result.snapshots]),
        t=np.array([s.t for s in result.snapshots]),
        tuned={p: np.array(v) for p, v in tuned.items()},
        baseline={p: np.array(v) for p, v in base.items()},
    )


@dataclass
class ShiftScenario:
    name: str
    multiplier: float
    params: np.ndarray  # (n, 5) sampled settings
    knobs: np.ndarray  # (n, 6) sampled initial-beam knobs
    gen: GeneratorConfig

    def system(self, i: int = 0, schedule: DriftSchedule | None = None) -> TrueSystem:
        return TrueSystem(self.knobs[i], self.params[i], self.gen, schedule)

    def out_of_range(self) -> np.ndarray:
        """Per sample: does any setting or knob leave its training range?"""
        pr, kr = self.gen.param_ranges, self.gen.knob_ranges
        return ~(np.all(pr.contains(self.params), axis=1) & np.all(kr.contains(self.knobs), axis=1))

    def input_images(self, warnings: list | None = None) -> list[ImageGrid]:
        return [observe_input(initial_beam(k), self.gen, warnings) for k in self.knobs]


def _shifted(ranges: ParamRanges, mult: float, direction, jitter: float, n: int, rng):
    nominal = ranges.center + mult * ranges.half_width * np.asarray(direction, dtype=float)
    spread = jitter * ranges.half_width
    return nominal + rng.uniform(-spread, spread, size=(n, len(nominal)))


SCENARIO_NAMES = ("none", "near", "far")


def make_scenario(gen: GeneratorConfig, name: str, n: int = 1000, seed: int = 0,
                  near: float = 1.1, far: float = 1.5, jitter: float = 0.1,
                  param_direction=None, knob_direction=None) -> ShiftScenario:
    """One test source population: ``none`` samples the training box itself."""
    if name not in SCENARIO_NAMES:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}")
    pdir = np.ones(5) if param_direction is None else param_direction
    kdir = np.ones(len(gen.knob_ranges.lo)) if knob_direction is None else knob_direction
    mult, jit = {"none": (0.0, 1.0), "near": (near, jitter), "far": (far, jitter)}[name]
    rng = np.random.default_rng([seed, SCENARIO_NAMES.index(name)])
    params = _shifted(gen.param_ranges, mult, pdir, jit, n, rng)
    knobs = _shifted(gen.knob_ranges, mult, kdir, jit, n, rng)
    return ShiftScenario(name, mult, params, knobs, gen)


def shift_scenarios(gen: GeneratorConfig, near: float = 1.1, far: float = 1.5, n: int = 1000,
                    seed: int = 0, param_direction=None, knob_direction=None,
                    jitter: float = 0.1) -> list[ShiftScenario]:
    """Near and far out-of-distribution test sources.

    Each quantity is centered at ``center + multiplier * half_width * direction``
    and jittered uniformly by ``jitter * half_width``; directions default
    to +1 (the upper edge of every training range).
    """
    return [make_scenario(gen, name, n, seed, near, far, jitter, param_direction, knob_direction)
            for name in ("near", "far")]


def no_shift_system(guess: StaleGuess, gen: GeneratorConfig,
                    schedule: DriftSchedule | None = None) -> TrueSystem:
    """In-distribution source at the center of the training ranges."""
    return TrueSystem(gen.knob_ranges.center, guess.params.values, gen, schedule)


def dither_allowance(weights: NetworkWeights, guess: StaleGuess, measured, es: EsConfig,
                     pair: AxisPair = Z_E, n_probes: int = 16, seed: int = 0) -> float:
    """Largest raw cost met when the latent sits one dither amplitude off center.

    Probes ``v_control = s * sqrt(alpha / w_i)`` for random sign vectors ``s``;
    this is the cost scale the dither itself explores around ``v_control = 0``.
    """
    amp = np.sqrt(es.alpha / es.omegas)
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(n_probes, es.dim))
    return max(cost_eval(weights, guess, s * amp, measured, pair) for s in signs)
