"""Adam optimizer and the stepped learning-rate training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import NetworkSpec, NetworkWeights, backward, batch_loss, init_weights

log = logging.getLogger(__name__)

# (epochs, learning rate) stages: 3 passes at 1e-3, 3 at 1e-4, 1 at 1e-5
DEFAULT_SCHEDULE = ((3, 1e-3), (3, 1e-4), (1, 1e-5))
DIVERGENCE_LIMIT = 1e6


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, w: NetworkWeights, lr: float = 1e-3) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in w.arrays.items()},
            v={k: np.zeros_like(a) for k, a in w.arrays.items()},
            lr=lr,
        )


def adam_step(w: NetworkWeights, grads: dict, state: AdamState) -> tuple[NetworkWeights, AdamState]:
    """One bias-corrected Adam update; returns new weights and a new state."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m, v, new = {}, {}, {}
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, a in w.arrays.items():
        g = grads[k]
        m[k] = b1 * state.m[k] + (1.0 - b1) * g
        v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        new[k] = a - state.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + state.eps)
    return w.replace(new), AdamState(m, v, t, state.lr, b1, b2, state.eps)


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, last_good: NetworkWeights, epoch: int, step: int):
        super().__init__(msg)
        self.last_good = last_good
        self.epoch = epoch
        self.step = step


@dataclass
class TrainResult:
    weights: NetworkWeights
    initial_loss: float
    final_loss: float
    epochs: list = field(default_factory=list)  # (epoch, lr, mean batch loss)


def dataset_loss(dataset, w: NetworkWeights, chunk: int = 500) -> float:
    n = len(dataset.inputs)
    total = 0.0
    for s in range(0, n, chunk):
        sl = slice(s, s + chunk)
        k = len(dataset.inputs[sl])
        total += k * batch_loss(dataset.inputs[sl], dataset.params[sl], dataset.targets[sl], w)
    return total / n


def train(dataset, spec: NetworkSpec, schedule=DEFAULT_SCHEDULE, batch_size: int = 10,
          seed: int = 0, weights: NetworkWeights | None = None, callback=None) -> TrainResult:
    """Fit the encoder-decoder with the latent control held at zero.

    Each epoch visits a seeded permutation of the dataset in mini-batches.
    Raises ``TrainingDiverged`` (carrying the last finite weights) when a
    batch loss exceeds 1e6 or stops being finite.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    w = weights or init_weights(spec, seed)
    rng = np.random.default_rng(seed + 1)
    initial = dataset_loss(dataset, w)
    log.info("initial loss %.6g over %d samples", initial, len(dataset))
    state = AdamState.zeros_like(w)
    result = TrainResult(w, initial, initial)
    n = len(dataset)
    epoch = 0
    for n_epochs, lr in schedule:
        state.lr = lr
        for _ in range(n_epochs):
            order = rng.permutation(n)
            losses = []
            for step, s in enumerate(range(0, n, batch_size)):
                idx = np.sort(order[s:s + batch_size])
                try:
                    loss, grads = backward(dataset.inputs[idx], dataset.params[idx],
                                           dataset.targets[idx], w)
                except ArithmeticError as exc:
                    raise TrainingDiverged(str(exc), w, epoch, step) from exc
                if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                    raise TrainingDiverged(
                        f"loss {loss:.3g} at epoch {epoch} step {step} (lr {lr:g})", w, epoch, step
                    )
                w, state = adam_step(w, grads, state)
                losses.append(loss)
            mean_loss = float(np.mean(losses))
            result.epochs.append((epoch, lr, mean_loss))
            log.info("epoch %d lr %g loss %.6g", epoch, lr, mean_loss)
            if callback is not None:
                callback(epoch, lr, mean_loss, w)
            epoch += 1
    result.weights = w
    result.final_loss = dataset_loss(dataset, w)
    return result
