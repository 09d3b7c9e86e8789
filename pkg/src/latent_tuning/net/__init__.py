"""From-scratch convolutional encoder-decoder."""

from .layers import activate, activation_grad, conv2d_forward
from .model import (
    NetworkSpec,
    NetworkWeights,
    NonFiniteLossError,
    backward,
    batch_loss,
    decode,
    decode_batch,
    decode_vjp,
    encode,
    encode_batch,
    init_weights,
    inject_latent,
    zero_weights,
)
from .train import DEFAULT_SCHEDULE, AdamState, TrainingDiverged, TrainResult, adam_step, dataset_loss, train
