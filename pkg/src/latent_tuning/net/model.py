"""Encoder-decoder generative network with an injectable latent control.

Encoder: stride-2 convolutions -> flatten -> concatenate the normalized
machine settings -> dense layers -> latent vector (identity activation).
Decoder: dense layers -> reshape to a small image -> transpose convolutions
(zero-insertion upsampling followed by a 3x3 convolution) -> one softplus
channel per configured projection.

Internally images are carried in density units (mass times pixel count),
so a uniform image has pixel value one. ``encode`` and ``decode`` speak
probability-mass units at their boundaries.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, asdict
from typing import Mapping

import numpy as np

from ..core import AxisPair, ImageGrid, MachineParams, ProjectionSet, ShapeError
from . import layers as L


@dataclass(frozen=True)
class NetworkSpec:
    input_size: int = 16
    n_params: int = 5
    conv_filters: tuple[int, ...] = (16, 32)
    enc_dense: tuple[int, ...] = (128,)
    latent_dim: int = 8
    dec_dense: tuple[int, ...] = (128,)
    dec_image: tuple[int, int, int] = (8, 8, 8)  # channels, height, width
    tconv_filters: tuple[int, ...] = (16,)
    output_size: int = 32
    pairs: tuple[str, ...] = ("x,x'", "y,y'", "z,E")
    hidden_activation: str = "leaky_relu"
    output_activation: str = "softplus"
    param_center: tuple[float, ...] = (1.0, 0.0, 0.6, 0.0, 0.8)
    param_scale: tuple[float, ...] = (0.4, 0.5, 0.4, 0.5, 0.4)

    def __post_init__(self):
        for name in ("conv_filters", "enc_dense", "dec_dense", "dec_image", "tconv_filters",
                     "pairs", "param_center", "param_scale"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.param_center) != self.n_params or len(self.param_scale) != self.n_params:
            raise ShapeError("param normalization must have n_params entries")
        n_up = len(self.tconv_filters) + 1
        ch, h, w = self.dec_image
        if h != w or h * 2**n_up != self.output_size:
            raise ShapeError(
                f"decoder image {h}x{w} upsampled {n_up} times does not reach {self.output_size}"
            )
        for p in self.pairs:
            AxisPair.parse(p)

    @property
    def n_channels(self) -> int:
        return len(self.pairs)

    @property
    def axis_pairs(self) -> list[AxisPair]:
        return [AxisPair.parse(p) for p in self.pairs]

    def encoder_image_size(self) -> int:
        n = self.input_size
        for _ in self.conv_filters:
            n = L.conv_output_size(n, 2)
        return n

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter name -> array shape, in a fixed order."""
        s = {}
        c_in = 1
        for i, f in enumerate(self.conv_filters):
            s[f"conv{i}.W"] = (f, c_in, 3, 3)
            s[f"conv{i}.b"] = (f,)
            c_in = f
        n_in = c_in * self.encoder_image_size() ** 2 + self.n_params
        for i, n in enumerate(self.enc_dense):
            s[f"enc{i}.W"] = (n_in, n)
            s[f"enc{i}.b"] = (n,)
            n_in = n
        s["latent.W"] = (n_in, self.latent_dim)
        s["latent.b"] = (self.latent_dim,)
        n_in = self.latent_dim
        for i, n in enumerate(self.dec_dense):
            s[f"dec{i}.W"] = (n_in, n)
            s[f"dec{i}.b"] = (n,)
            n_in = n
        n_img = int(np.prod(self.dec_image))
        s["dec_img.W"] = (n_in, n_img)
        s["dec_img.b"] = (n_img,)
        c_in = self.dec_image[0]
        for i, f in enumerate(self.tconv_filters):
            s[f"tconv{i}.W"] = (f, c_in, 3, 3)
            s[f"tconv{i}.b"] = (f,)
            c_in = f
        s["out.W"] = (self.n_channels, c_in, 3, 3)
        s["out.b"] = (self.n_channels,)
        return s

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "NetworkSpec":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


@dataclass(frozen=True)
class NetworkWeights:
    spec: NetworkSpec
    arrays: dict = field(repr=False)

    def __post_init__(self):
        shapes = self.spec.shapes()
        if list(self.arrays) != list(shapes):
            missing = set(shapes) ^ set(self.arrays)
            if missing:
                raise ShapeError(f"weights do not match spec; mismatched names {sorted(missing)}")
        frozen = {}
        for name, shape in shapes.items():
            a = np.array(self.arrays[name], dtype=float)
            if a.shape != shape:
                raise ShapeError(f"{name} has shape {a.shape}, spec requires {shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite entries")
            a.setflags(write=False)
            frozen[name] = a
        object.__setattr__(self, "arrays", frozen)

    def __getitem__(self, name):
        return self.arrays[name]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, a in self.arrays.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def n_weights(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def replace(self, arrays: Mapping) -> "NetworkWeights":
        return NetworkWeights(self.spec, dict(arrays))


def init_weights(spec: NetworkSpec, seed: int = 0) -> NetworkWeights:
    """Fan-in scaled uniform weights (He bound sqrt(6 / fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in spec.shapes().items():
        if name.endswith(".b"):
            arrays[name] = np.zeros(shape)
        else:
            fan_in = shape[0] if len(shape) == 2 else int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return NetworkWeights(spec, arrays)


def zero_weights(spec: NetworkSpec) -> NetworkWeights:
    return NetworkWeights(spec, {k: np.zeros(s) for k, s in spec.shapes().items()})


# ---------------------------------------------------------------------------
# unit conversion at the network boundary


def _input_native(images, spec):
    x = np.asarray(images, dtype=float)
    if x.shape[-2:] != (spec.input_size, spec.input_size):
        raise ShapeError(
            f"input image is {x.shape[-2:]}, network expects {spec.input_size}x{spec.input_size}"
        )
    return x.reshape(-1, 1, spec.input_size, spec.input_size) * spec.input_size**2


def _params_native(params, spec):
    p = np.asarray(params, dtype=float).reshape(-1, spec.n_params)
    return (p - np.array(spec.param_center)) / np.array(spec.param_scale)


def targets_native(targets, spec):
    return np.asarray(targets, dtype=float) * spec.output_size**2


def output_mass(y_native, spec):
    return y_native / spec.output_size**2


# ---------------------------------------------------------------------------
# forward passes


def encoder_forward(x, p, w: NetworkWeights, keep=False):
    """x: (B,1,H,W) native images, p: (B,n_params) normalized settings."""
    spec = w.spec
    act = spec.hidden_activation
    cache = []
    h = x
    for i in range(len(spec.conv_filters)):
        z, cols = L.conv2d_pre(h, w[f"conv{i}.W"], w[f"conv{i}.b"], 2)
        if keep:
            cache.append(("conv", i, h.shape, cols, z))
        h = L.activate(z, act)
    conv_shape = h.shape
    h = np.concatenate([h.reshape(len(h), -1), p], axis=1)
    for i in range(len(spec.enc_dense)):
        z = L.dense_pre(h, w[f"enc{i}.W"], w[f"enc{i}.b"])
        if keep:
            cache.append(("enc", i, h, z))
        h = L.activate(z, act)
    v = L.dense_pre(h, w["latent.W"], w["latent.b"])
    if keep:
        cache.append(("latent", h))
    return v, (cache, conv_shape)


def decoder_forward(z_lat, w: NetworkWeights, keep=False):
    """Latent batch (B, N_L) -> native output stack (B, N_c, N_im, N_im)."""
    spec = w.spec
    act = spec.hidden_activation
    cache = []
    h = z_lat
    for i in range(len(spec.dec_dense)):
        z = L.dense_pre(h, w[f"dec{i}.W"], w[f"dec{i}.b"])
        if keep:
            cache.append(("dec", i, h, z))
        h = L.activate(z, act)
    z = L.dense_pre(h, w["dec_img.W"], w["dec_img.b"])
    if keep:
        cache.append(("dec_img", h, z))
    h = L.activate(z, act).reshape(len(h), *spec.dec_image)
    names = [f"tconv{i}" for i in range(len(spec.tconv_filters))] + ["out"]
    for k, name in enumerate(names):
        u = L.upsample_zeros(h)
        z, cols = L.conv2d_pre(u, w[f"{name}.W"], w[f"{name}.b"], 1)
        kind = spec.output_activation if name == "out" else act
        if keep:
            cache.append(("tconv", name, u.shape, cols, z, kind))
        h = L.activate(z, kind)
    return h, cache


def encode_batch(images, params, w: NetworkWeights) -> np.ndarray:
    v, _ = encoder_forward(_input_native(images, w.spec), _params_native(params, w.spec), w)
    return v


def decode_batch(latents, w: NetworkWeights) -> np.ndarray:
    """Latent batch -> mass-unit output stacks (B, N_c, N_im, N_im)."""
    z = np.asarray(latents, dtype=float).reshape(-1, w.spec.latent_dim)
    y, _ = decoder_forward(z, w)
    return output_mass(y, w.spec)


def encode(image, params, w: NetworkWeights) -> np.ndarray:
    """Latent vector of one (input image, machine settings) pair."""
    px = image.pixels if isinstance(image, ImageGrid) else image
    pv = params.values if isinstance(params, MachineParams) else params
    return encode_batch(px, pv, w)[0]


def inject_latent(v_latent, v_control) -> np.ndarray:
    """Decoder input: encoder output plus the additive control vector."""
    a = np.asarray(v_latent, dtype=float)
    b = np.asarray(v_control, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"latent length mismatch: {a.shape} vs {b.shape}")
    return a + b


def decode(p_latent, w: NetworkWeights, extents=None) -> ProjectionSet:
    """Projection set generated from the latent vector ``p_latent``.

    ``extents`` lists one ``((lo, hi), (lo, hi))`` per channel; unit boxes
    are used when omitted.
    """
    p = np.asarray(p_latent, dtype=float)
    if p.shape != (w.spec.latent_dim,):
        raise ShapeError(f"latent vector has shape {p.shape}, expected ({w.spec.latent_dim},)")
    stack = decode_batch(p, w)[0]
    if extents is None:
        extents = [((0.0, 1.0), (0.0, 1.0))] * w.spec.n_channels
    return ProjectionSet.from_stack(stack, w.spec.axis_pairs, extents)


# ---------------------------------------------------------------------------
# backward passes


def decoder_backward(dy, cache, w: NetworkWeights, grads: dict):
    """Accumulate decoder weight gradients; returns d(loss)/d(latent)."""
    spec = w.spec
    act = spec.hidden_activation
    dh = dy
    for entry in reversed(cache):
        tag = entry[0]
        if tag == "tconv":
            _, name, u_shape, cols, z, kind = entry
            dz = dh * L.activation_grad(z, kind)
            du, dW, db = L.conv2d_backward(dz, u_shape, cols, w[f"{name}.W"], 1)
            grads[f"{name}.W"] = dW
            grads[f"{name}.b"] = db
            dh = L.upsample_zeros_backward(du)
        elif tag == "dec_img":
            _, h, z = entry
            dz = dh.reshape(len(dh), -1) * L.activation_grad(z, act)
            dh, grads["dec_img.W"], grads["dec_img.b"] = L.dense_backward(dz, h, w["dec_img.W"])
        else:
            _, i, h, z = entry
            dz = dh * L.activation_grad(z, act)
            dh, grads[f"dec{i}.W"], grads[f"dec{i}.b"] = L.dense_backward(dz, h, w[f"dec{i}.W"])
    return dh


def encoder_backward(dv, enc_cache, w: NetworkWeights, grads: dict):
    spec = w.spec
    act = spec.hidden_activation
    cache, conv_shape = enc_cache
    dh = dv
    n_conv = int(np.prod(conv_shape[1:]))
    for entry in reversed(cache):
        tag = entry[0]
        if tag == "latent":
            _, h = entry
            dh, grads["latent.W"], grads["latent.b"] = L.dense_backward(dh, h, w["latent.W"])
        elif tag == "enc":
            _, i, h, z = entry
            dz = dh * L.activation_grad(z, act)
            dh, grads[f"enc{i}.W"], grads[f"enc{i}.b"] = L.dense_backward(dz, h, w[f"enc{i}.W"])
        else:
            if dh.ndim == 2:
                dh = dh[:, :n_conv].reshape(conv_shape)
            _, i, x_shape, cols, z = entry
            dz = dh * L.activation_grad(z, act)
            dh, grads[f"conv{i}.W"], grads[f"conv{i}.b"] = L.conv2d_backward(
                dz, x_shape, cols, w[f"conv{i}.W"], 2
            )
    return dh


class NonFiniteLossError(ArithmeticError):
    pass


def backward(inputs, params, targets, w: NetworkWeights, v_control=None):
    """Loss and exact gradients for a batch.

    The loss is the batch mean of the per-sample channel-mean pixel MSE,
    evaluated in native (density) units. ``targets`` are mass-unit stacks
    of shape (B, N_c, N_im, N_im). Returns ``(loss, grads)`` where grads
    maps every weight name to an array of its shape.
    """
    spec = w.spec
    x = _input_native(inputs, spec)
    p = _params_native(params, spec)
    t = targets_native(targets, spec).reshape(len(x), spec.n_channels, spec.output_size, spec.output_size)
    v, enc_cache = encoder_forward(x, p, w, keep=True)
    if v_control is not None:
        v = v + np.asarray(v_control, dtype=float)
    y, dec_cache = decoder_forward(v, w, keep=True)
    r = y - t
    per_sample = np.mean(r * r, axis=(1, 2, 3))
    bad = np.flatnonzero(~np.isfinite(per_sample))
    if bad.size:
        raise NonFiniteLossError(f"non-finite loss for sample index {int(bad[0])}")
    B = len(x)
    loss = float(per_sample.mean())
    dy = 2.0 * r / (B * r[0].size)
    grads: dict = {}
    dv = decoder_backward(dy, dec_cache, w, grads)
    encoder_backward(dv, enc_cache, w, grads)
    return loss, {name: grads[name] for name in spec.shapes()}


def batch_loss(inputs, params, targets, w: NetworkWeights) -> float:
    spec = w.spec
    v = encode_batch(inputs, params, w)
    y, _ = decoder_forward(v, w)
    t = targets_native(targets, spec).reshape(y.shape)
    return float(np.mean((y - t) ** 2))


def decode_vjp(p_latent, w: NetworkWeights, cotangent) -> np.ndarray:
    """Backpropagated d<cotangent, decode(p)>/dp for a single latent vector.

    ``cotangent`` is in mass units with the output stack's shape.
    """
    p = np.asarray(p_latent, dtype=float).reshape(1, -1)
    y, cache = decoder_forward(p, w, keep=True)
    dy = np.asarray(cotangent, dtype=float).reshape(y.shape) / w.spec.output_size**2
    return decoder_backward(dy, cache, w, {})[0]
