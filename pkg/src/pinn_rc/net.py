"""Fully connected tanh network of one scalar input.

Besides the plain forward pass the network propagates the derivative of
its outputs with respect to the input (a tangent pass), and can
back-propagate adjoints of both the outputs and those derivatives to the
parameters. That is all a PINN with a single independent variable needs:
the residual depends on ``u`` and ``du/dt``, and its parameter gradient
includes the mixed second derivative ``d^2 u / (dtheta dt)``.

Everything is batched over input points: ``t`` has shape ``(n,)`` and
outputs have shape ``(n, n_out)``. Weights are stored ``(fan_in, fan_out)``
so a layer is ``a @ W + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class Mlp:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        _check_sizes(self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of parameter tensors does not match layer_sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[k], self.layer_sizes[k + 1])
            if w.shape != shape or b.shape != shape[1:]:
                raise ValueError(f"layer {k}: got W{w.shape}, b{b.shape}, expected W{shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k}: non-finite parameters")

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Parameter tensors in the order W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "Mlp":
        return Mlp(self.layer_sizes, list(params[0::2]), list(params[1::2]))

    def copy(self) -> "Mlp":
        return self.with_params([p.copy() for p in self.params()])

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def scaled(self, alpha: float) -> "GradientSet":
        return GradientSet([alpha * w for w in self.weights], [alpha * b for b in self.biases])

    @classmethod
    def zeros_like(cls, net: Mlp) -> "GradientSet":
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])


@dataclass
class TangentEval:
    """Outputs, input derivatives and the per-layer values kept for reverse passes."""

    u: np.ndarray
    du_dt: np.ndarray
    t: np.ndarray
    activations: list[np.ndarray]
    tangents: list[np.ndarray]
    tangent_pre: list[np.ndarray]


def _check_sizes(sizes):
    if len(sizes) < 2:
        raise ValueError(f"layer_sizes needs at least input and output widths, got {list(sizes)}")
    if sizes[0] != 1:
        raise ValueError(f"input width must be 1, got {sizes[0]}")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer widths must be positive, got {list(sizes)}")


def init_mlp(layer_sizes: Sequence[int], seed: int = 0) -> Mlp:
    """Glorot-uniform weights, zero biases, from a seeded PCG64 stream."""
    sizes = tuple(int(s) for s in layer_sizes)
    _check_sizes(sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases)


def _as_batch(t) -> np.ndarray:
    return np.atleast_1d(np.asarray(t, dtype=float)).reshape(-1, 1)


def forward(net: Mlp, t_scaled) -> np.ndarray:
    a = _as_batch(t_scaled)
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        a = z if k == last else np.tanh(z)
    return a


def forward_tangent(net: Mlp, t_scaled) -> TangentEval:
    t = _as_batch(t_scaled)
    a, da = t, np.ones_like(t)
    activations, tangents, tangent_pre = [a], [da], []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        dz = da @ w
        if k == last:
            a, da = z, dz
        else:
            a = np.tanh(z)
            da = (1.0 - a * a) * dz
            activations.append(a)
            tangents.append(da)
            tangent_pre.append(dz)
    return TangentEval(a, da, t, activations, tangents, tangent_pre)


def backward(net: Mlp, ev: TangentEval, seed_u, seed_du) -> GradientSet:
    """Gradient of ``sum(seed_u * u + seed_du * du_dt)`` over the batch.

    Seeds broadcast against ``ev.u`` (shape ``(n, n_out)``).
    """
    shape = ev.u.shape
    try:
        gu = np.broadcast_to(np.asarray(seed_u, dtype=float), shape)
        gdu = np.broadcast_to(np.asarray(seed_du, dtype=float), shape)
    except ValueError:
        raise ValueError(
            f"seed shapes {np.shape(seed_u)}, {np.shape(seed_du)} do not match outputs {shape}"
        ) from None

    n_layers = len(net.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers

    # output layer is affine: u = a W + b, du = da W
    a, da = ev.activations[-1], ev.tangents[-1]
    w = net.weights[-1]
    gw[-1] = a.T @ gu + da.T @ gdu
    gb[-1] = gu.sum(axis=0)
    abar = gu @ w.T
    dabar = gdu @ w.T

    for k in range(n_layers - 2, -1, -1):
        # a = tanh(z), da = s * dz with s = 1 - a^2 and ds/dz = -2 a s
        a, dz = ev.activations[k + 1], ev.tangent_pre[k]
        s = 1.0 - a * a
        dzbar = dabar * s
        zbar = s * (abar - 2.0 * a * dabar * dz)
        a_prev, da_prev = ev.activations[k], ev.tangents[k]
        w = net.weights[k]
        gw[k] = a_prev.T @ zbar + da_prev.T @ dzbar
        gb[k] = zbar.sum(axis=0)
        if k > 0:
            abar = zbar @ w.T
            dabar = dzbar @ w.T
    return GradientSet(gw, gb)


# Checkpoint layout (all little-endian):
#   8 bytes   magic b"PINNRC" + uint16 format version
#   uint32    number of layer sizes L
#   L*uint32  layer sizes
#   float64   for each layer k: W_k row-major (fan_in x fan_out), then b_k
CHECKPOINT_MAGIC = b"PINNRC"
CHECKPOINT_VERSION = 1


def to_bytes(net: Mlp) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<H", CHECKPOINT_VERSION)]
    parts.append(struct.pack(f"<I{len(net.layer_sizes)}I", len(net.layer_sizes), *net.layer_sizes))
    for p in net.params():
        parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> Mlp:
    if data[:6] != CHECKPOINT_MAGIC:
        raise ValueError("not a pinn_rc checkpoint")
    (version,) = struct.unpack_from("<H", data, 6)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (n,) = struct.unpack_from("<I", data, 8)
    sizes = struct.unpack_from(f"<{n}I", data, 12)
    offset = 12 + 4 * n
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, "<f8", fan_in * fan_out, offset).reshape(fan_in, fan_out)
        offset += 8 * w.size
        b = np.frombuffer(data, "<f8", fan_out, offset)
        offset += 8 * b.size
        weights.append(w.astype(float))
        biases.append(b.astype(float))
    if offset != len(data):
        raise ValueError("checkpoint has trailing bytes")
    return Mlp(sizes, weights, biases)
