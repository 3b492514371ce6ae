"""State-to-probability mapping: a one-hidden-layer ReLU network with a
two-way softmax output whose first component is the contention probability.

Flat parameter layout (length ``param_count``)::

    [W1 (hidden x input, row-major), b1 (hidden),
     W2 (output x hidden, row-major), b2 (output)]
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import AoiState, IdtEhState, InnerState, QueueState

OUTPUT_DIM = 2
MAX_INPUT_DIM = 2


@dataclass(frozen=True)
class NetShape:
    input_dim: int
    hidden_dim: int = 5
    output_dim: int = OUTPUT_DIM

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.output_dim) < 1:
            raise ValueError(f"all network dimensions must be >= 1, got {self}")

    @property
    def param_count(self) -> int:
        return param_count(self)


def param_count(shape: NetShape) -> int:
    h, i, o = shape.hidden_dim, shape.input_dim, shape.output_dim
    return h * i + h + o * h + o


def unflatten(params: np.ndarray, shape: NetShape):
    """Split flat parameters (trailing axis) into ``(W1, b1, W2, b2)``.

    Leading axes are preserved, so a ``(M, L)`` batch gives ``(M, h, i)``
    weights and so on.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.shape[-1] != shape.param_count:
        raise ValueError(
            f"expected {shape.param_count} parameters for {shape}, got {params.shape[-1]}")
    h, i, o = shape.hidden_dim, shape.input_dim, shape.output_dim
    lead = params.shape[:-1]
    cuts = np.cumsum([h * i, h, o * h])
    w1, b1, w2, b2 = np.split(params, cuts, axis=-1)
    return (w1.reshape(lead + (h, i)), b1, w2.reshape(lead + (o, h)), b2)


def flatten(w1, b1, w2, b2) -> np.ndarray:
    lead = np.shape(b1)[:-1]
    parts = [np.reshape(a, lead + (-1,)) for a in (w1, b1, w2, b2)]
    return np.concatenate(parts, axis=-1)


def encode_state(s: InnerState, norm: float = 10.0) -> np.ndarray:
    if norm <= 0:
        raise ValueError("norm must be positive")
    if isinstance(s, AoiState):
        a = 0 if s.buffered_age is None else s.buffered_age
        return np.array([a / norm, s.destination_aoi / norm])
    if isinstance(s, IdtEhState):
        return np.array([s.elapsed_since_delivery / norm, s.energy_level / norm])
    if isinstance(s, QueueState):
        return np.array([s.queue_length / norm])
    raise TypeError(f"not an inner state: {s!r}")


def forward(params: np.ndarray, x: Sequence[float], shape: NetShape | None = None) -> float:
    """Transmission probability for one encoded state."""
    x = np.asarray(x, dtype=np.float64)
    if shape is None:
        shape = NetShape(input_dim=x.shape[0], hidden_dim=_infer_hidden(len(params), x.shape[0]))
    if x.shape != (shape.input_dim,):
        raise ValueError(f"input has shape {x.shape}, network expects ({shape.input_dim},)")
    w1, b1, w2, b2 = unflatten(params, shape)
    z = np.maximum(w1 @ x + b1, 0.0)
    logits = w2 @ z + b2
    e = np.exp(logits - logits.max())
    return float(e[0] / e.sum())


def _infer_hidden(length: int, input_dim: int) -> int:
    # length = h*(input + 1 + OUTPUT_DIM) + OUTPUT_DIM
    h, rem = divmod(length - OUTPUT_DIM, input_dim + 1 + OUTPUT_DIM)
    if rem or h < 1:
        raise ValueError(f"{length} parameters do not fit a network with input_dim={input_dim}")
    return h


def pack_policies(params: Sequence[np.ndarray], shapes: Sequence[NetShape]):
    """Stack per-terminal parameter batches into padded kernel arrays.

    ``params[n]`` has shape ``(M, L_n)``.  Returns ``W1 (M, N, H, 2)``,
    ``b1 (M, N, H)``, ``W2 (M, N, 2, H)`` and ``b2 (M, N, 2)``, where ``H``
    is the largest hidden width.  Padded entries are zero, which leaves
    every network's output unchanged.
    """
    if len(params) != len(shapes):
        raise ValueError(f"got {len(params)} parameter sets for {len(shapes)} terminals")
    m = np.asarray(params[0]).shape[0]
    n = len(shapes)
    hmax = max(s.hidden_dim for s in shapes)
    w1 = np.zeros((m, n, hmax, MAX_INPUT_DIM))
    b1 = np.zeros((m, n, hmax))
    w2 = np.zeros((m, n, OUTPUT_DIM, hmax))
    b2 = np.zeros((m, n, OUTPUT_DIM))
    for j, (p, shape) in enumerate(zip(params, shapes)):
        p = np.asarray(p, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != m:
            raise ValueError(f"terminal {j}: expected a ({m}, L) parameter batch, got {p.shape}")
        if shape.output_dim != OUTPUT_DIM or shape.input_dim > MAX_INPUT_DIM:
            raise ValueError(f"terminal {j}: unsupported network shape {shape}")
        a1, c1, a2, c2 = unflatten(p, shape)
        h, i = shape.hidden_dim, shape.input_dim
        w1[:, j, :h, :i] = a1
        b1[:, j, :h] = c1
        w2[:, j, :, :h] = a2
        b2[:, j] = c2
    return w1, b1, w2, b2
