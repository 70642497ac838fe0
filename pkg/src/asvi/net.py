"""Sparse ReLU multilayer perceptron over a flat parameter vector.

Parameters live in one float64 vector ``theta`` laid out layer by layer:
``W_1`` (shape ``(p_1, p_0)``, row-major), then ``b_1``, then ``W_2``, ``b_2``
and so on. Hidden units compute ``relu(W h + b)``; the output layer is affine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class ShapeError(ValueError):
    """Raised when arrays do not match the network they are used with."""


@dataclass(frozen=True)
class NetworkShape:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        dims = (self.input_dim, *self.hidden_widths, self.output_dim)
        if any(int(d) != d or d < 1 for d in dims):
            raise ShapeError(f"all layer sizes must be positive integers, got {dims}")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths) + 1

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @cached_property
    def layout(self) -> tuple[tuple[int, int, int], ...]:
        """(weight offset, bias offset, layer end) for each layer."""
        out = []
        pos = 0
        d = self.dims
        for i in range(1, len(d)):
            w_end = pos + d[i] * d[i - 1]
            b_end = w_end + d[i]
            out.append((pos, w_end, b_end))
            pos = b_end
        return tuple(out)

    @property
    def n_params(self) -> int:
        return self.layout[-1][2]

    def layer_of(self) -> np.ndarray:
        """Layer index (0-based) of every flat coordinate."""
        idx = np.empty(self.n_params, dtype=np.int64)
        for i, (w0, _, end) in enumerate(self.layout):
            idx[w0:end] = i
        return idx

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "output_dim": self.output_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> NetworkShape:
        return cls(int(d["input_dim"]), tuple(d["hidden_widths"]), int(d.get("output_dim", 1)))


def param_count(shape: NetworkShape) -> int:
    d = shape.dims
    return sum((d[i - 1] + 1) * d[i] for i in range(1, len(d)))


def flat_to_coord(shape: NetworkShape, index: int) -> tuple[int, str, int, int]:
    """Map a flat index to ``(layer, "W" | "b", row, col)``; ``col`` is -1 for biases."""
    if not 0 <= index < shape.n_params:
        raise ShapeError(f"index {index} out of range for H={shape.n_params}")
    for layer, (w0, b0, end) in enumerate(shape.layout):
        if index < b0:
            fan_in = shape.dims[layer]
            row, col = divmod(index - w0, fan_in)
            return layer, "W", row, col
        if index < end:
            return layer, "b", index - b0, -1
    raise AssertionError("unreachable")


def coord_to_flat(shape: NetworkShape, layer: int, kind: str, row: int, col: int = -1) -> int:
    w0, b0, end = shape.layout[layer]
    fan_in, fan_out = shape.dims[layer], shape.dims[layer + 1]
    if not 0 <= row < fan_out:
        raise ShapeError(f"row {row} out of range in layer {layer}")
    if kind == "W":
        if not 0 <= col < fan_in:
            raise ShapeError(f"col {col} out of range in layer {layer}")
        return w0 + row * fan_in + col
    if kind == "b":
        return b0 + row
    raise ShapeError(f"unknown parameter kind {kind!r}")


def unflatten(shape: NetworkShape, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``[(W_1, b_1), ...]`` into ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (shape.n_params,):
        raise ShapeError(f"theta has shape {theta.shape}, expected ({shape.n_params},)")
    d = shape.dims
    return [
        (theta[w0:b0].reshape(d[i + 1], d[i]), theta[b0:end])
        for i, (w0, b0, end) in enumerate(shape.layout)
    ]


def _check_x(shape: NetworkShape, x: np.ndarray, batched: bool) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    want = 2 if batched else 1
    if x.ndim != want or x.shape[-1] != shape.input_dim:
        raise ShapeError(f"input has shape {x.shape}, expected input_dim={shape.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def forward(shape: NetworkShape, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Network output for a single input vector."""
    x = _check_x(shape, x, batched=False)
    return forward_batch(shape, theta, x[None, :])[0]


def backward(shape: NetworkShape, theta: np.ndarray, x: np.ndarray, upstream) -> np.ndarray:
    """Gradient of ``upstream . f_theta(x)`` with respect to ``theta``.

    The ReLU derivative at exactly zero is taken as 0.
    """
    x = _check_x(shape, x, batched=False)
    upstream = np.atleast_1d(np.asarray(upstream, dtype=np.float64))
    if upstream.shape != (shape.output_dim,):
        raise ShapeError(f"upstream has shape {upstream.shape}, expected ({shape.output_dim},)")
    return backward_batch(shape, theta, x[None, :], upstream[None, :])


def forward_batch(shape: NetworkShape, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Outputs for every row of ``X``; shape ``(n, output_dim)``."""
    X = _check_x(shape, X, batched=True)
    return activations(shape, theta, X)[-1]


def activations(shape: NetworkShape, theta: np.ndarray, X: np.ndarray) -> list[np.ndarray]:
    """Input, post-ReLU hidden activations and output for a batch (no input checks)."""
    layers = unflatten(shape, theta)
    acts = [X]
    for W, b in layers[:-1]:
        acts.append(np.maximum(acts[-1] @ W.T + b, 0.0))
    W, b = layers[-1]
    acts.append(acts[-1] @ W.T + b)
    return acts


def backward_from_activations(shape: NetworkShape, theta: np.ndarray, acts: list[np.ndarray], upstream: np.ndarray) -> np.ndarray:
    layers = unflatten(shape, theta)
    grad = np.empty(shape.n_params)
    delta = upstream
    for i in range(len(layers) - 1, -1, -1):
        w0, b0, end = shape.layout[i]
        grad[w0:b0] = (delta.T @ acts[i]).ravel()
        grad[b0:end] = delta.sum(axis=0)
        if i > 0:
            # acts[i] > 0 exactly where the pre-activation was positive
            delta = (delta @ layers[i][0]) * (acts[i] > 0.0)
    return grad


def backward_batch(shape: NetworkShape, theta: np.ndarray, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Sum over rows of ``d(upstream_j . f_theta(x_j)) / d theta``."""
    X = _check_x(shape, X, batched=True)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.ndim == 1:
        upstream = upstream[:, None]
    if upstream.shape != (X.shape[0], shape.output_dim):
        raise ShapeError(f"upstream has shape {upstream.shape}, expected ({X.shape[0]}, {shape.output_dim})")
    return backward_from_activations(shape, theta, activations(shape, theta, X), upstream)


def gaussian_log_lik(y_pred, y, sigma_eps: float):
    """Log density of ``y`` under ``N(y_pred, sigma_eps**2)``; works elementwise."""
    if not sigma_eps > 0:
        raise ValueError(f"sigma_eps must be positive, got {sigma_eps}")
    r = np.asarray(y, dtype=np.float64) - np.asarray(y_pred, dtype=np.float64)
    out = -0.5 * math.log(2.0 * math.pi * sigma_eps**2) - r * r / (2.0 * sigma_eps**2)
    return float(out) if np.ndim(out) == 0 else out
