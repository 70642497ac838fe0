"""Sparse ground-truth networks and synthetic regression data drawn from them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from asvi.data import RegressionDataset
from asvi.net import NetworkShape, forward_batch


@dataclass(frozen=True)
class TeacherNetwork:
    shape: NetworkShape
    theta: np.ndarray
    mask: np.ndarray
    seed: int | None = None

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return forward_batch(self.shape, self.theta, X)[:, 0]

    def to_dict(self) -> dict:
        return {
            "shape": self.shape.to_dict(),
            "theta": self.theta.tolist(),
            "mask": self.mask.astype(int).tolist(),
            "nonzero_count": self.nonzero_count,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> TeacherNetwork:
        return cls(
            NetworkShape.from_dict(d["shape"]),
            np.asarray(d["theta"], dtype=np.float64),
            np.asarray(d["mask"], dtype=bool),
            d.get("seed"),
        )


def generate_teacher(
    shape: NetworkShape,
    weight_low: float = 0.5,
    weight_high: float = 1.5,
    zero_rate: float = 0.5,
    rng: np.random.Generator | int | None = None,
) -> TeacherNetwork:
    """Uniform weights and biases, each zeroed independently with ``zero_rate``.

    Values and the mask come from separate child streams of ``rng``, so the
    support does not depend on the drawn values.
    """
    if not weight_low < weight_high:
        raise ValueError("weight_low must be below weight_high")
    if not 0.0 <= zero_rate <= 1.0:
        raise ValueError(f"zero_rate must lie in [0, 1], got {zero_rate}")
    seed = rng if isinstance(rng, int) else None
    value_rng, mask_rng = np.random.default_rng(rng).spawn(2)
    H = shape.n_params
    values = value_rng.uniform(weight_low, weight_high, size=H)
    mask = mask_rng.uniform(size=H) >= zero_rate
    return TeacherNetwork(shape, np.where(mask, values, 0.0), mask, seed)


def synthesize(
    teacher: TeacherNetwork,
    n: int,
    sigma_eps: float = 1.0,
    rng: np.random.Generator | int | None = None,
) -> RegressionDataset:
    """``n`` rows with ``X ~ U[-1, 1]^p`` and ``y = f(X) + sigma_eps * N(0, 1)``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if sigma_eps < 0:
        raise ValueError("sigma_eps must be nonnegative")
    x_rng, noise_rng = np.random.default_rng(rng).spawn(2)
    X = x_rng.uniform(-1.0, 1.0, size=(n, teacher.shape.input_dim))
    y = teacher.predict(X)
    if sigma_eps > 0:
        y = y + sigma_eps * noise_rng.standard_normal(n)
    return RegressionDataset(X, y, sigma_eps=sigma_eps, provenance="synthetic")
