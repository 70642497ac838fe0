"""Posterior-predictive metrics: posterior-mean prediction, RMSE, sparsity, Hellinger."""
from __future__ import annotations

import math

import numpy as np

from asvi.net import NetworkShape, forward_batch
from asvi.variational import NoiseDraw, VariationalParams, sample_theta

DEFAULT_DRAWS = 30


class _Kahan:
    """Neumaier-compensated running sum over arrays."""

    def __init__(self, size):
        self.s = np.zeros(size)
        self.c = np.zeros(size)

    def add(self, x):
        t = self.s + x
        big = np.abs(self.s) >= np.abs(x)
        self.c += np.where(big, (self.s - t) + x, (x - t) + self.s)
        self.s = t

    @property
    def total(self):
        return self.s + self.c


def posterior_draws(params: VariationalParams, draws: int, tau: float, rng) -> list[np.ndarray]:
    """Hard-gated theta samples from the variational posterior."""
    if draws < 1:
        raise ValueError(f"draws must be >= 1, got {draws}")
    H = len(params)
    return [sample_theta(params, NoiseDraw.sample(rng, H), tau).theta_hard for _ in range(draws)]


def posterior_mean_predict(params, shape: NetworkShape, X, draws: int = DEFAULT_DRAWS, tau: float = 0.5, rng=None, thetas=None) -> np.ndarray:
    """Average network output over ``draws`` posterior samples."""
    params.check(shape)
    X = np.asarray(X, dtype=np.float64)
    if thetas is None:
        thetas = posterior_draws(params, draws, tau, np.random.default_rng(rng))
    acc = _Kahan(X.shape[0])
    for theta in thetas:
        acc.add(forward_batch(shape, theta, X)[:, 0])
    return acc.total / len(thetas)


def rmse(pred, y) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if pred.shape != y.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} predictions vs {y.shape[0]} targets")
    return math.sqrt(math.fsum((pred - y) ** 2) / pred.shape[0])


def sparsity_summary(params: VariationalParams) -> tuple[float, float]:
    """``(mean inclusion probability, expected number of active edges)``."""
    nu = params.nu
    total = math.fsum(nu)
    return total / nu.shape[0], total


def hellinger_sq_from_gap(gap, sigma_eps: float) -> float:
    gap = np.asarray(gap, dtype=np.float64)
    return math.fsum(-np.expm1(-gap * gap / (8.0 * sigma_eps**2))) / gap.shape[0]


def empirical_hellinger_sq(model, teacher, X_eval, sigma_eps: float, shape: NetworkShape | None = None,
                           draws: int = DEFAULT_DRAWS, tau: float = 0.5, rng=None) -> float:
    """Monte Carlo squared Hellinger distance between a student and the teacher.

    ``model`` is a flat theta (requires ``shape``) or :class:`VariationalParams`;
    for the latter the distance is averaged over ``draws`` posterior samples.
    """
    X_eval = np.asarray(X_eval, dtype=np.float64)
    shape = shape or teacher.shape
    f0 = teacher.predict(X_eval)
    if isinstance(model, VariationalParams):
        model.check(shape)
        thetas = posterior_draws(model, draws, tau, np.random.default_rng(rng))
        return math.fsum(
            hellinger_sq_from_gap(forward_batch(shape, t, X_eval)[:, 0] - f0, sigma_eps) for t in thetas
        ) / len(thetas)
    return hellinger_sq_from_gap(forward_batch(shape, model, X_eval)[:, 0] - f0, sigma_eps)
