"""Spike-and-slab variational family with a Gaussian slab.

Each coordinate of theta has an inclusion probability ``nu`` and a slab
``N(mu, sigma**2)``. The optimizer works on unconstrained raws::

    sigma = softplus(sigma_raw)          sigma_raw = log(exp(sigma) - 1)
    nu    = 1 / (1 + exp(nu_raw))        nu_raw    = log((1 - nu) / nu)

Hard gates are drawn through a Gumbel-sigmoid with temperature ``tau``; the
hard threshold at 0.5 reproduces a Bernoulli(nu) draw exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from asvi.net import NetworkShape, ShapeError

U_CLAMP = 1e-7
VARIANCE_FLOOR = 1e-8


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=np.float64)))


def softplus(x):
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def nu_from_raw(nu_raw):
    return sigmoid(-np.asarray(nu_raw, dtype=np.float64))


def raw_from_nu(nu):
    nu = np.asarray(nu, dtype=np.float64)
    return np.log1p(-nu) - np.log(nu)


def sigma_from_raw(sigma_raw):
    return softplus(sigma_raw)


def raw_from_sigma(sigma):
    sigma = np.asarray(sigma, dtype=np.float64)
    # log(exp(s) - 1) = s + log(1 - exp(-s))
    return sigma + np.log(-np.expm1(-sigma))


@dataclass
class VariationalParams:
    mu: np.ndarray
    sigma_raw: np.ndarray
    nu_raw: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma_raw = np.asarray(self.sigma_raw, dtype=np.float64)
        self.nu_raw = np.asarray(self.nu_raw, dtype=np.float64)
        if not (self.mu.ndim == 1 and self.mu.shape == self.sigma_raw.shape == self.nu_raw.shape):
            raise ShapeError("mu, sigma_raw and nu_raw must be 1-d arrays of equal length")

    def __len__(self) -> int:
        return self.mu.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return sigma_from_raw(self.sigma_raw)

    @property
    def nu(self) -> np.ndarray:
        return nu_from_raw(self.nu_raw)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mu, self.sigma_raw, self.nu_raw])

    @classmethod
    def from_flat(cls, v: np.ndarray) -> VariationalParams:
        mu, s, n = np.split(np.asarray(v, dtype=np.float64), 3)
        return cls(mu.copy(), s.copy(), n.copy())

    def copy(self) -> VariationalParams:
        return VariationalParams(self.mu.copy(), self.sigma_raw.copy(), self.nu_raw.copy())

    def check(self, shape: NetworkShape) -> None:
        if len(self) != shape.n_params:
            raise ShapeError(f"params have length {len(self)}, network needs {shape.n_params}")


def init_params(shape: NetworkShape, rng: np.random.Generator, sigma_init: float = 0.05, nu_init: float = 0.5) -> VariationalParams:
    """Fan-scaled uniform means, small slab noise and uninformative gates."""
    mu = np.empty(shape.n_params)
    d = shape.dims
    for i, (w0, _, end) in enumerate(shape.layout):
        r = math.sqrt(6.0 / (d[i] + d[i + 1]))
        mu[w0:end] = rng.uniform(-r, r, size=end - w0)
    H = shape.n_params
    return VariationalParams(
        mu,
        np.full(H, float(raw_from_sigma(sigma_init))),
        np.full(H, float(raw_from_nu(nu_init))),
    )


@dataclass(frozen=True)
class PriorConfig:
    sigma0: float = 0.8
    lam: float = 10.0
    lambda_s: float = 3.0
    sigma_eps: float = 1.0
    tau: float = 0.5
    # "2" keeps the base-2 entropy term as printed; "e" uses nats
    entropy_base: str = "2"

    def __post_init__(self):
        for name in ("sigma0", "lam", "lambda_s", "sigma_eps", "tau"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.entropy_base not in ("2", "e"):
            raise ValueError(f"entropy_base must be '2' or 'e', got {self.entropy_base!r}")


@dataclass
class NoiseDraw:
    eps: np.ndarray
    u: np.ndarray

    @classmethod
    def sample(cls, rng: np.random.Generator, H: int) -> NoiseDraw:
        eps = rng.standard_normal(H)
        u = np.clip(rng.uniform(size=H), U_CLAMP, 1.0 - U_CLAMP)
        return cls(eps, u)


@dataclass
class ThetaSample:
    theta_hard: np.ndarray
    theta_soft: np.ndarray
    gate_soft: np.ndarray
    gate_hard: np.ndarray
    slab: np.ndarray


def _logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def gumbel_gate(nu, u, tau: float):
    """Relaxed gate ``sigmoid((logit(nu) + logit(u)) / tau)`` and its hard threshold."""
    nu = np.asarray(nu, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.any((nu <= 0) | (nu >= 1)) or np.any((u <= 0) | (u >= 1)):
        raise ValueError("nu and u must lie strictly inside (0, 1)")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    soft = sigmoid((_logit(nu) + _logit(u)) / tau)
    hard = soft > 0.5
    if soft.ndim == 0:
        return float(soft), bool(hard)
    return soft, hard


def sample_theta(params: VariationalParams, noise: NoiseDraw, tau: float) -> ThetaSample:
    # logit(nu) == -nu_raw exactly, which avoids rounding nu near 0 or 1
    soft = sigmoid((-params.nu_raw + _logit(noise.u)) / tau)
    hard = soft > 0.5
    slab = params.mu + params.sigma * noise.eps
    return ThetaSample(
        theta_hard=np.where(hard, slab, 0.0),
        theta_soft=soft * slab,
        gate_soft=soft,
        gate_hard=hard,
        slab=slab,
    )


def kl_per_edge(params: VariationalParams, sigma0: float) -> np.ndarray:
    """KL(N(mu, sigma^2) || N(0, sigma0^2)) for each coordinate."""
    s = params.sigma
    return np.log(sigma0 / s) + (s * s + params.mu**2) / (2.0 * sigma0**2) - 0.5


def kl_gaussian_slab(params: VariationalParams, sigma0: float) -> float:
    if not sigma0 > 0:
        raise ValueError(f"sigma0 must be positive, got {sigma0}")
    return float(np.sum(params.nu * kl_per_edge(params, sigma0)))


def _log_entropy_scale(base: str) -> float:
    return math.log(2.0) if base == "2" else 1.0


def structure_entropy(total_nu: float, H: int, base: str = "2") -> float:
    """Gaussian approximation to the entropy of the number of active edges."""
    v = max(total_nu * (H - total_nu) / H, VARIANCE_FLOOR)
    return 0.5 * math.log(2.0 * math.pi * math.e * v) / _log_entropy_scale(base)


def kl_structure(params: VariationalParams, lambda_s: float, H: int, base: str = "2") -> float:
    if H != len(params):
        raise ShapeError(f"H={H} does not match params length {len(params)}")
    total = float(np.sum(params.nu))
    return -structure_entropy(total, H, base) + lambda_s * total


def kl_structure_dnu(params: VariationalParams, lambda_s: float, H: int, base: str = "2") -> float:
    """d kl_structure / d nu_i; the same for every coordinate."""
    total = float(np.sum(params.nu))
    v = total * (H - total) / H
    if v <= VARIANCE_FLOOR:
        return lambda_s
    dv = (H - 2.0 * total) / H
    return -0.5 * dv / (v * _log_entropy_scale(base)) + lambda_s


def log_prior_width(N: int, lam: float) -> float:
    """log of the zero-truncated Poisson prior ``lam**N / ((e**lam - 1) N!)``."""
    if int(N) != N or N < 1:
        raise ValueError(f"width prior is supported on N >= 1, got {N}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    log_norm = lam + math.log1p(-math.exp(-lam))
    return N * math.log(lam) - log_norm - math.lgamma(N + 1)
