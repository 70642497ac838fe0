"""Stochastic negative-ELBO estimation, its gradients, and the per-width training loop.

The negative ELBO splits into

* ``l1``: expected negative log-likelihood, estimated from ``K`` posterior draws
  on a minibatch and scaled by ``n / m``;
* ``l2``: inclusion-weighted KL between slab and prior slab (closed form);
* ``l3``: approximate KL on the inclusion pattern, ``-entropy + lambda_s * sum(nu)``.

Values of ``l1`` use hard-gated draws. Gradients are taken at the relaxed draw
``gate_soft * slab`` (straight-through), so they are exact gradients of the
"soft" surrogate computed by :func:`soft_neg_elbo`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from asvi.data import RegressionDataset
from asvi.net import NetworkShape, activations, backward_from_activations
from asvi.variational import (
    NoiseDraw,
    PriorConfig,
    VariationalParams,
    init_params,
    kl_gaussian_slab,
    kl_per_edge,
    kl_structure,
    kl_structure_dnu,
    sample_theta,
    sigmoid,
)

log = logging.getLogger(__name__)

EVAL_PASSES = 8


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1024
    mc_samples: int = 1
    epochs: int = 7000
    learning_rate: float = 5e-3
    optimizer: str = "adam"
    seed: int = 0
    early_stop_tol: float = 0.0
    early_stop_window: int = 50

    def __post_init__(self):
        if self.batch_size < 1 or self.mc_samples < 1 or self.epochs < 1 or self.early_stop_window < 1:
            raise ValueError("batch_size, mc_samples, epochs and early_stop_window must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "rmsprop"):
            raise ValueError(f"optimizer must be 'adam' or 'rmsprop', got {self.optimizer!r}")
        if self.early_stop_tol < 0:
            raise ValueError("early_stop_tol must be nonnegative")


@dataclass
class ElboReport:
    l1: float
    l2: float
    l3: float
    neg_elbo: float
    trace: list[float] = field(default_factory=list)
    omega: float | None = None
    epochs_run: int = 0
    snapshots: dict[int, VariationalParams] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "l1": self.l1,
            "l2": self.l2,
            "l3": self.l3,
            "neg_elbo": self.neg_elbo,
            "omega": self.omega,
            "epochs_run": self.epochs_run,
            "trace": list(self.trace),
        }


def _as_batch(batch):
    if isinstance(batch, RegressionDataset):
        return batch.X, batch.y
    X, y = batch
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if X.shape[0] != y.shape[0]:
        raise ValueError("batch X and y lengths differ")
    return X, y


def _nll_sum(shape, theta, X, y, sigma_eps):
    r = y - activations(shape, theta, X)[-1][:, 0]
    return float(np.sum(0.5 * math.log(2.0 * math.pi * sigma_eps**2) + r * r / (2.0 * sigma_eps**2)))


def penalty_terms(params: VariationalParams, prior: PriorConfig) -> tuple[float, float]:
    H = len(params)
    return kl_gaussian_slab(params, prior.sigma0), kl_structure(params, prior.lambda_s, H, prior.entropy_base)


def penalty_grad(params: VariationalParams, prior: PriorConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of ``l2 + l3`` w.r.t. ``mu``, ``sigma_raw`` and ``nu_raw``."""
    H = len(params)
    sigma, nu = params.sigma, params.nu
    d_mu = nu * params.mu / prior.sigma0**2
    d_sigma = nu * (-1.0 / sigma + sigma / prior.sigma0**2)
    d_nu = kl_per_edge(params, prior.sigma0) + kl_structure_dnu(params, prior.lambda_s, H, prior.entropy_base)
    return d_mu, d_sigma * sigmoid(params.sigma_raw), d_nu * (-nu * (1.0 - nu))


def neg_elbo_from_noise(params, shape, batch, n, prior: PriorConfig, noises, soft: bool = False) -> ElboReport:
    """Negative ELBO with the noise supplied; ``soft=True`` evaluates ``l1`` at relaxed draws."""
    params.check(shape)
    X, y = _as_batch(batch)
    scale = n / (X.shape[0] * len(noises))
    l1 = 0.0
    for noise in noises:
        ts = sample_theta(params, noise, prior.tau)
        l1 += _nll_sum(shape, ts.theta_soft if soft else ts.theta_hard, X, y, prior.sigma_eps)
    l1 *= scale
    l2, l3 = penalty_terms(params, prior)
    return ElboReport(l1, l2, l3, l1 + l2 + l3)


def soft_neg_elbo(params, shape, batch, n, prior, noises) -> float:
    return neg_elbo_from_noise(params, shape, batch, n, prior, noises, soft=True).neg_elbo


def _draw_noise(rng, H, K):
    return [NoiseDraw.sample(rng, H) for _ in range(K)]


def estimate_neg_elbo(params, shape, batch, n, prior, cfg: TrainConfig, rng) -> ElboReport:
    rng = np.random.default_rng(rng)
    return neg_elbo_from_noise(params, shape, batch, n, prior, _draw_noise(rng, len(params), cfg.mc_samples))


def _value_grad(params, shape, X, y, n, prior: PriorConfig, noises, want_value: bool):
    H = len(params)
    scale = n / (X.shape[0] * len(noises))
    s2 = prior.sigma_eps**2

    l1 = 0.0
    d_mu = np.zeros(H)
    d_sigma = np.zeros(H)
    d_nu_raw = np.zeros(H)
    for noise in noises:
        ts = sample_theta(params, noise, prior.tau)
        if want_value:
            l1 += _nll_sum(shape, ts.theta_hard, X, y, prior.sigma_eps)
        acts = activations(shape, ts.theta_soft, X)
        g = backward_from_activations(shape, ts.theta_soft, acts, scale * (acts[-1] - y[:, None]) / s2)
        G = ts.gate_soft
        d_mu += G * g
        d_sigma += G * noise.eps * g
        # dG/dnu_raw = -G (1 - G) / tau because logit(nu) = -nu_raw
        d_nu_raw += ts.slab * (-G * (1.0 - G) / prior.tau) * g

    p_mu, p_sigma_raw, p_nu_raw = penalty_grad(params, prior)
    grad = np.concatenate([d_mu + p_mu, d_sigma * sigmoid(params.sigma_raw) + p_sigma_raw, d_nu_raw + p_nu_raw])
    if not want_value:
        return None, grad
    l1 *= scale
    l2, l3 = penalty_terms(params, prior)
    return ElboReport(l1, l2, l3, l1 + l2 + l3), grad


def grad_from_noise(params, shape, batch, n, prior: PriorConfig, noises) -> np.ndarray:
    """Gradient of the soft surrogate w.r.t. the flat block ``(mu, sigma_raw, nu_raw)``."""
    params.check(shape)
    X, y = _as_batch(batch)
    return _value_grad(params, shape, X, y, n, prior, noises, want_value=False)[1]


def gradient_estimate(params, shape, batch, n, prior, cfg: TrainConfig, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    return grad_from_noise(params, shape, batch, n, prior, _draw_noise(rng, len(params), cfg.mc_samples))


def value_and_grad(params, shape, batch, n, prior, noises) -> tuple[ElboReport, np.ndarray]:
    """Hard-path value and soft-path gradient from one shared set of noise draws."""
    params.check(shape)
    X, y = _as_batch(batch)
    return _value_grad(params, shape, X, y, n, prior, noises, want_value=True)


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    decay: float = 0.9
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, kind: str = "adam") -> OptimizerState:
        return cls(np.zeros(size), np.zeros(size), 0, kind)


def optimizer_update(state: OptimizerState, params: np.ndarray, grads: np.ndarray, lr: float):
    """One Adam (bias-corrected) or RMSprop step; returns new ``(params, state)``."""
    if not (params.shape == grads.shape == state.first_moment.shape):
        raise ValueError("optimizer state, params and grads must share one shape")
    t = state.step_count + 1
    if state.kind == "adam":
        m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
        v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        step = lr * m_hat / (np.sqrt(v_hat) + state.eps)
    elif state.kind == "rmsprop":
        m = state.first_moment
        v = state.decay * state.second_moment + (1.0 - state.decay) * grads * grads
        step = lr * grads / (np.sqrt(v) + state.eps)
    else:
        raise ValueError(f"unknown optimizer {state.kind!r}")
    new_state = OptimizerState(m, v, t, state.kind, state.beta1, state.beta2, state.decay, state.eps)
    return params - step, new_state


def _batches(n, m, rng):
    perm = rng.permutation(n)
    return [perm[i:i + m] for i in range(0, n, m)]


def evaluate_omega(params, shape, dataset: RegressionDataset, prior, cfg: TrainConfig, rng, passes: int = EVAL_PASSES) -> ElboReport:
    """Full-data negative ELBO averaged over ``passes`` fresh noise draws."""
    reps = [estimate_neg_elbo(params, shape, dataset, dataset.n, prior, cfg, rng) for _ in range(passes)]
    l1 = math.fsum(r.l1 for r in reps) / passes
    l2, l3 = reps[0].l2, reps[0].l3
    neg = l1 + l2 + l3
    return ElboReport(l1, l2, l3, neg, omega=-neg)


def train_width(
    dataset: RegressionDataset,
    shape: NetworkShape,
    prior: PriorConfig,
    cfg: TrainConfig,
    snapshot_epochs=(),
    init: VariationalParams | None = None,
) -> tuple[VariationalParams, ElboReport]:
    """Fit the variational posterior for one architecture.

    The trace holds the mean minibatch negative-ELBO estimate of each epoch.
    ``snapshot_epochs`` selects epochs after which a copy of the parameters
    is kept in ``report.snapshots``; epoch 0 is the initialization.
    """
    n = dataset.n
    if dataset.p != shape.input_dim:
        raise ValueError(f"dataset has {dataset.p} features, network expects {shape.input_dim}")
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")
    init_ss, shuffle_ss, noise_ss, eval_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    noise_rng = np.random.default_rng(noise_ss)

    params = init.copy() if init is not None else init_params(shape, np.random.default_rng(init_ss))
    params.check(shape)
    H = len(params)
    flat = params.flat()
    state = OptimizerState.zeros(3 * H, cfg.optimizer)
    wanted = set(int(e) for e in snapshot_epochs)
    snapshots = {}
    trace: list[float] = []
    w = cfg.early_stop_window
    if 0 in wanted:
        snapshots[0] = params.copy()

    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        idx_list = _batches(n, cfg.batch_size, shuffle_rng)
        for idx in idx_list:
            noises = _draw_noise(noise_rng, H, cfg.mc_samples)
            batch = (dataset.X[idx], dataset.y[idx])
            rep, grad = value_and_grad(params, shape, batch, n, prior, noises)
            if not (math.isfinite(rep.neg_elbo) and np.all(np.isfinite(grad))):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch)
            flat, state = optimizer_update(state, flat, grad, cfg.learning_rate)
            params = VariationalParams.from_flat(flat)
            total += rep.neg_elbo
        trace.append(total / len(idx_list))
        if epoch in wanted:
            snapshots[epoch] = params.copy()
        if cfg.early_stop_tol > 0 and epoch >= 2 * w:
            prev = sum(trace[-2 * w:-w]) / w
            cur = sum(trace[-w:]) / w
            if prev - cur < cfg.early_stop_tol * abs(prev):
                log.info("early stop at epoch %d", epoch)
                break

    if not np.all(np.isfinite(flat)):
        raise TrainingError("non-finite parameters after training", epoch)
    report = evaluate_omega(params, shape, dataset, prior, cfg, np.random.default_rng(eval_ss))
    if not math.isfinite(report.neg_elbo):
        raise TrainingError("non-finite final evaluation", epoch)
    report.trace = trace
    report.epochs_run = epoch
    report.snapshots = snapshots
    return params, report
