"""Calculators for variational error, estimation rate and Hölder-class network sizing.

These report rate shapes. Unspecified absolute constants default to 1
(``B`` defaults to 2); natural logs are used except in the depth formula,
which uses exact integer ``floor(log2)`` / ``ceil(log2)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple


@dataclass(frozen=True)
class RateInputs:
    L: int
    N: float
    s: float
    n: int
    p: int
    B: float = 2.0
    alpha: float | None = None
    delta: float = 1.0
    M: float = 1.0

    def __post_init__(self):
        for name in ("L", "N", "n", "p", "B", "delta", "M"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.s >= 1:
            raise ValueError(f"sparsity s must be >= 1, got {self.s}")
        if not self.n * self.L / self.s > 1:
            raise ValueError("requires n*L/s > 1")

    def to_dict(self) -> dict:
        return asdict(self)


def variational_error(r: RateInputs) -> float:
    """``(L s / n) log(12 B p N) + (s / n) log(n L / s)``."""
    return (r.L * r.s / r.n) * math.log(12.0 * r.B * r.p * r.N) + (r.s / r.n) * math.log(r.n * r.L / r.s)


def estimation_rate(r: RateInputs) -> float:
    """``M sqrt((s log(nL/s) + L s log(pN)) / n) log(n)**delta``."""
    if not r.p * r.N > 1:
        raise ValueError("requires p*N > 1")
    inner = (r.s * math.log(r.n * r.L / r.s) + r.L * r.s * math.log(r.p * r.N)) / r.n
    return r.M * math.sqrt(inner) * math.log(r.n) ** r.delta


class HolderStructure(NamedTuple):
    L: int
    s_bound: float
    N: float


def _floor_log2(k: int) -> int:
    return k.bit_length() - 1


def _ceil_log2(k: int) -> int:
    return (k - 1).bit_length()


def holder_structure(alpha: float, p: int, n: int, C_N: float = 1.0) -> HolderStructure:
    """Depth, sparsity bound and width multiplier for an ``alpha``-Hölder target."""
    if not (alpha > 0 and p >= 1 and C_N > 0):
        raise ValueError("alpha and C_N must be positive, p >= 1")
    if n < 2:
        raise ValueError("n must be >= 2")
    p, n = int(p), int(n)
    depth = 8 + (_floor_log2(n) + 5) * (1 + _ceil_log2(p))
    N = C_N * math.floor(n ** (p / (2.0 * alpha + p)) / math.log(n))
    s_bound = 94.0 * p**2 * (alpha + 1.0) ** (2 * p) * N * (depth + _ceil_log2(p))
    return HolderStructure(depth, s_bound, N)


def holder_approx_bound(alpha: float, p: int, n: int, N: float, f_norm: float) -> float:
    """Sup-norm approximation bound for the network prescribed above."""
    if not (alpha > 0 and p >= 1 and n > 0 and N > 0 and f_norm >= 0):
        raise ValueError("alpha, n, N must be positive, p >= 1, f_norm >= 0")
    return (2.0 * f_norm + 1.0) * 3.0 ** (p + 1) * (N / n) + f_norm * 2.0**alpha * N ** (-alpha / p)
