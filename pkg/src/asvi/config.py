"""Run configuration for the command-line tool.

Defaults follow the teacher-network settings used for the simulation study
(batch 1024, K=1, Adam at 5e-3, lambda_s=3, lambda=10, sigma0=0.8).
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from asvi.data import SplitSpec
from asvi.elbo import TrainConfig
from asvi.variational import PriorConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class PriorSection(_Strict):
    sigma0: PositiveFloat = 0.8
    lam: PositiveFloat = Field(10.0, alias="lambda")
    lambda_s: PositiveFloat = 3.0
    sigma_eps: PositiveFloat = 1.0
    tau: PositiveFloat = 0.5
    entropy_base: Literal["2", "e"] = "2"

    def build(self) -> PriorConfig:
        return PriorConfig(self.sigma0, self.lam, self.lambda_s, self.sigma_eps, self.tau, self.entropy_base)


class TrainSection(_Strict):
    batch_size: PositiveInt = 1024
    mc_samples: PositiveInt = 1
    epochs: PositiveInt = 7000
    learning_rate: PositiveFloat = 5e-3
    optimizer: Literal["adam", "rmsprop"] = "adam"
    early_stop_tol: float = Field(0.0, ge=0)
    early_stop_window: PositiveInt = 50

    def build(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, **self.model_dump())


class TeacherSection(_Strict):
    input_dim: PositiveInt = 20
    widths: list[PositiveInt] = Field(default_factory=lambda: [10, 10])
    weight_low: float = 0.5
    weight_high: float = 1.5
    zero_rate: float = Field(0.5, ge=0, le=1)
    n: PositiveInt = 10000
    n_test: PositiveInt = 1000
    sigma_eps: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _bounds(self):
        if not self.weight_low < self.weight_high:
            raise ValueError("weight_low must be below weight_high")
        return self


class SplitSection(_Strict):
    test_fraction: float = Field(0.1, gt=0, lt=1)
    replications: PositiveInt = 1
    seed: Optional[int] = None

    def build(self, seed: int) -> SplitSpec:
        return SplitSpec(self.test_fraction, self.seed if self.seed is not None else seed, self.replications)


class DataSection(_Strict):
    train_csv: Optional[str] = None
    test_csv: Optional[str] = None
    target: Union[int, str] = -1
    standardize: bool = False
    split: Optional[SplitSection] = None
    teacher: Optional[str] = None


class EvalSection(_Strict):
    draws: PositiveInt = 30
    seed: Optional[int] = None
    params: Optional[str] = None


class RatesSection(_Strict):
    L: PositiveInt
    N: PositiveFloat
    s: float = Field(ge=1)
    n: PositiveInt
    p: PositiveInt
    B: PositiveFloat = 2.0
    delta: PositiveFloat = 1.0
    M: PositiveFloat = 1.0
    alpha: Optional[PositiveFloat] = None
    C_N: PositiveFloat = 1.0
    f_norm: Optional[float] = Field(None, ge=0)


class RunConfig(_Strict):
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    out: str = "runs"
    prior: PriorSection = Field(default_factory=PriorSection)
    train: TrainSection = Field(default_factory=TrainSection)
    teacher: TeacherSection = Field(default_factory=TeacherSection)
    data: DataSection = Field(default_factory=DataSection)
    widths: list[PositiveInt] = Field(default_factory=lambda: [10, 10])
    candidates: Optional[list[list[PositiveInt]]] = None
    multipliers: Optional[list[PositiveInt]] = None
    eval: EvalSection = Field(default_factory=EvalSection)
    rates: Optional[RatesSection] = None

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get("SVI_SEED")
        return int(env) if env else 0


def _set(tree: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        tree = tree.setdefault(k, {})
    tree[keys[-1]] = value


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config (optional), apply dotted-key overrides, validate."""
    raw = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: top level must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            _set(raw, key, value)
    return RunConfig.model_validate(raw)
