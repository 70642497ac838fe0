"""CSV ingestion, standardization and seeded train/test splits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionDataset:
    X: np.ndarray
    y: np.ndarray
    sigma_eps: float = 1.0
    provenance: str = "synthetic"
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise DataError(f"X must be 2-d, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if self.provenance not in ("synthetic", "csv"):
            raise DataError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> RegressionDataset:
        return replace(self, X=self.X[idx], y=self.y[idx])


def load_csv(path, target_column: str | int = -1, sigma_eps: float = 1.0) -> RegressionDataset:
    """Read a comma-separated file with a header row.

    Every non-target column becomes a feature, in file order. Cell locations in
    error messages are 1-based, counting the header as row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    ncol = len(header)
    if isinstance(target_column, str) and not target_column.lstrip("-").isdigit():
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not in header {header}")
        t = header.index(target_column)
    else:
        t = int(target_column)
        if not -ncol <= t < ncol:
            raise DataError(f"{path}: target index {t} out of range for {ncol} columns")
        t %= ncol

    values = np.empty((len(rows) - 1, ncol))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != ncol:
            raise DataError(f"{path}: row {r} has {len(row)} cells, header has {ncol}")
        for c, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at (row {r}, col {c})") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: non-finite cell {cell!r} at (row {r}, col {c})")
            values[r - 2, c - 1] = v
    feats = [c for c in range(ncol) if c != t]
    return RegressionDataset(
        values[:, feats], values[:, t], sigma_eps=sigma_eps, provenance="csv",
        feature_names=tuple(header[c] for c in feats) + (header[t],),
    )


def write_csv(path, dataset: RegressionDataset) -> None:
    names = dataset.feature_names or tuple(f"x{i + 1}" for i in range(dataset.p)) + ("y",)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for x, y in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


@dataclass(frozen=True)
class Standardizer:
    x_means: np.ndarray
    x_stds: np.ndarray
    y_mean: float
    y_std: float

    def apply(self, ds: RegressionDataset) -> RegressionDataset:
        return replace(ds, X=(ds.X - self.x_means) / self.x_stds, y=(ds.y - self.y_mean) / self.y_std)

    def invert_y(self, y):
        return np.asarray(y) * self.y_std + self.y_mean

    def to_dict(self) -> dict:
        return {
            "x_means": self.x_means.tolist(),
            "x_stds": self.x_stds.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Standardizer:
        return cls(np.asarray(d["x_means"], float), np.asarray(d["x_stds"], float), float(d["y_mean"]), float(d["y_std"]))


def fit_standardizer(train: RegressionDataset) -> Standardizer:
    if train.n == 0:
        raise DataError("cannot standardize an empty dataset")
    xs = train.X.std(axis=0)
    xs[xs == 0] = 1.0
    ys = float(train.y.std())
    return Standardizer(train.X.mean(axis=0), xs, float(train.y.mean()), ys if ys > 0 else 1.0)


def apply(standardizer: Standardizer, dataset: RegressionDataset) -> RegressionDataset:
    return standardizer.apply(dataset)


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.1
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise DataError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if self.replications < 1:
            raise DataError("replications must be >= 1")


def split(dataset: RegressionDataset, spec: SplitSpec) -> list[tuple[RegressionDataset, RegressionDataset]]:
    n = dataset.n
    n_test = max(1, int(math.floor(spec.test_fraction * n)))
    if n_test >= n:
        raise DataError(f"test split of {n_test} rows leaves no training data (n={n})")
    children = np.random.SeedSequence(spec.seed).spawn(spec.replications)
    out = []
    for ss in children:
        perm = np.random.default_rng(ss).permutation(n)
        test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
        out.append((dataset.subset(train_idx), dataset.subset(test_idx)))
    return out
