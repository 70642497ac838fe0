"""Width selection by penalized ELBO over a candidate set."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from asvi.data import RegressionDataset
from asvi.elbo import TrainConfig, TrainingError, train_width
from asvi.evaluate import empirical_hellinger_sq, posterior_mean_predict, rmse, sparsity_summary
from asvi.net import NetworkShape
from asvi.variational import PriorConfig, VariationalParams, log_prior_width

log = logging.getLogger(__name__)


class SelectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class WidthCandidate:
    """Hidden widths of one candidate and the width index ``N`` fed to the prior.

    For explicit widths ``N`` defaults to the largest hidden width; candidates
    built with :meth:`from_multiplier` use the multiplier itself.
    """

    widths: tuple[int, ...]
    N: int | None = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if not widths or any(w < 1 for w in widths):
            raise ValueError(f"candidate widths must be a non-empty list of positive ints, got {self.widths}")
        object.__setattr__(self, "widths", widths)
        if self.N is None:
            object.__setattr__(self, "N", max(widths))
        elif self.N < 1:
            raise ValueError("N must be >= 1")

    @classmethod
    def square(cls, width: int, n_hidden: int = 2) -> WidthCandidate:
        return cls((width,) * n_hidden)

    @classmethod
    def from_multiplier(cls, N: int, p: int, n_hidden: int) -> WidthCandidate:
        return cls((12 * p * N,) * n_hidden, N)

    def shape(self, input_dim: int) -> NetworkShape:
        return NetworkShape(input_dim, self.widths)


def penalized_elbo(omega: float, N: int, lam: float) -> float:
    return omega + log_prior_width(N, lam)


def candidate_seed(seed: int, index: int) -> int:
    """Seed for candidate ``index``; independent of how many candidates exist."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


@dataclass
class SelectionReport:
    rows: list[dict]
    selected: int
    seed: int
    selected_params: VariationalParams | None = field(default=None, repr=False)
    selected_shape: NetworkShape | None = None

    @property
    def selected_row(self) -> dict:
        return self.rows[self.selected]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "selected": self.selected, "candidates": self.rows}


def pick_best(rows: list[dict]) -> int:
    """Index of the eligible row with the largest ``omega_p``; ties go to fewer parameters."""
    ok = [r for r in rows if r["status"] == "ok" and math.isfinite(r["omega_p"])]
    if not ok:
        raise SelectionError("every candidate failed to train")
    return max(ok, key=lambda r: (r["omega_p"], -r["n_params"], -r["index"]))["index"]


def _run_candidate(job):
    index, cand, dataset, prior, cfg, test, teacher, eval_draws = job
    shape = cand.shape(dataset.p)
    seed = candidate_seed(cfg.seed, index)
    row = {
        "index": index,
        "widths": list(cand.widths),
        "N": cand.N,
        "n_params": shape.n_params,
        "seed": seed,
    }
    try:
        params, report = train_width(dataset, shape, prior, replace(cfg, seed=seed))
    except (TrainingError, FloatingPointError) as exc:
        row.update(status="failed", error=str(exc))
        return row, None
    mean_incl, expected_edges = sparsity_summary(params)
    row.update(
        status="ok",
        omega=report.omega,
        l1=report.l1,
        l2=report.l2,
        l3=report.l3,
        epochs_run=report.epochs_run,
        mean_inclusion=mean_incl,
        expected_edges=expected_edges,
    )
    if test is not None:
        pred = posterior_mean_predict(params, shape, test.X, draws=eval_draws, tau=prior.tau, rng=seed)
        row["test_rmse"] = rmse(pred, test.y)
        if teacher is not None and teacher.shape.input_dim == shape.input_dim:
            row["test_hellinger_sq"] = empirical_hellinger_sq(
                params, teacher, test.X, prior.sigma_eps, shape=shape, draws=eval_draws, tau=prior.tau, rng=seed
            )
    return row, params


def select_width(
    dataset: RegressionDataset,
    candidates: list[WidthCandidate],
    prior: PriorConfig,
    cfg: TrainConfig,
    parallel: int = 1,
    test: RegressionDataset | None = None,
    teacher=None,
    eval_draws: int = 30,
) -> SelectionReport:
    """Train every candidate and keep the one with the largest penalized ELBO.

    Failed candidates stay in the report but are not eligible. Ties go to the
    candidate with fewer parameters.
    """
    if not candidates:
        raise SelectionError("no candidates given")
    jobs = [(i, c, dataset, prior, cfg, test, teacher, eval_draws) for i, c in enumerate(candidates)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_candidate, jobs))
    else:
        results = [_run_candidate(j) for j in jobs]

    rows = []
    for (row, _), cand in zip(results, candidates):
        if row["status"] == "ok":
            row["log_prior"] = log_prior_width(cand.N, prior.lam)
            row["omega_p"] = row["omega"] + row["log_prior"]
        else:
            log.warning("candidate %s failed: %s", row["widths"], row["error"])
        rows.append(row)

    k = pick_best(rows)
    return SelectionReport(rows, k, cfg.seed, results[k][1], candidates[k].shape(dataset.p))
