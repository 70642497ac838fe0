"""Command-line entry point: ``asvi {teacher,train,select,rates,eval}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from asvi import rates as rates_mod
from asvi.config import RunConfig, load_config
from asvi.data import DataError, RegressionDataset, Standardizer, fit_standardizer, load_csv, split, write_csv
from asvi.elbo import TrainingError, train_width
from asvi.evaluate import empirical_hellinger_sq, posterior_mean_predict, rmse, sparsity_summary
from asvi.net import NetworkShape
from asvi.select import SelectionError, WidthCandidate, select_width
from asvi.teacher import TeacherNetwork, generate_teacher, synthesize
from asvi.variational import VariationalParams

log = logging.getLogger("asvi")


class CliError(Exception):
    pass


def dump_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def save_params(path: Path, shape: NetworkShape, params: VariationalParams, standardizer: Standardizer | None = None) -> None:
    doc = {
        "shape": shape.to_dict(),
        "mu": params.mu.tolist(),
        "sigma_raw": params.sigma_raw.tolist(),
        "nu_raw": params.nu_raw.tolist(),
        "standardizer": standardizer.to_dict() if standardizer else None,
    }
    dump_json(path, doc)


def load_params(path) -> tuple[NetworkShape, VariationalParams, Standardizer | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    shape = NetworkShape.from_dict(doc["shape"])
    params = VariationalParams(doc["mu"], doc["sigma_raw"], doc["nu_raw"])
    params.check(shape)
    std = Standardizer.from_dict(doc["standardizer"]) if doc.get("standardizer") else None
    return shape, params, std


def load_teacher(path) -> TeacherNetwork:
    return TeacherNetwork.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _write_rows_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in columns])


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "x".join(str(x) for x in v)
    return v


def evaluate_params(shape, params, test: RegressionDataset, prior_tau, sigma_eps, draws, seed,
                    standardizer=None, teacher=None) -> dict:
    """Metrics for one fitted posterior on raw-scale test data."""
    X = standardizer.apply(test).X if standardizer else test.X
    pred = posterior_mean_predict(params, shape, X, draws=draws, tau=prior_tau, rng=seed)
    if standardizer:
        pred = standardizer.invert_y(pred)
    mean_incl, edges = sparsity_summary(params)
    out = {"test_rmse": rmse(pred, test.y), "mean_inclusion": mean_incl, "expected_edges": edges}
    if teacher is not None and standardizer is None:
        out["test_hellinger_sq"] = empirical_hellinger_sq(
            params, teacher, X, sigma_eps, shape=shape, draws=draws, tau=prior_tau, rng=seed
        )
    return out


def _eval_seed(cfg: RunConfig, seed: int) -> int:
    return cfg.eval.seed if cfg.eval.seed is not None else seed


def _load_train_test(cfg: RunConfig):
    if not cfg.data.train_csv:
        raise CliError("data.train_csv is required")
    sigma = cfg.prior.sigma_eps
    train = load_csv(cfg.data.train_csv, cfg.data.target, sigma)
    test = load_csv(cfg.data.test_csv, cfg.data.target, sigma) if cfg.data.test_csv else None
    teacher = load_teacher(cfg.data.teacher) if cfg.data.teacher else None
    return train, test, teacher


def cmd_teacher(cfg: RunConfig, out: Path) -> dict:
    seed = cfg.resolved_seed()
    t = cfg.teacher
    teacher_ss, train_ss, test_ss = np.random.SeedSequence(seed).spawn(3)
    shape = NetworkShape(t.input_dim, tuple(t.widths))
    teacher = generate_teacher(shape, t.weight_low, t.weight_high, t.zero_rate, np.random.default_rng(teacher_ss))
    teacher = TeacherNetwork(teacher.shape, teacher.theta, teacher.mask, seed)
    train = synthesize(teacher, t.n, t.sigma_eps, np.random.default_rng(train_ss))
    test = synthesize(teacher, t.n_test, t.sigma_eps, np.random.default_rng(test_ss))
    dump_json(out / "teacher.json", teacher.to_dict())
    write_csv(out / "train.csv", train)
    write_csv(out / "test.csv", test)
    summary = {"teacher": str(out / "teacher.json"), "n_params": shape.n_params, "nonzero_count": teacher.nonzero_count}
    return summary


def _fit_one(cfg, seed, train, test, teacher, out: Path, tag: str) -> dict:
    prior = cfg.prior.build()
    std = fit_standardizer(train) if cfg.data.standardize else None
    fit_data = std.apply(train) if std else train
    shape = NetworkShape(train.p, tuple(cfg.widths))
    params, report = train_width(fit_data, shape, prior, cfg.train.build(seed))
    save_params(out / f"params{tag}.json", shape, params, std)
    _write_rows_csv(out / f"trace{tag}.csv", [{"epoch": i + 1, "neg_elbo": v} for i, v in enumerate(report.trace)],
                    ["epoch", "neg_elbo"])
    result = {"params": str(out / f"params{tag}.json"), "elbo": report.to_dict()}
    eval_seed = _eval_seed(cfg, seed)
    train_pred = posterior_mean_predict(params, shape, fit_data.X, draws=cfg.eval.draws, tau=prior.tau, rng=eval_seed)
    if std:
        train_pred = std.invert_y(train_pred)
    metrics = {"train_rmse": rmse(train_pred, train.y)}
    if test is not None:
        metrics.update(evaluate_params(shape, params, test, prior.tau, prior.sigma_eps, cfg.eval.draws, eval_seed, std, teacher))
    else:
        metrics.update(zip(("mean_inclusion", "expected_edges"), sparsity_summary(params)))
    result["metrics"] = metrics
    result["eval_seed"] = eval_seed
    result["eval_draws"] = cfg.eval.draws
    return result


def cmd_train(cfg: RunConfig, out: Path) -> dict:
    seed = cfg.resolved_seed()
    train, test, teacher = _load_train_test(cfg)
    report = {"seed": seed, "config": cfg.model_dump(by_alias=True)}
    if cfg.data.split is not None and test is None:
        runs = []
        for k, (tr, te) in enumerate(split(train, cfg.data.split.build(seed))):
            runs.append(_fit_one(cfg, seed + k, tr, te, teacher, out, f"_r{k}"))
        scores = [r["metrics"]["test_rmse"] for r in runs]
        report["replications"] = runs
        report["test_rmse_mean"] = math.fsum(scores) / len(scores)
        report["test_rmse_std"] = float(np.std(scores))
    else:
        report.update(_fit_one(cfg, seed, train, test, teacher, out, ""))
    dump_json(out / "report.json", report)
    return report


def _candidates(cfg: RunConfig, p: int) -> list[WidthCandidate]:
    if cfg.multipliers:
        return [WidthCandidate.from_multiplier(N, p, len(cfg.widths)) for N in cfg.multipliers]
    if not cfg.candidates:
        raise CliError("select needs a non-empty 'candidates' (or 'multipliers') list")
    return [WidthCandidate(tuple(c)) for c in cfg.candidates]


SELECTION_COLUMNS = ["index", "widths", "N", "n_params", "status", "omega", "log_prior", "omega_p",
                     "l1", "l2", "l3", "expected_edges", "mean_inclusion", "test_rmse", "test_hellinger_sq", "error"]


def cmd_select(cfg: RunConfig, out: Path, parallel: int = 1) -> dict:
    seed = cfg.resolved_seed()
    train, test, teacher = _load_train_test(cfg)
    if cfg.data.standardize:
        std = fit_standardizer(train)
        train = std.apply(train)
        test = std.apply(test) if test is not None else None
        teacher = None
    else:
        std = None
    prior = cfg.prior.build()
    report = select_width(train, _candidates(cfg, train.p), prior, cfg.train.build(seed), parallel=parallel,
                          test=test, teacher=teacher, eval_draws=cfg.eval.draws)
    save_params(out / "params_selected.json", report.selected_shape, report.selected_params, std)
    doc = report.to_dict()
    doc["selected_widths"] = report.selected_row["widths"]
    doc["params"] = "params_selected.json"
    dump_json(out / "selection.json", doc)
    _write_rows_csv(out / "selection.csv", report.rows, SELECTION_COLUMNS)
    return doc


def cmd_rates(cfg: RunConfig, out: Path | None) -> dict:
    if cfg.rates is None:
        raise CliError("rates section is required")
    r = cfg.rates
    inputs = rates_mod.RateInputs(L=r.L, N=r.N, s=r.s, n=r.n, p=r.p, B=r.B, alpha=r.alpha, delta=r.delta, M=r.M)
    doc = {
        "inputs": r.model_dump(),
        "variational_error": rates_mod.variational_error(inputs),
        "estimation_rate": rates_mod.estimation_rate(inputs),
    }
    if r.alpha is not None:
        hs = rates_mod.holder_structure(r.alpha, r.p, r.n, r.C_N)
        doc["holder_structure"] = hs._asdict()
        if r.f_norm is not None:
            doc["holder_approx_bound"] = rates_mod.holder_approx_bound(r.alpha, r.p, r.n, r.N, r.f_norm)
    if out is not None:
        dump_json(out / "rates.json", doc)
    return doc


def cmd_eval(cfg: RunConfig, out: Path) -> dict:
    if not cfg.eval.params or not cfg.data.test_csv:
        raise CliError("eval needs eval.params and data.test_csv")
    shape, params, std = load_params(cfg.eval.params)
    test = load_csv(cfg.data.test_csv, cfg.data.target, cfg.prior.sigma_eps)
    teacher = load_teacher(cfg.data.teacher) if cfg.data.teacher else None
    seed = _eval_seed(cfg, cfg.resolved_seed())
    metrics = evaluate_params(shape, params, test, cfg.prior.tau, cfg.prior.sigma_eps, cfg.eval.draws, seed, std, teacher)
    doc = {"params": cfg.eval.params, "eval_seed": seed, "eval_draws": cfg.eval.draws, "metrics": metrics}
    dump_json(out / "eval.json", doc)
    return doc


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _candidate_list(text: str) -> list[list[int]]:
    return [_int_list(c) for c in text.split(";") if c.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asvi", description="Adaptive sparse variational inference for ReLU networks.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("teacher", "train", "select", "rates", "eval"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--parallel", type=int, default=1, help="worker processes for select")
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--lambda-s", type=float)
        p.add_argument("--sigma0", type=float)
        p.add_argument("--sigma-eps", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--widths", type=_int_list, help="hidden widths, e.g. 10,10")
        p.add_argument("--candidates", type=_candidate_list, help="candidate widths, e.g. '2,2;4,4;8,8'")
    return ap


def _overrides(args) -> dict:
    return {
        "seed": args.seed,
        "out": args.out,
        "train.learning_rate": args.lr,
        "train.epochs": args.epochs,
        "train.batch_size": args.batch_size,
        "prior.lambda": args.lam,
        "prior.lambda_s": args.lambda_s,
        "prior.sigma0": args.sigma0,
        "prior.sigma_eps": args.sigma_eps,
        "prior.tau": args.tau,
        "widths": args.widths,
        "candidates": args.candidates,
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        out = Path(cfg.out)
        if args.command == "teacher":
            doc = cmd_teacher(cfg, out)
        elif args.command == "train":
            doc = cmd_train(cfg, out)
        elif args.command == "select":
            if args.parallel < 1:
                raise CliError("--parallel must be >= 1")
            doc = cmd_select(cfg, out, args.parallel)
        elif args.command == "rates":
            doc = cmd_rates(cfg, out if args.out else None)
        else:
            doc = cmd_eval(cfg, out)
    except ValidationError as exc:
        print(f"asvi: invalid configuration:\n{exc}", file=sys.stderr)
        return 2
    except (CliError, DataError, TrainingError, SelectionError, ValueError, OSError) as exc:
        print(f"asvi {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if args.command == "rates":
        print(json.dumps(doc, indent=2))
    else:
        print(json.dumps({k: v for k, v in doc.items() if k not in ("config", "candidates", "replications")}, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
