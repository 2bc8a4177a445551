"""Command-line entry point: ``mwld {synth,train,audit,sweep,report}``.

Every command needs an explicit ``--seed``; environment variables are never
consulted. Outputs depend only on the flags and the input files.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import audit as au
from .data import (
    load_csv,
    load_schema,
    split_train_test,
    synth_two_group,
    two_group_schema,
    write_csv,
    write_schema,
)
from .model import LinearModel
from .trainer import (
    CLV_LAMBDA_GRID,
    ETA_GRID,
    LAMBDA_GRID,
    Objective,
    TrainConfig,
    fit,
    select_eta,
)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True, help="master seed (required)")
    p.add_argument("--out", type=Path, required=True, help="output directory")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", type=Path, required=True, help="input CSV")
    p.add_argument("--schema", required=True, help="schema YAML path or bundled name")
    p.add_argument("--test-fraction", type=float, default=0.3)


def _add_train_config(p: argparse.ArgumentParser, objective_choices=("lr", "lv", "clv")) -> None:
    p.add_argument("--objective", choices=objective_choices, default=objective_choices[0])
    p.add_argument("--eta", type=float, default=0.001)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--stratify-by-label", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--grid", action="store_true",
                   help="grid-search eta over {0.1, 0.01, 0.001, 0.0001} (and use the standard lambda grids)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mwld", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic two-group dataset and its schema")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--minority-fraction", type=float, default=0.2)
    p.add_argument("--noise-gap", type=float, default=0.3)
    _add_common(p)

    p = sub.add_parser("train", help="fit a logistic regression under LR/LV/CLV")
    _add_data(p)
    _add_train_config(p)
    _add_common(p)

    p = sub.add_parser("audit", help="audit a trained model on a dataset")
    _add_data(p)
    p.add_argument("--model", type=Path, required=True, help="weights file written by 'train'")
    p.add_argument("--ks", type=_floats, default=[0.1, 0.5, 1.0])
    p.add_argument("--shift-trials", type=int, default=1000)
    p.add_argument("--delta", type=float, default=0.05)
    _add_common(p)

    p = sub.add_parser("sweep", help="LV and CLV lambda trade-off sweeps")
    _add_data(p)
    _add_train_config(p, objective_choices=("both", "lv", "clv"))
    p.add_argument("--lambdas", type=_floats, default=None, help="comma-separated lambdas")
    _add_common(p)

    p = sub.add_parser("report", help="validate and summarize a report file")
    p.add_argument("--in", dest="path", type=Path, required=True)
    return parser


def _config_from(args, objective: str) -> TrainConfig:
    return TrainConfig(
        objective=Objective(objective),
        eta=args.eta,
        lam=args.lam,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        stratify_by_label=args.stratify_by_label,
    )


def _resolved(args) -> dict:
    # the output location never changes results, so it stays out of the digest
    out = {}
    for key, value in sorted(vars(args).items()):
        if key != "out":
            out[key] = str(value) if isinstance(value, Path) else value
    return out


def _announce(resolved: dict) -> str:
    digest = au.config_digest(resolved)
    print(f"config digest: {digest}")
    return digest


def _load_split(args, manifest=None):
    schema = load_schema(args.schema)
    data = load_csv(args.data, schema, manifest)
    train, test = split_train_test(data, args.test_fraction, args.seed)
    return data, train, test


def cmd_synth(args) -> None:
    data = synth_two_group(args.n, args.minority_fraction, args.noise_gap, args.seed)
    write_csv(data, args.out / "data.csv")
    write_schema(two_group_schema(), args.out / "two_group.yaml")
    print(f"wrote {data.n} rows to {args.out / 'data.csv'}")


def cmd_train(args) -> None:
    data, train, test = _load_split(args)
    config = _config_from(args, args.objective)
    if args.grid:
        config = replace(config, eta=select_eta(train, config, ETA_GRID, seed=args.seed))
    model, history = fit(train, config, test=test)
    weights_doc = {
        "weights": [float(w) for w in model.weights],
        "feature_names": data.feature_names + ["(intercept)"],
        "feature_manifest": data.feature_manifest,
        "config": config.to_dict(),
    }
    (args.out / "model.weights.json").write_text(
        json.dumps(weights_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    rows = [
        {"epoch": i + 1, "train_loss": r.train_loss, "train_penalty": r.train_penalty,
         "test_loss": r.test_loss, "test_penalty": r.test_penalty}
        for i, r in enumerate(history.records)
    ]
    au.write_curve(rows, ["epoch", "train_loss", "train_penalty", "test_loss", "test_penalty"],
                   args.out / "history.csv")
    print(f"final train loss {history.records[-1].train_loss:.6f}, "
          f"test loss {history.records[-1].test_loss:.6f}")


def _read_model(path: Path) -> tuple[LinearModel, dict]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return LinearModel(np.array(doc["weights"], dtype=float)), doc["feature_manifest"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"malformed weights file {path}: {exc}") from exc


def cmd_audit(args, digest: str) -> None:
    model, manifest = _read_model(args.model)
    data, train, test = _load_split(args, manifest)
    test_losses = au.model_losses(model, test)
    sections = {
        "mwld_by_k": au.k_sweep(model, train, test, args.ks),
        "size_profile": au.size_profile(model, test, ks=args.ks),
        "variance_block": au.variance_block(test_losses, test.labels, test.sensitive_keys),
        "bounds_block": au.bounds_block(test.n, args.delta, args.ks, T=test.T),
        "shift_checks": [au.shift_check(model, test, k, args.shift_trials, args.seed) for k in args.ks],
    }
    report = au.AuditReport(_metadata(args, digest, rescaled=sections["variance_block"]["rescaled"]), sections)
    au.write_report(report, args.out / "report.json")
    au.write_curve(sections["mwld_by_k"]["rows"], ["k", "train", "test", "gap"], args.out / "mwld_by_k.csv")
    profile_rows = [
        {"m": r["m"], "alpha": r["alpha"], "max_discrepancy": r["max_discrepancy"],
         **{f"envelope_k{k}": v for k, v in r["envelope"].items()}}
        for r in sections["size_profile"]["rows"]
    ]
    au.write_curve(profile_rows, list(profile_rows[0]), args.out / "size_profile.csv")
    print(f"wrote {args.out / 'report.json'}")


def cmd_sweep(args, digest: str) -> None:
    _, train, test = _load_split(args)
    config = _config_from(args, "lv")
    if args.grid:
        config = replace(config, eta=select_eta(train, config, ETA_GRID, seed=args.seed))
        lambdas, clv_lambdas = list(LAMBDA_GRID), list(CLV_LAMBDA_GRID)
    else:
        lambdas = args.lambdas if args.lambdas is not None else list(LAMBDA_GRID)
        clv_lambdas = lambdas
    if args.objective == "lv":
        clv_lambdas = []
    elif args.objective == "clv":
        lambdas = []
    curves = au.tradeoff_report(train, test, config, lambdas, clv_lambdas)
    report = au.AuditReport(_metadata(args, digest, rescaled=False), {"sweep_curves": curves})
    au.write_report(report, args.out / "report.json")
    columns = ["lambda", "test_loss", "conditional_lv", "conditional_clv",
               "explicit_group_mwld", "coarse_mwld_half"]
    for name in ("lv", "clv"):
        if curves[name]:
            au.write_curve(curves[name], columns, args.out / f"sweep_{name}.csv")
    print(f"wrote {args.out / 'report.json'}")


def _metadata(args, digest: str, rescaled: bool) -> dict:
    return {
        "command": args.command,
        "seed": args.seed,
        "config_digest": digest,
        "config": _resolved(args),
        "loss_kind": "log_loss",
        "loss_bound_L": au.LOG_LOSS_BOUND,
        "rescaling_applied": rescaled,
    }


def cmd_report(args) -> None:
    report = au.read_report(args.path)
    print(f"schema_version {au.SCHEMA_VERSION}, command {report.metadata.get('command')}, "
          f"seed {report.metadata.get('seed')}")
    for name in au.SECTIONS:
        print(f"  {name}: {'present' if name in report.sections else 'absent'}")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "report":
        try:
            cmd_report(args)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return 0
    digest = _announce(_resolved(args))
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            cmd_synth(args)
        elif args.command == "train":
            cmd_train(args)
        elif args.command == "audit":
            cmd_audit(args, digest)
        elif args.command == "sweep":
            cmd_sweep(args, digest)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
