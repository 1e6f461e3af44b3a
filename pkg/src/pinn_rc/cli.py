"""Command-line entry point: ``pinn-rc <command> --config run.json``.

Exit status: 0 success, 1 I/O failure or failed gradient check,
2 invalid configuration or dataset, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import jsonschema

from . import report
from .circuits import FIXTURES, CircuitCase, CircuitError
from .gradcheck import run_gradcheck
from .inverse import (
    DatasetError,
    TrainableParams,
    dataset_csv,
    generate_synthetic,
    read_dataset_csv,
    train_inverse,
)
from .net import to_bytes
from .training import ConfigError, TrainConfig, TrainingDivergence, sample_collocation, train_forward

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

_positive = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}

CASE_SCHEMA = {
    "oneOf": [
        {"type": "string", "enum": sorted(FIXTURES)},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["u_dc", "branches"],
            "properties": {
                "u_dc": _positive,
                "r0": _positive,
                "label": {"type": "string"},
                "branches": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["r", "c"],
                        "properties": {"r": _positive, "c": _positive},
                    },
                },
            },
        },
    ]
}

TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "t_end": _positive,
        "learning_rate": _positive,
        "iterations": _count,
        "loss_weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "minimum": 0} for k in ("ic", "pde", "data")},
        },
        "n_collocation": {"type": "integer", "minimum": 2},
        "n_test": {"type": "integer", "minimum": 2},
        "formulation": {"enum": ["raw", "log"]},
        "seed": {"type": "integer"},
        "hidden": {"type": "array", "items": _count, "minItems": 0},
        "log_every": _count,
        "sampling": {"enum": ["uniform", "random"]},
        "keep_best": {"type": "boolean"},
    },
}

SYNTH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_points": {"type": "integer", "minimum": 1},
        "noise_sigma": {"type": "number", "minimum": 0},
        "seed": {"type": "integer"},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "pattern": r"^[A-Za-z0-9_.-]+$"},
        "case": CASE_SCHEMA,
        "train": TRAIN_SCHEMA,
        "synth": SYNTH_SCHEMA,
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"type": "string"}, "synthetic": SYNTH_SCHEMA},
            "minProperties": 1,
            "maxProperties": 1,
        },
        "inverse": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "init_scale": _positive,
                "init": {"type": "object", "additionalProperties": _positive},
                "free": {"type": "array", "items": {"type": "string"}},
                "include_ic": {"type": "boolean"},
                "lr_params": _positive,
                "truth_known": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_ends"],
            "properties": {
                "t_ends": {"type": "array", "items": _positive, "minItems": 1},
                "scale_points": {"type": "boolean"},
            },
        },
    },
}


class ConfigInvalid(Exception):
    pass


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {err.message}")


def build_case(cfg: dict) -> CircuitCase:
    case_cfg = cfg.get("case", "case0")
    try:
        return FIXTURES[case_cfg] if isinstance(case_cfg, str) else CircuitCase.from_dict(case_cfg)
    except CircuitError as exc:
        raise ConfigInvalid(f"case: {exc}") from None


def build_train_config(cfg: dict, seed: int | None = None) -> TrainConfig:
    t = dict(cfg.get("train", {}))
    if "loss_weights" in t:
        w = t["loss_weights"]
        t["loss_weights"] = (w.get("ic", 1.0), w.get("pde", 1.0), w.get("data", 1.0))
    if seed is not None:
        t["seed"] = seed
    try:
        return TrainConfig(**t)
    except ConfigError as exc:
        raise ConfigInvalid(f"train.{exc}") from None


def _run_dir(cfg: dict, command: str, out: str | None) -> Path:
    root = Path(out or os.environ.get("PINN_RC_OUT") or "out")
    name = cfg.get("name") or f"{command}-{time.strftime('%Y%m%dT%H%M%S')}"
    run = root / name
    try:
        run.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {run}: {exc.strerror}") from None
    if not os.access(run, os.W_OK | os.X_OK):
        raise OSError(f"output directory {run} is not writable")
    return run


def cmd_forward(cfg: dict, out, seed=None) -> int:
    case = build_case(cfg)
    config = build_train_config(cfg, seed)
    run = _run_dir(cfg, "forward", out)
    fit = train_forward(case, config)
    final = run / "forward"
    with report.staged_dir(final) as tmp:
        report.write_fit_outputs(tmp, fit, {"command": "forward"}, final_dir=final)
    print(f"forward {case.label}/{config.formulation}: l2_relative_error={fit.l2_relative_error:.6g} -> {final}")
    return EXIT_OK


def _inverse_dataset(cfg, case, config, config_path):
    ds = cfg.get("dataset", {"synthetic": {}})
    if "path" in ds:
        path = Path(ds["path"])
        if not path.is_absolute() and config_path is not None:
            path = Path(config_path).parent / path
        if not path.exists():
            raise ConfigInvalid(f"dataset.path: file not found: {path}")
        try:
            return read_dataset_csv(path)
        except DatasetError as exc:
            raise ConfigInvalid(f"dataset {path}: {exc}") from None
    syn = ds["synthetic"]
    times = sample_collocation(config.domain, syn.get("n_points", config.n_collocation))
    return generate_synthetic(case, times, syn.get("noise_sigma", 0.0), syn.get("seed", config.seed))


def cmd_inverse(cfg: dict, out, seed=None, config_path=None) -> int:
    case = build_case(cfg)
    config = build_train_config(cfg, seed)
    inv = cfg.get("inverse", {})
    dataset = _inverse_dataset(cfg, case, config, config_path)
    try:
        params = TrainableParams.from_case(case, inv.get("init_scale", 0.5), inv.get("free"))
    except ValueError as exc:
        raise ConfigInvalid(f"inverse.free: {exc}") from None
    if "init" in inv:
        values = params.values.copy()
        for name, v in inv["init"].items():
            if name not in params.names:
                raise ConfigInvalid(f"inverse.init: unknown parameter {name!r}; expected {list(params.names)}")
            values[params.names.index(name)] = math.log(v)
        params = params.with_values(values)
    run = _run_dir(cfg, "inverse", out)
    try:
        rep = train_inverse(
            case, dataset, config, params,
            include_ic=inv.get("include_ic", True),
            lr_params=inv.get("lr_params"),
            truth_known=inv.get("truth_known", dataset.provenance == "synthetic"),
        )
    except DatasetError as exc:
        raise ConfigInvalid(f"dataset: {exc}") from None
    final = run / "inverse"
    with report.staged_dir(final) as tmp:
        report.write_atomic(tmp / "history.csv", report.history_csv(rep.history))
        report.write_atomic(tmp / "prediction.csv", report.prediction_csv(rep.test_times, rep.prediction, rep.truth))
        report.write_atomic(tmp / "dataset.csv", dataset_csv(dataset))
        report.write_atomic(tmp / "model.bin", to_bytes(rep.final_model))
        summary = {
            "command": "inverse",
            "case": case.to_dict(),
            "config": config.to_dict(),
            "include_ic": rep.include_ic,
            "dataset": {"provenance": dataset.provenance, "n_points": len(dataset),
                        "noise_sigma": dataset.noise_sigma},
            "final_loss": vars(rep.final_loss).copy(),
            "selected_iteration": rep.selected_iteration,
            "selected_loss": vars(rep.selected_loss).copy(),
            "parameters": rep.parameter_table(),
            "relative_errors": rep.relative_errors,
            "l2_relative_error": rep.l2_relative_error,
            "wall_time": rep.wall_time,
            "checkpoint": str(final / "model.bin"),
            "history_path": str(final / "history.csv"),
            "prediction_path": str(final / "prediction.csv"),
        }
        report.write_json(tmp / "summary.json", summary)
    for row in rep.parameter_table():
        print("  " + "  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    print(f"inverse -> {final}")
    return EXIT_OK


def cmd_synth(cfg: dict, out, seed=None) -> int:
    case = build_case(cfg)
    config = build_train_config(cfg)
    syn = cfg.get("synth", {})
    times = sample_collocation(config.domain, syn.get("n_points", config.n_collocation))
    ds = generate_synthetic(case, times, syn.get("noise_sigma", 0.0),
                            seed if seed is not None else syn.get("seed", config.seed))
    run = _run_dir(cfg, "synth", out)
    report.write_atomic(run / "dataset.csv", dataset_csv(ds))
    print(f"synth: {len(ds)} rows -> {run / 'dataset.csv'}")
    return EXIT_OK


def cmd_compare(cfg: dict, out, seed=None) -> int:
    case = build_case(cfg)
    config = build_train_config(cfg, seed)
    run = _run_dir(cfg, "compare", out)
    comparison = report.compare_formulations(case, config)
    for arm, fit in comparison.arms.items():
        if isinstance(fit, TrainingDivergence):
            continue
        final = run / arm
        with report.staged_dir(final) as tmp:
            report.write_fit_outputs(tmp, fit, {"command": "compare", "arm": arm}, final_dir=final)
    report.write_json(run / "summary.json", dict(comparison.to_dict(), command="compare"))
    print(f"compare {case.label}: {comparison.errors} verdict={comparison.verdict}")
    return EXIT_OK if comparison.verdict is not None else EXIT_DIVERGED


def cmd_sweep(cfg: dict, out, seed=None) -> int:
    if "sweep" not in cfg:
        raise ConfigInvalid("sweep: required for the sweep command")
    case = build_case(cfg)
    config = build_train_config(cfg, seed)
    run = _run_dir(cfg, "sweep", out)
    sw = report.domain_sweep(case, config, cfg["sweep"]["t_ends"], cfg["sweep"].get("scale_points", True))
    for arm, fit in sw.arms.items():
        if isinstance(fit, TrainingDivergence):
            continue
        final = run / arm
        with report.staged_dir(final) as tmp:
            report.write_fit_outputs(tmp, fit, {"command": "sweep", "arm": arm}, final_dir=final)
    report.write_json(run / "summary.json", dict(sw.to_dict(), command="sweep"))
    print(f"sweep {case.label}: {sw.errors()}")
    return EXIT_OK if any(e is not None for e in sw.errors().values()) else EXIT_DIVERGED


def cmd_gradcheck(seed: int = 0, inject_fault: bool = False) -> int:
    results = run_gradcheck(seed, corrupt=inject_fault)
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:<36} max_rel={r.max_rel:.3e} tol={r.tol:.0e}")
    ok = all(r.passed for r in results)
    print("gradcheck passed" if ok else "gradcheck FAILED")
    return EXIT_OK if ok else EXIT_IO


COMMANDS = {
    "forward": cmd_forward,
    "inverse": cmd_inverse,
    "synth": cmd_synth,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinn-rc", description="PINN solver for parallel RC circuits")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", help="output root (default $PINN_RC_OUT or ./out)")
        p.add_argument("--seed", type=int, help="override train.seed")
    p = sub.add_parser("gradcheck")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "gradcheck":
        return cmd_gradcheck(args.seed, args.inject_fault)
    try:
        cfg = load_config(args.config)
        fn = COMMANDS[args.command]
        if args.command == "inverse":
            return fn(cfg, args.out, args.seed, config_path=args.config)
        return fn(cfg, args.out, args.seed)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
