"""Error metrics, raw-vs-log comparison, domain-length sweeps and file output.

Run artefacts go to ``<root>/<run-name>/<arm>/`` as ``history.csv``,
``prediction.csv``, ``summary.json`` and ``model.bin``. Every file is
written to a temporary name in the same directory and then renamed, so a
crashed run never leaves a file under its final name.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuits import CircuitCase
from .metrics import ErrorMetrics, error_metrics, l2_relative_error
from .net import to_bytes
from .training import FitReport, LossBreakdown, TrainConfig, TrainingDivergence, train_forward

__all__ = [
    "ErrorMetrics",
    "error_metrics",
    "l2_relative_error",
    "Comparison",
    "Sweep",
    "compare_formulations",
    "domain_sweep",
    "sweep_collocation_count",
    "history_csv",
    "prediction_csv",
    "read_history_csv",
    "check_loss_decomposition",
    "write_atomic",
    "write_json",
    "write_fit_outputs",
    "staged_dir",
    "fit_summary",
]

HISTORY_HEADER = ["iter", "loss_total", "loss_pde", "loss_ic", "loss_data"]
PREDICTION_HEADER = ["t", "i_pred", "i_true", "abs_err"]
# Excluded when comparing summaries of repeated runs.
VOLATILE_KEYS = ("wall_time", "checkpoint", "history_path", "prediction_path", "output_dir")


def _fmt(x: float) -> str:
    # shortest round-trip repr: lossless and deterministic
    return repr(float(x))


def history_csv(history: Sequence[tuple[int, LossBreakdown]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for it, b in history:
        w.writerow([it, _fmt(b.total), _fmt(b.pde), _fmt(b.ic), _fmt(b.data)])
    return buf.getvalue()


def prediction_csv(times, pred, truth=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTION_HEADER)
    for k, (t, p) in enumerate(zip(times, pred)):
        if truth is None:
            w.writerow([_fmt(t), _fmt(p), "", ""])
        else:
            w.writerow([_fmt(t), _fmt(p), _fmt(truth[k]), _fmt(abs(p - truth[k]))])
    return buf.getvalue()


def read_history_csv(path) -> list[tuple[int, LossBreakdown]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HISTORY_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            (int(r["iter"]), LossBreakdown(float(r["loss_total"]), float(r["loss_pde"]),
                                           float(r["loss_ic"]), float(r["loss_data"])))
            for r in reader
        ]


def check_loss_decomposition(history, loss_weights, rtol: float = 1e-12) -> float:
    """Largest relative violation of ``total = w_pde*pde + w_ic*ic + w_data*data``.

    ``history`` is a list of ``(iteration, LossBreakdown)`` or a path to a
    ``history.csv``. Raises ``AssertionError`` if any row exceeds ``rtol``
    or has a negative component.
    """
    if isinstance(history, (str, os.PathLike)):
        history = read_history_csv(history)
    w_ic, w_pde, w_data = loss_weights
    worst = 0.0
    for it, b in history:
        if min(b.pde, b.ic, b.data) < 0:
            raise AssertionError(f"iteration {it}: negative loss component {b}")
        parts = w_pde * b.pde + w_ic * b.ic + w_data * b.data
        scale = max(abs(b.total), abs(parts), np.finfo(float).tiny)
        err = abs(b.total - parts) / scale
        worst = max(worst, err)
        if err > rtol:
            raise AssertionError(f"iteration {it}: total {b.total!r} vs parts {parts!r}")
    return worst


def write_atomic(path, data) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@contextmanager
def staged_dir(final):
    """Yield a scratch directory that is renamed to ``final`` on success.

    An existing ``final`` is replaced. On error the scratch directory is removed.
    """
    final = Path(final)
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{final.name}.", suffix=".tmp", dir=final.parent))
    os.chmod(tmp, 0o755)
    try:
        yield tmp
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)


def write_json(path, obj) -> None:
    write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def fit_summary(fit: FitReport) -> dict:
    final = fit.final_loss
    return {
        "case": fit.case.to_dict(),
        "config": fit.config.to_dict(),
        "final_loss": vars(final).copy(),
        "selected_iteration": fit.selected_iteration,
        "selected_loss": vars(fit.selected_loss).copy(),
        "l2_relative_error": fit.l2_relative_error,
        "metrics": fit.metrics.to_dict(),
        "n_collocation": int(fit.collocation.size),
        "wall_time": fit.wall_time,
    }


def write_fit_outputs(arm_dir, fit: FitReport, extra: dict | None = None, final_dir=None) -> dict:
    """Write history, prediction, checkpoint and summary into ``arm_dir``.

    ``final_dir`` is the path recorded in the summary when ``arm_dir`` is a
    staging directory.
    """
    arm_dir = Path(arm_dir)
    arm_dir.mkdir(parents=True, exist_ok=True)
    final_dir = Path(final_dir) if final_dir is not None else arm_dir
    write_atomic(arm_dir / "history.csv", history_csv(fit.history))
    write_atomic(arm_dir / "prediction.csv", prediction_csv(fit.test_times, fit.prediction, fit.truth))
    write_atomic(arm_dir / "model.bin", to_bytes(fit.final_model))
    summary = fit_summary(fit)
    summary["checkpoint"] = str(final_dir / "model.bin")
    summary.update(extra or {})
    write_json(arm_dir / "summary.json", summary)
    return summary


def _arm_record(result) -> dict:
    if isinstance(result, TrainingDivergence):
        return {"status": "diverged", "iteration": result.iteration, "message": str(result)}
    return {
        "status": "ok",
        "metrics": result.metrics.to_dict(),
        "final_loss": vars(result.final_loss).copy(),
        "selected_iteration": result.selected_iteration,
    }


@dataclass
class Comparison:
    case: CircuitCase
    config: TrainConfig
    arms: dict  # formulation -> FitReport | TrainingDivergence

    @property
    def errors(self) -> dict[str, float]:
        return {k: v.l2_relative_error for k, v in self.arms.items() if isinstance(v, FitReport)}

    @property
    def verdict(self) -> str | None:
        """Formulation with the lower relative L2 error, ``"tie"``, or ``None`` if both failed."""
        e = self.errors
        if not e:
            return None
        if len(e) == 1:
            return next(iter(e))
        if e["log"] == e["raw"]:
            return "tie"
        return "log" if e["log"] < e["raw"] else "raw"

    def to_dict(self) -> dict:
        return {
            "case": self.case.to_dict(),
            "config": self.config.to_dict(),
            "arms": {k: _arm_record(v) for k, v in self.arms.items()},
            "verdict": self.verdict,
        }


def compare_formulations(case: CircuitCase, config: TrainConfig) -> Comparison:
    """Train the raw and log formulations with identical seed, budget and grid."""
    arms = {}
    for formulation in ("raw", "log"):
        try:
            arms[formulation] = train_forward(case, config.replace(formulation=formulation))
        except TrainingDivergence as exc:
            arms[formulation] = exc
    return Comparison(case, config, arms)


def sweep_collocation_count(t_end: float) -> int:
    """35 points per 10 s, rounded up; gives 35, 350 and 1050 for 10, 100 and 300 s."""
    return max(2, math.ceil(35 * t_end / 10 - 1e-9))


def arm_name(t_end: float) -> str:
    return f"t{t_end:g}"


@dataclass
class Sweep:
    case: CircuitCase
    base_config: TrainConfig
    t_ends: list[float]
    arms: dict  # arm name -> FitReport | TrainingDivergence
    configs: dict  # arm name -> TrainConfig

    def errors(self) -> dict[str, float | None]:
        return {
            k: (v.l2_relative_error if isinstance(v, FitReport) else None) for k, v in self.arms.items()
        }

    def degrades_monotonically(self) -> bool | None:
        e = [self.errors()[arm_name(t)] for t in self.t_ends]
        if any(x is None for x in e):
            return None
        return all(b >= a for a, b in zip(e, e[1:]))

    def to_dict(self) -> dict:
        return {
            "case": self.case.to_dict(),
            "base_config": self.base_config.to_dict(),
            "t_ends": list(self.t_ends),
            "arms": {
                k: dict(_arm_record(v), t_end=self.configs[k].t_end,
                        n_collocation=self.configs[k].n_collocation)
                for k, v in self.arms.items()
            },
            "monotone_degradation": self.degrades_monotonically(),
        }


def domain_sweep(case: CircuitCase, base_config: TrainConfig, t_ends: Sequence[float],
                 scale_points: bool = True) -> Sweep:
    """One independent training run per domain length."""
    t_ends = [float(t) for t in t_ends]
    if not t_ends:
        raise ValueError("t_ends must not be empty")
    arms, configs = {}, {}
    for t_end in t_ends:
        n = sweep_collocation_count(t_end) if scale_points else base_config.n_collocation
        cfg = base_config.replace(t_end=t_end, n_collocation=n)
        name = arm_name(t_end)
        configs[name] = cfg
        try:
            arms[name] = train_forward(case, cfg)
        except TrainingDivergence as exc:
            arms[name] = exc
    return Sweep(case, base_config, t_ends, arms, configs)
