from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np


@dataclass(frozen=True)
class ErrorMetrics:
    l2_relative: float
    max_abs: float
    rmse: float

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.size == 0 or pred.shape != truth.shape:
        raise ValueError(f"need equal non-empty lengths, got {pred.size} and {truth.size}")
    return pred, truth


def l2_relative_error(pred, truth) -> float:
    """``||pred - truth||_2 / ||truth||_2``."""
    pred, truth = _pair(pred, truth)
    norm = np.linalg.norm(truth)
    if norm == 0:
        raise ValueError("reference vector has zero norm")
    return float(np.linalg.norm(pred - truth) / norm)


def error_metrics(pred, truth) -> ErrorMetrics:
    pred, truth = _pair(pred, truth)
    diff = pred - truth
    return ErrorMetrics(
        l2_relative=l2_relative_error(pred, truth),
        max_abs=float(np.max(np.abs(diff))),
        rmse=float(np.sqrt(np.mean(diff * diff))),
    )
