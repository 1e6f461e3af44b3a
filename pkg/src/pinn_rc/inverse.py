"""Inverse mode: recover R and C jointly with the network from current data.

Resistances and capacitances are optimised as natural logs, so every
recovered value stays positive without clipping. Their gradients are
closed-form because each ODE coefficient is a monomial in R and C.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuits import Branch, CircuitCase, analytical_current
from .metrics import ErrorMetrics, error_metrics
from .net import Mlp, backward, forward_tangent, init_mlp
from .training import (
    AdamState,
    Coefficients,
    LossBreakdown,
    TrainConfig,
    TrainingDivergence,
    adam_step,
    evaluation_grid,
    ic_term,
    pde_term,
    predict,
    residual_partials,
    sample_collocation,
    to_scaled,
)


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    times: np.ndarray
    currents: np.ndarray
    provenance: str = "synthetic"
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        self.currents = np.asarray(self.currents, dtype=float).ravel()
        if self.times.size != self.currents.size:
            raise DatasetError(f"{self.times.size} times but {self.currents.size} currents")
        if self.times.size == 0:
            raise DatasetError("dataset is empty")
        if self.provenance not in ("synthetic", "measured"):
            raise DatasetError(f"unknown provenance {self.provenance!r}")
        for row, (t, i) in enumerate(zip(self.times, self.currents), start=1):
            if not (math.isfinite(t) and t >= 0):
                raise DatasetError(f"row {row}: time must be finite and >= 0, got {t}")
            if not (math.isfinite(i) and i > 0):
                raise DatasetError(f"row {row}: current must be finite and > 0, got {i}")
        if np.any(np.diff(self.times) <= 0):
            row = int(np.argmax(np.diff(self.times) <= 0)) + 2
            raise DatasetError(f"row {row}: times must be strictly increasing")

    def __len__(self):
        return self.times.size


def dataset_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "i"])
    for t, i in zip(dataset.times, dataset.currents):
        w.writerow([repr(float(t)), repr(float(i))])
    return buf.getvalue()


def read_dataset_csv(path, provenance: str = "measured") -> Dataset:
    """Read a ``t,i`` CSV. Errors name the 1-based data row."""
    times, currents = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "i"]:
            raise DatasetError(f"{path}: expected header 't,i', got {header}")
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                t, i = (float(x) for x in row)
            except ValueError:
                raise DatasetError(f"row {row_no}: cannot parse {row}") from None
            times.append(t)
            currents.append(i)
    return Dataset(times, currents, provenance)


def generate_synthetic(case: CircuitCase, times, noise_sigma: float = 0.0, seed: int = 0) -> Dataset:
    """Analytical currents with multiplicative Gaussian noise ``1 + sigma * z``.

    Draws that would give a non-positive current are replaced, in order,
    from a separate seeded stream so the result stays reproducible.
    """
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    times = np.asarray(times, dtype=float)
    clean = np.asarray(analytical_current(case, times), dtype=float)
    if noise_sigma == 0:
        return Dataset(times, clean, "synthetic", 0.0)
    z = np.random.default_rng(seed).standard_normal(times.size)
    redraw = np.random.default_rng([seed, 2])
    for k in range(times.size):
        while 1.0 + noise_sigma * z[k] <= 0:
            z[k] = redraw.standard_normal()
    return Dataset(times, clean * (1.0 + noise_sigma * z), "synthetic", float(noise_sigma))


def parameter_names(case: CircuitCase) -> list[str]:
    names = ["r0"] if case.r0 is not None else []
    for k in range(1, len(case.rc_branches) + 1):
        names += [f"r{k}", f"c{k}"]
    return names


@dataclass
class TrainableParams:
    """Log-resistances and log-capacitances of a circuit, with a free/frozen mask.

    ``values`` follows :func:`parameter_names`: ``r0`` (if present), then
    ``r1, c1, r2, c2, ...``.
    """

    u_dc: float
    names: tuple[str, ...]
    values: np.ndarray
    free: np.ndarray

    def __post_init__(self):
        self.names = tuple(self.names)
        self.values = np.asarray(self.values, dtype=float)
        self.free = np.asarray(self.free, dtype=bool)
        if not (len(self.names) == self.values.size == self.free.size):
            raise ValueError("names, values and mask differ in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("log-parameters must be finite")

    @classmethod
    def from_case(cls, case: CircuitCase, scale: float = 1.0, free: Sequence[str] | None = None):
        names = parameter_names(case)
        phys = [case.r0] if case.r0 is not None else []
        for b in case.rc_branches:
            phys += [b.r, b.c]
        mask = [True] * len(names) if free is None else [n in free for n in names]
        unknown = set(free or ()) - set(names)
        if unknown:
            raise ValueError(f"unknown parameter names {sorted(unknown)}; case has {names}")
        return cls(case.u_dc, names, np.log(np.asarray(phys) * scale), mask)

    @property
    def has_r0(self) -> bool:
        return self.names[:1] == ("r0",)

    @property
    def n_branches(self) -> int:
        return (len(self.names) - self.has_r0) // 2

    def physical(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, np.exp(self.values))}

    @property
    def log_r(self) -> np.ndarray:
        return np.array([v for n, v in zip(self.names, self.values) if n.startswith("r")])

    @property
    def log_c(self) -> np.ndarray:
        return np.array([v for n, v in zip(self.names, self.values) if n.startswith("c")])

    def with_values(self, values) -> "TrainableParams":
        return TrainableParams(self.u_dc, self.names, values, self.free)

    def to_case(self, label: str = "") -> CircuitCase:
        p = self.physical()
        branches = tuple(Branch(p[f"r{k}"], p[f"c{k}"]) for k in range(1, self.n_branches + 1))
        return CircuitCase(self.u_dc, branches, r0=p.get("r0"), label=label)

    def coefficients(self) -> Coefficients:
        """ODE constants and their Jacobians w.r.t. ``values`` (shape ``(m, p)``)."""
        m, p = self.n_branches, len(self.names)
        idx = {n: j for j, n in enumerate(self.names)}
        phys = np.exp(self.values)
        rates, levels, targets = np.zeros(m), np.zeros(m), np.zeros(m)
        d_rates, d_levels, d_targets = np.zeros((m, p)), np.zeros((m, p)), np.zeros((m, p))
        for k in range(m):
            jr, jc = idx[f"r{k + 1}"], idx[f"c{k + 1}"]
            rates[k] = 1.0 / (phys[jr] * phys[jc])
            d_rates[k, jr] = d_rates[k, jc] = -rates[k]
            amp = self.u_dc / phys[jr]
            targets[k] = amp
            d_targets[k, jr] = -amp
        if self.has_r0:
            j0 = idx["r0"]
            levels[0] = self.u_dc / phys[j0]
            d_levels[0, j0] = -levels[0]
            targets[0] += levels[0]
            d_targets[0, j0] = -levels[0]
        return Coefficients(rates, levels, targets, d_rates, d_levels, d_targets)


def residual_with_params(params: TrainableParams, t, u, du_dt, formulation: str):
    """Component residuals with partials w.r.t. the network side and the log-parameters.

    ``u`` and ``du_dt`` carry a trailing component axis. Returns
    ``(residual, d_residual/du, d_residual/d(du_dt), d_residual/d_values)``;
    the last has one extra trailing axis of length ``len(params.names)``.
    """
    coeffs = params.coefficients()
    u = np.asarray(u, dtype=float)
    du_dt = np.asarray(du_dt, dtype=float)
    r, dr_du, dr_da, dr_db = residual_partials(coeffs, u, du_dt, formulation)
    d_lam = dr_da[..., None] * coeffs.d_rates + dr_db[..., None] * coeffs.d_levels
    return r, dr_du, np.ones_like(r), d_lam


def data_loss(net: Mlp, dataset: Dataset, formulation: str, t_end: float):
    """Mean squared misfit to the observed currents (in log space for ``log``)."""
    n = len(dataset)
    ev = forward_tangent(net, to_scaled(dataset.times, t_end))
    u = ev.u
    if formulation == "raw":
        diff = u.sum(axis=1) - dataset.currents
        seed = np.broadcast_to((2.0 * diff / n)[:, None], u.shape)
    elif formulation == "log":
        top = u.max(axis=1, keepdims=True)
        e = np.exp(u - top)
        log_i = (top + np.log(e.sum(axis=1, keepdims=True)))[:, 0]
        diff = log_i - np.log(dataset.currents)
        seed = (2.0 * diff / n)[:, None] * e / e.sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown formulation {formulation!r}")
    loss = float(np.sum(diff * diff) / n)
    return loss, backward(net, ev, seed, 0.0)


def inverse_loss(net, params: TrainableParams, dataset, points, config: TrainConfig, include_ic: bool = True):
    """Composite loss with gradients for the network and for the log-parameters."""
    coeffs = params.coefficients()
    pde, g, lam = pde_term(net, coeffs, points, config.t_end, config.formulation)
    g = g.scaled(config.w_pde)
    lam = config.w_pde * lam
    ic = 0.0
    if include_ic:
        ic, g_ic, lam_ic = ic_term(net, coeffs, config.formulation)
        g = g + g_ic.scaled(config.w_ic)
        lam = lam + config.w_ic * lam_ic
    data, g_data = data_loss(net, dataset, config.formulation, config.t_end)
    g = g + g_data.scaled(config.w_data)
    return LossBreakdown.combine(config.loss_weights, pde, ic, data), g, lam * params.free


@dataclass
class InverseReport:
    history: list[tuple[int, LossBreakdown]]
    final_model: Mlp
    params: TrainableParams
    recovered: dict[str, float]
    true_values: dict[str, float] | None
    relative_errors: dict[str, float] | None
    l2_relative_error: float | None
    metrics: ErrorMetrics | None
    wall_time: float
    test_times: np.ndarray
    prediction: np.ndarray
    truth: np.ndarray | None
    config: TrainConfig = field(repr=False, default=None)
    include_ic: bool = True
    selected_iteration: int = -1

    @property
    def final_loss(self) -> LossBreakdown:
        return self.history[-1][1]

    @property
    def selected_loss(self) -> LossBreakdown:
        return dict(self.history)[self.selected_iteration]

    def parameter_table(self) -> list[dict]:
        rows = []
        for name, value in self.recovered.items():
            row = {"name": name, "recovered": value}
            if self.true_values is not None:
                row["true"] = self.true_values[name]
                row["relative_error"] = self.relative_errors[name]
            rows.append(row)
        return rows


def _relative_errors(recovered: dict, truth: dict) -> dict:
    out = {n: abs(recovered[n] - truth[n]) / truth[n] for n in truth}
    k = 1
    while f"r{k}" in truth:
        tau, tau_hat = truth[f"r{k}"] * truth[f"c{k}"], recovered[f"r{k}"] * recovered[f"c{k}"]
        out[f"tau{k}"] = abs(tau_hat - tau) / tau
        k += 1
    return out


def train_inverse(
    case_template: CircuitCase,
    dataset: Dataset,
    config: TrainConfig,
    init_params: TrainableParams | None = None,
    include_ic: bool = True,
    lr_params: float | None = None,
    truth_known: bool = True,
) -> InverseReport:
    """Joint Adam over network weights and log-parameters.

    ``case_template`` fixes the circuit structure and ``u_dc``; its R and C
    values count as ground truth only when ``truth_known``. Without
    ``init_params`` the search starts from half the template values.
    """
    start = time.perf_counter()
    if np.any(dataset.times > config.t_end * (1 + 1e-12)):
        raise DatasetError(f"dataset extends beyond t_end={config.t_end}")
    params = init_params if init_params is not None else TrainableParams.from_case(case_template, 0.5)
    if params.names != tuple(parameter_names(case_template)):
        raise ValueError(f"parameters {params.names} do not match circuit {parameter_names(case_template)}")
    net = init_mlp([1, *config.hidden, case_template.n_components], config.seed)
    points = sample_collocation(config.domain, config.n_collocation, config.sampling, config.seed)
    lr_lam = config.learning_rate if lr_params is None else lr_params

    theta = net.params()
    lam = params.values.copy()
    state_theta = AdamState.zeros(theta)
    state_lam = AdamState.zeros([lam])
    history = []
    best = (math.inf, net, params, 0)
    for it in range(config.iterations + 1):
        # overflow is caught below as a structured divergence
        with np.errstate(over="ignore", invalid="ignore"):
            breakdown, g, g_lam = inverse_loss(net, params, dataset, points, config, include_ic)
        if not breakdown.is_finite() or not np.all(np.isfinite(lam)):
            raise TrainingDivergence(it, breakdown)
        if it % config.log_every == 0 or it == config.iterations:
            history.append((it, breakdown))
            if breakdown.total < best[0]:
                best = (breakdown.total, net, params, it)
        if it == config.iterations:
            break
        theta, state_theta = adam_step(theta, g.params(), state_theta, config.learning_rate)
        (lam,), state_lam = adam_step([lam], [g_lam], state_lam, lr_lam)
        net = Mlp(net.layer_sizes, theta[0::2], theta[1::2])
        params = params.with_values(lam)
    selected = config.iterations
    if config.keep_best:
        _, net, params, selected = best

    recovered = params.physical()
    truth_params = TrainableParams.from_case(case_template).physical() if truth_known else None
    rel = _relative_errors(recovered, truth_params) if truth_known else None
    times = evaluation_grid(config)
    pred = predict(net, case_template, config.formulation, times, config.t_end)
    truth = np.asarray(analytical_current(case_template, times)) if truth_known else None
    metrics = error_metrics(pred, truth) if truth_known else None
    return InverseReport(
        history=history,
        final_model=net,
        params=params,
        recovered=recovered,
        true_values=truth_params,
        relative_errors=rel,
        l2_relative_error=None if metrics is None else metrics.l2_relative,
        metrics=metrics,
        wall_time=time.perf_counter() - start,
        test_times=times,
        prediction=pred,
        truth=truth,
        config=config,
        include_ic=include_ic,
        selected_iteration=selected,
    )
