"""Composite PINN loss, Adam and the forward training loop.

The network sees ``t_scaled = 2 t / t_end - 1`` so its time derivative is
multiplied by ``2 / t_end`` before entering a residual. All losses return
their exact parameter gradient alongside the value.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict, replace
from typing import Sequence

import numpy as np

from .circuits import FORMULATIONS, CircuitCase, TimeDomain, analytical_current
from .metrics import ErrorMetrics, error_metrics
from .net import Mlp, backward, forward, forward_tangent, init_mlp

COLLOCATION_PER_10S = 35


class ConfigError(ValueError):
    """Invalid training configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class TrainingDivergence(RuntimeError):
    """Raised when the loss becomes non-finite."""

    def __init__(self, iteration: int, breakdown: "LossBreakdown"):
        super().__init__(f"non-finite loss at iteration {iteration}: {breakdown}")
        self.iteration = iteration
        self.breakdown = breakdown


def default_collocation_count(t_end: float) -> int:
    return max(2, math.ceil(COLLOCATION_PER_10S * t_end / 10.0 - 1e-9))


@dataclass
class TrainConfig:
    t_end: float = 10.0
    learning_rate: float = 0.01
    iterations: int = 15000
    # (w_ic, w_pde, w_data) weights of the initial-condition, residual and data terms
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    n_collocation: int | None = None
    n_test: int | None = None
    formulation: str = "raw"
    seed: int = 0
    hidden: tuple[int, ...] = (40, 40, 40)
    log_every: int = 100
    sampling: str = "uniform"
    # return the lowest-total-loss parameters seen at a logged iteration
    keep_best: bool = True

    def __post_init__(self):
        self.loss_weights = tuple(float(w) for w in self.loss_weights)
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.n_collocation is None:
            self.n_collocation = default_collocation_count(self.t_end)
        if self.n_test is None:
            self.n_test = 10 * self.n_collocation
        self.validate()

    def validate(self):
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigError("t_end", f"must be > 0, got {self.t_end}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError("learning_rate", f"must be > 0, got {self.learning_rate}")
        if self.iterations < 1:
            raise ConfigError("iterations", f"must be > 0, got {self.iterations}")
        if len(self.loss_weights) != 3 or any(not (w >= 0) for w in self.loss_weights):
            raise ConfigError("loss_weights", f"need three weights >= 0, got {self.loss_weights}")
        if self.n_collocation < 2:
            raise ConfigError("n_collocation", f"must be >= 2, got {self.n_collocation}")
        if self.n_test < 2:
            raise ConfigError("n_test", f"must be >= 2, got {self.n_test}")
        if self.formulation not in FORMULATIONS:
            raise ConfigError("formulation", f"must be one of {FORMULATIONS}, got {self.formulation!r}")
        if self.log_every < 1:
            raise ConfigError("log_every", f"must be >= 1, got {self.log_every}")
        if self.sampling not in ("uniform", "random"):
            raise ConfigError("sampling", f"must be 'uniform' or 'random', got {self.sampling!r}")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden", f"layer widths must be positive, got {self.hidden}")

    @property
    def domain(self) -> TimeDomain:
        return TimeDomain(self.t_end)

    @property
    def w_ic(self) -> float:
        return self.loss_weights[0]

    @property
    def w_pde(self) -> float:
        return self.loss_weights[1]

    @property
    def w_data(self) -> float:
        return self.loss_weights[2]

    def replace(self, **changes) -> "TrainConfig":
        if "t_end" in changes and "n_collocation" not in changes:
            changes["n_collocation"] = None
        if "n_collocation" in changes and "n_test" not in changes:
            changes["n_test"] = None
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_weights"] = {"ic": self.w_ic, "pde": self.w_pde, "data": self.w_data}
        d["hidden"] = list(self.hidden)
        return d


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    pde: float
    ic: float
    data: float = 0.0

    @classmethod
    def combine(cls, weights, pde, ic, data=0.0) -> "LossBreakdown":
        w_ic, w_pde, w_data = weights
        return cls(w_pde * pde + w_ic * ic + w_data * data, pde, ic, data)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.total, self.pde, self.ic, self.data))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and Adam state hold different numbers of tensors")
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, step, b1, b2, state.eps)


def sample_collocation(domain: TimeDomain, n: int, method: str = "uniform", seed: int = 0) -> np.ndarray:
    """``n`` points on ``[0, t_end]``: equispaced with both endpoints, or sorted random."""
    if n < 2:
        raise ValueError(f"need at least 2 collocation points, got {n}")
    if method == "uniform":
        return domain.t_end * np.arange(n) / (n - 1)
    if method == "random":
        rng = np.random.default_rng([seed, 1])
        return np.sort(rng.uniform(0.0, domain.t_end, n))
    raise ValueError(f"unknown sampling method {method!r}")


@dataclass
class Coefficients:
    """Per-component ODE constants, optionally with their Jacobians w.r.t. trainable logs.

    ``rates[k]`` is ``1/(R_k C_k)``, ``levels[k]`` the asymptotic current and
    ``ic_targets[k]`` the initial current of component k.
    """

    rates: np.ndarray
    levels: np.ndarray
    ic_targets: np.ndarray
    d_rates: np.ndarray | None = None
    d_levels: np.ndarray | None = None
    d_ic_targets: np.ndarray | None = None

    @classmethod
    def from_case(cls, case: CircuitCase) -> "Coefficients":
        return cls(case.rates(), case.steady_levels(), case.component_initial_currents())


def _scale(t_end: float) -> float:
    return 2.0 / t_end


def to_scaled(t, t_end: float) -> np.ndarray:
    return _scale(t_end) * np.asarray(t, dtype=float) - 1.0


def residual_partials(coeffs: Coefficients, u, du_dt, formulation: str):
    """Residual and its partials w.r.t. ``u``, ``rates`` and ``levels`` (elementwise)."""
    a, b = coeffs.rates, coeffs.levels
    if formulation == "raw":
        r = du_dt + a * (u - b)
        return r, np.broadcast_to(a, r.shape), u - b, np.broadcast_to(-a, r.shape)
    if formulation == "log":
        e = np.exp(-u)
        r = du_dt + a * (1.0 - b * e)
        return r, a * b * e, 1.0 - b * e, -a * e
    raise ValueError(f"unknown formulation {formulation!r}")


def _check_width(net: Mlp, coeffs: Coefficients):
    if net.n_out != coeffs.rates.size:
        raise ValueError(f"network has {net.n_out} outputs, case needs {coeffs.rates.size}")


def pde_term(net: Mlp, coeffs: Coefficients, points, t_end: float, formulation: str):
    """Mean over points of the summed squared component residuals.

    Returns ``(loss, GradientSet, lambda_grad)``; ``lambda_grad`` is ``None``
    unless ``coeffs`` carries Jacobians.
    """
    _check_width(net, coeffs)
    points = np.asarray(points, dtype=float)
    n = points.size
    scale = _scale(t_end)
    ev = forward_tangent(net, to_scaled(points, t_end))
    r, dr_du, dr_da, dr_db = residual_partials(coeffs, ev.u, scale * ev.du_dt, formulation)
    loss = float(np.sum(r * r) / n)
    g = 2.0 * r / n
    grads = backward(net, ev, g * dr_du, g * scale)
    lam = None
    if coeffs.d_rates is not None:
        lam = (g * dr_da).sum(axis=0) @ coeffs.d_rates + (g * dr_db).sum(axis=0) @ coeffs.d_levels
    return loss, grads, lam


def ic_term(net: Mlp, coeffs: Coefficients, formulation: str):
    _check_width(net, coeffs)
    ev = forward_tangent(net, -1.0)
    target = coeffs.ic_targets
    if formulation == "log":
        target = np.log(target)
    diff = ev.u[0] - target
    loss = float(np.sum(diff * diff))
    grads = backward(net, ev, 2.0 * diff[None, :], 0.0)
    lam = None
    if coeffs.d_ic_targets is not None:
        d_target = coeffs.d_ic_targets
        if formulation == "log":
            d_target = d_target / coeffs.ic_targets[:, None]
        lam = -2.0 * diff @ d_target
    return loss, grads, lam


def pde_loss(net: Mlp, case: CircuitCase, points, formulation: str, t_end: float | None = None):
    """Residual loss and its parameter gradient.

    ``t_end`` fixes the input scaling; it defaults to the largest point.
    """
    t_end = float(np.max(points)) if t_end is None else t_end
    loss, grads, _ = pde_term(net, Coefficients.from_case(case), points, t_end, formulation)
    return loss, grads


def ic_loss(net: Mlp, case: CircuitCase, formulation: str):
    loss, grads, _ = ic_term(net, Coefficients.from_case(case), formulation)
    return loss, grads


def forward_loss(net: Mlp, case: CircuitCase, points, config: TrainConfig):
    coeffs = Coefficients.from_case(case)
    pde, g_pde, _ = pde_term(net, coeffs, points, config.t_end, config.formulation)
    ic, g_ic, _ = ic_term(net, coeffs, config.formulation)
    breakdown = LossBreakdown.combine(config.loss_weights, pde, ic)
    grads = g_pde.scaled(config.w_pde) + g_ic.scaled(config.w_ic)
    return breakdown, grads


def outputs_to_current(u: np.ndarray, formulation: str) -> np.ndarray:
    """Map network outputs ``(n, n_out)`` to total current ``(n,)``."""
    if formulation == "log":
        u = np.exp(u)
    return u.sum(axis=1)


def predict(net: Mlp, case: CircuitCase, formulation: str, times, t_end: float) -> np.ndarray:
    """Predicted total current at ``times``.

    ``case`` is accepted for symmetry with the other entry points; the
    mapping from outputs to current depends only on the formulation.
    """
    return outputs_to_current(forward(net, to_scaled(times, t_end)), formulation)


@dataclass
class FitReport:
    history: list[tuple[int, LossBreakdown]]
    final_model: Mlp
    l2_relative_error: float
    wall_time: float
    metrics: ErrorMetrics
    test_times: np.ndarray
    prediction: np.ndarray
    truth: np.ndarray
    collocation: np.ndarray
    config: TrainConfig
    case: CircuitCase = field(repr=False, default=None)
    # logged iteration whose parameters became final_model
    selected_iteration: int = -1

    @property
    def final_loss(self) -> LossBreakdown:
        """Loss at the last iteration (not necessarily of ``final_model``)."""
        return self.history[-1][1]

    @property
    def selected_loss(self) -> LossBreakdown:
        return dict(self.history)[self.selected_iteration]


def evaluation_grid(config: TrainConfig) -> np.ndarray:
    return sample_collocation(config.domain, config.n_test)


def _build_net(case: CircuitCase, config: TrainConfig) -> Mlp:
    return init_mlp([1, *config.hidden, case.n_components], config.seed)


def train_forward(case: CircuitCase, config: TrainConfig, net: Mlp | None = None) -> FitReport:
    """Full-batch Adam on ``w_pde * pde + w_ic * ic``.

    Raises :class:`TrainingDivergence` as soon as the loss turns non-finite.
    """
    start = time.perf_counter()
    net = _build_net(case, config) if net is None else net.copy()
    points = sample_collocation(config.domain, config.n_collocation, config.sampling, config.seed)
    params = net.params()
    state = AdamState.zeros(params)
    history = []
    best = (math.inf, net, 0)
    for it in range(config.iterations + 1):
        # overflow is caught below as a structured divergence
        with np.errstate(over="ignore", invalid="ignore"):
            breakdown, grads = forward_loss(net, case, points, config)
        if not breakdown.is_finite():
            raise TrainingDivergence(it, breakdown)
        if it % config.log_every == 0 or it == config.iterations:
            history.append((it, breakdown))
            if breakdown.total < best[0]:
                best = (breakdown.total, net, it)
        if it == config.iterations:
            break
        params, state = adam_step(params, grads.params(), state, config.learning_rate)
        net = Mlp(net.layer_sizes, params[0::2], params[1::2])
    selected = config.iterations
    if config.keep_best:
        _, net, selected = best

    times = evaluation_grid(config)
    pred = predict(net, case, config.formulation, times, config.t_end)
    truth = analytical_current(case, times)
    metrics = error_metrics(pred, truth)
    return FitReport(
        history=history,
        final_model=net,
        l2_relative_error=metrics.l2_relative,
        wall_time=time.perf_counter() - start,
        metrics=metrics,
        test_times=times,
        prediction=pred,
        truth=truth,
        collocation=points,
        config=config,
        case=case,
        selected_iteration=selected,
    )
