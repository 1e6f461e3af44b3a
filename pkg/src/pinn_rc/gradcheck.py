"""Central finite-difference checks of every derivative the solver relies on.

Discrepancies are reported relative to the size of the reference:

* input tangents, per (net, t) pair: ``|a - b| / max(|b|, 1e-3)``,
* parameter gradients, per loss: ``max|a - b| / max|b|`` over all entries,
* log-parameter gradients, per entry: ``|a - b| / max(|b|, 1e-3 * max|b|)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import FIXTURES
from .inverse import TrainableParams, generate_synthetic, inverse_loss, residual_with_params
from .net import Mlp, backward, forward, forward_tangent, init_mlp
from .training import TrainConfig, forward_loss

TANGENT_TOL = 1e-6
THETA_TOL = 1e-5
LAMBDA_TOL = 1e-8


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel < self.tol


def random_net(sizes, rng) -> Mlp:
    net = init_mlp(sizes, int(rng.integers(2**31)))
    for b in net.biases:
        b[:] = rng.uniform(-0.5, 0.5, b.shape)
    return net


def tangent_discrepancy(n_pairs: int = 100, seed: int = 0, h: float = 1e-6) -> float:
    rng = np.random.default_rng([seed, 10])
    worst = 0.0
    for _ in range(n_pairs):
        net = random_net([1, 8, 8, 1], rng)
        t = rng.uniform(-1, 1)
        exact = forward_tangent(net, t).du_dt[0, 0]
        fd = (forward(net, t + h)[0, 0] - forward(net, t - h)[0, 0]) / (2 * h)
        worst = max(worst, abs(exact - fd) / max(abs(fd), 1e-3))
    return worst


def fd_param_grad(f, net: Mlp, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f(net)`` over every parameter, in ``params()`` order."""
    out = []
    for p in net.params():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            fp = f(net)
            p[idx] = old - h
            fm = f(net)
            p[idx] = old
            out.append((fp - fm) / (2 * h))
    return np.array(out)


def _rel_inf(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), np.finfo(float).tiny))


def theta_discrepancies(seed: int = 0, corrupt: bool = False) -> dict[str, float]:
    """Parameter gradients of seeded outputs and of every composite loss."""
    rng = np.random.default_rng([seed, 20])
    out = {}

    def analytic(g):
        flat = g.flat()
        if corrupt:
            flat[0] *= 1.001
            flat[0] += 1e-3
        return flat

    net = random_net([1, 8, 8, 1], rng)
    t = rng.uniform(-1, 1, 16)
    su, sd = rng.normal(size=(16, 1)), rng.normal(size=(16, 1))

    def seeded(n):
        ev = forward_tangent(n, t)
        return float(np.sum(su * ev.u + sd * ev.du_dt))

    out["backward 1-8-8-1"] = _rel_inf(analytic(backward(net, forward_tangent(net, t), su, sd)),
                                       fd_param_grad(seeded, net))

    for case_name in ("case0", "case1", "case2"):
        case = FIXTURES[case_name]
        for formulation in ("raw", "log"):
            cfg = TrainConfig(formulation=formulation, n_collocation=16, iterations=1,
                              loss_weights=(0.7, 1.3, 0.9))
            net = random_net([1, 8, 8, case.n_components], rng)
            points = np.sort(rng.uniform(0, cfg.t_end, 16))
            _, g = forward_loss(net, case, points, cfg)
            fd = fd_param_grad(lambda n: forward_loss(n, case, points, cfg)[0].total, net)
            out[f"forward loss {case_name}/{formulation}"] = _rel_inf(analytic(g), fd)

            data = generate_synthetic(case, np.linspace(0, cfg.t_end, 7), 0.05, seed)
            params = TrainableParams.from_case(case, 0.7)
            _, g, _ = inverse_loss(net, params, data, points, cfg)
            fd = fd_param_grad(lambda n: inverse_loss(n, params, data, points, cfg)[0].total, net)
            out[f"inverse loss {case_name}/{formulation}"] = _rel_inf(analytic(g), fd)
    return out


def _fd_values(f, values, h):
    out = []
    for j in range(values.size):
        vp, vm = values.copy(), values.copy()
        vp[j] += h
        vm[j] -= h
        out.append((f(vp) - f(vm)) / (2 * h))
    return np.stack(out, axis=-1)


def _rel_entries(a, b) -> float:
    floor = max(1e-3 * np.max(np.abs(b)), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def lambda_discrepancies(seed: int = 0, h: float = 1e-5) -> dict[str, float]:
    """Closed-form log-parameter gradients of residuals and of the inverse loss."""
    rng = np.random.default_rng([seed, 30])
    out = {}
    for case_name, case in FIXTURES.items():
        m = case.n_components
        for formulation in ("raw", "log"):
            params = TrainableParams.from_case(case, float(rng.uniform(0.5, 1.5)))
            t = rng.uniform(0, 10, 12)
            u = rng.uniform(-1.0, 1.0, (12, m))
            du = rng.normal(size=(12, m))
            _, _, _, d_lam = residual_with_params(params, t, u, du, formulation)
            fd = _fd_values(
                lambda v: residual_with_params(params.with_values(v), t, u, du, formulation)[0],
                params.values, h,
            )
            out[f"residual {case_name}/{formulation}"] = _rel_entries(d_lam, fd)

            cfg = TrainConfig(formulation=formulation, n_collocation=12, iterations=1)
            net = random_net([1, 6, m], rng)
            data = generate_synthetic(case, np.linspace(0, 10, 5), 0.0, seed)
            _, _, g = inverse_loss(net, params, data, t, cfg)
            fd = _fd_values(
                lambda v: inverse_loss(net, params.with_values(v), data, t, cfg)[0].total,
                params.values, h,
            )
            out[f"inverse loss {case_name}/{formulation}"] = _rel_entries(g, fd)
    return out


def run_gradcheck(seed: int = 0, corrupt: bool = False) -> list[CheckResult]:
    results = [CheckResult("tangent du/dt", tangent_discrepancy(seed=seed), TANGENT_TOL)]
    results += [CheckResult(f"theta: {k}", v, THETA_TOL) for k, v in theta_discrepancies(seed, corrupt).items()]
    results += [CheckResult(f"lambda: {k}", v, LAMBDA_TOL) for k, v in lambda_discrepancies(seed).items()]
    return results
