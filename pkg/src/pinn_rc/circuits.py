"""Parallel RC circuit family: closed-form currents and ODE residuals.

A circuit is a DC source ``u_dc`` feeding an optional pure resistor ``r0``
in parallel with one or more series R-C branches. Case 0 is a single RC
branch with no ``r0``; Case k (k >= 1) has ``r0`` plus k RC branches.

For training, the total current is split into *components*:

* component 0 carries ``u_dc/r0`` (if present) plus the first RC branch,
* component k >= 1 carries RC branch k alone.

Every component obeys a first-order linear ODE

    dI_k/dt + a_k * (I_k - b_k) = 0,      a_k = 1/(R_k C_k),

with ``b_0 = u_dc/r0`` (zero without ``r0``) and ``b_k = 0`` otherwise. The
log form substitutes ``I_k = exp(u_k)`` and divides by ``exp(u_k)``:

    du_k/dt + a_k * (1 - b_k * exp(-u_k)) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FORMULATIONS = ("raw", "log")


class CircuitError(ValueError):
    """Invalid circuit definition or unsupported operation for a case."""


@dataclass(frozen=True)
class Branch:
    r: float
    c: float

    @property
    def tau(self) -> float:
        return self.r * self.c


@dataclass(frozen=True)
class CircuitCase:
    """DC source, optional resistive branch ``r0`` and ordered RC branches."""

    u_dc: float
    rc_branches: tuple[Branch, ...]
    r0: float | None = None
    label: str = ""

    def __post_init__(self):
        branches = tuple(
            b if isinstance(b, Branch) else Branch(float(b[0]), float(b[1]))
            for b in self.rc_branches
        )
        object.__setattr__(self, "rc_branches", branches)
        if not branches:
            raise CircuitError("a circuit needs at least one RC branch")
        if self.r0 is None and len(branches) != 1:
            raise CircuitError("a circuit without r0 must have exactly one RC branch (Case 0)")
        values = [("u_dc", self.u_dc)]
        if self.r0 is not None:
            values.append(("r0", self.r0))
        for k, b in enumerate(branches, start=1):
            values += [(f"r{k}", b.r), (f"c{k}", b.c), (f"tau{k}", b.tau)]
        for name, v in values:
            if not (math.isfinite(v) and v > 0):
                raise CircuitError(f"{name} must be finite and > 0, got {v!r}")
        if not self.label:
            object.__setattr__(self, "label", f"case{self.case_index}")

    @property
    def case_index(self) -> int:
        return 0 if self.r0 is None else len(self.rc_branches)

    @property
    def n_components(self) -> int:
        """Number of network outputs used to represent this case."""
        return len(self.rc_branches)

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitCase":
        return cls(
            u_dc=float(d["u_dc"]),
            r0=None if d.get("r0") is None else float(d["r0"]),
            rc_branches=tuple(Branch(float(b["r"]), float(b["c"])) for b in d["branches"]),
            label=d.get("label", ""),
        )

    def to_dict(self) -> dict:
        d = {"u_dc": self.u_dc}
        if self.r0 is not None:
            d["r0"] = self.r0
        d["branches"] = [{"r": b.r, "c": b.c} for b in self.rc_branches]
        d["label"] = self.label
        return d

    def rates(self) -> np.ndarray:
        """Decay rate ``1/(R_k C_k)`` for every component."""
        return np.array([1.0 / b.tau for b in self.rc_branches])

    def steady_levels(self) -> np.ndarray:
        """Asymptotic level ``b_k`` of every component."""
        b = np.zeros(self.n_components)
        if self.r0 is not None:
            b[0] = self.u_dc / self.r0
        return b

    def component_initial_currents(self) -> np.ndarray:
        return self.steady_levels() + np.array([self.u_dc / b.r for b in self.rc_branches])


@dataclass(frozen=True)
class TimeDomain:
    t_end: float
    t_start: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise CircuitError(f"t_end must be finite and > 0, got {self.t_end!r}")


def case0(u_dc=1.0, r=1.0, c=1.0) -> CircuitCase:
    return CircuitCase(u_dc=u_dc, rc_branches=(Branch(r, c),), label="case0")


# Reference fixtures with time constants 1, 10 and 100 s.
CASE0 = case0()
CASE1 = CircuitCase(1.0, (Branch(1.0, 1.0),), r0=10.0, label="case1")
CASE2 = CircuitCase(1.0, (Branch(1.0, 1.0), Branch(2.0, 5.0)), r0=10.0, label="case2")
CASE3 = CircuitCase(
    1.0, (Branch(1.0, 1.0), Branch(2.0, 5.0), Branch(5.0, 20.0)), r0=10.0, label="case3"
)
FIXTURES = {"case0": CASE0, "case1": CASE1, "case2": CASE2, "case3": CASE3}


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise CircuitError("time must be >= 0")
    return t


def component_currents(case: CircuitCase, t) -> np.ndarray:
    """Closed-form component currents, shape ``t.shape + (n_components,)``."""
    t = _check_time(t)
    rates = case.rates()
    amp = np.array([case.u_dc / b.r for b in case.rc_branches])
    return case.steady_levels() + amp * np.exp(-t[..., None] * rates)


def component_derivatives(case: CircuitCase, t) -> np.ndarray:
    """Time derivatives of :func:`component_currents`."""
    t = _check_time(t)
    rates = case.rates()
    amp = np.array([case.u_dc / b.r for b in case.rc_branches])
    return -rates * amp * np.exp(-t[..., None] * rates)


def analytical_current(case: CircuitCase, t):
    """Total current ``u_dc/r0 + sum_i (u_dc/r_i) exp(-t/(r_i c_i))``."""
    t = _check_time(t)
    total = case.u_dc / case.r0 if case.r0 is not None else 0.0
    for b in case.rc_branches:
        total = total + (case.u_dc / b.r) * np.exp(-t / b.tau)
    return total[()] if isinstance(total, np.ndarray) else float(total)


def analytical_log_current(case: CircuitCase, t):
    return np.log(analytical_current(case, t))


def initial_current(case: CircuitCase) -> float:
    total = case.u_dc / case.r0 if case.r0 is not None else 0.0
    return total + sum(case.u_dc / b.r for b in case.rc_branches)


def residual_raw(case: CircuitCase, t, i, di_dt):
    """Scalar current residual for Case 0 and Case 1.

    ``t`` is accepted for signature symmetry; the ODEs are autonomous.
    """
    if case.n_components != 1:
        raise CircuitError(
            f"{case.label}: total current of several exponentials has no scalar "
            "first-order ODE; use residual_raw_multi"
        )
    a = case.rates()[0]
    b = case.steady_levels()[0]
    return np.asarray(di_dt) + a * (np.asarray(i) - b)


def residual_raw_multi(case: CircuitCase, t, i_branches: Sequence, di_dt_branches: Sequence) -> list:
    """One residual per component for cases with two or more RC branches."""
    if case.n_components < 2:
        raise CircuitError(f"{case.label}: residual_raw_multi needs >= 2 RC branches")
    m = case.n_components
    if len(i_branches) != m or len(di_dt_branches) != m:
        raise CircuitError(
            f"{case.label}: expected {m} components, got {len(i_branches)} currents "
            f"and {len(di_dt_branches)} derivatives"
        )
    a = case.rates()
    b = case.steady_levels()
    return [np.asarray(di_dt_branches[k]) + a[k] * (np.asarray(i_branches[k]) - b[k]) for k in range(m)]


def residual_log(case: CircuitCase, t, u, du_dt):
    """Log-current residual.

    For a single-component case ``u`` and ``du_dt`` are scalars or arrays of
    any shape. For multi-component cases the trailing axis indexes components.
    """
    a = case.rates()
    b = case.steady_levels()
    u = np.asarray(u, dtype=float)
    du_dt = np.asarray(du_dt, dtype=float)
    if case.n_components == 1:
        a, b = a[0], b[0]
    elif u.shape[-1:] != (case.n_components,):
        raise CircuitError(f"{case.label}: trailing axis must have {case.n_components} components")
    return du_dt + a * (1.0 - b * np.exp(-u))


def component_residuals(case: CircuitCase, u, du_dt, formulation: str) -> np.ndarray:
    """Residual of every component; ``u``/``du_dt`` have trailing component axis."""
    a = case.rates()
    b = case.steady_levels()
    if formulation == "raw":
        return du_dt + a * (u - b)
    if formulation == "log":
        return du_dt + a * (1.0 - b * np.exp(-u))
    raise CircuitError(f"unknown formulation {formulation!r}")
