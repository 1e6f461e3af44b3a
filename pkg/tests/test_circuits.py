import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinn_rc.circuits import (
    CASE0,
    CASE1,
    CASE2,
    CASE3,
    FIXTURES,
    Branch,
    CircuitCase,
    CircuitError,
    TimeDomain,
    analytical_current,
    analytical_log_current,
    case0,
    component_currents,
    component_derivatives,
    initial_current,
    residual_log,
    residual_raw,
    residual_raw_multi,
)

GRID = np.linspace(0.0, 10.0, 2001)


class TestCircuitCase:
    def test_fixture_structure(self):
        assert CASE0.case_index == 0 and CASE0.n_components == 1
        assert CASE1.case_index == 1 and CASE1.n_components == 1
        assert CASE2.case_index == 2 and CASE2.n_components == 2
        assert CASE3.case_index == 3 and CASE3.n_components == 3
        assert [b.tau for b in CASE3.rc_branches] == [1.0, 10.0, 100.0]

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(u_dc=0.0, rc_branches=(Branch(1, 1),)),
            dict(u_dc=1.0, rc_branches=(Branch(-1, 1),)),
            dict(u_dc=1.0, rc_branches=(Branch(1, math.inf),)),
            dict(u_dc=1.0, rc_branches=(Branch(1, 1),), r0=0.0),
            dict(u_dc=1.0, rc_branches=(Branch(1, 1), Branch(2, 5))),  # two branches need r0
            dict(u_dc=1.0, rc_branches=()),
        ],
    )
    def test_invalid_cases_rejected(self, kwargs):
        with pytest.raises(CircuitError):
            CircuitCase(**kwargs)

    def test_dict_round_trip(self):
        for case in FIXTURES.values():
            assert CircuitCase.from_dict(case.to_dict()) == case

    def test_config_form_without_r0_is_case0(self):
        case = CircuitCase.from_dict({"u_dc": 1.0, "branches": [{"r": 1.0, "c": 1.0}]})
        assert case.case_index == 0

    def test_time_domain(self):
        assert TimeDomain(10.0).t_start == 0.0
        with pytest.raises(CircuitError):
            TimeDomain(0.0)


class TestAnalyticalCurrent:
    def test_case0_at_zero(self):
        assert analytical_current(CASE0, 0.0) == 1.0

    def test_case0_at_one(self):
        assert analytical_current(CASE0, 1.0) == pytest.approx(0.36787944117144233, rel=1e-15)

    def test_case1_asymptote(self):
        assert analytical_current(CASE1, np.inf) == pytest.approx(0.1, rel=1e-15)

    def test_case2_at_zero(self):
        # 1/10 + 1/1 + 1/2
        assert analytical_current(CASE2, 0.0) == pytest.approx(1.6, rel=1e-15)

    def test_negative_time_rejected(self):
        with pytest.raises(CircuitError):
            analytical_current(CASE0, -0.1)
        with pytest.raises(CircuitError):
            analytical_log_current(CASE0, np.array([0.0, -1.0]))

    def test_vectorised(self):
        out = analytical_current(CASE2, GRID)
        assert out.shape == GRID.shape

    def test_log_current(self):
        assert analytical_log_current(CASE0, 0.0) == 0.0
        assert analytical_log_current(CASE0, 3.0) == pytest.approx(-3.0, abs=1e-15)
        assert analytical_log_current(CASE1, 0.0) == pytest.approx(0.09531017980432493, rel=1e-14)

    @pytest.mark.parametrize("case", FIXTURES.values(), ids=FIXTURES.keys())
    def test_monotone_decreasing(self, case):
        i = analytical_current(case, GRID)
        assert np.all(np.diff(i) < 0)

    @pytest.mark.parametrize("case", [CASE1, CASE2, CASE3], ids=["case1", "case2", "case3"])
    def test_above_resistive_asymptote(self, case):
        assert np.all(analytical_current(case, GRID) > case.u_dc / case.r0)

    @pytest.mark.parametrize("case", FIXTURES.values(), ids=FIXTURES.keys())
    def test_sum_of_components(self, case):
        total = analytical_current(case, GRID)
        np.testing.assert_allclose(component_currents(case, GRID).sum(axis=-1), total, rtol=1e-12)

    def test_case2_components_follow_closed_forms(self):
        t = 3.7
        i01 = 1 / 10 + 1 / 1 * math.exp(-t / 1)
        i2 = 1 / 2 * math.exp(-t / 10)
        np.testing.assert_allclose(component_currents(CASE2, t), [i01, i2], rtol=1e-15)


class TestInitialCurrent:
    def test_examples(self):
        assert initial_current(CASE0) == 1.0
        assert initial_current(CASE1) == pytest.approx(1.1, rel=1e-15)
        assert initial_current(CASE3) == pytest.approx(1.8, rel=1e-15)

    @pytest.mark.parametrize("case", FIXTURES.values(), ids=FIXTURES.keys())
    def test_matches_analytical_at_zero(self, case):
        assert initial_current(case) == pytest.approx(analytical_current(case, 0.0), rel=1e-15)


class TestResiduals:
    def test_raw_case0_examples(self):
        e = math.exp(-1)
        assert residual_raw(CASE0, 1.0, e, -e) == pytest.approx(0.0, abs=1e-16)
        assert residual_raw(CASE0, 42.0, 1.0, 0.0) == 1.0

    def test_raw_case1_steady_state(self):
        assert residual_raw(CASE1, 5.0, 0.1, 0.0) == pytest.approx(0.0, abs=1e-16)

    def test_raw_rejects_multi_branch(self):
        with pytest.raises(CircuitError):
            residual_raw(CASE2, 0.0, 1.0, 0.0)

    def test_multi_case2_at_zero(self):
        r = residual_raw_multi(CASE2, 0.0, [1.1, 0.5], [-1.0, -0.05])
        np.testing.assert_allclose(r, [0.0, 0.0], atol=1e-15)

    def test_multi_second_component(self):
        r = residual_raw_multi(CASE2, 0.0, [1.1, 1.0], [-1.0, 0.0])
        assert r[1] == pytest.approx(0.1, rel=1e-15)

    def test_multi_length_mismatch(self):
        with pytest.raises(CircuitError):
            residual_raw_multi(CASE2, 0.0, [1.0], [0.0])
        with pytest.raises(CircuitError):
            residual_raw_multi(CASE3, 0.0, [1.0, 1.0], [0.0, 0.0, 0.0])

    def test_multi_rejects_single_branch(self):
        with pytest.raises(CircuitError):
            residual_raw_multi(CASE1, 0.0, [1.0], [0.0])

    def test_log_examples(self):
        for u in (-5.0, 0.0, 3.0):
            assert residual_log(CASE0, 0.0, u, -1.0) == 0.0
        assert residual_log(case0(1, 2, 3), 0.0, 0.0, 0.0) == pytest.approx(1 / 6, rel=1e-15)
        assert residual_log(CASE1, 0.0, math.log(0.1), 0.0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("case", [CASE0, CASE1], ids=["case0", "case1"])
    def test_oracle_annihilation_scalar(self, case):
        i = analytical_current(case, GRID)
        di = component_derivatives(case, GRID)[:, 0]
        assert np.max(np.abs(residual_raw(case, GRID, i, di))) < 1e-12
        assert np.max(np.abs(residual_log(case, GRID, np.log(i), di / i))) < 1e-12

    @pytest.mark.parametrize("case", [CASE2, CASE3], ids=["case2", "case3"])
    def test_oracle_annihilation_multi(self, case):
        i = component_currents(case, GRID)
        di = component_derivatives(case, GRID)
        r = residual_raw_multi(case, GRID, list(i.T), list(di.T))
        assert max(np.max(np.abs(x)) for x in r) < 1e-12
        assert np.max(np.abs(residual_log(case, GRID, np.log(i), di / i))) < 1e-12

    def test_closed_form_derivative_matches_finite_difference(self):
        h = 1e-6
        t = np.linspace(0.5, 9.5, 19)
        fd = (component_currents(CASE3, t + h) - component_currents(CASE3, t - h)) / (2 * h)
        np.testing.assert_allclose(component_derivatives(CASE3, t), fd, rtol=1e-7, atol=1e-9)


positive = st.floats(min_value=0.05, max_value=20.0)


@settings(max_examples=200, deadline=None)
@given(
    case_index=st.sampled_from([0, 1]),
    r=positive, c=positive, r0=positive, u_dc=positive,
    t=st.floats(0, 50), u=st.floats(-8, 3), du=st.floats(-10, 10),
)
def test_raw_log_identity(case_index, r, c, r0, u_dc, t, u, du):
    case = CircuitCase(u_dc, (Branch(r, c),), r0=r0 if case_index else None)
    lhs = residual_log(case, t, u, du) * math.exp(u)
    rhs = residual_raw(case, t, math.exp(u), math.exp(u) * du)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(
    r0=positive, u_dc=positive,
    branches=st.lists(st.tuples(positive, positive), min_size=1, max_size=4),
    t1=st.floats(0, 100), dt=st.floats(1e-3, 100),
)
def test_monotone_and_bounded(r0, u_dc, branches, t1, dt):
    case = CircuitCase(u_dc, tuple(Branch(*b) for b in branches), r0=r0)
    i1, i2 = analytical_current(case, t1), analytical_current(case, t1 + dt)
    assert i2 <= i1
    assert i2 >= u_dc / r0
