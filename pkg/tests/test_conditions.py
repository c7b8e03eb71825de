import math

import pytest

from quermass.conditions import (condition3_holds, condition5_holds, conditions_from_constants, minimal_beta,
                                 psz_conditions_check, tau_of)
from quermass.peierls import lattice_ball_count, peierls_constants

WORKED_DELTA = 1.0 / (2.0 * math.sqrt(2.0))
WORKED_RHO0 = 0.125 / 2821


class TestConditions:
    def test_tau_and_eta(self):
        report = psz_conditions_check(100.0, 0.5, 0.4, 1, tau0=5.0)
        assert report.tau == pytest.approx(12.0)
        assert report.eta == pytest.approx(2 * math.exp(-4.0))
        assert report.condition1
        assert report.K == pytest.approx(1.0)

    def test_small_beta_fails(self):
        report = psz_conditions_check(10.0, 0.5, 0.4, 1, tau0=5.0)
        assert report.tau < 0
        assert not report.satisfied
        assert not report.condition3 and not report.condition5

    def test_overrides(self):
        report = psz_conditions_check(100.0, 0.5, 0.4, 1, D=2.0, tau0=5.0)
        assert report.D == 2.0
        assert report.condition2 == (2.0 * report.eta <= 1.0)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            psz_conditions_check(100.0, 0.5, 0.0, 1)
        with pytest.raises(ValueError):
            psz_conditions_check(100.0, 0.5, 0.4, 1, d=3)

    def test_condition3(self):
        assert not condition3_holds(1.0, -1.0, 0.1)
        assert condition3_holds(1e6, 50.0, 0.1)
        assert not condition3_holds(1.0, 0.5, 0.1)

    def test_condition5(self):
        assert not condition5_holds(10.0, 0.0, 0.1, 0.5, 1)
        assert condition5_holds(1e6, tau_of(1e6, 0.1), 0.1, 0.5, 1)

    def test_from_constants(self, worked_params):
        constants = peierls_constants(worked_params)
        report = conditions_from_constants(constants, beta=1e7, tau0=82.14)
        assert report.l0 == 113
        assert report.rho0 == pytest.approx(constants.rho0)
        assert report.K == pytest.approx(1.0 - constants.r1)


class TestMinimalBeta:
    def test_worked_example_is_beyond_desk_scale(self):
        r1 = 1.0 / lattice_ball_count(12)
        result = minimal_beta(WORKED_DELTA, WORKED_RHO0, 113, r1=r1)
        assert result.beta >= 1e5
        assert result.beta == pytest.approx(4e6, rel=0.5)
        assert not result.desk_simulable
        assert result.report.satisfied
        data = result.to_dict()
        assert data["not_desk_simulable"] and data["minimal_beta"] == result.beta

    def test_bisection_is_tight(self):
        result = minimal_beta(0.5, 0.4, 1, tau0=5.0)
        assert psz_conditions_check(result.beta, 0.5, 0.4, 1, tau0=5.0).satisfied
        assert not psz_conditions_check(0.99 * result.beta, 0.5, 0.4, 1, tau0=5.0).satisfied
