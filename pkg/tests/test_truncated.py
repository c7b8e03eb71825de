import math

import numpy as np
import pytest

from quermass.errors import NegativeCorrectionError, ParameterDomainError, RootNotBracketedError
from quermass.model import QuermassParams
from quermass.peierls import peierls_constants
from quermass.truncated import (FCorrections, TruncatedPressure, estimate_f_corrections, find_critical_s,
                                gap_derivative, gap_function, kappa, kappa_derivative_sup, psi0_empty,
                                psi0_occupied, s_beta, single_defect_contour, truncated_pressure_estimate,
                                truncated_pressure_order0)


class TestOrderZero:
    def test_s_beta_value(self):
        assert s_beta(10.0, 0.5) == pytest.approx(1.0316, abs=1e-4)

    def test_pressures_meet_at_s_beta(self):
        s = s_beta(10.0, 0.5)
        assert psi0_empty(s) == pytest.approx(psi0_occupied(s, 10.0, 0.5), abs=1e-12)

    def test_vectorised(self):
        s = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(psi0_empty(s), -s)
        assert psi0_occupied(s, 10.0, 0.5).shape == (3,)

    def test_phase_below_and_above(self):
        low = truncated_pressure_order0(QuermassParams(beta=10.0, z=5.0), delta=0.5)
        assert low.a0 == 0.0 and low.a1 > 0
        high = truncated_pressure_order0(QuermassParams(beta=10.0, z=20.0), delta=0.5)
        assert high.a1 == 0.0 and high.a0 > 0
        assert set(high.to_dict()) >= {"psi", "a0", "a1", "order"}

    def test_needs_positive_beta(self):
        with pytest.raises(ParameterDomainError):
            truncated_pressure_order0(QuermassParams(beta=0.0))

    def test_negative_gaps_are_rejected(self):
        with pytest.raises(ValueError):
            TruncatedPressure(0, 1.0, math.nan, 0.0)


class TestGapFunction:
    p = QuermassParams(beta=10.0)

    def test_root_without_corrections(self):
        assert find_critical_s(self.p, delta=0.5) == pytest.approx(s_beta(10.0, 0.5), abs=1e-10)

    def test_root_with_constants_bracket(self, worked_params):
        constants = peierls_constants(worked_params.with_beta(50.0))
        root = find_critical_s(worked_params.with_beta(50.0), constants)
        assert root == pytest.approx(constants.s_beta, abs=1e-10)

    def test_correction_moves_the_root(self):
        shifted = find_critical_s(self.p, f1=0.05, delta=0.5)
        assert shifted < s_beta(10.0, 0.5)
        assert gap_function(shifted, self.p, f1=0.05, delta=0.5) == pytest.approx(0.0, abs=1e-10)

    def test_callable_correction(self):
        value = gap_function(1.0, self.p, f1=lambda s: 0.1 * s, f0=0.02, delta=0.5)
        assert value == pytest.approx(gap_function(1.0, self.p, delta=0.5) + 0.08)

    def test_no_sign_change(self):
        with pytest.raises(RootNotBracketedError):
            find_critical_s(self.p, bracket=(5.0, 6.0), delta=0.5)

    def test_derivative(self):
        s, h = 1.2, 1e-6
        numeric = (gap_function(s + h, self.p, delta=0.5) - gap_function(s - h, self.p, delta=0.5)) / (2 * h)
        assert gap_derivative(s, 10.0, 0.5) == pytest.approx(numeric, rel=1e-6)

    def test_needs_positive_beta(self):
        with pytest.raises(ParameterDomainError):
            find_critical_s(QuermassParams(beta=0.0), delta=0.5)


class TestKappa:
    def test_plateaus_and_midpoint(self):
        assert kappa(0.0, 1.0) == 1.0
        assert kappa(1.0 / 8.0, 1.0) == 1.0
        assert kappa(3.0 / 16.0, 1.0) == pytest.approx(0.5)
        assert kappa(0.25, 1.0) == 0.0

    def test_derivative_bound(self):
        x = np.linspace(0.0, 0.5, 20001)
        slopes = np.abs(np.diff(kappa(x, 1.0)) / np.diff(x))
        assert slopes.max() <= kappa_derivative_sup(1.0) + 1e-6
        assert slopes.max() == pytest.approx(kappa_derivative_sup(1.0), rel=1e-3)


class TestCorrections:
    def test_single_defect_contour(self, worked_tiling):
        contour = single_defect_contour(worked_tiling, 0)
        assert contour.size == 113
        assert contour.n_spin(1) == 1
        assert contour.contour_type == 0
        assert single_defect_contour(worked_tiling, 1).n_spin(0) == 1

    def test_estimated_corrections_are_nonnegative(self, worked_params, worked_tiling):
        corrections = estimate_f_corrections(worked_params.with_beta(5.0), tiling=worked_tiling, samples=8)
        assert corrections.f0 >= 0 and corrections.f1 >= 0

    def test_first_order_estimate(self):
        p = QuermassParams(beta=10.0, z=10.0)
        corrections = FCorrections(0.01, 0.02, 0.0, 0.0, 0.0, 0.0)
        base = truncated_pressure_order0(p)
        first = truncated_pressure_estimate(p, corrections=corrections)
        assert first.order == 1 and first.experimental
        assert first.psi0 == pytest.approx(base.psi0 + 0.01)
        assert first.psi1 == pytest.approx(base.psi1 + 0.02)

    @pytest.mark.parametrize("f0, f1", [(-0.01, 0.0), (0.0, -1e-6)])
    def test_negative_correction_is_rejected(self, f0, f1):
        corrections = FCorrections(f0, f1, 0.0, 0.0, 0.0, 0.0)
        with pytest.raises(NegativeCorrectionError, match="below its order-0 value"):
            truncated_pressure_estimate(QuermassParams(beta=10.0, z=10.0), corrections=corrections)
