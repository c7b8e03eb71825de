import math
from collections import Counter

import numpy as np
import pytest

from quermass.contours import SpinField, domino_set, extract_contours, ratio_bound_holds, spin_field
from quermass.errors import ContourTooLargeError, ParameterDomainError
from quermass.model import Configuration, QuermassParams, TileBox
from quermass.peierls import (chi_bound_holds, contour_energy, estimate_I_gamma, lattice_ball_count,
                              peierls_constants, verify_peierls_bound)
from quermass.sampler import BoundaryCondition, run_chain


@pytest.fixture
def single_contour(worked_tiling):
    box = TileBox.centered(15)
    spins = np.zeros((15, 15), dtype=np.int8)
    spins[7, 7] = 1
    return extract_contours(SpinField((box.i0, box.j0), spins), worked_tiling)[0]


class TestLatticeBall:
    @pytest.mark.parametrize("radius, expected", [(0, 1), (1, 5), (2, 13), (6, 113), (30, 2821)])
    def test_euclidean(self, radius, expected):
        assert lattice_ball_count(radius) == expected

    def test_sup(self):
        assert lattice_ball_count(6, "sup") == 169


class TestPeierlsConstants:
    def test_worked_example(self, worked_params):
        constants = peierls_constants(worked_params)
        assert constants.L == 6
        assert constants.l0 == 113
        assert constants.theta1_star == pytest.approx(0.5)
        assert constants.r0 == pytest.approx(1 / 2821)
        assert constants.theta2_star == pytest.approx(math.pi / 2821)
        assert constants.theta2_star == pytest.approx(1.114e-3, rel=1e-3)
        assert constants.rho0 == pytest.approx(0.125 / 2821)
        assert constants.rho0 == pytest.approx(4.43e-5, rel=1e-3)
        assert constants.admissible

    def test_tau_and_eta(self, worked_params):
        constants = peierls_constants(worked_params.with_beta(1e6))
        assert constants.tau == pytest.approx(0.5 * 1e6 * constants.rho0 - 8)
        assert constants.eta == pytest.approx(2 * math.exp(-constants.tau * 113 / 3))

    def test_U_beta_brackets_s_beta(self, worked_params):
        constants = peierls_constants(worked_params.with_beta(50.0))
        lo, hi = constants.U_beta
        assert lo < constants.s_beta < hi

    def test_large_theta2_is_rejected(self, worked_params):
        p = QuermassParams(theta2=0.01)
        with pytest.raises(ParameterDomainError):
            peierls_constants(p)
        assert not peierls_constants(p, strict=False).admissible

    def test_theta1_below_the_threshold(self):
        with pytest.raises(ParameterDomainError):
            peierls_constants(QuermassParams(theta1=-0.5))

    def test_negative_theta1_inside_the_domain(self):
        constants = peierls_constants(QuermassParams(theta1=-0.1))
        assert constants.admissible
        assert constants.rho0 > 0
        assert constants.t > 0


class TestEnergyBounds:
    def test_isolated_disk(self, worked_params, worked_tiling, single_contour):
        cfg = Configuration(np.array([[0.0, 0.0]]), np.array([1.0]))
        constants = peierls_constants(worked_params)
        assert contour_energy(cfg, single_contour, worked_params, worked_tiling) == pytest.approx(math.pi)
        assert verify_peierls_bound(cfg, single_contour, worked_params, constants, worked_tiling)
        assert chi_bound_holds(cfg, single_contour, worked_params, worked_tiling)

    def test_empty_configuration(self, worked_params, worked_tiling, single_contour):
        assert contour_energy(Configuration.empty(), single_contour, worked_params, worked_tiling) == 0.0


class TestIGamma:
    def test_zero_beta_is_the_prior(self, worked_tiling, single_contour):
        p = QuermassParams(beta=0.0, z=1.0)
        result = estimate_I_gamma(single_contour, p, worked_tiling, samples=8, constants=peierls_constants(p))
        lam = 0.125
        expected = math.exp(-lam * 112) * (1 - math.exp(-lam))
        assert result.estimate == pytest.approx(expected, rel=1e-9)
        assert result.bound == pytest.approx(expected, rel=1e-9)
        assert result.standard_error == pytest.approx(0.0, abs=1e-30)

    def test_estimate_respects_the_bound(self, worked_params, worked_tiling, single_contour):
        constants = peierls_constants(worked_params)
        result = estimate_I_gamma(single_contour, worked_params, worked_tiling, samples=16, seed=3,
                                  constants=constants)
        assert result.n_samples == 16
        assert result.bound_ok

    def test_threads_do_not_change_the_result(self, worked_params, worked_tiling, single_contour):
        one = estimate_I_gamma(single_contour, worked_params, worked_tiling, samples=8, seed=5, threads=1)
        two = estimate_I_gamma(single_contour, worked_params, worked_tiling, samples=8, seed=5, threads=2)
        assert one.estimate == two.estimate

    def test_cap(self, worked_params, worked_tiling, single_contour):
        with pytest.raises(ContourTooLargeError):
            estimate_I_gamma(single_contour, worked_params, worked_tiling, cap=100)


@pytest.mark.slow
class TestSampledContours:
    def test_bounds_hold_on_every_sampled_contour(self, worked_params, worked_tiling):
        constants = peierls_constants(worked_params)
        box = TileBox.centered(40)
        window = worked_tiling.window(box)
        passed = Counter()
        failures = []
        for seed in range(60):
            trace = run_chain(worked_params, window, BoundaryCondition.free(), 100, seed, tiling=worked_tiling,
                              burn_in=20, snapshot_every=5)
            for sweep, cfg in sorted(trace.snapshots.items()):
                field = spin_field(cfg, worked_tiling, box, exterior=0)
                for contour in extract_contours(field, worked_tiling):
                    checks = {
                        "peierls": verify_peierls_bound(cfg, contour, worked_params, constants, worked_tiling),
                        "domino": len(domino_set(contour, field, worked_tiling)) >= constants.r0 * contour.size,
                        "ratio": ratio_bound_holds(contour, constants.r1),
                        "chi": chi_bound_holds(cfg, contour, worked_params, worked_tiling),
                    }
                    passed["contours"] += 1
                    passed.update(name for name, ok in checks.items() if ok)
                    failures.extend((seed, sweep, name) for name, ok in checks.items() if not ok)
            if passed["contours"] >= 500:
                break
        assert passed["contours"] >= 500
        assert failures == []
