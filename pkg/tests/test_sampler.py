import math

import numpy as np
import pandas as pd
import pytest

from quermass.contours import Tiling
from quermass.errors import ConfigError, InsufficientSamplesError
from quermass.model import Configuration, QuermassParams, TileBox, Window
from quermass.sampler import (BoundaryCondition, MoveProbabilities, Sampler, Trace, estimate_density, mh_step,
                              run_chain)

SQUARE = Window(0.0, 0.0, 3.0, 3.0)


def coarse_setup(spin: int, p: QuermassParams):
    """5x5 box of unit tiles with L = 1; only the centre tile is off the inner band."""
    tiling = Tiling(1.0, 1)
    window = tiling.window(TileBox.centered(5))
    return Sampler(p, window, BoundaryCondition.wired(spin), tiling=tiling), window


class TestBoundaryCondition:
    def test_parse(self):
        assert BoundaryCondition.parse("Wired1").label == "wired1"
        assert BoundaryCondition.parse("free").label == "free"
        with pytest.raises(ValueError):
            BoundaryCondition.parse("periodic")

    def test_wired_spin_must_be_binary(self):
        with pytest.raises(ValueError):
            BoundaryCondition.wired(2)


class TestDetailedBalance:
    p = QuermassParams(theta1=0.2, theta2=0.05, beta=0.7, z=1.3, R0=0.6, R1=0.6)
    cfg = Configuration(np.array([[1.0, 1.2], [1.7, 1.1]]), np.array([0.6, 0.6]))

    def test_birth_and_death_are_reverse_moves(self, rng):
        sampler = Sampler(self.p, SQUARE, BoundaryCondition.free())
        before = sampler.initial_state(rng, self.cfg)
        after = sampler.initial_state(rng, self.cfg.with_point(1.4, 1.6, 0.6))
        log_birth = sampler.proposal_log_ratio(before, "birth", x=1.4, y=1.6, r=0.6)
        log_death = sampler.proposal_log_ratio(after, "death", k=2)
        assert log_birth == pytest.approx(-log_death, abs=1e-9)

    def test_birth_ratio_matches_target_density(self, rng):
        probs = MoveProbabilities()
        sampler = Sampler(self.p, SQUARE, BoundaryCondition.free())
        state = sampler.initial_state(rng, self.cfg)
        grown = self.cfg.with_point(1.4, 1.6, 0.6)
        target_ratio = sampler.log_target(grown.points, grown.radii) - sampler.log_target(state.points, state.radii)
        proposal_ratio = math.log(probs.death / 3) - math.log(probs.birth / SQUARE.area)
        log_birth = sampler.proposal_log_ratio(state, "birth", x=1.4, y=1.6, r=0.6)
        assert log_birth == pytest.approx(target_ratio + proposal_ratio, abs=1e-9)

    def test_move_ratio_matches_target_density(self, rng):
        sampler = Sampler(self.p, SQUARE, BoundaryCondition.free())
        state = sampler.initial_state(rng, self.cfg)
        moved = Configuration(np.array([[1.0, 1.2], [2.2, 0.9]]), self.cfg.radii)
        expected = sampler.log_target(moved.points, moved.radii) - sampler.log_target(state.points, state.radii)
        assert sampler.proposal_log_ratio(state, "move", k=1, x=2.2, y=0.9) == pytest.approx(expected, abs=1e-9)

    def test_move_out_of_window_is_rejected(self, rng):
        sampler = Sampler(self.p, SQUARE, BoundaryCondition.free())
        state = sampler.initial_state(rng, self.cfg)
        assert sampler.proposal_log_ratio(state, "move", k=0, x=-0.5, y=1.0) == -math.inf

    def test_saturated_birth_has_no_energy_cost(self, rng):
        sampler = Sampler(self.p, SQUARE, BoundaryCondition.free())
        cfg = Configuration(np.array([[1.5, 1.5]]), np.array([0.6]))
        state = sampler.initial_state(rng, cfg)
        _, delta_h = sampler.log_ratio_birth(state, 1.5, 1.5, 0.6)
        assert delta_h == pytest.approx(0.0, abs=1e-12)

    def test_outer_condition_uses_the_exterior_disks(self, rng):
        outer = Configuration(np.array([[-0.3, 1.5]]), np.array([0.6]))
        sampler = Sampler(self.p, SQUARE, BoundaryCondition.outer_configuration(outer))
        state = sampler.initial_state(rng)
        _, delta_h = sampler.log_ratio_birth(state, 0.1, 1.5, 0.6)
        free = Sampler(self.p, SQUARE, BoundaryCondition.free())
        _, free_delta = free.log_ratio_birth(free.initial_state(rng), 0.1, 1.5, 0.6)
        assert delta_h < free_delta

    def test_unknown_proposal(self, rng):
        sampler = Sampler(self.p, SQUARE, BoundaryCondition.free())
        with pytest.raises(ValueError):
            sampler.proposal_log_ratio(sampler.initial_state(rng), "swap")


class TestWiredConstraint:
    p = QuermassParams(beta=0.5, z=1.0, R0=0.3, R1=0.3)

    def test_death_of_sole_band_point_is_rejected(self, rng):
        sampler, _ = coarse_setup(1, self.p)
        sites = TileBox.centered(5).sites()
        cfg = Configuration(sites * 1.0, np.full(len(sites), 0.3))
        state = sampler.initial_state(rng, cfg)
        centre = int(np.nonzero(np.all(sites == 0, axis=1))[0][0])
        for k in range(len(sites)):
            log_r = sampler.proposal_log_ratio(state, "death", k=k)
            if k == centre:
                assert log_r > -math.inf
            else:
                assert log_r == -math.inf

    def test_birth_in_band_is_rejected_for_empty_boundary(self, rng):
        sampler, _ = coarse_setup(0, self.p)
        state = sampler.initial_state(rng)
        assert sampler.proposal_log_ratio(state, "birth", x=2.0, y=0.0, r=0.3) == -math.inf
        assert sampler.proposal_log_ratio(state, "birth", x=0.1, y=-0.1, r=0.3) > -math.inf

    def test_wired_chain_keeps_the_constraint(self):
        for spin in (0, 1):
            sampler, window = coarse_setup(spin, self.p)
            trace = run_chain(self.p, window, BoundaryCondition.wired(spin), 5, seed=3,
                              tiling=sampler.tiling, validate_every=1)
            assert len(trace) == 5
            if spin == 1:
                assert trace.records["N"].min() >= 24

    def test_wired_needs_tiles(self):
        with pytest.raises(ConfigError):
            Sampler(self.p, SQUARE, BoundaryCondition.wired(0))


class TestRunChain:
    def test_same_seed_same_trace(self):
        p = QuermassParams(theta1=0.1, beta=0.5, z=1.0, R0=0.5, R1=0.5)
        a = run_chain(p, SQUARE, BoundaryCondition.free(), 20, seed=42, burn_in=5)
        b = run_chain(p, SQUARE, BoundaryCondition.free(), 20, seed=42, burn_in=5)
        pd.testing.assert_frame_equal(a.records, b.records)

    def test_thinning_and_snapshots(self):
        p = QuermassParams(beta=0.0, z=1.0)
        trace = run_chain(p, SQUARE, BoundaryCondition.free(), 20, seed=1, thin=2, snapshot_every=5)
        assert len(trace) == 10
        assert sorted(trace.snapshots) == [10, 20]
        frame = trace.snapshot_frame()
        assert list(frame.columns) == ["sweep", "x", "y", "r"]

    def test_poisson_density(self):
        p = QuermassParams(beta=0.0, z=2.0)
        trace = run_chain(p, SQUARE, BoundaryCondition.free(), 400, seed=7, burn_in=50)
        rho, se = estimate_density(trace)
        assert abs(rho - 2.0) <= 4 * se

    @pytest.mark.slow
    def test_poisson_density_long_run(self):
        p = QuermassParams(beta=0.0, z=2.0)
        trace = run_chain(p, SQUARE, BoundaryCondition.free(), 100_000, seed=11, burn_in=100)
        rho, se = estimate_density(trace)
        assert abs(rho - 2.0) <= 3 * se

    def test_small_activity_empties_the_window(self):
        p = QuermassParams(beta=0.0, z=1e-4)
        trace = run_chain(p, SQUARE, BoundaryCondition.free(), 50, seed=2)
        assert trace.records["N"].mean() < 0.1

    def test_volume_fraction_bound(self):
        p = QuermassParams(beta=0.5, z=1.0, R0=0.5, R1=0.5)
        trace = run_chain(p, SQUARE, BoundaryCondition.free(), 20, seed=5, validate_every=1)
        fraction = trace.records["H"] / SQUARE.area
        assert ((fraction >= 0) & (fraction <= (3.0 + 1.0) ** 2 / 9.0)).all()

    def test_sweeps_must_be_positive(self):
        with pytest.raises(ConfigError):
            run_chain(QuermassParams(), SQUARE, BoundaryCondition.free(), 0, seed=1)

    def test_window_smaller_than_a_tile(self):
        with pytest.raises(ConfigError):
            Sampler(QuermassParams(), Window(0.0, 0.0, 0.5, 0.5), BoundaryCondition.free(), tiling=Tiling(1.0, 1))

    def test_mh_step_advances(self, rng):
        p = QuermassParams(beta=0.0, z=1.0)
        sampler = Sampler(p, SQUARE, BoundaryCondition.free())
        state = sampler.initial_state(rng)
        mh_step(state, p, BoundaryCondition.free())
        assert state.step == 1
        assert sum(state.proposed.values()) == 1


class TestEstimateDensity:
    def test_too_few_records(self):
        records = pd.DataFrame({"sweep": range(1, 6), "N": [1, 2, 3, 2, 1]})
        trace = Trace(records, {}, 1.0, 0, "free")
        with pytest.raises(InsufficientSamplesError):
            estimate_density(trace)

    def test_burn_in_removes_everything(self):
        records = pd.DataFrame({"sweep": range(1, 41), "N": np.ones(40)})
        trace = Trace(records, {}, 2.0, 0, "free")
        assert estimate_density(trace).rho == pytest.approx(0.5)
        with pytest.raises(InsufficientSamplesError):
            estimate_density(trace, burn_in=40)
