"""Metropolis-Hastings sampling of the Quermass model in a finite window.

The target is the density z^N exp(-beta H_bc) with respect to the unit
Poisson process of marked points in the window, where H_bc is the energy
under the chosen boundary condition:

- free:  H(omega)
- outer: H(omega + omega_ext) - H(omega_ext)
- wired: sum of tile energies over the box, with every tile of the inner
  boundary band forced to carry spin #
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from . import config
from .contours import Tiling, interior_boundary
from .errors import (ConfigError, ConstraintViolationError, EnergyCacheError,
                     InsufficientSamplesError, ParameterDomainError)
from .geometry import DiskUnion, TileDecomposition, minkowski_functionals
from .model import Configuration, QuermassParams, Window, hamiltonian, neighbours_of_disk

logger = logging.getLogger(__name__)

MOVES = ("birth", "death", "move")
TRACE_COLUMNS = ["sweep", "N", "H", "acc_birth", "acc_death", "acc_move"]


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """Free, outer-configuration or spin-wired boundary condition."""

    kind: str = "free"
    spin: Optional[int] = None
    outer: Optional[Configuration] = None

    def __post_init__(self):
        if self.kind not in ("free", "outer", "wired"):
            raise ValueError(f"Unknown boundary condition '{self.kind}'")
        if self.kind == "wired" and self.spin not in (0, 1):
            raise ValueError(f"Wired boundary spin must be 0 or 1, got {self.spin}")
        if self.kind == "outer" and self.outer is None:
            raise ValueError("Outer boundary condition needs a configuration")

    @classmethod
    def free(cls) -> "BoundaryCondition":
        return cls("free")

    @classmethod
    def wired(cls, spin: int) -> "BoundaryCondition":
        return cls("wired", spin=int(spin))

    @classmethod
    def outer_configuration(cls, cfg: Configuration) -> "BoundaryCondition":
        return cls("outer", outer=cfg)

    @classmethod
    def parse(cls, label: str) -> "BoundaryCondition":
        label = label.strip().lower()
        if label == "free":
            return cls.free()
        if label in ("wired0", "wired1"):
            return cls.wired(int(label[-1]))
        raise ValueError(f"Unknown boundary condition '{label}', expected free, wired0 or wired1")

    @property
    def label(self) -> str:
        if self.kind == "wired":
            return f"wired{self.spin}"
        return self.kind


@dataclass(frozen=True)
class MoveProbabilities:
    birth: float = 0.35
    death: float = 0.35
    move: float = 0.30

    def __post_init__(self):
        if self.birth <= 0 or self.death <= 0 or self.move < 0:
            raise ParameterDomainError("Birth and death probabilities must be positive, move non-negative")
        if abs(self.birth + self.death + self.move - 1.0) > 1e-12:
            raise ParameterDomainError("Move probabilities must sum to 1")


@dataclass
class ChainState:
    """Current configuration of a chain with its cached energy."""

    points: np.ndarray
    radii: np.ndarray
    window: Window
    energy: float
    rng: np.random.Generator
    step: int = 0
    tile_counts: Optional[np.ndarray] = None
    proposed: Dict[str, int] = field(default_factory=lambda: dict.fromkeys(MOVES, 0))
    accepted: Dict[str, int] = field(default_factory=lambda: dict.fromkeys(MOVES, 0))

    def __len__(self) -> int:
        return len(self.radii)

    @property
    def current(self) -> Configuration:
        return Configuration(self.points.copy(), self.radii.copy())


@dataclass
class Trace:
    """Recorded sweeps of one chain."""

    records: pd.DataFrame
    snapshots: Dict[int, Configuration]
    window_area: float
    seed: object
    bc_label: str

    def __len__(self) -> int:
        return len(self.records)

    def snapshot_frame(self) -> pd.DataFrame:
        """Snapshots in long format (sweep, x, y, r)."""
        frames = [pd.DataFrame({"sweep": sweep, "x": cfg.points[:, 0], "y": cfg.points[:, 1], "r": cfg.radii})
                  for sweep, cfg in sorted(self.snapshots.items())]
        if not frames:
            return pd.DataFrame(columns=["sweep", "x", "y", "r"])
        return pd.concat(frames, ignore_index=True)


class Sampler:
    """Birth / death / translate proposals with exact MH acceptance."""

    def __init__(self, p: QuermassParams, window: Window, bc: BoundaryCondition,
                 tiling: Optional[Tiling] = None, probs: Optional[MoveProbabilities] = None,
                 step_scale: Optional[float] = None, convention: str = "boundary",
                 track_energy: Optional[bool] = None):
        self.p = p
        self.window = window
        self.bc = bc
        self.probs = probs or MoveProbabilities()
        self.step_scale = p.R0 / 2.0 if step_scale is None else float(step_scale)
        self.convention = convention
        self.track_energy = p.beta > 0 if track_energy is None else bool(track_energy)
        self.log_area = math.log(window.area)
        self.log_z = math.log(p.z)

        if tiling is None and window.delta is not None:
            tiling = Tiling.for_params(p, window.delta)
        self.tiling = tiling
        if tiling is not None and (window.width < tiling.delta or window.height < tiling.delta):
            raise ConfigError(f"Window {window.width:.4g} x {window.height:.4g} is smaller than one tile "
                              f"of side {tiling.delta:.4g}")

        self.box = window.tile_box
        self.boundary_mask = None
        if bc.kind == "wired":
            if self.box is None or tiling is None:
                raise ConfigError("Wired boundary conditions need a window made of tiles")
            self.boundary_mask = interior_boundary(np.ones((self.box.nx, self.box.ny), dtype=bool),
                                                   tiling.L, tiling.norm)

        self._outer = None
        self._outer_energy = 0.0
        if bc.kind == "outer":
            self._outer = bc.outer.exclude(window).near(window, 2.0 * p.R1)
            self._outer_energy = hamiltonian(self._outer, p)

    # Energies

    def energy(self, points: np.ndarray, radii: np.ndarray) -> float:
        """Full recomputation of H_bc."""
        if not self.track_energy:
            return math.nan
        cfg = Configuration(points, radii)
        if self.bc.kind == "free":
            return hamiltonian(cfg, self.p)
        if self.bc.kind == "outer":
            return hamiltonian(cfg.union(self._outer), self.p) - self._outer_energy
        if len(cfg) == 0:
            return 0.0
        decomposition = TileDecomposition(cfg.halo(), self.tiling.delta, self.convention)
        tiles = decomposition.tiles()
        inside = self.box.contains(np.array(tiles))
        return math.fsum(decomposition.functionals(t).energy(self.p.theta1, self.p.theta2)
                         for t, keep in zip(tiles, inside) if keep)

    def _union_energy(self, union: DiskUnion) -> float:
        if len(union) == 0:
            return 0.0
        return minkowski_functionals(union).energy(self.p.theta1, self.p.theta2)

    def _outside_tiles(self, x: float, y: float, r: float) -> List[Tuple[int, int]]:
        delta = self.tiling.delta
        lo_a, hi_a = math.floor((x - r) / delta + 0.5), math.floor((x + r) / delta + 0.5)
        lo_b, hi_b = math.floor((y - r) / delta + 0.5), math.floor((y + r) / delta + 0.5)
        tiles = [(a, b) for a in range(lo_a, hi_a + 1) for b in range(lo_b, hi_b + 1)]
        inside = self.box.contains(np.array(tiles))
        return [t for t, keep in zip(tiles, inside) if not keep]

    def insertion_delta(self, points: np.ndarray, radii: np.ndarray, x: float, y: float, r: float) -> float:
        """H_bc(omega + disk) - H_bc(omega) from the disks meeting the new one."""
        near = neighbours_of_disk(points, radii, x, y, r)
        centers, rads = points[near], radii[near]
        if self._outer is not None and len(self._outer):
            ext = neighbours_of_disk(self._outer.points, self._outer.radii, x, y, r)
            centers = np.vstack([centers, self._outer.points[ext]])
            rads = np.concatenate([rads, self._outer.radii[ext]])
        before = DiskUnion(centers, rads)
        after = before.with_disk(x, y, r)
        delta_h = self._union_energy(after) - self._union_energy(before)
        if self.bc.kind == "wired":
            outside = self._outside_tiles(x, y, r)
            if outside:
                dec_after = TileDecomposition(after, self.tiling.delta, self.convention)
                dec_before = TileDecomposition(before, self.tiling.delta, self.convention)
                for t in outside:
                    delta_h -= (dec_after.functionals(t).energy(self.p.theta1, self.p.theta2)
                                - dec_before.functionals(t).energy(self.p.theta1, self.p.theta2))
        return delta_h

    # Wired constraint

    def _local_tile(self, x: float, y: float) -> Tuple[int, int]:
        a, b = self.tiling.tile_of(np.array([[x, y]]))[0]
        # points on the window edge may round into the neighbouring tile
        a = min(max(int(a - self.box.i0), 0), self.box.nx - 1)
        b = min(max(int(b - self.box.j0), 0), self.box.ny - 1)
        return a, b

    def _on_boundary(self, tile: Tuple[int, int]) -> bool:
        return bool(self.boundary_mask[tile])

    def birth_allowed(self, state: ChainState, x: float, y: float) -> bool:
        if self.bc.kind != "wired" or self.bc.spin == 1:
            return True
        return not self._on_boundary(self._local_tile(x, y))

    def death_allowed(self, state: ChainState, k: int) -> bool:
        if self.bc.kind != "wired" or self.bc.spin == 0:
            return True
        tile = self._local_tile(*state.points[k])
        return not (self._on_boundary(tile) and state.tile_counts[tile] == 1)

    def move_allowed(self, state: ChainState, k: int, x: float, y: float) -> bool:
        if self.bc.kind != "wired":
            return True
        old = self._local_tile(*state.points[k])
        new = self._local_tile(x, y)
        if self.bc.spin == 0:
            return not self._on_boundary(new)
        return old == new or not (self._on_boundary(old) and state.tile_counts[old] == 1)

    def check_constraint(self, state: ChainState):
        """Raise if the wired indicator is violated."""
        if self.bc.kind != "wired":
            return
        counts = state.tile_counts[self.boundary_mask]
        ok = np.all(counts >= 1) if self.bc.spin == 1 else np.all(counts == 0)
        if not ok:
            raise ConstraintViolationError(f"Inner boundary band violates spin {self.bc.spin}")

    # Proposals

    def log_ratio_birth(self, state: ChainState, x: float, y: float, r: float) -> Tuple[float, float]:
        """Log MH ratio and energy change of adding (x, y, r)."""
        if not self.birth_allowed(state, x, y):
            return -math.inf, math.nan
        delta_h = self.insertion_delta(state.points, state.radii, x, y, r) if self.track_energy else 0.0
        log_r = (self.log_z + self.log_area - math.log(len(state) + 1)
                 + math.log(self.probs.death / self.probs.birth) - self.p.beta * delta_h)
        return log_r, delta_h

    def log_ratio_death(self, state: ChainState, k: int) -> Tuple[float, float]:
        """Log MH ratio and energy change of removing point k."""
        if not self.death_allowed(state, k):
            return -math.inf, math.nan
        delta_h = 0.0
        if self.track_energy:
            keep = np.arange(len(state)) != k
            x, y = state.points[k]
            delta_h = -self.insertion_delta(state.points[keep], state.radii[keep], x, y, state.radii[k])
        log_r = (math.log(len(state)) - self.log_z - self.log_area
                 + math.log(self.probs.birth / self.probs.death) - self.p.beta * delta_h)
        return log_r, delta_h

    def log_ratio_move(self, state: ChainState, k: int, x: float, y: float) -> Tuple[float, float]:
        """Log MH ratio and energy change of translating point k to (x, y)."""
        if not self.window.contains(np.array([[x, y]]))[0] or not self.move_allowed(state, k, x, y):
            return -math.inf, math.nan
        delta_h = 0.0
        if self.track_energy:
            keep = np.arange(len(state)) != k
            pts, rad = state.points[keep], state.radii[keep]
            r = state.radii[k]
            ox, oy = state.points[k]
            delta_h = self.insertion_delta(pts, rad, x, y, r) - self.insertion_delta(pts, rad, ox, oy, r)
        return -self.p.beta * delta_h, delta_h

    def proposal_log_ratio(self, state: ChainState, kind: str, k: Optional[int] = None,
                           x: Optional[float] = None, y: Optional[float] = None,
                           r: Optional[float] = None) -> float:
        """Log MH ratio of an explicit proposal (birth at (x, y, r), death of k, move of k to (x, y))."""
        if kind == "birth":
            return self.log_ratio_birth(state, x, y, r)[0]
        if kind == "death":
            return self.log_ratio_death(state, k)[0]
        if kind == "move":
            return self.log_ratio_move(state, k, x, y)[0]
        raise ValueError(f"Unknown proposal '{kind}', expected one of {MOVES}")

    def log_target(self, points: np.ndarray, radii: np.ndarray) -> float:
        """Unnormalised log density n log z - beta H_bc (constraint ignored)."""
        energy = self.energy(points, radii) if self.track_energy else 0.0
        return len(radii) * self.log_z - self.p.beta * energy

    def _accept(self, state: ChainState, log_r: float) -> bool:
        if log_r >= 0:
            return True
        if log_r == -math.inf:
            return False
        return state.rng.random() < math.exp(log_r)

    def step(self, state: ChainState) -> ChainState:
        """One proposal followed by the MH accept / reject decision."""
        rng = state.rng
        state.step += 1
        u = rng.random()
        n = len(state)
        if u < self.probs.birth:
            kind = "birth"
            x, y = self.window.sample_uniform(rng, 1)[0]
            r = float(self.p.sample_radii(rng, 1)[0])
            log_r, delta_h = self.log_ratio_birth(state, x, y, r)
        elif u < self.probs.birth + self.probs.death:
            kind = "death"
            if n == 0:
                state.proposed[kind] += 1
                return state
            k = int(rng.integers(n))
            log_r, delta_h = self.log_ratio_death(state, k)
        else:
            kind = "move"
            if n == 0:
                state.proposed[kind] += 1
                return state
            k = int(rng.integers(n))
            x, y = state.points[k] + rng.normal(0.0, self.step_scale, size=2)
            log_r, delta_h = self.log_ratio_move(state, k, x, y)
        state.proposed[kind] += 1
        if not self._accept(state, log_r):
            return state

        state.accepted[kind] += 1
        if kind == "birth":
            self._count(state, x, y, +1)
            state.points = np.vstack([state.points, [[x, y]]])
            state.radii = np.append(state.radii, r)
        elif kind == "death":
            self._count(state, *state.points[k], -1)
            state.points = np.delete(state.points, k, axis=0)
            state.radii = np.delete(state.radii, k)
        else:
            self._count(state, *state.points[k], -1)
            self._count(state, x, y, +1)
            state.points[k] = (x, y)
        if self.track_energy:
            state.energy += delta_h
        return state

    def _count(self, state: ChainState, x: float, y: float, change: int):
        if state.tile_counts is not None:
            state.tile_counts[self._local_tile(x, y)] += change

    # Initialisation

    def initial_state(self, rng: np.random.Generator, initial: Optional[Configuration] = None) -> ChainState:
        """Empty start, a given configuration, or a filled inner band for wired spin 1."""
        if initial is not None:
            cfg = initial.restrict(self.window)
        elif self.bc.kind == "wired" and self.bc.spin == 1:
            cfg = self._filled_start(rng)
        else:
            cfg = Configuration.empty()
        counts = None
        if self.box is not None and self.tiling is not None:
            counts = np.zeros((self.box.nx, self.box.ny), dtype=int)
            if len(cfg):
                local = self.tiling.tile_of(cfg.points) - np.array([self.box.i0, self.box.j0])
                local = np.clip(local, 0, [self.box.nx - 1, self.box.ny - 1])
                np.add.at(counts, (local[:, 0], local[:, 1]), 1)
        state = ChainState(cfg.points.copy(), cfg.radii.copy(), self.window,
                           self.energy(cfg.points, cfg.radii), rng, tile_counts=counts)
        self.check_constraint(state)
        return state

    def _filled_start(self, rng: np.random.Generator) -> Configuration:
        delta = self.tiling.delta
        lam = self.p.z * delta * delta
        counts = np.where(self.boundary_mask, 1, rng.poisson(lam, size=self.boundary_mask.shape))
        local = np.argwhere(counts > 0)
        tiles = np.repeat(local, counts[counts > 0], axis=0) + np.array([self.box.i0, self.box.j0])
        points = (tiles + rng.uniform(-0.5, 0.5, size=tiles.shape)) * delta
        return Configuration(points, self.p.sample_radii(rng, len(points)))


def mh_step(state: ChainState, p: QuermassParams, bc: BoundaryCondition,
            tiling: Optional[Tiling] = None, probs: Optional[MoveProbabilities] = None) -> ChainState:
    """Advance a chain state by one Metropolis-Hastings proposal."""
    return Sampler(p, state.window, bc, tiling=tiling, probs=probs).step(state)


def default_steps_per_sweep(p: QuermassParams, window: Window) -> int:
    return max(10, int(math.ceil(p.z * window.area)))


def run_chain(p: QuermassParams, window: Window, bc: BoundaryCondition, sweeps: int, seed,
              tiling: Optional[Tiling] = None, burn_in: int = 0, thin: int = 1,
              steps_per_sweep: Optional[int] = None, snapshot_every: int = 0,
              probs: Optional[MoveProbabilities] = None, validate_every: Optional[int] = None,
              initial: Optional[Configuration] = None, track_energy: Optional[bool] = None,
              convention: str = "boundary") -> Trace:
    """Run one chain and record its sweeps.

    Args:
        p: Model parameters
        window: Sampling window (a tile union for wired conditions)
        bc: Boundary condition
        sweeps: Number of sweeps after burn-in
        seed: Integer seed or numpy SeedSequence
        tiling: Tiling (defaults to the window's tile side)
        burn_in: Sweeps discarded before recording
        thin: Record every ``thin``-th sweep
        steps_per_sweep: Proposals per sweep (default max(10, ceil(z |window|)))
        snapshot_every: Keep a configuration every this many recorded sweeps (0: none)
        validate_every: Recompute the energy every this many sweeps
        initial: Optional starting configuration

    Returns:
        Trace with one record per kept sweep

    Raises:
        ConfigError: If sweeps < 1 or the window is smaller than one tile
        EnergyCacheError: If the cached energy drifts from a recomputation
    """
    if sweeps < 1:
        raise ConfigError(f"sweeps must be >= 1, got {sweeps}")
    if thin < 1 or burn_in < 0:
        raise ConfigError(f"Need thin >= 1 and burn_in >= 0, got thin={thin}, burn_in={burn_in}")
    sampler = Sampler(p, window, bc, tiling=tiling, probs=probs, convention=convention,
                      track_energy=track_energy)
    validate_every = config.ENERGY_CHECK_EVERY if validate_every is None else validate_every
    steps = steps_per_sweep or default_steps_per_sweep(p, window)
    rng = np.random.default_rng(seed)
    state = sampler.initial_state(rng, initial)

    rows = []
    snapshots: Dict[int, Configuration] = {}
    for sweep in range(1, burn_in + sweeps + 1):
        proposed_before = dict(state.proposed)
        accepted_before = dict(state.accepted)
        for _ in range(steps):
            sampler.step(state)
        sampler.check_constraint(state)
        if sampler.track_energy and validate_every and sweep % validate_every == 0:
            _validate_energy(sampler, state, sweep)

        if sweep <= burn_in or (sweep - burn_in) % thin:
            continue
        rates = {}
        for kind in MOVES:
            tried = state.proposed[kind] - proposed_before[kind]
            rates[kind] = (state.accepted[kind] - accepted_before[kind]) / tried if tried else math.nan
        rows.append({"sweep": sweep - burn_in, "N": len(state), "H": state.energy,
                     "acc_birth": rates["birth"], "acc_death": rates["death"], "acc_move": rates["move"]})
        if snapshot_every and len(rows) % snapshot_every == 0:
            snapshots[sweep - burn_in] = state.current

    records = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    logger.debug(f"Chain {bc.label} at z={p.z:.4g}: {len(records)} records, final N={len(state)}")
    return Trace(records, snapshots, window.area, seed, bc.label)


def _validate_energy(sampler: Sampler, state: ChainState, sweep: int):
    fresh = sampler.energy(state.points, state.radii)
    if abs(fresh - state.energy) > 1e-7 * max(1.0, abs(fresh)):
        raise EnergyCacheError(f"Sweep {sweep}: cached energy {state.energy!r} differs from {fresh!r}")
    state.energy = fresh


@dataclass(frozen=True)
class DensityEstimate:
    """Batch-means estimate of the point density."""

    rho: float
    se: float
    n_batches: int
    batch_size: int

    def __iter__(self) -> Iterator[float]:
        return iter((self.rho, self.se))


def batch_means(values: np.ndarray, target_batches: int = 20, min_batches: int = 10) -> Tuple[float, float, int, int]:
    """Mean and batch-means standard error of a correlated series.

    Raises:
        InsufficientSamplesError: If fewer than ``min_batches`` batches can be formed
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    batch_size = max(1, n // target_batches)
    n_batches = n // batch_size if n else 0
    if n_batches < min_batches:
        raise InsufficientSamplesError(f"Need at least {min_batches} batches, got {n_batches} from {n} records")
    batches = values[:n_batches * batch_size].reshape(n_batches, batch_size).mean(axis=1)
    return float(batches.mean()), float(batches.std(ddof=1) / math.sqrt(n_batches)), n_batches, batch_size


def estimate_density(trace: Trace, burn_in: int = 0) -> DensityEstimate:
    """Mean of N / |window| over recorded sweeps with a batch-means error bar.

    Args:
        trace: Recorded chain
        burn_in: Additional leading records to discard

    Raises:
        InsufficientSamplesError: If fewer than 10 batches remain
    """
    counts = trace.records["N"].to_numpy(dtype=float)[burn_in:]
    mean, se, n_batches, batch_size = batch_means(counts / trace.window_area)
    return DensityEstimate(mean, se, n_batches, batch_size)
