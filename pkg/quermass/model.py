"""Quermass Hamiltonian, marked configurations and model parameters."""
import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import integrate

from .errors import ParameterDomainError
from .geometry import DiskUnion, TileDecomposition, minkowski_functionals

logger = logging.getLogger(__name__)

RADIUS_LAWS = ("point", "uniform")

Tile = Tuple[int, int]


@dataclass(frozen=True)
class QuermassParams:
    """Parameters of the Quermass interaction.

    Attributes:
        theta1: Weight of the boundary length
        theta2: Weight of the Euler characteristic (>= 0)
        beta: Inverse temperature (>= 0)
        z: Activity (> 0)
        R0: Smallest radius
        R1: Largest radius
        radius_law: "point" (all radii R0) or "uniform" on [R0, R1]
    """

    theta1: float = 0.0
    theta2: float = 0.0
    beta: float = 1.0
    z: float = 1.0
    R0: float = 1.0
    R1: float = 1.0
    radius_law: str = "point"

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Check the parameter invariants.

        Raises:
            ParameterDomainError: If any invariant fails
        """
        if not self.theta2 >= 0:
            raise ParameterDomainError(f"theta2 must be >= 0, got {self.theta2}")
        if not self.beta >= 0:
            raise ParameterDomainError(f"beta must be >= 0, got {self.beta}")
        if not self.z > 0:
            raise ParameterDomainError(f"z must be > 0, got {self.z}")
        if not 0 < self.R0 <= self.R1:
            raise ParameterDomainError(f"Need 0 < R0 <= R1, got R0={self.R0}, R1={self.R1}")
        if self.radius_law not in RADIUS_LAWS:
            raise ParameterDomainError(f"Unknown radius law '{self.radius_law}', expected one of {RADIUS_LAWS}")
        if not math.isfinite(self.theta1):
            raise ParameterDomainError(f"theta1 must be finite, got {self.theta1}")

    @property
    def s(self) -> float:
        """Reduced activity z / beta."""
        if self.beta <= 0:
            raise ParameterDomainError("s = z / beta is undefined at beta = 0")
        return self.z / self.beta

    def with_z(self, z: float) -> "QuermassParams":
        return replace(self, z=float(z))

    def with_s(self, s: float) -> "QuermassParams":
        if self.beta <= 0:
            raise ParameterDomainError("Cannot set s = z / beta at beta = 0")
        return replace(self, z=float(s) * self.beta)

    def with_beta(self, beta: float) -> "QuermassParams":
        return replace(self, beta=float(beta))

    def sample_radii(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.radius_law == "point":
            return np.full(n, self.R0)
        return rng.uniform(self.R0, self.R1, size=n)

    def single_disk_energy(self, r: float) -> float:
        return math.pi * r * r + self.theta1 * 2.0 * math.pi * r - self.theta2

    def single_disk_boltzmann_mean(self) -> float:
        """E_Q[exp(-beta H(one disk))] over the radius law."""
        if self.radius_law == "point" or self.R0 == self.R1:
            return math.exp(-self.beta * self.single_disk_energy(self.R0))
        value, _ = integrate.quad(lambda r: math.exp(-self.beta * self.single_disk_energy(r)), self.R0, self.R1)
        return value / (self.R1 - self.R0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MarkedPoint:
    """Germ position with its radius mark."""

    x: float
    y: float
    radius: float


@dataclass(frozen=True)
class TileBox:
    """Rectangular set of lattice sites [i0, i0+nx) x [j0, j0+ny)."""

    i0: int
    j0: int
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ParameterDomainError(f"Tile box must hold at least one tile, got {self.nx}x{self.ny}")

    @classmethod
    def centered(cls, nx: int, ny: Optional[int] = None) -> "TileBox":
        ny = nx if ny is None else ny
        return cls(-(nx // 2), -(ny // 2), nx, ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def mask(self) -> np.ndarray:
        return np.ones((self.nx, self.ny), dtype=bool)

    def sites(self) -> np.ndarray:
        a, b = np.meshgrid(np.arange(self.i0, self.i0 + self.nx), np.arange(self.j0, self.j0 + self.ny),
                           indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])

    def contains(self, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites).reshape(-1, 2)
        return ((sites[:, 0] >= self.i0) & (sites[:, 0] < self.i0 + self.nx)
                & (sites[:, 1] >= self.j0) & (sites[:, 1] < self.j0 + self.ny))

    def local(self, sites: np.ndarray) -> np.ndarray:
        """Array indices of sites inside this box."""
        return np.asarray(sites).reshape(-1, 2) - np.array([self.i0, self.j0])


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle [x0, x1) x [y0, y1), optionally a tile union."""

    x0: float
    y0: float
    x1: float
    y1: float
    tile_box: Optional[TileBox] = None
    delta: Optional[float] = None

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ParameterDomainError(f"Window must have positive area, got [{self.x0}, {self.x1}) x [{self.y0}, {self.y1})")

    @classmethod
    def from_tile_box(cls, box: TileBox, delta: float) -> "Window":
        """The window Λ̂ covered by the tiles of a box."""
        return cls((box.i0 - 0.5) * delta, (box.j0 - 0.5) * delta,
                   (box.i0 + box.nx - 0.5) * delta, (box.j0 + box.ny - 0.5) * delta,
                   tile_box=box, delta=float(delta))

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return ((points[:, 0] >= self.x0) & (points[:, 0] < self.x1)
                & (points[:, 1] >= self.y0) & (points[:, 1] < self.y1))

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point to the closed rectangle."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        dx = np.maximum(np.maximum(self.x0 - points[:, 0], points[:, 0] - self.x1), 0.0)
        dy = np.maximum(np.maximum(self.y0 - points[:, 1], points[:, 1] - self.y1), 0.0)
        return np.hypot(dx, dy)

    def sample_uniform(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return np.column_stack([rng.uniform(self.x0, self.x1, size=n), rng.uniform(self.y0, self.y1, size=n)])


@dataclass(eq=False)
class Configuration:
    """Finite set of marked points stored as parallel arrays."""

    points: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)
        if len(self.points) != len(self.radii):
            raise ValueError(f"Got {len(self.points)} points but {len(self.radii)} radii")

    @classmethod
    def empty(cls) -> "Configuration":
        return cls(np.zeros((0, 2)), np.zeros(0))

    @classmethod
    def from_marked_points(cls, marked: Iterable[MarkedPoint]) -> "Configuration":
        marked = list(marked)
        if not marked:
            return cls.empty()
        return cls(np.array([[m.x, m.y] for m in marked]), np.array([m.radius for m in marked]))

    def __len__(self) -> int:
        return len(self.radii)

    def marked_points(self) -> List[MarkedPoint]:
        return [MarkedPoint(float(x), float(y), float(r)) for (x, y), r in zip(self.points, self.radii)]

    def halo(self) -> DiskUnion:
        """The union of disks L(omega)."""
        return DiskUnion(self.points, self.radii)

    def select(self, mask) -> "Configuration":
        return Configuration(self.points[mask], self.radii[mask])

    def restrict(self, window: Window) -> "Configuration":
        """Points whose germ lies in the window."""
        return self.select(window.contains(self.points))

    def exclude(self, window: Window) -> "Configuration":
        """Points whose germ lies outside the window."""
        return self.select(~window.contains(self.points))

    def near(self, window: Window, reach: float) -> "Configuration":
        """Points within ``reach`` of the window (closed)."""
        return self.select(window.distance(self.points) <= reach)

    def union(self, other: "Configuration") -> "Configuration":
        return Configuration(np.vstack([self.points, other.points]), np.concatenate([self.radii, other.radii]))

    def with_point(self, x: float, y: float, r: float) -> "Configuration":
        return Configuration(np.vstack([self.points, [[x, y]]]), np.append(self.radii, r))

    def without(self, index: int) -> "Configuration":
        keep = np.ones(len(self), dtype=bool)
        keep[index] = False
        return self.select(keep)

    def copy(self) -> "Configuration":
        return Configuration(self.points.copy(), self.radii.copy())


def hamiltonian(cfg: Configuration, p: QuermassParams) -> float:
    """H = V + theta1 S - theta2 chi of the halo of ``cfg``."""
    if len(cfg) == 0:
        return 0.0
    return minkowski_functionals(cfg.halo()).energy(p.theta1, p.theta2)


def local_energy(cfg: Configuration, window: Window, p: QuermassParams) -> float:
    """Local energy H(omega) - H(omega outside the window).

    Only points within 2 * R1 of the window are used; farther disks cannot
    meet any disk centred in the window.
    """
    clipped = cfg.near(window, 2.0 * p.R1)
    inside = window.contains(clipped.points)
    if not inside.any():
        return 0.0
    return hamiltonian(clipped, p) - hamiltonian(clipped.select(~inside), p)


def tile_energies(cfg: Configuration, tiles: Optional[Iterable[Tile]], delta: float, p: QuermassParams,
                  convention: str = "boundary") -> Dict[Tile, float]:
    """Energy H_i of each requested tile.

    Args:
        cfg: Configuration
        tiles: Tile indices, or None for every tile meeting the halo
        delta: Tile side
        p: Model parameters
        convention: Surface convention passed to the tile decomposition

    Returns:
        Dictionary mapping tile -> H_i
    """
    decomposition = TileDecomposition(cfg.halo(), delta, convention)
    if tiles is None:
        tiles = decomposition.tiles()
    return {tuple(int(v) for v in t): decomposition.functionals(tuple(t)).energy(p.theta1, p.theta2)
            for t in tiles}


def energy_of_tiles(cfg: Configuration, tiles: Iterable[Tile], delta: float, p: QuermassParams,
                    convention: str = "boundary") -> float:
    """Restricted energy sum over a set of tiles (H_Lambda, H_gamma)."""
    if len(cfg) == 0:
        return 0.0
    decomposition = TileDecomposition(cfg.halo(), delta, convention)
    wanted = {tuple(int(v) for v in t) for t in tiles}
    touched = wanted.intersection(decomposition.tiles())
    return math.fsum(decomposition.functionals(t).energy(p.theta1, p.theta2) for t in sorted(touched))


def neighbours_of_disk(points: np.ndarray, radii: np.ndarray, x: float, y: float, r: float) -> np.ndarray:
    """Mask of disks meeting the closed disk B((x, y), r)."""
    if len(radii) == 0:
        return np.zeros(0, dtype=bool)
    d = np.hypot(points[:, 0] - x, points[:, 1] - y)
    return d <= radii + r + 1e-9


def insertion_energy(cfg: Configuration, x: float, y: float, r: float, p: QuermassParams) -> float:
    """H(cfg + disk) - H(cfg), using only the disks that meet the new one."""
    near = neighbours_of_disk(cfg.points, cfg.radii, x, y, r)
    local = cfg.select(near)
    return hamiltonian(local.with_point(x, y, r), p) - hamiltonian(local, p)
