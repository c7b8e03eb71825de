"""Exact Minkowski functionals of finite unions of closed disks.

The boundary of a union of disks is a finite set of circular arcs.  Area is
the Green line integral over those arcs, perimeter is their total length and
the Euler characteristic is 2 * components - boundary cycles.  Restrictions to
lattice tiles clip the same arcs to a closed square; the Euler characteristic
of a clipped piece comes from Gauss-Bonnet on its boundary.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateArrangementError, ParameterDomainError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_EPS = 1e-12
CONFIG_DUMP_HEADER = "# quermass-config d=2"
SURFACE_CONVENTIONS = ("boundary", "minkowski")

Tile = Tuple[int, int]


@dataclass(frozen=True)
class Disk:
    """Closed disk B(center, r)."""

    x: float
    y: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ParameterDomainError(f"Disk radius must be positive, got {self.r}")


@dataclass(frozen=True, eq=False)
class DiskUnion:
    """Finite union of closed disks; duplicates are allowed."""

    centers: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        radii = np.asarray(self.radii, dtype=float).reshape(-1)
        if len(centers) != len(radii):
            raise ValueError(f"Got {len(centers)} centers but {len(radii)} radii")
        if np.any(~(radii > 0)):
            raise ParameterDomainError("All disk radii must be positive")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def empty(cls) -> "DiskUnion":
        return cls(np.zeros((0, 2)), np.zeros(0))

    @classmethod
    def from_disks(cls, disks: Sequence[Disk]) -> "DiskUnion":
        if not disks:
            return cls.empty()
        return cls(np.array([[d.x, d.y] for d in disks]), np.array([d.r for d in disks]))

    def __len__(self) -> int:
        return len(self.radii)

    def disks(self) -> List[Disk]:
        return [Disk(float(x), float(y), float(r)) for (x, y), r in zip(self.centers, self.radii)]

    def translated(self, dx: float, dy: float) -> "DiskUnion":
        return DiskUnion(self.centers + np.array([dx, dy]), self.radii.copy())

    def subset(self, index) -> "DiskUnion":
        return DiskUnion(self.centers[index], self.radii[index])

    def with_disk(self, x: float, y: float, r: float) -> "DiskUnion":
        return DiskUnion(np.vstack([self.centers, [[x, y]]]), np.append(self.radii, r))


@dataclass(frozen=True)
class MinkowskiValues:
    """Area, boundary length and Euler characteristic of a planar set."""

    volume: float = 0.0
    surface: float = 0.0
    euler: int = 0

    def __add__(self, other: "MinkowskiValues") -> "MinkowskiValues":
        return MinkowskiValues(self.volume + other.volume, self.surface + other.surface,
                               self.euler + other.euler)

    def __sub__(self, other: "MinkowskiValues") -> "MinkowskiValues":
        return MinkowskiValues(self.volume - other.volume, self.surface - other.surface,
                               self.euler - other.euler)

    def energy(self, theta1: float, theta2: float) -> float:
        """Quermass energy V + theta1 * S - theta2 * chi."""
        return self.volume + theta1 * self.surface - theta2 * self.euler

    def as_tuple(self) -> Tuple[float, float, int]:
        return (self.volume, self.surface, self.euler)


@dataclass(frozen=True)
class BoundaryArc:
    """Counter-clockwise arc of one disk boundary lying on the union boundary.

    Angles are in radians with ``start`` in [0, 2pi) and ``end > start``.
    ``start_neighbor`` / ``end_neighbor`` are the input indices of the disks
    whose circles cut this one at the arc endpoints (-1 for a full circle).
    """

    disk: int
    start: float
    end: float
    orientation: int
    cx: float
    cy: float
    radius: float
    start_neighbor: int = -1
    end_neighbor: int = -1

    @property
    def width(self) -> float:
        return self.end - self.start

    @property
    def length(self) -> float:
        return self.radius * (self.end - self.start)

    def point(self, angle: float) -> Tuple[float, float]:
        return (self.cx + self.radius * math.cos(angle), self.cy + self.radius * math.sin(angle))


@dataclass(frozen=True)
class BoundaryArcs:
    """All uncovered arcs of a union, with its component and cycle counts."""

    arcs: Tuple[BoundaryArc, ...]
    n_components: int
    n_cycles: int

    def __len__(self) -> int:
        return len(self.arcs)

    def __iter__(self) -> Iterator[BoundaryArc]:
        return iter(self.arcs)

    @property
    def length(self) -> float:
        return math.fsum(arc.length for arc in self.arcs)


def _uncovered_arcs(intervals: List[Tuple[float, float, int]]) -> List[Tuple[float, float, int, int]]:
    """Complement of a union of angular intervals on the circle.

    ``intervals`` holds (lo, hi, owner) with lo in [0, 2pi) and hi >= lo.
    Returns (start, end, start_owner, end_owner) with start in [0, 2pi).
    The intervals are unrolled twice so that wrapping coverage is seen
    before the gaps of the second copy are collected.
    """
    if not intervals:
        return [(0.0, TWO_PI, -1, -1)]
    unrolled = sorted(intervals + [(lo + TWO_PI, hi + TWO_PI, j) for lo, hi, j in intervals])
    first_lo, _, first_owner = unrolled[0]
    cur_end, cur_owner = unrolled[0][1], unrolled[0][2]
    gaps = []
    for lo, hi, j in unrolled[1:]:
        if lo > cur_end:
            gaps.append((cur_end, lo, cur_owner, j))
            cur_end, cur_owner = hi, j
        elif hi > cur_end:
            cur_end, cur_owner = hi, j
    closing = first_lo + 2.0 * TWO_PI
    if closing > cur_end:
        gaps.append((cur_end, closing, cur_owner, first_owner))
    return [(s - TWO_PI, e - TWO_PI, so, eo) for s, e, so, eo in gaps if TWO_PI <= s < 2.0 * TWO_PI]


class _Arrangement:
    """Canonical arrangement of the boundary circles of a disk union."""

    def __init__(self, union: DiskUnion, eps: float = DEFAULT_EPS):
        self.eps = eps
        self.tol = math.sqrt(eps)
        self._canonicalize(union)
        self.origin = np.array([math.fsum(self.centers[:, 0]) / max(len(self.radii), 1),
                                math.fsum(self.centers[:, 1]) / max(len(self.radii), 1)])
        self._build_arcs()
        self.n_components = self._count_components()
        self.n_cycles = self._count_cycles()

    def _canonicalize(self, union: DiskUnion):
        """Sort disks, then drop duplicates and disks contained in another."""
        n = len(union)
        if n == 0:
            self.centers = np.zeros((0, 2))
            self.radii = np.zeros(0)
            self.index = np.zeros(0, dtype=int)
            return
        order = np.lexsort((union.radii, union.centers[:, 1], union.centers[:, 0]))
        c = union.centers[order]
        r = union.radii[order]

        keep = np.ones(n, dtype=bool)
        for i in range(n):
            if not keep[i]:
                continue
            d2 = np.sum((c[i + 1:] - c[i]) ** 2, axis=1)
            dup = (d2 <= self.eps) & ((r[i + 1:] - r[i]) ** 2 <= self.eps)
            if dup.any():
                tail = keep[i + 1:]
                tail[dup] = False
        if not keep.all():
            logger.debug(f"Removed {int((~keep).sum())} coincident disks")
        c, r, order = c[keep], r[keep], order[keep]

        dist = np.sqrt(np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=2))
        slack = dist + r[None, :] - r[:, None]
        np.fill_diagonal(slack, np.inf)
        contained = np.any(slack <= self.tol, axis=0)

        self.centers = c[~contained]
        self.radii = r[~contained]
        self.index = order[~contained]

    def _build_arcs(self):
        m = len(self.radii)
        self.raw_arcs: List[Tuple[int, float, float, int, int]] = []
        self.pairs: List[Tuple[int, int]] = []
        if m == 0:
            return
        c = self.centers - self.origin
        r = self.radii
        dist = np.sqrt(np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=2))
        close = dist <= r[:, None] + r[None, :] + self.tol
        np.fill_diagonal(close, False)

        for i in range(m):
            intervals = []
            for j in np.nonzero(close[i])[0]:
                d = dist[i, j]
                if i < j:
                    self.pairs.append((i, int(j)))
                phi = math.atan2(c[j, 1] - c[i, 1], c[j, 0] - c[i, 0])
                if abs(d - (r[i] + r[j])) <= self.tol:
                    alpha = 0.0
                else:
                    cos_alpha = (d * d + r[i] * r[i] - r[j] * r[j]) / (2.0 * d * r[i])
                    alpha = math.acos(min(1.0, max(-1.0, cos_alpha)))
                lo = (phi - alpha) % TWO_PI
                intervals.append((lo, lo + 2.0 * alpha, int(j)))
            for start, end, s_owner, e_owner in _uncovered_arcs(intervals):
                self.raw_arcs.append((i, start, end, s_owner, e_owner))

    def _count_components(self) -> int:
        m = len(self.radii)
        if m == 0:
            return 0
        if not self.pairs:
            return m
        rows = [i for i, _ in self.pairs]
        cols = [j for _, j in self.pairs]
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
        n_components, _ = connected_components(graph, directed=False)
        return int(n_components)

    def _count_cycles(self) -> int:
        """Count closed boundary curves by following arc successors."""
        arcs = self.raw_arcs
        if not arcs:
            return 0
        start_of = {}
        for k, (i, _, _, s_owner, _) in enumerate(arcs):
            if s_owner >= 0:
                start_of[(i, s_owner)] = k
        successor = np.full(len(arcs), -1, dtype=int)
        for k, (i, _, end, _, e_owner) in enumerate(arcs):
            if e_owner < 0:
                successor[k] = k
            else:
                successor[k] = start_of.get((e_owner, i), -1)
        missing = np.nonzero(successor < 0)[0]
        if len(missing):
            self._match_by_position(successor, missing)
        if sorted(successor.tolist()) != list(range(len(arcs))):
            raise DegenerateArrangementError("Boundary arcs do not close into cycles")

        seen = np.zeros(len(arcs), dtype=bool)
        cycles = 0
        for k in range(len(arcs)):
            if seen[k]:
                continue
            cycles += 1
            while not seen[k]:
                seen[k] = True
                k = successor[k]
        return cycles

    def _match_by_position(self, successor: np.ndarray, missing: np.ndarray):
        """Fallback successor lookup by nearest arc start point."""
        c = self.centers - self.origin
        starts = np.array([[c[i, 0] + self.radii[i] * math.cos(s), c[i, 1] + self.radii[i] * math.sin(s)]
                           for i, s, _, _, _ in self.raw_arcs])
        for k in missing:
            i, _, end, _, _ = self.raw_arcs[k]
            p = np.array([c[i, 0] + self.radii[i] * math.cos(end), c[i, 1] + self.radii[i] * math.sin(end)])
            successor[k] = int(np.argmin(np.sum((starts - p) ** 2, axis=1)))
        logger.debug(f"Matched {len(missing)} arc successors by position")

    def values(self) -> MinkowskiValues:
        if len(self.radii) == 0:
            return MinkowskiValues()
        c = self.centers - self.origin
        area_terms = []
        length_terms = []
        for i, a, b, _, _ in self.raw_arcs:
            r = self.radii[i]
            area_terms.append(0.5 * (r * r * (b - a)
                                     + r * c[i, 0] * (math.sin(b) - math.sin(a))
                                     - r * c[i, 1] * (math.cos(b) - math.cos(a))))
            length_terms.append(r * (b - a))
        return MinkowskiValues(math.fsum(area_terms), math.fsum(length_terms),
                               2 * self.n_components - self.n_cycles)

    def boundary_arcs(self) -> BoundaryArcs:
        arcs = []
        for i, a, b, s_owner, e_owner in self.raw_arcs:
            arcs.append(BoundaryArc(
                disk=int(self.index[i]), start=a, end=b, orientation=1,
                cx=float(self.centers[i, 0]), cy=float(self.centers[i, 1]), radius=float(self.radii[i]),
                start_neighbor=int(self.index[s_owner]) if s_owner >= 0 else -1,
                end_neighbor=int(self.index[e_owner]) if e_owner >= 0 else -1,
            ))
        return BoundaryArcs(tuple(arcs), self.n_components, self.n_cycles)


def minkowski_functionals(u: DiskUnion, eps: float = DEFAULT_EPS) -> MinkowskiValues:
    """Area, perimeter and Euler characteristic of a disk union.

    Args:
        u: Disk union (any order, duplicates allowed)
        eps: Squared-distance tolerance for coincident disks and tangencies

    Returns:
        MinkowskiValues of the union

    Raises:
        DegenerateArrangementError: If boundary cycles cannot be closed
    """
    return _Arrangement(u, eps).values()


def boundary_arcs(u: DiskUnion, eps: float = DEFAULT_EPS) -> BoundaryArcs:
    """Uncovered circular arcs forming the boundary of the union."""
    return _Arrangement(u, eps).boundary_arcs()


def _merge_intervals(intervals: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    merged: List[List[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def _chord_intervals(line: float, along: np.ndarray, across: np.ndarray, radii: np.ndarray,
                     h: float) -> List[Tuple[float, float]]:
    """Covered sub-intervals of the segment {across = line, |along| <= h}."""
    gap = across - line
    hits = gap * gap <= radii * radii
    intervals = []
    for a, g, r in zip(along[hits], gap[hits], radii[hits]):
        half = math.sqrt(max(r * r - g * g, 0.0))
        lo, hi = max(a - half, -h), min(a + half, h)
        if lo <= hi:
            intervals.append((lo, hi))
    return _merge_intervals(intervals)


def _clip_arc(cx: float, cy: float, r: float, start: float, end: float, h: float) -> List[Tuple[float, float]]:
    """Sub-arcs of a circle arc lying in the closed square [-h, h]^2."""
    cuts = []
    for line in (-h, h):
        u = (line - cx) / r
        if -1.0 <= u <= 1.0:
            t = math.acos(u)
            cuts.extend((t, -t))
        v = (line - cy) / r
        if -1.0 <= v <= 1.0:
            t = math.asin(v)
            cuts.extend((t, math.pi - t))
    angles = [start, end]
    for t in cuts:
        t += math.ceil((start - t) / TWO_PI) * TWO_PI
        while t < end:
            if t > start:
                angles.append(t)
            t += TWO_PI
    angles.sort()
    slack = h * 1e-12
    pieces = []
    for t0, t1 in zip(angles[:-1], angles[1:]):
        if t1 <= t0:
            continue
        mid = 0.5 * (t0 + t1)
        x, y = cx + r * math.cos(mid), cy + r * math.sin(mid)
        if abs(x) <= h + slack and abs(y) <= h + slack:
            pieces.append((t0, t1))
    return pieces


class TileDecomposition:
    """Per-tile functionals of one disk union on the lattice of delta-tiles.

    Tile (a, b) is the half-open square [a*delta - delta/2, a*delta + delta/2)
    x [b*delta - delta/2, b*delta + delta/2).  Each tile owns its interior,
    its left and bottom open edges and its bottom-left corner, so the tile
    values telescope to the global functionals.
    """

    def __init__(self, union: DiskUnion, delta: float, convention: str = "boundary",
                 eps: float = DEFAULT_EPS):
        if not delta > 0:
            raise ParameterDomainError(f"Tile side must be positive, got {delta}")
        if convention not in SURFACE_CONVENTIONS:
            raise ValueError(f"Unknown surface convention '{convention}', expected one of {SURFACE_CONVENTIONS}")
        self.union = union
        self.delta = float(delta)
        self.convention = convention
        self._arr = _Arrangement(union, eps)

        self._arcs_by_disk: Dict[int, List[Tuple[float, float]]] = defaultdict(list)
        for i, a, b, _, _ in self._arr.raw_arcs:
            self._arcs_by_disk[i].append((a, b))

        self._candidates: Dict[Tile, List[int]] = defaultdict(list)
        for i, ((x, y), r) in enumerate(zip(self._arr.centers, self._arr.radii)):
            a_lo, a_hi = self.tile_index(x - r), self.tile_index(x + r)
            b_lo, b_hi = self.tile_index(y - r), self.tile_index(y + r)
            for a in range(a_lo, a_hi + 1):
                for b in range(b_lo, b_hi + 1):
                    self._candidates[(a, b)].append(i)

    def tile_index(self, coordinate: float) -> int:
        return int(math.floor(coordinate / self.delta + 0.5))

    def tiles(self) -> List[Tile]:
        """Tiles whose closed square may meet the union, sorted."""
        return sorted(self._candidates)

    def all(self) -> Dict[Tile, MinkowskiValues]:
        return {tile: self.functionals(tile) for tile in self.tiles()}

    def functionals(self, tile: Tile) -> MinkowskiValues:
        """Tile-restricted (volume, surface, euler) of the union."""
        idx = self._candidates.get(tuple(tile))
        if not idx:
            return MinkowskiValues()
        h = 0.5 * self.delta
        shift = np.array([tile[0] * self.delta, tile[1] * self.delta])
        centers = self._arr.centers[idx] - shift
        radii = self._arr.radii[idx]

        gap = np.maximum(np.abs(centers) - h, 0.0)
        meets = np.sum(gap * gap, axis=1) <= radii * radii
        if not meets.any():
            return MinkowskiValues()
        far = np.abs(centers) + h
        if np.any(np.sum(far * far, axis=1) <= radii * radii):
            return MinkowskiValues(self.delta * self.delta, 0.0, 0)

        idx = [i for i, keep in zip(idx, meets) if keep]
        centers, radii = centers[meets], radii[meets]
        arc_pieces = []
        for i, (cx, cy), r in zip(idx, centers, radii):
            for a, b in self._arcs_by_disk.get(i, ()):
                for t0, t1 in _clip_arc(cx, cy, r, a, b, h):
                    arc_pieces.append((cx, cy, r, t0, t1))

        xs, ys = centers[:, 0], centers[:, 1]
        bottom = _chord_intervals(-h, xs, ys, radii, h)
        top = _chord_intervals(h, xs, ys, radii, h)
        left = _chord_intervals(-h, ys, xs, radii, h)
        right = _chord_intervals(h, ys, xs, radii, h)
        segments = ([((u0, -h), (u1, -h)) for u0, u1 in bottom]
                    + [((h, v0), (h, v1)) for v0, v1 in right]
                    + [((u1, h), (u0, h)) for u0, u1 in top]
                    + [((-h, v1), (-h, v0)) for v0, v1 in left])
        segments = [seg for seg in segments if math.dist(seg[0], seg[1]) > 1e-14 * self.delta]

        area_terms = []
        for cx, cy, r, t0, t1 in arc_pieces:
            area_terms.append(0.5 * (r * r * (t1 - t0) + r * cx * (math.sin(t1) - math.sin(t0))
                                     - r * cy * (math.cos(t1) - math.cos(t0))))
        for (x0, y0), (x1, y1) in segments:
            area_terms.append(0.5 * (x0 * y1 - y0 * x1))
        area = math.fsum(area_terms)

        chi_closed = self._gauss_bonnet(arc_pieces, segments, tile)
        corner = np.any((xs + h) ** 2 + (ys + h) ** 2 <= radii * radii)
        euler = chi_closed - len(left) - len(bottom) + int(corner)

        arc_length = math.fsum(r * (t1 - t0) for _, _, r, t0, t1 in arc_pieces)
        if self.convention == "boundary":
            surface = arc_length
        else:
            edge_length = [hi - lo for lo, hi in bottom + top + left + right]
            owned = [hi - lo for lo, hi in left + bottom]
            surface = arc_length + math.fsum(edge_length) - 2.0 * math.fsum(owned)
        return MinkowskiValues(area, surface, int(euler))

    def _gauss_bonnet(self, arc_pieces, segments, tile: Tile) -> int:
        """Euler characteristic of the union clipped to the closed tile."""
        if not arc_pieces and not segments:
            return 0
        starts, ends, t_in, t_out = [], [], [], []
        total_curvature = 0.0
        for cx, cy, r, t0, t1 in arc_pieces:
            starts.append((cx + r * math.cos(t0), cy + r * math.sin(t0)))
            ends.append((cx + r * math.cos(t1), cy + r * math.sin(t1)))
            t_out.append((-math.sin(t0), math.cos(t0)))
            t_in.append((-math.sin(t1), math.cos(t1)))
            total_curvature += t1 - t0
        for p, q in segments:
            length = math.dist(p, q)
            direction = ((q[0] - p[0]) / length, (q[1] - p[1]) / length)
            starts.append(p)
            ends.append(q)
            t_out.append(direction)
            t_in.append(direction)

        starts_arr = np.asarray(starts)
        matched = set()
        for k, end in enumerate(ends):
            d2 = np.sum((starts_arr - np.asarray(end)) ** 2, axis=1)
            j = int(np.argmin(d2))
            matched.add(j)
            a, b = t_in[k], t_out[j]
            total_curvature += math.atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])
        if len(matched) != len(ends):
            logger.warning(f"Tile {tile}: boundary pieces do not form closed loops")

        turns = total_curvature / TWO_PI
        chi = int(round(turns))
        if abs(turns - chi) > 1e-6:
            logger.warning(f"Tile {tile}: Gauss-Bonnet total {turns:.9f} is not an integer")
        return chi


def tile_functionals(u: DiskUnion, tile: Tile, delta: float,
                     convention: str = "boundary") -> MinkowskiValues:
    """Functionals of the union restricted to one half-open tile.

    Args:
        u: Disk union
        tile: Lattice index (a, b) of the tile
        delta: Tile side length
        convention: "boundary" (H^1 of the union boundary inside the tile) or
            "minkowski" (edge segments count twice their length)

    Returns:
        MinkowskiValues whose sum over all tiles equals the global values
    """
    return TileDecomposition(u, delta, convention).functionals(tile)


def _marching_squares_length(field: np.ndarray) -> float:
    """Length (in pixel units) of the zero level set of a sampled field.

    Only cells whose corners disagree in sign are visited.
    """
    inside = field >= 0
    corner = inside[:-1, :-1]
    mixed = (corner != inside[1:, :-1]) | (corner != inside[:-1, 1:]) | (corner != inside[1:, 1:])
    ii, jj = np.nonzero(mixed)
    if len(ii) == 0:
        return 0.0
    f00, f10 = field[ii, jj].astype(float), field[ii + 1, jj].astype(float)
    f01, f11 = field[ii, jj + 1].astype(float), field[ii + 1, jj + 1].astype(float)

    def crossing(fa, fb):
        cut = (fa >= 0) != (fb >= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(cut, fa / (fa - fb), 0.0)
        return cut, t

    c0, t0 = crossing(f00, f10)
    c1, t1 = crossing(f10, f11)
    c2, t2 = crossing(f01, f11)
    c3, t3 = crossing(f00, f01)
    px = np.stack([t0, np.ones_like(t1), t2, np.zeros_like(t3)])
    py = np.stack([np.zeros_like(t0), t1, np.ones_like(t2), t3])
    cuts = np.stack([c0, c1, c2, c3])
    n_cuts = cuts.sum(axis=0)

    def pair_length(e_a, e_b, mask):
        return np.hypot(px[e_a][mask] - px[e_b][mask], py[e_a][mask] - py[e_b][mask]).sum()

    total = 0.0
    two = np.nonzero(n_cuts == 2)[0]
    if len(two):
        first = np.argmax(cuts[:, two], axis=0)
        last = 3 - np.argmax(cuts[::-1, two], axis=0)
        total += np.hypot(px[first, two] - px[last, two], py[first, two] - py[last, two]).sum()
    four = n_cuts == 4
    if four.any():
        center = 0.25 * (f00 + f10 + f01 + f11)
        joined = four & ((center >= 0) == (f00 >= 0))
        split = four & ~joined
        total += pair_length(0, 1, joined) + pair_length(2, 3, joined)
        total += pair_length(0, 3, split) + pair_length(1, 2, split)
    return float(total)


def _overlap_labels(centers: np.ndarray, radii: np.ndarray) -> Tuple[int, np.ndarray]:
    """Connected components of the graph joining disks that overlap."""
    dist = np.sqrt(np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=2))
    adjacency = dist < radii[:, None] + radii[None, :]
    n_components, labels = connected_components(coo_matrix(adjacency), directed=False)
    return int(n_components), labels


def _raster_component(centers: np.ndarray, radii: np.ndarray, pixel: float) -> Tuple[float, float, int]:
    """Area, perimeter and hole count of one connected union on a pixel grid."""
    lo = (centers - radii[:, None]).min(axis=0) - 4 * pixel
    hi = (centers + radii[:, None]).max(axis=0) + 4 * pixel
    xs = np.arange(lo[0], hi[0] + pixel, pixel)
    ys = np.arange(lo[1], hi[1] + pixel, pixel)
    field = np.full((len(xs), len(ys)), -np.inf, dtype=np.float32)
    for (cx, cy), r in zip(centers, radii):
        i0 = max(int((cx - r - lo[0]) / pixel) - 3, 0)
        i1 = min(int((cx + r - lo[0]) / pixel) + 4, len(xs))
        j0 = max(int((cy - r - lo[1]) / pixel) - 3, 0)
        j1 = min(int((cy + r - lo[1]) / pixel) + 4, len(ys))
        dx = xs[i0:i1] - cx
        dy = ys[j0:j1] - cy
        local = r - np.sqrt(dx[:, None] ** 2 + dy[None, :] ** 2)
        window = field[i0:i1, j0:j1]
        np.maximum(window, local, out=window)

    area = float(np.count_nonzero(field >= 0)) * pixel * pixel
    perimeter = _marching_squares_length(field) * pixel
    # half a pixel diagonal seals overlaps thinner than the grid
    sealed = field >= -pixel / math.sqrt(2.0)
    _, n_background = ndimage.label(~sealed, structure=ndimage.generate_binary_structure(2, 1))
    return area, perimeter, int(n_background) - 1


def raster_oracle(u: DiskUnion, pixel: float) -> MinkowskiValues:
    """Approximate functionals from a rasterised union.

    Components come from the disk overlap graph; each one is rasterised on
    its own grid.  Area counts pixels, perimeter traces the zero level of the
    field r - |x - c| with marching squares, and holes are the bounded
    4-connected background regions of the grid dilated by half a pixel
    diagonal.  Exact for unions whose gaps, overlaps and holes are a few
    pixels wide.
    """
    if not pixel > 0:
        raise ParameterDomainError(f"Pixel size must be positive, got {pixel}")
    if len(u) == 0:
        return MinkowskiValues()
    n_components, labels = _overlap_labels(u.centers, u.radii)
    area, perimeter, holes = 0.0, 0.0, 0
    for k in range(n_components):
        member = labels == k
        a, p, h = _raster_component(u.centers[member], u.radii[member], pixel)
        area += a
        perimeter += p
        holes += h
    return MinkowskiValues(area, perimeter, n_components - holes)


def format_config_dump(u: DiskUnion) -> str:
    """Serialise a union as the line-oriented "x y r" text format."""
    lines = [CONFIG_DUMP_HEADER]
    for (x, y), r in zip(u.centers, u.radii):
        lines.append(f"{float(x)!r} {float(y)!r} {float(r)!r}")
    return "\n".join(lines) + "\n"


def parse_config_dump(text: str) -> DiskUnion:
    """Parse the "x y r" text format written by format_config_dump."""
    rows = []
    header_seen = False
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line == CONFIG_DUMP_HEADER:
                header_seen = True
            continue
        if not header_seen:
            raise ValueError(f"line {number}: missing '{CONFIG_DUMP_HEADER}' header")
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"line {number}: expected 'x y r', got {line!r}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise ValueError(f"line {number}: non-numeric value in {line!r}")
    if not header_seen:
        raise ValueError(f"missing '{CONFIG_DUMP_HEADER}' header")
    if not rows:
        return DiskUnion.empty()
    data = np.array(rows)
    return DiskUnion(data[:, :2], data[:, 2])
