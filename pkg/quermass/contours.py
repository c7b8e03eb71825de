"""Lattice coarse-graining: spins, correctness, contours and dominoes.

Sites of Z^2 index the tiles T_i.  A site is #-correct when every site of its
L-ball carries spin #; the maximal d_inf-connected components of the
non-correct sites are the contour supports.
"""
import json
import logging
import math
from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import (DegenerateContourError, LabelInconsistencyError, PaddingError,
                     ParameterDomainError)
from .model import Configuration, QuermassParams, TileBox, Window

logger = logging.getLogger(__name__)

NORMS = ("euclidean", "sup")
CORRECT_0 = 0
CORRECT_1 = 1
NON_CORRECT = -1

Site = Tuple[int, int]

KING = np.ones((3, 3), dtype=int)


@lru_cache(maxsize=64)
def _ball_offsets(radius: int, norm: str) -> np.ndarray:
    r = int(radius)
    a, b = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    a, b = a.ravel(), b.ravel()
    if norm == "euclidean":
        dist2 = a * a + b * b
        keep = dist2 <= r * r
    else:
        dist2 = np.maximum(np.abs(a), np.abs(b))
        keep = dist2 <= r
    order = np.lexsort((b[keep], a[keep], dist2[keep]))
    offsets = np.column_stack([a[keep], b[keep]])[order]
    offsets.setflags(write=False)
    return offsets


@dataclass(frozen=True)
class Tiling:
    """Tile side delta, correctness radius L and the correctness-ball norm."""

    delta: float
    L: int
    norm: str = "euclidean"

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterDomainError(f"Tile side must be positive, got {self.delta}")
        if int(self.L) != self.L or self.L < 1:
            raise ParameterDomainError(f"Correctness radius L must be a positive integer, got {self.L}")
        if self.norm not in NORMS:
            raise ParameterDomainError(f"Unknown norm '{self.norm}', expected one of {NORMS}")

    @staticmethod
    def max_delta(p: QuermassParams) -> float:
        return p.R0 / (2.0 * math.sqrt(2.0))

    @staticmethod
    def min_L(p: QuermassParams, delta: float) -> int:
        return int(math.ceil(2.0 * p.R1 / delta - 1e-9))

    @classmethod
    def for_params(cls, p: QuermassParams, delta: Optional[float] = None, L: Optional[int] = None,
                   norm: str = "euclidean") -> "Tiling":
        """Tiling satisfying the standing assumptions for ``p``.

        Raises:
            ParameterDomainError: If L is below ceil(2 R1 / delta)
        """
        delta = cls.max_delta(p) if delta is None else float(delta)
        L_min = cls.min_L(p, delta)
        L = L_min if L is None else int(L)
        if L < L_min:
            raise ParameterDomainError(f"L = {L} is below ceil(2 R1 / delta) = {L_min}")
        if delta > cls.max_delta(p) * (1 + 1e-12):
            logger.warning(f"delta = {delta:.6g} exceeds R0/(2 sqrt 2); occupied tiles are no longer saturated")
        return cls(delta, L, norm)

    def tile_of(self, points: np.ndarray) -> np.ndarray:
        """Index of the half-open tile containing each point."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.floor(points / self.delta + 0.5).astype(int)

    def window(self, box: TileBox) -> Window:
        return Window.from_tile_box(box, self.delta)

    def ball_offsets(self, radius: int) -> np.ndarray:
        """Lattice offsets within ``radius`` sorted by distance, then lexicographically."""
        return _ball_offsets(int(radius), self.norm)

    def footprint(self, radius: int) -> np.ndarray:
        r = int(radius)
        fp = np.zeros((2 * r + 1, 2 * r + 1), dtype=bool)
        off = self.ball_offsets(r)
        fp[off[:, 0] + r, off[:, 1] + r] = True
        return fp

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        diff = np.abs(np.asarray(a) - np.asarray(b))
        if self.norm == "euclidean":
            return np.hypot(diff[..., 0], diff[..., 1])
        return np.max(diff, axis=-1)


@dataclass(eq=False)
class SpinField:
    """Spins on the rectangle of sites starting at ``origin``."""

    origin: Tuple[int, int]
    spins: np.ndarray
    exterior: int = 0

    def __post_init__(self):
        self.origin = (int(self.origin[0]), int(self.origin[1]))
        self.spins = np.asarray(self.spins, dtype=np.int8)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.spins.shape

    @property
    def box(self) -> TileBox:
        return TileBox(self.origin[0], self.origin[1], self.shape[0], self.shape[1])

    def spin(self, site) -> int:
        a, b = int(site[0]) - self.origin[0], int(site[1]) - self.origin[1]
        if 0 <= a < self.shape[0] and 0 <= b < self.shape[1]:
            return int(self.spins[a, b])
        return self.exterior

    def spins_at(self, sites: np.ndarray) -> np.ndarray:
        local = np.asarray(sites).reshape(-1, 2) - np.array(self.origin)
        inside = ((local[:, 0] >= 0) & (local[:, 0] < self.shape[0])
                  & (local[:, 1] >= 0) & (local[:, 1] < self.shape[1]))
        out = np.full(len(local), self.exterior, dtype=np.int8)
        out[inside] = self.spins[local[inside, 0], local[inside, 1]]
        return out

    def region(self, i0: int, j0: int, nx: int, ny: int, fill: Optional[int] = None) -> np.ndarray:
        """Spins on [i0, i0+nx) x [j0, j0+ny), ``fill`` (default exterior) outside the domain."""
        fill = self.exterior if fill is None else fill
        out = np.full((nx, ny), fill, dtype=np.int8)
        a0, b0 = max(i0, self.origin[0]), max(j0, self.origin[1])
        a1 = min(i0 + nx, self.origin[0] + self.shape[0])
        b1 = min(j0 + ny, self.origin[1] + self.shape[1])
        if a0 < a1 and b0 < b1:
            out[a0 - i0:a1 - i0, b0 - j0:b1 - j0] = self.spins[a0 - self.origin[0]:a1 - self.origin[0],
                                                               b0 - self.origin[1]:b1 - self.origin[1]]
        return out

    def padded(self, pad: int, value: Optional[int] = None) -> "SpinField":
        value = self.exterior if value is None else value
        spins = np.pad(self.spins, pad, mode="constant", constant_values=value)
        return SpinField((self.origin[0] - pad, self.origin[1] - pad), spins, exterior=value)

    def sites_with(self, value: int) -> np.ndarray:
        return np.argwhere(self.spins == value) + np.array(self.origin)


def spin_field(cfg: Configuration, tiling: Tiling, box: TileBox, exterior: int = 0) -> SpinField:
    """Spin 1 on every tile of the box holding at least one germ."""
    spins = np.zeros((box.nx, box.ny), dtype=np.int8)
    if len(cfg):
        tiles = tiling.tile_of(cfg.points)
        inside = box.contains(tiles)
        local = box.local(tiles[inside])
        spins[local[:, 0], local[:, 1]] = 1
    return SpinField((box.i0, box.j0), spins, exterior=exterior)


@dataclass(eq=False)
class CorrectnessMap:
    """Correctness labels (0, 1 or NON_CORRECT) on a rectangle of sites."""

    origin: Tuple[int, int]
    labels: np.ndarray

    def label(self, site) -> int:
        a, b = int(site[0]) - self.origin[0], int(site[1]) - self.origin[1]
        if not (0 <= a < self.labels.shape[0] and 0 <= b < self.labels.shape[1]):
            raise PaddingError(f"Site {tuple(site)} lies outside the classified region")
        return int(self.labels[a, b])

    def non_correct_sites(self) -> np.ndarray:
        return np.argwhere(self.labels == NON_CORRECT) + np.array(self.origin)

    def as_dict(self) -> Dict[Site, int]:
        return {(int(a) + self.origin[0], int(b) + self.origin[1]): int(v)
                for (a, b), v in np.ndenumerate(self.labels)}


def classify_correctness(field: SpinField, tiling: Tiling,
                         sites: Optional[Sequence[Site]] = None) -> CorrectnessMap:
    """Classify every site whose L-ball lies inside the field domain.

    Args:
        field: Spin field (padded by the caller as needed)
        tiling: Tiling giving L and the ball norm
        sites: Optional sites that must be classifiable

    Returns:
        CorrectnessMap over the classifiable sub-rectangle

    Raises:
        PaddingError: If no site, or one of ``sites``, has its ball inside the domain
    """
    L = tiling.L
    nx, ny = field.shape
    if nx <= 2 * L or ny <= 2 * L:
        raise PaddingError(f"Field of shape {field.shape} is too small for L = {L}")
    fp = tiling.footprint(L)
    low = ndimage.minimum_filter(field.spins, footprint=fp, mode="nearest")[L:nx - L, L:ny - L]
    high = ndimage.maximum_filter(field.spins, footprint=fp, mode="nearest")[L:nx - L, L:ny - L]
    labels = np.full(low.shape, NON_CORRECT, dtype=np.int8)
    labels[high == 0] = CORRECT_0
    labels[low == 1] = CORRECT_1
    cmap = CorrectnessMap((field.origin[0] + L, field.origin[1] + L), labels)
    if sites is not None:
        for site in sites:
            cmap.label(site)
    return cmap


@dataclass(eq=False)
class Contour:
    """Support, spins, type and interiors of one contour."""

    support: np.ndarray
    spins: np.ndarray
    contour_type: int
    interior0: np.ndarray = dataclass_field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    interior1: np.ndarray = dataclass_field(default_factory=lambda: np.zeros((0, 2), dtype=int))

    def __post_init__(self):
        support = np.asarray(self.support, dtype=int).reshape(-1, 2)
        spins = np.asarray(self.spins, dtype=np.int8).reshape(-1)
        order = np.lexsort((support[:, 1], support[:, 0]))
        self.support = support[order]
        self.spins = spins[order]
        self.interior0 = _sorted_sites(self.interior0)
        self.interior1 = _sorted_sites(self.interior1)

    @property
    def size(self) -> int:
        return len(self.support)

    @property
    def contour_class(self) -> int:
        return len(self.interior0) + len(self.interior1)

    def n_spin(self, value: int) -> int:
        return int(np.sum(self.spins == value))

    def sites(self) -> Set[Site]:
        return {(int(a), int(b)) for a, b in self.support}

    def spin_map(self) -> Dict[Site, int]:
        return {(int(a), int(b)): int(s) for (a, b), s in zip(self.support, self.spins)}

    def to_dict(self) -> dict:
        return {
            "support": self.support.tolist(),
            "spins": self.spins.tolist(),
            "type": int(self.contour_type),
            "interior0": self.interior0.tolist(),
            "interior1": self.interior1.tolist(),
            "class": self.contour_class,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Contour":
        return cls(np.array(data["support"], dtype=int).reshape(-1, 2), np.array(data["spins"]),
                   int(data["type"]), np.array(data.get("interior0", []), dtype=int).reshape(-1, 2),
                   np.array(data.get("interior1", []), dtype=int).reshape(-1, 2))


def _sorted_sites(sites) -> np.ndarray:
    sites = np.asarray(sites, dtype=int).reshape(-1, 2)
    return sites[np.lexsort((sites[:, 1], sites[:, 0]))]


def extract_contours(field: SpinField, tiling: Tiling, exterior_spin: Optional[int] = None) -> List[Contour]:
    """Contours of a finite spin field.

    The field is padded by 2L + 1 sites of the exterior spin so that every
    contour is surrounded by correct sites and the unbounded complementary
    component touches the padding frame.

    Args:
        field: Spin field of a finite window
        tiling: Tiling giving L and the ball norm
        exterior_spin: Spin assumed outside the window (default: field.exterior)

    Returns:
        Contours sorted by their smallest support site

    Raises:
        LabelInconsistencyError: If the sites around a complementary component
            carry mixed correctness labels
    """
    exterior_spin = field.exterior if exterior_spin is None else exterior_spin
    L = tiling.L
    padded = field.padded(2 * L + 1, exterior_spin)
    cmap = classify_correctness(padded, tiling)
    noncorrect = cmap.labels == NON_CORRECT
    components, n = ndimage.label(noncorrect, structure=KING)
    if n == 0:
        return []

    origin = np.array(cmap.origin)
    contours = []
    for k, bbox in enumerate(ndimage.find_objects(components), start=1):
        margin = 2
        rows = slice(max(bbox[0].start - margin, 0), min(bbox[0].stop + margin, noncorrect.shape[0]))
        cols = slice(max(bbox[1].start - margin, 0), min(bbox[1].stop + margin, noncorrect.shape[1]))
        support_mask = components[rows, cols] == k
        labels = cmap.labels[rows, cols]
        offset = origin + np.array([rows.start, cols.start])

        pieces, n_pieces = ndimage.label(~support_mask, structure=KING)
        frame = np.concatenate([pieces[0, :], pieces[-1, :], pieces[:, 0], pieces[:, -1]])
        outer = set(int(v) for v in frame if v > 0)
        if len(outer) != 1:
            raise LabelInconsistencyError(f"Contour {k}: expected one unbounded component, found {len(outer)}")
        outer_piece = outer.pop()

        ring = ndimage.binary_dilation(support_mask, structure=KING) & ~support_mask
        piece_label = {}
        for piece in range(1, n_pieces + 1):
            around = labels[ring & (pieces == piece)]
            values = np.unique(around)
            if len(values) != 1 or values[0] == NON_CORRECT:
                raise LabelInconsistencyError(
                    f"Contour {k}: component {piece} is bordered by labels {values.tolist()}")
            piece_label[piece] = int(values[0])

        support = np.argwhere(support_mask) + offset
        interiors = {0: [], 1: []}
        for piece, label in piece_label.items():
            if piece != outer_piece:
                interiors[label].append(np.argwhere(pieces == piece) + offset)
        contours.append(Contour(
            support=support,
            spins=padded.spins_at(support),
            contour_type=piece_label[outer_piece],
            interior0=np.vstack(interiors[0]) if interiors[0] else np.zeros((0, 2), dtype=int),
            interior1=np.vstack(interiors[1]) if interiors[1] else np.zeros((0, 2), dtype=int),
        ))
    contours.sort(key=lambda c: tuple(c.support[0]))
    logger.debug(f"Extracted {len(contours)} contours")
    return contours


def _distance_to_zero(mask: np.ndarray, norm: str) -> np.ndarray:
    """Distance from each True site to the nearest False site of the array."""
    if norm == "euclidean":
        return ndimage.distance_transform_edt(mask)
    return ndimage.distance_transform_cdt(mask, metric="chessboard").astype(float)


def interior_boundary(mask: np.ndarray, L: int, norm: str = "euclidean") -> np.ndarray:
    """Sites of ``mask`` within distance L+1 of a site outside it.

    Sites beyond the array edge count as outside.
    """
    padded = np.pad(mask.astype(bool), 1, constant_values=False)
    dist = _distance_to_zero(padded, norm)[1:-1, 1:-1]
    return mask.astype(bool) & (dist <= L + 1)


def exterior_boundary(mask: np.ndarray, L: int, norm: str = "euclidean") -> np.ndarray:
    """Sites outside ``mask`` within distance L of it (inside the array)."""
    mask = mask.astype(bool)
    if not mask.any():
        return np.zeros_like(mask)
    dist = _distance_to_zero(~mask, norm)
    return ~mask & (dist <= L)


def check_label_coherence(contour: Contour, field: SpinField, tiling: Tiling,
                          exterior_spin: Optional[int] = None) -> bool:
    """All spins on the inner and outer L-boundaries of every complementary
    component equal that component's label."""
    exterior_spin = field.exterior if exterior_spin is None else exterior_spin
    L = tiling.L
    margin = 2 * L + 2
    lo = contour.support.min(axis=0) - margin
    hi = contour.support.max(axis=0) + margin + 1
    shape = tuple(int(v) for v in hi - lo)
    support_mask = np.zeros(shape, dtype=bool)
    local = contour.support - lo
    support_mask[local[:, 0], local[:, 1]] = True
    spins = field.region(int(lo[0]), int(lo[1]), shape[0], shape[1], fill=exterior_spin)

    pieces, n_pieces = ndimage.label(~support_mask, structure=KING)
    frame = set(np.concatenate([pieces[0, :], pieces[-1, :], pieces[:, 0], pieces[:, -1]]).tolist()) - {0}
    for piece in range(1, n_pieces + 1):
        area = pieces == piece
        if piece in frame:
            label = contour.contour_type
        else:
            site = np.argwhere(area)[0] + lo
            label = 0 if _contains(contour.interior0, site) else 1
        inner = area & (_distance_to_zero(area, tiling.norm) <= L + 1)
        outer = exterior_boundary(area, L, tiling.norm)
        values = np.unique(spins[inner | outer])
        if len(values) > 1 or (len(values) == 1 and values[0] != label):
            logger.warning(f"Label coherence fails around component {piece}: spins {values.tolist()}, label {label}")
            return False
    return True


def _contains(sites: np.ndarray, site) -> bool:
    if len(sites) == 0:
        return False
    return bool(np.any(np.all(sites == np.asarray(site), axis=1)))


def geometric_compatibility(contours: Sequence[Contour]) -> bool:
    """True iff all supports are pairwise at d_inf distance > 1 with equal types."""
    contours = list(contours)
    if len(contours) <= 1:
        return True
    if len({c.contour_type for c in contours}) > 1:
        return False
    trees = [cKDTree(c.support) for c in contours]
    for i in range(len(contours)):
        for j in range(i + 1, len(contours)):
            dist, _ = trees[i].query(contours[j].support, k=1, p=np.inf)
            if np.min(dist) <= 1:
                return False
    return True


def domino_set(contour: Contour, field: SpinField, tiling: Tiling) -> List[Tuple[Site, Site]]:
    """Greedy set of (occupied, empty) d_inf-adjacent pairs inside a contour.

    Repeatedly takes the smallest remaining spin-1 site k of the support, the
    closest spin-0 site j within distance L, and the neighbour i of j closest
    to k; spin-1 sites within 4L of k are then discarded.

    Raises:
        DegenerateContourError: If the support lacks one of the two spins
    """
    if contour.n_spin(1) == 0 or contour.n_spin(0) == 0:
        raise DegenerateContourError("Contour support must carry both spins")
    L = tiling.L
    support = contour.spin_map()
    offsets = tiling.ball_offsets(L)
    candidates = contour.support[contour.spins == 1]
    neighbours = np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)])

    dominoes = []
    while len(candidates):
        k = candidates[0]
        near = k + offsets
        spins = field.spins_at(near)
        zeros = np.nonzero(spins == 0)[0]
        if len(zeros):
            j = near[zeros[0]]
            around = j + neighbours
            d2 = np.sum((around - k) ** 2, axis=1)
            order = np.lexsort((around[:, 1], around[:, 0], d2))
            i = around[order[0]]
            ti, tj = (int(i[0]), int(i[1])), (int(j[0]), int(j[1]))
            if support.get(ti) == 1 and support.get(tj) == 0:
                dominoes.append((ti, tj))
            else:
                logger.debug(f"Domino candidate {ti}-{tj} from {tuple(int(v) for v in k)} leaves the support "
                             f"(spins {support.get(ti)}, {support.get(tj)})")
        else:
            logger.debug(f"No spin-0 site within L of {tuple(int(v) for v in k)}")
        far = tiling.distance(candidates, k) > 4 * L
        candidates = candidates[far]
    return dominoes


def ratio_bound_holds(contour: Contour, r1: float) -> bool:
    """r1 |support| <= |support with spin #| <= (1 - r1) |support| for both spins."""
    n = contour.size
    return all(r1 * n <= contour.n_spin(s) <= (1 - r1) * n for s in (0, 1))


def contours_to_json(contours: Sequence[Contour]) -> str:
    return json.dumps([c.to_dict() for c in contours], sort_keys=True)


def contours_from_json(text: str) -> List[Contour]:
    return [Contour.from_dict(item) for item in json.loads(text)]
