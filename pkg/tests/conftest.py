"""Shared fixtures for the quermass test suite."""
import math

import numpy as np
import pytest

from quermass.contours import Tiling
from quermass.geometry import DiskUnion
from quermass.model import QuermassParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def worked_params():
    """R0 = R1 = 1 with theta1 = theta2 = 0 (the Widom-Rowlinson-like case)."""
    return QuermassParams(theta1=0.0, theta2=0.0, beta=1.0, z=1.0, R0=1.0, R1=1.0)


@pytest.fixture
def worked_tiling(worked_params):
    """delta = 1/(2 sqrt 2), L = 6."""
    return Tiling.for_params(worked_params)


@pytest.fixture
def small_tiling():
    """A coarse tiling with L = 1 for fast contour tests."""
    return Tiling(1.0, 1)


def random_union(rng: np.random.Generator, n: int, box: float = 6.0, r_lo: float = 0.5,
                 r_hi: float = 1.5) -> DiskUnion:
    """Random disks in general position (continuous draws)."""
    centers = rng.uniform(0.0, box, size=(n, 2))
    radii = rng.uniform(r_lo, r_hi, size=n)
    return DiskUnion(centers, radii)


@pytest.fixture
def random_unions(rng):
    return [random_union(rng, int(rng.integers(1, 12))) for _ in range(20)]


def lens_area(d: float, r: float = 1.0) -> float:
    """Area of the union of two radius-r disks at distance d < 2r."""
    overlap = 2 * r * r * math.acos(d / (2 * r)) - 0.5 * d * math.sqrt(4 * r * r - d * d)
    return 2 * math.pi * r * r - overlap


def _circle_points(c1: np.ndarray, r1: float, c2: np.ndarray, r2: float) -> np.ndarray:
    """Intersection points of two circles (empty when they do not cross)."""
    d = float(np.hypot(*(c2 - c1)))
    if not abs(r1 - r2) < d < r1 + r2:
        return np.zeros((0, 2))
    a = (d * d + r1 * r1 - r2 * r2) / (2 * d)
    h = math.sqrt(max(r1 * r1 - a * a, 0.0))
    unit = (c2 - c1) / d
    base = c1 + a * unit
    perp = np.array([-unit[1], unit[0]])
    return np.array([base + h * perp, base - h * perp])


def general_position_union(rng: np.random.Generator, n: int, box: float, r_lo: float, r_hi: float,
                           margin: float, max_tries: int = 20000) -> DiskUnion:
    """Random disks kept at least ``margin`` away from every tangency and triple point.

    Disks are drawn one at a time; a draw is rejected when its circle comes
    within ``margin`` of being tangent to another circle, or when a crossing
    point of two circles lies within ``margin`` of a third circle.
    """
    centers, radii, points = [], [], []
    tries = 0
    while len(radii) < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"Placed only {len(radii)} of {n} disks in general position")
        c = rng.uniform(0.0, box, size=2)
        r = float(rng.uniform(r_lo, r_hi))
        if radii:
            C, R = np.array(centers), np.array(radii)
            d = np.hypot(*(C - c).T)
            if np.any(np.abs(d - (R + r)) < margin) or np.any(np.abs(d - np.abs(R - r)) < margin):
                continue
            if points:
                P = np.array(points)
                if np.any(np.abs(np.hypot(*(P - c).T) - r) < margin):
                    continue
            new_points = []
            clear = True
            for j in range(len(R)):
                for p in _circle_points(c, r, C[j], R[j]):
                    others = np.delete(np.arange(len(R)), j)
                    gaps = np.abs(np.hypot(*(C[others] - p).T) - R[others])
                    if np.any(gaps < margin):
                        clear = False
                        break
                    new_points.append(p)
                if not clear:
                    break
            if not clear:
                continue
            points.extend(new_points)
        centers.append(c)
        radii.append(r)
    return DiskUnion(np.array(centers), np.array(radii))
