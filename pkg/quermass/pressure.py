"""Pressure curves by thermodynamic integration and density-gap scans."""
import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.integrate import cumulative_trapezoid
from scipy.special import logsumexp

from .contours import Tiling, interior_boundary
from .errors import ParameterDomainError
from .model import Configuration, QuermassParams, Window
from .sampler import BoundaryCondition, Sampler, estimate_density, run_chain

logger = logging.getLogger(__name__)

SCAN_COLUMNS = ["s", "z", "bc", "rho", "rho_se", "psi", "psi_se"]
DILUTE_FRACTION = 1e-3
NODES_PER_DECADE = 4
DEFAULT_OFFSET_SAMPLES = 256


@dataclass
class PressureCurve:
    """ln Z_Lambda and psi = ln Z / (beta |window|) on a grid of activities.

    ``table`` has columns z, ln_z, ln_z_se, psi, psi_se, mean_n, mean_n_se.
    For free and wired-0 conditions ln Z is relative to z = 0; for wired-1
    it is absolute (ln Z -> -inf as z -> 0).
    """

    table: pd.DataFrame
    bc: str
    window_area: float
    bias_bound: float
    offset: float = 0.0
    offset_se: float = 0.0

    @property
    def z(self) -> np.ndarray:
        return self.table["z"].to_numpy()

    @property
    def psi(self) -> np.ndarray:
        return self.table["psi"].to_numpy()


@dataclass
class ScanResult:
    """Density and pressure estimates of both wired phases on an s grid."""

    table: pd.DataFrame
    s_peak: float
    gap_at_peak: float
    gap_se_at_peak: float
    significant: bool
    s_cross: float
    z_cross: float
    s_psi_cross: float = math.nan
    s_beta: float = math.nan
    pressure: Dict[str, PressureCurve] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "s_peak": self.s_peak, "gap_at_peak": self.gap_at_peak, "gap_se_at_peak": self.gap_se_at_peak,
            "significant": self.significant, "s_cross": self.s_cross, "z_cross": self.z_cross,
            "s_psi_cross": self.s_psi_cross, "s_beta": self.s_beta,
        }


def _node_seed(seed: int, bc: BoundaryCondition, index: int) -> np.random.SeedSequence:
    code = {"free": 0, "outer": 1, "wired0": 2, "wired1": 3}[bc.label]
    return np.random.SeedSequence(int(seed), spawn_key=(code, index))


def _chain_worker(task) -> Tuple[Tuple[str, int], float, float]:
    """Run one grid-node chain; returns (key, mean N, SE of mean N)."""
    key, p_dict, window, tiling, bc, sweeps, seed, burn_in, thin, steps = task
    p = QuermassParams(**p_dict)
    trace = run_chain(p, window, bc, sweeps, seed, tiling=tiling, burn_in=burn_in, thin=thin,
                      steps_per_sweep=steps)
    rho, se = estimate_density(trace)
    return key, rho * window.area, se * window.area


def run_nodes(tasks: List[tuple], threads: int = 1) -> Dict[Tuple[str, int], Tuple[float, float]]:
    """Run independent chains, in parallel when ``threads > 1``, merged by key."""
    if threads > 1 and len(tasks) > 1:
        with Pool(min(threads, len(tasks))) as pool:
            results = pool.map(_chain_worker, tasks)
    else:
        results = [_chain_worker(task) for task in tasks]
    return {key: (mean, se) for key, mean, se in sorted(results)}


def _boundary_count(window: Window, tiling: Optional[Tiling], bc: BoundaryCondition) -> int:
    if bc.kind != "wired":
        return 0
    box = window.tile_box
    return int(interior_boundary(np.ones((box.nx, box.ny), dtype=bool), tiling.L, tiling.norm).sum())


def integration_grid(z_grid: Sequence[float], beta: float) -> np.ndarray:
    """Log-spaced nodes from z_min = 1e-3 beta to the largest requested z, plus the requested nodes."""
    z_grid = np.asarray(z_grid, dtype=float)
    z_max = float(z_grid.max())
    z_min = DILUTE_FRACTION * beta if beta > 0 else DILUTE_FRACTION * z_max
    z_min = min(z_min, z_max)
    n = max(2, int(math.ceil(NODES_PER_DECADE * math.log10(z_max / z_min))) + 1) if z_max > z_min else 1
    nodes = np.concatenate([np.geomspace(z_min, z_max, n), z_grid[z_grid >= z_min]])
    return np.unique(nodes)


def _closed_form_beta_zero(z_grid: np.ndarray, area: float, n_boundary: int, delta: float,
                           bc: BoundaryCondition) -> np.ndarray:
    """ln Z at beta = 0 (Poisson reference measure)."""
    if bc.kind == "wired" and bc.spin == 0:
        return -z_grid * delta * delta * n_boundary
    if bc.kind == "wired" and bc.spin == 1:
        with np.errstate(divide="ignore"):
            return n_boundary * np.log(-np.expm1(-z_grid * delta * delta))
    return np.zeros_like(z_grid)


def _wired_one_offset(p: QuermassParams, window: Window, tiling: Tiling, samples: int,
                      rng: np.random.Generator) -> Tuple[float, float]:
    """log E[exp(-beta H_Lambda)] under the Poisson process conditioned on a filled inner band."""
    sampler = Sampler(p, window, BoundaryCondition.wired(1), tiling=tiling)
    delta = tiling.delta
    lam = p.z * delta * delta
    mask = sampler.boundary_mask
    log_w = np.empty(samples)
    for k in range(samples):
        counts = rng.poisson(lam, size=mask.shape)
        # inner band: Poisson conditioned to be positive
        band = np.argwhere(mask)
        u = rng.uniform(math.exp(-lam), 1.0, size=len(band))
        counts[mask] = np.maximum(1, _poisson_quantile(u, lam))
        local = np.argwhere(counts > 0)
        tiles = np.repeat(local, counts[counts > 0], axis=0) + np.array([window.tile_box.i0, window.tile_box.j0])
        points = (tiles + rng.uniform(-0.5, 0.5, size=tiles.shape)) * delta
        cfg = Configuration(points, p.sample_radii(rng, len(points)))
        log_w[k] = -p.beta * sampler.energy(cfg.points, cfg.radii)
    offset = float(logsumexp(log_w) - math.log(samples))
    w = np.exp(log_w - log_w.max())
    se = float(np.std(w, ddof=1) / (np.mean(w) * math.sqrt(samples))) if samples > 1 else math.nan
    return offset, se


def _poisson_quantile(u: np.ndarray, lam: float) -> np.ndarray:
    return stats.poisson.ppf(u, lam).astype(int)


def estimate_pressure_curve(p: QuermassParams, window: Window, z_grid: Sequence[float],
                            bc: BoundaryCondition, sweeps: int, seed: int,
                            tiling: Optional[Tiling] = None, burn_in: int = 0, thin: int = 1,
                            steps_per_sweep: Optional[int] = None, threads: int = 1,
                            offset_samples: int = DEFAULT_OFFSET_SAMPLES,
                            node_estimates: Optional[Dict[float, Tuple[float, float]]] = None) -> PressureCurve:
    """Estimate ln Z_Lambda by integrating d ln Z / dz = E[N] / z - |window|.

    Args:
        p: Model parameters (z is ignored)
        window: Sampling window
        z_grid: Activities to report (z = 0 allowed)
        bc: Boundary condition (free or wired)
        sweeps: Sweeps per grid node
        seed: Base seed; node seeds derive from it and the node index
        tiling: Tiling for wired conditions
        threads: Worker processes for the grid nodes
        offset_samples: Samples of the wired-1 reference offset; its standard error
            enters ln_z_se at every node
        node_estimates: Precomputed (mean N, SE) per activity, reused when present

    Returns:
        PressureCurve on the requested grid
    """
    z_grid = np.asarray(sorted(set(float(z) for z in z_grid)))
    if np.any(z_grid < 0):
        raise ParameterDomainError("Activities must be >= 0")
    if offset_samples < 2:
        raise ParameterDomainError(f"offset_samples must be >= 2, got {offset_samples}")
    area = window.area
    if tiling is None and window.delta is not None:
        tiling = Tiling.for_params(p, window.delta)
    n_boundary = _boundary_count(window, tiling, bc)
    delta = tiling.delta if tiling is not None else 0.0

    if p.beta == 0:
        ln_z = _closed_form_beta_zero(z_grid, area, n_boundary, delta, bc)
        table = pd.DataFrame({"z": z_grid, "ln_z": ln_z, "ln_z_se": 0.0, "psi": math.nan, "psi_se": math.nan,
                              "mean_n": math.nan, "mean_n_se": math.nan})
        return PressureCurve(table, bc.label, area, 0.0)

    positive = z_grid[z_grid > 0]
    if len(positive) == 0:
        table = pd.DataFrame({"z": z_grid, "ln_z": 0.0, "ln_z_se": 0.0, "psi": 0.0, "psi_se": 0.0,
                              "mean_n": 0.0, "mean_n_se": 0.0})
        return PressureCurve(table, bc.label, area, 0.0)
    nodes = integration_grid(positive, p.beta)
    node_estimates = dict(node_estimates or {})
    missing = [(k, z) for k, z in enumerate(nodes) if z not in node_estimates]
    tasks = [((bc.label, k), p.with_z(z).to_dict(), window, tiling, bc, sweeps, _node_seed(seed, bc, k),
              burn_in, thin, steps_per_sweep) for k, z in missing]
    results = run_nodes(tasks, threads)
    for k, z in missing:
        node_estimates[z] = results[(bc.label, k)]
    mean_n = np.array([node_estimates[z][0] for z in nodes])
    mean_se = np.array([node_estimates[z][1] for z in nodes])

    integrand = mean_n / nodes - area
    variance = (mean_se / nodes) ** 2
    singular_slope = np.zeros_like(nodes)
    if bc.kind == "wired" and bc.spin == 1:
        lam = nodes * delta * delta
        singular_slope = n_boundary * delta * delta * np.exp(-lam) / -np.expm1(-lam)
    regular = integrand - singular_slope
    cumulative = cumulative_trapezoid(regular, nodes, initial=0.0)
    cumulative_var = _trapezoid_variance(nodes, variance)

    z_min = nodes[0]
    single = p.single_disk_boltzmann_mean()
    offset, offset_se = 0.0, 0.0
    if bc.kind == "wired" and bc.spin == 1:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(99,)))
        offset, offset_se = _wired_one_offset(p.with_z(z_min), window, tiling, offset_samples, rng)
        head = offset + n_boundary * math.log(-math.expm1(-z_min * delta * delta))
        singular = n_boundary * np.log(-np.expm1(-nodes * delta * delta))
        ln_nodes = head + cumulative + singular - n_boundary * math.log(-math.expm1(-z_min * delta * delta))
        bias = 0.0
    else:
        free_area = area - n_boundary * delta * delta
        slope0 = free_area * (single - 1.0) - n_boundary * delta * delta
        head = z_min * slope0
        bias = abs(head)
        ln_nodes = head + cumulative
    ln_se = np.sqrt(cumulative_var + offset_se ** 2)

    rows = []
    for z in z_grid:
        if z == 0:
            value = -math.inf if (bc.kind == "wired" and bc.spin == 1) else 0.0
            rows.append({"z": 0.0, "ln_z": value, "ln_z_se": 0.0, "mean_n": 0.0, "mean_n_se": 0.0})
            continue
        k = int(np.searchsorted(nodes, z))
        rows.append({"z": z, "ln_z": ln_nodes[k], "ln_z_se": ln_se[k], "mean_n": mean_n[k], "mean_n_se": mean_se[k]})
    table = pd.DataFrame(rows)
    table["psi"] = table["ln_z"] / (p.beta * area)
    table["psi_se"] = table["ln_z_se"] / (p.beta * area)
    table = table[["z", "ln_z", "ln_z_se", "psi", "psi_se", "mean_n", "mean_n_se"]]
    logger.info(f"Pressure curve {bc.label}: {len(nodes)} nodes, dilute bias bound {bias:.3g}")
    return PressureCurve(table, bc.label, area, bias, offset, offset_se)


def _trapezoid_variance(nodes: np.ndarray, variance: np.ndarray) -> np.ndarray:
    """Variance of the cumulative trapezoid sum at each node."""
    out = np.zeros(len(nodes))
    steps = np.diff(nodes)
    for m in range(1, len(nodes)):
        weights = np.zeros(m + 1)
        weights[:m] += 0.5 * steps[:m]
        weights[1:m + 1] += 0.5 * steps[:m]
        out[m] = float(np.sum(weights ** 2 * variance[:m + 1]))
    return out


def _refine_peak(s: np.ndarray, gap: np.ndarray, k: int) -> float:
    """Parabolic refinement of the maximum at index k."""
    if 0 < k < len(s) - 1:
        x, y = s[k - 1:k + 2], gap[k - 1:k + 2]
        coeffs = np.polyfit(x, y, 2)
        if coeffs[0] < 0:
            vertex = -coeffs[1] / (2 * coeffs[0])
            if x[0] <= vertex <= x[-1]:
                return float(vertex)
    return float(s[k])


def _sign_change(s: np.ndarray, values: np.ndarray) -> float:
    """Linear-interpolated first sign change of ``values`` along ``s``."""
    for k in range(len(s) - 1):
        a, b = values[k], values[k + 1]
        if np.isfinite(a) and np.isfinite(b) and a * b < 0:
            return float(s[k] + (s[k + 1] - s[k]) * a / (a - b))
        if a == 0:
            return float(s[k])
    return math.nan


def density_gap_scan(p: QuermassParams, window: Window, s_grid: Sequence[float], sweeps: int, seed: int,
                     tiling: Optional[Tiling] = None, burn_in: int = 0, thin: int = 1,
                     steps_per_sweep: Optional[int] = None, with_pressure: bool = False,
                     threads: int = 1, offset_samples: int = DEFAULT_OFFSET_SAMPLES) -> ScanResult:
    """Densities of the wired-0 and wired-1 phases across reduced activities s = z / beta.

    Args:
        p: Model parameters (z is ignored)
        window: Tile window
        s_grid: Reduced activities
        sweeps: Sweeps per chain
        seed: Base seed
        tiling: Tiling (defaults to the window's tile side)
        with_pressure: Also integrate both pressure curves
        threads: Worker processes
        offset_samples: Samples of the wired-1 reference offset

    Returns:
        ScanResult with one row per (s, bc)
    """
    if p.beta <= 0:
        raise ParameterDomainError("A density-gap scan needs beta > 0")
    s_values = np.asarray(sorted(set(float(s) for s in s_grid)))
    if len(s_values) == 0 or np.any(s_values <= 0):
        raise ParameterDomainError("Reduced activities must be positive")
    if tiling is None:
        tiling = Tiling.for_params(p, window.delta)
    bcs = [BoundaryCondition.wired(0), BoundaryCondition.wired(1)]
    z_values = s_values * p.beta

    curves: Dict[str, PressureCurve] = {}
    per_bc: Dict[str, List[Tuple[float, float]]] = {}
    if with_pressure:
        for bc in bcs:
            curve = estimate_pressure_curve(p, window, z_values, bc, sweeps, seed, tiling=tiling,
                                            burn_in=burn_in, thin=thin, steps_per_sweep=steps_per_sweep,
                                            threads=threads, offset_samples=offset_samples)
            curves[bc.label] = curve
            per_bc[bc.label] = list(zip(curve.table["mean_n"], curve.table["mean_n_se"]))
    else:
        tasks = [((bc.label, k), p.with_z(z).to_dict(), window, tiling, bc, sweeps, _node_seed(seed, bc, 1000 + k),
                  burn_in, thin, steps_per_sweep) for bc in bcs for k, z in enumerate(z_values)]
        results = run_nodes(tasks, threads)
        for bc in bcs:
            per_bc[bc.label] = [results[(bc.label, k)] for k in range(len(z_values))]

    area = window.area
    rows = []
    for k, (s, z) in enumerate(zip(s_values, z_values)):
        for bc in bcs:
            mean_n, se_n = per_bc[bc.label][k]
            psi, psi_se = math.nan, math.nan
            if with_pressure:
                row = curves[bc.label].table.iloc[k]
                psi, psi_se = float(row["psi"]), float(row["psi_se"])
            rows.append({"s": s, "z": z, "bc": bc.label, "rho": mean_n / area, "rho_se": se_n / area,
                         "psi": psi, "psi_se": psi_se})
    table = pd.DataFrame(rows, columns=SCAN_COLUMNS)

    rho0 = table[table["bc"] == "wired0"]["rho"].to_numpy()
    rho1 = table[table["bc"] == "wired1"]["rho"].to_numpy()
    se0 = table[table["bc"] == "wired0"]["rho_se"].to_numpy()
    se1 = table[table["bc"] == "wired1"]["rho_se"].to_numpy()
    gap = rho1 - rho0
    gap_se = np.sqrt(se0 ** 2 + se1 ** 2)
    k = int(np.argmax(gap))
    s_peak = _refine_peak(s_values, gap, k)
    significant = bool(gap[k] > 3.0 * gap_se[k]) if gap_se[k] > 0 else bool(gap[k] > 0)

    s_psi_cross = math.nan
    if with_pressure:
        diff = (table[table["bc"] == "wired1"]["psi"].to_numpy() - table[table["bc"] == "wired0"]["psi"].to_numpy())
        s_psi_cross = _sign_change(s_values, diff)
    s_cross = s_psi_cross if math.isfinite(s_psi_cross) else s_peak
    bd = p.beta * tiling.delta ** 2
    s_beta = float(np.logaddexp(0.0, bd) / bd)
    if not significant:
        logger.info(f"No significant density gap on the grid (largest {gap[k]:.4g} +/- {gap_se[k]:.2g})")
    return ScanResult(table, s_peak, float(gap[k]), float(gap_se[k]), significant, s_cross,
                      s_cross * p.beta, s_psi_cross, s_beta, curves)
