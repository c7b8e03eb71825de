"""Peierls constants, the contour energy bound and contour integrals I_gamma."""
import logging
import math
from dataclasses import asdict, dataclass
from multiprocessing import Pool
from typing import Optional, Tuple

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .contours import Contour, Tiling
from .errors import ContourTooLargeError, ParameterDomainError
from .geometry import TileDecomposition
from .model import Configuration, QuermassParams

logger = logging.getLogger(__name__)

DEFAULT_THETA1_DELTA_FRACTION = 0.9
DEFAULT_I_GAMMA_CAP = 500


def lattice_ball_count(radius: int, norm: str = "euclidean") -> int:
    """Number of sites of Z^2 within ``radius`` of the origin."""
    r = int(radius)
    if r < 0:
        return 0
    if norm == "sup":
        return (2 * r + 1) ** 2
    return sum(2 * math.isqrt(r * r - a * a) + 1 for a in range(-r, r + 1))


@dataclass(frozen=True)
class PeierlsConstants:
    """Every constant of the Peierls / Pirogov-Sinai-Zahradnik machinery."""

    delta: float
    L: int
    l0: int
    r0: float
    r1: float
    theta1_star: float
    theta1_delta: float
    theta2_star: float
    theta2_delta: float
    t: float
    rho0: float
    tau: float
    g0: float
    g1: float
    c: float
    a: float
    s_beta: float
    U_beta: Tuple[float, float]
    eta: float
    admissible: bool = True
    reason: str = ""

    def to_dict(self) -> dict:
        data = asdict(self)
        data["U_beta"] = list(self.U_beta)
        return data


def theta2_delta_bound(theta1: float, r0: float, R0: float, theta1_delta: float) -> float:
    """Largest admissible theta2 (exclusive) for a given theta1."""
    base = r0 * math.pi * R0 * R0
    if theta1 >= 0:
        return base
    return base * (1.0 + theta1 / theta1_delta)


def peierls_constants(p: QuermassParams, delta: Optional[float] = None,
                      theta1_delta_lower: Optional[float] = None, L: Optional[int] = None,
                      l0: Optional[int] = None, norm: str = "euclidean",
                      strict: bool = True) -> PeierlsConstants:
    """Compute the Peierls constants of a parameter set.

    Args:
        p: Model parameters
        delta: Tile side (default R0 / (2 sqrt 2))
        theta1_delta_lower: Lower bound for theta1^delta (default 0.9 theta1*)
        L: Correctness radius (default ceil(2 R1 / delta))
        l0: Smallest contour size (default |B(0, L)|)
        norm: Correctness-ball norm
        strict: Raise on inadmissible parameters instead of flagging them

    Returns:
        PeierlsConstants

    Raises:
        ParameterDomainError: If strict and theta1 <= -theta1*, theta2 >= theta2^delta
            or rho0 <= 0
    """
    tiling = Tiling.for_params(p, delta, L, norm)
    delta, L = tiling.delta, tiling.L
    d2 = delta * delta
    ball_volume = math.pi * p.R0 * p.R0

    r0 = 1.0 / lattice_ball_count(5 * L, norm)
    r1 = 1.0 / lattice_ball_count(2 * L, norm)
    l0 = lattice_ball_count(L, norm) if l0 is None else int(l0)
    theta1_star = p.R0 / 2.0
    theta1_delta = DEFAULT_THETA1_DELTA_FRACTION * theta1_star if theta1_delta_lower is None else float(theta1_delta_lower)
    delta_star = Tiling.max_delta(p)
    L_star = Tiling.min_L(p, delta_star)
    theta2_star = ball_volume / lattice_ball_count(5 * L_star, norm)
    theta2_delta = theta2_delta_bound(p.theta1, r0, p.R0, theta1_delta)

    problems = []
    if p.theta1 <= -theta1_star:
        problems.append(f"theta1 = {p.theta1} <= -theta1* = {-theta1_star}")
    if p.theta1 < 0 and not theta1_delta > -p.theta1:
        problems.append(f"theta1 = {p.theta1} needs theta1^delta > {-p.theta1}, got {theta1_delta}")
    if not p.theta2 < theta2_delta:
        problems.append(f"theta2 = {p.theta2} >= theta2^delta = {theta2_delta:.6g}")

    base = r0 * d2 - p.theta2 * d2 / ball_volume
    if p.theta1 >= 0:
        t = math.nan
        rho0 = base
    else:
        t_lo = p.theta2 * d2 / ((theta1_delta + p.theta1) * ball_volume) if theta1_delta + p.theta1 > 0 else math.inf
        t_hi = base / (-p.theta1)
        t = 0.5 * (t_lo + t_hi)
        rho0 = min((theta1_delta + p.theta1) * t - p.theta2 * d2 / ball_volume, base + p.theta1 * t)
    if not rho0 > 0:
        problems.append(f"rho0 = {rho0:.6g} <= 0")

    if problems and strict:
        raise ParameterDomainError("; ".join(problems))
    for problem in problems:
        logger.warning(f"Inadmissible Peierls parameters: {problem}")

    beta, z = p.beta, p.z
    tau = 0.5 * beta * rho0 - 8.0
    g0 = math.exp(-z * d2)
    g1 = math.exp(-beta * d2) * -math.expm1(-z * d2)
    c = rho0 * l0 / 12.0
    a = min(2.0 / (1.0 - r1), math.exp(-c * beta)) if c > 0 else 2.0 / (1.0 - r1)
    if beta > 0:
        bd = beta * d2
        s_beta = np.logaddexp(0.0, bd) / bd
        U_beta = (float(np.logaddexp(0.0, bd - a) / bd), float(np.logaddexp(0.0, bd + a) / bd))
    else:
        s_beta = math.inf
        U_beta = (math.inf, math.inf)
    eta = 2.0 * math.exp(min(-tau * l0 / 3.0, 700.0))

    return PeierlsConstants(
        delta=delta, L=L, l0=l0, r0=r0, r1=r1,
        theta1_star=theta1_star, theta1_delta=theta1_delta,
        theta2_star=theta2_star, theta2_delta=theta2_delta,
        t=t, rho0=rho0, tau=tau, g0=g0, g1=g1, c=c, a=a,
        s_beta=float(s_beta), U_beta=U_beta, eta=eta,
        admissible=not problems, reason="; ".join(problems),
    )


def contour_energy(cfg: Configuration, contour: Contour, p: QuermassParams, tiling: Tiling,
                   convention: str = "boundary") -> float:
    """H restricted to the support tiles of a contour."""
    if len(cfg) == 0:
        return 0.0
    decomposition = TileDecomposition(cfg.halo(), tiling.delta, convention)
    touched = contour.sites().intersection(decomposition.tiles())
    return math.fsum(decomposition.functionals(t).energy(p.theta1, p.theta2) for t in sorted(touched))


def peierls_margin(cfg: Configuration, contour: Contour, p: QuermassParams, constants: PeierlsConstants,
                   tiling: Tiling) -> Tuple[float, float]:
    """(H over the support, |support with spin 1| delta^2 + rho0 |support|)."""
    lhs = contour_energy(cfg, contour, p, tiling)
    rhs = contour.n_spin(1) * tiling.delta ** 2 + constants.rho0 * contour.size
    return lhs, rhs


def verify_peierls_bound(cfg: Configuration, contour: Contour, p: QuermassParams,
                         constants: PeierlsConstants, tiling: Optional[Tiling] = None) -> bool:
    """Check the Peierls energy inequality on one contour.

    Outside the admissible domain the inequality may legitimately fail; the
    result is then only logged.
    """
    tiling = tiling or Tiling(constants.delta, constants.L)
    lhs, rhs = peierls_margin(cfg, contour, p, constants, tiling)
    holds = lhs >= rhs - 1e-9 * max(1.0, abs(rhs))
    if not holds and not constants.admissible:
        logger.info(f"Peierls bound fails outside the admissible domain: {lhs:.6g} < {rhs:.6g}")
    return holds


def chi_bound_holds(cfg: Configuration, contour: Contour, p: QuermassParams, tiling: Tiling) -> bool:
    """Euler characteristic over the support is at most |support| delta^2 / (pi R0^2)."""
    if len(cfg) == 0:
        return True
    decomposition = TileDecomposition(cfg.halo(), tiling.delta)
    touched = contour.sites().intersection(decomposition.tiles())
    chi = sum(decomposition.functionals(t).euler for t in touched)
    return chi <= contour.size * tiling.delta ** 2 / (math.pi * p.R0 ** 2) + 1e-12


@dataclass(frozen=True)
class IGammaEstimate:
    """Monte Carlo estimate of a contour integral."""

    estimate: float
    standard_error: float
    log_prior: float
    n_samples: int
    bound: float = math.nan
    bound_ok: Optional[bool] = None
    log_estimate: float = math.nan


def _sample_contour_weights(args) -> np.ndarray:
    """Log Boltzmann weights -beta H_gamma of one replica."""
    contour_dict, p_dict, delta, n_samples, seed_key, convention = args
    contour = Contour.from_dict(contour_dict)
    p = QuermassParams(**p_dict)
    rng = np.random.default_rng(np.random.SeedSequence(seed_key[0], spawn_key=seed_key[1:]))
    occupied = contour.support[contour.spins == 1]
    lam = p.z * delta * delta
    p_empty = math.exp(-lam)
    sites = contour.sites()
    log_weights = np.empty(n_samples)
    for k in range(n_samples):
        if p.beta == 0:
            log_weights[k] = 0.0
            continue
        u = rng.uniform(p_empty, 1.0, size=len(occupied))
        counts = stats.poisson.ppf(u, lam).astype(int)
        counts = np.maximum(counts, 1)
        tiles = np.repeat(occupied, counts, axis=0)
        points = (tiles + rng.uniform(-0.5, 0.5, size=tiles.shape)) * delta
        cfg = Configuration(points, p.sample_radii(rng, len(points)))
        decomposition = TileDecomposition(cfg.halo(), delta, convention)
        touched = sites.intersection(decomposition.tiles())
        energy = math.fsum(decomposition.functionals(t).energy(p.theta1, p.theta2) for t in sorted(touched))
        log_weights[k] = -p.beta * energy
    return log_weights


def estimate_I_gamma(contour: Contour, p: QuermassParams, tiling: Tiling, samples: int = 256,
                     seed: int = 0, constants: Optional[PeierlsConstants] = None,
                     cap: int = DEFAULT_I_GAMMA_CAP, replicas: int = 4, threads: int = 1,
                     convention: str = "boundary") -> IGammaEstimate:
    """Estimate I_gamma = P(spin pattern) * E[exp(-beta H_gamma) | pattern].

    Occupied tiles receive a Poisson(z delta^2) number of germs conditioned
    to be positive, empty tiles none.  Replicas use fixed seed streams so the
    result does not depend on ``threads``.

    Args:
        contour: Contour whose support and spins fix the pattern
        p: Model parameters
        tiling: Tiling (delta)
        samples: Total number of Monte Carlo samples
        seed: Base seed
        constants: If given, the Peierls upper bound is checked within 3 SE
        cap: Largest support size accepted
        replicas: Number of independent seed streams
        threads: Worker processes

    Returns:
        IGammaEstimate

    Raises:
        ContourTooLargeError: If the support exceeds ``cap``
    """
    if contour.size > cap:
        raise ContourTooLargeError(f"Contour support {contour.size} exceeds the cap {cap}")
    n1 = contour.n_spin(1)
    n0 = contour.n_spin(0)
    lam = p.z * tiling.delta ** 2
    log_prior = -lam * n0 + n1 * math.log(-math.expm1(-lam))

    replicas = max(1, min(replicas, samples))
    per_replica = [samples // replicas + (1 if k < samples % replicas else 0) for k in range(replicas)]
    tasks = [(contour.to_dict(), p.to_dict(), tiling.delta, n, (int(seed), 7, k), convention)
             for k, n in enumerate(per_replica)]
    if threads > 1:
        with Pool(min(threads, replicas)) as pool:
            chunks = pool.map(_sample_contour_weights, tasks)
    else:
        chunks = [_sample_contour_weights(task) for task in tasks]
    log_w = np.concatenate(chunks)

    n = len(log_w)
    log_mean = logsumexp(log_w) - math.log(n)
    estimate = math.exp(log_prior + log_mean)
    if n > 1:
        w = np.exp(log_w - log_w.max())
        rel = np.std(w, ddof=1) / (np.mean(w) * math.sqrt(n))
    else:
        rel = math.nan
    se = estimate * rel

    bound = math.nan
    bound_ok = None
    if constants is not None:
        log_bound = (n0 * math.log(constants.g0) + n1 * math.log(constants.g1)
                     - p.beta * constants.rho0 * contour.size)
        bound = math.exp(log_bound)
        bound_ok = bool(estimate <= bound + 3.0 * (se if math.isfinite(se) else 0.0))
        if not bound_ok and constants.admissible:
            logger.warning(f"I_gamma estimate {estimate:.6g} exceeds the Peierls bound {bound:.6g}")
    return IGammaEstimate(estimate, se, log_prior, n, bound, bound_ok, float(log_prior + log_mean))
