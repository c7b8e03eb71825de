"""Numeric check of the large-beta conditions behind the contour expansion.

Four conditions on beta (through tau = beta rho0 / 2 - 8):

1. tau > tau0, the operational convergence threshold
2. D eta(tau, l0) <= 1
3. for all k >= 1: 2 k^{1/2} exp(-tau k^{1/2} / 2) / beta <= rho0 / 16
4. for all x > 0: exp(-max(rho0 / (16 delta^2 x), l0) tau / 2) / (beta delta^2) <= x / 2
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import numpy as np

from .expansion import eta_bound, find_tau0
from .peierls import PeierlsConstants
from .truncated import kappa_derivative_sup, psi0_occupied

logger = logging.getLogger(__name__)

DESK_SIMULABLE_BETA = 1e3
MAX_BETA = 1e12


@dataclass
class ConditionReport:
    """Per-condition verdicts at one beta."""

    beta: float
    delta: float
    rho0: float
    l0: int
    tau: float
    tau0: float
    eta: float
    D: float
    C1: float
    C2: float
    K: float
    condition1: bool
    condition2: bool
    condition3: bool
    condition5: bool
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        return self.condition1 and self.condition2 and self.condition3 and self.condition5

    def to_dict(self) -> dict:
        data = asdict(self)
        data["satisfied"] = self.satisfied
        return data


def tau_of(beta: float, rho0: float) -> float:
    return 0.5 * beta * rho0 - 8.0


def _u_beta(beta: float, delta: float, rho0: float, l0: int, r1: float):
    bd = beta * delta * delta
    c = rho0 * l0 / 12.0
    a = min(2.0 / (1.0 - r1), math.exp(-c * beta)) if c > 0 else 2.0 / (1.0 - r1)
    return float(np.logaddexp(0.0, bd - a) / bd), float(np.logaddexp(0.0, bd + a) / bd)


def constant_D(beta: float, delta: float, rho0: float, l0: int, K: float, r1: float,
               C1: Optional[float] = None, C2: Optional[float] = None):
    """D = (2 + 2K) delta^2 beta + 4 beta + 4 delta^2 |kappa'| + C1 beta delta^2 + C2.

    C1 = e + sup over U_beta of |psi_0^# / s| and C2 = sup over U_beta of 1/s.
    Returns (D, C1, C2).
    """
    d2 = delta * delta
    lo, hi = _u_beta(beta, delta, rho0, l0, r1)
    if C1 is None:
        grid = np.linspace(lo, hi, 201)
        ratio = np.abs(psi0_occupied(grid, beta, delta) / grid)
        C1 = math.e + max(1.0, float(ratio.max()))
    if C2 is None:
        C2 = 1.0 / lo
    D = (2.0 + 2.0 * K) * d2 * beta + 4.0 * beta + 4.0 * d2 * kappa_derivative_sup(rho0) + C1 * beta * d2 + C2
    return D, C1, C2


def condition3_holds(beta: float, tau: float, rho0: float) -> bool:
    """sup over k >= 1 of 2 sqrt(k) exp(-tau sqrt(k) / 2) / beta <= rho0 / 16.

    u exp(-tau u / 2) peaks at u = 2 / tau, so only k = 1 and the integers
    around (2 / tau)^2 need checking.
    """
    if tau <= 0:
        return False
    peak = (2.0 / tau) ** 2
    candidates = {1, max(1, math.floor(peak)), max(1, math.ceil(peak))}
    worst = max(2.0 * math.sqrt(k) * math.exp(-tau * math.sqrt(k) / 2.0) / beta for k in candidates)
    return worst <= rho0 / 16.0


def condition5_holds(beta: float, tau: float, rho0: float, delta: float, l0: int,
                     grid_points: int = 400) -> bool:
    """exp(-max(A / x, l0) tau / 2) / (beta delta^2) <= x / 2 for all x > 0, A = rho0 / (16 delta^2).

    Above the crossover x* = A / l0 the left side is constant, so x* is the
    worst point there.  Below it the log-margin is convex in 1/x with its
    minimum at x_c = A tau / 2; both points and a log grid are checked.
    """
    if tau <= 0:
        return False
    d2 = delta * delta
    A = rho0 / (16.0 * d2)
    x_star = A / l0
    log_bd = math.log(beta * d2)

    def margin(x: float) -> float:
        return math.log(x / 2.0) + max(A / x, l0) * tau / 2.0 + log_bd

    points = [x_star, min(A * tau / 2.0, x_star)]
    points.extend(np.geomspace(x_star * 1e-8, x_star, grid_points))
    return all(margin(float(x)) >= 0 for x in points)


def psz_conditions_check(beta: float, delta: float, rho0: float, l0: int, d: int = 2,
                         D: Optional[float] = None, C1: Optional[float] = None, C2: Optional[float] = None,
                         K: Optional[float] = None, r1: float = 0.0, tau0: Optional[float] = None) -> ConditionReport:
    """Verdicts of the four beta-conditions.

    Args:
        beta: Inverse temperature
        delta: Tile side
        rho0: Peierls constant (> 0)
        l0: Smallest contour size
        d: Dimension (only 2 is supported)
        D: Override of the derivative constant
        C1, C2: Overrides of the constants entering D
        K: Weight-derivative constant (default 1 - r1)
        r1: Spin-ratio constant
        tau0: Convergence threshold (default from find_tau0(l0))

    Returns:
        ConditionReport
    """
    if d != 2:
        raise ValueError("Only d = 2 is supported")
    if not rho0 > 0:
        raise ValueError(f"rho0 must be positive, got {rho0}")
    tau = tau_of(beta, rho0)
    tau0 = find_tau0(int(l0)) if tau0 is None else float(tau0)
    K = 1.0 - r1 if K is None else float(K)
    if D is None:
        D, C1, C2 = constant_D(beta, delta, rho0, l0, K, r1, C1, C2)
    eta = eta_bound(tau, l0) if tau * l0 / 3.0 > -700 else math.inf
    report = ConditionReport(
        beta=beta, delta=delta, rho0=rho0, l0=int(l0), tau=tau, tau0=tau0, eta=eta, D=D,
        C1=math.nan if C1 is None else C1, C2=math.nan if C2 is None else C2, K=K,
        condition1=bool(tau > tau0),
        condition2=bool(D * eta <= 1.0),
        condition3=condition3_holds(beta, tau, rho0),
        condition5=condition5_holds(beta, tau, rho0, delta, l0),
        details={"D_eta": D * eta, "x_star": rho0 / (16.0 * delta * delta * l0)},
    )
    return report


def conditions_from_constants(constants: PeierlsConstants, beta: Optional[float] = None,
                              tau0: Optional[float] = None) -> ConditionReport:
    """Run the checker with delta, rho0, l0 and r1 taken from Peierls constants."""
    beta = constants.tau * 2.0 / constants.rho0 + 16.0 / constants.rho0 if beta is None else beta
    return psz_conditions_check(beta, constants.delta, constants.rho0, constants.l0, r1=constants.r1, tau0=tau0)


@dataclass(frozen=True)
class MinimalBeta:
    beta: float
    report: ConditionReport
    desk_simulable: bool

    def to_dict(self) -> dict:
        return {"minimal_beta": self.beta, "desk_simulable": self.desk_simulable,
                "not_desk_simulable": not self.desk_simulable, "report": self.report.to_dict()}


def minimal_beta(delta: float, rho0: float, l0: int, r1: float = 0.0, K: Optional[float] = None,
                 tau0: Optional[float] = None, rel_tol: float = 1e-6) -> MinimalBeta:
    """Smallest beta satisfying all conditions, by doubling then bisection.

    Raises:
        ValueError: If no beta up to 1e12 satisfies them
    """
    tau0 = find_tau0(int(l0)) if tau0 is None else float(tau0)

    def ok(beta: float) -> bool:
        return psz_conditions_check(beta, delta, rho0, l0, K=K, r1=r1, tau0=tau0).satisfied

    hi = max(1.0, 2.0 * (8.0 + tau0) / rho0)
    while not ok(hi):
        hi *= 2.0
        if hi > MAX_BETA:
            raise ValueError(f"No beta up to {MAX_BETA:.0e} satisfies the conditions")
    lo = 1.0
    if ok(lo):
        hi = lo
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    report = psz_conditions_check(hi, delta, rho0, l0, K=K, r1=r1, tau0=tau0)
    simulable = hi <= DESK_SIMULABLE_BETA
    if not simulable:
        logger.info(f"Minimal rigorous beta {hi:.4g} is far beyond desk-scale simulation")
    return MinimalBeta(hi, report, simulable)
