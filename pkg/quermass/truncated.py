"""Truncated pressures of the two ground states and the gap function G(s)."""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .contours import Contour, Tiling
from .errors import NegativeCorrectionError, ParameterDomainError, RootNotBracketedError
from .model import QuermassParams
from .peierls import PeierlsConstants, estimate_I_gamma, peierls_constants

logger = logging.getLogger(__name__)

Correction = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class TruncatedPressure:
    """Truncated pressures of the empty (0) and occupied (1) phases at one s."""

    order: int
    s: float
    psi0: float
    psi1: float
    experimental: bool = False

    def __post_init__(self):
        if not (self.a0 >= 0 and self.a1 >= 0):
            raise ValueError("Truncated pressure gaps must be non-negative")

    @property
    def psi(self) -> float:
        return max(self.psi0, self.psi1)

    @property
    def a0(self) -> float:
        return self.psi - self.psi0

    @property
    def a1(self) -> float:
        return self.psi - self.psi1

    def to_dict(self) -> dict:
        data = asdict(self)
        data.update({"psi": self.psi, "a0": self.a0, "a1": self.a1})
        return data


def _delta(p: QuermassParams, constants: Optional[PeierlsConstants] = None, delta: Optional[float] = None) -> float:
    if constants is not None:
        return constants.delta
    return Tiling.max_delta(p) if delta is None else float(delta)


def psi0_empty(s):
    """Order-0 pressure of the empty phase: ln(g_0) / (beta delta^2) = -s."""
    return -np.asarray(s, dtype=float) if np.ndim(s) else -float(s)


def psi0_occupied(s, beta: float, delta: float):
    """Order-0 pressure of the occupied phase: -1 + ln(1 - e^{-s beta delta^2}) / (beta delta^2)."""
    bd = beta * delta * delta
    value = -1.0 + np.log(-np.expm1(-np.asarray(s, dtype=float) * bd)) / bd
    return value if np.ndim(s) else float(value)


def s_beta(beta: float, delta: float) -> float:
    """Reduced activity where the two order-0 pressures meet: ln(1 + e^{beta delta^2}) / (beta delta^2)."""
    bd = beta * delta * delta
    return float(np.logaddexp(0.0, bd) / bd)


def truncated_pressure_order0(p: QuermassParams, constants: Optional[PeierlsConstants] = None,
                              delta: Optional[float] = None) -> TruncatedPressure:
    """Order-0 truncated pressures at the reduced activity of ``p``.

    Raises:
        ParameterDomainError: If beta <= 0
    """
    if not p.beta > 0:
        raise ParameterDomainError("Truncated pressures need beta > 0")
    d = _delta(p, constants, delta)
    s = p.s
    return TruncatedPressure(0, s, psi0_empty(s), psi0_occupied(s, p.beta, d))


def _evaluate(f: Correction, s: float) -> float:
    return float(f(s)) if callable(f) else float(f)


def gap_function(s, p: QuermassParams, constants: Optional[PeierlsConstants] = None,
                 f1: Correction = 0.0, f0: Correction = 0.0, delta: Optional[float] = None):
    """G(s) = (s - 1) + ln(1 - e^{-s beta delta^2}) / (beta delta^2) + f1 - f0.

    The corrections may be constants or functions of s.
    """
    d = _delta(p, constants, delta)
    if np.ndim(s):
        return np.array([gap_function(float(v), p, constants, f1, f0, d) for v in np.ravel(s)])
    return float(psi0_occupied(s, p.beta, d) - psi0_empty(s)) + _evaluate(f1, s) - _evaluate(f0, s)


def gap_derivative(s, beta: float, delta: float):
    """dG/ds without corrections: 1 / (1 - e^{-s beta delta^2})."""
    bd = beta * delta * delta
    return 1.0 / -np.expm1(-np.asarray(s, dtype=float) * bd)


def find_critical_s(p: QuermassParams, constants: Optional[PeierlsConstants] = None,
                    f1: Correction = 0.0, f0: Correction = 0.0,
                    bracket: Optional[Tuple[float, float]] = None, delta: Optional[float] = None) -> float:
    """Root of G(s) by Brent's method.

    Args:
        p: Model parameters (beta > 0)
        constants: Peierls constants; their U_beta is the default bracket
        f1, f0: Corrections of the two phases
        bracket: Explicit bracket
        delta: Tile side when no constants are given

    Raises:
        RootNotBracketedError: If G has no sign change on the bracket
    """
    if not p.beta > 0:
        raise ParameterDomainError("The gap function needs beta > 0")
    d = _delta(p, constants, delta)
    if bracket is None:
        if constants is not None and constants.U_beta[1] > constants.U_beta[0]:
            bracket = constants.U_beta
        else:
            centre = s_beta(p.beta, d)
            bracket = (centre * 1e-6, centre + 2.0)
    lo, hi = float(bracket[0]), float(bracket[1])
    g_lo = gap_function(lo, p, constants, f1, f0, d)
    g_hi = gap_function(hi, p, constants, f1, f0, d)
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    if g_lo * g_hi > 0:
        raise RootNotBracketedError(f"G has no sign change on [{lo:.10g}, {hi:.10g}]: "
                                    f"G = {g_lo:.4g}, {g_hi:.4g}")
    return float(brentq(gap_function, lo, hi, args=(p, constants, f1, f0, d), xtol=1e-14, maxiter=500))


def kappa(x, rho0: float):
    """C^1 cut-off: 1 below rho0/8, 0 above rho0/4, cubic smoothstep in between."""
    lo, hi = rho0 / 8.0, rho0 / 4.0
    t = np.clip((np.asarray(x, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    value = 1.0 - t * t * (3.0 - 2.0 * t)
    return value if np.ndim(x) else float(value)


def kappa_derivative_sup(rho0: float) -> float:
    """sup |kappa'| = 1.5 / (rho0 / 8)."""
    return 12.0 / rho0


def single_defect_contour(tiling: Tiling, sea_spin: int) -> Contour:
    """Contour left by flipping the origin tile in a sea of ``sea_spin``."""
    support = tiling.ball_offsets(tiling.L)
    spins = np.full(len(support), sea_spin, dtype=np.int8)
    spins[np.all(support == 0, axis=1)] = 1 - sea_spin
    return Contour(support, spins, sea_spin)


@dataclass(frozen=True)
class FCorrections:
    """Estimate-grade corrections f^# from the single-defect contours."""

    f0: float
    f1: float
    se0: float
    se1: float
    log_weight0: float
    log_weight1: float

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_f_corrections(p: QuermassParams, constants: Optional[PeierlsConstants] = None,
                           tiling: Optional[Tiling] = None, samples: int = 256, seed: int = 0,
                           threads: int = 1) -> FCorrections:
    """f^# ~ w_gamma / (beta delta^2) for the smallest contour of each phase.

    The weight of a contour relative to the ground state is
    I_gamma / g_#^{|gamma|}; the translates of the contour meeting the
    origin each contribute w / |gamma| to the cluster sum.
    """
    if not p.beta > 0:
        raise ParameterDomainError("Corrections need beta > 0")
    constants = constants or peierls_constants(p, strict=False)
    tiling = tiling or Tiling(constants.delta, constants.L)
    bd = p.beta * tiling.delta ** 2
    results = {}
    for spin, log_g in ((0, math.log(constants.g0)), (1, math.log(constants.g1))):
        contour = single_defect_contour(tiling, spin)
        est = estimate_I_gamma(contour, p, tiling, samples=samples, seed=seed + spin, threads=threads)
        log_w = est.log_estimate - contour.size * log_g
        weight = math.exp(min(log_w, 700.0))
        rel = est.standard_error / est.estimate if est.estimate > 0 else math.nan
        results[spin] = (weight / bd, weight * rel / bd, log_w)
    return FCorrections(results[0][0], results[1][0], results[0][1], results[1][1], results[0][2], results[1][2])


def truncated_pressure_estimate(p: QuermassParams, constants: Optional[PeierlsConstants] = None,
                                tiling: Optional[Tiling] = None, samples: int = 256, seed: int = 0,
                                corrections: Optional[FCorrections] = None) -> TruncatedPressure:
    """Order-0 pressures shifted by the single-defect corrections (experimental).

    Raises:
        NegativeCorrectionError: If a correction lowers either phase below order 0
    """
    base = truncated_pressure_order0(p, constants)
    corrections = corrections or estimate_f_corrections(p, constants, tiling, samples, seed)
    psi0 = base.psi0 + corrections.f0
    psi1 = base.psi1 + corrections.f1
    if not (psi0 >= base.psi0 and psi1 >= base.psi1):
        raise NegativeCorrectionError(f"Corrections f0 = {corrections.f0:.4g}, f1 = {corrections.f1:.4g} "
                                      "lower a truncated pressure below its order-0 value")
    return TruncatedPressure(1, base.s, psi0, psi1, experimental=True)
