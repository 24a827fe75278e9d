"""Threshold calibration to a target false-detection probability.

``solve_threshold`` inverts the closed-form FDP approximations;
``calibrate_mc`` runs a stochastic bisection on simulated FDP with common
random numbers, so the empirical FDP is monotone in the threshold within one
run.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import approx
from .core import (ChartKind, ChartSpec, CovarianceModel, EstimateWithError,
                   TransientScanError, UnsupportedKind)


class NoBracket(TransientScanError, ValueError):
    pass


class Nonconvergence(UserWarning):
    pass


_NO_FORMULA = {ChartKind.MOVING_EWMA, ChartKind.MC1, ChartKind.MEWMA_SOFT,
               ChartKind.MEWMA_HARD, ChartKind.MMA_HARD, ChartKind.MGLRT_HARD}

# kinds whose thresholds should come from simulation: no formula at all, or
# (MCUSUM) a formula that misses simulated FDP by a wide margin
MC_BY_DEFAULT = _NO_FORMULA | {ChartKind.MCUSUM}

THRESHOLD_MAX = 1e3


def solve_threshold(spec: ChartSpec, target_fdp: float, L: int,
                    convention: approx.OvershootConvention = approx.DEFAULT) -> float:
    """Threshold at which the closed-form FDP of ``spec`` equals ``target_fdp``.

    ``spec.threshold`` is ignored.  Several formulas are not monotone near
    zero (e.g. ``b * phi(b)`` rises before it falls), so the search scans a
    geometric grid downward from ``THRESHOLD_MAX`` and takes the largest
    crossing, which lies on the decreasing branch.
    """
    if spec.kind in _NO_FORMULA:
        raise UnsupportedKind(f"no closed-form FDP for {spec.kind}; use calibrate_mc")
    if not 1e-8 < target_fdp < 0.5:
        raise ValueError("target_fdp must lie in (1e-8, 0.5)")

    def gap(th: float) -> float:
        return approx.fdp(spec.replace(threshold=th), L, convention).raw - target_fdp

    grid = np.geomspace(THRESHOLD_MAX, 1e-6, 400)
    hi = grid[0]
    g_hi = gap(hi)
    if g_hi > 0:
        raise NoBracket(f"FDP stays above {target_fdp} up to threshold {THRESHOLD_MAX}")
    for lo in grid[1:]:
        g_lo = gap(lo)
        if g_lo > 0:
            return brentq(gap, lo, hi, xtol=1e-14, rtol=1e-12, maxiter=500)
        hi, g_hi = lo, g_lo
    raise NoBracket(f"FDP formula for {spec.kind} never reaches {target_fdp}")


@dataclass(frozen=True)
class Calibration:
    threshold: float
    estimate: EstimateWithError
    iterations: int
    converged: bool


def calibrate_mc(spec: ChartSpec, target_fdp: float, L: int,
                 sim_config, cov_model: CovarianceModel | None = None,
                 bracket: tuple[float, float] | None = None,
                 max_iter: int = 20) -> Calibration:
    """Stochastic bisection on the simulated FDP.

    With the default unconditional warm-up every candidate threshold is
    scored on one fixed set of simulated paths, so the bisection runs all
    ``max_iter`` steps (each is a count over stored maxima) and returns the
    candidate whose estimate is closest to the target.  ``converged`` means
    the target lies inside that estimate's 95% interval; otherwise a
    :class:`Nonconvergence` warning is issued.
    """
    from . import mc

    if not 0 < target_fdp < 1:
        raise ValueError("target_fdp must lie in (0, 1)")
    maxima = mc.PathMaxima.simulate(spec, L, sim_config, cov_model)

    lo, hi = bracket or maxima.threshold_bracket()
    best: tuple[float, EstimateWithError] | None = None
    it = 0
    for it in range(1, max_iter + 1):
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        est = maxima.fdp_at(mid)
        if best is None or abs(est.value - target_fdp) < abs(best[1].value - target_fdp):
            best = (mid, est)
        if est.value == target_fdp:
            break
        if est.value > target_fdp:
            lo = mid
        else:
            hi = mid
    threshold, est = best
    lo_ci, hi_ci = est.ci95()
    converged = lo_ci <= target_fdp <= hi_ci and est.value > 0
    if not converged:
        warnings.warn(f"calibration did not reach target {target_fdp} in {max_iter} steps",
                      Nonconvergence, stacklevel=2)
    return Calibration(threshold, est, it, converged)
