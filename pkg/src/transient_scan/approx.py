"""Closed-form false-detection (FDP) and power-of-detection (POD)
approximations, plus first-passage delay moments.

All functions here are pure.  FDP approximations are boundary-crossing
expansions with the overshoot correction ``nu``; POD approximations
come in two regimes: a *local* one for signals weaker than the chart's
crossing level (the FDP formula integrated along the signal-shifted boundary)
and a *normal-law* one for stronger signals (a Gaussian law for the
first-passage time with the stated mean and variance).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

from .core import ChartKind, ChartSpec, DomainError, UnsupportedKind

RHO_PLUS = 0.5826
SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class Overshoot(str, enum.Enum):
    EXPONENTIAL = "exponential"
    ACCURATE = "accurate"


class EwmaArg(str, enum.Enum):
    PLAIN = "plain"  # b * sqrt(2 beta)
    VARIANCE_MATCHED = "variance-matched"  # b * sqrt(2 beta / (2 - beta))


@dataclass(frozen=True)
class OvershootConvention:
    """How the overshoot factor is evaluated.

    ``ewma_arg=None`` picks the per-formula default: variance-matched for the
    one-dimensional EWMA, plain for MEWMA.
    """

    mode: Overshoot = Overshoot.EXPONENTIAL
    ewma_arg: EwmaArg | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Overshoot(self.mode))
        if self.ewma_arg is not None:
            object.__setattr__(self, "ewma_arg", EwmaArg(self.ewma_arg))


DEFAULT = OvershootConvention()


class Regime(str, enum.Enum):
    CLOSED_FORM = "closed-form"
    LOCAL_INTEGRAL = "local-integral"
    NORMAL_LAW = "normal-law"


@dataclass(frozen=True)
class ApproxResult:
    value: float
    regime: Regime
    warnings: tuple[str, ...] = ()
    raw: float = field(default=math.nan, compare=False)

    @classmethod
    def make(cls, raw: float, regime: Regime, warnings=()) -> ApproxResult:
        return cls(min(max(raw, 0.0), 1.0), regime, tuple(warnings), raw)


# -- scalar helpers ---------------------------------------------------------

def norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x - _LOG_SQRT_2PI)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / SQRT2)


def nu(x: float, convention: OvershootConvention = DEFAULT) -> float:
    """Overshoot correction factor for a boundary crossing, ``nu(0+) = 1``."""
    if not x > 0:
        raise DomainError(f"nu(x) needs x > 0, got {x}")
    if convention.mode is Overshoot.EXPONENTIAL:
        return math.exp(-RHO_PLUS * x)
    if x < 1e-8:
        return 1.0
    half = x / 2
    cdf = norm_cdf(half)
    return (2 / x) * (cdf - 0.5) / (half * cdf + norm_pdf(half))


def _log_nu(x: float, convention: OvershootConvention) -> float:
    if convention.mode is Overshoot.EXPONENTIAL:
        return -RHO_PLUS * x
    v = nu(x, convention)
    return math.log(v) if v > 0 else -math.inf


def _nu0(x: float, convention: OvershootConvention) -> float:
    # nu extended by continuity to x == 0
    return 1.0 if x <= 0 else nu(x, convention)


def _log_chi_tail(n: int, b: float) -> float:
    """log of (b^2/2)^(n/2) e^(-b^2/2) / Gamma(n/2)."""
    half_sq = 0.5 * b * b
    return 0.5 * n * math.log(half_sq) - half_sq - math.lgamma(0.5 * n)


# -- quadrature -------------------------------------------------------------

def integrate(f: Callable[[float], float], a: float, b: float,
              tol: float = 1e-10, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with absolute tolerance ``tol``."""
    if a == b:
        return 0.0
    if a > b:
        return -integrate(f, b, a, tol, max_depth)
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6 * (flo + 4 * flm + fmid)
        right = (hi - mid) / 6 * (fmid + 4 * frm + fhi)
        delta = left + right - est
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15
        else:
            stack.append((lo, mid, flo, flm, fmid, left, eps / 2, depth + 1))
            stack.append((mid, hi, fmid, frm, fhi, right, eps / 2, depth + 1))
    return total


def _integrate_to_infinity(f: Callable[[float], float], a: float,
                           tol: float = 1e-10, floor: float = 1e-16) -> float:
    """Integrate on ``[a, inf)`` by doubling panels until ``f`` < ``floor``."""
    total, lo = 0.0, a
    width = max(a, 1.0)
    while True:
        hi = lo + width
        total += integrate(f, lo, hi, tol)
        if abs(f(hi)) < floor or hi > 1e12:
            return total
        lo, width = hi, 2 * width


def _glr_window_integral(b: float, w_lo: int, w_hi: int,
                         convention: OvershootConvention) -> float:
    """Integral of u nu(u)^2 / 2 over [b/sqrt(w_hi), b/sqrt(w_lo)]."""
    return integrate(lambda u: 0.5 * u * _nu0(u, convention) ** 2,
                     b / math.sqrt(w_hi), b / math.sqrt(w_lo))


# -- FDP --------------------------------------------------------------------

def _ewma_arg_factor(beta: float, convention: OvershootConvention,
                     default: EwmaArg) -> float:
    arg = convention.ewma_arg or default
    if arg is EwmaArg.PLAIN:
        return math.sqrt(2 * beta)
    return math.sqrt(2 * beta / (2 - beta))


def fdp_1d(spec: ChartSpec, L: int, convention: OvershootConvention = DEFAULT,
           cusum_start: str = "stationary") -> ApproxResult:
    """FDP within ``L`` steps for a one-dimensional chart started at the
    controlled stationary state (or at zero, for ``cusum_start="zero"``)."""
    kind = spec.kind
    warns: list[str] = []
    if L <= 0:
        return ApproxResult.make(0.0, Regime.CLOSED_FORM)
    if kind is ChartKind.EWMA:
        b, beta = spec.threshold, spec.beta
        arg = b * _ewma_arg_factor(beta, convention, EwmaArg.VARIANCE_MATCHED)
        raw = L * beta * b * norm_pdf(b) * nu(arg, convention)
        if beta * L < 1:
            warns.append("beta*L not large")
    elif kind is ChartKind.MA:
        h, w = spec.threshold, spec.window
        raw = L * h / math.sqrt(w) * norm_pdf(h * math.sqrt(w)) * nu(SQRT2 * h, convention)
        if L < w:
            warns.append("L < w")
    elif kind is ChartKind.WINDOWED_GLR:
        b = spec.threshold
        raw = L * b * norm_pdf(b) * _glr_window_integral(
            b, spec.window_lo, spec.window_hi, convention)
    elif kind is ChartKind.CUSUM:
        delta, d = spec.ref_strength, spec.threshold
        if delta <= 0:
            raise DomainError("CUSUM FDP needs a positive reference value")
        shift = d + 2 * RHO_PLUS
        if cusum_start == "zero":
            raw = (delta * (delta * L / 2 - shift) + 3) * math.exp(-delta * shift)
            if delta * L / 2 <= d:
                warns.append("delta*L/2 <= d")
        elif cusum_start == "stationary":
            raw = L * delta**2 / 2 * math.exp(-delta * shift)
            if L * math.exp(-delta * d) > 0.1:
                warns.append("L*exp(-delta*d) not small")
        else:
            raise ValueError(f"unknown cusum_start {cusum_start!r}")
    elif kind is ChartKind.MOVING_EWMA:
        raise UnsupportedKind("no closed-form FDP for the moving-EWMA chart; "
                              "calibrate it by Monte Carlo")
    else:
        raise UnsupportedKind(f"{kind} is not a one-dimensional chart")
    return ApproxResult.make(raw, Regime.CLOSED_FORM, warns)


def fdp_glr_unwindowed(b: float, m: int,
                       convention: OvershootConvention = DEFAULT) -> ApproxResult:
    """Probability that the unwindowed GLR chart alarms by step ``m`` from
    a zero start, with ``c = m / b^2``."""
    if m <= 0:
        return ApproxResult.make(0.0, Regime.CLOSED_FORM)
    c = m / b**2
    lo = 1 / math.sqrt(c)
    first = _integrate_to_infinity(lambda x: x * nu(x, convention) ** 2, lo)
    second = _integrate_to_infinity(lambda x: nu(x, convention) ** 2 / x, lo)
    raw = m * b * norm_pdf(b) * (first - second / c)
    return ApproxResult.make(raw, Regime.CLOSED_FORM)


def fdp_mv(spec: ChartSpec, L: int,
           convention: OvershootConvention = DEFAULT) -> ApproxResult:
    """FDP within ``L`` steps for a multivariate chart on whitened data."""
    kind = spec.kind
    n = spec.dimension
    warns: list[str] = []
    if L <= 0:
        return ApproxResult.make(0.0, Regime.CLOSED_FORM)
    if kind is ChartKind.MMA:
        w = spec.window
        b = spec.threshold * math.sqrt(w)
        log_raw = (math.log(2 * L / w) + _log_chi_tail(n, b)
                   + _log_nu(b * math.sqrt(2 / w), convention))
        if n / b**2 > 0.5:
            warns.append("N/b^2 not small")
    elif kind is ChartKind.MEWMA:
        b, beta = spec.threshold, spec.beta
        arg = b * _ewma_arg_factor(beta, convention, EwmaArg.PLAIN)
        log_raw = (math.log(2 * L * beta) + _log_chi_tail(n, b)
                   + _log_nu(arg, convention))
        if n / b**2 > 0.5:
            warns.append("N/b^2 not small")
        if beta * b**2 / n > 0.5:
            warns.append("beta*b^2/N not small")
    elif kind is ChartKind.MGLRT:
        b = spec.threshold
        integral = _glr_window_integral(b, spec.window_lo, spec.window_hi, convention)
        log_raw = math.log(2 * L) + _log_chi_tail(n, b) + math.log(integral)
        if math.log(L) / b**2 > 0.25:
            warns.append("ln(L)/b^2 not small")
    elif kind is ChartKind.MCUSUM:
        delta, d = spec.ref_strength, spec.threshold
        if delta <= 0:
            raise DomainError("MCUSUM FDP needs a positive reference strength")
        if n == 1:
            # Gamma(e/2)/Gamma(e) -> 2 as e -> 0
            log_gamma_ratio = math.log(2.0)
        else:
            log_gamma_ratio = math.lgamma((n - 1) / 2) - math.lgamma(n - 1)
        log_raw = (math.log(L * delta**2 / 2) + (n - 1) / 2 * math.log(4 * delta * d)
                   + log_gamma_ratio - delta * (d + 2 * RHO_PLUS))
        if not d / spec.window_hi < delta / 2 < d / spec.window_lo:
            warns.append("d/w1 < ||delta||/2 < d/w0 violated")
        if L * math.exp(-delta * d) > 0.1:
            warns.append("L*exp(-||delta||*d) not small")
    else:
        raise UnsupportedKind(f"no closed-form FDP for {kind}; calibrate by Monte Carlo")
    return ApproxResult.make(math.exp(log_raw), Regime.CLOSED_FORM, warns)


def fdp(spec: ChartSpec, L: int, convention: OvershootConvention = DEFAULT) -> ApproxResult:
    if spec.kind in (ChartKind.EWMA, ChartKind.MA, ChartKind.WINDOWED_GLR,
                     ChartKind.CUSUM, ChartKind.MOVING_EWMA):
        return fdp_1d(spec, L, convention)
    return fdp_mv(spec, L, convention)


# -- delay moments ----------------------------------------------------------

def crossing_level(spec: ChartSpec) -> float:
    """Signal strength above which the normal-law regime applies."""
    kind = spec.kind
    if kind in (ChartKind.EWMA, ChartKind.MEWMA):
        return spec.threshold * math.sqrt(spec.beta / (2 - spec.beta))
    if kind in (ChartKind.MA, ChartKind.MMA):
        return spec.threshold
    if kind in (ChartKind.CUSUM, ChartKind.MCUSUM):
        return spec.ref_strength / 2
    if kind in (ChartKind.WINDOWED_GLR, ChartKind.MGLRT):
        return 0.0
    raise UnsupportedKind(f"no delay approximation for {kind}")


def _moments(spec: ChartSpec, mu: float) -> tuple[float, float]:
    kind = spec.kind
    n = spec.dimension
    h = crossing_level(spec)
    if kind is ChartKind.EWMA:
        beta, gap = spec.beta, mu - h
        return (-math.log(1 - h / mu) / beta + 1 / (4 * gap**2),
                1 / (2 * beta * gap**2))
    if kind is ChartKind.MEWMA:
        beta, gap = spec.beta, mu - h
        mean = (-math.log(1 - h / mu) / beta + mu / (4 * h * gap**2)
                - n / (4 * h * gap))
        return mean, 1 / (2 * beta * gap**2)
    if kind is ChartKind.MA:
        w = spec.window
        return h * w / mu, w / mu**2
    if kind is ChartKind.MMA:
        w = spec.window
        return h * w / mu - (n - 1) / (2 * h * mu), w / mu**2
    if kind is ChartKind.CUSUM:
        d, gap = spec.threshold, mu - h
        return d / gap + 1 / (2 * gap**2), d / gap**3
    if kind is ChartKind.MCUSUM:
        d, gap = spec.threshold, mu - h
        return (d / gap + 1 / (2 * gap**2) - (n - 1) / (2 * mu * gap),
                d / gap**3)
    if kind is ChartKind.WINDOWED_GLR:
        b = spec.threshold
        return (b**2 + 1) / mu**2, 4 * b**2 / mu**4
    if kind is ChartKind.MGLRT:
        b = spec.threshold
        return (b**2 + n) / mu**2 + 2, 4 * b**2 / mu**4
    raise UnsupportedKind(f"no delay approximation for {kind}")


def delay_moments(spec: ChartSpec, mu_strength: float) -> tuple[float, float]:
    """Approximate mean and variance of the detection delay under a
    persistent signal of strength ``mu_strength``."""
    level = crossing_level(spec)
    if not mu_strength > level:
        raise DomainError(
            f"signal strength {mu_strength} not above crossing level {level:.6g}")
    mean, var = _moments(spec, mu_strength)
    if not (mean > 0 and var > 0):
        raise DomainError("delay moments are not positive at this strength")
    return mean, var


# -- POD --------------------------------------------------------------------

def corrected_threshold(spec: ChartSpec) -> ChartSpec:
    """Continuous-boundary correction: b + rho sqrt(2 beta) for EWMA,
    h + sqrt(2) rho / w for MA."""
    if spec.kind is ChartKind.EWMA:
        return spec.replace(threshold=spec.threshold + RHO_PLUS * math.sqrt(2 * spec.beta))
    if spec.kind is ChartKind.MA:
        return spec.replace(threshold=spec.threshold + SQRT2 * RHO_PLUS / spec.window)
    raise UnsupportedKind(f"no boundary correction defined for {spec.kind}")


def _local_ewma(spec: ChartSpec, delta: float, L: int,
                convention: OvershootConvention) -> float:
    b, beta = spec.threshold, spec.beta
    scale = math.sqrt(beta / (2 - beta))
    factor = _ewma_arg_factor(beta, convention, EwmaArg.VARIANCE_MATCHED)
    total = 0.0
    for k in range(1, L + 1):
        bk = b - (1 - (1 - beta) ** k) * delta / scale
        total += beta * bk * norm_pdf(bk) * _nu0(bk * factor, convention)
    return total


def _local_ma(spec: ChartSpec, delta: float, L: int,
              convention: OvershootConvention) -> float:
    h, w = spec.threshold, spec.window
    rw = math.sqrt(w)

    def g(v: float) -> float:
        return rw * v * norm_pdf(rw * v) * _nu0(SQRT2 * v, convention)

    span = L / w
    if span <= 1:
        return integrate(lambda u: g(h - u * delta), 0.0, span)
    return integrate(lambda u: g(h - u * delta), 0.0, 1.0) + (span - 1) * g(h - delta)


def _local_mewma(spec: ChartSpec, delta: float, L: int,
                 convention: OvershootConvention) -> float:
    b, beta, n = spec.threshold, spec.beta, spec.dimension
    factor = _ewma_arg_factor(beta, convention, EwmaArg.PLAIN)
    inv_var = (2 - beta) / beta

    def f(s: float) -> float:
        bs = math.sqrt(b * b - (1 - math.exp(-s)) ** 2 * delta**2 * inv_var)
        return 2 * math.exp(_log_chi_tail(n, bs)) * _nu0(bs * factor, convention)

    return integrate(f, 0.0, L * beta)


def _local_mma(spec: ChartSpec, delta: float, L: int,
               convention: OvershootConvention) -> float:
    h, w, n = spec.threshold, spec.window, spec.dimension
    rw = math.sqrt(w)

    def f(t: float) -> float:
        ht = math.sqrt(h * h - delta**2 * min(t * t, 1.0))
        return 2 * math.exp(_log_chi_tail(n, ht * rw)) * _nu0(SQRT2 * ht, convention)

    span = L / w
    if span <= 1:
        return integrate(f, 0.0, span)
    return integrate(f, 0.0, 1.0) + (span - 1) * f(1.0)


def _tail_range_ok(spec: ChartSpec, delta: float) -> bool:
    """The local intensities are tail expansions; they stop growing as the
    signal strengthens once the smallest effective boundary passes the
    intensity's peak (1 for the normal tail, sqrt(N) for chi)."""
    kind = spec.kind
    if kind is ChartKind.EWMA:
        scale = math.sqrt(spec.beta / (2 - spec.beta))
        return spec.threshold - delta / scale >= 1
    if kind is ChartKind.MA:
        return math.sqrt(spec.window) * (spec.threshold - delta) >= 1
    if kind is ChartKind.MEWMA:
        beta = spec.beta
        return spec.threshold**2 - delta**2 * (2 - beta) / beta >= spec.dimension
    if kind is ChartKind.MMA:
        return spec.window * (spec.threshold**2 - delta**2) >= spec.dimension
    return True


_LOCAL = {
    ChartKind.EWMA: _local_ewma,
    ChartKind.MA: _local_ma,
    ChartKind.MEWMA: _local_mewma,
    ChartKind.MMA: _local_mma,
}


def _validity(spec: ChartSpec, mu: float) -> list[str]:
    kind = spec.kind
    if kind in (ChartKind.WINDOWED_GLR, ChartKind.MGLRT):
        b = spec.threshold
        if not b / math.sqrt(spec.window_hi) < mu < b / math.sqrt(spec.window_lo):
            return ["b/sqrt(w1) < mu < b/sqrt(w0) violated"]
    if kind is ChartKind.MCUSUM:
        gap, d = mu - spec.ref_strength / 2, spec.threshold
        if not d / spec.window_hi < gap < d / spec.window_lo:
            return ["d/w1 < mu - delta/2 < d/w0 violated"]
    return []


def pod_approx(spec: ChartSpec, mu_strength: float, L: int,
               convention: OvershootConvention = DEFAULT,
               corrected: bool = False, poissonize: bool = False) -> ApproxResult:
    """POD within ``L`` steps for a signal of strength ``mu_strength``
    (``||mu||`` in whitened units for multivariate charts).

    Signals below the chart's crossing level use the local expansion, which
    reduces to the FDP formula at zero strength; ``poissonize`` maps its
    intensity ``s`` to ``1 - exp(-s)``.  Stronger signals use the normal law
    ``Phi((L - E[delay]) / sd[delay])``.
    """
    if mu_strength < 0:
        raise DomainError("signal strength must be nonnegative")
    if corrected:
        spec = corrected_threshold(spec)
    if mu_strength == 0:
        return fdp(spec, L, convention)
    level = crossing_level(spec)
    warns = _validity(spec, mu_strength)
    local = _LOCAL.get(spec.kind)
    if local is not None and mu_strength <= level:
        if mu_strength == level:
            warns.append("strength equals crossing level; normal law undefined")
        if not _tail_range_ok(spec, mu_strength):
            warns.append("boundary near intensity peak; local expansion not monotone")
        raw = local(spec, mu_strength, L, convention)
        if poissonize:
            raw = 1 - math.exp(-raw)
        return ApproxResult.make(raw, Regime.LOCAL_INTEGRAL, warns)
    if mu_strength <= level:
        raise DomainError(
            f"{spec.kind} POD approximation needs strength above {level:.6g}")
    if level > 0 and mu_strength < 1.25 * level:
        warns.append("strength within 25% of crossing level")
    mean, var = _moments(spec, mu_strength)
    raw = norm_cdf((L - mean) / math.sqrt(var))
    return ApproxResult.make(raw, Regime.NORMAL_LAW, warns)
