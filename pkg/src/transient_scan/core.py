"""Shared domain types, covariance handling and whitening.

Every multivariate chart in this package works on identity-covariance
("whitened") observations.  A :class:`CovarianceModel` carries the
lower-triangular factor ``W`` with ``W @ W.T == inv(sigma)``; whitening an
observation ``x`` means computing ``W.T @ x`` so that Mahalanobis norms become
Euclidean norms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class TransientScanError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(TransientScanError, ValueError):
    pass


class NotPositiveDefinite(TransientScanError, ValueError):
    pass


class Asymmetric(TransientScanError, ValueError):
    pass


class DomainError(TransientScanError, ValueError):
    pass


class UnsupportedKind(TransientScanError, ValueError):
    pass


class InvalidSpec(TransientScanError, ValueError):
    pass


class ChartKind(str, enum.Enum):
    EWMA = "ewma"
    MA = "ma"
    MOVING_EWMA = "moving-ewma"
    CUSUM = "cusum"
    WINDOWED_GLR = "wglr"
    MEWMA = "mewma"
    MMA = "mma"
    MCUSUM = "mcusum"
    MGLRT = "mglrt"
    MC1 = "mc1"
    MEWMA_SOFT = "mewma-soft"
    MEWMA_HARD = "mewma-hard"
    MMA_HARD = "mma-hard"
    MGLRT_HARD = "mglrt-hard"

    def __str__(self) -> str:
        return self.value


ONE_DIMENSIONAL = frozenset(
    {ChartKind.EWMA, ChartKind.MA, ChartKind.MOVING_EWMA, ChartKind.CUSUM,
     ChartKind.WINDOWED_GLR}
)
EWMA_FAMILY = frozenset(
    {ChartKind.EWMA, ChartKind.MOVING_EWMA, ChartKind.MEWMA,
     ChartKind.MEWMA_SOFT, ChartKind.MEWMA_HARD}
)
WINDOWED = frozenset(
    {ChartKind.MA, ChartKind.MOVING_EWMA, ChartKind.WINDOWED_GLR, ChartKind.MMA,
     ChartKind.MCUSUM, ChartKind.MGLRT, ChartKind.MMA_HARD, ChartKind.MGLRT_HARD}
)
CUSUM_FAMILY = frozenset({ChartKind.CUSUM, ChartKind.MC1})
THRESHOLD_VARIANTS = frozenset(
    {ChartKind.MEWMA_SOFT, ChartKind.MEWMA_HARD, ChartKind.MMA_HARD,
     ChartKind.MGLRT_HARD}
)

_REQUIRED: dict[ChartKind, tuple[str, ...]] = {
    ChartKind.EWMA: ("beta",),
    ChartKind.MA: ("window",),
    ChartKind.MOVING_EWMA: ("beta", "window"),
    ChartKind.CUSUM: ("ref_strength",),
    ChartKind.WINDOWED_GLR: ("window_lo", "window_hi"),
    ChartKind.MEWMA: ("beta",),
    ChartKind.MMA: ("window",),
    ChartKind.MCUSUM: ("window_lo", "window_hi", "ref_strength"),
    ChartKind.MGLRT: ("window_lo", "window_hi"),
    ChartKind.MC1: ("ref_strength",),
    ChartKind.MEWMA_SOFT: ("beta", "soft_p"),
    ChartKind.MEWMA_HARD: ("beta", "hard_cut"),
    ChartKind.MMA_HARD: ("window", "hard_cut"),
    ChartKind.MGLRT_HARD: ("window_lo", "window_hi", "hard_cut"),
}


@dataclass(frozen=True)
class ChartSpec:
    """Full parameterization of one chart instance.

    ``threshold`` is the kind's design constant, not the alarm level:

    ========================  ==========  ==============================
    kind                      threshold   alarm when statistic exceeds
    ========================  ==========  ==============================
    ewma                      b           b * sqrt(beta / (2 - beta))
    mewma                     b           b**2 * beta / (2 - beta)
    ma, moving-ewma, mma      h           h
    cusum, mcusum             d           d
    wglr                      b           b
    mglrt, mglrt-hard         b           b**2
    mc1                       h1          h1
    mewma-soft, mewma-hard,   level       level (already on the
    mma-hard                              truncated/weighted-sum scale)
    ========================  ==========  ==============================

    ``ref_strength`` is delta for cusum, ||delta|| for mcusum and k1 for mc1.
    Fields irrelevant to a kind are ignored.
    """

    kind: ChartKind
    threshold: float
    dimension: int = 1
    beta: float | None = None
    window: int | None = None
    window_lo: int | None = None
    window_hi: int | None = None
    ref_strength: float | None = None
    soft_p: float | None = None
    hard_cut: float | None = None
    mc1_cap: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ChartKind(self.kind))
        missing = [f for f in _REQUIRED[self.kind] if getattr(self, f) is None]
        if missing:
            raise InvalidSpec(f"{self.kind} chart requires {', '.join(missing)}")
        if self.dimension < 1:
            raise InvalidSpec("dimension must be a positive integer")
        if self.kind in ONE_DIMENSIONAL and self.dimension != 1:
            raise InvalidSpec(f"{self.kind} is a one-dimensional chart")
        if not self.threshold > 0 or not math.isfinite(self.threshold):
            raise InvalidSpec("threshold must be a positive finite real")
        if self.beta is not None and not 0 < self.beta < 1:
            raise InvalidSpec("beta must lie in (0, 1)")
        if self.window is not None and self.window < 1:
            raise InvalidSpec("window must be a positive integer")
        if self.kind in _REQUIRED and "window_lo" in _REQUIRED[self.kind]:
            if not 1 <= self.window_lo < self.window_hi:
                raise InvalidSpec("need 1 <= window_lo < window_hi")
        if self.ref_strength is not None and self.ref_strength < 0:
            raise InvalidSpec("ref_strength must be nonnegative")
        if self.soft_p is not None and not 0 < self.soft_p < 1:
            raise InvalidSpec("soft_p must lie in (0, 1)")
        if self.hard_cut is not None and self.hard_cut < 0:
            raise InvalidSpec("hard_cut must be nonnegative")

    def replace(self, **changes) -> ChartSpec:
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return ChartSpec(**fields)

    @property
    def alarm_level(self) -> float:
        """Alarm level on the statistic's natural scale."""
        k = self.kind
        if k is ChartKind.EWMA:
            return self.threshold * math.sqrt(self.beta / (2 - self.beta))
        if k is ChartKind.MEWMA:
            return self.threshold**2 * self.beta / (2 - self.beta)
        if k in (ChartKind.MGLRT, ChartKind.MGLRT_HARD):
            return self.threshold**2
        return self.threshold

    @property
    def first_alarm_step(self) -> int:
        """Smallest 1-based step index at which the chart may alarm."""
        k = self.kind
        if k in (ChartKind.MA, ChartKind.MOVING_EWMA):
            return self.window
        if k in (ChartKind.MMA, ChartKind.MMA_HARD):
            return self.window + 1
        if k in (ChartKind.WINDOWED_GLR, ChartKind.MCUSUM):
            return self.window_hi + 1
        if k in (ChartKind.MGLRT, ChartKind.MGLRT_HARD):
            return self.window_lo
        return 1

    @property
    def capacity(self) -> int:
        """Number of past observations a windowed chart must retain."""
        if self.kind in (ChartKind.MA, ChartKind.MOVING_EWMA, ChartKind.MMA,
                         ChartKind.MMA_HARD):
            return self.window
        if self.kind in WINDOWED:
            return self.window_hi
        return 0

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        for name in self.__dataclass_fields__:
            if name != "kind" and getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return out


@dataclass(frozen=True)
class ScenarioSpec:
    """Signal on steps ``change_time + 1 .. change_time + length``."""

    change_time: int
    length: int
    mean: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise InvalidSpec("mean must be a vector")
        object.__setattr__(self, "mean", mean)
        if self.length < 1:
            raise InvalidSpec("signal length must be >= 1")
        if self.change_time < 0:
            raise InvalidSpec("change_time must be nonnegative")

    @property
    def is_null(self) -> bool:
        return not np.any(self.mean)

    @classmethod
    def all_channels(cls, value: float, dimension: int, length: int,
                     change_time: int = 0) -> ScenarioSpec:
        return cls(change_time, length, np.full(dimension, float(value)))

    @classmethod
    def one_channel(cls, value: float, dimension: int, length: int,
                    change_time: int = 0) -> ScenarioSpec:
        mean = np.zeros(dimension)
        mean[0] = value
        return cls(change_time, length, mean)


# Squared Cholesky pivots below this fraction of the largest variance make the
# whitening contract (relative accuracy 1e-10) unattainable in float64.
PIVOT_FLOOR = 1e-6
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    sigma: np.ndarray
    whitener: np.ndarray
    jittered: bool = False
    identity: bool = False

    @property
    def dimension(self) -> int:
        return self.sigma.shape[0]

    def whiten(self, x) -> np.ndarray:
        return whiten(self, x)

    def whiten_rows(self, x) -> np.ndarray:
        """Whiten every row of a ``(..., N)`` array."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise DimensionMismatch(
                f"expected trailing dimension {self.dimension}, got {x.shape[-1]}")
        if self.identity:
            return x.copy()
        return x @ self.whitener

    def mahalanobis_sq(self, x) -> float:
        y = self.whiten(x)
        return float(y @ y)

    def eigen_summary(self) -> dict:
        ev = np.sort(np.linalg.eigvalsh(self.sigma))[::-1]
        return {
            "largest": float(ev[0]),
            "smallest": float(ev[-1]),
            "trace": float(ev.sum()),
            "eigenvalues": ev.tolist(),
        }


def identity_model(dimension: int) -> CovarianceModel:
    eye = np.eye(dimension)
    return CovarianceModel(eye, eye.copy(), identity=True)


def build_whitener(sigma) -> CovarianceModel:
    """Factor ``sigma`` and return a model whose whitener satisfies
    ``W @ W.T == inv(sigma)`` with ``W`` lower triangular.

    Raises Asymmetric if entries differ from their transposes by more than
    1e-9, NotPositiveDefinite if the Cholesky factorization fails or has a
    pivot too small for the whitening to be accurate.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] < 1:
        raise DimensionMismatch("sigma must be a square matrix")
    if np.max(np.abs(sigma - sigma.T)) > SYMMETRY_TOL:
        raise Asymmetric("covariance matrix is not symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    n = sigma.shape[0]
    if np.array_equal(sigma, np.eye(n)):
        return identity_model(n)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Cholesky factorization failed") from exc
    pivots = np.diag(chol) ** 2
    if pivots.min() <= PIVOT_FLOOR * np.max(np.diag(sigma)):
        raise NotPositiveDefinite(
            f"covariance is numerically singular (min pivot {pivots.min():.3g})")
    # inv(sigma) via triangular solves, then its own Cholesky factor
    eye = np.eye(n)
    linv = np.linalg.solve(chol, eye)
    precision = linv.T @ linv
    precision = 0.5 * (precision + precision.T)
    whitener = np.linalg.cholesky(precision)
    return CovarianceModel(sigma, whitener)


def whiten(model: CovarianceModel, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.dimension,):
        raise DimensionMismatch(
            f"expected a vector of length {model.dimension}, got shape {x.shape}")
    if model.identity:
        return x.copy()
    return model.whitener.T @ x


@dataclass(frozen=True)
class EstimateWithError:
    """Monte Carlo estimate with its standard error."""

    value: float
    std_error: float
    reps: int
    seed: int
    extra: dict = field(default_factory=dict, compare=False)

    @classmethod
    def proportion(cls, hits: int, reps: int, seed: int, **extra) -> EstimateWithError:
        p = hits / reps
        return cls(p, math.sqrt(p * (1 - p) / reps), reps, seed, extra)

    def ci95(self) -> tuple[float, float]:
        return self.value - 1.96 * self.std_error, self.value + 1.96 * self.std_error

    def within(self, target: float, n_se: float) -> bool:
        return abs(self.value - target) <= n_se * self.std_error

    def to_dict(self) -> dict:
        out = {"value": self.value, "std_error": self.std_error,
               "reps": self.reps, "seed": self.seed}
        out.update(self.extra)
        return out
