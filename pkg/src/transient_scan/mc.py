"""Stationary-start Monte Carlo estimation of FDP, POD and conditional delay.

Replications are simulated in fixed-size blocks.  Block ``k`` draws from its
own generator seeded by ``SeedSequence(seed, spawn_key=(k,))``, so results
depend only on ``(seed, reps)`` and never on how blocks are spread across
worker processes.

Noise is drawn time-major and read backwards, so the last steps of a path
(the monitoring window and the most recent warm-up) use the same draws
whatever the warm-up length.  All signal strengths of a grid reuse the same
noise; a zero signal therefore reproduces the FDP estimate exactly.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from . import approx
from .core import (ChartKind, ChartSpec, CovarianceModel, EstimateWithError, EWMA_FAMILY,
                   InvalidSpec, TransientScanError, WINDOWED,
                   identity_model)
from .mv_charts import Hard, spec_mode, threshold_stat
from .reference_tables import TABLES, T2_APPROX, table2_spec

BLOCK = 1024
MIN_TABLE_REPS = 1000
SEED_MAX = 2**64 - 1


class UnknownTable(TransientScanError, KeyError):
    pass


class WarmUp(str, enum.Enum):
    UNCONDITIONAL = "unconditional"  # alarms during burn-in are ignored
    REJECT = "reject"  # paths alarming during burn-in are redrawn
    CUSUM_ANALYTIC = "cusum-analytic"  # CUSUM only: draw the level from its stationary law


@dataclass(frozen=True)
class SimConfig:
    """``burn_in=None`` selects the automatic length for the chart kind."""

    reps: int = 20_000
    seed: int = 0
    burn_in: int | None = None
    workers: int = 1
    warmup: WarmUp = WarmUp.UNCONDITIONAL

    def __post_init__(self):
        object.__setattr__(self, "warmup", WarmUp(self.warmup))
        if int(self.reps) != self.reps or self.reps < 1:
            raise ValueError("reps must be a positive integer")
        if self.workers < 1:
            raise ValueError("workers must be a positive integer")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if not 0 <= self.seed <= SEED_MAX:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {"reps": self.reps, "seed": self.seed,
                "burn_in": "auto" if self.burn_in is None else self.burn_in,
                "workers": self.workers, "warmup": self.warmup.value}


def auto_burn_in(spec: ChartSpec) -> int:
    kind = spec.kind
    steps = 0
    if kind in EWMA_FAMILY:
        steps = math.ceil(math.log(1e-4) / math.log(1 - spec.beta))
    if kind in WINDOWED:
        steps = max(steps, spec.capacity)
    if kind in (ChartKind.CUSUM, ChartKind.MC1):
        steps = max(math.ceil(10 * spec.threshold / spec.ref_strength), 500)
    return steps


def resolve_burn_in(spec: ChartSpec, config: SimConfig) -> int:
    if config.burn_in is not None:
        return config.burn_in
    if config.warmup is WarmUp.CUSUM_ANALYTIC:
        return 0
    return auto_burn_in(spec)


def threshold_from_level(spec: ChartSpec, level: float) -> float:
    """Inverse of ``ChartSpec.alarm_level`` in the threshold argument."""
    kind = spec.kind
    if kind is ChartKind.EWMA:
        return level / math.sqrt(spec.beta / (2 - spec.beta))
    if kind is ChartKind.MEWMA:
        return math.sqrt(level * (2 - spec.beta) / spec.beta)
    if kind in (ChartKind.MGLRT, ChartKind.MGLRT_HARD):
        return math.sqrt(level)
    return level


# -- batch statistics -------------------------------------------------------

def _window_sums(csum: np.ndarray, w: int) -> np.ndarray:
    n, t1, dim = csum.shape
    out = np.full((n, t1 - 1, dim), np.nan)
    out[:, w - 1:] = csum[:, w:] - csum[:, : t1 - w]
    return out


def statistic_paths(spec: ChartSpec, X: np.ndarray, level0: np.ndarray | None = None
                    ) -> np.ndarray:
    """Decision statistic at every step for a batch of whitened paths.

    ``X`` has shape ``(n, T, N)``; the result has shape ``(n, T)`` with NaN
    where the statistic is not yet defined.  Matches the streaming charts
    step for step.  ``level0`` optionally sets the initial CUSUM level.
    """
    kind = spec.kind
    n, T, dim = X.shape
    out = np.full((n, T), np.nan)

    if kind in EWMA_FAMILY:
        beta = spec.beta
        Y = lfilter([beta], [1.0, -(1 - beta)], X, axis=1)
        if kind is ChartKind.EWMA:
            return Y[..., 0]
        if kind is ChartKind.MOVING_EWMA:
            w = spec.window
            decay = (1 - beta) ** w
            Yw = Y[..., 0].copy()
            Yw[:, w:] -= decay * Y[:, :-w, 0]
            out[:, w - 1:] = Yw[:, w - 1:] / (1 - decay)
            return out
        mode = spec_mode(spec)
        return np.sum(Y * Y, axis=-1) if mode is None else threshold_stat(Y, mode)

    if kind is ChartKind.CUSUM:
        y = np.zeros(n) if level0 is None else level0.astype(float)
        half = spec.ref_strength / 2
        for t in range(T):
            y = np.maximum(0.0, y + X[:, t, 0] - half)
            out[:, t] = y
        return out

    if kind is ChartKind.MC1:
        return _mc1_paths(spec, X)

    csum = np.zeros((n, T + 1, dim))
    np.cumsum(X, axis=1, out=csum[:, 1:])

    if kind in (ChartKind.MA, ChartKind.MMA, ChartKind.MMA_HARD):
        mean = _window_sums(csum, spec.window) / spec.window
        if kind is ChartKind.MA:
            return mean[..., 0]
        if kind is ChartKind.MMA:
            return np.sqrt(np.sum(mean * mean, axis=-1))
        out[:, spec.window - 1:] = threshold_stat(mean[:, spec.window - 1:], Hard(spec.hard_cut))
        return out

    if kind is ChartKind.WINDOWED_GLR:
        start = spec.window_hi - 2
        best = np.full((n, T - start), -np.inf)
        for w in range(spec.window_lo, spec.window_hi):
            s = _window_sums(csum, w)[:, start:, 0] / math.sqrt(w)
            np.maximum(best, s, out=best)
        out[:, start:] = best
        return out

    if kind in (ChartKind.MGLRT, ChartKind.MGLRT_HARD):
        start = spec.window_lo - 1
        best = np.full((n, T), -np.inf)
        for w in range(spec.window_lo, spec.window_hi):
            s = _window_sums(csum, w)
            if kind is ChartKind.MGLRT:
                val = np.sum(s * s, axis=-1) / w
            else:
                val = w * threshold_stat(s / w, Hard(spec.hard_cut))
            np.fmax(best, val, out=best)
        out[:, start:] = best[:, start:]
        return out

    if kind is ChartKind.MCUSUM:
        start = spec.window_hi - 1
        best = np.full((n, T - start), -np.inf)
        for w in range(spec.window_lo + 1, spec.window_hi + 1):
            s = _window_sums(csum, w)[:, start:]
            val = np.sqrt(np.sum(s * s, axis=-1)) - w * spec.ref_strength / 2
            np.maximum(best, val, out=best)
        out[:, start:] = best
        return out

    raise InvalidSpec(f"no batch kernel for {kind}")


def _mc1_paths(spec: ChartSpec, X: np.ndarray) -> np.ndarray:
    n, T, dim = X.shape
    out = np.empty((n, T))
    run = np.zeros((n, dim))
    anchor = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    half = spec.ref_strength / 2
    cap = spec.mc1_cap
    for t in range(1, T + 1):
        run += X[:, t - 1]
        if cap is not None:
            over = (t - anchor) > cap
            if over.any():
                run[over] -= X[rows[over], anchor[over]]
                anchor[over] += 1
        stat = np.maximum(0.0, np.sqrt(np.sum(run * run, axis=1)) - half * (t - anchor))
        reset = stat == 0.0
        anchor[reset] = t
        run[reset] = 0.0
        out[:, t - 1] = stat
    return out


def alarm_matrix(spec: ChartSpec, stats: np.ndarray) -> np.ndarray:
    steps = np.arange(1, stats.shape[1] + 1)
    with np.errstate(invalid="ignore"):
        return (steps >= spec.first_alarm_step) & (stats > spec.alarm_level)


def sample_correlated(model: CovarianceModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` raw-domain draws from N(0, sigma), shape ``(size, N)``."""
    z = rng.standard_normal((size, model.dimension))
    if model.identity:
        return z
    return z @ np.linalg.cholesky(model.sigma).T


# -- block simulation -------------------------------------------------------

def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _block_sizes(reps: int) -> list[int]:
    full, rest = divmod(reps, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


def _draw(rng: np.random.Generator, n: int, T: int, dim: int) -> np.ndarray:
    z = rng.standard_normal((T, n, dim))
    return np.ascontiguousarray(z[::-1].transpose(1, 0, 2))


def _initial_level(spec: ChartSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    delta = spec.ref_strength
    at_zero = rng.random(n) < 1 - math.exp(-approx.RHO_PLUS * delta)
    excess = rng.exponential(1 / delta, n)
    return np.where(at_zero, 0.0, excess)


@dataclass(frozen=True)
class _Job:
    spec: ChartSpec
    burn: int
    L: int
    signals: np.ndarray  # (k, N) whitened means
    seed: int
    block: int
    n: int
    warmup: WarmUp


def _simulate_block(job: _Job) -> np.ndarray:
    """First alarm step within the monitoring window (0 if none), one row
    per signal, shape ``(k, n)``."""
    spec, L, T = job.spec, job.L, job.burn + job.L
    rng = _block_rng(job.seed, job.block)
    k = len(job.signals)
    result = np.zeros((k, job.n), dtype=np.int64)
    pending = np.arange(job.n)
    while len(pending):
        m = len(pending)
        level0 = _initial_level(spec, rng, m) if job.warmup is WarmUp.CUSUM_ANALYTIC else None
        noise = _draw(rng, m, T, spec.dimension)
        keep = np.ones(m, dtype=bool)
        for j, mu in enumerate(job.signals):
            X = noise
            if np.any(mu):
                X = noise.copy()
                X[:, T - L:] += mu
            alarms = alarm_matrix(spec, statistic_paths(spec, X, level0))
            if j == 0 and job.warmup is WarmUp.REJECT:
                # the warm-up carries no signal, so one check serves every row
                keep = ~alarms[:, : T - L].any(axis=1)
            window = alarms[:, T - L:]
            first = np.where(window.any(axis=1), window.argmax(axis=1) + 1, 0)
            result[j, pending[keep]] = first[keep]
        pending = pending[~keep]
    return result


def _run_jobs(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _first_alarms(spec: ChartSpec, L: int, signals: np.ndarray, config: SimConfig,
                  extra_burn: int = 0) -> np.ndarray:
    if config.warmup is WarmUp.CUSUM_ANALYTIC and spec.kind is not ChartKind.CUSUM:
        raise InvalidSpec("the analytic warm-up is defined for the CUSUM chart only")
    if L < 1:
        raise ValueError("L must be a positive integer")
    burn = resolve_burn_in(spec, config) + extra_burn
    jobs = [_Job(spec, burn, L, signals, config.seed, b, n, config.warmup)
            for b, n in enumerate(_block_sizes(config.reps))]
    return np.concatenate(_run_jobs(_simulate_block, jobs, config.workers), axis=1)


def _whitened_signals(spec: ChartSpec, means, cov_model: CovarianceModel | None) -> np.ndarray:
    model = cov_model or identity_model(spec.dimension)
    if model.dimension != spec.dimension:
        raise InvalidSpec("covariance dimension does not match the chart")
    return np.array([model.whiten(np.atleast_1d(np.asarray(m, dtype=float))) for m in means])


# -- public estimators ------------------------------------------------------

def estimate_fdp(spec: ChartSpec, L: int, cov_model: CovarianceModel | None = None,
                 config: SimConfig = SimConfig()) -> EstimateWithError:
    """Fraction of replications alarming within ``L`` steps of a null
    stream started at the controlled stationary state."""
    first = _first_alarms(spec, L, np.zeros((1, spec.dimension)), config)[0]
    return EstimateWithError.proportion(int(np.count_nonzero(first)), config.reps, config.seed)


def _delay_estimate(first: np.ndarray, seed: int) -> EstimateWithError:
    hit = first[first > 0]
    k = len(hit)
    if k == 0:
        return EstimateWithError(math.nan, math.nan, 0, seed, {"detected": 0})
    se = float(np.std(hit, ddof=1) / math.sqrt(k)) if k > 1 else math.nan
    return EstimateWithError(float(hit.mean()), se, k, seed, {"detected": k})


def estimate_pod_grid(spec: ChartSpec, means, L: int, cov_model: CovarianceModel | None = None,
                      config: SimConfig = SimConfig(), change_time: int = 0
                      ) -> list[tuple[EstimateWithError, EstimateWithError]]:
    """POD and conditional delay for several raw-domain mean vectors on one
    shared set of noise paths."""
    signals = _whitened_signals(spec, means, cov_model)
    firsts = _first_alarms(spec, L, signals, config, extra_burn=change_time)
    out = []
    for first in firsts:
        pod = EstimateWithError.proportion(int(np.count_nonzero(first)), config.reps, config.seed)
        out.append((pod, _delay_estimate(first, config.seed)))
    return out


def estimate_pod(spec: ChartSpec, scenario, cov_model: CovarianceModel | None = None,
                 config: SimConfig = SimConfig()
                 ) -> tuple[EstimateWithError, EstimateWithError]:
    """POD within the signal interval of ``scenario`` and the mean detection
    delay ``tau - nu`` over detecting replications."""
    if len(scenario.mean) != spec.dimension:
        raise InvalidSpec("scenario mean length does not match the chart dimension")
    return estimate_pod_grid(spec, [scenario.mean], scenario.length, cov_model, config,
                             scenario.change_time)[0]


# -- common-random-number maxima for calibration ----------------------------

def _maxima_block(job: _Job) -> np.ndarray:
    spec, L, T = job.spec, job.L, job.burn + job.L
    rng = _block_rng(job.seed, job.block)
    level0 = _initial_level(spec, rng, job.n) if job.warmup is WarmUp.CUSUM_ANALYTIC else None
    stats = statistic_paths(spec, _draw(rng, job.n, T, spec.dimension), level0)
    steps = np.arange(1, T + 1)
    stats = np.where(steps >= spec.first_alarm_step, stats, -np.inf)
    stats = np.nan_to_num(stats, nan=-np.inf)
    mon = stats[:, T - L:].max(axis=1)
    burn = stats[:, : T - L].max(axis=1) if T > L else np.full(job.n, -np.inf)
    return np.stack([mon, burn])


@dataclass(frozen=True)
class PathMaxima:
    """Per-replication maxima of the null statistic over the warm-up and the
    monitoring window; FDP at any threshold follows without resimulating."""

    spec: ChartSpec
    monitor: np.ndarray
    warmup: np.ndarray
    reject: bool
    seed: int = 0
    config: dict = field(default_factory=dict, compare=False)

    @classmethod
    def simulate(cls, spec: ChartSpec, L: int, config: SimConfig,
                 cov_model: CovarianceModel | None = None) -> PathMaxima:
        # the null law in whitened coordinates does not depend on sigma
        del cov_model
        if config.warmup is WarmUp.CUSUM_ANALYTIC and spec.kind is not ChartKind.CUSUM:
            raise InvalidSpec("the analytic warm-up is defined for the CUSUM chart only")
        burn = resolve_burn_in(spec, config)
        jobs = [_Job(spec, burn, L, np.zeros((1, spec.dimension)), config.seed, b, n,
                     config.warmup) for b, n in enumerate(_block_sizes(config.reps))]
        both = np.concatenate(_run_jobs(_maxima_block, jobs, config.workers), axis=1)
        return cls(spec, both[0], both[1], config.warmup is WarmUp.REJECT, config.seed,
                   config.to_dict())

    def fdp_at(self, threshold: float) -> EstimateWithError:
        level = self.spec.replace(threshold=threshold).alarm_level
        hits = self.monitor > level
        if self.reject:
            kept = self.warmup <= level
            n = int(np.count_nonzero(kept))
            if n == 0:
                return EstimateWithError(1.0, 0.0, 0, self.seed)
            return EstimateWithError.proportion(int(np.count_nonzero(hits & kept)), n, self.seed)
        return EstimateWithError.proportion(int(np.count_nonzero(hits)), len(hits), self.seed)

    def threshold_bracket(self) -> tuple[float, float]:
        finite = self.monitor[np.isfinite(self.monitor)]
        top = float(finite.max()) if len(finite) else 1.0
        mid = float(np.median(finite)) if len(finite) else 1.0
        lo_level = max(mid, 1e-9)
        hi_level = max(top, lo_level) * 1.0001 + 1e-9
        return threshold_from_level(self.spec, lo_level), threshold_from_level(self.spec, hi_level)


# -- table reproduction -----------------------------------------------------

@dataclass(frozen=True)
class TableRow:
    table: str
    design: str
    L: int
    strength: float
    estimate: float
    std_error: float
    published: float | None
    approximation: float | None = None
    published_approximation: float | None = None
    delay: float | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _mean_vector(pattern: str, dim: int, mu: float) -> np.ndarray:
    if pattern == "one":
        v = np.zeros(dim)
        v[0] = mu
        return v
    return np.full(dim, mu)


def reproduce_table(table_id: str, config: SimConfig = SimConfig(),
                    designs: list[str] | None = None, horizons: list[int] | None = None,
                    progress=None) -> list[TableRow]:
    """Simulate every cell of a stored comparison table.

    ``designs`` and ``horizons`` restrict the work to a subset of columns and
    signal lengths.  ``progress`` is called with a short message per design.
    """
    if config.reps < MIN_TABLE_REPS:
        raise ValueError(f"table reproduction needs at least {MIN_TABLE_REPS} replications")
    key = str(table_id).lower()
    if key not in TABLES:
        raise UnknownTable(f"unknown table {table_id!r}; choose from {', '.join(TABLES)}")
    table = TABLES[key]
    rows: list[TableRow] = []
    names = [d.name for d in table.designs if designs is None or d.name in designs]

    if key == "t2":
        for name in names:
            for b in table.strengths:
                spec = table2_spec(name, b)
                if progress:
                    progress(f"{key} {name} b={b}")
                est = estimate_fdp(spec, 20, None, config)
                rows.append(TableRow(key, name, 20, b, est.value, est.std_error,
                                     table.values[(name, 20, b)],
                                     approx.fdp_mv(spec, 20).value,
                                     T2_APPROX[(name, 20, b)]))
        return rows

    for name in names:
        design = table.design(name)
        spec = design.spec
        for L in table.horizons:
            if horizons is not None and L not in horizons:
                continue
            mus = [mu for mu in table.strengths if (name, L, mu) in table.values]
            if progress:
                progress(f"{key} {name} L={L}")
            means = [_mean_vector(table.pattern, spec.dimension, mu) for mu in mus]
            results = estimate_pod_grid(spec, means, L, None, config)
            for mu, (pod, delay) in zip(mus, results):
                rows.append(TableRow(key, name, L, mu, pod.value, pod.std_error,
                                     table.values[(name, L, mu)], delay=delay.value))
    return rows
