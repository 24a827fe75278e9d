"""Streaming multivariate charts on whitened observations.

Kinds: MEWMA, MMA, windowed MCUSUM, windowed GLRT, the recursive MC1 chart
with its change-point anchor, and the soft/hard thresholded variants that
down-weight or drop channels carrying small squared statistics.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._ring import RingBuffer
from .charts1d import AlarmRun, StepDecision
from .core import ChartKind, ChartSpec, DimensionMismatch, InvalidSpec, ONE_DIMENSIONAL


@dataclass(frozen=True)
class Soft:
    p: float = 0.1


@dataclass(frozen=True)
class Hard:
    cut: float = 0.25


def soft_weights(y, p: float) -> np.ndarray:
    """exp(y^2/2) / ((1-p)/p + exp(y^2/2)), written to avoid overflow."""
    y = np.asarray(y, dtype=float)
    return 1.0 / (1.0 + (1 - p) / p * np.exp(-0.5 * y * y))


def threshold_stat(y, mode: Soft | Hard):
    """Soft-weighted or hard-truncated sum of squares over the last axis."""
    y = np.asarray(y, dtype=float)
    sq = y * y
    if isinstance(mode, Soft):
        return np.sum(soft_weights(y, mode.p) * sq, axis=-1)
    if isinstance(mode, Hard):
        # |y| > sqrt(cut)  <=>  y^2 > cut
        return np.sum(np.where(sq > mode.cut, sq, 0.0), axis=-1)
    raise TypeError(f"unknown threshold mode {mode!r}")


def spec_mode(spec: ChartSpec) -> Soft | Hard | None:
    if spec.kind is ChartKind.MEWMA_SOFT:
        return Soft(spec.soft_p)
    if spec.kind in (ChartKind.MEWMA_HARD, ChartKind.MMA_HARD, ChartKind.MGLRT_HARD):
        return Hard(spec.hard_cut)
    return None


@dataclass
class MonitorStateMV:
    dim: int
    t: int = 0
    y: np.ndarray | None = None
    buffer: RingBuffer | None = None
    anchor: int = 0
    run_sum: np.ndarray | None = None
    since_anchor: deque = field(default_factory=deque)


def new_state_mv(spec: ChartSpec) -> MonitorStateMV:
    if spec.kind in ONE_DIMENSIONAL:
        raise InvalidSpec(f"{spec.kind} is a one-dimensional chart")
    n = spec.dimension
    state = MonitorStateMV(dim=n)
    if spec.capacity:
        state.buffer = RingBuffer(spec.capacity, n)
    else:
        state.y = np.zeros(n)
        state.run_sum = np.zeros(n)
    return state


def step_mv(spec: ChartSpec, state: MonitorStateMV | None, x
            ) -> tuple[MonitorStateMV, StepDecision]:
    if state is None:
        state = new_state_mv(spec)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (state.dim,):
        raise DimensionMismatch(f"expected {state.dim} channels, got shape {x.shape}")
    state.t += 1
    t = state.t
    kind = spec.kind
    stat = math.nan

    if kind in (ChartKind.MEWMA, ChartKind.MEWMA_SOFT, ChartKind.MEWMA_HARD):
        state.y = (1 - spec.beta) * state.y + spec.beta * x
        mode = spec_mode(spec)
        stat = float(state.y @ state.y) if mode is None else float(threshold_stat(state.y, mode))
    elif kind is ChartKind.MC1:
        stat = _mc1_step(spec, state, x)
    else:
        buf = state.buffer
        buf.push(x)
        if kind in (ChartKind.MMA, ChartKind.MMA_HARD):
            if t >= spec.window:
                mean = buf.window_sum(spec.window) / spec.window
                if kind is ChartKind.MMA:
                    stat = math.sqrt(float(mean @ mean))
                else:
                    stat = float(threshold_stat(mean, Hard(spec.hard_cut)))
        elif kind in (ChartKind.MGLRT, ChartKind.MGLRT_HARD):
            top = min(spec.window_hi - 1, t)
            if top >= spec.window_lo:
                widths = np.arange(spec.window_lo, top + 1)
                sums = buf.window_sums(widths)
                if kind is ChartKind.MGLRT:
                    vals = np.sum(sums * sums, axis=1) / widths
                else:
                    means = sums / widths[:, None]
                    vals = widths * threshold_stat(means, Hard(spec.hard_cut))
                stat = float(np.max(vals))
        elif kind is ChartKind.MCUSUM:
            if t >= spec.window_hi:
                widths = np.arange(spec.window_lo + 1, spec.window_hi + 1)
                sums = buf.window_sums(widths)
                norms = np.sqrt(np.sum(sums * sums, axis=1))
                stat = float(np.max(norms - widths * spec.ref_strength / 2))

    alarm = t >= spec.first_alarm_step and stat > spec.alarm_level
    return state, StepDecision(stat, bool(alarm), t)


def _mc1_step(spec: ChartSpec, state: MonitorStateMV, x: np.ndarray) -> float:
    state.run_sum = state.run_sum + x
    cap = spec.mc1_cap
    if cap is not None:
        state.since_anchor.append(x)
        if len(state.since_anchor) > cap:
            state.run_sum = state.run_sum - state.since_anchor.popleft()
            state.anchor += 1
    n = state.t - state.anchor
    stat = max(0.0, math.sqrt(float(state.run_sum @ state.run_sum)) - spec.ref_strength / 2 * n)
    if stat == 0.0:
        state.anchor = state.t
        state.run_sum = np.zeros(state.dim)
        state.since_anchor.clear()
    return stat


def change_point_estimate(state: MonitorStateMV) -> int:
    """MC1's current change-point estimate (the anchor)."""
    return state.anchor


def run_mv(spec: ChartSpec, series) -> AlarmRun:
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    state = new_state_mv(spec)
    trace = np.empty(len(series))
    alarms = np.zeros(len(series), dtype=bool)
    for i, x in enumerate(series):
        state, dec = step_mv(spec, state, x)
        trace[i] = dec.statistic
        alarms[i] = dec.alarm
    hits = np.flatnonzero(alarms)
    first = int(hits[0]) + 1 if len(hits) else None
    return AlarmRun(first, trace, alarms)
