"""Streaming one-dimensional charts: EWMA, MA, moving-EWMA, CUSUM and
windowed GLR.

Each chart is a small state machine.  ``step_1d`` consumes one observation
and returns the updated state together with a :class:`StepDecision`.  Alarms
are reported but never stop the state from evolving; the caller decides
whether to stop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._ring import RingBuffer
from .core import ChartKind, ChartSpec, InvalidSpec, ONE_DIMENSIONAL


@dataclass(frozen=True)
class StepDecision:
    statistic: float
    alarm: bool
    t: int


@dataclass
class MonitorState1D:
    t: int = 0
    level: float = 0.0
    buffer: RingBuffer | None = None


def new_state_1d(spec: ChartSpec) -> MonitorState1D:
    if spec.kind not in ONE_DIMENSIONAL:
        raise InvalidSpec(f"{spec.kind} is not a one-dimensional chart")
    buf = RingBuffer(spec.capacity, 1) if spec.capacity else None
    return MonitorState1D(buffer=buf)


def _glr_widths(spec: ChartSpec) -> np.ndarray:
    return np.arange(spec.window_lo, spec.window_hi)


def step_1d(spec: ChartSpec, state: MonitorState1D | None, x: float
            ) -> tuple[MonitorState1D, StepDecision]:
    if state is None:
        state = new_state_1d(spec)
    x = float(x)
    state.t += 1
    t = state.t
    kind = spec.kind
    stat = math.nan

    if kind is ChartKind.EWMA:
        state.level = (1 - spec.beta) * state.level + spec.beta * x
        stat = state.level
    elif kind is ChartKind.CUSUM:
        state.level = max(0.0, state.level + x - spec.ref_strength / 2)
        stat = state.level
    elif kind is ChartKind.MA:
        state.buffer.push(np.array([x]))
        if t >= spec.window:
            stat = float(state.buffer.window_sum(spec.window)[0]) / spec.window
    elif kind is ChartKind.MOVING_EWMA:
        beta, w = spec.beta, spec.window
        old = float(state.buffer.push(np.array([x]))[0])
        if state.buffer.just_rebased:
            state.level = _moving_ewma_naive(state.buffer.latest(w)[:, 0], beta)
        else:
            state.level = ((1 - beta) * state.level + beta * x
                           - beta * (1 - beta) ** w * old)
        if t >= w:
            stat = state.level / (1 - (1 - beta) ** w)
    elif kind is ChartKind.WINDOWED_GLR:
        state.buffer.push(np.array([x]))
        if t >= spec.window_hi - 1:
            widths = _glr_widths(spec)
            sums = state.buffer.window_sums(widths)[:, 0]
            stat = float(np.max(sums / np.sqrt(widths)))

    alarm = t >= spec.first_alarm_step and stat > spec.alarm_level
    return state, StepDecision(stat, bool(alarm), t)


def _moving_ewma_naive(window: np.ndarray, beta: float) -> float:
    # window in time order, latest last
    k = np.arange(len(window))[::-1]
    return float(np.sum(beta * (1 - beta) ** k * window))


@dataclass(frozen=True)
class AlarmRun:
    """Result of running a chart over a whole series."""

    first_alarm: int | None
    trace: np.ndarray
    alarms: np.ndarray

    @property
    def alarm_times(self) -> np.ndarray:
        return np.flatnonzero(self.alarms) + 1


def run_first_alarm(spec: ChartSpec, series) -> AlarmRun:
    """Run ``spec`` over ``series``; step indices are 1-based.

    Multivariate kinds take a ``(T, N)`` array of whitened observations.
    """
    if spec.kind not in ONE_DIMENSIONAL:
        from .mv_charts import run_mv
        return run_mv(spec, series)
    series = np.asarray(series, dtype=float).ravel()
    state = new_state_1d(spec)
    trace = np.empty(len(series))
    alarms = np.zeros(len(series), dtype=bool)
    for i, x in enumerate(series):
        state, dec = step_1d(spec, state, x)
        trace[i] = dec.statistic
        alarms[i] = dec.alarm
    hits = np.flatnonzero(alarms)
    first = int(hits[0]) + 1 if len(hits) else None
    return AlarmRun(first, trace, alarms)
