"""Price panels to standardized, whitened observation streams.

Input is a delimiter-separated text file with header ``date,NAME1,...``,
ISO-8601 dates and decimal cells.  The pipeline is log-differencing,
per-channel standardization, then a sample correlation matrix wrapped as a
:class:`~transient_scan.core.CovarianceModel`.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CovarianceModel, NotPositiveDefinite, TransientScanError, build_whitener


class DataError(TransientScanError, ValueError):
    pass


class ParseError(DataError):
    pass


class MissingValue(DataError):
    pass


class DuplicateDate(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class DegenerateChannel(DataError):
    pass


class UnsortedInput(UserWarning):
    pass


JITTER = 1e-8


@dataclass(frozen=True, eq=False)
class Panel:
    timestamps: tuple[dt.date, ...]
    channels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.timestamps), len(self.channels)):
            raise ValueError("values shape does not match timestamps x channels")

    @property
    def T(self) -> int:
        return len(self.timestamps)

    @property
    def N(self) -> int:
        return len(self.channels)

    def select(self, names) -> Panel:
        idx = [self.channels.index(n) for n in names]
        return Panel(self.timestamps, tuple(self.channels[i] for i in idx), self.values[:, idx])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Panel) and self.timestamps == other.timestamps
                and self.channels == other.channels
                and np.array_equal(self.values, other.values))


def load_panel(path, delimiter: str | None = None) -> Panel:
    """Parse a price file.  Rows out of date order are sorted with an
    :class:`UnsortedInput` warning."""
    text = Path(path).read_text()
    if delimiter is None:
        try:
            delimiter = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",;\t").delimiter
        except (csv.Error, IndexError):
            delimiter = ","
    reader = csv.reader(text.splitlines(), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file") from None
    names = tuple(h.strip() for h in header[1:])
    if not names:
        raise ParseError("header has no channel columns")

    dates: list[dt.date] = []
    rows: list[list[float]] = []
    for lineno, record in enumerate(reader, start=2):
        if not record or all(not c.strip() for c in record):
            continue
        if len(record) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} cells, got {len(record)}")
        try:
            day = dt.date.fromisoformat(record[0].strip())
        except ValueError:
            raise ParseError(f"row {lineno}, column date: bad date {record[0]!r}") from None
        vals = []
        for name, cell in zip(names, record[1:]):
            cell = cell.strip()
            if not cell:
                raise MissingValue(f"row {lineno}, column {name}: empty cell")
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"row {lineno}, column {name}: not a number {cell!r}") from None
            if not math.isfinite(v):
                raise MissingValue(f"row {lineno}, column {name}: {cell!r}")
            vals.append(v)
        dates.append(day)
        rows.append(vals)

    if len(set(dates)) != len(dates):
        seen = set()
        dup = next(d for d in dates if d in seen or seen.add(d))
        raise DuplicateDate(f"date {dup.isoformat()} appears more than once")
    order = sorted(range(len(dates)), key=dates.__getitem__)
    if order != list(range(len(dates))):
        warnings.warn("input rows were not in date order; sorted", UnsortedInput, stacklevel=2)
    values = np.array([rows[i] for i in order], dtype=float).reshape(len(dates), len(names))
    return Panel(tuple(dates[i] for i in order), names, values)


def standardized_returns(panel: Panel, trailing: int | None = None
                         ) -> tuple[Panel, np.ndarray]:
    """Log-differences divided by each channel's sample standard deviation.

    With ``trailing=k`` each return is instead scaled by the standard
    deviation of the previous ``k`` returns (the first ``k`` rows are
    dropped), avoiding look-ahead.  Returns the new panel and the scales
    (whole-sample scales, or the last trailing scale per channel).
    """
    if panel.T < 3:
        raise DataError("need at least 3 rows")
    if np.any(panel.values <= 0):
        r, c = np.argwhere(panel.values <= 0)[0]
        raise NonPositivePrice(
            f"{panel.channels[c]} on {panel.timestamps[r].isoformat()} is not positive")
    diffs = np.diff(np.log(panel.values), axis=0)
    scales = diffs.std(axis=0, ddof=1)
    bad = np.flatnonzero(scales < 1e-12)
    if len(bad):
        raise DegenerateChannel(f"channel {panel.channels[bad[0]]} has zero variance")
    stamps = panel.timestamps[1:]
    if trailing is None:
        return Panel(stamps, panel.channels, diffs / scales), scales
    if not 2 <= trailing < len(diffs):
        raise DataError("trailing window must lie in [2, T-1)")
    windows = np.lib.stride_tricks.sliding_window_view(diffs[:-1], trailing, axis=0)
    rolling = windows.std(axis=-1, ddof=1)
    if np.any(rolling < 1e-12):
        raise DegenerateChannel("a trailing window has zero variance")
    out = diffs[trailing:] / rolling
    return Panel(stamps[trailing:], panel.channels, out), rolling[-1]


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    model: CovarianceModel
    jittered: bool
    eigen: dict


def estimate_covariance(returns: Panel) -> CovarianceEstimate:
    """Sample correlation (unit diagonal exactly) as a covariance model.

    A failed factorization is retried once with ``1e-8 * I`` added; the
    result is flagged ``jittered``.
    """
    T, N = returns.values.shape
    if T <= N:
        raise DataError(f"need more rows ({T}) than channels ({N})")
    corr = np.corrcoef(returns.values, rowvar=False)
    corr = np.atleast_2d(corr)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    jittered = False
    try:
        model = build_whitener(corr)
    except NotPositiveDefinite:
        jittered = True
        model = build_whitener(corr + JITTER * np.eye(N))
    return CovarianceEstimate(model, jittered, model.eigen_summary())


def acf_summary(series, max_lag: int = 10) -> dict:
    """Largest absolute autocorrelation of a series and of its square over
    lags ``1..max_lag``, next to the ``2/sqrt(T)`` band.  A diagnostic only."""
    x = np.asarray(series, dtype=float)

    def acf(v):
        v = v - v.mean()
        denom = float(v @ v)
        return np.array([float(v[k:] @ v[:-k]) / denom for k in range(1, max_lag + 1)])

    level, square = acf(x), acf(x * x)
    return {"max_abs_acf": float(np.max(np.abs(level))),
            "max_abs_acf_squared": float(np.max(np.abs(square))),
            "band": 2 / math.sqrt(len(x)),
            "acf": level.tolist(), "acf_squared": square.tolist()}
