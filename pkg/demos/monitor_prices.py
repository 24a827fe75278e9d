"""
Monitoring a panel of daily prices
==================================

Prices become standardized log returns, the panel is whitened with its
sample correlation, and a multivariate EWMA chart runs over the result.
A synthetic panel stands in for real market data; point ``PRICES`` at a
CSV with a ``date`` column and one column per ticker to use your own.
"""

import os
import tempfile

import numpy as np

from transient_scan import ChartSpec, ingest, run_first_alarm

rng = np.random.default_rng(0)
T, names = 260, [f"S{i:02d}" for i in range(8)]

# A common market factor makes the channels correlated; one stock drifts up
# for the last 40 days.
market = 0.008 * rng.standard_normal((T, 1))
steps = market + 0.01 * rng.standard_normal((T, len(names)))
steps[-40:, 3] += 0.01
prices = 100 * np.exp(np.cumsum(steps, axis=0))

PRICES = os.environ.get("PRICES")
if PRICES is None:
    PRICES = os.path.join(tempfile.mkdtemp(), "prices.csv")
    dates = np.arange(np.datetime64("2022-01-03"), np.datetime64("2022-01-03") + T)
    with open(PRICES, "w") as fh:
        fh.write("date," + ",".join(names) + "\n")
        for d, row in zip(dates, prices):
            fh.write(f"{d}," + ",".join(f"{v:.4f}" for v in row) + "\n")

panel = ingest.load_panel(PRICES)
returns, _ = ingest.standardized_returns(panel)
est = ingest.estimate_covariance(returns)
print(f"{returns.T} days, {returns.N} channels, "
      f"largest correlation eigenvalue {est.eigen['largest']:.2f}")

# %%
# Whitened and unwhitened runs of the same chart.

spec = ChartSpec("mewma", 4.0, dimension=returns.N, beta=0.05)
for label, data in [("whitened", est.model.whiten_rows(returns.values)),
                    ("independent", returns.values)]:
    run = run_first_alarm(spec, data)
    print(f"{label:12s} first alarm: {run.first_alarm}")

# %%
# The per-channel EWMA charts point at the channel behind the alarm.

for j, name in enumerate(returns.channels):
    run = run_first_alarm(ChartSpec("ewma", 2.95, beta=0.05), returns.values[:, j])
    if run.first_alarm:
        print(f"{name}: alarms from day {run.first_alarm}")
