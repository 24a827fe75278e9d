"""Acceptance criteria 1-8.  Each test records one PASS/FAIL line that is
repeated in the terminal summary."""

import math

import numpy as np
import pytest

from transient_scan import approx
from transient_scan.approx import fdp_1d, fdp_mv
from transient_scan.calibrate import solve_threshold
from transient_scan.charts1d import run_first_alarm
from transient_scan.core import ChartSpec, ScenarioSpec, build_whitener
from transient_scan.mc import SimConfig, estimate_fdp, estimate_pod, estimate_pod_grid
from transient_scan.mv_charts import Hard, threshold_stat

SEED = 0
MC = SimConfig(reps=20_000, seed=SEED)
PLAIN = approx.OvershootConvention(ewma_arg=approx.EwmaArg.PLAIN)


def _near(value, target, tol):
    return abs(value - target) <= tol


def _within_se(est, published, k=3.0):
    return abs(est.value - published) <= k * est.std_error


def _fmt_se(est, published):
    return f"{est.value:.4f} (SE {est.std_error:.4f}) vs {published}"


def test_criterion_1_cusum_fdp(acceptance_line):
    a = fdp_1d(ChartSpec("cusum", 10.8, ref_strength=0.5), 20).value
    b = fdp_1d(ChartSpec("cusum", 5.88, ref_strength=1.0), 20).value
    ok = _near(a, 0.0063, 2e-4) and _near(b, 0.0087, 2e-4)
    acceptance_line("1 CUSUM closed-form FDP", ok, f"{a:.5f} vs 0.0063, {b:.5f} vs 0.0087")
    assert ok


def test_criterion_2_one_dimensional_fdp(acceptance_line):
    ewma = fdp_1d(ChartSpec("ewma", 2.95, beta=0.05), 20).value
    ma = fdp_1d(ChartSpec("ma", 0.6578, window=20), 20).value
    glr = fdp_1d(ChartSpec("wglr", 3.27, window_lo=20, window_hi=50), 20).value
    ok = _near(ewma, 0.0103, 3e-4) and _near(ma, 0.0090, 2e-4) and _near(glr, 0.0049, 2e-4)
    acceptance_line("2 EWMA/MA/GLR closed-form FDP", ok,
                    f"{ewma:.5f} vs 0.0103, {ma:.5f} vs 0.0090, {glr:.5f} vs 0.0049")
    assert ok


def test_criterion_3_multivariate_fdp(acceptance_line):
    m65 = fdp_mv(ChartSpec("mewma", 6.5, dimension=20, beta=0.05), 20, PLAIN).value
    m70 = fdp_mv(ChartSpec("mewma", 7.0, dimension=20, beta=0.05), 20, PLAIN).value
    mma = fdp_mv(ChartSpec("mma", 6.5 / math.sqrt(20), dimension=20, window=20), 20).value
    ok = (_near(m65, 0.0197, 3e-4) and _near(m70, 0.0027, 2e-4)
          and abs(mma - 0.0200) / 0.0200 <= 0.02)
    acceptance_line("3 MEWMA/MMA closed-form FDP", ok,
                    f"{m65:.5f} vs 0.0197, {m70:.5f} vs 0.0027, {mma:.5f} vs 0.0200 (2%)")
    assert ok


SOLVABLE = [
    ChartSpec("ewma", 1.0, beta=0.05),
    ChartSpec("ma", 1.0, window=20),
    ChartSpec("wglr", 1.0, window_lo=20, window_hi=50),
    ChartSpec("cusum", 1.0, ref_strength=0.5),
    ChartSpec("mewma", 1.0, dimension=20, beta=0.05),
    ChartSpec("mma", 1.0, dimension=20, window=20),
    ChartSpec("mglrt", 1.0, dimension=20, window_lo=20, window_hi=50),
    ChartSpec("mcusum", 1.0, dimension=20, window_lo=20, window_hi=50,
              ref_strength=0.25 * math.sqrt(20)),
]


def test_criterion_4_round_trips(acceptance_line):
    worst = 0.0
    for spec in SOLVABLE:
        for alpha in (0.005, 0.01, 0.02):
            th = solve_threshold(spec, alpha, 20)
            worst = max(worst, abs(approx.fdp(spec.replace(threshold=th), 20).raw - alpha))
    ok = worst < 1e-9
    acceptance_line("4 threshold round trips", ok,
                    f"max |fdp - alpha| = {worst:.2e} over {len(SOLVABLE)} kinds x 3 targets")
    assert ok


@pytest.mark.slow
def test_criterion_5_simulated_fdp(acceptance_line):
    ewma = estimate_fdp(ChartSpec("ewma", 2.95, beta=0.05), 20, config=MC)
    mewma = estimate_fdp(ChartSpec("mewma", 6.5, dimension=20, beta=0.05), 20, config=MC)
    ok = _within_se(ewma, 0.0105) and _within_se(mewma, 0.0198)
    acceptance_line("5 simulated FDP", ok,
                    f"EWMA {_fmt_se(ewma, 0.0105)}; MEWMA {_fmt_se(mewma, 0.0198)}")
    assert ok


@pytest.mark.slow
def test_criterion_6_simulated_pod(acceptance_line):
    ma, _ = estimate_pod(ChartSpec("ma", 0.6578, window=20), ScenarioSpec(0, 20, [0.5]),
                         config=MC)
    mewma, _ = estimate_pod(ChartSpec("mewma", 6.5, dimension=20, beta=0.05),
                            ScenarioSpec.all_channels(0.25, 20, 20), config=MC)
    hard, _ = estimate_pod(ChartSpec("mewma-hard", 0.396, dimension=20, beta=0.05,
                                     hard_cut=0.25),
                           ScenarioSpec.one_channel(1.0, 20, 20), config=MC)
    ok = _within_se(ma, 0.3188) and _within_se(mewma, 0.5037) and _within_se(hard, 0.6217)
    acceptance_line("6 simulated POD", ok,
                    f"MA {_fmt_se(ma, 0.3188)}; MEWMA {_fmt_se(mewma, 0.5037)}; "
                    f"MEWMA-hard {_fmt_se(hard, 0.6217)}")
    assert ok


@pytest.mark.slow
def test_criterion_7_exponential_scaling(acceptance_line):
    spec = ChartSpec("ewma", 2.95, beta=0.05)
    a20 = estimate_fdp(spec, 20, config=MC)
    a40 = estimate_fdp(spec, 40, config=MC)
    predicted = 1 - (1 - a20.value) ** 2
    se = math.hypot(a40.std_error, 2 * (1 - a20.value) * a20.std_error)
    ok = abs(a40.value - predicted) <= 4 * se
    acceptance_line("7 exponential FDP scaling", ok,
                    f"FDP(40) {a40.value:.4f} vs 1-(1-{a20.value:.4f})^2 = {predicted:.4f}, "
                    f"4 SE = {4 * se:.4f}")
    assert ok


def test_criterion_8_property_suite(acceptance_line):
    checks = {}
    rng = np.random.default_rng(SEED)

    sigma = np.array([[1.5, 0.4, -0.2], [0.4, 1.0, 0.3], [-0.2, 0.3, 0.8]])
    a = np.array([[2.0, 0.5, 0.0], [-1.0, 1.0, 0.3], [0.2, 0.0, 0.7]])
    raw = rng.multivariate_normal([0.3, -0.1, 0.2], sigma, size=200)
    spec = ChartSpec("mewma", 1.0, dimension=3, beta=0.1)
    base = run_first_alarm(spec, build_whitener(sigma).whiten_rows(raw)).trace
    moved = run_first_alarm(spec, build_whitener(a @ sigma @ a.T).whiten_rows(raw @ a.T)).trace
    checks["whitening invariance"] = np.max(np.abs(base - moved)) < 1e-9

    x = rng.standard_normal((300, 1)) + 0.2
    ew = run_first_alarm(ChartSpec("ewma", 1.0, beta=0.1), x[:, 0]).trace
    mew = run_first_alarm(ChartSpec("mewma", 1.0, dimension=1, beta=0.1), x).trace
    ma = run_first_alarm(ChartSpec("ma", 1.0, window=7), x[:, 0]).trace
    mma = run_first_alarm(ChartSpec("mma", 1.0, dimension=1, window=7), x).trace
    ok = ~np.isnan(ma)
    checks["N=1 reductions"] = (np.max(np.abs(mew - ew**2)) < 1e-12
                                and np.max(np.abs(mma[ok] - np.abs(ma[ok]))) < 1e-12)

    y = rng.standard_normal((500, 20))
    hard = threshold_stat(y, Hard(0.25))
    checks["hard <= full"] = bool(np.all(hard <= np.sum(y * y, axis=1)))

    small = SimConfig(reps=3000, seed=SEED)
    ewma = ChartSpec("ewma", 2.95, beta=0.05)
    (pod0, _), = estimate_pod_grid(ewma, [[0.0]], 20, config=small)
    checks["POD(0) == FDP"] = pod0.value == estimate_fdp(ewma, 20, config=small).value

    stream = rng.standard_normal(100_000)
    trace = run_first_alarm(ChartSpec("ma", 1.0, window=20), stream).trace
    naive = np.convolve(stream, np.ones(20) / 20, mode="valid")
    checks["incremental == naive"] = np.max(np.abs(trace[19:] - naive)) < 1e-12

    means = [[0.0], [0.5]]
    one = estimate_pod_grid(ewma, means, 20, config=SimConfig(reps=3000, seed=SEED, workers=1))
    two = estimate_pod_grid(ewma, means, 20, config=SimConfig(reps=3000, seed=SEED, workers=2))
    checks["worker determinism"] = all(p.value == q.value for (p, _), (q, _) in zip(one, two))

    f = lambda u: u * approx.nu(u) ** 2 / 2  # noqa: E731
    checks["quadrature halving"] = abs(approx.integrate(f, 0.46, 0.73, tol=1e-10)
                                       - approx.integrate(f, 0.46, 0.73, tol=5e-11)) < 1e-8

    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    acceptance_line("8 property suite", ok,
                    f"{len(checks) - len(failed)}/{len(checks)} checks"
                    + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok
