import math
import warnings

import numpy as np
import pytest

from transient_scan import approx
from transient_scan.calibrate import (Nonconvergence, NoBracket, calibrate_mc,
                                      solve_threshold)
from transient_scan.core import ChartSpec, UnsupportedKind
from transient_scan.mc import PathMaxima, SimConfig

PLAIN = approx.OvershootConvention(ewma_arg=approx.EwmaArg.PLAIN)

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


def test_ma_design_threshold():
    h = solve_threshold(ChartSpec("ma", 1.0, window=20), 0.01, 20)
    assert h == pytest.approx(0.650, abs=1e-3)


def test_cusum_design_threshold():
    d = solve_threshold(ChartSpec("cusum", 1.0, ref_strength=0.5), 0.0063, 20)
    assert d == pytest.approx(10.8, abs=0.01)


@pytest.mark.parametrize("spec", SOLVABLE, ids=lambda s: s.kind.value)
@pytest.mark.parametrize("alpha", [0.005, 0.01, 0.02])
def test_round_trip(spec, alpha):
    th = solve_threshold(spec, alpha, 20)
    assert abs(approx.fdp(spec.replace(threshold=th), 20).raw - alpha) < 1e-9


@pytest.mark.parametrize("spec", SOLVABLE, ids=lambda s: s.kind.value)
def test_smaller_target_needs_larger_threshold(spec):
    ths = [solve_threshold(spec, a, 20) for a in (0.001, 0.005, 0.01, 0.02)]
    assert np.all(np.diff(ths) < 0)


def test_unsupported_and_bad_targets():
    with pytest.raises(UnsupportedKind):
        solve_threshold(ChartSpec("moving-ewma", 1.0, beta=0.05, window=20), 0.01, 20)
    with pytest.raises(UnsupportedKind):
        solve_threshold(ChartSpec("mewma-hard", 1.0, dimension=20, beta=0.05, hard_cut=0.25),
                        0.01, 20)
    with pytest.raises(ValueError):
        solve_threshold(ChartSpec("ma", 1.0, window=20), 0.6, 20)


def test_no_bracket_when_formula_never_reaches_target():
    # the short-horizon CUSUM formula is tiny for every threshold once L is 1
    spec = ChartSpec("cusum", 1.0, ref_strength=0.01)
    with pytest.raises(NoBracket):
        solve_threshold(spec, 0.4, 1)


def test_mc_calibration_of_hard_threshold_mewma():
    spec = ChartSpec("mewma-hard", 1.0, dimension=20, beta=0.05, hard_cut=0.25)
    cal = calibrate_mc(spec, 0.01, 10, SimConfig(reps=20_000, seed=0))
    assert cal.converged
    lo, hi = cal.estimate.ci95()
    assert lo <= 0.01 <= hi
    # the published level sits inside the sampling band of the calibrated one
    maxima = PathMaxima.simulate(spec, 10, SimConfig(reps=20_000, seed=0))
    at_published = maxima.fdp_at(0.396)
    assert abs(at_published.value - 0.0106) < 3 * at_published.std_error
    assert cal.threshold == pytest.approx(0.396, abs=0.02)


def test_mc_calibration_of_ewma():
    cal = calibrate_mc(ChartSpec("ewma", 1.0, beta=0.05), 0.01, 20,
                       SimConfig(reps=100_000, seed=0))
    assert cal.threshold == pytest.approx(2.95, abs=0.03)


def test_mc_calibration_large_target_sanity():
    spec = ChartSpec("ma", 1.0, window=20)
    cal = calibrate_mc(spec, 0.5, 20, SimConfig(reps=10_000, seed=0), bracket=(1e-6, 5.0))
    assert cal.converged
    assert cal.estimate.value == pytest.approx(0.5, abs=3 * cal.estimate.std_error)


def test_mc_calibration_warns_when_iterations_run_out():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cal = calibrate_mc(ChartSpec("ma", 1.0, window=20), 0.01, 20,
                           SimConfig(reps=10_000, seed=0), bracket=(5.0, 6.0), max_iter=3)
    assert not cal.converged
    assert any(issubclass(w.category, Nonconvergence) for w in caught)


# kinds whose closed-form FDP tracks simulation at these designs; see the
# decision notes for the ones that do not
AGREEING = [
    (ChartSpec("ewma", 1.0, beta=0.05), approx.DEFAULT),
    (ChartSpec("ma", 1.0, window=10), approx.DEFAULT),
    (ChartSpec("ma", 1.0, window=20), approx.DEFAULT),
    (ChartSpec("cusum", 1.0, ref_strength=1.0), approx.DEFAULT),
    (ChartSpec("mewma", 1.0, dimension=20, beta=0.05), PLAIN),
    (ChartSpec("mma", 1.0, dimension=20, window=20), approx.DEFAULT),
    (ChartSpec("mma", 1.0, dimension=20, window=50), approx.DEFAULT),
]


@pytest.mark.slow
@pytest.mark.parametrize("spec,conv", AGREEING,
                         ids=lambda x: getattr(getattr(x, "kind", None), "value", ""))
def test_analytic_threshold_holds_up_in_simulation(spec, conv):
    th = solve_threshold(spec, 0.01, 20, conv)
    maxima = PathMaxima.simulate(spec.replace(threshold=th), 20, SimConfig(reps=20_000, seed=0))
    est = maxima.fdp_at(th)
    assert abs(est.value - 0.01) < 3 * est.std_error
