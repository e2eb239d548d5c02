import io
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qecstab.analysis import (
    CSV_COLUMNS, InsufficientErrors, RatePoint, RateRow, bayes_region, derive_seed, emit_csv,
    emit_fits_csv, emit_svg, fit_rows, fit_suppression, read_csv, sweep)
from qecstab.codegen import ExperimentSpec
from qecstab.noise import NoiseModel

BIG = 10**15


def _points(f, distances):
    return [RatePoint(d, BIG, round(f(d) * BIG)) for d in distances]


def test_exact_halving_is_three_db():
    fit = fit_suppression(_points(lambda d: 0.1 * 2.0 ** -(d - 3), (3, 5, 7)))
    assert fit.slope == pytest.approx(-math.log10(2), abs=1e-12)
    assert abs(fit.suppression_db - 3.0103) < 1e-4
    assert abs(fit.suppression_db - 10 * math.log10(2)) < 1e-9


def test_constant_rate_is_zero_db():
    fit = fit_suppression([RatePoint(d, 1000, 100) for d in (5, 15, 25)])
    assert abs(fit.slope) < 1e-12
    assert abs(fit.suppression_db) < 1e-9


def test_log_linear_rate():
    fit = fit_suppression(_points(lambda r: 0.2 * 10 ** (-0.05 * r), (5, 15, 25)))
    assert abs(fit.suppression_db - 0.5) < 1e-9


@given(st.floats(-0.5, 0.5), st.floats(-3, -0.5),
       st.lists(st.integers(1, 40), min_size=2, max_size=6, unique=True))
@settings(max_examples=200, deadline=None)
def test_fit_recovers_generating_slope(slope, offset, distances):
    y = {d: offset + slope * (d - distances[0]) for d in distances}
    if max(y.values()) > -0.1 or min(y.values()) < -6:
        return
    fit = fit_suppression(_points(lambda d: 10 ** y[d], distances))
    assert fit.slope == pytest.approx(slope, abs=1e-8)


def test_zero_errors_are_not_fitted():
    with pytest.raises(InsufficientErrors, match='increase shots'):
        fit_suppression([RatePoint(3, 100, 5), RatePoint(5, 100, 0)])


def test_fit_preconditions():
    with pytest.raises(ValueError):
        fit_suppression([RatePoint(3, 100, 5)])
    with pytest.raises(ValueError):
        fit_suppression([RatePoint(3, 100, 5), RatePoint(3, 100, 6)])
    with pytest.raises(ValueError):
        RatePoint(3, 10, 11)
    with pytest.raises(ValueError):
        RatePoint(3, 0, 0)


def test_region_without_errors_has_closed_form():
    region = bayes_region(0, 1000, 1000)
    assert region.lo == 0
    assert abs(region.hi - (1 - 1000 ** (-1 / 1000))) < 1e-9
    assert region.hi == pytest.approx(0.006886, abs=1e-5)


def test_region_all_errors_reaches_one():
    region = bayes_region(1000, 1000, 1000)
    assert region.hi == 1
    assert abs(region.lo - 1000 ** (-1 / 1000)) < 1e-9


def _grid_region(k, n, bayes_factor):
    grid = np.linspace(1e-7, 1 - 1e-7, 2_000_001)
    ll = k * np.log(grid) + (n - k) * np.log1p(-grid)
    top = k * math.log(k / n) + (n - k) * math.log1p(-k / n)
    inside = grid[top - ll <= math.log(bayes_factor)]
    return inside.min(), inside.max()


@pytest.mark.parametrize('k, n', [(50, 1000), (3, 40), (200, 250)])
def test_region_matches_likelihood_scan(k, n):
    region = bayes_region(k, n, 1000)
    lo, hi = _grid_region(k, n, 1000)
    step = 1 / 2_000_000
    assert abs(region.lo - lo) <= step and abs(region.hi - hi) <= step
    assert region.contains(k / n)


def test_region_for_five_percent():
    region = bayes_region(50, 1000, 1000)
    assert region.contains(0.05)
    assert 0.025 < region.lo < 0.03
    assert 0.075 < region.hi < 0.08


def test_region_endpoints_have_the_bayes_factor():
    k, n, bayes_factor = 37, 900, 1000
    region = bayes_region(k, n, bayes_factor)

    def ll(p):
        return k * math.log(p) + (n - k) * math.log1p(-p)

    for p in (region.lo, region.hi):
        assert ll(k / n) - ll(p) == pytest.approx(math.log(bayes_factor), abs=1e-8)


@given(st.integers(0, 60), st.integers(1, 200))
@settings(max_examples=100, deadline=None)
def test_region_monotone_in_bayes_factor(k, extra):
    n = k + extra
    widths = [bayes_region(k, n, b).hi - bayes_region(k, n, b).lo for b in (1.5, 10, 1000, 1e6)]
    assert widths == sorted(widths)


@given(st.integers(1, 9), st.integers(1, 9))
@settings(max_examples=50, deadline=None)
def test_region_shrinks_with_more_shots(num, scale):
    small = bayes_region(num, 10 * num, 1000)
    large = bayes_region(num * (scale + 1), 10 * num * (scale + 1), 1000)
    assert large.hi - large.lo < small.hi - small.lo


def test_region_collapses_as_bayes_factor_approaches_one():
    region = bayes_region(30, 100, 1 + 1e-12)
    assert region.hi - region.lo < 1e-5
    assert region.contains(0.3)


def test_region_rejects_bad_input():
    with pytest.raises(ValueError):
        bayes_region(5, 4)
    with pytest.raises(ValueError):
        bayes_region(1, 4, 1)


def test_overlap():
    a, b = bayes_region(10, 1000), bayes_region(100, 1000)
    assert not a.overlaps(b) and not b.overlaps(a)
    assert a.overlaps(bayes_region(12, 1000))


def _row(kind='stability', d=4, rounds=5, pu=0.001, pm=0.001, shots=1000, errors=10):
    return RateRow.from_tally(ExperimentSpec(kind, 'Z', d, rounds), NoiseModel(pu, pm), shots, errors)


def test_zero_error_row():
    row = _row(errors=0)
    assert row.p_logical == 0
    assert row.region_hi == pytest.approx(1 - 1000 ** (-1 / 1000))
    buf = io.StringIO()
    emit_csv([row], buf)
    header, line = buf.getvalue().strip().split('\n')
    assert header == ','.join(CSV_COLUMNS)
    assert line.startswith('stability,Z,4,5,0.001,0.001,1000,0,0.0,0.0,0.0068')


def test_csv_round_trip():
    rows = [_row(rounds=r, errors=e, pu=pu) for r, e in ((5, 40), (15, 7), (25, 0)) for pu in (0.001, 0.002)]
    buf = io.StringIO()
    emit_csv(rows, buf)
    assert read_csv(io.StringIO(buf.getvalue())) == rows


def test_csv_rejects_missing_columns():
    with pytest.raises(ValueError):
        read_csv(io.StringIO('type,basis\nmemory,Z\n'))
    with pytest.raises(ValueError):
        emit_csv([], io.StringIO())


def test_fit_rows_groups_cells_and_censors_zeros():
    rows = [_row(rounds=r, errors=e) for r, e in ((5, 400), (15, 40), (25, 4))]
    rows += [_row(rounds=r, errors=0, pu=0.0005) for r in (5, 15, 25)]
    fits = fit_rows(rows)
    assert len(fits) == 2
    live, censored = fits
    assert not live.censored and live.suppression_db == pytest.approx(1.0)
    assert censored.censored and math.isnan(censored.suppression_db)
    buf = io.StringIO()
    emit_fits_csv(fits, buf)
    lines = buf.getvalue().strip().split('\n')
    assert lines[1].endswith(',fitted') and lines[2].endswith(',censored')


def test_svg_structure():
    rows = [_row(rounds=25, pu=p, pm=p, errors=e) for p, e in ((0.001, 3), (0.002, 30), (0.004, 0))]
    buf = io.StringIO()
    emit_svg(rows, buf)
    svg = buf.getvalue()
    assert svg.startswith('<svg') and 'version="1.1"' in svg
    assert len(re.findall(r'<circle class="marker"', svg)) == 3
    assert len(re.findall(r'<polyline class="series"', svg)) == 1
    assert len(re.findall(r'<rect class="region"', svg)) == 3


def test_svg_one_polyline_per_distance():
    rows = [_row(rounds=r, pu=p, pm=p, errors=5) for r in (5, 15, 25) for p in (0.001, 0.002)]
    buf = io.StringIO()
    emit_svg(rows, buf)
    assert buf.getvalue().count('<polyline') == 3
    assert buf.getvalue().count('<circle') == 6


def test_sweep_without_noise_is_censored():
    specs = [ExperimentSpec('stability', 'Z', 4, r) for r in (5, 15)]
    rows = sweep([(0.0, 0.0)], specs, 200, 1)
    assert len(rows) == 2
    assert all(r.errors == 0 for r in rows)
    (cell,) = fit_rows(rows)
    assert cell.censored


def test_sweep_rows_and_reproducibility():
    specs = [ExperimentSpec('memory', 'Z', d, 2) for d in (3, 5)]
    grid = [(0.01, 0.01), (0.005, 0.01), (0.01, 0.005)]
    rows = sweep(grid, specs, 300, 9)
    assert len(rows) == len(grid) * len(specs)
    assert [(r.pu, r.pm, r.d) for r in rows] == [(pu, pm, d) for pu, pm in grid for d in (3, 5)]
    assert sweep(grid, specs, 300, 9, workers=2) == rows


def test_derived_seeds_are_distinct_and_stable():
    seeds = {derive_seed(7, c, s) for c in range(10) for s in range(3)}
    assert len(seeds) == 30
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert 0 <= derive_seed(7, 1, 2) < 2**63
