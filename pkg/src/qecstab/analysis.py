"""Logical error rates, suppression fits, likelihood regions, sweeps, CSV and SVG output."""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import math
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from qecstab.circuit import flatten
from qecstab.codegen import ExperimentSpec, generate
from qecstab.decoder import decode_batch
from qecstab.dem import build_graph, extract_dem
from qecstab.noise import NoiseModel, apply_noise
from qecstab.sim import compile_circuit, sample_frames

DEFAULT_BAYES_FACTOR = 1000.0


class InsufficientErrors(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class RatePoint:
    code_distance: int
    shots: int
    errors: int

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError(f'shots must be positive, got {self.shots}')
        if not 0 <= self.errors <= self.shots:
            raise ValueError(f'errors={self.errors} outside 0..{self.shots}')

    @property
    def p_logical(self) -> float:
        return self.errors / self.shots


@dataclasses.dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    points: tuple[RatePoint, ...] = ()

    @property
    def suppression_db(self) -> float:
        return -10 * self.slope


def fit_suppression(points: Sequence[RatePoint]) -> FitResult:
    """Least-squares line through log10(p_L) versus code distance."""
    points = tuple(points)
    if len(points) < 2:
        raise ValueError('need at least two rate points to fit')
    ds = [p.code_distance for p in points]
    if len(set(ds)) != len(ds):
        raise ValueError(f'code distances must be distinct, got {ds}')
    zero = [p.code_distance for p in points if p.errors == 0]
    if zero:
        raise InsufficientErrors(
            f'insufficient errors at code distance {zero}; increase shots')
    x = np.array(ds, float)
    y = np.log10([p.p_logical for p in points])
    slope, intercept = np.polyfit(x, y, 1)
    return FitResult(float(slope), float(intercept), points)


# ---------------------------------------------------------------------------
# Likelihood regions

@dataclasses.dataclass(frozen=True)
class BayesRegion:
    k: int
    n: int
    bayes_factor: float
    lo: float
    hi: float

    def contains(self, p: float) -> bool:
        return self.lo <= p <= self.hi

    def overlaps(self, other: 'BayesRegion') -> bool:
        return self.lo <= other.hi and other.lo <= self.hi


def _log_likelihood(k: int, n: int, p: float) -> float:
    total = 0.0
    if k:
        total += k * math.log(p) if p > 0 else -math.inf
    if n - k:
        total += (n - k) * math.log1p(-p) if p < 1 else -math.inf
    return total


def _bisect(f, lo: float, hi: float, tol: float) -> float:
    """Root of a monotone f with f(lo) <= 0 < f(hi) (or the reverse)."""
    f_lo = f(lo)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if (f(mid) <= 0) == (f_lo <= 0):
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def bayes_region(k: int, n: int, bayes_factor: float = DEFAULT_BAYES_FACTOR, *,
                 tol: float = 1e-13) -> BayesRegion:
    """Rates whose binomial likelihood is within `bayes_factor` of the maximum at k/n."""
    if not 0 <= k <= n or n < 1:
        raise ValueError(f'need 0 <= k <= n and n >= 1, got k={k} n={n}')
    if bayes_factor <= 1:
        raise ValueError(f'bayes factor must exceed 1, got {bayes_factor}')
    mle = k / n
    top = _log_likelihood(k, n, mle)
    limit = math.log(bayes_factor)

    def excess(p: float) -> float:
        return (top - _log_likelihood(k, n, p)) - limit

    lo = 0.0 if k == 0 else _bisect(excess, 0.0, mle, tol)
    hi = 1.0 if k == n else _bisect(excess, mle, 1.0, tol)
    return BayesRegion(k, n, bayes_factor, lo, hi)


# ---------------------------------------------------------------------------
# Running experiments

@dataclasses.dataclass(frozen=True)
class RateRow:
    """One simulated experiment: spec, noise, and tally."""
    kind: str
    basis: str
    d: int
    rounds: int
    pu: float
    pm: float
    shots: int
    errors: int
    region_lo: float = 0.0
    region_hi: float = 1.0

    @property
    def spec(self) -> ExperimentSpec:
        return ExperimentSpec(self.kind, self.basis, self.d, self.rounds)

    @property
    def p_logical(self) -> float:
        return self.errors / self.shots

    @property
    def code_distance(self) -> int:
        return self.spec.code_distance

    @property
    def point(self) -> RatePoint:
        return RatePoint(self.code_distance, self.shots, self.errors)

    @staticmethod
    def from_tally(spec: ExperimentSpec, noise: NoiseModel, shots: int, errors: int,
                   bayes_factor: float = DEFAULT_BAYES_FACTOR) -> 'RateRow':
        region = bayes_region(errors, shots, bayes_factor)
        return RateRow(spec.kind, spec.basis, spec.d, spec.rounds, noise.pu, noise.pm,
                       shots, errors, region.lo, region.hi)


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit seed determined by (seed, *keys)."""
    words = np.random.SeedSequence([seed, *keys]).generate_state(2, np.uint32)
    return (int(words[0]) << 31) ^ int(words[1])


def simulate(spec: ExperimentSpec, noise: NoiseModel, shots: int, seed: int, *,
             workers: int = 1) -> RateRow:
    """gen -> noise -> sample -> dem -> decode for one experiment."""
    noisy = flatten(apply_noise(generate(spec), noise))
    prog = compile_circuit(noisy)
    data = sample_frames(prog, shots, seed, workers=workers)
    graph = build_graph(extract_dem(prog))
    result = decode_batch(graph, data, workers=workers)
    return RateRow.from_tally(spec, noise, shots, result.errors)


@dataclasses.dataclass(frozen=True)
class CellFit:
    """Suppression fit of one spec family at one noise setting."""
    kind: str
    basis: str
    pu: float
    pm: float
    fit: Optional[FitResult]
    censored: bool

    @property
    def suppression_db(self) -> float:
        return math.nan if self.fit is None else self.fit.suppression_db


def _simulate_job(args) -> RateRow:
    spec, noise, shots, seed = args
    return simulate(spec, noise, shots, seed)


def sweep(grid: Iterable[tuple[float, float]], specs: Sequence[ExperimentSpec], shots: int,
          seed: int, *, workers: int = 1) -> list[RateRow]:
    """Simulates every spec at every (pu, pm) grid cell.

    Cell c, spec s draws its sampling seed from (seed, c, s), so rows do not
    depend on scheduling or on `workers`.
    """
    jobs = []
    for c, (pu, pm) in enumerate(grid):
        for s, spec in enumerate(specs):
            jobs.append((spec, NoiseModel(pu, pm), shots, derive_seed(seed, c, s)))
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_simulate_job, jobs))
    return [_simulate_job(job) for job in jobs]


def fit_rows(rows: Sequence[RateRow]) -> list[CellFit]:
    """Groups rows by (kind, basis, pu, pm) and fits each group; zero-error groups are censored."""
    groups: dict[tuple, list[RateRow]] = {}
    for row in rows:
        groups.setdefault((row.kind, row.basis, row.pu, row.pm), []).append(row)
    out = []
    for (kind, basis, pu, pm), members in groups.items():
        points = [m.point for m in members]
        try:
            fit: Optional[FitResult] = fit_suppression(points)
            censored = False
        except InsufficientErrors:
            fit, censored = None, True
        out.append(CellFit(kind, basis, pu, pm, fit, censored))
    return out


# ---------------------------------------------------------------------------
# CSV

CSV_COLUMNS = ('type', 'basis', 'd', 'rounds', 'pu', 'pm', 'shots', 'errors',
               'p_logical', 'region_lo', 'region_hi')
FIT_COLUMNS = ('type', 'basis', 'pu', 'pm', 'slope', 'intercept', 'suppression_db', 'status')


def emit_csv(rows: Sequence[RateRow], out: TextIO) -> None:
    if not rows:
        raise ValueError('no rows to write')
    w = csv.writer(out, lineterminator='\n')
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.kind, r.basis, r.d, r.rounds, repr(r.pu), repr(r.pm), r.shots, r.errors,
                    repr(r.p_logical), repr(r.region_lo), repr(r.region_hi)])


def read_csv(src: TextIO) -> list[RateRow]:
    reader = csv.DictReader(src)
    missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f'CSV is missing columns {sorted(missing)}')
    rows = []
    for line in reader:
        rows.append(RateRow(
            kind=line['type'], basis=line['basis'], d=int(line['d']), rounds=int(line['rounds']),
            pu=float(line['pu']), pm=float(line['pm']), shots=int(line['shots']),
            errors=int(line['errors']), region_lo=float(line['region_lo']),
            region_hi=float(line['region_hi'])))
    return rows


def emit_fits_csv(fits: Sequence[CellFit], out: TextIO) -> None:
    w = csv.writer(out, lineterminator='\n')
    w.writerow(FIT_COLUMNS)
    for f in fits:
        if f.fit is None:
            w.writerow([f.kind, f.basis, repr(f.pu), repr(f.pm), '', '', '', 'censored'])
        else:
            w.writerow([f.kind, f.basis, repr(f.pu), repr(f.pm), repr(f.fit.slope),
                        repr(f.fit.intercept), repr(f.fit.suppression_db), 'fitted'])


# ---------------------------------------------------------------------------
# SVG

_PALETTE = ('#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b', '#17becf')


def _log_span(values: list[float]) -> tuple[float, float]:
    lo, hi = math.log10(min(values)), math.log10(max(values))
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def emit_svg(rows: Sequence[RateRow], out: TextIO, *, width: int = 640, height: int = 480) -> None:
    """Log-log plot of logical error rate against physical error rate.

    Each row is a circle marker (zero-error rows sit at their region's upper
    end), each code distance gets one polyline through its points, and every
    marker has a shaded band covering its likelihood region. The physical
    rate is pu, or pm where pu is zero; rows with neither are left out.
    """
    placed = []
    for r in rows:
        x = r.pu if r.pu > 0 else r.pm
        y = r.p_logical if r.errors else r.region_hi
        if x > 0 and y > 0:
            placed.append((r, x, y))
    if not placed:
        raise ValueError('no rows with a positive physical and logical rate to plot')
    left, right, top, bottom = 70, width - 20, 20, height - 50
    x0, x1 = _log_span([x for _, x, _ in placed])
    ys = [y for _, _, y in placed] + [r.region_lo for r, _, _ in placed if r.region_lo > 0]
    ys += [r.region_hi for r, _, _ in placed]
    y0, y1 = _log_span(ys)

    def sx(x: float) -> float:
        return left + (math.log10(x) - x0) / (x1 - x0) * (right - left)

    def sy(y: float) -> float:
        y = max(y, 10 ** y0)
        return bottom - (math.log10(y) - y0) / (y1 - y0) * (bottom - top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
        'fill="none" stroke="black"/>',
    ]
    for e in range(math.ceil(x0), math.floor(x1) + 1):
        parts.append(f'<text x="{sx(10 ** e):.2f}" y="{bottom + 18}" font-size="12" '
                     f'text-anchor="middle">1e{e}</text>')
    for e in range(math.ceil(y0), math.floor(y1) + 1):
        parts.append(f'<text x="{left - 6}" y="{sy(10 ** e) + 4:.2f}" font-size="12" '
                     f'text-anchor="end">1e{e}</text>')
    parts.append(f'<text x="{(left + right) / 2}" y="{height - 12}" font-size="13" '
                 'text-anchor="middle">physical error rate</text>')
    parts.append(f'<text x="16" y="{(top + bottom) / 2}" font-size="13" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(top + bottom) / 2})">logical error rate</text>')

    series: dict[tuple, list] = {}
    for r, x, y in placed:
        series.setdefault((r.kind, r.code_distance), []).append((r, x, y))
    for k, ((kind, dist), members) in enumerate(sorted(series.items())):
        color = _PALETTE[k % len(_PALETTE)]
        members.sort(key=lambda m: m[1])
        for r, x, y in members:
            lo = max(r.region_lo, 10 ** y0)
            parts.append(f'<rect class="region" x="{sx(x) - 4:.2f}" y="{sy(r.region_hi):.2f}" '
                         f'width="8" height="{max(sy(lo) - sy(r.region_hi), 0.5):.2f}" '
                         f'fill="{color}" fill-opacity="0.25"/>')
        points = ' '.join(f'{sx(x):.2f},{sy(y):.2f}' for _, x, y in members)
        parts.append(f'<polyline class="series" points="{points}" fill="none" stroke="{color}">'
                     f'<title>{kind} code distance {dist}</title></polyline>')
        for r, x, y in members:
            hollow = 'white' if r.errors == 0 else color
            parts.append(f'<circle class="marker" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3.5" '
                         f'fill="{hollow}" stroke="{color}"/>')
    parts.append('</svg>')
    out.write('\n'.join(parts) + '\n')
