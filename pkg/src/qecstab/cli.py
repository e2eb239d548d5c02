"""Command line front end: gen, sample, dem, decode, run, sweep, analyze, plot."""

from __future__ import annotations

import argparse
import contextlib
import itertools
import os
import pathlib
import sys
from typing import Iterator, Optional, Sequence, TextIO

import numpy as np

from qecstab.analysis import (
    RateRow, bayes_region, emit_csv, emit_fits_csv, emit_svg, fit_rows, read_csv, sweep)
from qecstab.circuit import CircuitError, Circuit, flatten, parse_circuit, serialize_circuit
from qecstab.codegen import ExperimentSpec, generate
from qecstab.decoder import DecodeError, decode_batch
from qecstab.dem import DemError, build_graph, extract_dem, read_dem, write_dem
from qecstab.noise import NoiseModel, apply_noise
from qecstab.sim import SimulationError, compile_circuit, read_dets, sample_frames, write_dets

DEFAULT_SEED = 2022
WORKERS_ENV = 'QECSTAB_WORKERS'

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    def __init__(self, message: str, prog: Optional[str] = None):
        super().__init__(message)
        self.prog = prog


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message, self.prog)


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, '1')
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f'{WORKERS_ENV}={raw!r} is not an integer') from None
    if value < 1:
        raise UsageError(f'{WORKERS_ENV} must be at least 1')
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f'{text} is not a positive integer')
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f'{text} is not a probability')
    return value


def _add_spec(p: argparse.ArgumentParser, *, required: bool = True) -> None:
    p.add_argument('--type', dest='kind', choices=('memory', 'stability'), required=required)
    p.add_argument('--basis', '--b', '-b', dest='basis', choices=('X', 'Z'), default='Z')
    p.add_argument('--d', '--diameter', '-d', dest='d', type=int, default=4)
    p.add_argument('--rounds', '--r', '-r', dest='rounds', type=int, default=None,
                   help='defaults to 2 for memory experiments and 25 for stability experiments')


def _add_noise(p: argparse.ArgumentParser) -> None:
    p.add_argument('--pu', '--pd', dest='pu', type=_probability, default=0.0,
                   help='unitary (H, CZ, idle) noise strength')
    p.add_argument('--pm', dest='pm', type=_probability, default=0.0,
                   help='measurement and reset noise strength')


def _add_sampling(p: argparse.ArgumentParser) -> None:
    p.add_argument('--shots', type=_positive, default=10_000)
    p.add_argument('--seed', type=int, default=DEFAULT_SEED)
    p.add_argument('--workers', type=_positive, default=None,
                   help=f'parallel processes (default: ${WORKERS_ENV} or 1); never changes results')


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='qecstab', description=__doc__)
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    p = sub.add_parser('gen', help='write a .stim circuit')
    _add_spec(p)
    _add_noise(p)
    p.add_argument('--out', '-o', help='output path, "-" for stdout (default: dataset-style name)')

    p = sub.add_parser('sample', help='sample detection events into a .dets file')
    p.add_argument('--circuit', help='.stim circuit; ideal circuits get --pu/--pm noise')
    _add_spec(p, required=False)
    _add_noise(p)
    _add_sampling(p)
    p.add_argument('--out', '-o', required=True)

    p = sub.add_parser('dem', help='write the detector error model of a noisy circuit')
    p.add_argument('--circuit', help='.stim circuit; ideal circuits get --pu/--pm noise')
    _add_spec(p, required=False)
    _add_noise(p)
    p.add_argument('--out', '-o', required=True)

    p = sub.add_parser('decode', help='decode a .dets file against a .dem file')
    p.add_argument('--dem', required=True)
    p.add_argument('--dets', required=True)
    p.add_argument('--out', '-o', help='per-shot predictions')
    p.add_argument('--workers', type=_positive, default=None)

    p = sub.add_parser('run', help='gen, noise, sample, dem and decode in one go')
    _add_spec(p)
    _add_noise(p)
    _add_sampling(p)

    p = sub.add_parser('sweep', help='simulate a spec family over a noise grid into a CSV')
    _add_spec(p)
    p.add_argument('--distances', type=int, nargs='+', default=None,
                   help='code distances: diameters for memory, rounds for stability')
    p.add_argument('--pu', '--pd', dest='pu', type=_probability, nargs='+', required=True)
    p.add_argument('--pm', dest='pm', type=_probability, nargs='+', default=None,
                   help='defaults to the --pu values paired one to one')
    p.add_argument('--grid', choices=('product', 'paired'), default=None,
                   help='combine --pu and --pm as a product or pairwise (default: product if --pm given)')
    _add_sampling(p)
    p.add_argument('--out', '-o', required=True)
    p.add_argument('--fits', help='also write per-cell suppression fits to this CSV')

    p = sub.add_parser('analyze', help='fit suppression factors to a sweep CSV')
    p.add_argument('--csv', required=True)
    p.add_argument('--out', '-o', default='-')

    p = sub.add_parser('plot', help='plot a sweep CSV as SVG')
    p.add_argument('--csv', required=True)
    p.add_argument('--out', '-o', required=True)
    return parser


def _spec(args) -> ExperimentSpec:
    rounds = args.rounds
    if rounds is None:
        rounds = 2 if args.kind == 'memory' else 25
    return ExperimentSpec(args.kind, args.basis, args.d, rounds)


@contextlib.contextmanager
def _open_out(path: str) -> Iterator[TextIO]:
    if path == '-':
        yield sys.stdout
        return
    target = pathlib.Path(path)
    tmp = target.with_name(target.name + '.tmp')
    with open(tmp, 'w', encoding='utf-8', newline='\n') as f:
        yield f
    tmp.replace(target)


def _read_text(path: str) -> str:
    if path == '-':
        return sys.stdin.read()
    return pathlib.Path(path).read_text(encoding='utf-8')


def _noisy_circuit(args) -> Circuit:
    """The flattened noisy circuit named by --circuit or by the experiment flags."""
    noise = NoiseModel(args.pu, args.pm)
    if args.circuit:
        circuit = parse_circuit(_read_text(args.circuit))
        if not circuit.has_channels():
            circuit = apply_noise(circuit, noise)
    else:
        if args.kind is None:
            raise UsageError('give either --circuit or --type')
        circuit = apply_noise(generate(_spec(args)), noise)
    return flatten(circuit)


def _workers(args) -> int:
    return args.workers if getattr(args, 'workers', None) else _default_workers()


def _cmd_gen(args) -> None:
    spec = _spec(args)
    circuit = generate(spec)
    if args.pu or args.pm:
        circuit = apply_noise(circuit, NoiseModel(args.pu, args.pm))
    path = args.out or spec.filename(args.pu, args.pm)
    with _open_out(path) as f:
        f.write(serialize_circuit(circuit))


def _cmd_sample(args) -> None:
    prog = compile_circuit(_noisy_circuit(args))
    data = sample_frames(prog, args.shots, args.seed, workers=_workers(args))
    with _open_out(args.out) as f:
        write_dets(data, f)


def _cmd_dem(args) -> None:
    dem = extract_dem(_noisy_circuit(args))
    with _open_out(args.out) as f:
        write_dem(dem, f)


def _cmd_decode(args) -> None:
    with open(args.dem, encoding='utf-8') as f:
        dem = read_dem(f)
    with open(args.dets, encoding='utf-8') as f:
        data = read_dets(f)
    graph = build_graph(dem)
    result = decode_batch(graph, data, workers=_workers(args))
    if args.out:
        with _open_out(args.out) as f:
            rows = result.predictions.astype(np.uint8) + ord('0')
            for row in rows:
                f.write(row.tobytes().decode('ascii') + '\n')
    print(result.summary())


def _fmt(x: float) -> str:
    return f'{x:.6g}'


def _cmd_run(args) -> None:
    spec = _spec(args)
    noise = NoiseModel(args.pu, args.pm)
    prog = compile_circuit(flatten(apply_noise(generate(spec), noise)))
    workers = _workers(args)
    data = sample_frames(prog, args.shots, args.seed, workers=workers)
    graph = build_graph(extract_dem(prog))
    result = decode_batch(graph, data, workers=workers)
    region = bayes_region(result.errors, result.shots)
    print(f'shots={result.shots} errors={result.errors} '
          f'p_logical={_fmt(result.errors / result.shots)} '
          f'region=[{_fmt(region.lo)},{_fmt(region.hi)}]')


def _grid(args) -> list[tuple[float, float]]:
    mode = args.grid or ('product' if args.pm is not None else 'paired')
    pm = args.pm if args.pm is not None else args.pu
    if mode == 'paired':
        if len(pm) != len(args.pu):
            raise UsageError('--grid paired needs as many --pm values as --pu values')
        return list(zip(args.pu, pm))
    return list(itertools.product(args.pu, pm))


def _cmd_sweep(args) -> None:
    base = _spec(args)
    if args.distances:
        distances = args.distances
    else:
        distances = (5, 15, 25) if base.kind == 'stability' else (3, 5, 7)
    if base.kind == 'stability':
        specs = [ExperimentSpec('stability', base.basis, base.d, r) for r in distances]
    else:
        specs = [ExperimentSpec('memory', base.basis, d, base.rounds) for d in distances]
    rows = sweep(_grid(args), specs, args.shots, args.seed, workers=_workers(args))
    with _open_out(args.out) as f:
        emit_csv(rows, f)
    if args.fits:
        with _open_out(args.fits) as f:
            emit_fits_csv(fit_rows(rows), f)


def _load_rows(path: str) -> list[RateRow]:
    with open(path, encoding='utf-8') as f:
        return read_csv(f)


def _cmd_analyze(args) -> None:
    fits = fit_rows(_load_rows(args.csv))
    with _open_out(args.out) as f:
        emit_fits_csv(fits, f)


def _cmd_plot(args) -> None:
    rows = _load_rows(args.csv)
    with _open_out(args.out) as f:
        emit_svg(rows, f)


_COMMANDS = {
    'gen': _cmd_gen,
    'sample': _cmd_sample,
    'dem': _cmd_dem,
    'decode': _cmd_decode,
    'run': _cmd_run,
    'sweep': _cmd_sweep,
    'analyze': _cmd_analyze,
    'plot': _cmd_plot,
}

_DATA_ERRORS = (CircuitError, SimulationError, DemError, DecodeError, ValueError, OSError)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    stage = ''
    try:
        args = parser.parse_args(argv)
        stage = ' ' + args.command
        _COMMANDS[args.command](args)
    except UsageError as e:
        print(f'{e.prog or "qecstab" + stage}: usage error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as e:
        print(f'qecstab{stage}: error: {e}', file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
