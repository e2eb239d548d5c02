"""Rotated surface code memory and stability experiment circuits.

Stabilizers are measured with four CZ layers. Each ancilla is reset, moved to
the X basis, interacts with its data qubits, and is measured in the X basis.
Data qubits carry a Hadamard "frame": a data qubit must be in the computational
frame while it interacts with a Z plaquette and in the Hadamard frame while it
interacts with an X plaquette. Whenever a data qubit is not interacting it
rests in the Hadamard frame. The H layers between CZ layers are exactly the
frame changes this rule implies.
"""

from __future__ import annotations

import dataclasses
from typing import Iterator, Literal, Optional

from qecstab.circuit import Circuit, Instruction

Coord = tuple[float, float]

# Data qubit offsets from the ancilla, one per CZ layer. X plaquettes sweep an
# N shape and Z plaquettes a Z shape, so the hook error left behind after the
# second CZ runs perpendicular to the logical operator it could extend.
SCHEDULE = {
    'X': ((-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)),
    'Z': ((-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)),
}


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    kind: Literal['memory', 'stability']
    basis: Literal['X', 'Z']
    d: int
    rounds: int = 2

    def __post_init__(self):
        if self.kind not in ('memory', 'stability'):
            raise ValueError(f'unknown experiment kind {self.kind!r}')
        if self.basis not in ('X', 'Z'):
            raise ValueError(f'basis must be X or Z, not {self.basis!r}')
        if self.d < 2:
            raise ValueError(f'diameter must be at least 2, got {self.d}')
        if self.rounds < 1:
            raise ValueError(f'rounds must be at least 1, got {self.rounds}')
        if self.kind == 'stability' and self.d % 2:
            raise ValueError(
                f'stability patches need an even diameter (got {self.d}); odd '
                'square patches cannot carry one boundary type all the way around')

    @property
    def boundary_type(self) -> Optional[str]:
        if self.kind == 'stability':
            return _opposite(self.basis)
        return None

    @property
    def code_distance(self) -> int:
        return self.rounds if self.kind == 'stability' else self.d

    def filename(self, pu: float = 0, pm: float = 0) -> str:
        from qecstab.circuit import format_number
        return (f'b={self.basis},d={self.d},pd={format_number(pu)},pm={format_number(pm)},'
                f'r={self.rounds},type={self.kind}.stim')


def _opposite(basis: str) -> str:
    return 'Z' if basis == 'X' else 'X'


@dataclasses.dataclass(frozen=True)
class Plaquette:
    coord: Coord
    basis: str
    # Data coordinate touched in each CZ layer, or None when the plaquette is
    # cut by the boundary in that layer.
    layers: tuple[Optional[Coord], ...]

    @property
    def support(self) -> tuple[Coord, ...]:
        return tuple(sorted(c for c in self.layers if c is not None))


@dataclasses.dataclass(frozen=True)
class PatchLayout:
    d: int
    data: tuple[Coord, ...]
    plaquettes: tuple[Plaquette, ...]

    @property
    def qubit_index(self) -> dict[Coord, int]:
        coords = list(self.data) + [p.coord for p in self.plaquettes]
        return {c: k for k, c in enumerate(coords)}

    @property
    def num_qubits(self) -> int:
        return len(self.data) + len(self.plaquettes)

    def of_basis(self, basis: str) -> list[Plaquette]:
        return [p for p in self.plaquettes if p.basis == basis]


def build_layout(kind: str, boundary_type: Optional[str], d: int) -> PatchLayout:
    """Lays out a d x d rotated surface code patch.

    Stability patches carry `boundary_type` plaquettes on all four sides.
    Memory patches carry X boundary plaquettes on the top and bottom edges and
    Z boundary plaquettes on the left and right edges (`boundary_type` is
    ignored).
    """
    if d < 2:
        raise ValueError(f'diameter must be at least 2, got {d}')
    if kind == 'stability':
        if boundary_type not in ('X', 'Z'):
            raise ValueError(f'stability layout needs boundary type X or Z, got {boundary_type!r}')
        even_basis = boundary_type
    elif kind == 'memory':
        even_basis = 'X'
    else:
        raise ValueError(f'unknown experiment kind {kind!r}')

    data = tuple((float(x), float(y)) for x in range(d) for y in range(d))
    data_set = set(data)
    plaquettes = []
    for i in range(-1, d):
        for j in range(-1, d):
            cx, cy = i + 0.5, j + 0.5
            basis = even_basis if (i + j + 1) % 2 == 0 else _opposite(even_basis)
            on_x_edge = i in (-1, d - 1)
            on_y_edge = j in (-1, d - 1)
            if on_x_edge and on_y_edge:
                continue
            if on_x_edge or on_y_edge:
                if kind == 'stability':
                    side_basis = boundary_type
                else:
                    side_basis = 'X' if on_y_edge else 'Z'
                if basis != side_basis:
                    continue
            layers = tuple(
                (cx + dx, cy + dy) if (cx + dx, cy + dy) in data_set else None
                for dx, dy in SCHEDULE[basis])
            plaquettes.append(Plaquette((cx, cy), basis, layers))
    plaquettes.sort(key=lambda p: p.coord)
    return PatchLayout(d=d, data=data, plaquettes=tuple(plaquettes))


# ---------------------------------------------------------------------------
# Circuit construction


class _Emitter:
    def __init__(self):
        self.instructions: list[Instruction] = []
        self.measurements = 0

    def add(self, name: str, targets=(), args=()):
        self.instructions.append(Instruction(name, tuple(targets), tuple(float(a) for a in args)))

    def measure(self, qubits: list[int]) -> dict[int, int]:
        self.add('M', qubits)
        out = {q: self.measurements + k for k, q in enumerate(qubits)}
        self.measurements += len(qubits)
        return out

    def rec(self, name: str, absolute: list[int], args=()):
        self.add(name, [m - self.measurements for m in absolute], args)


def _frame_toggles(layout: PatchLayout, start: dict[int, int], end: dict[int, int]) -> list[list[int]]:
    """Data qubits needing an H in each of the five H slots of one round."""
    index = layout.qubit_index
    required = {index[c]: [1] * 4 for c in layout.data}
    for p in layout.plaquettes:
        for k, c in enumerate(p.layers):
            if c is not None:
                required[index[c]][k] = int(p.basis == 'X')
    slots: list[list[int]] = [[] for _ in range(5)]
    for q, frames in required.items():
        seq = [start[q]] + frames + [end[q]]
        for k in range(5):
            if seq[k] != seq[k + 1]:
                slots[k].append(q)
    return slots


def _round_body(em: _Emitter, layout: PatchLayout, *, reset: list[int], start, end,
                measure: list[int]) -> dict[int, int]:
    index = layout.qubit_index
    ancillas = [index[p.coord] for p in layout.plaquettes]
    slots = _frame_toggles(layout, start, end)

    em.add('R', reset)
    em.add('TICK')
    em.add('H', sorted(slots[0] + ancillas))
    em.add('TICK')
    for k in range(4):
        pairs = []
        for p in layout.plaquettes:
            c = p.layers[k]
            if c is not None:
                pairs += [index[c], index[p.coord]]
        em.add('CZ', pairs)
        em.add('TICK')
        if k < 3 and slots[k + 1]:
            em.add('H', sorted(slots[k + 1]))
            em.add('TICK')
    em.add('H', sorted(slots[4] + ancillas))
    em.add('TICK')
    return em.measure(measure)


def _generate(spec: ExperimentSpec) -> Circuit:
    layout = build_layout(spec.kind, spec.boundary_type, spec.d)
    index = layout.qubit_index
    data = [index[c] for c in layout.data]
    ancillas = [index[p.coord] for p in layout.plaquettes]
    all_qubits = data + ancillas
    init_frame = int(spec.basis == 'X')
    first = {q: init_frame for q in data}
    rest = {q: 1 for q in data}
    final = {q: init_frame for q in data}
    basis_plaquettes = [p for p in layout.plaquettes if p.basis == spec.basis]

    em = _Emitter()
    for c in layout.data + tuple(p.coord for p in layout.plaquettes):
        em.add('QUBIT_COORDS', [index[c]], c)

    def first_detectors(meas):
        for p in basis_plaquettes:
            em.rec('DETECTOR', [meas[index[p.coord]]], (*p.coord, 0))

    def pair_detectors(prev, meas):
        for p in layout.plaquettes:
            a = index[p.coord]
            em.rec('DETECTOR', [prev[a], meas[a]], (*p.coord, 0))

    def finish(meas, prev):
        if prev is None:
            first_detectors(meas)
        else:
            pair_detectors(prev, meas)
        em.add('SHIFT_COORDS', [], (0, 0, 1))
        for p in basis_plaquettes:
            recs = sorted(meas[index[c]] for c in p.support) + [meas[index[p.coord]]]
            em.rec('DETECTOR', recs, (*p.coord, 0))
        if spec.kind == 'stability':
            observed = [meas[index[p.coord]] for p in layout.of_basis(spec.boundary_type)]
        else:
            observed = [meas[index[c]] for c in _logical_support(layout, spec.basis)]
        em.rec('OBSERVABLE_INCLUDE', observed, (0,))

    if spec.rounds == 1:
        meas = _round_body(em, layout, reset=all_qubits, start=first, end=final, measure=all_qubits)
        finish(meas, None)
        return Circuit(tuple(em.instructions))

    prev = _round_body(em, layout, reset=all_qubits, start=first, end=rest, measure=ancillas)
    first_detectors(prev)
    em.add('SHIFT_COORDS', [], (0, 0, 1))
    em.add('TICK')

    if spec.rounds > 2:
        outer = em.instructions
        em.instructions = []
        # One iteration of the loop body; record offsets are identical in each iteration.
        meas = _round_body(em, layout, reset=ancillas, start=rest, end=rest, measure=ancillas)
        pair_detectors(prev, meas)
        em.add('SHIFT_COORDS', [], (0, 0, 1))
        em.add('TICK')
        body = Circuit(tuple(em.instructions))
        em.instructions = outer
        em.instructions.append(Instruction('REPEAT', (), (spec.rounds - 2,), body))
        per_round = len(ancillas)
        em.measurements += per_round * (spec.rounds - 3)
        prev = {a: m + per_round * (spec.rounds - 3) for a, m in meas.items()}

    meas = _round_body(em, layout, reset=ancillas, start=rest, end=final, measure=all_qubits)
    finish(meas, prev)
    return Circuit(tuple(em.instructions))


def _logical_support(layout: PatchLayout, basis: str) -> list[Coord]:
    # Z logical runs along the top row (between the Z boundaries on the left
    # and right); X logical runs down the left column.
    if basis == 'Z':
        return [c for c in layout.data if c[1] == 0]
    return [c for c in layout.data if c[0] == 0]


def gen_stability(spec: ExperimentSpec) -> Circuit:
    if spec.kind != 'stability':
        raise ValueError(f'expected a stability spec, got {spec.kind!r}')
    return _generate(spec)


def gen_memory(spec: ExperimentSpec) -> Circuit:
    if spec.kind != 'memory':
        raise ValueError(f'expected a memory spec, got {spec.kind!r}')
    return _generate(spec)


def generate(spec: ExperimentSpec) -> Circuit:
    return _generate(spec)


def iter_family(kind: str, basis: str, *, d: int = 4, rounds: int = 2,
                distances: tuple[int, ...] = ()) -> Iterator[ExperimentSpec]:
    """Specs along the code-distance axis: diameters for memory, rounds for stability."""
    if kind == 'memory':
        for k in distances or (3, 5, 7):
            yield ExperimentSpec('memory', basis, k, rounds)
    else:
        for k in distances or (5, 15, 25):
            yield ExperimentSpec('stability', basis, d, k)
