"""Text circuit format: parsing, canonical serialization, flattening, record resolution.

The accepted grammar is a small subset of the stim circuit format. Targets of
DETECTOR and OBSERVABLE_INCLUDE are measurement-record lookbacks ``rec[-k]``,
stored internally as the negative integer ``-k``.
"""

from __future__ import annotations

import dataclasses
import re
from typing import Iterable, Iterator, Optional, Sequence

GATES = ('H', 'CZ', 'R', 'M')
CHANNELS = ('DEPOLARIZE1', 'DEPOLARIZE2', 'X_ERROR', 'Z_ERROR')
ANNOTATIONS = ('QUBIT_COORDS', 'TICK', 'DETECTOR', 'OBSERVABLE_INCLUDE', 'SHIFT_COORDS')
KINDS = frozenset(GATES + CHANNELS + ANNOTATIONS + ('REPEAT',))

TWO_QUBIT = frozenset({'CZ', 'DEPOLARIZE2'})
RECORD_TARGETED = frozenset({'DETECTOR', 'OBSERVABLE_INCLUDE'})
QUBIT_TARGETED = frozenset(GATES + CHANNELS + ('QUBIT_COORDS',))


class CircuitError(ValueError):
    """Raised for malformed circuit text or an invalid circuit structure."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)


@dataclasses.dataclass(frozen=True)
class Instruction:
    name: str
    targets: tuple[int, ...] = ()
    args: tuple[float, ...] = ()
    body: Optional['Circuit'] = None

    @property
    def repeat_count(self) -> int:
        assert self.name == 'REPEAT'
        return int(self.args[0])

    @property
    def is_channel(self) -> bool:
        return self.name in CHANNELS or (self.name == 'M' and bool(self.args))

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.targets[::2], self.targets[1::2]))


@dataclasses.dataclass(frozen=True)
class Circuit:
    instructions: tuple[Instruction, ...] = ()

    def __iter__(self) -> Iterator[Instruction]:
        return iter(self.instructions)

    def __len__(self) -> int:
        return len(self.instructions)

    def __getitem__(self, index: int) -> Instruction:
        return self.instructions[index]

    def __add__(self, other: 'Circuit') -> 'Circuit':
        return Circuit(self.instructions + other.instructions)

    def __str__(self) -> str:
        return serialize_circuit(self)

    @staticmethod
    def from_text(text: str) -> 'Circuit':
        return parse_circuit(text)

    @property
    def qubit_coords(self) -> dict[int, tuple[float, ...]]:
        coords = {}
        for inst in iter_flat(self):
            if inst.name == 'QUBIT_COORDS':
                for q in inst.targets:
                    coords[q] = inst.args
        return coords

    @property
    def num_qubits(self) -> int:
        n = 0
        for inst in iter_flat(self):
            if inst.name in QUBIT_TARGETED and inst.targets:
                n = max(n, max(inst.targets) + 1)
        return n

    @property
    def num_measurements(self) -> int:
        return _count(self, lambda inst: len(inst.targets) if inst.name == 'M' else 0)

    @property
    def num_detectors(self) -> int:
        return _count(self, lambda inst: inst.name == 'DETECTOR')

    @property
    def num_observables(self) -> int:
        n = 0
        for inst in iter_flat(self):
            if inst.name == 'OBSERVABLE_INCLUDE':
                n = max(n, int(inst.args[0]) + 1)
        return n

    @property
    def detector_coords(self) -> list[tuple[float, ...]]:
        return [inst.args for inst in flatten(self) if inst.name == 'DETECTOR']

    def has_channels(self) -> bool:
        return any(inst.is_channel for inst in iter_flat(self))

    def has_repeat(self) -> bool:
        return any(inst.name == 'REPEAT' for inst in self.instructions)


def _count(circuit: Circuit, f) -> int:
    total = 0
    for inst in circuit.instructions:
        if inst.name == 'REPEAT':
            total += inst.repeat_count * _count(inst.body, f)
        else:
            total += int(f(inst))
    return total


def iter_flat(circuit: Circuit) -> Iterator[Instruction]:
    """Yields instructions in execution order, unrolling REPEAT blocks."""
    for inst in circuit.instructions:
        if inst.name == 'REPEAT':
            for _ in range(inst.repeat_count):
                yield from iter_flat(inst.body)
        else:
            yield inst


# ---------------------------------------------------------------------------
# Parsing

_LINE_RE = re.compile(r'^([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(([^)]*)\))?\s*(.*)$')
_REC_RE = re.compile(r'^rec\[-(\d+)\]$')


def parse_circuit(text: str) -> Circuit:
    """Parses circuit text into a Circuit.

    Raises CircuitError (with the offending line number) on unknown
    instructions, malformed targets or arguments, out-of-range probabilities,
    record lookbacks reaching before the first measurement, and unbalanced
    REPEAT braces.
    """
    stack: list[tuple[list[Instruction], int, int]] = []
    current: list[Instruction] = []
    measurements = 0

    for line_number, raw in enumerate(text.split('\n'), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if line == '}':
            if not stack:
                raise CircuitError('unmatched "}"', line_number)
            outer, count, start_measurements = stack.pop()
            body = Circuit(tuple(current))
            if not body.instructions:
                raise CircuitError('empty REPEAT block', line_number)
            outer.append(Instruction('REPEAT', (), (count,), body))
            current = outer
            per_iteration = measurements - start_measurements
            measurements = start_measurements + count * per_iteration
            continue

        m = _LINE_RE.match(line)
        if m is None:
            raise CircuitError(f'cannot parse {line!r}', line_number)
        name, arg_text, rest = m.group(1).upper(), m.group(2), m.group(3).strip()
        if name not in KINDS:
            raise CircuitError(f'unknown instruction {m.group(1)!r}', line_number)

        if name == 'REPEAT':
            parts = rest.split()
            if arg_text is not None or len(parts) != 2 or parts[1] != '{' or not parts[0].isdigit():
                raise CircuitError(f'malformed REPEAT line {line!r}', line_number)
            count = int(parts[0])
            if count < 1:
                raise CircuitError('REPEAT count must be at least 1', line_number)
            stack.append((current, count, measurements))
            current = []
            continue

        args = _parse_args(arg_text, line_number)
        targets = _parse_targets(name, rest.split(), measurements, line_number)
        inst = Instruction(name, targets, args)
        _validate(inst, line_number)
        if name == 'M':
            measurements += len(targets)
        current.append(inst)

    if stack:
        raise CircuitError('unterminated REPEAT block (missing "}")', None)
    return Circuit(tuple(current))


def _parse_args(arg_text: Optional[str], line_number: int) -> tuple[float, ...]:
    if arg_text is None:
        return ()
    try:
        return tuple(float(a) for a in arg_text.split(',') if a.strip())
    except ValueError:
        raise CircuitError(f'bad arguments ({arg_text})', line_number) from None


def _parse_targets(name: str, words: list[str], measurements: int, line_number: int) -> tuple[int, ...]:
    out = []
    for w in words:
        if name in RECORD_TARGETED:
            m = _REC_RE.match(w)
            if m is None:
                raise CircuitError(f'{name} expects rec[-k] targets, got {w!r}', line_number)
            k = int(m.group(1))
            if k < 1 or k > measurements:
                raise CircuitError(f'{w} out of range ({measurements} measurements so far)', line_number)
            out.append(-k)
        else:
            if not w.isdigit():
                raise CircuitError(f'{name} expects qubit targets, got {w!r}', line_number)
            out.append(int(w))
    return tuple(out)


def _validate(inst: Instruction, line_number: Optional[int] = None) -> None:
    name, args, targets = inst.name, inst.args, inst.targets
    if name in CHANNELS:
        if len(args) != 1:
            raise CircuitError(f'{name} takes exactly one probability', line_number)
    if name in CHANNELS or name == 'M':
        if len(args) > 1:
            raise CircuitError(f'{name} takes at most one probability', line_number)
        for p in args:
            if not 0 <= p <= 1:
                raise CircuitError(f'probability {p} outside [0, 1]', line_number)
    if name in ('H', 'CZ', 'R') and args:
        raise CircuitError(f'{name} takes no arguments', line_number)
    if name in TWO_QUBIT:
        if len(targets) % 2:
            raise CircuitError(f'{name} needs an even number of targets', line_number)
        for a, b in inst.pairs():
            if a == b:
                raise CircuitError(f'{name} pair targets the same qubit twice', line_number)
    if name == 'TICK' and (args or targets):
        raise CircuitError('TICK takes no arguments or targets', line_number)
    if name == 'SHIFT_COORDS' and targets:
        raise CircuitError('SHIFT_COORDS takes no targets', line_number)
    if name == 'OBSERVABLE_INCLUDE':
        if len(args) != 1 or args[0] < 0 or not float(args[0]).is_integer():
            raise CircuitError('OBSERVABLE_INCLUDE takes one non-negative integer index', line_number)
    if name == 'QUBIT_COORDS' and not targets:
        raise CircuitError('QUBIT_COORDS needs a qubit target', line_number)


# ---------------------------------------------------------------------------
# Serialization

def format_number(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _format_target(name: str, t: int) -> str:
    if name in RECORD_TARGETED:
        return f'rec[{t}]'
    return str(t)


def _lines(circuit: Circuit, indent: str) -> Iterator[str]:
    for inst in circuit.instructions:
        if inst.name == 'REPEAT':
            yield f'{indent}REPEAT {inst.repeat_count} {{'
            yield from _lines(inst.body, indent + '    ')
            yield f'{indent}}}'
            continue
        text = inst.name
        if inst.args:
            text += '(' + ', '.join(format_number(a) for a in inst.args) + ')'
        if inst.targets:
            text += ' ' + ' '.join(_format_target(inst.name, t) for t in inst.targets)
        yield indent + text


def serialize_circuit(circuit: Circuit) -> str:
    lines = list(_lines(circuit, ''))
    if not lines:
        return ''
    return '\n'.join(lines) + '\n'


# ---------------------------------------------------------------------------
# Flattening and record resolution

def flatten(circuit: Circuit) -> Circuit:
    """Unrolls REPEAT blocks and folds SHIFT_COORDS into absolute DETECTOR coordinates."""
    out = []
    shift: list[float] = []
    for inst in iter_flat(circuit):
        if inst.name == 'SHIFT_COORDS':
            for k, a in enumerate(inst.args):
                if k < len(shift):
                    shift[k] += a
                else:
                    shift.append(a)
            continue
        if inst.name == 'DETECTOR' and shift:
            args = tuple(a + (shift[k] if k < len(shift) else 0) for k, a in enumerate(inst.args))
            inst = dataclasses.replace(inst, args=args)
        out.append(inst)
    return Circuit(tuple(out))


@dataclasses.dataclass(frozen=True)
class RecordMap:
    """Absolute measurement indices behind each detector and observable.

    Repeated references to the same record cancel (parities are XORs).
    """
    num_measurements: int
    detectors: tuple[tuple[int, ...], ...]
    observables: tuple[tuple[int, ...], ...]


def _xor_set(indices: Iterable[int]) -> tuple[int, ...]:
    acc: set[int] = set()
    for i in indices:
        acc ^= {i}
    return tuple(sorted(acc))


def resolve_records(circuit: Circuit) -> RecordMap:
    measurements = 0
    detectors = []
    observables: dict[int, list[int]] = {}
    for inst in iter_flat(circuit):
        if inst.name == 'M':
            measurements += len(inst.targets)
        elif inst.name in RECORD_TARGETED:
            absolute = []
            for t in inst.targets:
                k = measurements + t
                if k < 0 or t >= 0:
                    raise CircuitError(f'dangling record reference rec[{t}] in {inst.name}')
                absolute.append(k)
            if inst.name == 'DETECTOR':
                detectors.append(_xor_set(absolute))
            else:
                observables.setdefault(int(inst.args[0]), []).extend(absolute)
    n_obs = max(observables, default=-1) + 1
    return RecordMap(
        num_measurements=measurements,
        detectors=tuple(detectors),
        observables=tuple(_xor_set(observables.get(k, ())) for k in range(n_obs)),
    )


def build(*items: Instruction | Sequence[Instruction] | Circuit) -> Circuit:
    """Concatenates instructions, instruction lists, and circuits into one Circuit."""
    out: list[Instruction] = []
    for item in items:
        if isinstance(item, Instruction):
            out.append(item)
        else:
            out.extend(item)
    return Circuit(tuple(out))
