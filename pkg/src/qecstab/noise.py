"""Two-parameter circuit noise model and channel effect distributions."""

from __future__ import annotations

import dataclasses
import itertools
from typing import Literal

from qecstab.circuit import Circuit, Instruction

ChannelKind = Literal['MERR', 'XERR', 'ZERR', 'DEP1', 'DEP2']

# Circuit instruction name for each channel kind. MERR lives in M's argument.
INSTRUCTION_NAME = {
    'XERR': 'X_ERROR',
    'ZERR': 'Z_ERROR',
    'DEP1': 'DEPOLARIZE1',
    'DEP2': 'DEPOLARIZE2',
    'MERR': 'M',
}

PAULIS_1 = ('X', 'Y', 'Z')
PAULIS_2 = tuple(a + b for a, b in itertools.product('IXYZ', repeat=2) if a + b != 'II')


@dataclasses.dataclass(frozen=True)
class NoiseModel:
    """Unitary-operation strength `pu` and measure/reset strength `pm`."""
    pu: float
    pm: float

    def __post_init__(self):
        for name, p in (('pu', self.pu), ('pm', self.pm)):
            if not 0 <= p <= 1:
                raise ValueError(f'{name}={p} is not a probability')

    @staticmethod
    def uniform(p: float) -> 'NoiseModel':
        return NoiseModel(pu=p, pm=p)


@dataclasses.dataclass(frozen=True)
class Channel:
    kind: ChannelKind
    p: float
    targets: tuple[int, ...] = ()


def channel_distribution(ch: Channel) -> list[tuple[str, float]]:
    """Effect distribution of a channel, identity first.

    Effects are Pauli strings ('I', 'X', 'XZ', ...) or 'FLIP' / 'KEEP' for
    measurement errors.
    """
    p = ch.p
    if ch.kind == 'MERR':
        return [('KEEP', 1 - p), ('FLIP', p)]
    if ch.kind == 'XERR':
        return [('I', 1 - p), ('X', p)]
    if ch.kind == 'ZERR':
        return [('I', 1 - p), ('Z', p)]
    if ch.kind == 'DEP1':
        return [('I', 1 - p)] + [(e, p / 3) for e in PAULIS_1]
    if ch.kind == 'DEP2':
        return [('II', 1 - p)] + [(e, p / 15) for e in PAULIS_2]
    raise ValueError(f'unknown channel kind {ch.kind!r}')


def _channel(name: str, p: float, targets) -> list[Instruction]:
    if p == 0:
        return []
    return [Instruction(name, tuple(targets), (p,))]


def apply_noise(circuit: Circuit, model: NoiseModel, *, idle_during_measure_reset: bool = True) -> Circuit:
    """Substitutes each operation with its noisy composition.

    H gets DEPOLARIZE1(pu), CZ gets DEPOLARIZE2(pu), R gets X_ERROR(pm), M becomes
    M(pm) followed by DEPOLARIZE1(pm). Within each TICK-delimited layer that
    contains an operation, declared qubits (those with QUBIT_COORDS) that are
    not touched get DEPOLARIZE1(pu). With `idle_during_measure_reset=False`,
    layers containing R or M get no idle noise.
    """
    if circuit.has_channels():
        raise ValueError('circuit already contains noise channels')
    declared = sorted(circuit.qubit_coords)
    return Circuit(tuple(_noisy(circuit, model, declared, idle_during_measure_reset)))


def _noisy(circuit: Circuit, model: NoiseModel, declared: list[int], idle_in_mr: bool) -> list[Instruction]:
    out: list[Instruction] = []
    touched: set[int] = set()
    has_op = False
    has_mr = False

    def flush():
        nonlocal touched, has_op, has_mr
        if has_op and (idle_in_mr or not has_mr):
            idle = [q for q in declared if q not in touched]
            if idle:
                out.extend(_channel('DEPOLARIZE1', model.pu, idle))
        touched, has_op, has_mr = set(), False, False

    for inst in circuit.instructions:
        name = inst.name
        if name == 'TICK':
            flush()
            out.append(inst)
        elif name == 'REPEAT':
            flush()
            body = Circuit(tuple(_noisy(inst.body, model, declared, idle_in_mr)))
            out.append(dataclasses.replace(inst, body=body))
        elif name == 'H':
            out.append(inst)
            out.extend(_channel('DEPOLARIZE1', model.pu, inst.targets))
        elif name == 'CZ':
            out.append(inst)
            out.extend(_channel('DEPOLARIZE2', model.pu, inst.targets))
        elif name == 'R':
            out.append(inst)
            out.extend(_channel('X_ERROR', model.pm, inst.targets))
            has_mr = True
        elif name == 'M':
            out.append(Instruction('M', inst.targets, (model.pm,) if model.pm else ()))
            out.extend(_channel('DEPOLARIZE1', model.pm, inst.targets))
            has_mr = True
        else:
            out.append(inst)
            continue
        has_op = True
        touched.update(inst.targets)
    flush()
    return out


def strip_noise(circuit: Circuit) -> Circuit:
    """Removes channel instructions and measurement flip probabilities."""
    out = []
    for inst in circuit.instructions:
        if inst.name == 'REPEAT':
            out.append(dataclasses.replace(inst, body=strip_noise(inst.body)))
        elif inst.name == 'M':
            out.append(Instruction('M', inst.targets))
        elif not inst.is_channel:
            out.append(inst)
    return Circuit(tuple(out))
