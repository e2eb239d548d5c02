"""Detector error models and matching graphs.

Every non-identity effect of every channel is split into single-qubit X and Z
components. Each component is propagated on its own, and its probability is
folded into the mechanism keyed by the component's symptom. For the CZ+H
surface code circuits built here, every component touches at most two
detectors, so the model is a graph.
"""

from __future__ import annotations

import dataclasses
import math
import re
from typing import Iterable, Optional, TextIO

import numpy as np

from qecstab.circuit import Circuit
from qecstab.noise import PAULIS_2
from qecstab.sim import ErrorLocation, Program, compile_circuit, propagate_errors


class DemError(ValueError):
    pass


def xor_probability(p: float, q: float) -> float:
    """Probability that exactly one of two independent events happens."""
    return p * (1 - q) + q * (1 - p)


@dataclasses.dataclass(frozen=True)
class ErrorMechanism:
    p: float
    detectors: tuple[int, ...]
    observables: tuple[int, ...] = ()
    # Components that produced this symptom; not part of equality.
    sources: tuple[ErrorLocation, ...] = dataclasses.field(default=(), compare=False, repr=False)

    @property
    def key(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.detectors, self.observables


@dataclasses.dataclass(frozen=True)
class DetectorErrorModel:
    num_detectors: int
    num_observables: int
    # Mechanisms with one or two detectors.
    mechanisms: tuple[ErrorMechanism, ...]
    # Mechanisms that flip observables without firing any detector.
    undetectable: tuple[ErrorMechanism, ...] = ()

    def __iter__(self):
        return iter(self.mechanisms)

    def __len__(self) -> int:
        return len(self.mechanisms)


# ---------------------------------------------------------------------------
# Extraction

def _effects(inst, index: int) -> Iterable[tuple[float, list[ErrorLocation]]]:
    """(probability, X/Z components) for each non-identity effect of one channel instruction."""
    if not inst.args or inst.args[0] == 0:
        return
    p = inst.args[0]
    name = inst.name
    n = len(inst.targets)
    if name == 'M':
        for u in range(n):
            yield p, [ErrorLocation(index, u, 'FLIP')]
    elif name == 'X_ERROR':
        for u in range(n):
            yield p, [ErrorLocation(index, u, 'X')]
    elif name == 'Z_ERROR':
        for u in range(n):
            yield p, [ErrorLocation(index, u, 'Z')]
    elif name == 'DEPOLARIZE1':
        for u in range(n):
            x, z = ErrorLocation(index, u, 'X'), ErrorLocation(index, u, 'Z')
            yield p / 3, [x]
            yield p / 3, [x, z]
            yield p / 3, [z]
    elif name == 'DEPOLARIZE2':
        for u in range(n // 2):
            for pauli in PAULIS_2:
                parts = []
                for k, c in enumerate(pauli):
                    for comp in 'XZ':
                        if c == comp or c == 'Y':
                            single = comp + 'I' if k == 0 else 'I' + comp
                            parts.append(ErrorLocation(index, u, single))
                yield p / 15, parts


def extract_dem(noisy: Circuit | Program) -> DetectorErrorModel:
    """Builds the detector error model of a flattened noisy circuit."""
    prog = noisy if isinstance(noisy, Program) else compile_circuit(noisy)
    circuit = prog.circuit
    effects: list[tuple[float, list[ErrorLocation]]] = []
    for k, inst in enumerate(circuit.instructions):
        if inst.is_channel:
            effects.extend(_effects(inst, k))

    components = sorted({c for _, parts in effects for c in parts},
                        key=lambda c: (c.instruction, c.target, c.effect))
    slot = {c: j for j, c in enumerate(components)}
    dets, obs = propagate_errors(prog, [[c] for c in components])
    symptoms = []
    for j, c in enumerate(components):
        d = tuple(int(i) for i in np.flatnonzero(dets[j]))
        if len(d) > 2:
            raise DemError(
                f'component {c.effect} after instruction {c.instruction} '
                f'({circuit.instructions[c.instruction].name}) target {c.target} fires '
                f'{len(d)} detectors {list(d)}; the circuit is not graphlike')
        symptoms.append((d, tuple(int(i) for i in np.flatnonzero(obs[j]))))

    acc: dict[tuple, float] = {}
    sources: dict[tuple, list[ErrorLocation]] = {}
    for p, parts in effects:
        for c in parts:
            key = symptoms[slot[c]]
            if not key[0] and not key[1]:
                continue
            acc[key] = xor_probability(acc.get(key, 0.0), p)
            sources.setdefault(key, []).append(c)

    mechanisms, undetectable = [], []
    for key in sorted(acc):
        m = ErrorMechanism(acc[key], key[0], key[1], tuple(dict.fromkeys(sources[key])))
        (mechanisms if key[0] else undetectable).append(m)
    return DetectorErrorModel(prog.num_detectors, prog.num_observables,
                              tuple(mechanisms), tuple(undetectable))


# ---------------------------------------------------------------------------
# .dem text

def format_dem(dem: DetectorErrorModel) -> str:
    lines = [f'# detectors={dem.num_detectors} observables={dem.num_observables}']
    for m in sorted(dem.mechanisms + dem.undetectable, key=lambda m: m.key):
        targets = [f'D{d}' for d in m.detectors] + [f'L{o}' for o in m.observables]
        lines.append(f'error({m.p:.12g}) ' + ' '.join(targets))
    return '\n'.join(lines) + '\n'


def write_dem(dem: DetectorErrorModel, out: TextIO) -> None:
    out.write(format_dem(dem))


_ERROR_LINE = re.compile(r'error\(([^)]*)\)((?:\s+[DL]\d+)+)\s*$')


def parse_dem(text: str) -> DetectorErrorModel:
    num_d: Optional[int] = None
    num_o: Optional[int] = None
    mechanisms, undetectable = [], []
    for line_number, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if line.startswith('#'):
            fields = dict(kv.split('=', 1) for kv in line[1:].split() if '=' in kv)
            if 'detectors' in fields:
                num_d = int(fields['detectors'])
            if 'observables' in fields:
                num_o = int(fields['observables'])
            continue
        if not line:
            continue
        match = _ERROR_LINE.match(line)
        if not match:
            raise DemError(f'line {line_number}: cannot parse {line!r}')
        p = float(match.group(1))
        if not 0 < p <= 1:
            raise DemError(f'line {line_number}: probability {p} out of range')
        words = match.group(2).split()
        d = tuple(sorted(int(w[1:]) for w in words if w[0] == 'D'))
        o = tuple(sorted(int(w[1:]) for w in words if w[0] == 'L'))
        m = ErrorMechanism(p, d, o)
        (mechanisms if d else undetectable).append(m)
    if num_d is None:
        num_d = max((max(m.detectors) for m in mechanisms), default=-1) + 1
    if num_o is None:
        num_o = max((max(m.observables) for m in mechanisms + undetectable if m.observables), default=-1) + 1
    return DetectorErrorModel(num_d, num_o, tuple(mechanisms), tuple(undetectable))


def read_dem(src: TextIO) -> DetectorErrorModel:
    return parse_dem(src.read())


# ---------------------------------------------------------------------------
# Matching graph

@dataclasses.dataclass(frozen=True)
class DecodingGraph:
    """Detectors 0..num_detectors-1 plus a boundary node numbered num_detectors.

    Edge k joins nodes u[k] < v[k], has probability p[k], weight ln((1-p)/p)
    and observable bitmask mask[k] (bit j set when observable j flips).
    """
    num_detectors: int
    num_observables: int
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    weight: np.ndarray
    mask: np.ndarray

    @property
    def boundary(self) -> int:
        return self.num_detectors

    @property
    def num_nodes(self) -> int:
        return self.num_detectors + 1

    @property
    def num_edges(self) -> int:
        return len(self.u)

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): k for k, (a, b) in enumerate(zip(self.u, self.v))}


def edge_weight(p: float) -> float:
    return math.log((1 - p) / p)


def build_graph(dem: DetectorErrorModel | Iterable[ErrorMechanism],
                num_detectors: Optional[int] = None,
                num_observables: Optional[int] = None) -> DecodingGraph:
    """Turns graphlike mechanisms into a matching graph.

    Parallel mechanisms on the same node pair are merged with the XOR formula.
    When they disagree on observables, the merged edge keeps the mask of the
    most likely one.
    """
    if isinstance(dem, DetectorErrorModel):
        mechs = dem.mechanisms
        num_detectors = dem.num_detectors if num_detectors is None else num_detectors
        num_observables = dem.num_observables if num_observables is None else num_observables
    else:
        mechs = tuple(dem)
    if num_detectors is None:
        num_detectors = max((max(m.detectors) for m in mechs), default=-1) + 1
    if num_observables is None:
        num_observables = max((max(m.observables) for m in mechs if m.observables), default=-1) + 1
    boundary = num_detectors

    merged: dict[tuple[int, int], list] = {}
    for m in mechs:
        if not 1 <= len(m.detectors) <= 2:
            raise DemError(f'mechanism {m.key} is not an edge ({len(m.detectors)} detectors)')
        if not 0 < m.p < 0.5:
            raise DemError(f'mechanism {m.key} has probability {m.p}; edge weights need 0 < p < 0.5')
        if max(m.detectors) >= num_detectors:
            raise DemError(f'mechanism {m.key} references a detector beyond {num_detectors - 1}')
        a, b = (m.detectors[0], boundary) if len(m.detectors) == 1 else m.detectors
        mask = sum(1 << o for o in m.observables)
        entry = merged.get((a, b))
        if entry is None:
            merged[(a, b)] = [m.p, mask, m.p]
        else:
            entry[0] = xor_probability(entry[0], m.p)
            if m.p > entry[2]:
                entry[1], entry[2] = mask, m.p
    keys = sorted(merged)
    p = np.array([merged[k][0] for k in keys], float)
    if np.any(p >= 0.5):
        bad = keys[int(np.argmax(p >= 0.5))]
        raise DemError(f'merged edge {bad} has probability >= 0.5; edge weights need 0 < p < 0.5')
    return DecodingGraph(
        num_detectors=num_detectors,
        num_observables=num_observables,
        u=np.array([k[0] for k in keys], np.intp),
        v=np.array([k[1] for k in keys], np.intp),
        p=p,
        weight=np.log((1 - p) / p),
        mask=np.array([merged[k][1] for k in keys], np.int64),
    )
