"""Pauli frame sampling of detection events.

Frames are stored bit-packed, 64 shots per little-endian uint64 word: for each
qubit an X-flip row and a Z-flip row, and for each measurement a flip row. Gates
conjugate the rows word-parallel; noise channels toggle a sparse set of bits.

Randomness: shots are grouped into fixed blocks of BLOCK_SHOTS. Block `b` of a
run with seed `s` draws from ``Generator(Philox(SeedSequence(s, spawn_key=(b,))))``
and always simulates the full block (extra shots are discarded), so the bits
of shot `i` depend only on `(s, i)` and never on the total shot count or the
number of workers.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import io
from typing import Callable, Optional, Sequence, TextIO

import numpy as np

from qecstab.circuit import Circuit, resolve_records

BLOCK_SHOTS = 32768
WORD = np.dtype('<u8')

# Opcodes.
_NOP, _H, _CZ, _R, _M, _XERR, _ZERR, _DEP1, _DEP2 = range(9)
_OPCODE = {
    'H': _H, 'CZ': _CZ, 'R': _R, 'M': _M,
    'X_ERROR': _XERR, 'Z_ERROR': _ZERR, 'DEPOLARIZE1': _DEP1, 'DEPOLARIZE2': _DEP2,
}
_PAULI_BITS = {'I': (0, 0), 'X': (1, 0), 'Y': (1, 1), 'Z': (0, 1)}


class SimulationError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class ErrorLocation:
    """A specific fault: `effect` applied right after flattened instruction `instruction`.

    `target` indexes the instruction's targets, or its target pairs when the
    effect is a two-qubit Pauli string such as 'XZ'. The effect 'FLIP' flips the
    `target`-th result of an M instruction.
    """
    instruction: int
    target: int
    effect: str


@dataclasses.dataclass(frozen=True)
class _Op:
    index: int
    code: int
    targets: np.ndarray
    p: float = 0.0
    first_measurement: int = 0


@dataclasses.dataclass(frozen=True)
class Program:
    """A flattened circuit compiled for frame propagation."""
    circuit: Circuit
    ops: tuple[_Op, ...]
    num_qubits: int
    num_measurements: int
    detectors: tuple[tuple[int, ...], ...]
    observables: tuple[tuple[int, ...], ...]

    @property
    def num_detectors(self) -> int:
        return len(self.detectors)

    @property
    def num_observables(self) -> int:
        return len(self.observables)


def compile_circuit(circuit: Circuit) -> Program:
    if circuit.has_repeat():
        raise SimulationError('circuit must be flattened before simulation')
    records = resolve_records(circuit)
    ops = []
    measurements = 0
    for k, inst in enumerate(circuit.instructions):
        code = _OPCODE.get(inst.name, _NOP)
        if code == _NOP:
            continue
        p = inst.args[0] if inst.args else 0.0
        if not 0 <= p <= 1:
            raise SimulationError(f'instruction {k} has invalid probability {p}')
        ops.append(_Op(k, code, np.array(inst.targets, dtype=np.intp), p, measurements))
        if code == _M:
            measurements += len(inst.targets)
    return Program(
        circuit=circuit,
        ops=tuple(ops),
        num_qubits=circuit.num_qubits,
        num_measurements=measurements,
        detectors=records.detectors,
        observables=records.observables,
    )


# ---------------------------------------------------------------------------
# Propagation

_EMPTY = np.zeros(0, np.intp)
_EMPTY.flags.writeable = False


@dataclasses.dataclass
class _Flips:
    """Bit toggles applied right after one instruction."""
    qubits: np.ndarray
    shots: np.ndarray
    x: np.ndarray
    z: np.ndarray
    measurements: np.ndarray = _EMPTY
    measurement_shots: np.ndarray = _EMPTY


def _toggle(rows: np.ndarray, index: np.ndarray, shots: np.ndarray) -> None:
    if shots.size:
        np.bitwise_xor.at(rows, (index, shots >> 6), np.left_shift(np.uint64(1), (shots & 63).astype(np.uint64)))


def _propagate(prog: Program, shots: int, flips_after: Callable[[_Op], Optional[_Flips]]):
    words = (shots + 63) // 64
    x = np.zeros((prog.num_qubits, words), WORD)
    z = np.zeros((prog.num_qubits, words), WORD)
    # One spare all-zero row so padded detector index lists can point at it.
    rec = np.zeros((prog.num_measurements + 1, words), WORD)
    for op in prog.ops:
        t = op.targets
        code = op.code
        if code == _H:
            tmp = x[t]
            x[t] = z[t]
            z[t] = tmp
        elif code == _CZ:
            a, b = t[::2], t[1::2]
            z[a] ^= x[b]
            z[b] ^= x[a]
        elif code == _R:
            x[t] = 0
            z[t] = 0
        elif code == _M:
            rec[op.first_measurement:op.first_measurement + len(t)] = x[t]
            z[t] = 0
        f = flips_after(op)
        if f is not None:
            _toggle(x, f.qubits[f.x], f.shots[f.x])
            _toggle(z, f.qubits[f.z], f.shots[f.z])
            _toggle(rec, f.measurements, f.measurement_shots)
    return _parities(prog.detectors, rec), _parities(prog.observables, rec)


def _parities(groups: Sequence[tuple[int, ...]], rec: np.ndarray) -> np.ndarray:
    if not groups:
        return np.zeros((0, rec.shape[1]), WORD)
    width = max(len(g) for g in groups) or 1
    spare = rec.shape[0] - 1
    index = np.full((len(groups), width), spare, dtype=np.intp)
    for k, g in enumerate(groups):
        index[k, :len(g)] = g
    return np.bitwise_xor.reduce(rec[index], axis=1)


# ---------------------------------------------------------------------------
# Random sampling

class _Sampler:
    def __init__(self, rng: np.random.Generator, shots: int, trace: Optional[list] = None):
        self.rng = rng
        self.shots = shots
        self.trace = trace

    def __call__(self, op: _Op) -> Optional[_Flips]:
        if op.p == 0 or op.code in (_H, _CZ, _R):
            return None
        code, t, shots, rng = op.code, op.targets, self.shots, self.rng
        units = len(t) // 2 if code == _DEP2 else len(t)
        pos = _bernoulli_positions(rng, units * shots, op.p)
        k = len(pos)
        if k == 0:
            return None
        unit, shot = np.divmod(pos, shots)
        empty = _EMPTY
        if code == _M:
            if self.trace is not None:
                for u, s in zip(unit, shot):
                    self.trace.append((int(s), ErrorLocation(op.index, int(u), 'FLIP')))
            return _Flips(empty, empty, empty.astype(bool), empty.astype(bool),
                          op.first_measurement + unit, shot)
        if code == _XERR:
            xs, zs = np.ones(k, bool), np.zeros(k, bool)
            return self._emit(op, t[unit], shot, xs, zs, unit)
        if code == _ZERR:
            xs, zs = np.zeros(k, bool), np.ones(k, bool)
            return self._emit(op, t[unit], shot, xs, zs, unit)
        if code == _DEP1:
            e = rng.integers(1, 4, size=k)
            return self._emit(op, t[unit], shot, (e & 1).astype(bool), (e & 2).astype(bool), unit)
        # _DEP2: effect code 1..15, bits (x1, z1, x2, z2).
        e = rng.integers(1, 16, size=k)
        qubits = np.concatenate([t[2 * unit], t[2 * unit + 1]])
        xs = np.concatenate([(e & 1), (e & 4)]).astype(bool)
        zs = np.concatenate([(e & 2), (e & 8)]).astype(bool)
        if self.trace is not None:
            for u, s, c in zip(unit, shot, e):
                name = _pauli_name(c & 1, c & 2) + _pauli_name(c & 4, c & 8)
                self.trace.append((int(s), ErrorLocation(op.index, int(u), name)))
        return _Flips(qubits, np.concatenate([shot, shot]), xs, zs)

    def _emit(self, op, qubits, shot, xs, zs, unit):
        if self.trace is not None:
            for u, s, xb, zb in zip(unit, shot, xs, zs):
                self.trace.append((int(s), ErrorLocation(op.index, int(u), _pauli_name(xb, zb))))
        return _Flips(qubits, shot, xs, zs)


def _bernoulli_positions(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Indices of successes among n independent Bernoulli(p) trials, via geometric gaps."""
    mean = n * p
    chunk = int(mean + 6 * mean ** 0.5 + 16)
    pos = np.cumsum(rng.geometric(p, size=chunk)) - 1
    while pos[-1] < n:
        more = np.cumsum(rng.geometric(p, size=chunk)) + pos[-1]
        pos = np.concatenate([pos, more])
    return pos[:np.searchsorted(pos, n)]


def _pauli_name(xb, zb) -> str:
    return {(0, 0): 'I', (1, 0): 'X', (0, 1): 'Z', (1, 1): 'Y'}[(int(bool(xb)), int(bool(zb)))]


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _sample_block(args) -> tuple[np.ndarray, np.ndarray]:
    prog, seed, block = args
    return _propagate(prog, BLOCK_SHOTS, _Sampler(block_rng(seed, block), BLOCK_SHOTS))


def _words(shots: int) -> int:
    return (shots + 63) // 64


def _shot_major(rows: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Packed (n, words) rows -> (stop - start, n) bool matrix. `start` must be a multiple of 64."""
    assert start % 64 == 0
    chunk = np.ascontiguousarray(rows[:, start // 64:_words(stop)])
    bits = np.unpackbits(chunk.view(np.uint8), axis=1, count=stop - start, bitorder='little')
    return bits.T.astype(bool)


def _pack_shots(bits: np.ndarray) -> np.ndarray:
    """(shots, n) bool matrix -> packed (n, words) rows."""
    shots = bits.shape[0]
    packed = np.packbits(np.ascontiguousarray(np.asarray(bits, bool).T), axis=1, bitorder='little')
    out = np.zeros((bits.shape[1], _words(shots) * 8), np.uint8)
    out[:, :packed.shape[1]] = packed
    return out.view(WORD)


@dataclasses.dataclass
class DetectionData:
    """Detection events and actual observable flips for a batch of shots.

    Bits are stored as the simulator produces them: one row per detector (or
    observable), 64 shots per little-endian uint64 word. Bits past `shots` in
    the last word are zero.
    """
    shots: int
    detectors: np.ndarray  # (num_detectors, words) uint64
    observables: np.ndarray  # (num_observables, words) uint64
    seed: Optional[int] = None

    @property
    def num_detectors(self) -> int:
        return self.detectors.shape[0]

    @property
    def num_observables(self) -> int:
        return self.observables.shape[0]

    @staticmethod
    def from_bits(det_bits, obs_bits, seed: Optional[int] = None) -> 'DetectionData':
        det_bits = np.asarray(det_bits, dtype=bool)
        obs_bits = np.asarray(obs_bits, dtype=bool)
        if det_bits.shape[0] != obs_bits.shape[0]:
            raise ValueError('detector and observable rows disagree on the shot count')
        return DetectionData(det_bits.shape[0], _pack_shots(det_bits), _pack_shots(obs_bits), seed)

    def detector_bits(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        return _shot_major(self.detectors, start, self.shots if stop is None else min(stop, self.shots))

    def observable_bits(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        return _shot_major(self.observables, start, self.shots if stop is None else min(stop, self.shots))

    def fired(self, start: int = 0, stop: Optional[int] = None) -> list[np.ndarray]:
        """Indices of the fired detectors of each shot in [start, stop)."""
        bits = self.detector_bits(start, stop)
        shot, det = np.nonzero(bits)
        return np.split(det, np.searchsorted(shot, np.arange(1, bits.shape[0])))

    def detector_fire_rate(self) -> float:
        if not self.shots or not self.num_detectors:
            return 0.0
        ones = sum(int(np.unpackbits(row.view(np.uint8)).sum()) for row in self.detectors)
        return ones / (self.shots * self.num_detectors)

    def __eq__(self, other):
        if not isinstance(other, DetectionData):
            return NotImplemented
        return (self.shots == other.shots
                and np.array_equal(self.detectors, other.detectors)
                and np.array_equal(self.observables, other.observables))


def _trim(rows: np.ndarray, shots: int) -> np.ndarray:
    rows = rows[:, :_words(shots)].copy()
    tail = shots % 64
    if tail and rows.shape[1]:
        rows[:, -1] &= np.uint64((1 << tail) - 1)
    return rows


def sample_frames(noisy: Circuit | Program, shots: int, seed: int, *, workers: int = 1) -> DetectionData:
    """Samples detection events and observable flips.

    Output is a pure function of (circuit, shots, seed); `workers` only changes
    how the fixed shot blocks are distributed over processes.
    """
    if shots < 1:
        raise SimulationError(f'shots must be positive, got {shots}')
    prog = noisy if isinstance(noisy, Program) else compile_circuit(noisy)
    blocks = (shots + BLOCK_SHOTS - 1) // BLOCK_SHOTS
    jobs = [(prog, seed, b) for b in range(blocks)]
    if workers > 1 and blocks > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, blocks)) as pool:
            parts = list(pool.map(_sample_block, jobs))
    else:
        parts = [_sample_block(job) for job in jobs]
    dets = np.concatenate([d for d, _ in parts], axis=1)
    obs = np.concatenate([o for _, o in parts], axis=1)
    return DetectionData(shots, _trim(dets, shots), _trim(obs, shots), seed)


def sample_with_trace(noisy: Circuit | Program, shots: int, seed: int):
    """Like sample_frames, also returning the faults that occurred in each shot.

    Meant for small shot counts (tests and diagnostics).
    """
    prog = noisy if isinstance(noisy, Program) else compile_circuit(noisy)
    blocks = (shots + BLOCK_SHOTS - 1) // BLOCK_SHOTS
    det_parts, obs_parts = [], []
    events: list[list[ErrorLocation]] = [[] for _ in range(shots)]
    for b in range(blocks):
        trace: list = []
        d, o = _propagate(prog, BLOCK_SHOTS, _Sampler(block_rng(seed, b), BLOCK_SHOTS, trace))
        det_parts.append(d)
        obs_parts.append(o)
        for s, loc in trace:
            shot = b * BLOCK_SHOTS + s
            if shot < shots:
                events[shot].append(loc)
    dets = _trim(np.concatenate(det_parts, axis=1), shots)
    obs = _trim(np.concatenate(obs_parts, axis=1), shots)
    return DetectionData(shots, dets, obs, seed), events


# ---------------------------------------------------------------------------
# Deterministic error injection

_SINGLE_OK = {
    'X_ERROR': {'X'},
    'Z_ERROR': {'Z'},
    'DEPOLARIZE1': {'X', 'Y', 'Z'},
}


def _validate_location(circuit: Circuit, loc: ErrorLocation) -> None:
    if not 0 <= loc.instruction < len(circuit.instructions):
        raise SimulationError(f'no instruction {loc.instruction}')
    inst = circuit.instructions[loc.instruction]
    e = loc.effect
    if e == 'FLIP':
        if inst.name != 'M':
            raise SimulationError(f'FLIP needs an M instruction, found {inst.name}')
        n = len(inst.targets)
    elif len(e) == 2:
        if inst.name not in ('CZ', 'DEPOLARIZE2') or set(e) - set('IXYZ') or e == 'II':
            raise SimulationError(f'two-qubit effect {e!r} not valid after {inst.name}')
        n = len(inst.targets) // 2
    elif len(e) == 1 and e in 'XYZ':
        if inst.name in _SINGLE_OK and e not in _SINGLE_OK[inst.name]:
            raise SimulationError(f'effect {e!r} is not produced by {inst.name}')
        if inst.name == 'DEPOLARIZE2':
            raise SimulationError('DEPOLARIZE2 effects are two-qubit Pauli strings')
        if inst.name not in ('H', 'CZ', 'R', 'M') and inst.name not in _SINGLE_OK:
            raise SimulationError(f'cannot place a Pauli after {inst.name}')
        n = len(inst.targets)
    else:
        raise SimulationError(f'unknown effect {e!r}')
    if not 0 <= loc.target < n:
        raise SimulationError(f'target {loc.target} out of range for instruction {loc.instruction}')


def _injection_table(prog: Program, error_sets: Sequence[Sequence[ErrorLocation]]) -> dict[int, _Flips]:
    circuit = prog.circuit
    first_meas = {op.index: op.first_measurement for op in prog.ops}
    raw: dict[int, list] = {}
    for shot, errs in enumerate(error_sets):
        for loc in errs:
            _validate_location(circuit, loc)
            inst = circuit.instructions[loc.instruction]
            entries = raw.setdefault(loc.instruction, [])
            if loc.effect == 'FLIP':
                entries.append(('m', first_meas[loc.instruction] + loc.target, shot))
            elif len(loc.effect) == 2:
                for k, pauli in enumerate(loc.effect):
                    xb, zb = _PAULI_BITS[pauli]
                    if xb or zb:
                        entries.append(('q', inst.targets[2 * loc.target + k], shot, xb, zb))
            else:
                xb, zb = _PAULI_BITS[loc.effect]
                entries.append(('q', inst.targets[loc.target], shot, xb, zb))
    table = {}
    for index, entries in raw.items():
        q = [e for e in entries if e[0] == 'q']
        m = [e for e in entries if e[0] == 'm']
        table[index] = _Flips(
            qubits=np.array([e[1] for e in q], np.intp),
            shots=np.array([e[2] for e in q], np.intp),
            x=np.array([e[3] for e in q], bool),
            z=np.array([e[4] for e in q], bool),
            measurements=np.array([e[1] for e in m], np.intp),
            measurement_shots=np.array([e[2] for e in m], np.intp),
        )
    return table


def propagate_errors(circuit: Circuit | Program, error_sets: Sequence[Sequence[ErrorLocation]]):
    """Symptoms of many fault sets at once, one bit-packed shot per set.

    Returns (detector bits, observable bits) as bool arrays of shape
    (len(error_sets), num_detectors) and (len(error_sets), num_observables).
    """
    prog = circuit if isinstance(circuit, Program) else compile_circuit(circuit)
    n = max(len(error_sets), 1)
    table = _injection_table(prog, error_sets)
    dets, obs = _propagate(prog, n, lambda op: table.get(op.index))
    return _shot_major(dets, 0, len(error_sets)), _shot_major(obs, 0, len(error_sets))


def inject_errors(circuit: Circuit | Program, errs: Sequence[ErrorLocation]):
    """Detector and observable flips caused by exactly the given faults."""
    dets, obs = propagate_errors(circuit, [list(errs)])
    return dets[0], obs[0]


# ---------------------------------------------------------------------------
# .dets files

def write_dets(data: DetectionData, out: TextIO, chunk: int = 65536) -> None:
    out.write(f'# detectors={data.num_detectors} observables={data.num_observables} seed={data.seed}\n')
    for start in range(0, data.shots, chunk):
        d = data.detector_bits(start, start + chunk).astype(np.uint8) + 48
        o = data.observable_bits(start, start + chunk).astype(np.uint8) + 48
        colon = np.full((d.shape[0], 1), ord(':'), np.uint8)
        newline = np.full((d.shape[0], 1), ord('\n'), np.uint8)
        out.write(np.concatenate([d, colon, o, newline], axis=1).tobytes().decode('ascii'))


def read_dets(src: TextIO) -> DetectionData:
    header = src.readline()
    if not header.startswith('#'):
        raise ValueError('missing .dets header line')
    fields = dict(kv.split('=', 1) for kv in header[1:].split())
    try:
        num_d = int(fields['detectors'])
        num_o = int(fields['observables'])
    except (KeyError, ValueError):
        raise ValueError(f'bad .dets header {header.strip()!r}') from None
    seed = None if fields.get('seed', 'None') == 'None' else int(fields['seed'])
    rows = [line for line in src.read().split('\n') if line]
    if not rows:
        return DetectionData.from_bits(np.zeros((0, num_d), bool), np.zeros((0, num_o), bool), seed)
    raw = np.frombuffer(''.join(rows).encode('ascii'), np.uint8)
    width = num_d + 1 + num_o
    if raw.size != width * len(rows) or any(len(r) != width for r in rows[:1]):
        raise ValueError(f'.dets rows must be {width} characters wide')
    raw = raw.reshape(len(rows), width)
    if np.any(raw[:, num_d] != ord(':')):
        raise ValueError('.dets rows must separate detectors and observables with ":"')
    bits = np.delete(raw, num_d, axis=1)
    if np.any((bits != 48) & (bits != 49)):
        raise ValueError('.dets rows may only contain 0 and 1')
    bits = bits == 49
    return DetectionData.from_bits(bits[:, :num_d], bits[:, num_d:], seed)


def dets_text(data: DetectionData) -> str:
    buf = io.StringIO()
    write_dets(data, buf)
    return buf.getvalue()
