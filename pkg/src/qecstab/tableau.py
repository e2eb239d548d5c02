"""Stabilizer tableau simulation, used as an independent oracle for the frame sampler.

The tableau follows Aaronson and Gottesman (destabilizer rows 0..n-1, stabilizer
rows n..2n-1). The X/Z parts of the tableau evolve identically in every trial,
because whether a measurement is random, and which rows it updates, never
depends on earlier outcomes or on Pauli noise. Only the sign bits differ, so a
batch of trials shares one tableau and keeps one sign column per trial.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from qecstab.circuit import Circuit, resolve_records
from qecstab.sim import ErrorLocation, SimulationError, _PAULI_BITS, _validate_location


def _phase_exponent(x1, z1, x2, z2) -> np.ndarray:
    """Sum over qubits of the i-exponent picked up multiplying Pauli 1 into Pauli 2, mod 4.

    Arrays broadcast over leading row axes; the last axis is the qubit axis.
    """
    x1 = x1.astype(np.int8)
    z1 = z1.astype(np.int8)
    x2 = x2.astype(np.int8)
    z2 = z2.astype(np.int8)
    g = np.where(
        x1 & z1, z2 - x2,
        np.where(x1, z2 * (2 * x2 - 1), np.where(z1, x2 * (1 - 2 * z2), 0)))
    return g.sum(axis=-1) % 4


class TableauSimulator:
    """Simulates `trials` independent runs of a Clifford circuit at once."""

    def __init__(self, num_qubits: int, trials: int, rng: np.random.Generator):
        n = num_qubits
        self.n = n
        self.trials = trials
        self.rng = rng
        self.x = np.zeros((2 * n, n), bool)
        self.z = np.zeros((2 * n, n), bool)
        self.x[np.arange(n), np.arange(n)] = True
        self.z[n + np.arange(n), np.arange(n)] = True
        self.r = np.zeros((2 * n, trials), bool)

    # Gates

    def h(self, q: int) -> None:
        self.r ^= (self.x[:, q] & self.z[:, q])[:, None]
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def cz(self, a: int, b: int) -> None:
        xa, xb, za, zb = self.x[:, a], self.x[:, b], self.z[:, a], self.z[:, b]
        self.r ^= (xa & xb & (za ^ zb))[:, None]
        self.z[:, a] ^= xb
        self.z[:, b] ^= xa

    def pauli(self, q: int, pauli: str, mask: Optional[np.ndarray] = None) -> None:
        """Applies a Pauli to qubit q in the trials selected by `mask` (all if None)."""
        xb, zb = _PAULI_BITS[pauli]
        flip = np.zeros(2 * self.n, bool)
        if xb:
            flip ^= self.z[:, q]
        if zb:
            flip ^= self.x[:, q]
        if mask is None:
            self.r ^= flip[:, None]
        else:
            self.r ^= np.outer(flip, mask)

    def pauli_batch(self, qubits, xs: np.ndarray, zs: np.ndarray) -> None:
        """Applies X^xs[j] Z^zs[j] to qubits[j]; xs and zs are (len(qubits), trials) bool."""
        q = np.asarray(qubits, np.intp)
        flips = self.z[:, q].astype(np.float32) @ xs.astype(np.float32)
        flips += self.x[:, q].astype(np.float32) @ zs.astype(np.float32)
        self.r ^= (flips.astype(np.int64) & 1).astype(bool)

    # Measurement

    def _rowsum_into(self, targets: np.ndarray, p: int) -> None:
        """Row h <- row p * row h for each h in targets."""
        c = _phase_exponent(self.x[p], self.z[p], self.x[targets], self.z[targets]) // 2
        self.x[targets] ^= self.x[p]
        self.z[targets] ^= self.z[p]
        self.r[targets] ^= self.r[p] ^ c.astype(bool)[:, None]

    def measure(self, q: int) -> np.ndarray:
        """Z-basis measurement; returns the outcome bit of every trial."""
        n = self.n
        hits = np.flatnonzero(self.x[n:, q])
        if hits.size:
            p = n + hits[0]
            others = np.flatnonzero(self.x[:, q])
            others = others[others != p]
            if others.size:
                self._rowsum_into(others, p)
            self.x[p - n] = self.x[p]
            self.z[p - n] = self.z[p]
            self.r[p - n] = self.r[p]
            self.x[p] = False
            self.z[p] = False
            self.z[p, q] = True
            self.r[p] = self.rng.integers(0, 2, size=self.trials).astype(bool)
            return self.r[p].copy()
        sx = np.zeros(n, bool)
        sz = np.zeros(n, bool)
        sr = np.zeros(self.trials, bool)
        for i in np.flatnonzero(self.x[:n, q]):
            row = n + i
            c = _phase_exponent(self.x[row], self.z[row], sx, sz) // 2
            sx ^= self.x[row]
            sz ^= self.z[row]
            sr ^= self.r[row] ^ bool(c)
        return sr

    def reset(self, q: int) -> None:
        outcome = self.measure(q)
        if outcome.any():
            self.pauli(q, 'X', outcome)


@dataclasses.dataclass
class TableauRun:
    """Raw outcomes of a batch of tableau trials and the derived parities."""
    measurements: np.ndarray  # (trials, num_measurements) bool
    detectors: np.ndarray  # (trials, num_detectors) bool
    observables: np.ndarray  # (trials, num_observables) bool


def run_tableau(circuit: Circuit, trials: int, seed: int, *,
                noisy: bool = True,
                errors: Optional[list[list[ErrorLocation]]] = None) -> TableauRun:
    """Runs a flattened circuit on the tableau simulator.

    With `noisy`, channels are sampled independently per trial. `errors` (one
    list per trial) injects specific faults after their instructions; it
    requires `trials == len(errors)`.
    """
    if circuit.has_repeat():
        raise SimulationError('circuit must be flattened before simulation')
    if errors is not None and len(errors) != trials:
        raise ValueError('need one fault list per trial')
    rng = np.random.default_rng(seed)
    sim = TableauSimulator(circuit.num_qubits, trials, rng)
    injected: dict[int, list[tuple[int, ErrorLocation]]] = {}
    for trial, errs in enumerate(errors or ()):
        for loc in errs:
            _validate_location(circuit, loc)
            injected.setdefault(loc.instruction, []).append((trial, loc))

    records: list[np.ndarray] = []
    for k, inst in enumerate(circuit.instructions):
        name, t = inst.name, inst.targets
        p = inst.args[0] if inst.args else 0.0
        if name == 'H':
            for q in t:
                sim.h(q)
        elif name == 'CZ':
            for a, b in zip(t[::2], t[1::2]):
                sim.cz(a, b)
        elif name == 'R':
            for q in t:
                sim.reset(q)
        elif name == 'M':
            for q in t:
                out = sim.measure(q)
                if noisy and p:
                    out = out ^ (rng.random(trials) < p)
                records.append(out)
        elif noisy and p and name in ('X_ERROR', 'Z_ERROR', 'DEPOLARIZE1'):
            hit = rng.random((len(t), trials)) < p
            if name == 'DEPOLARIZE1':
                # 1 = X, 2 = Z, 3 = Y.
                code = np.where(hit, rng.integers(1, 4, size=hit.shape), 0)
                sim.pauli_batch(t, (code & 1).astype(bool), (code & 2).astype(bool))
            elif name == 'X_ERROR':
                sim.pauli_batch(t, hit, np.zeros_like(hit))
            else:
                sim.pauli_batch(t, np.zeros_like(hit), hit)
        elif noisy and p and name == 'DEPOLARIZE2':
            pairs = len(t) // 2
            hit = rng.random((pairs, trials)) < p
            # Bits of the code: x on the first qubit, z on the first, x on the second, z on the second.
            code = np.where(hit, rng.integers(1, 16, size=hit.shape), 0)
            xs = np.concatenate([code & 1, code & 4]).astype(bool)
            zs = np.concatenate([code & 2, code & 8]).astype(bool)
            sim.pauli_batch(list(t[::2]) + list(t[1::2]), xs, zs)
        for trial, loc in injected.get(k, ()):
            mask = np.zeros(trials, bool)
            mask[trial] = True
            if loc.effect == 'FLIP':
                first = len(records) - len(t)
                records[first + loc.target] = records[first + loc.target] ^ mask
            elif len(loc.effect) == 2:
                for j, pauli in enumerate(loc.effect):
                    if pauli != 'I':
                        sim.pauli(t[2 * loc.target + j], pauli, mask)
            else:
                sim.pauli(t[loc.target], loc.effect, mask)

    meas = np.array(records, bool).T if records else np.zeros((trials, 0), bool)
    rec = resolve_records(circuit)
    return TableauRun(meas, _parity(meas, rec.detectors), _parity(meas, rec.observables))


def _parity(meas: np.ndarray, groups) -> np.ndarray:
    out = np.zeros((meas.shape[0], len(groups)), bool)
    for k, g in enumerate(groups):
        if g:
            out[:, k] = np.bitwise_xor.reduce(meas[:, list(g)], axis=1)
    return out


@dataclasses.dataclass(frozen=True)
class DeterminismReport:
    trials: int
    num_detectors: int
    num_observables: int
    # Detectors whose parity varied across trials or was always 1.
    bad_detectors: tuple[int, ...]
    # Observables whose parity varied across trials.
    bad_observables: tuple[int, ...]
    observable_values: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.bad_detectors and not self.bad_observables

    @property
    def deterministic_fraction(self) -> float:
        if not self.num_detectors:
            return 1.0
        return 1 - len(self.bad_detectors) / self.num_detectors


def verify_determinism(ideal: Circuit, trials: int = 100, seed: int = 0) -> DeterminismReport:
    """Checks with the tableau oracle that every detector is deterministically 0.

    Problems are reported, not raised.
    """
    from qecstab.circuit import flatten
    from qecstab.noise import strip_noise
    flat = flatten(strip_noise(ideal))
    run = run_tableau(flat, trials, seed, noisy=False)
    d = run.detectors
    bad_d = np.flatnonzero(d.any(axis=0))
    o = run.observables
    bad_o = np.flatnonzero(o.any(axis=0) & ~o.all(axis=0))
    values = tuple(int(v) for v in o[0]) if trials else ()
    return DeterminismReport(
        trials=trials,
        num_detectors=d.shape[1],
        num_observables=o.shape[1],
        bad_detectors=tuple(int(i) for i in bad_d),
        bad_observables=tuple(int(i) for i in bad_o),
        observable_values=values,
    )
