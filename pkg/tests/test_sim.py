import io
import pathlib

import numpy as np
import pytest

from qecstab.circuit import flatten, parse_circuit
from qecstab.codegen import ExperimentSpec, generate
from qecstab.noise import NoiseModel, apply_noise
from qecstab.sim import (
    BLOCK_SHOTS, DetectionData, ErrorLocation, SimulationError, compile_circuit, dets_text,
    inject_errors, propagate_errors, read_dets, sample_frames, sample_with_trace, write_dets)
from qecstab.tableau import run_tableau

DATA = pathlib.Path(__file__).parent / 'data'


def _reference():
    return flatten(parse_circuit((DATA / 'stability_z_d4_r25.stim').read_text()))


def _noisy(spec: ExperimentSpec, p: float):
    return flatten(apply_noise(generate(spec), NoiseModel.uniform(p)))


def _boundary_ancilla_flips(c, ancilla: int, rounds=None):
    """FLIP locations on every measurement of `ancilla` (optionally only some rounds)."""
    locs = []
    for k, inst in enumerate(c):
        if inst.name == 'M' and ancilla in inst.targets:
            locs.append(ErrorLocation(k, inst.targets.index(ancilla), 'FLIP'))
    return locs if rounds is None else [locs[r] for r in rounds]


def _x_ancillas(c):
    coords = c.qubit_coords
    # Ancillas sit at half-integer coordinates; X plaquettes of the Z-basis
    # stability patch are the ones with no first-round detector.
    first = {args[:2] for args in (i.args for i in c if i.name == 'DETECTOR') if args[2] == 0}
    return [q for q, (x, y) in coords.items() if x != int(x) and (x, y) not in first]


@pytest.mark.parametrize('spec', [
    ExperimentSpec('stability', 'Z', 4, 25),
    ExperimentSpec('memory', 'X', 3, 2),
])
def test_noiseless_sampling_is_silent(spec):
    data = sample_frames(flatten(generate(spec)), 1000, 5)
    assert not data.detector_bits().any()
    assert not data.observable_bits().any()


def test_unflattened_circuit_rejected():
    with pytest.raises(SimulationError):
        sample_frames(parse_circuit('REPEAT 2 {\n    M 0\n}\n'), 10, 0)


def test_worker_count_does_not_change_output():
    c = _noisy(ExperimentSpec('stability', 'Z', 4, 25), 0.001)
    shots = 2 * BLOCK_SHOTS + 100
    assert sample_frames(c, shots, 3, workers=1) == sample_frames(c, shots, 3, workers=3)


def test_shot_prefix_is_stable():
    c = _noisy(ExperimentSpec('stability', 'Z', 4, 5), 0.01)
    small = sample_frames(c, 1000, 8)
    large = sample_frames(c, 40_000, 8)
    assert np.array_equal(small.detector_bits(), large.detector_bits(0, 1000))
    assert np.array_equal(small.observable_bits(), large.observable_bits(0, 1000))
    assert sample_frames(c, 1000, 9) != small


def _rate(circuit_text: str, shots: int = 200_000, seed: int = 1) -> np.ndarray:
    data = sample_frames(parse_circuit(circuit_text), shots, seed)
    return data.detector_bits().mean(axis=0)


def _within(rate: float, p: float, shots: int = 200_000, sigmas: float = 5) -> bool:
    return abs(rate - p) <= sigmas * np.sqrt(p * (1 - p) / shots)


def test_x_error_rate():
    (r,) = _rate('R 0\nX_ERROR(0.2) 0\nM 0\nDETECTOR rec[-1]\n')
    assert _within(r, 0.2)


def test_z_error_is_invisible_to_z_measurement():
    assert _rate('R 0\nZ_ERROR(0.4) 0\nM 0\nDETECTOR rec[-1]\n')[0] == 0


def test_measurement_flip_rate():
    (r,) = _rate('R 0\nM(0.05) 0\nDETECTOR rec[-1]\n')
    assert _within(r, 0.05)


def test_depolarize1_rates():
    # X and Y flip a Z measurement; Y and Z flip an X measurement (H before M).
    r = _rate('R 0 1\nDEPOLARIZE1(0.3) 0 1\nH 1\nM 0 1\nDETECTOR rec[-2]\nDETECTOR rec[-1]\n')
    assert _within(r[0], 0.2) and _within(r[1], 0.2)


def test_depolarize2_rates():
    r = _rate('R 0 1\nDEPOLARIZE2(0.15) 0 1\nM 0 1\n'
              'DETECTOR rec[-2]\nDETECTOR rec[-1]\nDETECTOR rec[-2] rec[-1]\n')
    # 8 of the 15 Paulis flip each qubit; 8 flip exactly one of the two.
    assert _within(r[0], 0.08) and _within(r[1], 0.08) and _within(r[2], 0.08)


def test_reset_clears_the_frame():
    assert _rate('R 0\nX_ERROR(1) 0\nR 0\nM 0\nDETECTOR rec[-1]\n')[0] == 0


def test_reference_fire_rate_agrees_with_tableau():
    c = flatten(apply_noise(_reference(), NoiseModel.uniform(0.001)))
    frames = sample_frames(c, 1_000_000, 11)
    rate = frames.detector_fire_rate()
    assert 0.001 < rate < 0.05
    trials = 10_000
    oracle = run_tableau(c, trials, 12)
    oracle_rate = oracle.detectors.mean()
    cells_frames = 1_000_000 * c.num_detectors
    cells_oracle = trials * c.num_detectors
    sd = np.sqrt(rate * (1 - rate) * (1 / cells_frames + 1 / cells_oracle))
    assert abs(rate - oracle_rate) < 3 * sd


def test_boundary_chain_is_silent_logical():
    c = _reference()
    for ancilla in _x_ancillas(c):
        locs = _boundary_ancilla_flips(c, ancilla)
        assert len(locs) == 25
        dets, obs = inject_errors(c, locs)
        assert not dets.any()
        assert obs[0]


def test_single_middle_round_flip_fires_a_pair():
    c = _reference()
    ancilla = _x_ancillas(c)[0]
    locs = _boundary_ancilla_flips(c, ancilla, rounds=[12])
    dets, obs = inject_errors(c, locs)
    fired = np.flatnonzero(dets)
    assert len(fired) == 2
    assert not obs[0]
    coords = c.detector_coords
    a, b = coords[fired[0]], coords[fired[1]]
    assert a[:2] == b[:2] and abs(a[2] - b[2]) == 1
    run = run_tableau(c, 1, 0, noisy=False, errors=[locs])
    assert np.array_equal(run.detectors[0], dets)


def test_empty_error_list():
    dets, obs = inject_errors(_reference(), [])
    assert not dets.any() and not obs.any()


def test_invalid_locations_rejected():
    c = _reference()
    with pytest.raises(SimulationError):
        inject_errors(c, [ErrorLocation(0, 0, 'X')])
    with pytest.raises(SimulationError):
        inject_errors(c, [ErrorLocation(10**6, 0, 'X')])
    m = next(k for k, inst in enumerate(c) if inst.name == 'M')
    with pytest.raises(SimulationError):
        inject_errors(c, [ErrorLocation(m, 99, 'FLIP')])


@pytest.mark.parametrize('spec', [
    ExperimentSpec('stability', 'Z', 4, 5),
    ExperimentSpec('memory', 'X', 3, 2),
])
def test_propagation_is_linear(spec):
    c = _noisy(spec, 0.01)
    prog = compile_circuit(c)
    _, events = sample_with_trace(prog, 400, 2)
    pairs = [(events[2 * i], events[2 * i + 1]) for i in range(100)]
    sets = []
    for a, b in pairs:
        sets += [a, b, sorted(set(a) ^ set(b), key=lambda e: (e.instruction, e.target, e.effect))]
    dets, obs = propagate_errors(prog, sets)
    for i in range(100):
        assert np.array_equal(dets[3 * i] ^ dets[3 * i + 1], dets[3 * i + 2])
        assert np.array_equal(obs[3 * i] ^ obs[3 * i + 1], obs[3 * i + 2])


def test_trace_replays_to_the_same_shots():
    prog = compile_circuit(_noisy(ExperimentSpec('stability', 'Z', 4, 5), 0.01))
    data, events = sample_with_trace(prog, 300, 4)
    assert data == sample_frames(prog, 300, 4)
    dets, obs = propagate_errors(prog, events)
    assert np.array_equal(dets, data.detector_bits())
    assert np.array_equal(obs, data.observable_bits())


def test_dets_round_trip():
    c = _noisy(ExperimentSpec('memory', 'Z', 3, 2), 0.02)
    data = sample_frames(c, 130, 6)
    text = dets_text(data)
    header, first = text.split('\n')[:2]
    assert header == f'# detectors={c.num_detectors} observables=1 seed=6'
    assert len(first) == c.num_detectors + 2 and first[-2] == ':'
    assert read_dets(io.StringIO(text)) == data


def test_from_bits_round_trip():
    rng = np.random.default_rng(1)
    d = rng.random((77, 9)) < 0.3
    o = rng.random((77, 2)) < 0.5
    data = DetectionData.from_bits(d, o)
    assert np.array_equal(data.detector_bits(), d)
    assert np.array_equal(data.observable_bits(), o)
    assert [f.tolist() for f in data.fired()] == [np.flatnonzero(row).tolist() for row in d]
    buf = io.StringIO()
    write_dets(data, buf)
    assert read_dets(io.StringIO(buf.getvalue())) == data


@pytest.mark.parametrize('text', [
    'no header\n',
    '# detectors=2 observables=1 seed=0\n01:\n',
    '# detectors=2 observables=1 seed=0\n012:1\n',
    '# detectors=2 observables=1 seed=0\n01;1\n',
])
def test_malformed_dets_rejected(text):
    with pytest.raises(ValueError):
        read_dets(io.StringIO(text))
