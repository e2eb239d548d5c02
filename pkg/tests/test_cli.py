import csv
import pathlib
import subprocess
import sys

import pytest

from qecstab.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main

DATA = pathlib.Path(__file__).parent / 'data'


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_reproduces_reference_file(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    code, _, _ = _run(capsys, 'gen', '--type', 'stability', '-b', 'Z', '-d', '4', '-r', '25')
    assert code == EXIT_OK
    (written,) = tmp_path.iterdir()
    assert written.name == 'b=Z,d=4,pd=0,pm=0,r=25,type=stability.stim'
    assert written.read_bytes() == (DATA / 'stability_z_d4_r25.stim').read_bytes()


def test_gen_to_stdout(capsys):
    code, out, _ = _run(capsys, 'gen', '--type', 'memory', '--d', '3', '--out', '-')
    assert code == EXIT_OK
    assert out.startswith('QUBIT_COORDS') and 'OBSERVABLE_INCLUDE(0)' in out


def test_noiseless_run_has_no_errors(capsys):
    code, out, _ = _run(capsys, 'run', '--type', 'stability', '-d', '4', '-r', '5', '--shots', '2000')
    assert code == EXIT_OK
    assert out.startswith('shots=2000 errors=0 p_logical=0 region=[0,')


def test_run_is_reproducible(capsys):
    argv = ['run', '--type', 'memory', '-d', '3', '--pu', '0.02', '--pm', '0.02', '--shots', '3000',
            '--seed', '7']
    first = _run(capsys, *argv)
    second = _run(capsys, *argv)
    assert first == second
    assert first[0] == EXIT_OK
    fields = dict(part.split('=', 1) for part in first[1].split())
    assert 0 < int(fields['errors']) < 3000


@pytest.mark.parametrize('argv', [
    [],
    ['bogus'],
    ['gen'],
    ['gen', '--type', 'memory', '--pu', '1.5'],
    ['run', '--type', 'stability', '--shots', '0'],
    ['sample', '--out', 'x.dets'],
    ['sweep', '--type', 'memory', '--pu', '0.1', '0.2', '--pm', '0.1', '--grid', 'paired', '--out', 'x'],
])
def test_usage_errors_exit_one(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, err = _run(capsys, *argv)
    assert code == EXIT_USAGE
    assert 'usage error' in err


@pytest.mark.parametrize('argv', [
    ['gen', '--type', 'stability', '-d', '3'],
    ['gen', '--type', 'memory', '-d', '0'],
    ['decode', '--dem', 'missing.dem', '--dets', 'missing.dets'],
    ['analyze', '--csv', 'missing.csv'],
])
def test_data_errors_exit_two(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, err = _run(capsys, *argv)
    assert code == EXIT_DATA
    assert err.startswith(f'qecstab {argv[0]}: error:')


def test_malformed_circuit_exits_two(capsys, tmp_path):
    bad = tmp_path / 'bad.stim'
    bad.write_text('FOO 1 2\n')
    code, _, err = _run(capsys, 'sample', '--circuit', bad, '--shots', '10', '--out', tmp_path / 'x.dets')
    assert code == EXIT_DATA
    assert not (tmp_path / 'x.dets').exists()


def test_pipeline_matches_run(capsys, tmp_path):
    spec = ['--type', 'stability', '-d', '4', '-r', '5', '--pu', '0.01', '--pm', '0.01']
    circuit = tmp_path / 'c.stim'
    assert _run(capsys, 'gen', *spec, '--out', circuit)[0] == EXIT_OK
    assert _run(capsys, 'sample', '--circuit', circuit, '--shots', '1500', '--seed', '3',
                '--out', tmp_path / 's.dets')[0] == EXIT_OK
    assert _run(capsys, 'dem', '--circuit', circuit, '--out', tmp_path / 'c.dem')[0] == EXIT_OK
    code, decoded, _ = _run(capsys, 'decode', '--dem', tmp_path / 'c.dem', '--dets', tmp_path / 's.dets',
                            '--out', tmp_path / 'pred.txt')
    assert code == EXIT_OK
    _, direct, _ = _run(capsys, 'run', *spec, '--shots', '1500', '--seed', '3')
    assert direct.startswith(decoded.strip() + ' ')
    predictions = (tmp_path / 'pred.txt').read_text().split()
    assert len(predictions) == 1500 and set(''.join(predictions)) <= {'0', '1'}


def test_sweep_analyze_plot(capsys, tmp_path):
    table = tmp_path / 'sweep.csv'
    fits = tmp_path / 'fits.csv'
    code, _, _ = _run(capsys, 'sweep', '--type', 'memory', '--distances', '3', '5', '--pu', '0.02', '0.0',
                      '--shots', '500', '--out', table, '--fits', fits)
    assert code == EXIT_OK
    with open(table) as f:
        rows = list(csv.DictReader(f))
    assert [(r['d'], r['pu']) for r in rows] == [('3', '0.02'), ('5', '0.02'), ('3', '0.0'), ('5', '0.0')]
    code, out, _ = _run(capsys, 'analyze', '--csv', table)
    assert code == EXIT_OK
    assert out == fits.read_text()
    status = [line.rsplit(',', 1)[1] for line in out.strip().split('\n')[1:]]
    assert status == ['fitted', 'censored']
    assert _run(capsys, 'plot', '--csv', table, '--out', tmp_path / 'p.svg')[0] == EXIT_OK
    # The noiseless rows have no place on a log axis.
    assert (tmp_path / 'p.svg').read_text().count('<circle class="marker"') == 2


def test_workers_environment_variable(capsys, monkeypatch):
    argv = ['run', '--type', 'memory', '-d', '3', '--pu', '0.03', '--shots', '2000', '--seed', '1']
    serial = _run(capsys, *argv)
    monkeypatch.setenv('QECSTAB_WORKERS', '2')
    assert _run(capsys, *argv) == serial
    monkeypatch.setenv('QECSTAB_WORKERS', 'many')
    assert _run(capsys, *argv)[0] == EXIT_USAGE


def test_module_entry_point():
    proc = subprocess.run([sys.executable, '-m', 'qecstab', 'gen', '--type', 'memory', '--out', '-'],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == EXIT_OK
    assert proc.stdout.startswith('QUBIT_COORDS')
