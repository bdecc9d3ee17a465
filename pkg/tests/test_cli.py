"""
Tests for the command-line entry point
"""

import json

import pytest

from cli import EXIT_ERROR, EXIT_OK, build_parser, main
from storage import ArtifactStore, read_pgm

pytestmark = pytest.mark.usefixtures("restore_root_logger")


@pytest.fixture
def experiment_file(tmp_path):
    path = tmp_path / 'tiny.json'
    path.write_text(json.dumps({
        'name': 'tiny',
        'T': 4,
        'alpha': 0.2,
        'beta': 0.2,
        'schedule': {'kind': 'spiral', 'n': 1},
        'ground_truth': [{'intensity': 1.0, 'start': [0.5, 0.5]}],
        'solver': {'n_max': 2, 'max_outer_iterations': 5},
        'output_dir': str(tmp_path / 'default_out'),
        'raster_resolution': 8,
        'backprojection_times': [0, 4],
    }), encoding='utf-8')
    return str(path)


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_run(experiment_file, tmp_path):
    out = tmp_path / 'out'
    code = main(['run', experiment_file, '--out', str(out), '--seed', '1', '--dump-stationary'])
    assert code == EXIT_OK
    for name in ('recon.json', 'recon_curves.csv', 'convergence.csv', 'summary.json',
                 'backprojection_0000.pgm', 'backprojection_0004.pgm', 'stationary_0000.csv'):
        assert (out / name).is_file(), name

    summary = json.loads((out / 'summary.json').read_text(encoding='utf-8'))
    assert summary['termination'] in ('converged', 'gap_below_TOL')
    assert summary['exit_code'] == 0
    assert summary['config']['solver']['seed'] == 1
    assert len(summary['matching']['pairs']) == 1
    assert sum(a['intensity'] for a in summary['atoms']) == pytest.approx(0.8, abs=1e-3)
    assert len(ArtifactStore(str(out)).read_curves()) == len(summary['atoms'])


def test_run_budget_exit_code(experiment_file, tmp_path):
    payload = json.loads(open(experiment_file, encoding='utf-8').read())
    payload['solver']['max_outer_iterations'] = 1
    path = tmp_path / 'budget.json'
    path.write_text(json.dumps(payload), encoding='utf-8')
    assert main(['run', str(path), '--out', str(tmp_path / 'b')]) == 2


def test_run_core_mode(experiment_file, tmp_path):
    out = tmp_path / 'core'
    assert main(['run', experiment_file, '--out', str(out), '--mode', 'core']) == EXIT_OK
    summary = json.loads((out / 'summary.json').read_text(encoding='utf-8'))
    assert summary['config']['solver']['mode'] == 'core'


def test_invalid_experiment(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"T": 4,', encoding='utf-8')
    assert main(['run', str(path)]) == EXIT_ERROR


def test_synth(experiment_file, tmp_path):
    out = tmp_path / 'synth'
    assert main(['synth', experiment_file, '--out', str(out)]) == EXIT_OK
    data = json.loads((out / 'data.json').read_text(encoding='utf-8'))
    assert data['T'] == 4
    assert len(data['measurements']) == 5
    assert (out / 'truth.json').is_file()


def test_backproject(experiment_file, tmp_path):
    out = tmp_path / 'bp'
    code = main(['backproject', experiment_file, '--times', '0,2', '--resolution', '6', '--out', str(out)])
    assert code == EXIT_OK
    assert read_pgm(str(out / 'backprojection_0002.pgm')).shape == (6, 6)
    assert not (out / 'backprojection_0004.pgm').exists()


def test_backproject_bad_times(experiment_file, tmp_path):
    assert main(['backproject', experiment_file, '--times', '0,9', '--out', str(tmp_path)]) == EXIT_ERROR
