"""
Tests for the command-line surface.
"""
import json

import pandas as pd
import pytest

from app.models.run import RunRecord

TWO_STATE_POISSON = {
    'chain': {'matrix': [['1/2', '1/2'], ['1', '0']]},
    'xi': {'values': ['-1', '2']}
}

SYMMETRIC_ESCAPE = {
    'seed': 6,
    'walk': {'chain': 'canonical', 'm': 2, 'N': 1, 'xi': {'kind': 'srw'}, 'x0': 0},
    'interval': {'A': -5, 'B': 10},
    'alpha_list': [0, 0.1],
    'trials': 300,
    'horizon': 5000
}


def write_config(tmp_path, name, payload):
    path = tmp_path / f'{name}.json'
    path.write_text(json.dumps(payload), encoding='utf-8')
    return str(path)


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def test_poisson_command(app, runner, tmp_path):
    """Two-state chain: Delta CSV, bounds, manifest and an 'ok' ledger entry."""
    config = write_config(tmp_path, 'two_state', TWO_STATE_POISSON)
    out = tmp_path / 'poisson'

    result = runner.invoke(args=['poisson', '--config', config, '--out', str(out), '--mode', 'rational'])

    assert result.exit_code == 0, result.output
    delta = pd.read_csv(out / 'delta.csv')
    assert delta['delta'].tolist() == pytest.approx([-1 / 3, 2 / 3])
    bounds = read_json(out / 'bounds.json')
    assert bounds['bounds']['D'] == pytest.approx(1.0)
    manifest = read_json(out / 'manifest.json')
    assert manifest['command'] == 'poisson'
    assert manifest['mode'] == 'rational'
    assert 'delta.csv' in manifest['outputs']

    record = RunRecord.query.filter_by(command='poisson').one()
    assert record.status == 'ok'


def test_missing_key_is_usage_error(app, runner, tmp_path):
    config = write_config(tmp_path, 'no_xi', {'chain': 'canonical', 'm': 2, 'N': 2})

    result = runner.invoke(args=['poisson', '--config', config, '--out', str(tmp_path / 'out')])

    assert result.exit_code == 2
    assert "'xi'" in result.output
    assert RunRecord.query.one().status == 'failed'


def test_class_violation_exits_with_one(app, runner, tmp_path):
    """rho = 10 pushes the fiber maps out of [0, 1]; the report is still written."""
    config = write_config(tmp_path, 'bad_cubic', {
        'system': {
            'm': 3, 'N': 1,
            'xi': {'kind': 'affine', 'params': {'a': -1, 'b': 2}, 'monotone': 'increasing'},
            'r': {'kind': 'cubic', 'rho': 10},
            'chart': 'interval'
        },
        'x0': 0.5,
        'steps': 100
    })
    out = tmp_path / 'simulate'

    result = runner.invoke(args=['simulate', '--config', config, '--out', str(out)])

    assert result.exit_code == 1
    assert (out / 'validation.json').exists()
    assert not (out / 'timeseries.csv').exists()
    assert RunRecord.query.one().status == 'failed'


def test_escape_reruns_are_identical(app, runner, tmp_path):
    """Same config and seed give byte-identical results."""
    config = write_config(tmp_path, 'escape', SYMMETRIC_ESCAPE)
    first, second = tmp_path / 'first', tmp_path / 'second'

    assert runner.invoke(args=['escape', '--config', config, '--out', str(first)]).exit_code == 0
    assert runner.invoke(args=['escape', '--config', config, '--out', str(second), '--threads', '3']).exit_code == 0

    assert (first / 'escape.csv').read_bytes() == (second / 'escape.csv').read_bytes()
    frame = pd.read_csv(first / 'escape.csv')
    assert frame['alpha'].tolist() == [0.0, 0.1]
    assert {'p_left_bound_low', 'p_left_bound_high', 'doob_ok'} <= set(frame.columns)
    assert read_json(first / 'manifest.json')['config_hash'] == read_json(second / 'manifest.json')['config_hash']


def test_seed_flag_overrides_config(app, runner, tmp_path):
    config = write_config(tmp_path, 'escape', SYMMETRIC_ESCAPE)
    out = tmp_path / 'seeded'

    result = runner.invoke(args=['escape', '--config', config, '--out', str(out), '--seed', '5'])

    assert result.exit_code == 0, result.output
    assert read_json(out / 'manifest.json')['seed'] == 5


def test_encode_command(app, runner, tmp_path):
    config = write_config(tmp_path, 'encode', {'y': '1/3', 'm': 2, 'N': 1, 'length': 6})
    out = tmp_path / 'encode'

    result = runner.invoke(args=['encode', '--config', config, '--out', str(out)])

    assert result.exit_code == 0, result.output
    assert (out / 'path.txt').read_text(encoding='utf-8').strip() == '1 2 1 2 1 2'
    interval = read_json(out / 'interval.json')
    assert interval['m'] == 2
    assert interval['y'] == '1/3'


def test_unreadable_config(app, runner, tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{not json', encoding='utf-8')

    result = runner.invoke(args=['encode', '--config', str(path)])

    assert result.exit_code == 2


TERNARY_SYSTEM = {
    'm': 3, 'N': 1,
    'xi': {'kind': 'affine', 'params': {'a': -1, 'b': 2}, 'monotone': 'increasing'},
    'r': {'kind': 'zero'},
    'chart': 'interval'
}


def test_validate_command(app, runner, tmp_path):
    """The cubic perturbation with rho = 1/5 passes and has L0 = 0 < L1."""
    config = write_config(tmp_path, 'validate', {
        'seed': 3,
        'system': dict(TERNARY_SYSTEM, r={'kind': 'cubic', 'rho': '1/5', 'r0': 0.2}),
        'validate': {'C': 0.2, 'r0': 0.2, 'grid': 401},
        'lyapunov': {'samples': 20000}
    })
    out = tmp_path / 'validate'

    result = runner.invoke(args=['validate', '--config', config, '--out', str(out)])

    assert result.exit_code == 0, result.output
    report = read_json(out / 'validation.json')
    assert report['passed']
    assert all(c['passed'] for c in report['conditions'])
    lyapunov = read_json(out / 'lyapunov.json')
    assert lyapunov['L0'] == pytest.approx(0.0, abs=1e-9)
    assert lyapunov['L1'] == pytest.approx(0.205, abs=0.005)
    assert sorted(read_json(out / 'manifest.json')['outputs']) == ['lyapunov.json', 'validation.json']
    assert RunRecord.query.one().status == 'ok'


def test_simulate_reruns_are_identical(app, runner, tmp_path):
    config = write_config(tmp_path, 'simulate', {
        'seed': 1, 'system': TERNARY_SYSTEM, 'x0': 0.5, 'steps': 500, 'samples': 3
    })
    first, second = tmp_path / 'first', tmp_path / 'second'

    assert runner.invoke(args=['simulate', '--config', config, '--out', str(first)]).exit_code == 0
    assert runner.invoke(args=['simulate', '--config', config, '--out', str(second), '--threads', '4']).exit_code == 0

    assert (first / 'timeseries.csv').read_bytes() == (second / 'timeseries.csv').read_bytes()
    frame = pd.read_csv(first / 'timeseries.csv')
    assert list(frame.columns) == ['sample', 'step', 'x_interval', 'x_line']
    assert len(frame) == 3 * 501


def test_scaling_command(app, runner, tmp_path):
    config = write_config(tmp_path, 'scaling', {
        'seed': 7,
        'walk': {'chain': 'canonical', 'm': 2, 'N': 1, 'xi': {'kind': 'srw'}, 'x0': 0},
        'interval': {'A': -10, 'B': 2},
        'alpha_list': [0.05, 0.1],
        'zero_drift_A': [-5, -10],
        'trials': 300,
        'horizon': 5000
    })
    out = tmp_path / 'scaling'

    result = runner.invoke(args=['scaling', '--config', config, '--out', str(out), '--mode', 'float'])

    assert result.exit_code == 0, result.output
    table = pd.read_csv(out / 'scaling.csv')
    assert table['regime'].tolist() == ['drift', 'drift', 'zero', 'zero']
    assert table['A'].tolist() == [-10.0, -10.0, -5.0, -10.0]
    ratios = read_json(out / 'ratios.json')['ratios']
    assert set(ratios) == {'normalized_p_left', 'alpha_mean_time_B', 'p_left_abs_A', 'mean_time_left_over_A2'}
    assert ratios['p_left_abs_A'] >= 1.0


def test_birkhoff_command(app, runner, tmp_path):
    config = write_config(tmp_path, 'birkhoff', {
        'seed': 8,
        'system': TERNARY_SYSTEM,
        'U': [0.01, 0.99],
        'x0': 0.5,
        'steps': 2000,
        'samples': 4,
        'episodes': {'epsilon': 0.01},
        'census': {'p': 0.5, 'x_start': 0.001, 'trials': 100, 'horizons': [100, 1000]}
    })
    out = tmp_path / 'birkhoff'

    result = runner.invoke(args=['birkhoff', '--config', config, '--out', str(out)])

    assert result.exit_code == 0, result.output
    occupation = pd.read_csv(out / 'occupation.csv')
    assert occupation['n'].tolist() == [100, 1000, 2000]
    assert pd.read_csv(out / 'census.csv')['horizon'].tolist() == [100, 1000]
    summary = read_json(out / 'summary.json')
    assert summary['occupation']['samples'] == 4
    assert summary['episodes']['steps'] == 2001
    assert set(summary) == {'occupation', 'decreasing', 'episodes', 'census'}
    assert {'episodes.csv', 'summary.json'} <= set(read_json(out / 'manifest.json')['outputs'])
