"""
Tests for the stopping-time lab.
"""
from fractions import Fraction

import numpy as np
import pytest

from app.models.skew import DisplacementSpec, SkewSystem
from app.models.walk import WalkSpec
from app.services.poisson_solver import PoissonSolverService
from app.services.skew_products import SkewProductService
from app.services.stopping_lab import StoppingLabService
from app.services.symbolic_dynamics import SymbolicDynamicsService
from app.utils.errors import DomainError, UnsupportedError, ValidationError

STEPS = np.array([1, -1])
TWO_STATE = [['1/2', '1/2'], ['1', '0']]
THREE_STATE = [['1/2', '1/2', '0'], ['0', '0', '1'], ['1/2', '1/2', '0']]


def symmetric_walk(mode='rational', **kwargs):
    """Plus/minus one walk: symbol 1 steps up, symbol 2 steps down."""
    chain = SymbolicDynamicsService().build_subshift(2, 1, mode)
    return WalkSpec(chain=chain, increments=STEPS, **kwargs)


def symmetric_poisson():
    return PoissonSolverService().solve_poisson_canonical([1.0, -1.0], 2, 1, 'float')


def test_walk_spec_validation(app):
    with app.app_context():
        chain = SymbolicDynamicsService().build_subshift(2, 1)
        system = SkewSystem(m=2, N=1, xi=DisplacementSpec('affine', {'a': -1, 'b': 2}))

        with pytest.raises(ValidationError):
            WalkSpec(chain=chain)
        with pytest.raises(ValidationError):
            WalkSpec(chain=chain, increments=STEPS, system=system)
        with pytest.raises(ValidationError):
            WalkSpec(chain=chain, increments=np.array([[1, -1, 0], [1, -1, 0]]))
        assert WalkSpec(system=system).kind == 'chaotic'
        assert symmetric_walk().increment_table.tolist() == [[1.0, -1.0], [1.0, -1.0]]


def test_oracle_symmetric_walk_exact(app):
    """Gambler's ruin on [-5, 10] from 0: p_left = 2/3 and E[T] = 50."""
    with app.app_context():
        lab = StoppingLabService()
        chain = SymbolicDynamicsService().build_subshift(2, 1, 'rational')
        result = lab.gambler_ruin_oracle(-5, 10, 0, chain, STEPS, mode='rational')

        assert result.mode == 'rational'
        assert result.p_left == Fraction(2, 3)
        assert result.mean_time == 50
        assert result.states == 28


def test_oracle_unit_interval(app):
    """On [-1, 1] every walk exits after one step."""
    with app.app_context():
        chain = SymbolicDynamicsService().build_subshift(2, 1, 'rational')
        result = StoppingLabService().gambler_ruin_oracle(-1, 1, 0, chain, STEPS, mode='rational')

        assert result.mean_time == 1
        assert result.p_left == Fraction(1, 2)


def test_oracle_float_matches_rational(app):
    with app.app_context():
        chain = SymbolicDynamicsService().build_subshift(2, 1, 'rational')
        result = StoppingLabService().gambler_ruin_oracle(-5, 10, 0, chain, STEPS, mode='float')

        assert result.mode == 'float'
        assert float(result.p_left) == pytest.approx(2 / 3, abs=1e-10)
        assert float(result.mean_time) == pytest.approx(50.0, abs=1e-8)


def test_oracle_lattice_scale(app):
    """Half steps need scale 2; the exit probability is unchanged."""
    with app.app_context():
        lab = StoppingLabService()
        chain = SymbolicDynamicsService().build_subshift(2, 1, 'rational')
        half = np.array(['1/2', '-1/2'], dtype=object)

        with pytest.raises(UnsupportedError):
            lab.gambler_ruin_oracle(-5, 10, 0, chain, half, mode='rational')
        result = lab.gambler_ruin_oracle('-5/2', 5, 0, chain, half, scale=2, mode='rational')
        assert result.p_left == Fraction(2, 3)


def test_oracle_two_state_chain(app):
    """Poisson increments of the two-state chain run on the lattice."""
    with app.app_context():
        data = PoissonSolverService().solve_poisson_general(TWO_STATE, ['-1', '2'], 'rational')
        result = StoppingLabService().gambler_ruin_oracle(-3, 3, 0, TWO_STATE, data, mode='rational')

        assert result.mode == 'rational'
        assert 0 < result.p_left < 1
        assert result.mean_time > 1


def test_monte_carlo_matches_oracle(app):
    """p_left and E[T] agree with the oracle within four standard errors."""
    with app.app_context():
        stats = StoppingLabService().estimate_escape_compact(symmetric_walk(), -5, 10, 4000, 10000, seed=7)

        assert stats.censored == 0
        assert stats.exits_left + stats.exits_right == 4000
        assert abs(stats.p_left - 2 / 3) < 4 * stats.p_left_se
        time_se = (stats.mean_time_ci[1] - stats.mean_time_ci[0]) / (2 * 1.959964)
        assert abs(stats.mean_time - 50.0) < 4 * time_se
        assert StoppingLabService.doob_check(stats)


def test_escape_requires_start_inside(app):
    with app.app_context():
        with pytest.raises(DomainError):
            StoppingLabService().estimate_escape_compact(symmetric_walk(), 1, 10, 10, 100, seed=0)


def test_censoring_is_reported(app):
    """A horizon far below E[T] leaves most trials censored with a warning."""
    with app.app_context():
        stats = StoppingLabService().estimate_escape_compact(symmetric_walk(), -50, 50, 500, 20, seed=1)

        assert stats.censored == 500
        assert stats.censoring
        assert any('horizon' in w for w in stats.warnings)


def test_seed_determinism_and_thread_independence(app):
    """Identical seeds reproduce the statistics whatever the worker count."""
    with app.app_context():
        app.config['TRIAL_CHUNK'] = 500
        app.config['MAX_THREADS'] = 1
        first = StoppingLabService().estimate_escape_compact(symmetric_walk(), -5, 10, 2000, 5000, seed=3)
        app.config['MAX_THREADS'] = 4
        second = StoppingLabService().estimate_escape_compact(symmetric_walk(), -5, 10, 2000, 5000, seed=3)

        assert first.to_row() == second.to_row()


def test_pathwise_coupling_across_boundaries(app):
    """Moving B up can only add left exits when the paths are shared."""
    with app.app_context():
        lab = StoppingLabService()
        near = lab.estimate_escape_compact(symmetric_walk(), -5, 5, 1000, 5000, seed=11)
        far = lab.estimate_escape_compact(symmetric_walk(), -5, 10, 1000, 5000, seed=11)

        assert far.exits_left >= near.exits_left


def test_chaotic_walk_escapes(app):
    """The zero-mean chaotic walk leaves [-3, 3] in finite time."""
    with app.app_context():
        system = SkewSystem(m=2, N=1, xi=DisplacementSpec('affine', {'a': -1, 'b': 2}), chart='line')
        stats = StoppingLabService().estimate_escape_compact(WalkSpec(system=system), -3, 3, 200, 20000, seed=4)

        assert stats.censored == 0
        assert 0.3 < stats.p_left < 0.7


def test_halfline_divergence_signature(app):
    """Zero drift: the censored mean keeps growing; positive drift: it settles."""
    with app.app_context():
        lab = StoppingLabService()
        horizons = [100, 1000, 10000]
        flat = lab.estimate_escape_halfline(symmetric_walk(), 3, 1000, horizons, seed=5)
        drifting = lab.estimate_escape_halfline(symmetric_walk(alpha=0.1), 3, 1000, horizons, seed=5)

        assert flat.diverging
        assert not drifting.diverging
        fractions = flat.table['escaped_fraction'].tolist()
        assert fractions == sorted(fractions)
        assert drifting.table['escaped_fraction'].iloc[-1] == 1.0


def test_halfline_rejects_bad_ladder(app):
    with app.app_context():
        with pytest.raises(ValidationError):
            StoppingLabService().estimate_escape_halfline(symmetric_walk(), 3, 10, [100, 10], seed=0)


def test_stay_probability(app):
    """Negative drift keeps a positive fraction below B; zero drift warns; positive drift is refused."""
    with app.app_context():
        lab = StoppingLabService()
        stay = lab.estimate_stay_probability(symmetric_walk(alpha=-0.2), 3, 2000, 2000, seed=6)
        assert 0.0 < stay.p_stay < 1.0
        assert stay.ci[0] <= stay.p_stay <= stay.ci[1]

        flat = lab.estimate_stay_probability(symmetric_walk(), 3, 200, 100, seed=6)
        assert any('zero drift' in w for w in flat.warnings)

        with pytest.raises(DomainError):
            lab.estimate_stay_probability(symmetric_walk(alpha=0.1), 3, 10, 10, seed=6)


def test_stay_probability_oracle(app):
    """A deeper truncation can only lower P(reach lower before B)."""
    with app.app_context():
        lab = StoppingLabService()
        chain = SymbolicDynamicsService().build_subshift(2, 1, 'rational')

        shallow = lab.stay_probability_oracle(chain, STEPS, -0.2, 3, -20, scale=5, mode='float')
        deep = lab.stay_probability_oracle(chain, STEPS, -0.2, 3, -40, scale=5, mode='float')
        assert 0.0 < float(deep) <= float(shallow) < 1.0

        with pytest.raises(DomainError):
            lab.stay_probability_oracle(chain, STEPS, 0.1, 3, -20, scale=10)


def test_tilt_rate_root(app):
    """For the symmetric walk at alpha = 0.1 the root sits near -0.20136, within alpha^2 of -2 alpha."""
    with app.app_context():
        rates = StoppingLabService().exponential_tilt_rates(symmetric_poisson(), 0.1)

        assert rates.r_minus == pytest.approx(-0.20136, abs=1e-4)
        assert rates.r_minus == pytest.approx(rates.r_plus)
        assert abs(rates.r_minus + 0.2) < 0.1 ** 2
        assert rates.taylor_regime
        np.testing.assert_allclose(rates.mgf_at_minus, 1.0, atol=1e-6)


def test_tilt_rate_zero_drift(app):
    with app.app_context():
        rates = StoppingLabService().exponential_tilt_rates(symmetric_poisson(), 0.0)
        assert rates.r_minus == 0.0 and rates.r_plus == 0.0


def test_tilt_rate_needs_spread(app):
    """A state with a single successor has no tilt."""
    with app.app_context():
        data = PoissonSolverService().solve_poisson_general([['1/2', '1/2'], ['1', '0']], ['-1', '2'], 'rational')
        with pytest.raises(DomainError):
            StoppingLabService().exponential_tilt_rates(data, 0.1)


def test_tilt_bounds_contain_oracle(app):
    """Optional-stopping brackets contain the exact exit probability."""
    with app.app_context():
        lab = StoppingLabService()
        data = symmetric_poisson()
        chain = SymbolicDynamicsService().build_subshift(2, 1, 'rational')

        linear = lab.tilt_escape_bounds(data, 0.0, -5, 10)
        assert linear.method == 'linear'
        assert linear.contains(2 / 3)

        tilted = lab.tilt_escape_bounds(data, 0.1, -5, 10)
        oracle = lab.gambler_ruin_oracle(-5, 10, 0, chain, STEPS, alpha=0.1, scale=10, mode='float')
        assert tilted.method == 'tilt'
        assert tilted.contains(float(oracle.p_left), slack=1e-9)

        with pytest.raises(DomainError):
            lab.tilt_escape_bounds(data, -0.1, -5, 10)


def test_zero_drift_time_bounds(app):
    """The square-martingale bracket contains E[T] = 50."""
    with app.app_context():
        low, high = StoppingLabService.zero_drift_time_bounds(symmetric_poisson(), -5, 10, 2 / 3)
        assert low <= 50.0 + 1e-9
        assert 50.0 <= high


def test_witness_missing_for_three_state_chain(app):
    """Rows (1/2, 1/2, 0), (0, 0, 1), (1/2, 1/2, 0) with xi = (0, 1, -1) never pass level 1."""
    with app.app_context():
        lab = StoppingLabService()
        report = lab.recurrence_witness_search(THREE_STATE, [0, 1, -1], 1.0, max_len=50)
        assert not report.up.found
        assert not report.down.found

        report = lab.recurrence_witness_search(THREE_STATE, [0, 1, -1], 0.5, max_len=50)
        assert report.up.found
        assert report.up.word == (2,)


def test_witness_fixed_point_cells(app):
    """xi = -1 + 2y at m = 2, N = 3: the last cell loops on itself with xi = 7/8."""
    with app.app_context():
        chain = SymbolicDynamicsService().build_subshift(2, 3, 'rational')
        xi = SkewProductService().discretize_displacement(
            DisplacementSpec('affine', {'a': -1, 'b': 2}), 2, 3, 'rational'
        ).values
        report = StoppingLabService().recurrence_witness_search(chain, xi, 2.0)

        assert report.up.fixed_point == 8
        assert report.up.fixed_point_length == 3
        assert report.up.found and report.up.length == 3
        assert report.up.displacement > 2.0
        assert report.down.fixed_point == 1
        assert report.down.displacement < -2.0


def test_witness_sign_displacement(app):
    """Sign steps: the constant word of the upper cell needs floor(L) + 1 letters."""
    with app.app_context():
        chain = SymbolicDynamicsService().build_subshift(2, 1, 'rational')
        report = StoppingLabService().recurrence_witness_search(chain, [-1, 1], 3.0)

        assert report.up.fixed_point == 2
        assert report.up.fixed_point_length == 4
        assert report.up.word == (2, 2, 2, 2)
        assert report.down.word == (1, 1, 1, 1)

        # 3 is an integer multiple of the step, so reaching it is not passing it
        assert report.up.fixed_point_length != int(np.ceil(3.0 / 1.0))

        report = StoppingLabService().recurrence_witness_search(chain, [-1, 1], 2.5)
        assert report.up.fixed_point_length == 3 == int(np.ceil(2.5))
        assert report.up.word == (2, 2, 2)
        with pytest.raises(DomainError):
            StoppingLabService().recurrence_witness_search(chain, [-1, 1], -1.0)


def test_drift_scaling_experiment(app):
    with app.app_context():
        walk = WalkSpec(chain=SymbolicDynamicsService().build_subshift(2, 1, 'float'), poisson=symmetric_poisson())
        report = StoppingLabService().drift_scaling_experiment(
            walk, [0.1, 0.2], -10, 5, 400, 5000, seed=8, zero_drift_A=[-5, -10]
        )

        assert report.table['regime'].tolist() == ['drift', 'drift', 'zero', 'zero']
        assert set(report.ratios) == {'normalized_p_left', 'alpha_mean_time_B', 'p_left_abs_A',
                                      'mean_time_left_over_A2'}
        zero = report.table[report.table['regime'] == 'zero']
        assert (zero['time_lower'] <= zero['time_upper']).all()

        with pytest.raises(DomainError):
            StoppingLabService().drift_scaling_experiment(walk, [-0.1], -10, 5, 10, 10, seed=8)


def test_drift_scaling_ratios(app):
    """alpha E[T_B] and p_left |A| stay nearly constant across drifts and interval sizes."""
    with app.app_context():
        walk = WalkSpec(chain=SymbolicDynamicsService().build_subshift(2, 1, 'float'), poisson=symmetric_poisson())
        report = StoppingLabService().drift_scaling_experiment(
            walk, [0.02, 0.05, 0.1], -10, 2, 4000, 50000, seed=12, zero_drift_A=[-10, -20, -40]
        )

        assert report.ratios['alpha_mean_time_B'] < 2.0
        assert report.ratios['p_left_abs_A'] < 1.5
        zero = report.table[report.table['regime'] == 'zero']
        np.testing.assert_allclose(zero['p_left'], [2 / 12, 2 / 22, 2 / 42], rtol=0.2)


def test_stay_probability_scales_with_drift(app):
    """Under negative drift the stay probability over |alpha| varies by less than a factor 3."""
    with app.app_context():
        lab = StoppingLabService()
        normalized = []
        for alpha in (-0.05, -0.1, -0.2):
            stay = lab.estimate_stay_probability(symmetric_walk('float', alpha=alpha), 5, 4000, 5000, seed=21)
            assert stay.stable
            normalized.append(stay.p_stay / abs(alpha))

        assert max(normalized) / min(normalized) < 3.0
