"""
Tests for intermittency statistics.
"""
import numpy as np
import pytest

from app.models.episode import BURST, LAMINAR_HIGH, LAMINAR_LOW
from app.models.skew import DisplacementSpec, SkewSystem
from app.services.intermittency_stats import (
    IntermittencyStatsService,
    log_checkpoints,
    region_codes,
    transition_counts,
)
from app.services.skew_products import SkewProductService
from app.utils.errors import DomainError, ValidationError

LINEAR = DisplacementSpec('affine', {'a': -1, 'b': 2})
U = (0.01, 0.99)


def test_log_checkpoints():
    assert log_checkpoints(12345).tolist() == [100, 1000, 10000, 12345]
    assert log_checkpoints(1000).tolist() == [100, 1000]
    assert log_checkpoints(8, first=10).tolist() == [8]


def test_region_codes():
    codes = region_codes(np.array([0.0, -2.0, 2.0, np.nan]), -1.0, 1.0)
    assert codes.tolist() == [0, -1, 1, 2]


def test_transition_counts():
    """Entries into the burst region are counted cumulatively."""
    codes = np.array([-1, 0, 0, 1, 0, -1, -1, 0])
    assert transition_counts(codes, [2, 5, 8]).tolist() == [1, 2, 3]


def test_flat_displacement_stays_inside(app):
    """xi = 0 never moves the fiber, so the occupation of U stays at 1."""
    with app.app_context():
        service = IntermittencyStatsService()
        flat = SkewSystem(m=2, N=1, xi=DisplacementSpec('affine', {'a': 0, 'b': 0}), chart='interval')
        curve = service.birkhoff_occupation(flat, U, 0.5, 1000, samples=4, seed=1)

        assert curve.samples == 4
        assert curve.checkpoints.tolist() == [100, 1000]
        assert np.all(curve.inside == 1.0)
        assert not curve.is_decreasing()
        assert not service.trend_check(curve)


def test_occupation_decreases_for_linear_system(app):
    """The zero-mean walk spends less and less time near the middle."""
    with app.app_context():
        service = IntermittencyStatsService()
        system = SkewSystem(m=2, N=1, xi=LINEAR, chart='interval')
        curve = service.birkhoff_occupation(system, U, 0.5, 10000, samples=16, seed=2)

        assert curve.median[-1] < curve.median[0]
        frame = curve.to_frame()
        assert list(frame['n']) == [100, 1000, 10000]
        assert (frame['fraction_q25'] <= frame['fraction_q75']).all()
        assert np.all(np.diff(curve.transitions, axis=1) >= 0)


def test_bad_interval_rejected(app):
    with app.app_context():
        system = SkewSystem(m=2, N=1, xi=LINEAR, chart='interval')
        with pytest.raises(DomainError):
            IntermittencyStatsService().birkhoff_occupation(system, (0.5, 0.2), 0.5, 100, samples=1)


def test_laminar_level(app):
    """epsilon = 0.01 gives L = log(99)."""
    with app.app_context():
        service = IntermittencyStatsService()
        assert service.laminar_level(0.01) == pytest.approx(np.log(99.0))
        with pytest.raises(DomainError):
            service.laminar_level(0.6)


def test_episode_segmentation(app):
    """Episodes tile the series; opposite laminar runs are split by an empty burst."""
    with app.app_context():
        trace = IntermittencyStatsService().episode_segmentation([-5, -5, 0, 0, 5, 5, -5, 0], L=1.0)
        frame = trace.episodes

        assert frame['length'].sum() == 8
        assert trace.transitions == 3
        kinds = frame['kind'].tolist()
        assert all(a == BURST or b == BURST for a, b in zip(kinds, kinds[1:]))
        assert (frame['start'].diff().dropna() >= 0).all()
        assert trace.laminar_lengths().tolist() == [2, 2, 1]

        histogram = trace.histogram()
        assert (histogram['length'] > 0).all()
        assert histogram['count'].sum() == 5


def test_episode_segmentation_rejects_bad_series(app):
    with app.app_context():
        service = IntermittencyStatsService()
        with pytest.raises(ValidationError):
            service.episode_segmentation([])
        with pytest.raises(ValidationError):
            service.episode_segmentation([0.0, np.inf])


def test_escape_time_census(app):
    """More walks have passed p = 1/2 as the horizon grows."""
    with app.app_context():
        service = IntermittencyStatsService()
        system = SkewSystem(m=2, N=1, xi=LINEAR, chart='line')
        census = service.escape_time_census(system, 0.5, 0.1, 300, [10, 100, 1000], seed=3)

        fractions = census.table['escaped_fraction'].tolist()
        assert len(fractions) == 3
        assert fractions == sorted(fractions)
        assert census.escaped_fraction > 0.5
        assert census.to_dict()['p'] == 0.5

        with pytest.raises(DomainError):
            service.escape_time_census(system, 0.5, 0.6, 10, [10], seed=3)


def ternary_system(xi=LINEAR):
    """Zero-perturbation system over the tripling map."""
    return SkewSystem(m=3, N=1, xi=xi, chart='interval')


def laminar_mask(trace):
    mask = np.zeros(trace.steps, dtype=bool)
    for kind, start, length in trace.episodes.itertuples(index=False):
        if kind != BURST:
            mask[start:start + length] = True
    return mask


def test_occupation_trend_for_tripling_system(app):
    """The median occupation of U falls decade after decade while transitions keep accruing."""
    with app.app_context():
        service = IntermittencyStatsService()
        curve = service.birkhoff_occupation(ternary_system(), U, 0.5, 100000, samples=16, seed=8)

        assert curve.checkpoints.tolist() == [100, 1000, 10000, 100000]
        assert service.trend_check(curve)
        assert curve.median[-1] < curve.median[1]
        transitions = np.median(curve.transitions, axis=0)
        assert np.all(np.diff(transitions) >= 0)
        assert transitions[-1] > transitions[1]


def test_occupation_fractions_sum_to_one(app):
    with app.app_context():
        curve = IntermittencyStatsService().birkhoff_occupation(ternary_system(), U, 0.5, 10000, samples=8, seed=4)

        assert not curve.warnings
        np.testing.assert_allclose(curve.inside + curve.below + curve.above, 1.0, atol=1e-12)


def test_laminar_lengths_are_heavy_tailed(app):
    """Over 10^5 steps the longest laminar episode dwarfs the typical one."""
    with app.app_context():
        service = IntermittencyStatsService()
        series = SkewProductService().simulate_batch(ternary_system(), 1, 100000, 0.5, seed=5)[0][0]
        summary = service.episode_segmentation(series).to_dict()

        assert summary['transitions'] > 10
        assert summary['max_laminar'] > 100 * summary['median_laminar']


def test_episode_segmentation_idempotent_and_monotone(app):
    """Re-segmenting the labels reproduces the episodes; a higher level only shrinks laminar sets."""
    with app.app_context():
        service = IntermittencyStatsService()
        series = np.cumsum(np.random.default_rng(17).normal(size=5000))
        trace = service.episode_segmentation(series, L=10.0)

        kinds = trace.episodes['kind'].to_numpy()
        labels = np.zeros(series.size)
        for kind, start, length in trace.episodes.itertuples(index=False):
            labels[start:start + length] = {LAMINAR_LOW: -11.0, LAMINAR_HIGH: 11.0, BURST: 0.0}[kind]
        again = service.episode_segmentation(labels, L=10.0)
        assert again.episodes.equals(trace.episodes)
        assert (kinds != BURST).any()

        previous = laminar_mask(service.episode_segmentation(series, L=0.0))
        for L in (2.0, 10.0, 25.0, 60.0):
            current = laminar_mask(service.episode_segmentation(series, L=L))
            assert not (current & ~previous).any()
            previous = current


def test_census_censored_mean_diverges(app):
    """Zero drift: the censored mean grows more than twofold per decade; a positive mean saturates."""
    with app.app_context():
        service = IntermittencyStatsService()
        horizons = [100, 1000, 10000]
        census = service.escape_time_census(ternary_system(), 0.5, 0.001, 1000, horizons, seed=9)
        means = census.table['censored_mean'].to_numpy()

        assert census.diverging
        assert np.all(means[1:] / means[:-1] > 2.0)

        control = service.escape_time_census(ternary_system(LINEAR.shifted(0.2)), 0.5, 0.001, 1000, horizons, seed=9)
        assert not control.diverging
        assert control.escaped_fraction == 1.0
        saturated = control.table['censored_mean'].to_numpy()
        assert saturated[-1] / saturated[-2] < 1.01
