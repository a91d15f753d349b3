"""
Tests for the skew-product service.
"""
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import expit

from app.models.skew import DisplacementSpec, PerturbationSpec, SkewSystem
from app.services.skew_products import SkewProductService
from app.services.symbolic_dynamics import SymbolicDynamicsService
from app.utils.errors import DomainError, ValidationError

LINEAR = DisplacementSpec('affine', {'a': -1, 'b': 2}, monotone='increasing')
CUBIC = PerturbationSpec('cubic', rho=0.2)


def test_conjugacy(app):
    """h(0) = 1/2, h^-1 flags the endpoints and saturates beyond |x| = 745."""
    with app.app_context():
        service = SkewProductService()

        assert service.conjugate_to_interval(0.0) == (0.5, False)
        assert service.conjugate_to_interval(800.0) == (1.0, True)
        value, flagged = service.conjugate_to_line(0.0)
        assert value == -np.inf and flagged
        with pytest.raises(DomainError):
            service.conjugate_to_line(1.5)


def test_fiber_map_fixes_endpoints(app):
    with app.app_context():
        service = SkewProductService()
        out = service.fiber_map_interval(0.7, np.array([0.0, 1.0]), CUBIC, 0.3)
        assert out.tolist() == [0.0, 1.0]


def test_line_map_without_perturbation_is_translation(app):
    with app.app_context():
        service = SkewProductService()
        assert service.fiber_map_line(0.25, 3.0, PerturbationSpec(), 0.1) == pytest.approx(3.25)


def test_line_and_interval_charts_agree(app):
    """h(g_y(x)) equals g^_y(h(x)) for the cubic perturbation."""
    with app.app_context():
        service = SkewProductService()
        x = np.array([-4.0, -0.3, 0.0, 1.2, 6.0])
        line = service.fiber_map_line(0.5, x, CUBIC, 0.2)
        interval = service.fiber_map_interval(0.5, expit(x), CUBIC, 0.2)
        np.testing.assert_allclose(expit(line), interval, rtol=1e-12, atol=1e-15)


def test_uncentered_displacement_rejected():
    with pytest.raises(ValidationError):
        DisplacementSpec('affine', {'a': 0, 'b': 1})


def test_lyapunov_exponents_cubic(app):
    """xi = -1 + 2y with rho = 1/5: L0 = 0 and L1 close to 0.205."""
    with app.app_context():
        service = SkewProductService()
        system = SkewSystem(m=3, N=1, xi=LINEAR, r=CUBIC, chart='interval')
        estimate = service.lyapunov_exponents(system, samples=20000, seed=1, nodes=4096)

        assert abs(estimate.L0) < 1e-9
        assert estimate.L1 == pytest.approx(0.205, abs=0.005)
        assert abs(estimate.L1_mc - estimate.L1) < 5 * estimate.L1_se + 1e-9


def test_validate_class_membership(app):
    """rho = 1/5 passes with C = 0.2; rho = 10 pushes the maps out of [0, 1]."""
    with app.app_context():
        service = SkewProductService()
        good = SkewSystem(m=3, N=1, xi=LINEAR, r=CUBIC, chart='interval')
        report = service.validate_class_membership(good, C=0.2, r0=0.2)

        assert report.passed
        assert report.condition('vanishing_order').worst_value <= 0.2

        bad = SkewSystem(m=3, N=1, xi=LINEAR, r=PerturbationSpec('cubic', rho=10.0), chart='interval')
        report = service.validate_class_membership(bad)
        assert not report.passed
        assert 'range' in report.failures()


def test_discretize_displacement_exact(app):
    """Affine xi on the level-3 partition gives the exact midpoint values."""
    with app.app_context():
        service = SkewProductService()
        discrete = service.discretize_displacement(LINEAR, 2, 3, 'rational')

        assert discrete.shift == 0
        assert discrete.values[0] == Fraction(-7, 8)
        assert discrete.values[7] == Fraction(7, 8)
        assert sum(discrete.values) == 0


def test_iterate_trajectory_sums_displacements(app):
    """Without perturbation the line orbit is x0 plus partial sums of xi."""
    with app.app_context():
        service = SkewProductService()
        system = SkewSystem(m=2, N=1, xi=LINEAR, chart='line')
        path = SymbolicDynamicsService().encode_point('1/3', 2, 1, 80)
        trajectory = service.iterate_trajectory(system, path, 0.0, 20, window=20)

        assert trajectory.steps == 20
        assert trajectory.truncated_at is None
        # the orbit of 1/3 alternates between 1/3 and 2/3
        assert trajectory.x_line[2] == pytest.approx(0.0, abs=1e-5)
        assert trajectory.x_line[1] == pytest.approx(-1 / 3, abs=1e-5)


def test_zero_displacement_gives_constant_series(app):
    with app.app_context():
        service = SkewProductService()
        flat = SkewSystem(m=2, N=1, xi=DisplacementSpec('affine', {'a': 0, 'b': 0}), chart='interval')
        xs = service.simulate_batch(flat, 3, 50, 0.5, seed=0)[0]
        assert np.all(xs == 0.0)


def test_simulate_batch_is_thread_independent(app):
    """Groups draw from their own streams, so the worker count does not matter."""
    with app.app_context():
        service = SkewProductService()
        system = SkewSystem(m=3, N=1, xi=LINEAR, r=CUBIC, chart='interval')

        single = np.concatenate(service.simulate_batch(system, 40, 200, 0.5, seed=5, threads=1))
        pooled = np.concatenate(service.simulate_batch(system, 40, 200, 0.5, seed=5, threads=4))
        np.testing.assert_array_equal(single, pooled)


def test_interval_start_outside_domain(app):
    with app.app_context():
        service = SkewProductService()
        system = SkewSystem(m=2, N=1, xi=LINEAR, chart='interval')
        with pytest.raises(DomainError):
            service.simulate_batch(system, 1, 10, 1.5, seed=0)


def test_fiber_map_value_without_perturbation(app):
    """xi = 1 sends h(0) = 1/2 to h(1) = e / (1 + e)."""
    with app.app_context():
        service = SkewProductService()
        value = float(service.fiber_map_interval(1.0, 0.5, PerturbationSpec(), 0.3))

        assert value == pytest.approx(np.e / (1.0 + np.e), rel=1e-14)
        assert float(service.fiber_map_line(1.0, 0.0, PerturbationSpec(), 0.3)) == pytest.approx(1.0)


def test_conjugacy_round_trip_near_endpoints(app):
    with app.app_context():
        service = SkewProductService()

        near_zero = 10.0 ** -np.arange(1, 301)
        line, flagged = service.conjugate_to_line(near_zero)
        back, saturated = service.conjugate_to_interval(line)
        assert not flagged.any() and not saturated.any()
        np.testing.assert_allclose(back, near_zero, rtol=1e-12)

        near_one = 1.0 - 10.0 ** -np.arange(1, 16)
        line, flagged = service.conjugate_to_line(near_one)
        back, saturated = service.conjugate_to_interval(line)
        assert not flagged.any() and not saturated.any()
        np.testing.assert_allclose(back, near_one, rtol=0, atol=1e-15)

        x = -np.logspace(-3, 2.8, 60)
        np.testing.assert_allclose(service.conjugate_to_line(service.conjugate_to_interval(x)[0])[0], x, rtol=1e-12)

        values, saturated = service.conjugate_to_interval(np.array([-1000.0, -746.0, -700.0, 700.0, 746.0, 1000.0]))
        assert saturated.tolist() == [True, True, False, False, True, True]
        assert values[[0, 1, 4, 5]].tolist() == [0.0, 0.0, 1.0, 1.0]
        assert 0.0 < values[2] < 1e-300

        ends, flagged = service.conjugate_to_line(np.array([0.0, 1.0]))
        assert ends.tolist() == [-np.inf, np.inf]
        assert flagged.all()


@pytest.mark.parametrize('xi', [LINEAR, DisplacementSpec('sign', {'scale': 1})])
def test_lyapunov_exponents_vanish_without_perturbation(app, xi):
    """With r = 0 both exponents are the mean of +/- xi, which is zero."""
    with app.app_context():
        system = SkewSystem(m=2, N=1, xi=xi, chart='interval')
        estimate = SkewProductService().lyapunov_exponents(system, samples=5000, seed=2, nodes=4096)

        assert abs(estimate.L0) < 1e-12
        assert abs(estimate.L1) < 1e-12
        assert abs(estimate.L0_mc) < 5 * estimate.L0_se
        assert estimate.L0_mc == pytest.approx(-estimate.L1_mc)
