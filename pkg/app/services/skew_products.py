"""
Skew-product service: fiber maps in the interval and line charts, the
conjugacy h(x) = e^x / (1 + e^x), orbit simulation driven by symbol paths,
fiber Lyapunov exponents, class-membership validation and discretization of
the displacement over Markov partitions.
"""
import math
from fractions import Fraction
from typing import Callable, List, Optional, Tuple

import numpy as np
from flask import current_app
from scipy.special import expit, logit

from app.models.skew import (
    ClassCondition,
    ClassReport,
    DiscreteDisplacement,
    DisplacementSpec,
    LyapunovEstimate,
    PerturbationSpec,
    SkewSystem,
    Trajectory,
)
from app.models.subshift import SymbolPath
from app.services.symbolic_dynamics import SymbolicDynamicsService
from app.utils.errors import ClassViolationError, DomainError, ValidationError
from app.utils.seeding import chunk_sizes, derive_rng, run_ordered

SATURATION = 745.0
OVERSHOOT_TOLERANCE = 1e-15


class ChaoticDriver:
    """
    Converts base-m digit streams into driving values y_n = E_m^n(y).

    y_n is the midpoint of the cylinder fixed by the `digits` digits starting
    at position n; the window is capped so that m**digits fits in int64.
    """

    def __init__(self, m: int, N: int, window: int):
        self.m = int(m)
        self.digits = max(1, min(int(N) + int(window) - 1, int(62 // math.log2(self.m))))
        self.scale = float(self.m) ** self.digits
        self.dtype = np.uint8 if self.m <= 255 else np.int64

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.integers(0, self.m, size=shape, dtype=self.dtype)

    def start(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Initial tail buffer of digits - 1 digits per trajectory."""
        return self.draw(rng, (size, self.digits - 1))

    def y_block(self, tail: np.ndarray, fresh: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Driving values for a block of steps.

        Args:
            tail: (size, digits - 1) carried digits
            fresh: (size, b) new digits

        Returns:
            (y of shape (size, b), new tail)
        """
        full = np.concatenate([tail, fresh], axis=1)
        b = fresh.shape[1]
        value = np.zeros((full.shape[0], b), dtype=np.int64)
        for t in range(self.digits):
            value = value * self.m + full[:, t:t + b].astype(np.int64)
        return (value.astype(float) + 0.5) / self.scale, full[:, b:]

    def y_from_digits(self, digits: np.ndarray, n: int) -> np.ndarray:
        """First n driving values of a single digit stream."""
        digits = np.asarray(digits).reshape(1, -1)
        if digits.shape[1] < n + self.digits - 1:
            raise ValidationError(
                f"path provides {digits.shape[1]} digits; {n + self.digits - 1} needed for {n} steps"
            )
        y, _ = self.y_block(digits[:, :self.digits - 1], digits[:, self.digits - 1:n + self.digits - 1])
        return y[0]


class SkewProductService:
    """
    Service for skew products over E_m including:
    - Conjugacy between the interval chart (0, 1) and the line chart R
    - Fiber maps g_y in both charts (line chart evaluated without cancellation)
    - Orbit simulation driven by symbol paths or seeded digit streams
    - Fiber Lyapunov exponents, class validation, displacement discretization
    """

    def __init__(self, threads: Optional[int] = None):
        self.window = current_app.config['DRIVING_WINDOW']
        self.nodes = current_app.config['QUADRATURE_NODES']
        self.grid = current_app.config['VALIDATION_GRID']
        self.group = current_app.config['TRAJECTORY_GROUP']
        self.block = current_app.config['BLOCK_STEPS']
        self.threads = threads or current_app.config['MAX_THREADS']
        self.mode = current_app.config['ARITHMETIC_MODE']
        self.rational_max = current_app.config['RATIONAL_MAX_SYMBOLS']

    # ------------------------------------------------------------------
    # conjugacy
    # ------------------------------------------------------------------

    def conjugate_to_interval(self, x):
        """
        h(x) = e^x / (1 + e^x).

        Returns:
            (values, saturated) where |x| > 745 maps to exactly 0 or 1 and is flagged
        """
        x = np.asarray(x, dtype=float)
        saturated = np.abs(x) > SATURATION
        values = np.where(saturated, (x > 0).astype(float), expit(x))
        return (values if values.ndim else float(values)), (saturated if saturated.ndim else bool(saturated))

    def conjugate_to_line(self, xh):
        """
        h^-1(x) = log(x / (1 - x)).

        Returns:
            (values, flagged) where 0 and 1 map to -inf and +inf and are flagged

        Raises:
            DomainError: for inputs outside [0, 1]
        """
        xh = np.asarray(xh, dtype=float)
        if ((xh < 0) | (xh > 1) | np.isnan(xh)).any():
            raise DomainError("h^-1 is defined on [0, 1] only")
        flagged = (xh == 0) | (xh == 1)
        with np.errstate(divide='ignore'):
            values = logit(xh)
        return (values if values.ndim else float(values)), (flagged if flagged.ndim else bool(flagged))

    # ------------------------------------------------------------------
    # fiber maps
    # ------------------------------------------------------------------

    @staticmethod
    def _mobius(xi_val, x):
        # x / (x + (1 - x) e^-xi) fixes 0 and 1 exactly
        return x / (x + (1.0 - x) * np.exp(-xi_val))

    @staticmethod
    def _mobius_dx(xi_val, x):
        return np.exp(xi_val) / (1.0 + np.expm1(xi_val) * x) ** 2

    def fiber_map_interval(self, xi_val, x, r: PerturbationSpec, y):
        """
        g^_y(x) = e^xi x / (1 + (e^xi - 1) x) + r(y, x).

        Args:
            xi_val: Displacement value xi(y)
            x: Point(s) of [0, 1]
            r: Perturbation
            y: Base point(s)

        Returns:
            Image in [0, 1]

        Raises:
            ClassViolationError: non-positive derivative or overshoot >= 1e-15
        """
        xi_val = np.asarray(xi_val, dtype=float)
        x = np.asarray(x, dtype=float)
        if ((x < 0) | (x > 1)).any():
            raise DomainError("interval chart points must lie in [0, 1]")
        out = self._mobius(xi_val, x) + r.value(y, x)
        deriv = self._mobius_dx(xi_val, x) + r.dx(y, x)
        if (deriv <= 0).any():
            raise ClassViolationError("fiber map is not increasing", min_derivative=float(np.min(deriv)))
        overshoot = np.maximum(-out, out - 1.0)
        if (overshoot >= OVERSHOOT_TOLERANCE).any():
            raise ClassViolationError("fiber map leaves [0, 1]; r too large", overshoot=float(np.max(overshoot)))
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)

    def _line_step(self, xi_val, x, r: PerturbationSpec, y, e=None):
        """Unchecked line-chart fiber map (NaN where the map overshoots)."""
        if r.is_zero:
            return x + xi_val
        if e is None:
            e = np.exp(xi_val)
        xh = expit(x)
        sh = expit(-x)
        den = sh + e * xh
        r_over_x, r_over_s = r.ratios(y, xh, sh)
        with np.errstate(invalid='ignore', divide='ignore'):
            return x + xi_val + np.log1p(r_over_x * den / e) - np.log1p(-r_over_s * den)

    def fiber_map_line(self, xi_val, x, r: PerturbationSpec, y):
        """
        g_y(x) = x + xi(y) + R(y, x), the line-chart conjugate of g^_y.

        R is evaluated as log1p(r/M) - log1p(-r/(1-M)) with M the Moebius image,
        using r/x and r/(1-x) directly; no value is transported through the
        interval chart, so the map stays exact beyond |x| = 745.

        Raises:
            ClassViolationError: where the interval map overshoots [0, 1]
        """
        xi_val = np.asarray(xi_val, dtype=float)
        x = np.asarray(x, dtype=float)
        out = self._line_step(xi_val, x, r, y)
        if (~np.isfinite(out) & np.isfinite(x)).any():
            raise ClassViolationError("fiber map leaves the line chart; r too large")
        return out if np.ndim(out) else float(out)

    # ------------------------------------------------------------------
    # orbits
    # ------------------------------------------------------------------

    def line_orbit(self, sys: SkewSystem, y: np.ndarray, x0, alpha: float = 0.0) -> np.ndarray:
        """
        Orbits x_{k+1} = g_{y_k}(x_k) + alpha in the line chart.

        Args:
            sys: Skew system
            y: (S, n) driving values
            x0: (S,) starting points (line chart)
            alpha: Additive drift per step

        Returns:
            (S, n + 1) array; NaN after a step leaves the class
        """
        y = np.atleast_2d(np.asarray(y, dtype=float))
        S, n = y.shape
        xs = np.empty((S, n + 1))
        xs[:, 0] = np.broadcast_to(np.asarray(x0, dtype=float), (S,))
        xi_vals = sys.xi.evaluate(y)
        if sys.r.is_zero:
            xs[:, 1:] = xs[:, :1] + np.cumsum(xi_vals + alpha, axis=1)
            return xs
        e = np.exp(xi_vals)
        for k in range(n):
            xs[:, k + 1] = self._line_step(xi_vals[:, k], xs[:, k], sys.r, y[:, k], e[:, k]) + alpha
        return xs

    def _start_line(self, sys: SkewSystem, x0: float) -> float:
        if sys.chart == 'line':
            if not np.isfinite(x0):
                raise DomainError(f"line-chart start must be finite, got {x0}")
            return float(x0)
        if not 0.0 < x0 < 1.0:
            raise DomainError(f"interval-chart start must lie in (0, 1), got {x0}")
        return float(logit(x0))

    @staticmethod
    def _truncate(xs: np.ndarray) -> Tuple[np.ndarray, Optional[int]]:
        bad = ~np.isfinite(xs)
        if not bad.any():
            return xs, None
        k = int(np.flatnonzero(bad)[0])
        return xs[:k], k

    def iterate_trajectory(self, sys: SkewSystem, path: SymbolPath, x0: float, n: int,
                           window: Optional[int] = None) -> Trajectory:
        """
        Orbit of x0 driven by a canonical symbol path.

        The driving value at step k is xi at the midpoint of the cylinder of the
        W symbols starting at k. Integration always runs in the line chart;
        the interval series is its h-image.

        Args:
            sys: Skew system
            path: Canonical path over E_m (same m); needs n + W - 1 symbols
            x0: Start in the system's chart
            n: Number of steps
            window: Driving window W (config default)

        Returns:
            Trajectory with n + 1 points, or fewer with a diagnostic when it broke down
        """
        if path.spec.m != sys.m or not path.spec.canonical:
            raise ValidationError(f"path must be a canonical path over E_{sys.m}")
        driver = ChaoticDriver(sys.m, path.spec.N, window or self.window)
        digits = SymbolicDynamicsService().path_digits(path)
        y = driver.y_from_digits(digits, int(n))
        xs = self.line_orbit(sys, y[None, :], np.array([self._start_line(sys, x0)]))[0]
        xs, cut = self._truncate(xs)
        trajectory = Trajectory(xs, truncated_at=cut)
        if cut is not None:
            msg = f"orbit left the class at step {cut}; series truncated"
            trajectory.warnings.append(msg)
            current_app.logger.warning(msg)
        return trajectory

    def _simulate_group(self, sys: SkewSystem, size: int, n: int, x0: float, seed: int,
                        index: int, window: int, alpha: float, reducer: Optional[Callable]):
        rng = derive_rng(seed, 'trajectory', index)
        driver = ChaoticDriver(sys.m, sys.N, window)
        tail = driver.start(rng, size)
        xs = np.empty((size, n + 1))
        xs[:, 0] = x0
        for start in range(0, n, self.block):
            b = min(self.block, n - start)
            y, tail = driver.y_block(tail, driver.draw(rng, (size, b)))
            xs[:, start + 1:start + b + 1] = self.line_orbit(sys, y, xs[:, start], alpha)[:, 1:]
        return reducer(xs) if reducer else xs

    def simulate_batch(self, sys: SkewSystem, samples: int, n: int, x0: float, seed: int,
                       reducer: Optional[Callable] = None, window: Optional[int] = None,
                       alpha: float = 0.0, threads: Optional[int] = None) -> List:
        """
        Seeded batch of orbits from Lebesgue-random base points.

        Trajectories are simulated in fixed groups; group g draws its digits
        from stream ('trajectory', g), so results do not depend on `threads`.

        Args:
            sys: Skew system
            samples: Number of trajectories
            n: Steps per trajectory
            x0: Start in the system's chart
            seed: Master seed
            reducer: Optional function applied to each group's (size, n + 1) line-chart array
            window: Driving window W
            alpha: Additive drift per step
            threads: Worker cap (config default)

        Returns:
            List of per-group results (arrays when no reducer is given)
        """
        start = self._start_line(sys, x0)
        sizes = chunk_sizes(int(samples), self.group)
        jobs = [
            (sys, size, int(n), start, seed, g, window or self.window, alpha, reducer)
            for g, size in enumerate(sizes)
        ]
        return run_ordered(self._simulate_group, jobs, threads or self.threads)

    # ------------------------------------------------------------------
    # Lyapunov exponents
    # ------------------------------------------------------------------

    def _log_derivatives(self, sys: SkewSystem, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        xi_vals = sys.xi.evaluate(y)
        d0 = np.exp(xi_vals) + sys.r.dx(y, 0.0)
        d1 = np.exp(-xi_vals) + sys.r.dx(y, 1.0)
        if (d0 <= 0).any() or (d1 <= 0).any():
            raise ClassViolationError(
                "non-positive fiber derivative at an endpoint",
                min_d0=float(d0.min()), min_d1=float(d1.min())
            )
        return np.log(d0), np.log(d1)

    def lyapunov_exponents(self, sys: SkewSystem, samples: int = 0, seed: int = 0,
                           nodes: Optional[int] = None) -> LyapunovEstimate:
        """
        Fiber Lyapunov exponents L0 = int log g^'_y(0) dy and L1 = int log g^'_y(1) dy.

        Composite midpoint rule with `nodes` nodes; the error estimate is the
        Richardson difference with the half-resolution rule. With samples > 0 a
        Monte Carlo estimate with standard errors is added.
        """
        n = int(nodes or self.nodes)
        half = max(1, n // 2)
        fine0, fine1 = self._log_derivatives(sys, (np.arange(n) + 0.5) / n)
        coarse0, coarse1 = self._log_derivatives(sys, (np.arange(half) + 0.5) / half)
        L0, L1 = math.fsum(fine0) / n, math.fsum(fine1) / n
        err0 = abs(L0 - math.fsum(coarse0) / half) / 3.0
        err1 = abs(L1 - math.fsum(coarse1) / half) / 3.0

        mc = {}
        if samples:
            rng = derive_rng(seed, 'lyapunov', 0)
            s0, s1 = self._log_derivatives(sys, rng.random(int(samples)))
            root = math.sqrt(int(samples))
            mc = {
                'L0_mc': float(s0.mean()), 'L1_mc': float(s1.mean()),
                'L0_se': float(s0.std(ddof=1) / root) if samples > 1 else float('nan'),
                'L1_se': float(s1.std(ddof=1) / root) if samples > 1 else float('nan'),
                'samples': int(samples)
            }

        current_app.logger.info(f"Lyapunov exponents for {sys!r}: L0={L0:.6g}, L1={L1:.6g}")
        return LyapunovEstimate(L0=L0, L1=L1, L0_error=err0, L1_error=err1, nodes=n, **mc)

    # ------------------------------------------------------------------
    # class membership
    # ------------------------------------------------------------------

    def validate_class_membership(self, sys: SkewSystem, C: Optional[float] = None,
                                  r0: Optional[float] = None, grid: Optional[int] = None) -> ClassReport:
        """
        Check the membership conditions on a y x x grid.

        Conditions: centered displacement, declared monotonicity of xi, fixed
        endpoints, range [0, 1], monotone fiber maps (finite differences),
        |r| <= C x^2 and |r| <= C |1 - x|, and |r|, |dr/dx|, |dr/dy| <= r0.
        With C or r0 left unset, the smallest admissible value is reported.

        Args:
            sys: Skew system
            C: Vanishing-order constant
            r0: Perturbation budget (defaults to the system's declared r0)
            grid: Grid points per axis

        Returns:
            ClassReport (failures are reported, not raised)
        """
        g = int(grid or self.grid)
        r0 = sys.r.r0 if r0 is None else r0
        ys = (np.arange(g) + 0.5) / g
        xs = np.linspace(0.0, 1.0, g)
        Y, X = np.meshgrid(ys, xs, indexing='ij')
        xi_vals = sys.xi.evaluate(Y)
        conditions = []

        mean = sys.xi.mean()
        conditions.append(ClassCondition('centered', abs(mean) <= 1e-12, abs(mean), 1e-12))

        if sys.xi.monotone:
            diffs = np.diff(sys.xi.evaluate(ys))
            sign = 1.0 if sys.xi.monotone == 'increasing' else -1.0
            worst = float((sign * diffs).min())
            conditions.append(ClassCondition('monotone_displacement', worst >= 0, worst, 0.0))
        else:
            conditions.append(ClassCondition('monotone_displacement', True, 0.0, note='not declared'))

        image = self._mobius(xi_vals, X) + sys.r.value(Y, X)
        ends = max(float(np.abs(image[:, 0]).max()), float(np.abs(image[:, -1] - 1.0).max()))
        conditions.append(ClassCondition('endpoints', ends == 0.0, ends, 0.0))

        overshoot = np.maximum(-image, image - 1.0)
        k = np.unravel_index(np.argmax(overshoot), overshoot.shape)
        worst = float(max(overshoot[k], 0.0))
        conditions.append(ClassCondition('range', worst < OVERSHOOT_TOLERANCE, worst, OVERSHOOT_TOLERANCE,
                                         (float(Y[k]), float(X[k]))))

        steps = np.diff(image, axis=1)
        k = np.unravel_index(np.argmin(steps), steps.shape)
        worst = float(steps[k])
        conditions.append(ClassCondition('monotone', worst > 0, worst, 0.0, (float(Y[k]), float(X[k]))))

        r_abs = np.abs(sys.r.value(Y, X))
        inner = (X > 0) & (X < 1)
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = np.where(inner, np.maximum(r_abs / X ** 2, r_abs / np.abs(1.0 - X)), 0.0)
        k = np.unravel_index(np.argmax(ratio), ratio.shape)
        needed = float(ratio[k])
        conditions.append(ClassCondition(
            'vanishing_order', C is None or needed <= C * (1 + 1e-12), needed, C,
            (float(Y[k]), float(X[k])), note='' if C is not None else 'smallest admissible C reported'
        ))

        budget = np.maximum.reduce([r_abs, np.abs(sys.r.dx(Y, X)), np.abs(sys.r.dy(Y, X))])
        k = np.unravel_index(np.argmax(budget), budget.shape)
        needed = float(budget[k])
        conditions.append(ClassCondition(
            'perturbation_budget', r0 is None or needed <= r0 * (1 + 1e-12), needed, r0,
            (float(Y[k]), float(X[k])), note='' if r0 is not None else 'smallest admissible r0 reported'
        ))

        report = ClassReport(tuple(conditions), g, C, r0)
        if not report.passed:
            current_app.logger.warning(f"Class validation failed for {sys!r}: {report.failures()}")
        return report

    # ------------------------------------------------------------------
    # discretization
    # ------------------------------------------------------------------

    def discretize_displacement(self, xi: DisplacementSpec, m: int, N: int,
                                mode: Optional[str] = None) -> DiscreteDisplacement:
        """
        Cell values xi_N(i) = xi(midpoint of P_i) - shift, centered for the
        uniform measure.

        In rational mode (affine, sign and table kinds, K within the rational
        limit) the values are exact Fractions and the centering is exact.

        Returns:
            DiscreteDisplacement with the shift and the bound
            sup|xi'| m^-N / 2 + |shift| on the per-cell deviation
        """
        m, N = int(m), int(N)
        K = m ** N
        mode = mode or self.mode
        exact = mode == 'rational' and xi.exact and K <= self.rational_max
        if exact:
            values = np.array([xi.evaluate_exact(Fraction(2 * i + 1, 2 * K)) for i in range(K)], dtype=object)
            shift = sum(values, Fraction(0)) / K
        else:
            values = xi.evaluate((np.arange(K) + 0.5) / K)
            shift = math.fsum(values) / K
        centered = values - shift
        bound = xi.derivative_bound() / (2 * K) + abs(float(shift))
        return DiscreteDisplacement(centered, shift, bound, m, N)
