"""
Stopping-time lab: Monte Carlo escape statistics for Markov random walks
v_{n+1} = v_n + zeta(omega_n, omega_{n+1}) + alpha and for full chaotic walks,
exact absorption oracles on the lattice state space, exponential-tilt bounds
and the drift scaling sweep.

A walk escapes [A, B] at the first n > 0 with v_n <= A or v_n >= B.
"""
import math
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from flask import current_app
from scipy import sparse
from scipy.sparse.linalg import splu
from statsmodels.stats.proportion import proportion_confint
from statsmodels.stats.weightstats import DescrStatsW

from app.models.poisson import PoissonData
from app.models.subshift import SubshiftSpec
from app.models.walk import (
    EscapeBounds,
    EscapeStats,
    HalflineStats,
    OracleResult,
    ScalingReport,
    StayStats,
    TiltRates,
    WalkSpec,
    Witness,
    WitnessReport,
)
from app.services.skew_products import ChaoticDriver, SkewProductService
from app.services.symbolic_dynamics import MarkovStepper, SymbolicDynamicsService, digits_to_symbols
from app.utils import exact
from app.utils.errors import ConvergenceError, DomainError, SizeError, UnsupportedError, ValidationError
from app.utils.seeding import chunk_sizes, derive_rng, run_ordered

CONFIDENCE = 0.05
WITNESS_MAX_LEN = 1000


class _MarkovSource:
    """
    Step source for a chunk of Markov walks.

    Random draws are made for every trial of the chunk at every step, active
    or not, so a trial's path does not depend on when the others stop.
    """

    def __init__(self, walk: WalkSpec, rng: np.random.Generator, size: int):
        spec = walk.chain
        self.size = size
        self.m = spec.m
        self.N = spec.N
        self.canonical = spec.canonical
        self.table = walk.increment_table + walk.alpha
        self.stepper = MarkovStepper(spec)
        self.states = self.stepper.initial(rng, size, walk.initial_symbol)
        if self.canonical:
            self.powers = spec.m ** np.arange(spec.N - 1, -1, -1, dtype=np.int64)

    def advance(self, rng: np.random.Generator, active: np.ndarray, v: np.ndarray, b: int) -> np.ndarray:
        if self.canonical:
            fresh = rng.integers(0, self.m, size=(self.size, b), dtype=np.int64)[active]
            head = (self.states[active][:, None] // self.powers[None, :]) % self.m
            symbols = digits_to_symbols(np.concatenate([head, fresh], axis=1), self.m, self.N) - 1
            steps = self.table[symbols[:, :-1], fresh]
            self.states[active] = symbols[:, -1]
        else:
            steps = np.empty((active.size, b))
            for k in range(b):
                nxt, slots = self.stepper.step(self.states, rng)
                steps[:, k] = self.table[self.states[active], slots[active]]
                self.states = nxt
        return v[:, None] + np.cumsum(steps, axis=1)


class _ChaoticSource:
    """Step source for a chunk of chaotic walks (line chart)."""

    def __init__(self, walk: WalkSpec, rng: np.random.Generator, size: int, window: int,
                 skew: SkewProductService):
        self.system = walk.system
        self.alpha = walk.alpha
        self.size = size
        self.skew = skew
        self.driver = ChaoticDriver(walk.system.m, walk.system.N, window)
        self.tail = self.driver.start(rng, size)

    def advance(self, rng: np.random.Generator, active: np.ndarray, v: np.ndarray, b: int) -> np.ndarray:
        fresh = self.driver.draw(rng, (self.size, b))[active]
        y, tail = self.driver.y_block(self.tail[active], fresh)
        self.tail[active] = tail
        return self.skew.line_orbit(self.system, y, v, self.alpha)[:, 1:]


class StoppingLabService:
    """
    Service for escape times of random walks including:
    - Compact-interval and half-line escape estimates with censoring reports
    - Stay probabilities under negative drift
    - Gambler's-ruin oracle on (position, symbol) and its truncated variant
    - Exponential tilt rates, Doob bounds and zero-drift time brackets
    - Drift scaling sweep and recurrence witness search
    """

    def __init__(self, threads: Optional[int] = None):
        self.mode = current_app.config['ARITHMETIC_MODE']
        self.chunk = current_app.config['TRIAL_CHUNK']
        self.block = current_app.config['BLOCK_STEPS']
        self.threads = threads or current_app.config['MAX_THREADS']
        self.window = current_app.config['DRIVING_WINDOW']
        self.tilt_max_iter = current_app.config['TILT_MAX_ITER']
        self.tilt_tolerance = current_app.config['TILT_TOLERANCE']
        self.censoring_warn = current_app.config['CENSORING_WARN_FRACTION']
        self.ratio_per_decade = current_app.config['DIVERGENCE_RATIO_PER_DECADE']
        self.rational_oracle_max = current_app.config['RATIONAL_ORACLE_MAX_STATES']
        self.oracle_max = current_app.config['ORACLE_MAX_STATES']
        self.symbolic = SymbolicDynamicsService()
        self.skew = SkewProductService(threads=self.threads)

    # ------------------------------------------------------------------
    # simulation engine
    # ------------------------------------------------------------------

    def _source(self, walk: WalkSpec, rng: np.random.Generator, size: int):
        if walk.kind == 'markov':
            return _MarkovSource(walk, rng, size)
        return _ChaoticSource(walk, rng, size, self.window, self.skew)

    def _escape_chunk(self, walk: WalkSpec, lower: float, upper: float, size: int, horizon: int,
                      seed: int, index: int):
        rng = derive_rng(seed, 'escape', index)
        source = self._source(walk, rng, size)
        T = np.full(size, horizon, dtype=np.int64)
        side = np.zeros(size, dtype=np.int8)
        final = np.full(size, np.nan)
        v = np.full(size, float(walk.x0))
        active = np.arange(size)
        t = 0
        while active.size and t < horizon:
            b = min(self.block, horizon - t)
            path = source.advance(rng, active, v[active], b)
            low = path <= lower
            hit = low | (path >= upper)
            done = hit.any(axis=1)
            if done.any():
                first = hit[done].argmax(axis=1)
                picked = np.arange(first.size)
                rows = active[done]
                T[rows] = t + first + 1
                final[rows] = path[done][picked, first]
                side[rows] = np.where(low[done][picked, first], -1, 1)
            v[active] = path[:, -1]
            active = active[~done]
            t += b
        final[active] = v[active]
        return T, side, final

    def _simulate(self, walk: WalkSpec, lower: float, upper: float, trials: int, horizon: int,
                  seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Exit times, sides (-1 left, +1 right, 0 censored) and exit positions.

        Trials are split into fixed chunks; chunk c draws from stream
        ('escape', c), so the result does not depend on the thread count.
        """
        if int(trials) < 1:
            raise ValidationError(f"need at least one trial, got {trials}")
        if int(horizon) < 1:
            raise ValidationError(f"horizon must be >= 1, got {horizon}")
        jobs = [
            (walk, lower, upper, size, int(horizon), seed, c)
            for c, size in enumerate(chunk_sizes(int(trials), self.chunk))
        ]
        parts = run_ordered(self._escape_chunk, jobs, self.threads)
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))

    # ------------------------------------------------------------------
    # statistics helpers
    # ------------------------------------------------------------------

    @staticmethod
    def _proportion(count: int, n: int) -> Tuple[float, Tuple[float, float]]:
        low, high = proportion_confint(int(count), int(n), alpha=CONFIDENCE, method='wilson')
        return count / n, (float(low), float(high))

    @staticmethod
    def _mean(values: np.ndarray) -> Tuple[float, Tuple[float, float]]:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return math.nan, (math.nan, math.nan)
        mean = math.fsum(values) / values.size
        if values.size < 2:
            return mean, (mean, mean)
        low, high = DescrStatsW(values).zconfint_mean(alpha=CONFIDENCE)
        return mean, (float(low), float(high))

    @staticmethod
    def _doob(T: np.ndarray, side: np.ndarray, final: np.ndarray, x0: float, alpha: float) -> Tuple[float, float]:
        """Mean and z-score of v_T - v_0 - alpha T over exited trials."""
        exited = (side != 0) & np.isfinite(final)
        d = final[exited] - x0 - alpha * T[exited]
        if d.size < 2:
            return math.nan, math.nan
        mean = math.fsum(d) / d.size
        se = float(np.std(d, ddof=1)) / math.sqrt(d.size)
        if se == 0.0:
            return mean, 0.0 if abs(mean) < 1e-12 else math.inf
        return mean, mean / se

    def _guard_warnings(self, walk: WalkSpec, gaps: Sequence[float]) -> List[str]:
        if walk.poisson is None:
            return []
        G = float(walk.poisson.bounds.G)
        if min(gaps) <= G:
            return [f"interval within G={G:.4g} of the start; bounds need wider margins"]
        return []

    # ------------------------------------------------------------------
    # Monte Carlo estimators
    # ------------------------------------------------------------------

    def estimate_escape_compact(self, walk: WalkSpec, A: float, B: float, trials: int, horizon: int,
                                seed: int) -> EscapeStats:
        """
        Exit statistics of [A, B].

        Args:
            walk: Walk specification (start x0, drift alpha)
            A: Left boundary, A < x0
            B: Right boundary, B > x0
            trials: Number of independent trials
            horizon: Step cap; trials still inside are reported as censored
            seed: Master seed

        Returns:
            EscapeStats with Wilson interval for p_left and normal intervals for means
        """
        x0 = float(walk.x0)
        if not A < x0 < B:
            raise DomainError(f"need A < x0 < B, got A={A}, x0={x0}, B={B}")

        T, side, final = self._simulate(walk, float(A), float(B), trials, horizon, seed)
        n = T.size
        left = side == -1
        right = side == 1
        censored = side == 0
        warnings = self._guard_warnings(walk, [x0 - A, B - x0])
        if censored.sum() > self.censoring_warn * n:
            warnings.append(f"{int(censored.sum())} of {n} trials hit the horizon; bounds unreliable")
        lost = int((~np.isfinite(final)).sum())
        if lost:
            warnings.append(f"{lost} trials left the class and are counted as censored")

        p_left, p_ci = self._proportion(int(left.sum()), n)
        mean_time, time_ci = self._mean(T[~censored])
        mean_left, left_ci = self._mean(T[left])
        doob_mean, doob_z = self._doob(T, side, final, x0, walk.alpha)

        stats = EscapeStats(
            trials=n, horizon=int(horizon), A=float(A), B=float(B), x0=x0, alpha=float(walk.alpha),
            exits_left=int(left.sum()), exits_right=int(right.sum()), censored=int(censored.sum()),
            p_left=p_left, p_left_ci=p_ci, mean_time=mean_time, mean_time_ci=time_ci,
            mean_time_left=mean_left, mean_time_left_ci=left_ci,
            doob_mean=doob_mean, doob_z=doob_z, warnings=warnings
        )
        for msg in warnings:
            current_app.logger.warning(msg)
        current_app.logger.info(
            f"Escape [{A}, {B}] alpha={walk.alpha}: p_left={p_left:.4f}, E[T]={mean_time:.3f}, "
            f"censored={stats.censored}/{n}"
        )
        return stats

    @staticmethod
    def doob_check(stats: EscapeStats, limit: float = 4.0) -> bool:
        """Optional-stopping identity E[v_T] - v_0 - alpha E[T] = 0 within `limit` standard errors."""
        return bool(np.isfinite(stats.doob_z) and abs(stats.doob_z) < limit)

    def estimate_escape_halfline(self, walk: WalkSpec, B: float, trials: int, horizons: Sequence[int],
                                 seed: int) -> HalflineStats:
        """
        First passage above B along a ladder of horizons.

        One simulation to the largest horizon serves every rung. The
        censored mean at h is the mean of min(T, h); its growth per decade
        is compared with DIVERGENCE_RATIO_PER_DECADE.
        """
        horizons = [int(h) for h in horizons]
        if not horizons or horizons[0] < 1 or any(b <= a for a, b in zip(horizons, horizons[1:])):
            raise ValidationError(f"horizons must be positive and increasing, got {horizons}")
        x0 = float(walk.x0)
        if x0 > B:
            raise DomainError(f"need x0 <= B, got x0={x0}, B={B}")

        T, side, _ = self._simulate(walk, -math.inf, float(B), trials, horizons[-1], seed)
        n = T.size
        rows = []
        for h in horizons:
            escaped = (side == 1) & (T <= h)
            fraction, (low, high) = self._proportion(int(escaped.sum()), n)
            rows.append({
                'horizon': h,
                'escaped': int(escaped.sum()),
                'escaped_fraction': fraction,
                'ci_low': low,
                'ci_high': high,
                'censored_mean': math.fsum(np.minimum(T, h)) / n,
                'escapee_mean': self._mean(T[escaped])[0]
            })
        table = pd.DataFrame(rows)
        means = table['censored_mean'].to_numpy()
        growth = [float(b / a) for a, b in zip(means, means[1:])]
        required = [float(self.ratio_per_decade ** math.log10(b / a)) for a, b in zip(horizons, horizons[1:])]
        warnings = self._guard_warnings(walk, [B - x0])

        stats = HalflineStats(float(B), x0, float(walk.alpha), n, table, growth, required, warnings)
        current_app.logger.info(
            f"Half-line escape B={B} alpha={walk.alpha}: escaped {rows[-1]['escaped_fraction']:.4f} "
            f"by {horizons[-1]}, diverging={stats.diverging}"
        )
        return stats

    def estimate_stay_probability(self, walk: WalkSpec, B: float, trials: int, horizon: int,
                                  seed: int) -> StayStats:
        """
        Fraction of trials that never reach B within the horizon.

        The estimate at `horizon` is compared with the one at twice the
        horizon from the same simulation; a change larger than the interval
        width is flagged.
        """
        alpha = float(walk.alpha)
        if alpha > 0:
            raise DomainError(f"stay probability needs alpha <= 0, got {alpha}")
        warnings = []
        if alpha == 0:
            warnings.append("zero drift is recurrent; the stay probability tends to 0 with the horizon")
        x0 = float(walk.x0)
        if x0 >= B:
            raise DomainError(f"need x0 < B, got x0={x0}, B={B}")

        T, side, _ = self._simulate(walk, -math.inf, float(B), trials, 2 * int(horizon), seed)
        n = T.size
        escaped = side == 1
        stay, ci = self._proportion(int((~(escaped & (T <= horizon))).sum()), n)
        doubled = float((~escaped).sum()) / n
        stable = abs(stay - doubled) <= ci[1] - ci[0]
        if not stable:
            warnings.append(
                f"stay probability moved from {stay:.4f} to {doubled:.4f} when doubling the horizon"
            )
        for msg in warnings:
            current_app.logger.warning(msg)
        return StayStats(alpha, float(B), x0, n, int(horizon), stay, ci, doubled, stable, warnings)

    # ------------------------------------------------------------------
    # exact oracles
    # ------------------------------------------------------------------

    def _chain(self, chain, mode: Optional[str] = None) -> SubshiftSpec:
        if isinstance(chain, SubshiftSpec):
            return chain
        return self.symbolic.explicit_subshift(chain, mode)

    def _lattice_steps(self, spec: SubshiftSpec, increments, alpha, scale: int) -> np.ndarray:
        if isinstance(increments, PoissonData):
            increments = increments.zeta
        table = np.asarray(increments, dtype=object)
        if table.ndim == 1:
            table = table[spec.successors]
        if table.shape != spec.successors.shape:
            raise ValidationError(f"increment table {table.shape} does not match chain {spec.successors.shape}")
        shift = exact.to_decimal_fraction(alpha)
        admissible = exact.as_float(spec.probabilities) > 0
        steps = np.zeros(table.shape, dtype=np.int64)
        for idx, value in np.ndenumerate(table):
            if not admissible[idx]:
                continue
            step = (exact.to_decimal_fraction(value) + shift) * scale
            if step.denominator != 1:
                raise UnsupportedError(
                    f"step {step} at slot {idx} is not an integer at scale {scale}", scale=scale
                )
            steps[idx] = int(step)
        return steps

    def gambler_ruin_oracle(self, A, B, x0, chain: Union[SubshiftSpec, Sequence], increments,
                            alpha=0, scale: int = 1, initial_symbol: Optional[int] = None,
                            mode: Optional[str] = None) -> OracleResult:
        """
        Exit probabilities and times of [A, B] from the absorption system on
        (position, symbol).

        With h(x, i) = P(exit left), t(x, i) = E[T] and g(x, i) = E[T; exit left]
        for current symbol i:
            h - Q h = P(left in one step),  t - Q t = 1,  g - Q g = P(left in one step) + Q h
        where Q is the transition kernel among interior states.

        Args:
            A, B, x0: Boundaries and start (integers after scaling)
            chain: SubshiftSpec or explicit stochastic matrix
            increments: (K, w) table over successor slots, length-K per-target
                vector, or PoissonData (its zeta table)
            alpha: Drift added to every step
            scale: Lattice scale; scale * (step + alpha) must be an integer
            initial_symbol: Optional 1-based omega_{-1}; stationary start otherwise
            mode: 'rational' for exact elimination when the state space is small

        Returns:
            OracleResult with Fractions in rational mode

        Raises:
            UnsupportedError: non-integer steps on the lattice
            SizeError: state space above ORACLE_MAX_STATES
        """
        spec = self._chain(chain, mode)
        scale = int(scale)
        if scale < 1:
            raise ValidationError(f"scale must be a positive integer, got {scale}")
        ends = []
        for name, value in (('A', A), ('B', B), ('x0', x0)):
            point = exact.to_decimal_fraction(value) * scale
            if point.denominator != 1:
                raise UnsupportedError(f"{name}={value} is not on the lattice of scale {scale}")
            ends.append(int(point))
        a, b, start = ends
        if not a < start < b:
            raise DomainError(f"need A < x0 < B, got A={A}, x0={x0}, B={B}")

        steps = self._lattice_steps(spec, increments, alpha, scale)
        K = spec.K
        P = b - a - 1
        S = P * K
        if S > self.oracle_max:
            raise SizeError(f"oracle state space {S} exceeds limit {self.oracle_max}", states=S)
        rational = (mode or self.mode) == 'rational' and spec.mode == 'rational' and S <= self.rational_oracle_max

        successors, probabilities = spec.tables
        admissible = exact.as_float(probabilities) > 0
        pos = np.arange(P)[:, None, None]
        target = pos + steps[None, :, :]
        mask = np.broadcast_to(admissible[None], target.shape)
        row = np.broadcast_to(pos * K + np.arange(K)[None, :, None], target.shape)
        col = target * K + successors[None, :, :]
        inside = mask & (target >= 0) & (target < P)
        left = mask & (target < 0)
        slot_prob = np.broadcast_to(probabilities[None], target.shape)

        if rational:
            h, t, g = self._oracle_rational(S, row, col, slot_prob, inside, left)
            mu = self._initial_distribution(spec, initial_symbol, rational=True)
        else:
            h, t, g = self._oracle_sparse(S, row, col, exact.as_float(slot_prob), inside, left)
            mu = exact.as_float(self._initial_distribution(spec, initial_symbol, rational=False))

        base = (start - a - 1) * K
        p_left = np.dot(mu, h[base:base + K])
        mean_time = np.dot(mu, t[base:base + K])
        joint = np.dot(mu, g[base:base + K])
        mean_left = joint / p_left if p_left != 0 else None

        result = OracleResult(p_left, mean_time, mean_left, S, 'rational' if rational else 'float', scale)
        current_app.logger.info(
            f"Oracle [{A}, {B}] from {x0} on {S} states ({result.mode}): "
            f"p_left={float(p_left):.6f}, E[T]={float(mean_time):.6f}"
        )
        return result

    @staticmethod
    def _initial_distribution(spec: SubshiftSpec, initial_symbol: Optional[int], rational: bool) -> np.ndarray:
        if initial_symbol is None:
            return spec.stationary
        if not 1 <= initial_symbol <= spec.K:
            raise ValidationError(f"initial symbol {initial_symbol} outside 1..{spec.K}")
        successors, probabilities = spec.tables
        mu = np.array([Fraction(0)] * spec.K, dtype=object) if rational else np.zeros(spec.K)
        for s in range(successors.shape[1]):
            mu[successors[initial_symbol - 1, s]] += probabilities[initial_symbol - 1, s]
        return mu

    @staticmethod
    def _oracle_rational(S, row, col, prob, inside, left):
        matrix = exact.identity(S)
        one_step = np.array([Fraction(0)] * S, dtype=object)
        for r, c, p in zip(row[inside], col[inside], prob[inside]):
            matrix[r, c] -= p
        for r, p in zip(row[left], prob[left]):
            one_step[r] += p
        rhs = np.empty((S, 2), dtype=object)
        rhs[:, 0] = one_step
        rhs[:, 1] = Fraction(1)
        solved = exact.solve(matrix, rhs)
        h, t = solved[:, 0], solved[:, 1]
        carry = one_step.copy()
        for r, c, p in zip(row[inside], col[inside], prob[inside]):
            carry[r] += p * h[c]
        g = exact.solve(matrix, carry)
        return h, t, g

    @staticmethod
    def _oracle_sparse(S, row, col, prob, inside, left):
        Q = sparse.coo_matrix((prob[inside], (row[inside], col[inside])), shape=(S, S)).tocsr()
        one_step = np.bincount(row[left], weights=prob[left], minlength=S)
        try:
            lu = splu((sparse.identity(S, format='csr') - Q).tocsc())
        except RuntimeError as e:
            raise ConvergenceError(f"absorption system is singular: {e}") from e
        h = lu.solve(one_step)
        t = lu.solve(np.ones(S))
        g = lu.solve(one_step + Q @ h)
        return h, t, g

    def stay_probability_oracle(self, chain: Union[SubshiftSpec, Sequence], increments, alpha, B, lower,
                                x0=0, scale: int = 1, initial_symbol: Optional[int] = None,
                                mode: Optional[str] = None):
        """
        Probability of never reaching B, with the half-line truncated at `lower`.

        Equals P(reach lower before B); the truncation overestimates the
        stay probability by the chance of coming back up from below `lower`.
        """
        if float(alpha) > 0:
            raise DomainError(f"stay probability needs alpha <= 0, got {alpha}")
        return self.gambler_ruin_oracle(lower, B, x0, chain, increments, alpha, scale,
                                        initial_symbol, mode).p_left

    # ------------------------------------------------------------------
    # tilt rates and optional-stopping bounds
    # ------------------------------------------------------------------

    def exponential_tilt_rates(self, pd_data: PoissonData, alpha: float,
                               max_iter: Optional[int] = None, tol: Optional[float] = None) -> TiltRates:
        """
        Per-row roots of phi_i(r) = sum_j pi_ij exp(r (zeta(i, j) + alpha)) = 1.

        Each row is bisected on q_i(r) = (phi_i(r) - 1) / r, which has the
        sign of alpha near 0 and the opposite sign past the root; the bracket
        is [-10/D, 0] for alpha > 0 and [0, 10/D] for alpha < 0.

        Raises:
            DomainError: Vminus = 0 (some row has no spread)
            ConvergenceError: a row has no root inside the bracket
        """
        alpha = float(alpha)
        D = float(pd_data.bounds.D)
        Vminus = float(pd_data.bounds.Vminus)
        Vplus = float(pd_data.bounds.Vplus)
        if Vminus <= 0:
            raise DomainError("Vminus = 0: a state has deterministic increments and no tilt exists")
        guard = Vminus / (2 * D)
        K = pd_data.K
        if alpha == 0:
            ones = np.ones(K)
            return TiltRates(0.0, 0.0, 0.0, np.zeros(K), ones, ones, guard, 0.0, 0.0, 0)

        probs = exact.as_float(pd_data.probabilities)
        c = exact.as_float(pd_data.zeta) + alpha
        sign = 1.0 if alpha > 0 else -1.0

        def q(r: np.ndarray) -> np.ndarray:
            return (probs * np.expm1(r[:, None] * c)).sum(axis=1) / r

        near = np.zeros(K)
        far = np.full(K, -sign * 10.0 / D)
        if np.any(np.sign(q(far)) == sign):
            bad = int(np.flatnonzero(np.sign(q(far)) == sign)[0]) + 1
            raise ConvergenceError(f"no tilt root in the bracket for state {bad}", state=bad, alpha=alpha)

        limit = max_iter or self.tilt_max_iter
        tolerance = tol or self.tilt_tolerance
        iterations = 0
        while iterations < limit and np.abs(far - near).max() > tolerance:
            mid = 0.5 * (near + far)
            same = np.sign(q(mid)) == sign
            near = np.where(same, mid, near)
            far = np.where(same, far, mid)
            iterations += 1
        roots = 0.5 * (near + far)

        r_minus, r_plus = float(roots.min()), float(roots.max())

        def mgf(r: float) -> np.ndarray:
            return (probs * np.exp(r * c)).sum(axis=1)

        warnings = []
        if abs(alpha) >= guard:
            warnings.append(f"|alpha|={abs(alpha)} outside the Taylor regime |alpha| < {guard:.4g}")
            current_app.logger.warning(warnings[-1])
        rates = TiltRates(
            alpha=alpha, r_minus=r_minus, r_plus=r_plus, row_roots=roots,
            mgf_at_minus=mgf(r_minus), mgf_at_plus=mgf(r_plus), taylor_guard=guard,
            linear_minus=-2 * alpha / Vminus, linear_plus=-2 * alpha / Vplus,
            iterations=iterations, warnings=warnings
        )
        current_app.logger.info(
            f"Tilt rates alpha={alpha}: r_minus={r_minus:.6g}, r_plus={r_plus:.6g} after {iterations} halvings"
        )
        return rates

    def tilt_escape_bounds(self, pd_data: PoissonData, alpha: float, A: float, B: float,
                           x0: float = 0.0) -> EscapeBounds:
        """
        Bracket on p_left from optional stopping of exp(r v_n) (alpha > 0) or v_n (alpha = 0).

        The overshoot past either boundary is at most o = D + |alpha|.
        """
        alpha = float(alpha)
        if alpha < 0:
            raise DomainError(f"tilt bounds are implemented for alpha >= 0, got {alpha}")
        if not A < x0 < B:
            raise DomainError(f"need A < x0 < B, got A={A}, x0={x0}, B={B}")
        o = float(pd_data.bounds.D) + abs(alpha)
        linear = ((B - x0) / (B - A + o), (B + o - x0) / (B + o - A))
        if alpha == 0:
            return EscapeBounds(linear[0], linear[1], 'linear')

        rates = self.exponential_tilt_rates(pd_data, alpha)

        def ratio(r, near, far):
            if abs(r) < 1e-12:
                return None
            return (math.exp(r * near) - math.exp(r * far)) / -math.expm1(r * far)

        low = ratio(rates.r_minus, x0 - A + o, B - A + o)
        high = ratio(rates.r_plus, x0 - A, B + o - A)
        low = linear[0] if low is None else low
        high = linear[1] if high is None else high
        return EscapeBounds(float(np.clip(low, 0, 1)), float(np.clip(high, 0, 1)), 'tilt')

    @staticmethod
    def zero_drift_time_bounds(pd_data: PoissonData, A: float, B: float, p_left: float,
                               x0: float = 0.0) -> Tuple[float, float]:
        """
        E[T] bracket from the sub/supermartingales v_n^2 - n V+ and v_n^2 - n V-.

        Exit positions lie in [A - D, A] and [B, B + D].
        """
        D = float(pd_data.bounds.D)
        Vminus = float(pd_data.bounds.Vminus)
        Vplus = float(pd_data.bounds.Vplus)

        def square_range(lo, hi):
            sq = (lo * lo, hi * hi)
            inner = 0.0 if lo <= 0 <= hi else min(sq)
            return inner, max(sq)

        left_min, left_max = square_range(A - D, A)
        right_min, right_max = square_range(B, B + D)
        low = (p_left * left_min + (1 - p_left) * right_min - x0 * x0) / Vplus
        high = (p_left * left_max + (1 - p_left) * right_max - x0 * x0) / Vminus if Vminus > 0 else math.inf
        return max(low, 0.0), high

    # ------------------------------------------------------------------
    # scaling sweep
    # ------------------------------------------------------------------

    @staticmethod
    def _spread(values) -> float:
        values = np.asarray([v for v in values if np.isfinite(v) and v > 0], dtype=float)
        if values.size < 2:
            return math.nan
        return float(values.max() / values.min())

    def drift_scaling_experiment(self, walk: WalkSpec, alphas: Sequence[float], A: float, B: float,
                                 trials: int, horizon: int, seed: int,
                                 zero_drift_A: Optional[Sequence[float]] = None,
                                 halfline_horizon: Optional[int] = None) -> ScalingReport:
        """
        Sweep positive drifts and tabulate the normalized escape quantities.

        Drift rows: p_left on [A, B], E[T], p_left exp(-(2/V+) alpha A) / alpha
        and alpha E[T_B]. Zero-drift rows (one per entry of `zero_drift_A`):
        p_left |A|, E[T | left] / A^2 and the time bracket.

        Returns:
            ScalingReport with max/min ratios of every normalized column
        """
        alphas = [float(a) for a in alphas]
        if not alphas or any(a <= 0 for a in alphas):
            raise DomainError(f"drift list must be positive, got {alphas}")
        bounds = walk.poisson.bounds if walk.poisson is not None else None
        Vplus = float(bounds.Vplus) if bounds is not None else math.nan
        halfline_horizon = int(halfline_horizon or horizon)
        warnings = []
        rows = []

        for alpha in alphas:
            drifted = walk.with_alpha(alpha)
            if bounds is not None and alpha >= float(bounds.Vminus) / (2 * float(bounds.D)):
                warnings.append(f"alpha={alpha} outside the Taylor regime")
            compact = self.estimate_escape_compact(drifted, A, B, trials, horizon, seed)
            half = self.estimate_escape_halfline(drifted, B, trials, [halfline_horizon], seed)
            time_B = float(half.table['escapee_mean'].iloc[-1])
            rows.append({
                'regime': 'drift', 'alpha': alpha, 'A': float(A), 'B': float(B),
                'p_left': compact.p_left, 'p_left_low': compact.p_left_ci[0], 'p_left_high': compact.p_left_ci[1],
                'mean_time': compact.mean_time, 'censored': compact.censored,
                'normalized_p_left': compact.p_left * math.exp(-(2.0 / Vplus) * alpha * A) / alpha,
                'mean_time_B': time_B,
                'escaped_fraction_B': float(half.table['escaped_fraction'].iloc[-1]),
                'alpha_mean_time_B': alpha * time_B,
                'doob_z': compact.doob_z
            })
            warnings.extend(compact.warnings)

        for A0 in zero_drift_A or []:
            flat = walk.with_alpha(0.0)
            compact = self.estimate_escape_compact(flat, A0, B, trials, horizon, seed)
            row = {
                'regime': 'zero', 'alpha': 0.0, 'A': float(A0), 'B': float(B),
                'p_left': compact.p_left, 'p_left_low': compact.p_left_ci[0], 'p_left_high': compact.p_left_ci[1],
                'mean_time': compact.mean_time, 'censored': compact.censored,
                'p_left_abs_A': compact.p_left * abs(A0),
                'mean_time_left': compact.mean_time_left,
                'mean_time_left_over_A2': compact.mean_time_left / (A0 * A0),
                'doob_z': compact.doob_z
            }
            if walk.poisson is not None:
                low, high = self.zero_drift_time_bounds(walk.poisson, A0, B, compact.p_left, walk.x0)
                row['time_lower'], row['time_upper'] = low, high
            rows.append(row)
            warnings.extend(compact.warnings)

        table = pd.DataFrame(rows)
        ratios = {}
        for column in ('normalized_p_left', 'alpha_mean_time_B', 'p_left_abs_A', 'mean_time_left_over_A2'):
            if column in table:
                ratios[column] = self._spread(table[column].dropna())
        current_app.logger.info(f"Drift scaling over {len(alphas)} drifts: ratios={ratios}")
        return ScalingReport(table, ratios, list(dict.fromkeys(warnings)))

    # ------------------------------------------------------------------
    # recurrence witnesses
    # ------------------------------------------------------------------

    @staticmethod
    def _witness(successors: np.ndarray, admissible: np.ndarray, values: np.ndarray, L: float,
                 max_len: int, direction: str) -> Witness:
        """
        Shortest admissible word whose displacement sum strictly exceeds L.

        A self-looping cell with value v > 0 reaches k·v > L after floor(L/v) + 1
        repetitions. This equals ceil(L/v) unless L/v is an integer, where ceil
        would only reach the level, not pass it.
        """
        K = values.size
        sign = 1.0 if direction == 'up' else -1.0
        loops = ((successors == np.arange(K)[:, None]) & admissible).any(axis=1) & (values > 0)
        fixed, fixed_len = None, None
        if loops.any():
            cell = int(np.argmax(np.where(loops, values, -np.inf)))
            fixed, fixed_len = cell + 1, int(math.floor(L / values[cell])) + 1

        best = values.copy()
        back = []
        for length in range(1, max_len + 1):
            if best.max() > L:
                j = int(np.argmax(best))
                total = float(best[j])
                word = [j]
                for pred in reversed(back):
                    j = int(pred[j])
                    word.append(j)
                return Witness(direction, True, tuple(int(w) + 1 for w in reversed(word)),
                               sign * total, fixed, fixed_len)
            if length == max_len:
                break
            candidates = np.where(admissible, best[:, None] + values[successors], -np.inf)
            new = np.full(K, -np.inf)
            np.maximum.at(new, successors[admissible], candidates[admissible])
            rows, slots = np.nonzero(admissible & (candidates == new[successors]) & np.isfinite(candidates))
            pred = np.full(K, -1, dtype=np.int64)
            pred[successors[rows, slots]] = rows
            back.append(pred)
            best = new
        return Witness(direction, False, (), sign * float(best.max()), fixed, fixed_len)

    def recurrence_witness_search(self, chain: Union[SubshiftSpec, Sequence], xi, L: float,
                                  max_len: Optional[int] = None) -> WitnessReport:
        """
        Shortest admissible words with cumulative displacement > L and < -L.

        Dynamic programming over word length keeps the best cumulative sum
        ending in each symbol. Cells with a self-loop and displacement of the
        needed sign are reported with the length of their constant word.

        Args:
            chain: SubshiftSpec or explicit stochastic matrix
            xi: Displacement per symbol (length K)
            L: Target level, L >= 0
            max_len: Longest word tried

        Returns:
            WitnessReport; a missing witness is a result, not an error
        """
        if L < 0:
            raise DomainError(f"level must be non-negative, got {L}")
        spec = self._chain(chain)
        values = np.asarray(exact.as_float(xi), dtype=float)
        if values.shape != (spec.K,):
            raise ValidationError(f"xi has length {values.shape[0]}, expected {spec.K}")
        successors, probabilities = spec.tables
        admissible = exact.as_float(probabilities) > 0
        limit = int(max_len or WITNESS_MAX_LEN)

        up = self._witness(successors, admissible, values, float(L), limit, 'up')
        down = self._witness(successors, admissible, -values, float(L), limit, 'down')
        current_app.logger.info(
            f"Witness search L={L}: up={'length ' + str(up.length) if up.found else 'none'}, "
            f"down={'length ' + str(down.length) if down.found else 'none'}"
        )
        return WitnessReport(float(L), limit, up, down)
