"""
Poisson equation for Markov random walks.

Solves (Pi - I) Delta = Pi xi - P_nu xi with P_nu Delta = 0, builds the
centered increments zeta(i, j) = xi(j) - P_nu xi - Delta(j) + Delta(i) and the
bound quadruple {D, V-, V+, G}. Two solver paths are kept side by side: a
general linear solve for any primitive chain and the geometric-sum closed
form for the canonical partitions of E_m.
"""
import math
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
import statsmodels.api as sm
from flask import current_app
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from app.models.poisson import GrowthReport, MartingaleReport, PoissonBounds, PoissonData
from app.models.skew import DiscreteDisplacement, DisplacementSpec
from app.models.subshift import SubshiftSpec
from app.services.skew_products import SkewProductService
from app.services.symbolic_dynamics import MarkovStepper, SymbolicDynamicsService
from app.utils import exact
from app.utils.cache import cache_get, cache_set, get_poisson_cache_key
from app.utils.errors import ConvergenceError, DomainError, SizeError, ValidationError
from app.utils.seeding import chunk_sizes, derive_rng, run_ordered


class PoissonSolverService:
    """
    Service for the Poisson equation including:
    - General solve on any primitive chain (exact for small K, sparse LU otherwise)
    - Closed-form solve on canonical partitions via block means of Pi^M xi
    - Centered increments, bound quadruple and growth diagnostics across N
    - Monte Carlo martingale check of the corrected walk
    """

    def __init__(self, threads: Optional[int] = None):
        self.mode = current_app.config['ARITHMETIC_MODE']
        self.rational_max = current_app.config['RATIONAL_MAX_SYMBOLS']
        self.rational_solve_max = current_app.config['RATIONAL_SOLVE_MAX_SYMBOLS']
        self.dense_max = current_app.config['DENSE_MAX_SYMBOLS']
        self.tolerance = current_app.config['POISSON_TOLERANCE']
        self.centering = current_app.config['CENTERING_TOLERANCE']
        self.chunk = current_app.config['TRIAL_CHUNK']
        self.threads = threads or current_app.config['MAX_THREADS']
        self.symbolic = SymbolicDynamicsService()

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def _vector(self, xi, rational: bool) -> np.ndarray:
        if isinstance(xi, DiscreteDisplacement):
            xi = xi.values
        if rational:
            return exact.fraction_array(xi)
        return np.asarray(exact.as_float(xi), dtype=float)

    @staticmethod
    def _apply(probabilities: np.ndarray, successors: np.ndarray, v: np.ndarray) -> np.ndarray:
        """(Pi v)(i) = sum_s pi[i, s] v[successors[i, s]]."""
        return (probabilities * v[successors]).sum(axis=1)

    def compute_zeta(self, xi: np.ndarray, delta: np.ndarray, successors: np.ndarray, mean=0) -> np.ndarray:
        """
        Centered increments zeta(i, j) = xi(j) - mean - Delta(j) + Delta(i) per successor slot.

        Args:
            xi: Displacement vector
            delta: Poisson solution
            successors: (K, w) successor table
            mean: P_nu xi

        Returns:
            (K, w) table aligned with `successors`
        """
        return xi[successors] - mean - delta[successors] + delta[:, None]

    def compute_bounds(self, zeta: np.ndarray, probabilities: np.ndarray, delta: np.ndarray) -> PoissonBounds:
        """
        D = max |zeta| on admissible pairs, V-/V+ = min/max row second moment,
        G = max Delta - min Delta.
        """
        admissible = exact.as_float(probabilities) > 0
        D = np.abs(zeta[admissible]).max()
        V = (probabilities * zeta * zeta).sum(axis=1)
        return PoissonBounds(D=D, Vminus=V.min(), Vplus=V.max(), G=delta.max() - delta.min())

    def _residual(self, probabilities, successors, xi, delta, mean) -> float:
        r = self._apply(probabilities, successors, delta) - delta - self._apply(probabilities, successors, xi) + mean
        return float(np.abs(exact.as_float(r)).max())

    def _package(self, xi, delta, stationary, successors, probabilities, mode, solver,
                 condition=None, warnings=None) -> PoissonData:
        mean = np.dot(stationary, xi)
        zeta = self.compute_zeta(xi, delta, successors, mean)
        bounds = self.compute_bounds(zeta, probabilities, delta)
        residual = self._residual(probabilities, successors, xi, delta, mean)
        normalization = abs(float(np.dot(stationary, delta)))
        if residual > self.tolerance:
            raise ConvergenceError(f"Poisson residual {residual:.3e} above tolerance", residual=residual)
        if normalization > self.centering * max(1.0, float(np.abs(exact.as_float(delta)).max())):
            raise ConvergenceError(f"P_nu Delta = {normalization:.3e} is not zero", normalization=normalization)
        return PoissonData(
            xi=xi, delta=delta, stationary=stationary, successors=successors,
            probabilities=probabilities, zeta=zeta, bounds=bounds, residual=residual,
            mode=mode, solver=solver, condition=condition, warnings=list(warnings or [])
        )

    # ------------------------------------------------------------------
    # closed forms
    # ------------------------------------------------------------------

    def srw_displacement(self, N: int, mode: Optional[str] = None) -> np.ndarray:
        """
        Symmetric random walk step on the lexicographic N-tuples of E_2:
        +1 on the first half (omega_0 = 1), -1 on the second half.
        """
        K = 2 ** int(N)
        values = np.where(np.arange(K) < K // 2, 1, -1)
        if (mode or self.mode) == 'rational' and K <= self.rational_max:
            return exact.fraction_array(values)
        return values.astype(float)

    def srw_delta_closed_form(self, N: int) -> np.ndarray:
        """
        Delta_N(i) = xi_N(i) + |xi_N(i)| (#{omega_j = 2} - #{omega_j = 1}) over the N-tuple of i.

        Returns:
            Exact integer vector of length 2^N
        """
        N = int(N)
        if N < 1:
            raise DomainError(f"N must be >= 1, got {N}")
        K = 2 ** N
        i0 = np.arange(K, dtype=np.int64)
        ones = np.zeros(K, dtype=np.int64)
        for bit in range(N):
            ones += (i0 >> bit) & 1
        xi = np.where(i0 < K // 2, 1, -1)
        return xi + (2 * ones - N)

    def power_apply(self, xi: np.ndarray, m: int, M: int) -> np.ndarray:
        """
        (Pi_N^M xi)(i) on a canonical partition without forming Pi^M.

        Row i of Pi^M spreads mass m^-M over the block of m^M consecutive
        symbols starting at m^M * i (mod K), so Pi^M xi is the vector of block
        means repeated m^M times.
        """
        K = xi.shape[0]
        q = int(m) ** int(M)
        if q >= K:
            mean = xi.sum() / K
            return np.array([mean] * K, dtype=xi.dtype) if xi.dtype == object else np.full(K, mean)
        means = xi.reshape(K // q, q).sum(axis=1) / q
        return np.tile(means, q)

    def transition_power(self, spec: SubshiftSpec, M: int) -> np.ndarray:
        """
        Dense Pi_N^M of a canonical partition from the closed form.

        Row i (0-based) has entries m^-M on the columns (m^M i + d) mod K,
        d < m^M, and zeros elsewhere.
        """
        if not spec.canonical:
            raise ValidationError("closed-form powers exist for canonical partitions only")
        K, m, M = spec.K, spec.m, int(M)
        if K > self.dense_max:
            raise SizeError(f"dense power with K={K} exceeds limit {self.dense_max}", K=K)
        q = m ** M
        width = min(q, K)
        rational = spec.mode == 'rational'
        value = Fraction(1, width) if rational else 1.0 / width
        out = np.zeros((K, K), dtype=object if rational else float)
        if rational:
            out[:] = Fraction(0)
        for i in range(K):
            cols = (q * i + np.arange(width)) % K
            out[i, cols] = value
        return out

    # ------------------------------------------------------------------
    # solvers
    # ------------------------------------------------------------------

    def solve_poisson_canonical(self, xi, m: int, N: int, mode: Optional[str] = None) -> PoissonData:
        """
        Delta_N = -(Pi + ... + Pi^(N-1)) xi_N on the canonical partition.

        Valid because Pi^N xi_N = 0 for centered xi_N; each power costs O(K)
        through block means.

        Args:
            xi: Centered vector of length m^N (or DiscreteDisplacement)
            m: Base multiplier
            N: Partition level
            mode: 'rational' or 'float'

        Returns:
            PoissonData

        Raises:
            ValidationError: wrong length or |mean xi| > centering tolerance
        """
        m, N = int(m), int(N)
        spec = self.symbolic.build_subshift(m, N, mode)
        K = spec.K
        rational = spec.mode == 'rational'
        xi = self._vector(xi, rational)
        if xi.shape != (K,):
            raise ValidationError(f"xi has length {xi.shape[0]}, expected {K}")
        mean = xi.sum() / K
        if abs(float(mean)) > self.centering:
            raise ValidationError(f"xi is not centered (mean {float(mean):.3e})", mean=float(mean))
        xi = xi - mean

        cache_key = None
        if not rational:
            cache_key = get_poisson_cache_key(m, N, xi)
            cached = cache_get(cache_key)
            if cached is not None:
                delta = np.asarray(cached, dtype=float)
                return self._package(xi, delta, spec.stationary, *spec.tables, spec.mode, 'canonical-cached')

        delta = np.zeros_like(xi)
        for M in range(1, N):
            delta = delta - self.power_apply(xi, m, M)

        if cache_key:
            cache_set(cache_key, [float(v) for v in delta])
        data = self._package(xi, delta, spec.stationary, *spec.tables, spec.mode, 'canonical')
        current_app.logger.info(
            f"Canonical Poisson solve m={m} N={N} ({spec.mode}): residual={data.residual:.2e}, "
            f"D={float(data.bounds.D):.4g}, G={float(data.bounds.G):.4g}"
        )
        return data

    def _chain(self, chain, mode: Optional[str]) -> SubshiftSpec:
        if isinstance(chain, SubshiftSpec):
            return chain
        return self.symbolic.explicit_subshift(chain, mode)

    def solve_poisson_general(self, chain: Union[SubshiftSpec, Sequence], xi,
                              mode: Optional[str] = None) -> PoissonData:
        """
        Solve (Pi - I) Delta = Pi xi - P_nu xi on any primitive chain.

        The last equation (redundant, since p^T (Pi - I) = 0) is replaced by the
        normalization p^T Delta = 0, which makes the system nonsingular.

        Args:
            chain: SubshiftSpec or explicit stochastic matrix
            xi: Displacement vector of length K
            mode: 'rational' (exact elimination, small K) or 'float' (sparse LU)

        Returns:
            PoissonData with a 1-norm condition estimate of the bordered system

        Raises:
            ConvergenceError: reducible chain or residual above tolerance
        """
        spec = self._chain(chain, mode)
        K = spec.K
        successors, probabilities = spec.tables
        warnings = []
        rational = (mode or spec.mode) == 'rational' and spec.mode == 'rational'
        if rational and K > self.rational_solve_max:
            msg = f"K={K} above exact-solve limit {self.rational_solve_max}; solving in float"
            current_app.logger.warning(msg)
            warnings.append(msg)
            rational = False

        xi = self._vector(xi, rational)
        if xi.shape != (K,):
            raise ValidationError(f"xi has length {xi.shape[0]}, expected {K}")
        stationary = spec.stationary if rational else exact.as_float(spec.stationary)
        if not rational:
            probabilities = exact.as_float(probabilities)
        mean = np.dot(stationary, xi)
        rhs = self._apply(probabilities, successors, xi) - mean
        rhs[-1] = Fraction(0) if rational else 0.0

        if rational:
            A = spec.dense() - exact.identity(K)
            A[-1, :] = stationary
            delta = exact.solve(A, rhs)
            condition = None
        else:
            rows = np.repeat(np.arange(K), successors.shape[1])
            P = sparse.coo_matrix((probabilities.ravel(), (rows, successors.ravel())), shape=(K, K)).tocsr()
            A = (P - sparse.identity(K, format='csr')).tolil()
            A[K - 1, :] = stationary
            A = A.tocsc()
            try:
                lu = splu(A)
            except RuntimeError as e:
                raise ConvergenceError(f"Poisson system is singular: {e}") from e
            delta = lu.solve(np.asarray(rhs, dtype=float))
            inverse = LinearOperator(
                (K, K), matvec=lu.solve, rmatvec=lambda v: lu.solve(v, trans='T'), dtype=float
            )
            condition = float(onenormest(A) * onenormest(inverse)) if K > 1 else 1.0

        delta = delta - np.dot(stationary, delta)
        data = self._package(xi, delta, stationary, successors, probabilities,
                             'rational' if rational else 'float', 'general', condition, warnings)
        current_app.logger.info(
            f"General Poisson solve K={K} ({data.mode}): residual={data.residual:.2e}, condition={condition}"
        )
        return data

    # ------------------------------------------------------------------
    # diagnostics
    # ------------------------------------------------------------------

    @staticmethod
    def row_spread(data: PoissonData) -> np.ndarray:
        """max_{j1, j2} |zeta(i, j1) - zeta(i, j2)| over admissible successors of each state."""
        admissible = exact.as_float(data.probabilities) > 0
        zeta = exact.as_float(data.zeta)
        high = np.where(admissible, zeta, -np.inf).max(axis=1)
        low = np.where(admissible, zeta, np.inf).min(axis=1)
        return high - low

    @staticmethod
    def neighbour_gaps(data: PoissonData) -> float:
        """min_i Delta(last successor of i) - Delta(first successor of i)."""
        delta = exact.as_float(data.delta)
        return float((delta[data.successors[:, -1]] - delta[data.successors[:, 0]]).min())

    def growth_diagnostics(self, xi: Union[DisplacementSpec, str], m: int, N_range: Sequence[int],
                           mode: str = 'float') -> GrowthReport:
        """
        Bound quantities for a displacement across refinement levels.

        Args:
            xi: DisplacementSpec or 'srw' (symmetric walk, m = 2)
            m: Base multiplier
            N_range: Levels to tabulate (4..12 for the linear fit)
            mode: Arithmetic mode of the solves

        Returns:
            GrowthReport with columns N, K, sup_delta, D, Vminus, Vplus, G,
            min_row_spread, min_gap and an OLS fit of sup |Delta_N| against N
        """
        skew = SkewProductService()
        rows = []
        for N in N_range:
            if isinstance(xi, str):
                if xi != 'srw' or int(m) != 2:
                    raise ValidationError(f"unknown displacement shorthand {xi!r} for m={m}")
                vector = self.srw_displacement(N, mode)
            else:
                vector = skew.discretize_displacement(xi, m, N, mode)
            data = self.solve_poisson_canonical(vector, m, N, mode)
            b = data.bounds.to_dict()
            rows.append({
                'N': int(N),
                'K': data.K,
                'sup_delta': float(np.abs(exact.as_float(data.delta)).max()),
                'D': b['D'],
                'Vminus': b['Vminus'],
                'Vplus': b['Vplus'],
                'G': b['G'],
                'min_row_spread': float(self.row_spread(data).min()),
                'min_gap': self.neighbour_gaps(data)
            })
        table = pd.DataFrame(rows)

        slope = intercept = fit_residual = float('nan')
        if len(table) >= 2:
            fit = sm.OLS(table['sup_delta'].to_numpy(), sm.add_constant(table['N'].to_numpy(dtype=float))).fit()
            intercept, slope = (float(v) for v in fit.params)
            fit_residual = float(math.sqrt(fit.ssr / len(table)))

        observed = None
        positive = (table['Vminus'] > self.centering).to_numpy() if len(table) else np.array([])
        for k in range(len(positive)):
            if positive[k:].all():
                observed = int(table['N'].iloc[k])
                break

        return GrowthReport(table, slope, intercept, fit_residual, observed)

    def _martingale_chunk(self, spec: SubshiftSpec, zeta: np.ndarray, size: int, horizon: int,
                          seed: int, index: int, initial: Optional[int]):
        rng = derive_rng(seed, 'martingale', index)
        stepper = MarkovStepper(spec)
        K = spec.K
        count = np.zeros(K)
        total = np.zeros(K)
        square = np.zeros(K)
        states = stepper.initial(rng, size, initial)
        for _ in range(horizon):
            nxt, slots = stepper.step(states, rng)
            inc = zeta[states, slots]
            count += np.bincount(states, minlength=K)
            total += np.bincount(states, weights=inc, minlength=K)
            square += np.bincount(states, weights=inc * inc, minlength=K)
            states = nxt
        return count, total, square

    def martingale_check(self, chain: Union[SubshiftSpec, Sequence], xi, delta, trials: int, horizon: int,
                         seed: int, initial: Optional[int] = None) -> MartingaleReport:
        """
        Empirical E(u_{n+1} - u_n | omega_n) of the corrected walk per state.

        Increments are zeta built from the given Delta, so a wrong Delta
        shows up as a conditional mean far from zero.

        Returns:
            MartingaleReport with the worst |z| over states visited at least twice
        """
        spec = self._chain(chain, 'float')
        successors = spec.successors
        xi = np.asarray(exact.as_float(xi), dtype=float)
        delta = np.asarray(exact.as_float(delta), dtype=float)
        mean = float(np.dot(exact.as_float(spec.stationary), xi))
        zeta = self.compute_zeta(xi, delta, successors, mean)

        jobs = [
            (spec, zeta, size, int(horizon), seed, c, initial)
            for c, size in enumerate(chunk_sizes(int(trials), self.chunk))
        ]
        parts = run_ordered(self._martingale_chunk, jobs, self.threads)
        count = sum(p[0] for p in parts)
        total = sum(p[1] for p in parts)
        square = sum(p[2] for p in parts)

        K = spec.K
        z = np.zeros(K)
        mean_inc = np.divide(total, count, out=np.zeros(K), where=count > 0)
        var = np.divide(square - count * mean_inc ** 2, count - 1, out=np.zeros(K), where=count > 1)
        var = np.maximum(var, 0.0)
        std = np.sqrt(var)
        # rounding floor: increments of single-successor states are constant
        floor = 1e-12 * max(1.0, float(np.abs(zeta).max()))
        for i in range(K):
            if count[i] < 2:
                continue
            if std[i] > floor:
                z[i] = mean_inc[i] / (std[i] / math.sqrt(count[i]))
            elif abs(mean_inc[i]) > floor:
                z[i] = math.inf
        worst = int(np.argmax(np.abs(z)))
        table = pd.DataFrame({
            'state': np.arange(1, K + 1), 'count': count.astype(np.int64),
            'mean': mean_inc, 'std': std, 'z': z
        })
        return MartingaleReport(float(abs(z[worst])), worst + 1, int(trials), int(horizon), table)
