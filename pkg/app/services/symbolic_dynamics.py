"""
Symbolic dynamics service: subshifts of finite type from Markov partitions of
E_m, their Markov measures, cylinder arithmetic, coding maps between [0, 1]
and sequence space, and seeded path sampling.
"""
import math
from fractions import Fraction
from typing import Iterator, List, Optional, Sequence, Union

import numpy as np
from flask import current_app
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from app.models.subshift import CylinderWord, DecodedInterval, SubshiftSpec, SymbolPath
from app.utils.errors import ConvergenceError, DomainError, SizeError, UnsupportedError, ValidationError
from app.utils.exact import as_float, fraction_array, is_exact, to_fraction
from app.utils.seeding import derive_rng


def digits_to_symbols(digits: np.ndarray, m: int, N: int) -> np.ndarray:
    """
    Sliding N-digit windows of a base-m digit stream as 1-based symbols.

    Args:
        digits: Digits along the last axis
        m: Base
        N: Window length

    Returns:
        Symbols with last axis shortened by N - 1
    """
    digits = np.asarray(digits, dtype=np.int64)
    length = digits.shape[-1] - N + 1
    if length < 1:
        raise ValidationError(f"need at least {N} digits, got {digits.shape[-1]}")
    value = np.zeros(digits.shape[:-1] + (length,), dtype=np.int64)
    for t in range(N):
        value = value * m + digits[..., t:t + length]
    return value + 1


def symbol_digits(symbol0: int, m: int, N: int) -> List[int]:
    """Base-m digits (most significant first) of a 0-based symbol."""
    out = []
    for _ in range(N):
        symbol0, d = divmod(symbol0, m)
        out.append(d)
    return out[::-1]


class MarkovStepper:
    """Vectorized one-step sampler over arrays of 0-based states."""

    def __init__(self, spec: SubshiftSpec):
        self.spec = spec
        self.K = spec.K
        self.m = spec.m
        self.uniform = spec.canonical
        if not self.uniform:
            successors, probabilities = spec.tables
            p = as_float(probabilities)
            self.successors = successors
            self.cumulative = np.cumsum(p, axis=1)
            self.support = (p > 0).sum(axis=1)
            self.stationary_cdf = np.cumsum(as_float(spec.stationary))

    def initial(self, rng: np.random.Generator, size: int, previous: Optional[int] = None):
        """
        Draw omega_0 for `size` independent paths.

        Args:
            rng: Generator
            size: Number of paths
            previous: Optional 1-based omega_{-1}; omega_0 is then drawn from its row

        Returns:
            0-based states
        """
        if previous is not None:
            if not 1 <= previous <= self.K:
                raise ValidationError(f"initial symbol {previous} outside 1..{self.K}")
            states, _ = self.step(np.full(size, previous - 1, dtype=np.int64), rng)
            return states
        if self.uniform:
            return rng.integers(0, self.K, size=size, dtype=np.int64)
        u = rng.random(size)
        idx = np.searchsorted(self.stationary_cdf, u, side='right')
        return np.minimum(idx, self.K - 1).astype(np.int64)

    def step(self, states: np.ndarray, rng: np.random.Generator):
        """
        Advance every state by one transition.

        Returns:
            (next states, successor slot used)
        """
        size = states.shape[0]
        if self.uniform:
            slots = rng.integers(0, self.m, size=size, dtype=np.int64)
            return (states * self.m + slots) % self.K, slots
        u = rng.random(size)
        slots = (u[:, None] >= self.cumulative[states]).sum(axis=1)
        slots = np.minimum(slots, self.support[states] - 1)
        return self.successors[states, slots], slots


class SymbolicDynamicsService:
    """
    Service for subshifts of finite type:
    - Canonical Markov partitions of E_m and explicit primitive chains
    - Stationary vectors (GTH elimination, exact in rational mode)
    - Coding maps between points of [0, 1] and symbol paths
    - Block recoding between refinement levels
    - Seeded path sampling and cylinder measures
    """

    def __init__(self):
        self.mode = current_app.config['ARITHMETIC_MODE']
        self.max_symbols = current_app.config['SUBSHIFT_MAX_SYMBOLS']
        self.rational_max = current_app.config['RATIONAL_MAX_SYMBOLS']
        self.tolerance = current_app.config['CENTERING_TOLERANCE']

    def _mode(self, mode: Optional[str]) -> str:
        mode = mode or self.mode
        if mode not in ('rational', 'float'):
            raise ValidationError(f"unknown arithmetic mode {mode!r}")
        return mode

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    def build_subshift(self, m: int, N: int, mode: Optional[str] = None) -> SubshiftSpec:
        """
        Canonical subshift of the Markov partition of E_m at level N.

        Args:
            m: Base multiplier (>= 2)
            N: Partition refinement level (>= 1)
            mode: 'rational' or 'float' (config default)

        Returns:
            SubshiftSpec with transition probabilities 1/m and uniform stationary vector
        """
        m, N = int(m), int(N)
        if m < 2 or N < 1:
            raise DomainError(f"need m >= 2 and N >= 1, got m={m}, N={N}")
        if N * math.log2(m) > 62 or m ** N > self.max_symbols:
            raise SizeError(f"m^N = {m}^{N} exceeds the symbol limit {self.max_symbols}", m=m, N=N)
        mode = self._mode(mode)
        if mode == 'rational' and m ** N > self.rational_max:
            current_app.logger.warning(
                f"K={m ** N} above rational limit {self.rational_max}; using float arithmetic"
            )
            mode = 'float'
        return SubshiftSpec(m=m, N=N, mode=mode)

    def explicit_subshift(self, matrix, mode: Optional[str] = None) -> SubshiftSpec:
        """
        Subshift of an explicit primitive stochastic matrix.

        Args:
            matrix: K x K row-stochastic matrix (numbers or strings like '1/2')
            mode: Arithmetic mode

        Returns:
            SubshiftSpec carrying the matrix and its stationary vector
        """
        mode = self._mode(mode)
        P = fraction_array(matrix) if mode == 'rational' else np.asarray(as_float(matrix), dtype=float)
        stationary = self.stationary_distribution(P)
        width = int((as_float(P) > 0).sum(axis=1).max())
        return SubshiftSpec(m=width, N=1, mode=mode, matrix=P, explicit_stationary=stationary)

    # ------------------------------------------------------------------
    # stationary distribution and primitivity
    # ------------------------------------------------------------------

    def validate_stochastic(self, P: np.ndarray) -> None:
        """Raise ValidationError unless P is square, nonnegative and row-stochastic."""
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ValidationError(f"transition matrix must be square, got shape {P.shape}")
        if (as_float(P) < 0).any():
            raise ValidationError("transition matrix has negative entries")
        if is_exact(P):
            sums = P.sum(axis=1)
            bad = [i for i, s in enumerate(sums) if s != 1]
        else:
            sums = P.sum(axis=1)
            bad = list(np.flatnonzero(np.abs(sums - 1.0) > self.tolerance))
        if bad:
            raise ValidationError(f"rows {bad} do not sum to 1", rows=bad)

    def period(self, P: np.ndarray) -> int:
        """Period of an irreducible chain (1 means aperiodic)."""
        graph = csr_matrix(as_float(P) > 0)
        order, predecessors = breadth_first_order(graph, 0, directed=True, return_predecessors=True)
        level = np.full(P.shape[0], -1, dtype=np.int64)
        level[0] = 0
        for node in order[1:]:
            level[node] = level[predecessors[node]] + 1
        rows, cols = graph.nonzero()
        diffs = np.abs(level[rows] + 1 - level[cols])
        return int(np.gcd.reduce(diffs)) if diffs.size else 0

    def primitivity_index(self, P) -> int:
        """
        Smallest n with P^n > 0 entrywise.

        Canonical partitions need exactly N steps. Explicit matrices are
        searched up to the Wielandt bound (K - 1)^2 + 1.

        Raises:
            ConvergenceError: if no power is positive
        """
        if isinstance(P, SubshiftSpec):
            if P.canonical:
                return P.N
            P = P.matrix
        B = (as_float(P) > 0).astype(np.int64)
        K = B.shape[0]
        power = B.copy()
        for n in range(1, (K - 1) ** 2 + 2):
            if power.all():
                return n
            power = (power @ B > 0).astype(np.int64)
        raise ConvergenceError("chain is not primitive", bound=(K - 1) ** 2 + 1)

    def stationary_distribution(self, P) -> np.ndarray:
        """
        Stationary vector of a primitive stochastic matrix.

        Uses Grassmann-Taksar-Heyman elimination, which only adds and divides
        nonnegative quantities; on Fraction arrays the result is exact.

        Args:
            P: Row-stochastic matrix (object array of Fractions or floats)

        Returns:
            Probability vector p with p^T P = p^T

        Raises:
            ValidationError: non-stochastic rows
            ConvergenceError: reducible or periodic chain, residual too large
        """
        if isinstance(P, SubshiftSpec):
            return P.stationary
        P = np.asarray(P) if is_exact(np.asarray(P)) else np.asarray(as_float(P), dtype=float)
        self.validate_stochastic(P)
        K = P.shape[0]

        n_comp, _ = connected_components(csr_matrix(as_float(P) > 0), directed=True, connection='strong')
        if n_comp > 1:
            raise ConvergenceError(f"chain is reducible ({n_comp} communicating classes)", classes=n_comp)
        period = self.period(P)
        if period > 1:
            raise ConvergenceError(f"chain is irreducible but periodic with period {period}", period=period)

        A = P.copy()
        for k in range(K - 1, 0, -1):
            s = A[k, :k].sum()
            if s == 0:
                raise ConvergenceError(f"GTH elimination broke down at state {k + 1}")
            A[:k, k] = A[:k, k] / s
            A[:k, :k] = A[:k, :k] + np.outer(A[:k, k], A[k, :k])

        exact = is_exact(P)
        pi = np.empty(K, dtype=object if exact else float)
        pi[0] = Fraction(1) if exact else 1.0
        for k in range(1, K):
            pi[k] = np.dot(pi[:k], A[:k, k])
        pi = pi / pi.sum()

        residual = np.abs(as_float(pi @ P - pi)).max() if K else 0.0
        if exact and any(v != 0 for v in (pi @ P - pi)):
            raise ConvergenceError("exact stationary residual is nonzero")
        if not exact and residual > self.tolerance:
            raise ConvergenceError(f"stationary residual {residual:.3e} above tolerance", residual=residual)
        return pi

    # ------------------------------------------------------------------
    # coding maps
    # ------------------------------------------------------------------

    def encode_point(self, y, m: int, N: int, length: int) -> SymbolPath:
        """
        Itinerary of y under E_m through the level-N Markov partition.

        omega_i = j iff E_m^i(y) lies in [(j-1)/K, j/K). The orbit is computed
        in exact rational arithmetic (floats are converted to their exact binary
        value), so long orbits keep every digit. y = 1 is the left limit and
        encodes to (K, K, ...).

        Args:
            y: Point of [0, 1] (number, Fraction or string like '5/8')
            m: Base multiplier
            N: Partition level
            length: Number of symbols

        Returns:
            Canonical SymbolPath
        """
        y = to_fraction(y)
        if y < 0 or y > 1:
            raise DomainError(f"y = {y} outside [0, 1)")
        spec = self.build_subshift(m, N)
        K = spec.K
        if y == 1:
            return SymbolPath(spec, np.full(int(length), K, dtype=np.int64))

        num, den = y.numerator, y.denominator
        out = np.empty(int(length), dtype=np.int64)
        for i in range(int(length)):
            out[i] = (num * K) // den + 1
            num = (num * m) % den
        return SymbolPath(spec, out)

    def path_digits(self, path: SymbolPath) -> np.ndarray:
        """
        Base-m digit stream of a canonical path.

        A canonical path is a sliding N-digit window: the first symbol gives N
        digits and each later symbol contributes its last digit.
        """
        spec = path.spec
        if not spec.canonical:
            raise UnsupportedError("digit streams exist only for canonical partitions")
        if len(path) == 0:
            return np.zeros(0, dtype=np.int64)
        head = symbol_digits(int(path.symbols[0]) - 1, spec.m, spec.N)
        tail = (path.symbols[1:] - 1) % spec.m
        return np.concatenate([np.asarray(head, dtype=np.int64), tail.astype(np.int64)])

    def decode_sequence(self, omega: Union[SymbolPath, Sequence[int]], m: Optional[int] = None,
                        N: Optional[int] = None, length: Optional[int] = None) -> DecodedInterval:
        """
        Interval of points whose itinerary starts with omega.

        A word of L symbols at level N fixes N + L - 1 base-m digits, so the
        interval has width m^-(N+L-1).

        Args:
            omega: SymbolPath or raw 1-based symbols (then m and N are required)
            m: Base multiplier for raw input
            N: Partition level for raw input
            length: Truncation length L (defaults to the whole path)

        Returns:
            DecodedInterval with exact endpoints
        """
        if not isinstance(omega, SymbolPath):
            if m is None or N is None:
                raise ValidationError("raw symbol sequences need m and N")
            omega = SymbolPath(SubshiftSpec(m=int(m), N=int(N)), np.asarray(list(omega), dtype=np.int64))
        if length is not None:
            omega = omega.head(int(length))
        if len(omega) == 0:
            raise ValidationError("cannot decode an empty word")

        spec = omega.spec
        digits = self.path_digits(omega)
        value = 0
        for d in digits.tolist():
            value = value * spec.m + int(d)
        scale = spec.m ** len(digits)
        return DecodedInterval(Fraction(value, scale), Fraction(value + 1, scale), len(digits))

    def recode(self, path: SymbolPath, N1: int) -> SymbolPath:
        """
        Block recoding between canonical levels N0 -> N1 (same m).

        Upward, symbol k of the output is the lexicographic index of the block
        (omega_k, ..., omega_{k+N1-N0}); downward, every symbol is split into
        its leading N1 digits and the last symbol also yields its trailing
        windows, so N0 -> N1 -> N0 restores the input exactly.
        """
        spec = path.spec
        if not spec.canonical:
            raise UnsupportedError("recoding is defined for canonical partitions only")
        N0, N1 = spec.N, int(N1)
        if N1 < 1:
            raise DomainError(f"target level must be >= 1, got {N1}")
        if N1 == N0:
            return path
        if N1 > N0 and len(path) < N1 - N0 + 1:
            raise ValidationError(
                f"path of length {len(path)} too short for {N1 - N0 + 1}-blocks", length=len(path)
            )
        target = self.build_subshift(spec.m, N1, spec.mode)
        symbols = digits_to_symbols(self.path_digits(path), spec.m, N1)
        return SymbolPath(target, symbols, path.seed)

    # ------------------------------------------------------------------
    # sampling and measures
    # ------------------------------------------------------------------

    def sample_path(self, spec: SubshiftSpec, seed: int, length: int,
                    initial: Optional[int] = None, index: int = 0) -> SymbolPath:
        """
        Seeded path of the Markov measure.

        Args:
            spec: Subshift
            seed: Master seed (64-bit)
            length: Path length (>= 1)
            initial: Optional 1-based omega_{-1} for a conditional start
            index: Path index inside the seed's stream

        Returns:
            SymbolPath with omega_0 from the stationary vector (or the row of `initial`)
        """
        length = int(length)
        if length < 1:
            raise DomainError(f"length must be >= 1, got {length}")
        rng = derive_rng(seed, 'path', index)

        if spec.canonical:
            m, N = spec.m, spec.N
            fresh = rng.integers(0, m, size=length + N - 1, dtype=np.int64)
            if initial is not None:
                if not 1 <= initial <= spec.K:
                    raise ValidationError(f"initial symbol {initial} outside 1..{spec.K}")
                carried = np.asarray(symbol_digits(initial - 1, m, N)[1:], dtype=np.int64)
                digits = np.concatenate([carried, fresh[N - 1:]])
            else:
                digits = fresh
            return SymbolPath(spec, digits_to_symbols(digits, m, N), seed)

        stepper = MarkovStepper(spec)
        out = np.empty(length, dtype=np.int64)
        state = stepper.initial(rng, 1, initial)
        out[0] = state[0]
        for k in range(1, length):
            state, _ = stepper.step(state, rng)
            out[k] = state[0]
        return SymbolPath(spec, out + 1, seed)

    def stream_path(self, spec: SubshiftSpec, seed: int, chunk: int,
                    initial: Optional[int] = None) -> Iterator[SymbolPath]:
        """
        Lazy, unbounded path delivered in chunks.

        Chunk k is drawn from stream index k and starts from the row of the
        previous chunk's last symbol, so the concatenation is admissible and
        identical for identical (seed, spec, chunk).
        """
        previous = initial
        index = 0
        while True:
            part = self.sample_path(spec, seed, chunk, initial=previous, index=index)
            previous = int(part.symbols[-1])
            index += 1
            yield part

    def cylinder_measure(self, spec: SubshiftSpec, word: Union[CylinderWord, Sequence[int]]):
        """
        Markov measure p_{w_0} * prod pi_{w_k w_{k+1}} of a cylinder.

        Returns:
            Fraction in rational mode, float otherwise; 0 for inadmissible words
        """
        if not isinstance(word, CylinderWord):
            word = CylinderWord(spec, tuple(word))
        zero = Fraction(0) if spec.mode == 'rational' else 0.0
        if not word.admissible:
            return zero
        letters = word.letters
        measure = spec.stationary[letters[0] - 1]
        for a, b in zip(letters[:-1], letters[1:]):
            measure = measure * spec.transition_prob(a, b)
        return measure
