"""
Subshifts of finite type from Markov partitions of x -> m*x mod 1.

Symbols are 1-based in every public field (1..K); internal tables are
0-based. Probabilities are Fractions in rational mode and floats otherwise.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np

from app.utils.errors import SizeError, ValidationError
from app.utils.exact import as_float


@dataclass(frozen=True, eq=False)
class SubshiftSpec:
    """
    Symbol space with its transition structure and stationary vector.

    Canonical specs (matrix is None) carry the Markov partition of E_m at
    level N: K = m**N symbols, successors of symbol i0 are (m*i0 + d) mod K
    for d < m, each with probability 1/m. Explicit specs carry a dense
    stochastic matrix and its stationary vector.
    """

    m: int
    N: int
    mode: str = 'rational'
    matrix: Optional[np.ndarray] = None
    explicit_stationary: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ('rational', 'float'):
            raise ValidationError(f"unknown arithmetic mode {self.mode!r}")
        if self.matrix is None:
            if int(self.m) < 2 or int(self.N) < 1:
                raise ValidationError(f"need m >= 2 and N >= 1, got m={self.m}, N={self.N}")
        else:
            if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
                raise ValidationError(f"transition matrix must be square, got {self.matrix.shape}")

    @property
    def canonical(self) -> bool:
        return self.matrix is None

    @property
    def K(self) -> int:
        if self.matrix is None:
            return int(self.m) ** int(self.N)
        return int(self.matrix.shape[0])

    @property
    def width(self) -> int:
        """Maximum number of successors of a symbol."""
        if self.matrix is None:
            return int(self.m)
        return int(max(1, (as_float(self.matrix) > 0).sum(axis=1).max()))

    @cached_property
    def stationary(self) -> np.ndarray:
        if self.explicit_stationary is not None:
            return self.explicit_stationary
        K = self.K
        if self.mode == 'rational':
            return np.array([Fraction(1, K)] * K, dtype=object)
        return np.full(K, 1.0 / K)

    @cached_property
    def tables(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Successor and probability tables of shape (K, width).

        Rows of explicit chains with fewer successors are padded with
        probability 0 and a repeated successor.
        """
        K = self.K
        if self.matrix is None:
            i0 = np.arange(K, dtype=np.int64)[:, None]
            successors = (i0 * self.m + np.arange(self.m, dtype=np.int64)[None, :]) % K
            if self.mode == 'rational':
                probabilities = np.full((K, self.m), Fraction(1, self.m), dtype=object)
            else:
                probabilities = np.full((K, self.m), 1.0 / self.m)
            return successors, probabilities

        w = self.width
        successors = np.zeros((K, w), dtype=np.int64)
        probabilities = np.zeros((K, w), dtype=object if self.mode == 'rational' else float)
        if self.mode == 'rational':
            probabilities[:] = Fraction(0)
        positive = as_float(self.matrix) > 0
        for i in range(K):
            cols = np.flatnonzero(positive[i])
            successors[i, :cols.size] = cols
            successors[i, cols.size:] = cols[-1]
            probabilities[i, :cols.size] = self.matrix[i, cols]
        return successors, probabilities

    @property
    def successors(self) -> np.ndarray:
        return self.tables[0]

    @property
    def probabilities(self) -> np.ndarray:
        return self.tables[1]

    def dense(self, limit: Optional[int] = None) -> np.ndarray:
        """Dense K x K transition matrix (refused above `limit` symbols)."""
        if self.matrix is not None:
            return self.matrix
        K = self.K
        if limit is not None and K > limit:
            raise SizeError(f"dense matrix with K={K} exceeds limit {limit}", K=K)
        dtype = object if self.mode == 'rational' else float
        out = np.zeros((K, K), dtype=dtype)
        if dtype is object:
            out[:] = Fraction(0)
        rows = np.repeat(np.arange(K), self.m)
        out[rows, self.successors.ravel()] = self.probabilities.ravel()
        return out

    def admissible_pairs(self, prev: np.ndarray, nxt: np.ndarray) -> np.ndarray:
        """Vectorized admissibility of 0-based pairs."""
        prev = np.asarray(prev, dtype=np.int64)
        nxt = np.asarray(nxt, dtype=np.int64)
        if self.matrix is None:
            return (nxt // self.m) == (prev % (self.K // self.m))
        return as_float(self.matrix)[prev, nxt] > 0

    def is_admissible(self, i: int, j: int) -> bool:
        """Admissibility of the 1-based pair (i, j)."""
        K = self.K
        if not (1 <= i <= K and 1 <= j <= K):
            return False
        return bool(self.admissible_pairs(np.array([i - 1]), np.array([j - 1]))[0])

    def transition_prob(self, i: int, j: int):
        """Transition probability of the 1-based pair (i, j)."""
        if not self.is_admissible(i, j):
            return Fraction(0) if self.mode == 'rational' else 0.0
        if self.matrix is not None:
            return self.matrix[i - 1, j - 1]
        return Fraction(1, self.m) if self.mode == 'rational' else 1.0 / self.m

    def to_dict(self) -> Dict:
        if self.matrix is None:
            chain = 'canonical'
        else:
            chain = {'matrix': [[str(v) for v in row] for row in self.matrix.tolist()]}
        return {'m': int(self.m), 'N': int(self.N), 'mode': chain, 'arithmetic': self.mode}

    def __repr__(self):
        kind = 'canonical' if self.canonical else 'explicit'
        return f'<SubshiftSpec {kind} m={self.m} N={self.N} K={self.K} ({self.mode})>'


@dataclass(frozen=True, eq=False)
class SymbolPath:
    """Finite admissible path of 1-based symbols."""

    spec: SubshiftSpec
    symbols: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=np.int64).reshape(-1)
        object.__setattr__(self, 'symbols', symbols)
        if symbols.size and (symbols.min() < 1 or symbols.max() > self.spec.K):
            raise ValidationError(f"symbols must lie in 1..{self.spec.K}")
        if symbols.size > 1:
            ok = self.spec.admissible_pairs(symbols[:-1] - 1, symbols[1:] - 1)
            if not ok.all():
                k = int(np.flatnonzero(~ok)[0])
                raise ValidationError(
                    f"inadmissible transition {symbols[k]} -> {symbols[k + 1]} at position {k}",
                    position=k
                )

    def __len__(self):
        return int(self.symbols.size)

    def head(self, length: int) -> 'SymbolPath':
        return SymbolPath(self.spec, self.symbols[:length], self.seed)

    def shift(self, steps: int = 1) -> 'SymbolPath':
        """Left shift sigma^steps."""
        return SymbolPath(self.spec, self.symbols[steps:], self.seed)

    def to_text(self) -> str:
        return ' '.join(str(int(s)) for s in self.symbols)

    def __repr__(self):
        return f'<SymbolPath K={self.spec.K} len={len(self)}>'


@dataclass(frozen=True, eq=False)
class CylinderWord:
    """
    Cylinder {omega : omega_{offset+k} = letters[k]}.

    Admissibility is computed on construction; inadmissible words are kept
    (their measure is 0).
    """

    spec: SubshiftSpec
    letters: Tuple[int, ...]
    offset: int = 0
    admissible: bool = field(init=False, default=True)

    def __post_init__(self):
        letters = tuple(int(s) for s in self.letters)
        if not letters:
            raise ValidationError("cylinder word must be nonempty")
        object.__setattr__(self, 'letters', letters)
        ok = all(1 <= s <= self.spec.K for s in letters) and all(
            self.spec.is_admissible(a, b) for a, b in zip(letters[:-1], letters[1:])
        )
        object.__setattr__(self, 'admissible', ok)

    def __len__(self):
        return len(self.letters)


@dataclass(frozen=True)
class DecodedInterval:
    """Closed interval [lower, upper] of points whose coding starts with a word."""

    lower: Fraction
    upper: Fraction
    digits: int

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower

    @property
    def midpoint(self) -> Fraction:
        return (self.lower + self.upper) / 2

    def contains(self, y) -> bool:
        return self.lower <= Fraction(y) <= self.upper

    def to_dict(self) -> Dict:
        return {
            'lower': str(self.lower),
            'upper': str(self.upper),
            'midpoint': float(self.midpoint),
            'width': float(self.width),
            'digits': self.digits
        }
