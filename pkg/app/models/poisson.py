"""
Poisson-equation results for Markov random walks.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from app.utils.exact import as_float


@dataclass(frozen=True)
class PoissonBounds:
    """
    Bound quadruple of the centered increments.

    D: max |zeta| over admissible pairs
    Vminus / Vplus: min / max over states of sum_j pi_ij zeta(i, j)^2
    G: max_i Delta(i) - min_i Delta(i)
    """

    D: object
    Vminus: object
    Vplus: object
    G: object

    def to_dict(self) -> Dict:
        return {k: float(v) for k, v in self.__dict__.items()}


@dataclass(frozen=True, eq=False)
class PoissonData:
    """
    Solution of (Pi - I) Delta = Pi xi - P_nu xi with P_nu Delta = 0.

    Tables are stored per successor slot: successors[i, s] is the s-th
    successor of state i (0-based), probabilities[i, s] its probability and
    zeta[i, s] the centered increment zeta(i, successors[i, s]). Padding
    slots of explicit chains carry probability 0.
    """

    xi: np.ndarray
    delta: np.ndarray
    stationary: np.ndarray
    successors: np.ndarray
    probabilities: np.ndarray
    zeta: np.ndarray
    bounds: PoissonBounds
    residual: float
    mode: str
    solver: str
    condition: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def K(self) -> int:
        return int(self.delta.shape[0])

    @property
    def xi_mean(self):
        return np.dot(self.stationary, self.xi)

    def zeta_pair(self, i: int, j: int):
        """zeta for the 1-based admissible pair (i, j)."""
        slots = np.flatnonzero((self.successors[i - 1] == j - 1) & (as_float(self.probabilities[i - 1]) > 0))
        if slots.size == 0:
            raise KeyError(f"pair ({i}, {j}) is not admissible")
        return self.zeta[i - 1, slots[0]]

    def row_means(self) -> np.ndarray:
        """sum_j pi_ij zeta(i, j) for every state (zero up to rounding)."""
        return (self.probabilities * self.zeta).sum(axis=1)

    def delta_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'index': np.arange(1, self.K + 1), 'delta': as_float(self.delta)})

    def to_dict(self) -> Dict:
        return {
            'K': self.K,
            'mode': self.mode,
            'solver': self.solver,
            'residual': float(self.residual),
            'condition': self.condition,
            'bounds': self.bounds.to_dict(),
            'warnings': list(self.warnings)
        }


@dataclass(frozen=True, eq=False)
class GrowthReport:
    """Bound quantities across refinement levels with the linear fit of sup |Delta_N|."""

    table: pd.DataFrame
    slope: float
    intercept: float
    fit_residual: float
    observed_N0: Optional[int]

    def to_dict(self) -> Dict:
        return {
            'slope': self.slope,
            'intercept': self.intercept,
            'fit_residual': self.fit_residual,
            'observed_N0': self.observed_N0,
            'rows': self.table.to_dict(orient='records')
        }


@dataclass(frozen=True)
class MartingaleReport:
    """Conditional-mean check of the corrected walk increments."""

    worst_z: float
    worst_state: int
    trials: int
    horizon: int
    table: pd.DataFrame

    def to_dict(self) -> Dict:
        return {
            'worst_z': self.worst_z,
            'worst_state': self.worst_state,
            'trials': self.trials,
            'horizon': self.horizon
        }
