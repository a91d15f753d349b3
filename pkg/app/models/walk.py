"""
Random walks over subshifts and their stopping-time statistics.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from app.models.poisson import PoissonData
from app.models.skew import SkewSystem
from app.models.subshift import SubshiftSpec
from app.utils.errors import ValidationError
from app.utils.exact import as_float


@dataclass(frozen=True, eq=False)
class WalkSpec:
    """
    A walk v_{n+1} = v_n + step_n + alpha started at x0.

    Markov walks take their steps from an increment table over successor
    slots of `chain` (zeta from `poisson`, or a raw `increments` table).
    Chaotic walks take g_y(v) - v from a skew system driven by E_m.
    """

    chain: Optional[SubshiftSpec] = None
    poisson: Optional[PoissonData] = None
    increments: Optional[np.ndarray] = None
    system: Optional[SkewSystem] = None
    alpha: float = 0.0
    x0: float = 0.0
    initial_symbol: Optional[int] = None

    def __post_init__(self):
        markov = self.poisson is not None or self.increments is not None
        if markov == (self.system is not None):
            raise ValidationError("a walk needs either Markov increments or a skew system, not both")
        if markov:
            if self.chain is None:
                raise ValidationError("Markov walks need the chain they run on")
            if self.poisson is not None and self.increments is not None:
                raise ValidationError("give either PoissonData or a raw increment table")
            if self.increment_table.shape != self.chain.successors.shape:
                raise ValidationError(
                    f"increment table {self.increment_table.shape} does not match "
                    f"successor table {self.chain.successors.shape}"
                )
        if not np.isfinite(self.x0) or not np.isfinite(self.alpha):
            raise ValidationError("x0 and alpha must be finite")

    @property
    def kind(self) -> str:
        return 'chaotic' if self.system is not None else 'markov'

    @property
    def increment_table(self) -> Optional[np.ndarray]:
        """Float (K, w) step table aligned with the chain's successor slots."""
        if self.poisson is not None:
            return np.asarray(as_float(self.poisson.zeta), dtype=float)
        if self.increments is None:
            return None
        table = np.asarray(as_float(self.increments), dtype=float)
        if table.ndim == 1:
            # per-target values xi(j)
            table = table[self.chain.successors]
        return table

    @property
    def max_step(self) -> Optional[float]:
        """sup |step + alpha| over admissible pairs (Markov walks only)."""
        if self.kind != 'markov':
            return None
        admissible = as_float(self.chain.probabilities) > 0
        return float(np.abs(self.increment_table[admissible] + self.alpha).max())

    def with_alpha(self, alpha: float) -> 'WalkSpec':
        return replace(self, alpha=float(alpha))

    def with_start(self, x0: float) -> 'WalkSpec':
        return replace(self, x0=float(x0))

    def to_dict(self) -> Dict:
        data = {'kind': self.kind, 'alpha': self.alpha, 'x0': self.x0, 'initial_symbol': self.initial_symbol}
        if self.chain is not None:
            data['chain'] = self.chain.to_dict()
        if self.system is not None:
            data['system'] = self.system.to_dict()
        if self.poisson is not None:
            data['bounds'] = self.poisson.bounds.to_dict()
        return data


def _interval(ci) -> List[float]:
    return [float(ci[0]), float(ci[1])]


@dataclass(frozen=True)
class EscapeStats:
    """Monte Carlo statistics of the exit from [A, B]."""

    trials: int
    horizon: int
    A: float
    B: float
    x0: float
    alpha: float
    exits_left: int
    exits_right: int
    censored: int
    p_left: float
    p_left_ci: Tuple[float, float]
    mean_time: float
    mean_time_ci: Tuple[float, float]
    mean_time_left: float
    mean_time_left_ci: Tuple[float, float]
    doob_mean: float
    doob_z: float
    warnings: List[str] = field(default_factory=list)

    @property
    def censoring(self) -> bool:
        return self.censored > 0

    @property
    def p_left_se(self) -> float:
        return float(np.sqrt(max(self.p_left * (1 - self.p_left), 0.0) / self.trials))

    def to_row(self) -> Dict:
        return {
            'alpha': self.alpha, 'A': self.A, 'B': self.B, 'x0': self.x0,
            'horizon': self.horizon, 'trials': self.trials,
            'exits_left': self.exits_left, 'exits_right': self.exits_right, 'censored': self.censored,
            'p_left': self.p_left, 'p_left_low': self.p_left_ci[0], 'p_left_high': self.p_left_ci[1],
            'mean_time': self.mean_time, 'mean_time_low': self.mean_time_ci[0],
            'mean_time_high': self.mean_time_ci[1],
            'mean_time_left': self.mean_time_left, 'mean_time_left_low': self.mean_time_left_ci[0],
            'mean_time_left_high': self.mean_time_left_ci[1],
            'doob_mean': self.doob_mean, 'doob_z': self.doob_z
        }

    def to_dict(self) -> Dict:
        data = self.to_row()
        data['p_left_ci'] = _interval(self.p_left_ci)
        data['censoring'] = self.censoring
        data['warnings'] = list(self.warnings)
        return data


@dataclass(frozen=True, eq=False)
class HalflineStats:
    """
    Survival of the walk below B along a ladder of horizons.

    Columns of `table`: horizon, escaped, escaped_fraction, ci_low, ci_high,
    censored_mean (mean of min(T, h)) and escapee_mean (mean of T given T <= h).
    """

    B: float
    x0: float
    alpha: float
    trials: int
    table: pd.DataFrame
    growth_ratios: List[float]
    required_ratios: List[float]
    warnings: List[str] = field(default_factory=list)

    @property
    def diverging(self) -> bool:
        """Censored mean grows at least by the configured factor per decade at every rung."""
        if not self.growth_ratios:
            return False
        return all(r > q for r, q in zip(self.growth_ratios, self.required_ratios))

    def to_dict(self) -> Dict:
        return {
            'B': self.B, 'x0': self.x0, 'alpha': self.alpha, 'trials': self.trials,
            'growth_ratios': list(self.growth_ratios),
            'required_ratios': list(self.required_ratios),
            'diverging': self.diverging,
            'rows': self.table.to_dict(orient='records'),
            'warnings': list(self.warnings)
        }


@dataclass(frozen=True)
class StayStats:
    """Probability of never exceeding B within the horizon (negative drift)."""

    alpha: float
    B: float
    x0: float
    trials: int
    horizon: int
    p_stay: float
    ci: Tuple[float, float]
    p_stay_doubled: float
    stable: bool
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'alpha': self.alpha, 'B': self.B, 'x0': self.x0, 'trials': self.trials,
            'horizon': self.horizon, 'p_stay': self.p_stay, 'ci': _interval(self.ci),
            'p_stay_doubled': self.p_stay_doubled, 'stable': self.stable,
            'note': 'finite horizon overestimates the stay probability',
            'warnings': list(self.warnings)
        }


@dataclass(frozen=True, eq=False)
class TiltRates:
    """
    Exponential tilts r with row moment generating functions around 1.

    With per-row roots r_i of sum_j pi_ij exp(r (zeta(i, j) + alpha)) = 1,
    r_minus = min_i r_i and r_plus = max_i r_i. For alpha > 0 both are
    non-positive; exp(r v_n) is a submartingale at r_minus and a
    supermartingale at r_plus.
    """

    alpha: float
    r_minus: float
    r_plus: float
    row_roots: np.ndarray
    mgf_at_minus: np.ndarray
    mgf_at_plus: np.ndarray
    taylor_guard: float
    linear_minus: float
    linear_plus: float
    iterations: int
    warnings: List[str] = field(default_factory=list)

    @property
    def taylor_regime(self) -> bool:
        return abs(self.alpha) < self.taylor_guard

    @property
    def ratio_to_linear(self) -> float:
        """r_minus / (-2 alpha / Vminus)."""
        return float(self.r_minus / self.linear_minus) if self.linear_minus else 1.0

    def to_dict(self) -> Dict:
        return {
            'alpha': self.alpha, 'r_minus': self.r_minus, 'r_plus': self.r_plus,
            'min_mgf_at_minus': float(self.mgf_at_minus.min()) if self.mgf_at_minus.size else 1.0,
            'max_mgf_at_plus': float(self.mgf_at_plus.max()) if self.mgf_at_plus.size else 1.0,
            'taylor_guard': self.taylor_guard, 'taylor_regime': self.taylor_regime,
            'linear_minus': self.linear_minus, 'linear_plus': self.linear_plus,
            'ratio_to_linear': self.ratio_to_linear, 'iterations': self.iterations,
            'warnings': list(self.warnings)
        }


@dataclass(frozen=True)
class EscapeBounds:
    """Bracket on p_left from optional stopping."""

    p_lower: float
    p_upper: float
    method: str

    def contains(self, p: float, slack: float = 0.0) -> bool:
        return self.p_lower - slack <= p <= self.p_upper + slack

    def to_dict(self) -> Dict:
        return {'p_lower': self.p_lower, 'p_upper': self.p_upper, 'method': self.method}


@dataclass(frozen=True)
class OracleResult:
    """Exact (or sparse-solved) absorption quantities on the lattice state space."""

    p_left: object
    mean_time: object
    mean_time_left: object
    states: int
    mode: str
    scale: int

    def to_dict(self) -> Dict:
        return {
            'p_left': float(self.p_left),
            'mean_time': float(self.mean_time),
            'mean_time_left': float(self.mean_time_left) if self.mean_time_left is not None else None,
            'states': self.states, 'mode': self.mode, 'scale': self.scale
        }


@dataclass(frozen=True)
class Witness:
    """Admissible word whose cumulative displacement passes the target level."""

    direction: str
    found: bool
    word: Tuple[int, ...] = ()
    displacement: float = 0.0
    fixed_point: Optional[int] = None
    fixed_point_length: Optional[int] = None

    @property
    def length(self) -> int:
        return len(self.word)

    def to_dict(self) -> Dict:
        return {
            'direction': self.direction, 'found': self.found, 'length': self.length,
            'word': list(self.word), 'displacement': self.displacement,
            'fixed_point': self.fixed_point, 'fixed_point_length': self.fixed_point_length
        }


@dataclass(frozen=True)
class WitnessReport:
    L: float
    max_len: int
    up: Witness
    down: Witness

    def to_dict(self) -> Dict:
        return {'L': self.L, 'max_len': self.max_len, 'up': self.up.to_dict(), 'down': self.down.to_dict()}


@dataclass(frozen=True, eq=False)
class ScalingReport:
    """Drift sweep and zero-drift rows with max/min ratios of the normalized columns."""

    table: pd.DataFrame
    ratios: Dict[str, float]
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'ratios': dict(self.ratios),
            'rows': self.table.to_dict(orient='records'),
            'warnings': list(self.warnings)
        }
