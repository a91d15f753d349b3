"""
Intermittency records: laminar/burst episodes, occupation curves and
escape-time censuses.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from app.models.walk import HalflineStats

LAMINAR_LOW = 'laminar-0'
LAMINAR_HIGH = 'laminar-1'
BURST = 'burst'


@dataclass(frozen=True, eq=False)
class EpisodeTrace:
    """
    Segmentation of a line-chart series into laminar and burst episodes.

    Episodes tile [0, n) in order; burst and laminar episodes alternate, a
    zero-length burst separating two laminar episodes at opposite ends.
    """

    thresholds: Tuple[float, float]
    episodes: pd.DataFrame
    occupation_curve: pd.DataFrame
    steps: int

    @property
    def transitions(self) -> int:
        """Number of laminar -> burst transitions."""
        kinds = self.episodes['kind'].tolist()
        return sum(1 for a, b in zip(kinds, kinds[1:]) if a != BURST and b == BURST)

    def laminar_lengths(self) -> np.ndarray:
        frame = self.episodes
        return frame.loc[frame['kind'] != BURST, 'length'].to_numpy()

    def histogram(self) -> pd.DataFrame:
        """Episode length counts with columns length, count, kind."""
        frame = self.episodes[self.episodes['length'] > 0]
        if frame.empty:
            return pd.DataFrame(columns=['length', 'count', 'kind'])
        counts = frame.groupby(['kind', 'length']).size().reset_index(name='count')
        return counts[['length', 'count', 'kind']].sort_values(['kind', 'length']).reset_index(drop=True)

    def to_dict(self) -> Dict:
        lengths = self.laminar_lengths()
        return {
            'thresholds': [float(t) for t in self.thresholds],
            'steps': self.steps,
            'episodes': int(len(self.episodes)),
            'transitions': self.transitions,
            'max_laminar': int(lengths.max()) if lengths.size else 0,
            'median_laminar': float(np.median(lengths)) if lengths.size else 0.0
        }


@dataclass(frozen=True, eq=False)
class OccupationCurve:
    """
    Birkhoff averages of an interval U at logarithmic checkpoints.

    `inside`, `below`, `above` and `transitions` hold one row per trajectory
    and one column per checkpoint.
    """

    U: Tuple[float, float]
    checkpoints: np.ndarray
    inside: np.ndarray
    below: np.ndarray
    above: np.ndarray
    transitions: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def samples(self) -> int:
        return int(self.inside.shape[0])

    @property
    def median(self) -> np.ndarray:
        return np.median(self.inside, axis=0)

    def to_frame(self) -> pd.DataFrame:
        q25, q75 = np.percentile(self.inside, [25, 75], axis=0)
        return pd.DataFrame({
            'n': self.checkpoints,
            'fraction_median': self.median,
            'fraction_q25': q25,
            'fraction_q75': q75,
            'below_median': np.median(self.below, axis=0),
            'above_median': np.median(self.above, axis=0),
            'transitions_median': np.median(self.transitions, axis=0)
        })

    def is_decreasing(self, margin: float = 0.0) -> bool:
        """Median never rises by more than `margin` and ends strictly below its start."""
        median = self.median
        if median.size < 2:
            return False
        steps_ok = bool(np.all(np.diff(median) <= margin))
        return steps_ok and median[-1] < median[0]

    def to_dict(self) -> Dict:
        return {
            'U': [float(u) for u in self.U],
            'samples': self.samples,
            'rows': self.to_frame().to_dict(orient='records'),
            'warnings': list(self.warnings)
        }


@dataclass(frozen=True, eq=False)
class CensusStats:
    """Escape times above logit(p) for chaotic walks started at logit(x_start)."""

    p: float
    x_start: float
    halfline: HalflineStats

    @property
    def table(self) -> pd.DataFrame:
        return self.halfline.table

    @property
    def diverging(self) -> bool:
        return self.halfline.diverging

    @property
    def escaped_fraction(self) -> float:
        return float(self.table['escaped_fraction'].iloc[-1])

    def to_dict(self) -> Dict:
        data = self.halfline.to_dict()
        data.update({'p': self.p, 'x_start': self.x_start})
        return data
