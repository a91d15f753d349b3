"""
Intermittency statistics on simulated skew-product orbits: Birkhoff
occupation of an interval, laminar/burst segmentation and escape-time
censuses. Everything runs in the line chart so deep laminar phases stay
representable.
"""
import math
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from flask import current_app
from scipy.special import logit

from app.models.episode import BURST, LAMINAR_HIGH, LAMINAR_LOW, CensusStats, EpisodeTrace, OccupationCurve
from app.models.skew import SkewSystem
from app.models.walk import WalkSpec
from app.services.skew_products import SkewProductService
from app.services.stopping_lab import StoppingLabService
from app.utils.errors import DomainError, ValidationError

KIND_NAMES = {-1: LAMINAR_LOW, 0: BURST, 1: LAMINAR_HIGH}


def log_checkpoints(n: int, first: int = 100) -> np.ndarray:
    """Powers of ten from `first` up to n, with n itself appended."""
    points = []
    c = first
    while c < n:
        points.append(c)
        c *= 10
    points.append(int(n))
    return np.array(points, dtype=np.int64)


def region_codes(xs: np.ndarray, low: float, high: float) -> np.ndarray:
    """-1 below `low`, +1 above `high`, 0 in between; NaN counts as neither (code 2)."""
    codes = np.where(xs < low, -1, np.where(xs > high, 1, 0)).astype(np.int8)
    codes[np.isnan(xs)] = 2
    return codes


def transition_counts(codes: np.ndarray, checkpoints: Sequence[int]) -> np.ndarray:
    """
    Cumulative laminar -> burst transitions among the first n codes.

    Args:
        codes: (..., n) region codes
        checkpoints: Prefix lengths

    Returns:
        (..., len(checkpoints)) counts
    """
    codes = np.asarray(codes)
    entering = (codes[..., 1:] == 0) & ((codes[..., :-1] == -1) | (codes[..., :-1] == 1))
    running = np.concatenate([np.zeros(codes.shape[:-1] + (1,), dtype=np.int64),
                              np.cumsum(entering, axis=-1)], axis=-1)
    return running[..., np.asarray(checkpoints) - 1]


class IntermittencyStatsService:
    """
    Service for on-off intermittency signatures including:
    - Birkhoff occupation curves with per-sample spread
    - Laminar/burst episode segmentation of single series
    - Escape-time census of chaotic walks across a horizon ladder
    """

    def __init__(self, threads: Optional[int] = None):
        self.epsilon = current_app.config['LAMINAR_EPSILON']
        self.samples = current_app.config['TRAJECTORY_SAMPLES']
        self.margin = current_app.config['TREND_MARGIN']
        self.threads = threads or current_app.config['MAX_THREADS']
        self.skew = SkewProductService(threads=self.threads)

    @staticmethod
    def _line_interval(U: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = float(U[0]), float(U[1])
        if not 0.0 < lo < hi <= 1.0:
            raise DomainError(f"U must satisfy 0 < lower < upper <= 1, got {U}")
        return float(logit(lo)), math.inf if hi == 1.0 else float(logit(hi))

    def _occupation_reducer(self, low: float, high: float, checkpoints: np.ndarray):
        def reduce(xs: np.ndarray):
            codes = region_codes(xs[:, :-1], low, high)
            counts = []
            for code in (0, -1, 1):
                running = np.cumsum(codes == code, axis=1)
                counts.append(running[:, checkpoints - 1] / checkpoints)
            lost = int(np.isnan(xs).any(axis=1).sum())
            return counts[0], counts[1], counts[2], transition_counts(codes, checkpoints), lost
        return reduce

    def birkhoff_occupation(self, sys: SkewSystem, U: Tuple[float, float], x0: float, n: int,
                            samples: Optional[int] = None, seed: int = 0) -> OccupationCurve:
        """
        Fraction of the first n iterates inside U for a batch of trajectories.

        Args:
            sys: Skew system
            U: Interval in the (0, 1) chart; upper end 1 allowed
            x0: Start in the system's chart
            n: Orbit length
            samples: Number of trajectories (TRAJECTORY_SAMPLES by default)
            seed: Master seed

        Returns:
            OccupationCurve at checkpoints 10^2, 10^3, ..., n
        """
        if int(n) < 1:
            raise ValidationError(f"orbit length must be positive, got {n}")
        low, high = self._line_interval(U)
        checkpoints = log_checkpoints(int(n))
        parts = self.skew.simulate_batch(
            sys, int(samples or self.samples), int(n), x0, seed,
            reducer=self._occupation_reducer(low, high, checkpoints)
        )
        inside, below, above, transitions = (np.concatenate([p[k] for p in parts]) for k in range(4))
        lost = sum(p[4] for p in parts)
        warnings = []
        if lost:
            warnings.append(f"{lost} trajectories left the class; their later points count nowhere")
            current_app.logger.warning(warnings[-1])

        curve = OccupationCurve((float(U[0]), float(U[1])), checkpoints, inside, below, above,
                                transitions, warnings)
        current_app.logger.info(
            f"Occupation of {U} over {curve.samples} orbits: median {curve.median[0]:.4f} at "
            f"n={checkpoints[0]} -> {curve.median[-1]:.4f} at n={checkpoints[-1]}"
        )
        return curve

    def trend_check(self, curve: OccupationCurve, margin: Optional[float] = None) -> bool:
        """Decreasing-median acceptance with TREND_MARGIN tolerance."""
        return curve.is_decreasing(self.margin if margin is None else margin)

    def laminar_level(self, epsilon: Optional[float] = None) -> float:
        """L = h^-1(1 - epsilon)."""
        eps = self.epsilon if epsilon is None else epsilon
        if not 0.0 < eps < 0.5:
            raise DomainError(f"epsilon must lie in (0, 1/2), got {eps}")
        return float(logit(1.0 - eps))

    def episode_segmentation(self, series, L: Optional[float] = None) -> EpisodeTrace:
        """
        Split a line-chart series into laminar episodes (x < -L or x > L) and bursts.

        Args:
            series: Finite line-chart values
            L: Laminar level (h^-1(1 - LAMINAR_EPSILON) by default)

        Returns:
            EpisodeTrace whose episodes tile the series
        """
        xs = np.asarray(series, dtype=float).ravel()
        if xs.size == 0 or not np.isfinite(xs).all():
            raise ValidationError("series must be non-empty and finite")
        L = self.laminar_level() if L is None else float(L)
        if L < 0:
            raise DomainError(f"laminar level must be non-negative, got {L}")

        codes = region_codes(xs, -L, L)
        breaks = np.flatnonzero(np.diff(codes)) + 1
        starts = np.concatenate([[0], breaks])
        ends = np.concatenate([breaks, [xs.size]])

        episodes = []
        previous = None
        for s, e in zip(starts, ends):
            code = int(codes[s])
            if previous is not None and previous != 0 and code != 0:
                episodes.append((BURST, int(s), 0))
            episodes.append((KIND_NAMES[code], int(s), int(e - s)))
            previous = code
        frame = pd.DataFrame(episodes, columns=['kind', 'start', 'length'])

        checkpoints = log_checkpoints(xs.size, first=10)
        inside = np.cumsum(codes == 0)[checkpoints - 1] / checkpoints
        curve = pd.DataFrame({'n': checkpoints, 'fraction': inside})
        return EpisodeTrace((-L, L), frame, curve, int(xs.size))

    def escape_time_census(self, sys: SkewSystem, p: float, x_start: float, trials: int,
                           horizons: Sequence[int], seed: int) -> CensusStats:
        """
        Escape times of the chaotic walk above p started at x_start (interval chart).

        The walk runs in the line chart from logit(x_start) until it reaches
        logit(p).
        """
        if not 0.0 < x_start < p < 1.0:
            raise DomainError(f"need 0 < x_start < p < 1, got x_start={x_start}, p={p}")
        walk = WalkSpec(system=sys, x0=float(logit(x_start)))
        lab = StoppingLabService(threads=self.threads)
        stats = lab.estimate_escape_halfline(walk, float(logit(p)), trials, horizons, seed)
        census = CensusStats(float(p), float(x_start), stats)
        current_app.logger.info(
            f"Census p={p} from {x_start}: escaped {census.escaped_fraction:.4f}, diverging={census.diverging}"
        )
        return census

