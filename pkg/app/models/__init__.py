"""
Domain models for the Chaotic Walk Lab.
"""
from .subshift import SubshiftSpec, SymbolPath, CylinderWord, DecodedInterval
from .skew import DisplacementSpec, PerturbationSpec, SkewSystem, Trajectory, ClassReport
from .poisson import PoissonData, PoissonBounds
from .walk import WalkSpec, EscapeStats, HalflineStats, TiltRates, OracleResult
from .episode import EpisodeTrace, OccupationCurve, CensusStats
from .run import RunRecord, RunConfig

__all__ = [
    'SubshiftSpec', 'SymbolPath', 'CylinderWord', 'DecodedInterval',
    'DisplacementSpec', 'PerturbationSpec', 'SkewSystem', 'Trajectory', 'ClassReport',
    'PoissonData', 'PoissonBounds',
    'WalkSpec', 'EscapeStats', 'HalflineStats', 'TiltRates', 'OracleResult',
    'EpisodeTrace', 'OccupationCurve', 'CensusStats',
    'RunRecord', 'RunConfig'
]
