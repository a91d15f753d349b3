"""
Utility modules for the Chaotic Walk Lab.
"""
from .cache import cache_get, cache_set, get_poisson_cache_key
from .errors import LabError, ValidationError, DomainError, SizeError, ConvergenceError

__all__ = [
    'cache_get',
    'cache_set',
    'get_poisson_cache_key',
    'LabError',
    'ValidationError',
    'DomainError',
    'SizeError',
    'ConvergenceError'
]
