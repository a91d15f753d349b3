"""
Redis caching utilities for float-mode solver results.
The lab runs unchanged when Redis is not configured.
"""
import hashlib
import json
from typing import Any, Optional

import numpy as np
from flask import current_app

import app as lab


def cache_get(key: str) -> Optional[Any]:
    """
    Retrieve value from Redis cache.

    Args:
        key: Cache key

    Returns:
        Cached value or None if not found (or Redis disabled)
    """
    if lab.redis_client is None:
        return None
    try:
        value = lab.redis_client.get(key)
        if value:
            return json.loads(value)
        return None
    except Exception as e:
        current_app.logger.error(f"Cache get error for key {key}: {str(e)}")
        return None


def cache_set(key: str, value: Any, ttl: Optional[int] = None) -> bool:
    """
    Store value in Redis cache with optional TTL.

    Args:
        key: Cache key
        value: Value to cache (will be JSON serialized)
        ttl: Time to live in seconds (uses config default if not provided)

    Returns:
        True if successful, False otherwise
    """
    if lab.redis_client is None:
        return False
    try:
        if ttl is None:
            ttl = current_app.config['CACHE_TTL_SECONDS']

        serialized = json.dumps(value)
        lab.redis_client.setex(key, ttl, serialized)
        return True
    except Exception as e:
        current_app.logger.error(f"Cache set error for key {key}: {str(e)}")
        return False


def vector_digest(values) -> str:
    """Short content hash of a float vector."""
    data = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    return hashlib.sha256(data.tobytes()).hexdigest()[:16]


def get_poisson_cache_key(m: int, N: int, xi) -> str:
    """
    Generate standardized cache key for a canonical Poisson solution.

    Args:
        m: Base multiplier
        N: Partition level
        xi: Discretized displacement vector

    Returns:
        Cache key
    """
    return f"poisson:{m}:{N}:{vector_digest(xi)}"
