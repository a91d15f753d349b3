"""
Tests for the Redis cache helpers.
"""
import numpy as np

from app.utils.cache import cache_get, cache_set, get_poisson_cache_key, vector_digest


def test_cache_disabled_without_redis(app):
    """Testing config leaves REDIS_URL empty, so the cache is a no-op."""
    with app.app_context():
        assert cache_set('poisson:test', {'delta': [0.0]}) is False
        assert cache_get('poisson:test') is None


def test_poisson_cache_key():
    xi = np.array([-0.5, 0.5])
    key = get_poisson_cache_key(2, 3, xi)

    assert key.startswith('poisson:2:3:')
    assert key == get_poisson_cache_key(2, 3, [-0.5, 0.5])
    assert key != get_poisson_cache_key(2, 3, [-0.25, 0.25])
    assert len(vector_digest(xi)) == 16
