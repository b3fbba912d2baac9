"""
In-memory cache for derived numerical tables (ETDRK4 coefficients, dense operator matrices)
Keys are md5 digests of the array inputs, so equal symbols and time steps share one entry.
"""

import hashlib
import logging
import threading
from collections import OrderedDict
from functools import wraps
from typing import Any, Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

MAX_ENTRIES = 256

_store: "OrderedDict[str, Any]" = OrderedDict()
_lock = threading.Lock()
_stats = {"hits": 0, "misses": 0, "evictions": 0}


class CacheManager:
    """LRU cache shared by every thread of the process"""

    @staticmethod
    def get(key: str) -> Optional[Any]:
        with _lock:
            if key not in _store:
                return None
            _store.move_to_end(key)
            return _store[key]

    @staticmethod
    def set(key: str, value: Any) -> bool:
        with _lock:
            _store[key] = value
            _store.move_to_end(key)
            while len(_store) > MAX_ENTRIES:
                _store.popitem(last=False)
                _stats["evictions"] += 1
        return True

    @staticmethod
    def delete(key: str) -> bool:
        with _lock:
            return _store.pop(key, None) is not None

    @staticmethod
    def clear() -> int:
        with _lock:
            count = len(_store)
            _store.clear()
            for name in _stats:
                _stats[name] = 0
            return count

    @staticmethod
    def get_cache_key(prefix: str, *args, **kwargs) -> str:
        """Hash arrays by dtype, shape and bytes; everything else by repr"""
        digest = hashlib.md5(prefix.encode())
        for item in list(args) + [kwargs[k] for k in sorted(kwargs)]:
            if isinstance(item, np.ndarray):
                digest.update(str(item.dtype).encode())
                digest.update(str(item.shape).encode())
                digest.update(np.ascontiguousarray(item).tobytes())
            else:
                digest.update(repr(item).encode())
        digest.update(repr(sorted(kwargs)).encode())
        return f"{prefix}:{digest.hexdigest()}"


def cached(prefix: str = "cache"):
    """
    Decorator for caching results of pure numerical functions

    Usage:
        @cached(prefix="etdrk4")
        def etdrk4_coefficients(symbol, dt):
            ...
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            cache_key = CacheManager.get_cache_key(prefix, *args, **kwargs)
            cached_value = CacheManager.get(cache_key)
            if cached_value is not None:
                with _lock:
                    _stats["hits"] += 1
                logger.debug(f"✅ Cache HIT: {func.__name__}")
                return cached_value

            with _lock:
                _stats["misses"] += 1
            logger.debug(f"❌ Cache MISS: {func.__name__} (computing...)")
            result = func(*args, **kwargs)
            CacheManager.set(cache_key, result)
            return result
        return wrapper
    return decorator


def get_cache_stats() -> dict:
    with _lock:
        return {"entries": len(_store), "max_entries": MAX_ENTRIES, **_stats}
