"""Sampling kernels with a compiled backend and a numpy fallback.

The Cython extension ``_ckernels`` is used when it was built; otherwise, or
when ``QEST_PURE_PYTHON=1`` is set, the numpy implementation is used.  Both
produce identical outputs for identical inputs.  ``QEST_THREADS`` caps the
number of worker threads used to split stream batches (the compiled kernels
release the GIL).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _pykernels

_MASK64 = (1 << 64) - 1

if os.environ.get("QEST_PURE_PYTHON", "") not in ("", "0"):
    _backend = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _backend  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _backend = _pykernels
        BACKEND = "python"


def backends() -> dict:
    """Available backend modules keyed by name (for tests and benchmarks)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def thread_count() -> int:
    raw = os.environ.get("QEST_THREADS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def _seed64(seed: int) -> int:
    if int(seed) < 0:
        raise ValueError("seed must be nonnegative")
    return int(seed) & _MASK64


def _split(fn: str, cdf, seed: int, streams, draws: int, start: int, module=None) -> np.ndarray:
    mod = module or _backend
    kernel = getattr(mod, fn)
    cdf = np.ascontiguousarray(cdf, dtype=np.float64)
    streams = np.ascontiguousarray(streams, dtype=np.int64).ravel()
    workers = min(thread_count(), max(1, streams.size // 4096))
    if workers <= 1 or mod is _pykernels:
        return kernel(cdf, seed, streams, draws, start)
    chunks = np.array_split(streams, workers)
    with ThreadPoolExecutor(workers) as pool:
        parts = list(pool.map(lambda c: kernel(cdf, seed, c, draws, start), chunks))
    return np.concatenate(parts, axis=0)


def uniforms(seed: int, streams, count: int, start: int = 0, module=None) -> np.ndarray:
    mod = module or _backend
    return mod.uniforms(_seed64(seed), np.ascontiguousarray(streams, dtype=np.int64).ravel(), int(count), int(start))


def sample_categorical(cdf, seed: int, streams, draws: int, start: int = 0, module=None) -> np.ndarray:
    return _split("sample_categorical", cdf, _seed64(seed), streams, int(draws), int(start), module)


def sample_counts(cdf, seed: int, streams, draws: int, start: int = 0, module=None) -> np.ndarray:
    return _split("sample_counts", cdf, _seed64(seed), streams, int(draws), int(start), module)


def sq_errors(estimates, theta: float, period: float | None = None, module=None) -> np.ndarray:
    mod = module or _backend
    return mod.sq_errors(np.asarray(estimates, dtype=np.float64), float(theta), float(period or 0.0))


def cdf_from_probs(p) -> np.ndarray:
    """Cumulative distribution with the last entry pinned to 1."""
    c = np.cumsum(np.asarray(p, dtype=np.float64))
    c[-1] = 1.0
    return c
