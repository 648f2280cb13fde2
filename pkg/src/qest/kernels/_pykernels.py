"""Pure numpy implementation of the sampling kernels.

Random numbers come from a counter-based construction: stream ``s`` under
master seed ``seed`` is a SplitMix64 generator whose state is
``key(seed, s) = mix(mix(seed + G) ^ ((s + 1) * G))`` and whose ``k``-th output is
``mix(key + (k + 1) * G)``.  Every draw is therefore a pure function of
``(seed, stream, k)``, which makes replicas order independent.  The compiled
backend reproduces these values bit for bit.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(k) for k in (30, 27, 31, 11))
_TWO_M53 = 2.0 ** -53


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _keys(seed, streams):
    with np.errstate(over="ignore"):
        base = _mix(np.uint64(seed) + GOLDEN)
        s = np.asarray(streams, dtype=np.int64).astype(np.uint64)
        return _mix(base ^ ((s + np.uint64(1)) * GOLDEN))


def uniforms(seed, streams, count, start=0):
    """Array of shape ``(len(streams), count)`` with uniforms in ``[0, 1)``."""
    keys = _keys(seed, streams)
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _mix(keys[:, None] + k[None, :] * GOLDEN)
    return (bits >> _S11).astype(np.float64) * _TWO_M53


def sample_categorical(cdf, seed, streams, draws, start=0):
    """Outcome indices ``(len(streams), draws)`` by inversion of ``cdf``."""
    cdf = np.asarray(cdf, dtype=np.float64)
    u = uniforms(seed, streams, draws, start)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, cdf.size - 1).astype(np.int64)


def sample_counts(cdf, seed, streams, draws, start=0):
    """Outcome histograms ``(len(streams), len(cdf))`` of ``draws`` samples per stream."""
    cdf = np.asarray(cdf, dtype=np.float64)
    k = cdf.size
    streams = np.asarray(streams, dtype=np.int64)
    out = np.zeros((streams.size, k), dtype=np.int64)
    # bounded memory: process streams in blocks
    block = max(1, 2_000_000 // max(draws, 1))
    for i in range(0, streams.size, block):
        idx = sample_categorical(cdf, seed, streams[i:i + block], draws, start)
        rows = np.repeat(np.arange(idx.shape[0]), idx.shape[1])
        np.add.at(out[i:i + block], (rows, idx.ravel()), 1)
    return out


def sq_errors(estimates, theta, period):
    """Squared errors; circular ``min_k (x + k P)^2`` when ``period > 0``."""
    x = np.asarray(estimates, dtype=np.float64) - theta
    if period > 0:
        half = 0.5 * period
        y = x + half
        x = y - period * np.floor(y / period) - half
    return x * x
