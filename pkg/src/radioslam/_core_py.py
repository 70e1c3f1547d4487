"""Pure-numpy particle kernels (reference implementation and import fallback).

Must stay numerically interchangeable with ``_core.pyx``; the kernel tests
compare both on random inputs.
"""
import math

import numpy as np

AOA_BIT = 1
TOA_BIT = 2
RSS_BIT = 4

# residuals beyond this many sigmas contribute exp(-72) ~ 0
CUTOFF_SIGMAS = 12.0

_TWO_PI = 2.0 * math.pi
_LOG_SQRT_2PI = 0.5 * math.log(_TWO_PI)


def legacy_factors(pos, alpha, omega, feats, meas, flags, sa, st, sr, log_scale):
    """Index-paired legacy factor values.

    pos (N,2), alpha (N,), omega (N,) agent particles; feats (K,N,4) feature
    particles [x, y, xi, beta]; meas (J,3) rows [aoa rad, toa range m, rss dBm].
    Returns G (K,J,N) = exp(log_scale + sum of enabled per-category Gaussian
    log-densities), with TOA handled in the range domain (metres).
    """
    K = feats.shape[0]
    J = meas.shape[0]
    N = pos.shape[0]
    out = np.zeros((K, J, N))
    if K == 0 or J == 0:
        return out
    base = log_scale
    if flags & AOA_BIT:
        base -= math.log(sa) + _LOG_SQRT_2PI
    if flags & TOA_BIT:
        base -= math.log(st) + _LOG_SQRT_2PI
    if flags & RSS_BIT:
        base -= math.log(sr) + _LOG_SQRT_2PI
    for k in range(K):
        dx = feats[k, :, 0] - pos[:, 0]
        dy = feats[k, :, 1] - pos[:, 1]
        dist = np.hypot(dx, dy)
        acc = np.zeros((J, N))
        if flags & AOA_BIT:
            theta = np.arctan2(dy, dx) + alpha
            r = meas[:, 0:1] - theta[None, :]
            r -= _TWO_PI * np.ceil((r - math.pi) / _TWO_PI)
            acc += (r / sa) ** 2
        if flags & TOA_BIT:
            r = meas[:, 1:2] - (dist - omega)[None, :]
            acc += (r / st) ** 2
        if flags & RSS_BIT:
            with np.errstate(divide="ignore"):
                model = -10.0 * feats[k, :, 3] * np.log10(dist) + feats[k, :, 2]
            r = meas[:, 2:3] - model[None, :]
            acc += (r / sr) ** 2
        g = np.exp(base - 0.5 * acc)
        g[acc > CUTOFF_SIGMAS * CUTOFF_SIGMAS] = 0.0
        out[k] = g
    return out


def systematic_indices(weights, u0):
    """Systematic resampling ancestors for normalized ``weights`` and offset u0 in [0,1)."""
    n = weights.shape[0]
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    points = (u0 + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, points, side="right"), n - 1)


def gather_slide(parts, anc, kin, push):
    """parts[anc] with positions pushed radially away from ``kin`` by ``push``.

    An empty ``push`` only gathers.
    """
    out = parts[anc]
    if push.shape[0] == 0:
        return out
    dx = out[:, 0] - kin[:, 0]
    dy = out[:, 1] - kin[:, 1]
    dist = np.hypot(dx, dy)
    scale = np.maximum(dist + push, 1e-6) / np.maximum(dist, 1e-12)
    out[:, 0] = kin[:, 0] + scale * dx
    out[:, 1] = kin[:, 1] + scale * dy
    return out
