"""Per-feature Gaussian belief over the path-loss parameters (xi, beta).

Given the agent-feature distance d the RSS model is linear in the
parameters, rss = h(d) . [xi, beta] with h(d) = [1, -10 log10 d], so they can
be integrated out analytically instead of being carried on the paired
particles. Each feature keeps a mean and a 2x2 covariance; the legacy factor
uses the predictive density and the belief is refreshed with an
association-weighted Kalman step.
"""
from __future__ import annotations

import math

import numpy as np

from .beliefs import Priors

_LOG10 = math.log(10.0)
_LOG_2PI = math.log(2.0 * math.pi)
_MIN_DIST = 1e-3


def prior_moments(priors: Priors) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the uniform parameter priors (zero for pinned ranges)."""
    (xl, xh), (bl, bh) = priors.xi, priors.beta
    mean = np.array([(xl + xh) / 2.0, (bl + bh) / 2.0])
    cov = np.diag([(xh - xl) ** 2 / 12.0, (bh - bl) ** 2 / 12.0])
    return mean, cov


def moments(feature, priors: Priors) -> tuple[np.ndarray, np.ndarray]:
    if feature.rss_mean is None:
        return prior_moments(priors)
    return feature.rss_mean, feature.rss_cov


def design(dist) -> np.ndarray:
    """Rows h(d) = [1, -10 log10 d]; shape (..., 2)."""
    d = np.maximum(np.asarray(dist, float), _MIN_DIST)
    return np.stack([np.ones_like(d), -10.0 * np.log10(d)], axis=-1)


def log_predictive(z, h, mean, cov, sigma: float) -> np.ndarray:
    """log N(z; h.mean, sigma^2 + h cov h^T) for every row of h."""
    m = h @ mean
    s2 = sigma ** 2 + np.einsum("ni,ij,nj->n", h, cov, h)
    return -0.5 * ((z - m) ** 2 / s2 + np.log(s2) + _LOG_2PI)


def _range_spread(dist, weights, beta_mean: float) -> float:
    """Extra RSS variance from the spread of the distance across pairs."""
    ln_d = np.log(np.maximum(dist, _MIN_DIST))
    mu = weights @ ln_d
    var = max(float(weights @ (ln_d - mu) ** 2), 0.0)
    return (10.0 * beta_mean / _LOG10) ** 2 * var


def assimilate(mean, cov, dist, weights, z, probs, sigma: float):
    """Mixture Kalman update collapsed to a single Gaussian.

    ``z`` are the J candidate RSS values, ``probs`` (J+1,) their association
    probabilities with column 0 for "no measurement"; ``dist`` and
    ``weights`` describe the pair distances and their weights.
    """
    probs = np.clip(np.asarray(probs, float), 0.0, None)
    total = probs.sum()
    if total <= 0.0 or not np.any(probs[1:] > 0.0):
        return mean, cov
    probs = probs / total
    d_hat = math.exp(float(weights @ np.log(np.maximum(dist, _MIN_DIST))))
    h = design(d_hat)
    r = sigma ** 2 + _range_spread(dist, weights, float(mean[1]))
    ph = cov @ h
    s = float(h @ ph) + r
    gain = ph / s
    cov_post = cov - np.outer(gain, ph)
    innov = np.asarray(z, float) - float(h @ mean)
    means = mean[None, :] + innov[:, None] * gain[None, :]
    mix_mean = probs[0] * mean + probs[1:] @ means
    spread = probs[0] * np.outer(mean - mix_mean, mean - mix_mean)
    dev = means - mix_mean
    spread = spread + np.einsum("j,ji,jk->ik", probs[1:], dev, dev)
    mix_cov = probs[0] * cov + (1.0 - probs[0]) * cov_post + spread
    return mix_mean, 0.5 * (mix_cov + mix_cov.T)
