"""Legacy (g) and new-feature (h) factors, plus the birth proposal.

New features are born by inverting a measurement around each agent particle.
The proposal density is divided out again, so the importance weights target
the uniform-over-ROI birth density times the measurement likelihood.
"""
from __future__ import annotations

import math

import numpy as np

from ..measurement import SPEED_OF_LIGHT, Category, false_alarm_density, log_likelihood
from .beliefs import Priors, SlamParams

_LOG10 = math.log(10.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def filter_sigmas(params: SlamParams) -> tuple[float, float, float]:
    return (params.sigma_aoa, params.sigma_toa, params.sigma_rss)


def clutter_density(params: SlamParams, enabled) -> float:
    return false_alarm_density(enabled, params.roi_radius, params.rss_support)


def _in_roi(xy, params: SlamParams):
    cx, cy = params.roi_center
    return np.hypot(xy[..., 0] - cx, xy[..., 1] - cy) <= params.roi_radius


def legacy_factor_g(u, alpha, omega, feature, exists: bool, assoc: int, z, params: SlamParams, enabled) -> float:
    """Scalar legacy factor for one agent/feature particle pair.

    ``feature`` is (x, y, xi, beta); ``z`` the measurement row selected by
    ``assoc`` (ignored when assoc == 0).
    """
    if not exists:
        return 1.0
    if assoc == 0:
        return 1.0 - params.p_detect
    f = np.exp(log_likelihood(np.asarray(z, float), np.asarray(u, float)[:2], alpha, omega,
                              np.asarray(feature, float)[:2], feature[2], feature[3],
                              filter_sigmas(params), enabled))
    return float(params.p_detect * f / (params.mu_false * clutter_density(params, enabled)))


def birth_density(feature, params: SlamParams, priors: Priors, enabled) -> float:
    """Uniform over the ROI disc (times the RSS-parameter prior when RSS is on)."""
    xy = np.asarray(feature[:2], float)
    if not _in_roi(xy, params):
        return 0.0
    dens = 1.0 / params.roi_area
    if Category.RSS in enabled:
        for val, (lo, hi) in ((feature[2], priors.xi), (feature[3], priors.beta)):
            if hi > lo:
                if not lo <= val <= hi:
                    return 0.0
                dens /= hi - lo
    return dens


def new_factor_h(u, alpha, omega, feature, exists: bool, assoc: int, z, params: SlamParams, priors: Priors, enabled) -> float:
    """Scalar new-feature factor; ``assoc`` is the legacy index claiming z (0 = none)."""
    if not exists:
        return 1.0
    if assoc != 0:
        return 0.0
    f = np.exp(log_likelihood(np.asarray(z, float), np.asarray(u, float)[:2], alpha, omega,
                              np.asarray(feature, float)[:2], feature[2], feature[3],
                              filter_sigmas(params), enabled))
    fn = birth_density(feature, params, priors, enabled)
    return float(params.mu_new * fn * f / (params.mu_false * clutter_density(params, enabled)))


def _log_normal(x, sd):
    return -0.5 * (x / sd) ** 2 - math.log(sd) - _LOG_SQRT_2PI


def sample_birth(z, pos, alpha, omega, params: SlamParams, priors: Priors, enabled, rng: np.random.Generator):
    """Birth particles [x, y, xi, beta] paired with agent particles and their
    log importance weights log(f_new * f(z|.) / q).

    The number of particles equals ``len(pos)``; ``omega`` is the clock-bias
    column of the measured anchor.
    """
    n = pos.shape[0]
    sa, st, sr = filter_sigmas(params)
    xi = rng.uniform(*priors.xi, n)
    beta = rng.uniform(*priors.beta, n)
    e_phi = rng.standard_normal(n)
    e_rho = rng.standard_normal(n)
    log_q = np.zeros(n)

    if Category.AOA in enabled:
        phi = z[0] - alpha + sa * e_phi
        log_q += _log_normal(sa * e_phi, sa)
    else:
        phi = rng.uniform(-math.pi, math.pi, n)
        log_q -= math.log(2.0 * math.pi)

    if Category.TOA in enabled:
        rho = SPEED_OF_LIGHT * z[1] + omega + st * e_rho
        log_q += _log_normal(st * e_rho, st)
    elif Category.RSS in enabled:
        r_obs = z[2] + sr * e_rho
        rho = 10.0 ** ((xi - r_obs) / (10.0 * beta))
        log_q += _log_normal(sr * e_rho, sr) + np.log(10.0 * beta / _LOG10) - np.log(rho)
    else:
        rho_max = 2.0 * params.roi_radius
        rho = rho_max * rng.random(n)
        log_q -= math.log(rho_max)

    valid = rho > 0
    rho_safe = np.where(valid, rho, 1.0)
    xy = np.column_stack([pos[:, 0] + rho_safe * np.cos(phi), pos[:, 1] + rho_safe * np.sin(phi)])
    parts = np.column_stack([xy, xi, beta])
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = log_likelihood(np.asarray(z, float), pos, alpha, omega, xy, xi, beta, (sa, st, sr), enabled)
        log_w = ll - log_q + np.log(rho_safe) - math.log(params.roi_area)
    ok = valid & _in_roi(xy, params) & np.isfinite(log_w)
    log_w = np.where(ok, log_w, -np.inf)
    return parts, log_w


def birth_evidence(log_w, agent_w, params: SlamParams, enabled) -> float:
    """Particle estimate of the new-feature evidence for one measurement."""
    if not np.any(np.isfinite(log_w)):
        return 0.0
    top = np.max(log_w)
    mean_w = float(np.sum(agent_w * np.exp(log_w - top)) / np.sum(agent_w))
    log_lam = math.log(params.mu_new) - math.log(params.mu_false * clutter_density(params, enabled)) + top
    return mean_w * math.exp(min(log_lam, 700.0))
