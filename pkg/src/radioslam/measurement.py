"""Biased AOA / TOA / RSS measurement models, batch synthesis and likelihoods.

A measurement is a row ``[aoa, toa, rss]`` (rad, s, dBm); columns of disabled
categories hold NaN. Batches are keyed by anchor and carry no origin labels.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .geometry import FeatureTruth, Point2, as_point

SPEED_OF_LIGHT = 299_792_458.0
TWO_PI = 2.0 * math.pi
LOG_SQRT_2PI = 0.5 * math.log(TWO_PI)


class Category(enum.Enum):
    AOA = 0
    TOA = 1
    RSS = 2

    @classmethod
    def parse(cls, names: Iterable[str]) -> frozenset["Category"]:
        out = frozenset(cls[n.strip().upper()] for n in names)
        if not out:
            raise ValueError("at least one measurement category must be enabled")
        return out


ALL_CATEGORIES = frozenset(Category)


class GeometryError(ValueError):
    """Raised when a model is evaluated at a singular point."""


@dataclass(frozen=True)
class NoiseConfig:
    """Noise, detection and clutter settings used to synthesize measurements.

    ``sigma_toa`` is a range-domain standard deviation in metres; it is divided
    by the speed of light when applied to TOA values.
    """

    sigma_aoa: float = math.radians(1.0)
    sigma_toa: float = 0.15
    sigma_rss: float = 2.5
    p_detect: float = 0.95
    mu_false: float = 1.0
    rss_support: tuple[float, float] = (-120.0, -20.0)

    def __post_init__(self):
        if min(self.sigma_aoa, self.sigma_toa, self.sigma_rss) < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if not 0.0 < self.p_detect <= 1.0:
            raise ValueError("p_detect must lie in (0, 1]")
        if self.mu_false < 0:
            raise ValueError("mu_false must be non-negative")
        lo, hi = self.rss_support
        if not hi > lo:
            raise ValueError("rss_support must be an increasing interval")


@dataclass
class BiasTruth:
    """Per-agent measurement biases.

    ``omega`` maps anchor -> clock bias in metres; ``rss`` maps
    (anchor, feature index) -> (xi dBm, beta).
    """

    alpha: float = 0.0
    omega: dict[int, float] = field(default_factory=dict)
    rss: dict[tuple[int, int], tuple[float, float]] = field(default_factory=dict)


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    return x - TWO_PI * np.ceil((x - math.pi) / TWO_PI)


def aoa_of(u, p, alpha: float = 0.0) -> float:
    u, p = as_point(u), as_point(p)
    dx, dy = p.x - u.x, p.y - u.y
    if dx == 0.0 and dy == 0.0:
        raise GeometryError("bearing undefined for coincident points")
    return float(wrap_angle(math.atan2(dy, dx) + alpha))


def toa_of(u, p, omega: float = 0.0) -> float:
    u, p = as_point(u), as_point(p)
    return (u.distance(p) - omega) / SPEED_OF_LIGHT


def rss_of(u, p, xi: float, beta: float) -> float:
    u, p = as_point(u), as_point(p)
    d = u.distance(p)
    if d <= 0.0:
        raise GeometryError("path loss is singular at zero distance")
    return -10.0 * beta * math.log10(d) + xi


def false_alarm_support(roi_radius: float, rss_support=(-120.0, -20.0)) -> dict[Category, tuple[float, float]]:
    return {
        Category.AOA: (-math.pi, math.pi),
        Category.TOA: (0.0, 2.0 * roi_radius / SPEED_OF_LIGHT),
        Category.RSS: tuple(rss_support),
    }


def false_alarm_density(enabled: frozenset[Category], roi_radius: float, rss_support=(-120.0, -20.0)) -> float:
    """Uniform clutter density over the enabled categories (product form)."""
    support = false_alarm_support(roi_radius, rss_support)
    dens = 1.0
    for c in enabled:
        lo, hi = support[c]
        dens /= hi - lo
    return dens


def _log_normal(resid, sigma):
    return -0.5 * (resid / sigma) ** 2 - math.log(sigma) - LOG_SQRT_2PI


def log_likelihood(z, u, alpha, omega, p, xi, beta, sigmas: tuple[float, float, float], enabled: frozenset[Category]):
    """Log measurement density; broadcasts over particle arrays.

    ``u`` and ``p`` are (..., 2) arrays, ``z`` a length-3 row. ``sigmas`` are
    (rad, metres, dB); the TOA density is per second.
    """
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    dx = p[..., 0] - u[..., 0]
    dy = p[..., 1] - u[..., 1]
    dist = np.hypot(dx, dy)
    out = np.zeros(np.broadcast(dist, np.asarray(alpha), np.asarray(omega)).shape)
    sa, st, sr = sigmas
    if Category.AOA in enabled:
        resid = wrap_angle(z[0] - (np.arctan2(dy, dx) + alpha))
        out = out + _log_normal(resid, sa)
    if Category.TOA in enabled:
        st_s = st / SPEED_OF_LIGHT
        out = out + _log_normal(z[1] - (dist - omega) / SPEED_OF_LIGHT, st_s)
    if Category.RSS in enabled:
        with np.errstate(divide="ignore"):
            model = -10.0 * beta * np.log10(dist) + xi
        out = out + _log_normal(z[2] - model, sr)
    return out


def likelihood(z, u, alpha, omega, p, xi, beta, sigmas, enabled):
    """Product of per-category Gaussian densities at the biased model values."""
    return np.exp(log_likelihood(z, u, alpha, omega, p, xi, beta, sigmas, enabled))


@dataclass
class MeasurementBatch:
    """Unlabelled measurements of one agent at one slot, keyed by anchor."""

    slot: int
    rows: dict[int, np.ndarray]

    def count(self, anchor: int) -> int:
        return len(self.rows.get(anchor, ()))


def model_row(agent: Point2, feature: FeatureTruth, biases: BiasTruth) -> np.ndarray:
    m, l = feature.anchor, feature.index
    xi, beta = biases.rss.get((m, l), (-35.0, 3.0))
    return np.array([
        aoa_of(agent, feature.position, biases.alpha),
        toa_of(agent, feature.position, biases.omega.get(m, 0.0)),
        rss_of(agent, feature.position, xi, beta),
    ])


def synthesize_batch(
    visible: Mapping[int, Iterable[FeatureTruth]],
    agent: Point2,
    biases: BiasTruth,
    cfg: NoiseConfig,
    enabled: frozenset[Category],
    rng: np.random.Generator,
    slot: int = 1,
    roi_radius: float = 40.0,
) -> MeasurementBatch:
    """Detect each visible feature w.p. ``p_detect``, add Gaussian noise,
    append Poisson clutter and shuffle. Disabled columns are NaN."""
    agent = as_point(agent)
    support = false_alarm_support(roi_radius, cfg.rss_support)
    noise_sd = np.array([cfg.sigma_aoa, cfg.sigma_toa / SPEED_OF_LIGHT, cfg.sigma_rss])
    mask = np.array([c in enabled for c in Category])
    rows: dict[int, np.ndarray] = {}
    for m in sorted(visible):
        out = []
        for f in visible[m]:
            if rng.random() >= cfg.p_detect:
                continue
            row = model_row(agent, f, biases) + noise_sd * rng.standard_normal(3)
            row[0] = wrap_angle(row[0])
            out.append(row)
        n_false = rng.poisson(cfg.mu_false) if cfg.mu_false > 0 else 0
        for _ in range(n_false):
            out.append(np.array([rng.uniform(*support[c]) for c in Category]))
        arr = np.array(out, dtype=float).reshape(-1, 3)
        arr = arr[rng.permutation(len(arr))]
        arr[:, ~mask] = np.nan
        rows[m] = arr
    return MeasurementBatch(slot, rows)
