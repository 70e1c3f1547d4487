"""Particle beliefs, engine parameters and prior initialisation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..measurement import NoiseConfig


class DegenerateUpdateError(RuntimeError):
    """All particle weights vanished during an update."""


@dataclass(frozen=True)
class SlamParams:
    p_detect: float = 0.95
    p_survival: float = 0.999
    mu_false: float = 1.0
    mu_new: float = 1e-4
    detection_threshold: float = 0.5
    unreliability_threshold: float = 1e-4
    n_particles: int = 20_000
    sigma_d2: float = 0.0278
    sigma_varpi2: float = 1e-8
    dt: float = 1.0
    # "isotropic": d ~ N(0, sigma_d2 I4) on [x, y, vx, vy];
    # "acceleration": d = G a with a ~ N(0, sigma_d2 I2), G = [dt^2/2 I; dt I]
    motion_noise: str = "isotropic"
    da_max_iters: int = 50
    da_tol: float = 1e-6
    # filter-side measurement model
    sigma_aoa: float = math.radians(1.0)
    sigma_toa: float = 0.15
    sigma_rss: float = 2.5
    rss_support: tuple[float, float] = (-120.0, -20.0)
    roi_center: tuple[float, float] = (0.0, 0.0)
    roi_radius: float = 40.0
    # particle hygiene
    resample_fraction: float = 0.5
    alpha_roughening: float = 1e-3
    omega_roughening: float = 0.5
    roughening_bandwidth: float = 0.3  # clock kernel width as a multiple of the posterior std
    alpha_bandwidth: float = 0.0  # same for the orientation
    birth_eval_particles: int = 1024

    def __post_init__(self):
        for name in ("detection_threshold", "unreliability_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0.0 < self.p_detect <= 1.0 or not 0.0 < self.p_survival <= 1.0:
            raise ValueError("probabilities must lie in (0, 1]")
        if self.n_particles < 1 or self.da_max_iters < 1 or self.birth_eval_particles < 1:
            raise ValueError("particle and iteration counts must be positive")
        if min(self.sigma_aoa, self.sigma_toa, self.sigma_rss) <= 0:
            raise ValueError("filter noise standard deviations must be positive")
        if self.mu_false <= 0 or self.mu_new <= 0:
            raise ValueError("mu_false and mu_new must be positive")
        if self.motion_noise not in ("isotropic", "acceleration"):
            raise ValueError("motion_noise must be 'isotropic' or 'acceleration'")
        if min(self.alpha_roughening, self.omega_roughening, self.roughening_bandwidth, self.alpha_bandwidth) < 0:
            raise ValueError("roughening widths must be non-negative")
        if self.roi_radius <= 0 or self.dt <= 0:
            raise ValueError("roi_radius and dt must be positive")

    @classmethod
    def matching(cls, noise: NoiseConfig, **kw) -> "SlamParams":
        """Parameters whose measurement model agrees with a synthesis config."""
        base = dict(
            p_detect=noise.p_detect, mu_false=max(noise.mu_false, 1e-12),
            sigma_aoa=noise.sigma_aoa, sigma_toa=noise.sigma_toa,
            sigma_rss=noise.sigma_rss, rss_support=tuple(noise.rss_support),
        )
        base.update(kw)
        return cls(**base)

    @property
    def roi_area(self) -> float:
        return math.pi * self.roi_radius ** 2

    def transition_matrix(self) -> np.ndarray:
        a = np.eye(4)
        a[0, 2] = a[1, 3] = self.dt
        return a


@dataclass(frozen=True)
class Priors:
    """Initial-state and bias priors. A (v, v) range pins the quantity at v."""

    entrance_radius: float = 0.5
    alpha: tuple[float, float] = (-0.5, 0.5)
    omega: tuple[float, float] = (0.0, 50.0)
    xi: tuple[float, float] = (-45.0, -25.0)
    beta: tuple[float, float] = (2.0, 5.0)
    velocity_mean: tuple[float, float] = (0.0, 0.0)
    velocity_sigma: float = 0.3
    # per-anchor clock point masses; when set they replace the omega range
    omega_values: tuple[float, ...] | None = None

    def __post_init__(self):
        for name in ("alpha", "omega", "xi", "beta"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"prior range {name} is reversed")
        if self.entrance_radius < 0 or self.velocity_sigma < 0:
            raise ValueError("entrance_radius and velocity_sigma must be non-negative")

    def pinned(self, alpha=0.0, omega=0.0, xi=None, beta=None) -> "Priors":
        """Point-mass bias priors. ``omega`` is one value or one per anchor."""
        xi = (self.xi[0] + self.xi[1]) / 2 if xi is None else xi
        beta = (self.beta[0] + self.beta[1]) / 2 if beta is None else beta
        values = tuple(float(w) for w in np.atleast_1d(omega))
        return replace(self, alpha=(alpha, alpha), omega=(values[0], values[0]), xi=(xi, xi), beta=(beta, beta),
                       omega_values=values if len(values) > 1 else None)


@dataclass
class AgentBelief:
    """Joint agent particles: kinematics (N,4), orientation (N,), clock (N,M)."""

    kinematics: np.ndarray
    alpha: np.ndarray
    omega: np.ndarray
    anchors: tuple[int, ...]
    weights: np.ndarray
    estimate_alpha: bool = True
    estimate_omega: bool = True

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def omega_of(self, anchor: int) -> np.ndarray:
        return self.omega[:, self.anchors.index(anchor)]

    def ess(self) -> float:
        return 1.0 / float(np.sum(self.weights ** 2))


@dataclass
class FeatureBelief:
    """One PA/VA hypothesis. ``particles`` columns are [x, y, xi, beta].

    Particle p is paired with agent particle p; ``weights`` are the pair
    weights conditional on existence. When RSS is in use the path-loss
    parameters live in ``rss_mean``/``rss_cov`` (None until first observed)
    and the particle columns 2-3 are only the birth draws.
    """

    anchor: int
    key: int
    particles: np.ndarray
    weights: np.ndarray
    existence: float
    detected: bool = False
    birth_slot: int = 0
    origin: str = "measurement"
    rss_mean: np.ndarray | None = None
    rss_cov: np.ndarray | None = None

    def position_estimate(self) -> np.ndarray:
        return self.weights @ self.particles[:, :2]


LegacySet = dict  # anchor -> list[FeatureBelief]


@dataclass
class KeyCounter:
    value: int = 0

    def next(self) -> int:
        self.value += 1
        return self.value


def sample_disc(rng: np.random.Generator, n: int, center, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    t = rng.uniform(-math.pi, math.pi, n)
    return np.column_stack([center[0] + r * np.cos(t), center[1] + r * np.sin(t)])


def init_beliefs(entrance, priors: Priors, params: SlamParams, anchors, rng: np.random.Generator):
    """Agent prior around the entrance and an empty legacy set."""
    anchors = tuple(sorted(anchors))
    n = params.n_particles
    pos = sample_disc(rng, n, tuple(entrance), priors.entrance_radius)
    vel = np.asarray(priors.velocity_mean, float) + priors.velocity_sigma * rng.standard_normal((n, 2))
    alpha = rng.uniform(*priors.alpha, n)
    if priors.omega_values is not None:
        if len(priors.omega_values) != len(anchors):
            raise ValueError("omega_values needs one entry per anchor")
        omega = np.tile(np.asarray(priors.omega_values, float), (n, 1))
    else:
        omega = rng.uniform(*priors.omega, (n, len(anchors)))
    belief = AgentBelief(
        kinematics=np.hstack([pos, vel]),
        alpha=alpha,
        omega=omega,
        anchors=anchors,
        weights=np.full(n, 1.0 / n),
        estimate_alpha=priors.alpha[1] > priors.alpha[0],
        estimate_omega=priors.omega_values is None and priors.omega[1] > priors.omega[0],
    )
    return belief, {m: [] for m in anchors}
