"""Systematic resampling."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .. import kernels
from .beliefs import AgentBelief


def effective_sample_size(weights: np.ndarray) -> float:
    return 1.0 / float(np.sum(np.square(weights)))


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Ancestor indices; a single uniform offset drives all N draws."""
    w = np.asarray(weights, float)
    w = w / w.sum()
    return kernels.systematic_indices(w, rng.random())


def resample(belief: AgentBelief, rng: np.random.Generator, fraction: float = 0.5, force: bool = False) -> AgentBelief:
    """Resample to uniform weights when ESS < fraction * N (or always if ``force``)."""
    n = belief.n
    if not force and effective_sample_size(belief.weights) >= fraction * n:
        return belief
    anc = systematic_resample(belief.weights, rng)
    return replace(
        belief,
        kinematics=belief.kinematics[anc],
        alpha=belief.alpha[anc],
        omega=belief.omega[anc],
        weights=np.full(n, 1.0 / n),
    )
