"""Loopy sum-product data association and the association prior coefficient."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .beliefs import SlamParams


class ContractViolation(ValueError):
    pass


@dataclass
class AssociationMarginals:
    """Approximate association posteriors for one anchor.

    ``legacy`` is (K, J+1): column 0 is "not detected", column j the j-th
    measurement. ``new`` and ``false`` split each measurement's unclaimed
    mass. ``to_legacy`` holds messages measurement j -> feature k and
    ``to_measurement`` feature k -> measurement j, both (K, J).
    """

    legacy: np.ndarray
    new: np.ndarray
    false: np.ndarray
    to_legacy: np.ndarray
    to_measurement: np.ndarray
    claimed: np.ndarray
    converged: bool
    iterations: int

    def measurement_marginals(self) -> np.ndarray:
        """(J, K+1) posterior of each measurement's source: column 0 = new or false."""
        return np.hstack([(self.new + self.false)[:, None], self.claimed])


def associate(beta: np.ndarray, lam: np.ndarray, max_iters: int = 50, tol: float = 1e-6) -> AssociationMarginals:
    """Iterative message passing between feature- and measurement-oriented
    association variables.

    beta (K, J+1): particle-averaged legacy evidence, column 0 for a = 0.
    lam (J,): new-feature evidence per measurement (false alarm has weight 1).
    """
    beta = np.asarray(beta, float)
    lam = np.asarray(lam, float)
    K = beta.shape[0]
    J = lam.shape[0]
    if beta.ndim != 2 or beta.shape[1] != J + 1:
        raise ContractViolation("beta must be (K, J+1) matching lam")
    if np.any(beta < 0) or np.any(lam < 0):
        raise ContractViolation("evidence must be non-negative")
    xi = 1.0 + lam
    if K == 0 or J == 0:
        legacy = np.zeros((K, J + 1))
        legacy[:, 0] = 1.0
        return AssociationMarginals(legacy, lam / xi, 1.0 / xi, np.ones((K, J)), np.zeros((K, J)),
                                    np.zeros((J, K)), True, 0)

    if np.any(beta[:, 0] <= 0):
        raise ContractViolation("missed-detection evidence must be positive")
    ratio = beta[:, 1:] / beta[:, :1]
    nu = np.ones((K, J))
    phi = np.zeros((K, J))
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        prod = ratio * nu
        phi = ratio / (1.0 + prod.sum(axis=1, keepdims=True) - prod)
        nu_new = 1.0 / (xi[None, :] + phi.sum(axis=0, keepdims=True) - phi)
        delta = float(np.max(np.abs(nu_new - nu)))
        nu = nu_new
        if delta < tol:
            converged = True
            break

    prod = ratio * nu
    row = 1.0 + prod.sum(axis=1, keepdims=True)
    legacy = np.hstack([1.0 / row, prod / row])
    col = xi + phi.sum(axis=0)
    return AssociationMarginals(legacy, lam / col, 1.0 / col, nu, phi, (phi / col[None, :]).T, converged, it)


def da_prior_coefficient(a: Sequence[int], counts: tuple[int, int, int, int], params: SlamParams) -> float:
    """Prior mass of a feature-oriented association with the given counts.

    counts = (measurements, detected legacy, new, false). ``a[k]`` is the
    measurement index (1-based) of legacy feature k or 0.
    """
    n_meas, n_det, n_new, n_false = (int(c) for c in counts)
    if min(n_meas, n_det, n_new, n_false) < 0 or n_meas != n_det + n_new + n_false:
        raise ContractViolation("counts must satisfy |M| = |D| + |N| + |F|")
    a = [int(x) for x in a]
    used = [x for x in a if x != 0]
    if len(used) != n_det:
        raise ContractViolation("|D| must equal the number of non-zero entries of a")
    if len(set(used)) != len(used) or any(x < 0 or x > n_meas for x in a):
        raise ContractViolation("a must be an injective map into 1..|M|")
    pd, mu_n, mu_f = params.p_detect, params.mu_new, params.mu_false
    n_miss = len(a) - n_det
    return (pd ** n_det * (1.0 - pd) ** n_miss * math.exp(-mu_n - mu_f)
            * mu_n ** n_new * mu_f ** n_false / math.factorial(n_meas))
