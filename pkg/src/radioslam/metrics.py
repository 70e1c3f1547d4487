"""Trajectory, mapping and bias error metrics."""
from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


class AlignmentError(ValueError):
    pass


def position_errors(est_xy, true_xy) -> np.ndarray:
    """Euclidean errors; inputs (..., 2)."""
    d = np.asarray(est_xy, float) - np.asarray(true_xy, float)
    return np.hypot(d[..., 0], d[..., 1])


def mae_trajectory(est_xy, true_xy) -> tuple[np.ndarray, float]:
    """Per-slot MAE over runs and its maximum.

    Inputs are (runs, slots, 2); NaN rows (inactive slots, failed runs) are
    ignored in the mean.
    """
    err = position_errors(est_xy, true_xy)
    if err.ndim == 1:
        err = err[None, :]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN slots
        per_slot = np.nanmean(err, axis=0) if err.size else np.zeros(0)
    finite = per_slot[np.isfinite(per_slot)]
    return per_slot, float(finite.max()) if finite.size else float("nan")


def ospa(est, truth, cutoff: float = 10.0, order: float = 1.0) -> float:
    """Optimal sub-pattern assignment distance between two 2-D point sets."""
    if cutoff <= 0 or order < 1:
        raise ValueError("cutoff must be positive and order >= 1")
    x = np.asarray(est, float).reshape(-1, 2)
    y = np.asarray(truth, float).reshape(-1, 2)
    m, n = len(x), len(y)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return float(cutoff)
    if m > n:
        x, y, m, n = y, x, n, m
    d = np.minimum(np.hypot(x[:, None, 0] - y[None, :, 0], x[:, None, 1] - y[None, :, 1]), cutoff) ** order
    rows, cols = linear_sum_assignment(d)
    total = d[rows, cols].sum() + cutoff ** order * (n - m)
    return float((total / n) ** (1.0 / order))


def mospa(est_sets: Sequence, truth_sets: Sequence, cutoff: float = 10.0, order: float = 1.0) -> float:
    """Mean OSPA over paired (estimate, truth) sets, e.g. Monte Carlo runs."""
    if len(est_sets) != len(truth_sets):
        raise ValueError("estimate and truth collections differ in length")
    if not est_sets:
        return float("nan")
    return float(np.mean([ospa(e, t, cutoff, order) for e, t in zip(est_sets, truth_sets)]))


def _wrap(x):
    return x - 2.0 * math.pi * np.ceil((x - math.pi) / (2.0 * math.pi))


def bias_errors(alpha_hat, alpha_true, omega_hat, omega_true):
    """Per-slot mean absolute orientation (OBE) and clock (CBE) errors.

    alpha arrays are (runs, slots); omega arrays (runs, slots, anchors), CBE
    averaging over runs and anchors. The OBE residual is wrapped to (-pi, pi].
    """
    da = np.atleast_2d(np.asarray(alpha_hat, float) - np.asarray(alpha_true, float))
    dw = np.asarray(omega_hat, float) - np.asarray(omega_true, float)
    if dw.ndim == 2:
        dw = dw[None]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        obe = np.nanmean(np.abs(_wrap(da)), axis=0)
        cbe = np.nanmean(np.abs(dw), axis=(0, 2))
    return obe, cbe


def rss_parameter_errors(est, truth):
    """Mean absolute (xi, beta) errors over matched feature pairs; inputs (k, 2)."""
    e = np.asarray(est, float).reshape(-1, 2)
    t = np.asarray(truth, float).reshape(-1, 2)
    if len(e) == 0:
        return float("nan"), float("nan")
    d = np.abs(e - t).mean(axis=0)
    return float(d[0]), float(d[1])


def similarity_align(est, truth):
    """Least-squares similarity (Umeyama): truth ~ s R est + t.

    Returns (aligned estimate, s, R, t).
    """
    x = np.asarray(est, float).reshape(-1, 2)
    y = np.asarray(truth, float).reshape(-1, 2)
    if len(x) != len(y) or len(x) < 2:
        raise AlignmentError("need at least two corresponding points")
    mx, my = x.mean(0), y.mean(0)
    xc, yc = x - mx, y - my
    var_x = (xc ** 2).sum() / len(x)
    if var_x <= 1e-24:
        raise AlignmentError("alignment undefined for coincident points")
    cov = yc.T @ xc / len(x)
    u, d, vt = np.linalg.svd(cov)
    s_mat = np.eye(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_mat[1, 1] = -1.0
    rot = u @ s_mat @ vt
    scale = float(np.trace(np.diag(d) @ s_mat) / var_x)
    t = my - scale * rot @ mx
    return (scale * (rot @ x.T)).T + t, scale, rot, t


def convergence_time(trace, tol: float):
    """First 1-based slot after which the error stays below ``tol``; None if never."""
    e = np.asarray(trace, float)
    if e.size == 0:
        return None
    bad = np.nonzero(~(e < tol))[0]
    if bad.size == 0:
        return 1
    last = int(bad[-1])
    return None if last == e.size - 1 else last + 2
