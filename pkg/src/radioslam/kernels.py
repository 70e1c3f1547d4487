"""Hot particle kernels, using the compiled extension when it is importable.

Set ``RADIOSLAM_PURE_PYTHON=1`` to force the numpy implementation.
"""
import os

import numpy as np

from . import _core_py
from ._core_py import AOA_BIT, RSS_BIT, TOA_BIT

_compiled = None
if os.environ.get("RADIOSLAM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"
_impl = _compiled if _compiled is not None else _core_py

__all__ = ["AOA_BIT", "TOA_BIT", "RSS_BIT", "BACKEND", "legacy_factors", "systematic_indices", "gather_slide"]


def legacy_factors(pos, alpha, omega, feats, meas, flags, sa, st, sr, log_scale):
    return _impl.legacy_factors(
        np.ascontiguousarray(pos, dtype=float),
        np.ascontiguousarray(alpha, dtype=float),
        np.ascontiguousarray(omega, dtype=float),
        np.ascontiguousarray(feats, dtype=float),
        np.ascontiguousarray(meas, dtype=float),
        int(flags), float(sa), float(st), float(sr), float(log_scale),
    )


def systematic_indices(weights, u0):
    return np.asarray(_impl.systematic_indices(np.ascontiguousarray(weights, dtype=float), float(u0)))


def gather_slide(parts, anc, kin, push=None):
    """Re-index feature particles by ancestors, optionally pushing positions
    radially away from the (already re-indexed) agent particles."""
    push = np.zeros(0) if push is None else np.ascontiguousarray(push, dtype=float)
    return _impl.gather_slide(
        np.ascontiguousarray(parts, dtype=float),
        np.ascontiguousarray(anc, dtype=np.intp),
        np.ascontiguousarray(kin, dtype=float),
        push,
    )
