import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from radioslam import _core_py, kernels
from radioslam.kernels import AOA_BIT, RSS_BIT, TOA_BIT

try:
    from radioslam import _core
except ImportError:  # pragma: no cover
    _core = None

needs_ext = pytest.mark.skipif(_core is None, reason="compiled extension not built")


def _inputs(rng, n=257, K=3, J=4):
    pos = rng.uniform(-5, 5, (n, 2))
    alpha = rng.uniform(-0.5, 0.5, n)
    omega = rng.uniform(0, 5, n)
    feats = np.empty((K, n, 4))
    feats[..., :2] = rng.uniform(-10, 10, (K, n, 2))
    feats[..., 2] = rng.uniform(-45, -25, (K, n))
    feats[..., 3] = rng.uniform(2, 5, (K, n))
    meas = np.column_stack([rng.uniform(-math.pi, math.pi, J), rng.uniform(0, 15, J), rng.uniform(-90, -40, J)])
    return pos, alpha, omega, feats, meas


def scalar_factor(p, a, w, f, z, flags, sa, st_, sr, log_scale):
    dx, dy = f[0] - p[0], f[1] - p[1]
    d = math.hypot(dx, dy)
    acc, base = 0.0, log_scale
    if flags & AOA_BIT:
        r = (z[0] - math.atan2(dy, dx) - a + math.pi) % (2 * math.pi) - math.pi
        acc += (r / sa) ** 2
        base -= math.log(sa * math.sqrt(2 * math.pi))
    if flags & TOA_BIT:
        acc += ((z[1] - (d - w)) / st_) ** 2
        base -= math.log(st_ * math.sqrt(2 * math.pi))
    if flags & RSS_BIT:
        acc += ((z[2] - (f[2] - 10 * f[3] * math.log10(d))) / sr) ** 2
        base -= math.log(sr * math.sqrt(2 * math.pi))
    return 0.0 if acc > 144 else math.exp(base - 0.5 * acc)


@pytest.mark.parametrize("flags", [AOA_BIT, TOA_BIT, AOA_BIT | TOA_BIT, AOA_BIT | TOA_BIT | RSS_BIT])
def test_numpy_factors_match_scalar_oracle(flags):
    rng = np.random.default_rng(flags)
    pos, alpha, omega, feats, meas = _inputs(rng, n=40, K=2, J=3)
    sig = (0.5, 3.0, 8.0)  # wide so most entries are non-zero
    g = _core_py.legacy_factors(pos, alpha, omega, feats, meas, flags, *sig, 0.7)
    for k in range(2):
        for j in range(3):
            for i in range(40):
                want = scalar_factor(pos[i], alpha[i], omega[i], feats[k, i], meas[j], flags, *sig, 0.7)
                assert g[k, j, i] == pytest.approx(want, rel=1e-10, abs=1e-300)


@needs_ext
@pytest.mark.parametrize("flags", [AOA_BIT, TOA_BIT | RSS_BIT, AOA_BIT | TOA_BIT | RSS_BIT])
def test_compiled_factors_match_numpy(flags):
    rng = np.random.default_rng(10 + flags)
    args = _inputs(rng)
    a = _core_py.legacy_factors(*args, flags, 0.3, 2.0, 6.0, -1.0)
    b = np.asarray(_core.legacy_factors(*args, flags, 0.3, 2.0, 6.0, -1.0))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-300)


def test_empty_factor_shapes():
    rng = np.random.default_rng(0)
    pos, alpha, omega, feats, meas = _inputs(rng, n=5)
    assert kernels.legacy_factors(pos, alpha, omega, feats[:0], meas, AOA_BIT, 1, 1, 1, 0).shape == (0, 4, 5)
    assert kernels.legacy_factors(pos, alpha, omega, feats, meas[:0], AOA_BIT, 1, 1, 1, 0).shape == (3, 0, 5)


def systematic_oracle(w, u0):
    n = len(w)
    out, c, i = [], w[0], 0
    for m in range(n):
        u = (u0 + m) / n
        while u >= c and i < n - 1:
            i += 1
            c += w[i]
        out.append(i)
    return np.array(out)


weights = arrays(float, st.integers(1, 60), elements=st.floats(0, 1)).filter(lambda w: w.sum() > 1e-6)


@settings(max_examples=200, deadline=None)
@given(weights, st.floats(0, 1, exclude_max=True))
def test_systematic_indices_match_oracle(w, u0):
    w = w / w.sum()
    got = kernels.systematic_indices(w, u0)
    assert np.array_equal(got, systematic_oracle(w, u0))
    assert np.all(np.diff(got) >= 0)
    # each particle is copied floor(n w) or ceil(n w) times
    counts = np.bincount(got, minlength=len(w))
    assert np.all(np.abs(counts - len(w) * w) < 1 + 1e-9)


@needs_ext
@settings(max_examples=100, deadline=None)
@given(weights, st.floats(0, 1, exclude_max=True))
def test_systematic_backends_agree(w, u0):
    w = w / w.sum()
    assert np.array_equal(_core_py.systematic_indices(w, u0), np.asarray(_core.systematic_indices(w, u0)))


def test_gather_without_push_is_indexing():
    rng = np.random.default_rng(1)
    parts = rng.normal(size=(50, 4))
    anc = rng.integers(0, 50, 50)
    out = kernels.gather_slide(parts, anc, rng.normal(size=(50, 4)))
    assert np.array_equal(out, parts[anc])


def test_push_moves_radially_by_push():
    rng = np.random.default_rng(2)
    parts = rng.uniform(-10, 10, (64, 4))
    kin = rng.uniform(-1, 1, (64, 4))
    anc = np.arange(64)
    push = rng.uniform(-0.5, 0.5, 64)
    out = kernels.gather_slide(parts, anc, kin, push)
    d0 = np.hypot(*(parts[:, :2] - kin[:, :2]).T)
    d1 = np.hypot(*(out[:, :2] - kin[:, :2]).T)
    assert d1 == pytest.approx(d0 + push, abs=1e-9)
    # bearing and the non-position columns are untouched
    b0 = np.arctan2(*(parts[:, 1::-1] - kin[:, 1::-1]).T)
    b1 = np.arctan2(*(out[:, 1::-1] - kin[:, 1::-1]).T)
    assert b1 == pytest.approx(b0, abs=1e-9)
    assert np.array_equal(out[:, 2:], parts[:, 2:])


@needs_ext
def test_gather_backends_agree():
    rng = np.random.default_rng(3)
    parts = rng.normal(size=(300, 4)) * 5
    kin = rng.normal(size=(300, 4))
    anc = rng.integers(0, 300, 300)
    push = rng.normal(size=300)
    a = _core_py.gather_slide(parts.copy(), anc, kin, push)
    b = np.asarray(_core.gather_slide(parts.copy(), anc, kin, push))
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "numpy")
