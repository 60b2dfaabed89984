import numpy as np
import pytest

from corectron import _kernels


needs_numba = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba unavailable")


def test_active_backend_exposed():
    assert _kernels.BACKEND in ("numba", "numpy")
    assert set(_kernels.IMPLEMENTATIONS) >= {"numpy"}


@needs_numba
def test_sm_update_backends_agree():
    rng = np.random.default_rng(0)
    for _ in range(10):
        d = rng.integers(1, 12)
        base = rng.standard_normal((d, d))
        inv = base.dot(base.T) + d * np.eye(d)
        inv = np.linalg.inv(inv)
        inv = 0.5 * (inv + inv.T)
        g = rng.standard_normal(d)
        a, b = inv.copy(), inv.copy()
        lev_np = _kernels.IMPLEMENTATIONS["numpy"]["sm_update"](a, g)
        lev_nb = _kernels.IMPLEMENTATIONS["numba"]["sm_update"](b, g)
        assert lev_np == pytest.approx(lev_nb, rel=1e-12)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@needs_numba
def test_solve_backends_agree():
    rng = np.random.default_rng(1)
    for _ in range(10):
        t = int(rng.integers(1, 20))
        raw = rng.standard_normal((t, t))
        L = np.linalg.cholesky(raw.dot(raw.T) + t * np.eye(t))
        b = rng.standard_normal(t)
        for name in ("forward_solve", "backward_solve", "spd_solve"):
            x_np = _kernels.IMPLEMENTATIONS["numpy"][name](L, b)
            x_nb = _kernels.IMPLEMENTATIONS["numba"][name](L, b)
            np.testing.assert_allclose(x_np, x_nb, rtol=1e-10, atol=1e-12)


def test_warmup_idempotent():
    _kernels.warmup()
    _kernels.warmup()
