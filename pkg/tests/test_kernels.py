"""The numba and numpy kernel backends must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from aeinfo import kernels
from aeinfo.linalg import Rng


def test_backend_lookup():
    assert kernels.get("jacobi", "numpy") is kernels._jacobi_np
    with pytest.raises(ValueError, match="unknown backend"):
        kernels.get("jacobi", "cuda")


@pytest.mark.parametrize("shape", [(2, 1), (17, 3), (60, 784)])
def test_sqdist_backends_agree_with_loop_oracle(shape):
    x = Rng(0).normal(shape)
    ref = np.array([[np.sum((a - b) ** 2) for b in x] for a in x])
    for backend in kernels.BACKENDS:
        d = kernels.get("sqdist", backend)(x)
        np.testing.assert_allclose(d, ref, rtol=1e-12, atol=1e-12)
        assert np.all(np.diag(d) == 0.0)
        np.testing.assert_array_equal(d, d.T)


def test_jacobi_backends_agree():
    a = Rng(2).normal((30, 30))
    a = a @ a.T
    out = {b: kernels.get("jacobi", b)(a.copy(), 1e-12, 100, True) for b in kernels.BACKENDS}
    w_nb, w_np = (np.sort(out[b][0]) for b in kernels.BACKENDS)
    np.testing.assert_allclose(w_nb, w_np, rtol=1e-10, atol=1e-10 * np.abs(w_nb).max())
    for b in kernels.BACKENDS:
        w, v, sweeps, off = out[b]
        assert sweeps <= 100
        assert off < 1e-12 * np.linalg.norm(a)
        np.testing.assert_allclose(v @ np.diag(w) @ v.T, a, atol=1e-9 * np.linalg.norm(a))


def test_jacobi_does_not_modify_input():
    a = Rng(3).normal((8, 8))
    a = a + a.T
    keep = a.copy()
    for b in kernels.BACKENDS:
        kernels.get("jacobi", b)(a, 1e-12, 100, False)
        np.testing.assert_array_equal(a, keep)


def test_sturm_backends_agree():
    a = Rng(4).normal((45, 45))
    a = a + a.T
    ref = np.sort(np.linalg.eigvalsh(a))
    for b in kernels.BACKENDS:
        np.testing.assert_allclose(np.sort(kernels.get("eigvalsh", b)(a.copy())), ref, atol=1e-11)


def test_tridiagonalize_preserves_spectrum():
    a = Rng(5).normal((12, 12))
    a = a + a.T
    for tri in (kernels._tridiagonalize_nb, kernels._tridiagonalize_np):
        d, e = tri(a.copy())
        t = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
        np.testing.assert_allclose(np.linalg.eigvalsh(t), np.linalg.eigvalsh(a), atol=1e-12)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, AEINFO_DISABLE_NUMBA="1")
    code = "from aeinfo._accel import default_backend; print(default_backend())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
