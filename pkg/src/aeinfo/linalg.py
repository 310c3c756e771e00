"""Dense float64 linear algebra and seeded sampling used across the package.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64.
"""
import math

import numpy as np

from . import kernels

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
SYMMETRY_TOL = 1e-10


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def as_matrix(a, name="matrix"):
    """Validate and return ``a`` as a finite 2-D float64 array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def matmul(a, b):
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def hadamard(a, b):
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def _check_symmetric(a):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    asym = float(np.abs(a - a.T).max(initial=0.0))
    if asym > SYMMETRY_TOL * scale:
        raise ValueError(f"matrix is not symmetric (max |a - a.T| = {asym:.3e})")
    return 0.5 * (a + a.T)


def sym_eig(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS, backend=None):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, v)`` with eigenvalues ``w`` sorted descending and the matching
    orthonormal eigenvectors in the columns of ``v``.
    """
    a = _check_symmetric(a)
    w, v, _, off = kernels.get("jacobi", backend)(a, tol, max_sweeps, True)
    _check_converged(a, off, tol)
    order = np.argsort(w, kind="stable")[::-1]
    return w[order], v[:, order]


def sym_eigvals(a, method="jacobi", tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS,
                backend=None):
    """Eigenvalues (descending) of a symmetric matrix.

    ``method="jacobi"`` runs the rotation solver without accumulating vectors;
    ``method="sturm"`` reduces to tridiagonal form and bisects on Sturm counts,
    which is much cheaper for N in the thousands.
    """
    a = _check_symmetric(a)
    if method == "jacobi":
        w, _, _, off = kernels.get("jacobi", backend)(a, tol, max_sweeps, False)
        _check_converged(a, off, tol)
    elif method == "sturm":
        w = kernels.get("eigvalsh", backend)(a)
    else:
        raise ValueError(f"unknown eigenvalue method {method!r}")
    return np.sort(w)[::-1]


def _check_converged(a, off, tol):
    fro = float(np.linalg.norm(a))
    if off >= tol * fro and fro > 0.0:
        raise ConvergenceError(
            f"Jacobi did not converge: max off-diagonal {off:.3e} "
            f"> {tol:.0e} * ||A||_F ({fro:.3e})", residual=off)


class Rng:
    """Seeded random stream.

    Uniform draws come from numpy's PCG64 bit generator, which yields the same
    doubles on every platform for a given seed; normals are built from those
    uniforms by Box-Muller so they inherit the same guarantee.
    """

    def __init__(self, seed):
        self.seed = seed
        self._seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def child(self, *key):
        """Independent stream derived from this one's seed and an integer key."""
        entropy = self._seq.entropy
        spawn_key = tuple(self._seq.spawn_key) + tuple(int(k) for k in key)
        return Rng(np.random.SeedSequence(entropy, spawn_key=spawn_key))

    def uniform(self, shape, lo=0.0, hi=1.0):
        if not lo < hi:
            raise ValueError(f"uniform bounds need lo < hi, got ({lo}, {hi})")
        return lo + (hi - lo) * self._gen.random(shape)

    def normal(self, shape):
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = math.prod(shape)
        half = (n + 1) // 2
        u1 = 1.0 - self._gen.random(half)  # (0, 1], keeps log finite
        u2 = self._gen.random(half)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * half)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:n].reshape(shape)

    def permutation(self, n):
        return self._gen.permutation(n)


def sample(rng, distribution, shape, lo=0.0, hi=1.0):
    """Draw an i.i.d. matrix from ``"normal"`` or ``"uniform"`` (on [lo, hi))."""
    if distribution in ("normal", "standard-normal"):
        return rng.normal(shape)
    if distribution == "uniform":
        return rng.uniform(shape, lo, hi)
    raise ValueError(f"unknown distribution {distribution!r}")
