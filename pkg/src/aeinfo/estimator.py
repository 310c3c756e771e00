"""Matrix-based Renyi alpha-order entropy and mutual information.

Entropies are computed from the eigenspectrum of a unit-trace Gram matrix built
with a Gaussian kernel; all values are in bits.  A plug-in binning estimator and
the closed-form Gaussian mutual information are provided for comparison.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .linalg import as_matrix, sym_eigvals

TRACE_TOL = 1e-8
# MI at or below this many bits is eigenvalue rounding noise and reported as 0
MI_FLOOR = 1e-10


@dataclass(frozen=True)
class EstimatorConfig:
    alpha: float = 1.01
    gamma: float = 2.0
    eig_method: str = "jacobi"
    backend: str | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


class MIEstimate(NamedTuple):
    bits: float
    raw: float
    h_x: float
    h_z: float
    h_joint: float

    def __float__(self):
        return self.bits


def scott_bandwidth(gamma, n_samples, feature_dim):
    """Kernel width ``gamma * N ** (-1 / (4 + n))``."""
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    if feature_dim < 1:
        raise ValueError(f"feature dimension must be >= 1, got {feature_dim}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return gamma * n_samples ** (-1.0 / (4 + feature_dim))


def gram_matrix(samples, sigma, backend=None):
    """Unit-trace Gaussian Gram matrix of the rows of ``samples``."""
    x = as_matrix(samples, "samples")
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    k = np.exp(-kernels.get("sqdist", backend)(np.ascontiguousarray(x)) / (2.0 * sigma * sigma))
    d = np.sqrt(np.diag(k))
    return k / np.outer(d, d) / n


def _entropy_from_eigs(lam, alpha):
    lam = np.clip(lam, 0.0, None)
    if alpha == 1.0:
        nz = lam[lam > 0.0]
        s = -float(np.sum(nz * np.log2(nz)))
    else:
        s = float(np.log2(np.sum(lam ** alpha)) / (1.0 - alpha))
    return max(s, 0.0)


def renyi_entropy(a, alpha=1.01, method="jacobi", backend=None):
    """Entropy in bits of a unit-trace Gram matrix; ``alpha=1`` gives the
    Shannon-like limit ``-sum(l * log2(l))``."""
    a = as_matrix(a)
    tr = float(np.trace(a))
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValueError(f"Gram matrix must have unit trace, got {tr!r}")
    return _entropy_from_eigs(sym_eigvals(a, method=method, backend=backend), alpha)


def joint_entropy(a, b, alpha=1.01, method="jacobi", backend=None):
    a, b = as_matrix(a, "a"), as_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"Gram matrices differ in size: {a.shape} vs {b.shape}")
    ab = a * b
    tr = float(np.trace(ab))
    if not tr > 0:
        raise ValueError("trace of the Hadamard product is not positive")
    return renyi_entropy(ab / tr, alpha, method, backend)


def information_from_grams(a, b, alpha=1.01, method="jacobi", backend=None, h_a=None, h_b=None):
    """MI from two precomputed Gram matrices; cached marginal entropies may be
    passed as ``h_a``/``h_b``."""
    if h_a is None:
        h_a = renyi_entropy(a, alpha, method, backend)
    if h_b is None:
        h_b = renyi_entropy(b, alpha, method, backend)
    h_ab = joint_entropy(a, b, alpha, method, backend)
    raw = h_a + h_b - h_ab
    return MIEstimate(raw if raw > MI_FLOOR else 0.0, raw, h_a, h_b, h_ab)


def variable_gram(samples, config):
    """Gram matrix with the bandwidth picked from the variable's own dimension."""
    x = as_matrix(samples)
    sigma = scott_bandwidth(config.gamma, x.shape[0], x.shape[1])
    return gram_matrix(x, sigma, config.backend)


def mutual_information(x_samples, z_samples, config=EstimatorConfig()):
    x = as_matrix(x_samples, "x_samples")
    z = as_matrix(z_samples, "z_samples")
    if x.shape[0] != z.shape[0]:
        raise ValueError(f"sample counts differ: {x.shape[0]} vs {z.shape[0]}")
    return information_from_grams(variable_gram(x, config), variable_gram(z, config),
                                  config.alpha, config.eig_method, config.backend)


def _quantize(x, bins):
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = hi - lo
    flat = span <= 0
    scaled = (x - lo) / np.where(flat, 1.0, span)
    codes = np.minimum((scaled * bins).astype(np.int64), bins - 1)
    codes[:, flat] = 0
    return codes


def _plugin_entropy(codes):
    _, counts = np.unique(codes, axis=0, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def binning_mi(x_samples, z_samples, bins):
    """Plug-in Shannon MI (bits) after uniform min-max quantization of each
    dimension into ``bins`` levels."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    x = as_matrix(x_samples, "x_samples")
    z = as_matrix(z_samples, "z_samples")
    if x.shape[0] != z.shape[0]:
        raise ValueError(f"sample counts differ: {x.shape[0]} vs {z.shape[0]}")
    cx, cz = _quantize(x, bins), _quantize(z, bins)
    mi = _plugin_entropy(cx) + _plugin_entropy(cz) - _plugin_entropy(np.hstack([cx, cz]))
    return max(mi, 0.0)


def analytic_bivariate_mi(rho):
    """Exact MI in bits between the two coordinates of a bivariate normal."""
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    return -0.5 * np.log2(1.0 - rho * rho)


def sample_bivariate_normal(rho, n, rng):
    """``n`` draws of (X1, X2) with unit variances and correlation ``rho``."""
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    g = rng.normal((n, 2))
    out = np.empty((n, 2))
    out[:, 0] = g[:, 0]
    out[:, 1] = rho * g[:, 0] + np.sqrt(1.0 - rho * rho) * g[:, 1]
    return out
