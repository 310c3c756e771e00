"""Stand-alone experiments: estimator validation, weight scans and LAE decoding."""
from typing import NamedTuple

import numpy as np

from .estimator import (EstimatorConfig, analytic_bivariate_mi, binning_mi,
                        information_from_grams, mutual_information, renyi_entropy,
                        sample_bivariate_normal, variable_gram)
from .datasets import saxe_scalar_dataset, saxe_vector_dataset
from .linalg import Rng
from .models import decode, sigmoid

ACTIVATIONS = {
    "linear": lambda s: s,
    "relu": lambda s: np.maximum(s, 0.0),
    "sigmoid": sigmoid,
}
DEFAULT_W_GRID = tuple(2.0 ** k for k in range(9))
VECTOR_HIDDEN = 50


# --- estimator validation -----------------------------------------------------

class ValidationRow(NamedTuple):
    rho: float
    n: int
    analytic_bits: float
    kernel_bits: float
    binning_bits: dict  # bins -> bits


def validate_estimator(rhos, n=1000, bins_list=(5, 20, 100), estimator=EstimatorConfig(), rng=None):
    """Compare kernel and binning MI with the closed form on bivariate normals.

    Each correlation gets its own child stream of ``rng`` so rows do not
    depend on which other correlations are in the list.
    """
    rng = Rng(0) if rng is None else rng
    rows = []
    for k, rho in enumerate(rhos):
        xy = sample_bivariate_normal(rho, n, rng.child(k))
        x, y = xy[:, :1], xy[:, 1:]
        kernel = mutual_information(x, y, estimator).bits
        binned = {b: binning_mi(x, y, b) for b in bins_list}
        rows.append(ValidationRow(float(rho), n, float(analytic_bivariate_mi(rho)), kernel, binned))
    return rows


# --- weight scan --------------------------------------------------------------

class ScanPoint(NamedTuple):
    w: float
    bits: float


def weight_scan_experiment(activation, variant, w_grid=DEFAULT_W_GRID, n_samples=1000,
                           estimator=EstimatorConfig(), rng=None):
    """I(x; f(w x)) as the weight scale grows.

    ``scalar``: one input unit, one output unit, z = f(w x).
    ``vector``: 100 inputs feeding 50 units through w * U where U ~ U(0, 1) is
    drawn once, so every scale reuses the same weight pattern.  A scale of 0
    is allowed and serves as the constant-output control.
    """
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}; choose from {sorted(ACTIVATIONS)}")
    if variant not in ("scalar", "vector"):
        raise ValueError(f"variant must be 'scalar' or 'vector', got {variant!r}")
    grid = np.asarray(w_grid, dtype=np.float64)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("w_grid must be a non-empty 1-D sequence")
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("w_grid must be non-negative and strictly ascending")
    rng = Rng(0) if rng is None else rng
    f = ACTIVATIONS[activation]
    if variant == "scalar":
        x = saxe_scalar_dataset(n_samples, rng.child(0))
        base = np.ones((1, 1))
    else:
        x = saxe_vector_dataset(n_samples, rng.child(0))
        base = rng.child(1).uniform((VECTOR_HIDDEN, x.shape[1]), 0.0, 1.0)
    est = estimator
    a_x = variable_gram(x, est)
    h_x = renyi_entropy(a_x, est.alpha, est.eig_method, est.backend)
    out = []
    for w in grid:
        a_z = variable_gram(f(x @ (w * base).T), est)
        mi = information_from_grams(a_x, a_z, est.alpha, est.eig_method, est.backend, h_a=h_x)
        out.append(ScanPoint(float(w), mi.bits))
    return out


def max_decrease(points):
    """Largest drop in bits between successive scan points (0 if none)."""
    bits = [p.bits for p in points]
    return max([a - b for a, b in zip(bits, bits[1:])] + [0.0])


# --- LAE latent interpolation -------------------------------------------------

def lae_interpolate(params, spec, digit_a, digit_b, steps=10):
    """Decode Z = a*e_a + (1-a)*e_b for a running from 1 down to 0.

    Returns a ``steps x input_dim`` array of pixel rows in [0, 1].  Codes are
    decoded one at a time: a batched matmul may round differently from a
    single-row one, and the endpoints must equal ``decode`` of the bare
    one-hot code bit for bit.
    """
    if spec.variant != "lae":
        raise ValueError(f"interpolation needs an LAE model, got {spec.variant!r}")
    n_classes = spec.layer_dims[spec.z_index]
    for d in (digit_a, digit_b):
        if not 0 <= d < n_classes:
            raise ValueError(f"digit {d} outside [0, {n_classes})")
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    missing = [k for k in ("W0", "b0") if k not in params]
    if missing:
        raise ValueError(f"parameters are missing blocks {missing}")
    eye = np.eye(n_classes)
    a = np.linspace(1.0, 0.0, steps)[:, None]
    z = a * eye[digit_a] + (1.0 - a) * eye[digit_b]
    # the endpoints must be exactly the one-hot codes, whatever linspace rounds to
    z[0], z[-1] = eye[digit_a], eye[digit_b]
    return np.vstack([decode(params, spec, row[None, :]) for row in z])


def to_pgm(rows, cols=None, shape=(28, 28)):
    """Tile pixel rows in [0, 1] into a binary (P5) PGM image."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != shape[0] * shape[1]:
        raise ValueError(f"expected rows of {shape[0] * shape[1]} pixels, got {rows.shape}")
    n = len(rows)
    cols = n if cols is None else cols
    grid_rows = -(-n // cols)
    h, w = shape
    canvas = np.zeros((grid_rows * h, cols * w), dtype=np.uint8)
    pix = np.rint(np.clip(rows, 0.0, 1.0) * 255.0).astype(np.uint8)
    for i, img in enumerate(pix):
        r, c = divmod(i, cols)
        canvas[r * h:(r + 1) * h, c * w:(c + 1) * w] = img.reshape(shape)
    header = f"P5\n{canvas.shape[1]} {canvas.shape[0]}\n255\n".encode()
    return header + canvas.tobytes()
