"""Compactly supported smoothing kernels and the default bandwidth rule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CensoredDataset, ValidationError

FAMILIES = ("epanechnikov_product", "uniform_box", "triangular_pyramid", "truncated_gaussian")

_GAUSS_RADIUS = 4.0
# mass of the standard normal on [-4, 4]
_GAUSS_MASS = math.erf(_GAUSS_RADIUS / math.sqrt(2.0))


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _uniform(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _truncated_gaussian(u):
    # support is [-1, 1] on the scaled axis, i.e. +-4 standard deviations
    z = u * _GAUSS_RADIUS
    dens = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) * _GAUSS_RADIUS / _GAUSS_MASS
    return np.where(np.abs(u) <= 1.0, dens, 0.0)


_PROFILES = {
    "epanechnikov_product": _epanechnikov,
    "uniform_box": _uniform,
    "truncated_gaussian": _truncated_gaussian,
}

_SUP_1D = {
    "epanechnikov_product": 0.75,
    "uniform_box": 0.5,
    "truncated_gaussian": _GAUSS_RADIUS / (math.sqrt(2.0 * math.pi) * _GAUSS_MASS),
}


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family on R^d.

    Product families multiply a 1-D profile across coordinates.  The
    triangular pyramid is ``c_d * max(0, 1 - |u|_inf)``, whose graph is a
    pyramid over the unit cube.
    """

    family: str = "epanechnikov_product"
    support_radius: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown kernel family {self.family!r}; choose from {FAMILIES}")
        if not self.support_radius > 0:
            raise ValidationError("support_radius must be positive")

    def __call__(self, u):
        return kernel_value(self, u)

    def sup_norm(self, d: int) -> float:
        if self.family == "triangular_pyramid":
            return _pyramid_const(d) / self.support_radius**d
        return (_SUP_1D[self.family] / self.support_radius) ** d


def _pyramid_const(d: int) -> float:
    # volume under 1 - |u|_inf over [-1, 1]^d is 2^d / (d + 1)
    return (d + 1) / 2.0**d


def kernel_value(spec: KernelSpec, u) -> np.ndarray:
    """Evaluate K at points ``u``.

    ``u`` has shape ``(..., d)``; the last axis runs over coordinates.  A
    scalar is treated as a single 1-D point.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u.reshape(1)
    r = spec.support_radius
    v = u / r
    d = u.shape[-1]
    if spec.family == "triangular_pyramid":
        m = np.max(np.abs(v), axis=-1)
        out = np.where(m <= 1.0, _pyramid_const(d) * (1.0 - m), 0.0)
    else:
        out = np.prod(_PROFILES[spec.family](v), axis=-1)
    out = out / r**d
    return float(out) if np.ndim(out) == 0 else out


def scaled_kernel_value(spec: KernelSpec, x_diff, h: float) -> np.ndarray:
    """K_h(x_diff) = K(x_diff / h) / h^d."""
    if not h > 0:
        raise ValidationError(f"bandwidth must be positive, got {h}")
    x_diff = np.asarray(x_diff, dtype=float)
    if x_diff.ndim == 0:
        x_diff = x_diff.reshape(1)
    d = x_diff.shape[-1]
    return kernel_value(spec, x_diff / h) / h**d


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray, h: float) -> np.ndarray:
    """K_h(a_i - b_j) for every pair of rows, shape ``(len(A), len(B))``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return scaled_kernel_value(spec, A[:, None, :] - B[None, :, :], h)


def default_bandwidth(data: CensoredDataset, scale: float = 5.0, exponent: float | None = None) -> float:
    """Rule-of-thumb bandwidth ``scale * sigma * n ** exponent``.

    ``sigma`` is the mean of the per-coordinate sample standard deviations
    and the exponent defaults to ``-1 / (d + 2)``.
    """
    n, d = data.n, data.d
    if n < 2:
        raise ValidationError("bandwidth rule needs at least two observations")
    sigma = float(np.mean(np.std(data.X, axis=0, ddof=1)))
    if not sigma > 0:
        raise ValidationError("covariates have zero variance; bandwidth undefined")
    if exponent is None:
        exponent = -1.0 / (d + 2)
    return scale * sigma * n**exponent
