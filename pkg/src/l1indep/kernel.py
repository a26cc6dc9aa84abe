"""Product kernels supported in the sup-norm ball of radius 1/2.

A :class:`Kernel` of dimension ``dim`` is the coordinate product of one
univariate kernel. All kernels here are bandwidth-free: callers pass
pre-scaled arguments ``(x - X) / h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels_py import kernel_values

KIND_CODES = {"uniform": 0, "epanechnikov": 1, "triangular": 2}

# Univariate integrals of K^2 over [-1/2, 1/2].
_L2_SQ_1D = {"uniform": 1.0, "epanechnikov": 1.2, "triangular": 4.0 / 3.0}

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


@dataclass(frozen=True)
class Kernel:
    kind: str = "uniform"
    dim: int = 1

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown kernel kind {self.kind!r}; choose from {sorted(KIND_CODES)}")
        if int(self.dim) < 1:
            raise ValueError(f"kernel dimension must be >= 1, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    def eval(self, u) -> np.ndarray | float:
        return eval_kernel(self, u)

    def l2_norm_sq(self) -> float:
        return l2_norm_sq(self)

    def autocorrelation(self, t) -> np.ndarray | float:
        return autocorrelation(self, t)


def _as_points(u, dim):
    # Returns (m, dim) points and whether the input was a single point.
    u = np.asarray(u, dtype=np.float64)
    if dim == 1 and u.ndim <= 1:
        return u.reshape(-1, 1), u.ndim == 0
    return u.reshape(-1, dim), u.ndim == 1


def eval_kernel(k: Kernel, u):
    """``K(u)`` for a single ``dim``-vector or an ``(m, dim)`` array of them."""
    pts, scalar = _as_points(u, k.dim)
    out = np.prod(kernel_values(k.code, pts), axis=1)
    return float(out[0]) if scalar else out


def l2_norm_sq(k: Kernel) -> float:
    """``int K(u)^2 du``; the product structure makes it a power of the 1-D value."""
    return _L2_SQ_1D[k.kind] ** k.dim


def cdf_1d(kind: str, u) -> np.ndarray:
    """``int_{-inf}^u K(s) ds`` of the univariate kernel."""
    u = np.clip(np.asarray(u, dtype=np.float64), -0.5, 0.5)
    if kind == "uniform":
        return u + 0.5
    if kind == "epanechnikov":
        return 1.5 * ((u + 0.5) - (4.0 / 3.0) * (u**3 + 0.125))
    if kind == "triangular":
        return np.where(u <= 0.0, 2.0 * (u + 0.5) ** 2, 1.0 - 2.0 * (0.5 - u) ** 2)
    raise ValueError(f"unknown kernel kind {kind!r}")


def autocorrelation_1d(kind: str, t) -> np.ndarray:
    """Normalized self-convolution ``int K(u) K(u+t) du / ||K||^2`` of the 1-D kernel."""
    t = np.asarray(t, dtype=np.float64)
    if kind == "uniform":
        return np.maximum(1.0 - np.abs(t), 0.0)
    # Piecewise polynomial integrand: split the overlap at every kink of
    # K(u) and K(u+t) and integrate each piece exactly by Gauss-Legendre.
    flat = np.abs(t).ravel()
    lo = -0.5
    hi = 0.5 - flat
    cuts = np.stack([np.full_like(flat, lo), np.zeros_like(flat), -flat, hi], axis=1)
    cuts = np.sort(np.clip(cuts, lo, np.maximum(hi, lo)[:, None]), axis=1)
    code = KIND_CODES[kind]
    total = np.zeros_like(flat)
    for a, b in zip(cuts[:, :-1].T, cuts[:, 1:].T):
        half = 0.5 * (b - a)
        nodes = (a + half)[:, None] + half[:, None] * _GL_X[None, :]
        vals = kernel_values(code, nodes) * kernel_values(code, nodes + flat[:, None])
        total += half * (vals @ _GL_W)
    out = np.where(flat < 1.0, total / _L2_SQ_1D[kind], 0.0)
    return out.reshape(t.shape)


def autocorrelation(k: Kernel, t):
    """``rho(t)`` of the product kernel: the product of coordinate autocorrelations."""
    pts, scalar = _as_points(t, k.dim)
    out = np.prod(autocorrelation_1d(k.kind, pts), axis=1)
    return float(out[0]) if scalar else out
