"""Asymptotic variance constant of the L1 statistic.

``sigma_sq = Ktilde * int_{[-1,1]^d} phi(prod_l rho_l(t_l)) dt`` where
``Ktilde = prod_l ||K_l||_2^2`` and ``phi(r) = Cov(|sqrt(1-r^2) Z1 + r Z2|, |Z2|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .data import BlockSpec
from .kernel import Kernel, autocorrelation_1d, l2_norm_sq

# Midpoint nodes per axis over [-1, 1] when no resolution is given.
DEFAULT_RESOLUTION = {1: 1 << 17, 2: 4096, 3: 256, 4: 96}
QMC_POINTS = 1 << 18
_CHUNK = 1 << 20


def phi(rho):
    """``(2/pi) (rho arcsin rho + sqrt(1 - rho^2) - 1)``; inputs within 1e-12 of +-1 are clamped."""
    r = np.asarray(rho, dtype=np.float64)
    if np.any(np.abs(r) > 1.0 + 1e-12) or np.any(np.isnan(r)):
        raise ValueError("phi is defined on [-1, 1]")
    r = np.clip(r, -1.0, 1.0)
    out = (2.0 / np.pi) * (r * np.arcsin(r) + np.sqrt(1.0 - r * r) - 1.0)
    # Cancellation near 0 can leave -1e-17.
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class VarianceParams:
    kernels: tuple[Kernel, ...]
    ktilde: float
    sigma_sq: float
    resolution: int

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)


def _pairwise_sum(x):
    # Fixed-order reduction so chunked totals do not depend on chunk scheduling.
    return math.fsum(x)


def _coordinate_kinds(spec, kernels):
    out = []
    for k, dl in zip(kernels, spec.dims):
        out += [k.kind] * dl
    return out


def _integral_tensor(kinds, resolution):
    # rho is even in every coordinate for these symmetric kernels, so
    # integrate over [0, 1]^d and multiply by 2^d.
    d = len(kinds)
    half = resolution // 2
    t = (np.arange(half) + 0.5) / half
    axes = [autocorrelation_1d(kind, t) for kind in kinds]
    w = (1.0 / half) ** d
    if d == 1:
        return 2.0 * w * math.fsum(phi(axes[0]))
    # Product of the trailing axes is materialized once; the leading axis is chunked.
    rest = axes[1]
    for a in axes[2:]:
        rest = np.multiply.outer(rest, a).ravel()
    rows = max(1, _CHUNK // rest.size)
    partials = []
    for start in range(0, half, rows):
        block = np.multiply.outer(axes[0][start:start + rows], rest)
        partials.append(phi(block).sum())
    return (2.0**d) * w * _pairwise_sum(partials)


def _integral_qmc(kinds, n_points):
    d = len(kinds)
    u = qmc.Sobol(d, scramble=False).random_base2(int(math.log2(n_points)))
    # Unscrambled Sobol starts at the origin; shift by half a cell.
    u = (u + 0.5 / n_points) % 1.0
    rho = np.ones(u.shape[0])
    for k, kind in enumerate(kinds):
        rho *= autocorrelation_1d(kind, u[:, k])
    return (2.0**d) * float(np.mean(phi(rho)))


@lru_cache(maxsize=64)
def _sigma_sq_cached(kinds: tuple, ktilde: float, resolution: int) -> float:
    if len(kinds) <= 4:
        return ktilde * _integral_tensor(list(kinds), resolution)
    return ktilde * _integral_qmc(list(kinds), max(QMC_POINTS, resolution))


def sigma_sq(spec: BlockSpec, kernels: Sequence[Kernel] | None = None, resolution: int | None = None) -> float:
    """The variance constant for block structure ``spec`` (uniform kernels by default).

    ``resolution`` is the number of midpoint nodes per axis of ``[-1, 1]``
    (rounded down to even; at least 64) for ``d <= 4``, and the Sobol point count above that.
    """
    return variance_params(spec, kernels, resolution).sigma_sq


def sigma_sq_coordinates(kinds: Sequence[str], resolution: int | None = None) -> float:
    """The variance constant for a product of 1-d kernels, one kind per coordinate.

    Needs no block structure, so it also covers ``d = 1``.
    """
    kinds = tuple(kinds)
    if not kinds:
        raise ValueError("need at least one coordinate")
    resolution = _resolution(len(kinds), resolution)
    ktilde = float(np.prod([l2_norm_sq(Kernel(k, 1)) for k in kinds]))
    return _sigma_sq_cached(kinds, ktilde, resolution)


def _resolution(d, resolution):
    if resolution is None:
        resolution = DEFAULT_RESOLUTION.get(d, QMC_POINTS)
    resolution = int(resolution)
    if resolution < 64:
        raise ValueError(f"resolution must be >= 64, got {resolution}")
    return resolution - resolution % 2


def variance_params(spec: BlockSpec, kernels: Sequence[Kernel] | None = None, resolution: int | None = None) -> VarianceParams:
    if kernels is None:
        kernels = tuple(Kernel("uniform", dl) for dl in spec.dims)
    kernels = tuple(kernels)
    if len(kernels) != spec.p or any(k.dim != dl for k, dl in zip(kernels, spec.dims)):
        raise ValueError("need one kernel per block with matching dimension")
    resolution = _resolution(spec.d, resolution)
    ktilde = float(np.prod([l2_norm_sq(k) for k in kernels]))
    value = _sigma_sq_cached(tuple(_coordinate_kinds(spec, kernels)), ktilde, resolution)
    return VarianceParams(kernels, ktilde, value, resolution)
