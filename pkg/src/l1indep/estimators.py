"""Kernel plug-in estimators: joint and marginal densities, the squared-kernel
estimators ``v_hat``, the off-diagonal U-statistics ``g_n``, and the variance
field ``l_hat`` built from them, with leave-one-out variants.

Every block ``l`` has its own product kernel; bandwidths are per coordinate,
so a block's ``h^{d_l}`` is the product of its coordinate bandwidths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .data import BlockSpec, Sample
from .kernel import Kernel


@dataclass(frozen=True)
class Bandwidths:
    """One positive bandwidth per flat coordinate."""

    h: np.ndarray
    spec: BlockSpec

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64).ravel()
        if h.shape != (self.spec.d,):
            raise ValueError(f"need {self.spec.d} bandwidths, got {h.size}")
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise ValueError(f"bandwidths must be positive and finite, got {h.tolist()}")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def h_block(self) -> np.ndarray:
        return np.array([np.prod(self.h[self.spec.columns(l)]) for l in range(1, self.spec.p + 1)])

    @property
    def h_total(self) -> float:
        return float(np.prod(self.h))

    def scaled(self, factors) -> "Bandwidths":
        return Bandwidths(self.h * np.asarray(factors, dtype=float), self.spec)

    @classmethod
    def uniform(cls, value: float, spec: BlockSpec) -> "Bandwidths":
        return cls(np.full(spec.d, float(value)), spec)


def default_kernels(spec: BlockSpec, kind: str = "uniform") -> tuple[Kernel, ...]:
    return tuple(Kernel(kind, dl) for dl in spec.dims)


def coordinate_kinds(spec: BlockSpec, kernels: Sequence[Kernel] | None) -> np.ndarray:
    """Kernel code of every flat coordinate."""
    if kernels is None:
        return np.zeros(spec.d, dtype=np.int64)
    if len(kernels) != spec.p:
        raise ValueError(f"need one kernel per block ({spec.p}), got {len(kernels)}")
    for k, dl in zip(kernels, spec.dims):
        if k.dim != dl:
            raise ValueError(f"kernel dimension {k.dim} does not match block dimension {dl}")
    return np.repeat([k.code for k in kernels], spec.dims).astype(np.int64)


def _points(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if dim == 1 and x.ndim <= 1:
        return np.ascontiguousarray(x.reshape(-1, 1)), x.ndim == 0
    return np.ascontiguousarray(x.reshape(-1, dim)), x.ndim == 1


def _out(arr, scalar):
    return float(arr[0]) if scalar else arr


def kernel_sums(sample: Sample, b: Bandwidths, points, kernels=None, exclude_self=False, backend=None):
    """Raw sums over observations at ``(m, d)`` points.

    Returns ``(joint, s1, s2)``: ``joint[j] = sum_i prod_l K_l(.)``,
    ``s1[l, j] = sum_i K_l(.)`` and ``s2[l, j] = sum_i K_l(.)^2``.
    """
    spec = sample.spec
    impl = _backend.get(backend)
    return impl.kernel_sums(
        np.ascontiguousarray(points, dtype=np.float64),
        sample.values,
        b.h,
        spec.block_of_coordinate(),
        coordinate_kinds(spec, kernels),
        spec.p,
        bool(exclude_self),
    )


def _block_sums(sample, b, l, x_l, kernels):
    spec = sample.spec
    cols = spec.columns(l)
    dl = spec.dims[l - 1]
    pts, scalar = _points(x_l, dl)
    kind = coordinate_kinds(spec, kernels)[cols]
    _, s1, s2 = _backend.get().kernel_sums(
        pts,
        np.ascontiguousarray(sample.values[:, cols]),
        np.ascontiguousarray(b.h[cols]),
        np.zeros(dl, dtype=np.int64),
        np.ascontiguousarray(kind),
        1,
        False,
    )
    return s1[0], s2[0], scalar


def joint_kde(sample: Sample, b: Bandwidths, x, kernels=None):
    """Joint density estimate ``f_n`` at a ``d``-vector or ``(m, d)`` array."""
    pts, scalar = _points(x, sample.d)
    joint, _, _ = kernel_sums(sample, b, pts, kernels)
    return _out(joint / (sample.n * b.h_total), scalar)


def marginal_kde(sample: Sample, b: Bandwidths, l: int, x_l, kernels=None):
    """Density estimate of block ``l`` (1-based) at ``d_l``-vector(s) ``x_l``."""
    s1, _, scalar = _block_sums(sample, b, l, x_l, kernels)
    return _out(s1 / (sample.n * b.h_block[l - 1]), scalar)


def v_hat(sample: Sample, b: Bandwidths, l: int, x_l, kernels=None):
    """Squared-kernel estimator ``sum_i K_l^2(.) / (n h_l^2)``."""
    _, s2, scalar = _block_sums(sample, b, l, x_l, kernels)
    hl = b.h_block[l - 1]
    return _out(s2 / (sample.n * hl * hl), scalar)


def g_from_sums(s1, s2, n, hl):
    # Off-diagonal double sum via (S1^2 - S2); exact for the U-statistic.
    return (s1 * s1 - s2) / (n * (n - 1.0) * hl * hl)


def g_n(sample: Sample, b: Bandwidths, l: int, x_l, kernels=None):
    """U-statistic ``sum_{i != j} K_l(.) K_l(.) / (n (n-1) h_l^2)``."""
    if sample.n < 2:
        raise ValueError("g_n needs n >= 2")
    s1, s2, scalar = _block_sums(sample, b, l, x_l, kernels)
    return _out(g_from_sums(s1, s2, sample.n, b.h_block[l - 1]), scalar)


def combine_l_hat(v, g, clamp=True):
    """Assemble ``prod v - sum_l v_l prod_{j != l} g_j + (p-1) prod g`` from ``(p, m)`` arrays."""
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    p = v.shape[0]
    cross = np.zeros(v.shape[1:])
    for l in range(p):
        part = v[l].copy()
        for q in range(p):
            if q != l:
                part = part * g[q]
        cross = cross + part
    out = np.prod(v, axis=0) - cross + (p - 1.0) * np.prod(g, axis=0)
    return np.maximum(out, 0.0) if clamp else out


def point_fields(sample: Sample, b: Bandwidths, x, kernels=None, exclude_self=False):
    """All estimator fields at ``(m, d)`` points from one pass over the data.

    With ``exclude_self`` the points must be the sample itself and row ``j``
    is evaluated on the sample without observation ``j``.
    """
    pts, _ = _points(x, sample.d)
    joint, s1, s2 = kernel_sums(sample, b, pts, kernels, exclude_self=exclude_self)
    n = sample.n - 1 if exclude_self else sample.n
    hb = b.h_block[:, None]
    return {
        "joint": joint / (n * b.h_total),
        "marginals": s1 / (n * hb),
        "v": s2 / (n * hb * hb),
        "g": g_from_sums(s1, s2, n, hb) if n >= 2 else np.full_like(s1, np.nan),
    }


def l_hat(sample: Sample, b: Bandwidths, x, kernels=None, clamp=True):
    """Variance field ``l_hat`` at ``d``-vector(s) ``x``, clamped at 0 by default."""
    if sample.n < 2:
        raise ValueError("l_hat needs n >= 2")
    pts, scalar = _points(x, sample.d)
    f = point_fields(sample, b, pts, kernels)
    return _out(combine_l_hat(f["v"], f["g"], clamp=clamp), scalar)


@dataclass(frozen=True)
class LooFields:
    """Estimators of a sample with one observation removed."""

    sample: Sample
    bandwidths: Bandwidths
    removed: int
    kernels: tuple | None = None

    def joint(self, x):
        return joint_kde(self.sample, self.bandwidths, x, self.kernels)

    def marginal(self, l, x_l):
        return marginal_kde(self.sample, self.bandwidths, l, x_l, self.kernels)

    def l_hat(self, x):
        return l_hat(self.sample, self.bandwidths, x, self.kernels)


def loo_fields(sample: Sample, b: Bandwidths, j: int, kernels=None) -> LooFields:
    """Evaluators for the sample without observation ``j`` (0-based)."""
    if sample.n < 3:
        raise ValueError("leave-one-out fields need n >= 3")
    return LooFields(sample.drop(j), b, j, None if kernels is None else tuple(kernels))
