"""Truncation region, quadrature of the L1 statistic and its centering term,
the normalized statistic and the one-sided test decision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .data import DataError, Sample
from .estimators import Bandwidths, coordinate_kinds, g_from_sums
from .kernel import Kernel, cdf_1d
from ._kernels_py import kernel_values
from .variance import VarianceParams

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_CHUNK = 1 << 20


@dataclass(frozen=True)
class Region:
    """Product of one axis-aligned box per block; ``lo``/``hi`` are flat ``d``-vectors."""

    lo: np.ndarray
    hi: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float).ravel()
        hi = np.array(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size != sum(self.dims):
            raise ValueError("region bounds do not match block dimensions")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
            raise ValueError("region boxes need finite bounds with hi > lo")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "dims", tuple(self.dims))

    @property
    def boxes(self) -> list[tuple[list[float], list[float]]]:
        out, start = [], 0
        for dl in self.dims:
            out.append((self.lo[start:start + dl].tolist(), self.hi[start:start + dl].tolist()))
            start += dl
        return out

    def scaled(self, factors) -> "Region":
        f = np.asarray(factors, dtype=float)
        return Region(self.lo * f, self.hi * f, self.dims)


@dataclass(frozen=True)
class QuadratureGrid:
    """Per-coordinate cell centers and widths; cells tile the region exactly."""

    centers: tuple[np.ndarray, ...]
    widths: tuple[np.ndarray, ...]
    mode: str = "midpoint"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.size for c in self.centers)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class TestConfig:
    eps_region: float = 0.01
    grid_factor: float = 4.0
    quadrature: str = "midpoint"
    kernels: tuple[Kernel, ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.eps_region < 0.5:
            raise ValueError(f"eps_region must be in (0, 0.5), got {self.eps_region}")
        if self.grid_factor < 2:
            raise ValueError(f"grid_factor must be >= 2, got {self.grid_factor}")
        if self.quadrature not in ("midpoint", "breakpoints"):
            raise ValueError(f"quadrature must be 'midpoint' or 'breakpoints', got {self.quadrature!r}")


@dataclass(frozen=True)
class TestResult:
    v_n: float
    a_n: float
    sigma: float
    t_n: float
    p_value: float
    alpha: float
    reject: bool
    z_crit: float
    n: int
    bandwidths: tuple[float, ...]
    region: Region = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "v_n": self.v_n,
            "a_n": self.a_n,
            "sigma": self.sigma,
            "t_n": self.t_n,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "z_crit": self.z_crit,
            "reject": self.reject,
            "bandwidths": list(self.bandwidths),
            "region": [{"lo": lo, "hi": hi} for lo, hi in self.region.boxes],
        }


def _kernel_kinds(sample, kernels):
    if kernels is None:
        return ["uniform"] * sample.d
    out = []
    for k, dl in zip(kernels, sample.spec.dims):
        out += [k.kind] * dl
    return out


def region_mass(sample: Sample, b: Bandwidths, l: int, lo, hi, kernels=None) -> float:
    """Exact ``int_box f_{n,l}`` for the box ``[lo, hi]`` of block ``l`` (1-based)."""
    cols = sample.spec.columns(l)
    x = sample.values[:, cols]
    h = b.h[cols]
    kinds = _kernel_kinds(sample, kernels)[cols]
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    per = np.ones(sample.n)
    for k, kind in enumerate(kinds):
        per *= cdf_1d(kind, (hi[k] - x[:, k]) / h[k]) - cdf_1d(kind, (lo[k] - x[:, k]) / h[k])
    return float(per.mean())


def select_region(sample: Sample, b: Bandwidths, eps_region: float = 0.01, kernels=None) -> Region:
    """Per block, the box ``[x_(m+1) - h, x_(n-m) + h]`` trimming the ``m`` most extreme
    order statistics from each tail.

    Each block gets the tail budget ``eps_region / p``: ``m`` is the largest value
    keeping the estimated marginal mass at least ``1 - eps_region / p``, and never
    exceeds ``(n-1) eps_region / (2p)``. By the union bound the joint estimate then
    keeps mass at least ``1 - eps_region`` on the product region.
    """
    if not 0.0 < eps_region < 0.5:
        raise ValueError(f"eps_region must be in (0, 0.5), got {eps_region}")
    spec = sample.spec
    xs = np.sort(sample.values, axis=0)
    n = sample.n
    for k in range(spec.d):
        if xs[-1, k] == xs[0, k]:
            raise DataError(f"coordinate {k + 1} has zero range; cannot build a region")
    eps_block = eps_region / spec.p
    m_max = int(math.floor((n - 1) * eps_block / 2.0))
    lo = np.empty(spec.d)
    hi = np.empty(spec.d)
    for l in range(1, spec.p + 1):
        cols = spec.columns(l)
        h = b.h[cols]
        best = 0
        for m in range(1, m_max + 1):
            blo = xs[m, cols] - h
            bhi = xs[n - 1 - m, cols] + h
            if np.any(bhi <= blo) or region_mass(sample, b, l, blo, bhi, kernels) < 1.0 - eps_block:
                break
            best = m
        lo[cols] = xs[best, cols] - h
        hi[cols] = xs[n - 1 - best, cols] + h
    return Region(lo, hi, spec.dims)


# Guard against bandwidths so small the grid cannot be allocated.
MAX_CELLS_PER_AXIS = 1_000_000


def make_grid(region: Region, b: Bandwidths, grid_factor: float = 4.0, mode: str = "midpoint", sample: Sample | None = None) -> QuadratureGrid:
    """Regular midpoint grid with cell side at most ``h_k / grid_factor``.

    ``mode="breakpoints"`` instead partitions each axis at the kernel-support
    edges ``X_ik +- h_k/2``; with uniform kernels every integrand is constant on
    these cells, so the midpoint rule is exact there.
    """
    centers, widths = [], []
    if mode == "midpoint":
        for k in range(region.lo.size):
            span = region.hi[k] - region.lo[k]
            cells = max(1, int(math.ceil(span * grid_factor / b.h[k] - 1e-9)))
            if cells > MAX_CELLS_PER_AXIS:
                raise ValueError(
                    f"coordinate {k + 1}: {cells} grid cells exceed {MAX_CELLS_PER_AXIS}; bandwidth {b.h[k]:.3g} is too small"
                )
            w = span / cells
            centers.append(region.lo[k] + (np.arange(cells) + 0.5) * w)
            widths.append(np.full(cells, w))
    elif mode == "breakpoints":
        if sample is None:
            raise ValueError("breakpoint grids need the sample")
        for k in range(region.lo.size):
            x = sample.values[:, k]
            cuts = np.concatenate([x - b.h[k] / 2, x + b.h[k] / 2, [region.lo[k], region.hi[k]]])
            cuts = np.unique(np.clip(cuts, region.lo[k], region.hi[k]))
            centers.append(0.5 * (cuts[1:] + cuts[:-1]))
            widths.append(np.diff(cuts))
    else:
        raise ValueError(f"unknown grid mode {mode!r}")
    return QuadratureGrid(tuple(centers), tuple(widths), mode)


def _outer_flat(arrays):
    out = arrays[0]
    for a in arrays[1:]:
        out = np.multiply.outer(out, a).ravel()
    return out


class _GridFields:
    """Block-grid tensors of the estimators over a quadrature grid.

    Block grids are flattened C-order over the block's coordinates, and the
    full grid is flattened C-order over blocks, so outer products line up.
    """

    def __init__(self, sample, b, grid, kernels):
        spec = sample.spec
        n = sample.n
        kinds = coordinate_kinds(spec, kernels)
        self.p = spec.p
        self.n = n
        self.h_total = b.h_total
        w_axes = []
        for k in range(spec.d):
            u = (grid.centers[k][:, None] - sample.values[:, k][None, :]) / b.h[k]
            w_axes.append(kernel_values(kinds[k], u))
        self.block_w = []  # (M_l, n) kernel products per block-grid cell
        self.marg, self.v, self.g, self.vol = [], [], [], []
        hb = b.h_block
        for l in range(1, spec.p + 1):
            cols = range(*spec.columns(l).indices(spec.d))
            bw = None
            vol = None
            for k in cols:
                if bw is None:
                    bw, vol = w_axes[k], grid.widths[k]
                else:
                    bw = (bw[:, None, :] * w_axes[k][None, :, :]).reshape(-1, n)
                    vol = np.multiply.outer(vol, grid.widths[k]).ravel()
            s1 = bw.sum(axis=1)
            s2 = (bw * bw).sum(axis=1)
            h = hb[l - 1]
            self.block_w.append(bw)
            self.marg.append(s1 / (n * h))
            self.v.append(s2 / (n * h * h))
            self.g.append(g_from_sums(s1, s2, n, h) if n >= 2 else np.zeros_like(s1))
            self.vol.append(vol)

    def chunks(self):
        """Yield flat ``(joint, product_of_marginals, l_hat_unclamped, cell_volume)`` pieces."""
        p = self.p
        rest_sizes = [w.shape[0] for w in self.block_w[1:]]
        rest = int(np.prod(rest_sizes))
        rows = max(1, _CHUNK // max(rest, 1))
        m1 = self.block_w[0].shape[0]
        tail_w = self.block_w[1:]
        for start in range(0, m1, rows):
            sl = slice(start, min(start + rows, m1))
            head = self.block_w[0][sl]
            # Contract sum_i prod_l B_l[., i] one block at a time.
            acc = head
            for w in tail_w[:-1]:
                acc = (acc[:, None, :] * w[None, :, :]).reshape(-1, self.n)
            joint = (acc @ tail_w[-1].T).ravel() / (self.n * self.h_total)
            marg = [self.marg[0][sl]] + self.marg[1:]
            v = [self.v[0][sl]] + self.v[1:]
            g = [self.g[0][sl]] + self.g[1:]
            vol = _outer_flat([self.vol[0][sl]] + self.vol[1:])
            prod = _outer_flat(marg)
            cross = 0.0
            for l in range(p):
                cross = cross + _outer_flat([v[q] if q == l else g[q] for q in range(p)])
            lhat = _outer_flat(v) - cross + (p - 1.0) * _outer_flat(g)
            yield joint, prod, lhat, vol


def region_integrals(sample: Sample, b: Bandwidths, region: Region, grid: QuadratureGrid, kernels=None) -> tuple[float, float]:
    """``(V_n(C), int_C sqrt(l_hat))`` by the midpoint rule on ``grid``."""
    fields = _GridFields(sample, b, grid, kernels)
    v_parts, a_parts = [], []
    for joint, prod, lhat, vol in fields.chunks():
        v_parts.append(np.dot(np.abs(joint - prod), vol))
        a_parts.append(np.dot(np.sqrt(np.maximum(lhat, 0.0)), vol))
    return math.fsum(v_parts), math.fsum(a_parts)


def v_n_region(sample: Sample, b: Bandwidths, region: Region, grid: QuadratureGrid, kernels=None) -> float:
    """``int_C |f_n - prod_l f_{n,l}|``."""
    return region_integrals(sample, b, region, grid, kernels)[0]


def a_n_region(sample: Sample, b: Bandwidths, region: Region, grid: QuadratureGrid, kernels=None) -> float:
    """Centering term ``sqrt(2/pi) int_C sqrt(l_hat)``."""
    if sample.n < 2:
        raise ValueError("a_n needs n >= 2")
    return SQRT_2_OVER_PI * region_integrals(sample, b, region, grid, kernels)[1]


def normal_sf(t: float) -> float:
    return float(ndtr(-t))


def normal_quantile(q: float) -> float:
    return float(ndtri(q))


def run_test(sample: Sample, b: Bandwidths, vp: VarianceParams, alpha: float = 0.05, cfg: TestConfig | None = None, region: Region | None = None) -> TestResult:
    """Asymptotic one-sided test: reject when ``T_n > z_{1-alpha}``."""
    cfg = cfg or TestConfig()
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if vp.sigma_sq <= 0:
        raise ValueError(f"sigma^2 must be positive, got {vp.sigma_sq}")
    n = sample.n
    if n < 2 * sample.spec.p:
        raise DataError(f"need n >= 2p = {2 * sample.spec.p} observations, got {n}")
    kernels = cfg.kernels
    if region is None:
        region = select_region(sample, b, cfg.eps_region, kernels)
    grid = make_grid(region, b, cfg.grid_factor, cfg.quadrature, sample)
    v_n, root_int = region_integrals(sample, b, region, grid, kernels)
    a_n = SQRT_2_OVER_PI * root_int
    sigma = vp.sigma
    t_n = (math.sqrt(n) * v_n - a_n) / sigma
    z_crit = normal_quantile(1.0 - alpha)
    p_value = normal_sf(t_n)
    return TestResult(
        v_n=v_n,
        a_n=a_n,
        sigma=sigma,
        t_n=t_n,
        p_value=p_value,
        alpha=alpha,
        reject=bool(t_n > z_crit),
        z_crit=z_crit,
        n=n,
        bandwidths=tuple(float(x) for x in b.h),
        region=region,
    )


def permutation_calibrate(sample: Sample, b: Bandwidths, region: Region, n_perm: int = 199, seed=None, cfg: TestConfig | None = None, return_stats: bool = False):
    """Permutation p-value of ``sqrt(n) V_n(C)``, ``(1 + #{perm >= obs}) / (B + 1)``.

    Rows of blocks 2..p are shuffled independently; block 1, the region and the
    bandwidths stay fixed.
    """
    cfg = cfg or TestConfig()
    if n_perm < 99:
        raise ValueError(f"need at least 99 permutations, got {n_perm}")
    spec = sample.spec
    rng = np.random.default_rng(seed)
    grid = make_grid(region, b, cfg.grid_factor, cfg.quadrature, sample)
    root_n = math.sqrt(sample.n)
    observed = root_n * v_n_region(sample, b, region, grid, cfg.kernels)
    stats = np.empty(n_perm)
    values = np.array(sample.values)
    for r in range(n_perm):
        shuffled = values.copy()
        for l in range(2, spec.p + 1):
            cols = spec.columns(l)
            shuffled[:, cols] = values[rng.permutation(sample.n)][:, cols]
        stats[r] = root_n * v_n_region(Sample(shuffled, spec), b, region, grid, cfg.kernels)
    p_value = (1.0 + np.count_nonzero(stats >= observed)) / (n_perm + 1.0)
    if return_stats:
        return p_value, observed, stats
    return p_value
