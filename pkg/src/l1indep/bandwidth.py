"""Data-driven bandwidths: candidate ranges at the ``n^{-1/(3d+1)}`` rate, bounded
by data-count constraints, and selection by the leave-one-out criterion."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .data import DataError, Sample
from .estimators import Bandwidths, coordinate_kinds

# Multiples of the coordinate standard deviation: 2^(j/4) within [1e-3, 1e3].
LADDER = 2.0 ** (np.arange(-39, 40) / 4.0)
FAR_POINTS = 10
FALLBACK = (0.5, 2.0)


class CriterionError(ValueError):
    """Every leave-one-out term was skipped: bandwidths too small for the criterion."""


def rate(n: int, d: int) -> float:
    return float(n) ** (-1.0 / (3 * d + 1))


@dataclass(frozen=True)
class Constants:
    c1: float
    c2: float
    fallback: bool = False


def select_constants(sample: Sample, coordinate: tuple[int, int]) -> Constants:
    """Range constants ``(c1, c2)`` for coordinate ``k`` of block ``l`` (both 1-based).

    With ``t = 2 c n^{-1/(3d+1)}``, ``c2`` is the largest ladder value for which no
    observation has all ``n`` points within distance ``t``, and ``c1`` the largest
    ladder value below ``c2`` for which every observation keeps at least 10 other
    points at distance ``>= t``.
    """
    l, k = coordinate
    spec = sample.spec
    n = sample.n
    if n < 12:
        raise DataError(f"bandwidth constants need n >= 12, got {n}")
    cols = spec.columns(l)
    if not 1 <= k <= spec.dims[l - 1]:
        raise IndexError(f"coordinate {k} out of range for block {l} of dimension {spec.dims[l - 1]}")
    flat = cols.start + k - 1
    x = sample.values[:, flat]
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise DataError(f"coordinate {flat + 1} (block {l}, component {k}) is degenerate: zero spread")
    r = rate(n, spec.d)
    dist = np.abs(x[:, None] - x[None, :])
    # Row i includes the zero self-distance; the 10th largest distance to
    # another point sits at index n - FAR_POINTS after sorting.
    srt = np.sort(dist, axis=1)
    far_limit = float(srt[:, n - FAR_POINTS].min())
    near_limit = float(srt[:, -1].min())
    ladder = LADDER * sd
    ok2 = ladder[2.0 * ladder * r < near_limit]
    if ok2.size == 0:
        return Constants(FALLBACK[0] * sd, FALLBACK[1] * sd, fallback=True)
    # The far condition is monotone in c, so keep c1 strictly below c2.
    ok1 = ladder[(2.0 * ladder * r <= far_limit) & (ladder < ok2[-1])]
    if ok1.size == 0:
        return Constants(FALLBACK[0] * sd, FALLBACK[1] * sd, fallback=True)
    return Constants(float(ok1[-1]), float(ok2[-1]))


@dataclass(frozen=True)
class BandwidthGrid:
    """Ascending candidate bandwidths per flat coordinate."""

    candidates: tuple[np.ndarray, ...]
    lower: np.ndarray
    upper: np.ndarray
    n: int
    d: int
    fallback: tuple[bool, ...] = ()

    def __post_init__(self):
        for c in self.candidates:
            if c.size == 0 or np.any(c <= 0) or np.any(np.diff(c) <= 0):
                raise ValueError("candidate lists must be nonempty, positive and ascending")

    @property
    def rate_exponent(self) -> float:
        return -1.0 / (3 * self.d + 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.size for c in self.candidates)

    def midpoint(self) -> tuple[int, ...]:
        return tuple(s // 2 for s in self.shape)

    def bandwidths(self, index, spec) -> Bandwidths:
        return Bandwidths(np.array([c[i] for c, i in zip(self.candidates, index)]), spec)


def bandwidth_grid(sample: Sample, n_candidates: int = 5) -> BandwidthGrid:
    """Log-spaced candidates between ``c1 n^{-1/(3d+1)}`` and ``c2 n^{-1/(3d+1)}``."""
    if n_candidates < 1:
        raise ValueError("need at least one candidate per coordinate")
    spec = sample.spec
    r = rate(sample.n, spec.d)
    cands, lo, hi, fb = [], [], [], []
    for l in range(1, spec.p + 1):
        for k in range(1, spec.dims[l - 1] + 1):
            c = select_constants(sample, (l, k))
            a, b = c.c1 * r, c.c2 * r
            cands.append(np.geomspace(a, b, n_candidates) if n_candidates > 1 else np.array([math.sqrt(a * b)]))
            lo.append(a)
            hi.append(b)
            fb.append(c.fallback)
    return BandwidthGrid(tuple(cands), np.array(lo), np.array(hi), sample.n, spec.d, tuple(fb))


def criterion_terms(sample: Sample, b: Bandwidths, kernels=None, backend=None) -> np.ndarray:
    """Per-observation leave-one-out terms; NaN where the marginal product vanishes."""
    if sample.n < 3:
        raise ValueError("the leave-one-out criterion needs n >= 3")
    spec = sample.spec
    impl = _backend.get(backend)
    return impl.loo_criterion_terms(
        sample.values,
        b.h,
        spec.block_of_coordinate(),
        coordinate_kinds(spec, kernels),
        spec.p,
        np.ascontiguousarray(b.h_block),
        b.h_total,
    )


def loo_criterion(sample: Sample, b: Bandwidths, kernels=None, backend=None, return_skipped=False):
    """Sum of leave-one-out terms over observations with a positive marginal product."""
    terms = criterion_terms(sample, b, kernels, backend)
    keep = ~np.isnan(terms)
    if not keep.any():
        raise CriterionError("bandwidths too small for criterion: every leave-one-out term was skipped")
    value = math.fsum(terms[keep])
    if return_skipped:
        return value, int((~keep).sum())
    return value


@dataclass(frozen=True)
class Selection:
    bandwidths: Bandwidths
    index: tuple[int, ...]
    criterion: float
    skipped: int
    fallback: bool
    strategy: str
    evaluations: dict = field(repr=False, default_factory=dict)


def select_bandwidths(sample: Sample, grid: BandwidthGrid, strategy: str = "ascent", kernels=None) -> Selection:
    """Maximize the leave-one-out criterion over the candidate grid.

    ``"ascent"`` is coordinate-wise ascent from the grid midpoint;
    ``"exhaustive"`` scans the full Cartesian grid. Ties go to the larger bandwidth.
    """
    spec = sample.spec
    cache: dict[tuple[int, ...], tuple[float, int]] = {}

    def score(idx):
        if idx not in cache:
            try:
                cache[idx] = loo_criterion(sample, grid.bandwidths(idx, spec), kernels, return_skipped=True)
            except CriterionError:
                cache[idx] = (-math.inf, sample.n)
        return cache[idx][0]

    if strategy == "exhaustive":
        best, best_val = None, -math.inf
        for idx in itertools.product(*(range(s) for s in grid.shape)):
            val = score(idx)
            if best is None or val > best_val or (val == best_val and idx > best):
                best, best_val = idx, val
        current = best
    elif strategy == "ascent":
        current = grid.midpoint()
        while True:
            moved = False
            for k in range(len(grid.shape)):
                best, best_val = current, score(current)
                for i in range(grid.shape[k]):
                    idx = current[:k] + (i,) + current[k + 1:]
                    val = score(idx)
                    if val > best_val or (val == best_val and i > best[k]):
                        best, best_val = idx, val
                if best != current:
                    current, moved = best, True
            if not moved:
                break
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    value, skipped = cache[current]
    fallback = value == -math.inf
    if fallback:
        current = grid.midpoint()
    return Selection(grid.bandwidths(current, spec), current, value, skipped, fallback, strategy, dict(cache))
