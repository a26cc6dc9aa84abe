"""Monte Carlo replications: size/power tables and power curves."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from ._backend import BACKEND
from .bandwidth import bandwidth_grid, select_bandwidths
from .estimators import Bandwidths
from .simgen import PAIR, Scenario, rep_seed, sample_scenario
from .statistic import TestConfig, permutation_calibrate, run_test
from .variance import variance_params

WORKERS_ENV = "L1INDEP_WORKERS"
CSV_COLUMNS = ["rep", "seed", "v_n", "a_n", "t_n", "p_value", "reject", "bandwidths", "skipped", "error"]
FAMILY_PARAM = {"Sinusoid": "l", "CircleIndicator": "theta", "PowerNoise": "rho"}


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {value!r}") from None


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    n: int
    reps: int = 1000
    alpha: float = 0.05
    seed: int = 0
    eps_region: float = 0.01
    grid_factor: float = 4.0
    quadrature: str = "midpoint"
    n_candidates: int = 5
    strategy: str = "ascent"
    bandwidths: tuple[float, ...] | None = None
    calibration: str = "asymptotic"
    n_perm: int = 199

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.calibration not in ("asymptotic", "permutation"):
            raise ValueError(f"calibration must be 'asymptotic' or 'permutation', got {self.calibration!r}")
        if self.seed is None:
            raise ValueError("a seed is required")

    def echo(self) -> dict:
        out = asdict(self)
        out["scenario"] = self.scenario.describe()
        out["bandwidths"] = None if self.bandwidths is None else list(self.bandwidths)
        return out


@dataclass
class RepResult:
    rep: int
    seed: int
    v_n: float = math.nan
    a_n: float = math.nan
    t_n: float = math.nan
    p_value: float = math.nan
    reject: bool | None = None
    bandwidths: tuple[float, ...] = ()
    skipped: int = 0
    bandwidth_fallback: bool = False
    region: list = field(default_factory=list)
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


def run_replication(cfg: SimConfig, rep: int) -> RepResult:
    """One replication: draw, select bandwidths, test. Errors are captured, not raised."""
    seed = rep_seed(cfg.seed, rep)
    out = RepResult(rep=rep, seed=seed)
    try:
        sample = sample_scenario(cfg.scenario, cfg.n, seed)
        if cfg.bandwidths is None:
            sel = select_bandwidths(sample, bandwidth_grid(sample, cfg.n_candidates), cfg.strategy)
            b = sel.bandwidths
            out.skipped = sel.skipped
            out.bandwidth_fallback = sel.fallback
        else:
            b = Bandwidths(np.asarray(cfg.bandwidths, dtype=float), PAIR)
        tcfg = TestConfig(cfg.eps_region, cfg.grid_factor, cfg.quadrature)
        res = run_test(sample, b, variance_params(PAIR), cfg.alpha, tcfg)
        out.v_n, out.a_n, out.t_n = res.v_n, res.a_n, res.t_n
        out.p_value, out.reject = res.p_value, res.reject
        if cfg.calibration == "permutation":
            pseed = np.random.SeedSequence([seed, 1])
            out.p_value = float(permutation_calibrate(sample, b, res.region, cfg.n_perm, pseed, tcfg))
            out.reject = out.p_value < cfg.alpha
        out.bandwidths = res.bandwidths
        out.region = res.region.boxes
    except (ValueError, ArithmeticError) as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _run_chunk(args):
    cfg, reps = args
    return [run_replication(cfg, r) for r in reps]


@dataclass
class Report:
    config: SimConfig
    rows: list[RepResult]
    sigma_sq: float
    workers: int = 1

    @property
    def completed(self) -> list[RepResult]:
        return [r for r in self.rows if not r.failed]

    @property
    def failed(self) -> int:
        return sum(r.failed for r in self.rows)

    @property
    def rejections(self) -> int:
        return sum(bool(r.reject) for r in self.completed)

    @property
    def rate(self) -> float:
        done = len(self.completed)
        return self.rejections / done if done else math.nan

    @property
    def stderr(self) -> float:
        done = len(self.completed)
        r = self.rate
        return math.sqrt(r * (1.0 - r) / done) if done else math.nan

    def t_values(self) -> np.ndarray:
        return np.array([r.t_n for r in self.completed])

    def provenance(self) -> dict:
        return {
            "software": {"package": "l1indep", "version": __version__, "backend": BACKEND},
            "config": self.config.echo(),
            "sigma_sq": self.sigma_sq,
            "reps": len(self.rows),
            "failed": self.failed,
            "rejections": self.rejections,
            "rate": self.rate,
            "stderr": self.stderr,
            "replications": [
                {
                    "rep": r.rep,
                    "seed": r.seed,
                    "bandwidths": list(r.bandwidths),
                    "region": [{"lo": lo, "hi": hi} for lo, hi in r.region],
                    "skipped": r.skipped,
                    "bandwidth_fallback": r.bandwidth_fallback,
                    "error": r.error,
                }
                for r in self.rows
            ],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow(_csv_row(r))


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _csv_row(r: RepResult) -> list[str]:
    return [
        str(r.rep),
        str(r.seed),
        _fmt(r.v_n),
        _fmt(r.a_n),
        _fmt(r.t_n),
        _fmt(r.p_value),
        "" if r.reject is None else str(int(r.reject)),
        ";".join(repr(h) for h in r.bandwidths),
        str(r.skipped),
        r.error,
    ]


def simulate(cfg: SimConfig, workers: int | None = None) -> Report:
    """Run ``cfg.reps`` replications; results come back in replication order."""
    workers = default_workers() if workers is None else max(1, int(workers))
    reps = list(range(cfg.reps))
    if workers == 1 or cfg.reps == 1:
        rows = _run_chunk((cfg, reps))
    else:
        size = max(1, math.ceil(cfg.reps / (4 * workers)))
        chunks = [(cfg, reps[i:i + size]) for i in range(0, cfg.reps, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = [row for part in pool.map(_run_chunk, chunks) for row in part]
    return Report(cfg, rows, variance_params(PAIR).sigma_sq, workers)


@dataclass
class CurvePoint:
    param: float
    rate: float
    stderr: float
    failed: int
    reps: int


def power_curve(family: str, values: Sequence[float], n: int, reps: int, seed: int, workers: int | None = None, dependent: bool = True, **options) -> list[CurvePoint]:
    """One :func:`simulate` per parameter value of a scenario family, all with the same master seed."""
    values = list(values)
    if not values:
        raise ValueError("parameter list is empty")
    probe = Scenario(family)
    key = FAMILY_PARAM.get(probe.name)
    if key is None:
        raise ValueError(f"{probe.name} is not a parametric family; choose from {sorted(FAMILY_PARAM)}")
    out = []
    for v in values:
        cfg = SimConfig(Scenario(probe.name, dependent, {key: v}), n, reps, seed=seed, **options)
        rep = simulate(cfg, workers)
        out.append(CurvePoint(float(v), rep.rate, rep.stderr, rep.failed, cfg.reps))
    return out


def write_curve_csv(path, points: Sequence[CurvePoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "rate", "stderr", "failed", "reps"])
        for p in points:
            w.writerow([repr(p.param), repr(p.rate), repr(p.stderr), p.failed, p.reps])

