"""Seeded bivariate generators for the simulation scenarios.

Each scenario has a dependent form and an independence variant obtained by
shuffling the ``Y`` column with a seeded permutation, which keeps both
marginals exactly and destroys the dependence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .config import parse_kv
from .data import BlockSpec, Sample

PAIR = BlockSpec((1, 1))

# name -> parameter defaults
SCENARIOS: dict[str, dict[str, float]] = {
    "IndNorm": {},
    "IndUniform": {},
    "FourClouds": {},
    "W": {},
    "Diamond": {},
    "Parabola": {},
    "TwoParabolas": {},
    "Circle": {},
    "YeqXEps": {},
    "GEV1": {},
    "GEV2": {},
    "Sinusoid": {"l": 1.0},
    "CircleIndicator": {"theta": 0.5},
    "PowerNoise": {"rho": 1.0},
}

# Scenarios drawn independent by construction; no shuffle needed.
_ALWAYS_INDEPENDENT = ("IndNorm", "IndUniform")

_ALIASES = {name.lower(): name for name in SCENARIOS}
_ALIASES.update({"4clouds": "FourClouds", "2parabolas": "TwoParabolas", "y=xeps": "YeqXEps"})


def load_shape_config(text: str | None = None) -> dict[str, float]:
    if text is None:
        text = resources.files("l1indep").joinpath("scenarios.cfg").read_text()
    return {k: float(v) for k, v in parse_kv(text, "scenarios.cfg").items()}


SHAPES = load_shape_config()


@dataclass(frozen=True)
class Scenario:
    name: str
    dependent: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        name = _ALIASES.get(str(self.name).lower())
        if name is None:
            raise ValueError(f"unknown scenario {self.name!r}; choose from {sorted(SCENARIOS)}")
        params = dict(SCENARIOS[name])
        for key, value in dict(self.params).items():
            if key not in params:
                raise ValueError(f"scenario {name} has no parameter {key!r}")
            params[key] = float(value)
        if name == "Sinusoid" and (params["l"] < 1 or params["l"] != int(params["l"])):
            raise ValueError(f"Sinusoid needs an integer l >= 1, got {params['l']}")
        if name == "CircleIndicator" and not 0.0 <= params["theta"] <= 1.0:
            raise ValueError(f"CircleIndicator needs theta in [0, 1], got {params['theta']}")
        if name == "PowerNoise" and params["rho"] < 0:
            raise ValueError(f"PowerNoise needs rho >= 0, got {params['rho']}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "params", params)
        if name in _ALWAYS_INDEPENDENT:
            object.__setattr__(self, "dependent", False)

    @classmethod
    def parse(cls, text: str, dependent: bool = True) -> "Scenario":
        """``"W"``, ``"Sinusoid:l=3"`` or ``"CircleIndicator:theta=0.25"``."""
        name, _, rest = str(text).partition(":")
        params = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(f"scenario parameter must be key=value, got {item!r}")
            params[key.strip()] = float(value)
        return cls(name.strip(), dependent, params)

    def label(self) -> str:
        args = ",".join(f"{k}={v:g}" for k, v in self.params.items())
        return self.name + (f":{args}" if args else "") + ("" if self.dependent else " (independent)")

    def describe(self) -> dict:
        keys = {
            "FourClouds": ["FourClouds."],
            "W": ["W."],
            "Parabola": ["Parabola."],
            "TwoParabolas": ["TwoParabolas."],
            "Circle": ["Circle."],
            "Diamond": ["Diamond."],
            "GEV1": ["GEV."],
            "GEV2": ["GEV."],
        }.get(self.name, [])
        shape = {k: v for k, v in SHAPES.items() if any(k.startswith(p) for p in keys)}
        return {
            "name": self.name,
            "dependent": self.dependent,
            "params": dict(self.params),
            "shape": shape,
            "shape_config_version": SHAPES.get("version"),
        }


def _rejection(rng, n, density, bound, lo, hi):
    out = np.empty((0, 2))
    while out.shape[0] < n:
        m = max(64, int(1.3 * (n - out.shape[0]) * bound * (hi - lo) ** 2) + 16)
        xy = rng.uniform(lo, hi, size=(m, 2))
        keep = rng.uniform(0.0, bound, size=m) <= density(xy[:, 0], xy[:, 1])
        out = np.vstack([out, xy[keep]])
    return out[:n]


def sinusoid_density(x, y, l):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = (np.abs(x) <= np.pi) & (np.abs(y) <= np.pi)
    return np.where(inside, (1.0 + np.sin(l * x) * np.sin(l * y)) / (4.0 * np.pi**2), 0.0)


def circle_indicator_density(x, y, theta):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = (np.abs(x) <= 1.0) & (np.abs(y) <= 1.0)
    disk = x * x + y * y <= 2.0 / np.pi
    return np.where(inside, 0.25 * (1.0 + theta * (1.0 - 2.0 * disk)), 0.0)


def density_oracle(sc: Scenario, x, y):
    """Closed-form density of the dependent Sinusoid and CircleIndicator scenarios."""
    if sc.name == "Sinusoid":
        out = sinusoid_density(x, y, sc.params["l"])
    elif sc.name == "CircleIndicator":
        out = circle_indicator_density(x, y, sc.params["theta"])
    else:
        raise ValueError(f"scenario {sc.name} has no closed-form density")
    return float(out) if np.ndim(out) == 0 else out


def _frechet_truncated(rng, shape, q, size):
    # Inverse CDF exp(-x^-a) restricted to its lower q-quantile range.
    u = rng.uniform(0.0, q, size=size)
    return (-np.log(u)) ** (-1.0 / shape)


def _draw(sc: Scenario, n: int, rng) -> np.ndarray:
    s = SHAPES
    name = sc.name
    if name == "IndNorm":
        return rng.standard_normal((n, 2))
    if name == "IndUniform":
        # Uniform on [-pi, pi]^2: the Sinusoid marginals with no dependence.
        return rng.uniform(-math.pi, math.pi, size=(n, 2))
    if name == "FourClouds":
        c = s["FourClouds.center"]
        cx = rng.choice([-c, c], size=n)
        noise = rng.normal(0.0, s["FourClouds.noise_sd"], size=(n, 2))
        return np.column_stack([cx, cx]) + noise
    if name == "W":
        x = rng.uniform(-1.0, 1.0, n)
        return np.column_stack([x, 4.0 * (x * x - 0.5) ** 2 + rng.uniform(0.0, s["W.noise"], n)])
    if name == "Parabola":
        x = rng.uniform(-1.0, 1.0, n)
        return np.column_stack([x, x * x + rng.uniform(0.0, s["Parabola.noise"], n)])
    if name == "TwoParabolas":
        x = rng.uniform(-1.0, 1.0, n)
        sign = rng.choice([-1.0, 1.0], size=n)
        return np.column_stack([x, sign * (x * x + rng.uniform(0.0, s["TwoParabolas.noise"], n))])
    if name == "Circle":
        angle = rng.uniform(0.0, 2.0 * np.pi, n)
        radius = 1.0 + rng.normal(0.0, s["Circle.radial_sd"], n)
        return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    if name == "Diamond":
        a = s["Diamond.half_diagonal"]
        u = rng.uniform(-a, a, size=(n, 2))
        # 45-degree rotation of a square onto |x| + |y| <= a.
        return np.column_stack([(u[:, 0] - u[:, 1]) / 2.0, (u[:, 0] + u[:, 1]) / 2.0])
    if name == "YeqXEps":
        x = rng.standard_normal(n)
        return np.column_stack([x, x * rng.standard_normal(n)])
    if name in ("GEV1", "GEV2"):
        w = s["GEV.weibull_scale"] * rng.weibull(s["GEV.weibull_shape"], n)
        z1 = rng.normal(0.0, s["GEV.noise_sd"], n)
        z2 = rng.normal(0.0, s["GEV.noise_sd"], n)
        x = w + z1
        if name == "GEV1":
            f = _frechet_truncated(rng, s["GEV.frechet_shape"], s["GEV.frechet_trunc_quantile"], n)
            return np.column_stack([x, x + f + z2])
        return np.column_stack([x, 3.0 * w + z2])
    if name == "Sinusoid":
        l = sc.params["l"]
        return _rejection(rng, n, lambda x, y: sinusoid_density(x, y, l), 2.0 / (4.0 * np.pi**2), -np.pi, np.pi)
    if name == "CircleIndicator":
        th = sc.params["theta"]
        return _rejection(rng, n, lambda x, y: circle_indicator_density(x, y, th), 0.25 * (1.0 + th), -1.0, 1.0)
    if name == "PowerNoise":
        x = rng.uniform(-1.0, 1.0, n)
        return np.column_stack([x, np.abs(x) ** sc.params["rho"] * rng.standard_normal(n)])
    raise ValueError(f"unknown scenario {name!r}")  # pragma: no cover


def sample_scenario(sc: Scenario, n: int, seed) -> Sample:
    """``n`` i.i.d. draws of ``(X, Y)``; bit-identical for identical ``(sc, n, seed)``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    xy = _draw(sc, int(n), rng)
    if not sc.dependent and sc.name not in _ALWAYS_INDEPENDENT:
        xy[:, 1] = xy[rng.permutation(n), 1]
    return Sample(xy, PAIR)


def acceptance_rate(sc: Scenario) -> float:
    """Expected acceptance probability of the uniform-envelope rejection sampler."""
    if sc.name == "Sinusoid":
        # Envelope height 2/(4 pi^2) over area 4 pi^2.
        return 0.5
    if sc.name == "CircleIndicator":
        return 1.0 / (1.0 + sc.params["theta"])
    raise ValueError(f"scenario {sc.name} is not rejection-sampled")


def rep_seed(master_seed: int, rep: int) -> int:
    """Per-replication seed derived from ``(master_seed, rep)``."""
    ss = np.random.SeedSequence([int(master_seed), int(rep)])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)

