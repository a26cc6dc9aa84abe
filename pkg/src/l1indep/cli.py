"""Command-line interface: ``l1indep {test,simulate,power-curve,sigma,bandwidth}``.

Every option can also be given in a ``key = value`` file passed with
``--config``; flags given on the command line take precedence. The only
environment variable consulted is ``L1INDEP_WORKERS``, the default worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .bandwidth import bandwidth_grid, select_bandwidths
from .config import format_kv, read_kv
from .data import BlockSpec, DataError, load_csv
from .estimators import Bandwidths, default_kernels
from .harness import FAMILY_PARAM, SimConfig, default_workers, power_curve, simulate, write_curve_csv
from .simgen import SHAPES, Scenario
from .statistic import TestConfig, permutation_calibrate, run_test
from .variance import variance_params


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


# dest -> (converter, builtin default); None means "required when used".
_FIELDS = {
    "input": (str, None),
    "dims": (str, "1,1"),
    "header": (None, False),
    "alpha": (float, 0.05),
    "seed": (int, 0),
    "eps_region": (float, 0.01),
    "grid_factor": (float, 4.0),
    "quadrature": (str, "midpoint"),
    "kernel": (str, "uniform"),
    "bandwidths": (str, "auto"),
    "n_candidates": (int, 5),
    "strategy": (str, "ascent"),
    "calibration": (str, "asymptotic"),
    "n_perm": (int, 199),
    "output": (str, None),
    "scenario": (str, None),
    "independent": (None, False),
    "n": (int, None),
    "reps": (int, 1000),
    "workers": (int, None),
    "provenance": (str, None),
    "scenario_config": (str, None),
    "family": (str, None),
    "values": (str, None),
    "resolution": (int, None),
}

_BOOL_TEXT = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _convert(key, text):
    conv, _ = _FIELDS[key]
    if conv is None:
        value = _BOOL_TEXT.get(str(text).strip().lower())
        if value is None:
            raise ConfigError(f"{key}: expected a boolean, got {text!r}")
        return value
    try:
        return conv(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {text!r} as {conv.__name__}") from None


def resolve(args: argparse.Namespace, used) -> dict:
    """Merge flags over the config file over builtin defaults for the fields in ``used``."""
    file_values = {}
    if getattr(args, "config", None):
        try:
            raw = read_kv(args.config)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc.strerror}") from None
        for key, text in raw.items():
            dest = key.replace("-", "_")
            if dest not in used:
                raise ConfigError(f"{key}: not an option of '{args.command}'")
            file_values[dest] = _convert(dest, text)
    out = {}
    for dest in used:
        flag = getattr(args, dest, None)
        if flag is not None:
            out[dest] = flag
        elif dest in file_values:
            out[dest] = file_values[dest]
        else:
            out[dest] = _FIELDS[dest][1]
    return out


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) is None:
            raise ConfigError(f"{key}: required (flag --{key.replace('_', '-')} or config file)")


def _spec(cfg) -> BlockSpec:
    try:
        return BlockSpec.parse(cfg["dims"])
    except ValueError as exc:
        raise ConfigError(f"dims: {exc}") from None


def _floats(key, text) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None


def _count_columns(path, header) -> int | None:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        for rec in reader:
            if rec and any(x.strip() for x in rec):
                return len(rec)
    return None


def _load(cfg):
    _require(cfg, "input")
    spec = _spec(cfg)
    path = Path(cfg["input"])
    if not path.is_file():
        raise ConfigError(f"input: no such file {str(path)!r}")
    ncol = _count_columns(path, cfg["header"])
    if ncol is not None and ncol != spec.d:
        raise ConfigError(f"dims: {cfg['dims']!r} sums to {spec.d} columns but {path.name} has {ncol}")
    return load_csv(path, spec, header=cfg["header"])


def _test_config(cfg, spec) -> TestConfig:
    try:
        return TestConfig(cfg["eps_region"], cfg["grid_factor"], cfg["quadrature"], default_kernels(spec, cfg["kernel"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _bandwidths(cfg, sample, kernels):
    """Fixed list or data-driven selection; returns (Bandwidths, selection info)."""
    spec = sample.spec
    if str(cfg["bandwidths"]).strip().lower() != "auto":
        h = _floats("bandwidths", cfg["bandwidths"])
        if len(h) == 1:
            h = h * spec.d
        try:
            return Bandwidths(np.array(h), spec), {"mode": "fixed"}
        except ValueError as exc:
            raise ConfigError(f"bandwidths: {exc}") from None
    grid = bandwidth_grid(sample, cfg["n_candidates"])
    sel = select_bandwidths(sample, grid, cfg["strategy"], kernels)
    info = {
        "mode": "auto",
        "strategy": sel.strategy,
        "candidates": [c.tolist() for c in grid.candidates],
        "index": list(sel.index),
        "criterion": sel.criterion,
        "skipped": sel.skipped,
        "criterion_fallback": sel.fallback,
        "range_fallback": list(grid.fallback),
    }
    return sel.bandwidths, info


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_test(cfg) -> int:
    if cfg["calibration"] not in ("asymptotic", "permutation"):
        raise ConfigError(f"calibration: must be 'asymptotic' or 'permutation', got {cfg['calibration']!r}")
    sample = _load(cfg)
    spec = sample.spec
    tcfg = _test_config(cfg, spec)
    b, info = _bandwidths(cfg, sample, tcfg.kernels)
    vp = variance_params(spec, tcfg.kernels, cfg["resolution"])
    res = run_test(sample, b, vp, cfg["alpha"], tcfg)
    out = res.to_dict()
    out["calibration"] = cfg["calibration"]
    if cfg["calibration"] == "permutation":
        p = permutation_calibrate(sample, b, res.region, cfg["n_perm"], cfg["seed"], tcfg)
        out["p_value"] = float(p)
        out["reject"] = bool(p < cfg["alpha"])
    out["sigma_sq"] = vp.sigma_sq
    out["bandwidth_selection"] = info
    out["config"] = {k: cfg[k] for k in sorted(cfg)}
    out["software"] = {"package": "l1indep", "version": __version__, "backend": BACKEND}
    _emit(_dump(out), cfg["output"])
    verdict = "reject" if out["reject"] else "do not reject"
    print(
        f"n={res.n} T_n={res.t_n:.4f} p={out['p_value']:.4g} alpha={res.alpha:g}: {verdict} independence",
        file=sys.stderr if not cfg["output"] else sys.stdout,
    )
    return 0


def _sim_options(cfg) -> dict:
    fixed = None
    if str(cfg["bandwidths"]).strip().lower() != "auto":
        fixed = tuple(_floats("bandwidths", cfg["bandwidths"]))
        if len(fixed) == 1:
            fixed = fixed * 2
    return dict(
        alpha=cfg["alpha"],
        eps_region=cfg["eps_region"],
        grid_factor=cfg["grid_factor"],
        quadrature=cfg["quadrature"],
        n_candidates=cfg["n_candidates"],
        strategy=cfg["strategy"],
        bandwidths=fixed,
        calibration=cfg["calibration"],
        n_perm=cfg["n_perm"],
    )


def _shape_config_text() -> str:
    return "# Shape parameters used for this run.\n" + format_kv({k: repr(v) for k, v in SHAPES.items()})


def cmd_simulate(cfg) -> int:
    _require(cfg, "scenario", "n", "output")
    try:
        sc = Scenario.parse(cfg["scenario"], dependent=not cfg["independent"])
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from None
    try:
        sim = SimConfig(sc, cfg["n"], cfg["reps"], seed=cfg["seed"], **_sim_options(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = simulate(sim, cfg["workers"])
    out = Path(cfg["output"])
    report.write_csv(out)
    prov = Path(cfg["provenance"] or out.with_suffix(out.suffix + ".json"))
    prov.write_text(_dump(report.provenance()))
    shapes = Path(cfg["scenario_config"] or out.with_suffix(out.suffix + ".scenarios.cfg"))
    shapes.write_text(_shape_config_text())
    print(
        f"{sc.label()} n={sim.n}: rate {report.rate:.4f} (se {report.stderr:.4f}) over "
        f"{len(report.completed)} reps, {report.failed} failed -> {out}"
    )
    return 0


def cmd_power_curve(cfg) -> int:
    _require(cfg, "family", "values", "n", "output")
    values = _floats("values", cfg["values"])
    if not values:
        raise ConfigError("values: parameter list is empty")
    family = cfg["family"]
    try:
        name = Scenario(family).name
    except ValueError as exc:
        raise ConfigError(f"family: {exc}") from None
    if name not in FAMILY_PARAM:
        raise ConfigError(f"family: {name} is not parametric; choose from {sorted(FAMILY_PARAM)}")
    try:
        points = power_curve(
            name, values, cfg["n"], cfg["reps"], cfg["seed"], cfg["workers"], not cfg["independent"], **_sim_options(cfg)
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_curve_csv(cfg["output"], points)
    Path(cfg["scenario_config"] or cfg["output"] + ".scenarios.cfg").write_text(_shape_config_text())
    for p in points:
        print(f"{FAMILY_PARAM[name]}={p.param:g}: rate {p.rate:.4f} (se {p.stderr:.4f})")
    return 0


def cmd_sigma(cfg) -> int:
    spec = _spec(cfg)
    try:
        vp = variance_params(spec, default_kernels(spec, cfg["kernel"]), cfg["resolution"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(f"sigma_sq = {vp.sigma_sq!r}")
    print(f"ktilde = {vp.ktilde!r}")
    print(f"d = {spec.d}, kernel = {cfg['kernel']}, resolution = {vp.resolution}")
    return 0


def cmd_bandwidth(cfg) -> int:
    sample = _load(cfg)
    kernels = default_kernels(sample.spec, cfg["kernel"])
    cfg = dict(cfg, bandwidths="auto")
    b, info = _bandwidths(cfg, sample, kernels)
    info["bandwidths"] = b.h.tolist()
    _emit(_dump(info), cfg["output"])
    return 0


_COMMANDS = {
    "test": (cmd_test, ["input", "dims", "header", "alpha", "seed", "eps_region", "grid_factor", "quadrature", "kernel",
                        "bandwidths", "n_candidates", "strategy", "calibration", "n_perm", "output", "resolution"]),
    "simulate": (cmd_simulate, ["scenario", "independent", "n", "reps", "alpha", "seed", "eps_region", "grid_factor",
                                "quadrature", "bandwidths", "n_candidates", "strategy", "calibration", "n_perm",
                                "workers", "output", "provenance", "scenario_config"]),
    "power-curve": (cmd_power_curve, ["family", "values", "independent", "n", "reps", "alpha", "seed", "eps_region",
                                      "grid_factor", "quadrature", "bandwidths", "n_candidates", "strategy",
                                      "calibration", "n_perm", "workers", "output", "scenario_config"]),
    "sigma": (cmd_sigma, ["dims", "kernel", "resolution"]),
    "bandwidth": (cmd_bandwidth, ["input", "dims", "header", "kernel", "n_candidates", "strategy", "output"]),
}

_SUBCOMMAND_HELP = {
    "test": "run the test on a CSV file and print a JSON report",
    "simulate": "Monte Carlo size or power for one scenario",
    "power-curve": "rejection rates over a parametric scenario family",
    "sigma": "print the variance constant for block dimensions and kernel",
    "bandwidth": "print the data-driven bandwidths for a CSV file",
}

_HELP = {
    "input": "CSV file of observations, one row per observation",
    "dims": "block dimensions, e.g. 1,1 or 2,1,3 (default 1,1)",
    "header": "the CSV starts with a header line",
    "alpha": "test level (default 0.05)",
    "seed": "master seed for every random step (default 0)",
    "eps_region": "tail mass trimmed from the integration region (default 0.01)",
    "grid_factor": "quadrature cells per bandwidth (default 4)",
    "quadrature": "midpoint or breakpoints (default midpoint)",
    "kernel": "uniform, epanechnikov or triangular (default uniform)",
    "bandwidths": "'auto' or a comma-separated list, one per coordinate (default auto)",
    "n_candidates": "candidate bandwidths per coordinate (default 5)",
    "strategy": "ascent or exhaustive (default ascent)",
    "calibration": "asymptotic or permutation (default asymptotic)",
    "n_perm": "permutations for permutation calibration (default 199)",
    "output": "output path",
    "scenario": "scenario name with optional parameters, e.g. Sinusoid:l=3",
    "independent": "use the independence variant of the scenario",
    "n": "sample size",
    "reps": "Monte Carlo replications (default 1000)",
    "workers": "worker processes (default $L1INDEP_WORKERS or 1)",
    "provenance": "provenance JSON path (default OUTPUT.json)",
    "scenario_config": "where to write the shape parameters (default OUTPUT.scenarios.cfg)",
    "family": "Sinusoid, CircleIndicator or PowerNoise",
    "values": "comma-separated parameter values",
    "resolution": "quadrature resolution for sigma^2",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l1indep", description="L1-distance kernel test of mutual independence.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, fields) in _COMMANDS.items():
        p = sub.add_parser(name, help=_SUBCOMMAND_HELP[name])
        p.add_argument("--config", help="key = value file; flags override it")
        for dest in fields:
            conv, _ = _FIELDS[dest]
            flag = "--" + dest.replace("_", "-")
            if conv is None:
                p.add_argument(flag, dest=dest, action="store_const", const=True, default=None, help=_HELP[dest])
            else:
                p.add_argument(flag, dest=dest, type=conv, default=None, help=_HELP[dest])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func, fields = _COMMANDS[args.command]
    try:
        cfg = resolve(args, fields)
        if "workers" in cfg and cfg["workers"] is None:
            cfg["workers"] = default_workers()
        return func(cfg)
    except (ConfigError, DataError) as exc:
        print(f"l1indep {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"l1indep {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
