"""Command-line front end.

Configs are plain ``key = value`` files (``#`` starts a comment).  Keys are the
fields of :class:`~sharplab.experiments.ExperimentConfig`; unknown keys are
rejected.  Flags override the file, which overrides scenario defaults.

Exit codes: 0 success, 1 runtime failure (or a failing verify group), 2 invalid
configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
import typing
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import constructions
from .grid_core import (
    ConfigurationError,
    ConstructionError,
    ParameterError,
    ResolutionError,
    SharplabError,
)

SUBCOMMANDS = ("peetre", "deterministic", "window", "sobolev", "bochner-riesz", "oscillatory")
EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class ConfigError(SharplabError):
    """Malformed or unknown configuration entry."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def parse_sweep(text: str) -> List[int]:
    """``"a..b"`` (inclusive) or a comma list such as ``"4,8,16"``."""
    text = text.strip().strip("[]")
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ConfigError(f"empty sweep range {text!r}")
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse sweep {text!r}; use 'a..b' or a comma list") from None


def _field_types() -> Dict[str, object]:
    from .experiments import ExperimentConfig
    hints = typing.get_type_hints(ExperimentConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, raw: str, kind) -> object:
    raw = raw.strip()
    origin = typing.get_origin(kind)
    args = typing.get_args(kind)
    if origin is typing.Union and type(None) in args:
        if raw.lower() in ("none", ""):
            return None
        kind = next(a for a in args if a is not type(None))
        origin = typing.get_origin(kind)
    try:
        if key == "sweep":
            return parse_sweep(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for key {key!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, object]:
    """Parse ``key = value`` lines with strict key checking."""
    types = _field_types()
    out: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = _coerce(key, value, types[key])
    return out


def parse_and_validate(argv: Sequence[str]):
    """Parse a run subcommand's arguments into a validated config.

    Returns ``(config, args)``.
    """
    from .experiments import default_config, validate

    args = build_parser().parse_args(list(argv))
    if args.command not in SUBCOMMANDS:
        raise ConfigError(f"{args.command!r} is not a run subcommand")
    values: Dict[str, object] = {}
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values.update(parse_config_text(text, str(path)))
    scenario = values.pop("scenario", args.command)
    if scenario != args.command:
        raise ConfigError(f"config is for scenario {scenario!r}, not {args.command!r}")
    types = _field_types()
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        key = key.replace("-", "_")
        if key not in types or key == "scenario":
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, value, types[key])
    if args.seed is not None:
        values["seed"] = args.seed
    if args.trials is not None:
        values["trials"] = args.trials
    if args.grid_exp is not None:
        values["J"] = args.grid_exp
    if args.sweep is not None:
        values["sweep"] = parse_sweep(args.sweep)
    cfg = default_config(args.command, **values)
    validate(cfg)
    return cfg, args


# ---------------------------------------------------------------------------
# Verify groups
# ---------------------------------------------------------------------------

def _check(cond: bool, message: str):
    if not cond:
        raise AssertionError(message)


def _group_grid() -> str:
    from .grid_core import DyadicCube, Grid, GridFunction, cube_indicator, dft, idft, lp_norm
    rng = np.random.default_rng(0)
    g = Grid(1, 8)
    f = GridFunction(g, rng.standard_normal(g.n))
    back = idft(dft(f)).samples.real
    _check(np.allclose(back, f.samples, atol=1e-12), "DFT round trip")
    _check(abs(lp_norm(np.ones(g.n), 3.0) - 1.0) < 1e-14, "norm of the constant 1")
    cube = cube_indicator(Grid(2, 6), DyadicCube(3, (1, 2)))
    _check(abs(lp_norm(cube, 1) - 2.0 ** -6) < 1e-15, "cube measure")
    return "dft, norms, cubes"


def _group_moments() -> str:
    from .constructions import bernoulli_moment_closed_form, bernoulli_moment_enumerated
    worst = 0.0
    for L in range(1, 11):
        for a in (0.1, 0.5, 0.9):
            for r in (0.5, 1.0, 2.0, 3.0):
                e = bernoulli_moment_enumerated(L, a, r)
                worst = max(worst, abs(bernoulli_moment_closed_form(L, a, r) - e) / e)
    _check(worst < 1e-12, f"closed form off by {worst:.2e}")
    _check(bernoulli_moment_closed_form(7, 0.3, 1) == 7 * 0.3, "first moment identity")
    return f"max rel err {worst:.1e}"


def _group_mollifier() -> str:
    from .constructions import Mollifier, check_band_fits
    from .grid_core import Grid
    profile = constructions.bump_profile
    t = np.linspace(0.0, 1.5, 3001)
    vals = np.asarray(profile(t), dtype=float)
    outside = (t <= 0.5) | (t >= 1.0)
    _check(np.all(vals[outside] == 0.0), "profile leaks outside the annulus")
    _check(np.all(vals >= 0.0), "profile is negative somewhere")
    moll = Mollifier(5, 1, "ball", profile=profile)
    radii = np.linspace(0.0, moll.radius, 513)
    _check(moll.unit_values(radii).min() >= 1.0 - 1e-9, "lower bound on the ball fails")
    g = Grid(1, 10)
    check_band_fits(g, 64)
    spec = moll.grid_spectrum(g, 64)
    rho = g.frequency_norm()
    _check(np.all(spec[(rho <= 32) | (rho >= 64)] == 0.0), "spectrum leaves the annulus")
    return f"constant {moll.constant:.4g}"


def _group_operators() -> str:
    from scipy import integrate
    from .grid_core import Grid, GridFunction
    from .operators import MaximalParams, peetre_maximal, smoothness_modulus
    rng = np.random.default_rng(1)
    g = Grid(1, 7)
    a = rng.standard_normal(g.n)
    got = peetre_maximal(GridFunction(g, a), MaximalParams(1.5, 10.0)).samples
    dist = g.periodic_distance()
    ref = np.array([np.max(np.abs(np.roll(a, -i)) / (1 + 10.0 * dist) ** 1.5) for i in range(g.n)])
    _check(np.allclose(got, ref, rtol=1e-12), "Peetre maximal vs brute force")
    g = Grid(1, 10)
    f = GridFunction(g, np.exp(2j * np.pi * g.axis()))
    D = smoothness_modulus(f, 1, 0.5, 2.0).samples
    exact = integrate.quad(lambda t: (2 * np.sin(np.pi * t)) ** 2 * t ** -2, 0, 0.5)[0] + 8.0
    _check(abs(D[0] ** 2 / exact - 1) < 0.05, "smoothness modulus oracle")
    return "peetre, modulus"


def _group_norms() -> str:
    from .grid_core import Grid, GridFunction, lp_norm
    from .mixed_norms import loglog_slope, mixed_norm, pp_discrete_sum, tl_norm
    rng = np.random.default_rng(2)
    g = Grid(1, 9)
    f = GridFunction(g, rng.standard_normal(g.n))
    _check(abs(mixed_norm([f] * 4, 2, 1) - 4 * lp_norm(f, 2)) < 1e-12, "repeated members")
    members = [GridFunction(g, rng.standard_normal(g.n)) for _ in range(3)]
    lhs = mixed_norm(members, 3, 3)
    rhs = sum(lp_norm(m, 3) ** 3 for m in members) ** (1 / 3)
    _check(abs(lhs - rhs) < 1e-12 * rhs, "p = q interchange")
    one = GridFunction(g, np.ones(g.n), band_limit=(0, False))
    _check(abs(pp_discrete_sum(one, 3, 3, 1) - 2.0 ** 6) < 1e-9, "sampling sum of 1")
    spec = np.where(g.frequency_norm() <= 40, rng.standard_normal(g.n), 0.0)
    h = GridFunction.from_spectrum(g, spec, real=True, band_limit=(40, False))
    r = tl_norm(h, 2, 2, 0) / lp_norm(h, 2)
    _check(0.25 < r <= 1.0 + 1e-12, "Littlewood-Paley ratio")
    _check(abs(loglog_slope([1, 2, 4], [1, 4, 16]).slope - 2) < 1e-12, "slope fit")
    return "mixed, tl, pp, slope"


def _group_experiments() -> str:
    from .experiments import default_config, results_csv, run_scenario
    cfg = default_config("peetre", J=10, M=5, sweep=[1, 2, 3], trials=2)
    a = results_csv(run_scenario(cfg))
    b = results_csv(run_scenario(cfg))
    _check(a == b, "rerun differs")
    return "rerun byte-identical"


VERIFY_GROUPS: Dict[str, Callable[[], str]] = {
    "grid": _group_grid,
    "moments": _group_moments,
    "mollifier": _group_mollifier,
    "operators": _group_operators,
    "norms": _group_norms,
    "experiments": _group_experiments,
}


def verify(groups: Optional[Sequence[str]] = None, out=None) -> int:
    """Run invariant groups and print a pass/fail table; returns the exit code."""
    out = out if out is not None else sys.stdout
    names = list(VERIFY_GROUPS) if not groups else list(groups)
    for name in names:
        if name not in VERIFY_GROUPS:
            print(f"error: unknown verify group {name!r}; choose from {sorted(VERIFY_GROUPS)}",
                  file=sys.stderr)
            return EXIT_INVALID
    failed = []
    print(f"{'group':<12} {'status':<6} {'seconds':>8}  detail", file=out)
    for name in names:
        t0 = time.time()
        try:
            detail, status = VERIFY_GROUPS[name](), "pass"
        except Exception as exc:  # any failure marks the group red
            detail, status = f"{type(exc).__name__}: {exc}", "FAIL"
            failed.append(name)
        print(f"{name:<12} {status:<6} {time.time() - t0:8.2f}  {detail}", file=out)
    if failed:
        print(f"verify failed: first failing group is {failed[0]!r}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sharplab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sharplab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", metavar="PATH", help="key = value config file")
        p.add_argument("--out", metavar="DIR", help="write results.csv and meta.json here")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--grid-exp", type=int, metavar="J", help="grid exponent J")
        p.add_argument("--sweep", metavar="A..B", help="sweep range 'a..b' or list '4,8,16'")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.add_argument("--dry-run", action="store_true",
                       help="print the resolved config and exit without computing")
    v = sub.add_parser("verify", help="run the invariant self-check battery")
    v.add_argument("--group", action="append", metavar="NAME",
                   help=f"run only this group (repeatable): {', '.join(VERIFY_GROUPS)}")
    return parser


def _summary(result, out) -> None:
    name = result.sweep_name
    print(f"{name:>6} {'seeds':>5} {'lhs':>12} {'rhs':>12} {'ratio':>10} {'stderr':>9}", file=out)
    for r in result.records:
        print(f"{r.value:>6g} {r.seed_count:>5d} {r.lhs_mean:>12.5g} {r.rhs_mean:>12.5g} "
              f"{r.ratio_mean:>10.5g} {r.ratio_stderr:>9.2g}", file=out)
    if result.slope is not None:
        print(f"slope {result.slope.slope:.4f}  r2 {result.slope.r_squared:.4f}", file=out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    if args.command == "verify":
        return verify(args.group)
    from .experiments import persist, run_scenario
    try:
        cfg, args = parse_and_validate(argv)
    except (ConfigError, ConfigurationError, ParameterError, ResolutionError,
            ConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        result = run_scenario(cfg)
    except (ConfigurationError, ParameterError, ResolutionError, ConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _summary(result, sys.stdout)
    if args.out:
        try:
            csv_path, meta_path = persist(result, args.out)
        except OSError as exc:
            print(f"runtime failure: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"wrote {csv_path} and {meta_path}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
