"""Scenario runners: build a family, evaluate both sides of an inequality across a sweep, fit growth.

Every runner takes an :class:`ExperimentConfig`, validates it before any
computation, and returns an :class:`ExperimentResult` whose records are sorted
by sweep value.  Randomness is keyed by ``(seed + trial)`` so reruns are
reproducible and independent of thread scheduling.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom

from . import __version__
from .constructions import (
    BernoulliField,
    _cached_mollifier,
    check_band_fits,
    deterministic_family,
    oscillatory_family,
    oscillatory_profiles,
    sample_h,
    smoothed_random_family,
    sobolev_family,
)
from .grid_core import (
    ConfigurationError,
    Grid,
    GridFunction,
    ParameterError,
    ResolutionError,
    lp_norm,
)
from .mixed_norms import (
    SlopeFit,
    linear_fit,
    loglog_slope,
    mixed_norm,
    pp_scaled_ratio,
    tl_norm,
)
from .operators import (
    MaximalParams,
    bochner_riesz_kernel,
    peetre_maximal,
    smoothness_modulus,
    truncate_kernel,
    windowed_maximal,
)

__all__ = [
    "ExperimentConfig",
    "SweepRecord",
    "ExperimentResult",
    "SCENARIOS",
    "default_config",
    "validate",
    "run_scenario",
    "run_peetre_sharpness",
    "run_uniformity",
    "run_deterministic",
    "run_window_scaling",
    "run_sobolev",
    "sobolev_control_corpus",
    "run_bochner_riesz",
    "run_oscillatory",
    "run_plancherel_polya",
    "persist",
    "CSV_COLUMNS",
    "thread_count",
]

CSV_COLUMNS = ("scenario", "sweep_name", "sweep_value", "seed_count", "lhs_mean", "lhs_stderr",
               "rhs_mean", "rhs_stderr", "ratio_mean", "ratio_stderr")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """All knobs of every scenario; each scenario reads the subset it needs.

    Attributes
    ----------
    scenario : str
        One of :data:`SCENARIOS`.
    sweep : list of int
        Sweep values: ``N`` (peetre, deterministic, sobolev, bochner-riesz),
        ``n`` (window), ``L`` (oscillatory, uniformity) or ``ell`` (pp).
    trials : int
        Seeds per sweep point (the random corpus size for window and pp).
    samples : int
        Monte Carlo sample count per seed (deterministic, oscillatory).
    control : bool
        Allow the bounded (non-sharp) parameter regime.
    route : str
        ``deterministic``: ``self_similar`` or ``grid``;
        ``oscillatory``: ``local`` or ``grid``.
    level : int or None
        Cube level of the random families (default: ``J``).
    kernel_offset : int
        Bochner-Riesz kernel radius is ``2**(N + kernel_offset)`` frequencies.
    constant_J : int
        Grid exponent for the Bochner-Riesz constant measurement (0 disables).
    """

    scenario: str
    d: int = 1
    J: int = 12
    p: float = 2.0
    q: float = 1.0
    sigma: float = 0.5
    m: int = 2
    gamma: float = 0.5
    lam: float = 0.55
    b: Optional[float] = None
    M: int = 5
    R: int = 2
    N: int = 9
    sweep: List[int] = field(default_factory=list)
    seed: int = 0
    trials: int = 8
    samples: int = 20000
    k_cap: Optional[int] = None
    level_offset: int = 5
    level: Optional[int] = None
    stride: Optional[int] = None
    route: str = ""
    control: bool = False
    kernel_offset: int = 5
    tail_J: int = 20
    constant_J: int = 0
    sub_samples: int = 16
    pp_m: int = 3

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


_SWEEP_NAMES = {
    "peetre": "N", "uniformity": "L", "deterministic": "N", "window": "n",
    "sobolev": "N", "bochner-riesz": "N", "oscillatory": "L", "pp": "ell",
}

_DEFAULTS: Dict[str, dict] = {
    "peetre": dict(J=16, p=2.0, q=1.0, sigma=0.5, M=5, sweep=[2, 3, 4, 5, 6], trials=8),
    "uniformity": dict(J=11, level=8, p=2.0, q=1.0, sigma=1.5, sweep=[4, 16, 64, 256], trials=8),
    "deterministic": dict(J=16, p=2.0, q=1.0, sigma=0.5, M=2, sweep=[2, 3, 4, 5], trials=8,
                          samples=20000, route="self_similar"),
    "window": dict(J=13, p=1.0, q=1.0, M=2, N=9, sweep=[0, 1, 2, 3, 4, 5], trials=4),
    "sobolev": dict(J=18, p=2.0, q=1.0, sigma=0.75, m=2, M=5, R=2, sweep=[1, 2, 3], trials=8,
                    k_cap=8, level_offset=5),
    "bochner-riesz": dict(J=21, p=1.0, q=0.8, lam=0.55, sweep=list(range(3, 12)), trials=1,
                          kernel_offset=5, tail_J=20),
    "oscillatory": dict(J=14, p=2.0, q=1.0, gamma=0.5, sweep=[4, 8, 16, 32], trials=8,
                        samples=2000, route="local"),
    "pp": dict(q=1.0, sweep=[4, 5, 6, 7, 8], trials=20, pp_m=3),
}


def default_config(scenario: str, **overrides) -> ExperimentConfig:
    """Scenario defaults updated with ``overrides``."""
    if scenario not in _DEFAULTS:
        raise ConfigurationError(f"unknown scenario {scenario!r}; choose from {sorted(_DEFAULTS)}")
    values = dict(_DEFAULTS[scenario])
    values.update(overrides)
    return ExperimentConfig(scenario=scenario, **values)


def validate(cfg: ExperimentConfig) -> None:
    """Check scenario preconditions; raises :class:`ParameterError` naming the violated one."""
    sc = cfg.scenario
    if sc not in _DEFAULTS:
        raise ConfigurationError(f"unknown scenario {sc!r}")
    if cfg.d not in (1, 2):
        raise ParameterError("d must be 1 or 2")
    if not (cfg.p > 0 and cfg.q > 0):
        raise ParameterError("p and q must be positive")
    if cfg.trials < 1:
        raise ParameterError("trials must be >= 1")
    if cfg.seed < 0:
        raise ParameterError("seed must be nonnegative")
    if not cfg.sweep:
        raise ParameterError("sweep is empty")
    if len(set(cfg.sweep)) != len(cfg.sweep):
        raise ParameterError("sweep values must be distinct")
    d, p, q, s = cfg.d, cfg.p, cfg.q, cfg.sigma
    if sc in ("peetre", "deterministic", "window", "uniformity") and q > p:
        raise ParameterError(f"q <= p required for the {sc} scenario (got q={q}, p={p})")
    if sc in ("peetre", "deterministic"):
        if s < 0:
            raise ParameterError("sigma must be nonnegative")
        if not cfg.control and s > d / q:
            raise ParameterError(
                f"sigma <= d/q required for {sc} sharpness regime (sigma={s}, d/q={d / q:g}); "
                "set control=true for the bounded regime")
        if min(cfg.sweep) < (1 if sc == "peetre" else 2):
            raise ParameterError(f"sweep values N must be >= {1 if sc == 'peetre' else 2}")
    if sc == "deterministic" and cfg.route not in ("self_similar", "grid"):
        raise ParameterError("deterministic route must be 'self_similar' or 'grid'")
    if sc == "deterministic" and cfg.route == "self_similar" and d != 1:
        raise ParameterError("the self-similar route is implemented for d = 1")
    if sc == "window":
        if min(cfg.sweep) < 0:
            raise ParameterError("window sweep n must be >= 0")
    if sc == "sobolev":
        if not (0 < s < cfg.m):
            raise ParameterError(f"0 < sigma < m required (sigma={s}, m={cfg.m})")
        if cfg.control:
            if not s > max(d / p, d / q):
                raise ParameterError("control regime needs sigma > max(d/p, d/q)")
        else:
            if not q < p:
                raise ParameterError(f"q < p required for the sobolev scenario (q={q}, p={p})")
            if not (d / p < s <= d / q):
                raise ParameterError(
                    f"d/p < sigma <= d/q required for the sobolev scenario "
                    f"(d/p={d / p:g}, sigma={s}, d/q={d / q:g})")
        if min(cfg.sweep) < 1:
            raise ParameterError("sobolev sweep N must be >= 1")
    if sc == "bochner-riesz":
        if not cfg.lam > -1:
            raise ParameterError("lambda must exceed -1")
        if not (q < p < 2):
            raise ParameterError(f"q < p < 2 required for the bochner-riesz scenario (q={q}, p={p})")
        if min(cfg.sweep) < 0:
            raise ParameterError("truncation levels N must be >= 0")
    if sc == "oscillatory":
        if not (q < p <= 2):
            raise ParameterError(f"q < p <= 2 required for the oscillatory scenario (q={q}, p={p})")
        if not (0 < cfg.gamma < 1):
            raise ParameterError("0 < gamma < 1 required")
        crit = cfg.gamma * d * (1 / p - 1 / 2)
        if cfg.b is not None and not cfg.control and abs(cfg.b - crit) > 1e-12:
            raise ParameterError(f"b = gamma d (1/p - 1/2) = {crit:g} required (got b={cfg.b})")
        if cfg.route not in ("local", "grid"):
            raise ParameterError("oscillatory route must be 'local' or 'grid'")
        if cfg.route == "local" and d != 1:
            raise ParameterError("the local route is implemented for d = 1")
        if min(cfg.sweep) < 1:
            raise ParameterError("oscillatory sweep L must be >= 1")
    if sc in ("pp",) and min(cfg.sweep) < 1:
        raise ParameterError("pp sweep ell must be >= 1")
    if sc == "uniformity" and min(cfg.sweep) < 1:
        raise ParameterError("uniformity sweep L must be >= 1")


def thread_count() -> int:
    """Worker threads, capped by the ``SHARPLAB_THREADS`` environment variable."""
    raw = os.environ.get("SHARPLAB_THREADS", "")
    try:
        cap = int(raw) if raw else 1
    except ValueError:
        raise ConfigurationError(f"SHARPLAB_THREADS must be an integer, got {raw!r}")
    return max(1, cap)


def _map_trials(fn: Callable[[int], Tuple[float, float]], cfg: ExperimentConfig
                ) -> List[Tuple[float, float]]:
    seeds = [cfg.seed + t for t in range(cfg.trials)]
    workers = min(thread_count(), len(seeds))
    if workers <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map preserves seed order, so the merge is deterministic
        return list(pool.map(fn, seeds))


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class SweepRecord:
    value: float
    seed_count: int
    lhs_mean: float
    lhs_stderr: float
    rhs_mean: float
    rhs_stderr: float
    ratio_mean: float
    ratio_stderr: float

    def row(self, scenario: str, sweep_name: str) -> List[str]:
        def f(x):
            return format(float(x), ".12g")
        return [scenario, sweep_name, f(self.value), str(self.seed_count), f(self.lhs_mean),
                f(self.lhs_stderr), f(self.rhs_mean), f(self.rhs_stderr), f(self.ratio_mean),
                f(self.ratio_stderr)]


@dataclass
class ExperimentResult:
    """Per-sweep records, the primary fit of the ratio, and metadata.

    ``extras`` holds scenario-specific diagnostics (secondary fits, dual-route
    comparisons); it is echoed into ``meta.json``.
    """

    config: ExperimentConfig
    records: List[SweepRecord]
    slope: Optional[SlopeFit]
    extras: Dict = field(default_factory=dict)
    started_at: str = ""
    duration_s: float = 0.0

    @property
    def sweep_name(self) -> str:
        return _SWEEP_NAMES[self.config.scenario]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _stats(values: Sequence[float]) -> Tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size <= 1:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _record(value, lhs: Sequence[float], rhs: Sequence[float]) -> SweepRecord:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    lm, ls = _stats(lhs)
    rm, rs = _stats(rhs)
    qm, qs = _stats(lhs / rhs)
    return SweepRecord(float(value), int(lhs.size), lm, ls, rm, rs, qm, qs)


def _finish(cfg, records, slope, extras, t0, started) -> ExperimentResult:
    records = sorted(records, key=lambda r: r.value)
    if len(records) < 3:
        slope = None
    return ExperimentResult(cfg, records, slope, extras, started, time.time() - t0)


def _start():
    return time.time(), datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# Peetre sharpness (random family) and the uniformity check
# ---------------------------------------------------------------------------

def _peetre_family_sides(N: int, cfg: ExperimentConfig, grid: Grid, seed: int):
    L = 1 << (N * cfg.d)
    n = cfg.level if cfg.level is not None else cfg.J
    fam = smoothed_random_family(N, [n] * L, cfg.M, seed, grid)
    maxed = [peetre_maximal(f, MaximalParams(cfg.sigma, r)) for f, r in zip(fam.members, fam.scales)]
    return mixed_norm(maxed, cfg.p, cfg.q), mixed_norm(fam, cfg.p, cfg.q)


def run_peetre_sharpness(cfg: ExperimentConfig) -> ExperimentResult:
    """Ratio of Peetre-maximal to plain mixed norms on the smoothed random family.

    Each sweep point ``N`` uses ``L = 2**(N d)`` members with probability
    ``2**(-N d)``, all at cube level ``level`` and scale ``2**(level - M)``.
    The primary fit is the log-log slope against ``L`` when ``sigma < d/q``
    and a linear fit against ``N**(1/q)`` otherwise.
    """
    validate(cfg)
    t0, started = _start()
    grid = Grid(cfg.d, cfg.J)
    n = cfg.level if cfg.level is not None else cfg.J
    check_band_fits(grid, 2.0 ** (n - cfg.M))
    _cached_mollifier(int(cfg.M), cfg.d, "ball")
    records = []
    for N in cfg.sweep:
        sides = _map_trials(lambda s, N=N: _peetre_family_sides(N, cfg, grid, s), cfg)
        records.append(_record(N, [a for a, _ in sides], [b for _, b in sides]))
    records.sort(key=lambda r: r.value)
    Ns = np.array([r.value for r in records])
    ratio = np.array([r.ratio_mean for r in records])
    extras = {}
    slope = None
    if len(records) >= 3:
        log_fit = loglog_slope(2.0 ** (Ns * cfg.d), ratio)
        lin_fit = linear_fit(Ns ** (1.0 / cfg.q), ratio)
        extras = {"loglog_vs_L": log_fit.as_dict(), "linear_vs_N": lin_fit.as_dict()}
        slope = log_fit if cfg.sigma < cfg.d / cfg.q else lin_fit
    return _finish(cfg, records, slope, extras, t0, started)


def run_uniformity(cfg: ExperimentConfig) -> ExperimentResult:
    """Peetre-maximal mixed norm of raw Bernoulli fields with ``a = 1/L``.

    ``L`` members at cube level ``level`` with maximal scale ``2**level``; the
    grid must resolve the cubes.  In the regime ``sigma > d/q`` the expected
    value stays bounded in ``L``.
    """
    validate(cfg)
    t0, started = _start()
    grid = Grid(cfg.d, cfg.J)
    n = cfg.level if cfg.level is not None else cfg.J - 3
    if n > grid.J:
        raise ResolutionError(f"cube level {n} needs J >= {n}")
    r = 2.0 ** n
    records = []
    for L in cfg.sweep:
        def one(seed, L=L):
            hs = [sample_h(BernoulliField(n, 1.0 / L, seed, member=k, d=cfg.d), grid)
                  for k in range(1, L + 1)]
            lhs = mixed_norm([peetre_maximal(h, MaximalParams(cfg.sigma, r)) for h in hs],
                             cfg.p, cfg.q)
            return lhs, mixed_norm(hs, cfg.p, cfg.q)
        sides = _map_trials(one, cfg)
        # an all-zero draw has rhs 0; the ratio column then uses a unit rhs
        lhs = [a for a, _ in sides]
        rhs = [b if b > 0 else 1.0 for _, b in sides]
        records.append(_record(L, lhs, rhs))
    lhs_means = [r.lhs_mean for r in sorted(records, key=lambda r: r.value)]
    extras = {"lhs_spread": float(max(lhs_means) / min(lhs_means))}
    slope = None
    if len(records) >= 3:
        slope = loglog_slope([r.value for r in sorted(records, key=lambda r: r.value)], lhs_means)
    return _finish(cfg, records, slope, extras, t0, started)


# ---------------------------------------------------------------------------
# Deterministic family
# ---------------------------------------------------------------------------

def _deterministic_members(N: int, cfg: ExperimentConfig) -> List[int]:
    top = 1 << (N * cfg.d)
    if cfg.k_cap is not None:
        top = min(top, cfg.k_cap)
    return list(range(N, top + 1))


def _deterministic_base(N: int, cfg: ExperimentConfig) -> Tuple[np.ndarray, np.ndarray]:
    """``|f_N|`` and ``Peetre(f_N)`` on the base grid."""
    grid = Grid(1, cfg.J)
    fam = deterministic_family(N, cfg.M, [N], grid)
    f = fam.members[0]
    return np.abs(f.samples), peetre_maximal(f, MaximalParams(cfg.sigma, 2.0 ** N)).samples


def _self_similar_norm(phis: Sequence[np.ndarray], J0: int, K: int, samples: int,
                       rng: np.random.Generator, p: float, q: float) -> List[float]:
    """``(E_x (sum_j phi(2^j x mod 1)^q)^(p/q))^(1/p)`` for ``j = 0..K-1`` by sampling ``x``.

    Member ``j`` reads the ``J0`` binary digits of ``x`` starting at digit
    ``j + 1``; every array in ``phis`` is evaluated on the same digits.
    """
    B = K - 1 + J0
    bits = rng.integers(0, 2, size=(samples, B), dtype=np.int64)
    idx = np.zeros(samples, dtype=np.int64)
    for i in range(J0):
        idx = (idx << 1) | bits[:, i]
    mask = (1 << J0) - 1
    accs = [np.zeros(samples) for _ in phis]
    for j in range(K):
        for acc, phi in zip(accs, phis):
            acc += phi[idx] ** q
        if j + J0 < B:
            idx = ((idx << 1) & mask) | bits[:, j + J0]
    return [float(np.mean(acc ** (p / q)) ** (1.0 / p)) for acc in accs]


def _deterministic_grid_sides(N: int, cfg: ExperimentConfig, grid: Grid):
    ks = _deterministic_members(N, cfg)
    fam = deterministic_family(N, cfg.M, ks, grid)
    maxed = [peetre_maximal(f, MaximalParams(cfg.sigma, r)) for f, r in zip(fam.members, fam.scales)]
    return mixed_norm(maxed, cfg.p, cfg.q), mixed_norm(fam, cfg.p, cfg.q)


def deterministic_support_measure(N: int, M: int, k: int, d: int = 1) -> float:
    """Exact measure of the support of ``h_k``: ``2**((k-N) d)`` cubes of side ``2**(-k-M)``."""
    return float(2 ** ((k - N) * d)) * 2.0 ** (-(k + M) * d)


def run_deterministic(cfg: ExperimentConfig) -> ExperimentResult:
    """Both sides for the deterministic family, members ``k = N .. min(2**(N d), k_cap)``.

    Route ``self_similar`` uses that member ``k`` is member ``N`` composed with
    ``x -> 2**(k-N) x`` (exactly, including its Peetre maximal function), so
    all members are read from one base grid along the binary digits of random
    points.  Route ``grid`` evaluates every member on the grid.
    """
    validate(cfg)
    t0, started = _start()
    records = []
    support_ok = True
    for N in cfg.sweep:
        ks = _deterministic_members(N, cfg)
        if cfg.route == "self_similar":
            if N + 2 > cfg.J:
                raise ResolutionError(f"base grid needs J >= {N + 2} for N={N}")
            phi, peet = _deterministic_base(N, cfg)
            def one(seed, phi=phi, peet=peet, K=len(ks)):
                rng = np.random.default_rng([seed, N])
                lhs, rhs = _self_similar_norm([peet, phi], cfg.J, K, cfg.samples, rng,
                                              cfg.p, cfg.q)
                return lhs, rhs
            sides = _map_trials(one, cfg)
        else:
            grid = Grid(cfg.d, cfg.J)
            sides = [_deterministic_grid_sides(N, cfg, grid)]
        records.append(_record(N, [a for a, _ in sides], [b for _, b in sides]))
        target = 2.0 ** (-(N + cfg.M) * cfg.d)
        support_ok &= all(deterministic_support_measure(N, cfg.M, k, cfg.d) == target for k in ks)
    records.sort(key=lambda r: r.value)
    Ns = np.array([r.value for r in records])
    rhs = np.array([r.rhs_mean for r in records])
    lhs = np.array([r.lhs_mean for r in records])
    ratio = np.array([r.ratio_mean for r in records])
    extras = {"rhs_spread": float(rhs.max() / rhs.min()), "support_measure_exact": bool(support_ok),
              "lhs_increasing": bool(np.all(np.diff(lhs) > 0))}
    slope = None
    if len(records) >= 3:
        log_fit = loglog_slope(2.0 ** (Ns * cfg.d), ratio)
        extras["loglog_vs_L"] = log_fit.as_dict()
        extras["lhs_loglog_vs_L"] = loglog_slope(2.0 ** (Ns * cfg.d), lhs).as_dict()
        extras["lhs_linear_vs_N"] = linear_fit(Ns ** (1.0 / cfg.q), lhs).as_dict()
        slope = log_fit if cfg.sigma < cfg.d / cfg.q else linear_fit(Ns ** (1.0 / cfg.q), lhs)
    return _finish(cfg, records, slope, extras, t0, started)


# ---------------------------------------------------------------------------
# Window scaling
# ---------------------------------------------------------------------------

def _spike(grid: Grid, k: int, shape: str) -> GridFunction:
    rho = grid.frequency_norm() / 2.0 ** k
    if shape == "fejer":
        spec = np.clip(1.0 - rho, 0.0, None)
    else:
        spec = np.exp(-8.0 * rho ** 2) * (rho <= 1.0)
    return GridFunction.from_spectrum(grid, spec, real=True, band_limit=(2.0 ** k, False))


def _window_corpus(cfg: ExperimentConfig, k_min: int) -> List[Tuple[str, List[GridFunction], List[int]]]:
    """Families whose member ``k`` lies in the band-limited class of radius ``2**k``."""
    grid = Grid(cfg.d, cfg.J)
    k_top = cfg.J - 2
    if k_min > k_top:
        raise ResolutionError(f"window sweep needs members at level >= {k_min}; "
                              f"requires J >= {k_min + 2}")
    corpus = []
    for k in range(k_min, k_top + 1):
        for shape in ("fejer", "gauss"):
            corpus.append((f"{shape}_{k}", [_spike(grid, k, shape)], [k]))
    ks = list(range(k_min, k_top + 1))
    for t in range(cfg.trials):
        seed = cfg.seed + t
        fam = smoothed_random_family(4, [k + cfg.M for k in ks], cfg.M, seed, grid,
                                     mollifier=_cached_mollifier(int(cfg.M), cfg.d, "cube"))
        corpus.append((f"random_{seed}", fam.members, ks))
    N = cfg.N
    det_ks = [k for k in range(max(N, k_min), k_top + 1)]
    if det_ks:
        fam = deterministic_family(N, cfg.M, det_ks, grid)
        corpus.append((f"deterministic_{N}", fam.members, det_ks))
    return corpus


def run_window_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    """Max over a corpus of ``mixed_norm({M^n_k f_k}) / mixed_norm({f_k})`` for each ``n``.

    The fit is the slope of ``log2(max ratio)`` against ``n``.
    """
    validate(cfg)
    t0, started = _start()
    k_min = max(cfg.sweep) + 2
    corpus = _window_corpus(cfg, k_min)
    records = []
    winners = {}
    for n in cfg.sweep:
        best = None
        for name, members, ks in corpus:
            rhs = mixed_norm(members, cfg.p, cfg.q)
            lhs = mixed_norm([windowed_maximal(f, k, n) for f, k in zip(members, ks)], cfg.p, cfg.q)
            if best is None or lhs / rhs > best[0] / best[1]:
                best = (lhs, rhs, name)
        winners[str(n)] = best[2]
        records.append(SweepRecord(float(n), len(corpus), best[0], 0.0, best[1], 0.0,
                                   best[0] / best[1], 0.0))
    records.sort(key=lambda r: r.value)
    slope = None
    if len(records) >= 3:
        slope = linear_fit([r.value for r in records], [math.log2(r.ratio_mean) for r in records])
    return _finish(cfg, records, slope, {"winners": winners, "corpus_size": len(corpus)},
                   t0, started)


# ---------------------------------------------------------------------------
# Sobolev scenario
# ---------------------------------------------------------------------------

def _auto_stride(J: int, target: int = 10) -> int:
    return 1 << max(0, J - target)


def _sobolev_sides(N: int, cfg: ExperimentConfig, grid: Grid, seed: int):
    fam = sobolev_family(N, cfg.R, cfg.sigma, cfg.M, seed, grid, k_cap=cfg.k_cap,
                         level_offset=cfg.level_offset)
    G = fam.combined()
    stride = cfg.stride if cfg.stride is not None else _auto_stride(grid.J)
    D = smoothness_modulus(G, cfg.m, cfg.sigma, cfg.q, stride=stride)
    return lp_norm(D, cfg.p), tl_norm(G, cfg.p, cfg.q, cfg.sigma)


def run_sobolev(cfg: ExperimentConfig) -> ExperimentResult:
    """``||D(G)||_p`` against ``tl_norm(G)`` for the truncated weighted random family.

    ``G`` is the sum of the first ``min(2**(N d), k_cap)`` members; the
    smoothness modulus is evaluated on a strided subgrid.  The fit is the
    log-log slope of the ratio against the member count.
    """
    validate(cfg)
    t0, started = _start()
    grid = Grid(cfg.d, cfg.J)
    records = []
    counts = []
    for N in cfg.sweep:
        L = 1 << (N * cfg.d)
        counts.append(L if cfg.k_cap is None else min(L, cfg.k_cap))
        sides = _map_trials(lambda s, N=N: _sobolev_sides(N, cfg, grid, s), cfg)
        records.append(_record(N, [a for a, _ in sides], [b for _, b in sides]))
    order = np.argsort(cfg.sweep)
    records.sort(key=lambda r: r.value)
    counts = [counts[i] for i in order]
    ratio = np.array([r.ratio_mean for r in records])
    extras = {"member_counts": counts,
              "ratio_strictly_increasing": bool(np.all(np.diff(ratio) > 0)),
              "ratio_spread": float(ratio.max() / ratio.min())}
    slope = None
    if len(records) >= 3 and len(set(counts)) >= 2:
        slope = loglog_slope(counts, ratio)
    return _finish(cfg, records, slope, extras, t0, started)


def sobolev_control_corpus(cfg: ExperimentConfig, count: int = 20, J: int = 10
                           ) -> Dict[str, float]:
    """``||D f||_p / tl_norm(f)`` over random band-limited mean-zero functions.

    Bands are ``2**j`` for random ``j`` in ``2..J-4``; returns the min, max and
    spread of the ratio.
    """
    if not cfg.sigma > max(cfg.d / cfg.p, cfg.d / cfg.q):
        raise ParameterError("control corpus needs sigma > max(d/p, d/q)")
    if not (0 < cfg.sigma < cfg.m):
        raise ParameterError("0 < sigma < m required")
    grid = Grid(cfg.d, J)
    rng = np.random.default_rng([cfg.seed, 6])
    rho = grid.frequency_norm()
    ratios = []
    for _ in range(count):
        r = 2.0 ** rng.integers(2, J - 3)
        z = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        spec = np.where((rho <= r) & (rho > 0), z, 0.0)
        f = GridFunction.from_spectrum(grid, spec, real=True, band_limit=(r, False))
        lhs = lp_norm(smoothness_modulus(f, cfg.m, cfg.sigma, cfg.q), cfg.p)
        ratios.append(lhs / tl_norm(f, cfg.p, cfg.q, cfg.sigma))
    ratios = np.array(ratios)
    return {"min": float(ratios.min()), "max": float(ratios.max()),
            "spread": float(ratios.max() / ratios.min()), "ratios": ratios.tolist()}


# ---------------------------------------------------------------------------
# Bochner-Riesz
# ---------------------------------------------------------------------------

def truncated_kernel_norm(lam: float, N: int, q: float, grid: Grid, kernel_offset: int
                          ) -> float:
    """``||K_lam * zeta(2**-N |.|)||_q`` over the whole space, computed on the torus.

    The torus kernel of radius ``r = 2**(N + kernel_offset)`` approximates
    ``r^d K(r x)``; rescaling gives the norm of the unit-radius kernel.
    """
    r = 2.0 ** (N + kernel_offset)
    check_band_fits(grid, r)
    K = bochner_riesz_kernel(lam, r, grid)
    KN = truncate_kernel(K, N, unit=1.0 / r)
    return r ** (grid.d / q - grid.d) * lp_norm(KN, q)


def kernel_tail_exponent(lam: float, grid: Grid, r: float, u_range=(8.0, 256.0),
                         bins: int = 16) -> SlopeFit:
    """Log-log slope of the envelope of ``|K_lam|`` against ``|x|`` in kernel units.

    The envelope is the max of ``|K|`` over log-spaced shells in ``u_range``.
    """
    K = bochner_riesz_kernel(lam, r, grid)
    u = grid.periodic_distance() * r
    mag = np.abs(K.samples) / r ** grid.d
    edges = np.geomspace(u_range[0], u_range[1], bins + 1)
    if u_range[1] > 0.5 * r:
        raise ResolutionError("tail range exceeds half the period in kernel units")
    xs, ys = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (u >= lo) & (u < hi)
        if np.any(sel):
            xs.append(math.sqrt(lo * hi))
            ys.append(float(mag[sel].max()))
    return loglog_slope(xs, ys)


def bochner_riesz_constant(lam: float, N: int, cfg: ExperimentConfig, seed: int) -> float:
    """Empirical vector-valued constant for dilates of the truncated kernel.

    ``L = 2**(N d)`` smoothed random members at a common scale ``r`` are each
    convolved with ``r^d K^N(r .)``; returns the ratio of mixed norms.
    """
    grid = Grid(cfg.d, cfg.constant_J)
    r = 2.0 ** (cfg.constant_J - 3)
    if 2.0 ** (N + 3) > r:
        raise ResolutionError(f"truncation N={N} needs constant_J >= {N + 6}")
    K = truncate_kernel(bochner_riesz_kernel(lam, r, grid), N, unit=1.0 / r)
    # torus coefficients of r^d K^N(r .) are the continuum transform at xi / r
    mult = K.spectrum
    L = 1 << (N * cfg.d)
    fam = smoothed_random_family(N, [cfg.constant_J - 3 + cfg.M] * L, cfg.M, seed, grid)
    out = [GridFunction.from_spectrum(grid, mult * f.spectrum, real=True) for f in fam.members]
    return mixed_norm(out, cfg.p, cfg.q) / mixed_norm(fam, cfg.p, cfg.q)


def run_bochner_riesz(cfg: ExperimentConfig) -> ExperimentResult:
    """Growth of ``||K^N_lam||_q`` in the truncation level ``N``.

    ``lhs`` is the truncated kernel norm; ``rhs`` is the empirical constant
    when ``constant_J > 0`` and 1 otherwise.  The fit is the linear slope of
    ``log ||K^N||_q`` against ``N``.  Extras carry the relative increments and
    the tail-decay exponent measured on a ``2**tail_J`` grid.
    """
    validate(cfg)
    t0, started = _start()
    grid = Grid(cfg.d, cfg.J)
    check_band_fits(grid, 2.0 ** (max(cfg.sweep) + cfg.kernel_offset))
    records = []
    norms = []
    for N in sorted(cfg.sweep):
        val = truncated_kernel_norm(cfg.lam, N, cfg.q, grid, cfg.kernel_offset)
        norms.append(val)
        if cfg.constant_J > 0:
            consts = _map_trials(lambda s, N=N: (bochner_riesz_constant(cfg.lam, N, cfg, s), 0.0), cfg)
            rhs = [c for c, _ in consts]
            records.append(_record(N, [val] * len(rhs), rhs))
        else:
            records.append(_record(N, [val], [1.0]))
    norms = np.array(norms)
    increments = (np.diff(norms) / norms[:-1]).tolist()
    tail_grid = Grid(cfg.d, cfg.tail_J)
    tail = kernel_tail_exponent(cfg.lam, tail_grid, 2.0 ** (cfg.tail_J - 8))
    extras = {"increments": increments, "tail_fit": tail.as_dict(),
              "tail_expected": -(cfg.d + 1) / 2 - cfg.lam,
              "critical_lambda": cfg.d * (1 / cfg.q - 0.5) - 0.5}
    slope = None
    if len(records) >= 3:
        slope = linear_fit(sorted(cfg.sweep), np.log(norms))
    return _finish(cfg, records, slope, extras, t0, started)


# ---------------------------------------------------------------------------
# Oscillatory multipliers
# ---------------------------------------------------------------------------

def _oscillatory_b(cfg: ExperimentConfig) -> float:
    if cfg.b is not None:
        return cfg.b
    return cfg.gamma * cfg.d * (1 / cfg.p - 0.5)


def annulus_constant(gamma: float) -> float:
    """Stationary radius factor: the annulus sits at ``gamma/(2 pi) * 2**(-k(1-gamma))``."""
    return gamma / (2.0 * math.pi)


@dataclass
class _LevelTables:
    """Member ``k`` of the oscillatory family sampled around a point, in cube units.

    ``values[j, o]`` is the contribution of the cube ``offs[j]`` cubes away from
    the cube of ``x`` when ``x`` sits at sub-position ``(o + 1/2)/S`` in its cube.
    """

    offs: np.ndarray
    values: np.ndarray
    full: bool


def _level_tables(k: int, gamma: float, S: int, reach: float, with_phase: bool, pad: int = 32
                  ) -> _LevelTables:
    eta_hat, eta_tilde_hat = oscillatory_profiles()
    W = int(math.ceil(reach)) + pad
    P = 1 << max(1, int(math.ceil(math.log2(4 * W))))
    full = P >= (1 << k)
    if full:
        P = 1 << k
    n = P * S
    j = np.fft.fftfreq(n, 1.0 / n)
    u = np.abs(j / P)
    coef = eta_tilde_hat(u) / P * np.exp(1j * np.pi * j / (S * P))
    if with_phase:
        coef = coef * eta_hat(u) * np.exp(1j * (2.0 ** k * u) ** gamma)
    tab = np.fft.ifft(coef) * n
    offs = np.arange(P) if full else np.arange(-W, W + 1)
    o = np.arange(S)
    idx = (o[None, :] - S * offs[:, None] - S // 2) % n
    return _LevelTables(offs, tab[idx], full)


def _level_moments(tabs: _LevelTables, a: float, amp: float, q: float, T: int,
                   rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """``E|amp sum_Q theta_Q v_Q|^q`` and its second moment for each sub-position.

    Small windows are sampled directly.  Large windows split on the number of
    occupied cubes: none contributes 0, exactly one is averaged exactly over
    its position, two or more are sampled conditionally.
    """
    G = tabs.values
    Wn, S = G.shape
    if Wn <= 2048:
        bits = (rng.random((T, Wn)) < a).astype(float)
        Y = np.abs(amp * (bits @ G)) ** q
        return Y.mean(axis=0), (Y * Y).mean(axis=0)
    p0, p1 = binom.pmf([0, 1], Wn, a)
    p2 = float(binom.sf(1, Wn, a))
    y1 = np.abs(amp * G) ** q
    m1 = p1 * y1.mean(axis=0)
    m2 = p1 * (y1 * y1).mean(axis=0)
    if p2 > 0.0:
        v = rng.random(T)
        cs = np.maximum(binom.isf(v * p2, Wn, a).astype(int), 2)
        s1 = np.zeros(S)
        s2 = np.zeros(S)
        for c in np.unique(cs):
            cnt = int(np.sum(cs == c))
            pos = rng.integers(0, Wn, size=(cnt, c))
            while True:
                srt = np.sort(pos, axis=1)
                dup = np.any(srt[:, 1:] == srt[:, :-1], axis=1)
                if not np.any(dup):
                    break
                pos[dup] = rng.integers(0, Wn, size=(int(dup.sum()), c))
            Y = np.abs(amp * G[pos].sum(axis=1)) ** q
            s1 += Y.sum(axis=0)
            s2 += (Y * Y).sum(axis=0)
        m1 = m1 + p2 * s1 / T
        m2 = m2 + p2 * s2 / T
    return m1, m2


def _combine_levels(m1s: List[np.ndarray], m2s: List[np.ndarray], power: int) -> float:
    """``E_x[(sum_k Y_k)^power]`` for ``power`` in {1, 2} with independent levels.

    Level ``k`` sees ``x`` through the digits ``k+1 .. k+log2(S)`` of ``x``,
    so levels closer than ``log2(S)`` share digits; those pairs are averaged
    over the joint digits exactly.
    """
    if power == 1:
        return float(sum(m.mean() for m in m1s))
    S = m1s[0].size
    b = int(round(math.log2(S)))
    L = len(m1s)
    means = [m.mean() for m in m1s]
    total = float(sum(m.mean() for m in m2s))
    for lo in range(L):
        for hi in range(lo + 1, L):
            dlt = hi - lo
            if dlt >= b:
                total += 2.0 * means[lo] * means[hi]
                continue
            z = np.arange(1 << (b + dlt))
            total += 2.0 * float(np.mean(m1s[lo][z >> dlt] * m1s[hi][z & (S - 1)]))
    return total


def _oscillatory_local_sides(L: int, cfg: ExperimentConfig, seed: int,
                             cache: Dict[int, Tuple[_LevelTables, _LevelTables]]):
    p, q, gamma, d = cfg.p, cfg.q, cfg.gamma, cfg.d
    ratio = p / q
    power = int(round(ratio))
    if abs(ratio - power) > 1e-12 or power not in (1, 2):
        raise ParameterError("the local route supports p = q or p = 2q")
    b = _oscillatory_b(cfg)
    S = cfg.sub_samples
    rng = np.random.default_rng([seed, L])
    c_gamma = annulus_constant(gamma)
    M1 = {"lhs": [], "rhs": []}
    M2 = {"lhs": [], "rhs": []}
    for k in range(1, L + 1):
        if k not in cache:
            reach = 3.0 * c_gamma * 2.0 ** (k * (1 - gamma))
            cache[k] = (_level_tables(k, gamma, S, reach, True), _level_tables(k, gamma, S, 0.0, False))
        lhs_tab, rhs_tab = cache[k]
        a_k = 2.0 ** (-k * gamma * d)
        beta_k = a_k ** (-1.0 / p)
        for name, tab, amp in (("lhs", lhs_tab, beta_k * 2.0 ** (-k * b)), ("rhs", rhs_tab, beta_k)):
            m1, m2 = _level_moments(tab, a_k, amp, q, cfg.samples, rng)
            M1[name].append(m1)
            M2[name].append(m2)
    lhs = _combine_levels(M1["lhs"], M2["lhs"], power) ** (1.0 / p)
    rhs = _combine_levels(M1["rhs"], M2["rhs"], power) ** (1.0 / p)
    return lhs, rhs


def oscillatory_grid_sides(L: int, cfg: ExperimentConfig, seed: int) -> Tuple[float, float]:
    """Both sides for one realization of the oscillatory family on the grid."""
    grid = Grid(cfg.d, cfg.J)
    fam = oscillatory_family(L, cfg.gamma, cfg.p, seed, grid)
    eta_hat, _ = oscillatory_profiles()
    rho = grid.frequency_norm()
    b = _oscillatory_b(cfg)
    out = []
    for k, f in enumerate(fam.members, start=1):
        mult = np.exp(1j * rho ** cfg.gamma) * eta_hat(rho / 2.0 ** k) * 2.0 ** (-k * b)
        out.append(np.fft.ifftn(mult * f.spectrum, norm="forward"))
    return mixed_norm(out, cfg.p, cfg.q), mixed_norm(fam, cfg.p, cfg.q)


def run_oscillatory(cfg: ExperimentConfig) -> ExperimentResult:
    """``mixed_norm({2^(-kb) T_k f_k})`` and ``mixed_norm({f_k})`` for the oscillatory family.

    ``T_k`` multiplies by ``exp(i|xi|^gamma) eta^(2^-k xi)``.  Route ``local``
    computes the expectation over the random family semi-analytically from
    per-level moments at a random point (levels up to 40 are feasible); route
    ``grid`` evaluates realizations on the grid (``L <= J - 2``).  The primary
    fit is the log-log slope of the ratio against ``L``; extras hold the lhs
    and rhs slopes separately.
    """
    validate(cfg)
    t0, started = _start()
    if cfg.route == "grid" and max(cfg.sweep) > cfg.J - 2:
        raise ResolutionError(f"grid route needs J >= {max(cfg.sweep) + 2}")
    cache: Dict[int, Tuple[_LevelTables, _LevelTables]] = {}
    records = []
    for L in sorted(cfg.sweep):
        if cfg.route == "local":
            sides = [_oscillatory_local_sides(L, cfg, cfg.seed + t, cache) for t in range(cfg.trials)]
        else:
            sides = _map_trials(lambda s, L=L: oscillatory_grid_sides(L, cfg, s), cfg)
        records.append(_record(L, [a for a, _ in sides], [b for _, b in sides]))
    extras = {"b": _oscillatory_b(cfg), "annulus_constant": annulus_constant(cfg.gamma)}
    slope = None
    if len(records) >= 3:
        Ls = [r.value for r in records]
        slope = loglog_slope(Ls, [r.ratio_mean for r in records])
        extras["lhs_slope"] = loglog_slope(Ls, [r.lhs_mean for r in records]).as_dict()
        extras["rhs_slope"] = loglog_slope(Ls, [r.rhs_mean for r in records]).as_dict()
    return _finish(cfg, records, slope, extras, t0, started)


# ---------------------------------------------------------------------------
# Sampling sums
# ---------------------------------------------------------------------------

def random_band_limited(grid: Grid, r: float, rng: np.random.Generator) -> GridFunction:
    """Real function with independent Gaussian coefficients on ``|xi| <= r``."""
    rho = grid.frequency_norm()
    z = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    spec = np.where(rho <= r, z, 0.0)
    return GridFunction.from_spectrum(grid, spec, real=True, band_limit=(r, False))


def run_plancherel_polya(cfg: ExperimentConfig) -> ExperimentResult:
    """Empirical two-sided constants of the sampling sums, per band ``2**ell``.

    ``lhs`` is the largest scaled max-sampler sum over the corpus, ``rhs`` the
    smallest scaled min-sampler sum; their ratio is the empirical band width.
    """
    validate(cfg)
    t0, started = _start()
    records = []
    for ell in sorted(cfg.sweep):
        grid = Grid(cfg.d, ell + cfg.pp_m + 3)
        rng = np.random.default_rng([cfg.seed, ell])
        upper, lower = [], []
        for _ in range(cfg.trials):
            f = random_band_limited(grid, 2.0 ** ell, rng)
            upper.append(pp_scaled_ratio(f, ell, cfg.pp_m, cfg.q, "max"))
            lower.append(pp_scaled_ratio(f, ell, cfg.pp_m, cfg.q, "min"))
        C, c = max(upper), min(lower)
        records.append(SweepRecord(float(ell), cfg.trials, C, 0.0, c, 0.0, C / c, 0.0))
    ratio = np.array([r.ratio_mean for r in records])
    extras = {"band_drift": float(ratio.max() / ratio.min())}
    slope = None
    if len(records) >= 3:
        slope = linear_fit([r.value for r in records], np.log2(ratio))
    return _finish(cfg, records, slope, extras, t0, started)


# ---------------------------------------------------------------------------
# Dispatch and persistence
# ---------------------------------------------------------------------------

SCENARIOS: Dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "peetre": run_peetre_sharpness,
    "uniformity": run_uniformity,
    "deterministic": run_deterministic,
    "window": run_window_scaling,
    "sobolev": run_sobolev,
    "bochner-riesz": run_bochner_riesz,
    "oscillatory": run_oscillatory,
    "pp": run_plancherel_polya,
}


def run_scenario(cfg: ExperimentConfig) -> ExperimentResult:
    if cfg.scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {cfg.scenario!r}")
    return SCENARIOS[cfg.scenario](cfg)


def results_csv(result: ExperimentResult) -> str:
    """The ``results.csv`` text; identical for identical config and seed."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in result.records:
        w.writerow(rec.row(result.config.scenario, result.sweep_name))
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def meta_dict(result: ExperimentResult) -> dict:
    slope = result.slope
    return _jsonable({
        "scenario": result.config.scenario,
        "config": result.config.to_dict(),
        "seed": result.config.seed,
        "slope": None if slope is None else slope.slope,
        "slope_r2": None if slope is None else slope.r_squared,
        "started_at": result.started_at,
        "duration_s": round(result.duration_s, 3),
        "version": __version__,
        "extras": result.extras,
    })


def persist(result: ExperimentResult, directory) -> Tuple[Path, Path]:
    """Write ``results.csv`` and ``meta.json`` into ``directory``."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "results.csv"
        meta_path = out / "meta.json"
        csv_path.write_text(results_csv(result), encoding="utf-8")
        meta_path.write_text(json.dumps(meta_dict(result), indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return csv_path, meta_path
