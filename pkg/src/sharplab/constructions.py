"""Test-function families: Bernoulli cube fields, mollified families, moment oracles.

Every random bit is drawn from a keyed Philox stream so that the bit of a cube
depends only on ``(seed, member, level, cube index)``: rebuilding a family,
building members in another order, or reading a single window of cubes all
return the same values.

Convolutions with mollifiers are evaluated on the frequency side from the exact
Fourier coefficients of the (continuum) cube indicators, so cubes finer than
the grid are allowed as long as the mollified band fits below Nyquist.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, j0, logsumexp, stirling2

from .grid_core import (
    ConfigurationError,
    ConstructionError,
    Grid,
    GridFunction,
    ParameterError,
    ResolutionError,
)

__all__ = [
    "bump_profile",
    "smooth_step",
    "plateau_profile",
    "bernoulli_uniforms",
    "BernoulliField",
    "sample_h",
    "cube_field_spectrum",
    "bernoulli_moment_closed_form",
    "bernoulli_moment_enumerated",
    "moment_mc",
    "Mollifier",
    "build_mollifier",
    "FunctionFamily",
    "smoothed_random_family",
    "deterministic_family",
    "deterministic_support",
    "sobolev_family",
    "oscillatory_family",
    "oscillatory_profiles",
    "save_family",
    "load_family",
]

# Largest number of cubes materialized for one Bernoulli field.
MAX_FIELD_CUBES = 1 << 24


# ---------------------------------------------------------------------------
# Smooth profiles
# ---------------------------------------------------------------------------

def bump_profile(t):
    """C-infinity bump ``exp(-1/(1-(4t-3)^2))`` supported on ``(1/2, 1)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0.5) & (t < 1.0)
    s = 4.0 * t[inside] - 3.0
    out[inside] = np.exp(-1.0 / (1.0 - s * s))
    return out


def smooth_step(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``, monotone between."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out


def plateau_profile(t, inner0, inner1, outer0, outer1):
    """Smooth radial plateau: 1 on ``[inner0, inner1]``, 0 outside ``(outer0, outer1)``.

    ``outer0 <= inner0 <= inner1 <= outer1``; an ``outer0`` of 0 with
    ``inner0`` of 0 gives a low-pass profile.
    """
    t = np.asarray(t, dtype=float)
    if inner0 > 0:
        rise = smooth_step((t - outer0) / (inner0 - outer0))
    else:
        rise = np.ones_like(t)
    fall = smooth_step((outer1 - t) / (outer1 - inner1))
    return rise * fall


# ---------------------------------------------------------------------------
# Bernoulli fields
# ---------------------------------------------------------------------------

def _philox_key(seed: int, member: int, level: int) -> np.ndarray:
    if seed < 0 or member < 0 or level < 0:
        raise ParameterError("seed, member and level must be nonnegative")
    return np.array([seed & 0xFFFFFFFFFFFFFFFF, ((member & 0xFFFFFFFF) << 32) | (level & 0xFFFFFFFF)],
                    dtype=np.uint64)


def bernoulli_uniforms(seed: int, member: int, level: int, start: int, count: int) -> np.ndarray:
    """Uniforms ``U_start, ..., U_{start+count-1}`` of the stream keyed by (seed, member, level).

    ``U_j`` is built from the ``j``-th 64-bit Philox output (53 high bits), so
    any window of the stream can be read without generating its prefix.
    """
    if count <= 0:
        return np.zeros(0)
    block, offset = divmod(int(start), 4)
    bg = np.random.Philox(key=_philox_key(seed, member, level),
                          counter=np.array([block, 0, 0, 0], dtype=np.uint64))
    raw = bg.random_raw(offset + count)[offset:]
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class BernoulliField:
    """Independent 0/1 coefficients ``theta_Q`` on the level-``level`` cubes.

    ``theta_Q = 1`` exactly when the stream uniform of ``Q`` is below ``a``.
    Cube ``(j_1, ..., j_d)`` uses stream position ``j_1 2^(n(d-1)) + ... + j_d``.
    """

    level: int
    a: float
    seed: int
    member: int = 0
    d: int = 1

    def __post_init__(self):
        if not (0.0 <= self.a <= 1.0):
            raise ParameterError(f"probability a must lie in [0, 1], got {self.a}")
        if self.level < 0:
            raise ParameterError("level must be nonnegative")

    @property
    def count(self) -> int:
        return 1 << (self.level * self.d)

    def bits(self) -> np.ndarray:
        """All bits as a ``(2**level,)*d`` uint8 array."""
        if self.count > MAX_FIELD_CUBES:
            raise ResolutionError(
                f"field with {self.count} cubes exceeds the materialization cap {MAX_FIELD_CUBES}")
        u = bernoulli_uniforms(self.seed, self.member, self.level, 0, self.count)
        return (u < self.a).astype(np.uint8).reshape((1 << self.level,) * self.d)

    def window(self, start: int, count: int) -> np.ndarray:
        """Bits of the cubes with linear index in ``[start, start+count)`` (1-D)."""
        u = bernoulli_uniforms(self.seed, self.member, self.level, start, count)
        return (u < self.a).astype(np.uint8)


def sample_h(field: BernoulliField, grid: Grid) -> GridFunction:
    """Sampled cube field ``h = sum_Q theta_Q chi_Q`` on the grid."""
    if field.d != grid.d:
        raise ConfigurationError("field and grid dimensions differ")
    if field.level > grid.J:
        raise ResolutionError(f"cube level {field.level} exceeds grid exponent J={grid.J}")
    rep = 1 << (grid.J - field.level)
    bits = field.bits().astype(float)
    for ax in range(grid.d):
        bits = np.repeat(bits, rep, axis=ax)
    return GridFunction(grid, bits)


def _interval_coefficients(kappa: np.ndarray, width: float) -> np.ndarray:
    """Fourier coefficients of the indicator of ``[0, width)`` on the unit torus."""
    return width * np.exp(-1j * np.pi * kappa * width) * np.sinc(kappa * width)


def cube_field_spectrum(bits: np.ndarray, level: int, grid: Grid) -> np.ndarray:
    """Exact Fourier coefficients of ``sum theta_Q chi_Q`` at the grid's frequencies.

    The cube lattice may be finer than the grid: coefficients are those of the
    continuum step function, not of its samples.
    """
    m = 1 << level
    k = grid.offset_axis().astype(np.int64)
    theta_hat = np.fft.fftn(bits.astype(float))
    if grid.d == 1:
        return theta_hat[k % m] * _interval_coefficients(k, 1.0 / m)
    idx = k % m
    th = theta_hat[np.ix_(idx, idx)]
    c = _interval_coefficients(k, 1.0 / m)
    return th * np.multiply.outer(c, c)


# ---------------------------------------------------------------------------
# Moments of Bernoulli sums
# ---------------------------------------------------------------------------

def bernoulli_moment_closed_form(L: int, a: float, r: float) -> float:
    """``E[n^r]`` for ``n ~ Binomial(L, a)``, i.e. ``sum_n C(L,n) a^n (1-a)^(L-n) n^r``.

    Integer ``r`` uses the falling-factorial expansion
    ``sum_j S(r, j) L^(j) a^j`` with Stirling numbers of the second kind, which
    is exact in closed form and gives ``L a`` at ``r = 1``.  Other ``r`` use a
    log-domain sum, stable for ``L`` up to at least ``10**4``.
    """
    if L < 1:
        raise ParameterError(f"L must be >= 1, got {L}")
    if not (0.0 <= a <= 1.0):
        raise ParameterError(f"a must lie in [0, 1], got {a}")
    if r <= 0:
        raise ParameterError(f"r must be positive, got {r}")
    if a == 0.0:
        return 0.0
    if a == 1.0:
        return float(L) ** r
    if float(r).is_integer():
        ri = int(r)
        total = 0.0
        falling = 1.0
        for j in range(1, min(ri, L) + 1):
            falling *= (L - j + 1) * a
            total += float(stirling2(ri, j, exact=True)) * falling
        return total
    n = np.arange(1, L + 1, dtype=float)
    log_terms = (gammaln(L + 1) - gammaln(n + 1) - gammaln(L - n + 1)
                 + n * math.log(a) + (L - n) * math.log1p(-a) + r * np.log(n))
    return float(np.exp(logsumexp(log_terms)))


def bernoulli_moment_enumerated(L: int, a: float, r: float) -> float:
    """Reference value of ``E[n^r]`` by summing over all ``2**L`` outcomes."""
    if L > 20:
        raise ParameterError("enumeration is limited to L <= 20")
    outcomes = np.arange(1 << L, dtype=np.int64)
    counts = np.zeros(outcomes.size, dtype=np.int64)
    for i in range(L):
        counts += (outcomes >> i) & 1
    prob = a ** counts.astype(float) * (1.0 - a) ** (L - counts).astype(float)
    vals = np.where(counts > 0, counts.astype(float) ** r, 0.0)
    return float(np.sum(prob * vals))


def moment_mc(L: int, a: float, r: float, trials: int, seed: int = 0,
              level: int = 0) -> Tuple[float, float]:
    """Monte Carlo estimate of ``E[(sum_k h_k(x))^r]`` at a fixed point.

    Member ``k`` contributes the bit of the cube containing ``x``; trial ``t``
    uses cube index ``t`` of every member's field so all draws are independent.

    Returns
    -------
    estimate, stderr : float
    """
    if trials < 100:
        raise ParameterError("moment_mc needs at least 100 trials")
    if a in (0.0, 1.0):
        value = 0.0 if a == 0.0 else float(L) ** r
        return value, 0.0
    counts = np.zeros(trials)
    for k in range(L):
        counts += bernoulli_uniforms(seed, k, level, 0, trials) < a
    vals = counts ** r
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials))


# ---------------------------------------------------------------------------
# Mollifier
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(400)


class Mollifier:
    """Radial mollifier with spectrum ``c * profile(|xi|)`` on the annulus ``1/2 < |xi| < 1``.

    The constant ``c`` is the smallest one making the unit-scale function at
    least 1 on the ball of radius :attr:`radius`, found by minimizing the
    continuum profile over a dense set of radii.

    Parameters
    ----------
    M : int
        Offset parameter setting the radius of the lower-bound ball.
    d : int
        Dimension.
    condition : {"ball", "cube"}
        ``"ball"``: lower bound on ``|x| <= 2**(-M+2+d)`` (random families).
        ``"cube"``: lower bound on ``max_i |x_i| <= 2**-M``, enforced on the
        enclosing ball of radius ``sqrt(d) 2**-M`` (deterministic family).
    profile : callable, optional
        Radial spectral profile on ``[1/2, 1]``; defaults to :func:`bump_profile`.
    """

    def __init__(self, M: int, d: int = 1, condition: str = "ball",
                 profile: Optional[Callable] = None, n_radii: int = 2001):
        if d not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {d}")
        if condition == "ball":
            radius = 2.0 ** (-M + 2 + d)
        elif condition == "cube":
            radius = math.sqrt(d) * 2.0 ** (-M)
        else:
            raise ParameterError(f"unknown lower-bound condition {condition!r}")
        self.M = int(M)
        self.d = d
        self.condition = condition
        self.radius = radius
        self.profile = profile if profile is not None else bump_profile
        self.constant = 1.0
        radii = np.linspace(0.0, radius, n_radii)
        raw = self.unit_values(radii)
        low = float(raw.min())
        if not low > 0.0:
            raise ConstructionError(
                f"no positive multiple of the profile is >= 1 on |x| <= {radius:g} "
                f"(M={M}, d={d}, condition={condition}); minimum of the unnormalized "
                f"function there is {low:.3g}. Increase M.")
        self.constant = 1.0 / low
        self.minimum_on_ball = float((self.constant * raw).min())

    def unit_values(self, radius) -> np.ndarray:
        """Continuum unit-scale values at the given radii."""
        rad = np.atleast_1d(np.asarray(radius, dtype=float))
        t = 0.75 + 0.25 * _GL_NODES
        w = 0.25 * _GL_WEIGHTS * self.profile(t)
        phase = 2.0 * np.pi * np.multiply.outer(rad, t)
        if self.d == 1:
            vals = 2.0 * (np.cos(phase) @ w)
        else:
            vals = 2.0 * np.pi * (j0(phase) @ (w * t))
        return self.constant * vals

    def unit_spectrum(self, rho) -> np.ndarray:
        """Continuum Fourier transform at frequency radius ``rho`` (unit scale)."""
        return self.constant * self.profile(np.asarray(rho, dtype=float))

    def grid_spectrum(self, grid: Grid, r: float) -> np.ndarray:
        """Fourier coefficients of ``r^d eta(r x)`` periodized onto the torus."""
        if grid.d != self.d:
            raise ConfigurationError("mollifier and grid dimensions differ")
        return self.unit_spectrum(grid.frequency_norm() / r)

    def realize(self, grid: Grid, r: float) -> GridFunction:
        """``eta_r = r^d eta(r .)`` on the grid, annotated with its annulus band."""
        check_band_fits(grid, r)
        spec = self.grid_spectrum(grid, r)
        return GridFunction.from_spectrum(grid, spec, real=True, band_limit=(r, True))


def check_band_fits(grid: Grid, r: float):
    if not r < grid.nyquist():
        raise ResolutionError(
            f"band radius {r:g} does not fit below the grid's Nyquist frequency {grid.nyquist()} "
            f"(J={grid.J}); need J >= {int(math.ceil(math.log2(r))) + 2}")


@lru_cache(maxsize=64)
def _cached_mollifier(M: int, d: int, condition: str) -> Mollifier:
    return Mollifier(M, d, condition)


def build_mollifier(M: int, grid: Grid, r: float, condition: str = "ball") -> GridFunction:
    """Dilated mollifier ``eta_r`` with the default bump profile."""
    return _cached_mollifier(int(M), grid.d, condition).realize(grid, r)


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

@dataclass
class FunctionFamily:
    """Finite family ``{f_k}`` with one scale ``r_k`` per member.

    Attributes
    ----------
    members : list of GridFunction
    scales : list of float
    kind : str
        One of ``random_peetre``, ``deterministic``, ``sobolev``,
        ``oscillatory``, ``custom``.
    params : dict
        Parameters sufficient to rebuild the family.
    seed : int or None
    """

    members: List[GridFunction]
    scales: List[float]
    kind: str = "custom"
    params: Dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        if len(self.members) != len(self.scales):
            raise ConfigurationError(
                f"{len(self.members)} members but {len(self.scales)} scales")
        if self.kind not in FAMILY_KINDS:
            raise ConfigurationError(f"unknown family kind {self.kind!r}")

    def __len__(self):
        return len(self.members)

    @property
    def grid(self) -> Grid:
        return self.members[0].grid

    def stack(self) -> np.ndarray:
        """Member samples stacked along a new leading axis."""
        return np.stack([m.samples for m in self.members])

    def combined(self) -> GridFunction:
        """Sum of all members as one function."""
        total = np.sum(self.stack(), axis=0)
        return GridFunction(self.grid, total)


FAMILY_KINDS = ("random_peetre", "deterministic", "sobolev", "oscillatory", "custom")


def _levels(levels) -> List[int]:
    out = [int(n) for n in levels]
    if any(n < 0 for n in out):
        raise ParameterError("cube levels must be nonnegative")
    return out


def smoothed_random_family(N: int, levels: Sequence[int], M: int, seed: int, grid: Grid,
                           a: Optional[float] = None, mollifier: Optional[Mollifier] = None
                           ) -> FunctionFamily:
    """Mollified Bernoulli fields ``g_k = eta_k * h_k`` with ``r_k = 2**(n_k - M)``.

    Parameters
    ----------
    N : int
        Sets the default probability ``a = 2**(-N d)``.
    levels : sequence of int
        Cube level ``n_k`` of each member.
    M : int
        Mollifier offset parameter.
    seed : int
    grid : Grid
    a : float, optional
        Overrides the default probability.
    mollifier : Mollifier, optional
        Defaults to the bump profile with the ball condition.
    """
    lv = _levels(levels)
    if a is None:
        a = 2.0 ** (-N * grid.d)
    moll = mollifier if mollifier is not None else _cached_mollifier(int(M), grid.d, "ball")
    members, scales = [], []
    for k, n in enumerate(lv, start=1):
        r = 2.0 ** (n - M)
        check_band_fits(grid, r)
        bits = BernoulliField(n, a, seed, member=k, d=grid.d).bits()
        spec = moll.grid_spectrum(grid, r) * cube_field_spectrum(bits, n, grid)
        members.append(GridFunction.from_spectrum(grid, spec, real=True, band_limit=(r, True)))
        scales.append(r)
    params = {"N": N, "levels": lv, "M": M, "a": a, "d": grid.d, "J": grid.J}
    return FunctionFamily(members, scales, "random_peetre", params, seed)


def deterministic_support(N: int, M: int, k: int, grid: Grid) -> GridFunction:
    """Sampled ``h_k``: indicators of ``[j 2^(N-k), j 2^(N-k) + 2^(-k-M))^d``."""
    if k < N:
        raise ParameterError(f"member index k={k} must be >= N={N}")
    if k + M > grid.J:
        raise ResolutionError(f"cubes of side 2^-{k + M} need J >= {k + M}, grid has J={grid.J}")
    period = 1 << (grid.J - k + N)
    width = 1 << (grid.J - k - M)
    mask = ((np.arange(grid.n) % period) < width).astype(float)
    samples = mask if grid.d == 1 else np.multiply.outer(mask, mask)
    return GridFunction(grid, samples)


def _deterministic_spectrum(N: int, M: int, k: int, grid: Grid) -> np.ndarray:
    kappa = grid.offset_axis().astype(np.int64)
    step = 1 << (k - N)
    lattice = np.where(kappa % step == 0, float(step), 0.0)
    axis = lattice * _interval_coefficients(kappa, 2.0 ** (-k - M))
    return axis if grid.d == 1 else np.multiply.outer(axis, axis)


def deterministic_family(N: int, M: int, k_range: Iterable[int], grid: Grid,
                         mollifier: Optional[Mollifier] = None) -> FunctionFamily:
    """Members ``f_k = eta_k * h_k`` with ``r_k = 2**k`` over ``k`` in ``k_range``.

    ``h_k`` is the sum of the indicators of ``2**((k-N)d)`` cubes of side
    ``2**(-k-M)`` placed on the lattice of spacing ``2**(N-k)``.  The
    mollifier satisfies the cube lower-bound condition.
    """
    ks = [int(k) for k in k_range]
    if not ks:
        raise ParameterError("k_range is empty")
    moll = mollifier if mollifier is not None else _cached_mollifier(int(M), grid.d, "cube")
    members, scales = [], []
    for k in ks:
        if k < N:
            raise ParameterError(f"member index k={k} must be >= N={N}")
        r = 2.0 ** k
        check_band_fits(grid, r)
        spec = moll.grid_spectrum(grid, r) * _deterministic_spectrum(N, M, k, grid)
        members.append(GridFunction.from_spectrum(grid, spec, real=True, band_limit=(r, True)))
        scales.append(r)
    params = {"N": N, "M": M, "k_range": ks, "d": grid.d, "J": grid.J}
    return FunctionFamily(members, scales, "deterministic", params, None)


def sobolev_family(N: int, R: int, sigma: float, M: int, seed: int, grid: Grid,
                   k_cap: Optional[int] = None, level_offset: int = 0) -> FunctionFamily:
    """Weighted random family ``G_k = 2**(-n_k sigma) g_k`` with ``n_k = level_offset + k R``.

    The full family has ``2**(N d)`` members and top frequency
    ``2**(R 2**(N d) - M)``; ``k_cap`` truncates it to the first ``k_cap``
    members.  A common ``level_offset`` shifts every level so the coarsest
    members still have integer frequencies in their annulus; it multiplies all
    weights by the same constant.
    """
    if R < 1:
        raise ParameterError("R must be a positive integer")
    L_full = 1 << (N * grid.d)
    L = L_full if k_cap is None else min(L_full, int(k_cap))
    levels = [level_offset + k * R for k in range(1, L + 1)]
    top = levels[-1] - M
    if 2.0 ** top >= grid.nyquist():
        mode = "full" if k_cap is None else "truncated"
        raise ResolutionError(
            f"{mode} family needs top frequency 2^{top}; requires J >= {top + 2}, grid has J={grid.J}")
    base = smoothed_random_family(N, levels, M, seed, grid)
    members = []
    for g, n in zip(base.members, levels):
        w = 2.0 ** (-n * sigma)
        members.append(GridFunction(grid, w * g.samples, band_limit=g.band_limit))
    params = {"N": N, "R": R, "sigma": sigma, "M": M, "k_cap": k_cap,
              "level_offset": level_offset, "levels": levels, "d": grid.d, "J": grid.J}
    return FunctionFamily(members, list(base.scales), "sobolev", params, seed)


def oscillatory_profiles():
    """Spectral profiles of the oscillatory construction.

    Returns
    -------
    eta_hat : callable
        Equal to 1 on ``[2**-0.5, 2**0.5]``, zero outside ``(0.6, 1.6)``.
    eta_tilde_hat : callable
        Equal to 1 on ``[0.6, 1.6]`` (hence on the support of ``eta_hat``),
        zero outside ``(0.4, 2)``.
    """
    def eta_hat(rho):
        return plateau_profile(rho, 2 ** -0.5, 2 ** 0.5, 0.6, 1.6)

    def eta_tilde_hat(rho):
        return plateau_profile(rho, 0.6, 1.6, 0.4, 2.0)

    return eta_hat, eta_tilde_hat


def oscillatory_family(L: int, gamma: float, p: float, seed: int, grid: Grid) -> FunctionFamily:
    """Members ``f_k = beta_k sum_Q theta_{Q,a_k} eta~(2^k (x - x_Q))`` for ``k = 1..L``.

    ``a_k = 2**(-k gamma d)`` and ``beta_k = a_k**(-1/p)``; member ``k`` lies in
    the band-limited class of radius ``2**(k+1)``.
    """
    if not (0.0 < gamma < 1.0):
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    if L > grid.J - 2:
        raise ResolutionError(f"L={L} needs J >= {L + 2}, grid has J={grid.J}")
    _, eta_tilde_hat = oscillatory_profiles()
    kappa = grid.offset_axis().astype(np.int64)
    rho = grid.frequency_norm()
    members, scales = [], []
    d = grid.d
    for k in range(1, L + 1):
        a_k = 2.0 ** (-k * gamma * d)
        beta_k = a_k ** (-1.0 / p)
        bits = BernoulliField(k, a_k, seed, member=k, d=d).bits()
        m = 1 << k
        theta_hat = np.fft.fftn(bits.astype(float))
        shift = np.exp(-1j * np.pi * kappa / m)
        if d == 1:
            centers = theta_hat[kappa % m] * shift
        else:
            idx = kappa % m
            centers = theta_hat[np.ix_(idx, idx)] * np.multiply.outer(shift, shift)
        spec = beta_k * 2.0 ** (-k * d) * eta_tilde_hat(rho / m) * centers
        members.append(GridFunction.from_spectrum(grid, spec, real=True,
                                                  band_limit=(2.0 ** (k + 1), False)))
        scales.append(2.0 ** (k + 1))
    params = {"L": L, "gamma": gamma, "p": p, "d": d, "J": grid.J}
    return FunctionFamily(members, scales, "oscillatory", params, seed)


# ---------------------------------------------------------------------------
# Binary container
# ---------------------------------------------------------------------------

_MAGIC = b"SHLBFAM1"


def save_family(family: FunctionFamily, path, include_samples: bool = False):
    """Write a family to a binary container.

    Layout: 8-byte magic ``SHLBFAM1``; little-endian uint32 header length;
    UTF-8 JSON header (kind, params, seed, scales, grid, payload flag, dtype);
    optionally the member samples as contiguous little-endian arrays in
    member order.
    """
    grid = family.grid
    dtype = "complex128" if any(np.iscomplexobj(m.samples) for m in family.members) else "float64"
    header = {
        "kind": family.kind,
        "params": family.params,
        "seed": family.seed,
        "scales": [float(s) for s in family.scales],
        "grid": {"d": grid.d, "J": grid.J},
        "count": len(family),
        "payload": bool(include_samples),
        "dtype": dtype,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        if include_samples:
            for m in family.members:
                fh.write(np.ascontiguousarray(m.samples, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())


def load_family(path) -> FunctionFamily:
    """Read a container written by :func:`save_family`, rebuilding members if no payload."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ConfigurationError(f"{path}: not a family container")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        grid = Grid(header["grid"]["d"], header["grid"]["J"])
        if header["payload"]:
            dt = np.dtype(header["dtype"]).newbyteorder("<")
            members = []
            for r in header["scales"]:
                raw = fh.read(grid.size * dt.itemsize)
                members.append(GridFunction(grid, np.frombuffer(raw, dtype=dt).reshape(grid.shape)))
            return FunctionFamily(members, header["scales"], header["kind"],
                                  header["params"], header["seed"])
    return _rebuild(header, grid)


def _rebuild(header: dict, grid: Grid) -> FunctionFamily:
    kind, p, seed = header["kind"], header["params"], header["seed"]
    if kind == "random_peetre":
        return smoothed_random_family(p["N"], p["levels"], p["M"], seed, grid, a=p["a"])
    if kind == "deterministic":
        return deterministic_family(p["N"], p["M"], p["k_range"], grid)
    if kind == "sobolev":
        return sobolev_family(p["N"], p["R"], p["sigma"], p["M"], seed, grid,
                              k_cap=p["k_cap"], level_offset=p["level_offset"])
    if kind == "oscillatory":
        return oscillatory_family(p["L"], p["gamma"], p["p"], seed, grid)
    raise ConfigurationError(f"family kind {kind!r} has no builder; save it with its payload")
