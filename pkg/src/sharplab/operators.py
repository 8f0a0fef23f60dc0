"""Operators applied to test families: multipliers, maximal functions, differences.

All sups over continuous offsets are taken over grid offsets.  Distances on the
torus are periodic distances to the origin.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.special import comb

from . import _kernels
from .constructions import oscillatory_profiles, plateau_profile, smooth_step
from .grid_core import (
    ConfigurationError,
    Grid,
    GridFunction,
    ParameterError,
    ResolutionError,
    as_samples,
    snap_offset,
)

__all__ = [
    "MultiplierSpec",
    "MaximalParams",
    "lp_lowpass",
    "lp_block_values",
    "apply_multiplier",
    "peetre_maximal",
    "hl_maximal",
    "windowed_maximal",
    "ring_maximal",
    "difference",
    "tilde_difference",
    "smoothness_modulus",
    "bochner_riesz_kernel",
    "truncation_cutoff",
    "truncate_kernel",
    "oscillatory_kernel",
    "oscillatory_kernel_window_check",
]


# ---------------------------------------------------------------------------
# Multipliers
# ---------------------------------------------------------------------------

def lp_lowpass(rho):
    """Low-pass profile: 1 for ``rho <= 1/2``, 0 for ``rho >= 3/4``."""
    return plateau_profile(rho, 0.0, 0.5, 0.0, 0.75)


def lp_block_values(rho, k: int):
    """Littlewood-Paley block ``k`` at frequency radius ``rho``.

    Block 0 is the low-pass profile; block ``k >= 1`` is the difference of the
    low-pass profile at scales ``2**k`` and ``2**(k-1)``.  Blocks ``0..K`` sum to
    exactly 1 on ``rho <= 2**(K-1)``.  Block ``k`` equals 1 on
    ``[3/8, 1/2] 2**k`` and vanishes outside ``(2**(k-2), 3/4 2**k)``.
    """
    rho = np.asarray(rho, dtype=float)
    if k == 0:
        return lp_lowpass(rho)
    return lp_lowpass(rho / 2.0 ** k) - lp_lowpass(rho / 2.0 ** (k - 1))


@dataclass(frozen=True)
class MultiplierSpec:
    """Fourier multiplier evaluated at integer frequencies.

    Parameters
    ----------
    kind : {"identity", "bochner_riesz", "oscillatory", "lp_block", "custom"}
    params : dict
        ``bochner_riesz``: ``lam`` (> -1) and ``radius``.
        ``oscillatory``: ``gamma`` and ``b``; optional ``window`` callable and
        ``scale`` applying ``window(|xi| / scale)``.
        ``lp_block``: ``k``.
        ``custom``: ``table`` (array in FFT order) or ``func`` of the frequency radius.
    """

    kind: str
    params: Dict = field(default_factory=dict)

    @staticmethod
    def bochner_riesz(lam: float, radius: float) -> "MultiplierSpec":
        if not lam > -1:
            raise ParameterError(f"Bochner-Riesz exponent must exceed -1, got {lam}")
        return MultiplierSpec("bochner_riesz", {"lam": float(lam), "radius": float(radius)})

    @staticmethod
    def oscillatory(gamma: float, b: float) -> "MultiplierSpec":
        return MultiplierSpec("oscillatory", {"gamma": float(gamma), "b": float(b)})

    @staticmethod
    def lp_block(k: int) -> "MultiplierSpec":
        return MultiplierSpec("lp_block", {"k": int(k)})

    def values(self, grid: Grid) -> np.ndarray:
        rho = grid.frequency_norm()
        kind = self.kind
        if kind == "identity":
            return np.ones(grid.shape)
        if kind == "bochner_riesz":
            lam, radius = self.params["lam"], self.params["radius"]
            inside = rho < radius
            out = np.zeros(grid.shape)
            out[inside] = (1.0 - (rho[inside] / radius) ** 2) ** lam
            return out
        if kind == "oscillatory":
            gamma, b = self.params["gamma"], self.params["b"]
            vals = np.exp(1j * rho ** gamma) * (1.0 + rho * rho) ** (-b / 2.0)
            window = self.params.get("window")
            if window is not None:
                vals = vals * window(rho / self.params.get("scale", 1.0))
            return vals
        if kind == "lp_block":
            return lp_block_values(rho, self.params["k"])
        if kind == "custom":
            if "table" in self.params:
                table = np.asarray(self.params["table"])
                if table.shape != grid.shape:
                    raise ConfigurationError("custom multiplier table does not match the grid")
                return table
            return np.asarray(self.params["func"](rho))
        raise ConfigurationError(f"unknown multiplier kind {kind!r}")


def apply_multiplier(spec: MultiplierSpec, f: GridFunction, real: Optional[bool] = None
                     ) -> GridFunction:
    """``T f`` with ``(T f)^(xi) = spec(xi) f^(xi)``.

    ``real`` forces a real result; by default the result is real when ``f`` is
    real and the multiplier is real and even.
    """
    vals = spec.values(f.grid)
    out = vals * f.spectrum
    if real is None:
        real = (not np.iscomplexobj(f.samples)) and not np.iscomplexobj(vals)
    return GridFunction.from_spectrum(f.grid, out, real=real)


# ---------------------------------------------------------------------------
# Maximal functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaximalParams:
    """Parameters of the Peetre maximal function ``sup_y |g(x+y)| / (1 + r|y|)^sigma``.

    ``tail_tol`` bounds the relative weight of offsets left out of a truncated
    window; ``s`` is the power used in Hardy-Littlewood majorization checks.
    """

    sigma: float
    r: float
    tail_tol: float = 1e-3
    s: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.r > 0:
            raise ParameterError(f"r must be positive, got {self.r}")
        if not (0.0 < self.tail_tol <= 1e-3):
            raise ParameterError(f"tail_tol must lie in (0, 1e-3], got {self.tail_tol}")

    def window_radius(self) -> float:
        """Distance beyond which the weight drops below ``tail_tol``."""
        if self.sigma == 0:
            return math.inf
        return (self.tail_tol ** (-1.0 / self.sigma) - 1.0) / self.r


def peetre_maximal(g, params: MaximalParams) -> GridFunction:
    """Peetre maximal function on the grid.

    In 1-D the sup runs over every grid offset (the exact envelope algorithm
    costs linear time), so nothing is truncated.  In 2-D a brute-force scan
    covers offsets up to :meth:`MaximalParams.window_radius`, capped at the
    half period.
    """
    grid = g.grid
    a = np.abs(as_samples(g))
    if grid.d == 1:
        out = _kernels.peetre_1d(a, params.r, params.sigma)
    else:
        if params.sigma == 0:
            out = np.full(grid.shape, a.max())
        else:
            cells = params.window_radius() * grid.n
            radius = int(min(grid.n // 2, math.ceil(cells)))
            out = _kernels.peetre_2d_window(np.ascontiguousarray(a), float(params.r),
                                            float(params.sigma), radius)
    return GridFunction(grid, out)


def _box_average_1d(a: np.ndarray, side: int, axis: int) -> np.ndarray:
    n = a.shape[axis]
    if side >= n:
        return np.broadcast_to(a.mean(axis=axis, keepdims=True), a.shape).copy()
    ext = np.concatenate([a, a], axis=axis)
    cs = np.cumsum(ext, axis=axis)
    cs = np.concatenate([np.zeros_like(np.take(cs, [0], axis=axis)), cs], axis=axis)
    start = (np.arange(n) - side // 2) % n
    hi = np.take(cs, start + side, axis=axis)
    lo = np.take(cs, start, axis=axis)
    return (hi - lo) / side


def hl_maximal(g) -> GridFunction:
    """Hardy-Littlewood maximal function over centered cubes of dyadic side.

    Sides are ``2**i`` cells for ``i = 0..J``; the window of side ``s`` covers
    cells ``x - s//2 .. x - s//2 + s - 1`` (periodic).
    """
    grid = g.grid
    a = np.abs(as_samples(g)).astype(float)
    best = a.copy()
    for i in range(1, grid.J + 1):
        side = 1 << i
        avg = a
        for ax in range(grid.d):
            avg = _box_average_1d(avg, side, ax)
        np.maximum(best, avg, out=best)
    return GridFunction(grid, best)


def _disc_footprint(radius: int) -> np.ndarray:
    ax = np.arange(-radius, radius + 1)
    return (ax[:, None] ** 2 + ax[None, :] ** 2) <= radius * radius


def windowed_maximal(f, k: int, n: int) -> GridFunction:
    """``sup_{|h| <= 2**(n-k+1)} |f(x+h)|`` over grid offsets."""
    grid = f.grid
    reach = 2.0 ** (n - k + 1)
    if reach > 0.5:
        raise ParameterError(f"window radius 2^{n - k + 1} exceeds half the period")
    cells = int(math.floor(reach * grid.n + 1e-9))
    a = np.abs(as_samples(f))
    if cells == 0:
        return GridFunction(grid, a)
    if grid.d == 1:
        out = ndimage.maximum_filter1d(a, size=2 * cells + 1, mode="wrap")
    else:
        out = ndimage.maximum_filter(a, footprint=_disc_footprint(cells), mode="wrap")
    return GridFunction(grid, out)


def ring_maximal(f, level: int, j: int) -> GridFunction:
    """Sup of ``|f|`` over ``Q^j(x) \\ Q^(j-1)(x)``, the dyadic ring around ``x``.

    ``Q^j(x)`` is the dyadic cube of side ``2**(-level+j)`` containing ``x``.
    When the inner cube is finer than the grid the ring holds no grid points
    separate from ``x``'s cell and zeros are returned with a warning.
    """
    grid = f.grid
    if j < 1:
        raise ParameterError("ring index j must be >= 1")
    parent = level - j
    if parent < 0:
        raise ParameterError(f"cube side 2^{-level + j} exceeds the unit period")
    child = parent + 1
    a = np.abs(as_samples(f))
    if child > grid.J:
        warnings.warn(f"ring at level {level}, j={j} is unresolved on J={grid.J}; returning 0",
                      RuntimeWarning, stacklevel=2)
        return GridFunction(grid, np.zeros(grid.shape), notes={"empty_ring": True})
    P = 1 << parent
    w = 1 << (grid.J - child)
    if grid.d == 1:
        cm = a.reshape(P, 2, w).max(axis=2)
        ring = cm[:, ::-1]
        out = np.repeat(ring, w, axis=1).reshape(grid.shape)
    else:
        cm = a.reshape(P, 2, w, P, 2, w).max(axis=(2, 5))
        ring = np.zeros_like(cm)
        for ci in range(2):
            for cj in range(2):
                others = [cm[:, oi, :, oj] for oi in range(2) for oj in range(2)
                          if (oi, oj) != (ci, cj)]
                ring[:, ci, :, cj] = np.maximum.reduce(others)
        out = np.repeat(np.repeat(ring[:, :, None, :, :, None], w, axis=2), w, axis=5)
        out = out.reshape(grid.shape)
    return GridFunction(grid, out)


# ---------------------------------------------------------------------------
# Differences and the smoothness modulus
# ---------------------------------------------------------------------------

def _difference_coefficients(m: int) -> np.ndarray:
    """Coefficients ``(-1)**(m-nu) C(m, nu)`` for ``nu = 0..m``."""
    return np.array([(-1) ** (m - nu) * comb(m, nu, exact=True) for nu in range(m + 1)],
                    dtype=float)


def _shift(a: np.ndarray, cells: Tuple[int, ...]) -> np.ndarray:
    # value at x + h
    return np.roll(a, tuple(-c for c in cells), axis=tuple(range(a.ndim)))


def difference(f: GridFunction, h, m: int) -> GridFunction:
    """``Delta_h^m f(x) = sum_nu (-1)**(m-nu) C(m,nu) f(x + nu h)``.

    Offsets are snapped to whole grid cells; a snapped offset is recorded in
    ``notes["snapped_offset"]``.
    """
    if m < 1:
        raise ParameterError("difference order m must be >= 1")
    cells, snapped = snap_offset(f.grid, h)
    a = f.samples
    coeffs = _difference_coefficients(m)
    out = np.zeros_like(a, dtype=np.result_type(a, float))
    for nu, c in enumerate(coeffs):
        out = out + c * _shift(a, tuple(nu * x for x in cells))
    notes = {"snapped_offset": tuple(x / f.grid.n for x in cells)} if snapped else {}
    return GridFunction(f.grid, out, notes=notes)


def tilde_difference(f: GridFunction, h, m: int) -> GridFunction:
    """``Delta_h^m f - (-1)**m f``: the difference without its ``nu = 0`` term."""
    full = difference(f, h, m)
    return GridFunction(f.grid, full.samples - (-1) ** m * f.samples, notes=full.notes)


def _band_weights(t_lo: np.ndarray, t_hi: np.ndarray, exponent: float,
                  lo: float, hi: float) -> np.ndarray:
    """``int_{[t_lo, t_hi) cap [lo, hi)} t**(-1-exponent) dt``, elementwise."""
    a = np.maximum(t_lo, lo)
    b = np.minimum(t_hi, hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (a ** (-exponent) - np.where(np.isinf(b), 0.0, b ** (-exponent))) / exponent
    return np.where(b > a, val, 0.0)


def smoothness_modulus(f: GridFunction, m: int, sigma: float, q: float,
                       level_range: Optional[Tuple[int, int]] = None,
                       stride: int = 1) -> GridFunction:
    """``(int_0^inf t**(-1-sigma q) sup_{|h|<=t} |Delta_h^m f(x)|^q dt)^(1/q)``.

    The inner sup over grid offsets is a step function of ``t`` that changes
    only at offset lengths; it is integrated exactly against
    ``t**(-1-sigma q)``.  ``level_range = (l_lo, l_hi)`` restricts ``t`` to the
    dyadic bands ``[2**(-l-1), 2**-l)`` with ``l_lo <= l <= l_hi``; the default
    covers every band, including the constant tail beyond the largest offset.

    Parameters
    ----------
    stride : int
        Evaluate at every ``stride``-th grid point per axis; the result lives
        on the coarser grid.  Offsets always use the full grid.
    """
    if m < 1:
        raise ParameterError("difference order m must be >= 1")
    if not (0 < sigma < m):
        raise ParameterError(f"need 0 < sigma < m, got sigma={sigma}, m={m}")
    if not q > 0:
        raise ParameterError("q must be positive")
    grid = f.grid
    if stride < 1 or stride & (stride - 1) or stride >= grid.n:
        raise ParameterError("stride must be a power of two smaller than the grid size")
    expo = sigma * q
    if level_range is None:
        lo, hi = 0.0, math.inf
    else:
        l_lo, l_hi = level_range
        if l_hi > grid.J:
            warnings.warn(f"levels beyond J={grid.J} carry no grid offsets; truncated",
                          RuntimeWarning, stacklevel=2)
            l_hi = grid.J
        lo, hi = 2.0 ** (-l_hi - 1), 2.0 ** (-l_lo)
    coeffs = _difference_coefficients(m)
    a = np.ascontiguousarray(f.samples)
    n = grid.n
    if grid.d == 1:
        shifts = np.arange(1, n // 2 + 1, dtype=np.int64)
        t = shifts / n
        t_next = np.append(t[1:], np.inf)
        w = _band_weights(t, t_next, expo, lo, hi)
        xs = np.arange(0, n, stride, dtype=np.int64)
        acc = _kernels.modulus_1d(a, xs, shifts, w, coeffs, float(q))
        shape = (n // stride,)
    else:
        ax = np.arange(-(n // 2) + 1, n // 2 + 1)
        di, dj = np.meshgrid(ax, ax, indexing="ij")
        rad = np.sqrt(di ** 2 + dj ** 2).ravel() / n
        order = np.argsort(rad, kind="stable")
        rad = rad[order]
        di = di.ravel()[order].astype(np.int64)
        dj = dj.ravel()[order].astype(np.int64)
        keep = rad > 0
        rad, di, dj = rad[keep], di[keep], dj[keep]
        r_next = np.append(rad[1:], np.inf)
        w = _band_weights(rad, r_next, expo, lo, hi)
        idx = np.arange(0, n, stride, dtype=np.int64)
        xi, yi = np.meshgrid(idx, idx, indexing="ij")
        acc = _kernels.modulus_2d(a, xi.ravel(), yi.ravel(), di, dj, w, coeffs, float(q))
        shape = (n // stride, n // stride)
    values = acc.reshape(shape) ** (1.0 / q)
    if stride == 1:
        return GridFunction(grid, values)
    coarse = Grid(grid.d, grid.J - int(math.log2(stride)))
    return GridFunction(coarse, values, notes={"stride": stride, "source_J": grid.J})


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def bochner_riesz_kernel(lam: float, r: float, grid: Grid) -> GridFunction:
    """Kernel of ``(1 - |xi|^2 / r^2)_+^lam`` by spectral inversion (real, radial)."""
    spec = MultiplierSpec.bochner_riesz(lam, r).values(grid)
    return GridFunction.from_spectrum(grid, spec, real=True, band_limit=(r, False))


def truncation_cutoff(x):
    """Radial cutoff: 1 for ``|x| <= 2``, 0 for ``|x| >= 4``, smooth and nonincreasing."""
    return smooth_step((4.0 - np.abs(np.asarray(x, dtype=float))) / 2.0)


def truncate_kernel(K: GridFunction, N: int, unit: float = 1.0) -> GridFunction:
    """``K(x) zeta(2**-N |x| / unit)`` with periodic ``|x|``.

    ``unit`` is the torus length of one kernel unit, so the cutoff acts on the
    kernel's own variable ``|x| / unit``; the support ``2**(N+2) unit`` must fit
    in half the period.
    """
    if 2.0 ** (N + 2) * unit > 0.5:
        raise ParameterError(
            f"cutoff radius 2^{N + 2} kernel units exceeds half the period; "
            f"need unit <= 2^-{N + 3}")
    dist = K.grid.periodic_distance() / unit
    return GridFunction(K.grid, K.samples * truncation_cutoff(dist / 2.0 ** N))


def oscillatory_kernel(gamma: float, k: int, grid: Grid) -> GridFunction:
    """Kernel of ``e^{i|xi|^gamma} eta^(2**-k xi)``, with ``eta^`` the plateau profile."""
    eta_hat, _ = oscillatory_profiles()
    rho = grid.frequency_norm()
    spec = np.exp(1j * rho ** gamma) * eta_hat(rho / 2.0 ** k)
    return GridFunction.from_spectrum(grid, spec, real=False)


def oscillatory_kernel_window_check(gamma: float, k: int, eps1: float = 0.15,
                                    B: float = 3.0, d: int = 1,
                                    grid: Optional[Grid] = None) -> Dict[str, float]:
    """Measure the stationary-phase annulus and far-field decay of the oscillatory kernel.

    With integer frequencies the phase ``|xi|^gamma + 2 pi xi x`` is stationary
    at ``|x| = (gamma / 2 pi) |xi|^(gamma-1)``, so the annulus is centered at
    ``c_gamma 2**(-k(1-gamma))`` with ``c_gamma = gamma / (2 pi)``.

    Returns
    -------
    dict
        ``annulus_min_ratio``: min of ``|K_k| / 2**(k(d - d gamma/2))`` over the
        annulus ``(1 +- eps1) c_gamma 2**(-k(1-gamma))``;
        ``decay_exponent``: log-log slope of the running envelope of ``|K_k|``
        in units of ``2**k |x|`` beyond ``B c_gamma 2**(-k(1-gamma))``;
        ``l2_norm`` and ``l2_expected`` (Plancherel check); ``center``.
    """
    if not (0 < gamma < 1):
        raise ParameterError("gamma must lie in (0, 1)")
    if grid is None:
        grid = Grid(d, k + 5)
    K = oscillatory_kernel(gamma, k, grid)
    c_gamma = gamma / (2.0 * np.pi)
    center = c_gamma * 2.0 ** (-k * (1 - gamma))
    dist = grid.periodic_distance()
    mag = np.abs(K.samples)
    ring = (dist >= (1 - eps1) * center) & (dist <= (1 + eps1) * center)
    if not np.any(ring):
        raise ResolutionError("annulus contains no grid points; refine the grid")
    min_ratio = float(mag[ring].min() / 2.0 ** (k * (d - d * gamma / 2)))
    # far-field envelope: running max from the outside in, sampled on a log grid
    flat_d, flat_m = dist.ravel(), mag.ravel()
    order = np.argsort(flat_d)
    dsorted = flat_d[order]
    env = np.maximum.accumulate(flat_m[order][::-1])[::-1]
    start = B * center
    stop = min(0.25, start * 2 ** 4)
    probe = np.geomspace(start, stop, 12)
    idx = np.clip(np.searchsorted(dsorted, probe), 0, dsorted.size - 1)
    vals = env[idx]
    ok = vals > 1e-14 * mag.max()
    if ok.sum() >= 3:
        slope = float(np.polyfit(np.log(probe[ok] * 2.0 ** k), np.log(vals[ok]), 1)[0])
    else:
        slope = -math.inf
    eta_hat, _ = oscillatory_profiles()
    expected = float(np.sqrt(np.sum(eta_hat(grid.frequency_norm() / 2.0 ** k) ** 2)))
    return {
        "annulus_min_ratio": min_ratio,
        "decay_exponent": slope,
        "l2_norm": float(np.sqrt(np.mean(mag ** 2))),
        "l2_expected": expected,
        "center": center,
        "eps1": eps1,
        "B": B,
    }
