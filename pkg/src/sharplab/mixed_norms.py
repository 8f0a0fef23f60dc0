"""Mixed norms, Triebel-Lizorkin norms, discrete sampling sums and slope fits."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .constructions import FunctionFamily
from .grid_core import (
    BAND_TOL,
    GridFunction,
    ParameterError,
    ResolutionError,
    as_samples,
    lp_norm,
)
from .operators import lp_block_values

__all__ = [
    "SlopeFit",
    "mixed_norm",
    "tl_norm",
    "required_block_range",
    "pp_discrete_sum",
    "pp_scaled_ratio",
    "pp_local_extremum_norm",
    "loglog_slope",
    "linear_fit",
    "SAMPLERS",
]

SAMPLERS = ("corner", "center", "max", "min")


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through ``points``."""

    points: Tuple[Tuple[float, float], ...]
    slope: float
    intercept: float
    r_squared: float

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "points": [list(p) for p in self.points]}


def _members(family) -> List[np.ndarray]:
    if isinstance(family, FunctionFamily):
        return [m.samples for m in family.members]
    return [as_samples(m) for m in family]


def mixed_norm(family, p: float, q: float) -> float:
    """``|| (sum_k |f_k|^q)^(1/q) ||_p`` with mean-based Riemann sums.

    ``family`` is a :class:`FunctionFamily` or any sequence of grid functions
    or arrays on a common grid.  ``q = inf`` takes the pointwise max.  An empty
    family gives 0 with a warning.
    """
    if not (p > 0 and q > 0):
        raise ParameterError(f"exponents must be positive, got p={p}, q={q}")
    arrays = _members(family)
    if not arrays:
        warnings.warn("mixed norm of an empty family is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    if np.isinf(q):
        acc = np.zeros(arrays[0].shape)
        for a in arrays:
            np.maximum(acc, np.abs(a), out=acc)
        return lp_norm(acc, p)
    # rescale by the global peak so tiny weights do not underflow under |.|^q
    peak = max(float(np.abs(a).max()) for a in arrays)
    if peak == 0.0:
        return 0.0
    acc = np.zeros(arrays[0].shape)
    for a in arrays:
        acc += (np.abs(a) / peak) ** q
    return peak * lp_norm(acc ** (1.0 / q), p)


def required_block_range(f: GridFunction, tol: float = BAND_TOL) -> Tuple[int, int]:
    """Smallest block range ``(0, K)`` whose blocks sum to 1 on the spectrum of ``f``."""
    mag = np.abs(f.spectrum)
    peak = mag.max()
    if peak == 0.0:
        return (0, 0)
    rho = f.grid.frequency_norm()
    top = float(rho[mag > tol * peak].max())
    # blocks 0..K sum to 1 on rho <= 2**(K-1)
    K = 0 if top <= 0.5 else int(math.ceil(math.log2(top))) + 1
    return (0, K)


def tl_norm(f: GridFunction, p: float, q: float, sigma: float,
            block_range: Optional[Tuple[int, int]] = None) -> float:
    """``|| (sum_k 2^(k sigma q) |beta_k * f|^q)^(1/q) ||_p`` with plateau blocks.

    ``block_range = (k0, k1)``: blocks ``k0..k1`` are used.  The blocks must
    cover the spectrum of ``f`` (sum to 1 on it); otherwise a
    :class:`ResolutionError` names the range required.
    """
    need = required_block_range(f)
    if block_range is None:
        block_range = need
    k0, k1 = block_range
    if k1 < need[1]:
        raise ResolutionError(
            f"block range {block_range} misses the spectrum of f; need blocks {need[0]}..{need[1]}")
    if k0 > 0:
        mag = np.abs(f.spectrum)
        low = f.grid.frequency_norm() < 0.75 * 2.0 ** (k0 - 1)
        if mag.max() > 0 and np.any(mag[low] > BAND_TOL * mag.max()):
            raise ResolutionError(
                f"block range {block_range} misses low frequencies of f; need blocks from 0")
    if not np.any(f.spectrum):
        return 0.0
    rho = f.grid.frequency_norm()
    pieces = []
    for k in range(k0, k1 + 1):
        spec = lp_block_values(rho, k) * f.spectrum
        if not np.any(spec):
            continue
        piece = np.fft.ifftn(spec, norm="forward")
        pieces.append(2.0 ** (k * sigma) * piece)
    return mixed_norm(pieces, p, q)


def _cube_view(a: np.ndarray, level: int, J: int) -> np.ndarray:
    """Reshape so that the last axes index the grid points inside each cube."""
    w = 1 << (J - level)
    P = 1 << level
    if a.ndim == 1:
        return a.reshape(P, w)
    return a.reshape(P, w, P, w).transpose(0, 2, 1, 3).reshape(P, P, w * w)


def pp_discrete_sum(f: GridFunction, ell: int, m: int, q: float, sampler: str = "corner",
                    z=0.0) -> float:
    """``(sum_Q |f(x_Q)|^q)^(1/q)`` over the shifted mesh of cubes of side ``2^-(ell+m)``.

    Parameters
    ----------
    sampler : {"corner", "center", "max", "min"}
        Point ``x_Q`` chosen in each cube: its lower corner, its center (the
        grid point just above), or the grid point maximizing/minimizing ``|f|``.
    z : float or sequence
        Shift of the mesh, snapped to grid cells.
    """
    if sampler not in SAMPLERS:
        raise ParameterError(f"unknown sampler {sampler!r}; choose from {SAMPLERS}")
    if not q > 0:
        raise ParameterError("q must be positive")
    grid = f.grid
    level = ell + m
    if level > grid.J:
        raise ResolutionError(f"mesh level {level} exceeds grid resolution J={grid.J}")
    if f.band_limit is None:
        warnings.warn("f has no band-limit annotation; the sampling theorem may not apply",
                      RuntimeWarning, stacklevel=2)
    zc = np.atleast_1d(np.rint(np.asarray(z, dtype=float) * grid.n)).astype(int)
    if zc.size == 1:
        zc = np.repeat(zc, grid.d)
    a = np.abs(np.roll(f.samples, tuple(-int(c) for c in zc), axis=tuple(range(grid.d))))
    view = _cube_view(a, level, grid.J)
    w = 1 << (grid.J - level)
    if sampler == "corner":
        vals = view[..., 0]
    elif sampler == "center":
        mid = w // 2
        vals = view[..., mid] if grid.d == 1 else view[..., mid * w + mid]
    elif sampler == "max":
        vals = view.max(axis=-1)
    else:
        vals = view.min(axis=-1)
    return lp_norm(vals, q) * vals.size ** (1.0 / q)


def pp_scaled_ratio(f: GridFunction, ell: int, m: int, q: float, sampler: str = "corner",
                    z=0.0) -> float:
    """``pp_discrete_sum * 2^(-ell d / q) / ||f||_q``."""
    norm = lp_norm(f, q)
    if norm == 0.0:
        raise ParameterError("f vanishes identically")
    s = pp_discrete_sum(f, ell, m, q, sampler, z)
    return s * 2.0 ** (-ell * f.grid.d / q) / norm


def pp_local_extremum_norm(f: GridFunction, k: int, u: float, q: float,
                           mode: str = "sup") -> float:
    """``( int ext_{|x-y| <= u 2^-k} |f(y)|^q dx )^(1/q)`` with ``ext`` the sup or inf.

    For ``f`` of band ``2^k`` and small enough ``u`` both values are comparable
    to ``||f||_q``; ``u`` is a free parameter.
    """
    if mode not in ("sup", "inf"):
        raise ParameterError("mode must be 'sup' or 'inf'")
    grid = f.grid
    cells = int(math.floor(u * 2.0 ** (-k) * grid.n + 1e-9))
    a = np.abs(f.samples)
    if cells > 0:
        filt = ndimage.maximum_filter if mode == "sup" else ndimage.minimum_filter
        if grid.d == 1:
            a = filt(a, size=2 * cells + 1, mode="wrap")
        else:
            ax = np.arange(-cells, cells + 1)
            foot = ax[:, None] ** 2 + ax[None, :] ** 2 <= cells * cells
            a = filt(a, footprint=foot, mode="wrap")
    return lp_norm(a, q)


def _fit(x: np.ndarray, y: np.ndarray, through_origin: bool = False):
    if through_origin:
        slope = float(np.dot(x, y) / np.dot(x, x))
        intercept = 0.0
    else:
        slope, intercept = (float(v) for v in np.polyfit(x, y, 1))
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-24 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return slope, intercept, r2


def loglog_slope(xs: Sequence[float], ys: Sequence[float], base: float = math.e) -> SlopeFit:
    """Least-squares slope of ``log y`` against ``log x`` (logs in ``base``; slope is base-free)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size or x.size < 3:
        raise ParameterError("need at least 3 (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ParameterError("log-log fit needs positive data")
    lx = np.log(x) / math.log(base)
    ly = np.log(y) / math.log(base)
    slope, intercept, r2 = _fit(lx, ly)
    return SlopeFit(tuple(zip(lx.tolist(), ly.tolist())), slope, intercept, r2)


def linear_fit(xs: Sequence[float], ys: Sequence[float], through_origin: bool = False) -> SlopeFit:
    """Least-squares line ``y = slope x + intercept`` (optionally through the origin)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size or x.size < 3:
        raise ParameterError("need at least 3 (x, y) pairs")
    slope, intercept, r2 = _fit(x, y, through_origin)
    return SlopeFit(tuple(zip(x.tolist(), y.tolist())), slope, intercept, r2)
