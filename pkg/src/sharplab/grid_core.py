"""Periodic torus substrate: grids, sampled functions, dyadic cubes, DFT, norms.

The torus is ``[0, 1)^d`` with ``2**J`` samples per axis.  Frequencies are the
integer lattice points in ``(-2**(J-1), 2**(J-1)]^d`` and ``|xi|`` is the
Euclidean norm of the integer frequency, so a function belongs to the
band-limited class of radius ``r`` when its Fourier coefficients vanish for
``|xi| > r``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "SharplabError",
    "ConfigurationError",
    "ResolutionError",
    "ParameterError",
    "ConstructionError",
    "Grid",
    "GridFunction",
    "DyadicCube",
    "dft",
    "idft",
    "cube_indicator",
    "cube_containing",
    "lp_norm",
    "BAND_TOL",
]

#: Relative magnitude below which a Fourier coefficient counts as a structural zero.
BAND_TOL = 1e-9


class SharplabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SharplabError):
    """Invalid sizes or settings that no computation could satisfy."""


class ResolutionError(SharplabError):
    """The requested object is finer than the grid can represent."""


class ParameterError(SharplabError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ConstructionError(SharplabError):
    """A family or mollifier could not be built with the requested guarantees."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the periodic torus ``[0, 1)^d``.

    Parameters
    ----------
    d : int
        Dimension, 1 or 2.
    J : int
        Resolution exponent; each axis carries ``2**J`` points.
    max_J : int, optional
        Configurable ceiling on ``J``.
    """

    d: int
    J: int
    max_J: int = 26

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got d={self.d}")
        if not (4 <= self.J <= self.max_J):
            raise ConfigurationError(
                f"resolution exponent must satisfy 4 <= J <= {self.max_J}, got J={self.J}")

    @property
    def n(self) -> int:
        """Points per axis."""
        return 1 << self.J

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        """Total sample count ``2**(J*d)``."""
        return self.n ** self.d

    @property
    def spacing(self) -> float:
        return 2.0 ** (-self.J)

    def axis(self) -> np.ndarray:
        """Sample coordinates along one axis."""
        return np.arange(self.n) * self.spacing

    def coords(self) -> Tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to :attr:`shape`."""
        ax = self.axis()
        if self.d == 1:
            return (ax,)
        return tuple(np.meshgrid(ax, ax, indexing="ij"))

    def offset_axis(self) -> np.ndarray:
        """Signed integer offsets in cells, in FFT order: ``0, 1, ..., -1``."""
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    def periodic_distance(self) -> np.ndarray:
        """Periodic distance of every grid point to the origin."""
        ax = np.abs(self.offset_axis()) * self.spacing
        if self.d == 1:
            return ax
        return np.sqrt(ax[:, None] ** 2 + ax[None, :] ** 2)

    def frequencies(self) -> Tuple[np.ndarray, ...]:
        """Integer frequency arrays (FFT order) broadcast to :attr:`shape`."""
        k = self.offset_axis()
        if self.d == 1:
            return (k,)
        return tuple(np.meshgrid(k, k, indexing="ij"))

    def frequency_norm(self) -> np.ndarray:
        """Euclidean norm of the integer frequency at each spectral slot."""
        k = self.offset_axis()
        if self.d == 1:
            return np.abs(k)
        return np.sqrt(k[:, None] ** 2 + k[None, :] ** 2)

    def nyquist(self) -> int:
        return self.n // 2


class GridFunction:
    """Complex-valued samples on a :class:`Grid` with a lazily cached spectrum.

    The samples are treated as immutable: the array is marked read-only and the
    spectrum is computed at most once.

    Parameters
    ----------
    grid : Grid
    samples : array_like
        Array of shape ``grid.shape``.  Real input is kept real.
    band_limit : tuple (r, annulus), optional
        Asserted membership in the band-limited class of radius ``r``; with
        ``annulus=True`` the spectrum also vanishes for ``|xi| < r/2``.
    spectrum : array_like, optional
        Precomputed Fourier coefficients of ``samples``.
    notes : dict, optional
        Free-form provenance such as snapped offsets.
    """

    __slots__ = ("grid", "samples", "band_limit", "_spectrum", "notes")

    def __init__(self, grid: Grid, samples, band_limit: Optional[Tuple[float, bool]] = None,
                 spectrum=None, notes: Optional[dict] = None):
        arr = np.asarray(samples)
        if arr.shape != grid.shape:
            raise ConfigurationError(
                f"samples have shape {arr.shape}, grid expects {grid.shape}")
        if np.iscomplexobj(arr):
            arr = np.array(arr, dtype=np.complex128)
        else:
            arr = np.array(arr, dtype=np.float64)
        arr.flags.writeable = False
        self.grid = grid
        self.samples = arr
        self.band_limit = band_limit
        if spectrum is not None:
            spectrum = np.asarray(spectrum, dtype=np.complex128)
            spectrum.flags.writeable = False
        self._spectrum = spectrum
        self.notes = dict(notes or {})

    @property
    def spectrum(self) -> np.ndarray:
        """Fourier coefficients in FFT order (cached)."""
        if self._spectrum is None:
            spec = np.fft.fftn(self.samples, norm="forward")
            spec.flags.writeable = False
            self._spectrum = spec
        return self._spectrum

    @property
    def has_spectrum(self) -> bool:
        return self._spectrum is not None

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum, real: bool = False,
                      band_limit=None) -> "GridFunction":
        """Build from Fourier coefficients; ``real=True`` drops the imaginary part."""
        spectrum = np.asarray(spectrum, dtype=np.complex128)
        samples = np.fft.ifftn(spectrum, norm="forward")
        if real:
            samples = samples.real
        return cls(grid, samples, band_limit=band_limit,
                   spectrum=None if real else spectrum)

    def abs(self) -> np.ndarray:
        return np.abs(self.samples)

    def check_band_limit(self, tol: float = BAND_TOL) -> bool:
        """Verify the ``band_limit`` annotation against the spectrum."""
        if self.band_limit is None:
            return True
        r, annulus = self.band_limit
        mag = np.abs(self.spectrum)
        peak = mag.max()
        if peak == 0.0:
            return True
        rho = self.grid.frequency_norm()
        outside = rho > r
        if annulus:
            outside |= rho < r / 2.0
        return bool(np.all(mag[outside] <= tol * peak))

    def with_samples(self, samples, **kw) -> "GridFunction":
        return GridFunction(self.grid, samples, **kw)

    def __repr__(self):
        return (f"GridFunction(d={self.grid.d}, J={self.grid.J}, dtype={self.samples.dtype}, "
                f"band_limit={self.band_limit})")


@dataclass(frozen=True)
class DyadicCube:
    """Half-open dyadic cube ``prod_i [j_i 2**-n, (j_i + 1) 2**-n)``."""

    level: int
    index: Tuple[int, ...] = field(default=(0,))

    def __post_init__(self):
        if self.level < 0:
            raise ParameterError(f"cube level must be nonnegative, got {self.level}")
        idx = tuple(int(i) for i in np.atleast_1d(self.index))
        object.__setattr__(self, "index", idx)
        top = 1 << self.level
        if any(i < 0 or i >= top for i in idx):
            raise ParameterError(f"cube index {idx} outside [0, {top}) at level {self.level}")

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.index, dtype=float) * self.side

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.index, dtype=float) + 0.5) * self.side

    def measure(self) -> float:
        return self.side ** self.d


def _check_spectral(f: GridFunction):
    n = f.grid.n
    if n & (n - 1):
        raise ConfigurationError(f"grid size {n} is not a power of two")


def dft(f: GridFunction) -> GridFunction:
    """Fourier coefficients of ``f``, normalized so ``dft(1)`` is a unit spike at 0.

    The normalization makes the map an isometry from the mean-based ``L^2``
    norm of the samples to the ``l^2`` norm of the coefficients.
    """
    _check_spectral(f)
    return GridFunction(f.grid, f.spectrum, notes={"domain": "frequency"})


def idft(spec: GridFunction) -> GridFunction:
    """Inverse of :func:`dft`."""
    _check_spectral(spec)
    samples = np.fft.ifftn(spec.samples, norm="forward")
    return GridFunction(spec.grid, samples, spectrum=spec.samples)


def cube_indicator(grid: Grid, cube: DyadicCube) -> GridFunction:
    """Indicator of a dyadic cube sampled at the grid points."""
    if cube.d != grid.d:
        raise ConfigurationError(f"cube dimension {cube.d} does not match grid dimension {grid.d}")
    if cube.level > grid.J:
        raise ResolutionError(
            f"cube at level {cube.level} is finer than the grid (J={grid.J})")
    width = 1 << (grid.J - cube.level)
    mask1 = []
    for j in cube.index:
        m = np.zeros(grid.n)
        m[j * width:(j + 1) * width] = 1.0
        mask1.append(m)
    samples = mask1[0] if grid.d == 1 else np.multiply.outer(mask1[0], mask1[1])
    return GridFunction(grid, samples)


def cube_containing(x, level: int) -> DyadicCube:
    """The level-``level`` dyadic cube containing the point ``x`` in ``[0, 1)^d``."""
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(pt < 0.0) or np.any(pt >= 1.0):
        raise ParameterError(f"point {pt} is outside [0, 1)^d")
    idx = np.floor(pt * (1 << level)).astype(np.int64)
    idx = np.minimum(idx, (1 << level) - 1)
    return DyadicCube(level, tuple(int(i) for i in idx))


def lp_norm(f, p: float) -> float:
    """Riemann-sum ``L^p`` norm ``(mean |f|^p)^(1/p)`` on the torus.

    Parameters
    ----------
    f : GridFunction or array_like
    p : float
        Exponent in ``(0, inf)``; ``np.inf`` gives the sup norm.
    """
    if not p > 0:
        raise ParameterError(f"exponent p must be positive, got {p}")
    a = np.abs(f.samples if isinstance(f, GridFunction) else np.asarray(f))
    if np.isinf(p):
        return float(a.max())
    if p == 2:
        return float(np.sqrt(np.mean(a * a)))
    if p == 1:
        return float(np.mean(a))
    peak = a.max()
    if peak == 0.0:
        return 0.0
    return float(peak * np.mean((a / peak) ** p) ** (1.0 / p))


def as_samples(f) -> np.ndarray:
    """Samples of a GridFunction, or the array itself."""
    return f.samples if isinstance(f, GridFunction) else np.asarray(f)


def snap_offset(grid: Grid, h: Sequence[float] | float) -> Tuple[Tuple[int, ...], bool]:
    """Round a continuous offset to whole grid cells.

    Returns the cell offsets and whether rounding changed the value.
    """
    hv = np.atleast_1d(np.asarray(h, dtype=float))
    if hv.size == 1 and grid.d == 2:
        hv = np.repeat(hv, 2)
    if hv.size != grid.d:
        raise ParameterError(f"offset {hv} does not match dimension {grid.d}")
    cells = np.rint(hv * grid.n)
    snapped = bool(np.any(np.abs(cells - hv * grid.n) > 1e-9))
    return tuple(int(c) for c in cells), snapped
