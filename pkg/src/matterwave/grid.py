"""Fourier grid geometry, complex fields and spectral operations.

Field arrays are indexed ``[i_r, i_Z]``.  Two-channel wavefunctions stack the
reactant and product channels along a leading axis, ``[channel, i_r, i_Z]``.
The kinetic operator is applied spectrally with periodic semantics.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, InvalidParameterError, OutOfRangeError

REACTANT = 0
PRODUCT = 1

_WORKERS = os.cpu_count() or 1

try:
    import pyfftw
except ImportError:  # optional accelerator
    pyfftw = None

FFT_BACKENDS = ("scipy", "fftw")
_fft_backend = "scipy"


def set_fft_backend(name: str) -> str:
    """Select the transform library for :class:`KineticOperator`.

    ``"auto"`` picks pyFFTW when it is importable.  Returns the backend in use.
    """
    global _fft_backend
    if name == "auto":
        name = "fftw" if pyfftw is not None else "scipy"
    if name not in FFT_BACKENDS:
        raise InvalidParameterError(f"unknown FFT backend {name!r}")
    if name == "fftw" and pyfftw is None:
        raise InvalidParameterError("FFT backend 'fftw' needs pyFFTW, which is not installed")
    _fft_backend = name
    return name


def fft_backend() -> str:
    return _fft_backend


def fft2(a: np.ndarray, overwrite: bool = False) -> np.ndarray:
    return sfft.fft2(a, axes=(-2, -1), overwrite_x=overwrite, workers=_WORKERS)


def ifft2(a: np.ndarray, overwrite: bool = False) -> np.ndarray:
    return sfft.ifft2(a, axes=(-2, -1), overwrite_x=overwrite, workers=_WORKERS)


def momentum_axis(n: int, spacing: float) -> np.ndarray:
    """Angular wavenumbers in FFT order; spacing 2*pi/(n*d), range [-pi/d, pi/d)."""
    return 2.0 * np.pi * sfft.fftfreq(n, d=spacing)


@dataclass(frozen=True)
class Grid2D:
    """Uniform (r, Z) grid with the masses that define its kinetic operator.

    Lengths are in bohr, masses in electron masses.
    """

    nr: int
    nZ: int
    dr: float
    dZ: float
    r0: float = 0.0
    Z0: float = 0.0
    mu_r: float = 1.0
    M_Z: float = 1.0

    def __post_init__(self):
        for name in ("nr", "nZ"):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise InvalidParameterError(f"{name} must be an integer >= 2, got {value!r}")
        for name in ("dr", "dZ", "mu_r", "M_Z"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be positive, got {value!r}")
        for name in ("r0", "Z0"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nr, self.nZ)

    @property
    def r_extent(self) -> float:
        return self.nr * self.dr

    @property
    def Z_extent(self) -> float:
        return self.nZ * self.dZ

    @property
    def area_element(self) -> float:
        return self.dr * self.dZ

    @cached_property
    def r(self) -> np.ndarray:
        return self.r0 + self.dr * np.arange(self.nr)

    @cached_property
    def Z(self) -> np.ndarray:
        return self.Z0 + self.dZ * np.arange(self.nZ)

    @cached_property
    def kr(self) -> np.ndarray:
        return momentum_axis(self.nr, self.dr)

    @cached_property
    def kZ(self) -> np.ndarray:
        return momentum_axis(self.nZ, self.dZ)

    @cached_property
    def kinetic_multiplier(self) -> np.ndarray:
        """hbar^2 k^2 / 2m summed over both axes, shape (nr, nZ), FFT order."""
        t = (self.kr**2 / (2.0 * self.mu_r))[:, None] + (self.kZ**2 / (2.0 * self.M_Z))[None, :]
        t.flags.writeable = False
        return t

    @property
    def kinetic_max(self) -> float:
        """Nyquist kinetic energy, pi^2/(2 mu dr^2) + pi^2/(2 M dZ^2)."""
        return math.pi**2 / (2.0 * self.mu_r * self.dr**2) + math.pi**2 / (2.0 * self.M_Z * self.dZ**2)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.Z, indexing="ij")

    def same_geometry(self, other: "Grid2D") -> bool:
        return (self.nr, self.nZ, self.dr, self.dZ, self.r0, self.Z0) == (
            other.nr, other.nZ, other.dr, other.dZ, other.r0, other.Z0)


def build_grid(nr, nZ, dr, dZ, r0=0.0, Z0=0.0, mu_r=1.0, M_Z=1.0) -> Grid2D:
    return Grid2D(int(nr), int(nZ), float(dr), float(dZ), float(r0), float(Z0), float(mu_r), float(M_Z))


def _frozen(values, shape, what) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.shape != shape:
        raise GridMismatchError(f"{what} has shape {arr.shape}, grid expects {shape}")
    view = arr.view()
    view.flags.writeable = False
    return view


def _check_same(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


@dataclass(frozen=True, eq=False)
class ComplexField2D:
    """Complex amplitudes on a :class:`Grid2D` (read-only view)."""

    values: np.ndarray
    grid: Grid2D

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.shape, "field"))

    @classmethod
    def zeros(cls, grid: Grid2D) -> "ComplexField2D":
        return cls(np.zeros(grid.shape, dtype=np.complex128), grid)

    def norm(self) -> float:
        return norm(self)

    def inner(self, other: "ComplexField2D") -> complex:
        _check_same(self, other)
        return complex(np.vdot(self.values, other.values)) * self.grid.area_element

    def __add__(self, other):
        _check_same(self, other)
        return ComplexField2D(self.values + other.values, self.grid)

    def __sub__(self, other):
        _check_same(self, other)
        return ComplexField2D(self.values - other.values, self.grid)

    def __mul__(self, scalar):
        return ComplexField2D(self.values * scalar, self.grid)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class TwoChannelWavefunction:
    """Reactant and product channel amplitudes stacked as ``values[channel]``."""

    values: np.ndarray
    grid: Grid2D

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, (2,) + self.grid.shape, "wavefunction"))

    @classmethod
    def from_channels(cls, reactant, product, grid: Grid2D) -> "TwoChannelWavefunction":
        values = np.empty((2,) + grid.shape, dtype=np.complex128)
        values[REACTANT] = 0.0 if reactant is None else reactant
        values[PRODUCT] = 0.0 if product is None else product
        return cls(values, grid)

    @classmethod
    def zeros(cls, grid: Grid2D) -> "TwoChannelWavefunction":
        return cls(np.zeros((2,) + grid.shape, dtype=np.complex128), grid)

    @property
    def reactant(self) -> ComplexField2D:
        return ComplexField2D(self.values[REACTANT], self.grid)

    @property
    def product(self) -> ComplexField2D:
        return ComplexField2D(self.values[PRODUCT], self.grid)

    def channel_populations(self) -> tuple[float, float]:
        p = np.einsum("cij,cij->c", self.values.real, self.values.real)
        p += np.einsum("cij,cij->c", self.values.imag, self.values.imag)
        p *= self.grid.area_element
        return float(p[REACTANT]), float(p[PRODUCT])

    def norm(self) -> float:
        return math.sqrt(sum(self.channel_populations()))

    def inner(self, other: "TwoChannelWavefunction") -> complex:
        _check_same(self, other)
        return complex(np.vdot(self.values, other.values)) * self.grid.area_element

    def normalized(self) -> "TwoChannelWavefunction":
        n = self.norm()
        if n == 0.0:
            raise InvalidParameterError("cannot normalize the zero wavefunction")
        return TwoChannelWavefunction(self.values / n, self.grid)

    def __add__(self, other):
        _check_same(self, other)
        return TwoChannelWavefunction(self.values + other.values, self.grid)

    def __sub__(self, other):
        _check_same(self, other)
        return TwoChannelWavefunction(self.values - other.values, self.grid)

    def __mul__(self, scalar):
        return TwoChannelWavefunction(self.values * scalar, self.grid)

    __rmul__ = __mul__


def norm(f) -> float:
    """sqrt(sum |f|^2 dr dZ) for a single field or a two-channel wavefunction."""
    v = f.values
    return math.sqrt(float(np.vdot(v, v).real) * f.grid.area_element)


def apply_kinetic_array(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Spectral kinetic energy on the two trailing axes of ``values``."""
    spec = fft2(values)
    spec *= grid.kinetic_multiplier
    return ifft2(spec, overwrite=True)


class KineticOperator:
    """Reusable spectral kinetic operator on ``(2, nr, nZ)`` arrays.

    With pyFFTW the transforms use measured plans and private aligned
    buffers; the array returned by :meth:`apply` is one of those buffers and
    is overwritten by the next call.
    """

    def __init__(self, grid: Grid2D, multiplier: np.ndarray | None = None, channels: int = 2,
                 backend: str | None = None):
        self.grid = grid
        self.multiplier = grid.kinetic_multiplier if multiplier is None else multiplier
        self.backend = _fft_backend if backend is None else backend
        shape = (channels,) + grid.shape
        if self.backend == "fftw":
            if pyfftw is None:
                raise InvalidParameterError("pyFFTW is not installed")
            self._a = pyfftw.empty_aligned(shape, dtype="complex128")
            self._b = pyfftw.empty_aligned(shape, dtype="complex128")
            flags = ("FFTW_MEASURE", "FFTW_DESTROY_INPUT")
            self._fwd = pyfftw.FFTW(self._a, self._b, axes=(-2, -1), direction="FFTW_FORWARD",
                                    flags=flags, threads=_WORKERS)
            self._inv = pyfftw.FFTW(self._b, self._a, axes=(-2, -1), direction="FFTW_BACKWARD",
                                    flags=flags, threads=_WORKERS)
        elif self.backend != "scipy":
            raise InvalidParameterError(f"unknown FFT backend {self.backend!r}")

    def apply(self, values: np.ndarray) -> np.ndarray:
        if self.backend == "scipy":
            spec = fft2(values)
            spec *= self.multiplier
            return ifft2(spec, overwrite=True)
        self._a[...] = values
        self._fwd()
        self._b *= self.multiplier
        self._inv(normalise_idft=True)
        return self._a


def kinetic_apply(f: ComplexField2D, grid: Grid2D | None = None) -> ComplexField2D:
    grid = f.grid if grid is None else grid
    if f.grid != grid:
        raise GridMismatchError("field is not on the requested grid")
    return type(f)(apply_kinetic_array(f.values, grid), grid)


class Slice1D(NamedTuple):
    values: np.ndarray
    axis: str
    index: int
    coordinate: float
    line_coordinates: np.ndarray
    spacing: float


def snap_index(value: float, origin: float, spacing: float, n: int) -> int:
    """Nearest grid index; an exact midpoint resolves to the lower index."""
    t = (value - origin) / spacing
    eps = 1e-9
    if t < -eps or t > (n - 1) + eps:
        raise OutOfRangeError(
            f"coordinate {value} outside grid [{origin}, {origin + (n - 1) * spacing}]")
    return min(max(int(math.ceil(t - 0.5)), 0), n - 1)


def slice_at_fixed_coordinate(f: ComplexField2D, axis: str, value: float) -> Slice1D:
    """Line through the grid point nearest to ``value`` on ``axis``.

    ``axis="Z"`` fixes Z and returns the profile along r; ``axis="r"`` fixes r
    and returns the profile along Z.
    """
    g = f.grid
    if axis == "Z":
        i = snap_index(value, g.Z0, g.dZ, g.nZ)
        return Slice1D(np.array(f.values[:, i]), "Z", i, float(g.Z[i]), g.r, g.dr)
    if axis == "r":
        i = snap_index(value, g.r0, g.dr, g.nr)
        return Slice1D(np.array(f.values[i, :]), "r", i, float(g.r[i]), g.Z, g.dZ)
    raise InvalidParameterError(f"axis must be 'r' or 'Z', got {axis!r}")


def momentum_spectrum_1d(line, spacing: float, origin: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Centered continuous-normalized Fourier transform of a sampled line.

    ``F(k) = sum_j f_j exp(-i k x_j) dx`` with ``x_j = origin + j dx``, so that
    ``sum |f|^2 dx == sum |F|^2 dk / (2 pi)``.
    """
    line = np.asarray(line, dtype=np.complex128)
    if line.ndim != 1 or line.size == 0:
        raise InvalidParameterError("momentum spectrum needs a non-empty 1D line")
    k = sfft.fftshift(momentum_axis(line.size, spacing))
    amp = sfft.fftshift(sfft.fft(line)) * spacing
    if origin != 0.0:
        amp *= np.exp(-1j * k * origin)
    return k, amp
