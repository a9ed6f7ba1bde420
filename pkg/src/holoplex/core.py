"""Sampling grids, optical field containers and centered unitary FFTs.

Conventions used everywhere in the package:

* arrays are indexed ``[..., y, x]`` (row, column);
* spatial coordinates are integer pixel indices ``x = 0..W-1``, ``y = 0..H-1``;
* spectra are DC-centered: the zero-frequency bin sits at ``(H // 2, W // 2)``;
* transforms are unitary (``1/sqrt(H*W)`` in each direction).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi

Domain = Literal["spatial", "frequency"]


class HoloError(Exception):
    """Base class for errors raised by holoplex."""


class GridMismatchError(HoloError, ValueError):
    """Operands live on different sampling grids."""


class DomainError(HoloError, ValueError):
    """A field was passed in the wrong (spatial/frequency) domain."""


class NumericalError(HoloError, FloatingPointError):
    """A computation produced non-finite values or diverged."""


_FFT_WORKERS: int | None = None


def set_fft_workers(n: int | None) -> None:
    """Cap the number of threads used by the FFT backend (``None`` = backend default)."""
    global _FFT_WORKERS
    _FFT_WORKERS = n


@dataclass(frozen=True)
class Grid:
    """Square-pixel sampling grid."""

    height: int
    width: int
    pitch: float

    def __post_init__(self):
        if int(self.height) != self.height or int(self.width) != self.width:
            raise ValueError("grid dimensions must be integers")
        if self.height < 2 or self.width < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.height}x{self.width}")
        if not (self.pitch > 0 and np.isfinite(self.pitch)):
            raise ValueError(f"pitch must be positive, got {self.pitch}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def dc_index(self) -> tuple[int, int]:
        return (self.height // 2, self.width // 2)

    @property
    def freq_step(self) -> tuple[float, float]:
        """Frequency sampling step ``(dfy, dfx)`` in cycles per meter."""
        return (1.0 / (self.height * self.pitch), 1.0 / (self.width * self.pitch))

    def bin_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer frequency-bin coordinates ``(ky, kx)`` relative to DC, broadcastable."""
        ky = np.arange(self.height) - self.height // 2
        kx = np.arange(self.width) - self.width // 2
        return ky[:, None].astype(float), kx[None, :].astype(float)

    def pixel_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer pixel coordinates ``(y, x)``, broadcastable."""
        return (np.arange(self.height, dtype=float)[:, None],
                np.arange(self.width, dtype=float)[None, :])

    def check(self, arr: np.ndarray, what: str = "array") -> None:
        if arr.shape[-2:] != self.shape:
            raise GridMismatchError(f"{what} has shape {arr.shape[-2:]}, grid is {self.shape}")


@dataclass(frozen=True)
class WaveSpec:
    """Monochromatic illumination."""

    wavelength: float

    def __post_init__(self):
        if not (self.wavelength > 0 and np.isfinite(self.wavelength)):
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def k(self) -> float:
        return TWO_PI / self.wavelength


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: Grid
    data: np.ndarray
    domain: Domain = "spatial"

    def __post_init__(self):
        if self.domain not in ("spatial", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")
        self.grid.check(self.data, "field")
        object.__setattr__(self, "data", _frozen(np.asarray(self.data, dtype=complex)))


@dataclass(frozen=True, eq=False)
class PhaseMap:
    """Phase in radians. Stored unwrapped; use :meth:`wrapped` for export."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.grid.check(self.values, "phase")
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=float)))

    def wrapped(self) -> np.ndarray:
        return wrap_phase(self.values)


@dataclass(frozen=True, eq=False)
class Intensity:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.grid.check(self.values, "intensity")
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("intensity values must be finite and nonnegative")
        object.__setattr__(self, "values", _frozen(v))


@dataclass(frozen=True, eq=False)
class VideoTensor:
    """Frames x channels stack of images on one grid, shape ``(T, C, H, W)``."""

    grid: Grid
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim == 2:
            d = d[None, None]
        elif d.ndim == 3:
            d = d[:, None]
        if d.ndim != 4:
            raise ValueError(f"video must be (T, C, H, W), got shape {d.shape}")
        if d.shape[0] < 1 or d.shape[1] not in (1, 3):
            raise ValueError(f"need T >= 1 and C in {{1, 3}}, got T={d.shape[0]}, C={d.shape[1]}")
        self.grid.check(d, "video")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]


def wrap_phase(phi: np.ndarray) -> np.ndarray:
    """Wrap to ``[0, 2*pi)``."""
    w = np.mod(phi, TWO_PI)
    # mod can round up to exactly 2*pi for tiny negative inputs
    w[w >= TWO_PI] = 0.0
    return w


def fft2c(a: np.ndarray) -> np.ndarray:
    """Centered unitary 2-D FFT over the last two axes (array level)."""
    return sfft.fftshift(sfft.fft2(a, norm="ortho", workers=_FFT_WORKERS), axes=(-2, -1))


def ifft2c(a: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2c`."""
    return sfft.ifft2(sfft.ifftshift(a, axes=(-2, -1)), norm="ortho", workers=_FFT_WORKERS)


def centered_fft(f: ComplexField) -> ComplexField:
    if f.domain != "spatial":
        raise DomainError("centered_fft expects a spatial-domain field")
    return ComplexField(f.grid, fft2c(f.data), "frequency")


def centered_ifft(f: ComplexField) -> ComplexField:
    if f.domain != "frequency":
        raise DomainError("centered_ifft expects a frequency-domain field")
    return ComplexField(f.grid, ifft2c(f.data), "spatial")


def phase_to_field(phase: PhaseMap) -> ComplexField:
    return ComplexField(phase.grid, np.exp(1j * phase.values), "spatial")


def intensity_of(f: ComplexField) -> Intensity:
    if f.domain != "spatial":
        raise DomainError("intensity is only defined for spatial-domain fields")
    return Intensity(f.grid, np.abs(f.data) ** 2)
