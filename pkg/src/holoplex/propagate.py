"""Angular-spectrum propagation and its adjoint.

The forward model for one color channel is

    v = IFFT{ H * M * FFT{ exp(i*phi) } },   reconstruction amplitude |v|

with ``H`` the band-limited transfer function and ``M`` an optional spectrum
mask. :func:`evaluate` returns a loss on ``|v|`` together with its exact
gradient w.r.t. ``phi`` (and w.r.t. the mask parameters), obtained by running
the conjugate-transpose chain backwards; no autodiff is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

from . import core
from .core import (
    TWO_PI,
    ComplexField,
    DomainError,
    Grid,
    GridMismatchError,
    Intensity,
    NumericalError,
    PhaseMap,
    WaveSpec,
)
from .loss import LossConfig, loss_and_grad
from .mask import MaskSchedule, SpectrumMask, forward_mask, soft_mask_jacobian


@dataclass(frozen=True)
class FrequencyGrid:
    """Per-bin spatial frequencies of a centered spectrum.

    ``fx``/``fy`` are in cycles per meter, ``kx``/``ky`` in integer bins.
    All four broadcast to the grid shape.
    """

    grid: Grid
    kx: np.ndarray = field(repr=False)
    ky: np.ndarray = field(repr=False)
    fx: np.ndarray = field(repr=False)
    fy: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, grid: Grid) -> "FrequencyGrid":
        ky, kx = grid.bin_indices()
        dfy, dfx = grid.freq_step
        return cls(grid, kx, ky, kx * dfx, ky * dfy)

    @property
    def f2(self) -> np.ndarray:
        """Squared radial frequency ``fx^2 + fy^2``, full grid shape."""
        return self.fx**2 + self.fy**2


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Centered ``H(fx, fy)`` for one wavelength and signed distance.

    With ``padded=True`` the data lives on a grid twice as large in each
    direction and :func:`propagate` zero-pads/crops the field around it.
    """

    grid: Grid
    wave: WaveSpec
    z: float
    data: np.ndarray = field(repr=False)
    padded: bool = False

    def __post_init__(self):
        a = np.asarray(self.data, dtype=complex)
        self.compute_grid.check(a, "transfer function")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "data", a)
        # unshifted copy for the FFT hot path
        u = sfft.ifftshift(a)
        u.flags.writeable = False
        object.__setattr__(self, "_unshifted", u)

    @property
    def compute_grid(self) -> Grid:
        if self.padded:
            return Grid(2 * self.grid.height, 2 * self.grid.width, self.grid.pitch)
        return self.grid

    @property
    def unshifted(self) -> np.ndarray:
        return self._unshifted

    def recentered(self, cx: int, cy: int) -> "TransferFunction":
        """``H`` sampled around bin ``(cx, cy)`` instead of DC (circular).

        This is the transfer function seen by a field whose carrier tilt has
        been removed: propagating the demodulated field with it and remodulating
        gives the same intensity as propagating the tilted field with ``H``.
        """
        if int(cx) != cx or int(cy) != cy:
            raise ValueError("recentering is exact only for integer bin offsets")
        return TransferFunction(self.grid, self.wave, self.z,
                                np.roll(self.data, (-int(cy), -int(cx)), axis=(0, 1)), self.padded)


def make_transfer(grid: Grid, wave: WaveSpec, z: float, pad: bool = False) -> TransferFunction:
    """Band-limited angular-spectrum transfer function, zero on evanescent bins."""
    cgrid = Grid(2 * grid.height, 2 * grid.width, grid.pitch) if pad else grid
    fg = FrequencyGrid.of(cgrid)
    s = 1.0 - wave.wavelength**2 * fg.f2
    band = s >= 0
    # phase kz*sqrt(s) = 2*pi*(z/lambda)*sqrt(s); reduce mod 1 cycle first to keep precision
    cycles = np.mod((z / wave.wavelength) * np.sqrt(np.where(band, s, 0.0)), 1.0)
    h = np.where(band, np.exp(1j * TWO_PI * cycles), 0.0)
    return TransferFunction(grid, wave, float(z), h, pad)


def _pad(u: np.ndarray) -> np.ndarray:
    h, w = u.shape[-2:]
    out = np.zeros(u.shape[:-2] + (2 * h, 2 * w), dtype=complex)
    out[..., h // 2:h // 2 + h, w // 2:w // 2 + w] = u
    return out


def _crop(u: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    return u[..., h // 2:h // 2 + h, w // 2:w // 2 + w]


def _apply(u: np.ndarray, hm: np.ndarray, padded: bool) -> np.ndarray:
    """``IFFT(hm * FFT(u))`` with ``hm`` in unshifted order."""
    shape = u.shape[-2:]
    if padded:
        u = _pad(u)
    w = core._FFT_WORKERS
    U = sfft.fft2(u, workers=w)
    U *= hm
    v = sfft.ifft2(U, workers=w, overwrite_x=True)
    return _crop(v, shape) if padded else v


def _operator(H: TransferFunction, m: np.ndarray | None) -> np.ndarray:
    if m is None:
        return H.unshifted
    return H.unshifted * sfft.ifftshift(m)


def _check_mask_compat(H: TransferFunction, mask) -> None:
    if mask is not None and H.padded:
        raise ValueError("spectrum masks are defined on the unpadded grid; disable padding")


def propagate(f: ComplexField, H: TransferFunction, mask: SpectrumMask | None = None,
              tau: float | None = None) -> ComplexField:
    """Propagate a spatial field by ``H``, optionally through a spectrum mask."""
    if f.domain != "spatial":
        raise DomainError("propagate expects a spatial-domain field")
    if f.grid != H.grid:
        raise GridMismatchError(f"field grid {f.grid} != transfer grid {H.grid}")
    _check_mask_compat(H, mask)
    m = forward_mask(mask, H.grid, tau)
    return ComplexField(f.grid, _apply(f.data, _operator(H, m), H.padded), "spatial")


def reconstruct_intensity(phase: PhaseMap, H: TransferFunction, mask: SpectrumMask | None = None,
                          tau: float | None = None) -> Intensity:
    return core.intensity_of(propagate(core.phase_to_field(phase), H, mask, tau))


def reconstruct_amplitude(phi: np.ndarray, H: TransferFunction, m: np.ndarray | None = None) -> np.ndarray:
    """Array-level ``|v|`` for a stack of phases ``(..., H, W)`` and mask values ``m``."""
    return np.abs(_apply(np.exp(1j * phi), _operator(H, m), H.padded))


class Evaluation(NamedTuple):
    loss: float
    mse: float
    ffl: float
    phase_grad: np.ndarray | None
    mask_grad: np.ndarray | None
    amplitude: np.ndarray


def evaluate(phi: np.ndarray, H: TransferFunction, target: np.ndarray, loss: LossConfig,
             mask: SpectrumMask | None = None, *, tau: float | None = None,
             need_grad: bool = True, need_mask_grad: bool = False) -> Evaluation:
    """Loss of one channel and its gradients, for a phase stack ``(..., H, W)``.

    ``target`` is compared after :meth:`LossConfig.prepare_target`. The forward
    pass uses the mask's own mode; the mask-parameter gradient always uses the
    soft-surrogate Jacobian at ``tau`` (straight-through for hard masks).
    """
    phi = np.asarray(phi)
    H.grid.check(phi, "phase")
    y = loss.prepare_target(target)
    if y.shape[-2:] != phi.shape[-2:]:
        raise GridMismatchError(f"target shape {y.shape} does not match phase {phi.shape}")
    _check_mask_compat(H, mask)
    if tau is None:
        tau = MaskSchedule().tau_max
    m = forward_mask(mask, H.grid, tau)
    hm = _operator(H, m)

    u = np.exp(1j * phi)
    if not H.padded:
        w = core._FFT_WORKERS
        U = sfft.fft2(u, norm="ortho", workers=w)
        v = sfft.ifft2(U * hm, norm="ortho", workers=w)
    else:
        v = _apply(u, hm, True)
    a = np.abs(v)
    total, mse, ffl, g_a = loss_and_grad(np.broadcast_to(y, a.shape), a, loss, need_grad=need_grad)
    if not need_grad:
        return Evaluation(total, mse, ffl, None, None, a)

    # d|v|: g_v = g_a * v/|v| (zero where v vanishes)
    safe = np.where(a > 0, a, 1.0)
    g_v = np.where(a > 0, g_a / safe, 0.0) * v
    if H.padded:
        g_u = _apply(g_v, np.conj(hm), True)
    else:
        G = sfft.fft2(g_v, norm="ortho", workers=core._FFT_WORKERS)
        g_u = sfft.ifft2(G * np.conj(hm), norm="ortho", workers=core._FFT_WORKERS)
    # u = exp(i phi): dL/dphi = Re(conj(g_u) * i u)
    g_phi = np.imag(g_u * np.conj(u))
    if not np.all(np.isfinite(g_phi)):
        raise NumericalError("non-finite phase gradient")

    g_mask = None
    if need_mask_grad and mask is not None:
        # dL/dM per bin, then contract with the soft Jacobian
        dl_dm = np.real(np.conj(G) * H.unshifted * U)
        dl_dm = sfft.fftshift(dl_dm.reshape((-1,) + dl_dm.shape[-2:]).sum(axis=0))
        jac = soft_mask_jacobian(mask, H.grid, tau)
        g_mask = np.tensordot(jac, dl_dm, axes=([1, 2], [0, 1]))
    return Evaluation(total, mse, ffl, g_phi, g_mask, a)


def adjoint_gradient(phase: PhaseMap, H: TransferFunction, mask: SpectrumMask | None,
                     target: Intensity | np.ndarray, loss: LossConfig,
                     tau: float | None = None) -> np.ndarray:
    """Gradient of the reconstruction loss w.r.t. every phase pixel."""
    if phase.grid != H.grid:
        raise GridMismatchError("phase and transfer function grids differ")
    t = target.values if isinstance(target, Intensity) else np.asarray(target, dtype=float)
    if isinstance(target, Intensity) and target.grid != phase.grid:
        raise GridMismatchError("target grid differs from phase grid")
    return evaluate(phase.values, H, t, loss, mask, tau=tau).phase_grad


def diffraction_angle(fx: float, fy: float, wave: WaveSpec) -> float:
    """Angle (radians) at which the spatial frequency ``(fx, fy)`` diffracts."""
    s = wave.wavelength * np.hypot(fx, fy)
    if s > 1.0:
        raise ValueError(f"evanescent frequency: lambda*|f| = {s} > 1")
    return float(np.arcsin(s))


def _spectrum(phase: PhaseMap, field: bool) -> np.ndarray:
    g = np.exp(1j * phase.values) if field else phase.values
    return core.fft2c(g)


def phase_gradient_energy(phase: PhaseMap, field: bool = False) -> float:
    """``sum |grad g|^2 dx dy`` with ``g = phi`` (or ``exp(i phi)`` if ``field``).

    Derivatives are spectral (multiplication by ``i 2 pi f``) so that the
    identity with :func:`spectral_second_moment` is exact.
    """
    fg = FrequencyGrid.of(phase.grid)
    G = _spectrum(phase, field)
    gx = core.ifft2c(1j * TWO_PI * fg.fx * G)
    gy = core.ifft2c(1j * TWO_PI * fg.fy * G)
    p2 = phase.grid.pitch**2
    return float(np.sum(np.abs(gx) ** 2 + np.abs(gy) ** 2) * p2)


def spectral_second_moment(phase: PhaseMap, field: bool = False) -> float:
    """``(2 pi)^2 sum (fx^2 + fy^2) |G|^2 dfx dfy`` in the same units as the energy."""
    fg = FrequencyGrid.of(phase.grid)
    G = _spectrum(phase, field)
    # unitary DFT: sum over bins of |G|^2 already carries the dx dy measure up to pitch^2
    return float(TWO_PI**2 * np.sum(fg.f2 * np.abs(G) ** 2) * phase.grid.pitch**2)
