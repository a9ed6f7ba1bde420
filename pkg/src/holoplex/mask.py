"""Circular spectrum masks for depth-division color multiplexing.

Mask geometry is expressed in frequency-bin units relative to the DC bin of the
centered spectrum, so ``(cx, cy, r) = (3, -2, 5)`` is a disc of radius 5 bins
centered three bins right of and two bins above DC (``cy`` counts rows).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .core import TWO_PI, Grid, HoloError, PhaseMap, WaveSpec

MASK_MODES = ("hard", "soft")


class EmptySupportError(HoloError, ValueError):
    """The mask passes no propagating frequency."""


@dataclass(frozen=True)
class SpectrumMask:
    """Learnable circular filter ``(cx, cy, r)``.

    ``mode="hard"`` filters with the binary disc; gradients w.r.t. the
    parameters use the soft surrogate (straight-through). ``mode="soft"``
    uses the sigmoid disc in the forward pass as well.
    """

    cx: float = 0.0
    cy: float = 0.0
    r: float = 0.0
    mode: str = "hard"

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError(f"mask radius must be >= 0, got {self.r}")
        if self.mode not in MASK_MODES:
            raise ValueError(f"mask mode must be one of {MASK_MODES}, got {self.mode!r}")
        if not np.all(np.isfinite([self.cx, self.cy, self.r])):
            raise ValueError("mask parameters must be finite")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.r], dtype=float)

    def with_params(self, p) -> "SpectrumMask":
        cx, cy, r = (float(v) for v in p)
        return replace(self, cx=cx, cy=cy, r=max(r, 0.0))

    @classmethod
    def full_band(cls, grid: Grid) -> "SpectrumMask":
        """Centered disc that covers every bin of ``grid``."""
        return cls(0.0, 0.0, float(np.hypot(grid.height, grid.width)), "hard")


@dataclass(frozen=True)
class MaskSchedule:
    tau0: float = 0.00625
    growth: float = 2.0
    tau_max: float = 1.6

    def __post_init__(self):
        if not (0 < self.tau0 <= self.tau_max) or self.growth < 1:
            raise ValueError("schedule needs 0 < tau0 <= tau_max and growth >= 1")


def _sq_dist_minus_r2(mask: SpectrumMask, grid: Grid) -> np.ndarray:
    """``r^2 - (kx - cx)^2 - (ky - cy)^2`` per bin."""
    ky, kx = grid.bin_indices()
    return mask.r**2 - (kx - mask.cx) ** 2 - (ky - mask.cy) ** 2


def hard_mask(mask: SpectrumMask, grid: Grid) -> np.ndarray:
    return (_sq_dist_minus_r2(mask, grid) >= 0).astype(float)


def soft_mask(mask: SpectrumMask, grid: Grid, tau: float) -> np.ndarray:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return expit(tau * _sq_dist_minus_r2(mask, grid))


def soft_mask_jacobian(mask: SpectrumMask, grid: Grid, tau: float) -> np.ndarray:
    """Derivatives of :func:`soft_mask` w.r.t. ``(cx, cy, r)``, shape ``(3, H, W)``."""
    ky, kx = grid.bin_indices()
    s = soft_mask(mask, grid, tau)
    ds = tau * s * (1.0 - s)
    jac = np.empty((3,) + grid.shape)
    jac[0] = ds * 2.0 * (kx - mask.cx)
    jac[1] = ds * 2.0 * (ky - mask.cy)
    jac[2] = ds * 2.0 * mask.r
    return jac


def forward_mask(mask: SpectrumMask | None, grid: Grid, tau: float | None = None) -> np.ndarray | None:
    """Mask values used in the forward pass (``None`` means no filtering)."""
    if mask is None:
        return None
    if mask.mode == "soft":
        return soft_mask(mask, grid, MaskSchedule().tau_max if tau is None else tau)
    return hard_mask(mask, grid)


def step_schedule(schedule: MaskSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    # exponent capped so huge epochs cannot overflow the float pow
    tau = schedule.tau0 * schedule.growth ** min(epoch, 256)
    return float(min(tau, schedule.tau_max))


def ramp_equivalent(mask: SpectrumMask, grid: Grid) -> PhaseMap:
    """Linear phase ``2*pi*(cx*x/W + cy*y/H)`` that moves a spectrum by ``(cx, cy)`` bins."""
    y, x = grid.pixel_coords()
    return PhaseMap(grid, TWO_PI * (mask.cx * x / grid.width + mask.cy * y / grid.height))


def propagating_band(grid: Grid, wave: WaveSpec) -> np.ndarray:
    ky, kx = grid.bin_indices()
    dfy, dfx = grid.freq_step
    return (wave.wavelength * kx * dfx) ** 2 + (wave.wavelength * ky * dfy) ** 2 <= 1.0


def numerical_aperture(mask: SpectrumMask, grid: Grid, wave: WaveSpec) -> float:
    """NA from the DC axis to the outer mask edge, ``lambda * (|c| + r)``.

    Raises :class:`EmptySupportError` if no passed bin propagates. Capped at 1.
    """
    support = (hard_mask(mask, grid) > 0) & propagating_band(grid, wave)
    if not support.any():
        raise EmptySupportError("mask does not pass any propagating frequency")
    dfy, dfx = grid.freq_step
    f_outer = np.hypot(mask.cx * dfx, mask.cy * dfy) + mask.r * max(dfx, dfy)
    return float(min(wave.wavelength * f_outer, 1.0))


def depth_of_field(wave: WaveSpec, na: float) -> float:
    return wave.wavelength / na**2


def na_and_dof(mask: SpectrumMask, grid: Grid, wave: WaveSpec) -> tuple[float, float]:
    na = numerical_aperture(mask, grid, wave)
    return na, depth_of_field(wave, na)


def separation_threshold(wave_i: WaveSpec, na_i: float, wave_j: WaveSpec, na_j: float) -> float:
    """Minimum axial gap between two color planes, mean of their depths of field."""
    return 0.5 * (depth_of_field(wave_i, na_i) + depth_of_field(wave_j, na_j))


def check_depth_separation(z, waves, nas=None, *, masks=None, grid: Grid | None = None
                           ) -> dict[tuple[int, int], bool]:
    """Strict separation verdict for every channel pair ``i < j``.

    NAs come from ``nas`` directly or are derived from ``masks`` on ``grid``.
    """
    if len(z) < 2:
        raise ValueError("need at least two channels")
    if nas is None:
        if masks is None or grid is None:
            raise ValueError("pass either nas or masks and grid")
        nas = [numerical_aperture(m, grid, w) for m, w in zip(masks, waves)]
    if not len(z) == len(waves) == len(nas):
        raise ValueError("z, waves and nas must have equal length")
    return {
        (i, j): bool(abs(z[i] - z[j]) > separation_threshold(waves[i], nas[i], waves[j], nas[j]))
        for i, j in itertools.combinations(range(len(z)), 2)
    }
