"""Reconstruction objectives: amplitude MSE, focal frequency loss, and their mix.

All functions take a target amplitude stack ``y`` and a reconstructed amplitude
stack ``|P(x)|`` of identical shape ``(..., H, W)``. Every leading index is one
image (frame, or frame x channel); normalization is by the total element count,
i.e. ``1 / (T * n_x * n_y)`` for a stack of ``T`` images.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .core import NumericalError, VideoTensor

SCALE_MODES = ("none", "lsq")


class DegenerateScalingWarning(UserWarning):
    """Least-squares scaling was skipped because a reconstruction is all zeros."""


@dataclass(frozen=True)
class LossConfig:
    """Weights of ``mse_weight * L_mse + ffl_weight * L_ffl``.

    ``scale_mode="lsq"`` rescales each reconstructed image by the least-squares
    factor ``<y, a> / <a, a>`` before comparison. ``detach_weight`` treats the
    focal weight as a constant when differentiating (the usual focal-frequency
    loss convention); set it to ``False`` to get the exact derivative.
    """

    mse_weight: float = 1.0
    ffl_weight: float = 1.0
    alpha: float = 1.0
    scale_mode: str = "none"
    detach_weight: bool = True
    target_is_intensity: bool = False

    def __post_init__(self):
        if self.mse_weight < 0 or self.ffl_weight < 0:
            raise ValueError("loss weights must be nonnegative")
        if not self.mse_weight + self.ffl_weight > 0:
            raise ValueError("at least one loss weight must be positive")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {SCALE_MODES}, got {self.scale_mode!r}")

    def prepare_target(self, target: np.ndarray) -> np.ndarray:
        """Amplitude the reconstruction is compared against."""
        t = np.asarray(target, dtype=float)
        return np.sqrt(t) if self.target_is_intensity else t


def _as_array(x) -> np.ndarray:
    if isinstance(x, VideoTensor):
        return x.data
    return np.asarray(x, dtype=float)


def _pair(target, recon) -> tuple[np.ndarray, np.ndarray]:
    y, a = _as_array(target), _as_array(recon)
    if y.shape != a.shape:
        raise ValueError(f"shape mismatch: target {y.shape} vs reconstruction {a.shape}")
    return y, a


def _spectral_residual(y: np.ndarray, a: np.ndarray) -> np.ndarray:
    # unitary, so centering is irrelevant for any sum over bins
    return sfft.fft2(y - a, norm="ortho")


def _focal_weight(d_abs: np.ndarray, alpha: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        w = d_abs**alpha
    if not np.all(np.isfinite(w)):
        raise NumericalError(f"focal weight overflowed (alpha={alpha})")
    return w


def mse_loss(target, recon) -> float:
    y, a = _pair(target, recon)
    return float(np.mean((y - a) ** 2))


def ffl_loss(target, recon, alpha: float = 1.0) -> float:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    y, a = _pair(target, recon)
    d = np.abs(_spectral_residual(y, a))
    w = _focal_weight(d, alpha)
    out = np.sum(w * d**2) / d.size
    if not np.isfinite(out):
        raise NumericalError("focal frequency loss overflowed")
    return float(out)


def lsq_scale(target: np.ndarray, recon: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-image factor ``s = <y, a> / <a, a>`` and a flag array of skipped images.

    Images whose reconstruction is identically zero get ``s = 1`` and are flagged.
    """
    y, a = _pair(target, recon)
    num = np.sum(y * a, axis=(-2, -1))
    den = np.sum(a * a, axis=(-2, -1))
    degenerate = den == 0
    s = np.where(degenerate, 1.0, num / np.where(degenerate, 1.0, den))
    if np.any(degenerate):
        warnings.warn("all-zero reconstruction: least-squares scaling skipped",
                      DegenerateScalingWarning, stacklevel=2)
    return s, degenerate


def combined_loss(target, recon, cfg: LossConfig) -> float:
    return loss_and_grad(_as_array(target), _as_array(recon), cfg)[0]


def loss_and_grad(y: np.ndarray, a: np.ndarray, cfg: LossConfig,
                  need_grad: bool = False):
    """Evaluate the combined loss and optionally its gradient w.r.t. ``a``.

    Returns ``(total, mse, ffl, grad)``; ``grad`` is ``None`` unless requested.
    Unused terms (zero weight) are reported as 0 and not evaluated.
    """
    y, a = _pair(y, a)
    n = y.size
    s = None
    b = a
    if cfg.scale_mode == "lsq":
        s, degenerate = lsq_scale(y, a)
        b = a * s[..., None, None]

    r = b - y
    mse = float(np.mean(r**2)) if cfg.mse_weight else 0.0
    ffl = 0.0
    d = w = None
    if cfg.ffl_weight:
        d = _spectral_residual(y, b)  # F(y) - F(b)
        dabs = np.abs(d)
        w = _focal_weight(dabs, cfg.alpha)
        ffl = float(np.sum(w * dabs**2) / n)
    total = cfg.mse_weight * mse + cfg.ffl_weight * ffl
    if not np.isfinite(total):
        raise NumericalError("loss is not finite")
    if not need_grad:
        return total, mse, ffl, None

    g = np.zeros_like(b)
    if cfg.mse_weight:
        g += cfg.mse_weight * (2.0 / n) * r
    if cfg.ffl_weight:
        factor = 1.0 if cfg.detach_weight else 1.0 + 0.5 * cfg.alpha
        g -= cfg.ffl_weight * factor * (2.0 / n) * sfft.ifft2(w * d, norm="ortho").real
    if s is not None:
        # chain through b = s(a) * a, s = <y,a>/<a,a>
        den = np.sum(a * a, axis=(-2, -1))
        gb_a = np.sum(g * a, axis=(-2, -1))
        coef = np.where(degenerate, 0.0, gb_a / np.where(degenerate, 1.0, den))
        g = s[..., None, None] * g + coef[..., None, None] * (y - 2.0 * s[..., None, None] * a)
    if not np.all(np.isfinite(g)):
        raise NumericalError("loss gradient is not finite")
    return total, mse, ffl, g
