"""Phase-only hologram synthesis with spectrum-guided depth-division color multiplexing."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ComplexField,
    Grid,
    Intensity,
    PhaseMap,
    VideoTensor,
    WaveSpec,
    centered_fft,
    centered_ifft,
    intensity_of,
    phase_to_field,
)
from .loss import LossConfig, combined_loss, ffl_loss, mse_loss  # noqa: E402
from .mask import MaskSchedule, SpectrumMask  # noqa: E402
from .propagate import adjoint_gradient, make_transfer, propagate, reconstruct_intensity  # noqa: E402

__all__ = [
    "ComplexField", "Grid", "Intensity", "PhaseMap", "VideoTensor", "WaveSpec",
    "centered_fft", "centered_ifft", "intensity_of", "phase_to_field",
    "LossConfig", "combined_loss", "ffl_loss", "mse_loss",
    "MaskSchedule", "SpectrumMask",
    "adjoint_gradient", "make_transfer", "propagate", "reconstruct_intensity",
]
