"""Full-color multiplexing: time (TM), depth-division (DDM) and spectrum-guided DDM.

Channels are ordered R, G, B throughout. Reconstructions are amplitudes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Grid, HoloError, PhaseMap, WaveSpec, fft2c
from .mask import (
    SpectrumMask,
    check_depth_separation,
    hard_mask,
    numerical_aperture,
    separation_threshold,
)
from .metrics import lsq_scaled, psnr
from .optimize import OptimizerConfig, PhaseSolution, gd_solve, joint_solve_color
from .propagate import FrequencyGrid, make_transfer, reconstruct_amplitude

SCHEMES = ("TM", "DDM", "SGDDM")
DEFAULT_WAVELENGTHS = (638e-9, 520e-9, 450e-9)


class CrosstalkError(HoloError, ValueError):
    """Crosstalk cannot be normalized (no target support or a dark channel)."""


@dataclass(frozen=True)
class ColorConfig:
    wavelengths: tuple[float, float, float] = DEFAULT_WAVELENGTHS
    planes_z: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scheme: str = "DDM"
    masks: tuple[SpectrumMask, SpectrumMask, SpectrumMask] | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if len(self.wavelengths) != 3 or len(self.planes_z) != 3:
            raise ValueError("need exactly three wavelengths and three planes")
        if any(not w > 0 for w in self.wavelengths) or len(set(self.wavelengths)) != 3:
            raise ValueError("wavelengths must be positive and distinct")
        if self.scheme in ("DDM", "SGDDM") and len(set(self.planes_z)) != 3:
            raise ValueError(f"{self.scheme} needs three distinct planes")
        if self.scheme == "SGDDM" and (self.masks is None or len(self.masks) != 3):
            raise ValueError("SGDDM needs one spectrum mask per channel")

    @property
    def waves(self) -> list[WaveSpec]:
        return [WaveSpec(w) for w in self.wavelengths]

    def planes(self, grid: Grid, pad: bool = False) -> list:
        masks = self.masks if self.scheme == "SGDDM" else (None, None, None)
        return [(make_transfer(grid, w, z, pad), m) for w, z, m in zip(self.waves, self.planes_z, masks)]


@dataclass
class CrosstalkReport:
    """``energy[c, p]``: share of channel-c light landing on plane p's target support at plane p."""

    energy: np.ndarray
    psnr: np.ndarray
    frame_rate_factor: int
    degenerate: bool = False

    @property
    def off_diagonal(self) -> float:
        return float(np.sum(self.energy) - np.trace(self.energy))

    @property
    def diagonal_psnr(self) -> float:
        return float(np.mean(np.diag(self.psnr)))

    def to_csv(self) -> str:
        rows = ["channel,plane,energy,psnr"]
        for c in range(3):
            for p in range(3):
                rows.append(f"{'RGB'[c]},{'RGB'[p]},{self.energy[c, p]:.9g},{self.psnr[c, p]:.6f}")
        return "\n".join(rows) + "\n"


@dataclass
class ColorResult:
    """Output of one multiplexing simulation.

    ``phases`` is ``(T, H, W)`` for single-shot schemes and ``(3, T, H, W)``
    for TM. ``reconstructions`` is ``(T, 3, H, W)``: channel c at plane c.
    """

    scheme: str
    phases: np.ndarray
    reconstructions: np.ndarray
    report: CrosstalkReport
    solutions: list[PhaseSolution] = field(default_factory=list)
    masks: list[SpectrumMask] | None = None
    separation: dict | None = None


def _supports(targets: np.ndarray, supports) -> np.ndarray:
    if supports is not None:
        return np.asarray(supports, dtype=bool)
    return targets > 0


def crosstalk_matrix(phase, masks, config: ColorConfig, grid: Grid, targets: np.ndarray,
                     supports=None) -> CrosstalkReport:
    """Energy and PSNR of every (illumination channel, plane) pair for one phase.

    ``targets`` is ``(3, H, W)`` amplitude; supports default to ``targets > 0``.
    """
    phi = phase.values if isinstance(phase, PhaseMap) else np.asarray(phase, dtype=float)
    tg = np.asarray(targets, dtype=float)
    sup = _supports(tg, supports)
    if not sup.any():
        raise CrosstalkError("targets have empty support; crosstalk cannot be normalized")
    masks = masks if masks is not None else (None, None, None)
    energy = np.zeros((3, 3))
    q = np.zeros((3, 3))
    for c, wave in enumerate(config.waves):
        m = None if masks[c] is None else hard_mask(masks[c], grid)
        for p, z in enumerate(config.planes_z):
            amp = reconstruct_amplitude(phi, make_transfer(grid, wave, z), m)
            inten = amp**2
            tot = inten.sum()
            if tot == 0:
                raise CrosstalkError(f"channel {'RGB'[c]} carries no energy")
            energy[c, p] = inten[sup[p]].sum() / tot
            q[c, p] = psnr(tg[p], lsq_scaled(tg[p], amp))
    return CrosstalkReport(energy, q, 1)


def _report_over_frames(phases, masks, config, grid, targets, supports) -> CrosstalkReport:
    reps = [crosstalk_matrix(phases[t], masks, config, grid, targets[t], supports)
            for t in range(phases.shape[0])]
    return CrosstalkReport(np.mean([r.energy for r in reps], axis=0),
                           np.mean([r.psnr for r in reps], axis=0), 1)


def _as_rgb(targets_rgb) -> np.ndarray:
    y = np.asarray(getattr(targets_rgb, "data", targets_rgb), dtype=float)
    if y.ndim == 3:
        y = y[None]
    if y.ndim != 4 or y.shape[1] != 3:
        raise ValueError(f"expected RGB targets (T, 3, H, W), got {y.shape}")
    return y


def _recons(phases, planes, grid) -> np.ndarray:
    out = np.zeros((phases.shape[0], 3) + grid.shape)
    for c, (H, m) in enumerate(planes):
        out[:, c] = reconstruct_amplitude(phases, H, None if m is None else hard_mask(m, grid))
    return out


def simulate_tm(targets_rgb, config: ColorConfig, grid: Grid, cfg: OptimizerConfig,
                supports=None) -> ColorResult:
    """Three independent single-channel holograms shown in sequence."""
    if config.scheme != "TM":
        raise ValueError(f"simulate_tm needs scheme TM, got {config.scheme}")
    y = _as_rgb(targets_rgb)
    planes = config.planes(grid)
    sols = [gd_solve(y[:, c:c + 1], [planes[c]], cfg) for c in range(3)]
    phases = np.stack([s.phases for s in sols])
    rec = np.zeros(y.shape)
    energy = np.zeros((3, 3))
    q = np.zeros((3, 3))
    for c, (H, _) in enumerate(planes):
        rec[:, c] = reconstruct_amplitude(phases[c], H)
        for t in range(y.shape[0]):
            rep = crosstalk_matrix(phases[c, t], None, config, grid, y[t], supports)
            # only the own laser illuminates each hologram: off-diagonals vanish by construction
            energy[c, c] += rep.energy[c, c] / y.shape[0]
            q[c, c] += rep.psnr[c, c] / y.shape[0]
    return ColorResult("TM", phases, rec, CrosstalkReport(energy, q, 3), sols)


def simulate_ddm(targets_rgb, config: ColorConfig, grid: Grid, cfg: OptimizerConfig,
                 supports=None, superpose: bool = False) -> ColorResult:
    """One phase per frame reconstructing R, G, B at their own planes.

    ``superpose=True`` uses the legacy construction: solve each channel alone
    and keep the argument of the summed unit-modulus fields.
    """
    if config.scheme != "DDM":
        raise ValueError(f"simulate_ddm needs scheme DDM, got {config.scheme}")
    y = _as_rgb(targets_rgb)
    planes = config.planes(grid)
    if superpose:
        sols = [gd_solve(y[:, c:c + 1], [planes[c]], cfg) for c in range(3)]
        phases = np.angle(sum(np.exp(1j * s.phases) for s in sols))
    else:
        sols = [joint_solve_color(y, config, grid, cfg)]
        phases = sols[0].phases
    rec = _recons(phases, planes, grid)
    if not _supports(y, supports).any():
        return ColorResult("DDM", phases, rec,
                           CrosstalkReport(np.zeros((3, 3)), np.zeros((3, 3)), 1, degenerate=True), sols)
    rep = _report_over_frames(phases, None, config, grid, y, supports)
    return ColorResult("DDM", phases, rec, rep, sols)


def simulate_sgddm(targets_rgb, config: ColorConfig, grid: Grid, cfg: OptimizerConfig,
                   supports=None) -> ColorResult:
    """DDM through per-channel spectrum masks, learned if ``cfg.mask_learning``."""
    if config.scheme != "SGDDM":
        raise ValueError(f"simulate_sgddm needs scheme SGDDM, got {config.scheme}")
    y = _as_rgb(targets_rgb)
    sol = joint_solve_color(y, config, grid, cfg)
    masks = list(sol.masks)
    learned = ColorConfig(config.wavelengths, config.planes_z, "SGDDM", tuple(masks))
    planes = learned.planes(grid)
    rec = _recons(sol.phases, planes, grid)
    rep = _report_over_frames(sol.phases, masks, learned, grid, y, supports)
    verdicts = check_depth_separation(config.planes_z, config.waves, masks=masks, grid=grid)
    return ColorResult("SGDDM", sol.phases, rec, rep, [sol], masks, verdicts)


def simulate(targets_rgb, config: ColorConfig, grid: Grid, cfg: OptimizerConfig, supports=None) -> ColorResult:
    fn = {"TM": simulate_tm, "DDM": simulate_ddm, "SGDDM": simulate_sgddm}[config.scheme]
    return fn(targets_rgb, config, grid, cfg, supports=supports)


def separated_planes(grid: Grid, masks, wavelengths=DEFAULT_WAVELENGTHS, z0: float = 0.02,
                     margin: float = 1.25) -> tuple[float, float, float]:
    """Planes ``z0 < z_G < z_B`` whose adjacent gaps exceed the separation threshold by ``margin``."""
    waves = [WaveSpec(w) for w in wavelengths]
    nas = [numerical_aperture(m, grid, w) for m, w in zip(masks, waves)]
    z = [z0]
    for i in range(2):
        z.append(z[-1] + margin * separation_threshold(waves[i], nas[i], waves[i + 1], nas[i + 1]))
    return tuple(z)


def default_masks(grid: Grid, radius_frac: float = 0.2, offset_frac: float = 0.27
                  ) -> tuple[SpectrumMask, SpectrumMask, SpectrumMask]:
    """Off-axis initial masks on three distinct directions (120 degrees apart).

    Radii and center offsets are fractions of the smaller grid dimension in bins.
    """
    n = min(grid.shape)
    r, d = radius_frac * n, offset_frac * n
    angles = np.deg2rad([90.0, 210.0, 330.0])
    return tuple(SpectrumMask(float(np.round(d * np.cos(a))), float(np.round(-d * np.sin(a))), float(r))
                 for a in angles)


def effective_na(phase, grid: Grid, wave: WaveSpec, mask: SpectrumMask | None = None) -> float:
    """``lambda`` times the RMS spatial frequency of the (masked) hologram field."""
    phi = phase.values if isinstance(phase, PhaseMap) else np.asarray(phase, dtype=float)
    U = np.abs(fft2c(np.exp(1j * phi))) ** 2
    if mask is not None:
        U = U * hard_mask(mask, grid)
    fg = FrequencyGrid.of(grid)
    return float(wave.wavelength * np.sqrt(np.sum(fg.f2 * U) / np.sum(U)))


def replica_depth(lambda_src: float, z_src: float, lambda_probe: float) -> float:
    """Paraxial plane where a hologram designed at ``(lambda_src, z_src)`` refocuses under ``lambda_probe``."""
    if not (lambda_src > 0 and z_src > 0 and lambda_probe > 0):
        raise ValueError("replica_depth needs positive inputs")
    return z_src * lambda_src / lambda_probe


def focus_metric(intensity: np.ndarray) -> float:
    """Total squared (circular) spatial gradient of an intensity image."""
    i = np.asarray(intensity, dtype=float)
    return float(np.sum((np.roll(i, -1, -1) - i) ** 2) + np.sum((np.roll(i, -1, -2) - i) ** 2))


def replica_sweep(phase, grid: Grid, lambda_probe: float, zs) -> np.ndarray:
    """Focus metric of the probe-wavelength reconstruction at each distance in ``zs``."""
    phi = phase.values if isinstance(phase, PhaseMap) else np.asarray(phase, dtype=float)
    wave = WaveSpec(lambda_probe)
    return np.array([focus_metric(reconstruct_amplitude(phi, make_transfer(grid, wave, z)) ** 2) for z in zs])
