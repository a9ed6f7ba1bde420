"""Phase retrieval: Gerchberg-Saxton and Adam-based gradient descent.

Gradient solvers share one engine that optimizes a phase stack ``(T, H, W)``
against ``C`` color channels, each with its own transfer function and optional
spectrum mask; per-channel losses are summed. Mask parameters can be learned
alongside the phase (hard mask forward, soft-mask Jacobian backward, sharpness
following :class:`~holoplex.mask.MaskSchedule` one step per ``epoch_length``
iterations).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .core import Grid, Intensity, NumericalError, PhaseMap, VideoTensor
from .loss import LossConfig
from .mask import MaskSchedule, SpectrumMask, forward_mask, step_schedule
from .metrics import SSIM_WINDOW, lsq_scaled, psnr, ssim
from .propagate import TransferFunction, _apply, evaluate, reconstruct_amplitude

if TYPE_CHECKING:
    from .color import ColorConfig

log = logging.getLogger(__name__)

METHODS = ("gs", "adam")
INITS = ("zero", "random")

Plane = tuple[TransferFunction, "SpectrumMask | None"]


class DivergenceError(NumericalError):
    """The optimizer loss blew up."""


class MaskCollapseWarning(UserWarning):
    """A learned mask radius shrank to (almost) nothing."""


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "adam"
    iterations: int = 100
    learning_rate: float = 1e-4
    mask_learning: bool = False
    mask_lr_factor: float = 10.0
    seed: int = 0
    init: str = "zero"
    schedule: MaskSchedule = field(default_factory=MaskSchedule)
    loss: LossConfig = field(default_factory=LossConfig)
    epoch_length: int = 50
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        # 0 iterations is allowed and returns the initial phase untouched
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epoch_length < 1:
            raise ValueError("epoch_length must be >= 1")
        if not self.divergence_factor > 0:
            raise ValueError("divergence_factor must be positive")


@dataclass
class PhaseSolution:
    """Optimized phases ``(T, H, W)`` with traces and final quality numbers.

    ``loss_trace[i]`` is the loss *before* update ``i``; ``final_loss`` is the
    loss of the returned phases. For :func:`video_solve` the trace is
    ``(T, iterations)``. ``psnr``/``ssim`` are ``(T, C)`` after least-squares
    scaling (SSIM is NaN on grids smaller than the SSIM window).
    """

    grid: Grid
    phases: np.ndarray
    loss_trace: np.ndarray
    final_loss: float
    components: np.ndarray
    masks: list | None = None
    mask_trace: list = field(default_factory=list)
    psnr: np.ndarray | None = None
    ssim: np.ndarray | None = None
    frame_final_losses: np.ndarray | None = None

    def phase_map(self, t: int = 0) -> PhaseMap:
        return PhaseMap(self.grid, self.phases[t])


class Adam:
    """Plain Adam with bias correction, one instance per parameter array."""

    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = self.v = None
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return x - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def initial_phase(grid: Grid, frames: int, cfg: OptimizerConfig) -> np.ndarray:
    """Zero phase, or uniform random phase from a seeded PCG64 generator."""
    if cfg.init == "zero":
        return np.zeros((frames,) + grid.shape)
    rng = np.random.default_rng(cfg.seed)
    return rng.uniform(0.0, 2 * np.pi, (frames,) + grid.shape)


def _targets(targets, channels: int) -> np.ndarray:
    y = targets.data if isinstance(targets, VideoTensor) else np.asarray(targets, dtype=float)
    if y.ndim == 2:
        y = y[None, None]
    elif y.ndim == 3:
        y = y[:, None] if channels == 1 else y[None]
    if y.ndim != 4 or y.shape[1] != channels:
        raise ValueError(f"targets of shape {y.shape} do not match {channels} channel(s)")
    return y


def _quality(phi: np.ndarray, planes: Sequence[Plane], y: np.ndarray, loss: LossConfig):
    T, C = y.shape[:2]
    p = np.zeros((T, C))
    s = np.full((T, C), np.nan)
    for c, (H, mask) in enumerate(planes):
        amp = reconstruct_amplitude(phi, H, forward_mask(mask, H.grid))
        tgt = loss.prepare_target(y[:, c])
        for t in range(T):
            rec = lsq_scaled(tgt[t], amp[t])
            p[t, c] = psnr(tgt[t], rec)
            if min(H.grid.shape) >= SSIM_WINDOW:
                s[t, c] = ssim(tgt[t], rec)
    return p, s


def _run(y: np.ndarray, planes: Sequence[Plane], cfg: OptimizerConfig, phi0: np.ndarray,
         learn_masks: bool = False) -> PhaseSolution:
    grid = planes[0][0].grid
    masks = [m for _, m in planes]
    if learn_masks and any(m is None for m in masks):
        raise ValueError("mask learning needs a spectrum mask on every channel")
    phi = np.array(phi0, dtype=float)
    opt = Adam(cfg.learning_rate, cfg.betas, cfg.eps)
    mask_opts = [Adam(cfg.learning_rate * cfg.mask_lr_factor, cfg.betas, cfg.eps) for _ in masks]
    trace = np.zeros(cfg.iterations)
    comps = np.zeros((cfg.iterations, 2))
    mask_trace: list = []
    loss = cfg.loss

    def total_eval(phi, tau, grads):
        tot, g = 0.0, np.zeros_like(phi)
        mse = ffl = 0.0
        gm = []
        for c, (H, _) in enumerate(planes):
            ev = evaluate(phi, H, y[:, c], loss, masks[c], tau=tau,
                          need_grad=grads, need_mask_grad=grads and learn_masks)
            tot += ev.loss
            mse += ev.mse
            ffl += ev.ffl
            if grads:
                g += ev.phase_grad
                gm.append(ev.mask_grad)
        return tot, mse, ffl, g, gm

    tau = step_schedule(cfg.schedule, 0)
    for it in range(cfg.iterations):
        epoch = it // cfg.epoch_length
        tau = step_schedule(cfg.schedule, epoch)
        if learn_masks and it % cfg.epoch_length == 0:
            mask_trace.append([(m.cx, m.cy, m.r, tau) for m in masks])
        tot, mse, ffl, g, gm = total_eval(phi, tau, True)
        trace[it] = tot
        comps[it] = (mse, ffl)
        if not np.isfinite(tot) or (trace[0] > 0 and tot > cfg.divergence_factor * trace[0]):
            raise DivergenceError(
                f"loss diverged at iteration {it}: {tot:.4g} (initial {trace[0]:.4g}); "
                f"try a smaller learning rate (currently {cfg.learning_rate:g})")
        phi = opt.step(phi, g)
        if learn_masks:
            for c in range(len(masks)):
                masks[c] = masks[c].with_params(mask_opts[c].step(masks[c].params, gm[c]))
    final = total_eval(phi, tau, False)[0]
    if learn_masks:
        for c, m in enumerate(masks):
            if m.r < 0.5:
                warnings.warn(f"mask of channel {c} collapsed (r={m.r:.3g})", MaskCollapseWarning,
                              stacklevel=3)
    fin_planes = [(H, m) for (H, _), m in zip(planes, masks)]
    p, s = _quality(phi, fin_planes, y, loss)
    return PhaseSolution(grid, phi, trace, float(final), comps,
                         masks if any(m is not None for m in masks) else None, mask_trace, p, s)


def gd_solve(targets, planes: Sequence[Plane], cfg: OptimizerConfig,
             init: np.ndarray | None = None) -> PhaseSolution:
    """Adam on the phase of every frame; one plane (transfer, mask) per channel.

    ``targets`` is ``(T, C, H, W)`` (or a :class:`VideoTensor`). Masks are held
    fixed here; see :func:`joint_solve_color` for mask learning.
    """
    planes = list(planes)
    y = _targets(targets, len(planes))
    grid = planes[0][0].grid
    for H, _ in planes:
        if H.grid != grid:
            raise ValueError("all planes must share one grid")
    phi0 = initial_phase(grid, y.shape[0], cfg) if init is None else np.broadcast_to(init, (y.shape[0],) + grid.shape)
    return _run(y, planes, cfg, phi0)


def joint_solve_color(targets_rgb, color: "ColorConfig", grid: Grid, cfg: OptimizerConfig,
                      init: np.ndarray | None = None) -> PhaseSolution:
    """One shared phase per frame for three color channels, optionally learning masks."""
    planes = color.planes(grid)
    if cfg.mask_learning and color.masks is None:
        raise ValueError("mask learning requires per-channel masks in the color config")
    y = _targets(targets_rgb, 3)
    phi0 = initial_phase(grid, y.shape[0], cfg) if init is None else np.broadcast_to(init, (y.shape[0],) + grid.shape)
    return _run(y, planes, cfg, phi0, learn_masks=cfg.mask_learning)


def video_solve(video, planes: Sequence[Plane], cfg: OptimizerConfig, warm_start: bool = True
                ) -> PhaseSolution:
    """Solve frames one after another, optionally seeding each with the previous result."""
    planes = list(planes)
    y = _targets(video, len(planes))
    grid = planes[0][0].grid
    prev = None
    phases, traces, comps, finals, ps, ss = [], [], [], [], [], []
    for t in range(y.shape[0]):
        init = prev if (warm_start and prev is not None) else initial_phase(grid, 1, cfg)
        sol = _run(y[t:t + 1], planes, cfg, init)
        prev = sol.phases
        phases.append(sol.phases[0])
        traces.append(sol.loss_trace)
        comps.append(sol.components)
        finals.append(sol.final_loss)
        ps.append(sol.psnr[0])
        ss.append(sol.ssim[0])
        log.debug("frame %d: loss %.4g -> %.4g", t, sol.loss_trace[0] if len(sol.loss_trace) else sol.final_loss,
                  sol.final_loss)
    return PhaseSolution(grid, np.stack(phases), np.stack(traces), float(np.sum(finals)),
                         np.stack(comps), None, [], np.stack(ps), np.stack(ss), np.array(finals))


def gs_solve(target, H: TransferFunction, init: PhaseMap | None = None, iterations: int = 100
             ) -> PhaseSolution:
    """Gerchberg-Saxton between the hologram plane and the plane at ``H.z``.

    ``target`` is an intensity; its amplitude is rescaled to carry the same
    energy as the propagated unit-modulus field. ``loss_trace[i]`` is the
    amplitude MSE of the iterate before step ``i``.
    """
    grid = H.grid
    t = target.values if isinstance(target, Intensity) else np.asarray(target, dtype=float)
    grid.check(t, "target")
    amp = np.sqrt(t)
    phi = np.zeros(grid.shape) if init is None else np.array(init.values, dtype=float)
    back = H.unshifted.conj()  # H(-z) on the band, zero elsewhere
    u = np.exp(1j * phi)
    v = _fwd(u, H.unshifted, H)
    e = np.sum(amp**2)
    amp = amp * np.sqrt(np.sum(np.abs(v) ** 2) / e) if e > 0 else amp
    trace = np.zeros(iterations)
    for it in range(iterations):
        a = np.abs(v)
        trace[it] = np.mean((a - amp) ** 2)
        v = amp * np.exp(1j * np.angle(v))
        u = _fwd(v, back, H)
        u = np.exp(1j * np.angle(u))
        v = _fwd(u, H.unshifted, H)
    phi = np.angle(u)
    final = float(np.mean((np.abs(v) - amp) ** 2))
    scale = np.max(amp) if np.max(amp) > 0 else 1.0
    rec = lsq_scaled(amp / scale, np.abs(v))
    p = np.array([[psnr(amp / scale, rec)]])
    s = np.array([[ssim(amp / scale, rec) if min(grid.shape) >= SSIM_WINDOW else np.nan]])
    return PhaseSolution(grid, phi[None], trace, final, np.c_[trace, np.zeros(iterations)], psnr=p, ssim=s)


def _fwd(u: np.ndarray, hm: np.ndarray, H: TransferFunction) -> np.ndarray:
    return _apply(u, hm, H.padded)
