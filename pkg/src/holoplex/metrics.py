"""Image and video quality metrics: PSNR, SSIM, Lucas-Kanade flow and warp error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal

from .core import Intensity, VideoTensor

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _values(x) -> np.ndarray:
    if isinstance(x, Intensity):
        return x.values
    if isinstance(x, VideoTensor):
        return x.data
    return np.asarray(x, dtype=float)


def _same_shape(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(ref, test, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs return ``PSNR_CAP``."""
    if not peak > 0:
        raise ValueError("peak must be positive")
    a, b = _same_shape(ref, test)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(peak**2 / mse), PSNR_CAP))


def lsq_scaled(ref, test) -> np.ndarray:
    """``test`` multiplied by the least-squares factor that best matches ``ref``."""
    a, b = _same_shape(ref, test)
    den = np.sum(b * b)
    return b if den == 0 else b * (np.sum(a * b) / den)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(ref, test, peak: float = 1.0) -> np.ndarray:
    """Local SSIM over every full window position (no border padding)."""
    a, b = _same_shape(ref, test)
    if a.ndim != 2:
        raise ValueError("ssim expects single 2-D images")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    w = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    def filt(x):
        return signal.correlate(x, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a**2
    sbb = filt(b * b) - mu_b**2
    sab = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return num / den


def ssim(ref, test, peak: float = 1.0) -> float:
    return float(np.clip(np.mean(ssim_map(ref, test, peak)), -1.0, 1.0))


@dataclass
class FlowField:
    """Per-pixel displacement ``(u, v)`` in pixels (``u`` along x) plus validity."""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        smooth = ndimage.gaussian_filter(pyr[-1], 1.0, mode="nearest")
        if min(smooth.shape) < 8:
            break
        pyr.append(smooth[::2, ::2])
    return pyr


def _warp(img: np.ndarray, u: np.ndarray, v: np.ndarray, order: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``img`` at ``(y + v, x + u)``; also report which samples fell inside."""
    hh, ww = img.shape
    yy, xx = np.mgrid[0:hh, 0:ww].astype(float)
    ys, xs = yy + v, xx + u
    inside = (xs >= 0) & (xs <= ww - 1) & (ys >= 0) & (ys <= hh - 1)
    out = ndimage.map_coordinates(img, [ys, xs], order=order, mode="nearest")
    return out, inside


def lk_flow(frame_t, frame_t1, window: int = 15, levels: int = 3, iterations: int = 5,
            min_eig: float = 1e-6) -> FlowField:
    """Dense pyramidal Lucas-Kanade flow from ``frame_t`` to ``frame_t1``.

    ``frame_t1(x + u, y + v) ~ frame_t(x, y)``. Windows whose structure
    tensor has smallest eigenvalue (per pixel, window-averaged) below
    ``min_eig`` are rank-deficient: their flow is zero and flagged invalid.
    """
    a, b = _same_shape(frame_t, frame_t1)
    pa, pb = _pyramid(a, levels), _pyramid(b, levels)
    u = np.zeros(pa[-1].shape)
    v = np.zeros(pa[-1].shape)
    valid = np.ones(pa[-1].shape, dtype=bool)
    for lvl in range(len(pa) - 1, -1, -1):
        ia, ib = pa[lvl], pb[lvl]
        if u.shape != ia.shape:
            u = 2.0 * ndimage.zoom(u, np.divide(ia.shape, u.shape), order=1)
            v = 2.0 * ndimage.zoom(v, np.divide(ia.shape, v.shape), order=1)
        gy, gx = np.gradient(ia)
        sxx = ndimage.uniform_filter(gx * gx, window, mode="nearest")
        syy = ndimage.uniform_filter(gy * gy, window, mode="nearest")
        sxy = ndimage.uniform_filter(gx * gy, window, mode="nearest")
        det = sxx * syy - sxy**2
        tr = sxx + syy
        lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr**2 - 4 * det, 0.0)))
        valid = lam_min > min_eig
        safe_det = np.where(valid, det, 1.0)
        for _ in range(iterations):
            warped, _ = _warp(ib, u, v)
            it = warped - ia
            bx = -ndimage.uniform_filter(gx * it, window, mode="nearest")
            by = -ndimage.uniform_filter(gy * it, window, mode="nearest")
            du = np.where(valid, (syy * bx - sxy * by) / safe_det, 0.0)
            dv = np.where(valid, (sxx * by - sxy * bx) / safe_det, 0.0)
            # LK assumes constant flow per window; smoothing keeps neighbouring
            # windows consistent and stops the iteration from drifting
            u = ndimage.uniform_filter(u + du, window, mode="nearest")
            v = ndimage.uniform_filter(v + dv, window, mode="nearest")
        u = np.where(valid, u, 0.0)
        v = np.where(valid, v, 0.0)
    return FlowField(u, v, valid)


def warp_error(video, reference=None, peak: float = 1.0) -> np.ndarray:
    """Mean absolute warping residual for each consecutive frame pair.

    Flow is estimated on ``reference`` (default: ``video`` itself); frame
    ``t+1`` of ``video`` is backward-warped onto frame ``t`` bilinearly and the
    absolute difference is averaged over pixels with valid flow that land
    inside the image, then divided by ``peak``. Pairs with no valid pixel
    report 0.
    """
    vid = _frames(video)
    ref = vid if reference is None else _frames(reference)
    if vid.shape != ref.shape:
        raise ValueError("video and reference shapes differ")
    if vid.shape[0] < 2:
        raise ValueError("warp error needs at least two frames")
    out = np.zeros(vid.shape[0] - 1)
    for t in range(vid.shape[0] - 1):
        errs = []
        for c in range(vid.shape[1]):
            flow = lk_flow(ref[t, c], ref[t + 1, c])
            warped, inside = _warp(vid[t + 1, c], flow.u, flow.v)
            sel = flow.valid & inside
            if sel.any():
                errs.append(np.mean(np.abs(warped - vid[t, c])[sel]))
        out[t] = np.mean(errs) / peak if errs else 0.0
    return out


def _frames(video) -> np.ndarray:
    d = _values(video)
    if d.ndim == 3:
        d = d[:, None]
    if d.ndim != 4:
        raise ValueError("video must be (T, H, W) or (T, C, H, W)")
    return d


@dataclass
class MetricReport:
    psnr: np.ndarray
    ssim: np.ndarray
    warp: np.ndarray = field(default_factory=lambda: np.zeros(0))
    psnr_unscaled: np.ndarray | None = None

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim))

    @property
    def mean_warp(self) -> float:
        return float(np.mean(self.warp)) if self.warp.size else 0.0

    def summary(self) -> str:
        lines = [f"PSNR  {self.mean_psnr:8.3f} dB  (frames: {len(self.psnr)})",
                 f"SSIM  {self.mean_ssim:8.4f}"]
        if self.warp.size:
            lines.append(f"Warp  {self.mean_warp:8.5f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        rows = ["frame,psnr,ssim,psnr_unscaled,warp_to_next"]
        for i in range(len(self.psnr)):
            unscaled = "" if self.psnr_unscaled is None else f"{self.psnr_unscaled[i]:.6f}"
            warp = f"{self.warp[i]:.6f}" if i < self.warp.size else ""
            rows.append(f"{i},{self.psnr[i]:.6f},{self.ssim[i]:.6f},{unscaled},{warp}")
        return "\n".join(rows) + "\n"


def evaluate_video(reference, test, peak: float = 1.0, scale: bool = True) -> MetricReport:
    """PSNR/SSIM per frame (channel-averaged) and warp error of ``test``.

    With ``scale`` the reconstruction is least-squares scaled per image first;
    the unscaled PSNR is reported alongside. Warp error uses flow from the
    reference video.
    """
    ref, tst = _frames(reference), _frames(test)
    if ref.shape != tst.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {tst.shape}")
    T, C = ref.shape[:2]
    p = np.zeros(T)
    s = np.zeros(T)
    pu = np.zeros(T)
    small = min(ref.shape[-2:]) < SSIM_WINDOW
    scaled = np.empty_like(tst)
    for t in range(T):
        for c in range(C):
            x = lsq_scaled(ref[t, c], tst[t, c]) if scale else tst[t, c]
            scaled[t, c] = x
            p[t] += psnr(ref[t, c], x, peak) / C
            pu[t] += psnr(ref[t, c], tst[t, c], peak) / C
            s[t] += (np.nan if small else ssim(ref[t, c], x, peak)) / C
    warp = warp_error(scaled, reference=ref, peak=peak) if T >= 2 else np.zeros(0)
    return MetricReport(p, s, warp, pu)
