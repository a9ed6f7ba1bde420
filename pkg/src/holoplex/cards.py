"""Synthetic test targets (amplitudes in [0, 1])."""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def cross_card(n: int = 64, arm: float = 0.125) -> np.ndarray:
    """Binary plus sign, arm half-width ``arm * n``."""
    y, x = np.mgrid[0:n, 0:n] - (n - 1) / 2.0
    w = arm * n
    inner = 0.375 * n
    return (((np.abs(x) <= w) & (np.abs(y) <= inner)) | ((np.abs(y) <= w) & (np.abs(x) <= inner))).astype(float)


def test_card(n: int = 64) -> np.ndarray:
    """Grayscale card: ring, bars of three widths and a soft blob on a dark background."""
    y, x = np.mgrid[0:n, 0:n] / n
    img = np.zeros((n, n))
    r = np.hypot(x - 0.3, y - 0.3)
    img[(r > 0.12) & (r < 0.2)] = 1.0
    for i, period in enumerate((0.08, 0.12, 0.16)):
        band = (y > 0.55 + 0.12 * i) & (y < 0.63 + 0.12 * i) & (x > 0.08) & (x < 0.5)
        img[band & (np.mod(x, period) < period / 2)] = 0.8
    img += 0.9 * np.exp(-((x - 0.72) ** 2 + (y - 0.7) ** 2) / (2 * 0.08**2))
    img[(x > 0.6) & (x < 0.9) & (y > 0.15) & (y < 0.25)] = 0.6
    return np.clip(ndimage.gaussian_filter(img, 0.6), 0.0, 1.0)


def rgb_desk_card(n: int = 64) -> np.ndarray:
    """Three color targets on disjoint spatial supports, shape ``(3, n, n)``.

    Red occupies the upper-left quadrant, green the upper-right, blue the
    lower half; each carries its own shape so replicas are identifiable.
    """
    y, x = np.mgrid[0:n, 0:n] / n
    out = np.zeros((3, n, n))
    # red: ring
    r = np.hypot(x - 0.25, y - 0.25)
    out[0][(r > 0.09) & (r < 0.18)] = 1.0
    # green: filled square with a hole
    sq = (np.abs(x - 0.75) < 0.16) & (np.abs(y - 0.25) < 0.16)
    hole = (np.abs(x - 0.75) < 0.06) & (np.abs(y - 0.25) < 0.06)
    out[1][sq & ~hole] = 1.0
    # blue: two horizontal bars
    for yc in (0.65, 0.82):
        out[2][(np.abs(y - yc) < 0.05) & (x > 0.15) & (x < 0.85)] = 1.0
    quads = [(x < 0.5) & (y < 0.5), (x >= 0.5) & (y < 0.5), y >= 0.5]
    for c in range(3):
        out[c] = ndimage.gaussian_filter(out[c], 0.7) * quads[c]
    return np.clip(out, 0.0, 1.0)


def rgb_supports(n: int = 64) -> np.ndarray:
    """Boolean support partition matching :func:`rgb_desk_card`."""
    y, x = np.mgrid[0:n, 0:n] / n
    return np.stack([(x < 0.5) & (y < 0.5), (x >= 0.5) & (y < 0.5), y >= 0.5])


def textured(n: int = 64, seed: int = 0, sigma: float = 2.0) -> np.ndarray:
    """Smooth random texture normalized to [0, 1]."""
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.random((n, n)), sigma, mode="wrap")
    return (img - img.min()) / (img.max() - img.min())


def translating_video(n: int = 64, frames: int = 3, step: int = 1) -> np.ndarray:
    """Test card shifted by ``step`` pixels along x per frame, shape ``(T, n, n)``."""
    base = test_card(n)
    return np.stack([np.roll(base, t * step, axis=1) for t in range(frames)])
