"""Bidirectional spatial-temporal scan with a fixed linear state-space recurrence.

Videos ``(T, H, W[, D])`` are flattened so that x runs fastest, then rows, then
frames: ``idx = t*H*W + y*W + x``. The forward scan runs the recurrence
``h_n = a*h_{n-1} + b*x_n``, ``y_n = c.h_n`` along that order; the backward
scan runs the same recurrence on the reversed sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScanSequence:
    """Flattened features ``(L, D)`` with the ``(t, y, x)`` origin of each row."""

    values: np.ndarray
    origin: np.ndarray
    shape: tuple[int, int, int]


@dataclass(frozen=True)
class LinearSSM:
    """Diagonal linear state-space model with fixed parameters.

    ``a``, ``b``, ``c`` have shape ``(D, N)`` (channels x state size) or
    broadcast to it; each channel is scanned independently.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "c"):
            v = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if not np.all(np.isfinite(v)):
                raise ValueError(f"ssm parameter {name} must be finite")
            object.__setattr__(self, name, v)
        if np.any(np.abs(self.a) > 1):
            raise ValueError("|a| must be <= 1")

    @classmethod
    def scalar(cls, a: float, b: float, c: float) -> "LinearSSM":
        return cls(np.array([[a]]), np.array([[b]]), np.array([[c]]))


def flatten_hwt(video: np.ndarray) -> ScanSequence:
    v = np.asarray(video)
    if v.ndim == 3:
        v = v[..., None]
    if v.ndim != 4:
        raise ValueError("video must be (T, H, W) or (T, H, W, D)")
    T, H, W, D = v.shape
    t, y, x = np.meshgrid(np.arange(T), np.arange(H), np.arange(W), indexing="ij")
    origin = np.stack([t.ravel(), y.ravel(), x.ravel()], axis=1)
    return ScanSequence(v.reshape(T * H * W, D), origin, (T, H, W))


def unflatten(seq: ScanSequence, shape: tuple[int, int, int] | None = None) -> np.ndarray:
    T, H, W = seq.shape if shape is None else shape
    if seq.values.shape[0] != T * H * W:
        raise ValueError(f"sequence length {seq.values.shape[0]} != {T}*{H}*{W}")
    return seq.values.reshape(T, H, W, -1)


def _as_2d(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _associative_scan(a: np.ndarray, bx: np.ndarray) -> np.ndarray:
    """All prefixes of ``h_n = a*h_{n-1} + bx_n`` in ``ceil(log2 L)`` vectorized rounds.

    Each step is the affine map ``h -> A*h + B``; composing ``(A1, B1)`` then
    ``(A2, B2)`` gives ``(A2*A1, A2*B1 + B2)`` (Hillis-Steele prefix scan).
    """
    L = bx.shape[0]
    A = np.broadcast_to(a, bx.shape).copy()
    B = bx.copy()
    s = 1
    while s < L:
        B[s:] = A[s:] * B[:-s] + B[s:]
        A[s:] = A[s:] * A[:-s]
        s *= 2
    return B


def ssm_scan_forward(x, ssm: LinearSSM) -> np.ndarray:
    """Run the recurrence over axis 0 of ``x`` (``(L,)`` or ``(L, D)``)."""
    xs = _as_2d(x)
    L, D = xs.shape
    a = np.broadcast_to(ssm.a, (D, ssm.a.shape[-1]))
    b = np.broadcast_to(ssm.b, a.shape)
    c = np.broadcast_to(ssm.c, a.shape)
    h = _associative_scan(a[None], b[None] * xs[:, :, None])  # (L, D, N)
    out = np.sum(c[None] * h, axis=2)
    return out.reshape(np.shape(x)) if np.ndim(x) == 1 else out


def ssm_scan_backward(x, ssm: LinearSSM) -> np.ndarray:
    return ssm_scan_forward(np.asarray(x)[::-1], ssm)[::-1]


def bst_fuse(x_for, x_back, z, linear: np.ndarray | None = None) -> np.ndarray:
    """Gate both scan directions by ``z`` and apply an optional ``(D, D')`` map."""
    xf, xb, zz = (np.asarray(v, dtype=float) for v in (x_for, x_back, z))
    if xf.shape != xb.shape or xf.shape[0] != zz.shape[0]:
        raise ValueError("fusion inputs must have equal lengths")
    out = xf * zz + xb * zz
    return out if linear is None else out @ linear


def scan_order(T: int, H: int, W: int) -> np.ndarray:
    """``(t, y, x)`` visited at each step of the forward scan."""
    return flatten_hwt(np.zeros((T, H, W))).origin
