"""Image, phase and raw array files.

Raw dumps are a 32-byte little-endian header followed by the samples::

    offset  size  field
    0       8     magic  b"HOLORAW1"
    8       4     dtype  1 = float64, 2 = complex128 (interleaved re/im float64)
    12      4     ndim   1..3
    16      12    dims   three uint32, unused trailing dims are 0
    28      4     reserved (0)

Phase PNGs are 8-bit: ``pixel = floor(wrap(phi) / (2*pi) * 256)``, so phase 0
maps to 0 and anything just below ``2*pi`` to 255; reading inverts with
``phi = pixel * 2*pi / 256``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core import TWO_PI, HoloError, wrap_phase

RAW_MAGIC = b"HOLORAW1"
_HEADER = struct.Struct("<8sII3II")
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<c16")}


class RawFormatError(HoloError, OSError):
    """Malformed raw dump or unexpected dimensions."""


def write_raw(path, arr: np.ndarray) -> None:
    a = np.asarray(arr)
    if not 1 <= a.ndim <= 3:
        raise ValueError("raw dumps hold 1 to 3 dimensions")
    code = 2 if np.iscomplexobj(a) else 1
    dims = list(a.shape) + [0] * (3 - a.ndim)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(RAW_MAGIC, code, a.ndim, *dims, 0))
        fh.write(np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes())


def read_raw(path, expect_shape: tuple[int, ...] | None = None) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise RawFormatError(f"{path}: file shorter than header")
    magic, code, ndim, d0, d1, d2, _ = _HEADER.unpack_from(data)
    if magic != RAW_MAGIC or code not in _DTYPES or not 1 <= ndim <= 3:
        raise RawFormatError(f"{path}: bad raw header")
    shape = (d0, d1, d2)[:ndim]
    dt = _DTYPES[code]
    if len(data) - _HEADER.size != int(np.prod(shape)) * dt.itemsize:
        raise RawFormatError(f"{path}: payload size does not match header dims {shape}")
    if expect_shape is not None and tuple(shape) != tuple(expect_shape):
        raise RawFormatError(f"{path}: dims {shape} != expected {expect_shape}")
    return np.frombuffer(data, dtype=dt, offset=_HEADER.size).reshape(shape).astype(dt.newbyteorder("="))


def srgb_to_linear(v: np.ndarray) -> np.ndarray:
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def read_image(path, srgb: bool = False) -> np.ndarray:
    """8/16-bit PNG or PGM as floats in [0, 1]; color images become ``(3, H, W)``."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64)
            full = 65535.0 if im.mode != "I" or arr.max() > 255 else 255.0
        elif im.mode in ("L", "P", "1"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)
            full = 255.0
        else:
            arr = np.moveaxis(np.asarray(im.convert("RGB"), dtype=np.float64), -1, 0)
            full = 255.0
    out = arr / full
    return srgb_to_linear(out) if srgb else out


def write_image(path, img: np.ndarray, bits: int = 16) -> None:
    """Write values in [0, 1] (clipped). Grayscale supports 8 or 16 bits, RGB ``(3, H, W)`` 8 bits."""
    a = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    if a.ndim == 3:
        Image.fromarray(np.round(np.moveaxis(a, 0, -1) * 255).astype(np.uint8), "RGB").save(path)
    elif bits == 16:
        Image.fromarray(np.round(a * 65535).astype(np.uint16)).save(path)
    else:
        Image.fromarray(np.round(a * 255).astype(np.uint8), "L").save(path)


def phase_to_pixels(phi: np.ndarray) -> np.ndarray:
    return np.minimum(np.floor(wrap_phase(phi) / TWO_PI * 256.0), 255).astype(np.uint8)


def pixels_to_phase(pix: np.ndarray) -> np.ndarray:
    return np.asarray(pix, dtype=float) * TWO_PI / 256.0


def write_phase_png(path, phi: np.ndarray) -> None:
    Image.fromarray(phase_to_pixels(phi), "L").save(path)


def read_phase(path) -> np.ndarray:
    """Phase from an 8-bit phase PNG or a raw float64 dump."""
    p = Path(path)
    if p.read_bytes()[:8] == RAW_MAGIC:
        return read_raw(p)
    with Image.open(p) as im:
        return pixels_to_phase(np.asarray(im.convert("L")))


def sequence_path(directory, stem: str, index: int, suffix: str = ".png") -> Path:
    return Path(directory) / f"{stem}_{index:04d}{suffix}"


def read_sequence(path, srgb: bool = False) -> np.ndarray:
    """Frames from a directory of numbered images (sorted by name), ``(T, ...)``."""
    p = Path(path)
    files = sorted(f for f in p.iterdir() if f.suffix.lower() in (".png", ".pgm"))
    if not files:
        raise FileNotFoundError(f"no PNG/PGM frames in {p}")
    frames = [read_image(f, srgb) for f in files]
    if len({f.shape for f in frames}) != 1:
        raise RawFormatError(f"frames in {p} differ in size")
    return np.stack(frames)
