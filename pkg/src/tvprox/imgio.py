"""Netpbm (PGM/PPM) reading and writing, PSNR and synthetic noise.

Supported: P2/P3 (ASCII) and P5/P6 (binary) with maxval 255 or 65535.
Samples are normalized to [0, 1]; 16-bit binary data is big-endian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .testkit import SplitMix64
from .tvcore import ShapeMismatchError, TVError

__all__ = [
    "PNMError",
    "BadMagicError",
    "BadHeaderError",
    "TruncatedDataError",
    "UnsupportedMaxvalError",
    "RasterImage",
    "read_pnm",
    "write_pnm",
    "load_pnm",
    "save_pnm",
    "psnr",
    "add_gaussian_noise",
]


class PNMError(TVError):
    pass


class BadMagicError(PNMError):
    pass


class BadHeaderError(PNMError):
    pass


class TruncatedDataError(PNMError):
    pass


class UnsupportedMaxvalError(PNMError):
    pass


_MAGIC = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}
_WHITESPACE = b" \t\n\r\v\f"


@dataclass
class RasterImage:
    """Image with samples in [0, 1], stored as a (C, H, W) float64 array."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 2:
            s = s[None]
        if s.ndim != 3 or s.shape[0] not in (1, 3):
            raise ShapeMismatchError(f"expected (1|3, H, W) samples, got {s.shape}")
        self.samples = s

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]

    def clamped(self) -> "RasterImage":
        return RasterImage(np.clip(self.samples, 0.0, 1.0))


def _tokens(data: bytes, pos: int, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos] in _WHITESPACE:
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise BadHeaderError("header ended early")
        start = pos
        while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        out.append(data[start:pos])
    return out, pos


def read_pnm(data: bytes) -> RasterImage:
    data = bytes(data)
    magic = data[:2]
    if magic not in _MAGIC:
        raise BadMagicError(f"unsupported magic number {magic!r}")
    channels, binary = _MAGIC[magic]
    fields, pos = _tokens(data, 2, 3)
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise BadHeaderError(f"non-integer header fields {fields!r}") from None
    if width < 1 or height < 1:
        raise BadHeaderError(f"invalid size {width}x{height}")
    if maxval not in (255, 65535):
        raise UnsupportedMaxvalError(f"maxval {maxval} (only 255 and 65535 are supported)")
    count = width * height * channels
    if binary:
        if pos >= len(data) or data[pos] not in _WHITESPACE:
            raise BadHeaderError("missing whitespace after maxval")
        pos += 1
        dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
        nbytes = count * dtype.itemsize
        if len(data) - pos < nbytes:
            raise TruncatedDataError(f"expected {nbytes} bytes of pixel data, got {len(data) - pos}")
        values = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float64)
    else:
        text = data[pos:]
        parts = text.split()
        if len(parts) < count:
            raise TruncatedDataError(f"expected {count} samples, got {len(parts)}")
        try:
            values = np.array([int(p) for p in parts[:count]], dtype=np.float64)
        except ValueError:
            raise BadHeaderError("non-integer sample in ASCII data") from None
        if values.min() < 0 or values.max() > maxval:
            raise BadHeaderError("sample outside [0, maxval]")
    samples = (values / maxval).reshape(height, width, channels).transpose(2, 0, 1)
    return RasterImage(np.ascontiguousarray(samples))


def _quantize(samples: np.ndarray, maxval: int) -> np.ndarray:
    # Values are non-negative after clamping, so floor(v + 0.5) rounds half away from zero.
    return np.floor(np.clip(samples, 0.0, 1.0) * maxval + 0.5).astype(np.int64)


def write_pnm(img: RasterImage, format: str = "binary", maxval: int = 255) -> bytes:
    if format not in ("ascii", "binary"):
        raise TVError(f"unknown format {format!r}")
    if maxval not in (255, 65535):
        raise UnsupportedMaxvalError(f"maxval {maxval}")
    binary = format == "binary"
    magic = {(1, False): "P2", (3, False): "P3", (1, True): "P5", (3, True): "P6"}[
        (img.channels, binary)
    ]
    q = _quantize(img.samples, maxval).transpose(1, 2, 0)
    header = f"{magic}\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    if binary:
        dtype = ">u2" if maxval == 65535 else "u1"
        return header + q.astype(dtype).tobytes()
    rows = [" ".join(str(v) for v in row.reshape(-1)) for row in q]
    return header + ("\n".join(rows) + "\n").encode("ascii")


def load_pnm(path) -> RasterImage:
    return read_pnm(Path(path).read_bytes())


def save_pnm(path, img: RasterImage, format: str = "binary", maxval: int = 255) -> None:
    Path(path).write_bytes(write_pnm(img, format, maxval))


def _samples(a) -> np.ndarray:
    return a.samples if isinstance(a, RasterImage) else np.asarray(a, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    sa, sb = _samples(a), _samples(b)
    if sa.shape != sb.shape:
        raise ShapeMismatchError(f"shapes {sa.shape} and {sb.shape} do not match")
    mse = float(np.mean((sa - sb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def add_gaussian_noise(img, sigma: float, seed: int):
    """Add N(0, sigma^2) noise from the seeded SplitMix64 stream, clamp to [0, 1]."""
    if sigma < 0:
        raise TVError("sigma must be >= 0")
    s = _samples(img)
    if sigma == 0:
        noisy = s.copy()
    else:
        noise = SplitMix64(seed, stream=4).normal(s.size).reshape(s.shape)
        noisy = np.clip(s + sigma * noise, 0.0, 1.0)
    return RasterImage(noisy) if isinstance(img, RasterImage) else noisy
