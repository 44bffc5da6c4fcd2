"""Grayscale image container, PGM raster I/O and gradient primitives.

Luminance is kept as float64 in [0, 1]; 8-bit quantization only happens when
writing or reading PGM files.  Array helpers prefixed with ``sobel_`` accept a
leading batch axis so the simulator can score many renders at once through
exactly the same arithmetic as the single-image path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# Rec. 601 luma weights for colour ingestion.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# Largest per-axis Sobel response for luminance in [0, 1].
SOBEL_MAX = 4.0


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Image:
    """Row-major luminance raster, ``data[v, u]`` with ``v`` the row."""

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=np.float64)
        if a.ndim != 2:
            raise InvalidInputError(f"image data must be 2-D, got shape {a.shape}")
        h, w = a.shape
        if w < 3 or h < 3:
            raise InvalidInputError(f"image must be at least 3x3, got {w}x{h}")
        if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
            raise InvalidInputError("image samples must lie in [0, 1]")
        object.__setattr__(self, "data", _readonly(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def size(self) -> int:
        return self.data.size

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "Image":
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size != width * height:
            raise InvalidInputError(
                f"expected {width * height} samples, got {values.size}")
        return cls(values.reshape(height, width))

    @classmethod
    def from_rgb(cls, rgb) -> "Image":
        """Convert an ``(H, W, 3)`` array in [0, 1] with Rec. 601 weights."""
        rgb = np.asarray(rgb, dtype=np.float64)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise InvalidInputError(f"expected (H, W, 3) array, got {rgb.shape}")
        return cls(np.clip(rgb @ np.array(LUMA_WEIGHTS), 0.0, 1.0))


@dataclass(frozen=True)
class GradField:
    """Normalized Sobel magnitude; the 1-pixel border ring is 0."""

    mag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mag", _readonly(self.mag))

    @property
    def width(self) -> int:
        return self.mag.shape[1]

    @property
    def height(self) -> int:
        return self.mag.shape[0]


def sobel_xy(a):
    """Raw 3x3 Sobel responses over the last two axes, zero on the border."""
    a = np.asarray(a, dtype=np.float64)
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    top, mid, bot = a[..., :-2, :], a[..., 1:-1, :], a[..., 2:, :]
    col = top + 2.0 * mid + bot
    gx[..., 1:-1, 1:-1] = col[..., :, 2:] - col[..., :, :-2]
    row = a[..., :, :-2] + 2.0 * a[..., :, 1:-1] + a[..., :, 2:]
    gy[..., 1:-1, 1:-1] = row[..., 2:, :] - row[..., :-2, :]
    return gx, gy


def sobel_magnitude(a):
    gx, gy = sobel_xy(a)
    return np.minimum(1.0, np.sqrt(gx * gx + gy * gy) / SOBEL_MAX)


def gradient_magnitude(img: Image) -> GradField:
    """Per-pixel Sobel magnitude ``min(1, |g| / 4)`` with a zero border."""
    if not isinstance(img, Image):
        img = Image(img)
    return GradField(sobel_magnitude(img.data))


def mean_intensity(img: Image) -> float:
    if not isinstance(img, Image):
        img = Image(img)
    return float(img.data.mean())


def quantize(values):
    """Map [0, 1] luminance to 8-bit codes, rounding half up."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def dequantize(codes):
    return np.asarray(codes, dtype=np.float64) / 255.0


# --- PGM / PPM -------------------------------------------------------------

def encode_pgm(img: Image) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + quantize(img.data).tobytes()


def write_pgm(path, img: Image) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


def _header_tokens(buf, count):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = 0
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i >= n:
            raise InvalidInputError("truncated PNM header")
        if buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not buf[j:j + 1].isspace() and buf[j:j + 1] != b"#":
            j += 1
        tokens.append(buf[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    if i >= n or not buf[i:i + 1].isspace():
        raise InvalidInputError("malformed PNM header")
    return tokens, i + 1


def decode_pnm(buf: bytes) -> Image:
    """Decode binary PGM (P5) or PPM (P6, converted to luma), maxval 255."""
    tokens, offset = _header_tokens(buf, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise InvalidInputError(f"unsupported PNM magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise InvalidInputError("non-integer PNM header field") from exc
    if maxval != 255:
        raise InvalidInputError(f"only maxval 255 is supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    raster = np.frombuffer(buf, dtype=np.uint8, count=expected, offset=offset) \
        if len(buf) - offset >= expected else None
    if raster is None:
        raise InvalidInputError("truncated PNM raster")
    values = dequantize(raster)
    if channels == 1:
        return Image(values.reshape(height, width))
    return Image.from_rgb(values.reshape(height, width, 3))


def read_pgm(path) -> Image:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read())


def frame_path(directory, index: int) -> str:
    return os.path.join(directory, f"frame_{index:05d}.pgm")
