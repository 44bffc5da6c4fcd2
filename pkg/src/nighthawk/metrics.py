"""Image utility metrics and the tools used to benchmark them.

``m_feat`` scores a pair of per-pixel response maps: mean repeatability times
the squared mean reliability.  The maps come either from ``response_maps``
(a deterministic corner/contrast surrogate for a learned detector) or from
precomputed ``<stem>.rep.pgm`` / ``<stem>.rel.pgm`` rasters.  The three
gradient baselines (``m_shim``, ``m_softperc``, ``m_newg``), Spearman rank
correlation and a top-k detection matcher support the metric-vs-matching
benchmark.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError, UndefinedCorrelationError
from .imagecore import Image, read_pgm, sobel_magnitude, sobel_xy, write_pgm

# Window half-widths of the surrogate detector.
TENSOR_HALF = 1   # 3x3 structure tensor
CONTRAST_HALF = 2  # 5x5 RMS contrast
MAP_BORDER = 2    # both maps are zero on this frame
MIN_MAP_SIZE = 2 * MAP_BORDER + 1

# Local variances below this are rounding residue, not contrast.  The smallest
# real variance of an 8-bit 5x5 window is ~6e-7.
_VAR_EPS = 1e-12


@dataclass(frozen=True)
class MetricParams:
    shim_lambda: float = 1000.0
    shim_delta: float = 0.06
    softperc_frac: float = 0.10
    newg_c: float = 0.01
    reliab_cn: float = 0.02
    repeat_percentile: float = 99.0


DEFAULT_PARAMS = MetricParams()


class MetricKind(enum.Enum):
    FEAT = "m_feat"
    SHIM = "m_shim"
    SOFTPERC = "m_softperc"
    NEWG = "m_newg"


@dataclass(frozen=True)
class ResponseMaps:
    repeat: np.ndarray
    reliab: np.ndarray

    def __post_init__(self):
        r = np.array(self.repeat, dtype=np.float64)
        q = np.array(self.reliab, dtype=np.float64)
        if r.shape != q.shape:
            raise InvalidInputError(
                f"map shapes differ: {r.shape} vs {q.shape}")
        if r.ndim != 2:
            raise InvalidInputError("response maps must be 2-D")
        if r.size and (r.min() < 0 or r.max() > 1 or q.min() < 0 or q.max() > 1):
            raise InvalidInputError("response map values must lie in [0, 1]")
        r.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "repeat", r)
        object.__setattr__(self, "reliab", q)

    @property
    def width(self) -> int:
        return self.repeat.shape[1]

    @property
    def height(self) -> int:
        return self.repeat.shape[0]


def m_feat(maps: ResponseMaps) -> float:
    """Mean repeatability times squared mean reliability."""
    if maps.repeat.size == 0:
        raise InvalidInputError("empty response maps")
    return float(maps.repeat.mean() * maps.reliab.mean() ** 2)


# --- surrogate detector ----------------------------------------------------

def _box_sum(a, half):
    """Window sums of side ``2*half+1`` over the last two axes, valid region only."""
    n = 2 * half + 1
    h, w = a.shape[-2:]
    rows = a[..., 0:h - n + 1, :].copy()
    for k in range(1, n):
        rows += a[..., k:h - n + 1 + k, :]
    out = rows[..., :, 0:w - n + 1].copy()
    for k in range(1, n):
        out += rows[..., :, k:w - n + 1 + k]
    return out


def _repeat_arrays(a, percentile):
    gx, gy = sobel_xy(a)
    # structure tensor over 3x3 windows of the gradient field; the gradient
    # border is zero, so only pixels MAP_BORDER away from the edge get a value
    inner = (slice(None),) * (a.ndim - 2) + (slice(1, -1), slice(1, -1))
    sxx = _box_sum((gx * gx)[inner], TENSOR_HALF)
    syy = _box_sum((gy * gy)[inner], TENSOR_HALF)
    sxy = _box_sum((gx * gy)[inner], TENSOR_HALF)
    half_tr = 0.5 * (sxx + syy)
    half_diff = 0.5 * (sxx - syy)
    lam_min = np.maximum(half_tr - np.sqrt(half_diff * half_diff + sxy * sxy), 0.0)

    flat = lam_min.reshape(lam_min.shape[:-2] + (-1,))
    scale = np.percentile(flat, percentile, axis=-1)
    peak = flat.max(axis=-1)
    # a response sparser than 1% of pixels leaves the percentile at 0
    scale = np.where(scale > 0.0, scale, peak)
    scale = np.where(scale > 0.0, scale, 1.0)
    rep = np.minimum(lam_min / scale[..., None, None], 1.0)

    out = np.zeros_like(a)
    out[..., MAP_BORDER:-MAP_BORDER, MAP_BORDER:-MAP_BORDER] = rep
    return out


def _reliab_arrays(a, c_n):
    n = (2 * CONTRAST_HALF + 1) ** 2
    # centre on the image mean to keep the sum-of-squares cancellation small
    centred = a - a.mean(axis=(-2, -1), keepdims=True)
    s1 = _box_sum(centred, CONTRAST_HALF)
    s2 = _box_sum(centred * centred, CONTRAST_HALF)
    var = s2 / n - (s1 / n) ** 2
    var = np.where(var > _VAR_EPS, var, 0.0)
    rms = np.sqrt(var)
    out = np.zeros_like(a)
    out[..., MAP_BORDER:-MAP_BORDER, MAP_BORDER:-MAP_BORDER] = rms / (rms + c_n)
    return out


def response_arrays(a, params: MetricParams = DEFAULT_PARAMS):
    """Repeatability and reliability for an array of shape ``(..., H, W)``."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] < MIN_MAP_SIZE or a.shape[-2] < MIN_MAP_SIZE:
        raise InvalidInputError(
            f"response maps need at least {MIN_MAP_SIZE}x{MIN_MAP_SIZE} pixels")
    return (_repeat_arrays(a, params.repeat_percentile),
            _reliab_arrays(a, params.reliab_cn))


def response_maps(img: Image, params: MetricParams = DEFAULT_PARAMS) -> ResponseMaps:
    """Surrogate detector output for one image.

    Repeatability is the Shi-Tomasi minimum eigenvalue of the 3x3 Sobel
    structure tensor, divided by its own 99th percentile and clamped to 1.
    Reliability is ``rms / (rms + c_n)`` for the 5x5 local RMS contrast.
    Both maps are zero on the 2-pixel frame where the windows do not fit.
    """
    rep, rel = response_arrays(img.data[None], params)
    return ResponseMaps(rep[0], rel[0])


def feat_scores(a, params: MetricParams = DEFAULT_PARAMS):
    """``m_feat`` of every image in a ``(B, H, W)`` stack."""
    rep, rel = response_arrays(a, params)
    return rep.mean(axis=(-2, -1)) * rel.mean(axis=(-2, -1)) ** 2


def m_feat_image(img: Image, params: MetricParams = DEFAULT_PARAMS) -> float:
    return float(feat_scores(img.data[None], params)[0])


# --- precomputed maps --------------------------------------------------------

def load_response_maps(stem) -> ResponseMaps:
    """Read ``<stem>.rep.pgm`` and ``<stem>.rel.pgm`` (dequantized by /255)."""
    rep = read_pgm(f"{stem}.rep.pgm")
    rel = read_pgm(f"{stem}.rel.pgm")
    return ResponseMaps(rep.data, rel.data)


def save_response_maps(stem, maps: ResponseMaps) -> None:
    write_pgm(f"{stem}.rep.pgm", Image(maps.repeat))
    write_pgm(f"{stem}.rel.pgm", Image(maps.reliab))


# --- gradient baselines ------------------------------------------------------

def shim_score(mag, lam=DEFAULT_PARAMS.shim_lambda, delta=DEFAULT_PARAMS.shim_delta):
    mag = np.asarray(mag, dtype=np.float64)
    kept = mag[mag >= delta]
    terms = np.log(lam * (kept - delta) + 1.0) / math.log(lam * (1.0 - delta) + 1.0)
    return float(terms.sum() / mag.size)


def softperc_score(mag, frac=DEFAULT_PARAMS.softperc_frac):
    flat = np.sort(np.asarray(mag, dtype=np.float64).ravel())
    top = math.ceil(frac * flat.size)
    return float(flat[flat.size - top:].mean())


def newg_score(mag, lum, c=DEFAULT_PARAMS.newg_c):
    mag = np.asarray(mag, dtype=np.float64)
    lum = np.asarray(lum, dtype=np.float64)
    weight = lum * lum / (lum * lum + c)
    return float((weight * mag).sum() / mag.size)


def m_shim(img: Image, params: MetricParams = DEFAULT_PARAMS) -> float:
    """Log-compressed sum of gradient magnitudes above a noise floor."""
    return shim_score(sobel_magnitude(img.data), params.shim_lambda, params.shim_delta)


def m_softperc(img: Image, params: MetricParams = DEFAULT_PARAMS) -> float:
    """Mean of the top decile of gradient magnitudes."""
    return softperc_score(sobel_magnitude(img.data), params.softperc_frac)


def m_newg(img: Image, params: MetricParams = DEFAULT_PARAMS) -> float:
    """Gradient mean with dark, noise-dominated pixels down-weighted."""
    return newg_score(sobel_magnitude(img.data), img.data, params.newg_c)


def score(kind: MetricKind, img: Image, params: MetricParams = DEFAULT_PARAMS) -> float:
    if kind is MetricKind.FEAT:
        return m_feat(response_maps(img, params))
    if kind is MetricKind.SHIM:
        return m_shim(img, params)
    if kind is MetricKind.SOFTPERC:
        return m_softperc(img, params)
    if kind is MetricKind.NEWG:
        return m_newg(img, params)
    raise InvalidInputError(f"unknown metric {kind!r}")


# --- rank correlation ----------------------------------------------------------

def spearman(xs, ys) -> float:
    """Pearson correlation of average ranks."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if xs.size != ys.size:
        raise InvalidInputError(f"length mismatch: {xs.size} vs {ys.size}")
    if xs.size < 3:
        raise InvalidInputError("spearman needs at least 3 pairs")
    rx = rankdata(xs) - (xs.size + 1) / 2.0
    ry = rankdata(ys) - (ys.size + 1) / 2.0
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero rank variance")
    rho = float(rx @ ry) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))


# --- detections and matching -----------------------------------------------------

def detections_from_repeat(repeat, k: int):
    """Top-``k`` pixels by repeatability as ``(row, col)`` pairs.

    Ties go to the lower row-major index.  Pixels with zero response are not
    detections, so a featureless image yields none.
    """
    repeat = np.asarray(repeat, dtype=np.float64)
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if k > repeat.size:
        raise InvalidInputError(f"k={k} exceeds pixel count {repeat.size}")
    flat = repeat.ravel()
    order = np.argsort(-flat, kind="stable")[:k]
    order = order[flat[order] > 0.0]
    rows, cols = np.divmod(order, repeat.shape[1])
    return np.stack([rows, cols], axis=1)


def detect(img: Image, k: int, params: MetricParams = DEFAULT_PARAMS):
    return detections_from_repeat(response_maps(img, params).repeat, k)


def chebyshev(a, b):
    """Pairwise Chebyshev distances between two ``(n, 2)`` point sets."""
    a = np.asarray(a).reshape(-1, 2)
    b = np.asarray(b).reshape(-1, 2)
    return np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)


def count_matches(det_a, det_b, radius: int) -> int:
    if len(det_a) == 0 or len(det_b) == 0:
        return 0
    return int((chebyshev(det_a, det_b).min(axis=1) <= radius).sum())


def synthetic_matches(a: Image, b: Image, k: int, radius: int,
                      params: MetricParams = DEFAULT_PARAMS) -> int:
    """Detections in ``a`` with some detection in ``b`` within ``radius``."""
    if a.data.shape != b.data.shape:
        raise InvalidInputError("images must share dimensions")
    return count_matches(detect(a, k, params), detect(b, k, params), radius)
