"""Deterministic synthetic culvert scene and camera.

The scene is a procedural albedo texture that scrolls past the camera as the
robot advances along a 1-D path.  Ambient light decays exponentially inside
the culvert; an onboard LED adds light proportional to its intensity and
produces specular highlights on a sparse set of wet-wall pixels.  Camera
shake smears the scene along the path axis in proportion to exposure time.
The sensor applies exposure, a tone curve, read and shot noise, clipping and
8-bit quantization.

All randomness is counter based: every value is a hash of integer keys
(seed, coordinates), so a frame never depends on render order.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bopt import ControlInput
from .errors import InvalidInputError
from .imagecore import Image, dequantize, quantize

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# independent hash streams
_STREAM_TEXTURE = 1
_STREAM_SPECULAR = 2
_STREAM_NOISE_A = 3
_STREAM_NOISE_B = 4


def _splitmix(x):
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def hash_keys(seed, stream, a, b):
    """64-bit hash of ``(seed, stream, a, b)``; ``a``/``b`` broadcast."""
    with np.errstate(over="ignore"):
        h = _splitmix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _splitmix(np.uint64(stream)))
        h = _splitmix(h ^ np.asarray(a, dtype=np.int64).view(np.uint64))
        return _splitmix(h ^ np.asarray(b, dtype=np.int64).view(np.uint64))


def hash_uniform(seed, stream, a, b):
    """Uniform values in [0, 1) keyed by integers."""
    return (hash_keys(seed, stream, a, b) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def gaussian_field(seed, height, width):
    """Standard normal sample per pixel, keyed by ``(seed, u, v)``."""
    v, u = np.mgrid[0:height, 0:width]
    u1 = 1.0 - hash_uniform(seed, _STREAM_NOISE_A, u, v)
    u2 = hash_uniform(seed, _STREAM_NOISE_B, u, v)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


@dataclass(frozen=True)
class ScenarioConfig:
    # sensor raster
    width: int = 128
    height: int = 96
    # albedo texture: fractal value noise, contrast stretched, then raised to
    # albedo_power so that a minority of bright deposits dominates the highlights
    texture_seed: int = 7
    octaves: int = 3
    texture_cell: float = 12.0
    texture_persistence: float = 0.5
    texture_contrast: float = 2.0
    albedo_power: float = 1.7
    px_per_m: float = 4.0
    # illumination
    ambient_out: float = 1.0
    ambient_floor: float = 0.001
    decay_depth: float = 3.0
    culvert_span: tuple = (10.0, 76.0)
    led_gain: float = 0.8
    specular: float = 0.02
    specular_strength: float = 0.4
    # camera
    gamma: float = 0.8
    read_noise: float = 0.01
    shot_noise: float = 0.0004
    dt_ref: float = 10.0
    # camera shake smear along the path axis
    blur_px_per_ms: float = 0.4
    blur_substeps: int = 4

    def __post_init__(self):
        span = tuple(float(s) for s in self.culvert_span)
        object.__setattr__(self, "culvert_span", span)
        if len(span) != 2 or span[0] > span[1]:
            raise InvalidInputError("culvert_span must be an ordered pair")
        if self.width < 5 or self.height < 5:
            raise InvalidInputError("scene raster must be at least 5x5")
        if not 0.0 < self.gamma <= 2.0:
            raise InvalidInputError("gamma must lie in (0, 2]")
        if self.octaves < 1 or self.blur_substeps < 1:
            raise InvalidInputError("octaves and blur_substeps must be >= 1")
        if self.texture_cell <= 0 or self.dt_ref <= 0 or self.albedo_power <= 0:
            raise InvalidInputError("texture_cell, dt_ref and albedo_power must be positive")
        for name in ("texture_persistence", "texture_contrast", "px_per_m", "ambient_out",
                     "ambient_floor", "decay_depth", "led_gain", "specular",
                     "specular_strength", "read_noise", "shot_noise", "blur_px_per_ms"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be nonnegative")
        if self.specular > 1:
            raise InvalidInputError("specular is a pixel fraction in [0, 1]")

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class Pose:
    d: float

    def __post_init__(self):
        if not self.d >= 0.0:
            raise InvalidInputError("pose distance must be >= 0")


def ambient(cfg: ScenarioConfig, pose: Pose | float) -> float:
    """Ambient illumination at path distance ``d``.

    Constant outside the culvert; inside it decays with the distance to the
    nearer portal and bottoms out at ``ambient_floor``.
    """
    d = pose.d if isinstance(pose, Pose) else float(pose)
    d_in, d_out = cfg.culvert_span
    if d < d_in or d > d_out:
        return cfg.ambient_out
    depth = min(d - d_in, d_out - d)
    if cfg.decay_depth == 0.0:
        decayed = 0.0 if depth > 0 else cfg.ambient_out
    else:
        decayed = cfg.ambient_out * math.exp(-depth / cfg.decay_depth)
    return max(cfg.ambient_floor, decayed)


def _lattice_noise(x, y, cell, node):
    """Smoothstep interpolation of per-node values ``node(ix, iy)``."""
    gx = x / cell
    gy = y / cell
    ix = np.floor(gx).astype(np.int64)
    iy = np.floor(gy).astype(np.int64)
    fx = gx - ix
    fy = gy - iy
    sx = fx * fx * (3.0 - 2.0 * fx)
    sy = fy * fy * (3.0 - 2.0 * fy)
    v00 = node(ix, iy)
    v10 = node(ix + 1, iy)
    v01 = node(ix, iy + 1)
    v11 = node(ix + 1, iy + 1)
    top = v00 + sx * (v10 - v00)
    bot = v01 + sx * (v11 - v01)
    return top + sy * (bot - top)


def _value_noise(seed, octave, x, y, cell):
    key = _STREAM_TEXTURE + 16 * octave
    return _lattice_noise(x, y, cell, lambda i, j: hash_uniform(seed, key, i, j))


def albedo(cfg: ScenarioConfig, pose: Pose | float, offset=0.0):
    """Albedo in [0, 1] seen at path distance ``d``, shape ``(H, W)``."""
    d = pose.d if isinstance(pose, Pose) else float(pose)
    return _albedo_at(cfg, d * cfg.px_per_m + offset)


@functools.lru_cache(maxsize=512)
def _albedo_at(cfg: ScenarioConfig, shift: float):
    # column u of the frame sees world coordinate u + shift
    v, u = np.mgrid[0:cfg.height, 0:cfg.width].astype(np.float64)
    x = u + shift
    total = np.zeros_like(x)
    norm = 0.0
    for o in range(cfg.octaves):
        amp = cfg.texture_persistence ** o
        total += amp * _value_noise(cfg.texture_seed, o, x, v, cfg.texture_cell / 2 ** o)
        norm += amp
    detail = np.clip(0.5 + cfg.texture_contrast * (total / norm - 0.5), 0.0, 1.0)
    out = detail ** cfg.albedo_power
    out.setflags(write=False)
    return out


def specular_field(cfg: ScenarioConfig, frame_seed: int):
    """1.0 on the pixels hosting a highlight in this frame, else 0.0."""
    v, u = np.mgrid[0:cfg.height, 0:cfg.width]
    return (hash_uniform(frame_seed, _STREAM_SPECULAR, u, v) < cfg.specular).astype(np.float64)


@functools.lru_cache(maxsize=32)
def _smear_table(cfg: ScenarioConfig, d: float, n: int):
    # running sums of the albedo at successive sub-pixel shifts; a prefix of
    # the table does not depend on n, so cached tables of any length agree
    offsets = np.arange(n) / cfg.blur_substeps
    table = np.cumsum([albedo(cfg, d, o) for o in offsets], axis=0)
    table.setflags(write=False)
    return table


def _smear_samples(cfg: ScenarioConfig, dt):
    """Smear length in sub-pixel samples, at least one."""
    return np.maximum(1.0, cfg.blur_px_per_ms * dt * cfg.blur_substeps)


def smeared_scene(cfg: ScenarioConfig, pose, dt):
    """Albedo averaged over the shake smear of each exposure in ``dt``.

    The smear spans ``blur_px_per_ms * dt`` pixels, sampled every
    ``1 / blur_substeps`` pixel with a fractional weight on the last sample so
    that the result is continuous in ``dt``; returns shape ``(B, H, W)``.
    """
    d = pose.d if isinstance(pose, Pose) else float(pose)
    dt = np.atleast_1d(np.asarray(dt, dtype=np.float64))
    length = _smear_samples(cfg, dt)
    whole = np.floor(length).astype(int)
    frac = (length - whole)[:, None, None]
    n = int(whole.max()) + 1
    table = _smear_table(cfg, d, n)
    head = table[whole - 1]
    tail = table[whole] - head
    return (head + frac * tail) / length[:, None, None]


@functools.lru_cache(maxsize=8)
def _frame_fields(cfg: ScenarioConfig, frame_seed: int):
    spec = specular_field(cfg, frame_seed)
    z = gaussian_field(frame_seed, cfg.height, cfg.width)
    spec.setflags(write=False)
    z.setflags(write=False)
    return spec, z


def exposure_value(cfg, amb, rho, spec, p, dt):
    """Noise-free tone-mapped exposure, broadcasting ``p``/``dt`` over a batch axis."""
    p = np.asarray(p, dtype=np.float64)[..., None, None]
    dt = np.asarray(dt, dtype=np.float64)[..., None, None]
    led = p * cfg.led_gain
    irradiance = (amb + led) * rho + spec * (cfg.specular_strength * led * led)
    return (irradiance * dt / cfg.dt_ref) ** cfg.gamma


def render_batch(cfg: ScenarioConfig, pose: Pose | float, p, dt, frame_seed: int):
    """Render frames for arrays of controls at one pose; returns ``(B, H, W)``.

    Frames share the noise field of ``frame_seed``; frame ``i`` is bit-identical
    to ``render(cfg, pose, ControlInput(p[i], dt[i]), frame_seed)``.
    """
    amb = ambient(cfg, pose)
    dt_arr = np.atleast_1d(np.asarray(dt, dtype=np.float64))
    rho = smeared_scene(cfg, pose, dt_arr)
    spec, z = _frame_fields(cfg, int(frame_seed))
    value = exposure_value(cfg, amb, rho, spec, np.atleast_1d(p), dt_arr)
    var = cfg.read_noise ** 2 + cfg.shot_noise * np.minimum(value, 1.0)
    out = np.clip(value + np.sqrt(var) * z, 0.0, 1.0)
    return dequantize(quantize(out))


def render(cfg: ScenarioConfig, pose: Pose | float, ctl: ControlInput, frame_seed: int) -> Image:
    return Image(render_batch(cfg, pose, [ctl.P], [ctl.dt], frame_seed)[0])


@dataclass(frozen=True)
class AeState:
    dt: float
    bounds: tuple = field(default=(0.5, 30.0))
    target: float = 0.5
    rate: float = 0.35

    def __post_init__(self):
        lo, hi = self.bounds
        if not lo <= self.dt <= hi:
            raise InvalidInputError(f"AE exposure {self.dt} outside bounds {self.bounds}")


def autoexposure_step(state: AeState, measured_mean: float) -> AeState:
    """Multiplicative proportional step of exposure toward the mean setpoint."""
    if not 0.0 <= measured_mean <= 1.0:
        raise InvalidInputError("measured mean must lie in [0, 1]")
    gain = state.rate * (state.target - measured_mean) / max(state.target, 0.05)
    lo, hi = state.bounds
    dt = min(hi, max(lo, state.dt * math.exp(gain)))
    return replace(state, dt=dt)
