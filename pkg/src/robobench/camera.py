"""The 18 camera corruptions as deterministic image-to-image transforms.

Conventions shared by every corruption:

* images are ``(H, W, 3)`` uint8 RGB arrays; outputs keep the input shape;
* all internal math runs in float64 and is finalized with round-then-clip;
* every stochastic transform draws from exactly one Philox generator keyed
  by the caller's derived seed, so equal inputs give bit-identical outputs
  on every platform and from any number of worker threads;
* severity 0 returns an untouched copy.

The severity-to-parameter mapping lives in the shipped params table, not
here; these functions take the already-resolved parameter record.
"""

from __future__ import annotations

import io
import math

import cv2
import numpy as np
from PIL import Image as PILImage
from scipy.ndimage import map_coordinates

from .core import CorruptionType, make_rng, validate_severity
from .errors import ValidationError
from .params import ParamsTable, load_params

LIGHTING_VARIANTS = (CorruptionType.BRIGHTNESS, CorruptionType.LOW_LIGHT,
                     CorruptionType.CONTRAST)
NOISE_VARIANTS = (CorruptionType.GAUSSIAN_NOISE, CorruptionType.SHOT_NOISE,
                  CorruptionType.IMPULSE_NOISE, CorruptionType.ISO_NOISE)
BLUR_VARIANTS = (CorruptionType.DEFOCUS_BLUR, CorruptionType.GLASS_BLUR,
                 CorruptionType.MOTION_BLUR, CorruptionType.ZOOM_BLUR)
WEATHER_VARIANTS = (CorruptionType.FOG, CorruptionType.FROST, CorruptionType.SNOW)
DIGITAL_VARIANTS = (CorruptionType.PIXELATE, CorruptionType.JPEG_COMPRESSION,
                    CorruptionType.ELASTIC_TRANSFORM, CorruptionType.QUANTIZATION)


def validate_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
        raise ValidationError("image must be a uint8 numpy array")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"image must have shape (H, W, 3), got {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValidationError("zero-sized image")
    return img


def _finalize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------- lighting

def _brightness(img, p):
    # adding the same offset to all channels adds it to linear luma exactly
    return img.astype(np.float64) + p["offset"] * 255.0


def _low_light(img, p, rng):
    scaled = img.astype(np.float64) * p["scale"]
    # photon-limited regime: noise std grows with the (scaled) signal
    sig = np.sqrt(np.maximum(scaled, 0.0) / 255.0)
    return scaled + rng.standard_normal(img.shape) * p["noise_sigma"] * 255.0 * sig


def _contrast(img, p):
    x = img.astype(np.float64)
    mean = x.mean()
    return mean + (x - mean) * p["factor"]


# ------------------------------------------------------------------- noise

def _gaussian_noise(img, p, rng):
    return img.astype(np.float64) + rng.standard_normal(img.shape) * p["sigma"] * 255.0


def _shot_noise(img, p, rng):
    lam = img.astype(np.float64) / 255.0 * p["photons"]
    return rng.poisson(lam).astype(np.float64) / p["photons"] * 255.0


def _impulse_noise(img, p, rng):
    h, w = img.shape[:2]
    hit = rng.random((h, w)) < p["fraction"]
    salt = rng.random((h, w)) < 0.5
    out = img.astype(np.float64)
    out[hit & salt] = 255.0
    out[hit & ~salt] = 0.0
    return out


def _iso_noise(img, p, rng):
    x = img.astype(np.float64)
    shot = rng.standard_normal(img.shape) * p["shot_sigma"] * np.sqrt(x / 255.0)
    read = rng.standard_normal(img.shape) * p["read_sigma"]
    return x + (shot + read) * 255.0


# -------------------------------------------------------------------- blur

def _disk_kernel(radius: int) -> np.ndarray:
    grid = np.arange(-radius, radius + 1)
    xx, yy = np.meshgrid(grid, grid)
    kernel = ((xx * xx + yy * yy) <= radius * radius).astype(np.float64)
    return kernel / kernel.sum()


def _convolve_rgb(img_f: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return cv2.filter2D(img_f, -1, kernel, borderType=cv2.BORDER_REFLECT_101)


def _defocus_blur(img, p):
    return _convolve_rgb(img.astype(np.float64), _disk_kernel(int(p["radius"])))


def _line_kernel(length: int, angle_deg: float) -> np.ndarray:
    if length <= 1:
        return np.ones((1, 1))
    kernel = np.zeros((length, length))
    c = (length - 1) / 2.0
    dx = math.cos(math.radians(angle_deg)) * c
    dy = math.sin(math.radians(angle_deg)) * c
    p0 = (int(round(c - dx)), int(round(c - dy)))
    p1 = (int(round(c + dx)), int(round(c + dy)))
    cv2.line(kernel, p0, p1, 1.0, thickness=1)
    return kernel / kernel.sum()


def _motion_blur(img, p, rng):
    angle = rng.uniform(0.0, 180.0)
    return _convolve_rgb(img.astype(np.float64), _line_kernel(int(p["length"]), angle))


def _glass_blur(img, p, rng):
    h, w = img.shape[:2]
    delta = int(p["max_delta"])
    x = cv2.GaussianBlur(img.astype(np.float64), (0, 0), p["sigma"],
                         borderType=cv2.BORDER_REFLECT_101)
    rows, cols = np.indices((h, w))
    for _ in range(int(p["iterations"])):
        dy = rng.integers(-delta, delta + 1, (h, w))
        dx = rng.integers(-delta, delta + 1, (h, w))
        yy = np.clip(rows + dy, 0, h - 1)
        xx = np.clip(cols + dx, 0, w - 1)
        x = x[yy, xx]
    return cv2.GaussianBlur(x, (0, 0), p["sigma"], borderType=cv2.BORDER_REFLECT_101)


def _zoom_once(img_f: np.ndarray, factor: float) -> np.ndarray:
    h, w = img_f.shape[:2]
    ch = max(1, round(h / factor))
    cw = max(1, round(w / factor))
    top = (h - ch) // 2
    left = (w - cw) // 2
    crop = img_f[top:top + ch, left:left + cw]
    return cv2.resize(crop, (w, h), interpolation=cv2.INTER_LINEAR)


def _zoom_blur(img, p):
    x = img.astype(np.float64)
    acc = x.copy()
    n = 1
    factor = 1.0 + p["zoom_step"]
    while factor <= p["max_zoom"] + 1e-9:
        acc += _zoom_once(x, factor)
        n += 1
        factor += p["zoom_step"]
    return acc / n


# ----------------------------------------------------------------- weather

def _plasma_fractal(rng, mapsize: int, decay: float) -> np.ndarray:
    """Diamond-square heightmap in [0, 1]; mapsize must be a power of two."""
    arr = np.empty((mapsize, mapsize), dtype=np.float64)
    arr[0, 0] = 0.0
    stepsize = mapsize
    wibble = 100.0

    def wibbled(base):
        return base / 4.0 + wibble * rng.uniform(-wibble, wibble, base.shape)

    while stepsize >= 2:
        half = stepsize // 2
        corners = arr[0:mapsize:stepsize, 0:mapsize:stepsize]
        acc = corners + np.roll(corners, -1, axis=0)
        acc += np.roll(acc, -1, axis=1)
        arr[half:mapsize:stepsize, half:mapsize:stepsize] = wibbled(acc)

        diag = arr[half:mapsize:stepsize, half:mapsize:stepsize]
        grid = arr[0:mapsize:stepsize, 0:mapsize:stepsize]
        lr = diag + np.roll(diag, 1, axis=0) + grid + np.roll(grid, -1, axis=1)
        arr[0:mapsize:stepsize, half:mapsize:stepsize] = wibbled(lr)
        td = diag + np.roll(diag, 1, axis=1) + grid + np.roll(grid, -1, axis=0)
        arr[half:mapsize:stepsize, 0:mapsize:stepsize] = wibbled(td)

        stepsize //= 2
        wibble /= decay

    arr -= arr.min()
    peak = arr.max()
    return arr / peak if peak > 0 else arr


def _fog(img, p, rng):
    h, w = img.shape[:2]
    mapsize = 1 << max(1, (max(h, w) - 1).bit_length())
    haze = _plasma_fractal(rng, mapsize, p["roughness"])[:h, :w]
    x = img.astype(np.float64)
    # scattering toward white airlight: can only lighten, never darken
    return x + p["blend"] * haze[..., None] * (255.0 - x)


def _frost(img, p, rng):
    h, w = img.shape[:2]
    noise = rng.random((h, w))
    smooth = cv2.GaussianBlur(noise, (0, 0), 3.0, borderType=cv2.BORDER_REFLECT_101)
    lo, hi = smooth.min(), smooth.max()
    t = (smooth - lo) / (hi - lo) if hi > lo else np.zeros_like(smooth)
    ridges = 1.0 - np.abs(2.0 * t - 1.0)  # bright vein-like crystal lines
    ice = 255.0 * (0.55 + 0.45 * ridges)
    return img.astype(np.float64) * p["image_weight"] + p["ice_weight"] * ice[..., None]


def _snow(img, p, rng):
    h, w = img.shape[:2]
    particles = (rng.random((h, w)) < p["density"]).astype(np.float64)
    angle = rng.uniform(-135.0, -45.0)
    length = int(p["streak_length"])
    streaks = cv2.filter2D(particles, -1, _line_kernel(length, angle),
                           borderType=cv2.BORDER_CONSTANT)
    streaks = np.clip(streaks * length * p["streak_intensity"], 0.0, 1.0)
    x = img.astype(np.float64)
    whitened = x + p["whiten"] * (0.8 * 255.0 - x).clip(min=0.0)
    return np.maximum(whitened, streaks[..., None] * 255.0)


# ----------------------------------------------------------------- digital

def _pixelate(img, p):
    factor = int(p["factor"])
    if factor <= 1:
        return img.astype(np.float64)
    h, w = img.shape[:2]
    small = cv2.resize(img, (max(1, round(w / factor)), max(1, round(h / factor))),
                       interpolation=cv2.INTER_AREA)
    return cv2.resize(small, (w, h), interpolation=cv2.INTER_NEAREST).astype(np.float64)


def _jpeg(img, p):
    # pinned baseline encoder: quality ladder + 4:2:0 subsampling
    buf = io.BytesIO()
    PILImage.fromarray(img).save(buf, format="JPEG", quality=int(p["quality"]),
                                 subsampling=2)
    buf.seek(0)
    return np.asarray(PILImage.open(buf), dtype=np.float64)


def _elastic(img, p, rng):
    h, w = img.shape[:2]

    def field():
        d = rng.uniform(-1.0, 1.0, (h, w))
        d = cv2.GaussianBlur(d, (0, 0), p["sigma"], borderType=cv2.BORDER_REFLECT_101)
        peak = np.abs(d).max()
        return d / peak * p["alpha"] if peak > 0 else d

    dy, dx = field(), field()
    rows, cols = np.indices((h, w), dtype=np.float64)
    coords = [np.clip(rows + dy, 0, h - 1), np.clip(cols + dx, 0, w - 1)]
    out = np.empty((h, w, 3), dtype=np.float64)
    for ch in range(3):
        out[..., ch] = map_coordinates(img[..., ch].astype(np.float64), coords,
                                       order=1, mode="nearest")
    return out


def _quantization(img, p):
    shift = 8 - int(p["bits"])
    return ((img >> shift) << shift).astype(np.float64)


# -------------------------------------------------------------- dispatcher

def apply_lighting(img, variant, params, seed):
    if variant not in LIGHTING_VARIANTS:
        raise ValidationError(f"{variant.value} is not a lighting corruption")
    if variant is CorruptionType.BRIGHTNESS:
        return _finalize(_brightness(img, params))
    if variant is CorruptionType.LOW_LIGHT:
        return _finalize(_low_light(img, params, make_rng(seed)))
    return _finalize(_contrast(img, params))


def apply_noise(img, variant, params, seed):
    if variant not in NOISE_VARIANTS:
        raise ValidationError(f"{variant.value} is not a noise corruption")
    rng = make_rng(seed)
    fn = {CorruptionType.GAUSSIAN_NOISE: _gaussian_noise,
          CorruptionType.SHOT_NOISE: _shot_noise,
          CorruptionType.IMPULSE_NOISE: _impulse_noise,
          CorruptionType.ISO_NOISE: _iso_noise}[variant]
    return _finalize(fn(img, params, rng))


def apply_blur(img, variant, params, seed):
    if variant not in BLUR_VARIANTS:
        raise ValidationError(f"{variant.value} is not a blur corruption")
    if variant is CorruptionType.DEFOCUS_BLUR:
        return _finalize(_defocus_blur(img, params))
    if variant is CorruptionType.ZOOM_BLUR:
        return _finalize(_zoom_blur(img, params))
    rng = make_rng(seed)
    if variant is CorruptionType.MOTION_BLUR:
        return _finalize(_motion_blur(img, params, rng))
    return _finalize(_glass_blur(img, params, rng))


def apply_weather(img, variant, params, seed):
    if variant not in WEATHER_VARIANTS:
        raise ValidationError(f"{variant.value} is not a weather corruption")
    rng = make_rng(seed)
    fn = {CorruptionType.FOG: _fog,
          CorruptionType.FROST: _frost,
          CorruptionType.SNOW: _snow}[variant]
    return _finalize(fn(img, params, rng))


def apply_digital(img, variant, params, seed):
    if variant not in DIGITAL_VARIANTS:
        raise ValidationError(f"{variant.value} is not a digital corruption")
    if variant is CorruptionType.ELASTIC_TRANSFORM:
        return _finalize(_elastic(img, params, make_rng(seed)))
    fn = {CorruptionType.PIXELATE: _pixelate,
          CorruptionType.JPEG_COMPRESSION: _jpeg,
          CorruptionType.QUANTIZATION: _quantization}[variant]
    return _finalize(fn(img, params))


_FAMILY = {}
for _v in LIGHTING_VARIANTS:
    _FAMILY[_v] = apply_lighting
for _v in NOISE_VARIANTS:
    _FAMILY[_v] = apply_noise
for _v in BLUR_VARIANTS:
    _FAMILY[_v] = apply_blur
for _v in WEATHER_VARIANTS:
    _FAMILY[_v] = apply_weather
for _v in DIGITAL_VARIANTS:
    _FAMILY[_v] = apply_digital


def corrupt_image(img: np.ndarray, corruption: CorruptionType, severity: int,
                  seed: int, params: ParamsTable | None = None) -> np.ndarray:
    """Apply one camera corruption at the given severity.

    Severity 0 returns a bit-identical copy. Output dimensions always equal
    the input's, and equal ``(img, corruption, severity, seed)`` give
    bit-identical results.
    """
    validate_image(img)
    if corruption not in _FAMILY:
        raise ValidationError(
            f"{corruption.value} is not a camera corruption; "
            f"camera tags: {', '.join(c.value for c in _FAMILY)}")
    validate_severity(severity)
    if severity == 0:
        return img.copy()
    if params is None:
        params = load_params()
    level = params.level(corruption, severity)
    out = _FAMILY[corruption](img, corruption, level, seed)
    assert out.shape == img.shape
    return out
