"""Image preprocessing: aspect-preserving zero-pad or center-crop resize,
per-channel normalization, color jitter, and 8-bit PGM/PPM I/O.

Images are float64 arrays of shape (H, W, C), C in {1, 3}, values in [0, 1].
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidArgumentError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def as_image(img):
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise InvalidArgumentError(f"image must be (H, W) or (H, W, 1|3), got shape {np.shape(img)}")
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise InvalidArgumentError("image is empty")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("image has non-finite values")
    return a


def _round_half_even(x):
    return int(np.round(x))


def resize(img, out_h, out_w):
    """Bilinear resize with half-pixel-center alignment and edge clamping."""
    img = as_image(img)
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError(f"output size must be positive, got {out_h}x{out_w}")
    if (out_h, out_w) == img.shape[:2]:
        return img.copy()
    return kernels.bilinear_resize(np.ascontiguousarray(img), int(out_h), int(out_w))


def scaled_size(h, w, target, fit="long"):
    """(h, w) after scaling the long (``fit="long"``) or short side to ``target``, rounded half-to-even."""
    side = max(h, w) if fit == "long" else min(h, w)
    s = target / side
    nh = target if h == side else _round_half_even(h * s)
    nw = target if w == side else _round_half_even(w * s)
    return max(nh, 1), max(nw, 1)


def content_box(h, w, target):
    """(top, left, height, width) of the image content inside a zero-pad canvas."""
    nh, nw = scaled_size(h, w, target, "long")
    top = (target - nh) // 2
    left = (target - nw) // 2
    return top, left, nh, nw


def zero_pad_resize(img, target):
    """Scale the long side to ``target`` and pad the short side with zeros.

    Padding is split evenly; an odd leftover pixel goes to the bottom/right.
    """
    img = as_image(img)
    if target < 1:
        raise InvalidArgumentError(f"target must be >= 1, got {target}")
    h, w, c = img.shape
    top, left, nh, nw = content_box(h, w, target)
    out = np.zeros((target, target, c))
    out[top : top + nh, left : left + nw] = resize(img, nh, nw)
    return out


def center_crop_resize(img, target):
    """Scale the short side to ``target``, then crop the central square.

    The crop offset is floor((size - target) / 2), so odd leftovers bias
    the window toward the top-left.
    """
    img = as_image(img)
    if target < 1:
        raise InvalidArgumentError(f"target must be >= 1, got {target}")
    h, w, _ = img.shape
    nh, nw = scaled_size(h, w, target, "short")
    scaled = resize(img, nh, nw)
    top = (nh - target) // 2
    left = (nw - target) // 2
    return scaled[top : top + target, left : left + target].copy()


def _channel_params(values, c, name):
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 1:
        v = np.repeat(v, c)
    if v.size == 3 and c == 1:
        v = v[:1]
    if v.size != c:
        raise InvalidArgumentError(f"{name} has {v.size} entries for a {c}-channel image")
    return v


def normalize(img, mean, std):
    img = as_image(img)
    c = img.shape[2]
    mean = _channel_params(mean, c, "mean")
    std = _channel_params(std, c, "std")
    if np.any(std <= 0):
        raise InvalidArgumentError("std must be positive")
    return (img - mean) / std


def denormalize(img, mean, std):
    img = np.asarray(img, dtype=np.float64)
    c = img.shape[2]
    return img * _channel_params(std, c, "std") + _channel_params(mean, c, "mean")


@dataclass(frozen=True)
class JitterConfig:
    brightness: float = 0.0
    contrast: float = 0.0
    saturation: float = 0.0
    hue: float = 0.0

    def __post_init__(self):
        for name in ("brightness", "contrast", "saturation"):
            d = getattr(self, name)
            if not 0.0 <= d < 1.0:
                raise InvalidArgumentError(f"{name} delta must be in [0, 1) so the factor stays positive, got {d}")
        if not 0.0 <= self.hue <= 0.5:
            raise InvalidArgumentError(f"hue delta must be in [0, 0.5] turns, got {self.hue}")

    def is_identity(self):
        return self.brightness == self.contrast == self.saturation == self.hue == 0.0


def sample_jitter(cfg, seed):
    """Factors (brightness, contrast, saturation, hue shift) drawn for ``seed``."""
    rng = np.random.default_rng(seed)
    b = rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness)
    c = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast)
    s = rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation)
    h = rng.uniform(-cfg.hue, cfg.hue)
    return b, c, s, h


def _gray(img):
    if img.shape[2] == 1:
        return img[:, :, 0]
    return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]


def apply_jitter(img, brightness, contrast, saturation, hue):
    """Apply given factors in the order brightness, contrast, saturation, hue."""
    img = as_image(img)
    out = np.clip(img * brightness, 0.0, 1.0)
    out = np.clip((out - _gray(out).mean()) * contrast + _gray(out).mean(), 0.0, 1.0)
    if img.shape[2] == 3:
        g = _gray(out)[:, :, None]
        out = np.clip((out - g) * saturation + g, 0.0, 1.0)
        if hue != 0.0:
            hsv = kernels.rgb_to_hsv(np.ascontiguousarray(out))
            hsv[:, :, 0] = (hsv[:, :, 0] + hue) % 1.0
            out = np.clip(kernels.hsv_to_rgb(hsv), 0.0, 1.0)
    return out


def color_jitter(img, cfg, seed):
    """Random brightness/contrast/saturation/hue; single-channel images skip the last two."""
    img = as_image(img)
    if cfg.is_identity():
        return img.copy()
    return apply_jitter(img, *sample_jitter(cfg, seed))


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: int = 32
    mode: str = "zero_pad"
    mean: tuple = (0.0,)
    std: tuple = (1.0,)
    jitter: JitterConfig = field(default_factory=JitterConfig)
    seed: int = 0

    def __post_init__(self):
        if self.target_size < 1:
            raise InvalidArgumentError("target_size must be positive")
        if self.mode not in ("zero_pad", "center_crop"):
            raise InvalidArgumentError(f"unknown preprocessing mode {self.mode!r}")
        if np.any(np.asarray(self.std) <= 0):
            raise InvalidArgumentError("std must be positive")


def preprocess(img, cfg, index=0):
    """Full pipeline: jitter (seeded by cfg.seed XOR index), resize, normalize.

    Normalization runs after padding, so pad pixels become -mean/std.
    """
    img = as_image(img)
    img = color_jitter(img, cfg.jitter, int(cfg.seed) ^ int(index))
    if cfg.mode == "zero_pad":
        img = zero_pad_resize(img, cfg.target_size)
    else:
        img = center_crop_resize(img, cfg.target_size)
    return normalize(img, cfg.mean, cfg.std)


# --- PGM / PPM ------------------------------------------------------------------------------


def write_pnm(path, img):
    """Write a binary 8-bit PGM (1 channel) or PPM (3 channels)."""
    img = as_image(img)
    h, w, c = img.shape
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


def _tokens(blob):
    pos = 0
    while True:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        yield blob[start:pos], pos


def read_pnm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    toks = _tokens(blob)
    magic, _ = next(toks)
    if magic not in (b"P5", b"P6"):
        raise InvalidArgumentError(f"{path}: only binary PGM/PPM (P5/P6) is supported")
    w = int(next(toks)[0])
    h = int(next(toks)[0])
    maxval, pos = next(toks)
    if int(maxval) != 255:
        raise InvalidArgumentError(f"{path}: only 8-bit images are supported")
    c = 1 if magic == b"P5" else 3
    data = np.frombuffer(blob[pos + 1 : pos + 1 + h * w * c], dtype=np.uint8)
    if data.size != h * w * c:
        raise InvalidArgumentError(f"{path}: truncated pixel data")
    return data.reshape(h, w, c).astype(np.float64) / 255.0
