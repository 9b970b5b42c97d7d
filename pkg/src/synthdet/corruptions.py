"""Image corruptions at five ordinal severities for robustness studies.

Six kinds: gamma_contrast, glass_blur, impulse_noise, motion_blur,
coarse_dropout, image_scale.  Parameter tables are fixed here so results
are comparable across runs; every table is monotone in severity and the
mean per-pixel distortion rises strictly from severity 1 to 5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .imageops import clamp01, resize_bilinear

KINDS = ("gamma_contrast", "glass_blur", "impulse_noise", "motion_blur", "coarse_dropout", "image_scale")
SEVERITIES = (1, 2, 3, 4, 5)

_GAMMA = (1.5, 2.0, 3.0, 4.5, 6.5)
_GLASS_SIGMA = (0.7, 0.9, 1.1, 1.3, 1.5)
_GLASS_DELTA = (1, 2, 2, 3, 4)
_GLASS_ITER = (1, 2, 3, 4, 5)
_IMPULSE = (0.03, 0.06, 0.09, 0.17, 0.27)
_MOTION_LEN = (9, 15, 21, 31, 41)
_DROPOUT = (0.05, 0.10, 0.20, 0.30, 0.40)
_SCALE = (0.8, 0.6, 0.4, 0.3, 0.2)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown corruption kind '{self.kind}'")
        if self.severity not in SEVERITIES:
            raise ConfigurationError(f"severity must be in [1, 5], got {self.severity}")

    def params(self) -> dict:
        i = self.severity - 1
        return {
            "gamma_contrast": lambda: {"gamma": _GAMMA[i]},
            "glass_blur": lambda: {"sigma": _GLASS_SIGMA[i], "delta": _GLASS_DELTA[i], "iterations": _GLASS_ITER[i]},
            "impulse_noise": lambda: {"fraction": _IMPULSE[i]},
            "motion_blur": lambda: {"length": _MOTION_LEN[i]},
            "coarse_dropout": lambda: {"fraction": _DROPOUT[i]},
            "image_scale": lambda: {"factor": _SCALE[i]},
        }[self.kind]()


def gamma_contrast(img: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == 1.0:
        return img.copy()
    return np.clip(img, 0.0, 1.0) ** gamma


def glass_blur(img: np.ndarray, sigma: float, delta: int, iterations: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian blur followed by rounds of local pixel displacement."""
    out = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="nearest")
    h, w = out.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    for _ in range(iterations):
        dy = rng.integers(-delta, delta + 1, size=(h, w))
        dx = rng.integers(-delta, delta + 1, size=(h, w))
        sy = np.clip(ys + dy, 0, h - 1)
        sx = np.clip(xs + dx, 0, w - 1)
        out = out[sy, sx]
    return clamp01(out)


def impulse_noise(img: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Salt-and-pepper on a random pixel fraction (all channels together)."""
    h, w = img.shape[:2]
    out = img.copy()
    hit = rng.random((h, w)) < fraction
    salt = rng.random((h, w)) < 0.5
    out[hit & salt] = 1.0
    out[hit & ~salt] = 0.0
    return out


def motion_blur(img: np.ndarray, length: int, rng: np.random.Generator, angle: float | None = None) -> np.ndarray:
    """Convolve with a normalized linear kernel at a random angle."""
    if angle is None:
        angle = float(rng.uniform(0.0, np.pi))
    k = np.zeros((length, length))
    c = (length - 1) / 2.0
    ca, sa = np.cos(angle), np.sin(angle)
    for i in range(length * 4):
        t = -c + i * (length - 1) / (length * 4 - 1)
        x = c + t * ca
        y = c + t * sa
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        fx, fy = x - x0, y - y0
        for ddx, ddy, wgt in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
            xi, yi = x0 + ddx, y0 + ddy
            if 0 <= xi < length and 0 <= yi < length:
                k[yi, xi] += wgt
    k /= k.sum()
    out = np.empty_like(img)
    for ch in range(img.shape[2]):
        out[:, :, ch] = ndimage.convolve(img[:, :, ch], k, mode="nearest")
    return clamp01(out)


def coarse_dropout(img: np.ndarray, fraction: float, rng: np.random.Generator, fill: float = 0.5) -> np.ndarray:
    """Gray rectangles until the union covers ~``fraction`` of the area."""
    h, w = img.shape[:2]
    mask = np.zeros((h, w), dtype=bool)
    out = img.copy()
    target = fraction * h * w
    for _ in range(10000):
        if mask.sum() >= target:
            break
        rh = max(1, int(rng.uniform(0.04, 0.10) * h))
        rw = max(1, int(rng.uniform(0.04, 0.10) * w))
        y = int(rng.integers(0, max(1, h - rh + 1)))
        x = int(rng.integers(0, max(1, w - rw + 1)))
        mask[y:y + rh, x:x + rw] = True
    out[mask] = fill
    return out


def image_scale(img: np.ndarray, factor: float) -> np.ndarray:
    """Downscale to the factor; evaluation then runs at that resolution
    with boxes scaled by the caller."""
    h, w = img.shape[:2]
    return resize_bilinear(img, (max(1, round(h * factor)), max(1, round(w * factor))))


def corrupt(img: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator) -> np.ndarray:
    """Apply one corruption cell (kind, severity) to an image."""
    p = spec.params()
    if spec.kind == "gamma_contrast":
        return gamma_contrast(img, p["gamma"])
    if spec.kind == "glass_blur":
        return glass_blur(img, p["sigma"], p["delta"], p["iterations"], rng)
    if spec.kind == "impulse_noise":
        return impulse_noise(img, p["fraction"], rng)
    if spec.kind == "motion_blur":
        return motion_blur(img, p["length"], rng)
    if spec.kind == "coarse_dropout":
        return coarse_dropout(img, p["fraction"], rng)
    if spec.kind == "image_scale":
        return image_scale(img, p["factor"])
    raise ConfigurationError(f"unknown corruption kind '{spec.kind}'")
