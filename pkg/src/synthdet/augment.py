"""Training-time augmentation pipeline with annotation-consistent geometry.

The whole pipeline fires with probability 0.8; within a firing run each
entry fires independently at its own probability.  Photometric entries
come first, geometric ones last so instance masks are re-derived in a
single pass:

    contrast, brightness, enhancement -> random_background -> random_blend
    -> reflectance -> hist_equalize -> pasta -> snow -> shot_noise -> jpeg
    -> random_perspective -> large_scale_jitter -> pad_to_square

Foreground for background replacement is any dropped-object pixel
(instance id in [1, SCENERY_ID_BASE)); room surfaces count as background.
After every geometric step, surviving boxes are recomputed from the
transformed instance mask.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np
import yaml
from PIL import Image as PILImage

from .annotate import Annotation
from .errors import ConfigurationError
from .imageops import bbox_of_mask, clamp01, from_uint8, luminance, resize_bilinear, resize_nearest, to_uint8, warp_perspective
from .scenegen import SCENERY_ID_BASE
from .serial import digest_of

AUG_ORDER = (
    "contrast",
    "brightness",
    "enhancement",
    "random_background",
    "random_blend",
    "reflectance",
    "hist_equalize",
    "pasta",
    "snow",
    "shot_noise",
    "jpeg",
    "random_perspective",
    "large_scale_jitter",
    "pad_to_square",
)

_DEFAULTS: dict[str, tuple[float, dict]] = {
    "contrast": (0.25, {"lo": 0.5, "hi": 1.5}),
    "brightness": (0.25, {"lo": 0.5, "hi": 1.5}),
    "enhancement": (0.25, {"lo": 0.5, "hi": 1.5}),
    "random_background": (0.60, {}),
    "random_blend": (0.40, {"alpha_lo": 0.05, "alpha_hi": 0.12}),
    "reflectance": (0.20, {}),
    "hist_equalize": (0.40, {}),
    "pasta": (0.30, {"alpha": 3.0, "beta": 0.25, "k": 2.0}),
    "snow": (0.30, {"count_lo": 20, "count_hi": 80, "opacity": 0.7}),
    "shot_noise": (0.40, {"lam_lo": 25.0, "lam_hi": 200.0}),
    "jpeg": (0.30, {"q_lo": 10, "q_hi": 70}),
    "random_perspective": (0.45, {"max_jitter": 0.15}),
    "large_scale_jitter": (0.40, {"scale_lo": 0.1, "scale_hi": 2.0}),
    "pad_to_square": (1.0, {"target": 640}),
}


@dataclass(frozen=True)
class AugEntry:
    name: str
    probability: float
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AugmentationPlan:
    pipeline_probability: float = 0.8
    entries: tuple[AugEntry, ...] = ()

    @classmethod
    def default(cls) -> "AugmentationPlan":
        return cls(
            pipeline_probability=0.8,
            entries=tuple(AugEntry(n, p, dict(kw)) for n, (p, kw) in _DEFAULTS.items()),
        )

    def entry(self, name: str) -> AugEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise ConfigurationError(f"plan has no augmentation '{name}'")

    def with_probability(self, name: str, probability: float) -> "AugmentationPlan":
        entries = tuple(replace(e, probability=probability) if e.name == name else e for e in self.entries)
        return replace(self, entries=entries)

    def to_dict(self) -> dict:
        return {
            "pipeline_probability": self.pipeline_probability,
            "entries": {e.name: {"probability": e.probability, **e.params} for e in self.entries},
        }

    def digest(self) -> str:
        return digest_of(self.to_dict())


def load_plan(path) -> AugmentationPlan:
    """Default plan overlaid with per-entry probability/parameter overrides."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: plan must be a mapping")
    plan = AugmentationPlan.default()
    prob = float(raw.get("pipeline_probability", plan.pipeline_probability))
    if not 0.0 <= prob <= 1.0:
        raise ConfigurationError(f"{path}: pipeline_probability must be in [0, 1]")
    entries = []
    overrides = raw.get("entries", {})
    unknown = set(overrides) - set(AUG_ORDER)
    if unknown:
        raise ConfigurationError(f"{path}: unknown augmentations {sorted(unknown)}")
    for e in plan.entries:
        o = overrides.get(e.name)
        if o is None:
            entries.append(e)
            continue
        p = float(o.get("probability", e.probability))
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError(f"{path}: {e.name}.probability must be in [0, 1]")
        params = dict(e.params)
        params.update({k: v for k, v in o.items() if k != "probability"})
        entries.append(AugEntry(e.name, p, params))
    return AugmentationPlan(prob, tuple(entries))


# --------------------------------------------------------------------- types

@dataclass(frozen=True)
class BlendParams:
    alpha: float  # weight on the background image


@dataclass
class ReflectanceMap:
    """Positive RGB map, mean-normalized to 1.0 per channel."""

    values: np.ndarray

    @classmethod
    def from_image(cls, img: np.ndarray) -> "ReflectanceMap":
        v = np.clip(np.asarray(img, dtype=np.float64), 1e-4, None)
        v = v / v.reshape(-1, 3).mean(axis=0)
        return cls(v)


@dataclass(frozen=True)
class Homography:
    matrix: np.ndarray  # 3x3, h33 = 1

    @classmethod
    def from_corners(cls, src, dst) -> "Homography":
        """DLT solve mapping 4 source points to 4 destination points."""
        a = []
        b = []
        for (x, y), (u, v) in zip(src, dst):
            a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
            b.append(u)
            a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
            b.append(v)
        coeffs = np.linalg.solve(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
        h = np.append(coeffs, 1.0).reshape(3, 3)
        return cls(h)

    @property
    def invertible(self) -> bool:
        return abs(np.linalg.det(self.matrix)) > 1e-9

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        ones = np.ones((len(p), 1))
        q = np.concatenate([p, ones], axis=1) @ self.matrix.T
        return q[:, :2] / q[:, 2:3]


def foreground_mask(instance_mask: np.ndarray) -> np.ndarray:
    return (instance_mask > 0) & (instance_mask < SCENERY_ID_BASE)


# --------------------------------------------------------- photometric group

def contrast(img: np.ndarray, c: float) -> np.ndarray:
    if c == 1.0:
        return img.copy()
    mean = float(img.mean())
    return clamp01((img - mean) * c + mean)


def brightness(img: np.ndarray, b: float) -> np.ndarray:
    if b == 1.0:
        return img.copy()
    return clamp01(img * b)


def enhancement(img: np.ndarray, e: float) -> np.ndarray:
    """Saturation scale about the luminance axis (luminance preserving)."""
    if e == 1.0:
        return img.copy()
    lum = luminance(img)[..., None]
    return clamp01(lum + e * (img - lum))


def hist_equalize(img: np.ndarray) -> np.ndarray:
    """Equalize the luminance channel; chroma offsets ride along."""
    lum = luminance(img)
    q = np.clip((lum * 255.0 + 0.5).astype(np.int64), 0, 255)
    hist = np.bincount(q.ravel(), minlength=256)
    cdf = np.cumsum(hist) / q.size
    cdf_min = float(cdf[np.nonzero(hist)[0][0]])
    if cdf_min >= 1.0:
        return img.copy()
    mapped = (cdf[q] - cdf_min) / (1.0 - cdf_min)
    return clamp01(img + (mapped - lum)[..., None])


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    buf = io.BytesIO()
    PILImage.fromarray(to_uint8(img)).save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with PILImage.open(buf) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def shot_noise(img: np.ndarray, lam: float, rng: np.random.Generator) -> np.ndarray:
    return clamp01(rng.poisson(np.clip(img, 0.0, 1.0) * lam) / lam)


def snow(img: np.ndarray, rng: np.random.Generator, count: int, opacity: float = 0.7) -> np.ndarray:
    """White elliptical splats composited at fixed opacity."""
    h, w = img.shape[:2]
    out = img.copy()
    for _ in range(count):
        cx = rng.uniform(0, w)
        cy = rng.uniform(0, h)
        rx = rng.uniform(1.0, 4.0)
        ry = rx * rng.uniform(0.5, 1.0)
        theta = rng.uniform(0, np.pi)
        pad = int(np.ceil(max(rx, ry))) + 1
        x0, x1 = max(0, int(cx) - pad), min(w, int(cx) + pad + 1)
        y0, y1 = max(0, int(cy) - pad), min(h, int(cy) + pad + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1]
        dx = (xs + 0.5) - cx
        dy = (ys + 0.5) - cy
        ct, st = np.cos(theta), np.sin(theta)
        q = ((dx * ct + dy * st) / rx) ** 2 + ((-dx * st + dy * ct) / ry) ** 2
        m = np.clip(1.5 - q, 0.0, 1.0) * opacity
        out[y0:y1, x0:x1] = out[y0:y1, x0:x1] * (1 - m[..., None]) + m[..., None]
    return out


def photometric(img: np.ndarray, rng: np.random.Generator, kind: str, plan: AugmentationPlan | None = None) -> np.ndarray:
    """Sample the kind's configured range and apply it."""
    plan = plan or AugmentationPlan.default()
    p = plan.entry(kind).params
    if kind == "contrast":
        return contrast(img, rng.uniform(p["lo"], p["hi"]))
    if kind == "brightness":
        return brightness(img, rng.uniform(p["lo"], p["hi"]))
    if kind == "enhancement":
        return enhancement(img, rng.uniform(p["lo"], p["hi"]))
    if kind == "hist_equalize":
        return hist_equalize(img)
    if kind == "jpeg":
        return jpeg_roundtrip(img, int(rng.integers(p["q_lo"], p["q_hi"] + 1)))
    if kind == "shot_noise":
        return shot_noise(img, rng.uniform(p["lam_lo"], p["lam_hi"]), rng)
    if kind == "snow":
        return snow(img, rng, int(rng.integers(p["count_lo"], p["count_hi"] + 1)), p["opacity"])
    raise ConfigurationError(f"unknown photometric kind '{kind}'")


# --------------------------------------------------------- pixel-space blends

def random_background(img: np.ndarray, instance_mask: np.ndarray, bg: np.ndarray) -> np.ndarray:
    """Replace non-object pixels with the background image."""
    if bg.shape[:2] != img.shape[:2]:
        bg = resize_bilinear(bg, img.shape[:2])
    fg = foreground_mask(instance_mask)
    return np.where(fg[..., None], img, bg)


def random_blend(img: np.ndarray, bg: np.ndarray, alpha: float) -> np.ndarray:
    if bg.shape[:2] != img.shape[:2]:
        bg = resize_bilinear(bg, img.shape[:2])
    return alpha * bg + (1.0 - alpha) * img


def reflectance_multiply(img: np.ndarray, reflectance: ReflectanceMap | np.ndarray) -> np.ndarray:
    values = reflectance.values if isinstance(reflectance, ReflectanceMap) else np.asarray(reflectance)
    if values.shape[:2] != img.shape[:2]:
        values = resize_bilinear(values, img.shape[:2])
    return clamp01(img * values)


# -------------------------------------------------------------------- pasta

def pasta(img: np.ndarray, rng: np.random.Generator, alpha: float = 3.0, beta: float = 0.25, k: float = 2.0) -> np.ndarray:
    """Fourier amplitude jitter with variance growing at high frequency.

    Each half-spectrum coefficient is scaled by (1 + eps) with
    eps ~ N(0, sigma(f)), sigma(f) = alpha * (|f| / f_max)^k + beta; phase
    is untouched.
    """
    if alpha == 0.0 and beta == 0.0:
        return img.copy()
    h, w = img.shape[:2]
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    fn = np.sqrt(fy * fy + fx * fx)
    sigma = alpha * (fn / fn.max()) ** k + beta
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        spectrum = np.fft.rfft2(img[:, :, c])
        eps = rng.normal(0.0, 1.0, size=spectrum.shape) * sigma
        out[:, :, c] = np.fft.irfft2(spectrum * (1.0 + eps), s=(h, w))
    return clamp01(out)


# ------------------------------------------------------------- geometric ops

def _rederive(annotations: list[Annotation], mask: np.ndarray, min_pixels: int,
              amodal_transform) -> list[Annotation]:
    """Tight boxes from the transformed mask; drop vanished instances."""
    h, w = mask.shape
    out = []
    for ann in annotations:
        sel = mask == ann.instance_id
        count = int(np.count_nonzero(sel))
        if count == 0 or count < min_pixels:
            continue
        bbox = bbox_of_mask(sel)
        ax, ay, aw, ah = ann.bbox_amodal
        corners = np.array([[ax, ay], [ax + aw, ay], [ax + aw, ay + ah], [ax, ay + ah]])
        tc = amodal_transform(corners)
        x0 = float(np.clip(tc[:, 0].min(), 0, w))
        y0 = float(np.clip(tc[:, 1].min(), 0, h))
        x1 = float(np.clip(tc[:, 0].max(), 0, w))
        y1 = float(np.clip(tc[:, 1].max(), 0, h))
        amodal = (x0, y0, max(0.0, x1 - x0), max(0.0, y1 - y0))
        out.append(replace(ann, bbox_modal=bbox, bbox_amodal=amodal, pixel_count=count))
    return out


def random_perspective(
    img: np.ndarray,
    annotations: list[Annotation],
    instance_mask: np.ndarray,
    rng: np.random.Generator,
    max_jitter: float = 0.15,
    min_pixels: int = 16,
    corners: np.ndarray | None = None,
):
    """Warp by a corner-jitter homography; boxes follow the warped mask."""
    h, w = img.shape[:2]
    src = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
    if corners is None:
        d = rng.uniform(0.0, max_jitter)
        hom = None
        for _ in range(10):
            dst = src + np.stack(
                [rng.uniform(-d * w, d * w, size=4), rng.uniform(-d * h, d * h, size=4)], axis=1
            )
            cand = Homography.from_corners(src, dst)
            if cand.invertible:
                hom = cand
                break
        if hom is None:
            return img.copy(), list(annotations), instance_mask.copy()
    else:
        dst = np.asarray(corners, dtype=np.float64)
        hom = Homography.from_corners(src, dst)
        if not hom.invertible:
            raise ConfigurationError("degenerate corner set")
    if np.array_equal(dst, src):
        return img.copy(), list(annotations), instance_mask.copy()
    warped = warp_perspective(img, hom.matrix)
    mask = warp_perspective(instance_mask, hom.matrix, nearest=True, fill=0)
    anns = _rederive(annotations, mask, min_pixels, hom.apply)
    return warped, anns, mask


def large_scale_jitter(
    img: np.ndarray,
    annotations: list[Annotation],
    instance_mask: np.ndarray,
    rng: np.random.Generator,
    scale_lo: float = 0.1,
    scale_hi: float = 2.0,
    min_pixels: int = 1,
    scale: float | None = None,
    offset: tuple[int, int] | None = None,
):
    """Resize by a random factor, then crop (upscale) or zero-pad
    (downscale) back to the original canvas."""
    h, w = img.shape[:2]
    s = rng.uniform(scale_lo, scale_hi) if scale is None else scale
    nh, nw = max(1, round(h * s)), max(1, round(w * s))
    if (nh, nw) == (h, w):
        if offset is None or offset == (0, 0):
            return img.copy(), list(annotations), instance_mask.copy()
    ry, rx = nh / h, nw / w
    resized = resize_bilinear(img, (nh, nw))
    rmask = resize_nearest(instance_mask, (nh, nw))

    def span(n, orig, off):
        # returns (src_start, dst_start, length)
        if n >= orig:
            start = int(rng.integers(0, n - orig + 1)) if off is None else int(off)
            return start, 0, orig
        start = int(rng.integers(0, orig - n + 1)) if off is None else int(off)
        return 0, start, n

    oy = None if offset is None else offset[0]
    ox = None if offset is None else offset[1]
    sy, dy, lh = span(nh, h, oy)
    sx, dx, lw = span(nw, w, ox)
    out = np.zeros_like(img)
    out[dy:dy + lh, dx:dx + lw] = resized[sy:sy + lh, sx:sx + lw]
    mask = np.zeros_like(instance_mask)
    mask[dy:dy + lh, dx:dx + lw] = rmask[sy:sy + lh, sx:sx + lw]

    tx, ty = dx - sx, dy - sy
    anns = []
    for ann in annotations:
        x, y, bw, bh = ann.bbox_modal
        x0 = x * rx + tx
        y0 = y * ry + ty
        x1 = (x + bw) * rx + tx
        y1 = (y + bh) * ry + ty
        x0c, x1c = np.clip([x0, x1], 0, w)
        y0c, y1c = np.clip([y0, y1], 0, h)
        if x1c <= x0c or y1c <= y0c:
            continue
        count = int(np.count_nonzero(mask == ann.instance_id))
        if count < min_pixels:
            continue
        ax, ay, aw, ah = ann.bbox_amodal
        ax0, ax1 = np.clip([ax * rx + tx, (ax + aw) * rx + tx], 0, w)
        ay0, ay1 = np.clip([ay * ry + ty, (ay + ah) * ry + ty], 0, h)
        anns.append(
            replace(
                ann,
                bbox_modal=(float(x0c), float(y0c), float(x1c - x0c), float(y1c - y0c)),
                bbox_amodal=(float(ax0), float(ay0), float(max(0, ax1 - ax0)), float(max(0, ay1 - ay0))),
                pixel_count=count,
            )
        )
    return out, anns, mask


def pad_to_square(img: np.ndarray, annotations: list[Annotation], target: int = 640,
                  instance_mask: np.ndarray | None = None):
    """Place the image at the origin of a target x target zero canvas."""
    h, w = img.shape[:2]
    if target < max(h, w):
        raise ConfigurationError(f"pad_to_square target {target} smaller than image {w}x{h}")
    if (h, w) == (target, target):
        mask = instance_mask.copy() if instance_mask is not None else None
        return img.copy(), list(annotations), mask
    out = np.zeros((target, target) + img.shape[2:], dtype=img.dtype)
    out[:h, :w] = img
    mask = None
    if instance_mask is not None:
        mask = np.zeros((target, target), dtype=instance_mask.dtype)
        mask[:h, :w] = instance_mask
    return out, list(annotations), mask


# ------------------------------------------------------------------ pipeline

@dataclass
class AugmentationTrace:
    """What a pipeline run did: fired entries with their sampled params."""

    skipped: bool
    applied: list[tuple[str, dict]] = field(default_factory=list)
    instance_mask: np.ndarray | None = None

    @property
    def fired(self) -> set[str]:
        return {name for name, _ in self.applied}


def _pick(rng: np.random.Generator, corpus) -> np.ndarray:
    return corpus[int(rng.integers(len(corpus)))]


def apply_pipeline(
    img: np.ndarray,
    annotations: list[Annotation],
    instance_mask: np.ndarray,
    rng: np.random.Generator,
    plan: AugmentationPlan | None = None,
    backgrounds: list[np.ndarray] | None = None,
    reflectance_maps: list[ReflectanceMap] | None = None,
    min_pixels: int = 16,
):
    """Run the full augmentation pipeline on one image.

    Returns ``(image, annotations, trace)``; the trace records which
    entries fired (for provenance logs and calibration checks) and carries
    the final instance mask.
    """
    plan = plan or AugmentationPlan.default()
    needs_bg = any(e.name in ("random_background", "random_blend") and e.probability > 0 for e in plan.entries)
    needs_refl = any(e.name == "reflectance" and e.probability > 0 for e in plan.entries)
    if needs_bg and not backgrounds:
        raise ConfigurationError("background corpus required: random_background/random_blend enabled")
    if needs_refl and not reflectance_maps:
        raise ConfigurationError("reflectance corpus required: reflectance enabled")

    if rng.random() >= plan.pipeline_probability:
        return img.copy(), list(annotations), AugmentationTrace(skipped=True, instance_mask=instance_mask.copy())

    trace = AugmentationTrace(skipped=False)
    anns = list(annotations)
    mask = instance_mask
    by_name = {e.name: e for e in plan.entries}
    for name in AUG_ORDER:
        e = by_name.get(name)
        if e is None or rng.random() >= e.probability:
            continue
        p = e.params
        if name in ("contrast", "brightness", "enhancement"):
            factor = float(rng.uniform(p["lo"], p["hi"]))
            img = {"contrast": contrast, "brightness": brightness, "enhancement": enhancement}[name](img, factor)
            trace.applied.append((name, {"factor": factor}))
        elif name == "random_background":
            bg = _pick(rng, backgrounds)
            img = random_background(img, mask, bg)
            trace.applied.append((name, {}))
        elif name == "random_blend":
            alpha = float(rng.uniform(p["alpha_lo"], p["alpha_hi"]))
            img = random_blend(img, _pick(rng, backgrounds), alpha)
            trace.applied.append((name, {"alpha": alpha}))
        elif name == "reflectance":
            img = reflectance_multiply(img, _pick(rng, reflectance_maps))
            trace.applied.append((name, {}))
        elif name == "hist_equalize":
            img = hist_equalize(img)
            trace.applied.append((name, {}))
        elif name == "pasta":
            img = pasta(img, rng, p["alpha"], p["beta"], p["k"])
            trace.applied.append((name, {"alpha": p["alpha"], "beta": p["beta"], "k": p["k"]}))
        elif name == "snow":
            count = int(rng.integers(p["count_lo"], p["count_hi"] + 1))
            img = snow(img, rng, count, p["opacity"])
            trace.applied.append((name, {"count": count}))
        elif name == "shot_noise":
            lam = float(rng.uniform(p["lam_lo"], p["lam_hi"]))
            img = shot_noise(img, lam, rng)
            trace.applied.append((name, {"lam": lam}))
        elif name == "jpeg":
            q = int(rng.integers(p["q_lo"], p["q_hi"] + 1))
            img = jpeg_roundtrip(img, q)
            trace.applied.append((name, {"quality": q}))
        elif name == "random_perspective":
            img, anns, mask = random_perspective(img, anns, mask, rng, p["max_jitter"], min_pixels)
            trace.applied.append((name, {"max_jitter": p["max_jitter"]}))
        elif name == "large_scale_jitter":
            img, anns, mask = large_scale_jitter(img, anns, mask, rng, p["scale_lo"], p["scale_hi"])
            trace.applied.append((name, {}))
        elif name == "pad_to_square":
            target = max(int(p["target"]), img.shape[0], img.shape[1])
            img, anns, mask = pad_to_square(img, anns, target, mask)
            trace.applied.append((name, {"target": target}))
    trace.instance_mask = mask if mask is not instance_mask else mask.copy()
    return img, anns, trace


# ------------------------------------------------------------------- corpora

def load_background_corpus(directory) -> list[np.ndarray]:
    from pathlib import Path

    from .assets import load_image

    paths = sorted(
        p for p in Path(directory).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".npy")
    )
    if not paths:
        raise ConfigurationError(f"no images in background corpus {directory}")
    return [np.clip(load_image(p), 0.0, 1.0) for p in paths]


def load_reflectance_corpus(directory) -> list[ReflectanceMap]:
    from pathlib import Path

    from .assets import load_image

    paths = sorted(
        p for p in Path(directory).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".npy")
    )
    if not paths:
        raise ConfigurationError(f"no images in reflectance corpus {directory}")
    return [ReflectanceMap.from_image(load_image(p)) for p in paths]
