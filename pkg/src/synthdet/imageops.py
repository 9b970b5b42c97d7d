"""Array image primitives with explicit sampling semantics.

All images are float arrays in [0, 1], shape (h, w, 3) or (h, w).
Resampling maps destination pixel centers to source coordinates via
``src = (dst + 0.5) / scale - 0.5`` (center-aligned), which keeps
bounding-box arithmetic and mask extents consistent after a resize.
"""

from __future__ import annotations

import numpy as np


def clamp01(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64) / 255.0


def _source_coords(dst_len: int, src_len: int) -> np.ndarray:
    scale = dst_len / src_len
    return (np.arange(dst_len, dtype=np.float64) + 0.5) / scale - 0.5


def resize_bilinear(img: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    h, w = img.shape[:2]
    oh, ow = out_hw
    if (oh, ow) == (h, w):
        return img.copy()
    ys = np.clip(_source_coords(oh, h), 0.0, h - 1.0)
    xs = np.clip(_source_coords(ow, w), 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if img.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = img[y0[:, None], x0[None, :]] * (1 - fx) + img[y0[:, None], x1[None, :]] * fx
    bot = img[y1[:, None], x0[None, :]] * (1 - fx) + img[y1[:, None], x1[None, :]] * fx
    return top * (1 - fy) + bot * fy


def resize_nearest(img: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    h, w = img.shape[:2]
    oh, ow = out_hw
    if (oh, ow) == (h, w):
        return img.copy()
    ys = np.clip(np.rint(_source_coords(oh, h)).astype(np.int64), 0, h - 1)
    xs = np.clip(np.rint(_source_coords(ow, w)).astype(np.int64), 0, w - 1)
    return img[ys[:, None], xs[None, :]]


def warp_perspective(img: np.ndarray, hmat: np.ndarray, out_hw: tuple[int, int] | None = None,
                     nearest: bool = False, fill: float = 0.0) -> np.ndarray:
    """Warp by homography ``hmat`` (maps source coords -> destination coords).

    Coordinates are continuous pixel positions, (x, y) with pixel centers at
    half-integers.  Out-of-source samples take ``fill``.
    """
    h, w = img.shape[:2]
    oh, ow = out_hw if out_hw is not None else (h, w)
    inv = np.linalg.inv(hmat)
    xs, ys = np.meshgrid(np.arange(ow, dtype=np.float64) + 0.5, np.arange(oh, dtype=np.float64) + 0.5)
    denom = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / denom - 0.5
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / denom - 0.5
    if nearest:
        xi = np.rint(sx).astype(np.int64)
        yi = np.rint(sy).astype(np.int64)
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xi = np.clip(xi, 0, w - 1)
        yi = np.clip(yi, 0, h - 1)
        out = img[yi, xi]
        out = np.where(valid if img.ndim == 2 else valid[..., None], out, fill)
        return out.astype(img.dtype) if img.dtype.kind in "iu" else out
    valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    sxc = np.clip(sx, 0.0, w - 1.0)
    syc = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sxc).astype(np.int64)
    y0 = np.floor(syc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sxc - x0
    fy = syc - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
        valid = valid[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return np.where(valid, top * (1 - fy) + bot * fy, fill)


def luminance(img: np.ndarray) -> np.ndarray:
    return img[..., 0] * 0.2126 + img[..., 1] * 0.7152 + img[..., 2] * 0.0722


def bbox_of_mask(mask: np.ndarray) -> tuple[float, float, float, float] | None:
    """Tight (x, y, w, h) around true pixels; None for an empty mask."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    return (float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))
