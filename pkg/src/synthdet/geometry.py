"""Small 3D helpers: quaternions, world-space AABBs, pinhole cameras.

Conventions: world is z-up, positions in meters, quaternions are
``(w, x, y, z)`` and unit length, image rows grow downward.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------- quaternions

def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q)


def random_unit_quaternion(rng: np.random.Generator) -> tuple[float, float, float, float]:
    """Uniform over SO(3) via a normalized 4D Gaussian."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return (float(q[0]), float(q[1]), float(q[2]), float(q[3]))


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def yaw_quaternion(yaw: float) -> tuple[float, float, float, float]:
    """Rotation about +z by ``yaw`` radians."""
    return (math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0))


def transform_points(points: np.ndarray, position, orientation) -> np.ndarray:
    """Rotate by ``orientation`` then translate by ``position``."""
    rot = quat_to_matrix(orientation)
    return np.asarray(points, dtype=np.float64) @ rot.T + np.asarray(position, dtype=np.float64)


# ----------------------------------------------------------------------- AABB

def rotated_aabb(local_min, local_max, orientation) -> tuple[np.ndarray, np.ndarray]:
    """World-axis-aligned bounds of a rotated local AABB (position excluded)."""
    lo = np.asarray(local_min, dtype=np.float64)
    hi = np.asarray(local_max, dtype=np.float64)
    corners = np.array([[lo[i] if (k >> i) & 1 == 0 else hi[i] for i in range(3)] for k in range(8)])
    rot = quat_to_matrix(orientation)
    world = corners @ rot.T
    return world.min(axis=0), world.max(axis=0)


def aabb_overlap_volume(min_a, max_a, min_b, max_b) -> float:
    lo = np.maximum(np.asarray(min_a), np.asarray(min_b))
    hi = np.minimum(np.asarray(max_a), np.asarray(max_b))
    ext = np.clip(hi - lo, 0.0, None)
    return float(ext[0] * ext[1] * ext[2])


# --------------------------------------------------------------------- camera

class CameraBasis:
    """Pinhole camera with a vertical FOV; rays through pixel centers.

    Continuous image coordinates run over ``[0, w] x [0, h]`` with pixel
    ``(col, row)`` covering the unit square anchored at ``(col, row)``;
    its center is ``(col + 0.5, row + 0.5)``.  ``project`` is the exact
    inverse of ``ray_directions`` on that grid.
    """

    def __init__(self, position, look_at, vertical_fov: float, resolution: tuple[int, int]):
        self.position = np.asarray(position, dtype=np.float64)
        look_at = np.asarray(look_at, dtype=np.float64)
        forward = look_at - self.position
        norm = np.linalg.norm(forward)
        if norm < 1e-12:
            raise ValueError("camera position and look_at coincide")
        forward /= norm
        up_hint = np.array([0.0, 0.0, 1.0])
        if abs(forward @ up_hint) > 0.999:
            up_hint = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, up_hint)
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        self.forward, self.right, self.up = forward, right, up
        self.width, self.height = int(resolution[0]), int(resolution[1])
        self.tan_half = math.tan(vertical_fov / 2.0)

    def _scale(self) -> float:
        # pixels per unit of camera-plane offset
        return self.height / (2.0 * self.tan_half)

    def ray_directions(self, jitter: np.ndarray | None = None) -> np.ndarray:
        """Unit directions for every pixel, shape (h, w, 3).

        ``jitter`` is an optional (h, w, 2) offset in [-0.5, 0.5) added to
        the pixel-center sample position.
        """
        w, h = self.width, self.height
        cols, rows = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
        px = cols + 0.5
        py = rows + 0.5
        if jitter is not None:
            px = px + jitter[..., 0]
            py = py + jitter[..., 1]
        s = self._scale()
        sx = (px - w / 2.0) / s
        sy = (py - h / 2.0) / s
        dirs = (
            self.forward[None, None, :]
            + sx[..., None] * self.right[None, None, :]
            - sy[..., None] * self.up[None, None, :]
        )
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        return dirs

    def project(self, points: np.ndarray, near: float = 1e-6):
        """Project world points to continuous image coordinates.

        Returns ``(xy, depth)`` where ``xy`` has shape (n, 2); points with
        camera-space depth <= ``near`` get depth <= 0 and undefined xy.
        """
        d = np.asarray(points, dtype=np.float64) - self.position
        z = d @ self.forward
        s = self._scale()
        with np.errstate(divide="ignore", invalid="ignore"):
            x = (d @ self.right) / z * s + self.width / 2.0
            y = -(d @ self.up) / z * s + self.height / 2.0
        return np.stack([x, y], axis=-1), z

    def clip_to_camera_plane(self, vertices: np.ndarray, edges: np.ndarray, near: float = 1e-4) -> np.ndarray:
        """Vertices in front of the camera, plus edge crossings of the
        near plane, so projected extents of partly-behind geometry are safe."""
        d = vertices - self.position
        z = d @ self.forward
        front = vertices[z > near]
        a, b = edges[:, 0], edges[:, 1]
        za, zb = z[a], z[b]
        crossing = (za > near) != (zb > near)
        if np.any(crossing):
            t = (near - za[crossing]) / (zb[crossing] - za[crossing])
            pts = vertices[a[crossing]] + t[:, None] * (vertices[b[crossing]] - vertices[a[crossing]])
            front = np.concatenate([front, pts], axis=0) if len(front) else pts
        return front
