"""Indexed triangle meshes: primitives and Wavefront OBJ round-tripping.

One material per mesh; UVs are optional and per-vertex-reference (OBJ
``f v/vt`` style).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssetError


@dataclass
class Mesh:
    vertices: np.ndarray  # (n, 3) float64
    faces: np.ndarray  # (k, 3) int32 vertex indices
    uvs: np.ndarray | None = None  # (m, 2) float64
    face_uvs: np.ndarray | None = None  # (k, 3) int32 into uvs
    name: str = "mesh"

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int32).reshape(-1, 3)
        if self.uvs is not None:
            self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        if self.face_uvs is not None:
            self.face_uvs = np.asarray(self.face_uvs, dtype=np.int32).reshape(-1, 3)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def validate(self, name: str | None = None) -> None:
        """Raise AssetError on non-finite vertices or out-of-range indices."""
        label = name or self.name
        if len(self.vertices) == 0 or len(self.faces) == 0:
            raise AssetError(f"mesh '{label}': empty geometry")
        if not np.all(np.isfinite(self.vertices)):
            raise AssetError(f"mesh '{label}': non-finite vertex coordinates")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise AssetError(f"mesh '{label}': face index out of range")
        if self.face_uvs is not None:
            if self.uvs is None or self.face_uvs.min() < 0 or self.face_uvs.max() >= len(self.uvs):
                raise AssetError(f"mesh '{label}': uv index out of range")

    def edges(self) -> np.ndarray:
        """Unique undirected edges, shape (e, 2)."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)


# ----------------------------------------------------------------- primitives

def make_box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), name: str = "box") -> Mesh:
    sx, sy, sz = (s / 2.0 for s in size)
    cx, cy, cz = center
    corners = np.array(
        [[x, y, z] for z in (-sz, sz) for y in (-sy, sy) for x in (-sx, sx)],
        dtype=np.float64,
    ) + np.array([cx, cy, cz])
    # two triangles per face, outward winding
    quads = [
        (0, 1, 3, 2),  # bottom (z-)
        (4, 6, 7, 5),  # top (z+)
        (0, 4, 5, 1),  # y-
        (2, 3, 7, 6),  # y+
        (0, 2, 6, 4),  # x-
        (1, 5, 7, 3),  # x+
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    face_uvs = np.array([[0, 1, 2], [0, 2, 3]] * 6, dtype=np.int32)
    return Mesh(corners, np.array(faces), uvs, face_uvs, name=name)


def make_quad(size=(1.0, 1.0), center=(0.0, 0.0, 0.0), normal_axis: str = "z", flip: bool = False, name: str = "quad") -> Mesh:
    """Flat rectangle in the plane perpendicular to ``normal_axis``."""
    hx, hy = size[0] / 2.0, size[1] / 2.0
    pts2 = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]], dtype=np.float64)
    verts = np.zeros((4, 3))
    axes = {"x": (1, 2, 0), "y": (0, 2, 1), "z": (0, 1, 2)}[normal_axis]
    verts[:, axes[0]] = pts2[:, 0]
    verts[:, axes[1]] = pts2[:, 1]
    verts += np.asarray(center, dtype=np.float64)
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    if flip:
        faces = faces[:, ::-1]
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    face_uvs = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    return Mesh(verts, faces, uvs, face_uvs, name=name)


def make_uv_sphere(radius: float = 0.5, rings: int = 12, segments: int = 18, center=(0.0, 0.0, 0.0), name: str = "sphere") -> Mesh:
    verts, uvs = [], []
    for i in range(rings + 1):
        theta = math.pi * i / rings
        for j in range(segments + 1):
            phi = 2.0 * math.pi * j / segments
            verts.append(
                (
                    center[0] + radius * math.sin(theta) * math.cos(phi),
                    center[1] + radius * math.sin(theta) * math.sin(phi),
                    center[2] + radius * math.cos(theta),
                )
            )
            uvs.append((j / segments, i / rings))
    faces = []
    cols = segments + 1
    for i in range(rings):
        for j in range(segments):
            a = i * cols + j
            b = a + 1
            c = a + cols
            d = c + 1
            if i > 0:
                faces.append((a, c, b))
            if i < rings - 1:
                faces.append((b, c, d))
    faces = np.array(faces, dtype=np.int32)
    return Mesh(np.array(verts), faces, np.array(uvs), faces.copy(), name=name)


# ------------------------------------------------------------------- OBJ I/O

def save_obj(mesh: Mesh, path) -> None:
    lines = [f"o {mesh.name}"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    has_uv = mesh.uvs is not None and mesh.face_uvs is not None
    if has_uv:
        for t in mesh.uvs:
            lines.append(f"vt {t[0]:.9g} {t[1]:.9g}")
    for k, f in enumerate(mesh.faces):
        if has_uv:
            fu = mesh.face_uvs[k]
            lines.append("f " + " ".join(f"{f[i] + 1}/{fu[i] + 1}" for i in range(3)))
        else:
            lines.append("f " + " ".join(str(f[i] + 1) for i in range(3)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_obj(path, name: str | None = None) -> Mesh:
    """Parse v/vt/f records; polygons are triangulated as fans."""
    verts, uvs, faces, face_uvs = [], [], [], []
    any_uv = False
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as e:
        from .errors import AssetIOError

        raise AssetIOError(f"cannot open mesh file: {path}") from e
    with fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif tag == "f":
                refs = []
                for token in parts[1:]:
                    fields = token.split("/")
                    vi = int(fields[0])
                    ti = int(fields[1]) if len(fields) > 1 and fields[1] else 0
                    refs.append((vi, ti))
                for i in range(1, len(refs) - 1):
                    tri = (refs[0], refs[i], refs[i + 1])
                    faces.append([r[0] - 1 if r[0] > 0 else len(verts) + r[0] for r in tri])
                    fu = [r[1] - 1 if r[1] > 0 else (len(uvs) + r[1] if r[1] < 0 else -1) for r in tri]
                    face_uvs.append(fu)
                    if any(t >= 0 for t in fu):
                        any_uv = True
    if not verts or not faces:
        raise AssetError(f"mesh '{path}': no geometry parsed")
    mesh = Mesh(
        np.array(verts, dtype=np.float64),
        np.array(faces, dtype=np.int32),
        np.array(uvs, dtype=np.float64) if (uvs and any_uv) else None,
        np.array(face_uvs, dtype=np.int32) if (uvs and any_uv) else None,
        name=name or str(path),
    )
    if mesh.face_uvs is not None and (mesh.face_uvs < 0).any():
        # mixed v/vt usage: drop uvs rather than guess
        mesh.uvs, mesh.face_uvs = None, None
    mesh.validate(name or str(path))
    return mesh
