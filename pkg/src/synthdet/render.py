"""Direct-illumination CPU ray caster with ground-truth channels.

Renders a SceneConfig into RGB plus per-pixel instance ids and depth.
Geometry is compiled once per scene (triangles + BVH); shading happens in
vectorized numpy over hit pixels.  The instance/depth channels always use
pixel-center rays, so ground truth is independent of the stochastic RGB
sampling (ray jitter, subframes, secondary bounce).

The material model: emissive + ambient * albedo' + per-light Lambert
diffuse and normalized Blinn-Phong specular, where albedo' is the albedo
texture pushed through the randomized transform
``clamp(tint * (desaturate(albedo, d) * brightness + add))``.  The
Blinn-Phong exponent comes from roughness as ``2 / r^4 - 2`` clamped to
[1, 1e4]; the diffuse term is scaled by ``1 - metallic`` and the specular
color blends from white to albedo' with metallic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .bvh import BVH
from .errors import ConfigurationError
from .geometry import CameraBasis, transform_points, yaw_quaternion
from .imageops import clamp01, luminance, resize_bilinear
from .meshes import Mesh, make_box, make_quad
from .rng import stream_rng
from .scenegen import (
    ROOM_WALL_HEIGHT,
    SCENERY_ID_BASE,
    TABLE_SIZE,
    LightingSpec,
    MaterialParams,
    ObjectPose,
    PostFxParams,
    SceneConfig,
)

_FLOOR_COLOR = (0.62, 0.58, 0.52)
_WALL_COLOR = (0.75, 0.72, 0.68)
_CEILING_COLOR = (0.82, 0.82, 0.82)
_TABLE_COLOR = (0.55, 0.40, 0.28)
_SHADOW_EPS = 1e-5
HIDE_Z = 1.0e6


@dataclass(frozen=True)
class RenderSettings:
    subframe_count: int = 1
    rays_per_pixel: int = 1
    enable_secondary_bounce: bool = False
    jitter: bool | None = None  # None: on iff rays_per_pixel > 1 or subframes > 1

    def __post_init__(self):
        if self.subframe_count < 1 or self.rays_per_pixel < 1:
            raise ConfigurationError("subframe_count and rays_per_pixel must be >= 1")

    @property
    def jitter_active(self) -> bool:
        if self.jitter is None:
            return self.rays_per_pixel > 1 or self.subframe_count > 1
        return self.jitter


@dataclass
class RenderOutput:
    rgb: np.ndarray  # (h, w, 3) float in [0, 1]
    instance_map: np.ndarray  # (h, w) int32, 0 = background
    depth: np.ndarray  # (h, w) float meters, +inf = background


@dataclass
class CompiledInstance:
    instance_id: int
    asset_id: str
    tri_start: int
    tri_count: int
    verts_world: np.ndarray
    edges: np.ndarray
    texture: np.ndarray | None
    base_color: tuple[float, float, float]
    has_uv: bool
    is_distractor: bool
    is_scenery: bool


class SceneGeometry:
    """World-space triangles, BVH, and per-instance bookkeeping."""

    def __init__(self, instances, v0, v1, v2, tri_inst, tri_uv, mode: str):
        self.instances: list[CompiledInstance] = instances
        self.tri_inst = tri_inst
        self.tri_uv = tri_uv
        self.mode = mode
        self.bvh = BVH(v0, v1, v2) if len(v0) else None
        normals = np.cross(v1 - v0, v2 - v0)
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        lengths[lengths == 0] = 1.0
        self.tri_normal = normals / lengths
        self._v0, self._v1, self._v2 = v0, v1, v2
        self._solo: dict[int, BVH | None] = {}

    def instance_index(self, instance_id: int) -> int | None:
        for i, inst in enumerate(self.instances):
            if inst.instance_id == instance_id:
                return i
        return None

    def solo_bvh(self, index: int) -> BVH:
        bvh = self._solo.get(index)
        if bvh is None:
            inst = self.instances[index]
            s, n = inst.tri_start, inst.tri_count
            bvh = BVH(self._v0[s:s + n], self._v1[s:s + n], self._v2[s:s + n])
            self._solo = {index: bvh}
        return bvh


def _room_meshes(room) -> list[tuple[Mesh, tuple[float, float, float]]]:
    w, l, h = room.width, room.length, ROOM_WALL_HEIGHT
    pieces = [
        (make_quad((w, l), center=(0, 0, 0), normal_axis="z", name="floor"), _FLOOR_COLOR),
        (make_quad((w, h), center=(0, -l / 2, h / 2), normal_axis="y", name="wall_y-"), _WALL_COLOR),
        (make_quad((h, l), center=(w / 2, 0, h / 2), normal_axis="x", name="wall_x+"), _WALL_COLOR),
        (make_quad((w, h), center=(0, l / 2, h / 2), normal_axis="y", name="wall_y+"), _WALL_COLOR),
        (make_quad((h, l), center=(-w / 2, 0, h / 2), normal_axis="x", name="wall_x-"), _WALL_COLOR),
        (make_quad((w, l), center=(0, 0, h), normal_axis="z", name="ceiling"), _CEILING_COLOR),
        (
            make_box(
                (TABLE_SIZE[0], TABLE_SIZE[1], TABLE_SIZE[2]),
                center=(room.table_pose[0], room.table_pose[1], TABLE_SIZE[2] / 2),
                name="table",
            ),
            _TABLE_COLOR,
        ),
    ]
    return pieces


def compile_scene(scene: SceneConfig, store) -> SceneGeometry:
    """Resolve assets and flatten everything into world-space triangles.

    Instance ids follow the scene contract: dropped object i gets id i + 1;
    room surfaces, the table, and furniture take SCENERY_ID_BASE + k in the
    order floor, walls (y-, x+, y+, x-), ceiling, table, furniture.
    """
    instances: list[CompiledInstance] = []
    blocks_v0, blocks_v1, blocks_v2, blocks_inst, blocks_uv = [], [], [], [], []
    cursor = 0

    def add(instance_id, asset_id, mesh: Mesh, verts: np.ndarray, texture, base_color, is_distractor, is_scenery):
        nonlocal cursor
        faces = mesh.faces
        v0, v1, v2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
        has_uv = mesh.uvs is not None and mesh.face_uvs is not None and texture is not None
        uv = mesh.uvs[mesh.face_uvs] if has_uv else np.zeros((len(faces), 3, 2))
        instances.append(
            CompiledInstance(
                instance_id=instance_id,
                asset_id=asset_id,
                tri_start=cursor,
                tri_count=len(faces),
                verts_world=verts,
                edges=mesh.edges(),
                texture=texture,
                base_color=tuple(base_color),
                has_uv=has_uv,
                is_distractor=is_distractor,
                is_scenery=is_scenery,
            )
        )
        blocks_v0.append(v0)
        blocks_v1.append(v1)
        blocks_v2.append(v2)
        blocks_uv.append(uv)
        blocks_inst.append(np.full(len(faces), len(instances) - 1, dtype=np.int64))
        cursor += len(faces)

    for i, pose in enumerate(scene.object_poses):
        asset = store.mesh(pose.asset_id)
        verts = transform_points(asset.mesh.vertices, pose.position, pose.orientation)
        add(i + 1, pose.asset_id, asset.mesh, verts, asset.texture, asset.base_color, pose.is_distractor, False)

    if scene.room is not None:
        next_id = SCENERY_ID_BASE
        for mesh, color in _room_meshes(scene.room):
            add(next_id, mesh.name, mesh, mesh.vertices.copy(), None, color, False, True)
            next_id += 1
        for asset_id, x, y, yaw in scene.room.furniture_placements:
            asset = store.mesh(asset_id)
            lo, _hi = asset.mesh.bounds
            verts = transform_points(asset.mesh.vertices, (x, y, -float(lo[2])), yaw_quaternion(yaw))
            add(next_id, asset_id, asset.mesh, verts, asset.texture, asset.base_color, False, True)
            next_id += 1

    if blocks_v0:
        v0 = np.concatenate(blocks_v0)
        v1 = np.concatenate(blocks_v1)
        v2 = np.concatenate(blocks_v2)
        tri_inst = np.concatenate(blocks_inst)
        tri_uv = np.concatenate(blocks_uv)
    else:
        v0 = v1 = v2 = np.zeros((0, 3))
        tri_inst = np.zeros(0, dtype=np.int64)
        tri_uv = np.zeros((0, 3, 2))
    return SceneGeometry(instances, v0, v1, v2, tri_inst, tri_uv, scene.mode)


# ------------------------------------------------------------------- shading

def sample_hdri(env: np.ndarray, direction) -> np.ndarray:
    """Equirectangular lookup: u = atan2(dy, dx)/2pi + 0.5, v = acos(dz)/pi.

    ``direction`` may be a single unit vector or an (..., 3) array; returns
    matching (..., 3) colors with bilinear filtering (wrapping in u).
    """
    d = np.asarray(direction, dtype=np.float64)
    single = d.ndim == 1
    d = d.reshape(-1, 3)
    h, w = env.shape[:2]
    u = np.arctan2(d[:, 1], d[:, 0]) / (2.0 * math.pi) + 0.5
    v = np.arccos(np.clip(d[:, 2], -1.0, 1.0)) / math.pi
    x = u * w - 0.5
    y = np.clip(v * h - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    x0m = np.mod(x0, w)
    x1m = np.mod(x0 + 1, w)
    y1 = np.minimum(y0 + 1, h - 1)
    top = env[y0, x0m] * (1 - fx) + env[y0, x1m] * fx
    bot = env[y1, x0m] * (1 - fx) + env[y1, x1m] * fx
    out = top * (1 - fy) + bot * fy
    return out[0] if single else out.reshape(np.asarray(direction).shape)


def transformed_albedo(albedo: np.ndarray, material_fields: dict) -> np.ndarray:
    """Apply desaturate -> brightness -> add -> tint, then clamp."""
    d = material_fields["desat"]
    gray = luminance(albedo)[..., None]
    desat = albedo * (1.0 - d) + gray * d
    out = material_fields["tint"] * (desat * material_fields["brightness"] + material_fields["add"])
    return np.clip(out, 0.0, 1.0)


def _material_arrays(geom: SceneGeometry, materials: dict[int, MaterialParams]) -> dict:
    n = len(geom.instances)
    fields = {
        "desat": np.zeros((n, 1)),
        "add": np.zeros((n, 1)),
        "brightness": np.ones((n, 1)),
        "tint": np.ones((n, 3)),
        "roughness": np.full((n, 1), 0.6),
        "metallic": np.zeros((n, 1)),
        "specular": np.full((n, 1), 0.5),
        "emissive": np.zeros((n, 3)),
    }
    for i, inst in enumerate(geom.instances):
        m = materials.get(inst.instance_id)
        if m is None:
            continue
        fields["desat"][i] = m.albedo_desaturation
        fields["add"][i] = m.albedo_add
        fields["brightness"][i] = m.albedo_brightness
        fields["tint"][i] = m.diffuse_tint
        fields["roughness"][i] = m.roughness
        fields["metallic"][i] = m.metallic
        fields["specular"][i] = m.specular_level
        fields["emissive"][i] = m.emissive_color
    return fields


def _gather_albedo(geom: SceneGeometry, inst_idx: np.ndarray, tri: np.ndarray, bu: np.ndarray, bv: np.ndarray) -> np.ndarray:
    albedo = np.zeros((len(inst_idx), 3))
    for index in np.unique(inst_idx):
        inst = geom.instances[index]
        sel = inst_idx == index
        if inst.texture is None or not inst.has_uv:
            albedo[sel] = inst.base_color
            continue
        corners = geom.tri_uv[tri[sel]]  # (m, 3, 2)
        u = bu[sel][:, None]
        v = bv[sel][:, None]
        uv = corners[:, 0] * (1 - u - v) + corners[:, 1] * u + corners[:, 2] * v
        tex = inst.texture
        th, tw = tex.shape[:2]
        x = np.clip((uv[:, 0] % 1.0) * tw - 0.5, 0.0, tw - 1.0)
        y = np.clip((1.0 - uv[:, 1] % 1.0) * th - 0.5, 0.0, th - 1.0)
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        x1 = np.minimum(x0 + 1, tw - 1)
        y1 = np.minimum(y0 + 1, th - 1)
        fx = (x - x0)[:, None]
        fy = (y - y0)[:, None]
        top = tex[y0, x0] * (1 - fx) + tex[y0, x1] * fx
        bot = tex[y1, x0] * (1 - fx) + tex[y1, x1] * fx
        albedo[sel] = top * (1 - fy) + bot * fy
    return albedo


def _shade_points(points, normals, view, albedo, fields, idx, lighting: LightingSpec, geom: SceneGeometry | None):
    """Radiance for an array of surface points (unclamped).

    ``fields`` are per-instance arrays; ``idx`` maps points to instances.
    ``geom`` enables shadow rays; None means lights are unoccluded.
    """
    alb = transformed_albedo(albedo, {k: fields[k][idx] for k in ("desat", "tint", "brightness", "add")})
    metallic = fields["metallic"][idx]
    roughness = fields["roughness"][idx]
    spec_level = fields["specular"][idx]
    emissive = fields["emissive"][idx]
    out = emissive + lighting.ambient_intensity * alb
    if not lighting.point_lights:
        return out, alb
    exponent = np.clip(2.0 / np.maximum(roughness, 1e-6) ** 4 - 2.0, 1.0, 1.0e4)
    spec_color = (1.0 - metallic) + metallic * alb
    for light_pos, intensity, color in lighting.point_lights:
        offset = np.asarray(light_pos) - points
        dist = np.linalg.norm(offset, axis=1, keepdims=True)
        ldir = offset / np.maximum(dist, 1e-12)
        ndotl = np.maximum(np.einsum("ij,ij->i", normals, ldir)[:, None], 0.0)
        falloff = np.asarray(color) * (intensity / np.maximum(dist, 1e-6) ** 2)
        visible = 1.0
        if geom is not None and geom.bvh is not None:
            occ = geom.bvh.occluded(points + normals * _SHADOW_EPS, ldir, (dist - 1e-4).ravel())
            visible = (~occ).astype(np.float64)[:, None]
        half = ldir + view
        half /= np.maximum(np.linalg.norm(half, axis=1, keepdims=True), 1e-12)
        ndoth = np.maximum(np.einsum("ij,ij->i", normals, half)[:, None], 0.0)
        diffuse = (1.0 - metallic) * alb / math.pi
        specular = spec_level * spec_color * (exponent + 2.0) / (2.0 * math.pi) * ndoth ** exponent
        out = out + visible * (diffuse + specular) * ndotl * falloff
    return out, alb


@dataclass
class Hit:
    """A single surface interaction, for shading in isolation."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    view_dir: tuple[float, float, float] = (0.0, 0.0, 1.0)  # unit, surface -> eye
    albedo: tuple[float, float, float] = (1.0, 1.0, 1.0)


def shade(hit: Hit, material: MaterialParams, lighting: LightingSpec) -> np.ndarray:
    """Radiance of one hit under the standard material model (no shadows)."""
    arrays = {
        "desat": np.array([[material.albedo_desaturation]]),
        "add": np.array([[material.albedo_add]]),
        "brightness": np.array([[material.albedo_brightness]]),
        "tint": np.array([list(material.diffuse_tint)]),
        "roughness": np.array([[material.roughness]]),
        "metallic": np.array([[material.metallic]]),
        "specular": np.array([[material.specular_level]]),
        "emissive": np.array([list(material.emissive_color)]),
    }
    out, _ = _shade_points(
        np.array([hit.point], dtype=np.float64),
        np.array([hit.normal], dtype=np.float64),
        np.array([hit.view_dir], dtype=np.float64),
        np.array([hit.albedo], dtype=np.float64),
        arrays,
        np.zeros(1, dtype=np.int64),
        lighting,
        None,
    )
    return out[0]


# ------------------------------------------------------------------ rendering

def _camera_for(scene: SceneConfig) -> CameraBasis:
    cam = scene.camera
    return CameraBasis(cam.position, cam.look_at, cam.vertical_fov, cam.resolution)


def _background(geom: SceneGeometry, store, scene: SceneConfig, dirs: np.ndarray) -> np.ndarray:
    if geom.mode == "hdri" and store is not None and len(store.hdris):
        env = store.hdri(scene.lighting.hdri_id % len(store.hdris)).image
        return np.clip(sample_hdri(env, dirs), 0.0, 1.0)
    return np.zeros_like(dirs)


def _trace_shade(geom: SceneGeometry, store, scene: SceneConfig, camera: CameraBasis, dirs: np.ndarray,
                 fields: dict, rng: np.random.Generator, settings: RenderSettings) -> np.ndarray:
    h, w = camera.height, camera.width
    flat_dirs = dirs.reshape(-1, 3)
    origins = np.broadcast_to(camera.position, flat_dirs.shape)
    rgb = _background(geom, store, scene, dirs).reshape(-1, 3).copy()
    if geom.bvh is None:
        return rgb.reshape(h, w, 3)
    t, tri, bu, bv = geom.bvh.trace(origins, flat_dirs)
    hit = tri >= 0
    if not np.any(hit):
        return rgb.reshape(h, w, 3)
    ht = t[hit][:, None]
    hdirs = flat_dirs[hit]
    points = camera.position + hdirs * ht
    normals = geom.tri_normal[tri[hit]]
    flip = np.einsum("ij,ij->i", normals, hdirs) > 0
    normals = np.where(flip[:, None], -normals, normals)
    idx = geom.tri_inst[tri[hit]]
    albedo = _gather_albedo(geom, idx, tri[hit], bu[hit], bv[hit])
    radiance, alb = _shade_points(points, normals, -hdirs, albedo, fields, idx, scene.lighting, geom)
    if settings.enable_secondary_bounce:
        radiance = radiance + _bounce(geom, store, scene, points, normals, alb, fields, idx, rng)
    rgb[hit] = radiance
    return rgb.reshape(h, w, 3)


def _bounce(geom, store, scene, points, normals, alb, fields, idx, rng):
    """One cosine-weighted indirect sample: environment light and emitters."""
    n = len(points)
    u1 = rng.random(n)
    u2 = rng.random(n)
    r = np.sqrt(u1)
    phi = 2 * math.pi * u2
    local = np.stack([r * np.cos(phi), r * np.sin(phi), np.sqrt(1.0 - u1)], axis=1)
    # orthonormal basis around each normal
    helper = np.where(np.abs(normals[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    tang = np.cross(helper, normals)
    tang /= np.maximum(np.linalg.norm(tang, axis=1, keepdims=True), 1e-12)
    bitan = np.cross(normals, tang)
    dirs = local[:, 0:1] * tang + local[:, 1:2] * bitan + local[:, 2:3] * normals
    t, tri, _bu, _bv = geom.bvh.trace(points + normals * _SHADOW_EPS, dirs)
    incoming = np.zeros((n, 3))
    miss = tri < 0
    if geom.mode == "hdri" and store is not None and len(store.hdris) and np.any(miss):
        env = store.hdri(scene.lighting.hdri_id % len(store.hdris)).image
        incoming[miss] = sample_hdri(env, dirs[miss])
    hit = ~miss
    if np.any(hit):
        hit_idx = geom.tri_inst[tri[hit]]
        incoming[hit] = fields["emissive"][hit_idx] + scene.lighting.ambient_intensity * 0.5
    return (1.0 - fields["metallic"][idx]) * alb * incoming


def render(scene: SceneConfig, store, settings: RenderSettings = RenderSettings(), seed: int = 0,
           geom: SceneGeometry | None = None) -> RenderOutput:
    """Render one frame: shaded RGB plus center-ray instance ids and depth."""
    if geom is None:
        geom = compile_scene(scene, store)
    camera = _camera_for(scene)
    h, w = camera.height, camera.width

    center_dirs = camera.ray_directions()
    flat = center_dirs.reshape(-1, 3)
    instance_map = np.zeros(h * w, dtype=np.int32)
    depth = np.full(h * w, np.inf)
    if geom.bvh is not None:
        origins = np.broadcast_to(camera.position, flat.shape)
        t, tri, _u, _v = geom.bvh.trace(origins, flat)
        hit = tri >= 0
        ids = np.array([inst.instance_id for inst in geom.instances], dtype=np.int32)
        instance_map[hit] = ids[geom.tri_inst[tri[hit]]]
        depth[hit] = t[hit]

    rgb = _render_rgb(geom, store, scene, camera, settings, stream_rng(seed, "subframe", 0))
    return RenderOutput(rgb=rgb, instance_map=instance_map.reshape(h, w), depth=depth.reshape(h, w))


def _render_rgb(geom, store, scene, camera, settings, rng) -> np.ndarray:
    fields = _material_arrays(geom, scene.materials)
    h, w = camera.height, camera.width
    acc = np.zeros((h, w, 3))
    for _ in range(settings.rays_per_pixel):
        jitter = rng.uniform(-0.5, 0.5, size=(h, w, 2)) if settings.jitter_active else None
        dirs = camera.ray_directions(jitter)
        acc += _trace_shade(geom, store, scene, camera, dirs, fields, rng, settings)
    return clamp01(acc / settings.rays_per_pixel)


def accumulate_subframes(scene: SceneConfig, store, settings: RenderSettings, seed: int = 0,
                         geom: SceneGeometry | None = None) -> np.ndarray:
    """Mean RGB over ``subframe_count`` independently jittered renders."""
    if geom is None:
        geom = compile_scene(scene, store)
    camera = _camera_for(scene)
    frames = [
        _render_rgb(geom, store, scene, camera, settings, stream_rng(seed, "subframe", s))
        for s in range(settings.subframe_count)
    ]
    return np.mean(frames, axis=0)


def render_frame(scene: SceneConfig, store, settings: RenderSettings = RenderSettings(), seed: int = 0,
                 geom: SceneGeometry | None = None) -> RenderOutput:
    """Full frame pipeline: render, subframe accumulation, post effects."""
    if geom is None:
        geom = compile_scene(scene, store)
    out = render(scene, store, settings, seed=seed, geom=geom)
    if settings.subframe_count > 1:
        out.rgb = accumulate_subframes(scene, store, settings, seed=seed, geom=geom)
    out.rgb = apply_postfx(out.rgb, scene.postfx, stream_rng(seed, scene.frame_index, "postfx"))
    return out


def geometry_instance_mask(geom: SceneGeometry, camera: CameraBasis, index: int) -> np.ndarray:
    """Center-ray hit mask of a single instance rendered alone."""
    bvh = geom.solo_bvh(index)
    dirs = camera.ray_directions().reshape(-1, 3)
    origins = np.broadcast_to(camera.position, dirs.shape)
    _t, tri, _u, _v = bvh.trace(origins, dirs)
    return (tri >= 0).reshape(camera.height, camera.width)


# -------------------------------------------------------------- post effects

def apply_postfx(rgb: np.ndarray, fx: PostFxParams, rng: np.random.Generator) -> np.ndarray:
    """Enabled effects in order: TV noise, scan lines, vertical lines,
    splotches, film grain, vignetting.  No enabled effects -> exact copy."""
    if not (fx.tv_noise or fx.scan_lines or fx.vertical_lines or fx.splotches or fx.film_grain or fx.vignetting):
        return rgb.copy()
    h, w = rgb.shape[:2]
    img = rgb.astype(np.float64, copy=True)
    if fx.tv_noise:
        img += rng.normal(0.0, 0.06, size=(h, w, 1))
    if fx.scan_lines:
        spacing = max(2, int(round(fx.scan_line_spread * h * 0.125)))
        phase = int(rng.integers(spacing))
        rows = (np.arange(h) + phase) % spacing == 0
        img[rows] *= 0.65
    if fx.vertical_lines:
        spacing = 7
        phase = int(rng.integers(spacing))
        cols = (np.arange(w) + phase) % spacing == 0
        img[:, cols] *= 0.65
    if fx.splotches:
        count = int(rng.integers(3, 9))
        ys, xs = np.mgrid[0:h, 0:w]
        for _ in range(count):
            cx = rng.uniform(0, w)
            cy = rng.uniform(0, h)
            radius_x = rng.uniform(0.02, 0.12) * w
            radius_y = rng.uniform(0.02, 0.12) * h
            darkness = rng.uniform(0.35, 0.7)
            q = ((xs - cx) / radius_x) ** 2 + ((ys - cy) / radius_y) ** 2
            m = np.clip((1.2 - q) / 0.4, 0.0, 1.0)
            img *= (1.0 - m * (1.0 - darkness))[..., None]
    if fx.film_grain and fx.grain_amount > 0:
        cell = 1.0 + 2.0 * fx.grain_size
        gh = max(2, int(math.ceil(h / cell)))
        gw = max(2, int(math.ceil(w / cell)))
        mono = resize_bilinear(rng.normal(size=(gh, gw)), (h, w))[..., None]
        chroma = resize_bilinear(rng.normal(size=(gh, gw, 3)), (h, w))
        noise = (1.0 - fx.color_amount) * mono + fx.color_amount * chroma
        img += fx.grain_amount * noise
    if fx.vignetting:
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        ys, xs = np.mgrid[0:h, 0:w]
        r2 = ((xs - cx) ** 2 + (ys - cy) ** 2) / (cx**2 + cy**2)
        img *= (1.0 - 0.4 * r2)[..., None]
    return clamp01(img)


# ------------------------------------------------------------ visibility hack

def hide_offscreen(pose: ObjectPose) -> ObjectPose:
    """Park the object at z = 1e6 m so it renders to nothing; cheaper than
    tearing the asset down and recreating it."""
    if pose.hidden_from is not None:
        return pose
    x, y, _z = pose.position
    return replace(pose, position=(x, y, HIDE_Z), hidden_from=pose.position)


def unhide_offscreen(pose: ObjectPose) -> ObjectPose:
    if pose.hidden_from is None:
        raise ValueError("pose is not hidden")
    return replace(pose, position=pose.hidden_from, hidden_from=None)
