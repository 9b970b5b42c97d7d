"""Randomized scene sampling: rooms, object drops, cameras, schedules.

Two scene flavors exist.  Table mode builds a procedural room (floor,
walls, ceiling, center table, perimeter furniture) and drops objects on
the table; HDRI-drop mode drops objects inside an invisible 1x1 m
enclosure onto an invisible ground plane in front of an environment map.

Scenes refresh on a fixed cadence: the room and object clutter every
3000 frames, the environment map every 2000, material parameters every
20, and the camera, ambient intensity, and post-processing toggles every
frame.  All sampling is keyed by (seed, epoch-or-frame, subsystem) so any
frame can be produced independently; see :mod:`synthdet.rng`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import (
    DEFAULT_CONFIG,
    HDRI_PERIOD,
    MATERIAL_PERIOD,
    SCENE_PERIOD,
    RandomizationConfig,
)
from .errors import ConfigurationError
from .geometry import random_unit_quaternion, rotated_aabb
from .rng import stream_rng
from .serial import digest_of

MODES = ("table", "hdri")

# Instance ids for dropped objects are 1..N; room surfaces, the table and
# furniture live at SCENERY_ID_BASE+ so they stay out of annotations while
# still satisfying the instance/depth consistency contract.
SCENERY_ID_BASE = 32768

TABLE_SIZE = (1.0, 1.0, 0.75)  # x, y extents and top height, meters
ROOM_WALL_HEIGHT = 3.0
FURNITURE_CLEARANCE = 0.1


# ---------------------------------------------------------------------- types

@dataclass(frozen=True)
class RoomSpec:
    width: float
    length: float
    furniture_placements: tuple[tuple[str, float, float, float], ...]  # (asset, x, y, yaw)
    table_pose: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "length": self.length,
            "furniture": [list(p) for p in self.furniture_placements],
            "table_pose": list(self.table_pose),
        }


@dataclass(frozen=True)
class ObjectPose:
    asset_id: str
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]  # unit quaternion (w, x, y, z)
    is_distractor: bool = False
    hidden_from: tuple[float, float, float] | None = None

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "position": list(self.position),
            "orientation": list(self.orientation),
            "is_distractor": self.is_distractor,
        }


@dataclass(frozen=True)
class CameraSpec:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    vertical_fov: float  # radians
    resolution: tuple[int, int] = (640, 480)

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "look_at": list(self.look_at),
            "vertical_fov": self.vertical_fov,
            "resolution": list(self.resolution),
        }


@dataclass(frozen=True)
class MaterialParams:
    albedo_desaturation: float = 0.0
    albedo_add: float = 0.0
    albedo_brightness: float = 1.0
    diffuse_tint: tuple[float, float, float] = (1.0, 1.0, 1.0)
    roughness: float = 0.6
    metallic: float = 0.0
    specular_level: float = 0.5
    emissive_color: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "albedo_desaturation": self.albedo_desaturation,
            "albedo_add": self.albedo_add,
            "albedo_brightness": self.albedo_brightness,
            "diffuse_tint": list(self.diffuse_tint),
            "roughness": self.roughness,
            "metallic": self.metallic,
            "specular_level": self.specular_level,
            "emissive_color": list(self.emissive_color),
        }


@dataclass(frozen=True)
class PostFxParams:
    tv_noise: bool = False
    scan_lines: bool = False
    vertical_lines: bool = False
    splotches: bool = False
    film_grain: bool = False
    vignetting: bool = False
    scan_line_spread: float = 0.15
    grain_amount: float = 0.0
    grain_size: float = 0.85
    color_amount: float = 0.0

    def to_dict(self) -> dict:
        return {
            "tv_noise": self.tv_noise,
            "scan_lines": self.scan_lines,
            "vertical_lines": self.vertical_lines,
            "splotches": self.splotches,
            "film_grain": self.film_grain,
            "vignetting": self.vignetting,
            "scan_line_spread": self.scan_line_spread,
            "grain_amount": self.grain_amount,
            "grain_size": self.grain_size,
            "color_amount": self.color_amount,
        }


@dataclass(frozen=True)
class LightingSpec:
    ambient_intensity: float
    hdri_id: int
    point_lights: tuple[tuple[tuple[float, float, float], float, tuple[float, float, float]], ...] = ()

    def to_dict(self) -> dict:
        return {
            "ambient_intensity": self.ambient_intensity,
            "hdri_id": self.hdri_id,
            "point_lights": [[list(p), i, list(c)] for p, i, c in self.point_lights],
        }


@dataclass(frozen=True)
class SceneConfig:
    mode: str
    frame_index: int
    room: RoomSpec | None
    object_poses: tuple[ObjectPose, ...]
    camera: CameraSpec
    materials: dict[int, MaterialParams]  # instance id -> params
    lighting: LightingSpec
    postfx: PostFxParams
    refreshed: tuple[str, ...] = ()  # of {"scene", "hdri", "materials"}
    discarded: tuple[str, ...] = ()  # asset ids dropped during settling

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "frame_index": self.frame_index,
            "room": self.room.to_dict() if self.room else None,
            "object_poses": [p.to_dict() for p in self.object_poses],
            "camera": self.camera.to_dict(),
            "materials": {str(k): m.to_dict() for k, m in self.materials.items()},
            "lighting": self.lighting.to_dict(),
            "postfx": self.postfx.to_dict(),
            "refreshed": list(self.refreshed),
            "discarded": list(self.discarded),
        }

    def digest(self) -> str:
        return digest_of(self.to_dict())


@dataclass(frozen=True)
class SceneAssets:
    """The slice of an asset store scene sampling needs."""

    targets: tuple[str, ...]
    distractors: tuple[str, ...] = ()
    furniture: tuple[str, ...] = ()
    proxies: dict[str, tuple[tuple[float, float, float], tuple[float, float, float]]] = field(default_factory=dict)
    hdri_count: int = 0

    def proxy(self, asset_id: str):
        return self.proxies.get(asset_id, ((-0.05, -0.05, -0.05), (0.05, 0.05, 0.05)))


# ----------------------------------------------------------------- operations

def sample_room(
    rng: np.random.Generator,
    assets: SceneAssets,
    config: RandomizationConfig = DEFAULT_CONFIG,
) -> RoomSpec:
    """Room footprint plus perimeter furniture; the table sits at the center.

    Furniture is axis-aligned against a wall with a small clearance and is
    rejected (up to 20 tries) if its footprint would touch the table's.
    """
    if not assets.furniture:
        raise ConfigurationError("table mode needs at least one furniture asset")
    width = config.sample(rng, "configuration", "room_width")
    length = width * config.sample(rng, "configuration", "room_length_factor")
    count = config.sample(rng, "configuration", "furniture_count")
    table_half = config.sample(rng, "configuration", "table_half_extent")

    placements = []
    placed_boxes = []
    table_box = (
        np.array([-table_half - FURNITURE_CLEARANCE, -table_half - FURNITURE_CLEARANCE]),
        np.array([table_half + FURNITURE_CLEARANCE, table_half + FURNITURE_CLEARANCE]),
    )
    for _ in range(count):
        asset = assets.furniture[int(rng.integers(len(assets.furniture)))]
        lo, hi = assets.proxy(asset)
        half = (np.asarray(hi) - np.asarray(lo)) / 2.0
        for _attempt in range(20):
            wall = int(rng.integers(4))
            yaw = (math.pi / 2.0) * wall
            # footprint half extents after the axis-aligned yaw
            fx, fy = (half[0], half[1]) if wall % 2 == 0 else (half[1], half[0])
            if wall == 0:  # y- wall
                x = rng.uniform(-width / 2 + fx, width / 2 - fx)
                y = -length / 2 + FURNITURE_CLEARANCE + fy
            elif wall == 1:  # x+ wall
                x = width / 2 - FURNITURE_CLEARANCE - fx
                y = rng.uniform(-length / 2 + fy, length / 2 - fy)
            elif wall == 2:  # y+ wall
                x = rng.uniform(-width / 2 + fx, width / 2 - fx)
                y = length / 2 - FURNITURE_CLEARANCE - fy
            else:  # x- wall
                x = -width / 2 + FURNITURE_CLEARANCE + fx
                y = rng.uniform(-length / 2 + fy, length / 2 - fy)
            box = (np.array([x - fx, y - fy]), np.array([x + fx, y + fy]))
            if _boxes_overlap(box, table_box):
                continue
            if any(_boxes_overlap(box, other) for other in placed_boxes):
                continue
            placements.append((asset, float(x), float(y), float(yaw)))
            placed_boxes.append(box)
            break
    return RoomSpec(float(width), float(length), tuple(placements), (0.0, 0.0, 0.0))


def _boxes_overlap(a, b) -> bool:
    return bool(np.all(a[0] < b[1]) and np.all(b[0] < a[1]))


def sample_drop_placements(
    rng: np.random.Generator,
    asset_ids: list[str] | tuple[str, ...],
    mode: str,
    distractor_flags: list[bool] | None = None,
    config: RandomizationConfig = DEFAULT_CONFIG,
) -> list[ObjectPose]:
    """Initial (pre-settling) poses for a set of asset instances.

    HDRI-drop mode scatters x, y inside the enclosure and heights in the
    configured 1-5 m band; table mode scatters x, y inside the table
    bounds just above its top.  Orientations are uniform unit quaternions.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode '{mode}'")
    if not asset_ids:
        raise ConfigurationError("no assets to drop")
    if distractor_flags is None:
        distractor_flags = [False] * len(asset_ids)
    poses = []
    for asset_id, is_distractor in zip(asset_ids, distractor_flags):
        if mode == "hdri":
            half = config.sample(rng, "configuration", "drop_half_extent")
            x = rng.uniform(-half, half)
            y = rng.uniform(-half, half)
            z = config.sample(rng, "configuration", "object_height")
        else:
            half = config.sample(rng, "configuration", "table_half_extent")
            x = rng.uniform(-half, half)
            y = rng.uniform(-half, half)
            z = TABLE_SIZE[2] + config.sample(rng, "configuration", "table_drop_height")
        poses.append(
            ObjectPose(
                asset_id=asset_id,
                position=(float(x), float(y), float(z)),
                orientation=random_unit_quaternion(rng),
                is_distractor=bool(is_distractor),
            )
        )
    return poses


def settle(
    poses: list[ObjectPose],
    support_height: float,
    assets: SceneAssets,
    rng: np.random.Generator,
    bounds: tuple[float, float] | None = None,
    max_attempts: int = 100,
) -> tuple[list[ObjectPose], list[str]]:
    """Kinematic settling on axis-aligned box proxies.

    Objects keep their sampled orientation and drop straight down onto the
    support plane or onto the highest proxy they overlap in plan view.  A
    placement is stable only if the supporting surface contains the
    object's center; unstable placements are re-sampled in-plane up to
    ``max_attempts`` times, after which the object is discarded.

    Returns (settled poses, discarded asset ids).
    """
    settled: list[ObjectPose] = []
    placed: list[tuple[np.ndarray, np.ndarray]] = []  # world AABBs
    discarded: list[str] = []
    if bounds is None and poses:
        xy = np.array([[p.position[0], p.position[1]] for p in poses])
        extent = float(max(1.0, np.abs(xy).max() * 2.0))
        bounds = (-extent / 2.0, extent / 2.0)
    for pose in poses:
        lo, hi = assets.proxy(pose.asset_id)
        rmin, rmax = rotated_aabb(lo, hi, pose.orientation)
        x, y = pose.position[0], pose.position[1]
        accepted = None
        for attempt in range(max_attempts):
            if attempt > 0:
                x = float(rng.uniform(bounds[0], bounds[1]))
                y = float(rng.uniform(bounds[0], bounds[1]))
            bmin = rmin[:2] + (x, y)
            bmax = rmax[:2] + (x, y)
            rest = support_height
            for pmin, pmax in placed:
                if bmin[0] < pmax[0] and pmin[0] < bmax[0] and bmin[1] < pmax[1] and pmin[1] < bmax[1]:
                    rest = max(rest, float(pmax[2]))
            if _is_stable(x, y, rest, support_height, placed):
                z = rest - float(rmin[2])
                accepted = replace(pose, position=(x, y, z))
                placed.append(
                    (
                        np.array([bmin[0], bmin[1], rest]),
                        np.array([bmax[0], bmax[1], rest + float(rmax[2] - rmin[2])]),
                    )
                )
                break
        if accepted is None:
            discarded.append(pose.asset_id)
        else:
            settled.append(accepted)
    return settled, discarded


def _is_stable(x: float, y: float, rest: float, support_height: float, placed) -> bool:
    if rest <= support_height + 1e-12:
        return True
    for pmin, pmax in placed:
        if abs(float(pmax[2]) - rest) < 1e-9 and pmin[0] <= x <= pmax[0] and pmin[1] <= y <= pmax[1]:
            return True
    return False


def sample_camera(
    rng: np.random.Generator,
    orbit_center,
    radius: float,
    resolution: tuple[int, int] = (640, 480),
    vertical_fov: float = math.radians(60.0),
) -> CameraSpec:
    """Camera uniform on the upper hemisphere of the orbit sphere, aimed at
    the orbit center."""
    if radius <= 0:
        raise ConfigurationError("orbit radius must be positive")
    z = rng.uniform(0.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    direction = np.array([s * math.cos(phi), s * math.sin(phi), z])
    center = np.asarray(orbit_center, dtype=np.float64)
    position = center + radius * direction
    return CameraSpec(
        position=tuple(float(v) for v in position),
        look_at=tuple(float(v) for v in center),
        vertical_fov=float(vertical_fov),
        resolution=(int(resolution[0]), int(resolution[1])),
    )


def sample_materials(rng: np.random.Generator, config: RandomizationConfig = DEFAULT_CONFIG) -> MaterialParams:
    return MaterialParams(
        albedo_desaturation=config.sample(rng, "materials", "albedo_desaturation"),
        albedo_add=config.sample(rng, "materials", "albedo_add"),
        albedo_brightness=config.sample(rng, "materials", "albedo_brightness"),
        diffuse_tint=config.sample(rng, "materials", "diffuse_tint"),
        roughness=config.sample(rng, "materials", "reflection_roughness"),
        metallic=config.sample(rng, "materials", "metallic"),
        specular_level=config.sample(rng, "materials", "specular_level"),
        emissive_color=config.sample(rng, "materials", "emissive_color"),
    )


def sample_postfx(rng: np.random.Generator, config: RandomizationConfig = DEFAULT_CONFIG) -> PostFxParams:
    # sub-parameters are always drawn so the stream layout is flag-independent
    return PostFxParams(
        tv_noise=config.sample(rng, "postfx", "enable_tv_noise"),
        scan_lines=config.sample(rng, "postfx", "enable_scan_lines"),
        scan_line_spread=config.sample(rng, "postfx", "scan_line_spread"),
        vertical_lines=config.sample(rng, "postfx", "enable_vertical_lines"),
        splotches=config.sample(rng, "postfx", "enable_splotches"),
        film_grain=config.sample(rng, "postfx", "enable_film_grain"),
        grain_amount=config.sample(rng, "postfx", "grain_amount"),
        grain_size=config.sample(rng, "postfx", "grain_size"),
        color_amount=config.sample(rng, "postfx", "color_amount"),
        vignetting=config.sample(rng, "postfx", "enable_vignetting"),
    )


def sample_lighting(
    rng: np.random.Generator,
    hdri_count: int,
    config: RandomizationConfig = DEFAULT_CONFIG,
    light_region: float = 2.0,
) -> LightingSpec:
    if hdri_count <= 0:
        raise ConfigurationError("at least one HDRI is required")
    ambient = config.sample(rng, "lighting", "ambient_intensity")
    hdri_id = int(rng.integers(hdri_count))
    count = config.sample(rng, "lighting", "point_light_count")
    lights = []
    for _ in range(count):
        pos = (
            float(rng.uniform(-light_region, light_region)),
            float(rng.uniform(-light_region, light_region)),
            float(rng.uniform(1.0, 3.0)),
        )
        intensity = config.sample(rng, "lighting", "point_light_intensity")
        color = config.sample(rng, "lighting", "point_light_color")
        lights.append((pos, float(intensity), color))
    return LightingSpec(float(ambient), hdri_id, tuple(lights))


# ------------------------------------------------------------------ scheduler

class SceneSampler:
    """Produces the SceneConfig for any frame index, deterministically.

    Per-epoch pieces (clutter, environment map, materials) are memoized so
    sequential generation stays cheap, but any frame can be computed cold.
    """

    def __init__(
        self,
        assets: SceneAssets,
        global_seed: int,
        mode: str = "hdri",
        resolution: tuple[int, int] = (640, 480),
        config: RandomizationConfig = DEFAULT_CONFIG,
    ):
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode '{mode}'")
        if not assets.targets:
            raise ConfigurationError("asset set has no target objects")
        if mode == "hdri" and assets.hdri_count <= 0:
            raise ConfigurationError("hdri mode needs at least one HDRI asset")
        self.assets = assets
        self.seed = int(global_seed)
        self.mode = mode
        self.resolution = resolution
        self.config = config
        self._scene_cache: dict[int, tuple] = {}
        self._hdri_cache: dict[int, int] = {}
        self._materials_cache: dict[tuple[int, int], dict[int, MaterialParams]] = {}

    # epoch pieces ---------------------------------------------------------

    def _scene_for_epoch(self, epoch: int):
        cached = self._scene_cache.get(epoch)
        if cached is not None:
            return cached
        rng = stream_rng(self.seed, epoch, "scene")
        room = None
        if self.mode == "table":
            room = sample_room(rng, self.assets, self.config)
            support = TABLE_SIZE[2]
            half = self.config.sample(rng, "configuration", "table_half_extent")
            bounds = (-half, half)
        else:
            support = 0.0
            half = self.config.sample(rng, "configuration", "drop_half_extent")
            bounds = (-half, half)
        n_targets = self.config.sample(rng, "configuration", "target_count")
        n_distractors = (
            self.config.sample(rng, "configuration", "distractor_count") if self.assets.distractors else 0
        )
        ids = [self.assets.targets[int(rng.integers(len(self.assets.targets)))] for _ in range(n_targets)]
        flags = [False] * n_targets
        for _ in range(n_distractors):
            ids.append(self.assets.distractors[int(rng.integers(len(self.assets.distractors)))])
            flags.append(True)
        initial = sample_drop_placements(rng, ids, self.mode, flags, self.config)
        poses, discarded = settle(initial, support, self.assets, rng, bounds=bounds)
        lights_rng = stream_rng(self.seed, epoch, "lights")
        count = self.config.sample(lights_rng, "lighting", "point_light_count")
        lights = []
        for _ in range(count):
            pos = (
                float(lights_rng.uniform(-2.0, 2.0)),
                float(lights_rng.uniform(-2.0, 2.0)),
                float(lights_rng.uniform(1.0, 3.0)) + support,
            )
            intensity = self.config.sample(lights_rng, "lighting", "point_light_intensity")
            color = self.config.sample(lights_rng, "lighting", "point_light_color")
            lights.append((pos, float(intensity), color))
        result = (room, tuple(poses), tuple(lights), tuple(discarded))
        self._scene_cache = {epoch: result}  # keep only the latest epoch
        return result

    def _hdri_for_epoch(self, epoch: int) -> int:
        if epoch in self._hdri_cache:
            return self._hdri_cache[epoch]
        rng = stream_rng(self.seed, epoch, "hdri")
        hdri_id = int(rng.integers(self.assets.hdri_count)) if self.assets.hdri_count else 0
        self._hdri_cache = {epoch: hdri_id}
        return hdri_id

    def _materials_for_epoch(self, epoch: int, scene_epoch: int, instance_ids) -> dict[int, MaterialParams]:
        key = (epoch, scene_epoch)
        cached = self._materials_cache.get(key)
        if cached is not None:
            return cached
        materials = {}
        for instance_id in instance_ids:
            rng = stream_rng(self.seed, epoch, "materials", instance_id)
            materials[instance_id] = sample_materials(rng, self.config)
        self._materials_cache = {key: materials}
        return materials

    # assembly -------------------------------------------------------------

    def scenery_instance_ids(self, room: RoomSpec | None) -> list[int]:
        if room is None:
            return []
        # floor, 4 walls, ceiling, table, then furniture
        return [SCENERY_ID_BASE + i for i in range(7 + len(room.furniture_placements))]

    def orbit_center(self) -> tuple[float, float, float]:
        return (0.0, 0.0, TABLE_SIZE[2]) if self.mode == "table" else (0.0, 0.0, 0.0)

    def config_for_frame(self, frame_index: int) -> SceneConfig:
        if frame_index < 0:
            raise ConfigurationError("frame_index must be >= 0")
        scene_epoch = frame_index // SCENE_PERIOD
        hdri_epoch = frame_index // HDRI_PERIOD
        mat_epoch = frame_index // MATERIAL_PERIOD

        room, poses, lights, discarded = self._scene_for_epoch(scene_epoch)
        instance_ids = list(range(1, len(poses) + 1)) + self.scenery_instance_ids(room)
        materials = self._materials_for_epoch(mat_epoch, scene_epoch, instance_ids)
        hdri_id = self._hdri_for_epoch(hdri_epoch)

        frame_rng = stream_rng(self.seed, frame_index, "frame")
        ambient = self.config.sample(frame_rng, "lighting", "ambient_intensity")
        radius = self.config.sample(frame_rng, "configuration", "camera_radius")
        vfov = math.radians(self.config.sample(frame_rng, "configuration", "camera_vfov_deg"))
        camera = sample_camera(frame_rng, self.orbit_center(), radius, self.resolution, vfov)
        postfx = sample_postfx(frame_rng, self.config)

        refreshed = []
        if frame_index % SCENE_PERIOD == 0:
            refreshed.append("scene")
        if frame_index % HDRI_PERIOD == 0:
            refreshed.append("hdri")
        if frame_index % MATERIAL_PERIOD == 0:
            refreshed.append("materials")

        return SceneConfig(
            mode=self.mode,
            frame_index=frame_index,
            room=room,
            object_poses=poses,
            camera=camera,
            materials=materials,
            lighting=LightingSpec(float(ambient), hdri_id, lights),
            postfx=postfx,
            refreshed=tuple(refreshed),
            discarded=discarded,
        )

    def schedule(self, frame_index: int, prev: SceneConfig | None = None) -> SceneConfig:
        """SceneConfig for ``frame_index``; ``prev`` only warms the caches."""
        return self.config_for_frame(frame_index)
