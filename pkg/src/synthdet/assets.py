"""Asset loading: mesh/texture/HDRI manifests and validation.

The manifest is YAML, paths relative to the manifest's directory:

    meshes:
      - id: cracker_box
        path: meshes/cracker_box.obj
        category: cracker_box
        texture: textures/cracker_box.png   # optional
        base_color: [0.8, 0.3, 0.2]         # optional, no-texture fallback
        distractor: false                   # optional
        furniture: false                    # optional
    hdris:
      - id: sky_noon
        path: hdris/sky_noon.png            # equirectangular; PNG/JPEG or .npy float

Targets (non-distractor, non-furniture meshes) define the category set.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from PIL import Image as PILImage

from .errors import AssetError, AssetIOError
from .meshes import Mesh, load_obj
from .scenegen import SceneAssets
from .serial import digest_of, file_digest


def load_image(path) -> np.ndarray:
    """Image file -> float RGB array in [0, 1] (HDR .npy passes through >= 0)."""
    path = Path(path)
    if not path.exists():
        raise AssetIOError(f"image file not found: {path}")
    if path.suffix == ".npy":
        arr = np.load(path).astype(np.float64)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        return arr[:, :, :3]
    with PILImage.open(path) as im:
        mode = im.mode
        if mode in ("I;16", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr


@dataclass
class MeshAsset:
    asset_id: str
    mesh: Mesh
    category: str
    category_id: int
    texture: np.ndarray | None
    base_color: tuple[float, float, float]
    distractor: bool
    furniture: bool
    digest: str


@dataclass
class HDRIAsset:
    asset_id: str
    image: np.ndarray
    digest: str


class AssetStore:
    def __init__(self, meshes: dict[str, MeshAsset], hdris: list[HDRIAsset], manifest_path: str = ""):
        self.meshes = meshes
        self.hdris = hdris
        self.manifest_path = manifest_path

    def __len__(self) -> int:
        return len(self.meshes) + len(self.hdris)

    @property
    def categories(self) -> dict[int, str]:
        """category_id -> name, for target meshes only."""
        return {
            a.category_id: a.category
            for a in self.meshes.values()
            if not a.distractor and not a.furniture
        }

    def mesh(self, asset_id: str) -> MeshAsset:
        try:
            return self.meshes[asset_id]
        except KeyError:
            raise AssetError(f"unknown mesh asset '{asset_id}'") from None

    def hdri(self, index: int) -> HDRIAsset:
        return self.hdris[index]

    def scene_assets(self) -> SceneAssets:
        targets, distractors, furniture, proxies = [], [], [], {}
        for asset_id, asset in self.meshes.items():
            lo, hi = asset.mesh.bounds
            proxies[asset_id] = (tuple(float(v) for v in lo), tuple(float(v) for v in hi))
            if asset.furniture:
                furniture.append(asset_id)
            elif asset.distractor:
                distractors.append(asset_id)
            else:
                targets.append(asset_id)
        return SceneAssets(
            targets=tuple(targets),
            distractors=tuple(distractors),
            furniture=tuple(furniture),
            proxies=proxies,
            hdri_count=len(self.hdris),
        )

    def digest(self) -> str:
        return digest_of(
            {
                "meshes": {k: a.digest for k, a in sorted(self.meshes.items())},
                "hdris": [a.digest for a in self.hdris],
            }
        )


def load_assets(manifest_path) -> AssetStore:
    """Load and validate every asset named by a manifest file."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise AssetIOError(f"asset manifest not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise AssetError(f"{manifest_path}: manifest must be a mapping")
    root = manifest_path.parent

    mesh_entries = raw.get("meshes", [])
    hdri_entries = raw.get("hdris", [])

    # category ids: stable over the sorted target label set
    target_labels = sorted(
        {
            str(e.get("category", e["id"]))
            for e in mesh_entries
            if not e.get("distractor", False) and not e.get("furniture", False)
        }
    )
    category_ids = {label: i + 1 for i, label in enumerate(target_labels)}

    meshes: dict[str, MeshAsset] = {}
    for entry in mesh_entries:
        asset_id = str(entry["id"])
        if asset_id in meshes:
            raise AssetError(f"duplicate asset id '{asset_id}'")
        path = root / entry["path"]
        mesh = load_obj(path, name=asset_id)
        texture = None
        if entry.get("texture"):
            texture = load_image(root / entry["texture"])
            if mesh.uvs is None:
                raise AssetError(f"asset '{asset_id}': texture given but mesh has no UVs")
        base_color = tuple(float(v) for v in entry.get("base_color", (0.7, 0.7, 0.7)))
        category = str(entry.get("category", asset_id))
        distractor = bool(entry.get("distractor", False))
        furniture = bool(entry.get("furniture", False))
        meshes[asset_id] = MeshAsset(
            asset_id=asset_id,
            mesh=mesh,
            category=category,
            category_id=category_ids.get(category, 0) if not (distractor or furniture) else 0,
            texture=texture,
            base_color=base_color,
            distractor=distractor,
            furniture=furniture,
            digest=file_digest(path),
        )

    hdris: list[HDRIAsset] = []
    seen = set(meshes)
    for entry in hdri_entries:
        asset_id = str(entry["id"])
        if asset_id in seen:
            raise AssetError(f"duplicate asset id '{asset_id}'")
        seen.add(asset_id)
        path = root / entry["path"]
        image = load_image(path)
        h, w = image.shape[:2]
        if abs(w - 2 * h) > 1:
            raise AssetError(f"hdri '{asset_id}': not equirectangular ({w}x{h}, expected width = 2 x height)")
        hdris.append(HDRIAsset(asset_id=asset_id, image=image, digest=file_digest(path)))

    return AssetStore(meshes, hdris, str(manifest_path))
