"""Dataset serialization: COCO annotations, 16-bit instance maps, manifests.

Layout written by :func:`write_dataset`:

    out/
      rgb/000000.png        8-bit RGB frames
      instance/000000.png   16-bit instance-id maps (0 = background)
      annotations.json      COCO (images / annotations / categories)
      manifest.json         canonical JSON with content digests

All JSON is canonical (sorted keys), so write -> read -> write is a byte
fixed point and manifest digests identify (seed, config, assets, pixels).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import __version__
from .annotate import Annotation
from .assets import load_assets  # re-exported: the asset manifest is dataset I/O
from .errors import ParseError, SchemaError, ValidationError
from .imageops import to_uint8
from .serial import canonical_json, digest_of, file_digest

__all__ = [
    "Detection",
    "GroundTruth",
    "RenderedFrame",
    "DatasetManifest",
    "CocoData",
    "write_dataset",
    "read_dataset",
    "read_coco",
    "read_detections",
    "write_detections",
    "load_assets",
    "load_frame_image",
    "load_instance_map",
]


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    score: float


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    ann_id: int = 0


@dataclass
class RenderedFrame:
    frame_index: int
    rgb: np.ndarray  # float [0,1] or uint8, (h, w, 3)
    instance_map: np.ndarray  # int, (h, w)
    scene_digest: str = ""


@dataclass
class DatasetManifest:
    global_seed: int
    frame_count: int
    config_digest: str
    frames: list[dict]
    discarded: list[dict] = field(default_factory=list)
    assets_digest: str = ""
    plan_digest: str = ""
    version: str = __version__

    def content(self) -> dict:
        return {
            "global_seed": self.global_seed,
            "frame_count": self.frame_count,
            "config_digest": self.config_digest,
            "frames": self.frames,
            "discarded": self.discarded,
            "assets_digest": self.assets_digest,
            "plan_digest": self.plan_digest,
            "version": self.version,
        }

    def digest(self) -> str:
        return digest_of(self.content())

    def to_dict(self) -> dict:
        d = self.content()
        d["digest"] = self.digest()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            global_seed=d["global_seed"],
            frame_count=d["frame_count"],
            config_digest=d["config_digest"],
            frames=d["frames"],
            discarded=d.get("discarded", []),
            assets_digest=d.get("assets_digest", ""),
            plan_digest=d.get("plan_digest", ""),
            version=d.get("version", __version__),
        )


def _frame_name(frame_index: int) -> str:
    return f"{frame_index:06d}.png"


def save_rgb(rgb: np.ndarray, path) -> None:
    arr = rgb if rgb.dtype == np.uint8 else to_uint8(rgb)
    PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def save_instance_map(instance_map: np.ndarray, path) -> None:
    arr = instance_map.astype(np.uint16)
    if (instance_map < 0).any() or (instance_map > 65535).any():
        raise ValidationError("instance ids must fit in uint16 for lossless storage")
    PILImage.fromarray(arr).save(path, format="PNG")


def load_frame_image(dataset_dir, record: dict) -> np.ndarray:
    with PILImage.open(Path(dataset_dir) / record["image"]) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def load_instance_map(dataset_dir, record: dict) -> np.ndarray:
    with PILImage.open(Path(dataset_dir) / record["instance_map"]) as im:
        return np.asarray(im, dtype=np.int32)


def annotation_record(a: Annotation, image_id: int, ann_id: int) -> dict:
    """COCO annotation entry plus the toolkit's extra ground-truth fields."""
    return {
        "id": ann_id,
        "image_id": image_id,
        "category_id": a.category_id,
        "bbox": [float(v) for v in a.bbox_modal],
        "area": float(a.bbox_modal[2] * a.bbox_modal[3]),
        "iscrowd": 0,
        "bbox_amodal": [float(v) for v in a.bbox_amodal],
        "visibility": float(a.visibility),
        "instance_id": int(a.instance_id),
        "pixel_count": int(a.pixel_count),
    }


def coco_document(images: list[dict], ann_records: list[dict], categories: dict[int, str]) -> dict:
    return {
        "images": images,
        "annotations": ann_records,
        "categories": [{"id": cid, "name": name} for cid, name in sorted(categories.items())],
    }


def coco_from_frames(
    frames: list[RenderedFrame],
    annotations: list[list[Annotation]],
    categories: dict[int, str],
) -> dict:
    images = []
    anns = []
    ann_id = 1
    for frame, frame_anns in zip(frames, annotations):
        h, w = frame.instance_map.shape[:2]
        images.append(
            {
                "id": frame.frame_index,
                "file_name": f"rgb/{_frame_name(frame.frame_index)}",
                "width": w,
                "height": h,
            }
        )
        for a in frame_anns:
            anns.append(annotation_record(a, frame.frame_index, ann_id))
            ann_id += 1
    return coco_document(images, anns, categories)


def write_dataset(
    frames: list[RenderedFrame],
    annotations: list[list[Annotation]],
    out_dir,
    categories: dict[int, str],
    global_seed: int = 0,
    config_digest: str = "",
    discarded: list[dict] | None = None,
    assets_digest: str = "",
    plan_digest: str = "",
    frame_extras: dict[int, dict] | None = None,
) -> DatasetManifest:
    """Write frames + annotations + manifest; returns the manifest."""
    out = Path(out_dir)
    (out / "rgb").mkdir(parents=True, exist_ok=True)
    (out / "instance").mkdir(parents=True, exist_ok=True)
    order = sorted(range(len(frames)), key=lambda i: frames[i].frame_index)
    frames = [frames[i] for i in order]
    annotations = [annotations[i] for i in order]

    records = []
    for frame in frames:
        name = _frame_name(frame.frame_index)
        rgb_path = out / "rgb" / name
        inst_path = out / "instance" / name
        save_rgb(frame.rgb, rgb_path)
        save_instance_map(frame.instance_map, inst_path)
        record = {
            "frame_index": frame.frame_index,
            "image": f"rgb/{name}",
            "instance_map": f"instance/{name}",
            "scene_digest": frame.scene_digest,
            "image_sha256": file_digest(rgb_path),
            "instance_sha256": file_digest(inst_path),
        }
        if frame_extras and frame.frame_index in frame_extras:
            record.update(frame_extras[frame.frame_index])
        records.append(record)

    coco = coco_from_frames(frames, annotations, categories)
    (out / "annotations.json").write_text(canonical_json(coco), encoding="utf-8")

    manifest = DatasetManifest(
        global_seed=global_seed,
        frame_count=len(frames),
        config_digest=config_digest,
        frames=records,
        discarded=list(discarded or []),
        assets_digest=assets_digest,
        plan_digest=plan_digest,
    )
    (out / "manifest.json").write_text(canonical_json(manifest.to_dict()), encoding="utf-8")
    return manifest


@dataclass
class CocoData:
    images: dict[int, dict]
    annotations: list[GroundTruth]
    categories: dict[int, str]
    raw: dict

    def reserialize(self) -> str:
        return canonical_json(self.raw)


def read_coco(path) -> CocoData:
    """Parse and validate a COCO annotations document."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: malformed JSON at byte offset {e.pos}: {e.msg}", offset=e.pos) from e
    for key in ("images", "annotations", "categories"):
        if key not in raw or not isinstance(raw[key], list):
            raise SchemaError(f"{path}: missing or non-list '{key}' section")
    images = {}
    for rec in raw["images"]:
        if "id" not in rec:
            raise SchemaError(f"{path}: image record without id: {rec!r}")
        images[rec["id"]] = rec
    categories = {}
    for rec in raw["categories"]:
        if "id" not in rec or "name" not in rec:
            raise SchemaError(f"{path}: category record needs id and name: {rec!r}")
        categories[rec["id"]] = rec["name"]
    gts = []
    for rec in raw["annotations"]:
        ann_id = rec.get("id", 0)
        bbox = rec.get("bbox")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise SchemaError(f"{path}: annotation {ann_id}: bbox must be [x, y, w, h]")
        if rec.get("image_id") not in images:
            raise SchemaError(f"{path}: annotation {ann_id}: unknown image_id {rec.get('image_id')!r}")
        if rec.get("category_id") not in categories:
            raise SchemaError(f"{path}: annotation {ann_id}: unknown category_id {rec.get('category_id')!r}")
        gts.append(
            GroundTruth(
                image_id=rec["image_id"],
                category_id=rec["category_id"],
                bbox=tuple(float(v) for v in bbox),
                ann_id=ann_id,
            )
        )
    return CocoData(images=images, annotations=gts, categories=categories, raw=raw)


def read_detections(path) -> list[Detection]:
    """COCO results array: [{image_id, category_id, bbox, score}, ...]."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: malformed JSON at byte offset {e.pos}: {e.msg}", offset=e.pos) from e
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: detections must be a JSON array")
    dets = []
    for i, rec in enumerate(raw):
        bbox = rec.get("bbox")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise SchemaError(f"{path}: detection {i}: bbox must be [x, y, w, h]")
        score = rec.get("score")
        if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise ValidationError(f"{path}: detection {i}: score {score!r} outside [0, 1]")
        w, h = float(bbox[2]), float(bbox[3])
        if w < 0 or h < 0:
            raise ValidationError(f"{path}: detection {i}: negative box size")
        dets.append(
            Detection(
                image_id=rec["image_id"],
                category_id=rec["category_id"],
                bbox=tuple(float(v) for v in bbox),
                score=float(score),
            )
        )
    return dets


def write_detections(dets: list[Detection], path) -> None:
    payload = [
        {"image_id": d.image_id, "category_id": d.category_id, "bbox": list(d.bbox), "score": d.score}
        for d in dets
    ]
    Path(path).write_text(canonical_json(payload), encoding="utf-8")


def read_dataset(dataset_dir) -> tuple[DatasetManifest, CocoData]:
    dataset_dir = Path(dataset_dir)
    manifest_raw = json.loads((dataset_dir / "manifest.json").read_text(encoding="utf-8"))
    manifest = DatasetManifest.from_dict(manifest_raw)
    coco = read_coco(dataset_dir / "annotations.json")
    return manifest, coco
