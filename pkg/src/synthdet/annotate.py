"""Detection ground truth from rendered frames.

Modal boxes are the tight extents of an instance's pixels in the
instance-id map.  Visibility compares those pixels against a solo render
of the same instance (geometry pass only, same camera), so it is exact
rather than estimated.  Distractors never produce annotations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import CameraBasis
from .imageops import bbox_of_mask
from .meshes import Mesh
from .render import RenderOutput, SceneGeometry, geometry_instance_mask
from .scenegen import ObjectPose, SceneConfig


@dataclass
class Annotation:
    instance_id: int
    category_id: int
    bbox_modal: tuple[float, float, float, float]  # (x, y, w, h) pixels
    bbox_amodal: tuple[float, float, float, float]
    visibility: float
    pixel_count: int


def visibility(instance_id: int, occluded_map: np.ndarray, solo_map: np.ndarray) -> float:
    """Visible fraction: pixels of the instance in the full render over
    pixels in its solo render.  0 when the solo render is empty."""
    solo = int(np.count_nonzero(solo_map == instance_id))
    if solo == 0:
        return 0.0
    occ = int(np.count_nonzero(occluded_map == instance_id))
    return occ / solo


def project_amodal_bbox(mesh: Mesh, pose: ObjectPose, camera: CameraBasis):
    """Tight box around the projected mesh, clipped to the image.

    Edges crossing the camera plane are clipped so partly-behind objects
    still project correctly.  Returns None when the object is entirely
    behind the camera.
    """
    from .geometry import transform_points

    verts = transform_points(mesh.vertices, pose.position, pose.orientation)
    return _amodal_from_verts(verts, mesh.edges(), camera)


def _amodal_from_verts(verts: np.ndarray, edges: np.ndarray, camera: CameraBasis):
    front = camera.clip_to_camera_plane(verts, edges)
    if len(front) == 0:
        return None
    xy, _depth = camera.project(front)
    x0 = max(0.0, float(xy[:, 0].min()))
    y0 = max(0.0, float(xy[:, 1].min()))
    x1 = min(float(camera.width), float(xy[:, 0].max()))
    y1 = min(float(camera.height), float(xy[:, 1].max()))
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def extract_annotations(
    out: RenderOutput,
    scene: SceneConfig,
    geom: SceneGeometry,
    store,
    min_visibility: float = 0.1,
    min_pixels: int = 16,
) -> list[Annotation]:
    """One annotation per sufficiently visible non-distractor instance."""
    camera = CameraBasis(
        scene.camera.position, scene.camera.look_at, scene.camera.vertical_fov, scene.camera.resolution
    )
    annotations = []
    for i, pose in enumerate(scene.object_poses):
        if pose.is_distractor:
            continue
        instance_id = i + 1
        mask = out.instance_map == instance_id
        pixel_count = int(np.count_nonzero(mask))
        if pixel_count == 0 or pixel_count < min_pixels:
            continue
        index = geom.instance_index(instance_id)
        if index is None:
            continue
        solo = geometry_instance_mask(geom, camera, index)
        solo_count = int(np.count_nonzero(solo))
        vis = pixel_count / solo_count if solo_count else 0.0
        if vis < min_visibility:
            continue
        bbox_modal = bbox_of_mask(mask)
        inst = geom.instances[index]
        bbox_amodal = _amodal_from_verts(inst.verts_world, inst.edges, camera)
        if bbox_amodal is None:
            bbox_amodal = bbox_modal
        annotations.append(
            Annotation(
                instance_id=instance_id,
                category_id=store.mesh(pose.asset_id).category_id,
                bbox_modal=bbox_modal,
                bbox_amodal=bbox_amodal,
                visibility=float(vis),
                pixel_count=pixel_count,
            )
        )
    return annotations
