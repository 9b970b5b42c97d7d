"""Command-line front end: generate / augment / eval / corrupt.

Every command logs its seed, config digest, and tool version; re-running
with the logged values reproduces outputs bit-exactly.  Exit codes:
0 success, 2 usage, 3 validation/configuration, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .annotate import Annotation, extract_annotations
from .assets import load_assets
from .augment import AugmentationPlan, apply_pipeline, load_background_corpus, load_plan, load_reflectance_corpus
from .config import DEFAULT_CONFIG, SCENE_PERIOD, load_randomization_config
from .corruptions import KINDS, SEVERITIES, CorruptionSpec, corrupt
from .datasetio import (
    DatasetManifest,
    annotation_record,
    coco_document,
    load_frame_image,
    load_instance_map,
    read_coco,
    read_dataset,
    read_detections,
    save_instance_map,
    save_rgb,
)
from .errors import AssetError, AssetIOError, ConfigurationError, ValidationError
from .evaluate import confidence_sweep, evaluate
from .imageops import to_uint8
from .render import RenderSettings, compile_scene, render_frame
from .rng import stream_rng
from .scenegen import SceneSampler
from .serial import canonical_json, file_digest

ASSET_ROOT_ENV = "SYNTHDET_ASSET_ROOT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4


def _log(msg: str) -> None:
    print(f"[synthdet] {msg}", flush=True)


def _resolve_assets(path: str | None) -> Path:
    if path:
        p = Path(path)
    elif os.environ.get(ASSET_ROOT_ENV):
        p = Path(os.environ[ASSET_ROOT_ENV])
    else:
        raise ConfigurationError(f"no asset manifest: pass --assets or set {ASSET_ROOT_ENV}")
    if p.is_dir():
        p = p / "manifest.yaml"
    return p


def _seed_or_random(seed: int | None) -> int:
    return secrets.randbits(31) if seed is None else int(seed)


# ------------------------------------------------------------------ generate

_WORKER: dict = {}


def _init_generate_worker(manifest_path, config_path, seed, mode, width, height, out_dir, settings_kwargs):
    store = load_assets(manifest_path)
    config = load_randomization_config(config_path) if config_path else DEFAULT_CONFIG
    _WORKER.clear()
    _WORKER.update(
        store=store,
        sampler=SceneSampler(store.scene_assets(), seed, mode, (width, height), config),
        settings=RenderSettings(**settings_kwargs),
        seed=seed,
        out=Path(out_dir),
        geom_cache={},
    )


def _generate_one(frame_index: int):
    w = _WORKER
    scene = w["sampler"].config_for_frame(frame_index)
    epoch = frame_index // SCENE_PERIOD
    geom = w["geom_cache"].get(epoch)
    if geom is None:
        geom = compile_scene(scene, w["store"])
        w["geom_cache"].clear()
        w["geom_cache"][epoch] = geom
    out = render_frame(scene, w["store"], w["settings"], seed=w["seed"], geom=geom)
    anns = extract_annotations(out, scene, geom, w["store"])
    name = f"{frame_index:06d}.png"
    rgb_path = w["out"] / "rgb" / name
    inst_path = w["out"] / "instance" / name
    save_rgb(out.rgb, rgb_path)
    save_instance_map(out.instance_map, inst_path)
    record = {
        "frame_index": frame_index,
        "image": f"rgb/{name}",
        "instance_map": f"instance/{name}",
        "scene_digest": scene.digest(),
        "image_sha256": file_digest(rgb_path),
        "instance_sha256": file_digest(inst_path),
    }
    h, wpx = out.instance_map.shape
    refresh = {"scene": "scene" in scene.refreshed, "hdri": "hdri" in scene.refreshed}
    return record, anns, (h, wpx), (epoch, list(scene.discarded)), refresh


def cmd_generate(args) -> int:
    seed = _seed_or_random(args.seed)
    manifest_path = _resolve_assets(args.assets)
    config = load_randomization_config(args.config) if args.config else DEFAULT_CONFIG
    store = load_assets(manifest_path)
    _log(f"generate: seed={seed} config_digest={config.digest()} version={__version__}")
    _log(f"assets: {manifest_path} ({len(store.meshes)} meshes, {len(store.hdris)} HDRIs)")
    out = Path(args.out)
    (out / "rgb").mkdir(parents=True, exist_ok=True)
    (out / "instance").mkdir(parents=True, exist_ok=True)
    settings_kwargs = {
        "subframe_count": args.subframes,
        "rays_per_pixel": args.rays_per_pixel,
        "enable_secondary_bounce": args.bounce,
    }
    init_args = (manifest_path, args.config, seed, args.mode, args.width, args.height, str(out), settings_kwargs)

    frame_indices = list(range(args.frames))
    results = []
    started = time.time()
    workers = max(1, args.workers)
    if workers == 1 or len(frame_indices) <= 1:
        _init_generate_worker(*init_args)
        for i in frame_indices:
            results.append(_run_frame(i))
    else:
        with multiprocessing.Pool(workers, initializer=_init_generate_worker, initargs=init_args) as pool:
            for r in pool.imap(_run_frame_safe, frame_indices, chunksize=4):
                if isinstance(r, tuple) and r and r[0] == "__error__":
                    raise RuntimeError(r[1])
                results.append(r)
    elapsed = time.time() - started
    if args.frames:
        _log(f"rendered {args.frames} frames in {elapsed:.1f}s ({args.frames / max(elapsed, 1e-9):.2f} frames/s)")

    results.sort(key=lambda r: r[0]["frame_index"])
    images, ann_records = [], []
    ann_id = 1
    scene_rebuilds = hdri_switches = 0
    discarded_by_epoch: dict[int, list[str]] = {}
    for record, anns, (h, wpx), (epoch, discarded), refresh in results:
        images.append({"id": record["frame_index"], "file_name": record["image"], "width": wpx, "height": h})
        for a in anns:
            ann_records.append(annotation_record(a, record["frame_index"], ann_id))
            ann_id += 1
        if refresh["scene"]:
            scene_rebuilds += 1
        if refresh["hdri"]:
            hdri_switches += 1
        if discarded:
            discarded_by_epoch[epoch] = discarded
    coco = coco_document(images, ann_records, store.categories)
    (out / "annotations.json").write_text(canonical_json(coco), encoding="utf-8")
    manifest = DatasetManifest(
        global_seed=seed,
        frame_count=args.frames,
        config_digest=config.digest(),
        frames=[r[0] for r in results],
        discarded=[{"scene_epoch": e, "asset_ids": ids} for e, ids in sorted(discarded_by_epoch.items())],
        assets_digest=store.digest(),
    )
    (out / "manifest.json").write_text(canonical_json(manifest.to_dict()), encoding="utf-8")
    _log(f"scene rebuilds: {scene_rebuilds}, HDRI switches: {hdri_switches}")
    for e, ids in sorted(discarded_by_epoch.items()):
        _log(f"discarded in scene epoch {e}: {ids}")
    _log(f"manifest digest: {manifest.digest()}")
    return EXIT_OK


def _run_frame(i: int):
    try:
        return _generate_one(i)
    except Exception as e:
        raise RuntimeError(f"frame {i}: {e}") from e


def _run_frame_safe(i: int):
    try:
        return _generate_one(i)
    except Exception as e:  # surfaces across the pool with frame context
        return ("__error__", f"frame {i}: {e}")


# ------------------------------------------------------------------- augment

def cmd_augment(args) -> int:
    seed = _seed_or_random(args.seed)
    plan = load_plan(args.plan) if args.plan else AugmentationPlan.default()
    backgrounds = load_background_corpus(args.backgrounds) if args.backgrounds else None
    reflectance = load_reflectance_corpus(args.reflectance) if args.reflectance else None
    needs_bg = any(e.name in ("random_background", "random_blend") and e.probability > 0 for e in plan.entries)
    needs_refl = any(e.name == "reflectance" and e.probability > 0 for e in plan.entries)
    if needs_bg and backgrounds is None:
        raise ConfigurationError("plan enables random_background/random_blend: pass --backgrounds DIR")
    if needs_refl and reflectance is None:
        raise ConfigurationError("plan enables reflectance: pass --reflectance DIR")

    manifest, coco = read_dataset(args.dataset)
    _log(f"augment: seed={seed} plan_digest={plan.digest()} version={__version__}")
    out = Path(args.out)
    (out / "rgb").mkdir(parents=True, exist_ok=True)
    (out / "instance").mkdir(parents=True, exist_ok=True)

    anns_by_image: dict[int, list[Annotation]] = {}
    for rec in coco.raw["annotations"]:
        anns_by_image.setdefault(rec["image_id"], []).append(
            Annotation(
                instance_id=rec.get("instance_id", 0),
                category_id=rec["category_id"],
                bbox_modal=tuple(rec["bbox"]),
                bbox_amodal=tuple(rec.get("bbox_amodal", rec["bbox"])),
                visibility=rec.get("visibility", 1.0),
                pixel_count=rec.get("pixel_count", 0),
            )
        )

    images, ann_records, records = [], [], []
    ann_id = 1
    for record in manifest.frames:
        frame_index = record["frame_index"]
        img = load_frame_image(args.dataset, record)
        mask = load_instance_map(args.dataset, record)
        anns = anns_by_image.get(frame_index, [])
        rng = stream_rng(seed, frame_index, "augment")
        img2, anns2, trace = apply_pipeline(
            img, anns, mask, rng, plan, backgrounds=backgrounds, reflectance_maps=reflectance
        )
        name = f"{frame_index:06d}.png"
        rgb_path = out / "rgb" / name
        inst_path = out / "instance" / name
        save_rgb(img2, rgb_path)
        save_instance_map(trace.instance_mask, inst_path)
        h, w = img2.shape[:2]
        images.append({"id": frame_index, "file_name": f"rgb/{name}", "width": w, "height": h})
        for a in anns2:
            ann_records.append(annotation_record(a, frame_index, ann_id))
            ann_id += 1
        records.append(
            {
                "frame_index": frame_index,
                "image": f"rgb/{name}",
                "instance_map": f"instance/{name}",
                "scene_digest": record.get("scene_digest", ""),
                "image_sha256": file_digest(rgb_path),
                "instance_sha256": file_digest(inst_path),
                "source_image": record["image"],
                "augmentations": [[name_, params] for name_, params in trace.applied],
                "pipeline_skipped": trace.skipped,
            }
        )

    coco_out = coco_document(images, ann_records, coco.categories)
    (out / "annotations.json").write_text(canonical_json(coco_out), encoding="utf-8")
    out_manifest = DatasetManifest(
        global_seed=seed,
        frame_count=len(records),
        config_digest=manifest.config_digest,
        frames=records,
        assets_digest=manifest.assets_digest,
        plan_digest=plan.digest(),
    )
    (out / "manifest.json").write_text(canonical_json(out_manifest.to_dict()), encoding="utf-8")
    fired_counts: dict[str, int] = {}
    for r in records:
        for name_, _p in r["augmentations"]:
            fired_counts[name_] = fired_counts.get(name_, 0) + 1
    _log(f"firing counts over {len(records)} images: {json.dumps(fired_counts, sort_keys=True)}")
    _log(f"manifest digest: {out_manifest.digest()}")
    return EXIT_OK


# ---------------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    coco = read_coco(args.gt)
    dets = read_detections(args.dets)
    _log(f"eval: gt={args.gt} dets={args.dets} threshold={args.threshold} version={__version__}")
    report = evaluate(dets, coco.annotations, confidence_threshold=args.threshold)
    out = Path(args.out)
    payload = report.to_dict()
    payload["confidence_threshold"] = args.threshold
    out.write_text(canonical_json(payload), encoding="utf-8")
    _log(f"mAP={report.map:.6f} mAR={report.mar:.6f} -> {out}")
    if args.sweep:
        curve = confidence_sweep(dets, coco.annotations)
        sweep_path = out.with_suffix(".sweep.csv")
        sweep_path.write_text(curve.to_csv(), encoding="utf-8")
        _log(f"sweep -> {sweep_path}")
    return EXIT_OK


# ------------------------------------------------------------------- corrupt

def cmd_corrupt(args) -> int:
    seed = _seed_or_random(args.seed)
    src = Path(args.images)
    paths = sorted(p for p in src.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not paths:
        raise ConfigurationError(f"no images found in {src}")
    kinds = list(KINDS) if args.kind == "all" else [args.kind]
    severities = list(SEVERITIES) if args.severity == 0 else [args.severity]
    _log(f"corrupt: seed={seed} kinds={kinds} severities={severities} version={__version__}")
    out = Path(args.out)
    cells = []
    from .assets import load_image

    for kind in kinds:
        for severity in severities:
            spec = CorruptionSpec(kind, severity)
            _log(f"{kind} severity {severity} -> {spec.params()}")
            cell_dir = out / kind / str(severity)
            cell_dir.mkdir(parents=True, exist_ok=True)
            for p in paths:
                img = np.clip(load_image(p), 0.0, 1.0)
                rng = stream_rng(seed, kind, severity, p.name)
                save_rgb(to_uint8(corrupt(img, spec, rng)), cell_dir / (p.stem + ".png"))
            cells.append(
                {"kind": kind, "severity": severity, "dir": f"{kind}/{severity}", "params": spec.params()}
            )
    grid = {"source": str(src), "seed": seed, "cells": cells, "version": __version__}
    (out / "grid.json").write_text(canonical_json(grid), encoding="utf-8")
    _log(f"grid manifest -> {out / 'grid.json'}")
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthdet", description="Synthetic detection data toolkit")
    parser.add_argument("--version", action="version", version=f"synthdet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a randomized dataset")
    g.add_argument("--assets", help=f"asset manifest (or set {ASSET_ROOT_ENV})")
    g.add_argument("--config", help="randomization config YAML")
    g.add_argument("--out", required=True)
    g.add_argument("--frames", type=int, default=100)
    g.add_argument("--seed", type=int)
    g.add_argument("--mode", choices=("table", "hdri"), default="hdri")
    g.add_argument("--width", type=int, default=640)
    g.add_argument("--height", type=int, default=480)
    g.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    g.add_argument("--subframes", type=int, default=1)
    g.add_argument("--rays-per-pixel", type=int, default=1)
    g.add_argument("--bounce", action="store_true", help="enable one secondary bounce")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("augment", help="augment an existing dataset")
    a.add_argument("dataset", help="input dataset directory")
    a.add_argument("--plan", help="augmentation plan YAML")
    a.add_argument("--backgrounds", help="background image corpus directory")
    a.add_argument("--reflectance", help="reflectance map corpus directory")
    a.add_argument("--out", required=True)
    a.add_argument("--seed", type=int)
    a.add_argument("--workers", type=int, default=1)
    a.set_defaults(func=cmd_augment)

    e = sub.add_parser("eval", help="score detections against ground truth")
    e.add_argument("--gt", required=True, help="COCO annotations JSON")
    e.add_argument("--dets", required=True, help="COCO results JSON array")
    e.add_argument("--threshold", type=float, default=0.0)
    e.add_argument("--sweep", action="store_true", help="also emit the confidence sweep CSV")
    e.add_argument("--out", default="report.json")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("corrupt", help="write corrupted image grids")
    c.add_argument("images", help="directory of input images")
    c.add_argument("--kind", choices=KINDS + ("all",), default="all")
    c.add_argument("--severity", type=int, default=0, help="1..5, or 0 for all")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_corrupt)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "corrupt" and args.severity not in (0,) + SEVERITIES:
        parser.error(f"--severity must be 1..5 (or 0 for all), got {args.severity}")
    if getattr(args, "threshold", None) is not None and args.command == "eval":
        if not 0.0 <= args.threshold <= 1.0:
            parser.error(f"--threshold must be in [0, 1], got {args.threshold}")
    try:
        return args.func(args)
    except AssetIOError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, ValidationError, AssetError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
